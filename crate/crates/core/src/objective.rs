//! The unconstrained solver objective and per-iteration diagnostics.
//!
//! The objective of the joint problem, with constraint sets folded in as
//! barriers, is
//!
//! ```text
//! nu * |A x - y|^2 + sum_k sum_{j in C_k} ( |W_k Pj x - b_j|^2 + eta^2 |b_j|_0 )
//! ```
//!
//! Operations here never return an infinite barrier value: an iterate that
//! violates a constraint produces an infeasibility error instead.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::ComplexImage;
use crate::patches::{extract_patches, PatchGeometry, PatchMatrix};
use crate::sampling::{apply_sensing, Measurements, SamplingMask};
use crate::sparse::{matvec, ClusterAssignment, SparseCodes, TransformSet};

/// Tolerance on `|Wk^H Wk - I|_F` before an iterate counts as infeasible.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Relative slack on the energy bound `|x|_2 <= C`.
pub const NORM_SLACK: f64 = 1e-9;

/// Scalar weights of the objective.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveParams {
    /// Data-fidelity weight.
    pub nu: f64,
    /// Sparsity threshold; the l0 penalty weight is its square.
    pub eta: f64,
    /// Energy bound `C`.
    pub norm_bound: f64,
}

/// Evaluate the objective at a feasible iterate.
///
/// Returns an [`Error::Infeasible`] when a constraint is violated (transform
/// not unitary, energy bound exceeded, labels out of range) rather than a
/// +inf barrier value.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    img: &ComplexImage,
    geom: &PatchGeometry,
    transforms: &TransformSet,
    codes: &SparseCodes,
    labels: &ClusterAssignment,
    meas: &Measurements,
    mask: &SamplingMask,
    params: &ObjectiveParams,
) -> Result<f64> {
    let patches = extract_patches(img, geom)?;
    evaluate_with_patches(img, &patches, transforms, codes, labels, meas, mask, params)
}

/// As [`evaluate`], reusing already-extracted patches of `img`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_with_patches(
    img: &ComplexImage,
    patches: &PatchMatrix,
    transforms: &TransformSet,
    codes: &SparseCodes,
    labels: &ClusterAssignment,
    meas: &Measurements,
    mask: &SamplingMask,
    params: &ObjectiveParams,
) -> Result<f64> {
    let unit_err = transforms.max_unitarity_error();
    if unit_err > UNITARITY_TOL {
        return Err(Error::Infeasible(format!(
            "transform set violates unitarity by {unit_err:.3e}"
        )));
    }
    let norm = img.l2_norm();
    if norm > params.norm_bound * (1.0 + NORM_SLACK) {
        return Err(Error::Infeasible(format!(
            "image norm {norm:.6e} exceeds the bound {:.6e}",
            params.norm_bound
        )));
    }
    if labels.len() != patches.ncols() {
        return Err(Error::Infeasible(format!(
            "{} labels for {} patches",
            labels.len(),
            patches.ncols()
        )));
    }
    if labels.num_clusters() as usize > transforms.num_transforms() {
        return Err(Error::Infeasible(
            "labels reference more clusters than transforms".into(),
        ));
    }
    if codes.nrows() != patches.nrows() || codes.ncols() != patches.ncols() {
        return Err(Error::InvalidInput("code matrix shape mismatch".into()));
    }

    let predicted = apply_sensing(img, mask)?;
    if predicted.len() != meas.len() {
        return Err(Error::InvalidInput(
            "measurement length does not match the mask".into(),
        ));
    }
    let fidelity = exec::sum_indexed(meas.len(), |i| {
        (predicted.samples()[i] - meas.samples()[i]).norm_sqr()
    });

    let n = patches.nrows();
    let eta2 = params.eta * params.eta;
    let pdata = patches.as_slice();
    let cdata = codes.as_slice();
    let lab = labels.labels();
    let per_patch = |j: usize| -> f64 {
        let patch = &pdata[j * n..(j + 1) * n];
        let code = &cdata[j * n..(j + 1) * n];
        let mut wp = vec![Complex64::ZERO; n];
        matvec(transforms.get(lab[j] as usize), patch, &mut wp);
        let mut resid = 0.0;
        let mut nnz = 0usize;
        for i in 0..n {
            resid += (wp[i] - code[i]).norm_sqr();
            if code[i].norm_sqr() > 0.0 {
                nnz += 1;
            }
        }
        resid + eta2 * nnz as f64
    };
    let sparsification = exec::sum_indexed(patches.ncols(), per_patch);

    Ok(params.nu * fidelity + sparsification)
}

/// Fraction of nonzero entries in the code matrix (`|B|_0 / (n N)`).
pub fn sparsity_fraction(codes: &SparseCodes) -> f64 {
    let nnz = codes.iter().filter(|v| v.norm_sqr() > 0.0).count();
    nnz as f64 / codes.len() as f64
}

/// One row of the convergence log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub objective: f64,
    pub sparsity_fraction: f64,
    pub delta_x: f64,
    pub mu_hat: f64,
    pub psnr: Option<f64>,
    pub hfen: Option<f64>,
    pub cluster_sizes: Vec<usize>,
}

/// CSV header matching [`IterationStats::csv_row`], with one
/// `cluster_size_k` column per cluster.
pub fn csv_header(num_clusters: usize) -> String {
    let mut s = String::from("t,objective,sparsity,delta_x,mu_hat,psnr,hfen");
    for k in 1..=num_clusters {
        s.push_str(&format!(",cluster_size_{k}"));
    }
    s
}

impl IterationStats {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.objective,
            self.sparsity_fraction,
            self.delta_x,
            self.mu_hat,
            opt(self.psnr),
            opt(self.hfen)
        );
        for c in &self.cluster_sizes {
            s.push_str(&format!(",{c}"));
        }
        s
    }
}

/// Render a full stats CSV (header plus one row per iteration).
pub fn stats_to_csv(stats: &[IterationStats], num_clusters: usize) -> String {
    let mut out = csv_header(num_clusters);
    out.push('\n');
    for row in stats {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}
