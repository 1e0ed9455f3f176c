//! Block coordinate descent driver for blind compressed sensing with a
//! union of unitary transforms (single transform as the K = 1 case).
//!
//! Each outer iteration runs three exact block minimizations, in this
//! order and with this state threading:
//!
//! 1. transform update, consuming the previous image, codes and labels;
//! 2. sparse coding and clustering, consuming the new transforms and the
//!    previous image;
//! 3. image update, consuming the new transforms, codes and labels.
//!
//! Because every step is an exact minimizer over its block, the objective
//! is nonincreasing across sub-steps whenever the threshold is held fixed.
//! Debug builds assert this after every step; release builds assert nothing
//! but still record the objective per iteration.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{simulate_kspace, ComplexImage};
use crate::image_update::{solve_image, ImageUpdateInputs};
use crate::metrics;
use crate::objective::{self, IterationStats, ObjectiveParams};
use crate::patches::{extract_patches, PatchGeometry, PatchMatrix, COLUMN_BLOCK};
use crate::procrustes::update_all_transforms;
use crate::sampling::{s0_spectrum, zero_fill, Measurements, SamplingMask};
use crate::sparse::{
    matvec_adjoint, sparse_code_and_cluster, sparse_code_with_labels, ClusterAssignment,
    SparseCodes, TransformSet,
};

/// How the initial clustering is produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitClustering {
    /// Uniform random labels from the config seed.
    Random,
    /// K-means on the patch vectors of the initial image (real and
    /// imaginary parts stacked), 10 Lloyd iterations, seeded.
    KMeans,
    /// Caller-supplied labels (0-based), e.g. from a previous run.
    Provided(Vec<u32>),
}

const KMEANS_ITERS: usize = 10;

/// Solver parameters. `defaults_for` mirrors the reference experimental
/// setup: 6x6 patches, stride 1, nu = 1e6/p, C = 1e5, eta = 0.007, K = 16,
/// 120 iterations, with a geometric eta warm-up from 4x eta over the first
/// 30 iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Number of transforms K (1 = single-transform mode).
    pub num_transforms: usize,
    /// Patch side d (n = d^2 pixels per patch).
    pub patch_side: usize,
    /// Patch stride r; must divide d and both image dimensions.
    pub stride: usize,
    /// Data fidelity weight.
    pub nu: f64,
    /// Sparsity threshold (final value when warm-up is active).
    pub eta: f64,
    /// Starting threshold of the warm-up schedule; >= eta.
    pub eta_initial: f64,
    /// Iterations over which eta decays geometrically from eta_initial to
    /// eta; 0 disables warm-up.
    pub eta_warmup_iters: usize,
    /// Energy bound C on the image norm.
    pub norm_bound: f64,
    /// Outer iterations J.
    pub iterations: usize,
    /// Recompute the clustering only every m-th iteration; codes are still
    /// refreshed every iteration with labels frozen in between.
    pub cluster_every_m: usize,
    pub init_clustering: InitClustering,
    pub seed: u64,
}

impl SolverConfig {
    pub fn defaults_for(height: usize, width: usize) -> Self {
        let p = (height * width) as f64;
        let eta = 0.007;
        Self {
            num_transforms: 16,
            patch_side: 6,
            stride: 1,
            nu: 1e6 / p,
            eta,
            eta_initial: 4.0 * eta,
            eta_warmup_iters: 30,
            norm_bound: 1e5,
            iterations: 120,
            cluster_every_m: 1,
            init_clustering: InitClustering::Random,
            seed: 0,
        }
    }

    /// Validate every field, returning one message per offending key.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut bad = Vec::new();
        if self.num_transforms == 0 {
            bad.push("k: must be at least 1".to_string());
        }
        if self.patch_side == 0 {
            bad.push("patch_side: must be positive".to_string());
        }
        if self.stride == 0 {
            bad.push("stride: must be positive".to_string());
        } else if self.patch_side > 0 && !self.patch_side.is_multiple_of(self.stride) {
            bad.push("stride: must divide patch_side".to_string());
        }
        if self.nu <= 0.0 || !self.nu.is_finite() {
            bad.push(format!("nu: must be positive and finite (got {})", self.nu));
        }
        if self.eta <= 0.0 || !self.eta.is_finite() {
            bad.push(format!(
                "eta: must be positive and finite (got {})",
                self.eta
            ));
        }
        if self.eta_initial < self.eta || !self.eta_initial.is_finite() {
            bad.push(format!(
                "eta_initial: must be finite and >= eta (got {})",
                self.eta_initial
            ));
        }
        if self.norm_bound <= 0.0 || !self.norm_bound.is_finite() {
            bad.push(format!(
                "c: must be positive and finite (got {})",
                self.norm_bound
            ));
        }
        if self.iterations == 0 {
            bad.push("iterations: must be at least 1".to_string());
        }
        if self.cluster_every_m == 0 {
            bad.push("cluster_every_m: must be at least 1".to_string());
        }
        if let InitClustering::Provided(labels) = &self.init_clustering {
            if labels.iter().any(|&l| l as usize >= self.num_transforms) {
                bad.push("init_clustering: provided label out of range".to_string());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }

    /// The threshold used at outer iteration `t` (1-based): geometric decay
    /// from `eta_initial` to `eta` over the warm-up window, constant after.
    pub fn eta_at(&self, t: usize) -> f64 {
        if self.eta_warmup_iters == 0 || t > self.eta_warmup_iters {
            self.eta
        } else {
            let frac = (t - 1) as f64 / self.eta_warmup_iters as f64;
            self.eta_initial * (self.eta / self.eta_initial).powf(frac)
        }
    }

    fn config_error(problems: Vec<String>) -> Error {
        Error::Config(problems.join("; "))
    }
}

/// Initial iterates of the descent.
pub struct InitState {
    pub image: ComplexImage,
    pub transforms: TransformSet,
    pub labels: ClusterAssignment,
    pub codes: SparseCodes,
}

/// Final iterates plus the per-iteration log.
pub struct ReconstructionResult {
    pub image: ComplexImage,
    pub transforms: TransformSet,
    pub codes: SparseCodes,
    pub labels: ClusterAssignment,
    pub stats: Vec<IterationStats>,
}

/// Build the initial iterates: zero-filled image (rescaled into the energy
/// ball if needed), 2D DCT for every transform, the configured clustering,
/// and one exact coding pass with those labels fixed.
pub fn initialize(
    meas: &Measurements,
    mask: &SamplingMask,
    config: &SolverConfig,
) -> Result<InitState> {
    config.validate().map_err(SolverConfig::config_error)?;
    let geom = PatchGeometry::new(
        config.patch_side,
        config.stride,
        mask.height(),
        mask.width(),
    )?;

    let mut image = zero_fill(meas, mask)?;
    let norm = image.l2_norm();
    if norm > config.norm_bound {
        image.scale(config.norm_bound / norm);
    }

    let transforms = TransformSet::dct(config.num_transforms, config.patch_side);
    let patches = extract_patches(&image, &geom)?;

    let k = config.num_transforms;
    let labels = if k == 1 {
        ClusterAssignment::uniform(geom.num_patches())
    } else {
        match &config.init_clustering {
            InitClustering::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(2);
                let labels = (0..geom.num_patches())
                    .map(|_| rng.random_range(0..k as u32))
                    .collect();
                ClusterAssignment::new(labels, k as u32)?
            }
            InitClustering::KMeans => {
                let labels = kmeans_labels(&patches, k, KMEANS_ITERS, config.seed);
                ClusterAssignment::new(labels, k as u32)?
            }
            InitClustering::Provided(labels) => {
                if labels.len() != geom.num_patches() {
                    return Err(Error::Config(format!(
                        "init_clustering: {} provided labels for {} patches",
                        labels.len(),
                        geom.num_patches()
                    )));
                }
                ClusterAssignment::new(labels.clone(), k as u32)?
            }
        }
    };

    let codes = sparse_code_with_labels(&patches, &transforms, &labels, config.eta_at(1))?;
    Ok(InitState {
        image,
        transforms,
        labels,
        codes,
    })
}

/// Run the full descent. If a reference image is supplied, PSNR and HFEN
/// against it are recorded each iteration.
pub fn reconstruct(
    meas: &Measurements,
    mask: &SamplingMask,
    config: &SolverConfig,
    reference: Option<&ComplexImage>,
) -> Result<ReconstructionResult> {
    config.validate().map_err(SolverConfig::config_error)?;
    let geom = PatchGeometry::new(
        config.patch_side,
        config.stride,
        mask.height(),
        mask.width(),
    )?;
    if let Some(r) = reference {
        if r.height() != mask.height() || r.width() != mask.width() {
            return Err(Error::InvalidInput(
                "reference image does not match the measurement grid".into(),
            ));
        }
    }

    let s0 = s0_spectrum(meas, mask)?;
    let beta = geom.beta();
    let init = initialize(meas, mask, config)?;
    let InitState {
        mut image,
        mut transforms,
        mut labels,
        mut codes,
    } = init;

    let mut stats = Vec::with_capacity(config.iterations);
    let mut eta_prev = config.eta_at(1);
    let mut h_prev = {
        let params = ObjectiveParams {
            nu: config.nu,
            eta: eta_prev,
            norm_bound: config.norm_bound,
        };
        objective::evaluate(
            &image,
            &geom,
            &transforms,
            &codes,
            &labels,
            meas,
            mask,
            &params,
        )
        .map_err(|e| at_iteration(0, e))?
    };

    for t in 1..=config.iterations {
        let eta_t = config.eta_at(t);
        let params = ObjectiveParams {
            nu: config.nu,
            eta: eta_t,
            norm_bound: config.norm_bound,
        };
        // Monotonicity is only meaningful while the objective itself is not
        // being reshaped by the warm-up schedule.
        let fixed_eta = eta_t == eta_prev;
        let patches_prev = extract_patches(&image, &geom)?;

        transforms = update_all_transforms(&patches_prev, &codes, &labels, &transforms)?;
        #[cfg(debug_assertions)]
        if fixed_eta {
            let h = objective::evaluate_with_patches(
                &image,
                &patches_prev,
                &transforms,
                &codes,
                &labels,
                meas,
                mask,
                &params,
            )
            .map_err(|e| at_iteration(t, e))?;
            debug_assert!(
                h <= h_prev + 1e-9 * h_prev.abs(),
                "iteration {t}: transform update raised the objective ({h_prev} -> {h})"
            );
            h_prev = h;
        }

        let recluster = config.num_transforms > 1 && (t - 1) % config.cluster_every_m == 0;
        if recluster {
            let out = sparse_code_and_cluster(&patches_prev, &transforms, eta_t)?;
            codes = out.codes;
            labels = out.labels;
        } else {
            codes = sparse_code_with_labels(&patches_prev, &transforms, &labels, eta_t)?;
        }
        #[cfg(debug_assertions)]
        if fixed_eta {
            let h = objective::evaluate_with_patches(
                &image,
                &patches_prev,
                &transforms,
                &codes,
                &labels,
                meas,
                mask,
                &params,
            )
            .map_err(|e| at_iteration(t, e))?;
            debug_assert!(
                h <= h_prev + 1e-9 * h_prev.abs(),
                "iteration {t}: sparse coding raised the objective ({h_prev} -> {h})"
            );
            h_prev = h;
        }

        let feedback = patch_feedback(&codes, &labels, &transforms, &geom)?;
        let s = simulate_kspace(&feedback)?;
        let inputs = ImageUpdateInputs::new(&s, &s0, mask, beta, config.nu, config.norm_bound)?;
        let (new_image, mu_hat) = solve_image(&inputs)?;
        let delta_x = new_image.l2_distance(&image);
        image = new_image;

        let h_t = objective::evaluate(
            &image,
            &geom,
            &transforms,
            &codes,
            &labels,
            meas,
            mask,
            &params,
        )
        .map_err(|e| at_iteration(t, e))?;
        if fixed_eta {
            debug_assert!(
                h_t <= h_prev + 1e-9 * h_prev.abs(),
                "iteration {t}: image update raised the objective ({h_prev} -> {h_t})"
            );
        }
        h_prev = h_t;
        eta_prev = eta_t;

        let (psnr, hfen) = match reference {
            Some(r) => (
                Some(metrics::psnr(&image, r)?),
                Some(metrics::hfen(&image, r)?),
            ),
            None => (None, None),
        };
        stats.push(IterationStats {
            iteration: t,
            objective: h_t,
            sparsity_fraction: objective::sparsity_fraction(&codes),
            delta_x,
            mu_hat,
            psnr,
            hfen,
            cluster_sizes: labels.cluster_sizes(),
        });
    }

    Ok(ReconstructionResult {
        image,
        transforms,
        codes,
        labels,
        stats,
    })
}

fn at_iteration(t: usize, e: Error) -> Error {
    match e {
        Error::Infeasible(msg) => Error::Infeasible(format!("iteration {t}: {msg}")),
        other => other,
    }
}

/// The patch-feedback image `sum_j Pj^T W_{label(j)}^H b_j`.
fn patch_feedback(
    codes: &SparseCodes,
    labels: &ClusterAssignment,
    transforms: &TransformSet,
    geom: &PatchGeometry,
) -> Result<ComplexImage> {
    let n = geom.patch_len();
    let mut back = PatchMatrix::zeros(n, geom.num_patches());
    let lab = labels.labels();
    let cdata = codes.as_slice();
    exec::for_each_chunk_mut(back.as_mut_slice(), n * COLUMN_BLOCK, |block, chunk| {
        let base = block * COLUMN_BLOCK;
        for (i, col) in chunk.chunks_exact_mut(n).enumerate() {
            let j = base + i;
            matvec_adjoint(
                transforms.get(lab[j] as usize),
                &cdata[j * n..(j + 1) * n],
                col,
            );
        }
    });
    crate::patches::aggregate_patches(&back, geom)
}

/// Plain Lloyd k-means on patch vectors with real and imaginary parts
/// stacked. Deterministic: seeded initialization, fixed iteration order,
/// ties to the lowest centroid index, empty clusters keep their centroid.
fn kmeans_labels(patches: &PatchMatrix, k: usize, iters: usize, seed: u64) -> Vec<u32> {
    let n = patches.nrows();
    let nn = patches.ncols();
    let dim = 2 * n;
    let pdata = patches.as_slice();
    let feature = |j: usize, out: &mut [f64]| {
        for (i, v) in pdata[j * n..(j + 1) * n].iter().enumerate() {
            out[i] = v.re;
            out[n + i] = v.im;
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut order: Vec<usize> = (0..nn).collect();
    order.shuffle(&mut rng);
    let mut centroids = vec![0.0f64; k * dim];
    for c in 0..k {
        let j = order[c % nn];
        feature(j, &mut centroids[c * dim..(c + 1) * dim]);
    }

    let mut assignment = vec![0u32; nn];
    let mut scratch = vec![0.0f64; dim];
    for _ in 0..iters {
        let cent = centroids.clone();
        assignment = exec::map_indexed(nn, |j| {
            let mut feat = vec![0.0f64; dim];
            feature(j, &mut feat);
            let mut best = 0u32;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let cv = &cent[c * dim..(c + 1) * dim];
                let mut d = 0.0;
                for i in 0..dim {
                    let e = feat[i] - cv[i];
                    d += e * e;
                }
                if d < best_d {
                    best_d = d;
                    best = c as u32;
                }
            }
            best
        });

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (j, &label) in assignment.iter().enumerate() {
            let c = label as usize;
            counts[c] += 1;
            feature(j, &mut scratch);
            let dst = &mut sums[c * dim..(c + 1) * dim];
            for i in 0..dim {
                dst[i] += scratch[i];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for i in 0..dim {
                    centroids[c * dim + i] = sums[c * dim + i] * inv;
                }
            }
        }
    }
    assignment
}
