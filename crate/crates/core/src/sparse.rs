//! Hard-thresholding sparse coding and per-patch cluster selection.
//!
//! Under an l0 penalty with weight `eta^2`, the exact sparse code of a
//! transformed patch is its hard-thresholded copy, and the cost a cluster
//! candidate would incur reduces to `sum_i min(|v_i|^2, eta^2)`. Each patch
//! is coded and clustered independently, so the whole step parallelizes
//! over patch columns and is an exact minimizer of its subproblem.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::patches::{PatchMatrix, COLUMN_BLOCK};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sparse code matrix `B`: `n x N`, column `j` is the code of patch `j`.
pub type SparseCodes = DMatrix<Complex64>;

/// A union of `K` unitary `n x n` transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSet {
    side: usize,
    mats: Vec<DMatrix<Complex64>>,
}

impl TransformSet {
    pub fn new(mats: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let side = match mats.first() {
            Some(m) => m.nrows(),
            None => return Err(Error::InvalidInput("empty transform set".into())),
        };
        for m in &mats {
            if m.nrows() != side || m.ncols() != side {
                return Err(Error::InvalidInput(format!(
                    "transform is {}x{}, expected {side}x{side}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self { side, mats })
    }

    /// `K` copies of the orthonormal 2D DCT on `d x d` patches
    /// (Kronecker square of the 1D DCT-II), the standard initialization.
    pub fn dct(num_transforms: usize, patch_side: usize) -> Self {
        let d = patch_side;
        let mut dct1 = DMatrix::<f64>::zeros(d, d);
        for k in 0..d {
            let scale = if k == 0 {
                (1.0 / d as f64).sqrt()
            } else {
                (2.0 / d as f64).sqrt()
            };
            for j in 0..d {
                dct1[(k, j)] = scale
                    * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2 * d) as f64).cos();
            }
        }
        let n = d * d;
        let kron = DMatrix::from_fn(n, n, |i, j| {
            let (ic, ir) = (i / d, i % d);
            let (jc, jr) = (j / d, j % d);
            Complex64::new(dct1[(ic, jc)] * dct1[(ir, jr)], 0.0)
        });
        Self {
            side: n,
            mats: vec![kron; num_transforms.max(1)],
        }
    }

    pub fn num_transforms(&self) -> usize {
        self.mats.len()
    }

    /// Transform side length `n` (patch pixels).
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, k: usize) -> &DMatrix<Complex64> {
        &self.mats[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<Complex64>> {
        self.mats.iter()
    }

    pub fn replace(&mut self, k: usize, mat: DMatrix<Complex64>) {
        assert_eq!(mat.nrows(), self.side);
        assert_eq!(mat.ncols(), self.side);
        self.mats[k] = mat;
    }

    /// Largest Frobenius deviation of `Wk^H Wk` from the identity over all k.
    pub fn max_unitarity_error(&self) -> f64 {
        self.mats
            .iter()
            .map(|w| {
                let mut g = w.adjoint() * w;
                for i in 0..self.side {
                    g[(i, i)] -= Complex64::ONE;
                }
                g.norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Patch-to-transform assignment: one label in `0..K` per patch.
/// (Serialized forms are 1-based; in memory labels are 0-based indices.)
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<u32>,
    num_clusters: u32,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<u32>, num_clusters: u32) -> Result<Self> {
        if num_clusters == 0 {
            return Err(Error::InvalidInput("num_clusters must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_clusters) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {num_clusters} clusters"
            )));
        }
        Ok(Self {
            labels,
            num_clusters,
        })
    }

    /// Everything in cluster 0; the single-transform case.
    pub fn uniform(num_patches: usize) -> Self {
        Self {
            labels: vec![0; num_patches],
            num_clusters: 1,
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> u32 {
        self.num_clusters
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_clusters as usize];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Indices of the patches assigned to cluster `k`, in patch order.
    pub fn members_of(&self, k: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Hard thresholding: zero entries with magnitude strictly below `eta`,
/// keep the rest (boundary magnitudes are kept). `eta = 0` is the identity.
pub fn hard_threshold(v: &[Complex64], eta: f64) -> Vec<Complex64> {
    let mut out = v.to_vec();
    hard_threshold_in_place(&mut out, eta);
    out
}

pub fn hard_threshold_in_place(v: &mut [Complex64], eta: f64) {
    let t2 = eta * eta;
    for x in v {
        if x.norm_sqr() < t2 {
            *x = Complex64::ZERO;
        }
    }
}

/// Sparse-coding cost of a transformed patch under threshold `eta`:
/// `|v - H_eta(v)|^2 + eta^2 * |H_eta(v)|_0`, which collapses to
/// `sum_i min(|v_i|^2, eta^2)`.
pub fn patch_cost(transformed: &[Complex64], eta: f64) -> f64 {
    let t2 = eta * eta;
    transformed.iter().map(|v| v.norm_sqr().min(t2)).sum()
}

/// `out = w * x` without allocating; `w` column-major square.
pub(crate) fn matvec(w: &DMatrix<Complex64>, x: &[Complex64], out: &mut [Complex64]) {
    let n = w.nrows();
    out.fill(Complex64::ZERO);
    let wd = w.as_slice();
    for (j, &xj) in x.iter().enumerate() {
        let col = &wd[j * n..(j + 1) * n];
        for i in 0..n {
            out[i] += col[i] * xj;
        }
    }
}

/// `out = w^H * x` without allocating.
pub(crate) fn matvec_adjoint(w: &DMatrix<Complex64>, x: &[Complex64], out: &mut [Complex64]) {
    let n = w.nrows();
    let wd = w.as_slice();
    for j in 0..n {
        let col = &wd[j * n..(j + 1) * n];
        let mut acc = Complex64::ZERO;
        for i in 0..n {
            acc += col[i].conj() * x[i];
        }
        out[j] = acc;
    }
}

pub struct CodingOutput {
    pub codes: SparseCodes,
    pub labels: ClusterAssignment,
}

/// Exact solution of the joint sparse coding and clustering subproblem for
/// fixed image and transforms: per patch, pick the transform with the lowest
/// coding cost (ties to the lowest index) and hard-threshold its response.
pub fn sparse_code_and_cluster(
    patches: &PatchMatrix,
    transforms: &TransformSet,
    eta: f64,
) -> Result<CodingOutput> {
    let n = transforms.side();
    check_dims(patches, n)?;
    let num = patches.ncols();
    let k = transforms.num_transforms();

    let mut codes = DMatrix::zeros(n, num);
    let mut labels = vec![0u32; num];
    code_columns(
        codes.as_mut_slice(),
        &mut labels,
        patches.as_slice(),
        n,
        |_, patch, code| {
            if k == 1 {
                matvec(transforms.get(0), patch, code);
                hard_threshold_in_place(code, eta);
                0
            } else {
                let mut scratch = vec![Complex64::ZERO; n];
                let mut best_k = 0u32;
                let mut best_cost = f64::INFINITY;
                for cand in 0..k {
                    matvec(transforms.get(cand), patch, &mut scratch);
                    let cost = patch_cost(&scratch, eta);
                    if cost < best_cost {
                        best_cost = cost;
                        best_k = cand as u32;
                        code.copy_from_slice(&scratch);
                    }
                }
                hard_threshold_in_place(code, eta);
                best_k
            }
        },
    );

    Ok(CodingOutput {
        codes,
        labels: ClusterAssignment::new(labels, k as u32)?,
    })
}

/// Sparse coding with the clustering frozen: recompute only the codes,
/// `b_j = H_eta(W_{label(j)} Pj x)`.
pub fn sparse_code_with_labels(
    patches: &PatchMatrix,
    transforms: &TransformSet,
    labels: &ClusterAssignment,
    eta: f64,
) -> Result<SparseCodes> {
    let n = transforms.side();
    check_dims(patches, n)?;
    if labels.len() != patches.ncols() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} patches",
            labels.len(),
            patches.ncols()
        )));
    }
    if labels.num_clusters() as usize > transforms.num_transforms() {
        return Err(Error::InvalidInput(
            "labels reference more clusters than transforms".into(),
        ));
    }
    let lab = labels.labels();
    let mut codes = DMatrix::zeros(n, patches.ncols());
    let mut scratch_labels = lab.to_vec();
    code_columns(
        codes.as_mut_slice(),
        &mut scratch_labels,
        patches.as_slice(),
        n,
        |j, patch, code| {
            let k = lab[j];
            matvec(transforms.get(k as usize), patch, code);
            hard_threshold_in_place(code, eta);
            k
        },
    );
    Ok(codes)
}

fn check_dims(patches: &PatchMatrix, n: usize) -> Result<()> {
    if patches.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "patch length {} does not match transform side {n}",
            patches.nrows()
        )));
    }
    Ok(())
}

/// Shared blocked per-column driver: `f(j, patch, code) -> label`.
fn code_columns<F>(
    codes: &mut [Complex64],
    labels: &mut [u32],
    patches: &[Complex64],
    n: usize,
    f: F,
) where
    F: Fn(usize, &[Complex64], &mut [Complex64]) -> u32 + Sync,
{
    let body = |block: usize, code_chunk: &mut [Complex64], label_chunk: &mut [u32]| {
        let base = block * COLUMN_BLOCK;
        for (t, (code, label)) in code_chunk
            .chunks_exact_mut(n)
            .zip(label_chunk.iter_mut())
            .enumerate()
        {
            let j = base + t;
            *label = f(j, &patches[j * n..(j + 1) * n], code);
        }
    };
    #[cfg(feature = "parallel")]
    {
        codes
            .par_chunks_mut(n * COLUMN_BLOCK)
            .zip(labels.par_chunks_mut(COLUMN_BLOCK))
            .enumerate()
            .for_each(|(b, (c, l))| body(b, c, l));
    }
    #[cfg(not(feature = "parallel"))]
    {
        codes
            .chunks_mut(n * COLUMN_BLOCK)
            .zip(labels.chunks_mut(COLUMN_BLOCK))
            .enumerate()
            .for_each(|(b, (c, l))| body(b, c, l));
    }
}

/// Check the equivalence between per-transform s-sparse coding and block
/// cosparse coding in the stacked overcomplete transform, each side computed
/// on its own:
///
/// * left: for each transform, the best s-sparse approximation error of
///   `Wk z` (sum of the `n - s` smallest squared magnitudes);
/// * right: exhaustive enumeration over the constrained block and all
///   size-`s` supports inside it, with the remaining blocks represented
///   exactly.
///
/// Returns true iff the two minima agree. Test utility; enumeration cost is
/// `K * C(n, s)`.
pub fn octobos_equivalence_check(z: &[Complex64], transforms: &TransformSet, s: usize) -> bool {
    let n = transforms.side();
    assert!(s <= n, "sparsity level exceeds patch length");
    assert_eq!(z.len(), n, "signal length mismatch");

    let mut responses = Vec::with_capacity(transforms.num_transforms());
    for w in transforms.iter() {
        let mut r = vec![Complex64::ZERO; n];
        matvec(w, z, &mut r);
        responses.push(r);
    }

    // Left side: sort magnitudes, drop the s largest.
    let lhs = responses
        .iter()
        .map(|r| {
            let mut mags: Vec<f64> = r.iter().map(|v| v.norm_sqr()).collect();
            mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
            mags[..n - s].iter().sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);

    // Right side: enumerate supports of size s for the cosparse block.
    let mut rhs = f64::INFINITY;
    for r in &responses {
        for support in 0u64..(1u64 << n) {
            if support.count_ones() as usize != s {
                continue;
            }
            let err: f64 = (0..n)
                .filter(|i| support & (1 << i) == 0)
                .map(|i| r[i].norm_sqr())
                .sum();
            rhs = rhs.min(err);
        }
    }
    // s = n: the only support is everything, error 0 on both sides.
    (lhs - rhs).abs() <= 1e-12 * rhs.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let m = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let qr = m.qr();
        qr.q()
    }

    #[test]
    fn hard_threshold_keeps_boundary() {
        let v = [
            Complex64::new(0.5, 0.0),
            Complex64::new(-0.3, 0.0),
            Complex64::new(0.0, 0.4),
        ];
        let out = hard_threshold(&v, 0.4);
        assert_eq!(out[0], v[0]);
        assert_eq!(out[1], Complex64::ZERO);
        assert_eq!(out[2], v[2]); // |0.4i| = eta is kept
    }

    #[test]
    fn hard_threshold_degenerate_cases() {
        let v = [Complex64::new(0.1, 0.2), Complex64::new(-0.7, 0.01)];
        assert_eq!(hard_threshold(&v, 0.0), v.to_vec());
        let wiped = hard_threshold(&v, 10.0);
        assert!(wiped.iter().all(|x| *x == Complex64::ZERO));
    }

    #[test]
    fn patch_cost_example_and_identity() {
        let v = [Complex64::new(0.5, 0.0), Complex64::new(-0.3, 0.0)];
        let cost = patch_cost(&v, 0.4);
        assert!((cost - 0.25).abs() < 1e-15);

        // Both branch formulas agree with the min form on random data.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 1 + rng.random_range(0..8);
            let v: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let eta = rng.random::<f64>() * 0.8;
            let coded = hard_threshold(&v, eta);
            let resid: f64 = v.iter().zip(&coded).map(|(a, b)| (a - b).norm_sqr()).sum();
            let nnz = coded.iter().filter(|x| x.norm_sqr() > 0.0).count();
            let via_branches = resid + eta * eta * nnz as f64;
            assert!((via_branches - patch_cost(&v, eta)).abs() < 1e-12);
        }
    }

    #[test]
    fn patch_cost_extremes() {
        assert_eq!(patch_cost(&[Complex64::ZERO; 4], 0.3), 0.0);
        let v = [Complex64::new(0.1, 0.0), Complex64::new(0.0, -0.2)];
        let full: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        assert!((patch_cost(&v, 5.0) - full).abs() < 1e-15);
    }

    #[test]
    fn single_transform_codes_directly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let w = random_unitary(n, &mut rng);
        let ts = TransformSet::new(vec![w.clone()]).unwrap();
        let patches = DMatrix::from_fn(n, 6, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let out = sparse_code_and_cluster(&patches, &ts, 0.2).unwrap();
        assert!(out.labels.labels().iter().all(|&l| l == 0));
        let expect = {
            let mut m = &w * &patches;
            hard_threshold_in_place(m.as_mut_slice(), 0.2);
            m
        };
        assert_eq!(out.codes, expect);
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 2;
            let k = 3;
            let nn = 4;
            let eta = 0.3;
            let mats: Vec<_> = (0..k).map(|_| random_unitary(n, &mut rng)).collect();
            let ts = TransformSet::new(mats).unwrap();
            let patches = DMatrix::from_fn(n, nn, |_, _| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });

            let got = sparse_code_and_cluster(&patches, &ts, eta).unwrap();
            let got_cost: f64 = (0..nn)
                .map(|j| {
                    let mut r = vec![Complex64::ZERO; n];
                    matvec(
                        ts.get(got.labels.labels()[j] as usize),
                        patches.column(j).as_slice(),
                        &mut r,
                    );
                    let b = got.codes.column(j);
                    let resid: f64 = r
                        .iter()
                        .zip(b.iter())
                        .map(|(a, c)| (a - c).norm_sqr())
                        .sum();
                    let nnz = b.iter().filter(|x| x.norm_sqr() > 0.0).count();
                    resid + eta * eta * nnz as f64
                })
                .sum();

            // Oracle: enumerate every labeling with per-label optimal codes.
            let mut best = f64::INFINITY;
            let mut best_labels = vec![0u32; nn];
            for assign in 0..(k as u32).pow(nn as u32) {
                let mut labels = vec![0u32; nn];
                let mut a = assign;
                for l in labels.iter_mut() {
                    *l = a % k as u32;
                    a /= k as u32;
                }
                let cost: f64 = (0..nn)
                    .map(|j| {
                        let mut r = vec![Complex64::ZERO; n];
                        matvec(
                            ts.get(labels[j] as usize),
                            patches.column(j).as_slice(),
                            &mut r,
                        );
                        patch_cost(&r, eta)
                    })
                    .sum();
                if cost < best - 1e-15 {
                    best = cost;
                    best_labels = labels;
                }
            }
            assert!((got_cost - best).abs() <= 1e-12 * best.max(1.0));
            let _ = best_labels;
        }
    }

    #[test]
    fn ties_pick_lowest_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 3;
        let w = random_unitary(n, &mut rng);
        // Two identical transforms: every patch is a tie.
        let ts = TransformSet::new(vec![w.clone(), w]).unwrap();
        let patches = DMatrix::from_fn(n, 5, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let out = sparse_code_and_cluster(&patches, &ts, 0.25).unwrap();
        assert!(out.labels.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn coding_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 9;
        let mats: Vec<_> = (0..4).map(|_| random_unitary(n, &mut rng)).collect();
        let ts = TransformSet::new(mats).unwrap();
        let patches = DMatrix::from_fn(n, 300, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let a = sparse_code_and_cluster(&patches, &ts, 0.1).unwrap();
        let b = sparse_code_and_cluster(&patches, &ts, 0.1).unwrap();
        assert_eq!(a.codes, b.codes);
        assert_eq!(a.labels, b.labels);
        // Magnitude invariant of the produced codes.
        assert!(a
            .codes
            .iter()
            .all(|v| v.norm_sqr() == 0.0 || v.norm() >= 0.1));
    }

    proptest::proptest! {
        #[test]
        fn cost_identity_and_code_magnitudes(
            n in 1usize..8,
            eta in 1e-6f64..1.0,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let coded = hard_threshold(&v, eta);
            // Nonzero survivors are at least eta in magnitude.
            proptest::prop_assert!(coded
                .iter()
                .all(|x| x.norm_sqr() == 0.0 || x.norm() >= eta * (1.0 - 1e-15)));
            // |v - H(v)|^2 + eta^2 |H(v)|_0 == sum_i min(|v_i|^2, eta^2).
            let resid: f64 = v.iter().zip(&coded).map(|(a, b)| (a - b).norm_sqr()).sum();
            let nnz = coded.iter().filter(|x| x.norm_sqr() > 0.0).count();
            let lhs = resid + eta * eta * nnz as f64;
            let rhs = patch_cost(&v, eta);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        for d in [2usize, 3, 6] {
            let ts = TransformSet::dct(2, d);
            assert_eq!(ts.side(), d * d);
            assert!(ts.max_unitarity_error() < 1e-12);
        }
    }

    #[test]
    fn octobos_check_trivial_and_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 4;
        // K = 1 reduces to a single square transform.
        let ts1 = TransformSet::new(vec![random_unitary(n, &mut rng)]).unwrap();
        let z: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        assert!(octobos_equivalence_check(&z, &ts1, 2));

        let ts2 = TransformSet::new(vec![
            random_unitary(n, &mut rng),
            random_unitary(n, &mut rng),
        ])
        .unwrap();
        assert!(octobos_equivalence_check(&z, &ts2, 2));
        // Full support: both errors vanish.
        assert!(octobos_equivalence_check(&z, &ts2, n));
    }
}
