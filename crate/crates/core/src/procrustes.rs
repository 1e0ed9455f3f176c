//! Per-cluster transform update: the orthogonal Procrustes problem.
//!
//! Minimizing `|W X - B|_F^2` over unitary `W` is solved exactly by
//! `W = V U^H`, where `U S V^H` is the full SVD of `X B^H`. Optimality is
//! certified by `Re tr(W X B^H) = sum of singular values`. The K cluster
//! problems are independent and run in parallel.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::patches::PatchMatrix;
use crate::sparse::{ClusterAssignment, SparseCodes, TransformSet};

const UNITARITY_TOL: f64 = 1e-10;

/// Solve `min |W X - B|_F^2  s.t.  W^H W = I` for one cluster.
///
/// `x_k` and `b_k` are `n x m_k` with matching column counts; `m_k = 0` is
/// allowed and yields the identity (any unitary minimizes the empty sum —
/// callers that care keep the previous transform instead, see
/// [`update_all_transforms`]). Rank-deficient products are accepted as
/// whatever the SVD returns; the result is still unitary.
pub fn update_transform(
    x_k: &DMatrix<Complex64>,
    b_k: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if x_k.nrows() != b_k.nrows() || x_k.ncols() != b_k.ncols() {
        return Err(Error::InvalidInput(format!(
            "patch block {}x{} vs code block {}x{}",
            x_k.nrows(),
            x_k.ncols(),
            b_k.nrows(),
            b_k.ncols()
        )));
    }
    let n = x_k.nrows();
    let product = x_k * b_k.adjoint();
    if product
        .iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(Error::Numerical(
            "non-finite values entering the transform-update SVD".into(),
        ));
    }
    let svd = product.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return V^H".into()))?;
    let w = v_t.adjoint() * u.adjoint();

    let mut gram = w.adjoint() * &w;
    for i in 0..n {
        gram[(i, i)] -= Complex64::ONE;
    }
    if gram.norm() > UNITARITY_TOL {
        return Err(Error::Numerical(format!(
            "transform update lost unitarity ({:.3e})",
            gram.norm()
        )));
    }
    Ok(w)
}

/// Update every cluster transform from its member patches and codes.
/// Empty clusters keep their previous transform.
pub fn update_all_transforms(
    patches: &PatchMatrix,
    codes: &SparseCodes,
    labels: &ClusterAssignment,
    transforms: &TransformSet,
) -> Result<TransformSet> {
    let n = transforms.side();
    if patches.nrows() != n || codes.nrows() != n || patches.ncols() != codes.ncols() {
        return Err(Error::InvalidInput(
            "patch/code dimensions do not match the transform set".into(),
        ));
    }
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

    let k = transforms.num_transforms();
    let updated: Vec<Result<DMatrix<Complex64>>> = exec::map_indexed(k, |cluster| {
        let members = labels.members_of(cluster as u32);
        if members.is_empty() {
            return Ok(transforms.get(cluster).clone());
        }
        let x_k = gather_columns(patches, &members);
        let b_k = gather_columns(codes, &members);
        update_transform(&x_k, &b_k)
    });

    let mut mats = Vec::with_capacity(k);
    for r in updated {
        mats.push(r?);
    }
    TransformSet::new(mats)
}

fn gather_columns(m: &DMatrix<Complex64>, indices: &[usize]) -> DMatrix<Complex64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, indices.len());
    for (dst, &src) in indices.iter().enumerate() {
        out.column_mut(dst).copy_from(&m.column(src));
    }
    out
}
