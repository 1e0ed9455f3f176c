//! Reconstruction quality metrics (PSNR, high-frequency error norm) and the
//! majority-vote cluster map for visualizing learned clusterings.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::ComplexImage;
use crate::patches::PatchGeometry;
use crate::sparse::ClusterAssignment;

/// LoG kernel half width; the kernel is `(2*LOG_RADIUS+1)^2` taps.
const LOG_RADIUS: i64 = 7;
/// LoG standard deviation in pixels.
const LOG_SIGMA: f64 = 1.5;

/// Peak signal-to-noise ratio in dB, computed between image magnitudes:
/// `20 log10(peak(|ref|) / rmse(|recon| - |ref|))`. Identical magnitudes
/// give `+inf`.
pub fn psnr(recon: &ComplexImage, reference: &ComplexImage) -> Result<f64> {
    if !recon.same_shape(reference) {
        return Err(Error::InvalidInput("psnr: shape mismatch".into()));
    }
    let r = recon.as_slice();
    let g = reference.as_slice();
    let peak = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::InvalidInput("psnr: reference image is zero".into()));
    }
    let mse = exec::sum_indexed(g.len(), |i| {
        let d = r[i].norm() - g[i].norm();
        d * d
    }) / g.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / mse.sqrt()).log10())
}

/// The sampled, zero-mean 15x15 Laplacian-of-Gaussian kernel (sigma 1.5),
/// row-major. Sums to zero by construction.
pub fn log_kernel() -> Vec<f64> {
    let side = (2 * LOG_RADIUS + 1) as usize;
    let mut k = Vec::with_capacity(side * side);
    for y in -LOG_RADIUS..=LOG_RADIUS {
        for x in -LOG_RADIUS..=LOG_RADIUS {
            k.push(log_xx(x as f64) * log_g(y as f64) + log_g(x as f64) * log_xx(y as f64));
        }
    }
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    for v in &mut k {
        *v -= mean;
    }
    k
}

fn log_g(t: f64) -> f64 {
    let s2 = LOG_SIGMA * LOG_SIGMA;
    (-t * t / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt()
}

fn log_xx(t: f64) -> f64 {
    let s2 = LOG_SIGMA * LOG_SIGMA;
    ((t * t - s2) / (s2 * s2)) * log_g(t)
}

/// High-frequency error norm: l2 norm of the LoG-filtered difference of the
/// magnitude images, with zero-padded boundaries.
///
/// Filtering is done by the separable decomposition of the LoG (two
/// Gaussian-by-second-derivative passes plus a box correction for the mean
/// subtraction), which matches direct dense convolution to roundoff.
pub fn hfen(recon: &ComplexImage, reference: &ComplexImage) -> Result<f64> {
    if !recon.same_shape(reference) {
        return Err(Error::InvalidInput("hfen: shape mismatch".into()));
    }
    let (h, w) = (recon.height(), recon.width());
    let rm = recon.as_slice();
    let gm = reference.as_slice();
    let diff: Vec<f64> = (0..h * w).map(|i| rm[i].norm() - gm[i].norm()).collect();

    let g: Vec<f64> = (-LOG_RADIUS..=LOG_RADIUS)
        .map(|t| log_g(t as f64))
        .collect();
    let gxx: Vec<f64> = (-LOG_RADIUS..=LOG_RADIUS)
        .map(|t| log_xx(t as f64))
        .collect();
    let ones = vec![1.0; g.len()];
    let side = g.len() as f64;
    let mean = {
        let sg: f64 = g.iter().sum();
        let sxx: f64 = gxx.iter().sum();
        2.0 * sxx * sg / (side * side)
    };

    // filtered = gxx (x) g + g (x) gxx - mean * box
    let a = separable_filter(&diff, h, w, &gxx, &g);
    let b = separable_filter(&diff, h, w, &g, &gxx);
    let box_sum = separable_filter(&diff, h, w, &ones, &ones);
    let total = exec::sum_indexed(h * w, |i| {
        let v = a[i] + b[i] - mean * box_sum[i];
        v * v
    });
    Ok(total.sqrt())
}

/// Zero-padded separable correlation: `kx` along rows, then `ky` along
/// columns. Kernels are symmetric here, so correlation equals convolution.
fn separable_filter(src: &[f64], h: usize, w: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let r = (kx.len() / 2) as i64;
    let mut tmp = vec![0.0; h * w];
    exec::for_each_chunk_mut(&mut tmp, w, |row, out| {
        let base = row * w;
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &kv) in kx.iter().enumerate() {
                let jj = j as i64 + t as i64 - r;
                if (0..w as i64).contains(&jj) {
                    acc += kv * src[base + jj as usize];
                }
            }
            *o = acc;
        }
    });
    let mut out = vec![0.0; h * w];
    exec::for_each_chunk_mut(&mut out, w, |row, dst| {
        for (j, o) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &kv) in ky.iter().enumerate() {
                let ii = row as i64 + t as i64 - r;
                if (0..h as i64).contains(&ii) {
                    acc += kv * tmp[ii as usize * w + j];
                }
            }
            *o = acc;
        }
    });
    out
}

/// Assign each pixel the cluster that the majority of its covering patches
/// belong to, ties to the lowest cluster index. Returns labels row-major,
/// 0-based.
pub fn pixel_cluster_map(labels: &ClusterAssignment, geom: &PatchGeometry) -> Result<Vec<u32>> {
    if labels.len() != geom.num_patches() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} patches",
            labels.len(),
            geom.num_patches()
        )));
    }
    let (h, w, r, d) = (
        geom.height(),
        geom.width(),
        geom.stride(),
        geom.patch_side(),
    );
    let cols = geom.grid_cols();
    let k = labels.num_clusters() as usize;
    let lab = labels.labels();

    Ok(exec::map_indexed(h * w, |pix| {
        let (a, b) = (pix / w, pix % w);
        let mut votes = vec![0u32; k];
        let mut pr = a % r;
        while pr < d {
            let gi = ((a + h - pr) % h) / r;
            let mut pc = b % r;
            while pc < d {
                let gj = ((b + w - pc) % w) / r;
                votes[lab[gi * cols + gj] as usize] += 1;
                pc += r;
            }
            pr += r;
        }
        let mut best = 0usize;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best as u32
    }))
}
