//! Overlapping patch extraction with periodic wrap-around, and its adjoint.
//!
//! With the stride dividing both the patch side and the image dimensions,
//! every pixel is covered by exactly `n / r^2` patches, so
//! `aggregate(extract(x)) = (n / r^2) * x` holds exactly. The image update
//! step depends on that scaled-identity structure.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::ComplexImage;

/// Columns per task when touching patch matrices in parallel.
pub(crate) const COLUMN_BLOCK: usize = 64;

/// Patch matrix: `n x N`, column `j` holds patch `j` vectorized
/// column-major within its window; patches enumerated row-major over grid
/// offsets.
pub type PatchMatrix = DMatrix<Complex64>;

/// Geometry of the patch grid over an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    patch_side: usize,
    stride: usize,
    height: usize,
    width: usize,
}

impl PatchGeometry {
    /// The stride must divide the patch side and both image dimensions:
    /// that is what makes the wrap-around cover uniform (`sum_j Pj^T Pj`
    /// a scaled identity).
    pub fn new(patch_side: usize, stride: usize, height: usize, width: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if patch_side == 0 {
            problems.push("patch_side must be positive".to_string());
        }
        if stride == 0 {
            problems.push("stride must be positive".to_string());
        }
        if patch_side > height.min(width) {
            problems.push(format!(
                "patch_side {patch_side} exceeds image dimension {}",
                height.min(width)
            ));
        }
        if stride > 0 && !(height.is_multiple_of(stride) && width.is_multiple_of(stride)) {
            problems.push(format!(
                "stride {stride} must divide image dimensions {height}x{width}"
            ));
        }
        if stride > 0 && !patch_side.is_multiple_of(stride) {
            // Without this the cover is non-uniform (e.g. d=3, r=2).
            problems.push(format!(
                "stride {stride} must divide patch_side {patch_side}"
            ));
        }
        if problems.is_empty() {
            Ok(Self {
                patch_side,
                stride,
                height,
                width,
            })
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Pixels per patch, `n = d^2`.
    pub fn patch_len(&self) -> usize {
        self.patch_side * self.patch_side
    }

    pub fn grid_rows(&self) -> usize {
        self.height / self.stride
    }

    pub fn grid_cols(&self) -> usize {
        self.width / self.stride
    }

    /// Number of patches `N`.
    pub fn num_patches(&self) -> usize {
        self.grid_rows() * self.grid_cols()
    }

    /// Cover multiplicity `beta = n / r^2`; `sum_j Pj^T Pj = beta * I`.
    pub fn beta(&self) -> f64 {
        (self.patch_len() as f64) / ((self.stride * self.stride) as f64)
    }

    fn check_image(&self, img: &ComplexImage) -> Result<()> {
        if img.height() != self.height || img.width() != self.width {
            return Err(Error::InvalidInput(format!(
                "image {}x{} does not match patch geometry {}x{}",
                img.height(),
                img.width(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }
}

/// Extract all patches of `img` into an `n x N` matrix. Windows that cross
/// the image boundary wrap around to the opposite side.
pub fn extract_patches(img: &ComplexImage, geom: &PatchGeometry) -> Result<PatchMatrix> {
    geom.check_image(img)?;
    let n = geom.patch_len();
    let d = geom.patch_side;
    let (h, w, r) = (geom.height, geom.width, geom.stride);
    let cols = geom.grid_cols();
    let src = img.as_slice();

    let mut out = DMatrix::zeros(n, geom.num_patches());
    exec::for_each_chunk_mut(out.as_mut_slice(), n * COLUMN_BLOCK, |block, chunk| {
        for (i, col) in chunk.chunks_exact_mut(n).enumerate() {
            let j = block * COLUMN_BLOCK + i;
            let gr = (j / cols) * r;
            let gc = (j % cols) * r;
            let mut idx = 0;
            for pc in 0..d {
                let c = (gc + pc) % w;
                for pr in 0..d {
                    let rr = (gr + pr) % h;
                    col[idx] = src[rr * w + c];
                    idx += 1;
                }
            }
        }
    });
    Ok(out)
}

/// Adjoint of [`extract_patches`]: returns `sum_j Pj^T column_j`, i.e. each
/// patch scattered back (with wrap-around) and summed over overlaps.
pub fn aggregate_patches(patches: &PatchMatrix, geom: &PatchGeometry) -> Result<ComplexImage> {
    let n = geom.patch_len();
    if patches.nrows() != n || patches.ncols() != geom.num_patches() {
        return Err(Error::InvalidInput(format!(
            "patch matrix {}x{} does not match geometry ({}x{} expected)",
            patches.nrows(),
            patches.ncols(),
            n,
            geom.num_patches()
        )));
    }
    let d = geom.patch_side;
    let (h, w, r) = (geom.height, geom.width, geom.stride);
    let cols = geom.grid_cols();
    let data = patches.as_slice();

    // Gather form: each pixel sums the patch entries that cover it, in a
    // fixed order, so the result is deterministic and rows parallelize.
    let mut img = ComplexImage::zeros(h, w);
    exec::for_each_chunk_mut(img.as_mut_slice(), w, |a, row| {
        for (b, out) in row.iter_mut().enumerate() {
            let mut acc = Complex64::ZERO;
            let mut pr = a % r;
            while pr < d {
                let gr = (a + h - pr) % h; // multiple of r by construction
                let gi = gr / r;
                let mut pc = b % r;
                while pc < d {
                    let gc = (b + w - pc) % w;
                    let gj = gc / r;
                    let j = gi * cols + gj;
                    acc += data[j * n + pc * d + pr];
                    pc += r;
                }
                pr += r;
            }
            *out = acc;
        }
    });
    Ok(img)
}
