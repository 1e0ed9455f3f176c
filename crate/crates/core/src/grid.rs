//! Complex 2D image container and the unitary Fourier transform contract
//! used everywhere else.
//!
//! The discrete Fourier transform here is the *normalized* (unitary) one:
//! a symmetric `1/sqrt(p)` scale in both directions, so `ifft2(fft2(x)) = x`
//! and energy is preserved exactly up to roundoff. All closed-form solver
//! steps assume this normalization.
//!
//! k-space simulation follows the centered-spectrum convention
//! `fftshift(fft2(ifftshift(x)))`, which places the DC coefficient at
//! `(h/2, w/2)` so that sampling masks designed around a centered DC line up
//! with the simulated spectrum.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::exec;

/// Rows per task when transforming rows in parallel.
const ROW_BLOCK: usize = 8;

/// A complex-valued image on an `height x width` grid, row-major.
///
/// Reference images are expected to have magnitudes in `[0, 1]`, but the
/// container itself only enforces shape. Finiteness is checked by the
/// transforms that consume it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

/// The spectrum of a [`ComplexImage`]: same shape, row-major over
/// `(k_y, k_x)` frequency locations.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpace {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

macro_rules! grid_impl {
    ($ty:ident) => {
        impl $ty {
            pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
                if height == 0 || width == 0 {
                    return Err(Error::InvalidInput(format!(
                        "degenerate grid {height}x{width}"
                    )));
                }
                if data.len() != height * width {
                    return Err(Error::InvalidInput(format!(
                        "grid data length {} does not match {height}x{width}",
                        data.len()
                    )));
                }
                Ok(Self {
                    height,
                    width,
                    data,
                })
            }

            pub fn zeros(height: usize, width: usize) -> Self {
                Self {
                    height,
                    width,
                    data: vec![Complex64::ZERO; height * width],
                }
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            /// Total number of grid points `p`.
            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn as_slice(&self) -> &[Complex64] {
                &self.data
            }

            pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
                &mut self.data
            }

            pub fn get(&self, row: usize, col: usize) -> Complex64 {
                self.data[row * self.width + col]
            }

            pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
                self.data[row * self.width + col] = value;
            }

            pub fn same_shape(&self, other: &Self) -> bool {
                self.height == other.height && self.width == other.width
            }

            /// Euclidean norm of the grid viewed as a vector.
            pub fn l2_norm(&self) -> f64 {
                exec::sum_indexed(self.data.len(), |i| self.data[i].norm_sqr()).sqrt()
            }

            pub fn l2_distance(&self, other: &Self) -> f64 {
                assert!(self.same_shape(other), "shape mismatch in l2_distance");
                exec::sum_indexed(self.data.len(), |i| {
                    (self.data[i] - other.data[i]).norm_sqr()
                })
                .sqrt()
            }

            pub fn scale(&mut self, factor: f64) {
                for v in &mut self.data {
                    *v *= factor;
                }
            }

            pub fn all_finite(&self) -> bool {
                self.data
                    .iter()
                    .all(|v| v.re.is_finite() && v.im.is_finite())
            }
        }
    };
}

grid_impl!(ComplexImage);
grid_impl!(KSpace);

impl ComplexImage {
    /// Promote a real-valued image to complex with zero imaginary part.
    pub fn from_real(height: usize, width: usize, data: &[f64]) -> Result<Self> {
        let cdata = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::new(height, width, cdata)
    }

    /// Per-pixel magnitudes.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .unwrap();
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

fn transpose_grid(src: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::ZERO; src.len()];
    // Output is width x height; parallel over output rows.
    exec::for_each_chunk_mut(&mut out, height, |j, row| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = src[i * width + j];
        }
    });
    out
}

/// Unitary 2D DFT core: rows then columns, scaled by `1/sqrt(p)`.
fn dft2(src: &[Complex64], height: usize, width: usize, inverse: bool) -> Vec<Complex64> {
    let mut buf = src.to_vec();
    let row_plan = plan(width, inverse);
    exec::for_each_chunk_mut(&mut buf, width * ROW_BLOCK, |_, chunk| {
        let mut scratch = vec![Complex64::ZERO; row_plan.get_inplace_scratch_len()];
        for row in chunk.chunks_exact_mut(width) {
            row_plan.process_with_scratch(row, &mut scratch);
        }
    });

    let mut tbuf = transpose_grid(&buf, height, width);
    let col_plan = plan(height, inverse);
    exec::for_each_chunk_mut(&mut tbuf, height * ROW_BLOCK, |_, chunk| {
        let mut scratch = vec![Complex64::ZERO; col_plan.get_inplace_scratch_len()];
        for row in chunk.chunks_exact_mut(height) {
            col_plan.process_with_scratch(row, &mut scratch);
        }
    });
    let mut out = transpose_grid(&tbuf, width, height);

    let norm = 1.0 / ((height * width) as f64).sqrt();
    for v in &mut out {
        *v *= norm;
    }
    out
}

fn require_finite(data: &[Complex64], what: &str) -> Result<()> {
    if data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite value in {what}")))
    }
}

/// Unitary forward 2D DFT. Preserves the l2 norm.
pub fn fft2(img: &ComplexImage) -> Result<KSpace> {
    require_finite(&img.data, "fft2 input")?;
    Ok(KSpace {
        height: img.height,
        width: img.width,
        data: dft2(&img.data, img.height, img.width, false),
    })
}

/// Unitary inverse 2D DFT; exact inverse of [`fft2`] up to roundoff.
pub fn ifft2(kspace: &KSpace) -> Result<ComplexImage> {
    require_finite(&kspace.data, "ifft2 input")?;
    Ok(ComplexImage {
        height: kspace.height,
        width: kspace.width,
        data: dft2(&kspace.data, kspace.height, kspace.width, true),
    })
}

/// Swap grid halves so the DC bin moves from `(0, 0)` to `(h/2, w/2)`.
///
/// Output index `i` reads input index `(i + ceil(n/2)) mod n` along each
/// dimension. For even lengths this is its own inverse; for odd lengths the
/// inverse is [`ifftshift2`].
pub fn fftshift2<T: Copy>(data: &[T], height: usize, width: usize) -> Vec<T> {
    shift2(data, height, width, height.div_ceil(2), width.div_ceil(2))
}

/// Inverse of [`fftshift2`] for both even and odd dimensions.
pub fn ifftshift2<T: Copy>(data: &[T], height: usize, width: usize) -> Vec<T> {
    shift2(data, height, width, height / 2, width / 2)
}

fn shift2<T: Copy>(data: &[T], height: usize, width: usize, dr: usize, dc: usize) -> Vec<T> {
    assert_eq!(data.len(), height * width);
    let mut out = Vec::with_capacity(data.len());
    for i in 0..height {
        let si = (i + dr) % height;
        for j in 0..width {
            let sj = (j + dc) % width;
            out.push(data[si * width + sj]);
        }
    }
    out
}

/// Centered-spectrum k-space of an image: `fftshift(fft2(ifftshift(x)))`.
///
/// The DC coefficient of a constant image lands at `(h/2, w/2)` (floor),
/// matching masks that are designed around a centered DC.
pub fn simulate_kspace(img: &ComplexImage) -> Result<KSpace> {
    require_finite(&img.data, "simulate_kspace input")?;
    let shifted = ifftshift2(&img.data, img.height, img.width);
    let spec = dft2(&shifted, img.height, img.width, false);
    Ok(KSpace {
        height: img.height,
        width: img.width,
        data: fftshift2(&spec, img.height, img.width),
    })
}

/// Exact inverse of [`simulate_kspace`]: `fftshift(ifft2(ifftshift(k)))`.
pub fn unsimulate_kspace(kspace: &KSpace) -> Result<ComplexImage> {
    require_finite(&kspace.data, "unsimulate_kspace input")?;
    let shifted = ifftshift2(&kspace.data, kspace.height, kspace.width);
    let img = dft2(&shifted, kspace.height, kspace.width, true);
    Ok(ComplexImage {
        height: kspace.height,
        width: kspace.width,
        data: fftshift2(&img, kspace.height, kspace.width),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_image(height: usize, width: usize, seed: u64) -> ComplexImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..height * width)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        ComplexImage::new(height, width, data).unwrap()
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn constant_image_concentrates_at_dc() {
        let q = 4;
        let c = Complex64::new(0.7, -0.3);
        let img = ComplexImage::new(q, q, vec![c; q * q]).unwrap();
        let k = fft2(&img).unwrap();
        assert!((k.get(0, 0) - c * q as f64).norm() < 1e-12);
        for i in 0..q {
            for j in 0..q {
                if (i, j) != (0, 0) {
                    assert!(k.get(i, j).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        let img = random_image(8, 8, 1);
        let k = fft2(&img).unwrap();
        let back = ifft2(&k).unwrap();
        assert!(rel_err(back.as_slice(), img.as_slice()) < 1e-12);
        assert!((k.l2_norm() - img.l2_norm()).abs() / img.l2_norm() < 1e-12);
    }

    #[test]
    fn simulated_spectrum_centers_dc() {
        for (h, w) in [(4, 4), (5, 6), (7, 7)] {
            let c = Complex64::new(1.0, 0.25);
            let img = ComplexImage::new(h, w, vec![c; h * w]).unwrap();
            let k = simulate_kspace(&img).unwrap();
            let dc = (h / 2, w / 2);
            for i in 0..h {
                for j in 0..w {
                    if (i, j) == dc {
                        assert!((k.get(i, j) - c * ((h * w) as f64).sqrt()).norm() < 1e-12);
                    } else {
                        assert!(k.get(i, j).norm() < 1e-12, "({i},{j}) not zero");
                    }
                }
            }
        }
    }

    #[test]
    fn simulate_roundtrip_preserves_energy() {
        let img = random_image(6, 6, 2);
        let k = simulate_kspace(&img).unwrap();
        assert!((k.l2_norm() - img.l2_norm()).abs() < 1e-12 * img.l2_norm());
        let back = unsimulate_kspace(&k).unwrap();
        assert!(rel_err(back.as_slice(), img.as_slice()) < 1e-12);
    }

    #[test]
    fn rejects_non_finite_input() {
        let mut img = random_image(4, 4, 3);
        img.as_mut_slice()[5] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(fft2(&img), Err(Error::InvalidInput(_))));
        assert!(matches!(simulate_kspace(&img), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn linearity() {
        let u = random_image(8, 8, 4);
        let v = random_image(8, 8, 5);
        let (a, b) = (Complex64::new(1.3, -0.2), Complex64::new(-0.7, 2.1));
        let mixed = ComplexImage::new(
            8,
            8,
            u.as_slice()
                .iter()
                .zip(v.as_slice())
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
        .unwrap();
        let lhs = fft2(&mixed).unwrap();
        let fu = fft2(&u).unwrap();
        let fv = fft2(&v).unwrap();
        let rhs: Vec<Complex64> = fu
            .as_slice()
            .iter()
            .zip(fv.as_slice())
            .map(|(x, y)| a * x + b * y)
            .collect();
        assert!(rel_err(lhs.as_slice(), &rhs) < 1e-12);
    }

    proptest! {
        #[test]
        fn shifts_are_inverse_permutations(h in 1usize..9, w in 1usize..9, seed in 0u64..1000) {
            let img = random_image(h, w, seed);
            let data = img.as_slice();
            let fwd = fftshift2(data, h, w);
            let back = ifftshift2(&fwd, h, w);
            prop_assert_eq!(&back, data);
            let inv = ifftshift2(data, h, w);
            let fwd2 = fftshift2(&inv, h, w);
            prop_assert_eq!(&fwd2, data);
        }
    }
}
