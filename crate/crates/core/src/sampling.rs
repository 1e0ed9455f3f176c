//! k-space sampling: variable-density mask generation, the sensing operator
//! it induces, measurement simulation with optional complex Gaussian noise,
//! and the zero-filled reconstruction.
//!
//! Masks live in the centered-spectrum convention (DC at `(h/2, w/2)`), the
//! same convention [`crate::grid::simulate_kspace`] produces, so a mask can
//! be applied to a simulated spectrum by direct pointwise selection.
//!
//! The sensing operator is `A x = restrict_mask(simulate_kspace(x))` and its
//! adjoint is `A^H y = unsimulate_kspace(embed(y))`; `A A^H = I` on the
//! sampled coordinates because the spectrum transform is unitary.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{simulate_kspace, unsimulate_kspace, ComplexImage, KSpace};

/// Variable-density exponent: sampling weight `(1 - d/dmax)^q`.
const DENSITY_POWER: f64 = 4.0;
/// Fraction of lines (Cartesian) or samples (2D) always taken from the
/// center of k-space.
const CENTRAL_FRACTION: f64 = 0.04;

/// The sampled subset of k-space, as a boolean grid in the centered
/// convention. `true` marks a sampled location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
    seed: Option<u64>,
}

impl SamplingMask {
    /// Wrap an explicit boolean grid. An empty mask is allowed here (it is
    /// a degenerate but well-defined input for the image update); the
    /// generators and the file loader always produce non-empty masks.
    pub fn from_grid(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "mask data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
            seed: None,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn is_sampled(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    /// `|Omega|`.
    pub fn num_sampled(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Achieved undersampling factor `p / |Omega|`.
    pub fn undersampling_factor(&self) -> f64 {
        (self.height * self.width) as f64 / self.num_sampled() as f64
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Cartesian mask: full k-space rows (phase encodes), `ceil(h / uf)` of
/// them, density decaying with distance from the center row and a fixed
/// central band always included.
pub fn make_cartesian_mask(
    height: usize,
    width: usize,
    undersampling: f64,
    seed: u64,
) -> Result<SamplingMask> {
    check_mask_request(height, width, undersampling)?;
    let lines = (height as f64 / undersampling).ceil() as usize;
    if lines > height {
        return Err(Error::Config(format!(
            "requested {lines} phase encodes but the grid has {height} rows"
        )));
    }
    let lines = lines.max(1);
    let center = height / 2;
    let dist = |row: usize| (row as f64 - center as f64).abs();

    let mut order: Vec<usize> = (0..height).collect();
    order.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap().then(a.cmp(&b)));
    let central = ((CENTRAL_FRACTION * height as f64).round() as usize).clamp(1, lines);
    let mut chosen: Vec<usize> = order[..central].to_vec();

    let rest: Vec<usize> = order[central..].to_vec();
    let dmax = rest.iter().map(|&r| dist(r)).fold(0.0, f64::max);
    let weights: Vec<f64> = rest
        .iter()
        .map(|&r| (1.0 - dist(r) / (dmax + 1.0)).powf(DENSITY_POWER))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pick in weighted_sample(&weights, lines - central, &mut rng) {
        chosen.push(rest[pick]);
    }

    let mut data = vec![false; height * width];
    for row in chosen {
        data[row * width..(row + 1) * width].fill(true);
    }
    Ok(SamplingMask {
        height,
        width,
        data,
        seed: Some(seed),
    })
}

/// 2D variable-density random mask: exactly `ceil(p / uf)` individual
/// samples, center-weighted, with a fully sampled central disk.
pub fn make_random2d_mask(
    height: usize,
    width: usize,
    undersampling: f64,
    seed: u64,
) -> Result<SamplingMask> {
    check_mask_request(height, width, undersampling)?;
    let p = height * width;
    let count = ((p as f64 / undersampling).ceil() as usize).clamp(1, p);
    let (cr, cc) = (height / 2, width / 2);
    let dist = |idx: usize| {
        let (r, c) = (idx / width, idx % width);
        let (dr, dc) = (r as f64 - cr as f64, c as f64 - cc as f64);
        (dr * dr + dc * dc).sqrt()
    };

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap().then(a.cmp(&b)));
    let forced = ((CENTRAL_FRACTION * count as f64).round() as usize).clamp(1, count);
    let mut chosen: Vec<usize> = order[..forced].to_vec();

    let rest = &order[forced..];
    let dmax = dist(order[p - 1]);
    let weights: Vec<f64> = rest
        .iter()
        .map(|&i| (1.0 - dist(i) / (dmax + 1.0)).powf(DENSITY_POWER))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pick in weighted_sample(&weights, count - forced, &mut rng) {
        chosen.push(rest[pick]);
    }

    let mut data = vec![false; p];
    for idx in chosen {
        data[idx] = true;
    }
    Ok(SamplingMask {
        height,
        width,
        data,
        seed: Some(seed),
    })
}

fn check_mask_request(height: usize, width: usize, undersampling: f64) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Config("mask dimensions must be positive".into()));
    }
    if undersampling <= 1.0 || !undersampling.is_finite() {
        return Err(Error::Config(format!(
            "undersampling factor must exceed 1 (got {undersampling})"
        )));
    }
    Ok(())
}

/// Weighted sampling without replacement (reservoir by exponential keys):
/// draw `u^(1/w)` per item and keep the `need` largest. Deterministic given
/// the RNG state; ties break to the lower index.
fn weighted_sample(weights: &[f64], need: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    assert!(
        need <= weights.len(),
        "cannot draw {need} from {}",
        weights.len()
    );
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random();
            (u.powf(1.0 / w.max(f64::MIN_POSITIVE)), i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    keyed[..need].iter().map(|&(_, i)| i).collect()
}

/// Undersampled k-space measurements: the values of the simulated spectrum
/// at the sampled locations, in row-major order over the mask grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    height: usize,
    width: usize,
    samples: Vec<Complex64>,
}

impl Measurements {
    pub fn from_samples(height: usize, width: usize, samples: Vec<Complex64>) -> Self {
        Self {
            height,
            width,
            samples,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Noiseless sensing `y = A x`: simulate the centered spectrum and keep the
/// sampled locations.
pub fn apply_sensing(img: &ComplexImage, mask: &SamplingMask) -> Result<Measurements> {
    if img.height() != mask.height || img.width() != mask.width {
        return Err(Error::InvalidInput(format!(
            "image {}x{} does not match mask {}x{}",
            img.height(),
            img.width(),
            mask.height,
            mask.width
        )));
    }
    let spectrum = simulate_kspace(img)?;
    let samples = spectrum
        .as_slice()
        .iter()
        .zip(&mask.data)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    Ok(Measurements {
        height: mask.height,
        width: mask.width,
        samples,
    })
}

/// Simulate measurements, adding i.i.d. complex Gaussian noise of standard
/// deviation `noise_sigma` per real component when `noise_sigma > 0`.
///
/// The noise stream is a separate stream of the seeded generator, so masks
/// and noise drawn from the same seed stay independent and reproducible.
pub fn measure(
    img: &ComplexImage,
    mask: &SamplingMask,
    noise_sigma: f64,
    seed: u64,
) -> Result<Measurements> {
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(Error::Config(format!("invalid noise sigma {noise_sigma}")));
    }
    let mut meas = apply_sensing(img, mask)?;
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        for v in &mut meas.samples {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(meas)
}

/// Measurements expanded to the full grid with zeros at unsampled locations
/// (the data spectrum `S0 = F Fu^H y`, centered convention).
pub fn s0_spectrum(meas: &Measurements, mask: &SamplingMask) -> Result<KSpace> {
    if meas.height != mask.height || meas.width != mask.width {
        return Err(Error::InvalidInput(
            "measurement/mask shape mismatch".into(),
        ));
    }
    if meas.len() != mask.num_sampled() {
        return Err(Error::InvalidInput(format!(
            "{} measurements for {} sampled locations",
            meas.len(),
            mask.num_sampled()
        )));
    }
    let mut s0 = KSpace::zeros(mask.height, mask.width);
    let out = s0.as_mut_slice();
    let mut next = 0;
    for (i, &m) in mask.data.iter().enumerate() {
        if m {
            out[i] = meas.samples[next];
            next += 1;
        }
    }
    Ok(s0)
}

/// Zero-filled reconstruction `A^H y`: inverse transform of [`s0_spectrum`].
pub fn zero_fill(meas: &Measurements, mask: &SamplingMask) -> Result<ComplexImage> {
    let s0 = s0_spectrum(meas, mask)?;
    unsimulate_kspace(&s0)
}

/// Recover the measurement vector from a stored data spectrum: `S0` equals
/// `y` on the sampled set, so restriction is lossless.
pub fn measurements_from_s0(s0: &KSpace, mask: &SamplingMask) -> Result<Measurements> {
    if s0.height() != mask.height || s0.width() != mask.width {
        return Err(Error::InvalidInput("spectrum/mask shape mismatch".into()));
    }
    let samples = s0
        .as_slice()
        .iter()
        .zip(&mask.data)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    Ok(Measurements {
        height: mask.height,
        width: mask.width,
        samples,
    })
}
