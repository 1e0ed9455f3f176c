//! Closed-form image update for single-coil Cartesian sensing.
//!
//! With unitary transforms and a uniform patch cover, the normal equation of
//! the image subproblem diagonalizes in k-space:
//!
//! ```text
//! Fx(k) = S(k) / (beta + mu)                 off the sampled set
//! Fx(k) = (S(k) + nu*S0(k)) / (beta + nu + mu)   on it
//! ```
//!
//! where `S` is the spectrum of the patch feedback, `S0` the zero-filled
//! data spectrum, and `mu >= 0` the Lagrange multiplier of the energy bound
//! `|x|_2 <= C`. The squared norm of the candidate solution,
//!
//! ```text
//! f(mu) = sum_{off} |S|^2/(beta+mu)^2 + sum_{on} |S+nu*S0|^2/(beta+nu+mu)^2
//! ```
//!
//! is strictly decreasing and convex in `mu`, so the multiplier equation
//! `f(mu) = C^2` has a unique nonnegative root whenever `f(0) > C^2`. The
//! two partition sums do not depend on `mu` and are computed once, which
//! makes every root-finder step O(1).
//!
//! The root finder is Newton's method started at zero, safeguarded by
//! bisection on a bracket grown by doubling; convexity makes plain Newton
//! converge monotonically from below, and the bracket guarantees progress
//! regardless.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{unsimulate_kspace, ComplexImage, KSpace};
use crate::sampling::SamplingMask;

/// Relative tolerance on `|f(mu) - C^2|`.
const ROOT_TOL: f64 = 1e-9;
/// Iteration cap for the safeguarded Newton loop.
const MAX_ROOT_ITERS: usize = 100;

/// Inputs of the image update step.
///
/// `s0` must be zero outside the sampled set (it is the expanded
/// measurement vector); this is checked on construction.
pub struct ImageUpdateInputs<'a> {
    s: &'a KSpace,
    s0: &'a KSpace,
    mask: &'a SamplingMask,
    beta: f64,
    nu: f64,
    norm_bound: f64,
}

impl<'a> ImageUpdateInputs<'a> {
    pub fn new(
        s: &'a KSpace,
        s0: &'a KSpace,
        mask: &'a SamplingMask,
        beta: f64,
        nu: f64,
        norm_bound: f64,
    ) -> Result<Self> {
        if !s.same_shape(s0) || s.height() != mask.height() || s.width() != mask.width() {
            return Err(Error::InvalidInput(
                "spectra and mask must share one grid shape".into(),
            ));
        }
        if beta <= 0.0 || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "beta must be positive (got {beta})"
            )));
        }
        if nu < 0.0 || !nu.is_finite() {
            return Err(Error::InvalidInput(format!(
                "nu must be nonnegative (got {nu})"
            )));
        }
        if norm_bound <= 0.0 || !norm_bound.is_finite() {
            return Err(Error::InvalidInput(format!(
                "energy bound must be positive (got {norm_bound})"
            )));
        }
        if !s.all_finite() || !s0.all_finite() {
            return Err(Error::InvalidInput("non-finite spectrum entries".into()));
        }
        for (v, &m) in s0.as_slice().iter().zip(mask.as_slice()) {
            if !m && *v != Complex64::ZERO {
                return Err(Error::InvalidInput(
                    "data spectrum is nonzero outside the sampled set".into(),
                ));
            }
        }
        Ok(Self {
            s,
            s0,
            mask,
            beta,
            nu,
            norm_bound,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// The two mu-independent partition sums:
    /// `(sum_off |S|^2, sum_on |S + nu*S0|^2)`.
    fn omega_sums(&self) -> (f64, f64) {
        let s = self.s.as_slice();
        let s0 = self.s0.as_slice();
        let mask = self.mask.as_slice();
        let nu = self.nu;
        let off = exec::sum_indexed(s.len(), |i| if mask[i] { 0.0 } else { s[i].norm_sqr() });
        let on = exec::sum_indexed(s.len(), |i| {
            if mask[i] {
                (s[i] + nu * s0[i]).norm_sqr()
            } else {
                0.0
            }
        });
        (off, on)
    }
}

fn f_of(mu: f64, beta: f64, nu: f64, off: f64, on: f64) -> f64 {
    off / ((beta + mu) * (beta + mu)) + on / ((beta + nu + mu) * (beta + nu + mu))
}

fn f_prime(mu: f64, beta: f64, nu: f64, off: f64, on: f64) -> f64 {
    -2.0 * off / (beta + mu).powi(3) - 2.0 * on / (beta + nu + mu).powi(3)
}

/// `f(mu) = |x_mu|_2^2`, the squared norm of the candidate image at
/// multiplier `mu`.
pub fn multiplier_f(mu: f64, inputs: &ImageUpdateInputs) -> f64 {
    let (off, on) = inputs.omega_sums();
    f_of(mu, inputs.beta, inputs.nu, off, on)
}

fn solve_multiplier(beta: f64, nu: f64, off: f64, on: f64, c2: f64) -> f64 {
    if f_of(0.0, beta, nu, off, on) <= c2 {
        return 0.0;
    }
    // Bracket: double from beta until f drops below C^2.
    let mut hi = beta;
    while f_of(hi, beta, nu, off, on) >= c2 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    let mut mu = 0.0;
    for _ in 0..MAX_ROOT_ITERS {
        let g = f_of(mu, beta, nu, off, on) - c2;
        if g.abs() <= ROOT_TOL * c2 {
            return mu;
        }
        if g > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let newton = mu - g / f_prime(mu, beta, nu, off, on);
        mu = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    mu
}

/// Exact minimizer of the image subproblem: pointwise k-space solution with
/// the smallest multiplier satisfying the energy bound. Returns the image
/// and the multiplier.
pub fn solve_image(inputs: &ImageUpdateInputs) -> Result<(ComplexImage, f64)> {
    let (off, on) = inputs.omega_sums();
    let (beta, nu) = (inputs.beta, inputs.nu);
    let c2 = inputs.norm_bound * inputs.norm_bound;
    let mu = solve_multiplier(beta, nu, off, on, c2);

    let s = inputs.s.as_slice();
    let s0 = inputs.s0.as_slice();
    let mask = inputs.mask.as_slice();
    let mut spectrum = KSpace::zeros(inputs.s.height(), inputs.s.width());
    let out = spectrum.as_mut_slice();
    let width = inputs.s.width();
    exec::for_each_chunk_mut(out, width, |row, chunk| {
        let base = row * width;
        for (i, v) in chunk.iter_mut().enumerate() {
            let idx = base + i;
            *v = if mask[idx] {
                (s[idx] + nu * s0[idx]) / (beta + nu + mu)
            } else {
                s[idx] / (beta + mu)
            };
        }
    });

    let image = unsimulate_kspace(&spectrum)?;
    Ok((image, mu))
}
