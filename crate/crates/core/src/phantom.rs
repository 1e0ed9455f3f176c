//! Shepp-Logan test phantom (the low-contrast "modified" intensity variant,
//! magnitudes in [0, 1]).

use crate::grid::ComplexImage;

/// (intensity, semi-axis a, semi-axis b, x center, y center, angle degrees)
const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Rasterize the phantom on an `height x width` grid over `[-1, 1]^2`.
pub fn shepp_logan(height: usize, width: usize) -> ComplexImage {
    let mut values = vec![0.0f64; height * width];
    for i in 0..height {
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / height as f64;
        for j in 0..width {
            let x = 2.0 * (j as f64 + 0.5) / width as f64 - 1.0;
            let mut v = 0.0;
            for &(val, a, b, x0, y0, deg) in &ELLIPSES {
                let phi = deg.to_radians();
                let (dx, dy) = (x - x0, y - y0);
                let xr = dx * phi.cos() + dy * phi.sin();
                let yr = -dx * phi.sin() + dy * phi.cos();
                if (xr / a).powi(2) + (yr / b).powi(2) <= 1.0 {
                    v += val;
                }
            }
            values[i * width + j] = v.max(0.0);
        }
    }
    ComplexImage::from_real(height, width, &values).expect("dimensions are positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magnitudes_stay_in_unit_range() {
        let img = shepp_logan(64, 64);
        let mags = img.magnitudes();
        assert!(mags.iter().all(|&m| (0.0..=1.0).contains(&m)));
        let peak = mags.iter().cloned().fold(0.0, f64::max);
        assert!(peak > 0.9, "phantom peak {peak} unexpectedly low");
    }

    #[test]
    fn has_interior_structure() {
        let img = shepp_logan(64, 64);
        // Center of the head is dimmer than the skull ring.
        let center = img.get(32, 32).re;
        assert!(center > 0.0 && center < 0.5);
    }
}
