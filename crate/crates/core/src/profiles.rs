//! Initial data and probe fields.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::GridRef;

/// `A·exp(−(x − x₀)²/(2w²))`.
pub fn gaussian(grid: &GridRef, amplitude: f64, width: f64, center: f64) -> Result<ComplexField> {
    packet(grid, amplitude, width, center, 0.0)
}

/// Gaussian modulated by `e^{i k₀ x}`.
pub fn packet(
    grid: &GridRef,
    amplitude: f64,
    width: f64,
    center: f64,
    k0: f64,
) -> Result<ComplexField> {
    if !grid.is_periodic() {
        return Err(Error::Unsupported(
            "spatial profiles need a periodic grid".into(),
        ));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(
            "packet width must be positive".into(),
        ));
    }
    ComplexField::from_fn(grid.clone(), |x| {
        let y = x - center;
        Complex64::from_polar(amplitude * (-(y * y) / (2.0 * width * width)).exp(), k0 * x)
    })
}

/// Klein–Gordon data `(u, u_t) = (gaussian, 0)`.
pub fn gaussian_wave(
    grid: &GridRef,
    amplitude: f64,
    width: f64,
    center: f64,
) -> Result<ComplexField> {
    let u = gaussian(grid, amplitude, width, center)?;
    ComplexField::pair(&u, &ComplexField::zeros(grid.clone(), 1))
}

/// Smooth random field: a sum of `modes` Gaussian bumps with random
/// centres in the middle half of the box, random complex weights and
/// widths in `[1, 2]`, scaled to `‖·‖_{L²} = norm`.
pub fn random_smooth(grid: &GridRef, seed: u64, modes: usize, norm: f64) -> Result<ComplexField> {
    if !grid.is_periodic() {
        return Err(Error::Unsupported(
            "spatial profiles need a periodic grid".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.25 * grid.length().unwrap_or(1.0);
    let bumps: Vec<(f64, f64, Complex64)> = (0..modes.max(1))
        .map(|_| {
            let c = rng.gen_range(-half..half);
            let w = rng.gen_range(1.0..2.0);
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (c, w, z)
        })
        .collect();
    let f = ComplexField::from_fn(grid.clone(), |x| {
        bumps
            .iter()
            .map(|&(c, w, z)| z * (-(x - c) * (x - c) / (2.0 * w * w)).exp())
            .sum()
    })?;
    normalised(f, norm)
}

/// Random real pair `(u, u_t)` for the Klein–Gordon phase space.
pub fn random_smooth_wave(
    grid: &GridRef,
    seed: u64,
    modes: usize,
    norm: f64,
) -> Result<ComplexField> {
    let a = random_smooth(grid, seed, modes, 1.0)?.map(|z| Complex64::new(z.re, 0.0));
    let b = random_smooth(grid, seed ^ 0x9e37_79b9_7f4a_7c15, modes, 1.0)?
        .map(|z| Complex64::new(z.re, 0.0));
    normalised(ComplexField::pair(&a, &b)?, norm)
}

/// Toy state with the given components.
pub fn toy_vector(grid: &GridRef, values: &[Complex64]) -> Result<ComplexField> {
    if grid.is_periodic() {
        return Err(Error::Unsupported("toy vectors need a toy grid".into()));
    }
    ComplexField::new(grid.clone(), 1, values.to_vec())
}

/// Toy state with independent uniform components, scaled to Euclidean norm `norm`.
pub fn random_toy(grid: &GridRef, seed: u64, norm: f64) -> Result<ComplexField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<Complex64> = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    normalised(toy_vector(grid, &values)?, norm)
}

fn normalised(f: ComplexField, norm: f64) -> Result<ComplexField> {
    let n = f.l2_norm();
    if n == 0.0 {
        return Err(Error::InvalidParameter(
            "cannot normalise a zero field".into(),
        ));
    }
    Ok(f.scaled(norm / n))
}
