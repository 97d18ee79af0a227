//! Linear groups `U(t)`: free Schrödinger, Klein–Gordon pair evolution and
//! the toy diagonal group, all applied as exact Fourier (or diagonal)
//! multipliers.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::GridRef;

#[derive(Debug, Clone, PartialEq)]
pub enum PropagatorKind {
    /// `i∂_t u + ½Δu = 0`, multiplier `exp(-i t ξ²/2)`.
    SchrodingerFree,
    /// Pair evolution of `∂_t²u − Δu + m²u = 0` on `(u, ∂_t u)`; `mass = 0`
    /// gives the wave group.
    KleinGordon { mass: f64 },
    /// `U(t) = diag(exp(i t α_m))`.
    ToyDiagonal { frequencies: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct PropagatorSpec {
    kind: PropagatorKind,
    grid: GridRef,
}

impl PropagatorSpec {
    pub fn new(kind: PropagatorKind, grid: GridRef) -> Result<Self> {
        match &kind {
            PropagatorKind::SchrodingerFree => {
                if !grid.is_periodic() {
                    return Err(Error::Unsupported(
                        "Schrödinger group needs a periodic grid".into(),
                    ));
                }
            }
            PropagatorKind::KleinGordon { mass } => {
                if !grid.is_periodic() {
                    return Err(Error::Unsupported(
                        "Klein–Gordon group needs a periodic grid".into(),
                    ));
                }
                if !(mass.is_finite() && *mass >= 0.0) {
                    return Err(Error::InvalidParameter(format!("mass {mass} must be >= 0")));
                }
            }
            PropagatorKind::ToyDiagonal { frequencies } => {
                if grid.is_periodic() || frequencies.len() != grid.len() {
                    return Err(Error::InvalidParameter(format!(
                        "toy group needs {} frequencies on a toy grid",
                        grid.len()
                    )));
                }
                if !frequencies.iter().all(|a| a.is_finite()) {
                    return Err(Error::NonFinite("toy frequencies"));
                }
            }
        }
        Ok(Self { kind, grid })
    }

    pub fn schrodinger(grid: GridRef) -> Result<Self> {
        Self::new(PropagatorKind::SchrodingerFree, grid)
    }

    pub fn klein_gordon(grid: GridRef, mass: f64) -> Result<Self> {
        Self::new(PropagatorKind::KleinGordon { mass }, grid)
    }

    /// Toy group with incommensurate frequencies `1, √2, √3, √5, √7, ...`.
    pub fn toy_default(grid: GridRef) -> Result<Self> {
        let frequencies = default_toy_frequencies(grid.len());
        Self::new(PropagatorKind::ToyDiagonal { frequencies }, grid)
    }

    pub fn kind(&self) -> &PropagatorKind {
        &self.kind
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    /// Number of field components the group acts on.
    pub fn components(&self) -> usize {
        match self.kind {
            PropagatorKind::KleinGordon { .. } => 2,
            _ => 1,
        }
    }

    pub fn is_schrodinger(&self) -> bool {
        matches!(self.kind, PropagatorKind::SchrodingerFree)
    }

    pub(crate) fn check_field(&self, f: &ComplexField) -> Result<()> {
        if !(alloc::sync::Arc::ptr_eq(f.grid(), &self.grid) || **f.grid() == *self.grid) {
            return Err(Error::GridMismatch);
        }
        f.expect_components(self.components())
    }

    /// Multiplier table for a fixed time `t`.
    pub fn multiplier(&self, t: f64) -> Multiplier {
        let table = match &self.kind {
            PropagatorKind::SchrodingerFree => MultiplierTable::Scalar(
                self.grid
                    .wavenumbers()
                    .iter()
                    .map(|&xi| Complex64::from_polar(1.0, -0.5 * t * xi * xi))
                    .collect(),
            ),
            PropagatorKind::KleinGordon { mass } => MultiplierTable::Pair(
                self.grid
                    .wavenumbers()
                    .iter()
                    .map(|&xi| kg_matrix(mass * mass + xi * xi, t))
                    .collect(),
            ),
            PropagatorKind::ToyDiagonal { frequencies } => MultiplierTable::Diagonal(
                frequencies
                    .iter()
                    .map(|&a| Complex64::from_polar(1.0, t * a))
                    .collect(),
            ),
        };
        Multiplier {
            grid: self.grid.clone(),
            table,
        }
    }

    /// `U(t) f`.
    pub fn apply_u(&self, t: f64, f: &ComplexField) -> Result<ComplexField> {
        self.check_field(f)?;
        f.ensure_finite("apply_u input")?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        let mut out = f.clone();
        self.multiplier(t).apply(out.values_mut());
        Ok(out)
    }

    /// Galilean operator `J(t) f = x f + i t ∇f` (Schrödinger only).
    pub fn apply_j(&self, t: f64, f: &ComplexField) -> Result<ComplexField> {
        if !self.is_schrodinger() {
            return Err(Error::Unsupported(
                "J(t) is defined for the Schrödinger group only".into(),
            ));
        }
        self.check_field(f)?;
        f.ensure_finite("apply_j input")?;
        let grad = self.grid.gradient(f.values())?;
        let values = f
            .values()
            .iter()
            .zip(&grad)
            .zip(self.grid.coords())
            .map(|((&v, &g), &x)| v * x + Complex64::new(0.0, t) * g)
            .collect();
        Ok(ComplexField::from_parts_unchecked(
            self.grid.clone(),
            1,
            values,
        ))
    }
}

pub fn default_toy_frequencies(dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    out.push(1.0);
    let mut candidate = 2u32;
    while out.len() < dim {
        if (2..candidate)
            .take_while(|d| d * d <= candidate)
            .all(|d| !candidate.is_multiple_of(d))
        {
            out.push((candidate as f64).sqrt());
        }
        candidate += 1;
    }
    out.truncate(dim);
    out
}

// [[cos Λt, Λ⁻¹ sin Λt], [−Λ sin Λt, cos Λt]] with Λ² = `lambda_sq`
fn kg_matrix(lambda_sq: f64, t: f64) -> [f64; 4] {
    let lam = lambda_sq.sqrt();
    let (s, c) = (lam * t).sin_cos();
    let sinc = if lam == 0.0 { t } else { s / lam };
    [c, sinc, -lam * s, c]
}

#[derive(Debug, Clone)]
enum MultiplierTable {
    Scalar(Vec<Complex64>),
    Pair(Vec<[f64; 4]>),
    Diagonal(Vec<Complex64>),
}

/// Precomputed `U(t)` for one `t`; read-only once built.
#[derive(Debug, Clone)]
pub struct Multiplier {
    grid: GridRef,
    table: MultiplierTable,
}

impl Multiplier {
    /// Apply in place to raw component-major values.
    pub fn apply(&self, values: &mut [Complex64]) {
        match &self.table {
            MultiplierTable::Diagonal(d) => {
                for (v, m) in values.iter_mut().zip(d) {
                    *v *= m;
                }
            }
            MultiplierTable::Scalar(d) => {
                let fft = self.grid.fft().expect("periodic grid");
                fft.forward(values);
                for (v, m) in values.iter_mut().zip(d) {
                    *v *= m;
                }
                fft.inverse(values);
            }
            MultiplierTable::Pair(mats) => {
                let fft = self.grid.fft().expect("periodic grid");
                let n = self.grid.len();
                let (u, v) = values.split_at_mut(n);
                fft.forward(u);
                fft.forward(v);
                for ((a, b), m) in u.iter_mut().zip(v.iter_mut()).zip(mats) {
                    let (ua, vb) = (*a, *b);
                    *a = ua * m[0] + vb * m[1];
                    *b = ua * m[2] + vb * m[3];
                }
                fft.inverse(u);
                fft.inverse(v);
            }
        }
    }

    pub fn apply_field(&self, f: &ComplexField) -> ComplexField {
        let mut out = f.clone();
        self.apply(out.values_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;
    use core::f64::consts::PI;

    fn gaussian(grid: &GridRef, width: f64) -> ComplexField {
        ComplexField::from_fn(grid.clone(), |x| {
            Complex64::new(
                (-x * x / (2.0 * width * width)).exp(),
                0.3 * x.sin() * (-x * x).exp(),
            )
        })
        .unwrap()
    }

    #[test]
    fn identity_at_zero_time() {
        let g = SpatialGrid::periodic(20.0, 64).unwrap();
        let p = PropagatorSpec::schrodinger(g.clone()).unwrap();
        let f = gaussian(&g, 1.0);
        assert_eq!(p.apply_u(0.0, &f).unwrap(), f);
    }

    #[test]
    fn plane_wave_is_eigenfunction() {
        let g = SpatialGrid::periodic(20.0, 64).unwrap();
        let p = PropagatorSpec::schrodinger(g.clone()).unwrap();
        let xi = g.wavenumbers()[5];
        let f = ComplexField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, xi * x)).unwrap();
        let t = 0.73;
        let out = p.apply_u(t, &f).unwrap();
        let expect = f.scaled_complex(Complex64::from_polar(1.0, -0.5 * t * xi * xi));
        assert!(out.max_rel_diff(&expect) < 1e-12);
    }

    #[test]
    fn klein_gordon_single_mode_period() {
        let g = SpatialGrid::periodic(2.0 * PI * 4.0, 32).unwrap();
        let p = PropagatorSpec::klein_gordon(g.clone(), 1.0).unwrap();
        let xi = g.wavenumbers()[3];
        let lam = (1.0 + xi * xi).sqrt();
        let u = ComplexField::from_fn(g.clone(), |x| Complex64::new((xi * x).cos(), 0.0)).unwrap();
        let f = ComplexField::pair(&u, &ComplexField::zeros(g.clone(), 1)).unwrap();
        let out = p.apply_u(2.0 * PI / lam, &f).unwrap();
        assert!(out.max_rel_diff(&f) < 1e-12);
        // quarter period: (cos, 0) -> (0, -Λ cos)
        let q = p.apply_u(0.5 * PI / lam, &f).unwrap();
        for (a, b) in q.component(1).iter().zip(u.values()) {
            assert!((a + b * lam).norm() < 1e-12);
        }
    }

    #[test]
    fn wave_zero_mode_limit() {
        let g = SpatialGrid::periodic(10.0, 8).unwrap();
        let p = PropagatorSpec::klein_gordon(g.clone(), 0.0).unwrap();
        let one = ComplexField::from_fn(g.clone(), |_| Complex64::new(1.0, 0.0)).unwrap();
        let f = ComplexField::pair(&ComplexField::zeros(g.clone(), 1), &one).unwrap();
        let out = p.apply_u(2.5, &f).unwrap();
        for z in out.component(0) {
            assert!((z - Complex64::new(2.5, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn group_law_and_inverse() {
        let g = SpatialGrid::periodic(30.0, 128).unwrap();
        let f = gaussian(&g, 1.5);
        let kg = ComplexField::pair(&f, &f.scaled(0.5)).unwrap();
        for (p, f) in [
            (PropagatorSpec::schrodinger(g.clone()).unwrap(), f.clone()),
            (PropagatorSpec::klein_gordon(g.clone(), 1.0).unwrap(), kg),
        ] {
            let a = p.apply_u(0.4, &p.apply_u(1.1, &f).unwrap()).unwrap();
            let b = p.apply_u(1.5, &f).unwrap();
            assert!(a.max_rel_diff(&b) < 1e-12);
            let back = p.apply_u(-1.5, &b).unwrap();
            assert!(back.max_rel_diff(&f) < 1e-12);
        }
    }

    #[test]
    fn j_at_zero_is_position() {
        let g = SpatialGrid::periodic(20.0, 64).unwrap();
        let p = PropagatorSpec::schrodinger(g.clone()).unwrap();
        let f = gaussian(&g, 1.0);
        let j = p.apply_j(0.0, &f).unwrap();
        for ((a, b), x) in j.values().iter().zip(f.values()).zip(g.coords()) {
            assert!((a - b * x).norm() < 1e-15);
        }
        let z = ComplexField::zeros(g.clone(), 1);
        assert!(p.apply_j(1.0, &z).unwrap().is_zero());
        let toy = PropagatorSpec::toy_default(SpatialGrid::toy(3).unwrap()).unwrap();
        assert!(toy
            .apply_j(0.0, &ComplexField::zeros(toy.grid().clone(), 1))
            .is_err());
    }

    #[test]
    fn default_frequencies() {
        let a = default_toy_frequencies(4);
        assert_eq!(a[0], 1.0);
        assert!((a[3] - 5f64.sqrt()).abs() < 1e-15);
    }
}
