//! Polynomial nonlinearities `Φ` and their exact multilinear pieces.
//!
//! For a background `ū` and perturbation `w`, `ε ↦ Φ(ū + ε w)` is a real
//! polynomial of degree `p` in `ε`. Sampling it at `p + 1` nodes and
//! applying a precomputed inverse Vandermonde matrix yields every
//! homogeneous piece `Φ_j(ū; w)` at once, for every kind of `Φ`, including
//! the conjugate-linear terms of gauge-invariant powers. Mixed arguments are
//! recovered by real polarisation, since the pieces are only `ℝ`-multilinear.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::ComplexField;

/// Time profile `c(t)` multiplying the toy nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingProfile {
    Constant,
    /// `c(t) = (1 + t²)⁻¹`, integrable on the line.
    InverseQuadratic,
}

impl CouplingProfile {
    pub fn value(self, t: f64) -> f64 {
        match self {
            CouplingProfile::Constant => 1.0,
            CouplingProfile::InverseQuadratic => 1.0 / (1.0 + t * t),
        }
    }

    /// `∫_a^b c(t) dt`.
    pub fn integral(self, a: f64, b: f64) -> f64 {
        match self {
            CouplingProfile::Constant => b - a,
            CouplingProfile::InverseQuadratic => b.atan() - a.atan(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    /// `Φ(u) = −iλ|u|^{p−1}u` (Schrödinger).
    GaugePower,
    /// `Φ(u, ∂_t u) = (0, −λ u^p)` on Klein–Gordon pairs.
    RealOddPower,
    /// `Φ(u)_m = −iλ c(t)|u_m|^{p−1}u_m` on `ℂ^d`.
    ToyGaugePower,
    /// `Φ(u)_m = −iλ c(t) (Σ_k K_mk |u_k|²) u_m`, `K` symmetric `d × d`
    /// stored row-major; cubic only.
    ToyConvolutionCubic { kernel: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    kind: NonlinearityKind,
    p: u32,
    lambda: f64,
    coupling: CouplingProfile,
    nodes: Vec<f64>,
    // row j holds the weights producing the ε^j coefficient
    inverse_vandermonde: Vec<f64>,
}

impl NonlinearitySpec {
    pub fn new(kind: NonlinearityKind, p: u32, lambda: f64) -> Result<Self> {
        if p < 3 || p.is_multiple_of(2) {
            return Err(Error::EvenPower(p));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coupling λ = {lambda} must be finite"
            )));
        }
        let coupling = match kind {
            NonlinearityKind::ToyGaugePower | NonlinearityKind::ToyConvolutionCubic { .. } => {
                CouplingProfile::InverseQuadratic
            }
            _ => CouplingProfile::Constant,
        };
        if let NonlinearityKind::ToyConvolutionCubic { kernel } = &kind {
            if p != 3 {
                return Err(Error::InvalidParameter(
                    "the convolution toy nonlinearity is cubic".into(),
                ));
            }
            let d = (kernel.len() as f64).sqrt().round() as usize;
            if d * d != kernel.len() || d == 0 {
                return Err(Error::InvalidParameter(
                    "convolution kernel must be square".into(),
                ));
            }
            for a in 0..d {
                for b in 0..d {
                    if kernel[a * d + b] != kernel[b * d + a] || !kernel[a * d + b].is_finite() {
                        return Err(Error::InvalidParameter(
                            "convolution kernel must be symmetric".into(),
                        ));
                    }
                }
            }
        }
        let nodes = interpolation_nodes(p);
        let inverse_vandermonde = invert_vandermonde(&nodes);
        Ok(Self {
            kind,
            p,
            lambda,
            coupling,
            nodes,
            inverse_vandermonde,
        })
    }

    pub fn gauge_power(p: u32, lambda: f64) -> Result<Self> {
        Self::new(NonlinearityKind::GaugePower, p, lambda)
    }

    pub fn real_odd_power(p: u32, lambda: f64) -> Result<Self> {
        Self::new(NonlinearityKind::RealOddPower, p, lambda)
    }

    pub fn toy_gauge_power(p: u32, lambda: f64) -> Result<Self> {
        Self::new(NonlinearityKind::ToyGaugePower, p, lambda)
    }

    pub fn toy_convolution_cubic(kernel: Vec<f64>, lambda: f64) -> Result<Self> {
        Self::new(NonlinearityKind::ToyConvolutionCubic { kernel }, 3, lambda)
    }

    /// Replace the coupling profile (toy kinds only).
    pub fn with_coupling(mut self, coupling: CouplingProfile) -> Result<Self> {
        if !self.is_toy() {
            return Err(Error::Unsupported(
                "time-dependent coupling is reserved for toy kinds".into(),
            ));
        }
        self.coupling = coupling;
        Ok(self)
    }

    /// Same shape with a different `λ`.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coupling(&self) -> CouplingProfile {
        self.coupling
    }

    pub fn is_toy(&self) -> bool {
        matches!(
            self.kind,
            NonlinearityKind::ToyGaugePower | NonlinearityKind::ToyConvolutionCubic { .. }
        )
    }

    /// Gauge-invariant kinds, whose nonlinear substep is an exact phase.
    pub fn is_gauge_power(&self) -> bool {
        matches!(
            self.kind,
            NonlinearityKind::GaugePower | NonlinearityKind::ToyGaugePower
        )
    }

    pub fn components(&self) -> usize {
        match self.kind {
            NonlinearityKind::RealOddPower => 2,
            _ => 1,
        }
    }

    pub(crate) fn check_field(&self, f: &ComplexField) -> Result<()> {
        f.expect_components(self.components())?;
        let toy_grid = !f.grid().is_periodic();
        if toy_grid != self.is_toy() {
            return Err(Error::Unsupported(format!(
                "{:?} nonlinearity on a {} grid",
                self.kind,
                if toy_grid { "toy" } else { "periodic" }
            )));
        }
        if let NonlinearityKind::ToyConvolutionCubic { kernel } = &self.kind {
            if kernel.len() != f.grid().len() * f.grid().len() {
                return Err(Error::InvalidParameter(
                    "kernel size does not match toy dimension".into(),
                ));
            }
        }
        Ok(())
    }

    /// `Φ(t, u)`.
    pub fn phi(&self, t: f64, u: &ComplexField) -> Result<ComplexField> {
        self.check_field(u)?;
        u.ensure_finite("phi input")?;
        let mut out = vec![Complex64::new(0.0, 0.0); u.values().len()];
        self.phi_raw(t, u.grid().len(), u.values(), &mut out);
        Ok(ComplexField::from_parts_unchecked(
            u.grid().clone(),
            u.components(),
            out,
        ))
    }

    /// Pointwise evaluation on raw component-major values.
    pub(crate) fn phi_raw(&self, t: f64, sites: usize, u: &[Complex64], out: &mut [Complex64]) {
        let half = ((self.p - 1) / 2) as i32;
        let minus_i_lambda = Complex64::new(0.0, -self.lambda * self.coupling.value(t));
        match &self.kind {
            NonlinearityKind::GaugePower | NonlinearityKind::ToyGaugePower => {
                for (o, &z) in out.iter_mut().zip(u) {
                    *o = minus_i_lambda * z * z.norm_sqr().powi(half);
                }
            }
            NonlinearityKind::RealOddPower => {
                let (lo, hi) = out.split_at_mut(sites);
                for z in lo.iter_mut() {
                    *z = Complex64::new(0.0, 0.0);
                }
                for (o, &z) in hi.iter_mut().zip(&u[..sites]) {
                    *o = z.powi(self.p as i32) * (-self.lambda);
                }
            }
            NonlinearityKind::ToyConvolutionCubic { kernel } => {
                for m in 0..sites {
                    let potential: f64 = (0..sites)
                        .map(|k| kernel[m * sites + k] * u[k].norm_sqr())
                        .sum();
                    out[m] = minus_i_lambda * u[m] * potential;
                }
            }
        }
    }

    /// Closed-form `Φ₁(ū)[w]` (the Fréchet derivative), accumulated as
    /// `out += scale · Φ₁(ū)[w]`.
    pub(crate) fn add_linearized_raw(
        &self,
        t: f64,
        sites: usize,
        ubar: &[Complex64],
        w: &[Complex64],
        scale: f64,
        out: &mut [Complex64],
    ) {
        let half = ((self.p - 1) / 2) as i32;
        let minus_i_lambda = Complex64::new(0.0, -self.lambda * self.coupling.value(t)) * scale;
        match &self.kind {
            NonlinearityKind::GaugePower | NonlinearityKind::ToyGaugePower => {
                let h = f64::from(half);
                for ((o, &u), &v) in out.iter_mut().zip(ubar).zip(w) {
                    let m = u.norm_sqr();
                    let low = if half == 1 { 1.0 } else { m.powi(half - 1) };
                    *o += minus_i_lambda * low * ((h + 1.0) * m * v + h * u * u * v.conj());
                }
            }
            NonlinearityKind::RealOddPower => {
                let factor = -self.lambda * f64::from(self.p) * scale;
                for ((o, &u), &v) in out[sites..].iter_mut().zip(&ubar[..sites]).zip(&w[..sites]) {
                    *o += u.powi(self.p as i32 - 1) * v * factor;
                }
            }
            NonlinearityKind::ToyConvolutionCubic { kernel } => {
                for m in 0..sites {
                    let (mut potential, mut cross) = (0.0, 0.0);
                    for k in 0..sites {
                        potential += kernel[m * sites + k] * ubar[k].norm_sqr();
                        cross += kernel[m * sites + k] * 2.0 * (ubar[k].conj() * w[k]).re;
                    }
                    out[m] += minus_i_lambda * (w[m] * potential + ubar[m] * cross);
                }
            }
        }
    }

    /// All homogeneous pieces `Φ_j(ū; w)`, `j = 0..=p`, of `ε ↦ Φ(ū + εw)`.
    pub fn homogeneous_parts(
        &self,
        t: f64,
        ubar: &ComplexField,
        w: &ComplexField,
    ) -> Result<Vec<ComplexField>> {
        self.check_field(ubar)?;
        ubar.expect_same_shape(w)?;
        ubar.ensure_finite("homogeneous_parts background")?;
        w.ensure_finite("homogeneous_parts perturbation")?;
        let n = ubar.values().len();
        let mut parts = vec![vec![Complex64::new(0.0, 0.0); n]; self.nodes.len()];
        let mut scratch = Scratch::new(n);
        self.accumulate_parts(
            t,
            ubar.grid().len(),
            ubar.values(),
            w.values(),
            &mut scratch,
            |j, weight, g| {
                for (c, &v) in parts[j].iter_mut().zip(g) {
                    *c += v * weight;
                }
            },
        );
        Ok(parts
            .into_iter()
            .map(|v| ComplexField::from_parts_unchecked(ubar.grid().clone(), ubar.components(), v))
            .collect())
    }

    fn accumulate_parts(
        &self,
        t: f64,
        sites: usize,
        ubar: &[Complex64],
        w: &[Complex64],
        scratch: &mut Scratch,
        mut sink: impl FnMut(usize, f64, &[Complex64]),
    ) {
        let k = self.nodes.len();
        for (i, &eps) in self.nodes.iter().enumerate() {
            for ((a, &b), &c) in scratch.arg.iter_mut().zip(ubar).zip(w) {
                *a = b + c * eps;
            }
            self.phi_raw(t, sites, &scratch.arg, &mut scratch.value);
            for j in 0..k {
                sink(j, self.inverse_vandermonde[j * k + i], &scratch.value);
            }
        }
    }

    /// Add `scale · Φ_j(ū; w)` into `out`.
    pub(crate) fn add_homogeneous_raw(
        &self,
        t: f64,
        sites: usize,
        ubar: &[Complex64],
        w: &[Complex64],
        j: usize,
        scale: f64,
        scratch: &mut Scratch,
        out: &mut [Complex64],
    ) {
        if j > 0 && is_zero(w) {
            return;
        }
        if j == 1 {
            self.add_linearized_raw(t, sites, ubar, w, scale, out);
            return;
        }
        let k = self.nodes.len();
        for (i, &eps) in self.nodes.iter().enumerate() {
            let weight = self.inverse_vandermonde[j * k + i] * scale;
            if weight == 0.0 {
                continue;
            }
            for ((a, &b), &c) in scratch.arg.iter_mut().zip(ubar).zip(w) {
                *a = b + c * eps;
            }
            self.phi_raw(t, sites, &scratch.arg, &mut scratch.value);
            for (o, &v) in out.iter_mut().zip(&scratch.value) {
                *o += v * weight;
            }
        }
    }

    /// Symmetric `ℝ`-multilinear piece `N_j(ū; w_1, ..., w_j)`.
    pub fn n_j_integrand(
        &self,
        t: f64,
        ubar: &ComplexField,
        ws: &[&ComplexField],
        j: usize,
    ) -> Result<ComplexField> {
        if j == 0 || j > self.p as usize {
            return Err(Error::IndexOutOfRange { j, p: self.p });
        }
        if ws.len() != j {
            return Err(Error::InvalidParameter(format!(
                "{} arguments supplied for j = {j}",
                ws.len()
            )));
        }
        self.check_field(ubar)?;
        ubar.ensure_finite("n_j_integrand background")?;
        for w in ws {
            ubar.expect_same_shape(w)?;
            w.ensure_finite("n_j_integrand argument")?;
        }
        let n = ubar.values().len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        let raw: Vec<&[Complex64]> = ws.iter().map(|w| w.values()).collect();
        let mut scratch = Scratch::new(n);
        self.add_n_j_raw(
            t,
            ubar.grid().len(),
            ubar.values(),
            &raw,
            1.0,
            &mut scratch,
            &mut out,
        );
        Ok(ComplexField::from_parts_unchecked(
            ubar.grid().clone(),
            ubar.components(),
            out,
        ))
    }

    /// Add `scale · N_j(ū; ws)` into `out`, `j = ws.len()`.
    ///
    /// Polarisation over sign patterns, with identical arguments merged:
    /// for groups of sizes `r_g`, the patterns with `k_g` minus signs in
    /// group `g` all evaluate `Φ_j` at `Σ (r_g − 2k_g) a_g`.
    pub(crate) fn add_n_j_raw(
        &self,
        t: f64,
        sites: usize,
        ubar: &[Complex64],
        ws: &[&[Complex64]],
        scale: f64,
        scratch: &mut Scratch,
        out: &mut [Complex64],
    ) {
        // multilinear in each argument, so a zero direction contributes nothing
        if ws.iter().any(|w| is_zero(w)) {
            return;
        }
        let j = ws.len();
        let mut groups: Vec<(&[Complex64], usize)> = Vec::new();
        for w in ws {
            match groups
                .iter_mut()
                .find(|(g, _)| core::ptr::eq(g.as_ptr(), w.as_ptr()) || *g == *w)
            {
                Some(entry) => entry.1 += 1,
                None => groups.push((w, 1)),
            }
        }
        if groups.len() == 1 {
            self.add_homogeneous_raw(t, sites, ubar, groups[0].0, j, scale, scratch, out);
            return;
        }
        let norm = scale / (2f64.powi(j as i32) * factorial(j));
        let mut minus = vec![0usize; groups.len()];
        let mut combo = vec![Complex64::new(0.0, 0.0); ubar.len()];
        loop {
            let mut weight = norm;
            for (&(_, r), &k) in groups.iter().zip(&minus) {
                weight *= binomial(r, k) * if k % 2 == 0 { 1.0 } else { -1.0 };
            }
            for z in combo.iter_mut() {
                *z = Complex64::new(0.0, 0.0);
            }
            for (&(a, r), &k) in groups.iter().zip(&minus) {
                let c = r as f64 - 2.0 * k as f64;
                if c != 0.0 {
                    for (z, &v) in combo.iter_mut().zip(a) {
                        *z += v * c;
                    }
                }
            }
            self.add_homogeneous_raw(t, sites, ubar, &combo, j, weight, scratch, out);
            // odometer over k_g in 0..=r_g
            let mut g = 0;
            loop {
                if g == groups.len() {
                    return;
                }
                if minus[g] < groups[g].1 {
                    minus[g] += 1;
                    break;
                }
                minus[g] = 0;
                g += 1;
            }
        }
    }

    pub fn interpolation_nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// Reusable buffers for repeated nonlinearity evaluations.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    arg: Vec<Complex64>,
    value: Vec<Complex64>,
}

impl Scratch {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            arg: vec![Complex64::new(0.0, 0.0); len],
            value: vec![Complex64::new(0.0, 0.0); len],
        }
    }
}

/// `{0, ±1, ..., ±(p−1)/2, (p+1)/2}`.
fn interpolation_nodes(p: u32) -> Vec<f64> {
    let half = ((p - 1) / 2) as i32;
    let mut nodes = vec![0.0];
    for k in 1..=half {
        nodes.push(k as f64);
        nodes.push(-(k as f64));
    }
    nodes.push((half + 1) as f64);
    nodes
}

// Inverse of V[i][j] = nodes[i]^j, returned row-major as W with
// coefficient_j = Σ_i W[j][i] g(nodes[i]).
fn invert_vandermonde(nodes: &[f64]) -> Vec<f64> {
    let k = nodes.len();
    let mut a = vec![0.0; k * k];
    let mut inv = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            a[i * k + j] = nodes[i].powi(j as i32);
        }
        inv[i * k + i] = 1.0;
    }
    // Gauss–Jordan with partial pivoting
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| {
                a[x * k + col]
                    .abs()
                    .partial_cmp(&a[y * k + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot != col {
            for j in 0..k {
                a.swap(col * k + j, pivot * k + j);
                inv.swap(col * k + j, pivot * k + j);
            }
        }
        let d = a[col * k + col];
        for j in 0..k {
            a[col * k + j] /= d;
            inv[col * k + j] /= d;
        }
        for row in 0..k {
            if row != col {
                let f = a[row * k + col];
                if f != 0.0 {
                    for j in 0..k {
                        a[row * k + j] -= f * a[col * k + j];
                        inv[row * k + j] -= f * inv[col * k + j];
                    }
                }
            }
        }
    }
    inv
}

fn is_zero(w: &[Complex64]) -> bool {
    w.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;

    fn field(grid: &crate::GridRef, comps: usize, seed: u64) -> ComplexField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..grid.len() * comps)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::new(grid.clone(), comps, vals).unwrap()
    }

    #[test]
    fn closed_form_linearisation_matches_extraction() {
        let grid = SpatialGrid::periodic(10.0, 16).unwrap();
        let toy = SpatialGrid::toy(3).unwrap();
        let kernel = vec![1.0, 0.5, 0.2, 0.5, 2.0, -0.3, 0.2, -0.3, 1.5];
        let cases = [
            (
                NonlinearitySpec::gauge_power(3, 1.3).unwrap(),
                grid.clone(),
                1,
            ),
            (
                NonlinearitySpec::gauge_power(7, -0.7).unwrap(),
                grid.clone(),
                1,
            ),
            (
                NonlinearitySpec::real_odd_power(5, 1.1).unwrap(),
                grid.clone(),
                2,
            ),
            (
                NonlinearitySpec::toy_gauge_power(5, 1.0).unwrap(),
                toy.clone(),
                1,
            ),
            (
                NonlinearitySpec::toy_convolution_cubic(kernel, 0.8).unwrap(),
                toy.clone(),
                1,
            ),
        ];
        for (i, (nl, g, comps)) in cases.iter().enumerate() {
            let u = field(g, *comps, 2 * i as u64);
            let w = field(g, *comps, 2 * i as u64 + 1);
            let parts = nl.homogeneous_parts(0.4, &u, &w).unwrap();
            let mut fast = vec![Complex64::new(0.0, 0.0); u.values().len()];
            nl.add_linearized_raw(0.4, g.len(), u.values(), w.values(), 1.0, &mut fast);
            let fast = ComplexField::new(g.clone(), *comps, fast).unwrap();
            let rel = fast.sub(&parts[1]).unwrap().l2_norm() / parts[1].l2_norm();
            assert!(rel <= 1e-10, "{:?} {rel:e}", nl.kind());
        }
    }

    #[test]
    fn rejects_even_power() {
        assert_eq!(
            NonlinearitySpec::gauge_power(4, 1.0),
            Err(Error::EvenPower(4))
        );
        assert_eq!(
            NonlinearitySpec::gauge_power(1, 1.0),
            Err(Error::EvenPower(1))
        );
    }

    #[test]
    fn vandermonde_inverse_extracts_monomials() {
        let nodes = interpolation_nodes(5);
        assert_eq!(nodes, vec![0.0, 1.0, -1.0, 2.0, -2.0, 3.0]);
        let w = invert_vandermonde(&nodes);
        for power in 0..6 {
            for j in 0..6 {
                let c: f64 = (0..6).map(|i| w[j * 6 + i] * nodes[i].powi(power)).sum();
                let expect = if j == power as usize { 1.0 } else { 0.0 };
                assert!((c - expect).abs() < 1e-12, "j={j} power={power} c={c}");
            }
        }
    }

    #[test]
    fn constant_field_gauge_power() {
        let g = SpatialGrid::periodic(10.0, 8).unwrap();
        let nl = NonlinearitySpec::gauge_power(5, 1.5).unwrap();
        let a = Complex64::new(0.3, -0.7);
        let u = ComplexField::from_fn(g, |_| a).unwrap();
        let out = nl.phi(0.0, &u).unwrap();
        let expect = Complex64::new(0.0, -1.5) * a * a.norm_sqr().powi(2);
        for z in out.values() {
            assert!((z - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn toy_gauge_hand_value() {
        let g = SpatialGrid::toy(2).unwrap();
        let nl = NonlinearitySpec::toy_gauge_power(5, 1.0).unwrap();
        let u = ComplexField::new(
            g,
            1,
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)],
        )
        .unwrap();
        let out = nl.phi(1.0, &u).unwrap();
        assert!((out.values()[0] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((out.values()[1] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_background_keeps_only_top_degree() {
        let g = SpatialGrid::periodic(10.0, 8).unwrap();
        let nl = NonlinearitySpec::gauge_power(5, 1.0).unwrap();
        let zero = ComplexField::zeros(g.clone(), 1);
        let w = field(&g, 1, 3);
        for j in 1..5 {
            let args: Vec<&ComplexField> = (0..j).map(|_| &w).collect();
            let n = nl.n_j_integrand(0.0, &zero, &args, j).unwrap();
            assert!(n.values().iter().all(|z| z.norm() < 1e-12), "j = {j}");
        }
        let args = [&w, &w, &w, &w, &w];
        let top = nl.n_j_integrand(0.0, &zero, &args, 5).unwrap();
        assert!(top.max_rel_diff(&nl.phi(0.0, &w).unwrap()) < 1e-13);
    }

    #[test]
    fn explicit_linearisation_of_gauge_power() {
        // Φ_1(ū; w) = −iλ[(p+1)/2 |ū|^{p−1} w + (p−1)/2 |ū|^{p−3} ū² w̄]
        let g = SpatialGrid::periodic(10.0, 8).unwrap();
        let nl = NonlinearitySpec::gauge_power(5, 1.0).unwrap();
        let ubar = field(&g, 1, 1);
        let w = field(&g, 1, 2);
        let n1 = nl.n_j_integrand(0.3, &ubar, &[&w], 1).unwrap();
        for ((z, &u), &v) in n1.values().iter().zip(ubar.values()).zip(w.values()) {
            let m = u.norm_sqr();
            let expect = Complex64::new(0.0, -1.0) * (v * 3.0 * m * m + v.conj() * u * u * 2.0 * m);
            assert!((z - expect).norm() < 1e-12 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn vanishes_when_an_argument_vanishes() {
        let g = SpatialGrid::periodic(10.0, 8).unwrap();
        let nl = NonlinearitySpec::gauge_power(5, 1.0).unwrap();
        let ubar = field(&g, 1, 1);
        let w = field(&g, 1, 2);
        let z = ComplexField::zeros(g, 1);
        let n = nl.n_j_integrand(0.0, &ubar, &[&w, &z, &w], 3).unwrap();
        assert!(n.values().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn index_range_checked() {
        let g = SpatialGrid::periodic(10.0, 8).unwrap();
        let nl = NonlinearitySpec::gauge_power(3, 1.0).unwrap();
        let u = field(&g, 1, 1);
        assert!(matches!(
            nl.n_j_integrand(0.0, &u, &[], 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            nl.n_j_integrand(0.0, &u, &[&u, &u, &u, &u], 4),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(nl.n_j_integrand(0.0, &u, &[&u], 2).is_err());
    }

    #[test]
    fn coupling_only_for_toys() {
        assert!(NonlinearitySpec::gauge_power(5, 1.0)
            .unwrap()
            .with_coupling(CouplingProfile::InverseQuadratic)
            .is_err());
        assert!(
            (CouplingProfile::InverseQuadratic.integral(-1.0, 1.0) - core::f64::consts::FRAC_PI_2)
                .abs()
                < 1e-15
        );
    }
}
