//! Invariant skew forms under `dS`, the Born term and recovery of the
//! nonlinearity from small-data scattering.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::evolve::IntegratorConfig;
use crate::field::ComplexField;
use crate::fit::log_log_slope;
use crate::nonlinearity::NonlinearitySpec;
use crate::norms::{d_norm, l2_norm};
use crate::propagator::{PropagatorKind, PropagatorSpec};
use crate::scattering::{linearized_scatter_many, scatter, ScatterThresholds, ScatteringResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// `Im ∫ conj(f) g`.
    Schrodinger,
    /// `∫ (f_u g_v − g_u f_v)` on pairs `(u, ∂_t u)`.
    Wave,
}

impl FormKind {
    pub fn for_propagator(prop: &PropagatorSpec) -> Self {
        match prop.kind() {
            PropagatorKind::KleinGordon { .. } => FormKind::Wave,
            _ => FormKind::Schrodinger,
        }
    }
}

pub fn omega(kind: FormKind, f: &ComplexField, g: &ComplexField) -> Result<f64> {
    f.expect_same_shape(g)?;
    let dx = f.grid().dx();
    match kind {
        FormKind::Schrodinger => {
            f.expect_components(1)?;
            Ok(dx
                * f.values()
                    .iter()
                    .zip(g.values())
                    .map(|(a, b)| (a.conj() * b).im)
                    .sum::<f64>())
        }
        FormKind::Wave => {
            f.expect_components(2)?;
            let (fu, fv) = (f.component(0), f.component(1));
            let (gu, gv) = (g.component(0), g.component(1));
            let s: f64 = fu
                .iter()
                .zip(fv)
                .zip(gu.iter().zip(gv))
                .map(|((a, b), (c, d))| (a * d - c * b).re)
                .sum();
            Ok(dx * s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaReport {
    pub form_kind: FormKind,
    pub value_minus: f64,
    pub value_plus: f64,
    /// `|ω₊ − ω₋| / (‖v_a‖_{L²}·‖v_b‖_{L²})`.
    pub relative_defect: f64,
}

/// Compares `ω(v_a, v_b)` with `ω(dS v_a, dS v_b)` along `background`.
pub fn omega_invariance(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    background: &ScatteringResult,
    v_a: &ComplexField,
    v_b: &ComplexField,
) -> Result<OmegaReport> {
    let kind = FormKind::for_propagator(prop);
    let value_minus = omega(kind, v_a, v_b)?;
    let plus = linearized_scatter_many(prop, nl, cfg, background, &[v_a.clone(), v_b.clone()])?;
    let value_plus = omega(kind, &plus[0], &plus[1])?;
    let scale = l2_norm(v_a) * l2_norm(v_b);
    let relative_defect = if scale == 0.0 {
        0.0
    } else {
        (value_plus - value_minus).abs() / scale
    };
    Ok(OmegaReport {
        form_kind: kind,
        value_minus,
        value_plus,
        relative_defect,
    })
}

/// Quadrature rule for the Born integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BornQuadrature {
    Trapezoid,
    /// Midpoints of the integrator steps; this is the leading nonlinear
    /// term of the Strang-split map itself.
    Midpoint,
}

/// `∫_{−T}^{T} U(−t) Φ(t, U(t)φ) dt` with step `cfg.dt`.
pub fn born_term(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    phi: &ComplexField,
    rule: BornQuadrature,
) -> Result<ComplexField> {
    crate::evolve::check_state(prop, nl, phi)?;
    let horizon = cfg.horizon;
    let steps = (2.0 * horizon / cfg.dt).round() as usize;
    let h = 2.0 * horizon / steps as f64;
    let len = phi.values().len();
    let sites = phi.grid().len();
    let mut acc = alloc::vec![Complex64::new(0.0, 0.0); len];
    let mut value = alloc::vec![Complex64::new(0.0, 0.0); len];
    let (nodes, offset) = match rule {
        BornQuadrature::Trapezoid => (steps + 1, 0.0),
        BornQuadrature::Midpoint => (steps, 0.5),
    };
    for n in 0..nodes {
        let t = -horizon + (n as f64 + offset) * h;
        let weight = match rule {
            BornQuadrature::Trapezoid if n == 0 || n == steps => 0.5 * h,
            _ => h,
        };
        let mut state = phi.values().to_vec();
        prop.multiplier(t).apply(&mut state);
        nl.phi_raw(t, sites, &state, &mut value);
        prop.multiplier(-t).apply(&mut value);
        for (a, &v) in acc.iter_mut().zip(&value) {
            *a += v * weight;
        }
    }
    ComplexField::new(phi.grid().clone(), phi.components(), acc)
}

#[derive(Debug, Clone)]
pub struct InverseScatteringReport {
    pub epsilons: Vec<f64>,
    /// `‖S(εφ) − εφ‖_D`.
    pub residual_norms: Vec<f64>,
    /// Same residuals in `L²`.
    pub residual_l2: Vec<f64>,
    /// Slope of the `D` residuals; `None` when every residual is at noise level.
    pub p_hat: Option<f64>,
    pub p_hat_l2: Option<f64>,
    /// `p_hat` refitted without the largest `ε`.
    pub p_hat_trimmed: Option<f64>,
    pub lambda_hat: Option<f64>,
    /// Slope of `‖S(εφ) − εφ − ε^p Born(φ)‖_D`.
    pub born_residual_slope: Option<f64>,
    pub born_residuals: Vec<f64>,
    /// `(ε, S(εφ) − εφ)` at the smallest ε above the noise level.
    pub reference_residual: Option<(f64, ComplexField)>,
}

fn check_geometric(eps: &[f64]) -> Result<()> {
    if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter(
            "epsilon list needs two or more positive values".into(),
        ));
    }
    let ratio = eps[0] / eps[1];
    let geometric = eps
        .windows(2)
        .all(|w| ((w[0] / w[1]) / ratio - 1.0).abs() < 1e-9);
    let r = if ratio < 1.0 { 1.0 / ratio } else { ratio };
    if !geometric || r < core::f64::consts::SQRT_2 - 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "epsilon list must be geometric with ratio >= sqrt 2, got {eps:?}"
        )));
    }
    Ok(())
}

/// Scatters `εφ` for each `ε` and fits the power of the leading correction.
#[allow(clippy::too_many_arguments)]
pub fn estimate_power(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    thresholds: &ScatterThresholds,
    phi: &ComplexField,
    epsilons: &[f64],
    rule: BornQuadrature,
) -> Result<InverseScatteringReport> {
    check_geometric(epsilons)?;
    let born = born_term(prop, nl, cfg, phi, rule)?;
    let mut residual_norms = Vec::new();
    let mut residual_l2 = Vec::new();
    let mut born_residuals = Vec::new();
    let mut reliable = Vec::new();
    let mut reference_residual: Option<(f64, ComplexField)> = None;
    for &eps in epsilons {
        let data = phi.scaled(eps);
        let out = scatter(prop, nl, cfg, thresholds, &data)?;
        let residual = out.u_plus.sub(&data)?;
        let noise = thresholds.noise_floor * d_norm(&out.u_plus)?;
        let r = d_norm(&residual)?;
        residual_norms.push(r);
        residual_l2.push(l2_norm(&residual));
        let p = f64::from(nl.p());
        born_residuals.push(d_norm(&residual.add_scaled(-eps.powf(p), &born)?)?);
        let ok = r > 10.0 * noise;
        reliable.push(ok);
        if ok && reference_residual.as_ref().is_none_or(|(e, _)| eps < *e) {
            reference_residual = Some((eps, residual));
        }
    }
    let (p_hat, p_hat_l2, p_hat_trimmed, born_residual_slope) = if reliable.iter().all(|&r| !r) {
        (None, None, None, None)
    } else if reliable.iter().any(|&r| !r) {
        return Err(Error::Inconclusive(format!(
            "some residuals are at noise level: {residual_norms:?}"
        )));
    } else {
        let largest = epsilons
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let trimmed = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .filter(|(i, _)| *i != largest)
                .map(|(_, x)| *x)
                .collect()
        };
        let p_trim = if epsilons.len() > 2 {
            Some(log_log_slope(
                &trimmed(epsilons),
                &trimmed(&residual_norms),
            )?)
        } else {
            None
        };
        let born_slope = if born_residuals.iter().all(|r| *r > 0.0) {
            Some(log_log_slope(epsilons, &born_residuals)?)
        } else {
            None
        };
        (
            Some(log_log_slope(epsilons, &residual_norms)?),
            Some(log_log_slope(epsilons, &residual_l2)?),
            p_trim,
            born_slope,
        )
    };
    let mut report = InverseScatteringReport {
        epsilons: epsilons.to_vec(),
        residual_norms,
        residual_l2,
        p_hat,
        p_hat_l2,
        p_hat_trimmed,
        lambda_hat: None,
        born_residual_slope,
        born_residuals,
        reference_residual,
    };
    if report.p_hat.is_some() {
        report.lambda_hat = estimate_lambda(&report, phi, prop, nl, cfg, rule).ok();
    }
    Ok(report)
}

/// Least-squares `λ` matching `S(εφ) − εφ ≈ λ ε^{p̂} B₁(φ)`, where `B₁` is
/// the Born term of the unit-coupling nonlinearity of the given shape.
pub fn estimate_lambda(
    report: &InverseScatteringReport,
    phi: &ComplexField,
    prop: &PropagatorSpec,
    nl_shape: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    rule: BornQuadrature,
) -> Result<f64> {
    let p_hat = report
        .p_hat
        .ok_or_else(|| Error::Inconclusive("power estimate unavailable".into()))?;
    let p = p_hat.round();
    if (p_hat - p).abs() > 0.2 || p < 3.0 || (p as u32).is_multiple_of(2) {
        return Err(Error::Inconclusive(format!(
            "power estimate {p_hat:.3} is not resolved"
        )));
    }
    let (eps, residual) = report
        .reference_residual
        .as_ref()
        .ok_or_else(|| Error::Inconclusive("no residual above the noise level".into()))?;
    let mut shape = NonlinearitySpec::new(nl_shape.kind().clone(), p as u32, 1.0)?;
    if shape.is_toy() {
        shape = shape.with_coupling(nl_shape.coupling())?;
    }
    let b1 = born_term(prop, &shape, cfg, phi, rule)?;
    let denom = b1.real_inner(&b1) * (*eps).powf(p);
    if denom == 0.0 {
        return Err(Error::Inconclusive(
            "Born term vanishes for this profile".into(),
        ));
    }
    Ok(b1.real_inner(residual) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::Scheme;
    use crate::grid::SpatialGrid;
    use crate::profiles::{gaussian, random_smooth, random_toy};

    #[test]
    fn schrodinger_form_basics() {
        let grid = SpatialGrid::periodic(30.0, 128).unwrap();
        let f = random_smooth(&grid, 1, 3, 1.3).unwrap();
        let g = random_smooth(&grid, 2, 3, 0.7).unwrap();
        assert!(omega(FormKind::Schrodinger, &f, &f).unwrap().abs() < 1e-15);
        let rotated = f.scaled_complex(Complex64::i());
        let w = omega(FormKind::Schrodinger, &f, &rotated).unwrap();
        assert!((w - 1.3 * 1.3).abs() < 1e-12);
        let ab = omega(FormKind::Schrodinger, &f, &g).unwrap();
        let ba = omega(FormKind::Schrodinger, &g, &f).unwrap();
        assert!((ab + ba).abs() < 1e-15);
    }

    #[test]
    fn wave_form_on_split_pair() {
        let grid = SpatialGrid::periodic(30.0, 128).unwrap();
        let a = gaussian(&grid, 1.0, 1.0, 0.0).unwrap();
        let b = gaussian(&grid, 2.0, 2.0, 1.0).unwrap();
        let zero = ComplexField::zeros(grid.clone(), 1);
        let f = ComplexField::pair(&a, &zero).unwrap();
        let g = ComplexField::pair(&zero, &b).unwrap();
        let expect = a.real_inner(&b);
        assert!((omega(FormKind::Wave, &f, &g).unwrap() - expect).abs() < 1e-13);
        assert!(matches!(
            omega(FormKind::Schrodinger, &f, &g),
            Err(Error::ComponentMismatch { .. })
        ));
    }

    #[test]
    fn free_flow_preserves_both_forms() {
        let grid = SpatialGrid::periodic(30.0, 128).unwrap();
        let nls = PropagatorSpec::schrodinger(grid.clone()).unwrap();
        let f = random_smooth(&grid, 3, 3, 1.0).unwrap();
        let g = random_smooth(&grid, 4, 3, 1.0).unwrap();
        let before = omega(FormKind::Schrodinger, &f, &g).unwrap();
        let after = omega(
            FormKind::Schrodinger,
            &nls.apply_u(2.3, &f).unwrap(),
            &nls.apply_u(2.3, &g).unwrap(),
        )
        .unwrap();
        assert!((before - after).abs() < 1e-12 * before.abs().max(1.0));

        let kg = PropagatorSpec::klein_gordon(grid.clone(), 1.0).unwrap();
        let f = crate::profiles::random_smooth_wave(&grid, 5, 3, 1.0).unwrap();
        let g = crate::profiles::random_smooth_wave(&grid, 6, 3, 1.0).unwrap();
        let before = omega(FormKind::Wave, &f, &g).unwrap();
        let after = omega(
            FormKind::Wave,
            &kg.apply_u(1.7, &f).unwrap(),
            &kg.apply_u(1.7, &g).unwrap(),
        )
        .unwrap();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn toy_born_term_has_closed_form() {
        // U(−t)Φ(U(t)φ) = −iλc(t)|φ|⁴φ componentwise
        let grid = SpatialGrid::toy(4).unwrap();
        let prop = PropagatorSpec::toy_default(grid.clone()).unwrap();
        let nl = NonlinearitySpec::toy_gauge_power(5, 1.5).unwrap();
        let phi = random_toy(&grid, 9, 1.0).unwrap();
        let cfg = IntegratorConfig::new(0.01, 10.0, Scheme::StrangSplit);
        let c = nl.coupling().integral(-10.0, 10.0);
        let expect = phi.map(|z| z * Complex64::new(0.0, -1.5 * c * z.norm_sqr().powi(2)));
        for rule in [BornQuadrature::Trapezoid, BornQuadrature::Midpoint] {
            let b = born_term(&prop, &nl, &cfg, &phi, rule).unwrap();
            assert!(b.max_rel_diff(&expect) < 1e-6, "{rule:?}");
        }
    }

    #[test]
    fn linear_problem_has_no_power() {
        let grid = SpatialGrid::toy(4).unwrap();
        let prop = PropagatorSpec::toy_default(grid.clone()).unwrap();
        let nl = NonlinearitySpec::toy_gauge_power(5, 0.0).unwrap();
        let phi = random_toy(&grid, 9, 1.0).unwrap();
        let cfg = IntegratorConfig::new(0.1, 5.0, Scheme::StrangSplit);
        let rep = estimate_power(
            &prop,
            &nl,
            &cfg,
            &ScatterThresholds::default(),
            &phi,
            &[0.2, 0.1],
            BornQuadrature::Trapezoid,
        )
        .unwrap();
        assert!(rep.p_hat.is_none() && rep.lambda_hat.is_none());
        assert!(estimate_lambda(&rep, &phi, &prop, &nl, &cfg, BornQuadrature::Trapezoid).is_err());
    }

    #[test]
    fn epsilon_lists_must_be_geometric() {
        assert!(check_geometric(&[0.1, 0.05, 0.025]).is_ok());
        assert!(check_geometric(&[0.1, 0.09]).is_err());
        assert!(check_geometric(&[0.1, 0.05, 0.03]).is_err());
    }
}
