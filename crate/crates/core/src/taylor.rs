//! The tangent hierarchy `(w_k)` and the scattering series built on it.
//!
//! With `u^ε = ū + Σ_k ε^{k+1} w_k`, level `k` is the `ε^{k+1}` Taylor
//! coefficient of the flow, so `(k+1)!·w_k⁺` is the `(k+1)`-th derivative of
//! `ε ↦ S(ū₋ + εu₀)` at zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::evolve::{solve_levels, IntegratorConfig};
use crate::field::ComplexField;
use crate::fit::{linear_fit, log_log_slope};
use crate::nonlinearity::NonlinearitySpec;
use crate::norms::{d_norm, NodeNorms, StrichartzExponents};
use crate::propagator::PropagatorSpec;
use crate::scattering::{scatter, ScatterThresholds};
use crate::trajectory::Trajectory;

/// Default cap on the memory held by hierarchy trajectories.
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Levels `w_0 … w_K` along `background`, starting from `w_0(−T) = U(−T)u₀`.
pub fn build_hierarchy(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    background: &Trajectory,
    u0: &ComplexField,
    k_max: usize,
) -> Result<Vec<Trajectory>> {
    build_hierarchy_with_budget(prop, nl, cfg, background, u0, k_max, DEFAULT_MEMORY_BUDGET)
}

pub fn build_hierarchy_with_budget(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    background: &Trajectory,
    u0: &ComplexField,
    k_max: usize,
    budget: u64,
) -> Result<Vec<Trajectory>> {
    let t_init = background.start();
    let steps = cfg.steps_between(t_init, cfg.horizon)?;
    let nodes = (steps / cfg.save_every + 1) as u64;
    let requested = (k_max as u64 + 1) * nodes * u0.values().len() as u64 * 16;
    if requested > budget {
        return Err(Error::MemoryBudget { requested, budget });
    }
    let mut inits = vec![prop.apply_u(t_init, u0)?];
    let zero = ComplexField::zeros(u0.grid().clone(), u0.components());
    inits.resize(k_max + 1, zero);
    solve_levels(prop, nl, cfg, background, &inits, t_init, true, None)
}

#[derive(Debug, Clone)]
pub struct SeriesResult {
    /// `w_k⁺ = U(−T)w_k(T)`.
    pub w_plus: Vec<ComplexField>,
    pub f_norms_of_wk: Vec<f64>,
    /// `exp` of the slope of `log‖w_k‖_F` against `k ≥ 1`; `None` when
    /// fewer than two nonzero levels are available.
    pub growth_lambda: Option<f64>,
    pub radius_estimate: Option<f64>,
    /// Largest positive residual of that fit, in log units.
    pub envelope_residual: f64,
    pub remainder_orders: Vec<(usize, f64)>,
}

/// Pulls back the levels and fits the geometric envelope.
pub fn series_from_hierarchy(
    prop: &PropagatorSpec,
    levels: &[Trajectory],
    exps: &StrichartzExponents,
) -> Result<SeriesResult> {
    let mut w_plus = Vec::with_capacity(levels.len());
    let mut f_norms_of_wk = Vec::with_capacity(levels.len());
    for w in levels {
        w_plus.push(prop.apply_u(-w.end(), w.last())?);
        f_norms_of_wk.push(
            NodeNorms::compute(w, exps, false)?
                .report(w.start(), w.end())?
                .f_norm,
        );
    }
    let (growth_lambda, envelope_residual) = envelope(&f_norms_of_wk, 1e-300)?;
    Ok(SeriesResult {
        w_plus,
        f_norms_of_wk,
        growth_lambda,
        radius_estimate: growth_lambda.map(|l| 1.0 / l),
        envelope_residual,
        remainder_orders: Vec::new(),
    })
}

/// Geometric fit of `norms[k]`, `k ≥ 1`, skipping entries at or below `floor`.
pub fn envelope(norms: &[f64], floor: f64) -> Result<(Option<f64>, f64)> {
    let (ks, logs): (Vec<f64>, Vec<f64>) = norms
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &n)| n > floor)
        .map(|(k, &n)| (k as f64, num_traits::Float::ln(n)))
        .unzip();
    if ks.len() < 2 {
        return Ok((None, 0.0));
    }
    let (slope, intercept) = linear_fit(&ks, &logs)?;
    let worst = ks
        .iter()
        .zip(&logs)
        .map(|(k, l)| l - (intercept + slope * k))
        .fold(0.0, f64::max);
    Ok((Some(num_traits::Float::exp(slope)), worst))
}

/// Partial sum `ū₊ + ε Σ_{k≤K} ε^k w_k⁺`.
#[derive(Debug, Clone)]
pub struct SeriesSum {
    pub value: ComplexField,
    /// Set when the caller forced a sum beyond the fitted radius.
    pub out_of_radius: bool,
}

pub fn sum_series(
    series: &SeriesResult,
    u_bar_plus: &ComplexField,
    epsilon: f64,
    k: usize,
    force: bool,
) -> Result<SeriesSum> {
    if k >= series.w_plus.len() {
        return Err(Error::InvalidParameter(format!(
            "truncation {k} needs {} coefficients, {} available",
            k + 1,
            series.w_plus.len()
        )));
    }
    let out_of_radius = match series.radius_estimate {
        Some(radius) => epsilon.abs() >= radius,
        None => false,
    };
    if out_of_radius && !force {
        return Err(Error::OutsideRadius {
            epsilon,
            radius: series.radius_estimate.unwrap_or(f64::INFINITY),
        });
    }
    let mut acc = series.w_plus[k].clone();
    for w in series.w_plus[..k].iter().rev() {
        acc = w.add_scaled(epsilon, &acc)?;
    }
    Ok(SeriesSum {
        value: u_bar_plus.add_scaled(epsilon, &acc)?,
        out_of_radius,
    })
}

#[derive(Debug, Clone)]
pub struct RemainderFit {
    pub k: usize,
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope: f64,
    pub series: SeriesResult,
}

/// Slope of `log‖S(ū₋ + εu₀) − Σ_{k≤K}‖_D` against `log ε`.
///
/// Residuals must clear ten times the round-off level
/// `noise_floor · ‖S(ū₋ + εu₀)‖_D`; otherwise the fit is inconclusive.
#[allow(clippy::too_many_arguments)]
pub fn remainder_order(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    thresholds: &ScatterThresholds,
    u_bar_minus: &ComplexField,
    u0: &ComplexField,
    k: usize,
    epsilons: &[f64],
) -> Result<RemainderFit> {
    if nl.lambda() == 0.0 {
        return Err(Error::TrivialRemainder);
    }
    if epsilons.len() < 2 {
        return Err(Error::InvalidParameter(
            "remainder fit needs two or more epsilons".into(),
        ));
    }
    let bg = scatter(prop, nl, cfg, thresholds, u_bar_minus)?;
    let levels = build_hierarchy(prop, nl, cfg, &bg.trajectory, u0, k)?;
    let exps = crate::scattering::default_exponents(nl)
        .or_else(|_| StrichartzExponents::toy(nl.p(), 8.0, nl.coupling()))?;
    let mut series = series_from_hierarchy(prop, &levels, &exps)?;
    let mut residuals = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let data = u_bar_minus.add_scaled(eps, u0)?;
        let exact = scatter(prop, nl, cfg, thresholds, &data)?.u_plus;
        let approx = sum_series(&series, &bg.u_plus, eps, k, false)?.value;
        let r = d_norm(&exact.sub(&approx)?)?;
        let noise = thresholds.noise_floor * d_norm(&exact)?;
        if !(r > 10.0 * noise) {
            return Err(Error::Inconclusive(format!(
                "remainder {r:.3e} at eps = {eps} is within 10x of the noise level {noise:.3e}"
            )));
        }
        residuals.push(r);
    }
    let slope = log_log_slope(epsilons, &residuals)?;
    series.remainder_orders.push((k, slope));
    Ok(RemainderFit {
        k,
        epsilons: epsilons.to_vec(),
        residuals,
        slope,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::Scheme;
    use crate::grid::SpatialGrid;
    use crate::profiles::random_toy;
    use num_complex::Complex64;

    fn setup() -> (PropagatorSpec, NonlinearitySpec, IntegratorConfig) {
        let grid = SpatialGrid::toy(4).unwrap();
        (
            PropagatorSpec::toy_default(grid).unwrap(),
            NonlinearitySpec::toy_gauge_power(5, 1.0).unwrap(),
            IntegratorConfig::new(0.02, 6.0, Scheme::LawsonRk4).with_save_every(5),
        )
    }

    #[test]
    fn around_zero_matches_the_closed_form_series() {
        // S(u)_m = u_m exp(−iλC|u_m|⁴) with C = ∫c, so the only nonzero
        // coefficients are w_0 = u₀ and w_4 = −iλC|u₀|⁴u₀ up to order 8.
        let (prop, nl, cfg) = setup();
        let u0 = random_toy(prop.grid(), 2, 0.9).unwrap();
        let zero = ComplexField::zeros(prop.grid().clone(), 1);
        let bg = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &zero).unwrap();
        let levels = build_hierarchy(&prop, &nl, &cfg, &bg.trajectory, &u0, 5).unwrap();
        let exps = StrichartzExponents::toy(5, 8.0, nl.coupling()).unwrap();
        let s = series_from_hierarchy(&prop, &levels, &exps).unwrap();
        let c = nl.coupling().integral(-6.0, 6.0);
        let expect = u0.map(|z| z * Complex64::new(0.0, -c * z.norm_sqr().powi(2)));
        assert!(s.w_plus[0].max_rel_diff(&u0) < 1e-12);
        assert!(s.w_plus[4].max_rel_diff(&expect) < 1e-6);
        for k in [1, 2, 3, 5] {
            assert!(s.w_plus[k].l2_norm() < 1e-14, "level {k}");
        }
    }

    #[test]
    fn zero_direction_gives_zero_levels() {
        let (prop, nl, cfg) = setup();
        let ubar = random_toy(prop.grid(), 4, 0.6).unwrap();
        let zero = ComplexField::zeros(prop.grid().clone(), 1);
        let bg = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &ubar).unwrap();
        let levels = build_hierarchy(&prop, &nl, &cfg, &bg.trajectory, &zero, 3).unwrap();
        assert!(levels
            .iter()
            .all(|w| w.snapshots().iter().all(|s| s.is_zero())));
    }

    #[test]
    fn partial_sums_differ_by_the_last_term() {
        let (prop, nl, cfg) = setup();
        let ubar = random_toy(prop.grid(), 4, 0.6).unwrap();
        let u0 = random_toy(prop.grid(), 5, 0.6).unwrap();
        let bg = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &ubar).unwrap();
        let levels = build_hierarchy(&prop, &nl, &cfg, &bg.trajectory, &u0, 3).unwrap();
        let exps = StrichartzExponents::toy(5, 8.0, nl.coupling()).unwrap();
        let s = series_from_hierarchy(&prop, &levels, &exps).unwrap();
        let eps = 0.05;
        let a = sum_series(&s, &bg.u_plus, eps, 3, false).unwrap().value;
        let b = sum_series(&s, &bg.u_plus, eps, 2, false).unwrap().value;
        let diff = a
            .sub(&b)
            .unwrap()
            .sub(&s.w_plus[3].scaled(eps.powi(4)))
            .unwrap();
        assert!(diff.l2_norm() < 1e-15);
        assert_eq!(
            sum_series(&s, &bg.u_plus, 0.0, 3, false).unwrap().value,
            bg.u_plus
        );
    }

    #[test]
    fn out_of_radius_requires_force() {
        let (prop, _, _) = setup();
        let u = random_toy(prop.grid(), 1, 1.0).unwrap();
        let s = SeriesResult {
            w_plus: vec![u.clone()],
            f_norms_of_wk: vec![1.0],
            growth_lambda: Some(4.0),
            radius_estimate: Some(0.25),
            envelope_residual: 0.0,
            remainder_orders: Vec::new(),
        };
        assert!(matches!(
            sum_series(&s, &u, 0.5, 0, false),
            Err(Error::OutsideRadius { .. })
        ));
        assert!(sum_series(&s, &u, 0.5, 0, true).unwrap().out_of_radius);
    }

    #[test]
    fn memory_budget_is_enforced() {
        let (prop, nl, cfg) = setup();
        let u0 = random_toy(prop.grid(), 2, 0.9).unwrap();
        let zero = ComplexField::zeros(prop.grid().clone(), 1);
        let bg = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &zero).unwrap();
        let err = build_hierarchy_with_budget(&prop, &nl, &cfg, &bg.trajectory, &u0, 3, 1024)
            .unwrap_err();
        assert!(matches!(err, Error::MemoryBudget { .. }));
    }

    #[test]
    fn linear_problem_has_trivial_remainder() {
        let (prop, _, cfg) = setup();
        let nl = NonlinearitySpec::toy_gauge_power(5, 0.0).unwrap();
        let u = random_toy(prop.grid(), 1, 1.0).unwrap();
        let err = remainder_order(
            &prop,
            &nl,
            &cfg,
            &ScatterThresholds::default(),
            &u,
            &u,
            0,
            &[0.1, 0.05],
        );
        assert!(matches!(err, Err(Error::TrivialRemainder)));
    }
}
