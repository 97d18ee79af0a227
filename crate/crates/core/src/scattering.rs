//! Asymptotic states on a finite horizon, the linearised scattering map and
//! the interval-partition diagnostic.
//!
//! The state at `t = −T` is prescribed as `U(−T)u₋` and the outgoing state
//! is read off as `u₊ = U(−T)u(T)`. How far this surrogate is from the
//! limit is made observable through Cauchy tails of the profile
//! `U(−t)u(t)` over geometric checkpoints.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evolve::{
    check_state, evolve_nonlinear, solve_tangents, ConservationLog, IntegratorConfig,
};
use crate::field::ComplexField;
use crate::fit::slope_through_origin;
use crate::nonlinearity::{NonlinearitySpec, Scratch};
use crate::norms::{d_norm, NodeNorms, NormReport, StrichartzExponents};
use crate::propagator::{PropagatorKind, PropagatorSpec};
use crate::trajectory::Trajectory;

/// Acceptance thresholds for a scattering run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterThresholds {
    /// Final tail must be below `tail · ‖u₋‖_D`.
    pub tail: f64,
    /// Largest admissible fraction of mass in the outer boundary layer.
    pub boundary_mass: f64,
    /// Width of that layer as a fraction of the half box.
    pub boundary_fraction: f64,
    /// Tails below `noise_floor · ‖u₋‖_D` count as zero.
    pub noise_floor: f64,
}

impl Default for ScatterThresholds {
    fn default() -> Self {
        Self {
            tail: 1e-4,
            boundary_mass: 1e-6,
            boundary_fraction: 0.1,
            noise_floor: 1e-13,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScatteringResult {
    pub u_minus: ComplexField,
    pub u_at_zero: ComplexField,
    pub u_plus: ComplexField,
    pub horizon: f64,
    /// `(c, sup_{c ≤ s ≤ T} ‖U(−s)u(s) − u₊‖_D + sup_{c ≤ s ≤ T} ‖U(s)u(−s) − u₋‖_D)`
    /// at `c ∈ {T/16, T/8, T/4, T/2}`, suprema taken over saved nodes.
    pub cauchy_tail: Vec<(f64, f64)>,
    pub boundary_mass_max: f64,
    /// Full-trajectory norms; absent when no Strichartz pair exists for `p`.
    pub norm_table: Option<NormReport>,
    pub converged: bool,
    pub conservation: ConservationLog,
    pub trajectory: Trajectory,
}

impl ScatteringResult {
    pub fn final_tail(&self) -> f64 {
        self.cauchy_tail.last().map_or(0.0, |&(_, v)| v)
    }
}

/// Exponents used for the diagnostic norms of a given equation: the
/// Strichartz pair for the PDEs, `q = 8` with the coupling weight for the toy.
pub fn default_exponents(nl: &NonlinearitySpec) -> Result<StrichartzExponents> {
    if nl.is_toy() {
        StrichartzExponents::toy(nl.p(), 8.0, nl.coupling())
    } else {
        StrichartzExponents::for_power(nl.p())
    }
}

fn boundary_fraction(f: &ComplexField, fraction: f64) -> f64 {
    let grid = f.grid();
    if !grid.is_periodic() {
        return 0.0;
    }
    let n = grid.len();
    let (mut edge, mut total) = (0.0, 0.0);
    for (i, z) in f.values().iter().enumerate() {
        let m = z.norm_sqr();
        total += m;
        if grid.is_boundary_site(i % n, fraction) {
            edge += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        edge / total
    }
}

/// Scatter `u₋` through the nonlinear flow on `[−T, T]`.
pub fn scatter(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    thresholds: &ScatterThresholds,
    u_minus: &ComplexField,
) -> Result<ScatteringResult> {
    check_state(prop, nl, u_minus)?;
    let horizon = cfg.horizon;
    let u_start = prop.apply_u(-horizon, u_minus)?;
    let (traj, conservation) = evolve_nonlinear(prop, nl, cfg, &u_start, -horizon, horizon)?;
    let u_plus = prop.apply_u(-horizon, traj.last())?;
    let u_at_zero = traj.snapshot(traj.nearest_index(0.0)).clone();

    // distances of the saved profiles from both asymptotic states; the tail at
    // c adds the suprema over s ≥ c and s ≤ −c, since truncating at either
    // end moves u₊
    let mut ahead = Vec::with_capacity(traj.len());
    let mut behind = Vec::with_capacity(traj.len());
    for (&t, snap) in traj.times().iter().zip(traj.snapshots()) {
        let profile = prop.apply_u(-t, snap)?;
        ahead.push(d_norm(&profile.sub(&u_plus)?)?);
        behind.push(d_norm(&profile.sub(u_minus)?)?);
    }
    let cauchy_tail = (1..=4)
        .rev()
        .map(|k| {
            let c = horizon / f64::from(1u32 << k);
            let from = traj.nearest_index(c);
            let to = traj.nearest_index(-c);
            let fwd = ahead[from..].iter().cloned().fold(0.0, f64::max);
            let bwd = behind[..=to].iter().cloned().fold(0.0, f64::max);
            (c, fwd + bwd)
        })
        .collect::<Vec<_>>();

    let boundary_mass_max = traj
        .snapshots()
        .iter()
        .map(|s| boundary_fraction(s, thresholds.boundary_fraction))
        .fold(0.0, f64::max);
    let scale = d_norm(u_minus)?;
    let final_tail = cauchy_tail.last().map_or(0.0, |&(_, v)| v);
    if boundary_mass_max > thresholds.boundary_mass {
        return Err(Error::Tainted {
            boundary_mass: boundary_mass_max,
            threshold: thresholds.boundary_mass,
            final_tail,
        });
    }
    let floor = thresholds.noise_floor * scale;
    let decreasing = cauchy_tail
        .windows(2)
        .all(|w| w[1].1 <= floor || w[1].1 < w[0].1);
    let converged = decreasing && final_tail <= thresholds.tail * scale;
    if !converged {
        log::info!("scattering run not converged: tails {cauchy_tail:?}");
    }

    let norm_table = match default_exponents(nl) {
        Ok(exps) => Some(NodeNorms::compute(&traj, &exps, false)?.report(-horizon, horizon)?),
        Err(_) => None,
    };
    Ok(ScatteringResult {
        u_minus: u_minus.clone(),
        u_at_zero,
        u_plus,
        horizon,
        cauchy_tail,
        boundary_mass_max,
        norm_table,
        converged,
        conservation,
        trajectory: traj,
    })
}

/// `dS(u₋)[v₋]`: tangent flow along the background from `U(−T)v₋`, pulled
/// back by `U(−T)`.
pub fn linearized_scatter(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    background: &ScatteringResult,
    v_minus: &ComplexField,
) -> Result<ComplexField> {
    Ok(
        linearized_scatter_many(prop, nl, cfg, background, core::slice::from_ref(v_minus))?
            .pop()
            .expect("one direction"),
    )
}

/// [`linearized_scatter`] for several directions in one pass.
pub fn linearized_scatter_many(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    background: &ScatteringResult,
    v_minus: &[ComplexField],
) -> Result<Vec<ComplexField>> {
    if !background.converged {
        return Err(Error::NotConverged {
            final_tail: background.final_tail(),
        });
    }
    let horizon = background.horizon;
    let steps = cfg.steps_between(-horizon, horizon)?;
    let cfg = IntegratorConfig {
        horizon,
        save_every: steps.max(1),
        ..*cfg
    };
    let starts = v_minus
        .iter()
        .map(|v| prop.apply_u(-horizon, v))
        .collect::<Result<Vec<_>>>()?;
    solve_tangents(prop, nl, &cfg, &background.trajectory, &starts, -horizon)?
        .iter()
        .map(|w| prop.apply_u(-horizon, w.last()))
        .collect()
}

/// `N₁(ū, v)(t) = ∫_{t₀}^{t} U(t − s)Φ₁(ū(s))[v(s)] ds` on the nodes of
/// `background`, by cumulative trapezoid on profiles.
pub fn duhamel_n1(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    background: &Trajectory,
    probe: &Trajectory,
) -> Result<Trajectory> {
    if background.times().len() != probe.times().len()
        || (background.start() - probe.start()).abs() > 1e-12 * background.dt().max(1.0)
    {
        return Err(Error::TimeMisalignment(
            "probe must share the background's nodes".into(),
        ));
    }
    let sites = background.grid().len();
    let len = background.first().values().len();
    let mut scratch = Scratch::new(len);
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let mut previous: Option<Vec<Complex64>> = None;
    let dt = background.dt();
    let mut out = Vec::with_capacity(background.len());
    for ((&t, u), v) in background
        .times()
        .iter()
        .zip(background.snapshots())
        .zip(probe.snapshots())
    {
        u.expect_same_shape(v)?;
        let mut integrand = vec![Complex64::new(0.0, 0.0); len];
        nl.add_n_j_raw(
            t,
            sites,
            u.values(),
            &[v.values()],
            1.0,
            &mut scratch,
            &mut integrand,
        );
        prop.multiplier(-t).apply(&mut integrand);
        if let Some(prev) = &previous {
            for ((a, &x), &y) in acc.iter_mut().zip(prev).zip(&integrand) {
                *a += (x + y) * (0.5 * dt);
            }
        }
        let mut value = acc.clone();
        prop.multiplier(t).apply(&mut value);
        out.push(ComplexField::new(u.grid().clone(), u.components(), value)?);
        previous = Some(integrand);
    }
    Trajectory::new(background.times().to_vec(), out)
}

/// Empirical constant of the `j = 1` multilinear estimate on `background`:
/// least-squares slope of `‖N₁(ū, v)‖_F` against
/// `‖ū‖_{F₂}^δ ‖ū‖_F^{p−1−δ} ‖v‖_F` over `probes` free waves `v = U(t)g`
/// with seeded random `g`.
pub fn measure_h2_constant(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    background: &Trajectory,
    exps: &StrichartzExponents,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    let full = (background.start(), background.end());
    let bg = NodeNorms::compute(background, exps, false)?.report(full.0, full.1)?;
    let p = f64::from(nl.p());
    let bg_factor = bg.f2_norm.powf(exps.delta) * bg.f_norm.powf(p - 1.0 - exps.delta);
    if bg_factor == 0.0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = background.grid().clone();
    let (mut xs, mut ys) = (Vec::with_capacity(probes), Vec::with_capacity(probes));
    for _ in 0..probes {
        let g = random_probe(prop, &grid, background.components(), &mut rng)?;
        let v = background.map_snapshots(|t, _| prop.apply_u(t, &g))?;
        let n1 = duhamel_n1(prop, nl, background, &v)?;
        let vn = NodeNorms::compute(&v, exps, false)?
            .report(full.0, full.1)?
            .f_norm;
        let nn = NodeNorms::compute(&n1, exps, false)?
            .report(full.0, full.1)?
            .f_norm;
        xs.push(bg_factor * vn);
        ys.push(nn);
    }
    slope_through_origin(&xs, &ys)
}

fn random_probe(
    prop: &PropagatorSpec,
    grid: &crate::grid::GridRef,
    components: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ComplexField> {
    let seed = rng.gen::<u64>();
    match prop.kind() {
        PropagatorKind::ToyDiagonal { .. } => crate::profiles::random_toy(grid, seed, 1.0),
        PropagatorKind::KleinGordon { .. } => {
            crate::profiles::random_smooth_wave(grid, seed, 3, 1.0)
        }
        PropagatorKind::SchrodingerFree => {
            debug_assert_eq!(components, 1);
            crate::profiles::random_smooth(grid, seed, 3, 1.0)
        }
    }
}

/// Greedy left-to-right partition of the background's time span into
/// maximal intervals with `C·‖1_I ū‖_{F₂}^δ ‖ū‖_F^{p−1−δ} ≤ ½`.
pub fn partition_intervals(
    background: &Trajectory,
    exps: &StrichartzExponents,
    c_emp: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(c_emp.is_finite() && c_emp >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "constant {c_emp} must be finite and >= 0"
        )));
    }
    let norms = NodeNorms::compute(background, exps, false)?;
    let times = norms.times();
    let last = times.len() - 1;
    let full = norms.report(times[0], times[last])?;
    let p = f64::from(exps.p);
    let outer = c_emp * full.f_norm.powf(p - 1.0 - exps.delta);
    let bound = |i: usize, j: usize| outer * norms.f2_between(i, j).powf(exps.delta);
    if outer == 0.0 || bound(0, last) <= 0.5 {
        return Ok(vec![(times[0], times[last])]);
    }
    let mut intervals = Vec::new();
    let mut start = 0;
    while start < last {
        if bound(start, start + 1) > 0.5 {
            return Err(Error::PartitionInfeasible { t: times[start] });
        }
        // bound is monotone in the right endpoint, so bisect for the last fit
        let (mut lo, mut hi) = (start + 1, last);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if bound(start, mid) <= 0.5 {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        intervals.push((times[start], times[lo]));
        start = lo;
    }
    Ok(intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::Scheme;
    use crate::grid::SpatialGrid;
    use crate::profiles::{gaussian, random_toy};

    fn toy() -> (PropagatorSpec, NonlinearitySpec) {
        let grid = SpatialGrid::toy(4).unwrap();
        (
            PropagatorSpec::toy_default(grid).unwrap(),
            NonlinearitySpec::toy_gauge_power(5, 1.0).unwrap(),
        )
    }

    #[test]
    fn zero_data_scatters_to_zero() {
        let (prop, nl) = toy();
        let zero = ComplexField::zeros(prop.grid().clone(), 1);
        let cfg = IntegratorConfig::new(0.1, 5.0, Scheme::LawsonRk4);
        let res = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &zero).unwrap();
        assert!(res.converged && res.u_plus.is_zero() && res.u_at_zero.is_zero());
    }

    #[test]
    fn free_flow_scatters_to_itself() {
        let grid = SpatialGrid::periodic(40.0, 256).unwrap();
        let prop = PropagatorSpec::schrodinger(grid.clone()).unwrap();
        let nl = NonlinearitySpec::gauge_power(5, 0.0).unwrap();
        let u = gaussian(&grid, 0.5, 1.0, 0.0).unwrap();
        let cfg = IntegratorConfig::new(0.01, 2.0, Scheme::StrangSplit).with_save_every(10);
        let res = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &u).unwrap();
        assert!(res.u_plus.max_rel_diff(&u) < 1e-12);
        assert!(res.converged);
    }

    #[test]
    fn wraparound_is_flagged() {
        let grid = SpatialGrid::periodic(10.0, 128).unwrap();
        let prop = PropagatorSpec::schrodinger(grid.clone()).unwrap();
        let nl = NonlinearitySpec::gauge_power(5, 1.0).unwrap();
        let u = gaussian(&grid, 0.3, 1.0, 0.0).unwrap();
        let cfg = IntegratorConfig::new(0.01, 4.0, Scheme::StrangSplit).with_save_every(10);
        let err = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &u).unwrap_err();
        assert!(matches!(err, Error::Tainted { .. }));
    }

    #[test]
    fn linearised_map_is_free_on_zero_background() {
        let (prop, nl) = toy();
        let zero = ComplexField::zeros(prop.grid().clone(), 1);
        let cfg = IntegratorConfig::new(0.1, 5.0, Scheme::LawsonRk4);
        let bg = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &zero).unwrap();
        let v = random_toy(prop.grid(), 5, 1.0).unwrap();
        let out = linearized_scatter(&prop, &nl, &cfg, &bg, &v).unwrap();
        assert!(out.max_rel_diff(&v) < 1e-12);
    }

    #[test]
    fn zero_background_needs_one_interval() {
        let (prop, nl) = toy();
        let zero = ComplexField::zeros(prop.grid().clone(), 1);
        let cfg = IntegratorConfig::new(0.1, 5.0, Scheme::LawsonRk4);
        let bg = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &zero).unwrap();
        let exps = default_exponents(&nl).unwrap();
        let parts = partition_intervals(&bg.trajectory, &exps, 10.0).unwrap();
        assert_eq!(parts, vec![(-5.0, 5.0)]);
    }

    #[test]
    fn duhamel_vanishes_for_linear_problem() {
        let (prop, _) = toy();
        let nl = NonlinearitySpec::toy_gauge_power(5, 0.0).unwrap();
        let u = random_toy(prop.grid(), 1, 0.5).unwrap();
        let cfg = IntegratorConfig::new(0.1, 2.0, Scheme::LawsonRk4);
        let bg = scatter(&prop, &nl, &cfg, &ScatterThresholds::default(), &u).unwrap();
        let n1 = duhamel_n1(&prop, &nl, &bg.trajectory, &bg.trajectory).unwrap();
        assert!(n1.snapshots().iter().all(|s| s.is_zero()));
    }
}
