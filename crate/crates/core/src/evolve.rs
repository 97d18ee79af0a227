//! Time integrators for the nonlinear flow and its tangent hierarchy.
//!
//! The nonlinear flow `u' = Lu + Φ(t, u)` is advanced either by Strang
//! splitting (gauge-invariant powers, whose nonlinear substep is an exact
//! phase rotation) or by the Lawson fourth-order exponential Runge–Kutta
//! scheme. Tangent solves always use Lawson–RK4 through [`LawsonEngine`],
//! which advances the background and every hierarchy level inside the same
//! step. The level-`m` stage derivative is the `ε^{m+1}` coefficient of
//! `Φ(Y_bg + Σ_ℓ ε^{ℓ+1} Y_ℓ)`, so when the background itself came from the
//! Lawson scheme with the same step the levels are the exact Taylor
//! coefficients of the discrete flow map.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::nonlinearity::{factorial, NonlinearityKind, NonlinearitySpec, Scratch};
use crate::propagator::{Multiplier, PropagatorKind, PropagatorSpec};
use crate::trajectory::Trajectory;

/// Extra source term added to the right-hand side at time `t`.
type Forcing<'a> = &'a mut dyn FnMut(f64, &mut [Complex64]) -> Result<()>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    StrangSplit,
    LawsonRk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// Final time `T`; scattering runs cover `[-T, T]`.
    pub horizon: f64,
    /// Sampling stride (in steps) of the conserved-quantity log.
    pub conservation_check_every: usize,
    /// Store every `save_every`-th step in returned trajectories.
    pub save_every: usize,
    /// Warn when `dt` times the largest nonlinear rate exceeds this.
    pub stability_threshold: f64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, horizon: f64, scheme: Scheme) -> Self {
        Self {
            dt,
            scheme,
            horizon,
            conservation_check_every: 100,
            save_every: 1,
            stability_threshold: 0.5,
        }
    }

    pub fn with_save_every(mut self, save_every: usize) -> Self {
        self.save_every = save_every;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time step {} must be positive",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be positive",
                self.horizon
            )));
        }
        if self.save_every == 0 || self.conservation_check_every == 0 {
            return Err(Error::InvalidParameter("strides must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of steps of size `dt` covering `[start, end]` exactly.
    pub fn steps_between(&self, start: f64, end: f64) -> Result<usize> {
        self.validate()?;
        let span = end - start;
        if !(span >= 0.0) {
            return Err(Error::EmptyInterval { start, end });
        }
        let steps = (span / self.dt).round();
        if (steps * self.dt - span).abs() > 1e-9 * span.abs().max(self.dt) {
            return Err(Error::TimeMisalignment(format!(
                "dt = {} does not divide the span {span}",
                self.dt
            )));
        }
        let steps = steps as usize;
        if !steps.is_multiple_of(self.save_every) {
            return Err(Error::TimeMisalignment(format!(
                "save stride {} does not divide {steps} steps",
                self.save_every
            )));
        }
        Ok(steps)
    }
}

fn check_pairing(prop: &PropagatorSpec, nl: &NonlinearitySpec) -> Result<()> {
    let ok = matches!(
        (prop.kind(), nl.kind()),
        (
            PropagatorKind::SchrodingerFree,
            NonlinearityKind::GaugePower
        ) | (
            PropagatorKind::KleinGordon { .. },
            NonlinearityKind::RealOddPower
        ) | (
            PropagatorKind::ToyDiagonal { .. },
            NonlinearityKind::ToyGaugePower
        ) | (
            PropagatorKind::ToyDiagonal { .. },
            NonlinearityKind::ToyConvolutionCubic { .. }
        )
    );
    if ok {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "{:?} nonlinearity with {:?} propagator",
            nl.kind(),
            prop.kind()
        )))
    }
}

pub(crate) fn check_state(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    u: &ComplexField,
) -> Result<()> {
    check_pairing(prop, nl)?;
    prop.check_field(u)?;
    nl.check_field(u)?;
    u.ensure_finite("initial data")
}

fn is_finite(values: &[Complex64]) -> bool {
    values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest pointwise nonlinear rate, used for the Lawson stability warning.
fn nonlinear_rate(nl: &NonlinearitySpec, u: &ComplexField) -> f64 {
    let p = nl.p() as i32;
    let sup = u.component(0).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let base = nl.lambda().abs() * p as f64 * sup.powi(p - 1);
    match nl.kind() {
        NonlinearityKind::ToyConvolutionCubic { kernel } => {
            let d = u.grid().len();
            let row = (0..d)
                .map(|m| (0..d).map(|k| kernel[m * d + k].abs()).sum::<f64>())
                .fold(0.0, f64::max);
            base * row
        }
        _ => base,
    }
}

/// Mass, energy and their samples along a nonlinear solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConservationLog {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<Option<f64>>,
}

impl ConservationLog {
    fn push(
        &mut self,
        t: f64,
        prop: &PropagatorSpec,
        nl: &NonlinearitySpec,
        u: &ComplexField,
    ) -> Result<()> {
        self.times.push(t);
        self.mass.push(mass(u));
        self.energy.push(energy(prop, nl, u)?);
        Ok(())
    }

    pub fn mass_drift(&self) -> f64 {
        relative_drift(&self.mass)
    }

    pub fn energy_drift(&self) -> Option<f64> {
        let e: Option<Vec<f64>> = self.energy.iter().cloned().collect();
        e.map(|e| relative_drift(&e))
    }
}

fn relative_drift(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return 0.0;
    };
    let worst = values.iter().map(|v| (v - first).abs()).fold(0.0, f64::max);
    if first == 0.0 {
        worst
    } else {
        worst / first.abs()
    }
}

/// `‖u‖²_{L²}` (all components).
pub fn mass(u: &ComplexField) -> f64 {
    let n = u.l2_norm();
    n * n
}

/// Conserved energy where one exists: Schrödinger
/// `½‖∇u‖² + 2λ/(p+1) ∫|u|^{p+1}`, Klein–Gordon
/// `½(‖∂_t u‖² + ‖∇u‖² + m²‖u‖²) + λ/(p+1) ∫ Re u^{p+1}`. The toy couplings
/// depend on time, so there is none.
pub fn energy(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    u: &ComplexField,
) -> Result<Option<f64>> {
    let grid = u.grid();
    let dx = grid.dx();
    let p = nl.p() as i32;
    let lam = nl.lambda();
    match (prop.kind(), nl.kind()) {
        (PropagatorKind::SchrodingerFree, NonlinearityKind::GaugePower) => {
            let g = grid.gradient(u.values())?;
            let kinetic: f64 = g.iter().map(|z| z.norm_sqr()).sum();
            let potential: f64 = u.values().iter().map(|z| z.norm().powi(p + 1)).sum();
            Ok(Some(
                dx * (0.5 * kinetic + 2.0 * lam / (p as f64 + 1.0) * potential),
            ))
        }
        (PropagatorKind::KleinGordon { mass }, NonlinearityKind::RealOddPower) => {
            let v = u.component(0);
            let w = u.component(1);
            let g = grid.gradient(v)?;
            let quad: f64 = v
                .iter()
                .zip(w)
                .zip(&g)
                .map(|((a, b), c)| b.norm_sqr() + c.norm_sqr() + mass * mass * a.norm_sqr())
                .sum();
            let potential: f64 = v.iter().map(|z| z.powi(p + 1).re).sum();
            Ok(Some(dx * (0.5 * quad + lam / (p as f64 + 1.0) * potential)))
        }
        _ => Ok(None),
    }
}

/// Lawson–RK4 stepper for the background and a stack of tangent levels.
pub(crate) struct LawsonEngine<'a> {
    nl: &'a NonlinearitySpec,
    half: Multiplier,
    h: f64,
    sites: usize,
    // level m (0-based): terms (j, level indices, multiplicity) of its source
    sources: Vec<Vec<(usize, Vec<usize>, f64)>>,
    scratch: Scratch,
    bg_stages: StageBuffers,
    level_stages: Vec<StageBuffers>,
}

struct StageBuffers {
    y: [Vec<Complex64>; 4],
    k: [Vec<Complex64>; 4],
    a: Vec<Complex64>,
}

impl Default for StageBuffers {
    fn default() -> Self {
        Self::new(0)
    }
}

impl StageBuffers {
    fn new(len: usize) -> Self {
        let z = || vec![Complex64::new(0.0, 0.0); len];
        Self {
            y: [z(), z(), z(), z()],
            k: [z(), z(), z(), z()],
            a: z(),
        }
    }
}

/// Ordered-tuple sum as multisets: for level `m`, every `(ℓ_1 ≤ … ≤ ℓ_j)`
/// with `j ≥ 2` and `j + Σℓ = m + 1`, weighted by the number of orderings.
pub(crate) fn source_terms(m: usize, p: usize) -> Result<Vec<(usize, Vec<usize>, f64)>> {
    fn rec(
        remaining_slots: usize,
        remaining_sum: usize,
        min: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if remaining_slots == 0 {
            if remaining_sum == 0 {
                out.push(current.clone());
            }
            return;
        }
        let mut l = min;
        while l * remaining_slots <= remaining_sum {
            current.push(l);
            rec(remaining_slots - 1, remaining_sum - l, l, current, out);
            current.pop();
            l += 1;
        }
    }
    let mut terms = Vec::new();
    for j in 2..=p.min(m + 1) {
        let mut sets = Vec::new();
        rec(j, m + 1 - j, 0, &mut Vec::new(), &mut sets);
        for set in sets {
            if set.iter().any(|&l| l + 1 > m) {
                return Err(Error::Bookkeeping(format!(
                    "level {m} would consume level {:?} (j = {j})",
                    set
                )));
            }
            let mut orderings = factorial(j);
            let mut i = 0;
            while i < set.len() {
                let run = set[i..].iter().take_while(|&&v| v == set[i]).count();
                orderings /= factorial(run);
                i += run;
            }
            terms.push((j, set, orderings));
        }
    }
    Ok(terms)
}

impl<'a> LawsonEngine<'a> {
    pub(crate) fn new(
        prop: &PropagatorSpec,
        nl: &'a NonlinearitySpec,
        h: f64,
        levels: usize,
    ) -> Result<Self> {
        let sources = (0..levels)
            .map(|m| source_terms(m, nl.p() as usize))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_sources(prop, nl, h, sources))
    }

    /// `count` uncoupled tangent directions along one background.
    pub(crate) fn independent(
        prop: &PropagatorSpec,
        nl: &'a NonlinearitySpec,
        h: f64,
        count: usize,
    ) -> Self {
        Self::with_sources(prop, nl, h, vec![Vec::new(); count])
    }

    fn with_sources(
        prop: &PropagatorSpec,
        nl: &'a NonlinearitySpec,
        h: f64,
        sources: Vec<Vec<(usize, Vec<usize>, f64)>>,
    ) -> Self {
        let sites = prop.grid().len();
        let len = sites * prop.components();
        Self {
            nl,
            half: prop.multiplier(0.5 * h),
            h,
            sites,
            level_stages: (0..sources.len()).map(|_| StageBuffers::new(len)).collect(),
            sources,
            scratch: Scratch::new(len),
            bg_stages: StageBuffers::new(len),
        }
    }

    fn eval_bg(&mut self, t: f64, y: &[Complex64], out: &mut [Complex64]) {
        self.nl.phi_raw(t, self.sites, y, out);
    }

    // level m stage derivative at time t given stage values of bg and levels 0..=m
    fn eval_level(
        &mut self,
        m: usize,
        t: f64,
        bg: &[Complex64],
        stage_levels: &[&[Complex64]],
        out: &mut [Complex64],
    ) {
        for z in out.iter_mut() {
            *z = Complex64::new(0.0, 0.0);
        }
        let nl = self.nl;
        nl.add_linearized_raw(t, self.sites, bg, stage_levels[m], 1.0, out);
        let terms = core::mem::take(&mut self.sources[m]);
        for (_, set, weight) in &terms {
            let args: Vec<&[Complex64]> = set.iter().map(|&l| stage_levels[l]).collect();
            nl.add_n_j_raw(t, self.sites, bg, &args, *weight, &mut self.scratch, out);
        }
        self.sources[m] = terms;
    }

    /// One step from `t`: advances `bg` and all `levels` in place. `extra`
    /// adds a known forcing to level 0 at the stage times.
    pub(crate) fn step(
        &mut self,
        t: f64,
        bg: &mut [Complex64],
        levels: &mut [Vec<Complex64>],
        mut extra: Option<Forcing<'_>>,
    ) -> Result<()> {
        let h = self.h;
        let times = [t, t + 0.5 * h, t + 0.5 * h, t + h];
        if levels.len() != self.level_stages.len() {
            return Err(Error::Bookkeeping(format!(
                "engine built for {} levels, stepped with {}",
                self.level_stages.len(),
                levels.len()
            )));
        }
        let mut bgs = core::mem::take(&mut self.bg_stages);
        let mut lv = core::mem::take(&mut self.level_stages);

        // stage 1
        bgs.y[0].copy_from_slice(bg);
        for (l, s) in levels.iter().zip(lv.iter_mut()) {
            s.y[0].copy_from_slice(l);
        }
        self.stage_derivatives(0, times[0], &mut bgs, &mut lv, &mut extra)?;

        // A = E y_n; Y2 = E(y_n + h/2 K1)
        for s in core::iter::once(&mut bgs).chain(lv.iter_mut()) {
            s.a.copy_from_slice(&s.y[0]);
            self.half.apply(&mut s.a);
            let (y0, rest) = s.y.split_at_mut(1);
            for ((y1, &y), &k) in rest[0].iter_mut().zip(&y0[0]).zip(&s.k[0]) {
                *y1 = y + k * (0.5 * h);
            }
            self.half.apply(&mut rest[0]);
        }
        self.stage_derivatives(1, times[1], &mut bgs, &mut lv, &mut extra)?;

        // Y3 = A + h/2 K2
        for s in core::iter::once(&mut bgs).chain(lv.iter_mut()) {
            for ((y, &a), &k) in s.y[2].iter_mut().zip(&s.a).zip(&s.k[1]) {
                *y = a + k * (0.5 * h);
            }
        }
        self.stage_derivatives(2, times[2], &mut bgs, &mut lv, &mut extra)?;

        // Y4 = E(A + h K3)
        for s in core::iter::once(&mut bgs).chain(lv.iter_mut()) {
            for ((y, &a), &k) in s.y[3].iter_mut().zip(&s.a).zip(&s.k[2]) {
                *y = a + k * h;
            }
            self.half.apply(&mut s.y[3]);
        }
        self.stage_derivatives(3, times[3], &mut bgs, &mut lv, &mut extra)?;

        // y_{n+1} = E(E(y_n + h/6 K1) + h/3 (K2 + K3)) + h/6 K4
        let update = |s: &mut StageBuffers, target: &mut [Complex64]| {
            for ((o, &y), &k) in target.iter_mut().zip(&s.y[0]).zip(&s.k[0]) {
                *o = y + k * (h / 6.0);
            }
            self.half.apply(target);
            for ((o, &k2), &k3) in target.iter_mut().zip(&s.k[1]).zip(&s.k[2]) {
                *o += (k2 + k3) * (h / 3.0);
            }
            self.half.apply(target);
            for (o, &k4) in target.iter_mut().zip(&s.k[3]) {
                *o += k4 * (h / 6.0);
            }
        };
        update(&mut bgs, bg);
        for (s, l) in lv.iter_mut().zip(levels.iter_mut()) {
            update(s, l);
        }
        self.bg_stages = bgs;
        self.level_stages = lv;
        Ok(())
    }

    fn stage_derivatives(
        &mut self,
        stage: usize,
        t: f64,
        bgs: &mut StageBuffers,
        lv: &mut [StageBuffers],
        extra: &mut Option<Forcing<'_>>,
    ) -> Result<()> {
        let mut kbg = core::mem::take(&mut bgs.k[stage]);
        self.eval_bg(t, &bgs.y[stage], &mut kbg);
        bgs.k[stage] = kbg;
        for m in 0..lv.len() {
            let mut out = core::mem::take(&mut lv[m].k[stage]);
            {
                let stage_levels: Vec<&[Complex64]> =
                    lv[..=m].iter().map(|s| s.y[stage].as_slice()).collect();
                self.eval_level(m, t, &bgs.y[stage], &stage_levels, &mut out);
            }
            if m == 0 {
                if let Some(f) = extra.as_mut() {
                    f(t, &mut out)?;
                }
            }
            lv[m].k[stage] = out;
        }
        Ok(())
    }
}

/// Strang step `U(h/2) ∘ N(h) ∘ U(h/2)` with the exact phase rotation
/// `u ↦ u·exp(−iλ|u|^{p−1} ∫c)` as nonlinear substep.
struct StrangStepper<'a> {
    nl: &'a NonlinearitySpec,
    half: Multiplier,
    h: f64,
}

impl StrangStepper<'_> {
    fn step(&self, t: f64, u: &mut [Complex64]) {
        self.half.apply(u);
        let weight = self.nl.lambda() * self.nl.coupling().integral(t, t + self.h);
        let half = ((self.nl.p() - 1) / 2) as i32;
        for z in u.iter_mut() {
            *z *= Complex64::from_polar(1.0, -weight * z.norm_sqr().powi(half));
        }
        self.half.apply(u);
    }
}

// one stepper lives per evolution; boxing buys nothing
#[allow(clippy::large_enum_variant)]
enum Stepper<'a> {
    Strang(StrangStepper<'a>),
    Lawson(LawsonEngine<'a>),
}

/// Nonlinear flow from `u(t_init) = u_init` to `cfg.horizon`.
pub fn solve_nonlinear(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    u_init: &ComplexField,
    t_init: f64,
) -> Result<Trajectory> {
    Ok(evolve_nonlinear(prop, nl, cfg, u_init, t_init, cfg.horizon)?.0)
}

/// Nonlinear flow on `[t_init, t_final]` with the conserved-quantity log.
pub fn evolve_nonlinear(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    u_init: &ComplexField,
    t_init: f64,
    t_final: f64,
) -> Result<(Trajectory, ConservationLog)> {
    check_state(prop, nl, u_init)?;
    let steps = cfg.steps_between(t_init, t_final)?;
    let h = cfg.dt;
    let grid = u_init.grid().clone();
    let comps = u_init.components();
    if cfg.scheme == Scheme::StrangSplit && !nl.is_gauge_power() {
        return Err(Error::Unsupported(
            "Strang splitting needs a gauge-invariant power nonlinearity".into(),
        ));
    }
    if cfg.scheme == Scheme::LawsonRk4 {
        let rate = h * nonlinear_rate(nl, u_init);
        if rate > cfg.stability_threshold {
            log::warn!(
                "Lawson step dt = {h} resolves nonlinear phase poorly (dt * rate = {rate:.3})"
            );
        }
    }

    let mut log = ConservationLog::default();
    log.push(t_init, prop, nl, u_init)?;
    let mut snapshots = Vec::with_capacity(steps / cfg.save_every + 1);
    snapshots.push(u_init.clone());
    let mut u = u_init.values().to_vec();

    let mut stepper = match cfg.scheme {
        Scheme::StrangSplit => Stepper::Strang(StrangStepper {
            nl,
            half: prop.multiplier(0.5 * h),
            h,
        }),
        Scheme::LawsonRk4 => Stepper::Lawson(LawsonEngine::new(prop, nl, h, 0)?),
    };
    for n in 0..steps {
        let t = t_init + n as f64 * h;
        match &mut stepper {
            Stepper::Strang(s) => s.step(t, &mut u),
            Stepper::Lawson(e) => e.step(t, &mut u, &mut [], None)?,
        }
        if !is_finite(&u) {
            return Err(Error::Diverged { t_last: t });
        }
        let t_next = t_init + (n + 1) as f64 * h;
        let saved = (n + 1) % cfg.save_every == 0;
        let checked = (n + 1) % cfg.conservation_check_every == 0 || n + 1 == steps;
        if saved || checked {
            let f = ComplexField::from_parts_unchecked(grid.clone(), comps, u.clone());
            if checked {
                log.push(t_next, prop, nl, &f)?;
            }
            if saved {
                snapshots.push(f);
            }
        }
    }
    Ok((
        Trajectory::from_uniform(t_init, h * cfg.save_every as f64, snapshots),
        log,
    ))
}

/// Tangent levels along `background`, integrated jointly from `t_init` to
/// `cfg.horizon`. Level 0 solves `w' = Lw + Φ₁(ū)[w] (+ forcing)`, level
/// `m ≥ 1` adds the hierarchy source built from levels `< m`.
pub(crate) fn solve_levels(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    background: &Trajectory,
    inits: &[ComplexField],
    t_init: f64,
    coupled: bool,
    mut forcing: Option<Forcing<'_>>,
) -> Result<Vec<Trajectory>> {
    let h = cfg.dt;
    let steps = cfg.steps_between(t_init, cfg.horizon)?;
    check_pairing(prop, nl)?;
    let first = background.first();
    for w in inits {
        prop.check_field(w)?;
        first.expect_same_shape(w)?;
        w.ensure_finite("tangent initial data")?;
    }
    prop.check_field(first)?;
    if (background.start() - t_init).abs() > 1e-9 * h.max(t_init.abs() * 1e-3) {
        return Err(Error::TimeMisalignment(format!(
            "background starts at {} but the tangent solve at {t_init}",
            background.start()
        )));
    }
    if background.end() < cfg.horizon - 1e-9 * h {
        return Err(Error::TimeMisalignment(format!(
            "background ends at {} before the horizon {}",
            background.end(),
            cfg.horizon
        )));
    }
    let stride = if background.len() > 1 {
        let ratio = background.dt() / h;
        let s = ratio.round();
        if s < 1.0 || (ratio - s).abs() > 1e-6 {
            return Err(Error::TimeMisalignment(format!(
                "background spacing {} is not a multiple of dt = {h}",
                background.dt()
            )));
        }
        s as usize
    } else {
        usize::MAX
    };

    let grid = first.grid().clone();
    let comps = first.components();
    let mut engine = if coupled {
        LawsonEngine::new(prop, nl, h, inits.len())?
    } else {
        LawsonEngine::independent(prop, nl, h, inits.len())
    };
    let mut bg = first.values().to_vec();
    let mut levels: Vec<Vec<Complex64>> = inits.iter().map(|w| w.values().to_vec()).collect();
    let mut saved: Vec<Vec<ComplexField>> = inits.iter().map(|w| vec![w.clone()]).collect();
    for n in 0..steps {
        let t = t_init + n as f64 * h;
        if stride != usize::MAX && n % stride == 0 {
            bg.copy_from_slice(background.snapshot(n / stride).values());
        }
        engine.step(
            t,
            &mut bg,
            &mut levels,
            forcing.as_mut().map(|f| &mut **f as _),
        )?;
        for l in &levels {
            if !is_finite(l) {
                return Err(Error::Diverged { t_last: t });
            }
        }
        if (n + 1) % cfg.save_every == 0 {
            for (out, l) in saved.iter_mut().zip(&levels) {
                out.push(ComplexField::from_parts_unchecked(
                    grid.clone(),
                    comps,
                    l.clone(),
                ));
            }
        }
    }
    Ok(saved
        .into_iter()
        .map(|s| Trajectory::from_uniform(t_init, h * cfg.save_every as f64, s))
        .collect())
}

/// Several uncoupled linearised flows along one background, sharing the
/// background re-stepping.
pub fn solve_tangents(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    background: &Trajectory,
    w_inits: &[ComplexField],
    t_init: f64,
) -> Result<Vec<Trajectory>> {
    solve_levels(prop, nl, cfg, background, w_inits, t_init, false, None)
}

/// Linearised flow along `background` from `w(t_init) = w_init`, optionally
/// forced by `source` sampled on the background's time nodes.
///
/// Source values between nodes come from cubic Lagrange interpolation of
/// the profiles `U(−t)s(t)`, which vary slowly even when `s` oscillates.
pub fn solve_tangent(
    prop: &PropagatorSpec,
    nl: &NonlinearitySpec,
    cfg: &IntegratorConfig,
    background: &Trajectory,
    w_init: &ComplexField,
    t_init: f64,
    source: Option<&Trajectory>,
) -> Result<Trajectory> {
    let Some(source) = source else {
        return Ok(solve_levels(
            prop,
            nl,
            cfg,
            background,
            core::slice::from_ref(w_init),
            t_init,
            false,
            None,
        )?
        .pop()
        .expect("one level"));
    };
    if source.len() < 2 || (source.start() - background.start()).abs() > 1e-9 * cfg.dt {
        return Err(Error::TimeMisalignment(
            "source must share the background's time nodes".into(),
        ));
    }
    background.first().expect_same_shape(source.first())?;
    let profiles: Vec<Vec<Complex64>> = source
        .times()
        .iter()
        .zip(source.snapshots())
        .map(|(&t, s)| {
            s.ensure_finite("tangent source")?;
            let mut v = s.values().to_vec();
            prop.multiplier(-t).apply(&mut v);
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let (s0, sdt, count) = (source.start(), source.dt(), source.len());
    let mut forcing = |t: f64, out: &mut [Complex64]| -> Result<()> {
        let x = (t - s0) / sdt;
        let nearest = x.round();
        if (x - nearest).abs() < 1e-9 && nearest >= 0.0 && (nearest as usize) < count {
            for (o, &s) in out
                .iter_mut()
                .zip(source.snapshot(nearest as usize).values())
            {
                *o += s;
            }
            return Ok(());
        }
        if x < -1e-9 || x > (count - 1) as f64 + 1e-9 {
            return Err(Error::TimeMisalignment(format!(
                "source does not cover t = {t}"
            )));
        }
        let base = (x.floor() as isize - 1).clamp(0, count.saturating_sub(4) as isize) as usize;
        let nodes: Vec<usize> = (base..(base + 4).min(count)).collect();
        let mut acc = vec![Complex64::new(0.0, 0.0); out.len()];
        for &i in &nodes {
            let mut w = 1.0;
            for &k in &nodes {
                if k != i {
                    w *= (x - k as f64) / (i as f64 - k as f64);
                }
            }
            for (a, &v) in acc.iter_mut().zip(&profiles[i]) {
                *a += v * w;
            }
        }
        prop.multiplier(t).apply(&mut acc);
        for (o, a) in out.iter_mut().zip(acc) {
            *o += a;
        }
        Ok(())
    };
    Ok(solve_levels(
        prop,
        nl,
        cfg,
        background,
        core::slice::from_ref(w_init),
        t_init,
        false,
        Some(&mut forcing),
    )?
    .pop()
    .expect("one level"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;
    use crate::profiles::{gaussian, packet, random_toy};

    fn toy_setup(p: u32, lambda: f64) -> (PropagatorSpec, NonlinearitySpec, ComplexField) {
        let grid = SpatialGrid::toy(4).unwrap();
        let prop = PropagatorSpec::toy_default(grid.clone()).unwrap();
        let nl = NonlinearitySpec::toy_gauge_power(p, lambda).unwrap();
        let u = random_toy(&grid, 3, 0.8).unwrap();
        (prop, nl, u)
    }

    // per component: e^{iα t} u_m(t0) times the gauge phase accumulated from t0
    fn toy_exact(
        prop: &PropagatorSpec,
        nl: &NonlinearitySpec,
        u0: &ComplexField,
        t0: f64,
        t: f64,
    ) -> ComplexField {
        let c = nl.coupling().integral(t0, t);
        let half = ((nl.p() - 1) / 2) as i32;
        let rotated =
            u0.map(|z| z * Complex64::from_polar(1.0, -nl.lambda() * c * z.norm_sqr().powi(half)));
        prop.apply_u(t - t0, &rotated).unwrap()
    }

    #[test]
    fn free_flow_is_reproduced() {
        let grid = SpatialGrid::periodic(40.0, 128).unwrap();
        let prop = PropagatorSpec::schrodinger(grid.clone()).unwrap();
        let nl = NonlinearitySpec::gauge_power(5, 0.0).unwrap();
        let u0 = packet(&grid, 0.5, 1.5, -3.0, 1.0).unwrap();
        for scheme in [Scheme::StrangSplit, Scheme::LawsonRk4] {
            let cfg = IntegratorConfig::new(0.05, 2.0, scheme).with_save_every(10);
            let traj = solve_nonlinear(&prop, &nl, &cfg, &u0, -2.0).unwrap();
            assert_eq!(traj.len(), 9);
            let exact = prop.apply_u(4.0, &u0).unwrap();
            assert!(traj.last().max_rel_diff(&exact) < 1e-12, "{scheme:?}");
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let (prop, nl, u) = toy_setup(3, 1.0);
        let zero = ComplexField::zeros(u.grid().clone(), 1);
        let cfg = IntegratorConfig::new(0.1, 1.0, Scheme::LawsonRk4);
        let traj = solve_nonlinear(&prop, &nl, &cfg, &zero, -1.0).unwrap();
        assert!(traj.snapshots().iter().all(|s| s.is_zero()));
    }

    #[test]
    fn lawson_is_fourth_order_on_the_toy() {
        let (prop, nl, u0) = toy_setup(3, 2.0);
        let exact = toy_exact(&prop, &nl, &u0, -2.0, 2.0);
        let err = |dt: f64| {
            let cfg = IntegratorConfig::new(dt, 2.0, Scheme::LawsonRk4);
            let traj = solve_nonlinear(&prop, &nl, &cfg, &u0, -2.0).unwrap();
            traj.last().sub(&exact).unwrap().l2_norm()
        };
        let ratio = err(0.04) / err(0.02);
        assert!(
            (ratio.log2() - 4.0).abs() < 0.3,
            "observed order {}",
            ratio.log2()
        );
    }

    #[test]
    fn strang_is_exact_for_commuting_toy_flow() {
        let (prop, nl, u0) = toy_setup(5, 1.5);
        let cfg = IntegratorConfig::new(0.25, 3.0, Scheme::StrangSplit);
        let traj = solve_nonlinear(&prop, &nl, &cfg, &u0, -3.0).unwrap();
        let exact = toy_exact(&prop, &nl, &u0, -3.0, 3.0);
        assert!(traj.last().max_rel_diff(&exact) < 1e-12);
    }

    #[test]
    fn strang_is_second_order_and_conserves() {
        let grid = SpatialGrid::periodic(30.0, 128).unwrap();
        let prop = PropagatorSpec::schrodinger(grid.clone()).unwrap();
        let nl = NonlinearitySpec::gauge_power(3, 1.0).unwrap();
        let u0 = gaussian(&grid, 1.0, 1.0, 0.0).unwrap();
        let run = |dt: f64| {
            let cfg = IntegratorConfig::new(dt, 1.0, Scheme::StrangSplit).with_save_every(1);
            evolve_nonlinear(&prop, &nl, &cfg, &u0, 0.0, 1.0).unwrap()
        };
        let (a, log) = run(0.02);
        let (b, _) = run(0.01);
        let (c, _) = run(0.005);
        let e1 = a.last().sub(b.last()).unwrap().l2_norm();
        let e2 = b.last().sub(c.last()).unwrap().l2_norm();
        assert!(((e1 / e2).log2() - 2.0).abs() < 0.2);
        assert!(log.mass_drift() < 1e-12);
        let drift = log.energy_drift().unwrap();
        assert!(drift < 1e-3, "energy drift {drift}");
    }

    #[test]
    fn time_reversal_returns_data() {
        // u(t) solves the equation backwards with conj: Lawson with -dt is
        // not available, so use the reflection u ↦ conj(u) of the gauge flow.
        let grid = SpatialGrid::periodic(30.0, 128).unwrap();
        let prop = PropagatorSpec::schrodinger(grid.clone()).unwrap();
        let nl = NonlinearitySpec::gauge_power(3, 1.0).unwrap();
        let u0 = packet(&grid, 0.7, 1.0, 0.0, 0.5).unwrap();
        let cfg = IntegratorConfig::new(0.01, 1.0, Scheme::StrangSplit);
        let fwd = solve_nonlinear(&prop, &nl, &cfg, &u0, 0.0).unwrap();
        let back = solve_nonlinear(&prop, &nl, &cfg, &fwd.last().conj(), 0.0).unwrap();
        assert!(back.last().conj().max_rel_diff(&u0) < 1e-10);
    }

    #[test]
    fn source_terms_count_ordered_tuples() {
        assert!(source_terms(0, 3).unwrap().is_empty());
        let l1 = source_terms(1, 3).unwrap();
        assert_eq!(l1, vec![(2, vec![0, 0], 1.0)]);
        let l2 = source_terms(2, 3).unwrap();
        assert_eq!(l2, vec![(2, vec![0, 1], 2.0), (3, vec![0, 0, 0], 1.0)]);
        // j ≤ p caps the arity
        assert!(source_terms(4, 3).unwrap().iter().all(|(j, _, _)| *j <= 3));
    }

    #[test]
    fn tangent_matches_difference_quotient() {
        let grid = SpatialGrid::periodic(30.0, 64).unwrap();
        let prop = PropagatorSpec::schrodinger(grid.clone()).unwrap();
        let nl = NonlinearitySpec::gauge_power(3, 1.0).unwrap();
        let u0 = gaussian(&grid, 0.8, 1.0, 0.0).unwrap();
        let w = packet(&grid, 1.0, 1.5, 1.0, -0.5).unwrap();
        let cfg = IntegratorConfig::new(0.02, 1.0, Scheme::LawsonRk4).with_save_every(5);
        let bg = solve_nonlinear(&prop, &nl, &cfg, &u0, -1.0).unwrap();
        let tangent = solve_tangent(&prop, &nl, &cfg, &bg, &w, -1.0, None).unwrap();
        let eps = 1e-4;
        let plus =
            solve_nonlinear(&prop, &nl, &cfg, &u0.add_scaled(eps, &w).unwrap(), -1.0).unwrap();
        let minus =
            solve_nonlinear(&prop, &nl, &cfg, &u0.add_scaled(-eps, &w).unwrap(), -1.0).unwrap();
        let fd = plus.last().sub(minus.last()).unwrap().scaled(0.5 / eps);
        assert!(tangent.last().max_rel_diff(&fd) < 1e-7);
    }

    #[test]
    fn second_level_matches_second_difference() {
        let (prop, nl, u0) = toy_setup(3, 1.0);
        let w = random_toy(u0.grid(), 11, 1.0).unwrap();
        let cfg = IntegratorConfig::new(0.05, 2.0, Scheme::LawsonRk4);
        let bg = solve_nonlinear(&prop, &nl, &cfg, &u0, -2.0).unwrap();
        let zero = ComplexField::zeros(u0.grid().clone(), 1);
        let levels =
            solve_levels(&prop, &nl, &cfg, &bg, &[w.clone(), zero], -2.0, true, None).unwrap();
        let eps = 1e-3;
        let s = |e: f64| {
            solve_nonlinear(&prop, &nl, &cfg, &u0.add_scaled(e, &w).unwrap(), -2.0).unwrap()
        };
        let (p, m, c) = (s(eps), s(-eps), s(0.0));
        // second derivative = 2 w_1
        let d2 = p
            .last()
            .add(m.last())
            .unwrap()
            .add_scaled(-2.0, c.last())
            .unwrap()
            .scaled(1.0 / (eps * eps));
        assert!(levels[1].last().scaled(2.0).max_rel_diff(&d2) < 1e-5);
    }

    #[test]
    fn forced_free_tangent_integrates_profile() {
        let grid = SpatialGrid::periodic(20.0, 64).unwrap();
        let prop = PropagatorSpec::schrodinger(grid.clone()).unwrap();
        let nl = NonlinearitySpec::gauge_power(3, 0.0).unwrap();
        let g = gaussian(&grid, 1.0, 1.0, 0.0).unwrap();
        let cfg = IntegratorConfig::new(0.05, 1.0, Scheme::LawsonRk4);
        let zero = ComplexField::zeros(grid.clone(), 1);
        let bg = solve_nonlinear(&prop, &nl, &cfg, &zero, 0.0).unwrap();
        let src = bg.map_snapshots(|t, _| prop.apply_u(t, &g)).unwrap();
        let w = solve_tangent(&prop, &nl, &cfg, &bg, &zero, 0.0, Some(&src)).unwrap();
        let exact = prop.apply_u(1.0, &g).unwrap();
        assert!(w.last().max_rel_diff(&exact) < 1e-12);
    }

    #[test]
    fn rejects_bad_configuration() {
        let (prop, nl, u0) = toy_setup(3, 1.0);
        let cfg = IntegratorConfig::new(0.3, 1.0, Scheme::LawsonRk4);
        assert!(matches!(
            solve_nonlinear(&prop, &nl, &cfg, &u0, 0.0),
            Err(Error::TimeMisalignment(_))
        ));
        let grid = SpatialGrid::periodic(20.0, 64).unwrap();
        let nls = PropagatorSpec::schrodinger(grid).unwrap();
        let cfg = IntegratorConfig::new(0.1, 1.0, Scheme::LawsonRk4);
        assert!(matches!(
            solve_nonlinear(&nls, &nl, &cfg, &u0, 0.0),
            Err(Error::Unsupported(_))
        ));
    }
}
