//! Named experiments. Each recipe writes its tables, returns summary
//! fields and a verdict; [`run_experiment`] adds the bookkeeping.

use std::time::Instant;

use serde_json::{json, Map, Value};

use scatter_core::consequences::{estimate_power, omega_invariance};
use scatter_core::norms::{d_norm, NodeNorms, StrichartzExponents};
use scatter_core::scattering::{
    default_exponents, measure_h2_constant, partition_intervals, scatter,
};
use scatter_core::taylor::{build_hierarchy, remainder_order, series_from_hierarchy};
use scatter_core::{
    ComplexField, Error, GridRef, IntegratorConfig, NonlinearitySpec, PropagatorSpec,
    ScatteringResult,
};

use crate::config::{ConfigError, Equation, ExperimentConfig, LoadedConfig};
use crate::output::RunDir;

pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    pub targets: &'static str,
    run: fn(&Ctx, &RunDir) -> Result<Verdict, Failure>,
}

pub const RECIPES: &[Recipe] = &[
    Recipe {
        name: "scatter",
        description: "scatter the data through [-T, T]; tails, boundary mass, conservation",
        targets: "scattering::scatter, evolve conservation log",
        run: run_scatter,
    },
    Recipe {
        name: "hierarchy",
        description: "tangent hierarchy w_0..w_K along the background; growth envelope",
        targets: "taylor::build_hierarchy, taylor::series_from_hierarchy",
        run: run_hierarchy,
    },
    Recipe {
        name: "remainder-order",
        description: "log-log slope of the truncated-series remainder for K = 0..K",
        targets: "taylor::remainder_order",
        run: run_remainder,
    },
    Recipe {
        name: "omega-invariance",
        description: "skew form before and after the linearised map, at dt and dt/2",
        targets: "consequences::omega_invariance",
        run: run_omega,
    },
    Recipe {
        name: "inverse-scattering",
        description: "power, coupling and Born residual from an epsilon sweep",
        targets: "consequences::estimate_power, consequences::estimate_lambda",
        run: run_inverse,
    },
    Recipe {
        name: "norm-audit",
        description: "space-time norms of the background on the full and half intervals",
        targets: "norms::NodeNorms, norms::f_norms",
        run: run_norm_audit,
    },
    Recipe {
        name: "partition-diagnostic",
        description: "empirical multilinear constant and the greedy interval partition",
        targets: "scattering::measure_h2_constant, scattering::partition_intervals",
        run: run_partition,
    },
];

pub fn find(name: &str) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name)
}

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const ASSERTION: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const TAINTED: i32 = 3;
}

#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: Map<String, Value>,
}

/// Summary fields and whether the recipe's checks held.
struct Verdict {
    fields: Map<String, Value>,
    pass: bool,
}

enum Failure {
    Core(Error),
    Config(ConfigError),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

fn classify(e: &Error) -> i32 {
    match e {
        Error::Tainted { .. } | Error::Diverged { .. } | Error::NonFinite(_) => exit::TAINTED,
        Error::InvalidGrid(_)
        | Error::InvalidParameter(_)
        | Error::EvenPower(_)
        | Error::TimeMisalignment(_)
        | Error::Unsupported(_)
        | Error::ComponentMismatch { .. }
        | Error::GridMismatch
        | Error::MemoryBudget { .. } => exit::CONFIG,
        _ => exit::ASSERTION,
    }
}

/// Everything a recipe needs, built once from the config.
struct Ctx<'a> {
    config: &'a ExperimentConfig,
    grid: GridRef,
    prop: PropagatorSpec,
    nl: NonlinearitySpec,
    cfg: IntegratorConfig,
    data: ComplexField,
}

impl<'a> Ctx<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Self, ConfigError> {
        let grid = config.grid()?;
        let prop = config.propagator(&grid)?;
        let nl = config.nonlinearity(config.lambda)?;
        let data = config.state(&grid, &config.data)?;
        Ok(Self {
            config,
            cfg: config.integrator(),
            grid,
            prop,
            nl,
            data,
        })
    }

    fn scatter(
        &self,
        data: &ComplexField,
        cfg: &IntegratorConfig,
    ) -> Result<ScatteringResult, Error> {
        scatter(&self.prop, &self.nl, cfg, &self.config.thresholds(), data)
    }

    fn exponents(&self) -> Result<StrichartzExponents, Error> {
        default_exponents(&self.nl)
    }
}

/// Runs `name` and writes its artifacts to `config.output_dir`. Schema
/// errors should be caught before this point; errors surfacing here are
/// still recorded in the summary.
pub fn run_experiment(name: &str, loaded: &LoadedConfig) -> Result<Outcome, ConfigError> {
    let recipe = find(name).ok_or_else(|| {
        let known: Vec<&str> = RECIPES.iter().map(|r| r.name).collect();
        ConfigError(format!(
            "unknown experiment `{name}`; expected one of {}",
            known.join(", ")
        ))
    })?;
    let config = &loaded.config;
    let out =
        RunDir::create(&config.output_dir, name, &loaded.hash, config.seed()).map_err(|e| {
            ConfigError(format!(
                "cannot create {}: {e}",
                config.output_dir.display()
            ))
        })?;
    let start = Instant::now();
    out.log(&format!("config sha256 {}", loaded.hash));
    let result = Ctx::new(config)
        .map_err(Failure::Config)
        .and_then(|ctx| (recipe.run)(&ctx, &out));
    let mut summary = Map::new();
    let (exit_code, status) = match result {
        Ok(v) => {
            summary.extend(v.fields);
            if v.pass {
                (exit::PASS, "pass")
            } else {
                (exit::ASSERTION, "fail")
            }
        }
        Err(Failure::Core(e)) => {
            out.log(&format!("error: {e}"));
            summary.insert("error".into(), json!(e.to_string()));
            let code = classify(&e);
            (
                code,
                if code == exit::TAINTED {
                    "tainted"
                } else if code == exit::CONFIG {
                    "config-error"
                } else {
                    "fail"
                },
            )
        }
        Err(Failure::Config(e)) => {
            out.log(&format!("error: {e}"));
            summary.insert("error".into(), json!(e.0));
            (exit::CONFIG, "config-error")
        }
        Err(Failure::Io(e)) => {
            out.log(&format!("error: {e}"));
            summary.insert("error".into(), json!(e.to_string()));
            (exit::ASSERTION, "io-error")
        }
    };
    summary.insert("status".into(), json!(status));
    summary.insert("exit_code".into(), json!(exit_code));
    out.write_summary(summary.clone())
        .map_err(|e| ConfigError(format!("cannot write summary: {e}")))?;
    out.log(&format!(
        "{status} (exit {exit_code}) after {:.2}s",
        start.elapsed().as_secs_f64()
    ));
    Ok(Outcome { exit_code, summary })
}

fn scatter_fields(run: &ScatteringResult, has_mass: bool) -> Result<Map<String, Value>, Error> {
    let scale = d_norm(&run.u_minus)?;
    let mut m = Map::new();
    m.insert("converged".into(), json!(run.converged));
    m.insert("cauchy_tail".into(), json!(run.cauchy_tail));
    m.insert("final_tail".into(), json!(run.final_tail()));
    m.insert(
        "relative_final_tail".into(),
        json!(run.final_tail() / scale),
    );
    m.insert("boundary_mass_max".into(), json!(run.boundary_mass_max));
    // the L2 mass is not conserved by the wave equation
    if has_mass {
        m.insert("mass_drift".into(), json!(run.conservation.mass_drift()));
    }
    m.insert(
        "energy_drift".into(),
        json!(run.conservation.energy_drift()),
    );
    m.insert("d_norm_u_minus".into(), json!(scale));
    m.insert(
        "d_norm_u_plus_minus_u_minus".into(),
        json!(d_norm(&run.u_plus.sub(&run.u_minus)?)?),
    );
    if let Some(n) = &run.norm_table {
        m.insert(
            "norms".into(),
            json!({ "f_norm": n.f_norm, "f1_norm": n.f1_norm, "f2_norm": n.f2_norm, "lq_lr_norm": n.lq_lr_norm }),
        );
    }
    Ok(m)
}

fn run_scatter(ctx: &Ctx, out: &RunDir) -> Result<Verdict, Failure> {
    let run = ctx.scatter(&ctx.data, &ctx.cfg)?;
    out.log(&format!("tails {:?}", run.cauchy_tail));
    out.write_table(
        "tails",
        &["t", "tail"],
        &run.cauchy_tail
            .iter()
            .map(|&(t, v)| vec![t, v])
            .collect::<Vec<_>>(),
    )?;
    let log = &run.conservation;
    let rows: Vec<Vec<f64>> = log
        .times
        .iter()
        .zip(&log.mass)
        .zip(&log.energy)
        .map(|((&t, &m), e)| vec![t, m, e.unwrap_or(f64::NAN)])
        .collect();
    out.write_table("conservation", &["t", "mass", "energy"], &rows)?;
    let mut fields = scatter_fields(&run, ctx.config.equation != Equation::Kg)?;
    let mut pass = run.converged;
    if ctx.config.lambda == 0.0 {
        let moved = fields["d_norm_u_plus_minus_u_minus"]
            .as_f64()
            .unwrap_or(f64::INFINITY);
        let identity = moved <= 1e-12 * fields["d_norm_u_minus"].as_f64().unwrap_or(0.0);
        fields.insert("free_identity".into(), json!(identity));
        pass &= identity;
    }
    Ok(Verdict { fields, pass })
}

fn series_order(ctx: &Ctx, default_k: usize) -> usize {
    ctx.config.series.as_ref().map_or(default_k, |s| s.k)
}

fn run_hierarchy(ctx: &Ctx, out: &RunDir) -> Result<Verdict, Failure> {
    let k = series_order(ctx, 4);
    let bg = ctx.scatter(&ctx.data, &ctx.cfg)?;
    let u0 = ctx.config.direction(&ctx.grid, 0)?;
    let levels = build_hierarchy(&ctx.prop, &ctx.nl, &ctx.cfg, &bg.trajectory, &u0, k)?;
    let series = series_from_hierarchy(&ctx.prop, &levels, &ctx.exponents()?)?;
    let rows = series
        .w_plus
        .iter()
        .zip(&series.f_norms_of_wk)
        .enumerate()
        .map(|(i, (w, &f))| Ok(vec![i as f64, f, d_norm(w)?]))
        .collect::<Result<Vec<_>, Error>>()?;
    out.write_table("levels", &["k", "f_norm", "d_norm_w_plus"], &rows)?;
    out.log(&format!("level norms {:?}", series.f_norms_of_wk));
    let mut fields = Map::new();
    fields.insert("K".into(), json!(k));
    fields.insert("f_norms_of_wk".into(), json!(series.f_norms_of_wk));
    fields.insert("growth_lambda".into(), json!(series.growth_lambda));
    fields.insert("radius_estimate".into(), json!(series.radius_estimate));
    fields.insert("envelope_residual".into(), json!(series.envelope_residual));
    fields.insert("background_converged".into(), json!(bg.converged));
    Ok(Verdict {
        pass: series.envelope_residual <= 0.5,
        fields,
    })
}

fn epsilons(ctx: &Ctx) -> Result<Vec<f64>, ConfigError> {
    ctx.config
        .series
        .as_ref()
        .map(|s| s.epsilon_list.clone())
        .ok_or_else(|| ConfigError("this experiment needs series.epsilon_list".into()))
}

fn run_remainder(ctx: &Ctx, out: &RunDir) -> Result<Verdict, Failure> {
    let k_max = series_order(ctx, 2);
    let eps = epsilons(ctx)?;
    let u0 = ctx.config.direction(&ctx.grid, 0)?;
    let th = ctx.config.thresholds();
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for k in 0..=k_max {
        let fit = remainder_order(&ctx.prop, &ctx.nl, &ctx.cfg, &th, &ctx.data, &u0, k, &eps)?;
        out.log(&format!("K = {k}: slope {:.4}", fit.slope));
        for (e, r) in fit.epsilons.iter().zip(&fit.residuals) {
            rows.push(vec![k as f64, *e, *r]);
        }
        slopes.push(fit.slope);
    }
    out.write_table("remainder", &["K", "epsilon", "residual"], &rows)?;
    let slope_rows: Vec<Vec<f64>> = slopes
        .iter()
        .enumerate()
        .map(|(k, &s)| vec![k as f64, s])
        .collect();
    out.write_table("slopes", &["K", "slope"], &slope_rows)?;
    let pass = slopes.iter().enumerate().all(|(k, &s)| s > k as f64 + 1.5);
    let mut fields = Map::new();
    fields.insert("K".into(), json!(k_max));
    fields.insert("slope".into(), json!(slopes[k_max]));
    fields.insert("expected_slope".into(), json!(k_max + 2));
    fields.insert("slopes".into(), json!(slopes));
    Ok(Verdict { fields, pass })
}

fn run_omega(ctx: &Ctx, out: &RunDir) -> Result<Verdict, Failure> {
    let va = ctx.config.direction(&ctx.grid, 0)?;
    let vb = ctx.config.direction(&ctx.grid, 1)?;
    let mut rows = Vec::new();
    let mut defects = Vec::new();
    for refine in [1usize, 2] {
        let mut cfg = ctx.cfg;
        cfg.dt /= refine as f64;
        cfg.save_every *= refine;
        let bg = ctx.scatter(&ctx.data, &cfg)?;
        let report = omega_invariance(&ctx.prop, &ctx.nl, &cfg, &bg, &va, &vb)?;
        out.log(&format!(
            "dt {}: defect {:.3e}",
            cfg.dt, report.relative_defect
        ));
        rows.push(vec![
            cfg.dt,
            report.value_minus,
            report.value_plus,
            report.relative_defect,
        ]);
        defects.push(report.relative_defect);
    }
    out.write_table(
        "omega",
        &["dt", "omega_minus", "omega_plus", "relative_defect"],
        &rows,
    )?;
    let ratio = defects[0] / defects[1];
    let mut fields = Map::new();
    fields.insert("relative_defects".into(), json!(defects));
    fields.insert("refinement_ratio".into(), json!(ratio));
    Ok(Verdict {
        pass: defects.iter().all(|&d| d <= 1e-5) && ratio >= 4.0,
        fields,
    })
}

fn run_inverse(ctx: &Ctx, out: &RunDir) -> Result<Verdict, Failure> {
    let eps = epsilons(ctx)?;
    let th = ctx.config.thresholds();
    let report = estimate_power(
        &ctx.prop,
        &ctx.nl,
        &ctx.cfg,
        &th,
        &ctx.data,
        &eps,
        ctx.config.born_rule(),
    )?;
    let rows: Vec<Vec<f64>> = (0..eps.len())
        .map(|i| {
            vec![
                eps[i],
                report.residual_norms[i],
                report.residual_l2[i],
                report.born_residuals[i],
            ]
        })
        .collect();
    out.write_table(
        "inverse",
        &["epsilon", "residual_d", "residual_l2", "born_residual"],
        &rows,
    )?;
    let mut fields = Map::new();
    fields.insert("p_hat".into(), json!(report.p_hat));
    fields.insert("p_hat_l2".into(), json!(report.p_hat_l2));
    fields.insert("p_hat_trimmed".into(), json!(report.p_hat_trimmed));
    fields.insert("lambda_hat".into(), json!(report.lambda_hat));
    fields.insert(
        "born_residual_slope".into(),
        json!(report.born_residual_slope),
    );
    let Some(p_hat) = report.p_hat else {
        fields.insert(
            "error".into(),
            json!("all residuals at noise level; the power is undefined"),
        );
        return Ok(Verdict {
            fields,
            pass: false,
        });
    };
    let p = f64::from(ctx.config.p);
    let lambda = ctx.config.lambda;
    let lambda_ok = report
        .lambda_hat
        .is_some_and(|l| (l - lambda).abs() <= 0.02 * lambda.abs());
    let stable = report
        .p_hat_trimmed
        .is_none_or(|t| (t - p_hat).abs() <= 0.05);
    let born_ok = report.born_residual_slope.is_some_and(|b| b >= p + 1.0);
    out.log(&format!(
        "p_hat {p_hat:.4}, lambda_hat {:?}",
        report.lambda_hat
    ));
    Ok(Verdict {
        pass: (p_hat - p).abs() <= 0.2 && lambda_ok && stable && born_ok,
        fields,
    })
}

fn run_norm_audit(ctx: &Ctx, out: &RunDir) -> Result<Verdict, Failure> {
    let bg = ctx.scatter(&ctx.data, &ctx.cfg)?;
    let exps = ctx.exponents()?;
    let with_j = ctx.config.equation == Equation::Nls;
    let norms = NodeNorms::compute(&bg.trajectory, &exps, with_j)?;
    let rows: Vec<Vec<f64>> = norms
        .times()
        .iter()
        .zip(norms.spatial_f2())
        .enumerate()
        .map(|(i, (&t, &x))| vec![t, norms.f1_between(i, i), x])
        .collect();
    out.write_table("norms", &["t", "d_norm", "spatial_f2"], &rows)?;
    let t = ctx.cfg.horizon;
    let report = |a: f64, b: f64| -> Result<Value, Error> {
        let r = norms.report(a, b)?;
        Ok(json!({
            "interval": [a, b],
            "d_norm": r.d_norm,
            "f1_norm": r.f1_norm,
            "f2_norm": r.f2_norm,
            "lq_lr_norm": r.lq_lr_norm,
            "f3_norm": r.f3_norm,
            "f_norm": r.f_norm,
        }))
    };
    let full = norms.report(-t, t)?;
    let halves = [norms.report(-t, 0.0)?, norms.report(0.0, t)?];
    let monotone = halves
        .iter()
        .all(|h| h.f2_norm <= full.f2_norm && h.f_norm <= full.f_norm);
    let mut fields = Map::new();
    fields.insert(
        "exponents".into(),
        json!({ "q": exps.q, "r": exps.r, "theta": exps.theta, "delta": exps.delta,
                "admissibility_defect": exps.admissibility_defect() }),
    );
    fields.insert("full".into(), report(-t, t)?);
    fields.insert("negative_half".into(), report(-t, 0.0)?);
    fields.insert("positive_half".into(), report(0.0, t)?);
    fields.insert("restriction_monotone".into(), json!(monotone));
    Ok(Verdict {
        fields,
        pass: monotone,
    })
}

fn run_partition(ctx: &Ctx, out: &RunDir) -> Result<Verdict, Failure> {
    let bg = ctx.scatter(&ctx.data, &ctx.cfg)?;
    let exps = ctx.exponents()?;
    let probes = ctx.config.probes.unwrap_or(32);
    let c = measure_h2_constant(
        &ctx.prop,
        &ctx.nl,
        &bg.trajectory,
        &exps,
        probes,
        ctx.config.seed(),
    )?;
    out.log(&format!("empirical constant {c:.6e} from {probes} probes"));
    let intervals = partition_intervals(&bg.trajectory, &exps, c)?;
    let rows: Vec<Vec<f64>> = intervals.iter().map(|&(a, b)| vec![a, b]).collect();
    out.write_table("intervals", &["start", "end"], &rows)?;
    let half = ctx.scatter(&ctx.data.scaled(0.5), &ctx.cfg)?;
    let halved = partition_intervals(&half.trajectory, &exps, c)?.len();
    let mut fields = Map::new();
    fields.insert("c_emp".into(), json!(c));
    fields.insert("probes".into(), json!(probes));
    fields.insert("K".into(), json!(intervals.len()));
    fields.insert("K_half_data".into(), json!(halved));
    Ok(Verdict {
        pass: halved <= intervals.len(),
        fields,
    })
}
