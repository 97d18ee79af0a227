//! Discrete function-space norms: the data norm `D`, the sup-in-time norm
//! `F₁`, the Strichartz space-time norm `F₂` and the `J`-augmented piece.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::nonlinearity::CouplingProfile;
use crate::trajectory::Trajectory;

pub fn l2_norm(f: &ComplexField) -> f64 {
    f.l2_norm()
}

/// `sqrt(‖f‖²_{L²} + ‖∂_x f‖²_{L²})` with a spectral derivative.
pub fn h1_norm(f: &ComplexField) -> Result<f64> {
    f.expect_components(1)?;
    f.ensure_finite("h1_norm")?;
    let grad = f.grid().gradient(f.values())?;
    let dx = f.grid().dx();
    let s: f64 = f
        .values()
        .iter()
        .zip(&grad)
        .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
        .sum();
    Ok((dx * s).sqrt())
}

/// Data-space norm: `H¹` for Schrödinger fields, the `H¹ × L²` energy norm
/// for Klein–Gordon pairs, Euclidean for the toy model.
pub fn d_norm(f: &ComplexField) -> Result<f64> {
    f.ensure_finite("d_norm")?;
    if !f.grid().is_periodic() {
        return Ok(f.l2_norm());
    }
    match f.components() {
        1 => h1_norm(f),
        _ => {
            let u = h1_norm(&f.component_field(0))?;
            let v = f.component_field(1).l2_norm();
            Ok((u * u + v * v).sqrt())
        }
    }
}

fn lr_norm(values: &[Complex64], dx: f64, r: f64) -> f64 {
    (dx * values.iter().map(|z| z.norm().powf(r)).sum::<f64>()).powf(1.0 / r)
}

/// Space-time exponents `(q, r)` and interpolation parameters `θ`, `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrichartzExponents {
    pub p: u32,
    pub n: u32,
    pub q: f64,
    pub r: f64,
    pub theta: f64,
    pub delta: f64,
    /// Toy model only: the Euclidean norm at time `t` is weighted by
    /// `c(t)^{1/(p−1)}`, so that the coupling supplies the time
    /// integrability dispersion supplies for the PDEs.
    pub time_weight: Option<CouplingProfile>,
}

impl StrichartzExponents {
    /// One-dimensional exponents `q = (4p+4)/(p−1)`, `r = p+1`; needs `p ≥ 5`.
    pub fn for_power(p: u32) -> Result<Self> {
        let n = 1u32;
        if p.is_multiple_of(2) || p < 3 {
            return Err(Error::EvenPower(p));
        }
        let (pf, nf) = (p as f64, n as f64);
        if pf < 1.0 + 4.0 / nf {
            return Err(Error::InvalidParameter(format!(
                "Strichartz framework needs p >= 1 + 4/n = {}, got {p}",
                1.0 + 4.0 / nf
            )));
        }
        let q = (4.0 * pf + 4.0) / (nf * (pf - 1.0));
        let r = pf + 1.0;
        let theta = ((pf + 1.0) / (pf - 1.0)) * ((nf * (pf - 1.0) - 4.0) / (nf * (pf - 1.0)));
        Ok(Self {
            p,
            n,
            q,
            r,
            theta,
            delta: 1.0 - theta,
            time_weight: None,
        })
    }

    /// Toy-model exponents: time exponent `q`, `δ = 1`, coupling weight.
    pub fn toy(p: u32, q: f64, coupling: CouplingProfile) -> Result<Self> {
        if p.is_multiple_of(2) || p < 3 {
            return Err(Error::EvenPower(p));
        }
        if !(q.is_finite() && q >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "time exponent q = {q} must be >= 1"
            )));
        }
        Ok(Self {
            p,
            n: 1,
            q,
            r: 2.0,
            theta: 0.0,
            delta: 1.0,
            time_weight: Some(coupling),
        })
    }

    /// `2/q − n(1/2 − 1/r)`; zero for admissible pairs.
    pub fn admissibility_defect(&self) -> f64 {
        2.0 / self.q - self.n as f64 * (0.5 - 1.0 / self.r)
    }

    fn weight(&self, t: f64) -> f64 {
        match self.time_weight {
            Some(c) => c.value(t).powf(1.0 / (self.p as f64 - 1.0)),
            None => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    /// `D`-norm of the first snapshot in the interval.
    pub d_norm: f64,
    pub f1_norm: f64,
    /// `L^q_t W^{1,r}_x` (weighted Euclidean for the toy).
    pub f2_norm: f64,
    /// `L^q_t L^r_x`.
    pub lq_lr_norm: f64,
    pub f3_norm: Option<f64>,
    pub f_norm: f64,
    pub restricted_to: (f64, f64),
}

/// Per-node spatial norms; restricted space-time norms are prefix-sum
/// differences.
#[derive(Debug, Clone)]
pub struct NodeNorms {
    times: Vec<f64>,
    dt: f64,
    q: f64,
    d: Vec<f64>,
    x: Vec<f64>,
    j: Option<(Vec<f64>, Vec<f64>)>,
    cum_x: Vec<f64>,
    cum_lr: Vec<f64>,
}

impl NodeNorms {
    pub fn compute(traj: &Trajectory, exps: &StrichartzExponents, with_j: bool) -> Result<Self> {
        let grid = traj.grid().clone();
        let periodic = grid.is_periodic();
        if with_j && !(periodic && traj.components() == 1) {
            return Err(Error::Unsupported(
                "J-augmented norms apply to Schrödinger trajectories only".into(),
            ));
        }
        if periodic && exps.time_weight.is_some() {
            return Err(Error::Unsupported(
                "coupling-weighted norms are for the toy model".into(),
            ));
        }
        let dx = grid.dx();
        let n = grid.len();
        let mut d = Vec::with_capacity(traj.len());
        let mut x = Vec::with_capacity(traj.len());
        let mut lr = Vec::with_capacity(traj.len());
        let mut jl2 = Vec::new();
        let mut jlr = Vec::new();
        for (&t, f) in traj.times().iter().zip(traj.snapshots()) {
            f.ensure_finite("f_norms")?;
            d.push(d_norm(f)?);
            if periodic {
                let u = &f.values()[..n];
                let grad = grid.gradient(u)?;
                let a = lr_norm(u, dx, exps.r);
                let b = lr_norm(&grad, dx, exps.r);
                lr.push(a);
                x.push(a + b);
                if with_j {
                    let grad_j: Vec<Complex64> = u
                        .iter()
                        .zip(&grad)
                        .zip(grid.coords())
                        .map(|((&v, &g), &c)| v * c + Complex64::new(0.0, t) * g)
                        .collect();
                    jl2.push(lr_norm(&grad_j, dx, 2.0));
                    jlr.push(lr_norm(&grad_j, dx, exps.r));
                }
            } else {
                let e = f.l2_norm() * exps.weight(t);
                lr.push(e);
                x.push(e);
            }
        }
        let dt = traj.dt();
        let cum = |v: &[f64]| {
            let mut out = Vec::with_capacity(v.len());
            let mut acc = 0.0;
            out.push(0.0);
            for w in v.windows(2) {
                acc += 0.5 * dt * (w[0].powf(exps.q) + w[1].powf(exps.q));
                out.push(acc);
            }
            out
        };
        let cum_x = cum(&x);
        let cum_lr = cum(&lr);
        Ok(Self {
            times: traj.times().to_vec(),
            dt,
            q: exps.q,
            d,
            x,
            j: with_j.then_some((jl2, jlr)),
            cum_x,
            cum_lr,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `‖1_{[t_i, t_j]} u‖_{F₂}` by node indices.
    pub fn f2_between(&self, i: usize, j: usize) -> f64 {
        (self.cum_x[j] - self.cum_x[i]).max(0.0).powf(1.0 / self.q)
    }

    pub fn f1_between(&self, i: usize, j: usize) -> f64 {
        self.d[i..=j].iter().cloned().fold(0.0, f64::max)
    }

    pub fn index_range(&self, start: f64, end: f64) -> Result<core::ops::RangeInclusive<usize>> {
        let tol = 1e-9 * self.dt.max(1e-12);
        if !(start <= end) {
            return Err(Error::EmptyInterval { start, end });
        }
        let lo = self.times.iter().position(|&t| t >= start - tol);
        let hi = self.times.iter().rposition(|&t| t <= end + tol);
        match (lo, hi) {
            (Some(lo), Some(hi)) if lo <= hi => Ok(lo..=hi),
            _ => Err(Error::EmptyInterval { start, end }),
        }
    }

    pub fn report(&self, start: f64, end: f64) -> Result<NormReport> {
        let range = self.index_range(start, end)?;
        let (i, j) = (*range.start(), *range.end());
        let f1 = self.f1_between(i, j);
        let f2 = self.f2_between(i, j);
        let lq_lr = (self.cum_lr[j] - self.cum_lr[i])
            .max(0.0)
            .powf(1.0 / self.q);
        let f3 = self.j.as_ref().map(|(l2, lr)| {
            let sup = l2[i..=j].iter().cloned().fold(0.0, f64::max);
            let mut acc = 0.0;
            for k in i..j {
                acc += 0.5 * self.dt * (lr[k].powf(self.q) + lr[k + 1].powf(self.q));
            }
            sup + acc.powf(1.0 / self.q)
        });
        let f_norm = f1.max(f2) + f3.unwrap_or(0.0);
        Ok(NormReport {
            d_norm: self.d[i],
            f1_norm: f1,
            f2_norm: f2,
            lq_lr_norm: lq_lr,
            f3_norm: f3,
            f_norm,
            restricted_to: (start, end),
        })
    }

    pub fn spatial_f2(&self) -> &[f64] {
        &self.x
    }
}

/// Norms of `traj` restricted to `[start, end]`.
pub fn f_norms(
    traj: &Trajectory,
    interval: (f64, f64),
    exps: &StrichartzExponents,
    with_j: bool,
) -> Result<NormReport> {
    let (start, end) = interval;
    traj.indices_in(start, end)?;
    NodeNorms::compute(traj, exps, with_j)?.report(start, end)
}

/// Full-interval `F`-norm.
pub fn f_norm(traj: &Trajectory, exps: &StrichartzExponents) -> Result<f64> {
    Ok(f_norms(traj, (traj.start(), traj.end()), exps, false)?.f_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;
    use core::f64::consts::PI;

    #[test]
    fn zero_field_has_zero_norm() {
        let g = SpatialGrid::periodic(10.0, 16).unwrap();
        assert_eq!(h1_norm(&ComplexField::zeros(g, 1)).unwrap(), 0.0);
    }

    #[test]
    fn plane_wave_h1() {
        let g = SpatialGrid::periodic(40.0, 64).unwrap();
        let xi = 2.0 * PI / 40.0;
        let f = ComplexField::from_fn(g, |x| Complex64::from_polar(1.0, xi * x)).unwrap();
        let expect = (40.0 * (1.0 + xi * xi)).sqrt();
        assert!((h1_norm(&f).unwrap() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn multi_component_rejected() {
        let g = SpatialGrid::periodic(10.0, 16).unwrap();
        assert!(matches!(
            h1_norm(&ComplexField::zeros(g, 2)),
            Err(Error::ComponentMismatch { .. })
        ));
    }

    #[test]
    fn exponents_for_quintic_and_septic() {
        let e5 = StrichartzExponents::for_power(5).unwrap();
        assert_eq!((e5.q, e5.r, e5.theta, e5.delta), (6.0, 6.0, 0.0, 1.0));
        let e7 = StrichartzExponents::for_power(7).unwrap();
        assert!((e7.q - 16.0 / 3.0).abs() < 1e-14);
        assert!((e7.theta - 4.0 / 9.0).abs() < 1e-14);
        for e in [e5, e7] {
            assert!(e.admissibility_defect().abs() < 1e-14);
        }
        assert!(StrichartzExponents::for_power(3).is_err());
        assert!(StrichartzExponents::for_power(6).is_err());
    }
}
