use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::GridRef;

/// Time-indexed fields on a uniform time grid `t_0, t_0 + dt, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    snapshots: Vec<ComplexField>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, snapshots: Vec<ComplexField>) -> Result<Self> {
        if times.is_empty() || times.len() != snapshots.len() {
            return Err(Error::TimeMisalignment(format!(
                "{} times for {} snapshots",
                times.len(),
                snapshots.len()
            )));
        }
        if times.len() > 1 {
            let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
            if !(dt > 0.0) {
                return Err(Error::TimeMisalignment("times must increase".into()));
            }
            for (i, &t) in times.iter().enumerate() {
                let expect = times[0] + i as f64 * dt;
                if (t - expect).abs() > 1e-12 * dt.max(expect.abs()).max(1.0) {
                    return Err(Error::TimeMisalignment(format!(
                        "node {i} at {t} is off the uniform grid"
                    )));
                }
            }
        }
        let first = &snapshots[0];
        for s in &snapshots[1..] {
            first.expect_same_shape(s)?;
        }
        Ok(Self { times, snapshots })
    }

    pub(crate) fn from_uniform(t0: f64, dt: f64, snapshots: Vec<ComplexField>) -> Self {
        let times = (0..snapshots.len()).map(|i| t0 + i as f64 * dt).collect();
        Self { times, snapshots }
    }

    /// A trajectory with every snapshot equal to zero.
    pub fn zeros_like(&self) -> Self {
        let z = ComplexField::zeros(self.grid().clone(), self.components());
        Self {
            times: self.times.clone(),
            snapshots: alloc::vec![z; self.times.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[ComplexField] {
        &self.snapshots
    }

    pub fn snapshot(&self, index: usize) -> &ComplexField {
        &self.snapshots[index]
    }

    pub fn first(&self) -> &ComplexField {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &ComplexField {
        &self.snapshots[self.snapshots.len() - 1]
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Uniform node spacing (0 for a single node).
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            (self.end() - self.start()) / (self.times.len() - 1) as f64
        }
    }

    pub fn grid(&self) -> &GridRef {
        self.snapshots[0].grid()
    }

    pub fn components(&self) -> usize {
        self.snapshots[0].components()
    }

    /// Index of the node closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        if self.times.len() < 2 {
            return 0;
        }
        let i = ((t - self.start()) / self.dt()).round();
        i.max(0.0).min((self.len() - 1) as f64) as usize
    }

    /// Index of a node within round-off of `t`, if any.
    pub fn exact_index(&self, t: f64) -> Option<usize> {
        let i = self.nearest_index(t);
        let tol = 1e-9 * self.dt().max(1e-300);
        ((self.times[i] - t).abs() <= tol.max(1e-12 * t.abs())).then_some(i)
    }

    /// Inclusive range of node indices inside `[start, end]`.
    pub fn indices_in(&self, start: f64, end: f64) -> Result<core::ops::RangeInclusive<usize>> {
        let tol = 1e-9 * self.dt().max(1e-12);
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

    pub fn map_snapshots(
        &self,
        mut f: impl FnMut(f64, &ComplexField) -> Result<ComplexField>,
    ) -> Result<Self> {
        let snapshots = self
            .times
            .iter()
            .zip(&self.snapshots)
            .map(|(&t, s)| f(t, s))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(self.times.clone(), snapshots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;

    fn zero_traj(n: usize) -> Trajectory {
        let g = SpatialGrid::toy(2).unwrap();
        let z = ComplexField::zeros(g, 1);
        Trajectory::new(
            (0..n).map(|i| -1.0 + 0.5 * i as f64).collect(),
            alloc::vec![z; n],
        )
        .unwrap()
    }

    #[test]
    fn rejects_nonuniform_times() {
        let g = SpatialGrid::toy(2).unwrap();
        let z = ComplexField::zeros(g, 1);
        let r = Trajectory::new(
            alloc::vec![0.0, 1.0, 2.5],
            alloc::vec![z.clone(), z.clone(), z],
        );
        assert!(matches!(r, Err(Error::TimeMisalignment(_))));
    }

    #[test]
    fn interval_lookup() {
        let tr = zero_traj(5); // -1, -0.5, 0, 0.5, 1
        assert_eq!(tr.indices_in(-0.5, 0.5).unwrap(), 1..=3);
        assert_eq!(tr.indices_in(-0.7, 0.2).unwrap(), 1..=2);
        assert!(tr.indices_in(0.1, 0.2).is_err());
        assert!(tr.indices_in(0.5, 0.2).is_err());
        assert_eq!(tr.exact_index(0.5), Some(3));
        assert_eq!(tr.exact_index(0.4), None);
    }
}
