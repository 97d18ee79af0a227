//! Complex-valued fields on a [`SpatialGrid`], with one or two components.
//!
//! Two-component fields hold the Klein–Gordon pair `(u, ∂_t u)`, laid out
//! component-major: all `u` samples first, then all `∂_t u` samples.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::GridRef;

#[derive(Debug, Clone)]
pub struct ComplexField {
    grid: GridRef,
    components: usize,
    values: Vec<Complex64>,
}

impl PartialEq for ComplexField {
    fn eq(&self, other: &Self) -> bool {
        self.same_shape(other) && self.values == other.values
    }
}

impl ComplexField {
    pub fn new(grid: GridRef, components: usize, values: Vec<Complex64>) -> Result<Self> {
        if components == 0 || components > 2 {
            return Err(Error::InvalidParameter(alloc::format!(
                "component count {components} must be 1 or 2"
            )));
        }
        let expected = grid.len() * components;
        if values.len() != expected {
            return Err(Error::ComponentMismatch {
                expected,
                found: values.len(),
            });
        }
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("field construction"));
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    pub fn zeros(grid: GridRef, components: usize) -> Self {
        let n = grid.len() * components;
        Self {
            grid,
            components,
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Single-component field sampled from `f(x)` at the grid coordinates.
    pub fn from_fn(grid: GridRef, mut f: impl FnMut(f64) -> Complex64) -> Result<Self> {
        let values = grid.coords().iter().map(|&x| f(x)).collect();
        Self::new(grid, 1, values)
    }

    /// Klein–Gordon pair `(u, v)` from two single-component fields.
    pub fn pair(u: &ComplexField, v: &ComplexField) -> Result<Self> {
        u.expect_components(1)?;
        v.expect_components(1)?;
        if !u.same_grid(v) {
            return Err(Error::GridMismatch);
        }
        let mut values = u.values.clone();
        values.extend_from_slice(&v.values);
        Self::new(u.grid.clone(), 2, values)
    }

    pub(crate) fn from_parts_unchecked(
        grid: GridRef,
        components: usize,
        values: Vec<Complex64>,
    ) -> Self {
        debug_assert_eq!(values.len(), grid.len() * components);
        Self {
            grid,
            components,
            values,
        }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn component(&self, index: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.values[index * n..(index + 1) * n]
    }

    pub fn component_field(&self, index: usize) -> ComplexField {
        Self::from_parts_unchecked(self.grid.clone(), 1, self.component(index).to_vec())
    }

    pub fn same_grid(&self, other: &ComplexField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn same_shape(&self, other: &ComplexField) -> bool {
        self.components == other.components && self.same_grid(other)
    }

    pub fn expect_components(&self, expected: usize) -> Result<()> {
        if self.components == expected {
            Ok(())
        } else {
            Err(Error::ComponentMismatch {
                expected,
                found: self.components,
            })
        }
    }

    pub fn expect_same_shape(&self, other: &ComplexField) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        if self.components != other.components {
            return Err(Error::ComponentMismatch {
                expected: self.components,
                found: other.components,
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|z| z * factor)
    }

    pub fn scaled_complex(&self, factor: Complex64) -> Self {
        self.map(|z| z * factor)
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        Self::from_parts_unchecked(
            self.grid.clone(),
            self.components,
            self.values.iter().map(|&z| f(z)).collect(),
        )
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &ComplexField) -> Result<Self> {
        self.expect_same_shape(other)?;
        let mut out = self.clone();
        for (o, &w) in out.values.iter_mut().zip(&other.values) {
            *o += w * a;
        }
        Ok(out)
    }

    pub fn add(&self, other: &ComplexField) -> Result<Self> {
        self.add_scaled(1.0, other)
    }

    pub fn sub(&self, other: &ComplexField) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }

    /// Discrete `L²` norm over all components, rectangle rule.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.dx() * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Largest entrywise difference, normalised by the larger sup-norm.
    pub fn max_rel_diff(&self, other: &ComplexField) -> f64 {
        let scale = self
            .values
            .iter()
            .chain(&other.values)
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let diff = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    /// Real `L²` inner product `Re ∫ conj(self) other`.
    pub fn real_inner(&self, other: &ComplexField) -> f64 {
        self.grid.dx()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;

    #[test]
    fn length_and_finiteness_checked() {
        let g = SpatialGrid::periodic(10.0, 8).unwrap();
        assert!(ComplexField::new(g.clone(), 1, vec![Complex64::new(0.0, 0.0); 7]).is_err());
        let mut v = vec![Complex64::new(1.0, 0.0); 8];
        v[3] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(
            ComplexField::new(g.clone(), 1, v),
            Err(Error::NonFinite("field construction"))
        );
        assert!(ComplexField::new(g, 2, vec![Complex64::new(0.0, 0.0); 16]).is_ok());
    }

    #[test]
    fn pair_layout() {
        let g = SpatialGrid::toy(3).unwrap();
        let u = ComplexField::new(g.clone(), 1, vec![Complex64::new(1.0, 0.0); 3]).unwrap();
        let v = u.scaled(2.0);
        let p = ComplexField::pair(&u, &v).unwrap();
        assert_eq!(p.component(1)[2], Complex64::new(2.0, 0.0));
        assert!(ComplexField::pair(&p, &u).is_err());
    }
}
