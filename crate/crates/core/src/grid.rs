//! Spatial discretisations: a periodic 1D box standing in for the real
//! line, and the site set of the finite-dimensional toy model.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft;

pub type GridRef = Arc<SpatialGrid>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    /// `points` equispaced nodes on `[-length/2, length/2)`.
    Periodic1D { length: f64, points: usize },
    /// `dim` independent sites; sums are plain Euclidean sums.
    ToyVector { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    kind: GridKind,
    coords: Vec<f64>,
    wavenumbers: Vec<f64>,
    fft: Option<Fft>,
}

impl SpatialGrid {
    pub fn periodic(length: f64, points: usize) -> Result<GridRef> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box length {length} must be positive"
            )));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "point count {points} must be a power of two >= 8"
            )));
        }
        let dx = length / points as f64;
        let coords = (0..points).map(|j| -0.5 * length + j as f64 * dx).collect();
        let wavenumbers = (0..points)
            .map(|m| {
                let signed = if m < points / 2 {
                    m as f64
                } else {
                    m as f64 - points as f64
                };
                2.0 * PI * signed / length
            })
            .collect();
        Ok(Arc::new(Self {
            kind: GridKind::Periodic1D { length, points },
            coords,
            wavenumbers,
            fft: Some(Fft::new(points)?),
        }))
    }

    pub fn toy(dim: usize) -> Result<GridRef> {
        if dim == 0 {
            return Err(Error::InvalidGrid("toy dimension must be >= 1".into()));
        }
        Ok(Arc::new(Self {
            kind: GridKind::ToyVector { dim },
            coords: (0..dim).map(|m| m as f64).collect(),
            wavenumbers: Vec::new(),
            fft: None,
        }))
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, GridKind::Periodic1D { .. })
    }

    /// Number of sites (grid points or toy components).
    pub fn len(&self) -> usize {
        match self.kind {
            GridKind::Periodic1D { points, .. } => points,
            GridKind::ToyVector { dim } => dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight: `L/N` on the periodic grid, 1 for the toy model.
    pub fn dx(&self) -> f64 {
        match self.kind {
            GridKind::Periodic1D { length, points } => length / points as f64,
            GridKind::ToyVector { .. } => 1.0,
        }
    }

    pub fn length(&self) -> Option<f64> {
        match self.kind {
            GridKind::Periodic1D { length, .. } => Some(length),
            GridKind::ToyVector { .. } => None,
        }
    }

    /// Sawtooth coordinate `x_j`, centred at 0 (site index for the toy).
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `ξ_m = 2π m / L` in standard FFT ordering; empty for the toy grid.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn fft(&self) -> Option<&Fft> {
        self.fft.as_ref()
    }

    pub(crate) fn require_fft(&self) -> Result<&Fft> {
        self.fft
            .as_ref()
            .ok_or_else(|| Error::Unsupported("spectral operation on a toy grid".into()))
    }

    /// Spectral first derivative of one periodic component. The Nyquist
    /// mode is dropped, as is usual for odd-order derivatives.
    pub fn gradient(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        let fft = self.require_fft()?;
        let mut buf = values.to_vec();
        fft.forward(&mut buf);
        let nyquist = self.len() / 2;
        for (m, (z, &xi)) in buf.iter_mut().zip(&self.wavenumbers).enumerate() {
            *z = if m == nyquist {
                Complex64::new(0.0, 0.0)
            } else {
                *z * Complex64::new(0.0, xi)
            };
        }
        fft.inverse(&mut buf);
        Ok(buf)
    }

    /// Indicator of the outer `fraction` of the box (both ends together).
    pub fn is_boundary_site(&self, index: usize, fraction: f64) -> bool {
        match self.kind {
            GridKind::Periodic1D { length, .. } => {
                self.coords[index].abs() >= 0.5 * length * (1.0 - fraction)
            }
            GridKind::ToyVector { .. } => false,
        }
    }
}
