//! Radix-2 complex FFT for power-of-two lengths.
//!
//! Forward transform uses the `exp(-2πi jk/N)` kernel without scaling; the
//! inverse divides by `N`, so `inverse(forward(x)) == x` up to round-off.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Fft {
    len: usize,
    // stage with half-size h occupies [h - 1, 2h - 1): exp(∓iπk/h), k < h
    forward_twiddles: Vec<Complex64>,
    inverse_twiddles: Vec<Complex64>,
    bit_reverse: Vec<u32>,
}

impl Fft {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidGrid(alloc::format!(
                "FFT length {len} is not a power of two >= 2"
            )));
        }
        let mut forward_twiddles = Vec::with_capacity(len - 1);
        let mut half = 1;
        while half < len {
            for k in 0..half {
                let angle = -PI * (k as f64) / (half as f64);
                forward_twiddles.push(Complex64::new(angle.cos(), angle.sin()));
            }
            half *= 2;
        }
        let inverse_twiddles = forward_twiddles.iter().map(|w| w.conj()).collect();
        let bits = len.trailing_zeros();
        let bit_reverse = (0..len)
            .map(|i| (i.reverse_bits() >> (usize::BITS - bits)) as u32)
            .collect();
        Ok(Self {
            len,
            forward_twiddles,
            inverse_twiddles,
            bit_reverse,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.forward_twiddles);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inverse_twiddles);
        let scale = 1.0 / self.len as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], twiddles: &[Complex64]) {
        assert_eq!(buf.len(), self.len, "FFT buffer length mismatch");
        for (i, &j) in self.bit_reverse.iter().enumerate() {
            let j = j as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        for pair in buf.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = a + b;
            pair[1] = a - b;
        }
        let mut half = 2;
        while half < self.len {
            let w = &twiddles[half - 1..2 * half - 1];
            for block in buf.chunks_exact_mut(2 * half) {
                let (lo, hi) = block.split_at_mut(half);
                for ((a, b), &tw) in lo.iter_mut().zip(hi.iter_mut()).zip(w) {
                    let t = *b * tw;
                    *b = *a - t;
                    *a += t;
                }
            }
            half *= 2;
        }
    }
}
