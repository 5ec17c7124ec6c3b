//! Uniformly sampled axes shared by spectra, correlation maps and
//! reconstructed maps.

use serde::{Deserialize, Serialize};

/// `len` samples at `start + i * step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformAxis {
    pub fn new(start: f64, step: f64, len: usize) -> Self {
        Self { start, step, len }
    }

    /// Axis of `len` samples spaced by `step` whose index `len / 2` is zero.
    pub fn centered(step: f64, len: usize) -> Self {
        Self {
            start: -((len / 2) as f64) * step,
            step,
            len,
        }
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.value(self.len.saturating_sub(1))
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.value(i)).collect()
    }

    /// Fractional index of `x`; `None` outside `[start, end]`.
    pub fn position(&self, x: f64) -> Option<f64> {
        if self.len == 0 {
            return None;
        }
        if self.len == 1 {
            return (x == self.start).then_some(0.0);
        }
        let p = (x - self.start) / self.step;
        let last = (self.len - 1) as f64;
        // tolerate round-off right at the ends
        if p < -1e-9 || p > last + 1e-9 {
            None
        } else {
            Some(p.clamp(0.0, last))
        }
    }

    /// Index of the sample closest to `x`, clamped to the axis.
    pub fn nearest(&self, x: f64) -> usize {
        if self.len <= 1 {
            return 0;
        }
        let p = ((x - self.start) / self.step).round();
        p.clamp(0.0, (self.len - 1) as f64) as usize
    }
}

/// Splits a fractional index into a base index and a weight for linear
/// interpolation between `base` and `base + 1`.
#[inline]
pub(crate) fn split_position(p: f64, len: usize) -> (usize, f64) {
    if len < 2 {
        return (0, 0.0);
    }
    let base = (p.floor() as usize).min(len - 2);
    (base, p - base as f64)
}
