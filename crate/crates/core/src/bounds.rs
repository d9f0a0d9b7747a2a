//! Axis-aligned input rectangles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension `[low, high]` intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl Bounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::DimensionMismatch { expected: low.len(), got: high.len() });
        }
        if low.is_empty() {
            return Err(Error::Config("bounds need at least one dimension".into()));
        }
        for (i, (l, h)) in low.iter().zip(&high).enumerate() {
            if !(l < h) || !l.is_finite() || !h.is_finite() {
                return Err(Error::Config(format!("dimension {i}: low {l} must be below high {h}")));
            }
        }
        Ok(Self { low, high })
    }

    /// The same interval in every dimension.
    pub fn cube(dim: usize, low: f64, high: f64) -> Result<Self> {
        Self::new(vec![low; dim], vec![high; dim])
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn width(&self, i: usize) -> f64 {
        self.high[i] - self.low[i]
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.width(i)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.low).zip(&self.high).all(|((v, l), h)| v >= l && v <= h)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if !self.contains(x) {
            return Err(Error::OutOfBounds(x.to_vec()));
        }
        Ok(())
    }

    /// Split at `value` in dimension `dim` into `(x_dim < value, x_dim >= value)`.
    pub fn split(&self, dim: usize, value: f64) -> (Bounds, Bounds) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.high[dim] = value;
        right.low[dim] = value;
        (left, right)
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(i, v)| self.low[i] + v * self.width(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_and_measures() {
        assert!(Bounds::new(vec![0.0], vec![0.0]).is_err());
        assert!(Bounds::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let b = Bounds::cube(2, -2.0, 6.0).unwrap();
        assert_eq!(b.volume(), 64.0);
        assert!(b.contains(&[6.0, -2.0]));
        assert!(!b.contains(&[6.1, 0.0]));
        let (l, r) = b.split(0, 2.0);
        assert_eq!(l.volume() + r.volume(), 64.0);
    }
}
