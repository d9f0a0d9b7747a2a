//! Synthetic response functions and error metrics.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bounds::Bounds;
use crate::design::lhs;
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkName {
    /// Sinusoid on `[0, 10)`, line on `[10, 20]`.
    Sin1d,
    /// `x1 exp(-x1^2 - x2^2)` on `[-2, 6]^2`.
    Exp2d,
    /// Two outputs `(z, -z)` of [`BenchmarkName::Exp2d`].
    Exp2dPair,
    /// Six inputs, four of them active, on `[0, 1]^6`.
    Sixd,
}

impl BenchmarkName {
    pub const ALL: [BenchmarkName; 4] =
        [BenchmarkName::Sin1d, BenchmarkName::Exp2d, BenchmarkName::Exp2dPair, BenchmarkName::Sixd];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkName::Sin1d => "sin1d",
            BenchmarkName::Exp2d => "exp2d",
            BenchmarkName::Exp2dPair => "exp2d2",
            BenchmarkName::Sixd => "sixd",
        }
    }
}

impl fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkName::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark {s:?}")))
    }
}

pub fn sin1d(x: f64) -> f64 {
    if x < 10.0 {
        (PI * x / 5.0).sin() + 0.2 * (4.0 * PI * x / 5.0).cos()
    } else {
        x / 10.0 - 1.0
    }
}

pub fn exp2d(x1: f64, x2: f64) -> f64 {
    x1 * (-x1 * x1 - x2 * x2).exp()
}

pub fn sixd(x: &[f64]) -> f64 {
    (0.9 * (x[0] + 0.48)).powi(10).sin().exp() + x[1] * x[2] + x[3]
}

/// A response function with its domain and observation noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub name: BenchmarkName,
    pub bounds: Bounds,
    pub noise_sd: f64,
}

impl Benchmark {
    /// The function with its default domain and noise level.
    pub fn new(name: BenchmarkName) -> Self {
        let (bounds, noise_sd) = match name {
            BenchmarkName::Sin1d => (Bounds::cube(1, 0.0, 20.0), 0.1),
            BenchmarkName::Exp2d | BenchmarkName::Exp2dPair => (Bounds::cube(2, -2.0, 6.0), 0.001),
            BenchmarkName::Sixd => (Bounds::cube(6, 0.0, 1.0), 0.05),
        };
        Self { name, bounds: bounds.expect("static bounds are valid"), noise_sd }
    }

    pub fn with_noise(mut self, sd: f64) -> Result<Self> {
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(Error::Config(format!("noise sd must be nonnegative, got {sd}")));
        }
        self.noise_sd = sd;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn n_outputs(&self) -> usize {
        match self.name {
            BenchmarkName::Exp2dPair => 2,
            _ => 1,
        }
    }

    /// Noise-free responses at `x`.
    pub fn truth(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.bounds.check(x)?;
        Ok(match self.name {
            BenchmarkName::Sin1d => vec![sin1d(x[0])],
            BenchmarkName::Exp2d => vec![exp2d(x[0], x[1])],
            BenchmarkName::Exp2dPair => {
                let z = exp2d(x[0], x[1]);
                vec![z, -z]
            }
            BenchmarkName::Sixd => vec![sixd(x)],
        })
    }

    /// Responses at `x` with independent normal noise on each output.
    pub fn evaluate<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut z = self.truth(x)?;
        if self.noise_sd > 0.0 {
            let n = Normal::new(0.0, self.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
            for v in &mut z {
                *v += n.sample(rng);
            }
        }
        Ok(z)
    }

    /// Points at which RMSE to the truth is measured: 200 equispaced points
    /// for sin1d, a 41 x 41 grid for exp2d and a 1000-point Latin hypercube
    /// (drawn from `seed`) for sixd.
    pub fn truth_grid(&self, seed: u64) -> Vec<Vec<f64>> {
        let b = &self.bounds;
        match self.name {
            BenchmarkName::Sin1d => equispaced(b.low()[0], b.high()[0], 200).into_iter().map(|v| vec![v]).collect(),
            BenchmarkName::Exp2d | BenchmarkName::Exp2dPair => {
                let g1 = equispaced(b.low()[0], b.high()[0], 41);
                let g2 = equispaced(b.low()[1], b.high()[1], 41);
                g2.iter().flat_map(|&y| g1.iter().map(move |&x| vec![x, y])).collect()
            }
            BenchmarkName::Sixd => lhs(1000, b, &mut substream(seed, "truth-grid", 0)),
        }
    }
}

fn equispaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Root mean squared difference.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyData);
    }
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    use super::*;

    #[test]
    fn known_values() {
        let s = Benchmark::new(BenchmarkName::Sin1d);
        assert!((s.truth(&[0.0]).unwrap()[0] - 0.2).abs() < 1e-15);
        assert!((s.truth(&[15.0]).unwrap()[0] - 0.5).abs() < 1e-15);
        assert_eq!(s.truth(&[10.0]).unwrap()[0], 0.0);
        let e = Benchmark::new(BenchmarkName::Exp2d);
        assert_eq!(e.truth(&[0.0, 0.0]).unwrap()[0], 0.0);
        assert!((e.truth(&[1.0, 0.0]).unwrap()[0] - (-1.0f64).exp()).abs() < 1e-15);
        let x = Benchmark::new(BenchmarkName::Sixd);
        let v = x.truth(&[0.5, 1.0, 1.0, 1.0, 0.3, 0.9]).unwrap()[0];
        // exp(sin(0.882^10)) + 2
        let oracle = 0.882f64.powi(10).sin().exp() + 2.0;
        assert!((v - oracle).abs() < 1e-14);
        assert!((v - 3.3245).abs() < 1e-3);
        assert!(s.truth(&[20.5]).is_err());
    }

    #[test]
    fn grids_and_noise() {
        let e = Benchmark::new(BenchmarkName::Exp2d);
        let g = e.truth_grid(0);
        assert_eq!(g.len(), 41 * 41);
        assert_eq!(g[0], vec![-2.0, -2.0]);
        assert_eq!(g[40], vec![6.0, -2.0]);
        assert_eq!(Benchmark::new(BenchmarkName::Sin1d).truth_grid(0).len(), 200);
        let six = Benchmark::new(BenchmarkName::Sixd);
        assert_eq!(six.truth_grid(3), six.truth_grid(3));
        assert_eq!(six.truth_grid(3).len(), 1000);
        let mut rng = substream(1, "noise", 0);
        let n = 20_000;
        let s = Benchmark::new(BenchmarkName::Sin1d);
        let dev: Vec<f64> = (0..n).map(|_| s.evaluate(&[3.0], &mut rng).unwrap()[0] - sin1d(3.0)).collect();
        let sd = (dev.iter().map(|d| d * d).sum::<f64>() / n as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.003, "{sd}");
        let pair = Benchmark::new(BenchmarkName::Exp2dPair).with_noise(0.0).unwrap();
        let z = pair.evaluate(&[0.5, 0.1], &mut rng).unwrap();
        assert_eq!(z[0], -z[1]);
    }

    #[test]
    fn rmse_basics() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[1.5, 2.5, -0.5], &[1.0, 2.0, -1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn sin1d_is_piecewise(x in 0.0f64..20.0) {
            let v = sin1d(x);
            if x >= 10.0 {
                prop_assert_eq!(v, x / 10.0 - 1.0);
            } else {
                prop_assert!((v - ((PI * x / 5.0).sin() + 0.2 * (4.0 * PI * x / 5.0).cos())).abs() < 1e-15);
            }
        }

        #[test]
        fn exp2d_is_odd_in_x1(x1 in 0.0f64..2.0, x2 in -2.0f64..6.0) {
            prop_assert_eq!(exp2d(-x1, x2), -exp2d(x1, x2));
        }

        #[test]
        fn sixd_ignores_last_two(x in proptest::collection::vec(0.0f64..1.0, 8)) {
            let a = [x[0], x[1], x[2], x[3], x[4], x[5]];
            let b = [x[0], x[1], x[2], x[3], x[6], x[7]];
            prop_assert_eq!(sixd(&a), sixd(&b));
        }

        #[test]
        fn constant_offset_rmse(v in proptest::collection::vec(-5.0f64..5.0, 1..50), c in -3.0f64..3.0) {
            let shifted: Vec<f64> = v.iter().map(|a| a + c).collect();
            prop_assert!((rmse(&shifted, &v).unwrap() - c.abs()).abs() < 1e-9);
        }
    }
}
