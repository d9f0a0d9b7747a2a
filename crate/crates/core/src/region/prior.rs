use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};

use crate::kernel::{clamp_nugget, CorrelationParams};

/// One component of a gamma mixture, in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaComponent {
    pub weight: f64,
    pub shape: f64,
    pub rate: f64,
}

impl GammaComponent {
    fn log_pdf(&self, x: f64) -> f64 {
        use statrs::function::gamma::ln_gamma;
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln() - self.rate * x
    }
}

/// Priors on the correlation parameters and the linear indicators.
///
/// Range parameters are scaled by the squared width of the input box in each
/// dimension, so the gamma mixture acts on `d_i / width_i^2`.
#[derive(Debug, Clone)]
pub struct CorrelationPrior {
    pub range_scale: Vec<f64>,
    pub range_mixture: [GammaComponent; 2],
    /// Rate of the exponential prior on the nugget.
    pub nugget_rate: f64,
    /// Holds the nugget at this value instead of sampling it.
    pub fixed_nugget: Option<f64>,
    /// `d_max` of the linear-indicator prior `0.9 min(1, d / d_max)`.
    pub llm_d_max: f64,
    pub llm_max_prob: f64,
    /// Standard deviation of the log-normal random-walk proposals.
    pub mh_step: f64,
}

impl CorrelationPrior {
    /// Defaults for an input box with the given per-dimension widths.
    pub fn for_widths(widths: &[f64]) -> Self {
        let range_scale: Vec<f64> = widths.iter().map(|w| w * w).collect();
        let llm_d_max = range_scale.iter().sum();
        Self {
            range_scale,
            range_mixture: [
                GammaComponent { weight: 0.5, shape: 1.0, rate: 20.0 },
                GammaComponent { weight: 0.5, shape: 10.0, rate: 10.0 },
            ],
            nugget_rate: 1.0,
            fixed_nugget: None,
            llm_d_max,
            llm_max_prob: 0.9,
            mh_step: 0.3,
        }
    }

    pub fn dim(&self) -> usize {
        self.range_scale.len()
    }

    pub fn log_range(&self, i: usize, d: f64) -> f64 {
        if !(d > 0.0) {
            return f64::NEG_INFINITY;
        }
        let s = self.range_scale[i];
        let x = d / s;
        let [a, b] = self.range_mixture;
        let la = a.weight.ln() + a.log_pdf(x);
        let lb = b.weight.ln() + b.log_pdf(x);
        let hi = la.max(lb);
        hi + ((la - hi).exp() + (lb - hi).exp()).ln() - s.ln()
    }

    pub fn log_nugget(&self, g: f64) -> f64 {
        if self.fixed_nugget.is_some() {
            return 0.0;
        }
        if !(g > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.nugget_rate.ln() - self.nugget_rate * g
    }

    /// `P(linear | d)`.
    pub fn llm_prob(&self, d: f64) -> f64 {
        self.llm_max_prob * (d / self.llm_d_max).min(1.0)
    }

    pub fn log_indicator(&self, linear: bool, d: f64) -> f64 {
        let p = self.llm_prob(d);
        if linear {
            p.ln()
        } else {
            (1.0 - p).ln()
        }
    }

    pub fn draw_range<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        let [a, b] = self.range_mixture;
        let c = if rng.random::<f64>() < a.weight / (a.weight + b.weight) { a } else { b };
        let x: f64 = Gamma::new(c.shape, 1.0 / c.rate).unwrap().sample(rng);
        (x * self.range_scale[i]).max(1e-12)
    }

    pub fn draw_nugget<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.fixed_nugget {
            Some(g) => clamp_nugget(g),
            None => clamp_nugget(Exp::new(self.nugget_rate).unwrap().sample(rng)),
        }
    }

    /// Draws correlation parameters and linear indicators from the prior.
    /// With `allow_linear == false` every indicator is `false`.
    pub fn draw<R: Rng + ?Sized>(&self, allow_linear: bool, rng: &mut R) -> (CorrelationParams, Vec<bool>) {
        let range: Vec<f64> = (0..self.dim()).map(|i| self.draw_range(i, rng)).collect();
        let linear = range
            .iter()
            .map(|&d| allow_linear && rng.random::<f64>() < self.llm_prob(d))
            .collect();
        let nugget = self.draw_nugget(rng);
        (CorrelationParams { range, nugget }, linear)
    }

    /// Log prior density of correlation parameters and indicators.
    pub fn log_density(&self, corr: &CorrelationParams, linear: &[bool], with_indicators: bool) -> f64 {
        let mut lp = self.log_nugget(corr.nugget);
        for (i, &d) in corr.range.iter().enumerate() {
            lp += self.log_range(i, d);
            if with_indicators {
                lp += self.log_indicator(linear[i], d);
            }
        }
        lp
    }
}
