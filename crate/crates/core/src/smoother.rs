//! Nadaraya-Watson estimation of the Study A conditional means.

use serde::{Deserialize, Serialize};

use crate::data::{min_max, sample_sd, GroupSample};
use crate::error::{Error, Result};

/// Smoothing kernel. Both are symmetric densities; only the Epanechnikov
/// kernel has finite support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Gaussian,
}

impl Kernel {
    /// Kernel density at `u`, unnormalized by the bandwidth.
    pub fn density(self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }
}

/// Default bandwidth `scale * sd(S) * n^(-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRule {
    pub scale: f64,
    pub exponent: f64,
}

impl Default for BandwidthRule {
    /// 1.06 sd n^-0.3; the exponent sits inside the (1/5, 1/3) consistency window.
    fn default() -> Self {
        BandwidthRule {
            scale: 1.06,
            exponent: 0.3,
        }
    }
}

impl BandwidthRule {
    /// Normal-reference rule 1.06 sd n^-1/5.
    pub fn normal_reference() -> Self {
        BandwidthRule {
            scale: 1.06,
            exponent: 0.2,
        }
    }

    pub fn bandwidth(&self, surrogates: &[f64]) -> f64 {
        let n = surrogates.len() as f64;
        self.scale * sample_sd(surrogates) * n.powf(-self.exponent)
    }
}

/// What to do when no training point falls inside the kernel window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    /// Double the bandwidth locally up to `max_doublings` times, then fall
    /// back to the nearest training point.
    WidenThenNearest { max_doublings: u32 },
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        FallbackPolicy::WidenThenNearest { max_doublings: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub kernel: Kernel,
    /// Fixed bandwidth; when `None` the rule below is applied per group.
    pub bandwidth: Option<f64>,
    pub rule: BandwidthRule,
    pub fallback: FallbackPolicy,
}

impl SmootherConfig {
    /// Gaussian kernel with the normal-reference bandwidth.
    pub fn gaussian_reference() -> Self {
        SmootherConfig {
            kernel: Kernel::Gaussian,
            bandwidth: None,
            rule: BandwidthRule::normal_reference(),
            fallback: FallbackPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
        }
        if !(self.rule.scale > 0.0 && self.rule.scale.is_finite() && self.rule.exponent.is_finite())
        {
            return Err(Error::InvalidParameter(
                "bandwidth rule needs a positive scale and finite exponent".into(),
            ));
        }
        Ok(())
    }
}

/// A fitted conditional-mean function. Evaluation is lazy and pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedMean {
    train_s: Vec<f64>,
    train_y: Vec<f64>,
    bandwidth: f64,
    kernel: Kernel,
    fallback: FallbackPolicy,
}

/// A single evaluation together with its extrapolation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// No training point lies strictly inside the bandwidth window at `s`.
    pub extrapolated: bool,
}

/// Fit with the default smoother (Epanechnikov kernel) and an optional fixed
/// bandwidth.
pub fn fit(sample: &GroupSample, bandwidth: Option<f64>) -> Result<SmoothedMean> {
    let config = SmootherConfig {
        bandwidth,
        ..SmootherConfig::default()
    };
    SmoothedMean::fit_with(sample, &config)
}

impl SmoothedMean {
    pub fn fit_with(sample: &GroupSample, config: &SmootherConfig) -> Result<Self> {
        let outcomes = sample.outcomes().ok_or(Error::MissingOutcomes)?;
        Self::from_parts(sample.surrogates(), outcomes, config)
    }

    pub fn from_parts(s: &[f64], y: &[f64], config: &SmootherConfig) -> Result<Self> {
        config.validate()?;
        if s.len() != y.len() {
            return Err(Error::LengthMismatch {
                what: "surrogates and outcomes",
                left: s.len(),
                right: y.len(),
            });
        }
        if s.len() < 2 {
            return Err(Error::DegenerateSample(format!(
                "need at least 2 training points, got {}",
                s.len()
            )));
        }
        if s.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("smoother training data"));
        }
        let (lo, hi) = min_max(s);
        if lo == hi {
            return Err(Error::DegenerateSample(
                "all surrogates are identical".into(),
            ));
        }
        let bandwidth = match config.bandwidth {
            Some(h) => h,
            None => config.rule.bandwidth(s),
        };
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::DegenerateSample(format!(
                "bandwidth rule produced {bandwidth}"
            )));
        }
        Ok(SmoothedMean {
            train_s: s.to_vec(),
            train_y: y.to_vec(),
            bandwidth,
            kernel: config.kernel,
            fallback: config.fallback,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn train_s(&self) -> &[f64] {
        &self.train_s
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn evaluate(&self, s: f64) -> f64 {
        self.evaluate_flagged(s).value
    }

    pub fn evaluate_many(&self, points: &[f64]) -> Vec<f64> {
        points.iter().map(|&s| self.evaluate(s)).collect()
    }

    pub fn evaluate_many_flagged(&self, points: &[f64]) -> Vec<Evaluation> {
        points.iter().map(|&s| self.evaluate_flagged(s)).collect()
    }

    pub fn evaluate_flagged(&self, s: f64) -> Evaluation {
        let nearest = self.nearest(s);
        let min_u = (self.train_s[nearest] - s).abs() / self.bandwidth;
        let extrapolated = min_u >= 1.0;
        let value = match self.kernel {
            Kernel::Gaussian => self.gaussian_ratio(s, min_u),
            Kernel::Epanechnikov => self
                .epanechnikov_with_fallback(s)
                .unwrap_or(self.train_y[nearest]),
        };
        Evaluation {
            value,
            extrapolated,
        }
    }

    fn nearest(&self, s: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &x) in self.train_s.iter().enumerate() {
            let d = (x - s).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    // Weights are taken relative to the nearest point so the ratio never
    // underflows; the ratio itself is scale invariant.
    fn gaussian_ratio(&self, s: f64, min_u: f64) -> f64 {
        let shift = min_u * min_u;
        let mut num = 0.0;
        let mut den = 0.0;
        for (&x, &y) in self.train_s.iter().zip(&self.train_y) {
            let u = (x - s) / self.bandwidth;
            let w = (-0.5 * (u * u - shift)).exp();
            num += w * y;
            den += w;
        }
        num / den
    }

    fn epanechnikov_ratio(&self, s: f64, h: f64) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (&x, &y) in self.train_s.iter().zip(&self.train_y) {
            let w = Kernel::Epanechnikov.density((x - s) / h);
            num += w * y;
            den += w;
        }
        (den > 0.0).then(|| num / den)
    }

    fn epanechnikov_with_fallback(&self, s: f64) -> Option<f64> {
        let FallbackPolicy::WidenThenNearest { max_doublings } = self.fallback;
        let mut h = self.bandwidth;
        for _ in 0..=max_doublings {
            if let Some(v) = self.epanechnikov_ratio(s, h) {
                return Some(v);
            }
            h *= 2.0;
        }
        None
    }
}
