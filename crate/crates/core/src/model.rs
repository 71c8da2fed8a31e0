//! Hypothesis families, per-stream sufficient statistics and likelihood
//! ratios.
//!
//! Two Gaussian families are supported: a unit-variance mean test with
//! `mu0 > mu1` and a zero-mean variance test with `a0 > a1 > 0`. In both the
//! rare class is `H1`, so rare streams are the ones with *small* likelihood
//! ratio `f0/f1`. Everything here works in the log domain.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// The `(F0, F1)` test family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "lowercase")]
pub enum HypothesisPair {
    /// `N(mu0, 1)` against `N(mu1, 1)`.
    Mean { mu0: f64, mu1: f64 },
    /// `N(0, a0)` against `N(0, a1)`.
    Variance { a0: f64, a1: f64 },
}

/// The two supported test families, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFamily {
    Mean,
    Variance,
}

/// Which hypothesis generated a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamClass {
    Normal,
    Rare,
}

impl StreamClass {
    pub fn from_rare(is_rare: bool) -> Self {
        if is_rare {
            StreamClass::Rare
        } else {
            StreamClass::Normal
        }
    }
}

impl HypothesisPair {
    pub fn mean(mu0: f64, mu1: f64) -> Result<Self> {
        let pair = HypothesisPair::Mean { mu0, mu1 };
        pair.validate()?;
        Ok(pair)
    }

    pub fn variance(a0: f64, a1: f64) -> Result<Self> {
        let pair = HypothesisPair::Variance { a0, a1 };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            HypothesisPair::Mean { mu0, mu1 } => {
                if !(mu0.is_finite() && mu1.is_finite()) || mu0 <= mu1 {
                    return domain(format!("mean test requires mu0 > mu1, got mu0={mu0}, mu1={mu1}"));
                }
            }
            HypothesisPair::Variance { a0, a1 } => {
                if !(a0.is_finite() && a1.is_finite()) || a1 <= 0.0 || a0 <= a1 {
                    return domain(format!("variance test requires a0 > a1 > 0, got a0={a0}, a1={a1}"));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> TestFamily {
        match self {
            HypothesisPair::Mean { .. } => TestFamily::Mean,
            HypothesisPair::Variance { .. } => TestFamily::Variance,
        }
    }

    /// Maps a standard normal draw to a sample of the given class.
    pub fn sample_increment(&self, is_rare: bool, rng_draw: f64) -> f64 {
        match *self {
            HypothesisPair::Mean { mu0, mu1 } => {
                let mu = if is_rare { mu1 } else { mu0 };
                mu + rng_draw
            }
            HypothesisPair::Variance { a0, a1 } => {
                let a = if is_rare { a1 } else { a0 };
                a.sqrt() * rng_draw
            }
        }
    }

    /// Folds one raw sample into the stream's sufficient statistic: the sum
    /// of samples for the mean test, the sum of squares for the variance test.
    pub fn accumulate(&self, stat: &mut SufficientStat, sample: f64) {
        match self {
            HypothesisPair::Mean { .. } => stat.value += sample,
            HypothesisPair::Variance { .. } => stat.value += sample * sample,
        }
        stat.count += 1;
    }

    /// `ln f0(x)/f1(x)` for a single sample.
    pub fn log_density_ratio(&self, x: f64) -> f64 {
        match *self {
            HypothesisPair::Mean { mu0, mu1 } => (mu0 - mu1) * x + (mu1 * mu1 - mu0 * mu0) / 2.0,
            HypothesisPair::Variance { a0, a1 } => {
                0.5 * (1.0 / a1 - 1.0 / a0) * x * x + 0.5 * (a1 / a0).ln()
            }
        }
    }

    /// `ln Λ_t`, the cumulative log likelihood ratio `ln Π f0/f1`.
    ///
    /// The variance form carries the `(t/2) ln(a1/a0)` normalization term so
    /// that the value is the true density ratio. An empty statistic gives 0.
    pub fn log_likelihood_ratio(&self, stat: &SufficientStat) -> f64 {
        if stat.count == 0 {
            return 0.0;
        }
        let t = f64::from(stat.count);
        match *self {
            HypothesisPair::Mean { mu0, mu1 } => {
                (mu0 - mu1) * stat.value + t * (mu1 * mu1 - mu0 * mu0) / 2.0
            }
            HypothesisPair::Variance { a0, a1 } => {
                0.5 * (1.0 / a1 - 1.0 / a0) * stat.value + 0.5 * t * (a1 / a0).ln()
            }
        }
    }

    /// Monotone surrogate for `Λ_t` used for ranking streams with equal
    /// sample counts.
    pub fn ordering_statistic(&self, stat: &SufficientStat) -> f64 {
        stat.value
    }

    /// Kullback-Leibler divergence `KL(f1 || f0)` per sample.
    pub fn kl_rare_normal(&self) -> f64 {
        match *self {
            HypothesisPair::Mean { mu0, mu1 } => (mu0 - mu1).powi(2) / 2.0,
            HypothesisPair::Variance { a0, a1 } => {
                let r = a1 / a0;
                0.5 * (r - 1.0 - r.ln())
            }
        }
    }

    /// Kullback-Leibler divergence `KL(f0 || f1)` per sample.
    pub fn kl_normal_rare(&self) -> f64 {
        match *self {
            HypothesisPair::Mean { mu0, mu1 } => (mu0 - mu1).powi(2) / 2.0,
            HypothesisPair::Variance { a0, a1 } => {
                let r = a0 / a1;
                0.5 * (r - 1.0 - r.ln())
            }
        }
    }
}

/// Cumulative per-stream statistic: `Z_t = Σ x` (mean) or `Σ x²` (variance).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SufficientStat {
    pub value: f64,
    pub count: u32,
}

impl SufficientStat {
    pub fn new(value: f64, count: u32) -> Self {
        SufficientStat { value, count }
    }
}

/// Posterior probability that a stream is rare given its log likelihood
/// ratio `ln(f0/f1)` and the prior `epsilon`.
pub fn posterior_from_llr(llr: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return domain(format!("prior must lie in (0,1), got {epsilon}"));
    }
    // pi = 1 / (1 + exp(x)), x = ln((1-eps)/eps) + llr
    let x = (1.0 - epsilon).ln() - epsilon.ln() + llr;
    Ok(if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    })
}

pub fn posterior_rare(pair: &HypothesisPair, stat: &SufficientStat, epsilon: f64) -> Result<f64> {
    posterior_from_llr(pair.log_likelihood_ratio(stat), epsilon)
}
