//! Order-statistic and extreme-value analytics.
//!
//! Covers the exact finite-sample cdf of an order statistic, the von Mises
//! limit families for minima and maxima, the affine normalizations that put
//! Gaussian minima and chi-squared minima/maxima into their domains of
//! attraction, and the low-order and central-order limit laws.
//!
//! Normalizations follow the convention `W = shift + scale · Y`: the
//! normalized extreme `W_{1:m}` (or `W_{m:m}`) converges in distribution to
//! the matching limit cdf.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};
use statrs::function::{beta::beta_reg, erf::erf_inv, gamma::gamma};

use crate::error::{domain, Result, SearchError};
use crate::model::{HypothesisPair, StreamClass};

/// Location `ln(2√π)` of the Gaussian-minimum limit law.
pub const GAUSSIAN_MIN_LOCATION: f64 = 1.265_512_123_484_645_4;

/// Below this `|κ|` the von Mises forms are evaluated by their `κ → 0` limit.
pub const KAPPA_LIMIT_SWITCH: f64 = 1e-8;

/// Affine normalization `W = shift + scale · Y` of a sample of size `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineNorm {
    pub shift: f64,
    pub scale: f64,
    pub m: u64,
}

impl AffineNorm {
    pub fn apply(&self, y: f64) -> f64 {
        self.shift + self.scale * y
    }
}

/// `h(x) = 2 ln x - ln ln x`.
pub fn h(x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return domain(format!("h(x) is defined for x > 1, got {x}"));
    }
    Ok(2.0 * x.ln() - x.ln().ln())
}

/// cdf of the `r`-th smallest of `m` iid draws whose parent cdf equals `p`
/// at the evaluation point: `I_p(r, m - r + 1)`.
pub fn order_cdf_from_prob(p: f64, r: u64, m: u64) -> Result<f64> {
    if r == 0 || r > m {
        return domain(format!("order statistic rank {r} outside [1, {m}]"));
    }
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("parent cdf value {p} outside [0,1]"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    Ok(beta_reg(r as f64, (m - r + 1) as f64, p))
}

/// Exact cdf of `Y_{r:m}` at `y` for a parent cdf `G`.
pub fn exact_order_cdf(parent_cdf: impl Fn(f64) -> f64, r: u64, m: u64, y: f64) -> Result<f64> {
    order_cdf_from_prob(parent_cdf(y), r, m)
}

/// Normalization of standard Gaussian minima: shift `h(m)`, scale `√h(m)`.
pub fn gaussian_min_norm(m: u64) -> Result<AffineNorm> {
    if m < 3 {
        return domain(format!("Gaussian minimum normalization needs m >= 3, got {m}"));
    }
    let hm = h(m as f64)?;
    Ok(AffineNorm { shift: hm, scale: hm.sqrt(), m })
}

/// `L(w) = 1 - exp(-exp(w - ln 2√π))`.
pub fn gaussian_min_limit_cdf(w: f64) -> f64 {
    -(-(w - GAUSSIAN_MIN_LOCATION).exp()).exp_m1()
}

/// Normalization of chi-squared(`k`) minima: shift 0, scale
/// `½ [m / Γ(k/2 + 1)]^(2/k)`.
pub fn chi2_min_norm(k: u32, m: u64) -> Result<AffineNorm> {
    if k == 0 || m < 2 {
        return domain(format!("chi-squared minimum normalization needs k >= 1, m >= 2 (k={k}, m={m})"));
    }
    let half_k = f64::from(k) / 2.0;
    let scale = 0.5 * (m as f64 / gamma(half_k + 1.0)).powf(1.0 / half_k);
    Ok(AffineNorm { shift: 0.0, scale, m })
}

/// `L(w) = 1 - exp(-w^(k/2))` for `w ≥ 0`.
pub fn chi2_min_limit_cdf(k: u32, w: f64) -> Result<f64> {
    if k == 0 {
        return domain("degrees of freedom must be positive");
    }
    if !(w >= 0.0) {
        return domain(format!("chi-squared minimum limit defined for w >= 0, got {w}"));
    }
    Ok(-(-w.powf(f64::from(k) / 2.0)).exp_m1())
}

/// Normalization of chi-squared(`k`) maxima: shift
/// `-(ln m + (k/2 - 1) ln ln m)`, scale ½.
///
/// The `ln ln m` coefficient must be `k/2 - 1` for the limit to hold: the
/// tail `P(Y > y) ~ (y/2)^(k/2-1) e^(-y/2) / Γ(k/2)` has to be cancelled
/// exactly, and any other coefficient drifts by a power of `ln m`.
pub fn chi2_max_norm(k: u32, m: u64) -> Result<AffineNorm> {
    if k == 0 || m < 3 {
        return domain(format!("chi-squared maximum normalization needs k >= 1, m >= 3 (k={k}, m={m})"));
    }
    Ok(AffineNorm { shift: chi2_max_shift(k, m as f64), scale: 0.5, m })
}

/// Same as [`chi2_max_norm`] for a real-valued sample size, used in
/// closed-form checks.
pub fn chi2_max_shift(k: u32, m: f64) -> f64 {
    let lm = m.ln();
    -(lm + (f64::from(k) / 2.0 - 1.0) * lm.ln())
}

/// `H(w) = exp(-exp(-w) / Γ(k/2))`.
pub fn chi2_max_limit_cdf(k: u32, w: f64) -> Result<f64> {
    if k == 0 {
        return domain("degrees of freedom must be positive");
    }
    Ok((-(-w).exp() / gamma(f64::from(k) / 2.0)).exp())
}

/// Limit cdf of the `r`-th smallest normalized value given the limit cdf
/// `L` of the minimum.
pub fn low_order_limit_cdf(limit_min: impl Fn(f64) -> f64, r: u32, w: f64) -> f64 {
    low_order_from_min(limit_min(w), r)
}

/// [`low_order_limit_cdf`] with `L(w)` already evaluated.
pub fn low_order_from_min(l: f64, r: u32) -> f64 {
    if l >= 1.0 {
        return 1.0;
    }
    if l <= 0.0 {
        return 0.0;
    }
    if r <= 1 {
        return l;
    }
    let survival = 1.0 - l;
    let x = -survival.ln();
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..r {
        term *= x / f64::from(i);
        sum += term;
    }
    (1.0 - survival * sum).clamp(0.0, 1.0)
}

/// Normal approximation of a central order statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralOrderLaw {
    pub mean: f64,
    pub variance: f64,
}

/// Law of the `⌈mζ⌉`-th order statistic of `m` draws: mean `G⁻¹(ζ)`,
/// variance `ζ(1-ζ) / (m g(G⁻¹(ζ))²)`.
pub fn central_order_normal(
    parent_quantile: impl Fn(f64) -> f64,
    parent_pdf: impl Fn(f64) -> f64,
    zeta: f64,
    m: u64,
) -> Result<CentralOrderLaw> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return domain(format!("central fraction must lie in (0,1), got {zeta}"));
    }
    if m == 0 {
        return domain("sample size must be positive");
    }
    let q = parent_quantile(zeta);
    let g = parent_pdf(q);
    if !(g > 0.0) {
        return domain(format!("parent density vanishes at the {zeta} quantile"));
    }
    Ok(CentralOrderLaw { mean: q, variance: zeta * (1.0 - zeta) / (m as f64 * g * g) })
}

/// Predicted law of the `fraction`-quantile order statistic of `count`
/// mean-test statistics `Z_t` of one class after `t` rounds. The parent is
/// `N(μ t, t)` with `μ = mu1` for rare streams and `mu0` for normal ones.
pub fn refinement_central_predictors(
    pair: &HypothesisPair,
    class: StreamClass,
    t: u32,
    fraction: f64,
    count: u64,
) -> Result<CentralOrderLaw> {
    let HypothesisPair::Mean { mu0, mu1 } = *pair else {
        return Err(SearchError::Unsupported("central-order predictors exist for the mean test only".into()));
    };
    if count < 2 || t == 0 {
        return domain(format!("need count >= 2 and t >= 1 (count={count}, t={t})"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return domain(format!("fraction must lie in (0,1), got {fraction}"));
    }
    let mu = match class {
        StreamClass::Rare => mu1,
        StreamClass::Normal => mu0,
    };
    let tf = f64::from(t);
    let parent = Normal::new(mu * tf, tf.sqrt()).map_err(|e| SearchError::Domain(e.to_string()))?;
    let law = central_order_normal(|z| parent.inverse_cdf(z), |x| parent.pdf(x), fraction, count)?;
    // the closed-form mean, kept in erf⁻¹ form
    let mean = mu * tf + (2.0 * tf).sqrt() * erf_inv(2.0 * fraction - 1.0);
    Ok(CentralOrderLaw { mean, variance: law.variance })
}

/// Extremes with a known normalization, for tabulating limit laws against
/// their finite-sample cdfs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremeFamily {
    GaussianMin,
    Chi2Min { k: u32 },
    Chi2Max { k: u32 },
}

impl ExtremeFamily {
    pub fn norm(&self, m: u64) -> Result<AffineNorm> {
        match *self {
            ExtremeFamily::GaussianMin => gaussian_min_norm(m),
            ExtremeFamily::Chi2Min { k } => chi2_min_norm(k, m),
            ExtremeFamily::Chi2Max { k } => chi2_max_norm(k, m),
        }
    }

    pub fn limit_cdf(&self, w: f64) -> Result<f64> {
        match *self {
            ExtremeFamily::GaussianMin => Ok(gaussian_min_limit_cdf(w)),
            ExtremeFamily::Chi2Min { k } => chi2_min_limit_cdf(k, w.max(0.0)),
            ExtremeFamily::Chi2Max { k } => chi2_max_limit_cdf(k, w),
        }
    }

    /// Exact cdf at `w` of the normalized extreme of `m` draws.
    pub fn exact_cdf(&self, m: u64, w: f64) -> Result<f64> {
        let norm = self.norm(m)?;
        let y = (w - norm.shift) / norm.scale;
        match *self {
            ExtremeFamily::GaussianMin => order_cdf_from_prob(Normal::standard().cdf(y), 1, m),
            ExtremeFamily::Chi2Min { k } => order_cdf_from_prob(chi2_cdf(k, y)?, 1, m),
            ExtremeFamily::Chi2Max { k } => order_cdf_from_prob(chi2_cdf(k, y)?, m, m),
        }
    }
}

impl ExtremeFamily {
    /// Normalized extreme of `m` draws, by inverting the extreme's cdf at a
    /// uniform `v` in (0,1).
    pub fn sample_normalized(&self, m: u64, v: f64) -> Result<f64> {
        if !(v > 0.0 && v < 1.0) {
            return domain(format!("uniform draw must lie in (0,1), got {v}"));
        }
        let norm = self.norm(m)?;
        let mf = m as f64;
        // P(min <= y) = 1 - (1 - G(y))^m, P(max <= y) = G(y)^m
        let min_q = -((-v).ln_1p() / mf).exp_m1();
        let y = match *self {
            ExtremeFamily::GaussianMin => Normal::standard().inverse_cdf(min_q),
            ExtremeFamily::Chi2Min { k } => chi2_dist(k)?.inverse_cdf(min_q),
            ExtremeFamily::Chi2Max { k } => {
                // work with the upper tail for precision
                let tail = -(v.ln() / mf).exp_m1();
                if k == 2 {
                    -2.0 * tail.ln()
                } else {
                    chi2_dist(k)?.inverse_cdf(1.0 - tail)
                }
            }
        };
        Ok(norm.apply(y))
    }
}

fn chi2_dist(k: u32) -> Result<ChiSquared> {
    ChiSquared::new(f64::from(k)).map_err(|e| SearchError::Domain(e.to_string()))
}

fn chi2_cdf(k: u32, y: f64) -> Result<f64> {
    if y <= 0.0 {
        return Ok(0.0);
    }
    let d = ChiSquared::new(f64::from(k)).map_err(|e| SearchError::Domain(e.to_string()))?;
    Ok(d.cdf(y))
}

/// Which extreme a von Mises law describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremeKind {
    Min,
    Max,
}

/// Generalized extreme-value law in von Mises form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitLaw {
    pub kind: ExtremeKind,
    pub kappa: f64,
    pub lambda: f64,
    pub sigma: f64,
}

impl LimitLaw {
    pub fn new(kind: ExtremeKind, kappa: f64, lambda: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !kappa.is_finite() || !lambda.is_finite() {
            return domain(format!("invalid von Mises parameters κ={kappa}, λ={lambda}, σ={sigma}"));
        }
        Ok(LimitLaw { kind, kappa, lambda, sigma })
    }
}

/// Evaluates the von Mises cdf. Outside the support the value is clamped to
/// 0 or 1 on the appropriate side.
pub fn von_mises_cdf(law: &LimitLaw, w: f64) -> f64 {
    let x = (w - law.lambda) / law.sigma;
    let k = law.kappa;
    match law.kind {
        ExtremeKind::Min => {
            if k.abs() < KAPPA_LIMIT_SWITCH {
                return -(-x.exp()).exp_m1();
            }
            let base = 1.0 + k * x;
            if base <= 0.0 {
                return if k > 0.0 { 0.0 } else { 1.0 };
            }
            -(-(base.ln() / k).exp()).exp_m1()
        }
        ExtremeKind::Max => {
            if k.abs() < KAPPA_LIMIT_SWITCH {
                return (-(-x).exp()).exp();
            }
            let base = 1.0 - k * x;
            if base <= 0.0 {
                return if k > 0.0 { 1.0 } else { 0.0 };
            }
            (-(base.ln() / k).exp()).exp()
        }
    }
}
