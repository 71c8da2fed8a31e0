//! Closed-form detectability thresholds, error probabilities and the
//! detectable-region grid.
//!
//! Signal strength is measured on a logarithmic scale: `r_m = (μ0-μ1)²/(2 ln n)`
//! for the mean test and `ξ_v = ln(A0/A1)/ln n` for the variance test. The
//! search succeeds asymptotically iff the exponent strictly exceeds a
//! threshold that depends on the prior exponent and the stopping time.

use serde::{Deserialize, Serialize};

use crate::engine::monte_carlo;
use crate::error::{domain, Result, SearchError};
use crate::extremes::{h, GAUSSIAN_MIN_LOCATION};
use crate::model::{HypothesisPair, TestFamily};
use crate::policy::{build_schedule, epsilon_from_exponent, nominal_stopping_time, SearchConfig};

fn log_n(n: usize) -> Result<f64> {
    if n < 2 {
        return domain(format!("n must be at least 2, got {n}"));
    }
    Ok((n as f64).ln())
}

/// `(μ0-μ1)² / (2 ln n)`.
pub fn mean_signal_exponent(pair: &HypothesisPair, n: usize) -> Result<f64> {
    match *pair {
        HypothesisPair::Mean { mu0, mu1 } => Ok((mu0 - mu1).powi(2) / (2.0 * log_n(n)?)),
        _ => Err(SearchError::Unsupported("mean signal exponent needs a mean test".into())),
    }
}

/// `ln(A0/A1) / ln n`.
pub fn variance_signal_exponent(pair: &HypothesisPair, n: usize) -> Result<f64> {
    match *pair {
        HypothesisPair::Variance { a0, a1 } => Ok((a0 / a1).ln() / log_n(n)?),
        _ => Err(SearchError::Unsupported("variance signal exponent needs a variance test".into())),
    }
}

/// Signal exponent of either family.
pub fn signal_exponent(pair: &HypothesisPair, n: usize) -> Result<f64> {
    match pair.family() {
        TestFamily::Mean => mean_signal_exponent(pair, n),
        TestFamily::Variance => variance_signal_exponent(pair, n),
    }
}

/// Hypothesis pair whose signal exponent at size `n` equals `exponent`.
/// Mean tests use `μ1 = 0`, variance tests `A1 = 1`.
pub fn pair_from_exponent(family: TestFamily, n: usize, exponent: f64) -> Result<HypothesisPair> {
    let ln_n = log_n(n)?;
    match family {
        TestFamily::Mean => HypothesisPair::mean((2.0 * exponent * ln_n).sqrt(), 0.0),
        TestFamily::Variance => HypothesisPair::variance((exponent * ln_n).exp(), 1.0),
    }
}

fn check_eps_exp(eps_exp: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps_exp) {
        return domain(format!("prior exponent must lie in [0,1], got {eps_exp}"));
    }
    Ok(())
}

/// Mean-test threshold `(1-√𝜀)²/τ`, where `τ` is the closed-form stopping
/// time (`⌊S⌋` when refining does not pay off).
pub fn mean_threshold(eps_exp: f64, budget_s: f64, k: u32, alpha: f64) -> Result<f64> {
    check_eps_exp(eps_exp)?;
    let tau = nominal_stopping_time(budget_s, k, alpha)?;
    Ok((1.0 - eps_exp.sqrt()).powi(2) / tau as f64)
}

/// Variance-test threshold `2(1-𝜀)/τ`.
pub fn variance_threshold(eps_exp: f64, budget_s: f64, k: u32, alpha: f64) -> Result<f64> {
    check_eps_exp(eps_exp)?;
    let tau = nominal_stopping_time(budget_s, k, alpha)?;
    Ok(2.0 * (1.0 - eps_exp) / tau as f64)
}

pub fn threshold(family: TestFamily, eps_exp: f64, budget_s: f64, k: u32, alpha: f64) -> Result<f64> {
    match family {
        TestFamily::Mean => mean_threshold(eps_exp, budget_s, k, alpha),
        TestFamily::Variance => variance_threshold(eps_exp, budget_s, k, alpha),
    }
}

/// Scale a gap (mean) or ratio (variance) must dominate for refinements to
/// keep the rare streams: `n^(-𝜀/2)` or `𝜀 ln n`.
pub fn refinement_retention_scale(family: TestFamily, n: usize, eps_exp: f64) -> Result<f64> {
    let ln_n = log_n(n)?;
    check_eps_exp(eps_exp)?;
    Ok(match family {
        TestFamily::Mean => (-eps_exp * ln_n / 2.0).exp(),
        TestFamily::Variance => eps_exp * ln_n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleClass {
    Above,
    Below,
}

/// Strictly above the scale counts as above.
pub fn classify(value: f64, scale: f64) -> ScaleClass {
    if value > scale {
        ScaleClass::Above
    } else {
        ScaleClass::Below
    }
}

/// Terms of the mean-test error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub a_n: f64,
    pub b_n: f64,
}

/// `A_n = √(h(n_rare)/h(n_normal))` and
/// `B_n = √h(n_rare)·[√h(n_rare) - √h(n_normal) + √τ·gap]`.
pub fn mean_bound_terms(n_rare: u64, n_normal: u64, tau: usize, gap: f64) -> Result<BoundTerms> {
    if n_rare < 3 || n_normal < 3 {
        return domain(format!("bound terms need at least 3 streams per class, got {n_rare} and {n_normal}"));
    }
    let hr = h(n_rare as f64)?.sqrt();
    let hn = h(n_normal as f64)?.sqrt();
    Ok(BoundTerms { a_n: hr / hn, b_n: hr * (hr - hn + (tau as f64).sqrt() * gap) })
}

/// Asymptotic lower bound on the mean-test error probability as a function
/// of `B_n`.
pub fn mean_error_lower_bound(b_n: f64) -> f64 {
    let c = GAUSSIAN_MIN_LOCATION;
    let outer = (-(b_n - c).exp()).exp();
    let inner = (-(-c).exp()).exp();
    // 1/(e^B + 1) written to stay finite for large B
    let tail = if b_n > 0.0 { (-b_n).exp() / (1.0 + (-b_n).exp()) } else { 1.0 / (b_n.exp() + 1.0) };
    outer * ((1.0 - inner) + inner * tail)
}

/// Variance-test error `1 - (Θ/(1+Θ))^T`, with `Θ = ratio^(τ/2)·n_rare/n_normal`,
/// from realized class counts.
pub fn variance_error_closed_form(
    ratio: f64,
    tau: usize,
    n_rare: u64,
    n_normal: u64,
    t_target: usize,
) -> Result<f64> {
    if !(ratio > 1.0) {
        return domain(format!("variance ratio must exceed 1, got {ratio}"));
    }
    if n_rare == 0 || n_normal == 0 {
        return domain("class counts must be positive");
    }
    let ln_theta = tau as f64 / 2.0 * ratio.ln() + (n_rare as f64 / n_normal as f64).ln();
    Ok(variance_error_from_log_theta(ln_theta, t_target))
}

/// Same as [`variance_error_closed_form`] with expected counts `nε`, `n(1-ε)`.
pub fn variance_error_expected(
    ratio: f64,
    tau: usize,
    n: usize,
    epsilon: f64,
    t_target: usize,
) -> Result<f64> {
    if !(ratio > 1.0) {
        return domain(format!("variance ratio must exceed 1, got {ratio}"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) || n == 0 {
        return domain("expected class counts must be positive");
    }
    let ln_theta = tau as f64 / 2.0 * ratio.ln() + (epsilon / (1.0 - epsilon)).ln();
    Ok(variance_error_from_log_theta(ln_theta, t_target))
}

/// `1 - (Θ/(1+Θ))^T` given `ln Θ`.
pub fn variance_error_from_log_theta(ln_theta: f64, t_target: usize) -> f64 {
    // ln(Θ/(1+Θ)) = -ln(1 + 1/Θ)
    let ln_q = -(-ln_theta).exp().ln_1p();
    -(t_target as f64 * ln_q).exp_m1()
}

/// Parameters shared by every cell of a region grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionTemplate {
    pub family: TestFamily,
    pub budget_s: f64,
    pub max_refines: u32,
    pub alpha: f64,
}

/// Detectability classification over a (signal exponent, prior exponent)
/// grid. Rows follow `axis1`, columns `axis2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub template: RegionTemplate,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Threshold for each prior exponent in `axis2`.
    pub thresholds: Vec<f64>,
    pub cells: Vec<Vec<bool>>,
    pub empirical_error: Option<Vec<Vec<f64>>>,
}

pub const DEFAULT_REGION_RESOLUTION: usize = 50;

/// `count` evenly spaced interior points of `(lo, hi)`.
pub fn interior_axis(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|i| lo + (hi - lo) * i as f64 / (count + 1) as f64).collect()
}

pub fn build_region(template: RegionTemplate, axis1: Vec<f64>, axis2: Vec<f64>) -> Result<RegionGrid> {
    if axis1.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return domain("signal exponents must be positive");
    }
    let thresholds = axis2
        .iter()
        .map(|&e| threshold(template.family, e, template.budget_s, template.max_refines, template.alpha))
        .collect::<Result<Vec<_>>>()?;
    let cells = axis1.iter().map(|&x| thresholds.iter().map(|&th| x > th).collect()).collect();
    Ok(RegionGrid { template, axis1, axis2, thresholds, cells, empirical_error: None })
}

impl RegionGrid {
    pub fn detectable_count(&self) -> usize {
        self.cells.iter().flatten().filter(|&&d| d).count()
    }

    /// Fills `empirical_error` by running the engine at size `n` in every
    /// cell. Cells whose schedule is infeasible at this `n` get NaN.
    pub fn overlay_monte_carlo(&mut self, n: usize, t_target: usize, trials: u64, master_seed: u64) -> Result<()> {
        let mut rows = Vec::with_capacity(self.axis1.len());
        for (i, &x) in self.axis1.iter().enumerate() {
            let pair = pair_from_exponent(self.template.family, n, x)?;
            let mut row = Vec::with_capacity(self.axis2.len());
            for (j, &e) in self.axis2.iter().enumerate() {
                let cfg = SearchConfig {
                    n,
                    epsilon: epsilon_from_exponent(n, e),
                    t_target,
                    budget_s: self.template.budget_s,
                    max_refines: self.template.max_refines,
                    alpha: self.template.alpha,
                };
                let schedule = match build_schedule(&cfg) {
                    Ok(s) => s,
                    Err(SearchError::Infeasible(_)) => {
                        row.push(f64::NAN);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let cell_seed = master_seed ^ ((i * self.axis2.len() + j) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                row.push(monte_carlo(&cfg, &pair, &schedule, trials, cell_seed)?.error_rate);
            }
            rows.push(row);
        }
        self.empirical_error = Some(rows);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn signal_exponent_examples() {
        let n = 10_000;
        let gap = (2.0 * (n as f64).ln()).sqrt();
        assert_abs_diff_eq!(mean_signal_exponent(&HypothesisPair::mean(gap, 0.0).unwrap(), n).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mean_signal_exponent(&HypothesisPair::mean(1.073, 0.0).unwrap(), n).unwrap(), 0.0625, epsilon = 1e-4);
        assert_abs_diff_eq!(variance_signal_exponent(&HypothesisPair::variance(10.0, 1.0).unwrap(), n).unwrap(), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(variance_signal_exponent(&HypothesisPair::variance(1e4, 1.0).unwrap(), n).unwrap(), 1.0, epsilon = 1e-12);
        assert!(variance_signal_exponent(&HypothesisPair::mean(1.0, 0.0).unwrap(), n).is_err());
        for fam in [TestFamily::Mean, TestFamily::Variance] {
            let p = pair_from_exponent(fam, n, 0.3).unwrap();
            assert_abs_diff_eq!(signal_exponent(&p, n).unwrap(), 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn threshold_examples() {
        assert_abs_diff_eq!(mean_threshold(0.25, 2.0, 2, 0.5).unwrap(), 0.0625, epsilon = 1e-12);
        assert_abs_diff_eq!(mean_threshold(0.25, 1.0, 0, 0.5).unwrap(), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(mean_threshold(1.0, 2.0, 2, 0.5).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(variance_threshold(0.5, 2.0, 2, 0.5).unwrap(), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(variance_threshold(0.0, 4.0, 0, 0.5).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(variance_threshold(1.0, 4.0, 0, 0.5).unwrap(), 0.0, epsilon = 1e-12);
        // α > 1 - 1/S falls back to ⌊S⌋ rounds
        assert_abs_diff_eq!(mean_threshold(0.0, 2.0, 3, 0.9).unwrap(), 0.5, epsilon = 1e-12);
        assert!(mean_threshold(1.5, 2.0, 2, 0.5).is_err());
    }

    #[test]
    fn threshold_matches_schedule_at_large_n() {
        for &(s, k, alpha) in &[(2.0, 2, 0.5), (5.0, 3, 0.3), (10.0, 4, 0.8), (3.0, 1, 0.6)] {
            let cfg = SearchConfig { n: 1_000_000_000, epsilon: 1e-3, t_target: 1, budget_s: s, max_refines: k, alpha };
            let sched = build_schedule(&cfg).unwrap();
            assert!(!sched.was_trimmed());
            for e in [0.1, 0.5, 0.8] {
                let want = (1.0 - f64::sqrt(e)).powi(2) / sched.tau as f64;
                assert_abs_diff_eq!(mean_threshold(e, s, k, alpha).unwrap(), want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn retention_scale_examples() {
        assert_abs_diff_eq!(refinement_retention_scale(TestFamily::Mean, 10_000, 0.5).unwrap(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(refinement_retention_scale(TestFamily::Variance, 10_000, 0.5).unwrap(), 4.60517, epsilon = 1e-5);
        assert_eq!(refinement_retention_scale(TestFamily::Mean, 10_000, 0.0).unwrap(), 1.0);
        assert_eq!(classify(0.2, 0.1), ScaleClass::Above);
        assert_eq!(classify(0.1, 0.1), ScaleClass::Below);
    }

    #[test]
    fn detection_dominates_retention() {
        let n = 10_000;
        let ln_n = (n as f64).ln();
        // long schedules (τ in the hundreds) push the finite-n threshold gap
        // below n^(-𝜀/2), so only short ones are checked
        for &(s, k, alpha) in &[(2.0, 2, 0.5), (2.0, 0, 0.5), (4.0, 1, 0.5), (10.0, 2, 0.9)] {
            for i in 1..=9 {
                let e = i as f64 / 10.0;
                let gap = (2.0 * ln_n * mean_threshold(e, s, k, alpha).unwrap()).sqrt();
                let scale = refinement_retention_scale(TestFamily::Mean, n, e).unwrap();
                assert_eq!(classify(gap, scale), ScaleClass::Above, "S={s} K={k} α={alpha} 𝜀={e}");
            }
        }
    }

    #[test]
    fn bound_terms_examples() {
        let t = mean_bound_terms(100, 10_000, 4, 1.073).unwrap();
        assert_abs_diff_eq!(t.b_n, 2.474_945, epsilon = 1e-5);
        let t = mean_bound_terms(500, 500, 4, 0.7).unwrap();
        assert_abs_diff_eq!(t.a_n, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.b_n, h(500.0).unwrap().sqrt() * 2.0 * 0.7, epsilon = 1e-12);
        assert_eq!(mean_bound_terms(500, 500, 4, 0.0).unwrap().b_n, 0.0);
        assert!(mean_bound_terms(2, 500, 4, 1.0).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        assert_abs_diff_eq!(mean_error_lower_bound(0.0), 0.4698, epsilon = 1e-4);
        assert!(mean_error_lower_bound(50.0) < 1e-12);
        assert_abs_diff_eq!(mean_error_lower_bound(-60.0), 1.0, epsilon = 1e-6);
        // decreasing, and below 0.63 on B ≥ 0
        let mut prev = f64::INFINITY;
        for i in 0..=250 {
            let b = -20.0 + i as f64 * 0.1;
            let v = mean_error_lower_bound(b);
            assert!(v > 0.0 && v <= prev, "B={b}");
            if b >= 0.0 {
                assert!(v < 0.63);
            }
            prev = v;
        }
    }

    #[test]
    fn variance_closed_form_examples() {
        assert_abs_diff_eq!(variance_error_from_log_theta(0.0, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(variance_error_from_log_theta(9f64.ln(), 3), 0.271, epsilon = 1e-12);
        assert!(variance_error_from_log_theta(800.0, 3) == 0.0);
        // ratio^(τ/2)·n_r/n_n = 9 with τ = 2
        assert_abs_diff_eq!(variance_error_closed_form(90.0, 2, 10, 100, 3).unwrap(), 0.271, epsilon = 1e-12);
        assert_abs_diff_eq!(
            variance_error_expected(90.0, 2, 110, 1.0 / 11.0, 3).unwrap(),
            0.271,
            epsilon = 1e-12
        );
        assert!(variance_error_closed_form(1.0, 2, 10, 100, 3).is_err());
    }

    #[test]
    fn variance_closed_form_monotone() {
        let base = variance_error_closed_form(5.0, 4, 50, 5000, 3).unwrap();
        assert!(variance_error_closed_form(6.0, 4, 50, 5000, 3).unwrap() < base);
        assert!(variance_error_closed_form(5.0, 4, 50, 5000, 4).unwrap() > base);
        assert!(variance_error_closed_form(5.0, 4, 40, 5000, 3).unwrap() > base);
    }

    #[test]
    fn region_examples() {
        let axis1 = interior_axis(0.0, 1.0, 50);
        let axis2 = interior_axis(0.0, 1.0, 50);
        let k2 = build_region(
            RegionTemplate { family: TestFamily::Mean, budget_s: 2.0, max_refines: 2, alpha: 0.5 },
            axis1.clone(),
            axis2.clone(),
        )
        .unwrap();
        let k0 = build_region(
            RegionTemplate { family: TestFamily::Mean, budget_s: 2.0, max_refines: 0, alpha: 0.5 },
            axis1,
            axis2,
        )
        .unwrap();
        assert_eq!(k2.cells.len(), 50);
        assert!(k2.cells.iter().all(|r| r.len() == 50));
        for (r2, r0) in k2.cells.iter().zip(&k0.cells) {
            for (&a, &b) in r2.iter().zip(r0) {
                assert!(a || !b);
            }
        }
        assert!(k2.detectable_count() > k0.detectable_count());

        // boundary cell is undetectable
        let th = mean_threshold(0.25, 2.0, 2, 0.5).unwrap();
        let g = build_region(k2.template, vec![th], vec![0.25]).unwrap();
        assert!(!g.cells[0][0]);

        let g = build_region(k2.template, interior_axis(0.0, 1.0, 50), vec![0.99]).unwrap();
        assert!(g.detectable_count() >= 49);
    }

    #[test]
    fn region_overlay_shape() {
        let mut g = build_region(
            RegionTemplate { family: TestFamily::Variance, budget_s: 2.0, max_refines: 0, alpha: 0.5 },
            vec![0.2, 1.5],
            vec![0.5],
        )
        .unwrap();
        g.overlay_monte_carlo(400, 1, 40, 3).unwrap();
        let emp = g.empirical_error.as_ref().unwrap();
        assert_eq!(emp.len(), 2);
        assert!(emp[1][0] < emp[0][0]);
    }
}
