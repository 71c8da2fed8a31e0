//! Open-loop sampling schedule: how many refinements to take, when to stop,
//! and how many streams stay active in every round.
//!
//! The schedule front-loads every refinement (`psi` is ones-then-zeros) and
//! then spends the remaining budget on observation rounds over the smallest
//! active set. The closed-form stopping time is a large-`n` quantity; at
//! finite `n` the floors in the retained counts can overshoot the hard budget,
//! in which case trailing observation rounds are dropped until
//! `Σ |L_t| ≤ S·n`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SearchError};

/// Relative slack applied before taking floors of closed-form expressions,
/// so that values that are integers in exact arithmetic do not fall one short.
const FLOOR_SLACK: f64 = 1e-9;

pub(crate) fn floor_tol(x: f64) -> f64 {
    (x + FLOOR_SLACK * x.abs().max(1.0)).floor()
}

/// Problem size, prior and budget of one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of streams `n`.
    pub n: usize,
    /// Prior probability `ε_n` that a stream is rare.
    pub epsilon: f64,
    /// Number of streams `T_n` to return.
    pub t_target: usize,
    /// Normalized budget `S`: total samples divided by `n`.
    pub budget_s: f64,
    /// Maximum number of refinements `K`.
    pub max_refines: u32,
    /// Survival fraction `α` of a refinement.
    pub alpha: f64,
}

/// Asymptotic-regime diagnostics for a configuration. These are reported,
/// never enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    /// `ln(nε)/ln n`, when defined.
    pub eps_exponent: Option<f64>,
    /// Expected number of rare streams `nε`.
    pub expected_rare: f64,
    /// Whether `T_n` is below the expected number of rare streams.
    pub target_below_expected_rare: bool,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return domain("n must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return domain(format!("epsilon must lie in [0,1], got {}", self.epsilon));
        }
        if self.t_target == 0 || self.t_target > self.n {
            return domain(format!("t_target must lie in [1, n], got {}", self.t_target));
        }
        if !(self.budget_s >= 1.0) || !self.budget_s.is_finite() {
            return domain(format!("budget S must be at least 1, got {}", self.budget_s));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return domain(format!("alpha must lie in (0,1), got {}", self.alpha));
        }
        Ok(())
    }

    pub fn regime(&self) -> RegimeReport {
        let expected_rare = self.n as f64 * self.epsilon;
        RegimeReport {
            eps_exponent: epsilon_exponent(self.n, self.epsilon).ok(),
            expected_rare,
            target_below_expected_rare: (self.t_target as f64) < expected_rare,
        }
    }

    /// Hard budget `S·n` in samples.
    pub fn sample_budget(&self) -> f64 {
        self.budget_s * self.n as f64
    }

    /// Whether `samples` fits the hard budget, up to the same relative slack
    /// used for floors.
    pub fn within_budget(&self, samples: u64) -> bool {
        let budget = self.sample_budget();
        samples as f64 <= budget + FLOOR_SLACK * budget.max(1.0)
    }
}

/// Precomputed sampling schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Number of refinements actually scheduled.
    pub k_star: u32,
    /// Stopping time (round at which detection happens), after trimming.
    pub tau: usize,
    /// Closed-form stopping time before the finite-`n` budget trim.
    pub nominal_tau: usize,
    /// `psi[t-1]` is true when a refinement follows round `t`; length `tau - 1`.
    pub psi: Vec<bool>,
    /// `|L_t|` for `t = 1..=tau`.
    pub active_sizes: Vec<usize>,
    /// `Σ |L_t|`.
    pub total_samples: u64,
}

impl Schedule {
    pub fn refinements(&self) -> usize {
        self.psi.iter().filter(|&&p| p).count()
    }

    pub fn was_trimmed(&self) -> bool {
        self.tau < self.nominal_tau
    }
}

/// Prior exponent `ln(nε)/ln n`.
pub fn epsilon_exponent(n: usize, epsilon: f64) -> Result<f64> {
    if n < 2 {
        return domain(format!("epsilon exponent needs n >= 2, got {n}"));
    }
    let ne = n as f64 * epsilon;
    if !(ne > 0.0) {
        return domain("epsilon exponent needs n*epsilon > 0");
    }
    Ok(ne.ln() / (n as f64).ln())
}

/// Prior `ε = n^(e-1)` for a given exponent `e`.
pub fn epsilon_from_exponent(n: usize, eps_exp: f64) -> f64 {
    (n as f64).powf(eps_exp - 1.0)
}

/// Streams kept by a refinement of `active` streams: `⌊α(ℓ - T)⌋ + T`.
pub fn retained_count(active: usize, t_target: usize, alpha: f64) -> Result<usize> {
    if active < t_target {
        return domain(format!("active set ({active}) smaller than t_target ({t_target})"));
    }
    let excess = (active - t_target) as f64;
    Ok((alpha * excess).floor() as usize + t_target)
}

/// Number of refinements worth taking: all of them when `α ≤ 1 - 1/S`, none
/// otherwise.
pub fn optimal_k(budget_s: f64, max_refines: u32, alpha: f64) -> u32 {
    if alpha <= 1.0 - 1.0 / budget_s {
        max_refines
    } else {
        0
    }
}

/// Post-refinement observation rounds funded by the leftover budget,
/// `⌊S·α^-K + (1 - α^-K)/(1 - α)⌋`.
pub fn s_of_k(budget_s: f64, k: u32, alpha: f64) -> Result<i64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0,1), got {alpha}"));
    }
    let inv = alpha.powi(-(k as i32));
    let raw = budget_s * inv + (1.0 - inv) / (1.0 - alpha);
    let s = floor_tol(raw);
    if s < 1.0 {
        return Err(SearchError::Infeasible(format!(
            "budget S={budget_s} cannot fund an observation round after {k} refinements"
        )));
    }
    Ok(s as i64)
}

/// Closed-form stopping time: `K* + s(K*)` with refinements, `⌊S⌋` without.
pub fn nominal_stopping_time(budget_s: f64, max_refines: u32, alpha: f64) -> Result<usize> {
    if !(budget_s >= 1.0) {
        return domain(format!("budget S must be at least 1, got {budget_s}"));
    }
    let k_star = optimal_k(budget_s, max_refines, alpha);
    Ok(if k_star > 0 {
        k_star as usize + s_of_k(budget_s, k_star, alpha)? as usize
    } else {
        floor_tol(budget_s) as usize
    })
}

/// Active-set sizes for an arbitrary switching sequence. `psi` must have
/// length `tau - 1`.
pub fn active_sizes_for(n: usize, t_target: usize, alpha: f64, psi: &[bool]) -> Result<Vec<usize>> {
    let mut sizes = Vec::with_capacity(psi.len() + 1);
    sizes.push(n);
    for &refine in psi {
        let last = *sizes.last().unwrap();
        sizes.push(if refine { retained_count(last, t_target, alpha)? } else { last });
    }
    Ok(sizes)
}

/// Builds the budget-feasible schedule for `cfg`.
pub fn build_schedule(cfg: &SearchConfig) -> Result<Schedule> {
    cfg.validate()?;
    let k_star = optimal_k(cfg.budget_s, cfg.max_refines, cfg.alpha);
    let nominal_tau = nominal_stopping_time(cfg.budget_s, cfg.max_refines, cfg.alpha)?;
    let k = k_star as usize;

    // sizes of the refinement rounds plus the first post-refinement round
    let head_psi: Vec<bool> = (0..k).map(|_| true).collect();
    let head = active_sizes_for(cfg.n, cfg.t_target, cfg.alpha, &head_psi)?;
    let floor_size = head[k];
    let refine_cost: u64 = head[..k].iter().map(|&s| s as u64).sum();
    let budget = cfg.sample_budget();

    let leftover = budget - refine_cost as f64;
    let affordable = if leftover < 0.0 {
        0
    } else {
        floor_tol(leftover / floor_size as f64) as usize
    };
    let tau = nominal_tau.min(k + affordable);
    if tau < k + 1 {
        return Err(SearchError::Infeasible(format!(
            "{k} refinements leave no budget for a detection round (n={}, S={}, T={})",
            cfg.n, cfg.budget_s, cfg.t_target
        )));
    }

    let psi: Vec<bool> = (1..tau).map(|t| t <= k).collect();
    let active_sizes = active_sizes_for(cfg.n, cfg.t_target, cfg.alpha, &psi)?;
    let total_samples: u64 = active_sizes.iter().map(|&s| s as u64).sum();
    if !cfg.within_budget(total_samples) {
        return Err(SearchError::Internal(format!(
            "schedule uses {total_samples} samples, budget is {budget}"
        )));
    }
    Ok(Schedule { k_star, tau, nominal_tau, psi, active_sizes, total_samples })
}
