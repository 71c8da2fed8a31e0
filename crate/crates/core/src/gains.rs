//! Agility and scaling gains of the adaptive schedule over non-adaptive
//! search, and the budget that equalizes the two.
//!
//! The agility gain compares budgets at matched signal strength; the scaling
//! gain compares detectability thresholds at matched budget. Both are
//! bracketed because of the floor in the round count `s(K)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SearchError};
use crate::policy::s_of_k;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub lower: f64,
    pub upper: f64,
    /// Limit of both bounds as `K → ∞` (agility) or the floor-free value
    /// (scaling).
    pub asymptotic_k: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0,1), got {alpha}"));
    }
    Ok(())
}

/// Budget ratio of non-adaptive to adaptive search when the adaptive
/// schedule matches a non-adaptive budget `s0`.
pub fn agility_gain_bounds(s0: f64, alpha: f64, k: u32) -> Result<GainBounds> {
    check_alpha(alpha)?;
    if !(s0 > 0.0) {
        return domain(format!("s0 must be positive, got {s0}"));
    }
    let ak = alpha.powi(k as i32);
    let c = s0 * (1.0 - alpha);
    Ok(GainBounds {
        lower: 1.0 / (ak + (1.0 - ak * alpha) / c),
        upper: 1.0 / (ak + (1.0 - ak) / c),
        asymptotic_k: c,
    })
}

/// Threshold ratio of non-adaptive to adaptive search at budget `S`.
pub fn scaling_gain_bounds(budget_s: f64, alpha: f64, k: u32) -> Result<GainBounds> {
    check_alpha(alpha)?;
    if !(budget_s >= 1.0) {
        return domain(format!("budget S must be at least 1, got {budget_s}"));
    }
    if alpha > 1.0 - 1.0 / budget_s {
        return domain(format!("refinements do not pay off at S={budget_s}, alpha={alpha}"));
    }
    let ak = alpha.powi(k as i32);
    let d = budget_s * (1.0 - alpha);
    Ok(GainBounds {
        lower: (1.0 + (ak * alpha - 1.0) / d) / ak,
        upper: (1.0 + (ak - 1.0) / d) / ak,
        asymptotic_k: (1.0 - 1.0 / d) / ak,
    })
}

/// Smallest budget `S` whose post-refinement round count `s(K)` equals
/// `⌊s0⌋`.
pub fn equalized_budget(alpha: f64, k: u32, s0: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let target = s0.floor();
    if !(target >= 1.0) {
        return Err(SearchError::Infeasible(format!("s0={s0} funds no observation round")));
    }
    let reached = |s: f64| s_of_k(s, k, alpha).map(|v| v as f64 >= target).unwrap_or(false);
    if reached(1.0) {
        if s_of_k(1.0, k, alpha)? as f64 == target {
            return Ok(1.0);
        }
        return Err(SearchError::Infeasible(format!(
            "s(K) already exceeds {target} at S=1 (alpha={alpha}, K={k})"
        )));
    }
    // the floor-free solution brackets the answer closely
    let inv = alpha.powi(-(k as i32));
    let guess = (target - (1.0 - inv) / (1.0 - alpha)) / inv;
    if guess >= 1.0 && reached(guess) && s_of_k(guess, k, alpha)? as f64 == target {
        return Ok(guess);
    }
    let mut lo = 1.0f64;
    let mut hi = (guess + 1.0).max(2.0);
    while !reached(hi) {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if s_of_k(hi, k, alpha)? as f64 != target {
        return Err(SearchError::Internal(format!("no budget gives s(K)={target}")));
    }
    Ok(hi)
}
