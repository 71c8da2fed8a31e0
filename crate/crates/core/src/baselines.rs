//! Comparator procedures: non-adaptive search, per-stream SPRT and repeated
//! CUSUM.
//!
//! The sequential procedures look at one stream at a time. They serve as
//! references for the sample cost of the scheduled search.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{generate_population, monte_carlo, run_trials, MonteCarloReport, TrialOutcome, TrialSeed};
use crate::error::{domain, Result, SearchError};
use crate::gains::equalized_budget;
use crate::model::{HypothesisPair, StreamClass};
use crate::policy::{build_schedule, SearchConfig};

const SCAN_STREAM: u64 = 1;

/// Scheduled search without refinements: `⌊S⌋` observation rounds over all
/// streams.
pub fn run_nonadaptive(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    trials: u64,
    master_seed: u64,
) -> Result<MonteCarloReport> {
    let cfg = SearchConfig { max_refines: 0, ..cfg.clone() };
    let schedule = build_schedule(&cfg)?;
    monte_carlo(&cfg, pair, &schedule, trials, master_seed)
}

/// Wald SPRT on `ln f0/f1`. `alpha_err` is the target probability of
/// declaring a rare stream normal, `beta_err` of declaring a normal stream
/// rare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprtConfig {
    pub alpha_err: f64,
    pub beta_err: f64,
}

impl SprtConfig {
    pub fn new(alpha_err: f64, beta_err: f64) -> Result<Self> {
        for (name, v) in [("alpha_err", alpha_err), ("beta_err", beta_err)] {
            if !(v > 0.0 && v < 0.5) {
                return domain(format!("{name} must lie in (0, 1/2), got {v}"));
            }
        }
        Ok(SprtConfig { alpha_err, beta_err })
    }

    /// Decide normal once the statistic reaches this level.
    pub fn upper(&self) -> f64 {
        ((1.0 - self.beta_err) / self.alpha_err).ln()
    }

    /// Decide rare once the statistic falls to this level.
    pub fn lower(&self) -> f64 {
        (self.beta_err / (1.0 - self.alpha_err)).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SprtOutcome {
    pub decision: StreamClass,
    pub samples: u64,
    /// The sample cap was hit and the decision was taken by sign.
    pub truncated: bool,
}

/// Runs the SPRT on samples produced by `next_sample` until a boundary is
/// crossed or `max_samples` samples are used.
pub fn run_sprt_per_stream(
    pair: &HypothesisPair,
    sprt: &SprtConfig,
    mut next_sample: impl FnMut() -> f64,
    max_samples: u64,
) -> SprtOutcome {
    let (lo, hi) = (sprt.lower(), sprt.upper());
    let mut llr = 0.0;
    for t in 1..=max_samples {
        llr += pair.log_density_ratio(next_sample());
        if llr <= lo {
            return SprtOutcome { decision: StreamClass::Rare, samples: t, truncated: false };
        }
        if llr >= hi {
            return SprtOutcome { decision: StreamClass::Normal, samples: t, truncated: false };
        }
    }
    let decision = if llr < 0.0 { StreamClass::Rare } else { StreamClass::Normal };
    SprtOutcome { decision, samples: max_samples, truncated: true }
}

/// Empirical error rates of the SPRT on streams of a known class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprtReport {
    pub replicates: u64,
    /// Fraction of rare streams declared normal.
    pub miss_rate: f64,
    /// Fraction of normal streams declared rare.
    pub false_alarm_rate: f64,
    pub mean_samples_rare: f64,
    pub mean_samples_normal: f64,
}

/// Runs `replicates` rare and `replicates` normal streams through the SPRT.
pub fn sprt_error_rates(
    pair: &HypothesisPair,
    sprt: &SprtConfig,
    replicates: u64,
    max_samples: u64,
    master_seed: u64,
) -> Result<SprtReport> {
    if replicates == 0 {
        return domain("at least one replicate is required");
    }
    pair.validate()?;
    let run = |is_rare: bool| -> (u64, u64) {
        let mut rng = TrialSeed::new(master_seed, u64::from(is_rare)).rng(SCAN_STREAM);
        let (mut wrong, mut samples) = (0, 0);
        for _ in 0..replicates {
            let out = run_sprt_per_stream(
                pair,
                sprt,
                || pair.sample_increment(is_rare, rng.sample(StandardNormal)),
                max_samples,
            );
            wrong += u64::from(out.decision != StreamClass::from_rare(is_rare));
            samples += out.samples;
        }
        (wrong, samples)
    };
    let (miss, s_rare) = run(true);
    let (fa, s_normal) = run(false);
    let r = replicates as f64;
    Ok(SprtReport {
        replicates,
        miss_rate: miss as f64 / r,
        false_alarm_rate: fa as f64 / r,
        mean_samples_rare: s_rare as f64 / r,
        mean_samples_normal: s_normal as f64 / r,
    })
}

/// Repeated CUSUM: streams are scanned in index order, each is sampled until
/// its CUSUM statistic reaches `threshold` (declared rare) or a per-stream
/// cap of `⌈4·threshold/KL(f1‖f0)⌉` samples is used (abandoned).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CusumConfig {
    pub threshold: f64,
    pub target_error: f64,
}

impl CusumConfig {
    pub fn new(threshold: f64, target_error: f64) -> Result<Self> {
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return domain(format!("CUSUM threshold must be non-negative, got {threshold}"));
        }
        Ok(CusumConfig { threshold, target_error })
    }

    pub fn stream_cap(&self, pair: &HypothesisPair) -> u64 {
        ((4.0 * self.threshold / pair.kl_rare_normal()).ceil() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CusumOutcome {
    /// Declared streams in declaration order.
    pub identified: Vec<usize>,
    pub total_samples: u64,
    /// Fewer than `t_target` streams were declared before the scan ran out.
    pub partial: bool,
    /// Some declared stream is normal, or the result is partial.
    pub error: bool,
    pub n1: usize,
}

/// Scans a freshly drawn population in index order. `inspect` receives a
/// sampler for the current stream and returns true to declare it rare. The
/// scan stops once `t_target` streams are declared.
fn sequential_scan(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    seed: TrialSeed,
    mut inspect: impl FnMut(&mut dyn FnMut() -> f64) -> bool,
) -> Result<CusumOutcome> {
    cfg.validate()?;
    pair.validate()?;
    let state = generate_population(cfg, seed);
    let labels = state.labels();
    let mut rng = seed.rng(SCAN_STREAM);
    let mut identified = Vec::with_capacity(cfg.t_target);
    let mut total = 0u64;
    for (i, &is_rare) in labels.iter().enumerate() {
        if identified.len() == cfg.t_target {
            break;
        }
        let mut sampler = || {
            total += 1;
            pair.sample_increment(is_rare, rng.sample(StandardNormal))
        };
        if inspect(&mut sampler) {
            identified.push(i);
        }
    }
    let partial = identified.len() < cfg.t_target;
    let error = partial || identified.iter().any(|&i| !labels[i]);
    Ok(CusumOutcome { identified, total_samples: total, partial, error, n1: state.rare_count() })
}

/// One repeated-CUSUM search over a freshly drawn population.
pub fn run_repeated_cusum(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    cusum: &CusumConfig,
    seed: impl Into<TrialSeed>,
) -> Result<CusumOutcome> {
    let cap = cusum.stream_cap(pair);
    sequential_scan(cfg, pair, seed.into(), |next| {
        let mut w = 0.0f64;
        for _ in 0..cap {
            w = (w - pair.log_density_ratio(next())).max(0.0);
            if w >= cusum.threshold {
                return true;
            }
        }
        false
    })
}

/// Sequential scan that runs an SPRT on each stream in turn and stops once
/// `t_target` streams are declared rare.
pub fn run_sprt_scan(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    sprt: &SprtConfig,
    max_samples: u64,
    seed: impl Into<TrialSeed>,
) -> Result<CusumOutcome> {
    sequential_scan(cfg, pair, seed.into(), |next| {
        run_sprt_per_stream(pair, sprt, next, max_samples).decision == StreamClass::Rare
    })
}

pub fn sprt_scan_monte_carlo(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    sprt: &SprtConfig,
    max_samples: u64,
    trials: u64,
    master_seed: u64,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return domain("at least one trial is required");
    }
    let outcomes =
        run_trials(trials, master_seed, |seed| run_sprt_scan(cfg, pair, sprt, max_samples, seed).map(Into::into))?;
    Ok(MonteCarloReport::from_outcomes(&outcomes))
}

impl From<CusumOutcome> for TrialOutcome {
    fn from(c: CusumOutcome) -> Self {
        let mut selected = c.identified;
        selected.sort_unstable();
        TrialOutcome {
            selected,
            error: c.error,
            rare_retained_per_refine: Vec::new(),
            samples_used: c.total_samples,
            n1: c.n1,
            rare_final: c.n1,
        }
    }
}

pub fn repeated_cusum_monte_carlo(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    cusum: &CusumConfig,
    trials: u64,
    master_seed: u64,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return domain("at least one trial is required");
    }
    let outcomes = run_trials(trials, master_seed, |seed| run_repeated_cusum(cfg, pair, cusum, seed).map(Into::into))?;
    Ok(MonteCarloReport::from_outcomes(&outcomes))
}

/// Smallest CUSUM threshold whose pilot error rate is at most
/// `target_error`, by bisection. Every pilot run reuses the same seeds.
pub fn calibrate_cusum(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    target_error: f64,
    trials: u64,
    master_seed: u64,
) -> Result<(CusumConfig, MonteCarloReport)> {
    let eval = |h: f64| -> Result<MonteCarloReport> {
        repeated_cusum_monte_carlo(cfg, pair, &CusumConfig::new(h, target_error)?, trials, master_seed)
    };
    let mut hi = 1.0;
    let mut hi_report = eval(hi)?;
    while hi_report.error_rate > target_error {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(SearchError::Infeasible(format!("no CUSUM threshold reaches error {target_error}")));
        }
        hi_report = eval(hi)?;
    }
    let mut lo = 0.0;
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        let r = eval(mid)?;
        if r.error_rate <= target_error {
            hi = mid;
            hi_report = r;
        } else {
            lo = mid;
        }
    }
    Ok((CusumConfig::new(hi, target_error)?, hi_report))
}

/// Cheapest scheduled search (in budget `S`) whose Monte Carlo error rate is
/// at most `target_error`. Candidate budgets are the smallest `S` giving
/// `s(K) = m` post-refinement rounds. The error is assumed to fall with `m`:
/// `m` is doubled until the target is met, then bisected. Returns `None` when
/// the target is not met below `max_budget`.
pub fn minimal_adaptive_budget(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    target_error: f64,
    trials: u64,
    master_seed: u64,
    max_budget: f64,
) -> Result<Option<(SearchConfig, MonteCarloReport)>> {
    // Ok(None) when the candidate exceeds max_budget
    let eval = |rounds: u64| -> Result<Option<(SearchConfig, MonteCarloReport)>> {
        let s = equalized_budget(cfg.alpha, cfg.max_refines, rounds as f64)?;
        if s > max_budget {
            return Ok(None);
        }
        let trial_cfg = SearchConfig { budget_s: s, ..cfg.clone() };
        let schedule = build_schedule(&trial_cfg)?;
        let report = monte_carlo(&trial_cfg, pair, &schedule, trials, master_seed)?;
        Ok(Some((trial_cfg, report)))
    };
    let feasible = |rounds: u64| match eval(rounds) {
        Err(SearchError::Infeasible(_)) => Ok(Err(())),
        other => other.map(Ok),
    };

    // first round count whose schedule fits
    let mut lo = 0u64;
    let mut hi = 1u64;
    let mut best = loop {
        match feasible(hi)? {
            Err(()) => {
                lo = hi;
                hi += 1;
                if hi > 10_000 {
                    return Ok(None);
                }
            }
            Ok(None) => return Ok(None),
            Ok(Some(r)) => break r,
        }
    };
    while best.1.error_rate > target_error {
        lo = hi;
        hi *= 2;
        match feasible(hi)? {
            Ok(Some(r)) => best = r,
            Ok(None) => return Ok(None),
            Err(()) => return Ok(None),
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match feasible(mid)? {
            Ok(Some(r)) if r.1.error_rate <= target_error => {
                hi = mid;
                best = r;
            }
            _ => lo = mid,
        }
    }
    Ok(Some(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::monte_carlo;

    fn cfg(n: usize, eps: f64, t: usize, s: f64, k: u32, alpha: f64) -> SearchConfig {
        SearchConfig { n, epsilon: eps, t_target: t, budget_s: s, max_refines: k, alpha }
    }

    #[test]
    fn nonadaptive_matches_engine() {
        let c = cfg(2000, 0.01, 2, 3.0, 2, 0.5);
        let pair = HypothesisPair::mean(1.5, 0.0).unwrap();
        let na = run_nonadaptive(&c, &pair, 50, 11).unwrap();
        let c0 = SearchConfig { max_refines: 0, ..c };
        let s0 = build_schedule(&c0).unwrap();
        assert_eq!(s0.tau, 3);
        assert!(s0.psi.iter().all(|&p| !p));
        assert_eq!(na, monte_carlo(&c0, &pair, &s0, 50, 11).unwrap());

        let single = build_schedule(&cfg(2000, 0.01, 2, 1.0, 0, 0.5)).unwrap();
        assert_eq!(single.tau, 1);
    }

    #[test]
    fn sprt_thresholds() {
        let s = SprtConfig::new(0.01, 0.01).unwrap();
        assert!((s.upper() - 99f64.ln()).abs() < 1e-12);
        assert!((s.lower() + 99f64.ln()).abs() < 1e-12);
        assert!(SprtConfig::new(0.5, 0.1).is_err());
    }

    #[test]
    fn sprt_drifting_up_is_normal() {
        let pair = HypothesisPair::mean(1.0, 0.0).unwrap();
        let s = SprtConfig::new(0.01, 0.01).unwrap();
        // samples far above mu0 push ln f0/f1 up
        let out = run_sprt_per_stream(&pair, &s, || 5.0, 1000);
        assert_eq!(out.decision, StreamClass::Normal);
        assert!(!out.truncated);
        let out = run_sprt_per_stream(&pair, &s, || 0.5, 7);
        assert!(out.truncated);
        assert_eq!(out.samples, 7);
    }

    #[test]
    fn sprt_error_rates_respect_wald() {
        let pair = HypothesisPair::mean(1.0, 0.0).unwrap();
        let s = SprtConfig::new(0.01, 0.01).unwrap();
        let r = sprt_error_rates(&pair, &s, 10_000, 10_000, 5).unwrap();
        // Wald's bounds plus a generous binomial margin
        let margin = 3.0 * (0.01f64 * 0.99 / 10_000.0).sqrt();
        assert!(r.miss_rate <= 0.01 / 0.99 + margin, "{r:?}");
        assert!(r.false_alarm_rate <= 0.01 / 0.99 + margin, "{r:?}");
        assert!(r.miss_rate <= 0.02 && r.false_alarm_rate <= 0.02);
    }

    #[test]
    fn cusum_zero_threshold_declares_immediately() {
        let c = cfg(500, 0.1, 5, 1.0, 0, 0.5);
        let pair = HypothesisPair::variance(4.0, 1.0).unwrap();
        let out = run_repeated_cusum(&c, &pair, &CusumConfig::new(0.0, 0.01).unwrap(), 3).unwrap();
        assert_eq!(out.identified, vec![0, 1, 2, 3, 4]);
        assert_eq!(out.total_samples, 5);
    }

    #[test]
    fn cusum_finds_single_strong_rare_stream() {
        let c = cfg(50, 0.0, 1, 1.0, 0, 0.5);
        let pair = HypothesisPair::variance(1e6, 1.0).unwrap();
        // exercise the statistic directly on a rare stream
        let cusum = CusumConfig::new(5.0, 0.01).unwrap();
        let mut rng = TrialSeed::new(1, 0).rng(SCAN_STREAM);
        let mut w = 0.0f64;
        let mut used = 0;
        while w < cusum.threshold {
            let x = pair.sample_increment(true, rng.sample(StandardNormal));
            w = (w - pair.log_density_ratio(x)).max(0.0);
            used += 1;
        }
        assert!(used <= 3, "{used}");
        // with no rare stream the scan is partial
        let out = run_repeated_cusum(&c, &pair, &cusum, 2).unwrap();
        assert!(out.partial && out.error);
    }

    #[test]
    fn cusum_statistic_nonnegative_and_reset_helps() {
        let pair = HypothesisPair::mean(0.0, -1.0).unwrap();
        let mut rng = TrialSeed::new(9, 9).rng(SCAN_STREAM);
        let xs: Vec<f64> = (0..2000).map(|_| pair.sample_increment(true, rng.sample(StandardNormal))).collect();
        let h = 8.0;
        let mut w = 0.0f64;
        let mut plain = 0.0f64;
        let (mut t_reset, mut t_plain) = (None, None);
        for (t, &x) in xs.iter().enumerate() {
            let inc = -pair.log_density_ratio(x);
            w = (w + inc).max(0.0);
            plain += inc;
            assert!(w >= 0.0 && w >= plain);
            if w >= h && t_reset.is_none() {
                t_reset = Some(t);
            }
            if plain >= h && t_plain.is_none() {
                t_plain = Some(t);
            }
        }
        assert!(t_reset.unwrap() <= t_plain.unwrap());
    }

    #[test]
    fn cusum_calibration_hits_target() {
        let c = cfg(300, 0.05, 1, 1.0, 0, 0.5);
        let pair = HypothesisPair::mean(1.0, -1.0).unwrap();
        let (cusum, report) = calibrate_cusum(&c, &pair, 0.05, 200, 4).unwrap();
        assert!(report.error_rate <= 0.05);
        assert!(cusum.threshold > 0.0);
        let worse = repeated_cusum_monte_carlo(&c, &pair, &CusumConfig::new(cusum.threshold * 0.5, 0.05).unwrap(), 200, 4)
            .unwrap();
        assert!(worse.error_rate >= report.error_rate);
    }

    #[test]
    fn minimal_budget_meets_target() {
        let c = cfg(500, 0.1, 1, 1.0, 1, 0.5);
        let pair = HypothesisPair::mean(1.0, 0.0).unwrap();
        let (best, report) = minimal_adaptive_budget(&c, &pair, 0.05, 200, 8, 100.0).unwrap().unwrap();
        assert!(report.error_rate <= 0.05);
        let sched = build_schedule(&best).unwrap();
        assert!(sched.tau >= 2);
        assert!(minimal_adaptive_budget(&c, &pair, 0.0, 50, 8, 3.0).unwrap().is_none());
    }

    #[test]
    fn sprt_scan_stops_at_target() {
        let c = cfg(400, 0.2, 3, 1.0, 0, 0.5);
        let pair = HypothesisPair::mean(2.0, -2.0).unwrap();
        let sprt = SprtConfig::new(0.01, 0.01).unwrap();
        let out = run_sprt_scan(&c, &pair, &sprt, 1000, 6).unwrap();
        assert_eq!(out.identified.len(), 3);
        assert!(!out.partial);
        let r = sprt_scan_monte_carlo(&c, &pair, &sprt, 1000, 100, 6).unwrap();
        assert!(r.error_rate < 0.1);
    }
}
