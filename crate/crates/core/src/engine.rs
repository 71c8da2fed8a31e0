//! Trial simulation: population draw, scheduled observe/refine rounds,
//! detection, and Monte Carlo aggregation.
//!
//! Randomness is keyed, never global. A trial is identified by a
//! [`TrialSeed`] `(master, trial)`; stream 0 of the trial's ChaCha generator
//! labels the population and stream `t` supplies the round-`t` samples,
//! drawn for the active streams in ascending index order. Reports are
//! therefore bit-identical for any thread count.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SearchError};
use crate::model::{HypothesisPair, SufficientStat};
use crate::policy::{retained_count, SearchConfig, Schedule};
use crate::stats::{wilson_interval, Z95};

const LABEL_STREAM: u64 = 0;

/// Key of one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialSeed {
    pub master: u64,
    pub trial: u64,
}

impl TrialSeed {
    pub fn new(master: u64, trial: u64) -> Self {
        TrialSeed { master, trial }
    }

    /// Generator for one keyed stream of this trial.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&self.trial.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        rng
    }
}

impl From<u64> for TrialSeed {
    fn from(seed: u64) -> Self {
        TrialSeed::new(seed, 0)
    }
}

/// Ranking key: statistic, then stream index.
fn key_cmp(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Mutable state of a single search.
#[derive(Debug, Clone)]
pub struct SearchState {
    seed: TrialSeed,
    labels: Vec<bool>,
    stats: Vec<SufficientStat>,
    active: Vec<usize>,
    round: u32,
    samples_used: u64,
    rare_retained: Vec<usize>,
}

/// Draws the hidden labels and returns a fresh state with every stream active.
pub fn generate_population(cfg: &SearchConfig, seed: impl Into<TrialSeed>) -> SearchState {
    let seed = seed.into();
    let mut rng = seed.rng(LABEL_STREAM);
    let labels = (0..cfg.n).map(|_| rng.random::<f64>() < cfg.epsilon).collect();
    SearchState::from_labels(labels, seed)
}

impl SearchState {
    /// State over an explicit labelling (true = rare).
    pub fn from_labels(labels: Vec<bool>, seed: impl Into<TrialSeed>) -> Self {
        let n = labels.len();
        SearchState {
            seed: seed.into(),
            labels,
            stats: vec![SufficientStat::default(); n],
            active: (0..n).collect(),
            round: 0,
            samples_used: 0,
            rare_retained: Vec::new(),
        }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn stats(&self) -> &[SufficientStat] {
        &self.stats
    }

    /// Hidden labels. Only evaluation code reads these.
    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn samples_used(&self) -> u64 {
        self.samples_used
    }

    pub fn rare_count(&self) -> usize {
        self.labels.iter().filter(|&&r| r).count()
    }

    pub fn active_rare_count(&self) -> usize {
        self.active.iter().filter(|&&i| self.labels[i]).count()
    }

    /// Rare streams left active after each refinement so far.
    pub fn rare_retained_per_refine(&self) -> &[usize] {
        &self.rare_retained
    }

    /// Takes one fresh sample from every active stream.
    pub fn observe_round(&mut self, pair: &HypothesisPair) {
        let mut rng = self.seed.rng(u64::from(self.round) + 1);
        for &i in &self.active {
            let z: f64 = rng.sample(StandardNormal);
            let x = pair.sample_increment(self.labels[i], z);
            pair.accumulate(&mut self.stats[i], x);
        }
        self.samples_used += self.active.len() as u64;
        self.round += 1;
    }

    /// Observation round with caller-supplied raw samples, one per active
    /// stream in active order.
    pub fn observe_samples(&mut self, pair: &HypothesisPair, samples: &[f64]) -> Result<()> {
        if samples.len() != self.active.len() {
            return domain(format!("{} samples for {} active streams", samples.len(), self.active.len()));
        }
        for (&i, &x) in self.active.iter().zip(samples) {
            pair.accumulate(&mut self.stats[i], x);
        }
        self.samples_used += self.active.len() as u64;
        self.round += 1;
        Ok(())
    }

    fn key(&self, i: usize) -> (f64, usize) {
        (self.stats[i].value, i)
    }

    /// Keeps the `⌊α(ℓ - T)⌋ + T` active streams with the smallest statistic.
    /// Discarded streams never come back.
    pub fn refine_round(&mut self, t_target: usize, alpha: f64) -> Result<()> {
        let keep = retained_count(self.active.len(), t_target, alpha)
            .map_err(|e| SearchError::Internal(format!("refinement below target: {e}")))?;
        if keep < self.active.len() {
            let stats = &self.stats;
            self.active
                .select_nth_unstable_by(keep - 1, |&a, &b| key_cmp((stats[a].value, a), (stats[b].value, b)));
            self.active.truncate(keep);
            self.active.sort_unstable();
        }
        let rare = self.active_rare_count();
        self.rare_retained.push(rare);
        Ok(())
    }

    /// Returns the `T` active streams with the smallest statistic and scores
    /// the selection against the hidden labels.
    ///
    /// The error flag is computed twice, once as "some selected stream is
    /// normal" and once as the order-statistic event `U_T > Ū_1` (the `T`-th
    /// smallest rare key exceeds the smallest normal key); the two must agree.
    pub fn detect(&self, t_target: usize) -> Result<TrialOutcome> {
        if t_target == 0 || self.active.len() < t_target {
            return domain(format!("cannot select {t_target} of {} active streams", self.active.len()));
        }
        let mut order = self.active.clone();
        if t_target < order.len() {
            order.select_nth_unstable_by(t_target - 1, |&a, &b| key_cmp(self.key(a), self.key(b)));
            order.truncate(t_target);
        }
        order.sort_unstable();
        let by_membership = order.iter().any(|&i| !self.labels[i]);

        let mut rare_keys: Vec<(f64, usize)> =
            self.active.iter().filter(|&&i| self.labels[i]).map(|&i| self.key(i)).collect();
        let normal_min = self
            .active
            .iter()
            .filter(|&&i| !self.labels[i])
            .map(|&i| self.key(i))
            .min_by(|&a, &b| key_cmp(a, b));
        let by_order = if rare_keys.len() < t_target {
            true
        } else {
            rare_keys.sort_unstable_by(|&a, &b| key_cmp(a, b));
            match normal_min {
                Some(nm) => key_cmp(rare_keys[t_target - 1], nm) == Ordering::Greater,
                None => false,
            }
        };
        if by_membership != by_order {
            return Err(SearchError::Internal(
                "set-membership and order-statistic error tests disagree".into(),
            ));
        }

        Ok(TrialOutcome {
            selected: order,
            error: by_membership,
            rare_retained_per_refine: self.rare_retained.clone(),
            samples_used: self.samples_used,
            n1: self.rare_count(),
            rare_final: self.active_rare_count(),
        })
    }
}

/// Result of one simulated search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Returned stream indices, ascending.
    pub selected: Vec<usize>,
    /// True iff `selected` contains at least one normal stream.
    pub error: bool,
    pub rare_retained_per_refine: Vec<usize>,
    pub samples_used: u64,
    /// Rare streams in the population.
    pub n1: usize,
    /// Rare streams still active at detection time.
    pub rare_final: usize,
}

impl TrialOutcome {
    /// Fraction of rare streams that survived every refinement, if any
    /// existed.
    pub fn retention(&self) -> Option<f64> {
        (self.n1 > 0).then(|| self.rare_final as f64 / self.n1 as f64)
    }
}

/// Runs the schedule once: observe every round, refine where `psi` says so,
/// then detect.
pub fn run_trial(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    schedule: &Schedule,
    seed: impl Into<TrialSeed>,
) -> Result<TrialOutcome> {
    if schedule.active_sizes.first() != Some(&cfg.n) || schedule.psi.len() + 1 != schedule.tau {
        return domain("schedule was not built for this configuration");
    }
    let mut state = generate_population(cfg, seed);
    for t in 1..=schedule.tau {
        if state.active.len() != schedule.active_sizes[t - 1] {
            return Err(SearchError::Internal(format!(
                "round {t}: {} active streams, schedule expects {}",
                state.active.len(),
                schedule.active_sizes[t - 1]
            )));
        }
        state.observe_round(pair);
        if t < schedule.tau && schedule.psi[t - 1] {
            state.refine_round(cfg.t_target, cfg.alpha)?;
        }
    }
    if !cfg.within_budget(state.samples_used) {
        return Err(SearchError::Internal(format!(
            "trial used {} samples, budget is {}",
            state.samples_used,
            cfg.sample_budget()
        )));
    }
    state.detect(cfg.t_target)
}

/// Aggregate of many trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub trials: u64,
    pub errors: u64,
    pub error_rate: f64,
    pub wilson_ci95: (f64, f64),
    pub mean_samples: f64,
    /// Mean over trials with at least one rare stream of the fraction of rare
    /// streams still active at detection; 1 when no trial had a rare stream.
    pub mean_rare_retention: f64,
}

impl MonteCarloReport {
    /// Aggregates outcomes in the order given.
    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let trials = outcomes.len() as u64;
        let errors = outcomes.iter().filter(|o| o.error).count() as u64;
        let samples: u64 = outcomes.iter().map(|o| o.samples_used).sum();
        let retention: Vec<f64> = outcomes.iter().filter_map(TrialOutcome::retention).collect();
        let mean_rare_retention = if retention.is_empty() {
            1.0
        } else {
            retention.iter().sum::<f64>() / retention.len() as f64
        };
        MonteCarloReport {
            trials,
            errors,
            error_rate: if trials == 0 { 0.0 } else { errors as f64 / trials as f64 },
            wilson_ci95: wilson_interval(errors, trials, Z95),
            mean_samples: if trials == 0 { 0.0 } else { samples as f64 / trials as f64 },
            mean_rare_retention,
        }
    }
}

/// Runs `trials` keyed trials of an arbitrary trial function in parallel and
/// returns the outcomes in trial order.
pub fn run_trials<F>(trials: u64, master_seed: u64, trial: F) -> Result<Vec<TrialOutcome>>
where
    F: Fn(TrialSeed) -> Result<TrialOutcome> + Sync,
{
    (0..trials).into_par_iter().map(|i| trial(TrialSeed::new(master_seed, i))).collect()
}

/// Per-trial outcomes of the scheduled search.
pub fn monte_carlo_outcomes(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    schedule: &Schedule,
    trials: u64,
    master_seed: u64,
) -> Result<Vec<TrialOutcome>> {
    if trials == 0 {
        return domain("at least one trial is required");
    }
    cfg.validate()?;
    pair.validate()?;
    run_trials(trials, master_seed, |seed| run_trial(cfg, pair, schedule, seed))
}

/// Monte Carlo estimate of the detection error probability.
pub fn monte_carlo(
    cfg: &SearchConfig,
    pair: &HypothesisPair,
    schedule: &Schedule,
    trials: u64,
    master_seed: u64,
) -> Result<MonteCarloReport> {
    let outcomes = monte_carlo_outcomes(cfg, pair, schedule, trials, master_seed)?;
    Ok(MonteCarloReport::from_outcomes(&outcomes))
}
