use std::fmt::Write as _;
use std::path::Path;

use clap::{Args, ValueEnum};
use quicksearch::analysis::{build_region, interior_axis, RegionTemplate, DEFAULT_REGION_RESOLUTION};
use quicksearch::baselines::{
    calibrate_cusum, minimal_adaptive_budget, repeated_cusum_monte_carlo, run_nonadaptive, sprt_scan_monte_carlo,
    CusumConfig, SprtConfig,
};
use quicksearch::engine::monte_carlo_outcomes;
use quicksearch::extremes::ExtremeFamily;
use quicksearch::gains::{agility_gain_bounds, scaling_gain_bounds};
use quicksearch::policy::{epsilon_exponent, epsilon_from_exponent};
use quicksearch::{build_schedule, monte_carlo, MonteCarloReport, SearchConfig, TestFamily, TrialSeed};
use rand::distr::Open01;
use rand::Rng;

use crate::config::{missing, ConfigFile, ProblemArgs};
use crate::output::{emit, fmt_num, Csv};
use crate::CliError;

pub fn schedule(args: &ProblemArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let c = args.resolve()?;
    // the schedule does not depend on the prior, so it is optional here
    let epsilon = if c.epsilon.is_none() && c.eps_exponent.is_none() { 0.0 } else { c.epsilon()? };
    let cfg = c.search_with_epsilon(epsilon)?;
    let s = build_schedule(&cfg)?;

    let mut text = String::new();
    let _ = writeln!(text, "k_star={}", s.k_star);
    let _ = writeln!(text, "nominal_tau={}", s.nominal_tau);
    let _ = writeln!(text, "tau={}", s.tau);
    let _ = writeln!(text, "trimmed={}", s.was_trimmed());
    if cfg.max_refines > 0 && s.k_star == 0 {
        let _ = writeln!(
            text,
            "note: alpha > 1 - 1/S, refining does not pay off; K*=0, so all {} round(s) observe every stream",
            s.tau
        );
    }
    let _ = writeln!(text, "total_samples={}", s.total_samples);
    let _ = writeln!(text, "budget={}", fmt_num(cfg.sample_budget()));
    text.push_str("round,active,refine_after\n");
    for (t, size) in s.active_sizes.iter().enumerate() {
        let refine = s.psi.get(t).copied().unwrap_or(false);
        let _ = writeln!(text, "{},{size},{refine}", t + 1);
    }
    emit(&text, out, "schedule", seed, Some(c))
}

impl ConfigFile {
    fn search_with_epsilon(&self, epsilon: f64) -> Result<SearchConfig, CliError> {
        let mut c = self.clone();
        c.epsilon = Some(epsilon);
        c.eps_exponent = None;
        c.search()
    }

    fn family(&self) -> Result<TestFamily, CliError> {
        self.test.ok_or_else(|| missing("test"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Number of Monte Carlo trials
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
}

pub fn simulate(args: &SimulateArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let c = args.problem.resolve()?;
    let cfg = c.search()?;
    let pair = c.pair()?;
    let schedule = build_schedule(&cfg)?;
    let outcomes = monte_carlo_outcomes(&cfg, &pair, &schedule, args.trials, seed)?;

    let mut csv = Csv::new(&["trial", "error", "samples_used", "n1", "rare_retained_final"]);
    for (i, o) in outcomes.iter().enumerate() {
        csv.row([
            i.to_string(),
            o.error.to_string(),
            o.samples_used.to_string(),
            o.n1.to_string(),
            o.rare_final.to_string(),
        ]);
    }
    emit(&csv.into_string(), out, "simulate", seed, Some(c))
}

#[derive(Debug, Clone, Args)]
pub struct RegionArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Grid points per axis
    #[arg(long, default_value_t = DEFAULT_REGION_RESOLUTION)]
    pub resolution: usize,
    /// Signal exponent range (exclusive); upper default 1 for mean, 2 for variance
    #[arg(long, default_value_t = 0.0)]
    pub signal_min: f64,
    #[arg(long)]
    pub signal_max: Option<f64>,
    /// Prior exponent range (exclusive)
    #[arg(long, default_value_t = 0.0)]
    pub eps_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eps_max: f64,
    /// Overlay Monte Carlo error rates with this many trials per cell (needs n)
    #[arg(long)]
    pub mc_trials: Option<u64>,
}

pub fn region(args: &RegionArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    if args.resolution == 0 {
        return Err(CliError::Usage("--resolution must be at least 1".into()));
    }
    let c = args.problem.resolve()?;
    let family = c.family()?;
    let template = RegionTemplate {
        family,
        budget_s: c.budget_s.ok_or_else(|| missing("budget_s"))?,
        max_refines: c.max_refines.unwrap_or(0),
        alpha: c.alpha.unwrap_or(0.5),
    };
    let signal_max = args.signal_max.unwrap_or(match family {
        TestFamily::Mean => 1.0,
        TestFamily::Variance => 2.0,
    });
    let axis1 = interior_axis(args.signal_min, signal_max, args.resolution);
    let axis2 = interior_axis(args.eps_min, args.eps_max, args.resolution);
    let mut grid = build_region(template, axis1, axis2)?;

    let mut header = vec!["axis1", "axis2", "threshold", "detectable"];
    if let Some(trials) = args.mc_trials {
        if trials == 0 {
            return Err(CliError::Usage("--mc-trials must be at least 1".into()));
        }
        grid.overlay_monte_carlo(c.n()?, c.t_target.unwrap_or(1), trials, seed)?;
        header.push("empirical_error");
    }
    let mut csv = Csv::new(&header);
    for (i, x) in grid.axis1.iter().enumerate() {
        for (j, e) in grid.axis2.iter().enumerate() {
            let mut row = vec![fmt_num(*x), fmt_num(*e), fmt_num(grid.thresholds[j]), grid.cells[i][j].to_string()];
            if let Some(err) = &grid.empirical_error {
                row.push(fmt_num(err[i][j]));
            }
            csv.row(row);
        }
    }
    emit(&csv.into_string(), out, "region", seed, Some(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    GaussianMin,
    Chi2Min,
    Chi2Max,
}

#[derive(Debug, Clone, Args)]
pub struct ExtremesArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// Chi-squared degrees of freedom
    #[arg(long, default_value_t = 2)]
    pub k: u32,
    /// Number of draws per extreme
    #[arg(long, default_value_t = 1000)]
    pub m: u64,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    pub w_min: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub w_max: f64,
    /// Evaluation points, endpoints included
    #[arg(long, default_value_t = 81)]
    pub points: usize,
    /// Simulated extremes behind the empirical cdf
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
}

pub fn extremes(args: &ExtremesArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    if args.points < 2 || !(args.w_max > args.w_min) {
        return Err(CliError::Usage("need --points >= 2 and --w-max > --w-min".into()));
    }
    if args.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let family = match args.family {
        FamilyArg::GaussianMin => ExtremeFamily::GaussianMin,
        FamilyArg::Chi2Min => ExtremeFamily::Chi2Min { k: args.k },
        FamilyArg::Chi2Max => ExtremeFamily::Chi2Max { k: args.k },
    };
    let mut rng = TrialSeed::new(seed, 0).rng(0);
    let mut draws = (0..args.samples)
        .map(|_| family.sample_normalized(args.m, rng.sample(Open01)))
        .collect::<quicksearch::Result<Vec<f64>>>()?;
    draws.sort_by(f64::total_cmp);

    let mut csv = Csv::new(&["m", "w", "exact_cdf", "empirical_cdf", "limit_cdf"]);
    let step = (args.w_max - args.w_min) / (args.points - 1) as f64;
    for i in 0..args.points {
        let w = args.w_min + step * i as f64;
        let empirical = draws.partition_point(|&d| d <= w) as f64 / draws.len() as f64;
        csv.row([
            args.m.to_string(),
            fmt_num(w),
            fmt_num(family.exact_cdf(args.m, w)?),
            fmt_num(empirical),
            fmt_num(family.limit_cdf(w)?),
        ]);
    }
    emit(&csv.into_string(), out, "extremes", seed, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GainKind {
    Agility,
    Scaling,
}

#[derive(Debug, Clone, Args)]
pub struct GainsArgs {
    #[arg(long, value_enum)]
    pub kind: GainKind,
    /// Matched non-adaptive budget (agility) or shared budget (scaling)
    #[arg(long = "S", alias = "budget-s")]
    pub budget_s: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Largest refinement count in the table
    #[arg(long, default_value_t = 10)]
    pub k_max: u32,
}

pub fn gains(args: &GainsArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let mut csv = Csv::new(&["K", "lower", "upper", "asymptotic"]);
    for k in 0..=args.k_max {
        let b = match args.kind {
            GainKind::Agility => agility_gain_bounds(args.budget_s, args.alpha, k)?,
            GainKind::Scaling => scaling_gain_bounds(args.budget_s, args.alpha, k)?,
        };
        csv.row([k.to_string(), fmt_num(b.lower), fmt_num(b.upper), fmt_num(b.asymptotic_k)]);
    }
    emit(&csv.into_string(), out, "gains", seed, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Nonadaptive,
    Adaptive,
    Cusum,
    Sprt,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Nonadaptive => "nonadaptive",
            Method::Adaptive => "adaptive",
            Method::Cusum => "cusum",
            Method::Sprt => "sprt",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Methods to run
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub method: Vec<Method>,
    /// Prior exponents to sweep; defaults to the configured prior
    #[arg(long, value_delimiter = ',')]
    pub eps_exponents: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub trials: u64,
    /// Tune each method to this error rate: the adaptive budget is minimized
    /// and the CUSUM threshold calibrated
    #[arg(long)]
    pub target_error: Option<f64>,
    /// Largest budget S tried when minimizing the adaptive budget
    #[arg(long, default_value_t = 1000.0)]
    pub max_budget: f64,
    /// CUSUM threshold when not calibrating
    #[arg(long)]
    pub cusum_threshold: Option<f64>,
    /// SPRT error targets (rare declared normal, normal declared rare)
    #[arg(long, default_value_t = 0.01)]
    pub sprt_alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sprt_beta: f64,
    /// Per-stream sample cap for the SPRT
    #[arg(long, default_value_t = 10_000)]
    pub sprt_max_samples: u64,
}

pub fn baseline(args: &BaselineArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let c = args.problem.resolve()?;
    let n = c.n()?;
    let pair = c.pair()?;
    let exponents = if args.eps_exponents.is_empty() {
        vec![epsilon_exponent(n, c.epsilon()?)?]
    } else {
        args.eps_exponents.clone()
    };

    let mut csv = Csv::new(&["method", "epsilon_exponent", "mean_budget", "error_rate"]);
    for &x in &exponents {
        let epsilon = epsilon_from_exponent(n, x);
        for &method in &args.method {
            let report: Option<MonteCarloReport> = match method {
                Method::Nonadaptive => Some(run_nonadaptive(&c.search_with_epsilon(epsilon)?, &pair, args.trials, seed)?),
                Method::Adaptive => {
                    let cfg = sequential_cfg(&c, epsilon)?;
                    match args.target_error {
                        Some(target) => {
                            minimal_adaptive_budget(&cfg, &pair, target, args.trials, seed, args.max_budget)?.map(|r| r.1)
                        }
                        None => {
                            let cfg = c.search_with_epsilon(epsilon)?;
                            Some(monte_carlo(&cfg, &pair, &build_schedule(&cfg)?, args.trials, seed)?)
                        }
                    }
                }
                Method::Cusum => {
                    let cfg = sequential_cfg(&c, epsilon)?;
                    match (args.target_error, args.cusum_threshold) {
                        (_, Some(h)) => {
                            let cusum = CusumConfig::new(h, args.target_error.unwrap_or(0.01))?;
                            Some(repeated_cusum_monte_carlo(&cfg, &pair, &cusum, args.trials, seed)?)
                        }
                        (Some(target), None) => Some(calibrate_cusum(&cfg, &pair, target, args.trials, seed)?.1),
                        (None, None) => {
                            return Err(CliError::Usage("cusum needs --cusum-threshold or --target-error".into()))
                        }
                    }
                }
                Method::Sprt => {
                    let cfg = sequential_cfg(&c, epsilon)?;
                    let sprt = SprtConfig::new(args.sprt_alpha, args.sprt_beta)?;
                    Some(sprt_scan_monte_carlo(&cfg, &pair, &sprt, args.sprt_max_samples, args.trials, seed)?)
                }
            };
            // an unmet target is reported as NaN rather than dropped
            let (budget, error) = match report {
                Some(r) => (r.mean_samples / n as f64, r.error_rate),
                None => (f64::NAN, f64::NAN),
            };
            csv.row([method.name().to_string(), fmt_num(x), fmt_num(budget), fmt_num(error)]);
        }
    }
    emit(&csv.into_string(), out, "baseline", seed, Some(c))
}

/// Sequential methods have no fixed budget; `budget_s` only matters to the
/// adaptive search and defaults to 1 when absent.
fn sequential_cfg(c: &ConfigFile, epsilon: f64) -> Result<SearchConfig, CliError> {
    let mut c = c.clone();
    c.budget_s = c.budget_s.or(Some(1.0));
    c.search_with_epsilon(epsilon)
}
