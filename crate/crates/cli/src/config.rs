//! Problem configuration: a JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use quicksearch::policy::epsilon_from_exponent;
use quicksearch::{HypothesisPair, SearchConfig, TestFamily};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every key is optional; missing values fall back to flags or defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub test: Option<TestFamily>,
    pub n: Option<usize>,
    pub epsilon: Option<f64>,
    pub eps_exponent: Option<f64>,
    pub t_target: Option<usize>,
    pub budget_s: Option<f64>,
    pub max_refines: Option<u32>,
    pub alpha: Option<f64>,
    pub mu0: Option<f64>,
    pub mu1: Option<f64>,
    pub a0: Option<f64>,
    pub a1: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        // serde_json's message already carries the line and column
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Values present in `over` replace those in `self`.
    fn overlay(self, over: ConfigFile) -> ConfigFile {
        ConfigFile {
            test: over.test.or(self.test),
            n: over.n.or(self.n),
            epsilon: over.epsilon.or(self.epsilon),
            eps_exponent: over.eps_exponent.or(self.eps_exponent),
            t_target: over.t_target.or(self.t_target),
            budget_s: over.budget_s.or(self.budget_s),
            max_refines: over.max_refines.or(self.max_refines),
            alpha: over.alpha.or(self.alpha),
            mu0: over.mu0.or(self.mu0),
            mu1: over.mu1.or(self.mu1),
            a0: over.a0.or(self.a0),
            a1: over.a1.or(self.a1),
        }
    }
}

/// Problem flags shared by the simulation commands. Flags win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct ProblemArgs {
    /// JSON config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Test family: mean or variance
    #[arg(long, value_parser = parse_family)]
    pub test: Option<TestFamily>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Prior probability of a rare stream
    #[arg(long, conflicts_with = "eps_exponent")]
    pub epsilon: Option<f64>,
    /// Prior exponent ln(nε)/ln n, used instead of --epsilon
    #[arg(long)]
    pub eps_exponent: Option<f64>,
    /// Number of streams to return
    #[arg(long = "Tn", alias = "t-target")]
    pub t_target: Option<usize>,
    /// Normalized budget (samples per stream)
    #[arg(long = "S", alias = "budget-s")]
    pub budget_s: Option<f64>,
    /// Maximum number of refinements
    #[arg(long = "K", alias = "max-refines")]
    pub max_refines: Option<u32>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long)]
    pub a1: Option<f64>,
}

pub fn parse_family(s: &str) -> Result<TestFamily, String> {
    match s {
        "mean" => Ok(TestFamily::Mean),
        "variance" => Ok(TestFamily::Variance),
        other => Err(format!("unknown test family '{other}' (expected mean or variance)")),
    }
}

impl ProblemArgs {
    /// Merged configuration.
    pub fn resolve(&self) -> Result<ConfigFile, CliError> {
        let base = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            test: self.test,
            n: self.n,
            epsilon: self.epsilon,
            eps_exponent: self.eps_exponent,
            t_target: self.t_target,
            budget_s: self.budget_s,
            max_refines: self.max_refines,
            alpha: self.alpha,
            mu0: self.mu0,
            mu1: self.mu1,
            a0: self.a0,
            a1: self.a1,
        };
        // an exponent on the command line overrides an epsilon from the file and vice versa
        let mut base = base;
        if flags.epsilon.is_some() {
            base.eps_exponent = None;
        }
        if flags.eps_exponent.is_some() {
            base.epsilon = None;
        }
        Ok(base.overlay(flags))
    }
}

pub(crate) fn missing(key: &str) -> CliError {
    CliError::Usage(format!("missing required setting '{key}' (config key or flag)"))
}

impl ConfigFile {
    pub fn n(&self) -> Result<usize, CliError> {
        self.n.ok_or_else(|| missing("n"))
    }

    pub fn epsilon(&self) -> Result<f64, CliError> {
        match (self.epsilon, self.eps_exponent) {
            (Some(_), Some(_)) => Err(CliError::Usage("set only one of epsilon and eps_exponent".into())),
            (Some(e), None) => Ok(e),
            (None, Some(x)) => Ok(epsilon_from_exponent(self.n()?, x)),
            (None, None) => Err(missing("epsilon")),
        }
    }

    /// Search configuration. Defaults: `t_target` 1, `max_refines` 0, `alpha` 0.5.
    pub fn search(&self) -> Result<SearchConfig, CliError> {
        Ok(SearchConfig {
            n: self.n()?,
            epsilon: self.epsilon()?,
            t_target: self.t_target.unwrap_or(1),
            budget_s: self.budget_s.ok_or_else(|| missing("budget_s"))?,
            max_refines: self.max_refines.unwrap_or(0),
            alpha: self.alpha.unwrap_or(0.5),
        })
    }

    /// Hypothesis pair. `mu1` defaults to 0 and `a1` to 1.
    pub fn pair(&self) -> Result<HypothesisPair, CliError> {
        let pair = match self.test.ok_or_else(|| missing("test"))? {
            TestFamily::Mean => HypothesisPair::mean(self.mu0.ok_or_else(|| missing("mu0"))?, self.mu1.unwrap_or(0.0))?,
            TestFamily::Variance => {
                HypothesisPair::variance(self.a0.ok_or_else(|| missing("a0"))?, self.a1.unwrap_or(1.0))?
            }
        };
        Ok(pair)
    }
}
