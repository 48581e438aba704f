//! Command-line flags and the experiment configuration they describe.

use std::fmt;
use std::path::PathBuf;

use catrisk::{IntensityFamily, ResampleMethod, SeverityFamily};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "catrisk",
    version,
    about = "Catastrophic-claim model fitting, simulation and scoring"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit severity and intensity models for every requested method.
    Fit(ExperimentConfig),
    /// Score every model pair and method against the test set.
    Evaluate(ExperimentConfig),
    /// Bootstrap or bootknife aggregate MLEs only.
    Resample(ExperimentConfig),
    /// Finite-horizon ruin probability for every model pair.
    Ruin(ExperimentConfig),
    /// Fuzzy opinion of the claim-process value for every model pair.
    Fuzzy(ExperimentConfig),
    /// Severity and intensity estimates from synthetic batches.
    SynthEstimate(ExperimentConfig),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Evaluate(_) => "evaluate",
            Command::Resample(_) => "resample",
            Command::Ruin(_) => "ruin",
            Command::Fuzzy(_) => "fuzzy",
            Command::SynthEstimate(_) => "synth-estimate",
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        match self {
            Command::Fit(c)
            | Command::Evaluate(c)
            | Command::Resample(c)
            | Command::Ruin(c)
            | Command::Fuzzy(c)
            | Command::SynthEstimate(c) => c,
        }
    }
}

/// How a severity (and, for synthetic batches, intensity) model is estimated.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    None,
    Bootstrap,
    Bootknife,
    Synth,
}

impl FitMethod {
    pub fn label(self) -> &'static str {
        match self {
            FitMethod::None => "none",
            FitMethod::Bootstrap => "bootstrap",
            FitMethod::Bootknife => "bootknife",
            FitMethod::Synth => "synth",
        }
    }

    pub fn resample_method(self) -> Option<ResampleMethod> {
        match self {
            FitMethod::Bootstrap => Some(ResampleMethod::Bootstrap),
            FitMethod::Bootknife => Some(ResampleMethod::Bootknife),
            _ => None,
        }
    }

    /// Intensities are never resampled: bootstrap and bootknife share the
    /// direct fit.
    pub fn intensity_method(self) -> FitMethod {
        match self {
            FitMethod::Synth => FitMethod::Synth,
            _ => FitMethod::None,
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Claims CSV (training data, or the full dataset with --split-year).
    #[arg(long)]
    pub input: PathBuf,

    /// Separate test-set CSV.
    #[arg(long, conflicts_with = "split_year")]
    pub test_input: Option<PathBuf>,

    /// First calendar year of the test set.
    #[arg(long)]
    pub split_year: Option<i32>,

    #[arg(long, default_value = "value")]
    pub value_column: String,

    #[arg(long, default_value = "date")]
    pub date_column: String,

    /// Calendar year anchoring time zero; defaults to the earliest year in --input.
    #[arg(long)]
    pub epoch: Option<i32>,

    /// Fraction of the largest claims removed before fitting.
    #[arg(long, default_value_t = 0.05)]
    pub trim: f64,

    #[arg(long, value_delimiter = ',', default_values_t = SeverityFamily::ALL)]
    pub families: Vec<SeverityFamily>,

    #[arg(long, value_delimiter = ',', default_values_t = IntensityFamily::ALL)]
    pub intensities: Vec<IntensityFamily>,

    /// Estimation methods; defaults to none,bootstrap,bootknife plus synth
    /// when a synthetic manifest is given.
    #[arg(long = "method", value_delimiter = ',', value_enum)]
    pub methods: Vec<FitMethod>,

    /// Secondary samples per bootstrap or bootknife aggregate.
    #[arg(long = "B", default_value_t = 500)]
    pub b: usize,

    /// File listing synthetic batch CSVs, one path per line.
    #[arg(long)]
    pub synth_manifest: Option<PathBuf>,

    /// Reuse the models of an earlier `fit` report instead of refitting.
    #[arg(long)]
    pub fit_report: Option<PathBuf>,

    #[arg(long, default_value_t = catrisk::riskproc::DEFAULT_TRAJECTORIES)]
    pub trajectories: usize,

    /// Simulation horizon in years. Defaults: test-set length for evaluate,
    /// 5 for ruin, 1 for fuzzy.
    #[arg(long)]
    pub horizon: Option<f64>,

    /// Initial reserve, in thousands.
    #[arg(long = "u", default_value_t = 1.0e6)]
    pub initial_reserve: f64,

    /// Premium income, in thousands per year.
    #[arg(long, default_value_t = 0.3)]
    pub premium_rate: f64,

    #[arg(long)]
    pub seed: u64,

    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,

    /// Number of α levels in the fuzzy-opinion grid.
    #[arg(long, default_value_t = catrisk::fuzzy::DEFAULT_GRID_SIZE)]
    pub alpha_grid: usize,

    /// Parametric-bootstrap resamples for goodness-of-fit p-values (0 = off).
    #[arg(long, default_value_t = 0)]
    pub gof_resamples: usize,
}

impl ExperimentConfig {
    /// Configuration with defaults for everything except the paths and seed.
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        ExperimentConfig {
            input: input.into(),
            test_input: None,
            split_year: None,
            value_column: "value".into(),
            date_column: "date".into(),
            epoch: None,
            trim: 0.05,
            families: SeverityFamily::ALL.to_vec(),
            intensities: IntensityFamily::ALL.to_vec(),
            methods: Vec::new(),
            b: 500,
            synth_manifest: None,
            fit_report: None,
            trajectories: catrisk::riskproc::DEFAULT_TRAJECTORIES,
            horizon: None,
            initial_reserve: 1.0e6,
            premium_rate: 0.3,
            seed,
            out_dir: out_dir.into(),
            alpha_grid: catrisk::fuzzy::DEFAULT_GRID_SIZE,
            gof_resamples: 0,
        }
    }

    /// Requested methods with the default filled in, deduplicated and in
    /// declaration order.
    pub fn effective_methods(&self) -> Vec<FitMethod> {
        let mut m = if self.methods.is_empty() {
            let mut d = vec![FitMethod::None, FitMethod::Bootstrap, FitMethod::Bootknife];
            if self.synth_manifest.is_some() {
                d.push(FitMethod::Synth);
            }
            d
        } else {
            self.methods.clone()
        };
        m.sort();
        m.dedup();
        m
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let must_exist = |p: &PathBuf| {
            if p.is_file() {
                Ok(())
            } else {
                Err(CliError::Io(format!(
                    "input file {} does not exist",
                    p.display()
                )))
            }
        };
        must_exist(&self.input)?;
        if let Some(p) = &self.test_input {
            must_exist(p)?;
        }
        if let Some(p) = &self.synth_manifest {
            must_exist(p)?;
        }
        if let Some(p) = &self.fit_report {
            must_exist(p)?;
        }
        if !(0.0..1.0).contains(&self.trim) {
            return Err(CliError::Usage(format!(
                "--trim must lie in [0, 1), got {}",
                self.trim
            )));
        }
        if self.families.is_empty() || self.intensities.is_empty() {
            return Err(CliError::Usage(
                "--families and --intensities must not be empty".into(),
            ));
        }
        if self.b == 0 {
            return Err(CliError::Usage("--B must be at least 1".into()));
        }
        if self.trajectories == 0 {
            return Err(CliError::Usage("--trajectories must be at least 1".into()));
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(CliError::Usage(format!(
                    "--horizon must be positive, got {h}"
                )));
            }
        }
        if !(self.initial_reserve.is_finite() && self.initial_reserve >= 0.0) {
            return Err(CliError::Usage(
                "--u must be finite and non-negative".into(),
            ));
        }
        if !(self.premium_rate.is_finite() && self.premium_rate >= 0.0) {
            return Err(CliError::Usage(
                "--premium-rate must be finite and non-negative".into(),
            ));
        }
        if self.alpha_grid < 2 {
            return Err(CliError::Usage(
                "--alpha-grid needs at least 2 levels".into(),
            ));
        }
        if self.effective_methods().contains(&FitMethod::Synth) && self.synth_manifest.is_none() {
            return Err(CliError::Usage(
                "method `synth` needs --synth-manifest".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_methods_depend_on_the_manifest() {
        let mut cfg = ExperimentConfig::new("a.csv", "out", 1);
        assert_eq!(
            cfg.effective_methods(),
            [FitMethod::None, FitMethod::Bootstrap, FitMethod::Bootknife]
        );
        cfg.synth_manifest = Some("m.txt".into());
        assert_eq!(cfg.effective_methods().last(), Some(&FitMethod::Synth));
        cfg.methods = vec![FitMethod::Bootknife, FitMethod::None, FitMethod::Bootknife];
        assert_eq!(
            cfg.effective_methods(),
            [FitMethod::None, FitMethod::Bootknife]
        );
    }

    #[test]
    fn flags_parse_into_the_config() {
        let cli = Cli::try_parse_from([
            "catrisk",
            "ruin",
            "--input",
            "x.csv",
            "--seed",
            "7",
            "--families",
            "Weib,Exp",
            "--method",
            "bootknife",
            "--B",
            "40",
            "--u",
            "250",
        ])
        .unwrap();
        assert_eq!(cli.command.name(), "ruin");
        let cfg = cli.command.config();
        assert_eq!(
            cfg.families,
            [SeverityFamily::Weibull, SeverityFamily::Exponential]
        );
        assert_eq!(cfg.methods, [FitMethod::Bootknife]);
        assert_eq!((cfg.b, cfg.initial_reserve, cfg.seed), (40, 250.0, 7));
        assert_eq!(cfg.intensities, IntensityFamily::ALL);
        assert!(Cli::try_parse_from([
            "catrisk",
            "fit",
            "--input",
            "x",
            "--seed",
            "1",
            "--split-year",
            "2000",
            "--test-input",
            "y"
        ])
        .is_err());
    }

    #[test]
    fn intensities_are_never_resampled() {
        assert_eq!(FitMethod::Bootstrap.intensity_method(), FitMethod::None);
        assert_eq!(FitMethod::Synth.intensity_method(), FitMethod::Synth);
        assert_eq!(FitMethod::None.resample_method(), None);
    }
}
