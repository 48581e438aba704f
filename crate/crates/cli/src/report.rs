//! JSON report layout shared by all subcommands.

use std::path::Path;

use catrisk::intensity::IntensityFit;
use catrisk::riskproc::RuinEstimate;
use catrisk::{
    ClaimDataset, GofResult, IntensityFamily, IntensityModel, SeverityFamily, SeverityModel,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FitMethod};
use crate::error::CliError;

pub const SCHEMA_VERSION: &str = "1.0";
pub const MSE_SCALE: f64 = 1e16;
pub const MAE_SCALE: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub claim_value: String,
    pub time: String,
    pub intensity: String,
    pub premium_rate: String,
    pub mse: String,
    pub mae: String,
    pub mse_scaled: String,
    pub mae_scaled: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            claim_value: "thousands".into(),
            time: "years".into(),
            intensity: "events per year".into(),
            premium_rate: "thousands per year".into(),
            mse: "thousands^2".into(),
            mae: "thousands".into(),
            mse_scaled: "1e16 thousands^2".into(),
            mae_scaled: "1e8 thousands".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub epoch_start: i32,
    /// Years covered by the set.
    pub horizon: f64,
    /// Sum of claim values, in thousands.
    pub total_value: f64,
}

impl DatasetSummary {
    pub fn of(ds: &ClaimDataset) -> Self {
        DatasetSummary {
            records: ds.len(),
            epoch_start: ds.epoch_start,
            horizon: ds.horizon,
            total_value: ds.total_value(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub train: DatasetSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test: Option<DatasetSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub synthetic_batches: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityEntry {
    pub family: SeverityFamily,
    pub method: FitMethod,
    pub model: Option<SeverityModel>,
    /// Secondary samples or batches that were fitted successfully.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitted: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub gof: Vec<GofResult>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub gof_bootstrap: Vec<GofResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityEntry {
    pub family: IntensityFamily,
    pub method: FitMethod,
    pub model: Option<IntensityModel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit: Option<FitDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitted: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed: Option<usize>,
    /// True when λ dips below zero and simulation uses max(λ, 0).
    #[serde(default)]
    pub clamped_in_simulation: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub sse: f64,
    pub gradient_norm: f64,
    pub negative_intensity_on_data: bool,
}

impl From<&IntensityFit> for FitDiagnostics {
    fn from(f: &IntensityFit) -> Self {
        FitDiagnostics {
            iterations: f.iterations,
            sse: f.sse,
            gradient_norm: f.gradient_norm,
            negative_intensity_on_data: f.negative_intensity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCell {
    pub severity: SeverityFamily,
    pub intensity: IntensityFamily,
    pub method: FitMethod,
    pub seed: u64,
    /// Realised claim total over the test window.
    pub realized_s_t: f64,
    pub simulated_mean: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub mse_scaled: Option<f64>,
    pub mae_scaled: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuinCell {
    pub severity: SeverityFamily,
    pub intensity: IntensityFamily,
    pub method: FitMethod,
    pub seed: u64,
    pub initial_reserve: f64,
    pub premium_rate: f64,
    pub horizon: f64,
    pub estimate: Option<RuinEstimate>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyEntry {
    pub severity: SeverityFamily,
    pub intensity: IntensityFamily,
    pub method: FitMethod,
    pub seed: u64,
    pub horizon: f64,
    pub file: Option<String>,
    pub core: Option<(f64, f64)>,
    pub support: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub library_version: String,
    pub generated_at: String,
    pub command: String,
    pub units: Units,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub data: DataSummary,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub severity: Vec<SeverityEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub intensity: Vec<IntensityEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub errors: Vec<ErrorCell>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub ruin: Vec<RuinCell>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub fuzzy: Vec<FuzzyEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str, config: &ExperimentConfig, data: DataSummary) -> Self {
        Report {
            schema_version: SCHEMA_VERSION.into(),
            library_version: catrisk::VERSION.into(),
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            command: command.into(),
            units: Units::default(),
            config: config.clone(),
            seed: config.seed,
            data,
            severity: Vec::new(),
            intensity: Vec::new(),
            errors: Vec::new(),
            ruin: Vec::new(),
            fuzzy: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// Entries that carry an error message.
    pub fn failures(&self) -> usize {
        self.severity.iter().filter(|e| e.error.is_some()).count()
            + self.intensity.iter().filter(|e| e.error.is_some()).count()
            + self.errors.iter().filter(|e| e.error.is_some()).count()
            + self.ruin.iter().filter(|e| e.error.is_some()).count()
            + self.fuzzy.iter().filter(|e| e.error.is_some()).count()
    }

    pub fn entries(&self) -> usize {
        self.severity.len()
            + self.intensity.len()
            + self.errors.len()
            + self.ruin.len()
            + self.fuzzy.len()
    }

    pub fn severity_model(
        &self,
        family: SeverityFamily,
        method: FitMethod,
    ) -> Option<&SeverityEntry> {
        self.severity
            .iter()
            .find(|e| e.family == family && e.method == method)
    }

    pub fn intensity_model(
        &self,
        family: IntensityFamily,
        method: FitMethod,
    ) -> Option<&IntensityEntry> {
        self.intensity
            .iter()
            .find(|e| e.family == family && e.method == method)
    }
}

/// `Weib/PowerLaw`-style label used for `errors.csv` rows.
pub fn pair_label(severity: SeverityFamily, intensity: IntensityFamily) -> String {
    format!("{}/{}", severity.label(), intensity.label())
}

#[cfg(test)]
mod tests {
    use super::*;
    use catrisk::ClaimRecord;

    #[test]
    fn saved_models_reload_bit_for_bit() {
        let cfg = ExperimentConfig::new("claims.csv", "out", 1);
        let data = DataSummary {
            train: DatasetSummary::of(
                &ClaimDataset::new(
                    vec![ClaimRecord {
                        value: 1.0,
                        time: 0.5,
                    }],
                    1990,
                    1.0,
                )
                .unwrap(),
            ),
            test: None,
            synthetic_batches: None,
        };
        let mut report = Report::new("fit", &cfg, data);
        // values whose shortest decimal form defeats a fast float parser
        for rate in [2.1973183233868274e-6, 0.1 + 0.2, 1.0 / 3.0] {
            report.severity.push(SeverityEntry {
                family: SeverityFamily::Exponential,
                method: FitMethod::None,
                model: Some(SeverityModel::exponential(rate).unwrap()),
                fitted: None,
                failed: None,
                seed: None,
                gof: Vec::new(),
                gof_bootstrap: Vec::new(),
                error: None,
            });
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        assert_eq!(Report::load(&path).unwrap(), report);
    }
}
