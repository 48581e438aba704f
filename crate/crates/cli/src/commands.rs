//! The subcommands. Each writes its outputs under `out_dir` and returns the
//! report it saved.

use std::fs;
use std::path::{Path, PathBuf};

use catrisk::data_ingest::{parse_claims_csv, preprocess, split_train_test};
use catrisk::fuzzy::build_fuzzy_opinion;
use catrisk::intensity::fit_intensity;
use catrisk::resampling::{aggregate_mle, load_manifest, synth_intensity, synth_severity};
use catrisk::riskproc::{error_metrics, ruin_probability, simulate_claim_process};
use catrisk::rng::SeedKey;
use catrisk::severity::{fit_mle, gof_bootstrap, gof_test};
use catrisk::{
    ClaimDataset, GofTest, IntensityFamily, IntensityModel, ResampleSpec, RiskConfig,
    SeverityFamily, SeverityModel, SyntheticBatch, Window,
};
use chrono::{Datelike, NaiveDate};
use log::info;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, FitMethod};
use crate::error::CliError;
use crate::report::{
    pair_label, DataSummary, DatasetSummary, ErrorCell, FitDiagnostics, FuzzyEntry, IntensityEntry,
    Report, RuinCell, SeverityEntry, MAE_SCALE, MSE_SCALE,
};

pub const REPORT_FILE: &str = "report.json";
pub const ERRORS_FILE: &str = "errors.csv";

const DEFAULT_RUIN_HORIZON: f64 = 5.0;
const DEFAULT_FUZZY_HORIZON: f64 = 1.0;

/// Seed of the named sub-stream `purpose/label` under the master seed.
pub fn stream_seed(master: u64, purpose: &str, label: &str) -> u64 {
    SeedKey::new(master).child(purpose).child(label).value()
}

fn cell_label(sev: SeverityFamily, int: IntensityFamily, method: FitMethod) -> String {
    format!("{}/{}", pair_label(sev, int), method.label())
}

/// Training set, optional test set and optional synthetic batches.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub train: ClaimDataset,
    pub test: Option<ClaimDataset>,
    pub batches: Option<Vec<SyntheticBatch>>,
}

impl Inputs {
    pub fn summary(&self) -> DataSummary {
        DataSummary {
            train: DatasetSummary::of(&self.train),
            test: self.test.as_ref().map(DatasetSummary::of),
            synthetic_batches: self.batches.as_ref().map(Vec::len),
        }
    }
}

fn earliest_year(path: &Path, date_column: &str) -> Result<Option<i32>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let Some(col) = reader.headers()?.iter().position(|h| h == date_column) else {
        return Err(catrisk::Error::MissingColumn(date_column.to_string()).into());
    };
    let mut year: Option<i32> = None;
    for rec in reader.records() {
        let rec = rec?;
        if let Some(d) = rec
            .get(col)
            .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
        {
            year = Some(year.map_or(d.year(), |y| y.min(d.year())));
        }
    }
    Ok(year)
}

pub fn load_inputs(cfg: &ExperimentConfig) -> Result<Inputs, CliError> {
    let epoch = match cfg.epoch {
        Some(e) => e,
        None => earliest_year(&cfg.input, &cfg.date_column)?.ok_or(catrisk::Error::EmptyFile)?,
    };
    let all = parse_claims_csv(&cfg.input, &cfg.value_column, &cfg.date_column, epoch)?;
    let all = preprocess(&all, cfg.trim)?;
    let (train, test) = match (cfg.split_year, &cfg.test_input) {
        (Some(year), _) => {
            let (tr, te) = split_train_test(&all, year)?;
            (tr, Some(te))
        }
        (None, Some(path)) => {
            // the test file starts where the training window ends
            let test_epoch = epoch + all.horizon.round() as i32;
            let te = parse_claims_csv(path, &cfg.value_column, &cfg.date_column, test_epoch)?;
            (all, Some(preprocess(&te, cfg.trim)?))
        }
        (None, None) => (all, None),
    };
    let batches = match &cfg.synth_manifest {
        Some(p) => Some(load_manifest(p, Some(train.horizon))?),
        None => None,
    };
    info!(
        "training set: {} claims over {} years; test set: {:?} claims",
        train.len(),
        train.horizon,
        test.as_ref().map(ClaimDataset::len)
    );
    Ok(Inputs {
        train,
        test,
        batches,
    })
}

fn prepare_out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.out_dir.display())))?;
    Ok(cfg.out_dir.clone())
}

fn fit_severity(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    family: SeverityFamily,
    method: FitMethod,
    with_gof: bool,
) -> SeverityEntry {
    let values = inputs.train.values();
    let mut entry = SeverityEntry {
        family,
        method,
        model: None,
        fitted: None,
        failed: None,
        seed: None,
        gof: Vec::new(),
        gof_bootstrap: Vec::new(),
        error: None,
    };
    let fitted: catrisk::Result<SeverityModel> = match method {
        FitMethod::None => fit_mle(family, &values),
        FitMethod::Bootstrap | FitMethod::Bootknife => {
            let seed = stream_seed(cfg.seed, "fit", family.label());
            entry.seed = Some(seed);
            let rm = method.resample_method().expect("resampling method");
            ResampleSpec::new(rm, cfg.b, seed)
                .and_then(|spec| aggregate_mle(&values, family, &spec))
                .map(|agg| {
                    entry.fitted = Some(agg.fitted);
                    entry.failed = Some(agg.failed);
                    agg.model
                })
        }
        FitMethod::Synth => match &inputs.batches {
            Some(b) => synth_severity(b, family).map(|agg| {
                entry.fitted = Some(agg.fitted);
                entry.failed = Some(agg.failed);
                agg.model
            }),
            None => Err(catrisk::Error::EmptySample),
        },
    };
    match fitted {
        Ok(model) => {
            if with_gof && method == FitMethod::None {
                for test in [GofTest::KolmogorovSmirnov, GofTest::CramerVonMises] {
                    if let Ok(g) = gof_test(&model, &values, test) {
                        entry.gof.push(g);
                    }
                    if cfg.gof_resamples > 0 {
                        let key = SeedKey::new(stream_seed(cfg.seed, "gof", family.label()));
                        if let Ok(g) = gof_bootstrap(
                            family,
                            &values,
                            test,
                            cfg.gof_resamples,
                            key.child(test.label()),
                        ) {
                            entry.gof_bootstrap.push(g);
                        }
                    }
                }
            }
            entry.model = Some(model);
        }
        Err(e) => entry.error = Some(e.to_string()),
    }
    entry
}

fn fit_intensity_entry(
    inputs: &Inputs,
    family: IntensityFamily,
    method: FitMethod,
) -> IntensityEntry {
    let mut entry = IntensityEntry {
        family,
        method,
        model: None,
        fit: None,
        fitted: None,
        failed: None,
        clamped_in_simulation: false,
        error: None,
    };
    let result = match method {
        FitMethod::Synth => match &inputs.batches {
            Some(b) => synth_intensity(b, family).map(|f| {
                entry.fitted = Some(f.fitted);
                entry.failed = Some(f.failed);
                f.model
            }),
            None => Err(catrisk::Error::EmptySample),
        },
        _ => fit_intensity(&inputs.train.times(), family).map(|f| {
            entry.fit = Some(FitDiagnostics::from(&f));
            f.model
        }),
    };
    match result {
        Ok(model) => {
            entry.clamped_in_simulation = model.has_negative_intensity();
            entry.model = Some(model);
        }
        Err(e) => entry.error = Some(e.to_string()),
    }
    entry
}

/// Severity entries for every family × method, and intensity entries for
/// every family × {none, synth}.
fn fit_all(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    methods: &[FitMethod],
    with_gof: bool,
) -> (Vec<SeverityEntry>, Vec<IntensityEntry>) {
    let sev_cells: Vec<(SeverityFamily, FitMethod)> = cfg
        .families
        .iter()
        .flat_map(|&f| methods.iter().map(move |&m| (f, m)))
        .collect();
    let severity = sev_cells
        .par_iter()
        .map(|&(f, m)| fit_severity(cfg, inputs, f, m, with_gof))
        .collect();
    let mut int_methods: Vec<FitMethod> = methods.iter().map(|m| m.intensity_method()).collect();
    int_methods.sort();
    int_methods.dedup();
    let int_cells: Vec<(IntensityFamily, FitMethod)> = cfg
        .intensities
        .iter()
        .flat_map(|&f| int_methods.iter().map(move |&m| (f, m)))
        .collect();
    let intensity = int_cells
        .par_iter()
        .map(|&(f, m)| fit_intensity_entry(inputs, f, m))
        .collect();
    (severity, intensity)
}

/// Fitted models, either freshly estimated or taken from an earlier report.
fn models(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    methods: &[FitMethod],
) -> Result<(Vec<SeverityEntry>, Vec<IntensityEntry>), CliError> {
    let Some(path) = &cfg.fit_report else {
        return Ok(fit_all(cfg, inputs, methods, false));
    };
    let prior = Report::load(path)?;
    let missing = |what: String| format!("{what} not present in {}", path.display());
    let mut severity = Vec::new();
    for &f in &cfg.families {
        for &m in methods {
            severity.push(
                prior
                    .severity_model(f, m)
                    .cloned()
                    .unwrap_or_else(|| SeverityEntry {
                        family: f,
                        method: m,
                        model: None,
                        fitted: None,
                        failed: None,
                        seed: None,
                        gof: Vec::new(),
                        gof_bootstrap: Vec::new(),
                        error: Some(missing(format!("severity {} ({m})", f.label()))),
                    }),
            );
        }
    }
    let mut intensity = Vec::new();
    let mut int_methods: Vec<FitMethod> = methods.iter().map(|m| m.intensity_method()).collect();
    int_methods.sort();
    int_methods.dedup();
    for &f in &cfg.intensities {
        for &m in &int_methods {
            intensity.push(prior.intensity_model(f, m).cloned().unwrap_or_else(|| {
                IntensityEntry {
                    family: f,
                    method: m,
                    model: None,
                    fit: None,
                    fitted: None,
                    failed: None,
                    clamped_in_simulation: false,
                    error: Some(missing(format!("intensity {} ({m})", f.label()))),
                }
            }));
        }
    }
    Ok((severity, intensity))
}

fn clamp_warnings(intensity: &[IntensityEntry]) -> Vec<String> {
    intensity
        .iter()
        .filter(|e| e.clamped_in_simulation)
        .map(|e| {
            format!(
                "{} intensity ({}) is negative on part of each period; simulation uses max(λ, 0)",
                e.family.label(),
                e.method
            )
        })
        .collect()
}

const RUIN_UNITS_NOTE: &str =
    "ruin: initial reserve is read in thousands and premium rate in thousands per year, the claim units of the input";

/// A (severity, intensity, method) combination with both models resolved.
struct Cell {
    sev_family: SeverityFamily,
    int_family: IntensityFamily,
    method: FitMethod,
    models: Result<(SeverityModel, IntensityModel), String>,
}

fn cells(
    cfg: &ExperimentConfig,
    methods: &[FitMethod],
    sev: &[SeverityEntry],
    int: &[IntensityEntry],
) -> Vec<Cell> {
    let mut out = Vec::new();
    for &sf in &cfg.families {
        for &inf in &cfg.intensities {
            for &m in methods {
                let s = sev.iter().find(|e| e.family == sf && e.method == m);
                let i = int
                    .iter()
                    .find(|e| e.family == inf && e.method == m.intensity_method());
                let models = match (s.and_then(|e| e.model), i.and_then(|e| e.model)) {
                    (Some(a), Some(b)) => Ok((a, b)),
                    _ => Err(format!(
                        "no fitted model: severity {}, intensity {}",
                        s.and_then(|e| e.error.clone())
                            .unwrap_or_else(|| "ok".into()),
                        i.and_then(|e| e.error.clone())
                            .unwrap_or_else(|| "ok".into())
                    )),
                };
                out.push(Cell {
                    sev_family: sf,
                    int_family: inf,
                    method: m,
                    models,
                });
            }
        }
    }
    out
}

fn fuzzy_file_name(cell: &Cell) -> String {
    format!(
        "fuzzy_{}_{}_{}.csv",
        cell.sev_family.label(),
        cell.int_family.label(),
        cell.method.label()
    )
}

fn fuzzy_entry(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    cell: &Cell,
    seed: u64,
    horizon: f64,
    values: Result<&[f64], String>,
) -> FuzzyEntry {
    let mut entry = FuzzyEntry {
        severity: cell.sev_family,
        intensity: cell.int_family,
        method: cell.method,
        seed,
        horizon,
        file: None,
        core: None,
        support: None,
        error: None,
    };
    let built = values.and_then(|v| {
        let fnum = build_fuzzy_opinion(v, cfg.alpha_grid).map_err(|e| e.to_string())?;
        let name = fuzzy_file_name(cell);
        fnum.save_csv(out_dir.join(&name))
            .map_err(|e| e.to_string())?;
        Ok((fnum, name))
    });
    match built {
        Ok((fnum, name)) => {
            entry.core = Some(fnum.core());
            entry.support = Some(fnum.support());
            entry.file = Some(name);
        }
        Err(e) => entry.error = Some(e),
    }
    entry
}

fn ruin_cell(cfg: &ExperimentConfig, cell: &Cell, start: f64, horizon: f64) -> RuinCell {
    let seed = stream_seed(
        cfg.seed,
        "ruin",
        &cell_label(cell.sev_family, cell.int_family, cell.method),
    );
    let estimate = cell.models.clone().and_then(|(s, i)| {
        RiskConfig::new(
            cfg.initial_reserve,
            cfg.premium_rate,
            horizon,
            cfg.trajectories,
            seed,
        )
        .and_then(|rc| rc.starting_at(start))
        .and_then(|rc| ruin_probability(&s, &i, &rc))
        .map_err(|e| e.to_string())
    });
    RuinCell {
        severity: cell.sev_family,
        intensity: cell.int_family,
        method: cell.method,
        seed,
        initial_reserve: cfg.initial_reserve,
        premium_rate: cfg.premium_rate,
        horizon,
        error: estimate.as_ref().err().cloned(),
        estimate: estimate.ok(),
    }
}

fn write_errors_csv(
    path: &Path,
    methods: &[FitMethod],
    cfg: &ExperimentConfig,
    cells: &[ErrorCell],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["model".to_string()];
    for m in methods {
        header.push(format!("{}_mse_1e16", m.label()));
        header.push(format!("{}_mae_1e8", m.label()));
    }
    w.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for &sf in &cfg.families {
        for &inf in &cfg.intensities {
            let mut row = vec![pair_label(sf, inf)];
            for &m in methods {
                let c = cells
                    .iter()
                    .find(|c| c.severity == sf && c.intensity == inf && c.method == m);
                row.push(fmt(c.and_then(|c| c.mse_scaled)));
                row.push(fmt(c.and_then(|c| c.mae_scaled)));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn finish(report: Report, out_dir: &Path) -> Result<Report, CliError> {
    report.save(&out_dir.join(REPORT_FILE))?;
    Ok(report)
}

/// Severity parameters per family × method and intensity parameters per
/// family × {none, synth}, with goodness-of-fit tests for the direct fits.
pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let out_dir = prepare_out_dir(cfg)?;
    let methods = cfg.effective_methods();
    let (severity, intensity) = fit_all(cfg, &inputs, &methods, true);
    let mut report = Report::new("fit", cfg, inputs.summary());
    report.warnings = clamp_warnings(&intensity);
    report.severity = severity;
    report.intensity = intensity;
    finish(report, &out_dir)
}

/// Bootstrap / bootknife aggregate MLEs only.
pub fn cmd_resample(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let out_dir = prepare_out_dir(cfg)?;
    let mut methods: Vec<FitMethod> = cfg
        .effective_methods()
        .into_iter()
        .filter(|m| m.resample_method().is_some())
        .collect();
    if methods.is_empty() {
        methods = vec![FitMethod::Bootstrap, FitMethod::Bootknife];
    }
    let cells: Vec<(SeverityFamily, FitMethod)> = cfg
        .families
        .iter()
        .flat_map(|&f| methods.iter().map(move |&m| (f, m)))
        .collect();
    let mut report = Report::new("resample", cfg, inputs.summary());
    report.severity = cells
        .par_iter()
        .map(|&(f, m)| fit_severity(cfg, &inputs, f, m, false))
        .collect();
    finish(report, &out_dir)
}

/// Averaged severity and intensity estimates over the synthetic batches.
pub fn cmd_synth_estimate(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    if cfg.synth_manifest.is_none() {
        return Err(CliError::Usage(
            "synth-estimate needs --synth-manifest".into(),
        ));
    }
    let inputs = load_inputs(cfg)?;
    let out_dir = prepare_out_dir(cfg)?;
    let (severity, intensity) = fit_all(cfg, &inputs, &[FitMethod::Synth], false);
    let mut report = Report::new("synth-estimate", cfg, inputs.summary());
    report.warnings = clamp_warnings(&intensity);
    report.severity = severity;
    report.intensity = intensity;
    finish(report, &out_dir)
}

/// Simulate every (severity, intensity, method) cell over the test window and
/// score it against the realised claim total; also ruin estimates and fuzzy
/// opinions per cell.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let Some(test) = inputs.test.clone() else {
        return Err(CliError::Usage(
            "evaluate needs --test-input or --split-year".into(),
        ));
    };
    let out_dir = prepare_out_dir(cfg)?;
    let methods = cfg.effective_methods();
    let (severity, intensity) = models(cfg, &inputs, &methods)?;

    let start = inputs.train.horizon;
    let length = cfg.horizon.unwrap_or(test.horizon);
    let realized: f64 = test
        .records()
        .iter()
        .filter(|r| r.time <= length)
        .map(|r| r.value)
        .sum();
    let window = Window::new(start, length)?;
    let all = cells(cfg, &methods, &severity, &intensity);

    let results: Vec<(ErrorCell, FuzzyEntry, RuinCell)> = all
        .par_iter()
        .map(|cell| {
            let seed = stream_seed(
                cfg.seed,
                "simulate",
                &cell_label(cell.sev_family, cell.int_family, cell.method),
            );
            let summary = cell.models.as_ref().map(|(s, i)| {
                simulate_claim_process(s, i, window, cfg.trajectories, SeedKey::new(seed))
            });
            let metrics = summary
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|s| error_metrics(realized, s).map_err(|e| e.to_string()));
            let err_cell = ErrorCell {
                severity: cell.sev_family,
                intensity: cell.int_family,
                method: cell.method,
                seed,
                realized_s_t: realized,
                simulated_mean: summary.as_ref().ok().map(|s| s.mean()),
                mse: metrics.as_ref().ok().map(|m| m.mse),
                mae: metrics.as_ref().ok().map(|m| m.mae),
                mse_scaled: metrics.as_ref().ok().map(|m| m.mse / MSE_SCALE),
                mae_scaled: metrics.as_ref().ok().map(|m| m.mae / MAE_SCALE),
                error: metrics.as_ref().err().cloned(),
            };
            let values = summary
                .as_ref()
                .map(|s| s.s_t_values.as_slice())
                .map_err(|e| e.to_string());
            let fz = fuzzy_entry(cfg, &out_dir, cell, seed, length, values);
            let ruin = ruin_cell(cfg, cell, start, length);
            (err_cell, fz, ruin)
        })
        .collect();

    let mut report = Report::new("evaluate", cfg, inputs.summary());
    report.warnings = clamp_warnings(&intensity);
    report.warnings.push(RUIN_UNITS_NOTE.into());
    report.severity = severity;
    report.intensity = intensity;
    for (e, f, r) in results {
        report.errors.push(e);
        report.fuzzy.push(f);
        report.ruin.push(r);
    }
    write_errors_csv(&out_dir.join(ERRORS_FILE), &methods, cfg, &report.errors)?;
    finish(report, &out_dir)
}

/// Ruin probability over `--horizon` years (default 5) following the
/// training window, for every model cell.
pub fn cmd_ruin(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let out_dir = prepare_out_dir(cfg)?;
    let methods = cfg.effective_methods();
    let (severity, intensity) = models(cfg, &inputs, &methods)?;
    let horizon = cfg.horizon.unwrap_or(DEFAULT_RUIN_HORIZON);
    let start = inputs.train.horizon;
    let all = cells(cfg, &methods, &severity, &intensity);
    let ruin: Vec<RuinCell> = all
        .par_iter()
        .map(|c| ruin_cell(cfg, c, start, horizon))
        .collect();
    let mut report = Report::new("ruin", cfg, inputs.summary());
    report.warnings = clamp_warnings(&intensity);
    report.warnings.push(RUIN_UNITS_NOTE.into());
    report.severity = severity;
    report.intensity = intensity;
    report.ruin = ruin;
    finish(report, &out_dir)
}

/// Fuzzy opinion of the claim total over `--horizon` years (default 1)
/// following the training window, for every model cell.
pub fn cmd_fuzzy(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let out_dir = prepare_out_dir(cfg)?;
    let methods = cfg.effective_methods();
    let (severity, intensity) = models(cfg, &inputs, &methods)?;
    let horizon = cfg.horizon.unwrap_or(DEFAULT_FUZZY_HORIZON);
    let window = Window::new(inputs.train.horizon, horizon)?;
    let all = cells(cfg, &methods, &severity, &intensity);
    let fuzzy: Vec<FuzzyEntry> = all
        .par_iter()
        .map(|cell| {
            let seed = stream_seed(
                cfg.seed,
                "fuzzy",
                &cell_label(cell.sev_family, cell.int_family, cell.method),
            );
            let summary = cell.models.as_ref().map(|(s, i)| {
                simulate_claim_process(s, i, window, cfg.trajectories, SeedKey::new(seed))
            });
            let values = summary
                .as_ref()
                .map(|s| s.s_t_values.as_slice())
                .map_err(|e| e.to_string());
            fuzzy_entry(cfg, &out_dir, cell, seed, horizon, values)
        })
        .collect();
    let mut report = Report::new("fuzzy", cfg, inputs.summary());
    report.warnings = clamp_warnings(&intensity);
    report.severity = severity;
    report.intensity = intensity;
    report.fuzzy = fuzzy;
    finish(report, &out_dir)
}
