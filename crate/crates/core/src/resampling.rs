//! Bootstrap and bootknife resampling of claim values, the mean-of-MLEs
//! aggregation over secondary samples, and the estimation loop over externally
//! generated synthetic (value, time) batches.
//!
//! Only claim values are ever resampled; event times are left untouched.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_ingest::ClaimRecord;
use crate::error::{Error, Result};
use crate::intensity::{fit_intensity, IntensityFamily, IntensityModel};
use crate::rng::{SeedKey, StreamRng};
use crate::severity::{fit_mle, SeverityFamily, SeverityModel};

/// Largest tolerated share of failed secondary fits.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResampleMethod {
    Bootstrap,
    Bootknife,
}

impl ResampleMethod {
    pub fn label(self) -> &'static str {
        match self {
            ResampleMethod::Bootstrap => "bootstrap",
            ResampleMethod::Bootknife => "bootknife",
        }
    }
}

impl fmt::Display for ResampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ResampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bootstrap" => Ok(ResampleMethod::Bootstrap),
            "bootknife" => Ok(ResampleMethod::Bootknife),
            other => Err(Error::DomainError(format!(
                "unknown resampling method `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub method: ResampleMethod,
    /// Number of secondary samples.
    pub b: usize,
    pub seed: u64,
}

impl ResampleSpec {
    pub fn new(method: ResampleMethod, b: usize, seed: u64) -> Result<Self> {
        if b == 0 {
            return Err(Error::DomainError(
                "number of secondary samples must be ≥ 1".into(),
            ));
        }
        Ok(ResampleSpec { method, b, seed })
    }

    /// Random stream for the `index`-th secondary sample.
    pub fn stream(&self, index: usize) -> StreamRng {
        SeedKey::new(self.seed)
            .child(self.method.label())
            .stream(index as u64)
    }
}

/// Indices of an ordinary bootstrap resample of size `n`.
pub fn bootstrap_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootknife resample: a uniformly chosen index is deleted, then `n` indices
/// are drawn with replacement from the remaining `n − 1`.
///
/// Returns the deleted index together with the drawn indices.
pub fn bootknife_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, Vec<usize>) {
    let deleted = rng.random_range(0..n);
    let idx = (0..n)
        .map(|_| {
            let k = rng.random_range(0..n - 1);
            if k >= deleted {
                k + 1
            } else {
                k
            }
        })
        .collect();
    (deleted, idx)
}

/// One secondary sample of the same size as `sample`.
pub fn resample_once<R: Rng + ?Sized>(
    sample: &[f64],
    method: ResampleMethod,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = sample.len();
    let idx = match method {
        ResampleMethod::Bootstrap => {
            if n < 1 {
                return Err(Error::SampleTooSmall { needed: 1, got: n });
            }
            bootstrap_indices(n, rng)
        }
        ResampleMethod::Bootknife => {
            if n < 2 {
                return Err(Error::SampleTooSmall { needed: 2, got: n });
            }
            bootknife_indices(n, rng).1
        }
    };
    Ok(idx.into_iter().map(|i| sample[i]).collect())
}

/// Component-wise mean of fitted parameter vectors plus failure bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateFit {
    pub model: SeverityModel,
    pub fitted: usize,
    pub failed: usize,
}

fn mean_params(vectors: &[Vec<f64>]) -> Vec<f64> {
    let p = vectors[0].len();
    let n = vectors.len() as f64;
    (0..p)
        .map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n)
        .collect()
}

fn check_failures<T>(results: Vec<Result<T>>) -> Result<(Vec<T>, usize)> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut first_err = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let failed = total - ok.len();
    if ok.is_empty() {
        return Err(first_err.unwrap_or(Error::EmptySample));
    }
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok((ok, failed))
}

/// Fit `family` to each of `spec.b` secondary samples and average the
/// parameters.
///
/// The input is sorted first, so the result does not depend on the order of
/// the sample.
pub fn aggregate_mle(
    sample: &[f64],
    family: SeverityFamily,
    spec: &ResampleSpec,
) -> Result<AggregateFit> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    // surface input problems once instead of B times
    if let Err(e @ (Error::NonPositiveValue(_) | Error::SampleTooSmall { .. })) =
        fit_mle(family, &sorted)
    {
        return Err(e);
    }
    let results: Vec<Result<Vec<f64>>> = (0..spec.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = spec.stream(b);
            let secondary = resample_once(&sorted, spec.method, &mut rng)?;
            fit_mle(family, &secondary).map(|m| m.params())
        })
        .collect();
    let (params, failed) = check_failures(results)?;
    Ok(AggregateFit {
        model: SeverityModel::from_params(family, &mean_params(&params))?,
        fitted: params.len(),
        failed,
    })
}

/// One externally generated sample of (value, time) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBatch {
    pub pairs: Vec<ClaimRecord>,
    pub source_tag: String,
}

impl SyntheticBatch {
    /// Validates positivity of values and, when given, that times lie in
    /// `[0, horizon]`.
    pub fn new(
        pairs: Vec<ClaimRecord>,
        source_tag: impl Into<String>,
        horizon: Option<f64>,
    ) -> Result<Self> {
        for (row, p) in pairs.iter().enumerate() {
            if !(p.value > 0.0 && p.value.is_finite()) {
                return Err(Error::UnparseableRow {
                    row,
                    reason: format!("synthetic value {} is not positive", p.value),
                });
            }
            let limit = horizon.unwrap_or(f64::INFINITY);
            if !(p.time >= 0.0 && p.time <= limit) {
                return Err(Error::UnparseableRow {
                    row,
                    reason: format!("synthetic time {} outside [0, {limit}]", p.time),
                });
            }
        }
        Ok(SyntheticBatch {
            pairs,
            source_tag: source_tag.into(),
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.pairs.iter().map(|p| p.time).collect();
        t.sort_by(f64::total_cmp);
        t
    }
}

#[derive(Deserialize)]
struct BatchRow {
    value: f64,
    time: f64,
}

/// Read a batch CSV with `value,time` columns.
pub fn load_batch_csv(path: impl AsRef<Path>, horizon: Option<f64>) -> Result<SyntheticBatch> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    for col in ["value", "time"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.into()));
        }
    }
    let mut pairs = Vec::new();
    for (row, rec) in rdr.deserialize::<BatchRow>().enumerate() {
        let rec = rec.map_err(|e| Error::UnparseableRow {
            row,
            reason: e.to_string(),
        })?;
        pairs.push(ClaimRecord {
            value: rec.value,
            time: rec.time,
        });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyFile);
    }
    SyntheticBatch::new(pairs, path.display().to_string(), horizon)
}

/// Paths listed in a manifest, one per line; relative paths resolve against
/// the manifest's directory. Blank lines and `#` comments are skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                dir.join(p)
            }
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(entries)
}

pub fn load_manifest(path: impl AsRef<Path>, horizon: Option<f64>) -> Result<Vec<SyntheticBatch>> {
    read_manifest(path)?
        .into_iter()
        .map(|p| load_batch_csv(p, horizon))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthEstimate {
    pub severity: SeverityModel,
    pub intensity: IntensityModel,
    pub batches: usize,
    pub severity_failures: usize,
    pub intensity_failures: usize,
}

/// Severity MLE on each batch's values, averaged across batches.
pub fn synth_severity(batches: &[SyntheticBatch], family: SeverityFamily) -> Result<AggregateFit> {
    if batches.is_empty() {
        return Err(Error::EmptySample);
    }
    let fits: Vec<Result<Vec<f64>>> = batches
        .par_iter()
        .map(|b| fit_mle(family, &b.values()).map(|m| m.params()))
        .collect();
    let (params, failed) = check_failures(fits)?;
    Ok(AggregateFit {
        model: SeverityModel::from_params(family, &mean_params(&params))?,
        fitted: params.len(),
        failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthIntensityFit {
    pub model: IntensityModel,
    pub fitted: usize,
    pub failed: usize,
}

/// Least-squares intensity fit on each batch's times, averaged across batches.
/// Sinusoidal fits are averaged in canonical form.
pub fn synth_intensity(
    batches: &[SyntheticBatch],
    family: IntensityFamily,
) -> Result<SynthIntensityFit> {
    if batches.is_empty() {
        return Err(Error::EmptySample);
    }
    let fits: Vec<Result<Vec<f64>>> = batches
        .par_iter()
        .map(|b| fit_intensity(&b.times(), family).map(|f| f.model.params()))
        .collect();
    let (params, failed) = check_failures(fits)?;
    Ok(SynthIntensityFit {
        model: IntensityModel::from_params(family, &mean_params(&params))?,
        fitted: params.len(),
        failed,
    })
}

/// Fit severity and intensity to every batch and average each parameter vector
/// across batches.
pub fn synth_estimate(
    batches: &[SyntheticBatch],
    family: SeverityFamily,
    intensity_family: IntensityFamily,
) -> Result<SynthEstimate> {
    let sev = synth_severity(batches, family)?;
    let int = synth_intensity(batches, intensity_family)?;
    Ok(SynthEstimate {
        severity: sev.model,
        intensity: int.model,
        batches: batches.len(),
        severity_failures: sev.failed,
        intensity_failures: int.failed,
    })
}
