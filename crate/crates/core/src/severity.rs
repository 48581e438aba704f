//! Claim-severity distributions: Exponential, LogNormal, Gamma and Weibull.
//!
//! Parameterisations:
//! - `Exponential { rate }`: mean `1/rate`
//! - `LogNormal { mu, sigma2 }`: `ln X ~ N(mu, sigma2)`, `sigma2` is a variance
//! - `Gamma { shape, rate }`: mean `shape/rate`
//! - `Weibull { shape, scale }`: `F(x) = 1 − exp(−(x/scale)^shape)`

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedKey;
use crate::special::{
    cvm_cdf, digamma, gamma_lr, kolmogorov_cdf, ln_gamma, normal_cdf, normal_quantile, trigamma,
};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeverityFamily {
    Exponential,
    LogNormal,
    Gamma,
    Weibull,
}

impl SeverityFamily {
    pub const ALL: [SeverityFamily; 4] = [
        SeverityFamily::Exponential,
        SeverityFamily::LogNormal,
        SeverityFamily::Gamma,
        SeverityFamily::Weibull,
    ];

    /// Short label used in reports and file names.
    pub fn label(self) -> &'static str {
        match self {
            SeverityFamily::Exponential => "Exp",
            SeverityFamily::LogNormal => "LN",
            SeverityFamily::Gamma => "Gamma",
            SeverityFamily::Weibull => "Weib",
        }
    }

    pub fn param_names(self) -> [&'static str; 2] {
        match self {
            SeverityFamily::Exponential => ["rate", ""],
            SeverityFamily::LogNormal => ["mu", "sigma2"],
            SeverityFamily::Gamma => ["shape", "rate"],
            SeverityFamily::Weibull => ["shape", "scale"],
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            SeverityFamily::Exponential => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for SeverityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SeverityFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp" | "exponential" => Ok(SeverityFamily::Exponential),
            "ln" | "lognormal" | "log-normal" => Ok(SeverityFamily::LogNormal),
            "gamma" => Ok(SeverityFamily::Gamma),
            "weib" | "weibull" => Ok(SeverityFamily::Weibull),
            other => Err(Error::DomainError(format!(
                "unknown severity family `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    Pdf,
    Cdf,
    Quantile,
}

/// A fitted claim-value distribution.
///
/// Serialises as `{"family": "...", "params": {...}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", try_from = "RawSeverity")]
pub enum SeverityModel {
    Exponential { rate: f64 },
    LogNormal { mu: f64, sigma2: f64 },
    Gamma { shape: f64, rate: f64 },
    Weibull { shape: f64, scale: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "family", content = "params")]
enum RawSeverity {
    Exponential { rate: f64 },
    LogNormal { mu: f64, sigma2: f64 },
    Gamma { shape: f64, rate: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl TryFrom<RawSeverity> for SeverityModel {
    type Error = Error;

    fn try_from(raw: RawSeverity) -> Result<Self> {
        let m = match raw {
            RawSeverity::Exponential { rate } => SeverityModel::Exponential { rate },
            RawSeverity::LogNormal { mu, sigma2 } => SeverityModel::LogNormal { mu, sigma2 },
            RawSeverity::Gamma { shape, rate } => SeverityModel::Gamma { shape, rate },
            RawSeverity::Weibull { shape, scale } => SeverityModel::Weibull { shape, scale },
        };
        m.validate()?;
        Ok(m)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl SeverityModel {
    pub fn exponential(rate: f64) -> Result<Self> {
        let m = SeverityModel::Exponential { rate };
        m.validate().map(|_| m)
    }

    pub fn lognormal(mu: f64, sigma2: f64) -> Result<Self> {
        let m = SeverityModel::LogNormal { mu, sigma2 };
        m.validate().map(|_| m)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let m = SeverityModel::Gamma { shape, rate };
        m.validate().map(|_| m)
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        let m = SeverityModel::Weibull { shape, scale };
        m.validate().map(|_| m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SeverityModel::Exponential { rate } => positive("rate", rate),
            SeverityModel::LogNormal { mu, sigma2 } => {
                if !mu.is_finite() {
                    return Err(Error::InvalidModel(format!("mu must be finite, got {mu}")));
                }
                positive("sigma2", sigma2)
            }
            SeverityModel::Gamma { shape, rate } => {
                positive("shape", shape)?;
                positive("rate", rate)
            }
            SeverityModel::Weibull { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)
            }
        }
    }

    pub fn family(&self) -> SeverityFamily {
        match self {
            SeverityModel::Exponential { .. } => SeverityFamily::Exponential,
            SeverityModel::LogNormal { .. } => SeverityFamily::LogNormal,
            SeverityModel::Gamma { .. } => SeverityFamily::Gamma,
            SeverityModel::Weibull { .. } => SeverityFamily::Weibull,
        }
    }

    /// Parameters in declaration order.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            SeverityModel::Exponential { rate } => vec![rate],
            SeverityModel::LogNormal { mu, sigma2 } => vec![mu, sigma2],
            SeverityModel::Gamma { shape, rate } => vec![shape, rate],
            SeverityModel::Weibull { shape, scale } => vec![shape, scale],
        }
    }

    pub fn from_params(family: SeverityFamily, p: &[f64]) -> Result<Self> {
        if p.len() != family.n_params() {
            return Err(Error::InvalidModel(format!(
                "{family} takes {} parameters, got {}",
                family.n_params(),
                p.len()
            )));
        }
        match family {
            SeverityFamily::Exponential => Self::exponential(p[0]),
            SeverityFamily::LogNormal => Self::lognormal(p[0], p[1]),
            SeverityFamily::Gamma => Self::gamma(p[0], p[1]),
            SeverityFamily::Weibull => Self::weibull(p[0], p[1]),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            SeverityModel::Exponential { rate } => rate * (-rate * x).exp(),
            SeverityModel::LogNormal { mu, sigma2 } => {
                if x == 0.0 {
                    return 0.0;
                }
                let z = x.ln() - mu;
                (-z * z / (2.0 * sigma2)).exp() / (x * (2.0 * PI * sigma2).sqrt())
            }
            SeverityModel::Gamma { shape, rate } => {
                if x == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => rate,
                        _ => 0.0,
                    };
                }
                (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp()
            }
            SeverityModel::Weibull { shape, scale } => {
                if x == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => 1.0 / scale,
                        _ => 0.0,
                    };
                }
                let y = x / scale;
                shape / scale * y.powf(shape - 1.0) * (-y.powf(shape)).exp()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            SeverityModel::Exponential { rate } => -(-rate * x).exp_m1(),
            SeverityModel::LogNormal { mu, sigma2 } => normal_cdf((x.ln() - mu) / sigma2.sqrt()),
            SeverityModel::Gamma { shape, rate } => gamma_lr(shape, rate * x),
            SeverityModel::Weibull { shape, scale } => -(-(x / scale).powf(shape)).exp_m1(),
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::DomainError(format!(
                "quantile order {u} outside (0, 1)"
            )));
        }
        Ok(match *self {
            SeverityModel::Exponential { rate } => -(-u).ln_1p() / rate,
            SeverityModel::LogNormal { mu, sigma2 } => {
                (mu + sigma2.sqrt() * normal_quantile(u)).exp()
            }
            SeverityModel::Gamma { shape, rate } => gamma_standard_quantile(shape, u) / rate,
            SeverityModel::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
        })
    }

    pub fn evaluate(&self, kind: EvalKind, x: f64) -> Result<f64> {
        match kind {
            EvalKind::Pdf => Ok(self.pdf(x)),
            EvalKind::Cdf => Ok(self.cdf(x)),
            EvalKind::Quantile => self.quantile(x),
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    /// E[Xᵏ].
    pub fn raw_moment(&self, k: i32) -> f64 {
        let kf = f64::from(k);
        match *self {
            SeverityModel::Exponential { rate } => {
                (1..=k).map(f64::from).product::<f64>() / rate.powi(k)
            }
            SeverityModel::LogNormal { mu, sigma2 } => (kf * mu + 0.5 * kf * kf * sigma2).exp(),
            SeverityModel::Gamma { shape, rate } => {
                (0..k).map(|i| shape + f64::from(i)).product::<f64>() / rate.powi(k)
            }
            SeverityModel::Weibull { shape, scale } => {
                scale.powi(k) * (ln_gamma(1.0 + kf / shape)).exp()
            }
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            SeverityModel::Exponential { rate } => rate.ln() - rate * x,
            SeverityModel::LogNormal { mu, sigma2 } => {
                let z = x.ln() - mu;
                -z * z / (2.0 * sigma2) - x.ln() - 0.5 * (2.0 * PI * sigma2).ln()
            }
            SeverityModel::Gamma { shape, rate } => {
                shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
            }
            SeverityModel::Weibull { shape, scale } => {
                let y = x / scale;
                (shape / scale).ln() + (shape - 1.0) * y.ln() - y.powf(shape)
            }
        }
    }

    pub fn log_likelihood(&self, sample: &[f64]) -> f64 {
        sample.iter().map(|&x| self.ln_pdf(x)).sum()
    }

    /// One draw; always strictly positive.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match *self {
                SeverityModel::Exponential { rate } => {
                    rand_distr::Exp::new(rate).unwrap().sample(rng)
                }
                SeverityModel::LogNormal { mu, sigma2 } => {
                    rand_distr::LogNormal::new(mu, sigma2.sqrt())
                        .unwrap()
                        .sample(rng)
                }
                SeverityModel::Gamma { shape, rate } => rand_distr::Gamma::new(shape, 1.0 / rate)
                    .unwrap()
                    .sample(rng),
                SeverityModel::Weibull { shape, scale } => {
                    rand_distr::Weibull::new(scale, shape).unwrap().sample(rng)
                }
            };
            if x > 0.0 && x.is_finite() {
                return x;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// Gradient of the mean log-likelihood with respect to the log-parameters
    /// (`μ` itself for the LogNormal location). Scale-free, so it can be compared
    /// against an absolute tolerance regardless of the monetary unit.
    pub fn score(&self, sample: &[f64]) -> Vec<f64> {
        let n = sample.len() as f64;
        let mean = |f: &dyn Fn(f64) -> f64| sample.iter().map(|&x| f(x)).sum::<f64>() / n;
        match *self {
            SeverityModel::Exponential { rate } => vec![1.0 - rate * mean(&|x| x)],
            SeverityModel::LogNormal { mu, sigma2 } => {
                let m1 = mean(&|x| x.ln() - mu);
                let m2 = mean(&|x| (x.ln() - mu).powi(2));
                vec![m1 / sigma2, -0.5 + m2 / (2.0 * sigma2)]
            }
            SeverityModel::Gamma { shape, rate } => {
                let ml = mean(&|x| x.ln());
                let mx = mean(&|x| x);
                vec![shape * (rate.ln() - digamma(shape) + ml), shape - rate * mx]
            }
            SeverityModel::Weibull { shape, scale } => {
                let ml = mean(&|x| (x / scale).ln());
                let myk = mean(&|x| (x / scale).powf(shape));
                let mykl = mean(&|x| {
                    let y = x / scale;
                    y.powf(shape) * y.ln()
                });
                vec![1.0 + shape * (ml - mykl), shape * (myk - 1.0)]
            }
        }
    }
}

/// Quantile of Gamma(shape, rate = 1) by safeguarded Newton on the regularised
/// incomplete gamma function.
fn gamma_standard_quantile(shape: f64, u: f64) -> f64 {
    let ln_g = ln_gamma(shape);
    let pdf = |z: f64| ((shape - 1.0) * z.ln() - z - ln_g).exp();

    // Wilson–Hilferty start, small-z series start when that goes negative
    let zq = normal_quantile(u);
    let c = 1.0 / (9.0 * shape);
    let mut z = shape * (1.0 - c + zq * c.sqrt()).powi(3);
    if !(z > 0.0) || shape < 1.0 {
        let small = (u * (ln_gamma(shape + 1.0)).exp()).powf(1.0 / shape);
        if !(z > 0.0) || small < z {
            z = small;
        }
    }
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..400 {
        let f = gamma_lr(shape, z) - u;
        if f == 0.0 {
            return z;
        }
        if f < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let d = pdf(z);
        let mut next = if d > 0.0 && d.is_finite() {
            z - f / d
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * z.max(1e-300)
            };
        }
        if (next - z).abs() <= 1e-15 * z.max(1e-300) {
            return next;
        }
        z = next;
    }
    z
}

fn validate_sample(sample: &[f64]) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::SampleTooSmall {
            needed: 2,
            got: sample.len(),
        });
    }
    if let Some(&bad) = sample.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::NonPositiveValue(bad));
    }
    Ok(())
}

/// Maximum-likelihood fit of `family` to a positive sample.
pub fn fit_mle(family: SeverityFamily, sample: &[f64]) -> Result<SeverityModel> {
    validate_sample(sample)?;
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    match family {
        SeverityFamily::Exponential => SeverityModel::exponential(1.0 / mean),
        SeverityFamily::LogNormal => {
            let mu = sample.iter().map(|x| x.ln()).sum::<f64>() / n;
            let s2 = sample.iter().map(|x| (x.ln() - mu).powi(2)).sum::<f64>() / n;
            if !(s2 > 0.0) {
                return Err(Error::DegenerateSample("log-variance is zero".into()));
            }
            SeverityModel::lognormal(mu, s2)
        }
        SeverityFamily::Gamma => fit_gamma(sample, mean),
        SeverityFamily::Weibull => fit_weibull(sample),
    }
}

fn fit_gamma(sample: &[f64], mean: f64) -> Result<SeverityModel> {
    let n = sample.len() as f64;
    let mean_ln = sample.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_ln;
    if !(s > 1e-14) {
        return Err(Error::DegenerateSample("all values equal".into()));
    }
    // Minka's closed-form start
    let mut a = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let f = a.ln() - digamma(a) - s;
        let df = 1.0 / a - trigamma(a);
        let mut next = a - f / df;
        if !(next > 0.0) {
            next = a / 2.0;
        }
        let step = (next - a).abs();
        a = next;
        if step <= NEWTON_TOL * a {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: NEWTON_MAX_ITER,
            residual: a.ln() - digamma(a) - s,
            gradient_norm: f64::NAN,
        });
    }
    SeverityModel::gamma(a, a / mean)
}

fn fit_weibull(sample: &[f64]) -> Result<SeverityModel> {
    let n = sample.len() as f64;
    // centre on the geometric mean so x^k stays representable
    let ln_g = sample.iter().map(|x| x.ln()).sum::<f64>() / n;
    let logs: Vec<f64> = sample.iter().map(|x| x.ln() - ln_g).collect();
    if logs.iter().all(|l| l.abs() < 1e-14) {
        return Err(Error::DegenerateSample("all values equal".into()));
    }
    let max_log = logs.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l));

    // profile score g(k) = Σ yᵏ ln y / Σ yᵏ − 1/k, strictly increasing in k
    let eval = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &logs {
            // scale by exp(-k·max_log) to avoid overflow for large k
            let w = (k * (l - max_log)).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        let m1 = s1 / s0;
        let g = m1 - 1.0 / k;
        let dg = s2 / s0 - m1 * m1 + 1.0 / (k * k);
        (g, dg, s0)
    };

    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut k = 1.0;
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let (g, dg, _) = eval(k);
        if g < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let mut next = k - g / dg;
        if !(next > lo && next < hi) {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * k
            };
        }
        let step = (next - k).abs();
        k = next;
        if step <= NEWTON_TOL * k {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: NEWTON_MAX_ITER,
            residual: eval(k).0,
            gradient_norm: f64::NAN,
        });
    }
    let (_, _, s0) = eval(k);
    // mean yᵏ = (s0/n)·exp(k·max_log)
    let ln_mean_yk = (s0 / n).ln() + k * max_log;
    let scale = (ln_g + ln_mean_yk / k).exp();
    SeverityModel::weibull(k, scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GofTest {
    #[serde(rename = "KS")]
    KolmogorovSmirnov,
    #[serde(rename = "CvM")]
    CramerVonMises,
}

impl GofTest {
    pub fn label(self) -> &'static str {
        match self {
            GofTest::KolmogorovSmirnov => "KS",
            GofTest::CramerVonMises => "CvM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub test: GofTest,
    pub statistic: f64,
    pub p_value: f64,
}

fn gof_statistic(model: &SeverityModel, sorted: &[f64], test: GofTest) -> f64 {
    let n = sorted.len() as f64;
    match test {
        GofTest::KolmogorovSmirnov => sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = model.cdf(x);
                let i = i as f64;
                ((i + 1.0) / n - f).abs().max((f - i / n).abs())
            })
            .fold(0.0, f64::max),
        GofTest::CramerVonMises => {
            1.0 / (12.0 * n)
                + sorted
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (model.cdf(x) - (2.0 * i as f64 + 1.0) / (2.0 * n)).powi(2))
                    .sum::<f64>()
        }
    }
}

fn sorted_copy(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Goodness-of-fit test with the asymptotic null distribution, treating the
/// model parameters as known.
pub fn gof_test(model: &SeverityModel, sample: &[f64], test: GofTest) -> Result<GofResult> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let sorted = sorted_copy(sample);
    let statistic = gof_statistic(model, &sorted, test);
    let n = sorted.len() as f64;
    let p_value = match test {
        GofTest::KolmogorovSmirnov => 1.0 - kolmogorov_cdf(n.sqrt() * statistic),
        GofTest::CramerVonMises => 1.0 - cvm_cdf(statistic),
    }
    .clamp(0.0, 1.0);
    Ok(GofResult {
        test,
        statistic,
        p_value,
    })
}

/// Parametric-bootstrap p-value: fit `family`, then compare the observed
/// statistic with those of `resamples` samples drawn from the fit and refitted.
pub fn gof_bootstrap(
    family: SeverityFamily,
    sample: &[f64],
    test: GofTest,
    resamples: usize,
    seed: SeedKey,
) -> Result<GofResult> {
    let fitted = fit_mle(family, sample)?;
    let observed = gof_statistic(&fitted, &sorted_copy(sample), test);
    let n = sample.len();
    let exceed = (0..resamples as u64)
        .into_par_iter()
        .filter(|&b| {
            let mut rng = seed.stream(b);
            let sim = fitted.sample(n, &mut rng);
            match fit_mle(family, &sim) {
                Ok(refit) => gof_statistic(&refit, &sorted_copy(&sim), test) >= observed,
                Err(_) => true,
            }
        })
        .count();
    Ok(GofResult {
        test,
        statistic: observed,
        p_value: (1 + exceed) as f64 / (resamples + 1) as f64,
    })
}
