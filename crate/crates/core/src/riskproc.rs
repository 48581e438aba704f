//! Aggregate claim process `S_t`, risk reserve `R_t = u + p·t − S_t`, error
//! metrics against a realised value, and finite-horizon ruin probability.
//!
//! Each trajectory draws from its own stream keyed by (seed, trajectory index),
//! so results are identical for any thread count.

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::{simulate_window, IntensityModel};
use crate::rng::SeedKey;
use crate::severity::SeverityModel;

/// Trajectory count used when none is configured.
pub const DEFAULT_TRAJECTORIES: usize = 1000;

/// Simulation interval `[start, start + length]` on the intensity's time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub length: f64,
}

impl Window {
    pub fn new(start: f64, length: f64) -> Result<Self> {
        if !(start >= 0.0 && start.is_finite() && length > 0.0 && length.is_finite()) {
            return Err(Error::DomainError(format!(
                "invalid simulation window start={start} length={length}"
            )));
        }
        Ok(Window { start, length })
    }

    pub fn horizon(length: f64) -> Result<Self> {
        Self::new(0.0, length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// Initial reserve `u`.
    pub initial_reserve: f64,
    /// Premium income `p` per year.
    pub premium_rate: f64,
    /// Horizon `T` in years.
    pub horizon: f64,
    /// Start of the horizon on the intensity's time axis.
    #[serde(default)]
    pub start: f64,
    pub trajectories: usize,
    pub seed: u64,
}

impl RiskConfig {
    pub fn new(
        initial_reserve: f64,
        premium_rate: f64,
        horizon: f64,
        trajectories: usize,
        seed: u64,
    ) -> Result<Self> {
        let cfg = RiskConfig {
            initial_reserve,
            premium_rate,
            horizon,
            start: 0.0,
            trajectories,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn starting_at(mut self, start: f64) -> Result<Self> {
        self.start = start;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_reserve >= 0.0 && self.initial_reserve.is_finite()) {
            return Err(Error::DomainError(format!(
                "initial reserve {} must be ≥ 0",
                self.initial_reserve
            )));
        }
        if !(self.premium_rate >= 0.0 && self.premium_rate.is_finite()) {
            return Err(Error::DomainError(format!(
                "premium rate {} must be ≥ 0",
                self.premium_rate
            )));
        }
        if self.trajectories == 0 {
            return Err(Error::DomainError("need at least one trajectory".into()));
        }
        Window::new(self.start, self.horizon).map(|_| ())
    }

    pub fn window(&self) -> Window {
        Window {
            start: self.start,
            length: self.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    /// Simulated `S_T` per trajectory, in trajectory order.
    pub s_t_values: Vec<f64>,
    /// Trajectories whose reserve went negative; `None` when not tracked.
    pub ruin_indicator_count: Option<usize>,
}

impl TrajectorySummary {
    pub fn mean(&self) -> f64 {
        self.s_t_values.iter().sum::<f64>() / self.s_t_values.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.s_t_values.len() as f64;
        self.s_t_values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }
}

fn warn_if_clamped(intensity: &IntensityModel) {
    if intensity.has_negative_intensity() {
        debug!(
            "intensity {:?} is negative on part of each period; simulating with max(λ, 0)",
            intensity
        );
    }
}

/// Outcome of one trajectory.
struct Path {
    s_t: f64,
    ruined: bool,
}

fn run_path(
    severity: &SeverityModel,
    intensity: &IntensityModel,
    window: Window,
    key: SeedKey,
    index: u64,
    reserve: Option<(f64, f64)>,
    stop_at_ruin: bool,
) -> Path {
    let mut rng = key.stream(index);
    let times = simulate_window(intensity, window.start, window.length, &mut rng);
    let mut s = 0.0;
    let mut ruined = false;
    for t in times {
        s += severity.draw(&mut rng);
        if let Some((u, p)) = reserve {
            // the reserve only decreases at claim instants
            if !ruined && u + p * (t - window.start) - s < 0.0 {
                ruined = true;
                if stop_at_ruin {
                    break;
                }
            }
        }
    }
    Path { s_t: s, ruined }
}

/// Simulate `n` trajectories of `S_T` over `window`.
pub fn simulate_claim_process(
    severity: &SeverityModel,
    intensity: &IntensityModel,
    window: Window,
    n: usize,
    seed: impl Into<SeedKey>,
) -> TrajectorySummary {
    simulate_with_reserve(severity, intensity, window, n, seed, None)
}

/// As [`simulate_claim_process`], additionally counting ruined trajectories
/// for reserve `(u, p)` when given.
pub fn simulate_with_reserve(
    severity: &SeverityModel,
    intensity: &IntensityModel,
    window: Window,
    n: usize,
    seed: impl Into<SeedKey>,
    reserve: Option<(f64, f64)>,
) -> TrajectorySummary {
    warn_if_clamped(intensity);
    let key = seed.into();
    let paths: Vec<Path> = (0..n as u64)
        .into_par_iter()
        .map(|i| run_path(severity, intensity, window, key, i, reserve, false))
        .collect();
    TrajectorySummary {
        ruin_indicator_count: reserve.map(|_| paths.iter().filter(|p| p.ruined).count()),
        s_t_values: paths.into_iter().map(|p| p.s_t).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub mae: f64,
}

/// Mean squared and mean absolute deviation of simulated `S_T` from the
/// realised value.
pub fn error_metrics(true_s_t: f64, summary: &TrajectorySummary) -> Result<ErrorMetrics> {
    let v = &summary.s_t_values;
    if v.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = v.len() as f64;
    let mse = v.iter().map(|s| (true_s_t - s).powi(2)).sum::<f64>() / n;
    let mae = v.iter().map(|s| (true_s_t - s).abs()).sum::<f64>() / n;
    Ok(ErrorMetrics { mse, mae })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuinEstimate {
    pub probability: f64,
    /// Binomial Monte Carlo standard error `sqrt(p̂(1 − p̂)/n)`.
    pub std_error: f64,
    pub ruined: usize,
    pub trajectories: usize,
}

/// Share of trajectories whose reserve drops below zero within the horizon.
pub fn ruin_probability(
    severity: &SeverityModel,
    intensity: &IntensityModel,
    cfg: &RiskConfig,
) -> Result<RuinEstimate> {
    cfg.validate()?;
    warn_if_clamped(intensity);
    let key = SeedKey::new(cfg.seed);
    let window = cfg.window();
    let reserve = Some((cfg.initial_reserve, cfg.premium_rate));
    let ruined = (0..cfg.trajectories as u64)
        .into_par_iter()
        .filter(|&i| run_path(severity, intensity, window, key, i, reserve, true).ruined)
        .count();
    let n = cfg.trajectories as f64;
    let p = ruined as f64 / n;
    Ok(RuinEstimate {
        probability: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        ruined,
        trajectories: cfg.trajectories,
    })
}
