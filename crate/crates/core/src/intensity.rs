//! Non-homogeneous Poisson intensities.
//!
//! Two families:
//! - sinusoidal: `λ(t) = base + amplitude·2π·sin(2π(t − phase))`,
//!   `Λ(t) = base·t + amplitude·(cos(2π·phase) − cos(2π(t − phase)))`
//! - power law: `λ(t) = scale·exponent·t^(exponent − 1)`, `Λ(t) = scale·t^exponent`
//!
//! A sinusoidal intensity may dip below zero. It remains a valid least-squares
//! target, but simulation then uses the clamped cumulative intensity
//! `Λ̃(t) = ∫₀ᵗ max(λ(s), 0) ds`, which is evaluated in closed form piecewise.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntensityFamily {
    Sinusoidal,
    PowerLaw,
}

impl IntensityFamily {
    pub const ALL: [IntensityFamily; 2] = [IntensityFamily::Sinusoidal, IntensityFamily::PowerLaw];

    pub fn label(self) -> &'static str {
        match self {
            IntensityFamily::Sinusoidal => "Sinusoidal",
            IntensityFamily::PowerLaw => "PowerLaw",
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            IntensityFamily::Sinusoidal => 3,
            IntensityFamily::PowerLaw => 2,
        }
    }
}

impl fmt::Display for IntensityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for IntensityFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "sin" | "sinusoidal" => Ok(IntensityFamily::Sinusoidal),
            "power" | "powerlaw" | "pl" => Ok(IntensityFamily::PowerLaw),
            other => Err(Error::DomainError(format!(
                "unknown intensity family `{other}`"
            ))),
        }
    }
}

/// Fitted NHPP intensity. Serialises as `{"family": "...", "params": {...}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", try_from = "RawIntensity")]
pub enum IntensityModel {
    Sinusoidal {
        base: f64,
        amplitude: f64,
        phase: f64,
    },
    PowerLaw {
        scale: f64,
        exponent: f64,
    },
}

#[derive(Deserialize)]
#[serde(tag = "family", content = "params")]
enum RawIntensity {
    Sinusoidal {
        base: f64,
        amplitude: f64,
        phase: f64,
    },
    PowerLaw {
        scale: f64,
        exponent: f64,
    },
}

impl TryFrom<RawIntensity> for IntensityModel {
    type Error = Error;

    fn try_from(raw: RawIntensity) -> Result<Self> {
        match raw {
            RawIntensity::Sinusoidal {
                base,
                amplitude,
                phase,
            } => IntensityModel::sinusoidal(base, amplitude, phase),
            RawIntensity::PowerLaw { scale, exponent } => {
                IntensityModel::power_law(scale, exponent)
            }
        }
    }
}

/// Where the sinusoidal intensity is positive within one period.
#[derive(Debug, Clone, Copy)]
enum PositivePart {
    Everywhere,
    Nowhere,
    /// Positive on `[start + k, start + k + len]` for every integer `k`.
    Periodic {
        start: f64,
        len: f64,
    },
}

impl IntensityModel {
    pub fn sinusoidal(base: f64, amplitude: f64, phase: f64) -> Result<Self> {
        if ![base, amplitude, phase].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidModel(
                "sinusoidal parameters must be finite".into(),
            ));
        }
        Ok(IntensityModel::Sinusoidal {
            base,
            amplitude,
            phase,
        })
    }

    pub fn power_law(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0 && exponent.is_finite() && exponent > 0.0) {
            return Err(Error::InvalidModel(format!(
                "power law needs positive scale and exponent, got ({scale}, {exponent})"
            )));
        }
        Ok(IntensityModel::PowerLaw { scale, exponent })
    }

    /// Homogeneous Poisson intensity, expressed as a unit-exponent power law.
    pub fn homogeneous(rate: f64) -> Result<Self> {
        Self::power_law(rate, 1.0)
    }

    pub fn from_params(family: IntensityFamily, p: &[f64]) -> Result<Self> {
        if p.len() != family.n_params() {
            return Err(Error::InvalidModel(format!(
                "{family} takes {} parameters, got {}",
                family.n_params(),
                p.len()
            )));
        }
        match family {
            IntensityFamily::Sinusoidal => Self::sinusoidal(p[0], p[1], p[2]),
            IntensityFamily::PowerLaw => Self::power_law(p[0], p[1]),
        }
    }

    pub fn family(&self) -> IntensityFamily {
        match self {
            IntensityModel::Sinusoidal { .. } => IntensityFamily::Sinusoidal,
            IntensityModel::PowerLaw { .. } => IntensityFamily::PowerLaw,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            IntensityModel::Sinusoidal {
                base,
                amplitude,
                phase,
            } => vec![base, amplitude, phase],
            IntensityModel::PowerLaw { scale, exponent } => vec![scale, exponent],
        }
    }

    /// Sinusoidal models have two equivalent symmetries: `phase ± 1` and
    /// `(−amplitude, phase + ½)`. The canonical form has `amplitude ≥ 0` and
    /// `phase ∈ [0.5, 1.5)`.
    pub fn canonical(&self) -> Self {
        match *self {
            IntensityModel::Sinusoidal {
                base,
                mut amplitude,
                mut phase,
            } => {
                if amplitude < 0.0 {
                    amplitude = -amplitude;
                    phase += 0.5;
                }
                phase = (phase - 0.5).rem_euclid(1.0) + 0.5;
                IntensityModel::Sinusoidal {
                    base,
                    amplitude,
                    phase,
                }
            }
            pl => pl,
        }
    }

    /// λ(t).
    pub fn intensity_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::DomainError(format!("time {t} is negative")));
        }
        Ok(match *self {
            IntensityModel::Sinusoidal {
                base,
                amplitude,
                phase,
            } => base + amplitude * TAU * (TAU * (t - phase)).sin(),
            IntensityModel::PowerLaw { scale, exponent } => {
                if t == 0.0 {
                    if exponent < 1.0 {
                        return Err(Error::SingularPoint(0.0));
                    }
                    if exponent > 1.0 {
                        return Ok(0.0);
                    }
                    return Ok(scale);
                }
                scale * exponent * t.powf(exponent - 1.0)
            }
        })
    }

    fn raw_rate(&self, t: f64) -> f64 {
        match *self {
            IntensityModel::Sinusoidal {
                base,
                amplitude,
                phase,
            } => base + amplitude * TAU * (TAU * (t - phase)).sin(),
            IntensityModel::PowerLaw { scale, exponent } => {
                if t <= 0.0 {
                    if exponent < 1.0 {
                        f64::INFINITY
                    } else if exponent > 1.0 {
                        0.0
                    } else {
                        scale
                    }
                } else {
                    scale * exponent * t.powf(exponent - 1.0)
                }
            }
        }
    }

    /// Closed-form Λ, valid for any real t for the sinusoidal family.
    fn raw_cumulative(&self, t: f64) -> f64 {
        match *self {
            IntensityModel::Sinusoidal {
                base,
                amplitude,
                phase,
            } => base * t + amplitude * ((TAU * phase).cos() - (TAU * (t - phase)).cos()),
            IntensityModel::PowerLaw { scale, exponent } => scale * t.max(0.0).powf(exponent),
        }
    }

    /// Λ(t) = ∫₀ᵗ λ(s) ds for t ≥ 0 (zero for t ≤ 0).
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.raw_cumulative(t)
    }

    /// Smallest value of λ over [0, ∞).
    pub fn min_intensity(&self) -> f64 {
        match *self {
            IntensityModel::Sinusoidal {
                base, amplitude, ..
            } => base - TAU * amplitude.abs(),
            IntensityModel::PowerLaw { .. } => 0.0,
        }
    }

    /// True when λ(t) < 0 somewhere, in which case simulation clamps it at zero.
    pub fn has_negative_intensity(&self) -> bool {
        self.min_intensity() < 0.0
    }

    fn positive_part(&self) -> PositivePart {
        match *self {
            IntensityModel::PowerLaw { .. } => PositivePart::Everywhere,
            IntensityModel::Sinusoidal {
                base,
                amplitude,
                phase,
            } => {
                let a = TAU * amplitude.abs();
                if base >= a {
                    return PositivePart::Everywhere;
                }
                if base <= -a {
                    return PositivePart::Nowhere;
                }
                // λ > 0 ⇔ sin(θ) > −base/a with θ = 2π(t − phase) + (π if amplitude < 0)
                let rho = -base / a;
                let theta0 = if amplitude < 0.0 { PI } else { 0.0 };
                let start = phase + (theta0 + rho.asin()) / TAU;
                let len = (PI - 2.0 * rho.asin()) / TAU;
                PositivePart::Periodic {
                    start: start.rem_euclid(1.0),
                    len,
                }
            }
        }
    }

    /// Λ̃(t) = ∫₀ᵗ max(λ(s), 0) ds. Equals Λ when the intensity never goes negative.
    pub fn clamped_cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.positive_part() {
            PositivePart::Everywhere => self.raw_cumulative(t),
            PositivePart::Nowhere => 0.0,
            PositivePart::Periodic { start, len } => {
                let (_, h) = self.periodic_positive_integral(start, len);
                (h(t) - h(0.0)).max(0.0)
            }
        }
    }

    /// Inverse of the cumulative intensity: the last time at which Λ is still at
    /// or below `s`, i.e. `sup{t ≥ 0 : Λ(t) ≤ s}`. For a non-negative intensity
    /// this is the ordinary inverse.
    pub fn inverse_cumulative(&self, s: f64) -> Result<f64> {
        check_level(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        match *self {
            IntensityModel::PowerLaw { scale, exponent } => Ok((s / scale).powf(1.0 / exponent)),
            IntensityModel::Sinusoidal {
                base,
                amplitude,
                phase,
            } => {
                if base <= 0.0 {
                    return Err(Error::NotInvertible(s));
                }
                let (lo, hi) = match self.positive_part() {
                    PositivePart::Everywhere => {
                        // Λ(t) lies within base·t + c0 ± |amplitude|
                        let c0 = amplitude * (TAU * phase).cos();
                        let a = amplitude.abs();
                        (
                            ((s - c0 - a) / base).max(0.0),
                            ((s - c0 + a) / base).max(0.0),
                        )
                    }
                    PositivePart::Nowhere => return Err(Error::NotInvertible(s)),
                    PositivePart::Periodic { start, len } => {
                        // local minima of Λ sit at start + k and satisfy
                        // Λ(m + 1) = Λ(m) + base; the last one not above s
                        // opens the final increasing stretch through s
                        let k = ((s - self.raw_cumulative(start)) / base).floor();
                        let m = start + k;
                        (m.max(0.0), m + len)
                    }
                };
                Ok(solve_increasing(
                    |t| self.raw_cumulative(t),
                    |t| self.raw_rate(t),
                    lo,
                    hi,
                    s,
                ))
            }
        }
    }

    /// Generalised inverse of Λ̃: `inf{t ≥ 0 : Λ̃(t) ≥ s}`.
    pub fn inverse_clamped(&self, s: f64) -> Result<f64> {
        check_level(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        match self.positive_part() {
            PositivePart::Everywhere => self.inverse_cumulative(s),
            PositivePart::Nowhere => Err(Error::NotInvertible(s)),
            PositivePart::Periodic { start, len } => {
                let (per, h) = self.periodic_positive_integral(start, len);
                let target = s + h(0.0);
                let k = (target / per).floor();
                let rem = target - k * per;
                let r = if rem <= 0.0 {
                    0.0
                } else {
                    solve_increasing(
                        |r| self.raw_cumulative(start + r) - self.raw_cumulative(start),
                        |r| self.raw_rate(start + r).max(0.0),
                        0.0,
                        len,
                        rem,
                    )
                    .min(len)
                };
                Ok((start + k + r).max(0.0))
            }
        }
    }

    /// Integral of λ over one positive stretch, and the running integral
    /// `H(x) = ∫ max(λ, 0)` measured from the stretch beginning at `start`.
    fn periodic_positive_integral(&self, start: f64, len: f64) -> (f64, impl Fn(f64) -> f64 + '_) {
        let per = self.raw_cumulative(start + len) - self.raw_cumulative(start);
        let h = move |x: f64| {
            let k = (x - start).floor();
            let r = x - start - k;
            let partial = if r < len {
                self.raw_cumulative(start + r) - self.raw_cumulative(start)
            } else {
                per
            };
            k * per + partial
        };
        (per, h)
    }
}

fn check_level(s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::DomainError(format!(
            "cumulative level {s} must be finite and ≥ 0"
        )))
    }
}

/// Root of `f(x) = target` for increasing `f` on `[lo, hi]` (hi may be expanded),
/// by Newton steps with bisection fallback.
fn solve_increasing(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    target: f64,
) -> f64 {
    let mut grow = 1.0f64.max(hi - lo);
    while f(hi) < target {
        lo = hi;
        hi += grow;
        grow *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    let tol = 1e-15 * target.abs().max(1.0);
    for _ in 0..200 {
        let fx = f(x) - target;
        if fx.abs() <= tol {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = x - fx / d;
        if !(d > 0.0 && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

/// Outcome of a least-squares intensity fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityFit {
    pub model: IntensityModel,
    pub iterations: usize,
    /// Σₖ (k − Λ(tₖ))².
    pub sse: f64,
    /// ‖∇ ½Σ r²‖₂ at the returned parameters.
    pub gradient_norm: f64,
    /// Set when the fitted intensity is negative somewhere on [0, t_last].
    pub negative_intensity: bool,
}

const LM_GTOL: f64 = 1e-8;
/// Relative size of the Gauss–Newton decrease below which further progress is
/// indistinguishable from rounding in the sum of squares.
const LM_DECREMENT_TOL: f64 = 1e-13;
const LM_MAX_ITER: usize = 2000;

struct LmOutcome {
    theta: Vec<f64>,
    iterations: usize,
    sse: f64,
    gradient_norm: f64,
    converged: bool,
}

/// Levenberg–Marquardt with Marquardt diagonal scaling and Nielsen's damping
/// update. `model` returns the fitted values and their Jacobian; `None` marks an
/// inadmissible parameter vector.
fn levenberg_marquardt(
    targets: &[f64],
    theta0: Vec<f64>,
    model: impl Fn(&[f64]) -> Option<(DVector<f64>, DMatrix<f64>)>,
) -> Option<LmOutcome> {
    let y = DVector::from_column_slice(targets);
    let eval = |th: &[f64]| {
        model(th).map(|(fit, jac)| {
            let r = fit - &y;
            (r, jac)
        })
    };
    let (mut r, mut jac) = eval(&theta0)?;
    let mut theta = theta0;
    let p = theta.len();
    let mut cost = r.norm_squared();
    let mut a = jac.transpose() * &jac;
    let mut g = jac.transpose() * &r;
    // damping relative to diag(JᵀJ), so μ is dimensionless
    let mut mu = 1e-3;
    let mut nu = 2.0;
    let floor = |jac: &DMatrix<f64>, r: &DVector<f64>| {
        // attainable accuracy of Jᵀr in floating point
        let abs = jac.abs().transpose() * r.abs();
        64.0 * f64::EPSILON * abs.norm()
    };
    // gᵀ(JᵀJ)⁺g is the largest decrease the local quadratic model allows
    let settled = |a: &DMatrix<f64>, g: &DVector<f64>, cost: f64| {
        a.clone()
            .pseudo_inverse(1e-14 * a.norm())
            .map(|inv| g.dot(&(inv * g)) <= LM_DECREMENT_TOL * cost)
            .unwrap_or(false)
    };

    for it in 0..LM_MAX_ITER {
        let gn = g.norm();
        if gn < LM_GTOL || gn <= floor(&jac, &r) || settled(&a, &g, cost) {
            return Some(LmOutcome {
                theta,
                iterations: it,
                sse: cost,
                gradient_norm: gn,
                converged: true,
            });
        }
        // damped step as the least-squares solution of [J; √(μD)]·δ = [−r; 0],
        // which avoids squaring the condition number of J
        let n = r.len();
        let mut aug = DMatrix::zeros(n + p, p);
        aug.view_mut((0, 0), (n, p)).copy_from(&jac);
        for i in 0..p {
            aug[(n + i, i)] = (mu * a[(i, i)].max(1e-12)).sqrt();
        }
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&(-&r));
        let step = match aug.svd(true, true).solve(&rhs, 0.0) {
            Ok(step) if step.iter().all(|v| v.is_finite()) => step,
            _ => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
        let step_small = step.norm() <= 1e-15 * (DVector::from_column_slice(&theta).norm() + 1e-15);
        let accepted = eval(&trial).and_then(|(rt, jt)| {
            let ct = rt.norm_squared();
            let mut pred = 0.0;
            for i in 0..p {
                pred += step[i] * (mu * a[(i, i)].max(1e-12) * step[i] - g[i]);
            }
            let rho = (cost - ct) / pred;
            (ct.is_finite() && rho > 0.0).then_some((rt, jt, ct, rho))
        });
        match accepted {
            Some((rt, jt, ct, rho)) => {
                theta = trial;
                r = rt;
                jac = jt;
                cost = ct;
                a = jac.transpose() * &jac;
                g = jac.transpose() * &r;
                mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
            }
            None => {
                if step_small || mu > 1e30 {
                    let gn = g.norm();
                    return Some(LmOutcome {
                        theta,
                        iterations: it,
                        sse: cost,
                        gradient_norm: gn,
                        converged: gn < LM_GTOL
                            || gn <= 1e3 * floor(&jac, &r)
                            || settled(&a, &g, cost),
                    });
                }
                mu *= nu;
                nu *= 2.0;
            }
        }
    }
    let gn = g.norm();
    Some(LmOutcome {
        theta,
        iterations: LM_MAX_ITER,
        sse: cost,
        gradient_norm: gn,
        converged: false,
    })
}

fn sinusoid_eval(times: &[f64], th: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
    if !th.iter().all(|v| v.is_finite()) {
        return None;
    }
    let (b, a, ph) = (th[0], th[1], th[2]);
    let n = times.len();
    let cos_ph = (TAU * ph).cos();
    let sin_ph = (TAU * ph).sin();
    let mut f = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 3);
    for (i, &t) in times.iter().enumerate() {
        let arg = TAU * (t - ph);
        let (s, c) = arg.sin_cos();
        f[i] = b * t + a * (cos_ph - c);
        j[(i, 0)] = t;
        j[(i, 1)] = cos_ph - c;
        j[(i, 2)] = -TAU * a * (sin_ph + s);
    }
    Some((f, j))
}

fn power_eval(times: &[f64], th: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let (sc, ex) = (th[0], th[1]);
    if !(sc > 0.0 && ex > 0.0 && sc.is_finite() && ex.is_finite()) {
        return None;
    }
    let n = times.len();
    let mut f = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 2);
    for (i, &t) in times.iter().enumerate() {
        if t > 0.0 {
            let tp = t.powf(ex);
            f[i] = sc * tp;
            j[(i, 0)] = tp;
            j[(i, 1)] = sc * tp * t.ln();
        }
    }
    Some((f, j))
}

/// Least-squares fit of Λ to the empirical counting process: minimises
/// Σₖ (k − Λ(tₖ))² over the sorted event times by Levenberg–Marquardt.
pub fn fit_intensity(event_times: &[f64], family: IntensityFamily) -> Result<IntensityFit> {
    let needed = match family {
        IntensityFamily::Sinusoidal => 3,
        IntensityFamily::PowerLaw => 2,
    };
    if event_times.len() < needed {
        return Err(Error::SampleTooSmall {
            needed,
            got: event_times.len(),
        });
    }
    if let Some(&bad) = event_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::DomainError(format!("invalid event time {bad}")));
    }
    let mut times = event_times.to_vec();
    times.sort_by(f64::total_cmp);
    let counts: Vec<f64> = (1..=times.len()).map(|k| k as f64).collect();
    let t_last = *times.last().unwrap();
    if !(t_last > 0.0) {
        return Err(Error::DegenerateSample("all events at time zero".into()));
    }

    let outcome = match family {
        IntensityFamily::PowerLaw => {
            let start = power_law_start(&times, &counts);
            levenberg_marquardt(&counts, start, |th| power_eval(&times, th))
                .ok_or_else(|| Error::InvalidModel("invalid power-law start".into()))?
        }
        IntensityFamily::Sinusoidal => {
            let base = counts.len() as f64 / t_last;
            let (lo, hi) = times
                .iter()
                .zip(&counts)
                .map(|(t, k)| k - base * t)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                    (lo.min(d), hi.max(d))
                });
            let amp = if hi > lo {
                0.5 * (hi - lo)
            } else {
                1e-3 * base
            };
            let mut best: Option<LmOutcome> = None;
            for phase in [0.0, 0.25, 0.5, 0.75] {
                let Some(o) = levenberg_marquardt(&counts, vec![base, amp, phase], |th| {
                    sinusoid_eval(&times, th)
                }) else {
                    continue;
                };
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (o.converged && !b.converged)
                            || (o.converged == b.converged && o.sse < b.sse)
                    }
                };
                if better {
                    best = Some(o);
                }
            }
            best.ok_or_else(|| Error::InvalidModel("no admissible sinusoidal start".into()))?
        }
    };
    if !outcome.converged {
        return Err(Error::NonConvergence {
            iterations: outcome.iterations,
            residual: outcome.sse,
            gradient_norm: outcome.gradient_norm,
        });
    }
    let model = IntensityModel::from_params(family, &outcome.theta)?.canonical();
    let negative_intensity = match model {
        IntensityModel::Sinusoidal { .. } => {
            // negative somewhere on [0, t_last]?
            let steps = ((t_last * 512.0).ceil() as usize).max(512);
            model.has_negative_intensity()
                && (0..=steps).any(|i| model.raw_rate(t_last * i as f64 / steps as f64) < 0.0)
        }
        IntensityModel::PowerLaw { .. } => false,
    };
    Ok(IntensityFit {
        model,
        iterations: outcome.iterations,
        sse: outcome.sse,
        gradient_norm: outcome.gradient_norm,
        negative_intensity,
    })
}

/// Start from the log–log regression of k on tₖ.
fn power_law_start(times: &[f64], counts: &[f64]) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(counts)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, k)| (t.ln(), k.ln()))
        .collect();
    let t_last = *times.last().unwrap();
    let fallback = vec![counts.len() as f64 / t_last, 1.0];
    if pts.len() < 2 {
        return fallback;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return fallback;
    }
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return fallback;
    }
    vec![(my - slope * mx).exp(), slope]
}

/// Event times of the NHPP on `[0, horizon]`.
pub fn simulate_nhpp<R: Rng + ?Sized>(
    model: &IntensityModel,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    simulate_window(model, 0.0, horizon, rng)
}

/// Event times on `[start, start + length]` by time-scale inversion of a
/// unit-rate Poisson stream through Λ̃.
pub fn simulate_window<R: Rng + ?Sized>(
    model: &IntensityModel,
    start: f64,
    length: f64,
    rng: &mut R,
) -> Vec<f64> {
    let end = start + length;
    let s0 = model.clamped_cumulative(start);
    let s_end = model.clamped_cumulative(end);
    let mut out = Vec::with_capacity(((s_end - s0).max(0.0) * 1.2) as usize + 4);
    let mut s = s0;
    loop {
        let e: f64 = Exp1.sample(rng);
        s += e;
        if s > s_end {
            break;
        }
        match model.inverse_clamped(s) {
            Ok(t) => out.push(t.clamp(start, end)),
            Err(_) => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedKey;
    use approx::assert_relative_eq;

    fn reference_sinusoid() -> IntensityModel {
        IntensityModel::sinusoidal(16.668, 11.076, 1.004).unwrap()
    }

    fn reference_power_law() -> IntensityModel {
        IntensityModel::power_law(32.86, 0.772).unwrap()
    }

    /// Adaptive Simpson quadrature, independent of the closed forms.
    fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn intensity_examples() {
        let s = reference_sinusoid();
        assert_relative_eq!(s.intensity_at(1.004).unwrap(), 16.668, max_relative = 1e-14);
        assert_relative_eq!(
            s.intensity_at(1.254).unwrap(),
            16.668 + TAU * 11.076,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            reference_power_law().intensity_at(1.0).unwrap(),
            32.86 * 0.772,
            max_relative = 1e-14
        );
        assert_relative_eq!(32.86 * 0.772, 25.36792, max_relative = 1e-12);
        assert!(matches!(
            reference_power_law().intensity_at(0.0),
            Err(Error::SingularPoint(_))
        ));
        assert_eq!(
            IntensityModel::power_law(2.0, 1.5)
                .unwrap()
                .intensity_at(0.0)
                .unwrap(),
            0.0
        );
        assert!(s.intensity_at(-1.0).is_err());
    }

    #[test]
    fn cumulative_examples() {
        for m in [
            reference_sinusoid(),
            IntensityModel::sinusoidal(3.0, -0.2, 0.37).unwrap(),
        ] {
            let IntensityModel::Sinusoidal { base, .. } = m else {
                unreachable!()
            };
            assert_relative_eq!(m.cumulative(1.0), base, max_relative = 1e-12);
        }
        assert_relative_eq!(
            reference_power_law().cumulative(1.0),
            32.86,
            max_relative = 1e-15
        );
        let pl = reference_power_law();
        let quad = integrate(&|t| pl.raw_rate(t.max(1e-300)), 1.0, 2.0, 1e-12) + 32.86;
        assert_relative_eq!(pl.cumulative(2.0), quad, max_relative = 1e-10);
        assert!((pl.cumulative(2.0) - 56.11).abs() < 0.01);
    }

    #[test]
    fn derivative_of_cumulative_is_intensity() {
        for m in [
            reference_sinusoid(),
            reference_power_law(),
            IntensityModel::power_law(2.0, 1.7).unwrap(),
        ] {
            for i in 1..200 {
                let t = i as f64 * 0.05;
                let h = 1e-6;
                let fd = (m.cumulative(t + h) - m.cumulative(t - h)) / (2.0 * h);
                let lam = m.intensity_at(t).unwrap();
                assert!((fd - lam).abs() <= 1e-6 * lam.abs().max(1.0), "{m:?} t={t}");
            }
        }
    }

    #[test]
    fn inverse_examples() {
        assert_relative_eq!(
            reference_power_law().inverse_cumulative(32.86).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        assert_eq!(reference_sinusoid().inverse_cumulative(0.0).unwrap(), 0.0);
        assert_eq!(reference_power_law().inverse_cumulative(0.0).unwrap(), 0.0);
        let t = reference_sinusoid().inverse_cumulative(16.668).unwrap();
        assert!((t - 1.0).abs() < 1e-8, "{t}");
        assert!(reference_power_law().inverse_cumulative(-1.0).is_err());
        let flat = IntensityModel::sinusoidal(0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            flat.inverse_cumulative(1.0),
            Err(Error::NotInvertible(_))
        ));
    }

    #[test]
    fn inverse_is_last_passage() {
        let m = reference_sinusoid();
        for i in 1..2000 {
            let s = i as f64 * 0.2;
            let t = m.inverse_cumulative(s).unwrap();
            assert!((m.cumulative(t) - s).abs() <= 1e-9 * s, "s={s}");
            // Λ stays above s afterwards (dense check)
            for j in 1..=50 {
                assert!(m.cumulative(t + j as f64 * 0.02) > s);
            }
        }
    }

    #[test]
    fn inverse_round_trip_monotone_models() {
        for m in [
            reference_power_law(),
            IntensityModel::sinusoidal(20.0, 1.5, 0.3).unwrap(),
            IntensityModel::power_law(3.0, 2.2).unwrap(),
        ] {
            for i in 1..500 {
                let s = i as f64 * 0.7;
                let t = m.inverse_cumulative(s).unwrap();
                assert!((m.cumulative(t) - s).abs() <= 1e-9 * s);
                assert_relative_eq!(m.inverse_clamped(s).unwrap(), t, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn clamped_cumulative_matches_quadrature() {
        for m in [
            reference_sinusoid(),
            IntensityModel::sinusoidal(5.0, -3.0, 0.81).unwrap(),
            IntensityModel::sinusoidal(-2.0, 1.0, 0.1).unwrap(),
        ] {
            for &t in &[0.13f64, 0.5, 0.99, 1.0, 2.37, 7.9] {
                // panels of width 1/64 so the kinks cannot hide between nodes
                let panels = (t * 64.0).ceil() as usize;
                let w = t / panels as f64;
                let quad: f64 = (0..panels)
                    .map(|i| {
                        integrate(
                            &|s| m.raw_rate(s).max(0.0),
                            i as f64 * w,
                            (i + 1) as f64 * w,
                            1e-13,
                        )
                    })
                    .sum();
                assert_relative_eq!(
                    m.clamped_cumulative(t),
                    quad,
                    epsilon = 1e-7,
                    max_relative = 1e-9
                );
            }
        }
        assert_eq!(
            IntensityModel::sinusoidal(-20.0, 1.0, 0.0)
                .unwrap()
                .clamped_cumulative(5.0),
            0.0
        );
    }

    #[test]
    fn clamped_inverse_round_trip() {
        for m in [
            reference_sinusoid(),
            IntensityModel::sinusoidal(5.0, -3.0, 0.81).unwrap(),
        ] {
            for i in 1..1000 {
                let s = i as f64 * 0.37;
                let t = m.inverse_clamped(s).unwrap();
                assert!(
                    (m.clamped_cumulative(t) - s).abs() <= 1e-9 * s.max(1.0),
                    "{m:?} s={s}"
                );
                // generalised inverse: intensity positive at t
                assert!(m.raw_rate(t) >= -1e-6);
            }
        }
    }

    #[test]
    fn canonical_form_is_equivalent() {
        let m = IntensityModel::sinusoidal(10.0, -2.0, 3.3).unwrap();
        let c = m.canonical();
        let IntensityModel::Sinusoidal {
            amplitude, phase, ..
        } = c
        else {
            unreachable!()
        };
        assert!(amplitude >= 0.0 && (0.5..1.5).contains(&phase));
        for i in 0..100 {
            let t = i as f64 * 0.173;
            assert_relative_eq!(m.cumulative(t), c.cumulative(t), epsilon = 1e-10);
        }
    }

    #[test]
    fn fit_power_law_noiseless() {
        let truth = reference_power_law();
        let times: Vec<f64> = (1..=375)
            .map(|k| (k as f64 / 32.86).powf(1.0 / 0.772))
            .collect();
        let fit = fit_intensity(&times, IntensityFamily::PowerLaw).unwrap();
        for (a, b) in fit.model.params().iter().zip(truth.params()) {
            assert_relative_eq!(*a, b, max_relative = 1e-3);
        }
        assert!(fit.gradient_norm < 1e-8);
    }

    #[test]
    fn fit_power_law_noisy_counts_reaches_profile_minimum() {
        // profile oracle: for a fixed exponent b the best scale is Σk·tᵇ / Σt²ᵇ
        fn profile(times: &[f64], b: f64) -> (f64, f64) {
            let (mut num, mut den) = (0.0, 0.0);
            for (k, &t) in times.iter().enumerate() {
                num += (k + 1) as f64 * t.powf(b);
                den += t.powf(2.0 * b);
            }
            let a = num / den;
            let sse = times
                .iter()
                .enumerate()
                .map(|(k, &t)| ((k + 1) as f64 - a * t.powf(b)).powi(2))
                .sum();
            (a, sse)
        }
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        for seed in 0..40 {
            let times = simulate_nhpp(
                &reference_power_law(),
                23.0,
                &mut SeedKey::new(seed).stream(0),
            );
            let fit = fit_intensity(&times, IntensityFamily::PowerLaw).unwrap();
            let (mut lo, mut hi) = (0.2, 2.0);
            for _ in 0..200 {
                let x1 = hi - gr * (hi - lo);
                let x2 = lo + gr * (hi - lo);
                if profile(&times, x1).1 < profile(&times, x2).1 {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            let b = 0.5 * (lo + hi);
            let (a, sse) = profile(&times, b);
            let p = fit.model.params();
            assert_relative_eq!(p[0], a, max_relative = 1e-6);
            assert_relative_eq!(p[1], b, max_relative = 1e-6);
            assert_relative_eq!(fit.sse, sse, max_relative = 1e-9);
        }
    }

    #[test]
    fn fit_linear_counting_is_unit_exponent() {
        let rate = 7.0;
        let times: Vec<f64> = (1..=50).map(|k| k as f64 / rate).collect();
        let fit = fit_intensity(&times, IntensityFamily::PowerLaw).unwrap();
        let p = fit.model.params();
        assert_relative_eq!(p[0], rate, max_relative = 0.01);
        assert_relative_eq!(p[1], 1.0, max_relative = 0.01);
    }

    #[test]
    fn fit_sinusoid_noiseless() {
        let truth = reference_sinusoid();
        let times: Vec<f64> = (1..=375)
            .map(|k| truth.inverse_cumulative(k as f64).unwrap())
            .collect();
        let fit = fit_intensity(&times, IntensityFamily::Sinusoidal).unwrap();
        for (a, b) in fit.model.params().iter().zip(truth.params()) {
            assert_relative_eq!(*a, b, max_relative = 1e-3);
        }
        assert!(fit.negative_intensity);
    }

    #[test]
    fn fit_rejects_too_few_events() {
        assert!(matches!(
            fit_intensity(&[0.5, 1.0], IntensityFamily::Sinusoidal),
            Err(Error::SampleTooSmall { needed: 3, got: 2 })
        ));
        assert!(fit_intensity(&[0.5], IntensityFamily::PowerLaw).is_err());
    }

    #[test]
    fn simulation_basic_contract() {
        let none = IntensityModel::sinusoidal(-30.0, 1.0, 0.0).unwrap();
        let mut rng = SeedKey::new(1).stream(0);
        assert!(simulate_nhpp(&none, 5.0, &mut rng).is_empty());
        for seed in 0..1000 {
            let mut rng = SeedKey::new(seed).stream(0);
            for m in [reference_power_law(), reference_sinusoid()] {
                let ev = simulate_nhpp(&m, 2.0, &mut rng);
                assert!(ev.windows(2).all(|w| w[0] < w[1]));
                assert!(ev.iter().all(|&t| (0.0..=2.0).contains(&t)));
            }
        }
        let a = simulate_nhpp(&reference_power_law(), 3.0, &mut SeedKey::new(9).stream(2));
        let b = simulate_nhpp(&reference_power_law(), 3.0, &mut SeedKey::new(9).stream(2));
        assert_eq!(a, b);
    }

    #[test]
    fn simulation_mean_count() {
        let m = reference_power_law();
        let runs = 10_000;
        let key = SeedKey::new(2024);
        let total: usize = (0..runs)
            .map(|i| simulate_nhpp(&m, 1.0, &mut key.stream(i)).len())
            .sum();
        let mean = total as f64 / runs as f64;
        assert!(
            (mean - 32.86).abs() <= 3.0 * (32.86f64 / runs as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn json_shape() {
        let v = serde_json::to_value(reference_power_law()).unwrap();
        assert_eq!(v["family"], "PowerLaw");
        assert_eq!(v["params"]["exponent"], 0.772);
        let back: IntensityModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, reference_power_law());
        let bad =
            serde_json::json!({"family": "PowerLaw", "params": {"scale": 1.0, "exponent": 0.0}});
        assert!(serde_json::from_value::<IntensityModel>(bad).is_err());
    }
}
