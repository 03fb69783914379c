//! Acquisition functions and candidate selection over a discrete slice.
//!
//! Memory-score EI is ordinary EI whose exploration margin cools with the
//! number of samples taken in the current frame:
//! `ξ = 1 / (α · mean(D) · n^q)`.

use std::fmt;
use std::str::FromStr;

use statrs::function::erf::erfc;

use crate::error::{ensure_finite, Error, Result};
use crate::gp::{GpModel, Posterior, Query};
use crate::par::Exec;

/// Mean score at or below which ξ is clamped to `xi_max`.
pub const XI_MEAN_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AcqKind {
    Ei,
    Pi,
    MsEi,
}

impl fmt::Display for AcqKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcqKind::Ei => "ei",
            AcqKind::Pi => "pi",
            AcqKind::MsEi => "msei",
        })
    }
}

impl FromStr for AcqKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ei" => Ok(AcqKind::Ei),
            "pi" => Ok(AcqKind::Pi),
            "msei" => Ok(AcqKind::MsEi),
            other => Err(Error::Config(format!("unknown acquisition '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcqConfig {
    pub kind: AcqKind,
    pub alpha: f64,
    pub q: f64,
    /// Exploration margin for plain EI and PI.
    pub fixed_xi: f64,
    /// Upper bound used when the observed mean is degenerate.
    pub xi_max: f64,
}

impl Default for AcqConfig {
    fn default() -> Self {
        Self {
            kind: AcqKind::MsEi,
            alpha: 1.0,
            q: 1.1,
            fixed_xi: 0.01,
            xi_max: 20.0,
        }
    }
}

impl AcqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("acq.alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(Error::Config(format!("acq.q must be > 0, got {}", self.q)));
        }
        if !(self.fixed_xi.is_finite() && self.fixed_xi >= 0.0) {
            return Err(Error::Config(format!(
                "acq.fixed_xi must be >= 0, got {}",
                self.fixed_xi
            )));
        }
        if !(self.xi_max.is_finite() && self.xi_max > 0.0) {
            return Err(Error::Config(format!("acq.xi_max must be > 0, got {}", self.xi_max)));
        }
        Ok(())
    }
}

/// Samples observed so far in the current frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchHistory {
    values: Vec<f64>,
    locations: Vec<[f64; 2]>,
    incumbent: Option<(f64, [f64; 2])>,
    /// Subtracted from the observed mean before it enters ξ, so that scores
    /// with a negative lower bound still give a positive mean.
    baseline: f64,
}

impl SearchHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_baseline(baseline: f64) -> Self {
        Self {
            baseline,
            ..Self::default()
        }
    }

    pub fn push(&mut self, location: [f64; 2], value: f64) {
        if self.incumbent.is_none_or(|(best, _)| value > best) {
            self.incumbent = Some((value, location));
        }
        self.values.push(value);
        self.locations.push(location);
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn locations(&self) -> &[[f64; 2]] {
        &self.locations
    }

    pub fn incumbent(&self) -> Option<(f64, [f64; 2])> {
        self.incumbent
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64 - self.baseline
    }
}

/// `ξ = 1 / (α · mean · n^q)`, clamped to `xi_max` when the mean is not
/// positive.
pub fn ms_ei_xi(history: &SearchHistory, cfg: &AcqConfig) -> Result<f64> {
    let n = history.n();
    if n == 0 {
        return Err(Error::Precondition(
            "memory-score ξ needs at least one observation".into(),
        ));
    }
    let mean = history.mean();
    ensure_finite(mean, "observed mean")?;
    if mean <= XI_MEAN_EPS {
        return Ok(cfg.xi_max);
    }
    Ok(1.0 / (cfg.alpha * mean * (n as f64).powf(cfg.q)))
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn check_inputs(mean: f64, sd: f64, incumbent: f64, xi: f64) -> Result<()> {
    ensure_finite(mean, "posterior mean")?;
    ensure_finite(sd, "posterior sd")?;
    ensure_finite(incumbent, "incumbent")?;
    ensure_finite(xi, "xi")?;
    if sd < 0.0 {
        return Err(Error::Precondition(format!("sd must be >= 0, got {sd}")));
    }
    Ok(())
}

/// `(μ - f* - ξ)·Φ(Z) + σ·φ(Z)` with `Z = (μ - f* - ξ)/σ`; the σ → 0 limit
/// is `max(μ - f* - ξ, 0)`.
pub fn expected_improvement(mean: f64, sd: f64, incumbent: f64, xi: f64) -> Result<f64> {
    check_inputs(mean, sd, incumbent, xi)?;
    let gain = mean - incumbent - xi;
    if sd == 0.0 {
        return Ok(gain.max(0.0));
    }
    let z = gain / sd;
    Ok((gain * std_normal_cdf(z) + sd * std_normal_pdf(z)).max(0.0))
}

pub fn probability_of_improvement(mean: f64, sd: f64, incumbent: f64, xi: f64) -> Result<f64> {
    check_inputs(mean, sd, incumbent, xi)?;
    let gain = mean - incumbent - xi;
    if sd == 0.0 {
        return Ok(if gain > 0.0 { 1.0 } else { 0.0 });
    }
    Ok(std_normal_cdf(gain / sd))
}

/// Exploration margin in effect for the next selection.
pub fn current_xi(history: &SearchHistory, cfg: &AcqConfig) -> Result<f64> {
    match cfg.kind {
        AcqKind::Ei | AcqKind::Pi => Ok(cfg.fixed_xi),
        AcqKind::MsEi => ms_ei_xi(history, cfg),
    }
}

/// Acquisition value of one posterior given the incumbent and margin.
pub fn acquisition_value(kind: AcqKind, post: &Posterior, incumbent: f64, xi: f64) -> Result<f64> {
    match kind {
        AcqKind::Ei | AcqKind::MsEi => expected_improvement(post.mean, post.sd(), incumbent, xi),
        AcqKind::Pi => probability_of_improvement(post.mean, post.sd(), incumbent, xi),
    }
}

/// Below this `Z` the closed forms lose everything to underflow, and the
/// log-space tail expansions take over.
const TAIL_Z: f64 = -20.0;

fn ln_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// `ln(z·Φ(z) + φ(z))`, the log of EI per unit σ.
fn ln_ei_unit(z: f64) -> f64 {
    if z > TAIL_Z {
        return (z * std_normal_cdf(z) + std_normal_pdf(z)).ln();
    }
    // 1 - x·R(x) for the Mills ratio R, asymptotic in x = -z.
    let x2 = z * z;
    let s = (1.0 - 3.0 / x2 * (1.0 - 5.0 / x2 * (1.0 - 7.0 / x2 * (1.0 - 9.0 / x2)))) / x2;
    ln_std_normal_pdf(z) + s.ln()
}

fn ln_std_normal_cdf(z: f64) -> f64 {
    if z > TAIL_Z {
        return std_normal_cdf(z).ln();
    }
    let x2 = z * z;
    let s = 1.0 - 1.0 / x2 * (1.0 - 3.0 / x2 * (1.0 - 5.0 / x2 * (1.0 - 7.0 / x2)));
    ln_std_normal_pdf(z) - (-z).ln() + s.ln()
}

/// Natural log of [`acquisition_value`], finite wherever the value is
/// positive even when the value itself underflows. Candidates are ranked by
/// this, so a very large ξ degrades to picking the most uncertain candidate
/// rather than to an all-zero tie.
pub fn acquisition_log_value(kind: AcqKind, post: &Posterior, incumbent: f64, xi: f64) -> Result<f64> {
    let sd = post.sd();
    check_inputs(post.mean, sd, incumbent, xi)?;
    let gain = post.mean - incumbent - xi;
    Ok(match (kind, sd == 0.0) {
        (AcqKind::Ei | AcqKind::MsEi, true) => gain.max(0.0).ln(),
        (AcqKind::Ei | AcqKind::MsEi, false) => sd.ln() + ln_ei_unit(gain / sd),
        (AcqKind::Pi, true) => {
            if gain > 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        (AcqKind::Pi, false) => ln_std_normal_cdf(gain / sd),
    })
}

/// Picks the next candidate index from precomputed posteriors.
///
/// `excluded[i]` marks candidates already sampled this frame. With an empty
/// history the candidate with the highest posterior mean is chosen. Ties go
/// to the lowest index. Candidates are compared by
/// [`acquisition_log_value`]. If every candidate is excluded the
/// highest-variance one is returned.
pub fn select_from_posteriors(
    posteriors: &[Posterior],
    excluded: &[bool],
    history: &SearchHistory,
    cfg: &AcqConfig,
    exec: Exec,
) -> Result<usize> {
    if posteriors.is_empty() {
        return Err(Error::Empty("no candidates to select from"));
    }
    if excluded.len() != posteriors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} exclusion flags for {} candidates",
            excluded.len(),
            posteriors.len()
        )));
    }
    let scores: Vec<f64> = match history.incumbent() {
        None => posteriors.iter().map(|p| p.mean).collect(),
        Some((best, _)) => {
            let xi = current_xi(history, cfg)?;
            exec.try_map_range(posteriors.len(), |i| {
                acquisition_log_value(cfg.kind, &posteriors[i], best, xi)
            })?
        }
    };
    if let Some(i) = argmax_first(scores.iter().zip(excluded).map(|(s, &x)| (!x).then_some(*s))) {
        return Ok(i);
    }
    Ok(argmax_first(posteriors.iter().map(|p| Some(p.variance))).expect("non-empty"))
}

/// Index of the largest present value, first index among ties.
fn argmax_first(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Selects the next query among `candidates`, all of which must lie on the
/// current time slice. A missing model means no data yet: the prior is used.
pub fn select_next(
    model: Option<&GpModel>,
    prior_mean: f64,
    prior_variance: f64,
    candidates: &[Query],
    history: &SearchHistory,
    cfg: &AcqConfig,
) -> Result<usize> {
    let Some(first) = candidates.first() else {
        return Err(Error::Empty("no candidates to select from"));
    };
    if candidates.iter().any(|c| c.time != first.time) {
        return Err(Error::Precondition("candidates must share one time slice".into()));
    }
    let posteriors = match model {
        Some(m) => m.predict(candidates)?,
        None => vec![
            Posterior {
                mean: prior_mean,
                variance: prior_variance,
            };
            candidates.len()
        ],
    };
    let excluded: Vec<bool> = candidates
        .iter()
        .map(|c| history.locations().contains(&c.location))
        .collect();
    select_from_posteriors(&posteriors, &excluded, history, cfg, Exec::default())
}
