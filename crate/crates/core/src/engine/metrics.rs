use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trace::Trace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Largest absolute deviation from the mean.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub label: String,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    pub channels: BTreeMap<String, ChannelStats>,
    /// `mean(p_stack) / mean(p_ac)` when both channels exist.
    pub efficiency: Option<f64>,
}

impl SteadyState {
    pub fn mean(&self, channel: &str) -> Result<f64> {
        self.channels
            .get(channel)
            .map(|s| s.mean)
            .ok_or_else(|| Error::config(format!("window {} has no channel {channel}", self.label)))
    }
}

/// Per-channel statistics over `t1 <= t <= t2`.
pub fn extract_steady_state(trace: &Trace, t1: f64, t2: f64) -> Result<SteadyState> {
    let range = trace.window(t1, t2)?;
    let n = range.len();
    let mut channels = BTreeMap::new();
    for c in &trace.channels {
        let xs = &c.data[range.clone()];
        let mean = xs.iter().sum::<f64>() / n as f64;
        let (min, max) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let max_deviation = xs.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        channels.insert(c.name.clone(), ChannelStats { mean, min, max, max_deviation });
    }
    let efficiency = match (channels.get("p_stack_W"), channels.get("p_ac_W")) {
        (Some(s), Some(a)) if a.mean > 0.0 => Some(s.mean / a.mean),
        _ => None,
    };
    Ok(SteadyState { label: String::new(), t_start: t1, t_end: t2, samples: n, channels, efficiency })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Settling {
    Settled { seconds: f64 },
    /// Still outside the band at the end of the trace.
    NotSettled,
}

impl Settling {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Settling::Settled { seconds } => Some(seconds),
            Settling::NotSettled => None,
        }
    }
}

fn event_index(trace: &Trace, t_event: f64) -> Result<usize> {
    let (first, last) = match (trace.time.first(), trace.time.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::config("empty trace")),
    };
    if !(t_event >= first && t_event <= last) {
        return Err(Error::config(format!("event time {t_event} lies outside the trace [{first}, {last}]")));
    }
    Ok(trace.time.partition_point(|&t| t < t_event))
}

/// Mean over the last tenth of the samples from `from` on.
fn final_value(xs: &[f64], from: usize) -> f64 {
    let tail = &xs[from..];
    let n = (tail.len() / 10).max(1);
    tail[tail.len() - n..].iter().sum::<f64>() / n as f64
}

/// Value just before the event.
fn initial_value(xs: &[f64], idx: usize) -> f64 {
    xs[idx.saturating_sub(1)]
}

/// Time from `t_event` until `channel` enters and stays within
/// `band * |final|` of its final value (the final value is the mean of the
/// last tenth of the post-event samples; for a zero final value the band is
/// taken relative to the pre-event value).
pub fn settling_time(trace: &Trace, channel: &str, t_event: f64, band: f64) -> Result<Settling> {
    let xs = trace.require(channel)?;
    let idx = event_index(trace, t_event)?;
    let fin = final_value(xs, idx);
    let scale = if fin.abs() > 0.0 { fin.abs() } else { initial_value(xs, idx).abs() };
    let tol = band * scale;
    match (idx..xs.len()).rev().find(|&k| (xs[k] - fin).abs() > tol) {
        None => Ok(Settling::Settled { seconds: 0.0 }),
        Some(k) if k + 1 == xs.len() => Ok(Settling::NotSettled),
        Some(k) => Ok(Settling::Settled { seconds: trace.time[k + 1] - t_event }),
    }
}

/// Peak excursion beyond the final value, relative to the step size. `None`
/// when the channel returns to where it started (a regulated quantity after a
/// disturbance), where a ratio to the step is meaningless.
pub fn overshoot(trace: &Trace, channel: &str, t_event: f64) -> Result<Option<f64>> {
    let xs = trace.require(channel)?;
    let idx = event_index(trace, t_event)?;
    let fin = final_value(xs, idx);
    let x0 = initial_value(xs, idx);
    let step = fin - x0;
    if step.abs() <= 1e-6 * fin.abs().max(x0.abs()) {
        return Ok(None);
    }
    let peak = xs[idx..].iter().map(|x| (x - fin) * step.signum()).fold(0.0, f64::max);
    Ok(Some(peak / step.abs()))
}

/// Time constant of a first-order fit from the 63.2 % crossing of the step.
pub fn fit_first_order(trace: &Trace, channel: &str, t_event: f64) -> Result<f64> {
    let xs = trace.require(channel)?;
    let idx = event_index(trace, t_event)?;
    let x0 = initial_value(xs, idx);
    let fin = final_value(xs, idx);
    let step = fin - x0;
    if step == 0.0 {
        return Err(Error::config(format!("{channel} does not move after {t_event} s")));
    }
    let level = 1.0 - (-1.0f64).exp();
    let frac = |k: usize| (xs[k] - x0) / step;
    let t0 = trace.time[idx.saturating_sub(1)];
    let mut prev = (t0, 0.0);
    for k in idx..xs.len() {
        let f = frac(k);
        if f >= level {
            let (tp, fp) = prev;
            let t = tp + (level - fp) / (f - fp) * (trace.time[k] - tp);
            // the pre-event sample is the origin of the response
            return Ok(t - t0);
        }
        prev = (trace.time[k], f);
    }
    Err(Error::config(format!("{channel} never reaches 63 % of its step")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetrics {
    pub nadir_hz: f64,
    pub t_nadir: f64,
    pub peak_hz: f64,
    pub final_hz: f64,
    /// Time after the event until the frequency stays within `tolerance_hz`
    /// of nominal.
    pub recovery: Settling,
    pub tolerance_hz: f64,
}

pub fn frequency_metrics(trace: &Trace, channel: &str, t_event: f64, f_nominal: f64, tolerance_hz: f64) -> Result<FrequencyMetrics> {
    let xs = trace.require(channel)?;
    let idx = event_index(trace, t_event)?;
    let (mut nadir, mut t_nadir, mut peak) = (f64::INFINITY, t_event, f64::NEG_INFINITY);
    for (&x, &t) in xs[idx..].iter().zip(&trace.time[idx..]) {
        if x < nadir {
            nadir = x;
            t_nadir = t;
        }
        peak = peak.max(x);
    }
    let recovery = match (idx..xs.len()).rev().find(|&k| (xs[k] - f_nominal).abs() > tolerance_hz) {
        None => Settling::Settled { seconds: 0.0 },
        Some(k) if k + 1 == xs.len() => Settling::NotSettled,
        Some(k) => Settling::Settled { seconds: trace.time[k + 1] - t_event },
    };
    Ok(FrequencyMetrics {
        nadir_hz: nadir,
        t_nadir,
        peak_hz: peak,
        final_hz: *xs.last().expect("non-empty"),
        recovery,
        tolerance_hz,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlingResult {
    pub channel: String,
    pub t_event: f64,
    pub band: f64,
    pub settling: Settling,
    pub overshoot: Option<f64>,
}

/// Metrics document written next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub topology: String,
    pub steps: usize,
    pub windows: Vec<SteadyState>,
    pub settling: Vec<SettlingResult>,
    pub frequency: Option<FrequencyMetrics>,
    /// Worst per-step energy-balance residual, relative to the input power.
    pub max_energy_residual: f64,
    pub max_modulation: f64,
    pub violations: Vec<String>,
}
