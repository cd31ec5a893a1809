//! Grid-services supervisor: holds the generation-bus power at a target by
//! moving the electrolyzer power reference, with optional frequency-watt droop.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisorConfig {
    /// Generation-bus power to hold, W.
    pub p_net_target: f64,
    /// Transport delay of the bus telemetry, s.
    pub telemetry_delay: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Maximum slew of the power reference, W/s.
    pub ramp_limit: f64,
    /// Frequency-watt gain, W/Hz. Zero disables the droop term.
    pub droop_gain: f64,
    /// Time constant with which the reference approaches its target, s.
    pub time_constant: f64,
    pub f_nominal: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        SupervisorConfig {
            p_net_target: 1.15e6,
            telemetry_delay: 0.1,
            p_min: 0.0,
            p_max: 750e3,
            ramp_limit: 750e3,
            droop_gain: 0.0,
            time_constant: 0.05,
            f_nominal: 60.0,
        }
    }
}

impl SupervisorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_min <= self.p_max) {
            return Err(Error::config("supervisor p_min must not exceed p_max"));
        }
        let nonneg = [
            ("telemetry_delay", self.telemetry_delay),
            ("ramp_limit", self.ramp_limit),
            ("time_constant", self.time_constant),
            ("droop_gain", self.droop_gain),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("supervisor.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SupervisorState {
    pub p_ref: f64,
}

/// Telemetry sample as it travels from the bus to the supervisor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Telemetry {
    pub p_gen: f64,
    pub f_hz: f64,
    /// Electrolyzer power in the same frame as `p_gen`.
    pub p_elz: f64,
}

/// Pure transport delay of a whole number of steps.
#[derive(Debug, Clone)]
pub struct DelayLine<T> {
    buf: VecDeque<T>,
}

impl<T: Copy> DelayLine<T> {
    /// A line of `steps` samples, prefilled with `initial`.
    pub fn new(steps: usize, initial: T) -> Self {
        DelayLine { buf: std::iter::repeat_n(initial, steps).collect() }
    }

    /// Steps needed for `delay` at `dt`; the delay must be a whole multiple of `dt`.
    pub fn steps_for(delay: f64, dt: f64) -> Result<usize> {
        let n = delay / dt;
        let r = n.round();
        if (n - r).abs() > 1e-6 {
            return Err(Error::config(format!(
                "telemetry delay {delay} s is not a whole number of {dt} s steps"
            )));
        }
        Ok(r as usize)
    }

    /// Push the newest sample and return the one `steps` pushes old.
    pub fn push(&mut self, sample: T) -> T {
        if self.buf.is_empty() {
            return sample;
        }
        let out = self.buf.pop_front().expect("non-empty");
        self.buf.push_back(sample);
        out
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

/// One supervisor update from a (delayed) telemetry frame.
///
/// Target: `p_elz - (p_gen - p_net_target) + droop_gain (f - f_nominal)`.
/// The reference approaches it with `time_constant`, then the slew limit and
/// the `[p_min, p_max]` clamp apply.
pub fn supervisor_step(
    cfg: &SupervisorConfig,
    s: &SupervisorState,
    p_gen_measured: f64,
    f_measured: f64,
    p_elz: f64,
    dt: f64,
) -> SupervisorState {
    let target = p_elz - (p_gen_measured - cfg.p_net_target) + cfg.droop_gain * (f_measured - cfg.f_nominal);
    let alpha = if cfg.time_constant > 0.0 { (dt / cfg.time_constant).min(1.0) } else { 1.0 };
    let max_step = cfg.ramp_limit * dt;
    let step = (alpha * (target - s.p_ref)).clamp(-max_step, max_step);
    SupervisorState { p_ref: (s.p_ref + step).clamp(cfg.p_min, cfg.p_max) }
}
