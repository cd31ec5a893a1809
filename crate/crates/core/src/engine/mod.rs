//! Fixed-step simulation of a scenario: wiring per topology, event schedule,
//! integration, recording and metric extraction.

pub mod calibration;
mod grid_support;
pub mod metrics;
mod power_train;
pub mod scenario;
pub mod trace;

use serde::{Deserialize, Serialize};

pub use metrics::{
    extract_steady_state, fit_first_order, frequency_metrics, overshoot, settling_time, ChannelStats,
    FrequencyMetrics, Metrics, Settling, SettlingResult, SteadyState,
};
pub use scenario::{
    Analysis, ControlMode, ControlParams, Event, EventKind, GridSupportParams, Method, Params, Recording, Scenario,
    SettlingSpec, Setpoints, Solver, StackConfig, Topology, Window,
};
pub use trace::{Channel, EventMarker, Trace, Unit};

use crate::error::Result;

/// Run-time observations that are not channels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    /// Worst per-step energy-balance residual relative to the input power.
    pub max_energy_residual: f64,
    pub max_modulation: f64,
    /// Flagged boost-limit, current-limit and reference violations.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trace: Trace,
    pub metrics: Metrics,
    pub diagnostics: Diagnostics,
}

/// Every channel recorded for a topology, in trace order.
pub fn channel_names(topology: Topology) -> Vec<String> {
    let names: Vec<&str> = match topology {
        Topology::NoDcDc => power_train::CHANNELS_NO_DC_DC.to_vec(),
        Topology::WithDcDc => {
            power_train::CHANNELS_NO_DC_DC.iter().chain(power_train::CHANNELS_WITH_DC_DC_EXTRA).copied().collect()
        }
        Topology::GridSupport => grid_support::CHANNELS_GRID.to_vec(),
    };
    names.into_iter().map(String::from).collect()
}

/// Run a scenario. Identical scenarios give bit-identical traces.
pub fn simulate(sc: &Scenario) -> Result<Simulation> {
    sc.validate()?;
    let (mut trace, diagnostics) = match sc.topology {
        Topology::NoDcDc | Topology::WithDcDc => power_train::run(sc)?,
        Topology::GridSupport => grid_support::run(sc)?,
    };
    let metrics = compute_metrics(sc, &trace, &diagnostics)?;
    if !sc.record.channels.is_empty() {
        trace.select(&sc.record.channels)?;
    }
    Ok(Simulation { trace, metrics, diagnostics })
}

/// Metrics requested by the scenario's analysis section, from a trace.
pub fn compute_metrics(sc: &Scenario, trace: &Trace, diag: &Diagnostics) -> Result<Metrics> {
    let mut windows = Vec::new();
    for w in &sc.analysis.windows {
        let mut s = extract_steady_state(trace, w.t_start, w.t_end)?;
        s.label = w.label.clone();
        windows.push(s);
    }
    let mut settling = Vec::new();
    for s in &sc.analysis.settling {
        settling.push(SettlingResult {
            channel: s.channel.clone(),
            t_event: s.t_event,
            band: s.band,
            settling: settling_time(trace, &s.channel, s.t_event, s.band)?,
            overshoot: overshoot(trace, &s.channel, s.t_event)?,
        });
    }
    let frequency = match (sc.topology, sc.events.iter().find(|e| e.kind == EventKind::SetLoad)) {
        (Topology::GridSupport, Some(e)) => {
            Some(frequency_metrics(trace, "f_Hz", e.time, sc.params.grid.generator.f_nominal, 0.02)?)
        }
        _ => None,
    };
    Ok(Metrics {
        scenario: sc.name.clone(),
        topology: sc.topology.label().to_string(),
        steps: diag.steps,
        windows,
        settling,
        frequency,
        max_energy_residual: diag.max_energy_residual,
        max_modulation: diag.max_modulation,
        violations: diag.violations.clone(),
    })
}
