//! Scenario description: topology, parameters, setpoints, events, solver and
//! recording settings. Read from TOML; JSON is the reference serialization.

use serde::{Deserialize, Serialize};

use crate::control::{PllGains, SupervisorConfig};
use crate::converter::{BuckParams, LossModel, RectifierParams};
use crate::error::{Error, Result};
use crate::grid::{GeneratorParams, LineParams, LoadParams};
use crate::stack::{scale_stack, CellGroupParams, StackParams};

use super::calibration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// Rectifier feeding the stack directly.
    #[serde(rename = "no_dc_dc")]
    NoDcDc,
    /// Rectifier regulating a DC link, buck stage feeding the stack.
    #[serde(rename = "with_dc_dc")]
    WithDcDc,
    /// Generator, line, dynamic load and electrolyzer with the supervisor.
    #[serde(rename = "grid_support")]
    GridSupport,
}

impl Topology {
    pub fn label(self) -> &'static str {
        match self {
            Topology::NoDcDc => "no_dc_dc",
            Topology::WithDcDc => "with_dc_dc",
            Topology::GridSupport => "grid_support",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Grid-side active and reactive power.
    #[default]
    #[serde(rename = "p_q")]
    PQ,
    /// Stack (or, with a DC/DC stage, link) voltage and reactive power.
    #[serde(rename = "vdc_q")]
    VdcQ,
    /// Stack current and reactive power.
    #[serde(rename = "idc_q")]
    IdcQ,
}

/// Operating references at `t = 0`; events modify them.
///
/// Without a DC/DC stage the mode selects the rectifier outer loop. With one,
/// the rectifier always regulates the link at `vdc_ref` and the mode selects
/// what the buck stage tracks (`p_ref`, `idc_ref`, or the stack voltage `vstack_ref`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Setpoints {
    pub mode: ControlMode,
    pub p_ref: f64,
    pub q_ref: f64,
    pub vdc_ref: f64,
    pub idc_ref: f64,
    pub vstack_ref: f64,
}

impl Default for Setpoints {
    fn default() -> Self {
        Setpoints { mode: ControlMode::PQ, p_ref: 0.0, q_ref: 0.0, vdc_ref: 250.0, idc_ref: 0.0, vstack_ref: 150.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "set_P")]
    SetP,
    #[serde(rename = "set_Q")]
    SetQ,
    #[serde(rename = "set_Vdc")]
    SetVdc,
    #[serde(rename = "set_Idc")]
    SetIdc,
    #[serde(rename = "set_load")]
    SetLoad,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::SetP => "set_P",
            EventKind::SetQ => "set_Q",
            EventKind::SetVdc => "set_Vdc",
            EventKind::SetIdc => "set_Idc",
            EventKind::SetLoad => "set_load",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Implicit midpoint on the plant, explicit controllers.
    #[default]
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Solver {
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
    /// Abort on boost-limit, current-limit or reference violations instead of
    /// flagging them.
    pub strict: bool,
}

impl Default for Solver {
    fn default() -> Self {
        Solver { dt: 10e-6, t_end: 0.05, method: Method::Midpoint, strict: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Recording {
    /// Channels to keep; empty keeps every channel of the topology.
    pub channels: Vec<String>,
    /// Keep every n-th step.
    pub decimation: usize,
}

impl Default for Recording {
    fn default() -> Self {
        Recording { channels: Vec::new(), decimation: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub label: String,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettlingSpec {
    pub channel: String,
    pub t_event: f64,
    pub band: f64,
}

/// Post-processing requested with the run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    pub windows: Vec<Window>,
    pub settling: Vec<SettlingSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    pub cell: CellGroupParams,
    pub cells_per_group: u32,
    pub n_series: u32,
    pub n_parallel: u32,
    /// Stack-level EMF override, V.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_rev: Option<f64>,
    /// Stack-level series resistance override, ohm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_total: Option<f64>,
    /// Integrate the RC activation branch instead of the static model.
    pub dynamic: bool,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            cell: CellGroupParams::REFERENCE,
            cells_per_group: 3,
            n_series: 35,
            n_parallel: 70,
            v_rev: Some(145.5),
            r_total: Some(0.02),
            dynamic: false,
        }
    }
}

impl StackConfig {
    pub fn build(&self) -> Result<StackParams> {
        let p = scale_stack(&self.cell, self.cells_per_group, self.n_series, self.n_parallel)?
            .with_overrides(self.v_rev, self.r_total)?;
        p.validate()?;
        Ok(p)
    }
}

/// Loop tuning. Bandwidths in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    pub current_bandwidth_hz: f64,
    pub dc_bandwidth_hz: f64,
    pub link_bandwidth_hz: f64,
    pub link_zeta: f64,
    pub buck_bandwidth_hz: f64,
    pub pll_bandwidth_hz: f64,
    pub pll_zeta: f64,
    /// Peak phase-current limit of the rectifier, A.
    pub i_limit: f64,
    /// Time constant of the loss estimate used by the DC/DC power command, s.
    pub loss_filter_tau: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            current_bandwidth_hz: 1000.0,
            dc_bandwidth_hz: 100.0,
            link_bandwidth_hz: 50.0,
            link_zeta: std::f64::consts::FRAC_1_SQRT_2,
            buck_bandwidth_hz: 100.0,
            pll_bandwidth_hz: 50.0,
            pll_zeta: std::f64::consts::FRAC_1_SQRT_2,
            i_limit: 10_000.0,
            loss_filter_tau: 5e-3,
        }
    }
}

impl ControlParams {
    pub fn pll_gains(&self, f_nominal: f64) -> PllGains {
        PllGains::from_bandwidth(self.pll_bandwidth_hz, self.pll_zeta, f_nominal)
    }
}

/// Quasi-static grid-support case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSupportParams {
    pub generator: GeneratorParams,
    pub line: LineParams,
    pub load: LoadParams,
    pub supervisor: SupervisorConfig,
    /// Dynamic-load demand at `t = 0`, W.
    pub load_initial: f64,
    /// Transformer ratio of the electrolyzer feeder.
    pub turns_ratio: f64,
    /// First-order time constant of the electrolyzer power loop, s.
    pub electrolyzer_tau: f64,
}

impl Default for GridSupportParams {
    fn default() -> Self {
        GridSupportParams {
            generator: GeneratorParams::default(),
            line: LineParams::default(),
            load: LoadParams::default(),
            supervisor: SupervisorConfig::default(),
            load_initial: 500e3,
            turns_ratio: 480.0 / 64.0,
            electrolyzer_tau: 1.0 / (std::f64::consts::TAU * 1000.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub stack: StackConfig,
    pub rectifier: RectifierParams,
    pub buck: BuckParams,
    pub rectifier_loss: LossModel,
    pub buck_loss: LossModel,
    pub control: ControlParams,
    pub grid: GridSupportParams,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            stack: StackConfig::default(),
            rectifier: RectifierParams::default(),
            buck: BuckParams::default(),
            rectifier_loss: calibration::rectifier_loss(),
            buck_loss: calibration::buck_loss(),
            control: ControlParams::default(),
            grid: GridSupportParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub topology: Topology,
    #[serde(default)]
    pub setpoints: Setpoints,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub record: Recording,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default)]
    pub params: Params,
}

impl Scenario {
    pub fn new(name: impl Into<String>, topology: Topology) -> Self {
        let solver = match topology {
            Topology::GridSupport => Solver { dt: 100e-6, t_end: 10.0, ..Solver::default() },
            _ => Solver::default(),
        };
        let mut params = Params::default();
        if topology == Topology::WithDcDc {
            params.rectifier.ac = calibration::ac_with_dc_dc();
        }
        Scenario {
            name: name.into(),
            description: String::new(),
            topology,
            setpoints: Setpoints::default(),
            events: Vec::new(),
            solver,
            record: Recording::default(),
            analysis: Analysis::default(),
            params,
        }
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)
            .map_err(|e| Error::Parse { source_name: source_name.to_string(), message: e.to_string() })?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json_str(text: &str, source_name: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: format!("{e} (line {}, column {})", e.line(), e.column()),
        })?;
        s.validate()?;
        Ok(s)
    }

    /// Parse by extension: `.json` as JSON, anything else as TOML.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read scenario {}: {e}", path.display())))?;
        let name = path.display().to_string();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text, &name)
        } else {
            Self::from_toml_str(&text, &name)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize scenario: {e}")))
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::config(format!("cannot serialize scenario: {e}")))
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.solver.dt = dt;
        self
    }

    pub fn with_strict(mut self, strict: bool) -> Self {
        self.solver.strict = strict;
        self
    }

    pub fn stack(&self) -> Result<StackParams> {
        self.params.stack.build()
    }

    /// Step index at which an event scheduled at `time` takes effect: the
    /// first step whose start time is at or after it.
    pub fn event_step(&self, time: f64) -> usize {
        let k = (time / self.solver.dt - 1e-9).ceil();
        if k <= 0.0 {
            0
        } else {
            k as usize
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.solver.t_end / self.solver.dt - 1e-9).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let sv = &self.solver;
        if !(sv.dt.is_finite() && sv.dt > 0.0 && sv.t_end.is_finite() && sv.dt < sv.t_end) {
            return Err(Error::config(format!("solver needs 0 < dt < t_end (dt = {}, t_end = {})", sv.dt, sv.t_end)));
        }
        if self.record.decimation == 0 {
            return Err(Error::config("record.decimation must be at least 1"));
        }
        for w in self.events.windows(2) {
            if w[1].time < w[0].time {
                return Err(Error::config(format!(
                    "events must be sorted by time ({} s follows {} s)",
                    w[1].time, w[0].time
                )));
            }
        }
        for e in &self.events {
            if !(e.time.is_finite() && e.time >= 0.0 && e.time <= sv.t_end) {
                return Err(Error::config(format!("event {} at {} s lies outside [0, t_end]", e.kind.label(), e.time)));
            }
            if !e.value.is_finite() {
                return Err(Error::config(format!("event {} at {} s has a non-finite value", e.kind.label(), e.time)));
            }
            let allowed = match self.topology {
                Topology::GridSupport => e.kind == EventKind::SetLoad,
                _ => e.kind != EventKind::SetLoad,
            };
            if !allowed {
                return Err(Error::config(format!(
                    "event kind {} is not available on topology {}",
                    e.kind.label(),
                    self.topology.label()
                )));
            }
        }
        let sp = &self.setpoints;
        for (name, v) in [("p_ref", sp.p_ref), ("q_ref", sp.q_ref), ("vdc_ref", sp.vdc_ref), ("idc_ref", sp.idc_ref)] {
            if !v.is_finite() {
                return Err(Error::config(format!("setpoints.{name} must be finite")));
            }
        }
        let p = &self.params;
        self.stack()?;
        p.rectifier.ac.validate()?;
        if !(p.rectifier.c_dc1 > 0.0) {
            return Err(Error::config("rectifier.c_dc1 must be positive"));
        }
        p.buck.validate()?;
        p.rectifier_loss.validate()?;
        p.buck_loss.validate()?;
        let c = &p.control;
        for (name, v) in [
            ("current_bandwidth_hz", c.current_bandwidth_hz),
            ("dc_bandwidth_hz", c.dc_bandwidth_hz),
            ("link_bandwidth_hz", c.link_bandwidth_hz),
            ("link_zeta", c.link_zeta),
            ("buck_bandwidth_hz", c.buck_bandwidth_hz),
            ("pll_bandwidth_hz", c.pll_bandwidth_hz),
            ("pll_zeta", c.pll_zeta),
            ("i_limit", c.i_limit),
            ("loss_filter_tau", c.loss_filter_tau),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("control.{name} must be positive, got {v}")));
            }
        }
        let g = &p.grid;
        g.generator.validate()?;
        g.supervisor.validate()?;
        if !(g.turns_ratio > 0.0 && g.electrolyzer_tau >= 0.0 && g.load.s_nominal > 0.0 && g.load.ramp_pu_per_s > 0.0) {
            return Err(Error::config("grid turns_ratio, load base and ramp must be positive"));
        }
        if self.topology == Topology::GridSupport {
            crate::control::DelayLine::<f64>::steps_for(g.supervisor.telemetry_delay, sv.dt)?;
        }
        for w in &self.analysis.windows {
            if !(w.t_start < w.t_end && w.t_start >= 0.0 && w.t_end <= sv.t_end + 1e-12) {
                return Err(Error::config(format!("analysis window {} is outside the run", w.label)));
            }
        }
        for st in &self.analysis.settling {
            if !(st.band > 0.0 && st.t_event >= 0.0 && st.t_event <= sv.t_end) {
                return Err(Error::config(format!("settling spec for {} is invalid", st.channel)));
            }
        }
        let names = super::channel_names(self.topology);
        for ch in self.record.channels.iter().chain(self.analysis.settling.iter().map(|s| &s.channel)) {
            if !names.iter().any(|n| n == ch) {
                return Err(Error::config(format!(
                    "channel {ch} does not exist on topology {}",
                    self.topology.label()
                )));
            }
        }
        Ok(())
    }
}
