//! Scenario library reproducing the published figures.

use serde::{Deserialize, Serialize};

use crate::engine::calibration::{ac_no_dc_dc, ac_with_dc_dc};
use crate::engine::{ControlMode, Event, EventKind, Scenario, SettlingSpec, Topology, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetInfo {
    pub name: String,
    pub figure: String,
    pub description: String,
}

pub const PRESET_NAMES: [&str; 5] = ["fig8", "fig9", "fig11", "fig12", "fig14"];

fn window(label: &str, t_start: f64, t_end: f64) -> Window {
    Window { label: label.into(), t_start, t_end }
}

fn settle(channel: &str, t_event: f64) -> SettlingSpec {
    SettlingSpec { channel: channel.into(), t_event, band: 0.02 }
}

fn ev(time: f64, kind: EventKind, value: f64) -> Event {
    Event { time, kind, value }
}

fn no_dc_dc(name: &str, description: &str) -> Scenario {
    let mut s = Scenario::new(name, Topology::NoDcDc);
    s.description = description.into();
    s.params.rectifier.ac = ac_no_dc_dc();
    s
}

fn with_dc_dc(name: &str, description: &str) -> Scenario {
    let mut s = Scenario::new(name, Topology::WithDcDc);
    s.description = description.into();
    s.params.rectifier.ac = ac_with_dc_dc();
    s.setpoints.vdc_ref = 250.0;
    s
}

pub fn preset(name: &str) -> Result<Scenario> {
    let s = match name {
        "fig8" => {
            let mut s = no_dc_dc(
                "fig8",
                "Fig. 8: no DC/DC stage, 480/75 V, 2 kW with the stack just above its EMF",
            );
            s.setpoints.mode = ControlMode::PQ;
            s.setpoints.p_ref = 2e3;
            s.analysis.windows = vec![window("2 kW", 0.01, 0.05)];
            s
        }
        "fig9" => {
            let mut s = no_dc_dc(
                "fig9",
                "Fig. 9: no DC/DC stage, 480/75 V, Q = 50 kVAr, P step 200 kW -> 500 kW at 25 ms",
            );
            s.setpoints.p_ref = 200e3;
            s.setpoints.q_ref = 50e3;
            s.events = vec![ev(0.025, EventKind::SetP, 500e3)];
            s.analysis.windows = vec![window("200 kW", 0.005, 0.025), window("500 kW", 0.04, 0.05)];
            s.analysis.settling = vec![settle("p_ac_W", 0.025)];
            s
        }
        "fig11" => {
            let mut s = with_dc_dc(
                "fig11",
                "Fig. 11: with DC/DC stage, 480/125 V, 250 V DC link, 2 kW",
            );
            s.setpoints.p_ref = 2e3;
            s.analysis.windows = vec![window("2 kW", 0.01, 0.05)];
            s
        }
        "fig12" => {
            let mut s = with_dc_dc(
                "fig12",
                "Fig. 12: with DC/DC stage, 480/125 V, 250 V DC link, P step 200 kW -> 500 kW at 0.1 s",
            );
            s.setpoints.p_ref = 200e3;
            s.events = vec![ev(0.1, EventKind::SetP, 500e3)];
            s.solver.t_end = 1.6;
            s.record.decimation = 10;
            s.analysis.windows = vec![window("200 kW", 0.05, 0.1), window("500 kW", 1.4, 1.6)];
            s.analysis.settling = vec![settle("p_ac_W", 0.1), settle("i_stack_A", 0.1)];
            s
        }
        "fig14" => {
            let mut s = Scenario::new("fig14", Topology::GridSupport);
            s.description = "Fig. 14: 3 MVA generator, 400 kW dynamic-load step at 1 s, electrolyzer holds 1150 kW \
                             at the generation bus through 100 ms telemetry"
                .into();
            s.events = vec![ev(1.0, EventKind::SetLoad, 900e3)];
            s.record.decimation = 10;
            s.analysis.windows = vec![window("before", 0.5, 1.0), window("after", 8.0, 10.0)];
            s.analysis.settling = vec![settle("p_gen_W", 1.0), settle("p_elz_W", 1.0)];
            s
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other}; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(s)
}

pub fn catalog() -> Vec<PresetInfo> {
    PRESET_NAMES
        .iter()
        .map(|n| {
            let s = preset(n).expect("preset exists");
            let figure = s.description.split(':').next().unwrap_or_default().to_string();
            PresetInfo { name: (*n).to_string(), figure, description: s.description }
        })
        .collect()
}
