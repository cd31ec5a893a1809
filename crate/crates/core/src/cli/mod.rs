//! Command-line front end: `run`, `list-presets` and `validate`.

pub mod presets;

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::engine::{simulate, Scenario, Settling, Simulation, Topology, Trace};
use crate::error::{Error, Result};

pub use presets::{catalog, preset, PresetInfo, PRESET_NAMES};

pub const OUT_ENV: &str = "PEMSIM_OUT";
pub const DEFAULT_OUT: &str = "pemsim-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Preset(String),
    File(PathBuf),
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::Preset(name) => preset(name),
            ScenarioSource::File(path) => Scenario::from_path(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub source: ScenarioSource,
    pub out_dir: PathBuf,
    pub format: Format,
    pub strict: bool,
    pub dt: Option<f64>,
}

impl RunRequest {
    pub fn preset(name: &str, out_dir: impl Into<PathBuf>) -> Self {
        RunRequest {
            source: ScenarioSource::Preset(name.into()),
            out_dir: out_dir.into(),
            format: Format::Csv,
            strict: false,
            dt: None,
        }
    }

    /// The scenario after applying the request's overrides.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut sc = self.source.load()?;
        if let Some(dt) = self.dt {
            sc = sc.with_dt(dt);
        }
        if self.strict {
            sc = sc.with_strict(true);
        }
        Ok(sc)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub simulation: Simulation,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Run a request, write its files and build the summary.
pub fn execute(req: &RunRequest) -> Result<RunOutcome> {
    let sc = req.scenario()?;
    let started = Instant::now();
    let sim = simulate(&sc)?;
    let elapsed = started.elapsed().as_secs_f64();
    let dir = req.out_dir.join(&sc.name);
    let files = write_outputs(&dir, &sc, &sim, req.format)?;
    let summary = summary(&sc, &sim, elapsed, &files);
    Ok(RunOutcome { simulation: sim, dir, files, summary })
}

/// Run a request and report it; returns the process exit code.
pub fn run(req: &RunRequest) -> i32 {
    match execute(req) {
        Ok(out) => {
            emit(&out.summary);
            0
        }
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

/// Parse and validate a scenario file.
pub fn validate(path: &Path) -> Result<Scenario> {
    let sc = Scenario::from_path(path)?;
    sc.validate()?;
    Ok(sc)
}

/// Machine-readable preset entry: catalog data plus the full scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetListing {
    #[serde(flatten)]
    pub info: PresetInfo,
    pub scenario: Scenario,
}

pub fn list_presets() -> Vec<PresetListing> {
    catalog()
        .into_iter()
        .map(|info| {
            let scenario = preset(&info.name).expect("catalog names are presets");
            PresetListing { info, scenario }
        })
        .collect()
}

pub fn list_presets_json() -> Result<String> {
    serde_json::to_string_pretty(&list_presets()).map_err(|e| Error::config(e.to_string()))
}

pub fn list_presets_text() -> String {
    let mut s = String::new();
    for p in catalog() {
        let _ = writeln!(s, "{:<6}  {}", p.name, p.description);
    }
    s
}

/// Panel layout of the figure scopes, as channel groups.
pub fn panels(topology: Topology) -> Vec<(&'static str, Vec<&'static str>)> {
    match topology {
        Topology::NoDcDc => vec![
            ("grid_currents", vec!["i_a_A", "i_b_A", "i_c_A"]),
            ("grid_power", vec!["p_ac_W", "q_ac_VAr", "p_ref_W", "q_ref_VAr"]),
            ("stack", vec!["v_stack_V", "i_stack_A", "p_stack_W"]),
        ],
        Topology::WithDcDc => vec![
            ("grid_currents", vec!["i_a_A", "i_b_A", "i_c_A"]),
            ("grid_power", vec!["p_ac_W", "q_ac_VAr", "p_ref_W", "q_ref_VAr"]),
            ("dc_link", vec!["v_link_V", "v_link_ref_V", "i_buck_A", "duty_pu"]),
            ("stack", vec!["v_stack_V", "i_stack_A", "p_stack_W"]),
        ],
        Topology::GridSupport => vec![
            ("generation", vec!["p_gen_W", "p_load_W", "p_elz_W", "p_elz_ref_W"]),
            ("frequency", vec!["f_Hz"]),
            ("stack", vec!["p_stack_W", "i_stack_A"]),
        ],
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    trace.write_csv(BufWriter::new(fs::File::create(path)?))
}

fn write_outputs(dir: &Path, sc: &Scenario, sim: &Simulation, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let trace_path = match format {
        Format::Csv => {
            let p = dir.join("trace.csv");
            write_trace_csv(&p, &sim.trace)?;
            p
        }
        Format::Json => {
            let p = dir.join("trace.json");
            let text = serde_json::to_string(&sim.trace).map_err(|e| Error::config(e.to_string()))?;
            write_file(&p, &text)?;
            p
        }
    };
    files.push(trace_path);

    let metrics = dir.join("metrics.json");
    let text = serde_json::to_string_pretty(&sim.metrics).map_err(|e| Error::config(e.to_string()))?;
    write_file(&metrics, &text)?;
    files.push(metrics);

    let scenario = dir.join("scenario.toml");
    write_file(&scenario, &sc.to_toml_string()?)?;
    files.push(scenario);

    let panel_dir = dir.join("panels");
    fs::create_dir_all(&panel_dir)?;
    for (name, channels) in panels(sc.topology) {
        let present: Vec<String> =
            channels.iter().filter(|c| sim.trace.channel(c).is_some()).map(|c| c.to_string()).collect();
        if present.is_empty() {
            continue;
        }
        let mut panel = sim.trace.clone();
        panel.select(&present)?;
        let p = panel_dir.join(format!("{name}.csv"));
        write_trace_csv(&p, &panel)?;
        files.push(p);
    }
    Ok(files)
}

const SUMMARY_CHANNELS: &[&str] = &[
    "p_ac_W",
    "q_ac_VAr",
    "v_link_V",
    "v_stack_V",
    "i_stack_A",
    "p_stack_W",
    "p_gen_W",
    "p_load_W",
    "p_elz_W",
    "f_Hz",
];

fn summary(sc: &Scenario, sim: &Simulation, elapsed: f64, files: &[PathBuf]) -> String {
    let m = &sim.metrics;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} [{}]  {} steps of {} s in {:.2} s",
        sc.name,
        sc.topology.label(),
        m.steps,
        sc.solver.dt,
        elapsed
    );
    if !sc.description.is_empty() {
        let _ = writeln!(s, "  {}", sc.description);
    }
    for w in &m.windows {
        let _ = write!(s, "  window {} [{}, {}] s:", w.label, w.t_start, w.t_end);
        for name in SUMMARY_CHANNELS {
            if let Some(c) = w.channels.get(*name) {
                let _ = write!(s, " {name}={:.3}", c.mean);
            }
        }
        if let Some(eta) = w.efficiency {
            let _ = write!(s, " efficiency={:.5}", eta);
        }
        let _ = writeln!(s);
    }
    for r in &m.settling {
        let settled = match r.settling {
            Settling::Settled { seconds } => format!("{:.3} ms", seconds * 1e3),
            Settling::NotSettled => "not settled".into(),
        };
        let _ = write!(s, "  settling {} after {} s ({}% band): {settled}", r.channel, r.t_event, r.band * 100.0);
        if let Some(os) = r.overshoot {
            let _ = write!(s, ", overshoot {:.1}%", os * 100.0);
        }
        let _ = writeln!(s);
    }
    if let Some(f) = &m.frequency {
        let rec = match f.recovery {
            Settling::Settled { seconds } => format!("within {} Hz after {:.3} s", f.tolerance_hz, seconds),
            Settling::NotSettled => format!("not back within {} Hz", f.tolerance_hz),
        };
        let _ = writeln!(
            s,
            "  frequency: nadir {:.4} Hz at {:.3} s, peak {:.4} Hz, final {:.4} Hz, {rec}",
            f.nadir_hz, f.t_nadir, f.peak_hz, f.final_hz
        );
    }
    let _ = writeln!(
        s,
        "  energy residual {:.2e}, max modulation {:.4}",
        m.max_energy_residual, m.max_modulation
    );
    if m.violations.is_empty() {
        let _ = writeln!(s, "  violations: none");
    } else {
        let _ = writeln!(s, "  violations: {}", m.violations.len());
        for v in m.violations.iter().take(5) {
            let _ = writeln!(s, "    {v}");
        }
        if m.violations.len() > 5 {
            let _ = writeln!(s, "    ...");
        }
    }
    for f in files {
        let _ = writeln!(s, "  wrote {}", f.display());
    }
    s
}

#[derive(Debug, Parser)]
#[command(name = "pemsim", version, about = "Grid-connected PEM electrolyzer power-conversion simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a preset or a scenario file.
    Run(RunArgs),
    /// Show the figure presets.
    ListPresets {
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Check a scenario file without running it.
    Validate { file: PathBuf },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub preset: Option<String>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    /// Override the solver step in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Abort on boost-limit, current-limit and infeasible-reference violations.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl RunArgs {
    pub fn request(&self) -> RunRequest {
        let source = match (&self.preset, &self.scenario) {
            (Some(p), _) => ScenarioSource::Preset(p.clone()),
            (None, Some(f)) => ScenarioSource::File(f.clone()),
            (None, None) => unreachable!("clap requires one source"),
        };
        RunRequest { source, out_dir: self.out.clone(), format: self.format, strict: self.strict, dt: self.dt }
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match cli.command {
        Command::Run(args) => run(&args.request()),
        Command::ListPresets { format } => match format.unwrap_or(Format::Csv) {
            Format::Json => match list_presets_json() {
                Ok(text) => {
                    emit(&format!("{text}\n"));
                    0
                }
                Err(e) => report(&e),
            },
            Format::Csv => {
                emit(&list_presets_text());
                0
            }
        },
        Command::Validate { file } => match validate(&file) {
            Ok(sc) => {
                emit(&format!(
                    "{}: ok ({} [{}], {} steps, {} events)\n",
                    file.display(),
                    sc.name,
                    sc.topology.label(),
                    sc.n_steps(),
                    sc.events.len()
                ));
                0
            }
            Err(e) => report(&e),
        },
    }
}
