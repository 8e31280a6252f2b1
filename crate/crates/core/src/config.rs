//! Scenario files: line-oriented `key = value` pairs plus `event` lines.
//!
//! ```text
//! # comment
//! gamma = 4
//! omega = 1
//! alpha = 100
//! c = 10000
//! event control_step t=16800 h=0.41421356237309515
//! event rf t=16840 area=0.7853981633974483 phase=0
//! ```
//!
//! Angles are in radians; times and lengths are in the dimensionless units
//! set by the initial control Rabi frequency.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::physics::{validate_params, PhysicalParams};
use crate::pulse::{PulseEnvelope, PulseShape};
use crate::solver::{ControlStep, EventSchedule, MarchOptions, RfEvent, RfMode, RfTiming, Sampling, SimGrid, ZScheme};

const REQUIRED: [&str; 4] = ["gamma", "omega", "alpha", "c"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutputFlags {
    pub field: bool,
    pub spin: bool,
    pub metrics: bool,
    pub oracle: bool,
}

impl Default for OutputFlags {
    fn default() -> Self {
        Self { field: true, spin: true, metrics: true, oracle: false }
    }
}

/// How much of the run is kept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoreSettings {
    /// Approximate number of stored z slices.
    pub z_samples: usize,
    /// Approximate number of stored τ samples outside the event windows.
    pub tau_samples: usize,
    /// Length of the full-resolution window stored after each event.
    pub fine_after: f64,
}

impl Default for StoreSettings {
    fn default() -> Self {
        Self { z_samples: 192, tau_samples: 4000, fine_after: 20.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub params: PhysicalParams,
    pub grid: SimGrid,
    pub input: PulseEnvelope,
    pub schedule: EventSchedule,
    pub outputs: OutputFlags,
    /// Standard deviation of the optional Gaussian post-filter; 0 disables it.
    pub broadening: f64,
    pub store: StoreSettings,
    pub scheme: ZScheme,
    pub rf_timing: RfTiming,
    pub rf_mode: RfMode,
}

impl ScenarioConfig {
    /// Physical and structural checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        self.input.check()?;
        validate_params(&self.params, self.input.bandwidth())?;
        if self.input.psi_max > 0.1 * self.params.omega0 {
            return Err(Error::InvalidParams(format!(
                "input peak {} must not exceed 0.1 * omega = {} (weak probe)",
                self.input.psi_max,
                0.1 * self.params.omega0
            )));
        }
        if !(self.broadening >= 0.0) {
            return Err(Error::InvalidParams(format!("broadening must be non-negative, got {}", self.broadening)));
        }
        self.grid.check_shape()?;
        self.schedule.validate(&self.params, &self.input)
    }

    /// Solver options with sampling derived from the store settings.
    pub fn march_options(&self) -> Result<MarchOptions> {
        let sampling = Sampling::auto(
            &self.grid,
            &self.schedule,
            self.store.z_samples,
            self.store.tau_samples,
            self.store.fine_after,
        )?;
        Ok(MarchOptions {
            scheme: self.scheme,
            rf_timing: self.rf_timing,
            rf_mode: self.rf_mode,
            sampling: Some(sampling),
            strict_grid: true,
        })
    }
}

/// The canonical scenario: the pulse is halved in duration and doubled in
/// intensity by a control step, split by an area-π/4 rf pulse, stored, and
/// read back by an area-3π/2 rf pulse.
pub fn fig1() -> ScenarioConfig {
    let params = PhysicalParams::default();
    let t_p = 4000.0;
    let t1 = 16800.0;
    ScenarioConfig {
        params,
        grid: SimGrid { l_s: 144.0, dz: 0.375, tau_span: (0.0, 35200.0), dtau: 0.025 },
        input: PulseEnvelope::gaussian(0.05, 10400.0, t_p),
        schedule: EventSchedule {
            control_step: Some(ControlStep { t1, h: params.h }),
            rf_events: vec![RfEvent::new(t1 + 40.0, FRAC_PI_4), RfEvent::new(t1 + 2.2 * t_p, 1.5 * PI)],
        },
        outputs: OutputFlags::default(),
        broadening: 0.0,
        store: StoreSettings::default(),
        scheme: ZScheme::Bdf2,
        rf_timing: RfTiming::Retarded,
        rf_mode: RfMode::Instantaneous,
    }
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "fig1" => Some(fig1()),
        _ => None,
    }
}

/// Text of a named preset, with a header describing the units.
pub fn preset_text(name: &str) -> Option<String> {
    let config = preset(name)?;
    let mut out = String::new();
    out.push_str("# slowlight scenario: ");
    out.push_str(name);
    out.push('\n');
    out.push_str("# units: initial control Rabi frequency = 1; times in 1/omega, lengths such that\n");
    out.push_str("# alpha is a rate per unit length; angles in radians\n");
    out.push_str(&serialize(&config));
    Some(out)
}

fn bool_text(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn scheme_name(s: ZScheme) -> &'static str {
    match s {
        ZScheme::Bdf2 => "bdf2",
        ZScheme::Midpoint => "midpoint",
        ZScheme::Euler => "euler",
    }
}

/// Writes every field explicitly, so the result parses back to the same value.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    let p = &cfg.params;
    let g = &cfg.grid;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("gamma", p.gamma.to_string());
    kv("omega", p.omega0.to_string());
    kv("alpha", p.alpha.to_string());
    kv("c", p.c.to_string());
    kv("p_rf", p.p_rf.to_string());
    kv("tau_rf", p.tau_rf.to_string());
    kv("l_s", g.l_s.to_string());
    kv("dz", g.dz.to_string());
    kv("tau_min", g.tau_span.0.to_string());
    kv("tau_max", g.tau_span.1.to_string());
    kv("dtau", g.dtau.to_string());
    kv("input.shape", cfg.input.shape.name().to_string());
    kv("input.peak", cfg.input.psi_max.to_string());
    kv("input.center", cfg.input.t_center.to_string());
    kv("input.fwhm", cfg.input.t_p1.to_string());
    if let PulseShape::Samples { t0, dt, values } = &cfg.input.shape {
        kv("input.t0", t0.to_string());
        kv("input.dt", dt.to_string());
        kv("input.samples", values.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    }
    kv("output.field", bool_text(cfg.outputs.field).into());
    kv("output.spin", bool_text(cfg.outputs.spin).into());
    kv("output.metrics", bool_text(cfg.outputs.metrics).into());
    kv("output.oracle", bool_text(cfg.outputs.oracle).into());
    kv("broadening", cfg.broadening.to_string());
    kv("store.z_samples", cfg.store.z_samples.to_string());
    kv("store.tau_samples", cfg.store.tau_samples.to_string());
    kv("store.fine_after", cfg.store.fine_after.to_string());
    kv("solver.scheme", scheme_name(cfg.scheme).into());
    kv(
        "solver.rf_timing",
        match cfg.rf_timing {
            RfTiming::Retarded => "retarded",
            RfTiming::Uniform => "uniform",
        }
        .into(),
    );
    match cfg.rf_mode {
        RfMode::Instantaneous => kv("solver.rf_mode", "instant".into()),
        RfMode::Finite { steps } => {
            kv("solver.rf_mode", "finite".into());
            kv("solver.rf_steps", steps.to_string());
        }
    }
    if let Some(step) = cfg.schedule.control_step {
        let _ = writeln!(s, "event control_step t={} h={}", step.t1, step.h);
    }
    for ev in &cfg.schedule.rf_events {
        let _ = writeln!(s, "event rf t={} area={} phase={}", ev.time, ev.area, ev.phase);
    }
    s
}

fn syntax(line: usize, reason: impl Into<String>) -> Error {
    Error::Syntax { line, reason: reason.into() }
}

fn number(line: usize, key: &str, text: &str) -> Result<f64> {
    let v: f64 = text.trim().parse().map_err(|_| syntax(line, format!("`{key}` needs a number, got `{text}`")))?;
    if !v.is_finite() {
        return Err(syntax(line, format!("`{key}` must be finite")));
    }
    Ok(v)
}

fn count(line: usize, key: &str, text: &str) -> Result<usize> {
    text.trim().parse().map_err(|_| syntax(line, format!("`{key}` needs a non-negative integer, got `{text}`")))
}

fn flag(line: usize, key: &str, text: &str) -> Result<bool> {
    match text.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(syntax(line, format!("`{key}` needs true or false, got `{other}`"))),
    }
}

/// Parses a scenario document. Physical consistency is not checked here.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut step: Option<ControlStep> = None;
    let mut rf = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix("event") {
            if !rest.starts_with(char::is_whitespace) {
                return Err(syntax(line, "expected `event <type> key=value ...`"));
            }
            let mut words = rest.split_whitespace();
            let kind = words.next().ok_or_else(|| syntax(line, "event without a type"))?;
            let mut fields: BTreeMap<&str, f64> = BTreeMap::new();
            for word in words {
                let (k, v) =
                    word.split_once('=').ok_or_else(|| syntax(line, format!("expected key=value, got `{word}`")))?;
                if fields.insert(k, number(line, k, v)?).is_some() {
                    return Err(Error::DuplicateKey(format!("event {kind} {k}")));
                }
            }
            let mut take = |k: &str| fields.remove(k);
            match kind {
                "control_step" => {
                    if step.is_some() {
                        return Err(Error::DuplicateKey("event control_step".into()));
                    }
                    let t1 = take("t").ok_or_else(|| Error::MissingRequired("event control_step t".into()))?;
                    let h = take("h").ok_or_else(|| Error::MissingRequired("event control_step h".into()))?;
                    step = Some(ControlStep { t1, h });
                }
                "rf" => {
                    let time = take("t").ok_or_else(|| Error::MissingRequired("event rf t".into()))?;
                    let area = take("area").ok_or_else(|| Error::MissingRequired("event rf area".into()))?;
                    let phase = take("phase").unwrap_or(0.0);
                    rf.push(RfEvent { time, area, phase });
                }
                other => return Err(syntax(line, format!("unknown event type `{other}`"))),
            }
            if let Some(k) = fields.keys().next() {
                return Err(Error::UnknownKey(format!("event {kind} {k}")));
            }
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| syntax(line, "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(syntax(line, format!("malformed key `{key}`")));
        }
        if values.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
            return Err(Error::DuplicateKey(key.to_string()));
        }
    }

    for key in REQUIRED {
        if !values.contains_key(key) {
            return Err(Error::MissingRequired(key.to_string()));
        }
    }

    let mut cfg = fig1();
    cfg.schedule = EventSchedule { control_step: step, rf_events: rf };
    cfg.params.h = step.map_or(0.0, |s| s.h);
    let mut shape = "gaussian".to_string();
    let mut samples: Option<(usize, String)> = None;
    let (mut t0, mut dt) = (0.0, 1.0);
    let mut rf_mode = "instant".to_string();
    let mut rf_steps = 64usize;

    for (key, (line, value)) in &values {
        let line = *line;
        let num = || number(line, key, value);
        match key.as_str() {
            "gamma" => cfg.params.gamma = num()?,
            "omega" => cfg.params.omega0 = num()?,
            "alpha" => cfg.params.alpha = num()?,
            "c" => cfg.params.c = num()?,
            "p_rf" => cfg.params.p_rf = num()?,
            "tau_rf" => cfg.params.tau_rf = num()?,
            "l_s" => cfg.grid.l_s = num()?,
            "dz" => cfg.grid.dz = num()?,
            "tau_min" => cfg.grid.tau_span.0 = num()?,
            "tau_max" => cfg.grid.tau_span.1 = num()?,
            "dtau" => cfg.grid.dtau = num()?,
            "input.shape" => shape = value.clone(),
            "input.peak" => cfg.input.psi_max = num()?,
            "input.center" => cfg.input.t_center = num()?,
            "input.fwhm" => cfg.input.t_p1 = num()?,
            "input.t0" => t0 = num()?,
            "input.dt" => dt = num()?,
            "input.samples" => samples = Some((line, value.clone())),
            "output.field" => cfg.outputs.field = flag(line, key, value)?,
            "output.spin" => cfg.outputs.spin = flag(line, key, value)?,
            "output.metrics" => cfg.outputs.metrics = flag(line, key, value)?,
            "output.oracle" => cfg.outputs.oracle = flag(line, key, value)?,
            "broadening" => cfg.broadening = num()?,
            "store.z_samples" => cfg.store.z_samples = count(line, key, value)?,
            "store.tau_samples" => cfg.store.tau_samples = count(line, key, value)?,
            "store.fine_after" => cfg.store.fine_after = num()?,
            "solver.scheme" => {
                cfg.scheme = match value.as_str() {
                    "bdf2" => ZScheme::Bdf2,
                    "midpoint" => ZScheme::Midpoint,
                    "euler" => ZScheme::Euler,
                    other => return Err(syntax(line, format!("unknown scheme `{other}`"))),
                }
            }
            "solver.rf_timing" => {
                cfg.rf_timing = match value.as_str() {
                    "retarded" => RfTiming::Retarded,
                    "uniform" => RfTiming::Uniform,
                    other => return Err(syntax(line, format!("unknown rf timing `{other}`"))),
                }
            }
            "solver.rf_mode" => rf_mode = value.clone(),
            "solver.rf_steps" => rf_steps = count(line, key, value)?,
            _ => return Err(Error::UnknownKey(key.clone())),
        }
    }

    cfg.rf_mode = match rf_mode.as_str() {
        "instant" => RfMode::Instantaneous,
        "finite" => RfMode::Finite { steps: rf_steps },
        other => {
            let line = values.get("solver.rf_mode").map_or(0, |v| v.0);
            return Err(syntax(line, format!("unknown rf mode `{other}`")));
        }
    };
    cfg.input.shape = match shape.as_str() {
        "gaussian" => PulseShape::Gaussian,
        "sech" => PulseShape::Sech,
        "samples" => {
            let (line, text) = samples.ok_or_else(|| Error::MissingRequired("input.samples".into()))?;
            let values = text.split(',').map(|v| number(line, "input.samples", v)).collect::<Result<Vec<f64>>>()?;
            PulseShape::Samples { t0, dt, values }
        }
        other => {
            let line = values.get("input.shape").map_or(0, |v| v.0);
            return Err(syntax(line, format!("unknown input shape `{other}`")));
        }
    };
    Ok(cfg)
}

/// Sets one numeric setting by name; used by parameter sweeps. Besides the
/// scalar config keys this accepts `t1`, `h` and `rf<N>.time|area|phase`
/// (N counted from 1).
pub fn set_value(cfg: &mut ScenarioConfig, key: &str, v: f64) -> Result<()> {
    match key {
        "gamma" => cfg.params.gamma = v,
        "omega" => cfg.params.omega0 = v,
        "alpha" => cfg.params.alpha = v,
        "c" => cfg.params.c = v,
        "p_rf" => cfg.params.p_rf = v,
        "tau_rf" => cfg.params.tau_rf = v,
        "l_s" => cfg.grid.l_s = v,
        "dz" => cfg.grid.dz = v,
        "tau_min" => cfg.grid.tau_span.0 = v,
        "tau_max" => cfg.grid.tau_span.1 = v,
        "dtau" => cfg.grid.dtau = v,
        "input.peak" => cfg.input.psi_max = v,
        "input.center" => cfg.input.t_center = v,
        "input.fwhm" => cfg.input.t_p1 = v,
        "broadening" => cfg.broadening = v,
        "t1" | "h" => {
            let step = cfg
                .schedule
                .control_step
                .as_mut()
                .ok_or_else(|| Error::InvalidSchedule(format!("`{key}` needs a control step")))?;
            if key == "t1" {
                step.t1 = v;
            } else {
                step.h = v;
                cfg.params.h = v;
            }
        }
        _ => {
            let (head, field) = key.split_once('.').ok_or_else(|| Error::UnknownKey(key.to_string()))?;
            let index: usize = head
                .strip_prefix("rf")
                .and_then(|n| n.parse().ok())
                .filter(|&n| n >= 1)
                .ok_or_else(|| Error::UnknownKey(key.to_string()))?;
            let ev = cfg
                .schedule
                .rf_events
                .get_mut(index - 1)
                .ok_or_else(|| Error::InvalidSchedule(format!("no rf event number {index}")))?;
            match field {
                "time" => ev.time = v,
                "area" => ev.area = v,
                "phase" => ev.phase = v,
                _ => return Err(Error::UnknownKey(key.to_string())),
            }
        }
    }
    Ok(())
}
