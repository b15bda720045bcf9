//! Scenario files.
//!
//! ```text
//! bcfg-scenario v1
//! # comments start with '#'
//! [scenario]
//! name = square
//! dimension = 3
//! masses = 1, 1, 1, 1
//!
//! [initial]
//! preset = square            # or: preset = explicit, coords = x, y, z, ...
//!
//! [interval]
//! s_min = 1.000000001
//! s_max = 10
//!
//! [settings]                 # optional, any subset
//! delta = 0.01
//! ```
//!
//! Recognised settings: `delta`, `newton_tol`, `max_newton_iters`,
//! `max_steps`, `collision_tol`, `epsilon_switch`, `delta_s_switch`.

use crate::continuation::ContinuationSettings;
use crate::error::{Error, Result};
use crate::potential::{Configuration, Masses};
use crate::presets::{self, Preset};
use std::fmt::Write as _;

pub const HEADER: &str = "bcfg-scenario v1";

const BUILTIN: [(&str, &str); 9] = [
    ("square", include_str!("../scenarios/square.scn")),
    ("triangle", include_str!("../scenarios/triangle.scn")),
    ("triangle_center", include_str!("../scenarios/triangle_center.scn")),
    (
        "triangle_center_critical",
        include_str!("../scenarios/triangle_center_critical.scn"),
    ),
    ("square_center", include_str!("../scenarios/square_center.scn")),
    ("collinear_equal", include_str!("../scenarios/collinear_equal.scn")),
    ("collinear_09", include_str!("../scenarios/collinear_09.scn")),
    ("collinear_05", include_str!("../scenarios/collinear_05.scn")),
    ("collinear_02", include_str!("../scenarios/collinear_02.scn")),
];

/// Names of the scenarios shipped with the crate.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

/// Text of a shipped scenario.
pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub masses: Vec<f64>,
    pub dimension: usize,
    pub initial: Preset,
    pub s_interval: (f64, f64),
    /// Solver settings; `s_min`/`s_max` mirror `s_interval`.
    pub settings: ContinuationSettings,
}

impl ScenarioSpec {
    pub fn masses(&self) -> Result<Masses> {
        Masses::new(self.masses.clone())
    }

    /// The starting configuration described by the preset.
    pub fn initial_configuration(&self) -> Result<Configuration> {
        presets::preset_configuration(&self.initial, &self.masses()?, self.dimension)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        {
            return Err(Error::Validation(format!(
                "scenario name {:?} must be non-empty ASCII letters, digits, '_', '-' or '.'",
                self.name
            )));
        }
        Masses::new(self.masses.clone())?;
        if !(self.dimension == 2 || self.dimension == 3) {
            return Err(Error::Validation(format!(
                "dimension must be 2 or 3, got {}",
                self.dimension
            )));
        }
        if let Some(n) = self.initial.bodies() {
            if n != self.masses.len() {
                return Err(Error::Validation(format!(
                    "preset {} needs {n} masses, got {}",
                    self.initial,
                    self.masses.len()
                )));
            }
        }
        if let Some(d) = self.initial.dimension() {
            if d != self.dimension {
                return Err(Error::Validation(format!(
                    "preset {} needs dimension {d}, got {}",
                    self.initial, self.dimension
                )));
            }
        }
        if let Preset::Explicit(coords) = &self.initial {
            let q = Configuration::new(self.dimension, coords.clone())?;
            if q.n() != self.masses.len() {
                return Err(Error::Validation(format!(
                    "explicit coordinates describe {} bodies, {} masses given",
                    q.n(),
                    self.masses.len()
                )));
            }
            q.check_collisions()
                .map_err(|e| Error::Validation(format!("explicit coordinates: {e}")))?;
        }
        let (a, b) = self.s_interval;
        if !(a >= 1.0 && a < b && b.is_finite()) {
            return Err(Error::Validation(format!(
                "interval must satisfy 1 <= s_min < s_max, got [{a}, {b}]"
            )));
        }
        self.settings.validate()
    }

    /// Applies `key=value`. Keys are setting names, `s_min`, `s_max`,
    /// `masses` or `name`, optionally prefixed by their section
    /// (`settings.delta`).
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.rsplit('.').next().unwrap_or(key).trim();
        let value = value.trim();
        let bad = |msg: String| Error::Validation(format!("override {key}={value}: {msg}"));
        match key {
            "name" => self.name = value.to_string(),
            "masses" => self.masses = parse_list(value).map_err(bad)?,
            "s_min" => self.s_interval.0 = parse_f64(value).map_err(bad)?,
            "s_max" => self.s_interval.1 = parse_f64(value).map_err(bad)?,
            _ => {
                if !set_setting(&mut self.settings, key, value).map_err(bad)? {
                    return Err(Error::Validation(format!("unknown override key {key:?}")));
                }
            }
        }
        self.settings.s_min = self.s_interval.0;
        self.settings.s_max = self.s_interval.1;
        self.validate()
    }

    /// Canonical text; `load_scenario(spec.serialize())` reproduces `spec`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "\n[scenario]");
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "dimension = {}", self.dimension);
        let _ = writeln!(out, "masses = {}", list(&self.masses));
        let _ = writeln!(out, "\n[initial]");
        let _ = writeln!(out, "preset = {}", self.initial.name());
        if let Preset::Explicit(coords) = &self.initial {
            let _ = writeln!(out, "coords = {}", list(coords));
        }
        out.push_str(&settings_text(&self.settings));
        out
    }
}

/// The `[interval]` and `[settings]` sections for `settings`; also the
/// input of the settings hash stored in branch records.
pub fn settings_text(s: &ContinuationSettings) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\n[interval]");
    let _ = writeln!(out, "s_min = {:?}", s.s_min);
    let _ = writeln!(out, "s_max = {:?}", s.s_max);
    let _ = writeln!(out, "\n[settings]");
    let _ = writeln!(out, "delta = {:?}", s.delta);
    let _ = writeln!(out, "newton_tol = {:?}", s.newton_tol);
    let _ = writeln!(out, "max_newton_iters = {}", s.max_newton_iters);
    let _ = writeln!(out, "max_steps = {}", s.max_steps);
    let _ = writeln!(out, "collision_tol = {:?}", s.collision_tol);
    let _ = writeln!(out, "epsilon_switch = {:?}", s.epsilon_switch);
    let _ = writeln!(out, "delta_s_switch = {:?}", s.delta_s_switch);
    out
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("not a number: {v:?}"))
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("not a non-negative integer: {v:?}"))
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|x| parse_f64(x.trim())).collect()
}

/// Returns `Ok(false)` for an unknown key.
fn set_setting(s: &mut ContinuationSettings, key: &str, value: &str) -> std::result::Result<bool, String> {
    match key {
        "delta" => s.delta = parse_f64(value)?,
        "newton_tol" => s.newton_tol = parse_f64(value)?,
        "max_newton_iters" => s.max_newton_iters = parse_usize(value)?,
        "max_steps" => s.max_steps = parse_usize(value)?,
        "collision_tol" => s.collision_tol = parse_f64(value)?,
        "epsilon_switch" => s.epsilon_switch = parse_f64(value)?,
        "delta_s_switch" => s.delta_s_switch = parse_f64(value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Scenario,
    Initial,
    Interval,
    Settings,
}

/// Parses and validates a scenario, filling defaults.
pub fn load_scenario(text: &str) -> Result<ScenarioSpec> {
    let perr = |line: usize, message: String| Error::Parse { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = lines
        .by_ref()
        .map(|(i, l)| (i, strip_comment(l)))
        .find(|(_, l)| !l.is_empty());
    match header {
        Some((_, l)) if l == HEADER => {}
        Some((i, l)) => return Err(perr(i, format!("expected header {HEADER:?}, found {l:?}"))),
        None => return Err(perr(1, "empty scenario".into())),
    }

    let mut section = Section::None;
    let mut name = None;
    let mut dimension = None;
    let mut masses = None;
    let mut preset: Option<Preset> = None;
    let mut coords: Option<Vec<f64>> = None;
    let mut interval = (1.0 + 1e-9, 10.0);
    let mut settings = ContinuationSettings::default();

    for (line, raw) in lines {
        let l = strip_comment(raw);
        if l.is_empty() {
            continue;
        }
        if let Some(inner) = l.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| perr(line, format!("malformed section header {l:?}")))?;
            section = match inner.trim() {
                "scenario" => Section::Scenario,
                "initial" => Section::Initial,
                "interval" => Section::Interval,
                "settings" => Section::Settings,
                other => return Err(perr(line, format!("unknown section [{other}]"))),
            };
            continue;
        }
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| perr(line, format!("expected key = value, found {l:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        match (section, key) {
            (Section::Scenario, "name") => name = Some(value.to_string()),
            (Section::Scenario, "dimension") => dimension = Some(at(line, key, parse_usize(value))?),
            (Section::Scenario, "masses") => masses = Some(at(line, key, parse_list(value))?),
            (Section::Initial, "preset") => {
                preset = Some(
                    value
                        .parse::<Preset>()
                        .map_err(|_| perr(line, format!("unknown preset {value:?}")))?,
                )
            }
            (Section::Initial, "coords") => coords = Some(at(line, key, parse_list(value))?),
            (Section::Interval, "s_min") => interval.0 = at(line, key, parse_f64(value))?,
            (Section::Interval, "s_max") => interval.1 = at(line, key, parse_f64(value))?,
            (Section::Settings, _) => {
                if !at(line, key, set_setting(&mut settings, key, value))? {
                    return Err(perr(line, format!("unknown setting {key:?}")));
                }
            }
            (Section::None, _) => return Err(perr(line, "key outside any section".into())),
            _ => return Err(perr(line, format!("unknown key {key:?} in this section"))),
        }
    }

    let missing = |what: &str| Error::Validation(format!("missing {what}"));
    let mut initial = preset.ok_or_else(|| missing("[initial] preset"))?;
    match (&mut initial, coords) {
        (Preset::Explicit(c), Some(v)) => *c = v,
        (Preset::Explicit(_), None) => return Err(missing("[initial] coords for explicit preset")),
        (_, Some(_)) => {
            return Err(Error::Validation("coords are only allowed with preset = explicit".into()))
        }
        _ => {}
    }
    settings.s_min = interval.0;
    settings.s_max = interval.1;
    let spec = ScenarioSpec {
        name: name.ok_or_else(|| missing("[scenario] name"))?,
        masses: masses.ok_or_else(|| missing("[scenario] masses"))?,
        dimension: dimension.ok_or_else(|| missing("[scenario] dimension"))?,
        initial,
        s_interval: interval,
        settings,
    };
    spec.validate()?;
    Ok(spec)
}

fn at<T>(line: usize, key: &str, r: std::result::Result<T, String>) -> Result<T> {
    r.map_err(|m| Error::Parse {
        line,
        message: format!("{key}: {m}"),
    })
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}
