//! Run configuration files.
//!
//! A configuration is a TOML document:
//!
//! ```toml
//! solver = "both"
//! out = "results"
//!
//! [model]
//! eps_bar0 = 0.0
//! omega = 0.2
//! lambda_over_omega = 1.5
//! gamma = 0.025
//! temperature = 0.025
//!
//! [drive]
//! amplitude = 0.4
//!
//! [sweep]
//! omega_d = { start = 0.02, stop = 0.6, count = 30 }
//! phi = [0.0, 0.3]
//! ```
//!
//! Every sweep axis is optional. The grid is the Cartesian product of all given axes;
//! an absent axis takes its value from `[model]` or `[drive]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::protocol::{HeomSettings, ProtocolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Heom,
    Fqme,
    Both,
}

impl SolverChoice {
    pub fn solvers(self) -> &'static [Solver] {
        match self {
            SolverChoice::Heom => &[Solver::Heom],
            SolverChoice::Fqme => &[Solver::Fqme],
            SolverChoice::Both => &[Solver::Heom, Solver::Fqme],
        }
    }
}

impl std::str::FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heom" => Ok(SolverChoice::Heom),
            "fqme" => Ok(SolverChoice::Fqme),
            "both" => Ok(SolverChoice::Both),
            other => Err(Error::InvalidParameter(format!(
                "unknown solver '{other}' (expected heom, fqme or both)"
            ))),
        }
    }
}

/// A single solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Solver {
    Heom,
    Fqme,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Heom => "heom",
            Solver::Fqme => "fqme",
        }
    }
}

/// Model parameters as written in a file. Missing defaults are filled by [`parse_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    /// Polaron-shifted level `ε̄₀ = ε₀ - λ²/Ω`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_bar0: Option<f64>,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_over_omega: Option<f64>,
    /// Total tunneling width, split equally between the leads.
    #[serde(default = "default_energy_scale")]
    pub gamma: f64,
    #[serde(default = "default_energy_scale")]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_bath: Option<f64>,
    /// Bias `Φ`, applied symmetrically.
    #[serde(default)]
    pub bias: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    /// Phonon-bath coupling `Λ`.
    #[serde(default)]
    pub bath_coupling: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath_cutoff: Option<f64>,
    #[serde(default = "default_n_osc")]
    pub n_osc: usize,
    #[serde(default = "default_true")]
    pub counter_term: bool,
}

fn default_omega() -> f64 {
    0.2
}

fn default_energy_scale() -> f64 {
    0.025
}

fn default_bandwidth() -> f64 {
    30.0
}

fn default_n_osc() -> usize {
    20
}

fn default_true() -> bool {
    true
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            eps0: None,
            eps_bar0: None,
            omega: default_omega(),
            lambda: None,
            lambda_over_omega: None,
            gamma: default_energy_scale(),
            temperature: default_energy_scale(),
            temperature_bath: None,
            bias: 0.0,
            bandwidth: default_bandwidth(),
            bath_coupling: 0.0,
            bath_cutoff: None,
            n_osc: default_n_osc(),
            counter_term: true,
        }
    }
}

impl ModelSection {
    fn lambda_value(&self) -> f64 {
        match (self.lambda, self.lambda_over_omega) {
            (Some(l), _) => l,
            (None, Some(r)) => r * self.omega,
            (None, None) => 1.5 * self.omega,
        }
    }

    fn fill_defaults(&mut self) {
        if self.eps0.is_none() && self.eps_bar0.is_none() {
            self.eps_bar0 = Some(0.0);
        }
        if self.lambda.is_none() && self.lambda_over_omega.is_none() {
            self.lambda_over_omega = Some(1.5);
        }
        self.temperature_bath.get_or_insert(self.temperature);
        self.bath_cutoff.get_or_insert(self.omega);
    }

    /// Model parameters without drive.
    pub fn params(&self) -> ModelParams {
        let lambda = self.lambda_value();
        let mut p = ModelParams {
            eps0: 0.0,
            lambda,
            omega: self.omega,
            drive_amplitude: 0.0,
            drive_frequency: 0.0,
            bandwidth_l: self.bandwidth,
            bandwidth_r: self.bandwidth,
            temperature_bath: self.temperature_bath.unwrap_or(self.temperature),
            bath_coupling: self.bath_coupling,
            bath_cutoff: self.bath_cutoff.unwrap_or(self.omega),
            n_osc: self.n_osc,
            counter_term: self.counter_term,
            ..ModelParams::default()
        }
        .with_gamma(self.gamma)
        .with_bias(self.bias);
        p.temperature_l = self.temperature;
        p.temperature_r = self.temperature;
        match self.eps0 {
            Some(e) => p.eps0 = e,
            None => p = p.with_eps_bar0(self.eps_bar0.unwrap_or(0.0)),
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
}

/// Grid of one sweep axis: explicit values or `count` evenly spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Linear { start: f64, stop: f64, count: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Linear { start, stop, count } => match *count {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        let v = self.values();
        if v.is_empty() {
            return Err("grid is empty".into());
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(format!("grid value {x} is not finite"));
        }
        if let Some(w) = v.windows(2).find(|w| w[1] <= w[0]) {
            return Err(format!("grid is not strictly increasing ({} then {})", w[0], w[1]));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_d: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bath: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Grid>,
}

impl SweepSection {
    fn axes(&self) -> [(&'static str, Option<&Grid>); 5] {
        [
            ("omega_d", self.omega_d.as_ref()),
            ("phi", self.phi.as_ref()),
            ("lambda_bath", self.lambda_bath.as_ref()),
            ("gamma", self.gamma.as_ref()),
            ("amplitude", self.amplitude.as_ref()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FqmeSettings {
    pub rtol: f64,
}

impl Default for FqmeSettings {
    fn default() -> Self {
        FqmeSettings { rtol: 1e-8 }
    }
}

/// Complete, validated run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub heom: HeomSettings,
    #[serde(default)]
    pub fqme: FqmeSettings,
    #[serde(default)]
    pub protocol: ProtocolConfig,
}

fn default_out() -> String {
    "results".into()
}

fn default_workers() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            solver: SolverChoice::default(),
            out: default_out(),
            workers: default_workers(),
            model: ModelSection::default(),
            drive: DriveSection::default(),
            sweep: SweepSection::default(),
            heom: HeomSettings::default(),
            fqme: FqmeSettings::default(),
            protocol: ProtocolConfig::default(),
        };
        c.model.fill_defaults();
        c
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub omega_d: f64,
    pub phi: f64,
    pub lambda_bath: f64,
    pub gamma: f64,
    pub amplitude: f64,
}

impl SweepPoint {
    /// Points differing only in `omega_d` share their relaxation and adiabatic reference.
    pub fn same_group(&self, other: &SweepPoint) -> bool {
        self.phi == other.phi
            && self.lambda_bath == other.lambda_bath
            && self.gamma == other.gamma
            && self.amplitude == other.amplitude
    }
}

/// A validation failure located at `[section] key`.
struct Issue {
    section: &'static str,
    key: &'static str,
    message: String,
}

fn issue(section: &'static str, key: &'static str, message: impl Into<String>) -> Issue {
    Issue {
        section,
        key,
        message: message.into(),
    }
}

impl RunConfig {
    /// Canonical TOML text; [`parse_config`] of it reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|i| {
            let at = if i.section.is_empty() {
                i.key.to_string()
            } else {
                format!("[{}] {}", i.section, i.key)
            };
            Error::InvalidParameter(format!("{at}: {}", i.message))
        })
    }

    fn check(&self) -> std::result::Result<(), Issue> {
        let m = &self.model;
        if m.eps0.is_some() && m.eps_bar0.is_some() {
            return Err(issue("model", "eps_bar0", "give either eps0 or eps_bar0, not both"));
        }
        if m.lambda.is_some() && m.lambda_over_omega.is_some() {
            return Err(issue(
                "model",
                "lambda_over_omega",
                "give either lambda or lambda_over_omega, not both",
            ));
        }
        if self.workers == 0 {
            return Err(issue("", "workers", "workers must be >= 1"));
        }
        for (key, grid) in self.sweep.axes() {
            if let Some(g) = grid {
                g.check().map_err(|m| issue("sweep", key, m))?;
            }
        }
        if self.solver != SolverChoice::Heom {
            let in_model = m.bath_coupling != 0.0;
            let in_sweep = self
                .sweep
                .lambda_bath
                .as_ref()
                .is_some_and(|g| g.values().iter().any(|&l| l != 0.0));
            if in_sweep {
                return Err(issue(
                    "sweep",
                    "lambda_bath",
                    "the fqme solver requires a vanishing phonon-bath coupling",
                ));
            }
            if in_model && self.sweep.lambda_bath.is_none() {
                return Err(issue(
                    "model",
                    "bath_coupling",
                    "the fqme solver requires a vanishing phonon-bath coupling",
                ));
            }
        }
        let driven = self.amplitudes().iter().any(|&a| a != 0.0);
        if driven && self.sweep.omega_d.is_none() && self.drive.frequency.is_none() {
            return Err(issue(
                "drive",
                "frequency",
                "missing required key: a nonzero amplitude needs drive.frequency or sweep.omega_d",
            ));
        }
        if let Some(f) = self.drive.frequency {
            if !(f > 0.0) {
                return Err(issue("drive", "frequency", "frequency must be > 0"));
            }
        }
        if let Some(g) = &self.sweep.omega_d {
            if g.values()[0] <= 0.0 {
                return Err(issue("sweep", "omega_d", "drive frequencies must be > 0"));
            }
        }
        for p in self.points() {
            self.point_params(&p)
                .validate()
                .map_err(|e| issue("model", "", e.to_string()))?;
        }
        self.protocol
            .validate()
            .map_err(|e| issue("protocol", "", e.to_string()))?;
        if self.heom.pade_fermi == 0 || !(self.heom.rtol > 0.0) || !(self.heom.threshold >= 0.0) {
            return Err(issue("heom", "", "pade_fermi >= 1, rtol > 0 and threshold >= 0 required"));
        }
        if !(self.fqme.rtol > 0.0) {
            return Err(issue("fqme", "rtol", "rtol must be > 0"));
        }
        Ok(())
    }

    fn axis(&self, grid: &Option<Grid>, fallback: f64) -> Vec<f64> {
        grid.as_ref().map_or_else(|| vec![fallback], Grid::values)
    }

    fn amplitudes(&self) -> Vec<f64> {
        self.axis(&self.sweep.amplitude, self.drive.amplitude)
    }

    /// All grid points, `omega_d` fastest, then amplitude, gamma, phi, lambda_bath.
    pub fn points(&self) -> Vec<SweepPoint> {
        let omega_d = self.axis(&self.sweep.omega_d, self.drive.frequency.unwrap_or(0.0));
        let mut out = Vec::new();
        for &lambda_bath in &self.axis(&self.sweep.lambda_bath, self.model.bath_coupling) {
            for &phi in &self.axis(&self.sweep.phi, self.model.bias) {
                for &gamma in &self.axis(&self.sweep.gamma, self.model.gamma) {
                    for &amplitude in &self.amplitudes() {
                        for &w in &omega_d {
                            out.push(SweepPoint {
                                omega_d: w,
                                phi,
                                lambda_bath,
                                gamma,
                                amplitude,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Model parameters at one grid point.
    pub fn point_params(&self, point: &SweepPoint) -> ModelParams {
        let mut p = self.model.params().with_gamma(point.gamma).with_bias(point.phi);
        p.bath_coupling = point.lambda_bath;
        p.with_drive(point.amplitude, point.omega_d)
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (top level for an empty section), else of the section header.
fn key_line(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return i + 1;
                }
            }
        }
    }
    header.unwrap_or(1)
}

/// Parses and validates a run configuration, filling defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map_or(1, |s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })?;
    cfg.model.fill_defaults();
    cfg.check().map_err(|i| Error::Config {
        line: key_line(text, i.section, i.key),
        message: if i.key.is_empty() {
            i.message
        } else {
            format!("{}: {}", i.key, i.message)
        },
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_line(text: &str) -> (usize, String) {
        match parse_config(text) {
            Err(Error::Config { line, message }) => (line, message),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_the_resonance_study() {
        let c = parse_config("").unwrap();
        let p = c.model.params();
        assert_eq!(p.bandwidth_l, 30.0);
        assert_eq!(p.bath_cutoff, p.omega);
        assert_eq!(p.gamma_l, 0.0125);
        assert_eq!(p.gamma_r, 0.0125);
        assert!((p.eps0 - p.polaron_shift()).abs() < 1e-15);
        assert_eq!(c.model.eps_bar0, Some(0.0));
        assert_eq!(c.points().len(), 1);
    }

    #[test]
    fn empty_drive_section_is_undriven() {
        let c = parse_config("[drive]\n").unwrap();
        let pts = c.points();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].amplitude, 0.0);
        assert_eq!(c.point_params(&pts[0]).drive_amplitude, 0.0);
    }

    #[test]
    fn resonance_sweep_config() {
        let text = r#"
[model]
eps_bar0 = 0.0
omega = 0.2
lambda_over_omega = 1.5
gamma = 0.025
temperature = 0.025

[drive]
amplitude = 0.4

[sweep]
omega_d = { start = 0.02, stop = 0.6, count = 30 }
"#;
        let c = parse_config(text).unwrap();
        let pts = c.points();
        assert_eq!(pts.len(), 30);
        assert!((pts[29].omega_d - 0.6).abs() < 1e-15);
        let p = c.point_params(&pts[3]);
        assert!((p.lambda - 0.3).abs() < 1e-15);
        assert!((p.eps0 - 0.45).abs() < 1e-15);
        assert_eq!(p.drive_amplitude, 0.4);
        assert_eq!(p.gamma_total(), 0.025);
    }

    #[test]
    fn eps0_is_taken_literally() {
        let c = parse_config("[model]\neps0 = 0.1\nlambda = 0.1\n").unwrap();
        assert_eq!(c.model.params().eps0, 0.1);
        assert_eq!(c.model.eps_bar0, None);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let (line, message) = config_line("[model]\nomega = 0.2\nomegga = 0.3\n");
        assert_eq!(line, 3);
        assert!(message.contains("omegga"), "{message}");
    }

    #[test]
    fn syntax_error_reports_its_line() {
        let (line, _) = config_line("solver = \"heom\"\n\n[model\n");
        assert_eq!(line, 3);
    }

    #[test]
    fn missing_frequency_is_reported() {
        let (line, message) = config_line("[model]\nomega = 0.2\n\n[drive]\namplitude = 0.4\n");
        assert_eq!(line, 4);
        assert!(message.contains("missing required key"), "{message}");
    }

    #[test]
    fn fqme_with_phonon_bath_is_rejected() {
        let (line, message) = config_line("solver = \"fqme\"\n[model]\nomega = 0.2\nbath_coupling = 0.01\n");
        assert_eq!(line, 4);
        assert!(message.contains("bath_coupling"), "{message}");
        let (line, _) = config_line("solver = \"both\"\n[sweep]\nlambda_bath = [0.0, 0.01]\n");
        assert_eq!(line, 3);
        assert!(parse_config("solver = \"heom\"\n[model]\nbath_coupling = 0.01\n").is_ok());
    }

    #[test]
    fn grids_must_increase() {
        let (line, message) = config_line("[drive]\namplitude = 0.4\n[sweep]\nomega_d = [0.2, 0.1]\n");
        assert_eq!(line, 4);
        assert!(message.contains("strictly increasing"), "{message}");
        let (_, message) = config_line("[sweep]\nphi = []\n");
        assert!(message.contains("empty"), "{message}");
    }

    #[test]
    fn conflicting_level_keys() {
        let (line, _) = config_line("[model]\neps0 = 0.1\neps_bar0 = 0.0\n");
        assert_eq!(line, 3);
    }

    #[test]
    fn points_are_ordered_with_omega_d_fastest() {
        let c = parse_config("[drive]\namplitude = 0.4\n[sweep]\nomega_d = [0.1, 0.2]\nphi = [0.0, 0.3]\n").unwrap();
        let pts = c.points();
        let w: Vec<_> = pts.iter().map(|p| (p.phi, p.omega_d)).collect();
        assert_eq!(w, vec![(0.0, 0.1), (0.0, 0.2), (0.3, 0.1), (0.3, 0.2)]);
        assert!(pts[0].same_group(&pts[1]));
        assert!(!pts[1].same_group(&pts[2]));
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = r#"
solver = "both"
workers = 3
[model]
lambda = 0.25
n_osc = 8
counter_term = false
[drive]
amplitude = 0.4
frequency = 0.16
[sweep]
phi = [0.0, 0.1, 0.3]
gamma = { start = 0.0025, stop = 0.025, count = 3 }
[heom]
pade_fermi = 12
[protocol]
cycle_tol = 1e-5
relaxation_window = 250.0
"#;
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_toml(), c.to_toml());
    }
}
