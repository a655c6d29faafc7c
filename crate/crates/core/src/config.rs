//! Run configuration: TOML schema, validation, and construction of the
//! domain objects. Unknown keys are rejected; complex matrices travel as
//! paired real/imag nested arrays.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{sigma_x, sigma_z, BathSpec, SystemSpec};
use crate::oracle::OracleConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    pub bath: BathSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub preset: Option<String>,
    pub delta: Option<f64>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub coupling: Option<String>,
    pub h_re: Option<Vec<Vec<f64>>>,
    pub h_im: Option<Vec<Vec<f64>>>,
    pub g_re: Option<Vec<Vec<f64>>>,
    pub g_im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub beta: f64,
    pub family: Option<FamilySection>,
    /// Path to a CSV file with `omega,J` rows.
    pub tabulated: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub n: u32,
    pub m: u32,
    pub c1: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_lambdas")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Generator driving `propagate`: davies | wt | m | md | oracle.
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.1]
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            lambda: default_lambdas(),
            seed: default_seed(),
            generator: default_generator(),
            time: TimeSection::default(),
            tolerances: ToleranceSection::default(),
            oracle: OracleSection::default(),
        }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_generator() -> String {
    "davies".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    /// "log" or "linear".
    #[serde(default = "default_time_kind")]
    pub kind: String,
    /// 0 means: derive from 20 / (lambda^2 gamma_FGR).
    #[serde(default)]
    pub t_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_time_kind() -> String {
    "log".into()
}

fn default_points() -> usize {
    64
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            kind: default_time_kind(),
            t_max: 0.0,
            points: default_points(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    #[serde(default = "default_bohr_tol")]
    pub bohr_tol: f64,
}

fn default_bohr_tol() -> f64 {
    crate::resonance::BOHR_TOL
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            bohr_tol: default_bohr_tol(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    /// 0 means: cover the support of h_hat automatically.
    #[serde(default)]
    pub omega_max: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default = "default_dense_cap")]
    pub dense_dim_cap: usize,
    #[serde(default = "default_tail_mass")]
    pub max_tail_mass: f64,
    /// Mode count of the discretization-floor rerun in `compare-oracle`.
    #[serde(default = "default_floor_modes")]
    pub floor_modes: usize,
    #[serde(default = "default_floor_cutoff")]
    pub floor_cutoff: usize,
    /// Number of comparison times inside [0, T_rec/2].
    #[serde(default = "default_oracle_points")]
    pub points: usize,
}

fn default_n_modes() -> usize {
    6
}
fn default_cutoff() -> usize {
    3
}
fn default_dense_cap() -> usize {
    4096
}
fn default_tail_mass() -> f64 {
    1e-6
}
fn default_floor_modes() -> usize {
    8
}
fn default_floor_cutoff() -> usize {
    2
}
fn default_oracle_points() -> usize {
    20
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            n_modes: default_n_modes(),
            omega_max: 0.0,
            cutoff: default_cutoff(),
            dense_dim_cap: default_dense_cap(),
            max_tail_mass: default_tail_mass(),
            floor_modes: default_floor_modes(),
            floor_cutoff: default_floor_cutoff(),
            points: default_oracle_points(),
        }
    }
}

/// Fully validated run configuration with constructed domain objects.
#[derive(Debug)]
pub struct RunConfig {
    pub sys: SystemSpec,
    pub bath: BathSpec,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    pub generator_tag: String,
    pub time: TimeSection,
    pub bohr_tol: f64,
    pub oracle: OracleSection,
}

impl RunConfig {
    pub fn from_str(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse: {e}")))?;
        Self::from_file(file, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str(&text, base)
    }

    fn from_file(file: ConfigFile, base_dir: &Path) -> Result<Self> {
        let sys = build_system(&file.system)?;
        let bath = build_bath(&file.bath, base_dir)?;
        let run = file.run;
        if run.lambda.is_empty() {
            return Err(Error::Config("run.lambda must list at least one value".into()));
        }
        let positives = [
            ("run.tolerances.bohr_tol", run.tolerances.bohr_tol),
            ("run.oracle.max_tail_mass", run.oracle.max_tail_mass),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if run.time.points < 2 {
            return Err(Error::Config("run.time.points must be at least 2".into()));
        }
        match run.time.kind.as_str() {
            "log" | "linear" => {}
            other => {
                return Err(Error::Config(format!(
                    "run.time.kind must be \"log\" or \"linear\", got \"{other}\""
                )))
            }
        }
        match run.generator.as_str() {
            "davies" | "wt" | "m" | "md" | "oracle" => {}
            other => {
                return Err(Error::Config(format!(
                    "run.generator must be one of davies|wt|m|md|oracle, got \"{other}\""
                )))
            }
        }
        Ok(Self {
            sys,
            bath,
            lambdas: run.lambda,
            seed: run.seed,
            generator_tag: run.generator,
            time: run.time,
            bohr_tol: run.tolerances.bohr_tol,
            oracle: run.oracle,
        })
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig {
            dense_dim_cap: self.oracle.dense_dim_cap,
            max_tail_mass: self.oracle.max_tail_mass,
            ..OracleConfig::default()
        }
    }
}

fn build_system(sec: &SystemSection) -> Result<SystemSpec> {
    match sec.preset.as_deref() {
        Some("qubit") => {
            let delta = sec
                .delta
                .ok_or_else(|| Error::Config("system.delta required for the qubit preset".into()))?;
            let g = named_or_explicit_coupling(sec, 2)?;
            SystemSpec::qubit(delta, g)
        }
        Some("three_level") => {
            let e1 = sec
                .e1
                .ok_or_else(|| Error::Config("system.e1 required for three_level".into()))?;
            let e2 = sec
                .e2
                .ok_or_else(|| Error::Config("system.e2 required for three_level".into()))?;
            let g = named_or_explicit_coupling(sec, 3)?;
            SystemSpec::three_level(e1, e2, g)
        }
        Some("explicit") | None => {
            let h_re = sec
                .h_re
                .as_ref()
                .ok_or_else(|| Error::Config("system.h_re required for explicit systems".into()))?;
            let zeros = vec![vec![0.0; h_re.len()]; h_re.len()];
            let h_im = sec.h_im.as_ref().unwrap_or(&zeros);
            let h = CMat::from_re_im(h_re, h_im)?;
            let g = named_or_explicit_coupling(sec, h_re.len())?;
            SystemSpec::new(h, g)
        }
        Some(other) => Err(Error::Config(format!(
            "unknown system.preset \"{other}\" (use qubit, three_level or explicit)"
        ))),
    }
}

fn named_or_explicit_coupling(sec: &SystemSection, dim: usize) -> Result<CMat> {
    match sec.coupling.as_deref() {
        Some("sigma_x") => {
            if dim != 2 {
                return Err(Error::Config(
                    "coupling sigma_x only applies to two-level systems".into(),
                ));
            }
            Ok(sigma_x())
        }
        Some("sigma_z") => {
            if dim != 2 {
                return Err(Error::Config(
                    "coupling sigma_z only applies to two-level systems".into(),
                ));
            }
            Ok(sigma_z())
        }
        Some("explicit") | None => {
            let g_re = sec.g_re.as_ref().ok_or_else(|| {
                Error::Config("system.g_re required when coupling is explicit".into())
            })?;
            if g_re.len() != dim {
                return Err(Error::Config(format!(
                    "coupling dimension {} does not match system dimension {dim}",
                    g_re.len()
                )));
            }
            let zeros = vec![vec![0.0; dim]; dim];
            let g_im = sec.g_im.as_ref().unwrap_or(&zeros);
            CMat::from_re_im(g_re, g_im)
        }
        Some(other) => Err(Error::Config(format!(
            "unknown coupling \"{other}\" (use sigma_x, sigma_z or explicit)"
        ))),
    }
}

fn build_bath(sec: &BathSection, base_dir: &Path) -> Result<BathSpec> {
    match (&sec.family, &sec.tabulated) {
        (Some(fam), None) => BathSpec::new_analytic(sec.beta, fam.n, fam.m, fam.c1),
        (None, Some(path)) => {
            let full = base_dir.join(path);
            let text = std::fs::read_to_string(&full).map_err(|e| {
                Error::Config(format!("cannot read tabulated J {}: {e}", full.display()))
            })?;
            let mut omegas = Vec::new();
            let mut js = Vec::new();
            for (ln, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let mut parts = line.split(',');
                let o: f64 = parts
                    .next()
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::Config(format!("tabulated J line {}: bad omega", ln + 1))
                    })?;
                let j: f64 = parts
                    .next()
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("tabulated J line {}: bad J", ln + 1)))?;
                omegas.push(o);
                js.push(j);
            }
            BathSpec::new_tabulated(sec.beta, omegas, js)
        }
        (Some(_), Some(_)) => Err(Error::Config(
            "bath: give either family or tabulated, not both".into(),
        )),
        (None, None) => Err(Error::Config(
            "bath: either bath.family or bath.tabulated is required".into(),
        )),
    }
}
