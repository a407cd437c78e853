//! Run settings: built-in defaults, then the config file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stokes_recon::{synthetic, ComponentMode, ExampleId, SolverConfig};

use crate::args::Common;
use crate::error::CliError;

/// Keys accepted in a config file. All optional; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub nu: Option<f64>,
    pub eps: Option<f64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub tau: Option<f64>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
    pub h: Option<f64>,
    pub example: Option<u32>,
    pub k_max: Option<usize>,
    pub force_k: Option<bool>,
    pub tied: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }
}

/// Fully resolved settings; echoed into every output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub command: String,
    pub nu: f64,
    pub eps: f64,
    pub dt: f64,
    pub t_final: f64,
    pub lambda: f64,
    pub c: f64,
    pub tau: f64,
    pub delta: f64,
    pub seed: u64,
    pub h: f64,
    pub example: u32,
    pub k_max: usize,
    pub force_k: bool,
    pub tied: bool,
    pub out: PathBuf,
}

impl Settings {
    pub fn resolve(command: &str, flags: &Common) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let base = synthetic::benchmark_config();
        let pick = |flag: Option<f64>, file: Option<f64>, default: f64| flag.or(file).unwrap_or(default);
        let s = Settings {
            command: command.to_string(),
            nu: pick(flags.nu, file.nu, base.nu),
            eps: pick(flags.eps, file.eps, base.eps),
            dt: pick(flags.dt, file.dt, base.dt),
            t_final: pick(flags.t_final, file.t_final, base.t_final),
            lambda: pick(flags.lambda, file.lambda, base.lambda),
            c: pick(flags.c, file.c, base.c),
            tau: pick(flags.tau, file.tau, base.tau),
            delta: pick(flags.delta, file.delta, base.delta),
            seed: flags.seed.or(file.seed).unwrap_or(base.seed),
            h: pick(flags.h, file.h, 0.1),
            example: flags.example.or(file.example).unwrap_or(1),
            k_max: flags.k_max.or(file.k_max).unwrap_or(30),
            force_k: flags.force_k || file.force_k.unwrap_or(false),
            tied: flags.tied || file.tied.unwrap_or(false),
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        };
        s.solver().validate().map_err(|e| CliError::Config(e.to_string()))?;
        s.example_id()?;
        if !s.h.is_finite() || s.h <= 0.0 {
            return Err(CliError::Config(format!("mesh size must be positive, got {}", s.h)));
        }
        if s.k_max == 0 {
            return Err(CliError::Config("k_max must be at least 1".into()));
        }
        Ok(s)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            nu: self.nu,
            eps: self.eps,
            dt: self.dt,
            t_final: self.t_final,
            lambda: self.lambda,
            c: self.c,
            tau: self.tau,
            delta: self.delta,
            seed: self.seed,
        }
    }

    pub fn example_id(&self) -> Result<ExampleId, CliError> {
        ExampleId::from_id(self.example).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn mode(&self) -> ComponentMode {
        if self.tied {
            ComponentMode::Tied
        } else {
            ComponentMode::Independent
        }
    }

    /// Flat `key = value` text, readable back through `--config`.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in [
            ("nu", self.nu),
            ("eps", self.eps),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("lambda", self.lambda),
            ("c", self.c),
            ("tau", self.tau),
            ("delta", self.delta),
            ("h", self.h),
        ] {
            out.push_str(&format!("{k} = {}\n", toml_float(v)));
        }
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("example = {}\n", self.example));
        out.push_str(&format!("k_max = {}\n", self.k_max));
        out.push_str(&format!("force_k = {}\n", self.force_k));
        out.push_str(&format!("tied = {}\n", self.tied));
        out.push_str(&format!("out = {}\n", toml::Value::String(self.out.display().to_string())));
        out
    }
}

fn toml_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}
