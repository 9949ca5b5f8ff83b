//! Flag and config-file merging, plus the shared parameter groups.
//!
//! Every argument struct derives both `clap::Args` and serde. A JSON config
//! file supplies the same keys (snake_case field names); flags given on the
//! command line win over the file, and unset values fall back to the
//! documented defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use deltashell::dirac_algebra::SpectralParameter;
use deltashell::potential::PotentialProfile;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::output::Metadata;
use crate::CliError;

/// Overlays the non-null fields of `flags` onto the JSON object in `file`.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = file else {
        return Ok(serde_json::from_value(serde_json::to_value(flags).expect("args serialize"))
            .expect("args round-trip"));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut base: Map<String, Value> = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not a JSON object: {e}", path.display())))?;
    if let Value::Object(over) = serde_json::to_value(flags).expect("args serialize") {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base))
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Parses a comma-separated list; an empty list is a usage error.
pub fn parse_list<T: std::str::FromStr>(name: &str, text: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Usage(format!("--{name} must not be empty")));
    }
    items
        .iter()
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("--{name}: cannot parse '{s}'"))))
        .collect()
}

/// A list given either as `"0.2,0.1"` or as a JSON array in the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ListArg {
    Text(String),
    Numbers(Vec<f64>),
}

impl std::str::FromStr for ListArg {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self::Text(s.to_string()))
    }
}

impl ListArg {
    pub fn floats(&self, name: &str) -> Result<Vec<f64>, CliError> {
        match self {
            Self::Text(t) => parse_list(name, t),
            Self::Numbers(v) if v.is_empty() => Err(CliError::Usage(format!("--{name} must not be empty"))),
            Self::Numbers(v) => Ok(v.clone()),
        }
    }

    pub fn ints(&self, name: &str) -> Result<Vec<i32>, CliError> {
        let out: Vec<i32> = match self {
            Self::Text(t) => parse_list(name, t)?,
            Self::Numbers(v) => {
                if v.iter().any(|x| x.fract() != 0.0) {
                    return Err(CliError::Usage(format!("--{name} must hold integers")));
                }
                v.iter().map(|&x| x as i32).collect()
            }
        };
        if out.is_empty() {
            return Err(CliError::Usage(format!("--{name} must not be empty")));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PotentialArgs {
    /// Profile shape: square, gaussian or table [default: square]
    #[arg(long)]
    pub potential: Option<String>,
    /// Square-well strength τ, so that ∫V = τη [default: 1.0]
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Half-width η of the support [default: 0.25]
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,
    /// Gaussian amplitude [default: 1.0]
    #[arg(long, allow_hyphen_values = true)]
    pub amplitude: Option<f64>,
    /// Gaussian width [default: η/3]
    #[arg(long, allow_hyphen_values = true)]
    pub width: Option<f64>,
    /// JSON file for table profiles: {"ts": [...], "vs": [...], "eta": ...}
    #[arg(long)]
    pub file: Option<PathBuf>,
}

impl PotentialArgs {
    pub fn resolve(&self, default_tau: f64, default_eta: f64) -> Result<PotentialProfile, CliError> {
        let eta = self.eta.unwrap_or(default_eta);
        let shape = self.potential.as_deref().unwrap_or("square");
        let profile = match shape {
            "square" => PotentialProfile::square(self.tau.unwrap_or(default_tau), eta),
            "gaussian" => PotentialProfile::gaussian(
                self.amplitude.unwrap_or(1.0),
                self.width.unwrap_or(eta / 3.0),
                eta,
            ),
            "table" => return self.table(),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown potential '{other}' (expected square, gaussian or table)"
                )))
            }
        };
        profile.map_err(|e| CliError::Usage(e.to_string()))
    }

    fn table(&self) -> Result<PotentialProfile, CliError> {
        let path = self
            .file
            .as_ref()
            .ok_or_else(|| CliError::Usage("--potential table needs --file".into()))?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut value: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Value::Object(obj) = &mut value {
            obj.entry("kind").or_insert_with(|| Value::from("table"));
            if let Some(eta) = self.eta {
                obj.insert("eta".into(), Value::from(eta));
            }
        }
        let profile = PotentialProfile::from_json(&value.to_string()).map_err(|e| CliError::Usage(e.to_string()))?;
        if !matches!(profile, PotentialProfile::Table { .. }) {
            return Err(CliError::Usage(format!("{} does not hold a table profile", path.display())));
        }
        Ok(profile)
    }
}

pub fn profile_metadata(meta: &mut Metadata, p: &PotentialProfile) {
    match p {
        PotentialProfile::Square { tau, eta } => {
            meta.insert("potential", "square");
            meta.insert("tau", tau);
            meta.insert("eta", eta);
        }
        PotentialProfile::Gaussian { amplitude, width, eta } => {
            meta.insert("potential", "gaussian");
            meta.insert("amplitude", amplitude);
            meta.insert("width", width);
            meta.insert("eta", eta);
        }
        PotentialProfile::Table { ts, eta, .. } => {
            meta.insert("potential", "table");
            meta.insert("table_points", ts.len());
            meta.insert("eta", eta);
        }
    }
    meta.insert("integral_v", p.integral());
    meta.insert("l1_norm_v", p.l1_norm());
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SpectralArgs {
    /// Real part of the spectral parameter a [default: 0.0]
    #[arg(long, allow_hyphen_values = true)]
    pub a_re: Option<f64>,
    /// Imaginary part of a [default: 1.0]
    #[arg(long, allow_hyphen_values = true)]
    pub a_im: Option<f64>,
    /// Mass m [default: 1.0]
    #[arg(long)]
    pub mass: Option<f64>,
}

impl SpectralArgs {
    pub fn resolve(&self, meta: &mut Metadata) -> Result<SpectralParameter, CliError> {
        let a = Complex64::new(self.a_re.unwrap_or(0.0), self.a_im.unwrap_or(1.0));
        let m = self.mass.unwrap_or(1.0);
        meta.insert("a_re", a.re);
        meta.insert("a_im", a.im);
        meta.insert("mass", m);
        SpectralParameter::new(a, m).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// JSON config file; flags override its values
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Write the main result here instead of stdout
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
