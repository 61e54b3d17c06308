//! Run configuration: one TOML (or manifest JSON) document plus dotted overrides.
//!
//! ```toml
//! experiment = "mean"
//! seed = 7
//!
//! [model]
//! preset = "cir"
//!
//! [scheme]
//! step = 0.00390625
//!
//! [run]
//! x = [2.0]
//! t = 1.0
//! paths = 100000
//! ```
//!
//! `[model]` takes either `preset` (with an optional `variant`) or an inline
//! `parameters` table with fields `m, n, a, alpha, b, beta, nu, mu` (row-major
//! matrices; omitted entries are zero).

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::models::{self, Preset, RootImmigration};
use crate::params::AdmissibleParameters;
use crate::sde::SchemeSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Validate,
    Simulate,
    Riccati,
    Invariant,
    Mean,
    Moments,
    Contraction,
    Convolution,
    Ergodicity,
    Wasserstein,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// `finite-mean` selects the compound-Poisson immigration of `anisotropic-root`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<AdmissibleParameters>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    #[default]
    Kappa,
    Log,
}

/// Experiment inputs; each experiment reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    /// Start; defaults to the preset's start.
    pub x: Option<Vec<f64>>,
    pub x_tilde: Option<Vec<f64>>,
    pub t: f64,
    pub times: Vec<f64>,
    pub paths: usize,
    /// Single transform argument as `[re, im]` pairs.
    pub u: Option<Vec<[f64; 2]>>,
    /// Explicit transform grid; otherwise `u_points` default points.
    pub u_grid: Option<Vec<Vec<[f64; 2]>>>,
    pub u_points: usize,
    pub tol: f64,
    pub metric: MetricChoice,
    pub kappa: f64,
    pub repeats: usize,
    pub burn_in: f64,
    pub far_start_scale: f64,
    /// Binary sample dumps for `wasserstein`.
    pub samples_p: Option<String>,
    pub samples_q: Option<String>,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            x: None,
            x_tilde: None,
            t: 1.0,
            times: (1..=8).map(f64::from).collect(),
            paths: 10_000,
            u: None,
            u_grid: None,
            u_points: 8,
            tol: crate::riccati::DEFAULT_TOL,
            metric: MetricChoice::Kappa,
            kappa: 1.0,
            repeats: 4,
            burn_in: 0.0,
            far_start_scale: 3.0,
            samples_p: None,
            samples_q: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub scheme: SchemeSettings,
    #[serde(default)]
    pub run: RunParams,
    /// Thread count; results do not depend on it, so manifests omit it.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    /// Output directory; `--out` takes precedence. Not recorded in manifests.
    #[serde(default, skip_serializing)]
    pub out: Option<String>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub config: RunConfig,
    /// Seeds derived from `config.seed` for the individual ensembles.
    pub seeds: Vec<u64>,
    /// Integer resolution of transport costs, where used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_resolution: Option<f64>,
}

impl RunConfig {
    /// Resolves the model to concrete parameters and a default start.
    pub fn resolve_model(&self) -> Result<Preset> {
        match (&self.model.preset, &self.model.parameters) {
            (Some(_), Some(_)) => Err(Error::Config(
                "model: give either `preset` or `parameters`, not both".into(),
            )),
            (None, None) => Err(Error::Config("model: `preset` or `parameters` is required".into())),
            (Some(name), None) => match (name.as_str(), self.model.variant.as_deref()) {
                (_, None) => models::preset(name),
                ("anisotropic-root", Some("finite-mean")) => models::anisotropic_root(RootImmigration::FiniteMean),
                ("anisotropic-root", Some("log-moment")) => models::anisotropic_root(RootImmigration::LogMoment),
                (n, Some(v)) => Err(Error::Config(format!("model.variant: unknown variant {v:?} for preset {n:?}"))),
            },
            (None, Some(p)) => {
                if self.model.variant.is_some() {
                    return Err(Error::Config("model.variant only applies to presets".into()));
                }
                let d = p.dims.d();
                Ok(Preset {
                    name: "inline".into(),
                    params: p.clone(),
                    start: (0..d).map(|k| if k < p.dims.m { 1.0 } else { 0.0 }).collect(),
                    notes: String::new(),
                    subcritical: p.subcriticality_margin() > 0.0,
                })
            }
        }
    }

    pub fn transform_argument(&self, d: usize, m: usize) -> Vec<Complex64> {
        match &self.run.u {
            Some(u) => u.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
            None => (0..d).map(|k| Complex64::new(if k < m { -1.0 } else { 0.0 }, 0.0)).collect(),
        }
    }

    pub fn explicit_grid(&self) -> Option<Vec<Vec<Complex64>>> {
        self.run.u_grid.as_ref().map(|g| {
            g.iter()
                .map(|u| u.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
                .collect()
        })
    }
}

fn parse_document(text: &str, json: bool, origin: &str) -> Result<Value> {
    if json {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        // manifests carry the config under `config`
        Ok(match v {
            Value::Object(mut o) if o.contains_key("program") && o.contains_key("config") => {
                o.remove("config").expect("checked")
            }
            other => other,
        })
    } else {
        let t: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        serde_json::to_value(t).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }
}

/// Parses `key.path=value`; the value is read as a TOML literal, falling back to a string.
fn parse_override(spec: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set {spec:?}: expected KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|s| s.is_empty()) {
        return Err(Error::Config(format!("--set {spec:?}: malformed key")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key")).map_err(|e| Error::Config(e.to_string()))?,
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn apply_override(doc: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut cur = doc;
    for (k, seg) in path.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("--set {}: {} is not a table", path.join("."), path[..k].join("."))))?;
        if k + 1 == path.len() {
            obj.insert(seg.clone(), value);
            return Ok(());
        }
        cur = obj.entry(seg.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Parses a config text (`json` selects the manifest/JSON reader) and applies overrides.
pub fn parse_config(text: &str, json: bool, origin: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut doc = parse_document(text, json, origin)?;
    for spec in overrides {
        let (path, value) = parse_override(spec)?;
        apply_override(&mut doc, &path, value)?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("{origin}: at `{path}`: {}", e.into_inner()))
    })?;
    cfg.scheme.check().map_err(|e| Error::Config(format!("{origin}: scheme: {e}")))?;
    Ok(cfg)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e == "json");
    parse_config(&text, json, &path.display().to_string(), overrides)
}

/// Inline-parameter config for a preset, ready for editing.
pub fn export_preset(name: &str) -> Result<String> {
    let p = models::preset(name)?;
    let cfg = RunConfig {
        experiment: Experiment::Validate,
        seed: 0,
        model: ModelConfig {
            preset: None,
            variant: None,
            parameters: Some(p.params),
        },
        scheme: SchemeSettings::default(),
        run: RunParams {
            x: Some(p.start),
            ..Default::default()
        },
        workers: None,
        out: None,
    };
    toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))
}
