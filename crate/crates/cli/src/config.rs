//! Run configuration: a flat JSON object whose keys mirror the long flags
//! (`--period-min` <-> `period_min`). Flags override file values; unknown keys
//! and keys that do not apply to the chosen subcommand are errors.
//!
//! A manifest written by a previous run is also accepted as a config file;
//! its `config` object is used.

use crate::error::CliError;
use agentsim_core::environment::{Boundary, Neighborhood};
use agentsim_core::sir::{ContactScheme, SirParams};
use agentsim_core::OrderPolicy;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};

pub const DEFAULT_STEPS: usize = 120;
pub const DEFAULT_RUNS: usize = 500;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,

    // SIR parameters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period_min: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period_max: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contacts_min: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contacts_max: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact_scheme: Option<ContactScheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighborhood: Option<Neighborhood>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_infected: Option<usize>,

    // Runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<OrderPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,

    // Calibration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_r0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_evaluations: Option<usize>,

    // Series analysis.
    #[serde(rename = "in", skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,

    // Compartmental ODE.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

const SIR_KEYS: &[&str] = &[
    "model",
    "b",
    "period_min",
    "period_max",
    "contacts_min",
    "contacts_max",
    "contact_scheme",
    "width",
    "height",
    "neighborhood",
    "boundary",
    "network",
    "initial_infected",
];

/// Keys each subcommand understands.
pub fn keys_for(command: &str) -> Vec<&'static str> {
    let mut keys: Vec<&'static str> = Vec::new();
    match command {
        "simulate" => {
            keys.extend(SIR_KEYS);
            keys.extend(["steps", "policy", "seed", "snapshot"]);
        }
        "ensemble" => {
            keys.extend(SIR_KEYS);
            keys.extend(["steps", "policy", "seed", "runs", "workers"]);
        }
        "calibrate" => {
            keys.extend(SIR_KEYS.iter().filter(|&&k| k != "b"));
            keys.extend([
                "seed",
                "runs",
                "workers",
                "target_r0",
                "b_min",
                "b_max",
                "tol",
                "max_evaluations",
            ]);
        }
        "analyze" => keys.extend(["in", "column", "window", "alpha", "max_lag", "permutations", "seed"]),
        "ode" => keys.extend(["beta", "gamma", "s0", "i0", "r0", "dt", "horizon"]),
        _ => {}
    }
    keys.push("out");
    keys
}

fn unknown_key(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Reads a config file (or a manifest) into a key map, validating every key
/// and value type.
pub fn load_file(path: &Path, command: &str) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| {
        CliError::config_key(
            "",
            format!("{}:{}:{}", path.display(), e.line(), e.column()),
            format!("invalid JSON: {e}"),
        )
    })?;
    let Value::Object(mut obj) = raw else {
        return Err(CliError::config_key("", path.display().to_string(), "config must be a JSON object"));
    };

    // A manifest: take its config, after checking it belongs to this command.
    let (text, prefix) = if obj.contains_key("config") && obj.contains_key("command") {
        let recorded = obj.get("command").and_then(Value::as_str).unwrap_or("");
        if recorded != command {
            return Err(CliError::config_key(
                "command",
                path.display().to_string(),
                format!("manifest was written by `{recorded}`, not `{command}`"),
            ));
        }
        let inner = obj.remove("config").expect("checked");
        (serde_json::to_string_pretty(&inner).expect("valid JSON"), "config.")
    } else {
        (text, "")
    };

    let de = &mut serde_json::Deserializer::from_str(&text);
    let parsed: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let msg = inner.to_string();
        let at = format!("{}:{}:{}", path.display(), inner.line(), inner.column());
        match unknown_key(&msg) {
            Some(key) => CliError::config_key(
                &key,
                if prefix.is_empty() { at } else { format!("{} ({prefix}{key})", path.display()) },
                format!("unknown key `{key}`"),
            ),
            None => {
                let key = e.path().to_string();
                CliError::config_key(&key, at, format!("bad value for `{key}`: {msg}"))
            }
        }
    })?;
    let Value::Object(map) = serde_json::to_value(parsed).expect("plain data") else {
        unreachable!("RunConfig serializes to an object")
    };
    check_applicable(&map, command, &path.display().to_string())?;
    Ok(map)
}

fn check_applicable(map: &Map<String, Value>, command: &str, location: &str) -> Result<(), CliError> {
    let allowed = keys_for(command);
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(CliError::config_key(
                key,
                location,
                format!("key `{key}` does not apply to `{command}`"),
            ));
        }
    }
    Ok(())
}

/// Layers flag values over file values.
pub fn merge(
    command: &str,
    file: Option<Map<String, Value>>,
    flags: Map<String, Value>,
) -> Result<RunConfig, CliError> {
    let flags: Map<String, Value> = flags.into_iter().filter(|(_, v)| !v.is_null()).collect();
    check_applicable(&flags, command, "command line")?;
    let mut map = file.unwrap_or_default();
    map.extend(flags);
    serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| {
        let key = e.path().to_string();
        CliError::config_key(
            &key,
            "command line or config file",
            format!("bad value for `{key}`: {}", e.inner()),
        )
    })
}

fn missing(key: &str) -> CliError {
    CliError::config_key(key, "command line or config file", format!("missing required key `{key}`"))
}

impl RunConfig {
    pub fn require<T: Clone>(value: &Option<T>, key: &str) -> Result<T, CliError> {
        value.clone().ok_or_else(|| missing(key))
    }

    pub fn check_model(&mut self) -> Result<(), CliError> {
        let model = self.model.get_or_insert_with(|| "sir".into());
        if model != "sir" {
            return Err(CliError::config_key(
                "model",
                "command line or config file",
                format!("unknown model `{model}` (available: sir)"),
            ));
        }
        Ok(())
    }

    /// SIR parameters with defaults filled in, written back so the echo in
    /// the manifest is complete.
    pub fn sir_params(&mut self, with_b: bool) -> Result<SirParams, CliError> {
        self.check_model()?;
        let d = SirParams::default();
        let params = SirParams {
            b: if with_b { *self.b.get_or_insert(d.b) } else { d.b },
            period_min: *self.period_min.get_or_insert(d.period_min),
            period_max: *self.period_max.get_or_insert(d.period_max),
            contacts_min: *self.contacts_min.get_or_insert(d.contacts_min),
            contacts_max: *self.contacts_max.get_or_insert(d.contacts_max),
            contact_scheme: *self.contact_scheme.get_or_insert(d.contact_scheme),
            width: *self.width.get_or_insert(d.width),
            height: *self.height.get_or_insert(d.height),
            neighborhood: *self.neighborhood.get_or_insert(d.neighborhood),
            boundary: *self.boundary.get_or_insert(d.boundary),
            network: self.network.clone(),
            initial_infected: *self.initial_infected.get_or_insert(d.initial_infected),
        };
        params.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(params)
    }

    /// The configured seed, or one drawn from the clock (recorded so the run
    /// can be repeated).
    pub fn resolve_seed(&mut self) -> (u64, &'static str) {
        match self.seed {
            Some(s) => (s, "config"),
            None => {
                let nanos = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_nanos() as u64)
                    .unwrap_or(0);
                self.seed = Some(nanos);
                (nanos, "clock")
            }
        }
    }
}
