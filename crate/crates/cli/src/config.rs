//! Run configuration: a flat TOML table validated against a fixed schema.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Table, Value};

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug)]
pub enum ConfigError {
    MissingKey(String),
    TypeMismatch { key: String, expected: &'static str },
    SchemaVersion { found: i64 },
    UnknownKey(String),
    Parse { origin: String, reason: String },
    Io { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::MissingKey(k) => write!(f, "missing key `{k}`"),
            ConfigError::TypeMismatch { key, expected } => write!(f, "key `{key}`: expected {expected}"),
            ConfigError::SchemaVersion { found } => {
                write!(f, "key `schema_version`: found {found}, this build reads {SCHEMA_VERSION}")
            }
            ConfigError::UnknownKey(k) => write!(f, "unknown key `{k}`"),
            ConfigError::Parse { origin, reason } => write!(f, "cannot parse {origin}: {reason}"),
            ConfigError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Fully resolved configuration. Field names are the config keys.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub schema_version: i64,
    pub backend: String,
    pub modes_per_axis: usize,
    pub grid_dims: usize,
    pub grid_modes: usize,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub t_end: f64,
    pub n_samples: usize,
    /// Fixed step count for `simulate-kinetic`; 0 integrates to `t_end`.
    pub n_steps: usize,
    pub integrator: String,
    pub c_cfl: f64,
    pub dt_relax: f64,
    pub mhd_dt: f64,
    pub gauss_projection_every: usize,
    pub sobolev_order: usize,
    pub error_order: usize,
    pub fluid: String,
    pub amplitude: f64,
    pub init: String,
    pub init_amplitude: f64,
    pub check_samples: usize,
    pub seed: u64,
    pub out: String,
    /// Empty disables the operator cache.
    pub cache_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            backend: "relaxation".into(),
            modes_per_axis: 6,
            grid_dims: 1,
            grid_modes: 32,
            eps: 0.2,
            eps_list: vec![0.4, 0.2, 0.1, 0.05],
            t_end: 0.5,
            n_samples: 20,
            n_steps: 0,
            integrator: "midpoint".into(),
            c_cfl: 1.0,
            dt_relax: 0.5,
            mhd_dt: 1e-3,
            gauss_projection_every: 0,
            sobolev_order: 2,
            error_order: 1,
            fluid: "shear".into(),
            amplitude: 0.05,
            init: "well_prepared".into(),
            init_amplitude: 0.01,
            check_samples: 100,
            seed: 0,
            out: "run".into(),
            cache_dir: String::new(),
        }
    }
}

enum Kind {
    Int,
    Float,
    Str(&'static [&'static str]),
    FloatList,
}

const KEYS: &[(&str, Kind)] = &[
    ("schema_version", Kind::Int),
    ("backend", Kind::Str(&["relaxation", "hard_sphere"])),
    ("modes_per_axis", Kind::Int),
    ("grid_dims", Kind::Int),
    ("grid_modes", Kind::Int),
    ("eps", Kind::Float),
    ("eps_list", Kind::FloatList),
    ("t_end", Kind::Float),
    ("n_samples", Kind::Int),
    ("n_steps", Kind::Int),
    ("integrator", Kind::Str(&["midpoint", "imex"])),
    ("c_cfl", Kind::Float),
    ("dt_relax", Kind::Float),
    ("mhd_dt", Kind::Float),
    ("gauss_projection_every", Kind::Int),
    ("sobolev_order", Kind::Int),
    ("error_order", Kind::Int),
    ("fluid", Kind::Str(&["shear", "zero"])),
    ("amplitude", Kind::Float),
    ("init", Kind::Str(&["well_prepared", "general"])),
    ("init_amplitude", Kind::Float),
    ("check_samples", Kind::Int),
    ("seed", Kind::Int),
    ("out", Kind::Str(&[])),
    ("cache_dir", Kind::Str(&[])),
];

fn mismatch(key: &str, expected: &'static str) -> ConfigError {
    ConfigError::TypeMismatch { key: key.to_string(), expected }
}

fn as_int(key: &str, v: &Value) -> Result<i64, ConfigError> {
    v.as_integer().ok_or_else(|| mismatch(key, "an integer"))
}

fn as_count(key: &str, v: &Value) -> Result<usize, ConfigError> {
    let n = as_int(key, v)?;
    usize::try_from(n).map_err(|_| mismatch(key, "a non-negative integer"))
}

fn as_float(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(n) => Ok(*n as f64),
        _ => Err(mismatch(key, "a number")),
    }
}

fn as_eps(key: &str, v: &Value) -> Result<f64, ConfigError> {
    let e = as_float(key, v)?;
    if e > 0.0 && e <= 1.0 {
        Ok(e)
    } else {
        Err(mismatch(key, "a number in (0, 1]"))
    }
}

fn as_positive(key: &str, v: &Value) -> Result<f64, ConfigError> {
    let x = as_float(key, v)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(mismatch(key, "a positive number"))
    }
}

/// Parse `key=value`; the value is read as a TOML literal, falling back to a
/// bare string.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Parse {
        origin: format!("override `{s}`"),
        reason: "expected key=value".into(),
    })?;
    let k = k.trim().to_string();
    let v = v.trim();
    let value = match format!("v = {v}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(v.to_string()),
    };
    Ok((k, value))
}

/// Read `path` (if any), apply `overrides` in order, then validate.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
            let t = text.parse::<Table>().map_err(|e| ConfigError::Parse {
                origin: p.display().to_string(),
                reason: e.to_string(),
            })?;
            if !t.contains_key("schema_version") {
                return Err(ConfigError::MissingKey("schema_version".into()));
            }
            t
        }
        None => Table::new(),
    };
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    from_table(&table)
}

pub fn from_table(table: &Table) -> Result<RunConfig, ConfigError> {
    let mut c = RunConfig::default();
    for (key, value) in table {
        let kind = KEYS
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, kind)| kind)
            .ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
        let k = key.as_str();
        if let Kind::Str(allowed) = kind {
            let s = value.as_str().ok_or_else(|| mismatch(k, "a string"))?;
            if !allowed.is_empty() && !allowed.contains(&s) {
                return Err(mismatch(k, "one of the documented values"));
            }
        }
        let text = || value.as_str().unwrap_or_default().to_string();
        match k {
            "schema_version" => {
                let found = as_int(k, value)?;
                if found != SCHEMA_VERSION {
                    return Err(ConfigError::SchemaVersion { found });
                }
            }
            "backend" => c.backend = text(),
            "modes_per_axis" => c.modes_per_axis = as_count(k, value)?,
            "grid_dims" => c.grid_dims = as_count(k, value)?,
            "grid_modes" => c.grid_modes = as_count(k, value)?,
            "eps" => c.eps = as_eps(k, value)?,
            "eps_list" => {
                let arr = value.as_array().ok_or_else(|| mismatch(k, "an array of numbers"))?;
                c.eps_list = arr.iter().map(|v| as_eps(k, v)).collect::<Result<_, _>>()?;
            }
            "t_end" => c.t_end = as_positive(k, value)?,
            "n_samples" => c.n_samples = as_count(k, value)?,
            "n_steps" => c.n_steps = as_count(k, value)?,
            "integrator" => c.integrator = text(),
            "c_cfl" => c.c_cfl = as_positive(k, value)?,
            "dt_relax" => c.dt_relax = as_positive(k, value)?,
            "mhd_dt" => c.mhd_dt = as_positive(k, value)?,
            "gauss_projection_every" => c.gauss_projection_every = as_count(k, value)?,
            "sobolev_order" => c.sobolev_order = as_count(k, value)?,
            "error_order" => c.error_order = as_count(k, value)?,
            "fluid" => c.fluid = text(),
            "amplitude" => c.amplitude = as_float(k, value)?,
            "init" => c.init = text(),
            "init_amplitude" => c.init_amplitude = as_float(k, value)?,
            "check_samples" => c.check_samples = as_count(k, value)?,
            "seed" => c.seed = as_count(k, value)? as u64,
            "out" => c.out = text(),
            "cache_dir" => c.cache_dir = text(),
            _ => unreachable!("key table and match arms agree"),
        }
    }
    if ![1, 2, 3].contains(&c.grid_dims) {
        return Err(mismatch("grid_dims", "1, 2 or 3"));
    }
    if c.modes_per_axis < 2 {
        return Err(mismatch("modes_per_axis", "an integer >= 2"));
    }
    if c.n_samples == 0 {
        return Err(mismatch("n_samples", "a positive integer"));
    }
    Ok(c)
}

impl RunConfig {
    /// Canonical TOML text; reading it back yields the same config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
        from_table(&text.parse::<Table>().unwrap())
    }

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn minimal_file_gives_defaults() {
        let f = write("schema_version = 1\n");
        assert_eq!(parse_config(Some(f.path()), &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn negative_eps_is_a_type_mismatch() {
        match parse_str("eps = -0.1") {
            Err(ConfigError::TypeMismatch { key, .. }) => assert_eq!(key, "eps"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_str("eps_list = [0.4, 1.5]"), Err(ConfigError::TypeMismatch { .. })));
        assert!(parse_str("eps = 1.0").is_ok());
    }

    #[test]
    fn errors_name_the_key() {
        let f = write("t_end = 0.5\n");
        let e = parse_config(Some(f.path()), &[]).unwrap_err();
        assert!(matches!(&e, ConfigError::MissingKey(k) if k == "schema_version"));
        assert!(matches!(parse_str("schema_version = 2"), Err(ConfigError::SchemaVersion { found: 2 })));
        let e = parse_str("grid_modes = \"many\"").unwrap_err();
        assert!(e.to_string().contains("grid_modes"));
        let e = parse_str("viscosity = 1.0").unwrap_err();
        assert!(matches!(&e, ConfigError::UnknownKey(k) if k == "viscosity"));
        assert!(matches!(parse_str("backend = \"bgk\""), Err(ConfigError::TypeMismatch { .. })));
    }

    #[test]
    fn override_beats_file_and_echo_round_trips() {
        let f = write("schema_version = 1\neps = 0.3\nbackend = \"relaxation\"\n");
        let o = vec![parse_override("eps=0.1").unwrap(), parse_override("out=runs/a").unwrap()];
        let c = parse_config(Some(f.path()), &o).unwrap();
        assert_eq!((c.eps, c.out.as_str()), (0.1, "runs/a"));
        let echoed = write(&c.to_toml());
        assert_eq!(parse_config(Some(echoed.path()), &[]).unwrap(), c);
    }

    #[test]
    fn integer_literals_are_accepted_for_numbers() {
        let c = parse_str("t_end = 1\neps_list = [1, 0.5]").unwrap();
        assert_eq!((c.t_end, c.eps_list.clone()), (1.0, vec![1.0, 0.5]));
    }
}
