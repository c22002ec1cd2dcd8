//! Config files (TOML or JSON) with dotted `key=value` overrides.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("override `{0}` is not of the form key=value")]
    OverrideSyntax(String),
    #[error("override `{key}`: `{segment}` is not a table")]
    NotATable { key: String, segment: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Reads `path` into a table. `.json` files are parsed as JSON, anything
/// else as TOML.
pub fn read_table(path: &Path) -> Result<Table, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |message: String| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    };
    if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        match Value::try_from(json).map_err(|e| parse_err(e.to_string()))? {
            Value::Table(t) => Ok(t),
            _ => Err(parse_err("top level must be an object".into())),
        }
    } else {
        text.parse::<Table>()
            .map_err(|e| parse_err(e.message().to_string()))
    }
}

/// Parses the right-hand side of an override. Anything that is not a valid
/// TOML value is taken as a bare string, so `env=cyl-static` works unquoted.
pub fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies one `a.b.c=value` override, creating intermediate tables.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::OverrideSyntax(spec.to_string()))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::OverrideSyntax(spec.to_string()));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for seg in path {
        let entry = cur
            .entry(seg.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(ConfigError::NotATable {
                    key: key.to_string(),
                    segment: seg.to_string(),
                })
            }
        };
    }
    cur.insert(last.to_string(), parse_value(raw));
    Ok(())
}

/// Builds a `T` from an optional file plus overrides applied in order.
pub fn load<T: DeserializeOwned>(
    path: Option<&Path>,
    overrides: &[String],
) -> Result<T, ConfigError> {
    let mut table = match path {
        Some(p) => read_table(p)?,
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Invalid(e.message().trim().to_string()))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String, ConfigError> {
    toml::to_string_pretty(value).map_err(|e| ConfigError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvPreset;
    use crate::episode::{EpisodeConfig, SpawnSpec};
    use crate::spawn::SpawnKind;
    use std::io::Write;

    #[test]
    fn values_parse_as_toml_or_string() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("true"), Value::Boolean(true));
        assert_eq!(
            parse_value("cyl-static"),
            Value::String("cyl-static".into())
        );
        assert_eq!(parse_value("\"a b\""), Value::String("a b".into()));
        assert_eq!(
            parse_value("[1.0, 2.0]"),
            Value::Array(vec![Value::Float(1.0), Value::Float(2.0)])
        );
    }

    #[test]
    fn overrides_build_episode_config() {
        let cfg: EpisodeConfig = load(
            None,
            &[
                "env=cyl-osc".into(),
                "seed=7".into(),
                "reward.c_thrust=0.75".into(),
                "spawn=l_shaped".into(),
                "start.x=20.0".into(),
                "start.y=30.0".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.env, EnvPreset::CylOsc);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.reward.c_thrust, 0.75);
        assert_eq!(cfg.spawn, SpawnSpec::Named(SpawnKind::LShaped));
        assert_eq!(cfg.start, Some(crate::Vec2::new(20.0, 30.0)));
    }

    #[test]
    fn later_overrides_win_over_file() {
        let mut f = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
        writeln!(f, "env = \"still\"\nseed = 3\n[reward]\nc_dist = 2.0").unwrap();
        let cfg: EpisodeConfig = load(Some(f.path()), &["seed=9".into()]).unwrap();
        assert_eq!(cfg.env, EnvPreset::Still);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.reward.c_dist, 2.0);
    }

    #[test]
    fn unknown_keys_and_bad_syntax_are_rejected() {
        assert!(matches!(
            load::<EpisodeConfig>(None, &["env=still".into(), "stepz=3".into()]),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            load::<EpisodeConfig>(None, &["env".into()]),
            Err(ConfigError::OverrideSyntax(_))
        ));
        assert!(matches!(
            load::<EpisodeConfig>(None, &["env=still".into(), "env.x=1".into()]),
            Err(ConfigError::NotATable { .. })
        ));
    }

    #[test]
    fn full_config_round_trips_through_toml() {
        let mut cfg = EpisodeConfig::new(EnvPreset::CylStatic);
        cfg.flow = Some(crate::env::FlowSpec::for_preset(&EnvPreset::CylStatic).unwrap());
        cfg.vehicle = Some(
            crate::env::Environment::from_preset(&EnvPreset::CylStatic)
                .unwrap()
                .vehicle_params(),
        );
        cfg.start = Some(crate::Vec2::new(20.0, 50.0));
        cfg.phase = Some(12);
        let text = to_toml(&cfg).unwrap();
        let mut f = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let back: EpisodeConfig = load(Some(f.path()), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn json_files_are_accepted() {
        let mut f = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
        write!(f, r#"{{"env": "gyre2", "step_limit": 100}}"#).unwrap();
        let cfg: EpisodeConfig = load(Some(f.path()), &[]).unwrap();
        assert_eq!(cfg.env, EnvPreset::Gyre2);
        assert_eq!(cfg.step_limit, 100);
    }
}
