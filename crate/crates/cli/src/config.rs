//! Layered configuration: preset, then JSON file, then `AIRS_` environment
//! variables, then `--override key=value` pairs. Command-line flags are
//! applied by the caller on the resolved struct.

use std::path::Path;
use std::str::FromStr;

use airs_core::config::RunConfig;
use serde_json::Value;

use crate::CliError;

pub const ENV_PREFIX: &str = "AIRS_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    #[default]
    Default,
    Toy,
}

impl Preset {
    pub fn config(self) -> RunConfig {
        match self {
            Preset::Default => RunConfig::default(),
            Preset::Toy => RunConfig::toy(),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(Preset::Default),
            "toy" => Ok(Preset::Toy),
            other => Err(format!("unknown preset `{other}` (expected `default` or `toy`)")),
        }
    }
}

/// Maps `AIRS_RL__PPO__CLIP_EPSILON` to `rl.ppo.clip_epsilon`.
///
/// Double underscores separate path segments because field names contain
/// single ones. Variables without the prefix are ignored.
pub fn env_overrides<I>(vars: I) -> Vec<(String, String)>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            let path = rest.split("__").map(str::to_ascii_lowercase).collect::<Vec<_>>().join(".");
            Some((path, v))
        })
        .collect();
    out.sort();
    out
}

/// Splits `key=value`.
pub fn parse_override(raw: &str) -> Result<(String, String), CliError> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(CliError::Config(format!("override `{raw}` is not of the form key=value"))),
    }
}

/// Values are parsed as JSON when possible, otherwise taken as strings, so
/// `rl.agent=eppo` and `rl.ppo.clip_epsilon=0.2` both work.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut node = doc;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::Config(format!("malformed config path `{path}`")));
    }
    for (i, seg) in segments.iter().enumerate() {
        let Value::Object(map) = node else {
            let parent = segments[..i].join(".");
            return Err(CliError::Config(format!("`{parent}` is not a section, cannot set `{path}`")));
        };
        if i + 1 == segments.len() {
            map.insert(seg.to_string(), value);
            return Ok(());
        }
        node = map.entry(seg.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn read_config_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Deserialises with the offending field path in the error message.
pub fn from_value(doc: Value) -> Result<RunConfig, CliError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })
}

pub fn resolve(
    base: RunConfig,
    file: Option<&Path>,
    env: &[(String, String)],
    overrides: &[String],
) -> Result<RunConfig, CliError> {
    let mut doc = serde_json::to_value(base)?;
    if let Some(path) = file {
        merge(&mut doc, read_config_file(path)?);
    }
    for (key, raw) in env {
        set_path(&mut doc, key, parse_value(raw))?;
    }
    for raw in overrides {
        let (key, value) = parse_override(raw)?;
        set_path(&mut doc, &key, parse_value(&value))?;
    }
    from_value(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_names_become_dotted_paths() {
        let vars = vec![
            ("AIRS_RL__PPO__CLIP_EPSILON".to_string(), "0.2".to_string()),
            ("HOME".to_string(), "/root".to_string()),
            ("AIRS_ENV__USERS".to_string(), "3".to_string()),
        ];
        assert_eq!(
            env_overrides(vars),
            vec![
                ("env.users".to_string(), "3".to_string()),
                ("rl.ppo.clip_epsilon".to_string(), "0.2".to_string()),
            ]
        );
    }

    #[test]
    fn later_layers_win() {
        let env = vec![("rl.seed".to_string(), "5".to_string())];
        let cfg = resolve(Preset::Toy.config(), None, &env, &["rl.seed=9".into(), "rl.agent=hover".into()]).unwrap();
        assert_eq!(cfg.rl.seed, 9);
        assert_eq!(cfg.rl.agent, airs_core::rl::AgentKind::Hover);
        assert_eq!(cfg.env.horizon, 100);
    }

    #[test]
    fn unknown_fields_name_their_path() {
        let err = resolve(Preset::Default.config(), None, &[], &["rl.ppo.clip_epsilom=0.1".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rl.ppo") && msg.contains("clip_epsilom"), "{msg}");
    }

    #[test]
    fn malformed_overrides_are_rejected() {
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("=3").is_err());
        assert!(resolve(Preset::Default.config(), None, &[], &["rl..seed=1".into()]).is_err());
        assert!(resolve(Preset::Default.config(), None, &[], &["rl.seed.x=1".into()]).is_err());
    }
}
