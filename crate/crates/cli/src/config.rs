//! Layered configuration: command-line flags over a config file over
//! built-in defaults.
//!
//! A TOML file is read hierarchically. For `scca cv`, top-level keys apply
//! first, then keys of `[scca]`, then `[scca.cv]`; outer layers only
//! contribute keys the command knows. A JSON report written by an earlier
//! run is also accepted, in which case its embedded resolved config is
//! used verbatim.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub struct FileConfig {
    path: PathBuf,
    source: Source,
}

enum Source {
    Toml(Map<String, Value>),
    Report { command: String, config: Map<String, Value> },
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().and_then(|e| e.to_str()) == Some("json");
        let source = if is_json {
            let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let prov = v
                .get("provenance")
                .ok_or_else(|| anyhow!("{}: not a report (no \"provenance\" object)", path.display()))?;
            let command = prov.get("command").and_then(Value::as_str).unwrap_or_default().to_string();
            let config = prov
                .get("config")
                .and_then(Value::as_object)
                .cloned()
                .ok_or_else(|| anyhow!("{}: report has no embedded config", path.display()))?;
            Source::Report { command, config }
        } else {
            let t: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            match serde_json::to_value(t)? {
                Value::Object(m) => Source::Toml(m),
                _ => unreachable!("a TOML table serializes to an object"),
            }
        };
        Ok(FileConfig {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Top-level `threads` key, if any.
    pub fn threads(&self) -> Result<Option<usize>> {
        match &self.source {
            Source::Toml(m) => match m.get("threads") {
                None => Ok(None),
                Some(v) => v
                    .as_u64()
                    .map(|t| Some(t as usize))
                    .ok_or_else(|| anyhow!("{}: threads must be a non-negative integer", self.path.display())),
            },
            Source::Report { .. } => Ok(None),
        }
    }

    fn layers(&self, command: &[&str]) -> Result<Vec<(Map<String, Value>, bool)>> {
        match &self.source {
            Source::Report { command: c, config } => {
                let want = command.join(" ");
                if *c != want {
                    bail!("{} was written by `{c}`, not `{want}`", self.path.display());
                }
                Ok(vec![(config.clone(), true)])
            }
            Source::Toml(root) => {
                let mut out = Vec::new();
                let mut table = Some(root);
                for depth in 0..=command.len() {
                    let Some(t) = table else { break };
                    let scalars: Map<String, Value> = t
                        .iter()
                        .filter(|(k, v)| !v.is_object() && k.as_str() != "threads")
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect();
                    out.push((scalars, depth == command.len()));
                    table = command.get(depth).and_then(|s| t.get(*s)).and_then(Value::as_object);
                }
                Ok(out)
            }
        }
    }
}

/// Merge defaults, file layers, and flags into a resolved config.
pub fn resolve<C>(file: Option<&FileConfig>, command: &[&str], flags: &impl Serialize) -> Result<C>
where
    C: Default + Serialize + DeserializeOwned,
{
    let mut merged = match serde_json::to_value(C::default())? {
        Value::Object(m) => m,
        _ => bail!("config type must serialize to an object"),
    };
    if let Some(file) = file {
        for (layer, exact) in file.layers(command)? {
            for (k, v) in layer {
                if merged.contains_key(&k) {
                    merged.insert(k, v);
                } else if exact {
                    bail!("unknown key {k:?} for `{}` in {}", command.join(" "), file.path.display());
                }
            }
        }
    }
    if let Value::Object(m) = serde_json::to_value(flags)? {
        for (k, v) in m {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| anyhow!("invalid configuration for `{}`: {e}", command.join(" ")))
}

pub fn require<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| anyhow!("missing required setting `{name}` (flag --{})", name.replace('_', "-")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Demo {
        seed: u64,
        b: usize,
        out: PathBuf,
    }

    impl Default for Demo {
        fn default() -> Self {
            Demo {
                seed: 0,
                b: 10,
                out: "o".into(),
            }
        }
    }

    #[derive(Serialize)]
    struct Flags {
        b: Option<usize>,
    }

    fn file(text: &str, name: &str) -> (tempfile::TempDir, FileConfig) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        let f = FileConfig::load(&p).unwrap();
        (dir, f)
    }

    #[test]
    fn precedence() {
        let d: Demo = resolve(None, &["x"], &Flags { b: None }).unwrap();
        assert_eq!(d, Demo::default());
        let (_g, f) = file("seed = 4\nother = 1\n[x]\nb = 20\n[x.y]\nout = \"p\"\n", "c.toml");
        let d: Demo = resolve(Some(&f), &["x", "y"], &Flags { b: None }).unwrap();
        assert_eq!(
            d,
            Demo {
                seed: 4,
                b: 20,
                out: "p".into()
            }
        );
        let d: Demo = resolve(Some(&f), &["x", "y"], &Flags { b: Some(7) }).unwrap();
        assert_eq!(d.b, 7);
    }

    #[test]
    fn unknown_key_in_own_section() {
        let (_g, f) = file("[x]\nbogus = 1\n", "c.toml");
        assert!(resolve::<Demo>(Some(&f), &["x"], &Flags { b: None }).is_err());
    }

    #[test]
    fn report_roundtrip() {
        let (_g, f) = file(r#"{"provenance": {"command": "x", "config": {"seed": 9, "b": 3, "out": "q"}}}"#, "r.json");
        let d: Demo = resolve(Some(&f), &["x"], &Flags { b: None }).unwrap();
        assert_eq!(d.seed, 9);
        assert!(resolve::<Demo>(Some(&f), &["y"], &Flags { b: None }).is_err());
    }
}
