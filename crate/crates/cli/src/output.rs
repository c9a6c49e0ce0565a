//! Report provenance and file writers.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// `None` for commands that draw no random numbers.
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &[&str], config: &impl Serialize, seed: Option<u64>, inputs: &[&Path]) -> Result<Provenance> {
        Ok(Provenance {
            tool: "hdpair",
            version: env!("CARGO_PKG_VERSION"),
            command: command.join(" "),
            seed,
            config: serde_json::to_value(config)?,
            inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        })
    }
}

pub fn digest(path: &Path) -> Result<InputDigest> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).with_context(|| format!("reading {}", path.display()))?;
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex,
    })
}

pub fn out_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `{ "provenance": …, <body fields> }`.
pub fn write_report(path: &Path, prov: &Provenance, body: Value) -> Result<()> {
    let mut obj = serde_json::Map::new();
    obj.insert("provenance".into(), serde_json::to_value(prov)?);
    match body {
        Value::Object(m) => obj.extend(m),
        other => {
            obj.insert("result".into(), other);
        }
    }
    write_json(path, &Value::Object(obj))
}

pub struct CsvOut {
    path: PathBuf,
    w: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<CsvOut> {
        let w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = CsvOut {
            path: path.to_path_buf(),
            w,
        };
        out.row(header)?;
        Ok(out)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        self.w.write_record(fields).with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().with_context(|| format!("writing {}", self.path.display()))
    }
}

/// Shortest round-trip representation; empty for a missing value.
pub fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}
