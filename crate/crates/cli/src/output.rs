//! CSV tables and the JSON run manifest.

use anyhow::Context;
use serde::Serialize;
use std::path::Path;

/// Version of the manifest layout and of every CSV column schema.
pub const SCHEMA_VERSION: u32 = 1;

/// One CSV artifact, rendered in memory so nothing is written if a later step fails.
pub struct Table {
    pub file: String,
    pub schema: &'static str,
    pub columns: Vec<String>,
    pub bytes: Vec<u8>,
}

impl Table {
    pub fn new<R: Serialize>(file: &str, schema: &'static str, rows: &[R]) -> anyhow::Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().context("flushing csv")?;
        let columns = bytes
            .split(|&b| b == b'\n')
            .next()
            .map(|h| String::from_utf8_lossy(h).split(',').map(str::to_owned).collect())
            .unwrap_or_default();
        Ok(Self {
            file: file.into(),
            schema,
            columns,
            bytes,
        })
    }
}

#[derive(Serialize)]
struct Artifact<'a> {
    file: &'a str,
    schema: &'a str,
    schema_version: u32,
    columns: &'a [String],
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize, R: Serialize> {
    schema_version: u32,
    command: &'a str,
    code_version: &'a str,
    config: &'a C,
    artifacts: Vec<Artifact<'a>>,
    results: &'a R,
}

/// Writes every table and `<command>.json` into `dir`.
pub fn write_run<C: Serialize, R: Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
    results: &R,
    tables: &[Table],
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in tables {
        let p = dir.join(&t.file);
        std::fs::write(&p, &t.bytes).with_context(|| format!("writing {}", p.display()))?;
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command,
        code_version: env!("CARGO_PKG_VERSION"),
        config,
        artifacts: tables
            .iter()
            .map(|t| Artifact {
                file: &t.file,
                schema: t.schema,
                schema_version: SCHEMA_VERSION,
                columns: &t.columns,
            })
            .collect(),
        results,
    };
    let p = dir.join(format!("{command}.json"));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
    Ok(())
}
