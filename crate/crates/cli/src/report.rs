//! Output files. Every file carries the schema version, build id, seed and
//! resolved configuration.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thermorbm::data::{load_mnist, synthetic_bars, Split};
use thermorbm::rng::{stream, Purpose};
use thermorbm::BinaryMatrix;

use crate::fail::{CliError, CliResult};
use crate::settings::Resolved;

pub const SCHEMA_VERSION: u32 = 1;
pub const BUILD_ID: &str = env!("THERMORBM_BUILD_ID");

pub const METRICS_FILE: &str = "metrics.ndjson";
pub const TIMING_FILE: &str = "timing.ndjson";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const AIS_REPORT: &str = "ais_report.json";
pub const DIAGNOSTICS_REPORT: &str = "diagnostics_report.json";
pub const SAMPLES_FILE: &str = "samples.json";
pub const STABILITY_REPORT: &str = "stability_report.json";
pub const ORACLE_REPORT: &str = "oracle_report.json";
pub const COMPARISON_REPORT: &str = "comparison_report.json";

pub fn meta(command: &str, seed: u64, config: Option<&Resolved>) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "build": BUILD_ID,
        "command": command,
        "seed": seed,
        "config": config,
    })
}

/// `{"record": kind, "meta": …, …fields}` for single-object reports.
pub fn report(kind: &str, meta: Value, body: impl Serialize) -> CliResult<Value> {
    let mut obj = serde_json::Map::new();
    obj.insert("record".into(), json!(kind));
    obj.insert("meta".into(), meta);
    match serde_json::to_value(body)? {
        Value::Object(fields) => obj.extend(fields),
        other => {
            obj.insert("value".into(), other);
        }
    }
    Ok(Value::Object(obj))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("{}: {e}", dir.display())))
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::new("missing_file", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("schema", format!("{}: {e}", path.display())))
}

/// Newline-delimited records, flushed after every line.
pub struct Ndjson {
    out: BufWriter<File>,
}

impl Ndjson {
    pub fn create(path: &Path) -> CliResult<Self> {
        let f = File::create(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
        Ok(Self { out: BufWriter::new(f) })
    }

    pub fn record(&mut self, kind: &str, body: impl Serialize) -> CliResult<()> {
        let mut obj = serde_json::Map::new();
        obj.insert("record".into(), json!(kind));
        match serde_json::to_value(body)? {
            Value::Object(fields) => obj.extend(fields),
            other => {
                obj.insert("value".into(), other);
            }
        }
        serde_json::to_writer(&mut self.out, &Value::Object(obj))?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Mnist,
    Bars,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding the MNIST IDX files.
    #[arg(long, env = "THERMORBM_DATA_DIR", default_value = "data/mnist-subset")]
    pub dataset_dir: PathBuf,
    #[arg(long, value_enum, default_value = "mnist")]
    pub dataset: DatasetKind,
    /// Grid side of the synthetic bars-and-stripes data.
    #[arg(long, default_value_t = 4)]
    pub bars_side: usize,
    #[arg(long, default_value_t = 1000)]
    pub bars_count: usize,
    /// Keep only the first N rows.
    #[arg(long)]
    pub limit: Option<usize>,
}

impl DataArgs {
    pub fn load(&self, split: Split) -> CliResult<(BinaryMatrix, Value)> {
        let (data, mut desc) = match self.dataset {
            DatasetKind::Mnist => (
                load_mnist(&self.dataset_dir, split)?,
                json!({ "kind": "mnist", "dir": self.dataset_dir }),
            ),
            DatasetKind::Bars => {
                // Fixed data stream so every training seed sees the same set.
                let part = (split == Split::Test) as u64;
                let mut rng = stream(0, Purpose::Dataset, part, 0);
                (
                    synthetic_bars(self.bars_side, self.bars_count, &mut rng)?,
                    json!({ "kind": "bars", "side": self.bars_side, "count": self.bars_count }),
                )
            }
        };
        let data = match self.limit {
            Some(n) if n < data.rows() => data.head(n),
            _ => data,
        };
        desc["split"] = json!(match split {
            Split::Train => "train",
            Split::Test => "test",
        });
        desc["rows"] = json!(data.rows());
        desc["cols"] = json!(data.cols());
        Ok((data, desc))
    }
}
