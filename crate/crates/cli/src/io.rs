//! CSV and JSON file formats.
//!
//! Every CSV starts with a header row and writes decimals through [`fmt_sig`]. JSON is
//! pretty-printed by `serde_json`, which emits the shortest representation that reads
//! back to the same double.

use std::fs;
use std::path::Path;

use hardneg_core::dynamics::{FieldArrow, VectorField};
use hardneg_core::eval::DiagramPoint;
use hardneg_core::mining::is_hard;
use hardneg_core::synthdata::LabeledDataset;
use hardneg_core::trainer::{EpochLog, ModelParams};
use hardneg_core::{Label, MinedTriplet};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::num::fmt_sig;

/// Builds CSV text in memory; rows are written to disk in one go by [`write_bytes`].
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Table { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serialisable value");
    out.push(b'\n');
    out
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Header `label,x0,...,x{d-1}`, then one row per point.
pub fn dataset_csv(ds: &LabeledDataset) -> Vec<u8> {
    let mut header = vec!["label".to_string()];
    header.extend((0..ds.dim()).map(|i| format!("x{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&header);
    for (p, label) in ds.points.iter().zip(&ds.labels) {
        t.row(std::iter::once(label.to_string()).chain(p.iter().map(|&x| fmt_sig(x))));
    }
    t.into_bytes()
}

/// Parses the dataset format. Errors name the offending line.
pub fn parse_dataset(bytes: &[u8], source: &str) -> CliResult<LabeledDataset> {
    let err = |line: u64, msg: String| CliError::Data(format!("{source}: line {line}: {msg}"));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.get(0) != Some("label") {
        return Err(err(1, "header must start with `label`".into()));
    }
    let dim = header.len() - 1;
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != format!("x{i}") {
            return Err(err(1, format!("expected column `x{i}`, found `{name}`")));
        }
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 1 {
            return Err(err(
                line,
                format!("expected {} fields, found {}", dim + 1, record.len()),
            ));
        }
        let label: Label = record[0]
            .trim()
            .parse()
            .map_err(|_| err(line, format!("bad label `{}`", &record[0])))?;
        let mut p = Vec::with_capacity(dim);
        for field in record.iter().skip(1) {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(line, format!("bad number `{field}`")))?;
            if !x.is_finite() {
                return Err(err(line, format!("non-finite value `{field}`")));
            }
            p.push(x);
        }
        points.push(p);
        labels.push(label);
    }
    LabeledDataset::new(points, labels).map_err(|e| CliError::Data(format!("{source}: {e}")))
}

pub fn read_dataset(path: &Path) -> CliResult<LabeledDataset> {
    parse_dataset(&read_bytes(path)?, &path.display().to_string())
}

pub const FIELD_HEADER: [&str; 6] = [
    "s_ap",
    "s_an",
    "d_sap",
    "d_san",
    "d_sap_total",
    "d_san_total",
];

pub fn field_csv(field: &VectorField) -> Vec<u8> {
    let mut t = Table::new(&FIELD_HEADER);
    for a in &field.arrows {
        t.row(arrow_fields(a));
    }
    t.into_bytes()
}

fn arrow_fields(a: &FieldArrow) -> [String; 6] {
    [
        a.s_ap,
        a.s_an,
        a.d_sap,
        a.d_san,
        a.d_sap_total,
        a.d_san_total,
    ]
    .map(fmt_sig)
}

/// One row per visited point, with the step taken from it.
pub fn trajectory_csv(rows: &[FieldArrow]) -> Vec<u8> {
    let mut header = vec!["step"];
    header.extend(FIELD_HEADER);
    let mut t = Table::new(&header);
    for (i, a) in rows.iter().enumerate() {
        t.row(std::iter::once(i.to_string()).chain(arrow_fields(a)));
    }
    t.into_bytes()
}

pub fn triplets_csv(triplets: &[MinedTriplet]) -> Vec<u8> {
    let mut t = Table::new(&["anchor", "positive", "negative", "s_ap", "s_an"]);
    for m in triplets {
        t.row([
            m.anchor.to_string(),
            m.positive.to_string(),
            m.negative.to_string(),
            fmt_sig(m.coord.s_ap),
            fmt_sig(m.coord.s_an),
        ]);
    }
    t.into_bytes()
}

pub fn diagram_csv(points: &[DiagramPoint]) -> Vec<u8> {
    let mut t = Table::new(&["index", "label", "s_ap", "s_an", "hard"]);
    for p in points {
        t.row([
            p.index.to_string(),
            p.label.to_string(),
            fmt_sig(p.coord.s_ap),
            fmt_sig(p.coord.s_an),
            u8::from(is_hard(p.coord)).to_string(),
        ]);
    }
    t.into_bytes()
}

/// The scalar part of an epoch log; snapshots go to their own files.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub hard_fraction: f64,
    pub recall_at_1: f64,
    pub collapse: f64,
}

impl From<&EpochLog> for EpochRecord {
    fn from(l: &EpochLog) -> Self {
        EpochRecord {
            epoch: l.epoch,
            mean_loss: l.mean_loss,
            hard_fraction: l.hard_fraction,
            recall_at_1: l.recall_at_1,
            collapse: l.collapse,
        }
    }
}

pub fn epoch_log_csv(records: &[EpochRecord]) -> Vec<u8> {
    let mut t = Table::new(&[
        "epoch",
        "mean_loss",
        "hard_fraction",
        "recall_at_1",
        "collapse",
    ]);
    for r in records {
        t.row([
            r.epoch.to_string(),
            fmt_sig(r.mean_loss),
            fmt_sig(r.hard_fraction),
            fmt_sig(r.recall_at_1),
            fmt_sig(r.collapse),
        ]);
    }
    t.into_bytes()
}

pub fn read_model(path: &Path) -> CliResult<ModelParams> {
    let m: ModelParams = read_json(path)?;
    // Re-run the constructor checks on deserialised data.
    ModelParams::new(m.input_dim, m.embed_dim, m.weights, m.bias)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
