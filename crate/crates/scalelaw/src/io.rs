//! Experiment files (CSV and JSON), registries and fitted models on disk.
//!
//! CSV layout, one row per observation (and per proxy, when a benchmark has
//! several):
//!
//! ```text
//! run_id,n_params,d_tokens,flops,tpr,dataset,benchmark,metric_type,value,k,proxy_name,proxy_value
//! ```
//!
//! `flops` and `tpr` may be empty (derived as `6ND` and `D/N`); `k` is set
//! only for pass@k observations.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use scalelaw_core::data::{BenchmarkRegistry, ExperimentRecord, MetricObservation, MetricType};
use scalelaw_core::fit::ScalingModel;

use crate::error::{Error, Result};
use crate::manifest::write_atomic;

pub const CSV_COLUMNS: [&str; 12] = [
    "run_id",
    "n_params",
    "d_tokens",
    "flops",
    "tpr",
    "dataset",
    "benchmark",
    "metric_type",
    "value",
    "k",
    "proxy_name",
    "proxy_value",
];

const REQUIRED_COLUMNS: [&str; 7] = [
    "run_id",
    "n_params",
    "d_tokens",
    "dataset",
    "benchmark",
    "metric_type",
    "value",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Format implied by a `.csv` or `.json` extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        ext.to_ascii_lowercase().parse().map_err(|_| {
            Error::Usage(format!(
                "cannot infer format of `{}`: expected a .csv or .json extension",
                path.display()
            ))
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Usage(format!("unknown format `{s}` (csv|json)"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    run_id: String,
    n_params: f64,
    d_tokens: f64,
    flops: Option<f64>,
    tpr: Option<f64>,
    dataset: String,
    benchmark: String,
    /// Parsed separately: enum errors from the CSV deserializer carry no column.
    metric_type: String,
    value: f64,
    k: Option<u32>,
    proxy_name: Option<String>,
    proxy_value: Option<f64>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

pub fn load_experiments(path: &Path, format: Format) -> Result<Vec<ExperimentRecord>> {
    let reader = open(path)?;
    match format {
        Format::Csv => read_csv(reader, &source_name(path)),
        Format::Json => read_json(reader, &source_name(path)),
    }
}

/// Loads with the format implied by the file extension.
pub fn load_experiments_auto(path: &Path) -> Result<Vec<ExperimentRecord>> {
    load_experiments(path, Format::from_path(path)?)
}

pub fn save_experiments(path: &Path, records: &[ExperimentRecord], format: Format) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(&mut buf, records)?,
        Format::Json => buf = to_json(&records)?.into_bytes(),
    }
    write_atomic(path, &buf)
}

fn core_schema(source: &str, line: Option<u64>, err: scalelaw_core::Error) -> Error {
    match err {
        scalelaw_core::Error::Schema { field, message } => Error::Schema {
            source_name: source.into(),
            line,
            field,
            message,
        },
        other => Error::Core(other),
    }
}

fn schema(source: &str, line: u64, field: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        source_name: source.into(),
        line: Some(line),
        field: field.into(),
        message: message.into(),
    }
}

fn csv_error(source: &str, headers: &csv::StringRecord, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.kind() {
        csv::ErrorKind::Deserialize { err: de, .. } => {
            let field = de
                .field()
                .and_then(|i| headers.get(i as usize))
                .unwrap_or("?")
                .to_string();
            Error::Schema {
                source_name: source.into(),
                line: Some(line),
                field,
                message: de.kind().to_string(),
            }
        }
        _ => Error::Parse {
            source_name: source.into(),
            line,
            message: err.to_string(),
        },
    }
}

struct Run {
    line: u64,
    n_params: f64,
    d_tokens: f64,
    flops: Option<f64>,
    tpr: Option<f64>,
    dataset: String,
    observations: Vec<MetricObservation>,
    index: HashMap<(String, Option<u32>), usize>,
}

/// Collects CSV rows into records, preserving first-appearance order.
#[derive(Default)]
struct RecordBuilder {
    order: Vec<String>,
    runs: HashMap<String, Run>,
}

impl RecordBuilder {
    fn add(&mut self, source: &str, line: u64, row: CsvRow) -> Result<()> {
        let metric_type: MetricType =
            row.metric_type.parse().map_err(|e: scalelaw_core::Error| {
                schema(source, line, "metric_type", e.to_string())
            })?;
        let mut obs = MetricObservation::new(row.benchmark.clone(), metric_type, row.value);
        obs.k = row.k;
        match (&row.proxy_name, row.proxy_value) {
            (Some(name), Some(v)) => {
                obs.proxies.insert(name.clone(), v);
            }
            (Some(_), None) => {
                return Err(schema(
                    source,
                    line,
                    "proxy_value",
                    "proxy_name given without a value",
                ))
            }
            (None, Some(_)) => {
                return Err(schema(
                    source,
                    line,
                    "proxy_name",
                    "proxy_value given without a name",
                ))
            }
            (None, None) => {}
        }
        obs.validate()
            .map_err(|e| core_schema(source, Some(line), e))?;

        let run = match self.runs.get_mut(&row.run_id) {
            Some(run) => {
                let same =
                    |a: Option<f64>, b: Option<f64>| a.map(f64::to_bits) == b.map(f64::to_bits);
                for (field, ok) in [
                    ("n_params", run.n_params.to_bits() == row.n_params.to_bits()),
                    ("d_tokens", run.d_tokens.to_bits() == row.d_tokens.to_bits()),
                    ("flops", same(run.flops, row.flops)),
                    ("tpr", same(run.tpr, row.tpr)),
                    ("dataset", run.dataset == row.dataset),
                ] {
                    if !ok {
                        return Err(schema(
                            source,
                            line,
                            field,
                            format!("disagrees with line {} for run `{}`", run.line, row.run_id),
                        ));
                    }
                }
                run
            }
            None => {
                self.order.push(row.run_id.clone());
                self.runs.entry(row.run_id.clone()).or_insert(Run {
                    line,
                    n_params: row.n_params,
                    d_tokens: row.d_tokens,
                    flops: row.flops,
                    tpr: row.tpr,
                    dataset: row.dataset.clone(),
                    observations: Vec::new(),
                    index: HashMap::new(),
                })
            }
        };

        let key = (row.benchmark.clone(), row.k);
        match run.index.get(&key) {
            None => {
                run.index.insert(key, run.observations.len());
                run.observations.push(obs);
            }
            Some(&i) => {
                // A repeated key may only add a new proxy to the same score.
                let existing = &mut run.observations[i];
                let merges = existing.metric_type == obs.metric_type
                    && existing.value.to_bits() == obs.value.to_bits()
                    && row
                        .proxy_name
                        .as_ref()
                        .is_some_and(|p| !existing.proxies.contains_key(p));
                if !merges {
                    return Err(Error::Duplicate {
                        source_name: source.into(),
                        line,
                        run_id: row.run_id,
                        benchmark: row.benchmark,
                        k: row.k,
                    });
                }
                existing.proxies.extend(obs.proxies);
            }
        }
        Ok(())
    }

    fn finish(mut self, source: &str) -> Result<Vec<ExperimentRecord>> {
        let mut out = Vec::with_capacity(self.order.len());
        for id in &self.order {
            let run = self.runs.remove(id).expect("every ordered id has a run");
            let mut rec = ExperimentRecord::new(
                id.clone(),
                run.n_params,
                run.d_tokens,
                run.flops,
                run.tpr,
                run.dataset,
            )
            .map_err(|e| core_schema(source, Some(run.line), e))?;
            rec.observations = run.observations;
            out.push(rec);
        }
        Ok(out)
    }
}

pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<Vec<ExperimentRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(source, &csv::StringRecord::new(), e))?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    for h in &headers {
        if !CSV_COLUMNS.contains(&h) {
            return Err(schema(source, 1, h, "unknown column"));
        }
    }
    for col in REQUIRED_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(schema(source, 1, col, "missing column"));
        }
    }
    let mut builder = RecordBuilder::default();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(source, &headers, e)),
        }
        let line = record.position().map_or(0, |p| p.line());
        let row: CsvRow = record.deserialize(Some(&headers)).map_err(|e| {
            match csv_error(source, &headers, e) {
                Error::Schema {
                    source_name,
                    field,
                    message,
                    ..
                } => Error::Schema {
                    source_name,
                    line: Some(line),
                    field,
                    message,
                },
                other => other,
            }
        })?;
        builder.add(source, line, row)?;
    }
    builder.finish(source)
}

pub fn write_csv<W: Write>(writer: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    let io_err = |e: csv::Error| Error::io("<csv output>", io::Error::other(e));
    wtr.write_record(CSV_COLUMNS).map_err(io_err)?;
    for r in records {
        for o in &r.observations {
            let row = |proxy: Option<(&String, &f64)>| CsvRow {
                run_id: r.run_id.clone(),
                n_params: r.n_params,
                d_tokens: r.d_tokens,
                flops: Some(r.flops),
                tpr: Some(r.tpr),
                dataset: r.dataset.clone(),
                benchmark: o.benchmark.clone(),
                metric_type: o.metric_type.as_str().to_string(),
                value: o.value,
                k: o.k,
                proxy_name: proxy.map(|p| p.0.clone()),
                proxy_value: proxy.map(|p| *p.1),
            };
            if o.proxies.is_empty() {
                wtr.serialize(row(None)).map_err(io_err)?;
            } else {
                for p in &o.proxies {
                    wtr.serialize(row(Some(p))).map_err(io_err)?;
                }
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))
}

/// JSON array of records, each with an `observations` array.
pub fn read_json<R: Read>(reader: R, source: &str) -> Result<Vec<ExperimentRecord>> {
    let records: Vec<ExperimentRecord> =
        serde_json::from_reader(reader).map_err(|e| Error::Parse {
            source_name: source.into(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
    let mut seen: BTreeMap<(&str, &str, Option<u32>), ()> = BTreeMap::new();
    for r in &records {
        r.validate()
            .map_err(|e| match core_schema(source, None, e) {
                Error::Schema {
                    source_name,
                    line,
                    field,
                    message,
                } => Error::Schema {
                    source_name,
                    line,
                    field,
                    message: format!("run `{}`: {message}", r.run_id),
                },
                other => other,
            })?;
        for o in &r.observations {
            if seen.insert((&r.run_id, &o.benchmark, o.k), ()).is_some() {
                return Err(Error::Duplicate {
                    source_name: source.into(),
                    line: 0,
                    run_id: r.run_id.clone(),
                    benchmark: o.benchmark.clone(),
                    k: o.k,
                });
            }
        }
    }
    Ok(records)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::io("<json output>", io::Error::other(e)))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::Parse {
        source_name: source_name(path),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn load_model(path: &Path) -> Result<ScalingModel> {
    read_json_file(path)
}

/// Registry file: `{name: {metric_type, q_random, filter_margin}}`.
pub fn load_registry(path: &Path) -> Result<BenchmarkRegistry> {
    read_json_file(path)
}
