//! Result files: CSV tables, JSON-lines records, a result record and a
//! SHA-256 manifest, all written through temp-file renames.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SUMMARY: &str = "summary.csv";
pub const RECORDS: &str = "records.jsonl";
pub const RESULT: &str = "result.json";
pub const MANIFEST: &str = "manifest.sha256";
const TMP_SUFFIX: &str = ".tmp";

/// One headline number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    /// The prediction the value is compared with, if any.
    pub reference: Option<f64>,
}

impl Metric {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value: finite(value), stderr: None, reference: None }
    }

    pub fn se(mut self, stderr: f64) -> Self {
        self.stderr = finite(stderr);
        self
    }

    pub fn reference(mut self, r: f64) -> Self {
        self.reference = finite(r);
        self
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// A numeric table written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }
}

/// Everything a runner produces. Deterministic given config and seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub summary: Vec<Metric>,
    pub tables: Vec<Table>,
    pub records: Vec<serde_json::Value>,
}

impl RunOutput {
    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.summary.iter().find(|m| m.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.metric(name).and_then(|m| m.value)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Metadata of a completed run. Everything except `wall_time_s` is
/// reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub kind: String,
    pub schema_version: u32,
    /// Git-style blob hash (SHA-256) of the config file bytes.
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub summary: Vec<Metric>,
    pub files: Vec<String>,
}

/// `sha256("blob <len>\0" ‖ bytes)`, as git computes object ids.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Shortest round-trip form, in exponent notation outside `[1e-4, 1e15)`.
fn fmt(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x != 0.0 && !(1e-4..1e15).contains(&x.abs()) => format!("{x:e}"),
        Some(x) => format!("{x}"),
    }
}

pub fn summary_csv(rows: &[Metric]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["metric", "value", "stderr", "reference"]).map_err(io)?;
    for m in rows {
        w.write_record([m.name.clone(), fmt(m.value), fmt(m.stderr), fmt(m.reference)]).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn table_csv(t: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&t.columns).map_err(io)?;
    for r in &t.rows {
        w.write_record(r.iter().map(|&v| fmt(finite(v)))).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn parse_summary(bytes: &[u8]) -> Result<Vec<Metric>> {
    let mut r = csv::Reader::from_reader(bytes);
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| Error::Domain(format!("bad number `{s}` in summary")))
    };
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Domain(format!("bad summary row: {e}")))?;
            Ok(Metric { name: rec[0].to_string(), value: num(&rec[1])?, stderr: num(&rec[2])?, reference: num(&rec[3])? })
        })
        .collect()
}

pub fn parse_table(name: &str, bytes: &[u8]) -> Result<Table> {
    let mut r = csv::Reader::from_reader(bytes);
    let bad = |e: csv::Error| Error::Domain(format!("bad table {name}: {e}"));
    let columns = r.headers().map_err(bad)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(bad)?;
        let row = rec
            .iter()
            .map(|s| if s.is_empty() { Ok(f64::NAN) } else { s.parse().map_err(|_| Error::Domain(format!("bad number `{s}` in {name}"))) })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { name: name.into(), columns, rows })
}

/// Writes `bytes` to `dir/name` via a temp file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.{}{TMP_SUFFIX}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// Removes temp files left by interrupted runs.
pub fn clean_temp(dir: &Path) -> Result<usize> {
    let mut n = 0;
    if !dir.exists() {
        return Ok(0);
    }
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if name.starts_with('.') && name.ends_with(TMP_SUFFIX) {
            fs::remove_file(&p)?;
            n += 1;
        }
    }
    Ok(n)
}

/// Payload files of a run, in write order: summary, tables, records.
pub fn payload_files(out: &RunOutput, records: bool) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = vec![(SUMMARY.to_string(), summary_csv(&out.summary)?)];
    for t in &out.tables {
        files.push((t.file_name(), table_csv(t)?));
    }
    if records && !out.records.is_empty() {
        let mut buf = Vec::new();
        for r in &out.records {
            serde_json::to_writer(&mut buf, r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
            buf.push(b'\n');
        }
        files.push((RECORDS.to_string(), buf));
    }
    Ok(files)
}

/// Writes the payload, then the result record, then the manifest.
pub fn write_run(dir: &Path, out: &RunOutput, mut record: ResultRecord, records: bool) -> Result<ResultRecord> {
    fs::create_dir_all(dir)?;
    clean_temp(dir)?;
    let files = payload_files(out, records)?;
    let mut manifest = String::new();
    record.files.clear();
    for (name, bytes) in &files {
        write_atomic(dir, name, bytes)?;
        manifest.push_str(&format!("{}  {name}\n", sha256_hex(bytes)));
        record.files.push(name.clone());
    }
    let json = serde_json::to_vec_pretty(&record).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    write_atomic(dir, RESULT, &json)?;
    manifest.push_str(&format!("{}  {RESULT}\n", sha256_hex(&json)));
    write_atomic(dir, MANIFEST, manifest.as_bytes())?;
    Ok(record)
}

pub fn read_record(dir: &Path) -> Result<ResultRecord> {
    let bytes = fs::read(dir.join(RESULT))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Domain(format!("{}: {e}", dir.join(RESULT).display())))
}

/// Verifies every manifest line against the files on disk.
pub fn verify_manifest(dir: &Path) -> Result<()> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    for line in text.lines() {
        let (hash, name) = line.split_once("  ").ok_or_else(|| Error::Domain(format!("bad manifest line `{line}`")))?;
        if sha256_hex(&fs::read(dir.join(name))?) != hash {
            return Err(Error::Domain(format!("{name} does not match its manifest hash")));
        }
    }
    Ok(())
}
