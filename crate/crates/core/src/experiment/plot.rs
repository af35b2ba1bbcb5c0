//! Columnar plot data projected from result tables.
//!
//! Each curve goes to its own whitespace-separated file. Header lines start
//! with `#` and carry the experiment id, the config hash and the column names.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::output::{parse_table, read_record, write_atomic, ResultRecord, Table};
use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// `(ln ln n, top-decile running max, band half-width)` per `r`.
    Multilog,
    /// `(l, empirical, predicted)`.
    Pmf,
    /// `(ln N, mean Card D_N, 0)`.
    KgScan,
    /// `(t, empirical CDF, law CDF)`.
    EvtCdf,
    /// `(ln M, P(Φ > 1), stderr)`.
    MultiSolution,
}

pub const PLOT_KINDS: [&str; 5] = ["multilog", "pmf", "kg-scan", "evt-cdf", "multi-solution"];

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "multilog" => PlotKind::Multilog,
            "pmf" => PlotKind::Pmf,
            "kg-scan" => PlotKind::KgScan,
            "evt-cdf" => PlotKind::EvtCdf,
            "multi-solution" => PlotKind::MultiSolution,
            _ => return domain(format!("unknown plot kind `{s}`; expected one of {}", PLOT_KINDS.join(", "))),
        })
    }
}

impl PlotKind {
    fn accepts(&self, experiment: &str) -> bool {
        match self {
            PlotKind::Multilog => matches!(experiment, "multilog-hit" | "multilog-return"),
            PlotKind::Pmf => matches!(experiment, "poisson-hit" | "mixed-poisson-return"),
            PlotKind::KgScan => experiment == "kg-scan",
            PlotKind::EvtCdf => experiment == "evt",
            PlotKind::MultiSolution => experiment == "rogers-audit",
        }
    }

    fn table(&self) -> &'static str {
        match self {
            PlotKind::Multilog => "multilog",
            PlotKind::Pmf => "pmf",
            PlotKind::KgScan => "scan",
            PlotKind::EvtCdf => "ecdf",
            PlotKind::MultiSolution => "multi",
        }
    }
}

/// One curve: a file name, column labels and rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub file: String,
    pub columns: [&'static str; 3],
    pub rows: Vec<[f64; 3]>,
}

fn col(t: &Table, name: &str) -> Result<Vec<f64>> {
    t.column(name).ok_or_else(|| Error::Domain(format!("table {} has no column `{name}`", t.name)))
}

/// Projects a result table onto plot curves.
pub fn curves(kind: PlotKind, t: &Table) -> Result<Vec<Curve>> {
    let zip3 = |a: Vec<f64>, b: Vec<f64>, c: Vec<f64>| -> Vec<[f64; 3]> { a.into_iter().zip(b).zip(c).map(|((x, y), z)| [x, y, z]).collect() };
    Ok(match kind {
        PlotKind::Multilog => {
            let (r, x, y, lo, hi) = (col(t, "r")?, col(t, "ln_ln_n")?, col(t, "top_decile")?, col(t, "top_decile_lo")?, col(t, "top_decile_hi")?);
            let mut rs: Vec<f64> = r.clone();
            rs.dedup();
            rs.into_iter()
                .map(|rv| Curve {
                    file: format!("multilog_r{rv}.dat"),
                    columns: ["ln_ln_n", "top_decile_running_max", "yerr"],
                    rows: (0..r.len()).filter(|&i| r[i] == rv).map(|i| [x[i], y[i], 0.5 * (hi[i] - lo[i])]).collect(),
                })
                .collect()
        }
        PlotKind::Pmf => {
            let mut out = vec![Curve { file: "pmf.dat".into(), columns: ["l", "empirical", "predicted"], rows: zip3(col(t, "l")?, col(t, "empirical")?, col(t, "expected")?) }];
            if let Some(single) = t.column("single") {
                out.push(Curve { file: "pmf_single.dat".into(), columns: ["l", "empirical", "predicted"], rows: zip3(col(t, "l")?, col(t, "empirical")?, single) });
            }
            out
        }
        PlotKind::KgScan => {
            let n = t.rows.len();
            vec![Curve { file: "kg_scan.dat".into(), columns: ["ln_N", "card_D_N", "yerr"], rows: zip3(col(t, "ln_n")?, col(t, "mean_count")?, vec![0.0; n]) }]
        }
        PlotKind::EvtCdf => vec![Curve { file: "evt_cdf.dat".into(), columns: ["t", "empirical_cdf", "law_cdf"], rows: zip3(col(t, "t")?, col(t, "empirical")?, col(t, "law")?) }],
        PlotKind::MultiSolution => vec![Curve { file: "multi_solution.dat".into(), columns: ["ln_M", "prob", "stderr"], rows: zip3(col(t, "ln_m")?, col(t, "prob")?, col(t, "stderr")?) }],
    })
}

pub fn render(c: &Curve, rec: &ResultRecord) -> String {
    let mut s = format!("# experiment {} ({})\n# config {}\n# {} {} {}\n", rec.id, rec.kind, rec.config_hash, c.columns[0], c.columns[1], c.columns[2]);
    for r in &c.rows {
        s.push_str(&format!("{} {} {}\n", r[0], r[1], r[2]));
    }
    s
}

/// Reads a completed run from `results` and writes one file per curve to `out`.
pub fn emit_plotdata(results: &Path, kind: PlotKind, out: &Path) -> Result<Vec<PathBuf>> {
    let rec = read_record(results)?;
    if !kind.accepts(&rec.kind) {
        return domain(format!("plot kind {kind:?} does not apply to a {} run", rec.kind));
    }
    let name = format!("{}.csv", kind.table());
    if !rec.files.contains(&name) {
        return domain(format!("{} run has no {name}", rec.kind));
    }
    let t = parse_table(kind.table(), &fs::read(results.join(&name))?)?;
    fs::create_dir_all(out)?;
    curves(kind, &t)?.iter().map(|c| write_atomic(out, &c.file, render(c, &rec).as_bytes())).collect()
}
