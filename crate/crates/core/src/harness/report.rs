//! Plot-ready run output: one file per table in a run directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassF1, RunArtifacts};
use crate::error::{Error, Result};
use crate::learner::save_params;

pub const PULL_HISTORY_FILE: &str = "pull_history.csv";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    fn ext(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    strategy: String,
    seed: u64,
    rounds: u64,
    convergence_round: Option<u64>,
    macro_f1: f64,
    files: &'a [String],
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    rank: usize,
    class_id: String,
    pulls: u64,
}

#[derive(Serialize)]
struct SnapshotRow<'a> {
    round: u64,
    rank: usize,
    class_id: &'a str,
    pulls: u64,
}

#[derive(Serialize)]
struct F1Row<'a> {
    rank: usize,
    class_id: &'a str,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_rows<T: Serialize>(
    path: &Path,
    format: ReportFormat,
    header: &[&str],
    rows: &[T],
) -> Result<()> {
    let mut w = create(path)?;
    match format {
        ReportFormat::Csv => {
            let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(&mut w);
            // Header written by hand so empty tables still get one.
            csv.write_record(header)?;
            for r in rows {
                csv.serialize(r)?;
            }
            csv.flush().map_err(|e| Error::io(path, e))?;
        }
        ReportFormat::Json => serde_json::to_writer_pretty(&mut w, rows)?,
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const REWARD_HEADER: &[&str] = &["round", "class_id", "reward", "loss_before", "loss_after"];
const COUNT_HEADER: &[&str] = &["rank", "class_id", "pulls"];
const SNAPSHOT_HEADER: &[&str] = &["round", "rank", "class_id", "pulls"];
const F1_HEADER: &[&str] = &["rank", "class_id", "tp", "fp", "fn", "precision", "recall", "f1"];

/// F1 rows in `order`, ranks 1-based.
pub fn write_f1_csv<W: Write>(
    table: &BTreeMap<String, ClassF1>,
    order: &[String],
    w: W,
) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record(F1_HEADER)?;
    for row in f1_rows(table, order) {
        csv.serialize(row)?;
    }
    csv.flush().map_err(|e| Error::io("<f1>", e))
}

fn f1_rows<'a>(table: &'a BTreeMap<String, ClassF1>, order: &'a [String]) -> Vec<F1Row<'a>> {
    order
        .iter()
        .filter_map(|c| table.get(c).map(|f| (c, f)))
        .enumerate()
        .map(|(i, (c, f))| F1Row {
            rank: i + 1,
            class_id: c,
            tp: f.tp,
            fp: f.fp,
            fn_: f.fn_,
            precision: f.precision,
            recall: f.recall,
            f1: f.f1,
        })
        .collect()
}

/// Write every table of `artifacts` into `dir`, creating it if needed.
/// Returns the paths written. The pull history is always CSV.
pub fn emit_report(artifacts: &RunArtifacts, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = format.ext();
    let mut written = Vec::new();

    let path = dir.join(PULL_HISTORY_FILE);
    artifacts.pulls.write_csv(create(&path)?)?;
    written.push(path);

    let path = dir.join(format!("rewards.{ext}"));
    write_rows(&path, format, REWARD_HEADER, &artifacts.rewards)?;
    written.push(path);

    let path = dir.join(format!("pull_counts.{ext}"));
    write_rows(&path, format, COUNT_HEADER, &count_rows(&artifacts.final_ranking))?;
    written.push(path);

    let snapshot_rows: Vec<SnapshotRow> = artifacts
        .snapshots
        .iter()
        .flat_map(|(round, r)| {
            r.order().iter().enumerate().map(move |(i, c)| SnapshotRow {
                round: *round,
                rank: i + 1,
                class_id: c,
                pulls: r.counts()[c] as u64,
            })
        })
        .collect();
    let path = dir.join(format!("snapshots.{ext}"));
    write_rows(&path, format, SNAPSHOT_HEADER, &snapshot_rows)?;
    written.push(path);

    // Bandit runs list classes by learned ranking, baselines by frequency.
    let order = if artifacts.strategy.is_bandit() {
        artifacts.final_ranking.order()
    } else {
        &artifacts.frequency_order
    };
    let path = dir.join(format!("f1.{ext}"));
    write_rows(&path, format, F1_HEADER, &f1_rows(&artifacts.f1, order))?;
    written.push(path);

    let path = dir.join(PARAMS_FILE);
    save_params(&artifacts.learner, &artifacts.class_ids, &path)?;
    written.push(path.with_extension("json"));
    written.push(path);

    if artifacts.strategy.is_bandit() {
        let path = dir.join("gp_history.json");
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &artifacts.gp_history)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }

    let names: Vec<String> = written
        .iter()
        .filter_map(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    let summary = Summary {
        strategy: artifacts.strategy.to_string(),
        seed: artifacts.seed,
        rounds: artifacts.rounds(),
        convergence_round: artifacts.convergence_round,
        macro_f1: artifacts.macro_f1(artifacts.f1.keys()),
        files: &names,
    };
    let path = dir.join("summary.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

fn count_rows(r: &crate::ranking::Ranking) -> Vec<CountRow> {
    r.order()
        .iter()
        .enumerate()
        .map(|(i, c)| CountRow {
            rank: i + 1,
            class_id: c.clone(),
            pulls: r.counts()[c] as u64,
        })
        .collect()
}

/// Parse a `rank,class_id,pulls` table as written by [`emit_report`].
pub fn read_pull_counts<R: Read>(reader: R) -> Result<BTreeMap<String, u64>> {
    let mut counts = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: CountRow = row?;
        if counts.insert(row.class_id.clone(), row.pulls).is_some() {
            return Err(Error::Data(format!("class `{}` listed twice", row.class_id)));
        }
    }
    Ok(counts)
}
