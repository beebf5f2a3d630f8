//! File formats for experiment artifacts: versioned delimited text for
//! pedigrees, sparse longitudinal tracks, predictions, training history and
//! metric tables; line-delimited JSON for graph caches; JSON run manifests.
//! All writes go through write-to-temp + atomic rename so a failed run never
//! corrupts an existing output.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::FamilyGraph;
use crate::metrics::MetricRow;
use crate::pedigree::{Individual, LongitudinalData, Population};
use crate::trainer::EpochRecord;

pub const PEDIGREE_HEADER: &str =
    "#pedigree v1\tid\tgeneration\tmother_id\tfather_id\tsex\tage\tl_herr\tepsilon\tl_total\tcase_status\tonset_year";
pub const LONGITUDINAL_HEADER: &str = "#longitudinal v1\tid\tfeature\tyear";
pub const GRAPH_CACHE_HEADER: &str = "#graphs v1 json-lines";
pub const PREDICTIONS_HEADER: &str =
    "#predictions v1\ttarget_id\ty_model\ty_target\ty_family\ty_family_lstm\tlabel";
pub const HISTORY_HEADER: &str = "#history v1\tepoch\ttrain_loss\tval_loss\tlr\tstopped";
pub const METRICS_HEADER: &str = "#metrics v1\tmodel\tdataset\tmetric\tmean\tci_low\tci_high";

/// Write `content` to a sibling temp file, then rename over `path`.
pub fn atomic_write(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    fs::write(&tmp, content).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

fn read_lines(path: &Path, header: &str) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first == header => {}
        Some(first) => {
            return Err(Error::format(
                path.display().to_string(),
                format!("unexpected header {first:?}"),
            ))
        }
        None => return Err(Error::format(path.display().to_string(), "empty file")),
    }
    Ok(lines.map(str::to_owned).collect())
}

fn opt_str<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse<T: std::str::FromStr>(path: &Path, line_no: usize, field: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        Error::format(
            path.display().to_string(),
            format!("line {line_no}: bad {field} value {raw:?}"),
        )
    })
}

fn parse_opt<T: std::str::FromStr>(
    path: &Path,
    line_no: usize,
    field: &str,
    raw: &str,
) -> Result<Option<T>> {
    if raw.is_empty() {
        Ok(None)
    } else {
        parse(path, line_no, field, raw).map(Some)
    }
}

pub fn write_pedigree(path: &Path, pop: &Population) -> Result<()> {
    let mut out = String::from(PEDIGREE_HEADER);
    out.push('\n');
    for ind in &pop.individuals {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            ind.id,
            ind.generation,
            opt_str(ind.mother_id),
            opt_str(ind.father_id),
            ind.sex,
            ind.age,
            ind.l_herr,
            ind.epsilon,
            ind.l_total,
            ind.case_status as u8,
            opt_str(ind.onset_year),
        )
        .expect("write to string");
    }
    atomic_write(path, &out)
}

pub fn read_pedigree(path: &Path) -> Result<Population> {
    let mut individuals = Vec::new();
    for (i, line) in read_lines(path, PEDIGREE_HEADER)?.iter().enumerate() {
        let no = i + 2;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 11 {
            return Err(Error::format(
                path.display().to_string(),
                format!("line {no}: expected 11 fields, got {}", f.len()),
            ));
        }
        individuals.push(Individual {
            id: parse(path, no, "id", f[0])?,
            generation: parse(path, no, "generation", f[1])?,
            mother_id: parse_opt(path, no, "mother_id", f[2])?,
            father_id: parse_opt(path, no, "father_id", f[3])?,
            sex: parse(path, no, "sex", f[4])?,
            age: parse(path, no, "age", f[5])?,
            l_herr: parse(path, no, "l_herr", f[6])?,
            epsilon: parse(path, no, "epsilon", f[7])?,
            l_total: parse(path, no, "l_total", f[8])?,
            case_status: parse::<u8>(path, no, "case_status", f[9])? != 0,
            onset_year: parse_opt(path, no, "onset_year", f[10])?,
        });
    }
    Ok(Population::from_individuals(individuals))
}

/// Sparse layout: one row per (individual, feature, year) entry that is 1.
pub fn write_longitudinal(path: &Path, pop: &Population, data: &LongitudinalData) -> Result<()> {
    let mut out = String::from(LONGITUDINAL_HEADER);
    out.push('\n');
    for (idx, ind) in pop.individuals.iter().enumerate() {
        for f in 0..data.n_features {
            for t in 0..data.n_years {
                if data.value(idx, f, t) == 1 {
                    writeln!(out, "{}\t{f}\t{t}", ind.id).expect("write to string");
                }
            }
        }
    }
    atomic_write(path, &out)
}

pub fn read_longitudinal(
    path: &Path,
    pop: &Population,
    n_features: usize,
    n_years: usize,
) -> Result<LongitudinalData> {
    let index: HashMap<u64, usize> = pop
        .individuals
        .iter()
        .enumerate()
        .map(|(i, ind)| (ind.id, i))
        .collect();
    let mut tracks = vec![vec![0u8; n_features * n_years]; pop.len()];
    for (i, line) in read_lines(path, LONGITUDINAL_HEADER)?.iter().enumerate() {
        let no = i + 2;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::format(
                path.display().to_string(),
                format!("line {no}: expected 3 fields, got {}", f.len()),
            ));
        }
        let id: u64 = parse(path, no, "id", f[0])?;
        let feat: usize = parse(path, no, "feature", f[1])?;
        let year: usize = parse(path, no, "year", f[2])?;
        let idx = *index.get(&id).ok_or_else(|| {
            Error::format(path.display().to_string(), format!("line {no}: unknown id {id}"))
        })?;
        if feat >= n_features || year >= n_years {
            return Err(Error::format(
                path.display().to_string(),
                format!("line {no}: entry ({feat}, {year}) outside {n_features}x{n_years}"),
            ));
        }
        tracks[idx][feat * n_years + year] = 1;
    }
    Ok(LongitudinalData {
        n_years,
        n_features,
        tracks,
    })
}

/// Graph cache: version header, then one JSON record per line in target order.
pub fn write_graphs(path: &Path, graphs: &[FamilyGraph]) -> Result<()> {
    let mut out = String::from(GRAPH_CACHE_HEADER);
    out.push('\n');
    for g in graphs {
        let line = serde_json::to_string(g)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    atomic_write(path, &out)
}

pub fn read_graphs(path: &Path) -> Result<Vec<FamilyGraph>> {
    let mut graphs = Vec::new();
    for (i, line) in read_lines(path, GRAPH_CACHE_HEADER)?.iter().enumerate() {
        let g: FamilyGraph = serde_json::from_str(line).map_err(|e| {
            Error::format(path.display().to_string(), format!("line {}: {e}", i + 2))
        })?;
        g.validate()?;
        graphs.push(g);
    }
    Ok(graphs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub target_id: u64,
    pub y_model: f64,
    pub y_target: Option<f64>,
    pub y_family: Option<f64>,
    pub y_family_lstm: Option<f64>,
    pub label: f64,
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.target_id,
            r.y_model,
            opt_str(r.y_target),
            opt_str(r.y_family),
            opt_str(r.y_family_lstm),
            r.label,
        )
        .expect("write to string");
    }
    atomic_write(path, &out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut rows = Vec::new();
    for (i, line) in read_lines(path, PREDICTIONS_HEADER)?.iter().enumerate() {
        let no = i + 2;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::format(
                path.display().to_string(),
                format!("line {no}: expected 6 fields, got {}", f.len()),
            ));
        }
        rows.push(PredictionRow {
            target_id: parse(path, no, "target_id", f[0])?,
            y_model: parse(path, no, "y_model", f[1])?,
            y_target: parse_opt(path, no, "y_target", f[2])?,
            y_family: parse_opt(path, no, "y_family", f[3])?,
            y_family_lstm: parse_opt(path, no, "y_family_lstm", f[4])?,
            label: parse(path, no, "label", f[5])?,
        });
    }
    Ok(rows)
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.epoch, r.train_loss, r.val_loss, r.lr, r.stopped as u8
        )
        .expect("write to string");
    }
    atomic_write(path, &out)
}

pub fn write_metric_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.model, r.dataset, r.metric, r.mean, r.ci_low, r.ci_high
        )
        .expect("write to string");
    }
    atomic_write(path, &out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to re-execute a run bit-identically: the command, the
/// hash and verbatim text of the resolved config, the seed, and the code
/// version the binary was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub config_text: String,
    pub seed: u64,
    pub code_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config_text: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            config_text: config_text.to_string(),
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        atomic_write(path, &json)
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }
}
