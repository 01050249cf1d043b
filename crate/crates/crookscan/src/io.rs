//! File formats.
//!
//! * Dataset: JSON lines. Line 1 is a header
//!   `{"format":"crookscan-dataset","format_version":1,"n_records":N,"seed":S,"generator":{..}|null}`,
//!   followed by one record per line:
//!   `{"id":0,"annotation":"negative","points":[x0,y0,z0,x1,...],"latent_severity":0.1}`
//!   with exactly 768 coordinates in millimeters.
//! * Checkpoint: one JSON object holding the architecture, the test-time
//!   rotation angles and, per ensemble member, every tensor as
//!   `{"name", "shape", "values"}` in storage order.
//! * Predictions: CSV `id,annotation,probability,kept,fold,repetition`.
//! * Abstention rule: JSON with percentiles, thresholds and the config.
//! * Report: CSV with one row per (configuration, metric) and one column
//!   per coverage level, plus a JSON file with per-repetition detail.
//!
//! CSV floats are written with 17 significant digits and JSON floats in
//! shortest round-trip form, so every writer is byte-deterministic and
//! every reader restores the exact values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abstention::AbstentionRule;
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::geometry::{Centerline, N_POINTS};
use crate::nn::{ArchConfig, Ensemble, ModelParams};
use crate::synthdata::{Annotation, GeneratorConfig, LabeledSample};

pub const DATASET_FORMAT: &str = "crookscan-dataset";
pub const CHECKPOINT_FORMAT: &str = "crookscan-checkpoint";
pub const RULE_FORMAT: &str = "crookscan-abstention-rule";
pub const FORMAT_VERSION: u32 = 1;

const PREDICTION_HEADER: &str = "id,annotation,probability,kept,fold,repetition";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Fixed 17-significant-digit rendering.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_version(what: &str, format: &str, expected: &str, version: u32) -> Result<()> {
    if format != expected || version != FORMAT_VERSION {
        return Err(Error::Schema {
            what: what.into(),
            record: 0,
            message: format!("expected {expected} v{FORMAT_VERSION}, found {format} v{version}"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------- dataset

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub format_version: u32,
    pub n_records: usize,
    pub seed: Option<u64>,
    pub generator: Option<GeneratorConfig>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    id: u64,
    annotation: Annotation,
    points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    latent_severity: Option<f64>,
}

pub fn write_dataset(path: &Path, samples: &[LabeledSample], generator: Option<&GeneratorConfig>) -> Result<()> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        format_version: FORMAT_VERSION,
        n_records: samples.len(),
        seed: generator.map(|g| g.seed),
        generator: generator.cloned(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for s in samples {
        let record = DatasetRecord {
            id: s.id,
            annotation: s.annotation,
            points: s.centerline.points().iter().flatten().copied().collect(),
            latent_severity: s.latent_severity,
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    write_all(path, out.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Vec<LabeledSample>> {
    Ok(read_dataset_with_header(path)?.1)
}

pub fn read_dataset_with_header(path: &Path) -> Result<(DatasetHeader, Vec<LabeledSample>)> {
    let what = path.display().to_string();
    let mut lines = open(path)?.lines();
    let parse_err = |record: usize, message: String| Error::Parse {
        what: what.clone(),
        record,
        message,
    };
    let schema_err = |record: usize, message: String| Error::Schema {
        what: what.clone(),
        record,
        message,
    };

    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: DatasetHeader =
        serde_json::from_str(&header_line).map_err(|e| parse_err(0, format!("header: {e}")))?;
    check_version(&what, &header.format, DATASET_FORMAT, header.format_version)?;

    let mut samples = Vec::with_capacity(header.n_records);
    for (index, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        // records are numbered from 1; the header is record 0
        let record_no = index + 1;
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(record_no, e.to_string()))?;
        if record.points.len() != 3 * N_POINTS {
            return Err(schema_err(
                record_no,
                format!("expected {} coordinates, found {}", 3 * N_POINTS, record.points.len()),
            ));
        }
        let points = record.points.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let centerline = Centerline::new(points).map_err(|e| schema_err(record_no, e.to_string()))?;
        samples.push(LabeledSample {
            id: record.id,
            centerline,
            annotation: record.annotation,
            latent_severity: record.latent_severity,
        });
    }
    if samples.len() != header.n_records {
        return Err(parse_err(
            samples.len() + 1,
            format!(
                "header announces {} records but the file ends after {}",
                header.n_records,
                samples.len()
            ),
        ));
    }
    Ok((header, samples))
}

// ------------------------------------------------------------- checkpoint

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    format_version: u32,
    arch: ArchConfig,
    tta_angles_deg: Vec<f64>,
    members: Vec<Vec<NamedTensor>>,
}

pub fn write_checkpoint(path: &Path, ensemble: &Ensemble) -> Result<()> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        format_version: FORMAT_VERSION,
        arch: ensemble.arch.clone(),
        tta_angles_deg: ensemble.tta_angles_deg.clone(),
        members: ensemble
            .members
            .iter()
            .map(|m| {
                m.tensors()
                    .into_iter()
                    .map(|t| NamedTensor {
                        values: m.values()[t.range].to_vec(),
                        name: t.name,
                        shape: t.shape,
                    })
                    .collect()
            })
            .collect(),
    };
    write_all(path, serde_json::to_string(&file).expect("checkpoint serializes").as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Ensemble> {
    let what = path.display().to_string();
    let file: CheckpointFile = serde_json::from_str(&read_string(path)?).map_err(|e| Error::Parse {
        what: what.clone(),
        record: 0,
        message: e.to_string(),
    })?;
    check_version(&what, &file.format, CHECKPOINT_FORMAT, file.format_version)?;
    let template = ModelParams::zeros(&file.arch)?;
    let expected = template.tensors();
    let members = file
        .members
        .into_iter()
        .enumerate()
        .map(|(mi, tensors)| {
            if tensors.len() != expected.len() {
                return Err(Error::Structural(format!(
                    "member {mi}: expected {} tensors, found {}",
                    expected.len(),
                    tensors.len()
                )));
            }
            let mut values = Vec::with_capacity(template.len());
            for (t, info) in tensors.into_iter().zip(&expected) {
                if t.name != info.name || t.shape != info.shape || t.values.len() != info.range.len() {
                    return Err(Error::Structural(format!(
                        "member {mi}: tensor {} {:?} does not match expected {} {:?}",
                        t.name, t.shape, info.name, info.shape
                    )));
                }
                values.extend(t.values);
            }
            ModelParams::from_values(&file.arch, values)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ensemble = Ensemble::new(file.arch, members)?;
    ensemble.tta_angles_deg = file.tta_angles_deg;
    Ok(ensemble)
}

// ------------------------------------------------------------ predictions

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub annotation: Annotation,
    pub probability: f64,
    pub kept: bool,
    pub fold: usize,
    pub repetition: usize,
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.id,
            r.annotation.as_str(),
            format_f64(r.probability),
            r.kept,
            r.fold,
            r.repetition
        ));
    }
    write_all(path, out.as_bytes())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let what = path.display().to_string();
    let mut lines = open(path)?.lines();
    let parse_err = |record: usize, message: String| Error::Parse {
        what: what.clone(),
        record,
        message,
    };
    let header = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty file".into()))?
        .map_err(|e| Error::io(path, e))?;
    if header.trim() != PREDICTION_HEADER {
        return Err(Error::Schema {
            what: what.clone(),
            record: 0,
            message: format!("expected header {PREDICTION_HEADER:?}"),
        });
    }
    let mut out = Vec::new();
    for (index, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record_no = index + 1;
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(record_no, format!("expected 6 fields, found {}", fields.len())));
        }
        let err = |field: &str, e: String| parse_err(record_no, format!("{field}: {e}"));
        let record = PredictionRecord {
            id: fields[0].parse().map_err(|e: std::num::ParseIntError| err("id", e.to_string()))?,
            annotation: fields[1].parse().map_err(|e: Error| err("annotation", e.to_string()))?,
            probability: fields[2]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err("probability", e.to_string()))?,
            kept: fields[3].parse().map_err(|e: std::str::ParseBoolError| err("kept", e.to_string()))?,
            fold: fields[4].parse().map_err(|e: std::num::ParseIntError| err("fold", e.to_string()))?,
            repetition: fields[5]
                .parse()
                .map_err(|e: std::num::ParseIntError| err("repetition", e.to_string()))?,
        };
        if !(0.0..=1.0).contains(&record.probability) {
            return Err(Error::Schema {
                what: what.clone(),
                record: record_no,
                message: format!("probability {} outside [0, 1]", record.probability),
            });
        }
        out.push(record);
    }
    Ok(out)
}

// ------------------------------------------------------------------- rule

#[derive(Serialize, Deserialize)]
struct RuleFile {
    format: String,
    format_version: u32,
    rule: AbstentionRule,
}

pub fn write_rule(path: &Path, rule: &AbstentionRule) -> Result<()> {
    let file = RuleFile {
        format: RULE_FORMAT.into(),
        format_version: FORMAT_VERSION,
        rule: *rule,
    };
    write_all(path, serde_json::to_string_pretty(&file).expect("rule serializes").as_bytes())
}

pub fn read_rule(path: &Path) -> Result<AbstentionRule> {
    let what = path.display().to_string();
    let file: RuleFile = serde_json::from_str(&read_string(path)?).map_err(|e| Error::Parse {
        what: what.clone(),
        record: 0,
        message: e.to_string(),
    })?;
    check_version(&what, &file.format, RULE_FORMAT, file.format_version)?;
    Ok(file.rule)
}

// ----------------------------------------------------------------- report

fn coverage_label(c: f64) -> String {
    format!("{}%", (c * 1000.0).round() / 10.0)
}

/// Table layout: metric-major rows, one column per coverage level.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("config,metric");
    for &c in &report.coverages {
        out.push(',');
        out.push_str(&coverage_label(c));
    }
    out.push('\n');
    for cell_row in report.cells.chunks(report.coverages.len().max(1)) {
        let first = &cell_row[0];
        out.push_str(&format!("{},{}", first.config.label(), first.metric.label()));
        for cell in cell_row {
            out.push(',');
            out.push_str(&format_f64(cell.mean));
        }
        out.push('\n');
    }
    out
}

pub fn report_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn write_report(report: &EvalReport, path_csv: &Path, path_json: &Path) -> Result<()> {
    write_all(path_csv, report_csv(report).as_bytes())?;
    write_all(path_json, report_json(report).as_bytes())
}

pub fn read_report_json(path: &Path) -> Result<EvalReport> {
    serde_json::from_str(&read_string(path)?).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        record: 0,
        message: e.to_string(),
    })
}
