//! Manifest, record and report files.
//!
//! Manifests and records are JSON Lines (UTF-8, LF-terminated). A manifest
//! starts with one header line followed by one instruction per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use layoutbench::metrics::{DetectionRecord, QaRecord, ScoreReport};
use layoutbench::{BenchmarkKind, BoundingBox, Detection, Instruction};

pub const TOOL_NAME: &str = "layoutbench";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub tool: String,
    pub version: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub benchmark: BenchmarkKind,
    pub count: usize,
}

impl ManifestHeader {
    pub fn new(config_digest: String, master_seed: u64, benchmark: BenchmarkKind, count: usize) -> Self {
        ManifestHeader {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            config_digest,
            master_seed,
            benchmark,
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub instructions: Vec<Instruction>,
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for instr in &self.instructions {
            out.push_str(&serde_json::to_string(instr).expect("instruction serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomically(path, self.to_jsonl().as_bytes())
    }

    pub fn parse(content: &str, origin: &str) -> Result<Self> {
        let mut lines = content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, first)) = lines.next() else {
            bail!("{origin}: empty manifest");
        };
        let header: ManifestHeader = serde_json::from_str(first)
            .with_context(|| format!("{origin}:1: invalid manifest header"))?;
        let mut instructions = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in lines {
            let instr: Instruction = serde_json::from_str(line)
                .with_context(|| format!("{origin}:{}: invalid instruction", i + 1))?;
            if let Err(reason) = instr.check() {
                bail!("{origin}:{}: {reason}", i + 1);
            }
            if !ids.insert(instr.id.clone()) {
                bail!("{origin}:{}: duplicate instruction id `{}`", i + 1, instr.id);
            }
            instructions.push(instr);
        }
        if instructions.len() != header.count {
            bail!(
                "{origin}: header declares {} instructions but the file holds {}",
                header.count,
                instructions.len()
            );
        }
        Ok(Manifest { header, instructions })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        Manifest::parse(&content, &path.display().to_string())
    }
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().context("output path has no file name")?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut w = BufWriter::new(
            File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?,
        );
        w.write_all(bytes)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot open {what} file {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}:{}: unreadable line", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: invalid {what} record", path.display(), i + 1))?;
        out.push(rec);
    }
    Ok(out)
}

/// Detection as written by detectors, before clamping to the image.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    confidence: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetectionRecord {
    instruction_id: String,
    seed: u32,
    object_index: usize,
    detections: Vec<RawDetection>,
}

/// Reads detection records. Boxes are clamped to the unit square; boxes with
/// no area left after clamping are dropped and counted.
pub fn read_detections(path: &Path) -> Result<(Vec<DetectionRecord>, usize)> {
    let raw: Vec<RawDetectionRecord> = read_jsonl(path, "detection")?;
    let mut dropped = 0;
    let records = raw
        .into_iter()
        .map(|r| {
            let detections = r
                .detections
                .into_iter()
                .filter_map(|d| {
                    let [x0, y0, x1, y1] = d.bbox.map(|v| v.clamp(0.0, 1.0));
                    match BoundingBox::new(x0, y0, x1, y1) {
                        Ok(bbox) if d.confidence.is_finite() => Some(Detection {
                            bbox: bbox.quantized(),
                            confidence: d.confidence,
                        }),
                        _ => {
                            dropped += 1;
                            None
                        }
                    }
                })
                .collect();
            DetectionRecord {
                instruction_id: r.instruction_id,
                seed: r.seed,
                object_index: r.object_index,
                detections,
            }
        })
        .collect();
    Ok((records, dropped))
}

pub fn read_qa(path: &Path) -> Result<Vec<QaRecord>> {
    read_jsonl(path, "QA")
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    write_atomically(path, out.as_bytes())
}

pub fn write_report(path: &Path, report: &ScoreReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_atomically(path, text.as_bytes())
}

pub fn read_report(path: &Path) -> Result<ScoreReport> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read report {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid report {}", path.display()))
}
