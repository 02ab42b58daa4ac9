//! Per-example scoring and aggregation.
//!
//! An example is one `(instruction, seed)` pair. Text alignment is the share
//! of VQA answers matching the expected ones; layout alignment is the mean
//! over objects of the area under the Acc@k curve of the most confident
//! detection's IoU; the unified score is their harmonic mean. Aggregates are
//! plain means over examples summed in ascending `(instruction_id, seed)`
//! order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::geometry::iou;
use crate::model::{BenchmarkKind, Detection, Instruction, Scenario};

/// Detector output for one object of one generated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub instruction_id: String,
    pub seed: u32,
    pub object_index: usize,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub expected: String,
    pub predicted: String,
}

/// Question-answer outcomes for one generated image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub instruction_id: String,
    pub seed: u32,
    pub items: Vec<QaItem>,
}

/// Valid generation seeds.
pub const SEED_RANGE: std::ops::RangeInclusive<u32> = 1..=8;

pub fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

pub fn answers_match(expected: &str, predicted: &str) -> bool {
    normalize_answer(expected) == normalize_answer(predicted)
}

/// Fraction of items whose predicted answer equals the expected one.
pub fn text_score_example(rec: &QaRecord) -> Result<f64, MetricError> {
    if rec.items.is_empty() {
        return Err(MetricError::EmptyRecord {
            instruction_id: rec.instruction_id.clone(),
            seed: rec.seed,
        });
    }
    let hits = rec
        .items
        .iter()
        .filter(|i| answers_match(&i.expected, &i.predicted))
        .count();
    Ok(hits as f64 / rec.items.len() as f64)
}

/// Most confident detection; the earliest wins ties.
pub fn best_detection(detections: &[Detection]) -> Option<&Detection> {
    detections.iter().fold(None, |best: Option<&Detection>, d| match best {
        Some(b) if d.confidence <= b.confidence => Some(b),
        _ if d.confidence.is_nan() => best,
        _ => Some(d),
    })
}

/// The eleven IoU thresholds 0, 0.1, ..., 1.
pub fn thresholds() -> [f64; 11] {
    std::array::from_fn(|i| i as f64 / 10.0)
}

pub fn acc_at_k(iou_value: f64, k: f64) -> u8 {
    u8::from(iou_value >= k)
}

/// Trapezoidal area under the Acc@k step curve on the 0.1 grid.
pub fn auc_over_thresholds(iou_value: f64) -> f64 {
    let acc = thresholds().map(|k| acc_at_k(iou_value, k) as u32);
    // each interval contributes 0.1 * (a + b) / 2
    let twice_sum: u32 = acc.windows(2).map(|w| w[0] + w[1]).sum();
    twice_sum as f64 / 20.0
}

/// IoU of each object's target with its best detection (0 when none).
pub fn object_ious(instr: &Instruction, detections: &[Option<&[Detection]>]) -> Vec<f64> {
    instr
        .objects
        .iter()
        .enumerate()
        .map(|(j, o)| {
            detections
                .get(j)
                .copied()
                .flatten()
                .and_then(best_detection)
                .map_or(0.0, |d| iou(&o.bbox, &d.bbox))
        })
        .collect()
}

/// Mean per-object AUC for one example. `detections[j]` holds the detector
/// output for object `j`; a missing entry counts as no detections.
pub fn layout_score_example(instr: &Instruction, detections: &[Option<&[Detection]>]) -> f64 {
    let ious = object_ious(instr, detections);
    let sum: f64 = ious.iter().map(|&v| auc_over_thresholds(v)).sum();
    sum / ious.len() as f64
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn unified(s_text: f64, s_layout: f64) -> f64 {
    let denom = s_text + s_layout;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * s_text * s_layout / denom
    }
}

/// Arithmetic mean in iteration order.
pub fn ordered_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Abort when any expected example lacks records.
    #[default]
    Strict,
    /// Score what is present and report coverage.
    Lenient,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(EvalMode::Strict),
            "lenient" => Ok(EvalMode::Lenient),
            _ => Err(format!("unknown mode `{s}` (expected strict or lenient)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub mode: EvalMode,
    /// Seeds every instruction must have; defaults to all seeds seen in the records.
    pub seeds: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub s_text: f64,
    pub s_layout: f64,
    pub s_unified: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub instruction_id: String,
    pub seed: u32,
    pub scenario: Scenario,
    pub n_objects: usize,
    pub s_text: f64,
    pub s_layout: f64,
    pub s_unified: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub expected: usize,
    pub scored: usize,
    /// `<instruction_id>#<seed>` of every uncovered example.
    pub missing: Vec<String>,
}

/// Scores conditioned on a scenario, an object count, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub scenario: Option<Scenario>,
    pub n_objects: Option<usize>,
    pub count: usize,
    pub s_text: f64,
    pub s_layout: f64,
    pub s_unified: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdowns {
    pub scenario: Vec<BreakdownRow>,
    pub n_objects: Vec<BreakdownRow>,
    pub both: Vec<BreakdownRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub model_name: String,
    pub benchmark: BenchmarkKind,
    pub coverage: Coverage,
    /// Means of the per-example scores.
    pub aggregate: Scores,
    /// Harmonic mean of the aggregate text and layout scores.
    pub unified_of_means: f64,
    pub breakdown: Breakdowns,
    pub per_example: Vec<ExampleScore>,
}

impl ScoreReport {
    /// Recomputes the aggregate from `per_example` in stored order.
    pub fn recompute_aggregate(&self) -> Option<Scores> {
        aggregate_scores(&self.per_example)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Scenario,
    NObjects,
    Both,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scenario" => Ok(Axis::Scenario),
            "nobj" | "n_objects" => Ok(Axis::NObjects),
            "both" => Ok(Axis::Both),
            _ => Err(format!("unknown axis `{s}` (expected scenario, nobj or both)")),
        }
    }
}

fn aggregate_scores(examples: &[ExampleScore]) -> Option<Scores> {
    Some(Scores {
        s_text: ordered_mean(examples.iter().map(|e| e.s_text))?,
        s_layout: ordered_mean(examples.iter().map(|e| e.s_layout))?,
        s_unified: ordered_mean(examples.iter().map(|e| e.s_unified))?,
    })
}

/// Micro-averaged scores per cell of `axis`. Cells without examples are
/// absent. Rows come in scenario order, then ascending object count.
pub fn breakdown(examples: &[ExampleScore], axis: Axis) -> Vec<BreakdownRow> {
    let mut cells: BTreeMap<(Option<Scenario>, Option<usize>), Vec<&ExampleScore>> = BTreeMap::new();
    for e in examples {
        let key = match axis {
            Axis::Scenario => (Some(e.scenario), None),
            Axis::NObjects => (None, Some(e.n_objects)),
            Axis::Both => (Some(e.scenario), Some(e.n_objects)),
        };
        cells.entry(key).or_default().push(e);
    }
    cells
        .into_iter()
        .map(|((scenario, n_objects), members)| {
            let mean = |f: fn(&ExampleScore) -> f64| {
                ordered_mean(members.iter().map(|e| f(e))).expect("cells are non-empty")
            };
            BreakdownRow {
                scenario,
                n_objects,
                count: members.len(),
                s_text: mean(|e| e.s_text),
                s_layout: mean(|e| e.s_layout),
                s_unified: mean(|e| e.s_unified),
            }
        })
        .collect()
}

type ExampleKey = (String, u32);

/// Indexed, validated evaluation inputs for one model.
pub struct EvalInputs<'a> {
    instructions: BTreeMap<&'a str, &'a Instruction>,
    detections: HashMap<(&'a str, u32), Vec<Option<&'a [Detection]>>>,
    qa: HashMap<(&'a str, u32), &'a QaRecord>,
    seen_seeds: BTreeSet<u32>,
}

impl<'a> EvalInputs<'a> {
    pub fn new(
        instructions: &'a [Instruction],
        detections: &'a [DetectionRecord],
        qa: &'a [QaRecord],
    ) -> Result<Self, MetricError> {
        let mut by_id = BTreeMap::new();
        for instr in instructions {
            if by_id.insert(instr.id.as_str(), instr).is_some() {
                return Err(MetricError::InvalidArgument(format!(
                    "duplicate instruction id `{}`",
                    instr.id
                )));
            }
        }
        let mut seen_seeds = BTreeSet::new();
        let check_seed = |id: &str, seed: u32| {
            if SEED_RANGE.contains(&seed) {
                Ok(())
            } else {
                Err(MetricError::InvalidArgument(format!(
                    "record for `{id}` has seed {seed}, expected 1..=8"
                )))
            }
        };

        let mut det_index: HashMap<(&str, u32), Vec<Option<&[Detection]>>> = HashMap::new();
        for rec in detections {
            check_seed(&rec.instruction_id, rec.seed)?;
            let instr = by_id
                .get(rec.instruction_id.as_str())
                .ok_or_else(|| MetricError::UnknownInstruction(rec.instruction_id.clone()))?;
            if rec.object_index >= instr.n_objects {
                return Err(MetricError::ObjectIndex {
                    instruction_id: rec.instruction_id.clone(),
                    index: rec.object_index,
                    n_objects: instr.n_objects,
                });
            }
            let slots = det_index
                .entry((instr.id.as_str(), rec.seed))
                .or_insert_with(|| vec![None; instr.n_objects]);
            if slots[rec.object_index].replace(&rec.detections).is_some() {
                return Err(MetricError::InvalidArgument(format!(
                    "duplicate detection record for `{}` seed {} object {}",
                    rec.instruction_id, rec.seed, rec.object_index
                )));
            }
            seen_seeds.insert(rec.seed);
        }

        let mut qa_index = HashMap::new();
        for rec in qa {
            check_seed(&rec.instruction_id, rec.seed)?;
            let instr = by_id
                .get(rec.instruction_id.as_str())
                .ok_or_else(|| MetricError::UnknownInstruction(rec.instruction_id.clone()))?;
            if rec.items.is_empty() {
                return Err(MetricError::EmptyRecord {
                    instruction_id: rec.instruction_id.clone(),
                    seed: rec.seed,
                });
            }
            if qa_index.insert((instr.id.as_str(), rec.seed), rec).is_some() {
                return Err(MetricError::InvalidArgument(format!(
                    "duplicate QA record for `{}` seed {}",
                    rec.instruction_id, rec.seed
                )));
            }
            seen_seeds.insert(rec.seed);
        }

        Ok(EvalInputs {
            instructions: by_id,
            detections: det_index,
            qa: qa_index,
            seen_seeds,
        })
    }

    /// Expected examples in summation order, split into covered and missing.
    fn plan(&self, opts: &EvalOptions) -> (Vec<ExampleKey>, Vec<String>) {
        let seeds: BTreeSet<u32> = match &opts.seeds {
            Some(s) => s.iter().copied().collect(),
            None => self.seen_seeds.clone(),
        };
        let mut covered = Vec::new();
        let mut missing = Vec::new();
        for id in self.instructions.keys() {
            for &seed in &seeds {
                let key = (*id, seed);
                if self.qa.contains_key(&key) && self.detections.contains_key(&key) {
                    covered.push((id.to_string(), seed));
                } else {
                    missing.push(format!("{id}#{seed}"));
                }
            }
        }
        (covered, missing)
    }

    fn score_one(&self, id: &str, seed: u32) -> Result<ExampleScore, MetricError> {
        let instr = self.instructions[id];
        let qa = self.qa[&(id, seed)];
        let dets = &self.detections[&(id, seed)];
        let s_text = text_score_example(qa)?;
        let s_layout = layout_score_example(instr, dets);
        Ok(ExampleScore {
            instruction_id: id.to_string(),
            seed,
            scenario: instr.scenario,
            n_objects: instr.n_objects,
            s_text,
            s_layout,
            s_unified: unified(s_text, s_layout),
        })
    }

    pub fn score(
        &self,
        model_name: &str,
        benchmark: BenchmarkKind,
        opts: &EvalOptions,
    ) -> Result<ScoreReport, MetricError> {
        if let Some(seed) = opts.seeds.iter().flatten().find(|s| !SEED_RANGE.contains(*s)) {
            return Err(MetricError::InvalidArgument(format!(
                "requested seed {seed}, expected 1..=8"
            )));
        }
        let (covered, missing) = self.plan(opts);
        if opts.mode == EvalMode::Strict && !missing.is_empty() {
            return Err(MetricError::MissingRecords(missing));
        }
        let per_example = covered
            .par_iter()
            .map(|(id, seed)| self.score_one(id, *seed))
            .collect::<Result<Vec<_>, _>>()?;
        let aggregate = aggregate_scores(&per_example).ok_or(MetricError::NoExamples)?;
        Ok(ScoreReport {
            model_name: model_name.to_string(),
            benchmark,
            coverage: Coverage {
                expected: covered.len() + missing.len(),
                scored: covered.len(),
                missing,
            },
            unified_of_means: unified(aggregate.s_text, aggregate.s_layout),
            aggregate,
            breakdown: Breakdowns {
                scenario: breakdown(&per_example, Axis::Scenario),
                n_objects: breakdown(&per_example, Axis::NObjects),
                both: breakdown(&per_example, Axis::Both),
            },
            per_example,
        })
    }
}

/// Scores one model's records against a manifest.
pub fn aggregate(
    model_name: &str,
    benchmark: BenchmarkKind,
    instructions: &[Instruction],
    detections: &[DetectionRecord],
    qa: &[QaRecord],
    opts: &EvalOptions,
) -> Result<ScoreReport, MetricError> {
    EvalInputs::new(instructions, detections, qa)?.score(model_name, benchmark, opts)
}
