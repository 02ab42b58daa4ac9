//! Command implementations. Each returns the text to print on success.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use layoutbench::analysis::{
    format_delta, mean_curve, perturbation_sensitivity, rank_models, ranking_stability, CurvePoint,
    DEFAULT_ALPHAS,
};
use layoutbench::closed::{generate_closed, GenerationContext};
use layoutbench::metrics::{aggregate, breakdown, Axis, EvalMode, EvalOptions};
use layoutbench::openset::{
    downsample, join_caption, parse_box_file, parse_sentence_file, strata_sizes,
};
use layoutbench::prompt::TextGenerator;
use layoutbench::{BenchmarkKind, GenerationError, LayoutError, MetricError, Scenario};

use crate::config::{hex_digest, BenchConfig};
use crate::io::{self, Manifest, ManifestHeader};
use crate::llm::HttpGenerator;

/// Failure classes with distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0:#}")]
    Input(#[from] anyhow::Error),
    #[error("{0}")]
    Exhausted(String),
    #[error("{0}")]
    Coverage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Exhausted(_) => 2,
            CliError::Coverage(_) => 3,
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::MissingRecords(_) => CliError::Coverage(e.to_string()),
            other => CliError::Input(other.into()),
        }
    }
}

pub type CmdResult = Result<String, CliError>;

#[derive(Debug, Parser)]
#[command(name = "layoutbench", version, about = "Layout-guided text-to-image benchmark tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the closed-set instruction manifest.
    GenClosed(GenClosedArgs),
    /// Build the open-set manifest from grounded captions.
    BuildOpen(BuildOpenArgs),
    /// Score one model's detection and QA records.
    Eval(EvalArgs),
    /// Rank models by unified score.
    Rank(RankArgs),
    /// Conditioned scores by scenario and/or object count.
    Breakdown(BreakdownArgs),
    /// Compare the unified ranking with linear score combinations.
    Stability(StabilityArgs),
    /// Score curves under increasing ground-truth corruption.
    Perturb(PerturbArgs),
}

#[derive(Debug, Args)]
pub struct GenClosedArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildOpenArgs {
    /// Directory of `<image_id>.txt` caption files.
    #[arg(long)]
    pub sentences: PathBuf,
    /// Directory of `<image_id>.xml` box files.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = 3319)]
    pub target: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// File listing the image ids to use, one per line (default: every caption file).
    #[arg(long)]
    pub ids: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub qa: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "strict")]
    pub mode: EvalMode,
    /// Model name stored in the report (default: detection file stem).
    #[arg(long)]
    pub model: Option<String>,
    /// Seeds every instruction must cover (default: every seed in the records).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u32>>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BreakdownArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// scenario, nobj or both.
    #[arg(long)]
    pub axis: Axis,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub qa: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
    pub levels: Vec<f64>,
    /// Number of perturbation seeds; seeds 1..=N are used.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value = "strict")]
    pub mode: EvalMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::GenClosed(a) => with_jobs(a.jobs, || gen_closed(&a)),
        Command::BuildOpen(a) => build_open(&a),
        Command::Eval(a) => with_jobs(a.jobs, || eval(&a)),
        Command::Rank(a) => rank(&a),
        Command::Breakdown(a) => breakdown_cmd(&a),
        Command::Stability(a) => stability(&a),
        Command::Perturb(a) => with_jobs(a.jobs, || perturb(&a)),
    }
}

fn with_jobs(jobs: Option<usize>, f: impl FnOnce() -> CmdResult + Send) -> CmdResult {
    let Some(n) = jobs else {
        return f();
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| anyhow!("cannot start {n} worker threads: {e}"))?;
    pool.install(f)
}

pub fn gen_closed(a: &GenClosedArgs) -> CmdResult {
    let mut cfg = BenchConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let http;
    let client: Option<&dyn TextGenerator> = if cfg.llm.enabled {
        http = HttpGenerator::from_config(&cfg.llm)?;
        Some(&http)
    } else {
        None
    };
    let compose = cfg.llm.compose_options();
    let ctx = GenerationContext {
        vocab: &cfg.vocabulary,
        layout: &cfg.layout,
        client,
        compose: &compose,
        master_seed: cfg.seed,
    };
    let instructions = generate_closed(&cfg.plan, &ctx).map_err(|e| match e {
        GenerationError::Layout {
            source: LayoutError::PlacementExhausted { .. },
            ..
        } => CliError::Exhausted(e.to_string()),
        other => CliError::Input(other.into()),
    })?;
    let header = ManifestHeader::new(cfg.digest(), cfg.seed, BenchmarkKind::Closed, instructions.len());
    let manifest = Manifest { header, instructions };
    manifest.write(&a.out)?;

    let mut out = String::new();
    for scenario in Scenario::CLOSED {
        let n = manifest.instructions.iter().filter(|i| i.scenario == scenario).count();
        writeln!(out, "{:<22} {n:>6}", scenario.as_str()).unwrap();
    }
    writeln!(out, "{:<22} {:>6}", "total", manifest.instructions.len()).unwrap();
    writeln!(out, "wrote {}", a.out.display()).unwrap();
    Ok(out)
}

fn read_dir_sorted(dir: &Path, ext: &str) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == ext) {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            files.push((stem, path));
        }
    }
    files.sort();
    Ok(files)
}

fn read_id_list(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut ids: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    ids.sort();
    ids.dedup();
    Ok(ids)
}

pub fn build_open(a: &BuildOpenArgs) -> CmdResult {
    let images: Vec<(String, PathBuf)> = match &a.ids {
        Some(list) => read_id_list(list)?
            .into_iter()
            .map(|id| {
                let path = a.sentences.join(format!("{id}.txt"));
                (id, path)
            })
            .collect(),
        None => read_dir_sorted(&a.sentences, "txt")?,
    };

    let mut pool = Vec::new();
    let mut inputs: Vec<(String, String, String)> = Vec::new();
    for (id, sentence_path) in &images {
        let sentences = std::fs::read_to_string(sentence_path)
            .with_context(|| format!("cannot read {}", sentence_path.display()))?;
        let box_path = a.annotations.join(format!("{id}.xml"));
        let boxes = std::fs::read_to_string(&box_path)
            .with_context(|| format!("cannot read {}", box_path.display()))?;
        let captions = parse_sentence_file(id, &sentences)
            .with_context(|| format!("{}", sentence_path.display()))?;
        let ann = parse_box_file(&boxes).with_context(|| format!("{}", box_path.display()))?;
        pool.extend(captions.iter().filter_map(|c| join_caption(c, &ann)));
        inputs.push((id.clone(), hex_digest(sentences.as_bytes()), hex_digest(boxes.as_bytes())));
    }
    if a.target > pool.len() {
        return Err(anyhow!("target {} exceeds the {} usable captions", a.target, pool.len()).into());
    }
    let selected = downsample(&pool, a.target, a.seed).map_err(anyhow::Error::from)?;

    #[derive(Serialize)]
    struct OpenDigest<'a> {
        target: usize,
        seed: u64,
        inputs: &'a [(String, String, String)],
    }
    let digest = hex_digest(&serde_json::to_vec(&OpenDigest {
        target: a.target,
        seed: a.seed,
        inputs: &inputs,
    })
    .expect("digest input serializes"));
    let header = ManifestHeader::new(digest, a.seed, BenchmarkKind::Open, selected.len());
    Manifest { header, instructions: selected.clone() }.write(&a.out)?;

    let before = strata_sizes(&pool);
    let after = strata_sizes(&selected);
    let mut out = format!("{:>9} {:>8} {:>8}\n", "n_objects", "pool", "selected");
    for (k, n) in &before {
        writeln!(out, "{k:>9} {n:>8} {:>8}", after.get(k).copied().unwrap_or(0)).unwrap();
    }
    writeln!(out, "{:>9} {:>8} {:>8}", "total", pool.len(), selected.len()).unwrap();
    writeln!(out, "wrote {}", a.out.display()).unwrap();
    Ok(out)
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    let manifest = Manifest::read(&a.manifest)?;
    let (detections, dropped) = io::read_detections(&a.detections)?;
    let qa = io::read_qa(&a.qa)?;
    let model = match &a.model {
        Some(m) => m.clone(),
        None => a
            .detections
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into()),
    };
    let opts = EvalOptions {
        mode: a.mode,
        seeds: a.seeds.clone(),
    };
    let report = aggregate(
        &model,
        manifest.header.benchmark,
        &manifest.instructions,
        &detections,
        &qa,
        &opts,
    )?;
    io::write_report(&a.out, &report)?;
    let s = report.aggregate;
    let mut out = format!(
        "{model}: s_text {:.4}  s_layout {:.4}  s_unified {:.4}\n",
        s.s_text, s.s_layout, s.s_unified
    );
    writeln!(out, "coverage {}/{}", report.coverage.scored, report.coverage.expected).unwrap();
    if dropped > 0 {
        writeln!(out, "dropped {dropped} detections with no area inside the image").unwrap();
    }
    writeln!(out, "wrote {}", a.out.display()).unwrap();
    Ok(out)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

/// Writes CSV to `out`, or returns it for printing when no path is given.
fn emit_csv(out: Option<&Path>, header: &[&str], rows: &[Vec<String>], summary: String) -> CmdResult {
    let text = csv_text(header, rows)?;
    match out {
        Some(path) => {
            io::write_atomically(path, text.as_bytes())?;
            Ok(format!("{summary}wrote {}\n", path.display()))
        }
        None => Ok(text),
    }
}

pub const RANK_COLUMNS: [&str; 4] = ["rank", "model", "s_unified", "delta_pct"];

pub fn rank(a: &RankArgs) -> CmdResult {
    let reports = a
        .reports
        .iter()
        .map(|p| io::read_report(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rows = rank_models(&reports)?;
    let mut table = String::new();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            writeln!(table, "{:>2}  {:<24} {:.4}  {:>6}", r.rank, r.model, r.s_unified, format_delta(r.delta_pct)).unwrap();
            vec![r.rank.to_string(), r.model.clone(), r.s_unified.to_string(), format_delta(r.delta_pct)]
        })
        .collect();
    emit_csv(a.out.as_deref(), &RANK_COLUMNS, &csv_rows, table)
}

pub const BREAKDOWN_COLUMNS: [&str; 7] =
    ["model", "scenario", "n_objects", "count", "s_text", "s_layout", "s_unified"];

pub fn breakdown_cmd(a: &BreakdownArgs) -> CmdResult {
    let report = io::read_report(&a.report)?;
    let rows: Vec<Vec<String>> = breakdown(&report.per_example, a.axis)
        .into_iter()
        .map(|r| {
            vec![
                report.model_name.clone(),
                r.scenario.map(|s| s.to_string()).unwrap_or_default(),
                r.n_objects.map(|n| n.to_string()).unwrap_or_default(),
                r.count.to_string(),
                r.s_text.to_string(),
                r.s_layout.to_string(),
                r.s_unified.to_string(),
            ]
        })
        .collect();
    let summary = format!("{} cells\n", rows.len());
    emit_csv(a.out.as_deref(), &BREAKDOWN_COLUMNS, &rows, summary)
}

pub const STABILITY_COLUMNS: [&str; 4] = ["alpha", "tau", "rho", "order"];

pub fn stability(a: &StabilityArgs) -> CmdResult {
    let reports = a
        .reports
        .iter()
        .map(|p| io::read_report(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let alphas = a.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
    let st = ranking_stability(&reports, &alphas)?;
    let mut rows: Vec<Vec<String>> = st
        .per_alpha
        .iter()
        .map(|r| vec![r.alpha.to_string(), r.tau.to_string(), r.rho.to_string(), r.order.join(";")])
        .collect();
    rows.push(vec![
        "mean".into(),
        st.mean_tau.to_string(),
        st.mean_rho.to_string(),
        st.harmonic_order.join(";"),
    ]);
    let summary = format!("mean tau {:.4}  mean rho {:.4}\n", st.mean_tau, st.mean_rho);
    emit_csv(a.out.as_deref(), &STABILITY_COLUMNS, &rows, summary)
}

pub const PERTURB_COLUMNS: [&str; 5] = ["seed", "level", "s_text", "s_layout", "s_unified"];

pub fn perturb(a: &PerturbArgs) -> CmdResult {
    if a.seeds == 0 {
        return Err(anyhow!("--seeds must be at least 1").into());
    }
    let manifest = Manifest::read(&a.manifest)?;
    let (detections, _) = io::read_detections(&a.detections)?;
    let qa = io::read_qa(&a.qa)?;
    let opts = EvalOptions {
        mode: a.mode,
        seeds: None,
    };
    let mut curves: BTreeMap<u64, Vec<CurvePoint>> = BTreeMap::new();
    for seed in 1..=a.seeds {
        let curve = perturbation_sensitivity(&manifest.instructions, &detections, &qa, &a.levels, seed, &opts)?;
        curves.insert(seed, curve);
    }
    let mean = mean_curve(&curves.values().cloned().collect::<Vec<_>>());
    let row = |label: String, p: &CurvePoint| {
        vec![label, p.level.to_string(), p.s_text.to_string(), p.s_layout.to_string(), p.s_unified.to_string()]
    };
    let mut rows = Vec::new();
    for (seed, curve) in &curves {
        rows.extend(curve.iter().map(|p| row(seed.to_string(), p)));
    }
    rows.extend(mean.iter().map(|p| row("mean".into(), p)));
    let mut summary = String::new();
    for p in &mean {
        writeln!(summary, "level {:.2}: s_text {:.4}  s_layout {:.4}  s_unified {:.4}", p.level, p.s_text, p.s_layout, p.s_unified).unwrap();
    }
    emit_csv(a.out.as_deref(), &PERTURB_COLUMNS, &rows, summary)
}
