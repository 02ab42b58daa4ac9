//! End-to-end runs of the `layoutbench` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use layoutbench::metrics::{DetectionRecord, QaItem, QaRecord};
use layoutbench::Detection;
use layoutbench_cli::io::{read_report, write_jsonl, Manifest};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layoutbench")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    bin(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synthetic(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic").join(name)
}

fn vocabulary() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/vocabulary.toml")
}

fn small_config(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("small_{seed}.toml"));
    std::fs::write(
        &path,
        format!(
            "seed = {seed}\nvocabulary = \"{}\"\n\n[plan]\ncells = [\n  {{ scenario = \"object_binding\", n_objects = 2, count = 5 }},\n  {{ scenario = \"object_relationship\", n_objects = 2, count = 3 }},\n]\n",
            vocabulary().display()
        ),
    )
    .unwrap();
    path
}

/// Writes perfect or box-less records for every instruction at seeds 1 and 2.
fn records(dir: &Path, manifest: &Manifest, with_boxes: bool) -> (PathBuf, PathBuf) {
    let mut dets = Vec::new();
    let mut qa = Vec::new();
    for instr in &manifest.instructions {
        for seed in 1..=2 {
            for (j, o) in instr.objects.iter().enumerate() {
                let detections = if with_boxes { vec![Detection { bbox: o.bbox, confidence: 0.9 }] } else { vec![] };
                dets.push(DetectionRecord { instruction_id: instr.id.clone(), seed, object_index: j, detections });
            }
            let items = vec![QaItem { question: "is it there?".into(), expected: "Yes".into(), predicted: " yes ".into() }];
            qa.push(QaRecord { instruction_id: instr.id.clone(), seed, items });
        }
    }
    let tag = if with_boxes { "full" } else { "empty" };
    let (d, q) = (dir.join(format!("det_{tag}.jsonl")), dir.join(format!("qa_{tag}.jsonl")));
    write_jsonl(&d, &dets).unwrap();
    write_jsonl(&q, &qa).unwrap();
    (d, q)
}

fn generated(dir: &Path) -> (PathBuf, Manifest) {
    let out = dir.join("closed.jsonl");
    let text = ok(&["gen-closed", "--config", p(&small_config(dir, 3)), "--out", p(&out)]);
    assert!(text.contains("total") && text.contains("8"), "{text}");
    let manifest = Manifest::read(&out).unwrap();
    (out, manifest)
}

#[test]
fn single_cell_plans_generate_exact_counts_and_seed_changes_digest() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = generated(dir.path());
    assert_eq!(manifest.instructions.len(), 8);
    assert_eq!(manifest.instructions.iter().filter(|i| i.scenario.as_str() == "object_binding").count(), 5);
    assert_eq!(manifest.instructions[0].id, "object_binding_2_0000");

    let other = dir.path().join("other.jsonl");
    ok(&["gen-closed", "--config", p(&small_config(dir.path(), 3)), "--out", p(&other), "--seed", "4"]);
    let other = Manifest::read(&other).unwrap();
    assert_ne!(other.header.config_digest, manifest.header.config_digest);
    assert_ne!(other.instructions, manifest.instructions);
    assert_eq!(other.header.master_seed, 4);

    let again = dir.path().join("again.jsonl");
    ok(&["gen-closed", "--config", p(&small_config(dir.path(), 3)), "--out", p(&again), "--jobs", "1"]);
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn perfect_records_score_one_and_empty_detections_score_the_floor() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest_path, manifest) = generated(dir.path());

    let (d, q) = records(dir.path(), &manifest, true);
    let report = dir.path().join("perfect.json");
    ok(&["eval", "--manifest", p(&manifest_path), "--detections", p(&d), "--qa", p(&q), "--out", p(&report)]);
    let r = read_report(&report).unwrap();
    assert_eq!((r.aggregate.s_text, r.aggregate.s_layout, r.aggregate.s_unified), (1.0, 1.0, 1.0));
    assert_eq!(r.coverage.scored, 16);
    assert_eq!(r.model_name, "det_full");

    let (d, q) = records(dir.path(), &manifest, false);
    let report = dir.path().join("floor.json");
    ok(&["eval", "--manifest", p(&manifest_path), "--detections", p(&d), "--qa", p(&q), "--out", p(&report), "--model", "blank"]);
    let r = read_report(&report).unwrap();
    assert!((r.aggregate.s_layout - 0.05).abs() < 1e-12);
    assert!((r.aggregate.s_unified - 2.0 * 0.05 / 1.05).abs() < 1e-12);
}

#[test]
fn exit_codes_distinguish_input_and_coverage_failures() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let args = |qa: &Path, mode: &str, seeds: &str| -> Vec<String> {
        [
            "eval", "--manifest", p(&synthetic("manifest.jsonl")), "--detections", p(&synthetic("detections.jsonl")),
            "--qa", p(qa), "--out", p(&report), "--mode", mode, "--seeds", seeds,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let run = |a: Vec<String>| code(&a.iter().map(String::as_str).collect::<Vec<_>>());

    assert_eq!(run(args(&synthetic("qa.jsonl"), "strict", "1,2")), 0);
    assert_eq!(run(args(&synthetic("qa.jsonl"), "strict", "1,2,3")), 3);
    assert_eq!(run(args(&synthetic("qa.jsonl"), "lenient", "1,2,3")), 0);
    let r = read_report(&report).unwrap();
    assert_eq!((r.coverage.expected, r.coverage.scored, r.coverage.missing.len()), (30, 20, 10));
    assert_eq!(run(args(&synthetic("qa.jsonl"), "strict", "9")), 1);

    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, "{\"instruction_id\": \"i00\", \"seed\": 1}\n").unwrap();
    let out = bin(&args(&broken, "strict", "1").iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":1"));
    assert_eq!(code(&["gen-closed", "--config", "/nonexistent.toml", "--out", "/tmp/x.jsonl"]), 1);
}

fn eval_synthetic(dir: &Path, model: &str) -> PathBuf {
    let out = dir.join(format!("{model}.json"));
    ok(&[
        "eval", "--manifest", p(&synthetic("manifest.jsonl")), "--detections", p(&synthetic("detections.jsonl")),
        "--qa", p(&synthetic("qa.jsonl")), "--out", p(&out), "--model", model,
    ]);
    out
}

fn parse_csv(text: &str) -> Vec<Vec<String>> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn rank_breakdown_and_stability_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = eval_synthetic(dir.path(), "alpha");
    let b = eval_synthetic(dir.path(), "beta");

    let csv = ok(&["rank", "--reports", p(&a), p(&b)]);
    assert!(csv.starts_with("rank,model,s_unified,delta_pct\n"), "{csv}");
    let rows = parse_csv(&csv);
    assert_eq!(rows[0][1], "alpha");
    assert_eq!((rows[0][3].as_str(), rows[1][3].as_str()), ("+0.0", "+0.0"));

    let out = dir.path().join("rank.csv");
    let text = ok(&["rank", "--reports", p(&a), p(&b), "--out", p(&out)]);
    assert!(text.contains("wrote"));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), csv);

    let by_scenario = parse_csv(&ok(&["breakdown", "--report", p(&a), "--axis", "scenario"]));
    assert_eq!(by_scenario.len(), 7);
    assert!(by_scenario.iter().all(|r| r[2].is_empty()));
    let counts: usize = by_scenario.iter().map(|r| r[3].parse::<usize>().unwrap()).sum();
    assert_eq!(counts, 20);
    let by_n = parse_csv(&ok(&["breakdown", "--report", p(&a), "--axis", "nobj"]));
    assert_eq!(by_n.len(), 4);

    let same = parse_csv(&ok(&["stability", "--reports", p(&a), p(&b)]));
    assert_eq!(same.len(), 10);
    assert!(same.iter().all(|r| r[1] == "1" && r[2] == "1"), "{same:?}");

    // Scaling both components keeps every weighting in the same order as the harmonic ranking.
    let mut half: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&b).unwrap()).unwrap();
    for key in ["s_text", "s_layout", "s_unified"] {
        half["aggregate"][key] = (half["aggregate"][key].as_f64().unwrap() * 0.5).into();
    }
    half["unified_of_means"] = (half["unified_of_means"].as_f64().unwrap() * 0.5).into();
    std::fs::write(&b, half.to_string()).unwrap();
    let st = parse_csv(&ok(&["stability", "--reports", p(&a), p(&b), "--alphas", "0.2,0.8"]));
    assert_eq!(st.len(), 3);
    assert_eq!(st[0][3], "alpha;beta");
    assert!(st.iter().all(|r| r[1] == "1" && r[2] == "1"), "{st:?}");
    assert_eq!(st[2][0], "mean");

    assert_eq!(code(&["rank", "--reports", p(&a)]), 1);
}

#[test]
fn rank_rejects_mixed_benchmark_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let a = eval_synthetic(dir.path(), "alpha");
    let mut report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    report["benchmark"] = "open".into();
    report["model_name"] = "gamma".into();
    let b = dir.path().join("gamma.json");
    std::fs::write(&b, report.to_string()).unwrap();
    assert_eq!(code(&["rank", "--reports", p(&a), p(&b)]), 1);
}

#[test]
fn perturb_level_zero_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let a = read_report(&eval_synthetic(dir.path(), "alpha")).unwrap();
    let csv = ok(&[
        "perturb", "--manifest", p(&synthetic("manifest.jsonl")), "--detections", p(&synthetic("detections.jsonl")),
        "--qa", p(&synthetic("qa.jsonl")), "--seeds", "3",
    ]);
    let rows = parse_csv(&csv);
    assert_eq!(rows.len(), 4 * 5);
    for r in rows.iter().filter(|r| r[1] == "0") {
        let got: Vec<f64> = r[2..].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(got, [a.aggregate.s_text, a.aggregate.s_layout, a.aggregate.s_unified], "{r:?}");
    }
    assert_eq!(code(&["perturb", "--manifest", p(&synthetic("manifest.jsonl")), "--detections",
        p(&synthetic("detections.jsonl")), "--qa", p(&synthetic("qa.jsonl")), "--levels", "0.5,0.25"]), 1);
}
