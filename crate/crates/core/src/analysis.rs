//! Model rankings, rank correlation, and robustness analyses of the
//! unified score.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::layout::{sample_box, LayoutConfig};
use crate::metrics::{aggregate, DetectionRecord, EvalOptions, QaRecord, ScoreReport};
use crate::model::{BenchmarkKind, Instruction};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub model: String,
    pub s_unified: f64,
    /// Relative gap to the top model in percent, rounded to one decimal.
    pub delta_pct: f64,
}

/// Rounds half away from zero to one decimal; never returns `-0.0`.
pub fn round1(v: f64) -> f64 {
    let r = (v * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn delta_pct(score: f64, top: f64) -> f64 {
    if top == 0.0 {
        return 0.0;
    }
    round1(100.0 * (score - top) / top)
}

/// `+0.0` for the top model, `-13.3` style otherwise.
pub fn format_delta(delta: f64) -> String {
    if delta >= 0.0 {
        format!("+{delta:.1}")
    } else {
        format!("{delta:.1}")
    }
}

/// Sorts `(model, score)` pairs by score descending, ties by model name.
pub fn rank_scores(scores: &[(String, f64)]) -> Vec<RankRow> {
    let mut sorted: Vec<&(String, f64)> = scores.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top = sorted.first().map_or(0.0, |s| s.1);
    sorted
        .iter()
        .enumerate()
        .map(|(i, (model, s))| RankRow {
            rank: i + 1,
            model: model.clone(),
            s_unified: *s,
            delta_pct: if i == 0 { 0.0 } else { delta_pct(*s, top) },
        })
        .collect()
}

/// Ranks reports by aggregate `s_unified`.
pub fn rank_models(reports: &[ScoreReport]) -> Result<Vec<RankRow>, MetricError> {
    check_reports(reports)?;
    let scores: Vec<(String, f64)> = reports
        .iter()
        .map(|r| (r.model_name.clone(), r.aggregate.s_unified))
        .collect();
    Ok(rank_scores(&scores))
}

fn check_reports(reports: &[ScoreReport]) -> Result<BenchmarkKind, MetricError> {
    if reports.len() < 2 {
        return Err(MetricError::TooFewReports {
            needed: 2,
            got: reports.len(),
        });
    }
    let kind = reports[0].benchmark;
    if reports.iter().any(|r| r.benchmark != kind) {
        return Err(MetricError::InvalidArgument(
            "reports mix closed-set and open-set benchmarks".into(),
        ));
    }
    let mut names = std::collections::BTreeSet::new();
    for r in reports {
        if !names.insert(r.model_name.as_str()) {
            return Err(MetricError::InvalidArgument(format!(
                "model `{}` appears in more than one report",
                r.model_name
            )));
        }
    }
    Ok(kind)
}

/// Item name to score; higher is better.
pub type Ranking = BTreeMap<String, f64>;

fn paired(a: &Ranking, b: &Ranking) -> Result<Vec<(f64, f64)>, MetricError> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(MetricError::ItemSetMismatch);
    }
    Ok(a.values().copied().zip(b.values().copied()).collect())
}

fn sign(o: Ordering) -> i32 {
    match o {
        Ordering::Less => -1,
        Ordering::Equal => 0,
        Ordering::Greater => 1,
    }
}

fn all_tied(values: impl IntoIterator<Item = f64>) -> bool {
    let mut it = values.into_iter();
    let first = it.next();
    it.all(|v| Some(v) == first)
}

/// Both rankings tie every item, so they impose the same (empty) order.
fn fully_tied(pairs: &[(f64, f64)]) -> bool {
    all_tied(pairs.iter().map(|p| p.0)) && all_tied(pairs.iter().map(|p| p.1))
}

/// Kendall tau-a. Pairs tied in either ranking count as neither concordant
/// nor discordant; two fully tied rankings agree perfectly (1.0).
pub fn kendall_tau(a: &Ranking, b: &Ranking) -> Result<f64, MetricError> {
    let pairs = paired(a, b)?;
    let n = pairs.len();
    if n < 2 {
        return Err(MetricError::Undefined("fewer than two items"));
    }
    if fully_tied(&pairs) {
        return Ok(1.0);
    }
    let mut score: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let sa = sign(pairs[i].0.total_cmp(&pairs[j].0));
            let sb = sign(pairs[i].1.total_cmp(&pairs[j].1));
            score += i64::from(sa * sb);
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    Ok(score as f64 / total)
}

/// Ranks 1..n in ascending value order; tied values share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Pearson correlation of the average-rank vectors. Two fully tied rankings
/// give 1.0; a single fully tied ranking is undefined.
pub fn spearman_rho(a: &Ranking, b: &Ranking) -> Result<f64, MetricError> {
    let pairs = paired(a, b)?;
    if pairs.len() < 2 {
        return Err(MetricError::Undefined("fewer than two items"));
    }
    if fully_tied(&pairs) {
        return Ok(1.0);
    }
    let (xa, xb): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    pearson(&average_ranks(&xa), &average_ranks(&xb))
        .ok_or(MetricError::Undefined("a ranking has all items tied"))
}

pub const DEFAULT_ALPHAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub tau: f64,
    pub rho: f64,
    /// Model names, best first, under `alpha * s_text + (1 - alpha) * s_layout`.
    pub order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Model names, best first, under the harmonic combination.
    pub harmonic_order: Vec<String>,
    pub per_alpha: Vec<AlphaResult>,
    pub mean_tau: f64,
    pub mean_rho: f64,
}

fn order_of(r: &Ranking) -> Vec<String> {
    let pairs: Vec<(String, f64)> = r.iter().map(|(k, v)| (k.clone(), *v)).collect();
    rank_scores(&pairs).into_iter().map(|row| row.model).collect()
}

/// Compares the ranking induced by the harmonic mean of each model's
/// aggregate text and layout scores with the rankings induced by linear
/// combinations of the same two scores.
pub fn ranking_stability(
    reports: &[ScoreReport],
    alphas: &[f64],
) -> Result<StabilityReport, MetricError> {
    check_reports(reports)?;
    if alphas.is_empty() {
        return Err(MetricError::InvalidArgument("no alphas given".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(MetricError::InvalidArgument(format!("alpha {a} outside [0, 1]")));
    }
    let harmonic: Ranking = reports
        .iter()
        .map(|r| (r.model_name.clone(), r.unified_of_means))
        .collect();
    let mut per_alpha = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let linear: Ranking = reports
            .iter()
            .map(|r| {
                let s = alpha * r.aggregate.s_text + (1.0 - alpha) * r.aggregate.s_layout;
                (r.model_name.clone(), s)
            })
            .collect();
        per_alpha.push(AlphaResult {
            alpha,
            tau: kendall_tau(&linear, &harmonic)?,
            rho: spearman_rho(&linear, &harmonic)?,
            order: order_of(&linear),
        });
    }
    let n = per_alpha.len() as f64;
    Ok(StabilityReport {
        harmonic_order: order_of(&harmonic),
        mean_tau: per_alpha.iter().map(|r| r.tau).sum::<f64>() / n,
        mean_rho: per_alpha.iter().map(|r| r.rho).sum::<f64>() / n,
        per_alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub level: f64,
    pub s_text: f64,
    pub s_layout: f64,
    pub s_unified: f64,
}

/// An expected answer guaranteed to differ from `predicted` after
/// normalization.
pub fn flip_answer(expected: &str, predicted: &str) -> String {
    use crate::metrics::{answers_match, normalize_answer};
    if !answers_match(expected, predicted) {
        return expected.to_string();
    }
    match normalize_answer(predicted).as_str() {
        "yes" => "no".to_string(),
        "no" => "yes".to_string(),
        p => format!("not {p}"),
    }
}

fn check_levels(levels: &[f64]) -> Result<(), MetricError> {
    if levels.is_empty() {
        return Err(MetricError::InvalidArgument("no perturbation levels".into()));
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(MetricError::InvalidArgument(format!("level {l} outside [0, 1]")));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricError::InvalidArgument("levels must be strictly increasing".into()));
    }
    Ok(())
}

/// Share of `n` rounded to the nearest integer.
fn count_at(level: f64, n: usize) -> usize {
    ((level * n as f64).round() as usize).min(n)
}

/// Score curve under growing corruption of the ground truth. For each
/// level `p`, a fraction `p` of all target boxes is replaced by freshly
/// sampled boxes and a fraction `p` of all expected answers is flipped; the
/// records stay fixed. The perturbed sets are nested across levels.
pub fn perturbation_sensitivity(
    instructions: &[Instruction],
    detections: &[DetectionRecord],
    qa: &[QaRecord],
    levels: &[f64],
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<CurvePoint>, MetricError> {
    check_levels(levels)?;
    let cfg = LayoutConfig::default();
    let mut rng = rng_from_seed(derive_seed(seed, "perturbation"));

    let mut box_slots: Vec<(usize, usize)> = instructions
        .iter()
        .enumerate()
        .flat_map(|(i, instr)| (0..instr.objects.len()).map(move |j| (i, j)))
        .collect();
    box_slots.shuffle(&mut rng);
    let replacements = box_slots
        .iter()
        .map(|_| sample_box(&mut rng, cfg.area_range, cfg.aspect_range, cfg.max_retries))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| MetricError::InvalidArgument(e.to_string()))?;

    let mut answer_slots: Vec<(usize, usize)> = qa
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| (0..rec.items.len()).map(move |k| (r, k)))
        .collect();
    answer_slots.shuffle(&mut rng);

    let benchmark = match instructions.first().map(|i| i.scenario.is_closed()) {
        Some(false) => BenchmarkKind::Open,
        _ => BenchmarkKind::Closed,
    };

    let mut curve = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut instrs = instructions.to_vec();
        for (&(i, j), b) in box_slots.iter().zip(&replacements).take(count_at(level, box_slots.len())) {
            instrs[i].objects[j].bbox = *b;
        }
        let mut records = qa.to_vec();
        for &(r, k) in answer_slots.iter().take(count_at(level, answer_slots.len())) {
            let item = &mut records[r].items[k];
            item.expected = flip_answer(&item.expected, &item.predicted);
        }
        let report = aggregate("perturbed", benchmark, &instrs, detections, &records, opts)?;
        curve.push(CurvePoint {
            level,
            s_text: report.aggregate.s_text,
            s_layout: report.aggregate.s_layout,
            s_unified: report.aggregate.s_unified,
        });
    }
    Ok(curve)
}

/// Point-wise mean of the curves obtained with each perturbation seed.
pub fn mean_curve(curves: &[Vec<CurvePoint>]) -> Vec<CurvePoint> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    let n = curves.len() as f64;
    (0..first.len())
        .map(|i| {
            let sum = |f: fn(&CurvePoint) -> f64| curves.iter().map(|c| f(&c[i])).sum::<f64>() / n;
            CurvePoint {
                level: first[i].level,
                s_text: sum(|p| p.s_text),
                s_layout: sum(|p| p.s_layout),
                s_unified: sum(|p| p.s_unified),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(pairs: &[(&str, f64)]) -> Ranking {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_pct(0.6143, 0.7082), -13.3);
        assert_eq!(delta_pct(0.2522, 0.7082), -64.4);
        let rows = rank_scores(&[("b".into(), 0.5), ("a".into(), 0.5)]);
        assert_eq!(rows[0].model, "a");
        assert_eq!(format_delta(rows[1].delta_pct), "+0.0");
        assert_eq!(format_delta(-13.3), "-13.3");
    }

    #[test]
    fn tau_examples() {
        let a = ranking(&[("x", 3.0), ("y", 2.0), ("z", 1.0)]);
        let rev = ranking(&[("x", 1.0), ("y", 2.0), ("z", 3.0)]);
        let swap = ranking(&[("x", 2.0), ("y", 3.0), ("z", 1.0)]);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &rev).unwrap(), -1.0);
        assert!((kendall_tau(&a, &swap).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let other = ranking(&[("x", 1.0), ("y", 2.0), ("w", 3.0)]);
        assert_eq!(kendall_tau(&a, &other), Err(MetricError::ItemSetMismatch));
    }

    #[test]
    fn rho_examples() {
        let a = ranking(&[("x", 1.0), ("y", 2.0), ("z", 3.0)]);
        let b = ranking(&[("x", 2.0), ("y", 1.0), ("z", 3.0)]);
        let rev = ranking(&[("x", 3.0), ("y", 2.0), ("z", 1.0)]);
        assert!((spearman_rho(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman_rho(&a, &rev).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman_rho(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        let one = ranking(&[("x", 1.0)]);
        assert!(matches!(spearman_rho(&one, &one), Err(MetricError::Undefined(_))));
        let flat = ranking(&[("x", 0.5), ("y", 0.5), ("z", 0.5)]);
        assert_eq!(spearman_rho(&flat, &flat), Ok(1.0));
        assert_eq!(kendall_tau(&flat, &flat), Ok(1.0));
        assert!(matches!(spearman_rho(&a, &flat), Err(MetricError::Undefined(_))));
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn flip_never_matches() {
        assert_eq!(flip_answer("yes", "Yes"), "no");
        assert_eq!(flip_answer("no", "no"), "yes");
        assert_eq!(flip_answer("red", "red"), "not red");
        assert_eq!(flip_answer("red", "blue"), "red");
    }

    #[test]
    fn levels_must_increase() {
        assert!(check_levels(&[0.0, 0.5, 0.5]).is_err());
        assert!(check_levels(&[0.0, 1.5]).is_err());
        assert!(check_levels(&[0.0, 0.25, 1.0]).is_ok());
    }
}
