//! Occurrence scores (F1, accuracy, 2AFC), intensity scores (RMSE, PCC,
//! ICC), chance baselines, per-AU concatenation with the challenge mean, and
//! per-view breakdowns.
//!
//! Metrics that are undefined on their input (2AFC without both classes,
//! PCC on constant input, ICC with a zero denominator) return `None` and are
//! left out of means.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{AuLabels, ViewId, UNLABELED};
use crate::error::{Error, Result};
use crate::pipeline::{SequencePrediction, Task};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::MetricLength(a, b))
    }
}

/// `(tp, fp, fn, tn)` for binary sequences (any nonzero value is positive).
pub fn confusion(y: &[u8], yhat: &[u8]) -> Result<(usize, usize, usize, usize)> {
    check_len(y.len(), yhat.len())?;
    let mut c = (0, 0, 0, 0);
    for (&a, &b) in y.iter().zip(yhat) {
        match (a != 0, b != 0) {
            (true, true) => c.0 += 1,
            (false, true) => c.1 += 1,
            (true, false) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    Ok(c)
}

/// Harmonic mean of precision and recall; 0 when there is no true positive.
pub fn f1(y: &[u8], yhat: &[u8]) -> Result<f64> {
    let (tp, fp, fneg, _) = confusion(y, yhat)?;
    if tp == 0 {
        return Ok(0.0);
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fneg) as f64;
    Ok(2.0 * p * r / (p + r))
}

pub fn accuracy(y: &[u8], yhat: &[u8]) -> Result<f64> {
    check_len(y.len(), yhat.len())?;
    if y.is_empty() {
        return Ok(0.0);
    }
    Ok(y.iter().zip(yhat).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from rank sums with midranks for ties.
pub fn two_afc(scores: &[f64], positive: &[bool]) -> Result<Option<f64>> {
    check_len(scores.len(), positive.len())?;
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (p as f64, n as f64);
    Ok(Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_len(y.len(), yhat.len())?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pcc(y: &[f64], yhat: &[f64]) -> Result<Option<f64>> {
    check_len(y.len(), yhat.len())?;
    if y.len() < 2 {
        return Ok(None);
    }
    let (my, mh) = (mean(y), mean(yhat));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        sxy += (a - my) * (b - mh);
        sxx += (a - my).powi(2);
        syy += (b - mh).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Shrout-Fleiss ICC(3,1) with two raters (truth and prediction):
/// `(BMS - EMS) / (BMS + EMS)`.
pub fn icc31(y: &[f64], yhat: &[f64]) -> Result<Option<f64>> {
    check_len(y.len(), yhat.len())?;
    let n = y.len();
    if n < 2 {
        return Ok(None);
    }
    let k = 2.0;
    let grand = (y.iter().sum::<f64>() + yhat.iter().sum::<f64>()) / (k * n as f64);
    let (rater_y, rater_h) = (mean(y) - grand, mean(yhat) - grand);
    let (mut between, mut residual) = (0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        let target = (a + b) / 2.0;
        between += (target - grand).powi(2);
        residual += (a - target - rater_y).powi(2) + (b - target - rater_h).powi(2);
    }
    let bms = k * between / (n - 1) as f64;
    let ems = residual / (n - 1) as f64;
    let denom = bms + (k - 1.0) * ems;
    if !(denom > 0.0) {
        return Ok(None);
    }
    Ok(Some(((bms - ems) / denom).clamp(-1.0, 1.0)))
}

/// The ICC formula evaluated exactly as printed in the challenge
/// description, `(W - S) / (W + (k-1) W)` with `W` the within-target mean
/// square and `S` the residual sum of squares. Reported for comparison only.
pub fn icc_literal(y: &[f64], yhat: &[f64]) -> Result<Option<f64>> {
    check_len(y.len(), yhat.len())?;
    let n = y.len();
    if n == 0 {
        return Ok(None);
    }
    let k = 2.0;
    let w: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let m = (a + b) / 2.0;
            (a - m).powi(2) + (b - m).powi(2)
        })
        .sum::<f64>()
        / (n as f64 * (k - 1.0));
    let s: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    let denom = w + (k - 1.0) * w;
    if !(denom > 0.0) {
        return Ok(None);
    }
    Ok(Some((w - s) / denom))
}

/// Most frequent labeled class across `columns`; ties go to the smaller one.
pub fn majority_class<'a>(columns: impl IntoIterator<Item = &'a [u8]>) -> u8 {
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    for col in columns {
        for &v in col.iter().filter(|&&v| v != UNLABELED) {
            *counts.entry(v).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .fold((0, 0), |best, (c, n)| if n > best.1 { (c, n) } else { best })
        .0
}

/// RMSE of always predicting `majority`.
pub fn chance_rmse(y: &[u8], majority: u8) -> f64 {
    let truth: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let constant = vec![majority as f64; y.len()];
    rmse(&truth, &constant).expect("equal lengths")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Measure {
    F1,
    Accuracy,
    TwoAfc,
    Rmse,
    Pcc,
    Icc,
    IccLiteral,
    ChanceRmse,
}

impl Measure {
    pub const OCCURRENCE: [Measure; 3] = [Measure::F1, Measure::Accuracy, Measure::TwoAfc];
    pub const INTENSITY: [Measure; 5] = [
        Measure::Rmse,
        Measure::Pcc,
        Measure::Icc,
        Measure::ChanceRmse,
        Measure::IccLiteral,
    ];

    pub fn task(self) -> Task {
        match self {
            Measure::F1 | Measure::Accuracy | Measure::TwoAfc => Task::Occurrence,
            _ => Task::Intensity,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Measure::F1 => "F1",
            Measure::Accuracy => "Accuracy",
            Measure::TwoAfc => "2AFC",
            Measure::Rmse => "RMSE",
            Measure::Pcc => "PCC",
            Measure::Icc => "ICC",
            Measure::IccLiteral => "ICC (printed formula)",
            Measure::ChanceRmse => "Chance RMSE",
        }
    }

    /// Scores one AU on frames whose truth is labeled. `majority` is the
    /// training majority class, used only by the chance baseline.
    pub fn evaluate(self, truth: &[u8], labels: &[u8], decision: &[f64], majority: u8) -> Result<Option<f64>> {
        check_len(truth.len(), labels.len())?;
        check_len(truth.len(), decision.len())?;
        let keep: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] != UNLABELED).collect();
        let y: Vec<u8> = keep.iter().map(|&i| truth[i]).collect();
        let yhat: Vec<u8> = keep.iter().map(|&i| labels[i]).collect();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let hf: Vec<f64> = yhat.iter().map(|&v| v as f64).collect();
        Ok(match self {
            Measure::F1 => Some(f1(&y, &yhat)?),
            Measure::Accuracy => Some(accuracy(&y, &yhat)?),
            Measure::TwoAfc => {
                let d: Vec<f64> = keep.iter().map(|&i| decision[i]).collect();
                let pos: Vec<bool> = y.iter().map(|&v| v != 0).collect();
                two_afc(&d, &pos)?
            }
            Measure::Rmse => (!y.is_empty()).then(|| rmse(&yf, &hf)).transpose()?,
            Measure::Pcc => pcc(&yf, &hf)?,
            Measure::Icc => icc31(&yf, &hf)?,
            Measure::IccLiteral => icc_literal(&yf, &hf)?,
            Measure::ChanceRmse => (!y.is_empty()).then(|| chance_rmse(&y, majority)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Overall,
    View(u8),
}

/// Per-AU scores of one measure and their mean over defined values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub measure: Measure,
    pub scope: Scope,
    pub per_au: Vec<(u8, Option<f64>)>,
    pub mean: Option<f64>,
    /// Number of AUs left out of the mean because their score is undefined.
    pub n_na: usize,
}

impl ScoreTable {
    pub fn from_per_au(measure: Measure, scope: Scope, per_au: Vec<(u8, Option<f64>)>) -> Self {
        let defined: Vec<f64> = per_au.iter().filter_map(|(_, v)| *v).collect();
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        Self {
            measure,
            scope,
            n_na: per_au.len() - defined.len(),
            per_au,
            mean,
        }
    }

    pub fn get(&self, au: u8) -> Option<f64> {
        self.per_au.iter().find(|(a, _)| *a == au).and_then(|(_, v)| *v)
    }
}

/// Ground truth and predictions of one evaluated sequence.
#[derive(Debug, Clone)]
pub struct EvalSequence {
    pub view: ViewId,
    pub truth: AuLabels,
    pub prediction: SequencePrediction,
    pub tracked: usize,
}

/// Concatenates every sequence per AU, scores each AU and averages.
/// `majority` holds the training majority class per AU of the task.
pub fn challenge_score(
    sequences: &[&EvalSequence],
    measure: Measure,
    majority: &[u8],
    scope: Scope,
) -> Result<ScoreTable> {
    let task = measure.task();
    let per_au = task
        .aus()
        .iter()
        .enumerate()
        .map(|(i, &au)| {
            let (mut truth, mut labels, mut decision) = (Vec::new(), Vec::new(), Vec::new());
            for seq in sequences {
                let fused = seq
                    .prediction
                    .task(task)
                    .get(i)
                    .ok_or_else(|| Error::MissingModel(format!("AU{au} ({task:?}) predictions")))?;
                truth.extend_from_slice(task.column(&seq.truth, i));
                labels.extend(fused.labels.iter().map(|&l| l as u8));
                decision.extend_from_slice(&fused.decision);
            }
            let m = majority.get(i).copied().unwrap_or(0);
            Ok((au, measure.evaluate(&truth, &labels, &decision, m)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable::from_per_au(measure, scope, per_au))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub measure: Measure,
    pub tables: Vec<ScoreTable>,
    /// Percentage of tracked frames per view.
    pub detected: Vec<(u8, Option<f64>)>,
}

/// Percentage of tracked frames among the sequences of each view.
pub fn detected_percent(sequences: &[EvalSequence]) -> Vec<(u8, Option<f64>)> {
    ViewId::all()
        .map(|v| {
            let (tracked, total) = sequences
                .iter()
                .filter(|s| s.view == v)
                .fold((0, 0), |(a, b), s| (a + s.tracked, b + s.truth.len()));
            (v.get(), (total > 0).then(|| 100.0 * tracked as f64 / total as f64))
        })
        .collect()
}

/// Scores restricted to each view present in `sequences`; views without
/// sequences get an all-NA table.
pub fn per_view_report(sequences: &[EvalSequence], measure: Measure, majority: &[u8]) -> Result<ViewReport> {
    let tables = ViewId::all()
        .map(|v| {
            let subset: Vec<&EvalSequence> = sequences.iter().filter(|s| s.view == v).collect();
            let scope = Scope::View(v.get());
            if subset.is_empty() {
                let na = measure.task().aus().iter().map(|&a| (a, None)).collect();
                Ok(ScoreTable::from_per_au(measure, scope, na))
            } else {
                challenge_score(&subset, measure, majority, scope)
            }
        })
        .collect::<Result<_>>()?;
    Ok(ViewReport {
        measure,
        tables,
        detected: detected_percent(sequences),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub partition: String,
    pub n_sequences: usize,
    pub overall: Vec<ScoreTable>,
    pub per_view: Vec<ViewReport>,
}

impl EvaluationReport {
    pub fn table(&self, measure: Measure) -> Option<&ScoreTable> {
        self.overall.iter().find(|t| t.measure == measure)
    }

    pub fn view_report(&self, measure: Measure) -> Option<&ViewReport> {
        self.per_view.iter().find(|t| t.measure == measure)
    }
}

/// Per-view breakdowns are produced for the headline and auxiliary measures
/// (not for the chance baseline or the printed ICC formula).
pub const PER_VIEW_MEASURES: [Measure; 6] = [
    Measure::F1,
    Measure::Accuracy,
    Measure::TwoAfc,
    Measure::Rmse,
    Measure::Pcc,
    Measure::Icc,
];

/// Full evaluation of one partition. `majority` is the training majority
/// class per intensity AU.
pub fn evaluate(partition: &str, sequences: &[EvalSequence], majority: &[u8]) -> Result<EvaluationReport> {
    let all: Vec<&EvalSequence> = sequences.iter().collect();
    let overall = Measure::OCCURRENCE
        .iter()
        .chain(&Measure::INTENSITY)
        .map(|&m| challenge_score(&all, m, majority, Scope::Overall))
        .collect::<Result<_>>()?;
    let per_view = PER_VIEW_MEASURES
        .iter()
        .map(|&m| per_view_report(sequences, m, majority))
        .collect::<Result<_>>()?;
    Ok(EvaluationReport {
        partition: partition.to_string(),
        n_sequences: sequences.len(),
        overall,
        per_view,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.3}"))
}

fn markdown_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

fn au_rows(tables: &[&ScoreTable], aus: &[u8]) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = aus
        .iter()
        .map(|&au| {
            std::iter::once(format!("AU{au}"))
                .chain(tables.iter().map(|t| cell(t.get(au))))
                .collect()
        })
        .collect();
    rows.push(
        std::iter::once("Mean".to_string())
            .chain(tables.iter().map(|t| cell(t.mean)))
            .collect(),
    );
    rows
}

fn na_note(out: &mut String, tables: &[&ScoreTable]) {
    let n: usize = tables.iter().map(|t| t.n_na).sum();
    if n > 0 {
        let _ = writeln!(out, "NA: {n} undefined cell(s) excluded from the means.\n");
    }
}

/// Markdown report: AUs as rows, mean row last.
pub fn render_markdown(report: &EvaluationReport) -> String {
    let mut out = format!("# Evaluation: {} partition\n\n", report.partition);
    let _ = writeln!(out, "{} sequences.\n", report.n_sequences);
    for (title, task, measures) in [
        ("Occurrence", Task::Occurrence, &Measure::OCCURRENCE[..]),
        ("Intensity", Task::Intensity, &Measure::INTENSITY[..]),
    ] {
        let tables: Vec<&ScoreTable> = measures.iter().filter_map(|&m| report.table(m)).collect();
        let _ = writeln!(out, "## {title}\n");
        let header: Vec<String> = std::iter::once("Action Unit".to_string())
            .chain(tables.iter().map(|t| t.measure.label().to_string()))
            .collect();
        markdown_table(&mut out, &header, &au_rows(&tables, task.aus()));
        na_note(&mut out, &tables);
    }
    for view in &report.per_view {
        let _ = writeln!(out, "## {} per view\n", view.measure.label());
        let header: Vec<String> = std::iter::once("View".to_string())
            .chain(view.tables.iter().map(|t| match t.scope {
                Scope::View(v) => v.to_string(),
                Scope::Overall => "all".to_string(),
            }))
            .collect();
        let tables: Vec<&ScoreTable> = view.tables.iter().collect();
        let mut rows = vec![std::iter::once("% Detected frames".to_string())
            .chain(view.detected.iter().map(|(_, d)| d.map_or("NA".into(), |d| format!("{d:.2}"))))
            .collect()];
        rows.extend(au_rows(&tables, view.measure.task().aus()));
        markdown_table(&mut out, &header, &rows);
        na_note(&mut out, &tables);
    }
    out
}

/// Long-format CSV: `partition,scope,measure,au,value`, mean rows last per
/// table and detected-frame percentages as measure `detected`.
pub fn render_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("partition,scope,measure,au,value\n");
    let mut emit = |t: &ScoreTable| {
        let scope = match t.scope {
            Scope::Overall => "overall".to_string(),
            Scope::View(v) => format!("view{v}"),
        };
        for (au, v) in &t.per_au {
            let _ = writeln!(out, "{},{scope},{},AU{au},{}", report.partition, t.measure.label(), cell(*v));
        }
        let _ = writeln!(out, "{},{scope},{},mean,{}", report.partition, t.measure.label(), cell(t.mean));
    };
    report.overall.iter().for_each(&mut emit);
    for view in &report.per_view {
        view.tables.iter().for_each(&mut emit);
    }
    if let Some(view) = report.per_view.first() {
        for (v, d) in &view.detected {
            let value = d.map_or("NA".into(), |d| format!("{d:.2}"));
            let _ = writeln!(out, "{},view{v},detected,all,{value}", report.partition);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{INTENSITY_AUS, OCCURRENCE_AUS};
    use crate::pipeline::FusedPrediction;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        // tp=1, fp=1, fn=1
        assert!(close(f1(&[1, 1, 0], &[1, 0, 1]).unwrap(), 0.5, 1e-15));
        assert_eq!(f1(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(f1(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 1], &[0, 1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn two_afc_examples() {
        let pos = [true, true, false, false];
        assert_eq!(two_afc(&[0.9, 0.8, 0.1, 0.2], &pos).unwrap(), Some(1.0));
        assert_eq!(two_afc(&[0.5; 4], &pos).unwrap(), Some(0.5));
        assert_eq!(two_afc(&[0.1, 0.2, 0.9, 0.8], &pos).unwrap(), Some(0.0));
        assert_eq!(two_afc(&[0.1, 0.2], &[true, true]).unwrap(), None);
    }

    #[test]
    fn rmse_and_pcc_examples() {
        let y = [0.0, 1.0, 3.0, 2.0];
        let shifted: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert!(close(rmse(&y, &shifted).unwrap(), 1.0, 1e-15));
        assert!(close(pcc(&y, &y).unwrap().unwrap(), 1.0, 1e-15));
        assert_eq!(pcc(&y, &[2.0; 4]).unwrap(), None);
    }

    #[test]
    fn icc_separates_agreement_from_correlation() {
        let y = [0.0, 1.0, 3.0, 2.0, 5.0, 4.0];
        assert!(close(icc31(&y, &y).unwrap().unwrap(), 1.0, 1e-12));
        let affine: Vec<f64> = y.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!(close(pcc(&y, &affine).unwrap().unwrap(), 1.0, 1e-12));
        assert!(icc31(&y, &affine).unwrap().unwrap() < 1.0);
        assert_eq!(icc31(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), None);
    }

    #[test]
    fn printed_icc_formula_is_half_of_one_minus_ratio() {
        let y = [0.0, 1.0, 2.0];
        let yhat = [1.0, 1.0, 0.0];
        // W = (0.5 + 0 + 2) / 3, S = 1 + 0 + 4
        let w = 2.5 / 3.0;
        assert!(close(icc_literal(&y, &yhat).unwrap().unwrap(), (w - 5.0) / (2.0 * w), 1e-12));
    }

    #[test]
    fn chance_rmse_examples() {
        assert_eq!(chance_rmse(&[0, 0, 0], 0), 0.0);
        assert!(close(chance_rmse(&[0, 0, 5], 0), (25.0f64 / 3.0).sqrt(), 1e-12));
        assert_eq!(majority_class([&[0u8, 2, 2, 9, 9, 9][..], &[0u8, 1][..]]), 0);
    }

    #[test]
    fn unlabeled_frames_are_dropped() {
        let truth = [1, 9, 0, 9];
        let labels = [1, 0, 0, 1];
        let d = [0.9, 0.1, 0.2, 0.8];
        assert_eq!(Measure::F1.evaluate(&truth, &labels, &d, 0).unwrap(), Some(1.0));
        assert_eq!(Measure::Accuracy.evaluate(&truth, &labels, &d, 0).unwrap(), Some(1.0));
    }

    #[test]
    fn mean_skips_na() {
        let t = ScoreTable::from_per_au(Measure::Pcc, Scope::Overall, vec![(1, Some(0.2)), (4, None), (6, Some(0.4))]);
        assert!(close(t.mean.unwrap(), 0.3, 1e-15));
        assert_eq!(t.n_na, 1);
    }

    fn fused(labels: &[usize]) -> FusedPrediction {
        FusedPrediction {
            labels: labels.to_vec(),
            scores: vec![0.0; labels.len()],
            coverage: vec![1; labels.len()],
            decision: labels.iter().map(|&l| l as f64).collect(),
        }
    }

    fn sequence(view: u8, truth: &[u8], pred: &[usize]) -> EvalSequence {
        let mut labels = AuLabels::zeros(truth.len());
        labels.occurrence[0] = truth.to_vec();
        let mut occurrence = vec![fused(&vec![0; truth.len()]); OCCURRENCE_AUS.len()];
        occurrence[0] = fused(pred);
        EvalSequence {
            view: ViewId::new(view).unwrap(),
            truth: labels,
            prediction: SequencePrediction {
                occurrence,
                intensity: vec![fused(&vec![0; truth.len()]); INTENSITY_AUS.len()],
            },
            tracked: truth.len(),
        }
    }

    #[test]
    fn per_view_tables_use_only_their_view() {
        // View 1: tp=2, fp=0, fn=2 -> F1 = 2/3. View 2: tp=1, fp=1, fn=0 -> 2/3.
        let seqs = vec![
            sequence(1, &[1, 1, 1, 1, 0], &[1, 1, 0, 0, 0]),
            sequence(2, &[1, 0, 0], &[1, 1, 0]),
        ];
        let report = per_view_report(&seqs, Measure::F1, &[0; 7]).unwrap();
        assert!(close(report.tables[0].get(1).unwrap(), 2.0 / 3.0, 1e-12));
        assert!(close(report.tables[1].get(1).unwrap(), 2.0 / 3.0, 1e-12));
        assert_eq!(report.tables[2].mean, None);
        assert_eq!(report.detected[0], (1, Some(100.0)));
        // Overall: tp=3, fp=1, fn=2 -> P=3/4, R=3/5.
        let all: Vec<&EvalSequence> = seqs.iter().collect();
        let overall = challenge_score(&all, Measure::F1, &[0; 7], Scope::Overall).unwrap();
        let (p, r) = (0.75, 0.6);
        assert!(close(overall.get(1).unwrap(), 2.0 * p * r / (p + r), 1e-12));
    }

    #[test]
    fn single_view_breakdown_equals_overall() {
        let seqs = vec![sequence(5, &[1, 0, 1, 1], &[1, 0, 0, 1]), sequence(5, &[0, 0, 1], &[0, 1, 1])];
        let report = evaluate("development", &seqs, &[0; 7]).unwrap();
        let overall = report.table(Measure::F1).unwrap();
        let view5 = &report.view_report(Measure::F1).unwrap().tables[4];
        assert_eq!(overall.per_au, view5.per_au);
        let md = render_markdown(&report);
        assert!(md.contains("| Mean |") && md.contains("% Detected frames"));
        assert!(render_csv(&report).starts_with("partition,scope,measure,au,value\n"));
    }
}
