//! Scoring and prediction files.
//!
//! Precision, recall and F1 are 0 whenever their denominator is 0. The macro
//! average runs over all six classes by default, so a class that never
//! occurs contributes an F1 of 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, RelationRecord, SourceTag};
use crate::diffcore::Scalar;
use crate::pcnn::{predict_all, ModelConfig, ModelError, ModelParams};
use crate::preprocess::{Direction, RelationInstance};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{gold} gold labels but {pred} predictions")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("label index {0} is not one of the {n} classes", n = Label::COUNT)]
    UnknownLabel(usize),
    #[error("nothing to score")]
    Empty,
    #[error("instance {0} has no gold label")]
    Unlabeled(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Io(String),
}

impl EvalError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        EvalError::Io(format!("{}: {e}", path.display()))
    }
}

/// Which classes enter the macro average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroOver {
    /// All six classes.
    #[default]
    All,
    /// Only classes that occur in the gold labels.
    Present,
}

impl std::str::FromStr for MacroOver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(MacroOver::All),
            "present" => Ok(MacroOver::Present),
            other => Err(format!(
                "macro-over must be `all` or `present`, got `{other}`"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_class: BTreeMap<Label, ClassScore>,
    pub macro_f1: f64,
    pub micro_accuracy: f64,
    /// `confusion[gold][pred]`.
    pub confusion: [[usize; Label::COUNT]; Label::COUNT],
    pub total: usize,
    pub macro_over: MacroOver,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores class indices in `0..6`.
pub fn score_indices(
    gold: &[usize],
    pred: &[usize],
    over: MacroOver,
) -> Result<ScoreReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = Label::COUNT;
    let mut confusion = [[0usize; Label::COUNT]; Label::COUNT];
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= n {
            return Err(EvalError::UnknownLabel(g));
        }
        if p >= n {
            return Err(EvalError::UnknownLabel(p));
        }
        confusion[g][p] += 1;
    }

    let mut per_class = BTreeMap::new();
    let mut f1_sum = 0.0;
    let mut averaged = 0usize;
    for c in 0..n {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..n).map(|g| confusion[g][c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if over == MacroOver::All || support > 0 {
            f1_sum += f1;
            averaged += 1;
        }
        per_class.insert(
            Label::from_index(c).expect("class index"),
            ClassScore {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    let trace: usize = (0..n).map(|c| confusion[c][c]).sum();
    Ok(ScoreReport {
        per_class,
        macro_f1: f1_sum / averaged as f64,
        micro_accuracy: ratio(trace, gold.len()),
        confusion,
        total: gold.len(),
        macro_over: over,
    })
}

pub fn score(gold: &[Label], pred: &[Label], over: MacroOver) -> Result<ScoreReport, EvalError> {
    let g: Vec<usize> = gold.iter().map(|l| l.index()).collect();
    let p: Vec<usize> = pred.iter().map(|l| l.index()).collect();
    score_indices(&g, &p, over)
}

/// Gold labels of `instances`.
pub fn gold_labels(instances: &[RelationInstance]) -> Result<Vec<Label>, EvalError> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| inst.label.ok_or(EvalError::Unlabeled(i)))
        .collect()
}

/// Predicts every instance and scores against its gold label.
pub fn evaluate<F: Scalar>(
    instances: &[RelationInstance],
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    over: MacroOver,
) -> Result<(ScoreReport, Vec<Label>), EvalError> {
    let gold = gold_labels(instances)?;
    let pred = predict_all(instances, params, cfg)?;
    Ok((score(&gold, &pred, over)?, pred))
}

impl ScoreReport {
    /// Plain-text table: one row per class, then the averages.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>9} {:>9} {:>9} {:>8}",
            "class", "precision", "recall", "f1", "support"
        );
        for (label, s) in &self.per_class {
            let _ = writeln!(
                out,
                "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                label.as_str(),
                s.precision,
                s.recall,
                s.f1,
                s.support
            );
        }
        let _ = writeln!(
            out,
            "macro-F1 ({:?}): {:.4}",
            self.macro_over, self.macro_f1
        );
        let _ = writeln!(
            out,
            "accuracy: {:.4} ({} instances)",
            self.micro_accuracy, self.total
        );
        out
    }
}

/// One prediction line per instance, in the relations file format.
pub fn format_predictions(instances: &[RelationInstance], labels: &[Label]) -> String {
    let mut out = String::new();
    for (inst, &label) in instances.iter().zip(labels) {
        let rec = RelationRecord::new(
            label,
            &inst.arg1_id,
            &inst.arg2_id,
            inst.direction == Direction::Reverse,
        );
        let _ = writeln!(out, "{rec}");
    }
    out
}

pub fn write_predictions(
    path: &Path,
    instances: &[RelationInstance],
    labels: &[Label],
) -> Result<(), EvalError> {
    let mut f = std::fs::File::create(path).map_err(|e| EvalError::io(path, e))?;
    f.write_all(format_predictions(instances, labels).as_bytes())
        .map_err(|e| EvalError::io(path, e))
}

/// Predicts `instances` and writes the prediction file.
pub fn emit_predictions<F: Scalar>(
    instances: &[RelationInstance],
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    path: &Path,
) -> Result<Vec<Label>, EvalError> {
    let labels = predict_all(instances, params, cfg)?;
    write_predictions(path, instances, &labels)?;
    Ok(labels)
}

/// A finished run for the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: SourceTag,
    pub augmented: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_filters: usize,
    pub macro_f1: f64,
}

/// Reference macro-F1 (in percent) for a task and data condition.
pub fn reference_macro_f1(task: SourceTag, augmented: bool) -> Option<f64> {
    match (task, augmented) {
        (SourceTag::Task11, false) => Some(35.3),
        (SourceTag::Task11, true) => Some(48.1),
        (SourceTag::Task12, false) => Some(64.4),
        (SourceTag::Task12, true) => Some(74.7),
        (SourceTag::Merged, _) => None,
    }
}

fn task_number(tag: SourceTag) -> &'static str {
    match tag {
        SourceTag::Task11 => "1.1",
        SourceTag::Task12 => "1.2",
        SourceTag::Merged => "merged",
    }
}

/// Renders runs as task / data / epochs / batch / filters / macro-F1 rows,
/// with the reference score alongside when there is one.
pub fn report_table(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:<10} {:>6} {:>6} {:>8} {:>9} {:>10}",
        "task", "data", "epoch", "batch", "filters", "macro-F1", "reference"
    );
    for r in rows {
        let data = if r.augmented {
            "1.1 + 1.2".to_owned()
        } else {
            task_number(r.task).to_owned()
        };
        let reference = reference_macro_f1(r.task, r.augmented)
            .map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"));
        let _ = writeln!(
            out,
            "{:<6} {:<10} {:>6} {:>6} {:>8} {:>9.1} {:>10}",
            task_number(r.task),
            data,
            r.epochs,
            r.batch_size,
            r.n_filters,
            100.0 * r.macro_f1,
            reference
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_relations;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Counting from scratch, class by class.
    fn naive_macro(gold: &[usize], pred: &[usize]) -> f64 {
        let mut total = 0.0;
        for c in 0..6 {
            let tp = gold
                .iter()
                .zip(pred)
                .filter(|&(&g, &p)| g == c && p == c)
                .count() as f64;
            let fp = gold
                .iter()
                .zip(pred)
                .filter(|&(&g, &p)| g != c && p == c)
                .count() as f64;
            let fn_ = gold
                .iter()
                .zip(pred)
                .filter(|&(&g, &p)| g == c && p != c)
                .count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            total += if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                0.0
            };
        }
        total / 6.0
    }

    #[test]
    fn hand_example() {
        use Label::*;
        let r = score(
            &[Usage, Usage, Result],
            &[Usage, Result, Result],
            MacroOver::Present,
        )
        .unwrap();
        let a = r.per_class[&Usage];
        assert_eq!((a.precision, a.recall), (1.0, 0.5));
        assert!((a.f1 - 2.0 / 3.0).abs() < 1e-15);
        let b = r.per_class[&Result];
        assert_eq!((b.precision, b.recall), (0.5, 1.0));
        assert_eq!(r.macro_f1, (a.f1 + b.f1) / 2.0);
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-15);

        let all = score(
            &[Usage, Usage, Result],
            &[Usage, Result, Result],
            MacroOver::All,
        )
        .unwrap();
        assert!((all.macro_f1 - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_missing_classes() {
        let gold: Vec<Label> = Label::ALL.to_vec();
        assert_eq!(score(&gold, &gold, MacroOver::All).unwrap().macro_f1, 1.0);
        let pred = vec![Label::Usage; 6];
        let r = score(&gold, &pred, MacroOver::All).unwrap();
        assert_eq!(r.per_class[&Label::Topic].f1, 0.0);
        assert!(r.macro_f1 < 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            score_indices(&[0, 1], &[0], MacroOver::All),
            Err(EvalError::LengthMismatch { gold: 2, pred: 1 })
        ));
        assert!(matches!(
            score_indices(&[6], &[0], MacroOver::All),
            Err(EvalError::UnknownLabel(6))
        ));
        assert!(matches!(
            score_indices(&[], &[], MacroOver::All),
            Err(EvalError::Empty)
        ));
    }

    #[test]
    fn matches_naive_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.random_range(1..60);
            let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
            let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
            let r = score_indices(&gold, &pred, MacroOver::All).unwrap();
            assert!((r.macro_f1 - naive_macro(&gold, &pred)).abs() < 1e-12);
            let mean: f64 = r.per_class.values().map(|c| c.f1).sum::<f64>() / 6.0;
            assert!((r.macro_f1 - mean).abs() < 1e-12);
            let trace: usize = (0..6).map(|c| r.confusion[c][c]).sum();
            assert_eq!(r.micro_accuracy, trace as f64 / n as f64);
            assert_eq!(r.confusion.iter().flatten().sum::<usize>(), n);
            for c in r.per_class.values() {
                for v in [c.precision, c.recall, c.f1] {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pairs: Vec<(usize, usize)> = (0..40)
            .map(|_| (rng.random_range(0..6), rng.random_range(0..6)))
            .collect();
        let split =
            |p: &[(usize, usize)]| -> (Vec<usize>, Vec<usize>) { p.iter().copied().unzip() };
        let (g, p) = split(&pairs);
        let before = score_indices(&g, &p, MacroOver::All).unwrap();
        pairs.shuffle(&mut rng);
        let (g, p) = split(&pairs);
        assert_eq!(before, score_indices(&g, &p, MacroOver::All).unwrap());
    }

    #[test]
    fn random_guessing_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = 6;
        let n = 60_000;
        let gold: Vec<usize> = (0..n).map(|i| i % k).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let acc = score_indices(&gold, &pred, MacroOver::All)
            .unwrap()
            .micro_accuracy;
        let p = 1.0 / k as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((acc - p).abs() < 3.0 * sigma, "{acc}");
    }

    #[test]
    fn predictions_round_trip_through_the_relation_parser() {
        let inst = |a: &str, b: &str, dir| RelationInstance {
            token_ids: vec![2, 3],
            p1: 0,
            p2: 1,
            rel_pos1: vec![0, 1],
            rel_pos2: vec![-1, 0],
            direction: dir,
            label: Some(Label::Usage),
            real_length: 2,
            arg1_id: a.into(),
            arg2_id: b.into(),
        };
        let instances = vec![
            inst("X.1", "X.2", Direction::Forward),
            inst("X.3", "X.4", Direction::Reverse),
        ];
        let text = format_predictions(&instances, &[Label::Topic, Label::PartWhole]);
        assert_eq!(text, "TOPIC(X.1,X.2)\nPART_WHOLE(X.3,X.4,REVERSE)\n");
        let parsed = parse_relations(&text).unwrap();
        assert_eq!(parsed.len(), instances.len());
        assert!(parsed[1].reverse);

        let labels: Vec<Label> = parsed.iter().map(|r| r.label).collect();
        let self_score = score(&labels, &labels, MacroOver::All).unwrap();
        for l in &labels {
            assert_eq!(self_score.per_class[l].f1, 1.0);
        }
    }

    #[test]
    fn results_table_carries_the_reference_scores() {
        assert_eq!(reference_macro_f1(SourceTag::Task11, false), Some(35.3));
        assert_eq!(reference_macro_f1(SourceTag::Task11, true), Some(48.1));
        assert_eq!(reference_macro_f1(SourceTag::Task12, false), Some(64.4));
        assert_eq!(reference_macro_f1(SourceTag::Task12, true), Some(74.7));
        let table = report_table(&[ResultRow {
            task: SourceTag::Task12,
            augmented: true,
            epochs: 100,
            batch_size: 64,
            n_filters: 128,
            macro_f1: 0.5,
        }]);
        let row = table.lines().nth(1).unwrap();
        assert!(
            row.contains("1.1 + 1.2") && row.contains("50.0") && row.contains("74.7"),
            "{row}"
        );
    }
}
