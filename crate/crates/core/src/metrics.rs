//! Per-class Youden thresholds, confusion counts, accuracy/precision/recall/F1,
//! average precision, ROC points and leaf-level accuracy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{HkgError, Result};
use crate::hierarchy::{LabelTree, NodeId};

/// Probabilities and multi-hot truth for one evaluated example.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub probs: Vec<f64>,
    pub truth: Vec<f64>,
    pub leaf_truth: NodeId,
}

/// Candidate thresholds: `-inf`, midpoints between adjacent distinct scores,
/// `+inf`, ascending.
fn candidates(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(f64::INFINITY);
    out
}

fn class_sizes(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

/// Threshold maximizing `TPR - FPR`; a score is positive when `>=` the
/// threshold. Ties go to the lowest threshold.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(HkgError::shape(
            "youden_threshold",
            &[scores.len()],
            &[labels.len()],
        ));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(HkgError::Numeric(format!("score {bad}")));
    }
    let (pos, neg) = class_sizes(labels);
    if pos == 0 || neg == 0 {
        return Err(HkgError::DegenerateInput(format!(
            "youden threshold needs both classes (positives {pos}, negatives {neg})"
        )));
    }
    // Walk scores in descending order: lowering the threshold past a group of
    // equal scores turns the whole group positive at once.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let cands = candidates(scores);
    // J at each candidate, from +inf (nothing positive) downwards.
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut j_at = Vec::with_capacity(cands.len());
    j_at.push((f64::INFINITY, 0.0));
    let mut k = cands.len() - 1;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        k -= 1;
        j_at.push((cands[k], tp as f64 / pos as f64 - fp as f64 / neg as f64));
    }
    // Ascending thresholds with strict improvement keeps the lowest tie.
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(t, j) in j_at.iter().rev() {
        if j > best.1 {
            best = (t, j);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Per-class counts with class `i` predicted positive iff `probs[i] >= thresholds[i]`.
pub fn confusion(records: &[EvalRecord], thresholds: &[f64]) -> Result<Vec<Confusion>> {
    let c = thresholds.len();
    let mut out = vec![Confusion::default(); c];
    for r in records {
        if r.probs.len() != c || r.truth.len() != c {
            return Err(HkgError::shape(
                "confusion",
                &[r.probs.len(), r.truth.len()],
                &[c],
            ));
        }
        for i in 0..c {
            let predicted = r.probs[i] >= thresholds[i];
            let actual = r.truth[i] > 0.5;
            let cell = &mut out[i];
            match (predicted, actual) {
                (true, true) => cell.tp += 1,
                (true, false) => cell.fp += 1,
                (false, false) => cell.tn += 1,
                (false, true) => cell.fn_ += 1,
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf1 {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64, what: &str) -> f64 {
    if den == 0.0 {
        log::warn!("{what}: zero denominator, reporting 0");
        0.0
    } else {
        num / den
    }
}

/// Accuracy, precision, recall and F1; zero denominators give 0.
pub fn prf1(c: &Confusion) -> Prf1 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let accuracy = ratio(tp + tn, tp + fp + tn + fn_, "accuracy");
    let precision = ratio(tp, tp + fp, "precision");
    let recall = ratio(tp, tp + fn_, "recall");
    let f1 = ratio(2.0 * precision * recall, precision + recall, "f1");
    Prf1 {
        accuracy,
        precision,
        recall,
        f1,
    }
}

/// `sum_n (R_n - R_{n-1}) * P_n` over descending distinct score thresholds.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(HkgError::shape(
            "average_precision",
            &[scores.len()],
            &[labels.len()],
        ));
    }
    let (pos, _) = class_sizes(labels);
    if pos == 0 {
        return Err(HkgError::DegenerateInput(
            "average precision needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// ROC operating points `(threshold, fpr, tpr)` at every candidate threshold,
/// from `+inf` down to `-inf`.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(HkgError::shape(
            "roc_points",
            &[scores.len()],
            &[labels.len()],
        ));
    }
    let (pos, neg) = class_sizes(labels);
    let mut out = Vec::new();
    for &t in candidates(scores).iter().rev() {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                if l {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        out.push((
            t,
            ratio(fp as f64, neg as f64, "fpr"),
            ratio(tp as f64, pos as f64, "tpr"),
        ));
    }
    Ok(out)
}

/// Highest-probability leaf; ties resolve to the first leaf in class order.
pub fn leaf_prediction(probs: &[f64], tree: &LabelTree) -> Result<NodeId> {
    if probs.len() != tree.num_classes() {
        return Err(HkgError::shape(
            "leaf_prediction",
            &[probs.len()],
            &[tree.num_classes()],
        ));
    }
    let mut best: Option<(NodeId, f64)> = None;
    for (i, &id) in tree.classes().iter().enumerate() {
        if !tree.is_leaf(id) {
            continue;
        }
        if best.is_none_or(|(_, p)| probs[i] > p) {
            best = Some((id, probs[i]));
        }
    }
    best.map(|(id, _)| id)
        .ok_or_else(|| HkgError::Structure("tree has no leaves".into()))
}

/// Youden threshold per class from validation records. A class that is
/// all-positive or all-negative in validation falls back to 0.5.
pub fn fit_thresholds(tree: &LabelTree, records: &[EvalRecord]) -> Result<Vec<f64>> {
    (0..tree.num_classes())
        .map(|i| {
            let scores: Vec<f64> = records.iter().map(|r| r.probs[i]).collect();
            let labels: Vec<bool> = records.iter().map(|r| r.truth[i] > 0.5).collect();
            match youden_threshold(&scores, &labels) {
                Ok(t) => Ok(t),
                Err(HkgError::DegenerateInput(m)) => {
                    log::warn!("class {}: {m}; using threshold 0.5", tree.class_names()[i]);
                    Ok(0.5)
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

mod threshold_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    /// Infinite thresholds are written as the strings "inf" / "-inf".
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad threshold `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    #[serde(flatten)]
    pub counts: Confusion,
    #[serde(flatten)]
    pub scores: Prf1,
    /// `None` when the class has no positives in the evaluated split.
    pub average_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafAccuracy {
    pub name: String,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Prf1,
    pub leaf_accuracy: f64,
    pub per_leaf: Vec<LeafAccuracy>,
    pub leaf_names: Vec<String>,
    /// `leaf_confusion[truth][predicted]`, both in leaf order.
    pub leaf_confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn build(tree: &LabelTree, records: &[EvalRecord], thresholds: &[f64]) -> Result<Self> {
        if records.is_empty() {
            return Err(HkgError::EmptyInput("no records to evaluate".into()));
        }
        if thresholds.len() != tree.num_classes() {
            return Err(HkgError::shape(
                "thresholds",
                &[thresholds.len()],
                &[tree.num_classes()],
            ));
        }
        let counts = confusion(records, thresholds)?;
        let names = tree.class_names();
        let per_class: Vec<ClassMetrics> = counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let scores: Vec<f64> = records.iter().map(|r| r.probs[i]).collect();
                let labels: Vec<bool> = records.iter().map(|r| r.truth[i] > 0.5).collect();
                ClassMetrics {
                    name: names[i].clone(),
                    threshold: thresholds[i],
                    counts: *c,
                    scores: prf1(c),
                    average_precision: average_precision(&scores, &labels).ok(),
                }
            })
            .collect();
        let n = per_class.len() as f64;
        let mean = |f: fn(&Prf1) -> f64| per_class.iter().map(|c| f(&c.scores)).sum::<f64>() / n;
        let macro_avg = Prf1 {
            accuracy: mean(|p| p.accuracy),
            precision: mean(|p| p.precision),
            recall: mean(|p| p.recall),
            f1: mean(|p| p.f1),
        };

        let leaves = tree.leaves();
        let leaf_pos = |id: NodeId| leaves.iter().position(|&l| l == id);
        let mut matrix = vec![vec![0u64; leaves.len()]; leaves.len()];
        for r in records {
            let truth = leaf_pos(r.leaf_truth)
                .ok_or_else(|| HkgError::Label(format!("{:?} is not a leaf", r.leaf_truth)))?;
            let pred = leaf_pos(leaf_prediction(&r.probs, tree)?).expect("prediction is a leaf");
            matrix[truth][pred] += 1;
        }
        let per_leaf: Vec<LeafAccuracy> = leaves
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                let total: u64 = matrix[i].iter().sum();
                LeafAccuracy {
                    name: tree.name(id).to_owned(),
                    correct: matrix[i][i],
                    total,
                    accuracy: ratio(matrix[i][i] as f64, total as f64, "per-leaf accuracy"),
                }
            })
            .collect();
        let correct: u64 = (0..leaves.len()).map(|i| matrix[i][i]).sum();
        Ok(MetricsReport {
            samples: records.len(),
            per_class,
            macro_avg,
            leaf_accuracy: correct as f64 / records.len() as f64,
            per_leaf,
            leaf_names: leaves.iter().map(|&id| tree.name(id).to_owned()).collect(),
            leaf_confusion: matrix,
        })
    }

    /// Aligned plain-text summary.
    pub fn to_text_table(&self) -> String {
        let w = self
            .per_class
            .iter()
            .map(|c| c.name.len())
            .chain(["macro".len()])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<w$}  {:>9}  {:>5} {:>5} {:>5} {:>5}  {:>7} {:>7} {:>7} {:>7} {:>7}",
            "class", "threshold", "TP", "FP", "TN", "FN", "Acc", "Pre", "Rec", "F1", "AP"
        );
        for c in &self.per_class {
            let ap = c
                .average_precision
                .map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "{:<w$}  {:>9.4}  {:>5} {:>5} {:>5} {:>5}  {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7}",
                c.name,
                c.threshold,
                c.counts.tp,
                c.counts.fp,
                c.counts.tn,
                c.counts.fn_,
                c.scores.accuracy,
                c.scores.precision,
                c.scores.recall,
                c.scores.f1,
                ap
            );
        }
        let m = &self.macro_avg;
        let _ = writeln!(
            out,
            "{:<w$}  {:>9}  {:>5} {:>5} {:>5} {:>5}  {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
            "macro", "", "", "", "", "", m.accuracy, m.precision, m.recall, m.f1
        );
        let _ = writeln!(out);
        let lw = self
            .per_leaf
            .iter()
            .map(|l| l.name.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let _ = writeln!(
            out,
            "{:<lw$}  {:>7}  {:>7}  {:>8}",
            "leaf", "correct", "total", "accuracy"
        );
        for l in &self.per_leaf {
            let _ = writeln!(
                out,
                "{:<lw$}  {:>7}  {:>7}  {:>8.4}",
                l.name, l.correct, l.total, l.accuracy
            );
        }
        let _ = writeln!(
            out,
            "leaf accuracy: {:.4} over {} samples",
            self.leaf_accuracy, self.samples
        );
        out
    }

    /// Leaf confusion matrix, rows = truth, columns = prediction.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth\\predicted");
        for n in &self.leaf_names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for (name, row) in self.leaf_names.iter().zip(&self.leaf_confusion) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// `class,threshold,fpr,tpr` rows for every class.
pub fn roc_csv(tree: &LabelTree, records: &[EvalRecord]) -> Result<String> {
    let mut out = String::from("class,threshold,fpr,tpr\n");
    for (i, name) in tree.class_names().iter().enumerate() {
        let scores: Vec<f64> = records.iter().map(|r| r.probs[i]).collect();
        let labels: Vec<bool> = records.iter().map(|r| r.truth[i] > 0.5).collect();
        for (t, fpr, tpr) in roc_points(&scores, &labels)? {
            let _ = writeln!(out, "{name},{t},{fpr},{tpr}");
        }
    }
    Ok(out)
}
