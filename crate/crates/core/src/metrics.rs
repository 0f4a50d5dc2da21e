//! Two-group, multi-class confusion statistics and fairness metrics.
//!
//! Rates are one-vs-rest per class `k` and group `c`:
//! `TPR = TP/(TP+FN)`, `TNR = TN/(TN+FP)`, `FPR = FP/(TN+FP)`.
//!
//! * `eopp0 = Σ_k |TNR_k^1 - TNR_k^0|`
//! * `eopp1 = Σ_k |TPR_k^1 - TPR_k^0|`
//! * `eodd  = Σ_k |TPR_k^1 - TPR_k^0 + FPR_k^1 - FPR_k^0|` (signed variant, the
//!   default) or `Σ_k |ΔTPR_k| + |ΔFPR_k|` (`absolute_sum`).
//!
//! A class whose rate has a zero denominator in either group is skipped for
//! that metric and counted in the report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::GroupedDataset;
use crate::error::{check_len, Error, Result};
use crate::nn::Mlp;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `counts[c][k]` holds the one-vs-rest tallies of class `k` within group `c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTensor {
    pub num_classes: usize,
    pub counts: [Vec<Counts>; 2],
    pub group_sizes: [u64; 2],
}

impl ConfusionTensor {
    pub fn get(&self, class: usize, group: usize) -> Counts {
        self.counts[group][class]
    }

    pub fn tpr(&self, class: usize, group: usize) -> Option<f64> {
        let c = self.get(class, group);
        ratio(c.tp, c.tp + c.fn_)
    }

    pub fn tnr(&self, class: usize, group: usize) -> Option<f64> {
        let c = self.get(class, group);
        ratio(c.tn, c.tn + c.fp)
    }

    pub fn fpr(&self, class: usize, group: usize) -> Option<f64> {
        let c = self.get(class, group);
        ratio(c.fp, c.tn + c.fp)
    }

    /// The same tallies with groups 0 and 1 exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            num_classes: self.num_classes,
            counts: [self.counts[1].clone(), self.counts[0].clone()],
            group_sizes: [self.group_sizes[1], self.group_sizes[0]],
        }
    }
}

pub fn confusion(
    preds: &[usize],
    labels: &[usize],
    groups: &[u8],
    num_classes: usize,
) -> Result<ConfusionTensor> {
    check_len("predictions", labels.len(), preds.len())?;
    check_len("groups", labels.len(), groups.len())?;
    if num_classes == 0 {
        return Err(Error::config("confusion needs at least one class"));
    }
    let mut hits = [vec![0u64; num_classes], vec![0u64; num_classes]];
    let mut label_count = [vec![0u64; num_classes], vec![0u64; num_classes]];
    let mut pred_count = [vec![0u64; num_classes], vec![0u64; num_classes]];
    let mut group_sizes = [0u64; 2];
    for ((&p, &y), &g) in preds.iter().zip(labels).zip(groups) {
        if p >= num_classes || y >= num_classes {
            return Err(Error::data(format!(
                "class index out of range (pred {p}, label {y}, K = {num_classes})"
            )));
        }
        if g > 1 {
            return Err(Error::data(format!("group {g} outside {{0,1}}")));
        }
        let g = g as usize;
        group_sizes[g] += 1;
        label_count[g][y] += 1;
        pred_count[g][p] += 1;
        if p == y {
            hits[g][y] += 1;
        }
    }
    let counts = [0, 1].map(|g| {
        (0..num_classes)
            .map(|k| {
                let tp = hits[g][k];
                let fn_ = label_count[g][k] - tp;
                let fp = pred_count[g][k] - tp;
                Counts {
                    tp,
                    fn_,
                    fp,
                    tn: group_sizes[g] - tp - fn_ - fp,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(ConfusionTensor {
        num_classes,
        counts,
        group_sizes,
    })
}

/// Summed per-class gap plus the number of classes that had to be skipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateGap {
    pub value: f64,
    pub skipped: usize,
}

fn summed_gap(ct: &ConfusionTensor, per_class: impl Fn(usize) -> Option<f64>) -> RateGap {
    let mut value = 0.0;
    let mut skipped = 0;
    for k in 0..ct.num_classes {
        match per_class(k) {
            Some(v) => value += v,
            None => skipped += 1,
        }
    }
    RateGap { value, skipped }
}

pub fn eopp0(ct: &ConfusionTensor) -> RateGap {
    summed_gap(ct, |k| Some((ct.tnr(k, 1)? - ct.tnr(k, 0)?).abs()))
}

pub fn eopp1(ct: &ConfusionTensor) -> RateGap {
    summed_gap(ct, |k| Some((ct.tpr(k, 1)? - ct.tpr(k, 0)?).abs()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EoddVariant {
    /// `|ΔTPR + ΔFPR|` per class; differences of opposite sign cancel.
    #[default]
    Signed,
    /// `|ΔTPR| + |ΔFPR|` per class.
    AbsoluteSum,
}

pub fn eodd(ct: &ConfusionTensor, variant: EoddVariant) -> RateGap {
    summed_gap(ct, |k| {
        let dtpr = ct.tpr(k, 1)? - ct.tpr(k, 0)?;
        let dfpr = ct.fpr(k, 1)? - ct.fpr(k, 0)?;
        Some(match variant {
            EoddVariant::Signed => (dtpr + dfpr).abs(),
            EoddVariant::AbsoluteSum => dtpr.abs() + dfpr.abs(),
        })
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Classes present among this group's labels (the macro-average support).
    pub classes_used: usize,
}

/// Macro precision/recall/F1 over the classes that occur in `group`'s labels.
/// Per class, an undefined precision or F1 (zero denominator) counts as 0.
pub fn group_accuracy(ct: &ConfusionTensor, group: usize) -> GroupAccuracy {
    let mut acc = GroupAccuracy::default();
    for k in 0..ct.num_classes {
        let c = ct.get(k, group);
        if c.tp + c.fn_ == 0 {
            continue;
        }
        let precision = ratio(c.tp, c.tp + c.fp).unwrap_or(0.0);
        let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        acc.precision += precision;
        acc.recall += recall;
        acc.f1 += f1;
        acc.classes_used += 1;
    }
    if acc.classes_used > 0 {
        let n = acc.classes_used as f64;
        acc.precision /= n;
        acc.recall /= n;
        acc.f1 /= n;
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBlock {
    pub groups: [GroupAccuracy; 2],
    /// Mean of the two groups: (precision, recall, f1).
    pub avg: [f64; 3],
    /// Absolute difference between the two groups: (precision, recall, f1).
    pub diff: [f64; 3],
}

pub fn accuracy_block(ct: &ConfusionTensor) -> AccuracyBlock {
    let g = [group_accuracy(ct, 0), group_accuracy(ct, 1)];
    let pick = |a: &GroupAccuracy| [a.precision, a.recall, a.f1];
    let (a, b) = (pick(&g[0]), pick(&g[1]));
    AccuracyBlock {
        groups: g,
        avg: [0, 1, 2].map(|i| (a[i] + b[i]) / 2.0),
        diff: [0, 1, 2].map(|i| (a[i] - b[i]).abs()),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub eodd_variant: EoddVariant,
}

/// Flat summary of one evaluation. Serialised as a flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub num_classes: usize,
    pub n_g0: u64,
    pub n_g1: u64,
    pub eopp0: f64,
    pub eopp1: f64,
    pub eodd: f64,
    pub eodd_variant: EoddVariant,
    pub skipped_eopp0: usize,
    pub skipped_eopp1: usize,
    pub skipped_eodd: usize,
    pub precision_g0: f64,
    pub recall_g0: f64,
    pub f1_g0: f64,
    pub precision_g1: f64,
    pub recall_g1: f64,
    pub f1_g1: f64,
    pub precision_avg: f64,
    pub recall_avg: f64,
    pub f1_avg: f64,
    pub precision_diff: f64,
    pub recall_diff: f64,
    pub f1_diff: f64,
}

impl FairnessReport {
    pub fn from_confusion(ct: &ConfusionTensor, options: &MetricOptions) -> Self {
        let e0 = eopp0(ct);
        let e1 = eopp1(ct);
        let eo = eodd(ct, options.eodd_variant);
        let acc = accuracy_block(ct);
        let [g0, g1] = acc.groups;
        Self {
            num_classes: ct.num_classes,
            n_g0: ct.group_sizes[0],
            n_g1: ct.group_sizes[1],
            eopp0: e0.value,
            eopp1: e1.value,
            eodd: eo.value,
            eodd_variant: options.eodd_variant,
            skipped_eopp0: e0.skipped,
            skipped_eopp1: e1.skipped,
            skipped_eodd: eo.skipped,
            precision_g0: g0.precision,
            recall_g0: g0.recall,
            f1_g0: g0.f1,
            precision_g1: g1.precision,
            recall_g1: g1.recall,
            f1_g1: g1.f1,
            precision_avg: acc.avg[0],
            recall_avg: acc.avg[1],
            f1_avg: acc.avg[2],
            precision_diff: acc.diff[0],
            recall_diff: acc.diff[1],
            f1_diff: acc.diff[2],
        }
    }

    pub fn from_predictions(
        preds: &[usize],
        labels: &[usize],
        groups: &[u8],
        num_classes: usize,
        options: &MetricOptions,
    ) -> Result<Self> {
        Ok(Self::from_confusion(
            &confusion(preds, labels, groups, num_classes)?,
            options,
        ))
    }

    /// Table block: per-group P/R/F1, Avg., Diff., and the fairness metrics
    /// with Eopp0 shown ×10⁻³.
    pub fn render(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}");
        let _ = writeln!(s, "{:<10}{:>10}{:>10}{:>10}", "Group", "Precision", "Recall", "F1-score");
        let rows = [
            ("G0", self.precision_g0, self.recall_g0, self.f1_g0),
            ("G1", self.precision_g1, self.recall_g1, self.f1_g1),
            ("Avg.", self.precision_avg, self.recall_avg, self.f1_avg),
            ("Diff.", self.precision_diff, self.recall_diff, self.f1_diff),
        ];
        for (name, p, r, f) in rows {
            let _ = writeln!(s, "{name:<10}{p:>10.3}{r:>10.3}{f:>10.3}");
        }
        let _ = writeln!(s, "Eopp0 (x1e-3): {}", format_milli(self.eopp0));
        let _ = writeln!(s, "Eopp1:         {:.3}", self.eopp1);
        let _ = writeln!(s, "Eodd:          {:.3}", self.eodd);
        if self.skipped_eopp0 + self.skipped_eopp1 + self.skipped_eodd > 0 {
            let _ = writeln!(
                s,
                "skipped classes: eopp0 {}, eopp1 {}, eodd {}",
                self.skipped_eopp0, self.skipped_eopp1, self.skipped_eodd
            );
        }
        s
    }
}

/// Renders `value` in units of 10⁻³ with three decimals (0.000846 -> "0.846").
pub fn format_milli(value: f64) -> String {
    format!("{:.3}", value * 1e3)
}

pub fn evaluate(model: &Mlp, dataset: &GroupedDataset, options: &MetricOptions) -> Result<FairnessReport> {
    if dataset.num_classes() != model.num_classes() {
        return Err(Error::config(format!(
            "dataset has {} classes, model predicts {}",
            dataset.num_classes(),
            model.num_classes()
        )));
    }
    let preds = model.predict(&dataset.as_batch())?;
    FairnessReport::from_predictions(&preds, dataset.labels(), dataset.groups(), dataset.num_classes(), options)
}
