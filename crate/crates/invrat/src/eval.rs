//! Metrics (toxic-class F1, per-attribute F1/FPR), checkpoint selection, and
//! qualitative rationale dumps.
//!
//! FPR per attribute is the bias measure: the fraction of gold-non-toxic
//! documents carrying the attribute that the model wrongly flags toxic. A
//! subset without gold-negatives yields a distinct undefined value, never a
//! silent zero.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{Dialect, Document, Label, Vocabulary};
use crate::error::{Error, Result};
use crate::rationale::{apply_hard_mask, inference_mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn count(preds: &[Label], golds: &[Label]) -> Confusion {
        let mut c = Confusion {
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0,
        };
        for (p, g) in preds.iter().zip(golds) {
            match (p, g) {
                (Label::Toxic, Label::Toxic) => c.tp += 1,
                (Label::Toxic, Label::NonToxic) => c.fp += 1,
                (Label::NonToxic, Label::NonToxic) => c.tn += 1,
                (Label::NonToxic, Label::Toxic) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn f1(&self) -> f64 {
        let precision = if self.tp + self.fp > 0 {
            self.tp as f64 / (self.tp + self.fp) as f64
        } else {
            0.0
        };
        let recall = if self.tp + self.fn_ > 0 {
            self.tp as f64 / (self.tp + self.fn_) as f64
        } else {
            0.0
        };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }
}

/// F1 of the toxic class; 0 when precision + recall is 0.
pub fn f1(preds: &[Label], golds: &[Label]) -> Result<f64> {
    if preds.len() != golds.len() {
        return Err(Error::PredictionLengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    assert!(!preds.is_empty(), "f1: empty input");
    Ok(Confusion::count(preds, golds).f1())
}

/// False-positive rate as a first-class value: undefined when the evaluated
/// subset has no gold-negatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FprValue {
    Defined(f64),
    Undefined,
}

impl FprValue {
    pub fn defined(&self) -> Option<f64> {
        match self {
            FprValue::Defined(v) => Some(*v),
            FprValue::Undefined => None,
        }
    }
}

/// Attributes reported in the evaluation grid. `Aae` means dialect == AAE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportAttribute {
    NOi,
    Oi,
    OnI,
    Aae,
}

pub const REPORT_ATTRIBUTES: [ReportAttribute; 4] = [
    ReportAttribute::NOi,
    ReportAttribute::Oi,
    ReportAttribute::OnI,
    ReportAttribute::Aae,
];

impl ReportAttribute {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportAttribute::NOi => "noi",
            ReportAttribute::Oi => "oi",
            ReportAttribute::OnI => "oni",
            ReportAttribute::Aae => "aae",
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            ReportAttribute::NOi => "nOI",
            ReportAttribute::Oi => "OI",
            ReportAttribute::OnI => "OnI",
            ReportAttribute::Aae => "AAE",
        }
    }

    pub fn applies_to(self, doc: &Document) -> bool {
        match self {
            ReportAttribute::NOi => doc.attributes.noi,
            ReportAttribute::Oi => doc.attributes.oi,
            ReportAttribute::OnI => doc.attributes.oni,
            ReportAttribute::Aae => doc.dialect == Some(Dialect::Aae),
        }
    }
}

/// FPR restricted to documents carrying `attribute`:
/// FP / (FP + TN) over the gold-non-toxic documents of the subset.
pub fn fpr_by_attribute(
    preds: &[Label],
    golds: &[Label],
    docs: &[Document],
    attribute: ReportAttribute,
) -> Result<FprValue> {
    if preds.len() != golds.len() || preds.len() != docs.len() {
        return Err(Error::PredictionLengthMismatch {
            preds: preds.len(),
            golds: golds.len().min(docs.len()),
        });
    }
    let mut fp = 0usize;
    let mut tn = 0usize;
    for i in 0..docs.len() {
        if !attribute.applies_to(&docs[i]) || golds[i] != Label::NonToxic {
            continue;
        }
        match preds[i] {
            Label::Toxic => fp += 1,
            Label::NonToxic => tn += 1,
        }
    }
    if fp + tn == 0 {
        Ok(FprValue::Undefined)
    } else {
        Ok(FprValue::Defined(fp as f64 / (fp + tn) as f64))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeBlock {
    pub attribute: ReportAttribute,
    pub f1: f64,
    pub fpr: FprValue,
    /// Number of evaluated documents carrying the attribute.
    pub support: usize,
    pub gold_negatives: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall_f1: f64,
    pub confusion: Confusion,
    pub per_attribute: Vec<AttributeBlock>,
    pub seed: u64,
    pub checkpoint_id: usize,
}

impl MetricsReport {
    pub fn attribute(&self, a: ReportAttribute) -> Option<&AttributeBlock> {
        self.per_attribute.iter().find(|b| b.attribute == a)
    }

    /// Mean of the defined per-attribute FPRs; the default checkpoint-
    /// selection target. `None` when every attribute FPR is undefined.
    pub fn target_fpr(&self) -> Option<f64> {
        let defined: Vec<f64> = self
            .per_attribute
            .iter()
            .filter_map(|b| b.fpr.defined())
            .collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }
}

pub fn metrics_report(
    preds: &[Label],
    golds: &[Label],
    docs: &[Document],
    seed: u64,
    checkpoint_id: usize,
) -> Result<MetricsReport> {
    if preds.len() != golds.len() || preds.len() != docs.len() {
        return Err(Error::PredictionLengthMismatch {
            preds: preds.len(),
            golds: golds.len().min(docs.len()),
        });
    }
    let confusion = Confusion::count(preds, golds);
    let mut per_attribute = Vec::with_capacity(REPORT_ATTRIBUTES.len());
    for attr in REPORT_ATTRIBUTES {
        let idx: Vec<usize> = (0..docs.len())
            .filter(|&i| attr.applies_to(&docs[i]))
            .collect();
        let sub_preds: Vec<Label> = idx.iter().map(|&i| preds[i]).collect();
        let sub_golds: Vec<Label> = idx.iter().map(|&i| golds[i]).collect();
        let sub_confusion = Confusion::count(&sub_preds, &sub_golds);
        per_attribute.push(AttributeBlock {
            attribute: attr,
            f1: sub_confusion.f1(),
            fpr: fpr_by_attribute(preds, golds, docs, attr)?,
            support: idx.len(),
            gold_negatives: sub_confusion.fp + sub_confusion.tn,
        });
    }
    Ok(MetricsReport {
        overall_f1: confusion.f1(),
        confusion,
        per_attribute,
        seed,
        checkpoint_id,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub checkpoint_id: usize,
    /// Set when every candidate's target FPR was undefined and the max-F1
    /// checkpoint was returned instead.
    pub used_fallback: bool,
}

/// Checkpoint-selection rule: keep the checkpoints whose dev F1 is within
/// `window_points` (absolute percentage points by default, relative when
/// `relative` is set) of the best dev F1, then pick the one with the lowest
/// target FPR. Ties prefer higher F1, then the earlier epoch.
pub fn select_checkpoint(
    reports: &[MetricsReport],
    window_points: f64,
    relative: bool,
) -> Result<Selection> {
    if reports.is_empty() {
        return Err(Error::NoReports);
    }
    let best_f1 = reports.iter().map(|r| r.overall_f1).fold(f64::MIN, f64::max);
    let threshold = if relative {
        best_f1 * (1.0 - window_points / 100.0)
    } else {
        best_f1 - window_points / 100.0
    };
    let candidates: Vec<&MetricsReport> = reports
        .iter()
        .filter(|r| r.overall_f1 >= threshold)
        .collect();

    let mut best: Option<(&MetricsReport, f64)> = None;
    for r in &candidates {
        let Some(fpr) = r.target_fpr() else { continue };
        best = match best {
            None => Some((r, fpr)),
            Some((cur, cur_fpr)) => {
                let replace = fpr < cur_fpr
                    || (fpr == cur_fpr && r.overall_f1 > cur.overall_f1)
                    || (fpr == cur_fpr
                        && r.overall_f1 == cur.overall_f1
                        && r.checkpoint_id < cur.checkpoint_id);
                if replace {
                    Some((r, fpr))
                } else {
                    Some((cur, cur_fpr))
                }
            }
        };
    }
    if let Some((r, _)) = best {
        return Ok(Selection {
            checkpoint_id: r.checkpoint_id,
            used_fallback: false,
        });
    }

    // Every candidate FPR undefined: fall back to the max-F1 checkpoint.
    let mut fallback = &reports[0];
    for r in reports.iter().skip(1) {
        if r.overall_f1 > fallback.overall_f1
            || (r.overall_f1 == fallback.overall_f1 && r.checkpoint_id < fallback.checkpoint_id)
        {
            fallback = r;
        }
    }
    Ok(Selection {
        checkpoint_id: fallback.checkpoint_id,
        used_fallback: true,
    })
}

/// Selects the max-F1 checkpoint (vanilla runs have no FPR balancing).
pub fn select_max_f1(reports: &[MetricsReport]) -> Result<Selection> {
    if reports.is_empty() {
        return Err(Error::NoReports);
    }
    let mut best = &reports[0];
    for r in reports.iter().skip(1) {
        if r.overall_f1 > best.overall_f1 {
            best = r;
        }
    }
    Ok(Selection {
        checkpoint_id: best.checkpoint_id,
        used_fallback: false,
    })
}

/// One annotated rationale record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationaleRecord {
    pub id: String,
    pub tokens: Vec<String>,
    /// Parallel to `tokens`: whether the deterministic inference mask kept
    /// the token.
    pub kept: Vec<bool>,
    /// Tokens kept by the mask wrapped in `**...**`.
    pub marked_text: String,
    pub prediction: Label,
    pub gold: Label,
}

/// Deterministic rationale dump: argmax masks (no sampling), the invariant
/// predictor's prediction on the masked view, and the gold label.
pub fn rationale_dump(
    ckpt: &Checkpoint,
    vocab: &Vocabulary,
    docs: &[Document],
    limit: usize,
) -> Result<Vec<RationaleRecord>> {
    let Some(generator) = ckpt.generator.as_ref() else {
        return Err(Error::NoGenerator {
            mode: ckpt.config.mode.as_str().to_string(),
        });
    };
    let mut out = Vec::new();
    for doc in docs.iter().take(limit) {
        let kept = match crate::game::doc_token_logits(generator, &doc.tokens)? {
            None => vec![false; doc.tokens.len()],
            Some(logits) => inference_mask(&logits, &crate::models::pad_flags(&doc.tokens)),
        };
        let hard: Vec<f64> = kept.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
        let view = apply_hard_mask(&doc.tokens, &hard)?;
        let logits = crate::game::doc_logits(&ckpt.f_i, &view)?;
        let prediction = if logits[1] > logits[0] {
            Label::Toxic
        } else {
            Label::NonToxic
        };

        let tokens: Vec<String> = doc
            .tokens
            .iter()
            .map(|&t| vocab.token(t).unwrap_or("<?>").to_string())
            .collect();
        let marked_text = tokens
            .iter()
            .zip(&kept)
            .map(|(tok, &k)| {
                if k {
                    format!("**{tok}**")
                } else {
                    tok.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ");
        out.push(RationaleRecord {
            id: doc.id.clone(),
            tokens,
            kept,
            marked_text,
            prediction,
            gold: doc.label,
        });
    }
    Ok(out)
}

/// Mean and sample standard deviation of the defined values (percent scale
/// applied by the caller).
fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn fmt_cell(values: &[Option<f64>]) -> String {
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).map(|v| v * 100.0).collect();
    if defined.is_empty() {
        return "n/a".to_string();
    }
    let (mean, sd) = mean_sd(&defined);
    match sd {
        Some(sd) => format!("{mean:.1}({sd:.1})"),
        None => format!("{mean:.1}"),
    }
}

/// Renders a text grid: one row per labelled run group, columns for overall
/// F1 and per-attribute F1/FPR, values as mean(sd) over the group's runs.
pub fn render_table(rows: &[(String, Vec<MetricsReport>)]) -> String {
    let mut header: Vec<String> = vec!["run".into(), "F1".into()];
    for attr in REPORT_ATTRIBUTES {
        header.push(format!("{} F1", attr.display()));
        header.push(format!("{} FPR", attr.display()));
    }

    let mut table: Vec<Vec<String>> = vec![header];
    for (label, reports) in rows {
        let mut row = vec![label.clone()];
        let overall: Vec<Option<f64>> = reports.iter().map(|r| Some(r.overall_f1)).collect();
        row.push(fmt_cell(&overall));
        for attr in REPORT_ATTRIBUTES {
            let f1s: Vec<Option<f64>> = reports
                .iter()
                .map(|r| r.attribute(attr).map(|b| b.f1))
                .collect();
            let fprs: Vec<Option<f64>> = reports
                .iter()
                .map(|r| r.attribute(attr).and_then(|b| b.fpr.defined()))
                .collect();
            row.push(fmt_cell(&f1s));
            row.push(fmt_cell(&fprs));
        }
        table.push(row);
    }

    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    table
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, cell)| format!("{cell:>width$}", width = widths[c]))
                .collect::<Vec<_>>()
                .join("  ")
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AttributeSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn doc_with(attrs: AttributeSet, dialect: Option<Dialect>) -> Document {
        Document {
            id: "d".into(),
            raw_text: String::new(),
            tokens: vec![3],
            label: Label::NonToxic,
            attributes: attrs,
            dialect,
            environment: None,
        }
    }

    const T: Label = Label::Toxic;
    const N: Label = Label::NonToxic;

    #[test]
    fn f1_perfect_predictions() {
        assert_eq!(f1(&[T, N, T], &[T, N, T]).unwrap(), 1.0);
    }

    #[test]
    fn f1_hand_counted_case() {
        // TP=2, FP=1, FN=1 -> P = R = 2/3 -> F1 = 2/3
        let preds = [T, T, T, N, N];
        let golds = [T, T, N, T, N];
        let v = f1(&preds, &golds).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_zero_recall_convention() {
        let v = f1(&[N, N, N], &[T, T, N]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn f1_rejects_length_mismatch() {
        assert!(matches!(
            f1(&[T], &[T, N]),
            Err(Error::PredictionLengthMismatch { .. })
        ));
    }

    #[test]
    fn fpr_counts_by_hand() {
        // 4 gold-non-toxic docs with the attribute, 3 predicted toxic -> 0.75
        let noi = AttributeSet {
            noi: true,
            oi: false,
            oni: false,
        };
        let docs: Vec<Document> = (0..4).map(|_| doc_with(noi, None)).collect();
        let preds = [T, T, T, N];
        let golds = [N, N, N, N];
        let v = fpr_by_attribute(&preds, &golds, &docs, ReportAttribute::NOi).unwrap();
        assert_eq!(v, FprValue::Defined(0.75));
    }

    #[test]
    fn fpr_zero_when_no_false_positives() {
        let oni = AttributeSet {
            noi: false,
            oi: false,
            oni: true,
        };
        let docs: Vec<Document> = (0..3).map(|_| doc_with(oni, None)).collect();
        let v = fpr_by_attribute(&[N, N, N], &[N, N, N], &docs, ReportAttribute::OnI).unwrap();
        assert_eq!(v, FprValue::Defined(0.0));
    }

    #[test]
    fn fpr_undefined_without_gold_negatives() {
        let noi = AttributeSet {
            noi: true,
            oi: false,
            oni: false,
        };
        let docs: Vec<Document> = (0..3).map(|_| doc_with(noi, None)).collect();
        let v = fpr_by_attribute(&[T, T, N], &[T, T, T], &docs, ReportAttribute::NOi).unwrap();
        assert_eq!(v, FprValue::Undefined);
    }

    #[test]
    fn fpr_aae_means_dialect() {
        let docs = vec![
            doc_with(AttributeSet::default(), Some(Dialect::Aae)),
            doc_with(AttributeSet::default(), Some(Dialect::Wae)),
        ];
        let v = fpr_by_attribute(&[T, T], &[N, N], &docs, ReportAttribute::Aae).unwrap();
        assert_eq!(v, FprValue::Defined(1.0)); // only the AAE doc counts
    }

    fn report(f1_pct: f64, fpr_pct: Option<f64>, id: usize) -> MetricsReport {
        let fpr = match fpr_pct {
            Some(v) => FprValue::Defined(v / 100.0),
            None => FprValue::Undefined,
        };
        MetricsReport {
            overall_f1: f1_pct / 100.0,
            confusion: Confusion {
                tp: 0,
                fp: 0,
                tn: 0,
                fn_: 0,
            },
            per_attribute: vec![AttributeBlock {
                attribute: ReportAttribute::NOi,
                f1: 0.0,
                fpr,
                support: 1,
                gold_negatives: 1,
            }],
            seed: 0,
            checkpoint_id: id,
        }
    }

    #[test]
    fn selection_applies_window_then_lowest_fpr() {
        let reports = vec![
            report(92.0, Some(20.0), 0),
            report(90.0, Some(10.0), 1),
            report(88.0, Some(5.0), 2),
        ];
        let s = select_checkpoint(&reports, 3.0, false).unwrap();
        assert_eq!(s.checkpoint_id, 1);
        assert!(!s.used_fallback);
    }

    #[test]
    fn selection_single_report_returns_it() {
        let reports = vec![report(75.0, Some(12.0), 4)];
        let s = select_checkpoint(&reports, 3.0, false).unwrap();
        assert_eq!(s.checkpoint_id, 4);
    }

    #[test]
    fn selection_breaks_fpr_ties_by_f1() {
        let reports = vec![report(92.0, Some(10.0), 0), report(91.0, Some(10.0), 1)];
        let s = select_checkpoint(&reports, 3.0, false).unwrap();
        assert_eq!(s.checkpoint_id, 0);
    }

    #[test]
    fn selection_falls_back_to_max_f1_when_fpr_undefined() {
        let reports = vec![report(88.0, None, 0), report(92.0, None, 1)];
        let s = select_checkpoint(&reports, 3.0, false).unwrap();
        assert_eq!(s.checkpoint_id, 1);
        assert!(s.used_fallback);
    }

    #[test]
    fn selection_is_order_invariant() {
        let mut reports = vec![
            report(92.0, Some(20.0), 0),
            report(90.0, Some(10.0), 1),
            report(91.0, Some(15.0), 2),
        ];
        let a = select_checkpoint(&reports, 3.0, false).unwrap();
        reports.reverse();
        let b = select_checkpoint(&reports, 3.0, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selection_rejects_empty_input() {
        assert!(matches!(
            select_checkpoint(&[], 3.0, false),
            Err(Error::NoReports)
        ));
    }

    #[test]
    fn metrics_agree_with_brute_force_recount() {
        // Property run over random prediction/gold/attribute sets; full
        // recount with independent counting loops.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            let mut docs = Vec::new();
            let mut preds = Vec::new();
            let mut golds = Vec::new();
            for _ in 0..n {
                let attrs = AttributeSet {
                    noi: rng.random_bool(0.4),
                    oi: rng.random_bool(0.2),
                    oni: rng.random_bool(0.3),
                };
                let dialect = if rng.random_bool(0.3) {
                    Some(Dialect::Aae)
                } else {
                    Some(Dialect::Other)
                };
                docs.push(doc_with(attrs, dialect));
                preds.push(if rng.random_bool(0.5) { T } else { N });
                golds.push(if rng.random_bool(0.5) { T } else { N });
            }
            let rep = metrics_report(&preds, &golds, &docs, 0, 0).unwrap();

            // Brute-force confusion recount, then the documented formula.
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for i in 0..n {
                if preds[i] == T && golds[i] == T {
                    tp += 1;
                }
                if preds[i] == T && golds[i] == N {
                    fp += 1;
                }
                if preds[i] == N && golds[i] == T {
                    fn_ += 1;
                }
            }
            let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
            let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
            let expect_f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            assert_eq!(rep.overall_f1, expect_f1);

            // Brute-force per-attribute FPR.
            for attr in REPORT_ATTRIBUTES {
                let (mut afp, mut atn) = (0usize, 0usize);
                for i in 0..n {
                    if attr.applies_to(&docs[i]) && golds[i] == N {
                        if preds[i] == T {
                            afp += 1;
                        } else {
                            atn += 1;
                        }
                    }
                }
                let expect = if afp + atn == 0 {
                    FprValue::Undefined
                } else {
                    FprValue::Defined(afp as f64 / (afp + atn) as f64)
                };
                assert_eq!(rep.attribute(attr).unwrap().fpr, expect);
            }
        }
    }

    #[test]
    fn pooled_fpr_equals_weighted_union() {
        // FPR over the union of disjoint subsets equals the pooled count.
        let noi = AttributeSet {
            noi: true,
            oi: false,
            oni: false,
        };
        let mut docs: Vec<Document> = Vec::new();
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            docs.push(doc_with(noi, None));
            preds.push(if rng.random_bool(0.4) { T } else { N });
            golds.push(N);
        }
        let full = fpr_by_attribute(&preds, &golds, &docs, ReportAttribute::NOi).unwrap();
        // Manual pooled recount over two halves.
        let count = |lo: usize, hi: usize| -> (usize, usize) {
            let mut fp = 0;
            let mut tn = 0;
            for i in lo..hi {
                if preds[i] == T {
                    fp += 1;
                } else {
                    tn += 1;
                }
            }
            (fp, tn)
        };
        let (fp1, tn1) = count(0, 25);
        let (fp2, tn2) = count(25, 50);
        let pooled = (fp1 + fp2) as f64 / (fp1 + fp2 + tn1 + tn2) as f64;
        assert_eq!(full, FprValue::Defined(pooled));
    }

    #[test]
    fn fpr_value_serializes_as_number_or_null() {
        assert_eq!(
            serde_json::to_string(&FprValue::Defined(0.25)).unwrap(),
            "0.25"
        );
        assert_eq!(serde_json::to_string(&FprValue::Undefined).unwrap(), "null");
        let v: FprValue = serde_json::from_str("null").unwrap();
        assert_eq!(v, FprValue::Undefined);
    }

    #[test]
    fn table_renders_mean_and_sd() {
        let rows = vec![(
            "invrat".to_string(),
            vec![report(91.0, Some(10.0), 0), report(93.0, Some(12.0), 1)],
        )];
        let table = render_table(&rows);
        assert!(table.contains("92.0(1.4)"), "table was:\n{table}");
        assert!(table.contains("nOI FPR"));
    }

    #[test]
    fn table_omits_sd_for_single_run() {
        let rows = vec![("vanilla".to_string(), vec![report(91.0, Some(10.0), 0)])];
        let table = render_table(&rows);
        assert!(table.contains("91.0"));
        assert!(!table.contains("(0.0)"));
    }

    mod rationales {
        use super::*;
        use crate::checkpoint::CHECKPOINT_VERSION;
        use crate::corpus::{tokenize, Vocabulary};
        use crate::game::{TrainConfig, TrainMode};
        use crate::models::EncoderParams;

        fn vocab() -> Vocabulary {
            Vocabulary::from_tokens(["oh", "my", "god"].iter().map(|s| s.to_string())).unwrap()
        }

        /// Generator whose head always emits a higher keep logit for "oh"
        /// and "god" and a higher drop logit for "my": the embedding for
        /// "my" is strongly negative along the dimension the keep head
        /// reads, positive for the others.
        fn checkpoint(vocab: &Vocabulary, mode: TrainMode) -> Checkpoint {
            // n = 1, h = 1. Hidden state = tanh(w_cur * e_t) with window
            // weights for neighbors zeroed; keep logit = +h, drop = -h.
            let my = vocab.id("my").unwrap() as usize;
            let mut embedding = vec![1.0; vocab.len()];
            embedding[my] = -1.0;
            let gen = EncoderParams {
                vocab: vocab.len(),
                n_embed: 1,
                hidden: 1,
                embedding,
                w_prev: vec![0.0],
                w_cur: vec![5.0],
                w_next: vec![0.0],
                b_hidden: vec![0.0],
                w_head: vec![-1.0, 1.0],
                b_head: vec![0.0, 0.0],
            };
            let f_i = EncoderParams {
                vocab: vocab.len(),
                n_embed: 1,
                hidden: 1,
                embedding: vec![0.1; vocab.len()],
                w_prev: vec![0.0],
                w_cur: vec![1.0],
                w_next: vec![0.0],
                b_hidden: vec![0.0],
                w_head: vec![1.0, -1.0],
                b_head: vec![0.0, 0.0],
            };
            let has_gen = mode.has_generator();
            Checkpoint {
                version: CHECKPOINT_VERSION,
                epoch: 0,
                config: TrainConfig {
                    mode,
                    ..TrainConfig::default()
                },
                f_i,
                generator: has_gen.then_some(gen),
                f_e: None,
                env_table: None,
                rng: vec![],
            }
        }

        fn doc(text: &str, v: &Vocabulary) -> Document {
            Document {
                id: "d1".into(),
                raw_text: text.into(),
                tokens: tokenize(text, v).unwrap(),
                label: Label::NonToxic,
                attributes: AttributeSet::default(),
                dialect: None,
                environment: None,
            }
        }

        #[test]
        fn kept_tokens_are_marked_bold() {
            let v = vocab();
            let ckpt = checkpoint(&v, TrainMode::Invrat);
            let docs = vec![doc("oh my god", &v)];
            let recs = rationale_dump(&ckpt, &v, &docs, 10).unwrap();
            assert_eq!(recs.len(), 1);
            assert_eq!(recs[0].kept, vec![true, false, true]);
            assert_eq!(recs[0].marked_text, "**oh** my **god**");
        }

        #[test]
        fn empty_rationale_still_predicts() {
            let v = vocab();
            let mut ckpt = checkpoint(&v, TrainMode::Invrat);
            // Bias the drop logit so every token is dropped.
            {
                let gen = ckpt.generator.as_mut().unwrap();
                gen.w_head = vec![0.0, 0.0];
                gen.b_head = vec![1.0, 0.0];
            }
            let docs = vec![doc("oh my god", &v)];
            let recs = rationale_dump(&ckpt, &v, &docs, 10).unwrap();
            assert!(recs[0].kept.iter().all(|&k| !k));
            assert!(!recs[0].marked_text.contains("**"));
            // Prediction emitted regardless.
            assert!(matches!(recs[0].prediction, Label::Toxic | Label::NonToxic));
        }

        #[test]
        fn dumps_are_deterministic() {
            let v = vocab();
            let ckpt = checkpoint(&v, TrainMode::Invrat);
            let docs = vec![doc("oh my god", &v), doc("god my oh", &v)];
            let a = rationale_dump(&ckpt, &v, &docs, 10).unwrap();
            let b = rationale_dump(&ckpt, &v, &docs, 10).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.kept, y.kept);
                assert_eq!(x.marked_text, y.marked_text);
                assert_eq!(x.prediction, y.prediction);
            }
        }

        #[test]
        fn vanilla_checkpoints_are_rejected() {
            let v = vocab();
            let ckpt = checkpoint(&v, TrainMode::Vanilla);
            let docs = vec![doc("oh my god", &v)];
            assert!(matches!(
                rationale_dump(&ckpt, &v, &docs, 10),
                Err(Error::NoGenerator { .. })
            ));
        }

        #[test]
        fn limit_truncates_output() {
            let v = vocab();
            let ckpt = checkpoint(&v, TrainMode::Invrat);
            let docs: Vec<Document> = (0..7).map(|_| doc("oh my god", &v)).collect();
            let recs = rationale_dump(&ckpt, &v, &docs, 5).unwrap();
            assert_eq!(recs.len(), 5);
        }
    }
}
