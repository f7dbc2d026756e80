//! Judging and scoring.
//!
//! Every (prediction, gold) pair falls in exactly one judgement class:
//!
//! | code | gold value in title | prediction        |
//! |------|---------------------|-------------------|
//! | `VC` | yes                 | correct value     |
//! | `VW` | yes                 | wrong value       |
//! | `VN` | yes                 | not found (missed)|
//! | `NV` | no                  | a value (spurious)|
//! | `NN` | no                  | not found         |
//!
//! Precision counts `VC` against all value predictions (`VC`+`VW`+`NV`),
//! recall counts `VC` against all gold positives (`VC`+`VW`+`VN`). `VW` hurts
//! both, the standard extraction convention. `NN` affects neither.

use serde::{Deserialize, Serialize};

use crate::client::CompletionResponse;
use crate::corpus::AttributeAnnotation;
use crate::money::{estimate_cost, Money};
use crate::parse::{ClosedAnswer, PairList};

/// Classification of one prediction against its gold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Judgement {
    /// Gold present, predicted correctly.
    #[serde(rename = "VC")]
    Correct,
    /// Gold present, predicted a wrong value.
    #[serde(rename = "VW")]
    Wrong,
    /// Gold present, predicted not-found.
    #[serde(rename = "VN")]
    Missed,
    /// Gold absent, predicted a value.
    #[serde(rename = "NV")]
    Spurious,
    /// Gold absent, predicted not-found.
    #[serde(rename = "NN")]
    TrueNegative,
}

/// Counts per judgement class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgementCounts {
    pub correct: usize,
    pub wrong: usize,
    pub missed: usize,
    pub spurious: usize,
    pub true_negative: usize,
}

impl JudgementCounts {
    pub fn add(&mut self, judgement: Judgement) {
        match judgement {
            Judgement::Correct => self.correct += 1,
            Judgement::Wrong => self.wrong += 1,
            Judgement::Missed => self.missed += 1,
            Judgement::Spurious => self.spurious += 1,
            Judgement::TrueNegative => self.true_negative += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.correct + self.wrong + self.missed + self.spurious + self.true_negative
    }
}

impl FromIterator<Judgement> for JudgementCounts {
    fn from_iter<I: IntoIterator<Item = Judgement>>(iter: I) -> Self {
        let mut counts = JudgementCounts::default();
        for j in iter {
            counts.add(j);
        }
        counts
    }
}

/// Value comparison policy. Exact match is case-sensitive by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matcher {
    pub case_insensitive: bool,
}

impl Matcher {
    pub fn value_matches(&self, predicted: &str, forms: &[String]) -> bool {
        if self.case_insensitive {
            let p = predicted.to_lowercase();
            forms.iter().any(|f| f.to_lowercase() == p)
        } else {
            forms.iter().any(|f| f == predicted)
        }
    }
}

/// Gold for one closed case: the accepted surface forms, or nothing
/// extractable from the title.
#[derive(Debug, Clone, Copy)]
pub enum GoldClosed<'a> {
    Present(&'a [String]),
    Absent,
}

impl<'a> GoldClosed<'a> {
    /// Derives the closed gold from an annotation: value-in-title annotations
    /// contribute their surface forms, everything else is a negative.
    pub fn from_annotation(annotation: Option<&'a AttributeAnnotation>) -> GoldClosed<'a> {
        match annotation {
            Some(ann) if ann.value_in_title => GoldClosed::Present(&ann.surface_forms),
            _ => GoldClosed::Absent,
        }
    }
}

/// Judges a closed prediction: a value is correct iff it equals any gold
/// surface form.
pub fn judge_closed(
    prediction: &ClosedAnswer,
    gold: GoldClosed<'_>,
    matcher: &Matcher,
) -> Judgement {
    match (prediction, gold) {
        (ClosedAnswer::Value(v), GoldClosed::Present(forms)) => {
            if matcher.value_matches(v, forms) {
                Judgement::Correct
            } else {
                Judgement::Wrong
            }
        }
        (ClosedAnswer::Value(_), GoldClosed::Absent) => Judgement::Spurious,
        (ClosedAnswer::NotFound, GoldClosed::Present(_)) => Judgement::Missed,
        (ClosedAnswer::NotFound, GoldClosed::Absent) => Judgement::TrueNegative,
    }
}

/// How open-extraction predictions outside the gold schema are counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpenEvalMode {
    /// Out-of-schema predictions are ignored.
    #[default]
    Restricted,
    /// Out-of-schema predictions count as spurious.
    Unrestricted,
}

impl OpenEvalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpenEvalMode::Restricted => "restricted",
            OpenEvalMode::Unrestricted => "unrestricted",
        }
    }
}

/// Judges an open-extraction pair list against a record's gold annotations.
///
/// A predicted pair matches a gold annotation iff the attribute names are
/// exactly equal and the value equals any gold surface form. Each gold
/// attribute consumes at most one predicted pair (the first in line order);
/// the remaining predictions are out-of-schema and follow `mode`. Returns
/// one `(attribute, judgement)` per gold annotation plus, in unrestricted
/// mode, one spurious entry per unconsumed prediction.
pub fn judge_open(
    prediction: &PairList,
    gold: &[AttributeAnnotation],
    mode: OpenEvalMode,
    matcher: &Matcher,
) -> Vec<(String, Judgement)> {
    let mut first_pred: Vec<(&str, &str)> = Vec::new();
    let mut extras: Vec<&str> = Vec::new();
    for (attr, value) in &prediction.pairs {
        if first_pred.iter().any(|(a, _)| *a == attr.as_str()) {
            extras.push(attr);
        } else {
            first_pred.push((attr, value));
        }
    }
    let mut judgements = Vec::new();
    let mut consumed: Vec<&str> = Vec::new();
    for ann in gold {
        let predicted = first_pred
            .iter()
            .find(|(a, _)| *a == ann.attribute.as_str())
            .map(|(_, v)| *v);
        if predicted.is_some() {
            consumed.push(&ann.attribute);
        }
        let judgement = match (ann.value_in_title, predicted) {
            (true, Some(v)) if matcher.value_matches(v, &ann.surface_forms) => Judgement::Correct,
            (true, Some(_)) => Judgement::Wrong,
            (true, None) => Judgement::Missed,
            (false, Some(_)) => Judgement::Spurious,
            (false, None) => Judgement::TrueNegative,
        };
        judgements.push((ann.attribute.clone(), judgement));
    }
    if mode == OpenEvalMode::Unrestricted {
        for (attr, _) in &first_pred {
            if !consumed.contains(attr) {
                judgements.push((attr.to_string(), Judgement::Spurious));
            }
        }
        for attr in extras {
            judgements.push((attr.to_string(), Judgement::Spurious));
        }
    }
    judgements
}

/// Precision/recall/F1 plus the class counts they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: JudgementCounts,
    /// Set when no value was predicted anywhere (precision denominator 0).
    pub zero_predicted_positive: bool,
    /// Set when gold contains no positives (recall denominator 0).
    pub zero_gold_positive: bool,
}

/// Computes precision, recall and F1 from a judgement multiset.
///
/// `TP = |VC|`, predicted positives `= |VC|+|VW|+|NV|`, gold positives
/// `= |VC|+|VW|+|VN|`; a zero denominator yields 0 with the corresponding
/// flag set. `F1 = 2PR/(P+R)` when `P+R > 0`, else 0.
pub fn compute_metrics<I: IntoIterator<Item = Judgement>>(judgements: I) -> Metrics {
    let counts: JudgementCounts = judgements.into_iter().collect();
    let tp = counts.correct;
    let predicted_positive = counts.correct + counts.wrong + counts.spurious;
    let gold_positive = counts.correct + counts.wrong + counts.missed;
    let precision = if predicted_positive == 0 {
        0.0
    } else {
        tp as f64 / predicted_positive as f64
    };
    let recall = if gold_positive == 0 {
        0.0
    } else {
        tp as f64 / gold_positive as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        precision,
        recall,
        f1,
        counts,
        zero_predicted_positive: predicted_positive == 0,
        zero_gold_positive: gold_positive == 0,
    }
}

/// Token and cost totals for one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    /// Tokens billed (cached responses contribute nothing).
    pub total_tokens: u64,
    pub billed_responses: usize,
    pub cached_responses: usize,
    /// USD, exact.
    pub total_cost: Money,
    pub titles: u64,
    /// USD per title, exact: `cost_per_title × titles == total_cost`.
    pub cost_per_title: Money,
}

impl CostReport {
    /// Cents per title with four decimal places, the report format.
    pub fn cost_per_title_cents(&self) -> String {
        self.cost_per_title.to_cents().render_fixed(4)
    }
}

/// Sums billable tokens over the responses and prices them.
///
/// Cached responses are listed but contribute zero new cost.
///
/// # Panics
///
/// Panics when `titles` is zero.
pub fn aggregate_cost(responses: &[CompletionResponse], price: Money, titles: u64) -> CostReport {
    assert!(titles >= 1, "aggregate_cost requires at least one title");
    let mut total_tokens = 0u64;
    let mut billed = 0usize;
    let mut cached = 0usize;
    for response in responses {
        if response.from_cache {
            cached += 1;
        } else {
            billed += 1;
            total_tokens += response.total_tokens;
        }
    }
    let total_cost = estimate_cost(total_tokens, price);
    CostReport {
        total_tokens,
        billed_responses: billed,
        cached_responses: cached,
        total_cost,
        titles,
        cost_per_title: total_cost.scale(1, titles as i128),
    }
}
