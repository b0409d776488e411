//! Binary, weighted and continuous performance metrics.
//!
//! Ratio metrics never fail on a zero denominator: they return `0` with the
//! `undefined` flag set, so sweeps over extreme thresholds stay total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassifierResult, Dataset, Label};
use crate::select::MemberSet;
use crate::trinary::{trinary_summary, OperatingPoint, TrinaryCounts};

/// Weight-summed confusion tallies, with rejected items kept apart.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedConfusion {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub rejected: f64,
}

impl WeightedConfusion {
    pub fn new(tp: f64, fp: f64, tn: f64, fn_: f64, rejected: f64) -> Self {
        WeightedConfusion {
            tp,
            fp,
            tn,
            fn_,
            rejected,
        }
    }

    pub fn accepted(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn total(&self) -> f64 {
        self.accepted() + self.rejected
    }
}

impl From<TrinaryCounts> for WeightedConfusion {
    fn from(c: TrinaryCounts) -> Self {
        WeightedConfusion::new(c.tp, c.fp, c.tn, c.fn_, c.rejected)
    }
}

/// How rejected items enter accuracy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectedPolicy {
    #[default]
    Exclude,
    AsCorrect,
    AsIncorrect,
}

impl RejectedPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectedPolicy::Exclude => "exclude",
            RejectedPolicy::AsCorrect => "as-correct",
            RejectedPolicy::AsIncorrect => "as-incorrect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryMetric {
    Accuracy,
    Precision,
    Recall,
    F1,
    Mcc,
}

impl BinaryMetric {
    pub const ALL: [BinaryMetric; 5] = [
        BinaryMetric::Accuracy,
        BinaryMetric::Precision,
        BinaryMetric::Recall,
        BinaryMetric::F1,
        BinaryMetric::Mcc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryMetric::Accuracy => "accuracy",
            BinaryMetric::Precision => "precision",
            BinaryMetric::Recall => "recall",
            BinaryMetric::F1 => "f1",
            BinaryMetric::Mcc => "mcc",
        }
    }
}

/// Wire metric identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricId {
    Accuracy,
    Precision,
    Recall,
    F1,
    Mcc,
    Auc,
    Brier,
}

impl MetricId {
    pub fn binary(self) -> Option<BinaryMetric> {
        Some(match self {
            MetricId::Accuracy => BinaryMetric::Accuracy,
            MetricId::Precision => BinaryMetric::Precision,
            MetricId::Recall => BinaryMetric::Recall,
            MetricId::F1 => BinaryMetric::F1,
            MetricId::Mcc => BinaryMetric::Mcc,
            MetricId::Auc | MetricId::Brier => return None,
        })
    }

    pub fn require_binary(self) -> Result<BinaryMetric> {
        self.binary().ok_or_else(|| {
            Error::invalid(format!("`{self:?}` is not a confusion-based metric").to_lowercase())
        })
    }
}

impl std::str::FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::invalid(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub undefined: bool,
}

impl MetricValue {
    fn ratio(num: f64, den: f64) -> Self {
        if den == 0.0 {
            MetricValue::UNDEFINED
        } else {
            MetricValue {
                value: num / den,
                undefined: false,
            }
        }
    }

    pub const UNDEFINED: MetricValue = MetricValue {
        value: 0.0,
        undefined: true,
    };
}

/// Per-instance weights, aligned with dataset instance order.
///
/// Weights are non-negative; zero marks an item absent from a bootstrap
/// variant.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0; n])
    }

    pub fn from_vec(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!("weight {w} is not a finite non-negative number")));
        }
        Ok(WeightVector(weights))
    }

    pub fn from_multiplicity(counts: &[u32]) -> Self {
        WeightVector(counts.iter().map(|&c| f64::from(c)).collect())
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Element-wise product.
    pub fn multiply(&self, other: &WeightVector) -> WeightVector {
        WeightVector(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }
}

pub fn confusion(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    op: &OperatingPoint,
    scope: Option<&MemberSet>,
    weights: Option<&WeightVector>,
) -> WeightedConfusion {
    trinary_summary(dataset, classifier, op, scope, weights).into()
}

pub fn binary_metric(c: &WeightedConfusion, metric: BinaryMetric, policy: RejectedPolicy) -> Result<MetricValue> {
    if metric != BinaryMetric::Accuracy && policy != RejectedPolicy::Exclude {
        return Err(Error::UnsupportedPolicy {
            metric: metric.as_str().to_owned(),
            policy: policy.as_str().to_owned(),
        });
    }
    let WeightedConfusion {
        tp,
        fp,
        tn,
        fn_,
        rejected,
    } = *c;
    Ok(match metric {
        BinaryMetric::Accuracy => match policy {
            RejectedPolicy::Exclude => MetricValue::ratio(tp + tn, tp + tn + fp + fn_),
            RejectedPolicy::AsCorrect => MetricValue::ratio(tp + tn + rejected, tp + tn + fp + fn_ + rejected),
            RejectedPolicy::AsIncorrect => MetricValue::ratio(tp + tn, tp + tn + fp + fn_ + rejected),
        },
        BinaryMetric::Precision => MetricValue::ratio(tp, tp + fp),
        BinaryMetric::Recall => MetricValue::ratio(tp, tp + fn_),
        BinaryMetric::F1 => {
            let p = MetricValue::ratio(tp, tp + fp);
            let r = MetricValue::ratio(tp, tp + fn_);
            if p.undefined || r.undefined {
                MetricValue::UNDEFINED
            } else {
                MetricValue::ratio(2.0 * p.value * r.value, p.value + r.value)
            }
        }
        BinaryMetric::Mcc => {
            let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
            let v = MetricValue::ratio(tp * tn - fp * fn_, den);
            // rounding can push |mcc| a hair past 1
            MetricValue {
                value: v.value.clamp(-1.0, 1.0),
                ..v
            }
        }
    })
}

fn scoped(dataset: &Dataset, scope: Option<&MemberSet>) -> Vec<usize> {
    match scope {
        Some(s) => s.iter().collect(),
        None => (0..dataset.len()).collect(),
    }
}

/// Unweighted ROC AUC, computed exactly as the trapezoidal area over all
/// distinct thresholds. The trapezoid sum is accumulated in integer units of
/// `1 / (2 * P * N)`, so the result is identical to the tie-corrected
/// Mann-Whitney statistic.
pub fn auc(dataset: &Dataset, classifier: &ClassifierResult, scope: Option<&MemberSet>) -> Result<f64> {
    let scores = classifier.scores();
    let labels = dataset.labels();
    let mut items: Vec<(f64, Label)> = scoped(dataset, scope)
        .into_iter()
        .map(|i| (scores[i], labels[i]))
        .collect();
    let pos = items.iter().filter(|(_, l)| l.is_positive()).count() as u128;
    let neg = items.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("AUC needs both classes in scope".into()));
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut twice_area: u128 = 0;
    let mut tp_before: u128 = 0;
    for group in items.chunk_by(|a, b| a.0 == b.0) {
        let p = group.iter().filter(|(_, l)| l.is_positive()).count() as u128;
        let q = group.len() as u128 - p;
        twice_area += q * (2 * tp_before + p);
        tp_before += p;
    }
    Ok(twice_area as f64 / (2 * pos * neg) as f64)
}

/// ROC AUC with per-item weights: each positive/negative pair counts with
/// the product of their weights. Integer weights (bootstrap multiplicities)
/// give the same value as [`auc`] on the physically resampled data.
pub fn weighted_auc(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    scope: Option<&MemberSet>,
    weights: &WeightVector,
) -> Result<f64> {
    let scores = classifier.scores();
    let labels = dataset.labels();
    let mut items: Vec<(f64, Label, f64)> = scoped(dataset, scope)
        .into_iter()
        .filter(|&i| weights.get(i) > 0.0)
        .map(|i| (scores[i], labels[i], weights.get(i)))
        .collect();
    let pos: f64 = items.iter().filter(|x| x.1.is_positive()).map(|x| x.2).sum();
    let neg: f64 = items.iter().filter(|x| !x.1.is_positive()).map(|x| x.2).sum();
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Undefined("AUC needs both classes in scope".into()));
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut twice_area = 0.0;
    let mut tp_before = 0.0;
    for group in items.chunk_by(|a, b| a.0 == b.0) {
        let p: f64 = group.iter().filter(|x| x.1.is_positive()).map(|x| x.2).sum();
        let q: f64 = group.iter().filter(|x| !x.1.is_positive()).map(|x| x.2).sum();
        twice_area += q * (2.0 * tp_before + p);
        tp_before += p;
    }
    Ok(twice_area / (2.0 * pos * neg))
}

/// Weighted mean squared error between scores and 0/1 labels.
pub fn brier(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    scope: Option<&MemberSet>,
    weights: Option<&WeightVector>,
) -> Result<f64> {
    let scores = classifier.scores();
    let labels = dataset.labels();
    let (mut num, mut den) = (0.0, 0.0);
    for i in scoped(dataset, scope) {
        let w = weights.map_or(1.0, |w| w.get(i));
        let d = scores[i] - labels[i].target();
        num += w * d * d;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::Undefined("Brier score needs a non-empty scope".into()));
    }
    Ok(num / den)
}

/// Multiplicative combination: each item's weight is the product of the
/// weights of every selection containing it, 1.0 when it is in none.
pub fn combine_weights(n: usize, selections: &[(&MemberSet, f64)]) -> Result<WeightVector> {
    let mut w = vec![1.0; n];
    for (members, weight) in selections {
        if !(weight.is_finite() && *weight > 0.0) {
            return Err(Error::invalid(format!("selection weight {weight} must be positive")));
        }
        for i in members.iter() {
            w[i] *= weight;
        }
    }
    Ok(WeightVector(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IngestDoc, LoadOptions};
    use approx::assert_relative_eq;

    fn ds(items: &[(&str, &str, f64)]) -> Dataset {
        let mut doc = IngestDoc::new("neg", "pos");
        for (id, label, _) in items {
            doc = doc.instance(*id, *label);
        }
        let doc = doc.classifier("C", items.iter().map(|(id, _, s)| (*id, *s)));
        Dataset::from_ingest(doc, &LoadOptions::default()).unwrap().0
    }

    fn metric(c: WeightedConfusion, m: BinaryMetric, p: RejectedPolicy) -> f64 {
        binary_metric(&c, m, p).unwrap().value
    }

    #[test]
    fn mcc_formula() {
        let c = WeightedConfusion::new(3.0, 1.0, 4.0, 2.0, 0.0);
        // (3*4 - 1*2) / sqrt(4 * 5 * 5 * 6) = 10 / sqrt(600)
        assert_relative_eq!(
            metric(c, BinaryMetric::Mcc, RejectedPolicy::Exclude),
            10.0 / 600f64.sqrt(),
            epsilon = 1e-15
        );
        assert_relative_eq!(metric(c, BinaryMetric::Mcc, RejectedPolicy::Exclude), 0.4082, epsilon = 1e-4);
    }

    #[test]
    fn perfect_confusion_scores_one_everywhere() {
        let c = WeightedConfusion::new(5.0, 0.0, 5.0, 0.0, 0.0);
        for m in BinaryMetric::ALL {
            assert_eq!(metric(c, m, RejectedPolicy::Exclude), 1.0, "{m:?}");
        }
    }

    #[test]
    fn rejected_policies() {
        let c = WeightedConfusion::new(2.0, 0.0, 2.0, 0.0, 4.0);
        assert_eq!(metric(c, BinaryMetric::Accuracy, RejectedPolicy::Exclude), 1.0);
        assert_eq!(metric(c, BinaryMetric::Accuracy, RejectedPolicy::AsCorrect), 1.0);
        assert_eq!(metric(c, BinaryMetric::Accuracy, RejectedPolicy::AsIncorrect), 0.5);
        let err = binary_metric(&c, BinaryMetric::F1, RejectedPolicy::AsCorrect).unwrap_err();
        assert_eq!(err.code(), "UNSUPPORTED_POLICY");
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let c = WeightedConfusion::default();
        for m in BinaryMetric::ALL {
            let v = binary_metric(&c, m, RejectedPolicy::Exclude).unwrap();
            assert!(v.undefined);
            assert_eq!(v.value, 0.0);
        }
        // precision and recall both 0 -> F1 undefined
        let c = WeightedConfusion::new(0.0, 2.0, 0.0, 3.0, 0.0);
        assert!(binary_metric(&c, BinaryMetric::F1, RejectedPolicy::Exclude).unwrap().undefined);
    }

    #[test]
    fn auc_examples() {
        let d = ds(&[("a", "pos", 0.35), ("b", "pos", 0.8), ("c", "neg", 0.1), ("d", "neg", 0.4)]);
        assert_eq!(auc(&d, d.classifier("C").unwrap(), None).unwrap(), 0.75);
        let d = ds(&[("a", "pos", 0.9), ("b", "neg", 0.1)]);
        assert_eq!(auc(&d, d.classifier("C").unwrap(), None).unwrap(), 1.0);
        let d = ds(&[("a", "pos", 0.5), ("b", "neg", 0.5), ("c", "neg", 0.5)]);
        assert_eq!(auc(&d, d.classifier("C").unwrap(), None).unwrap(), 0.5);
        let d = ds(&[("a", "pos", 0.5), ("b", "pos", 0.2)]);
        assert_eq!(auc(&d, d.classifier("C").unwrap(), None).unwrap_err().code(), "UNDEFINED_METRIC");
    }

    #[test]
    fn brier_examples() {
        let d = ds(&[("a", "pos", 1.0), ("b", "neg", 0.0)]);
        assert_eq!(brier(&d, d.classifier("C").unwrap(), None, None).unwrap(), 0.0);
        let d = ds(&[("a", "pos", 0.5), ("b", "neg", 0.5)]);
        assert_eq!(brier(&d, d.classifier("C").unwrap(), None, None).unwrap(), 0.25);
        let d = ds(&[("a", "pos", 0.9), ("b", "pos", 0.2)]);
        assert_relative_eq!(brier(&d, d.classifier("C").unwrap(), None, None).unwrap(), 0.325, epsilon = 1e-15);
        let empty = MemberSet::empty(d.len());
        assert!(brier(&d, d.classifier("C").unwrap(), Some(&empty), None).is_err());
    }

    #[test]
    fn combined_weights_are_products() {
        assert_eq!(combine_weights(3, &[]).unwrap(), WeightVector::uniform(3));
        let a = MemberSet::from_indices(3, [0, 1]);
        let b = MemberSet::from_indices(3, [1]);
        let w = combine_weights(3, &[(&a, 2.0), (&b, 3.0)]).unwrap();
        assert_eq!(w.as_slice(), &[2.0, 6.0, 1.0]);
        assert!(combine_weights(3, &[(&a, 0.0)]).is_err());
    }

    #[test]
    fn class_weighting_changes_accuracy() {
        // one positive, three negatives; an all-negative predictor
        let d = ds(&[("p", "pos", 0.1), ("n1", "neg", 0.1), ("n2", "neg", 0.2), ("n3", "neg", 0.3)]);
        let positives = MemberSet::from_indices(4, [0]);
        let w = combine_weights(4, &[(&positives, 2.0)]).unwrap();
        let op = OperatingPoint::threshold(0.5).unwrap();
        let c = confusion(&d, d.classifier("C").unwrap(), &op, None, Some(&w));
        assert_eq!(c.fn_, 2.0);
        assert_eq!(metric(c, BinaryMetric::Accuracy, RejectedPolicy::Exclude), 0.6);
    }

    #[test]
    fn doubling_a_true_positive_weight_adds_its_extra_weight() {
        let d = ds(&[("a", "pos", 0.9), ("b", "neg", 0.8), ("c", "neg", 0.3), ("d", "pos", 0.1)]);
        let op = OperatingPoint::threshold(0.5).unwrap();
        let clf = d.classifier("C").unwrap();
        let base = confusion(&d, clf, &op, None, None);
        let w = WeightVector::from_vec(vec![2.0, 1.0, 1.0, 1.0]).unwrap();
        let doubled = confusion(&d, clf, &op, None, Some(&w));
        assert_eq!(doubled.tp, base.tp + 1.0);
        assert_eq!((doubled.fp, doubled.tn, doubled.fn_), (base.fp, base.tn, base.fn_));
    }

    #[test]
    fn metric_ids_parse_from_wire_names() {
        assert_eq!("f1".parse::<MetricId>().unwrap(), MetricId::F1);
        assert_eq!("brier".parse::<MetricId>().unwrap(), MetricId::Brier);
        assert!("ece".parse::<MetricId>().is_err());
    }
}
