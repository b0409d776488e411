//! Dual-threshold operating points and trinary outcomes.
//!
//! Decision rule for an operating point `(lower, upper)`:
//! positive iff `score >= upper`, negative iff `score < lower`, rejected
//! otherwise. With `lower == upper` the band is empty and this is the plain
//! `score >= t` threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::WeightVector;
use crate::model::{ClassifierResult, Dataset, Label};
use crate::select::MemberSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    lower: f64,
    upper: f64,
}

impl OperatingPoint {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) {
            return Err(Error::invalid("thresholds must be finite"));
        }
        if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) {
            return Err(Error::invalid(format!(
                "thresholds must lie in [0, 1], got ({lower}, {upper})"
            )));
        }
        if lower > upper {
            return Err(Error::invalid(format!(
                "lower threshold {lower} exceeds upper threshold {upper}"
            )));
        }
        Ok(OperatingPoint { lower, upper })
    }

    /// Plain binary threshold, empty rejection band.
    pub fn threshold(t: f64) -> Result<Self> {
        Self::new(t, t)
    }

    /// Band `(t - b, t + b)` clamped to `[0, 1]`.
    pub fn symmetric(t: f64, bandwidth: f64) -> Result<Self> {
        if !(bandwidth >= 0.0) {
            return Err(Error::invalid("bandwidth must be non-negative"));
        }
        if bandwidth == 0.0 {
            return Self::threshold(t);
        }
        Self::new((t - bandwidth).max(0.0), (t + bandwidth).min(1.0))
    }

    #[inline]
    pub fn lower(&self) -> f64 {
        self.lower
    }

    #[inline]
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn bandwidth(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    pub fn center(&self) -> f64 {
        (self.upper + self.lower) / 2.0
    }

    #[inline]
    pub fn decide(&self, score: f64) -> Decision {
        if score >= self.upper {
            Decision::Positive
        } else if score < self.lower {
            Decision::Negative
        } else {
            Decision::Rejected
        }
    }
}

impl Default for OperatingPoint {
    fn default() -> Self {
        OperatingPoint {
            lower: 0.5,
            upper: 0.5,
        }
    }
}

impl<'de> Deserialize<'de> for OperatingPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lower: f64,
            upper: f64,
        }
        let raw = Raw::deserialize(d)?;
        OperatingPoint::new(raw.lower, raw.upper).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Positive,
    Negative,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    TP,
    FP,
    TN,
    FN,
    Rejected,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [Outcome::TP, Outcome::FP, Outcome::TN, Outcome::FN, Outcome::Rejected];

    pub fn from_decision(decision: Decision, label: Label) -> Outcome {
        match (decision, label) {
            (Decision::Rejected, _) => Outcome::Rejected,
            (Decision::Positive, Label::Positive) => Outcome::TP,
            (Decision::Positive, Label::Negative) => Outcome::FP,
            (Decision::Negative, Label::Negative) => Outcome::TN,
            (Decision::Negative, Label::Positive) => Outcome::FN,
        }
    }

    pub fn is_correct(self) -> Option<bool> {
        match self {
            Outcome::TP | Outcome::TN => Some(true),
            Outcome::FP | Outcome::FN => Some(false),
            Outcome::Rejected => None,
        }
    }
}

#[inline]
pub fn classify(score: f64, label: Label, op: &OperatingPoint) -> Outcome {
    Outcome::from_decision(op.decide(score), label)
}

/// Weighted tallies of the five outcome categories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrinaryCounts {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub rejected: f64,
    pub total: f64,
}

impl TrinaryCounts {
    pub fn add(&mut self, outcome: Outcome, weight: f64) {
        match outcome {
            Outcome::TP => self.tp += weight,
            Outcome::FP => self.fp += weight,
            Outcome::TN => self.tn += weight,
            Outcome::FN => self.fn_ += weight,
            Outcome::Rejected => self.rejected += weight,
        }
        self.total += weight;
    }

    pub fn get(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::TP => self.tp,
            Outcome::FP => self.fp,
            Outcome::TN => self.tn,
            Outcome::FN => self.fn_,
            Outcome::Rejected => self.rejected,
        }
    }
}

/// Weight-summed outcome counts over `scope` (all instances when `None`).
pub fn trinary_summary(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    op: &OperatingPoint,
    scope: Option<&MemberSet>,
    weights: Option<&WeightVector>,
) -> TrinaryCounts {
    let mut counts = TrinaryCounts::default();
    let labels = dataset.labels();
    let scores = classifier.scores();
    let mut visit = |i: usize| {
        let w = weights.map_or(1.0, |w| w.get(i));
        counts.add(classify(scores[i], labels[i], op), w);
    };
    match scope {
        Some(scope) => scope.iter().for_each(&mut visit),
        None => (0..dataset.len()).for_each(&mut visit),
    }
    counts
}

/// Freeze `base` at `op` as a new classifier named `name`.
///
/// `is_taken` reports whether a classifier name is already in use.
pub fn derive_classifier(
    base: &ClassifierResult,
    op: OperatingPoint,
    name: &str,
    is_taken: impl Fn(&str) -> bool,
) -> Result<ClassifierResult> {
    if name.is_empty() {
        return Err(Error::invalid("derived classifier name must be non-empty"));
    }
    if is_taken(name) {
        return Err(Error::Conflict(format!("classifier `{name}` already exists")));
    }
    Ok(ClassifierResult::derived_from(base, name.to_owned(), op))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IngestDoc, LoadOptions};

    pub(crate) fn running_example() -> Dataset {
        let doc = IngestDoc::new("neg", "pos")
            .instance("i1", "pos")
            .instance("i2", "neg")
            .instance("i3", "neg")
            .instance("i4", "pos")
            .classifier("LR", [("i1", 0.9), ("i2", 0.8), ("i3", 0.3), ("i4", 0.1)]);
        Dataset::from_ingest(doc, &LoadOptions::default()).unwrap().0
    }

    fn op(l: f64, u: f64) -> OperatingPoint {
        OperatingPoint::new(l, u).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(0.7, Label::Positive, &op(0.5, 0.5)), Outcome::TP);
        assert_eq!(classify(0.5, Label::Positive, &op(0.4, 0.6)), Outcome::Rejected);
        // lower bound is inclusive for rejection
        assert_eq!(classify(0.4, Label::Negative, &op(0.4, 0.6)), Outcome::Rejected);
        // upper bound is inclusive for acceptance
        assert_eq!(classify(0.6, Label::Negative, &op(0.4, 0.6)), Outcome::FP);
        assert_eq!(classify(0.5, Label::Negative, &op(0.5, 0.5)), Outcome::FP);
        assert_eq!(classify(0.49, Label::Positive, &op(0.5, 0.5)), Outcome::FN);
    }

    #[test]
    fn operating_point_validation() {
        assert!(OperatingPoint::new(0.6, 0.4).is_err());
        assert!(OperatingPoint::new(-0.1, 0.4).is_err());
        assert!(OperatingPoint::new(0.1, 1.1).is_err());
        assert!(OperatingPoint::new(f64::NAN, 0.4).is_err());
        let p = op(0.2, 0.6);
        assert!((p.bandwidth() - 0.2).abs() < 1e-15);
        assert!((p.center() - 0.4).abs() < 1e-15);
        assert_eq!(OperatingPoint::symmetric(0.75, 0.5).unwrap(), op(0.25, 1.0));
        let parsed: std::result::Result<OperatingPoint, _> =
            serde_json::from_str(r#"{"lower":0.7,"upper":0.2}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn summary_of_running_example() {
        let ds = running_example();
        let lr = ds.classifier("LR").unwrap();
        let c = trinary_summary(&ds, lr, &op(0.5, 0.5), None, None);
        assert_eq!((c.tp, c.fp, c.tn, c.fn_, c.rejected), (1.0, 1.0, 1.0, 1.0, 0.0));
        let c = trinary_summary(&ds, lr, &op(0.2, 0.85), None, None);
        assert_eq!((c.tp, c.fp, c.tn, c.fn_, c.rejected), (1.0, 0.0, 0.0, 1.0, 2.0));
        assert_eq!(c.total, 4.0);
        let empty = MemberSet::empty(ds.len());
        assert_eq!(
            trinary_summary(&ds, lr, &op(0.5, 0.5), Some(&empty), None),
            TrinaryCounts::default()
        );
    }

    #[test]
    fn derived_classifier_is_frozen_and_named_uniquely() {
        let ds = running_example();
        let lr = ds.classifier("LR").unwrap();
        let d = derive_classifier(lr, op(0.4, 0.6), "LR-band", |n| n == "LR").unwrap();
        assert_eq!(d.frozen_point(), Some(op(0.4, 0.6)));
        assert_eq!(d.scores(), lr.scores());
        assert_eq!(
            trinary_summary(&ds, &d, &d.frozen_point().unwrap(), None, None),
            trinary_summary(&ds, lr, &op(0.4, 0.6), None, None)
        );
        let err = derive_classifier(lr, op(0.5, 0.5), "LR", |n| n == "LR").unwrap_err();
        assert!(matches!(err, Error::Conflict(_)));
    }
}
