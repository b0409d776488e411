//! Selections: predicates over instances combined with set algebra, plus
//! focus-item stepping.
//!
//! Member sets are bitsets over instance indices (dataset order), so set
//! operations stay cheap at 10^5 items.

use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, RefKind, Result};
use crate::model::{ClassifierResult, Dataset, FeatureValue};
use crate::trinary::{classify, OperatingPoint, Outcome};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemberSet(FixedBitSet);

impl MemberSet {
    pub fn empty(universe: usize) -> Self {
        MemberSet(FixedBitSet::with_capacity(universe))
    }

    pub fn full(universe: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(universe);
        bits.insert_range(..);
        MemberSet(bits)
    }

    pub fn from_indices(universe: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(universe);
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn from_predicate(universe: usize, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut set = Self::empty(universe);
        for i in 0..universe {
            if keep(i) {
                set.insert(i);
            }
        }
        set
    }

    /// Size of the instance universe, not the member count.
    pub fn universe(&self) -> usize {
        self.0.len()
    }

    pub fn len(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(index)
    }

    pub fn insert(&mut self, index: usize) {
        self.0.insert(index);
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.ones()
    }

    pub fn union_with(&mut self, other: &MemberSet) {
        self.0.union_with(&other.0);
    }

    pub fn intersect_with(&mut self, other: &MemberSet) {
        self.0.intersect_with(&other.0);
    }

    pub fn difference_with(&mut self, other: &MemberSet) {
        self.0.difference_with(&other.0);
    }

    pub fn complement(&self) -> MemberSet {
        let mut bits = self.0.clone();
        bits.toggle_range(..);
        MemberSet(bits)
    }

    pub fn intersection_count(&self, other: &MemberSet) -> usize {
        self.0.intersection_count(&other.0)
    }

    pub fn is_disjoint(&self, other: &MemberSet) -> bool {
        self.0.is_disjoint(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Predicate {
    /// `[lo, hi)`, closed at the top when `hi >= 1` so score bins partition.
    ScoreRange {
        classifier: String,
        lo: f64,
        hi: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bin: Option<usize>,
    },
    Outcome {
        classifier: String,
        category: Outcome,
    },
    Class {
        label: String,
    },
    /// Closed interval `[lo, hi]`; absent and categorical values never match.
    FeatureRange {
        name: String,
        lo: f64,
        hi: f64,
    },
    FeatureEquals {
        name: String,
        value: FeatureValue,
    },
    IdList {
        ids: Vec<String>,
    },
}

#[inline]
pub(crate) fn in_score_range(score: f64, lo: f64, hi: f64) -> bool {
    lo <= score && (score < hi || (hi >= 1.0 && score <= hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetOp {
    Union,
    Intersection,
    Difference,
    Complement,
}

/// Selection expression. Wire form is `{"pred": {...}}` for leaves and
/// `{"op": "union", "args": [...]}` for operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SelectionExpr {
    Pred { pred: Predicate },
    Op { op: SetOp, args: Vec<SelectionExpr> },
}

impl From<Predicate> for SelectionExpr {
    fn from(pred: Predicate) -> Self {
        SelectionExpr::Pred { pred }
    }
}

impl SelectionExpr {
    pub fn union(args: Vec<SelectionExpr>) -> Self {
        SelectionExpr::Op {
            op: SetOp::Union,
            args,
        }
    }

    pub fn intersection(args: Vec<SelectionExpr>) -> Self {
        SelectionExpr::Op {
            op: SetOp::Intersection,
            args,
        }
    }

    pub fn difference(a: SelectionExpr, b: SelectionExpr) -> Self {
        SelectionExpr::Op {
            op: SetOp::Difference,
            args: vec![a, b],
        }
    }

    pub fn complement(a: SelectionExpr) -> Self {
        SelectionExpr::Op {
            op: SetOp::Complement,
            args: vec![a],
        }
    }

    pub fn ids<I: Into<String>>(ids: impl IntoIterator<Item = I>) -> Self {
        Predicate::IdList {
            ids: ids.into_iter().map(Into::into).collect(),
        }
        .into()
    }

    /// Checks operator arity: complement is unary, difference binary, union
    /// and intersection take at least one argument.
    pub fn validate(&self) -> Result<()> {
        match self {
            SelectionExpr::Pred { pred } => match pred {
                Predicate::ScoreRange { lo, hi, .. } | Predicate::FeatureRange { lo, hi, .. } => {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(Error::invalid(format!("range [{lo}, {hi}] needs lo <= hi")));
                    }
                    Ok(())
                }
                _ => Ok(()),
            },
            SelectionExpr::Op { op, args } => {
                let ok = match op {
                    SetOp::Complement => args.len() == 1,
                    SetOp::Difference => args.len() == 2,
                    SetOp::Union | SetOp::Intersection => !args.is_empty(),
                };
                if !ok {
                    return Err(Error::invalid(format!(
                        "`{op:?}` cannot take {} argument(s)",
                        args.len()
                    )
                    .to_lowercase()));
                }
                args.iter().try_for_each(SelectionExpr::validate)
            }
        }
    }

    /// Classifier names whose operating points this expression depends on.
    pub fn referenced_classifiers(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_classifiers(&mut out);
        out
    }

    fn collect_classifiers(&self, out: &mut BTreeSet<String>) {
        match self {
            SelectionExpr::Pred { pred } => match pred {
                Predicate::Outcome { classifier, .. } | Predicate::ScoreRange { classifier, .. } => {
                    out.insert(classifier.clone());
                }
                _ => {}
            },
            SelectionExpr::Op { args, .. } => args.iter().for_each(|a| a.collect_classifiers(out)),
        }
    }
}

/// Looks up a classifier and the operating point its outcomes are judged at.
pub trait ClassifierResolver {
    fn resolve(&self, name: &str) -> Option<(&ClassifierResult, OperatingPoint)>;
}

/// Dataset classifiers at the given points; unlisted classifiers use the
/// default point.
pub struct PointMap<'a> {
    pub dataset: &'a Dataset,
    pub points: &'a BTreeMap<String, OperatingPoint>,
}

impl ClassifierResolver for PointMap<'_> {
    fn resolve(&self, name: &str) -> Option<(&ClassifierResult, OperatingPoint)> {
        let c = self.dataset.classifier(name)?;
        let op = c
            .frozen_point()
            .or_else(|| self.points.get(name).copied())
            .unwrap_or_default();
        Some((c, op))
    }
}

pub fn evaluate(expr: &SelectionExpr, dataset: &Dataset, resolver: &dyn ClassifierResolver) -> Result<MemberSet> {
    expr.validate()?;
    eval_node(expr, dataset, resolver)
}

fn eval_node(expr: &SelectionExpr, dataset: &Dataset, resolver: &dyn ClassifierResolver) -> Result<MemberSet> {
    let n = dataset.len();
    match expr {
        SelectionExpr::Pred { pred } => eval_predicate(pred, dataset, resolver),
        SelectionExpr::Op { op, args } => {
            let mut sets = args.iter().map(|a| eval_node(a, dataset, resolver));
            let mut acc = sets.next().unwrap_or_else(|| Ok(MemberSet::empty(n)))?;
            match op {
                SetOp::Complement => return Ok(acc.complement()),
                SetOp::Union => {
                    for s in sets {
                        acc.union_with(&s?);
                    }
                }
                SetOp::Intersection => {
                    for s in sets {
                        acc.intersect_with(&s?);
                    }
                }
                SetOp::Difference => {
                    for s in sets {
                        acc.difference_with(&s?);
                    }
                }
            }
            Ok(acc)
        }
    }
}

fn eval_predicate(pred: &Predicate, dataset: &Dataset, resolver: &dyn ClassifierResolver) -> Result<MemberSet> {
    let n = dataset.len();
    let resolve = |name: &str| {
        resolver
            .resolve(name)
            .ok_or_else(|| Error::unknown(RefKind::Classifier, name))
    };
    Ok(match pred {
        Predicate::ScoreRange { classifier, lo, hi, .. } => {
            let (c, _) = resolve(classifier)?;
            let scores = c.scores();
            MemberSet::from_predicate(n, |i| in_score_range(scores[i], *lo, *hi))
        }
        Predicate::Outcome { classifier, category } => {
            let (c, op) = resolve(classifier)?;
            let scores = c.scores();
            let labels = dataset.labels();
            MemberSet::from_predicate(n, |i| classify(scores[i], labels[i], &op) == *category)
        }
        Predicate::Class { label } => {
            let label = dataset
                .label_of_class(label)
                .ok_or_else(|| Error::unknown(RefKind::Class, label))?;
            let labels = dataset.labels();
            MemberSet::from_predicate(n, |i| labels[i] == label)
        }
        Predicate::FeatureRange { name, lo, hi } => {
            dataset.require_feature(name)?;
            MemberSet::from_predicate(n, |i| {
                dataset
                    .feature(i, name)
                    .and_then(FeatureValue::as_number)
                    .is_some_and(|v| *lo <= v && v <= *hi)
            })
        }
        Predicate::FeatureEquals { name, value } => {
            dataset.require_feature(name)?;
            MemberSet::from_predicate(n, |i| dataset.feature(i, name) == Some(value))
        }
        Predicate::IdList { ids } => {
            let mut set = MemberSet::empty(n);
            for id in ids {
                let i = dataset
                    .index_of(id)
                    .ok_or_else(|| Error::unknown(RefKind::Instance, id))?;
                set.insert(i);
            }
            set
        }
    })
}

/// For each grouping cell: (members also in `selection`, cell size).
pub fn overlap(selection: &MemberSet, grouping: &[MemberSet]) -> Vec<(usize, usize)> {
    grouping
        .iter()
        .map(|cell| (selection.intersection_count(cell), cell.len()))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(alias = "a")]
    A,
    #[serde(alias = "b")]
    B,
}

/// A named, optionally weighted member set with its provenance expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub id: String,
    pub name: String,
    pub members: MemberSet,
    pub weight: f64,
    pub expr: SelectionExpr,
    pub slot: Slot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum StepMode {
    Next,
    Prev,
    Random { seed: u64 },
}

/// Move the focus within `scope`.
///
/// `next`/`prev` walk the scope in ascending id order and wrap; when the
/// current focus is outside the scope they continue from its id position.
/// `random` is a pure function of `(seed, scope, call_index)`.
pub fn step_focus(
    dataset: &Dataset,
    scope: &MemberSet,
    current: Option<usize>,
    mode: StepMode,
    call_index: u64,
) -> Result<usize> {
    let members: Vec<usize> = dataset
        .sorted_indices()
        .iter()
        .copied()
        .filter(|&i| scope.contains(i))
        .collect();
    if members.is_empty() {
        return Err(Error::EmptyScope);
    }
    let id = |i: usize| dataset.instance(i).id.as_str();
    let len = members.len();
    Ok(match mode {
        StepMode::Next => match current {
            Some(c) => members[members.partition_point(|&m| id(m) <= id(c)) % len],
            None => members[0],
        },
        StepMode::Prev => match current {
            Some(c) => members[(members.partition_point(|&m| id(m) < id(c)) + len - 1) % len],
            None => members[len - 1],
        },
        StepMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(call_index);
            members[rng.random_range(0..len)]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IngestDoc, LoadOptions};

    fn running() -> Dataset {
        let doc = IngestDoc::new("neg", "pos")
            .instance("item1", "pos")
            .feature("age", FeatureValue::Number(30.0))
            .instance("item2", "neg")
            .feature("age", FeatureValue::Number(50.0))
            .feature("sex", FeatureValue::Category("F".into()))
            .instance("item3", "neg")
            .feature("sex", FeatureValue::Category("M".into()))
            .instance("item4", "pos")
            .feature("age", FeatureValue::Number(70.0))
            .classifier("LR", [("item1", 0.9), ("item2", 0.8), ("item3", 0.3), ("item4", 0.1)]);
        Dataset::from_ingest(doc, &LoadOptions::default()).unwrap().0
    }

    fn ids(ds: &Dataset, s: &MemberSet) -> Vec<String> {
        s.iter().map(|i| ds.instance(i).id.clone()).collect()
    }

    fn eval(ds: &Dataset, expr: &SelectionExpr) -> Result<MemberSet> {
        let points = BTreeMap::new();
        evaluate(expr, ds, &PointMap { dataset: ds, points: &points })
    }

    #[test]
    fn outcome_predicate_picks_false_positive() {
        let ds = running();
        let expr: SelectionExpr =
            serde_json::from_str(r#"{"pred":{"kind":"outcome","classifier":"LR","category":"FP"}}"#).unwrap();
        assert_eq!(ids(&ds, &eval(&ds, &expr).unwrap()), ["item2"]);
    }

    #[test]
    fn set_laws_on_examples() {
        let ds = running();
        let a = SelectionExpr::ids(["item1", "item3"]);
        let empty = SelectionExpr::ids(Vec::<String>::new());
        let all = SelectionExpr::complement(empty.clone());
        let a_set = eval(&ds, &a).unwrap();
        assert_eq!(eval(&ds, &SelectionExpr::union(vec![a.clone(), empty])).unwrap(), a_set);
        let d = SelectionExpr::difference(all, SelectionExpr::complement(a));
        assert_eq!(eval(&ds, &d).unwrap(), a_set);
    }

    #[test]
    fn wire_form_round_trips() {
        let json = r#"{"op":"union","args":[{"pred":{"kind":"class","label":"pos"}},{"pred":{"kind":"score-range","classifier":"LR","lo":0.0,"hi":0.5}}]}"#;
        let expr: SelectionExpr = serde_json::from_str(json).unwrap();
        assert_eq!(serde_json::to_string(&expr).unwrap(), json);
        let ds = running();
        assert_eq!(ids(&ds, &eval(&ds, &expr).unwrap()), ["item1", "item3", "item4"]);
    }

    #[test]
    fn arity_and_reference_errors() {
        let ds = running();
        let bad = SelectionExpr::Op {
            op: SetOp::Difference,
            args: vec![SelectionExpr::ids(["item1"])],
        };
        assert_eq!(eval(&ds, &bad).unwrap_err().code(), "INVALID_ARGUMENT");
        let bad = SelectionExpr::union(vec![]);
        assert!(eval(&ds, &bad).is_err());
        let unknown: SelectionExpr = Predicate::Outcome {
            classifier: "NB".into(),
            category: Outcome::TP,
        }
        .into();
        assert_eq!(eval(&ds, &unknown).unwrap_err().code(), "UNKNOWN_CLASSIFIER");
        let unknown: SelectionExpr = Predicate::FeatureRange {
            name: "height".into(),
            lo: 0.0,
            hi: 1.0,
        }
        .into();
        assert_eq!(eval(&ds, &unknown).unwrap_err().code(), "UNKNOWN_FEATURE");
        let inverted: SelectionExpr = Predicate::FeatureRange {
            name: "age".into(),
            lo: 2.0,
            hi: 1.0,
        }
        .into();
        assert!(eval(&ds, &inverted).is_err());
    }

    #[test]
    fn feature_predicates_treat_absent_as_non_matching() {
        let ds = running();
        let range: SelectionExpr = Predicate::FeatureRange {
            name: "age".into(),
            lo: 30.0,
            hi: 50.0,
        }
        .into();
        assert_eq!(ids(&ds, &eval(&ds, &range).unwrap()), ["item1", "item2"]);
        let eq: SelectionExpr = Predicate::FeatureEquals {
            name: "sex".into(),
            value: FeatureValue::Category("M".into()),
        }
        .into();
        assert_eq!(ids(&ds, &eval(&ds, &eq).unwrap()), ["item3"]);
    }

    #[test]
    fn score_range_top_bin_is_closed() {
        assert!(in_score_range(1.0, 0.9, 1.0));
        assert!(!in_score_range(0.5, 0.4, 0.5));
        assert!(in_score_range(0.4, 0.4, 0.5));
    }

    #[test]
    fn overlap_counts() {
        let all = MemberSet::full(4);
        let g1 = MemberSet::from_indices(4, [0, 1]);
        let g2 = MemberSet::from_indices(4, [3]);
        assert_eq!(overlap(&all, &[g1.clone(), g2.clone()]), [(2, 2), (1, 1)]);
        assert_eq!(overlap(&MemberSet::empty(4), &[g1.clone(), g2.clone()]), [(0, 2), (0, 1)]);
        let sel = MemberSet::from_indices(4, [0, 1, 2]);
        assert_eq!(overlap(&sel, &[g1, g2]), [(2, 2), (0, 1)]);
        assert!(overlap(&sel, &[]).is_empty());
    }

    #[test]
    fn focus_walks_in_id_order_and_wraps() {
        let ds = running();
        let scope = MemberSet::from_indices(4, [0, 1, 2]);
        let next = step_focus(&ds, &scope, Some(0), StepMode::Next, 0).unwrap();
        assert_eq!(ds.instance(next).id, "item2");
        let wrap = step_focus(&ds, &scope, Some(2), StepMode::Next, 0).unwrap();
        assert_eq!(ds.instance(wrap).id, "item1");
        let prev = step_focus(&ds, &scope, Some(0), StepMode::Prev, 0).unwrap();
        assert_eq!(ds.instance(prev).id, "item3");
        // focus outside scope continues from its id position
        let from_outside = step_focus(&ds, &MemberSet::from_indices(4, [0, 1]), Some(2), StepMode::Next, 0).unwrap();
        assert_eq!(ds.instance(from_outside).id, "item1");
        let single = MemberSet::from_indices(4, [0]);
        assert_eq!(step_focus(&ds, &single, Some(0), StepMode::Next, 0).unwrap(), 0);
        assert_eq!(
            step_focus(&ds, &MemberSet::empty(4), None, StepMode::Next, 0).unwrap_err().code(),
            "EMPTY_SCOPE"
        );
    }

    #[test]
    fn random_focus_is_reproducible() {
        let ds = running();
        let scope = MemberSet::full(4);
        let run = || -> Vec<usize> {
            (0..2)
                .map(|k| step_focus(&ds, &scope, None, StepMode::Random { seed: 7 }, k).unwrap())
                .collect()
        };
        assert_eq!(run(), run());
    }
}
