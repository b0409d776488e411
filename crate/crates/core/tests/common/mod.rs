//! Random dataset generators and brute-force oracles shared by the
//! integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use cbx_core::model::{Dataset, FeatureValue, IngestDoc, Label, LoadOptions};
use cbx_core::select::{Predicate, SelectionExpr, SetOp};
use cbx_core::trinary::{OperatingPoint, Outcome};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const CLASSIFIERS: [&str; 2] = ["A", "B"];
pub const GROUPS: [&str; 3] = ["red", "green", "blue"];

/// Random scores on a coarse lattice so ties and exact threshold hits are
/// common.
pub fn grid_score(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0..=20) as f64 / 20.0
}

pub fn grid_point(rng: &mut ChaCha8Rng) -> OperatingPoint {
    let a = grid_score(rng);
    let b = grid_score(rng);
    OperatingPoint::new(a.min(b), a.max(b)).unwrap()
}

/// Dataset of `n` items with two classifiers, a numeric feature `age`
/// (absent on some items other than the first) and a categorical feature
/// `group`.
pub fn random_doc(rng: &mut ChaCha8Rng, n: usize) -> IngestDoc {
    let mut doc = IngestDoc::new("neg", "pos");
    for i in 0..n {
        let label = if rng.random_bool(0.5) { "pos" } else { "neg" };
        doc = doc.instance(format!("i{i:03}"), label);
        if i == 0 || rng.random_bool(0.9) {
            doc = doc.feature("age", FeatureValue::Number(rng.random_range(18..=80) as f64));
        }
        doc = doc.feature("group", FeatureValue::Category(GROUPS[rng.random_range(0..3)].into()));
    }
    for name in CLASSIFIERS {
        let scores: Vec<(String, f64)> = (0..n).map(|i| (format!("i{i:03}"), grid_score(rng))).collect();
        doc = doc.classifier(name, scores);
    }
    doc
}

pub fn load(doc: IngestDoc) -> Dataset {
    let (d, report) = Dataset::from_ingest(doc, &LoadOptions::default()).expect("generated dataset loads");
    assert!(report.is_accepted());
    d
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    load(random_doc(rng, n))
}

/// The decision rule written out directly.
pub fn oracle_outcome(score: f64, label: Label, lower: f64, upper: f64) -> Outcome {
    match (score >= upper, score < lower, label) {
        (true, _, Label::Positive) => Outcome::TP,
        (true, _, Label::Negative) => Outcome::FP,
        (false, true, Label::Negative) => Outcome::TN,
        (false, true, Label::Positive) => Outcome::FN,
        (false, false, _) => Outcome::Rejected,
    }
}

/// Random expression over the predicates of [`random_doc`] datasets.
pub fn random_expr(rng: &mut ChaCha8Rng, depth: u32, ids: &[String]) -> SelectionExpr {
    if depth == 0 || rng.random_bool(0.3) {
        return random_predicate(rng, ids).into();
    }
    match rng.random_range(0..4) {
        0 => SelectionExpr::complement(random_expr(rng, depth - 1, ids)),
        1 => SelectionExpr::difference(random_expr(rng, depth - 1, ids), random_expr(rng, depth - 1, ids)),
        k => {
            let arity = rng.random_range(1..=3);
            let args = (0..arity).map(|_| random_expr(rng, depth - 1, ids)).collect();
            if k == 2 {
                SelectionExpr::union(args)
            } else {
                SelectionExpr::intersection(args)
            }
        }
    }
}

pub fn random_predicate(rng: &mut ChaCha8Rng, ids: &[String]) -> Predicate {
    let classifier = CLASSIFIERS[rng.random_range(0..2)].to_owned();
    match rng.random_range(0..6) {
        0 => {
            let a = grid_score(rng);
            let b = grid_score(rng);
            Predicate::ScoreRange {
                classifier,
                lo: a.min(b),
                hi: a.max(b),
                bin: None,
            }
        }
        1 => Predicate::Outcome {
            classifier,
            category: Outcome::ALL[rng.random_range(0..5)],
        },
        2 => Predicate::Class {
            label: if rng.random_bool(0.5) { "pos" } else { "neg" }.into(),
        },
        3 => {
            let a = rng.random_range(18..=80) as f64;
            let b = rng.random_range(18..=80) as f64;
            Predicate::FeatureRange {
                name: "age".into(),
                lo: a.min(b),
                hi: a.max(b),
            }
        }
        4 => Predicate::FeatureEquals {
            name: "group".into(),
            value: FeatureValue::Category(GROUPS[rng.random_range(0..3)].into()),
        },
        _ => Predicate::IdList {
            ids: ids.iter().filter(|_| rng.random_bool(0.3)).cloned().collect(),
        },
    }
}

/// Brute-force membership: one boolean per instance, computed without the
/// engine's bitsets.
pub fn oracle_members(
    expr: &SelectionExpr,
    dataset: &Dataset,
    points: &BTreeMap<String, OperatingPoint>,
) -> Vec<bool> {
    let n = dataset.len();
    match expr {
        SelectionExpr::Pred { pred } => (0..n).map(|i| oracle_predicate(pred, dataset, points, i)).collect(),
        SelectionExpr::Op { op, args } => {
            let sets: Vec<Vec<bool>> = args.iter().map(|a| oracle_members(a, dataset, points)).collect();
            (0..n)
                .map(|i| match op {
                    SetOp::Union => sets.iter().any(|s| s[i]),
                    SetOp::Intersection => sets.iter().all(|s| s[i]),
                    SetOp::Difference => sets[0][i] && !sets[1..].iter().any(|s| s[i]),
                    SetOp::Complement => !sets[0][i],
                })
                .collect()
        }
    }
}

fn oracle_predicate(pred: &Predicate, d: &Dataset, points: &BTreeMap<String, OperatingPoint>, i: usize) -> bool {
    let inst = d.instance(i);
    match pred {
        Predicate::ScoreRange { classifier, lo, hi, .. } => {
            let s = d.classifier(classifier).unwrap().score(i);
            s >= *lo && (s < *hi || (*hi >= 1.0 && s <= *hi))
        }
        Predicate::Outcome { classifier, category } => {
            let op = points.get(classifier).copied().unwrap_or_default();
            let s = d.classifier(classifier).unwrap().score(i);
            oracle_outcome(s, inst.label, op.lower(), op.upper()) == *category
        }
        Predicate::Class { label } => d.class_name(inst.label) == label,
        Predicate::FeatureRange { name, lo, hi } => {
            matches!(inst.features.get(name), Some(FeatureValue::Number(v)) if *lo <= *v && *v <= *hi)
        }
        Predicate::FeatureEquals { name, value } => inst.features.get(name) == Some(value),
        Predicate::IdList { ids } => ids.contains(&inst.id),
    }
}
