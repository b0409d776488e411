//! Seeded partitions and bootstrap variants.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)` and draws
//! run over instances in ascending id order, so results depend only on the
//! seed, the sample request and the dataset contents. Bootstrap variants are
//! integer weight vectors, not duplicated instances.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::ScoreIndex;
use crate::error::{Error, Result};
use crate::metrics::{binary_metric, brier, weighted_auc, MetricId, MetricValue, RejectedPolicy, WeightVector};
use crate::model::{ClassifierResult, Dataset};
use crate::select::MemberSet;
use crate::trinary::OperatingPoint;

/// What to stratify a partition by. Wire form: `"none"`, `"class"` or
/// `"feature:<name>"`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Stratify {
    #[default]
    None,
    Class,
    Feature(String),
}

impl TryFrom<String> for Stratify {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.as_str() {
            "none" => Ok(Stratify::None),
            "class" => Ok(Stratify::Class),
            _ => match s.strip_prefix("feature:") {
                Some(name) if !name.is_empty() => Ok(Stratify::Feature(name.to_owned())),
                _ => Err(format!("stratify must be `none`, `class` or `feature:<name>`, got `{s}`")),
            },
        }
    }
}

impl From<Stratify> for String {
    fn from(s: Stratify) -> String {
        match s {
            Stratify::None => "none".into(),
            Stratify::Class => "class".into(),
            Stratify::Feature(name) => format!("feature:{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SampleSpec {
    Partition {
        fraction: f64,
        #[serde(default)]
        stratify: Stratify,
        seed: u64,
    },
    Bootstrap {
        /// Number of draws; defaults to the dataset size.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        size: Option<usize>,
        seed: u64,
    },
}

impl SampleSpec {
    pub fn seed(&self) -> u64 {
        match self {
            SampleSpec::Partition { seed, .. } | SampleSpec::Bootstrap { seed, .. } => *seed,
        }
    }
}

/// A realized sample, addressed by instance id so it replays on any
/// implementation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SampleResult {
    Partition {
        seed: u64,
        a: Vec<String>,
        b: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    Bootstrap {
        seed: u64,
        multiplicity: BTreeMap<String, u32>,
    },
}

impl SampleResult {
    pub fn seed(&self) -> u64 {
        match self {
            SampleResult::Partition { seed, .. } | SampleResult::Bootstrap { seed, .. } => *seed,
        }
    }

    /// Member sets of both sides of a partition.
    pub fn partition_sets(&self, dataset: &Dataset) -> Result<(MemberSet, MemberSet)> {
        match self {
            SampleResult::Partition { a, b, .. } => {
                let set = |ids: &[String]| -> Result<MemberSet> {
                    let idx = ids.iter().map(|id| dataset.require_index(id)).collect::<Result<Vec<_>>>()?;
                    Ok(MemberSet::from_indices(dataset.len(), idx))
                };
                Ok((set(a)?, set(b)?))
            }
            SampleResult::Bootstrap { .. } => Err(Error::invalid("sample is not a partition")),
        }
    }

    /// Multiplicities of a bootstrap sample as a weight vector; ids not
    /// listed get weight 0.
    pub fn weights(&self, dataset: &Dataset) -> Result<WeightVector> {
        match self {
            SampleResult::Bootstrap { multiplicity, .. } => {
                let mut counts = vec![0u32; dataset.len()];
                for (id, &m) in multiplicity {
                    counts[dataset.require_index(id)?] = m;
                }
                Ok(WeightVector::from_multiplicity(&counts))
            }
            SampleResult::Partition { .. } => Err(Error::invalid("sample is not a bootstrap variant")),
        }
    }
}

pub fn sample(dataset: &Dataset, spec: &SampleSpec) -> Result<SampleResult> {
    match spec {
        SampleSpec::Partition { fraction, stratify, seed } => partition(dataset, *fraction, stratify, *seed),
        SampleSpec::Bootstrap { size, seed } => {
            let counts = bootstrap(dataset, *size, *seed)?;
            Ok(SampleResult::Bootstrap {
                seed: *seed,
                multiplicity: (0..dataset.len())
                    .map(|i| (dataset.instance(i).id.clone(), counts[i]))
                    .collect(),
            })
        }
    }
}

fn ids_of(dataset: &Dataset, mut indices: Vec<usize>) -> Vec<String> {
    indices.sort_by(|&x, &y| dataset.instance(x).id.cmp(&dataset.instance(y).id));
    indices.into_iter().map(|i| dataset.instance(i).id.clone()).collect()
}

/// Split the dataset into A (about `fraction` of the items) and B.
pub fn partition(dataset: &Dataset, fraction: f64, stratify: &Stratify, seed: u64) -> Result<SampleResult> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} must lie in (0, 1)")));
    }
    let n = dataset.len();
    if fraction * (n as f64) < 1.0 {
        return Err(Error::EmptyPartition(format!(
            "fraction {fraction} of {n} items selects nothing"
        )));
    }
    let target = (fraction * n as f64).round() as usize;
    if target >= n {
        return Err(Error::EmptyPartition(format!(
            "fraction {fraction} of {n} items leaves the complement empty"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let strata = strata(dataset, stratify, &mut warnings)?;

    let quotas: Vec<usize> = if strata.len() == 1 {
        vec![target]
    } else {
        let exact: Vec<f64> = strata.iter().map(|(_, m)| fraction * m.len() as f64).collect();
        let mut quotas: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
        let remaining = target.saturating_sub(quotas.iter().sum());
        // Strata are in name order and the sort is stable, so equal
        // remainders go to the earlier name.
        let mut order: Vec<usize> = (0..strata.len()).collect();
        order.sort_by(|&x, &y| (exact[y] - quotas[y] as f64).total_cmp(&(exact[x] - quotas[x] as f64)));
        let eligible: Vec<usize> = order.into_iter().filter(|&s| quotas[s] < strata[s].1.len()).collect();
        for s in eligible.into_iter().take(remaining) {
            quotas[s] += 1;
        }
        quotas
    };

    let mut a = Vec::with_capacity(target);
    let mut b = Vec::with_capacity(n - target);
    for ((_, mut members), quota) in strata.into_iter().zip(quotas) {
        members.shuffle(&mut rng);
        let rest = members.split_off(quota);
        a.extend(members);
        b.extend(rest);
    }
    Ok(SampleResult::Partition {
        seed,
        a: ids_of(dataset, a),
        b: ids_of(dataset, b),
        warnings,
    })
}

/// Strata in name order, each with its members in id order. Items without a
/// value for a stratifying feature form the `(absent)` stratum.
fn strata(dataset: &Dataset, stratify: &Stratify, warnings: &mut Vec<String>) -> Result<Vec<(String, Vec<usize>)>> {
    let sorted = dataset.sorted_indices();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    match stratify {
        Stratify::None => {
            groups.insert(String::new(), sorted.to_vec());
        }
        Stratify::Class => {
            for name in dataset.classes() {
                groups.insert(name.clone(), Vec::new());
            }
            for &i in sorted {
                groups
                    .get_mut(dataset.class_name(dataset.labels()[i]))
                    .expect("class stratum exists")
                    .push(i);
            }
        }
        Stratify::Feature(name) => {
            dataset.require_feature(name)?;
            for &i in sorted {
                let key = dataset.feature(i, name).map_or_else(|| "(absent)".to_owned(), |v| v.to_string());
                groups.entry(key).or_default().push(i);
            }
        }
    }
    Ok(groups
        .into_iter()
        .filter(|(name, members)| {
            if members.is_empty() {
                log::warn!("stratum `{name}` has no members");
                warnings.push(format!("stratum `{name}` has no members and was skipped"));
            }
            !members.is_empty()
        })
        .collect())
}

/// Multiplicity per dataset index after `size` uniform draws with
/// replacement (default: the dataset size).
pub fn bootstrap(dataset: &Dataset, size: Option<usize>, seed: u64) -> Result<Vec<u32>> {
    let n = dataset.len();
    let draws = size.unwrap_or(n);
    if n == 0 || draws == 0 {
        return Err(Error::invalid("bootstrap needs at least one item and one draw"));
    }
    let drawn = draw_counts(n, draws, seed);
    let mut counts = vec![0u32; n];
    for (&i, m) in dataset.sorted_indices().iter().zip(drawn) {
        counts[i] = m;
    }
    Ok(counts)
}

/// Multiplicities of `draws` uniform draws with replacement from `0..n`.
fn draw_counts(n: usize, draws: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u32; n];
    for _ in 0..draws {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "kebab-case")]
pub enum ReplicateAnalysis {
    /// Threshold maximizing MCC, reported as the midpoint between the two
    /// adjacent observed scores that bound the best interval.
    BestMccThreshold,
    MetricAtOp {
        metric: MetricId,
        #[serde(default)]
        operating_point: OperatingPoint,
        #[serde(default)]
        policy: RejectedPolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateValue {
    pub seed: u64,
    pub value: f64,
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub results: Vec<ReplicateValue>,
    /// Summary over the defined values; `None` when there are none.
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

/// Run `analysis` on the bootstrap variant of every seed, in seed order.
pub fn replicate_sweep(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    seeds: &[u64],
    analysis: &ReplicateAnalysis,
    scope: Option<&MemberSet>,
) -> Result<ReplicateSummary> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let results = seeds
        .iter()
        .map(|&seed| {
            let weights = WeightVector::from_multiplicity(&bootstrap(dataset, None, seed)?);
            let v = run_analysis(dataset, classifier, analysis, scope, &weights)?;
            Ok(ReplicateValue {
                seed,
                value: v.value,
                undefined: v.undefined,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = results.iter().filter(|r| !r.undefined).map(|r| r.value).collect();
    let (min, max, mean) = if defined.is_empty() {
        (None, None, None)
    } else {
        (
            Some(defined.iter().copied().fold(f64::INFINITY, f64::min)),
            Some(defined.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            Some(defined.iter().sum::<f64>() / defined.len() as f64),
        )
    };
    Ok(ReplicateSummary { results, min, max, mean })
}

fn run_analysis(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    analysis: &ReplicateAnalysis,
    scope: Option<&MemberSet>,
    weights: &WeightVector,
) -> Result<MetricValue> {
    match analysis {
        ReplicateAnalysis::BestMccThreshold => Ok(best_mcc_threshold(dataset, classifier, scope, weights)),
        ReplicateAnalysis::MetricAtOp {
            metric,
            operating_point,
            policy,
        } => match metric.binary() {
            Some(m) => {
                let c = ScoreIndex::build(dataset, classifier, scope, Some(weights)).counts(operating_point);
                binary_metric(&c.into(), m, *policy)
            }
            None => {
                let value = match metric {
                    MetricId::Auc => weighted_auc(dataset, classifier, scope, weights),
                    _ => brier(dataset, classifier, scope, Some(weights)),
                };
                Ok(match value {
                    Ok(v) => MetricValue { value: v, undefined: false },
                    Err(Error::Undefined(_)) => MetricValue::UNDEFINED,
                    Err(e) => return Err(e),
                })
            }
        },
    }
}

/// Best plain threshold by MCC over the items with positive weight.
///
/// Between two adjacent observed scores every threshold gives the same
/// confusion, so candidates are the midpoints of those gaps; the lowest
/// maximizing midpoint wins. Undefined with fewer than two distinct scores.
pub fn best_mcc_threshold(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    scope: Option<&MemberSet>,
    weights: &WeightVector,
) -> MetricValue {
    let scores = classifier.scores();
    let members: Vec<usize> = match scope {
        Some(s) => s.iter().filter(|&i| weights.get(i) > 0.0).collect(),
        None => (0..dataset.len()).filter(|&i| weights.get(i) > 0.0).collect(),
    };
    let mut distinct: Vec<f64> = members.iter().map(|&i| scores[i]).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let index = ScoreIndex::build(dataset, classifier, scope, Some(weights));
    let mut best: Option<(f64, f64)> = None;
    for w in distinct.windows(2) {
        let op = OperatingPoint::threshold(w[1]).expect("scores lie in [0, 1]");
        let mcc = binary_metric(&index.counts(&op).into(), crate::metrics::BinaryMetric::Mcc, RejectedPolicy::Exclude)
            .expect("exclude policy is valid for every metric");
        if mcc.undefined {
            continue;
        }
        if best.is_none_or(|(b, _)| mcc.value > b) {
            best = Some((mcc.value, (w[0] + w[1]) / 2.0));
        }
    }
    match best {
        Some((_, t)) => MetricValue { value: t, undefined: false },
        None => MetricValue::UNDEFINED,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{auc, confusion, BinaryMetric};
    use crate::model::{FeatureValue, IngestDoc, LoadOptions};
    use crate::trinary::trinary_summary;

    fn labelled(pos: usize, neg: usize) -> Dataset {
        let mut doc = IngestDoc::new("neg", "pos");
        let mut scores = Vec::new();
        for i in 0..pos + neg {
            let id = format!("item{i:03}");
            let label = if i < pos { "pos" } else { "neg" };
            doc = doc.instance(&id, label);
            scores.push((id, if i < pos { 0.8 } else { 0.2 } - (i % 5) as f64 * 0.01));
        }
        Dataset::from_ingest(doc.classifier("C", scores), &LoadOptions::default()).unwrap().0
    }

    fn sizes(r: &SampleResult) -> (usize, usize) {
        match r {
            SampleResult::Partition { a, b, .. } => (a.len(), b.len()),
            _ => panic!("not a partition"),
        }
    }

    #[test]
    fn unstratified_partition_sizes_and_determinism() {
        let d = labelled(5, 5);
        let r = partition(&d, 0.7, &Stratify::None, 9).unwrap();
        assert_eq!(sizes(&r), (7, 3));
        assert_eq!(r, partition(&d, 0.7, &Stratify::None, 9).unwrap());
        let (a, b) = r.partition_sets(&d).unwrap();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), d.len());
    }

    #[test]
    fn stratified_partition_floor_plus_remainder() {
        let d = labelled(8, 2);
        for seed in 0..20 {
            let r = partition(&d, 0.5, &Stratify::Class, seed).unwrap();
            let (a, _) = r.partition_sets(&d).unwrap();
            let pos = a.iter().filter(|&i| d.labels()[i].is_positive()).count();
            assert_eq!((pos, a.len() - pos), (4, 1));
        }
        // 7 pos / 3 neg at 0.5: quotas 3.5 and 1.5 tie, remainder 1 goes to `neg`
        let d = labelled(7, 3);
        let (a, _) = partition(&d, 0.5, &Stratify::Class, 1).unwrap().partition_sets(&d).unwrap();
        let pos = a.iter().filter(|&i| d.labels()[i].is_positive()).count();
        assert_eq!((pos, a.len() - pos), (3, 2));
    }

    #[test]
    fn stratify_by_feature_keeps_absent_values_together() {
        let doc = IngestDoc::new("n", "p")
            .instance("a", "n")
            .feature("g", FeatureValue::Category("x".into()))
            .instance("b", "p")
            .feature("g", FeatureValue::Category("x".into()))
            .instance("c", "n")
            .instance("d", "p")
            .classifier("C", [("a", 0.1), ("b", 0.2), ("c", 0.3), ("d", 0.4)]);
        let d = Dataset::from_ingest(doc, &LoadOptions::default()).unwrap().0;
        let r = partition(&d, 0.5, &Stratify::Feature("g".into()), 3).unwrap();
        let (a, _) = r.partition_sets(&d).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.iter().filter(|&i| d.feature(i, "g").is_some()).count(), 1);
        assert!(partition(&d, 0.5, &Stratify::Feature("zz".into()), 3).is_err());
    }

    #[test]
    fn empty_class_stratum_is_skipped_with_warning() {
        let d = labelled(4, 0);
        match partition(&d, 0.5, &Stratify::Class, 0).unwrap() {
            SampleResult::Partition { a, warnings, .. } => {
                assert_eq!(a.len(), 2);
                assert_eq!(warnings.len(), 1);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn partition_errors() {
        let d = labelled(2, 2);
        assert_eq!(partition(&d, 0.2, &Stratify::None, 0).unwrap_err().code(), "EMPTY_PARTITION");
        assert_eq!(partition(&d, 0.9, &Stratify::None, 0).unwrap_err().code(), "EMPTY_PARTITION");
        assert!(partition(&d, 1.0, &Stratify::None, 0).is_err());
        assert!(partition(&d, 0.0, &Stratify::None, 0).is_err());
    }

    #[test]
    fn bootstrap_multiplicities() {
        let d = labelled(50, 50);
        let m = bootstrap(&d, None, 4).unwrap();
        assert_eq!(m.iter().sum::<u32>(), 100);
        assert_eq!(m, bootstrap(&d, None, 4).unwrap());
        assert_ne!(m, bootstrap(&d, None, 5).unwrap());
        assert_eq!(bootstrap(&d, Some(7), 4).unwrap().iter().sum::<u32>(), 7);

        assert_eq!(draw_counts(1, 1, 123), [1]);
        let r = sample(&d, &SampleSpec::Bootstrap { size: None, seed: 0 }).unwrap();
        match r {
            SampleResult::Bootstrap { multiplicity, .. } => {
                assert_eq!(multiplicity.len(), 100);
                assert_eq!(multiplicity.values().sum::<u32>(), 100);
                let w = SampleResult::Bootstrap { seed: 0, multiplicity }.weights(&d).unwrap();
                assert_eq!(w, WeightVector::from_multiplicity(&bootstrap(&d, None, 0).unwrap()));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn bootstrap_weights_match_materialized_resample() {
        let d = labelled(3, 4);
        let c = d.classifier("C").unwrap();
        let op = OperatingPoint::new(0.3, 0.7).unwrap();
        for seed in 0..30 {
            let counts = bootstrap(&d, None, seed).unwrap();
            let w = WeightVector::from_multiplicity(&counts);
            let mut doc = IngestDoc::new("neg", "pos");
            let mut scores = Vec::new();
            for (i, &m) in counts.iter().enumerate() {
                for k in 0..m {
                    let id = format!("{}#{k}", d.instance(i).id);
                    doc = doc.instance(&id, d.class_name(d.labels()[i]));
                    scores.push((id, c.score(i)));
                }
            }
            let r = Dataset::from_ingest(doc.classifier("C", scores), &LoadOptions::default()).unwrap().0;
            let rc = r.classifier("C").unwrap();
            assert_eq!(trinary_summary(&d, c, &op, None, Some(&w)), trinary_summary(&r, rc, &op, None, None));
            let a = binary_metric(&confusion(&d, c, &op, None, Some(&w)), BinaryMetric::Mcc, RejectedPolicy::Exclude);
            let b = binary_metric(&confusion(&r, rc, &op, None, None), BinaryMetric::Mcc, RejectedPolicy::Exclude);
            assert_eq!(a.unwrap(), b.unwrap());
            match (weighted_auc(&d, c, None, &w), auc(&r, rc, None)) {
                (Ok(x), Ok(y)) => assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn replicate_sweep_examples() {
        let d = labelled(10, 10);
        let c = d.classifier("C").unwrap();
        let seeds: Vec<u64> = (0..10).collect();
        let s = replicate_sweep(&d, c, &seeds, &ReplicateAnalysis::BestMccThreshold, None).unwrap();
        assert_eq!(s.results.iter().map(|r| r.seed).collect::<Vec<_>>(), seeds);
        // negatives top out at 0.2, positives start at 0.76
        assert!(s.results.iter().all(|r| !r.undefined && r.value > 0.2 && r.value < 0.76));

        let doc = (0..6).fold(IngestDoc::new("n", "p"), |doc, i| doc.instance(format!("x{i}"), "p"));
        let same = Dataset::from_ingest(
            doc.classifier("C", (0..6).map(|i| (format!("x{i}"), 0.9))),
            &LoadOptions::default(),
        )
        .unwrap()
        .0;
        let analysis = ReplicateAnalysis::MetricAtOp {
            metric: MetricId::Accuracy,
            operating_point: OperatingPoint::default(),
            policy: RejectedPolicy::Exclude,
        };
        let s = replicate_sweep(&same, same.classifier("C").unwrap(), &[1, 2, 3], &analysis, None).unwrap();
        assert!(s.results.iter().all(|r| r.value == 1.0));
        assert_eq!((s.min, s.max, s.mean), (Some(1.0), Some(1.0), Some(1.0)));
        assert!(replicate_sweep(&same, same.classifier("C").unwrap(), &[], &analysis, None).is_err());
    }

    #[test]
    fn spec_wire_format() {
        let spec: SampleSpec =
            serde_json::from_str(r#"{"kind":"partition","fraction":0.3,"stratify":"feature:sex","seed":7}"#).unwrap();
        assert_eq!(
            spec,
            SampleSpec::Partition {
                fraction: 0.3,
                stratify: Stratify::Feature("sex".into()),
                seed: 7
            }
        );
        let spec: SampleSpec = serde_json::from_str(r#"{"kind":"bootstrap","seed":1}"#).unwrap();
        assert_eq!(spec.seed(), 1);
        assert!(serde_json::from_str::<SampleSpec>(r#"{"kind":"partition","fraction":0.3,"stratify":"age","seed":7}"#).is_err());
    }
}
