//! Curve and grid artifacts: ROC, PR, reliability, performance-confidence
//! histogram, accuracy-rejection curve, bandwidth assessment, threshold
//! heatmap, scatter density and feature histograms.
//!
//! Sweeps evaluate many operating points over one scope, so they go through
//! [`ScoreIndex`]: scores sorted once with per-class prefix weight sums, then
//! each operating point costs two binary searches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, RefKind, Result};
use crate::metrics::{binary_metric, BinaryMetric, MetricValue, RejectedPolicy, WeightVector};
use crate::model::{ClassifierResult, Dataset, FeatureKind, FeatureValue, Label};
use crate::select::{ClassifierResolver, MemberSet, Predicate, SelectionExpr, Slot};
use crate::trinary::{classify, OperatingPoint, Outcome, TrinaryCounts};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub param: Option<f64>,
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

/// Trapezoidal area under a piecewise-linear series.
pub fn trapezoid(points: &[CurvePoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].x - w[0].x) * (w[1].y + w[0].y) / 2.0)
        .sum()
}

/// Equal-width bins over `[lo, hi]`; bin `k` is `[edge(k), edge(k+1))`
/// except the last, which is closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    lo: f64,
    hi: f64,
    count: usize,
}

impl Binning {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("bin count must be at least 1"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!("bad bin domain [{lo}, {hi}]")));
        }
        Ok(Binning { lo, hi, count })
    }

    /// Score bins over `[0, 1]`.
    pub fn scores(count: usize) -> Result<Self> {
        Self::new(0.0, 1.0, count)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn edge(&self, k: usize) -> f64 {
        if k >= self.count {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / self.count as f64
        }
    }

    /// Bin index of `v`, consistent with `edge` comparisons.
    pub fn bin_of(&self, v: f64) -> usize {
        if self.hi == self.lo {
            return 0;
        }
        let last = self.count - 1;
        let guess = ((v - self.lo) / (self.hi - self.lo) * self.count as f64).floor();
        let mut k = if guess <= 0.0 { 0 } else { (guess as usize).min(last) };
        while k > 0 && v < self.edge(k) {
            k -= 1;
        }
        while k < last && v >= self.edge(k + 1) {
            k += 1;
        }
        k
    }
}

/// Predicate addressing score bin `k` of a `[0, 1]` binning.
pub fn score_bin_predicate(classifier: &str, bins: &Binning, k: usize) -> Predicate {
    Predicate::ScoreRange {
        classifier: classifier.to_owned(),
        lo: bins.edge(k),
        hi: bins.edge(k + 1),
        bin: Some(k),
    }
}

fn scope_indices(dataset: &Dataset, scope: Option<&MemberSet>) -> Vec<usize> {
    match scope {
        Some(s) => s.iter().collect(),
        None => (0..dataset.len()).collect(),
    }
}

fn weight(weights: Option<&WeightVector>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w.get(i))
}

// ---------------------------------------------------------------------------
// Score index
// ---------------------------------------------------------------------------

/// Scores of one classifier over one scope, sorted ascending, with prefix
/// sums of positive and negative weight.
#[derive(Debug, Clone)]
pub struct ScoreIndex {
    scores: Vec<f64>,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl ScoreIndex {
    pub fn build(
        dataset: &Dataset,
        classifier: &ClassifierResult,
        scope: Option<&MemberSet>,
        weights: Option<&WeightVector>,
    ) -> Self {
        let scores = classifier.scores();
        let labels = dataset.labels();
        let mut items: Vec<(f64, Label, f64)> = scope_indices(dataset, scope)
            .into_iter()
            .map(|i| (scores[i], labels[i], weight(weights, i)))
            .collect();
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pos = Vec::with_capacity(items.len() + 1);
        let mut neg = Vec::with_capacity(items.len() + 1);
        let (mut p, mut q) = (0.0, 0.0);
        pos.push(p);
        neg.push(q);
        for &(_, label, w) in &items {
            if label.is_positive() {
                p += w;
            } else {
                q += w;
            }
            pos.push(p);
            neg.push(q);
        }
        ScoreIndex {
            scores: items.into_iter().map(|(s, _, _)| s).collect(),
            pos,
            neg,
        }
    }

    #[inline]
    fn below(&self, x: f64) -> usize {
        self.scores.partition_point(|&s| s < x)
    }

    pub fn counts(&self, op: &OperatingPoint) -> TrinaryCounts {
        let n = self.scores.len();
        let lo = self.below(op.lower());
        let hi = lo + self.scores[lo..].partition_point(|&s| s < op.upper());
        let rejected = (self.pos[hi] - self.pos[lo]) + (self.neg[hi] - self.neg[lo]);
        TrinaryCounts {
            tp: self.pos[n] - self.pos[hi],
            fp: self.neg[n] - self.neg[hi],
            tn: self.neg[lo],
            fn_: self.pos[lo],
            rejected,
            total: self.pos[n] + self.neg[n],
        }
    }
}

// ---------------------------------------------------------------------------
// ROC / PR
// ---------------------------------------------------------------------------

/// Per distinct threshold, descending: (threshold, tp, fp), unweighted.
fn threshold_sweep(dataset: &Dataset, classifier: &ClassifierResult, scope: Option<&MemberSet>) -> Result<(Vec<(f64, u64, u64)>, u64, u64)> {
    let scores = classifier.scores();
    let labels = dataset.labels();
    let mut items: Vec<(f64, bool)> = scope_indices(dataset, scope)
        .into_iter()
        .map(|i| (scores[i], labels[i].is_positive()))
        .collect();
    let p = items.iter().filter(|x| x.1).count() as u64;
    let n = items.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::Undefined("curve needs both classes in scope".into()));
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut out = Vec::new();
    for group in items.chunk_by(|a, b| a.0 == b.0) {
        for &(_, positive) in group {
            if positive {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        out.push((group[0].0, tp, fp));
    }
    Ok((out, p, n))
}

/// ROC as (FPR, TPR, threshold) from `(0, 0)` through one point per
/// distinct score to `(1, 1)`. Unweighted.
pub fn roc_curve(dataset: &Dataset, classifier: &ClassifierResult, scope: Option<&MemberSet>) -> Result<CurveSeries> {
    let (sweep, p, n) = threshold_sweep(dataset, classifier, scope)?;
    let mut points = Vec::with_capacity(sweep.len() + 1);
    points.push(CurvePoint {
        x: 0.0,
        y: 0.0,
        param: None,
        undefined: false,
    });
    points.extend(sweep.into_iter().map(|(t, tp, fp)| CurvePoint {
        x: fp as f64 / n as f64,
        y: tp as f64 / p as f64,
        param: Some(t),
        undefined: false,
    }));
    Ok(CurveSeries {
        label: classifier.name.clone(),
        points,
    })
}

/// PR as (recall, precision, threshold). The leading recall-0 anchor has no
/// predicted positives; it is flagged and carries the precision of the
/// highest threshold.
pub fn pr_curve(dataset: &Dataset, classifier: &ClassifierResult, scope: Option<&MemberSet>) -> Result<CurveSeries> {
    let (sweep, p, _) = threshold_sweep(dataset, classifier, scope)?;
    let mut points: Vec<CurvePoint> = sweep
        .into_iter()
        .map(|(t, tp, fp)| CurvePoint {
            x: tp as f64 / p as f64,
            y: tp as f64 / (tp + fp) as f64,
            param: Some(t),
            undefined: false,
        })
        .collect();
    let anchor = CurvePoint {
        x: 0.0,
        y: points[0].y,
        param: None,
        undefined: true,
    };
    points.insert(0, anchor);
    Ok(CurveSeries {
        label: classifier.name.clone(),
        points,
    })
}

// ---------------------------------------------------------------------------
// Reliability / performance-confidence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReliabilityMode {
    /// Fraction of bin members with the positive label.
    #[default]
    FractionPositive,
    /// Fraction of accepted bin members predicted correctly.
    PercentCorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub mean_score: Option<f64>,
    pub value: f64,
    pub count: usize,
    pub undefined: bool,
}

pub fn reliability_curve(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    bins: &Binning,
    mode: ReliabilityMode,
    scope: Option<&MemberSet>,
    op: Option<&OperatingPoint>,
) -> Result<Vec<ReliabilityBin>> {
    let op = match (mode, op) {
        (ReliabilityMode::PercentCorrect, None) => {
            return Err(Error::invalid("percent-correct reliability needs an operating point"))
        }
        (_, op) => op,
    };
    let scores = classifier.scores();
    let labels = dataset.labels();
    let k = bins.count();
    let mut count = vec![0usize; k];
    let mut score_sum = vec![0.0f64; k];
    let mut hits = vec![0usize; k];
    let mut denom = vec![0usize; k];
    for i in scope_indices(dataset, scope) {
        let b = bins.bin_of(scores[i]);
        count[b] += 1;
        score_sum[b] += scores[i];
        match mode {
            ReliabilityMode::FractionPositive => {
                denom[b] += 1;
                hits[b] += usize::from(labels[i].is_positive());
            }
            ReliabilityMode::PercentCorrect => {
                let op = op.expect("checked above");
                if let Some(correct) = classify(scores[i], labels[i], op).is_correct() {
                    denom[b] += 1;
                    hits[b] += usize::from(correct);
                }
            }
        }
    }
    Ok((0..k)
        .map(|b| ReliabilityBin {
            bin: b,
            lower: bins.edge(b),
            upper: bins.edge(b + 1),
            mean_score: (count[b] > 0).then(|| score_sum[b] / count[b] as f64),
            value: if denom[b] > 0 { hits[b] as f64 / denom[b] as f64 } else { 0.0 },
            count: count[b],
            undefined: denom[b] == 0,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfConfBin {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub counts: TrinaryCounts,
}

impl PerfConfBin {
    /// Expression addressing one stacked segment: this score bin and outcome.
    pub fn segment(&self, classifier: &str, outcome: Outcome) -> SelectionExpr {
        SelectionExpr::intersection(vec![
            Predicate::ScoreRange {
                classifier: classifier.to_owned(),
                lo: self.lower,
                hi: self.upper,
                bin: Some(self.bin),
            }
            .into(),
            Predicate::Outcome {
                classifier: classifier.to_owned(),
                category: outcome,
            }
            .into(),
        ])
    }
}

/// Items per score bin, stacked by outcome at `op`.
pub fn perf_conf_histogram(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    op: &OperatingPoint,
    bins: &Binning,
    scope: Option<&MemberSet>,
    weights: Option<&WeightVector>,
) -> Vec<PerfConfBin> {
    let scores = classifier.scores();
    let labels = dataset.labels();
    let mut out: Vec<PerfConfBin> = (0..bins.count())
        .map(|b| PerfConfBin {
            bin: b,
            lower: bins.edge(b),
            upper: bins.edge(b + 1),
            counts: TrinaryCounts::default(),
        })
        .collect();
    for i in scope_indices(dataset, scope) {
        let b = bins.bin_of(scores[i]);
        out[b].counts.add(classify(scores[i], labels[i], op), weight(weights, i));
    }
    out
}

// ---------------------------------------------------------------------------
// Rejection sweeps
// ---------------------------------------------------------------------------

/// Accuracy-rejection style curve: symmetric bands `(t - b, t + b)` with `b`
/// swept over `steps` values from 0 to `max(t, 1 - t)`. Points are
/// (rejection rate, metric on accepted items, bandwidth), ordered by x; on
/// duplicate x the largest bandwidth is kept.
#[allow(clippy::too_many_arguments)]
pub fn rejection_curve(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    threshold: f64,
    metric: BinaryMetric,
    policy: RejectedPolicy,
    scope: Option<&MemberSet>,
    weights: Option<&WeightVector>,
    steps: usize,
) -> Result<CurveSeries> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    if steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    let index = ScoreIndex::build(dataset, classifier, scope, weights);
    let bmax = threshold.max(1.0 - threshold);
    let mut points: Vec<CurvePoint> = Vec::with_capacity(steps);
    for k in 0..steps {
        let b = if steps == 1 { 0.0 } else { bmax * k as f64 / (steps - 1) as f64 };
        let op = OperatingPoint::symmetric(threshold, b)?;
        let c = index.counts(&op);
        let v = binary_metric(&c.into(), metric, policy)?;
        let (x, x_undefined) = if c.total > 0.0 { (c.rejected / c.total, false) } else { (0.0, true) };
        points.push(CurvePoint {
            x,
            y: v.value,
            param: Some(b),
            undefined: v.undefined || x_undefined,
        });
    }
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut deduped: Vec<CurvePoint> = Vec::with_capacity(points.len());
    for p in points {
        match deduped.last_mut() {
            Some(last) if last.x == p.x => *last = p,
            _ => deduped.push(p),
        }
    }
    Ok(CurveSeries {
        label: format!("{}@{threshold}", classifier.name),
        points: deduped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMark {
    pub bandwidth: f64,
    /// Accuracy with rejected items counted as correct; `None` for other
    /// metrics.
    pub upper: Option<f64>,
    /// Accuracy with rejected items counted as incorrect.
    pub lower: Option<f64>,
    pub rejected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPoint {
    pub threshold: f64,
    pub center: f64,
    pub undefined: bool,
    pub bands: Vec<BandMark>,
}

/// For thresholds `j / resolution`, the plain-threshold metric and, per
/// bandwidth, its value with rejected items counted correct (upper) or
/// incorrect (lower). Only accuracy defines those policies, so the marks are
/// `None` for other metrics.
pub fn bandwidth_series(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    bandwidths: &[f64],
    metric: BinaryMetric,
    resolution: usize,
    scope: Option<&MemberSet>,
    weights: Option<&WeightVector>,
) -> Result<Vec<BandwidthPoint>> {
    if resolution == 0 {
        return Err(Error::invalid("resolution must be at least 1"));
    }
    if let Some(b) = bandwidths.iter().find(|b| !(**b >= 0.0)) {
        return Err(Error::invalid(format!("bandwidth {b} must be non-negative")));
    }
    let index = ScoreIndex::build(dataset, classifier, scope, weights);
    (0..=resolution)
        .map(|j| {
            let t = j as f64 / resolution as f64;
            let center = binary_metric(&index.counts(&OperatingPoint::threshold(t)?).into(), metric, RejectedPolicy::Exclude)?;
            let bands = bandwidths
                .iter()
                .map(|&b| {
                    let c = index.counts(&OperatingPoint::symmetric(t, b)?);
                    let mark = |policy| -> Result<Option<f64>> {
                        if metric != BinaryMetric::Accuracy {
                            return Ok(None);
                        }
                        Ok(Some(binary_metric(&c.into(), metric, policy)?.value))
                    };
                    Ok(BandMark {
                        bandwidth: b,
                        upper: mark(RejectedPolicy::AsCorrect)?,
                        lower: mark(RejectedPolicy::AsIncorrect)?,
                        rejected: c.rejected,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BandwidthPoint {
                threshold: t,
                center: center.value,
                undefined: center.undefined,
                bands,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub lower: f64,
    pub upper: f64,
    pub value: f64,
    pub coverage: f64,
    pub undefined: bool,
}

/// Metric over accepted items for every `lower <= upper` pair on the
/// `(resolution + 1)^2` lattice `k / resolution`.
pub fn threshold_grid(
    dataset: &Dataset,
    classifier: &ClassifierResult,
    metric: BinaryMetric,
    resolution: usize,
    scope: Option<&MemberSet>,
    weights: Option<&WeightVector>,
) -> Result<Vec<HeatmapCell>> {
    if resolution == 0 {
        return Err(Error::invalid("resolution must be at least 1"));
    }
    let index = ScoreIndex::build(dataset, classifier, scope, weights);
    let lattice = |k: usize| k as f64 / resolution as f64;
    let mut cells = Vec::with_capacity((resolution + 1) * (resolution + 2) / 2);
    for i in 0..=resolution {
        for j in i..=resolution {
            let c = index.counts(&OperatingPoint::new(lattice(i), lattice(j))?);
            let v: MetricValue = binary_metric(&c.into(), metric, RejectedPolicy::Exclude)?;
            let accepted = c.total - c.rejected;
            cells.push(HeatmapCell {
                lower: lattice(i),
                upper: lattice(j),
                value: v.value,
                coverage: if c.total > 0.0 { accepted / c.total } else { 0.0 },
                undefined: v.undefined || c.total == 0.0,
            });
        }
    }
    Ok(cells)
}

// ---------------------------------------------------------------------------
// Scatter / feature histograms
// ---------------------------------------------------------------------------

/// A numeric variable: a classifier's scores or a numeric feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum Variable {
    Score(String),
    Feature(String),
}

impl Variable {
    /// `score:<classifier>` or `feature:<name>`.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_prefix("score:") {
            Ok(Variable::Score(name.to_owned()))
        } else if let Some(name) = s.strip_prefix("feature:") {
            Ok(Variable::Feature(name.to_owned()))
        } else {
            Err(Error::invalid(format!(
                "variable `{s}` must be `score:<classifier>` or `feature:<name>`"
            )))
        }
    }

    pub fn values(&self, dataset: &Dataset, resolver: &dyn ClassifierResolver) -> Result<Vec<Option<f64>>> {
        match self {
            Variable::Score(name) => {
                let (c, _) = resolver
                    .resolve(name)
                    .ok_or_else(|| Error::unknown(RefKind::Classifier, name))?;
                Ok(c.scores().iter().map(|&s| Some(s)).collect())
            }
            Variable::Feature(name) => {
                if dataset.require_feature(name)? != FeatureKind::Numeric {
                    return Err(Error::NotNumeric(name.clone()));
                }
                Ok((0..dataset.len())
                    .map(|i| dataset.feature(i, name).and_then(FeatureValue::as_number))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterOverlay {
    pub slot: Slot,
    pub points: Vec<ScatterPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterGrid {
    pub x: Axis,
    pub y: Axis,
    /// Row-major by y bin: `counts[iy][ix]`.
    pub counts: Vec<Vec<u64>>,
    pub overlays: Vec<ScatterOverlay>,
}

fn observed_range(values: &[Option<f64>]) -> (f64, f64) {
    let mut it = values.iter().flatten().copied();
    match it.next() {
        Some(first) => it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))),
        None => (0.0, 0.0),
    }
}

/// Binned density of two numeric variables over their observed ranges,
/// plus exact coordinates of slot-selection members.
pub fn scatter_bins(
    dataset: &Dataset,
    resolver: &dyn ClassifierResolver,
    x: &Variable,
    y: &Variable,
    resolution: (usize, usize),
    scope: Option<&MemberSet>,
    overlays: &[(Slot, &MemberSet)],
) -> Result<ScatterGrid> {
    let (nx, ny) = resolution;
    let xs = x.values(dataset, resolver)?;
    let ys = y.values(dataset, resolver)?;
    let (xlo, xhi) = observed_range(&xs);
    let (ylo, yhi) = observed_range(&ys);
    let xb = Binning::new(xlo, xhi, nx)?;
    let yb = Binning::new(ylo, yhi, ny)?;
    let mut counts = vec![vec![0u64; nx]; ny];
    let scoped = scope_indices(dataset, scope);
    for &i in &scoped {
        if let (Some(vx), Some(vy)) = (xs[i], ys[i]) {
            counts[yb.bin_of(vy)][xb.bin_of(vx)] += 1;
        }
    }
    let overlays = overlays
        .iter()
        .map(|(slot, members)| ScatterOverlay {
            slot: *slot,
            points: scoped
                .iter()
                .filter(|&&i| members.contains(i))
                .filter_map(|&i| {
                    Some(ScatterPoint {
                        id: dataset.instance(i).id.clone(),
                        x: xs[i]?,
                        y: ys[i]?,
                    })
                })
                .collect(),
        })
        .collect();
    Ok(ScatterGrid {
        x: Axis { lo: xlo, hi: xhi, bins: nx },
        y: Axis { lo: ylo, hi: yhi, bins: ny },
        counts,
        overlays,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBar {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub count: usize,
    /// Per selection id, how many of this bar's items it contains.
    pub overlap: Vec<(String, usize)>,
    pub predicate: SelectionExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureHistogram {
    pub feature: String,
    pub kind: FeatureKind,
    pub bars: Vec<HistogramBar>,
    /// Scoped items with no value for the feature.
    pub absent: usize,
}

/// Numeric features: `bins` equal-width bars over the dataset-wide observed
/// range. Categorical features: one bar per category in first-seen order.
pub fn feature_histogram(
    dataset: &Dataset,
    feature: &str,
    bins: usize,
    scope: Option<&MemberSet>,
    selections: &[(&str, &MemberSet)],
) -> Result<FeatureHistogram> {
    let kind = dataset.require_feature(feature)?;
    let scoped = scope_indices(dataset, scope);
    let mut absent = 0;
    let mut bars = Vec::new();
    let mut members: Vec<Vec<usize>>;
    match kind {
        FeatureKind::Numeric => {
            let values: Vec<Option<f64>> = (0..dataset.len())
                .map(|i| dataset.feature(i, feature).and_then(FeatureValue::as_number))
                .collect();
            let (lo, hi) = observed_range(&values);
            let binning = Binning::new(lo, hi, if lo == hi { 1 } else { bins })?;
            let k = binning.count();
            members = vec![Vec::new(); k];
            for &i in &scoped {
                match values[i] {
                    Some(v) => members[binning.bin_of(v)].push(i),
                    None => absent += 1,
                }
            }
            for b in 0..k {
                let (a, z) = (binning.edge(b), binning.edge(b + 1));
                let range = |lo: f64, hi: f64| -> SelectionExpr {
                    Predicate::FeatureRange {
                        name: feature.to_owned(),
                        lo,
                        hi,
                    }
                    .into()
                };
                let predicate = if b + 1 == k {
                    range(a, z)
                } else {
                    SelectionExpr::difference(range(a, z), range(z, z))
                };
                bars.push((format!("[{a}, {z}{}", if b + 1 == k { "]" } else { ")" }), Some(a), Some(z), predicate));
            }
        }
        FeatureKind::Categorical => {
            let mut order: Vec<FeatureValue> = Vec::new();
            for i in 0..dataset.len() {
                if let Some(v) = dataset.feature(i, feature) {
                    if !order.contains(v) {
                        order.push(v.clone());
                    }
                }
            }
            members = vec![Vec::new(); order.len()];
            for &i in &scoped {
                match dataset.feature(i, feature) {
                    Some(v) => {
                        let b = order.iter().position(|o| o == v).expect("category was collected");
                        members[b].push(i);
                    }
                    None => absent += 1,
                }
            }
            for v in order {
                let predicate = Predicate::FeatureEquals {
                    name: feature.to_owned(),
                    value: v.clone(),
                }
                .into();
                bars.push((v.to_string(), None, None, predicate));
            }
        }
    }
    let bars = bars
        .into_iter()
        .zip(members)
        .map(|((label, lower, upper, predicate), items)| HistogramBar {
            label,
            lower,
            upper,
            count: items.len(),
            overlap: selections
                .iter()
                .map(|(id, sel)| ((*id).to_owned(), items.iter().filter(|&&i| sel.contains(i)).count()))
                .collect(),
            predicate,
        })
        .collect();
    Ok(FeatureHistogram {
        feature: feature.to_owned(),
        kind,
        bars,
        absent,
    })
}
