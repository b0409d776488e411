//! String-keyed curve requests against a session, shared by the HTTP
//! service and the C interface. Results are typed and serialize straight to
//! JSON with a fixed field order.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::curves::{
    bandwidth_series, feature_histogram, perf_conf_histogram, pr_curve, reliability_curve, rejection_curve, roc_curve,
    scatter_bins, threshold_grid, BandwidthPoint, Binning, CurveSeries, FeatureHistogram, HeatmapCell, PerfConfBin,
    ReliabilityBin, ReliabilityMode, ScatterGrid, Variable,
};
use crate::error::{Error, Result};
use crate::metrics::{binary_metric, BinaryMetric, MetricId, MetricValue, RejectedPolicy, WeightVector};
use crate::select::{MemberSet, Slot};
use crate::session::Session;
use crate::trinary::{trinary_summary, OperatingPoint, TrinaryCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Roc,
    Pr,
    Reliability,
    PerfConf,
    Arc,
    Bandwidth,
    Heatmap,
    Scatter,
    FeatureHistogram,
    TrinarySummary,
}

impl CurveKind {
    pub const ALL: [CurveKind; 10] = [
        CurveKind::Roc,
        CurveKind::Pr,
        CurveKind::Reliability,
        CurveKind::PerfConf,
        CurveKind::Arc,
        CurveKind::Bandwidth,
        CurveKind::Heatmap,
        CurveKind::Scatter,
        CurveKind::FeatureHistogram,
        CurveKind::TrinarySummary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Roc => "roc",
            CurveKind::Pr => "pr",
            CurveKind::Reliability => "reliability",
            CurveKind::PerfConf => "perf-conf",
            CurveKind::Arc => "arc",
            CurveKind::Bandwidth => "bandwidth",
            CurveKind::Heatmap => "heatmap",
            CurveKind::Scatter => "scatter",
            CurveKind::FeatureHistogram => "feature-histogram",
            CurveKind::TrinarySummary => "trinary-summary",
        }
    }

    fn accepts(self, key: &str) -> bool {
        const SHARED: &[&str] = &["classifier", "selection", "weights", "sample"];
        let own: &[&str] = match self {
            CurveKind::Roc | CurveKind::Pr => &[],
            CurveKind::Reliability => &["bins", "mode", "lower", "upper"],
            CurveKind::PerfConf => &["bins", "lower", "upper"],
            CurveKind::Arc => &["threshold", "metric", "policy", "steps"],
            CurveKind::Bandwidth => &["bandwidths", "metric", "resolution"],
            CurveKind::Heatmap => &["metric", "resolution"],
            CurveKind::Scatter => &["x", "y", "bins", "resolution"],
            CurveKind::FeatureHistogram => &["feature", "bins"],
            CurveKind::TrinarySummary => &["lower", "upper", "policy"],
        };
        SHARED.contains(&key) || own.contains(&key)
    }
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CurveKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::not_found("curve kind", s))
    }
}

/// Query parameters of a curve request.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CurveQuery(BTreeMap<String, String>);

impl CurveQuery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_owned(), value.to_string());
        self
    }

    /// Parse `a=1&b=2` (no percent-decoding beyond what callers already did).
    pub fn parse(query: &str) -> Result<Self> {
        let mut q = CurveQuery::new();
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("malformed query pair `{pair}`")))?;
            q.0.insert(k.to_owned(), v.to_owned());
        }
        Ok(q)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::invalid(format!("cannot parse `{key}` value `{v}`")))
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| v.split(',').filter(|s| !s.is_empty()).map(str::to_owned).collect())
            .unwrap_or_default()
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::invalid(format!("missing query parameter `{key}`")))
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for CurveQuery {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        CurveQuery(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

fn metric_param(q: &CurveQuery) -> Result<BinaryMetric> {
    q.parsed::<MetricId>("metric")?
        .map_or(Ok(BinaryMetric::Accuracy), MetricId::require_binary)
}

fn policy_param(q: &CurveQuery) -> Result<RejectedPolicy> {
    match q.get("policy") {
        None => Ok(RejectedPolicy::Exclude),
        Some(p) => serde_json::from_value(Value::String(p.to_owned()))
            .map_err(|_| Error::invalid(format!("unknown rejected policy `{p}`"))),
    }
}

fn mode_param(q: &CurveQuery) -> Result<ReliabilityMode> {
    match q.get("mode") {
        None => Ok(ReliabilityMode::FractionPositive),
        Some(m) => serde_json::from_value(Value::String(m.to_owned()))
            .map_err(|_| Error::invalid(format!("unknown reliability mode `{m}`"))),
    }
}

fn point_override(q: &CurveQuery) -> Result<Option<OperatingPoint>> {
    match (q.parsed::<f64>("lower")?, q.parsed::<f64>("upper")?) {
        (None, None) => Ok(None),
        (Some(l), Some(u)) => OperatingPoint::new(l, u).map(Some),
        _ => Err(Error::invalid("`lower` and `upper` must be given together")),
    }
}

/// One per-classifier entry of a curve response.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CurveEntry {
    Series(CurveSeries),
    Reliability {
        classifier: String,
        bins: Vec<ReliabilityBin>,
    },
    PerfConf {
        classifier: String,
        operating_point: OperatingPoint,
        version: u64,
        bins: Vec<PerfConfBin>,
    },
    Bandwidth {
        classifier: String,
        metric: &'static str,
        points: Vec<BandwidthPoint>,
    },
    Heatmap {
        classifier: String,
        metric: &'static str,
        resolution: usize,
        cells: Vec<HeatmapCell>,
    },
    TrinarySummary {
        classifier: String,
        operating_point: OperatingPoint,
        version: u64,
        counts: TrinaryCounts,
        /// `None` where the rejected policy does not apply to the metric.
        metrics: BTreeMap<&'static str, Option<MetricValue>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveBody {
    Series(Vec<CurveEntry>),
    Grid(ScatterGrid),
    Histogram(FeatureHistogram),
}

/// Wire form: `{"kind": ..., "series" | "grid" | "histogram": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveOutput {
    pub kind: &'static str,
    #[serde(flatten)]
    pub body: CurveBody,
}

impl CurveOutput {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("curve payloads serialize")
    }
}

/// Compute curve `kind` for `query` against the current session state.
pub fn curve(session: &Session, kind: CurveKind, query: &CurveQuery) -> Result<CurveOutput> {
    if let Some(bad) = query.0.keys().find(|k| !kind.accepts(k)) {
        return Err(Error::invalid(format!("`{bad}` is not a parameter of {} curves", kind.as_str())));
    }
    let dataset = session.dataset();
    let scope: Option<MemberSet> = session.scope(query.get("selection"))?;
    let scope = scope.as_ref();
    let weights: Option<WeightVector> = session.weights(&query.list("weights"), query.get("sample"))?;
    let weights = weights.as_ref();
    let classifiers: Vec<String> = match query.list("classifier") {
        names if names.is_empty() => session.classifiers().map(|c| c.name.clone()).collect(),
        names => names,
    };
    let resolved = classifiers
        .iter()
        .map(|name| Ok((session.classifier(name)?, session.operating_point(name)?)))
        .collect::<Result<Vec<_>>>()?;
    let bins = || -> Result<Binning> { Binning::scores(query.parsed("bins")?.unwrap_or(10)) };

    let series: Vec<CurveEntry> = match kind {
        CurveKind::Roc => resolved
            .iter()
            .map(|(c, _)| roc_curve(dataset, c, scope).map(CurveEntry::Series))
            .collect::<Result<_>>()?,
        CurveKind::Pr => resolved
            .iter()
            .map(|(c, _)| pr_curve(dataset, c, scope).map(CurveEntry::Series))
            .collect::<Result<_>>()?,
        CurveKind::Reliability => {
            let mode = mode_param(query)?;
            let bins = bins()?;
            let over = point_override(query)?;
            resolved
                .iter()
                .map(|(c, state)| {
                    let op = over.unwrap_or(state.point);
                    let r = reliability_curve(dataset, c, &bins, mode, scope, Some(&op))?;
                    Ok(CurveEntry::Reliability {
                        classifier: c.name.clone(),
                        bins: r,
                    })
                })
                .collect::<Result<_>>()?
        }
        CurveKind::PerfConf => {
            let bins = bins()?;
            let over = point_override(query)?;
            resolved
                .iter()
                .map(|(c, state)| {
                    let op = over.unwrap_or(state.point);
                    CurveEntry::PerfConf {
                        classifier: c.name.clone(),
                        operating_point: op,
                        version: state.version,
                        bins: perf_conf_histogram(dataset, c, &op, &bins, scope, weights),
                    }
                })
                .collect()
        }
        CurveKind::Arc => {
            let metric = metric_param(query)?;
            let policy = policy_param(query)?;
            let steps = query.parsed("steps")?.unwrap_or(101);
            let threshold: Option<f64> = query.parsed("threshold")?;
            resolved
                .iter()
                .map(|(c, state)| {
                    let t = threshold.unwrap_or(state.point.center());
                    rejection_curve(dataset, c, t, metric, policy, scope, weights, steps).map(CurveEntry::Series)
                })
                .collect::<Result<_>>()?
        }
        CurveKind::Bandwidth => {
            let metric = metric_param(query)?;
            let resolution = query.parsed("resolution")?.unwrap_or(20);
            let bandwidths = match query.get("bandwidths") {
                None => vec![0.05, 0.1, 0.2],
                Some(_) => query
                    .list("bandwidths")
                    .iter()
                    .map(|b| b.parse().map_err(|_| Error::invalid(format!("bad bandwidth `{b}`"))))
                    .collect::<Result<Vec<f64>>>()?,
            };
            resolved
                .iter()
                .map(|(c, _)| {
                    let s = bandwidth_series(dataset, c, &bandwidths, metric, resolution, scope, weights)?;
                    Ok(CurveEntry::Bandwidth {
                        classifier: c.name.clone(),
                        metric: metric.as_str(),
                        points: s,
                    })
                })
                .collect::<Result<_>>()?
        }
        CurveKind::Heatmap => {
            let metric = metric_param(query)?;
            let resolution = query.parsed("resolution")?.unwrap_or(20);
            resolved
                .iter()
                .map(|(c, _)| {
                    let cells = threshold_grid(dataset, c, metric, resolution, scope, weights)?;
                    Ok(CurveEntry::Heatmap {
                        classifier: c.name.clone(),
                        metric: metric.as_str(),
                        resolution,
                        cells,
                    })
                })
                .collect::<Result<_>>()?
        }
        CurveKind::TrinarySummary => {
            let over = point_override(query)?;
            let policy = policy_param(query)?;
            resolved
                .iter()
                .map(|(c, state)| {
                    let op = over.unwrap_or(state.point);
                    let counts = trinary_summary(dataset, c, &op, scope, weights);
                    let mut metrics = BTreeMap::new();
                    for m in BinaryMetric::ALL {
                        let v = match binary_metric(&counts.into(), m, policy) {
                            Ok(v) => Some(v),
                            Err(Error::UnsupportedPolicy { .. }) => None,
                            Err(e) => return Err(e),
                        };
                        metrics.insert(m.as_str(), v);
                    }
                    Ok(CurveEntry::TrinarySummary {
                        classifier: c.name.clone(),
                        operating_point: op,
                        version: state.version,
                        counts,
                        metrics,
                    })
                })
                .collect::<Result<_>>()?
        }
        CurveKind::Scatter => {
            let x = Variable::parse(query.require("x")?)?;
            let y = Variable::parse(query.require("y")?)?;
            let n = query.parsed("bins")?.or(query.parsed("resolution")?).unwrap_or(20);
            let slots: Vec<(Slot, &MemberSet)> = [Slot::A, Slot::B]
                .into_iter()
                .filter_map(|s| session.slot(s).map(|sel| (s, &sel.members)))
                .collect();
            let grid = scatter_bins(dataset, session, &x, &y, (n, n), scope, &slots)?;
            return Ok(CurveOutput {
                kind: kind.as_str(),
                body: CurveBody::Grid(grid),
            });
        }
        CurveKind::FeatureHistogram => {
            let feature = query.require("feature")?;
            let bins = query.parsed("bins")?.unwrap_or(10);
            let slots: Vec<(&str, &MemberSet)> = [Slot::A, Slot::B]
                .into_iter()
                .filter_map(|s| session.slot(s).map(|sel| (sel.id.as_str(), &sel.members)))
                .collect();
            let h = feature_histogram(dataset, feature, bins, scope, &slots)?;
            return Ok(CurveOutput {
                kind: kind.as_str(),
                body: CurveBody::Histogram(h),
            });
        }
    };
    Ok(CurveOutput {
        kind: kind.as_str(),
        body: CurveBody::Series(series),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, IngestDoc, LoadOptions};

    fn session() -> Session {
        let doc = IngestDoc::new("neg", "pos")
            .instance("i1", "pos")
            .instance("i2", "neg")
            .instance("i3", "neg")
            .instance("i4", "pos")
            .classifier("LR", [("i1", 0.9), ("i2", 0.8), ("i3", 0.3), ("i4", 0.1)]);
        Session::new(Dataset::from_ingest(doc, &LoadOptions::default()).unwrap().0)
    }

    #[test]
    fn arc_mcc_at_zero_rejection() {
        let s = session();
        let q = CurveQuery::new().with("classifier", "LR").with("metric", "mcc").with("threshold", 0.5);
        let v = serde_json::to_value(curve(&s, CurveKind::Arc, &q).unwrap()).unwrap();
        let p = &v["series"][0]["points"][0];
        assert_eq!((p["x"].as_f64(), p["y"].as_f64()), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn every_kind_renders() {
        let s = session();
        for kind in CurveKind::ALL {
            let q = match kind {
                CurveKind::Scatter => CurveQuery::new().with("x", "score:LR").with("y", "score:LR"),
                CurveKind::FeatureHistogram => continue,
                _ => CurveQuery::new(),
            };
            let v = serde_json::to_value(curve(&s, kind, &q).unwrap_or_else(|e| panic!("{kind:?}: {e}"))).unwrap();
            assert_eq!(v["kind"], kind.as_str());
        }
    }

    #[test]
    fn rejects_unknown_or_malformed_parameters() {
        let s = session();
        assert!(curve(&s, CurveKind::Roc, &CurveQuery::new().with("bins", 3)).is_err());
        assert!(curve(&s, CurveKind::Heatmap, &CurveQuery::new().with("resolution", "x")).is_err());
        assert_eq!(
            curve(&s, CurveKind::Roc, &CurveQuery::new().with("classifier", "NB")).unwrap_err().code(),
            "UNKNOWN_CLASSIFIER"
        );
        let f1 = serde_json::to_value(curve(&s, CurveKind::Bandwidth, &CurveQuery::new().with("metric", "f1")).unwrap()).unwrap();
        assert!(f1["series"][0]["points"][0]["bands"][0]["upper"].is_null());
        assert!("nope".parse::<CurveKind>().is_err());
        assert_eq!(CurveQuery::parse("a=1&b=2").unwrap(), CurveQuery::new().with("a", 1).with("b", 2));
    }
}
