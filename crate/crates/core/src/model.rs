//! Dataset model: instances with ground truth, feature attributes and
//! per-classifier scores, plus JSON/CSV ingestion and validation.
//!
//! Scores are stored aligned to instance order, so every classifier covers
//! exactly the instance id set. After ingestion every score lies in `[0, 1]`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, RefKind, Result};
use crate::select::MemberSet;
use crate::trinary::OperatingPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    #[inline]
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// 0/1 target used by squared-error metrics.
    #[inline]
    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

/// A feature attribute value. Absent values are simply missing from the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Category(String),
}

impl FeatureValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            FeatureValue::Number(v) => Some(*v),
            FeatureValue::Category(_) => None,
        }
    }

    pub(crate) fn parse_cell(cell: &str) -> Option<FeatureValue> {
        if cell.is_empty() {
            return None;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(FeatureValue::Number(v)),
            _ => Some(FeatureValue::Category(cell.to_owned())),
        }
    }
}

impl std::fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureValue::Number(v) => write!(f, "{v}"),
            FeatureValue::Category(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub label: Label,
    pub features: BTreeMap<String, FeatureValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierKind {
    Loaded,
    /// Frozen at an operating point; shares the base classifier's scores.
    Derived {
        base: String,
        operating_point: OperatingPoint,
    },
}

/// Min-max parameters of a normalized classifier, so raw scores stay
/// recoverable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn apply(&self, raw: f64) -> f64 {
        if self.max > self.min {
            (raw - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }

    pub fn invert(&self, score: f64) -> f64 {
        if self.max > self.min {
            self.min + score * (self.max - self.min)
        } else {
            self.min
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierResult {
    pub name: String,
    pub kind: ClassifierKind,
    scores: Arc<[f64]>,
    normalization: Option<Normalization>,
}

impl ClassifierResult {
    pub(crate) fn loaded(name: String, scores: Vec<f64>, normalization: Option<Normalization>) -> Self {
        ClassifierResult {
            name,
            kind: ClassifierKind::Loaded,
            scores: scores.into(),
            normalization,
        }
    }

    pub(crate) fn derived_from(base: &ClassifierResult, name: String, op: OperatingPoint) -> Self {
        ClassifierResult {
            name,
            kind: ClassifierKind::Derived {
                base: base.name.clone(),
                operating_point: op,
            },
            scores: Arc::clone(&base.scores),
            normalization: base.normalization,
        }
    }

    /// Scores aligned with the dataset's instance order.
    #[inline]
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn score(&self, index: usize) -> f64 {
        self.scores[index]
    }

    pub fn raw_score(&self, index: usize) -> f64 {
        match &self.normalization {
            Some(n) => n.invert(self.scores[index]),
            None => self.scores[index],
        }
    }

    pub fn normalization(&self) -> Option<Normalization> {
        self.normalization
    }

    pub fn is_derived(&self) -> bool {
        matches!(self.kind, ClassifierKind::Derived { .. })
    }

    pub fn frozen_point(&self) -> Option<OperatingPoint> {
        match &self.kind {
            ClassifierKind::Derived { operating_point, .. } => Some(*operating_point),
            ClassifierKind::Loaded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub instances: usize,
    pub classifiers: usize,
    pub negatives: usize,
    pub positives: usize,
    pub scores_normalized: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<ReportEntry>,
    pub warnings: Vec<ReportEntry>,
    pub counts: ReportCounts,
}

impl ValidationReport {
    fn error(&mut self, code: &str, message: impl Into<String>, id: Option<&str>) {
        self.errors.push(ReportEntry {
            code: code.to_owned(),
            message: message.into(),
            id: id.map(str::to_owned),
        });
    }

    fn warn(&mut self, code: &str, message: impl Into<String>, id: Option<&str>) {
        self.warnings.push(ReportEntry {
            code: code.to_owned(),
            message: message.into(),
            id: id.map(str::to_owned),
        });
    }

    pub fn is_accepted(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Min-max normalize classifiers whose scores fall outside `[0, 1]`
    /// instead of rejecting them.
    pub normalize: bool,
    /// `(negative, positive)` class names. Required for CSV input unless the
    /// labels contain exactly two distinct values (then sorted order is used).
    pub classes: Option<[String; 2]>,
    pub source: Option<String>,
}

// ---------------------------------------------------------------------------
// Ingest wire format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestDoc {
    pub classes: [String; 2],
    pub instances: Vec<IngestInstance>,
    pub classifiers: Vec<IngestClassifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestInstance {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub features: BTreeMap<String, Option<FeatureValue>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestClassifier {
    pub name: String,
    pub scores: BTreeMap<String, f64>,
    /// Present when the scores were already normalized by an earlier load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
}

impl IngestDoc {
    pub fn new(negative: impl Into<String>, positive: impl Into<String>) -> Self {
        IngestDoc {
            classes: [negative.into(), positive.into()],
            instances: Vec::new(),
            classifiers: Vec::new(),
            provenance: None,
        }
    }

    pub fn instance(mut self, id: impl Into<String>, label: impl Into<String>) -> Self {
        self.instances.push(IngestInstance {
            id: id.into(),
            label: label.into(),
            features: BTreeMap::new(),
        });
        self
    }

    pub fn feature(mut self, name: impl Into<String>, value: FeatureValue) -> Self {
        if let Some(last) = self.instances.last_mut() {
            last.features.insert(name.into(), Some(value));
        }
        self
    }

    pub fn classifier<I, K>(mut self, name: impl Into<String>, scores: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        self.classifiers.push(IngestClassifier {
            name: name.into(),
            scores: scores.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            normalization: None,
        });
        self
    }
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Dataset {
    classes: [String; 2],
    instances: Vec<Instance>,
    classifiers: Vec<ClassifierResult>,
    provenance: Provenance,
    labels: Vec<Label>,
    index: HashMap<String, usize>,
    by_id: Vec<usize>,
    features: BTreeMap<String, FeatureKind>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes
            && self.instances == other.instances
            && self.classifiers == other.classifiers
            && self.provenance == other.provenance
    }
}

impl Dataset {
    pub fn from_json(bytes: &[u8], opts: &LoadOptions) -> Result<(Dataset, ValidationReport)> {
        let doc: IngestDoc = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            line: e.line() as u64,
            field: None,
            message: e.to_string(),
        })?;
        let mut opts = opts.clone();
        let fmt = "json";
        Self::from_ingest_with(doc, &mut opts, fmt)
    }

    pub fn from_csv(bytes: &[u8], opts: &LoadOptions) -> Result<(Dataset, ValidationReport)> {
        let doc = parse_csv(bytes, opts)?;
        let mut opts = opts.clone();
        Self::from_ingest_with(doc, &mut opts, "csv")
    }

    /// Validate an already-parsed ingest document.
    pub fn from_ingest(doc: IngestDoc, opts: &LoadOptions) -> Result<(Dataset, ValidationReport)> {
        let mut opts = opts.clone();
        Self::from_ingest_with(doc, &mut opts, "memory")
    }

    fn from_ingest_with(
        doc: IngestDoc,
        opts: &mut LoadOptions,
        format: &str,
    ) -> Result<(Dataset, ValidationReport)> {
        let provenance = doc.provenance.clone().unwrap_or_else(|| Provenance {
            format: format.to_owned(),
            source: opts.source.take(),
        });
        build(doc, opts.normalize, provenance)
    }

    /// Serialize back to the JSON ingest document. Loading the result
    /// reproduces this dataset exactly.
    pub fn to_ingest(&self) -> IngestDoc {
        let instances = self
            .instances
            .iter()
            .map(|inst| IngestInstance {
                id: inst.id.clone(),
                label: self.class_name(inst.label).to_owned(),
                features: inst
                    .features
                    .iter()
                    .map(|(k, v)| (k.clone(), Some(v.clone())))
                    .collect(),
            })
            .collect();
        let classifiers = self
            .classifiers
            .iter()
            .map(|c| IngestClassifier {
                name: c.name.clone(),
                scores: self
                    .instances
                    .iter()
                    .zip(c.scores())
                    .map(|(inst, &s)| (inst.id.clone(), s))
                    .collect(),
                normalization: c.normalization,
            })
            .collect();
        IngestDoc {
            classes: self.classes.clone(),
            instances,
            classifiers,
            provenance: Some(self.provenance.clone()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_ingest()).expect("ingest document serializes")
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn classes(&self) -> &[String; 2] {
        &self.classes
    }

    pub fn class_name(&self, label: Label) -> &str {
        match label {
            Label::Negative => &self.classes[0],
            Label::Positive => &self.classes[1],
        }
    }

    pub fn label_of_class(&self, name: &str) -> Option<Label> {
        if name == self.classes[1] {
            Some(Label::Positive)
        } else if name == self.classes[0] {
            Some(Label::Negative)
        } else {
            None
        }
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance(&self, index: usize) -> &Instance {
        &self.instances[index]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn classifiers(&self) -> &[ClassifierResult] {
        &self.classifiers
    }

    pub fn classifier(&self, name: &str) -> Option<&ClassifierResult> {
        self.classifiers.iter().find(|c| c.name == name)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require_index(&self, id: &str) -> Result<usize> {
        self.index_of(id).ok_or_else(|| Error::not_found("instance", id))
    }

    /// Instance indices in ascending id order.
    pub fn sorted_indices(&self) -> &[usize] {
        &self.by_id
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    pub fn feature_kind(&self, name: &str) -> Option<FeatureKind> {
        self.features.get(name).copied()
    }

    pub fn require_feature(&self, name: &str) -> Result<FeatureKind> {
        self.feature_kind(name)
            .ok_or_else(|| Error::unknown(RefKind::Feature, name))
    }

    pub fn feature(&self, index: usize, name: &str) -> Option<&FeatureValue> {
        self.instances[index].features.get(name)
    }

    /// One page of instance indices in id order, optionally restricted to a
    /// member set.
    pub fn page(&self, filter: Option<&MemberSet>, offset: usize, limit: usize) -> Result<Vec<usize>> {
        if limit == 0 {
            return Err(Error::invalid("limit must be at least 1"));
        }
        Ok(self
            .by_id
            .iter()
            .copied()
            .filter(|&i| filter.is_none_or(|f| f.contains(i)))
            .skip(offset)
            .take(limit)
            .collect())
    }

    pub fn all_members(&self) -> MemberSet {
        MemberSet::full(self.len())
    }
}

fn build(doc: IngestDoc, normalize: bool, provenance: Provenance) -> Result<(Dataset, ValidationReport)> {
    let mut report = ValidationReport::default();
    let IngestDoc {
        classes,
        instances: raw_instances,
        classifiers: raw_classifiers,
        ..
    } = doc;

    if classes[0] == classes[1] {
        report.error(
            "INVALID_CLASSES",
            format!("class names must differ, both are `{}`", classes[0]),
            None,
        );
    }
    if raw_instances.len() < 2 {
        report.error(
            "TOO_FEW_INSTANCES",
            format!("need at least 2 instances, got {}", raw_instances.len()),
            None,
        );
    }
    if raw_classifiers.is_empty() {
        report.error("NO_CLASSIFIERS", "need at least 1 classifier", None);
    }

    let mut index = HashMap::with_capacity(raw_instances.len());
    let mut instances = Vec::with_capacity(raw_instances.len());
    let mut features: BTreeMap<String, FeatureKind> = BTreeMap::new();
    for raw in raw_instances {
        if raw.id.is_empty() {
            report.error("EMPTY_ID", "instance id must be non-empty", None);
            continue;
        }
        if index.contains_key(&raw.id) {
            report.error("DUPLICATE_ID", format!("duplicate instance id `{}`", raw.id), Some(&raw.id));
            continue;
        }
        let label = if raw.label == classes[1] {
            Label::Positive
        } else if raw.label == classes[0] {
            Label::Negative
        } else {
            report.error(
                "NON_BINARY_LABEL",
                format!(
                    "label `{}` is neither `{}` nor `{}`",
                    raw.label, classes[0], classes[1]
                ),
                Some(&raw.id),
            );
            continue;
        };
        let mut feats = BTreeMap::new();
        for (name, value) in raw.features {
            let Some(value) = value else { continue };
            let kind = match value {
                FeatureValue::Number(_) => FeatureKind::Numeric,
                FeatureValue::Category(_) => FeatureKind::Categorical,
            };
            features
                .entry(name.clone())
                .and_modify(|k| {
                    if kind == FeatureKind::Categorical {
                        *k = FeatureKind::Categorical;
                    }
                })
                .or_insert(kind);
            feats.insert(name, value);
        }
        index.insert(raw.id.clone(), instances.len());
        instances.push(Instance {
            id: raw.id,
            label,
            features: feats,
        });
    }

    let mut classifiers = Vec::with_capacity(raw_classifiers.len());
    let mut names = BTreeSet::new();
    for raw in raw_classifiers {
        if !names.insert(raw.name.clone()) {
            report.error(
                "DUPLICATE_CLASSIFIER",
                format!("duplicate classifier name `{}`", raw.name),
                None,
            );
            continue;
        }
        if let Some(c) = check_classifier(raw, &instances, &index, normalize, &mut report) {
            classifiers.push(c);
        }
    }

    let positives = instances.iter().filter(|i| i.label.is_positive()).count();
    report.counts = ReportCounts {
        instances: instances.len(),
        classifiers: classifiers.len(),
        negatives: instances.len() - positives,
        positives,
        scores_normalized: report.warnings.iter().any(|w| w.code == "SCORES_NORMALIZED"),
    };
    if !instances.is_empty() && (positives == 0 || positives == instances.len()) {
        report.warn("SINGLE_CLASS", "only one class is present", None);
    }

    if !report.is_accepted() {
        return Err(Error::Validation(Box::new(report)));
    }

    let labels = instances.iter().map(|i| i.label).collect();
    let mut by_id: Vec<usize> = (0..instances.len()).collect();
    by_id.sort_by(|&a, &b| instances[a].id.cmp(&instances[b].id));
    let dataset = Dataset {
        classes,
        instances,
        classifiers,
        provenance,
        labels,
        index,
        by_id,
        features,
    };
    Ok((dataset, report))
}

fn check_classifier(
    raw: IngestClassifier,
    instances: &[Instance],
    index: &HashMap<String, usize>,
    normalize: bool,
    report: &mut ValidationReport,
) -> Option<ClassifierResult> {
    let name = raw.name;
    let before = report.errors.len();
    for id in raw.scores.keys() {
        if !index.contains_key(id) {
            report.error(
                "UNKNOWN_INSTANCE",
                format!("classifier `{name}` scores unknown instance `{id}`"),
                Some(id),
            );
        }
    }
    let mut scores = Vec::with_capacity(instances.len());
    for inst in instances {
        match raw.scores.get(&inst.id) {
            Some(&s) if s.is_finite() => scores.push(s),
            Some(_) => report.error(
                "NON_FINITE_SCORE",
                format!("classifier `{name}` has a non-finite score"),
                Some(&inst.id),
            ),
            None => report.error(
                "MISSING_SCORE",
                format!("classifier `{name}` has no score for `{}`", inst.id),
                Some(&inst.id),
            ),
        }
    }
    if report.errors.len() > before {
        return None;
    }

    let out_of_range: Vec<usize> = (0..scores.len())
        .filter(|&i| !(0.0..=1.0).contains(&scores[i]))
        .collect();
    let mut normalization = raw.normalization;
    if let Some(&first) = out_of_range.first() {
        if !normalize {
            report.error(
                "SCORE_OUT_OF_RANGE",
                format!(
                    "classifier `{name}` has {} score(s) outside [0, 1]; load with normalize to rescale",
                    out_of_range.len()
                ),
                Some(&instances[first].id),
            );
            return None;
        }
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = Normalization { min, max };
        if max == min {
            report.warn(
                "CONSTANT_SCORES",
                format!("classifier `{name}` has constant scores; all mapped to 0.5"),
                None,
            );
        }
        for s in &mut scores {
            *s = n.apply(*s);
        }
        report.warn(
            "SCORES_NORMALIZED",
            format!("classifier `{name}` min-max normalized from [{min}, {max}]"),
            None,
        );
        normalization = Some(n);
    }
    Some(ClassifierResult::loaded(name, scores, normalization))
}

fn parse_csv(bytes: &[u8], opts: &LoadOptions) -> Result<IngestDoc> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| csv_error(&e, None))?
        .clone();
    let column = |name: &str| header.iter().position(|h| h == name);
    let id_col = column("id").ok_or_else(|| Error::Parse {
        line: 1,
        field: Some("id".into()),
        message: "header has no `id` column".into(),
    })?;
    let label_col = column("label").ok_or_else(|| Error::Parse {
        line: 1,
        field: Some("label".into()),
        message: "header has no `label` column".into(),
    })?;
    let mut score_cols = Vec::new();
    let mut feature_cols = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if i == id_col || i == label_col {
            continue;
        }
        match h.strip_prefix("score:") {
            Some(name) => score_cols.push((i, name.to_owned())),
            None => feature_cols.push((i, h.to_owned())),
        }
    }

    let mut instances = Vec::new();
    let mut classifiers: Vec<IngestClassifier> = score_cols
        .iter()
        .map(|(_, name)| IngestClassifier {
            name: name.clone(),
            scores: BTreeMap::new(),
            normalization: None,
        })
        .collect();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e, None))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("");
        let id = cell(id_col).to_owned();
        let mut features = BTreeMap::new();
        for (i, name) in &feature_cols {
            features.insert(name.clone(), FeatureValue::parse_cell(cell(*i)));
        }
        for ((i, name), clf) in score_cols.iter().zip(classifiers.iter_mut()) {
            let raw = cell(*i).trim();
            if raw.is_empty() {
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                field: Some(format!("score:{name}")),
                message: format!("`{raw}` is not a number"),
            })?;
            clf.scores.insert(id.clone(), v);
        }
        instances.push(IngestInstance {
            id,
            label: cell(label_col).to_owned(),
            features,
        });
    }

    let classes = match &opts.classes {
        Some(c) => c.clone(),
        None => {
            let distinct: BTreeSet<&str> = instances.iter().map(|i| i.label.as_str()).collect();
            if distinct.len() != 2 {
                return Err(Error::Parse {
                    line: 1,
                    field: Some("label".into()),
                    message: format!(
                        "cannot infer the two classes from {} distinct label(s); pass classes explicitly",
                        distinct.len()
                    ),
                });
            }
            let mut it = distinct.into_iter();
            let neg = it.next().unwrap_or_default().to_owned();
            let pos = it.next().unwrap_or_default().to_owned();
            [neg, pos]
        }
    };
    Ok(IngestDoc {
        classes,
        instances,
        classifiers,
        provenance: None,
    })
}

pub(crate) fn csv_error(e: &csv::Error, field: Option<String>) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line()),
        field,
        message: e.to_string(),
    }
}
