//! Mutable analysis state over one immutable dataset: operating points with
//! version counters, derived classifiers, the selection registry with its
//! comparison slots, the focus item, samples and the visibility scope.
//!
//! Selections keep their provenance expression. Moving a classifier's
//! operating point re-resolves every selection that mentions it, so reads
//! never observe stale members.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, RefKind, Result};
use crate::metrics::{auc, binary_metric, brier, combine_weights, confusion, BinaryMetric, MetricValue, RejectedPolicy, WeightVector};
use crate::model::{ClassifierKind, ClassifierResult, Dataset, FeatureValue, IngestDoc, LoadOptions};
use crate::sampling::{sample, SampleResult, SampleSpec};
use crate::select::{evaluate, step_focus, ClassifierResolver, MemberSet, Selection, SelectionExpr, Slot, StepMode};
use crate::trinary::{classify, derive_classifier, OperatingPoint, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointState {
    #[serde(flatten)]
    pub point: OperatingPoint,
    pub version: u64,
}

/// Body of a selection request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRequest {
    pub expr: SelectionExpr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default)]
    pub slot: Slot,
}

impl SelectionRequest {
    pub fn new(expr: SelectionExpr) -> Self {
        SelectionRequest {
            expr,
            name: None,
            weight: None,
            slot: Slot::None,
        }
    }

    pub fn slot(mut self, slot: Slot) -> Self {
        self.slot = slot;
        self
    }

    pub fn weight(mut self, weight: f64) -> Self {
        self.weight = Some(weight);
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FocusScope {
    #[default]
    All,
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSample {
    pub id: String,
    pub spec: SampleSpec,
    pub result: SampleResult,
    /// Selection ids registered for partition sides A and B.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selections: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutcome {
    pub classifier: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_score: Option<f64>,
    pub outcome: Outcome,
}

/// One instance with its scores and current outcomes under every
/// classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDetail {
    pub id: String,
    pub label: String,
    pub features: BTreeMap<String, FeatureValue>,
    pub classifiers: Vec<ClassifierOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    pub name: String,
    #[serde(flatten)]
    pub kind: ClassifierKind,
    pub operating_point: OperatingPoint,
    pub version: u64,
    pub accuracy: MetricValue,
    pub precision: MetricValue,
    pub recall: MetricValue,
    pub f1: MetricValue,
    pub mcc: MetricValue,
    pub auc: Option<f64>,
    pub brier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub id: String,
    pub name: String,
    pub weight: f64,
    pub slot: Slot,
    pub expr: SelectionExpr,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedDoc {
    pub name: String,
    pub base: String,
    pub operating_point: OperatingPoint,
}

/// Full, self-contained session state for export and replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDoc {
    pub dataset: IngestDoc,
    #[serde(default)]
    pub derived: Vec<DerivedDoc>,
    #[serde(default)]
    pub operating_points: BTreeMap<String, PointState>,
    #[serde(default)]
    pub selections: Vec<SelectionDoc>,
    #[serde(default)]
    pub samples: Vec<StoredSample>,
    #[serde(default)]
    pub focus: Option<String>,
    #[serde(default)]
    pub focus_calls: BTreeMap<u64, u64>,
    #[serde(default)]
    pub visible: Option<String>,
    #[serde(default)]
    pub next_selection: u64,
    #[serde(default)]
    pub next_sample: u64,
}

#[derive(Debug, Clone)]
pub struct Session {
    dataset: Arc<Dataset>,
    derived: Vec<ClassifierResult>,
    points: BTreeMap<String, PointState>,
    selections: Vec<Selection>,
    next_selection: u64,
    focus: Option<usize>,
    focus_calls: BTreeMap<u64, u64>,
    samples: Vec<StoredSample>,
    next_sample: u64,
    visible: Option<String>,
}

impl ClassifierResolver for Session {
    fn resolve(&self, name: &str) -> Option<(&ClassifierResult, OperatingPoint)> {
        let c = self.find_classifier(name)?;
        let op = c
            .frozen_point()
            .or_else(|| self.points.get(name).map(|p| p.point))
            .unwrap_or_default();
        Some((c, op))
    }
}

impl Session {
    pub fn new(dataset: impl Into<Arc<Dataset>>) -> Self {
        let dataset = dataset.into();
        let points = dataset
            .classifiers()
            .iter()
            .map(|c| {
                (
                    c.name.clone(),
                    PointState {
                        point: OperatingPoint::default(),
                        version: 0,
                    },
                )
            })
            .collect();
        Session {
            dataset,
            derived: Vec::new(),
            points,
            selections: Vec::new(),
            next_selection: 1,
            focus: None,
            focus_calls: BTreeMap::new(),
            samples: Vec::new(),
            next_sample: 1,
            visible: None,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    // -- classifiers and operating points ---------------------------------

    fn find_classifier(&self, name: &str) -> Option<&ClassifierResult> {
        self.dataset
            .classifier(name)
            .or_else(|| self.derived.iter().find(|c| c.name == name))
    }

    pub fn classifier(&self, name: &str) -> Result<&ClassifierResult> {
        self.find_classifier(name)
            .ok_or_else(|| Error::unknown(RefKind::Classifier, name))
    }

    /// Loaded classifiers in load order, then derived ones in creation order.
    pub fn classifiers(&self) -> impl Iterator<Item = &ClassifierResult> {
        self.dataset.classifiers().iter().chain(&self.derived)
    }

    /// Current point and version; derived classifiers report their frozen
    /// point at version 0.
    pub fn operating_point(&self, name: &str) -> Result<PointState> {
        let c = self.classifier(name)?;
        Ok(match c.frozen_point() {
            Some(point) => PointState { point, version: 0 },
            None => self.points[name],
        })
    }

    pub fn set_operating_point(&mut self, name: &str, point: OperatingPoint) -> Result<u64> {
        if self.classifier(name)?.is_derived() {
            return Err(Error::Conflict(format!(
                "classifier `{name}` is derived and its operating point is frozen"
            )));
        }
        let state = self.points.get_mut(name).expect("loaded classifiers have a point");
        state.point = point;
        state.version += 1;
        let version = state.version;
        self.refresh_selections(name);
        Ok(version)
    }

    fn refresh_selections(&mut self, classifier: &str) {
        let stale: Vec<usize> = (0..self.selections.len())
            .filter(|&k| self.selections[k].expr.referenced_classifiers().contains(classifier))
            .collect();
        for k in stale {
            let members = evaluate(&self.selections[k].expr, &self.dataset, self)
                .expect("a registered selection stays valid when a point moves");
            self.selections[k].members = members;
        }
    }

    /// Freeze `base` at `point` (default: its current point) as `name`.
    pub fn derive(&mut self, base: &str, name: &str, point: Option<OperatingPoint>) -> Result<&ClassifierResult> {
        let point = match point {
            Some(p) => p,
            None => self.operating_point(base)?.point,
        };
        let derived = derive_classifier(self.classifier(base)?, point, name, |n| self.find_classifier(n).is_some())?;
        self.derived.push(derived);
        Ok(self.derived.last().expect("just pushed"))
    }

    // -- selections --------------------------------------------------------

    pub fn create_selection(&mut self, req: SelectionRequest) -> Result<&Selection> {
        let weight = req.weight.unwrap_or(1.0);
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::invalid(format!("selection weight {weight} must be positive")));
        }
        let members = evaluate(&req.expr, &self.dataset, self)?;
        let id = format!("sel-{}", self.next_selection);
        self.next_selection += 1;
        self.clear_slot(req.slot);
        self.selections.push(Selection {
            name: req.name.unwrap_or_else(|| id.clone()),
            id,
            members,
            weight,
            expr: req.expr,
            slot: req.slot,
        });
        Ok(self.selections.last().expect("just pushed"))
    }

    fn clear_slot(&mut self, slot: Slot) {
        if slot != Slot::None {
            for s in self.selections.iter_mut().filter(|s| s.slot == slot) {
                s.slot = Slot::None;
            }
        }
    }

    /// Move a selection into a slot, evicting the previous occupant.
    pub fn assign_slot(&mut self, id: &str, slot: Slot) -> Result<()> {
        let k = self.selection_position(id)?;
        self.clear_slot(slot);
        self.selections[k].slot = slot;
        Ok(())
    }

    pub fn delete_selection(&mut self, id: &str) -> Result<()> {
        let k = self.selection_position(id)?;
        self.selections.remove(k);
        if self.visible.as_deref() == Some(id) {
            self.visible = None;
        }
        Ok(())
    }

    fn selection_position(&self, id: &str) -> Result<usize> {
        self.selections
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::unknown(RefKind::Selection, id))
    }

    pub fn selection(&self, id: &str) -> Result<&Selection> {
        Ok(&self.selections[self.selection_position(id)?])
    }

    pub fn selections(&self) -> &[Selection] {
        &self.selections
    }

    pub fn slot(&self, slot: Slot) -> Option<&Selection> {
        self.selections.iter().find(|s| s.slot == slot && slot != Slot::None)
    }

    pub fn selection_doc(&self, s: &Selection) -> SelectionDoc {
        SelectionDoc {
            id: s.id.clone(),
            name: s.name.clone(),
            weight: s.weight,
            slot: s.slot,
            expr: s.expr.clone(),
            size: s.members.len(),
        }
    }

    // -- scope and weights ---------------------------------------------------

    /// Restrict every computation to a selection's members (`None` shows
    /// all items).
    pub fn set_visibility(&mut self, selection: Option<&str>) -> Result<()> {
        if let Some(id) = selection {
            self.selection(id)?;
        }
        self.visible = selection.map(str::to_owned);
        Ok(())
    }

    pub fn visibility(&self) -> Option<&str> {
        self.visible.as_deref()
    }

    /// Visible items, intersected with `selection` when given. `None` means
    /// the whole dataset.
    pub fn scope(&self, selection: Option<&str>) -> Result<Option<MemberSet>> {
        let visible = self.visible.as_deref().map(|id| self.selection(id)).transpose()?;
        let chosen = selection.map(|id| self.selection(id)).transpose()?;
        Ok(match (visible, chosen) {
            (None, None) => None,
            (Some(v), None) => Some(v.members.clone()),
            (None, Some(c)) => Some(c.members.clone()),
            (Some(v), Some(c)) => {
                let mut m = v.members.clone();
                m.intersect_with(&c.members);
                Some(m)
            }
        })
    }

    /// Product of the weights of the named selections and, optionally, a
    /// bootstrap sample's multiplicities.
    pub fn weights(&self, selections: &[String], sample: Option<&str>) -> Result<Option<WeightVector>> {
        let mut weights = None;
        if !selections.is_empty() {
            let chosen = selections
                .iter()
                .map(|id| self.selection(id).map(|s| (&s.members, s.weight)))
                .collect::<Result<Vec<_>>>()?;
            weights = Some(combine_weights(self.dataset.len(), &chosen)?);
        }
        if let Some(id) = sample {
            let m = self.sample(id)?.result.weights(&self.dataset)?;
            weights = Some(match weights {
                Some(w) => w.multiply(&m),
                None => m,
            });
        }
        Ok(weights)
    }

    // -- focus ---------------------------------------------------------------

    pub fn focus(&self) -> Option<usize> {
        self.focus
    }

    pub fn set_focus(&mut self, id: Option<&str>) -> Result<Option<usize>> {
        self.focus = id.map(|id| self.dataset.require_index(id)).transpose()?;
        Ok(self.focus)
    }

    pub fn step_focus(&mut self, mode: StepMode, scope: FocusScope) -> Result<usize> {
        let members = match scope {
            FocusScope::All => self.scope(None)?,
            FocusScope::A | FocusScope::B => {
                let slot = if scope == FocusScope::A { Slot::A } else { Slot::B };
                let sel = self
                    .slot(slot)
                    .ok_or_else(|| Error::not_found("slot", format!("{slot:?}")))?;
                self.scope(Some(&sel.id.clone()))?
            }
        }
        .unwrap_or_else(|| self.dataset.all_members());
        let call = match mode {
            StepMode::Random { seed } => *self.focus_calls.get(&seed).unwrap_or(&0),
            _ => 0,
        };
        let next = step_focus(&self.dataset, &members, self.focus, mode, call)?;
        if let StepMode::Random { seed } = mode {
            self.focus_calls.insert(seed, call + 1);
        }
        self.focus = Some(next);
        Ok(next)
    }

    // -- instances -----------------------------------------------------------

    pub fn instance_detail(&self, index: usize) -> InstanceDetail {
        let inst = self.dataset.instance(index);
        let label = self.dataset.labels()[index];
        InstanceDetail {
            id: inst.id.clone(),
            label: self.dataset.class_name(label).to_owned(),
            features: inst.features.clone(),
            classifiers: self
                .classifiers()
                .map(|c| {
                    let (_, op) = self.resolve(&c.name).expect("listed classifier resolves");
                    ClassifierOutcome {
                        classifier: c.name.clone(),
                        score: c.score(index),
                        raw_score: c.normalization().map(|_| c.raw_score(index)),
                        outcome: classify(c.score(index), label, &op),
                    }
                })
                .collect(),
        }
    }

    pub fn instance(&self, id: &str) -> Result<InstanceDetail> {
        Ok(self.instance_detail(self.dataset.require_index(id)?))
    }

    /// Rows in id order, restricted to the visible scope and `filter`.
    pub fn list_instances(&self, filter: Option<&str>, offset: usize, limit: usize) -> Result<Vec<InstanceDetail>> {
        let scope = self.scope(filter)?;
        Ok(self
            .dataset
            .page(scope.as_ref(), offset, limit)?
            .into_iter()
            .map(|i| self.instance_detail(i))
            .collect())
    }

    // -- samples -------------------------------------------------------------

    /// Draw a sample; partition sides are registered as id-list selections.
    pub fn create_sample(&mut self, spec: SampleSpec) -> Result<&StoredSample> {
        let result = sample(&self.dataset, &spec)?;
        let id = format!("sample-{}", self.next_sample);
        self.next_sample += 1;
        let selections = match &result {
            SampleResult::Partition { a, b, .. } => {
                let mut side = |name: &str, ids: &[String]| -> Result<String> {
                    let req = SelectionRequest::new(SelectionExpr::ids(ids.iter().cloned())).named(format!("{id}:{name}"));
                    Ok(self.create_selection(req)?.id.clone())
                };
                Some([side("A", a)?, side("B", b)?])
            }
            SampleResult::Bootstrap { .. } => None,
        };
        self.samples.push(StoredSample {
            id,
            spec,
            result,
            selections,
        });
        Ok(self.samples.last().expect("just pushed"))
    }

    pub fn sample(&self, id: &str) -> Result<&StoredSample> {
        self.samples
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::not_found("sample", id))
    }

    pub fn samples(&self) -> &[StoredSample] {
        &self.samples
    }

    // -- summaries -----------------------------------------------------------

    /// Metrics of every classifier at its current point, over the visible
    /// scope.
    pub fn metrics_table(&self) -> Result<Vec<ClassifierSummary>> {
        let scope = self.scope(None)?;
        self.classifiers()
            .map(|c| {
                let state = self.operating_point(&c.name)?;
                let conf = confusion(&self.dataset, c, &state.point, scope.as_ref(), None);
                let m = |metric| binary_metric(&conf, metric, RejectedPolicy::Exclude);
                let defined = |r: Result<f64>| match r {
                    Ok(v) => Ok(Some(v)),
                    Err(Error::Undefined(_)) => Ok(None),
                    Err(e) => Err(e),
                };
                Ok(ClassifierSummary {
                    name: c.name.clone(),
                    kind: c.kind.clone(),
                    operating_point: state.point,
                    version: state.version,
                    accuracy: m(BinaryMetric::Accuracy)?,
                    precision: m(BinaryMetric::Precision)?,
                    recall: m(BinaryMetric::Recall)?,
                    f1: m(BinaryMetric::F1)?,
                    mcc: m(BinaryMetric::Mcc)?,
                    auc: defined(auc(&self.dataset, c, scope.as_ref()))?,
                    brier: defined(brier(&self.dataset, c, scope.as_ref(), None))?,
                })
            })
            .collect()
    }

    // -- export / import -----------------------------------------------------

    pub fn export(&self) -> SessionDoc {
        SessionDoc {
            dataset: self.dataset.to_ingest(),
            derived: self
                .derived
                .iter()
                .map(|c| match &c.kind {
                    ClassifierKind::Derived { base, operating_point } => DerivedDoc {
                        name: c.name.clone(),
                        base: base.clone(),
                        operating_point: *operating_point,
                    },
                    ClassifierKind::Loaded => unreachable!("derived list holds derived classifiers"),
                })
                .collect(),
            operating_points: self.points.clone(),
            selections: self.selections.iter().map(|s| self.selection_doc(s)).collect(),
            samples: self.samples.clone(),
            focus: self.focus.map(|i| self.dataset.instance(i).id.clone()),
            focus_calls: self.focus_calls.clone(),
            visible: self.visible.clone(),
            next_selection: self.next_selection,
            next_sample: self.next_sample,
        }
    }

    /// Rebuild a session from an exported document. Selections are
    /// re-evaluated from their expressions; a size that no longer matches
    /// the recorded one is an error.
    pub fn import(doc: SessionDoc) -> Result<Session> {
        let (dataset, _) = Dataset::from_ingest(doc.dataset, &LoadOptions::default())?;
        let mut session = Session::new(dataset);
        for (name, state) in doc.operating_points {
            match session.points.get_mut(&name) {
                Some(slot) => *slot = state,
                None => return Err(Error::unknown(RefKind::Classifier, name)),
            }
        }
        for d in doc.derived {
            session.derive(&d.base, &d.name, Some(d.operating_point))?;
        }
        let mut seen = BTreeSet::new();
        for s in doc.selections {
            if !seen.insert(s.id.clone()) {
                return Err(Error::Conflict(format!("duplicate selection id `{}`", s.id)));
            }
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(Error::invalid(format!("selection weight {} must be positive", s.weight)));
            }
            let members = evaluate(&s.expr, &session.dataset, &session)?;
            if members.len() != s.size {
                return Err(Error::invalid(format!(
                    "selection `{}` resolves to {} items, document records {}",
                    s.id,
                    members.len(),
                    s.size
                )));
            }
            session.selections.push(Selection {
                id: s.id,
                name: s.name,
                members,
                weight: s.weight,
                expr: s.expr,
                slot: s.slot,
            });
        }
        for sample in &doc.samples {
            if let Some(ids) = &sample.selections {
                for id in ids {
                    session.selection(id)?;
                }
            }
        }
        session.samples = doc.samples;
        session.focus = doc.focus.as_deref().map(|id| session.dataset.require_index(id)).transpose()?;
        session.focus_calls = doc.focus_calls;
        if let Some(id) = &doc.visible {
            session.selection(id)?;
        }
        session.visible = doc.visible;
        session.next_selection = doc.next_selection.max(session.selections.len() as u64 + 1);
        session.next_sample = doc.next_sample.max(session.samples.len() as u64 + 1);
        Ok(session)
    }
}
