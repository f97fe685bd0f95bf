//! User modifications and the incremental changes they induce on the
//! candidate store and the conflict graph.
//!
//! An [`Edit`] is translated into an [`EditDelta`] against the current state
//! without touching it; the [`Workspace`] then applies the delta to both the
//! store and the graph. Deltas carry enough before/after information to be
//! inverted, which is how undo works.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::candgen::{self, rects_conflict, world_size, LabelStyle, SpatialGrid, TextMetricsConfig};
use crate::error::{Error, Result};
use crate::model::{CandidateId, ConflictGraph, FeaturePoint, LabelCandidate, PositionModel, Rect, Slot, VertexInfo};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Edit {
    SetFontSize {
        feature: String,
        size: f64,
    },
    SetText {
        feature: String,
        text: String,
    },
    SetLineBreaks {
        feature: String,
        lines: u32,
    },
    SetPadding {
        feature: String,
        padding: f64,
    },
    DeleteFeature {
        feature: String,
    },
    DeleteCandidate {
        candidate: CandidateId,
    },
    FixateCandidate {
        candidate: CandidateId,
    },
    UnfixateCandidate {
        candidate: CandidateId,
    },
    SetCandidateWeight {
        candidate: CandidateId,
        weight: f64,
    },
    /// Moves the label to the feature's free slot with its top-left corner at `(x, y)`.
    DragCandidate {
        candidate: CandidateId,
        x: f64,
        y: f64,
    },
    SetBoxVisibility {
        feature: String,
        visible: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightChange {
    pub old: f64,
    pub new: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateChange {
    pub before: Option<LabelCandidate>,
    pub after: Option<LabelCandidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureChange {
    pub feature: u32,
    pub before: FeatureState,
    pub after: FeatureState,
}

/// Mutable per-feature label state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureState {
    pub style: LabelStyle,
    pub deleted: bool,
    /// Set once the font has been made smaller; later enlargements are ignored
    /// when the store enforces shrink precedence.
    pub shrunk: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EditDelta {
    pub removed_vertices: BTreeMap<CandidateId, VertexInfo>,
    pub added_vertices: BTreeMap<CandidateId, VertexInfo>,
    pub removed_edges: BTreeSet<(CandidateId, CandidateId)>,
    pub added_edges: BTreeSet<(CandidateId, CandidateId)>,
    pub weight_changes: BTreeMap<CandidateId, WeightChange>,
    /// New fixation value; only recorded when it differs from the old one.
    pub fixation_changes: BTreeMap<CandidateId, bool>,
    pub candidate_changes: Vec<CandidateChange>,
    pub feature_change: Option<FeatureChange>,
}

fn edge(a: CandidateId, b: CandidateId) -> (CandidateId, CandidateId) {
    (a.min(b), a.max(b))
}

impl EditDelta {
    /// True when the delta changes nothing at all.
    pub fn is_empty(&self) -> bool {
        self.touches_graph_nothing() && self.candidate_changes.is_empty() && self.feature_change.is_none()
    }

    fn touches_graph_nothing(&self) -> bool {
        self.removed_vertices.is_empty()
            && self.added_vertices.is_empty()
            && self.removed_edges.is_empty()
            && self.added_edges.is_empty()
            && self.weight_changes.is_empty()
            && self.fixation_changes.is_empty()
    }

    pub fn inverse(&self) -> EditDelta {
        EditDelta {
            removed_vertices: self.added_vertices.clone(),
            added_vertices: self.removed_vertices.clone(),
            removed_edges: self.added_edges.clone(),
            added_edges: self.removed_edges.clone(),
            weight_changes: self
                .weight_changes
                .iter()
                .map(|(&id, c)| (id, WeightChange { old: c.new, new: c.old }))
                .collect(),
            fixation_changes: self.fixation_changes.iter().map(|(&id, &f)| (id, !f)).collect(),
            candidate_changes: self
                .candidate_changes
                .iter()
                .rev()
                .map(|c| CandidateChange {
                    before: c.after.clone(),
                    after: c.before.clone(),
                })
                .collect(),
            feature_change: self.feature_change.as_ref().map(|f| FeatureChange {
                feature: f.feature,
                before: f.after.clone(),
                after: f.before.clone(),
            }),
        }
    }

    pub fn summary(&self) -> DeltaSummary {
        DeltaSummary {
            removed_vertices: self.removed_vertices.len(),
            added_vertices: self.added_vertices.len(),
            removed_edges: self.removed_edges.len(),
            added_edges: self.added_edges.len(),
            weight_changes: self.weight_changes.len(),
            fixation_changes: self.fixation_changes.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub removed_vertices: usize,
    pub added_vertices: usize,
    pub removed_edges: usize,
    pub added_edges: usize,
    pub weight_changes: usize,
    pub fixation_changes: usize,
}

/// Applies `delta` to `graph` atomically: the delta is checked against the
/// graph first and nothing changes if it is inconsistent.
pub fn apply_delta(graph: &mut ConflictGraph, delta: &EditDelta) -> Result<()> {
    let bad = |msg: String| Err(Error::InconsistentDelta(msg));
    for &(a, b) in &delta.removed_edges {
        if !graph.has_edge(a, b) {
            return bad(format!("removed edge {a}-{b} is not in the graph"));
        }
    }
    for &v in delta.removed_vertices.keys() {
        if !graph.contains(v) {
            return bad(format!("removed vertex {v} is not in the graph"));
        }
        let listed = delta.removed_edges.iter().filter(|&&(a, b)| a == v || b == v).count();
        if listed != graph.degree(v) {
            return bad(format!("vertex {v} is removed but keeps incident edges"));
        }
    }
    let exists_after = |v: CandidateId| {
        delta.added_vertices.contains_key(&v) || (graph.contains(v) && !delta.removed_vertices.contains_key(&v))
    };
    for &v in delta.added_vertices.keys() {
        if graph.contains(v) && !delta.removed_vertices.contains_key(&v) {
            return bad(format!("added vertex {v} already exists"));
        }
    }
    for &(a, b) in &delta.added_edges {
        if a == b || !exists_after(a) || !exists_after(b) {
            return bad(format!("added edge {a}-{b} references a missing vertex"));
        }
        if graph.has_edge(a, b) && !delta.removed_edges.contains(&edge(a, b)) {
            return bad(format!("added edge {a}-{b} already exists"));
        }
    }
    for &v in delta.weight_changes.keys().chain(delta.fixation_changes.keys()) {
        if !exists_after(v) {
            return bad(format!("weight or fixation change on missing vertex {v}"));
        }
    }

    for &(a, b) in &delta.removed_edges {
        graph.remove_edge(a, b);
    }
    for &v in delta.removed_vertices.keys() {
        graph.remove_vertex(v)?;
    }
    for (&v, &info) in &delta.added_vertices {
        graph.add_vertex(v, info)?;
    }
    for &(a, b) in &delta.added_edges {
        graph.add_edge(a, b)?;
    }
    for (&v, c) in &delta.weight_changes {
        graph.set_weight(v, c.new)?;
    }
    for (&v, &f) in &delta.fixation_changes {
        graph.set_fixed(v, f)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FeatureEntry {
    point: FeaturePoint,
    anchor: (f64, f64),
    state: FeatureState,
}

/// All candidates of a dataset at one zoom level, with a spatial index over
/// the live ones.
#[derive(Clone, Debug)]
pub struct LabelStore {
    zoom: u8,
    model: PositionModel,
    metrics: TextMetricsConfig,
    features: Vec<FeatureEntry>,
    by_name: HashMap<String, u32>,
    candidates: BTreeMap<CandidateId, LabelCandidate>,
    grid: SpatialGrid,
    pub keep_fixed: bool,
    pub shrink_precedence: bool,
}

impl LabelStore {
    pub fn new(
        features: &[FeaturePoint],
        zoom: u8,
        model: PositionModel,
        font_size: f64,
        metrics: TextMetricsConfig,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(features.len());
        let mut by_name = HashMap::with_capacity(features.len());
        let mut candidates = BTreeMap::new();
        for (i, f) in features.iter().enumerate() {
            f.validate()?;
            if by_name.insert(f.id.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate feature id {:?}", f.id)));
            }
            let style = LabelStyle::new(
                if f.name.is_empty() {
                    f.id.clone()
                } else {
                    f.name.clone()
                },
                font_size,
            );
            let anchor = candgen::project(f.lon, f.lat, zoom)?;
            let size = style.measure(&metrics)?;
            for mut c in candgen::candidates_at(i as u32, anchor, size, f.base_weight, &style, model) {
                c.deleted = f.deleted;
                candidates.insert(c.id, c);
            }
            entries.push(FeatureEntry {
                point: f.clone(),
                anchor,
                state: FeatureState {
                    style,
                    deleted: f.deleted,
                    shrunk: false,
                },
            });
        }
        let grid = SpatialGrid::for_rects(candidates.values().filter(|c| !c.deleted).map(|c| &c.rect));
        let mut store = LabelStore {
            zoom,
            model,
            metrics,
            features: entries,
            by_name,
            candidates,
            grid,
            keep_fixed: true,
            shrink_precedence: false,
        };
        store.reindex();
        Ok(store)
    }

    fn reindex(&mut self) {
        let mut grid = SpatialGrid::new(self.grid.cell_size());
        for c in self.candidates.values().filter(|c| !c.deleted) {
            grid.insert(c.id, &c.rect);
        }
        self.grid = grid;
    }

    pub fn zoom(&self) -> u8 {
        self.zoom
    }

    pub fn position_model(&self) -> PositionModel {
        self.model
    }

    pub fn metrics(&self) -> &TextMetricsConfig {
        &self.metrics
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn live_feature_count(&self) -> usize {
        self.features.iter().filter(|f| !f.state.deleted).count()
    }

    pub fn feature(&self, index: u32) -> Option<&FeaturePoint> {
        self.features.get(index as usize).map(|f| &f.point)
    }

    pub fn feature_state(&self, index: u32) -> Option<&FeatureState> {
        self.features.get(index as usize).map(|f| &f.state)
    }

    pub fn feature_anchor(&self, index: u32) -> Option<(f64, f64)> {
        self.features.get(index as usize).map(|f| f.anchor)
    }

    pub fn feature_index(&self, id: &str) -> Result<u32> {
        self.by_name
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownFeature(id.to_string()))
    }

    pub fn candidate(&self, id: CandidateId) -> Option<&LabelCandidate> {
        self.candidates.get(&id)
    }

    pub fn candidates(&self) -> impl Iterator<Item = &LabelCandidate> + '_ {
        self.candidates.values()
    }

    pub fn live_candidates(&self) -> impl Iterator<Item = &LabelCandidate> + '_ {
        self.candidates.values().filter(|c| !c.deleted)
    }

    pub fn candidates_of(&self, feature: u32) -> impl Iterator<Item = &LabelCandidate> + '_ {
        let lo = CandidateId::for_slot(feature, Slot::AboveRight);
        let hi = CandidateId::for_slot(feature, Slot::Free);
        self.candidates.range(lo..=hi).map(|(_, c)| c)
    }

    pub fn conflict_graph(&self) -> Result<ConflictGraph> {
        let all: Vec<LabelCandidate> = self.candidates.values().cloned().collect();
        candgen::build_conflict_graph(&all)
    }

    fn live_candidate(&self, id: CandidateId) -> Result<&LabelCandidate> {
        match self.candidates.get(&id) {
            Some(c) if !c.deleted => Ok(c),
            Some(_) => Err(Error::InvalidInput(format!("candidate {id} is deleted"))),
            None => Err(Error::UnknownCandidate(id)),
        }
    }

    fn live_feature(&self, id: &str) -> Result<u32> {
        let f = self.feature_index(id)?;
        if self.features[f as usize].state.deleted {
            return Err(Error::InvalidInput(format!("feature {id:?} is deleted")));
        }
        Ok(f)
    }

    /// Live conflict neighbors of a hypothetical candidate of `feature` placed
    /// at `rect`, plus the feature's other live candidates.
    fn neighbors_for(
        &self,
        id: CandidateId,
        feature: u32,
        rect: &Rect,
        exclude_feature_rects: bool,
    ) -> BTreeSet<CandidateId> {
        let mut out: BTreeSet<CandidateId> = self
            .grid
            .query(rect)
            .into_iter()
            .filter(|&other| other != id)
            .filter(|other| {
                let c = &self.candidates[other];
                !(exclude_feature_rects && c.feature == feature) && rects_conflict(rect, &c.rect)
            })
            .collect();
        out.extend(
            self.candidates_of(feature)
                .filter(|c| !c.deleted && c.id != id)
                .map(|c| c.id),
        );
        out
    }

    /// Computes the delta `edit` would cause without changing anything.
    pub fn delta_for(&self, graph: &ConflictGraph, edit: &Edit) -> Result<EditDelta> {
        match edit {
            Edit::SetFontSize { feature, size } => {
                if !(*size > 0.0 && size.is_finite()) {
                    return Err(Error::InvalidInput(format!("font size must be positive, got {size}")));
                }
                let f = self.live_feature(feature)?;
                let state = &self.features[f as usize].state;
                let current = state.style.font_size;
                if *size == current || (self.shrink_precedence && state.shrunk && *size > current) {
                    return Ok(EditDelta::default());
                }
                let mut after = state.clone();
                after.style.font_size = *size;
                after.shrunk |= *size < current;
                self.restyle(graph, f, after)
            }
            Edit::SetText { feature, text } => {
                if text.is_empty() {
                    return Err(Error::InvalidInput("label text must not be empty".into()));
                }
                let f = self.live_feature(feature)?;
                let mut after = self.features[f as usize].state.clone();
                after.style.text = text.clone();
                self.restyle(graph, f, after)
            }
            Edit::SetLineBreaks { feature, lines } => {
                if *lines == 0 {
                    return Err(Error::InvalidInput("a label needs at least one line".into()));
                }
                let f = self.live_feature(feature)?;
                let mut after = self.features[f as usize].state.clone();
                after.style.lines = *lines;
                self.restyle(graph, f, after)
            }
            Edit::SetPadding { feature, padding } => {
                if !(*padding >= 0.0 && padding.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "padding must be non-negative, got {padding}"
                    )));
                }
                let f = self.live_feature(feature)?;
                let mut after = self.features[f as usize].state.clone();
                after.style.padding = *padding;
                self.restyle(graph, f, after)
            }
            Edit::SetBoxVisibility { feature, visible } => {
                let f = self.live_feature(feature)?;
                let before = self.features[f as usize].state.clone();
                if before.style.box_visible == *visible {
                    return Ok(EditDelta::default());
                }
                let mut after = before.clone();
                after.style.box_visible = *visible;
                Ok(EditDelta {
                    feature_change: Some(FeatureChange {
                        feature: f,
                        before,
                        after,
                    }),
                    ..EditDelta::default()
                })
            }
            Edit::DeleteFeature { feature } => {
                let f = self.live_feature(feature)?;
                let before = self.features[f as usize].state.clone();
                let mut delta = EditDelta::default();
                for c in self.candidates_of(f).filter(|c| !c.deleted) {
                    self.remove_candidate_into(graph, c, &mut delta);
                }
                delta.feature_change = Some(FeatureChange {
                    feature: f,
                    after: FeatureState {
                        deleted: true,
                        ..before.clone()
                    },
                    before,
                });
                Ok(delta)
            }
            Edit::DeleteCandidate { candidate } => {
                let c = self.live_candidate(*candidate)?;
                let mut delta = EditDelta::default();
                self.remove_candidate_into(graph, c, &mut delta);
                Ok(delta)
            }
            Edit::FixateCandidate { candidate } | Edit::UnfixateCandidate { candidate } => {
                let fixed = matches!(edit, Edit::FixateCandidate { .. });
                let c = self.live_candidate(*candidate)?;
                if c.fixed == fixed {
                    return Ok(EditDelta::default());
                }
                Ok(EditDelta {
                    fixation_changes: BTreeMap::from([(c.id, fixed)]),
                    candidate_changes: vec![CandidateChange {
                        before: Some(c.clone()),
                        after: Some(LabelCandidate { fixed, ..c.clone() }),
                    }],
                    ..EditDelta::default()
                })
            }
            Edit::SetCandidateWeight { candidate, weight } => {
                if !(*weight > 0.0 && weight.is_finite()) {
                    return Err(Error::InvalidInput(format!("weight must be positive, got {weight}")));
                }
                let c = self.live_candidate(*candidate)?;
                if c.weight == *weight {
                    return Ok(EditDelta::default());
                }
                Ok(EditDelta {
                    weight_changes: BTreeMap::from([(
                        c.id,
                        WeightChange {
                            old: c.weight,
                            new: *weight,
                        },
                    )]),
                    candidate_changes: vec![CandidateChange {
                        before: Some(c.clone()),
                        after: Some(LabelCandidate {
                            weight: *weight,
                            ..c.clone()
                        }),
                    }],
                    ..EditDelta::default()
                })
            }
            Edit::DragCandidate { candidate, x, y } => self.drag(graph, *candidate, *x, *y),
        }
    }

    fn remove_candidate_into(&self, graph: &ConflictGraph, c: &LabelCandidate, delta: &mut EditDelta) {
        if let Some(info) = graph.info(c.id) {
            delta.removed_vertices.insert(c.id, *info);
            delta.removed_edges.extend(graph.neighbors(c.id).map(|n| edge(c.id, n)));
        }
        delta.candidate_changes.push(CandidateChange {
            before: Some(c.clone()),
            after: Some(LabelCandidate {
                deleted: true,
                fixed: false,
                ..c.clone()
            }),
        });
        if c.fixed {
            // A deleted candidate never stays fixed; undo restores the flag from `before`.
            debug_assert!(delta.removed_vertices.contains_key(&c.id));
        }
    }

    /// Re-measures a feature and moves all its candidates to the new box size.
    fn restyle(&self, graph: &ConflictGraph, f: u32, after: FeatureState) -> Result<EditDelta> {
        let entry = &self.features[f as usize];
        let (w, h) = after.style.measure(&self.metrics)?;
        let mut delta = EditDelta::default();
        let mut moved: Vec<(CandidateId, Rect)> = Vec::new();
        for c in self.candidates_of(f) {
            let rect = match c.slot {
                Slot::Free => Rect { w, h, ..c.rect },
                slot => candgen::slot_rect(entry.anchor.0, entry.anchor.1, w, h, slot),
            };
            let updated = LabelCandidate {
                rect,
                font_size: after.style.font_size,
                padding: after.style.padding,
                text_lines: after.style.lines,
                ..c.clone()
            };
            if updated != *c {
                if !c.deleted && rect != c.rect {
                    moved.push((c.id, rect));
                }
                delta.candidate_changes.push(CandidateChange {
                    before: Some(c.clone()),
                    after: Some(updated),
                });
            }
        }
        for (id, rect) in moved {
            let fresh = self.neighbors_for(id, f, &rect, true);
            let old: BTreeSet<CandidateId> = graph.neighbors(id).collect();
            delta.removed_edges.extend(old.difference(&fresh).map(|&n| edge(id, n)));
            delta.added_edges.extend(fresh.difference(&old).map(|&n| edge(id, n)));
        }
        delta.feature_change = Some(FeatureChange {
            feature: f,
            before: entry.state.clone(),
            after,
        });
        Ok(delta)
    }

    fn drag(&self, graph: &ConflictGraph, candidate: CandidateId, x: f64, y: f64) -> Result<EditDelta> {
        let c = self.live_candidate(candidate)?;
        let world = world_size(self.zoom);
        if !(0.0..=world).contains(&x) || !(0.0..=world).contains(&y) {
            return Err(Error::InvalidInput(format!(
                "drag target ({x}, {y}) is outside the map"
            )));
        }
        let free_id = CandidateId::for_slot(c.feature, Slot::Free);
        let rect = Rect { x, y, ..c.rect };
        let existing = self.candidates.get(&free_id);
        let fixed = self.keep_fixed || existing.is_some_and(|e| !e.deleted && e.fixed);
        let moved = LabelCandidate {
            id: free_id,
            slot: Slot::Free,
            rect,
            fixed,
            deleted: false,
            ..c.clone()
        };
        let mut delta = EditDelta::default();
        let fresh = self.neighbors_for(free_id, c.feature, &rect, false);
        match existing.filter(|e| !e.deleted) {
            Some(prev) => {
                let old: BTreeSet<CandidateId> = graph.neighbors(free_id).collect();
                delta
                    .removed_edges
                    .extend(old.difference(&fresh).map(|&n| edge(free_id, n)));
                delta
                    .added_edges
                    .extend(fresh.difference(&old).map(|&n| edge(free_id, n)));
                if prev.fixed != fixed {
                    delta.fixation_changes.insert(free_id, fixed);
                }
                if prev.weight != moved.weight {
                    delta.weight_changes.insert(
                        free_id,
                        WeightChange {
                            old: prev.weight,
                            new: moved.weight,
                        },
                    );
                }
            }
            None => {
                delta.added_vertices.insert(free_id, moved.vertex_info());
                delta.added_edges.extend(fresh.iter().map(|&n| edge(free_id, n)));
            }
        }
        delta.candidate_changes.push(CandidateChange {
            before: existing.cloned(),
            after: Some(moved),
        });
        Ok(delta)
    }

    /// Applies the store-side part of a delta.
    pub fn apply(&mut self, delta: &EditDelta) {
        for change in &delta.candidate_changes {
            let id = change
                .before
                .as_ref()
                .or(change.after.as_ref())
                .map(|c| c.id)
                .expect("candidate change without a candidate");
            if let Some(old) = self.candidates.remove(&id) {
                if !old.deleted {
                    self.grid.remove(id, &old.rect);
                }
            }
            if let Some(new) = &change.after {
                if !new.deleted {
                    self.grid.insert(id, &new.rect);
                }
                self.candidates.insert(id, new.clone());
            }
        }
        if let Some(fc) = &delta.feature_change {
            self.features[fc.feature as usize].state = fc.after.clone();
            self.features[fc.feature as usize].point.deleted = fc.after.deleted;
        }
    }

    pub(crate) fn features_snapshot(&self) -> Vec<(FeaturePoint, FeatureState)> {
        self.features
            .iter()
            .map(|f| (f.point.clone(), f.state.clone()))
            .collect()
    }

    pub(crate) fn from_snapshot(
        features: Vec<(FeaturePoint, FeatureState)>,
        candidates: Vec<LabelCandidate>,
        zoom: u8,
        model: PositionModel,
        metrics: TextMetricsConfig,
        cell: f64,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(features.len());
        let mut by_name = HashMap::new();
        for (i, (point, state)) in features.into_iter().enumerate() {
            if by_name.insert(point.id.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate feature id {:?}", point.id)));
            }
            let anchor = candgen::project(point.lon, point.lat, zoom)?;
            entries.push(FeatureEntry { point, anchor, state });
        }
        let mut map = BTreeMap::new();
        for c in candidates {
            if c.feature as usize >= entries.len() {
                return Err(Error::InvalidInput(format!(
                    "candidate {} references a missing feature",
                    c.id
                )));
            }
            map.insert(c.id, c);
        }
        let mut store = LabelStore {
            zoom,
            model,
            metrics,
            features: entries,
            by_name,
            candidates: map,
            grid: SpatialGrid::new(cell),
            keep_fixed: true,
            shrink_precedence: false,
        };
        store.reindex();
        Ok(store)
    }

    pub(crate) fn grid_cell(&self) -> f64 {
        self.grid.cell_size()
    }
}

/// Candidate store plus the incrementally maintained conflict graph and a
/// linear undo stack.
#[derive(Clone, Debug)]
pub struct Workspace {
    store: LabelStore,
    graph: ConflictGraph,
    undo: Vec<EditDelta>,
}

impl Workspace {
    pub fn new(store: LabelStore) -> Result<Self> {
        let graph = store.conflict_graph()?;
        Ok(Workspace {
            store,
            graph,
            undo: Vec::new(),
        })
    }

    pub fn store(&self) -> &LabelStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut LabelStore {
        &mut self.store
    }

    pub fn graph(&self) -> &ConflictGraph {
        &self.graph
    }

    pub fn undo_depth(&self) -> usize {
        self.undo.len()
    }

    pub fn undo_stack(&self) -> &[EditDelta] {
        &self.undo
    }

    pub(crate) fn restore(store: LabelStore, undo: Vec<EditDelta>) -> Result<Self> {
        let mut ws = Workspace::new(store)?;
        ws.undo = undo;
        Ok(ws)
    }

    /// Computes and applies the delta for `edit`. On error nothing changes.
    pub fn apply_edit(&mut self, edit: &Edit) -> Result<EditDelta> {
        let delta = self.store.delta_for(&self.graph, edit)?;
        if !delta.is_empty() {
            apply_delta(&mut self.graph, &delta)?;
            self.store.apply(&delta);
            self.undo.push(delta.clone());
        }
        Ok(delta)
    }

    /// Reverts the most recent non-empty edit; returns the inverse delta applied.
    pub fn undo(&mut self) -> Result<Option<EditDelta>> {
        let Some(delta) = self.undo.pop() else {
            return Ok(None);
        };
        let inverse = delta.inverse();
        if let Err(e) = apply_delta(&mut self.graph, &inverse) {
            self.undo.push(delta);
            return Err(e);
        }
        self.store.apply(&inverse);
        Ok(Some(inverse))
    }
}
