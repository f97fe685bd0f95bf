//! Domain types shared by every other module: feature points, label
//! candidates, the weighted conflict graph and labelings on it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latitude bound of the Web-Mercator square world.
pub const MAX_MERCATOR_LAT: f64 = 85.051_128_779_806_6;

/// Relative tolerance used when comparing stored and recomputed weights.
pub const WEIGHT_REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateId(pub u32);

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl CandidateId {
    /// Stable id of the candidate occupying `slot` of the feature at `feature_index`.
    /// Rebuilding the candidates of a dataset always reproduces the same ids.
    pub fn for_slot(feature_index: u32, slot: Slot) -> Self {
        CandidateId(feature_index * Slot::COUNT as u32 + slot.index() as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub id: String,
    pub name: String,
    pub lon: f64,
    pub lat: f64,
    #[serde(default = "default_weight")]
    pub base_weight: f64,
    #[serde(default)]
    pub deleted: bool,
}

fn default_weight() -> f64 {
    1.0
}

impl FeaturePoint {
    pub fn new(id: impl Into<String>, name: impl Into<String>, lon: f64, lat: f64) -> Result<Self> {
        let point = FeaturePoint {
            id: id.into(),
            name: name.into(),
            lon,
            lat,
            base_weight: 1.0,
            deleted: false,
        };
        point.validate()?;
        Ok(point)
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        self.base_weight = weight;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::InvalidInput(format!(
                "feature {:?}: longitude {} outside [-180, 180]",
                self.id, self.lon
            )));
        }
        if !(-MAX_MERCATOR_LAT..=MAX_MERCATOR_LAT).contains(&self.lat) {
            return Err(Error::InvalidInput(format!(
                "feature {:?}: latitude {} outside the Web-Mercator range",
                self.id, self.lat
            )));
        }
        if !(self.base_weight > 0.0 && self.base_weight.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "feature {:?}: weight must be positive, got {}",
                self.id, self.base_weight
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box in screen pixels; `(x, y)` is the minimum corner, y grows downward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rectangle needs finite coordinates and positive extents, got {w}x{h} at ({x}, {y})"
            )));
        }
        Ok(Rect { x, y, w, h })
    }

    pub fn max_x(&self) -> f64 {
        self.x + self.w
    }

    pub fn max_y(&self) -> f64 {
        self.y + self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    /// Whether `(px, py)` lies on the closed rectangle.
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px <= self.max_x() && py >= self.y && py <= self.max_y()
    }
}

/// Anchor position of a candidate relative to its feature.
///
/// Declaration order is the preference order used for tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    AboveRight,
    AboveLeft,
    BelowRight,
    BelowLeft,
    RightCenter,
    LeftCenter,
    AboveCenter,
    BelowCenter,
    Free,
}

impl Slot {
    pub const COUNT: usize = 9;

    pub const CORNERS: [Slot; 4] = [Slot::AboveRight, Slot::AboveLeft, Slot::BelowRight, Slot::BelowLeft];

    pub const EIGHT: [Slot; 8] = [
        Slot::AboveRight,
        Slot::AboveLeft,
        Slot::BelowRight,
        Slot::BelowLeft,
        Slot::RightCenter,
        Slot::LeftCenter,
        Slot::AboveCenter,
        Slot::BelowCenter,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lower is more preferred.
    pub fn preference(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: usize) -> Option<Slot> {
        Slot::EIGHT.get(i).copied().or((i == 8).then_some(Slot::Free))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PositionModel {
    Four,
    Eight,
}

impl PositionModel {
    pub fn slots(self) -> &'static [Slot] {
        match self {
            PositionModel::Four => &Slot::CORNERS,
            PositionModel::Eight => &Slot::EIGHT,
        }
    }
}

impl TryFrom<u8> for PositionModel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            4 => Ok(PositionModel::Four),
            8 => Ok(PositionModel::Eight),
            other => Err(format!("position model must be 4 or 8, got {other}")),
        }
    }
}

impl From<PositionModel> for u8 {
    fn from(m: PositionModel) -> u8 {
        match m {
            PositionModel::Four => 4,
            PositionModel::Eight => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelCandidate {
    pub id: CandidateId,
    /// Index of the owning feature in its dataset.
    pub feature: u32,
    pub rect: Rect,
    pub slot: Slot,
    pub weight: f64,
    pub fixed: bool,
    pub deleted: bool,
    pub font_size: f64,
    pub padding: f64,
    pub text_lines: u32,
}

impl LabelCandidate {
    pub fn vertex_info(&self) -> VertexInfo {
        VertexInfo {
            weight: self.weight,
            feature: self.feature,
            slot: self.slot,
            fixed: self.fixed,
        }
    }
}

/// Per-vertex payload of the conflict graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexInfo {
    pub weight: f64,
    pub feature: u32,
    pub slot: Slot,
    pub fixed: bool,
}

impl VertexInfo {
    pub fn new(weight: f64, feature: u32) -> Self {
        VertexInfo {
            weight,
            feature,
            slot: Slot::AboveRight,
            fixed: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Vertex {
    info: VertexInfo,
    neighbors: BTreeSet<CandidateId>,
}

/// Weighted conflict graph over live candidates.
///
/// Ordered maps keep iteration deterministic, which every seeded solver relies on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConflictGraph {
    vertices: BTreeMap<CandidateId, Vertex>,
    edge_count: usize,
}

impl ConflictGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from explicit vertices and edges. Each vertex keeps the
    /// feature given in its info; edges referencing unknown ids are rejected.
    pub fn from_parts(
        vertices: impl IntoIterator<Item = (CandidateId, VertexInfo)>,
        edges: impl IntoIterator<Item = (CandidateId, CandidateId)>,
    ) -> Result<Self> {
        let mut g = ConflictGraph::new();
        for (id, info) in vertices {
            g.add_vertex(id, info)?;
        }
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, id: CandidateId) -> bool {
        self.vertices.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = CandidateId> + '_ {
        self.vertices.keys().copied()
    }

    pub fn info(&self, id: CandidateId) -> Option<&VertexInfo> {
        self.vertices.get(&id).map(|v| &v.info)
    }

    pub fn weight(&self, id: CandidateId) -> Option<f64> {
        self.info(id).map(|i| i.weight)
    }

    pub fn degree(&self, id: CandidateId) -> usize {
        self.vertices.get(&id).map_or(0, |v| v.neighbors.len())
    }

    pub fn neighbors(&self, id: CandidateId) -> impl Iterator<Item = CandidateId> + '_ {
        self.vertices
            .get(&id)
            .into_iter()
            .flat_map(|v| v.neighbors.iter().copied())
    }

    pub fn has_edge(&self, a: CandidateId, b: CandidateId) -> bool {
        self.vertices.get(&a).is_some_and(|v| v.neighbors.contains(&b))
    }

    /// Edges as ordered pairs `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (CandidateId, CandidateId)> + '_ {
        self.vertices
            .iter()
            .flat_map(|(&u, v)| v.neighbors.range(u..).map(move |&w| (u, w)))
    }

    pub fn vertices(&self) -> impl Iterator<Item = (CandidateId, &VertexInfo)> + '_ {
        self.vertices.iter().map(|(&id, v)| (id, &v.info))
    }

    pub fn fixed(&self) -> impl Iterator<Item = CandidateId> + '_ {
        self.vertices.iter().filter(|(_, v)| v.info.fixed).map(|(&id, _)| id)
    }

    pub fn total_weight(&self) -> f64 {
        self.vertices.values().map(|v| v.info.weight).sum()
    }

    pub fn add_vertex(&mut self, id: CandidateId, info: VertexInfo) -> Result<()> {
        if !(info.weight > 0.0 && info.weight.is_finite()) {
            return Err(Error::InvalidInput(format!("vertex {id}: weight must be positive")));
        }
        if self.vertices.contains_key(&id) {
            return Err(Error::InconsistentDelta(format!("vertex {id} already present")));
        }
        self.vertices.insert(
            id,
            Vertex {
                info,
                neighbors: BTreeSet::new(),
            },
        );
        Ok(())
    }

    /// Removes a vertex together with its incident edges and returns its info.
    pub fn remove_vertex(&mut self, id: CandidateId) -> Result<VertexInfo> {
        let vertex = self.vertices.remove(&id).ok_or(Error::UnknownCandidate(id))?;
        for n in &vertex.neighbors {
            if let Some(nv) = self.vertices.get_mut(n) {
                nv.neighbors.remove(&id);
            }
        }
        self.edge_count -= vertex.neighbors.len();
        Ok(vertex.info)
    }

    /// Adds an undirected edge; returns false if it already existed.
    pub fn add_edge(&mut self, a: CandidateId, b: CandidateId) -> Result<bool> {
        if a == b {
            return Err(Error::InconsistentDelta(format!("self-loop on {a}")));
        }
        if !self.vertices.contains_key(&b) {
            return Err(Error::UnknownCandidate(b));
        }
        let inserted = self
            .vertices
            .get_mut(&a)
            .ok_or(Error::UnknownCandidate(a))?
            .neighbors
            .insert(b);
        if inserted {
            self.vertices.get_mut(&b).expect("checked above").neighbors.insert(a);
            self.edge_count += 1;
        }
        Ok(inserted)
    }

    /// Removes an undirected edge; returns false if it was absent.
    pub fn remove_edge(&mut self, a: CandidateId, b: CandidateId) -> bool {
        let removed = self.vertices.get_mut(&a).is_some_and(|v| v.neighbors.remove(&b));
        if removed {
            if let Some(v) = self.vertices.get_mut(&b) {
                v.neighbors.remove(&a);
            }
            self.edge_count -= 1;
        }
        removed
    }

    pub fn set_weight(&mut self, id: CandidateId, weight: f64) -> Result<f64> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidInput(format!("vertex {id}: weight must be positive")));
        }
        let v = self.vertices.get_mut(&id).ok_or(Error::UnknownCandidate(id))?;
        Ok(std::mem::replace(&mut v.info.weight, weight))
    }

    pub fn set_fixed(&mut self, id: CandidateId, fixed: bool) -> Result<bool> {
        let v = self.vertices.get_mut(&id).ok_or(Error::UnknownCandidate(id))?;
        Ok(std::mem::replace(&mut v.info.fixed, fixed))
    }

    /// Checks symmetry, irreflexivity, edge count and the same-feature clique rule.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut directed = 0usize;
        let mut by_feature: BTreeMap<u32, Vec<CandidateId>> = BTreeMap::new();
        for (&id, v) in &self.vertices {
            by_feature.entry(v.info.feature).or_default().push(id);
            for &n in &v.neighbors {
                if n == id {
                    return Err(format!("self-loop on {id}"));
                }
                match self.vertices.get(&n) {
                    None => return Err(format!("edge {id}-{n} references a missing vertex")),
                    Some(nv) if !nv.neighbors.contains(&id) => return Err(format!("edge {id}-{n} is not symmetric")),
                    _ => {}
                }
                directed += 1;
            }
        }
        if directed != 2 * self.edge_count {
            return Err(format!(
                "edge count {} disagrees with adjacency ({directed} half-edges)",
                self.edge_count
            ));
        }
        for (feature, ids) in by_feature {
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    if !self.has_edge(a, b) {
                        return Err(format!("feature {feature}: candidates {a} and {b} are not in conflict"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A set of selected candidates and its total weight.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub selected: BTreeSet<CandidateId>,
    pub total_weight: f64,
}

impl Labeling {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a labeling whose weight is read from `graph`. Ids missing from the
    /// graph contribute nothing and are caught by [`validate_labeling`].
    pub fn from_selection(graph: &ConflictGraph, selected: impl IntoIterator<Item = CandidateId>) -> Self {
        let selected: BTreeSet<CandidateId> = selected.into_iter().collect();
        let total_weight = selected.iter().filter_map(|&id| graph.weight(id)).sum();
        Labeling { selected, total_weight }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, id: CandidateId) -> bool {
        self.selected.contains(&id)
    }

    /// Recomputes the weight on `graph` and compares it with the stored value.
    pub fn weight_consistent(&self, graph: &ConflictGraph) -> bool {
        let fresh: f64 = self.selected.iter().filter_map(|&id| graph.weight(id)).sum();
        let scale = fresh.abs().max(self.total_weight.abs()).max(1.0);
        (fresh - self.total_weight).abs() <= WEIGHT_REL_TOL * scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownCandidate {
        id: CandidateId,
    },
    Conflict {
        a: CandidateId,
        b: CandidateId,
    },
    SameFeature {
        feature: u32,
        a: CandidateId,
        b: CandidateId,
    },
}

/// Lists every reason `labeling` is not a valid labeling of `graph`.
pub fn validate_labeling(graph: &ConflictGraph, labeling: &Labeling) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut first_of_feature: BTreeMap<u32, CandidateId> = BTreeMap::new();
    for &id in &labeling.selected {
        let Some(info) = graph.info(id) else {
            violations.push(Violation::UnknownCandidate { id });
            continue;
        };
        for n in graph.neighbors(id) {
            if n > id && labeling.selected.contains(&n) {
                violations.push(Violation::Conflict { a: id, b: n });
            }
        }
        match first_of_feature.get(&info.feature) {
            Some(&other) if !graph.has_edge(other, id) => violations.push(Violation::SameFeature {
                feature: info.feature,
                a: other,
                b: id,
            }),
            Some(_) => {}
            None => {
                first_of_feature.insert(info.feature, id);
            }
        }
    }
    violations
}

/// Re-optimization parameters: ε-boost for previously selected labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateParams {
    pub epsilon: f64,
    /// Derive ε from the previous solution size so weight strictly dominates stability.
    #[serde(default)]
    pub strict_mode: bool,
}

impl Default for UpdateParams {
    fn default() -> Self {
        UpdateParams {
            epsilon: 1.0,
            strict_mode: false,
        }
    }
}

impl UpdateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// ε actually applied for a previous solution of `k` labels.
    pub fn effective_epsilon(&self, k: usize) -> f64 {
        if self.strict_mode {
            1.0 / (2.0 * k.max(1) as f64)
        } else {
            self.epsilon
        }
    }
}

/// Partial weighted MaxSAT encoding of a conflict graph.
///
/// Variable `i` (1-based) stands for `variables[i - 1]`. Hard clauses are binary
/// `(¬x_a ∨ ¬x_b)`, soft clauses unit `x_i` with an integer weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PmaxsatFormula {
    pub variables: Vec<CandidateId>,
    pub hard_clauses: Vec<(u32, u32)>,
    pub soft_clauses: Vec<(u32, u64)>,
}

impl PmaxsatFormula {
    /// Weight assigned to hard clauses: one more than the total soft weight.
    pub fn top(&self) -> u64 {
        self.soft_clauses.iter().map(|&(_, w)| w).sum::<u64>() + 1
    }

    /// WDIMACS text: `p wcnf <nvars> <nclauses> <top>`, hard clauses first.
    pub fn to_wdimacs(&self) -> String {
        use std::fmt::Write;
        let top = self.top();
        let mut out = String::new();
        let nclauses = self.hard_clauses.len() + self.soft_clauses.len();
        writeln!(out, "p wcnf {} {} {}", self.variables.len(), nclauses, top).unwrap();
        for &(a, b) in &self.hard_clauses {
            writeln!(out, "{top} -{a} -{b} 0").unwrap();
        }
        for &(v, w) in &self.soft_clauses {
            writeln!(out, "{w} {v} 0").unwrap();
        }
        out
    }

    /// Whether every hard clause holds; `assignment[i]` is variable `i + 1`.
    pub fn hard_satisfied(&self, assignment: &[bool]) -> bool {
        self.hard_clauses
            .iter()
            .all(|&(a, b)| !(assignment[a as usize - 1] && assignment[b as usize - 1]))
    }

    pub fn soft_weight(&self, assignment: &[bool]) -> u64 {
        self.soft_clauses
            .iter()
            .filter(|&&(v, _)| assignment[v as usize - 1])
            .map(|&(_, w)| w)
            .sum()
    }

    /// Selects candidate `variables[i]` iff `assignment[i]` is true.
    pub fn decode(&self, assignment: &[bool]) -> BTreeSet<CandidateId> {
        self.variables
            .iter()
            .zip(assignment)
            .filter(|(_, &on)| on)
            .map(|(&id, _)| id)
            .collect()
    }
}
