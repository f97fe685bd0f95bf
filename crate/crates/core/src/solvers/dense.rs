use std::collections::HashMap;

use crate::model::{CandidateId, ConflictGraph, Labeling};

/// Index-based snapshot of a [`ConflictGraph`]. Vertex order follows id order,
/// so "lowest index" and "lowest id" tie-breaks coincide.
pub(crate) struct Dense {
    pub ids: Vec<CandidateId>,
    pub index: HashMap<CandidateId, u32>,
    pub adj: Vec<Vec<u32>>,
    pub weight: Vec<f64>,
    pub pref: Vec<u8>,
    /// Feature group of each vertex, densely renumbered.
    pub group: Vec<u32>,
    pub groups: Vec<Vec<u32>>,
}

impl Dense {
    pub fn new(graph: &ConflictGraph) -> Self {
        let ids: Vec<CandidateId> = graph.ids().collect();
        let index: HashMap<CandidateId, u32> = ids.iter().enumerate().map(|(i, &id)| (id, i as u32)).collect();
        let mut adj = Vec::with_capacity(ids.len());
        let mut weight = Vec::with_capacity(ids.len());
        let mut pref = Vec::with_capacity(ids.len());
        let mut group = Vec::with_capacity(ids.len());
        let mut groups: Vec<Vec<u32>> = Vec::new();
        let mut group_of_feature: HashMap<u32, u32> = HashMap::new();
        for (i, (id, info)) in graph.vertices().enumerate() {
            adj.push(graph.neighbors(id).map(|n| index[&n]).collect());
            weight.push(info.weight);
            pref.push(info.slot.preference());
            let g = *group_of_feature.entry(info.feature).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() as u32 - 1
            });
            groups[g as usize].push(i as u32);
            group.push(g);
        }
        Dense {
            ids,
            index,
            adj,
            weight,
            pref,
            group,
            groups,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn labeling(&self, graph: &ConflictGraph, selected: impl IntoIterator<Item = u32>) -> Labeling {
        Labeling::from_selection(graph, selected.into_iter().map(|i| self.ids[i as usize]))
    }
}
