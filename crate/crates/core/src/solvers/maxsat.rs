use std::collections::HashMap;

use super::exact::scaled_weight;
use crate::model::{CandidateId, ConflictGraph, PmaxsatFormula};

/// One variable per vertex, a hard clause `(¬x_u ∨ ¬x_v)` per conflict edge
/// and a soft unit clause `x_u` weighted by the scaled vertex weight.
pub fn to_pmaxsat(graph: &ConflictGraph, weight_scale: u64) -> PmaxsatFormula {
    let variables: Vec<CandidateId> = graph.ids().collect();
    let var: HashMap<CandidateId, u32> = variables
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as u32 + 1))
        .collect();
    let hard_clauses = graph.edges().map(|(a, b)| (var[&a], var[&b])).collect();
    let soft_clauses = graph
        .vertices()
        .map(|(id, info)| (var[&id], scaled_weight(info.weight, weight_scale)))
        .collect();
    PmaxsatFormula {
        variables,
        hard_clauses,
        soft_clauses,
    }
}
