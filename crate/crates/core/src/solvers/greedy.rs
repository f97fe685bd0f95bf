use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dense::Dense;
use crate::error::{Error, Result};
use crate::model::{CandidateId, ConflictGraph, Labeling};

/// Maximal independent set by repeated maximum-weight picks; ties are broken
/// uniformly at random from `seed`. Every id in `preset` ends up selected.
pub fn solve_greedy(graph: &ConflictGraph, preset: &BTreeSet<CandidateId>, seed: u64) -> Result<Labeling> {
    check_independent(graph, preset)?;
    let dense = Dense::new(graph);
    let mut marked = vec![false; dense.len()];
    let mut selected = Vec::new();
    for id in preset {
        let v = dense.index[id];
        selected.push(v);
        marked[v as usize] = true;
        for &n in &dense.adj[v as usize] {
            marked[n as usize] = true;
        }
    }

    // A seeded shuffle followed by a stable sort picks uniformly among equal weights.
    let mut order: Vec<u32> = (0..dense.len() as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|&a, &b| dense.weight[b as usize].total_cmp(&dense.weight[a as usize]));
    for v in order {
        if marked[v as usize] {
            continue;
        }
        selected.push(v);
        marked[v as usize] = true;
        for &n in &dense.adj[v as usize] {
            marked[n as usize] = true;
        }
    }
    Ok(dense.labeling(graph, selected))
}

pub(crate) fn check_independent(graph: &ConflictGraph, set: &BTreeSet<CandidateId>) -> Result<()> {
    for &id in set {
        if !graph.contains(id) {
            return Err(Error::UnknownCandidate(id));
        }
        if let Some(n) = graph.neighbors(id).find(|n| set.contains(n)) {
            return Err(Error::NotIndependent(id.min(n), id.max(n)));
        }
    }
    Ok(())
}

#[derive(PartialEq)]
struct RatioKey {
    ratio: f64,
    vertex: u32,
    degree: u32,
}

impl Eq for RatioKey {}

impl Ord for RatioKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ratio.total_cmp(&other.ratio).then(self.vertex.cmp(&other.vertex))
    }
}

impl PartialOrd for RatioKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Complement of a greedy vertex cover: repeatedly moves the vertex with the
/// smallest `weight / degree` into the cover until no edge is left. Cover
/// vertices whose neighbors all ended up in the cover are released again,
/// latest first, so the result is maximal.
pub fn solve_mis(graph: &ConflictGraph) -> Labeling {
    let dense = Dense::new(graph);
    let n = dense.len();
    let mut degree: Vec<u32> = dense.adj.iter().map(|a| a.len() as u32).collect();
    let mut in_cover = vec![false; n];
    let mut order = Vec::new();
    let key = |v: u32, d: u32| {
        Reverse(RatioKey {
            ratio: dense.weight[v as usize] / f64::from(d),
            vertex: v,
            degree: d,
        })
    };
    let mut heap: BinaryHeap<Reverse<RatioKey>> = (0..n as u32)
        .filter(|&v| degree[v as usize] > 0)
        .map(|v| key(v, degree[v as usize]))
        .collect();

    while let Some(Reverse(top)) = heap.pop() {
        let u = top.vertex as usize;
        if in_cover[u] || degree[u] == 0 || degree[u] != top.degree {
            continue;
        }
        in_cover[u] = true;
        order.push(u);
        for &v in &dense.adj[u] {
            let v = v as usize;
            if in_cover[v] {
                continue;
            }
            degree[v] -= 1;
            if degree[v] > 0 {
                heap.push(key(v as u32, degree[v]));
            }
        }
    }
    for &u in order.iter().rev() {
        if dense.adj[u].iter().all(|&v| in_cover[v as usize]) {
            in_cover[u] = false;
        }
    }
    dense.labeling(graph, (0..n as u32).filter(|&v| !in_cover[v as usize]))
}

/// Conflict-count-first greedy: picks the live candidate with the fewest live
/// conflicts (ties: slot preference, then id), removes its conflicts and its
/// feature's other candidates, and updates the counts incrementally.
pub fn solve_falp(graph: &ConflictGraph) -> Labeling {
    let dense = Dense::new(graph);
    let n = dense.len();
    let mut count: Vec<u32> = dense.adj.iter().map(|a| a.len() as u32).collect();
    let mut dead = vec![false; n];
    let mut selected = Vec::new();
    let mut heap: BinaryHeap<Reverse<(u32, u8, u32)>> = (0..n as u32)
        .map(|v| Reverse((count[v as usize], dense.pref[v as usize], v)))
        .collect();

    while let Some(Reverse((c, _, v))) = heap.pop() {
        let vi = v as usize;
        if dead[vi] || c != count[vi] {
            continue;
        }
        dead[vi] = true;
        selected.push(v);
        let mut doomed = Vec::new();
        for &u in dense.adj[vi].iter().chain(&dense.groups[dense.group[vi] as usize]) {
            if !dead[u as usize] {
                dead[u as usize] = true;
                doomed.push(u);
            }
        }
        for r in doomed {
            for &x in &dense.adj[r as usize] {
                let xi = x as usize;
                if !dead[xi] {
                    count[xi] -= 1;
                    heap.push(Reverse((count[xi], dense.pref[xi], x)));
                }
            }
        }
    }
    dense.labeling(graph, selected)
}
