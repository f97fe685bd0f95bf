//! Chained local search and the POPMUSIC driver built on it.
//!
//! A chain starts at a seed feature, moves its label to the best alternative
//! candidate, evicts the labels that now overlap, lets freed features re-enter
//! greedily, and pushes the evicted features onto the chain. The best state
//! seen along the chain is kept if it beats the starting weight.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::Dense;
use super::Progress;
use crate::error::{Error, Result};
use crate::model::{validate_labeling, ConflictGraph, Labeling};

const IMPROVEMENT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainParams {
    pub max_chain_length: usize,
    /// Number of chains; `None` means 50 per feature.
    #[serde(default)]
    pub iteration_budget: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            max_chain_length: 8,
            iteration_budget: None,
            rng_seed: 0,
        }
    }
}

impl ChainParams {
    pub fn budget(&self, features: usize) -> usize {
        self.iteration_budget.unwrap_or(50 * features)
    }

    fn validate(&self) -> Result<()> {
        if self.max_chain_length == 0 {
            return Err(Error::InvalidInput("max_chain_length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopmusicParams {
    #[serde(default)]
    pub chain: ChainParams,
    pub subpart_label_bound: usize,
    pub tabu_tenure: usize,
}

impl Default for PopmusicParams {
    fn default() -> Self {
        PopmusicParams {
            chain: ChainParams::default(),
            subpart_label_bound: 40,
            tabu_tenure: 10,
        }
    }
}

#[derive(Clone, Copy)]
enum Change {
    Add(u32),
    Remove(u32),
}

struct Tabu {
    tenure: u64,
    clock: u64,
    until: Vec<u64>,
}

struct ChainLimits {
    max_len: usize,
    label_bound: Option<usize>,
}

struct ChainOutcome {
    improved: bool,
    touched: Vec<u32>,
}

struct SearchState<'a> {
    dense: &'a Dense,
    selected: Vec<bool>,
    label_of: Vec<Option<u32>>,
    total: f64,
    journal: Vec<Change>,
}

impl<'a> SearchState<'a> {
    fn new(dense: &'a Dense, initial: impl IntoIterator<Item = u32>) -> Self {
        let mut s = SearchState {
            dense,
            selected: vec![false; dense.len()],
            label_of: vec![None; dense.groups.len()],
            total: 0.0,
            journal: Vec::new(),
        };
        for v in initial {
            s.add(v);
        }
        s.journal.clear();
        s
    }

    fn add(&mut self, v: u32) {
        let vi = v as usize;
        debug_assert!(!self.selected[vi]);
        self.selected[vi] = true;
        self.label_of[self.dense.group[vi] as usize] = Some(v);
        self.total += self.dense.weight[vi];
        self.journal.push(Change::Add(v));
    }

    fn remove(&mut self, v: u32) {
        let vi = v as usize;
        debug_assert!(self.selected[vi]);
        self.selected[vi] = false;
        self.label_of[self.dense.group[vi] as usize] = None;
        self.total -= self.dense.weight[vi];
        self.journal.push(Change::Remove(v));
    }

    fn revert_to(&mut self, len: usize) {
        while self.journal.len() > len {
            match self.journal.pop().expect("non-empty") {
                Change::Add(v) => {
                    self.selected[v as usize] = false;
                    self.label_of[self.dense.group[v as usize] as usize] = None;
                    self.total -= self.dense.weight[v as usize];
                }
                Change::Remove(v) => {
                    self.selected[v as usize] = true;
                    self.label_of[self.dense.group[v as usize] as usize] = Some(v);
                    self.total += self.dense.weight[v as usize];
                }
            }
        }
    }

    fn is_free(&self, v: u32) -> bool {
        self.dense.adj[v as usize].iter().all(|&n| !self.selected[n as usize])
    }

    /// Weight gained by inserting `v` after evicting its selected neighbors.
    fn gain(&self, v: u32) -> f64 {
        let lost: f64 = self.dense.adj[v as usize]
            .iter()
            .filter(|&&n| self.selected[n as usize])
            .map(|&n| self.dense.weight[n as usize])
            .sum();
        self.dense.weight[v as usize] - lost
    }

    /// Inserts every conflict-free candidate of an unlabeled feature next to
    /// the evicted labels, heaviest first.
    fn reinsert_around(&mut self, evicted: &[u32]) {
        let mut pool: Vec<u32> = evicted
            .iter()
            .flat_map(|&u| self.dense.adj[u as usize].iter().copied().chain([u]))
            .filter(|&x| self.label_of[self.dense.group[x as usize] as usize].is_none())
            .collect();
        pool.sort_unstable_by(|&a, &b| {
            self.dense.weight[b as usize]
                .total_cmp(&self.dense.weight[a as usize])
                .then(self.dense.pref[a as usize].cmp(&self.dense.pref[b as usize]))
                .then(a.cmp(&b))
        });
        pool.dedup();
        for x in pool {
            if self.label_of[self.dense.group[x as usize] as usize].is_none() && self.is_free(x) {
                self.add(x);
            }
        }
    }

    fn chain(&mut self, seed: u32, limits: &ChainLimits, mut tabu: Option<&mut Tabu>) -> ChainOutcome {
        let start_len = self.journal.len();
        let start_total = self.total;
        let (mut best_total, mut best_len) = (self.total, start_len);
        let mut in_chain = vec![seed];
        let mut queue = VecDeque::from([seed]);
        let mut considered = 0usize;
        let mut steps = 0usize;

        'chain: while let Some(g) = queue.pop_front() {
            if steps >= limits.max_len {
                break;
            }
            let current = self.label_of[g as usize];
            let mut choice: Option<(f64, u32)> = None;
            for &c in &self.dense.groups[g as usize] {
                if Some(c) == current || tabu.as_ref().is_some_and(|t| t.until[c as usize] > t.clock) {
                    continue;
                }
                considered += 1;
                if limits.label_bound.is_some_and(|b| considered > b) {
                    break 'chain;
                }
                let gain = self.gain(c);
                let better = match choice {
                    None => true,
                    Some((best, b)) => {
                        gain > best + IMPROVEMENT_EPS
                            || (gain >= best - IMPROVEMENT_EPS
                                && (self.dense.pref[c as usize], c) < (self.dense.pref[b as usize], b))
                    }
                };
                if better {
                    choice = Some((gain, c));
                }
            }
            let Some((_, c)) = choice else { continue };

            let evicted: Vec<u32> = self.dense.adj[c as usize]
                .iter()
                .copied()
                .filter(|&n| self.selected[n as usize])
                .collect();
            for &u in &evicted {
                self.remove(u);
                if let Some(t) = tabu.as_deref_mut() {
                    t.until[u as usize] = t.clock + t.tenure;
                }
            }
            self.add(c);
            steps += 1;
            if let Some(t) = tabu.as_deref_mut() {
                t.clock += 1;
            }
            self.reinsert_around(&evicted);
            for &u in &evicted {
                let h = self.dense.group[u as usize];
                if self.label_of[h as usize].is_none() && !in_chain.contains(&h) {
                    in_chain.push(h);
                    queue.push_back(h);
                }
            }
            if self.total > best_total + IMPROVEMENT_EPS {
                best_total = self.total;
                best_len = self.journal.len();
            }
        }
        self.revert_to(best_len);
        ChainOutcome {
            improved: self.total > start_total + IMPROVEMENT_EPS,
            touched: in_chain,
        }
    }

    fn into_selection(self) -> impl Iterator<Item = u32> {
        self.selected
            .into_iter()
            .enumerate()
            .filter(|(_, on)| *on)
            .map(|(i, _)| i as u32)
    }
}

fn initial_indices(dense: &Dense, graph: &ConflictGraph, initial: &Labeling) -> Result<Vec<u32>> {
    if let Some(v) = validate_labeling(graph, initial).first() {
        return Err(Error::InvalidInput(format!("initial labeling is invalid: {v:?}")));
    }
    Ok(initial.selected.iter().map(|id| dense.index[id]).collect())
}

/// Seeded chained local search starting from `initial`. Never returns a
/// labeling lighter than `initial`.
pub fn solve_chain(graph: &ConflictGraph, initial: &Labeling, params: &ChainParams) -> Result<Labeling> {
    chain_with_progress(graph, initial, params, None)
}

pub(crate) fn chain_with_progress(
    graph: &ConflictGraph,
    initial: &Labeling,
    params: &ChainParams,
    progress: Option<&Progress>,
) -> Result<Labeling> {
    params.validate()?;
    let dense = Dense::new(graph);
    let start = initial_indices(&dense, graph, initial)?;
    let budget = params.budget(dense.groups.len());
    if budget == 0 || dense.groups.is_empty() {
        return Ok(Labeling::from_selection(graph, initial.selected.iter().copied()));
    }
    let mut state = SearchState::new(&dense, start);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let limits = ChainLimits {
        max_len: params.max_chain_length,
        label_bound: None,
    };
    for it in 0..budget {
        let seed = rng.gen_range(0..dense.groups.len()) as u32;
        state.chain(seed, &limits, None);
        if let Some(p) = progress {
            p.set_fraction((it + 1) as f64 / budget as f64);
        }
    }
    Ok(dense.labeling(graph, state.into_selection()))
}

/// POPMUSIC over per-feature sub-parts, starting from FALP.
pub fn solve_popmusic(graph: &ConflictGraph, params: &PopmusicParams) -> Result<Labeling> {
    popmusic_with_progress(graph, params, None)
}

pub(crate) fn popmusic_with_progress(
    graph: &ConflictGraph,
    params: &PopmusicParams,
    progress: Option<&Progress>,
) -> Result<Labeling> {
    params.chain.validate()?;
    if params.subpart_label_bound == 0 || params.tabu_tenure == 0 {
        return Err(Error::InvalidInput("popmusic bounds must be positive".into()));
    }
    let initial = super::solve_falp(graph);
    let dense = Dense::new(graph);
    let start = initial_indices(&dense, graph, &initial)?;
    let mut state = SearchState::new(&dense, start);
    let mut rng = ChaCha8Rng::seed_from_u64(params.chain.rng_seed);
    let groups = dense.groups.len();
    let mut tabu = Tabu {
        tenure: params.tabu_tenure as u64,
        clock: 0,
        until: vec![0; dense.len()],
    };
    let limits = ChainLimits {
        max_len: params.chain.max_chain_length,
        label_bound: Some(params.subpart_label_bound),
    };

    let mut in_list = vec![false; groups];
    let mut listed = 0usize;
    let mut pending: Vec<u32> = (0..groups as u32).collect();
    pending.shuffle(&mut rng);
    let mut pending = VecDeque::from(pending);
    let budget = params.chain.budget(groups).max(groups);
    let mut runs = 0usize;

    while let Some(g) = pending.pop_front() {
        if in_list[g as usize] {
            continue;
        }
        if runs >= budget {
            break;
        }
        runs += 1;
        let outcome = state.chain(g, &limits, Some(&mut tabu));
        if outcome.improved {
            for h in outcome.touched {
                if in_list[h as usize] {
                    in_list[h as usize] = false;
                    listed -= 1;
                    pending.push_back(h);
                }
            }
            pending.push_back(g);
        } else {
            in_list[g as usize] = true;
            listed += 1;
        }
        if let Some(p) = progress {
            p.set_fraction(listed as f64 / groups as f64);
        }
    }
    Ok(dense.labeling(graph, state.into_selection()))
}
