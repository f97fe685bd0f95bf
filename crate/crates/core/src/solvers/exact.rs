//! Exact maximum-weight independent set by branch and bound.
//!
//! Each node applies exact reductions (isolated vertices, degree-one
//! domination, simplicial vertices that outweigh their clique), splits the
//! remaining graph into connected components, bounds with a greedy weighted
//! clique cover and branches on a maximum-degree vertex. Weights are scaled
//! to integers so optimality comparisons are exact.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::Dense;
use super::Progress;
use crate::error::{Error, Result};
use crate::model::{CandidateId, ConflictGraph, Labeling};

const SEARCH_STACK_BYTES: usize = 512 << 20;
const SIMPLICIAL_MAX_DEGREE: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExactParams {
    #[serde(with = "secs")]
    pub time_limit: Duration,
    pub weight_scale: u64,
    /// Optional deterministic cap on branch-and-bound nodes.
    #[serde(default)]
    pub node_limit: Option<u64>,
    /// Perturbation steps per vertex spent improving the first incumbent.
    #[serde(default = "default_perturbations")]
    pub perturbations_per_vertex: u32,
}

fn default_perturbations() -> u32 {
    8
}

impl Default for ExactParams {
    fn default() -> Self {
        ExactParams {
            time_limit: Duration::from_secs(60),
            weight_scale: 1_000_000,
            node_limit: None,
            perturbations_per_vertex: default_perturbations(),
        }
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl ExactParams {
    pub fn with_time_limit(secs: f64) -> Self {
        ExactParams {
            time_limit: Duration::from_secs_f64(secs),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.time_limit.is_zero() {
            return Err(Error::InvalidInput("time_limit must be positive".into()));
        }
        if self.weight_scale == 0 {
            return Err(Error::InvalidInput("weight_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub labeling: Labeling,
    /// True when the search finished within its limits.
    pub optimal: bool,
    pub nodes: u64,
}

/// Integer weight used by the exact solver and the WDIMACS encoding.
pub fn scaled_weight(weight: f64, scale: u64) -> u64 {
    ((weight * scale as f64).round() as u64).max(1)
}

pub fn solve_exact(graph: &ConflictGraph, params: &ExactParams) -> Result<ExactSolution> {
    exact_with_hint(graph, params, None, None)
}

/// Like [`solve_exact`], seeding the incumbent from `hint` (conflicting or
/// unknown ids in the hint are dropped).
pub fn solve_exact_with_hint(
    graph: &ConflictGraph,
    params: &ExactParams,
    hint: &BTreeSet<CandidateId>,
) -> Result<ExactSolution> {
    exact_with_hint(graph, params, Some(hint), None)
}

pub(crate) fn exact_with_hint(
    graph: &ConflictGraph,
    params: &ExactParams,
    hint: Option<&BTreeSet<CandidateId>>,
    progress: Option<&Progress>,
) -> Result<ExactSolution> {
    params.validate()?;
    let dense = Dense::new(graph);
    let hint: Vec<u32> = hint
        .into_iter()
        .flatten()
        .filter_map(|id| dense.index.get(id).copied())
        .collect();
    let weights: Vec<i64> = dense
        .weight
        .iter()
        .map(|&w| scaled_weight(w, params.weight_scale) as i64)
        .collect();
    let (selected, optimal, nodes) = std::thread::scope(|scope| {
        std::thread::Builder::new()
            .name("exact-search".into())
            .stack_size(SEARCH_STACK_BYTES)
            .spawn_scoped(scope, || {
                let mut search = Search::new(&dense.adj, weights, params, progress);
                let all = Bits::full(dense.len());
                let (_, selected) = search.solve_root(all, &hint);
                (selected, !search.aborted, search.nodes)
            })
            .expect("spawn exact search thread")
            .join()
            .expect("exact search panicked")
    });
    Ok(ExactSolution {
        labeling: dense.labeling(graph, selected),
        optimal,
        nodes,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn empty(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn full(n: usize) -> Self {
        let mut b = Bits::empty(n);
        for i in 0..n {
            b.set(i as u32);
        }
        b
    }

    fn set(&mut self, i: u32) {
        self.0[i as usize / 64] |= 1 << (i % 64);
    }

    fn clear(&mut self, i: u32) {
        self.0[i as usize / 64] &= !(1 << (i % 64));
    }

    fn get(&self, i: u32) -> bool {
        self.0[i as usize / 64] >> (i % 64) & 1 == 1
    }

    fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    fn count_and(&self, other: &Bits) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a & b).count_ones()).sum()
    }

    fn and_assign(&mut self, other: &Bits) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a &= b);
    }

    fn and_not_assign(&mut self, other: &Bits) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a &= !b);
    }

    fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros();
                w &= w - 1;
                Some(wi as u32 * 64 + bit)
            })
        })
    }
}

type Best = (i64, Vec<u32>);

struct LocalState {
    chosen: Vec<bool>,
    tight: Vec<u32>,
    total: i64,
    queue: VecDeque<u32>,
    queued: Vec<bool>,
}

impl LocalState {
    fn push(&mut self, v: u32) {
        if !self.queued[v as usize] {
            self.queued[v as usize] = true;
            self.queue.push_back(v);
        }
    }

    fn add(&mut self, search: &Search, v: u32) {
        self.chosen[v as usize] = true;
        self.total += search.w[v as usize];
        for &u in &search.adj[v as usize] {
            self.tight[u as usize] += 1;
        }
    }

    fn remove(&mut self, search: &Search, v: u32) {
        self.chosen[v as usize] = false;
        self.total -= search.w[v as usize];
        for &u in &search.adj[v as usize] {
            self.tight[u as usize] -= 1;
        }
    }

    fn best(&self, verts: &[u32]) -> Best {
        let sel: Vec<u32> = verts.iter().copied().filter(|&v| self.chosen[v as usize]).collect();
        (self.total, sel)
    }
}

struct RatioKey {
    ratio: f64,
    degree: u32,
    vertex: u32,
}

impl PartialEq for RatioKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for RatioKey {}

impl PartialOrd for RatioKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RatioKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ratio
            .total_cmp(&other.ratio)
            .then(other.vertex.cmp(&self.vertex))
            .then(self.degree.cmp(&other.degree))
    }
}

struct Search<'a> {
    adj: &'a [Vec<u32>],
    adj_bits: Vec<Bits>,
    w: Vec<i64>,
    /// Vertices sorted by weight descending, then degree ascending.
    order: Vec<u32>,
    started: Instant,
    time_limit: Duration,
    node_limit: u64,
    nodes: u64,
    perturbations: u32,
    aborted: bool,
    progress: Option<&'a Progress>,
}

impl<'a> Search<'a> {
    fn new(adj: &'a [Vec<u32>], w: Vec<i64>, params: &ExactParams, progress: Option<&'a Progress>) -> Self {
        let n = adj.len();
        let adj_bits = adj
            .iter()
            .map(|ns| {
                let mut b = Bits::empty(n);
                ns.iter().for_each(|&v| b.set(v));
                b
            })
            .collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| {
            w[b as usize]
                .cmp(&w[a as usize])
                .then(adj[a as usize].len().cmp(&adj[b as usize].len()))
                .then(a.cmp(&b))
        });
        Search {
            adj,
            adj_bits,
            w,
            order,
            started: Instant::now(),
            time_limit: params.time_limit,
            node_limit: params.node_limit.unwrap_or(u64::MAX),
            nodes: 0,
            perturbations: params.perturbations_per_vertex,
            aborted: false,
            progress,
        }
    }

    fn out_of_budget(&mut self) -> bool {
        if self.aborted {
            return true;
        }
        self.nodes += 1;
        if self.nodes > self.node_limit {
            self.aborted = true;
        } else if self.nodes.is_multiple_of(64) {
            let elapsed = self.started.elapsed();
            if let Some(p) = self.progress {
                p.set_fraction(elapsed.as_secs_f64() / self.time_limit.as_secs_f64());
            }
            if elapsed >= self.time_limit {
                self.aborted = true;
            }
        }
        self.aborted
    }

    fn degree(&self, v: u32, alive: &Bits) -> u32 {
        self.adj_bits[v as usize].count_and(alive)
    }

    fn take(&self, v: u32, alive: &mut Bits, cur: &mut Vec<u32>, cur_w: &mut i64) {
        alive.and_not_assign(&self.adj_bits[v as usize]);
        alive.clear(v);
        cur.push(v);
        *cur_w += self.w[v as usize];
    }

    /// Applies exact reductions until none fires.
    fn reduce(&self, alive: &mut Bits, cur: &mut Vec<u32>, cur_w: &mut i64) {
        loop {
            let mut changed = false;
            let vertices: Vec<u32> = alive.iter().collect();
            for v in vertices {
                if !alive.get(v) {
                    continue;
                }
                let deg = self.degree(v, alive);
                let wv = self.w[v as usize];
                let dominated = match deg {
                    0 => true,
                    1 => {
                        let u = self.live_neighbors(v, alive).next().expect("degree one");
                        wv >= self.w[u as usize]
                    }
                    d if d <= SIMPLICIAL_MAX_DEGREE => self.is_heavy_simplicial(v, alive),
                    _ => false,
                };
                if dominated {
                    self.take(v, alive, cur, cur_w);
                    changed = true;
                }
            }
            if !changed {
                return;
            }
        }
    }

    fn live_neighbors<'b>(&'b self, v: u32, alive: &'b Bits) -> impl Iterator<Item = u32> + 'b {
        self.adj[v as usize].iter().copied().filter(move |&u| alive.get(u))
    }

    /// `v`'s live neighborhood is a clique and none of it outweighs `v`.
    fn is_heavy_simplicial(&self, v: u32, alive: &Bits) -> bool {
        let wv = self.w[v as usize];
        let ns: Vec<u32> = self.live_neighbors(v, alive).collect();
        if ns.iter().any(|&u| self.w[u as usize] > wv) {
            return false;
        }
        ns.iter()
            .enumerate()
            .all(|(i, &a)| ns[i + 1..].iter().all(|&b| self.adj_bits[a as usize].get(b)))
    }

    fn components(&self, alive: &Bits) -> Vec<Bits> {
        let mut rest = alive.clone();
        let mut out = Vec::new();
        loop {
            let Some(start) = rest.iter().next() else { break };
            let mut comp = Bits::empty(self.adj.len());
            comp.set(start);
            rest.clear(start);
            let mut frontier = vec![start];
            while let Some(v) = frontier.pop() {
                for &u in &self.adj[v as usize] {
                    if rest.get(u) {
                        rest.clear(u);
                        comp.set(u);
                        frontier.push(u);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// Sum of the heaviest weight per clique of a greedy clique partition.
    fn clique_cover_bound(&self, alive: &Bits) -> i64 {
        let mut cliques: Vec<Bits> = Vec::new();
        let mut bound = 0;
        for &v in &self.order {
            if !alive.get(v) {
                continue;
            }
            match cliques.iter_mut().find(|c| c.get(v)) {
                Some(common) => common.and_assign(&self.adj_bits[v as usize]),
                None => {
                    let mut common = self.adj_bits[v as usize].clone();
                    common.and_assign(alive);
                    cliques.push(common);
                    bound += self.w[v as usize];
                }
            }
        }
        bound
    }

    /// Greedy completion of `start` inside `alive` in weight order, followed
    /// by single-vertex swaps that strictly increase the weight.
    /// Incumbent for the subgraph induced by `alive`: `start` first, then
    /// max w/(deg+1) picks, then swap-based local search.
    fn heuristic(&self, alive: &Bits, start: &[u32]) -> Best {
        let n = self.adj.len();
        let verts: Vec<u32> = alive.iter().collect();
        let mut chosen = vec![false; n];
        let mut tight = vec![0u32; n];
        let mut free = alive.clone();
        for &v in start {
            if free.get(v) {
                self.add(v, &mut chosen, &mut tight);
                free.clear(v);
                free.and_not_assign(&self.adj_bits[v as usize]);
            }
        }
        let mut deg = vec![0u32; n];
        let mut heap = BinaryHeap::new();
        for &v in &verts {
            if free.get(v) {
                deg[v as usize] = self.adj_bits[v as usize].count_and(&free);
                heap.push(self.ratio_key(v, deg[v as usize]));
            }
        }
        while let Some(key) = heap.pop() {
            let v = key.vertex;
            if !free.get(v) || key.degree != deg[v as usize] {
                continue;
            }
            self.add(v, &mut chosen, &mut tight);
            let removed: Vec<u32> = std::iter::once(v)
                .chain(self.adj[v as usize].iter().copied().filter(|&u| free.get(u)))
                .collect();
            for &r in &removed {
                free.clear(r);
            }
            for r in removed {
                for &x in &self.adj[r as usize] {
                    if free.get(x) {
                        deg[x as usize] -= 1;
                        heap.push(self.ratio_key(x, deg[x as usize]));
                    }
                }
            }
        }
        self.local_search(alive, &verts, chosen, tight)
    }

    fn ratio_key(&self, vertex: u32, degree: u32) -> RatioKey {
        RatioKey {
            ratio: self.w[vertex as usize] as f64 / f64::from(degree + 1),
            degree,
            vertex,
        }
    }

    fn add(&self, v: u32, chosen: &mut [bool], tight: &mut [u32]) {
        chosen[v as usize] = true;
        for &u in &self.adj[v as usize] {
            tight[u as usize] += 1;
        }
    }

    fn local_search(&self, alive: &Bits, verts: &[u32], chosen: Vec<bool>, tight: Vec<u32>) -> Best {
        let total = verts
            .iter()
            .filter(|&&v| chosen[v as usize])
            .map(|&v| self.w[v as usize])
            .sum();
        let mut st = LocalState {
            queued: vec![false; chosen.len()],
            queue: VecDeque::new(),
            chosen,
            tight,
            total,
        };
        for &v in verts {
            st.push(v);
        }
        self.improve(alive, &mut st);
        st.best(verts)
    }

    fn touch(&self, st: &mut LocalState, v: u32) {
        st.push(v);
        for &u in &self.adj[v as usize] {
            st.push(u);
            for &x in &self.adj[u as usize] {
                st.push(x);
            }
        }
    }

    /// Applies improving moves until none is left in the queued region:
    /// weighted (1,ω)-swaps (free insertions included) and (ω,1)-swaps over
    /// 1-tight neighbors.
    fn improve(&self, alive: &Bits, st: &mut LocalState) {
        while let Some(v) = st.queue.pop_front() {
            st.queued[v as usize] = false;
            if !alive.get(v) {
                continue;
            }
            if !st.chosen[v as usize] {
                let evicted: Vec<u32> = self.adj[v as usize]
                    .iter()
                    .copied()
                    .filter(|&u| st.chosen[u as usize])
                    .collect();
                let lost: i64 = evicted.iter().map(|&u| self.w[u as usize]).sum();
                if lost < self.w[v as usize] {
                    for &u in &evicted {
                        st.remove(self, u);
                    }
                    st.add(self, v);
                    self.touch(st, v);
                    for u in evicted {
                        self.touch(st, u);
                    }
                }
                continue;
            }
            let mut cand: Vec<u32> = self.adj[v as usize]
                .iter()
                .copied()
                .filter(|&x| alive.get(x) && !st.chosen[x as usize] && st.tight[x as usize] == 1)
                .collect();
            if cand.len() < 2 && cand.iter().all(|&x| self.w[x as usize] <= self.w[v as usize]) {
                continue;
            }
            cand.sort_by(|&a, &b| self.w[b as usize].cmp(&self.w[a as usize]).then(a.cmp(&b)));
            let mut picks: Vec<u32> = Vec::new();
            let mut gain = 0;
            for x in cand {
                if picks.iter().all(|&y| !self.adj_bits[x as usize].get(y)) {
                    picks.push(x);
                    gain += self.w[x as usize];
                }
            }
            if gain > self.w[v as usize] {
                st.remove(self, v);
                for &x in &picks {
                    st.add(self, x);
                }
                self.touch(st, v);
            }
        }
    }

    /// Iterated local search: force a random vertex in, repair locally, and
    /// fall back to the best solution whenever the walk gets worse.
    fn perturb_search(&self, alive: &Bits, start: Best, iterations: usize) -> Best {
        let n = self.adj.len();
        let verts: Vec<u32> = alive.iter().collect();
        if verts.len() < 2 || iterations == 0 {
            return start;
        }
        let mut chosen = vec![false; n];
        let mut tight = vec![0u32; n];
        for &v in &start.1 {
            self.add(v, &mut chosen, &mut tight);
        }
        let mut st = LocalState {
            queued: vec![false; n],
            queue: VecDeque::new(),
            chosen,
            tight,
            total: start.0,
        };
        let mut best_chosen = st.chosen.clone();
        let mut best_tight = st.tight.clone();
        let mut best_total = st.total;
        let mut rng = ChaCha8Rng::seed_from_u64(verts.len() as u64);
        for _ in 0..iterations {
            let x = verts[rng.gen_range(0..verts.len())];
            if st.chosen[x as usize] {
                continue;
            }
            let evicted: Vec<u32> = self.adj[x as usize]
                .iter()
                .copied()
                .filter(|&u| st.chosen[u as usize])
                .collect();
            for &u in &evicted {
                st.remove(self, u);
            }
            st.add(self, x);
            for u in evicted {
                self.touch(&mut st, u);
            }
            // x stays in during repair unless a swap through it improves.
            self.improve(alive, &mut st);
            match st.total.cmp(&best_total) {
                Ordering::Greater => {
                    best_total = st.total;
                    best_chosen.clone_from(&st.chosen);
                    best_tight.clone_from(&st.tight);
                }
                Ordering::Less => {
                    st.chosen.clone_from(&best_chosen);
                    st.tight.clone_from(&best_tight);
                    st.total = best_total;
                }
                Ordering::Equal => {}
            }
        }
        st.chosen = best_chosen;
        st.total = best_total;
        st.best(&verts)
    }

    /// Best independent set of the subgraph induced by `alive`.
    /// Best independent set of the whole graph; the first incumbent of every
    /// component is refined by perturbation before branching.
    fn solve_root(&mut self, mut alive: Bits, hint: &[u32]) -> Best {
        let mut sel = Vec::new();
        let mut total = 0;
        self.reduce(&mut alive, &mut sel, &mut total);
        for comp in self.components(&alive) {
            let (w, s) = self.solve_component(comp, hint, true);
            total += w;
            sel.extend(s);
        }
        (total, sel)
    }

    fn solve_component(&mut self, comp: Bits, hint: &[u32], root: bool) -> Best {
        let mut best = self.heuristic(&comp, hint);
        if !hint.is_empty() {
            let plain = self.heuristic(&comp, &[]);
            if plain.0 > best.0 {
                best = plain;
            }
        }
        if root {
            let size = comp.iter().count();
            best = self.perturb_search(&comp, best, size * self.perturbations as usize);
        }
        let mut cur = Vec::new();
        self.branch(comp, 0, &mut cur, &mut best);
        best
    }

    fn branch(&mut self, mut alive: Bits, mut cur_w: i64, cur: &mut Vec<u32>, best: &mut Best) {
        if self.out_of_budget() {
            return;
        }
        let mark = cur.len();
        self.reduce(&mut alive, cur, &mut cur_w);
        if alive.is_empty() {
            if cur_w > best.0 {
                *best = (cur_w, cur.clone());
            }
            cur.truncate(mark);
            return;
        }
        let comps = self.components(&alive);
        if comps.len() > 1 {
            let bound: i64 = comps.iter().map(|c| self.clique_cover_bound(c)).sum();
            if cur_w + bound > best.0 {
                let mut total = cur_w;
                let mut sel = cur.clone();
                for comp in comps {
                    let (w, s) = self.solve_component(comp, &[], false);
                    total += w;
                    sel.extend(s);
                }
                if total > best.0 {
                    *best = (total, sel);
                }
            }
            cur.truncate(mark);
            return;
        }
        if cur_w + self.clique_cover_bound(&alive) <= best.0 {
            cur.truncate(mark);
            return;
        }
        let v = alive
            .iter()
            .max_by_key(|&v| (self.degree(v, &alive), self.w[v as usize], std::cmp::Reverse(v)))
            .expect("non-empty");

        let mut with_v = alive.clone();
        with_v.and_not_assign(&self.adj_bits[v as usize]);
        with_v.clear(v);
        cur.push(v);
        self.branch(with_v, cur_w + self.w[v as usize], cur, best);
        cur.pop();

        alive.clear(v);
        self.branch(alive, cur_w, cur, best);
        cur.truncate(mark);
    }
}
