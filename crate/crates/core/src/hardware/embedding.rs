//! Minor embeddings: chains of physical qubits standing in for logical spins.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chimera::{max_clique_size, ChimeraGraph};
use crate::error::{Error, Result};
use crate::qubo::IsingModel;
use crate::seed;

/// `chains[i]` lists the hardware qubits that represent logical variable `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Embedding {
    pub chains: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStats {
    pub max_chain: usize,
    pub total_qubits: usize,
    /// Population variance of the chain lengths.
    pub chain_length_variance: f64,
}

/// Logical couplings with a nonzero coefficient, as `(i, j)` with `i < j`.
pub fn problem_edges(ising: &IsingModel) -> Vec<(usize, usize)> {
    ising
        .couplings
        .iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|(&k, _)| k)
        .collect()
}

impl Embedding {
    pub fn identity_on(qubits: &[usize]) -> Self {
        Embedding {
            chains: qubits.iter().map(|&q| vec![q]).collect(),
        }
    }

    pub fn num_variables(&self) -> usize {
        self.chains.len()
    }

    pub fn qubit_count(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn max_chain_length(&self) -> usize {
        self.chains.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn stats(&self) -> EmbeddingStats {
        let n = self.chains.len().max(1) as f64;
        let mean = self.qubit_count() as f64 / n;
        let var = self
            .chains
            .iter()
            .map(|c| (c.len() as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        EmbeddingStats {
            max_chain: self.max_chain_length(),
            total_qubits: self.qubit_count(),
            chain_length_variance: var,
        }
    }

    /// No qubit belongs to two chains (or twice to one).
    pub fn chains_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.chains.iter().flatten().all(|&q| seen.insert(q))
    }

    /// Every chain is non-empty, uses active qubits only, and induces a
    /// connected subgraph of the active hardware graph.
    pub fn chains_connected(&self, graph: &ChimeraGraph) -> bool {
        self.chains.iter().all(|chain| {
            if chain.is_empty() || chain.iter().any(|&q| !graph.is_active(q)) {
                return false;
            }
            let members: BTreeSet<usize> = chain.iter().copied().collect();
            let mut seen = BTreeSet::from([chain[0]]);
            let mut queue = VecDeque::from([chain[0]]);
            while let Some(q) = queue.pop_front() {
                for &r in graph.neighbors(q) {
                    if members.contains(&r) && seen.insert(r) {
                        queue.push_back(r);
                    }
                }
            }
            seen.len() == members.len()
        })
    }

    /// Every logical edge has at least one active hardware edge between the
    /// two chains.
    pub fn covers_edges(&self, edges: &[(usize, usize)], graph: &ChimeraGraph) -> bool {
        edges.iter().all(|&(i, j)| {
            i < self.chains.len()
                && j < self.chains.len()
                && first_link(&self.chains[i], &self.chains[j], graph).is_some()
        })
    }

    pub fn verify(&self, n_vars: usize, edges: &[(usize, usize)], graph: &ChimeraGraph) -> Result<()> {
        if self.chains.len() != n_vars {
            return Err(Error::Embedding(format!(
                "{} chains for {n_vars} variables",
                self.chains.len()
            )));
        }
        if !self.chains_disjoint() {
            return Err(Error::Embedding("chains overlap".into()));
        }
        if !self.chains_connected(graph) {
            return Err(Error::Embedding("a chain is empty, inactive or disconnected".into()));
        }
        if !self.covers_edges(edges, graph) {
            return Err(Error::Embedding("a logical coupling has no hardware edge".into()));
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Smallest hardware edge `(a, b)`, `a < b`, joining the two chains.
fn first_link(a: &[usize], b: &[usize], graph: &ChimeraGraph) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for &p in a {
        for &q in b {
            if graph.has_edge(p, q) {
                let e = (p.min(q), p.max(q));
                if best.is_none_or(|cur| e < cur) {
                    best = Some(e);
                }
            }
        }
    }
    best
}

/// Triangle-layout embedding of the complete graph `K_V`.
///
/// Variables `4b..4b+3` form block `b`; chain `(b, k)` runs down column `b`
/// on the vertical half to the diagonal cell and then along row `b` on the
/// horizontal half. For `V = 4s + 1` the last chain is split into its
/// vertical and horizontal halves (both stretched over the full grid) and the
/// other blocks reach the bottom row so the horizontal half can touch them.
pub fn clique_embedding(v: usize, graph: &ChimeraGraph) -> Result<Embedding> {
    let s = graph.side();
    if v > max_clique_size(s) {
        return Err(Error::Embedding(format!(
            "K_{v} exceeds the largest clique {} on side {s}",
            max_clique_size(s)
        )));
    }
    let mut chains = Vec::with_capacity(v);
    if v <= 4 * s {
        let grid = v.div_ceil(4);
        for i in 0..v {
            let (b, k) = (i / 4, i % 4);
            let mut chain: Vec<usize> = (0..=b).map(|r| graph.qubit(r, b, 0, k)).collect();
            chain.extend((b..grid).map(|c| graph.qubit(b, c, 1, k)));
            chains.push(chain);
        }
    } else {
        for i in 0..4 * s - 1 {
            let (b, k) = (i / 4, i % 4);
            let mut chain: Vec<usize> = (0..s).map(|r| graph.qubit(r, b, 0, k)).collect();
            chain.extend((b..s).map(|c| graph.qubit(b, c, 1, k)));
            chains.push(chain);
        }
        chains.push((0..s).map(|r| graph.qubit(r, s - 1, 0, 3)).collect());
        chains.push((0..s).map(|c| graph.qubit(s - 1, c, 1, 3)).collect());
    }
    let emb = Embedding { chains };
    let edges: Vec<(usize, usize)> = (0..v).flat_map(|i| ((i + 1)..v).map(move |j| (i, j))).collect();
    emb.verify(v, &edges, graph).map_err(|_| {
        Error::Embedding("inactive qubits or couplers block the clique construction".into())
    })?;
    Ok(emb)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyOptions {
    /// Independent randomized attempts; the best result is kept.
    pub tries: usize,
    /// Rip-up-and-reroute passes over all chains per attempt.
    pub refinement_rounds: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions {
            tries: 64,
            refinement_rounds: 8,
        }
    }
}

/// Min-heap entry for node-weighted Dijkstra.
#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

const PRESENT_START: f64 = 1.0;
const PRESENT_GROWTH: f64 = 1.2;
const HISTORY_STEP: f64 = 1.0;
/// Passes without a better overlap-free placement before an attempt stops.
const PATIENCE: usize = 2;

struct Router<'a> {
    graph: &'a ChimeraGraph,
    adj: &'a [Vec<usize>],
    usage: Vec<u32>,
    chains: Vec<Vec<usize>>,
    /// Penalty per chain already occupying a qubit; grows every pass.
    present: f64,
    /// Accumulated penalty on qubits that stayed contested.
    history: Vec<f64>,
    /// Qubits this attempt may use.
    region: Vec<usize>,
    allowed: Vec<bool>,
}

impl Router<'_> {
    fn weight(&self, q: usize) -> f64 {
        if !self.allowed[q] {
            return f64::INFINITY;
        }
        (1.0 + self.history[q]) * (1.0 + self.present * f64::from(self.usage[q]))
    }

    /// Cheapest node-weighted paths from the neighbourhood of `chain`;
    /// `dist[q]` includes the weight of `q` itself.
    fn distances(&self, chain: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let n = self.usage.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut heap = std::collections::BinaryHeap::new();
        for &c in chain {
            for &r in self.graph.neighbors(c) {
                let w = self.weight(r);
                if w < dist[r] {
                    dist[r] = w;
                    heap.push(Frontier(w, r));
                }
            }
        }
        while let Some(Frontier(d, q)) = heap.pop() {
            if d > dist[q] {
                continue;
            }
            for &r in self.graph.neighbors(q) {
                let nd = d + self.weight(r);
                if nd < dist[r] {
                    dist[r] = nd;
                    parent[r] = q;
                    heap.push(Frontier(nd, r));
                }
            }
        }
        (dist, parent)
    }

    fn touches(&self, chain: &BTreeSet<usize>, other: &[usize]) -> bool {
        other
            .iter()
            .any(|&q| self.graph.neighbors(q).iter().any(|r| chain.contains(r)))
    }

    /// Chain for `v` against the current placement, overlaps allowed at a cost.
    fn route<R: Rng>(&self, v: usize, rng: &mut R) -> Option<Vec<usize>> {
        let placed: Vec<usize> = self.adj[v]
            .iter()
            .copied()
            .filter(|&u| !self.chains[u].is_empty())
            .collect();
        let trees: Vec<(Vec<f64>, Vec<usize>)> =
            placed.iter().map(|&u| self.distances(&self.chains[u])).collect();
        let extra = trees.len().saturating_sub(1) as f64;
        let mut best = f64::INFINITY;
        let mut root = None;
        let mut ties = 0u32;
        for &q in &self.region {
            let w = self.weight(q);
            let cost = if trees.is_empty() {
                w
            } else {
                trees.iter().map(|(d, _)| d[q]).sum::<f64>() - extra * w
            };
            if !cost.is_finite() {
                continue;
            }
            if cost < best {
                best = cost;
                root = Some(q);
                ties = 1;
            } else if cost == best {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    root = Some(q);
                }
            }
        }
        let root = root?;
        let mut chain = BTreeSet::from([root]);
        for (dist, parent) in &trees {
            let mut q = root;
            while parent[q] != usize::MAX && dist[q] > 0.0 {
                q = parent[q];
                chain.insert(q);
            }
        }
        loop {
            let removable = chain.iter().copied().find(|&q| {
                if chain.len() == 1 {
                    return false;
                }
                let inner = self.graph.neighbors(q).iter().filter(|r| chain.contains(r)).count();
                if inner > 1 {
                    return false;
                }
                let mut rest = chain.clone();
                rest.remove(&q);
                placed.iter().all(|&u| self.touches(&rest, &self.chains[u]))
            });
            match removable {
                Some(q) => {
                    chain.remove(&q);
                }
                None => break,
            }
        }
        Some(chain.into_iter().collect())
    }

    fn commit(&mut self, v: usize, chain: Vec<usize>) {
        for &q in &chain {
            self.usage[q] += 1;
        }
        self.chains[v] = chain;
    }

    fn release(&mut self, v: usize) -> Vec<usize> {
        let chain = std::mem::take(&mut self.chains[v]);
        for &q in &chain {
            self.usage[q] -= 1;
        }
        chain
    }

    fn overlapping(&self) -> usize {
        self.usage.iter().filter(|&&u| u > 1).count()
    }

    fn negotiate(&mut self) {
        for (h, &u) in self.history.iter_mut().zip(&self.usage) {
            if u > 1 {
                *h += HISTORY_STEP;
            }
        }
        self.present *= PRESENT_GROWTH;
    }
}

/// Breadth-first visiting order over the problem graph with shuffled
/// neighbour lists, restarting in every component.
fn bfs_order<R: Rng>(adj: &[Vec<usize>], rng: &mut R) -> Vec<usize> {
    let n = adj.len();
    let mut starts: Vec<usize> = (0..n).collect();
    starts.shuffle(rng);
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for s in starts {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next = adj[v].clone();
            next.shuffle(rng);
            for u in next {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order
}

/// Randomized rip-up-and-reroute heuristic for minor embedding, with
/// negotiated congestion in the style of PathFinder.
///
/// Chains may share qubits while the placement settles. Each pass removes
/// every chain in turn and routes it again from the qubit with the smallest
/// summed path cost to its placed neighbours, where a qubit's cost grows
/// with the chains currently on it and with how long it has been contested.
/// Each attempt is confined to a random square window of cells just large
/// enough for a clique layout of the same size; if every windowed attempt
/// fails, the same number of attempts run on the whole graph. Overlap-free
/// placements are kept, best by (longest chain, total qubits).
/// Deterministic for a given seed.
pub fn greedy_embedding(
    n_vars: usize,
    edges: &[(usize, usize)],
    graph: &ChimeraGraph,
    seed: u64,
    options: GreedyOptions,
) -> Result<Embedding> {
    let mut adj = vec![Vec::new(); n_vars];
    for &(i, j) in edges {
        if i >= n_vars || j >= n_vars || i == j {
            return Err(Error::Range(format!("edge ({i},{j}) invalid for {n_vars} variables")));
        }
        adj[i].push(j);
        adj[j].push(i);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let mut best: Option<((usize, usize), Vec<Vec<usize>>)> = None;
    let side = graph.side();
    let tries = options.tries.max(1);
    for attempt in 0..2 * tries {
        if attempt == tries && best.is_some() {
            break;
        }
        let mut rng = seed::rng(seed::derive(seed, "greedy-embedding", attempt as u64));
        let k = if attempt < tries {
            (n_vars.div_ceil(4) + 1 + attempt % 2).min(side)
        } else {
            side
        };
        let (r0, c0) = (rng.random_range(0..=side - k), rng.random_range(0..=side - k));
        let region: Vec<usize> = (0..graph.total_qubits())
            .filter(|&q| {
                let (r, c, _, _) = graph.coordinates(q);
                graph.is_active(q) && (r0..r0 + k).contains(&r) && (c0..c0 + k).contains(&c)
            })
            .collect();
        let mut allowed = vec![false; graph.total_qubits()];
        for &q in &region {
            allowed[q] = true;
        }
        let order = bfs_order(&adj, &mut rng);
        let mut router = Router {
            graph,
            adj: &adj,
            usage: vec![0; graph.total_qubits()],
            chains: vec![Vec::new(); n_vars],
            present: PRESENT_START,
            history: vec![0.0; graph.total_qubits()],
            region,
            allowed,
        };
        let mut attempt_best: Option<(usize, usize)> = None;
        let mut stale = 0;
        for round in 0..=options.refinement_rounds {
            for &v in &order {
                let old = router.release(v);
                match router.route(v, &mut rng) {
                    Some(chain) => router.commit(v, chain),
                    None if round > 0 => router.commit(v, old),
                    None => break,
                }
            }
            if router.chains.iter().any(|c| c.is_empty()) {
                break;
            }
            if router.overlapping() == 0 {
                let emb = Embedding {
                    chains: router.chains.clone(),
                };
                let key = (emb.max_chain_length(), emb.qubit_count());
                if attempt_best.is_none_or(|k| key < k) {
                    attempt_best = Some(key);
                    stale = 0;
                } else {
                    stale += 1;
                }
                if best.as_ref().is_none_or(|(k, _)| key < *k) {
                    best = Some((key, emb.chains));
                }
                if stale >= PATIENCE {
                    break;
                }
            }
            router.negotiate();
        }
    }
    let (_, chains) = best.ok_or_else(|| {
        Error::Embedding(format!(
            "no overlap-free embedding found for {n_vars} variables after {} tries",
            options.tries.max(1)
        ))
    })?;
    let emb = Embedding { chains };
    emb.verify(n_vars, edges, graph)?;
    Ok(emb)
}


/// Physical Ising model over the qubits an embedding uses, indexed compactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedIsing {
    pub model: IsingModel,
    /// Compact index → hardware qubit id, ascending.
    pub qubits: Vec<usize>,
    /// Chains in compact indices.
    pub chains: Vec<Vec<usize>>,
    pub chain_strength: f64,
    /// Energy of the chain couplers in any chain-aligned state,
    /// `−σ × (intra-chain edges)`; aligned physical energy minus this equals
    /// the logical energy.
    pub chain_constant: f64,
}

impl EmbeddedIsing {
    /// Physical spins with every chain set to its logical value.
    pub fn aligned_spins(&self, logical: &[i8]) -> Vec<i8> {
        let mut out = vec![1i8; self.qubits.len()];
        for (chain, &s) in self.chains.iter().zip(logical) {
            for &q in chain {
                out[q] = s;
            }
        }
        out
    }

    pub fn intra_chain_edges(&self) -> usize {
        (-self.chain_constant / self.chain_strength).round() as usize
    }

    /// Logical energy of a chain-aligned physical state.
    pub fn logical_energy(&self, physical: &[i8]) -> Result<f64> {
        Ok(self.model.energy(physical)? - self.chain_constant)
    }
}

pub fn embed_problem(
    ising: &IsingModel,
    embedding: &Embedding,
    graph: &ChimeraGraph,
    chain_strength: f64,
) -> Result<EmbeddedIsing> {
    if !(chain_strength > 0.0 && chain_strength.is_finite()) {
        return Err(Error::Invalid("chain strength must be positive".into()));
    }
    let edges = problem_edges(ising);
    embedding.verify(ising.len(), &edges, graph)?;
    let mut qubits: Vec<usize> = embedding.chains.iter().flatten().copied().collect();
    qubits.sort_unstable();
    let compact: BTreeMap<usize, usize> = qubits.iter().enumerate().map(|(i, &q)| (q, i)).collect();
    let chains: Vec<Vec<usize>> = embedding
        .chains
        .iter()
        .map(|c| c.iter().map(|q| compact[q]).collect())
        .collect();
    let mut model = IsingModel::new(qubits.len());
    model.offset = ising.offset;
    for (i, chain) in embedding.chains.iter().enumerate() {
        let share = ising.h[i] / chain.len() as f64;
        for q in chain {
            model.h[compact[q]] += share;
        }
    }
    for &(i, j) in &edges {
        let (a, b) = first_link(&embedding.chains[i], &embedding.chains[j], graph)
            .expect("verified embedding covers every edge");
        model.add_coupling(compact[&a], compact[&b], ising.coupling(i, j));
    }
    let mut intra = 0usize;
    for chain in &embedding.chains {
        for (x, &a) in chain.iter().enumerate() {
            for &b in &chain[x + 1..] {
                if graph.has_edge(a, b) {
                    model.add_coupling(compact[&a], compact[&b], -chain_strength);
                    intra += 1;
                }
            }
        }
    }
    let chain_constant = -chain_strength * intra as f64;
    Ok(EmbeddedIsing {
        model,
        qubits,
        chains,
        chain_strength,
        chain_constant,
    })
}

/// Logical state read back from a physical sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unembedded {
    pub spins: Vec<i8>,
    /// Chains whose qubits disagreed.
    pub broken_chains: usize,
    /// Chains decided by the tie coin.
    pub ties: Vec<usize>,
}

/// Majority vote per chain; exact ties fall to a coin drawn from `seed`.
pub fn unembed(physical: &[i8], chains: &[Vec<usize>], seed: u64) -> Result<Unembedded> {
    let mut rng = seed::rng(seed);
    let mut spins = Vec::with_capacity(chains.len());
    let mut broken = 0;
    let mut ties = Vec::new();
    for (i, chain) in chains.iter().enumerate() {
        let mut sum = 0i64;
        for &q in chain {
            let s = *physical
                .get(q)
                .ok_or_else(|| Error::Shape(format!("physical state lacks qubit {q}")))?;
            sum += i64::from(s);
        }
        if sum.unsigned_abs() as usize != chain.len() {
            broken += 1;
        }
        spins.push(match sum.cmp(&0) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => {
                ties.push(i);
                if rng.random::<bool>() {
                    1
                } else {
                    -1
                }
            }
        });
    }
    Ok(Unembedded {
        spins,
        broken_chains: broken,
        ties,
    })
}

/// Orders candidates best first by the equal-weight sum of min-max
/// normalized longest chain, total qubits and chain-length variance.
pub fn rank_embeddings(candidates: &[Embedding]) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::Invalid("no embeddings to rank".into()));
    }
    let stats: Vec<[f64; 3]> = candidates
        .iter()
        .map(|e| {
            let s = e.stats();
            [s.max_chain as f64, s.total_qubits as f64, s.chain_length_variance]
        })
        .collect();
    let mut scores = vec![0.0; candidates.len()];
    for k in 0..3 {
        let lo = stats.iter().map(|s| s[k]).fold(f64::INFINITY, f64::min);
        let hi = stats.iter().map(|s| s[k]).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            for (score, s) in scores.iter_mut().zip(&stats) {
                *score += (s[k] - lo) / (hi - lo);
            }
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    Ok(order)
}
