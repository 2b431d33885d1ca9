//! Random contact graphs for the swarm and their degree statistics.
//!
//! All generators are pure functions of their parameters and a 64-bit seed.
//! Graphs that must be connected but are not connected by construction
//! (Erdős–Rényi, Watts–Strogatz) are redrawn until connected, up to a retry
//! budget.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of redraws before giving up on a connected sample.
pub const DEFAULT_CONNECT_RETRIES: usize = 100;

const MASS_TOL: f64 = 1e-12;

/// Probability mass over node degrees on an explicit finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    support: Vec<u32>,
    mass: Vec<f64>,
}

impl DegreeDistribution {
    /// Builds a distribution from `(degree, mass)` pairs. Degrees must be
    /// distinct and positive, masses in `[0, 1]` summing to one.
    pub fn new(pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, m) in pairs {
            if k == 0 {
                return Err(invalid("degree 0 in support"));
            }
            if !(0.0..=1.0).contains(&m) || m.is_nan() {
                return Err(invalid(format!("mass {m} for degree {k} outside [0, 1]")));
            }
            if map.insert(k, m).is_some() {
                return Err(invalid(format!("duplicate degree {k}")));
            }
        }
        if map.is_empty() {
            return Err(invalid("empty degree support"));
        }
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("masses sum to {total}, expected 1")));
        }
        let (support, mass) = map.into_iter().unzip();
        Ok(Self { support, mass })
    }

    /// Normalizes arbitrary nonnegative weights into a distribution.
    pub fn from_weights(pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let total: f64 = pairs.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) || pairs.iter().any(|(_, w)| *w < 0.0) {
            return Err(invalid("weights must be nonnegative with positive sum"));
        }
        Self::new(pairs.into_iter().map(|(k, w)| (k, w / total)))
    }

    pub fn point_mass(k: u32) -> Result<Self> {
        Self::new([(k, 1.0)])
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.support.iter().copied().zip(self.mass.iter().copied())
    }

    /// Mass at degree `k`, zero off the support.
    pub fn mass_at(&self, k: u32) -> f64 {
        self.support
            .binary_search(&k)
            .map(|i| self.mass[i])
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(k, m)| k as f64 * m).sum()
    }

    pub fn max_degree(&self) -> u32 {
        *self.support.last().expect("non-empty support")
    }
}

/// Size-biased transform `q(k) = k π(k) / Σ_j j π(j)`: the degree seen at
/// the end of a uniformly chosen edge.
pub fn size_biased(d: &DegreeDistribution) -> Result<DegreeDistribution> {
    let mean = d.mean();
    if !(mean > 0.0) {
        return Err(invalid("size-biasing needs a positive mean degree"));
    }
    let mass: Vec<f64> = d.iter().map(|(k, m)| k as f64 * m / mean).collect();
    // Renormalize to absorb rounding so the sum invariant holds to 1e-12.
    let total: f64 = mass.iter().sum();
    Ok(DegreeDistribution {
        support: d.support.clone(),
        mass: mass.into_iter().map(|m| m / total).collect(),
    })
}

/// A connected simple undirected graph on nodes `0..M`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwarmGraph {
    adjacency: Vec<Vec<usize>>,
}

impl SwarmGraph {
    /// Builds a graph from an edge list, rejecting self-loops, parallel
    /// edges and disconnected results.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(invalid("graph needs at least one node"));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(invalid(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(invalid(format!("self-loop at {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
            let before = nbrs.len();
            nbrs.dedup();
            if nbrs.len() != before {
                return Err(invalid("parallel edges"));
            }
        }
        let g = Self { adjacency };
        if !g.is_connected() {
            return Err(invalid("graph is not connected"));
        }
        Ok(g)
    }

    fn from_adjacency_unchecked(mut adjacency: Vec<Vec<usize>>) -> Self {
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Self { adjacency }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edge_count() as f64 / self.node_count() as f64
    }

    /// Edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        is_connected(&self.adjacency)
    }

    /// Edge-list text: a header line `M E` followed by one `u v` line per
    /// edge, 0-based, `u < v`, ascending.
    pub fn to_edge_list(&self) -> String {
        let edges = self.edges();
        let mut s = format!("{} {}\n", self.node_count(), edges.len());
        for (u, v) in edges {
            let _ = writeln!(s, "{u} {v}");
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| invalid("empty edge list"))?;
        let mut it = header.split_whitespace();
        let parse = |s: Option<&str>| -> Result<usize> {
            s.ok_or_else(|| invalid("truncated edge-list line"))?
                .parse()
                .map_err(|e| invalid(format!("bad integer in edge list: {e}")))
        };
        let m = parse(it.next())?;
        let e = parse(it.next())?;
        let mut edges = Vec::with_capacity(e);
        for line in lines {
            let mut it = line.split_whitespace();
            edges.push((parse(it.next())?, parse(it.next())?));
        }
        if edges.len() != e {
            return Err(invalid(format!("header announces {e} edges, found {}", edges.len())));
        }
        Self::from_edges(m, &edges)
    }
}

fn is_connected(adjacency: &[Vec<usize>]) -> bool {
    if adjacency.is_empty() {
        return false;
    }
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    reached == adjacency.len()
}

fn retry_until_connected(
    seed: u64,
    retries: usize,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Vec<Vec<usize>>,
) -> Result<SwarmGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..retries {
        let adjacency = draw(&mut rng);
        if is_connected(&adjacency) {
            return Ok(SwarmGraph::from_adjacency_unchecked(adjacency));
        }
    }
    Err(Error::ConnectivityRetriesExhausted { attempts: retries })
}

/// Erdős–Rényi `G(M, k̄/M)`, redrawn until connected.
pub fn generate_er(m: usize, mean_degree: f64, seed: u64) -> Result<SwarmGraph> {
    generate_er_with_retries(m, mean_degree, seed, DEFAULT_CONNECT_RETRIES)
}

pub fn generate_er_with_retries(
    m: usize,
    mean_degree: f64,
    seed: u64,
    retries: usize,
) -> Result<SwarmGraph> {
    if m < 2 {
        return Err(invalid("Erdős–Rényi graph needs M >= 2"));
    }
    if mean_degree.is_nan() || mean_degree < 0.0 || mean_degree >= m as f64 {
        return Err(invalid(format!("mean degree {mean_degree} outside [0, M)")));
    }
    // p = 0 can never connect two or more nodes.
    if mean_degree == 0.0 {
        return Err(Error::ConnectivityRetriesExhausted { attempts: retries });
    }
    let p = mean_degree / m as f64;
    retry_until_connected(seed, retries, |rng| {
        let mut adj = vec![Vec::new(); m];
        for u in 0..m {
            for v in (u + 1)..m {
                if rng.random_bool(p) {
                    adj[u].push(v);
                    adj[v].push(u);
                }
            }
        }
        adj
    })
}

/// Barabási–Albert preferential attachment: a complete core on
/// `m_attach + 1` nodes, then each newcomer links to `m_attach` distinct
/// existing nodes chosen proportionally to their current degree.
pub fn generate_ba(m: usize, m_attach: usize, seed: u64) -> Result<SwarmGraph> {
    if m_attach == 0 || m_attach >= m {
        return Err(invalid(format!(
            "Barabási–Albert needs M > m_attach >= 1 (M = {m}, m_attach = {m_attach})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = m_attach + 1;
    let mut adj = vec![Vec::new(); m];
    // Every edge endpoint appears once here, so a uniform pick is
    // degree-proportional.
    let mut endpoints = Vec::with_capacity(2 * m * m_attach);
    for u in 0..core {
        for v in (u + 1)..core {
            adj[u].push(v);
            adj[v].push(u);
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    let mut targets = Vec::with_capacity(m_attach);
    for new in core..m {
        targets.clear();
        while targets.len() < m_attach {
            let t = *endpoints.choose(&mut rng).expect("core has edges");
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            adj[new].push(t);
            adj[t].push(new);
            endpoints.push(new);
            endpoints.push(t);
        }
    }
    Ok(SwarmGraph::from_adjacency_unchecked(adj))
}

/// Watts–Strogatz small world: a ring lattice where each node links to its
/// `ring_degree / 2` nearest neighbours on each side, then every lattice
/// edge has its far endpoint rewired with probability `rewire_prob` to a
/// uniform node that is neither the source nor already adjacent. Rewiring
/// keeps the edge count. Redrawn until connected.
pub fn generate_ws(m: usize, ring_degree: usize, rewire_prob: f64, seed: u64) -> Result<SwarmGraph> {
    generate_ws_with_retries(m, ring_degree, rewire_prob, seed, DEFAULT_CONNECT_RETRIES)
}

pub fn generate_ws_with_retries(
    m: usize,
    ring_degree: usize,
    rewire_prob: f64,
    seed: u64,
    retries: usize,
) -> Result<SwarmGraph> {
    if ring_degree == 0 || ring_degree % 2 != 0 {
        return Err(invalid(format!("ring degree {ring_degree} must be even and positive")));
    }
    if m <= ring_degree {
        return Err(invalid(format!("Watts–Strogatz needs M > ring degree ({m} <= {ring_degree})")));
    }
    if !(0.0..=1.0).contains(&rewire_prob) {
        return Err(invalid(format!("rewire probability {rewire_prob} outside [0, 1]")));
    }
    let half = ring_degree / 2;
    retry_until_connected(seed, retries, |rng| {
        let mut adj: Vec<Vec<usize>> = (0..m)
            .map(|u| {
                (1..=half)
                    .flat_map(|j| [(u + j) % m, (u + m - j) % m])
                    .collect()
            })
            .collect();
        for j in 1..=half {
            for u in 0..m {
                let v = (u + j) % m;
                if !rng.random_bool(rewire_prob) || !adj[u].contains(&v) {
                    continue;
                }
                if adj[u].len() >= m - 1 {
                    continue;
                }
                let w = loop {
                    let w = rng.random_range(0..m);
                    if w != u && !adj[u].contains(&w) {
                        break w;
                    }
                };
                remove_edge(&mut adj, u, v);
                adj[u].push(w);
                adj[w].push(u);
            }
        }
        adj
    })
}

fn remove_edge(adj: &mut [Vec<usize>], u: usize, v: usize) {
    adj[u].retain(|&x| x != v);
    adj[v].retain(|&x| x != u);
}

/// `π(k) = |{v : deg(v) = k}| / M` over the degrees present in `g`.
pub fn empirical_degree_distribution(g: &SwarmGraph) -> DegreeDistribution {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for d in g.degrees() {
        *counts.entry(d as u32).or_default() += 1;
    }
    let m = g.node_count() as f64;
    let (support, mass) = counts.into_iter().map(|(k, c)| (k, c as f64 / m)).unzip();
    DegreeDistribution { support, mass }
}
