//! Monte Carlo simulation of the buffer contact process on a graph.
//!
//! Time advances in unit steps. In each step the server feeds index 1 of
//! its attached peer, every other peer draws `Poisson(deg·ς)` contacts, all
//! contacts are executed in one global random order, and buffers shift one
//! slot toward playback (or a `Poisson(1)` number of slots under
//! exponential shifting). Buffers are `u64` bit masks, bit `i - 1` holding
//! index `i`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degree_graph::SwarmGraph;
use crate::error::{invalid, Result};
use crate::mean_field::Strategy;

pub const MAX_BUFFER_LEN: usize = 64;
pub const DEFAULT_BREAKAGE_PROB: f64 = 0.01;
pub const DEFAULT_HORIZON: u64 = 4000;
pub const DEFAULT_THRESHOLD_QUANTILE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shifting {
    Deterministic,
    Exponential,
}

impl Shifting {
    pub fn as_str(self) -> &'static str {
        match self {
            Shifting::Deterministic => "deterministic",
            Shifting::Exponential => "exponential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum AssignmentRule {
    PureLdf,
    PureEdf,
    /// High-degree peers run LDF, the rest EDF; see [`assign_strategies`].
    Mixed { threshold_quantile: f64 },
}

impl AssignmentRule {
    pub fn mixed_default() -> Self {
        AssignmentRule::Mixed { threshold_quantile: DEFAULT_THRESHOLD_QUANTILE }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AssignmentRule::PureLdf => "pure_ldf",
            AssignmentRule::PureEdf => "pure_edf",
            AssignmentRule::Mixed { .. } => "mixed",
        }
    }
}

/// Per-node strategies. Under `Mixed { q }` a node runs LDF when its
/// degree is at least the empirical `(1 - q)` quantile of all degrees
/// (the `⌈(1 - q) M⌉`-th smallest), so ties at the threshold all get LDF.
pub fn assign_strategies(graph: &SwarmGraph, rule: &AssignmentRule) -> Vec<Strategy> {
    let m = graph.node_count();
    match *rule {
        AssignmentRule::PureLdf => vec![Strategy::Ldf; m],
        AssignmentRule::PureEdf => vec![Strategy::Edf; m],
        AssignmentRule::Mixed { threshold_quantile } => {
            let mut sorted = graph.degrees();
            sorted.sort_unstable();
            let rank = ((1.0 - threshold_quantile) * m as f64).ceil() as usize;
            let threshold = sorted[rank.clamp(1, m) - 1];
            (0..m)
                .map(|v| if graph.degree(v) >= threshold { Strategy::Ldf } else { Strategy::Edf })
                .collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub graph: SwarmGraph,
    pub buffer_len: usize,
    pub contact_scale: f64,
    pub breakage_prob: f64,
    pub shifting: Shifting,
    pub assignment: AssignmentRule,
    pub horizon: u64,
    pub burn_in: u64,
    pub seed: u64,
}

impl SimConfig {
    /// Defaults: ε = 0.01, deterministic shifting, horizon 4000 with half of
    /// it as burn-in.
    pub fn new(graph: SwarmGraph, buffer_len: usize, contact_scale: f64, assignment: AssignmentRule, seed: u64) -> Self {
        Self {
            graph,
            buffer_len,
            contact_scale,
            breakage_prob: DEFAULT_BREAKAGE_PROB,
            shifting: Shifting::Deterministic,
            assignment,
            horizon: DEFAULT_HORIZON,
            burn_in: DEFAULT_HORIZON / 2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_BUFFER_LEN).contains(&self.buffer_len) {
            return Err(invalid(format!("buffer length must lie in 2..={MAX_BUFFER_LEN}")));
        }
        if self.graph.node_count() < 2 {
            return Err(invalid("graph needs at least two nodes"));
        }
        if !(self.contact_scale >= 0.0) || !self.contact_scale.is_finite() {
            return Err(invalid("contact scale must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.breakage_prob) {
            return Err(invalid("breakage probability must lie in [0, 1]"));
        }
        if self.burn_in >= self.horizon {
            return Err(invalid("burn-in must be shorter than the horizon"));
        }
        if let AssignmentRule::Mixed { threshold_quantile: q } = self.assignment {
            if !(q > 0.0 && q <= 1.0) {
                return Err(invalid("threshold quantile must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub buffers: Vec<u64>,
    pub served_peer: usize,
    pub clock: u64,
    buffer_len: usize,
}

impl SwarmState {
    /// Random start: interior bits i.i.d. fair coins, index 1 empty except
    /// at the served peer.
    pub fn random(m: usize, buffer_len: usize, rng: &mut impl Rng) -> Self {
        let mask = full_mask(buffer_len);
        let served_peer = rng.random_range(0..m);
        let buffers = (0..m)
            .map(|v| {
                let bits = rng.random::<u64>() & mask;
                if v == served_peer { bits } else { bits & !1 }
            })
            .collect();
        Self { buffers, served_peer, clock: 0, buffer_len }
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer_len
    }

    pub fn has(&self, peer: usize, index: usize) -> bool {
        self.buffers[peer] >> (index - 1) & 1 == 1
    }

    /// Peers currently holding index 1.
    pub fn index_one_holders(&self) -> impl Iterator<Item = usize> + '_ {
        self.buffers.iter().enumerate().filter(|(_, b)| *b & 1 == 1).map(|(v, _)| v)
    }
}

fn full_mask(n: usize) -> u64 {
    if n == 64 { u64::MAX } else { (1u64 << n) - 1 }
}

/// One pull attempt by `peer` from a uniformly chosen neighbour. Returns
/// the downloaded buffer index, if any. Index 1 is never downloaded.
pub fn execute_contact(
    state: &mut SwarmState,
    graph: &SwarmGraph,
    peer: usize,
    strategy: Strategy,
    rng: &mut impl Rng,
) -> Option<usize> {
    let nbrs = graph.neighbors(peer);
    if nbrs.is_empty() {
        return None;
    }
    let other = nbrs[rng.random_range(0..nbrs.len())];
    let wanted = state.buffers[other] & !state.buffers[peer] & !1;
    if wanted == 0 {
        return None;
    }
    let bit = match strategy {
        Strategy::Ldf => wanted.trailing_zeros(),
        Strategy::Edf => 63 - wanted.leading_zeros(),
    };
    state.buffers[peer] |= 1 << bit;
    Some(bit as usize + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCurve {
    /// Degree, or `None` for a strategy group.
    pub degree: Option<u32>,
    pub strategy: Option<Strategy>,
    pub nodes: usize,
    pub prob: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub per_degree: Vec<ClassCurve>,
    /// Curves of the LDF and EDF groups (only non-empty groups).
    pub per_strategy: Vec<ClassCurve>,
    pub global: Vec<f64>,
    /// Availability at the playback index `n`.
    pub continuity: f64,
    /// `(k, kς Σ_i p_k(i))` per degree.
    pub startup_latency_per_degree: Vec<(u32, f64)>,
    pub startup_latency_global: f64,
    /// Raw values divided by `n · k_max · ς`.
    pub startup_latency_normalized: f64,
    pub samples: u64,
    /// Fraction of sampled steps each peer was the served peer (length M).
    pub served_fraction: Vec<f64>,
}

/// Runs one replication. Metrics are sampled once per step after burn-in,
/// after the contacts and before the shift, so index 1 reflects the server
/// feed and index `n` the chunk about to be played.
pub fn run(cfg: &SimConfig) -> Result<SimMetrics> {
    cfg.validate()?;
    let g = &cfg.graph;
    let (m, n) = (g.node_count(), cfg.buffer_len);
    let mask = full_mask(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let strategies = assign_strategies(g, &cfg.assignment);
    let contact_dists: Vec<Option<Poisson<f64>>> = (0..m)
        .map(|v| {
            let rate = g.degree(v) as f64 * cfg.contact_scale;
            (rate > 0.0).then(|| Poisson::new(rate).expect("positive finite rate"))
        })
        .collect();
    let unit_shift = Poisson::new(1.0).expect("unit rate");
    let mut state = SwarmState::random(m, n, &mut rng);
    let mut counts = vec![0u32; m * n];
    let mut served = vec![0u64; m];
    let mut samples = 0u64;
    let mut contacts: Vec<usize> = Vec::new();

    for t in 0..cfg.horizon {
        state.clock = t;
        if rng.random::<f64>() < cfg.breakage_prob {
            let old = state.served_peer;
            state.served_peer = rng.random_range(0..m);
            if state.served_peer != old {
                // The detached peer loses its claim on the fresh chunk.
                state.buffers[old] &= !1;
            }
        }
        state.buffers[state.served_peer] |= 1;

        contacts.clear();
        for (v, dist) in contact_dists.iter().enumerate() {
            if v == state.served_peer {
                continue;
            }
            if let Some(d) = dist {
                let k = d.sample(&mut rng) as usize;
                contacts.extend(std::iter::repeat_n(v, k));
            }
        }
        contacts.shuffle(&mut rng);
        for &v in &contacts {
            execute_contact(&mut state, g, v, strategies[v], &mut rng);
        }

        if t >= cfg.burn_in {
            samples += 1;
            served[state.served_peer] += 1;
            for (v, &b) in state.buffers.iter().enumerate() {
                let row = &mut counts[v * n..(v + 1) * n];
                for (i, c) in row.iter_mut().enumerate() {
                    *c += (b >> i & 1) as u32;
                }
            }
        }

        match cfg.shifting {
            Shifting::Deterministic => {
                for b in state.buffers.iter_mut() {
                    *b = (*b << 1) & mask;
                }
            }
            Shifting::Exponential => {
                for b in state.buffers.iter_mut() {
                    let s = unit_shift.sample(&mut rng) as u32;
                    *b = if s >= 64 { 0 } else { (*b << s) & mask };
                }
            }
        }
    }
    Ok(summarize(cfg, &strategies, &counts, &served, samples))
}

fn summarize(cfg: &SimConfig, strategies: &[Strategy], counts: &[u32], served: &[u64], samples: u64) -> SimMetrics {
    let g = &cfg.graph;
    let (m, n) = (g.node_count(), cfg.buffer_len);
    let curve = |members: &[usize]| -> Vec<f64> {
        let mut acc = vec![0f64; n];
        for &v in members {
            for (a, &c) in acc.iter_mut().zip(&counts[v * n..(v + 1) * n]) {
                *a += c as f64;
            }
        }
        let denom = (members.len() as u64 * samples) as f64;
        acc.into_iter().map(|a| a / denom).collect()
    };

    let mut degrees: Vec<u32> = g.degrees().into_iter().map(|d| d as u32).collect();
    degrees.sort_unstable();
    degrees.dedup();
    let per_degree: Vec<ClassCurve> = degrees
        .iter()
        .map(|&k| {
            let members: Vec<usize> = (0..m).filter(|&v| g.degree(v) as u32 == k).collect();
            ClassCurve { degree: Some(k), strategy: None, nodes: members.len(), prob: curve(&members) }
        })
        .collect();
    let per_strategy = Strategy::BOTH
        .iter()
        .filter_map(|&s| {
            let members: Vec<usize> = (0..m).filter(|&v| strategies[v] == s).collect();
            (!members.is_empty()).then(|| ClassCurve {
                degree: None,
                strategy: Some(s),
                nodes: members.len(),
                prob: curve(&members),
            })
        })
        .collect();
    let all: Vec<usize> = (0..m).collect();
    let global = curve(&all);

    let sigma = cfg.contact_scale;
    let startup_latency_per_degree: Vec<(u32, f64)> = per_degree
        .iter()
        .map(|c| {
            let k = c.degree.expect("degree curve");
            (k, k as f64 * sigma * c.prob.iter().sum::<f64>())
        })
        .collect();
    let startup_latency_global = g.mean_degree() * sigma * global.iter().sum::<f64>();
    let scale = n as f64 * *degrees.last().expect("non-empty graph") as f64 * sigma;
    SimMetrics {
        continuity: global[n - 1],
        per_degree,
        per_strategy,
        global,
        startup_latency_per_degree,
        startup_latency_global,
        startup_latency_normalized: if scale > 0.0 { startup_latency_global / scale } else { 0.0 },
        samples,
        served_fraction: served.iter().map(|&s| s as f64 / samples as f64).collect(),
    }
}

/// Replications merged into a mean and a standard error per quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicated {
    pub seeds: Vec<u64>,
    pub mean: SimMetrics,
    pub stderr: SimMetrics,
}

/// Runs `cfg` once per seed (in parallel) and merges the results with
/// sample-count weights, in seed order.
pub fn run_replications(cfg: &SimConfig, seeds: &[u64]) -> Result<Replicated> {
    if seeds.is_empty() {
        return Err(invalid("at least one seed required"));
    }
    let mut runs: Vec<(u64, SimMetrics)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SimConfig { seed, ..cfg.clone() };
            run(&cfg).map(|m| (seed, m))
        })
        .collect::<Result<_>>()?;
    runs.sort_by_key(|(s, _)| *s);
    let metrics: Vec<SimMetrics> = runs.iter().map(|(_, m)| m.clone()).collect();
    let (mean, stderr) = merge(&metrics);
    Ok(Replicated { seeds: runs.into_iter().map(|(s, _)| s).collect(), mean, stderr })
}

fn merge(runs: &[SimMetrics]) -> (SimMetrics, SimMetrics) {
    let w: Vec<f64> = runs.iter().map(|r| r.samples as f64).collect();
    let total: f64 = w.iter().sum();
    let r = runs.len() as f64;
    // Weighted mean and standard error of the mean across replications.
    let stat = |get: &dyn Fn(&SimMetrics) -> f64| -> (f64, f64) {
        let mean = runs.iter().zip(&w).map(|(m, w)| w * get(m)).sum::<f64>() / total;
        if runs.len() < 2 {
            return (mean, 0.0);
        }
        let var = runs.iter().map(|m| (get(m) - mean).powi(2)).sum::<f64>() / (r - 1.0);
        (mean, (var / r).sqrt())
    };
    let vec_stat = |get: &dyn Fn(&SimMetrics) -> &Vec<f64>| -> (Vec<f64>, Vec<f64>) {
        (0..get(&runs[0]).len()).map(|i| stat(&|m| get(m)[i])).unzip()
    };
    let curves = |get: &dyn Fn(&SimMetrics) -> &Vec<ClassCurve>| -> (Vec<ClassCurve>, Vec<ClassCurve>) {
        get(&runs[0])
            .iter()
            .enumerate()
            .map(|(c, proto)| {
                let (m, s) = vec_stat(&|x| &get(x)[c].prob);
                (ClassCurve { prob: m, ..proto.clone() }, ClassCurve { prob: s, ..proto.clone() })
            })
            .unzip()
    };
    let (pd_m, pd_s) = curves(&|m| &m.per_degree);
    let (ps_m, ps_s) = curves(&|m| &m.per_strategy);
    let (g_m, g_s) = vec_stat(&|m| &m.global);
    let (c_m, c_s) = stat(&|m| m.continuity);
    let (lat, lat_s): (Vec<(u32, f64)>, Vec<(u32, f64)>) = runs[0]
        .startup_latency_per_degree
        .iter()
        .enumerate()
        .map(|(i, &(k, _))| {
            let (m, s) = stat(&|x| x.startup_latency_per_degree[i].1);
            ((k, m), (k, s))
        })
        .unzip();
    let (lg_m, lg_s) = stat(&|m| m.startup_latency_global);
    let (ln_m, ln_s) = stat(&|m| m.startup_latency_normalized);
    let (sf_m, sf_s) = vec_stat(&|m| &m.served_fraction);
    let samples = runs.iter().map(|m| m.samples).sum();
    (
        SimMetrics {
            per_degree: pd_m,
            per_strategy: ps_m,
            global: g_m,
            continuity: c_m,
            startup_latency_per_degree: lat,
            startup_latency_global: lg_m,
            startup_latency_normalized: ln_m,
            samples,
            served_fraction: sf_m,
        },
        SimMetrics {
            per_degree: pd_s,
            per_strategy: ps_s,
            global: g_s,
            continuity: c_s,
            startup_latency_per_degree: lat_s,
            startup_latency_global: lg_s,
            startup_latency_normalized: ln_s,
            samples,
            served_fraction: sf_s,
        },
    )
}

impl Replicated {
    /// CSV with columns
    /// `strategy,shifting,degree_class,buffer_index,probability,stderr`.
    /// `degree_class` is a degree, `LDF`/`EDF` for strategy groups, or
    /// `global`.
    pub fn to_csv(&self, rule: &AssignmentRule, shifting: Shifting) -> String {
        let mut s = String::from("strategy,shifting,degree_class,buffer_index,probability,stderr\n");
        let mut rows = |class: String, mean: &[f64], se: &[f64]| {
            for (i, (p, e)) in mean.iter().zip(se).enumerate() {
                let _ = writeln!(s, "{},{},{},{},{:.10},{:.10}", rule.label(), shifting.as_str(), class, i + 1, p, e);
            }
        };
        for (m, e) in self.mean.per_degree.iter().zip(&self.stderr.per_degree) {
            rows(m.degree.expect("degree curve").to_string(), &m.prob, &e.prob);
        }
        for (m, e) in self.mean.per_strategy.iter().zip(&self.stderr.per_strategy) {
            rows(m.strategy.expect("strategy curve").to_string(), &m.prob, &e.prob);
        }
        rows("global".into(), &self.mean.global, &self.stderr.global);
        s
    }
}

/// Summary echoed as JSON next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub assignment: AssignmentRule,
    pub shifting: Shifting,
    pub buffer_len: usize,
    pub contact_scale: f64,
    pub breakage_prob: f64,
    pub horizon: u64,
    pub burn_in: u64,
    pub peers: usize,
    pub seeds: Vec<u64>,
    pub continuity: f64,
    pub continuity_stderr: f64,
    pub startup_latency_global: f64,
    pub startup_latency_normalized: f64,
    pub startup_latency_normalization: String,
    pub samples: u64,
}

impl Replicated {
    pub fn summary(&self, cfg: &SimConfig) -> SimSummary {
        SimSummary {
            assignment: cfg.assignment,
            shifting: cfg.shifting,
            buffer_len: cfg.buffer_len,
            contact_scale: cfg.contact_scale,
            breakage_prob: cfg.breakage_prob,
            horizon: cfg.horizon,
            burn_in: cfg.burn_in,
            peers: cfg.graph.node_count(),
            seeds: self.seeds.clone(),
            continuity: self.mean.continuity,
            continuity_stderr: self.stderr.continuity,
            startup_latency_global: self.mean.startup_latency_global,
            startup_latency_normalized: self.mean.startup_latency_normalized,
            startup_latency_normalization: "raw / (n * k_max * contact_scale)".into(),
            samples: self.mean.samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree_graph::{generate_ba, generate_ws};

    fn pair() -> SwarmGraph {
        SwarmGraph::from_edges(2, &[(0, 1)]).unwrap()
    }

    fn state(bufs: &[u64], n: usize) -> SwarmState {
        SwarmState { buffers: bufs.to_vec(), served_peer: 0, clock: 0, buffer_len: n }
    }

    #[test]
    fn contact_extremes() {
        let g = pair();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 8;
        let full = full_mask(n);
        let mut s = state(&[full, 0], n);
        assert_eq!(execute_contact(&mut s, &g, 1, Strategy::Ldf, &mut rng), Some(2));
        let mut s = state(&[full, 0], n);
        assert_eq!(execute_contact(&mut s, &g, 1, Strategy::Edf, &mut rng), Some(n));
        let mut s = state(&[0b1010, 0b1010], n);
        assert_eq!(execute_contact(&mut s, &g, 1, Strategy::Ldf, &mut rng), None);
    }

    #[test]
    fn contact_singleton_set() {
        let g = pair();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 8;
        // Peer 1 misses 3 and 7; peer 0 holds only 7.
        let own = full_mask(n) & !(1 << 2) & !(1 << 6);
        for strategy in Strategy::BOTH {
            let mut s = state(&[1 << 6, own], n);
            assert_eq!(execute_contact(&mut s, &g, 1, strategy, &mut rng), Some(7));
        }
    }

    #[test]
    fn index_one_is_never_downloaded() {
        let g = pair();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = state(&[1, 0], 4);
        assert_eq!(execute_contact(&mut s, &g, 1, Strategy::Ldf, &mut rng), None);
    }

    #[test]
    fn assignment_rules() {
        let ring = generate_ws(50, 4, 0.0, 1).unwrap();
        assert!(assign_strategies(&ring, &AssignmentRule::mixed_default()).iter().all(|&s| s == Strategy::Ldf));
        assert!(assign_strategies(&ring, &AssignmentRule::PureEdf).iter().all(|&s| s == Strategy::Edf));
        let ba = generate_ba(5000, 3, 7).unwrap();
        let s = assign_strategies(&ba, &AssignmentRule::mixed_default());
        let frac = s.iter().filter(|&&x| x == Strategy::Ldf).count() as f64 / 5000.0;
        assert!((0.2..=0.35).contains(&frac), "LDF fraction {frac}");
    }

    fn cfg(graph: SwarmGraph, n: usize, sigma: f64, rule: AssignmentRule, seed: u64) -> SimConfig {
        SimConfig::new(graph, n, sigma, rule, seed)
    }

    #[test]
    fn served_peer_is_uniform_under_full_breakage() {
        let mut c = cfg(pair(), 4, 0.0, AssignmentRule::PureLdf, 11);
        c.breakage_prob = 1.0;
        c.horizon = 20_000;
        c.burn_in = 0;
        let m = run(&c).unwrap();
        // Binomial(20000, 1/2) standard deviation is about 0.0035.
        assert!((m.served_fraction[0] - 0.5).abs() < 0.015);
    }

    #[test]
    fn server_only_dynamics() {
        // Without contacts only the fed chunk rides the shift, so every
        // index holds the chunk with probability 1/M.
        let c = cfg(pair(), 6, 0.0, AssignmentRule::PureLdf, 5);
        let m = run(&c).unwrap();
        for &p in &m.global {
            assert!((p - 0.5).abs() < 0.02, "{:?}", m.global);
        }
    }

    #[test]
    fn at_most_the_served_peer_holds_index_one() {
        let g = generate_ws(60, 4, 0.2, 2).unwrap();
        for shifting in [Shifting::Deterministic, Shifting::Exponential] {
            let mut c = cfg(g.clone(), 10, 0.3, AssignmentRule::mixed_default(), 9);
            c.shifting = shifting;
            c.breakage_prob = 0.3;
            c.horizon = 300;
            c.burn_in = 100;
            let m = run(&c).unwrap();
            // p(1) is exactly the served peer's share.
            assert!((m.global[0] - 1.0 / 60.0).abs() < 1e-12, "{shifting:?}: {}", m.global[0]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let g = generate_ws(100, 4, 0.2, 2).unwrap();
        let mut c = cfg(g, 12, 0.3, AssignmentRule::mixed_default(), 42);
        c.horizon = 200;
        c.burn_in = 50;
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(a, b);
        c.seed = 43;
        assert_ne!(a, run(&c).unwrap());
    }

    #[test]
    fn replication_csv_and_merge() {
        let g = generate_ws(80, 4, 0.2, 2).unwrap();
        let mut c = cfg(g, 10, 0.3, AssignmentRule::mixed_default(), 0);
        c.horizon = 200;
        c.burn_in = 100;
        let r = run_replications(&c, &[3, 1, 2]).unwrap();
        assert_eq!(r.seeds, vec![1, 2, 3]);
        assert_eq!(r.mean.samples, 300);
        let csv = r.to_csv(&c.assignment, c.shifting);
        assert!(csv.starts_with("strategy,shifting,degree_class,buffer_index,probability,stderr\n"));
        assert!(csv.contains("mixed,deterministic,global,10,"));
        assert!(r.stderr.continuity > 0.0);
        assert!(run_replications(&c, &[]).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = cfg(pair(), 65, 0.1, AssignmentRule::PureLdf, 0);
        assert!(run(&c).is_err());
        c.buffer_len = 4;
        c.burn_in = c.horizon;
        assert!(run(&c).is_err());
    }
}
