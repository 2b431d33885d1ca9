//! Event-driven simulation of a mesh-pull live streaming system.
//!
//! Peers join through a tracker, open bandwidth-capped connections, request
//! chunks from a window of their buffer on ticks whose rate grows with the
//! number of in-connections, and play the stream at a fixed chunk rate.
//!
//! Node 0 is the source. A connection `u -> d` means `u` uploads to `d`; it
//! is an out-connection of `u` and an in-connection of `d`. Each connection
//! carries one transfer at a time, so a node never holds more concurrent
//! uploads (downloads) than its out (in) connection cap.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mean_field::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerClass {
    pub name: String,
    pub count: usize,
    /// Mbit/s.
    pub upload_bw: f64,
    /// Mbit/s.
    pub download_bw: f64,
}

impl PeerClass {
    pub fn new(name: &str, count: usize, upload_bw: f64, download_bw: f64) -> Self {
        Self { name: name.to_string(), count, upload_bw, download_bw }
    }
}

/// Low 50 / Medium 30 / High 20 broadband mix.
pub fn default_classes() -> Vec<PeerClass> {
    vec![
        PeerClass::new("Low", 50, 5.0, 26.0),
        PeerClass::new("Medium", 30, 4.5, 60.0),
        PeerClass::new("High", 20, 56.0, 134.0),
    ]
}

/// Connection cap for a bandwidth: `floor(0.9 · bw / bitrate)`.
pub fn connection_cap(bw_mbps: f64, video_bitrate_kbps: f64) -> usize {
    (0.9 * bw_mbps * 1000.0 / video_bitrate_kbps + 1e-9).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Scheduling {
    PureEdf,
    PureLdf,
    /// The first `ldf_peer_count` peers of the strong class run LDF.
    Mixed { ldf_peer_count: usize },
}

impl Scheduling {
    pub fn label(&self) -> &'static str {
        match self {
            Scheduling::PureEdf => "pure_edf",
            Scheduling::PureLdf => "pure_ldf",
            Scheduling::Mixed { .. } => "mixed",
        }
    }
}

/// Which in-connections a selected chunk may be requested from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestTarget {
    /// Any in-connection, uniformly; neighbours lacking the chunk answer
    /// with a miss.
    AnyInConnection,
    /// Uniformly among in-connections currently holding the chunk (buffer
    /// maps known without delay); chunks nobody holds are skipped.
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullStackConfig {
    /// Peer population; the source is added separately.
    pub classes: Vec<PeerClass>,
    /// Class whose members count as strong peers for connection replacement.
    pub strong_class: String,
    pub video_bitrate_kbps: f64,
    pub chunk_rate: f64,
    /// Buffer length in seconds; also the playback start delay.
    pub buffer_len_s: f64,
    pub t_base: f64,
    pub req_win: usize,
    pub tracker_list_size: usize,
    pub max_parallel_connect: usize,
    pub blacklist_s: f64,
    pub strong_replace_prob: f64,
    pub random_replace_prob: f64,
    /// Mbit/s.
    pub source_upload: f64,
    pub scheduling: Scheduling,
    pub request_target: RequestTarget,
    /// Peers per second.
    pub arrival_rate: f64,
    pub stabilization_s: f64,
    pub measure_interval_s: f64,
    pub sim_duration_s: f64,
    /// One-way delay of every control message and of chunk delivery.
    pub latency_s: f64,
    /// Wait before asking the tracker again when it offered no usable peer
    /// and nothing is blacklisted.
    pub idle_retry_s: f64,
    pub seed: u64,
}

impl Default for FullStackConfig {
    fn default() -> Self {
        Self {
            classes: default_classes(),
            strong_class: "High".into(),
            video_bitrate_kbps: 1500.0,
            chunk_rate: 8.0,
            buffer_len_s: 6.25,
            t_base: 1.0,
            req_win: 20,
            tracker_list_size: 30,
            max_parallel_connect: 10,
            blacklist_s: 60.0,
            strong_replace_prob: 1.0 / 16.0,
            random_replace_prob: 1.0 / 64.0,
            source_upload: 12.5,
            scheduling: Scheduling::Mixed { ldf_peer_count: 20 },
            request_target: RequestTarget::AnyInConnection,
            arrival_rate: 1.0,
            stabilization_s: 120.0,
            measure_interval_s: 60.0,
            sim_duration_s: 520.0,
            latency_s: 0.05,
            idle_retry_s: 1.0,
            seed: 0,
        }
    }
}

impl FullStackConfig {
    pub fn peer_count(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    pub fn buffer_chunks(&self) -> usize {
        (self.buffer_len_s * self.chunk_rate).round() as usize
    }

    pub fn chunk_kbit(&self) -> f64 {
        self.video_bitrate_kbps / self.chunk_rate
    }

    /// Time at which the last peer joins.
    pub fn last_join(&self) -> f64 {
        self.peer_count().saturating_sub(1) as f64 / self.arrival_rate
    }

    pub fn measure_start(&self) -> f64 {
        self.last_join() + self.stabilization_s
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{what} must be positive, got {v}")))
            }
        };
        if self.classes.is_empty() || self.peer_count() == 0 {
            return Err(invalid("at least one peer required"));
        }
        for c in &self.classes {
            pos(c.upload_bw, &format!("upload_bw of class {}", c.name))?;
            pos(c.download_bw, &format!("download_bw of class {}", c.name))?;
            if connection_cap(c.download_bw, self.video_bitrate_kbps) == 0 {
                return Err(invalid(format!("class {} cannot hold a single in-connection", c.name)));
            }
        }
        pos(self.video_bitrate_kbps, "video_bitrate_kbps")?;
        pos(self.chunk_rate, "chunk_rate")?;
        pos(self.buffer_len_s, "buffer_len_s")?;
        let chunks = self.buffer_len_s * self.chunk_rate;
        if (chunks - chunks.round()).abs() > 1e-9 || chunks < 1.0 {
            return Err(invalid(format!("buffer_len_s · chunk_rate = {chunks} is not a positive integer")));
        }
        if self.req_win == 0 || self.req_win > self.buffer_chunks() {
            return Err(invalid(format!("req_win {} outside 1..={}", self.req_win, self.buffer_chunks())));
        }
        pos(self.t_base, "t_base")?;
        if self.tracker_list_size == 0 || self.max_parallel_connect == 0 {
            return Err(invalid("tracker_list_size and max_parallel_connect must be at least 1"));
        }
        if !(self.blacklist_s >= 0.0 && self.latency_s >= 0.0) {
            return Err(invalid("blacklist_s and latency_s must be nonnegative"));
        }
        for (p, what) in [(self.strong_replace_prob, "strong_replace_prob"), (self.random_replace_prob, "random_replace_prob")] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{what} must lie in [0, 1], got {p}")));
            }
        }
        pos(self.source_upload, "source_upload")?;
        pos(self.arrival_rate, "arrival_rate")?;
        pos(self.measure_interval_s, "measure_interval_s")?;
        pos(self.idle_retry_s, "idle_retry_s")?;
        if !(self.stabilization_s >= 0.0) {
            return Err(invalid("stabilization_s must be nonnegative"));
        }
        if let Scheduling::Mixed { ldf_peer_count } = self.scheduling {
            let strong = self
                .classes
                .iter()
                .find(|c| c.name == self.strong_class)
                .ok_or_else(|| invalid(format!("strong class {:?} not among classes", self.strong_class)))?;
            if ldf_peer_count > strong.count {
                return Err(invalid(format!(
                    "ldf_peer_count {ldf_peer_count} exceeds the {} peers of class {}",
                    strong.count, strong.name
                )));
            }
        }
        if self.sim_duration_s < self.measure_start() + self.measure_interval_s {
            return Err(invalid(format!(
                "sim_duration_s {} leaves no measurement interval (first sample due at {})",
                self.sim_duration_s,
                self.measure_start() + self.measure_interval_s
            )));
        }
        Ok(())
    }
}

/// Averages over one group of peers (a class, a strategy or everyone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: String,
    pub peers: usize,
    pub continuity: f64,
    pub requests_per_s: f64,
    pub in_degree: f64,
}

/// One CSV row: a group average at one measurement time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub time: f64,
    pub group: String,
    pub continuity: f64,
    pub requests_per_s: f64,
    pub in_degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDegree {
    pub node: usize,
    pub class: String,
    pub strategy: Option<Strategy>,
    pub in_degree: usize,
    pub out_degree: usize,
    pub in_cap: usize,
    pub out_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullStackMetrics {
    pub seed: u64,
    /// Mean playback continuity over all peers and samples.
    pub continuity: f64,
    /// Mean chunk requests per peer and second.
    pub requests_per_s: f64,
    pub in_degree: f64,
    pub per_class: Vec<GroupMetrics>,
    pub per_strategy: Vec<GroupMetrics>,
    /// Availability per buffer index; index `len - 1` is the next chunk to
    /// play, index 0 the newest slot.
    pub buffer_profile: Vec<f64>,
    /// Realized mesh at the end of the run, source first.
    pub mesh: Vec<MeshDegree>,
    pub samples: Vec<SampleRow>,
    pub requests_sent: u64,
    pub requests_received: u64,
    pub requests_in_flight: u64,
    pub events: u64,
}

impl FullStackMetrics {
    /// CSV with columns `time,group,continuity,requests_per_s,in_degree`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,group,continuity,requests_per_s,in_degree\n");
        for r in &self.samples {
            let _ = writeln!(
                s,
                "{:.3},{},{:.10},{:.10},{:.6}",
                r.time, r.group, r.continuity, r.requests_per_s, r.in_degree
            );
        }
        s
    }
}

enum Event {
    Join(usize),
    TrackerReply(usize),
    ConnectRetry(usize),
    ConnectRequest { from: usize, to: usize },
    /// `link` is the id of the created connection, `None` on denial.
    ConnectReply { to: usize, from: usize, link: Option<u64> },
    SchedTick(usize),
    Playback(usize),
    ChunkRequest { from: usize, to: usize, chunks: Vec<u64> },
    ChunkMiss { to: usize, from: usize, chunks: Vec<u64> },
    TransferEnd { up: usize, link: u64 },
    Deliver { to: usize, chunk: u64 },
    Measure(u32),
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so that the max-heap pops the earliest event; ties in time
    // resolve in insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Link {
    peer: usize,
    id: u64,
    queue: VecDeque<u64>,
    busy: bool,
}

#[derive(Default)]
struct Node {
    class: Option<usize>,
    strong: bool,
    strategy: Option<Strategy>,
    in_cap: usize,
    out_cap: usize,
    up_share: f64,
    down_share: f64,
    out: Vec<Link>,
    inc: Vec<usize>,
    joined: bool,
    playing: bool,
    play_pos: u64,
    have: BTreeSet<u64>,
    pending: BTreeMap<u64, usize>,
    blacklist: BTreeMap<usize, f64>,
    candidates: Vec<usize>,
    outstanding: BTreeSet<usize>,
    awaiting_tracker: bool,
    retry_scheduled: bool,
    ticking: bool,
    hits: u64,
    misses: u64,
    requested: u64,
}

struct Sim<'a> {
    cfg: &'a FullStackConfig,
    nodes: Vec<Node>,
    tracker: Vec<usize>,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Scheduled>,
    now: f64,
    seq: u64,
    buffer: u64,
    sent: u64,
    received: u64,
    in_flight: u64,
    next_link: u64,
    samples: Vec<SampleRow>,
    profile_sum: Vec<f64>,
    profile_count: u64,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a FullStackConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bitrate = cfg.video_bitrate_kbps;
        let source_out = connection_cap(cfg.source_upload, bitrate);
        let mut nodes = vec![Node {
            out_cap: source_out,
            up_share: cfg.source_upload / source_out.max(1) as f64,
            joined: true,
            ..Node::default()
        }];
        let mut ldf_left = match cfg.scheduling {
            Scheduling::Mixed { ldf_peer_count } => ldf_peer_count,
            _ => 0,
        };
        for (ci, c) in cfg.classes.iter().enumerate() {
            let strong = c.name == cfg.strong_class;
            let (out_cap, in_cap) = (connection_cap(c.upload_bw, bitrate), connection_cap(c.download_bw, bitrate));
            for _ in 0..c.count {
                let strategy = match cfg.scheduling {
                    Scheduling::PureEdf => Strategy::Edf,
                    Scheduling::PureLdf => Strategy::Ldf,
                    Scheduling::Mixed { .. } if strong && ldf_left > 0 => {
                        ldf_left -= 1;
                        Strategy::Ldf
                    }
                    Scheduling::Mixed { .. } => Strategy::Edf,
                };
                nodes.push(Node {
                    class: Some(ci),
                    strong,
                    strategy: Some(strategy),
                    in_cap,
                    out_cap,
                    up_share: c.upload_bw / out_cap.max(1) as f64,
                    down_share: c.download_bw / in_cap as f64,
                    ..Node::default()
                });
            }
        }
        let mut order: Vec<usize> = (1..nodes.len()).collect();
        order.shuffle(&mut rng);
        let mut sim = Sim {
            cfg,
            nodes,
            tracker: vec![0],
            rng,
            heap: BinaryHeap::new(),
            now: 0.0,
            seq: 0,
            buffer: cfg.buffer_chunks() as u64,
            sent: 0,
            received: 0,
            in_flight: 0,
            next_link: 0,
            samples: Vec::new(),
            profile_sum: vec![0.0; cfg.buffer_chunks()],
            profile_count: 0,
        };
        for (i, p) in order.into_iter().enumerate() {
            sim.at(i as f64 / cfg.arrival_rate, Event::Join(p));
        }
        sim.at(cfg.measure_start(), Event::Measure(0));
        sim
    }

    fn at(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Scheduled { time, seq: self.seq, event });
    }

    fn after(&mut self, delay: f64, event: Event) {
        self.at(self.now + delay, event);
    }

    /// Newest chunk the source has produced (one chunk per `1/chunk_rate`).
    fn newest(&self) -> u64 {
        (self.now * self.cfg.chunk_rate + 1e-9).floor() as u64
    }

    fn has_chunk(&self, node: usize, chunk: u64) -> bool {
        if node == 0 {
            let newest = self.newest();
            chunk <= newest && newest < chunk + self.buffer
        } else {
            self.nodes[node].have.contains(&chunk)
        }
    }

    fn run(mut self) -> FullStackMetrics {
        let mut events = 0u64;
        while let Some(Scheduled { time, event, .. }) = self.heap.pop() {
            if time > self.cfg.sim_duration_s {
                break;
            }
            assert!(time >= self.now, "event time went backwards");
            self.now = time;
            events += 1;
            self.handle(event);
        }
        self.finish(events)
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Join(p) => self.join(p),
            Event::TrackerReply(p) => self.tracker_reply(p),
            Event::ConnectRetry(p) => {
                self.nodes[p].retry_scheduled = false;
                self.try_connect(p);
            }
            Event::ConnectRequest { from, to } => self.connect_request(from, to),
            Event::ConnectReply { to, from, link } => self.connect_reply(to, from, link),
            Event::SchedTick(p) => self.sched_tick(p),
            Event::Playback(p) => self.playback(p),
            Event::ChunkRequest { from, to, chunks } => self.chunk_request(from, to, chunks),
            Event::ChunkMiss { to, from, chunks } => {
                let node = &mut self.nodes[to];
                for c in chunks {
                    if node.pending.get(&c) == Some(&from) {
                        node.pending.remove(&c);
                    }
                }
            }
            Event::TransferEnd { up, link } => {
                if let Some(idx) = self.nodes[up].out.iter().position(|l| l.id == link) {
                    self.nodes[up].out[idx].busy = false;
                    self.start_next(up, idx);
                }
            }
            Event::Deliver { to, chunk } => {
                let node = &mut self.nodes[to];
                node.pending.remove(&chunk);
                if chunk >= node.play_pos && chunk < node.play_pos + self.buffer {
                    node.have.insert(chunk);
                }
            }
            Event::Measure(k) => self.measure(k),
        }
    }

    fn join(&mut self, p: usize) {
        let newest = self.newest();
        self.nodes[p].joined = true;
        self.nodes[p].play_pos = newest;
        self.at(self.now + self.cfg.buffer_len_s, Event::Playback(p));
        self.fill_candidates(p);
        self.tracker.push(p);
        self.try_connect(p);
    }

    /// Draws a fresh tracker list and keeps the usable entries.
    fn fill_candidates(&mut self, p: usize) {
        let pool: Vec<usize> = self.tracker.iter().copied().filter(|&q| q != p).collect();
        let take = self.cfg.tracker_list_size.min(pool.len());
        let picked = index::sample(&mut self.rng, pool.len(), take);
        let now = self.now;
        let node = &mut self.nodes[p];
        node.blacklist.retain(|_, &mut until| until > now);
        node.candidates = picked
            .into_iter()
            .map(|i| pool[i])
            .filter(|q| !node.blacklist.contains_key(q) && !node.inc.contains(q) && !node.outstanding.contains(q))
            .collect();
    }

    fn try_connect(&mut self, p: usize) {
        let max_parallel = self.cfg.max_parallel_connect;
        let now = self.now;
        let mut requests = Vec::new();
        let node = &mut self.nodes[p];
        if !node.joined || p == 0 {
            return;
        }
        while node.outstanding.len() < max_parallel && node.inc.len() + node.outstanding.len() < node.in_cap {
            let Some(c) = node.candidates.pop() else { break };
            let blocked = node.blacklist.get(&c).is_some_and(|&until| until > now);
            if blocked || node.inc.contains(&c) || node.outstanding.contains(&c) {
                continue;
            }
            node.outstanding.insert(c);
            requests.push(c);
        }
        let exhausted = node.candidates.is_empty()
            && node.outstanding.is_empty()
            && node.inc.len() < node.in_cap
            && !node.awaiting_tracker
            && !node.retry_scheduled;
        for to in requests {
            self.after(self.cfg.latency_s, Event::ConnectRequest { from: p, to });
        }
        if exhausted {
            self.nodes[p].awaiting_tracker = true;
            self.after(2.0 * self.cfg.latency_s, Event::TrackerReply(p));
        }
    }

    fn tracker_reply(&mut self, p: usize) {
        self.nodes[p].awaiting_tracker = false;
        self.fill_candidates(p);
        if self.nodes[p].candidates.is_empty() {
            // Nothing usable: wait for the first blacklist entry to expire.
            let node = &mut self.nodes[p];
            let first_expiry = node.blacklist.values().copied().fold(f64::INFINITY, f64::min);
            let wake = if first_expiry.is_finite() { first_expiry } else { self.now + self.cfg.idle_retry_s };
            node.retry_scheduled = true;
            self.at(wake.max(self.now), Event::ConnectRetry(p));
        } else {
            self.try_connect(p);
        }
    }

    fn connect_request(&mut self, from: usize, to: usize) {
        let accepted = if self.nodes[to].out.iter().any(|l| l.peer == from) {
            false
        } else if self.nodes[to].out.len() < self.nodes[to].out_cap {
            true
        } else if self.nodes[from].strong {
            let weaker: Vec<usize> = (0..self.nodes[to].out.len())
                .filter(|&i| !self.nodes[self.nodes[to].out[i].peer].strong)
                .collect();
            if !weaker.is_empty() && self.rng.random_bool(self.cfg.strong_replace_prob) {
                let victim = weaker[self.rng.random_range(0..weaker.len())];
                self.drop_link(to, victim);
                true
            } else {
                false
            }
        } else if !self.nodes[to].out.is_empty() && self.rng.random_bool(self.cfg.random_replace_prob) {
            let victim = self.rng.random_range(0..self.nodes[to].out.len());
            self.drop_link(to, victim);
            true
        } else {
            false
        };
        let link = accepted.then(|| {
            self.next_link += 1;
            self.nodes[to].out.push(Link { peer: from, id: self.next_link, queue: VecDeque::new(), busy: false });
            self.next_link
        });
        self.after(self.cfg.latency_s, Event::ConnectReply { to: from, from: to, link });
    }

    fn connect_reply(&mut self, p: usize, from: usize, link: Option<u64>) {
        self.nodes[p].outstanding.remove(&from);
        match link {
            Some(id) if self.nodes[from].out.iter().any(|l| l.id == id) => {
                let node = &mut self.nodes[p];
                node.inc.push(from);
                if !node.ticking {
                    node.ticking = true;
                    let delay = self.cfg.t_base / node.inc.len() as f64;
                    self.after(delay, Event::SchedTick(p));
                }
            }
            // Accepted, then replaced before the reply arrived.
            Some(_) => {}
            None => {
                let until = self.now + self.cfg.blacklist_s;
                self.nodes[p].blacklist.insert(from, until);
            }
        }
        self.try_connect(p);
    }

    fn drop_link(&mut self, up: usize, idx: usize) {
        let link = self.nodes[up].out.remove(idx);
        let down = &mut self.nodes[link.peer];
        down.inc.retain(|&u| u != up);
        down.pending.retain(|_, &mut n| n != up);
        self.try_connect(link.peer);
    }

    fn sched_tick(&mut self, p: usize) {
        if self.nodes[p].inc.is_empty() {
            self.nodes[p].ticking = false;
            return;
        }
        let newest = self.newest();
        let win = self.cfg.req_win as u64;
        let node = &self.nodes[p];
        let end = (node.play_pos + self.buffer - 1).min(newest);
        let mut batches: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        if end >= node.play_pos {
            let (lo, hi) = match node.strategy {
                Some(Strategy::Ldf) => ((end + 1).saturating_sub(win).max(node.play_pos), end),
                _ => (node.play_pos, (node.play_pos + win - 1).min(end)),
            };
            let wanted: Vec<u64> = (lo..=hi)
                .filter(|c| !node.have.contains(c) && !node.pending.contains_key(c))
                .collect();
            for c in wanted {
                let pool: Vec<usize> = match self.cfg.request_target {
                    RequestTarget::AnyInConnection => self.nodes[p].inc.clone(),
                    RequestTarget::Holder => {
                        self.nodes[p].inc.iter().copied().filter(|&u| self.has_chunk(u, c)).collect()
                    }
                };
                if pool.is_empty() {
                    continue;
                }
                let to = pool[self.rng.random_range(0..pool.len())];
                self.nodes[p].pending.insert(c, to);
                batches.entry(to).or_default().push(c);
            }
        }
        let count: u64 = batches.values().map(|b| b.len() as u64).sum();
        self.nodes[p].requested += count;
        self.sent += count;
        self.in_flight += count;
        for (to, chunks) in batches {
            self.after(self.cfg.latency_s, Event::ChunkRequest { from: p, to, chunks });
        }
        let delay = self.cfg.t_base / self.nodes[p].inc.len() as f64;
        self.after(delay, Event::SchedTick(p));
    }

    fn chunk_request(&mut self, from: usize, to: usize, chunks: Vec<u64>) {
        self.received += chunks.len() as u64;
        self.in_flight -= chunks.len() as u64;
        let Some(idx) = self.nodes[to].out.iter().position(|l| l.peer == from) else {
            self.after(self.cfg.latency_s, Event::ChunkMiss { to: from, from: to, chunks });
            return;
        };
        let (hit, miss): (Vec<u64>, Vec<u64>) = chunks.into_iter().partition(|&c| self.has_chunk(to, c));
        if !miss.is_empty() {
            self.after(self.cfg.latency_s, Event::ChunkMiss { to: from, from: to, chunks: miss });
        }
        self.nodes[to].out[idx].queue.extend(hit);
        if !self.nodes[to].out[idx].busy {
            self.start_next(to, idx);
        }
    }

    /// Starts the next transfer queued on connection `idx` of `up`,
    /// answering queued chunks that have left the sender's buffer with a miss.
    fn start_next(&mut self, up: usize, idx: usize) {
        let mut miss = Vec::new();
        let down = self.nodes[up].out[idx].peer;
        while let Some(c) = self.nodes[up].out[idx].queue.pop_front() {
            if !self.has_chunk(up, c) {
                miss.push(c);
                continue;
            }
            let rate = self.nodes[up].up_share.min(self.nodes[down].down_share);
            let duration = self.cfg.chunk_kbit() / (rate * 1000.0);
            let link = &mut self.nodes[up].out[idx];
            link.busy = true;
            let id = link.id;
            self.after(duration, Event::TransferEnd { up, link: id });
            self.after(duration + self.cfg.latency_s, Event::Deliver { to: down, chunk: c });
            break;
        }
        if !miss.is_empty() {
            self.after(self.cfg.latency_s, Event::ChunkMiss { to: down, from: up, chunks: miss });
        }
    }

    fn playback(&mut self, p: usize) {
        let node = &mut self.nodes[p];
        node.playing = true;
        let c = node.play_pos;
        if node.have.remove(&c) {
            node.hits += 1;
        } else {
            node.misses += 1;
        }
        node.pending.remove(&c);
        node.play_pos += 1;
        self.after(1.0 / self.cfg.chunk_rate, Event::Playback(p));
    }

    fn measure(&mut self, k: u32) {
        if k > 0 {
            self.record();
        }
        for node in &mut self.nodes {
            node.hits = 0;
            node.misses = 0;
            node.requested = 0;
        }
        self.after(self.cfg.measure_interval_s, Event::Measure(k + 1));
    }

    fn record(&mut self) {
        let interval = self.cfg.measure_interval_s;
        let mut groups: BTreeMap<String, (usize, f64, f64, f64)> = BTreeMap::new();
        for node in self.nodes.iter().skip(1) {
            let played = node.hits + node.misses;
            if !node.playing || played == 0 {
                continue;
            }
            let cont = node.hits as f64 / played as f64;
            let rps = node.requested as f64 / interval;
            let deg = node.inc.len() as f64;
            let class = &self.cfg.classes[node.class.expect("peer has a class")].name;
            let strategy = node.strategy.expect("peer has a strategy").as_str();
            for g in [class.as_str(), strategy, "global"] {
                let e = groups.entry(g.to_string()).or_default();
                e.0 += 1;
                e.1 += cont;
                e.2 += rps;
                e.3 += deg;
            }
            for i in 0..self.buffer {
                if node.have.contains(&(node.play_pos + self.buffer - 1 - i)) {
                    self.profile_sum[i as usize] += 1.0;
                }
            }
            self.profile_count += 1;
        }
        for (group, (n, c, r, d)) in groups {
            let n = n as f64;
            self.samples.push(SampleRow {
                time: self.now,
                group,
                continuity: c / n,
                requests_per_s: r / n,
                in_degree: d / n,
            });
        }
    }

    fn finish(self, events: u64) -> FullStackMetrics {
        let summarize = |group: &str, peers: usize| -> GroupMetrics {
            let rows: Vec<&SampleRow> = self.samples.iter().filter(|r| r.group == group).collect();
            let n = rows.len().max(1) as f64;
            GroupMetrics {
                group: group.to_string(),
                peers,
                continuity: rows.iter().map(|r| r.continuity).sum::<f64>() / n,
                requests_per_s: rows.iter().map(|r| r.requests_per_s).sum::<f64>() / n,
                in_degree: rows.iter().map(|r| r.in_degree).sum::<f64>() / n,
            }
        };
        let per_class = self.cfg.classes.iter().map(|c| summarize(&c.name, c.count)).collect();
        let per_strategy = Strategy::BOTH
            .iter()
            .map(|s| {
                let peers = self.nodes.iter().filter(|n| n.strategy == Some(*s)).count();
                summarize(s.as_str(), peers)
            })
            .filter(|g| g.peers > 0)
            .collect();
        let global = summarize("global", self.nodes.len() - 1);
        let mesh = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| MeshDegree {
                node: i,
                class: n.class.map_or("Source".to_string(), |c| self.cfg.classes[c].name.clone()),
                strategy: n.strategy,
                in_degree: n.inc.len(),
                out_degree: n.out.len(),
                in_cap: n.in_cap,
                out_cap: n.out_cap,
            })
            .collect();
        let denom = self.profile_count.max(1) as f64;
        FullStackMetrics {
            seed: self.cfg.seed,
            continuity: global.continuity,
            requests_per_s: global.requests_per_s,
            in_degree: global.in_degree,
            per_class,
            per_strategy,
            buffer_profile: self.profile_sum.iter().map(|s| s / denom).collect(),
            mesh,
            samples: self.samples,
            requests_sent: self.sent,
            requests_received: self.received,
            requests_in_flight: self.in_flight,
            events,
        }
    }
}

pub fn run_fullstack(cfg: &FullStackConfig) -> Result<FullStackMetrics> {
    cfg.validate()?;
    Ok(Sim::new(cfg).run())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let stderr = if v.len() < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        };
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimate {
    pub group: String,
    pub continuity: Estimate,
    pub requests_per_s: Estimate,
    pub in_degree: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullStackReplicated {
    pub seeds: Vec<u64>,
    pub continuity: Estimate,
    pub requests_per_s: Estimate,
    pub in_degree: Estimate,
    pub groups: Vec<GroupEstimate>,
    pub buffer_profile: Vec<Estimate>,
    /// Per-seed results in seed order.
    pub runs: Vec<FullStackMetrics>,
}

/// Runs `cfg` once per seed in parallel; results are merged in seed order.
/// Every run has the same number of samples, so plain means are used.
pub fn run_fullstack_replications(cfg: &FullStackConfig, seeds: &[u64]) -> Result<FullStackReplicated> {
    if seeds.is_empty() {
        return Err(invalid("at least one seed required"));
    }
    cfg.validate()?;
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    let runs: Vec<FullStackMetrics> = sorted
        .par_iter()
        .map(|&seed| Sim::new(&FullStackConfig { seed, ..cfg.clone() }).run())
        .collect();
    let est = |f: &dyn Fn(&FullStackMetrics) -> f64| Estimate::from_values(&runs.iter().map(f).collect::<Vec<_>>());
    let groups = runs[0]
        .per_class
        .iter()
        .chain(&runs[0].per_strategy)
        .map(|g| g.group.clone())
        .map(|name| {
            let pick = |m: &FullStackMetrics| -> GroupMetrics {
                m.per_class
                    .iter()
                    .chain(&m.per_strategy)
                    .find(|g| g.group == name)
                    .cloned()
                    .expect("same groups in every run")
            };
            GroupEstimate {
                continuity: est(&|m| pick(m).continuity),
                requests_per_s: est(&|m| pick(m).requests_per_s),
                in_degree: est(&|m| pick(m).in_degree),
                group: name,
            }
        })
        .collect();
    let buffer_profile = (0..cfg.buffer_chunks()).map(|i| est(&|m| m.buffer_profile[i])).collect();
    Ok(FullStackReplicated {
        seeds: sorted,
        continuity: est(&|m| m.continuity),
        requests_per_s: est(&|m| m.requests_per_s),
        in_degree: est(&|m| m.in_degree),
        groups,
        buffer_profile,
        runs,
    })
}
