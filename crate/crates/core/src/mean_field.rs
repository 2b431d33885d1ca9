//! Stationary mean-field buffer probabilities.
//!
//! Peers of equal degree are exchangeable and see a mean environment: a
//! degree-`k` peer contacts neighbours at rate `kς`, and a neighbour holds
//! chunk `i` with probability `θ_i = Σ_l q(l) p_l(i)`, `q` being the
//! size-biased degree distribution. With the reduced chunk-selection
//! functions the buffer probabilities satisfy
//!
//! ```text
//! p_k(1)   = 1/M
//! p_k(i+1) = p_k(i) + k ς θ_i (1 - p_k(i)) s_k(i)
//! s_k(i)   = 1 - p_k(i)                          (LDF)
//! s_k(i)   = 1 - p_k(1) - p_k(n) + p_k(i+1)      (EDF)
//! ```
//!
//! [`solve_fixed_point`] iterates this system to a fixed point.
//! [`integrate_full_rate_equation`] integrates the underlying `2^n`-state
//! rate equations per degree class and marginalizes them; the two routes
//! must agree.
//!
//! Buffer indices in this module are 1-based in the public API (index 1 is
//! the server-fed slot, index `n` the playback slot).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Chunk selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    /// Latest deadline first (rarest first): lowest missing buffer index.
    Ldf,
    /// Earliest deadline first (greedy): highest missing buffer index.
    Edf,
}

impl Strategy {
    pub const BOTH: [Strategy; 2] = [Strategy::Ldf, Strategy::Edf];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Ldf => "LDF",
            Strategy::Edf => "EDF",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeClass {
    pub degree: u32,
    /// Population share `π(k)`.
    pub share: f64,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldConfig {
    pub buffer_len: usize,
    /// Peer count `M`; fixes the boundary `p_k(1) = 1/M`.
    pub peer_count: u64,
    /// Contact scale `ς`.
    pub contact_scale: f64,
    pub classes: Vec<DegreeClass>,
}

impl MeanFieldConfig {
    pub fn validate(&self) -> Result<()> {
        self.validate_classes()?;
        let mut degrees: Vec<u32> = self.classes.iter().map(|c| c.degree).collect();
        degrees.sort_unstable();
        if degrees.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("degrees must be distinct"));
        }
        Ok(())
    }

    /// Validation without the distinct-degree requirement, for callers that
    /// split one degree into several strategy-bearing populations.
    pub(crate) fn validate_classes(&self) -> Result<()> {
        if self.buffer_len < 2 {
            return Err(invalid("buffer length must be at least 2"));
        }
        if self.peer_count == 0 {
            return Err(invalid("peer count must be positive"));
        }
        if !(self.contact_scale >= 0.0) || !self.contact_scale.is_finite() {
            return Err(invalid("contact scale must be finite and nonnegative"));
        }
        if self.classes.is_empty() {
            return Err(invalid("at least one degree class required"));
        }
        if self.classes.iter().any(|c| c.degree == 0) {
            return Err(invalid("degrees must be positive"));
        }
        if self.classes.iter().any(|c| !(0.0..=1.0).contains(&c.share)) {
            return Err(invalid("population shares must lie in [0, 1]"));
        }
        let total: f64 = self.classes.iter().map(|c| c.share).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("population shares sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn boundary(&self) -> f64 {
        1.0 / self.peer_count as f64
    }

    /// Size-biased weights `q(k)` in class order.
    pub fn size_biased(&self) -> Vec<f64> {
        let mean: f64 = self.mean_degree();
        self.classes
            .iter()
            .map(|c| c.degree as f64 * c.share / mean)
            .collect()
    }

    pub fn mean_degree(&self) -> f64 {
        self.classes.iter().map(|c| c.degree as f64 * c.share).sum()
    }

    pub fn max_degree(&self) -> u32 {
        self.classes.iter().map(|c| c.degree).max().unwrap_or(0)
    }

    /// A two-class configuration with weak degree `k1` (share `pi1`) and
    /// strong degree `k2`.
    pub fn two_class(
        buffer_len: usize,
        peer_count: u64,
        contact_scale: f64,
        (k1, pi1, s1): (u32, f64, Strategy),
        (k2, s2): (u32, Strategy),
    ) -> Self {
        Self {
            buffer_len,
            peer_count,
            contact_scale,
            classes: vec![
                DegreeClass { degree: k1, share: pi1, strategy: s1 },
                DegreeClass { degree: k2, share: 1.0 - pi1, strategy: s2 },
            ],
        }
    }
}

/// Per-degree buffer probabilities with their coupling vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferTable {
    pub degrees: Vec<u32>,
    pub shares: Vec<f64>,
    /// Size-biased weights, class order.
    pub size_biased: Vec<f64>,
    /// `p[c][i-1] = p_k(i)` for class `c`.
    pub p: Vec<Vec<f64>>,
    /// `theta[i-1] = θ_i`.
    pub theta: Vec<f64>,
    /// `p_global[i-1] = Σ_k π(k) p_k(i)`.
    pub p_global: Vec<f64>,
}

impl BufferTable {
    fn assemble(cfg: &MeanFieldConfig, p: Vec<Vec<f64>>) -> Self {
        let q = cfg.size_biased();
        let theta = coupling(&q, &p);
        let shares: Vec<f64> = cfg.classes.iter().map(|c| c.share).collect();
        let p_global = coupling(&shares, &p);
        Self {
            degrees: cfg.classes.iter().map(|c| c.degree).collect(),
            shares,
            size_biased: q,
            p,
            theta,
            p_global,
        }
    }

    pub fn buffer_len(&self) -> usize {
        self.theta.len()
    }

    pub fn class_of(&self, degree: u32) -> Option<usize> {
        self.degrees.iter().position(|&d| d == degree)
    }

    /// Buffer probabilities of the class with the given degree.
    pub fn for_degree(&self, degree: u32) -> Option<&[f64]> {
        self.class_of(degree).map(|c| self.p[c].as_slice())
    }

    /// Playback continuity `p(n)` of the whole population.
    pub fn continuity(&self) -> f64 {
        *self.p_global.last().expect("non-empty table")
    }

    /// CSV with columns `degree,buffer_index,p,theta,p_global`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("degree,buffer_index,p,theta,p_global\n");
        for (c, &k) in self.degrees.iter().enumerate() {
            for i in 0..self.buffer_len() {
                let _ = writeln!(
                    s,
                    "{k},{},{:.12e},{:.12e},{:.12e}",
                    i + 1,
                    self.p[c][i],
                    self.theta[i],
                    self.p_global[i]
                );
            }
        }
        s
    }
}

fn coupling(weights: &[f64], p: &[Vec<f64>]) -> Vec<f64> {
    let n = p[0].len();
    (0..n)
        .map(|i| weights.iter().zip(p).map(|(w, pk)| w * pk[i]).sum())
        .collect()
}

fn check_index(i: usize, len: usize) -> Result<()> {
    if i == 0 || i > len {
        Err(Error::IndexOutOfRange { index: i, len })
    } else {
        Ok(())
    }
}

/// Rarest-first selection `s_k(i) = 1 - p_k(i)`, 1-based `i`.
pub fn chunk_selection_ldf(p_k: &[f64], i: usize) -> Result<f64> {
    check_index(i, p_k.len())?;
    Ok(1.0 - p_k[i - 1])
}

/// Greedy selection `s_k(i) = 1 - p_k(1) - p_k(n) + p_k(i+1)` for
/// `1 <= i <= n-1`. The raw value is returned; it is not clamped.
pub fn chunk_selection_edf(p_k: &[f64], i: usize) -> Result<f64> {
    let n = p_k.len();
    check_index(i, n.saturating_sub(1))?;
    Ok(1.0 - p_k[0] - p_k[n - 1] + p_k[i])
}

/// Probability that a degree-`k` contact skips index `j`: either the chunk
/// is held or the contact did not find it.
fn skip_factor(p_kj: f64, theta_j: f64, k_sigma: f64) -> f64 {
    p_kj + (1.0 - p_kj) * (1.0 - k_sigma * theta_j)
}

/// Product form of the LDF selection function,
/// `(1 - p_k(1)) Π_{j<i} [p_k(j) + (1 - p_k(j))(1 - kςθ_j)]`.
pub fn chunk_selection_ldf_product(p_k: &[f64], theta: &[f64], k_sigma: f64, i: usize) -> Result<f64> {
    check_index(i, p_k.len())?;
    let prod: f64 = (0..i - 1)
        .map(|j| skip_factor(p_k[j], theta[j], k_sigma))
        .product();
    Ok((1.0 - p_k[0]) * prod)
}

/// Product form of the EDF selection function,
/// `(1 - p_k(1)) Π_{j=i+1}^{n-1} [p_k(j) + (1 - p_k(j))(1 - kςθ_j)]`.
pub fn chunk_selection_edf_product(p_k: &[f64], theta: &[f64], k_sigma: f64, i: usize) -> Result<f64> {
    let n = p_k.len();
    check_index(i, n.saturating_sub(1))?;
    // 1-based j in i+1..=n-1 is 0-based i..n-1.
    let prod: f64 = (i..n - 1)
        .map(|j| skip_factor(p_k[j], theta[j], k_sigma))
        .product();
    Ok((1.0 - p_k[0]) * prod)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Fraction of the sweep update applied per iteration, in `(0, 1]`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-10, max_iter: 100_000 }
    }
}

/// Threshold below which the implicit EDF step is treated as singular.
const EDF_DENOMINATOR_FLOOR: f64 = 1e-12;

/// One sweep of the recurrence for every class, holding `θ`, `p_k(1)` and
/// `p_k(n)` at their values in `p`. Returns the swept table.
fn sweep(cfg: &MeanFieldConfig, theta: &[f64], p: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = cfg.buffer_len;
    let boundary = cfg.boundary();
    cfg.classes
        .iter()
        .zip(p)
        .map(|(class, old)| {
            let k_sigma = class.degree as f64 * cfg.contact_scale;
            let mut new = vec![0.0; n];
            new[0] = boundary;
            for i in 0..n - 1 {
                let c = k_sigma * theta[i] * (1.0 - new[i]);
                new[i + 1] = match class.strategy {
                    Strategy::Ldf => new[i] + c * (1.0 - new[i]),
                    Strategy::Edf => {
                        let den = 1.0 - c;
                        if den <= EDF_DENOMINATOR_FLOOR {
                            return Err(Error::EdfDenominator {
                                degree: class.degree,
                                index: i + 1,
                                value: den,
                            });
                        }
                        (new[i] + c * (1.0 - old[0] - old[n - 1])) / den
                    }
                };
            }
            Ok(new)
        })
        .collect()
}

/// Solves the stationary recurrence by damped fixed-point iteration.
///
/// Each iteration sweeps `i = 1..n-1` for all classes with the current `θ`
/// and `p_k(n)`, then moves the table a `damping` fraction towards the
/// sweep and clamps to `[0, 1]`. Converged once a sweep moves no entry by
/// more than `tol`.
pub fn solve_fixed_point(cfg: &MeanFieldConfig, opts: &SolverOptions) -> Result<BufferTable> {
    cfg.validate()?;
    solve_classes(cfg, opts)
}

/// [`solve_fixed_point`] for configurations that may repeat a degree.
pub(crate) fn solve_classes(cfg: &MeanFieldConfig, opts: &SolverOptions) -> Result<BufferTable> {
    cfg.validate_classes()?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(invalid("damping must lie in (0, 1]"));
    }
    let n = cfg.buffer_len;
    let q = cfg.size_biased();
    let mut p = vec![vec![cfg.boundary(); n]; cfg.classes.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let theta = coupling(&q, &p);
        let swept = sweep(cfg, &theta, &p)?;
        residual = 0.0;
        for (old, new) in p.iter_mut().zip(&swept) {
            for (o, &s) in old.iter_mut().zip(new) {
                residual = f64::max(residual, (s - *o).abs());
                *o = (*o + opts.damping * (s - *o)).clamp(0.0, 1.0);
            }
        }
        if residual <= opts.tol {
            return Ok(BufferTable::assemble(cfg, p));
        }
    }
    Err(Error::NonConvergence {
        what: "mean-field fixed point",
        iterations: opts.max_iter,
        residual,
    })
}

/// Largest absolute residual of the stationary recurrence over all
/// classes and indices, evaluated on `table` as given.
pub fn recurrence_residual(cfg: &MeanFieldConfig, table: &BufferTable) -> f64 {
    let n = cfg.buffer_len;
    let mut worst: f64 = 0.0;
    for (class, p) in cfg.classes.iter().zip(&table.p) {
        let k_sigma = class.degree as f64 * cfg.contact_scale;
        worst = worst.max((p[0] - cfg.boundary()).abs());
        for i in 0..n - 1 {
            let s = match class.strategy {
                Strategy::Ldf => 1.0 - p[i],
                Strategy::Edf => 1.0 - p[0] - p[n - 1] + p[i + 1],
            };
            let rhs = p[i] + k_sigma * table.theta[i] * (1.0 - p[i]) * s;
            worst = worst.max((p[i + 1] - rhs).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartupLatency {
    /// `(k, kς Σ_i p_k(i))` per class.
    pub per_degree: Vec<(u32, f64)>,
    /// `E[k] ς Σ_i p(i)`.
    pub global: f64,
    /// Raw values divided by `n · k_max · ς`.
    pub normalized_per_degree: Vec<(u32, f64)>,
    pub normalized_global: f64,
    /// Human-readable description of the normalization, echoed in outputs.
    pub normalization: String,
}

pub fn startup_latency(cfg: &MeanFieldConfig, table: &BufferTable) -> StartupLatency {
    let sigma = cfg.contact_scale;
    let scale = cfg.buffer_len as f64 * cfg.max_degree() as f64 * sigma;
    let norm = |x: f64| if scale > 0.0 { x / scale } else { 0.0 };
    let per_degree: Vec<(u32, f64)> = table
        .degrees
        .iter()
        .zip(&table.p)
        .map(|(&k, p)| (k, k as f64 * sigma * p.iter().sum::<f64>()))
        .collect();
    let global = cfg.mean_degree() * sigma * table.p_global.iter().sum::<f64>();
    StartupLatency {
        normalized_per_degree: per_degree.iter().map(|&(k, v)| (k, norm(v))).collect(),
        normalized_global: norm(global),
        per_degree,
        global,
        normalization: "raw / (n * k_max * contact_scale)".into(),
    }
}

/// Largest buffer length handled by the full-state integrator.
pub const FULL_STATE_MAX_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEquationOptions {
    pub horizon: f64,
    pub dt: f64,
    /// Stationarity threshold on `max |dw/dt|`.
    pub stationarity_tol: f64,
}

impl Default for RateEquationOptions {
    fn default() -> Self {
        Self { horizon: 5_000.0, dt: 0.05, stationarity_tol: 1e-9 }
    }
}

/// Result of integrating the full-state rate equations.
#[derive(Debug, Clone, PartialEq)]
pub struct FullStateSolution {
    pub table: BufferTable,
    /// `w[c][u]`: share of class-`c` peers in buffer state `u` (bit `i-1` is
    /// buffer index `i`).
    pub w: Vec<Vec<f64>>,
    pub time: f64,
    /// Largest `|Σ_u w_u - 1|` seen over the run.
    pub max_mass_drift: f64,
}

/// Integrates the per-degree rate equations over all `2^n` buffer states
/// and marginalizes `p_k(i) = Σ_{u_i = 1} w_u^k`.
///
/// Within one unit of time a state gains chunk `i` (for `i < n`) at rate
/// `kς θ_i s_k(i)`, with `θ` and `s_k` computed from the current
/// marginals; the resulting occupation is then shifted one slot towards
/// playback, and the freed slot 1 is filled by the server with probability
/// `1/M`. Starts from every peer holding nothing.
pub fn integrate_full_rate_equation(
    cfg: &MeanFieldConfig,
    opts: &RateEquationOptions,
) -> Result<FullStateSolution> {
    cfg.validate()?;
    let n = cfg.buffer_len;
    if n > FULL_STATE_MAX_LEN {
        return Err(invalid(format!(
            "full-state integration limited to buffer length {FULL_STATE_MAX_LEN}"
        )));
    }
    if cfg.classes.len() > 2 {
        return Err(invalid("full-state integration supports at most two degree classes"));
    }
    if !(opts.dt > 0.0) || !(opts.horizon > 0.0) {
        return Err(invalid("horizon and dt must be positive"));
    }
    let states = 1usize << n;
    let rhs = FullStateRhs { cfg, q: cfg.size_biased(), n, states };
    let mut w: Vec<Vec<f64>> = cfg
        .classes
        .iter()
        .map(|_| {
            let mut v = vec![0.0; states];
            v[0] = 1.0;
            v
        })
        .collect();
    let mut t = 0.0;
    let mut max_drift: f64 = 0.0;
    let steps = (opts.horizon / opts.dt).ceil() as usize;
    let mut residual = f64::INFINITY;
    for _ in 0..steps {
        let k1 = rhs.eval(&w);
        residual = k1
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m: f64, x| m.max(x.abs()));
        if residual < opts.stationarity_tol {
            let p = marginals(&w, n);
            return Ok(FullStateSolution {
                table: BufferTable::assemble(cfg, p),
                w,
                time: t,
                max_mass_drift: max_drift,
            });
        }
        let h = opts.dt;
        let k2 = rhs.eval(&axpy(&w, h / 2.0, &k1));
        let k3 = rhs.eval(&axpy(&w, h / 2.0, &k2));
        let k4 = rhs.eval(&axpy(&w, h, &k3));
        for c in 0..w.len() {
            for u in 0..states {
                w[c][u] += h / 6.0 * (k1[c][u] + 2.0 * k2[c][u] + 2.0 * k3[c][u] + k4[c][u]);
            }
            let mass: f64 = w[c].iter().sum();
            max_drift = max_drift.max((mass - 1.0).abs());
        }
        t += h;
    }
    Err(Error::HorizonExhausted { horizon: opts.horizon, residual })
}

struct FullStateRhs<'a> {
    cfg: &'a MeanFieldConfig,
    q: Vec<f64>,
    n: usize,
    states: usize,
}

impl FullStateRhs<'_> {
    fn eval(&self, w: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.n;
        let p = marginals(w, n);
        let theta = coupling(&self.q, &p);
        let inject = self.cfg.boundary();
        let mask = self.states - 1;
        self.cfg
            .classes
            .iter()
            .zip(w)
            .zip(&p)
            .map(|((class, wc), pc)| {
                let k_sigma = class.degree as f64 * self.cfg.contact_scale;
                // Download rate into index i (0-based), for i < n - 1.
                let rate: Vec<f64> = (0..n - 1)
                    .map(|i| {
                        let s = match class.strategy {
                            Strategy::Ldf => 1.0 - pc[i],
                            Strategy::Edf => 1.0 - pc[0] - pc[n - 1] + pc[i + 1],
                        };
                        k_sigma * theta[i] * s
                    })
                    .collect();
                // Occupation after one unit of downloads (linearized flux).
                let mut after = wc.clone();
                for (u, &wu) in wc.iter().enumerate() {
                    if wu == 0.0 {
                        continue;
                    }
                    for (i, &r) in rate.iter().enumerate() {
                        if u & (1 << i) == 0 {
                            let flow = r * wu;
                            after[u] -= flow;
                            after[u | (1 << i)] += flow;
                        }
                    }
                }
                // Shift towards playback; the server refills slot 1.
                let mut out = vec![0.0; self.states];
                for (u, &a) in after.iter().enumerate() {
                    let shifted = (u << 1) & mask;
                    out[shifted] += (1.0 - inject) * a;
                    out[shifted | 1] += inject * a;
                }
                for (o, &x) in out.iter_mut().zip(wc) {
                    *o -= x;
                }
                out
            })
            .collect()
    }
}

fn axpy(w: &[Vec<f64>], a: f64, d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    w.iter()
        .zip(d)
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x + a * y).collect())
        .collect()
}

fn marginals(w: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    w.iter()
        .map(|wc| {
            (0..n)
                .map(|i| {
                    wc.iter()
                        .enumerate()
                        .filter(|(u, _)| u & (1 << i) != 0)
                        .map(|(_, x)| x)
                        .sum()
                })
                .collect()
        })
        .collect()
}
