//! Continuous-index approximations for a swarm with one weak and one strong
//! degree class.
//!
//! Treating the buffer index as a continuous variable `x` turns the
//! mean-field recurrences into ODEs in `y1(x)`, `y2(x)` (weak and strong
//! buffer probabilities) with coupling `θ = q1 y1 + q2 y2`:
//!
//! ```text
//! pure LDF:  y1' = k1 ς θ (1 - y1)^2
//!            y2' = k2 ς θ (1 - y2)^2
//! mixed:     y1' = k1 ς θ (1 - y1)(y1 - p1 + ε1) / (1 - k1 ς θ (1 - y1))
//!            y2' = k2 ς θ (1 - y2)^2
//! ```
//!
//! Both start at `x = 1` from `y1 = y2 = p1 = 1/M`. The mixed system has a
//! self-consistency condition `ε1 = 1 - y1(n)`, found here by damped
//! shooting.

use std::cell::Cell;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mean_field::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoDegreeSystem {
    /// Weak degree.
    pub k1: f64,
    /// Strong degree.
    pub k2: f64,
    pub pi1: f64,
    pub pi2: f64,
    /// Size-biased masses.
    pub q1: f64,
    pub q2: f64,
    pub sigma: f64,
    /// Boundary value `p1(1) = 1/M`.
    pub p1_boundary: f64,
}

impl TwoDegreeSystem {
    /// Builds the system for degrees `k1 <= k2`, weak share `pi1`, contact
    /// scale `sigma` and `peer_count` peers. The size-biased masses follow
    /// from the shares.
    pub fn new(k1: u32, k2: u32, pi1: f64, sigma: f64, peer_count: u64) -> Result<Self> {
        if k1 == 0 || k1 > k2 {
            return Err(invalid(format!("need 0 < k1 <= k2, got k1 = {k1}, k2 = {k2}")));
        }
        if !(0.0..=1.0).contains(&pi1) {
            return Err(invalid("weak share must lie in [0, 1]"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid("contact scale must be positive"));
        }
        if peer_count < 2 {
            return Err(invalid("peer count must be at least 2"));
        }
        let (k1f, k2f) = (k1 as f64, k2 as f64);
        let pi2 = 1.0 - pi1;
        let mean = k1f * pi1 + k2f * pi2;
        let q1 = k1f * pi1 / mean;
        Ok(Self {
            k1: k1f,
            k2: k2f,
            pi1,
            pi2,
            q1,
            q2: 1.0 - q1,
            sigma,
            p1_boundary: 1.0 / peer_count as f64,
        })
    }

    /// Degree ratio `r = k1 / k2`.
    pub fn r(&self) -> f64 {
        self.k1 / self.k2
    }

    /// `1/p1`, the peer count implied by the boundary.
    pub fn peer_count(&self) -> f64 {
        1.0 / self.p1_boundary
    }

    pub fn theta(&self, y1: f64, y2: f64) -> f64 {
        self.q1 * y1 + self.q2 * y2
    }

    pub fn pure_ldf_rhs(&self, y1: f64, y2: f64) -> [f64; 2] {
        let th = self.theta(y1, y2);
        [
            self.k1 * self.sigma * th * (1.0 - y1).powi(2),
            self.k2 * self.sigma * th * (1.0 - y2).powi(2),
        ]
    }

    /// Mixed right-hand side and its weak-class denominator
    /// `1 - k1 ς θ (1 - y1)`.
    pub fn mixed_rhs(&self, y1: f64, y2: f64, eps1: f64) -> ([f64; 2], f64) {
        let th = self.theta(y1, y2);
        let g = self.k1 * self.sigma * th * (1.0 - y1);
        let den = 1.0 - g;
        (
            [
                g * (y1 - self.p1_boundary + eps1) / den,
                self.k2 * self.sigma * th * (1.0 - y2).powi(2),
            ],
            den,
        )
    }
}

/// Sampled solution on a grid of buffer positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    /// Global `π1 y1 + π2 y2`.
    pub y: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> (f64, f64, f64) {
        let i = self.x.len() - 1;
        (self.y1[i], self.y2[i], self.y[i])
    }

    /// First grid position where the weak class is strictly ahead.
    pub fn crossover(&self) -> Option<f64> {
        self.y1
            .iter()
            .zip(&self.y2)
            .position(|(a, b)| a > b)
            .map(|i| self.x[i])
    }

    /// CSV with columns `x,y1,y2,y`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y1,y2,y\n");
        for i in 0..self.x.len() {
            let _ = writeln!(
                s,
                "{},{:.12e},{:.12e},{:.12e}",
                self.x[i], self.y1[i], self.y2[i], self.y[i]
            );
        }
        s
    }
}

/// Default integration step in buffer-index units.
pub const DEFAULT_STEP: f64 = 0.01;

/// Fixed-step classic RK4 from `x = 1` to `x = n`; the last step is
/// shortened to land on `n`.
fn rk4(
    sys: &TwoDegreeSystem,
    n: f64,
    step: f64,
    f: impl Fn(f64, [f64; 2]) -> Result<[f64; 2]>,
) -> Result<Trajectory> {
    if !(step > 0.0) {
        return Err(invalid("integration step must be positive"));
    }
    if !(n >= 1.0) {
        return Err(invalid("buffer length must be at least 1"));
    }
    let steps = ((n - 1.0) / step - 1e-9).ceil().max(0.0) as usize;
    let mut x = 1.0;
    let mut y = [sys.p1_boundary, sys.p1_boundary];
    let mut out = Trajectory {
        x: Vec::with_capacity(steps + 1),
        y1: Vec::with_capacity(steps + 1),
        y2: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
    };
    let push = |x: f64, y: [f64; 2], out: &mut Trajectory| {
        out.x.push(x);
        out.y1.push(y[0]);
        out.y2.push(y[1]);
        out.y.push(sys.pi1 * y[0] + sys.pi2 * y[1]);
    };
    push(x, y, &mut out);
    let add = |y: [f64; 2], h: f64, k: [f64; 2]| [y[0] + h * k[0], y[1] + h * k[1]];
    for s in 0..steps {
        let h = if s + 1 == steps { n - x } else { step };
        let a = f(x, y)?;
        let b = f(x + h / 2.0, add(y, h / 2.0, a))?;
        let c = f(x + h / 2.0, add(y, h / 2.0, b))?;
        let d = f(x + h, add(y, h, c))?;
        for j in 0..2 {
            y[j] += h / 6.0 * (a[j] + 2.0 * b[j] + 2.0 * c[j] + d[j]);
        }
        x = if s + 1 == steps { n } else { x + h };
        push(x, y, &mut out);
    }
    Ok(out)
}

pub fn integrate_pure_ldf(sys: &TwoDegreeSystem, n: f64, step: f64) -> Result<Trajectory> {
    rk4(sys, n, step, |_, y| Ok(sys.pure_ldf_rhs(y[0], y[1])))
}

/// Strong-class probability as a function of the weak one under pure LDF
/// in the large-`M` limit: `y2 = y1 / (1 - (1 - r)(1 - y1))`.
pub fn exact_ldf_relation(y1: f64, r: f64) -> f64 {
    y1 / (1.0 - (1.0 - r) * (1.0 - y1))
}

/// Finite-`M` first integral of the pure LDF system with `y1 = y2 = 1/M`
/// at `x = 1`: `y2 = (1 - (C k1 + r)(1 - y1)) / (1 - C k1 (1 - y1))` with
/// `C = M/(M-1) (1/k1 - 1/k2)`.
pub fn exact_ldf_relation_finite(y1: f64, k1: f64, k2: f64, peer_count: f64) -> f64 {
    let r = k1 / k2;
    let ck1 = peer_count / (peer_count - 1.0) * (1.0 / k1 - 1.0 / k2) * k1;
    (1.0 - (ck1 + r) * (1.0 - y1)) / (1.0 - ck1 * (1.0 - y1))
}

/// Buffer length the weak class needs under pure LDF to reach continuity
/// `1 - eps1`, with sensitivities by central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferRequirement {
    pub n1: f64,
    pub dn1_deps1: f64,
    pub dn1_dp1: f64,
}

/// Partial-fraction constants of the weak-class buffer integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequirementConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl RequirementConstants {
    /// Constants of the decomposition
    /// `(r + (1-r)y) / (k1 ς (q1(r + (1-r)y) + q2) y (1-y)^2)
    ///   = A/(k1 ς y) + B/(1-y) + C/(1-y)^2 + D/(q1(r + (1-r)y) + q2)`.
    pub fn derived(sys: &TwoDegreeSystem) -> Self {
        let (r, q1, q2) = (sys.r(), sys.q1, sys.q2);
        let ks = sys.k1 * sys.sigma;
        let s = q1 * r + q2;
        Self {
            a: r / s,
            b: (r + q1 * (1.0 - r)) / ks,
            c: 1.0 / ks,
            d: q1 * q1 * q2 * (1.0 - r).powi(3) / (ks * s),
            e: q1 * (1.0 - r) / s,
        }
    }

    /// Constants as they appear in the published closed form (whose `B`
    /// differs from the partial-fraction coefficient).
    pub fn published(sys: &TwoDegreeSystem) -> Self {
        let (r, q1, q2) = (sys.r(), sys.q1, sys.q2);
        let ks = sys.k1 * sys.sigma;
        let s = q1 * r + q2;
        let b = r / (ks * s) * (1.0 / (1.0 - r) + q1 * q1 * q2 * r * (1.0 - r) / (1.0 + q1 * r))
            + 1.0 / (ks * r) * (1.0 - (1.0 - r * r) / (1.0 + q1 * r));
        Self { b, ..Self::derived(sys) }
    }
}

fn requirement_domain(sys: &TwoDegreeSystem, eps1: f64, p1: f64) -> Result<()> {
    if !(sys.k1 < sys.k2) {
        return Err(Error::Domain("buffer requirement needs k1 < k2".into()));
    }
    if !(eps1 > 0.0 && eps1 < 1.0) || !(p1 > 0.0 && p1 < 1.0) {
        return Err(Error::Domain("eps1 and p1 must lie in (0, 1)".into()));
    }
    if !(eps1 < 1.0 - p1) {
        return Err(Error::Domain(format!("need eps1 < 1 - p1 (eps1 = {eps1}, p1 = {p1})")));
    }
    Ok(())
}

/// Closed-form weak-class buffer length, integrating the pure LDF weak ODE
/// (with the large-`M` strong/weak relation substituted) from `y1 = p1` at
/// `x = 1` up to `y1 = 1 - eps1`.
pub fn ldf_buffer_length(sys: &TwoDegreeSystem, eps1: f64, p1: f64) -> Result<f64> {
    requirement_domain(sys, eps1, p1)?;
    let k = RequirementConstants::derived(sys);
    let (r, q1) = (sys.r(), sys.q1);
    let ks = sys.k1 * sys.sigma;
    Ok(k.a / ks * ((1.0 - eps1) / p1).ln()
        + k.b * ((1.0 - p1) / eps1).ln()
        + k.c / eps1
        + k.d / (q1 * (1.0 - r)) * ((1.0 + k.e * (1.0 - eps1)) / (1.0 + k.e * p1)).ln()
        - (k.c - 1.0 + p1) / (1.0 - p1))
}

/// The closed form exactly as published, kept for comparison with
/// [`ldf_buffer_length`]. It differs in the `A` prefactor, the `B`
/// constant and the lower limit of the `D` logarithm.
pub fn ldf_buffer_length_published(sys: &TwoDegreeSystem, eps1: f64, p1: f64) -> Result<f64> {
    requirement_domain(sys, eps1, p1)?;
    let k = RequirementConstants::published(sys);
    let (r, q1) = (sys.r(), sys.q1);
    Ok(k.a / sys.k1 * ((1.0 - eps1) / p1).ln()
        + k.b * ((1.0 - p1) / eps1).ln()
        + k.c / eps1
        + k.d / (q1 * (1.0 - r)) * ((1.0 + k.e * (1.0 - eps1)) / (1.0 + k.e * (1.0 - p1))).ln()
        - (k.c - 1.0 + p1) / (1.0 - p1))
}

/// [`ldf_buffer_length`] with its sensitivities to `eps1` and `p1`.
pub fn ldf_buffer_requirement(sys: &TwoDegreeSystem, eps1: f64, p1: f64) -> Result<BufferRequirement> {
    let n1 = ldf_buffer_length(sys, eps1, p1)?;
    let he = 1e-6 * eps1;
    let hp = 1e-6 * p1;
    let dn1_deps1 = (ldf_buffer_length(sys, eps1 + he, p1)? - ldf_buffer_length(sys, eps1 - he, p1)?)
        / (2.0 * he);
    let dn1_dp1 =
        (ldf_buffer_length(sys, eps1, p1 + hp)? - ldf_buffer_length(sys, eps1, p1 - hp)?) / (2.0 * hp);
    Ok(BufferRequirement { n1, dn1_deps1, dn1_dp1 })
}

/// Position where the weak class of a pure LDF trajectory first reaches
/// `level`, linearly interpolated between grid points.
pub fn first_crossing(t: &Trajectory, level: f64) -> Option<f64> {
    let i = t.y1.iter().position(|&y| y >= level)?;
    if i == 0 {
        return Some(t.x[0]);
    }
    let (x0, x1, y0, y1) = (t.x[i - 1], t.x[i], t.y1[i - 1], t.y1[i]);
    Some(x0 + (level - y0) / (y1 - y0) * (x1 - x0))
}

/// Below this the mixed weak-class denominator is treated as singular.
pub const MIXED_SINGULAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedSolution {
    pub trajectory: Trajectory,
    /// Self-consistent `ε1 = 1 - y1(n)`.
    pub eps1: f64,
    pub shooting_iterations: usize,
}

/// Solution of the ODEs for an arbitrary (weak, strong) strategy profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub trajectory: Trajectory,
    /// Self-consistent shortfall `1 - y_k(n)` of each EDF class; `None`
    /// for LDF classes.
    pub eps: [Option<f64>; 2],
    pub shooting_iterations: usize,
}

/// Right-hand side for a strategy profile. LDF classes follow
/// `k ς θ (1 - y)^2`; EDF classes follow
/// `k ς θ (1 - y)(y - p1 + ε) / (1 - k ς θ (1 - y))`.
fn profile_rhs(
    sys: &TwoDegreeSystem,
    profile: [Strategy; 2],
    eps: [f64; 2],
    x: f64,
    y: [f64; 2],
) -> Result<[f64; 2]> {
    let th = sys.theta(y[0], y[1]);
    let mut out = [0.0; 2];
    for (c, k) in [sys.k1, sys.k2].into_iter().enumerate() {
        let g = k * sys.sigma * th * (1.0 - y[c]);
        out[c] = match profile[c] {
            Strategy::Ldf => g * (1.0 - y[c]),
            Strategy::Edf => {
                let den = 1.0 - g;
                if den <= MIXED_SINGULAR_FLOOR {
                    return Err(Error::Singularity { x, value: den });
                }
                g * (y[c] - sys.p1_boundary + eps[c]) / den
            }
        };
    }
    Ok(out)
}

/// Integrates a profile for fixed shortfalls `eps` (ignored for LDF classes).
pub fn integrate_profile_with_eps(
    sys: &TwoDegreeSystem,
    profile: [Strategy; 2],
    n: f64,
    step: f64,
    eps: [f64; 2],
) -> Result<Trajectory> {
    rk4(sys, n, step, |x, y| profile_rhs(sys, profile, eps, x, y))
}

/// Integrates the mixed ODEs for a fixed `ε1`.
pub fn integrate_mixed_with_eps(sys: &TwoDegreeSystem, n: f64, step: f64, eps1: f64) -> Result<Trajectory> {
    integrate_profile_with_eps(sys, [Strategy::Edf, Strategy::Ldf], n, step, [eps1, 0.0])
}

pub const SHOOTING_DAMPING: f64 = 0.5;
/// Damped iterations tried before falling back to bisection.
pub const SHOOTING_DAMPED_ITER: usize = 500;
const BISECTION_MAX_ITER: usize = 200;

/// Integrates the ODEs of `profile` with every EDF shortfall made
/// self-consistent (`ε_k = 1 - y_k(n)`).
///
/// Damped shooting comes first: integrate, move each `ε_k` half way to
/// `1 - y_k(n)`, repeat until all residuals are below `shoot_tol`. The
/// initial guess is the pure LDF shortfall. When the map is too steep for
/// damping to contract (small `ς`), the residual `1 - y_k(n) - ε_k`, which
/// decreases in `ε_k`, is bisected instead, nesting the weak class inside
/// the strong one when both run EDF.
pub fn integrate_profile(
    sys: &TwoDegreeSystem,
    profile: [Strategy; 2],
    n: f64,
    step: f64,
    shoot_tol: f64,
) -> Result<ProfileSolution> {
    if !(shoot_tol > 0.0) {
        return Err(invalid("shooting tolerance must be positive"));
    }
    let edf = profile.map(|s| s == Strategy::Edf);
    let ldf = integrate_pure_ldf(sys, n, step)?;
    if !edf[0] && !edf[1] {
        return Ok(ProfileSolution { trajectory: ldf, eps: [None, None], shooting_iterations: 0 });
    }
    let evals = Cell::new(0usize);
    let residuals = |eps: [f64; 2]| -> Result<[f64; 2]> {
        evals.set(evals.get() + 1);
        let (y1, y2, _) = integrate_profile_with_eps(sys, profile, n, step, eps)?.last();
        let r = [1.0 - y1 - eps[0], 1.0 - y2 - eps[1]];
        Ok([0, 1].map(|c| if edf[c] { r[c] } else { 0.0 }))
    };
    let (l1, l2, _) = ldf.last();
    let floor = sys.p1_boundary;
    let mut eps = [(1.0 - l1).clamp(floor, 1.0), (1.0 - l2).clamp(floor, 1.0)];
    let mut found = None;
    for _ in 0..SHOOTING_DAMPED_ITER {
        let r = residuals(eps)?;
        if r[0].abs() < shoot_tol && r[1].abs() < shoot_tol {
            found = Some(eps);
            break;
        }
        for c in 0..2 {
            eps[c] += SHOOTING_DAMPING * r[c];
        }
    }
    let eps = match found {
        Some(e) => e,
        None => bisect_profile(edf, shoot_tol, residuals)?,
    };
    let trajectory = integrate_profile_with_eps(sys, profile, n, step, eps)?;
    Ok(ProfileSolution {
        trajectory,
        eps: [edf[0].then_some(eps[0]), edf[1].then_some(eps[1])],
        shooting_iterations: evals.get(),
    })
}

fn bisect(mut f: impl FnMut(f64) -> Result<f64>, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut residual = f64::INFINITY;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        residual = f(mid)?;
        if residual.abs() < tol {
            return Ok(mid);
        }
        if residual > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON {
            break;
        }
    }
    Err(Error::NonConvergence {
        what: "shooting for EDF shortfall",
        iterations: SHOOTING_DAMPED_ITER + BISECTION_MAX_ITER,
        residual: residual.abs(),
    })
}

fn bisect_profile(
    edf: [bool; 2],
    tol: f64,
    residuals: impl Fn([f64; 2]) -> Result<[f64; 2]>,
) -> Result<[f64; 2]> {
    match edf {
        [true, false] => Ok([bisect(|e| Ok(residuals([e, 0.0])?[0]), tol)?, 0.0]),
        [false, true] => Ok([0.0, bisect(|e| Ok(residuals([0.0, e])?[1]), tol)?]),
        _ => {
            let inner = |e2: f64| bisect(|e1| Ok(residuals([e1, e2])?[0]), tol / 4.0);
            let e2 = bisect(
                |e2| {
                    let e1 = inner(e2)?;
                    Ok(residuals([e1, e2])?[1])
                },
                tol,
            )?;
            Ok([inner(e2)?, e2])
        }
    }
}

/// Integrates the mixed ODEs (weak EDF, strong LDF) with `ε1` made
/// self-consistent; see [`integrate_profile`].
pub fn integrate_mixed(sys: &TwoDegreeSystem, n: f64, step: f64, shoot_tol: f64) -> Result<MixedSolution> {
    let sol = integrate_profile(sys, [Strategy::Edf, Strategy::Ldf], n, step, shoot_tol)?;
    Ok(MixedSolution {
        trajectory: sol.trajectory,
        eps1: sol.eps[0].unwrap_or_default(),
        shooting_iterations: sol.shooting_iterations,
    })
}

/// Integration constant of the approximate mixed first integral,
/// `C = ln(ε1/(1-p1)) / (r(1-p1+ε1)) - 1/(1-p1)`, fixed by `y1 = y2 = p1`.
pub fn mixed_approx_constant(r: f64, eps1: f64, p1: f64) -> f64 {
    (eps1 / (1.0 - p1)).ln() / (r * (1.0 - p1 + eps1)) - 1.0 / (1.0 - p1)
}

fn mixed_domain(eps1: f64, p1: f64) -> Result<()> {
    if !(p1 > 0.0 && p1 < 1.0) || !(eps1 > 0.0) {
        return Err(Error::Domain("need p1 in (0, 1) and eps1 > 0".into()));
    }
    Ok(())
}

/// Strong-class probability predicted from the weak one by the first-order
/// (conservative) approximation of the mixed weak ODE.
pub fn mixed_approx_relation(y1: f64, r: f64, eps1: f64, p1: f64) -> Result<f64> {
    mixed_domain(eps1, p1)?;
    let arg = (y1 - p1 + eps1) / (1.0 - y1);
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(Error::Domain(format!("log argument {arg} not positive at y1 = {y1}")));
    }
    let l = arg.ln() / (r * (1.0 - p1 + eps1));
    let c = mixed_approx_constant(r, eps1, p1);
    Ok((l - c - 1.0) / (l - c))
}

/// Inverse of [`mixed_approx_relation`]: weak-class probability given the
/// strong one.
pub fn mixed_approx_weak(y2: f64, r: f64, eps1: f64, p1: f64) -> Result<f64> {
    mixed_domain(eps1, p1)?;
    if !(y2 < 1.0) {
        return Err(Error::Domain("y2 must be below 1".into()));
    }
    let l = mixed_approx_constant(r, eps1, p1) + 1.0 / (1.0 - y2);
    let e = (r * (1.0 - p1 + eps1) * l).exp();
    Ok(if e.is_infinite() { 1.0 } else { (e + p1 - eps1) / (1.0 + e) })
}

/// `C0 = ln(p1/(1-p1))/r - 1/(1-p1)`, the constant at `ε1 = p1`.
pub fn simplified_constant(r: f64, p1: f64) -> f64 {
    (p1 / (1.0 - p1)).ln() / r - 1.0 / (1.0 - p1)
}

/// Simplified relation at `ε1 = p1`: `y1 = 1 / (1 + exp(-r(1/(1-y2) + C0)))`.
pub fn mixed_simplified_weak(y2: f64, r: f64, p1: f64) -> Result<f64> {
    mixed_domain(p1, p1)?;
    if !(y2 < 1.0) {
        return Err(Error::Domain("y2 must be below 1".into()));
    }
    let z = -r * (1.0 / (1.0 - y2) + simplified_constant(r, p1));
    Ok(1.0 / (1.0 + z.exp()))
}

/// Smallest `z` on a grid of `(0, 1)` with `z f2(z) < 1`, where
/// `f2(z) = 1 + exp(-r(1/(1-z) + C0))`: the predicted point where the weak
/// class overtakes the strong one.
pub fn simplified_crossover(r: f64, p1: f64, grid: usize) -> Option<f64> {
    let c0 = simplified_constant(r, p1);
    // Only the region past the strong class's own early rise is of interest.
    (1..grid).map(|j| j as f64 / grid as f64).find(|&z| {
        let f2 = 1.0 + (-r * (1.0 / (1.0 - z) + c0)).exp();
        z > 0.5 && z * f2 < 1.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OdeStrategy {
    PureLdf,
    /// Mixed strategy with the given weak-class shortfall `ε1`.
    Mixed { eps1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jacobian {
    pub matrix: [[f64; 2]; 2],
    /// Eigenvalues as `(re, im)`, ordered by real part.
    pub eigenvalues: [(f64, f64); 2],
}

impl Jacobian {
    fn from_matrix(m: [[f64; 2]; 2]) -> Self {
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = tr * tr / 4.0 - det;
        let eigenvalues = if disc >= 0.0 {
            let s = disc.sqrt();
            [(tr / 2.0 - s, 0.0), (tr / 2.0 + s, 0.0)]
        } else {
            let s = (-disc).sqrt();
            [(tr / 2.0, -s), (tr / 2.0, s)]
        };
        Self { matrix: m, eigenvalues }
    }
}

/// Analytic Jacobian of the chosen right-hand side at `(y1, y2)`.
///
/// For the mixed system at `(1, 1)` this is `diag(-k1 ς (1 - y0), 0)` with
/// `y0 = p1 - ε1`.
pub fn stability_jacobian(sys: &TwoDegreeSystem, strategy: OdeStrategy, at: (f64, f64)) -> Result<Jacobian> {
    let (y1, y2) = at;
    if !(0.0..=1.0).contains(&y1) || !(0.0..=1.0).contains(&y2) {
        return Err(invalid("evaluation point must lie in [0, 1]^2"));
    }
    let th = sys.theta(y1, y2);
    let (a1, a2) = (sys.k1 * sys.sigma, sys.k2 * sys.sigma);
    let strong = [
        a2 * sys.q1 * (1.0 - y2).powi(2),
        a2 * (sys.q2 * (1.0 - y2).powi(2) - 2.0 * th * (1.0 - y2)),
    ];
    let weak = match strategy {
        OdeStrategy::PureLdf => [
            a1 * (sys.q1 * (1.0 - y1).powi(2) - 2.0 * th * (1.0 - y1)),
            a1 * sys.q2 * (1.0 - y1).powi(2),
        ],
        OdeStrategy::Mixed { eps1 } => {
            // f1 = a g h / (1 - a g), g = θ(1 - y1), h = y1 - p1 + ε1.
            let g = th * (1.0 - y1);
            let h = y1 - sys.p1_boundary + eps1;
            let den = 1.0 - a1 * g;
            if den <= MIXED_SINGULAR_FLOOR {
                return Err(Error::Singularity { x: f64::NAN, value: den });
            }
            let dg1 = sys.q1 * (1.0 - y1) - th;
            let dg2 = sys.q2 * (1.0 - y1);
            [
                a1 * h * dg1 / (den * den) + a1 * g / den,
                a1 * h * dg2 / (den * den),
            ]
        }
    };
    Ok(Jacobian::from_matrix([weak, strong]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game_system() -> TwoDegreeSystem {
        TwoDegreeSystem::new(25, 55, 0.85, 0.25, 1000).unwrap()
    }

    #[test]
    fn equal_degrees_give_identical_curves() {
        let sys = TwoDegreeSystem::new(10, 10, 0.4, 0.05, 500).unwrap();
        let t = integrate_pure_ldf(&sys, 40.0, DEFAULT_STEP).unwrap();
        for (a, b) in t.y1.iter().zip(&t.y2) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn grid_lands_on_endpoint() {
        let sys = game_system();
        let t = integrate_pure_ldf(&sys, 40.0, 0.03).unwrap();
        assert_eq!(*t.x.last().unwrap(), 40.0);
        assert_eq!(t.x[0], 1.0);
    }

    #[test]
    fn strong_class_leads_under_ldf() {
        let t = integrate_pure_ldf(&game_system(), 40.0, DEFAULT_STEP).unwrap();
        assert!(t.y1.iter().zip(&t.y2).all(|(a, b)| b >= a));
        assert!(t.y.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn exact_relation_examples() {
        assert_eq!(exact_ldf_relation(1.0, 0.3), 1.0);
        assert_eq!(exact_ldf_relation(0.37, 1.0), 0.37);
        assert!((exact_ldf_relation(0.5, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        // The finite-M form tends to the large-M one.
        let a = exact_ldf_relation_finite(0.4, 25.0, 55.0, 1e12);
        assert!((a - exact_ldf_relation(0.4, 25.0 / 55.0)).abs() < 1e-10);
    }

    #[test]
    fn requirement_sensitivities_have_expected_signs() {
        let sys = game_system();
        let req = ldf_buffer_requirement(&sys, 0.1, sys.p1_boundary).unwrap();
        assert!(req.n1 > 1.0);
        assert!(req.dn1_deps1 < 0.0);
        assert!(req.dn1_dp1 < 0.0);
    }

    #[test]
    fn requirement_domain_errors() {
        let sys = game_system();
        assert!(matches!(ldf_buffer_length(&sys, 0.9995, 0.001), Err(Error::Domain(_))));
        assert!(matches!(ldf_buffer_length(&sys, 0.0, 0.001), Err(Error::Domain(_))));
        let eq = TwoDegreeSystem::new(5, 5, 0.5, 0.1, 100).unwrap();
        assert!(ldf_buffer_length(&eq, 0.1, 0.01).is_err());
    }

    #[test]
    fn simplified_relation_tends_to_one() {
        let y = mixed_simplified_weak(1.0 - 1e-9, 0.45, 1e-3).unwrap();
        assert!(y > 1.0 - 1e-12);
    }

    #[test]
    fn approximate_relation_respects_boundary() {
        let (r, p1, eps1) = (0.45, 1e-3, 0.02);
        let y2 = mixed_approx_relation(p1, r, eps1, p1).unwrap();
        assert!((y2 - p1).abs() < 1e-12);
        let y1 = mixed_approx_weak(0.7, r, eps1, p1).unwrap();
        assert!((mixed_approx_relation(y1, r, eps1, p1).unwrap() - 0.7).abs() < 1e-9);
    }

    #[test]
    fn approximate_relation_domain() {
        assert!(mixed_approx_relation(1.0, 0.5, 0.1, 0.01).is_err());
        assert!(mixed_approx_relation(0.5, 0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn ldf_jacobian_vanishes_at_full_buffers() {
        let j = stability_jacobian(&game_system(), OdeStrategy::PureLdf, (1.0, 1.0)).unwrap();
        assert_eq!(j.eigenvalues, [(0.0, 0.0), (0.0, 0.0)]);
    }

    #[test]
    fn mixed_jacobian_at_full_buffers() {
        let sys = game_system();
        let eps1 = 0.03;
        let j = stability_jacobian(&sys, OdeStrategy::Mixed { eps1 }, (1.0, 1.0)).unwrap();
        let y0 = sys.p1_boundary - eps1;
        let expect = -sys.k1 * sys.sigma * (1.0 - y0);
        assert!((j.eigenvalues[0].0 - expect).abs() < 1e-9);
        assert!(j.eigenvalues[1].0.abs() < 1e-9);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let sys = TwoDegreeSystem::new(25, 55, 0.85, 0.02, 1000).unwrap();
        let h = 1e-6;
        for strategy in [OdeStrategy::PureLdf, OdeStrategy::Mixed { eps1: 0.05 }] {
            let f = |y1: f64, y2: f64| match strategy {
                OdeStrategy::PureLdf => sys.pure_ldf_rhs(y1, y2),
                OdeStrategy::Mixed { eps1 } => sys.mixed_rhs(y1, y2, eps1).0,
            };
            let (y1, y2) = (0.5, 0.6);
            let j = stability_jacobian(&sys, strategy, (y1, y2)).unwrap();
            for row in 0..2 {
                let d1 = (f(y1 + h, y2)[row] - f(y1 - h, y2)[row]) / (2.0 * h);
                let d2 = (f(y1, y2 + h)[row] - f(y1, y2 - h)[row]) / (2.0 * h);
                assert!((j.matrix[row][0] - d1).abs() <= 1e-6);
                assert!((j.matrix[row][1] - d2).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn rejects_out_of_box_point() {
        assert!(stability_jacobian(&game_system(), OdeStrategy::PureLdf, (1.2, 0.0)).is_err());
    }
}
