//! Size bounds for the lumped state space.
//!
//! The full chain lives on `Ω` (the served peer plus every buffer bit,
//! `|Ω| = M 2^{M(n-1)}`). Lumping peers by degree gives tables with one row
//! per degree class (row sums `R`) and one column per buffer state
//! `x ∈ {0,1}^n` (column sums `C`). The number of such tables is bracketed
//! with Barvinok's bound `χ(R, C)`, computed here by convex minimization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `ln |Ω| = ln M + M (n - 1) ln 2`.
pub fn omega_log_size(m: u64, n: u32) -> Result<f64> {
    if m < 2 || n < 2 {
        return Err(invalid("need M >= 2 and n >= 2"));
    }
    Ok((m as f64).ln() + m as f64 * (n - 1) as f64 * std::f64::consts::LN_2)
}

/// `ln binom(a, b)` as a sum of logarithms.
pub fn ln_binomial(a: u64, b: u64) -> f64 {
    if b > a {
        return f64::NEG_INFINITY;
    }
    let b = b.min(a - b);
    (1..=b).map(|i| ((a - b + i) as f64).ln() - (i as f64).ln()).sum()
}

/// `ln |𝒞| = (n - 1) ln 2 + ln binom(M - 2 + 2^{n-1}, M - 1)`.
pub fn column_set_log_size(m: u64, n: u32) -> f64 {
    let half = 1u64 << (n - 1);
    (n - 1) as f64 * std::f64::consts::LN_2 + ln_binomial(m - 2 + half, m - 1)
}

pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

/// Exact number of nonnegative integer matrices with row sums `rows` and
/// column sums `cols`, by row-wise enumeration. `budget` bounds the number
/// of candidate rows visited.
pub fn count_contingency_bruteforce(rows: &[u64], cols: &[u64], budget: u64) -> Result<u128> {
    if rows.iter().sum::<u64>() != cols.iter().sum::<u64>() {
        return Err(invalid("row and column sums differ"));
    }
    let mut visited = 0u64;
    let mut remaining = cols.to_vec();
    count_rows(rows, &mut remaining, &mut visited, budget)
}

fn count_rows(rows: &[u64], remaining: &mut [u64], visited: &mut u64, budget: u64) -> Result<u128> {
    let Some((&first, rest)) = rows.split_first() else {
        return Ok(u128::from(remaining.iter().all(|&c| c == 0)));
    };
    if rest.is_empty() {
        // The last row is forced to equal what is left of each column.
        *visited += 1;
        return Ok(u128::from(remaining.iter().sum::<u64>() == first));
    }
    fill_row(first, 0, rows, remaining, visited, budget)
}

fn fill_row(
    left: u64,
    col: usize,
    rows: &[u64],
    remaining: &mut [u64],
    visited: &mut u64,
    budget: u64,
) -> Result<u128> {
    if col == remaining.len() {
        if left != 0 {
            return Ok(0);
        }
        *visited += 1;
        if *visited > budget {
            return Err(Error::BudgetExceeded { what: "contingency table enumeration", budget });
        }
        return count_rows(&rows[1..], remaining, visited, budget);
    }
    let mut total = 0u128;
    for v in 0..=left.min(remaining[col]) {
        remaining[col] -= v;
        total += fill_row(left - v, col + 1, rows, remaining, visited, budget)?;
        remaining[col] += v;
    }
    Ok(total)
}

/// The convex objective `ln F` in logarithmic coordinates,
/// `Σ a_i R_i + Σ b_j C_j - Σ_ij ln(1 - exp(-(a_i + b_j)))`, with zero
/// margins dropped (their infimum sits at infinity and contributes nothing).
#[derive(Debug, Clone, PartialEq)]
pub struct ChiObjective {
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
}

impl ChiObjective {
    pub fn new(rows: &[u64], cols: &[u64]) -> Result<Self> {
        if rows.iter().sum::<u64>() != cols.iter().sum::<u64>() {
            return Err(invalid("row and column sums differ"));
        }
        let keep = |v: &[u64]| v.iter().filter(|&&x| x > 0).map(|&x| x as f64).collect::<Vec<_>>();
        Ok(Self { rows: keep(rows), cols: keep(cols) })
    }

    pub fn dim(&self) -> usize {
        self.rows.len() + self.cols.len()
    }

    fn split<'a>(&self, v: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        v.split_at(self.rows.len())
    }

    /// `None` outside the domain `a_i + b_j > 0`.
    pub fn value(&self, v: &[f64]) -> Option<f64> {
        let (a, b) = self.split(v);
        let mut f = dot(a, &self.rows) + dot(b, &self.cols);
        for &ai in a {
            for &bj in b {
                let z = ai + bj;
                if !(z > 0.0) {
                    return None;
                }
                f -= (-(-z).exp_m1()).ln();
            }
        }
        Some(f)
    }

    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let (a, b) = self.split(v);
        let mut g: Vec<f64> = self.rows.iter().chain(&self.cols).copied().collect();
        let r = a.len();
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                let w = 1.0 / (ai + bj).exp_m1();
                g[i] -= w;
                g[r + j] -= w;
            }
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiOptions {
    /// Stopping threshold on the gradient norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ChiOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiResult {
    /// `ln χ(R, C)`.
    pub ln_chi: f64,
    /// Minimizer in logarithmic coordinates (rows then columns, nonzero
    /// margins only), shifted into the positive orthant.
    pub point: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// `ln χ(R, C)` by gradient descent with backtracking on [`ChiObjective`].
pub fn chi(rows: &[u64], cols: &[u64], opts: &ChiOptions) -> Result<ChiResult> {
    let obj = ChiObjective::new(rows, cols)?;
    let r = obj.rows.len();
    if obj.dim() == 0 {
        return Ok(ChiResult { ln_chi: 0.0, point: vec![], iterations: 0, grad_norm: 0.0 });
    }
    let mut v = vec![1.0; obj.dim()];
    let mut f = obj.value(&v).expect("start point is feasible");
    let mut step = 1.0;
    for it in 0..opts.max_iter {
        let g = obj.gradient(&v);
        let gn2 = dot(&g, &g);
        if gn2.sqrt() <= opts.tol {
            // The objective is invariant under a_i + t, b_j - t; centre the
            // point so both blocks are positive.
            let min_a = v[..r].iter().copied().fold(f64::INFINITY, f64::min);
            let min_b = v[r..].iter().copied().fold(f64::INFINITY, f64::min);
            let t = (min_b - min_a) / 2.0;
            v[..r].iter_mut().for_each(|x| *x += t);
            v[r..].iter_mut().for_each(|x| *x -= t);
            return Ok(ChiResult { ln_chi: f, point: v, iterations: it, grad_norm: gn2.sqrt() });
        }
        loop {
            let trial: Vec<f64> = v.iter().zip(&g).map(|(x, d)| x - step * d).collect();
            // Near the minimum the sufficient decrease drops below the
            // resolution of f; there a smaller gradient is required instead.
            let noise = 1e-13 * f.abs().max(1.0);
            let accept = match obj.value(&trial) {
                Some(ft) if f - ft > noise && ft <= f - 1e-4 * step * gn2 => Some(ft),
                Some(ft) if (ft - f).abs() <= noise => {
                    let gt = obj.gradient(&trial);
                    (dot(&gt, &gt) < gn2).then_some(ft)
                }
                _ => None,
            };
            match accept {
                Some(ft) => {
                    v = trial;
                    f = ft;
                    step *= 2.0;
                    break;
                }
                _ => step *= 0.5,
            }
            if step < 1e-300 {
                return Err(Error::NonConvergence {
                    what: "chi minimization (line search)",
                    iterations: it,
                    residual: gn2.sqrt(),
                });
            }
        }
    }
    Err(Error::NonConvergence {
        what: "chi minimization",
        iterations: opts.max_iter,
        residual: dot(&obj.gradient(&v), &obj.gradient(&v)).sqrt(),
    })
}

/// All column-sum vectors in `𝒞`: one count per buffer state `x ∈ {0,1}^n`
/// (bit `j` of the state index is buffer index `j + 1`), with exactly one
/// peer in a state holding index 1 and `M - 1` peers in the others.
pub fn enumerate_column_sums(m: u64, n: u32, budget: u64) -> Result<Vec<Vec<u64>>> {
    if m < 2 || n < 1 {
        return Err(invalid("need M >= 2 and n >= 1"));
    }
    if n >= 32 || column_set_log_size(m, n) > (budget as f64).ln() {
        return Err(Error::BudgetExceeded { what: "column-sum set", budget });
    }
    let states = 1usize << n;
    let with_first: Vec<usize> = (0..states).filter(|x| x & 1 == 1).collect();
    let without: Vec<usize> = (0..states).filter(|x| x & 1 == 0).collect();
    let mut rest = Vec::new();
    compositions(m - 1, without.len(), &mut vec![0; without.len()], 0, &mut rest);
    let mut out = Vec::with_capacity(with_first.len() * rest.len());
    for &s in &with_first {
        for comp in &rest {
            let mut c = vec![0u64; states];
            c[s] = 1;
            for (&x, &k) in without.iter().zip(comp) {
                c[x] = k;
            }
            out.push(c);
        }
    }
    Ok(out)
}

fn compositions(total: u64, parts: usize, buf: &mut Vec<u64>, at: usize, out: &mut Vec<Vec<u64>>) {
    if at + 1 == parts {
        buf[at] = total;
        out.push(buf.clone());
        return;
    }
    for v in 0..=total {
        buf[at] = v;
        compositions(total - v, parts, buf, at + 1, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionInstance {
    pub peer_count: u64,
    pub buffer_len: u32,
    /// Peers per degree class.
    pub rows: Vec<u64>,
    pub a0: f64,
}

impl ReductionInstance {
    pub fn new(peer_count: u64, buffer_len: u32, rows: Vec<u64>, a0: f64) -> Result<Self> {
        let inst = Self { peer_count, buffer_len, rows, a0 };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.iter().sum::<u64>() != self.peer_count {
            return Err(invalid("row sums must add up to the peer count"));
        }
        if self.rows.is_empty() || self.rows.contains(&0) {
            return Err(invalid("every degree class needs at least one peer"));
        }
        if !(self.a0 > 0.0) {
            return Err(invalid("a0 must be positive"));
        }
        if self.peer_count < 2 || self.buffer_len < 2 {
            return Err(invalid("need M >= 2 and n >= 2"));
        }
        Ok(())
    }
}

pub const DEFAULT_A0: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnChi {
    pub cols: Vec<u64>,
    pub ln_chi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub instance: ReductionInstance,
    pub ln_omega: f64,
    pub ln_column_set: f64,
    pub column_set_size: usize,
    pub ln_chi_min: f64,
    pub ln_chi_max: f64,
    /// `-a0 (|𝒟| + 2^n) ln M`.
    pub ln_lower_factor: f64,
    /// Log bracket on the lumped state-space size.
    pub ln_upsilon_lower: f64,
    pub ln_upsilon_upper: f64,
    pub necessary_holds: bool,
    pub sufficient_holds: bool,
    pub per_column: Vec<ColumnChi>,
}

/// Evaluates both reduction conditions in log space:
/// necessary `ln|Ω| >= ln|𝒞| + min_C ln χ - a0 (|𝒟| + 2^n) ln M`,
/// sufficient `ln|Ω| >= ln|𝒞| + max_C ln χ`.
pub fn check_reduction_conditions(inst: &ReductionInstance, budget: u64) -> Result<ReductionReport> {
    inst.validate()?;
    let (m, n) = (inst.peer_count, inst.buffer_len);
    let columns = enumerate_column_sums(m, n, budget)?;
    let opts = ChiOptions::default();
    let per_column = columns
        .into_par_iter()
        .map(|cols| chi(&inst.rows, &cols, &opts).map(|r| ColumnChi { cols, ln_chi: r.ln_chi }))
        .collect::<Result<Vec<_>>>()?;
    let ln_chi_min = per_column.iter().map(|c| c.ln_chi).fold(f64::INFINITY, f64::min);
    let ln_chi_max = per_column.iter().map(|c| c.ln_chi).fold(f64::NEG_INFINITY, f64::max);
    let ln_omega = omega_log_size(m, n)?;
    let ln_column_set = column_set_log_size(m, n);
    let ln_lower_factor = -inst.a0 * (inst.rows.len() as f64 + (1u64 << n) as f64) * (m as f64).ln();
    let ln_upsilon_lower = ln_column_set + ln_chi_min + ln_lower_factor;
    let ln_upsilon_upper = ln_column_set + ln_chi_max;
    Ok(ReductionReport {
        instance: inst.clone(),
        ln_omega,
        ln_column_set,
        column_set_size: per_column.len(),
        ln_chi_min,
        ln_chi_max,
        ln_lower_factor,
        ln_upsilon_lower,
        ln_upsilon_upper,
        necessary_holds: ln_omega >= ln_upsilon_lower,
        sufficient_holds: ln_omega >= ln_upsilon_upper,
        per_column,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn omega_examples() {
        assert!((omega_log_size(2, 2).unwrap() - 8f64.ln()).abs() < 1e-12);
        assert!((omega_log_size(3, 2).unwrap() - 24f64.ln()).abs() < 1e-12);
        let big = omega_log_size(1000, 40).unwrap();
        assert!((big - (1000f64.ln() + 39000.0 * std::f64::consts::LN_2)).abs() < 1e-6);
        assert!(omega_log_size(1, 2).is_err());
    }

    #[test]
    fn brute_force_examples() {
        let b = DEFAULT_ENUMERATION_BUDGET;
        assert_eq!(count_contingency_bruteforce(&[1, 1], &[1, 1], b).unwrap(), 2);
        assert_eq!(count_contingency_bruteforce(&[2], &[2], b).unwrap(), 1);
        assert_eq!(count_contingency_bruteforce(&[2, 1], &[1, 1, 1], b).unwrap(), 3);
        assert_eq!(count_contingency_bruteforce(&[2, 2], &[2, 2], b).unwrap(), 3);
        assert!(matches!(
            count_contingency_bruteforce(&[6, 6, 6], &[3; 6], 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn chi_of_single_cell() {
        // min_s s - ln(1 - e^{-s}) is attained at s = ln 2.
        let r = chi(&[1], &[1], &ChiOptions::default()).unwrap();
        assert!((r.ln_chi - 2.0 * 2f64.ln()).abs() < 1e-9);
        assert!(r.ln_chi >= 0.0);
        assert!(r.point.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn chi_gradient_matches_finite_differences() {
        let (rows, cols) = ([2u64, 3], [1u64, 0, 2, 2]);
        let r = chi(&rows, &cols, &ChiOptions::default()).unwrap();
        let obj = ChiObjective::new(&rows, &cols).unwrap();
        let g = obj.gradient(&r.point);
        let h = 1e-6;
        for i in 0..r.point.len() {
            let mut p = r.point.clone();
            p[i] += h;
            let fp = obj.value(&p).unwrap();
            p[i] -= 2.0 * h;
            let fm = obj.value(&p).unwrap();
            assert!((g[i] - (fp - fm) / (2.0 * h)).abs() <= 1e-6);
        }
    }

    #[test]
    fn column_set_size_matches_formula() {
        let cs = enumerate_column_sums(3, 2, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(cs.len(), 6);
        for (m, n) in [(2, 2), (4, 2), (3, 3), (5, 3)] {
            let cs = enumerate_column_sums(m, n, DEFAULT_ENUMERATION_BUDGET).unwrap();
            assert!(((cs.len() as f64).ln() - column_set_log_size(m, n)).abs() < 1e-9);
            for c in &cs {
                assert_eq!(c.iter().sum::<u64>(), m);
                let served: u64 = c.iter().enumerate().filter(|(x, _)| x & 1 == 1).map(|(_, v)| v).sum();
                assert_eq!(served, 1);
            }
        }
    }

    #[test]
    fn log_sizes_stay_finite() {
        for m in 2..=20 {
            for n in 2..=6 {
                assert!(omega_log_size(m, n).unwrap().is_finite());
                assert!(column_set_log_size(m, n).is_finite());
            }
        }
        assert!(enumerate_column_sums(20, 6, 1000).is_err());
    }

    #[test]
    fn report_is_consistent() {
        let inst = ReductionInstance::new(3, 2, vec![1, 2], DEFAULT_A0).unwrap();
        let rep = check_reduction_conditions(&inst, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(rep.column_set_size, 6);
        assert!(rep.ln_upsilon_lower <= rep.ln_upsilon_upper);
        assert!(!rep.sufficient_holds || rep.necessary_holds);
        assert!((rep.ln_omega - 24f64.ln()).abs() < 1e-12);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("necessary_holds"));
    }

    #[test]
    fn instance_validation() {
        assert!(ReductionInstance::new(3, 2, vec![1, 1], 1.0).is_err());
        assert!(ReductionInstance::new(3, 2, vec![3, 0], 1.0).is_err());
        assert!(ReductionInstance::new(3, 2, vec![3], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn objective_is_convex_along_segments(
            a in prop::collection::vec(0.01f64..5.0, 5),
            b in prop::collection::vec(0.01f64..5.0, 5),
        ) {
            let obj = ChiObjective::new(&[2, 1], &[1, 1, 1]).unwrap();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
            let (fa, fb, fm) = (obj.value(&a).unwrap(), obj.value(&b).unwrap(), obj.value(&mid).unwrap());
            prop_assert!(fm <= (fa + fb) / 2.0 + 1e-9);
        }

        #[test]
        fn chi_bounds_the_count(
            rows in prop::collection::vec(1u64..3, 1..3),
            seed in prop::collection::vec(0u64..3, 2..4),
        ) {
            // Build columns with the same total as the rows.
            let total: u64 = rows.iter().sum();
            let mut cols = vec![0u64; seed.len()];
            for t in 0..total {
                cols[(seed[t as usize % seed.len()] as usize + t as usize) % seed.len()] += 1;
            }
            let count = count_contingency_bruteforce(&rows, &cols, DEFAULT_ENUMERATION_BUDGET).unwrap();
            let r = chi(&rows, &cols, &ChiOptions::default()).unwrap();
            prop_assert!(r.ln_chi + 1e-6 >= (count as f64).ln());
        }
    }
}
