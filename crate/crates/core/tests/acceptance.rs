//! Acceptance checks, one verdict line per criterion.
//!
//! Runs without the libtest harness so the verdicts come out in order.
//! A failing verdict is reported but does not fail the process unless
//! `ACCEPTANCE_STRICT=1` is set; `ACCEPTANCE_ONLY=1,4,11` restricts the run
//! to the listed criteria.

use std::time::Instant;

use swarmlab::continuum::{self, OdeStrategy, TwoDegreeSystem, DEFAULT_STEP};
use swarmlab::degree_graph::generate_ws;
use swarmlab::fullstack_sim::{run_fullstack, run_fullstack_replications, FullStackConfig, FullStackReplicated, Scheduling};
use swarmlab::game::{build_payoff_table, nash_equilibria, Backend, DEFAULT_NASH_TOL, PROFILES};
use swarmlab::mean_field::{
    chunk_selection_edf, chunk_selection_edf_product, chunk_selection_ldf, chunk_selection_ldf_product,
    integrate_full_rate_equation, solve_fixed_point, DegreeClass, MeanFieldConfig, RateEquationOptions,
    SolverOptions, Strategy,
};
use swarmlab::state_space::{
    chi, check_reduction_conditions, count_contingency_bruteforce, enumerate_column_sums, ChiOptions,
    ReductionInstance, DEFAULT_ENUMERATION_BUDGET,
};
use swarmlab::stochastic_sim::{run_replications, AssignmentRule, Replicated, Shifting, SimConfig};

struct Report {
    only: Option<Vec<usize>>,
    failed: Vec<usize>,
}

impl Report {
    fn wants(&self, n: usize) -> bool {
        self.only.as_ref().map_or(true, |v| v.contains(&n))
    }

    fn verdict(&mut self, n: usize, ok: bool, start: Instant, detail: impl AsRef<str>) {
        if !ok {
            self.failed.push(n);
        }
        println!(
            "criterion {n:>2}: {}  [{:.1} s]  {}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            detail.as_ref()
        );
    }
}

fn info(text: impl AsRef<str>) {
    println!("              info: {}", text.as_ref());
}

/// `a >= b` allowing three standard errors of the difference.
fn geq_within_3se(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 - 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt()
}

fn game_system(sigma: f64) -> TwoDegreeSystem {
    TwoDegreeSystem::new(25, 55, 0.85, sigma, 1000).unwrap()
}

fn game_config(sigma: f64, weak: Strategy, strong: Strategy) -> MeanFieldConfig {
    MeanFieldConfig::two_class(40, 1000, sigma, (25, 0.85, weak), (55, strong))
}

fn c1(r: &mut Report) {
    let t = Instant::now();
    let k = 10;
    let cfg = MeanFieldConfig {
        buffer_len: 40,
        peer_count: 1000,
        contact_scale: 1.0 / k as f64,
        classes: vec![DegreeClass { degree: k, share: 1.0, strategy: Strategy::Ldf }],
    };
    let table = solve_fixed_point(&cfg, &SolverOptions::default()).unwrap();
    let p = &table.p[0];
    let residual = p
        .windows(2)
        .map(|w| (w[1] - w[0] - w[0] * (1.0 - w[0]).powi(2)).abs())
        .fold(0.0, f64::max);
    let ok = residual <= 1e-10 && t.elapsed().as_secs_f64() < 1.0;
    r.verdict(1, ok, t, format!("homogeneous LDF recurrence residual {residual:.2e} (<= 1e-10)"));
}

fn c2(r: &mut Report) {
    let t = Instant::now();
    let sigma = 0.02;
    let mut worst = 0.0f64;
    let mut errors = Vec::new();
    for [weak, strong] in PROFILES {
        let cfg = game_config(sigma, weak, strong);
        let table = match solve_fixed_point(&cfg, &SolverOptions::default()) {
            Ok(t) => t,
            Err(e) => {
                errors.push(format!("{weak}/{strong}: {e}"));
                continue;
            }
        };
        let n = table.buffer_len();
        for (c, class) in cfg.classes.iter().enumerate() {
            let p = &table.p[c];
            let ks = class.degree as f64 * sigma;
            let diffs: Vec<f64> = match class.strategy {
                Strategy::Ldf => (1..=n)
                    .map(|i| chunk_selection_ldf_product(p, &table.theta, ks, i).unwrap() - chunk_selection_ldf(p, i).unwrap())
                    .collect(),
                Strategy::Edf => (1..n)
                    .map(|i| chunk_selection_edf_product(p, &table.theta, ks, i).unwrap() - chunk_selection_edf(p, i).unwrap())
                    .collect(),
            };
            worst = diffs.iter().fold(worst, |m, d| m.max(d.abs()));
        }
    }
    let ok = errors.is_empty() && worst <= 1e-8 && t.elapsed().as_secs_f64() < 5.0;
    let mut detail = format!("product vs closed selection forms, n=40, ς={sigma}, 4 profiles: max diff {worst:.2e} (<= 1e-8)");
    if !errors.is_empty() {
        detail += &format!("; solver errors: {}", errors.join("; "));
    }
    r.verdict(2, ok, t, detail);
}

fn c3(r: &mut Report) {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for n in [4, 5, 6] {
        for [s1, s2] in PROFILES {
            let cfg = MeanFieldConfig::two_class(n, 10, 0.1, (3, 0.6, s1), (9, s2));
            let full = integrate_full_rate_equation(&cfg, &RateEquationOptions::default()).unwrap();
            let fixed = solve_fixed_point(&cfg, &SolverOptions::default()).unwrap();
            for (a, b) in full.table.p.iter().flatten().zip(fixed.p.iter().flatten()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let ok = worst <= 1e-5 && t.elapsed().as_secs_f64() < 120.0;
    r.verdict(3, ok, t, format!("full-state marginals vs fixed point, n in 4..=6, degrees (3,9): max diff {worst:.2e} (<= 1e-5)"));
}

fn max_relation_gap(sys: &TwoDegreeSystem, relation: impl Fn(f64) -> f64) -> f64 {
    let traj = continuum::integrate_pure_ldf(sys, 40.0, DEFAULT_STEP).unwrap();
    traj.y1.iter().zip(&traj.y2).map(|(y1, y2)| (relation(*y1) - y2).abs()).fold(0.0, f64::max)
}

fn c4(r: &mut Report) {
    let t = Instant::now();
    let sys = game_system(0.25);
    let finite = max_relation_gap(&sys, |y1| continuum::exact_ldf_relation_finite(y1, sys.k1, sys.k2, sys.peer_count()));
    let limit_sys = TwoDegreeSystem::new(25, 55, 0.85, 0.25, 1_000_000_000).unwrap();
    let limit = max_relation_gap(&limit_sys, |y1| continuum::exact_ldf_relation(y1, sys.r()));
    let ok = finite <= 1e-6 && limit <= 1e-6 && t.elapsed().as_secs_f64() < 1.0;
    r.verdict(
        4,
        ok,
        t,
        format!("LDF first integral along trajectory: finite-M form {finite:.2e} at M=1000, large-M form {limit:.2e} at M=1e9 (<= 1e-6)"),
    );
    let raw = max_relation_gap(&sys, |y1| continuum::exact_ldf_relation(y1, sys.r()));
    info(format!("large-M form against the M=1000 trajectory deviates by {raw:.2e}"));
}

fn c5(r: &mut Report) {
    let t = Instant::now();
    let sys = game_system(0.25);
    let p1 = sys.p1_boundary;
    let traj = continuum::integrate_pure_ldf(&sys, 400.0, DEFAULT_STEP).unwrap();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    let mut published = Vec::new();
    for eps1 in [0.05, 0.1, 0.2] {
        let n1 = continuum::ldf_buffer_requirement(&sys, eps1, p1).unwrap().n1;
        let x = continuum::first_crossing(&traj, 1.0 - eps1).expect("trajectory reaches the level");
        let rel = (n1 - x).abs() / x;
        worst = worst.max(rel);
        parts.push(format!("ε1={eps1}: n1 {n1:.3} vs ODE {x:.3} ({:.2}%)", 100.0 * rel));
        let np = continuum::ldf_buffer_length_published(&sys, eps1, p1).unwrap();
        published.push(format!("ε1={eps1}: {np:.3} ({:.2}%)", 100.0 * (np - x).abs() / x));
    }
    let ok = worst <= 0.02 && t.elapsed().as_secs_f64() < 5.0;
    r.verdict(5, ok, t, format!("buffer-size formula vs ODE crossing: {}", parts.join(", ")));
    info(format!("formula with the published constants: {}", published.join(", ")));
}

/// Global continuity of mixed and pure LDF and the weak-over-strong
/// crossover under mixed, from the mean-field recurrence.
fn mean_field_mixed(sigma: f64) -> Result<(f64, f64, Option<usize>), String> {
    let opts = SolverOptions::default();
    let mixed = solve_fixed_point(&game_config(sigma, Strategy::Edf, Strategy::Ldf), &opts).map_err(|e| format!("mixed: {e}"))?;
    let ldf = solve_fixed_point(&game_config(sigma, Strategy::Ldf, Strategy::Ldf), &opts).map_err(|e| format!("pure LDF: {e}"))?;
    let cross = mixed.p[0].iter().zip(&mixed.p[1]).position(|(w, s)| w > s).map(|i| i + 1);
    Ok((mixed.continuity(), ldf.continuity(), cross))
}

fn continuum_mixed(sigma: f64) -> Result<(f64, f64, Option<f64>), String> {
    let sys = game_system(sigma);
    let mixed = continuum::integrate_mixed(&sys, 40.0, DEFAULT_STEP, 1e-9).map_err(|e| format!("mixed: {e}"))?;
    let ldf = continuum::integrate_pure_ldf(&sys, 40.0, DEFAULT_STEP).map_err(|e| format!("pure LDF: {e}"))?;
    Ok((mixed.trajectory.last().2, ldf.last().2, mixed.trajectory.crossover()))
}

fn c6(r: &mut Report) {
    let t = Instant::now();
    let describe = |name: &str, res: Result<(f64, f64, Option<String>), String>| -> (bool, String) {
        match res {
            Ok((mixed, ldf, cross)) => {
                let ok = mixed > ldf && cross.is_some();
                (ok, format!("{name}: mixed {mixed:.4} vs LDF {ldf:.4}, crossover {}", cross.unwrap_or("none".into())))
            }
            Err(e) => (false, format!("{name}: {e}")),
        }
    };
    let mf = |s| mean_field_mixed(s).map(|(a, b, c)| (a, b, c.map(|i| format!("index {i}"))));
    let ct = |s| continuum_mixed(s).map(|(a, b, c)| (a, b, c.map(|x| format!("x={x:.2}"))));
    let (ok_mf, d_mf) = describe("mean field", mf(0.25));
    let (ok_ct, d_ct) = describe("continuum", ct(0.25));
    let ok = ok_mf && ok_ct && t.elapsed().as_secs_f64() < 10.0;
    r.verdict(6, ok, t, format!("mixed beats LDF and weak overtakes strong at ς=0.25; {d_mf}; {d_ct}"));
    info(format!("at ς=0.024: {}; {}", describe("mean field", mf(0.024)).1, describe("continuum", ct(0.024)).1));
}

fn nash_check(sigma: f64, backend: Backend) -> (bool, String) {
    let sys = game_system(sigma);
    let table = match build_payoff_table(&sys, 40, backend) {
        Ok(t) => t,
        Err(e) => return (false, format!("{backend:?}: {e}")),
    };
    let eq = match nash_equilibria(&table, DEFAULT_NASH_TOL) {
        Ok(e) => e,
        Err(e) => return (false, format!("{backend:?}: {e}")),
    };
    let (el, le) = ([Strategy::Edf, Strategy::Ldf], [Strategy::Ldf, Strategy::Edf]);
    let best = table.global_optimum();
    let ok = eq.contains(&el) && eq.contains(&le) && best == Some(el);
    let fmt = |p: &[Strategy; 2]| format!("({},{})", p[0], p[1]);
    (
        ok,
        format!(
            "{backend:?}: equilibria [{}], global optimum {}",
            eq.iter().map(fmt).collect::<Vec<_>>().join(" "),
            best.as_ref().map_or("none".into(), fmt)
        ),
    )
}

fn c7(r: &mut Report) {
    let t = Instant::now();
    let (ok_mf, d_mf) = nash_check(0.25, Backend::MeanField);
    let (ok_ct, d_ct) = nash_check(0.25, Backend::Continuum);
    let ok = (ok_mf || ok_ct) && t.elapsed().as_secs_f64() < 10.0;
    r.verdict(7, ok, t, format!("Nash at n=40, ς=0.25, either backend; {d_mf}; {d_ct}"));
    info(format!("mean field at ς=0.02: {}", nash_check(0.02, Backend::MeanField).1));
    info(format!("continuum at ς=0.024: {}", nash_check(0.024, Backend::Continuum).1));
}

const RULES: [AssignmentRule; 3] = [
    AssignmentRule::PureLdf,
    AssignmentRule::PureEdf,
    AssignmentRule::Mixed { threshold_quantile: 0.2 },
];
const SHIFTINGS: [Shifting; 2] = [Shifting::Deterministic, Shifting::Exponential];

fn ws_config(shifting: Shifting, rule: AssignmentRule) -> SimConfig {
    let graph = generate_ws(2000, 8, 0.2, 3).unwrap();
    SimConfig { shifting, ..SimConfig::new(graph, 40, 0.25, rule, 0) }
}

/// Stochastic campaigns, `[shifting][rule]` in `SHIFTINGS` × `RULES` order.
struct Campaigns {
    seeds: Vec<u64>,
    runs: Vec<Vec<Replicated>>,
}

impl Campaigns {
    fn nodes(&self, m: &swarmlab::stochastic_sim::SimMetrics, label: &str) -> usize {
        if label == "global" {
            return m.served_fraction.len();
        }
        m.per_degree
            .iter()
            .chain(&m.per_strategy)
            .find(|g| g.degree.map_or_else(|| g.strategy.unwrap().to_string(), |k| format!("degree {k}")) == label)
            .map_or(0, |g| g.nodes)
    }
}

fn run_campaigns() -> Campaigns {
    let seeds: Vec<u64> = (0..30).collect();
    let runs = SHIFTINGS
        .iter()
        .map(|&s| RULES.iter().map(|&rule| run_replications(&ws_config(s, rule), &seeds).unwrap()).collect())
        .collect();
    Campaigns { seeds, runs }
}

/// Indices where a curve drops by more than three standard errors.
fn drops(mean: &[f64], se: &[f64]) -> Vec<usize> {
    (1..mean.len()).filter(|&i| !geq_within_3se((mean[i], se[i]), (mean[i - 1], se[i - 1]))).map(|i| i + 1).collect()
}

fn c8(r: &mut Report, c: &Campaigns, t: Instant) {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut details = Vec::new();
    for (s, shifting) in SHIFTINGS.iter().enumerate() {
        let cont = |i: usize| (c.runs[s][i].mean.continuity, c.runs[s][i].stderr.continuity);
        let (ldf, edf, mixed) = (cont(0), cont(1), cont(2));
        let order = geq_within_3se(mixed, ldf) && geq_within_3se(ldf, edf);
        let mut violations = 0;
        for (rep, rule) in c.runs[s].iter().zip(RULES) {
            let mut check = |label: String, mean: &[f64], se: &[f64]| {
                for i in drops(mean, se) {
                    violations += 1;
                    details.push(format!(
                        "{} {} {label} ({} nodes): index {} {:.6}±{:.6} -> {i} {:.6}±{:.6}",
                        shifting.as_str(),
                        rule.label(),
                        c.nodes(&rep.mean, &label),
                        i - 1,
                        mean[i - 2],
                        se[i - 2],
                        mean[i - 1],
                        se[i - 1]
                    ));
                }
            };
            check("global".into(), &rep.mean.global, &rep.stderr.global);
            for (m, e) in rep.mean.per_degree.iter().chain(&rep.mean.per_strategy).zip(rep.stderr.per_degree.iter().chain(&rep.stderr.per_strategy)) {
                let label = m.degree.map_or_else(|| m.strategy.unwrap().to_string(), |k| format!("degree {k}"));
                check(label, &m.prob, &e.prob);
            }
        }
        ok &= order && violations == 0;
        parts.push(format!(
            "{}: mixed {:.4}±{:.4}, LDF {:.4}±{:.4}, EDF {:.4}±{:.4}, ordering {}, monotonicity violations {violations}",
            shifting.as_str(),
            mixed.0,
            mixed.1,
            ldf.0,
            ldf.1,
            edf.0,
            edf.1,
            if order { "holds" } else { "violated" }
        ));
    }
    ok &= t.elapsed().as_secs_f64() < 900.0;
    r.verdict(8, ok, t, format!("WS M=2000, n=40, ς=0.25, {} seeds; {}", c.seeds.len(), parts.join("; ")));
    for d in &details {
        info(format!("drop: {d}"));
    }
}

fn c9(r: &mut Report, c: &Campaigns, t: Instant) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (s, shifting) in SHIFTINGS.iter().enumerate() {
        let mixed = &c.runs[s][2].mean;
        let curve = |st: Strategy| &mixed.per_strategy.iter().find(|g| g.strategy == Some(st)).unwrap().prob;
        let (weak, strong) = (curve(Strategy::Edf), curve(Strategy::Ldf));
        let cross = weak.iter().zip(strong).position(|(w, s)| w > s).map(|i| i + 1);
        ok &= cross.is_some_and(|i| i < 40);
        parts.push(format!("{}: weak above strong from index {}", shifting.as_str(), cross.map_or("never".into(), |i| i.to_string())));
    }
    r.verdict(9, ok, t, format!("mixed-assignment crossover before index 40; {}", parts.join(", ")));
}

fn c10(r: &mut Report) {
    let t = Instant::now();
    let mut instances = 0;
    let mut bound_failures = Vec::new();
    let mut implication_failures = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for m in 2..=4u64 {
        for rows in compositions(m) {
            for cols in enumerate_column_sums(m, 2, DEFAULT_ENUMERATION_BUDGET).unwrap() {
                let count = count_contingency_bruteforce(&rows, &cols, DEFAULT_ENUMERATION_BUDGET).unwrap();
                if count == 0 {
                    continue;
                }
                let ln_chi = chi(&rows, &cols, &ChiOptions::default()).unwrap().ln_chi;
                let margin = ln_chi - (count as f64).ln();
                worst_margin = worst_margin.min(margin);
                if margin < 0.0 {
                    bound_failures.push(format!("R={rows:?} C={cols:?}: {margin:.2e}"));
                }
            }
            for a0 in [0.5, 1.0, 2.0] {
                let inst = ReductionInstance::new(m, 2, rows.clone(), a0).unwrap();
                let rep = check_reduction_conditions(&inst, DEFAULT_ENUMERATION_BUDGET).unwrap();
                instances += 1;
                if rep.sufficient_holds && !rep.necessary_holds {
                    implication_failures.push(format!("R={rows:?} a0={a0}"));
                }
            }
        }
    }
    let ok = bound_failures.is_empty() && implication_failures.is_empty() && t.elapsed().as_secs_f64() < 60.0;
    r.verdict(
        10,
        ok,
        t,
        format!(
            "{instances} instances (M<=4, n=2, a0 in 0.5/1/2): min ln χ - ln # = {worst_margin:.3e}, bound failures {}, sufficient-without-necessary {}",
            bound_failures.len(),
            implication_failures.len()
        ),
    );
    for f in bound_failures.iter().chain(&implication_failures) {
        info(f);
    }
}

/// Ordered row-sum vectors with positive parts adding up to `m`.
fn compositions(m: u64) -> Vec<Vec<u64>> {
    if m == 0 {
        return vec![vec![]];
    }
    (1..=m)
        .flat_map(|first| {
            compositions(m - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn c11(r: &mut Report) {
    let t = Instant::now();
    let sys = game_system(0.25);
    let ldf = continuum::stability_jacobian(&sys, OdeStrategy::PureLdf, (1.0, 1.0)).unwrap();
    let ldf_ok = ldf.eigenvalues.iter().all(|&(re, im)| re.abs() <= 1e-9 && im.abs() <= 1e-9);
    let eps1 = 0.05;
    let mixed = continuum::stability_jacobian(&sys, OdeStrategy::Mixed { eps1 }, (1.0, 1.0)).unwrap();
    let y0 = sys.p1_boundary - eps1;
    let expect = -sys.k1 * sys.sigma * (1.0 - y0);
    let mut re: Vec<f64> = mixed.eigenvalues.iter().map(|e| e.0).collect();
    re.sort_by(f64::total_cmp);
    let mixed_ok = (re[0] - expect).abs() <= 1e-9
        && re[1].abs() <= 1e-9
        && mixed.eigenvalues.iter().all(|e| e.1.abs() <= 1e-9);
    let ok = ldf_ok && mixed_ok && t.elapsed().as_secs_f64() < 1.0;
    r.verdict(
        11,
        ok,
        t,
        format!(
            "Jacobian at (1,1): LDF eigenvalues {:?}; mixed (ε1={eps1}) real parts {re:?}, expected {{0, {expect:.9}}}",
            ldf.eigenvalues
        ),
    );
}

const SOURCE_UPLOADS: [f64; 5] = [2.5, 3.5, 6.5, 12.5, 24.5];
const DEFAULT_SOURCE: usize = 3;
const SCHEDULINGS: [Scheduling; 3] = [Scheduling::PureEdf, Scheduling::PureLdf, Scheduling::Mixed { ldf_peer_count: 20 }];

fn fullstack_config(source_upload: f64, scheduling: Scheduling) -> FullStackConfig {
    FullStackConfig { source_upload, scheduling, ..FullStackConfig::default() }
}

/// Full-stack campaigns, `[source upload][scheduling]`.
fn run_sweep(seeds: &[u64]) -> Vec<Vec<FullStackReplicated>> {
    SOURCE_UPLOADS
        .iter()
        .map(|&up| SCHEDULINGS.iter().map(|&s| run_fullstack_replications(&fullstack_config(up, s), seeds).unwrap()).collect())
        .collect()
}

fn c12(r: &mut Report, sweep: &[Vec<FullStackReplicated>], seeds: usize, t: Instant) {
    let at = &sweep[DEFAULT_SOURCE];
    let (edf, ldf, mixed) = (&at[0], &at[1], &at[2]);
    let continuity_ok = mixed.continuity.mean > edf.continuity.mean && mixed.continuity.mean > ldf.continuity.mean;
    let requests_ok = mixed.requests_per_s.mean < edf.requests_per_s.mean;
    let mut monotone_ok = true;
    let mut curves = Vec::new();
    for (j, s) in SCHEDULINGS.iter().enumerate() {
        let c: Vec<(f64, f64)> = sweep.iter().map(|row| (row[j].continuity.mean, row[j].continuity.stderr)).collect();
        monotone_ok &= c.windows(2).all(|w| geq_within_3se(w[1], w[0]));
        curves.push(format!("{} {}", s.label(), c.iter().map(|v| format!("{:.3}", v.0)).collect::<Vec<_>>().join("→")));
    }
    let ok = continuity_ok && requests_ok && monotone_ok && t.elapsed().as_secs_f64() < 1200.0;
    let est = |e: swarmlab::fullstack_sim::Estimate| format!("{:.4}±{:.4}", e.mean, e.stderr);
    r.verdict(
        12,
        ok,
        t,
        format!(
            "100 peers, {seeds} seeds: continuity mixed {} vs EDF {} vs LDF {} (mixed highest: {}); requests/s mixed {} vs EDF {} (mixed lower: {}); nondecreasing in source upload: {}",
            est(mixed.continuity),
            est(edf.continuity),
            est(ldf.continuity),
            continuity_ok,
            est(mixed.requests_per_s),
            est(edf.requests_per_s),
            requests_ok,
            monotone_ok
        ),
    );
    info(format!("continuity over source upload {SOURCE_UPLOADS:?} Mbit/s: {}", curves.join("; ")));
    for (s, rep) in SCHEDULINGS.iter().zip(at) {
        let groups: Vec<String> = rep
            .groups
            .iter()
            .map(|g| format!("{} {:.3} @ {:.1} req/s", g.group, g.continuity.mean, g.requests_per_s.mean))
            .collect();
        info(format!("{}: {}", s.label(), groups.join(", ")));
    }
}

fn c13(r: &mut Report, campaigns: Option<&Campaigns>, sweep: Option<&[Vec<FullStackReplicated>]>) {
    let t = Instant::now();
    let mut checked = 0;
    let mut mismatches = Vec::new();
    let subset: Vec<u64> = vec![0, 1];
    for &s in &SHIFTINGS {
        for rule in RULES {
            let cfg = ws_config(s, rule);
            let a = run_replications(&cfg, &subset).unwrap();
            let b = run_replications(&cfg, &subset).unwrap();
            checked += 1;
            if a.to_csv(&rule, s) != b.to_csv(&rule, s) || serde_json::to_string(&a).unwrap() != serde_json::to_string(&b).unwrap() {
                mismatches.push(format!("stochastic {} {}", s.as_str(), rule.label()));
            }
        }
    }
    if let Some(c) = campaigns {
        let rule = RULES[2];
        let again = run_replications(&ws_config(Shifting::Deterministic, rule), &c.seeds).unwrap();
        checked += 1;
        if again.to_csv(&rule, Shifting::Deterministic) != c.runs[0][2].to_csv(&rule, Shifting::Deterministic) {
            mismatches.push("stochastic deterministic mixed, all seeds".into());
        }
    }
    match sweep {
        Some(sweep) => {
            for (row, &up) in sweep.iter().zip(&SOURCE_UPLOADS) {
                for (rep, &s) in row.iter().zip(&SCHEDULINGS) {
                    for (run, &seed) in rep.runs.iter().zip(&rep.seeds).take(subset.len()) {
                        let again = run_fullstack(&FullStackConfig { seed, ..fullstack_config(up, s) }).unwrap();
                        checked += 1;
                        if again.to_csv() != run.to_csv() || serde_json::to_string(&again).unwrap() != serde_json::to_string(run).unwrap() {
                            mismatches.push(format!("fullstack {} at {up} Mbit/s, seed {seed}", s.label()));
                        }
                    }
                }
            }
        }
        None => {
            for s in SCHEDULINGS {
                let cfg = fullstack_config(SOURCE_UPLOADS[DEFAULT_SOURCE], s);
                let a = run_fullstack_replications(&cfg, &subset).unwrap();
                let b = run_fullstack_replications(&cfg, &subset).unwrap();
                checked += 1;
                if serde_json::to_string(&a).unwrap() != serde_json::to_string(&b).unwrap() {
                    mismatches.push(format!("fullstack {}", s.label()));
                }
            }
        }
    }
    r.verdict(
        13,
        mismatches.is_empty(),
        t,
        format!("{checked} re-runs with identical seeds compared byte for byte, {} mismatches", mismatches.len()),
    );
    for m in &mismatches {
        info(m);
    }
}

fn main() {
    let only = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut r = Report { only, failed: Vec::new() };
    println!("acceptance criteria");
    let simple: [(usize, fn(&mut Report)); 8] = [(1, c1), (2, c2), (3, c3), (4, c4), (5, c5), (6, c6), (7, c7), (10, c10)];
    for (n, f) in &simple[..7] {
        if r.wants(*n) {
            f(&mut r);
        }
    }

    let campaigns = (r.wants(8) || r.wants(9)).then(|| {
        let t = Instant::now();
        (run_campaigns(), t)
    });
    if let Some((c, t)) = &campaigns {
        if r.wants(8) {
            c8(&mut r, c, *t);
        }
        if r.wants(9) {
            c9(&mut r, c, *t);
        }
    }
    if r.wants(10) {
        simple[7].1(&mut r);
    }
    if r.wants(11) {
        c11(&mut r);
    }
    let fullstack_seeds: Vec<u64> = (0..10).collect();
    let sweep = r.wants(12).then(|| {
        let t = Instant::now();
        let s = run_sweep(&fullstack_seeds);
        c12(&mut r, &s, fullstack_seeds.len(), t);
        s
    });
    if r.wants(13) {
        c13(&mut r, campaigns.as_ref().map(|(c, _)| c), sweep.as_deref());
    }

    if r.failed.is_empty() {
        println!("all selected criteria pass");
    } else {
        println!("failing criteria: {:?}", r.failed);
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
