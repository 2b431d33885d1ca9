//! Config-driven experiment runner.
//!
//! An [`ExperimentSpec`] is one JSON document with a `kind` discriminator,
//! kind-specific `parameters`, a list of `seeds` and an optional
//! `output_dir`. Running it writes CSV/JSON files plus a `manifest.json`
//! that can itself be fed back as a spec. Every CSV row starts with a
//! `provenance` column holding the seed, the `;`-joined seeds of a merged
//! row, or `analytic`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::continuum::{self, TwoDegreeSystem};
use crate::degree_graph::{generate_ba, generate_er, generate_ws, SwarmGraph};
use crate::fullstack_sim::{self, FullStackConfig, FullStackReplicated, Scheduling};
use crate::game::{self, Backend};
use crate::mean_field::{self, DegreeClass, MeanFieldConfig, SolverOptions, Strategy};
use crate::state_space::{self, ReductionInstance};
use crate::stochastic_sim::{self, assign_strategies, AssignmentRule, Replicated, Shifting, SimConfig};

/// Environment variable naming the directory relative output dirs resolve against.
pub const OUTPUT_ROOT_ENV: &str = "SWARMLAB_OUTPUT_ROOT";

pub const KINDS: [&str; 7] = ["mean_field", "continuum", "stochastic", "game", "state_space", "fullstack", "figure_recipe"];

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid experiment: {0}")]
    Validation(String),
    /// A solver or simulation failed after outputs may have been written.
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

fn validation(msg: impl Into<String>) -> RunError {
    RunError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: String,
    #[serde(default)]
    pub parameters: Value,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for seed fan-out; defaults to available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| validation(format!("cannot parse experiment: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path)
            .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Parses and checks the parameters against the target module.
    pub fn task(&self) -> Result<Task, RunError> {
        fn parse<T: for<'de> Deserialize<'de>>(kind: &str, v: &Value) -> Result<T, RunError> {
            serde_json::from_value(v.clone()).map_err(|e| validation(format!("parameters for {kind}: {e}")))
        }
        let task = match self.kind.as_str() {
            "mean_field" => Task::MeanField(parse(&self.kind, &self.parameters)?),
            "continuum" => Task::Continuum(parse(&self.kind, &self.parameters)?),
            "stochastic" => Task::Stochastic(parse(&self.kind, &self.parameters)?),
            "game" => Task::Game(parse(&self.kind, &self.parameters)?),
            "state_space" => Task::StateSpace(parse(&self.kind, &self.parameters)?),
            "fullstack" => Task::Fullstack(parse(&self.kind, &self.parameters)?),
            "figure_recipe" => {
                let p: RecipeParams = parse(&self.kind, &self.parameters)?;
                let recipe = Recipe::by_name(&p.name)
                    .ok_or_else(|| validation(format!("unknown recipe {:?}; see list-recipes", p.name)))?;
                Task::Recipe(recipe)
            }
            other => return Err(validation(format!("kind: unknown kind {other:?}, expected one of {KINDS:?}"))),
        };
        if task.is_stochastic() && self.seeds.is_empty() {
            return Err(validation(format!("seeds: must be non-empty for kind {}", self.kind)));
        }
        if self.workers == Some(0) {
            return Err(validation("workers: must be at least 1"));
        }
        task.validate()?;
        Ok(task)
    }

    /// `output_dir` if absolute, else joined onto `root` (or the working
    /// directory); defaults to a directory named after the kind.
    pub fn resolve_output_dir(&self, root: Option<&Path>) -> PathBuf {
        let dir = self.output_dir.clone().unwrap_or_else(|| PathBuf::from(&self.kind));
        match root {
            Some(r) if dir.is_relative() => r.join(dir),
            _ => dir,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldParams {
    pub config: MeanFieldConfig,
    #[serde(default)]
    pub solver: Option<SolverOptions>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoDegreeParams {
    pub k1: u32,
    pub k2: u32,
    pub pi1: f64,
    pub sigma: f64,
    pub peer_count: u64,
}

impl TwoDegreeParams {
    pub fn system(&self) -> crate::Result<TwoDegreeSystem> {
        TwoDegreeSystem::new(self.k1, self.k2, self.pi1, self.sigma, self.peer_count)
    }
}

fn default_step() -> f64 {
    continuum::DEFAULT_STEP
}

fn default_shoot_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumParams {
    pub system: TwoDegreeParams,
    pub buffer_len: f64,
    /// (weak, strong) strategies.
    pub profile: [Strategy; 2],
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_shoot_tol")]
    pub shoot_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Er { peers: usize, mean_degree: f64, #[serde(default)] seed: u64 },
    Ba { peers: usize, m_attach: usize, #[serde(default)] seed: u64 },
    Ws { peers: usize, ring_degree: usize, rewire_prob: f64, #[serde(default)] seed: u64 },
}

impl GraphSpec {
    pub fn build(&self) -> crate::Result<SwarmGraph> {
        match *self {
            GraphSpec::Er { peers, mean_degree, seed } => generate_er(peers, mean_degree, seed),
            GraphSpec::Ba { peers, m_attach, seed } => generate_ba(peers, m_attach, seed),
            GraphSpec::Ws { peers, ring_degree, rewire_prob, seed } => generate_ws(peers, ring_degree, rewire_prob, seed),
        }
    }
}

fn default_assignment() -> AssignmentRule {
    AssignmentRule::mixed_default()
}

fn default_shifting() -> Shifting {
    Shifting::Deterministic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticParams {
    pub graph: GraphSpec,
    pub buffer_len: usize,
    pub contact_scale: f64,
    #[serde(default = "default_assignment")]
    pub assignment: AssignmentRule,
    #[serde(default = "default_shifting")]
    pub shifting: Shifting,
    #[serde(default)]
    pub breakage_prob: Option<f64>,
    #[serde(default)]
    pub horizon: Option<u64>,
    #[serde(default)]
    pub burn_in: Option<u64>,
}

impl StochasticParams {
    pub fn sim_config(&self) -> crate::Result<SimConfig> {
        let mut cfg = SimConfig::new(self.graph.build()?, self.buffer_len, self.contact_scale, self.assignment, 0);
        cfg.shifting = self.shifting;
        if let Some(e) = self.breakage_prob {
            cfg.breakage_prob = e;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
            cfg.burn_in = h / 2;
        }
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_backend() -> Backend {
    Backend::MeanField
}

fn default_nash_tol() -> f64 {
    game::DEFAULT_NASH_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    pub system: TwoDegreeParams,
    pub buffer_len: usize,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default = "default_nash_tol")]
    pub nash_tol: f64,
}

fn default_budget() -> u64 {
    state_space::DEFAULT_ENUMERATION_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpaceParams {
    pub instance: ReductionInstance,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeParams {
    pub name: String,
}

/// Named campaigns reproducing the standard figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    WsBufferProbabilities,
    WsBufferProbabilitiesExponential,
    PayoffTable,
    FullstackSchedulers,
}

impl Recipe {
    pub const ALL: [Recipe; 4] = [
        Recipe::WsBufferProbabilities,
        Recipe::WsBufferProbabilitiesExponential,
        Recipe::PayoffTable,
        Recipe::FullstackSchedulers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::WsBufferProbabilities => "ws_buffer_probabilities",
            Recipe::WsBufferProbabilitiesExponential => "ws_buffer_probabilities_exponential",
            Recipe::PayoffTable => "payoff_table",
            Recipe::FullstackSchedulers => "fullstack_schedulers",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Recipe::WsBufferProbabilities => {
                "stochastic buffer probabilities on WS (M=5000, ring 8, rewire 0.2, n=40, ς=0.25), deterministic shifting; pure_ldf.csv, pure_edf.csv, mixed.csv"
            }
            Recipe::WsBufferProbabilitiesExponential => {
                "same on WS with M=2000 and exponential shifting; pure_ldf.csv, pure_edf.csv, mixed.csv"
            }
            Recipe::PayoffTable => "payoff table, n=40, k1=25, k2=55, π1=0.85, M=1000, ς=0.25, mean-field backend; payoff_table.csv, game_report.json",
            Recipe::FullstackSchedulers => "full-stack default swarm under pure EDF, pure LDF and mixed (20 LDF peers); one CSV each plus summary.csv",
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }

    fn is_stochastic(self) -> bool {
        !matches!(self, Recipe::PayoffTable)
    }

    fn ws(peers: usize, shifting: Shifting, assignment: AssignmentRule) -> StochasticParams {
        StochasticParams {
            graph: GraphSpec::Ws { peers, ring_degree: 8, rewire_prob: 0.2, seed: 0 },
            buffer_len: 40,
            contact_scale: 0.25,
            assignment,
            shifting,
            breakage_prob: None,
            horizon: None,
            burn_in: None,
        }
    }
}

/// Rules swept by the stochastic recipes, in output order.
const RULES: [AssignmentRule; 3] = [
    AssignmentRule::PureLdf,
    AssignmentRule::PureEdf,
    AssignmentRule::Mixed { threshold_quantile: stochastic_sim::DEFAULT_THRESHOLD_QUANTILE },
];

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    MeanField(MeanFieldParams),
    Continuum(ContinuumParams),
    Stochastic(StochasticParams),
    Game(GameParams),
    StateSpace(StateSpaceParams),
    Fullstack(FullStackConfig),
    Recipe(Recipe),
}

impl Task {
    pub fn is_stochastic(&self) -> bool {
        match self {
            Task::Stochastic(_) | Task::Fullstack(_) => true,
            Task::Recipe(r) => r.is_stochastic(),
            _ => false,
        }
    }

    fn validate(&self) -> Result<(), RunError> {
        let v = |r: crate::Result<()>| r.map_err(|e| validation(e.to_string()));
        match self {
            Task::MeanField(p) => v(p.config.validate()),
            Task::Continuum(p) => {
                v(p.system.system().map(|_| ()))?;
                if !(p.buffer_len > 1.0 && p.step > 0.0 && p.shoot_tol > 0.0) {
                    return Err(validation("continuum: need buffer_len > 1, step > 0, shoot_tol > 0"));
                }
                Ok(())
            }
            Task::Stochastic(p) => v(p.sim_config().map(|_| ())),
            Task::Game(p) => {
                v(p.system.system().map(|_| ()))?;
                if p.buffer_len < 2 || !(p.nash_tol >= 0.0) {
                    return Err(validation("game: need buffer_len >= 2 and nash_tol >= 0"));
                }
                Ok(())
            }
            Task::StateSpace(p) => v(p.instance.validate()),
            Task::Fullstack(c) => v(c.validate()),
            Task::Recipe(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub parameters: Value,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
    pub version: String,
    pub wall_time_s: f64,
    pub status: String,
    pub error: Option<String>,
    pub outputs: Vec<String>,
}

/// Collects written files so a failure can still report them.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value).expect("serializable report");
        self.write(name, &(text + "\n"))
    }
}

/// Prefixes every row of `csv` with a provenance column.
pub fn tag_csv(csv: &str, tag: &str) -> String {
    let mut lines = csv.lines();
    let mut out = String::new();
    if let Some(header) = lines.next() {
        let _ = writeln!(out, "provenance,{header}");
    }
    for line in lines {
        let _ = writeln!(out, "{tag},{line}");
    }
    out
}

fn seeds_tag(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

/// Runs the experiment, writing into the resolved output directory.
///
/// On a solver failure the files written so far are kept, a `FAILED`
/// marker holds the message, and the manifest records status `failed`.
pub fn run_experiment(spec: &ExperimentSpec, root: Option<&Path>) -> Result<Manifest, RunError> {
    let task = spec.task()?;
    let dir = spec.resolve_output_dir(root);
    fs::create_dir_all(&dir)?;
    let marker = dir.join("FAILED");
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let mut out = Outputs { dir: dir.clone(), files: Vec::new() };
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.unwrap_or(0))
        .build()
        .map_err(|e| validation(format!("workers: {e}")))?;
    let result = pool.install(|| execute(&task, &spec.seeds, &mut out));
    let mut manifest = Manifest {
        kind: spec.kind.clone(),
        parameters: spec.parameters.clone(),
        seeds: spec.seeds.clone(),
        output_dir: dir.clone(),
        workers: spec.workers,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        status: "ok".into(),
        error: None,
        outputs: out.files.clone(),
    };
    if let Err(e) = &result {
        manifest.status = "failed".into();
        manifest.error = Some(e.to_string());
        fs::write(&marker, format!("{e}\n"))?;
    }
    let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
    fs::write(dir.join("manifest.json"), text + "\n")?;
    result.map(|()| manifest)
}

fn solver(e: crate::Error) -> RunError {
    RunError::Solver(e.to_string())
}

fn execute(task: &Task, seeds: &[u64], out: &mut Outputs) -> Result<(), RunError> {
    match task {
        Task::MeanField(p) => {
            let opts = p.solver.unwrap_or_default();
            let table = mean_field::solve_fixed_point(&p.config, &opts).map_err(solver)?;
            out.write("buffer_table.csv", &tag_csv(&table.to_csv(), "analytic"))?;
            let latency = mean_field::startup_latency(&p.config, &table);
            out.json("summary.json", &json!({ "continuity": table.continuity(), "startup_latency": latency }))
        }
        Task::Continuum(p) => {
            let sys = p.system.system().map_err(solver)?;
            let sol = continuum::integrate_profile(&sys, p.profile, p.buffer_len, p.step, p.shoot_tol).map_err(solver)?;
            out.write("trajectory.csv", &tag_csv(&sol.trajectory.to_csv(), "analytic"))?;
            let (y1, y2, y) = sol.trajectory.last();
            out.json(
                "summary.json",
                &json!({
                    "profile": p.profile,
                    "eps": sol.eps,
                    "shooting_iterations": sol.shooting_iterations,
                    "final": { "y1": y1, "y2": y2, "y": y },
                    "crossover": sol.trajectory.crossover(),
                }),
            )
        }
        Task::Stochastic(p) => {
            let cfg = p.sim_config().map_err(solver)?;
            stochastic_campaign(&cfg, seeds, "buffer_probabilities.csv", out).map(|_| ())
        }
        Task::Game(p) => {
            let sys = p.system.system().map_err(solver)?;
            game_outputs(&sys, p.buffer_len, p.backend, p.nash_tol, out)
        }
        Task::StateSpace(p) => {
            let report = state_space::check_reduction_conditions(&p.instance, p.budget).map_err(solver)?;
            let mut csv = String::from("cols,ln_chi\n");
            for c in &report.per_column {
                let cols: Vec<String> = c.cols.iter().map(u64::to_string).collect();
                let _ = writeln!(csv, "{},{:.12e}", cols.join(" "), c.ln_chi);
            }
            out.write("chi_per_column.csv", &tag_csv(&csv, "analytic"))?;
            out.json("reduction_report.json", &report)
        }
        Task::Fullstack(cfg) => {
            let rep = fullstack_sim::run_fullstack_replications(cfg, seeds).map_err(solver)?;
            fullstack_outputs(&rep, "fullstack", out)
        }
        Task::Recipe(r) => run_recipe(*r, seeds, out),
    }
}

fn stochastic_campaign(cfg: &SimConfig, seeds: &[u64], name: &str, out: &mut Outputs) -> Result<Replicated, RunError> {
    let rep = stochastic_sim::run_replications(cfg, seeds).map_err(solver)?;
    out.write(name, &tag_csv(&rep.to_csv(&cfg.assignment, cfg.shifting), &seeds_tag(&rep.seeds)))?;
    let stem = name.trim_end_matches(".csv");
    out.json(&format!("{stem}_summary.json"), &rep.summary(cfg))?;
    Ok(rep)
}

fn game_outputs(sys: &TwoDegreeSystem, n: usize, backend: Backend, tol: f64, out: &mut Outputs) -> Result<(), RunError> {
    let table = game::build_payoff_table(sys, n, backend).map_err(solver)?;
    out.write("payoff_table.csv", &tag_csv(&table.to_csv(), "analytic"))?;
    let report = game::game_report(table, tol);
    out.json("game_report.json", &report)?;
    match report.error {
        Some(e) => Err(RunError::Solver(e)),
        None => Ok(()),
    }
}

fn fullstack_outputs(rep: &FullStackReplicated, stem: &str, out: &mut Outputs) -> Result<(), RunError> {
    let mut csv = String::new();
    for (i, run) in rep.runs.iter().enumerate() {
        let tagged = tag_csv(&run.to_csv(), &run.seed.to_string());
        let mut lines = tagged.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            let _ = writeln!(csv, "{header}");
        }
        for l in lines {
            let _ = writeln!(csv, "{l}");
        }
    }
    out.write(&format!("{stem}.csv"), &csv)?;
    out.json(&format!("{stem}_summary.json"), &json!({
        "seeds": rep.seeds,
        "continuity": rep.continuity,
        "requests_per_s": rep.requests_per_s,
        "in_degree": rep.in_degree,
        "groups": rep.groups,
        "buffer_profile": rep.buffer_profile,
    }))
}

fn run_recipe(recipe: Recipe, seeds: &[u64], out: &mut Outputs) -> Result<(), RunError> {
    match recipe {
        Recipe::WsBufferProbabilities | Recipe::WsBufferProbabilitiesExponential => {
            let (peers, shifting) = if recipe == Recipe::WsBufferProbabilities {
                (5000, Shifting::Deterministic)
            } else {
                (2000, Shifting::Exponential)
            };
            for rule in RULES {
                let cfg = Recipe::ws(peers, shifting, rule).sim_config().map_err(solver)?;
                stochastic_campaign(&cfg, seeds, &format!("{}.csv", rule.label()), out)?;
            }
            Ok(())
        }
        Recipe::PayoffTable => {
            let sys = TwoDegreeSystem::new(25, 55, 0.85, 0.25, 1000).map_err(solver)?;
            game_outputs(&sys, 40, Backend::MeanField, game::DEFAULT_NASH_TOL, out)
        }
        Recipe::FullstackSchedulers => {
            let mut summary = String::from("scheduling,group,continuity,continuity_stderr,requests_per_s,requests_per_s_stderr,in_degree\n");
            for scheduling in [Scheduling::PureEdf, Scheduling::PureLdf, Scheduling::Mixed { ldf_peer_count: 20 }] {
                let cfg = FullStackConfig { scheduling, ..FullStackConfig::default() };
                let rep = fullstack_sim::run_fullstack_replications(&cfg, seeds).map_err(solver)?;
                fullstack_outputs(&rep, scheduling.label(), out)?;
                let mut row = |group: &str, c: fullstack_sim::Estimate, r: fullstack_sim::Estimate, d: f64| {
                    let _ = writeln!(
                        summary,
                        "{},{group},{:.10},{:.10},{:.10},{:.10},{:.6}",
                        scheduling.label(),
                        c.mean,
                        c.stderr,
                        r.mean,
                        r.stderr,
                        d
                    );
                };
                row("global", rep.continuity, rep.requests_per_s, rep.in_degree.mean);
                for g in &rep.groups {
                    row(&g.group, g.continuity, g.requests_per_s, g.in_degree.mean);
                }
            }
            out.write("summary.csv", &tag_csv(&summary, &seeds_tag(&sorted(seeds))))
        }
    }
}

fn sorted(seeds: &[u64]) -> Vec<u64> {
    let mut s = seeds.to_vec();
    s.sort_unstable();
    s
}

/// Mean-field configuration matching a stochastic run: one class per degree
/// present in the graph, with its empirical share and the strategy the
/// assignment rule gives that degree.
pub fn matched_mean_field_config(sim: &SimConfig) -> crate::Result<MeanFieldConfig> {
    let strategies = assign_strategies(&sim.graph, &sim.assignment);
    let m = sim.graph.node_count();
    let mut by_degree: std::collections::BTreeMap<u32, (usize, Strategy)> = Default::default();
    for (v, s) in strategies.into_iter().enumerate() {
        let e = by_degree.entry(sim.graph.degree(v) as u32).or_insert((0, s));
        e.0 += 1;
    }
    let cfg = MeanFieldConfig {
        buffer_len: sim.buffer_len,
        peer_count: m as u64,
        contact_scale: sim.contact_scale,
        classes: by_degree
            .into_iter()
            .map(|(degree, (count, strategy))| DegreeClass { degree, share: count as f64 / m as f64, strategy })
            .collect(),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub degree: u32,
    pub buffer_index: usize,
    pub mean_field: f64,
    pub stochastic: f64,
    pub abs_diff: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub degrees: Vec<u32>,
    pub buffer_len: usize,
    pub seeds: Vec<u64>,
    /// Degree-major, `degrees.len() × buffer_len` rows.
    pub rows: Vec<AgreementRow>,
    pub monotonicity_violations_mean_field: usize,
    /// Decreases larger than 3 combined standard errors.
    pub monotonicity_violations_stochastic: usize,
    pub max_abs_diff: f64,
    pub max_z: f64,
}

impl AgreementReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("degree,buffer_index,mean_field,stochastic,abs_diff,stderr\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.10},{:.10},{:.10},{:.10}",
                r.degree, r.buffer_index, r.mean_field, r.stochastic, r.abs_diff, r.stderr
            );
        }
        s
    }
}

/// Per-index differences between the mean-field fixed point of `mf` and
/// the replicated simulation of `sim`. The two must describe the same
/// swarm: same buffer length, contact scale and peer count, the same degree
/// set, and per-degree strategies equal to the assignment rule's.
pub fn compare_backends(mf: &MeanFieldConfig, sim: &SimConfig, seeds: &[u64]) -> crate::Result<AgreementReport> {
    let mismatch = |what: &str| crate::Error::InvalidParameter(format!("mismatched configurations: {what}"));
    let matched = matched_mean_field_config(sim)?;
    if mf.buffer_len != matched.buffer_len {
        return Err(mismatch("buffer_len"));
    }
    if mf.peer_count != matched.peer_count {
        return Err(mismatch("peer_count vs graph size"));
    }
    if (mf.contact_scale - matched.contact_scale).abs() > 1e-12 {
        return Err(mismatch("contact_scale"));
    }
    let mf_degrees: Vec<u32> = mf.classes.iter().map(|c| c.degree).collect();
    let sim_degrees: Vec<u32> = matched.classes.iter().map(|c| c.degree).collect();
    let mut sorted_mf = mf_degrees.clone();
    sorted_mf.sort_unstable();
    if sorted_mf != sim_degrees {
        return Err(mismatch("degree sets differ"));
    }
    for c in &matched.classes {
        let mine = mf.classes.iter().find(|x| x.degree == c.degree).expect("same degree set");
        if mine.strategy != c.strategy {
            return Err(mismatch(&format!("strategy of degree {}", c.degree)));
        }
    }
    let table = mean_field::solve_fixed_point(mf, &SolverOptions::default())?;
    let rep = stochastic_sim::run_replications(sim, seeds)?;
    let n = mf.buffer_len;
    let mut rows = Vec::new();
    let mut viol_sim = 0;
    let mut viol_mf = 0;
    for &k in &sim_degrees {
        let pm = table.for_degree(k).expect("solved degree");
        let (curve, se) = rep
            .mean
            .per_degree
            .iter()
            .zip(&rep.stderr.per_degree)
            .find(|(c, _)| c.degree == Some(k))
            .expect("simulated degree");
        for i in 0..n {
            rows.push(AgreementRow {
                degree: k,
                buffer_index: i + 1,
                mean_field: pm[i],
                stochastic: curve.prob[i],
                abs_diff: (pm[i] - curve.prob[i]).abs(),
                stderr: se.prob[i],
            });
            if i + 1 < n {
                if pm[i + 1] < pm[i] {
                    viol_mf += 1;
                }
                let tol = 3.0 * se.prob[i].hypot(se.prob[i + 1]);
                if curve.prob[i + 1] < curve.prob[i] - tol {
                    viol_sim += 1;
                }
            }
        }
    }
    let max_abs_diff = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    let max_z = rows
        .iter()
        .map(|r| if r.abs_diff == 0.0 { 0.0 } else { r.abs_diff / r.stderr })
        .fold(0.0, f64::max);
    Ok(AgreementReport {
        degrees: sim_degrees,
        buffer_len: n,
        seeds: rep.seeds,
        rows,
        monotonicity_violations_mean_field: viol_mf,
        monotonicity_violations_stochastic: viol_sim,
        max_abs_diff,
        max_z,
    })
}

/// Runs `compare_backends` on two specs, one `mean_field` and one
/// `stochastic` (either order), writing `agreement.csv` and
/// `agreement.json` under `dir`.
pub fn compare_specs(a: &ExperimentSpec, b: &ExperimentSpec, dir: &Path) -> Result<AgreementReport, RunError> {
    let (mf, st) = match (a.task()?, b.task()?) {
        (Task::MeanField(m), Task::Stochastic(s)) => (m, (s, b)),
        (Task::Stochastic(s), Task::MeanField(m)) => (m, (s, a)),
        _ => return Err(validation("compare needs one mean_field spec and one stochastic spec")),
    };
    let sim = st.0.sim_config().map_err(|e| validation(e.to_string()))?;
    let report = compare_backends(&mf.config, &sim, &st.1.seeds).map_err(|e| match e {
        crate::Error::InvalidParameter(m) => RunError::Validation(m),
        other => RunError::Solver(other.to_string()),
    })?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("agreement.csv"), tag_csv(&report.to_csv(), &seeds_tag(&report.seeds)))?;
    let text = serde_json::to_string_pretty(&report).expect("serializable report");
    fs::write(dir.join("agreement.json"), text + "\n")?;
    Ok(report)
}

/// Column documentation per kind, for the CLI help.
pub const CSV_COLUMNS: &str = "\
mean_field     buffer_table.csv: provenance,degree,buffer_index,p,theta,p_global
continuum      trajectory.csv: provenance,x,y1,y2,y
stochastic     buffer_probabilities.csv: provenance,strategy,shifting,degree_class,buffer_index,probability,stderr
game           payoff_table.csv: provenance,weak_strategy,strong_strategy,u_weak,u_strong,global
state_space    chi_per_column.csv: provenance,cols,ln_chi
fullstack      fullstack.csv: provenance,time,group,continuity,requests_per_s,in_degree
compare        agreement.csv: provenance,degree,buffer_index,mean_field,stochastic,abs_diff,stderr
provenance is a seed, ';'-joined seeds for merged rows, or 'analytic'.";
