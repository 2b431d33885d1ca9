//! Two-player scheduling game between the weak and the strong degree class.
//!
//! Each class picks LDF or EDF; its utility is its playback continuity
//! `p_k(n)` in the stationary solution of the resulting system.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuum::{self, TwoDegreeSystem};
use crate::error::{invalid, Error, Result};
use crate::mean_field::{self, DegreeClass, MeanFieldConfig, SolverOptions, Strategy};

/// Profiles in table order: (weak, strong).
pub const PROFILES: [[Strategy; 2]; 4] = [
    [Strategy::Ldf, Strategy::Ldf],
    [Strategy::Ldf, Strategy::Edf],
    [Strategy::Edf, Strategy::Ldf],
    [Strategy::Edf, Strategy::Edf],
];

pub const DEFAULT_NASH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    MeanField,
    Continuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utilities {
    pub u_weak: f64,
    pub u_strong: f64,
    pub global: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffCell {
    /// (weak, strong).
    pub profile: [Strategy; 2],
    /// `None` when the solver failed for this profile.
    pub utilities: Option<Utilities>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    pub system: TwoDegreeSystem,
    pub buffer_len: usize,
    pub backend: Backend,
    /// One cell per entry of [`PROFILES`], same order.
    pub cells: Vec<PayoffCell>,
}

impl PayoffTable {
    /// Builds a table from explicit utilities, in [`PROFILES`] order.
    pub fn from_utilities(system: TwoDegreeSystem, buffer_len: usize, backend: Backend, u: [Utilities; 4]) -> Self {
        let cells = PROFILES
            .iter()
            .zip(u)
            .map(|(&profile, u)| PayoffCell { profile, utilities: Some(u), error: None })
            .collect();
        Self { system, buffer_len, backend, cells }
    }

    pub fn cell(&self, profile: [Strategy; 2]) -> &PayoffCell {
        self.cells
            .iter()
            .find(|c| c.profile == profile)
            .expect("table holds every profile")
    }

    pub fn utilities(&self, profile: [Strategy; 2]) -> Option<Utilities> {
        self.cell(profile).utilities
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.utilities.is_some())
    }

    /// Profile with the largest global continuity, if the table is complete.
    pub fn global_optimum(&self) -> Option<[Strategy; 2]> {
        if !self.is_complete() {
            return None;
        }
        self.cells
            .iter()
            .max_by(|a, b| {
                let (a, b) = (a.utilities.unwrap().global, b.utilities.unwrap().global);
                a.total_cmp(&b)
            })
            .map(|c| c.profile)
    }

    /// CSV with columns `weak_strategy,strong_strategy,u_weak,u_strong,global`;
    /// utilities of failed cells are left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("weak_strategy,strong_strategy,u_weak,u_strong,global\n");
        for c in &self.cells {
            let _ = write!(s, "{},{},", c.profile[0], c.profile[1]);
            match c.utilities {
                Some(u) => {
                    let _ = writeln!(s, "{:.12},{:.12},{:.12}", u.u_weak, u.u_strong, u.global);
                }
                None => s.push_str(",,\n"),
            }
        }
        s
    }
}

/// Solves all four profiles. A solver failure marks its cell invalid
/// instead of aborting the table.
pub fn build_payoff_table(sys: &TwoDegreeSystem, n: usize, backend: Backend) -> Result<PayoffTable> {
    if n < 2 {
        return Err(invalid("buffer length must be at least 2"));
    }
    let cells = PROFILES
        .par_iter()
        .map(|&profile| {
            let solved = match backend {
                Backend::MeanField => solve_mean_field(sys, n, profile),
                Backend::Continuum => solve_continuum(sys, n, profile),
            };
            match solved {
                Ok(u) => PayoffCell { profile, utilities: Some(u), error: None },
                Err(e) => PayoffCell { profile, utilities: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(PayoffTable { system: *sys, buffer_len: n, backend, cells })
}

fn solve_mean_field(sys: &TwoDegreeSystem, n: usize, profile: [Strategy; 2]) -> Result<Utilities> {
    let cfg = MeanFieldConfig {
        buffer_len: n,
        peer_count: sys.peer_count().round() as u64,
        contact_scale: sys.sigma,
        classes: vec![
            DegreeClass { degree: sys.k1.round() as u32, share: sys.pi1, strategy: profile[0] },
            DegreeClass { degree: sys.k2.round() as u32, share: sys.pi2, strategy: profile[1] },
        ],
    };
    let table = mean_field::solve_classes(&cfg, &SolverOptions::default())?;
    Ok(Utilities {
        u_weak: table.p[0][n - 1],
        u_strong: table.p[1][n - 1],
        global: table.p_global[n - 1],
    })
}

fn solve_continuum(sys: &TwoDegreeSystem, n: usize, profile: [Strategy; 2]) -> Result<Utilities> {
    let sol = continuum::integrate_profile(sys, profile, n as f64, continuum::DEFAULT_STEP, 1e-9)?;
    let (u_weak, u_strong, global) = sol.trajectory.last();
    Ok(Utilities { u_weak, u_strong, global })
}

fn flip(s: Strategy) -> Strategy {
    match s {
        Strategy::Ldf => Strategy::Edf,
        Strategy::Edf => Strategy::Ldf,
    }
}

/// All pure-strategy profiles from which neither class gains more than
/// `tol` by deviating alone. Ties count as equilibria.
pub fn nash_equilibria(t: &PayoffTable, tol: f64) -> Result<Vec<[Strategy; 2]>> {
    if let Some(bad) = t.cells.iter().find(|c| c.utilities.is_none()) {
        return Err(Error::Domain(format!(
            "payoff cell ({}, {}) is invalid: {}",
            bad.profile[0],
            bad.profile[1],
            bad.error.as_deref().unwrap_or("no value")
        )));
    }
    let u = |p: [Strategy; 2]| t.utilities(p).expect("checked above");
    Ok(PROFILES
        .into_iter()
        .filter(|&p| {
            let here = u(p);
            let weak_dev = u([flip(p[0]), p[1]]).u_weak;
            let strong_dev = u([p[0], flip(p[1])]).u_strong;
            here.u_weak >= weak_dev - tol && here.u_strong >= strong_dev - tol
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub table: PayoffTable,
    pub nash_tol: f64,
    /// `None` when some cell is invalid.
    pub equilibria: Option<Vec<[Strategy; 2]>>,
    pub global_optimum: Option<[Strategy; 2]>,
    pub error: Option<String>,
}

pub fn game_report(table: PayoffTable, nash_tol: f64) -> GameReport {
    let (equilibria, error) = match nash_equilibria(&table, nash_tol) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    GameReport { global_optimum: table.global_optimum(), table, nash_tol, equilibria, error }
}
