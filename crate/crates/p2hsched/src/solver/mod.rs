//! Solver interface: model file serialization plus a HiGHS library backend.

pub mod mps;

pub use mps::{digest, parse_mps, to_mps, write_model, MpsDialect, ParsedMps};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelInstance, VarKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Backend identifier; `highs` is the only built-in backend.
    pub backend: String,
    /// Wall-clock limit, s.
    pub time_limit_s: f64,
    /// Relative MIP gap tolerance.
    pub gap_tol: f64,
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: "highs".to_string(),
            time_limit_s: 1800.0,
            gap_tol: 1e-4,
            // Single-threaded by default so solves are reproducible.
            threads: 1,
        }
    }
}

impl SolverConfig {
    /// Apply `P2H_SOLVER`, `P2H_TIME_LIMIT`, `P2H_GAP`, `P2H_THREADS`
    /// environment overrides on top of the current values.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(v) = std::env::var("P2H_SOLVER") {
            self.backend = v;
        }
        if let Ok(v) = std::env::var("P2H_TIME_LIMIT") {
            if let Ok(x) = v.parse() {
                self.time_limit_s = x;
            }
        }
        if let Ok(v) = std::env::var("P2H_GAP") {
            if let Ok(x) = v.parse() {
                self.gap_tol = x;
            }
        }
        if let Ok(v) = std::env::var("P2H_THREADS") {
            if let Ok(x) = v.parse() {
                self.threads = x;
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// An incumbent exists but optimality was not proven (e.g. the time
    /// limit was reached first).
    Feasible,
    Infeasible,
    Unbounded,
    /// Limit reached with no incumbent at all.
    Timeout,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective value of the incumbent (maximization), including the
    /// instance constant. NaN when no incumbent exists.
    pub objective: f64,
    /// Values indexed like `ModelInstance::vars`.
    pub values: Vec<f64>,
    /// Relative MIP gap of the incumbent; 0 for pure LPs.
    pub gap: f64,
    pub runtime_s: f64,
    pub solver_id: String,
}

impl SolveResult {
    pub fn has_incumbent(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    /// Value of a named variable.
    pub fn value(&self, m: &ModelInstance, name: &str) -> Option<f64> {
        m.var_id(name).map(|v| self.values[v.0])
    }
}

/// Solve an instance with the configured backend.
pub fn solve(m: &ModelInstance, cfg: &SolverConfig) -> Result<SolveResult> {
    m.validate()?;
    match cfg.backend.as_str() {
        "highs" => solve_highs(m, cfg),
        other => Err(Error::Config(format!(
            "unknown solver backend `{other}`; available backends: highs"
        ))),
    }
}

fn solve_highs(m: &ModelInstance, cfg: &SolverConfig) -> Result<SolveResult> {
    use highs::{HighsModelStatus, RowProblem, Sense};

    let start = std::time::Instant::now();
    let mut pb = RowProblem::new();
    let mut obj = vec![0.0; m.vars.len()];
    for &(v, c) in &m.objective {
        obj[v.0] += c;
    }
    let cols: Vec<highs::Col> = m
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| {
            pb.add_column_with_integrality(obj[i], v.lb..=v.ub, v.kind == VarKind::Binary)
        })
        .collect();
    for r in &m.rows {
        let factors: Vec<(highs::Col, f64)> =
            r.terms.iter().map(|&(v, c)| (cols[v.0], c)).collect();
        pb.add_row(r.lb..=r.ub, &factors);
    }

    let mut model = pb.optimise(Sense::Maximise);
    model.make_quiet();
    model.set_option("time_limit", cfg.time_limit_s);
    model.set_option("mip_rel_gap", cfg.gap_tol);
    model.set_option("threads", cfg.threads as i32);
    model.set_option("random_seed", 0);

    let solved = model.solve();
    let runtime_s = start.elapsed().as_secs_f64();
    let raw = solved.status();
    let objective_raw = solved.objective_value();
    let sol = solved.get_solution();
    let values = sol.columns().to_vec();
    let has_values = values.len() == m.vars.len();

    let status = match raw {
        HighsModelStatus::Optimal => SolveStatus::Optimal,
        HighsModelStatus::Infeasible => SolveStatus::Infeasible,
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
            SolveStatus::Unbounded
        }
        HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
            if has_values && values.iter().any(|v| v.is_finite()) && objective_raw.is_finite() {
                SolveStatus::Feasible
            } else {
                SolveStatus::Timeout
            }
        }
        other => {
            return Err(Error::Solver(format!("HiGHS terminated with status {other:?}")));
        }
    };

    let incumbent = matches!(status, SolveStatus::Optimal | SolveStatus::Feasible);
    let gap = {
        let g = unsafe_free_gap(&solved);
        if g.is_finite() {
            g
        } else {
            0.0
        }
    };

    Ok(SolveResult {
        status,
        objective: if incumbent { objective_raw + m.obj_constant } else { f64::NAN },
        values: if incumbent && has_values { values } else { vec![f64::NAN; m.vars.len()] },
        gap: if incumbent { gap } else { f64::NAN },
        runtime_s,
        solver_id: "highs".to_string(),
    })
}

fn unsafe_free_gap(solved: &highs::SolvedModel) -> f64 {
    solved.mip_gap()
}
