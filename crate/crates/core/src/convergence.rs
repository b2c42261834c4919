//! Empirical small-noise convergence: solve the equilibrium along a
//! decreasing eps grid, measure the weighted distance to the max-plus limit,
//! and decide whether the run actually converged.
//!
//! The distance between value functions is the Lyapunov-weighted sup norm
//!
//! ```text
//! w(h1, h2) = max_x |h1(x) - h2(x)| / V(x),
//! ```
//!
//! computed per anchored block Theta_{tau,t}. Raw distances need not fall
//! monotonically (tie regions and fold effects produce local bumps), so the
//! trend check uses a 3-point moving minimum of the per-eps worst distance
//! and requires it to be non-increasing from the first third of the grid
//! onward; the final distance must land under the model's declared tolerance.
//! Policy convergence asks that at the smallest eps every chosen action lies
//! in the limit solution's tie set, and operator-level consistency that
//! |Lambda^eps - Lambda| on the limit continuations is under its own
//! tolerance there.
//!
//! Grid points are solved in parallel (the workers only read the model), and
//! results are collected in grid order, so the emitted tables are
//! byte-deterministic regardless of thread count.

use crate::equilibrium::{solve_eps, solve_limit, EquilibriumSolution, SolveError, SolveOptions};
use crate::model::ModelSpec;
use crate::operators::{lambda_eps, lambda_limit};
use crate::serialize::{fmt_f64, to_canonical_json};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Slack used when comparing moving minima; pure rounding noise is not a
/// trend violation.
const TREND_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("sweep grid must be strictly decreasing positive reals, got {0} then {1}")]
    BadGrid(f64, f64),
}

/// Lyapunov-weighted sup distance max_x |h1 - h2| / v.
pub fn w_metric(h1: &[f64], h2: &[f64], v: &[f64]) -> f64 {
    assert_eq!(h1.len(), h2.len(), "value length mismatch");
    assert_eq!(h1.len(), v.len(), "weight length mismatch");
    let mut worst = 0.0f64;
    for ((a, b), w) in h1.iter().zip(h2).zip(v) {
        assert!(*w > 0.0, "Lyapunov weights must be positive");
        let d = (a - b).abs() / w;
        if d > worst {
            worst = d;
        }
    }
    worst
}

/// eps_max * 2^-k for k = 0..points.
pub fn geometric_grid(eps_max: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| eps_max * 2.0f64.powi(-(k as i32)))
        .collect()
}

/// One measured grid point for one anchored block.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub tau: usize,
    pub t: usize,
    /// w distance between Theta^eps_{tau,t} and the limit block.
    pub w_distance: f64,
    /// Fraction of states at step t whose eps-chosen action lies in the
    /// limit tie set (the same value for every tau at fixed eps, t).
    pub policy_agreement: f64,
    /// Number of states at step t with a non-singleton eps tie set.
    pub tie_count: usize,
}

/// Everything a convergence sweep produced, checks included.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Worst w distance over (tau, t) at each grid point, grid order.
    pub per_eps_max_distance: Vec<f64>,
    /// 3-point moving minimum non-increasing from the first third onward.
    pub trend_ok: bool,
    /// per_eps_max_distance at the smallest eps.
    pub final_distance: f64,
    pub final_ok: bool,
    /// Every eps-chosen action at the smallest eps lies in the limit tie set.
    pub policy_converged: bool,
    /// max |Lambda^eps - Lambda| over (t, x, u) at the smallest eps, with the
    /// limit solution's own continuations.
    pub limit_consistency: f64,
    pub limit_consistency_ok: bool,
    pub tolerance_sweep_final: f64,
    pub tolerance_limit_consistency: f64,
    pub limit: EquilibriumSolution,
    /// One eps solution per grid point, grid order.
    pub eps_solutions: Vec<EquilibriumSolution>,
}

#[derive(Serialize)]
struct SweepSummaryDoc<'a> {
    passed: bool,
    trend_ok: bool,
    final_ok: bool,
    policy_converged: bool,
    limit_consistency_ok: bool,
    final_distance: f64,
    limit_consistency: f64,
    tolerance_sweep_final: f64,
    tolerance_limit_consistency: f64,
    grid: &'a [f64],
    per_eps_max_distance: &'a [f64],
}

impl SweepResult {
    /// All four convergence checks together.
    pub fn passed(&self) -> bool {
        self.trend_ok && self.final_ok && self.policy_converged && self.limit_consistency_ok
    }

    /// Long-form CSV, one row per (eps, tau, t) in grid order.
    pub fn csv_long(&self) -> String {
        let mut out = String::from("eps,tau,t,w_distance,policy_agreement,tie_count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(r.eps),
                r.tau,
                r.t,
                fmt_f64(r.w_distance),
                fmt_f64(r.policy_agreement),
                r.tie_count
            ));
        }
        out
    }

    /// Wide companion CSV: one row per (tau, t), one distance column per eps.
    pub fn csv_wide(&self) -> String {
        let te = self.limit.theta.horizon();
        let mut out = String::from("tau,t");
        for &eps in &self.grid {
            out.push_str(&format!(",w[eps={}]", fmt_f64(eps)));
        }
        out.push('\n');
        for tau in 1..=te {
            for t in 1..=te {
                out.push_str(&format!("{tau},{t}"));
                for (gi, _) in self.grid.iter().enumerate() {
                    let row = &self.rows[gi * te * te + (tau - 1) * te + (t - 1)];
                    debug_assert_eq!((row.tau, row.t), (tau, t));
                    out.push_str(&format!(",{}", fmt_f64(row.w_distance)));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Canonical JSON of the checks and headline numbers.
    pub fn summary_json(&self) -> String {
        to_canonical_json(&SweepSummaryDoc {
            passed: self.passed(),
            trend_ok: self.trend_ok,
            final_ok: self.final_ok,
            policy_converged: self.policy_converged,
            limit_consistency_ok: self.limit_consistency_ok,
            final_distance: self.final_distance,
            limit_consistency: self.limit_consistency,
            tolerance_sweep_final: self.tolerance_sweep_final,
            tolerance_limit_consistency: self.tolerance_limit_consistency,
            grid: &self.grid,
            per_eps_max_distance: &self.per_eps_max_distance,
        })
    }
}

/// Runs the sweep over a strictly decreasing grid.
pub fn sweep(
    model: &ModelSpec,
    grid: &[f64],
    opts: SolveOptions,
) -> Result<SweepResult, SweepError> {
    if grid.is_empty() {
        return Err(SweepError::EmptyGrid);
    }
    let mut prev = f64::INFINITY;
    for &eps in grid {
        if !(eps.is_finite() && eps > 0.0 && eps < prev) {
            return Err(SweepError::BadGrid(prev, eps));
        }
        prev = eps;
    }

    let limit = solve_limit(model, opts)?;
    let eps_solutions: Vec<EquilibriumSolution> = grid
        .par_iter()
        .map(|&eps| solve_eps(model, eps, opts))
        .collect::<Result<_, _>>()?;

    let te = model.horizon();
    let v = model.lyapunov();
    let mut rows = Vec::with_capacity(grid.len() * te * te);
    let mut per_eps_max = Vec::with_capacity(grid.len());
    for (gi, sol) in eps_solutions.iter().enumerate() {
        let eps = grid[gi];
        // Per-step agreement and tie counts, shared across anchors.
        let mut agreement = vec![0.0f64; te];
        let mut ties = vec![0usize; te];
        for t in 1..=te {
            let mut agree = 0usize;
            for xi in 0..model.n_states() {
                let chosen = sol.policy.action(t, xi);
                if limit.argmins[t - 1][xi].minimizers.contains(&chosen) {
                    agree += 1;
                }
                if sol.argmins[t - 1][xi].minimizers.len() > 1 {
                    ties[t - 1] += 1;
                }
            }
            agreement[t - 1] = agree as f64 / model.n_states() as f64;
        }
        let mut worst = 0.0f64;
        for tau in 1..=te {
            for t in 1..=te {
                let d = w_metric(sol.theta.row(tau, t), limit.theta.row(tau, t), v);
                if d > worst {
                    worst = d;
                }
                rows.push(SweepRow {
                    eps,
                    tau,
                    t,
                    w_distance: d,
                    policy_agreement: agreement[t - 1],
                    tie_count: ties[t - 1],
                });
            }
        }
        per_eps_max.push(worst);
    }

    // Trend: 3-point moving minimum, non-increasing from the first third on.
    let k = grid.len();
    let moving_min: Vec<f64> = (0..k)
        .map(|i| {
            per_eps_max[i.saturating_sub(2)..=i]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let start = k.div_ceil(3).max(1);
    let trend_ok = (start..k).all(|i| moving_min[i] <= moving_min[i - 1] + TREND_SLACK);

    let tol = model.tolerances();
    let final_distance = *per_eps_max.last().expect("grid is nonempty");
    let final_ok = final_distance <= tol.sweep_final;

    let last = eps_solutions.last().expect("grid is nonempty");
    let policy_converged = (1..=te).all(|t| {
        (0..model.n_states()).all(|xi| {
            limit.argmins[t - 1][xi]
                .minimizers
                .contains(&last.policy.action(t, xi))
        })
    });

    // Operator-level consistency on the limit continuations at the last eps.
    let eps_last = *grid.last().expect("grid is nonempty");
    let mut limit_consistency = 0.0f64;
    for t in 1..=te {
        let h = limit.theta.row(t, t + 1);
        for xi in 0..model.n_states() {
            for ui in 0..model.n_actions(xi) {
                let le = lambda_eps(model, eps_last, t, xi, ui, h).map_err(SolveError::from)?;
                let ll = lambda_limit(model, t, xi, ui, h).map_err(SolveError::from)?;
                let d = (le - ll).abs();
                if d > limit_consistency {
                    limit_consistency = d;
                }
            }
        }
    }
    let limit_consistency_ok = limit_consistency <= tol.limit_consistency;

    Ok(SweepResult {
        grid: grid.to_vec(),
        rows,
        per_eps_max_distance: per_eps_max,
        trend_ok,
        final_distance,
        final_ok,
        policy_converged,
        limit_consistency,
        limit_consistency_ok,
        tolerance_sweep_final: tol.sweep_final,
        tolerance_limit_consistency: tol.limit_consistency,
        limit,
        eps_solutions,
    })
}
