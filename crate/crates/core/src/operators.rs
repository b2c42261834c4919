//! One-step risk-sensitive operators and their small-noise limits.
//!
//! For a continuation value h over states, the risk-sensitive expectation
//! operator at level eps is
//!
//! ```text
//! Lambda^eps_t(x, u; h) = eps * log sum_z exp(h(z)/eps) * q^eps_t(z; x, u)
//! ```
//!
//! and its eps -> 0 limit under the rate function I_t is the max-plus form
//!
//! ```text
//! Lambda_t(x, u; h) = max_z [ h(z) - I_t(z; x, u) ].
//! ```
//!
//! The step-t Hamiltonian under anchor tau adds the running cost,
//! H^eps_{tau,t}(x, u; h) = f_{tau,t}(x, u) + Lambda^eps_t(x, u; h), and the
//! Bellman selection minimizes H^eps_{t,t} over the declared action order.
//!
//! # Numerical strategy
//!
//! Tabulated kernels use the standard shifted log-sum-exp with the shift taken
//! over the support of the row only.
//!
//! Rate-parameterized kernels never assemble the numeric row here. A term
//! (z, a, r) contributes a * exp((h(z) - r)/eps) to the sum, and the remainder
//! state contributes exp(h(rem)/eps) - sum_i a_i * exp((h(rem) - r_i)/eps), so
//! the whole sum is a signed combination of exponentials with known exponents.
//! Shifting by the largest exponent and summing signed scaled terms keeps the
//! dominant contribution at scale one even when exp(-r/eps) underflows to zero
//! in double precision, which a numeric-row evaluation would silently drop.
//! That underflow is not hypothetical: at eps = 1e-6 a rate-1 term has
//! exp(-1e6) = 0 numerically, yet its target can carry the argmax of
//! h(z) - I(z) and so dominate the true value.
//!
//! The Legendre/Varadhan cross-check evaluates both sides of
//!
//! ```text
//! Lambda^eps = sup_nu [ sum_z h(z) nu(z) - eps * KL(nu || q) ]
//! ```
//!
//! over one assembled numeric row: the left side by shifted log-sum-exp, the
//! right side at the Gibbs maximizer nu* proportional to q * exp(h/eps). Both
//! sides share the same row so the identity holds to rounding even where the
//! symbolic path and the assembled row differ by underflow.

use crate::model::{ModelError, ModelSpec};
use crate::serialize::ExtReal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("continuation value must be finite, got {0}")]
    NonFiniteValue(f64),
    #[error(
        "log-sum-exp total is not positive at eps={eps} (t={t}, x={x}, u={u}): scaled sum {s}"
    )]
    DegenerateRow {
        eps: f64,
        t: usize,
        x: i64,
        u: String,
        s: f64,
    },
    #[error("no reachable successor at (t={t}, x={x}, u={u}): every rate is +inf")]
    NoReachableSuccessor { t: usize, x: i64, u: String },
}

/// Which operator family an evaluation runs under: a fixed risk level or the
/// max-plus limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalMode {
    Eps(f64),
    Limit,
}

impl EvalMode {
    pub fn eps(&self) -> Option<f64> {
        match self {
            EvalMode::Eps(e) => Some(*e),
            EvalMode::Limit => None,
        }
    }
}

fn check_h(model: &ModelSpec, h: &[f64]) -> Result<(), OpError> {
    assert_eq!(h.len(), model.n_states(), "continuation length mismatch");
    for &v in h {
        if !v.is_finite() {
            return Err(OpError::NonFiniteValue(v));
        }
    }
    Ok(())
}

/// Lambda^eps_t(x, u; h). Symbolic exponent-space evaluation for
/// rate-parameterized kernels, shifted log-sum-exp for tabulated ones.
pub fn lambda_eps(
    model: &ModelSpec,
    eps: f64,
    t: usize,
    xi: usize,
    ui: usize,
    h: &[f64],
) -> Result<f64, OpError> {
    check_h(model, h)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(OpError::Model(ModelError::InvalidEps(eps)));
    }
    if let Some(row) = model.symbolic_row(t, xi, ui) {
        // Signed exponential atoms (exponent, weight) of
        // sum_z exp(h(z)/eps) q^eps(z).
        let mut m = h[row.remainder];
        for term in &row.terms {
            m = m.max(h[term.z] - term.rate);
            // The remainder correction atom h(rem) - rate never exceeds the
            // h(rem) atom itself, so it cannot move the shift.
        }
        let mut s = ((h[row.remainder] - m) / eps).exp();
        for term in &row.terms {
            s += term.coeff * ((h[term.z] - term.rate - m) / eps).exp();
            s -= term.coeff * ((h[row.remainder] - term.rate - m) / eps).exp();
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(OpError::DegenerateRow {
                eps,
                t,
                x: model.state_label(xi),
                u: model.action_label(xi, ui).to_string(),
                s,
            });
        }
        Ok(m + eps * s.ln())
    } else {
        let q = model.kernel_at(eps, t, xi, ui)?;
        Ok(logsumexp_row(eps, &q, h))
    }
}

/// Shifted log-sum-exp of exp(h/eps) against a probability row; the shift is
/// the max of h over the support so the dominant term has scale one.
fn logsumexp_row(eps: f64, q: &[f64], h: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (p, v) in q.iter().zip(h) {
        if *p > 0.0 && *v > m {
            m = *v;
        }
    }
    debug_assert!(m.is_finite(), "stochastic row has nonempty support");
    let mut s = 0.0f64;
    for (p, v) in q.iter().zip(h) {
        if *p > 0.0 {
            s += p * ((v - m) / eps).exp();
        }
    }
    m + eps * s.ln()
}

/// The max-plus limit Lambda_t(x, u; h) = max_z [h(z) - I_t(z; x, u)].
pub fn lambda_limit(
    model: &ModelSpec,
    t: usize,
    xi: usize,
    ui: usize,
    h: &[f64],
) -> Result<f64, OpError> {
    check_h(model, h)?;
    let rates = model.rate_row(t, xi, ui)?;
    let mut best = f64::NEG_INFINITY;
    for (v, r) in h.iter().zip(rates) {
        if r.is_finite() {
            best = best.max(v - r);
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(OpError::NoReachableSuccessor {
            t,
            x: model.state_label(xi),
            u: model.action_label(xi, ui).to_string(),
        });
    }
    Ok(best)
}

/// Lambda in the requested mode.
pub fn lambda(
    model: &ModelSpec,
    mode: EvalMode,
    t: usize,
    xi: usize,
    ui: usize,
    h: &[f64],
) -> Result<f64, OpError> {
    match mode {
        EvalMode::Eps(eps) => lambda_eps(model, eps, t, xi, ui, h),
        EvalMode::Limit => lambda_limit(model, t, xi, ui, h),
    }
}

/// The anchored Hamiltonian H_{tau,t}(x, u; h) = f_{tau,t}(x, u) + Lambda.
pub fn hamiltonian(
    model: &ModelSpec,
    mode: EvalMode,
    tau: usize,
    t: usize,
    xi: usize,
    ui: usize,
    h: &[f64],
) -> Result<f64, OpError> {
    Ok(model.running_cost(tau, t, xi, ui) + lambda(model, mode, t, xi, ui, h)?)
}

/// The outcome of one Bellman minimization over the actions at a state.
#[derive(Clone, Debug, PartialEq)]
pub struct ArgminSet {
    /// Hamiltonian value per action, in declared order.
    pub values: Vec<f64>,
    /// All actions within tie_tol of the minimum, in declared order.
    pub minimizers: Vec<usize>,
    /// The deterministic selection: the first minimizer in declared order.
    pub chosen: usize,
    /// Margin to the best non-minimizer, +inf when every action ties.
    pub gap: ExtReal,
}

/// Minimizes the step's own Hamiltonian H_{t,t}(x, .; h) over the declared
/// action order. Ties within tie_tol of the minimum are all reported and the
/// first wins, so the selection is deterministic for a fixed declaration.
pub fn bellman_argmin(
    model: &ModelSpec,
    mode: EvalMode,
    t: usize,
    xi: usize,
    h: &[f64],
    tie_tol: f64,
) -> Result<ArgminSet, OpError> {
    let n_u = model.n_actions(xi);
    let mut values = Vec::with_capacity(n_u);
    for ui in 0..n_u {
        values.push(hamiltonian(model, mode, t, t, xi, ui, h)?);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let minimizers: Vec<usize> = (0..n_u).filter(|&u| values[u] <= min + tie_tol).collect();
    let gap = values
        .iter()
        .enumerate()
        .filter(|(u, _)| !minimizers.contains(u))
        .map(|(_, v)| v - min)
        .fold(f64::INFINITY, f64::min);
    Ok(ArgminSet {
        chosen: minimizers[0],
        minimizers,
        values,
        gap: ExtReal(gap),
    })
}

/// Both sides of the Legendre/Varadhan duality over one assembled row.
#[derive(Clone, Debug)]
pub struct VaradhanReport {
    /// eps * log sum exp(h/eps) q, by shifted log-sum-exp.
    pub lhs: f64,
    /// sum h nu* - eps KL(nu* || q) at the Gibbs maximizer nu*.
    pub rhs: f64,
    /// |lhs - rhs|.
    pub gap: f64,
    /// State index carrying the largest Gibbs mass.
    pub maximizer: usize,
}

/// Evaluates the duality lhs = sup_nu [sum h nu - eps KL(nu || q)] at the
/// Gibbs maximizer. Both sides use the same assembled numeric row, so the gap
/// is pure rounding (about 1e-8 or below at every valid eps).
pub fn varadhan_check(
    model: &ModelSpec,
    eps: f64,
    t: usize,
    xi: usize,
    ui: usize,
    h: &[f64],
) -> Result<VaradhanReport, OpError> {
    check_h(model, h)?;
    let q = model.kernel_at(eps, t, xi, ui)?;
    let lhs = logsumexp_row(eps, &q, h);

    // Gibbs weights nu*(z) proportional to q(z) exp(h(z)/eps), shifted.
    let mut m = f64::NEG_INFINITY;
    for (p, v) in q.iter().zip(h) {
        if *p > 0.0 && *v > m {
            m = *v;
        }
    }
    let mut weights = vec![0.0f64; q.len()];
    let mut total = 0.0f64;
    for (zi, (p, v)) in q.iter().zip(h).enumerate() {
        if *p > 0.0 {
            let w = p * ((v - m) / eps).exp();
            weights[zi] = w;
            total += w;
        }
    }
    if !(total > 0.0) {
        return Err(OpError::DegenerateRow {
            eps,
            t,
            x: model.state_label(xi),
            u: model.action_label(xi, ui).to_string(),
            s: total,
        });
    }

    let mut mean = 0.0f64;
    let mut kl = 0.0f64;
    let mut maximizer = 0usize;
    let mut best_w = -1.0f64;
    for (zi, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue; // 0 * log 0 = 0 by convention
        }
        let nu = w / total;
        mean += h[zi] * nu;
        kl += nu * (nu / q[zi]).ln();
        if nu > best_w {
            best_w = nu;
            maximizer = zi;
        }
    }
    let rhs = mean - eps * kl;
    Ok(VaradhanReport {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        maximizer,
    })
}
