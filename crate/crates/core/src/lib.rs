//! Finite-horizon, time-inconsistent, risk-sensitive Markov decision processes
//! on finite state and action spaces.
//!
//! The running cost f_{tau,t}(x, u) and terminal cost g_tau(x) may depend on the
//! anchor step tau at which they are being judged, so the preferences of the
//! decision maker at step tau and at step t can disagree: the problem is
//! time-inconsistent and the classical backward Bellman recursion does not
//! produce a policy that any later self is willing to follow. What does exist is
//! a subgame-perfect equilibrium policy: at every step t and state x, the action
//! prescribed for step t is optimal for the step-t anchor given that all later
//! steps play the equilibrium.
//!
//! Risk sensitivity enters through the exponential certainty equivalent with
//! parameter eps > 0,
//!
//! ```text
//! J_{tau,t}(x; pi) = eps * log E[ exp( (sum_{s=t}^{T} f_{tau,s}(X_s, u_s) + g_tau(X_{T+1})) / eps ) ]
//! ```
//!
//! whose one-step building block is the operator
//! `Lambda_t(x, u; h) = eps * log sum_z exp(h(z)/eps) q_t(z; x, u)`.
//! As eps -> 0 with kernels of the form q(z) ~ a(z) exp(-I(z;x,u)/eps), the
//! operator converges to its max-plus counterpart
//! `max_z [ h(z) - I_t(z; x, u) ]`, turning the stochastic problem into a
//! deterministic minimax one. This crate computes the equilibrium for fixed eps
//! and in the max-plus limit, verifies step-optimality by explicit deviation
//! enumeration, and measures the eps -> 0 convergence empirically along
//! geometric grids.
//!
//! Module map:
//! - [`model`]: problem data (states, actions, kernel family, rate function,
//!   costs), ingestion from JSON, standing-assumption validation.
//! - [`operators`]: log-sum-exp and max-plus one-step operators, Hamiltonians,
//!   Bellman minimization with tie ledger, duality self-check.
//! - [`equilibrium`]: backward equilibrium construction, policy evaluation,
//!   step-optimality verification, precommitment comparison.
//! - [`convergence`]: weighted sup metric and eps-grid sweeps against the
//!   max-plus limit.
//! - [`examples`]: programmatic builders for the two built-in example families
//!   (an integer random walk with quadratic rates and a three-state regime
//!   switching chain with a rare crisis state).
//! - [`sample`]: seeded random well-formed instances for tests and oracles.

pub mod convergence;
pub mod equilibrium;
pub mod examples;
pub mod model;
pub mod operators;
pub mod sample;
mod serialize;

pub use model::{ModelError, ModelSpec};
pub use operators::EvalMode;
pub use serialize::ExtReal;
