//! Problem data for a finite-horizon, anchor-dependent, risk-sensitive MDP:
//! states with Lyapunov weights, per-state action sets, the one-step kernel
//! family q^eps_t(z; x, u), the transition rate function I_t(z; x, u), and the
//! anchored costs f_{tau,t}(x, u), g_tau(x).
//!
//! Steps run t = 1..=T with the terminal position at T+1. The anchor tau names
//! the step whose preferences are being used; costs may depend on it, which is
//! the only source of time inconsistency in the model.
//!
//! # Kernel family
//!
//! Two modes:
//!
//! - `rate-parameterized`: each row (t, x, u) is a list of signed terms
//!   (z, coeff, rate) contributing coeff * exp(-rate/eps) to q(z), plus a
//!   designated remainder state that absorbs 1 minus the total term mass so the
//!   row sums to one at every eps. Several terms may target the same z, and a
//!   negative coeff expresses a correction (e.g. p - exp(-lambda/eps)). Any
//!   assembled probability below zero is a hard error naming (t, x, u, eps).
//! - `tabulated`: explicit stochastic rows, optionally per eps; a row with no
//!   eps key applies at every eps not covered by an exact entry.
//!
//! The rate function is the exponential decay order of the row,
//! I(z) = lim eps*(-log q^eps(z)). In rate-parameterized mode it is derived:
//! each z gets the minimum rate over its positive-coefficient terms, and the
//! remainder state gets rate 0 whenever its limiting mass is positive. For
//! eps-independent tabulated rows the rate is 0 on the support and +inf off
//! it. An explicit top-level `rates` table overrides the derivation and is the
//! only way to attach rates to eps-varying tabulated kernels.
//!
//! # Model file
//!
//! A model is a single JSON document:
//!
//! ```json
//! {
//!   "horizon": 2,
//!   "states": [ {"label": 1, "lyapunov": 1.0}, {"label": 2, "lyapunov": 1.0} ],
//!   "actions": { "1": [{"label": "stay"}], "2": [{"label": "stay"}] },
//!   "kernel": { "mode": "rate-parameterized", "entries": [
//!     {"x": 1, "u": "stay", "terms": [{"z": 2, "coeff": 0.5, "rate": 1.0}], "remainder": 1},
//!     {"x": 2, "u": "stay", "terms": [], "remainder": 2} ] },
//!   "costs": { "running": [ {"tau": 1, "t": 1, "x": 1, "u": "stay", "value": 0.0}, ... ],
//!              "terminal": [ {"tau": 1, "x": 1, "value": 0.0}, ... ] }
//! }
//! ```
//!
//! Optional top-level keys: `discounting` (replaces `costs`; expands to
//! f_{tau,t}(x,u) = lambda^(t-tau) * base_t(x,u) and
//! g_tau(x) = lambda^(T+1-tau) * terminal(x) with lambda strictly inside
//! (0,1)), `rates` (explicit rate rows; the value "inf" spells +infinity; an
//! unlisted z in an explicit row means +inf), `tolerances` (per-model sweep
//! calibration constants), `notes` (free-form build provenance strings).
//! Kernel and rate entries may omit `t` to apply at every step; an exact-`t`
//! entry outranks a step-free one, and in tabulated mode an exact-`t` match
//! outranks an exact-`eps` match. Structural defects (unknown references,
//! duplicate or missing table entries, non-finite numbers) are hard ingestion
//! errors; mathematical assumption violations (non-stochastic rows on a grid,
//! rates without a zero minimum, non-positive weights) are reported by
//! [`validate_assumptions`] as failed checks instead of exceptions.

use crate::serialize::{to_canonical_json, ExtReal};
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{HashMap, HashSet};
use std::fmt;
use thiserror::Error;

/// Probabilities this far below zero are treated as rounding noise and clamped.
const STOCHASTIC_TOL: f64 = 1e-12;
/// Row sums must match 1 to this absolute tolerance.
const ROW_SUM_TOL: f64 = 1e-12;
/// Relative tolerance for matching a tabulated row's eps key to a query eps.
const EPS_KEY_TOL: f64 = 1e-12;
/// Number of points in the default geometric grid.
pub const DEFAULT_GRID_POINTS: usize = 12;

// ── Errors ──────────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model JSON does not parse: {0}")]
    Parse(String),
    #[error("state space is empty")]
    EmptyStates,
    #[error("horizon must be at least 1")]
    HorizonZero,
    #[error("duplicate state label {0}")]
    DuplicateState(i64),
    #[error("unknown state label {0} referenced by {1}")]
    UnknownState(i64, String),
    #[error("state {0} has no action list")]
    NoActions(i64),
    #[error("duplicate action label {label:?} at state {state}")]
    DuplicateAction { state: i64, label: String },
    #[error("unknown action label {label:?} at state {state} referenced by {context}")]
    UnknownAction {
        state: i64,
        label: String,
        context: String,
    },
    #[error("non-finite number in {0}")]
    NonFinite(String),
    #[error("kernel mode is {mode} but entry for (x={x}, u={u}) carries {field}")]
    KernelFieldMismatch {
        mode: &'static str,
        x: i64,
        u: String,
        field: &'static str,
    },
    #[error("duplicate kernel entry for (t={t}, x={x}, u={u}, eps={eps})")]
    DuplicateKernelEntry {
        t: String,
        x: i64,
        u: String,
        eps: String,
    },
    #[error("no kernel entry covers (t={t}, x={x}, u={u})")]
    MissingKernelEntry { t: usize, x: i64, u: String },
    #[error("no tabulated kernel row matches eps={eps} at (t={t}, x={x}, u={u})")]
    MissingTabulatedRow { eps: f64, t: usize, x: i64, u: String },
    #[error(
        "kernel row not stochastic at eps={eps} (t={t}, x={x}, u={u}): {detail}"
    )]
    NotStochastic {
        eps: f64,
        t: usize,
        x: i64,
        u: String,
        detail: String,
    },
    #[error("eps must be a positive finite real, got {0}")]
    InvalidEps(f64),
    #[error("kernel term rate must be finite and nonnegative, got {rate} at (x={x}, u={u})")]
    BadRate { rate: f64, x: i64, u: String },
    #[error("exactly one of `costs` and `discounting` must be present")]
    CostFormAmbiguous,
    #[error("unsupported discounting form {0:?} (only \"exponential\")")]
    UnknownDiscountingForm(String),
    #[error("discount factor must lie strictly inside (0,1), got {0}")]
    LambdaOutOfRange(f64),
    #[error("duplicate cost entry for {0}")]
    DuplicateCost(String),
    #[error("missing cost entry for {0}")]
    MissingCost(String),
    #[error("cost entry {0} is out of range (tau and t run 1..=horizon)")]
    CostIndexOutOfRange(String),
    #[error("duplicate rate row for (t={t}, x={x}, u={u})")]
    DuplicateRateRow { t: String, x: i64, u: String },
    #[error("rate value must be nonnegative, got {value} at (x={x}, u={u}, z={z})")]
    NegativeRate { value: f64, x: i64, u: String, z: i64 },
    #[error(
        "no rate function at (t={t}, x={x}, u={u}): {reason}; supply an explicit `rates` table"
    )]
    RateUnavailable { t: usize, x: i64, u: String, reason: String },
    #[error("tolerance {0} must be a positive finite real")]
    BadTolerance(String),
    #[error("kernel entry step t={0} is out of range 1..={1}")]
    StepOutOfRange(usize, usize),
    #[error("no valid eps found for a default grid: {0}")]
    NoValidEps(String),
    #[error("bad example configuration: {0}")]
    BadConfig(String),
}

impl From<serde_json::Error> for ModelError {
    fn from(e: serde_json::Error) -> Self {
        ModelError::Parse(e.to_string())
    }
}

// ── JSON document form ──────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub horizon: usize,
    pub states: Vec<StateDoc>,
    pub actions: ActionsDoc,
    pub kernel: KernelDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<CostsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discounting: Option<DiscountingDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<RateRowDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<TolerancesDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub label: i64,
    pub lyapunov: f64,
}

/// The `actions` object: state label -> declared-order action list.
/// Kept as a vector of pairs so file order survives a parse/emit cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionsDoc(pub Vec<(i64, Vec<ActionDoc>)>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionDoc {
    Bare(String),
    Full {
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        payload: Option<Vec<f64>>,
    },
}

impl ActionDoc {
    fn label(&self) -> &str {
        match self {
            ActionDoc::Bare(l) => l,
            ActionDoc::Full { label, .. } => label,
        }
    }

    fn payload(&self) -> Option<&Vec<f64>> {
        match self {
            ActionDoc::Bare(_) => None,
            ActionDoc::Full { payload, .. } => payload.as_ref(),
        }
    }
}

impl Serialize for ActionsDoc {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (label, list) in &self.0 {
            map.serialize_entry(&label.to_string(), list)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ActionsDoc {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ActionsDoc;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a map from state label to action list")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut out: Vec<(i64, Vec<ActionDoc>)> = Vec::new();
                let mut seen = HashSet::new();
                while let Some((key, value)) = access.next_entry::<String, Vec<ActionDoc>>()? {
                    let label: i64 = key
                        .parse()
                        .map_err(|_| de::Error::custom(format!("state key {key:?} is not an integer")))?;
                    if !seen.insert(label) {
                        return Err(de::Error::custom(format!("duplicate actions key {label}")));
                    }
                    out.push((label, value));
                }
                Ok(ActionsDoc(out))
            }
        }
        deserializer.deserialize_map(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelDoc {
    pub mode: KernelModeDoc,
    pub entries: Vec<KernelEntryDoc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelModeDoc {
    #[serde(rename = "rate-parameterized")]
    Rate,
    #[serde(rename = "tabulated")]
    Tabulated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntryDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    pub x: i64,
    pub u: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TermDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remainder: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<Vec<RowProbDoc>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub z: i64,
    pub coeff: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowProbDoc {
    pub z: i64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsDoc {
    pub running: Vec<RunningCostDoc>,
    pub terminal: Vec<TerminalCostDoc>,
}

/// One running-cost table entry f_{tau,t}(x, u) = value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunningCostDoc {
    pub tau: usize,
    pub t: usize,
    pub x: i64,
    pub u: String,
    pub value: f64,
}

/// One terminal-cost table entry g_tau(x) = value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalCostDoc {
    pub tau: usize,
    pub x: i64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountingDoc {
    pub form: String,
    pub lambda: f64,
    pub base_cost: BaseCostDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseCostDoc {
    pub running: Vec<BaseRunningDoc>,
    pub terminal: Vec<BaseTerminalDoc>,
}

/// One base running-cost entry c_t(x, u) = value for the discounted family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseRunningDoc {
    pub t: usize,
    pub x: i64,
    pub u: String,
    pub value: f64,
}

/// One base terminal-cost entry for the discounted family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseTerminalDoc {
    pub x: i64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateRowDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    pub x: i64,
    pub u: String,
    pub entries: Vec<RateEntryDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateEntryDoc {
    pub z: i64,
    pub value: ExtReal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_consistency: Option<f64>,
}

// ── Resolved model ──────────────────────────────────────────────────────────

/// A declared action: label plus an optional numeric payload carried through
/// for cost construction by external tooling (the solver itself only uses the
/// label's position in the declared order).
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub label: String,
    pub payload: Option<Vec<f64>>,
}

/// One rate-parameterized kernel term: q gains coeff * exp(-rate/eps) at
/// state index z. coeff may be negative (a correction); rate is finite >= 0.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTerm {
    pub z: usize,
    pub coeff: f64,
    pub rate: f64,
}

/// A rate-parameterized kernel row: terms plus the remainder state absorbing
/// the residual mass so the row sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub terms: Vec<KernelTerm>,
    pub remainder: usize,
}

#[derive(Clone, Debug)]
struct TabEntry {
    eps: Option<f64>,
    t: Option<usize>,
    probs: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Kernel {
    Rate {
        rows: Vec<RateRow>,
        /// Dense row id per (t-1)*total_actions + action slot.
        index: Vec<usize>,
    },
    Tabulated {
        /// Entry lists per action slot, in declaration order.
        by_slot: Vec<Vec<TabEntry>>,
    },
}

#[derive(Clone, Debug)]
enum Costs {
    Explicit {
        /// Dense (tau, t, slot): ((tau-1)*T + (t-1)) * total_actions + slot.
        running: Vec<f64>,
        /// Dense (tau, x): (tau-1)*n + x.
        terminal: Vec<f64>,
    },
    Discounted {
        lambda: f64,
        /// Dense (t, slot).
        base_running: Vec<f64>,
        /// Dense (x).
        base_terminal: Vec<f64>,
    },
}

/// Per-model calibration constants for convergence checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Final sweep w-distance must fall below this.
    pub sweep_final: f64,
    /// Final |lambda_eps - lambda_limit| must fall below this.
    pub limit_consistency: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            sweep_final: 0.05,
            limit_consistency: 0.05,
        }
    }
}

/// A validated, index-resolved model. Construct via [`ModelSpec::from_json_str`]
/// or the builders in [`crate::examples`].
#[derive(Clone, Debug)]
pub struct ModelSpec {
    doc: ModelDoc,
    horizon: usize,
    labels: Vec<i64>,
    lyapunov: Vec<f64>,
    state_index: HashMap<i64, usize>,
    actions: Vec<Vec<Action>>,
    action_index: Vec<HashMap<String, usize>>,
    action_offset: Vec<usize>,
    total_actions: usize,
    kernel: Kernel,
    costs: Costs,
    /// Dense (t-1)*total_actions + slot -> rate row (+inf = unreachable),
    /// None when no rate function is available for that row.
    rate_rows: Vec<Option<Vec<f64>>>,
    tolerances: Tolerances,
    notes: Vec<String>,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

impl ModelSpec {
    // ── Construction ────────────────────────────────────────────────────

    pub fn from_json_str(s: &str) -> Result<ModelSpec, ModelError> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        ModelSpec::from_doc(doc)
    }

    /// Builds a model from an in-memory document, running the same checks as
    /// JSON ingestion. Useful for programmatic construction.
    pub fn from_doc(doc: ModelDoc) -> Result<ModelSpec, ModelError> {
        let horizon = doc.horizon;
        if horizon < 1 {
            return Err(ModelError::HorizonZero);
        }
        if doc.states.is_empty() {
            return Err(ModelError::EmptyStates);
        }

        let mut labels = Vec::with_capacity(doc.states.len());
        let mut lyapunov = Vec::with_capacity(doc.states.len());
        let mut state_index = HashMap::new();
        for s in &doc.states {
            if !s.lyapunov.is_finite() {
                return Err(ModelError::NonFinite(format!(
                    "lyapunov weight of state {}",
                    s.label
                )));
            }
            if state_index.insert(s.label, labels.len()).is_some() {
                return Err(ModelError::DuplicateState(s.label));
            }
            labels.push(s.label);
            lyapunov.push(s.lyapunov);
        }
        let n = labels.len();

        // Actions, re-ordered to declared state order.
        let mut actions: Vec<Option<Vec<Action>>> = vec![None; n];
        for (label, list) in &doc.actions.0 {
            let xi = *state_index
                .get(label)
                .ok_or_else(|| ModelError::UnknownState(*label, "actions".into()))?;
            if actions[xi].is_some() {
                // Unreachable through JSON (duplicate keys rejected at parse),
                // but builders could construct it.
                return Err(ModelError::DuplicateState(*label));
            }
            if list.is_empty() {
                return Err(ModelError::NoActions(*label));
            }
            let mut resolved = Vec::with_capacity(list.len());
            let mut seen = HashSet::new();
            for a in list {
                if !seen.insert(a.label().to_string()) {
                    return Err(ModelError::DuplicateAction {
                        state: *label,
                        label: a.label().to_string(),
                    });
                }
                if let Some(p) = a.payload() {
                    if p.iter().any(|v| !v.is_finite()) {
                        return Err(ModelError::NonFinite(format!(
                            "payload of action {:?} at state {label}",
                            a.label()
                        )));
                    }
                }
                resolved.push(Action {
                    label: a.label().to_string(),
                    payload: a.payload().cloned(),
                });
            }
            actions[xi] = Some(resolved);
        }
        let actions: Vec<Vec<Action>> = actions
            .into_iter()
            .enumerate()
            .map(|(xi, a)| a.ok_or(ModelError::NoActions(labels[xi])))
            .collect::<Result<_, _>>()?;

        let mut action_index = Vec::with_capacity(n);
        let mut action_offset = Vec::with_capacity(n);
        let mut total_actions = 0usize;
        for set in &actions {
            let mut idx = HashMap::new();
            for (ui, a) in set.iter().enumerate() {
                idx.insert(a.label.clone(), ui);
            }
            action_index.push(idx);
            action_offset.push(total_actions);
            total_actions += set.len();
        }

        let half = HalfResolved {
            horizon,
            labels: &labels,
            state_index: &state_index,
            actions: &actions,
            action_index: &action_index,
            action_offset: &action_offset,
            total_actions,
        };

        let kernel = half.resolve_kernel(&doc.kernel)?;
        let costs = half.resolve_costs(doc.costs.as_ref(), doc.discounting.as_ref())?;
        let explicit_rates = half.resolve_explicit_rates(doc.rates.as_deref())?;
        let rate_rows = half.precompute_rate_rows(&kernel, &explicit_rates);

        let tolerances = match &doc.tolerances {
            None => Tolerances::default(),
            Some(td) => {
                let d = Tolerances::default();
                let tol = Tolerances {
                    sweep_final: td.sweep_final.unwrap_or(d.sweep_final),
                    limit_consistency: td.limit_consistency.unwrap_or(d.limit_consistency),
                };
                for (name, v) in [
                    ("sweep_final", tol.sweep_final),
                    ("limit_consistency", tol.limit_consistency),
                ] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(ModelError::BadTolerance(name.into()));
                    }
                }
                tol
            }
        };

        let notes = doc.notes.clone();
        Ok(ModelSpec {
            horizon,
            labels,
            lyapunov,
            state_index,
            actions,
            action_index,
            action_offset,
            total_actions,
            kernel,
            costs,
            rate_rows,
            tolerances,
            notes,
            doc,
        })
    }

    // ── Shape accessors ─────────────────────────────────────────────────

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn state_labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn state_label(&self, xi: usize) -> i64 {
        self.labels[xi]
    }

    pub fn state_idx(&self, label: i64) -> Option<usize> {
        self.state_index.get(&label).copied()
    }

    pub fn lyapunov(&self) -> &[f64] {
        &self.lyapunov
    }

    pub fn actions(&self, xi: usize) -> &[Action] {
        &self.actions[xi]
    }

    pub fn n_actions(&self, xi: usize) -> usize {
        self.actions[xi].len()
    }

    pub fn action_label(&self, xi: usize, ui: usize) -> &str {
        &self.actions[xi][ui].label
    }

    pub fn action_idx(&self, xi: usize, label: &str) -> Option<usize> {
        self.action_index[xi].get(label).copied()
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn is_rate_mode(&self) -> bool {
        matches!(self.kernel, Kernel::Rate { .. })
    }

    fn slot(&self, xi: usize, ui: usize) -> usize {
        debug_assert!(ui < self.actions[xi].len());
        self.action_offset[xi] + ui
    }

    // ── Costs ───────────────────────────────────────────────────────────

    /// Running cost f_{tau,t}(x, u). tau, t are 1-based steps in 1..=T.
    pub fn running_cost(&self, tau: usize, t: usize, xi: usize, ui: usize) -> f64 {
        let te = self.horizon;
        assert!(tau >= 1 && tau <= te && t >= 1 && t <= te, "step out of range");
        let slot = self.slot(xi, ui);
        match &self.costs {
            Costs::Explicit { running, .. } => {
                running[((tau - 1) * te + (t - 1)) * self.total_actions + slot]
            }
            Costs::Discounted {
                lambda,
                base_running,
                ..
            } => {
                lambda.powi(t as i32 - tau as i32)
                    * base_running[(t - 1) * self.total_actions + slot]
            }
        }
    }

    /// Terminal cost g_tau(x).
    pub fn terminal_cost(&self, tau: usize, xi: usize) -> f64 {
        let te = self.horizon;
        assert!(tau >= 1 && tau <= te, "anchor out of range");
        match &self.costs {
            Costs::Explicit { terminal, .. } => terminal[(tau - 1) * self.n_states() + xi],
            Costs::Discounted {
                lambda,
                base_terminal,
                ..
            } => lambda.powi((te + 1 - tau) as i32) * base_terminal[xi],
        }
    }

    /// True when costs do not depend on the anchor (f_{tau,t} == f_{t,t} etc.).
    pub fn costs_tau_independent(&self) -> bool {
        let te = self.horizon;
        for tau in 1..=te {
            for xi in 0..self.n_states() {
                if self.terminal_cost(tau, xi) != self.terminal_cost(1, xi) {
                    return false;
                }
                for t in 1..=te {
                    for ui in 0..self.n_actions(xi) {
                        if self.running_cost(tau, t, xi, ui) != self.running_cost(1, t, xi, ui) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    // ── Kernel ──────────────────────────────────────────────────────────

    /// The symbolic rate-parameterized row, when the kernel is in that mode.
    pub fn symbolic_row(&self, t: usize, xi: usize, ui: usize) -> Option<&RateRow> {
        match &self.kernel {
            Kernel::Rate { rows, index } => {
                Some(&rows[index[(t - 1) * self.total_actions + self.slot(xi, ui)]])
            }
            Kernel::Tabulated { .. } => None,
        }
    }

    /// Assembles the numeric probability row q^eps_t(.; x, u) over the declared
    /// state order. Rate mode sums coeff*exp(-rate/eps) per target and routes
    /// the residual to the remainder state; tabulated mode returns the stored
    /// row. Hard error if eps is invalid, no row matches, any probability is
    /// negative beyond rounding, or the row does not sum to 1 within 1e-12.
    pub fn kernel_at(
        &self,
        eps: f64,
        t: usize,
        xi: usize,
        ui: usize,
    ) -> Result<Vec<f64>, ModelError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(ModelError::InvalidEps(eps));
        }
        assert!(t >= 1 && t <= self.horizon, "step out of range");
        let n = self.n_states();
        match &self.kernel {
            Kernel::Rate { rows, index } => {
                let row = &rows[index[(t - 1) * self.total_actions + self.slot(xi, ui)]];
                let mut probs = vec![0.0f64; n];
                let mut total = 0.0f64;
                for term in &row.terms {
                    let w = term.coeff * (-term.rate / eps).exp();
                    probs[term.z] += w;
                    total += w;
                }
                probs[row.remainder] += 1.0 - total;
                for (zi, p) in probs.iter_mut().enumerate() {
                    if *p < -STOCHASTIC_TOL {
                        return Err(ModelError::NotStochastic {
                            eps,
                            t,
                            x: self.labels[xi],
                            u: self.actions[xi][ui].label.clone(),
                            detail: format!(
                                "assembled q({}) = {} is negative (exponential terms exceed the available mass)",
                                self.labels[zi], *p
                            ),
                        });
                    }
                    if *p < 0.0 {
                        *p = 0.0;
                    }
                }
                Ok(probs)
            }
            Kernel::Tabulated { by_slot } => {
                let entries = &by_slot[self.slot(xi, ui)];
                let mut best: Option<(u8, &TabEntry)> = None;
                for e in entries {
                    let t_score = match e.t {
                        Some(et) if et == t => 2u8,
                        Some(_) => continue,
                        None => 0,
                    };
                    let eps_score = match e.eps {
                        Some(ek) if eps_key_matches(ek, eps) => 1u8,
                        Some(_) => continue,
                        None => 0,
                    };
                    let score = t_score + eps_score;
                    if best.map_or(true, |(s, _)| score > s) {
                        best = Some((score, e));
                    }
                }
                let entry = best
                    .map(|(_, e)| e)
                    .ok_or_else(|| ModelError::MissingTabulatedRow {
                        eps,
                        t,
                        x: self.labels[xi],
                        u: self.actions[xi][ui].label.clone(),
                    })?;
                let mut sum = 0.0f64;
                for (zi, &p) in entry.probs.iter().enumerate() {
                    if p < 0.0 {
                        return Err(ModelError::NotStochastic {
                            eps,
                            t,
                            x: self.labels[xi],
                            u: self.actions[xi][ui].label.clone(),
                            detail: format!("stored q({}) = {p} is negative", self.labels[zi]),
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(ModelError::NotStochastic {
                        eps,
                        t,
                        x: self.labels[xi],
                        u: self.actions[xi][ui].label.clone(),
                        detail: format!("stored row sums to {sum}, not 1 within {ROW_SUM_TOL:e}"),
                    });
                }
                Ok(entry.probs.clone())
            }
        }
    }

    /// The rate row I_t(.; x, u) over the declared state order; +inf marks an
    /// unreachable target. Errors when no rate function exists for the row.
    pub fn rate_row(&self, t: usize, xi: usize, ui: usize) -> Result<&[f64], ModelError> {
        assert!(t >= 1 && t <= self.horizon, "step out of range");
        let slot = (t - 1) * self.total_actions + self.slot(xi, ui);
        self.rate_rows[slot].as_deref().ok_or_else(|| {
            let reason = match &self.kernel {
                Kernel::Rate { .. } => {
                    "the remainder state's limiting mass vanishes, so its rate is underdetermined"
                }
                Kernel::Tabulated { .. } => {
                    "the tabulated kernel varies with eps, so no rate can be derived"
                }
            };
            ModelError::RateUnavailable {
                t,
                x: self.labels[xi],
                u: self.actions[xi][ui].label.clone(),
                reason: reason.into(),
            }
        })
    }

    /// Checks every kernel row at one eps; first failure wins.
    pub fn kernel_valid_at(&self, eps: f64) -> Result<(), ModelError> {
        for t in 1..=self.horizon {
            for xi in 0..self.n_states() {
                for ui in 0..self.n_actions(xi) {
                    self.kernel_at(eps, t, xi, ui)?;
                }
            }
        }
        Ok(())
    }

    /// The default geometric grid: eps_max * 2^-k for k = 0..12, where eps_max
    /// is the largest power-of-two-scaled eps <= 1 at which every kernel row
    /// is stochastic. A tabulated kernel with per-eps rows instead returns its
    /// declared eps values, largest first.
    pub fn default_grid(&self) -> Result<Vec<f64>, ModelError> {
        if let Kernel::Tabulated { by_slot } = &self.kernel {
            let mut declared: Vec<f64> = Vec::new();
            for entries in by_slot {
                for e in entries {
                    if let Some(ek) = e.eps {
                        if !declared.iter().any(|&d| eps_key_matches(d, ek)) {
                            declared.push(ek);
                        }
                    }
                }
            }
            if !declared.is_empty() {
                declared.sort_by(|a, b| b.total_cmp(a));
                return Ok(declared);
            }
        }
        let mut eps_max = 1.0f64;
        let mut last_err = None;
        for _ in 0..60 {
            match self.kernel_valid_at(eps_max) {
                Ok(()) => {
                    return Ok((0..DEFAULT_GRID_POINTS)
                        .map(|k| eps_max * 2.0f64.powi(-(k as i32)))
                        .collect());
                }
                Err(e) => {
                    last_err = Some(e);
                    eps_max /= 2.0;
                }
            }
        }
        Err(ModelError::NoValidEps(
            last_err.map_or_else(|| "unknown".into(), |e| e.to_string()),
        ))
    }

    // ── Emission ────────────────────────────────────────────────────────

    /// The model as canonical JSON (17-significant-digit floats, stable key
    /// order); parsing it back yields an equal model.
    pub fn to_json_string(&self) -> String {
        to_canonical_json(&self.doc)
    }
}

fn eps_key_matches(key: f64, eps: f64) -> bool {
    (key - eps).abs() <= EPS_KEY_TOL * key.abs().max(1.0)
}

/// Shape data shared by the resolution passes before ModelSpec exists.
struct HalfResolved<'a> {
    horizon: usize,
    labels: &'a [i64],
    state_index: &'a HashMap<i64, usize>,
    actions: &'a [Vec<Action>],
    action_index: &'a [HashMap<String, usize>],
    action_offset: &'a [usize],
    total_actions: usize,
}

impl<'a> HalfResolved<'a> {
    fn n(&self) -> usize {
        self.labels.len()
    }

    fn state(&self, label: i64, context: &str) -> Result<usize, ModelError> {
        self.state_index
            .get(&label)
            .copied()
            .ok_or_else(|| ModelError::UnknownState(label, context.into()))
    }

    fn action(&self, xi: usize, label: &str, context: &str) -> Result<usize, ModelError> {
        self.action_index[xi].get(label).copied().ok_or_else(|| {
            ModelError::UnknownAction {
                state: self.labels[xi],
                label: label.into(),
                context: context.into(),
            }
        })
    }

    fn check_step(&self, t: Option<usize>) -> Result<(), ModelError> {
        if let Some(t) = t {
            if t < 1 || t > self.horizon {
                return Err(ModelError::StepOutOfRange(t, self.horizon));
            }
        }
        Ok(())
    }

    fn resolve_kernel(&self, doc: &KernelDoc) -> Result<Kernel, ModelError> {
        match doc.mode {
            KernelModeDoc::Rate => {
                let mut rows = Vec::with_capacity(doc.entries.len());
                let mut by_key: HashMap<(Option<usize>, usize), usize> = HashMap::new();
                for e in &doc.entries {
                    let xi = self.state(e.x, "kernel entry")?;
                    let ui = self.action(xi, &e.u, "kernel entry")?;
                    self.check_step(e.t)?;
                    if e.eps.is_some() {
                        return Err(ModelError::KernelFieldMismatch {
                            mode: "rate-parameterized",
                            x: e.x,
                            u: e.u.clone(),
                            field: "eps",
                        });
                    }
                    if e.row.is_some() {
                        return Err(ModelError::KernelFieldMismatch {
                            mode: "rate-parameterized",
                            x: e.x,
                            u: e.u.clone(),
                            field: "row",
                        });
                    }
                    let terms_doc = e.terms.as_ref().ok_or(ModelError::KernelFieldMismatch {
                        mode: "rate-parameterized",
                        x: e.x,
                        u: e.u.clone(),
                        field: "no terms",
                    })?;
                    let remainder_label =
                        e.remainder.ok_or(ModelError::KernelFieldMismatch {
                            mode: "rate-parameterized",
                            x: e.x,
                            u: e.u.clone(),
                            field: "no remainder",
                        })?;
                    let remainder = self.state(remainder_label, "kernel remainder")?;
                    let mut terms = Vec::with_capacity(terms_doc.len());
                    for td in terms_doc {
                        let z = self.state(td.z, "kernel term")?;
                        if !td.coeff.is_finite() || td.coeff == 0.0 {
                            return Err(ModelError::NonFinite(format!(
                                "kernel term coefficient {} at (x={}, u={})",
                                td.coeff, e.x, e.u
                            )));
                        }
                        if !td.rate.is_finite() || td.rate < 0.0 {
                            return Err(ModelError::BadRate {
                                rate: td.rate,
                                x: e.x,
                                u: e.u.clone(),
                            });
                        }
                        terms.push(KernelTerm {
                            z,
                            coeff: td.coeff,
                            rate: td.rate,
                        });
                    }
                    let slot = self.action_offset[xi] + ui;
                    if by_key.insert((e.t, slot), rows.len()).is_some() {
                        return Err(ModelError::DuplicateKernelEntry {
                            t: e.t.map_or_else(|| "any".into(), |t| t.to_string()),
                            x: e.x,
                            u: e.u.clone(),
                            eps: "n/a".into(),
                        });
                    }
                    rows.push(RateRow { terms, remainder });
                }
                // Dense per-step index, exact t outranking step-free entries.
                let mut index = Vec::with_capacity(self.horizon * self.total_actions);
                for t in 1..=self.horizon {
                    for xi in 0..self.n() {
                        for ui in 0..self.actions[xi].len() {
                            let slot = self.action_offset[xi] + ui;
                            let rid = by_key
                                .get(&(Some(t), slot))
                                .or_else(|| by_key.get(&(None, slot)))
                                .copied()
                                .ok_or_else(|| ModelError::MissingKernelEntry {
                                    t,
                                    x: self.labels[xi],
                                    u: self.actions[xi][ui].label.clone(),
                                })?;
                            index.push(rid);
                        }
                    }
                }
                // Re-order: index above pushed in (t, xi, ui) order but slots
                // interleave states; rebuild addressed by slot.
                let mut dense = vec![usize::MAX; self.horizon * self.total_actions];
                let mut it = index.into_iter();
                for t in 1..=self.horizon {
                    for xi in 0..self.n() {
                        for ui in 0..self.actions[xi].len() {
                            let slot = self.action_offset[xi] + ui;
                            dense[(t - 1) * self.total_actions + slot] = it.next().unwrap();
                        }
                    }
                }
                Ok(Kernel::Rate { rows, index: dense })
            }
            KernelModeDoc::Tabulated => {
                let mut by_slot: Vec<Vec<TabEntry>> = vec![Vec::new(); self.total_actions];
                let mut seen: HashSet<(Option<u64>, Option<usize>, usize)> = HashSet::new();
                for e in &doc.entries {
                    let xi = self.state(e.x, "kernel entry")?;
                    let ui = self.action(xi, &e.u, "kernel entry")?;
                    self.check_step(e.t)?;
                    for (field, present) in [
                        ("terms", e.terms.is_some()),
                        ("remainder", e.remainder.is_some()),
                    ] {
                        if present {
                            return Err(ModelError::KernelFieldMismatch {
                                mode: "tabulated",
                                x: e.x,
                                u: e.u.clone(),
                                field,
                            });
                        }
                    }
                    let row_doc = e.row.as_ref().ok_or(ModelError::KernelFieldMismatch {
                        mode: "tabulated",
                        x: e.x,
                        u: e.u.clone(),
                        field: "no row",
                    })?;
                    if let Some(ek) = e.eps {
                        if !(ek.is_finite() && ek > 0.0) {
                            return Err(ModelError::InvalidEps(ek));
                        }
                    }
                    let mut probs = vec![0.0f64; self.n()];
                    let mut listed = HashSet::new();
                    for pd in row_doc {
                        let z = self.state(pd.z, "tabulated row")?;
                        if !listed.insert(z) {
                            return Err(ModelError::DuplicateKernelEntry {
                                t: e.t.map_or_else(|| "any".into(), |t| t.to_string()),
                                x: e.x,
                                u: e.u.clone(),
                                eps: format!("duplicate target z={}", pd.z),
                            });
                        }
                        if !pd.p.is_finite() {
                            return Err(ModelError::NonFinite(format!(
                                "tabulated probability at (x={}, u={}, z={})",
                                e.x, e.u, pd.z
                            )));
                        }
                        probs[z] = pd.p;
                    }
                    let slot = self.action_offset[xi] + ui;
                    if !seen.insert((e.eps.map(f64::to_bits), e.t, slot)) {
                        return Err(ModelError::DuplicateKernelEntry {
                            t: e.t.map_or_else(|| "any".into(), |t| t.to_string()),
                            x: e.x,
                            u: e.u.clone(),
                            eps: e.eps.map_or_else(|| "any".into(), |v| v.to_string()),
                        });
                    }
                    by_slot[slot].push(TabEntry {
                        eps: e.eps,
                        t: e.t,
                        probs,
                    });
                }
                // Coverage: every (t, x, u) must have at least one t-matching entry.
                for t in 1..=self.horizon {
                    for xi in 0..self.n() {
                        for ui in 0..self.actions[xi].len() {
                            let slot = self.action_offset[xi] + ui;
                            if !by_slot[slot]
                                .iter()
                                .any(|e| e.t.map_or(true, |et| et == t))
                            {
                                return Err(ModelError::MissingKernelEntry {
                                    t,
                                    x: self.labels[xi],
                                    u: self.actions[xi][ui].label.clone(),
                                });
                            }
                        }
                    }
                }
                Ok(Kernel::Tabulated { by_slot })
            }
        }
    }

    fn resolve_costs(
        &self,
        costs: Option<&CostsDoc>,
        discounting: Option<&DiscountingDoc>,
    ) -> Result<Costs, ModelError> {
        match (costs, discounting) {
            (Some(_), Some(_)) | (None, None) => Err(ModelError::CostFormAmbiguous),
            (Some(c), None) => {
                let te = self.horizon;
                let mut running = vec![f64::NAN; te * te * self.total_actions];
                for e in &c.running {
                    let key = || format!("f(tau={}, t={}, x={}, u={})", e.tau, e.t, e.x, e.u);
                    if e.tau < 1 || e.tau > te || e.t < 1 || e.t > te {
                        return Err(ModelError::CostIndexOutOfRange(key()));
                    }
                    let xi = self.state(e.x, "running cost")?;
                    let ui = self.action(xi, &e.u, "running cost")?;
                    if !e.value.is_finite() {
                        return Err(ModelError::NonFinite(key()));
                    }
                    let idx = ((e.tau - 1) * te + (e.t - 1)) * self.total_actions
                        + self.action_offset[xi]
                        + ui;
                    if !running[idx].is_nan() {
                        return Err(ModelError::DuplicateCost(key()));
                    }
                    running[idx] = e.value;
                }
                let mut terminal = vec![f64::NAN; te * self.n()];
                for e in &c.terminal {
                    let key = || format!("g(tau={}, x={})", e.tau, e.x);
                    if e.tau < 1 || e.tau > te {
                        return Err(ModelError::CostIndexOutOfRange(key()));
                    }
                    let xi = self.state(e.x, "terminal cost")?;
                    if !e.value.is_finite() {
                        return Err(ModelError::NonFinite(key()));
                    }
                    let idx = (e.tau - 1) * self.n() + xi;
                    if !terminal[idx].is_nan() {
                        return Err(ModelError::DuplicateCost(key()));
                    }
                    terminal[idx] = e.value;
                }
                self.check_cost_completeness(&running, &terminal, te)?;
                Ok(Costs::Explicit { running, terminal })
            }
            (None, Some(d)) => {
                if d.form != "exponential" {
                    return Err(ModelError::UnknownDiscountingForm(d.form.clone()));
                }
                if !(d.lambda.is_finite() && d.lambda > 0.0 && d.lambda < 1.0) {
                    return Err(ModelError::LambdaOutOfRange(d.lambda));
                }
                let te = self.horizon;
                let mut base_running = vec![f64::NAN; te * self.total_actions];
                for e in &d.base_cost.running {
                    let key = || format!("base c(t={}, x={}, u={})", e.t, e.x, e.u);
                    if e.t < 1 || e.t > te {
                        return Err(ModelError::CostIndexOutOfRange(key()));
                    }
                    let xi = self.state(e.x, "base running cost")?;
                    let ui = self.action(xi, &e.u, "base running cost")?;
                    if !e.value.is_finite() {
                        return Err(ModelError::NonFinite(key()));
                    }
                    let idx = (e.t - 1) * self.total_actions + self.action_offset[xi] + ui;
                    if !base_running[idx].is_nan() {
                        return Err(ModelError::DuplicateCost(key()));
                    }
                    base_running[idx] = e.value;
                }
                let mut base_terminal = vec![f64::NAN; self.n()];
                for e in &d.base_cost.terminal {
                    let key = || format!("base g(x={})", e.x);
                    let xi = self.state(e.x, "base terminal cost")?;
                    if !e.value.is_finite() {
                        return Err(ModelError::NonFinite(key()));
                    }
                    if !base_terminal[xi].is_nan() {
                        return Err(ModelError::DuplicateCost(key()));
                    }
                    base_terminal[xi] = e.value;
                }
                for t in 1..=te {
                    for xi in 0..self.n() {
                        for ui in 0..self.actions[xi].len() {
                            let idx =
                                (t - 1) * self.total_actions + self.action_offset[xi] + ui;
                            if base_running[idx].is_nan() {
                                return Err(ModelError::MissingCost(format!(
                                    "base c(t={t}, x={}, u={})",
                                    self.labels[xi], self.actions[xi][ui].label
                                )));
                            }
                        }
                    }
                }
                for xi in 0..self.n() {
                    if base_terminal[xi].is_nan() {
                        return Err(ModelError::MissingCost(format!(
                            "base g(x={})",
                            self.labels[xi]
                        )));
                    }
                }
                Ok(Costs::Discounted {
                    lambda: d.lambda,
                    base_running,
                    base_terminal,
                })
            }
        }
    }

    fn check_cost_completeness(
        &self,
        running: &[f64],
        terminal: &[f64],
        te: usize,
    ) -> Result<(), ModelError> {
        for tau in 1..=te {
            for t in 1..=te {
                for xi in 0..self.n() {
                    for ui in 0..self.actions[xi].len() {
                        let idx = ((tau - 1) * te + (t - 1)) * self.total_actions
                            + self.action_offset[xi]
                            + ui;
                        if running[idx].is_nan() {
                            return Err(ModelError::MissingCost(format!(
                                "f(tau={tau}, t={t}, x={}, u={})",
                                self.labels[xi], self.actions[xi][ui].label
                            )));
                        }
                    }
                }
            }
            for xi in 0..self.n() {
                if terminal[(tau - 1) * self.n() + xi].is_nan() {
                    return Err(ModelError::MissingCost(format!(
                        "g(tau={tau}, x={})",
                        self.labels[xi]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Explicit rate rows keyed (t-or-any, slot) -> dense row with +inf gaps.
    #[allow(clippy::type_complexity)]
    fn resolve_explicit_rates(
        &self,
        rates: Option<&[RateRowDoc]>,
    ) -> Result<HashMap<(Option<usize>, usize), Vec<f64>>, ModelError> {
        let mut out = HashMap::new();
        let Some(rates) = rates else {
            return Ok(out);
        };
        for r in rates {
            let xi = self.state(r.x, "rate row")?;
            let ui = self.action(xi, &r.u, "rate row")?;
            self.check_step(r.t)?;
            let mut row = vec![f64::INFINITY; self.n()];
            let mut listed = HashSet::new();
            for e in &r.entries {
                let z = self.state(e.z, "rate entry")?;
                if !listed.insert(z) {
                    return Err(ModelError::DuplicateRateRow {
                        t: r.t.map_or_else(|| "any".into(), |t| t.to_string()),
                        x: r.x,
                        u: r.u.clone(),
                    });
                }
                let v = e.value.0;
                if v.is_nan() || v < 0.0 {
                    return Err(ModelError::NegativeRate {
                        value: v,
                        x: r.x,
                        u: r.u.clone(),
                        z: e.z,
                    });
                }
                row[z] = v;
            }
            let slot = self.action_offset[xi] + ui;
            if out.insert((r.t, slot), row).is_some() {
                return Err(ModelError::DuplicateRateRow {
                    t: r.t.map_or_else(|| "any".into(), |t| t.to_string()),
                    x: r.x,
                    u: r.u.clone(),
                });
            }
        }
        Ok(out)
    }

    /// Rate rows for every (t, x, u): explicit table first, then derivation.
    fn precompute_rate_rows(
        &self,
        kernel: &Kernel,
        explicit: &HashMap<(Option<usize>, usize), Vec<f64>>,
    ) -> Vec<Option<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.horizon * self.total_actions);
        for t in 1..=self.horizon {
            for xi in 0..self.n() {
                for ui in 0..self.actions[xi].len() {
                    let slot = self.action_offset[xi] + ui;
                    let row = explicit
                        .get(&(Some(t), slot))
                        .or_else(|| explicit.get(&(None, slot)))
                        .cloned()
                        .or_else(|| self.derive_rate_row(kernel, t, slot));
                    out.push(row);
                }
            }
        }
        // Positions were pushed (t, xi, ui)-ordered = (t, slot)-ordered since
        // slots are themselves (xi, ui)-ordered; nothing to permute.
        out
    }

    fn derive_rate_row(&self, kernel: &Kernel, t: usize, slot: usize) -> Option<Vec<f64>> {
        match kernel {
            Kernel::Rate { rows, index } => {
                let row = &rows[index[(t - 1) * self.total_actions + slot]];
                let mut out = vec![f64::INFINITY; self.n()];
                let mut zero_rate_mass = 0.0f64;
                for term in &row.terms {
                    if term.coeff > 0.0 && term.rate < out[term.z] {
                        out[term.z] = term.rate;
                    }
                    if term.rate == 0.0 {
                        zero_rate_mass += term.coeff;
                    }
                }
                let remainder_limit = 1.0 - zero_rate_mass;
                if remainder_limit > STOCHASTIC_TOL {
                    out[row.remainder] = 0.0;
                } else if out[row.remainder].is_infinite() {
                    // Limiting remainder mass vanishes and nothing else pins
                    // the rate down: refuse to guess.
                    return None;
                }
                Some(out)
            }
            Kernel::Tabulated { by_slot } => {
                let entries = &by_slot[slot];
                // Only an eps-independent row admits a derived rate: 0 on the
                // support, +inf off it.
                let default = entries
                    .iter()
                    .filter(|e| e.eps.is_none() && e.t.map_or(true, |et| et == t))
                    .max_by_key(|e| e.t.is_some())?;
                if entries
                    .iter()
                    .any(|e| e.eps.is_some() && e.t.map_or(true, |et| et == t))
                {
                    return None;
                }
                Some(
                    default
                        .probs
                        .iter()
                        .map(|&p| if p > 0.0 { 0.0 } else { f64::INFINITY })
                        .collect(),
                )
            }
        }
    }
}

// ── Assumption validation ───────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// The outcome of [`validate_assumptions`]: one entry per standing assumption,
/// in a fixed order, with deterministic details. Identical inputs produce
/// byte-identical reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<ValidationCheck>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn to_json_string(&self) -> String {
        to_canonical_json(self)
    }
}

/// Checks the standing assumptions against a grid of eps values. Mathematical
/// violations come back as failed checks, never as errors; conditions that are
/// vacuous on a finite truncation are reported as such rather than silently
/// passing.
pub fn validate_assumptions(model: &ModelSpec, grid: &[f64]) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, status: CheckStatus, detail: String| {
        checks.push(ValidationCheck {
            name: name.into(),
            status,
            detail,
        });
    };

    // Lyapunov positivity.
    let bad_v: Vec<String> = model
        .state_labels()
        .iter()
        .zip(model.lyapunov())
        .filter(|(_, &v)| v <= 0.0)
        .map(|(l, v)| format!("V({l}) = {v}"))
        .collect();
    if bad_v.is_empty() {
        push(
            "lyapunov-positive",
            CheckStatus::Pass,
            format!("all {} weights positive", model.n_states()),
        );
    } else {
        push("lyapunov-positive", CheckStatus::Fail, bad_v.join("; "));
    }

    // Action sets (guaranteed non-empty at ingestion; recorded for the report).
    push(
        "actions-nonempty",
        CheckStatus::Pass,
        "every state has at least one action (enforced at ingestion)".into(),
    );

    // Stochasticity across the grid.
    if grid.is_empty() {
        push(
            "kernel-stochastic-on-grid",
            CheckStatus::NotApplicable,
            "no grid supplied".into(),
        );
    } else {
        let mut failures = Vec::new();
        for &eps in grid {
            if let Err(e) = model.kernel_valid_at(eps) {
                failures.push(e.to_string());
            }
        }
        if failures.is_empty() {
            push(
                "kernel-stochastic-on-grid",
                CheckStatus::Pass,
                format!("all rows stochastic at {} grid points", grid.len()),
            );
        } else {
            let shown = failures.iter().take(4).cloned().collect::<Vec<_>>().join("; ");
            push(
                "kernel-stochastic-on-grid",
                CheckStatus::Fail,
                format!("{} grid points fail: {shown}", failures.len()),
            );
        }
    }

    // Rate availability and zero minimum.
    let mut unavailable = Vec::new();
    let mut nonzero_min = Vec::new();
    for t in 1..=model.horizon() {
        for xi in 0..model.n_states() {
            for ui in 0..model.n_actions(xi) {
                match model.rate_row(t, xi, ui) {
                    Err(e) => unavailable.push(e.to_string()),
                    Ok(row) => {
                        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
                        if !(min.abs() <= 1e-12) {
                            nonzero_min.push(format!(
                                "inf_z I(z; t={t}, x={}, u={}) = {min}",
                                model.state_label(xi),
                                model.action_label(xi, ui)
                            ));
                        }
                    }
                }
            }
        }
    }
    if unavailable.is_empty() {
        push(
            "rate-function-available",
            CheckStatus::Pass,
            "every (t, x, u) has a rate row".into(),
        );
    } else {
        push(
            "rate-function-available",
            CheckStatus::Fail,
            unavailable.into_iter().take(4).collect::<Vec<_>>().join("; "),
        );
    }
    if nonzero_min.is_empty() {
        push(
            "rate-zero-minimum",
            CheckStatus::Pass,
            "inf_z I = 0 for every available row".into(),
        );
    } else {
        push(
            "rate-zero-minimum",
            CheckStatus::Fail,
            nonzero_min.into_iter().take(4).collect::<Vec<_>>().join("; "),
        );
    }

    // Costs were checked finite and complete at ingestion.
    push(
        "costs-finite-and-complete",
        CheckStatus::Pass,
        "enforced at ingestion".into(),
    );

    match &model.costs {
        Costs::Discounted { lambda, .. } => push(
            "discount-factor-in-range",
            CheckStatus::Pass,
            format!("lambda = {lambda} lies in (0,1)"),
        ),
        Costs::Explicit { .. } => push(
            "discount-factor-in-range",
            CheckStatus::NotApplicable,
            "explicit cost tables, no discounting".into(),
        ),
    }

    // On a finite truncation the growth and continuity conditions required on
    // unbounded spaces hold trivially; say so instead of silently passing.
    push(
        "growth-and-continuity-bounds",
        CheckStatus::NotApplicable,
        "finite state space: the V-growth and continuity conditions are vacuous on this truncation"
            .into(),
    );

    let passed = checks.iter().all(|c| c.status != CheckStatus::Fail);
    ValidationReport {
        passed,
        checks,
        notes: model.notes().to_vec(),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// A two-state tabulated model used across the module tests.
    pub(crate) fn tiny_doc() -> serde_json::Value {
        serde_json::json!({
            "horizon": 2,
            "states": [
                {"label": 1, "lyapunov": 1.0},
                {"label": 2, "lyapunov": 2.0}
            ],
            "actions": {"1": ["a", "b"], "2": ["a"]},
            "kernel": {"mode": "tabulated", "entries": [
                {"x": 1, "u": "a", "row": [{"z": 1, "p": 0.5}, {"z": 2, "p": 0.5}]},
                {"x": 1, "u": "b", "row": [{"z": 2, "p": 1.0}]},
                {"x": 2, "u": "a", "row": [{"z": 1, "p": 0.25}, {"z": 2, "p": 0.75}]}
            ]},
            "costs": {
                "running": [
                    {"tau": 1, "t": 1, "x": 1, "u": "a", "value": 1.0},
                    {"tau": 1, "t": 1, "x": 1, "u": "b", "value": 2.0},
                    {"tau": 1, "t": 1, "x": 2, "u": "a", "value": 0.0},
                    {"tau": 1, "t": 2, "x": 1, "u": "a", "value": 1.0},
                    {"tau": 1, "t": 2, "x": 1, "u": "b", "value": 2.0},
                    {"tau": 1, "t": 2, "x": 2, "u": "a", "value": 0.0},
                    {"tau": 2, "t": 1, "x": 1, "u": "a", "value": 1.5},
                    {"tau": 2, "t": 1, "x": 1, "u": "b", "value": 2.5},
                    {"tau": 2, "t": 1, "x": 2, "u": "a", "value": 0.5},
                    {"tau": 2, "t": 2, "x": 1, "u": "a", "value": 1.5},
                    {"tau": 2, "t": 2, "x": 1, "u": "b", "value": 2.5},
                    {"tau": 2, "t": 2, "x": 2, "u": "a", "value": 0.5}
                ],
                "terminal": [
                    {"tau": 1, "x": 1, "value": 0.0},
                    {"tau": 1, "x": 2, "value": 3.0},
                    {"tau": 2, "x": 1, "value": 1.0},
                    {"tau": 2, "x": 2, "value": 4.0}
                ]
            }
        })
    }

    pub(crate) fn tiny_model() -> ModelSpec {
        ModelSpec::from_json_str(&tiny_doc().to_string()).unwrap()
    }

    #[test]
    fn parses_and_indexes_a_tabulated_model() {
        let m = tiny_model();
        assert_eq!(m.horizon(), 2);
        assert_eq!(m.n_states(), 2);
        assert_eq!(m.n_actions(0), 2);
        assert_eq!(m.n_actions(1), 1);
        assert_eq!(m.state_idx(2), Some(1));
        assert_eq!(m.action_idx(0, "b"), Some(1));
        assert_eq!(m.running_cost(2, 1, 0, 1), 2.5);
        assert_eq!(m.terminal_cost(2, 1), 4.0);
        let row = m.kernel_at(0.3, 1, 0, 0).unwrap();
        assert_eq!(row, vec![0.5, 0.5]);
    }

    #[test]
    fn emission_round_trips_and_is_idempotent() {
        let m = tiny_model();
        let json = m.to_json_string();
        let m2 = ModelSpec::from_json_str(&json).unwrap();
        assert_eq!(m, m2);
        assert_eq!(json, m2.to_json_string());
    }

    #[test]
    fn structural_defects_are_hard_errors() {
        let mut doc = tiny_doc();
        doc["states"] = serde_json::json!([]);
        assert!(matches!(
            ModelSpec::from_json_str(&doc.to_string()),
            Err(ModelError::EmptyStates)
        ));

        let mut doc = tiny_doc();
        doc["states"][1]["label"] = serde_json::json!(1);
        assert!(matches!(
            ModelSpec::from_json_str(&doc.to_string()),
            Err(ModelError::DuplicateState(1))
        ));

        let mut doc = tiny_doc();
        doc["horizon"] = serde_json::json!(0);
        assert!(matches!(
            ModelSpec::from_json_str(&doc.to_string()),
            Err(ModelError::HorizonZero)
        ));

        let mut doc = tiny_doc();
        doc["costs"]["running"][0]["u"] = serde_json::json!("zz");
        assert!(matches!(
            ModelSpec::from_json_str(&doc.to_string()),
            Err(ModelError::UnknownAction { .. })
        ));

        // Dropping one running entry leaves a hole in the table.
        let mut doc = tiny_doc();
        doc["costs"]["running"].as_array_mut().unwrap().pop();
        assert!(matches!(
            ModelSpec::from_json_str(&doc.to_string()),
            Err(ModelError::MissingCost(_))
        ));
    }

    #[test]
    fn rate_mode_row_assembles_signed_terms_and_remainder() {
        // Mirrors a regime row: q(2) = 0.3 - e^{-1/eps}, q(3) = 2 e^{-1/eps},
        // remainder q(1) = 0.7 - e^{-1/eps}.
        let doc = serde_json::json!({
            "horizon": 1,
            "states": [
                {"label": 1, "lyapunov": 1.0},
                {"label": 2, "lyapunov": 1.0},
                {"label": 3, "lyapunov": 1.0}
            ],
            "actions": {"1": ["u"], "2": ["u"], "3": ["u"]},
            "kernel": {"mode": "rate-parameterized", "entries": [
                {"x": 1, "u": "u", "terms": [
                    {"z": 2, "coeff": 0.3, "rate": 0.0},
                    {"z": 2, "coeff": -1.0, "rate": 1.0},
                    {"z": 3, "coeff": 2.0, "rate": 1.0}
                ], "remainder": 1},
                {"x": 2, "u": "u", "terms": [], "remainder": 2},
                {"x": 3, "u": "u", "terms": [], "remainder": 3}
            ]},
            "costs": {
                "running": [
                    {"tau": 1, "t": 1, "x": 1, "u": "u", "value": 0.0},
                    {"tau": 1, "t": 1, "x": 2, "u": "u", "value": 0.0},
                    {"tau": 1, "t": 1, "x": 3, "u": "u", "value": 0.0}
                ],
                "terminal": [
                    {"tau": 1, "x": 1, "value": 0.0},
                    {"tau": 1, "x": 2, "value": 0.0},
                    {"tau": 1, "x": 3, "value": 0.0}
                ]
            }
        });
        let m = ModelSpec::from_json_str(&doc.to_string()).unwrap();

        // Frozen from the closed form at eps = 0.5: e^{-2} = 0.1353352832366127.
        let row = m.kernel_at(0.5, 1, 0, 0).unwrap();
        assert!((row[0] - 0.5646647167633873).abs() < 1e-15);
        assert!((row[1] - 0.1646647167633873).abs() < 1e-15);
        assert!((row[2] - 0.2706705664732254).abs() < 1e-15);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);

        // At eps = 5, e^{-0.2} > 0.3 drives q(2) negative.
        let err = m.kernel_at(5.0, 1, 0, 0).unwrap_err();
        assert!(matches!(err, ModelError::NotStochastic { eps, .. } if eps == 5.0));

        // Derived rates: zero on states 1 and 2, one on the rare state.
        assert_eq!(m.rate_row(1, 0, 0).unwrap(), &[0.0, 0.0, 1.0]);

        // Degenerate rows are point masses with rate zero at the remainder.
        assert_eq!(m.kernel_at(0.5, 1, 1, 0).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(m.rate_row(1, 1, 0).unwrap(), &[f64::INFINITY, 0.0, f64::INFINITY]);
    }

    #[test]
    fn discounted_costs_expand_exponentially() {
        let doc = serde_json::json!({
            "horizon": 2,
            "states": [{"label": 0, "lyapunov": 1.0}],
            "actions": {"0": ["u"]},
            "kernel": {"mode": "tabulated", "entries": [
                {"x": 0, "u": "u", "row": [{"z": 0, "p": 1.0}]}
            ]},
            "discounting": {"form": "exponential", "lambda": 0.5, "base_cost": {
                "running": [
                    {"t": 1, "x": 0, "u": "u", "value": 1.0},
                    {"t": 2, "x": 0, "u": "u", "value": 1.0}
                ],
                "terminal": [{"x": 0, "value": 1.0}]
            }}
        });
        let m = ModelSpec::from_json_str(&doc.to_string()).unwrap();
        // tau = t collapses to the base.
        assert_eq!(m.running_cost(1, 1, 0, 0), 1.0);
        assert_eq!(m.running_cost(2, 2, 0, 0), 1.0);
        // T = 2, lambda = 0.5, base 1: f_{1,2} = 0.5.
        assert_eq!(m.running_cost(1, 2, 0, 0), 0.5);
        // Anchors after the current step scale up: lambda^(1-2) = 2.
        assert_eq!(m.running_cost(2, 1, 0, 0), 2.0);
        // g_tau = lambda^(T+1-tau).
        assert_eq!(m.terminal_cost(1, 0), 0.25);
        assert_eq!(m.terminal_cost(2, 0), 0.5);
        assert!(!m.costs_tau_independent());
    }

    #[test]
    fn lambda_outside_unit_interval_is_rejected() {
        let mk = |lambda: f64| {
            let mut doc = serde_json::json!({
                "horizon": 1,
                "states": [{"label": 0, "lyapunov": 1.0}],
                "actions": {"0": ["u"]},
                "kernel": {"mode": "tabulated", "entries": [
                    {"x": 0, "u": "u", "row": [{"z": 0, "p": 1.0}]}
                ]},
                "discounting": {"form": "exponential", "lambda": 0.0, "base_cost": {
                    "running": [{"t": 1, "x": 0, "u": "u", "value": 1.0}],
                    "terminal": [{"x": 0, "value": 1.0}]
                }}
            });
            doc["discounting"]["lambda"] = serde_json::json!(lambda);
            ModelSpec::from_json_str(&doc.to_string())
        };
        assert!(matches!(mk(1.0), Err(ModelError::LambdaOutOfRange(_))));
        assert!(matches!(mk(0.0), Err(ModelError::LambdaOutOfRange(_))));
        // The open boundary is strict but 1 - 1e-12 is inside.
        assert!(mk(1.0 - 1e-12).is_ok());
    }

    #[test]
    fn validation_reports_defects_instead_of_raising() {
        // A non-stochastic tabulated row and a non-positive weight.
        let mut doc = tiny_doc();
        doc["states"][0]["lyapunov"] = serde_json::json!(0.0);
        doc["kernel"]["entries"][0]["row"] = serde_json::json!([
            {"z": 1, "p": 0.5}, {"z": 2, "p": 0.6}
        ]);
        let m = ModelSpec::from_json_str(&doc.to_string()).unwrap();
        let report = validate_assumptions(&m, &[0.5, 0.25]);
        assert!(!report.passed);
        let get = |name: &str| {
            report
                .checks
                .iter()
                .find(|c| c.name == name)
                .unwrap_or_else(|| panic!("missing check {name}"))
        };
        assert_eq!(get("lyapunov-positive").status, CheckStatus::Fail);
        assert_eq!(get("kernel-stochastic-on-grid").status, CheckStatus::Fail);
        assert_eq!(
            get("growth-and-continuity-bounds").status,
            CheckStatus::NotApplicable
        );

        // Determinism: byte-identical reports on repeated runs.
        let again = validate_assumptions(&m, &[0.5, 0.25]);
        assert_eq!(report.to_json_string(), again.to_json_string());
    }

    #[test]
    fn default_grid_halves_until_the_kernel_is_stochastic() {
        // The regime-style row above is invalid at eps = 1 (e^{-1} > 0.3)
        // and valid at 0.5, so the grid starts there.
        let doc = serde_json::json!({
            "horizon": 1,
            "states": [{"label": 1, "lyapunov": 1.0}, {"label": 2, "lyapunov": 1.0}],
            "actions": {"1": ["u"], "2": ["u"]},
            "kernel": {"mode": "rate-parameterized", "entries": [
                {"x": 1, "u": "u", "terms": [
                    {"z": 2, "coeff": 0.3, "rate": 0.0},
                    {"z": 2, "coeff": -1.0, "rate": 1.0}
                ], "remainder": 1},
                {"x": 2, "u": "u", "terms": [], "remainder": 2}
            ]},
            "costs": {
                "running": [
                    {"tau": 1, "t": 1, "x": 1, "u": "u", "value": 0.0},
                    {"tau": 1, "t": 1, "x": 2, "u": "u", "value": 0.0}
                ],
                "terminal": [
                    {"tau": 1, "x": 1, "value": 0.0},
                    {"tau": 1, "x": 2, "value": 0.0}
                ]
            }
        });
        let m = ModelSpec::from_json_str(&doc.to_string()).unwrap();
        let grid = m.default_grid().unwrap();
        assert_eq!(grid.len(), DEFAULT_GRID_POINTS);
        assert_eq!(grid[0], 0.5);
        assert_eq!(grid[11], 0.5 * 2.0f64.powi(-11));
    }

    #[test]
    fn tabulated_eps_rows_outrank_defaults_and_form_the_grid() {
        let mut doc = tiny_doc();
        doc["kernel"]["entries"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!(
                {"eps": 0.25, "x": 1, "u": "a", "row": [{"z": 1, "p": 0.9}, {"z": 2, "p": 0.1}]}
            ));
        let m = ModelSpec::from_json_str(&doc.to_string()).unwrap();
        assert_eq!(m.kernel_at(0.25, 1, 0, 0).unwrap(), vec![0.9, 0.1]);
        assert_eq!(m.kernel_at(0.1, 1, 0, 0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(m.default_grid().unwrap(), vec![0.25]);
        // The eps-varying slot loses its derived rate; the others keep theirs.
        assert!(m.rate_row(1, 0, 0).is_err());
        assert_eq!(m.rate_row(1, 0, 1).unwrap(), &[f64::INFINITY, 0.0]);
    }
}
