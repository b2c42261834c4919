//! Reference model builders: a truncated drift walk with Gaussian-rate
//! increments and a three-state regime model with a rare intervention state.
//!
//! Both families come with a canonical base cost and several ways to anchor
//! it. Exponential discounting of the base, f_{tau,t}(x, u) =
//! lambda^(t-tau) * c_t(x, u), is the standard anchor-dependent choice: each
//! step discounts from its own clock, which is exactly the non-commitment
//! setup the solver exists for. The anchor-independent variant applies the
//! base identically at every anchor and recovers a classical control problem
//! for comparison runs.
//!
//! # Drift walk
//!
//! States are the integers -W..=W with V(x) = x^2 + 1, actions are a drift of
//! -1 or +1, and the next state is x + u + d where the increment d carries
//! probability kappa * exp(-d^2/eps). Increments are truncated at |d| <= D
//! with D chosen so the first omitted weight is below 1e-18 at eps_max, and
//! targets past the window fold onto the nearest boundary state (the folded
//! target keeps the smallest rate among its sources, so inf_z I stays 0).
//! The remainder state x + u, clamped to the window, absorbs the untouched
//! mass and has rate 0. The canonical base cost is |x| at every step and at
//! the end.
//!
//! # Regime model
//!
//! Three states: 1 (calm), 2 (stressed), 3 (crisis). From any state i, action
//! u yields
//!
//! ```text
//! q(2; i, u) = p_i - exp(-lam(i, u)/eps)
//! q(3; i, u) = 2 exp(-lam(i, u)/eps)
//! q(1; i, u) = 1 - p_i - exp(-lam(i, u)/eps)
//! ```
//!
//! so the crisis state is exponentially rare with rate lam(i, u), and
//! lam = +inf removes it entirely. By default action 1 (intervene) exposes
//! rate 1 from the calm and stressed states, action 0 cannot reach the
//! crisis state from them, and the crisis state itself relaxes with rate 1
//! under either action. A config may set lam(i, u) = 0; the row then carries
//! probability 2 at the crisis state, which the build-time stochasticity
//! check rejects with a hard error naming the row. Rows are stochastic iff
//! exp(-lam/eps) <= p_i, so defaults (p_i = 0.3, lam = 1) are valid up to
//! eps = 1/ln(10/3), about 0.83; builds are checked at the configured
//! eps_max. The canonical base cost makes intervention cheap when stressed
//! (0.2 against 1.0) and pure overhead when calm (0.5 against 0).

use crate::model::{
    BaseCostDoc, BaseRunningDoc, BaseTerminalDoc, CostsDoc, DiscountingDoc, KernelDoc,
    KernelEntryDoc, KernelModeDoc, ModelDoc, ModelError, ModelSpec, RunningCostDoc, StateDoc,
    TermDoc, TerminalCostDoc,
};
use crate::model::{ActionDoc, ActionsDoc};

/// How a builder anchors its example's canonical base cost, or replaces it.
#[derive(Clone, Debug, PartialEq)]
pub enum CostFamily {
    /// f_{tau,t} = lambda^(t-tau) * c_t, g_tau = lambda^(T+1-tau) * g, with
    /// the example's canonical base c, g.
    DiscountedCanonical { lambda: f64 },
    /// The canonical base applied identically at every anchor; the resulting
    /// model is anchor-independent and classical.
    CanonicalTauIndependent,
    /// Exponential discounting of explicit base tables.
    Discounted {
        lambda: f64,
        running: Vec<BaseRunningDoc>,
        terminal: Vec<BaseTerminalDoc>,
    },
    /// Full anchored tables, one entry per (tau, t, x, u) and (tau, x).
    Explicit {
        running: Vec<RunningCostDoc>,
        terminal: Vec<TerminalCostDoc>,
    },
}

/// Wraps explicit base tables as an exponentially discounted cost family,
/// rejecting factors outside the open unit interval.
pub fn build_discounted_costs(
    lambda: f64,
    running: Vec<BaseRunningDoc>,
    terminal: Vec<BaseTerminalDoc>,
) -> Result<CostFamily, ModelError> {
    if !(lambda.is_finite() && lambda > 0.0 && lambda < 1.0) {
        return Err(ModelError::LambdaOutOfRange(lambda));
    }
    Ok(CostFamily::Discounted {
        lambda,
        running,
        terminal,
    })
}

/// Expands a cost family against a concrete state/action/horizon shape into
/// the document's cost block: (costs, discounting), exactly one Some.
#[allow(clippy::type_complexity)]
fn expand_costs(
    family: &CostFamily,
    horizon: usize,
    states: &[i64],
    actions: &dyn Fn(i64) -> Vec<String>,
    base_c: &dyn Fn(i64, &str) -> f64,
    base_g: &dyn Fn(i64) -> f64,
) -> Result<(Option<CostsDoc>, Option<DiscountingDoc>), ModelError> {
    let canonical_base = || -> (Vec<BaseRunningDoc>, Vec<BaseTerminalDoc>) {
        let mut running = Vec::new();
        for t in 1..=horizon {
            for &x in states {
                for u in actions(x) {
                    running.push(BaseRunningDoc {
                        t,
                        x,
                        u: u.clone(),
                        value: base_c(x, &u),
                    });
                }
            }
        }
        let terminal = states
            .iter()
            .map(|&x| BaseTerminalDoc {
                x,
                value: base_g(x),
            })
            .collect();
        (running, terminal)
    };
    match family {
        CostFamily::DiscountedCanonical { lambda } => {
            if !(lambda.is_finite() && *lambda > 0.0 && *lambda < 1.0) {
                return Err(ModelError::LambdaOutOfRange(*lambda));
            }
            let (running, terminal) = canonical_base();
            Ok((
                None,
                Some(DiscountingDoc {
                    form: "exponential".into(),
                    lambda: *lambda,
                    base_cost: BaseCostDoc { running, terminal },
                }),
            ))
        }
        CostFamily::Discounted {
            lambda,
            running,
            terminal,
        } => {
            if !(lambda.is_finite() && *lambda > 0.0 && *lambda < 1.0) {
                return Err(ModelError::LambdaOutOfRange(*lambda));
            }
            Ok((
                None,
                Some(DiscountingDoc {
                    form: "exponential".into(),
                    lambda: *lambda,
                    base_cost: BaseCostDoc {
                        running: running.clone(),
                        terminal: terminal.clone(),
                    },
                }),
            ))
        }
        CostFamily::CanonicalTauIndependent => {
            let (base_running, base_terminal) = canonical_base();
            let mut running = Vec::new();
            let mut terminal = Vec::new();
            for tau in 1..=horizon {
                for e in &base_running {
                    running.push(RunningCostDoc {
                        tau,
                        t: e.t,
                        x: e.x,
                        u: e.u.clone(),
                        value: e.value,
                    });
                }
                for e in &base_terminal {
                    terminal.push(TerminalCostDoc {
                        tau,
                        x: e.x,
                        value: e.value,
                    });
                }
            }
            Ok((Some(CostsDoc { running, terminal }), None))
        }
        CostFamily::Explicit { running, terminal } => Ok((
            Some(CostsDoc {
                running: running.clone(),
                terminal: terminal.clone(),
            }),
            None,
        )),
    }
}

// ── Drift walk ──────────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct Example1Config {
    /// Window half-width; states are -w..=w. Must be at least 2.
    pub w: i64,
    pub horizon: usize,
    /// Increment weight scale; each increment d carries kappa*exp(-d^2/eps).
    pub kappa: f64,
    /// Largest eps the model must be stochastic at; also sets the truncation.
    pub eps_max: f64,
    pub costs: CostFamily,
}

impl Default for Example1Config {
    fn default() -> Self {
        Example1Config {
            w: 5,
            horizon: 3,
            kappa: 0.1,
            eps_max: 0.64,
            costs: CostFamily::DiscountedCanonical { lambda: 0.5 },
        }
    }
}

/// Builds the truncated drift walk. Hard errors on a malformed config or a
/// kernel that is not stochastic at eps_max.
pub fn build_example1(cfg: &Example1Config) -> Result<ModelSpec, ModelError> {
    if cfg.w < 2 {
        return Err(ModelError::BadConfig(format!(
            "window half-width must be at least 2, got {}",
            cfg.w
        )));
    }
    if cfg.horizon < 1 {
        return Err(ModelError::HorizonZero);
    }
    if !(cfg.kappa.is_finite() && cfg.kappa > 0.0) {
        return Err(ModelError::BadConfig(format!(
            "kappa must be a positive finite real, got {}",
            cfg.kappa
        )));
    }
    if !(cfg.eps_max.is_finite() && cfg.eps_max > 0.0) {
        return Err(ModelError::BadConfig(format!(
            "eps_max must be a positive finite real, got {}",
            cfg.eps_max
        )));
    }
    let w = cfg.w;

    // Truncation: keep |d| <= D where kappa*exp(-d^2/eps_max) first drops
    // below 1e-18; increments beyond that are numerically invisible.
    let bound = cfg.eps_max * (cfg.kappa * 1e18).ln();
    let d_max = if bound > 0.0 { bound.sqrt().floor() as i64 } else { 0 };

    let states: Vec<StateDoc> = (-w..=w)
        .map(|x| StateDoc {
            label: x,
            lyapunov: (x * x + 1) as f64,
        })
        .collect();
    let drift_labels = vec!["-1".to_string(), "+1".to_string()];
    let actions = ActionsDoc(
        (-w..=w)
            .map(|x| {
                (
                    x,
                    vec![
                        ActionDoc::Full {
                            label: "-1".into(),
                            payload: Some(vec![-1.0]),
                        },
                        ActionDoc::Full {
                            label: "+1".into(),
                            payload: Some(vec![1.0]),
                        },
                    ],
                )
            })
            .collect(),
    );

    let mut entries = Vec::new();
    for x in -w..=w {
        for (u_label, drift) in [("-1", -1i64), ("+1", 1i64)] {
            let mut terms = Vec::new();
            for d in -d_max..=d_max {
                if d == 0 {
                    continue;
                }
                let z = (x + drift + d).clamp(-w, w);
                terms.push(TermDoc {
                    z,
                    coeff: cfg.kappa,
                    rate: (d * d) as f64,
                });
            }
            entries.push(KernelEntryDoc {
                eps: None,
                t: None,
                x,
                u: u_label.to_string(),
                terms: Some(terms),
                remainder: Some((x + drift).clamp(-w, w)),
                row: None,
            });
        }
    }

    let state_labels: Vec<i64> = (-w..=w).collect();
    let (costs, discounting) = expand_costs(
        &cfg.costs,
        cfg.horizon,
        &state_labels,
        &|_x| drift_labels.clone(),
        &|x, _u| x.abs() as f64,
        &|x| x.abs() as f64,
    )?;

    let doc = ModelDoc {
        horizon: cfg.horizon,
        states,
        actions,
        kernel: KernelDoc {
            mode: KernelModeDoc::Rate,
            entries,
        },
        costs,
        discounting,
        rates: None,
        tolerances: None,
        notes: vec![
            format!(
                "drift walk on -{w}..={w}: next = clamp(x + u + d), increment weight {} * exp(-d^2/eps), truncated at |d| <= {d_max} (first omitted weight below 1e-18 at eps = {})",
                cfg.kappa, cfg.eps_max
            ),
            "out-of-window targets fold onto the nearest boundary state and keep the smallest source rate".into(),
            "V(x) = x^2 + 1".into(),
        ],
    };
    let model = ModelSpec::from_doc(doc)?;
    model.kernel_valid_at(cfg.eps_max)?;
    Ok(model)
}

// ── Regime model ────────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct Example2Config {
    /// Baseline stressed-state probability per state, each in (0, 1).
    pub p: [f64; 3],
    /// Crisis rate lam[i-1][u] for state i and action u in {0, 1};
    /// +inf removes the crisis branch, 0 is accepted here and rejected by the
    /// build-time stochasticity check.
    pub lam: [[f64; 2]; 3],
    pub horizon: usize,
    /// Largest eps the model must be stochastic at.
    pub eps_max: f64,
    pub costs: CostFamily,
}

impl Default for Example2Config {
    fn default() -> Self {
        Example2Config {
            p: [0.3, 0.3, 0.3],
            lam: [[f64::INFINITY, 1.0], [f64::INFINITY, 1.0], [1.0, 1.0]],
            horizon: 3,
            eps_max: 0.64,
            costs: CostFamily::DiscountedCanonical { lambda: 0.5 },
        }
    }
}

/// Canonical base running cost of the regime model: intervening (u = 1) is
/// overhead when calm, a bargain when stressed, and damage control in crisis.
fn regime_base_cost(x: i64, u: &str) -> f64 {
    match (x, u) {
        (1, "0") => 0.0,
        (1, "1") => 0.5,
        (2, "0") => 1.0,
        (2, "1") => 0.2,
        (3, "0") => 5.0,
        (3, "1") => 4.0,
        _ => unreachable!("regime model has states 1..=3 and actions 0, 1"),
    }
}

fn regime_base_terminal(x: i64) -> f64 {
    match x {
        1 => 0.0,
        2 => 1.0,
        3 => 6.0,
        _ => unreachable!("regime model has states 1..=3"),
    }
}

/// Builds the three-state regime model. Hard errors on a malformed config or
/// a kernel that is not stochastic at eps_max (including lam = 0 rows).
pub fn build_example2(cfg: &Example2Config) -> Result<ModelSpec, ModelError> {
    if cfg.horizon < 1 {
        return Err(ModelError::HorizonZero);
    }
    for (i, &p) in cfg.p.iter().enumerate() {
        if !(p.is_finite() && p > 0.0 && p < 1.0) {
            return Err(ModelError::BadConfig(format!(
                "p[{}] must lie strictly inside (0,1), got {p}",
                i + 1
            )));
        }
    }
    for (i, row) in cfg.lam.iter().enumerate() {
        for (u, &lam) in row.iter().enumerate() {
            if lam.is_nan() || lam < 0.0 {
                return Err(ModelError::BadConfig(format!(
                    "lam[{}][{u}] must be a nonnegative rate or +inf, got {lam}",
                    i + 1
                )));
            }
        }
    }
    if !(cfg.eps_max.is_finite() && cfg.eps_max > 0.0) {
        return Err(ModelError::BadConfig(format!(
            "eps_max must be a positive finite real, got {}",
            cfg.eps_max
        )));
    }

    let states: Vec<StateDoc> = (1..=3)
        .map(|x| StateDoc {
            label: x,
            lyapunov: 1.0,
        })
        .collect();
    let actions = ActionsDoc(
        (1..=3)
            .map(|x| {
                (
                    x,
                    vec![ActionDoc::Bare("0".into()), ActionDoc::Bare("1".into())],
                )
            })
            .collect(),
    );

    let mut entries = Vec::new();
    for i in 1..=3i64 {
        for u in 0..=1usize {
            let p = cfg.p[(i - 1) as usize];
            let lam = cfg.lam[(i - 1) as usize][u];
            let mut terms = vec![TermDoc {
                z: 2,
                coeff: p,
                rate: 0.0,
            }];
            if lam.is_finite() {
                terms.push(TermDoc {
                    z: 2,
                    coeff: -1.0,
                    rate: lam,
                });
                terms.push(TermDoc {
                    z: 3,
                    coeff: 2.0,
                    rate: lam,
                });
            }
            entries.push(KernelEntryDoc {
                eps: None,
                t: None,
                x: i,
                u: u.to_string(),
                terms: Some(terms),
                remainder: Some(1),
                row: None,
            });
        }
    }

    let (costs, discounting) = expand_costs(
        &cfg.costs,
        cfg.horizon,
        &[1, 2, 3],
        &|_x| vec!["0".into(), "1".into()],
        &regime_base_cost,
        &regime_base_terminal,
    )?;

    let doc = ModelDoc {
        horizon: cfg.horizon,
        states,
        actions,
        kernel: KernelDoc {
            mode: KernelModeDoc::Rate,
            entries,
        },
        costs,
        discounting,
        rates: None,
        tolerances: None,
        notes: vec![
            format!(
                "regime model: q(2) = p - exp(-lam/eps), q(3) = 2 exp(-lam/eps), remainder state 1; p = {:?}",
                cfg.p
            ),
            "rows are stochastic iff exp(-lam/eps) <= p, so the grid must stay below lam/ln(1/p)"
                .into(),
        ],
    };
    let model = ModelSpec::from_doc(doc)?;
    model.kernel_valid_at(cfg.eps_max)?;
    Ok(model)
}

/// Builds a named default instance; used by the command line to accept
/// builtin names wherever a model path is expected.
pub fn builtin(name: &str) -> Option<Result<ModelSpec, ModelError>> {
    match name {
        "example1" => Some(build_example1(&Example1Config::default())),
        "example2" => Some(build_example2(&Example2Config::default())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_walk_has_the_documented_shape() {
        let m = build_example1(&Example1Config::default()).unwrap();
        assert_eq!(m.horizon(), 3);
        assert_eq!(m.n_states(), 11);
        assert_eq!(m.state_labels()[0], -5);
        assert_eq!(m.state_labels()[10], 5);
        assert_eq!(m.lyapunov()[m.state_idx(3).unwrap()], 10.0);
        assert_eq!(m.n_actions(0), 2);
        assert_eq!(m.action_label(0, 0), "-1");
        assert_eq!(m.action_label(0, 1), "+1");
        assert!(m.is_rate_mode());
        m.kernel_valid_at(0.64).unwrap();

        // Round trip through the canonical file form.
        let json = m.to_json_string();
        let m2 = ModelSpec::from_json_str(&json).unwrap();
        assert_eq!(m, m2);
        assert_eq!(m2.to_json_string(), json);
    }

    #[test]
    fn drift_walk_rates_fold_at_the_boundary() {
        let m = build_example1(&Example1Config::default()).unwrap();
        let xi = m.state_idx(0).unwrap();
        let up = m.action_idx(xi, "+1").unwrap();
        // From x = 0 with drift +1 the remainder is state 1 (rate 0); the
        // increment d reaches z = 1 + d at rate d^2, and d = 5 folds onto the
        // boundary state 5 alongside the direct d = 4, keeping the lower rate.
        let rates = m.rate_row(1, xi, up).unwrap();
        assert_eq!(rates[m.state_idx(1).unwrap()], 0.0);
        assert_eq!(rates[m.state_idx(3).unwrap()], 4.0);
        assert_eq!(rates[m.state_idx(5).unwrap()], 16.0);
        assert_eq!(rates[m.state_idx(-4).unwrap()], 25.0);
        assert_eq!(rates[m.state_idx(-5).unwrap()], f64::INFINITY);

        // From the top state, drifting up keeps the walk at the boundary:
        // the remainder folds to 5 and inf_z I stays 0.
        let xi = m.state_idx(5).unwrap();
        let rates = m.rate_row(1, xi, up).unwrap();
        assert_eq!(rates[m.state_idx(5).unwrap()], 0.0);
        // z = 5 also collects folded increments d = 1..=5 at rate 1; the
        // remainder's rate 0 wins. Downward reach is direct: z = 1 needs
        // d = -5.
        assert_eq!(rates[m.state_idx(1).unwrap()], 25.0);
        assert_eq!(rates[m.state_idx(0).unwrap()], f64::INFINITY);
    }

    #[test]
    fn drift_walk_rows_are_stochastic_across_the_default_grid() {
        let m = build_example1(&Example1Config::default()).unwrap();
        let grid = m.default_grid().unwrap();
        assert_eq!(grid.len(), 12);
        for &eps in &grid {
            m.kernel_valid_at(eps).unwrap();
        }
        // Spot-check a row sums to one with nonnegative mass.
        let row = m.kernel_at(0.64, 2, m.state_idx(-5).unwrap(), 0).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn drift_walk_config_bounds_are_enforced() {
        let bad = Example1Config {
            w: 1,
            ..Default::default()
        };
        assert!(matches!(build_example1(&bad), Err(ModelError::BadConfig(_))));
        let bad = Example1Config {
            kappa: 0.0,
            ..Default::default()
        };
        assert!(matches!(build_example1(&bad), Err(ModelError::BadConfig(_))));
        // kappa large enough to break stochasticity at eps_max fails the
        // build-time row check rather than silently shipping.
        let bad = Example1Config {
            kappa: 3.0,
            ..Default::default()
        };
        assert!(matches!(
            build_example1(&bad),
            Err(ModelError::NotStochastic { .. })
        ));
    }

    #[test]
    fn regime_rows_match_the_closed_form() {
        let m = build_example2(&Example2Config::default()).unwrap();
        assert_eq!(m.n_states(), 3);
        let x1 = m.state_idx(1).unwrap();
        let intervene = m.action_idx(x1, "1").unwrap();
        let hold = m.action_idx(x1, "0").unwrap();

        // eps = 0.5: exp(-2) = 0.1353352832366127.
        let row = m.kernel_at(0.5, 1, x1, intervene).unwrap();
        assert!((row[0] - 0.5646647167633873).abs() < 1e-15);
        assert!((row[1] - 0.1646647167633873).abs() < 1e-15);
        assert!((row[2] - 0.2706705664732254).abs() < 1e-15);

        // lam = +inf removes the crisis branch entirely.
        let row = m.kernel_at(0.5, 1, x1, hold).unwrap();
        assert_eq!(row, vec![0.7, 0.3, 0.0]);
        assert_eq!(
            m.rate_row(1, x1, hold).unwrap(),
            &[0.0, 0.0, f64::INFINITY]
        );
        assert_eq!(m.rate_row(1, x1, intervene).unwrap(), &[0.0, 0.0, 1.0]);

        // Validity threshold: 1/ln(10/3) = 0.8305835450825373 for defaults.
        m.kernel_valid_at(0.83).unwrap();
        assert!(matches!(
            m.kernel_valid_at(0.84),
            Err(ModelError::NotStochastic { .. })
        ));
    }

    #[test]
    fn regime_costs_discount_from_each_anchor() {
        let m = build_example2(&Example2Config::default()).unwrap();
        let x1 = m.state_idx(1).unwrap();
        let x3 = m.state_idx(3).unwrap();
        let intervene = 1;
        // f_{1,3}(1, intervene) = 0.5^2 * 0.5.
        assert_eq!(m.running_cost(1, 3, x1, intervene), 0.125);
        // g_1(3) = 0.5^3 * 6.
        assert_eq!(m.terminal_cost(1, x3), 0.75);
        assert!(!m.costs_tau_independent());

        let classical = build_example2(&Example2Config {
            costs: CostFamily::CanonicalTauIndependent,
            ..Default::default()
        })
        .unwrap();
        assert!(classical.costs_tau_independent());
        assert_eq!(classical.running_cost(2, 1, x1, intervene), 0.5);
    }

    #[test]
    fn regime_config_defects_are_rejected() {
        let bad = Example2Config {
            p: [0.3, 1.0, 0.3],
            ..Default::default()
        };
        assert!(matches!(build_example2(&bad), Err(ModelError::BadConfig(_))));

        // lam = 0 is a permitted config value, but the row then carries
        // probability 2 at the crisis state and the build check rejects it.
        let bad = Example2Config {
            lam: [[0.0, 1.0], [f64::INFINITY, 1.0], [1.0, 1.0]],
            ..Default::default()
        };
        assert!(matches!(
            build_example2(&bad),
            Err(ModelError::NotStochastic { .. })
        ));

        // eps_max above the stochasticity threshold fails at build time.
        let bad = Example2Config {
            eps_max: 0.9,
            ..Default::default()
        };
        assert!(matches!(
            build_example2(&bad),
            Err(ModelError::NotStochastic { .. })
        ));
    }

    #[test]
    fn explicit_discounted_tables_pass_through() {
        let running = vec![
            BaseRunningDoc {
                t: 1,
                x: 1,
                u: "0".into(),
                value: 7.0,
            },
            BaseRunningDoc {
                t: 1,
                x: 1,
                u: "1".into(),
                value: 8.0,
            },
            BaseRunningDoc {
                t: 1,
                x: 2,
                u: "0".into(),
                value: 9.0,
            },
            BaseRunningDoc {
                t: 1,
                x: 2,
                u: "1".into(),
                value: 10.0,
            },
            BaseRunningDoc {
                t: 1,
                x: 3,
                u: "0".into(),
                value: 11.0,
            },
            BaseRunningDoc {
                t: 1,
                x: 3,
                u: "1".into(),
                value: 12.0,
            },
        ];
        let terminal = vec![
            BaseTerminalDoc { x: 1, value: 0.0 },
            BaseTerminalDoc { x: 2, value: 0.0 },
            BaseTerminalDoc { x: 3, value: 0.0 },
        ];
        assert!(matches!(
            build_discounted_costs(1.0, running.clone(), terminal.clone()),
            Err(ModelError::LambdaOutOfRange(_))
        ));
        let fam = build_discounted_costs(0.25, running, terminal).unwrap();
        let m = build_example2(&Example2Config {
            horizon: 1,
            costs: fam,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(m.running_cost(1, 1, 0, 1), 8.0);
    }

    #[test]
    fn builtins_resolve_by_name() {
        assert!(builtin("example1").unwrap().is_ok());
        assert!(builtin("example2").unwrap().is_ok());
        assert!(builtin("example3").is_none());
    }
}
