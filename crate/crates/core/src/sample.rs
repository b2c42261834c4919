//! Seeded random model generation for property tests and self-checks.
//!
//! Generated models are valid by construction: tabulated rows are normalized
//! positive vectors, and rate-parameterized rows use positive coefficients
//! with total mass at most 0.6, so the remainder keeps mass at every eps and
//! the derived rate function exists everywhere. Identical configs produce
//! identical models, byte for byte.

use crate::model::{
    ActionDoc, ActionsDoc, CostsDoc, KernelDoc, KernelEntryDoc, KernelModeDoc, ModelDoc,
    ModelSpec, RowProbDoc, RunningCostDoc, StateDoc, TermDoc, TerminalCostDoc,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub struct RandomModelConfig {
    pub seed: u64,
    /// 1..=6 is sensible; enumeration-based oracles stay cheap there.
    pub n_states: usize,
    pub horizon: usize,
    /// Each state draws min_actions..=max_actions actions.
    pub min_actions: usize,
    pub max_actions: usize,
    /// Rate-parameterized kernel instead of tabulated rows.
    pub rate_mode: bool,
    /// Copy anchor-1 costs to every anchor (classical control instance).
    pub tau_independent: bool,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        RandomModelConfig {
            seed: 0,
            n_states: 3,
            horizon: 2,
            min_actions: 1,
            max_actions: 2,
            rate_mode: false,
            tau_independent: false,
        }
    }
}

/// Draws a model. Panics only on a malformed config (zero states, actions,
/// or horizon); every drawn model passes ingestion by construction.
pub fn random_model(cfg: &RandomModelConfig) -> ModelSpec {
    assert!(cfg.n_states >= 1, "need at least one state");
    assert!(cfg.horizon >= 1, "need at least one step");
    assert!(
        cfg.min_actions >= 1 && cfg.min_actions <= cfg.max_actions,
        "need 1 <= min_actions <= max_actions"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_states;

    let states: Vec<StateDoc> = (0..n as i64)
        .map(|x| StateDoc {
            label: x,
            lyapunov: rng.gen_range(0.5..2.0),
        })
        .collect();

    let mut action_count = Vec::with_capacity(n);
    let actions = ActionsDoc(
        (0..n as i64)
            .map(|x| {
                let k = rng.gen_range(cfg.min_actions..=cfg.max_actions);
                action_count.push(k);
                (
                    x,
                    (0..k)
                        .map(|u| ActionDoc::Bare(format!("u{u}")))
                        .collect(),
                )
            })
            .collect(),
    );

    let mut entries = Vec::new();
    for x in 0..n as i64 {
        for u in 0..action_count[x as usize] {
            let entry = if cfg.rate_mode {
                // 1..=2 positive terms, total coefficient mass <= 0.6.
                // Rates are dyadic (multiples of 1/64) so that shifting a
                // dyadic test function by a dyadic constant commutes with
                // the max-plus operator bit for bit.
                let k = rng.gen_range(1..=2usize);
                let terms = (0..k)
                    .map(|_| TermDoc {
                        z: rng.gen_range(0..n as i64),
                        coeff: rng.gen_range(0.05..0.3),
                        rate: f64::from(rng.gen_range(13..=128u32)) / 64.0,
                    })
                    .collect();
                KernelEntryDoc {
                    eps: None,
                    t: None,
                    x,
                    u: format!("u{u}"),
                    terms: Some(terms),
                    remainder: Some(rng.gen_range(0..n as i64)),
                    row: None,
                }
            } else {
                let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = raw.iter().sum();
                // Normalize with an exact-sum tail so the row check at 1e-12
                // cannot be tripped by accumulated rounding.
                let mut row: Vec<RowProbDoc> = Vec::with_capacity(n);
                let mut acc = 0.0f64;
                for (z, r) in raw.iter().enumerate().take(n - 1) {
                    let p = r / total;
                    acc += p;
                    row.push(RowProbDoc { z: z as i64, p });
                }
                row.push(RowProbDoc {
                    z: (n - 1) as i64,
                    p: 1.0 - acc,
                });
                KernelEntryDoc {
                    eps: None,
                    t: None,
                    x,
                    u: format!("u{u}"),
                    terms: None,
                    remainder: None,
                    row: Some(row),
                }
            };
            entries.push(entry);
        }
    }

    let te = cfg.horizon;
    let mut running = Vec::new();
    let mut terminal = Vec::new();
    // Draw anchor-1 tables first, then either redraw or copy per anchor.
    let mut base_running = Vec::new();
    for t in 1..=te {
        for x in 0..n as i64 {
            for u in 0..action_count[x as usize] {
                base_running.push((t, x, format!("u{u}"), rng.gen_range(0.0..2.0)));
            }
        }
    }
    let base_terminal: Vec<(i64, f64)> = (0..n as i64)
        .map(|x| (x, rng.gen_range(0.0..2.0)))
        .collect();
    for tau in 1..=te {
        for (t, x, u, v) in &base_running {
            let value = if cfg.tau_independent || tau == 1 {
                *v
            } else {
                rng.gen_range(0.0..2.0)
            };
            running.push(RunningCostDoc {
                tau,
                t: *t,
                x: *x,
                u: u.clone(),
                value,
            });
        }
        for (x, v) in &base_terminal {
            let value = if cfg.tau_independent || tau == 1 {
                *v
            } else {
                rng.gen_range(0.0..2.0)
            };
            terminal.push(TerminalCostDoc {
                tau,
                x: *x,
                value,
            });
        }
    }

    let doc = ModelDoc {
        horizon: te,
        states,
        actions,
        kernel: KernelDoc {
            mode: if cfg.rate_mode {
                KernelModeDoc::Rate
            } else {
                KernelModeDoc::Tabulated
            },
            entries,
        },
        costs: Some(CostsDoc { running, terminal }),
        discounting: None,
        rates: None,
        tolerances: None,
        notes: vec![format!("seeded random model, seed {}", cfg.seed)],
    };
    ModelSpec::from_doc(doc).expect("random models are valid by construction")
}
