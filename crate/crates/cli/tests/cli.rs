//! End-to-end checks of the `tirs` binary: exit-code taxonomy, byte-stable
//! artifacts, and agreement with in-process solver calls.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tirs_core::equilibrium::{solve, solve_eps, SolveOptions};
use tirs_core::examples::{build_example1, build_example2, CostFamily, Example1Config, Example2Config};
use tirs_core::operators::EvalMode;

fn tirs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tirs"))
        .args(args)
        .env_remove("TIRS_THREADS")
        .output()
        .expect("binary runs")
}

fn tirs_with_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tirs"))
        .args(args)
        .env("TIRS_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.as_ref().display()))
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn example_and_solve_match_in_process_results_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap().to_string();

    let out = tirs(&["example", "example2", "--output-dir", &root]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let model_path = format!("{root}/example2.json");
    let in_process = build_example2(&Example2Config::default()).unwrap();
    assert_eq!(read(&model_path), in_process.to_json_string());

    let run1 = format!("{root}/run1");
    let run2 = format!("{root}/run2");
    for run in [&run1, &run2] {
        let out = tirs(&[
            "solve",
            "--model",
            &model_path,
            "--eps",
            "0.1",
            "--output-dir",
            run,
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    }
    let sol1 = read(format!("{run1}/solution.json"));
    assert_eq!(sol1, read(format!("{run2}/solution.json")), "solve must be deterministic");
    let expected = solve_eps(&in_process, 0.1, SolveOptions::default())
        .unwrap()
        .to_json_string(&in_process);
    assert_eq!(sol1, expected, "CLI output must equal the in-process solution");

    assert!(read(format!("{run1}/theta.csv")).starts_with("tau,t,x,theta"));
    assert!(read(format!("{run1}/policy.csv")).starts_with("t,x,u,tie_count,gap"));
}

#[test]
fn validation_exit_codes_separate_failures_from_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap().to_string();

    let ok = tirs(&["validate", "--model", "example2", "--output-dir", &root]);
    assert_eq!(ok.status.code(), Some(0), "stderr: {}", stderr_of(&ok));
    assert!(read(format!("{root}/validation.json")).contains("\"passed\":true"));

    // eps = 0.9 pushes the regime kernel outside stochasticity: the check
    // fails mathematically, which is exit 2, not a hard error.
    let fail = tirs(&[
        "validate",
        "--model",
        "example2",
        "--grid",
        "0.9,0.45",
        "--output-dir",
        &root,
    ]);
    assert_eq!(fail.status.code(), Some(2), "stderr: {}", stderr_of(&fail));
    assert!(read(format!("{root}/validation.json")).contains("\"passed\":false"));

    // A malformed model file is an input error: exit 1 with ERROR: on stderr.
    let broken = format!("{root}/broken.json");
    fs::write(&broken, "{ not json").unwrap();
    let err = tirs(&["validate", "--model", &broken, "--output-dir", &root]);
    assert_eq!(err.status.code(), Some(1));
    assert!(stderr_of(&err).starts_with("ERROR:"), "stderr: {}", stderr_of(&err));
}

#[test]
fn tracing_adds_a_log_without_touching_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap().to_string();
    let plain = format!("{root}/plain");
    let traced = format!("{root}/traced");

    let out = tirs(&["solve", "--model", "example2", "--output-dir", &plain]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let out = tirs(&[
        "solve",
        "--model",
        "example2",
        "--trace-ops",
        "--output-dir",
        &traced,
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    assert_eq!(
        read(format!("{plain}/solution.json")),
        read(format!("{traced}/solution.json")),
        "tracing must not change the solution bytes"
    );
    let trace = read(format!("{traced}/trace.jsonl"));
    assert!(trace.lines().count() > 10, "trace should log operator applications");
    assert!(!Path::new(&format!("{plain}/trace.jsonl")).exists());
}

#[test]
fn verification_accepts_solver_output_and_flags_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap().to_string();

    let out = tirs(&["solve", "--model", "example2", "--output-dir", &root]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let ok = tirs(&[
        "verify",
        "--model",
        "example2",
        "--solution",
        &format!("{root}/solution.json"),
        "--output-dir",
        &root,
    ]);
    assert_eq!(ok.status.code(), Some(0), "stderr: {}", stderr_of(&ok));
    assert!(read(format!("{root}/verification.json")).contains("\"passed\":true"));

    // Flip one first-step action in-process and write the doctored file.
    let model = build_example2(&Example2Config::default()).unwrap();
    let mut sol = solve(&model, EvalMode::Limit, SolveOptions::default()).unwrap();
    sol.policy.set_action(1, 0, 1 - sol.policy.action(1, 0));
    let doctored = format!("{root}/doctored.json");
    fs::write(&doctored, sol.to_json_string(&model)).unwrap();
    let bad = tirs(&[
        "verify",
        "--model",
        "example2",
        "--solution",
        &doctored,
        "--output-dir",
        &root,
    ]);
    assert_eq!(bad.status.code(), Some(2), "stderr: {}", stderr_of(&bad));
    let report = read(format!("{root}/verification.json"));
    assert!(report.contains("\"passed\":false"));
    let stdout = String::from_utf8_lossy(&bad.stdout).into_owned();
    assert!(stdout.contains("violation at t 1, x 1"), "stdout: {stdout}");
}

#[test]
fn sweep_rows_and_artifacts_are_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap().to_string();
    let serial = format!("{root}/serial");
    let parallel = format!("{root}/parallel");

    let model = build_example2(&Example2Config {
        horizon: 2,
        ..Default::default()
    })
    .unwrap();
    let model_path = format!("{root}/regime2.json");
    fs::write(&model_path, model.to_json_string()).unwrap();

    for (dir, threads) in [(&serial, "1"), (&parallel, "3")] {
        let out = tirs_with_threads(
            &[
                "sweep",
                "--model",
                &model_path,
                "--grid-geometric",
                "0.64",
                "12",
                "--output-dir",
                dir,
            ],
            threads,
        );
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    }
    let long = read(format!("{serial}/sweep_long.csv"));
    // Header plus one row per (eps, anchor, step): 12 * 2 * 2.
    assert_eq!(long.lines().count(), 1 + 12 * 2 * 2);
    for name in ["sweep_long.csv", "sweep_wide.csv", "sweep_summary.json"] {
        assert_eq!(
            read(format!("{serial}/{name}")),
            read(format!("{parallel}/{name}")),
            "{name} must not depend on the thread count"
        );
    }
    assert!(read(format!("{serial}/sweep_summary.json")).contains("\"passed\":true"));

    // The three-step variant has a genuine non-monotone stretch in its
    // distance curve mid-grid, so its trend check fails: the sweep still
    // writes every artifact and signals the failed check through exit 2.
    let humped = format!("{root}/humped");
    let out = tirs(&[
        "sweep",
        "--model",
        "example2",
        "--grid-geometric",
        "0.64",
        "12",
        "--output-dir",
        &humped,
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(read(format!("{humped}/sweep_summary.json")).contains("\"trend_ok\":false"));
}

#[test]
fn precommitment_respects_the_enumeration_cap() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap().to_string();
    let model = build_example1(&Example1Config {
        w: 2,
        horizon: 3,
        costs: CostFamily::DiscountedCanonical { lambda: 0.5 },
        ..Default::default()
    })
    .unwrap();
    let model_path = format!("{root}/walk.json");
    fs::write(&model_path, model.to_json_string()).unwrap();

    let out = tirs(&[
        "precommit",
        "--model",
        &model_path,
        "--eps",
        "limit",
        "--initial-state",
        "0",
        "--output-dir",
        &root,
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let report = read(format!("{root}/precommitment.json"));
    assert!(report.contains("\"policies_enumerated\":32768"), "report: {report}");

    let capped = tirs(&[
        "precommit",
        "--model",
        &model_path,
        "--enumeration-cap",
        "100",
        "--output-dir",
        &root,
    ]);
    assert_eq!(capped.status.code(), Some(1));
    assert!(stderr_of(&capped).starts_with("ERROR:"));
}

#[test]
fn input_errors_exit_one_with_a_machine_parsable_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap().to_string();

    let unknown_model = tirs(&["solve", "--model", "nosuchthing", "--output-dir", &root]);
    assert_eq!(unknown_model.status.code(), Some(1));
    assert!(stderr_of(&unknown_model).starts_with("ERROR:"));

    let unknown_example = tirs(&["example", "example9", "--output-dir", &root]);
    assert_eq!(unknown_example.status.code(), Some(1));
    assert!(stderr_of(&unknown_example).starts_with("ERROR:"));

    let bad_flag = tirs(&["solve", "--model", "example2", "--bogus"]);
    assert_eq!(bad_flag.status.code(), Some(1));
    assert!(stderr_of(&bad_flag).starts_with("ERROR:"));

    let bad_eps = tirs(&["solve", "--model", "example2", "--eps", "-0.5"]);
    assert_eq!(bad_eps.status.code(), Some(1));
    assert!(stderr_of(&bad_eps).starts_with("ERROR:"));

    let help = tirs(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("tirs"));
}
