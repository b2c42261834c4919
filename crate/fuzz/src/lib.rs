//! Fuzz harnesses for the JSON decoders in `tirs-core`.
//!
//! Each harness takes raw bytes and checks the decoder's contract: invalid
//! input comes back as an error, never a panic, and a successful parse is a
//! fixed point of parse-then-emit. The binaries under `fuzz_targets/` replay
//! the checked-in `corpus/` files on a stable toolchain by default, and
//! accept explicit file or directory arguments; built with
//! `--features libfuzzer` they become libFuzzer targets for `cargo fuzz`
//! runs on a nightly toolchain.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use tirs_core::equilibrium::EquilibriumSolution;
use tirs_core::examples::{build_example2, Example2Config};
use tirs_core::model::ModelSpec;

/// Fixed model against which solution artifacts are decoded; the corpus
/// seeds were produced by solving this model.
fn reference_model() -> &'static ModelSpec {
    static MODEL: OnceLock<ModelSpec> = OnceLock::new();
    MODEL.get_or_init(|| build_example2(&Example2Config::default()).expect("builtin model builds"))
}

/// Decoder contract for model documents: arbitrary bytes either fail with an
/// error or parse into a model whose canonical emission re-parses to the
/// same bytes.
pub fn check_model_json(data: &[u8]) {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(model) = ModelSpec::from_json_str(s) else {
        return;
    };
    let emitted = model.to_json_string();
    let reparsed =
        ModelSpec::from_json_str(&emitted).expect("canonical model emission re-parses");
    assert_eq!(
        reparsed.to_json_string(),
        emitted,
        "model emission is a parse fixed point"
    );
}

/// Decoder contract for solution artifacts, both the model-free
/// canonicalizer and the model-bound decoder: errors instead of panics, and
/// canonical emission is a fixed point.
pub fn check_solution_json(data: &[u8]) {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(canonical) = EquilibriumSolution::canonicalize_json(s) {
        let again = EquilibriumSolution::canonicalize_json(&canonical)
            .expect("canonical solution document re-parses");
        assert_eq!(again, canonical, "canonicalization is idempotent");
    }
    let model = reference_model();
    if let Ok(solution) = EquilibriumSolution::from_json_str(model, s) {
        let emitted = solution.to_json_string(model);
        let reparsed = EquilibriumSolution::from_json_str(model, &emitted)
            .expect("canonical solution artifact re-parses");
        assert_eq!(
            reparsed.to_json_string(model),
            emitted,
            "solution emission is a parse fixed point"
        );
    }
}

/// Entry point shared by the replay binaries: with no arguments, replays the
/// checked-in corpus for `target`; otherwise each argument names a file or a
/// directory of inputs. Any contract violation panics, which is the failure
/// signal both under a fuzzer and in CI replay.
pub fn replay_main(target: &str, check: fn(&[u8])) {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let roots: Vec<PathBuf> = if args.is_empty() {
        vec![Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("corpus")
            .join(target)]
    } else {
        args.iter().map(PathBuf::from).collect()
    };
    let mut files = Vec::new();
    for root in roots {
        collect_files(&root, &mut files);
    }
    files.sort();
    for path in &files {
        let bytes =
            std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
        check(&bytes);
    }
    println!("{target}: {} inputs replayed clean", files.len());
}

fn collect_files(root: &Path, out: &mut Vec<PathBuf>) {
    if root.is_dir() {
        let entries = std::fs::read_dir(root)
            .unwrap_or_else(|e| panic!("listing {}: {e}", root.display()));
        for entry in entries {
            collect_files(&entry.expect("directory entry").path(), out);
        }
    } else {
        out.push(root.to_path_buf());
    }
}
