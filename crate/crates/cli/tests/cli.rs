//! Black-box tests of the command-line binary: exit codes, report shapes,
//! and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use locclab_core::generate::ghz_state;
use locclab_core::io::{read_state, save_state};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_locclab")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

/// Scratch directory unique to one test.
fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("locclab-cli-tests")
        .join(format!("{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Two qubits in 0.6|00> + 0.8|11>, written in the on-disk format.
fn write_gamble_state(dir: &Path) -> PathBuf {
    let text = concat!(
        r#"{"parties":[{"name":"A","dims":[2]},{"name":"B","dims":[2]}],"#,
        r#""amplitudes":[[0.6,0.0],[0.0,0.0],[0.0,0.0],[0.8,0.0]]}"#,
    );
    let path = dir.join("gamble.json");
    std::fs::write(&path, text).unwrap();
    path
}

/// One projective measurement on party A; first outcome wins.
const MEASURE_SCRIPT: &str = r#"{
  "cats": 0,
  "nodes": [
    {
      "party": "A",
      "elements": [
        { "label": "m0", "matrix": [[[1,0],[0,0]],[[0,0],[0,0]]] },
        { "label": "m1", "matrix": [[[0,0],[0,0]],[[0,0],[1,0]]] }
      ],
      "branches": { "m0": { "halt": "success" }, "m1": { "halt": "failure" } }
    }
  ]
}"#;

#[test]
fn generate_writes_a_loadable_cat_state() {
    let dir = scratch("generate");
    let path = dir.join("ghz.json");
    let out = run(&[
        "generate",
        "--kind",
        "ghz",
        "--parties",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = std::fs::read_to_string(&path).unwrap();
    let s = read_state(&text).unwrap();
    let fid = s.overlap(&ghz_state(3).unwrap()).unwrap().norm_sqr();
    assert!(fid >= 1.0 - 1e-12, "fidelity {fid}");
}

#[test]
fn generated_random_states_reload_normalized() {
    let dir = scratch("generate-random");
    let path = dir.join("rand.json");
    let out = run(&[
        "generate",
        "--kind",
        "random-irreducible",
        "--parties",
        "3",
        "--dim",
        "3",
        "--seed",
        "12",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let s = read_state(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!((s.norm() - 1.0).abs() < 1e-12);
    assert_eq!(s.dim(), 27);
}

#[test]
fn gamble_reports_the_expected_numbers() {
    let dir = scratch("gamble");
    let state = write_gamble_state(&dir);
    let out = run(&["gamble", "--state", state.to_str().unwrap(), "--seed", "3"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    let exact = v["exact_success_probability"].as_f64().unwrap();
    assert!((exact - 0.4608).abs() < 1e-9);
    let sampled = v["sampled"]["point"].as_f64().unwrap();
    assert!((sampled - 0.4608).abs() < 0.005);
    assert_eq!(v["command"], "gamble");
    assert!(v["notes"].as_array().map(|n| !n.is_empty()).unwrap_or(false));
}

#[test]
fn gamble_rejects_product_states_with_exit_three() {
    let dir = scratch("gamble-product");
    let text = concat!(
        r#"{"parties":[{"name":"A","dims":[2]},{"name":"B","dims":[2]}],"#,
        r#""amplitudes":[[1.0,0.0],[0.0,0.0],[0.0,0.0],[0.0,0.0]]}"#,
    );
    let path = dir.join("product.json");
    std::fs::write(&path, text).unwrap();
    let out = run(&["gamble", "--state", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("NotEntangled"));
}

#[test]
fn unparsable_state_files_exit_two() {
    let dir = scratch("malformed");
    let path = dir.join("junk.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["gamble", "--state", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("Malformed"));
}

#[test]
fn missing_state_files_exit_two() {
    let out = run(&["gamble", "--state", "/nonexistent/nowhere.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("Io"));
}

#[test]
fn cat_to_pair_conversion_always_succeeds() {
    let dir = scratch("cat2epr");
    let path = dir.join("ghz.json");
    save_state(&ghz_state(3).unwrap(), &path).unwrap();
    let out = run(&[
        "cat2epr",
        "--state",
        path.to_str().unwrap(),
        "--pair",
        "B,C",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!((v["success_probability"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["branches"].as_array().unwrap().len(), 2);
    assert!(v["min_branch_fidelity"].as_f64().unwrap() >= 1.0 - 1e-9);
}

#[test]
fn exhausted_copy_budgets_exit_four() {
    let dir = scratch("pair-budget");
    let path = dir.join("rand.json");
    let gen = run(&[
        "generate",
        "--kind",
        "random-irreducible",
        "--parties",
        "3",
        "--seed",
        "5",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(gen.status.success());
    let out = run(&[
        "pair-epr",
        "--state",
        path.to_str().unwrap(),
        "--pair",
        "A,C",
        "--copies",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_of(&out).contains("CopyBudgetExceeded"));
}

#[test]
fn repeated_runs_emit_identical_bytes() {
    let dir = scratch("determinism");
    let state = write_gamble_state(&dir);
    let args = [
        "gamble",
        "--state",
        state.to_str().unwrap(),
        "--seed",
        "21",
        "--trials",
        "20000",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout, "reports must be byte-identical");
    let c = run(&[
        "gamble",
        "--state",
        state.to_str().unwrap(),
        "--seed",
        "22",
        "--trials",
        "20000",
    ]);
    assert_ne!(a.stdout, c.stdout, "the seed must reach the sampler");
}

#[test]
fn csv_output_is_a_branch_table() {
    let dir = scratch("csv");
    let state = write_gamble_state(&dir);
    let out = run(&[
        "gamble",
        "--state",
        state.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path,probability,verdict"));
    assert!(lines.next().is_some(), "at least one branch row");
}

#[test]
fn pair_bank_builds_cats_between_three_parties() {
    let out = run(&["epr2cat", "--parties", "A,B,C"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!(v["cat_fidelity"].as_f64().unwrap() >= 1.0 - 1e-9);
    assert_eq!(v["ledger"]["cbits_sent"].as_u64().unwrap(), 4);
}

#[test]
fn audits_run_from_script_files() {
    let dir = scratch("audit");
    let state = dir.join("ghz.json");
    save_state(&ghz_state(3).unwrap(), &state).unwrap();
    let script = dir.join("measure.json");
    std::fs::write(&script, MEASURE_SCRIPT).unwrap();

    let out = run(&[
        "audit",
        "--state",
        state.to_str().unwrap(),
        "--protocol",
        script.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(v["mode"], "monotone");
    assert_eq!(v["report"]["pass"], true);

    // A cat is entangled across every cut, so a cut-audit must refuse.
    let refused = run(&[
        "audit",
        "--state",
        state.to_str().unwrap(),
        "--protocol",
        script.to_str().unwrap(),
        "--cut",
        "A",
    ]);
    assert_eq!(refused.status.code(), Some(3));
    assert!(stderr_of(&refused).contains("NotFactorizable"));
}

#[test]
fn sampling_matches_enumeration_from_scripts() {
    let dir = scratch("sample");
    let state = dir.join("ghz.json");
    save_state(&ghz_state(3).unwrap(), &state).unwrap();
    let script = dir.join("measure.json");
    std::fs::write(&script, MEASURE_SCRIPT).unwrap();

    let out = run(&[
        "sample",
        "--state",
        state.to_str().unwrap(),
        "--protocol",
        script.to_str().unwrap(),
        "--trials",
        "50000",
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    let sampled = v["sampled"]["point"].as_f64().unwrap();
    let exact = v["exact_success_probability"].as_f64().unwrap();
    assert!((exact - 0.5).abs() < 1e-12);
    assert!((sampled - exact).abs() < 0.02);
}

#[test]
fn rewrites_treat_cat_sources_as_free_cats() {
    let dir = scratch("rewrite");
    let state = dir.join("ghz.json");
    save_state(&ghz_state(3).unwrap(), &state).unwrap();
    // One cat of budget; the program reads the cat share at party A. On the
    // combined register party A holds (cat qubit, source qubit): dim 4.
    let script = r#"{
      "cats": 1,
      "nodes": [
        {
          "party": "A",
          "elements": [
            { "label": "z0", "matrix": [[[1,0],[0,0],[0,0],[0,0]],[[0,0],[1,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]]] },
            { "label": "z1", "matrix": [[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[1,0],[0,0]],[[0,0],[0,0],[0,0],[1,0]]] }
          ],
          "branches": { "z0": { "halt": "success" }, "z1": { "halt": "success" } }
        }
      ]
    }"#;
    let script_path = dir.join("reader.json");
    std::fs::write(&script_path, script).unwrap();

    let out = run(&[
        "loccq-rewrite",
        "--state",
        state.to_str().unwrap(),
        "--protocol",
        script_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(v["report"]["used_cat_shortcut"], true);
    assert_eq!(v["report"]["extra_copies"].as_u64().unwrap(), 1);
    assert!(v["report"]["branch_fidelity_min"].as_f64().unwrap() >= 1.0 - 1e-9);
}
