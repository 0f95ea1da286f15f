use std::path::PathBuf;
use std::process::Command;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mcmpst"));
    cmd.current_dir(root()).args(args).env_remove("MCMPST_BUDGET");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

fn golden(name: &str, args: &[&str], code: i32) {
    let (got_code, out) = run(args, &[]);
    assert_eq!(got_code, code, "exit code of {args:?}\n{out}");
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("MCMPST_BLESS").is_some() {
        std::fs::write(&path, &out).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(out, want, "output of {args:?} differs from {name}");
}

const COURT: &str = "fixtures/courthouse.mcp";
const SMALL: &str = "fixtures/examples.mcp";

#[test]
fn check_accepts_the_interface_system() {
    golden("check_p_i.json", &["--format", "json", "check", COURT, "P_I", "D_I"], 0);
}

#[test]
fn check_rejects_the_broken_court() {
    golden("check_p_err.txt", &["check", COURT, "P_err", "D_I"], 1);
}

#[test]
fn missing_inputs_exit_two() {
    assert_eq!(run(&["check", "fixtures/absent.mcp", "P_I", "D_I"], &[]).0, 2);
    assert_eq!(run(&["check", COURT, "P_nope", "D_I"], &[]).0, 2);
    assert_eq!(run(&["pending", COURT, "D_I", "s[p"], &[]).0, 2);
    assert_eq!(run(&["--format", "dot", "check", COURT, "P_I", "D_I"], &[]).0, 2);
}

#[test]
fn subtype_prints_a_derivation() {
    golden("subtype_court.json", &["--format", "json", "subtype", COURT, "D_R_core", "D_I_core"], 0);
}

#[test]
fn standard_subtyping_refutes_extra_inputs() {
    golden("subtype_t_b.txt", &["subtype", SMALL, "T_b_prime", "T_b", "--relation", "standard"], 1);
}

#[test]
fn dfree_and_safety() {
    golden("dfree_d_i.json", &["--format", "json", "dfree", COURT, "D_I"], 0);
    golden("safety_d_i.dot", &["--format", "dot", "safety", COURT, "D_I"], 0);
}

#[test]
fn explore_emits_exact_masses() {
    golden("explore_p_i.json", &["--format", "json", "explore", COURT, "P_I", "--depth", "10"], 0);
}

#[test]
fn scripted_run() {
    golden("run_p_r.txt", &["run", COURT, "P_R", "--scheduler", "script:0,0,0,0"], 0);
}

#[test]
fn seeded_runs_repeat() {
    let a = run(&["--format", "json", "run", COURT, "P_R", "--seed", "7"], &[]);
    let b = run(&["--format", "json", "run", COURT, "P_R", "--seed", "7"], &[]);
    assert_eq!(a, b);
    assert_eq!(a.0, 0);
}

#[test]
fn interface_of_the_refinement() {
    golden("interface_court.txt", &["interface", COURT, "D_R_core"], 0);
}

#[test]
fn errors_found_at_the_start() {
    golden("errors_prefix.json", &["--format", "json", "errors", SMALL, "P_err_prefix"], 1);
}

#[test]
fn parse_pretty_prints() {
    golden("parse_examples.txt", &["parse", SMALL], 0);
}

#[test]
fn budget_flag_beats_environment() {
    let args = ["subtype", COURT, "D_R_core", "D_I_core"];
    assert_eq!(run(&args, &[("MCMPST_BUDGET", "3")]).0, 3);
    let mut with_flag = args.to_vec();
    with_flag.extend(["--budget", "1000000"]);
    assert_eq!(run(&with_flag, &[("MCMPST_BUDGET", "3")]).0, 0);
}

#[test]
fn dot_file_is_written() {
    let path = std::env::temp_dir().join(format!("mcmpst-golden-{}.dot", std::process::id()));
    let p = path.to_string_lossy().to_string();
    assert_eq!(run(&["explore", COURT, "P_I", "--depth", "10", "--dot", &p], &[]).0, 0);
    let dot = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert!(dot.starts_with("digraph explore"));
}
