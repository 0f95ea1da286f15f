use mcmpst::check::{canonical, check};
use mcmpst::reduce::{enabled, explore, is_error, normalize, simulate_with, ErrorKind, Scheduler};
use mcmpst::surface::{parse_file, ProtocolFile};
use mcmpst::synth::synthesize_interface;
use mcmpst::{GlobalEnv, Process, Rational};

fn load(name: &str) -> ProtocolFile {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_file(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

#[test]
fn judgments_hold() {
    let f = load("courthouse.mcp");
    let env = GlobalEnv::new();
    for (p, d) in [("P_I", "D_I"), ("P_R", "D_R"), ("P_R", "D_I"), ("P_I_closed", "D_empty"), ("P_R_closed", "D_empty")] {
        let rep = check(&env, &f.processes[p], &f.contexts[d]);
        assert!(rep.verdict, "{p} against {d}: {:?}", rep.diagnostics);
    }
    let rep = check(&env, &f.processes["P_err"], &f.contexts["D_I"]);
    assert!(!rep.verdict);
    assert!(canonical(&env, &f.processes["P_R"], &f.contexts["D_R"]).holds);
    assert!(!canonical(&env, &f.processes["P_R"], &f.contexts["D_I"]).holds);
}

#[test]
fn first_steps() {
    let f = load("courthouse.mcp");
    let p = &f.processes["P_I"];
    let rs = enabled(p);
    assert_eq!(rs.len(), 1);
    assert!(rs[0].prob.is_one());
    assert!(rs[0].kind.to_string().contains("lws"));
    let mut probs: Vec<Rational> = enabled(&rs[0].result).into_iter().map(|x| x.prob).collect();
    probs.sort();
    assert_eq!(probs, vec![r(3, 10), r(7, 20), r(7, 20)]);
    assert_eq!(is_error(p), None);
}

#[test]
fn interface_masses() {
    let f = load("courthouse.mcp");
    let ex = explore(&f.processes["P_I"], 10).unwrap();
    assert!(!ex.truncated);
    let mut ms: Vec<Rational> = ex.outcomes.iter().map(|o| o.mass.clone()).collect();
    ms.sort();
    assert_eq!(ms, vec![r(3, 10), r(7, 20), r(7, 20)]);
    assert!(ex.outcomes.iter().all(|o| o.terminal == Process::Inact));
    assert!(ex.errors.is_empty());
}

#[test]
fn refinement_splits_a_path() {
    let f = load("courthouse.mcp");
    let first = enabled(&f.processes["P_R"]).remove(0).result;
    let ex = explore(&first, 10).unwrap();
    let target = normalize(&Process::par(f.processes["P_rls"].clone(), f.processes["P_w"].clone()));
    let t = ex.find(&target).expect("state reached");
    let mut innocent: Vec<Rational> = ex
        .paths_to(t)
        .into_iter()
        .filter(|p| p.edges.iter().any(|&e| ex.edges[e].label.contains("glt(false)")))
        .map(|p| p.mass)
        .collect();
    innocent.sort();
    assert_eq!(innocent, vec![r(3, 20), r(1, 5)]);
}

#[test]
fn scripted_traces() {
    let f = load("courthouse.mcp");
    let t = simulate_with(&f.processes["P_I"], &Scheduler::Script(vec![0, 0, 0]), 0, 10).unwrap();
    assert_eq!(t.cumulative, r(7, 20));
    assert_eq!(t.final_state, Process::Inact);
    let t = simulate_with(&f.processes["P_R"], &Scheduler::Script(vec![0, 0, 0, 0]), 0, 10).unwrap();
    assert_eq!(t.cumulative, r(7, 20), "{:?}", t.steps);
    assert_eq!(t.final_state, Process::Inact);
}

#[test]
fn interface_of_the_court() {
    let f = load("courthouse.mcp");
    let i = synthesize_interface(&f.contexts["D_R_core"]).unwrap();
    assert!(mcmpst::subtype::check_derivation(&i.derivation));
    let i = synthesize_interface(&f.contexts["D_R_star_core"]).unwrap();
    assert!(mcmpst::subtype::check_derivation(&i.derivation));
}

#[test]
fn small_examples() {
    let f = load("examples.mcp");
    let env = GlobalEnv::new();
    assert!(matches!(is_error(&f.processes["P_err_prefix"]), Some(ErrorKind::Communication { .. })));
    assert_eq!(is_error(&f.processes["P_dead"]), None);
    let ex = explore(&f.processes["P_dead"], 5).unwrap();
    assert!(ex.outcomes.iter().all(|o| o.deadlocked));
    let d = &f.contexts["D_df"];
    assert!(check(&env, &f.processes["P_1"], d).verdict);
    assert!(check(&env, &f.processes["P_2"], d).verdict);
    assert!(!canonical(&env, &f.processes["P_1"], d).holds);
    assert!(!canonical(&env, &f.processes["P_2"], d).holds);
    assert!(canonical(&env, &f.processes["P_df"], d).holds);
}
