use super::*;
use crate::surface::{parse_context, parse_type};
use crate::syntax::{Channel, LocalContext};

fn t(s: &str) -> Ty {
    parse_type(s).unwrap()
}

fn ctx(s: &str) -> LocalContext {
    parse_context(s).unwrap()
}

const TJ: &str = "j<-p?lws().((j<-d?wk().(1: j->p!glt(bool).(1: j->w!rls()))) \
    + (j<-d?str().(1: j->p!glt(bool).(1: j->w!rls()))) \
    + j<-d?wit().(1: j->w!rqs().j<-w?st().(1: j->p!glt(bool))))";
const TD: &str = "(0.5: d->j!wk() (+) 0.2: d->j!str() (+) 0.3: d->j!wit())";
const TC: &str = "j<-p?lws().(0.7: j->p!glt(bool).(1: j->w!rls()) \
    (+) 0.3: j->w!rqs().j<-w?st().(1: j->p!glt(bool)))";

const TJ_STAR: &str = "j<-p?lws().((j<-d?wk().(1: j->p!glt(bool).(1: j->d!rls()))) \
    + (j<-d?str().(1: j->p!glt(bool).(1: j->d!rls()))) \
    + j<-d?wit().j<-w?st().(1: j->p!glt(bool)))";
const TD_STAR: &str = "(0.5: d->j!wk() (+) 0.2: d->j!str() (+) 0.3: d->j!wit().(1: d->w!mtg()))";
const TC_STAR: &str = "j<-p?lws().(0.7: j->p!glt(bool).(1: j->d!rls()) \
    (+) 0.3: tau.((1: d->w!mtg().j<-w?st().(1: j->p!glt(bool))) \
    + j<-w?st().(1: d->w!mtg().(1: j->p!glt(bool)))))";

fn refinement(tj: &str, td: &str) -> LocalContext {
    ctx(&format!("{{ s[j] : {tj}, s[d] : {td} }}"))
}

fn interface(tc: &str) -> LocalContext {
    ctx(&format!("{{ s[{{j,d}}] : {tc} }}"))
}

fn multi_ok(sub: &LocalContext, sup: &LocalContext) -> Derivation<Goal> {
    let d = sub_multi(sub, sup).unwrap().expect("derivable");
    validate_derivation(&d).unwrap_or_else(|e| panic!("{e}\n{}", d.render()));
    assert!(concludes(&d, sub, sup));
    d
}

fn t_prime() -> (Ty, Ty) {
    (
        t("(a<-b?in1().end) + (a<-b?in2().a<-b?more().end) + (1: a->c!out3())"),
        t("a<-b?in1().end + (0.7: a->c!out1() (+) 0.3: a->c!out2()) + (1: a->c!out3())"),
    )
}

#[test]
fn standard_example_derives() {
    let (sub, sup) = t_prime();
    let d = sub_standard(&sub, &sup).unwrap().expect("derivable");
    assert!(check_std_derivation(&d), "{}", d.render());
    assert!(concludes_std(&d, &sub, &sup));
    assert_eq!(d.rule, Rule::SubSigma);
}

#[test]
fn standard_end_axiom() {
    let d = sub_standard(&t("end"), &t("end")).unwrap().unwrap();
    assert_eq!(d.rule, Rule::SubEnd);
    assert_eq!(d.size(), 1);
}

#[test]
fn standard_unjustified_prefix_refuted() {
    let tb = t("b<-a?nat(nat).b<-c?bool(bool)");
    let tb2 = t("(b<-a?nat(nat).b<-c?bool(bool)) + b<-c?new(nat)");
    assert!(sub_standard(&tb2, &tb).unwrap().is_none());
    assert!(sub_standard(&tb, &tb2).unwrap().is_none());
}

#[test]
fn standard_dropped_output_needs_prefix() {
    let ta = t("(1: a->b!hi()) + (1: a->c!oops())");
    assert!(sub_standard(&t("(1: a->c!oops())"), &ta).unwrap().is_none());
    assert!(sub_standard(&t("(1: a->b!hi())"), &ta).unwrap().is_none());
    assert!(sub_standard(&ta, &ta).unwrap().is_some());
}

#[test]
fn standard_splits_probability_mass() {
    let sub = t("(0.5: tau.a<-b?y().end (+) 0.5: tau.((a<-b?y().end) + a<-b?z().end))");
    let sup = t("(1: tau.a<-b?y().end)");
    let d = sub_standard(&sub, &sup).unwrap().expect("derivable");
    assert!(check_std_derivation(&d));
    let s = d.children[1].flows[0].edges.len();
    assert_eq!(s, 2);
}

#[test]
fn standard_recursion_closes_by_backedge() {
    let a = t("rec x. (1: a->b!l().x)");
    let b = t("rec y. (1: a->b!l().(1: a->b!l().y))");
    let d = sub_standard(&a, &b).unwrap().expect("derivable");
    assert!(check_std_derivation(&d), "{}", d.render());
    assert!(d.rules().contains(&Rule::Coinduction));
}

#[test]
fn single_channel_example() {
    let (sub, sup) = t_prime();
    let c = Channel::single("s", "a");
    let dsub = LocalContext::singleton(c.clone(), sub);
    let dsup = LocalContext::singleton(c, sup);
    let d = sub_single(&dsub, &dsup).unwrap().expect("derivable");
    validate_derivation(&d).unwrap();
    assert!(concludes(&d, &dsub, &dsup));
}

#[test]
fn single_split_pairs_bindings() {
    let d1 = ctx("{ s[a] : (1: a->b!x()), s[b] : b<-a?x() }");
    let d = sub_single(&d1, &d1).unwrap().expect("reflexive");
    assert_eq!(d.rule, Rule::SubCSplit);
    validate_derivation(&d).unwrap();
    let wider = ctx("{ s[{a,c}] : (1: a->b!x()), s[b] : b<-a?x() }");
    assert!(sub_single(&d1, &wider).unwrap().is_some());
    assert!(sub_single(&wider, &d1).unwrap().is_none());
}

#[test]
fn single_splits_probability_mass() {
    let c = Channel::single("s", "a");
    let sub = LocalContext::singleton(c.clone(), t("(0.5: tau.a<-b?y().end (+) 0.5: tau.((a<-b?y().end) + a<-b?z().end))"));
    let sup = LocalContext::singleton(c, t("(1: tau.a<-b?y().end)"));
    let d = sub_single(&sub, &sup).unwrap().expect("derivable");
    validate_derivation(&d).unwrap();
}

#[test]
fn courthouse_refinement() {
    let d = multi_ok(&refinement(TJ, TD), &interface(TC));
    assert_eq!(d.rule, Rule::SSigma1);
    assert!(d.rules().contains(&Rule::SLink));
    assert!(check_derivation(&d));
}

/// The starred interface with both interleavings of `mtg` and `glt` after `st`.
const TC_STAR_BOTH: &str = "j<-p?lws().(0.7: j->p!glt(bool).(1: j->d!rls()) \
    (+) 0.3: tau.((1: d->w!mtg().j<-w?st().(1: j->p!glt(bool))) \
    + j<-w?st().((1: d->w!mtg().(1: j->p!glt(bool))) + (1: j->p!glt(bool).(1: d->w!mtg())))))";

#[test]
fn courthouse_internal_action_needs_both_interleavings() {
    // after `st` the judge may announce the verdict before the meeting happens
    assert!(sub_multi(&refinement(TJ_STAR, TD_STAR), &interface(TC_STAR)).unwrap().is_none());
}

#[test]
fn courthouse_refinement_with_internal_action() {
    let d = multi_ok(&refinement(TJ_STAR, TD_STAR), &interface(TC_STAR_BOTH));
    let rules = d.rules();
    assert!(rules.contains(&Rule::STauR));
    assert!(rules.contains(&Rule::SOplus));
    assert!(rules.contains(&Rule::SEmpty));
}

#[test]
fn courthouse_is_not_reversible() {
    let (sub, sup) = (refinement(TJ, TD), interface(TC));
    assert!(sub_multi(&sup, &sub).unwrap().is_none());
}

#[test]
fn tau_subtyping_both_ways() {
    let a = ctx("{ s[c] : (1: tau.end) }");
    let b = ctx("{ s[c] : (1: tau.(1: tau.end)) }");
    multi_ok(&a, &b);
    multi_ok(&b, &a);
}

#[test]
fn empty_axiom_validates() {
    let g = Goal::new(ActiveContext::Plain(LocalContext::new()), Rational::one(), LocalContext::new());
    let d = Derivation::leaf(Rule::SEmpty1, g);
    assert!(check_derivation(&d));
    let bad = Goal::new(ActiveContext::Plain(LocalContext::new()), Rational::new(1, 2), LocalContext::new());
    assert!(!check_derivation(&Derivation::leaf(Rule::SEmpty1, bad)));
    let d = sub_multi(&LocalContext::new(), &LocalContext::new()).unwrap().unwrap();
    assert_eq!(d.rule, Rule::SEmpty1);
}

#[test]
fn forged_input_with_internal_partner_rejected() {
    let rest = ctx("{ s[d] : (1: d->j!x()) }");
    let lhs = ActiveContext::Active {
        chan: Channel::single("s", "j"),
        view: ActiveType::Type(t("j<-d?x()")),
        rest: rest.clone(),
    };
    let c = Channel::new("s", ["j", "d"]);
    let g = Goal::new(lhs, Rational::one(), LocalContext::singleton(c.clone(), t("j<-d?x()")));
    let premise = Goal::new(ActiveContext::Plain(rest), Rational::one(), LocalContext::new());
    let d = Derivation::node(Rule::SIn, g, vec![Derivation::leaf(Rule::SEmpty1, premise)]);
    let e = validate_derivation(&d).unwrap_err();
    assert_eq!(e.rule, Rule::SIn);
    assert!(e.path.is_empty());
    assert!(e.reason.contains("sender"));
}

#[test]
fn forged_backedge_rejected() {
    let mut d = sub_multi(&refinement(TJ, TD), &interface(TC)).unwrap().unwrap();
    d.children[0].backedge = Some(1);
    assert!(!check_derivation(&d));
}

#[test]
fn budget_is_reported_distinctly() {
    let r = sub_multi_with(&refinement(TJ, TD), &interface(TC), 3);
    assert_eq!(r.unwrap_err(), SubtypeError::SearchBudgetExceeded(3));
}

#[test]
fn recursive_context_refinement() {
    let sub = ctx("{ s[a] : rec x. (1: a->b!l().b<-a?r().x), s[b] : rec y. b<-a?l().(1: b->a!r().y) }");
    let sup = ctx("{ s[{a,b}] : rec z. (1: tau.z) }");
    let d = multi_ok(&sub, &sup);
    assert!(d.rules().contains(&Rule::Coinduction));
}

#[test]
fn split_over_several_interfaces() {
    let sub = refinement(TJ, TD).iter().chain(ctx("{ s[p] : (1: p->j!lws().p<-j?glt(bool)) }").iter()).map(|(c, t)| (c.clone(), t.clone())).collect();
    let sup: LocalContext =
        interface(TC).iter().chain(ctx("{ s[p] : (1: p->j!lws().p<-j?glt(bool)) }").iter()).map(|(c, t)| (c.clone(), t.clone())).collect();
    let d = multi_ok(&sub, &sup);
    assert_eq!(d.rule, Rule::SSplit);
}

#[test]
fn ill_formed_input_is_an_error() {
    let bad = ctx("{ s[a] : (0.5: a->b!x()) }");
    assert!(matches!(sub_multi(&bad, &bad), Err(SubtypeError::IllFormedType(_))));
}
