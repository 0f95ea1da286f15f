//! Rule-by-rule validation of derivations, independent of the provers.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Derivation, Goal, Rule, StdGoal};
use crate::ctxlts::{offered_inputs, pending};
use crate::rational::Rational;
use crate::syntax::{is_end, ActiveContext, ActiveType, Branch, Channel, Head, LocalContext, SessionType, Summand, Ty};
use crate::typemeta::{canonical, mixed_from, pre_branch, pre_summands, split_modes, state_type};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("node {path:?} [{rule}]: {reason}")]
pub struct CheckFailure {
    /// Child indices from the root to the failing node.
    pub path: Vec<usize>,
    pub rule: Rule,
    pub reason: String,
}

type Check = Result<(), String>;

fn fail<T>(msg: impl Into<String>) -> Result<T, String> {
    Err(msg.into())
}

fn ensure(cond: bool, msg: &str) -> Check {
    if cond {
        Ok(())
    } else {
        fail(msg)
    }
}

fn walk<G, N, C>(d: &Derivation<G>, norm: &N, rule_check: &C, anc: &mut Vec<(G, Rule)>, path: &mut Vec<usize>) -> Result<(), CheckFailure>
where
    G: Clone + PartialEq,
    N: Fn(&G) -> G,
    C: Fn(&Derivation<G>, &G, &[G]) -> Check,
{
    let g = norm(&d.goal);
    let here = |reason: String| CheckFailure {
        path: path.clone(),
        rule: d.rule,
        reason,
    };
    if d.rule == Rule::Coinduction {
        let Some(k) = d.backedge else { return Err(here("coinductive leaf without back-edge".into())) };
        if !d.children.is_empty() {
            return Err(here("coinductive leaf with premises".into()));
        }
        if k == 0 || k > anc.len() {
            return Err(here(format!("back-edge distance {k} out of range")));
        }
        let at = anc.len() - k;
        if anc[at].0 != g {
            return Err(here("back-edge target differs from this goal".into()));
        }
        if !anc[at..].iter().any(|(_, r)| r.is_productive()) {
            return Err(here("unguarded coinductive cycle".into()));
        }
        return Ok(());
    }
    if d.backedge.is_some() {
        return Err(here("back-edge on a non-coinductive node".into()));
    }
    let kids: Vec<G> = d.children.iter().map(|c| norm(&c.goal)).collect();
    rule_check(d, &g, &kids).map_err(here)?;
    anc.push((g, d.rule));
    for (i, c) in d.children.iter().enumerate() {
        path.push(i);
        walk(c, norm, rule_check, anc, path)?;
        path.pop();
    }
    anc.pop();
    Ok(())
}

/// Validates a single- or multi-channel derivation.
pub fn validate_derivation(d: &Derivation<Goal>) -> Result<(), CheckFailure> {
    walk(d, &|g: &Goal| g.normalized(), &check_node, &mut Vec::new(), &mut Vec::new())
}

pub fn check_derivation(d: &Derivation<Goal>) -> bool {
    validate_derivation(d).is_ok()
}

pub fn validate_std_derivation(d: &Derivation<StdGoal>) -> Result<(), CheckFailure> {
    walk(d, &|g: &StdGoal| g.normalized(), &check_std_node, &mut Vec::new(), &mut Vec::new())
}

pub fn check_std_derivation(d: &Derivation<StdGoal>) -> bool {
    validate_std_derivation(d).is_ok()
}

// ----- standard subtyping -----

fn check_std_node(d: &Derivation<StdGoal>, g: &StdGoal, kids: &[StdGoal]) -> Check {
    let std = |sub: Ty, sup: Ty| StdGoal { sub, sup }.normalized();
    match d.rule {
        Rule::SubEnd => {
            ensure(kids.is_empty(), "axiom with premises")?;
            ensure(is_end(&g.sub) && is_end(&g.sup), "both types must be end")
        }
        Rule::SubSigma => {
            ensure(!is_end(&g.sub) && !is_end(&g.sup), "choice expected on both sides")?;
            let (ia, sa) = split_modes(&g.sub);
            let (ib, sb) = split_modes(&g.sup);
            let want = [std(mixed_from(ia, vec![]), mixed_from(ib, vec![])), std(mixed_from(vec![], sa), mixed_from(vec![], sb))];
            ensure(kids == want, "premises are not the input and output parts")
        }
        Rule::SubSigmaIn => {
            let (ia, sa) = split_modes(&g.sub);
            let (ib, sb) = split_modes(&g.sup);
            ensure(sa.is_empty() && sb.is_empty(), "inputs only")?;
            ensure(!ia.is_empty() && !ib.is_empty(), "empty input part")?;
            ensure(kids.len() == ib.len(), "one premise per supertype input")?;
            for ((mb, tb), k) in ib.iter().zip(kids) {
                let ok = ia.iter().any(|(ma, ta)| ma == mb && std(ta.clone(), tb.clone()) == *k);
                ensure(ok, "premise does not match an input pair")?;
            }
            let kept: Vec<_> = ib.iter().map(|(m, t)| pre_branch(&Branch::Input(m.clone(), t.clone()))).collect();
            for (ma, ta) in &ia {
                let matched = ib.iter().any(|(mb, _)| mb == ma);
                let justified = kept.contains(&pre_branch(&Branch::Input(ma.clone(), ta.clone())));
                ensure(matched || justified, "extra input with an unjustified prefix")?;
            }
            Ok(())
        }
        Rule::SubSigmaOut => {
            let (ia, sa) = split_modes(&g.sub);
            let (ib, sb) = split_modes(&g.sup);
            ensure(ia.is_empty() && ib.is_empty(), "sums only")?;
            ensure(!sa.is_empty() && !sb.is_empty(), "empty output part")?;
            std_flows(d, &sa, &sb, kids)
        }
        r => fail(format!("rule {r} is not a standard subtyping rule")),
    }
}

fn std_flows(d: &Derivation<StdGoal>, sa: &[Vec<Summand>], sb: &[Vec<Summand>], kids: &[StdGoal]) -> Check {
    let mut subs: Vec<usize> = d.flows.iter().map(|f| f.sub_sum).collect();
    subs.sort();
    ensure(subs == (0..sa.len()).collect::<Vec<_>>(), "every subtype sum needs exactly one matching")?;
    let mut sups: Vec<usize> = d.flows.iter().map(|f| f.sup_sum).collect();
    sups.sort();
    sups.dedup();
    ensure(sups.len() == d.flows.len() && sups.iter().all(|&j| j < sb.len()), "supertype sums matched twice")?;
    for (j, s) in sb.iter().enumerate() {
        if !sups.contains(&j) {
            ensure(sa.iter().any(|a| pre_summands(a) == pre_summands(s)), "unmatched supertype sum loses a prefix")?;
        }
    }
    let mut used = vec![false; kids.len()];
    for f in &d.flows {
        let (a, b) = (&sa[f.sub_sum], &sb[f.sup_sum]);
        let mut out_k = vec![Rational::zero(); a.len()];
        let mut in_l = vec![Rational::zero(); b.len()];
        for e in &f.edges {
            ensure(e.sub_summand < a.len() && e.sup_summand < b.len() && e.child < kids.len(), "flow edge out of range")?;
            ensure(e.amount.is_positive(), "non-positive flow")?;
            ensure(!used[e.child], "premise shared by two flow edges")?;
            used[e.child] = true;
            let (x, y) = (&a[e.sub_summand], &b[e.sup_summand]);
            ensure(x.head == y.head, "flow between different actions")?;
            let want = StdGoal {
                sub: x.cont.clone(),
                sup: y.cont.clone(),
            }
            .normalized();
            ensure(kids[e.child] == want, "flow premise is not the continuation pair")?;
            out_k[e.sub_summand] += &e.amount;
            in_l[e.sup_summand] += &e.amount;
        }
        ensure(a.iter().zip(&out_k).all(|(s, v)| s.prob == *v), "flow does not exhaust subtype probabilities")?;
        ensure(b.iter().zip(&in_l).all(|(s, v)| s.prob == *v), "flow does not exhaust supertype probabilities")?;
    }
    ensure(used.iter().all(|u| *u), "premise not used by any flow edge")
}

// ----- single- and multi-channel subtyping -----

fn rhs1(g: &Goal) -> Result<(&Channel, &Ty), String> {
    match g.rhs.len() {
        1 => Ok(g.rhs.iter().next().expect("one binding")),
        _ => fail("supertype must be a single binding"),
    }
}

fn plain(g: &Goal) -> Result<&LocalContext, String> {
    match &g.lhs {
        ActiveContext::Plain(d) => Ok(d),
        _ => fail("expected a context without active channel"),
    }
}

fn active_type(g: &Goal) -> Result<(&Channel, &Ty, &LocalContext), String> {
    match &g.lhs {
        ActiveContext::Active {
            chan,
            view: ActiveType::Type(t),
            rest,
        } => Ok((chan, t, rest)),
        _ => fail("expected an active channel with a choice"),
    }
}

fn active_bare(g: &Goal) -> Result<(&Channel, &Head, &Ty, &LocalContext), String> {
    match &g.lhs {
        ActiveContext::Active {
            chan,
            view: ActiveType::Bare(h, t),
            rest,
        } => Ok((chan, h, t, rest)),
        _ => fail("expected an active channel with a single action"),
    }
}

fn lone(one_binding: &LocalContext) -> Result<(Channel, Ty), String> {
    match one_binding.len() {
        1 => Ok(one_binding.iter().next().map(|(c, t)| (c.clone(), t.clone())).expect("one binding")),
        _ => fail("expected a single subtype binding"),
    }
}

fn goal(lhs: ActiveContext, prob: Rational, rhs: LocalContext) -> Goal {
    Goal::new(lhs, prob, rhs)
}

fn act(chan: &Channel, t: Ty, rest: &LocalContext) -> ActiveContext {
    ActiveContext::Active {
        chan: chan.clone(),
        view: ActiveType::Type(t),
        rest: rest.clone(),
    }
}

fn bind(c: &Channel, t: &Ty) -> LocalContext {
    LocalContext::singleton(c.clone(), t.clone())
}

fn with(rest: &LocalContext, c: &Channel, t: &Ty) -> LocalContext {
    let mut d = rest.clone();
    d.set(c.clone(), t.clone());
    d
}

fn one_summand(t: &Ty) -> Result<&Summand, String> {
    match t.branches() {
        [Branch::Sum(ss)] if ss.len() == 1 => Ok(&ss[0]),
        _ => fail("supertype must be a single probabilistic action"),
    }
}

/// Branches of the supertype of `g` on channel `c`, empty for `∅`.
fn rhs_branches(g: &Goal, c: &Channel) -> Result<Vec<Branch>, String> {
    match g.rhs.len() {
        0 => Ok(vec![]),
        1 => {
            let (k, t) = g.rhs.iter().next().expect("one binding");
            ensure(k == c, "premise supertype on a different channel")?;
            Ok(state_type(t).branches().to_vec())
        }
        _ => fail("premise supertype has several bindings"),
    }
}

fn sorted<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v
}

fn check_node(d: &Derivation<Goal>, g: &Goal, kids: &[Goal]) -> Check {
    let pi = &g.prob;
    ensure(pi.is_positive() && pi <= &Rational::one(), "index outside (0,1]")?;
    let arity = |n: usize| ensure(kids.len() == n, &format!("expected {n} premises"));
    match d.rule {
        Rule::SEmpty1 | Rule::SubCEmpty => {
            arity(0)?;
            ensure(plain(g)?.is_empty() && g.rhs.is_empty() && pi.is_one(), "only ∅ ≤_1 ∅ is an axiom")
        }
        Rule::SEmpty => {
            arity(0)?;
            ensure(g.rhs.is_empty(), "supertype must be ∅")?;
            ensure(matches!(g.lhs, ActiveContext::Active { .. }), "needs an active channel")?;
            ensure(pending(&g.lhs) == Ok(true), "active context is not pending")
        }
        Rule::SSplit | Rule::SubCSplit => {
            arity(2)?;
            let d_sub = plain(g)?;
            ensure(pi.is_one(), "split only at index 1")?;
            let (c, t) = rhs1(&kids[1])?;
            ensure(g.rhs.get(c) == Some(t), "split binding not in the supertype")?;
            let mut rest_sup = g.rhs.clone();
            rest_sup.remove(c);
            ensure(kids[0].rhs == rest_sup, "left premise must keep the other bindings")?;
            ensure(kids[0].prob.is_one() && kids[1].prob.is_one(), "premises at index 1")?;
            let (l, r) = (plain(&kids[0])?, plain(&kids[1])?);
            if d.rule == Rule::SubCSplit {
                ensure(r.len() == 1, "right premise pairs one binding with one binding")?;
            }
            let mut joined = l.clone();
            for (k, v) in r.iter() {
                ensure(!joined.contains(k), "subtype split overlaps")?;
                joined.set(k.clone(), v.clone());
            }
            ensure(joined == *d_sub, "split does not partition the subtype")
        }
        Rule::SSigma1 => {
            let d_sub = plain(g)?;
            let (c, t) = rhs1(g)?;
            ensure(!d_sub.is_empty(), "no subtype channels")?;
            ensure(d_sub.channels().all(|k| k.session == c.session), "subtype channels of another session")?;
            arity(d_sub.len())?;
            let mut all = Vec::new();
            for ((ck, tk), kid) in d_sub.iter().zip(kids) {
                let mut rest = d_sub.clone();
                rest.remove(ck);
                let want_lhs = goal(act(ck, tk.clone(), &rest), pi.clone(), LocalContext::new()).lhs;
                ensure(kid.lhs == want_lhs && kid.prob == *pi, "premise must activate the next channel")?;
                all.extend(rhs_branches(kid, c)?);
            }
            ensure(sorted(all) == sorted(state_type(t).branches().to_vec()), "branches not partitioned across channels")
        }
        Rule::SSigma2 => {
            arity(2)?;
            let (chan, t, rest) = active_type(g)?;
            let (c2, t2) = rhs1(g)?;
            let (ia, sa) = split_modes(t);
            let (ib, sb) = split_modes(t2);
            let want = [
                goal(act(chan, mixed_from(ia, vec![]), rest), pi.clone(), bind(c2, &mixed_from(ib, vec![]))),
                goal(act(chan, mixed_from(vec![], sa), rest), pi.clone(), bind(c2, &mixed_from(vec![], sb))),
            ];
            ensure(kids == want, "premises are not the input and output parts")
        }
        Rule::SubCSigma => {
            arity(2)?;
            let (c1, t) = lone(plain(g)?)?;
            let (c2, t2) = rhs1(g)?;
            let (ia, sa) = split_modes(&t);
            let (ib, sb) = split_modes(t2);
            let p = |x: Ty| ActiveContext::Plain(bind(&c1, &x));
            let want = [
                goal(p(mixed_from(ia, vec![])), pi.clone(), bind(c2, &mixed_from(ib, vec![]))),
                goal(p(mixed_from(vec![], sa)), pi.clone(), bind(c2, &mixed_from(vec![], sb))),
            ];
            ensure(kids == want, "premises are not the input and output parts")
        }
        Rule::SSigmaIn | Rule::SubCSigmaIn => {
            let single = d.rule == Rule::SubCSigmaIn;
            let (chan, t, rest) = match single {
                true => {
                    let (c, t) = lone(plain(g)?)?;
                    (c, t, LocalContext::new())
                }
                false => {
                    let (c, t, r) = active_type(g)?;
                    (c.clone(), t.clone(), r.clone())
                }
            };
            let (c2, t2) = rhs1(g)?;
            let (ia, sa) = split_modes(&t);
            let (ib, sb) = split_modes(t2);
            ensure(sa.is_empty() && sb.is_empty(), "inputs only")?;
            ensure(!ib.is_empty(), "supertype inputs must be nonempty")?;
            let mut avail: Vec<Branch> = ia.iter().map(|(m, c)| Branch::Input(m.clone(), c.clone())).collect();
            let mut kept = Vec::new();
            let mut all = Vec::new();
            for kid in kids {
                ensure(kid.prob == *pi, "premise index differs")?;
                let mine = avail
                    .iter()
                    .position(|b| {
                        let x = SessionType::mixed(vec![b.clone()]);
                        let lhs = if single { ActiveContext::Plain(bind(&chan, &x)) } else { act(&chan, x, &rest) };
                        goal(lhs, pi.clone(), LocalContext::new()).lhs == kid.lhs
                    })
                    .ok_or("premise is not one subtype input")?;
                let b = avail.remove(mine);
                kept.push(pre_branch(&b));
                all.extend(rhs_branches(kid, c2)?);
            }
            for b in &avail {
                ensure(kept.contains(&pre_branch(b)), "dropped input with an unjustified prefix")?;
            }
            ensure(sorted(all) == sorted(state_type(t2).branches().to_vec()), "supertype inputs not partitioned")
        }
        Rule::SSigmaOut | Rule::SubCSigmaOut => {
            let single = d.rule == Rule::SubCSigmaOut;
            let (chan, t, rest) = match single {
                true => {
                    let (c, t) = lone(plain(g)?)?;
                    (c, t, LocalContext::new())
                }
                false => {
                    let (c, t, r) = active_type(g)?;
                    (c.clone(), t.clone(), r.clone())
                }
            };
            let (c2, t2) = rhs1(g)?;
            let (ia, sa) = split_modes(&t);
            let (ib, _) = split_modes(t2);
            ensure(ia.is_empty() && ib.is_empty(), "sums only")?;
            arity(sa.len())?;
            let mut avail: Vec<Vec<Summand>> = sa.clone();
            let mut covered = Vec::new();
            for kid in kids {
                ensure(kid.prob == *pi, "premise index differs")?;
                let mine = avail
                    .iter()
                    .position(|ss| {
                        let x = SessionType::sum(ss.clone());
                        let lhs = if single { ActiveContext::Plain(bind(&chan, &x)) } else { act(&chan, x, &rest) };
                        goal(lhs, pi.clone(), LocalContext::new()).lhs == kid.lhs
                    })
                    .ok_or("premise is not one subtype sum")?;
                avail.remove(mine);
                covered.extend(rhs_branches(kid, c2)?);
            }
            let mut extra: Vec<Branch> = state_type(t2).branches().to_vec();
            for b in &covered {
                let k = extra.iter().position(|x| x == b).ok_or("premise supertype not part of the conclusion")?;
                extra.remove(k);
            }
            ensure(!covered.is_empty() || !extra.is_empty(), "empty supertype choice")?;
            for b in &extra {
                let Branch::Sum(ss) = b else { return fail("input in output part") };
                ensure(sa.iter().any(|a| pre_summands(a) == pre_summands(ss)), "extra supertype sum loses a prefix")?;
            }
            Ok(())
        }
        Rule::SOplus | Rule::SubCOplus => {
            let single = d.rule == Rule::SubCOplus;
            let (chan, t, rest) = match single {
                true => {
                    let (c, t) = lone(plain(g)?)?;
                    (c, t, LocalContext::new())
                }
                false => {
                    let (c, t, r) = active_type(g)?;
                    (c.clone(), t.clone(), r.clone())
                }
            };
            let (c2, t2) = rhs1(g)?;
            let [Branch::Sum(a)] = t.branches() else { return fail("subtype must be one sum") };
            let t2 = state_type(t2);
            let [Branch::Sum(b)] = t2.branches() else { return fail("supertype must be one sum") };
            let total: Rational = b.iter().map(|s| &s.prob).sum();
            ensure(total == *pi, "index differs from the supertype mass")?;
            let mut lhs_mass: BTreeMap<(Head, Ty), Rational> = BTreeMap::new();
            let mut rhs_mass: BTreeMap<(Head, Ty), Rational> = BTreeMap::new();
            for kid in kids {
                let (kc, h, tc, kr) = active_bare(kid)?;
                ensure(*kc == chan && *kr == rest, "premise changes the context")?;
                *lhs_mass.entry((h.clone(), canonical(tc))).or_default() += &kid.prob;
                for br in rhs_branches(kid, c2)? {
                    let Branch::Sum(ps) = br else { return fail("premise supertype is not a sum") };
                    for p in ps {
                        *rhs_mass.entry((p.head.clone(), canonical(&p.cont))).or_default() += &p.prob;
                    }
                }
            }
            let want_lhs: BTreeMap<(Head, Ty), Rational> =
                a.iter().map(|s| ((s.head.clone(), canonical(&s.cont)), &s.prob * pi)).collect();
            let want_rhs: BTreeMap<(Head, Ty), Rational> =
                b.iter().map(|s| ((s.head.clone(), canonical(&s.cont)), s.prob.clone())).collect();
            ensure(lhs_mass == want_lhs, "premise indices do not split the subtype summands")?;
            ensure(rhs_mass == want_rhs, "premises do not partition the supertype summands")
        }
        Rule::SIn | Rule::SubCIn => {
            arity(1)?;
            ensure(pi.is_one(), "input rule at index 1")?;
            let (chan, t, rest) = match d.rule {
                Rule::SubCIn => {
                    let (c, t) = lone(plain(g)?)?;
                    (c, t, LocalContext::new())
                }
                _ => {
                    let (c, t, r) = active_type(g)?;
                    (c.clone(), t.clone(), r.clone())
                }
            };
            let (c2, t2) = rhs1(g)?;
            let [Branch::Input(m, ta)] = t.branches() else { return fail("subtype must be one input") };
            let [Branch::Input(mb, tb)] = t2.branches() else { return fail("supertype must be one input") };
            ensure(m == mb, "different input actions")?;
            ensure(chan.roles.is_subset(&c2.roles), "subtype roles not included")?;
            ensure(c2.has_role(&m.to), "receiver not in supertype roles")?;
            ensure(!rest.has_role(&chan.session, &m.from), "sender is inside the context")?;
            let want = goal(ActiveContext::Plain(with(&rest, &chan, ta)), Rational::one(), bind(c2, tb));
            ensure(kids[0] == want, "premise is not the continuation")
        }
        Rule::SOut | Rule::SubCOut => {
            arity(1)?;
            let (chan, h, ta, rest) = active_bare(g)?;
            ensure(d.rule == Rule::SOut || rest.is_empty(), "single-channel rule with extra bindings")?;
            let Head::Out(m) = h else { return fail("subtype must be an output") };
            let (c2, t2) = rhs1(g)?;
            let s = one_summand(t2)?;
            ensure(s.head == *h && s.prob == *pi, "supertype output or probability differs")?;
            ensure(chan.roles.is_subset(&c2.roles), "subtype roles not included")?;
            ensure(c2.has_role(&m.from), "sender not in supertype roles")?;
            if d.rule == Rule::SOut {
                ensure(!rest.has_role(&chan.session, &m.to), "receiver is inside the context")?;
            }
            let want = goal(ActiveContext::Plain(with(rest, chan, ta)), Rational::one(), bind(c2, &s.cont));
            ensure(kids[0] == want, "premise is not the continuation")
        }
        Rule::SubCTau => {
            arity(1)?;
            let (chan, h, ta, rest) = active_bare(g)?;
            ensure(*h == Head::Tau && rest.is_empty(), "internal action on one binding")?;
            let (c2, t2) = rhs1(g)?;
            let s = one_summand(t2)?;
            ensure(s.head == Head::Tau && s.prob == *pi, "supertype internal action or probability differs")?;
            let want = goal(ActiveContext::Plain(bind(chan, ta)), Rational::one(), bind(c2, &s.cont));
            ensure(kids[0] == want, "premise is not the continuation")
        }
        Rule::SLink => {
            arity(1)?;
            let (chan, h, ta, rest) = active_bare(g)?;
            let Head::Out(m) = h else { return fail("link needs an output") };
            ensure(chan.has_role(&m.from), "sender not on the active channel")?;
            let ok = rest.iter().any(|(c2, t2)| {
                c2.session == chan.session
                    && c2.has_role(&m.to)
                    && offered_inputs(t2).into_iter().any(|(mi, ti)| {
                        mi == *m && kids[0] == goal(ActiveContext::Plain(with(&with(rest, c2, &ti), chan, ta)), pi.clone(), g.rhs.clone())
                    })
            });
            ensure(ok, "no partner offering the matching input")
        }
        Rule::STauL => {
            arity(1)?;
            let (chan, h, ta, rest) = active_bare(g)?;
            ensure(*h == Head::Tau, "left internal action expected")?;
            let want = goal(ActiveContext::Plain(with(rest, chan, ta)), pi.clone(), g.rhs.clone());
            ensure(kids[0] == want, "premise is not the continuation")
        }
        Rule::STauR => {
            arity(1)?;
            let (c, t) = rhs1(g)?;
            let s = one_summand(t)?;
            ensure(s.head == Head::Tau && s.prob == *pi, "supertype internal action or probability differs")?;
            let want = goal(g.lhs.clone(), Rational::one(), bind(c, &s.cont));
            ensure(kids[0] == want, "premise is not the continuation")
        }
        r => fail(format!("rule {r} does not apply to context goals")),
    }
}
