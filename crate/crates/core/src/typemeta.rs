//! Static metadata about session types: well-formedness, equi-recursive
//! unfolding, prefix sets, merging of similar summands and the canonical
//! form used as identity by every engine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::rational::Rational;
use crate::syntax::{is_end, Branch, Head, LocalContext, Msg, Name, SessionType, Summand, Ty};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeMetaError {
    #[error("type is not a recursion binder")]
    NotRecursive,
    #[error("unguarded recursion on `{0}`")]
    Unguarded(Name),
    #[error("unbound type variable `{0}`")]
    Unbound(Name),
}

/// One element of `pre(T)`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Prefix {
    /// `receiver <- sender ?`
    In { receiver: Name, sender: Name },
    /// `prob from -> to !`
    Out { prob: Rational, from: Name, to: Name },
    /// `prob tau . cont` with `cont` in canonical form.
    Tau { prob: Rational, cont: Ty },
}

/// Which clause of well-formedness a diagnostic is about.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum WfClause {
    /// Output heads must sit inside probabilistic sums.
    OutputInSum,
    /// Each probabilistic sum totals exactly one.
    SumIsOne,
    /// Equal message keys have equal payloads and continuations.
    Consistent,
    /// Probability outside (0,1].
    ProbabilityRange,
    /// Free or unguarded recursion variables.
    Recursion,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct WfDiagnostic {
    pub clause: WfClause,
    pub message: String,
}

impl fmt::Display for WfDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.clause, self.message)
    }
}

pub fn free_vars(t: &SessionType) -> BTreeSet<Name> {
    fn go(t: &SessionType, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        match t {
            SessionType::End => {}
            SessionType::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            SessionType::Rec(x, b) => {
                bound.push(x.clone());
                go(b, bound, out);
                bound.pop();
            }
            SessionType::Mixed(bs) => {
                for b in bs {
                    match b {
                        Branch::Input(_, c) => go(c, bound, out),
                        Branch::Sum(ss) => ss.iter().for_each(|s| go(&s.cont, bound, out)),
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    go(t, &mut Vec::new(), &mut out);
    out
}

pub fn is_closed(t: &SessionType) -> bool {
    free_vars(t).is_empty()
}

/// Checks that no `rec` body is a bare variable.
pub fn check_guarded(t: &SessionType) -> Result<(), TypeMetaError> {
    match t {
        SessionType::End | SessionType::Var(_) => Ok(()),
        SessionType::Rec(x, b) => {
            if matches!(**b, SessionType::Var(_)) {
                return Err(TypeMetaError::Unguarded(x.clone()));
            }
            check_guarded(b)
        }
        SessionType::Mixed(bs) => bs.iter().try_for_each(|b| match b {
            Branch::Input(_, c) => check_guarded(c),
            Branch::Sum(ss) => ss.iter().try_for_each(|s| check_guarded(&s.cont)),
        }),
    }
}

/// Closed and guarded.
pub fn check_structure(t: &SessionType) -> Result<(), TypeMetaError> {
    check_guarded(t)?;
    if let Some(v) = free_vars(t).into_iter().next() {
        return Err(TypeMetaError::Unbound(v));
    }
    Ok(())
}

fn fresh_name(base: &str, avoid: &BTreeSet<Name>) -> Name {
    (0..)
        .map(|i| format!("{base}{i}"))
        .find(|n| !avoid.contains(n))
        .unwrap()
}

/// Capture-avoiding substitution `t[x := r]`.
pub fn subst(t: &Ty, x: &str, r: &Ty) -> Ty {
    let fv_r = free_vars(r);
    subst_with(t, x, r, &fv_r)
}

fn subst_with(t: &Ty, x: &str, r: &Ty, fv_r: &BTreeSet<Name>) -> Ty {
    match &**t {
        SessionType::End => t.clone(),
        SessionType::Var(y) => {
            if y == x {
                r.clone()
            } else {
                t.clone()
            }
        }
        SessionType::Rec(y, b) => {
            if y == x {
                return t.clone();
            }
            if fv_r.contains(y) {
                let mut avoid = fv_r.clone();
                avoid.extend(free_vars(b));
                avoid.insert(x.to_string());
                let y2 = fresh_name(y, &avoid);
                let b2 = subst(b, y, &SessionType::var(y2.clone()));
                SessionType::rec(y2, subst_with(&b2, x, r, fv_r))
            } else {
                SessionType::rec(y.clone(), subst_with(b, x, r, fv_r))
            }
        }
        SessionType::Mixed(bs) => SessionType::mixed(
            bs.iter()
                .map(|b| match b {
                    Branch::Input(m, c) => Branch::Input(m.clone(), subst_with(c, x, r, fv_r)),
                    Branch::Sum(ss) => Branch::Sum(
                        ss.iter()
                            .map(|s| Summand::new(s.prob.clone(), s.head.clone(), subst_with(&s.cont, x, r, fv_r)))
                            .collect(),
                    ),
                })
                .collect(),
        ),
    }
}

/// One-step unfolding of `rec x. body` into `body[x := rec x. body]`.
pub fn unfold(t: &Ty) -> Result<Ty, TypeMetaError> {
    match &**t {
        SessionType::Rec(x, b) => Ok(subst(b, x, t)),
        _ => Err(TypeMetaError::NotRecursive),
    }
}

/// Unfolds leading binders until the head is not a `rec`.
pub fn unfold_top(t: &Ty) -> Ty {
    let mut cur = t.clone();
    let mut guard = 0usize;
    while let SessionType::Rec(..) = &*cur {
        cur = unfold(&cur).expect("rec");
        guard += 1;
        assert!(guard < 10_000, "unguarded recursion");
    }
    cur
}

/// Diagnostics for every violated well-formedness clause.
pub fn well_formed(t: &SessionType) -> Vec<WfDiagnostic> {
    let mut out = Vec::new();
    if let Err(e) = check_guarded(t) {
        out.push(WfDiagnostic {
            clause: WfClause::Recursion,
            message: e.to_string(),
        });
    }
    for v in free_vars(t) {
        out.push(WfDiagnostic {
            clause: WfClause::Recursion,
            message: format!("unbound type variable `{v}`"),
        });
    }
    wf_walk(t, &mut out);
    out
}

pub fn is_well_formed(t: &SessionType) -> bool {
    well_formed(t).is_empty()
}

fn wf_walk(t: &SessionType, out: &mut Vec<WfDiagnostic>) {
    match t {
        SessionType::End | SessionType::Var(_) => {}
        SessionType::Rec(_, b) => wf_walk(b, out),
        SessionType::Mixed(bs) => {
            let mut inputs: BTreeMap<(&str, &str, &str), (&Msg, Ty)> = BTreeMap::new();
            for b in bs {
                match b {
                    Branch::Input(m, c) => {
                        let key = (m.to.as_str(), m.from.as_str(), m.label.as_str());
                        let cc = canonical(c);
                        if let Some((m0, c0)) = inputs.get(&key) {
                            if m0.payload != m.payload || *c0 != cc {
                                out.push(WfDiagnostic {
                                    clause: WfClause::Consistent,
                                    message: format!(
                                        "inputs {}<-{}?{} differ in payload or continuation",
                                        m.to, m.from, m.label
                                    ),
                                });
                            }
                        } else {
                            inputs.insert(key, (m, cc));
                        }
                        wf_walk(c, out);
                    }
                    Branch::Sum(ss) => {
                        let total: Rational = ss.iter().map(|s| &s.prob).sum();
                        if !total.is_one() {
                            out.push(WfDiagnostic {
                                clause: WfClause::SumIsOne,
                                message: format!("probabilistic sum totals {total}, expected 1/1"),
                            });
                        }
                        let mut outs: BTreeMap<(&str, &str, &str), (&Msg, Ty)> = BTreeMap::new();
                        for s in ss {
                            if !s.prob.is_probability() {
                                out.push(WfDiagnostic {
                                    clause: WfClause::ProbabilityRange,
                                    message: format!("probability {} outside (0,1]", s.prob),
                                });
                            }
                            if let Head::Out(m) = &s.head {
                                let key = (m.from.as_str(), m.to.as_str(), m.label.as_str());
                                let cc = canonical(&s.cont);
                                if let Some((m0, c0)) = outs.get(&key) {
                                    if m0.payload != m.payload || *c0 != cc {
                                        out.push(WfDiagnostic {
                                            clause: WfClause::Consistent,
                                            message: format!(
                                                "outputs {}->{}!{} differ in payload or continuation",
                                                m.from, m.to, m.label
                                            ),
                                        });
                                    }
                                } else {
                                    outs.insert(key, (m, cc));
                                }
                            }
                            wf_walk(&s.cont, out);
                        }
                    }
                }
            }
        }
    }
}

/// `pre` of one branch of a mixed choice.
pub fn pre_branch(b: &Branch) -> BTreeSet<Prefix> {
    match b {
        Branch::Input(m, _) => [Prefix::In {
            receiver: m.to.clone(),
            sender: m.from.clone(),
        }]
        .into_iter()
        .collect(),
        Branch::Sum(ss) => pre_summands(ss),
    }
}

/// `pre` of a probabilistic sum with output and tau probabilities summed.
pub fn pre_summands(ss: &[Summand]) -> BTreeSet<Prefix> {
    let mut outs: BTreeMap<(Name, Name), Rational> = BTreeMap::new();
    let mut taus: BTreeMap<Ty, Rational> = BTreeMap::new();
    for s in ss {
        match &s.head {
            Head::Out(m) => *outs.entry((m.from.clone(), m.to.clone())).or_default() += &s.prob,
            Head::Tau => *taus.entry(canonical(&s.cont)).or_default() += &s.prob,
        }
    }
    outs.into_iter()
        .map(|((from, to), prob)| Prefix::Out { prob, from, to })
        .chain(taus.into_iter().map(|(cont, prob)| Prefix::Tau { prob, cont }))
        .collect()
}

/// The set of unguarded prefixes of `t`, read through its unfolding.
pub fn pre(t: &SessionType) -> BTreeSet<Prefix> {
    match t {
        SessionType::End | SessionType::Var(_) => BTreeSet::new(),
        SessionType::Rec(..) => {
            let mut cur: Ty = std::sync::Arc::new(t.clone());
            for _ in 0..64 {
                match &*cur {
                    SessionType::Rec(_, b) if matches!(&**b, SessionType::Var(_)) => return BTreeSet::new(),
                    SessionType::Rec(..) => cur = unfold(&cur).expect("rec"),
                    other => return pre(other),
                }
            }
            BTreeSet::new()
        }
        SessionType::Mixed(bs) => bs.iter().flat_map(pre_branch).collect(),
    }
}

/// Merges summands with identical head and continuation and sorts choices.
/// Binder names are kept.
pub fn merge_similar(t: &Ty) -> Ty {
    match &**t {
        SessionType::End | SessionType::Var(_) => t.clone(),
        SessionType::Rec(x, b) => SessionType::rec(x.clone(), merge_similar(b)),
        SessionType::Mixed(bs) => {
            SessionType::mixed(normalize_branches(bs.iter().map(|b| map_branch(b, &mut |c| merge_similar(c))).collect()))
        }
    }
}

fn map_branch(b: &Branch, f: &mut impl FnMut(&Ty) -> Ty) -> Branch {
    match b {
        Branch::Input(m, c) => Branch::Input(m.clone(), f(c)),
        Branch::Sum(ss) => Branch::Sum(
            ss.iter()
                .map(|s| Summand::new(s.prob.clone(), s.head.clone(), f(&s.cont)))
                .collect(),
        ),
    }
}

/// Merges equal summands inside each sum, sorts, and drops duplicate input
/// branches. Equal sums are kept: each may stand for a different channel.
pub fn normalize_branches(bs: Vec<Branch>) -> Vec<Branch> {
    let mut out: Vec<Branch> = bs
        .into_iter()
        .map(|b| match b {
            Branch::Sum(ss) => Branch::Sum(merge_summands(ss)),
            other => other,
        })
        .collect();
    out.sort();
    out.dedup_by(|a, b| matches!(a, Branch::Input(..)) && a == b);
    out
}

/// Adds up the probabilities of summands with equal head and continuation.
pub fn merge_summands(ss: Vec<Summand>) -> Vec<Summand> {
    let mut acc: BTreeMap<(Head, Ty), Rational> = BTreeMap::new();
    for s in ss {
        *acc.entry((s.head, s.cont)).or_default() += &s.prob;
    }
    let mut out: Vec<Summand> = acc
        .into_iter()
        .map(|((head, cont), prob)| Summand { prob, head, cont })
        .collect();
    out.sort();
    out
}

/// Canonical representative: merged and sorted choices, binders renamed by
/// nesting level, vacuous binders removed and empty choices turned into
/// `end`. Two types are equal up to renaming iff their canonical forms are equal.
pub fn canonical(t: &Ty) -> Ty {
    canon(t, &mut Vec::new())
}

fn canon(t: &Ty, env: &mut Vec<(Name, Name)>) -> Ty {
    match &**t {
        SessionType::End => t.clone(),
        SessionType::Var(x) => match env.iter().rev().find(|(o, _)| o == x) {
            Some((_, n)) => SessionType::var(n.clone()),
            None => t.clone(),
        },
        SessionType::Rec(x, b) => {
            if !free_vars(b).contains(x) {
                return canon(b, env);
            }
            let n = format!("t{}", env.len());
            env.push((x.clone(), n.clone()));
            let body = canon(b, env);
            env.pop();
            if is_end(&body) {
                SessionType::end()
            } else {
                SessionType::rec(n, body)
            }
        }
        SessionType::Mixed(bs) => {
            let mapped: Vec<Branch> = bs.iter().map(|b| map_branch(b, &mut |c| canon(c, env))).collect();
            let out = normalize_branches(mapped);
            if out.is_empty() {
                SessionType::end()
            } else {
                SessionType::mixed(out)
            }
        }
    }
}

/// Equality up to consistent renaming of recursion variables and merging.
pub fn alpha_eq(a: &Ty, b: &Ty) -> bool {
    canonical(a) == canonical(b)
}

/// Canonical form with the leading binders unfolded.
pub fn state_type(t: &Ty) -> Ty {
    let c = canonical(t);
    if matches!(*c, SessionType::Rec(..)) {
        canonical(&unfold_top(&c))
    } else {
        c
    }
}

/// Canonical context: every type in state form and `end` bindings erased.
pub fn canonical_context(d: &LocalContext) -> LocalContext {
    d.iter()
        .map(|(c, t)| (c.clone(), state_type(t)))
        .filter(|(_, t)| !is_end(t))
        .collect()
}

/// Splits a state-form type into its input branches and its sums.
pub fn split_modes(t: &SessionType) -> (Vec<(Msg, Ty)>, Vec<Vec<Summand>>) {
    let mut ins = Vec::new();
    let mut sums = Vec::new();
    for b in t.branches() {
        match b {
            Branch::Input(m, c) => ins.push((m.clone(), c.clone())),
            Branch::Sum(ss) => sums.push(ss.clone()),
        }
    }
    (ins, sums)
}

pub fn mixed_from(ins: Vec<(Msg, Ty)>, sums: Vec<Vec<Summand>>) -> Ty {
    let bs: Vec<Branch> = ins
        .into_iter()
        .map(|(m, c)| Branch::Input(m, c))
        .chain(sums.into_iter().map(Branch::Sum))
        .collect();
    if bs.is_empty() {
        SessionType::end()
    } else {
        Arc::new(SessionType::Mixed(normalize_branches(bs)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::parse_type;

    fn t(s: &str) -> Ty {
        parse_type(s).unwrap()
    }

    #[test]
    fn defendant_is_well_formed() {
        let td = t("(0.5: d->j!wk().end (+) 0.2: d->j!str().end (+) 0.3: d->j!wit().end)");
        assert!(well_formed(&td).is_empty());
    }

    #[test]
    fn short_sum_violates_b() {
        let d = well_formed(&t("(0.5: d->j!wk().end (+) 0.2: d->j!str().end)"));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].clause, WfClause::SumIsOne);
        assert!(d[0].message.contains("7/10"));
    }

    #[test]
    fn payload_mismatch_violates_c() {
        let d = well_formed(&t("p<-q?l(nat).end + p<-q?l(bool).end"));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].clause, WfClause::Consistent);
    }

    #[test]
    fn unfold_cases() {
        let r = t("rec t. p<-q?l().t");
        assert_eq!(unfold(&r).unwrap(), t("p<-q?l().(rec t. p<-q?l().t)"));
        let nested = t("rec t. rec u. p<-q?l().u");
        assert_eq!(unfold(&nested).unwrap(), t("rec u. p<-q?l().u"));
        assert_eq!(unfold(&t("end")), Err(TypeMetaError::NotRecursive));
    }

    #[test]
    fn unfold_avoids_capture() {
        let inner = SessionType::rec("u", SessionType::input(Msg::new("q", "p", "l", None), SessionType::var("t")));
        let out = subst(&inner, "t", &SessionType::var("u"));
        match &*out {
            SessionType::Rec(n, _) => assert_ne!(n, "u"),
            _ => panic!(),
        }
        assert!(free_vars(&out).contains("u"));
    }

    #[test]
    fn prefix_examples() {
        let base = t("(0.5: a->b!one().end (+) 0.2: a->c!two().end (+) 0.3: tau.x<-y?z().end)");
        let relabel = t("(0.5: a->b!three().end (+) 0.2: a->c!four().end (+) 0.1: tau.x<-y?z().end (+) 0.2: tau.x<-y?z().end)");
        let other = t("(0.7: a->b!one().end (+) 0.3: tau.x<-y?z().end)");
        assert_eq!(pre(&base), pre(&relabel));
        assert_ne!(pre(&base), pre(&other));
        assert_eq!(pre(&base).len(), 3);
    }

    #[test]
    fn merge_cases() {
        let m = merge_similar(&t("(0.1: tau.end (+) 0.2: tau.end (+) 0.7: a->b!l().end)"));
        assert_eq!(m, t("(0.3: tau.end (+) 0.7: a->b!l().end)"));
        let m2 = merge_similar(&t("(0.5: a->b!l().end (+) 0.5: a->b!l().end)"));
        assert_eq!(m2, t("(1: a->b!l().end)"));
        assert_eq!(merge_similar(&m2), m2);
    }

    #[test]
    fn canonical_identifies_alpha_variants() {
        assert!(alpha_eq(&t("rec x. p<-q?l().x"), &t("rec y. p<-q?l().y")));
        assert!(alpha_eq(&t("rec x. end"), &t("end")));
        assert!(alpha_eq(&t("rec x. p<-q?l().end"), &t("p<-q?l().end")));
        assert!(!alpha_eq(&t("p<-q?l().end"), &t("p<-q?m().end")));
    }

    #[test]
    fn state_type_unfolds() {
        let s = state_type(&t("rec x. p<-q?l().x"));
        assert!(matches!(*s, SessionType::Mixed(_)));
        assert_eq!(state_type(&s), s);
    }
}
