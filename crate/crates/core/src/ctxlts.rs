//! Labelled transitions of local contexts, finite reachability, and the
//! safety, deadlock-freedom and pending predicates.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::rational::Rational;
use crate::surface::{print_context, print_msg_in, print_msg_out};
use crate::syntax::{ActiveContext, ActiveType, Branch, Channel, Head, LocalContext, Msg, Name, SessionType, Ty};
use crate::typemeta::{canonical_context, is_well_formed, state_type, well_formed};

pub const DEFAULT_STATE_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CtxError {
    #[error("ill-formed type for {chan}: {detail}")]
    IllFormedType { chan: String, detail: String },
    #[error("no active channel {0} in context")]
    UnboundActiveChannel(String),
    #[error("state budget of {0} exceeded during reachability")]
    StateBudgetExceeded(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CtxLabel {
    /// `s: q <- p ? l(U)` offered by the receiver `msg.to`.
    In(Name, Msg),
    /// `s: p -> q ! l(U)` offered by the sender `msg.from`.
    Out(Name, Msg),
    Tau(Name),
    /// Communication from `msg.from` to `msg.to`.
    Com(Name, Msg),
}

impl CtxLabel {
    pub fn is_reduction(&self) -> bool {
        matches!(self, CtxLabel::Tau(_) | CtxLabel::Com(..))
    }
}

impl fmt::Display for CtxLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CtxLabel::In(s, m) => write!(f, "{s}:{}", print_msg_in(m)),
            CtxLabel::Out(s, m) => write!(f, "{s}:{}", print_msg_out(m)),
            CtxLabel::Tau(s) => write!(f, "{s}:tau"),
            CtxLabel::Com(s, m) => {
                let pay = match m.payload {
                    None => "",
                    Some(crate::syntax::BaseType::Nat) => "nat",
                    Some(crate::syntax::BaseType::Bool) => "bool",
                };
                write!(f, "{s}:{}->{}:{}({pay})", m.from, m.to, m.label)
            }
        }
    }
}

/// One labelled step `Δ --α-->_π Δ'`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Transition {
    pub label: CtxLabel,
    pub prob: Rational,
    pub target: LocalContext,
}

fn check_wf(d: &LocalContext) -> Result<(), CtxError> {
    for (c, t) in d.iter() {
        if !is_well_formed(t) {
            let detail = well_formed(t)
                .into_iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(CtxError::IllFormedType { chan: c.to_string(), detail });
        }
    }
    Ok(())
}

fn with(d: &LocalContext, updates: &[(&Channel, &Ty)]) -> LocalContext {
    let mut out = d.clone();
    for (c, t) in updates {
        out.set((*c).clone(), (*t).clone());
    }
    canonical_context(&out)
}

/// Inputs currently offered by `t`, unfolded.
pub fn offered_inputs(t: &Ty) -> Vec<(Msg, Ty)> {
    state_type(t)
        .branches()
        .iter()
        .filter_map(|b| match b {
            Branch::Input(m, c) => Some((m.clone(), c.clone())),
            Branch::Sum(_) => None,
        })
        .collect()
}

/// Channels other than `except` of session `s` offering the exact input `m`.
fn receivers<'a>(d: &'a LocalContext, except: &Channel, m: &Msg) -> Vec<(&'a Channel, Ty)> {
    d.iter()
        .filter(|(c, _)| *c != except && c.session == except.session)
        .filter_map(|(c, t)| {
            offered_inputs(t)
                .into_iter()
                .find(|(mi, _)| mi == m)
                .map(|(_, cont)| (c, cont))
        })
        .collect()
}

fn step_unchecked(d: &LocalContext) -> Vec<Transition> {
    let d = canonical_context(d);
    let mut out = Vec::new();
    for (c, t) in d.iter() {
        let s = &c.session;
        for b in state_type(t).branches() {
            match b {
                Branch::Input(m, cont) => out.push(Transition {
                    label: CtxLabel::In(s.clone(), m.clone()),
                    prob: Rational::one(),
                    target: with(&d, &[(c, cont)]),
                }),
                Branch::Sum(ss) => {
                    for sm in ss {
                        match &sm.head {
                            Head::Tau => out.push(Transition {
                                label: CtxLabel::Tau(s.clone()),
                                prob: sm.prob.clone(),
                                target: with(&d, &[(c, &sm.cont)]),
                            }),
                            Head::Out(m) => {
                                out.push(Transition {
                                    label: CtxLabel::Out(s.clone(), m.clone()),
                                    prob: sm.prob.clone(),
                                    target: with(&d, &[(c, &sm.cont)]),
                                });
                                for (c2, cont2) in receivers(&d, c, m) {
                                    out.push(Transition {
                                        label: CtxLabel::Com(s.clone(), m.clone()),
                                        prob: sm.prob.clone(),
                                        target: with(&d, &[(c, &sm.cont), (c2, &cont2)]),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// All single-channel and communication transitions of `d`.
pub fn step(d: &LocalContext) -> Result<Vec<Transition>, CtxError> {
    check_wf(d)?;
    Ok(step_unchecked(d))
}

/// Only the `↦` steps (communications and internal actions).
pub fn reductions(d: &LocalContext) -> Vec<Transition> {
    step_unchecked(d).into_iter().filter(|t| t.label.is_reduction()).collect()
}

/// Transitions enabled by the active channel's outputs or internal actions.
pub fn step_active(l: &ActiveContext) -> Result<Vec<Transition>, CtxError> {
    let (chan, view, rest) = match l {
        ActiveContext::Plain(d) => return step(d),
        ActiveContext::Active { chan, view, rest } => (chan, view, rest),
    };
    if rest.contains(chan) {
        return Err(CtxError::UnboundActiveChannel(chan.to_string()));
    }
    check_wf(rest)?;
    let s = &chan.session;
    let rest = canonical_context(rest);
    let summands: Vec<(Rational, Head, Ty)> = match view {
        ActiveType::Bare(h, cont) => vec![(Rational::one(), h.clone(), cont.clone())],
        ActiveType::Type(t) => state_type(t)
            .branches()
            .iter()
            .flat_map(|b| match b {
                Branch::Sum(ss) => ss
                    .iter()
                    .map(|sm| (sm.prob.clone(), sm.head.clone(), sm.cont.clone()))
                    .collect(),
                Branch::Input(..) => vec![],
            })
            .collect(),
    };
    let mut out = Vec::new();
    for (prob, head, cont) in summands {
        match head {
            Head::Tau => out.push(Transition {
                label: CtxLabel::Tau(s.clone()),
                prob,
                target: with(&rest, &[(chan, &cont)]),
            }),
            Head::Out(m) => {
                out.push(Transition {
                    label: CtxLabel::Out(s.clone(), m.clone()),
                    prob: prob.clone(),
                    target: with(&rest, &[(chan, &cont)]),
                });
                for (c2, cont2) in receivers(&rest, chan, &m) {
                    out.push(Transition {
                        label: CtxLabel::Com(s.clone(), m.clone()),
                        prob: prob.clone(),
                        target: with(&rest, &[(chan, &cont), (c2, &cont2)]),
                    });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtxEdge {
    pub from: usize,
    pub label: CtxLabel,
    pub prob: Rational,
    pub to: usize,
}

/// States reachable under `↦`, numbered in breadth-first order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtxGraph {
    pub states: Vec<LocalContext>,
    pub edges: Vec<CtxEdge>,
    pub initial: usize,
    /// Breadth-first parent edge of every non-initial state.
    parent: Vec<Option<usize>>,
}

impl CtxGraph {
    pub fn out_edges(&self, s: usize) -> impl Iterator<Item = &CtxEdge> {
        self.edges.iter().filter(move |e| e.from == s)
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.out_edges(s).next().is_none()
    }

    /// Shortest path of edges from the initial state to `s`.
    pub fn path_to(&self, mut s: usize) -> Vec<CtxEdge> {
        let mut path = Vec::new();
        while let Some(e) = self.parent[s] {
            path.push(self.edges[e].clone());
            s = self.edges[e].from;
        }
        path.reverse();
        path
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "initial": self.initial,
            "states": self.states.iter().map(print_context).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|e| serde_json::json!({
                "from": e.from,
                "to": e.to,
                "label": e.label.to_string(),
                "prob": e.prob.to_string(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph ctx {\n  node [shape=box];\n");
        for (i, st) in self.states.iter().enumerate() {
            out.push_str(&format!("  n{i} [label=\"{}\"];\n", dot_escape(&print_context(st))));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{} @ {}\"];\n",
                e.from,
                e.to,
                dot_escape(&e.label.to_string()),
                e.prob
            ));
        }
        out.push_str("}\n");
        out
    }
}

pub(crate) fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Reachability under `↦` with the default state cap.
pub fn reach(d: &LocalContext) -> Result<CtxGraph, CtxError> {
    reach_with_cap(d, DEFAULT_STATE_CAP)
}

pub fn reach_with_cap(d: &LocalContext, cap: usize) -> Result<CtxGraph, CtxError> {
    check_wf(d)?;
    let init = canonical_context(d);
    let mut index: BTreeMap<LocalContext, usize> = BTreeMap::new();
    let mut g = CtxGraph {
        states: vec![init.clone()],
        edges: Vec::new(),
        initial: 0,
        parent: vec![None],
    };
    index.insert(init, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let here = g.states[i].clone();
        for t in reductions(&here) {
            let j = match index.get(&t.target) {
                Some(&j) => j,
                None => {
                    if g.states.len() >= cap {
                        return Err(CtxError::StateBudgetExceeded(cap));
                    }
                    let j = g.states.len();
                    index.insert(t.target.clone(), j);
                    g.states.push(t.target.clone());
                    g.parent.push(Some(g.edges.len()));
                    queue.push_back(j);
                    j
                }
            };
            g.edges.push(CtxEdge {
                from: i,
                label: t.label,
                prob: t.prob,
                to: j,
            });
        }
    }
    Ok(g)
}

/// Outcome of a reachability-based check with a shortest witness path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub holds: bool,
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub path: Vec<CtxEdge>,
    pub state: LocalContext,
    /// For safety: the output and input that fail to communicate.
    pub conflict: Option<(CtxLabel, CtxLabel)>,
}

impl Counterexample {
    pub fn describe(&self, g: &CtxGraph) -> String {
        let mut s = String::new();
        let mut cur = g.initial;
        s.push_str(&print_context(&g.states[cur]));
        for e in &self.path {
            cur = e.to;
            s.push_str(&format!("\n  --{} @ {}--> {}", e.label, e.prob, print_context(&g.states[cur])));
        }
        if let Some((o, i)) = &self.conflict {
            s.push_str(&format!("\n  unmatched: {o} against {i}"));
        }
        s
    }
}

/// The first output/input pair at `d` that cannot communicate.
pub fn safety_conflict(d: &LocalContext) -> Option<(CtxLabel, CtxLabel)> {
    let ts = step_unchecked(d);
    for o in &ts {
        let CtxLabel::Out(s, mo) = &o.label else { continue };
        for i in &ts {
            let CtxLabel::In(s2, mi) = &i.label else { continue };
            if s2 != s || mi.from != mo.from || mi.to != mo.to {
                continue;
            }
            let com = ts
                .iter()
                .any(|t| matches!(&t.label, CtxLabel::Com(s3, mc) if s3 == s && mc == mo));
            if !com {
                return Some((o.label.clone(), i.label.clone()));
            }
        }
    }
    None
}

pub fn safe_in(g: &CtxGraph) -> Verdict {
    for (i, st) in g.states.iter().enumerate() {
        if let Some(conflict) = safety_conflict(st) {
            return Verdict {
                holds: false,
                counterexample: Some(Counterexample {
                    path: g.path_to(i),
                    state: st.clone(),
                    conflict: Some(conflict),
                }),
            };
        }
    }
    Verdict { holds: true, counterexample: None }
}

pub fn dfree_in(g: &CtxGraph) -> Verdict {
    for (i, st) in g.states.iter().enumerate() {
        if g.is_terminal(i) && !st.is_empty() {
            return Verdict {
                holds: false,
                counterexample: Some(Counterexample {
                    path: g.path_to(i),
                    state: st.clone(),
                    conflict: None,
                }),
            };
        }
    }
    Verdict { holds: true, counterexample: None }
}

/// Safety: every reachable output meeting an input of the same pair communicates.
pub fn safe(d: &LocalContext) -> Result<Verdict, CtxError> {
    Ok(safe_in(&reach(d)?))
}

/// Deadlock-freedom: every reachable terminal context is empty.
pub fn dfree(d: &LocalContext) -> Result<Verdict, CtxError> {
    Ok(dfree_in(&reach(d)?))
}

/// Whether the active channel only waits on partners inside the context.
pub fn pending(l: &ActiveContext) -> Result<bool, CtxError> {
    let ActiveContext::Active { chan, view, rest } = l else {
        return Err(CtxError::UnboundActiveChannel("(none)".into()));
    };
    if rest.contains(chan) {
        return Err(CtxError::UnboundActiveChannel(chan.to_string()));
    }
    let s = &chan.session;
    let view_ty: Ty = match view {
        ActiveType::Type(t) => state_type(t),
        ActiveType::Bare(h, c) => SessionType::sum(vec![crate::syntax::Summand::new(
            Rational::one(),
            h.clone(),
            c.clone(),
        )]),
    };
    let partner = |role: &str| -> Option<Ty> {
        if chan.has_role(role) {
            Some(view_ty.clone())
        } else {
            rest.binding_of_role(s, role).map(|(_, t)| t.clone())
        }
    };
    for b in view_ty.branches() {
        match b {
            Branch::Input(m, _) => {
                if partner(&m.from).is_none() {
                    return Ok(false);
                }
            }
            Branch::Sum(ss) => {
                let blocked = ss.iter().any(|sm| match &sm.head {
                    Head::Tau => false,
                    Head::Out(m) => match partner(&m.to) {
                        None => false,
                        Some(t) => !offered_inputs(&t).iter().any(|(mi, _)| mi == m),
                    },
                });
                if !blocked {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{parse_context, parse_type};

    fn ctx(s: &str) -> LocalContext {
        parse_context(s).unwrap()
    }

    #[test]
    fn com_step_to_empty() {
        let d = ctx("{ s[a] : a<-b?l(), s[b] : (1: b->a!l()) }");
        let ts = step(&d).unwrap();
        let com: Vec<_> = ts.iter().filter(|t| matches!(t.label, CtxLabel::Com(..))).collect();
        assert_eq!(com.len(), 1);
        assert!(com[0].prob.is_one());
        assert!(com[0].target.is_empty());
        let CtxLabel::Com(_, m) = &com[0].label else { unreachable!() };
        assert_eq!((m.from.as_str(), m.to.as_str()), ("b", "a"));
    }

    #[test]
    fn tau_step() {
        let d = ctx("{ s[{a,b}] : (0.3: tau.a<-c?x() (+) 0.7: a->c!y()) }");
        let ts = reductions(&d);
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].prob, Rational::new(3, 10));
        assert_eq!(ts[0].label, CtxLabel::Tau("s".into()));
        assert_eq!(ts[0].target.len(), 1);
    }

    #[test]
    fn empty_context() {
        let d = LocalContext::new();
        assert!(step(&d).unwrap().is_empty());
        let g = reach(&d).unwrap();
        assert_eq!(g.states.len(), 1);
        assert!(safe(&d).unwrap().holds);
        assert!(dfree(&d).unwrap().holds);
    }

    #[test]
    fn mismatched_labels() {
        let d = ctx("{ s[a] : a<-b?l(), s[b] : (1: b->a!m()) }");
        let g = reach(&d).unwrap();
        assert_eq!(g.states.len(), 1);
        assert!(g.edges.is_empty());
        let v = safe(&d).unwrap();
        assert!(!v.holds);
        assert!(v.counterexample.unwrap().conflict.is_some());
        assert!(!dfree(&d).unwrap().holds);
    }

    #[test]
    fn matched_is_dfree() {
        let d = ctx("{ s[a] : a<-b?l(), s[b] : (1: b->a!l()) }");
        assert!(dfree(&d).unwrap().holds);
        assert!(safe(&d).unwrap().holds);
    }

    #[test]
    fn active_only_fires_own_actions() {
        let d = ctx("{ s[j] : j<-d?x(), s[d] : (1: d->j!x()) }");
        let l = ActiveContext::activate(&Channel::single("s", "j"), &d).unwrap();
        assert!(step_active(&l)
            .unwrap()
            .iter()
            .all(|t| !t.label.is_reduction()));
        let bare = ActiveContext::Active {
            chan: Channel::single("s", "c"),
            view: ActiveType::Bare(Head::Tau, SessionType::end()),
            rest: LocalContext::new(),
        };
        let ts = step_active(&bare).unwrap();
        assert_eq!(ts.len(), 1);
        assert!(ts[0].prob.is_one());
        let plain = ActiveContext::Plain(d.clone());
        assert_eq!(step_active(&plain).unwrap(), step(&d).unwrap());
    }

    #[test]
    fn pending_cases() {
        let d = ctx("{ s[j] : j<-p?lws(), s[d] : (0.5: d->j!wk() (+) 0.5: d->j!str()) }");
        let l = ActiveContext::activate(&Channel::single("s", "d"), &d).unwrap();
        assert!(pending(&l).unwrap());
        let lj = ActiveContext::activate(&Channel::single("s", "j"), &d).unwrap();
        assert!(!pending(&lj).unwrap());
        let vac = ActiveContext::Active {
            chan: Channel::single("s", "c"),
            view: ActiveType::Type(parse_type("end").unwrap()),
            rest: LocalContext::new(),
        };
        assert!(pending(&vac).unwrap());
        assert!(pending(&ActiveContext::Plain(d)).is_err());
    }

    #[test]
    fn ill_formed_rejected() {
        let d = ctx("{ s[a] : (0.5: a->b!l()) }");
        assert!(matches!(step(&d), Err(CtxError::IllFormedType { .. })));
    }

    #[test]
    fn state_cap() {
        let d = ctx("{ s[a] : rec t. (1: tau.t) }");
        assert!(reach_with_cap(&d, 1).is_ok());
        let d2 = ctx("{ s[a] : (1: tau.(1: tau.end)) }");
        assert_eq!(reach_with_cap(&d2, 2), Err(CtxError::StateBudgetExceeded(2)));
    }
}
