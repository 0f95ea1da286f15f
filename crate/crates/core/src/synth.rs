//! Interface synthesis: for a refinement context `Δ'` on one session,
//! build a role set and a single type `T` with `Δ' ≤₁ {s[r̃] : T}`.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::ctxlts::{offered_inputs, safe, step, CtxError, CtxLabel, DEFAULT_STATE_CAP};
use crate::rational::Rational;
use crate::subtype::{sub_multi_with, Derivation, Goal, SubtypeError, DEFAULT_BUDGET};
use crate::surface::{print_context, print_type};
use crate::syntax::{Branch, Channel, Head, LocalContext, Name, RoleSet, SessionType, Summand, Ty};
use crate::typemeta::{canonical_context, is_well_formed, merge_similar, split_modes, state_type};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("refinement is not safe: {0}")]
    NotSafe(String),
    #[error("candidate interface {candidate} rejected by the prover for {context}")]
    ValidationFailed { candidate: String, context: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no channel can act in {0}")]
    Stuck(String),
    #[error(transparent)]
    Ctx(#[from] CtxError),
    #[error(transparent)]
    Subtype(#[from] SubtypeError),
}

/// A synthesized interface with its validating derivation.
#[derive(Debug, Clone)]
pub struct Interface {
    pub session: Option<Name>,
    pub roles: RoleSet,
    pub ty: Ty,
    pub derivation: Derivation<Goal>,
}

impl Interface {
    /// `{s[r̃] : T}`, empty when there are no roles.
    pub fn context(&self) -> LocalContext {
        match &self.session {
            Some(s) if !self.roles.is_empty() => {
                LocalContext::singleton(Channel::new(s.clone(), self.roles.iter().cloned()), self.ty.clone())
            }
            _ => LocalContext::new(),
        }
    }
}

struct Builder {
    session: Name,
    /// Ancestor states with their recursion variable and whether it was used.
    visiting: Vec<(LocalContext, Name, bool)>,
}

fn updated(d: &LocalContext, ups: &[(&Channel, &Ty)]) -> LocalContext {
    let mut out = d.clone();
    for (c, t) in ups {
        out.set((*c).clone(), (*t).clone());
    }
    canonical_context(&out)
}

fn scale(ss: &[Summand], by: &Rational) -> Vec<Summand> {
    ss.iter()
        .map(|s| Summand::new(&s.prob * by, s.head.clone(), s.cont.clone()))
        .collect()
}

impl Builder {
    fn build(&mut self, d: LocalContext) -> Result<Ty, SynthError> {
        let d = canonical_context(&d);
        if d.is_empty() {
            return Ok(SessionType::end());
        }
        if let Some(entry) = self.visiting.iter_mut().find(|(s, _, _)| *s == d) {
            entry.2 = true;
            return Ok(SessionType::var(entry.1.clone()));
        }
        let var = format!("x{}", self.visiting.len());
        self.visiting.push((d.clone(), var.clone(), false));
        let branches = self.branches(&d);
        let (_, _, used) = self.visiting.pop().expect("pushed above");
        let branches = branches?;
        if branches.is_empty() {
            return Err(SynthError::Stuck(print_context(&d)));
        }
        let body = SessionType::mixed(branches);
        Ok(if used { SessionType::rec(var, body) } else { body })
    }

    fn branches(&mut self, d: &LocalContext) -> Result<Vec<Branch>, SynthError> {
        let s = self.session.clone();
        let mut out = Vec::new();
        for (c, t) in d.iter() {
            let mut rest = d.clone();
            rest.remove(c);
            let (ins, sums) = split_modes(&state_type(t));
            for (m, cont) in ins {
                if rest.has_role(&s, &m.from) {
                    continue;
                }
                let next = self.build(updated(d, &[(c, &cont)]))?;
                out.push(Branch::Input(m, next));
            }
            'sums: for ss in sums {
                let mut pieces = Vec::new();
                for sm in &ss {
                    match &sm.head {
                        Head::Out(m) if !rest.has_role(&s, &m.to) => {
                            let next = self.build(updated(d, &[(c, &sm.cont)]))?;
                            pieces.push(Summand::new(sm.prob.clone(), sm.head.clone(), next));
                        }
                        Head::Out(m) => {
                            let (c2, t2) = rest.binding_of_role(&s, &m.to).expect("role is bound");
                            let Some((_, cont2)) = offered_inputs(t2).into_iter().find(|(mi, _)| mi == m) else {
                                continue 'sums;
                            };
                            let d2 = updated(d, &[(c, &sm.cont), (c2, &cont2)]);
                            pieces.extend(self.internal(d2, &sm.prob, true)?);
                        }
                        Head::Tau => {
                            let d2 = updated(d, &[(c, &sm.cont)]);
                            pieces.extend(self.internal(d2, &sm.prob, false)?);
                        }
                    }
                }
                out.push(Branch::Sum(pieces));
            }
        }
        Ok(out)
    }

    /// Pieces standing for an internal step of mass `prob` into `d`: for a
    /// hidden communication, the scaled summands when `d` continues with a
    /// single sum; otherwise a τ.
    fn internal(&mut self, d: LocalContext, prob: &Rational, absorb: bool) -> Result<Vec<Summand>, SynthError> {
        let next = self.build(d)?;
        if let (true, SessionType::Mixed(bs)) = (absorb, &*next) {
            if let [Branch::Sum(ss)] = bs.as_slice() {
                return Ok(scale(ss, prob));
            }
        }
        Ok(vec![Summand::new(prob.clone(), Head::Tau, next)])
    }
}

/// Synthesizes an interface for `d` and validates it with the prover.
pub fn synthesize_interface(d: &LocalContext) -> Result<Interface, SynthError> {
    synthesize_interface_with(d, DEFAULT_BUDGET)
}

pub fn synthesize_interface_with(d: &LocalContext, budget: u64) -> Result<Interface, SynthError> {
    let sessions = d.sessions();
    if sessions.len() > 1 {
        return Err(SynthError::Unsupported(format!(
            "{} sessions; interfaces cover one session",
            sessions.len()
        )));
    }
    let session = sessions.into_iter().next();
    let Some(s) = session.clone() else {
        let derivation = sub_multi_with(d, d, budget)?.expect("empty contexts are related");
        return Ok(Interface {
            session: None,
            roles: RoleSet::new(),
            ty: SessionType::end(),
            derivation,
        });
    };
    let v = safe(d)?;
    if !v.holds {
        let detail = v
            .counterexample
            .and_then(|c| c.conflict)
            .map(|(o, i)| format!("{o} meets {i}"))
            .unwrap_or_default();
        return Err(SynthError::NotSafe(detail));
    }
    let mut b = Builder {
        session: s.clone(),
        visiting: Vec::new(),
    };
    let ty = merge_similar(&b.build(d.clone())?);
    let roles = d.roles(&s);
    let iface = LocalContext::singleton(Channel::new(s.clone(), roles.iter().cloned()), ty.clone());
    let candidate = print_type(&ty);
    if !is_well_formed(&ty) {
        return Err(SynthError::ValidationFailed {
            candidate,
            context: print_context(d),
        });
    }
    match sub_multi_with(d, &iface, budget)? {
        Some(derivation) => Ok(Interface {
            session,
            roles,
            ty,
            derivation,
        }),
        None => Err(SynthError::ValidationFailed {
            candidate,
            context: print_context(d),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Visibility {
    /// A communication between two channels of the context.
    Internal,
    /// An input or output towards a role outside the context.
    External,
    /// An internal action of one channel.
    Silent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedEdge {
    pub from: usize,
    pub to: usize,
    pub label: CtxLabel,
    pub prob: Rational,
    pub visibility: Visibility,
}

/// The transition system of a context with every edge classified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedLts {
    pub states: Vec<LocalContext>,
    pub edges: Vec<TaggedEdge>,
}

impl AnnotatedLts {
    pub fn internal_edges(&self) -> impl Iterator<Item = &TaggedEdge> {
        self.edges.iter().filter(|e| e.visibility == Visibility::Internal)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "states": self.states.iter().map(print_context).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|e| serde_json::json!({
                "from": e.from,
                "to": e.to,
                "label": e.label.to_string(),
                "prob": e.prob,
                "visibility": e.visibility,
            })).collect::<Vec<_>>(),
        })
    }
}

/// All transitions of `d` reached from it, tagged internal or external.
pub fn hide_internal(d: &LocalContext) -> Result<AnnotatedLts, SynthError> {
    if d.sessions().len() > 1 {
        return Err(SynthError::Unsupported("more than one session".into()));
    }
    let init = canonical_context(d);
    let mut lts = AnnotatedLts {
        states: vec![init.clone()],
        edges: Vec::new(),
    };
    if init.is_empty() {
        return Ok(lts);
    }
    let mut index = BTreeMap::from([(init, 0usize)]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for t in step(&lts.states[i].clone())? {
            let j = match index.get(&t.target) {
                Some(&j) => j,
                None => {
                    if lts.states.len() >= DEFAULT_STATE_CAP {
                        return Err(CtxError::StateBudgetExceeded(DEFAULT_STATE_CAP).into());
                    }
                    let j = lts.states.len();
                    index.insert(t.target.clone(), j);
                    lts.states.push(t.target.clone());
                    queue.push_back(j);
                    j
                }
            };
            let visibility = match &t.label {
                CtxLabel::Com(..) => Visibility::Internal,
                CtxLabel::Tau(_) => Visibility::Silent,
                CtxLabel::In(..) | CtxLabel::Out(..) => Visibility::External,
            };
            lts.edges.push(TaggedEdge {
                from: i,
                to: j,
                label: t.label,
                prob: t.prob,
                visibility,
            });
        }
    }
    Ok(lts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subtype::check_derivation;
    use crate::surface::{parse_context, parse_type};
    use crate::typemeta::alpha_eq;

    fn ctx(s: &str) -> LocalContext {
        parse_context(s).unwrap()
    }

    const REFINEMENT: &str = "{ s[j] : j<-p?lws().((j<-d?wk().(1: j->p!glt(bool).(1: j->w!rls()))) \
        + (j<-d?str().(1: j->p!glt(bool).(1: j->w!rls()))) \
        + j<-d?wit().(1: j->w!rqs().j<-w?st().(1: j->p!glt(bool)))), \
        s[d] : (0.5: d->j!wk() (+) 0.2: d->j!str() (+) 0.3: d->j!wit()) }";

    #[test]
    fn courthouse_interface() {
        let d = ctx(REFINEMENT);
        let i = synthesize_interface(&d).unwrap();
        let want = parse_type(
            "j<-p?lws().(0.7: j->p!glt(bool).(1: j->w!rls()) (+) 0.3: j->w!rqs().j<-w?st().(1: j->p!glt(bool)))",
        )
        .unwrap();
        assert!(alpha_eq(&i.ty, &want), "{}", print_type(&i.ty));
        assert_eq!(i.roles.len(), 2);
        assert!(check_derivation(&i.derivation));
    }

    #[test]
    fn racing_channels_get_a_tau() {
        let d = ctx("{ s[j] : j<-d?go().j<-w?st().(1: j->p!glt()), s[d] : (1: d->j!go().(1: d->w!mtg())) }");
        let i = synthesize_interface(&d).unwrap();
        let printed = print_type(&i.ty);
        assert!(printed.contains("tau"), "{printed}");
        assert!(check_derivation(&i.derivation));
    }

    #[test]
    fn empty_and_external() {
        let i = synthesize_interface(&LocalContext::new()).unwrap();
        assert!(i.roles.is_empty());
        assert!(crate::syntax::is_end(&i.ty));
        let d = ctx("{ s[a] : (1: a->b!l()) }");
        let i = synthesize_interface(&d).unwrap();
        assert!(i.roles.contains("a"));
        assert!(alpha_eq(&i.ty, &parse_type("(1: a->b!l())").unwrap()));
    }

    #[test]
    fn recursion_closes_a_loop() {
        let d = ctx("{ s[a] : rec x. (1: a->b!l().a<-b?r().x), s[b] : rec y. b<-a?l().(1: b->a!r().y) }");
        let i = synthesize_interface(&d).unwrap();
        assert!(matches!(*i.ty, SessionType::Rec(..)), "{}", print_type(&i.ty));
    }

    #[test]
    fn errors() {
        let unsafe_ctx = ctx("{ s[a] : (1: a->b!l()), s[b] : b<-a?m() }");
        assert!(matches!(synthesize_interface(&unsafe_ctx), Err(SynthError::NotSafe(_))));
        let two = ctx("{ s[a] : (1: a->b!l()), t[b] : b<-a?m() }");
        assert!(matches!(synthesize_interface(&two), Err(SynthError::Unsupported(_))));
        let stuck = ctx("{ s[a] : a<-b?l(), s[b] : b<-a?m() }");
        assert!(matches!(synthesize_interface(&stuck), Err(SynthError::Stuck(_))));
    }

    #[test]
    fn hiding_tags_edges() {
        let lts = hide_internal(&ctx(REFINEMENT)).unwrap();
        assert!(lts.internal_edges().count() > 0);
        for e in &lts.edges {
            if let CtxLabel::Com(_, m) = &e.label {
                assert!(["j", "d"].contains(&m.from.as_str()) && ["j", "d"].contains(&m.to.as_str()));
            }
        }
        let single = hide_internal(&ctx("{ s[a] : (1: a->b!l()) }")).unwrap();
        assert_eq!(single.internal_edges().count(), 0);
        assert!(hide_internal(&LocalContext::new()).unwrap().edges.is_empty());
    }
}
