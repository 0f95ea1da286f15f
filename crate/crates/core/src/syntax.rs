//! Abstract syntax shared by every engine: channels, session types,
//! processes, local contexts and global environments.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

pub type Name = String;
pub type RoleSet = BTreeSet<Name>;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum BaseType {
    Nat,
    Bool,
}

/// Endpoint `s[r]` of session `s` used by the roles `r`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Channel {
    pub session: Name,
    pub roles: RoleSet,
}

impl Channel {
    pub fn new<I, S>(session: impl Into<Name>, roles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<Name>,
    {
        let roles: RoleSet = roles.into_iter().map(Into::into).collect();
        assert!(!roles.is_empty(), "channel role set must be non-empty");
        Channel {
            session: session.into(),
            roles,
        }
    }

    pub fn single(session: impl Into<Name>, role: impl Into<Name>) -> Self {
        Channel::new(session, [role.into()])
    }

    pub fn has_role(&self, r: &str) -> bool {
        self.roles.contains(r)
    }
}

/// A message description `from -> to : label(payload)`.
///
/// An output head and an input branch carry the same `Msg` when they can
/// synchronise, so duality checks are plain equality.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Msg {
    pub from: Name,
    pub to: Name,
    pub label: Name,
    pub payload: Option<BaseType>,
}

impl Msg {
    pub fn new(
        from: impl Into<Name>,
        to: impl Into<Name>,
        label: impl Into<Name>,
        payload: Option<BaseType>,
    ) -> Self {
        Msg {
            from: from.into(),
            to: to.into(),
            label: label.into(),
            payload,
        }
    }
}

pub type Ty = Arc<SessionType>;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum SessionType {
    End,
    Var(Name),
    Rec(Name, Ty),
    Mixed(Vec<Branch>),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Branch {
    /// `msg.to <- msg.from ? label(payload). cont`
    Input(Msg, Ty),
    Sum(Vec<Summand>),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Summand {
    pub prob: Rational,
    pub head: Head,
    pub cont: Ty,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Head {
    Out(Msg),
    Tau,
}

impl SessionType {
    pub fn end() -> Ty {
        Arc::new(SessionType::End)
    }

    pub fn var(n: impl Into<Name>) -> Ty {
        Arc::new(SessionType::Var(n.into()))
    }

    pub fn rec(n: impl Into<Name>, body: Ty) -> Ty {
        Arc::new(SessionType::Rec(n.into(), body))
    }

    pub fn mixed(branches: Vec<Branch>) -> Ty {
        Arc::new(SessionType::Mixed(branches))
    }

    pub fn input(msg: Msg, cont: Ty) -> Ty {
        Self::mixed(vec![Branch::Input(msg, cont)])
    }

    pub fn sum(summands: Vec<Summand>) -> Ty {
        Self::mixed(vec![Branch::Sum(summands)])
    }

    /// A single output summand `(prob: msg). cont`.
    pub fn out(prob: Rational, msg: Msg, cont: Ty) -> Ty {
        Self::sum(vec![Summand::new(prob, Head::Out(msg), cont)])
    }

    pub fn tau(prob: Rational, cont: Ty) -> Ty {
        Self::sum(vec![Summand::new(prob, Head::Tau, cont)])
    }

    pub fn branches(&self) -> &[Branch] {
        match self {
            SessionType::Mixed(bs) => bs,
            _ => &[],
        }
    }
}

impl Summand {
    pub fn new(prob: Rational, head: Head, cont: Ty) -> Self {
        Summand { prob, head, cont }
    }
}

/// True for `end`, the empty choice and `rec t. end`.
pub fn is_end(t: &SessionType) -> bool {
    match t {
        SessionType::End => true,
        SessionType::Mixed(bs) => bs.is_empty(),
        SessionType::Rec(_, b) => is_end(b),
        SessionType::Var(_) => false,
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Value {
    Var(Name),
    Nat(u64),
    Bool(bool),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Process {
    Inact,
    Par(Box<Process>, Box<Process>),
    Res(Name, Box<Process>),
    Cond(Value, Box<Process>, Box<Process>),
    Def(Vec<Decl>, Box<Process>),
    Call {
        name: Name,
        args: Vec<Value>,
        chans: Vec<Channel>,
    },
    Choice {
        chan: Channel,
        summands: Vec<PSummand>,
    },
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Decl {
    pub name: Name,
    pub params: Vec<(Name, BaseType)>,
    pub chans: Vec<(Channel, Ty)>,
    pub body: Process,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum PSummand {
    /// `to <- from ? label(binder). cont`
    Input {
        to: Name,
        from: Name,
        label: Name,
        binder: Option<Name>,
        cont: Box<Process>,
    },
    Out(Vec<POut>),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct POut {
    pub prob: Rational,
    pub action: PAction,
    pub cont: Process,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum PAction {
    Send {
        from: Name,
        to: Name,
        label: Name,
        payload: Option<Value>,
    },
    Tau,
}

impl Process {
    pub fn par(a: Process, b: Process) -> Process {
        Process::Par(Box::new(a), Box::new(b))
    }

    /// Right-nested parallel composition; `0` for an empty list.
    pub fn par_all(mut ps: Vec<Process>) -> Process {
        let Some(mut acc) = ps.pop() else {
            return Process::Inact;
        };
        while let Some(p) = ps.pop() {
            acc = Process::par(p, acc);
        }
        acc
    }

    pub fn res(s: impl Into<Name>, p: Process) -> Process {
        Process::Res(s.into(), Box::new(p))
    }

    pub fn choice(chan: Channel, summands: Vec<PSummand>) -> Process {
        Process::Choice { chan, summands }
    }

    /// `chan{ (1: from->to!label(v)). cont }`
    pub fn send(chan: Channel, from: &str, to: &str, label: &str, v: Option<Value>, cont: Process) -> Process {
        Process::choice(
            chan,
            vec![PSummand::Out(vec![POut {
                prob: Rational::one(),
                action: PAction::Send {
                    from: from.into(),
                    to: to.into(),
                    label: label.into(),
                    payload: v,
                },
                cont,
            }])],
        )
    }

    /// `chan{ to <- from ? label(x). cont }`
    pub fn recv(chan: Channel, to: &str, from: &str, label: &str, x: Option<&str>, cont: Process) -> Process {
        Process::choice(
            chan,
            vec![PSummand::Input {
                to: to.into(),
                from: from.into(),
                label: label.into(),
                binder: x.map(Into::into),
                cont: Box::new(cont),
            }],
        )
    }

    /// Direct parallel components (flattening nested `Par`).
    pub fn components(&self) -> Vec<&Process> {
        let mut out = Vec::new();
        fn go<'a>(p: &'a Process, out: &mut Vec<&'a Process>) {
            match p {
                Process::Par(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("linearity violation in session `{session}`: roles {roles:?} bound twice")]
    LinearityViolation { session: Name, roles: Vec<Name> },
    #[error("channel {0} is not bound in the context")]
    UnboundChannel(String),
}

/// Linear map from channels to session types; `end` bindings are erased.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct LocalContext {
    bindings: BTreeMap<Channel, Ty>,
}

impl LocalContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a context, failing on a linearity violation.
    pub fn from_bindings<I>(it: I) -> Result<Self, ContextError>
    where
        I: IntoIterator<Item = (Channel, Ty)>,
    {
        let mut d = LocalContext::new();
        for (c, t) in it {
            d.add(c, t)?;
        }
        Ok(d)
    }

    pub fn singleton(c: Channel, t: Ty) -> Self {
        let mut bindings = BTreeMap::new();
        bindings.insert(c, t);
        LocalContext { bindings }
    }

    /// Adds a binding, checking linearity against the existing ones.
    pub fn add(&mut self, c: Channel, t: Ty) -> Result<(), ContextError> {
        let clash: Vec<Name> = self
            .bindings
            .keys()
            .filter(|k| k.session == c.session)
            .flat_map(|k| k.roles.intersection(&c.roles).cloned())
            .collect();
        if !clash.is_empty() {
            return Err(ContextError::LinearityViolation {
                session: c.session.clone(),
                roles: clash,
            });
        }
        self.bindings.insert(c, t);
        Ok(())
    }

    /// Inserts or replaces without a linearity check.
    pub fn set(&mut self, c: Channel, t: Ty) {
        self.bindings.insert(c, t);
    }

    pub fn remove(&mut self, c: &Channel) -> Option<Ty> {
        self.bindings.remove(c)
    }

    pub fn get(&self, c: &Channel) -> Option<&Ty> {
        self.bindings.get(c)
    }

    pub fn contains(&self, c: &Channel) -> bool {
        self.bindings.contains_key(c)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Channel, &Ty)> {
        self.bindings.iter()
    }

    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.bindings.keys()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn sessions(&self) -> BTreeSet<Name> {
        self.bindings.keys().map(|c| c.session.clone()).collect()
    }

    /// True if some binding of session `s` owns role `r`.
    pub fn has_role(&self, s: &str, r: &str) -> bool {
        self.bindings
            .keys()
            .any(|c| c.session == s && c.roles.contains(r))
    }

    /// The binding of session `s` whose role set contains `r`.
    pub fn binding_of_role(&self, s: &str, r: &str) -> Option<(&Channel, &Ty)> {
        self.bindings
            .iter()
            .find(|(c, _)| c.session == s && c.roles.contains(r))
    }

    pub fn roles(&self, s: &str) -> RoleSet {
        self.bindings
            .keys()
            .filter(|c| c.session == s)
            .flat_map(|c| c.roles.iter().cloned())
            .collect()
    }

    /// Restriction to the bindings of session `s`.
    pub fn restrict(&self, s: &str) -> LocalContext {
        LocalContext {
            bindings: self
                .bindings
                .iter()
                .filter(|(c, _)| c.session == s)
                .map(|(c, t)| (c.clone(), t.clone()))
                .collect(),
        }
    }

    /// Bindings of sessions other than `s`.
    pub fn without_session(&self, s: &str) -> LocalContext {
        LocalContext {
            bindings: self
                .bindings
                .iter()
                .filter(|(c, _)| c.session != s)
                .map(|(c, t)| (c.clone(), t.clone()))
                .collect(),
        }
    }

    pub fn map_types(&self, mut f: impl FnMut(&Ty) -> Ty) -> LocalContext {
        LocalContext {
            bindings: self
                .bindings
                .iter()
                .map(|(c, t)| (c.clone(), f(t)))
                .collect(),
        }
    }
}

impl FromIterator<(Channel, Ty)> for LocalContext {
    /// Collects without a linearity check.
    fn from_iter<I: IntoIterator<Item = (Channel, Ty)>>(iter: I) -> Self {
        LocalContext {
            bindings: iter.into_iter().collect(),
        }
    }
}

/// Linear composition `d1, d2`.
pub fn compose_contexts(d1: &LocalContext, d2: &LocalContext) -> Result<LocalContext, ContextError> {
    let mut out = d1.clone();
    for (c, t) in d2.iter() {
        out.add(c.clone(), t.clone())?;
    }
    Ok(out)
}

/// Drops every binding whose type is `end`.
pub fn erase_end(d: &LocalContext) -> LocalContext {
    d.iter()
        .filter(|(_, t)| !is_end(t))
        .map(|(c, t)| (c.clone(), t.clone()))
        .collect()
}

/// Type of the active channel inside a derivation.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ActiveType {
    /// A (possibly partial) mixed choice.
    Type(Ty),
    /// A bare head `H.T` left after splitting a probabilistic sum.
    Bare(Head, Ty),
}

/// A local context with an optional active channel.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ActiveContext {
    Plain(LocalContext),
    Active {
        chan: Channel,
        view: ActiveType,
        rest: LocalContext,
    },
}

impl ActiveContext {
    /// Marks `chan` of `ctx` active.
    pub fn activate(chan: &Channel, ctx: &LocalContext) -> Result<Self, ContextError> {
        let mut rest = ctx.clone();
        let t = rest
            .remove(chan)
            .ok_or_else(|| ContextError::UnboundChannel(format!("{chan:?}")))?;
        Ok(ActiveContext::Active {
            chan: chan.clone(),
            view: ActiveType::Type(t),
            rest,
        })
    }

    /// The underlying context with the active view folded back in.
    pub fn flatten(&self) -> LocalContext {
        match self {
            ActiveContext::Plain(d) => d.clone(),
            ActiveContext::Active { chan, view, rest } => {
                let mut d = rest.clone();
                let t = match view {
                    ActiveType::Type(t) => t.clone(),
                    ActiveType::Bare(h, c) => SessionType::sum(vec![Summand::new(
                        Rational::one(),
                        h.clone(),
                        c.clone(),
                    )]),
                };
                d.set(chan.clone(), t);
                d
            }
        }
    }
}

/// `Γ`: variable and process-variable typings.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct GlobalEnv {
    pub vars: BTreeMap<Name, BaseType>,
    pub procvars: BTreeMap<Name, ProcSig>,
}

/// Declared parameter and channel types of a process variable.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProcSig {
    pub params: Vec<BaseType>,
    pub chans: Vec<(Channel, Ty)>,
}

impl GlobalEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_var(mut self, x: impl Into<Name>, u: BaseType) -> Self {
        self.vars.insert(x.into(), u);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ty_out(from: &str, to: &str, l: &str) -> Ty {
        SessionType::out(Rational::one(), Msg::new(from, to, l, None), SessionType::end())
    }

    #[test]
    fn compose_disjoint() {
        let d1 = LocalContext::singleton(Channel::single("s", "p"), ty_out("p", "j", "a"));
        let d2 = LocalContext::singleton(Channel::single("s", "j"), ty_out("j", "p", "b"));
        let d = compose_contexts(&d1, &d2).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(compose_contexts(&d1, &LocalContext::new()).unwrap(), d1);
    }

    #[test]
    fn compose_overlap_fails() {
        let d1 = LocalContext::singleton(Channel::new("s", ["j", "d"]), ty_out("j", "p", "a"));
        let d2 = LocalContext::singleton(Channel::single("s", "j"), ty_out("j", "p", "b"));
        assert!(matches!(
            compose_contexts(&d1, &d2),
            Err(ContextError::LinearityViolation { .. })
        ));
    }

    #[test]
    fn linearity_is_per_session() {
        let d1 = LocalContext::singleton(Channel::single("s", "p"), ty_out("p", "q", "a"));
        let d2 = LocalContext::singleton(Channel::single("t", "p"), ty_out("p", "q", "a"));
        assert!(compose_contexts(&d1, &d2).is_ok());
    }

    #[test]
    fn erase() {
        let mut d = LocalContext::new();
        d.set(Channel::single("s", "p"), SessionType::end());
        d.set(Channel::single("s", "q"), ty_out("q", "p", "x"));
        let e = erase_end(&d);
        assert_eq!(e.len(), 1);
        assert_eq!(erase_end(&e), e);
        assert!(erase_end(&LocalContext::new()).is_empty());
    }
}
