//! Reduction semantics: congruence normal form, one-step probabilistic
//! reductions, seeded simulation, exhaustive weighted exploration and
//! error-process detection.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::rational::Rational;
use crate::surface::{print_channel, print_process, print_value};
use crate::syntax::{Channel, Decl, Name, PAction, POut, PSummand, Process, Value};

pub const DEFAULT_STATE_CAP: usize = 100_000;
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReduceError {
    #[error("exploration budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("scheduler script index {index} at step {step} is out of range ({enabled} redexes enabled)")]
    ScriptIndex { step: usize, index: usize, enabled: usize },
}

// ------------------------------------------------------------- names

fn fresh(base: &str, used: &BTreeSet<Name>) -> Name {
    let mut n = format!("{base}'");
    while used.contains(&n) {
        n.push('\'');
    }
    n
}

/// Every session name occurring in `p`, bound or free.
fn all_sessions(p: &Process, out: &mut BTreeSet<Name>) {
    match p {
        Process::Inact => {}
        Process::Par(a, b) | Process::Cond(_, a, b) => {
            all_sessions(a, out);
            all_sessions(b, out);
        }
        Process::Res(s, b) => {
            out.insert(s.clone());
            all_sessions(b, out);
        }
        Process::Def(ds, b) => {
            for d in ds {
                decl_sessions(d, out);
            }
            all_sessions(b, out);
        }
        Process::Call { chans, .. } => out.extend(chans.iter().map(|c| c.session.clone())),
        Process::Choice { chan, summands } => {
            out.insert(chan.session.clone());
            for_each_cont(summands, |c| all_sessions(c, out));
        }
    }
}

fn decl_sessions(d: &Decl, out: &mut BTreeSet<Name>) {
    out.extend(d.chans.iter().map(|(c, _)| c.session.clone()));
    all_sessions(&d.body, out);
}

/// Free session names of `p`.
pub fn free_sessions(p: &Process) -> BTreeSet<Name> {
    fn go(p: &Process, out: &mut BTreeSet<Name>) {
        match p {
            Process::Inact => {}
            Process::Par(a, b) | Process::Cond(_, a, b) => {
                go(a, out);
                go(b, out);
            }
            Process::Res(s, b) => {
                let mut inner = BTreeSet::new();
                go(b, &mut inner);
                inner.remove(s);
                out.extend(inner);
            }
            Process::Def(ds, b) => {
                for d in ds {
                    out.extend(d.chans.iter().map(|(c, _)| c.session.clone()));
                    go(&d.body, out);
                }
                go(b, out);
            }
            Process::Call { chans, .. } => out.extend(chans.iter().map(|c| c.session.clone())),
            Process::Choice { chan, summands } => {
                out.insert(chan.session.clone());
                for_each_cont(summands, |c| go(c, out));
            }
        }
    }
    let mut out = BTreeSet::new();
    go(p, &mut out);
    out
}

/// Every process-variable name occurring in `p`, defined or called.
fn all_procvars(p: &Process, out: &mut BTreeSet<Name>) {
    match p {
        Process::Inact => {}
        Process::Par(a, b) | Process::Cond(_, a, b) => {
            all_procvars(a, out);
            all_procvars(b, out);
        }
        Process::Res(_, b) => all_procvars(b, out),
        Process::Def(ds, b) => {
            for d in ds {
                out.insert(d.name.clone());
                all_procvars(&d.body, out);
            }
            all_procvars(b, out);
        }
        Process::Call { name, .. } => {
            out.insert(name.clone());
        }
        Process::Choice { summands, .. } => for_each_cont(summands, |c| all_procvars(c, out)),
    }
}

fn for_each_cont<'a>(summands: &'a [PSummand], mut f: impl FnMut(&'a Process)) {
    for s in summands {
        match s {
            PSummand::Input { cont, .. } => f(cont),
            PSummand::Out(os) => os.iter().for_each(|o| f(&o.cont)),
        }
    }
}

fn map_conts(summands: &[PSummand], mut f: impl FnMut(&Process) -> Process) -> Vec<PSummand> {
    summands
        .iter()
        .map(|s| match s {
            PSummand::Input { to, from, label, binder, cont } => PSummand::Input {
                to: to.clone(),
                from: from.clone(),
                label: label.clone(),
                binder: binder.clone(),
                cont: Box::new(f(cont)),
            },
            PSummand::Out(os) => PSummand::Out(
                os.iter()
                    .map(|o| POut {
                        prob: o.prob.clone(),
                        action: o.action.clone(),
                        cont: f(&o.cont),
                    })
                    .collect(),
            ),
        })
        .collect()
}

/// Renames the channels of `p` by `map`, respecting restrictions.
fn rename_channels(p: &Process, map: &BTreeMap<Channel, Channel>) -> Process {
    if map.is_empty() {
        return p.clone();
    }
    let ren = |c: &Channel| map.get(c).cloned().unwrap_or_else(|| c.clone());
    match p {
        Process::Inact => Process::Inact,
        Process::Par(a, b) => Process::par(rename_channels(a, map), rename_channels(b, map)),
        Process::Cond(v, a, b) => Process::Cond(
            v.clone(),
            Box::new(rename_channels(a, map)),
            Box::new(rename_channels(b, map)),
        ),
        Process::Res(s, b) => {
            let inner: BTreeMap<Channel, Channel> =
                map.iter().filter(|(k, _)| &k.session != s).map(|(k, v)| (k.clone(), v.clone())).collect();
            Process::res(s.clone(), rename_channels(b, &inner))
        }
        Process::Def(ds, b) => Process::Def(
            ds.iter()
                .map(|d| Decl {
                    name: d.name.clone(),
                    params: d.params.clone(),
                    chans: d.chans.iter().map(|(c, t)| (ren(c), t.clone())).collect(),
                    body: rename_channels(&d.body, map),
                })
                .collect(),
            Box::new(rename_channels(b, map)),
        ),
        Process::Call { name, args, chans } => Process::Call {
            name: name.clone(),
            args: args.clone(),
            chans: chans.iter().map(ren).collect(),
        },
        Process::Choice { chan, summands } => Process::Choice {
            chan: ren(chan),
            summands: map_conts(summands, |c| rename_channels(c, map)),
        },
    }
}

fn rename_session(p: &Process, from: &str, to: &str) -> Process {
    let mut chans = BTreeSet::new();
    collect_channels(p, &mut chans);
    let map: BTreeMap<Channel, Channel> = chans
        .into_iter()
        .filter(|c| c.session == from)
        .map(|c| {
            let r = Channel {
                session: to.to_string(),
                roles: c.roles.clone(),
            };
            (c, r)
        })
        .collect();
    rename_channels(p, &map)
}

fn collect_channels(p: &Process, out: &mut BTreeSet<Channel>) {
    match p {
        Process::Inact => {}
        Process::Par(a, b) | Process::Cond(_, a, b) => {
            collect_channels(a, out);
            collect_channels(b, out);
        }
        Process::Res(_, b) => collect_channels(b, out),
        Process::Def(ds, b) => {
            for d in ds {
                out.extend(d.chans.iter().map(|(c, _)| c.clone()));
                collect_channels(&d.body, out);
            }
            collect_channels(b, out);
        }
        Process::Call { chans, .. } => out.extend(chans.iter().cloned()),
        Process::Choice { chan, summands } => {
            out.insert(chan.clone());
            for_each_cont(summands, |c| collect_channels(c, out));
        }
    }
}

fn rename_procvar(p: &Process, from: &str, to: &str) -> Process {
    match p {
        Process::Inact => Process::Inact,
        Process::Par(a, b) => Process::par(rename_procvar(a, from, to), rename_procvar(b, from, to)),
        Process::Cond(v, a, b) => Process::Cond(
            v.clone(),
            Box::new(rename_procvar(a, from, to)),
            Box::new(rename_procvar(b, from, to)),
        ),
        Process::Res(s, b) => Process::res(s.clone(), rename_procvar(b, from, to)),
        Process::Def(ds, b) => {
            if ds.iter().any(|d| d.name == from) {
                return p.clone();
            }
            Process::Def(
                ds.iter()
                    .map(|d| Decl {
                        body: rename_procvar(&d.body, from, to),
                        ..d.clone()
                    })
                    .collect(),
                Box::new(rename_procvar(b, from, to)),
            )
        }
        Process::Call { name, args, chans } => Process::Call {
            name: if name == from { to.to_string() } else { name.clone() },
            args: args.clone(),
            chans: chans.clone(),
        },
        Process::Choice { chan, summands } => Process::Choice {
            chan: chan.clone(),
            summands: map_conts(summands, |c| rename_procvar(c, from, to)),
        },
    }
}

/// Capture-avoiding substitution `p[x := v]`.
pub fn subst_value(p: &Process, x: &str, v: &Value) -> Process {
    let sv = |w: &Value| if matches!(w, Value::Var(y) if y == x) { v.clone() } else { w.clone() };
    match p {
        Process::Inact => Process::Inact,
        Process::Par(a, b) => Process::par(subst_value(a, x, v), subst_value(b, x, v)),
        Process::Cond(w, a, b) => Process::Cond(sv(w), Box::new(subst_value(a, x, v)), Box::new(subst_value(b, x, v))),
        Process::Res(s, b) => Process::res(s.clone(), subst_value(b, x, v)),
        Process::Def(ds, b) => Process::Def(
            ds.iter()
                .map(|d| {
                    if d.params.iter().any(|(y, _)| y == x) {
                        return d.clone();
                    }
                    let mut d = d.clone();
                    if let Value::Var(y) = v {
                        if let Some(i) = d.params.iter().position(|(z, _)| z == y) {
                            let used = value_names(&d.body);
                            let n = fresh(y, &used);
                            d.body = subst_value(&d.body, y, &Value::Var(n.clone()));
                            d.params[i].0 = n;
                        }
                    }
                    d.body = subst_value(&d.body, x, v);
                    d
                })
                .collect(),
            Box::new(subst_value(b, x, v)),
        ),
        Process::Call { name, args, chans } => Process::Call {
            name: name.clone(),
            args: args.iter().map(sv).collect(),
            chans: chans.clone(),
        },
        Process::Choice { chan, summands } => Process::Choice {
            chan: chan.clone(),
            summands: summands
                .iter()
                .map(|s| match s {
                    PSummand::Input { to, from, label, binder, cont } => {
                        let (binder, cont) = match binder {
                            Some(b) if b == x => (binder.clone(), (**cont).clone()),
                            Some(b) if matches!(v, Value::Var(y) if y == b) => {
                                let n = fresh(b, &value_names(cont));
                                let c = subst_value(cont, b, &Value::Var(n.clone()));
                                (Some(n), subst_value(&c, x, v))
                            }
                            _ => (binder.clone(), subst_value(cont, x, v)),
                        };
                        PSummand::Input {
                            to: to.clone(),
                            from: from.clone(),
                            label: label.clone(),
                            binder,
                            cont: Box::new(cont),
                        }
                    }
                    PSummand::Out(os) => PSummand::Out(
                        os.iter()
                            .map(|o| POut {
                                prob: o.prob.clone(),
                                action: match &o.action {
                                    PAction::Send { from, to, label, payload } => PAction::Send {
                                        from: from.clone(),
                                        to: to.clone(),
                                        label: label.clone(),
                                        payload: payload.as_ref().map(sv),
                                    },
                                    PAction::Tau => PAction::Tau,
                                },
                                cont: subst_value(&o.cont, x, v),
                            })
                            .collect(),
                    ),
                })
                .collect(),
        },
    }
}

fn value_names(p: &Process) -> BTreeSet<Name> {
    fn val(v: &Value, out: &mut BTreeSet<Name>) {
        if let Value::Var(x) = v {
            out.insert(x.clone());
        }
    }
    fn go(p: &Process, out: &mut BTreeSet<Name>) {
        match p {
            Process::Inact => {}
            Process::Par(a, b) => {
                go(a, out);
                go(b, out);
            }
            Process::Cond(v, a, b) => {
                val(v, out);
                go(a, out);
                go(b, out);
            }
            Process::Res(_, b) => go(b, out),
            Process::Def(ds, b) => {
                for d in ds {
                    out.extend(d.params.iter().map(|(x, _)| x.clone()));
                    go(&d.body, out);
                }
                go(b, out);
            }
            Process::Call { args, .. } => args.iter().for_each(|a| val(a, out)),
            Process::Choice { summands, .. } => {
                for s in summands {
                    match s {
                        PSummand::Input { binder, cont, .. } => {
                            out.extend(binder.iter().cloned());
                            go(cont, out);
                        }
                        PSummand::Out(os) => {
                            for o in os {
                                if let PAction::Send { payload: Some(v), .. } = &o.action {
                                    val(v, out);
                                }
                                go(&o.cont, out);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    go(p, &mut out);
    out
}

// ------------------------------------------------------- normal form

/// `new sessions. def decls in (comps)`
#[derive(Debug, Clone, Default)]
struct Nf {
    sessions: Vec<Name>,
    decls: Vec<Decl>,
    comps: Vec<Process>,
}

impl Nf {
    fn session_names(&self) -> BTreeSet<Name> {
        let mut out: BTreeSet<Name> = self.sessions.iter().cloned().collect();
        for d in &self.decls {
            decl_sessions(d, &mut out);
        }
        for c in &self.comps {
            all_sessions(c, &mut out);
        }
        out
    }

    fn procvar_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for d in &self.decls {
            out.insert(d.name.clone());
            all_procvars(&d.body, &mut out);
        }
        for c in &self.comps {
            all_procvars(c, &mut out);
        }
        out
    }

    fn free_sessions(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for d in &self.decls {
            out.extend(d.chans.iter().map(|(c, _)| c.session.clone()));
            out.extend(free_sessions(&d.body));
        }
        for c in &self.comps {
            out.extend(free_sessions(c));
        }
        for s in &self.sessions {
            out.remove(s);
        }
        out
    }

    fn map_all(&mut self, f: impl Fn(&Process) -> Process) {
        for d in &mut self.decls {
            d.body = f(&d.body);
        }
        for c in &mut self.comps {
            *c = f(c);
        }
    }

    fn rename_bound_session(&mut self, s: &str, n: &str) {
        for x in &mut self.sessions {
            if x == s {
                *x = n.to_string();
            }
        }
        let (s2, n2) = (s.to_string(), n.to_string());
        for d in &mut self.decls {
            for (c, _) in &mut d.chans {
                if c.session == s2 {
                    c.session = n2.clone();
                }
            }
        }
        self.map_all(|p| rename_session(p, &s2, &n2));
    }

    fn rename_decl(&mut self, x: &str, n: &str) {
        for d in &mut self.decls {
            if d.name == x {
                d.name = n.to_string();
            }
        }
        self.map_all(|p| rename_procvar(p, x, n));
    }

    /// Renames bound sessions and declarations of `self` clashing with `sessions`/`procs`.
    fn avoid(&mut self, sessions: &BTreeSet<Name>, procs: &BTreeSet<Name>) {
        for s in self.sessions.clone() {
            if sessions.contains(&s) {
                let mut used = self.session_names();
                used.extend(sessions.iter().cloned());
                let n = fresh(&s, &used);
                self.rename_bound_session(&s, &n);
            }
        }
        for x in self.decls.iter().map(|d| d.name.clone()).collect::<Vec<_>>() {
            if procs.contains(&x) {
                let mut used = self.procvar_names();
                used.extend(procs.iter().cloned());
                let n = fresh(&x, &used);
                self.rename_decl(&x, &n);
            }
        }
    }
}

fn nf(p: &Process) -> Nf {
    match p {
        Process::Inact => Nf::default(),
        Process::Par(a, b) => {
            let mut na = nf(a);
            let mut nb = nf(b);
            na.avoid(&nb.session_names(), &nb.procvar_names());
            nb.avoid(&na.session_names(), &na.procvar_names());
            na.sessions.extend(nb.sessions);
            na.decls.extend(nb.decls);
            na.comps.extend(nb.comps);
            na
        }
        Process::Res(s, b) => {
            let mut n = nf(b);
            if !n.sessions.contains(s) && n.free_sessions().contains(s) {
                n.sessions.push(s.clone());
            }
            n
        }
        Process::Def(ds, b) => {
            let ds: Vec<Decl> = ds
                .iter()
                .map(|d| Decl {
                    body: normalize(&d.body),
                    ..d.clone()
                })
                .collect();
            let mut n = nf(b);
            let mut ss = BTreeSet::new();
            let mut ps = BTreeSet::new();
            for d in &ds {
                decl_sessions(d, &mut ss);
                ps.insert(d.name.clone());
                all_procvars(&d.body, &mut ps);
            }
            n.avoid(&ss, &ps);
            let mut decls = ds;
            decls.append(&mut n.decls);
            n.decls = decls;
            n
        }
        Process::Cond(v, a, b) => Nf {
            comps: vec![Process::Cond(v.clone(), Box::new(normalize(a)), Box::new(normalize(b)))],
            ..Nf::default()
        },
        Process::Call { .. } => Nf {
            comps: vec![p.clone()],
            ..Nf::default()
        },
        Process::Choice { chan, summands } => Nf {
            comps: vec![Process::Choice {
                chan: chan.clone(),
                summands: map_conts(summands, normalize),
            }],
            ..Nf::default()
        },
    }
}

fn build(mut n: Nf, gc: bool) -> Process {
    if gc && n.comps.is_empty() {
        return Process::Inact;
    }
    n.comps.sort();
    n.decls.sort();
    let free = {
        let mut m = n.clone();
        m.sessions.clear();
        m.free_sessions()
    };
    let mut sessions: Vec<Name> = n.sessions.into_iter().filter(|s| free.contains(s)).collect();
    sessions.sort();
    let mut p = Process::par_all(n.comps);
    if !n.decls.is_empty() {
        p = Process::Def(n.decls, Box::new(p));
    }
    for s in sessions.into_iter().rev() {
        p = Process::res(s, p);
    }
    p
}

/// Structural-congruence normal form; `def D in 0` is collected.
pub fn normalize(p: &Process) -> Process {
    build(nf(p), true)
}

// ----------------------------------------------------------- redexes

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RedexKind {
    CondStep(bool),
    DefGC,
    DefCall(Name),
    TauStep(String),
    ComStep {
        session: Name,
        sender: String,
        receiver: String,
        label: Name,
        payload: Option<String>,
    },
}

impl RedexKind {
    pub fn rule(&self) -> &'static str {
        match self {
            RedexKind::CondStep(true) => "R-Cond-T",
            RedexKind::CondStep(false) => "R-Cond-F",
            RedexKind::DefGC => "R-Def-0",
            RedexKind::DefCall(_) => "R-Def",
            RedexKind::TauStep(_) => "R-Tau",
            RedexKind::ComStep { .. } => "R-Com",
        }
    }
}

impl fmt::Display for RedexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RedexKind::CondStep(b) => write!(f, "if {b}"),
            RedexKind::DefGC => write!(f, "def-gc"),
            RedexKind::DefCall(x) => write!(f, "call {x}"),
            RedexKind::TauStep(c) => write!(f, "{c}: tau"),
            RedexKind::ComStep { session, sender, receiver, label, payload } => write!(
                f,
                "{session}: {sender} -> {receiver} : {label}({})",
                payload.as_deref().unwrap_or("")
            ),
        }
    }
}

/// One step `p →_prob result`; redexes sharing `alt` belong to one
/// probabilistic choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Redex {
    pub kind: RedexKind,
    pub prob: Rational,
    pub alt: usize,
    pub result: Process,
}

fn rebuild(n: &Nf, i: usize, ci: Process, other: Option<(usize, Process)>) -> Process {
    let mut m = n.clone();
    m.comps[i] = ci;
    if let Some((j, cj)) = other {
        m.comps[j] = cj;
    }
    normalize(&build(m, false))
}

fn instantiate(d: &Decl, args: &[Value], chans: &[Channel]) -> Process {
    assert_eq!(d.params.len(), args.len(), "arity mismatch in call of `{}`", d.name);
    let map: BTreeMap<Channel, Channel> = d
        .chans
        .iter()
        .zip(chans)
        .filter(|((dc, _), c)| dc != *c)
        .map(|((dc, _), c)| (dc.clone(), c.clone()))
        .collect();
    let mut body = rename_channels(&d.body, &map);
    for ((x, _), v) in d.params.iter().zip(args) {
        body = subst_value(&body, x, v);
    }
    body
}

fn enabled_nf(n: &Nf) -> Vec<Redex> {
    let mut out = Vec::new();
    if n.comps.is_empty() {
        if !n.decls.is_empty() {
            out.push(Redex {
                kind: RedexKind::DefGC,
                prob: Rational::one(),
                alt: 0,
                result: Process::Inact,
            });
        }
        return out;
    }
    let mut alt = 0;
    for (i, c) in n.comps.iter().enumerate() {
        match c {
            Process::Cond(Value::Bool(b), t, e) => {
                let next = if *b { (**t).clone() } else { (**e).clone() };
                out.push(Redex {
                    kind: RedexKind::CondStep(*b),
                    prob: Rational::one(),
                    alt,
                    result: rebuild(n, i, next, None),
                });
                alt += 1;
            }
            Process::Call { name, args, chans } => {
                if let Some(d) = n.decls.iter().find(|d| &d.name == name) {
                    if d.params.len() == args.len() && d.chans.len() == chans.len() {
                        out.push(Redex {
                            kind: RedexKind::DefCall(name.clone()),
                            prob: Rational::one(),
                            alt,
                            result: rebuild(n, i, instantiate(d, args, chans), None),
                        });
                        alt += 1;
                    }
                }
            }
            Process::Choice { chan, summands } => {
                for s in summands {
                    let PSummand::Out(os) = s else { continue };
                    let mut any = false;
                    for o in os {
                        match &o.action {
                            PAction::Tau => {
                                any = true;
                                out.push(Redex {
                                    kind: RedexKind::TauStep(print_channel(chan)),
                                    prob: o.prob.clone(),
                                    alt,
                                    result: rebuild(n, i, o.cont.clone(), None),
                                });
                            }
                            PAction::Send { from, to, label, payload } => {
                                for (j, d) in n.comps.iter().enumerate() {
                                    if j == i {
                                        continue;
                                    }
                                    let Some((rchan, recv)) = matching_input(d, chan, from, to, label) else {
                                        continue;
                                    };
                                    any = true;
                                    let recv = match (&recv.0, payload) {
                                        (Some(x), Some(v)) => subst_value(&recv.1, x, v),
                                        _ => recv.1.clone(),
                                    };
                                    out.push(Redex {
                                        kind: RedexKind::ComStep {
                                            session: chan.session.clone(),
                                            sender: print_channel(chan),
                                            receiver: print_channel(rchan),
                                            label: label.clone(),
                                            payload: payload.as_ref().map(print_value),
                                        },
                                        prob: o.prob.clone(),
                                        alt,
                                        result: rebuild(n, i, o.cont.clone(), Some((j, recv))),
                                    });
                                    break;
                                }
                            }
                        }
                    }
                    if any {
                        alt += 1;
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// The first input branch of component `d` matching the output `from -> to : label` on `chan`.
fn matching_input<'a>(
    d: &'a Process,
    chan: &Channel,
    from: &str,
    to: &str,
    label: &str,
) -> Option<(&'a Channel, (Option<Name>, Process))> {
    let Process::Choice { chan: rchan, summands } = d else {
        return None;
    };
    if rchan.session != chan.session || !rchan.has_role(to) || !chan.has_role(from) {
        return None;
    }
    summands.iter().find_map(|s| match s {
        PSummand::Input { to: t, from: f, label: l, binder, cont } if t == to && f == from && l == label => {
            Some((rchan, (binder.clone(), (**cont).clone())))
        }
        _ => None,
    })
}

/// All one-step reductions of `p`.
pub fn enabled(p: &Process) -> Vec<Redex> {
    enabled_nf(&nf(p))
}

// ------------------------------------------------------------ errors

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ErrorKind {
    Communication {
        session: Name,
        from: Name,
        to: Name,
        label: Name,
    },
    Value(String),
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::Communication { session, from, to, label } => write!(
                f,
                "communication error: {session}: {from}->{to}!{label} meets inputs of {to} from {from} without `{label}`"
            ),
            ErrorKind::Value(v) => write!(f, "value error: condition `{v}` is not a boolean"),
        }
    }
}

/// Classifies `p` as an error process, up to congruence.
pub fn is_error(p: &Process) -> Option<ErrorKind> {
    let n = nf(p);
    for c in &n.comps {
        if let Process::Cond(v, _, _) = c {
            if !matches!(v, Value::Bool(_)) {
                return Some(ErrorKind::Value(print_value(v)));
            }
        }
    }
    for (i, c) in n.comps.iter().enumerate() {
        let Process::Choice { chan, summands } = c else { continue };
        for s in summands {
            let PSummand::Out(os) = s else { continue };
            for o in os {
                let PAction::Send { from, to, label, .. } = &o.action else { continue };
                if !chan.has_role(from) {
                    continue;
                }
                for (j, d) in n.comps.iter().enumerate() {
                    let Process::Choice { chan: rc, summands: rs } = d else { continue };
                    if j == i || rc.session != chan.session || !rc.has_role(to) {
                        continue;
                    }
                    let labels: Vec<&Name> = rs
                        .iter()
                        .filter_map(|s| match s {
                            PSummand::Input { to: t, from: f, label, .. } if t == to && f == from => Some(label),
                            _ => None,
                        })
                        .collect();
                    if !labels.is_empty() && !labels.contains(&label) {
                        return Some(ErrorKind::Communication {
                            session: chan.session.clone(),
                            from: from.clone(),
                            to: to.clone(),
                            label: label.clone(),
                        });
                    }
                }
            }
        }
    }
    None
}

// --------------------------------------------------------- simulation

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scheduler {
    Uniform,
    First,
    /// Indices into the enabled redex list, one per step; `First` afterwards.
    Script(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub rule: &'static str,
    pub description: String,
    pub prob: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub cumulative: Rational,
    pub final_state: Process,
}

impl Trace {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "steps": self.steps,
            "cumulative": self.cumulative,
            "final": print_process(&self.final_state),
        })
    }
}

fn sample<'a>(rs: &[&'a Redex], rng: &mut ChaCha8Rng) -> &'a Redex {
    const SCALE: i64 = 1 << 52;
    let total = rs.iter().fold(Rational::zero(), |acc, r| acc + &r.prob);
    let u = Rational::new(rng.gen_range(0..SCALE), SCALE) * &total;
    let mut acc = Rational::zero();
    for r in rs {
        acc += &r.prob;
        if u < acc {
            return r;
        }
    }
    rs[rs.len() - 1]
}

/// Seeded simulation under the uniform scheduler.
pub fn simulate(p: &Process, seed: u64, max_steps: usize) -> Trace {
    simulate_with(p, &Scheduler::Uniform, seed, max_steps).expect("uniform scheduling cannot fail")
}

pub fn simulate_with(p: &Process, sched: &Scheduler, seed: u64, max_steps: usize) -> Result<Trace, ReduceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = normalize(p);
    let mut steps = Vec::new();
    let mut cumulative = Rational::one();
    for step in 0..max_steps {
        let rs = enabled(&cur);
        if rs.is_empty() {
            break;
        }
        let scripted = match sched {
            Scheduler::Script(ix) => ix.get(step).copied(),
            _ => None,
        };
        let chosen: &Redex = if let Some(index) = scripted {
            rs.get(index).ok_or(ReduceError::ScriptIndex {
                step,
                index,
                enabled: rs.len(),
            })?
        } else {
            let alts: Vec<usize> = rs.iter().map(|r| r.alt).collect::<BTreeSet<_>>().into_iter().collect();
            let alt = match sched {
                Scheduler::Uniform => alts[rng.gen_range(0..alts.len())],
                _ => alts[0],
            };
            let group: Vec<&Redex> = rs.iter().filter(|r| r.alt == alt).collect();
            sample(&group, &mut rng)
        };
        cumulative *= &chosen.prob;
        steps.push(TraceStep {
            rule: chosen.kind.rule(),
            description: chosen.kind.to_string(),
            prob: chosen.prob.clone(),
        });
        cur = chosen.result.clone();
    }
    Ok(Trace {
        steps,
        cumulative,
        final_state: cur,
    })
}

// -------------------------------------------------------- exploration

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExploreEdge {
    pub from: usize,
    pub to: usize,
    pub prob: Rational,
    pub alt: usize,
    pub rule: &'static str,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub terminal: Process,
    pub mass: Rational,
    pub deadlocked: bool,
    pub error: Option<ErrorKind>,
    /// Edge indices of the path.
    pub path: Vec<usize>,
}

/// Terminal state with the masses of every path reaching it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminalMasses {
    pub state: usize,
    pub masses: Vec<Rational>,
}

#[derive(Debug, Clone)]
pub struct Exploration {
    pub states: Vec<Process>,
    pub edges: Vec<ExploreEdge>,
    pub max_depth: usize,
    /// Some path was cut by the depth bound.
    pub truncated: bool,
    /// Per-path outcomes under the first-alternative scheduler.
    pub outcomes: Vec<Outcome>,
    /// Every terminal state with its per-path masses over all alternatives.
    pub terminals: Vec<TerminalMasses>,
    /// Explored states that are error processes.
    pub errors: Vec<(usize, ErrorKind)>,
    terminal: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathInfo {
    pub mass: Rational,
    pub edges: Vec<usize>,
}

impl Exploration {
    pub fn out_edges(&self, s: usize) -> impl Iterator<Item = (usize, &ExploreEdge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.from == s)
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Index of the state congruent to `p`.
    pub fn find(&self, p: &Process) -> Option<usize> {
        let n = normalize(p);
        self.states.iter().position(|s| *s == n)
    }

    /// Every path from the initial state to `target` within the depth bound.
    pub fn paths_to(&self, target: usize) -> Vec<PathInfo> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.walk(0, target, Rational::one(), &mut stack, &mut out);
        out
    }

    fn walk(&self, at: usize, target: usize, mass: Rational, stack: &mut Vec<usize>, out: &mut Vec<PathInfo>) {
        if at == target && !stack.is_empty() {
            out.push(PathInfo { mass: mass.clone(), edges: stack.clone() });
        }
        if stack.len() >= self.max_depth {
            return;
        }
        for (i, e) in self.out_edges(at) {
            stack.push(i);
            self.walk(e.to, target, &mass * &e.prob, stack, out);
            stack.pop();
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let outcome = |o: &Outcome| {
            serde_json::json!({
                "terminal": print_process(&o.terminal),
                "mass": o.mass,
                "deadlocked": o.deadlocked,
                "error": o.error.as_ref().map(|e| e.to_string()),
                "path": o.path.iter().map(|&i| self.edges[i].label.clone()).collect::<Vec<_>>(),
            })
        };
        serde_json::json!({
            "max_depth": self.max_depth,
            "truncated": self.truncated,
            "states": self.states.iter().map(print_process).collect::<Vec<_>>(),
            "edges": self.edges,
            "outcomes": self.outcomes.iter().map(outcome).collect::<Vec<_>>(),
            "terminals": self.terminals.iter().map(|t| serde_json::json!({
                "state": t.state,
                "process": print_process(&self.states[t.state]),
                "masses": t.masses,
            })).collect::<Vec<_>>(),
            "errors": self.errors.iter().map(|(s, e)| serde_json::json!({"state": s, "error": e.to_string()})).collect::<Vec<_>>(),
        })
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph explore {\n  node [shape=box, fontname=monospace];\n");
        for (i, p) in self.states.iter().enumerate() {
            let shape = if self.terminal[i] { ", peripheries=2" } else { "" };
            s.push_str(&format!("  n{i} [label={:?}{shape}];\n", print_process(p)));
        }
        for e in &self.edges {
            s.push_str(&format!("  n{} -> n{} [label={:?}];\n", e.from, e.to, format!("{} @ {}", e.label, e.prob)));
        }
        s.push_str("}\n");
        s
    }
}

/// Depth-bounded exhaustive exploration with default caps.
pub fn explore(p: &Process, max_depth: usize) -> Result<Exploration, ReduceError> {
    explore_with(p, max_depth, DEFAULT_STATE_CAP, DEFAULT_PATH_CAP)
}

pub fn explore_with(p: &Process, max_depth: usize, state_cap: usize, path_cap: usize) -> Result<Exploration, ReduceError> {
    let init = normalize(p);
    let mut index: BTreeMap<Process, usize> = BTreeMap::new();
    let mut states = vec![init.clone()];
    let mut depth = vec![0usize];
    let mut terminal = vec![false];
    let mut edges = Vec::new();
    index.insert(init, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let rs = enabled(&states[i]);
        terminal[i] = rs.is_empty();
        if depth[i] >= max_depth {
            continue;
        }
        for r in rs {
            let j = match index.get(&r.result) {
                Some(&j) => j,
                None => {
                    if states.len() >= state_cap {
                        return Err(ReduceError::BudgetExceeded(format!("more than {state_cap} states")));
                    }
                    let j = states.len();
                    index.insert(r.result.clone(), j);
                    states.push(r.result.clone());
                    depth.push(depth[i] + 1);
                    terminal.push(false);
                    queue.push_back(j);
                    j
                }
            };
            edges.push(ExploreEdge {
                from: i,
                to: j,
                prob: r.prob,
                alt: r.alt,
                rule: r.kind.rule(),
                label: r.kind.to_string(),
            });
        }
    }
    let errors = states
        .iter()
        .enumerate()
        .filter_map(|(i, s)| is_error(s).map(|e| (i, e)))
        .collect();
    let mut ex = Exploration {
        states,
        edges,
        max_depth,
        truncated: false,
        outcomes: Vec::new(),
        terminals: Vec::new(),
        errors,
        terminal,
    };
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); ex.states.len()];
    for (k, e) in ex.edges.iter().enumerate() {
        adj[e.from].push(k);
    }
    let mut walker = Walker {
        ex: &ex,
        adj: &adj,
        budget: path_cap,
        truncated: false,
        paths: Vec::new(),
    };
    walker.walk(0, false, Rational::one(), &mut Vec::new())?;
    let all = std::mem::take(&mut walker.paths);
    let mut truncated = walker.truncated;
    walker.truncated = false;
    walker.walk(0, true, Rational::one(), &mut Vec::new())?;
    let first = std::mem::take(&mut walker.paths);
    truncated |= walker.truncated;

    let mut by_state: BTreeMap<usize, Vec<Rational>> = BTreeMap::new();
    for (s, m, _) in &all {
        by_state.entry(*s).or_default().push(m.clone());
    }
    ex.terminals = by_state
        .into_iter()
        .map(|(state, masses)| TerminalMasses { state, masses })
        .collect();
    ex.outcomes = first
        .into_iter()
        .map(|(s, mass, path)| {
            let terminal = ex.states[s].clone();
            Outcome {
                deadlocked: terminal != Process::Inact,
                error: is_error(&terminal),
                terminal,
                mass,
                path,
            }
        })
        .collect();
    ex.truncated = truncated;
    Ok(ex)
}

struct Walker<'a> {
    ex: &'a Exploration,
    adj: &'a [Vec<usize>],
    budget: usize,
    truncated: bool,
    paths: Vec<(usize, Rational, Vec<usize>)>,
}

impl Walker<'_> {
    fn walk(&mut self, at: usize, first_only: bool, mass: Rational, stack: &mut Vec<usize>) -> Result<(), ReduceError> {
        if self.ex.terminal[at] {
            if self.budget == 0 {
                return Err(ReduceError::BudgetExceeded("too many paths".into()));
            }
            self.budget -= 1;
            self.paths.push((at, mass, stack.clone()));
            return Ok(());
        }
        let out = &self.adj[at];
        if stack.len() >= self.ex.max_depth || out.is_empty() {
            self.truncated = true;
            return Ok(());
        }
        let alt = out.iter().map(|&k| self.ex.edges[k].alt).min();
        for &k in out {
            let e = &self.ex.edges[k];
            if first_only && Some(e.alt) != alt {
                continue;
            }
            stack.push(k);
            self.walk(e.to, first_only, &mass * &e.prob, stack)?;
            stack.pop();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::parse_process;

    fn proc(s: &str) -> Process {
        parse_process(s).unwrap()
    }

    #[test]
    fn par_unit_and_idempotence() {
        let p = proc("s[a]{(1: a->b!x().0)} | 0");
        assert_eq!(normalize(&p), proc("s[a]{(1: a->b!x().0)}"));
        let q = proc("(s[b]{b<-a?x().0} | 0) | (s[a]{(1: a->b!x().0)} | new t. 0)");
        let n = normalize(&q);
        assert_eq!(normalize(&n), n);
        assert_eq!(n.components().len(), 2);
    }

    #[test]
    fn restriction_is_renamed_on_capture() {
        let p = proc("s[a]{(1: a->b!x().0)} | new s. s[b]{b<-a?x().0}");
        let n = normalize(&p);
        let Process::Res(s, body) = &n else { panic!("{}", print_process(&n)) };
        assert_ne!(s, "s");
        assert!(free_sessions(body).contains("s"));
        assert!(enabled(&n).is_empty());
    }

    #[test]
    fn definitions_are_hoisted() {
        let p = proc("(def X(; s[a]: end) = 0 in X(; s[a])) | s[b]{b<-a?x().0}");
        let n = normalize(&p);
        assert!(matches!(n, Process::Def(..)));
        let q = proc("(def X(; s[a]: end) = 0 in X(; s[a])) | X(; s[a])");
        let Process::Def(ds, _) = normalize(&q) else { panic!() };
        assert_ne!(ds[0].name, "X");
        assert!(matches!(normalize(&proc("def X(; s[a]: end) = 0 in 0")), Process::Inact));
        let r = enabled(&proc("def X(; s[a]: end) = 0 in 0"));
        assert_eq!(r[0].kind, RedexKind::DefGC);
    }

    #[test]
    fn inact_has_no_redex() {
        assert!(enabled(&Process::Inact).is_empty());
        let t = simulate(&Process::Inact, 7, 10);
        assert!(t.steps.is_empty());
        assert!(t.cumulative.is_one());
    }

    #[test]
    fn com_substitutes_payload() {
        let p = proc("s[a]{(1: a->b!v(true).0)} | s[b]{b<-a?v(x).if x then 0 else s[b]{(1: b->c!no().0)}}");
        let rs = enabled(&p);
        assert_eq!(rs.len(), 1);
        let rs2 = enabled(&rs[0].result);
        assert_eq!(rs2[0].kind, RedexKind::CondStep(true));
        assert_eq!(rs2[0].result, Process::Inact);
    }

    #[test]
    fn recursion_unfolds() {
        let p = proc("def X(n: nat; s[a]: rec t. (1: a->b!v(nat).t)) = s[a]{(1: a->b!v(n).X(n; s[a]))} in X(4; s[a])");
        let rs = enabled(&p);
        assert_eq!(rs[0].kind, RedexKind::DefCall("X".into()));
        assert!(print_process(&rs[0].result).contains("a->b!v(4)"));
    }

    #[test]
    fn error_processes() {
        assert!(matches!(is_error(&proc("if x then 0 else 0")), Some(ErrorKind::Value(_))));
        let p = proc("s[a]{(1: a->b!l().0)} | s[b]{b<-a?m().0}");
        assert!(matches!(is_error(&p), Some(ErrorKind::Communication { .. })));
        let q = proc("s[a]{(1: a->b!l().0)} | s[b]{b<-c?m().0}");
        assert_eq!(is_error(&q), None);
    }

    #[test]
    fn deadlocked_toy() {
        let p = proc("s[a]{(1: a->b!l().0)} | s[b]{b<-a?m().0}");
        let ex = explore(&p, 5).unwrap();
        assert_eq!(ex.outcomes.len(), 1);
        assert!(ex.outcomes[0].deadlocked);
        assert!(ex.outcomes[0].mass.is_one());
    }

    #[test]
    fn seeded_simulation_is_deterministic() {
        let p = proc("s[a]{(0.5: tau.0 (+) 0.5: tau.s[a]{(1: tau.0)})}");
        let a = simulate(&p, 42, 10);
        assert_eq!(a, simulate(&p, 42, 10));
        let s = simulate_with(&p, &Scheduler::Script(vec![1, 0]), 0, 10).unwrap();
        assert_eq!(s.cumulative, Rational::new(1, 2));
        assert_eq!(s.steps.len(), 2);
        assert!(simulate_with(&p, &Scheduler::Script(vec![5]), 0, 10).is_err());
    }

    #[test]
    fn exploration_masses_sum_to_one() {
        let p = proc("s[a]{(0.25: a->b!x().0 (+) 0.75: a->b!y().0)} | s[b]{b<-a?x().0 + b<-a?y().s[b]{(0.5: tau.0 (+) 0.5: tau.0)}}");
        let ex = explore(&p, 10).unwrap();
        let total = ex.outcomes.iter().fold(Rational::zero(), |a, o| a + &o.mass);
        assert!(total.is_one());
        assert!(!ex.truncated);
        assert!(ex.errors.is_empty());
        let t = ex.terminals.iter().find(|t| ex.states[t.state] == Process::Inact).unwrap();
        let mut ms = t.masses.clone();
        ms.sort();
        assert_eq!(ms, vec![Rational::new(1, 4), Rational::new(3, 8), Rational::new(3, 8)]);
        assert!(ex.to_dot().contains("->"));
    }

    #[test]
    fn depth_cut_is_reported() {
        let p = proc("def X(; s[a]: rec t. (1: tau.t)) = s[a]{(1: tau.X(; s[a]))} in X(; s[a])");
        let ex = explore(&p, 4).unwrap();
        assert!(ex.truncated);
        assert!(ex.outcomes.is_empty());
    }
}
