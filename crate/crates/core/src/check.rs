//! The typing judgment `Γ ⊢ P ▷ Δ`: syntax-directed synthesis of a local
//! context followed by one subsumption step, plus the canonical-process
//! predicate.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::ctxlts::{safe, CtxError};
use crate::subtype::{sub_multi_with, Derivation, Goal, SubtypeError, DEFAULT_BUDGET};
use crate::surface::{print_channel, print_context, print_type};
use crate::syntax::{
    erase_end, BaseType, Branch, Channel, ContextError, Decl, GlobalEnv, Head, LocalContext, Msg, Name,
    PAction, POut, PSummand, Process, ProcSig, SessionType, Summand, Ty, Value,
};
use crate::typemeta::{canonical_context, is_well_formed, split_modes, state_type, well_formed};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("role `{role}` is not held by channel {chan} ({action})")]
    RoleMembership { chan: String, role: Name, action: String },
    #[error("unbound variable `{0}`")]
    UnboundVariable(Name),
    #[error("unbound process variable `{0}`")]
    UnboundProcVar(Name),
    #[error("payload mismatch in {at}: expected {expected}, found {found}")]
    PayloadMismatch { at: String, expected: String, found: String },
    #[error("cannot determine the payload sort of binder `{binder}` in {at}")]
    UnresolvedBinder { binder: Name, at: String },
    #[error("restricted session `{session}` is not safe: {detail}")]
    UnsafeRestriction { session: Name, detail: String },
    #[error(transparent)]
    Linearity(#[from] ContextError),
    #[error("call of `{name}`: {detail}")]
    CallMismatch { name: Name, detail: String },
    #[error("branches disagree on their context: {0}")]
    BranchMismatch(String),
    #[error("body of `{name}` does not match its annotation: {detail}")]
    DeclMismatch { name: Name, detail: String },
    #[error("ill-formed declared type for {chan}: {detail}")]
    IllFormedDeclared { chan: String, detail: String },
    #[error("ill-formed synthesized type for {chan}: {detail}")]
    IllFormedSynthesized { chan: String, detail: String },
    #[error(transparent)]
    Subtype(#[from] SubtypeError),
    #[error(transparent)]
    Ctx(#[from] CtxError),
}

impl CheckError {
    /// Budget exhaustion makes a verdict inconclusive rather than negative.
    pub fn is_inconclusive(&self) -> bool {
        matches!(self, CheckError::Subtype(e) if e.is_inconclusive())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub span: Option<crate::surface::Pos>,
    pub message: String,
}

/// Result of `check`.
#[derive(Debug, Clone)]
pub struct TypeReport {
    pub verdict: bool,
    pub inconclusive: bool,
    pub synthesized: LocalContext,
    pub subsumption: Option<Derivation<Goal>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl TypeReport {
    fn failed(synthesized: LocalContext, e: &CheckError) -> Self {
        TypeReport {
            verdict: false,
            inconclusive: e.is_inconclusive(),
            synthesized,
            subsumption: None,
            diagnostics: vec![Diagnostic { span: None, message: e.to_string() }],
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "verdict": self.verdict,
            "inconclusive": self.inconclusive,
            "synthesized": print_context(&self.synthesized),
            "derivation": self.subsumption.as_ref().map(|d| d.to_json()),
            "diagnostics": self.diagnostics,
        })
    }
}

#[derive(Clone, Default)]
struct Scope {
    vars: BTreeMap<Name, BaseType>,
    procs: BTreeMap<Name, ProcSig>,
}

struct Checker {
    budget: u64,
    /// Payload sorts of outputs with literal payloads, keyed by session and message.
    sent: BTreeMap<(Name, Name, Name, Name), BaseType>,
}

/// Synthesizes the context of `p` under `env`.
pub fn synth(env: &GlobalEnv, p: &Process) -> Result<LocalContext, CheckError> {
    synth_with(env, p, None, DEFAULT_BUDGET)
}

/// Synthesis guided by an expected context, used to resolve binder sorts.
pub fn synth_with(
    env: &GlobalEnv,
    p: &Process,
    hint: Option<&LocalContext>,
    budget: u64,
) -> Result<LocalContext, CheckError> {
    let mut ck = Checker { budget, sent: BTreeMap::new() };
    collect_sent(p, &env.vars, &mut ck.sent);
    let scope = Scope {
        vars: env.vars.clone(),
        procs: env.procvars.clone(),
    };
    ck.proc(&scope, p, hint)
}

/// `Γ ⊢ P ▷ Δ` with the certificate of the final subsumption.
pub fn check(env: &GlobalEnv, p: &Process, declared: &LocalContext) -> TypeReport {
    check_with(env, p, declared, DEFAULT_BUDGET)
}

pub fn check_with(env: &GlobalEnv, p: &Process, declared: &LocalContext, budget: u64) -> TypeReport {
    for (c, t) in declared.iter() {
        if !is_well_formed(t) {
            let e = CheckError::IllFormedDeclared {
                chan: print_channel(c),
                detail: wf_detail(t),
            };
            return TypeReport::failed(LocalContext::new(), &e);
        }
    }
    let synthesized = match synth_with(env, p, Some(declared), budget) {
        Ok(d) => d,
        Err(e) => return TypeReport::failed(LocalContext::new(), &e),
    };
    if let Err(e) = check_wf_ctx(&synthesized) {
        return TypeReport::failed(synthesized, &e);
    }
    if canonical_context(&synthesized) == canonical_context(declared) {
        let d = sub_multi_with(&synthesized, declared, budget).ok().flatten();
        return TypeReport {
            verdict: true,
            inconclusive: false,
            synthesized,
            subsumption: d,
            diagnostics: vec![],
        };
    }
    match sub_multi_with(&synthesized, declared, budget) {
        Ok(Some(d)) => TypeReport {
            verdict: true,
            inconclusive: false,
            synthesized,
            subsumption: Some(d),
            diagnostics: vec![],
        },
        Ok(None) => {
            let message = format!(
                "synthesized context {} is not a subtype of the declared context {}",
                print_context(&synthesized),
                print_context(declared)
            );
            TypeReport {
                verdict: false,
                inconclusive: false,
                synthesized,
                subsumption: None,
                diagnostics: vec![Diagnostic { span: None, message }],
            }
        }
        Err(e) => TypeReport::failed(synthesized, &CheckError::Subtype(e)),
    }
}

fn wf_detail(t: &SessionType) -> String {
    well_formed(t).iter().map(|w| w.to_string()).collect::<Vec<_>>().join("; ")
}

fn check_wf_ctx(d: &LocalContext) -> Result<(), CheckError> {
    for (c, t) in d.iter() {
        if !is_well_formed(t) {
            return Err(CheckError::IllFormedSynthesized {
                chan: print_channel(c),
                detail: wf_detail(t),
            });
        }
    }
    Ok(())
}

fn literal_sort(v: &Value, vars: &BTreeMap<Name, BaseType>) -> Option<BaseType> {
    match v {
        Value::Nat(_) => Some(BaseType::Nat),
        Value::Bool(_) => Some(BaseType::Bool),
        Value::Var(x) => vars.get(x).copied(),
    }
}

fn collect_sent(p: &Process, vars: &BTreeMap<Name, BaseType>, out: &mut BTreeMap<(Name, Name, Name, Name), BaseType>) {
    match p {
        Process::Inact | Process::Call { .. } => {}
        Process::Par(a, b) | Process::Cond(_, a, b) => {
            collect_sent(a, vars, out);
            collect_sent(b, vars, out);
        }
        Process::Res(_, b) => collect_sent(b, vars, out),
        Process::Def(ds, b) => {
            for d in ds {
                collect_sent(&d.body, vars, out);
            }
            collect_sent(b, vars, out);
        }
        Process::Choice { chan, summands } => {
            for s in summands {
                match s {
                    PSummand::Input { cont, .. } => collect_sent(cont, vars, out),
                    PSummand::Out(os) => {
                        for o in os {
                            if let PAction::Send { from, to, label, payload: Some(v) } = &o.action {
                                if let Some(u) = literal_sort(v, vars) {
                                    out.entry((chan.session.clone(), from.clone(), to.clone(), label.clone()))
                                        .or_insert(u);
                                }
                            }
                            collect_sent(&o.cont, vars, out);
                        }
                    }
                }
            }
        }
    }
}

/// Sort of `x` forced by its uses in `p`: a condition or a call argument.
fn usage_sort(x: &str, p: &Process, procs: &BTreeMap<Name, ProcSig>) -> Option<BaseType> {
    match p {
        Process::Inact => None,
        Process::Cond(v, a, b) => {
            if matches!(v, Value::Var(y) if y == x) {
                return Some(BaseType::Bool);
            }
            usage_sort(x, a, procs).or_else(|| usage_sort(x, b, procs))
        }
        Process::Par(a, b) => usage_sort(x, a, procs).or_else(|| usage_sort(x, b, procs)),
        Process::Res(_, b) => usage_sort(x, b, procs),
        Process::Def(ds, b) => {
            let mut procs = procs.clone();
            for d in ds {
                procs.insert(d.name.clone(), sig_of(d));
            }
            usage_sort(x, b, &procs)
        }
        Process::Call { name, args, .. } => {
            let sig = procs.get(name)?;
            args.iter()
                .zip(&sig.params)
                .find(|(a, _)| matches!(a, Value::Var(y) if y == x))
                .map(|(_, u)| *u)
        }
        Process::Choice { summands, .. } => summands.iter().find_map(|s| match s {
            PSummand::Input { binder, cont, .. } => {
                if binder.as_deref() == Some(x) {
                    None
                } else {
                    usage_sort(x, cont, procs)
                }
            }
            PSummand::Out(os) => os.iter().find_map(|o| usage_sort(x, &o.cont, procs)),
        }),
    }
}

fn sig_of(d: &Decl) -> ProcSig {
    ProcSig {
        params: d.params.iter().map(|(_, u)| *u).collect(),
        chans: d.chans.clone(),
    }
}

fn sort_name(u: Option<BaseType>) -> String {
    match u {
        None => "no payload".into(),
        Some(BaseType::Nat) => "nat".into(),
        Some(BaseType::Bool) => "bool".into(),
    }
}

fn hint_type(hint: Option<&LocalContext>, c: &Channel) -> Option<Ty> {
    hint.and_then(|h| h.get(c)).map(state_type)
}

fn with_hint(hint: Option<&LocalContext>, c: &Channel, t: Option<Ty>) -> Option<LocalContext> {
    let mut h = hint?.clone();
    match t {
        Some(t) => h.set(c.clone(), t),
        None => {
            h.remove(c);
        }
    }
    Some(h)
}

impl Checker {
    fn value_sort(&self, scope: &Scope, v: &Value) -> Result<BaseType, CheckError> {
        literal_sort(v, &scope.vars).ok_or_else(|| match v {
            Value::Var(x) => CheckError::UnboundVariable(x.clone()),
            _ => unreachable!(),
        })
    }

    fn proc(&mut self, scope: &Scope, p: &Process, hint: Option<&LocalContext>) -> Result<LocalContext, CheckError> {
        match p {
            Process::Inact => Ok(LocalContext::new()),
            Process::Par(a, b) => {
                let da = self.proc(scope, a, hint)?;
                let db = self.proc(scope, b, hint)?;
                let mut out = da;
                for (c, t) in db.iter() {
                    out.add(c.clone(), t.clone())?;
                }
                Ok(out)
            }
            Process::Res(s, b) => {
                let d = self.proc(scope, b, hint)?;
                let restricted = d.restrict(s);
                check_wf_ctx(&restricted)?;
                let v = safe(&restricted)?;
                if !v.holds {
                    let detail = v
                        .counterexample
                        .and_then(|c| c.conflict)
                        .map(|(o, i)| format!("{o} meets {i}"))
                        .unwrap_or_default();
                    return Err(CheckError::UnsafeRestriction { session: s.clone(), detail });
                }
                Ok(d.without_session(s))
            }
            Process::Cond(v, a, b) => {
                let u = self.value_sort(scope, v)?;
                if u != BaseType::Bool {
                    return Err(CheckError::PayloadMismatch {
                        at: "condition".into(),
                        expected: "bool".into(),
                        found: sort_name(Some(u)),
                    });
                }
                let da = self.proc(scope, a, hint)?;
                let db = self.proc(scope, b, hint)?;
                self.join(da, db)
            }
            Process::Def(ds, body) => {
                let mut inner = scope.clone();
                for d in ds {
                    inner.procs.insert(d.name.clone(), sig_of(d));
                }
                for d in ds {
                    self.decl(&inner, d)?;
                }
                self.proc(&inner, body, hint)
            }
            Process::Call { name, args, chans } => {
                let sig = scope
                    .procs
                    .get(name)
                    .ok_or_else(|| CheckError::UnboundProcVar(name.clone()))?;
                if args.len() != sig.params.len() {
                    return Err(CheckError::CallMismatch {
                        name: name.clone(),
                        detail: format!("{} arguments for {} parameters", args.len(), sig.params.len()),
                    });
                }
                for (a, u) in args.iter().zip(&sig.params) {
                    let found = self.value_sort(scope, a)?;
                    if found != *u {
                        return Err(CheckError::PayloadMismatch {
                            at: format!("argument of `{name}`"),
                            expected: sort_name(Some(*u)),
                            found: sort_name(Some(found)),
                        });
                    }
                }
                if chans.len() != sig.chans.len() {
                    return Err(CheckError::CallMismatch {
                        name: name.clone(),
                        detail: format!("{} channels for {} declared", chans.len(), sig.chans.len()),
                    });
                }
                let mut out = LocalContext::new();
                for (c, (dc, t)) in chans.iter().zip(&sig.chans) {
                    if c.roles != dc.roles {
                        return Err(CheckError::CallMismatch {
                            name: name.clone(),
                            detail: format!("channel {} passed for {}", print_channel(c), print_channel(dc)),
                        });
                    }
                    out.add(c.clone(), t.clone())?;
                }
                Ok(out)
            }
            Process::Choice { chan, summands } => self.choice(scope, chan, summands, hint),
        }
    }

    fn decl(&mut self, scope: &Scope, d: &Decl) -> Result<(), CheckError> {
        let mut inner = scope.clone();
        for (x, u) in &d.params {
            inner.vars.insert(x.clone(), *u);
        }
        let declared = LocalContext::from_bindings(d.chans.iter().cloned())?;
        for (c, t) in declared.iter() {
            if !is_well_formed(t) {
                return Err(CheckError::IllFormedDeclared {
                    chan: print_channel(c),
                    detail: wf_detail(t),
                });
            }
        }
        let got = self.proc(&inner, &d.body, Some(&declared))?;
        check_wf_ctx(&got)?;
        if canonical_context(&got) == canonical_context(&declared) {
            return Ok(());
        }
        match sub_multi_with(&got, &declared, self.budget)? {
            Some(_) => Ok(()),
            None => Err(CheckError::DeclMismatch {
                name: d.name.clone(),
                detail: format!("{} against {}", print_context(&got), print_context(&declared)),
            }),
        }
    }

    /// Agreement of the branches of a conditional: the supertype of the two.
    fn join(&self, da: LocalContext, db: LocalContext) -> Result<LocalContext, CheckError> {
        if canonical_context(&da) == canonical_context(&db) {
            return Ok(da);
        }
        check_wf_ctx(&da)?;
        check_wf_ctx(&db)?;
        if sub_multi_with(&da, &db, self.budget)?.is_some() {
            return Ok(db);
        }
        if sub_multi_with(&db, &da, self.budget)?.is_some() {
            return Ok(da);
        }
        Err(CheckError::BranchMismatch(format!(
            "{} and {}",
            print_context(&da),
            print_context(&db)
        )))
    }

    fn binder_sort(
        &self,
        scope: &Scope,
        chan: &Channel,
        msg_key: (&str, &str, &str),
        binder: &str,
        cont: &Process,
        hinted: Option<&Msg>,
    ) -> Result<BaseType, CheckError> {
        let (to, from, label) = msg_key;
        if let Some(u) = hinted.and_then(|m| m.payload) {
            return Ok(u);
        }
        if let Some(u) = usage_sort(binder, cont, &scope.procs) {
            return Ok(u);
        }
        let key = (chan.session.clone(), from.to_string(), to.to_string(), label.to_string());
        self.sent.get(&key).copied().ok_or_else(|| CheckError::UnresolvedBinder {
            binder: binder.to_string(),
            at: format!("{}: {to}<-{from}?{label}", print_channel(chan)),
        })
    }

    fn choice(
        &mut self,
        scope: &Scope,
        chan: &Channel,
        summands: &[PSummand],
        hint: Option<&LocalContext>,
    ) -> Result<LocalContext, CheckError> {
        let expected = hint_type(hint, chan);
        let (h_ins, h_sums) = expected.as_deref().map(split_modes).unwrap_or_default();
        let mut branches = Vec::new();
        let mut rests: Vec<LocalContext> = Vec::new();
        for s in summands {
            match s {
                PSummand::Input { to, from, label, binder, cont } => {
                    if !chan.has_role(to) {
                        return Err(CheckError::RoleMembership {
                            chan: print_channel(chan),
                            role: to.clone(),
                            action: format!("input {to}<-{from}?{label}"),
                        });
                    }
                    let hinted = h_ins
                        .iter()
                        .find(|(m, _)| m.to == *to && m.from == *from && m.label == *label);
                    let mut inner = scope.clone();
                    let payload = match binder {
                        None => None,
                        Some(x) => {
                            let u = self.binder_sort(scope, chan, (to, from, label), x, cont, hinted.map(|(m, _)| m))?;
                            inner.vars.insert(x.clone(), u);
                            Some(u)
                        }
                    };
                    let h = with_hint(hint, chan, hinted.map(|(_, c)| c.clone()));
                    let mut d = self.proc(&inner, cont, h.as_ref())?;
                    let t = d.remove(chan).unwrap_or_else(SessionType::end);
                    branches.push(Branch::Input(Msg::new(from.clone(), to.clone(), label.clone(), payload), t));
                    rests.push(d);
                }
                PSummand::Out(os) => {
                    let mut ss = Vec::new();
                    for o in os {
                        let (summand, rest) = self.out(scope, chan, o, &h_sums, hint)?;
                        ss.push(summand);
                        rests.push(rest);
                    }
                    branches.push(Branch::Sum(ss));
                }
            }
        }
        let mut rest = match rests.first() {
            Some(r) => r.clone(),
            None => LocalContext::new(),
        };
        let key = canonical_context(&erase_end(&rest));
        for r in &rests[1..] {
            if canonical_context(&erase_end(r)) != key {
                return Err(CheckError::BranchMismatch(format!(
                    "summands of {} leave {} and {}",
                    print_channel(chan),
                    print_context(&rest),
                    print_context(r)
                )));
            }
        }
        rest = erase_end(&rest);
        rest.add(chan.clone(), SessionType::mixed(branches))?;
        Ok(rest)
    }

    fn out(
        &mut self,
        scope: &Scope,
        chan: &Channel,
        o: &POut,
        h_sums: &[Vec<Summand>],
        hint: Option<&LocalContext>,
    ) -> Result<(Summand, LocalContext), CheckError> {
        let head = match &o.action {
            PAction::Tau => Head::Tau,
            PAction::Send { from, to, label, payload } => {
                if !chan.has_role(from) {
                    return Err(CheckError::RoleMembership {
                        chan: print_channel(chan),
                        role: from.clone(),
                        action: format!("output {from}->{to}!{label}"),
                    });
                }
                let u = match payload {
                    None => None,
                    Some(v) => Some(self.value_sort(scope, v)?),
                };
                Head::Out(Msg::new(from.clone(), to.clone(), label.clone(), u))
            }
        };
        let hinted = h_sums.iter().flatten().find(|s| s.head == head).map(|s| s.cont.clone());
        let h = with_hint(hint, chan, hinted);
        let mut d = self.proc(scope, &o.cont, h.as_ref())?;
        let t = d.remove(chan).unwrap_or_else(SessionType::end);
        Ok((Summand::new(o.prob.clone(), head, t), d))
    }
}

/// Verdict of the canonical-process predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Canonical {
    pub holds: bool,
    pub reason: String,
}

fn has_res(p: &Process) -> bool {
    match p {
        Process::Inact | Process::Call { .. } => false,
        Process::Res(..) => true,
        Process::Par(a, b) | Process::Cond(_, a, b) => has_res(a) || has_res(b),
        Process::Def(ds, b) => ds.iter().any(|d| has_res(&d.body)) || has_res(b),
        Process::Choice { summands, .. } => summands.iter().any(|s| match s {
            PSummand::Input { cont, .. } => has_res(cont),
            PSummand::Out(os) => os.iter().any(|o| has_res(&o.cont)),
        }),
    }
}

/// Channels used by choices and calls of `p`.
pub fn channels_used(p: &Process) -> BTreeSet<Channel> {
    fn go(p: &Process, out: &mut BTreeSet<Channel>) {
        match p {
            Process::Inact => {}
            Process::Par(a, b) | Process::Cond(_, a, b) => {
                go(a, out);
                go(b, out);
            }
            Process::Res(_, b) => go(b, out),
            Process::Def(ds, b) => {
                for d in ds {
                    go(&d.body, out);
                }
                go(b, out);
            }
            Process::Call { chans, .. } => out.extend(chans.iter().cloned()),
            Process::Choice { chan, summands } => {
                out.insert(chan.clone());
                for s in summands {
                    match s {
                        PSummand::Input { cont, .. } => go(cont, out),
                        PSummand::Out(os) => os.iter().for_each(|o| go(&o.cont, out)),
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    go(p, &mut out);
    out
}

/// Restriction-free, one parallel component per binding, each using only
/// its own channel and typed by exactly that binding.
pub fn canonical(env: &GlobalEnv, p: &Process, declared: &LocalContext) -> Canonical {
    let no = |reason: String| Canonical { holds: false, reason };
    if has_res(p) {
        return no("process contains a restriction".into());
    }
    let mut decls: Vec<Decl> = Vec::new();
    let mut body = p;
    while let Process::Def(ds, b) = body {
        decls.extend(ds.iter().cloned());
        body = b;
    }
    let comps: Vec<&Process> = body
        .components()
        .into_iter()
        .filter(|c| !matches!(c, Process::Inact))
        .collect();
    let declared = erase_end(declared);
    if comps.len() != declared.len() {
        return no(format!(
            "{} parallel components for {} bindings",
            comps.len(),
            declared.len()
        ));
    }
    let mut seen = BTreeSet::new();
    for comp in comps {
        let used = channels_used(comp);
        if used.len() != 1 {
            let names: Vec<String> = used.iter().map(print_channel).collect();
            return no(format!("component `{}` uses channels {}", crate::surface::print_process(comp), names.join(", ")));
        }
        let c = used.into_iter().next().unwrap();
        let Some(t) = declared.get(&c) else {
            return no(format!("channel {} is not declared", print_channel(&c)));
        };
        if !seen.insert(c.clone()) {
            return no(format!("channel {} has two components", print_channel(&c)));
        }
        let wrapped = if decls.is_empty() {
            comp.clone()
        } else {
            Process::Def(decls.clone(), Box::new(comp.clone()))
        };
        let r = check(env, &wrapped, &LocalContext::singleton(c.clone(), t.clone()));
        if !r.verdict {
            return no(format!(
                "component for {} is not typed by {}: {}",
                print_channel(&c),
                print_type(t),
                r.diagnostics.first().map(|d| d.message.clone()).unwrap_or_default()
            ));
        }
    }
    Canonical { holds: true, reason: "canonical".into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{parse_context, parse_process};

    fn proc(s: &str) -> Process {
        parse_process(s).unwrap()
    }

    fn ctx(s: &str) -> LocalContext {
        parse_context(s).unwrap()
    }

    #[test]
    fn inact_is_empty() {
        assert!(synth(&GlobalEnv::new(), &Process::Inact).unwrap().is_empty());
    }

    #[test]
    fn defendant_synthesizes_its_type() {
        let p = proc("s[d]{(0.5: d->j!wk().0 (+) 0.2: d->j!str().0 (+) 0.3: d->j!wit().0)}");
        let d = synth(&GlobalEnv::new(), &p).unwrap();
        let want = ctx("{ s[d] : (0.5: d->j!wk() (+) 0.2: d->j!str() (+) 0.3: d->j!wit()) }");
        assert_eq!(canonical_context(&d), canonical_context(&want));
        assert!(check(&GlobalEnv::new(), &p, &want).verdict);
    }

    #[test]
    fn role_membership() {
        let p = proc("s[p]{q<-r?l(x).0}");
        assert!(matches!(synth(&GlobalEnv::new(), &p), Err(CheckError::RoleMembership { .. })));
        let p = proc("s[p]{(1: q->r!l().0)}");
        assert!(matches!(synth(&GlobalEnv::new(), &p), Err(CheckError::RoleMembership { .. })));
    }

    #[test]
    fn binder_sort_from_hint_usage_and_partner() {
        let p = proc("s[a]{a<-b?v(x).if x then 0 else 0}");
        let d = synth(&GlobalEnv::new(), &p).unwrap();
        assert!(print_context(&d).contains("v(bool)"));
        let p = proc("s[a]{a<-b?v(x).0} | s[b]{(1: b->a!v(3).0)}");
        let d = synth(&GlobalEnv::new(), &p).unwrap();
        assert!(print_context(&d).contains("a<-b?v(nat)"));
        let p = proc("s[a]{a<-b?v(x).0}");
        assert!(matches!(synth(&GlobalEnv::new(), &p), Err(CheckError::UnresolvedBinder { .. })));
        let hint = ctx("{ s[a] : a<-b?v(bool) }");
        assert!(check(&GlobalEnv::new(), &p, &hint).verdict);
    }

    #[test]
    fn unbound_names() {
        let p = proc("s[a]{(1: a->b!v(y).0)}");
        assert_eq!(synth(&GlobalEnv::new(), &p).unwrap_err(), CheckError::UnboundVariable("y".into()));
        let env = GlobalEnv::new().with_var("y", BaseType::Nat);
        assert!(synth(&env, &p).is_ok());
        let p = proc("X(; s[a])");
        assert!(matches!(synth(&GlobalEnv::new(), &p), Err(CheckError::UnboundProcVar(_))));
    }

    #[test]
    fn condition_must_be_boolean() {
        let p = proc("if 3 then 0 else 0");
        assert!(matches!(synth(&GlobalEnv::new(), &p), Err(CheckError::PayloadMismatch { .. })));
        assert!(synth(&GlobalEnv::new(), &proc("if true then 0 else 0")).unwrap().is_empty());
    }

    #[test]
    fn parallel_linearity() {
        let p = proc("s[a]{(1: a->b!v().0)} | s[a]{(1: a->b!v().0)}");
        assert!(matches!(synth(&GlobalEnv::new(), &p), Err(CheckError::Linearity(_))));
    }

    #[test]
    fn restriction_requires_safety() {
        let ok = proc("new s. (s[a]{(1: a->b!v().0)} | s[b]{b<-a?v().0})");
        assert!(synth(&GlobalEnv::new(), &ok).unwrap().is_empty());
        let bad = proc("new s. (s[a]{(1: a->b!v().0)} | s[b]{b<-a?w().0})");
        assert!(matches!(synth(&GlobalEnv::new(), &bad), Err(CheckError::UnsafeRestriction { .. })));
    }

    #[test]
    fn recursive_declaration_checks_against_annotation() {
        let p = proc("def X(; s[a]: rec t. (1: a->b!l().t)) = s[a]{(1: a->b!l().X(; s[a]))} in X(; s[a])");
        let d = ctx("{ s[a] : rec u. (1: a->b!l().(1: a->b!l().u)) }");
        assert!(check(&GlobalEnv::new(), &p, &d).verdict);
        let wrong = proc("def X(; s[a]: rec t. (1: a->b!l().t)) = s[a]{(1: a->b!m().X(; s[a]))} in X(; s[a])");
        assert!(matches!(synth(&GlobalEnv::new(), &wrong), Err(CheckError::DeclMismatch { .. })));
    }

    #[test]
    fn summands_must_agree_on_other_channels() {
        let p = proc("s[a]{(0.5: a->b!x().0 (+) 0.5: a->b!y().s[c]{(1: c->d!z().0)})}");
        assert!(matches!(synth(&GlobalEnv::new(), &p), Err(CheckError::BranchMismatch(_))));
    }

    #[test]
    fn subsumption_is_applied_once() {
        let p = proc("s[a]{(1: tau.s[a]{(1: tau.0)})}");
        let r = check(&GlobalEnv::new(), &p, &ctx("{ s[a] : (1: tau.end) }"));
        assert!(r.verdict, "{:?}", r.diagnostics);
        assert!(r.subsumption.is_some());
        let r = check(&GlobalEnv::new(), &p, &ctx("{ s[a] : (1: a->b!x()) }"));
        assert!(!r.verdict);
        assert!(!r.inconclusive);
    }

    #[test]
    fn ill_formed_declared() {
        let r = check(&GlobalEnv::new(), &Process::Inact, &ctx("{ s[a] : (0.5: a->b!x()) }"));
        assert!(!r.verdict);
        assert!(r.diagnostics[0].message.contains("ill-formed"));
    }

    #[test]
    fn canonical_predicate() {
        let env = GlobalEnv::new();
        let d = ctx("{ s[a] : a<-b?l(), s[b] : (1: b->a!l()) }");
        let p2 = proc("s[a]{a<-b?l().s[b]{(1: b->a!l().0)}}");
        let c = canonical(&env, &p2, &d);
        assert!(!c.holds);
        assert!(c.reason.contains("components"));
        let p1 = proc("new t. (s[a]{a<-b?l().0} | s[b]{(1: b->a!l().0)})");
        assert!(!canonical(&env, &p1, &d).holds);
        let good = proc("s[a]{a<-b?l().0} | s[b]{(1: b->a!l().0)}");
        assert!(canonical(&env, &good, &d).holds);
    }
}
