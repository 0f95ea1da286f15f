//! Seeded generators for property suites: well-formed types and contexts,
//! subtype-preserving mutations, projected choreographies and raw ASTs.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rational::Rational;
use crate::syntax::*;
use crate::check::check;
use crate::ctxlts::CtxLabel;
use crate::reduce::RedexKind;
use crate::typemeta::is_well_formed;

const ROLES: [&str; 4] = ["a", "b", "c", "d"];

fn partitions(k: usize) -> Vec<Vec<Rational>> {
    let r = Rational::new;
    match k {
        1 => vec![vec![r(1, 1)]],
        2 => vec![
            vec![r(1, 2), r(1, 2)],
            vec![r(3, 10), r(7, 10)],
            vec![r(1, 4), r(3, 4)],
            vec![r(1, 3), r(2, 3)],
        ],
        _ => vec![vec![r(1, 5), r(3, 10), r(1, 2)], vec![r(1, 3), r(1, 3), r(1, 3)]],
    }
}

/// A system projected from a random choreography, with its synthesized context.
#[derive(Clone, Debug)]
pub struct System {
    pub process: Process,
    pub roles: Vec<Name>,
}

#[derive(Clone, Debug)]
enum Chor {
    End,
    Com {
        from: Name,
        to: Name,
        branches: Vec<ChorBranch>,
    },
    Tau {
        role: Name,
        split: bool,
        cont: Box<Chor>,
    },
}

#[derive(Clone, Debug)]
struct ChorBranch {
    prob: Rational,
    label: Name,
    payload: Option<Value>,
    binder: Option<Name>,
    test: bool,
    cont: Chor,
}

/// Deterministic generator state.
pub struct Gen {
    rng: ChaCha8Rng,
    fresh: usize,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            fresh: 0,
        }
    }

    fn label(&mut self) -> Name {
        self.fresh += 1;
        format!("l{}", self.fresh)
    }

    fn var_name(&mut self) -> Name {
        self.fresh += 1;
        format!("x{}", self.fresh)
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn pick<T: Clone>(&mut self, xs: &[T]) -> T {
        xs.choose(&mut self.rng).expect("non-empty choice").clone()
    }

    fn base(&mut self) -> Option<BaseType> {
        match self.rng.gen_range(0..3) {
            0 => None,
            1 => Some(BaseType::Nat),
            _ => Some(BaseType::Bool),
        }
    }

    fn probs(&mut self, k: usize) -> Vec<Rational> {
        let ps = partitions(k);
        self.pick(&ps)
    }

    // ----- types

    /// A well-formed closed type for a channel owned by `me`, talking to `peers`.
    pub fn ty(&mut self, me: &[Name], peers: &[Name], depth: usize) -> Ty {
        loop {
            let t = self.ty_at(me, peers, depth, &[], false);
            if is_well_formed(&t) {
                return t;
            }
        }
    }

    fn ty_at(&mut self, me: &[Name], peers: &[Name], depth: usize, vars: &[Name], guarded: bool) -> Ty {
        if guarded && !vars.is_empty() && self.chance(0.2) {
            return SessionType::var(self.pick(vars));
        }
        if depth == 0 || (guarded && self.chance(0.2)) {
            return SessionType::end();
        }
        if depth >= 2 && self.chance(0.15) {
            let t = format!("t{}", vars.len());
            let mut inner = vars.to_vec();
            inner.push(t.clone());
            let body = self.mixed(me, peers, depth, &inner);
            return SessionType::rec(t, body);
        }
        self.mixed(me, peers, depth, vars)
    }

    fn mixed(&mut self, me: &[Name], peers: &[Name], depth: usize, vars: &[Name]) -> Ty {
        let n_in = self.rng.gen_range(0..=2);
        let n_sum = if n_in == 0 { self.rng.gen_range(1..=2) } else { self.rng.gen_range(0..=1) };
        let mut bs = Vec::new();
        for _ in 0..n_in {
            let m = Msg::new(self.pick(peers), self.pick(me), self.label(), self.base());
            bs.push(Branch::Input(m, self.ty_at(me, peers, depth - 1, vars, true)));
        }
        for _ in 0..n_sum {
            let k = self.rng.gen_range(1..=3);
            let ss = self
                .probs(k)
                .into_iter()
                .map(|p| {
                    let head = if self.chance(0.2) {
                        Head::Tau
                    } else {
                        Head::Out(Msg::new(self.pick(me), self.pick(peers), self.label(), self.base()))
                    };
                    Summand::new(p, head, self.ty_at(me, peers, depth - 1, vars, true))
                })
                .collect();
            bs.push(Branch::Sum(ss));
        }
        SessionType::mixed(bs)
    }

    /// A context on session `s` with up to `max_channels` channels.
    pub fn context(&mut self, max_channels: usize, depth: usize) -> LocalContext {
        let n = self.rng.gen_range(1..=max_channels.max(1));
        let mut roles: Vec<Name> = ROLES.iter().map(|r| r.to_string()).collect();
        roles.shuffle(&mut self.rng);
        let mut d = LocalContext::new();
        let mut used = 0;
        for _ in 0..n {
            let width = if self.chance(0.25) { 2 } else { 1 };
            if used + width >= roles.len() {
                break;
            }
            let me: Vec<Name> = roles[used..used + width].to_vec();
            used += width;
            let peers: Vec<Name> = roles.iter().filter(|r| !me.contains(r)).cloned().collect();
            let t = self.ty(&me, &peers, depth);
            d.set(Channel::new("s", me.iter().cloned()), t);
        }
        d
    }

    // ----- mutations

    /// A candidate subtype of `t` built from prefix-justified input
    /// additions, probability splits and dropped sums; no `tau` wrapping.
    pub fn weaken_std(&mut self, t: &Ty) -> Ty {
        self.weaken_wf(t, false)
    }

    /// Like `weaken_std`, additionally wrapping continuations in `tau`.
    pub fn weaken_ty(&mut self, t: &Ty) -> Ty {
        self.weaken_wf(t, true)
    }

    fn weaken_wf(&mut self, t: &Ty, tau: bool) -> Ty {
        for _ in 0..8 {
            let w = self.weaken(t, tau);
            if is_well_formed(&w) {
                return w;
            }
        }
        t.clone()
    }

    fn weaken(&mut self, t: &Ty, tau: bool) -> Ty {
        let out = match &**t {
            SessionType::Mixed(bs) if !bs.is_empty() => {
                let mut bs: Vec<Branch> = bs
                    .iter()
                    .map(|b| match b {
                        Branch::Input(m, c) if self.chance(0.3) => Branch::Input(m.clone(), self.weaken(c, tau)),
                        Branch::Sum(ss) => Branch::Sum(
                            ss.iter()
                                .map(|s| {
                                    if self.chance(0.3) {
                                        Summand::new(s.prob.clone(), s.head.clone(), self.weaken(&s.cont, tau))
                                    } else {
                                        s.clone()
                                    }
                                })
                                .collect(),
                        ),
                        b => b.clone(),
                    })
                    .collect();
                match self.rng.gen_range(0..4) {
                    0 => {
                        let senders: Vec<(Name, Name)> = bs
                            .iter()
                            .filter_map(|b| match b {
                                Branch::Input(m, _) => Some((m.from.clone(), m.to.clone())),
                                _ => None,
                            })
                            .collect();
                        if !senders.is_empty() {
                            let (from, to) = self.pick(&senders);
                            let m = Msg::new(from, to, self.label(), self.base());
                            bs.push(Branch::Input(m, SessionType::end()));
                        }
                    }
                    1 => {
                        let sums: Vec<usize> = (0..bs.len()).filter(|&i| matches!(bs[i], Branch::Sum(_))).collect();
                        if !sums.is_empty() {
                            let i = self.pick(&sums);
                            if let Branch::Sum(ss) = &mut bs[i] {
                                let j = self.rng.gen_range(0..ss.len());
                                let half = &ss[j].prob * &Rational::new(1, 2);
                                let mut twin = ss[j].clone();
                                twin.prob = half.clone();
                                ss[j].prob = half;
                                ss.insert(j + 1, twin);
                            }
                        }
                    }
                    2 => {
                        let sums: Vec<usize> = (0..bs.len()).filter(|&i| matches!(bs[i], Branch::Sum(_))).collect();
                        if sums.len() >= 2 {
                            let i = self.pick(&sums);
                            bs.remove(i);
                        }
                    }
                    _ => {}
                }
                SessionType::mixed(bs)
            }
            SessionType::Rec(x, b) => SessionType::rec(x.clone(), self.weaken(b, tau)),
            _ => t.clone(),
        };
        if tau && self.chance(0.15) && !matches!(&*out, SessionType::Var(_)) {
            SessionType::tau(Rational::one(), out)
        } else {
            out
        }
    }

    /// Applies `weaken_ty` to some bindings of `d`.
    pub fn weaken_context(&mut self, d: &LocalContext) -> LocalContext {
        let mut out = d.clone();
        for (c, t) in d.iter() {
            if self.chance(0.7) {
                let w = self.weaken_ty(t);
                out.set(c.clone(), w);
            }
        }
        out
    }

    // ----- choreographies

    /// A closed system of processes on session `s` projected from a random
    /// choreography; every path performs at most `2 * budget` reductions.
    pub fn system(&mut self, budget: usize) -> System {
        loop {
            let n = self.rng.gen_range(2..=4);
            let roles: Vec<Name> = ROLES[..n].iter().map(|r| r.to_string()).collect();
            let g = self.chor(&roles, budget);
            let mut used = BTreeSet::new();
            chor_roles(&g, &mut used);
            if used.len() < 2 {
                continue;
            }
            let roles: Vec<Name> = used.into_iter().collect();
            let comps = roles.iter().map(|r| project(&g, r)).collect();
            return System {
                process: Process::par_all(comps),
                roles,
            };
        }
    }

    fn chor(&mut self, roles: &[Name], budget: usize) -> Chor {
        if budget == 0 || self.chance(0.1) {
            return Chor::End;
        }
        if self.chance(0.15) {
            let role = self.pick(roles);
            let split = self.chance(0.5);
            return Chor::Tau {
                role,
                split,
                cont: Box::new(self.chor(roles, budget - 1)),
            };
        }
        let mut pair: Vec<Name> = roles.to_vec();
        pair.shuffle(&mut self.rng);
        let (from, to) = (pair[0].clone(), pair[1].clone());
        let rest_budget = budget.saturating_sub(2);
        let rest = self.chor(roles, rest_budget);
        let k = self.rng.gen_range(1..=3);
        let branches = self
            .probs(k)
            .into_iter()
            .map(|prob| {
                let tail = if budget >= 2 && self.chance(0.4) {
                    let (f, t) = if self.chance(0.5) { (&to, &from) } else { (&from, &to) };
                    let br = self.chor_branch(Rational::one(), rest.clone());
                    Chor::Com {
                        from: f.clone(),
                        to: t.clone(),
                        branches: vec![br],
                    }
                } else {
                    rest.clone()
                };
                self.chor_branch(prob, tail)
            })
            .collect();
        Chor::Com { from, to, branches }
    }

    fn chor_branch(&mut self, prob: Rational, cont: Chor) -> ChorBranch {
        let payload = match self.rng.gen_range(0..3) {
            0 => None,
            1 => Some(Value::Nat(self.rng.gen_range(1..=5))),
            _ => Some(Value::Bool(self.chance(0.5))),
        };
        let binder = payload.as_ref().map(|_| self.var_name());
        let test = matches!(payload, Some(Value::Bool(_))) && self.chance(0.5);
        ChorBranch {
            prob,
            label: self.label(),
            payload,
            binder,
            test,
            cont,
        }
    }

    // ----- raw ASTs

    /// A random process exercising every constructor; not necessarily typable.
    pub fn process(&mut self, depth: usize) -> Process {
        let n = self.rng.gen_range(1..=3);
        let parts = (0..n).map(|_| self.unary(depth, &[])).collect();
        par_flat(parts)
    }

    fn unary(&mut self, depth: usize, procs: &[(Name, usize, usize)]) -> Process {
        if depth == 0 {
            return Process::Inact;
        }
        match self.rng.gen_range(0..10) {
            0 => Process::Inact,
            1 => Process::res(self.pick(&["s", "t", "u"]).to_string(), self.unary(depth - 1, procs)),
            2 => Process::Cond(
                self.value(),
                Box::new(self.unary(depth - 1, procs)),
                Box::new(self.unary(depth - 1, procs)),
            ),
            3 => self.def(depth, procs),
            4 if !procs.is_empty() => {
                let (name, np, nc) = self.pick(procs);
                Process::Call {
                    name,
                    args: (0..np).map(|_| self.value()).collect(),
                    chans: (0..nc).map(|_| self.channel()).collect(),
                }
            }
            5 => {
                let n = self.rng.gen_range(2..=3);
                par_flat((0..n).map(|_| self.unary(depth - 1, procs)).collect())
            }
            _ => self.choice(depth, procs),
        }
    }

    fn def(&mut self, depth: usize, procs: &[(Name, usize, usize)]) -> Process {
        let n = self.rng.gen_range(1..=2);
        let mut scope = procs.to_vec();
        let mut sigs = Vec::new();
        for i in 0..n {
            let name = format!("X{}{}", procs.len(), i);
            let np = self.rng.gen_range(0..=2);
            let nc = self.rng.gen_range(1..=2);
            sigs.push((name.clone(), np, nc));
            scope.push((name, np, nc));
        }
        let decls = sigs
            .iter()
            .map(|(name, np, nc)| Decl {
                name: name.clone(),
                params: (0..*np)
                    .map(|i| (format!("y{i}"), if self.chance(0.5) { BaseType::Nat } else { BaseType::Bool }))
                    .collect(),
                chans: (0..*nc)
                    .map(|_| {
                        let c = self.channel();
                        let me: Vec<Name> = c.roles.iter().cloned().collect();
                        let t = self.ty(&me, &["p".to_string(), "q".to_string()], 2);
                        (c, t)
                    })
                    .collect(),
                body: self.unary(depth - 1, &scope),
            })
            .collect();
        Process::Def(decls, Box::new(self.unary(depth - 1, &scope)))
    }

    fn choice(&mut self, depth: usize, procs: &[(Name, usize, usize)]) -> Process {
        let chan = self.channel();
        let n = self.rng.gen_range(1..=3);
        let summands = (0..n)
            .map(|_| {
                if self.chance(0.5) {
                    PSummand::Input {
                        to: self.pick(&ROLES).to_string(),
                        from: self.pick(&ROLES).to_string(),
                        label: self.label(),
                        binder: if self.chance(0.5) { Some(self.var_name()) } else { None },
                        cont: Box::new(self.cont(depth, procs)),
                    }
                } else {
                    let k = self.rng.gen_range(1..=3);
                    PSummand::Out(
                        self.probs(k)
                            .into_iter()
                            .map(|prob| POut {
                                prob,
                                action: if self.chance(0.2) {
                                    PAction::Tau
                                } else {
                                    PAction::Send {
                                        from: self.pick(&ROLES).to_string(),
                                        to: self.pick(&ROLES).to_string(),
                                        label: self.label(),
                                        payload: if self.chance(0.5) { Some(self.value()) } else { None },
                                    }
                                },
                                cont: self.cont(depth, procs),
                            })
                            .collect(),
                    )
                }
            })
            .collect();
        Process::choice(chan, summands)
    }

    fn cont(&mut self, depth: usize, procs: &[(Name, usize, usize)]) -> Process {
        if self.chance(0.15) {
            let n = self.rng.gen_range(2..=3);
            par_flat((0..n).map(|_| self.unary(depth - 1, procs)).collect())
        } else {
            self.unary(depth - 1, procs)
        }
    }

    fn channel(&mut self) -> Channel {
        let s = self.pick(&["s", "t"]);
        if self.chance(0.2) {
            Channel::new(s, ["a", "b"])
        } else {
            Channel::single(s, self.pick(&ROLES))
        }
    }

    fn value(&mut self) -> Value {
        match self.rng.gen_range(0..3) {
            0 => Value::Var(self.pick(&["x", "y0", "z'"]).to_string()),
            1 => Value::Nat(self.rng.gen_range(1..=9)),
            _ => Value::Bool(self.chance(0.5)),
        }
    }
}

// ----- harnesses

/// Matches every first-step reduction `P ->π P'` of a process typed by `d`
/// with a context `Δ'` reached from `d` in at most one `↦` step with the
/// same label and probability such that `P'` is typed by `Δ'`. Steps with
/// equal label and outcome count once with their summed mass on both sides.
/// Returns the number of matched outcomes.
pub fn subject_reduction(env: &GlobalEnv, p: &Process, d: &LocalContext) -> Result<usize, String> {
    let mut targets: Vec<(Option<Name>, LocalContext, Rational)> = Vec::new();
    for t in crate::ctxlts::reductions(d) {
        let key = match &t.label {
            CtxLabel::Com(_, m) => Some(m.label.clone()),
            _ => None,
        };
        match targets.iter_mut().find(|(k, d2, _)| *k == key && *d2 == t.target) {
            Some(e) => e.2 += &t.prob,
            None => targets.push((key, t.target, t.prob)),
        }
    }
    let mut redexes: Vec<(Option<Name>, crate::reduce::Redex)> = Vec::new();
    for r in crate::reduce::enabled(p) {
        let key = match &r.kind {
            RedexKind::ComStep { label, .. } => Some(label.clone()),
            _ => None,
        };
        match redexes.iter_mut().find(|(k, q)| *k == key && q.alt == r.alt && q.result == r.result) {
            Some((_, q)) => q.prob += &r.prob,
            None => redexes.push((key, r)),
        }
    }
    for (key, r) in &redexes {
        let candidates: Vec<&LocalContext> = match &r.kind {
            RedexKind::ComStep { .. } | RedexKind::TauStep(_) => targets
                .iter()
                .filter(|(k, _, pr)| k == key && *pr == r.prob)
                .map(|(_, d2, _)| d2)
                .collect(),
            _ => vec![d],
        };
        if !candidates.iter().any(|d2| check(env, &r.result, d2).verdict) {
            return Err(format!(
                "no matching context for `{}` reaching {}",
                r.kind,
                crate::surface::print_process(&r.result)
            ));
        }
    }
    Ok(redexes.len())
}

/// Exhaustive exploration up to `depth` finds no error and no stuck non-`0` state.
pub fn error_and_deadlock_free(p: &Process, depth: usize) -> Result<(), String> {
    let ex = crate::reduce::explore(p, depth).map_err(|e| e.to_string())?;
    if let Some((i, e)) = ex.errors.first() {
        return Err(format!("error state {i}: {e:?}"));
    }
    for (i, st) in ex.states.iter().enumerate() {
        if ex.is_terminal(i) && *st != Process::Inact {
            return Err(format!("stuck state {}", crate::surface::print_process(st)));
        }
    }
    Ok(())
}

/// Right-nested composition of the flattened components, as the parser builds it.
fn par_flat(ps: Vec<Process>) -> Process {
    Process::par_all(ps.iter().flat_map(|p| p.components()).cloned().collect())
}

fn chor_roles(g: &Chor, out: &mut BTreeSet<Name>) {
    match g {
        Chor::End => {}
        Chor::Com { from, to, branches } => {
            out.insert(from.clone());
            out.insert(to.clone());
            for b in branches {
                chor_roles(&b.cont, out);
            }
        }
        Chor::Tau { role, cont, .. } => {
            out.insert(role.clone());
            chor_roles(cont, out);
        }
    }
}

fn project(g: &Chor, r: &str) -> Process {
    let chan = Channel::single("s", r);
    match g {
        Chor::End => Process::Inact,
        Chor::Tau { role, split, cont } => {
            let next = project(cont, r);
            if role != r {
                return next;
            }
            let outs = if *split {
                vec![Rational::new(1, 2), Rational::new(1, 2)]
            } else {
                vec![Rational::one()]
            };
            Process::choice(
                chan,
                vec![PSummand::Out(
                    outs.into_iter()
                        .map(|prob| POut {
                            prob,
                            action: PAction::Tau,
                            cont: next.clone(),
                        })
                        .collect(),
                )],
            )
        }
        Chor::Com { from, to, branches } if from == r => Process::choice(
            chan,
            vec![PSummand::Out(
                branches
                    .iter()
                    .map(|b| POut {
                        prob: b.prob.clone(),
                        action: PAction::Send {
                            from: from.clone(),
                            to: to.clone(),
                            label: b.label.clone(),
                            payload: b.payload.clone(),
                        },
                        cont: project(&b.cont, r),
                    })
                    .collect(),
            )],
        ),
        Chor::Com { from, to, branches } if to == r => Process::choice(
            chan,
            branches
                .iter()
                .map(|b| {
                    let next = project(&b.cont, r);
                    let cont = match (&b.binder, b.test) {
                        (Some(x), true) => Process::Cond(Value::Var(x.clone()), Box::new(next.clone()), Box::new(next)),
                        _ => next,
                    };
                    PSummand::Input {
                        to: to.clone(),
                        from: from.clone(),
                        label: b.label.clone(),
                        binder: b.binder.clone(),
                        cont: Box::new(cont),
                    }
                })
                .collect(),
        ),
        Chor::Com { branches, .. } => project(&branches[0].cont, r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{parse_process, parse_type, print_process, print_type};

    #[test]
    fn types_are_well_formed() {
        let mut g = Gen::new(7);
        for _ in 0..50 {
            let t = g.ty(&["a".into()], &["b".into(), "c".into()], 4);
            assert!(is_well_formed(&t), "{}", print_type(&t));
        }
    }

    #[test]
    fn printed_asts_parse_back() {
        let mut g = Gen::new(3);
        for _ in 0..100 {
            let t = g.ty(&["a".into()], &["b".into()], 4);
            assert_eq!(parse_type(&print_type(&t)).unwrap(), t, "{}", print_type(&t));
            let p = g.process(4);
            let text = print_process(&p);
            assert_eq!(parse_process(&text).unwrap(), p, "{text}");
        }
    }

    #[test]
    fn systems_are_deterministic() {
        let a = Gen::new(11).system(6).process;
        let b = Gen::new(11).system(6).process;
        assert_eq!(a, b);
    }
}
