//! Prover for multi-channel subtyping.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{Budget, MAX_GOAL_DEPTH, Derivation, Goal, Rule, SubtypeError};
use crate::ctxlts::{offered_inputs, pending};
use crate::rational::Rational;
use crate::syntax::{ActiveContext, ActiveType, Branch, Channel, Head, LocalContext, Msg, SessionType, Summand, Ty};
use crate::typemeta::{canonical_context, mixed_from, pre_branch, pre_summands, split_modes};

type D = Derivation<Goal>;
type R = Result<Option<D>, SubtypeError>;

pub(super) fn prove(d_sub: &LocalContext, d_sup: &LocalContext, budget: u64) -> R {
    let mut p = Multi {
        budget: Budget::new(budget),
        stack: Vec::new(),
        failed: HashSet::new(),
        cuts: 0,
    };
    match p.top(&canonical_context(d_sub), &canonical_context(d_sup), 0)? {
        None if p.cuts > 0 => Err(SubtypeError::SearchDepthExceeded(MAX_GOAL_DEPTH)),
        r => Ok(r),
    }
}

fn act(chan: &Channel, t: Ty, rest: &LocalContext) -> ActiveContext {
    ActiveContext::Active {
        chan: chan.clone(),
        view: ActiveType::Type(t),
        rest: rest.clone(),
    }
}

fn with(rest: &LocalContext, c: &Channel, t: &Ty) -> LocalContext {
    let mut d = rest.clone();
    d.set(c.clone(), t.clone());
    d
}

fn one(c: &Channel, t: Ty) -> LocalContext {
    LocalContext::singleton(c.clone(), t)
}

fn single_rhs(g: &Goal) -> Option<(&Channel, &Ty)> {
    match g.rhs.len() {
        1 => g.rhs.iter().next(),
        _ => None,
    }
}

/// The summand of a one-summand sum type.
pub(super) fn lone_summand(t: &Ty) -> Option<&Summand> {
    match t.branches() {
        [Branch::Sum(ss)] if ss.len() == 1 => ss.first(),
        _ => None,
    }
}

/// `S-∅` when the active context is pending and the supertype empty.
fn empty_leaf(g: Goal) -> Option<D> {
    (g.rhs.is_empty() && pending(&g.lhs) == Ok(true)).then(|| D::leaf(Rule::SEmpty, g))
}

/// Allocation state of one subtype summand in `S-⊕`.
#[derive(Clone)]
enum Slot {
    Free,
    Piece(usize),
    Center(Vec<usize>, Rational),
}

struct Multi {
    budget: Budget,
    stack: Vec<(Goal, usize)>,
    failed: HashSet<Goal>,
    /// Goals abandoned at the depth bound.
    cuts: usize,
}

impl Multi {
    fn top(&mut self, sub: &LocalContext, sup: &LocalContext, depth: usize) -> R {
        match sup.len() {
            0 => {
                let g = Goal::new(ActiveContext::Plain(sub.clone()), Rational::one(), LocalContext::new());
                Ok(sub.is_empty().then(|| D::leaf(Rule::SEmpty1, g)))
            }
            1 => self.goal(Goal::new(ActiveContext::Plain(sub.clone()), Rational::one(), sup.clone()), depth),
            _ => self.split(sub, sup, depth),
        }
    }

    /// `S-Split` peeling off the last supertype binding.
    fn split(&mut self, sub: &LocalContext, sup: &LocalContext, depth: usize) -> R {
        let g = Goal::new(ActiveContext::Plain(sub.clone()), Rational::one(), sup.clone());
        let (c, t) = sup.iter().last().map(|(c, t)| (c.clone(), t.clone())).expect("two bindings");
        let rest_sup: LocalContext = sup.iter().filter(|(k, _)| **k != c).map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut forced = LocalContext::new();
        let mut others = LocalContext::new();
        let mut free = Vec::new();
        for (c1, t1) in sub.iter() {
            let targets: Vec<&Channel> = sup
                .channels()
                .filter(|k| k.session == c1.session && c1.roles.is_subset(&k.roles))
                .collect();
            match targets.as_slice() {
                [k] if **k == c => forced.set(c1.clone(), t1.clone()),
                [_] => others.set(c1.clone(), t1.clone()),
                _ if !sup.channels().any(|k| k.session == c1.session) => return Ok(None),
                _ if c.session == c1.session => free.push((c1.clone(), t1.clone())),
                _ => others.set(c1.clone(), t1.clone()),
            }
        }
        if free.len() > 16 {
            return Ok(None);
        }
        for mask in 0u32..(1 << free.len()) {
            let mut group = forced.clone();
            let mut rest = others.clone();
            for (k, (c1, t1)) in free.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    group.set(c1.clone(), t1.clone());
                } else {
                    rest.set(c1.clone(), t1.clone());
                }
            }
            let Some(left) = self.top(&rest, &rest_sup, depth + 1)? else { continue };
            let right = Goal::new(ActiveContext::Plain(group), Rational::one(), one(&c, t.clone()));
            let Some(right) = self.goal(right, depth + 1)? else { continue };
            return Ok(Some(D::node(Rule::SSplit, g, vec![left, right])));
        }
        Ok(None)
    }

    fn goal(&mut self, g: Goal, depth: usize) -> R {
        self.budget.tick()?;
        if depth > MAX_GOAL_DEPTH {
            self.cuts += 1;
            return Ok(None);
        }
        if let Some((_, at)) = self.stack.iter().find(|(a, _)| *a == g) {
            let mut d = D::leaf(Rule::Coinduction, g);
            d.backedge = Some(depth - at);
            return Ok(Some(d));
        }
        if self.failed.contains(&g) {
            return Ok(None);
        }
        let cuts = self.cuts;
        self.stack.push((g.clone(), depth));
        let r = self.rules(&g, depth);
        self.stack.pop();
        let r = r?;
        if r.is_none() && self.cuts == cuts {
            self.failed.insert(g);
        }
        Ok(r)
    }

    fn rules(&mut self, g: &Goal, depth: usize) -> R {
        match &g.lhs {
            ActiveContext::Plain(d) => self.plain(g, d, depth),
            ActiveContext::Active {
                chan,
                view: ActiveType::Type(t),
                rest,
            } => self.active(g, chan, t, rest, depth),
            ActiveContext::Active {
                chan,
                view: ActiveType::Bare(h, t),
                rest,
            } => self.bare(g, chan, h, t, rest, depth),
        }
    }

    /// `S-τ-R`: the supertype is a single internal action at the index.
    fn tau_right(&mut self, g: &Goal, depth: usize) -> R {
        let Some((c, t)) = single_rhs(g) else { return Ok(None) };
        let Some(s) = lone_summand(t) else { return Ok(None) };
        if s.head != Head::Tau || s.prob != g.prob {
            return Ok(None);
        }
        let next = Goal::new(g.lhs.clone(), Rational::one(), one(c, s.cont.clone()));
        Ok(self.goal(next, depth + 1)?.map(|d| D::node(Rule::STauR, g.clone(), vec![d])))
    }

    fn plain(&mut self, g: &Goal, d: &LocalContext, depth: usize) -> R {
        let Some((c, t)) = single_rhs(g) else {
            let ok = g.rhs.is_empty() && d.is_empty() && g.prob.is_one();
            return Ok(ok.then(|| D::leaf(Rule::SEmpty1, g.clone())));
        };
        if !d.is_empty() && d.channels().all(|k| k.session == c.session) {
            if let Some(r) = self.sigma1(g, d, c, t, depth)? {
                return Ok(Some(r));
            }
        }
        self.tau_right(g, depth)
    }

    /// `S-Σ-1`: distributes the supertype branches over the subtype channels.
    fn sigma1(&mut self, g: &Goal, d: &LocalContext, c: &Channel, t: &Ty, depth: usize) -> R {
        let chans: Vec<(Channel, Ty)> = d.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let branches = t.branches().to_vec();
        let mut cands: Vec<Vec<usize>> = Vec::new();
        for b in &branches {
            let ks: Vec<usize> = match b {
                Branch::Input(m, _) => (0..chans.len())
                    .filter(|&k| offered_inputs(&chans[k].1).iter().any(|(mi, _)| mi == m))
                    .collect(),
                Branch::Sum(_) => (0..chans.len()).collect(),
            };
            if ks.is_empty() {
                return Ok(None);
            }
            cands.push(ks);
        }
        let mut cache: HashMap<(usize, Vec<usize>), Option<D>> = HashMap::new();
        let mut assign = Vec::new();
        let found = self.distribute(g, &chans, c, &branches, &cands, &mut assign, &mut cache, depth + 1)?;
        Ok(found.map(|children| D::node(Rule::SSigma1, g.clone(), children)))
    }

    #[allow(clippy::too_many_arguments)]
    fn distribute(
        &mut self,
        g: &Goal,
        chans: &[(Channel, Ty)],
        c: &Channel,
        branches: &[Branch],
        cands: &[Vec<usize>],
        assign: &mut Vec<usize>,
        cache: &mut HashMap<(usize, Vec<usize>), Option<D>>,
        depth: usize,
    ) -> Result<Option<Vec<D>>, SubtypeError> {
        let j = assign.len();
        if j < branches.len() {
            for &k in &cands[j] {
                assign.push(k);
                if let Some(done) = self.distribute(g, chans, c, branches, cands, assign, cache, depth)? {
                    return Ok(Some(done));
                }
                assign.pop();
            }
            return Ok(None);
        }
        let mut children = Vec::new();
        for (k, (ck, tk)) in chans.iter().enumerate() {
            let group: Vec<usize> = (0..branches.len()).filter(|&j| assign[j] == k).collect();
            let key = (k, group.clone());
            if !cache.contains_key(&key) {
                let mut rest = LocalContext::new();
                for (o, to) in chans {
                    if o != ck {
                        rest.set(o.clone(), to.clone());
                    }
                }
                let bs: Vec<Branch> = group.iter().map(|&j| branches[j].clone()).collect();
                let child = Goal::new(act(ck, tk.clone(), &rest), g.prob.clone(), one(c, SessionType::mixed(bs)));
                let r = self.goal(child, depth)?;
                cache.insert(key.clone(), r);
            }
            match &cache[&key] {
                Some(dk) => children.push(dk.clone()),
                None => return Ok(None),
            }
        }
        Ok(Some(children))
    }

    fn active(&mut self, g: &Goal, chan: &Channel, t: &Ty, rest: &LocalContext, depth: usize) -> R {
        let Some((c2, t2)) = single_rhs(g) else {
            return Ok(empty_leaf(g.clone()));
        };
        let (ins_a, sums_a) = split_modes(t);
        let (ins_b, sums_b) = split_modes(t2);
        let pi = &g.prob;
        let g_in = Goal::new(
            act(chan, mixed_from(ins_a.clone(), vec![]), rest),
            pi.clone(),
            one(c2, mixed_from(ins_b.clone(), vec![])),
        );
        let g_out = Goal::new(
            act(chan, mixed_from(vec![], sums_a.clone()), rest),
            pi.clone(),
            one(c2, mixed_from(vec![], sums_b.clone())),
        );
        if let Some(din) = self.inputs(g_in, chan, rest, &ins_a, c2, &ins_b, depth + 1)? {
            if let Some(dout) = self.outputs(g_out, chan, rest, &sums_a, c2, &sums_b, depth + 1)? {
                return Ok(Some(D::node(Rule::SSigma2, g.clone(), vec![din, dout])));
            }
        }
        self.tau_right(g, depth)
    }

    /// `S-Σ-?`.
    #[allow(clippy::too_many_arguments)]
    fn inputs(
        &mut self,
        g: Goal,
        chan: &Channel,
        rest: &LocalContext,
        a: &[(Msg, Ty)],
        c2: &Channel,
        b: &[(Msg, Ty)],
        depth: usize,
    ) -> R {
        if b.is_empty() {
            return Ok(empty_leaf(g));
        }
        let mut kids: BTreeMap<usize, D> = BTreeMap::new();
        for (mb, tb) in b {
            let mut found = false;
            for (i, (ma, ta)) in a.iter().enumerate() {
                if kids.contains_key(&i) || ma != mb {
                    continue;
                }
                if let Some(d) = self.input(&g.prob, chan, rest, ma, ta, c2, tb, depth + 1)? {
                    kids.insert(i, d);
                    found = true;
                    break;
                }
            }
            if !found {
                return Ok(None);
            }
        }
        for (i, (ma, ta)) in a.iter().enumerate() {
            if kids.contains_key(&i) {
                continue;
            }
            let lone = Goal::new(act(chan, SessionType::input(ma.clone(), ta.clone()), rest), g.prob.clone(), LocalContext::new());
            if let Some(leaf) = empty_leaf(lone) {
                kids.insert(i, leaf);
            }
        }
        let kept: Vec<_> = kids.keys().map(|&i| pre_branch(&Branch::Input(a[i].0.clone(), a[i].1.clone()))).collect();
        let justified = (0..a.len())
            .filter(|i| !kids.contains_key(i))
            .all(|i| kept.contains(&pre_branch(&Branch::Input(a[i].0.clone(), a[i].1.clone()))));
        Ok(justified.then(|| D::node(Rule::SSigmaIn, g, kids.into_values().collect())))
    }

    /// `S-?`.
    #[allow(clippy::too_many_arguments)]
    fn input(
        &mut self,
        pi: &Rational,
        chan: &Channel,
        rest: &LocalContext,
        m: &Msg,
        ta: &Ty,
        c2: &Channel,
        tb: &Ty,
        depth: usize,
    ) -> R {
        let g = Goal::new(
            act(chan, SessionType::input(m.clone(), ta.clone()), rest),
            pi.clone(),
            one(c2, SessionType::input(m.clone(), tb.clone())),
        );
        let ok = pi.is_one()
            && chan.roles.is_subset(&c2.roles)
            && c2.has_role(&m.to)
            && !rest.has_role(&chan.session, &m.from);
        if !ok {
            return Ok(None);
        }
        let next = Goal::new(ActiveContext::Plain(with(rest, chan, ta)), Rational::one(), one(c2, tb.clone()));
        Ok(self.goal(next, depth + 1)?.map(|d| D::node(Rule::SIn, g, vec![d])))
    }

    /// `S-Σ-!`.
    #[allow(clippy::too_many_arguments)]
    fn outputs(
        &mut self,
        g: Goal,
        chan: &Channel,
        rest: &LocalContext,
        a: &[Vec<Summand>],
        c2: &Channel,
        b: &[Vec<Summand>],
        depth: usize,
    ) -> R {
        if b.is_empty() {
            return Ok(empty_leaf(g));
        }
        let mut cache: HashMap<(usize, usize), Option<D>> = HashMap::new();
        let mut chosen: Vec<D> = Vec::new();
        let mut used: Vec<usize> = Vec::new();
        let found = self.assign(&g.prob, chan, rest, a, c2, b, &mut chosen, &mut used, &mut cache, depth + 1)?;
        Ok(found.then(|| D::node(Rule::SSigmaOut, g, chosen)))
    }

    #[allow(clippy::too_many_arguments)]
    fn assign(
        &mut self,
        pi: &Rational,
        chan: &Channel,
        rest: &LocalContext,
        a: &[Vec<Summand>],
        c2: &Channel,
        b: &[Vec<Summand>],
        chosen: &mut Vec<D>,
        used: &mut Vec<usize>,
        cache: &mut HashMap<(usize, usize), Option<D>>,
        depth: usize,
    ) -> Result<bool, SubtypeError> {
        let i = chosen.len();
        if i == a.len() {
            return Ok((0..b.len())
                .filter(|j| !used.contains(j))
                .all(|j| a.iter().any(|sa| pre_summands(sa) == pre_summands(&b[j]))));
        }
        for j in 0..b.len() {
            if used.contains(&j) {
                continue;
            }
            if !cache.contains_key(&(i, j)) {
                let d = self.oplus(pi, chan, rest, &a[i], c2, &b[j], depth)?;
                cache.insert((i, j), d);
            }
            let Some(d) = cache[&(i, j)].clone() else { continue };
            chosen.push(d);
            used.push(j);
            if self.assign(pi, chan, rest, a, c2, b, chosen, used, cache, depth)? {
                return Ok(true);
            }
            chosen.pop();
            used.pop();
        }
        let lone = Goal::new(act(chan, SessionType::sum(a[i].clone()), rest), pi.clone(), LocalContext::new());
        if let Some(leaf) = empty_leaf(lone) {
            chosen.push(leaf);
            if self.assign(pi, chan, rest, a, c2, b, chosen, used, cache, depth)? {
                return Ok(true);
            }
            chosen.pop();
        }
        Ok(false)
    }

    /// `S-⊕` over star-shaped allocations of supertype mass.
    #[allow(clippy::too_many_arguments)]
    fn oplus(
        &mut self,
        pi: &Rational,
        chan: &Channel,
        rest: &LocalContext,
        a: &[Summand],
        c2: &Channel,
        b: &[Summand],
        depth: usize,
    ) -> R {
        let g = Goal::new(act(chan, SessionType::sum(a.to_vec()), rest), pi.clone(), one(c2, SessionType::sum(b.to_vec())));
        let total: Rational = b.iter().map(|s| &s.prob).sum();
        if &total != pi {
            return Ok(None);
        }
        let mass: Vec<Rational> = a.iter().map(|s| &s.prob * pi).collect();
        let mut slots = vec![Slot::Free; a.len()];
        let mut local: HashMap<Goal, Option<D>> = HashMap::new();
        let ctx = Star { chan, rest, a, c2, b, mass: &mass };
        let found = self.stars(&ctx, 0, &mut slots, &mut local, depth + 1)?;
        Ok(found.map(|children| D::node(Rule::SOplus, g, children)))
    }

    fn stars(
        &mut self,
        s: &Star<'_>,
        j: usize,
        slots: &mut Vec<Slot>,
        local: &mut HashMap<Goal, Option<D>>,
        depth: usize,
    ) -> Result<Option<Vec<D>>, SubtypeError> {
        if j == s.b.len() {
            return self.star_leaf(s, slots, local, depth);
        }
        let free: Vec<usize> = (0..slots.len()).filter(|&i| matches!(slots[i], Slot::Free)).collect();
        if free.len() <= 16 {
            let mut subsets: Vec<Vec<usize>> = (1u32..(1 << free.len()))
                .map(|mask| (0..free.len()).filter(|k| mask & (1 << k) != 0).map(|k| free[k]).collect::<Vec<_>>())
                .filter(|set: &Vec<usize>| set.iter().map(|&i| &s.mass[i]).sum::<Rational>() == s.b[j].prob)
                .collect();
            subsets.sort_by_key(|set| set.len());
            for set in subsets {
                for &i in &set {
                    slots[i] = Slot::Piece(j);
                }
                if let Some(done) = self.stars(s, j + 1, slots, local, depth)? {
                    return Ok(Some(done));
                }
                for &i in &set {
                    slots[i] = Slot::Free;
                }
            }
        }
        for i in 0..slots.len() {
            let saved = slots[i].clone();
            let next = match &saved {
                Slot::Center(owned, sum) => {
                    let sum = sum + &s.b[j].prob;
                    if sum > s.mass[i] {
                        continue;
                    }
                    let mut owned = owned.clone();
                    owned.push(j);
                    Slot::Center(owned, sum)
                }
                Slot::Free if s.b[j].prob < s.mass[i] => Slot::Center(vec![j], s.b[j].prob.clone()),
                _ => continue,
            };
            slots[i] = next;
            if let Some(done) = self.stars(s, j + 1, slots, local, depth)? {
                return Ok(Some(done));
            }
            slots[i] = saved;
        }
        Ok(None)
    }

    fn star_leaf(
        &mut self,
        s: &Star<'_>,
        slots: &[Slot],
        local: &mut HashMap<Goal, Option<D>>,
        depth: usize,
    ) -> Result<Option<Vec<D>>, SubtypeError> {
        let mut children = Vec::new();
        for (i, slot) in slots.iter().enumerate() {
            let pieces: Vec<Summand> = match slot {
                Slot::Free => vec![],
                Slot::Piece(j) => vec![Summand::new(s.mass[i].clone(), s.b[*j].head.clone(), s.b[*j].cont.clone())],
                Slot::Center(owned, sum) => {
                    if *sum != s.mass[i] {
                        return Ok(None);
                    }
                    owned.iter().map(|&j| s.b[j].clone()).collect()
                }
            };
            let sup = if pieces.is_empty() {
                LocalContext::new()
            } else {
                one(s.c2, SessionType::sum(pieces))
            };
            let lhs = ActiveContext::Active {
                chan: s.chan.clone(),
                view: ActiveType::Bare(s.a[i].head.clone(), s.a[i].cont.clone()),
                rest: s.rest.clone(),
            };
            let child = Goal::new(lhs, s.mass[i].clone(), sup);
            if !local.contains_key(&child) {
                let r = self.goal(child.clone(), depth)?;
                local.insert(child.clone(), r);
            }
            match &local[&child] {
                Some(d) => children.push(d.clone()),
                None => return Ok(None),
            }
        }
        Ok(Some(children))
    }

    #[allow(clippy::too_many_arguments)]
    fn bare(&mut self, g: &Goal, chan: &Channel, h: &Head, t: &Ty, rest: &LocalContext, depth: usize) -> R {
        let pi = &g.prob;
        if let Head::Out(m) = h {
            if chan.has_role(&m.from) {
                for (c2, t2) in rest.iter() {
                    if c2.session != chan.session || !c2.has_role(&m.to) {
                        continue;
                    }
                    for (mi, ti) in offered_inputs(t2) {
                        if mi != *m {
                            continue;
                        }
                        let next = Goal::new(ActiveContext::Plain(with(&with(rest, c2, &ti), chan, t)), pi.clone(), g.rhs.clone());
                        if let Some(d) = self.goal(next, depth + 1)? {
                            return Ok(Some(D::node(Rule::SLink, g.clone(), vec![d])));
                        }
                    }
                }
            }
        }
        if *h == Head::Tau {
            if let Some(d) = self.tau_right(g, depth)? {
                return Ok(Some(d));
            }
            let next = Goal::new(ActiveContext::Plain(with(rest, chan, t)), pi.clone(), g.rhs.clone());
            if let Some(d) = self.goal(next, depth + 1)? {
                return Ok(Some(D::node(Rule::STauL, g.clone(), vec![d])));
            }
        }
        if let (Head::Out(m), Some((c2, t2))) = (h, single_rhs(g)) {
            if let Some(s) = lone_summand(t2) {
                let ok = s.head == *h
                    && s.prob == *pi
                    && chan.roles.is_subset(&c2.roles)
                    && c2.has_role(&m.from)
                    && !rest.has_role(&chan.session, &m.to);
                if ok {
                    let next = Goal::new(ActiveContext::Plain(with(rest, chan, t)), Rational::one(), one(c2, s.cont.clone()));
                    if let Some(d) = self.goal(next, depth + 1)? {
                        return Ok(Some(D::node(Rule::SOut, g.clone(), vec![d])));
                    }
                }
            }
        }
        if let Some(d) = self.tau_right(g, depth)? {
            return Ok(Some(d));
        }
        Ok(empty_leaf(g.clone()))
    }
}

struct Star<'a> {
    chan: &'a Channel,
    rest: &'a LocalContext,
    a: &'a [Summand],
    c2: &'a Channel,
    b: &'a [Summand],
    mass: &'a [Rational],
}

