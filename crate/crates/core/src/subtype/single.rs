//! Prover for single-channel subtyping.

use std::collections::{BTreeMap, HashSet};

use super::flow::transport;
use super::{Budget, MAX_GOAL_DEPTH, Derivation, Goal, Rule, SubtypeError};
use crate::rational::Rational;
use crate::syntax::{ActiveContext, ActiveType, Branch, Channel, Head, LocalContext, Msg, SessionType, Summand, Ty};
use crate::typemeta::{canonical_context, mixed_from, pre_branch, pre_summands, split_modes};

type D = Derivation<Goal>;
type R = Result<Option<D>, SubtypeError>;

pub(super) fn prove(d_sub: &LocalContext, d_sup: &LocalContext, budget: u64) -> R {
    let mut p = Single {
        budget: Budget::new(budget),
        stack: Vec::new(),
        failed: HashSet::new(),
        cuts: 0,
    };
    match p.split(&canonical_context(d_sub), &canonical_context(d_sup), 0)? {
        None if p.cuts > 0 => Err(SubtypeError::SearchDepthExceeded(MAX_GOAL_DEPTH)),
        r => Ok(r),
    }
}

fn plain(c: &Channel, t: Ty) -> ActiveContext {
    ActiveContext::Plain(LocalContext::singleton(c.clone(), t))
}

fn bare(c: &Channel, h: Head, t: Ty) -> ActiveContext {
    ActiveContext::Active {
        chan: c.clone(),
        view: ActiveType::Bare(h, t),
        rest: LocalContext::new(),
    }
}

fn rhs(c: &Channel, t: Ty) -> LocalContext {
    LocalContext::singleton(c.clone(), t)
}

struct Single {
    budget: Budget,
    stack: Vec<(Goal, usize)>,
    failed: HashSet<Goal>,
    /// Goals abandoned at the depth bound.
    cuts: usize,
}

impl Single {
    /// `SubC-Split` over any role-compatible pairing of bindings.
    fn split(&mut self, sub: &LocalContext, sup: &LocalContext, depth: usize) -> R {
        let g = Goal::new(ActiveContext::Plain(sub.clone()), Rational::one(), sup.clone());
        if sub.len() != sup.len() {
            return Ok(None);
        }
        if sub.is_empty() {
            return Ok(Some(D::leaf(Rule::SubCEmpty, g)));
        }
        if sub.len() == 1 {
            let (c1, _) = sub.iter().next().expect("one binding");
            let (c2, _) = sup.iter().next().expect("one binding");
            if c1.session != c2.session || !c1.roles.is_subset(&c2.roles) {
                return Ok(None);
            }
            return self.goal(g, depth);
        }
        let (c, t) = sup.iter().last().map(|(c, t)| (c.clone(), t.clone())).expect("nonempty");
        let rest_sup: LocalContext = sup.iter().filter(|(k, _)| **k != c).map(|(k, v)| (k.clone(), v.clone())).collect();
        for (c1, t1) in sub.iter() {
            if c1.session != c.session || !c1.roles.is_subset(&c.roles) {
                continue;
            }
            let rest_sub: LocalContext = sub.iter().filter(|(k, _)| *k != c1).map(|(k, v)| (k.clone(), v.clone())).collect();
            let Some(left) = self.split(&rest_sub, &rest_sup, depth + 1)? else { continue };
            let one = Goal::new(plain(c1, t1.clone()), Rational::one(), rhs(&c, t.clone()));
            let Some(right) = self.goal(one, depth + 1)? else { continue };
            return Ok(Some(D::node(Rule::SubCSplit, g, vec![left, right])));
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
            ActiveContext::Plain(d) => {
                if d.is_empty() && g.rhs.is_empty() {
                    return Ok(g.prob.is_one().then(|| D::leaf(Rule::SubCEmpty, g.clone())));
                }
                if d.len() != 1 || g.rhs.len() != 1 {
                    return Ok(None);
                }
                let (c1, t1) = d.iter().next().expect("one binding");
                let (c2, t2) = g.rhs.iter().next().expect("one binding");
                self.sigma(g, c1, t1, c2, t2, depth)
            }
            ActiveContext::Active {
                chan,
                view: ActiveType::Bare(h, t1),
                rest,
            } if rest.is_empty() => self.action(g, chan, h, t1, depth),
            ActiveContext::Active { .. } => Ok(None),
        }
    }

    /// `SubC-Σ`: splits both sides into inputs and sums.
    fn sigma(&mut self, g: &Goal, c1: &Channel, t1: &Ty, c2: &Channel, t2: &Ty, depth: usize) -> R {
        let (ins_a, sums_a) = split_modes(t1);
        let (ins_b, sums_b) = split_modes(t2);
        let pi = &g.prob;
        let part = |ins: Vec<(Msg, Ty)>, sums: Vec<Vec<Summand>>| mixed_from(ins, sums);
        let g_in = Goal::new(plain(c1, part(ins_a.clone(), vec![])), pi.clone(), rhs(c2, part(ins_b.clone(), vec![])));
        let g_out = Goal::new(plain(c1, part(vec![], sums_a.clone())), pi.clone(), rhs(c2, part(vec![], sums_b.clone())));
        let Some(din) = self.inputs(g_in, c1, &ins_a, c2, &ins_b, depth + 1)? else { return Ok(None) };
        let Some(dout) = self.outputs(g_out, c1, &sums_a, c2, &sums_b, depth + 1)? else { return Ok(None) };
        Ok(Some(D::node(Rule::SubCSigma, g.clone(), vec![din, dout])))
    }

    fn inputs(&mut self, g: Goal, c1: &Channel, a: &[(Msg, Ty)], c2: &Channel, b: &[(Msg, Ty)], depth: usize) -> R {
        if a.is_empty() || b.is_empty() {
            let ok = a.is_empty() && b.is_empty() && g.prob.is_one();
            return Ok(ok.then(|| D::leaf(Rule::SubCEmpty, g)));
        }
        if !g.prob.is_one() {
            return Ok(None);
        }
        let mut used = vec![false; a.len()];
        let mut children = Vec::new();
        for (mb, tb) in b {
            let mut found = None;
            for (i, (ma, ta)) in a.iter().enumerate() {
                if used[i] || ma != mb {
                    continue;
                }
                if let Some(d) = self.input(c1, ma, ta, c2, tb, depth + 1)? {
                    found = Some((i, d));
                    break;
                }
            }
            let Some((i, d)) = found else { return Ok(None) };
            used[i] = true;
            children.push(d);
        }
        let kept: Vec<_> = a
            .iter()
            .zip(&used)
            .filter(|(_, u)| **u)
            .map(|((m, t), _)| pre_branch(&Branch::Input(m.clone(), t.clone())))
            .collect();
        let justified = a
            .iter()
            .zip(&used)
            .filter(|(_, u)| !**u)
            .all(|((m, t), _)| kept.contains(&pre_branch(&Branch::Input(m.clone(), t.clone()))));
        Ok(justified.then(|| D::node(Rule::SubCSigmaIn, g, children)))
    }

    /// `SubC-?` for one matched input pair.
    fn input(&mut self, c1: &Channel, m: &Msg, ta: &Ty, c2: &Channel, tb: &Ty, depth: usize) -> R {
        let g = Goal::new(
            plain(c1, SessionType::input(m.clone(), ta.clone())),
            Rational::one(),
            rhs(c2, SessionType::input(m.clone(), tb.clone())),
        );
        if !c1.roles.is_subset(&c2.roles) || !c2.has_role(&m.to) {
            return Ok(None);
        }
        let next = Goal::new(plain(c1, ta.clone()), Rational::one(), rhs(c2, tb.clone()));
        let Some(d) = self.goal(next, depth + 1)? else { return Ok(None) };
        Ok(Some(D::node(Rule::SubCIn, g, vec![d])))
    }

    fn outputs(&mut self, g: Goal, c1: &Channel, a: &[Vec<Summand>], c2: &Channel, b: &[Vec<Summand>], depth: usize) -> R {
        if a.is_empty() || b.is_empty() {
            let ok = a.is_empty() && b.is_empty() && g.prob.is_one();
            return Ok(ok.then(|| D::leaf(Rule::SubCEmpty, g)));
        }
        let mut cache: BTreeMap<(usize, usize), Option<D>> = BTreeMap::new();
        let mut assign = Vec::new();
        let Some(assign) = self.assign(&g.prob, c1, a, c2, b, &mut assign, &mut cache, depth + 1)? else {
            return Ok(None);
        };
        let children = assign
            .iter()
            .enumerate()
            .map(|(i, j)| cache[&(i, *j)].clone().expect("assigned pairs are proved"))
            .collect();
        Ok(Some(D::node(Rule::SubCSigmaOut, g, children)))
    }

    #[allow(clippy::too_many_arguments)]
    fn assign(
        &mut self,
        pi: &Rational,
        c1: &Channel,
        a: &[Vec<Summand>],
        c2: &Channel,
        b: &[Vec<Summand>],
        assign: &mut Vec<usize>,
        cache: &mut BTreeMap<(usize, usize), Option<D>>,
        depth: usize,
    ) -> Result<Option<Vec<usize>>, SubtypeError> {
        let i = assign.len();
        if i == a.len() {
            let ok = (0..b.len())
                .filter(|j| !assign.contains(j))
                .all(|j| a.iter().any(|sa| pre_summands(sa) == pre_summands(&b[j])));
            return Ok(ok.then(|| assign.clone()));
        }
        for j in 0..b.len() {
            if assign.contains(&j) {
                continue;
            }
            if !cache.contains_key(&(i, j)) {
                let d = self.oplus(pi, c1, &a[i], c2, &b[j], depth)?;
                cache.insert((i, j), d);
            }
            if cache[&(i, j)].is_none() {
                continue;
            }
            assign.push(j);
            if let Some(done) = self.assign(pi, c1, a, c2, b, assign, cache, depth)? {
                return Ok(Some(done));
            }
            assign.pop();
        }
        Ok(None)
    }

    /// `SubC-⊕` with summands split along a transport flow.
    fn oplus(&mut self, pi: &Rational, c1: &Channel, a: &[Summand], c2: &Channel, b: &[Summand], depth: usize) -> R {
        let g = Goal::new(plain(c1, SessionType::sum(a.to_vec())), pi.clone(), rhs(c2, SessionType::sum(b.to_vec())));
        let total: Rational = b.iter().map(|s| &s.prob).sum();
        if &total != pi {
            return Ok(None);
        }
        let mut proofs: BTreeMap<(usize, usize), D> = BTreeMap::new();
        for (k, sa) in a.iter().enumerate() {
            for (l, sb) in b.iter().enumerate() {
                if sa.head != sb.head {
                    continue;
                }
                let next = Goal::new(plain(c1, sa.cont.clone()), Rational::one(), rhs(c2, sb.cont.clone()));
                if !self.action_ok(c1, &sa.head, c2) {
                    continue;
                }
                if let Some(d) = self.goal(next, depth + 2)? {
                    proofs.insert((k, l), d);
                }
            }
        }
        let supply: Vec<Rational> = a.iter().map(|s| &s.prob * pi).collect();
        let demand: Vec<Rational> = b.iter().map(|s| s.prob.clone()).collect();
        let allowed: Vec<_> = proofs.keys().copied().collect();
        let Some(flow) = transport(&supply, &demand, &allowed) else { return Ok(None) };
        let mut children = Vec::new();
        for (k, l, amount) in flow {
            let (sa, sb) = (&a[k], &b[l]);
            let child = Goal::new(
                bare(c1, sa.head.clone(), sa.cont.clone()),
                amount.clone(),
                rhs(c2, SessionType::sum(vec![Summand::new(amount, sb.head.clone(), sb.cont.clone())])),
            );
            let rule = match sa.head {
                Head::Out(_) => Rule::SubCOut,
                Head::Tau => Rule::SubCTau,
            };
            children.push(D::node(rule, child, vec![proofs[&(k, l)].clone()]));
        }
        Ok(Some(D::node(Rule::SubCOplus, g, children)))
    }

    fn action_ok(&self, c1: &Channel, h: &Head, c2: &Channel) -> bool {
        match h {
            Head::Out(m) => c1.roles.is_subset(&c2.roles) && c2.has_role(&m.from),
            Head::Tau => true,
        }
    }

    /// `SubC-!` or `SubC-τ` reached through a coinductive goal lookup.
    fn action(&mut self, g: &Goal, c1: &Channel, h: &Head, t1: &Ty, depth: usize) -> R {
        let Some((c2, t2)) = g.rhs.iter().next() else { return Ok(None) };
        let [Branch::Sum(ss)] = t2.branches() else { return Ok(None) };
        let [s] = ss.as_slice() else { return Ok(None) };
        if s.head != *h || s.prob != g.prob || !self.action_ok(c1, h, c2) {
            return Ok(None);
        }
        let next = Goal::new(plain(c1, t1.clone()), Rational::one(), rhs(c2, s.cont.clone()));
        let Some(d) = self.goal(next, depth + 1)? else { return Ok(None) };
        let rule = match h {
            Head::Out(_) => Rule::SubCOut,
            Head::Tau => Rule::SubCTau,
        };
        Ok(Some(D::node(rule, g.clone(), vec![d])))
    }
}
