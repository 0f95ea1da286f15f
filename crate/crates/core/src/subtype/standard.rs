//! Prover for standard subtyping on session types.

use std::collections::{BTreeMap, HashSet};

use super::flow::transport;
use super::{Budget, Derivation, FlowEdge, Rule, StdGoal, SubtypeError, SumFlow};
use crate::syntax::{is_end, Msg, Summand, Ty};
use crate::typemeta::{mixed_from, pre_summands, split_modes, state_type};

type D = Derivation<StdGoal>;
type R = Result<Option<D>, SubtypeError>;

pub(super) fn prove(sub: &Ty, sup: &Ty, budget: u64) -> R {
    Std {
        budget: Budget::new(budget),
        stack: Vec::new(),
        failed: HashSet::new(),
    }
    .goal(sub, sup, 0)
}

struct Std {
    budget: Budget,
    stack: Vec<(StdGoal, usize)>,
    failed: HashSet<StdGoal>,
}

impl Std {
    /// `depth` is the tree depth of the node being built.
    fn goal(&mut self, sub: &Ty, sup: &Ty, depth: usize) -> R {
        self.budget.tick()?;
        let g = StdGoal {
            sub: state_type(sub),
            sup: state_type(sup),
        };
        if let Some((_, at)) = self.stack.iter().find(|(a, _)| *a == g) {
            let mut d = D::leaf(Rule::Coinduction, g);
            d.backedge = Some(depth - at);
            return Ok(Some(d));
        }
        if self.failed.contains(&g) {
            return Ok(None);
        }
        self.stack.push((g.clone(), depth));
        let r = self.rules(&g, depth);
        self.stack.pop();
        let r = r?;
        if r.is_none() {
            self.failed.insert(g);
        }
        Ok(r)
    }

    fn rules(&mut self, g: &StdGoal, depth: usize) -> R {
        match (is_end(&g.sub), is_end(&g.sup)) {
            (true, true) => return Ok(Some(D::leaf(Rule::SubEnd, g.clone()))),
            (false, false) => {}
            _ => return Ok(None),
        }
        let (ins_a, sums_a) = split_modes(&g.sub);
        let (ins_b, sums_b) = split_modes(&g.sup);
        let Some(din) = self.inputs(&ins_a, &ins_b, depth + 2)? else { return Ok(None) };
        let Some(dout) = self.outputs(&sums_a, &sums_b, depth + 2)? else { return Ok(None) };
        Ok(Some(D::node(Rule::SubSigma, g.clone(), vec![din, dout])))
    }

    fn inputs(&mut self, a: &[(Msg, Ty)], b: &[(Msg, Ty)], depth: usize) -> R {
        let g = StdGoal {
            sub: mixed_from(a.to_vec(), vec![]),
            sup: mixed_from(b.to_vec(), vec![]),
        };
        if a.is_empty() || b.is_empty() {
            return Ok((a.is_empty() && b.is_empty()).then(|| D::leaf(Rule::SubEnd, g)));
        }
        let matched: Vec<(&str, &str)> = b.iter().map(|(m, _)| (m.to.as_str(), m.from.as_str())).collect();
        for (m, _) in a {
            let in_b = b.iter().any(|(mb, _)| mb == m);
            if !in_b && !matched.contains(&(m.to.as_str(), m.from.as_str())) {
                return Ok(None);
            }
        }
        let mut children = Vec::new();
        for (mb, tb) in b {
            let Some((_, ta)) = a.iter().find(|(ma, _)| ma == mb) else { return Ok(None) };
            match self.goal(ta, tb, depth)? {
                Some(d) => children.push(d),
                None => return Ok(None),
            }
        }
        Ok(Some(D::node(Rule::SubSigmaIn, g, children)))
    }

    fn outputs(&mut self, a: &[Vec<Summand>], b: &[Vec<Summand>], depth: usize) -> R {
        let g = StdGoal {
            sub: mixed_from(vec![], a.to_vec()),
            sup: mixed_from(vec![], b.to_vec()),
        };
        if a.is_empty() || b.is_empty() {
            return Ok((a.is_empty() && b.is_empty()).then(|| D::leaf(Rule::SubEnd, g)));
        }
        // sums as they appear in the normalized goal
        let (_, a) = split_modes(&g.sub);
        let (_, b) = split_modes(&g.sup);
        let mut cache: BTreeMap<(usize, usize), Option<(Vec<D>, Vec<FlowEdge>)>> = BTreeMap::new();
        let mut assign: Vec<usize> = Vec::new();
        let found = self.assign_sums(&a, &b, &mut assign, &mut cache, depth)?;
        let Some(assign) = found else { return Ok(None) };
        let mut children = Vec::new();
        let mut flows = Vec::new();
        for (i, &j) in assign.iter().enumerate() {
            let (ds, edges) = cache[&(i, j)].clone().expect("assigned pairs are matched");
            let base = children.len();
            flows.push(SumFlow {
                sub_sum: i,
                sup_sum: j,
                edges: edges
                    .into_iter()
                    .map(|e| FlowEdge {
                        child: e.child + base,
                        ..e
                    })
                    .collect(),
            });
            children.extend(ds);
        }
        let mut d = D::node(Rule::SubSigmaOut, g, children);
        d.flows = flows;
        Ok(Some(d))
    }

    fn assign_sums(
        &mut self,
        a: &[Vec<Summand>],
        b: &[Vec<Summand>],
        assign: &mut Vec<usize>,
        cache: &mut BTreeMap<(usize, usize), Option<(Vec<D>, Vec<FlowEdge>)>>,
        depth: usize,
    ) -> Result<Option<Vec<usize>>, SubtypeError> {
        let i = assign.len();
        if i == a.len() {
            let justified = (0..b.len())
                .filter(|j| !assign.contains(j))
                .all(|j| a.iter().any(|sa| pre_summands(sa) == pre_summands(&b[j])));
            return Ok(justified.then(|| assign.clone()));
        }
        for j in 0..b.len() {
            if assign.contains(&j) {
                continue;
            }
            if !cache.contains_key(&(i, j)) {
                let m = self.match_sum(&a[i], &b[j], depth)?;
                cache.insert((i, j), m);
            }
            if cache[&(i, j)].is_none() {
                continue;
            }
            assign.push(j);
            if let Some(done) = self.assign_sums(a, b, assign, cache, depth)? {
                return Ok(Some(done));
            }
            assign.pop();
        }
        Ok(None)
    }

    /// Summand-wise matching of two sums up to splitting equal summands.
    fn match_sum(&mut self, a: &[Summand], b: &[Summand], depth: usize) -> Result<Option<(Vec<D>, Vec<FlowEdge>)>, SubtypeError> {
        let mut proofs: BTreeMap<(usize, usize), D> = BTreeMap::new();
        for (k, sa) in a.iter().enumerate() {
            for (l, sb) in b.iter().enumerate() {
                if sa.head == sb.head {
                    if let Some(d) = self.goal(&sa.cont, &sb.cont, depth)? {
                        proofs.insert((k, l), d);
                    }
                }
            }
        }
        let supply: Vec<_> = a.iter().map(|s| s.prob.clone()).collect();
        let demand: Vec<_> = b.iter().map(|s| s.prob.clone()).collect();
        let allowed: Vec<_> = proofs.keys().copied().collect();
        let Some(flow) = transport(&supply, &demand, &allowed) else { return Ok(None) };
        let mut children = Vec::new();
        let mut edges = Vec::new();
        for (k, l, amount) in flow {
            edges.push(FlowEdge {
                sub_summand: k,
                sup_summand: l,
                amount,
                child: children.len(),
            });
            children.push(proofs[&(k, l)].clone());
        }
        Ok(Some((children, edges)))
    }
}
