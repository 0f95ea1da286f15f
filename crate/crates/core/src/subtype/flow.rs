//! Edmonds–Karp maximum flow over exact rational capacities.

use std::collections::VecDeque;

use crate::rational::Rational;

struct Net {
    cap: Vec<Vec<Rational>>,
}

impl Net {
    fn new(n: usize) -> Self {
        Net {
            cap: vec![vec![Rational::zero(); n]; n],
        }
    }

    fn max_flow(&mut self, s: usize, t: usize) -> Rational {
        let n = self.cap.len();
        let mut total = Rational::zero();
        loop {
            let mut prev = vec![usize::MAX; n];
            prev[s] = s;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for v in 0..n {
                    if prev[v] == usize::MAX && self.cap[u][v].is_positive() {
                        prev[v] = u;
                        q.push_back(v);
                    }
                }
            }
            if prev[t] == usize::MAX {
                return total;
            }
            let mut bottleneck: Option<Rational> = None;
            let mut v = t;
            while v != s {
                let u = prev[v];
                let c = &self.cap[u][v];
                bottleneck = Some(match bottleneck {
                    Some(b) if &b <= c => b,
                    _ => c.clone(),
                });
                v = u;
            }
            let b = bottleneck.expect("augmenting path has an edge");
            let mut v = t;
            while v != s {
                let u = prev[v];
                self.cap[u][v] = &self.cap[u][v] - &b;
                self.cap[v][u] = &self.cap[v][u] + &b;
                v = u;
            }
            total = total + b;
        }
    }
}

/// Finds amounts on `allowed` edges that exactly exhaust every supply and
/// demand, or `None` when no such allocation exists.
pub fn transport(
    supply: &[Rational],
    demand: &[Rational],
    allowed: &[(usize, usize)],
) -> Option<Vec<(usize, usize, Rational)>> {
    let total: Rational = supply.iter().sum();
    let want: Rational = demand.iter().sum();
    if total != want {
        return None;
    }
    let (ns, nd) = (supply.len(), demand.len());
    let src = ns + nd;
    let snk = src + 1;
    let mut net = Net::new(ns + nd + 2);
    for (i, s) in supply.iter().enumerate() {
        net.cap[src][i] = s.clone();
    }
    for (j, d) in demand.iter().enumerate() {
        net.cap[ns + j][snk] = d.clone();
    }
    for &(i, j) in allowed {
        net.cap[i][ns + j] = total.clone();
    }
    if net.max_flow(src, snk) != total {
        return None;
    }
    let mut out = Vec::new();
    for &(i, j) in allowed {
        // residual on the reverse edge is the flow pushed forward
        let f = net.cap[ns + j][i].clone();
        if f.is_positive() {
            out.push((i, j, f));
        }
    }
    out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    out.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    Some(out)
}
