//! Decision procedures for standard, single-channel and multi-channel
//! subtyping, each producing a checkable derivation, plus an independent
//! derivation validator.

mod flow;
mod multi;
mod single;
mod standard;
mod validate;

use std::fmt;

use thiserror::Error;

use crate::rational::Rational;
use crate::surface::{print_channel, print_context, print_head, print_type};
use crate::syntax::{ActiveContext, ActiveType, LocalContext, Ty};
use crate::typemeta::{canonical, canonical_context, is_well_formed, state_type};

pub use flow::transport;
pub use validate::{check_derivation, check_std_derivation, validate_derivation, validate_std_derivation, CheckFailure};

pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubtypeError {
    #[error("ill-formed type: {0}")]
    IllFormedType(String),
    #[error("search budget of {0} rule applications exceeded; result inconclusive")]
    SearchBudgetExceeded(u64),
    #[error("proof depth of {0} goals exceeded; result inconclusive")]
    SearchDepthExceeded(usize),
}

impl SubtypeError {
    /// Budget or depth exhaustion: neither a proof nor a refutation.
    pub fn is_inconclusive(&self) -> bool {
        matches!(self, SubtypeError::SearchBudgetExceeded(_) | SubtypeError::SearchDepthExceeded(_))
    }
}

/// Maximum nesting of goals along one proof path.
pub const MAX_GOAL_DEPTH: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    SubEnd,
    SubSigma,
    SubSigmaIn,
    SubSigmaOut,
    SubCSigma,
    SubCSigmaIn,
    SubCSigmaOut,
    SubCOplus,
    SubCIn,
    SubCOut,
    SubCTau,
    SubCEmpty,
    SubCSplit,
    SSigma1,
    SSigma2,
    SSigmaIn,
    SSigmaOut,
    SOplus,
    SIn,
    SOut,
    SLink,
    STauL,
    STauR,
    SEmpty1,
    SEmpty,
    SSplit,
    /// Leaf closed by a back-edge to an identical ancestor goal.
    Coinduction,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::SubEnd => "Sub-end",
            Rule::SubSigma => "Sub-Σ",
            Rule::SubSigmaIn => "Sub-Σ-?",
            Rule::SubSigmaOut => "Sub-Σ-!",
            Rule::SubCSigma => "SubC-Σ",
            Rule::SubCSigmaIn => "SubC-Σ-?",
            Rule::SubCSigmaOut => "SubC-Σ-!",
            Rule::SubCOplus => "SubC-⊕",
            Rule::SubCIn => "SubC-?",
            Rule::SubCOut => "SubC-!",
            Rule::SubCTau => "SubC-τ",
            Rule::SubCEmpty => "SubC-∅",
            Rule::SubCSplit => "SubC-Split",
            Rule::SSigma1 => "S-Σ-1",
            Rule::SSigma2 => "S-Σ-2",
            Rule::SSigmaIn => "S-Σ-?",
            Rule::SSigmaOut => "S-Σ-!",
            Rule::SOplus => "S-⊕",
            Rule::SIn => "S-?",
            Rule::SOut => "S-!",
            Rule::SLink => "S-Link",
            Rule::STauL => "S-τ-L",
            Rule::STauR => "S-τ-R",
            Rule::SEmpty1 => "S-∅-1",
            Rule::SEmpty => "S-∅",
            Rule::SSplit => "S-Split",
            Rule::Coinduction => "coinduction",
        }
    }

    /// Rules that consume a prefix; every coinductive cycle must pass one.
    pub fn is_productive(self) -> bool {
        matches!(
            self,
            Rule::SubSigmaIn
                | Rule::SubSigmaOut
                | Rule::SubCIn
                | Rule::SubCOut
                | Rule::SubCTau
                | Rule::SIn
                | Rule::SOut
                | Rule::SLink
                | Rule::STauL
                | Rule::STauR
        )
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A standard subtyping goal `sub ≤ sup`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StdGoal {
    pub sub: Ty,
    pub sup: Ty,
}

impl StdGoal {
    pub fn normalized(&self) -> StdGoal {
        StdGoal {
            sub: state_type(&self.sub),
            sup: state_type(&self.sup),
        }
    }
}

impl fmt::Display for StdGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ≤ {}", print_type(&self.sub), print_type(&self.sup))
    }
}

/// `lhs ≤_prob rhs`; an empty `rhs` is the empty supertype.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Goal {
    pub lhs: ActiveContext,
    pub prob: Rational,
    pub rhs: LocalContext,
}

impl Goal {
    pub fn new(lhs: ActiveContext, prob: Rational, rhs: LocalContext) -> Goal {
        Goal { lhs, prob, rhs }.normalized()
    }

    /// Canonical form used for goal identity.
    pub fn normalized(&self) -> Goal {
        Goal {
            lhs: normalize_active(&self.lhs),
            prob: self.prob.clone(),
            rhs: canonical_context(&self.rhs),
        }
    }
}

pub(crate) fn normalize_active(l: &ActiveContext) -> ActiveContext {
    match l {
        ActiveContext::Plain(d) => ActiveContext::Plain(canonical_context(d)),
        ActiveContext::Active { chan, view, rest } => ActiveContext::Active {
            chan: chan.clone(),
            view: match view {
                ActiveType::Type(t) => ActiveType::Type(state_type(t)),
                ActiveType::Bare(h, c) => ActiveType::Bare(h.clone(), canonical(c)),
            },
            rest: canonical_context(rest),
        },
    }
}

pub fn print_active(l: &ActiveContext) -> String {
    match l {
        ActiveContext::Plain(d) => print_context(d),
        ActiveContext::Active { chan, view, rest } => {
            let v = match view {
                ActiveType::Type(t) => print_type(t),
                ActiveType::Bare(h, c) => format!("{}.{}", print_head(h), print_type(c)),
            };
            let mut parts = vec![format!("{} : {}", print_channel(chan), v)];
            parts.extend(rest.iter().map(|(c, t)| format!("{} : {}", print_channel(c), print_type(t))));
            format!("{} · {{ {} }}", print_channel(chan), parts.join(", "))
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rhs = if self.rhs.is_empty() { "∅".to_string() } else { print_context(&self.rhs) };
        write!(f, "{} ≤_{} {}", print_active(&self.lhs), self.prob.to_surface(), rhs)
    }
}

/// One flow edge of a standard sum matching: `amount` of sub summand
/// `sub_summand` is justified against sup summand `sup_summand` by `child`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowEdge {
    pub sub_summand: usize,
    pub sup_summand: usize,
    pub amount: Rational,
    pub child: usize,
}

/// The matching of one sub sum against one sup sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumFlow {
    pub sub_sum: usize,
    pub sup_sum: usize,
    pub edges: Vec<FlowEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation<G> {
    pub rule: Rule,
    pub goal: G,
    pub children: Vec<Derivation<G>>,
    /// Distance to the ancestor closing this coinductive leaf.
    pub backedge: Option<usize>,
    /// Sum matchings of a `Sub-Σ-!` node.
    pub flows: Vec<SumFlow>,
}

impl<G: fmt::Display> Derivation<G> {
    pub fn leaf(rule: Rule, goal: G) -> Self {
        Derivation {
            rule,
            goal,
            children: vec![],
            backedge: None,
            flows: vec![],
        }
    }

    pub fn node(rule: Rule, goal: G, children: Vec<Derivation<G>>) -> Self {
        Derivation {
            rule,
            goal,
            children,
            backedge: None,
            flows: vec![],
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Derivation::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Derivation::depth).max().unwrap_or(0)
    }

    /// Rule names in pre-order.
    pub fn rules(&self) -> Vec<Rule> {
        let mut out = vec![self.rule];
        for c in &self.children {
            out.extend(c.rules());
        }
        out
    }

    /// Indented human-readable proof, conclusion first.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, depth: usize, out: &mut String) {
        let back = match self.backedge {
            Some(d) => format!(" (back to {d} levels up)"),
            None => String::new(),
        };
        out.push_str(&format!("{}[{}] {}{}\n", "  ".repeat(depth), self.rule, self.goal, back));
        for c in &self.children {
            c.render_into(depth + 1, out);
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "rule": self.rule.name(),
            "goal": self.goal.to_string(),
            "children": self.children.iter().map(Derivation::to_json).collect::<Vec<_>>(),
        });
        if let Some(d) = self.backedge {
            v["backedge"] = serde_json::json!(d);
        }
        if !self.flows.is_empty() {
            v["flows"] = serde_json::json!(self
                .flows
                .iter()
                .map(|f| serde_json::json!({
                    "sub_sum": f.sub_sum,
                    "sup_sum": f.sup_sum,
                    "edges": f.edges.iter().map(|e| serde_json::json!({
                        "sub": e.sub_summand,
                        "sup": e.sup_summand,
                        "amount": e.amount.to_string(),
                        "child": e.child,
                    })).collect::<Vec<_>>(),
                }))
                .collect::<Vec<_>>());
        }
        v
    }
}

fn check_types<'a>(ts: impl IntoIterator<Item = &'a Ty>) -> Result<(), SubtypeError> {
    for t in ts {
        if !is_well_formed(t) {
            return Err(SubtypeError::IllFormedType(print_type(t)));
        }
    }
    Ok(())
}

/// Standard subtyping `t_sub ≤ t_sup`.
pub fn sub_standard(t_sub: &Ty, t_sup: &Ty) -> Result<Option<Derivation<StdGoal>>, SubtypeError> {
    sub_standard_with(t_sub, t_sup, DEFAULT_BUDGET)
}

pub fn sub_standard_with(t_sub: &Ty, t_sup: &Ty, budget: u64) -> Result<Option<Derivation<StdGoal>>, SubtypeError> {
    check_types([t_sub, t_sup])?;
    standard::prove(t_sub, t_sup, budget)
}

/// Single-channel subtyping `d_sub ≤¹ d_sup`.
pub fn sub_single(d_sub: &LocalContext, d_sup: &LocalContext) -> Result<Option<Derivation<Goal>>, SubtypeError> {
    sub_single_with(d_sub, d_sup, DEFAULT_BUDGET)
}

pub fn sub_single_with(
    d_sub: &LocalContext,
    d_sup: &LocalContext,
    budget: u64,
) -> Result<Option<Derivation<Goal>>, SubtypeError> {
    check_types(d_sub.iter().chain(d_sup.iter()).map(|(_, t)| t))?;
    single::prove(d_sub, d_sup, budget)
}

/// Multi-channel subtyping `d_sub ≤₁ d_sup`.
pub fn sub_multi(d_sub: &LocalContext, d_sup: &LocalContext) -> Result<Option<Derivation<Goal>>, SubtypeError> {
    sub_multi_with(d_sub, d_sup, DEFAULT_BUDGET)
}

pub fn sub_multi_with(
    d_sub: &LocalContext,
    d_sup: &LocalContext,
    budget: u64,
) -> Result<Option<Derivation<Goal>>, SubtypeError> {
    check_types(d_sub.iter().chain(d_sup.iter()).map(|(_, t)| t))?;
    multi::prove(d_sub, d_sup, budget)
}

/// Whether `d` concludes exactly `d_sub ≤_1 d_sup`.
pub fn concludes(d: &Derivation<Goal>, d_sub: &LocalContext, d_sup: &LocalContext) -> bool {
    d.goal.normalized() == Goal::new(ActiveContext::Plain(d_sub.clone()), Rational::one(), d_sup.clone())
}

/// Whether `d` concludes exactly `t_sub ≤ t_sup`.
pub fn concludes_std(d: &Derivation<StdGoal>, t_sub: &Ty, t_sup: &Ty) -> bool {
    d.goal.normalized()
        == (StdGoal {
            sub: t_sub.clone(),
            sup: t_sup.clone(),
        })
        .normalized()
}

/// Counts rule applications and reports exhaustion.
pub(crate) struct Budget {
    limit: u64,
    used: u64,
}

impl Budget {
    pub(crate) fn new(limit: u64) -> Self {
        Budget { limit, used: 0 }
    }

    pub(crate) fn tick(&mut self) -> Result<(), SubtypeError> {
        self.used += 1;
        if self.used > self.limit {
            Err(SubtypeError::SearchBudgetExceeded(self.limit))
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests;
