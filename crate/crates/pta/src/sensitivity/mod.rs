//! Context- and flow-sensitive analyses.
//!
//! Contexts are call strings: the most recent `k` call sites, innermost
//! last. `flow` holds the dense dataflow engine shared by the
//! flow-sensitive analysis (`k = 0`, one context) and the combined
//! flow+context analysis (`fscs`, contexts enumerated ahead of time).
//! `kcfa` is the flow-insensitive context-sensitive analysis, built by
//! cloning the constraint system per context and re-solving with the
//! inclusion solver.

use crate::ir::InstrId;

pub mod flow;
pub mod fscs;
pub mod kcfa;

pub use flow::{solve_flow_sensitive, FlowConfig, FlowResult, FlowStats};
pub use fscs::solve_fscs;
pub use kcfa::{solve_kcfa, KcfaConfig, KcfaResult};

/// A call-string context, outermost call site first.
pub type Ctx = Vec<InstrId>;

/// Extend `ctx` with `site` and keep the most recent `k` entries.
pub fn push_site(ctx: &[InstrId], site: InstrId, k: usize) -> Ctx {
    let mut next = ctx.to_vec();
    next.push(site);
    let cut = next.len() - next.len().min(k);
    next.drain(..cut);
    next
}

/// The most recent `k` entries of a concrete call string.
pub fn suffix(ctx: &[InstrId], k: usize) -> Ctx {
    ctx[ctx.len() - ctx.len().min(k)..].to_vec()
}
