//! Flow- and context-sensitive analysis: the dense dataflow engine run
//! over a call-string expansion with `k >= 1`.
//!
//! Contexts multiply both program points and heap objects: an allocation
//! site yields one abstract object per context its function is cloned
//! under. That sharpens strong updates — a callee allocating a cell per
//! call site can strongly overwrite each clone independently, where the
//! context-insensitive run had to merge them.

use crate::constraints::ConstraintSystem;
use crate::ir::{InstrId, PointerModule};
use std::collections::{BTreeMap, BTreeSet};

use super::flow::{solve_flow_sensitive, FlowConfig, FlowError, FlowResult};

/// Run the flow+context-sensitive analysis with call strings of length `k`.
pub fn solve_fscs(
    m: &PointerModule,
    sys: &ConstraintSystem,
    call_graph: &BTreeMap<InstrId, BTreeSet<u32>>,
    k: usize,
    max_clones: u64,
) -> Result<FlowResult, FlowError> {
    solve_flow_sensitive(m, sys, call_graph, &FlowConfig { k, max_clones })
}
