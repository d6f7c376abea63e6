//! Interprocedural control-flow graph.
//!
//! Nodes are the instructions of functions reachable from the entry through
//! a supplied call graph. Within a function, edges follow the per-function
//! CFG. A call site grows three kinds of interprocedural structure:
//!
//! * `Call` edges to each resolved callee's entry instruction,
//! * `Return` edges from each of the callee's `ret` instructions back to
//!   the instruction after the call, and
//! * one `Bypass` edge to the instruction after the call, carrying only
//!   the caller's frame-local state. Memory must travel through the callee
//!   (callees can write it); locals are frozen in the suspended frame and
//!   travel around it.
//!
//! The split matters for precision and for soundness under recursion: a
//! recursive callee's writes to its own locals do not clobber the caller's
//! frame, which the bypass edge preserves exactly.

use crate::constraints::NodeTable;
use crate::ir::{build_cfg, Cfg, InstrId, InstrKind, PointerModule};
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IcfgEdgeKind {
    Intra,
    Call { callee: u32 },
    Return { callsite: InstrId, callee: u32 },
    Bypass,
}

#[derive(Debug, Clone)]
pub struct IcfgEdge {
    pub from: InstrId,
    pub to: InstrId,
    pub kind: IcfgEdgeKind,
}

#[derive(Debug)]
pub struct Icfg {
    pub entry: InstrId,
    /// Reachable functions, ascending.
    pub funcs: Vec<u32>,
    /// Reachable instructions, in id order.
    pub nodes: Vec<InstrId>,
    pub edges: Vec<IcfgEdge>,
    succ_idx: HashMap<InstrId, Vec<usize>>,
    pred_idx: HashMap<InstrId, Vec<usize>>,
    /// Owning function of each node.
    pub func_of: HashMap<InstrId, u32>,
    /// Intraprocedural CFGs of the reachable functions.
    pub cfgs: HashMap<u32, Cfg>,
}

impl Icfg {
    pub fn succs(&self, n: InstrId) -> impl Iterator<Item = &IcfgEdge> {
        self.succ_idx
            .get(&n)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
    }

    pub fn preds(&self, n: InstrId) -> impl Iterator<Item = &IcfgEdge> {
        self.pred_idx
            .get(&n)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
    }

    pub fn contains(&self, n: InstrId) -> bool {
        self.func_of.contains_key(&n)
    }
}

/// Build the ICFG for the functions reachable from the module entry under
/// `call_graph` (sites mapped to resolved callees, direct calls included).
pub fn build_icfg(
    m: &PointerModule,
    table: &NodeTable,
    call_graph: &BTreeMap<InstrId, BTreeSet<u32>>,
) -> Icfg {
    let entry_func = table.function_by_name(&m.entry).expect("validated entry");

    // Call-graph reachability from the entry function.
    let mut reachable: BTreeSet<u32> = BTreeSet::new();
    let mut stack = vec![entry_func];
    while let Some(f) = stack.pop() {
        if !reachable.insert(f) {
            continue;
        }
        for b in &m.functions[f as usize].blocks {
            for i in &b.instrs {
                if matches!(i.kind, InstrKind::Call { .. } | InstrKind::ICall { .. }) {
                    for &t in call_graph.get(&i.id).into_iter().flatten() {
                        stack.push(t);
                    }
                }
            }
        }
    }

    let funcs: Vec<u32> = reachable.iter().copied().collect();
    let mut nodes = Vec::new();
    let mut func_of = HashMap::new();
    let mut cfgs: HashMap<u32, Cfg> = HashMap::new();
    for &fi in &funcs {
        let cfg = build_cfg(&m.functions[fi as usize]);
        for &n in &cfg.nodes {
            nodes.push(n);
            func_of.insert(n, fi);
        }
        cfgs.insert(fi, cfg);
    }
    nodes.sort_unstable();

    let mut edges = Vec::new();
    for &fi in &funcs {
        let f = &m.functions[fi as usize];
        for b in &f.blocks {
            for (pos, i) in b.instrs.iter().enumerate() {
                let is_call =
                    matches!(i.kind, InstrKind::Call { .. } | InstrKind::ICall { .. });
                if !is_call {
                    for &s in cfgs[&fi].succs(i.id) {
                        edges.push(IcfgEdge { from: i.id, to: s, kind: IcfgEdgeKind::Intra });
                    }
                    continue;
                }
                // Calls are never terminators, so the in-block successor
                // exists.
                let after = b.instrs[pos + 1].id;
                edges.push(IcfgEdge { from: i.id, to: after, kind: IcfgEdgeKind::Bypass });
                for &t in call_graph.get(&i.id).into_iter().flatten() {
                    if !reachable.contains(&t) {
                        continue;
                    }
                    let callee_entry = m.functions[t as usize].blocks[0].instrs[0].id;
                    edges.push(IcfgEdge {
                        from: i.id,
                        to: callee_entry,
                        kind: IcfgEdgeKind::Call { callee: t },
                    });
                    for &r in &cfgs[&t].exits {
                        edges.push(IcfgEdge {
                            from: r,
                            to: after,
                            kind: IcfgEdgeKind::Return { callsite: i.id, callee: t },
                        });
                    }
                }
            }
        }
    }

    let mut succ_idx: HashMap<InstrId, Vec<usize>> = HashMap::new();
    let mut pred_idx: HashMap<InstrId, Vec<usize>> = HashMap::new();
    for (idx, e) in edges.iter().enumerate() {
        succ_idx.entry(e.from).or_default().push(idx);
        pred_idx.entry(e.to).or_default().push(idx);
    }
    Icfg {
        entry: m.functions[entry_func as usize].blocks[0].instrs[0].id,
        funcs,
        nodes,
        edges,
        succ_idx,
        pred_idx,
        func_of,
        cfgs,
    }
}
