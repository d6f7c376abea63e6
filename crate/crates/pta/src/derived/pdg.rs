//! Program dependence graph and slicing.
//!
//! Nodes are the instructions of functions reachable through the call
//! graph; edges record why an instruction matters to another:
//!
//! * `DataLocal` — a definition of a local variable reaches a use. The IR
//!   is not SSA, so these come from a classic bitvector reaching-definitions
//!   pass per function. Return values flow as `DataLocal` edges from the
//!   callee's `ret` instructions to the call site that receives them.
//! * `DataMem` — a store (or a call that may write) feeds a load (or a
//!   call that may read) through memory, per the memory-SSA use links.
//!   Links that land on a phi are expanded through its operands down to
//!   the writes themselves, so edge endpoints are always instructions.
//! * `Control` — a branch decides whether an instruction runs, computed
//!   from post-dominance over the function's CFG with a virtual exit
//!   collecting the `ret`s. Control dependence is kept intra-procedural
//!   and restricted to instructions that can reach the exit; what a call
//!   site guards in its callee is expressed by `Call` edges instead.
//! * `Call` — a call site to each resolved callee's entry instruction:
//!   the callee runs (and its parameters get their values) because the
//!   call runs.
//!
//! Slices are plain reachability closures over these edges, backward for
//! "what does this depend on", forward for "what depends on this".

use crate::ir::{build_cfg, InstrId, InstrKind, PointerModule};
use crate::query::AnalysisResult;
use std::collections::{BTreeSet, HashMap};

use super::dom::dominator_tree;
use super::icfg::build_icfg;
use super::memssa::{build_memory_ssa, MemDefKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PdgEdgeKind {
    DataLocal,
    DataMem,
    Control,
    Call,
}

impl PdgEdgeKind {
    /// Short tag used in dumps.
    pub fn label(self) -> &'static str {
        match self {
            PdgEdgeKind::DataLocal => "data",
            PdgEdgeKind::DataMem => "mem",
            PdgEdgeKind::Control => "ctrl",
            PdgEdgeKind::Call => "call",
        }
    }
}

/// A dependence of `to` on `from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PdgEdge {
    pub from: InstrId,
    pub to: InstrId,
    pub kind: PdgEdgeKind,
}

#[derive(Debug)]
pub struct Pdg {
    /// Instructions of the reachable functions, in id order.
    pub nodes: Vec<InstrId>,
    pub edges: BTreeSet<PdgEdge>,
    succ: HashMap<InstrId, BTreeSet<InstrId>>,
    pred: HashMap<InstrId, BTreeSet<InstrId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceDirection {
    /// Everything the seed transitively depends on.
    Backward,
    /// Everything that transitively depends on the seed.
    Forward,
}

/// Reachability closure over dependence edges; the seed is part of its own
/// slice.
pub fn slice(pdg: &Pdg, seed: InstrId, dir: SliceDirection) -> BTreeSet<InstrId> {
    let adj = match dir {
        SliceDirection::Backward => &pdg.pred,
        SliceDirection::Forward => &pdg.succ,
    };
    let mut out = BTreeSet::from([seed]);
    let mut stack = vec![seed];
    while let Some(n) = stack.pop() {
        for &next in adj.get(&n).into_iter().flatten() {
            if out.insert(next) {
                stack.push(next);
            }
        }
    }
    out
}

impl Pdg {
    /// DOT text with nodes labeled by instruction name and edges by kind.
    pub fn to_dot(&self, m: &PointerModule) -> String {
        let mut s = String::from("digraph pdg {\n");
        for &n in &self.nodes {
            s.push_str(&format!("  {} [label=\"{}\"];\n", n, m.instr_name(n)));
        }
        for e in &self.edges {
            s.push_str(&format!("  {} -> {} [label=\"{}\"];\n", e.from, e.to, e.kind.label()));
        }
        s.push_str("}\n");
        s
    }
}

/// Build the dependence graph of the functions reachable under `r`'s call
/// graph.
pub fn build_pdg(m: &PointerModule, r: &AnalysisResult) -> Pdg {
    let icfg = build_icfg(m, &r.table, &r.call_graph);
    let reachable_funcs: BTreeSet<u32> = icfg.funcs.iter().copied().collect();
    let mut edges: BTreeSet<PdgEdge> = BTreeSet::new();

    for &fi in &icfg.funcs {
        let f = &m.functions[fi as usize];
        let cfg = build_cfg(f);

        // Reachable subgraph with dense indices.
        let mut reach = BTreeSet::new();
        let mut stack = vec![cfg.entry];
        while let Some(n) = stack.pop() {
            if reach.insert(n) {
                stack.extend(cfg.succs(n).iter().copied());
            }
        }
        let nodes: Vec<InstrId> =
            cfg.nodes.iter().copied().filter(|n| reach.contains(n)).collect();
        let idx: HashMap<InstrId, usize> =
            nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let succs: Vec<Vec<usize>> = nodes
            .iter()
            .map(|&n| cfg.succs(n).iter().filter_map(|s| idx.get(s).copied()).collect())
            .collect();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for (u, ss) in succs.iter().enumerate() {
            for &v in ss {
                preds[v].push(u);
            }
        }

        // Reaching definitions of locals, as bitvectors over def sites.
        // Parameters have no defining instruction: their values arrive over
        // the call site's `Call` edge.
        let mut defs: Vec<(usize, &str)> = Vec::new();
        let mut var_defs: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, &n) in nodes.iter().enumerate() {
            if let Some(d) = m.instr(n).dest.as_deref() {
                var_defs.entry(d).or_default().push(defs.len());
                defs.push((i, d));
            }
        }
        let nwords = defs.len().div_ceil(64);
        let mut ins = vec![vec![0u64; nwords]; nodes.len()];
        let mut outs = vec![vec![0u64; nwords]; nodes.len()];
        let mut changed = true;
        while changed {
            changed = false;
            for u in 0..nodes.len() {
                let mut inw = vec![0u64; nwords];
                for &p in &preds[u] {
                    for (w, &b) in inw.iter_mut().zip(&outs[p]) {
                        *w |= b;
                    }
                }
                let mut outw = inw.clone();
                if let Some(d) = m.instr(nodes[u]).dest.as_deref() {
                    for &k in &var_defs[d] {
                        outw[k / 64] &= !(1u64 << (k % 64));
                    }
                    let own = var_defs[d].iter().find(|&&k| defs[k].0 == u).unwrap();
                    outw[own / 64] |= 1u64 << (own % 64);
                }
                if ins[u] != inw || outs[u] != outw {
                    ins[u] = inw;
                    outs[u] = outw;
                    changed = true;
                }
            }
        }
        for (u, &n) in nodes.iter().enumerate() {
            for x in m.instr(n).kind.uses() {
                for &k in var_defs.get(x).into_iter().flatten() {
                    if ins[u][k / 64] >> (k % 64) & 1 == 1 {
                        edges.insert(PdgEdge {
                            from: nodes[defs[k].0],
                            to: n,
                            kind: PdgEdgeKind::DataLocal,
                        });
                    }
                }
            }
        }

        // Memory dependences through the function's memory SSA.
        let ssa = build_memory_ssa(m, r, fi);
        for (&(reader, _), &d) in &ssa.mu {
            for c in ssa.phi_closure(d) {
                if let MemDefKind::Chi { instr } = ssa.def(c).kind {
                    edges.insert(PdgEdge { from: instr, to: reader, kind: PdgEdgeKind::DataMem });
                }
            }
        }

        // Control dependence from post-dominance with a virtual exit.
        let vexit = nodes.len();
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); nodes.len() + 1];
        for (u, ss) in succs.iter().enumerate() {
            for &v in ss {
                rev[v].push(u);
            }
        }
        for &e in &cfg.exits {
            if let Some(&i) = idx.get(&e) {
                rev[vexit].push(i);
            }
        }
        let pdt = dominator_tree(&rev, vexit);
        for b in 0..nodes.len() {
            if succs[b].len() < 2 {
                continue;
            }
            let Some(tb) = pdt.idom[b] else { continue };
            for &s in &succs[b] {
                let mut runner = s;
                while runner != tb {
                    if pdt.idom[runner].is_none() {
                        break;
                    }
                    edges.insert(PdgEdge {
                        from: nodes[b],
                        to: nodes[runner],
                        kind: PdgEdgeKind::Control,
                    });
                    runner = pdt.idom[runner].unwrap();
                }
            }
        }

        // Call edges and returned values.
        for &c in &nodes {
            let instr = m.instr(c);
            if !matches!(instr.kind, InstrKind::Call { .. } | InstrKind::ICall { .. }) {
                continue;
            }
            for &t in r.call_graph.get(&c).into_iter().flatten() {
                if !reachable_funcs.contains(&t) {
                    continue;
                }
                let callee = &m.functions[t as usize];
                edges.insert(PdgEdge {
                    from: c,
                    to: callee.blocks[0].instrs[0].id,
                    kind: PdgEdgeKind::Call,
                });
                if instr.dest.is_some() {
                    for b in &callee.blocks {
                        for i in &b.instrs {
                            if matches!(i.kind, InstrKind::Ret { value: Some(_) }) {
                                edges.insert(PdgEdge {
                                    from: i.id,
                                    to: c,
                                    kind: PdgEdgeKind::DataLocal,
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    let mut succ: HashMap<InstrId, BTreeSet<InstrId>> = HashMap::new();
    let mut pred: HashMap<InstrId, BTreeSet<InstrId>> = HashMap::new();
    for e in &edges {
        succ.entry(e.from).or_default().insert(e.to);
        pred.entry(e.to).or_default().insert(e.from);
    }
    Pdg { nodes: icfg.nodes, edges, succ, pred }
}
