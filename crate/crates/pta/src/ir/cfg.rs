//! Per-function control-flow graph at instruction granularity.

use super::{Function, InstrId, InstrKind};
use std::collections::HashMap;

/// CFG of a single validated function. Nodes are the function's instruction
/// ids; the entry node is the first instruction of the first block and has no
/// predecessors (branches to the entry block are rejected by validation).
#[derive(Debug, Clone)]
pub struct Cfg {
    pub entry: InstrId,
    /// Ret instructions, in id order.
    pub exits: Vec<InstrId>,
    /// All nodes in id order.
    pub nodes: Vec<InstrId>,
    succs: HashMap<InstrId, Vec<InstrId>>,
    preds: HashMap<InstrId, Vec<InstrId>>,
}

impl Cfg {
    pub fn succs(&self, n: InstrId) -> &[InstrId] {
        self.succs.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn preds(&self, n: InstrId) -> &[InstrId] {
        self.preds.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes of this CFG that sit on some intra-function cycle.
    pub fn nodes_on_cycles(&self) -> Vec<InstrId> {
        // Successive DFS numbering (Tarjan) is overkill for function-sized
        // graphs; iterate reachability instead: n is on a cycle iff n is
        // reachable from one of its successors.
        let mut out = Vec::new();
        for &n in &self.nodes {
            let mut seen = std::collections::HashSet::new();
            let mut stack: Vec<InstrId> = self.succs(n).to_vec();
            let mut cyclic = false;
            while let Some(m) = stack.pop() {
                if m == n {
                    cyclic = true;
                    break;
                }
                if seen.insert(m) {
                    stack.extend(self.succs(m).iter().copied());
                }
            }
            if cyclic {
                out.push(n);
            }
        }
        out
    }
}

/// Build the CFG of a validated function.
pub fn build_cfg(f: &Function) -> Cfg {
    let first_of_block: HashMap<&str, InstrId> = f
        .blocks
        .iter()
        .map(|b| (b.label.as_str(), b.instrs.first().expect("validated block").id))
        .collect();

    let mut nodes = Vec::new();
    let mut exits = Vec::new();
    let mut succs: HashMap<InstrId, Vec<InstrId>> = HashMap::new();
    let mut preds: HashMap<InstrId, Vec<InstrId>> = HashMap::new();
    let edge = |from: InstrId, to: InstrId, succs: &mut HashMap<InstrId, Vec<InstrId>>,
                    preds: &mut HashMap<InstrId, Vec<InstrId>>| {
        let s = succs.entry(from).or_default();
        if !s.contains(&to) {
            s.push(to);
            preds.entry(to).or_default().push(from);
        }
    };

    for b in &f.blocks {
        for (pos, i) in b.instrs.iter().enumerate() {
            nodes.push(i.id);
            match &i.kind {
                InstrKind::Ret { .. } => exits.push(i.id),
                InstrKind::Br { targets } => {
                    for t in targets {
                        edge(i.id, first_of_block[t.as_str()], &mut succs, &mut preds);
                    }
                }
                _ => {
                    let next = &b.instrs[pos + 1];
                    edge(i.id, next.id, &mut succs, &mut preds);
                }
            }
        }
    }

    Cfg { entry: f.blocks[0].instrs[0].id, exits, nodes, succs, preds }
}

#[cfg(test)]
mod tests {
    use super::super::parse_module;
    use super::*;

    #[test]
    fn diamond_has_expected_edges() {
        let m = parse_module(
            "func @main() {
entry:
  %p = alloc A
  br l, r
l:
  %x = copy %p
  br join
r:
  %y = copy %p
  br join
join:
  ret
}",
        )
        .unwrap();
        let cfg = build_cfg(&m.functions[0]);
        assert_eq!(cfg.entry, InstrId(0));
        assert_eq!(cfg.succs(InstrId(1)), &[InstrId(2), InstrId(4)]);
        // both branch arms join at the ret
        assert_eq!(cfg.preds(InstrId(6)), &[InstrId(3), InstrId(5)]);
        assert_eq!(cfg.exits, vec![InstrId(6)]);
        assert!(cfg.preds(cfg.entry).is_empty());
        assert!(cfg.nodes_on_cycles().is_empty());
    }

    #[test]
    fn back_edge_marks_loop_nodes() {
        let m = parse_module(
            "func @main() {
entry:
  br loop
loop:
  %p = alloc A
  br loop, out
out:
  ret
}",
        )
        .unwrap();
        let cfg = build_cfg(&m.functions[0]);
        let cyclic = cfg.nodes_on_cycles();
        assert!(cyclic.contains(&InstrId(1)) && cyclic.contains(&InstrId(2)));
        assert!(!cyclic.contains(&InstrId(0)) && !cyclic.contains(&InstrId(3)));
    }
}
