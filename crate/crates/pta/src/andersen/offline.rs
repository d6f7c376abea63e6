//! Offline variable substitution and cycle detection.
//!
//! These passes run before solving, on a graph derived from the constraints
//! alone. Direct nodes stand for variables; a ref node `*v` stands for
//! whatever `v` will point at. Label-flow edges are Copy (src to dst) and
//! Load (`*p` to dst). Store edges (src to `*p`) only matter for hybrid
//! cycle detection, which looks for cycles that pass through a deref.
//!
//! The invariant that makes merging safe here is strict: two variables are
//! merged only when their final points-to sets are provably identical, so
//! solving the merged system yields exactly the reference solution.

use super::scc::tarjan_sccs;
use crate::constraints::{Constraint, ConstraintSystem, NodeId};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Result of an offline substitution pass.
#[derive(Debug, Clone)]
pub struct OfflineMerges {
    /// Representative per node; identity where nothing was merged. Object
    /// element nodes are always their own representative.
    pub rep: Vec<NodeId>,
    /// Equivalence class id per node: two nodes carry the same label iff the
    /// pass proved their final sets equal.
    pub label_of: Vec<u32>,
    /// Number of variables merged into another node.
    pub merged: u64,
}

impl OfflineMerges {
    fn identity(n: usize) -> Self {
        OfflineMerges {
            rep: (0..n as u32).map(NodeId).collect(),
            label_of: (0..n as u32).collect(),
            merged: 0,
        }
    }
}

/// Offline cycle table for hybrid cycle detection: `(v, rep)` means every
/// element that enters `pts(v)` is known to end up set-equal to `rep`, and
/// may be merged with it the moment it appears.
#[derive(Debug, Clone, Default)]
pub struct HcdTable {
    pub entries: Vec<(NodeId, NodeId)>,
}

struct OfflineGraph {
    /// Offline id space: direct nodes occupy `0..node_count`, ref nodes
    /// follow.
    id_space: usize,
    node_count: usize,
    /// Deref'd variable -> its ref node id.
    ref_of: HashMap<u32, u32>,
    /// Ref node id -> the variable it derefs.
    var_of_ref: Vec<u32>,
    succs: Vec<Vec<u32>>,
    /// Nodes whose inflow cannot be captured offline (fresh label).
    indirect: Vec<bool>,
    /// AddrOf seeds per direct node, in constraint order.
    seeds: Vec<Vec<u32>>,
    participants: Vec<u32>,
}

fn build_graph(sys: &ConstraintSystem, with_store_edges: bool) -> OfflineGraph {
    let table = &sys.table;
    let n = table.node_count();

    let mut ref_of: HashMap<u32, u32> = HashMap::new();
    let mut var_of_ref: Vec<u32> = Vec::new();
    for c in &sys.constraints {
        let ptr = match c {
            Constraint::Load { ptr, .. } | Constraint::Store { ptr, .. } => ptr.0,
            _ => continue,
        };
        ref_of.entry(ptr).or_insert_with(|| {
            var_of_ref.push(ptr);
            (n + var_of_ref.len() - 1) as u32
        });
    }

    let id_space = n + var_of_ref.len();
    let mut g = OfflineGraph {
        id_space,
        node_count: n,
        succs: vec![Vec::new(); id_space],
        indirect: vec![false; id_space],
        seeds: vec![Vec::new(); n],
        participants: Vec::new(),
        ref_of,
        var_of_ref,
    };
    for r in n..id_space {
        g.indirect[r] = true;
    }

    for c in &sys.constraints {
        match *c {
            Constraint::AddrOf { dst, elem } => g.seeds[dst.index()].push(elem.0),
            Constraint::Copy { dst, src } => g.succs[src.index()].push(dst.0),
            Constraint::Load { dst, ptr } => g.succs[g.ref_of[&ptr.0] as usize].push(dst.0),
            Constraint::Store { src, ptr } => {
                if with_store_edges {
                    g.succs[src.index()].push(g.ref_of[&ptr.0]);
                }
            }
            Constraint::Field { dst, .. } => g.indirect[dst.index()] = true,
        }
    }
    // Nodes that can gain inflow during solving, invisibly to this graph:
    // indirect-call result variables and parameters of any function whose
    // address is taken.
    for rec in &sys.icall_records {
        if let Some(d) = rec.dest {
            g.indirect[d.index()] = true;
        }
    }
    for &f in &table.address_taken {
        for p in &table.functions[f as usize].param_nodes {
            g.indirect[p.index()] = true;
        }
    }

    for v in 0..n as u32 {
        if !table.is_elem(NodeId(v)) {
            g.participants.push(v);
        }
    }
    g.participants.extend(n as u32..id_space as u32);
    g
}

/// Components in topological order (sources first), over the offline graph.
fn topo_components(g: &OfflineGraph) -> Vec<Vec<u32>> {
    let mut comps = tarjan_sccs(g.id_space, &g.participants, |v, out| {
        out.extend_from_slice(&g.succs[v as usize])
    });
    comps.reverse();
    comps
}

/// Group directly-labeled nodes and derive the merge map. `key_of` yields
/// the canonical label key of each offline component member; nodes with
/// equal keys are set-equal.
fn merges_from_keys(g: &OfflineGraph, keys: Vec<Vec<u32>>) -> OfflineMerges {
    let mut groups: BTreeMap<Vec<u32>, Vec<u32>> = BTreeMap::new();
    for &v in &g.participants {
        if (v as usize) < g.node_count {
            groups.entry(keys[v as usize].clone()).or_default().push(v);
        }
    }
    let mut out = OfflineMerges::identity(g.node_count);
    let mut next_label = 0u32;
    let mut ordered: Vec<Vec<u32>> = groups.into_values().collect();
    ordered.sort_by_key(|members| members[0]);
    for mut members in ordered {
        members.sort_unstable();
        let rep = members[0];
        for &m in &members {
            out.label_of[m as usize] = next_label;
            if m != rep {
                out.rep[m as usize] = NodeId(rep);
                out.merged += 1;
            }
        }
        next_label += 1;
    }
    out
}

/// Hash-based value numbering. Every component gets a single label: a fresh
/// one when its inflow cannot be captured offline, the canonical label of
/// its inflow otherwise. Components whose label expressions coincide are
/// merged.
pub fn hvn(sys: &ConstraintSystem) -> OfflineMerges {
    let g = build_graph(sys, false);
    let comps = topo_components(&g);

    // Label 0 stands for "provably empty".
    let mut next_label = 1u32;
    let mut fresh = || {
        let l = next_label;
        next_label += 1;
        l
    };
    let mut addr_label: HashMap<u32, u32> = HashMap::new();
    let mut hash_label: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut label = vec![0u32; g.id_space];
    let mut inbox: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); g.id_space];

    for comp in &comps {
        let indirect = comp.iter().any(|&v| g.indirect[v as usize]);
        let l = if indirect {
            fresh()
        } else {
            let mut set: BTreeSet<u32> = BTreeSet::new();
            for &v in comp {
                set.extend(inbox[v as usize].iter().copied());
                for e in &g.seeds[v as usize] {
                    let l = *addr_label.entry(*e).or_insert_with(&mut fresh);
                    set.insert(l);
                }
            }
            set.remove(&0);
            match set.len() {
                0 => 0,
                1 => *set.iter().next().expect("nonempty"),
                _ => {
                    let key: Vec<u32> = set.into_iter().collect();
                    *hash_label.entry(key).or_insert_with(&mut fresh)
                }
            }
        };
        for &v in comp {
            label[v as usize] = l;
            for &s in &g.succs[v as usize] {
                inbox[s as usize].insert(l);
            }
        }
    }

    merges_from_keys(&g, label.into_iter().map(|l| vec![l]).collect())
}

/// Value numbering with explicit label-set union instead of hashing. Finds
/// every HVN merge plus absorption cases where one operand's labels are a
/// subset of another's.
pub fn hu(sys: &ConstraintSystem) -> OfflineMerges {
    let g = build_graph(sys, false);
    let comps = topo_components(&g);

    let mut next_label = 0u32;
    let mut fresh = || {
        let l = next_label;
        next_label += 1;
        l
    };
    let mut addr_label: HashMap<u32, u32> = HashMap::new();
    let mut sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); g.id_space];

    for comp in &comps {
        let indirect = comp.iter().any(|&v| g.indirect[v as usize]);
        let mut set: BTreeSet<u32> = BTreeSet::new();
        if indirect {
            set.insert(fresh());
        } else {
            for &v in comp {
                let incoming = std::mem::take(&mut sets[v as usize]);
                set.extend(incoming);
                for e in &g.seeds[v as usize] {
                    let l = *addr_label.entry(*e).or_insert_with(&mut fresh);
                    set.insert(l);
                }
            }
        }
        for &v in comp {
            for &s in &g.succs[v as usize] {
                let outgoing = set.clone();
                sets[s as usize].extend(outgoing);
            }
        }
        for &v in comp {
            sets[v as usize] = set.clone();
        }
    }

    let keys: Vec<Vec<u32>> = sets
        .into_iter()
        .map(|s| s.into_iter().collect())
        .collect();
    merges_from_keys(&g, keys)
}

/// Hybrid cycle detection, offline half. Finds strongly connected
/// components of the full offline graph (store edges included) that pass
/// through a ref node: the direct members and the eventual contents of the
/// deref'd variables all collapse at solve time, so the solver merges each
/// element of `pts(v)` with the recorded representative as soon as it
/// arrives.
pub fn hcd(sys: &ConstraintSystem) -> HcdTable {
    let g = build_graph(sys, true);
    let comps = tarjan_sccs(g.id_space, &g.participants, |v, out| {
        out.extend_from_slice(&g.succs[v as usize])
    });

    let mut entries: Vec<(NodeId, NodeId)> = Vec::new();
    for comp in comps {
        if comp.len() < 2 {
            continue;
        }
        let rep = comp.iter().copied().find(|&v| (v as usize) < g.node_count);
        let Some(rep) = rep else { continue };
        for &v in &comp {
            if v as usize >= g.node_count {
                let var = g.var_of_ref[v as usize - g.node_count];
                entries.push((NodeId(var), NodeId(rep)));
            }
        }
    }
    entries.sort_by_key(|(v, r)| (v.0, r.0));
    entries.dedup();
    HcdTable { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::generate;
    use crate::ir::{parse_module, MAX_FIELD};

    fn system(src: &str) -> ConstraintSystem {
        let m = parse_module(src).expect("parse");
        generate(&m, MAX_FIELD)
    }

    fn node(sys: &ConstraintSystem, func: u32, name: &str) -> NodeId {
        sys.table.var_node(func, name).expect("known var")
    }

    #[test]
    fn copy_chain_collapses_to_one_label() {
        let sys = system(
            "func @main() {\n\
             entry:\n  %a = alloc A\n  %b = copy %a\n  %c = copy %b\n  ret\n}\n",
        );
        let m = hvn(&sys);
        let (a, b, c) = (
            node(&sys, 0, "a"),
            node(&sys, 0, "b"),
            node(&sys, 0, "c"),
        );
        assert_eq!(m.label_of[a.index()], m.label_of[b.index()]);
        assert_eq!(m.label_of[b.index()], m.label_of[c.index()]);
        assert_eq!(m.rep[b.index()], a);
        assert_eq!(m.rep[c.index()], a);
        assert_eq!(m.merged, 2);
    }

    #[test]
    fn distinct_seeds_stay_separate() {
        let sys = system(
            "func @main() {\n\
             entry:\n  %x = alloc A\n  %y = alloc B\n  %z = copy %x\n  ret\n}\n",
        );
        let m = hvn(&sys);
        let (x, y, z) = (
            node(&sys, 0, "x"),
            node(&sys, 0, "y"),
            node(&sys, 0, "z"),
        );
        assert_ne!(m.label_of[x.index()], m.label_of[y.index()]);
        assert_eq!(m.rep[z.index()], x);
        assert_eq!(m.rep[y.index()], y);
    }

    #[test]
    fn deref_reads_share_a_label_but_deref_writes_do_not_taint() {
        // Two loads of the same pointer are set-equal even though the
        // pointed-at contents are unknown offline.
        let sys = system(
            "func @main() {\n\
             entry:\n  %p = alloc A\n  %u = load %p\n  %v = load %p\n  ret\n}\n",
        );
        let m = hvn(&sys);
        let (u, v) = (node(&sys, 0, "u"), node(&sys, 0, "v"));
        assert_eq!(m.label_of[u.index()], m.label_of[v.index()]);
        assert_eq!(m.rep[v.index()], u);
    }

    #[test]
    fn hu_finds_absorption_that_hvn_misses() {
        // y = x plus a seed that x already has: HU proves set(y) == set(x),
        // HVN's opaque hash cannot.
        let src = "global @g\nglobal @h\n\
                   func @main() {\n\
                   entry:\n  %x = addr @g\n  %x = addr @h\n  %y = copy %x\n  %y = addr @g\n  ret\n}\n";
        let sys = system(src);
        let (x, y) = (node(&sys, 0, "x"), node(&sys, 0, "y"));
        let mv = hvn(&sys);
        assert_ne!(mv.label_of[x.index()], mv.label_of[y.index()]);
        let mu = hu(&sys);
        assert_eq!(mu.label_of[x.index()], mu.label_of[y.index()]);
        assert!(mu.merged > mv.merged);
    }

    #[test]
    fn field_and_icall_dests_get_fresh_labels() {
        let sys = system(
            "func @id(%a) {\n\
             entry:\n  ret %a\n}\n\
             func @main() {\n\
             entry:\n  %f = addr @id\n  %x = icall %f(%f)\n  %y = icall %f(%f)\n  ret\n}\n",
        );
        let m = hvn(&sys);
        let (x, y) = (node(&sys, 1, "x"), node(&sys, 1, "y"));
        // Both receive unknown inflow; they must not merge with each other.
        assert_ne!(m.label_of[x.index()], m.label_of[y.index()]);
        assert_eq!(m.rep[x.index()], x);
        assert_eq!(m.rep[y.index()], y);
        // The address-taken callee's parameter is also pinned.
        let a = node(&sys, 0, "a");
        assert_eq!(m.rep[a.index()], a);
    }

    #[test]
    fn hcd_records_load_store_cycles() {
        // x = *p; *p = y; y = x forms a cycle through *p.
        let sys = system(
            "func @main() {\n\
             entry:\n  %p = alloc A\n  %x = load %p\n  store %y, %p\n  %y = copy %x\n  ret\n}\n",
        );
        let t = hcd(&sys);
        let p = node(&sys, 0, "p");
        let (x, y) = (node(&sys, 0, "x"), node(&sys, 0, "y"));
        assert_eq!(t.entries.len(), 1);
        let (v, rep) = t.entries[0];
        assert_eq!(v, p);
        assert_eq!(rep, if x.0 < y.0 { x } else { y });
    }

    #[test]
    fn hcd_ignores_pure_copy_cycles() {
        let sys = system(
            "func @main() {\n\
             entry:\n  %a = copy %b\n  %b = copy %a\n  %a = alloc A\n  ret\n}\n",
        );
        assert!(hcd(&sys).entries.is_empty());
    }
}
