//! Memory SSA form: versioned memory state per function.
//!
//! Local variables in the IR are plain assignments, but memory cells only
//! change through stores and calls, which makes an SSA discipline over
//! *objects* cheap to impose after the fact. Each abstract object an
//! instruction may touch gets a chain of versions:
//!
//! * version 0 (`Init`) is the state on function entry, before any write;
//! * a store or call that may write the object is a `chi`: it reads nothing
//!   and mints a fresh version;
//! * a load or call that may read the object is a `mu`: it links to exactly
//!   one reaching version;
//! * control-flow joins where different versions meet merge them in a `Phi`
//!   with one operand per reachable predecessor.
//!
//! Which objects an instruction touches comes from a solved analysis:
//! loads read through their pointer's points-to set, stores write through
//! theirs, and call sites summarize their transitive callees' reads and
//! writes. Effects of a call therefore surface *at the call site*; the
//! callee's own instructions version the callee's view separately.
//!
//! Phi placement is the classic iterated-dominance-frontier construction
//! over the function's instruction-level CFG, restricted to instructions
//! reachable from the function entry.

use crate::constraints::ObjectId;
use crate::ir::{build_cfg, InstrId, PointerModule};
use crate::query::AnalysisResult;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

use super::dom::{dominance_frontiers, dominator_tree};

/// Index into [`MemorySsa::defs`].
pub type MemDefId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemDefKind {
    /// The version live on function entry, before any write.
    Init,
    /// A may-write at a store or call instruction.
    Chi { instr: InstrId },
    /// A merge at a control-flow join, one operand per reachable
    /// predecessor of `at`.
    Phi { at: InstrId, operands: BTreeMap<InstrId, MemDefId> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemDef {
    pub object: ObjectId,
    /// Unique per object; 0 is always the `Init` def.
    pub version: u32,
    pub kind: MemDefKind,
}

/// Memory SSA of a single function.
#[derive(Debug)]
pub struct MemorySsa {
    /// Index of the function in the module.
    pub func: u32,
    /// Def arena; ids are stable and dense.
    pub defs: Vec<MemDef>,
    /// Use links: `(reader, object)` to the one reaching def. Readers are
    /// loads and call sites.
    pub mu: BTreeMap<(InstrId, ObjectId), MemDefId>,
    /// Writes: `(writer, object)` to the def it mints. Writers are stores
    /// and call sites.
    pub chi: BTreeMap<(InstrId, ObjectId), MemDefId>,
    /// Phi defs keyed by the join instruction they sit in front of.
    pub phis: BTreeMap<(InstrId, ObjectId), MemDefId>,
    /// The version-0 def of each tracked object.
    pub init: BTreeMap<ObjectId, MemDefId>,
    /// Objects the function may touch.
    pub objects: BTreeSet<ObjectId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemSsaError {
    #[error("instruction {instr} has no memory read of object {}", object.0)]
    NoMu { instr: InstrId, object: ObjectId },
}

impl MemorySsa {
    pub fn def(&self, id: MemDefId) -> &MemDef {
        &self.defs[id]
    }

    /// The non-phi defs (`Chi` or `Init`) reachable from `id` through phi
    /// operands; `id` itself when it is not a phi. These are the writes a
    /// value observed under `id` can actually come from.
    pub fn phi_closure(&self, id: MemDefId) -> BTreeSet<MemDefId> {
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(d) = stack.pop() {
            if !seen.insert(d) {
                continue;
            }
            match &self.defs[d].kind {
                MemDefKind::Phi { operands, .. } => stack.extend(operands.values().copied()),
                _ => {
                    out.insert(d);
                }
            }
        }
        out
    }
}

/// The def a load (or call) observes for `object`, or an error when the
/// instruction does not read that object at all.
pub fn memory_def_of(
    ssa: &MemorySsa,
    load: InstrId,
    object: ObjectId,
) -> Result<MemDefId, MemSsaError> {
    ssa.mu
        .get(&(load, object))
        .copied()
        .ok_or(MemSsaError::NoMu { instr: load, object })
}

/// Build the memory SSA of function `func`, with may-read/may-write sets
/// taken from `r`.
pub fn build_memory_ssa(m: &PointerModule, r: &AnalysisResult, func: u32) -> MemorySsa {
    let cfg = build_cfg(&m.functions[func as usize]);

    // Restrict to instructions reachable from the function entry; dead
    // blocks neither read nor version anything.
    let mut reach = BTreeSet::new();
    let mut stack = vec![cfg.entry];
    while let Some(n) = stack.pop() {
        if reach.insert(n) {
            stack.extend(cfg.succs(n).iter().copied());
        }
    }
    let nodes: Vec<InstrId> = cfg.nodes.iter().copied().filter(|n| reach.contains(n)).collect();
    let idx: HashMap<InstrId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let succs: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&n| cfg.succs(n).iter().filter_map(|s| idx.get(s).copied()).collect())
        .collect();

    let dt = dominator_tree(&succs, idx[&cfg.entry]);
    let df = dominance_frontiers(&succs, &dt);

    // Per-node touch sets from the analysis.
    let mut mu_objs: Vec<Vec<ObjectId>> = Vec::with_capacity(nodes.len());
    let mut chi_objs: Vec<Vec<ObjectId>> = Vec::with_capacity(nodes.len());
    let mut objects = BTreeSet::new();
    for &n in &nodes {
        let (reads, writes) = r.mod_ref(n);
        objects.extend(reads.iter().copied());
        objects.extend(writes.iter().copied());
        mu_objs.push(reads.into_iter().collect());
        chi_objs.push(writes.into_iter().collect());
    }

    let mut defs: Vec<MemDef> = Vec::new();
    let mut init = BTreeMap::new();
    let mut versions: BTreeMap<ObjectId, u32> = BTreeMap::new();
    for &o in &objects {
        init.insert(o, defs.len());
        defs.push(MemDef { object: o, version: 0, kind: MemDefKind::Init });
        versions.insert(o, 0);
    }

    // Iterated dominance frontier of each object's write sites.
    let mut phis: BTreeMap<(InstrId, ObjectId), MemDefId> = BTreeMap::new();
    for &o in &objects {
        let mut placed = BTreeSet::new();
        let mut wl: Vec<usize> =
            (0..nodes.len()).filter(|&i| chi_objs[i].contains(&o)).collect();
        while let Some(i) = wl.pop() {
            for &j in &df[i] {
                if placed.insert(j) {
                    wl.push(j);
                }
            }
        }
        for j in placed {
            let v = versions.get_mut(&o).unwrap();
            *v += 1;
            phis.insert((nodes[j], o), defs.len());
            defs.push(MemDef {
                object: o,
                version: *v,
                kind: MemDefKind::Phi { at: nodes[j], operands: BTreeMap::new() },
            });
        }
    }

    // Rename along the dominator tree. Stacks carry the live version of
    // each object; phis at a node push before its mu links resolve, chis
    // push after.
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (u, id) in dt.idom.iter().enumerate() {
        match id {
            Some(p) if *p != u => children[*p].push(u),
            _ => {}
        }
    }
    let mut stacks: BTreeMap<ObjectId, Vec<MemDefId>> =
        init.iter().map(|(&o, &d)| (o, vec![d])).collect();
    let mut mu = BTreeMap::new();
    let mut chi = BTreeMap::new();

    enum Walk {
        Enter(usize),
        Exit(Vec<ObjectId>),
    }
    let mut actions = vec![Walk::Enter(idx[&cfg.entry])];
    while let Some(a) = actions.pop() {
        match a {
            Walk::Enter(n) => {
                let at = nodes[n];
                let mut pushed = Vec::new();
                for (&(_, o), &d) in phis.range((at, ObjectId(0))..=(at, ObjectId(u32::MAX))) {
                    stacks.get_mut(&o).unwrap().push(d);
                    pushed.push(o);
                }
                for &o in &mu_objs[n] {
                    mu.insert((at, o), *stacks[&o].last().unwrap());
                }
                for &o in &chi_objs[n] {
                    let v = versions.get_mut(&o).unwrap();
                    *v += 1;
                    let d = defs.len();
                    defs.push(MemDef { object: o, version: *v, kind: MemDefKind::Chi { instr: at } });
                    chi.insert((at, o), d);
                    stacks.get_mut(&o).unwrap().push(d);
                    pushed.push(o);
                }
                for &s in &succs[n] {
                    let sat = nodes[s];
                    let ids: Vec<(ObjectId, MemDefId)> = phis
                        .range((sat, ObjectId(0))..=(sat, ObjectId(u32::MAX)))
                        .map(|(&(_, o), &d)| (o, d))
                        .collect();
                    for (o, d) in ids {
                        let top = *stacks[&o].last().unwrap();
                        let MemDefKind::Phi { operands, .. } = &mut defs[d].kind else {
                            unreachable!("phi arena entry")
                        };
                        operands.insert(at, top);
                    }
                }
                actions.push(Walk::Exit(pushed));
                for &c in children[n].iter().rev() {
                    actions.push(Walk::Enter(c));
                }
            }
            Walk::Exit(pushed) => {
                for o in pushed {
                    stacks.get_mut(&o).unwrap().pop();
                }
            }
        }
    }

    MemorySsa { func, defs, mu, chi, phis, init, objects }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::andersen::{solve, SolverConfig};
    use crate::constraints::generate;
    use crate::generate::{generate_program, GenConfig};
    use crate::ir::{parse_module, InstrKind, MAX_FIELD};

    fn result(src: &str) -> (PointerModule, AnalysisResult) {
        let m = parse_module(src).expect("parse");
        let sys = generate(&m, MAX_FIELD);
        let sol = solve(&sys, &SolverConfig::reference()).expect("solve");
        let r = AnalysisResult::from_inclusion(&m, sol);
        (m, r)
    }

    fn obj(r: &AnalysisResult, display: &str) -> ObjectId {
        r.table.object_by_display(display).expect("object")
    }

    #[test]
    fn store_then_load_links_the_load_to_the_chi() {
        let (m, r) = result(
            "func @main() {
entry:
  %v = alloc B
  %p = alloc A
  store %v, %p
  %q = load %p
  ret
}
",
        );
        let ssa = build_memory_ssa(&m, &r, 0);
        let a = obj(&r, "alloc:main.entry.1");
        let b = obj(&r, "alloc:main.entry.0");

        let d = memory_def_of(&ssa, InstrId(3), a).expect("linked");
        assert_eq!(ssa.def(d).kind, MemDefKind::Chi { instr: InstrId(2) });
        assert_eq!(ssa.def(d).version, 1);
        assert_eq!(ssa.chi[&(InstrId(2), a)], d);
        assert_eq!(
            memory_def_of(&ssa, InstrId(3), b),
            Err(MemSsaError::NoMu { instr: InstrId(3), object: b })
        );
    }

    #[test]
    fn branch_arms_meet_in_a_phi() {
        let (m, r) = result(
            "func @main() {
entry:
  %v = alloc B
  %p = alloc A
  br l, r
l:
  store %v, %p
  br j
r:
  br j
j:
  %q = load %p
  ret
}
",
        );
        let ssa = build_memory_ssa(&m, &r, 0);
        let a = obj(&r, "alloc:main.entry.1");

        // The load at the join reads a phi merging the stored version from
        // the left arm with the initial version from the right.
        let d = memory_def_of(&ssa, InstrId(6), a).expect("linked");
        let MemDefKind::Phi { at, operands } = &ssa.def(d).kind else {
            panic!("expected phi, got {:?}", ssa.def(d))
        };
        assert_eq!(*at, InstrId(6));
        let store_chi = ssa.chi[&(InstrId(3), a)];
        assert_eq!(operands[&InstrId(4)], store_chi);
        assert_eq!(operands[&InstrId(5)], ssa.init[&a]);
        assert_eq!(
            ssa.phi_closure(d),
            [store_chi, ssa.init[&a]].into_iter().collect::<BTreeSet<_>>()
        );
    }

    #[test]
    fn unwritten_objects_read_the_initial_version() {
        let (m, r) = result(
            "func @main() {
entry:
  %p = alloc A
  %q = load %p
  ret
}
",
        );
        let ssa = build_memory_ssa(&m, &r, 0);
        let a = obj(&r, "alloc:main.entry.0");
        let d = memory_def_of(&ssa, InstrId(1), a).expect("linked");
        assert_eq!(ssa.def(d).kind, MemDefKind::Init);
        assert_eq!(ssa.def(d).version, 0);
    }

    #[test]
    fn call_sites_summarize_their_callees() {
        let (m, r) = result(
            "func @main() {
entry:
  %a = alloc A
  %r = call @w(%a)
  %x = load %a
  ret
}
func @w(%p) {
entry:
  %y = load %p
  %t = alloc T
  store %t, %p
  ret %y
}
",
        );
        let ssa = build_memory_ssa(&m, &r, 0);
        let a = obj(&r, "alloc:main.entry.0");

        // The callee both loads and stores through %p, so the call site
        // carries a mu (of the initial version) and a chi; the later load
        // observes the call's write.
        assert_eq!(ssa.mu[&(InstrId(1), a)], ssa.init[&a]);
        let call_chi = ssa.chi[&(InstrId(1), a)];
        assert_eq!(memory_def_of(&ssa, InstrId(2), a), Ok(call_chi));

        // Inside the callee the store versions the callee's own view.
        let wssa = build_memory_ssa(&m, &r, 1);
        assert_eq!(wssa.mu[&(InstrId(4), a)], wssa.init[&a]);
        assert_eq!(wssa.def(wssa.chi[&(InstrId(6), a)]).kind, MemDefKind::Chi { instr: InstrId(6) });
    }

    /// Reachable nodes and dense successor lists of one function's CFG,
    /// recomputed directly for oracle use.
    fn reach_graph(m: &PointerModule, f: usize) -> (Vec<InstrId>, Vec<Vec<usize>>) {
        let cfg = build_cfg(&m.functions[f]);
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
        let succs = nodes
            .iter()
            .map(|&n| cfg.succs(n).iter().filter_map(|s| idx.get(s).copied()).collect())
            .collect();
        (nodes, succs)
    }

    /// All simple paths `from -> to` as node-index sequences.
    fn simple_paths(succs: &[Vec<usize>], from: usize, to: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = vec![vec![from]];
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            if last == to {
                out.push(path);
                continue;
            }
            for &s in &succs[last] {
                if !path.contains(&s) {
                    let mut p = path.clone();
                    p.push(s);
                    stack.push(p);
                }
            }
        }
        out
    }

    fn small_gen(seed: u64) -> GenConfig {
        GenConfig {
            seed,
            globals: 2,
            funcs: 3,
            vars_per_func: 4,
            blocks_per_func: 4,
            instrs_per_block: 3,
            ..Default::default()
        }
    }

    #[test]
    fn links_and_versions_satisfy_the_ssa_invariants() {
        for seed in 0..15 {
            let m = parse_module(&generate_program(&small_gen(seed))).expect("parse");
            let sys = generate(&m, MAX_FIELD);
            let sol = solve(&sys, &SolverConfig::reference()).expect("solve");
            let r = AnalysisResult::from_inclusion(&m, sol);

            for f in 0..m.functions.len() {
                let ssa = build_memory_ssa(&m, &r, f as u32);
                let (nodes, succs) = reach_graph(&m, f);
                let node_set: BTreeSet<InstrId> = nodes.iter().copied().collect();
                let mut preds: BTreeMap<InstrId, BTreeSet<InstrId>> = BTreeMap::new();
                for (u, ss) in succs.iter().enumerate() {
                    for &v in ss {
                        preds.entry(nodes[v]).or_default().insert(nodes[u]);
                    }
                }

                // Versions are single-assignment per object.
                let mut seen = BTreeSet::new();
                for d in &ssa.defs {
                    assert!(seen.insert((d.object, d.version)), "seed {seed}: duplicate version");
                    assert_eq!(d.version == 0, d.kind == MemDefKind::Init);
                }

                // Every reachable reader links every object it may read to
                // exactly one existing def of that object.
                for &n in &nodes {
                    let (reads, writes) = r.mod_ref(n);
                    for o in reads {
                        let d = memory_def_of(&ssa, n, o).expect("read is linked");
                        assert_eq!(ssa.def(d).object, o);
                    }
                    for o in writes {
                        let d = ssa.chi[&(n, o)];
                        assert_eq!(ssa.def(d).kind, MemDefKind::Chi { instr: n });
                    }
                }

                // Links stay inside the reachable region, chis sit on
                // stores and calls, and phi operands cover exactly the
                // reachable predecessors of their join.
                for (&(n, _), _) in ssa.mu.iter().chain(ssa.chi.iter()) {
                    assert!(node_set.contains(&n), "seed {seed}: link outside reachable region");
                }
                for (&(n, _), &d) in &ssa.chi {
                    assert!(
                        matches!(
                            m.instr(n).kind,
                            InstrKind::Store { .. } | InstrKind::Call { .. } | InstrKind::ICall { .. }
                        ),
                        "seed {seed}: chi on {:?}",
                        m.instr(n).kind
                    );
                    assert_eq!(ssa.defs[d].kind, MemDefKind::Chi { instr: n });
                }
                for (&(n, o), &d) in &ssa.phis {
                    let MemDefKind::Phi { at, operands } = &ssa.defs[d].kind else {
                        panic!("phi map points at non-phi")
                    };
                    assert_eq!(*at, n);
                    let ps = preds.get(&n).cloned().unwrap_or_default();
                    assert!(ps.len() >= 2, "seed {seed}: phi at non-join");
                    assert_eq!(
                        operands.keys().copied().collect::<BTreeSet<_>>(),
                        ps,
                        "seed {seed}: operands vs predecessors at {n}"
                    );
                    for &op in operands.values() {
                        assert_eq!(ssa.defs[op].object, o);
                    }
                }
            }
        }
    }

    #[test]
    fn linked_defs_dominate_their_readers() {
        for seed in 0..15 {
            let m = parse_module(&generate_program(&small_gen(seed))).expect("parse");
            let sys = generate(&m, MAX_FIELD);
            let sol = solve(&sys, &SolverConfig::reference()).expect("solve");
            let r = AnalysisResult::from_inclusion(&m, sol);

            for f in 0..m.functions.len() {
                let (nodes, succs) = reach_graph(&m, f);
                if nodes.len() > 14 {
                    continue;
                }
                let idx: HashMap<InstrId, usize> =
                    nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
                let ssa = build_memory_ssa(&m, &r, f as u32);

                for (&(reader, _), &d) in &ssa.mu {
                    let site = match &ssa.def(d).kind {
                        MemDefKind::Init => continue,
                        MemDefKind::Chi { instr } => *instr,
                        MemDefKind::Phi { at, .. } => *at,
                    };
                    // Dominance, checked the long way: every simple path
                    // from entry to the reader goes through the def site.
                    for path in simple_paths(&succs, 0, idx[&reader]) {
                        assert!(
                            path.contains(&idx[&site]),
                            "seed {seed}: def {site} misses a path to {reader}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn every_paths_last_write_is_phi_reachable() {
        for seed in 0..15 {
            let m = parse_module(&generate_program(&small_gen(seed))).expect("parse");
            let sys = generate(&m, MAX_FIELD);
            let sol = solve(&sys, &SolverConfig::reference()).expect("solve");
            let r = AnalysisResult::from_inclusion(&m, sol);

            for f in 0..m.functions.len() {
                let (nodes, succs) = reach_graph(&m, f);
                if nodes.len() > 14 {
                    continue;
                }
                let idx: HashMap<InstrId, usize> =
                    nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
                let ssa = build_memory_ssa(&m, &r, f as u32);

                // Whatever write is last on a path into the reader must be
                // among the defs the link can stand for; otherwise a loaded
                // value could bypass its own def chain.
                for (&(reader, o), &d) in &ssa.mu {
                    let closure = ssa.phi_closure(d);
                    for path in simple_paths(&succs, 0, idx[&reader]) {
                        let last = path[..path.len() - 1]
                            .iter()
                            .rev()
                            .find_map(|&i| ssa.chi.get(&(nodes[i], o)));
                        let want = match last {
                            Some(&c) => c,
                            None => ssa.init[&o],
                        };
                        assert!(
                            closure.contains(&want),
                            "seed {seed}: path write {want} not covered by link of ({reader}, {o:?})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let m = parse_module(&generate_program(&small_gen(7))).expect("parse");
        let sys = generate(&m, MAX_FIELD);
        let sol = solve(&sys, &SolverConfig::reference()).expect("solve");
        let r = AnalysisResult::from_inclusion(&m, sol);
        let a = format!("{:?}", build_memory_ssa(&m, &r, 0));
        let b = format!("{:?}", build_memory_ssa(&m, &r, 0));
        assert_eq!(a, b);
    }
}
