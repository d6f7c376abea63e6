//! Call-string context sensitivity for the inclusion analysis.
//!
//! The analysis clones the constraint system: every function gets one copy
//! of its variables per call-string suffix of length at most `k`, and every
//! allocation site yields one abstract object per context of its function
//! (heap cloning). The cloned system is flow-insensitive and solved by the
//! ordinary inclusion solver.
//!
//! Indirect calls need care: which contexts a function-pointer set reaches
//! is itself an analysis result. The driver loop therefore alternates
//! solving and discovery — clone for the contexts known so far, solve with
//! indirect sites unbound, read the function-pointer sets, bind the
//! discovered (site, context, target) triples as explicit parameter and
//! return copies, and repeat until no new binding appears. Each round
//! rebuilds and re-solves from scratch, so the inner solver may use any
//! optimization configuration without invalidating the loop.
//!
//! Every function is additionally seeded at the empty context, which keeps
//! the clone set closed under the projection that drops context — useful
//! both for comparisons against the context-insensitive answer and for
//! functions only reachable through pointers.

use crate::andersen::{solve, SolveError, SolverConfig};
use crate::constraints::{
    Constraint, ConstraintSystem, FuncMeta, NodeId, NodeKind, NodeTable, ObjOrigin, ObjectId,
};
use crate::ir::{InstrId, InstrKind, PointerModule};
use crate::sensitivity::{push_site, Ctx};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

use super::flow::{pack, unpack};

pub const DEFAULT_CLONE_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct KcfaConfig {
    /// Call-string depth.
    pub k: usize,
    /// Budget on synthesized nodes per round.
    pub max_clones: u64,
    /// Configuration for the inner inclusion solves.
    pub solver: SolverConfig,
}

impl Default for KcfaConfig {
    fn default() -> Self {
        KcfaConfig { k: 1, max_clones: DEFAULT_CLONE_BUDGET, solver: SolverConfig::default() }
    }
}

#[derive(Debug, Error)]
pub enum KcfaError {
    #[error("context cloning needs {needed} nodes, budget is {budget}")]
    CloneBudget { needed: u64, budget: u64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Default)]
pub struct KcfaStats {
    /// Solve/discover rounds until the binding set stabilized.
    pub iterations: u64,
    pub contexts: u64,
    /// Node count of the final synthesized table.
    pub synth_nodes: u64,
    pub millis: u64,
}

impl KcfaStats {
    pub fn display_line(&self) -> String {
        format!(
            "iterations={}, contexts={}, synth_nodes={}, millis={}",
            self.iterations, self.contexts, self.synth_nodes, self.millis
        )
    }
}

#[derive(Debug)]
pub struct KcfaResult {
    pub k: usize,
    /// The original (core) table; all reported ids live in it.
    pub table: Arc<NodeTable>,
    /// Interned contexts; index 0 is the empty context.
    pub contexts: Vec<Ctx>,
    ctx_lookup: HashMap<Ctx, u32>,
    /// (function, context tag) clones analyzed.
    pub clones: BTreeSet<(u32, u32)>,
    /// Packed `(ctx, core node)` to packed `(obj ctx, core element)` sets;
    /// variable, return, and element nodes alike.
    sets: BTreeMap<u64, BTreeSet<u64>>,
    /// Context-dropping call graph, direct edges included.
    pub call_graph: BTreeMap<InstrId, BTreeSet<u32>>,
    /// (site, caller ctx) to (callee, callee ctx), indirect edges only.
    pub ctx_call_graph: BTreeMap<(InstrId, u32), BTreeSet<(u32, u32)>>,
    pub warnings: Vec<String>,
    pub stats: KcfaStats,
}

impl KcfaResult {
    pub fn ctx_tag(&self, ctx: &[InstrId]) -> Option<u32> {
        self.ctx_lookup.get(ctx).copied()
    }

    pub fn context(&self, tag: u32) -> &[InstrId] {
        &self.contexts[tag as usize]
    }

    pub fn pts_tag(&self, node: NodeId, tag: u32) -> BTreeSet<u64> {
        self.sets.get(&pack(tag, node)).cloned().unwrap_or_default()
    }

    /// Points-to set of a node under a context, empty when the context was
    /// never materialized.
    pub fn pts(&self, node: NodeId, ctx: &[InstrId]) -> BTreeSet<u64> {
        self.ctx_tag(ctx).map(|t| self.pts_tag(node, t)).unwrap_or_default()
    }

    /// Drop all contexts: per core node, the union of its clones' sets as
    /// core element ids.
    pub fn project_ci(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let mut out: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for (&key, set) in &self.sets {
            out.entry(unpack(key).1)
                .or_default()
                .extend(set.iter().map(|&e| unpack(e).1));
        }
        out
    }
}

struct Builder<'a> {
    m: &'a PointerModule,
    orig: &'a Arc<NodeTable>,
    k: usize,
    /// Variable and return nodes per function, ascending.
    func_nodes: Vec<Vec<NodeId>>,
    /// Allocation sites per function: (site, label, per-object field cost).
    alloc_sites: Vec<Vec<(InstrId, String)>>,
    globals: Vec<String>,
    contexts: Vec<Ctx>,
    ctx_lookup: HashMap<Ctx, u32>,
}

impl<'a> Builder<'a> {
    fn intern(&mut self, ctx: Ctx) -> u32 {
        if let Some(&t) = self.ctx_lookup.get(&ctx) {
            return t;
        }
        let t = self.contexts.len() as u32;
        self.contexts.push(ctx.clone());
        self.ctx_lookup.insert(ctx, t);
        t
    }

    fn extend_ctx(&mut self, tag: u32, site: InstrId) -> u32 {
        let next = push_site(&self.contexts[tag as usize].clone(), site, self.k);
        self.intern(next)
    }

    /// Close the clone set under direct calls and the current indirect
    /// bindings.
    fn clone_closure(
        &mut self,
        bindings: &BTreeSet<(InstrId, u32, u32)>,
    ) -> BTreeSet<(u32, u32)> {
        let m = self.m;
        let orig = self.orig;
        let mut clones: BTreeSet<(u32, u32)> =
            (0..m.functions.len() as u32).map(|f| (f, 0)).collect();
        let mut queue: VecDeque<(u32, u32)> = clones.iter().copied().collect();
        while let Some((f, tag)) = queue.pop_front() {
            for b in &m.functions[f as usize].blocks {
                for i in &b.instrs {
                    match &i.kind {
                        InstrKind::Call { callee, .. } => {
                            let g = orig.function_by_name(callee).expect("callee");
                            let ntag = self.extend_ctx(tag, i.id);
                            if clones.insert((g, ntag)) {
                                queue.push_back((g, ntag));
                            }
                        }
                        InstrKind::ICall { .. } => {
                            let lo = (i.id, tag, 0u32);
                            let hi = (i.id, tag, u32::MAX);
                            for &(_, _, t) in bindings.range(lo..=hi) {
                                let ntag = self.extend_ctx(tag, i.id);
                                if clones.insert((t, ntag)) {
                                    queue.push_back((t, ntag));
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        clones
    }

    fn synth_cost(&self, clones: &BTreeSet<(u32, u32)>) -> u64 {
        let per_obj = self.orig.offsets().len() as u64;
        let statics = (self.globals.len() + self.m.functions.len()) as u64 * per_obj;
        statics
            + clones
                .iter()
                .map(|&(f, _)| {
                    self.func_nodes[f as usize].len() as u64
                        + self.alloc_sites[f as usize].len() as u64 * per_obj
                })
                .sum::<u64>()
    }

    /// Build the synthesized table and constraint system for one round.
    fn build(
        &mut self,
        clones: &BTreeSet<(u32, u32)>,
        bindings: &BTreeSet<(InstrId, u32, u32)>,
    ) -> (ConstraintSystem, HashMap<(u32, u32), NodeId>) {
        let m = self.m;
        let orig = self.orig;
        let mut b = NodeTable::builder(orig.offsets().to_vec(), orig.max_field);
        for (fi, meta) in orig.functions.iter().enumerate() {
            let obj = b.add_object(
                ObjOrigin::Function { func: fi as u32 },
                0,
                format!("@{}", meta.name),
            );
            b.add_function(FuncMeta {
                name: meta.name.clone(),
                arity: meta.arity,
                object: obj,
                param_nodes: Vec::new(),
                ret_node: None,
            });
        }
        for g in &self.globals {
            b.add_object(ObjOrigin::Global { name: g.clone() }, 0, format!("@{g}"));
        }
        let mut synth_var: HashMap<(u32, u32), NodeId> = HashMap::new();
        let mut synth_alloc: HashMap<(InstrId, u32), ObjectId> = HashMap::new();
        for &(f, tag) in clones {
            for &n in &self.func_nodes[f as usize] {
                let display = format!("{}~c{}", orig.display(n), tag);
                synth_var.insert((n.0, tag), b.add_raw_var(f, display));
            }
            for (site, label) in &self.alloc_sites[f as usize] {
                let core = format!("alloc:{}", m.instr_name(*site));
                let display = if tag == 0 { core } else { format!("{core}~c{tag}") };
                let obj = b.add_object(
                    ObjOrigin::Alloc { site: *site, label: label.clone() },
                    tag,
                    display,
                );
                synth_alloc.insert((*site, tag), obj);
            }
        }
        let table = Arc::new(b.finish());

        let mut constraints: Vec<Constraint> = Vec::new();
        let mut seen: HashSet<Constraint> = HashSet::new();
        for &(f, tag) in clones {
            let sv = |name: &str| {
                let core = orig.var_node(f, name).expect("registered variable");
                synth_var[&(core.0, tag)]
            };
            let sret = |func: u32, t: u32| {
                let core = orig.functions[func as usize].ret_node.expect("ret node");
                synth_var[&(core.0, t)]
            };
            let mut push = |c: Constraint| {
                if seen.insert(c) {
                    constraints.push(c);
                }
            };
            // Direct-call context extension cannot go through `self` while
            // the closures above borrow the clone maps, so the interning is
            // inlined against the builder's context tables.
            let k = self.k;
            let extend = |contexts: &mut Vec<Ctx>,
                              lookup: &mut HashMap<Ctx, u32>,
                              site: InstrId| {
                let next = push_site(&contexts[tag as usize], site, k);
                if let Some(&t) = lookup.get(&next) {
                    return t;
                }
                let t = contexts.len() as u32;
                contexts.push(next.clone());
                lookup.insert(next, t);
                t
            };
            for blk in &m.functions[f as usize].blocks {
                for i in &blk.instrs {
                    let dest = i.dest.as_deref();
                    match &i.kind {
                        InstrKind::Alloc { .. } => {
                            let obj = synth_alloc[&(i.id, tag)];
                            push(Constraint::AddrOf {
                                dst: sv(dest.unwrap()),
                                elem: table.objfield(obj, 0),
                            });
                        }
                        InstrKind::Addr { symbol } => {
                            let obj = table
                                .object_by_display(&format!("@{symbol}"))
                                .expect("validated symbol");
                            push(Constraint::AddrOf {
                                dst: sv(dest.unwrap()),
                                elem: table.objfield(obj, 0),
                            });
                        }
                        InstrKind::Copy { src } => {
                            push(Constraint::Copy { dst: sv(dest.unwrap()), src: sv(src) });
                        }
                        InstrKind::Load { ptr } => {
                            push(Constraint::Load { dst: sv(dest.unwrap()), ptr: sv(ptr) });
                        }
                        InstrKind::Store { value, ptr } => {
                            push(Constraint::Store { src: sv(value), ptr: sv(ptr) });
                        }
                        InstrKind::Field { base, index } => {
                            push(Constraint::Field {
                                dst: sv(dest.unwrap()),
                                base: sv(base),
                                offset: orig.collapse_offset(*index),
                            });
                        }
                        InstrKind::Call { callee, args } => {
                            let g = orig.function_by_name(callee).expect("callee");
                            let ntag = extend(&mut self.contexts, &mut self.ctx_lookup, i.id);
                            for (p, a) in orig.functions[g as usize].param_nodes.iter().zip(args)
                            {
                                push(Constraint::Copy {
                                    dst: synth_var[&(p.0, ntag)],
                                    src: sv(a),
                                });
                            }
                            if let Some(d) = dest {
                                push(Constraint::Copy { dst: sv(d), src: sret(g, ntag) });
                            }
                        }
                        InstrKind::ICall { args, .. } => {
                            let lo = (i.id, tag, 0u32);
                            let hi = (i.id, tag, u32::MAX);
                            for &(_, _, t) in bindings.range(lo..=hi) {
                                let ntag =
                                    extend(&mut self.contexts, &mut self.ctx_lookup, i.id);
                                for (p, a) in
                                    orig.functions[t as usize].param_nodes.iter().zip(args)
                                {
                                    push(Constraint::Copy {
                                        dst: synth_var[&(p.0, ntag)],
                                        src: sv(a),
                                    });
                                }
                                if let Some(d) = dest {
                                    push(Constraint::Copy { dst: sv(d), src: sret(t, ntag) });
                                }
                            }
                        }
                        InstrKind::Ret { value } => {
                            if let Some(v) = value {
                                push(Constraint::Copy { dst: sret(f, tag), src: sv(v) });
                            }
                        }
                        InstrKind::Br { .. } => {}
                    }
                }
            }
        }
        (ConstraintSystem::from_parts(table, constraints), synth_var)
    }
}

/// Run the k-CFA analysis over a lowered module.
pub fn solve_kcfa(
    m: &PointerModule,
    sys: &ConstraintSystem,
    cfg: &KcfaConfig,
) -> Result<KcfaResult, KcfaError> {
    let started = Instant::now();
    let orig = &sys.table;

    let mut func_nodes: Vec<Vec<NodeId>> = vec![Vec::new(); m.functions.len()];
    for n in 0..orig.node_count() as u32 {
        match *orig.kind(NodeId(n)) {
            NodeKind::Var { func } | NodeKind::Ret { func } => {
                func_nodes[func as usize].push(NodeId(n));
            }
            NodeKind::ObjField { .. } => {}
        }
    }
    let mut site_func: HashMap<InstrId, u32> = HashMap::new();
    for (fi, f) in m.functions.iter().enumerate() {
        for b in &f.blocks {
            for i in &b.instrs {
                site_func.insert(i.id, fi as u32);
            }
        }
    }
    let mut alloc_sites: Vec<Vec<(InstrId, String)>> = vec![Vec::new(); m.functions.len()];
    let mut globals = Vec::new();
    for o in 0..orig.object_count() {
        match &orig.object(ObjectId(o as u32)).origin {
            ObjOrigin::Alloc { site, label } => {
                alloc_sites[site_func[site] as usize].push((*site, label.clone()));
            }
            ObjOrigin::Global { name } => globals.push(name.clone()),
            ObjOrigin::Function { .. } => {}
        }
    }

    let mut builder = Builder {
        m,
        orig,
        k: cfg.k,
        func_nodes,
        alloc_sites,
        globals,
        contexts: vec![Vec::new()],
        ctx_lookup: HashMap::from([(Vec::new(), 0)]),
    };

    let mut bindings: BTreeSet<(InstrId, u32, u32)> = BTreeSet::new();
    let mut warned: BTreeSet<(InstrId, u32)> = BTreeSet::new();
    let mut warnings = Vec::new();
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        let clones = builder.clone_closure(&bindings);
        let needed = builder.synth_cost(&clones);
        if needed > cfg.max_clones {
            return Err(KcfaError::CloneBudget { needed, budget: cfg.max_clones });
        }
        let (synth_sys, synth_var) = builder.build(&clones, &bindings);
        let sol = solve(&synth_sys, &cfg.solver)?;

        let mut new_any = false;
        for &(f, tag) in &clones {
            for b in &m.functions[f as usize].blocks {
                for i in &b.instrs {
                    let InstrKind::ICall { fnptr, args } = &i.kind else { continue };
                    let nf = orig.var_node(f, fnptr).expect("registered fnptr");
                    for elem in sol.points_to(synth_var[&(nf.0, tag)]) {
                        let Some(t) = synth_sys.table.callable_target(elem) else {
                            continue;
                        };
                        if orig.functions[t as usize].arity != args.len() {
                            if warned.insert((i.id, t)) {
                                warnings.push(format!(
                                    "icall {} passes {} argument(s) but @{} takes {}; target skipped",
                                    m.instr_name(i.id),
                                    args.len(),
                                    orig.functions[t as usize].name,
                                    orig.functions[t as usize].arity
                                ));
                            }
                            continue;
                        }
                        if bindings.insert((i.id, tag, t)) {
                            new_any = true;
                        }
                    }
                }
            }
        }
        if new_any {
            continue;
        }

        // Stable: extract the solution in core-table terms.
        let map_obj = |info: &crate::constraints::ObjectInfo| -> (ObjectId, u32) {
            match &info.origin {
                ObjOrigin::Alloc { site, .. } => {
                    (orig.alloc_object(*site).expect("core object"), info.ctx)
                }
                ObjOrigin::Global { name } => (
                    orig.object_by_display(&format!("@{name}")).expect("core global"),
                    0,
                ),
                ObjOrigin::Function { func } => (orig.functions[*func as usize].object, 0),
            }
        };
        let map_elem = |e: NodeId| -> u64 {
            let (sobj, field) = synth_sys.table.elem_parts(e);
            let (cobj, otag) = map_obj(synth_sys.table.object(sobj));
            pack(otag, orig.objfield(cobj, field))
        };
        let mut sets: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
        for (&(core, tag), &synth) in &synth_var {
            sets.insert(
                pack(tag, NodeId(core)),
                sol.points_to(synth).into_iter().map(map_elem).collect(),
            );
        }
        for o in 0..synth_sys.table.object_count() as u32 {
            let (cobj, otag) = map_obj(synth_sys.table.object(ObjectId(o)));
            for &off in synth_sys.table.offsets() {
                let selem = synth_sys.table.objfield(ObjectId(o), off);
                let key = pack(otag, orig.objfield(cobj, off));
                sets.insert(key, sol.points_to(selem).into_iter().map(map_elem).collect());
            }
        }

        let mut call_graph: BTreeMap<InstrId, BTreeSet<u32>> = BTreeMap::new();
        for &(site, f) in &sys.direct_calls {
            call_graph.entry(site).or_default().insert(f);
        }
        let mut ctx_call_graph: BTreeMap<(InstrId, u32), BTreeSet<(u32, u32)>> = BTreeMap::new();
        for &(site, tag, t) in &bindings {
            call_graph.entry(site).or_default().insert(t);
            let ntag = builder.extend_ctx(tag, site);
            ctx_call_graph.entry((site, tag)).or_default().insert((t, ntag));
        }

        let stats = KcfaStats {
            iterations,
            contexts: builder.contexts.len() as u64,
            synth_nodes: synth_sys.table.node_count() as u64,
            millis: started.elapsed().as_millis() as u64,
        };
        return Ok(KcfaResult {
            k: cfg.k,
            table: orig.clone(),
            contexts: builder.contexts,
            ctx_lookup: builder.ctx_lookup,
            clones,
            sets,
            call_graph,
            ctx_call_graph,
            warnings,
            stats,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::andersen::{solve as ci_solve, SolverConfig};
    use crate::constraints::generate;
    use crate::generate::{generate_program, GenConfig};
    use crate::interp::{run, InterpConfig};
    use crate::ir::{parse_module, MAX_FIELD};
    use crate::sensitivity::suffix;

    fn analyze(src: &str, k: usize) -> (crate::constraints::ConstraintSystem, KcfaResult) {
        let m = parse_module(src).expect("parse");
        let sys = generate(&m, MAX_FIELD);
        let r = solve_kcfa(&m, &sys, &KcfaConfig { k, ..KcfaConfig::default() }).expect("kcfa");
        (sys, r)
    }

    fn cores(set: &BTreeSet<u64>) -> BTreeSet<NodeId> {
        set.iter().map(|&e| unpack(e).1).collect()
    }

    fn elem(sys: &crate::constraints::ConstraintSystem, display: &str) -> NodeId {
        sys.table.objfield(sys.table.object_by_display(display).expect("object"), 0)
    }

    const ID_SRC: &str = "func @id(%v) {\n entry:\n  ret %v\n}\n\
         func @main() {\n\
         entry:\n  %a = alloc A\n  %b = alloc B\n\
           %x = call @id(%a)\n  %y = call @id(%b)\n  ret\n}\n";

    #[test]
    fn one_level_contexts_split_the_identity_function() {
        let (sys, r) = analyze(ID_SRC, 1);
        let x = sys.table.var_node(1, "x").unwrap();
        let y = sys.table.var_node(1, "y").unwrap();
        let a = elem(&sys, "alloc:main.entry.0");
        let b = elem(&sys, "alloc:main.entry.1");
        assert_eq!(cores(&r.pts(x, &[])), BTreeSet::from([a]));
        assert_eq!(cores(&r.pts(y, &[])), BTreeSet::from([b]));
        // Context-insensitively the two flows merge.
        let (sys0, r0) = analyze(ID_SRC, 0);
        let x0 = sys0.table.var_node(1, "x").unwrap();
        assert_eq!(r0.pts(x0, &[]).len(), 2);
    }

    #[test]
    fn heap_cloning_separates_per_site_allocations() {
        let src = "func @make() {\n entry:\n  %c = alloc Cell\n  ret %c\n}\n\
             func @main() {\n\
             entry:\n  %p = call @make()\n  %q = call @make()\n\
               %a = alloc A\n  %b = alloc B\n\
               store %a, %p\n  store %b, %q\n  %r = load %p\n  ret\n}\n";
        let (sys, r) = analyze(src, 1);
        let rv = sys.table.var_node(1, "r").unwrap();
        assert_eq!(
            cores(&r.pts(rv, &[])),
            BTreeSet::from([elem(&sys, "alloc:main.entry.2")]),
            "the q store lands in the other Cell clone"
        );
        let (sys0, r0) = analyze(src, 0);
        let rv0 = sys0.table.var_node(1, "r").unwrap();
        assert_eq!(r0.pts(rv0, &[]).len(), 2);
    }

    #[test]
    fn indirect_targets_are_discovered_per_context() {
        let src = "func @a() {\n entry:\n  %o = alloc OA\n  ret %o\n}\n\
             func @b() {\n entry:\n  %o = alloc OB\n  ret %o\n}\n\
             func @call_it(%f) {\n entry:\n  %r = icall %f()\n  ret %r\n}\n\
             func @main() {\n\
             entry:\n  %fa = addr @a\n  %fb = addr @b\n\
               %x = call @call_it(%fa)\n  %y = call @call_it(%fb)\n  ret\n}\n";
        let (sys, r) = analyze(src, 1);
        let x = sys.table.var_node(3, "x").unwrap();
        let y = sys.table.var_node(3, "y").unwrap();
        assert_eq!(cores(&r.pts(x, &[])), BTreeSet::from([elem(&sys, "alloc:a.entry.0")]));
        assert_eq!(cores(&r.pts(y, &[])), BTreeSet::from([elem(&sys, "alloc:b.entry.0")]));
        // Projected call graph has both targets; contextual edges split.
        assert_eq!(r.call_graph[&InstrId(4)], BTreeSet::from([0, 1]));
        let per_ctx: Vec<&BTreeSet<(u32, u32)>> = r
            .ctx_call_graph
            .iter()
            .filter(|((site, _), _)| *site == InstrId(4))
            .map(|(_, t)| t)
            .collect();
        assert_eq!(per_ctx.len(), 2);
        assert!(per_ctx.iter().all(|s| s.len() == 1));
        assert!(r.stats.iterations >= 2, "binding discovery needs a second round");
    }

    #[test]
    fn k0_matches_the_context_insensitive_solution() {
        for seed in 0..12u64 {
            let gen = GenConfig { seed: 0xCFA0 + seed, funcs: 4, ..GenConfig::default() };
            let m = parse_module(&generate_program(&gen)).expect("parse");
            let sys = generate(&m, MAX_FIELD);
            let ci = ci_solve(&sys, &SolverConfig::reference()).expect("solve");
            let r = solve_kcfa(&m, &sys, &KcfaConfig { k: 0, ..Default::default() }).expect("kcfa");
            let proj = r.project_ci();
            for (v, elems) in ci.expanded() {
                let got = proj.get(&v).cloned().unwrap_or_default();
                let want: BTreeSet<NodeId> = elems.into_iter().collect();
                assert_eq!(got, want, "seed {seed}: {}", sys.table.display(v));
            }
        }
    }

    #[test]
    fn projection_refines_the_context_insensitive_answer() {
        for seed in 0..12u64 {
            let gen = GenConfig { seed: 0xCFA + seed, funcs: 4, ..GenConfig::default() };
            let m = parse_module(&generate_program(&gen)).expect("parse");
            let sys = generate(&m, MAX_FIELD);
            let ci = ci_solve(&sys, &SolverConfig::reference()).expect("solve");
            let r = solve_kcfa(&m, &sys, &KcfaConfig { k: 2, ..Default::default() }).expect("kcfa");
            for (v, set) in r.project_ci() {
                let base: BTreeSet<NodeId> = ci.points_to(v).into_iter().collect();
                assert!(
                    set.is_subset(&base),
                    "seed {seed}: projected {} exceeds the base answer",
                    sys.table.display(v)
                );
            }
        }
    }

    #[test]
    fn observed_facts_are_covered_under_context_suffixes() {
        for seed in 0..10u64 {
            let gen = GenConfig { seed: 0x0CFA + seed, funcs: 4, ..GenConfig::default() };
            let m = parse_module(&generate_program(&gen)).expect("parse");
            let sys = generate(&m, MAX_FIELD);
            for k in [1usize, 2] {
                let r = solve_kcfa(&m, &sys, &KcfaConfig { k, ..Default::default() })
                    .expect("kcfa");
                for run_seed in 0..3 {
                    let t = run(
                        &m,
                        &sys.table,
                        &InterpConfig { seed: run_seed, max_steps: 30_000, ..Default::default() },
                    );
                    for f in &t.var_facts {
                        let inst = &t.instances[f.inst as usize];
                        let otag = r
                            .ctx_tag(&suffix(&inst.alloc_ctx, k))
                            .expect("alloc context enumerated");
                        let elem = pack(otag, sys.table.objfield(inst.object, f.field));
                        let got = r.pts(f.var, &suffix(&f.ctx, k));
                        assert!(
                            got.contains(&elem),
                            "seed {seed}/{run_seed} k={k}: {} misses fact",
                            sys.table.display(f.var)
                        );
                    }
                    for f in &t.mem_facts {
                        let cell_inst = &t.instances[f.cell_inst as usize];
                        let cell_tag = r.ctx_tag(&suffix(&cell_inst.alloc_ctx, k)).unwrap();
                        let cell = sys.table.objfield(cell_inst.object, f.cell_field);
                        let inst = &t.instances[f.inst as usize];
                        let otag = r.ctx_tag(&suffix(&inst.alloc_ctx, k)).unwrap();
                        let elem = pack(otag, sys.table.objfield(inst.object, f.field));
                        assert!(
                            r.pts_tag(cell, cell_tag).contains(&elem),
                            "seed {seed}/{run_seed} k={k}: cell misses fact"
                        );
                    }
                    for &(site, callee) in &t.icall_targets {
                        assert!(r.call_graph[&site].contains(&callee));
                    }
                }
            }
        }
    }

    #[test]
    fn recursion_terminates_and_stays_sound() {
        let src = "func @rec(%n) {\n\
             entry:\n  br go, out\n\
             go:\n  %m = alloc M\n  %r = call @rec(%m)\n  ret %r\n\
             out:\n  ret %n\n}\n\
             func @main() {\n entry:\n  %a = alloc A\n  %z = call @rec(%a)\n  ret\n}\n";
        let (sys, r) = analyze(src, 2);
        let m = parse_module(src).unwrap();
        for seed in 0..6 {
            let t = run(
                &m,
                &sys.table,
                &InterpConfig { seed, max_steps: 5_000, ..Default::default() },
            );
            for f in &t.var_facts {
                let inst = &t.instances[f.inst as usize];
                let otag = r.ctx_tag(&suffix(&inst.alloc_ctx, 2)).expect("ctx");
                let elem = pack(otag, sys.table.objfield(inst.object, f.field));
                assert!(r.pts(f.var, &suffix(&f.ctx, 2)).contains(&elem));
            }
        }
    }

    #[test]
    fn arity_mismatched_indirect_targets_warn_and_skip() {
        let (_, r) = analyze(
            "func @g(%x) {\n entry:\n  ret\n}\n\
             func @main() {\n entry:\n  %f = addr @g\n  %r = icall %f()\n  ret\n}\n",
            1,
        );
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].contains("target skipped"));
        assert!(r.ctx_call_graph.is_empty());
    }

    #[test]
    fn results_are_deterministic() {
        let gen = GenConfig { seed: 0xDE7, funcs: 4, ..GenConfig::default() };
        let m = parse_module(&generate_program(&gen)).expect("parse");
        let sys = generate(&m, MAX_FIELD);
        let a = solve_kcfa(&m, &sys, &KcfaConfig::default()).expect("kcfa");
        let b = solve_kcfa(&m, &sys, &KcfaConfig::default()).expect("kcfa");
        assert_eq!(a.sets, b.sets);
        assert_eq!(a.contexts, b.contexts);
        assert_eq!(a.ctx_call_graph, b.ctx_call_graph);
    }

    #[test]
    fn clone_budget_is_enforced() {
        let m = parse_module(ID_SRC).unwrap();
        let sys = generate(&m, MAX_FIELD);
        let err = solve_kcfa(
            &m,
            &sys,
            &KcfaConfig { k: 1, max_clones: 4, ..Default::default() },
        );
        assert!(matches!(err, Err(KcfaError::CloneBudget { .. })));
    }
}
