//! Dense flow-sensitive points-to dataflow over the ICFG, optionally
//! expanded by call-string contexts.
//!
//! Every program point carries an environment mapping locations to
//! points-to sets. Locations are packed `(context, node)` pairs: variable
//! nodes hold the frame state, element nodes hold the abstract heap. With
//! `k = 0` there is a single empty context and the analysis is the plain
//! flow-sensitive one; with `k > 0` instructions, variables, and heap
//! objects are cloned per call-string suffix, enumerated ahead of time from
//! the supplied call graph.
//!
//! Interprocedural flow splits by location kind. Heap state travels through
//! the callee (`Call` edges in, `Return` edges out) because callees mutate
//! it; frame state travels around the call on the `Bypass` edge because the
//! caller's locals are frozen while the callee runs. `Call` edges bind
//! arguments to parameters, `Return` edges bind the callee's return node to
//! the call destination, and both drop all other variables — which is what
//! keeps recursion sound: an inner activation's writes to its own locals
//! can never clobber the suspended caller's frame.
//!
//! Stores apply a strong update — replacing the cell's contents instead of
//! accumulating — when the pointer resolves to exactly one location whose
//! object provably has at most one live instance: globals, function
//! objects, and allocation sites that execute at most once (the site is on
//! no intra-function cycle and its function's sole activation chain up to
//! the entry is itself execute-at-most-once).

use crate::constraints::{ConstraintSystem, NodeId, NodeTable, ObjOrigin};
use crate::derived::{build_icfg, Icfg, IcfgEdgeKind};
use crate::interp::Boundary;
use crate::ir::{InstrId, InstrKind, Instruction, PointerModule};
use crate::sensitivity::{push_site, Ctx};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

pub const DEFAULT_CLONE_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct FlowConfig {
    /// Call-string depth; 0 is the plain flow-sensitive analysis.
    pub k: usize,
    /// Budget on cloned instructions across all contexts.
    pub max_clones: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { k: 0, max_clones: DEFAULT_CLONE_BUDGET }
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("context expansion needs {needed} cloned instructions, budget is {budget}")]
    CloneBudget { needed: u64, budget: u64 },
}

#[derive(Debug, Clone, Default)]
pub struct FlowStats {
    /// Node transfer evaluations.
    pub transfers: u64,
    /// Cloned instructions (nodes of the expanded graph).
    pub clones: u64,
    /// Distinct call-string contexts.
    pub contexts: u64,
    pub millis: u64,
}

impl FlowStats {
    pub fn display_line(&self) -> String {
        format!(
            "transfers={}, clones={}, contexts={}, millis={}",
            self.transfers, self.clones, self.contexts, self.millis
        )
    }
}

/// An environment: packed `(ctx, node)` location to packed `(ctx, element)`
/// points-to set.
pub type Env = BTreeMap<u64, BTreeSet<u64>>;

pub fn pack(ctx: u32, node: NodeId) -> u64 {
    (ctx as u64) << 32 | node.0 as u64
}

pub fn unpack(x: u64) -> (u32, NodeId) {
    ((x >> 32) as u32, NodeId(x as u32))
}

#[derive(Debug)]
pub struct FlowResult {
    pub k: usize,
    pub table: Arc<NodeTable>,
    /// Interned contexts; index 0 is the empty context.
    pub contexts: Vec<Ctx>,
    ctx_lookup: HashMap<Ctx, u32>,
    /// Per packed `(ctx, instr)` point.
    pub ins: HashMap<u64, Env>,
    pub outs: HashMap<u64, Env>,
    /// Call site to the instruction following it.
    after_call: HashMap<InstrId, InstrId>,
    pub call_graph: BTreeMap<InstrId, BTreeSet<u32>>,
    pub stats: FlowStats,
}

impl FlowResult {
    pub fn ctx_tag(&self, ctx: &[InstrId]) -> Option<u32> {
        self.ctx_lookup.get(ctx).copied()
    }

    pub fn context(&self, tag: u32) -> &[InstrId] {
        &self.contexts[tag as usize]
    }

    pub fn env(&self, instr: InstrId, at: Boundary, tag: u32) -> Option<&Env> {
        let key = pack(tag, NodeId(instr.0));
        match at {
            Boundary::In => self.ins.get(&key),
            Boundary::Out => self.outs.get(&key),
        }
    }

    /// The points-to set of `node` at a program point, or empty when the
    /// point or location was never reached.
    ///
    /// The out boundary of a call means "after the callee returned", which
    /// the dataflow materializes at the next instruction's in point (return
    /// edges land there); the raw out environment of a call node is the
    /// pre-call state feeding the callee. Queries follow the boundary
    /// meaning.
    pub fn pts_at(
        &self,
        instr: InstrId,
        at: Boundary,
        ctx_tag: u32,
        loc_ctx: u32,
        node: NodeId,
    ) -> BTreeSet<u64> {
        let (instr, at) = match self.after_call.get(&instr) {
            Some(&next) if at == Boundary::Out => (next, Boundary::In),
            _ => (instr, at),
        };
        self.env(instr, at, ctx_tag)
            .and_then(|e| e.get(&pack(loc_ctx, node)))
            .cloned()
            .unwrap_or_default()
    }

    /// Context-dropping projection: every element `node` may point to at
    /// any reached point, as core table ids.
    pub fn project_var(&self, node: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        for env in self.ins.values().chain(self.outs.values()) {
            for (k, set) in env {
                if unpack(*k).1 == node {
                    out.extend(set.iter().map(|&e| unpack(e).1));
                }
            }
        }
        out
    }

    /// All per-point sets of a node, context-projected, for precision
    /// comparisons against coarser analyses.
    pub fn pointwise(&self) -> BTreeMap<(InstrId, Boundary, NodeId), BTreeSet<NodeId>> {
        let mut out: BTreeMap<(InstrId, Boundary, NodeId), BTreeSet<NodeId>> = BTreeMap::new();
        for (at, envs) in [(Boundary::In, &self.ins), (Boundary::Out, &self.outs)] {
            for (&point, env) in envs {
                let (_, instr) = unpack(point);
                for (&loc, set) in env {
                    out.entry((InstrId(instr.0), at, unpack(loc).1))
                        .or_default()
                        .extend(set.iter().map(|&e| unpack(e).1));
                }
            }
        }
        out
    }
}

struct CallInfo {
    args: Vec<NodeId>,
    dest: Option<NodeId>,
}

struct Expansion {
    contexts: Vec<Ctx>,
    ctx_lookup: HashMap<Ctx, u32>,
    /// Discovered clones (func, ctx tag).
    clones: BTreeSet<(u32, u32)>,
    /// (callsite, callee ctx) -> caller ctx tags.
    ret_map: HashMap<(InstrId, u32), BTreeSet<u32>>,
    /// Incoming clone-graph edges: callee clone -> (callsite, caller clone).
    in_edges: HashMap<(u32, u32), BTreeSet<(InstrId, u32, u32)>>,
}

struct Engine<'a> {
    m: &'a PointerModule,
    table: &'a Arc<NodeTable>,
    icfg: &'a Icfg,
    k: usize,
    exp: Expansion,
    instrs: HashMap<InstrId, Instruction>,
    calls: HashMap<InstrId, CallInfo>,
    /// Intra-function cycle membership per reachable function.
    cyclic: HashMap<u32, HashSet<InstrId>>,
    /// Memoized execute-at-most-once per clone.
    amo: HashMap<(u32, u32), bool>,
    singleton: HashMap<u64, bool>,
}

/// Run the dataflow. `call_graph` must be sound (it fixes both the ICFG
/// and the context expansion); the context-insensitive inclusion analysis
/// supplies it in practice.
pub fn solve_flow_sensitive(
    m: &PointerModule,
    sys: &ConstraintSystem,
    call_graph: &BTreeMap<InstrId, BTreeSet<u32>>,
    cfg: &FlowConfig,
) -> Result<FlowResult, FlowError> {
    let started = Instant::now();
    let icfg = build_icfg(m, &sys.table, call_graph);
    let exp = enumerate_contexts(m, &sys.table, &icfg, call_graph, cfg)?;

    let mut instrs = HashMap::new();
    let mut calls = HashMap::new();
    let mut after_call = HashMap::new();
    for &fi in &icfg.funcs {
        let f = &m.functions[fi as usize];
        for b in &f.blocks {
            for w in b.instrs.windows(2) {
                if matches!(w[0].kind, InstrKind::Call { .. } | InstrKind::ICall { .. }) {
                    after_call.insert(w[0].id, w[1].id);
                }
            }
            for i in &b.instrs {
                instrs.insert(i.id, i.clone());
                let args = match &i.kind {
                    InstrKind::Call { args, .. } | InstrKind::ICall { args, .. } => args,
                    _ => continue,
                };
                calls.insert(
                    i.id,
                    CallInfo {
                        args: args
                            .iter()
                            .map(|a| sys.table.var_node(fi, a).expect("registered arg"))
                            .collect(),
                        dest: i.dest.as_ref().map(|d| {
                            sys.table.var_node(fi, d).expect("registered dest")
                        }),
                    },
                );
            }
        }
    }
    let cyclic = icfg
        .cfgs
        .iter()
        .map(|(&f, c)| (f, c.nodes_on_cycles().into_iter().collect()))
        .collect();

    let mut eng = Engine {
        m,
        table: &sys.table,
        icfg: &icfg,
        k: cfg.k,
        exp,
        instrs,
        calls,
        cyclic,
        amo: HashMap::new(),
        singleton: HashMap::new(),
    };
    let (ins, outs, transfers) = eng.fixpoint();

    let stats = FlowStats {
        transfers,
        clones: eng
            .exp
            .clones
            .iter()
            .map(|&(f, _)| eng.icfg.cfgs[&f].nodes.len() as u64)
            .sum(),
        contexts: eng.exp.contexts.len() as u64,
        millis: started.elapsed().as_millis() as u64,
    };
    Ok(FlowResult {
        k: cfg.k,
        table: sys.table.clone(),
        contexts: eng.exp.contexts,
        ctx_lookup: eng.exp.ctx_lookup,
        ins,
        outs,
        after_call,
        call_graph: call_graph.clone(),
        stats,
    })
}

/// Enumerate every reachable (function, context) clone from the call
/// graph, ahead of solving.
fn enumerate_contexts(
    m: &PointerModule,
    table: &NodeTable,
    icfg: &Icfg,
    call_graph: &BTreeMap<InstrId, BTreeSet<u32>>,
    cfg: &FlowConfig,
) -> Result<Expansion, FlowError> {
    let entry_func = table.function_by_name(&m.entry).expect("validated entry");
    let mut exp = Expansion {
        contexts: vec![Vec::new()],
        ctx_lookup: HashMap::from([(Vec::new(), 0)]),
        clones: BTreeSet::new(),
        ret_map: HashMap::new(),
        in_edges: HashMap::new(),
    };
    let mut needed = 0u64;
    let mut queue = VecDeque::from([(entry_func, 0u32)]);
    exp.clones.insert((entry_func, 0));
    needed += icfg.cfgs[&entry_func].nodes.len() as u64;
    while let Some((f, tag)) = queue.pop_front() {
        for b in &m.functions[f as usize].blocks {
            for i in &b.instrs {
                if !matches!(i.kind, InstrKind::Call { .. } | InstrKind::ICall { .. }) {
                    continue;
                }
                for &t in call_graph.get(&i.id).into_iter().flatten() {
                    if !icfg.cfgs.contains_key(&t) {
                        continue;
                    }
                    let next = push_site(&exp.contexts[tag as usize], i.id, cfg.k);
                    let ntag = match exp.ctx_lookup.get(&next) {
                        Some(&x) => x,
                        None => {
                            let x = exp.contexts.len() as u32;
                            exp.contexts.push(next.clone());
                            exp.ctx_lookup.insert(next, x);
                            x
                        }
                    };
                    exp.ret_map.entry((i.id, ntag)).or_default().insert(tag);
                    exp.in_edges.entry((t, ntag)).or_default().insert((i.id, f, tag));
                    if exp.clones.insert((t, ntag)) {
                        needed += icfg.cfgs[&t].nodes.len() as u64;
                        if needed > cfg.max_clones {
                            return Err(FlowError::CloneBudget {
                                needed,
                                budget: cfg.max_clones,
                            });
                        }
                        queue.push_back((t, ntag));
                    }
                }
            }
        }
    }
    Ok(exp)
}

impl<'a> Engine<'a> {
    fn entry_clone(&self) -> (u32, u32) {
        let f = self.table.function_by_name(&self.m.entry).unwrap();
        (f, 0)
    }

    /// May this clone be entered more than once per execution?
    fn at_most_once(&mut self, clone: (u32, u32)) -> bool {
        if let Some(&v) = self.amo.get(&clone) {
            return v;
        }
        if clone == self.entry_clone() {
            self.amo.insert(clone, true);
            return true;
        }
        // Pessimistic while in progress: a cycle in the clone graph means
        // repeated activations.
        self.amo.insert(clone, false);
        let edges = match self.exp.in_edges.get(&clone) {
            Some(e) => e.clone(),
            None => return false,
        };
        let v = if edges.len() != 1 {
            false
        } else {
            let (site, caller_f, caller_tag) = *edges.iter().next().unwrap();
            !self.cyclic[&caller_f].contains(&site) && self.at_most_once((caller_f, caller_tag))
        };
        self.amo.insert(clone, v);
        v
    }

    /// May a strong update replace the contents of this packed element's
    /// object?
    fn singleton_object(&mut self, elem: u64) -> bool {
        if let Some(&v) = self.singleton.get(&elem) {
            return v;
        }
        let (otag, node) = unpack(elem);
        let (obj, _) = self.table.elem_parts(node);
        let v = match &self.table.object(obj).origin {
            ObjOrigin::Global { .. } | ObjOrigin::Function { .. } => true,
            ObjOrigin::Alloc { site, .. } => {
                let f = self.icfg.func_of[site];
                !self.cyclic[&f].contains(site) && self.at_most_once((f, otag))
            }
        };
        self.singleton.insert(elem, v);
        v
    }

    fn fixpoint(&mut self) -> (HashMap<u64, Env>, HashMap<u64, Env>, u64) {
        let mut ins: HashMap<u64, Env> = HashMap::new();
        let mut outs: HashMap<u64, Env> = HashMap::new();
        let mut transfers = 0u64;
        let entry_point = pack(0, NodeId(self.icfg.entry.0));
        ins.insert(entry_point, Env::new());
        let mut queue = VecDeque::from([entry_point]);
        let mut queued: HashSet<u64> = HashSet::from([entry_point]);

        while let Some(x) = queue.pop_front() {
            queued.remove(&x);
            let (tag, instr) = unpack(x);
            let instr = InstrId(instr.0);
            let in_env = ins.get(&x).cloned().unwrap_or_default();
            transfers += 1;
            let out = self.transfer(instr, tag, in_env);
            if outs.get(&x) == Some(&out) {
                continue;
            }
            outs.insert(x, out.clone());

            let edges: Vec<_> = self.icfg.succs(instr).cloned().collect();
            for e in edges {
                for (succ, contrib) in self.edge_envs(&e, tag, &out) {
                    let dst = ins.entry(succ).or_default();
                    let mut changed = false;
                    for (k, set) in contrib {
                        let slot = dst.entry(k).or_default();
                        for v in set {
                            changed |= slot.insert(v);
                        }
                    }
                    let first_visit = !outs.contains_key(&succ);
                    if (changed || first_visit) && queued.insert(succ) {
                        queue.push_back(succ);
                    }
                }
            }
        }
        (ins, outs, transfers)
    }

    /// Successor points of an ICFG edge leaving `(from, tag)`, each with
    /// the environment contribution flowing along it.
    fn edge_envs(
        &self,
        e: &crate::derived::IcfgEdge,
        tag: u32,
        out: &Env,
    ) -> Vec<(u64, Env)> {
        let to = pack(tag, NodeId(e.to.0));
        match &e.kind {
            IcfgEdgeKind::Intra => vec![(to, out.clone())],
            IcfgEdgeKind::Bypass => {
                let dest = self.calls[&e.from].dest.map(|d| pack(tag, d));
                let env: Env = out
                    .iter()
                    .filter(|(&k, _)| {
                        !self.table.is_elem(unpack(k).1) && Some(k) != dest
                    })
                    .map(|(&k, s)| (k, s.clone()))
                    .collect();
                vec![(to, env)]
            }
            IcfgEdgeKind::Call { callee } => {
                let next = push_site(&self.exp.contexts[tag as usize], e.from, self.k);
                let ntag = self.exp.ctx_lookup[&next];
                let mut env: Env = out
                    .iter()
                    .filter(|(&k, _)| self.table.is_elem(unpack(k).1))
                    .map(|(&k, s)| (k, s.clone()))
                    .collect();
                let info = &self.calls[&e.from];
                let params = &self.table.functions[*callee as usize].param_nodes;
                for (p, a) in params.iter().zip(&info.args) {
                    if let Some(s) = out.get(&pack(tag, *a)) {
                        if !s.is_empty() {
                            env.insert(pack(ntag, *p), s.clone());
                        }
                    }
                }
                vec![(pack(ntag, NodeId(e.to.0)), env)]
            }
            IcfgEdgeKind::Return { callsite, callee } => {
                // `tag` is the callee context here; fan out to every caller
                // context that reaches it through this site.
                let Some(callers) = self.exp.ret_map.get(&(*callsite, tag)) else {
                    return Vec::new();
                };
                let base: Env = out
                    .iter()
                    .filter(|(&k, _)| self.table.is_elem(unpack(k).1))
                    .map(|(&k, s)| (k, s.clone()))
                    .collect();
                let ret = self.table.functions[*callee as usize].ret_node.unwrap();
                let ret_set = out.get(&pack(tag, ret));
                let dest = self.calls[callsite].dest;
                callers
                    .iter()
                    .map(|&caller_tag| {
                        let mut env = base.clone();
                        if let (Some(d), Some(s)) = (dest, ret_set) {
                            if !s.is_empty() {
                                env.insert(pack(caller_tag, d), s.clone());
                            }
                        }
                        (pack(caller_tag, NodeId(e.to.0)), env)
                    })
                    .collect()
            }
        }
    }

    fn transfer(&mut self, instr: InstrId, tag: u32, mut env: Env) -> Env {
        let i = self.instrs[&instr].clone();
        let func = self.icfg.func_of[&instr];
        let vk = |name: &str| pack(tag, self.table.var_node(func, name).expect("registered"));
        let set_or_clear = |env: &mut Env, key: u64, set: BTreeSet<u64>| {
            if set.is_empty() {
                env.remove(&key);
            } else {
                env.insert(key, set);
            }
        };
        match &i.kind {
            InstrKind::Alloc { .. } => {
                let obj = self.table.alloc_object(instr).expect("alloc site");
                let elem = pack(tag, self.table.objfield(obj, 0));
                env.insert(vk(i.dest.as_ref().unwrap()), BTreeSet::from([elem]));
            }
            InstrKind::Addr { symbol } => {
                let obj = match self.table.function_by_name(symbol) {
                    Some(f) => self.table.functions[f as usize].object,
                    None => self
                        .table
                        .object_by_display(&format!("@{symbol}"))
                        .expect("validated symbol"),
                };
                let elem = pack(0, self.table.objfield(obj, 0));
                env.insert(vk(i.dest.as_ref().unwrap()), BTreeSet::from([elem]));
            }
            InstrKind::Copy { src } => {
                let s = env.get(&vk(src)).cloned().unwrap_or_default();
                set_or_clear(&mut env, vk(i.dest.as_ref().unwrap()), s);
            }
            InstrKind::Field { base, index } => {
                let s: BTreeSet<u64> = env
                    .get(&vk(base))
                    .into_iter()
                    .flatten()
                    .map(|&e| {
                        let (otag, node) = unpack(e);
                        let (obj, _) = self.table.elem_parts(node);
                        pack(otag, self.table.objfield(obj, *index))
                    })
                    .collect();
                set_or_clear(&mut env, vk(i.dest.as_ref().unwrap()), s);
            }
            InstrKind::Load { ptr } => {
                let mut s = BTreeSet::new();
                for &e in env.get(&vk(ptr)).into_iter().flatten() {
                    s.extend(env.get(&e).into_iter().flatten().copied());
                }
                set_or_clear(&mut env, vk(i.dest.as_ref().unwrap()), s);
            }
            InstrKind::Store { value, ptr } => {
                let targets: Vec<u64> =
                    env.get(&vk(ptr)).into_iter().flatten().copied().collect();
                let stored = env.get(&vk(value)).cloned().unwrap_or_default();
                let strong = targets.len() == 1 && self.singleton_object(targets[0]);
                for t in targets {
                    if strong {
                        set_or_clear(&mut env, t, stored.clone());
                    } else {
                        env.entry(t).or_default().extend(stored.iter().copied());
                    }
                }
            }
            InstrKind::Ret { value } => {
                let ret = self.table.functions[func as usize].ret_node.unwrap();
                let s = value
                    .as_ref()
                    .and_then(|v| env.get(&vk(v)).cloned())
                    .unwrap_or_default();
                set_or_clear(&mut env, pack(tag, ret), s);
            }
            // Bindings travel on the interprocedural edges.
            InstrKind::Call { .. } | InstrKind::ICall { .. } | InstrKind::Br { .. } => {}
        }
        env
    }
}
