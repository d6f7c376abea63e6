//! Concrete execution of pointer programs.
//!
//! The interpreter runs a module with real heap instances and records which
//! pointer values actually arise at which program points. Any sound analysis
//! must cover every recorded fact, so traces serve as ground truth: an
//! analysis that misses an observed points-to relationship is wrong, no
//! matter how plausible its answer looks.
//!
//! Nondeterministic branches take seeded random choices, so different seeds
//! explore different paths; facts are unioned across runs by the caller.
//! Runs halt cleanly on null dereference, uncallable indirect targets, and
//! resource budgets — everything observed before the halt still happened.

use crate::constraints::{NodeId, NodeTable, ObjOrigin, ObjectId};
use crate::ir::{InstrId, InstrKind, PointerModule};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;
pub const DEFAULT_SITE_CAP: u32 = 10_000;

#[derive(Debug, Clone)]
pub struct InterpConfig {
    pub seed: u64,
    pub max_steps: u64,
    /// Maximum live allocations per allocation site.
    pub site_cap: u32,
}

impl Default for InterpConfig {
    fn default() -> Self {
        InterpConfig { seed: 0, max_steps: DEFAULT_MAX_STEPS, site_cap: DEFAULT_SITE_CAP }
    }
}

/// A call string: the active call sites, outermost first.
pub type Ctx = Vec<InstrId>;

/// The most recent `k` call sites — the projection context-sensitive
/// analyses are checked under.
pub fn ctx_suffix(ctx: &[InstrId], k: usize) -> &[InstrId] {
    &ctx[ctx.len() - ctx.len().min(k)..]
}

/// One runtime heap object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceInfo {
    /// The static object this instance abstracts to.
    pub object: ObjectId,
    /// Call string at creation; empty for globals and function objects.
    pub alloc_ctx: Ctx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Boundary {
    In,
    Out,
}

/// At a boundary of `instr`, executing under `ctx`, variable `var` held a
/// pointer to field `field` of instance `inst`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct VarFact {
    pub instr: InstrId,
    pub at: Boundary,
    pub ctx: Ctx,
    pub var: NodeId,
    pub inst: u32,
    pub field: u32,
}

/// At a boundary of `instr`, field `cell_field` of instance `cell_inst`
/// held a pointer to field `field` of instance `inst`. Recorded at the
/// cells loads read (In) and stores write (Out).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MemFact {
    pub instr: InstrId,
    pub at: Boundary,
    pub ctx: Ctx,
    pub cell_inst: u32,
    pub cell_field: u32,
    pub inst: u32,
    pub field: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunEnd {
    /// The entry function returned.
    Returned,
    /// Load, store, or indirect call through a null pointer.
    NullDeref(InstrId),
    /// Indirect call through something that is not a zero-offset function
    /// pointer of matching arity.
    BadICall(InstrId),
    StepBudget,
    HeapBudget(InstrId),
}

#[derive(Debug)]
pub struct ExecutionTrace {
    pub end: RunEnd,
    pub steps: u64,
    pub instances: Vec<InstanceInfo>,
    pub var_facts: BTreeSet<VarFact>,
    pub mem_facts: BTreeSet<MemFact>,
    /// Indirect call targets that actually fired: (site, callee).
    pub icall_targets: BTreeSet<(InstrId, u32)>,
}

/// A runtime pointer: field `1` of instance `0`, or null.
type Value = Option<(u32, u32)>;

struct Frame {
    func: u32,
    ctx: Ctx,
    /// Values keyed by variable node id.
    locals: HashMap<u32, Value>,
    block: usize,
    idx: usize,
    /// Where the caller wants the return value, and the call site that
    /// produced this frame (for the Out-boundary fact).
    ret_dest: Option<NodeId>,
    call_site: Option<InstrId>,
}

struct Interp<'a> {
    m: &'a PointerModule,
    table: &'a Arc<NodeTable>,
    rng: ChaCha8Rng,
    cfg: &'a InterpConfig,
    instances: Vec<InstanceInfo>,
    memory: Vec<Vec<Value>>,
    site_counts: HashMap<u32, u32>,
    /// Static object id -> instance, for globals and functions.
    static_inst: HashMap<u32, u32>,
    /// Function object id -> function index, for indirect calls.
    func_of_obj: HashMap<u32, u32>,
    /// Per function: block name -> index.
    block_index: Vec<HashMap<String, usize>>,
    frames: Vec<Frame>,
    steps: u64,
    var_facts: BTreeSet<VarFact>,
    mem_facts: BTreeSet<MemFact>,
    icall_targets: BTreeSet<(InstrId, u32)>,
}

/// Run the module once from its entry function.
pub fn run(m: &PointerModule, table: &Arc<NodeTable>, cfg: &InterpConfig) -> ExecutionTrace {
    let fields = table.max_field as usize + 1;
    let mut it = Interp {
        m,
        table,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        cfg,
        instances: Vec::new(),
        memory: Vec::new(),
        site_counts: HashMap::new(),
        static_inst: HashMap::new(),
        func_of_obj: HashMap::new(),
        block_index: m
            .functions
            .iter()
            .map(|f| {
                f.blocks
                    .iter()
                    .enumerate()
                    .map(|(i, b)| (b.label.clone(), i))
                    .collect()
            })
            .collect(),
        frames: Vec::new(),
        steps: 0,
        var_facts: BTreeSet::new(),
        mem_facts: BTreeSet::new(),
        icall_targets: BTreeSet::new(),
    };
    for o in 0..table.object_count() {
        let oid = ObjectId(o as u32);
        match table.object(oid).origin {
            ObjOrigin::Alloc { .. } => {}
            ObjOrigin::Function { func } => {
                it.func_of_obj.insert(oid.0, func);
                it.static_inst.insert(oid.0, it.instances.len() as u32);
                it.instances.push(InstanceInfo { object: oid, alloc_ctx: Vec::new() });
                it.memory.push(vec![None; fields]);
            }
            ObjOrigin::Global { .. } => {
                it.static_inst.insert(oid.0, it.instances.len() as u32);
                it.instances.push(InstanceInfo { object: oid, alloc_ctx: Vec::new() });
                it.memory.push(vec![None; fields]);
            }
        }
    }
    let entry = table.function_by_name(&m.entry).expect("validated entry");
    let mut locals = HashMap::new();
    for p in &table.functions[entry as usize].param_nodes {
        locals.insert(p.0, None);
    }
    it.frames.push(Frame {
        func: entry,
        ctx: Vec::new(),
        locals,
        block: 0,
        idx: 0,
        ret_dest: None,
        call_site: None,
    });
    let end = it.exec();
    ExecutionTrace {
        end,
        steps: it.steps,
        instances: it.instances,
        var_facts: it.var_facts,
        mem_facts: it.mem_facts,
        icall_targets: it.icall_targets,
    }
}

impl<'a> Interp<'a> {
    fn node(&self, func: u32, name: &str) -> NodeId {
        self.table.var_node(func, name).expect("registered variable")
    }

    fn read(&self, name: &str) -> Value {
        let fr = self.frames.last().unwrap();
        let n = self.node(fr.func, name);
        fr.locals.get(&n.0).copied().flatten()
    }

    fn write(&mut self, instr: InstrId, name: &str, v: Value) {
        let fr = self.frames.last().unwrap();
        let (func, ctx) = (fr.func, fr.ctx.clone());
        let n = self.node(func, name);
        self.frames.last_mut().unwrap().locals.insert(n.0, v);
        if let Some((inst, field)) = v {
            self.var_facts.insert(VarFact { instr, at: Boundary::Out, ctx, var: n, inst, field });
        }
    }

    /// Push a frame for `callee`, binding `args`, and record the bound
    /// parameter values as In-boundary facts at the callee's first
    /// instruction.
    fn enter(
        &mut self,
        callee: u32,
        args: Vec<Value>,
        site: InstrId,
        ret_dest: Option<NodeId>,
    ) {
        let mut ctx = self.frames.last().unwrap().ctx.clone();
        ctx.push(site);
        let meta = &self.table.functions[callee as usize];
        let mut locals = HashMap::new();
        let first = self.m.functions[callee as usize].blocks[0].instrs[0].id;
        for (p, v) in meta.param_nodes.iter().zip(&args) {
            locals.insert(p.0, *v);
            if let Some((inst, field)) = *v {
                self.var_facts.insert(VarFact {
                    instr: first,
                    at: Boundary::In,
                    ctx: ctx.clone(),
                    var: *p,
                    inst,
                    field,
                });
            }
        }
        self.frames.push(Frame {
            func: callee,
            ctx,
            locals,
            block: 0,
            idx: 0,
            ret_dest,
            call_site: Some(site),
        });
    }

    /// Pop the current frame, delivering `v` to the caller's destination.
    /// Returns false when the popped frame was the entry frame.
    fn leave(&mut self, v: Value) -> bool {
        let popped = self.frames.pop().unwrap();
        if self.frames.is_empty() {
            return false;
        }
        if let Some(d) = popped.ret_dest {
            let fr = self.frames.last_mut().unwrap();
            fr.locals.insert(d.0, v);
            if let Some((inst, field)) = v {
                self.var_facts.insert(VarFact {
                    instr: popped.call_site.unwrap(),
                    at: Boundary::Out,
                    ctx: self.frames.last().unwrap().ctx.clone(),
                    var: d,
                    inst,
                    field,
                });
            }
        }
        true
    }

    fn exec(&mut self) -> RunEnd {
        loop {
            if self.steps >= self.cfg.max_steps {
                return RunEnd::StepBudget;
            }
            self.steps += 1;
            let fr = self.frames.last().unwrap();
            let (func, block, idx) = (fr.func, fr.block, fr.idx);
            let ctx = fr.ctx.clone();
            let blk = &self.m.functions[func as usize].blocks[block];
            debug_assert!(idx < blk.instrs.len(), "blocks end in terminators");
            let i = blk.instrs[idx].clone();

            for u in i.kind.uses() {
                if let Some((inst, field)) = self.read(u) {
                    let var = self.node(func, u);
                    self.var_facts.insert(VarFact {
                        instr: i.id,
                        at: Boundary::In,
                        ctx: ctx.clone(),
                        var,
                        inst,
                        field,
                    });
                }
            }

            self.frames.last_mut().unwrap().idx += 1;
            match &i.kind {
                InstrKind::Alloc { .. } => {
                    let count = self.site_counts.entry(i.id.0).or_insert(0);
                    if *count >= self.cfg.site_cap {
                        return RunEnd::HeapBudget(i.id);
                    }
                    *count += 1;
                    let inst = self.instances.len() as u32;
                    let object = self.table.alloc_object(i.id).expect("alloc site object");
                    self.instances.push(InstanceInfo { object, alloc_ctx: ctx });
                    self.memory.push(vec![None; self.table.max_field as usize + 1]);
                    self.write(i.id, i.dest.as_ref().unwrap(), Some((inst, 0)));
                }
                InstrKind::Addr { symbol } => {
                    let obj = match self.table.function_by_name(symbol) {
                        Some(f) => self.table.functions[f as usize].object,
                        None => self
                            .table
                            .object_by_display(&format!("@{symbol}"))
                            .expect("validated symbol"),
                    };
                    let inst = self.static_inst[&obj.0];
                    self.write(i.id, i.dest.as_ref().unwrap(), Some((inst, 0)));
                }
                InstrKind::Copy { src } => {
                    let v = self.read(src);
                    self.write(i.id, i.dest.as_ref().unwrap(), v);
                }
                InstrKind::Load { ptr } => {
                    let Some((bi, bf)) = self.read(ptr) else {
                        return RunEnd::NullDeref(i.id);
                    };
                    let v = self.memory[bi as usize][bf as usize];
                    if let Some((inst, field)) = v {
                        self.mem_facts.insert(MemFact {
                            instr: i.id,
                            at: Boundary::In,
                            ctx: ctx.clone(),
                            cell_inst: bi,
                            cell_field: bf,
                            inst,
                            field,
                        });
                    }
                    self.write(i.id, i.dest.as_ref().unwrap(), v);
                }
                InstrKind::Store { value, ptr } => {
                    let Some((bi, bf)) = self.read(ptr) else {
                        return RunEnd::NullDeref(i.id);
                    };
                    let v = self.read(value);
                    self.memory[bi as usize][bf as usize] = v;
                    if let Some((inst, field)) = v {
                        self.mem_facts.insert(MemFact {
                            instr: i.id,
                            at: Boundary::Out,
                            ctx,
                            cell_inst: bi,
                            cell_field: bf,
                            inst,
                            field,
                        });
                    }
                }
                InstrKind::Field { base, index } => {
                    // Address arithmetic: null propagates, no dereference.
                    let v = self
                        .read(base)
                        .map(|(bi, _)| (bi, self.table.collapse_offset(*index)));
                    self.write(i.id, i.dest.as_ref().unwrap(), v);
                }
                InstrKind::Call { callee, args } => {
                    let f = self.table.function_by_name(callee).expect("validated callee");
                    let vals: Vec<Value> = args.iter().map(|a| self.read(a)).collect();
                    let dest = i.dest.as_ref().map(|d| self.node(func, d));
                    self.enter(f, vals, i.id, dest);
                }
                InstrKind::ICall { fnptr, args } => {
                    let Some((bi, bf)) = self.read(fnptr) else {
                        return RunEnd::NullDeref(i.id);
                    };
                    if bf != 0 {
                        return RunEnd::BadICall(i.id);
                    }
                    let obj = self.instances[bi as usize].object;
                    let Some(&f) = self.func_of_obj.get(&obj.0) else {
                        return RunEnd::BadICall(i.id);
                    };
                    if self.table.functions[f as usize].arity != args.len() {
                        return RunEnd::BadICall(i.id);
                    }
                    self.icall_targets.insert((i.id, f));
                    let vals: Vec<Value> = args.iter().map(|a| self.read(a)).collect();
                    let dest = i.dest.as_ref().map(|d| self.node(func, d));
                    self.enter(f, vals, i.id, dest);
                }
                InstrKind::Ret { value } => {
                    let v = value.as_ref().and_then(|n| self.read(n));
                    if let Some((inst, field)) = v {
                        let ret = self.table.functions[func as usize].ret_node.unwrap();
                        self.var_facts.insert(VarFact {
                            instr: i.id,
                            at: Boundary::Out,
                            ctx,
                            var: ret,
                            inst,
                            field,
                        });
                    }
                    if !self.leave(v) {
                        return RunEnd::Returned;
                    }
                }
                InstrKind::Br { targets } => {
                    let t = if targets.len() == 1 || !self.rng.gen_bool(0.5) {
                        &targets[0]
                    } else {
                        &targets[1]
                    };
                    let fr = self.frames.last_mut().unwrap();
                    fr.block = self.block_index[func as usize][t];
                    fr.idx = 0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::andersen::{solve, SolverConfig};
    use crate::constraints::generate;
    use crate::generate::{generate_program, GenConfig};
    use crate::ir::{parse_module, MAX_FIELD};

    fn trace(src: &str, cfg: &InterpConfig) -> (crate::constraints::ConstraintSystem, ExecutionTrace) {
        let m = parse_module(src).expect("parse");
        let sys = generate(&m, MAX_FIELD);
        let t = run(&m, &sys.table, cfg);
        (sys, t)
    }

    #[test]
    fn straight_line_facts_and_clean_return() {
        let (sys, t) = trace(
            "func @main() {\n\
             entry:\n  %p = alloc A\n  %q = copy %p\n  store %q, %p\n  %r = load %p\n  ret\n}\n",
            &InterpConfig::default(),
        );
        assert_eq!(t.end, RunEnd::Returned);
        let p = sys.table.var_node(0, "p").unwrap();
        let r = sys.table.var_node(0, "r").unwrap();
        let a = t.instances.iter().position(|i| {
            sys.table.object(i.object).display.starts_with("alloc:")
        }).unwrap() as u32;
        assert!(t.var_facts.iter().any(|f| f.var == p && f.inst == a && f.at == Boundary::Out));
        // r observed the stored self-pointer.
        assert!(t.var_facts.iter().any(|f| f.var == r && f.inst == a));
        assert!(t.mem_facts.iter().any(|f| f.cell_inst == a && f.inst == a));
    }

    #[test]
    fn null_dereference_halts_the_run() {
        let (_, t) = trace(
            "func @main() {\n entry:\n  %x = load %never\n  ret\n}\n",
            &InterpConfig::default(),
        );
        assert!(matches!(t.end, RunEnd::NullDeref(_)));
        assert!(t.var_facts.is_empty());
    }

    #[test]
    fn branch_nondeterminism_covers_both_arms_across_seeds() {
        let src = "func @main() {\n\
             entry:\n  br left, right\n\
             left:\n  %p = alloc A\n  br done\n\
             right:\n  %p = alloc B\n  br done\n\
             done:\n  ret\n}\n";
        let mut labels = BTreeSet::new();
        for seed in 0..16 {
            let (sys, t) = trace(src, &InterpConfig { seed, ..InterpConfig::default() });
            for f in &t.var_facts {
                let o = t.instances[f.inst as usize].object;
                labels.insert(sys.table.object(o).display.clone());
            }
        }
        assert_eq!(labels.len(), 2, "both arms should be taken: {labels:?}");
    }

    #[test]
    fn budgets_stop_loops_and_allocation_storms() {
        let (_, t) = trace(
            "func @main() {\n entry:\n  br entry2\n entry2:\n  br entry2\n}\n",
            &InterpConfig { max_steps: 100, ..InterpConfig::default() },
        );
        assert_eq!(t.end, RunEnd::StepBudget);
        assert_eq!(t.steps, 100);

        let (sys, t) = trace(
            "func @main() {\n entry:\n  %p = alloc A\n  br entry2\n entry2:\n  %p = alloc A\n  br entry2\n}\n",
            &InterpConfig { site_cap: 5, ..InterpConfig::default() },
        );
        assert!(matches!(t.end, RunEnd::HeapBudget(_)));
        // One instance from entry's site plus five from the looping site;
        // the halt fires before the sixth. Main's function object is not
        // heap.
        let heap = t
            .instances
            .iter()
            .filter(|i| matches!(sys.table.object(i.object).origin, ObjOrigin::Alloc { .. }))
            .count();
        assert_eq!(heap, 6);
    }

    #[test]
    fn indirect_calls_validate_their_targets() {
        // Arity mismatch.
        let (_, t) = trace(
            "func @f(%a) {\n entry:\n  ret\n}\n\
             func @main() {\n entry:\n  %p = addr @f\n  icall %p()\n  ret\n}\n",
            &InterpConfig::default(),
        );
        assert!(matches!(t.end, RunEnd::BadICall(_)));

        // Not a function.
        let (_, t) = trace(
            "global @g\n\
             func @main() {\n entry:\n  %p = addr @g\n  icall %p()\n  ret\n}\n",
            &InterpConfig::default(),
        );
        assert!(matches!(t.end, RunEnd::BadICall(_)));

        // Well-formed: target recorded, argument flows through.
        let (sys, t) = trace(
            "func @id(%a) {\n entry:\n  ret %a\n}\n\
             func @main() {\n entry:\n  %f = addr @id\n  %o = alloc O\n  %r = icall %f(%o)\n  ret\n}\n",
            &InterpConfig::default(),
        );
        assert_eq!(t.end, RunEnd::Returned);
        assert_eq!(t.icall_targets.len(), 1);
        let r = sys.table.var_node(1, "r").unwrap();
        assert!(t.var_facts.iter().any(|f| f.var == r));
    }

    #[test]
    fn call_strings_record_the_active_sites() {
        let (sys, t) = trace(
            "func @inner() {\n entry:\n  %x = alloc DEEP\n  ret %x\n}\n\
             func @outer() {\n entry:\n  %y = call @inner()\n  ret %y\n}\n\
             func @main() {\n entry:\n  %z = call @outer()\n  ret\n}\n",
            &InterpConfig::default(),
        );
        let deep = t
            .instances
            .iter()
            .find(|i| matches!(&sys.table.object(i.object).origin, ObjOrigin::Alloc { .. }))
            .unwrap();
        assert_eq!(deep.alloc_ctx.len(), 2, "main->outer->inner");
        assert_eq!(ctx_suffix(&deep.alloc_ctx, 1).len(), 1);
        assert_eq!(ctx_suffix(&deep.alloc_ctx, 1)[0], deep.alloc_ctx[1]);
        assert_eq!(ctx_suffix(&deep.alloc_ctx, 0).len(), 0);
        // z's fact carries main's (empty) context.
        let z = sys.table.var_node(2, "z").unwrap();
        let zf = t.var_facts.iter().find(|f| f.var == z).unwrap();
        assert!(zf.ctx.is_empty());
    }

    #[test]
    fn same_seed_reproduces_the_trace_exactly() {
        let gen = GenConfig { seed: 77, funcs: 3, ..GenConfig::default() };
        let src = generate_program(&gen);
        let m = parse_module(&src).expect("parse");
        let sys = generate(&m, MAX_FIELD);
        let cfg = InterpConfig { seed: 9, max_steps: 20_000, ..InterpConfig::default() };
        let a = run(&m, &sys.table, &cfg);
        let b = run(&m, &sys.table, &cfg);
        assert_eq!(a.end, b.end);
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.var_facts, b.var_facts);
        assert_eq!(a.mem_facts, b.mem_facts);
    }

    /// The central oracle wiring: every concretely observed fact must be
    /// covered by the verified inclusion analysis, context-insensitively.
    #[test]
    fn observed_facts_are_covered_by_the_inclusion_analysis() {
        for seed in 0..30u64 {
            let gen = GenConfig { seed: 0x0BAC1E + seed, funcs: 4, ..GenConfig::default() };
            let src = generate_program(&gen);
            let m = parse_module(&src).expect("generated programs parse");
            let sys = generate(&m, MAX_FIELD);
            let sol = solve(&sys, &SolverConfig::reference()).expect("solve");
            for run_seed in 0..4 {
                let t = run(
                    &m,
                    &sys.table,
                    &InterpConfig { seed: run_seed, max_steps: 50_000, ..InterpConfig::default() },
                );
                for f in &t.var_facts {
                    let obj = t.instances[f.inst as usize].object;
                    let elem = sys.table.objfield(obj, f.field);
                    assert!(
                        sol.points_to(f.var).contains(&elem),
                        "seed {seed}/{run_seed}: {} should cover {}",
                        sys.table.display(f.var),
                        sys.table.display(elem),
                    );
                }
                for f in &t.mem_facts {
                    let cell = sys
                        .table
                        .objfield(t.instances[f.cell_inst as usize].object, f.cell_field);
                    let elem =
                        sys.table.objfield(t.instances[f.inst as usize].object, f.field);
                    assert!(
                        sol.points_to(cell).contains(&elem),
                        "seed {seed}/{run_seed}: cell {} should cover {}",
                        sys.table.display(cell),
                        sys.table.display(elem),
                    );
                }
                for &(site, callee) in &t.icall_targets {
                    assert!(
                        sol.call_targets(site).any(|c| c == callee),
                        "seed {seed}/{run_seed}: call graph misses observed target"
                    );
                }
            }
        }
    }
}
