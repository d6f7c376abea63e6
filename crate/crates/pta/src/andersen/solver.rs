//! The solver engine shared by all subset configurations.
//!
//! One engine implements every strategy. Nodes live in a union-find; merged
//! classes share one points-to set, one copy-successor set, and one complex
//! constraint list, all kept at the class representative. Difference
//! propagation reads suffixes of each set's insertion journal through
//! per-class cursors; merging conservatively rewinds the winner's cursors
//! so nothing is lost. Elements are never rewritten when classes merge,
//! which is why every configuration reports the same expanded solution.

use super::offline::{hcd, hu, hvn, HcdTable};
use super::scc::tarjan_sccs;
use super::worklist::Worklist;
use super::{
    OfflineMode, PointsToSolution, SolveError, SolverConfig, SolverStats, Strategy, WorklistKind,
};
use crate::constraints::{Constraint, ConstraintSystem, NodeId};
use crate::ptset::PointsToSet;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::Instant;

/// A complex constraint, attached to the node whose points-to set drives it.
#[derive(Debug, Clone, Copy)]
enum Complex {
    /// `pts(dst) ⊇ pts(e)` for each element e: an edge e -> dst per element.
    LoadInto(NodeId),
    /// `pts(e) ⊇ pts(src)` for each element e: an edge src -> e per element.
    StoreFrom(NodeId),
    /// `pts(dst) ∋ objfield(obj(e), offset)` for each element e.
    FieldInto(NodeId, u32),
    /// Indirect call record to bind as function elements arrive.
    CallSite(u32),
}

/// Marker for an aborted solve; `run` attaches stats and the limit.
struct Capped;

struct Engine {
    cfg: SolverConfig,
    sys: ConstraintSystem,
    parent: Vec<u32>,
    rank: Vec<u8>,
    pts: Vec<PointsToSet>,
    /// Copy successors at representatives. Targets may be stale after
    /// merges; traversal resolves them through `find`.
    succs: Vec<BTreeSet<u32>>,
    complexes: Vec<Vec<Complex>>,
    /// Journal prefix already propagated along copy edges.
    copy_pos: Vec<usize>,
    /// Journal prefix already fired into complex constraints.
    cplx_pos: Vec<usize>,
    wl: Worklist,
    last_fired: Vec<u64>,
    topo_of: Vec<u64>,
    tick: u64,
    deep_stack: Vec<u32>,
    /// Offline cycle table: (deref'd var, representative), original ids.
    hcd_entries: Vec<(u32, u32)>,
    /// Journal prefix of pts(find(var)) each entry has examined; rewound to
    /// zero when the watched class merges into another.
    hcd_pos: Vec<usize>,
    /// Current class representative -> indices into `hcd_entries`.
    hcd_at: HashMap<u32, Vec<u32>>,
    probed: HashSet<(u32, u32)>,
    probe_queue: Vec<(u32, u32)>,
    call_graph: BTreeMap<crate::ir::InstrId, BTreeSet<u32>>,
    stats: SolverStats,
    /// Set by any insert, new edge, merge, or binding; wave iteration stops
    /// when a full pass leaves it clear.
    progress: bool,
    pops_since_refresh: u32,
}

pub(super) fn run(sys: ConstraintSystem, cfg: &SolverConfig) -> Result<PointsToSolution, SolveError> {
    let started = Instant::now();
    let table = sys.table.clone();
    let n = table.node_count();

    let mut warnings = Vec::new();
    if cfg.strategy == Strategy::Wave && cfg.worklist != WorklistKind::Fifo {
        warnings.push(
            "wave strategy schedules by topological waves; the worklist policy has no effect"
                .to_string(),
        );
    }

    let offline = match cfg.offline {
        OfflineMode::None => None,
        OfflineMode::Hvn => Some(hvn(&sys)),
        OfflineMode::Hu => Some(hu(&sys)),
    };
    let hcd_table = if cfg.cycles.hcd() {
        hcd(&sys)
    } else {
        HcdTable::default()
    };

    let mut eng = Engine {
        cfg: cfg.clone(),
        sys,
        parent: (0..n as u32).collect(),
        rank: vec![0; n],
        pts: (0..n).map(|_| PointsToSet::new(cfg.backend)).collect(),
        succs: vec![BTreeSet::new(); n],
        complexes: vec![Vec::new(); n],
        copy_pos: vec![0; n],
        cplx_pos: vec![0; n],
        wl: Worklist::new(cfg.worklist, n),
        last_fired: vec![0; n],
        topo_of: vec![0; n],
        tick: 0,
        deep_stack: Vec::new(),
        hcd_entries: Vec::new(),
        hcd_pos: Vec::new(),
        hcd_at: HashMap::new(),
        probed: HashSet::new(),
        probe_queue: Vec::new(),
        call_graph: BTreeMap::new(),
        stats: SolverStats::default(),
        progress: false,
        pops_since_refresh: 0,
    };

    if let Some(m) = offline {
        eng.stats.offline_merged = m.merged;
        for (i, r) in m.rep.iter().enumerate() {
            if r.index() != i {
                eng.parent[i] = r.0;
                eng.rank[r.index()] = 1;
            }
        }
    }

    // Attach complex constraints and indirect call sites first, then seed
    // sets and copy edges; edge insertion catches the target up with the
    // source's current set, so ordering within each phase is free.
    let constraints = eng.sys.constraints.clone();
    for c in &constraints {
        let (node, cplx) = match *c {
            Constraint::Load { dst, ptr } => (ptr, Complex::LoadInto(dst)),
            Constraint::Store { src, ptr } => (ptr, Complex::StoreFrom(src)),
            Constraint::Field { dst, base, offset } => (base, Complex::FieldInto(dst, offset)),
            _ => continue,
        };
        let r = eng.find(node.0);
        eng.complexes[r as usize].push(cplx);
    }
    let fnptrs: Vec<(u32, u32)> = eng
        .sys
        .icall_records
        .iter()
        .enumerate()
        .map(|(i, rec)| (rec.fnptr.0, i as u32))
        .collect();
    for (fnptr, idx) in fnptrs {
        let r = eng.find(fnptr);
        eng.complexes[r as usize].push(Complex::CallSite(idx));
    }
    for c in &constraints {
        match *c {
            Constraint::AddrOf { dst, elem } => {
                let r = eng.find(dst.0);
                if eng.pts[r as usize].insert(elem.0) {
                    eng.progress = true;
                }
            }
            Constraint::Copy { dst, src } => eng.add_edge(src.0, dst.0),
            _ => {}
        }
    }
    let direct = eng.sys.direct_calls.clone();
    for (site, f) in direct {
        eng.call_graph.entry(site).or_default().insert(f);
    }
    for (i, (v, r)) in hcd_table.entries.iter().enumerate() {
        eng.hcd_entries.push((v.0, r.0));
        eng.hcd_pos.push(0);
        let vr = eng.find(v.0);
        eng.hcd_at.entry(vr).or_default().push(i as u32);
    }

    let capped = if cfg.strategy == Strategy::Wave {
        eng.wave_loop().is_err()
    } else {
        for i in 0..n as u32 {
            if eng.find(i) == i && !eng.pts[i as usize].is_empty() {
                eng.enqueue(i);
            }
        }
        eng.worklist_loop().is_err()
    };

    eng.stats.millis = started.elapsed().as_millis() as u64;
    if capped {
        return Err(SolveError::PropagationLimit {
            limit: cfg.max_propagations,
            stats: eng.stats,
        });
    }

    let rep_of = (0..n as u32).map(|i| NodeId(eng.find(i))).collect();
    warnings.append(&mut eng.sys.warnings);
    Ok(PointsToSolution {
        table,
        rep_of,
        sets: eng.pts,
        call_graph: eng.call_graph,
        stats: eng.stats,
        warnings,
    })
}

impl Engine {
    fn find(&mut self, mut n: u32) -> u32 {
        loop {
            let p = self.parent[n as usize];
            if p == n {
                return n;
            }
            let gp = self.parent[p as usize];
            self.parent[n as usize] = gp;
            n = gp;
        }
    }

    fn priority(&self, n: u32) -> u64 {
        match self.cfg.worklist {
            WorklistKind::Lrf | WorklistKind::TwoLrf => self.last_fired[n as usize],
            WorklistKind::Topo => self.topo_of[n as usize],
            _ => 0,
        }
    }

    fn enqueue(&mut self, n: u32) {
        if self.cfg.strategy == Strategy::Wave {
            return;
        }
        let p = self.priority(n);
        self.wl.push(n, p);
    }

    /// Insert `keys` into the set of representative `t`; every call counts
    /// its full batch as propagation work.
    fn push_elems(&mut self, t: u32, keys: &[u32]) -> bool {
        self.stats.propagations += keys.len() as u64;
        let set = &mut self.pts[t as usize];
        let mut changed = false;
        for &k in keys {
            changed |= set.insert(k);
        }
        if changed {
            self.progress = true;
        }
        changed
    }

    /// Add a copy edge, catching the target up with the source's current
    /// set. A full no-change push over a nonempty set is the lazy cycle
    /// detection trigger.
    fn add_edge(&mut self, a: u32, b: u32) {
        let a = self.find(a);
        let b = self.find(b);
        if a == b {
            return;
        }
        if self.succs[a as usize].insert(b) {
            self.progress = true;
            if !self.pts[a as usize].is_empty() {
                let keys = self.pts[a as usize].to_vec();
                if self.push_elems(b, &keys) {
                    self.enqueue(b);
                } else if self.cfg.cycles.lcd() {
                    self.probe_queue.push((a, b));
                }
            }
        }
    }

    fn propagate_copies(&mut self, n: u32, batch: &[u32], deep: bool) {
        if batch.is_empty() {
            return;
        }
        let targets: Vec<u32> = self.succs[n as usize].iter().copied().collect();
        let mut seen = BTreeSet::new();
        for raw in targets {
            let t = self.find(raw);
            if t == n || !seen.insert(t) {
                continue;
            }
            if self.push_elems(t, batch) {
                self.enqueue(t);
                if deep {
                    self.deep_stack.push(t);
                }
            } else if self.cfg.cycles.lcd() {
                self.probe_queue.push((n, t));
            }
        }
    }

    fn fire_complexes(&mut self, n: u32, batch: &[u32]) {
        if batch.is_empty() || self.complexes[n as usize].is_empty() {
            return;
        }
        let list = self.complexes[n as usize].clone();
        for c in list {
            match c {
                Complex::LoadInto(d) => {
                    for &e in batch {
                        self.add_edge(e, d.0);
                    }
                }
                Complex::StoreFrom(s) => {
                    for &e in batch {
                        self.add_edge(s.0, e);
                    }
                }
                Complex::FieldInto(d, off) => {
                    let elems: Vec<u32> = batch
                        .iter()
                        .map(|&e| {
                            let (obj, _) = self.sys.table.elem_parts(NodeId(e));
                            self.sys.table.objfield(obj, off).0
                        })
                        .collect();
                    let d = self.find(d.0);
                    if self.push_elems(d, &elems) {
                        self.enqueue(d);
                    }
                }
                Complex::CallSite(idx) => {
                    for &e in batch {
                        if let Some(f) = self.sys.table.callable_target(NodeId(e)) {
                            self.bind_call(idx as usize, f);
                        }
                    }
                }
            }
        }
    }

    fn bind_call(&mut self, idx: usize, func: u32) {
        let rec = &self.sys.icall_records[idx];
        let instr = rec.instr;
        let arity_ok = self.sys.table.functions[func as usize].arity == rec.args.len();
        if arity_ok && self.call_graph.entry(instr).or_default().insert(func) {
            self.progress = true;
        }
        if let Ok(new_constraints) = self.sys.resolve_indirect_call(idx, func) {
            for c in new_constraints {
                match c {
                    Constraint::Copy { dst, src } => self.add_edge(src.0, dst.0),
                    other => unreachable!("indirect call binding produced {other:?}"),
                }
            }
        }
    }

    /// Merge the classes of `x` and `y`; returns the surviving
    /// representative. Cursors rewind so the merged class re-examines its
    /// whole journal.
    fn merge(&mut self, x: u32, y: u32) -> u32 {
        let x = self.find(x);
        let y = self.find(y);
        if x == y {
            return x;
        }
        let (w, l) = if self.rank[x as usize] > self.rank[y as usize] {
            (x, y)
        } else if self.rank[y as usize] > self.rank[x as usize] {
            (y, x)
        } else {
            let w = x.min(y);
            self.rank[w as usize] += 1;
            (w, x.max(y))
        };
        self.parent[l as usize] = w;
        let lset = std::mem::replace(&mut self.pts[l as usize], PointsToSet::new(self.cfg.backend));
        self.pts[w as usize].union_into(&lset);
        let lsuccs = std::mem::take(&mut self.succs[l as usize]);
        self.succs[w as usize].extend(lsuccs);
        let lcplx = std::mem::take(&mut self.complexes[l as usize]);
        self.complexes[w as usize].extend(lcplx);
        self.copy_pos[w as usize] = 0;
        self.cplx_pos[w as usize] = 0;
        if let Some(entries) = self.hcd_at.remove(&l) {
            for &i in &entries {
                self.hcd_pos[i as usize] = 0;
            }
            self.hcd_at.entry(w).or_default().extend(entries);
        }
        self.stats.collapsed += 1;
        self.progress = true;
        self.enqueue(w);
        w
    }

    /// Merge newly arrived elements of watched classes with their offline
    /// representative.
    fn process_hcd(&mut self, n: u32) {
        let Some(entries) = self.hcd_at.get(&n).cloned() else {
            return;
        };
        for i in entries {
            loop {
                let (v_raw, rep_raw) = self.hcd_entries[i as usize];
                let vr = self.find(v_raw);
                let len = self.pts[vr as usize].len();
                let pos = self.hcd_pos[i as usize];
                if pos >= len {
                    break;
                }
                let batch: Vec<u32> = self.pts[vr as usize].journal_from(pos).to_vec();
                self.hcd_pos[i as usize] = pos + batch.len();
                for e in batch {
                    let er = self.find(e);
                    let rr = self.find(rep_raw);
                    if er != rr {
                        self.merge(er, rr);
                    }
                }
            }
        }
    }

    fn run_probes(&mut self) {
        while let Some((a, b)) = self.probe_queue.pop() {
            let a = self.find(a);
            let b = self.find(b);
            if a == b || !self.probed.insert((a, b)) {
                continue;
            }
            self.stats.lcd_probes += 1;
            if self.reaches(b, a) {
                self.collapse_cycle_at(a);
            }
        }
    }

    fn reaches(&mut self, from: u32, to: u32) -> bool {
        let mut seen = HashSet::new();
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if !seen.insert(v) {
                continue;
            }
            let raw: Vec<u32> = self.succs[v as usize].iter().copied().collect();
            for t in raw {
                let t = self.find(t);
                if !seen.contains(&t) {
                    stack.push(t);
                }
            }
        }
        false
    }

    /// Current representatives and their find-resolved adjacency.
    fn rep_graph(&mut self) -> (Vec<u32>, HashMap<u32, Vec<u32>>) {
        let n = self.parent.len() as u32;
        let mut reps = Vec::new();
        for i in 0..n {
            if self.find(i) == i {
                reps.push(i);
            }
        }
        let mut adj = HashMap::with_capacity(reps.len());
        for &r in &reps {
            let raw: Vec<u32> = self.succs[r as usize].iter().copied().collect();
            let mut out: Vec<u32> = raw
                .into_iter()
                .map(|t| self.find(t))
                .filter(|&t| t != r)
                .collect();
            out.sort_unstable();
            out.dedup();
            adj.insert(r, out);
        }
        (reps, adj)
    }

    fn collapse_cycle_at(&mut self, a: u32) {
        let (reps, adj) = self.rep_graph();
        let comps = tarjan_sccs(self.parent.len(), &reps, |v, out| {
            out.extend_from_slice(&adj[&v])
        });
        for comp in comps {
            if comp.len() > 1 && comp.contains(&a) {
                let mut w = comp[0];
                for &m in &comp[1..] {
                    w = self.merge(w, m);
                }
                return;
            }
        }
    }

    fn refresh_topo(&mut self) {
        let (_, adj) = self.rep_graph();
        let reps: Vec<u32> = adj.keys().copied().collect();
        let mut sorted = reps;
        sorted.sort_unstable();
        let comps = tarjan_sccs(self.parent.len(), &sorted, |v, out| {
            out.extend_from_slice(&adj[&v])
        });
        let mut pos = vec![0u64; self.parent.len()];
        for (i, comp) in comps.iter().rev().enumerate() {
            for &m in comp {
                pos[m as usize] = i as u64;
            }
        }
        for i in 0..self.parent.len() as u32 {
            let r = self.find(i);
            self.topo_of[i as usize] = pos[r as usize];
        }
        let topo = self.topo_of.clone();
        self.wl.rebuild_topo(|id| topo[id as usize]);
    }

    fn capped(&self) -> bool {
        self.stats.propagations > self.cfg.max_propagations
    }

    fn worklist_loop(&mut self) -> Result<(), Capped> {
        let naive = self.cfg.strategy == Strategy::Naive;
        let deep = self.cfg.strategy == Strategy::Deep;
        if self.cfg.worklist == WorklistKind::Topo {
            self.refresh_topo();
        }
        while let Some(raw) = self.wl.pop(&self.last_fired) {
            let n = self.find(raw);
            if n != raw {
                continue;
            }
            self.stats.pops += 1;
            self.tick += 1;
            self.last_fired[n as usize] = self.tick;
            if self.cfg.worklist == WorklistKind::Topo {
                self.pops_since_refresh += 1;
                if self.pops_since_refresh >= self.cfg.topo_refresh {
                    self.pops_since_refresh = 0;
                    self.refresh_topo();
                }
            }
            if self.cfg.cycles.hcd() {
                self.process_hcd(n);
                if self.find(n) != n {
                    continue;
                }
            }

            let cstart = self.cplx_pos[n as usize];
            let cbatch: Vec<u32> = if naive {
                self.pts[n as usize].to_vec()
            } else {
                self.pts[n as usize].journal_from(cstart).to_vec()
            };
            self.cplx_pos[n as usize] = self.pts[n as usize].len();
            self.fire_complexes(n, &cbatch);

            let pstart = self.copy_pos[n as usize];
            let pbatch: Vec<u32> = if naive {
                self.pts[n as usize].to_vec()
            } else {
                self.pts[n as usize].journal_from(pstart).to_vec()
            };
            self.copy_pos[n as usize] = self.pts[n as usize].len();
            self.propagate_copies(n, &pbatch, deep);

            while let Some(raw) = self.deep_stack.pop() {
                let m = self.find(raw);
                let start = self.copy_pos[m as usize];
                let len = self.pts[m as usize].len();
                if start >= len {
                    continue;
                }
                let b: Vec<u32> = self.pts[m as usize].journal_from(start).to_vec();
                self.copy_pos[m as usize] = len;
                self.propagate_copies(m, &b, true);
            }

            self.run_probes();
            if self.capped() {
                return Err(Capped);
            }
        }
        Ok(())
    }

    fn wave_loop(&mut self) -> Result<(), Capped> {
        loop {
            self.stats.waves += 1;
            self.progress = false;

            // Condense: collapse every strongly connected copy component.
            let (reps, adj) = self.rep_graph();
            let comps = tarjan_sccs(self.parent.len(), &reps, |v, out| {
                out.extend_from_slice(&adj[&v])
            });
            for comp in &comps {
                if comp.len() > 1 {
                    let mut w = comp[0];
                    for &m in &comp[1..] {
                        w = self.merge(w, m);
                    }
                }
            }

            // One topological wave of deltas, sources first.
            for comp in comps.iter().rev() {
                let w = self.find(comp[0]);
                let start = self.copy_pos[w as usize];
                let len = self.pts[w as usize].len();
                if start >= len {
                    continue;
                }
                let batch: Vec<u32> = self.pts[w as usize].journal_from(start).to_vec();
                self.copy_pos[w as usize] = len;
                self.propagate_copies(w, &batch, false);
            }

            // Fire complex constraints on the deltas the wave produced.
            for i in 0..self.parent.len() as u32 {
                if self.find(i) != i {
                    continue;
                }
                let start = self.cplx_pos[i as usize];
                let len = self.pts[i as usize].len();
                if start >= len {
                    continue;
                }
                let batch: Vec<u32> = self.pts[i as usize].journal_from(start).to_vec();
                self.cplx_pos[i as usize] = len;
                self.fire_complexes(i, &batch);
            }

            if self.cfg.cycles.hcd() {
                let entries: Vec<u32> = (0..self.hcd_entries.len() as u32).collect();
                for i in entries {
                    let v = self.hcd_entries[i as usize].0;
                    let vr = self.find(v);
                    self.process_hcd(vr);
                }
            }
            self.run_probes();
            if self.capped() {
                return Err(Capped);
            }
            if !self.progress {
                return Ok(());
            }
        }
    }
}
