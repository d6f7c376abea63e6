//! Unification-based points-to analysis.
//!
//! Every variable and every object (at object granularity — fields are not
//! distinguished) lives in a union-find cell. Each equivalence class holds
//! at most one outgoing points-to link; when two classes merge, their
//! targets merge too. An assignment never creates directed flow: both sides
//! end up pointing into the same class, which is what makes the analysis
//! near-linear and strictly coarser than the subset analysis.
//!
//! Rules, with `t(x)` the target class of `x` (created on demand) and `join`
//! the recursive class merge:
//!
//! * `d = &o`   join(t(d), cell(o))
//! * `d = s`    join(t(d), t(s))
//! * `d = *p`   join(t(d), t(t(p)))
//! * `*p = s`   join(t(t(p)), t(s))
//! * `d = field s` behaves like `d = s` at object granularity.
//!
//! Indirect calls bind every address-taken function of matching arity;
//! target discovery cannot piggyback on set growth here because there are
//! no growing sets.

use crate::constraints::{Constraint, ConstraintSystem, NodeId, ObjectId};
use crate::ir::InstrId;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Default)]
pub struct SteensStats {
    pub unions: u64,
    pub finds: u64,
    pub millis: u64,
}

impl SteensStats {
    /// The stable stats line exposed by the CLI.
    pub fn display_line(&self) -> String {
        format!("unions={}, finds={}, millis={}", self.unions, self.finds, self.millis)
    }
}

/// Union-find cells with one points-to link per class.
struct Cells {
    parent: Vec<u32>,
    rank: Vec<u8>,
    link: Vec<Option<u32>>,
    unions: u64,
    finds: u64,
}

impl Cells {
    fn new(n: usize) -> Self {
        Cells {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            link: vec![None; n],
            unions: 0,
            finds: 0,
        }
    }

    fn fresh(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.rank.push(0);
        self.link.push(None);
        id
    }

    fn find(&mut self, mut c: u32) -> u32 {
        self.finds += 1;
        loop {
            let p = self.parent[c as usize];
            if p == c {
                return c;
            }
            let gp = self.parent[p as usize];
            self.parent[c as usize] = gp;
            c = gp;
        }
    }

    /// The target class of `c`, creating a placeholder if none exists yet.
    fn target(&mut self, c: u32) -> u32 {
        let r = self.find(c);
        match self.link[r as usize] {
            Some(t) => self.find(t),
            None => {
                let t = self.fresh();
                self.link[r as usize] = Some(t);
                t
            }
        }
    }

    /// Merge two classes and, recursively, their targets.
    fn join(&mut self, a: u32, b: u32) {
        let mut stack = vec![(a, b)];
        while let Some((a, b)) = stack.pop() {
            let a = self.find(a);
            let b = self.find(b);
            if a == b {
                continue;
            }
            let (w, l) = if self.rank[a as usize] > self.rank[b as usize] {
                (a, b)
            } else if self.rank[b as usize] > self.rank[a as usize] {
                (b, a)
            } else {
                let w = a.min(b);
                self.rank[w as usize] += 1;
                (w, a.max(b))
            };
            self.parent[l as usize] = w;
            self.unions += 1;
            match (self.link[w as usize], self.link[l as usize]) {
                (Some(x), Some(y)) => stack.push((x, y)),
                (None, Some(y)) => self.link[w as usize] = Some(y),
                _ => {}
            }
        }
    }
}

/// A finished unification analysis. Cell structure is frozen with full path
/// compression so queries need no mutation.
pub struct SteensgaardResult {
    pub table: Arc<crate::constraints::NodeTable>,
    /// Fully compressed representative per cell.
    parent: Vec<u32>,
    /// Per representative: representative of the target class, if any.
    link: Vec<Option<u32>>,
    /// Objects per class representative.
    class_objects: BTreeMap<u32, Vec<ObjectId>>,
    node_count: usize,
    pub call_graph: BTreeMap<InstrId, BTreeSet<u32>>,
    pub stats: SteensStats,
    pub warnings: Vec<String>,
}

impl SteensgaardResult {
    fn cell_of_var(v: NodeId) -> u32 {
        v.0
    }

    fn cell_of_obj(&self, o: ObjectId) -> u32 {
        (self.node_count + o.index()) as u32
    }

    /// Whether two variables were unified into one cell class.
    pub fn same_class(&self, a: NodeId, b: NodeId) -> bool {
        self.parent[a.index()] == self.parent[b.index()]
    }

    /// The class a variable points into, if it points anywhere.
    pub fn target_class(&self, v: NodeId) -> Option<u32> {
        let r = self.parent[Self::cell_of_var(v) as usize];
        self.link[r as usize].map(|t| self.parent[t as usize])
    }

    /// The target class of an object's contents.
    pub fn object_target_class(&self, o: ObjectId) -> Option<u32> {
        let r = self.parent[self.cell_of_obj(o) as usize];
        self.link[r as usize].map(|t| self.parent[t as usize])
    }

    /// Objects in the class a variable points into, ascending.
    pub fn points_to_objects(&self, v: NodeId) -> Vec<ObjectId> {
        self.target_class(v)
            .and_then(|c| self.class_objects.get(&c).cloned())
            .unwrap_or_default()
    }

    /// Objects in the class an object's contents point into, ascending —
    /// the memory-side counterpart of [`Self::points_to_objects`].
    pub fn object_points_to_objects(&self, o: ObjectId) -> Vec<ObjectId> {
        self.object_target_class(o)
            .and_then(|c| self.class_objects.get(&c).cloned())
            .unwrap_or_default()
    }

    /// Two pointers may alias when they point into the same non-empty class.
    pub fn may_alias(&self, a: NodeId, b: NodeId) -> bool {
        match (self.target_class(a), self.target_class(b)) {
            (Some(x), Some(y)) => x == y && self.class_objects.contains_key(&x),
            _ => false,
        }
    }

    /// Per-variable sets projected as field-0 elements, the common currency
    /// with the subset analyses.
    pub fn project_sets(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        self.table
            .var_nodes
            .iter()
            .map(|&v| {
                let elems = self
                    .points_to_objects(v)
                    .into_iter()
                    .map(|o| self.table.objfield(o, 0))
                    .collect();
                (v, elems)
            })
            .collect()
    }
}

/// Run the unification analysis over a constraint system.
pub fn solve_steensgaard(sys: &ConstraintSystem) -> SteensgaardResult {
    let started = Instant::now();
    let table = sys.table.clone();
    let n = table.node_count();
    let objs = table.object_count();
    let mut cells = Cells::new(n + objs);
    let obj_cell = |o: ObjectId| (n + o.index()) as u32;

    for c in &sys.constraints {
        match *c {
            Constraint::AddrOf { dst, elem } => {
                let (obj, _) = table.elem_parts(elem);
                let t = cells.target(dst.0);
                cells.join(t, obj_cell(obj));
            }
            Constraint::Copy { dst, src } | Constraint::Field { dst, base: src, .. } => {
                let td = cells.target(dst.0);
                let ts = cells.target(src.0);
                cells.join(td, ts);
            }
            Constraint::Load { dst, ptr } => {
                let tp = cells.target(ptr.0);
                let ttp = cells.target(tp);
                let td = cells.target(dst.0);
                cells.join(td, ttp);
            }
            Constraint::Store { src, ptr } => {
                let tp = cells.target(ptr.0);
                let ttp = cells.target(tp);
                let ts = cells.target(src.0);
                cells.join(ttp, ts);
            }
        }
    }

    let mut call_graph: BTreeMap<InstrId, BTreeSet<u32>> = BTreeMap::new();
    for (site, f) in &sys.direct_calls {
        call_graph.entry(*site).or_default().insert(*f);
    }
    for rec in &sys.icall_records {
        for &f in &table.address_taken {
            let meta = &table.functions[f as usize];
            if meta.arity != rec.args.len() {
                continue;
            }
            call_graph.entry(rec.instr).or_default().insert(f);
            for (p, a) in meta.param_nodes.iter().zip(&rec.args) {
                let tp = cells.target(p.0);
                let ta = cells.target(a.0);
                cells.join(tp, ta);
            }
            if let (Some(d), Some(r)) = (rec.dest, meta.ret_node) {
                let td = cells.target(d.0);
                let tr = cells.target(r.0);
                cells.join(td, tr);
            }
        }
    }

    // Freeze: fully compress, pin links at representatives.
    let total = cells.parent.len();
    let mut parent = vec![0u32; total];
    for i in 0..total as u32 {
        parent[i as usize] = cells.find(i);
    }
    let mut link = vec![None; total];
    for i in 0..total {
        if parent[i] == i as u32 {
            link[i] = cells.link[i].map(|t| cells.find(t));
        }
    }
    let mut class_objects: BTreeMap<u32, Vec<ObjectId>> = BTreeMap::new();
    for o in 0..objs {
        let rep = parent[n + o];
        class_objects.entry(rep).or_default().push(ObjectId(o as u32));
    }

    let stats = SteensStats {
        unions: cells.unions,
        finds: cells.finds,
        millis: started.elapsed().as_millis() as u64,
    };
    SteensgaardResult {
        table,
        parent,
        link,
        class_objects,
        node_count: n,
        call_graph,
        stats,
        warnings: Vec::new(),
    }
}
