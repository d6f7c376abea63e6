//! The unified query interface: thin adapters over every analysis's
//! finished solution, so clients ask about aliasing and points-to without
//! touching backend internals.
//!
//! Every query runs unchanged against all backends; answers differ only in
//! precision. Aliasing is tested at (object, field) granularity where the
//! backend provides it and at object granularity for unification results.
//! Context- and flow-sensitive results answer point-free queries with
//! their context (and point) projections; flow-sensitive backends accept
//! an optional program point that refines the answer to that point's
//! state.
//!
//! All queries are pure reads over the precomputed projections — no
//! re-solving, safe to share across threads.

use crate::andersen::PointsToSolution;
use crate::constraints::{NodeId, NodeTable, ObjOrigin, ObjectId};
use crate::interp::Boundary;
use crate::ir::{InstrId, InstrKind, PointerModule};
use crate::sensitivity::flow::{unpack, FlowResult};
use crate::sensitivity::kcfa::KcfaResult;
use crate::steensgaard::SteensgaardResult;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use thiserror::Error;

/// Which analysis produced a result; carried through dumps and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisKind {
    /// Flow- and context-insensitive inclusion (subset) analysis.
    Fici,
    /// Unification analysis.
    Steens,
    /// Call-string context-sensitive inclusion analysis.
    Kcfa { k: usize },
    /// Flow-sensitive, context-insensitive.
    Fs,
    /// Flow- and context-sensitive.
    Fscs { k: usize },
}

impl std::fmt::Display for AnalysisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AnalysisKind::Fici => write!(f, "fici"),
            AnalysisKind::Steens => write!(f, "steens"),
            AnalysisKind::Kcfa { k } => write!(f, "kcfa(k={k})"),
            AnalysisKind::Fs => write!(f, "fs"),
            AnalysisKind::Fscs { k } => write!(f, "fscs(k={k})"),
        }
    }
}

/// One element of a points-to answer. `field` is `None` for backends that
/// track whole objects (unification).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ElementKey {
    pub object: ObjectId,
    pub field: Option<u32>,
}

impl ElementKey {
    pub fn display(&self, table: &NodeTable) -> String {
        let obj = &table.object(self.object).display;
        match self.field {
            Some(f) => format!("{obj}#{f}"),
            None => obj.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("unknown variable {0}")]
    UnknownVar(String),
    #[error("unknown function @{0}")]
    UnknownFunction(String),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("line {line}: malformed query `{text}`")]
    BadQuery { line: usize, text: String },
}

enum Backend {
    Inclusion(PointsToSolution),
    Unification(SteensgaardResult),
    Contextual(KcfaResult),
    Flow(FlowResult),
}

/// A finished analysis behind the uniform query surface.
pub struct AnalysisResult {
    pub kind: AnalysisKind,
    pub table: Arc<NodeTable>,
    backend: Backend,
    /// Point- and context-projected per-variable sets, the object of all
    /// point-free queries.
    sets: BTreeMap<NodeId, BTreeSet<ElementKey>>,
    pub call_graph: BTreeMap<InstrId, BTreeSet<u32>>,
    entry_func: u32,
    /// (reads, writes) of loads, stores, and call sites (aggregated over
    /// transitive callees).
    mod_ref: HashMap<InstrId, (BTreeSet<ObjectId>, BTreeSet<ObjectId>)>,
    pub warnings: Vec<String>,
}

fn elems_to_keys(table: &NodeTable, elems: impl IntoIterator<Item = NodeId>) -> BTreeSet<ElementKey> {
    elems
        .into_iter()
        .map(|e| {
            let (object, field) = table.elem_parts(e);
            ElementKey { object, field: Some(field) }
        })
        .collect()
}

impl AnalysisResult {
    pub fn from_inclusion(m: &PointerModule, sol: PointsToSolution) -> Self {
        let table = sol.table.clone();
        let sets = table
            .var_nodes
            .iter()
            .map(|&v| (v, elems_to_keys(&table, sol.points_to(v))))
            .collect();
        let call_graph = sol.call_graph.clone();
        let warnings = sol.warnings.clone();
        Self::assemble(m, AnalysisKind::Fici, table, Backend::Inclusion(sol), sets, call_graph, warnings)
    }

    pub fn from_unification(m: &PointerModule, s: SteensgaardResult) -> Self {
        let table = s.table.clone();
        let sets = table
            .var_nodes
            .iter()
            .map(|&v| {
                let keys = s
                    .points_to_objects(v)
                    .into_iter()
                    .map(|object| ElementKey { object, field: None })
                    .collect();
                (v, keys)
            })
            .collect();
        let call_graph = s.call_graph.clone();
        let warnings = s.warnings.clone();
        Self::assemble(m, AnalysisKind::Steens, table, Backend::Unification(s), sets, call_graph, warnings)
    }

    pub fn from_contextual(m: &PointerModule, r: KcfaResult) -> Self {
        let table = r.table.clone();
        let proj = r.project_ci();
        let sets = table
            .var_nodes
            .iter()
            .map(|&v| {
                let elems = proj.get(&v).into_iter().flatten().copied();
                (v, elems_to_keys(&table, elems))
            })
            .collect();
        let kind = AnalysisKind::Kcfa { k: r.k };
        let call_graph = r.call_graph.clone();
        let warnings = r.warnings.clone();
        Self::assemble(m, kind, table, Backend::Contextual(r), sets, call_graph, warnings)
    }

    pub fn from_flow(m: &PointerModule, r: FlowResult) -> Self {
        let table = r.table.clone();
        // One pass over all environments; per-variable projection would
        // rescan them for every variable.
        let mut raw: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for env in r.ins.values().chain(r.outs.values()) {
            for (&loc, set) in env {
                raw.entry(unpack(loc).1)
                    .or_default()
                    .extend(set.iter().map(|&e| unpack(e).1));
            }
        }
        let sets = table
            .var_nodes
            .iter()
            .map(|&v| {
                let elems = raw.get(&v).into_iter().flatten().copied();
                (v, elems_to_keys(&table, elems))
            })
            .collect();
        let kind = if r.k == 0 { AnalysisKind::Fs } else { AnalysisKind::Fscs { k: r.k } };
        let call_graph = r.call_graph.clone();
        Self::assemble(m, kind, table, Backend::Flow(r), sets, call_graph, Vec::new())
    }

    fn assemble(
        m: &PointerModule,
        kind: AnalysisKind,
        table: Arc<NodeTable>,
        backend: Backend,
        sets: BTreeMap<NodeId, BTreeSet<ElementKey>>,
        call_graph: BTreeMap<InstrId, BTreeSet<u32>>,
        warnings: Vec<String>,
    ) -> Self {
        let entry_func = table.function_by_name(&m.entry).expect("validated entry");
        let mod_ref = compute_mod_ref(m, &table, &sets, &call_graph);
        AnalysisResult { kind, table, backend, sets, call_graph, entry_func, mod_ref, warnings }
    }

    /// Resolve `%p`, `%func.p`, `p`, or `func.p`; a bare name means the
    /// entry function. `$ret` names a function's synthetic return node.
    pub fn resolve_var(&self, name: &str) -> Result<NodeId, QueryError> {
        let trimmed = name.strip_prefix('%').unwrap_or(name);
        let (func, var) = match trimmed.split_once('.') {
            Some((f, v)) => {
                let fi = self
                    .table
                    .function_by_name(f)
                    .ok_or_else(|| QueryError::UnknownFunction(f.to_string()))?;
                (fi, v)
            }
            None => (self.entry_func, trimmed),
        };
        if var == "$ret" {
            return Ok(self.table.functions[func as usize].ret_node.expect("ret node"));
        }
        self.table
            .var_node(func, var)
            .ok_or_else(|| QueryError::UnknownVar(name.to_string()))
    }

    /// Resolve an object token: an exact display (`@g`, `alloc:main.entry.0`)
    /// or an allocation label, which may name several sites.
    pub fn resolve_objects(&self, token: &str) -> Result<Vec<ObjectId>, QueryError> {
        if let Some(o) = self.table.object_by_display(token) {
            return Ok(vec![o]);
        }
        let by_label: Vec<ObjectId> = (0..self.table.object_count() as u32)
            .map(ObjectId)
            .filter(|&o| {
                matches!(&self.table.object(o).origin,
                         ObjOrigin::Alloc { label, .. } if label == token)
            })
            .collect();
        if by_label.is_empty() {
            return Err(QueryError::UnknownObject(token.to_string()));
        }
        Ok(by_label)
    }

    /// The solved points-to set of a variable, sorted, at the backend's
    /// granularity.
    pub fn points_to_set(&self, p: &str) -> Result<BTreeSet<ElementKey>, QueryError> {
        let v = self.resolve_var(p)?;
        Ok(self.sets.get(&v).cloned().unwrap_or_default())
    }

    /// Whether two pointers may alias: their sets intersect.
    pub fn may_alias(&self, p: &str, q: &str) -> Result<bool, QueryError> {
        self.may_alias_at(p, q, None)
    }

    /// `may_alias` refined to one program point for flow-sensitive
    /// backends; other backends answer the same at every point.
    pub fn may_alias_at(
        &self,
        p: &str,
        q: &str,
        point: Option<(InstrId, Boundary)>,
    ) -> Result<bool, QueryError> {
        let (pv, qv) = (self.resolve_var(p)?, self.resolve_var(q)?);
        if let (Some((instr, at)), Backend::Flow(r)) = (point, &self.backend) {
            let (ps, qs) = (flow_sets_at(r, instr, at, pv), flow_sets_at(r, instr, at, qv));
            return Ok(!ps.is_disjoint(&qs));
        }
        let empty = BTreeSet::new();
        let ps = self.sets.get(&pv).unwrap_or(&empty);
        let qs = self.sets.get(&qv).unwrap_or(&empty);
        Ok(!ps.is_disjoint(qs))
    }

    /// Whether `p` may point to (any field of) the named object.
    pub fn pointed_by(&self, p: &str, object: &str) -> Result<bool, QueryError> {
        let objs = self.resolve_objects(object)?;
        let set = self.points_to_set(p)?;
        Ok(set.iter().any(|k| objs.contains(&k.object)))
    }

    /// All variables aliasing `v` (those with empty sets never alias, `v`
    /// itself included when its set is nonempty).
    pub fn alias_set(&self, v: &str) -> Result<BTreeSet<NodeId>, QueryError> {
        let vn = self.resolve_var(v)?;
        let base = match self.sets.get(&vn) {
            Some(s) if !s.is_empty() => s,
            _ => return Ok(BTreeSet::new()),
        };
        Ok(self
            .sets
            .iter()
            .filter(|(_, s)| !s.is_disjoint(base))
            .map(|(&w, _)| w)
            .collect())
    }

    /// (reads, writes) object sets of an instruction: loads read through
    /// their pointer, stores write through theirs, calls aggregate their
    /// transitive callees, everything else touches nothing.
    pub fn mod_ref(&self, i: InstrId) -> (BTreeSet<ObjectId>, BTreeSet<ObjectId>) {
        self.mod_ref.get(&i).cloned().unwrap_or_default()
    }

    /// The full per-variable table behind the point-free queries.
    pub fn sets(&self) -> &BTreeMap<NodeId, BTreeSet<ElementKey>> {
        &self.sets
    }

    /// The flow backend, when this result came from one.
    pub(crate) fn flow_backend(&self) -> Option<&FlowResult> {
        match &self.backend {
            Backend::Flow(f) => Some(f),
            _ => None,
        }
    }

    /// The backend's counters, for reports.
    pub fn stats_line(&self) -> String {
        match &self.backend {
            Backend::Inclusion(s) => s.stats.display_line(),
            Backend::Unification(s) => s.stats.display_line(),
            Backend::Contextual(s) => s.stats.display_line(),
            Backend::Flow(s) => s.stats.display_line(),
        }
    }
}

/// A flow backend's set for `v` at one point, context-projected.
pub(crate) fn flow_sets_at(
    r: &FlowResult,
    instr: InstrId,
    at: Boundary,
    v: NodeId,
) -> BTreeSet<ElementKey> {
    let mut out = BTreeSet::new();
    for tag in 0..r.contexts.len() as u32 {
        for &e in &r.pts_at(instr, at, tag, tag, v) {
            let (object, field) = r.table.elem_parts(unpack(e).1);
            out.insert(ElementKey { object, field: Some(field) });
        }
    }
    out
}

fn compute_mod_ref(
    m: &PointerModule,
    table: &NodeTable,
    sets: &BTreeMap<NodeId, BTreeSet<ElementKey>>,
    call_graph: &BTreeMap<InstrId, BTreeSet<u32>>,
) -> HashMap<InstrId, (BTreeSet<ObjectId>, BTreeSet<ObjectId>)> {
    let objproj = |v: NodeId| -> BTreeSet<ObjectId> {
        sets.get(&v).into_iter().flatten().map(|k| k.object).collect()
    };
    let nfuncs = m.functions.len();
    let mut per_instr: HashMap<InstrId, (BTreeSet<ObjectId>, BTreeSet<ObjectId>)> = HashMap::new();
    let mut direct: Vec<(BTreeSet<ObjectId>, BTreeSet<ObjectId>)> = vec![Default::default(); nfuncs];
    let mut call_sites: Vec<Vec<InstrId>> = vec![Vec::new(); nfuncs];
    for (fi, f) in m.functions.iter().enumerate() {
        for b in &f.blocks {
            for i in &b.instrs {
                match &i.kind {
                    InstrKind::Load { ptr } => {
                        let reads = objproj(table.var_node(fi as u32, ptr).expect("registered"));
                        direct[fi].0.extend(reads.iter().copied());
                        per_instr.insert(i.id, (reads, BTreeSet::new()));
                    }
                    InstrKind::Store { ptr, .. } => {
                        let writes = objproj(table.var_node(fi as u32, ptr).expect("registered"));
                        direct[fi].1.extend(writes.iter().copied());
                        per_instr.insert(i.id, (BTreeSet::new(), writes));
                    }
                    InstrKind::Call { .. } | InstrKind::ICall { .. } => {
                        call_sites[fi].push(i.id);
                    }
                    _ => {}
                }
            }
        }
    }
    // Transitive callee summaries, to a fixpoint (the call graph is tiny).
    let mut summary = direct;
    loop {
        let mut changed = false;
        for fi in 0..nfuncs {
            for ci in 0..call_sites[fi].len() {
                let site = call_sites[fi][ci];
                for &t in call_graph.get(&site).into_iter().flatten() {
                    let (r, w) = summary[t as usize].clone();
                    for o in r {
                        changed |= summary[fi].0.insert(o);
                    }
                    for o in w {
                        changed |= summary[fi].1.insert(o);
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    for sites in &call_sites {
        for &site in sites {
            let mut agg: (BTreeSet<ObjectId>, BTreeSet<ObjectId>) = Default::default();
            for &t in call_graph.get(&site).into_iter().flatten() {
                agg.0.extend(summary[t as usize].0.iter().copied());
                agg.1.extend(summary[t as usize].1.iter().copied());
            }
            per_instr.insert(site, agg);
        }
    }
    per_instr
}

/// Answer a query script: one query per line (`ALIAS %p %q`, `PTS %p`,
/// `PB %p OBJ`, `ALIASSET %v`), one answer line per query, `#` comments
/// and blank lines skipped.
pub fn run_script(r: &AnalysisResult, script: &str) -> Result<Vec<String>, QueryError> {
    let mut out = Vec::new();
    for (idx, raw) in script.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || QueryError::BadQuery { line: idx + 1, text: line.to_string() };
        let toks: Vec<&str> = line.split_whitespace().collect();
        let answer = match toks.as_slice() {
            ["ALIAS", p, q] => yes_no(r.may_alias(p, q)?),
            ["PTS", p] => {
                let set = r.points_to_set(p)?;
                braces(set.iter().map(|k| k.display(&r.table)))
            }
            ["PB", p, obj] => yes_no(r.pointed_by(p, obj)?),
            ["ALIASSET", v] => {
                let vars = r.alias_set(v)?;
                let mut names: Vec<String> =
                    vars.iter().map(|&w| r.table.display(w).to_string()).collect();
                names.sort();
                braces(names.into_iter())
            }
            _ => return Err(bad()),
        };
        out.push(format!("{line} => {answer}"));
    }
    Ok(out)
}

fn yes_no(b: bool) -> String {
    (if b { "yes" } else { "no" }).to_string()
}

fn braces(items: impl Iterator<Item = String>) -> String {
    format!("{{{}}}", items.collect::<Vec<_>>().join(", "))
}
