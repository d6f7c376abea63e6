//! Result serialization: canonical dumps, caching, and differencing.
//!
//! A dump is a human-diffable structured-text document with sorted keys,
//! identical to the byte for identical (module, configuration) pairs:
//!
//! ```text
//! [meta]
//! analysis = fici
//! config = ...
//! granularity = field
//! module_sha256 = ...
//! version = ...
//!
//! [points_to]
//! %main.p = {alloc:main.entry.0#0}
//! ...
//! ```
//!
//! The `[meta]` section is the provenance header; rerunning with an
//! unchanged module and configuration can recognize an existing dump by
//! that header alone and skip the analysis. Statistics are serialized
//! without wall-clock fields so dumps stay byte-deterministic.
//!
//! `diff_dumps` compares two parsed dumps variable by variable, either for
//! equality or for per-variable subset (the precision-lattice check). When
//! the dumps record different granularities — a unification analysis
//! tracks whole objects where the inclusion analyses track fields — both
//! sides are collapsed to object granularity first.

use crate::ir::PointerModule;
use crate::query::{flow_sets_at, AnalysisKind, AnalysisResult};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::interp::Boundary;

/// Hex SHA-256 of the module source bytes, the dump's provenance anchor.
pub fn module_sha256(src: &str) -> String {
    let mut h = Sha256::new();
    h.update(src.as_bytes());
    hex::encode(h.finalize())
}

/// Set granularity recorded by an analysis kind: unification collapses
/// fields, everything else distinguishes them.
pub fn granularity_of(kind: &AnalysisKind) -> &'static str {
    match kind {
        AnalysisKind::Steens => "object",
        _ => "field",
    }
}

/// The provenance header. Dumps begin with exactly these bytes, which is
/// what makes the cache test a prefix check.
pub fn meta_section(analysis: &str, config: &str, granularity: &str, sha: &str) -> String {
    format!(
        "[meta]\nanalysis = {analysis}\nconfig = {config}\ngranularity = {granularity}\n\
         module_sha256 = {sha}\nversion = {}\n",
        env!("CARGO_PKG_VERSION")
    )
}

/// Does an existing dump carry this provenance header?
pub fn cache_hit(existing: &str, meta: &str) -> bool {
    existing.starts_with(meta)
}

fn strip_millis(stats: &str) -> String {
    stats
        .split(", ")
        .filter(|part| !part.starts_with("millis="))
        .collect::<Vec<_>>()
        .join(", ")
}

fn braces(items: impl Iterator<Item = String>) -> String {
    format!("{{{}}}", items.collect::<Vec<_>>().join(", "))
}

/// Serialize a result. `src` is the module source the result came from and
/// `config` the canonical configuration line chosen by the caller.
pub fn render(m: &PointerModule, r: &AnalysisResult, src: &str, config: &str) -> String {
    let mut out = meta_section(
        &r.kind.to_string(),
        config,
        granularity_of(&r.kind),
        &module_sha256(src),
    );

    out.push_str("\n[points_to]\n");
    let mut lines: Vec<(String, String)> = r
        .sets()
        .iter()
        .map(|(&v, set)| {
            (
                r.table.display(v).to_string(),
                braces(set.iter().map(|k| k.display(&r.table))),
            )
        })
        .collect();
    lines.sort();
    for (var, set) in lines {
        out.push_str(&format!("{var} = {set}\n"));
    }

    if let Some(f) = r.flow_backend() {
        out.push_str("\n[points_to_at]\n");
        let mut vars: Vec<_> = r.table.var_nodes.iter().copied().collect();
        vars.sort_by(|&a, &b| r.table.display(a).cmp(r.table.display(b)));
        for i in m.instrs() {
            for (at, tag) in [(Boundary::In, "in"), (Boundary::Out, "out")] {
                for &v in &vars {
                    let set = flow_sets_at(f, i.id, at, v);
                    if set.is_empty() {
                        continue;
                    }
                    out.push_str(&format!(
                        "{}.{tag} {} = {}\n",
                        i.id,
                        r.table.display(v),
                        braces(set.iter().map(|k| k.display(&r.table)))
                    ));
                }
            }
        }
    }

    out.push_str("\n[call_graph]\n");
    for (&site, targets) in &r.call_graph {
        let mut names: Vec<String> = targets
            .iter()
            .map(|&t| format!("@{}", r.table.functions[t as usize].name))
            .collect();
        names.sort();
        out.push_str(&format!("{} = {}\n", m.instr_name(site), braces(names.into_iter())));
    }

    out.push_str("\n[stats]\n");
    out.push_str(&strip_millis(&r.stats_line()));
    out.push('\n');
    out
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("line {line}: malformed dump line `{text}`")]
    Malformed { line: usize, text: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
}

/// A dump read back into maps, for differencing and cache checks.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct ParsedDump {
    pub meta: BTreeMap<String, String>,
    pub points_to: BTreeMap<String, BTreeSet<String>>,
    pub points_to_at: BTreeMap<String, BTreeSet<String>>,
    pub call_graph: BTreeMap<String, BTreeSet<String>>,
    pub stats: String,
}

fn parse_set(text: &str) -> Option<BTreeSet<String>> {
    let inner = text.strip_prefix('{')?.strip_suffix('}')?;
    if inner.is_empty() {
        return Some(BTreeSet::new());
    }
    Some(inner.split(", ").map(str::to_string).collect())
}

pub fn parse_dump(text: &str) -> Result<ParsedDump, DumpError> {
    let mut d = ParsedDump::default();
    let mut section = "";
    let mut seen_meta = false;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name {
                "meta" => {
                    seen_meta = true;
                    "meta"
                }
                "points_to" => "points_to",
                "points_to_at" => "points_to_at",
                "call_graph" => "call_graph",
                "stats" => "stats",
                _ => return Err(DumpError::Malformed { line: no + 1, text: line.to_string() }),
            };
            continue;
        }
        let malformed = || DumpError::Malformed { line: no + 1, text: line.to_string() };
        match section {
            "meta" => {
                let (k, v) = line.split_once(" = ").ok_or_else(malformed)?;
                d.meta.insert(k.to_string(), v.to_string());
            }
            "points_to" | "points_to_at" | "call_graph" => {
                let (k, v) = line.split_once(" = ").ok_or_else(malformed)?;
                let set = parse_set(v).ok_or_else(malformed)?;
                let map = match section {
                    "points_to" => &mut d.points_to,
                    "points_to_at" => &mut d.points_to_at,
                    _ => &mut d.call_graph,
                };
                map.insert(k.to_string(), set);
            }
            "stats" => d.stats = line.to_string(),
            _ => return Err(malformed()),
        }
    }
    if !seen_meta {
        return Err(DumpError::MissingSection("meta"));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMode {
    /// Report every variable whose sets differ.
    Equal,
    /// Report every variable where A's set is not contained in B's.
    Subset,
}

#[derive(Debug)]
pub struct DiffReport {
    pub mismatches: Vec<String>,
}

impl DiffReport {
    pub fn clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Strip the `#field` suffix, mapping an element to its object.
fn collapse(e: &str) -> String {
    match e.rsplit_once('#') {
        Some((obj, f)) if f.chars().all(|c| c.is_ascii_digit()) => obj.to_string(),
        _ => e.to_string(),
    }
}

/// Compare two dumps per variable. Dumps of different granularities are
/// both collapsed to object granularity before comparing.
pub fn diff_dumps(a: &ParsedDump, b: &ParsedDump, mode: DiffMode) -> DiffReport {
    let mut mismatches = Vec::new();
    if a.meta.get("module_sha256") != b.meta.get("module_sha256") {
        mismatches.push("module_sha256 differs: dumps describe different modules".to_string());
        return DiffReport { mismatches };
    }
    let collapse_both = a.meta.get("granularity") != b.meta.get("granularity");
    let project = |set: &BTreeSet<String>| -> BTreeSet<String> {
        if collapse_both {
            set.iter().map(|e| collapse(e)).collect()
        } else {
            set.clone()
        }
    };

    let keys: BTreeSet<&String> = a.points_to.keys().chain(b.points_to.keys()).collect();
    for k in keys {
        let sa = a.points_to.get(k).map(|s| project(s)).unwrap_or_default();
        let sb = b.points_to.get(k).map(|s| project(s)).unwrap_or_default();
        match mode {
            DiffMode::Equal => {
                if sa != sb {
                    mismatches.push(format!(
                        "{k}: {{{}}} vs {{{}}}",
                        sa.iter().cloned().collect::<Vec<_>>().join(", "),
                        sb.iter().cloned().collect::<Vec<_>>().join(", ")
                    ));
                }
            }
            DiffMode::Subset => {
                let extra: Vec<&String> = sa.difference(&sb).collect();
                if !extra.is_empty() {
                    mismatches.push(format!(
                        "{k}: {} not in the second dump",
                        extra.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                    ));
                }
            }
        }
    }
    DiffReport { mismatches }
}
