//! Subset-based (inclusion) points-to analysis.
//!
//! The solver computes the least fixpoint of the constraint system: the
//! points-to sets are closed under Copy/Load/Store/Field rules, and indirect
//! calls are bound to targets on the fly as function pointers gain elements.
//!
//! Every [`SolverConfig`] combination computes the same expanded solution;
//! the configurations differ only in how much work they do getting there.
//! `Naive`/`Fifo` with the sorted-vector backend is the reference point the
//! optimized configurations are checked against.

mod offline;
mod scc;
mod solver;
mod worklist;

pub use offline::{hcd, hu, hvn, HcdTable, OfflineMerges};
pub use scc::tarjan_sccs;

use crate::constraints::{ConstraintSystem, NodeId, NodeTable};
use crate::ir::InstrId;
use crate::ptset::{PointsToSet, SetBackendKind};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfflineMode {
    None,
    Hvn,
    Hu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleMode {
    None,
    Lcd,
    Hcd,
    Both,
}

impl CycleMode {
    pub fn lcd(self) -> bool {
        matches!(self, CycleMode::Lcd | CycleMode::Both)
    }

    pub fn hcd(self) -> bool {
        matches!(self, CycleMode::Hcd | CycleMode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Full-set propagation on every visit; the reference strategy.
    Naive,
    /// Topological waves over the condensed copy graph.
    Wave,
    /// Difference propagation that additionally pushes deltas transitively
    /// along copy edges before returning to the worklist.
    Deep,
    /// Difference propagation: only journal suffixes cross edges.
    Diff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorklistKind {
    Fifo,
    Lifo,
    /// Least recently fired first.
    Lrf,
    /// Two-phase LRF: drain a current list, deferring activations to a next
    /// list, and swap when empty.
    TwoLrf,
    /// Smallest topological index of the condensation first; indices refresh
    /// every `topo_refresh` pops.
    Topo,
}

/// Hard cap on propagated elements; exceeding it aborts the solve.
pub const DEFAULT_MAX_PROPAGATIONS: u64 = 10_000_000;

/// Pops between topological index refreshes for [`WorklistKind::Topo`].
pub const DEFAULT_TOPO_REFRESH: u32 = 1024;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub offline: OfflineMode,
    pub cycles: CycleMode,
    pub strategy: Strategy,
    pub worklist: WorklistKind,
    pub backend: SetBackendKind,
    pub max_propagations: u64,
    pub topo_refresh: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            offline: OfflineMode::None,
            cycles: CycleMode::None,
            strategy: Strategy::Naive,
            worklist: WorklistKind::Fifo,
            backend: SetBackendKind::SparseBitVector,
            max_propagations: DEFAULT_MAX_PROPAGATIONS,
            topo_refresh: DEFAULT_TOPO_REFRESH,
        }
    }
}

impl SolverConfig {
    /// The configuration every other one is compared against.
    pub fn reference() -> Self {
        SolverConfig {
            backend: SetBackendKind::SortedVector,
            ..SolverConfig::default()
        }
    }

    /// Compact form used in dumps: `offline/cycles/strategy/worklist/backend`.
    pub fn summary(&self) -> String {
        let offline = match self.offline {
            OfflineMode::None => "none",
            OfflineMode::Hvn => "hvn",
            OfflineMode::Hu => "hu",
        };
        let cycles = match self.cycles {
            CycleMode::None => "none",
            CycleMode::Lcd => "lcd",
            CycleMode::Hcd => "hcd",
            CycleMode::Both => "both",
        };
        let strategy = match self.strategy {
            Strategy::Naive => "naive",
            Strategy::Wave => "wave",
            Strategy::Deep => "deep",
            Strategy::Diff => "diff",
        };
        let worklist = match self.worklist {
            WorklistKind::Fifo => "fifo",
            WorklistKind::Lifo => "lifo",
            WorklistKind::Lrf => "lrf",
            WorklistKind::TwoLrf => "2lrf",
            WorklistKind::Topo => "topo",
        };
        let backend = match self.backend {
            SetBackendKind::SparseBitVector => "bitvec",
            SetBackendKind::SortedVector => "sorted",
        };
        format!("{offline}/{cycles}/{strategy}/{worklist}/{backend}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolverStats {
    /// Elements pushed across edges and into complex constraints.
    pub propagations: u64,
    /// Worklist pops.
    pub pops: u64,
    /// Nodes merged away by online cycle collapsing.
    pub collapsed: u64,
    /// Wave-strategy iterations (0 for worklist strategies).
    pub waves: u64,
    /// Variables merged away by the offline phase.
    pub offline_merged: u64,
    pub lcd_probes: u64,
    pub millis: u64,
}

impl SolverStats {
    /// The stable stats line exposed by the CLI.
    pub fn display_line(&self) -> String {
        format!(
            "propagations={}, collapsed={}, waves={}, millis={}",
            self.propagations, self.collapsed, self.waves, self.millis
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("propagation limit of {limit} exceeded")]
    PropagationLimit { limit: u64, stats: SolverStats },
}

/// A solved subset analysis: finalized sets over representatives plus the
/// discovered call graph.
#[derive(Debug, Clone)]
pub struct PointsToSolution {
    pub table: Arc<NodeTable>,
    /// Final representative of every node.
    rep_of: Vec<NodeId>,
    /// Sets, populated at representatives.
    sets: Vec<PointsToSet>,
    /// Call site to target functions; direct calls contribute exactly their
    /// static callee.
    pub call_graph: BTreeMap<InstrId, BTreeSet<u32>>,
    pub stats: SolverStats,
    pub warnings: Vec<String>,
}

impl PointsToSolution {
    pub fn rep(&self, n: NodeId) -> NodeId {
        self.rep_of[n.index()]
    }

    /// The points-to set of a node (element ids of objfield nodes).
    pub fn pts(&self, n: NodeId) -> &PointsToSet {
        &self.sets[self.rep(n).index()]
    }

    /// Sorted element ids of a node's set.
    pub fn points_to(&self, n: NodeId) -> Vec<NodeId> {
        self.pts(n).iter().map(NodeId).collect()
    }

    /// The expanded solution: every original variable node with its sorted
    /// element ids. This is the object compared across solver configurations.
    pub fn expanded(&self) -> Vec<(NodeId, Vec<NodeId>)> {
        self.table
            .var_nodes
            .iter()
            .map(|&v| (v, self.points_to(v)))
            .collect()
    }

    pub fn call_targets(&self, site: InstrId) -> impl Iterator<Item = u32> + '_ {
        self.call_graph.get(&site).into_iter().flatten().copied()
    }
}

/// Solve a constraint system. The system is cloned internally; indirect-call
/// resolution state never leaks between runs.
pub fn solve(sys: &ConstraintSystem, cfg: &SolverConfig) -> Result<PointsToSolution, SolveError> {
    solver::run(sys.clone(), cfg)
}
