//! Representations derived from a solved analysis: the interprocedural
//! control-flow graph, memory SSA form, and the program dependence graph
//! with slicing on top.

mod dom;
pub mod icfg;
pub mod memssa;
pub mod pdg;

pub use icfg::{build_icfg, Icfg, IcfgEdge, IcfgEdgeKind};
pub use memssa::{build_memory_ssa, memory_def_of, MemDef, MemDefId, MemDefKind, MemSsaError, MemorySsa};
pub use pdg::{build_pdg, slice, Pdg, PdgEdge, PdgEdgeKind, SliceDirection};
