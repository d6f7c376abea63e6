//! A modular pointer-analysis toolkit over a miniature pointer IR.
//!
//! The crate is organized as a pipeline: `.pir` text is parsed into a
//! [`ir::PointerModule`], lowered into inclusion [`constraints`], and solved by
//! one of several interchangeable analyses:
//!
//! * [`andersen`]: subset-based (inclusion) analysis with a matrix of solver
//!   optimizations (offline variable substitution, online cycle detection,
//!   wave/deep/difference propagation, worklist policies, set backends),
//! * [`steensgaard`]: unification-based analysis in near-linear time,
//! * [`sensitivity`]: k-CFA context-sensitive, flow-sensitive, and combined
//!   flow- and context-sensitive variants.
//!
//! Every solver produces a result the [`query`] layer can serve uniformly
//! (may-alias, points-to, pointed-by, alias sets, mod/ref). On top of a solved
//! result, [`derived`] builds an interprocedural CFG, MemorySSA form, and a
//! program dependence graph with slicing.
//!
//! The [`driver`] module backs the `pta` command-line tool: `analyze`, `gen`
//! (random well-formed programs), `interpret` (a concrete oracle), `diff`
//! (result comparison), and `bench`.

pub mod andersen;
pub mod constraints;
pub mod derived;
pub mod driver;
pub mod dump;
pub mod generate;
pub mod interp;
pub mod ir;
pub mod ptset;
pub mod query;
pub mod sensitivity;
pub mod steensgaard;

/// Tool version recorded in result dumps.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
