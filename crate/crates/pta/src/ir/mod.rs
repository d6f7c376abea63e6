//! The miniature pointer IR.
//!
//! A module is a list of global declarations and functions. Function bodies
//! are basic blocks of pointer-relevant instructions. The IR is deliberately
//! not SSA: locals are mutable and may be assigned any number of times, and
//! `br` with two targets is a nondeterministic choice.

mod cfg;
mod parse;
mod print;
mod validate;

pub use cfg::{build_cfg, Cfg};
pub use parse::parse_module;
pub use print::pretty_print;
pub use validate::{validate, ValidationConfig};

use std::fmt;

/// Default upper bound for field offsets. Offsets beyond the configured bound
/// collapse to field 0 during constraint solving.
pub const MAX_FIELD: u32 = 8;

/// Name of the function interpretation and context-sensitive analyses start
/// from.
pub const ENTRY_FUNCTION: &str = "main";

/// A parsed `.pir` module.
#[derive(Debug, Clone)]
pub struct PointerModule {
    pub globals: Vec<GlobalDecl>,
    pub functions: Vec<Function>,
    /// Entry function name; fixed to [`ENTRY_FUNCTION`] by the parser.
    pub entry: String,
    /// Total number of instructions; `InstrId` values are `0..instr_count`.
    pub instr_count: u32,
}

#[derive(Debug, Clone)]
pub struct GlobalDecl {
    pub name: String,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub blocks: Vec<BasicBlock>,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub struct BasicBlock {
    pub label: String,
    pub instrs: Vec<Instruction>,
    pub line: u32,
}

/// One instruction. `dest` is the assigned local for value-producing forms.
#[derive(Debug, Clone)]
pub struct Instruction {
    pub id: InstrId,
    pub dest: Option<String>,
    pub kind: InstrKind,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstrKind {
    /// `%d = alloc L`: a fresh heap object from this allocation site.
    /// The label `L` is a human tag and does not affect object identity.
    Alloc { label: String },
    /// `%d = addr @x`: address of a global or function.
    Addr { symbol: String },
    /// `%d = copy %s`
    Copy { src: String },
    /// `%d = load %p`: read through `p`.
    Load { ptr: String },
    /// `store %v, %p`: write `v` through `p`.
    Store { value: String, ptr: String },
    /// `%d = field %b, i`: address of field `i` of the object `b` points to.
    Field { base: String, index: u32 },
    /// `%d = call @f(args)`
    Call { callee: String, args: Vec<String> },
    /// `%d = icall %p(args)`: indirect call through a function pointer.
    ICall { fnptr: String, args: Vec<String> },
    /// `ret` / `ret %v` (terminator)
    Ret { value: Option<String> },
    /// `br l` / `br l1, l2` (terminator; two targets are a nondeterministic
    /// choice)
    Br { targets: Vec<String> },
}

impl InstrKind {
    pub fn is_terminator(&self) -> bool {
        matches!(self, InstrKind::Ret { .. } | InstrKind::Br { .. })
    }

    /// Mnemonic as it appears in source text.
    pub fn opcode(&self) -> &'static str {
        match self {
            InstrKind::Alloc { .. } => "alloc",
            InstrKind::Addr { .. } => "addr",
            InstrKind::Copy { .. } => "copy",
            InstrKind::Load { .. } => "load",
            InstrKind::Store { .. } => "store",
            InstrKind::Field { .. } => "field",
            InstrKind::Call { .. } => "call",
            InstrKind::ICall { .. } => "icall",
            InstrKind::Ret { .. } => "ret",
            InstrKind::Br { .. } => "br",
        }
    }

    /// Local variable names this instruction reads, in operand order.
    pub fn uses(&self) -> Vec<&str> {
        match self {
            InstrKind::Copy { src } => vec![src],
            InstrKind::Load { ptr } => vec![ptr],
            InstrKind::Store { value, ptr } => vec![value, ptr],
            InstrKind::Field { base, .. } => vec![base],
            InstrKind::Call { args, .. } => args.iter().map(String::as_str).collect(),
            InstrKind::ICall { fnptr, args } => {
                let mut u = vec![fnptr.as_str()];
                u.extend(args.iter().map(String::as_str));
                u
            }
            InstrKind::Ret { value } => value.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }
}

/// Dense module-wide instruction identifier, assigned in (function, block,
/// position) order by the parser. Stable across parse/print round trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrId(pub u32);

impl InstrId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for InstrId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// Where an instruction sits: function, block, and position within the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstrLoc {
    pub func: u32,
    pub block: u32,
    pub pos: u32,
}

impl PointerModule {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    /// Iterate all instructions in id order.
    pub fn instrs(&self) -> impl Iterator<Item = &Instruction> {
        self.functions
            .iter()
            .flat_map(|f| f.blocks.iter())
            .flat_map(|b| b.instrs.iter())
    }

    pub fn instr(&self, id: InstrId) -> &Instruction {
        // Ids are dense in walk order, so a linear scan with skipping is
        // avoidable; build lookups where this is hot.
        self.instrs()
            .nth(id.index())
            .expect("instruction id out of range")
    }

    /// (function, block, position) for every instruction, indexed by id.
    pub fn locations(&self) -> Vec<InstrLoc> {
        let mut locs = Vec::with_capacity(self.instr_count as usize);
        for (fi, f) in self.functions.iter().enumerate() {
            for (bi, b) in f.blocks.iter().enumerate() {
                for (pi, _) in b.instrs.iter().enumerate() {
                    locs.push(InstrLoc {
                        func: fi as u32,
                        block: bi as u32,
                        pos: pi as u32,
                    });
                }
            }
        }
        locs
    }

    /// Canonical display name for an instruction id, e.g. `main.entry.0`.
    pub fn instr_name(&self, id: InstrId) -> String {
        let loc = self.locations()[id.index()];
        let f = &self.functions[loc.func as usize];
        format!("{}.{}.{}", f.name, f.blocks[loc.block as usize].label, loc.pos)
    }

    /// Structural equality, ignoring source positions. This is the notion of
    /// equality under which parse/print round trips are checked.
    pub fn structurally_equal(&self, other: &PointerModule) -> bool {
        if self.globals.len() != other.globals.len()
            || self.functions.len() != other.functions.len()
        {
            return false;
        }
        if self
            .globals
            .iter()
            .zip(&other.globals)
            .any(|(a, b)| a.name != b.name)
        {
            return false;
        }
        self.functions.iter().zip(&other.functions).all(|(a, b)| {
            a.name == b.name
                && a.params == b.params
                && a.blocks.len() == b.blocks.len()
                && a.blocks.iter().zip(&b.blocks).all(|(x, y)| {
                    x.label == y.label
                        && x.instrs.len() == y.instrs.len()
                        && x.instrs
                            .iter()
                            .zip(&y.instrs)
                            .all(|(i, j)| i.dest == j.dest && i.kind == j.kind)
                })
        })
    }
}

/// A parse or validation message with a source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>, line: u32, col: u32) -> Self {
        Diagnostic { severity: Severity::Error, message: message.into(), line, col }
    }

    pub fn warning(message: impl Into<String>, line: u32, col: u32) -> Self {
        Diagnostic { severity: Severity::Warning, message: message.into(), line, col }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {}: {}", self.line, self.col, sev, self.message)
    }
}
