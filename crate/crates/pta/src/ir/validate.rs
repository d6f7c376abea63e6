//! Well-formedness checks performed before any analysis runs.
//!
//! Checks walk the module in declaration order, so the diagnostic list is
//! deterministic for a given input. Errors make the module unusable for
//! analysis; warnings (unreachable blocks) do not.

use super::{Diagnostic, InstrKind, PointerModule, ENTRY_FUNCTION, MAX_FIELD};
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, Copy)]
pub struct ValidationConfig {
    /// Largest legal field offset; `field %x, i` with `i` beyond this is
    /// rejected here. Solvers independently collapse out-of-range offsets to
    /// field 0 so they stay total even under a mismatched configuration.
    pub max_field: u32,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { max_field: MAX_FIELD }
    }
}

/// Validate a parsed module. Returns all diagnostics; the module is usable
/// iff none of them is an error.
pub fn validate(m: &PointerModule, cfg: &ValidationConfig) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    // Globals and functions share the `@` namespace.
    let mut symbols: HashMap<&str, u32> = HashMap::new();
    for g in &m.globals {
        if let Some(first) = symbols.get(g.name.as_str()) {
            diags.push(Diagnostic::error(
                format!("duplicate symbol `@{}` (first declared on line {first})", g.name),
                g.line,
                1,
            ));
        } else {
            symbols.insert(&g.name, g.line);
        }
    }
    let globals: HashSet<&str> = m.globals.iter().map(|g| g.name.as_str()).collect();
    for f in &m.functions {
        if let Some(first) = symbols.get(f.name.as_str()) {
            diags.push(Diagnostic::error(
                format!("duplicate symbol `@{}` (first declared on line {first})", f.name),
                f.line,
                1,
            ));
        } else {
            symbols.insert(&f.name, f.line);
        }
    }
    let func_arity: HashMap<&str, usize> =
        m.functions.iter().map(|f| (f.name.as_str(), f.params.len())).collect();

    if m.function(&m.entry).is_none() {
        diags.push(Diagnostic::error(
            format!("entry function `@{}` not found", ENTRY_FUNCTION),
            1,
            1,
        ));
    }

    for f in &m.functions {
        validate_function(m, f, cfg, &globals, &func_arity, &mut diags);
    }
    diags
}

fn validate_function(
    m: &PointerModule,
    f: &super::Function,
    cfg: &ValidationConfig,
    globals: &HashSet<&str>,
    func_arity: &HashMap<&str, usize>,
    diags: &mut Vec<Diagnostic>,
) {
    let mut params = HashSet::new();
    for p in &f.params {
        if !params.insert(p.as_str()) {
            diags.push(Diagnostic::error(
                format!("duplicate parameter `%{p}` in `@{}`", f.name),
                f.line,
                1,
            ));
        }
    }

    if f.blocks.is_empty() {
        diags.push(Diagnostic::error(format!("function `@{}` has no blocks", f.name), f.line, 1));
        return;
    }

    let mut labels: HashMap<&str, u32> = HashMap::new();
    for b in &f.blocks {
        if let Some(first) = labels.get(b.label.as_str()) {
            diags.push(Diagnostic::error(
                format!("duplicate block label `{}` (first on line {first})", b.label),
                b.line,
                1,
            ));
        } else {
            labels.insert(&b.label, b.line);
        }
    }
    let entry_label = f.blocks[0].label.as_str();

    // A variable exists if it is a parameter or assigned by some instruction
    // anywhere in the function; the IR is not SSA, so use-before-def in
    // program order is legal (the variable just holds nothing yet).
    let mut defined: HashSet<&str> = f.params.iter().map(|p| p.as_str()).collect();
    for b in &f.blocks {
        for i in &b.instrs {
            if let Some(d) = &i.dest {
                defined.insert(d);
            }
        }
    }

    for b in &f.blocks {
        if b.instrs.is_empty() {
            diags.push(Diagnostic::error(
                format!("block `{}` is empty; a terminator is required", b.label),
                b.line,
                1,
            ));
            continue;
        }
        for (pos, i) in b.instrs.iter().enumerate() {
            let last = pos + 1 == b.instrs.len();
            if last && !i.kind.is_terminator() {
                diags.push(Diagnostic::error(
                    format!("block `{}` does not end with `ret` or `br`", b.label),
                    i.line,
                    i.col,
                ));
            }
            if !last && i.kind.is_terminator() {
                diags.push(Diagnostic::error(
                    format!("`{}` before the end of block `{}`", i.kind.opcode(), b.label),
                    i.line,
                    i.col,
                ));
            }

            let check_var = |v: &str, diags: &mut Vec<Diagnostic>| {
                if !defined.contains(v) {
                    diags.push(Diagnostic::error(
                        format!("unresolved variable `%{v}`"),
                        i.line,
                        i.col,
                    ));
                }
            };
            match &i.kind {
                InstrKind::Alloc { .. } => {}
                InstrKind::Addr { symbol } => {
                    if !globals.contains(symbol.as_str())
                        && !func_arity.contains_key(symbol.as_str())
                    {
                        diags.push(Diagnostic::error(
                            format!("unresolved symbol `@{symbol}`"),
                            i.line,
                            i.col,
                        ));
                    }
                }
                InstrKind::Copy { src } => check_var(src, diags),
                InstrKind::Load { ptr } => check_var(ptr, diags),
                InstrKind::Store { value, ptr } => {
                    check_var(value, diags);
                    check_var(ptr, diags);
                }
                InstrKind::Field { base, index } => {
                    check_var(base, diags);
                    if *index > cfg.max_field {
                        diags.push(Diagnostic::error(
                            format!(
                                "field index {index} exceeds the maximum {}",
                                cfg.max_field
                            ),
                            i.line,
                            i.col,
                        ));
                    }
                }
                InstrKind::Call { callee, args } => {
                    match func_arity.get(callee.as_str()) {
                        None if globals.contains(callee.as_str()) => {
                            diags.push(Diagnostic::error(
                                format!("`@{callee}` is a global, not a function"),
                                i.line,
                                i.col,
                            ));
                        }
                        None => diags.push(Diagnostic::error(
                            format!("unresolved function `@{callee}`"),
                            i.line,
                            i.col,
                        )),
                        Some(&arity) if arity != args.len() => {
                            diags.push(Diagnostic::error(
                                format!(
                                    "`@{callee}` takes {arity} argument(s), {} given",
                                    args.len()
                                ),
                                i.line,
                                i.col,
                            ));
                        }
                        Some(_) => {}
                    }
                    for a in args {
                        check_var(a, diags);
                    }
                }
                InstrKind::ICall { fnptr, args } => {
                    check_var(fnptr, diags);
                    for a in args {
                        check_var(a, diags);
                    }
                }
                InstrKind::Ret { value } => {
                    if let Some(v) = value {
                        check_var(v, diags);
                    }
                }
                InstrKind::Br { targets } => {
                    for t in targets {
                        if !labels.contains_key(t.as_str()) {
                            diags.push(Diagnostic::error(
                                format!("branch to unknown block `{t}`"),
                                i.line,
                                i.col,
                            ));
                        } else if t == entry_label {
                            // Keeps the CFG entry predecessor-free; loop
                            // headers must be non-entry blocks.
                            diags.push(Diagnostic::error(
                                format!("branch to entry block `{t}`"),
                                i.line,
                                i.col,
                            ));
                        }
                    }
                }
            }
        }
    }

    // Reachability over block-level branch edges.
    let label_index: HashMap<&str, usize> =
        f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    let mut seen = vec![false; f.blocks.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(bi) = stack.pop() {
        if let Some(last) = f.blocks[bi].instrs.last() {
            if let InstrKind::Br { targets } = &last.kind {
                for t in targets {
                    if let Some(&ti) = label_index.get(t.as_str()) {
                        if !seen[ti] {
                            seen[ti] = true;
                            stack.push(ti);
                        }
                    }
                }
            }
        }
    }
    for (bi, b) in f.blocks.iter().enumerate() {
        if !seen[bi] {
            diags.push(Diagnostic::warning(
                format!("block `{}` is unreachable", b.label),
                b.line,
                1,
            ));
        }
    }
    let _ = m;
}

#[cfg(test)]
mod tests {
    use super::super::parse_module;
    use super::*;

    fn check(src: &str) -> Vec<Diagnostic> {
        validate(&parse_module(src).unwrap(), &ValidationConfig::default())
    }

    fn errors(src: &str) -> Vec<String> {
        check(src).into_iter().filter(|d| d.is_error()).map(|d| d.message).collect()
    }

    #[test]
    fn unresolved_variable_is_an_error() {
        let errs = errors("func @main() { entry: %p = copy %q \n ret }");
        assert!(errs.iter().any(|e| e.contains("unresolved variable `%q`")), "{errs:?}");
    }

    #[test]
    fn use_before_def_in_program_order_is_allowed() {
        let errs = errors("func @main() { entry: %p = copy %q \n %q = alloc A \n ret }");
        assert!(errs.is_empty(), "{errs:?}");
    }

    #[test]
    fn clean_module_validates() {
        let diags = check(
            "global @g\nfunc @id(%x) { b: ret %x }\nfunc @main() { entry: %p = addr @g \n %q = call @id(%p) \n ret }",
        );
        assert!(diags.is_empty(), "{diags:?}");
    }

    #[test]
    fn missing_terminator_and_interior_terminator() {
        let errs = errors("func @main() { entry: %p = alloc A }");
        assert!(errs.iter().any(|e| e.contains("does not end with")), "{errs:?}");
        let errs = errors("func @main() { entry: ret \n %p = alloc A \n ret }");
        assert!(errs.iter().any(|e| e.contains("before the end of block")), "{errs:?}");
    }

    #[test]
    fn arity_mismatch_on_direct_call() {
        let errs =
            errors("func @f(%a, %b) { x: ret }\nfunc @main() { entry: %p = alloc A \n %q = call @f(%p) \n ret }");
        assert!(errs.iter().any(|e| e.contains("takes 2 argument(s), 1 given")), "{errs:?}");
    }

    #[test]
    fn duplicate_symbols_across_globals_and_functions() {
        let errs = errors("global @x\nfunc @x() { b: ret }\nfunc @main() { e: ret }");
        assert!(errs.iter().any(|e| e.contains("duplicate symbol `@x`")), "{errs:?}");
    }

    #[test]
    fn branch_to_entry_is_rejected() {
        let errs = errors("func @main() { entry: br entry }");
        assert!(errs.iter().any(|e| e.contains("branch to entry block")), "{errs:?}");
    }

    #[test]
    fn unreachable_block_is_a_warning_not_an_error() {
        let diags = check("func @main() { entry: ret \n dead: ret }");
        assert!(diags.iter().all(|d| !d.is_error()));
        assert!(diags.iter().any(|d| d.message.contains("unreachable")), "{diags:?}");
    }

    #[test]
    fn field_index_above_bound_is_rejected() {
        let errs = errors("func @main() { entry: %p = alloc A \n %q = field %p, 9 \n ret }");
        assert!(errs.iter().any(|e| e.contains("exceeds the maximum 8")), "{errs:?}");
        let ok = errors("func @main() { entry: %p = alloc A \n %q = field %p, 8 \n ret }");
        assert!(ok.is_empty(), "{ok:?}");
    }

    #[test]
    fn diagnostics_are_deterministic() {
        let src = "func @main() { entry: %p = copy %q \n %r = copy %s }";
        assert_eq!(check(src), check(src));
    }

    #[test]
    fn missing_entry_function_is_reported() {
        let errs = errors("func @f() { b: ret }");
        assert!(errs.iter().any(|e| e.contains("entry function")), "{errs:?}");
    }
}
