//! Canonical pretty-printer. Printing then reparsing reproduces the module
//! structure exactly; the printed form is the normal form used in dumps and
//! by the program generator.

use super::{InstrKind, PointerModule};
use std::fmt::Write;

pub fn pretty_print(m: &PointerModule) -> String {
    let mut out = String::new();
    for g in &m.globals {
        writeln!(out, "global @{}", g.name).unwrap();
    }
    if !m.globals.is_empty() && !m.functions.is_empty() {
        out.push('\n');
    }
    for (fi, f) in m.functions.iter().enumerate() {
        if fi > 0 {
            out.push('\n');
        }
        let params: Vec<String> = f.params.iter().map(|p| format!("%{p}")).collect();
        writeln!(out, "func @{}({}) {{", f.name, params.join(", ")).unwrap();
        for b in &f.blocks {
            writeln!(out, "{}:", b.label).unwrap();
            for i in &b.instrs {
                out.push_str("  ");
                if let Some(d) = &i.dest {
                    write!(out, "%{d} = ").unwrap();
                }
                match &i.kind {
                    InstrKind::Alloc { label } => write!(out, "alloc {label}").unwrap(),
                    InstrKind::Addr { symbol } => write!(out, "addr @{symbol}").unwrap(),
                    InstrKind::Copy { src } => write!(out, "copy %{src}").unwrap(),
                    InstrKind::Load { ptr } => write!(out, "load %{ptr}").unwrap(),
                    InstrKind::Store { value, ptr } => {
                        write!(out, "store %{value}, %{ptr}").unwrap()
                    }
                    InstrKind::Field { base, index } => {
                        write!(out, "field %{base}, {index}").unwrap()
                    }
                    InstrKind::Call { callee, args } => {
                        let args: Vec<String> = args.iter().map(|a| format!("%{a}")).collect();
                        write!(out, "call @{callee}({})", args.join(", ")).unwrap()
                    }
                    InstrKind::ICall { fnptr, args } => {
                        let args: Vec<String> = args.iter().map(|a| format!("%{a}")).collect();
                        write!(out, "icall %{fnptr}({})", args.join(", ")).unwrap()
                    }
                    InstrKind::Ret { value } => match value {
                        Some(v) => write!(out, "ret %{v}").unwrap(),
                        None => write!(out, "ret").unwrap(),
                    },
                    InstrKind::Br { targets } => {
                        write!(out, "br {}", targets.join(", ")).unwrap()
                    }
                }
                out.push('\n');
            }
        }
        out.push_str("}\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_module;
    use super::*;

    const SAMPLE: &str = "global @g
func @f(%x) { entry: %r = copy %x
  ret %r }
func @main() {
entry:
  %p = alloc A
  %q = addr @g
  %a = addr @f
  store %q, %p
  %l = load %p
  %t = field %p, 2
  %c = call @f(%l)
  %d = icall %a(%c)
  br one, two
one:
  ret %d
two:
  ret
}
";

    #[test]
    fn round_trip_preserves_structure() {
        let m = parse_module(SAMPLE).unwrap();
        let printed = pretty_print(&m);
        let reparsed = parse_module(&printed).unwrap();
        assert!(m.structurally_equal(&reparsed));
    }

    #[test]
    fn printing_is_idempotent_on_canonical_form() {
        let m = parse_module(SAMPLE).unwrap();
        let once = pretty_print(&m);
        let twice = pretty_print(&parse_module(&once).unwrap());
        assert_eq!(once, twice);
    }
}
