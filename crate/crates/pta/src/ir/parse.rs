//! Hand-rolled lexer and recursive-descent parser for `.pir` text.
//!
//! The grammar is whitespace-insensitive; `;` starts a comment running to end
//! of line. Parsing stops at the first syntax error and reports it with line
//! and column.

use super::{
    BasicBlock, Diagnostic, Function, GlobalDecl, InstrId, InstrKind, Instruction,
    PointerModule, ENTRY_FUNCTION,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Percent,
    At,
    Comma,
    Colon,
    Equals,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Percent => "`%`".into(),
            Tok::At => "`@`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Equals => "`=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b';') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn next_token(&mut self) -> Result<(Tok, u32, u32), Diagnostic> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else {
            return Ok((Tok::Eof, line, col));
        };
        let tok = match c {
            b'%' => {
                self.bump();
                Tok::Percent
            }
            b'@' => {
                self.bump();
                Tok::At
            }
            b',' => {
                self.bump();
                Tok::Comma
            }
            b':' => {
                self.bump();
                Tok::Colon
            }
            b'=' => {
                self.bump();
                Tok::Equals
            }
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b'{' => {
                self.bump();
                Tok::LBrace
            }
            b'}' => {
                self.bump();
                Tok::RBrace
            }
            b'0'..=b'9' => {
                let mut n: u64 = 0;
                while let Some(d) = self.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    n = n
                        .checked_mul(10)
                        .and_then(|n| n.checked_add((d - b'0') as u64))
                        .ok_or_else(|| {
                            Diagnostic::error("integer literal overflows", line, col)
                        })?;
                    self.bump();
                }
                Tok::Int(n)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == b'_' {
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            }
            other => {
                return Err(Diagnostic::error(
                    format!("unexpected character `{}`", other as char),
                    line,
                    col,
                ))
            }
        };
        Ok((tok, line, col))
    }
}

struct Parser {
    toks: Vec<(Tok, u32, u32)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].0
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        &self.toks[(self.idx + ahead).min(self.toks.len() - 1)].0
    }

    fn peek2(&self) -> &Tok {
        self.peek_at(1)
    }

    fn pos(&self) -> (u32, u32) {
        let (_, l, c) = self.toks[self.idx];
        (l, c)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.idx].0.clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), Diagnostic> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            let (l, c) = self.pos();
            Err(Diagnostic::error(
                format!("expected {}, found {}", want.describe(), self.peek().describe()),
                l,
                c,
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, Diagnostic> {
        let (l, c) = self.pos();
        match self.bump() {
            Tok::Ident(s) => Ok(s),
            other => Err(Diagnostic::error(
                format!("expected {what}, found {}", other.describe()),
                l,
                c,
            )),
        }
    }

    /// `%name`
    fn var(&mut self) -> Result<String, Diagnostic> {
        self.expect(Tok::Percent)?;
        self.ident("variable name")
    }

    /// `@name`
    fn symbol(&mut self) -> Result<String, Diagnostic> {
        self.expect(Tok::At)?;
        self.ident("symbol name")
    }

    fn arg_list(&mut self) -> Result<Vec<String>, Diagnostic> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.var()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn module(&mut self) -> Result<PointerModule, Diagnostic> {
        let mut globals = Vec::new();
        let mut functions = Vec::new();
        loop {
            let (line, col) = self.pos();
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "global" => {
                    self.bump();
                    let name = self.symbol()?;
                    globals.push(GlobalDecl { name, line });
                }
                Tok::Ident(kw) if kw == "func" => {
                    self.bump();
                    functions.push(self.function(line)?);
                }
                other => {
                    return Err(Diagnostic::error(
                        format!("expected `global` or `func`, found {}", other.describe()),
                        line,
                        col,
                    ))
                }
            }
        }
        let mut module = PointerModule {
            globals,
            functions,
            entry: ENTRY_FUNCTION.to_string(),
            instr_count: 0,
        };
        let mut next = 0u32;
        for f in &mut module.functions {
            for b in &mut f.blocks {
                for i in &mut b.instrs {
                    i.id = InstrId(next);
                    next += 1;
                }
            }
        }
        module.instr_count = next;
        Ok(module)
    }

    fn function(&mut self, line: u32) -> Result<Function, Diagnostic> {
        let name = self.symbol()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                params.push(self.var()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::LBrace)?;
        let mut blocks = Vec::new();
        while *self.peek() != Tok::RBrace {
            blocks.push(self.block()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(Function { name, params, blocks, line })
    }

    /// A block label is an identifier directly followed by `:`; anything else
    /// inside a body must be an instruction.
    fn block(&mut self) -> Result<BasicBlock, Diagnostic> {
        let (line, col) = self.pos();
        let label = match (self.peek(), self.peek2()) {
            (Tok::Ident(_), Tok::Colon) => {
                let l = self.ident("block label")?;
                self.bump(); // colon
                l
            }
            _ => {
                return Err(Diagnostic::error(
                    format!("expected block label, found {}", self.peek().describe()),
                    line,
                    col,
                ))
            }
        };
        let mut instrs = Vec::new();
        loop {
            match (self.peek(), self.peek2()) {
                (Tok::RBrace, _) | (Tok::Ident(_), Tok::Colon) => break,
                (Tok::Eof, _) => {
                    let (l, c) = self.pos();
                    return Err(Diagnostic::error("unterminated function body", l, c));
                }
                _ => instrs.push(self.instruction()?),
            }
        }
        Ok(BasicBlock { label, instrs, line })
    }

    fn instruction(&mut self) -> Result<Instruction, Diagnostic> {
        let (line, col) = self.pos();
        let placeholder = InstrId(u32::MAX);
        match self.peek().clone() {
            Tok::Percent => {
                let dest = self.var()?;
                self.expect(Tok::Equals)?;
                let op = self.ident("instruction mnemonic")?;
                let kind = match op.as_str() {
                    "alloc" => InstrKind::Alloc { label: self.ident("allocation label")? },
                    "addr" => InstrKind::Addr { symbol: self.symbol()? },
                    "copy" => InstrKind::Copy { src: self.var()? },
                    "load" => InstrKind::Load { ptr: self.var()? },
                    "field" => {
                        let base = self.var()?;
                        self.expect(Tok::Comma)?;
                        let (l, c) = self.pos();
                        let index = match self.bump() {
                            Tok::Int(n) if n <= u32::MAX as u64 => n as u32,
                            Tok::Int(_) => {
                                return Err(Diagnostic::error("field index too large", l, c))
                            }
                            other => {
                                return Err(Diagnostic::error(
                                    format!("expected field index, found {}", other.describe()),
                                    l,
                                    c,
                                ))
                            }
                        };
                        InstrKind::Field { base, index }
                    }
                    "call" => {
                        let callee = self.symbol()?;
                        let args = self.arg_list()?;
                        InstrKind::Call { callee, args }
                    }
                    "icall" => {
                        let fnptr = self.var()?;
                        let args = self.arg_list()?;
                        InstrKind::ICall { fnptr, args }
                    }
                    other => {
                        return Err(Diagnostic::error(
                            format!("unknown instruction `{other}`"),
                            line,
                            col,
                        ))
                    }
                };
                Ok(Instruction { id: placeholder, dest: Some(dest), kind, line, col })
            }
            Tok::Ident(op) => {
                self.bump();
                let kind = match op.as_str() {
                    "store" => {
                        let value = self.var()?;
                        self.expect(Tok::Comma)?;
                        let ptr = self.var()?;
                        InstrKind::Store { value, ptr }
                    }
                    // Calls may discard their result.
                    "call" => {
                        let callee = self.symbol()?;
                        let args = self.arg_list()?;
                        InstrKind::Call { callee, args }
                    }
                    "icall" => {
                        let fnptr = self.var()?;
                        let args = self.arg_list()?;
                        InstrKind::ICall { fnptr, args }
                    }
                    "ret" => {
                        // `ret` directly followed by `%x = ...` is a bare ret
                        // and the start of the next instruction; only a `%x`
                        // not followed by `=` is the return operand.
                        let value = if *self.peek() == Tok::Percent
                            && matches!(self.peek2(), Tok::Ident(_))
                            && *self.peek_at(2) != Tok::Equals
                        {
                            Some(self.var()?)
                        } else {
                            None
                        };
                        InstrKind::Ret { value }
                    }
                    "br" => {
                        let mut targets = vec![self.ident("branch target")?];
                        if *self.peek() == Tok::Comma {
                            self.bump();
                            targets.push(self.ident("branch target")?);
                        }
                        InstrKind::Br { targets }
                    }
                    other => {
                        return Err(Diagnostic::error(
                            format!("unknown instruction `{other}`"),
                            line,
                            col,
                        ))
                    }
                };
                Ok(Instruction { id: placeholder, dest: None, kind, line, col })
            }
            other => Err(Diagnostic::error(
                format!("expected instruction, found {}", other.describe()),
                line,
                col,
            )),
        }
    }
}

/// Parse `.pir` source text. On failure the diagnostic list contains the
/// first syntax error encountered.
pub fn parse_module(src: &str) -> Result<PointerModule, Vec<Diagnostic>> {
    let mut lexer = Lexer::new(src);
    let mut toks = Vec::new();
    loop {
        match lexer.next_token() {
            Ok(t) => {
                let eof = t.0 == Tok::Eof;
                toks.push(t);
                if eof {
                    break;
                }
            }
            Err(d) => return Err(vec![d]),
        }
    }
    let mut parser = Parser { toks, idx: 0 };
    parser.module().map_err(|d| vec![d])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_function_with_alloc() {
        let m = parse_module("func @main() { entry: %p = alloc A \n ret }").unwrap();
        assert_eq!(m.functions.len(), 1);
        assert_eq!(m.instr_count, 2);
        let f = &m.functions[0];
        assert_eq!(f.blocks[0].instrs[0].dest.as_deref(), Some("p"));
        assert!(matches!(
            &f.blocks[0].instrs[0].kind,
            InstrKind::Alloc { label } if label == "A"
        ));
    }

    #[test]
    fn comments_and_whitespace_are_insignificant() {
        let a = parse_module("func @main(){entry:%p=alloc A;comment\nret}").unwrap();
        let b = parse_module("func @main ( ) {\n entry: ; hi\n  %p = alloc A\n  ret\n}").unwrap();
        assert!(a.structurally_equal(&b));
    }

    #[test]
    fn reports_position_of_syntax_error() {
        let err = parse_module("func @main() { entry: %p = bogus A \n ret }").unwrap_err();
        assert_eq!(err.len(), 1);
        assert!(err[0].message.contains("bogus"));
        assert_eq!(err[0].line, 1);
    }

    #[test]
    fn store_ret_br_have_no_dest() {
        let m = parse_module(
            "func @main() { entry: %p = alloc A \n store %p, %p \n br next \n next: ret %p }",
        )
        .unwrap();
        let instrs: Vec<_> = m.instrs().collect();
        assert_eq!(instrs[1].dest, None);
        assert!(matches!(&instrs[2].kind, InstrKind::Br { targets } if targets == &["next"]));
        assert!(matches!(&instrs[3].kind, InstrKind::Ret { value: Some(v) } if v == "p"));
    }

    #[test]
    fn instruction_ids_are_dense_in_walk_order() {
        let m = parse_module(
            "func @f() { b: ret }\nfunc @main() { entry: %p = alloc A \n ret }",
        )
        .unwrap();
        let ids: Vec<_> = m.instrs().map(|i| i.id.0).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn label_named_like_an_opcode_is_accepted() {
        // One-token lookahead distinguishes `store:` from a store instruction.
        let m = parse_module("func @main() { entry: br store \n store: ret }").unwrap();
        assert_eq!(m.functions[0].blocks[1].label, "store");
    }

    #[test]
    fn calls_may_discard_their_result() {
        let m = parse_module(
            "func @f() { b: ret }\n\
             func @main() { entry: %p = addr @f \n call @f() \n icall %p() \n ret }",
        )
        .unwrap();
        let instrs: Vec<_> = m.instrs().collect();
        assert!(matches!(&instrs[2].kind, InstrKind::Call { .. }));
        assert_eq!(instrs[2].dest, None);
        assert!(matches!(&instrs[3].kind, InstrKind::ICall { .. }));
        assert_eq!(instrs[3].dest, None);
    }
}
