use std::fmt::Write as _;

use super::{acyclicity_check, Acyclicity, CellKind, CellType, Netlist, NetlistBuilder, NetlistError};

fn is_name_char(c: char) -> bool {
    !(c.is_whitespace() || matches!(c, '(' | ')' | ',' | '=' | '#'))
}

struct Cursor<'a> {
    line: usize,
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> NetlistError {
        NetlistError::Syntax {
            line: self.line,
            col: self.pos + 1,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn ident(&mut self) -> Result<&'a str, NetlistError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.text[self.pos..].chars().next() {
            if is_name_char(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.err("expected a signal name"));
        }
        Ok(&self.text[start..self.pos])
    }

    fn expect(&mut self, ch: char) -> Result<(), NetlistError> {
        self.skip_ws();
        if self.text[self.pos..].starts_with(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{ch}`")))
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.text[self.pos..].chars().next()
    }

    fn end(&mut self) -> Result<(), NetlistError> {
        match self.peek() {
            None | Some('#') => Ok(()),
            Some(c) => Err(self.err(format!("unexpected `{c}`"))),
        }
    }

    fn arg_list(&mut self) -> Result<Vec<&'a str>, NetlistError> {
        self.expect('(')?;
        let mut args = vec![self.ident()?];
        loop {
            match self.peek() {
                Some(',') => {
                    self.pos += 1;
                    args.push(self.ident()?);
                }
                Some(')') => {
                    self.pos += 1;
                    return Ok(args);
                }
                _ => return Err(self.err("expected `,` or `)`")),
            }
        }
    }
}

/// Parses ISCAS/ITC BENCH text. The netlist is named `bench` unless a later
/// call renames it; use [`parse_bench_named`] to set the name.
pub fn parse_bench(text: &str) -> Result<Netlist, NetlistError> {
    parse_bench_named(text, "bench")
}

pub fn parse_bench_named(text: &str, name: &str) -> Result<Netlist, NetlistError> {
    let mut b = NetlistBuilder::new(name);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut cur = Cursor {
            line,
            text: raw,
            pos: 0,
        };
        match cur.peek() {
            None | Some('#') => continue,
            _ => {}
        }
        let head = cur.ident()?;
        match cur.peek() {
            Some('(') => {
                let args = cur.arg_list()?;
                cur.end()?;
                if args.len() != 1 {
                    return Err(cur.err("INPUT/OUTPUT take exactly one signal"));
                }
                match head.to_ascii_uppercase().as_str() {
                    "INPUT" => b.add_input_at(args[0], line),
                    "OUTPUT" => b.add_output_at(args[0], line),
                    _ => return Err(NetlistError::Syntax {
                        line,
                        col: 1,
                        msg: format!("unknown directive `{head}`"),
                    }),
                }
            }
            Some('=') => {
                cur.pos += 1;
                let col = cur.pos + 1;
                let kw = cur.ident()?;
                let kind = CellKind::from_keyword(kw).ok_or_else(|| NetlistError::Syntax {
                    line,
                    col,
                    msg: format!("unknown gate type `{kw}`"),
                })?;
                let args = cur.arg_list()?;
                cur.end()?;
                let cell = CellType::new(kind, args.len()).ok_or_else(|| NetlistError::ArityMismatch {
                    name: head.to_string(),
                    kind: kind.keyword().to_string(),
                    got: args.len(),
                    line: Some(line),
                })?;
                b.add_gate_at(head, cell, args.iter().map(|s| s.to_string()).collect(), line);
            }
            _ => return Err(cur.err("expected `(` or `=`")),
        }
    }
    b.build()
}

/// Serializes to BENCH: inputs, outputs, then gates in topological order
/// (DFFs first, since they act as sources).
pub fn to_bench(n: &Netlist) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}", n.name());
    for &i in n.primary_inputs() {
        let _ = writeln!(s, "INPUT({})", n.net(i).name);
    }
    for &o in n.primary_outputs() {
        let _ = writeln!(s, "OUTPUT({})", n.net(o).name);
    }
    let order: Vec<_> = match acyclicity_check(n) {
        Acyclicity::Ok(o) => n.dffs().chain(o).collect(),
        Acyclicity::Cycle(_) => n.dffs().chain(n.eval_order().iter().copied()).collect(),
    };
    for g in order {
        let gate = n.gate(g);
        let args: Vec<&str> = gate.fanins.iter().map(|f| n.net(*f).name.as_str()).collect();
        let _ = writeln!(
            s,
            "{} = {}({})",
            n.gate_name(g),
            gate.cell.kind.keyword(),
            args.join(", ")
        );
    }
    s
}
