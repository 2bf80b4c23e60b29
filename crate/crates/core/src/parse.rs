//! Line-oriented recursive-descent parser for TinyPy.

use thiserror::Error;

use crate::ast::{Ast, BinOp, CmpOp, Cond, Expr, RangeArgs, Stmt};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("indentation error at line {line}: {msg}")]
    Indentation { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Int(i64),
    Name(String),
    Op(&'static str),
}

#[derive(Clone, Debug)]
struct Line {
    no: usize,
    indent: usize,
    toks: Vec<(Tok, usize)>,
    end_col: usize,
}

const KEYWORDS: [&str; 7] = ["if", "elif", "else", "for", "in", "print", "range"];

fn lex_line(no: usize, text: &str) -> Result<Option<Line>, ParseError> {
    let code = match text.find('#') {
        Some(i) => &text[..i],
        None => text,
    };
    if code.trim().is_empty() {
        return Ok(None);
    }
    let indent = code.len() - code.trim_start_matches(' ').len();
    if code[indent..].starts_with('\t') {
        return Err(ParseError::Indentation { line: no, msg: "tabs are not allowed".into() });
    }
    let bytes = code.as_bytes();
    let mut toks = Vec::new();
    let mut i = indent;
    let err = |col: usize, msg: String| ParseError::Syntax { line: no, col: col + 1, msg };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c == b' ' {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let v = code[start..i].parse::<i64>().map_err(|_| err(start, "integer literal too large".into()))?;
            toks.push((Tok::Int(v), start));
            continue;
        }
        if c.is_ascii_lowercase() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            toks.push((Tok::Name(code[start..i].to_string()), start));
            continue;
        }
        let two = if i + 1 < bytes.len() { &code[i..i + 2] } else { "" };
        let op: &'static str = match two {
            "<=" => "<=",
            ">=" => ">=",
            "==" => "==",
            "!=" => "!=",
            _ => match c {
                b'+' => "+",
                b'-' => "-",
                b'*' => "*",
                b'%' => "%",
                b'<' => "<",
                b'>' => ">",
                b'=' => "=",
                b'(' => "(",
                b')' => ")",
                b':' => ":",
                b',' => ",",
                _ => return Err(err(start, format!("unexpected character {:?}", c as char))),
            },
        };
        i += op.len();
        toks.push((Tok::Op(op), start));
    }
    Ok(Some(Line { no, indent, toks, end_col: code.len() }))
}

struct Cursor<'a> {
    line: &'a Line,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.line.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.line.toks.get(self.pos).map_or(self.line.end_col, |t| t.1) + 1
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line.no, col: self.col(), msg: msg.into() }
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), ParseError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{op}'")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Name(n)) if n == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected '{kw}'"))),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Name(n)) if !KEYWORDS.contains(&n.as_str()) => {
                self.pos += 1;
                Ok(n.clone())
            }
            _ => Err(self.err("expected an identifier")),
        }
    }

    fn end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.err("unexpected token")),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::bin(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.atom()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("%") {
                BinOp::Mod
            } else {
                return Ok(lhs);
            };
            lhs = Expr::bin(op, lhs, self.atom()?);
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let col = self.col();
        match self.next() {
            Some(Tok::Int(v)) => Ok(Expr::Lit(*v)),
            // unary minus binds tighter than every binary operator, so a
            // negated literal is just a negative literal
            Some(Tok::Op("-")) => match self.next() {
                Some(Tok::Int(v)) => Ok(Expr::Lit(-v)),
                _ => Err(ParseError::Syntax { line: self.line.no, col, msg: "unary minus is only supported on integer literals".into() }),
            },
            Some(Tok::Op("(")) => {
                let e = self.expr()?;
                self.expect_op(")")?;
                Ok(e)
            }
            Some(Tok::Name(n)) if !KEYWORDS.contains(&n.as_str()) => Ok(Expr::Var(n.clone())),
            None => Err(ParseError::Syntax { line: self.line.no, col, msg: "unexpected end of line".into() }),
            Some(_) => Err(ParseError::Syntax { line: self.line.no, col, msg: "expected an expression".into() }),
        }
    }

    fn cond(&mut self) -> Result<Cond, ParseError> {
        let lhs = self.expr()?;
        let op = match self.next() {
            Some(Tok::Op(s)) => match *s {
                "<" => CmpOp::Lt,
                ">" => CmpOp::Gt,
                "<=" => CmpOp::Le,
                ">=" => CmpOp::Ge,
                "==" => CmpOp::Eq,
                "!=" => CmpOp::Ne,
                _ => return Err(self.err("expected a comparison operator")),
            },
            _ => return Err(self.err("expected a comparison operator")),
        };
        let rhs = self.expr()?;
        Ok(Cond { op, lhs, rhs })
    }
}

struct Parser {
    lines: Vec<Line>,
    pos: usize,
}

impl Parser {
    fn block(&mut self, indent: usize) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(ParseError::Indentation { line: line.no, msg: "unexpected indent".into() });
            }
            out.push(self.stmt(indent)?);
        }
        Ok(out)
    }

    fn header_kw(&self, indent: usize) -> Option<&str> {
        let line = self.lines.get(self.pos)?;
        if line.indent != indent {
            return None;
        }
        match line.toks.first() {
            Some((Tok::Name(n), _)) => Some(n.as_str()),
            _ => None,
        }
    }

    fn body(&mut self, header: &Line, indent: usize) -> Result<Vec<Stmt>, ParseError> {
        match self.lines.get(self.pos) {
            Some(l) if l.indent > indent => {
                if l.indent != indent + 4 {
                    return Err(ParseError::Indentation { line: l.no, msg: format!("expected {} spaces", indent + 4) });
                }
                self.block(indent + 4)
            }
            _ => Err(ParseError::Indentation { line: header.no + 1, msg: "expected an indented block".into() }),
        }
    }

    fn stmt(&mut self, indent: usize) -> Result<Stmt, ParseError> {
        let line = self.lines[self.pos].clone();
        self.pos += 1;
        let mut c = Cursor { line: &line, pos: 0 };
        match c.peek() {
            Some(Tok::Name(kw)) if kw == "print" => {
                c.pos += 1;
                c.expect_op("(")?;
                let value = c.expr()?;
                c.expect_op(")")?;
                c.end()?;
                Ok(Stmt::Print { value, line: line.no })
            }
            Some(Tok::Name(kw)) if kw == "if" => {
                c.pos += 1;
                let cond = c.cond()?;
                c.expect_op(":")?;
                c.end()?;
                let mut branches = vec![(cond, self.body(&line, indent)?)];
                let mut else_block = None;
                while let Some(kw) = self.header_kw(indent).map(str::to_string) {
                    if kw != "elif" && kw != "else" {
                        break;
                    }
                    let h = self.lines[self.pos].clone();
                    self.pos += 1;
                    let mut hc = Cursor { line: &h, pos: 1 };
                    if kw == "elif" {
                        let cond = hc.cond()?;
                        hc.expect_op(":")?;
                        hc.end()?;
                        branches.push((cond, self.body(&h, indent)?));
                    } else {
                        hc.expect_op(":")?;
                        hc.end()?;
                        else_block = Some(self.body(&h, indent)?);
                        break;
                    }
                }
                Ok(Stmt::If { branches, else_block, line: line.no })
            }
            Some(Tok::Name(kw)) if kw == "for" => {
                c.pos += 1;
                let var = c.ident()?;
                c.expect_kw("in")?;
                c.expect_kw("range")?;
                c.expect_op("(")?;
                let a = c.expr()?;
                let range = if c.eat_op(",") { RangeArgs::StartStop(a, c.expr()?) } else { RangeArgs::Stop(a) };
                c.expect_op(")")?;
                c.expect_op(":")?;
                c.end()?;
                let body = self.body(&line, indent)?;
                Ok(Stmt::For { var, range, body, line: line.no })
            }
            Some(Tok::Name(kw)) if kw == "elif" || kw == "else" => Err(c.err(format!("'{kw}' without matching 'if'"))),
            _ => {
                let target = c.ident()?;
                c.expect_op("=")?;
                let value = c.expr()?;
                c.end()?;
                Ok(Stmt::Assign { target, value, line: line.no })
            }
        }
    }
}

/// Parses TinyPy source. Blank lines and `#` comments are ignored, so the
/// code region of an annotated snippet parses as-is.
pub fn parse(src: &str) -> Result<Ast, ParseError> {
    let mut lines = Vec::new();
    for (i, text) in src.lines().enumerate() {
        if let Some(l) = lex_line(i + 1, text)? {
            lines.push(l);
        }
    }
    let mut p = Parser { lines, pos: 0 };
    let stmts = p.block(0)?;
    if let Some(l) = p.lines.get(p.pos) {
        return Err(ParseError::Indentation { line: l.no, msg: "unindent does not match any outer level".into() });
    }
    Ok(Ast { stmts })
}
