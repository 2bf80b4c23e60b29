//! Syntax tree of the TinyPy subset and its canonical printer.

use std::fmt::{self, Write};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Mod,
}

impl BinOp {
    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Mod];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Mod => "%",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Mod => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn eval(self, l: i64, r: i64) -> bool {
        match self {
            CmpOp::Lt => l < r,
            CmpOp::Gt => l > r,
            CmpOp::Le => l <= r,
            CmpOp::Ge => l >= r,
            CmpOp::Eq => l == r,
            CmpOp::Ne => l != r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(i64),
    Var(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    /// Number of binary operators.
    pub fn op_count(&self) -> usize {
        match self {
            Expr::Bin(_, l, r) => 1 + l.op_count() + r.op_count(),
            _ => 0,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            _ => u8::MAX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cond {
    pub op: CmpOp,
    pub lhs: Expr,
    pub rhs: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RangeArgs {
    Stop(Expr),
    StartStop(Expr, Expr),
}

/// `line` is the 1-based source line of the statement (its header line for
/// compound statements).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign { target: String, value: Expr, line: usize },
    Print { value: Expr, line: usize },
    If { branches: Vec<(Cond, Vec<Stmt>)>, else_block: Option<Vec<Stmt>>, line: usize },
    For { var: String, range: RangeArgs, body: Vec<Stmt>, line: usize },
}

impl Stmt {
    pub fn line(&self) -> usize {
        match self {
            Stmt::Assign { line, .. } | Stmt::Print { line, .. } | Stmt::If { line, .. } | Stmt::For { line, .. } => *line,
        }
    }

    fn set_line(&mut self, l: usize) {
        match self {
            Stmt::Assign { line, .. } | Stmt::Print { line, .. } | Stmt::If { line, .. } | Stmt::For { line, .. } => *line = l,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Ast {
    pub stmts: Vec<Stmt>,
}

impl Ast {
    pub fn new(stmts: Vec<Stmt>) -> Self {
        let mut ast = Ast { stmts };
        ast.renumber();
        ast
    }

    /// Assigns every statement the line it occupies in [`Ast::unparse`]'s
    /// output.
    pub fn renumber(&mut self) {
        fn block(stmts: &mut [Stmt], next: &mut usize) {
            for s in stmts {
                s.set_line(*next);
                *next += 1;
                match s {
                    Stmt::If { branches, else_block, .. } => {
                        for (i, (_, b)) in branches.iter_mut().enumerate() {
                            if i > 0 {
                                *next += 1;
                            }
                            block(b, next);
                        }
                        if let Some(b) = else_block {
                            *next += 1;
                            block(b, next);
                        }
                    }
                    Stmt::For { body, .. } => block(body, next),
                    _ => {}
                }
            }
        }
        let mut next = 1;
        block(&mut self.stmts, &mut next);
    }

    /// Canonical source text: 4-space indents, one space around binary and
    /// comparison operators and before `:`, minimal parentheses.
    pub fn unparse(&self) -> String {
        let mut out = String::new();
        for s in &self.stmts {
            write_stmt(&mut out, s, 0);
        }
        out
    }

    /// Deepest nesting of compound statements (0 for straight-line code).
    pub fn nesting_depth(&self) -> usize {
        fn depth(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::If { branches, else_block, .. } => {
                        let inner = branches.iter().map(|(_, b)| depth(b)).chain(else_block.iter().map(|b| depth(b))).max().unwrap_or(0);
                        1 + inner
                    }
                    Stmt::For { body, .. } => 1 + depth(body),
                    _ => 0,
                })
                .max()
                .unwrap_or(0)
        }
        depth(&self.stmts)
    }

    /// Total number of statements, nested ones included.
    pub fn statement_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| {
                    1 + match s {
                        Stmt::If { branches, else_block, .. } => {
                            branches.iter().map(|(_, b)| count(b)).sum::<usize>() + else_block.as_deref().map_or(0, count)
                        }
                        Stmt::For { body, .. } => count(body),
                        _ => 0,
                    }
                })
                .sum()
        }
        count(&self.stmts)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(n) => f.write_str(n),
            Expr::Bin(op, l, r) => {
                // left-associative: parenthesize a left child of lower
                // precedence, a right child of lower or equal precedence
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = "    ".repeat(depth);
    match s {
        Stmt::Assign { target, value, .. } => {
            let _ = writeln!(out, "{pad}{target} = {value}");
        }
        Stmt::Print { value, .. } => {
            let _ = writeln!(out, "{pad}print({value})");
        }
        Stmt::If { branches, else_block, .. } => {
            for (i, (c, b)) in branches.iter().enumerate() {
                let kw = if i == 0 { "if" } else { "elif" };
                let _ = writeln!(out, "{pad}{kw} {c} :");
                for s in b {
                    write_stmt(out, s, depth + 1);
                }
            }
            if let Some(b) = else_block {
                let _ = writeln!(out, "{pad}else :");
                for s in b {
                    write_stmt(out, s, depth + 1);
                }
            }
        }
        Stmt::For { var, range, body, .. } => {
            let _ = match range {
                RangeArgs::Stop(e) => writeln!(out, "{pad}for {var} in range({e}) :"),
                RangeArgs::StartStop(a, b) => writeln!(out, "{pad}for {var} in range({a}, {b}) :"),
            };
            for s in body {
                write_stmt(out, s, depth + 1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinOp::*;

    fn lit(v: i64) -> Expr {
        Expr::Lit(v)
    }

    #[test]
    fn minimal_parentheses() {
        let e = Expr::bin(Mul, Expr::bin(Add, Expr::var("a"), lit(1)), Expr::var("b"));
        assert_eq!(e.to_string(), "(a + 1) * b");
        let e = Expr::bin(Sub, Expr::var("a"), Expr::bin(Sub, lit(2), lit(3)));
        assert_eq!(e.to_string(), "a - (2 - 3)");
        let e = Expr::bin(Sub, Expr::bin(Sub, lit(1), lit(2)), lit(3));
        assert_eq!(e.to_string(), "1 - 2 - 3");
        let e = Expr::bin(Add, lit(1), Expr::bin(Mod, lit(2), lit(3)));
        assert_eq!(e.to_string(), "1 + 2 % 3");
        let e = Expr::bin(Mod, lit(7), Expr::bin(Mul, lit(2), lit(3)));
        assert_eq!(e.to_string(), "7 % (2 * 3)");
    }

    #[test]
    fn canonical_layout_and_lines() {
        let ast = Ast::new(vec![
            Stmt::Assign { target: "a".into(), value: lit(3), line: 0 },
            Stmt::If {
                branches: vec![
                    (Cond { op: CmpOp::Lt, lhs: Expr::var("a"), rhs: lit(2) }, vec![Stmt::Print { value: Expr::var("a"), line: 0 }]),
                    (Cond { op: CmpOp::Ge, lhs: Expr::var("a"), rhs: lit(5) }, vec![Stmt::Print { value: lit(1), line: 0 }]),
                ],
                else_block: Some(vec![Stmt::For {
                    var: "b".into(),
                    range: RangeArgs::StartStop(lit(1), lit(3)),
                    body: vec![Stmt::Print { value: Expr::var("b"), line: 0 }],
                    line: 0,
                }]),
                line: 0,
            },
            Stmt::Print { value: lit(0), line: 0 },
        ]);
        let want = "a = 3\nif a < 2 :\n    print(a)\nelif a >= 5 :\n    print(1)\nelse :\n    for b in range(1, 3) :\n        print(b)\nprint(0)\n";
        assert_eq!(ast.unparse(), want);
        assert_eq!(ast.stmts[2].line(), 9);
        assert_eq!(ast.nesting_depth(), 2);
        assert_eq!(ast.statement_count(), 7);
    }
}
