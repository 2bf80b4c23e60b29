//! Tree-walking interpreter and the annotated snippet format.

use thiserror::Error;

use crate::ast::{Ast, BinOp, Cond, Expr, RangeArgs, Stmt};

pub const DEFAULT_STEP_BUDGET: u64 = 10_000;
pub const OUTPUT_MARKER: &str = "# output";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("line {line}: integer modulo by zero")]
    ModuloByZero { line: usize },
    #[error("step budget of {budget} exceeded")]
    StepBudgetExceeded { budget: u64 },
    #[error("line {line}: name '{name}' is not defined")]
    UnboundVariable { name: String, line: usize },
    #[error("line {line}: integer overflow")]
    Overflow { line: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutionOutput {
    /// Printed values, rendered in decimal.
    pub lines: Vec<String>,
    pub step_count: u64,
    /// Largest number of iterations any single `range` produced.
    pub max_trips: u64,
    /// Largest magnitude of any value computed.
    pub max_abs: u64,
}

struct Machine {
    vars: Vec<(String, i64)>,
    out: ExecutionOutput,
    budget: u64,
}

impl Machine {
    fn get(&self, name: &str, line: usize) -> Result<i64, ExecError> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|v| v.1)
            .ok_or_else(|| ExecError::UnboundVariable { name: name.to_string(), line })
    }

    fn set(&mut self, name: &str, v: i64) {
        match self.vars.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = v,
            None => self.vars.push((name.to_string(), v)),
        }
    }

    fn note(&mut self, v: i64) -> i64 {
        self.out.max_abs = self.out.max_abs.max(v.unsigned_abs());
        v
    }

    fn eval(&mut self, e: &Expr, line: usize) -> Result<i64, ExecError> {
        let v = match e {
            Expr::Lit(v) => *v,
            Expr::Var(n) => self.get(n, line)?,
            Expr::Bin(op, l, r) => {
                let a = self.eval(l, line)?;
                let b = self.eval(r, line)?;
                let of = ExecError::Overflow { line };
                match op {
                    BinOp::Add => a.checked_add(b).ok_or(of)?,
                    BinOp::Sub => a.checked_sub(b).ok_or(of)?,
                    BinOp::Mul => a.checked_mul(b).ok_or(of)?,
                    BinOp::Mod => {
                        if b == 0 {
                            return Err(ExecError::ModuloByZero { line });
                        }
                        // floored: the result takes the sign of the divisor
                        let r = a.checked_rem(b).ok_or(of)?;
                        if r != 0 && ((r < 0) != (b < 0)) {
                            r + b
                        } else {
                            r
                        }
                    }
                }
            }
        };
        Ok(self.note(v))
    }

    fn test(&mut self, c: &Cond, line: usize) -> Result<bool, ExecError> {
        let l = self.eval(&c.lhs, line)?;
        let r = self.eval(&c.rhs, line)?;
        Ok(c.op.eval(l, r))
    }

    fn tick(&mut self) -> Result<(), ExecError> {
        self.out.step_count += 1;
        if self.out.step_count > self.budget {
            return Err(ExecError::StepBudgetExceeded { budget: self.budget });
        }
        Ok(())
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), ExecError> {
        for s in stmts {
            self.tick()?;
            match s {
                Stmt::Assign { target, value, line } => {
                    let v = self.eval(value, *line)?;
                    self.set(target, v);
                }
                Stmt::Print { value, line } => {
                    let v = self.eval(value, *line)?;
                    self.out.lines.push(v.to_string());
                }
                Stmt::If { branches, else_block, line } => {
                    let mut taken = false;
                    for (c, b) in branches {
                        if self.test(c, *line)? {
                            self.block(b)?;
                            taken = true;
                            break;
                        }
                    }
                    if !taken {
                        if let Some(b) = else_block {
                            self.block(b)?;
                        }
                    }
                }
                Stmt::For { var, range, body, line } => {
                    let (lo, hi) = match range {
                        RangeArgs::Stop(e) => (0, self.eval(e, *line)?),
                        RangeArgs::StartStop(a, b) => (self.eval(a, *line)?, self.eval(b, *line)?),
                    };
                    let trips = if hi > lo { (hi as i128 - lo as i128) as u64 } else { 0 };
                    self.out.max_trips = self.out.max_trips.max(trips);
                    if trips > self.budget {
                        return Err(ExecError::StepBudgetExceeded { budget: self.budget });
                    }
                    let mut i = lo;
                    while i < hi {
                        self.set(var, i);
                        self.block(body)?;
                        i += 1;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs `ast` with Python semantics for the subset; at most `step_budget`
/// statements are executed.
pub fn execute(ast: &Ast, step_budget: u64) -> Result<ExecutionOutput, ExecError> {
    let mut m = Machine { vars: Vec::new(), out: ExecutionOutput::default(), budget: step_budget };
    m.block(&ast.stmts)?;
    Ok(m.out)
}

/// `src`, the `# output` marker, one `# <value>` line per output line, and
/// a blank terminator line.
pub fn render_annotated(src: &str, lines: &[String]) -> String {
    let mut s = String::with_capacity(src.len() + 12 + lines.iter().map(|l| l.len() + 3).sum::<usize>());
    s.push_str(src);
    s.push_str(OUTPUT_MARKER);
    s.push('\n');
    for l in lines {
        s.push_str("# ");
        s.push_str(l);
        s.push('\n');
    }
    s.push('\n');
    s
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed annotated snippet at byte {offset}: {msg}")]
pub struct AnnotationError {
    pub offset: usize,
    pub msg: String,
}

/// Inverse of [`render_annotated`] for one snippet (terminator included).
/// Offsets in errors are relative to `text`.
pub fn split_annotated(text: &str) -> Result<(String, Vec<String>), AnnotationError> {
    let err = |offset: usize, msg: &str| AnnotationError { offset, msg: msg.to_string() };
    let body = text.strip_suffix("\n\n").ok_or_else(|| err(text.len(), "missing blank terminator line"))?;
    let body = format!("{body}\n");
    let mut code_end = None;
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        if line == "# output\n" {
            code_end = Some(offset);
            break;
        }
        offset += line.len();
    }
    let code_end = code_end.ok_or_else(|| err(0, "missing '# output' marker"))?;
    let mut values = Vec::new();
    let mut at = code_end + OUTPUT_MARKER.len() + 1;
    for line in body[at..].split_inclusive('\n') {
        let v = line.strip_prefix("# ").and_then(|v| v.strip_suffix('\n')).ok_or_else(|| err(at, "output line must be '# <integer>'"))?;
        let digits = v.strip_prefix('-').unwrap_or(v);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(at, "output value is not an integer"));
        }
        values.push(v.to_string());
        at += line.len();
    }
    Ok((body[..code_end].to_string(), values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    fn run(src: &str) -> Result<Vec<String>, ExecError> {
        execute(&parse(src).unwrap(), DEFAULT_STEP_BUDGET).map(|o| o.lines)
    }

    #[test]
    fn arithmetic_and_print() {
        assert_eq!(run("a = 2 * 3 + 1\nprint(a)\n").unwrap(), vec!["7"]);
    }

    #[test]
    fn floored_modulo() {
        assert_eq!(run("print(-7 % 3)\nprint(7 % -3)\nprint(-7 % -3)\nprint(6 % 3)\n").unwrap(), vec!["2", "-2", "-1", "0"]);
        assert_eq!(run("print(1 % 0)\n"), Err(ExecError::ModuloByZero { line: 1 }));
    }

    #[test]
    fn range_semantics() {
        assert_eq!(run("for a in range(3) :\n    print(a)\n").unwrap(), vec!["0", "1", "2"]);
        assert_eq!(run("for a in range(5, 7) :\n    print(a)\n").unwrap(), vec!["5", "6"]);
        assert!(run("for a in range(0) :\n    print(a)\n").unwrap().is_empty());
        assert!(run("for a in range(4, 2) :\n    print(a)\n").unwrap().is_empty());
        // empty range leaves the loop variable unbound, as in Python
        assert!(matches!(run("for a in range(0) :\n    print(1)\nprint(a)\n"), Err(ExecError::UnboundVariable { line: 3, .. })));
        // the loop variable keeps its last value; rebinding it does not
        // change the iteration
        assert_eq!(run("for a in range(3) :\n    a = a * 10\nprint(a)\n").unwrap(), vec!["20"]);
    }

    #[test]
    fn branches() {
        let src = "a = 5\nif a < 2 :\n    print(0)\nelif a < 6 :\n    print(1)\nelse :\n    print(2)\n";
        assert_eq!(run(src).unwrap(), vec!["1"]);
    }

    #[test]
    fn errors() {
        assert_eq!(run("print(b)\n"), Err(ExecError::UnboundVariable { name: "b".into(), line: 1 }));
        let big = "a = 9\nfor b in range(9) :\n    a = a * a\n";
        assert!(matches!(run(big), Err(ExecError::Overflow { line: 3 })));
        let ast = parse("for a in range(9) :\n    for b in range(9) :\n        print(b)\n").unwrap();
        assert_eq!(execute(&ast, 50), Err(ExecError::StepBudgetExceeded { budget: 50 }));
        assert_eq!(execute(&ast, 10_000).unwrap().step_count, 1 + 9 * 10);
    }

    #[test]
    fn render_examples() {
        assert_eq!(render_annotated("a = 5\nprint(a)\n", &["5".into()]), "a = 5\nprint(a)\n# output\n# 5\n\n");
        assert_eq!(render_annotated("a = 5\n", &[]), "a = 5\n# output\n\n");
        let three: Vec<String> = ["0", "1", "2"].iter().map(|s| s.to_string()).collect();
        assert!(render_annotated("x\n", &three).ends_with("# 0\n# 1\n# 2\n\n"));
    }

    #[test]
    fn split_inverts_render() {
        for vals in [vec![], vec!["5".to_string()], vec!["-12".into(), "0".into()]] {
            let text = render_annotated("a = 5\nprint(a)\n", &vals);
            assert_eq!(split_annotated(&text).unwrap(), ("a = 5\nprint(a)\n".to_string(), vals));
        }
        assert_eq!(split_annotated("a = 5\n# output\n# 5\n").unwrap_err().offset, 19);
        assert!(split_annotated("a = 5\n# 5\n\n").is_err());
        assert_eq!(split_annotated("a = 5\n# output\n# x\n\n").unwrap_err().offset, 15);
    }
}
