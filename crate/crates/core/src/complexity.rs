//! Cyclomatic complexity, Halstead measures and the Overall Metric.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ast::{Ast, Cond, Expr, RangeArgs, Stmt};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Entry,
    Exit,
    /// Straight-line statements; may be empty (a join point).
    Block,
    /// An `if`/`elif` condition or a `for` header.
    Decision,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlFlowGraph {
    pub nodes: Vec<NodeKind>,
    /// Number of statements merged into each node.
    pub stmts: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub components: usize,
}

impl ControlFlowGraph {
    /// `E - N + 2P`.
    pub fn cyclomatic(&self) -> i64 {
        self.edges.len() as i64 - self.nodes.len() as i64 + 2 * self.components as i64
    }

    pub fn decisions(&self) -> usize {
        self.nodes.iter().filter(|k| **k == NodeKind::Decision).count()
    }

    fn add(&mut self, kind: NodeKind) -> usize {
        self.nodes.push(kind);
        self.stmts.push(0);
        self.nodes.len() - 1
    }

    fn edge(&mut self, a: usize, b: usize) {
        self.edges.push((a, b));
    }

    /// Lays out `stmts` starting in `cur`; returns the block control leaves
    /// through.
    fn lay(&mut self, stmts: &[Stmt], mut cur: usize) -> usize {
        for s in stmts {
            match s {
                Stmt::Assign { .. } | Stmt::Print { .. } => {
                    if self.nodes[cur] != NodeKind::Block {
                        let b = self.add(NodeKind::Block);
                        self.edge(cur, b);
                        cur = b;
                    }
                    self.stmts[cur] += 1;
                }
                Stmt::If { branches, else_block, .. } => {
                    let join = self.add(NodeKind::Block);
                    let mut from = cur;
                    for (_, body) in branches {
                        let d = self.add(NodeKind::Decision);
                        self.edge(from, d);
                        let entry = self.add(NodeKind::Block);
                        self.edge(d, entry);
                        let out = self.lay(body, entry);
                        self.edge(out, join);
                        from = d;
                    }
                    match else_block {
                        Some(body) => {
                            let entry = self.add(NodeKind::Block);
                            self.edge(from, entry);
                            let out = self.lay(body, entry);
                            self.edge(out, join);
                        }
                        None => self.edge(from, join),
                    }
                    cur = join;
                }
                Stmt::For { body, .. } => {
                    let head = self.add(NodeKind::Decision);
                    self.edge(cur, head);
                    let entry = self.add(NodeKind::Block);
                    self.edge(head, entry);
                    let out = self.lay(body, entry);
                    self.edge(out, head);
                    let after = self.add(NodeKind::Block);
                    self.edge(head, after);
                    cur = after;
                }
            }
        }
        cur
    }
}

fn count_components(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut comps = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            comps -= 1;
        }
    }
    comps
}

/// Control-flow graph with one entry and one exit node. Straight-line runs
/// share a block; each condition and loop header is a two-way decision.
pub fn build_cfg(ast: &Ast) -> ControlFlowGraph {
    let mut g = ControlFlowGraph { nodes: Vec::new(), stmts: Vec::new(), edges: Vec::new(), components: 0 };
    let entry = g.add(NodeKind::Entry);
    let last = g.lay(&ast.stmts, entry);
    let exit = g.add(NodeKind::Exit);
    g.edge(last, exit);
    g.components = count_components(g.nodes.len(), &g.edges);
    g
}

/// `1 + #if + #elif + #for`.
pub fn cyclomatic_complexity(ast: &Ast) -> f64 {
    fn decisions(stmts: &[Stmt]) -> usize {
        stmts
            .iter()
            .map(|s| match s {
                Stmt::If { branches, else_block, .. } => {
                    branches.len() + branches.iter().map(|(_, b)| decisions(b)).sum::<usize>() + else_block.as_deref().map_or(0, decisions)
                }
                Stmt::For { body, .. } => 1 + decisions(body),
                _ => 0,
            })
            .sum()
    }
    1.0 + decisions(&ast.stmts) as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalsteadCounts {
    pub eta1: usize,
    pub eta2: usize,
    pub n1_total: usize,
    pub n2_total: usize,
}

/// Operator and operand occurrences, keyed by spelling.
#[derive(Default)]
struct Tally {
    operators: BTreeMap<&'static str, usize>,
    operands: BTreeMap<String, usize>,
}

impl Tally {
    fn op(&mut self, s: &'static str) {
        *self.operators.entry(s).or_default() += 1;
    }

    fn operand(&mut self, s: String) {
        *self.operands.entry(s).or_default() += 1;
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Lit(v) => self.operand(v.to_string()),
            Expr::Var(n) => self.operand(n.clone()),
            Expr::Bin(op, l, r) => {
                self.op(op.symbol());
                self.expr(l);
                self.expr(r);
            }
        }
    }

    fn cond(&mut self, c: &Cond) {
        self.op(c.op.symbol());
        self.expr(&c.lhs);
        self.expr(&c.rhs);
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            match s {
                Stmt::Assign { target, value, .. } => {
                    self.op("=");
                    self.operand(target.clone());
                    self.expr(value);
                }
                Stmt::Print { value, .. } => {
                    self.op("print");
                    self.expr(value);
                }
                Stmt::If { branches, else_block, .. } => {
                    for (i, (c, b)) in branches.iter().enumerate() {
                        self.op(if i == 0 { "if" } else { "elif" });
                        self.cond(c);
                        self.block(b);
                    }
                    if let Some(b) = else_block {
                        self.op("else");
                        self.block(b);
                    }
                }
                Stmt::For { var, range, body, .. } => {
                    self.op("for");
                    self.operand(var.clone());
                    self.op("in");
                    self.op("range");
                    match range {
                        RangeArgs::Stop(e) => self.expr(e),
                        RangeArgs::StartStop(a, b) => {
                            self.expr(a);
                            self.expr(b);
                        }
                    }
                    self.block(body);
                }
            }
        }
    }
}

/// Operators: `= + - * % < > <= >= == != if elif else for in range print`.
/// Operands: identifiers (by name) and integer literals (by value).
/// Parentheses, colons, commas and newlines are not counted.
pub fn halstead_counts(ast: &Ast) -> HalsteadCounts {
    let mut t = Tally::default();
    t.block(&ast.stmts);
    HalsteadCounts {
        eta1: t.operators.len(),
        eta2: t.operands.len(),
        n1_total: t.operators.values().sum(),
        n2_total: t.operands.values().sum(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HalsteadMeasures {
    pub vocabulary: f64,
    pub length: f64,
    pub calculated_length: f64,
    pub volume: f64,
    pub difficulty: f64,
    pub effort: f64,
    pub time: f64,
    pub bugs: f64,
}

fn xlog2x(x: usize) -> f64 {
    if x == 0 {
        0.0
    } else {
        x as f64 * (x as f64).log2()
    }
}

pub fn halstead_measures(c: &HalsteadCounts) -> HalsteadMeasures {
    let vocabulary = (c.eta1 + c.eta2) as f64;
    let length = (c.n1_total + c.n2_total) as f64;
    let volume = if vocabulary >= 1.0 { length * vocabulary.log2() } else { 0.0 };
    let difficulty = if c.eta2 > 0 { (c.eta1 as f64 / 2.0) * (c.n2_total as f64 / c.eta2 as f64) } else { 0.0 };
    let effort = difficulty * volume;
    HalsteadMeasures {
        vocabulary,
        length,
        calculated_length: xlog2x(c.eta1) + xlog2x(c.eta2),
        volume,
        difficulty,
        effort,
        time: effort / 18.0,
        bugs: volume / 3000.0,
    }
}

pub fn overall_metric(cc: f64, hd: f64) -> f64 {
    (cc + hd) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub cc: f64,
    pub hd: f64,
    pub om: f64,
}

impl DifficultyScore {
    pub fn of(ast: &Ast) -> Self {
        let cc = cyclomatic_complexity(ast);
        let hd = halstead_measures(&halstead_counts(ast)).difficulty;
        DifficultyScore { cc, hd, om: overall_metric(cc, hd) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLevel {
    Easy,
    Medium,
    Hard,
}

impl DifficultyLevel {
    pub const ALL: [DifficultyLevel; 3] = [DifficultyLevel::Easy, DifficultyLevel::Medium, DifficultyLevel::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            DifficultyLevel::Easy => "easy",
            DifficultyLevel::Medium => "medium",
            DifficultyLevel::Hard => "hard",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DifficultyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DifficultyLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "easy" => Ok(DifficultyLevel::Easy),
            "medium" => Ok(DifficultyLevel::Medium),
            "hard" => Ok(DifficultyLevel::Hard),
            _ => Err(format!("unknown difficulty level '{s}'")),
        }
    }
}

pub const EASY_BELOW: f64 = 2.0;
pub const HARD_FROM: f64 = 4.0;

/// easy: OM < 2; medium: 2 <= OM < 4; hard: OM >= 4.
pub fn classify(om: f64) -> DifficultyLevel {
    if om < EASY_BELOW {
        DifficultyLevel::Easy
    } else if om < HARD_FROM {
        DifficultyLevel::Medium
    } else {
        DifficultyLevel::Hard
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    fn counts(src: &str) -> HalsteadCounts {
        halstead_counts(&parse(src).unwrap())
    }

    #[test]
    fn halstead_examples() {
        assert_eq!(counts("a = 1 + 2\n"), HalsteadCounts { eta1: 2, eta2: 3, n1_total: 2, n2_total: 3 });
        assert_eq!(counts("print(a)\n"), HalsteadCounts { eta1: 1, eta2: 1, n1_total: 1, n2_total: 1 });
        assert_eq!(counts(""), HalsteadCounts::default());
        // parentheses are not operators; equal literals are one operand
        assert_eq!(counts("a = (1 + 1) * 1\n"), HalsteadCounts { eta1: 3, eta2: 2, n1_total: 3, n2_total: 4 });
    }

    #[test]
    fn measures_and_guards() {
        let m = halstead_measures(&HalsteadCounts { eta1: 2, eta2: 3, n1_total: 2, n2_total: 3 });
        assert_eq!(m.difficulty, 1.0);
        assert_eq!(halstead_measures(&HalsteadCounts { eta1: 1, eta2: 1, n1_total: 1, n2_total: 1 }).difficulty, 0.5);
        let z = halstead_measures(&HalsteadCounts::default());
        assert_eq!((z.difficulty, z.volume, z.calculated_length), (0.0, 0.0, 0.0));
    }

    #[test]
    fn cfg_duality_small_cases() {
        for (src, cc) in [
            ("a = 1\nb = 2\nprint(a)\n", 1),
            ("a = 1\nif a < 2 :\n    print(a)\nelse :\n    print(0)\n", 2),
            ("for a in range(3) :\n    if a < 1 :\n        print(a)\n    elif a < 2 :\n        print(1)\n    else :\n        print(2)\n", 4),
            ("for a in range(2) :\n    for b in range(2) :\n        print(b)\n", 3),
            ("", 1),
        ] {
            let ast = parse(src).unwrap();
            let g = build_cfg(&ast);
            assert_eq!(g.cyclomatic(), cc, "{src}");
            assert_eq!(cyclomatic_complexity(&ast), cc as f64);
            assert_eq!(g.components, 1);
        }
        let g = build_cfg(&parse("a = 1\nb = 2\nprint(a)\n").unwrap());
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.stmts[1], 3);
    }

    #[test]
    fn thresholds() {
        assert_eq!(classify(1.999_999_999), DifficultyLevel::Easy);
        assert_eq!(classify(2.0), DifficultyLevel::Medium);
        assert_eq!(classify(3.999_999), DifficultyLevel::Medium);
        assert_eq!(classify(4.0), DifficultyLevel::Hard);
        assert_eq!(overall_metric(3.0, 5.0), 4.0);
        assert_eq!(overall_metric(1.0, 0.0), 0.5);
    }
}
