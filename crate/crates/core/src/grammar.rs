//! Random TinyPy programs from a reference grammar, restricted by profiles.
//!
//! ```text
//! program  := stmt+
//! stmt     := id "=" expr | "print(" expr ")" | if_chain | for_loop
//! if_chain := "if" cond ":" block ("elif" cond ":" block)* ["else" ":" block]
//! for_loop := "for" id "in" "range(" expr ["," expr] ")" ":" block
//! cond     := expr ("<" | ">" | "<=" | ">=" | "==") expr
//! expr     := expr ("+" | "-" | "*" | "%") expr | "(" expr ")" | id | 0..9
//! ```
//!
//! Candidates are executed; any that fail (modulo by zero, overflow), loop
//! more than nine times, compute values beyond [`VALUE_LIMIT`], or render
//! longer than [`MAX_SNIPPET_CHARS`] are discarded and redrawn.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{Ast, BinOp, CmpOp, Cond, Expr, RangeArgs, Stmt};
use crate::complexity::{classify, DifficultyScore};
use crate::corpus::AnnotatedSnippet;
use crate::exec::{execute, ExecutionOutput, DEFAULT_STEP_BUDGET};

pub const MAX_LOOP_TRIPS: u64 = 9;
pub const VALUE_LIMIT: u64 = 9_999;
pub const MAX_SNIPPET_CHARS: usize = 256;
pub const RESAMPLE_BUDGET: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construct {
    Assignment,
    ArithExpr,
    IfChain,
    ForLoop,
    Print,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarProfile {
    pub allowed_constructs: BTreeSet<Construct>,
    pub max_nesting: usize,
    pub max_elif: usize,
    pub identifier_pool: Vec<char>,
    /// Inclusive.
    pub literal_range: (i64, i64),
    /// Upper bound on statements, nested ones included.
    pub max_statements: usize,
    pub concept_level: Option<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("invalid grammar profile: {0}")]
    InvalidProfile(String),
    #[error("concept level {0} is outside 1..=6")]
    LevelOutOfRange(u8),
    #[error("{attempts} consecutive candidates were rejected (last: {last}); the profile is degenerate")]
    ResampleBudgetExhausted { attempts: usize, last: String },
}

impl Default for GrammarProfile {
    /// Every construct, nesting up to two, used to build leveled corpora.
    fn default() -> Self {
        use Construct::*;
        GrammarProfile {
            allowed_constructs: [Assignment, ArithExpr, IfChain, ForLoop, Print].into_iter().collect(),
            max_nesting: 2,
            max_elif: 2,
            identifier_pool: ('a'..='h').collect(),
            literal_range: (0, 9),
            max_statements: 12,
            concept_level: None,
        }
    }
}

impl GrammarProfile {
    pub fn allows(&self, c: Construct) -> bool {
        self.allowed_constructs.contains(&c)
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        let bad = |m: &str| Err(GrammarError::InvalidProfile(m.to_string()));
        if self.identifier_pool.is_empty() {
            return bad("identifier pool is empty");
        }
        if self.identifier_pool.iter().any(|c| !('a'..='h').contains(c)) {
            return bad("identifiers must be drawn from a..h");
        }
        let (lo, hi) = self.literal_range;
        if lo < 0 || hi > 9 || lo > hi {
            return bad("literal range must lie within [0, 9]");
        }
        if self.max_nesting > 2 {
            return bad("max_nesting must be at most 2");
        }
        if self.max_statements < 1 {
            return bad("max_statements must be at least 1");
        }
        if !self.allows(Construct::Assignment) && !self.allows(Construct::Print) {
            return bad("profile admits no simple statement");
        }
        if let Some(l) = self.concept_level {
            if !(1..=6).contains(&l) {
                return Err(GrammarError::LevelOutOfRange(l));
            }
            if concept_profile(l)?.allowed_constructs != self.allowed_constructs {
                return bad("constructs do not match the concept level");
            }
        }
        Ok(())
    }
}

/// The six conceptual levels:
/// 1 simple assignments, 2 assignments with multi-operator arithmetic,
/// 3 simple if-elif-else, 4 if-elif-else with arithmetic, 5 simple for
/// loops, 6 for loops with arithmetic.
pub fn concept_profile(level: u8) -> Result<GrammarProfile, GrammarError> {
    use Construct::*;
    let extra: &[Construct] = match level {
        1 => &[],
        2 => &[ArithExpr],
        3 => &[IfChain],
        4 => &[ArithExpr, IfChain],
        5 => &[ForLoop],
        6 => &[ArithExpr, ForLoop],
        _ => return Err(GrammarError::LevelOutOfRange(level)),
    };
    let allowed: BTreeSet<Construct> = [Assignment, Print].iter().chain(extra).copied().collect();
    let compound = allowed.contains(&IfChain) || allowed.contains(&ForLoop);
    Ok(GrammarProfile {
        allowed_constructs: allowed,
        max_nesting: usize::from(compound),
        max_elif: 2,
        identifier_pool: ('a'..='h').collect(),
        literal_range: (0, 9),
        max_statements: 8,
        concept_level: Some(level),
    })
}

/// Structural knobs derived from a profile.
struct Shape {
    top: (usize, usize),
    body: (usize, usize),
    /// Concept levels with a compound construct contain exactly one, at
    /// top level.
    exactly_one_compound: bool,
    p_compound: f64,
    /// Distribution of operator counts in an arithmetic expression.
    op_weights: &'static [f64],
}

impl Shape {
    fn of(p: &GrammarProfile) -> Shape {
        let arith = p.allows(Construct::ArithExpr);
        match p.concept_level {
            Some(_) => Shape {
                top: (2, 4),
                body: (1, 2),
                exactly_one_compound: p.allows(Construct::IfChain) || p.allows(Construct::ForLoop),
                p_compound: 0.0,
                op_weights: if arith { &[0.0, 0.15, 0.5, 0.35] } else { &[0.5, 0.5] },
            },
            None => Shape {
                top: (1, 5),
                body: (1, 3),
                exactly_one_compound: false,
                p_compound: 0.12,
                op_weights: if arith { &[0.55, 0.3, 0.12, 0.03] } else { &[0.5, 0.5] },
            },
        }
    }
}

struct Gen<'a, R> {
    rng: &'a mut R,
    p: &'a GrammarProfile,
    shape: Shape,
    budget: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn literal(&mut self) -> Expr {
        let (lo, hi) = self.p.literal_range;
        Expr::Lit(self.rng.gen_range(lo..=hi))
    }

    fn atom(&mut self, scope: &[String]) -> Expr {
        if !scope.is_empty() && self.rng.gen_bool(0.6) {
            Expr::Var(scope.choose(self.rng).unwrap().clone())
        } else {
            self.literal()
        }
    }

    fn op(&mut self) -> BinOp {
        *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Mod].choose_weighted(self.rng, |op| match op {
            BinOp::Add => 0.35,
            BinOp::Sub => 0.3,
            BinOp::Mul => 0.2,
            BinOp::Mod => 0.15,
        })
        .unwrap()
    }

    fn expr_with(&mut self, ops: usize, scope: &[String]) -> Expr {
        if ops == 0 {
            return self.atom(scope);
        }
        let left = self.rng.gen_range(0..ops);
        let op = self.op();
        let l = self.expr_with(left, scope);
        let r = self.expr_with(ops - 1 - left, scope);
        Expr::bin(op, l, r)
    }

    fn expr(&mut self, scope: &[String]) -> Expr {
        let w = self.shape.op_weights;
        let idx: Vec<usize> = (0..w.len()).collect();
        let ops = *idx.choose_weighted(self.rng, |&i| w[i]).unwrap();
        self.expr_with(ops, scope)
    }

    fn cond(&mut self, scope: &[String]) -> Cond {
        let op = *[CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge, CmpOp::Eq].choose(self.rng).unwrap();
        let arith = self.p.allows(Construct::ArithExpr);
        let lhs = if arith && self.rng.gen_bool(0.5) { self.expr(scope) } else { self.atom_var(scope) };
        let rhs = if arith && self.rng.gen_bool(0.3) { self.expr(scope) } else { self.literal() };
        Cond { op, lhs, rhs }
    }

    fn atom_var(&mut self, scope: &[String]) -> Expr {
        match scope.choose(self.rng) {
            Some(v) => Expr::Var(v.clone()),
            None => self.literal(),
        }
    }

    fn name(&mut self) -> String {
        self.p.identifier_pool.choose(self.rng).unwrap().to_string()
    }

    fn simple(&mut self, scope: &mut Vec<String>, line: usize) -> Stmt {
        let can_assign = self.p.allows(Construct::Assignment);
        let can_print = self.p.allows(Construct::Print) && !scope.is_empty();
        let assign = can_assign && (!can_print || self.rng.gen_bool(0.6));
        if assign {
            let value = self.expr(scope);
            let target = self.name();
            if !scope.contains(&target) {
                scope.push(target.clone());
            }
            Stmt::Assign { target, value, line }
        } else {
            Stmt::Print { value: self.expr(scope), line }
        }
    }

    fn compound_kinds(&self, depth: usize) -> Vec<Construct> {
        if depth >= self.p.max_nesting || self.budget < 2 {
            return vec![];
        }
        [Construct::IfChain, Construct::ForLoop].into_iter().filter(|c| self.p.allows(*c)).collect()
    }

    fn block(&mut self, scope: &[String], depth: usize) -> Vec<Stmt> {
        let mut scope = scope.to_vec();
        let (lo, hi) = self.shape.body;
        let n = self.rng.gen_range(lo..=hi);
        let mut out = Vec::new();
        for _ in 0..n {
            if self.budget == 0 {
                break;
            }
            let kinds = self.compound_kinds(depth);
            if !kinds.is_empty() && !self.shape.exactly_one_compound && self.rng.gen_bool(self.shape.p_compound) {
                let k = *kinds.choose(self.rng).unwrap();
                out.push(self.compound(k, &scope, depth));
            } else {
                self.budget -= 1;
                out.push(self.simple(&mut scope, 0));
            }
        }
        if out.is_empty() {
            out.push(Stmt::Print { value: self.atom(&scope), line: 0 });
        }
        out
    }

    fn compound(&mut self, kind: Construct, scope: &[String], depth: usize) -> Stmt {
        self.budget = self.budget.saturating_sub(1);
        match kind {
            Construct::IfChain => {
                let n_elif = self.rng.gen_range(0..=self.p.max_elif);
                let mut branches = Vec::new();
                for _ in 0..=n_elif {
                    let c = self.cond(scope);
                    branches.push((c, self.block(scope, depth + 1)));
                }
                let else_block = if self.rng.gen_bool(0.6) { Some(self.block(scope, depth + 1)) } else { None };
                Stmt::If { branches, else_block, line: 0 }
            }
            _ => {
                let var = self.name();
                let (lo, hi) = self.p.literal_range;
                let range = match self.rng.gen_range(0..4) {
                    0 => RangeArgs::StartStop(Expr::Lit(self.rng.gen_range(lo..=hi)), Expr::Lit(self.rng.gen_range(lo..=hi))),
                    1 if !scope.is_empty() => RangeArgs::Stop(self.atom_var(scope)),
                    _ => RangeArgs::Stop(Expr::Lit(self.rng.gen_range(lo.max(1)..=hi.max(1)))),
                };
                let mut inner = scope.to_vec();
                if !inner.contains(&var) {
                    inner.push(var.clone());
                }
                let body = self.block(&inner, depth + 1);
                Stmt::For { var, range, body, line: 0 }
            }
        }
    }

    fn program(&mut self) -> Ast {
        let mut scope: Vec<String> = Vec::new();
        let (lo, hi) = self.shape.top;
        let n = self.rng.gen_range(lo..=hi);
        let mut stmts = Vec::new();
        let kinds = self.compound_kinds(0);
        let forced = if self.shape.exactly_one_compound { Some(self.rng.gen_range(1..n.max(2))) } else { None };
        for i in 0..n {
            if self.budget == 0 {
                break;
            }
            if forced == Some(i) {
                let k = *kinds.choose(self.rng).unwrap();
                stmts.push(self.compound(k, &scope, 0));
                continue;
            }
            let last = i + 1 == n;
            if i > 0 && !kinds.is_empty() && !self.shape.exactly_one_compound && !last && self.rng.gen_bool(self.shape.p_compound) {
                let k = *kinds.choose(self.rng).unwrap();
                stmts.push(self.compound(k, &scope, 0));
                continue;
            }
            self.budget -= 1;
            let s = if last && !scope.is_empty() && self.p.allows(Construct::Print) {
                Stmt::Print { value: self.expr(&scope), line: 0 }
            } else if i == 0 && self.p.allows(Construct::Assignment) {
                let value = self.expr(&scope);
                let target = self.name();
                scope.push(target.clone());
                Stmt::Assign { target, value, line: 0 }
            } else {
                self.simple(&mut scope, 0)
            };
            stmts.push(s);
        }
        Ast::new(stmts)
    }
}

/// A generated, executed and scored program.
#[derive(Clone, Debug)]
pub struct Generated {
    pub ast: Ast,
    pub source: String,
    pub output: ExecutionOutput,
}

fn candidate<R: Rng>(profile: &GrammarProfile, rng: &mut R) -> Result<Generated, String> {
    let mut g = Gen { rng, p: profile, shape: Shape::of(profile), budget: profile.max_statements };
    let ast = g.program();
    if ast.statement_count() > profile.max_statements {
        return Err("too many statements".into());
    }
    let output = execute(&ast, DEFAULT_STEP_BUDGET).map_err(|e| e.to_string())?;
    if output.max_trips > MAX_LOOP_TRIPS {
        return Err(format!("loop of {} iterations", output.max_trips));
    }
    if output.max_abs > VALUE_LIMIT {
        return Err(format!("value magnitude {}", output.max_abs));
    }
    let source = ast.unparse();
    let len = source.len() + 10 + output.lines.iter().map(|l| l.len() + 3).sum::<usize>();
    if len > MAX_SNIPPET_CHARS {
        return Err(format!("snippet of {len} characters"));
    }
    Ok(Generated { ast, source, output })
}

/// Draws programs until one satisfies every constraint.
pub fn generate_program<R: Rng>(profile: &GrammarProfile, rng: &mut R) -> Result<Generated, GrammarError> {
    profile.validate()?;
    resample(|| candidate(profile, rng))
}

fn resample<T>(mut draw: impl FnMut() -> Result<T, String>) -> Result<T, GrammarError> {
    let mut last = String::new();
    for _ in 0..RESAMPLE_BUDGET {
        match draw() {
            Ok(g) => return Ok(g),
            Err(e) => last = e,
        }
    }
    Err(GrammarError::ResampleBudgetExhausted { attempts: RESAMPLE_BUDGET, last })
}

pub fn generate_snippet<R: Rng>(profile: &GrammarProfile, rng: &mut R) -> Result<String, GrammarError> {
    generate_program(profile, rng).map(|g| g.source)
}

impl From<Generated> for AnnotatedSnippet {
    fn from(g: Generated) -> Self {
        let score = DifficultyScore::of(&g.ast);
        AnnotatedSnippet { source: g.source, output_lines: g.output.lines, score, level: classify(score.om) }
    }
}

/// The generator state used for draw `index` under `seed`: independent
/// streams, so draws can be produced in parallel and in any order.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `[start, start + count)` in order.
pub fn generate_range(profile: &GrammarProfile, seed: u64, start: u64, count: u64) -> Result<Vec<AnnotatedSnippet>, GrammarError> {
    profile.validate()?;
    (start..start + count).into_par_iter().map(|i| generate_program(profile, &mut draw_rng(seed, i)).map(AnnotatedSnippet::from)).collect()
}

pub fn generate_corpus(profile: &GrammarProfile, count: usize, seed: u64) -> Result<Vec<AnnotatedSnippet>, GrammarError> {
    if count == 0 {
        return Err(GrammarError::InvalidProfile("count must be at least 1".into()));
    }
    generate_range(profile, seed, 0, count as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    fn count_compounds(stmts: &[Stmt]) -> (usize, usize) {
        let mut ifs = 0;
        let mut fors = 0;
        for s in stmts {
            match s {
                Stmt::If { branches, else_block, .. } => {
                    ifs += 1;
                    for (_, b) in branches {
                        let (i, f) = count_compounds(b);
                        ifs += i;
                        fors += f;
                    }
                    if let Some(b) = else_block {
                        let (i, f) = count_compounds(b);
                        ifs += i;
                        fors += f;
                    }
                }
                Stmt::For { body, .. } => {
                    fors += 1;
                    let (i, f) = count_compounds(body);
                    ifs += i;
                    fors += f;
                }
                _ => {}
            }
        }
        (ifs, fors)
    }

    fn max_ops(stmts: &[Stmt]) -> usize {
        let mut m = 0;
        for s in stmts {
            m = m.max(match s {
                Stmt::Assign { value, .. } | Stmt::Print { value, .. } => value.op_count(),
                Stmt::If { branches, else_block, .. } => {
                    let mut k = 0;
                    for (c, b) in branches {
                        k = k.max(c.lhs.op_count()).max(c.rhs.op_count()).max(max_ops(b));
                    }
                    k.max(else_block.as_deref().map_or(0, max_ops))
                }
                Stmt::For { body, range, .. } => {
                    let r = match range {
                        RangeArgs::Stop(e) => e.op_count(),
                        RangeArgs::StartStop(a, b) => a.op_count().max(b.op_count()),
                    };
                    r.max(max_ops(body))
                }
            });
        }
        m
    }

    #[test]
    fn level_constructs() {
        for level in 1..=6u8 {
            let p = concept_profile(level).unwrap();
            for i in 0..200 {
                let g = generate_program(&p, &mut draw_rng(3, i)).unwrap();
                let (ifs, fors) = count_compounds(&g.ast.stmts);
                match level {
                    1 | 2 => assert_eq!((ifs, fors), (0, 0)),
                    3 | 4 => assert_eq!((ifs, fors), (1, 0), "{}", g.source),
                    _ => assert_eq!((ifs, fors), (0, 1), "{}", g.source),
                }
                if level == 1 || level == 3 || level == 5 {
                    // without arith_expr at most one operator per expression
                    assert!(max_ops(&g.ast.stmts) <= 1, "{}", g.source);
                }
            }
        }
        assert_eq!(concept_profile(1).unwrap().max_nesting, 0);
        assert_eq!(concept_profile(7), Err(GrammarError::LevelOutOfRange(7)));
        assert_eq!(concept_profile(0), Err(GrammarError::LevelOutOfRange(0)));
    }

    #[test]
    fn deterministic_and_closed() {
        let p = GrammarProfile::default();
        let a = generate_corpus(&p, 300, 7).unwrap();
        let b = generate_corpus(&p, 300, 7).unwrap();
        assert_eq!(a.iter().map(|s| s.render()).collect::<Vec<_>>(), b.iter().map(|s| s.render()).collect::<Vec<_>>());
        for s in &a {
            let ast = parse(&s.source).unwrap();
            assert_eq!(ast.unparse(), s.source);
            assert_eq!(execute(&ast, DEFAULT_STEP_BUDGET).unwrap().lines, s.output_lines);
            assert!(ast.nesting_depth() <= 2);
            assert!(s.render().chars().all(|c| tinygpt::vocab::token_id(c).is_some()), "{}", s.render());
        }
    }

    #[test]
    fn invalid_profiles() {
        let mut p = GrammarProfile::default();
        p.identifier_pool = vec!['z'];
        assert!(matches!(p.validate(), Err(GrammarError::InvalidProfile(_))));
        let mut p = GrammarProfile::default();
        p.literal_range = (0, 10);
        assert!(p.validate().is_err());
        let mut p = GrammarProfile::default();
        p.max_nesting = 3;
        assert!(p.validate().is_err());
    }

    #[test]
    fn resampling_gives_up_after_budget() {
        let mut calls = 0;
        let r: Result<(), _> = resample(|| {
            calls += 1;
            Err("always".to_string())
        });
        assert_eq!(r, Err(GrammarError::ResampleBudgetExhausted { attempts: RESAMPLE_BUDGET, last: "always".into() }));
        assert_eq!(calls, RESAMPLE_BUDGET);
    }
}
