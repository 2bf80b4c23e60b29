//! TinyPy: a constrained Python subset, its random program generator and
//! interpreter, code-complexity metrics, leveled corpora, curriculum
//! training schedules and evaluation harnesses for small code models.

pub mod ast;
pub mod complexity;
pub mod corpus;
pub mod curriculum;
pub mod evaluate;
pub mod exec;
pub mod grammar;
pub mod parse;

pub use ast::{Ast, BinOp, CmpOp, Cond, Expr, RangeArgs, Stmt};
pub use complexity::{
    build_cfg, classify, cyclomatic_complexity, halstead_counts, halstead_measures, overall_metric, ControlFlowGraph, DifficultyLevel,
    DifficultyScore, HalsteadCounts, HalsteadMeasures,
};
pub use exec::{execute, render_annotated, split_annotated, ExecError, ExecutionOutput, DEFAULT_STEP_BUDGET};
pub use parse::{parse, ParseError};
pub use corpus::{
    build_leveled, read_dataset, top_fraction_hardest, write_dataset, AnnotatedSnippet, CorpusError, LeveledDataset, Split, SplitFractions, Splits,
};
pub use grammar::{concept_profile, generate_corpus, generate_snippet, Construct, GrammarError, GrammarProfile};
pub use curriculum::{make_schedule, materialize_stage, run_schedule, Schedule, ScheduleKind, Source, StageSpec};
pub use evaluate::{edit_similarity, evaluate, EvalReport, ModelPredictor, Predictor};
