//! Token-level, line-level and execution-output evaluation.

use std::fmt::Write as _;

use rayon::prelude::*;
use tinygpt::generate::argmax;
use tinygpt::vocab::{detokenize, tokenize};
use tinygpt::{forward, generate, DecodeMode, ModelParams, Scalar, StopRule};

use crate::complexity::DifficultyLevel;
use crate::corpus::{AnnotatedSnippet, LeveledDataset, Split};
use crate::exec::OUTPUT_MARKER;

/// Upper bound on a generated code line.
pub const LINE_MAX_TOKENS: usize = 128;

/// Something that continues token sequences. Implemented by models and by
/// the oracles used to test this harness.
pub trait Predictor: Sync {
    /// Teacher-forced predictions: element `i` is the predicted token after
    /// `tokens[..=i]`.
    fn predict_next(&self, tokens: &[u32]) -> Vec<u32>;

    /// Up to `max_new` tokens continuing `prompt`.
    fn complete(&self, prompt: &[u32], max_new: usize, stop: StopRule) -> Vec<u32>;
}

pub struct ModelPredictor<'a, F> {
    pub params: &'a ModelParams<F>,
    pub mode: DecodeMode,
}

impl<'a, F: Scalar> ModelPredictor<'a, F> {
    pub fn greedy(params: &'a ModelParams<F>) -> Self {
        ModelPredictor { params, mode: DecodeMode::Greedy }
    }
}

impl<F: Scalar> Predictor for ModelPredictor<'_, F> {
    fn predict_next(&self, tokens: &[u32]) -> Vec<u32> {
        let block = self.params.cfg().block_size;
        let v = self.params.cfg().vocab_size;
        let head = tokens.len().min(block);
        let logits = forward(self.params, &tokens[..head]).expect("tokens are in vocabulary");
        let mut out: Vec<u32> = logits.chunks(v).map(argmax).collect();
        // past one block, each prediction sees the last `block` tokens
        for end in head + 1..=tokens.len() {
            let l = forward(self.params, &tokens[end - block..end]).expect("tokens are in vocabulary");
            out.push(argmax(&l[(block - 1) * v..]));
        }
        out
    }

    fn complete(&self, prompt: &[u32], max_new: usize, stop: StopRule) -> Vec<u32> {
        // each prompt gets its own sampling stream, independent of the
        // order in which items are evaluated
        let mode = match self.mode {
            DecodeMode::Sample { temperature, seed } => DecodeMode::Sample { temperature, seed: seed ^ fnv1a(prompt) },
            m => m,
        };
        generate(self.params, prompt, max_new, mode, stop).expect("prompt is non-empty and in vocabulary")
    }
}

fn fnv1a(tokens: &[u32]) -> u64 {
    tokens.iter().fold(0xcbf2_9ce4_8422_2325, |h, &t| (h ^ t as u64).wrapping_mul(0x100_0000_01b3))
}

/// `100 * (1 - levenshtein / max(|pred|, |ref|, 1))`, over characters.
pub fn edit_similarity(pred: &str, reference: &str) -> f64 {
    let d = strsim::levenshtein(pred, reference) as f64;
    let n = pred.chars().count().max(reference.chars().count()).max(1) as f64;
    100.0 * (1.0 - d / n)
}

fn tokens_of(text: &str) -> Vec<u32> {
    tokenize(text).expect("snippets use the model alphabet")
}

fn text_of(ids: &[u32]) -> String {
    detokenize(ids).expect("predictors emit vocabulary ids")
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(self, o: Tally) -> Tally {
        Tally { correct: self.correct + o.correct, total: self.total + o.total }
    }
}

/// Teacher-forced next-token accuracy over each snippet's code region. The
/// first character of a snippet has no context and is not scored.
pub fn token_level_accuracy<P: Predictor>(p: &P, snippets: &[AnnotatedSnippet]) -> Tally {
    snippets
        .par_iter()
        .map(|s| {
            let code = tokens_of(&s.source);
            if code.len() < 2 {
                return Tally::default();
            }
            let pred = p.predict_next(&code[..code.len() - 1]);
            let correct = pred.iter().zip(&code[1..]).filter(|(a, b)| a == b).count();
            Tally { correct, total: code.len() - 1 }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tally::default(), Tally::add)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LineStats {
    pub exact: usize,
    pub total: usize,
    pub es_sum: f64,
}

impl LineStats {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.exact as f64 / self.total as f64
        }
    }

    pub fn mean_es(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.es_sum / self.total as f64
        }
    }
}

/// Every code line after the first is predicted from the lines before it;
/// both sides are whitespace-stripped before comparison.
pub fn line_level_eval<P: Predictor>(p: &P, snippets: &[AnnotatedSnippet]) -> LineStats {
    let per: Vec<LineStats> = snippets
        .par_iter()
        .map(|s| {
            let lines: Vec<&str> = s.source.split_inclusive('\n').collect();
            let mut st = LineStats::default();
            let mut prefix = lines.first().map_or(0, |l| l.len());
            for line in lines.iter().skip(1) {
                let gen = p.complete(&tokens_of(&s.source[..prefix]), LINE_MAX_TOKENS, StopRule::Newline);
                let text = text_of(&gen);
                let pred = text.lines().next().unwrap_or("").trim();
                let want = line.trim();
                st.exact += (pred == want) as usize;
                st.es_sum += edit_similarity(pred, want);
                st.total += 1;
                prefix += line.len();
            }
            st
        })
        .collect();
    per.into_iter().fold(LineStats::default(), |a, b| LineStats { exact: a.exact + b.exact, total: a.total + b.total, es_sum: a.es_sum + b.es_sum })
}

/// Prompt, expected continuation and generation budget for one snippet.
pub fn execution_task(s: &AnnotatedSnippet) -> (String, String, usize) {
    let prompt = format!("{}{OUTPUT_MARKER}\n", s.source);
    let want = s.render()[prompt.len()..].to_string();
    let budget = 2 * want.len() + 32;
    (prompt, want, budget)
}

/// Fraction of snippets whose generated output block matches exactly.
pub fn execution_accuracy<P: Predictor>(p: &P, snippets: &[AnnotatedSnippet]) -> Tally {
    let hits: Vec<bool> = snippets
        .par_iter()
        .map(|s| {
            let (prompt, want, budget) = execution_task(s);
            let gen = p.complete(&tokens_of(&prompt), budget, StopRule::BlankLine);
            text_of(&gen) == want
        })
        .collect();
    Tally { correct: hits.iter().filter(|h| **h).count(), total: hits.len() }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub token: Tally,
    pub line: LineStats,
    /// Indexed by [`DifficultyLevel::index`].
    pub exec: [Tally; 3],
}

impl EvalReport {
    pub fn exec_overall(&self) -> Tally {
        self.exec.iter().fold(Tally::default(), |a, b| a.add(*b))
    }

    pub const CSV_HEADER: &'static str =
        "model,token_acc,token_n,line_acc,line_es,line_n,exec_all,exec_easy,exec_medium,exec_hard,exec_n_easy,exec_n_medium,exec_n_hard";

    pub fn csv_row(&self, model: &str) -> String {
        let e = &self.exec;
        format!(
            "{model},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.token.fraction(),
            self.token.total,
            self.line.accuracy(),
            self.line.mean_es(),
            self.line.total,
            self.exec_overall().fraction(),
            e[0].fraction(),
            e[1].fraction(),
            e[2].fraction(),
            e[0].total,
            e[1].total,
            e[2].total
        )
    }
}

/// Which protocols [`evaluate`] runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Protocols {
    pub token: bool,
    pub line: bool,
    pub exec: bool,
}

impl Default for Protocols {
    fn default() -> Self {
        Protocols { token: true, line: true, exec: true }
    }
}

/// Token and line completion on the ALL test split, execution accuracy on
/// each level's test split.
pub fn evaluate<P: Predictor>(p: &P, ds: &LeveledDataset, which: Protocols) -> EvalReport {
    let test = ds.all.get(Split::Test);
    let mut r = EvalReport::default();
    if which.token {
        r.token = token_level_accuracy(p, test);
    }
    if which.line {
        r.line = line_level_eval(p, test);
    }
    if which.exec {
        for l in DifficultyLevel::ALL {
            r.exec[l.index()] = execution_accuracy(p, ds.level(l).get(Split::Test));
        }
    }
    r
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: &[&str]| {
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<width$}", width = w[0]);
            } else {
                let _ = write!(s, "  {c:>width$}", width = w[i]);
            }
        }
        s.push('\n');
    };
    line(&mut s, header);
    s.push_str(&"-".repeat(w.iter().sum::<usize>() + 2 * (w.len() - 1)));
    s.push('\n');
    for r in rows {
        line(&mut s, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    s
}

/// Code-completion table: token accuracy, line accuracy, line ES.
pub fn completion_table(runs: &[(String, EvalReport)]) -> String {
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|(m, r)| vec![m.clone(), pct(r.token.fraction()), pct(r.line.accuracy()), format!("{:.2}", r.line.mean_es())])
        .collect();
    table(&["Model", "Token Acc", "Line Acc", "Line ES"], &rows)
}

/// Execution accuracy overall and per level.
pub fn execution_table(runs: &[(String, EvalReport)]) -> String {
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|(m, r)| {
            let mut row = vec![m.clone(), pct(r.exec_overall().fraction())];
            row.extend(r.exec.iter().map(|t| pct(t.fraction())));
            row
        })
        .collect();
    table(&["Model", "ALL", "Easy", "Medium", "Hard"], &rows)
}

/// Execution accuracy on the hard test split only.
pub fn hard_table(runs: &[(String, EvalReport)]) -> String {
    let rows: Vec<Vec<String>> = runs.iter().map(|(m, r)| vec![m.clone(), pct(r.exec[DifficultyLevel::Hard.index()].fraction())]).collect();
    table(&["Model", "Accuracy"], &rows)
}

/// Spearman rank correlation with average ranks for ties. NaN if either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmRow {
    pub level: u8,
    pub mean_om: f64,
    pub accuracy: Tally,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmValidation {
    pub rows: Vec<OmRow>,
    pub spearman: f64,
}

impl OmValidation {
    pub fn table(&self) -> String {
        let rows: Vec<Vec<String>> =
            self.rows.iter().map(|r| vec![r.level.to_string(), format!("{:.2}", r.mean_om), pct(r.accuracy.fraction())]).collect();
        let mut s = table(&["Level", "OM", "Average Accuracy"], &rows);
        let _ = writeln!(s, "Spearman(OM, accuracy) = {:.4}", self.spearman);
        s
    }
}

/// One model per concept level, each scored by execution accuracy on its
/// own level's test corpus; `corpora[i]` pairs with `models[i]` and level
/// `i + 1`.
pub fn om_validation<P: Predictor>(models: &[P], corpora: &[Vec<AnnotatedSnippet>]) -> OmValidation {
    assert_eq!(models.len(), corpora.len());
    let rows: Vec<OmRow> = models
        .iter()
        .zip(corpora)
        .enumerate()
        .map(|(i, (m, c))| OmRow {
            level: i as u8 + 1,
            mean_om: c.iter().map(|s| s.score.om).sum::<f64>() / c.len().max(1) as f64,
            accuracy: execution_accuracy(m, c),
        })
        .collect();
    let om: Vec<f64> = rows.iter().map(|r| r.mean_om).collect();
    let acc: Vec<f64> = rows.iter().map(|r| r.accuracy.fraction()).collect();
    OmValidation { spearman: spearman(&om, &acc), rows }
}
