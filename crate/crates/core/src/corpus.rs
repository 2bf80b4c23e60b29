//! Leveled datasets and their on-disk format.
//!
//! A split file is the concatenation of annotated snippets, each ending in a
//! blank line; the training stream is the file's bytes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexity::{classify, DifficultyLevel, DifficultyScore, EASY_BELOW, HARD_FROM};
use crate::exec::{render_annotated, split_annotated};
use crate::grammar::{generate_range, GrammarError, GrammarProfile, MAX_LOOP_TRIPS, MAX_SNIPPET_CHARS, VALUE_LIMIT};
use crate::parse::parse;

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedSnippet {
    pub source: String,
    pub output_lines: Vec<String>,
    pub score: DifficultyScore,
    pub level: DifficultyLevel,
}

impl AnnotatedSnippet {
    pub fn render(&self) -> String {
        render_annotated(&self.source, &self.output_lines)
    }

    /// The text after the code: `# output` through the terminator.
    pub fn output_block(&self) -> String {
        self.render()[self.source.len()..].to_string()
    }

    /// Parses one rendered snippet and recomputes its score.
    pub fn from_rendered(text: &str) -> Result<Self, (usize, String)> {
        let (source, output_lines) = split_annotated(text).map_err(|e| (e.offset, e.msg))?;
        let ast = parse(&source).map_err(|e| (0, e.to_string()))?;
        let score = DifficultyScore::of(&ast);
        Ok(AnnotatedSnippet { source, output_lines, score, level: classify(score.om) })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<AnnotatedSnippet>,
    pub val: Vec<AnnotatedSnippet>,
    pub test: Vec<AnnotatedSnippet>,
}

impl Splits {
    pub fn get(&self, s: Split) -> &[AnnotatedSnippet] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, s: Split) -> &mut Vec<AnnotatedSnippet> {
        match s {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.85, val: 0.13, test: 0.02 }
    }
}

impl SplitFractions {
    /// `(round(train * n), round(val * n), remainder)`.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let train = (self.train * n as f64).round() as usize;
        let val = ((self.val * n as f64).round() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

/// Generation facts recorded next to a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub per_level_count: usize,
    pub seed: u64,
    pub fractions: SplitFractions,
    pub easy_below: f64,
    pub hard_from: f64,
    pub alphabet_checksum: u32,
    /// Draws made before every level was full.
    pub draws: u64,
    /// Snippets of each level seen among the draws (easy, medium, hard).
    pub level_hits: [u64; 3],
    pub deduplicated: bool,
    pub profile: GrammarProfile,
    pub max_loop_trips: u64,
    pub value_limit: u64,
    pub max_snippet_chars: usize,
    /// `[level or "all"][split]` snippet counts.
    pub counts: Vec<(String, [usize; 3])>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeveledDataset {
    /// Indexed by [`DifficultyLevel::index`].
    pub levels: [Splits; 3],
    pub all: Splits,
    pub manifest: Manifest,
}

impl LeveledDataset {
    pub fn level(&self, l: DifficultyLevel) -> &Splits {
        &self.levels[l.index()]
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("level {level} starved: {hits} hits in {draws} draws (acceptance below 0.1%); widen the generator profile")]
    LevelStarvation { level: DifficultyLevel, hits: u64, draws: u64 },
    #[error("{path}: malformed file at byte {offset}: {msg}")]
    Malformed { path: PathBuf, offset: usize, msg: String },
    #[error("invalid split fractions {0:?}: each must be non-negative and they must sum to 1")]
    Fractions(SplitFractions),
    #[error("per-level count must be at least 10, got {0}")]
    TooFew(usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

/// Generator for an auxiliary purpose (`tag`) derived from `seed`; disjoint
/// from the per-draw streams, which count up from zero.
pub fn derived_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - tag);
    rng
}

const STARVATION_WINDOW: u64 = 1_000_000;
const STARVATION_RATE: f64 = 0.001;
const CHUNK: u64 = 4096;

/// Rejection-samples the default profile until every level holds
/// `per_level_count` snippets, splits each level at random and builds the
/// shuffled ALL splits.
pub fn build_leveled(per_level_count: usize, fractions: SplitFractions, seed: u64) -> Result<LeveledDataset, CorpusError> {
    build_leveled_with(&GrammarProfile::default(), per_level_count, fractions, seed)
}

pub fn build_leveled_with(
    profile: &GrammarProfile,
    per_level_count: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<LeveledDataset, CorpusError> {
    let f = fractions;
    if [f.train, f.val, f.test].iter().any(|x| !(*x >= 0.0)) || ((f.train + f.val + f.test) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Fractions(fractions));
    }
    if per_level_count < 10 {
        return Err(CorpusError::TooFew(per_level_count));
    }
    let mut buckets: [Vec<crate::corpus::AnnotatedSnippet>; 3] = Default::default();
    let mut hits = [0u64; 3];
    let mut draws = 0u64;
    let full = |b: &[Vec<AnnotatedSnippet>; 3]| b.iter().all(|v| v.len() >= per_level_count);
    'outer: while !full(&buckets) {
        for s in generate_range(profile, seed, draws, CHUNK)? {
            draws += 1;
            let i = s.level.index();
            hits[i] += 1;
            if buckets[i].len() < per_level_count {
                buckets[i].push(s);
            }
            if full(&buckets) {
                break 'outer;
            }
            if draws % STARVATION_WINDOW == 0 {
                for l in DifficultyLevel::ALL {
                    let h = hits[l.index()];
                    if buckets[l.index()].len() < per_level_count && (h as f64) < STARVATION_RATE * draws as f64 {
                        return Err(CorpusError::LevelStarvation { level: l, hits: h, draws });
                    }
                }
            }
        }
    }

    let (n_train, n_val, _) = fractions.counts(per_level_count);
    let mut levels: [Splits; 3] = Default::default();
    for l in DifficultyLevel::ALL {
        let mut items = std::mem::take(&mut buckets[l.index()]);
        items.shuffle(&mut derived_rng(seed, 1 + l.index() as u64));
        let test = items.split_off(n_train + n_val);
        let val = items.split_off(n_train);
        levels[l.index()] = Splits { train: items, val, test };
    }
    let mut all = Splits::default();
    for (k, s) in Split::ALL.into_iter().enumerate() {
        let merged = all.get_mut(s);
        for lv in &levels {
            merged.extend(lv.get(s).iter().cloned());
        }
        merged.shuffle(&mut derived_rng(seed, 10 + k as u64));
    }
    let manifest = Manifest {
        per_level_count,
        seed,
        fractions,
        easy_below: EASY_BELOW,
        hard_from: HARD_FROM,
        alphabet_checksum: tinygpt::vocab::alphabet_checksum(),
        draws,
        level_hits: hits,
        deduplicated: false,
        profile: profile.clone(),
        max_loop_trips: MAX_LOOP_TRIPS,
        value_limit: VALUE_LIMIT,
        max_snippet_chars: MAX_SNIPPET_CHARS,
        counts: split_counts(&levels, &all),
    };
    Ok(LeveledDataset { levels, all, manifest })
}

fn split_counts(levels: &[Splits; 3], all: &Splits) -> Vec<(String, [usize; 3])> {
    let c = |s: &Splits| [s.train.len(), s.val.len(), s.test.len()];
    let mut v: Vec<(String, [usize; 3])> = DifficultyLevel::ALL.iter().map(|l| (l.to_string(), c(&levels[l.index()]))).collect();
    v.push(("all".into(), c(all)));
    v
}

/// Indices of the `ceil(fraction * n)` snippets with the highest OM, ties
/// broken by higher CC, then input order; hardest first.
pub fn hardest_indices(snippets: &[AnnotatedSnippet], fraction: f64) -> Vec<usize> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must lie in (0, 1]");
    let n = snippets.len();
    let take = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (&snippets[a].score, &snippets[b].score);
        sb.om.total_cmp(&sa.om).then(sb.cc.total_cmp(&sa.cc)).then(a.cmp(&b))
    });
    idx.truncate(take.min(n));
    idx
}

pub fn top_fraction_hardest(snippets: &[AnnotatedSnippet], fraction: f64) -> Vec<AnnotatedSnippet> {
    hardest_indices(snippets, fraction).into_iter().map(|i| snippets[i].clone()).collect()
}

pub fn render_all(snippets: &[AnnotatedSnippet]) -> String {
    snippets.iter().map(AnnotatedSnippet::render).collect()
}

/// Parses a split file. `path` is only used in error messages.
pub fn parse_split(text: &str, path: &Path) -> Result<Vec<AnnotatedSnippet>, CorpusError> {
    let mut out = Vec::new();
    let mut start = 0;
    let malformed = |offset: usize, msg: String| CorpusError::Malformed { path: path.to_path_buf(), offset, msg };
    while start < text.len() {
        let end = match text[start..].find("\n\n") {
            Some(i) => start + i + 2,
            None => return Err(malformed(text.len(), "missing blank terminator line".into())),
        };
        let s = AnnotatedSnippet::from_rendered(&text[start..end]).map_err(|(off, msg)| malformed(start + off, msg))?;
        out.push(s);
        start = end;
    }
    Ok(out)
}

fn dir_name(level: Option<DifficultyLevel>) -> &'static str {
    level.map_or("all", DifficultyLevel::as_str)
}

pub fn write_dataset(ds: &LeveledDataset, dir: &Path) -> Result<(), CorpusError> {
    let groups = DifficultyLevel::ALL.iter().map(|l| (Some(*l), &ds.levels[l.index()])).chain([(None, &ds.all)]);
    for (level, splits) in groups {
        let sub = dir.join(dir_name(level));
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        for s in Split::ALL {
            let path = sub.join(format!("{}.txt", s.as_str()));
            fs::write(&path, render_all(splits.get(s))).map_err(io_err(&path))?;
        }
    }
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&ds.manifest)? + "\n";
    fs::write(&path, json).map_err(io_err(&path))
}

pub fn read_split(dir: &Path, level: Option<DifficultyLevel>, split: Split) -> Result<Vec<AnnotatedSnippet>, CorpusError> {
    let path = dir.join(dir_name(level)).join(format!("{}.txt", split.as_str()));
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let items = parse_split(&text, &path)?;
    if let Some(l) = level {
        let mut offset = 0;
        for s in &items {
            if s.level != l {
                return Err(CorpusError::Malformed { path, offset, msg: format!("snippet scores as {} (OM {})", s.level, s.score.om) });
            }
            offset += s.render().len();
        }
    }
    Ok(items)
}

pub fn read_dataset(dir: &Path) -> Result<LeveledDataset, CorpusError> {
    let path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
    let read = |level: Option<DifficultyLevel>| -> Result<Splits, CorpusError> {
        Ok(Splits {
            train: read_split(dir, level, Split::Train)?,
            val: read_split(dir, level, Split::Val)?,
            test: read_split(dir, level, Split::Test)?,
        })
    };
    let levels = [read(Some(DifficultyLevel::Easy))?, read(Some(DifficultyLevel::Medium))?, read(Some(DifficultyLevel::Hard))?];
    let all = read(None)?;
    Ok(LeveledDataset { levels, all, manifest })
}
