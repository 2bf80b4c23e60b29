//! Curriculum schedules: stage composition and multi-stage training.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error;
use tinygpt::vocab::{tokenize, VocabError};
use tinygpt::{loss, Checkpoint, CheckpointError, ModelConfig, ModelParams, TrainError, TrainLog, TrainPlan, Trainer};

use crate::corpus::{derived_rng, render_all, top_fraction_hardest, LeveledDataset, Split};
use crate::complexity::DifficultyLevel;
use crate::corpus::AnnotatedSnippet;

/// Where a stage draws snippets from; always the train split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Easy,
    Medium,
    Hard,
    /// The most difficult half of the easy train split.
    HardestEasy50,
    HardestMedium50,
    /// The shuffled union of all levels.
    All,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Easy => "easy",
            Source::Medium => "medium",
            Source::Hard => "hard",
            Source::HardestEasy50 => "hardest_easy_50",
            Source::HardestMedium50 => "hardest_medium_50",
            Source::All => "all",
        }
    }

    /// The snippets this source contributes, in dataset order.
    pub fn resolve(self, ds: &LeveledDataset) -> Vec<AnnotatedSnippet> {
        let train = |l: DifficultyLevel| ds.level(l).get(Split::Train);
        match self {
            Source::Easy => train(DifficultyLevel::Easy).to_vec(),
            Source::Medium => train(DifficultyLevel::Medium).to_vec(),
            Source::Hard => train(DifficultyLevel::Hard).to_vec(),
            Source::HardestEasy50 => top_fraction_hardest(train(DifficultyLevel::Easy), 0.5),
            Source::HardestMedium50 => top_fraction_hardest(train(DifficultyLevel::Medium), 0.5),
            Source::All => ds.all.train.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageSpec {
    pub composition: Vec<Source>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Baseline,
    Sequential,
    Incremental,
    Hybrid,
    /// One stage over the hard level only.
    HardOnly,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] =
        [ScheduleKind::Baseline, ScheduleKind::Sequential, ScheduleKind::Incremental, ScheduleKind::Hybrid, ScheduleKind::HardOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Baseline => "baseline",
            ScheduleKind::Sequential => "sequential",
            ScheduleKind::Incremental => "incremental",
            ScheduleKind::Hybrid => "hybrid",
            ScheduleKind::HardOnly => "hard_only",
        }
    }

    /// Row label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            ScheduleKind::Baseline => "Baseline",
            ScheduleKind::Sequential => "Sequential CL",
            ScheduleKind::Incremental => "Incremental CL",
            ScheduleKind::Hybrid => "Hybrid CL",
            ScheduleKind::HardOnly => "Trained on hard level only",
        }
    }

    /// Stage compositions and their share of the total, in thousandths of
    /// 120k iterations.
    fn stages(self) -> Vec<(Vec<Source>, usize)> {
        use Source::*;
        match self {
            ScheduleKind::Baseline => vec![(vec![All], 120)],
            ScheduleKind::HardOnly => vec![(vec![Hard], 120)],
            ScheduleKind::Sequential => vec![(vec![Easy], 40), (vec![Medium], 40), (vec![Hard], 40)],
            ScheduleKind::Incremental => vec![(vec![Easy], 25), (vec![Easy, Medium], 30), (vec![Easy, Medium, Hard], 65)],
            ScheduleKind::Hybrid => {
                vec![(vec![Easy], 20), (vec![HardestEasy50, Medium], 30), (vec![HardestEasy50, HardestMedium50, Hard], 70)]
            }
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = CurriculumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScheduleKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| CurriculumError::UnknownKind(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub stages: Vec<StageSpec>,
}

impl Schedule {
    pub fn total_iters(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("unknown schedule kind '{0}' (expected baseline, sequential, incremental, hybrid or hard_only)")]
    UnknownKind(String),
    #[error("{kind} needs {expected} stage iteration counts, got {got}")]
    StageCount { kind: ScheduleKind, expected: usize, got: usize },
    #[error("stage {stage} would get zero iterations; raise the total")]
    EmptyStage { stage: usize },
    #[error("stage composition is empty")]
    EmptyComposition,
    #[error("stage {stage}: {source}")]
    Train { stage: usize, source: TrainError },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Splits `total_iters` in the paper's stage ratios; rounded, with the last
/// stage absorbing the remainder.
pub fn make_schedule(kind: ScheduleKind, total_iters: usize) -> Result<Schedule, CurriculumError> {
    let parts = kind.stages();
    let mut iters = Vec::with_capacity(parts.len());
    let mut used = 0;
    for (i, (_, share)) in parts.iter().enumerate() {
        let n = if i + 1 == parts.len() { total_iters - used } else { ((*share * total_iters) as f64 / 120.0).round() as usize };
        let n = n.min(total_iters - used);
        used += n;
        iters.push(n);
    }
    schedule_with_iterations(kind, &iters)
}

/// A schedule of `kind` with explicit per-stage iteration counts.
pub fn schedule_with_iterations(kind: ScheduleKind, iterations: &[usize]) -> Result<Schedule, CurriculumError> {
    let parts = kind.stages();
    if parts.len() != iterations.len() {
        return Err(CurriculumError::StageCount { kind, expected: parts.len(), got: iterations.len() });
    }
    if let Some(stage) = iterations.iter().position(|&n| n == 0) {
        return Err(CurriculumError::EmptyStage { stage: stage + 1 });
    }
    let stages = parts.into_iter().zip(iterations).map(|((composition, _), &iterations)| StageSpec { composition, iterations }).collect();
    Ok(Schedule { kind, stages })
}

/// The stage's snippets in seeded-shuffled order.
pub fn stage_snippets(spec: &StageSpec, ds: &LeveledDataset, seed: u64) -> Result<Vec<AnnotatedSnippet>, CurriculumError> {
    if spec.composition.is_empty() {
        return Err(CurriculumError::EmptyComposition);
    }
    let mut all: Vec<AnnotatedSnippet> = spec.composition.iter().flat_map(|s| s.resolve(ds)).collect();
    all.shuffle(&mut derived_rng(seed, 100));
    Ok(all)
}

/// Token stream for one stage: its snippets rendered back to back.
pub fn materialize_stage(spec: &StageSpec, ds: &LeveledDataset, seed: u64) -> Result<Vec<u32>, CurriculumError> {
    Ok(tokenize(&render_all(&stage_snippets(spec, ds, seed)?))?)
}

/// Seed for stage `k` (1-based) of a run seeded with `seed`.
pub fn stage_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Windows of the validation stream used for the periodic validation loss.
const VAL_WINDOWS: usize = 16;

fn val_batch(stream: &[u32], block: usize) -> Vec<Vec<u32>> {
    let win = block + 1;
    if stream.len() <= win {
        return Vec::new();
    }
    let span = stream.len() - win;
    (0..VAL_WINDOWS).map(|i| i * span / VAL_WINDOWS).map(|s| stream[s..s + win].to_vec()).collect()
}

pub struct ScheduleRun {
    pub params: ModelParams<f32>,
    pub logs: Vec<TrainLog>,
    pub checkpoints: Vec<PathBuf>,
}

pub const LOG_FILE: &str = "train_log.csv";

/// Trains the stages in order. Parameters carry over between stages; the
/// optimizer and learning-rate schedule restart with each stage. Writes
/// `stage<k>.ckpt` after every stage and a `train_log.csv` with one row per
/// logged step (`iter` counts across stages).
pub fn run_schedule(
    schedule: &Schedule,
    ds: &LeveledDataset,
    cfg: ModelConfig,
    plan: &TrainPlan,
    seed: u64,
    out_dir: &Path,
    mut progress: impl FnMut(usize, &tinygpt::LogRow),
) -> Result<ScheduleRun, CurriculumError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CurriculumError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let log_path = out_dir.join(LOG_FILE);
    let mut csv = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
    writeln!(csv, "iter,stage,lr,train_loss,val_loss").map_err(io_err(&log_path))?;

    let val = val_batch(&tokenize(&render_all(&ds.all.val))?, cfg.block_size);
    let mut params = ModelParams::<f32>::init(cfg, seed);
    let mut logs = Vec::new();
    let mut checkpoints = Vec::new();
    let mut offset = 0;
    for (i, spec) in schedule.stages.iter().enumerate() {
        let k = i + 1;
        let stream = materialize_stage(spec, ds, stage_seed(seed, k))?;
        let stage_plan = TrainPlan { total_iters: spec.iterations, ..plan.clone() };
        let mut trainer = Trainer::new(params, stage_plan, stage_seed(seed, k)).map_err(|source| CurriculumError::Train { stage: k, source })?;
        let mut eval = |p: &ModelParams<f32>| if val.is_empty() { f64::NAN } else { loss(p, &val).unwrap_or(f64::NAN) };
        let mut write_err = None;
        let log = trainer
            .run(&stream, Some(&mut eval), |row| {
                let val = row.val_loss.map(|v| v.to_string()).unwrap_or_default();
                if let Err(e) = writeln!(csv, "{},{k},{},{},{val}", offset + row.iter, row.lr, row.train_loss) {
                    write_err.get_or_insert(e);
                }
                progress(k, row);
            })
            .map_err(|source| CurriculumError::Train { stage: k, source })?;
        if let Some(e) = write_err {
            return Err(io_err(&log_path)(e));
        }
        csv.flush().map_err(io_err(&log_path))?;
        offset += spec.iterations;

        let rng = trainer.rng_state();
        let ckpt = Checkpoint {
            meta: vec![
                ("schedule".into(), schedule.kind.to_string()),
                ("stage".into(), k.to_string()),
                ("stages".into(), schedule.stages.len().to_string()),
                ("stage_iters".into(), spec.iterations.to_string()),
                ("composition".into(), spec.composition.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("+")),
                ("seed".into(), seed.to_string()),
            ],
            params: trainer.params,
            opt: trainer.opt,
            rng: Some(rng),
            iter: trainer.iter as u64,
        };
        let path = out_dir.join(format!("stage{k}.ckpt"));
        ckpt.save(&path)?;
        checkpoints.push(path);
        params = ckpt.params;
        logs.push(log);
    }
    Ok(ScheduleRun { params, logs, checkpoints })
}
