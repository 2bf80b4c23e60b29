//! The `tinypy` command line. Every command writes its fully resolved
//! settings as `key = value` lines next to its outputs; `tinypy rerun FILE`
//! replays such a file.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tinygpt::{Checkpoint, CheckpointError, DecodeMode, ModelConfig, Params32, TrainPlan};
use tinypy::corpus::{parse_split, SplitFractions};
use tinypy::curriculum::{run_schedule, schedule_with_iterations, ScheduleKind};
use tinypy::evaluate::{completion_table, execution_table, hard_table, EvalReport, Protocols};
use tinypy::{
    build_leveled, concept_profile, evaluate, generate_corpus, make_schedule, read_dataset, write_dataset, CorpusError, DifficultyLevel,
    GrammarProfile, LeveledDataset, ModelPredictor,
};

pub const CONFIG_FILE: &str = "config.txt";

#[derive(Parser, Debug)]
#[command(name = "tinypy", version, about = "TinyPy corpora, curriculum training and evaluation")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; 0 uses one per core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate annotated snippets.
    Generate(GenerateArgs),
    /// Per-snippet CC/HD/OM/level CSV and an OM histogram.
    Score(ScoreArgs),
    /// Build a leveled dataset directory.
    Build(BuildArgs),
    /// Train a model under a schedule.
    Train(TrainArgs),
    /// Evaluate one checkpoint.
    Eval(EvalArgs),
    /// Evaluate several checkpoints side by side.
    Compare(CompareArgs),
    /// Re-run a command from a resolved config file.
    Rerun(RerunArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub count: usize,
    /// Concept level 1..=6; omitted for the full grammar.
    #[arg(long)]
    pub level: Option<u8>,
    #[arg(long)]
    pub max_nesting: Option<usize>,
    #[arg(long)]
    pub max_elif: Option<usize>,
    #[arg(long)]
    pub max_statements: Option<usize>,
    /// Output file; settings go to `<out>.config.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// File of annotated snippets.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub per_level: usize,
    #[arg(long, default_value_t = 0.85)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.13)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0.02)]
    pub test_frac: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelPreset {
    Paper,
    Tiny,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelPreset::Paper)]
    pub model: ModelPreset,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub block: Option<usize>,
}

impl ModelArgs {
    fn resolve(&self) -> ModelConfig {
        let base = match self.model {
            ModelPreset::Paper => ModelConfig::paper(),
            ModelPreset::Tiny => ModelConfig::tiny(),
        };
        ModelConfig {
            n_layers: self.layers.unwrap_or(base.n_layers),
            n_heads: self.heads.unwrap_or(base.n_heads),
            embed_dim: self.embed.unwrap_or(base.embed_dim),
            block_size: self.block.unwrap_or(base.block_size),
            vocab_size: base.vocab_size,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// baseline, sequential, incremental, hybrid or hard_only.
    #[arg(long)]
    pub schedule: String,
    /// Dataset directory written by `build`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub iters: usize,
    /// Explicit per-stage iterations; default splits `iters` in the
    /// schedule's ratios.
    #[arg(long, value_delimiter = ',')]
    pub stage_iters: Vec<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub decay: f64,
    #[arg(long, default_value_t = 1)]
    pub log_interval: usize,
    /// Validation-loss cadence in steps; 0 only evaluates at stage ends.
    #[arg(long, default_value_t = 0)]
    pub eval_interval: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Decode {
    Greedy,
    Sample,
}

impl fmt::Display for Decode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decode::Greedy => "greedy",
            Decode::Sample => "sample",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Token,
    Line,
    Exec,
}

#[derive(Args, Debug)]
pub struct EvalOptions {
    #[arg(long, value_enum, default_value_t = Decode::Greedy)]
    pub decode: Decode,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Seed for sampled decoding; defaults to `--seed`.
    #[arg(long)]
    pub decode_seed: Option<u64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Protocol::Token, Protocol::Line, Protocol::Exec])]
    pub protocols: Vec<Protocol>,
    /// Use at most this many snippets of each test split; 0 for all.
    #[arg(long, default_value_t = 0)]
    pub max_test: usize,
}

impl EvalOptions {
    fn mode(&self, seed: u64) -> DecodeMode {
        match self.decode {
            Decode::Greedy => DecodeMode::Greedy,
            Decode::Sample => DecodeMode::Sample { temperature: self.temperature, seed: self.decode_seed.unwrap_or(seed) },
        }
    }

    fn protocols(&self) -> Protocols {
        let has = |p| self.protocols.contains(&p);
        Protocols { token: has(Protocol::Token), line: has(Protocol::Line), exec: has(Protocol::Exec) }
    }

    fn resolved(&self, seed: u64) -> Vec<(&'static str, String)> {
        let names: Vec<&str> = self
            .protocols
            .iter()
            .map(|p| match p {
                Protocol::Token => "token",
                Protocol::Line => "line",
                Protocol::Exec => "exec",
            })
            .collect();
        vec![
            ("decode", self.decode.to_string()),
            ("temperature", self.temperature.to_string()),
            ("decode_seed", self.decode_seed.unwrap_or(seed).to_string()),
            ("protocols", names.join(",")),
            ("max_test", self.max_test.to_string()),
        ]
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub opts: EvalOptions,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Row labels; default to the schedule recorded in each checkpoint.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub opts: EvalOptions,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RerunArgs {
    pub config: PathBuf,
}

/// Marks an error as the caller's fault (exit status 1).
#[derive(Debug)]
struct UserFault;

impl fmt::Display for UserFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid input")
    }
}

fn user(e: impl Into<anyhow::Error>) -> anyhow::Error {
    e.into().context(UserFault)
}

fn corpus_err(e: CorpusError) -> anyhow::Error {
    match e {
        CorpusError::Io { ref source, .. } if source.kind() != io::ErrorKind::NotFound => anyhow!(e),
        CorpusError::Grammar(_) | CorpusError::LevelStarvation { .. } => anyhow!(e),
        _ => user(e),
    }
}

fn checkpoint_err(e: CheckpointError) -> anyhow::Error {
    match e {
        CheckpointError::Io(ref io) if io.kind() != io::ErrorKind::NotFound => anyhow!(e),
        _ => user(e),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 success, 1 user error, 2 internal error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UserFault>().is_some() {
                1
            } else {
                2
            }
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Command::Rerun(r) = &cli.command {
        let argv = rerun_argv(&r.config)?;
        let cli = Cli::try_parse_from(&argv).map_err(|e| user(anyhow!("{}: {e}", r.config.display())))?;
        if matches!(cli.command, Command::Rerun(_)) {
            return Err(user(anyhow!("a config cannot re-run another config")));
        }
        return execute(cli);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build().context("thread pool")?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    let global = |name: &'static str| vec![("command", name.to_string()), ("seed", seed.to_string()), ("threads", cli.threads.to_string())];
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, seed, global("generate")),
        Command::Score(a) => cmd_score(a, global("score")),
        Command::Build(a) => cmd_build(a, seed, global("build")),
        Command::Train(a) => cmd_train(a, seed, global("train")),
        Command::Eval(a) => cmd_eval(a, seed, global("eval")),
        Command::Compare(a) => cmd_compare(a, seed, global("compare")),
        Command::Rerun(_) => unreachable!("handled before dispatch"),
    }
}

type Settings = Vec<(&'static str, String)>;

fn render_config(settings: &Settings) -> String {
    settings.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Reads a resolved config back into an argument vector.
pub fn rerun_argv(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(user)?;
    let mut command = None;
    let mut global = Vec::new();
    let mut rest = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| user(anyhow!("{}:{}: expected 'key = value'", path.display(), n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "command" => command = Some(v.to_string()),
            "seed" | "threads" => global.extend([format!("--{k}"), v.to_string()]),
            _ if v.is_empty() => {}
            _ => rest.extend([format!("--{}", k.replace('_', "-")), v.to_string()]),
        }
    }
    let command = command.ok_or_else(|| user(anyhow!("{}: no 'command' entry", path.display())))?;
    let mut argv = vec!["tinypy".to_string()];
    argv.extend(global);
    argv.push(command);
    argv.extend(rest);
    Ok(argv)
}

fn profile_for(a: &GenerateArgs) -> Result<GrammarProfile> {
    let mut p = match a.level {
        Some(l) => concept_profile(l).map_err(user)?,
        None => GrammarProfile::default(),
    };
    if let Some(v) = a.max_nesting {
        p.max_nesting = v;
    }
    if let Some(v) = a.max_elif {
        p.max_elif = v;
    }
    if let Some(v) = a.max_statements {
        p.max_statements = v;
    }
    p.validate().map_err(user)?;
    Ok(p)
}

fn cmd_generate(a: &GenerateArgs, seed: u64, mut cfg: Settings) -> Result<()> {
    if a.count == 0 {
        return Err(user(anyhow!("--count must be at least 1")));
    }
    let p = profile_for(a)?;
    cfg.extend([
        ("count", a.count.to_string()),
        ("level", a.level.map(|l| l.to_string()).unwrap_or_default()),
        ("max_nesting", p.max_nesting.to_string()),
        ("max_elif", p.max_elif.to_string()),
        ("max_statements", p.max_statements.to_string()),
        ("out", a.out.display().to_string()),
    ]);
    eprintln!("generating {} snippets", a.count);
    let snippets = generate_corpus(&p, a.count, seed)?;
    write_file(&a.out, tinypy::corpus::render_all(&snippets))?;
    write_file(&config_beside(&a.out), render_config(&cfg))?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn config_beside(file: &Path) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(".config.txt");
    PathBuf::from(s)
}

pub const HIST_WIDTH: f64 = 0.25;

/// `(bucket start, count)` for every bucket from the lowest to the highest
/// populated one.
pub fn om_histogram(oms: &[f64]) -> Vec<(f64, usize)> {
    if oms.is_empty() {
        return Vec::new();
    }
    let idx: Vec<i64> = oms.iter().map(|o| (o / HIST_WIDTH).floor() as i64).collect();
    let (lo, hi) = (*idx.iter().min().unwrap(), *idx.iter().max().unwrap());
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for i in idx {
        counts[(i - lo) as usize] += 1;
    }
    counts.into_iter().enumerate().map(|(k, c)| ((lo + k as i64) as f64 * HIST_WIDTH, c)).collect()
}

fn cmd_score(a: &ScoreArgs, mut cfg: Settings) -> Result<()> {
    cfg.extend([("input", a.input.display().to_string()), ("out", a.out.display().to_string())]);
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display())).map_err(user)?;
    let snippets = parse_split(&text, &a.input).map_err(corpus_err)?;
    let mut csv = String::from("index,cc,hd,om,level\n");
    for (i, s) in snippets.iter().enumerate() {
        csv.push_str(&format!("{i},{},{},{},{}\n", s.score.cc, s.score.hd, s.score.om, s.level));
    }
    let hist = om_histogram(&snippets.iter().map(|s| s.score.om).collect::<Vec<_>>());
    let mut hcsv = String::from("om_from,om_to,count\n");
    let mut bars = String::new();
    let peak = hist.iter().map(|h| h.1).max().unwrap_or(1).max(1);
    for (from, c) in &hist {
        hcsv.push_str(&format!("{from},{},{c}\n", from + HIST_WIDTH));
        bars.push_str(&format!("[{from:>6.2}, {:>6.2})  {c:>8}  {}\n", from + HIST_WIDTH, "#".repeat((c * 50).div_ceil(peak))));
    }
    let mut levels = [0usize; 3];
    for s in &snippets {
        levels[s.level.index()] += 1;
    }
    for l in DifficultyLevel::ALL {
        bars.push_str(&format!("{l}: {}\n", levels[l.index()]));
    }
    write_file(&a.out.join("scores.csv"), csv)?;
    write_file(&a.out.join("om_histogram.csv"), hcsv)?;
    write_file(&a.out.join("om_histogram.txt"), &bars)?;
    write_file(&a.out.join(CONFIG_FILE), render_config(&cfg))?;
    eprint!("{bars}");
    Ok(())
}

fn cmd_build(a: &BuildArgs, seed: u64, mut cfg: Settings) -> Result<()> {
    cfg.extend([
        ("per_level", a.per_level.to_string()),
        ("train_frac", a.train_frac.to_string()),
        ("val_frac", a.val_frac.to_string()),
        ("test_frac", a.test_frac.to_string()),
        ("out", a.out.display().to_string()),
    ]);
    let fractions = SplitFractions { train: a.train_frac, val: a.val_frac, test: a.test_frac };
    eprintln!("building {} snippets per level", a.per_level);
    let ds = build_leveled(a.per_level, fractions, seed).map_err(corpus_err)?;
    write_dataset(&ds, &a.out).map_err(corpus_err)?;
    write_file(&a.out.join(CONFIG_FILE), render_config(&cfg))?;
    let m = &ds.manifest;
    eprintln!("{} draws; level hits easy {} medium {} hard {}", m.draws, m.level_hits[0], m.level_hits[1], m.level_hits[2]);
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<LeveledDataset> {
    read_dataset(dir).map_err(corpus_err)
}

fn cmd_train(a: &TrainArgs, seed: u64, mut cfg: Settings) -> Result<()> {
    let kind: ScheduleKind = a.schedule.parse().map_err(user)?;
    let schedule = if a.stage_iters.is_empty() {
        make_schedule(kind, a.iters)
    } else {
        schedule_with_iterations(kind, &a.stage_iters)
    }
    .map_err(user)?;
    if schedule.total_iters() != a.iters {
        return Err(user(anyhow!("--stage-iters sum to {}, but --iters is {}", schedule.total_iters(), a.iters)));
    }
    let model = a.model.resolve();
    model.validate().map_err(user)?;
    let plan = TrainPlan {
        batch_size: a.batch,
        base_lr: a.lr,
        decay_factor: a.decay,
        log_interval: a.log_interval,
        eval_interval: a.eval_interval,
        ..TrainPlan::with_iters(a.iters)
    };
    plan.validate().map_err(user)?;
    let stage_iters: Vec<String> = schedule.stages.iter().map(|s| s.iterations.to_string()).collect();
    cfg.extend([
        ("schedule", kind.to_string()),
        ("data", a.data.display().to_string()),
        ("iters", a.iters.to_string()),
        ("stage_iters", stage_iters.join(",")),
        ("model", format!("{:?}", a.model.model).to_lowercase()),
        ("layers", model.n_layers.to_string()),
        ("heads", model.n_heads.to_string()),
        ("embed", model.embed_dim.to_string()),
        ("block", model.block_size.to_string()),
        ("batch", plan.batch_size.to_string()),
        ("lr", plan.base_lr.to_string()),
        ("decay", plan.decay_factor.to_string()),
        ("log_interval", plan.log_interval.to_string()),
        ("eval_interval", plan.eval_interval.to_string()),
        ("out", a.out.display().to_string()),
    ]);
    let ds = load_dataset(&a.data)?;
    write_file(&a.out.join(CONFIG_FILE), render_config(&cfg))?;
    let mut sched = format!("kind = {kind}\ntotal_iters = {}\n", schedule.total_iters());
    for (k, s) in schedule.stages.iter().enumerate() {
        let comp: Vec<&str> = s.composition.iter().map(|c| c.as_str()).collect();
        sched.push_str(&format!("stage{} = {} {}\n", k + 1, s.iterations, comp.join("+")));
    }
    write_file(&a.out.join("schedule.txt"), sched)?;

    let every = (a.iters / 20).max(1);
    let mut done = 0usize;
    let run = run_schedule(&schedule, &ds, model, &plan, seed, &a.out, |stage, row| {
        done += 1;
        if done % every == 0 || row.val_loss.is_some() {
            let val = row.val_loss.map(|v| format!(" val {v:.4}")).unwrap_or_default();
            eprintln!("stage {stage} step {done}/{}: lr {:.2e} loss {:.4}{val}", a.iters, row.lr, row.train_loss);
        }
    })?;
    let last = run.checkpoints.last().expect("at least one stage");
    fs::copy(last, a.out.join("final.ckpt")).context("copying final checkpoint")?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn limit_tests(ds: &mut LeveledDataset, n: usize) {
    if n == 0 {
        return;
    }
    for s in ds.levels.iter_mut().chain([&mut ds.all]) {
        s.test.truncate(n);
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint<f32>> {
    Checkpoint::<f32>::load(path).map_err(checkpoint_err).with_context(|| format!("loading {}", path.display()))
}

fn eval_params(params: &Params32, ds: &LeveledDataset, o: &EvalOptions, seed: u64) -> EvalReport {
    let p = ModelPredictor { params, mode: o.mode(seed) };
    evaluate(&p, ds, o.protocols())
}

fn report_text(runs: &[(String, EvalReport)]) -> String {
    format!(
        "Code completion\n{}\nExecution accuracy\n{}\nHard test split\n{}",
        completion_table(runs),
        execution_table(runs),
        hard_table(runs)
    )
}

fn report_csv(runs: &[(String, EvalReport)]) -> String {
    let mut s = format!("{}\n", EvalReport::CSV_HEADER);
    for (m, r) in runs {
        s.push_str(&r.csv_row(m));
        s.push('\n');
    }
    s
}

fn cmd_eval(a: &EvalArgs, seed: u64, mut cfg: Settings) -> Result<()> {
    cfg.extend([("checkpoint", a.checkpoint.display().to_string()), ("data", a.data.display().to_string())]);
    cfg.extend(a.opts.resolved(seed));
    cfg.push(("out", a.out.display().to_string()));
    let ck = load_checkpoint(&a.checkpoint)?;
    let mut ds = load_dataset(&a.data)?;
    limit_tests(&mut ds, a.opts.max_test);
    eprintln!("evaluating {}", a.checkpoint.display());
    let label = label_for(&ck, &a.checkpoint);
    let runs = vec![(label, eval_params(&ck.params, &ds, &a.opts, seed))];
    write_file(&a.out.join("report.csv"), report_csv(&runs))?;
    let text = report_text(&runs);
    write_file(&a.out.join("report.txt"), &text)?;
    write_file(&a.out.join(CONFIG_FILE), render_config(&cfg))?;
    eprint!("{text}");
    Ok(())
}

fn label_for(ck: &Checkpoint<f32>, path: &Path) -> String {
    match ck.meta_get("schedule").and_then(|s| s.parse::<ScheduleKind>().ok()) {
        Some(k) => k.label().to_string(),
        None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into()),
    }
}

fn cmd_compare(a: &CompareArgs, seed: u64, mut cfg: Settings) -> Result<()> {
    if !a.labels.is_empty() && a.labels.len() != a.checkpoints.len() {
        return Err(user(anyhow!("{} labels for {} checkpoints", a.labels.len(), a.checkpoints.len())));
    }
    let paths: Vec<String> = a.checkpoints.iter().map(|p| p.display().to_string()).collect();
    cfg.extend([("checkpoints", paths.join(",")), ("labels", a.labels.join(",")), ("data", a.data.display().to_string())]);
    cfg.extend(a.opts.resolved(seed));
    cfg.push(("out", a.out.display().to_string()));
    let mut ds = load_dataset(&a.data)?;
    limit_tests(&mut ds, a.opts.max_test);
    let mut runs = Vec::new();
    for (i, path) in a.checkpoints.iter().enumerate() {
        let ck = load_checkpoint(path)?;
        let label = a.labels.get(i).cloned().unwrap_or_else(|| label_for(&ck, path));
        eprintln!("evaluating {label} ({})", path.display());
        runs.push((label, eval_params(&ck.params, &ds, &a.opts, seed)));
    }
    write_file(&a.out.join("comparison.csv"), report_csv(&runs))?;
    let text = report_text(&runs);
    write_file(&a.out.join("comparison.txt"), &text)?;
    write_file(&a.out.join(CONFIG_FILE), render_config(&cfg))?;
    eprint!("{text}");
    Ok(())
}
