//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p tinypy-cli --test acceptance` runs the fast criteria and
//! reports the long-running ones (10, 11, 12) as skipped. Pass criterion
//! numbers to run just those (`-- 10 12`) or `--include-ignored` for all.
//! Long runs keep their artifacts under the target tmp directory.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use tinygpt::gradcheck::tensor_errors;
use tinygpt::{loss, tokenize, Checkpoint, ModelConfig, Params32, Params64, TrainPlan, Trainer};
use tinypy::corpus::{render_all, Split};
use tinypy::curriculum::{run_schedule, stage_snippets};
use tinypy::evaluate::{execution_accuracy, execution_table, hard_table, om_validation, EvalReport, Protocols};
use tinypy::{
    build_cfg, build_leveled, classify, concept_profile, cyclomatic_complexity, evaluate, generate_corpus, halstead_counts, make_schedule, parse,
    top_fraction_hardest, AnnotatedSnippet, DifficultyLevel, DifficultyScore, GrammarProfile, LeveledDataset, ModelPredictor, ScheduleKind,
    SplitFractions, Stmt,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t <= limit, || format!("took {:.1}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
}

fn work_dir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    fs::create_dir_all(&d).unwrap();
    d
}

fn multiset<'a>(xs: impl IntoIterator<Item = &'a AnnotatedSnippet>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in xs {
        *m.entry(s.render()).or_default() += 1;
    }
    m
}

fn c1_metric_oracle() -> Outcome {
    let start = Instant::now();
    for c in oracle::CASES {
        let ast = parse(c.src).map_err(|e| format!("{}: {e}", c.name))?;
        let h = halstead_counts(&ast);
        let got = (h.eta1, h.eta2, h.n1_total, h.n2_total);
        ensure(got == c.counts, || format!("{}: counts {got:?} != {:?}", c.name, c.counts))?;
        ensure(cyclomatic_complexity(&ast) == c.cc, || format!("{}: cc", c.name))?;
        let s = DifficultyScore::of(&ast);
        ensure((s.hd - c.hd).abs() < 1e-9 && (s.om - c.om).abs() < 1e-9, || format!("{}: hd {} om {}", c.name, s.hd, s.om))?;
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!("{} snippets", oracle::CASES.len()))
}

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

fn c2_cc_duality() -> Outcome {
    let start = Instant::now();
    let corpus = generate_corpus(&GrammarProfile::default(), 5000, 2).map_err(|e| e.to_string())?;
    for (i, s) in corpus.iter().enumerate() {
        let ast = parse(&s.source).map_err(|e| e.to_string())?;
        let g = build_cfg(&ast);
        ensure(g.cyclomatic() == decisions(&ast.stmts) as i64 + 1, || format!("snippet {i}: E-N+2P = {}", g.cyclomatic()))?;
    }
    within(Duration::from_secs(10), start)?;
    Ok("5000 snippets".into())
}

fn c3_interpreter_golden() -> Outcome {
    let start = Instant::now();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/golden.txt");
    let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let golden = tinypy::corpus::parse_split(&text, &path).map_err(|e| e.to_string())?;
    ensure(golden.len() == 10_000, || format!("{} golden records", golden.len()))?;
    let mut bad = 0;
    for g in &golden {
        let out = tinypy::execute(&parse(&g.source).map_err(|e| e.to_string())?, tinypy::DEFAULT_STEP_BUDGET).map_err(|e| e.to_string())?;
        bad += (out.lines != g.output_lines) as usize;
    }
    ensure(bad == 0, || format!("{bad} of 10000 differ from CPython"))?;
    within(Duration::from_secs(60), start)?;
    Ok("10000/10000 match CPython".into())
}

fn c4_thresholds() -> Outcome {
    use DifficultyLevel::*;
    let below_two = f64::from_bits(2f64.to_bits() - 1);
    let cases = [(1.999_999_999, Easy), (below_two, Easy), (2.0, Medium), (3.999_999_999, Medium), (4.0, Hard)];
    for (om, want) in cases {
        ensure(classify(om) == want, || format!("classify({om}) = {}", classify(om)))?;
    }
    Ok("easy < 2 <= medium < 4 <= hard".into())
}

fn c5_dataset_shape() -> Outcome {
    let ds = build_leveled(4000, SplitFractions::default(), 5).map_err(|e| e.to_string())?;
    for l in DifficultyLevel::ALL {
        let s = ds.level(l);
        let got = (s.train.len(), s.val.len(), s.test.len());
        ensure(got == (3400, 520, 80), || format!("{l}: {got:?}"))?;
        ensure(s.train.iter().chain(&s.val).chain(&s.test).all(|x| classify(x.score.om) == l), || format!("{l} impure"))?;
    }
    for split in Split::ALL {
        let union = multiset(ds.levels.iter().flat_map(|s| s.get(split)));
        ensure(multiset(ds.all.get(split)) == union, || format!("ALL {} is not the union of levels", split.as_str()))?;
    }
    Ok("3400/520/80 per level; ALL = union".into())
}

fn c6_schedule_composition() -> Outcome {
    let ds = build_leveled(400, SplitFractions::default(), 6).map_err(|e| e.to_string())?;
    let train = |l: DifficultyLevel| &ds.level(l).train;
    let stage = |kind, k: usize| stage_snippets(&make_schedule(kind, 120_000).unwrap().stages[k], &ds, 6).unwrap();
    let top_easy = top_fraction_hardest(train(DifficultyLevel::Easy), 0.5);
    ensure(multiset(&stage(ScheduleKind::Hybrid, 1)) == multiset(top_easy.iter().chain(train(DifficultyLevel::Medium))), || {
        "hybrid stage 2".into()
    })?;
    let all_three = DifficultyLevel::ALL.iter().flat_map(|&l| train(l));
    ensure(multiset(&stage(ScheduleKind::Incremental, 2)) == multiset(all_three), || "incremental stage 3".into())?;
    for (k, l) in DifficultyLevel::ALL.into_iter().enumerate() {
        ensure(multiset(&stage(ScheduleKind::Sequential, k)) == multiset(train(l)), || format!("sequential stage {}", k + 1))?;
    }
    Ok("hybrid 2, incremental 3, sequential 1-3 exact".into())
}

fn c7_param_count() -> Outcome {
    let cfg = ModelConfig::paper();
    let n = Params32::init(cfg, 0).len();
    ensure(n == cfg.param_count(), || format!("layout {n} != closed form {}", cfg.param_count()))?;
    ensure((950_000..=1_150_000).contains(&n), || format!("{n} parameters"))?;
    Ok(format!("{n} parameters"))
}

fn c8_gradient_check() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::tiny();
    let p = Params64::init(cfg, 8);
    let batch: Vec<Vec<u32>> = (0..2u32).map(|r| (0..33u32).map(|i| (i * 7 + r * 11 + i / 3) % 41).collect()).collect();
    let errs = tensor_errors(&p, &batch, 1e-3).map_err(|e| e.to_string())?;
    let (name, worst) = errs.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    ensure(worst < 1e-4, || format!("{name}: relative error {worst:.2e}"))?;
    within(Duration::from_secs(120), start)?;
    Ok(format!("{} tensors, max relative error {worst:.2e} ({name})", errs.len()))
}

fn c9_analytic_loss() -> Outcome {
    let p = Params64::zeros(ModelConfig::paper());
    let batch: Vec<Vec<u32>> = (0..3u32).map(|r| (0..257u32).map(|i| (i * 13 + r) % 41).collect()).collect();
    let l = loss(&p, &batch).map_err(|e| e.to_string())?;
    let want = 41f64.ln();
    ensure((l - want).abs() < 1e-6, || format!("loss {l} vs ln 41 = {want}"))?;
    Ok(format!("loss {l:.9} (ln 41 = {want:.9})"))
}

/// Mean loss over evenly spaced windows covering `stream`.
fn stream_loss(p: &Params32, stream: &[u32], windows: usize) -> f64 {
    let win = p.cfg().block_size + 1;
    let span = stream.len() - win;
    let batch: Vec<Vec<u32>> = (0..windows).map(|i| i * span / (windows - 1)).map(|s| stream[s..s + win].to_vec()).collect();
    loss(p, &batch).unwrap()
}

fn c10_overfit() -> Outcome {
    let dir = work_dir("c10");
    let snippets = generate_corpus(&GrammarProfile::default(), 32, 10).map_err(|e| e.to_string())?;
    let stream = tokenize(&render_all(&snippets)).unwrap();
    let cfg = ModelConfig::paper();
    let mut t = Trainer::new(Params32::init(cfg, 10), TrainPlan::with_iters(2000), 10).map_err(|e| e.to_string())?;
    let start = Instant::now();
    t.run(&stream, None, |row| {
        if (row.iter + 1) % 100 == 0 {
            eprintln!("[c10] step {} loss {:.4} lr {:.0e} ({:.0}s)", row.iter + 1, row.train_loss, row.lr, start.elapsed().as_secs_f64());
        }
    })
    .map_err(|e| e.to_string())?;
    let rng = t.rng_state();
    let ck = Checkpoint { params: t.params, opt: t.opt, rng: Some(rng), iter: t.iter as u64, meta: vec![("run".into(), "overfit".into())] };
    ck.save(&dir.join("overfit.ckpt")).map_err(|e| e.to_string())?;
    let final_loss = stream_loss(&ck.params, &stream, 64);
    let acc = execution_accuracy(&ModelPredictor::greedy(&ck.params), &snippets);
    let detail = format!(
        "final train loss {final_loss:.4}, execution accuracy {}/{} ({:.0}s)",
        acc.correct,
        acc.total,
        start.elapsed().as_secs_f64()
    );
    ensure(final_loss < 0.05 && acc.correct == acc.total, || detail.clone())?;
    Ok(detail)
}

fn train_or_resume(kind: ScheduleKind, ds: &LeveledDataset, iters: usize, seed: u64, dir: &Path) -> Result<Params32, String> {
    let schedule = make_schedule(kind, iters).map_err(|e| e.to_string())?;
    let last = dir.join(format!("stage{}.ckpt", schedule.stages.len()));
    if let Ok(ck) = Checkpoint::<f32>::load(&last) {
        return Ok(ck.params);
    }
    let start = Instant::now();
    let every = (iters / 50).max(1);
    let mut done = 0;
    let run = run_schedule(&schedule, ds, ModelConfig::paper(), &TrainPlan::with_iters(iters), seed, dir, |stage, row| {
        done += 1;
        if done % every == 0 {
            eprintln!("[c11] {kind} seed {seed} stage {stage} step {done}/{iters} loss {:.4} ({:.0}s)", row.train_loss, start.elapsed().as_secs_f64());
        }
    })
    .map_err(|e| e.to_string())?;
    Ok(run.params)
}

fn c11_curriculum() -> Outcome {
    let root = work_dir("c11");
    let ds = build_leveled(20_000, SplitFractions::default(), 11).map_err(|e| e.to_string())?;
    let kinds = [ScheduleKind::Baseline, ScheduleKind::Hybrid, ScheduleKind::HardOnly];
    let (mut wins_all, mut wins_hard) = (0, 0);
    let mut tables = String::new();
    for seed in 1..=3u64 {
        let mut runs: Vec<(String, EvalReport)> = Vec::new();
        for kind in kinds {
            let dir = root.join(format!("seed{seed}")).join(kind.as_str());
            let params = train_or_resume(kind, &ds, 15_000, seed, &dir)?;
            let r = evaluate(&ModelPredictor::greedy(&params), &ds, Protocols { token: false, line: false, exec: true });
            runs.push((kind.label().to_string(), r));
        }
        let exec = |k: usize| runs[k].1.exec_overall().fraction();
        let hard = |k: usize| runs[k].1.exec[DifficultyLevel::Hard.index()].fraction();
        wins_all += (exec(1) >= exec(0)) as usize;
        wins_hard += (hard(1) > hard(2)) as usize;
        tables.push_str(&format!("seed {seed}\n{}\n{}\n", execution_table(&runs), hard_table(&runs)));
    }
    fs::write(root.join("comparison.txt"), &tables).unwrap();
    eprint!("{tables}");
    let detail = format!("hybrid >= baseline overall in {wins_all}/3 seeds; hybrid > hard_only on hard in {wins_hard}/3 seeds");
    ensure(wins_all >= 2 && wins_hard >= 2, || detail.clone())?;
    Ok(detail)
}

fn c12_om_validation() -> Outcome {
    let root = work_dir("c12");
    let mut models = Vec::new();
    let mut tests = Vec::new();
    for level in 1..=6u8 {
        let corpus = generate_corpus(&concept_profile(level).unwrap(), 20_200, 1200 + level as u64).map_err(|e| e.to_string())?;
        let (train, test) = corpus.split_at(20_000);
        let path = root.join(format!("level{level}.ckpt"));
        let params = match Checkpoint::<f32>::load(&path) {
            Ok(ck) => ck.params,
            Err(_) => {
                let stream = tokenize(&render_all(train)).unwrap();
                let start = Instant::now();
                let mut t =
                    Trainer::new(Params32::init(ModelConfig::tiny(), level as u64), TrainPlan::with_iters(3000), level as u64).map_err(|e| e.to_string())?;
                t.run(&stream, None, |row| {
                    if (row.iter + 1) % 500 == 0 {
                        eprintln!("[c12] level {level} step {} loss {:.4} ({:.0}s)", row.iter + 1, row.train_loss, start.elapsed().as_secs_f64());
                    }
                })
                .map_err(|e| e.to_string())?;
                let rng = t.rng_state();
                let ck = Checkpoint { params: t.params, opt: t.opt, rng: Some(rng), iter: t.iter as u64, meta: vec![("level".into(), level.to_string())] };
                ck.save(&path).map_err(|e| e.to_string())?;
                ck.params
            }
        };
        models.push(params);
        tests.push(test.to_vec());
    }
    let predictors: Vec<_> = models.iter().map(ModelPredictor::greedy).collect();
    let v = om_validation(&predictors, &tests);
    fs::write(root.join("om_validation.txt"), v.table()).unwrap();
    eprint!("{}", v.table());
    let detail = format!("Spearman(OM, accuracy) = {:.3}", v.spearman);
    ensure(v.spearman < 0.0, || detail.clone())?;
    Ok(detail)
}

fn snapshot(paths: &[PathBuf]) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack: Vec<PathBuf> = paths.to_vec();
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            stack.extend(fs::read_dir(&p).unwrap().map(|e| e.unwrap().path()));
        } else if p.exists() {
            out.insert(p.clone(), fs::read(&p).unwrap());
        }
    }
    out
}

fn c13_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = |s: &str| tmp.path().join(s).display().to_string();
    let small_model = ["--layers", "1", "--heads", "2", "--embed", "16", "--block", "64"];
    let mut commands: Vec<(Vec<String>, Vec<PathBuf>, PathBuf)> = Vec::new();
    let mut add = |args: Vec<&str>, outputs: Vec<String>, config: String| {
        commands.push((args.iter().map(|s| s.to_string()).collect(), outputs.into_iter().map(PathBuf::from).collect(), PathBuf::from(config)));
    };
    let gen = d("gen.txt");
    add(vec!["--seed", "3", "generate", "--count", "40", "--level", "6", "--out", &gen], vec![gen.clone()], format!("{gen}.config.txt"));
    add(vec!["score", "--input", &gen, "--out", &d("score")], vec![d("score")], d("score/config.txt"));
    add(vec!["--seed", "4", "build", "--per-level", "60", "--out", &d("ds")], vec![d("ds")], d("ds/config.txt"));
    let ds = d("ds");
    let (bl, hy) = (d("bl"), d("hy"));
    for (kind, out) in [("baseline", &bl), ("hybrid", &hy)] {
        let mut args = vec!["--seed", "5", "train", "--schedule", kind, "--data", &ds, "--iters", "9", "--batch", "2", "--eval-interval", "3", "--model", "tiny"];
        args.extend(small_model);
        args.extend(["--out", out.as_str()]);
        add(args, vec![out.clone()], format!("{out}/config.txt"));
    }
    let ck_bl = format!("{bl}/final.ckpt");
    let ck_hy = format!("{hy}/final.ckpt");
    let ev = d("ev");
    add(
        vec!["eval", "--checkpoint", &ck_hy, "--data", &ds, "--max-test", "2", "--protocols", "token,line,exec", "--out", &ev],
        vec![ev.clone()],
        format!("{ev}/config.txt"),
    );
    let sampled = d("sampled");
    add(
        vec!["--seed", "7", "eval", "--checkpoint", &ck_hy, "--data", &ds, "--max-test", "2", "--decode", "sample", "--protocols", "exec", "--out", &sampled],
        vec![sampled.clone()],
        format!("{sampled}/config.txt"),
    );
    let cmp = d("cmp");
    let cks = format!("{ck_bl},{ck_hy}");
    add(vec!["compare", "--checkpoints", &cks, "--data", &ds, "--max-test", "2", "--protocols", "exec", "--out", &cmp], vec![cmp.clone()], format!("{cmp}/config.txt"));

    let mut names = Vec::new();
    for (args, outputs, config) in &commands {
        let mut argv = vec!["tinypy".to_string()];
        argv.extend(args.iter().cloned());
        let name = args.iter().find(|a| ["generate", "score", "build", "train", "eval", "compare"].contains(&a.as_str())).unwrap().clone();
        ensure(tinypy_cli::run(&argv) == 0, || format!("{name} failed"))?;
        let first = snapshot(outputs);
        ensure(!first.is_empty(), || format!("{name} wrote nothing"))?;
        ensure(tinypy_cli::run(["tinypy", "rerun", &config.display().to_string()]) == 0, || format!("rerun of {name} failed"))?;
        let second = snapshot(outputs);
        ensure(first == second, || {
            let diff: Vec<_> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
            format!("{name}: rerun differs in {diff:?}")
        })?;
        names.push(format!("{name}({} files)", first.len()));
    }
    Ok(names.join(", "))
}

struct Criterion {
    id: u32,
    title: &'static str,
    heavy: bool,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, title: "metric oracle suite", heavy: false, run: c1_metric_oracle },
    Criterion { id: 2, title: "CC duality", heavy: false, run: c2_cc_duality },
    Criterion { id: 3, title: "interpreter equivalence", heavy: false, run: c3_interpreter_golden },
    Criterion { id: 4, title: "threshold semantics", heavy: false, run: c4_thresholds },
    Criterion { id: 5, title: "dataset shape", heavy: false, run: c5_dataset_shape },
    Criterion { id: 6, title: "schedule composition", heavy: false, run: c6_schedule_composition },
    Criterion { id: 7, title: "parameter count", heavy: false, run: c7_param_count },
    Criterion { id: 8, title: "gradient check", heavy: false, run: c8_gradient_check },
    Criterion { id: 9, title: "analytic loss", heavy: false, run: c9_analytic_loss },
    Criterion { id: 10, title: "overfit sanity", heavy: true, run: c10_overfit },
    Criterion { id: 11, title: "desk-scale curriculum experiment", heavy: true, run: c11_curriculum },
    Criterion { id: 12, title: "OM validation", heavy: true, run: c12_om_validation },
    Criterion { id: 13, title: "end-to-end determinism", heavy: false, run: c13_determinism },
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let all = args.iter().any(|a| a == "--include-ignored" || a == "--ignored");
    let picked: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in CRITERIA {
        let selected = if picked.is_empty() { all || !c.heavy } else { picked.contains(&c.id) };
        if !selected {
            if picked.is_empty() {
                println!("criterion {:>2} SKIP  {}: long-running; run with `-- {}` or `-- --include-ignored`", c.id, c.title, c.id);
            }
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {}: {d} [{secs:.1}s]", c.id, c.title),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {}: {d} [{secs:.1}s]", c.id, c.title);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
