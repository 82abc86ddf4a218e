//! The `mltc` binary end to end on small synthetic corpora.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mltc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mltc"))
        .args(args)
        .output()
        .expect("spawn mltc")
}

fn ok(args: &[&str]) {
    let out = mltc(args);
    assert!(
        out.status.success(),
        "mltc {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str]) -> i32 {
    mltc(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Lines that are not `#` comments.
fn body(p: &Path) -> String {
    read(p)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// A 90-document, 3-label corpus under `dir/corpus`.
fn small_corpus(dir: &TempDir) -> PathBuf {
    let out = dir.path().join("corpus");
    ok(&[
        "generate-synthetic",
        "--seed",
        "5",
        "--synthetic.docs",
        "90",
        "--synthetic.labels",
        "3",
        "--out",
        s(&out),
    ]);
    out
}

fn corpus_flags(c: &Path) -> [String; 4] {
    [
        "--corpus.path".into(),
        s(&c.join("corpus.jsonl")).into(),
        "--corpus.vocab".into(),
        s(&c.join("vocab.txt")).into(),
    ]
}

/// Quick run settings: three folds, a small hashed space, one epoch.
const QUICK: [&str; 10] = [
    "--folds.k",
    "3",
    "--features.dim",
    "2048",
    "--run.preset",
    "custom",
    "--distill.epochs",
    "1",
    "--seed",
    "4",
];

fn run_in(dir: &TempDir, corpus: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.path().join(name);
    let flags = corpus_flags(corpus);
    let mut args = vec!["run", "--out", s(&out)];
    args.extend(flags.iter().map(String::as_str));
    args.extend(QUICK);
    args.extend(extra);
    ok(&args);
    out
}

#[test]
fn generated_corpus_files_embed_version_and_config() {
    let dir = TempDir::new().unwrap();
    let c = small_corpus(&dir);
    let jsonl = read(&c.join("corpus.jsonl"));
    assert!(jsonl.starts_with("# mltc "));
    assert!(jsonl.contains("# synthetic.docs = 90"));
    assert_eq!(body(&c.join("corpus.jsonl")).lines().count(), 90);
    assert_eq!(body(&c.join("vocab.txt")).lines().count(), 3);
    assert!(c.join("timing.txt").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&["run", "--no.such.key", "1"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["run", "--folds.k", "many"]), 1);
    let dir = TempDir::new().unwrap();
    let c = small_corpus(&dir);
    let flags = corpus_flags(&c);
    let out = dir.path().join("sample");
    let mut args = vec!["sample", "--sample.size", "0", "--out", s(&out)];
    args.extend(flags.iter().map(String::as_str));
    assert_eq!(code(&args), 1);
    // Distillation values without the custom preset are rejected.
    let mut args = vec!["run", "--distill.alpha", "0.2", "--out", s(&out)];
    args.extend(flags.iter().map(String::as_str));
    assert_eq!(code(&args), 1);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(
        &bad,
        "doc_id\tlabel\tprobability\ttruth\tfold\nd1\tL0\tnot-a-number\t1\t0\n",
    )
    .unwrap();
    let out = dir.path().join("eval");
    assert_eq!(code(&["evaluate", s(&bad), "--out", s(&out)]), 2);
    assert_eq!(
        code(&[
            "run",
            "--corpus.path",
            "/nonexistent/c.jsonl",
            "--corpus.vocab",
            "/nonexistent/v.txt"
        ]),
        2
    );
    assert!(!out.join("metrics.txt").exists());
}

#[test]
fn sample_preserves_prevalence_and_is_seeded() {
    let dir = TempDir::new().unwrap();
    let c = small_corpus(&dir);
    let flags = corpus_flags(&c);
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let mut args = vec!["sample", "--sample.size", "30", "--seed", "8", "--out", s(&out)];
        args.extend(flags.iter().map(String::as_str));
        ok(&args);
        outs.push(out);
    }
    assert_eq!(read(&outs[0].join("corpus.jsonl")), read(&outs[1].join("corpus.jsonl")));
    assert_eq!(body(&outs[0].join("corpus.jsonl")).lines().count(), 30);
    let manifest = read(&outs[0].join("manifest.txt"));
    assert!(manifest.contains("sample_documents = 30"));
    assert!(manifest.contains("sample_prevalence.topic_0"));
}

#[test]
fn evaluate_reproduces_run_metrics() {
    let dir = TempDir::new().unwrap();
    let c = small_corpus(&dir);
    let run = run_in(&dir, &c, "run", &[]);
    let eval = dir.path().join("eval");
    ok(&["evaluate", s(&run.join("predictions.tsv")), "--out", s(&eval)]);
    assert_eq!(body(&eval.join("metrics.txt")), body(&run.join("metrics.txt")));
    let manifest = read(&run.join("manifest.txt"));
    assert!(manifest.contains("mode = sequential_kd") && manifest.contains("timing = timing.txt"));
}

#[test]
fn run_outputs_do_not_depend_on_worker_count() {
    let dir = TempDir::new().unwrap();
    let c = small_corpus(&dir);
    let one = run_in(&dir, &c, "one", &["--workers", "1"]);
    let four = run_in(&dir, &c, "four", &["--workers", "4"]);
    for f in [
        "predictions.tsv",
        "metrics.txt",
        "teacher_predictions.tsv",
        "teacher_metrics.txt",
        "manifest.txt",
    ] {
        assert_eq!(read(&one.join(f)), read(&four.join(f)), "{f}");
    }
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = TempDir::new().unwrap();
    let c = small_corpus(&dir);
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# quick settings\n[folds]\nk = 3\n[distill]\nepochs = 1\n").unwrap();
    let out = dir.path().join("run");
    let flags = corpus_flags(&c);
    let mut args = vec![
        "run",
        "--config",
        s(&cfg),
        "--run.preset",
        "custom",
        "--folds.k",
        "2",
        "--out",
        s(&out),
    ];
    args.extend(flags.iter().map(String::as_str));
    args.extend(["--features.dim", "2048"]);
    ok(&args);
    let metrics = read(&out.join("metrics.txt"));
    assert!(metrics.contains("# folds.k = 2"));
    assert!(metrics.contains("# distill.epochs = 1"));
    // Execution keys stay out of the embedded configuration.
    assert!(!metrics.contains("# out =") && !metrics.contains("# config ="));
}

#[test]
fn ablate_shares_folds_across_variants() {
    let dir = TempDir::new().unwrap();
    let c = small_corpus(&dir);
    let out = dir.path().join("ablate");
    let flags = corpus_flags(&c);
    let mut args = vec!["ablate", "--out", s(&out)];
    args.extend(flags.iter().map(String::as_str));
    args.extend(QUICK);
    ok(&args);
    let table = body(&out.join("ablation.txt"));
    let rows: Vec<&str> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(
        rows,
        [
            "sequential_kd",
            "binary_relevance_kd",
            "sequential_kd_contrastive",
            "binary_relevance_kd_contrastive"
        ]
    );
    let manifest = read(&out.join("manifest.txt"));
    let hashes: Vec<&str> = manifest
        .lines()
        .filter(|l| l.starts_with("fold_hash."))
        .map(|l| l.split(" = ").nth(1).unwrap())
        .collect();
    assert_eq!(hashes.len(), 4);
    assert!(hashes.iter().all(|h| *h == hashes[0]));
}

#[test]
fn constant_objective_stops_after_patience() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("tune");
    ok(&[
        "tune",
        "--swarm.objective",
        "constant",
        "--swarm.patience",
        "2",
        "--swarm.max_iters",
        "20",
        "--out",
        s(&out),
    ]);
    let trace = body(&out.join("trace.tsv"));
    assert_eq!(trace.lines().count(), 3, "{trace}");
    let best = read(&out.join("best_config.txt"));
    assert!(best.contains("# stopped_early = true"));
    // The best configuration loads back as a config file.
    let run_cfg = out.join("best_config.txt");
    let again = dir.path().join("again");
    ok(&[
        "tune",
        "--config",
        s(&run_cfg),
        "--swarm.objective",
        "constant",
        "--out",
        s(&again),
    ]);
}

#[test]
fn tune_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let c = small_corpus(&dir);
    let flags = corpus_flags(&c);
    let mut traces = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(name);
        let mut args = vec![
            "tune",
            "--folds.k",
            "3",
            "--features.dim",
            "1024",
            "--run.lr_scale",
            "1500",
            "--swarm.particles",
            "3",
            "--swarm.max_iters",
            "2",
            "--workers",
            workers,
            "--out",
            s(&out),
        ];
        args.extend(flags.iter().map(String::as_str));
        ok(&args);
        traces.push((read(&out.join("trace.tsv")), read(&out.join("best_config.txt"))));
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn stats_self_check_and_report() {
    let dir = TempDir::new().unwrap();
    let reps = dir.path().join("reps.txt");
    std::fs::write(
        &reps,
        "# two approaches\nkd 0.82\nkd 0.83\nkd 0.835\nbaseline 0.287\nbaseline 0.287\nbaseline 0.287\n",
    )
    .unwrap();
    let out = dir.path().join("stats");
    ok(&["stats", s(&reps), "--out", s(&out)]);
    let text = read(&out.join("stats.txt"));
    assert!(text.contains("status = pass"));
    assert!(text.contains("[anova]") && text.contains("[t_tests welch]"));

    // Zero variance within groups and distinct means: a perfect effect.
    std::fs::write(&reps, "a 0\na 0\nb 1\nb 1\n").unwrap();
    ok(&["stats", s(&reps), "--out", s(&out)]);
    let text = read(&out.join("stats.txt"));
    assert!(
        text.contains("eta_squared = 1\n") && text.contains("p_value = 0\n"),
        "{text}"
    );

    // One approach: descriptives only, no comparisons.
    std::fs::write(&reps, "only 0.5\nonly 0.7\n").unwrap();
    ok(&["stats", s(&reps), "--out", s(&out)]);
    let text = read(&out.join("stats.txt"));
    assert!(text.contains("[descriptive]"));
    assert!(!text.contains("[anova]"));

    // No input: the self-check alone.
    let bare = dir.path().join("bare");
    ok(&["stats", "--out", s(&bare)]);
    assert!(read(&bare.join("stats.txt")).contains("[self_check]"));
}
