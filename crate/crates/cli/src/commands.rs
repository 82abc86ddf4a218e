//! Subcommand implementations. Each computes everything first and writes
//! its files only once all results are in hand.

use std::fmt::Write as _;

use mltc::corpus::{load_corpus, stratified_kfold, stratified_sample, Corpus, FoldAssignment};
use mltc::distill::{run_mode, DistillOutcome, PredictionSet, Variant};
use mltc::hypertune::{decode, pso_optimize, trace_to_text, HyperSpace};
use mltc::metrics::{example_f1, report_with};
use mltc::stats::{confidence_interval, report, ReplicationSet};
use mltc::synthetic::generate;
use mltc::{Report, Setup};

use crate::config::Config;
use crate::error::CliError;
use crate::output::Outputs;

fn load(config: &Config) -> Result<Corpus, CliError> {
    let corpus = load_corpus(&config.path("corpus.path")?, &config.path("corpus.vocab")?)
        .map_err(CliError::stage("load corpus"))?;
    if corpus.is_empty() {
        return Err(CliError::data("load corpus", "corpus holds no documents"));
    }
    Ok(corpus)
}

fn folds(config: &Config, corpus: &Corpus) -> Result<FoldAssignment, CliError> {
    stratified_kfold(corpus, config.parse("folds.k")?, config.seed()?).map_err(CliError::stage("stratify folds"))
}

fn metrics(config: &Config, p: &PredictionSet<f64>) -> Result<Report, CliError> {
    report_with(p, config.parse("metrics.literal_weights")?).map_err(CliError::stage("metrics"))
}

fn corpus_files(out: &Outputs, corpus: &Corpus) -> Result<(), CliError> {
    out.write("corpus.jsonl", &corpus.to_jsonl())?;
    out.write("vocab.txt", &corpus.vocab.to_text())?;
    Ok(())
}

fn prevalence_lines(corpus: &Corpus, prefix: &str) -> String {
    let mut s = String::new();
    for j in 0..corpus.num_labels() {
        let _ = writeln!(
            s,
            "{prefix}.{} = {} ({} of {})",
            corpus.vocab.name(j),
            corpus.prevalence(j),
            corpus.positives(j),
            corpus.len()
        );
    }
    s
}

pub fn generate_synthetic(config: &Config) -> Result<Outputs, CliError> {
    let cfg = config.synthetic()?;
    let corpus = generate(&cfg).map_err(CliError::stage("generate"))?;
    let out = Outputs::new("generate-synthetic", config)?;
    corpus_files(&out, &corpus)?;
    out.write(
        "manifest.txt",
        &format!(
            "documents = {}\nlabels = {}\n{}",
            corpus.len(),
            corpus.num_labels(),
            prevalence_lines(&corpus, "prevalence")
        ),
    )?;
    Ok(out)
}

pub fn sample(config: &Config) -> Result<Outputs, CliError> {
    let size: usize = config.parse("sample.size")?;
    let corpus = load(config)?;
    if size == 0 || size > corpus.len() {
        return Err(CliError::Usage(format!(
            "sample.size must lie in 1..={} (corpus size), got {size}",
            corpus.len()
        )));
    }
    let seed = config.seed()?;
    let subset = stratified_sample(&corpus, size, seed).map_err(CliError::stage("sample"))?;
    let out = Outputs::new("sample", config)?;
    corpus_files(&out, &subset)?;
    out.write(
        "manifest.txt",
        &format!(
            "seed = {seed}\nsource_documents = {}\nsample_documents = {}\n{}{}",
            corpus.len(),
            subset.len(),
            prevalence_lines(&corpus, "source_prevalence"),
            prevalence_lines(&subset, "sample_prevalence")
        ),
    )?;
    Ok(out)
}

/// Trains one mode over shared folds.
fn train(corpus: &Corpus, folds: &FoldAssignment, setup: &Setup) -> Result<DistillOutcome<f64>, CliError> {
    run_mode(corpus, folds, setup).map_err(CliError::stage("train"))
}

pub fn run(config: &Config) -> Result<Outputs, CliError> {
    let corpus = load(config)?;
    let variant = config.variant()?;
    let setup = config.setup(variant, corpus.vocab.labels())?;
    let folds = folds(config, &corpus)?;
    let outcome = train(&corpus, &folds, &setup)?;
    let student = metrics(config, &outcome.student)?;
    let teacher = outcome.teacher.as_ref().map(|t| metrics(config, t)).transpose()?;

    let out = Outputs::new("run", config)?;
    out.write_raw("predictions.tsv", &outcome.student.to_tsv(out.header_lines()))?;
    out.write("metrics.txt", &student.to_text())?;
    if let (Some(t), Some(report)) = (&outcome.teacher, &teacher) {
        out.write_raw("teacher_predictions.tsv", &t.to_tsv(out.header_lines()))?;
        out.write("teacher_metrics.txt", &report.to_text())?;
    }
    out.write(
        "manifest.txt",
        &format!(
            "seed = {}\npreset = {}\nmode = {}\ndocuments = {}\nlabels = {}\nfolds = {}\nfold_hash = {:016x}\nexample_f1 = {:.6}\ntiming = timing.txt\n",
            setup.seed,
            config.get("run.preset"),
            variant.name(),
            corpus.len(),
            corpus.num_labels(),
            folds.k,
            folds.fingerprint(),
            student.example_f1,
        ),
    )?;
    Ok(out)
}

pub fn evaluate(config: &Config) -> Result<Outputs, CliError> {
    let path = config.path("evaluate.predictions")?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::data("load predictions", format!("{}: {e}", path.display())))?;
    let predictions = PredictionSet::<f64>::from_tsv(&text)
        .map_err(|e| CliError::data("load predictions", format!("{}: {e}", path.display())))?;
    let report = metrics(config, &predictions)?;
    let out = Outputs::new("evaluate", config)?;
    out.write("metrics.txt", &report.to_text())?;
    Ok(out)
}

/// The four distillation variants in comparison-table order.
pub const ABLATION_ROWS: [Variant; 4] = [
    Variant::SequentialKd,
    Variant::BinaryRelevanceKd,
    Variant::SequentialKdContrastive,
    Variant::BinaryRelevanceKdContrastive,
];

pub fn ablate(config: &Config) -> Result<Outputs, CliError> {
    let corpus = load(config)?;
    let folds = folds(config, &corpus)?;
    let mut table = String::from("approach\tf1\tmicro_f1\tmacro_f1\tweighted_f1\n");
    let mut manifest = format!("seed = {}\nfolds = {}\n", config.seed()?, folds.k);
    for variant in ABLATION_ROWS {
        let setup = config.setup(variant, corpus.vocab.labels())?;
        let outcome = train(&corpus, &folds, &setup)?;
        if outcome.student.doc_ids().len() != corpus.len() {
            return Err(CliError::internal("ablate", "prediction set does not cover the corpus"));
        }
        let r = metrics(config, &outcome.student)?;
        let _ = writeln!(
            table,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            variant.name(),
            r.example_f1,
            r.micro_f1,
            r.macro_f1,
            r.weighted_f1
        );
        let _ = writeln!(manifest, "fold_hash.{} = {:016x}", variant.name(), folds.fingerprint());
    }
    let out = Outputs::new("ablate", config)?;
    out.write("ablation.txt", &table)?;
    out.write("manifest.txt", &manifest)?;
    Ok(out)
}

/// Objective score for one decoded position; failures score NaN so the
/// swarm flags the particle instead of aborting.
fn tune_objective(position: &[f64], space: &HyperSpace<f64>, base: &Setup, data: &(Corpus, FoldAssignment)) -> f64 {
    let Ok(cfg) = decode(position, space) else {
        return f64::NAN;
    };
    let mut setup = base.clone();
    setup.config = cfg;
    run_mode(&data.0, &data.1, &setup)
        .and_then(|o| example_f1(&o.student))
        .unwrap_or(f64::NAN)
}

pub fn tune(config: &Config, workers: usize) -> Result<Outputs, CliError> {
    let space = config.space()?;
    let swarm = config.swarm(workers)?;
    let objective_name = config.get("swarm.objective");
    let result = match objective_name {
        "constant" => {
            let value: f64 = config.parse("swarm.constant_value")?;
            pso_optimize(&space, |_| value, &swarm)
        }
        "example_f1" => {
            let corpus = load(config)?;
            let folds = folds(config, &corpus)?;
            let variant = config.variant()?;
            let base = config.setup(variant, corpus.vocab.labels())?;
            let data = (corpus, folds);
            pso_optimize(&space, |p| tune_objective(p, &space, &base, &data), &swarm)
        }
        other => {
            return Err(CliError::Usage(format!(
                "swarm.objective must be example_f1 or constant, got {other:?}"
            )))
        }
    }
    .map_err(CliError::stage("tune"))?;
    if result.trace.windows(2).any(|w| w[1].gbest_score < w[0].gbest_score) {
        return Err(CliError::internal("tune", "gbest trace decreased"));
    }

    let trace = trace_to_text(&result, &space).map_err(CliError::stage("tune"))?;
    let mut best = format!(
        "# best_score = {}\n# iterations = {}\n# stopped_early = {}\n",
        result.best_score,
        result.trace.len(),
        result.stopped_early
    );
    match &result.best_position {
        Some(pos) => match decode(pos, &space) {
            Ok(cfg) => {
                let _ = write!(
                    best,
                    "run.preset = custom\ndistill.temperature = {}\ndistill.alpha = {}\ndistill.learning_rate = {}\ndistill.batch_size = {}\ndistill.epochs = {}\ndistill.max_length = {}\n",
                    cfg.temperature, cfg.alpha, cfg.learning_rate, cfg.batch_size, cfg.epochs, cfg.max_length
                );
            }
            Err(_) => {
                let values = space.describe(pos).map_err(CliError::stage("tune"))?;
                let _ = writeln!(best, "# position = {values}");
            }
        },
        None => best.push_str("# no finite objective value was observed\n"),
    }
    let out = Outputs::new("tune", config)?;
    out.write("trace.tsv", &trace)?;
    out.write("best_config.txt", &best)?;
    out.write("space.txt", &space.to_text())?;
    Ok(out)
}

/// Reference row: mean 82.70%, sd 0.89%, five replications, 95%
/// interval 81.59% to 83.80%.
const REFERENCE: (f64, f64, usize, f64, f64) = (0.8270, 0.0089, 5, 0.8159, 0.8380);
const REFERENCE_TOLERANCE: f64 = 1e-4;

fn self_check() -> Result<String, CliError> {
    let (mean, sd, n, lo_ref, hi_ref) = REFERENCE;
    let (lo, hi) = confidence_interval(mean, sd, n).map_err(CliError::stage("stats self-check"))?;
    let pass = (lo - lo_ref).abs() <= REFERENCE_TOLERANCE && (hi - hi_ref).abs() <= REFERENCE_TOLERANCE;
    let text = format!(
        "[self_check]\nmean = {mean}\nsd = {sd}\nn = {n}\nci_low = {lo:.6}\nci_high = {hi:.6}\nexpected = {lo_ref} {hi_ref}\ntolerance = {REFERENCE_TOLERANCE}\nstatus = {}\n",
        if pass { "pass" } else { "fail" }
    );
    if pass {
        Ok(text)
    } else {
        Err(CliError::internal("stats self-check", text))
    }
}

pub fn stats(config: &Config) -> Result<Outputs, CliError> {
    let mut body = self_check()?;
    if let Some(path) = config.optional_path("stats.input") {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::data("load replications", format!("{}: {e}", path.display())))?;
        let set = ReplicationSet::<f64>::parse(&text)
            .map_err(|e| CliError::data("load replications", format!("{}: {e}", path.display())))?;
        body.push('\n');
        body.push_str(&report(&set, config.parse("stats.pooled")?).map_err(CliError::stage("stats"))?);
    }
    let out = Outputs::new("stats", config)?;
    out.write("stats.txt", &body)?;
    Ok(out)
}
