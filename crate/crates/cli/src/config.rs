//! Flat `key = value` configuration with dotted keys.
//!
//! Values are layered: built-in defaults, then an optional config file, then
//! command-line flags named after the keys (`--distill.alpha 0.3`). The
//! resolved map is what every output file embeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mltc::distill::{DistillConfig, DistillSetup, TrainingMode, Variant};
use mltc::hypertune::{HyperSpace, SwarmConfig};
use mltc::model::{Activation, EncoderSpec, Role};
use mltc::synthetic::SyntheticConfig;

use crate::error::CliError;

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Keys describing how a command executes rather than what it computes; they
/// are left out of embedded configurations so outputs do not depend on them.
pub const EXECUTION_KEYS: [&str; 3] = ["workers", "out", "config"];

pub const KEYS: &[Key] = &[
    key("seed", "0", "Base seed for every random stream"),
    key("workers", "0", "Maximum worker threads (0 = all cores)"),
    key("out", "out", "Output directory"),
    key("config", "", "Configuration file (key = value lines)"),
    key("corpus.path", "", "Line-delimited JSON corpus"),
    key("corpus.vocab", "", "Label vocabulary, one label per line"),
    key("features.dim", "32768", "Hashed feature dimensionality"),
    key("folds.k", "5", "Cross-validation fold count"),
    key("run.mode", "sequential_kd", "Training mode"),
    key(
        "run.preset",
        "trial_and_error",
        "Hyperparameter preset: trial_and_error, pso_selected or custom",
    ),
    key(
        "run.contrastive_weight",
        "0.5",
        "Contrastive weight for contrastive modes",
    ),
    key(
        "run.label_order",
        "",
        "Comma-separated label names (default: vocabulary order)",
    ),
    key("run.lr_scale", "15000", "Step-size multiplier for the encoders"),
    key(
        "run.baseline_lr_scale",
        "500000",
        "Step-size multiplier for the linear baseline",
    ),
    key(
        "run.teacher_guidance",
        "true",
        "Distil from a teacher (false: hard labels only)",
    ),
    key("distill.temperature", "2", "Softmax temperature (custom preset only)"),
    key("distill.alpha", "0.5", "Soft-loss weight (custom preset only)"),
    key("distill.learning_rate", "0.00002", "Learning rate (custom preset only)"),
    key("distill.batch_size", "16", "Mini-batch size (custom preset only)"),
    key("distill.epochs", "5", "Epochs per label (custom preset only)"),
    key(
        "distill.max_length",
        "128",
        "Token budget per document (custom preset only)",
    ),
    key("model.teacher_hidden", "128,64", "Teacher hidden layer widths"),
    key("model.student_hidden", "32", "Student hidden layer widths"),
    key("model.activation", "tanh", "Hidden activation: tanh or relu"),
    key(
        "metrics.literal_weights",
        "false",
        "Also report weighted F1 with literal instance weights",
    ),
    key("sample.size", "300", "Documents in a stratified sample"),
    key("synthetic.docs", "1000", "Synthetic corpus size"),
    key("synthetic.labels", "10", "Synthetic label count"),
    key("synthetic.prevalence", "0.3", "Per-label positive rate"),
    key(
        "synthetic.correlation",
        "0",
        "Probability a label copies its predecessor",
    ),
    key("synthetic.min_tokens", "10", "Minimum filler tokens per document"),
    key("synthetic.max_tokens", "30", "Maximum filler tokens per document"),
    key("synthetic.filler_vocab", "40", "Filler vocabulary size"),
    key("swarm.particles", "10", "Swarm size"),
    key("swarm.inertia", "0.7", "Inertia weight w"),
    key("swarm.cognitive", "1.5", "Cognitive coefficient c1"),
    key("swarm.social", "1.5", "Social coefficient c2"),
    key("swarm.max_iters", "10", "Iteration budget"),
    key("swarm.threshold", "0.001", "Minimum gbest improvement"),
    key(
        "swarm.relative_threshold",
        "false",
        "Scale the threshold by |previous best|",
    ),
    key(
        "swarm.patience",
        "1",
        "Iterations without sufficient improvement before stopping",
    ),
    key("swarm.space", "", "Search-space file (default: built-in ranges)"),
    key(
        "swarm.objective",
        "example_f1",
        "Objective: example_f1, or constant (test hook)",
    ),
    key(
        "swarm.constant_value",
        "0.5",
        "Score returned by the constant objective",
    ),
    key("evaluate.predictions", "", "Prediction file to score"),
    key(
        "stats.input",
        "",
        "Replication file: one `approach score` pair per line",
    ),
    key(
        "stats.pooled",
        "false",
        "Use the pooled-variance t-test instead of Welch",
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    TrialAndError,
    PsoSelected,
    Custom,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "trial_and_error" => Ok(Preset::TrialAndError),
            "pso_selected" => Ok(Preset::PsoSelected),
            "custom" => Ok(Preset::Custom),
            other => Err(format!(
                "unknown preset {other:?} (trial_and_error, pso_selected, custom)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
    /// Keys set by a file or flag rather than by a default.
    explicit: BTreeSet<String>,
}

fn schema(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

impl Config {
    pub fn defaults() -> Self {
        Config {
            values: KEYS.iter().map(|k| (k.name.to_owned(), k.default.to_owned())).collect(),
            explicit: BTreeSet::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if schema(key).is_none() {
            return Err(CliError::Usage(format!("unknown configuration key {key:?}")));
        }
        self.values.insert(key.to_owned(), value.trim().to_owned());
        self.explicit.insert(key.to_owned());
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment line; a `[section]`
    /// line prefixes the keys that follow with `section.`.
    pub fn apply_text(&mut self, text: &str, source: &Path) -> Result<(), CliError> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = || format!("{}: line {}", source.display(), i + 1);
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_owned();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{}: expected `key = value`", at())))?;
            let k = k.trim();
            let full = if section.is_empty() {
                k.to_owned()
            } else {
                format!("{section}.{k}")
            };
            if full == "config" {
                return Err(CliError::Usage(format!("{}: config files cannot include others", at())));
            }
            self.set(&full, v)
                .map_err(|e| CliError::Usage(format!("{}: {e}", at())))?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("configuration key {key:?} is not in the schema"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| CliError::Usage(format!("{key}: cannot parse {v:?}: {e}")))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        let v = self.get(key);
        if v.is_empty() {
            return Err(CliError::Usage(format!("--{key} is required")));
        }
        Ok(PathBuf::from(v))
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn widths(&self, key: &str) -> Result<Vec<usize>, CliError> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{key}: bad layer width {s:?}")))
            })
            .collect()
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.parse("seed")
    }

    pub fn workers(&self) -> Result<usize, CliError> {
        let w: usize = self.parse("workers")?;
        Ok(if w == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            w
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    pub fn preset(&self) -> Result<Preset, CliError> {
        self.get("run.preset").parse().map_err(CliError::Usage)
    }

    /// Replaces `distill.*` with the preset's values. Explicit `distill.*`
    /// settings are only accepted with the custom preset.
    pub fn expand_preset(&mut self) -> Result<(), CliError> {
        let cfg: DistillConfig<f64> = match self.preset()? {
            Preset::Custom => return Ok(()),
            Preset::TrialAndError => DistillConfig::trial_and_error(),
            Preset::PsoSelected => DistillConfig::pso_selected(),
        };
        if let Some(k) = self.explicit.iter().find(|k| k.starts_with("distill.")) {
            return Err(CliError::Usage(format!(
                "{k} is set but run.preset = {}; use run.preset = custom to override preset values",
                self.get("run.preset")
            )));
        }
        for (k, v) in [
            ("distill.temperature", cfg.temperature.to_string()),
            ("distill.alpha", cfg.alpha.to_string()),
            ("distill.learning_rate", cfg.learning_rate.to_string()),
            ("distill.batch_size", cfg.batch_size.to_string()),
            ("distill.epochs", cfg.epochs.to_string()),
            ("distill.max_length", cfg.max_length.to_string()),
        ] {
            self.values.insert(k.to_owned(), v);
        }
        Ok(())
    }

    pub fn distill(&self) -> Result<DistillConfig<f64>, CliError> {
        let cfg = DistillConfig {
            temperature: self.parse("distill.temperature")?,
            alpha: self.parse("distill.alpha")?,
            learning_rate: self.parse("distill.learning_rate")?,
            batch_size: self.parse("distill.batch_size")?,
            epochs: self.parse("distill.epochs")?,
            max_length: self.parse("distill.max_length")?,
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }

    pub fn variant(&self) -> Result<Variant, CliError> {
        Variant::parse(self.get("run.mode")).map_err(CliError::usage)
    }

    pub fn mode(&self, variant: Variant) -> Result<TrainingMode<f64>, CliError> {
        let beta = if variant.is_contrastive() {
            Some(self.parse("run.contrastive_weight")?)
        } else {
            None
        };
        TrainingMode::new(variant, beta).map_err(CliError::usage)
    }

    fn encoder(&self, key: &str, role: Role, input_dim: usize) -> Result<EncoderSpec, CliError> {
        let spec = EncoderSpec {
            input_dim,
            hidden_sizes: self.widths(key)?,
            activation: Activation::parse(self.get("model.activation")).map_err(CliError::usage)?,
            role,
        };
        spec.validate().map_err(CliError::usage)?;
        Ok(spec)
    }

    /// Full training setup for `variant` over a corpus with `labels`.
    pub fn setup(&self, variant: Variant, labels: &[String]) -> Result<DistillSetup<f64>, CliError> {
        let dim: usize = self.parse("features.dim")?;
        let mut setup = DistillSetup::new(dim, self.distill()?, self.mode(variant)?, self.seed()?);
        setup.teacher = self.encoder("model.teacher_hidden", Role::Teacher, dim)?;
        setup.student = self.encoder("model.student_hidden", Role::Student, dim)?;
        setup.lr_scale = self.parse("run.lr_scale")?;
        setup.baseline_lr_scale = self.parse("run.baseline_lr_scale")?;
        setup.teacher_guidance = self.parse("run.teacher_guidance")?;
        let order = self.get("run.label_order");
        if !order.is_empty() {
            let indices = order
                .split(',')
                .map(|name| {
                    let name = name.trim();
                    labels
                        .iter()
                        .position(|l| l == name)
                        .ok_or_else(|| CliError::Usage(format!("run.label_order: unknown label {name:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            setup.label_order = Some(indices);
        }
        setup.validate().map_err(CliError::usage)?;
        Ok(setup)
    }

    pub fn synthetic(&self) -> Result<SyntheticConfig, CliError> {
        let cfg = SyntheticConfig {
            docs: self.parse("synthetic.docs")?,
            labels: self.parse("synthetic.labels")?,
            prevalence: self.parse("synthetic.prevalence")?,
            correlation: self.parse("synthetic.correlation")?,
            min_tokens: self.parse("synthetic.min_tokens")?,
            max_tokens: self.parse("synthetic.max_tokens")?,
            filler_vocab: self.parse("synthetic.filler_vocab")?,
            seed: self.seed()?,
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }

    pub fn swarm(&self, parallelism: usize) -> Result<SwarmConfig<f64>, CliError> {
        let cfg = SwarmConfig {
            particles: self.parse("swarm.particles")?,
            inertia: self.parse("swarm.inertia")?,
            cognitive: self.parse("swarm.cognitive")?,
            social: self.parse("swarm.social")?,
            max_iters: self.parse("swarm.max_iters")?,
            threshold: self.parse("swarm.threshold")?,
            relative_threshold: self.parse("swarm.relative_threshold")?,
            patience: self.parse("swarm.patience")?,
            seed: self.seed()?,
            parallelism,
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }

    pub fn space(&self) -> Result<HyperSpace<f64>, CliError> {
        match self.optional_path("swarm.space") {
            None => Ok(HyperSpace::standard()),
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| CliError::data("load space", e))?;
                HyperSpace::parse(&text).map_err(|e| CliError::data("load space", e))
            }
        }
    }

    /// Resolved `key = value` lines, execution keys omitted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            if !EXECUTION_KEYS.contains(&k.as_str()) {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}
