//! Run orchestration for the `modalign` binary: data sources, training runs,
//! run manifests and the exit-code contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use modalign_core::data::{gen_synthetic, load_jsonl, split_dataset, Dataset, SynthConfig, DEFAULT_SPLIT};
use modalign_core::metrics::MetricsReport;
use modalign_core::training::{Checkpoint, EpochSummary, Evaluation, TrainConfig, Trainer};
use modalign_core::{Error, ModalityId, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Manifest fields that depend on the clock rather than on the run inputs.
pub const TIMING_FIELDS: [&str; 1] = ["wall_clock_seconds"];

/// Modality pairs whose test-set covariance distance is tracked every epoch.
const TRACKED_PAIRS: [(ModalityId, ModalityId); 3] = [
    (ModalityId::Text, ModalityId::Audio),
    (ModalityId::Text, ModalityId::Vision),
    (ModalityId::Vision, ModalityId::Audio),
];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { label: String, config: SynthConfig },
    Jsonl(PathBuf),
}

impl DataSource {
    /// `gen:default`, `gen:<synth-config.json>` or `jsonl:<path>`.
    pub fn parse(flag: &str) -> Result<Self> {
        if let Some(rest) = flag.strip_prefix("gen:") {
            let config = if rest == "default" {
                SynthConfig::default()
            } else {
                let text = fs::read_to_string(rest).map_err(|e| Error::Config(format!("{rest}: {e}")))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{rest}: {e}")))?
            };
            config.validate()?;
            Ok(Self::Synthetic {
                label: flag.to_string(),
                config,
            })
        } else if let Some(path) = flag.strip_prefix("jsonl:") {
            Ok(Self::Jsonl(PathBuf::from(path)))
        } else {
            Err(Error::Config(format!(
                "data source `{flag}` must start with `gen:` or `jsonl:`"
            )))
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Synthetic { label, .. } => label.clone(),
            Self::Jsonl(path) => format!("jsonl:{}", path.display()),
        }
    }

    pub fn load(&self, config: &TrainConfig) -> Result<Dataset> {
        match self {
            Self::Synthetic { config: synth, .. } => gen_synthetic(synth),
            Self::Jsonl(path) => load_jsonl(path, &config.label_range),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    #[serde(flatten)]
    pub summary: EpochSummary,
    /// Test-set covariance distance per modality pair after this epoch.
    pub test_theta_share: BTreeMap<String, f64>,
    pub test_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: MetricsReport,
    pub valid: Option<MetricsReport>,
    pub test: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub revision: String,
    pub seed: u64,
    pub data_source: String,
    pub split_sizes: [usize; 3],
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub metrics: SplitMetrics,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    /// Test-set distance of a pair (`"V-A"` etc.) after a 1-based epoch.
    pub fn test_theta(&self, epoch: usize, pair: &str) -> Option<f64> {
        self.history.get(epoch.checked_sub(1)?)?.test_theta_share.get(pair).copied()
    }
}

pub struct RunOutput {
    pub manifest: RunManifest,
    pub checkpoint: Checkpoint,
}

pub fn revision() -> String {
    option_env!("MODALIGN_REVISION")
        .map(str::to_string)
        .unwrap_or_else(|| format!("modalign {}", env!("CARGO_PKG_VERSION")))
}

fn pair_key(a: ModalityId, b: ModalityId) -> String {
    format!("{}-{}", a.letter(), b.letter())
}

fn theta_table(eval: &Evaluation) -> Result<BTreeMap<String, f64>> {
    TRACKED_PAIRS
        .iter()
        .map(|&(a, b)| Ok((pair_key(a, b), eval.theta_share(a, b)?)))
        .collect()
}

/// Splits `data` with the config seed, trains for the configured number of
/// epochs and evaluates every split.
pub fn run_training(config: &TrainConfig, data: &Dataset, data_source: &str) -> Result<RunOutput> {
    let start = Instant::now();
    let (train, valid, test) = split_dataset(data, DEFAULT_SPLIT, config.seed)?;
    if test.len() < 2 {
        return Err(Error::Data(format!(
            "{} samples leave fewer than 2 for the test split",
            data.len()
        )));
    }
    let mut trainer = Trainer::new(config.clone(), &train)?;
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let summary = trainer.train_epoch(&train)?;
        let eval = trainer.evaluate(&test)?;
        history.push(EpochRecord {
            summary,
            test_theta_share: theta_table(&eval)?,
            test_mae: eval.metrics.mae,
        });
    }
    let metrics = SplitMetrics {
        train: trainer.evaluate(&train)?.metrics,
        valid: if valid.is_empty() {
            None
        } else {
            Some(trainer.evaluate(&valid)?.metrics)
        },
        test: trainer.evaluate(&test)?.metrics,
    };
    Ok(RunOutput {
        manifest: RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            revision: revision(),
            seed: config.seed,
            data_source: data_source.to_string(),
            split_sizes: [train.len(), valid.len(), test.len()],
            config: config.clone(),
            history,
            metrics,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        },
        checkpoint: trainer.checkpoint(),
    })
}

pub fn metrics_table(manifest: &RunManifest) -> String {
    let mut out = format!(
        "spec: {}\nseed: {}\nepochs: {}\n",
        if manifest.config.alignment_spec.is_empty() {
            "(none)"
        } else {
            &manifest.config.alignment_spec
        },
        manifest.seed,
        manifest.history.len()
    );
    let splits = [
        ("train", Some(&manifest.metrics.train)),
        ("valid", manifest.metrics.valid.as_ref()),
        ("test", Some(&manifest.metrics.test)),
    ];
    for (name, report) in splits {
        if let Some(report) = report {
            out.push_str(&format!("\n[{name}]\n{}", report.to_table()));
        }
    }
    out
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_run(out_dir: &Path, run: &RunOutput) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| io_error(&path, e))
    };
    write("manifest.json", to_pretty_json(&run.manifest)?)?;
    write("metrics.txt", metrics_table(&run.manifest))?;
    write("checkpoint.json", to_pretty_json(&run.checkpoint)?)?;
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

/// Drops clock-dependent fields so manifests of identical runs compare equal.
pub fn strip_timing(manifest: &str) -> Result<serde_json::Value> {
    let mut value: serde_json::Value =
        serde_json::from_str(manifest).map_err(|e| Error::Data(format!("manifest: {e}")))?;
    if let Some(obj) = value.as_object_mut() {
        for field in TIMING_FIELDS {
            obj.remove(field);
        }
    }
    Ok(value)
}

/// Comma-separated spec list; `none` or an empty entry means no alignment.
pub fn parse_sweep(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .map(|s| if s == "none" { String::new() } else { s.to_string() })
        .collect()
}

/// Directory name for one sweep entry.
pub fn sweep_dir_name(spec: &str) -> String {
    if spec.is_empty() {
        "none".to_string()
    } else {
        spec.replace('/', "_")
    }
}

pub fn default_out_dir(seed: u64) -> PathBuf {
    if let Some(dir) = std::env::var_os("MODALALIGN_OUT") {
        return PathBuf::from(dir);
    }
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    PathBuf::from("runs").join(format!("{stamp}-{seed}"))
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let config: TrainConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Short tag used in the `error[<kind>]:` prefix.
pub fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Parse { .. } => "parse",
        Error::Config(_) => "config",
        Error::DegenerateBatch { .. } => "degenerate-batch",
        Error::Dimension { .. } => "dimension",
        Error::Data(_) => "data",
        Error::Io(_) => "io",
        Error::NonFinite { .. } => "non-finite",
        Error::NoConvergence { .. } => "no-convergence",
        Error::NotSymmetric { .. } | Error::NotSquare { .. } | Error::NotPsd { .. } => "matrix",
        Error::Contract(_) => "contract",
    }
}

/// 2 configuration, 3 data, 4 numeric abort.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } | Error::Config(_) => 2,
        Error::NonFinite { .. } | Error::NoConvergence { .. } => 4,
        _ => 3,
    }
}

/// Single-line, machine-parsable error message.
pub fn error_line(err: &Error) -> String {
    let msg = err.to_string().replace('\n', " ");
    format!("error[{}]: {msg}", error_kind(err))
}
