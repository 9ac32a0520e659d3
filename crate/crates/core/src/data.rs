//! Datasets: synthetic planted-latent generation, JSONL ingestion, splits.
//!
//! The synthetic generator draws a shared latent `z ~ N(0, I_k)` and a private
//! latent `p_m` per modality. Every step of modality `m` is a fixed random
//! linear map of `(g_m·z, p_m)` plus Gaussian noise, and the label is a linear
//! read-out of `z` and the privates. Because the mixing is linear and the
//! latents Gaussian, the structure shared by two modalities lives entirely in
//! their second-order statistics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::modality::ModalityId;
use crate::ulgm::LabelRange;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Step-major sequences for `[T, A, V]`.
    pub modalities: [Matrix; 3],
    pub label: f64,
}

impl Sample {
    pub fn inputs(&self) -> [&Matrix; 3] {
        [&self.modalities[0], &self.modalities[1], &self.modalities[2]]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Per-step widths of `[T, A, V]`, checked to agree across samples.
    pub fn step_dims(&self) -> Result<[usize; 3]> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::Data("dataset is empty".into()))?;
        let dims = first.modalities.clone().map(|m| m.cols());
        for s in &self.samples {
            for m in ModalityId::ALL {
                let seq = &s.modalities[m.index()];
                if seq.cols() != dims[m.index()] || seq.rows() == 0 {
                    return Err(Error::Data(format!(
                        "sample {}: {} is {}x{}, expected steps x {}",
                        s.id,
                        m.name(),
                        seq.rows(),
                        seq.cols(),
                        dims[m.index()]
                    )));
                }
            }
        }
        Ok(dims)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub samples: usize,
    /// `k`, width of the shared latent.
    pub shared_dim: usize,
    /// Private latent widths for `[T, A, V]`.
    pub private_dims: [usize; 3],
    pub seq_lens: [usize; 3],
    pub step_dims: [usize; 3],
    /// Label weight on the shared latent.
    pub shared_strength: f64,
    /// Label weight on each modality's private latent.
    pub private_strengths: [f64; 3],
    /// How strongly the shared latent enters each modality's sequence.
    pub shared_gains: [f64; 3],
    /// Standard deviation of sequence and label noise.
    pub noise: f64,
    pub label_range: LabelRange,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            samples: 500,
            shared_dim: 4,
            private_dims: [3, 3, 3],
            seq_lens: [6, 8, 8],
            step_dims: [8, 6, 6],
            shared_strength: 1.0,
            private_strengths: [0.4, 0.4, 0.4],
            shared_gains: [1.0, 1.0, 1.0],
            noise: 0.1,
            label_range: LabelRange::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.samples >= 1
            && self.shared_dim >= 1
            && self.private_dims.iter().all(|&d| d >= 1)
            && self.seq_lens.iter().all(|&d| d >= 1)
            && self.step_dims.iter().all(|&d| d >= 1);
        if !dims_ok {
            return Err(Error::Config("synthetic dimensions must all be at least 1".into()));
        }
        let strengths = std::iter::once(self.shared_strength)
            .chain(self.private_strengths)
            .chain(self.shared_gains);
        if strengths.into_iter().any(|s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("synthetic strengths must be finite and non-negative".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise level must be non-negative".into()));
        }
        LabelRange::new(self.label_range.min, self.label_range.max)?;
        Ok(())
    }
}

/// Fixed random structure of a synthetic dataset, shared by all samples.
struct Mixing {
    /// Unit read-out directions: shared latent, then one per modality.
    shared_readout: Vec<f64>,
    private_readout: [Vec<f64>; 3],
    /// Per modality, per step: `step_dim × (k + p_m)`.
    step_maps: [Vec<Matrix>; 3],
}

fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x / norm).collect()
}

impl Mixing {
    fn draw(cfg: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let shared_readout = unit_vector(&mut rng, cfg.shared_dim);
        let private_readout = cfg.private_dims.map(|p| unit_vector(&mut rng, p));
        let step_maps = [0, 1, 2].map(|m| {
            let width = cfg.shared_dim + cfg.private_dims[m];
            let scale = 1.0 / (width as f64).sqrt();
            (0..cfg.seq_lens[m])
                .map(|_| {
                    Matrix::from_fn(cfg.step_dims[m], width, |_, _| {
                        scale * rng.sample::<f64, _>(StandardNormal)
                    })
                })
                .collect()
        });
        Self {
            shared_readout,
            private_readout,
            step_maps,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gen_sample(cfg: &SynthConfig, mixing: &Mixing, index: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let z = normal(cfg.shared_dim);
    let privates = cfg.private_dims.map(&mut normal);

    let modalities = [0, 1, 2].map(|m| {
        let mut latent: Vec<f64> = z.iter().map(|v| cfg.shared_gains[m] * v).collect();
        latent.extend_from_slice(&privates[m]);
        let mut rows = Vec::with_capacity(cfg.seq_lens[m]);
        for map in &mixing.step_maps[m] {
            let clean = map.matvec(&latent).expect("mixing shape");
            let noise = normal(clean.len());
            rows.push(
                clean
                    .iter()
                    .zip(&noise)
                    .map(|(c, e)| c + cfg.noise * e)
                    .collect::<Vec<f64>>(),
            );
        }
        Matrix::from_rows(&rows).expect("rectangular sequence")
    });

    let mut label = cfg.shared_strength * dot(&mixing.shared_readout, &z);
    for m in 0..3 {
        label += cfg.private_strengths[m] * dot(&mixing.private_readout[m], &privates[m]);
    }
    label += cfg.noise * normal(1)[0];
    Sample {
        id: format!("synth-{index:06}"),
        modalities,
        label: cfg.label_range.clamp(label),
    }
}

/// Deterministic given `cfg.seed`; sample `i` draws from its own stream, so
/// the output does not depend on generation order.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mixing = Mixing::draw(cfg);
    Ok(Dataset::new((0..cfg.samples).map(|i| gen_sample(cfg, &mixing, i)).collect()))
}

/// Latents behind a synthetic dataset, for oracle checks.
pub fn synthetic_latents(cfg: &SynthConfig) -> Result<Vec<(Vec<f64>, [Vec<f64>; 3])>> {
    cfg.validate()?;
    Ok((0..cfg.samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
            let z = normal(cfg.shared_dim);
            let privates = cfg.private_dims.map(&mut normal);
            (z, privates)
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: Option<serde_json::Value>,
    label: Option<f64>,
    text: Option<Vec<Vec<f64>>>,
    audio: Option<Vec<Vec<f64>>>,
    vision: Option<Vec<Vec<f64>>>,
}

fn parse_record(line_no: usize, line: &str, range: &LabelRange) -> Result<Sample> {
    let record: Record = serde_json::from_str(line)
        .map_err(|e| Error::Data(format!("line {line_no}: malformed record: {e}")))?;
    let id = match record.id {
        Some(serde_json::Value::String(s)) => s,
        Some(v @ serde_json::Value::Number(_)) => v.to_string(),
        Some(_) => return Err(Error::Data(format!("line {line_no}: schema error: `id` must be a string or number"))),
        None => return Err(Error::Data(format!("line {line_no}: schema error: missing `id`"))),
    };
    let label = record
        .label
        .ok_or_else(|| Error::Data(format!("line {line_no}: schema error: missing `label`")))?;
    if !range.contains(label) {
        return Err(Error::Data(format!(
            "line {line_no}: range error: label {label} outside [{}, {}]",
            range.min, range.max
        )));
    }
    let mut seqs = [record.text, record.audio, record.vision];
    let mut modalities: [Option<Matrix>; 3] = Default::default();
    for m in ModalityId::ALL {
        let rows = seqs[m.index()]
            .take()
            .ok_or_else(|| Error::Data(format!("line {line_no}: schema error: missing modality `{}`", m.name())))?;
        if rows.is_empty() {
            return Err(Error::Data(format!("line {line_no}: schema error: `{}` has no steps", m.name())));
        }
        let seq = Matrix::from_rows(&rows)
            .map_err(|_| Error::Data(format!("line {line_no}: schema error: `{}` rows differ in length", m.name())))?;
        if !seq.is_finite() {
            return Err(Error::Data(format!("line {line_no}: `{}` contains non-finite values", m.name())));
        }
        modalities[m.index()] = Some(seq);
    }
    Ok(Sample {
        id,
        modalities: modalities.map(|m| m.expect("filled above")),
        label,
    })
}

/// One JSON object per line: `{"id", "label", "text", "audio", "vision"}`,
/// each modality a step-major array of arrays. Blank lines are skipped.
pub fn load_jsonl(path: impl AsRef<Path>, range: &LabelRange) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Data(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(parse_record(i + 1, &line, range)?);
    }
    let dataset = Dataset::new(samples);
    dataset.step_dims()?;
    Ok(dataset)
}

pub fn write_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in &dataset.samples {
        let rows = |m: &Matrix| -> Vec<Vec<f64>> { (0..m.rows()).map(|i| m.row(i).to_vec()).collect() };
        let record = Record {
            id: Some(serde_json::Value::String(s.id.clone())),
            label: Some(s.label),
            text: Some(rows(&s.modalities[0])),
            audio: Some(rows(&s.modalities[1])),
            vision: Some(rows(&s.modalities[2])),
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.1, 0.2];

/// Seeded disjoint train/valid/test partition.
pub fn split_dataset(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_valid = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let (train, rest) = order.split_at(n_train);
    let (valid, test) = rest.split_at(n_valid);
    Ok((dataset.subset(train), dataset.subset(valid), dataset.subset(test)))
}
