//! Central finite-difference checks of every hand-written gradient path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::alignment::{directive_loss, parse_alignment_spec, DirectiveKind};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::model::{ModelDims, ModelParams};
use crate::verify::{CheckResult, VerifyReport};

use super::config::OmegaReference;
use super::objective::{compute_losses, BatchOutputs, ObjectiveSettings};

pub const FD_STEP: f64 = 1e-5;
pub const ALIGNMENT_TOL: f64 = 1e-6;
pub const COMPOSITE_TOL: f64 = 1e-4;
const DENOM_FLOOR: f64 = 1e-8;

/// `max_j |a_j − n_j| / max(|a_j|, |n_j|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(DENOM_FLOOR))
        .fold(0.0, f64::max)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn fd_matrix(m: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut probe = m.clone();
    let mut g = Matrix::zeros(m.rows(), m.cols());
    for k in 0..m.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + FD_STEP;
        let plus = f(&probe);
        probe.as_mut_slice()[k] = orig - FD_STEP;
        let minus = f(&probe);
        probe.as_mut_slice()[k] = orig;
        g.as_mut_slice()[k] = (plus - minus) / (2.0 * FD_STEP);
    }
    g
}

/// Both directive gradients over 20 random `(N, d)` instances.
fn alignment_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (k, kind) in [DirectiveKind::Shared, DirectiveKind::Private].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let n = rng.random_range(2..=8);
            let d = rng.random_range(1..=6);
            let m_a = gaussian(&mut rng, n, d);
            let m_v = gaussian(&mut rng, n, d);
            // a cap above any reachable value keeps the private branch unsaturated
            let cap = 1e6;
            let dl = directive_loss(kind, &m_a, &m_v, cap)?;
            let value = |a: &Matrix, v: &Matrix| directive_loss(kind, a, v, cap).map(|l| l.value).unwrap_or(f64::NAN);
            let na = fd_matrix(&m_a, |a| value(a, &m_v));
            let nv = fd_matrix(&m_v, |v| value(&m_a, v));
            worst = worst
                .max(max_relative_error(dl.grad_first.as_slice(), na.as_slice()))
                .max(max_relative_error(dl.grad_second.as_slice(), nv.as_slice()));
        }
        let name = match kind {
            DirectiveKind::Shared => "alignment.shared",
            DirectiveKind::Private => "alignment.private",
        };
        out.push(CheckResult::new(name, worst, ALIGNMENT_TOL));
    }
    Ok(out)
}

/// A tiny model, batch and frozen label set exercising every loss term.
pub struct CompositeProblem {
    pub params: ModelParams,
    pub inputs: Vec<[Matrix; 3]>,
    pub y_gt: Vec<f64>,
    pub labels: Vec<[f64; 3]>,
    pub settings: ObjectiveSettings,
    pub spec: crate::alignment::AlignmentSpec,
}

impl CompositeProblem {
    pub fn new(seed: u64) -> Result<Self> {
        let dims = ModelDims {
            step_dims: [3, 2, 2],
            d_t: 3,
            d_a: 3,
            d_v: 3,
            d_all: 4,
            d: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let mut params = ModelParams::init(&dims, seed)?;
        // nonzero biases keep ReLU units away from the kink
        for (name, block) in params.blocks_mut() {
            if name.ends_with(".b") {
                block.iter_mut().for_each(|b| *b += rng.random_range(-0.3..0.3));
            }
        }
        let batch = 5;
        let inputs = (0..batch)
            .map(|_| [gaussian(&mut rng, 3, 3), gaussian(&mut rng, 4, 2), gaussian(&mut rng, 4, 2)])
            .collect();
        let y_gt = (0..batch).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = (0..batch).map(|_| [0; 3].map(|_| rng.random_range(-2.5..2.5))).collect();
        Ok(Self {
            params,
            inputs,
            y_gt,
            labels,
            settings: ObjectiveSettings {
                alignment_weight: 1.0,
                directive_weights: vec![1.0, 0.7],
                private_cap: 10.0,
                omega_reference: OmegaReference::Prediction,
                unimodal: true,
            },
            spec: parse_alignment_spec("V-A/T+A")?,
        })
    }

    pub fn loss(&self, params: &ModelParams) -> Result<f64> {
        let traces = self
            .inputs
            .iter()
            .map(|x| params.forward([&x[0], &x[1], &x[2]]))
            .collect::<Result<Vec<_>>>()?;
        let out = BatchOutputs::from_traces(&traces)?;
        Ok(compute_losses(&out, &self.y_gt, &self.labels, &self.spec, &self.settings)?.0.total)
    }

    pub fn gradient(&self, params: &ModelParams) -> Result<ModelParams> {
        let traces = self
            .inputs
            .iter()
            .map(|x| params.forward([&x[0], &x[1], &x[2]]))
            .collect::<Result<Vec<_>>>()?;
        let out = BatchOutputs::from_traces(&traces)?;
        let (_, upstream) = compute_losses(&out, &self.y_gt, &self.labels, &self.spec, &self.settings)?;
        let mut grads = params.zeros_like();
        for (trace, up) in traces.iter().zip(&upstream) {
            params.backward(trace, up, &mut grads)?;
        }
        Ok(grads)
    }

    /// Central differences of the total loss for every parameter.
    pub fn numeric_gradient(&self) -> Result<ModelParams> {
        let mut probe = self.params.clone();
        let mut numeric = self.params.zeros_like();
        let n_blocks = probe.blocks().len();
        for b in 0..n_blocks {
            for j in 0..probe.blocks()[b].1.len() {
                let orig = probe.blocks()[b].1[j];
                probe.blocks_mut()[b].1[j] = orig + FD_STEP;
                let plus = self.loss(&probe)?;
                probe.blocks_mut()[b].1[j] = orig - FD_STEP;
                let minus = self.loss(&probe)?;
                probe.blocks_mut()[b].1[j] = orig;
                numeric.blocks_mut()[b].1[j] = (plus - minus) / (2.0 * FD_STEP);
            }
        }
        Ok(numeric)
    }
}

const GROUPS: [(&str, &[&str]); 5] = [
    ("composite.text_encoder", &["text."]),
    ("composite.audio_encoder", &["audio."]),
    ("composite.vision_encoder", &["vision."]),
    ("composite.fusion", &["fusion.", "head_all."]),
    ("composite.unimodal_heads", &["projection_", "head_t.", "head_a.", "head_v."]),
];

fn composite_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let problem = CompositeProblem::new(seed)?;
    let analytic = problem.gradient(&problem.params)?;
    let numeric = problem.numeric_gradient()?;
    let per_block: Vec<(&str, f64)> = analytic
        .blocks()
        .into_iter()
        .zip(numeric.blocks())
        .map(|((name, a), (_, n))| (name, max_relative_error(a, n)))
        .collect();
    let mut out: Vec<CheckResult> = GROUPS
        .iter()
        .map(|(group, prefixes)| {
            let err = per_block
                .iter()
                .filter(|(name, _)| prefixes.iter().any(|p| name.starts_with(p)))
                .map(|(_, e)| *e)
                .fold(0.0, f64::max);
            CheckResult::new(group, err, COMPOSITE_TOL)
        })
        .collect();
    let total = per_block.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    out.push(CheckResult::new("composite.total", total, COMPOSITE_TOL));

    // labels enter the objective as constants: a perturbed forward pass and
    // its gradient leave them untouched
    let labels_before = problem.labels.clone();
    let mut shifted = problem.params.clone();
    shifted.add_scaled(&analytic, -0.1)?;
    problem.loss(&shifted)?;
    problem.gradient(&shifted)?;
    let drift = labels_before
        .iter()
        .flatten()
        .zip(problem.labels.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.push(CheckResult::new("ulgm.labels_constant", drift, 0.0));
    Ok(out)
}

/// Runs every gradient check on seeded instances.
pub fn gradcheck(seed: u64) -> Result<VerifyReport> {
    let mut checks = alignment_checks(seed)?;
    checks.extend(composite_checks(seed)?);
    Ok(VerifyReport::new("gradcheck", checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_definition() {
        assert_eq!(max_relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((max_relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
        assert!((max_relative_error(&[1e-12], &[0.0]) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn default_seed_passes() {
        let report = gradcheck(0).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.checks.len(), 9);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let problem = CompositeProblem::new(3).unwrap();
        let mut analytic = problem.gradient(&problem.params).unwrap();
        let w = analytic.fusion.w.as_mut_slice();
        let k = (0..w.len()).max_by(|&i, &j| w[i].abs().total_cmp(&w[j].abs())).unwrap();
        w[k] *= 1.01;
        let numeric = problem.numeric_gradient().unwrap();
        assert!(max_relative_error(analytic.fusion.w.as_slice(), numeric.fusion.w.as_slice()) > COMPOSITE_TOL);
    }
}
