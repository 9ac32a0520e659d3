//! Self-supervised unimodal label generation.
//!
//! Each source (the fused representation and the three projected unimodal
//! representations) gets a positive and a negative class center. A sample's
//! relative offset in a space is how much closer it sits to the positive
//! center than to the negative one, normalized into `(−1, 1)`. A unimodal
//! label is the multimodal label shifted by the difference between the
//! unimodal and the multimodal offset, then smoothed over generation events
//! with weights proportional to the event index.
//!
//! Labels produced here are constants for the optimizer; nothing in this
//! module is differentiated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::modality::ModalityId;

/// Added to the distance sum in [`relative_offset`].
pub const OFFSET_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRange {
    pub min: f64,
    pub max: f64,
}

impl LabelRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Config(format!("invalid label range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    /// Half the range width; the default label shift scale.
    pub fn default_beta(&self) -> f64 {
        (self.max - self.min) / 2.0
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

impl Default for LabelRange {
    fn default() -> Self {
        Self { min: -3.0, max: 3.0 }
    }
}

/// Positive and negative class centers of one representation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCenter {
    pub positive: Option<Vec<f64>>,
    pub negative: Option<Vec<f64>>,
    pub positive_count: usize,
    pub negative_count: usize,
}

impl ClassCenter {
    /// Mean feature of samples labeled `> 0` and of samples labeled `< 0`.
    /// Zero labels are ignored; an empty side is absent.
    pub fn from_features(features: &Matrix, labels: &[f64]) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Contract("class centers need at least one sample".into()));
        }
        if features.rows() != labels.len() {
            return Err(Error::Dimension {
                op: "update_centers",
                left: features.shape(),
                right: (labels.len(), 1),
            });
        }
        let dim = features.cols();
        let mut pos = vec![0.0; dim];
        let mut neg = vec![0.0; dim];
        let (mut n_pos, mut n_neg) = (0usize, 0usize);
        for (i, &y) in labels.iter().enumerate() {
            let (acc, count) = if y > 0.0 {
                (&mut pos, &mut n_pos)
            } else if y < 0.0 {
                (&mut neg, &mut n_neg)
            } else {
                continue;
            };
            acc.iter_mut().zip(features.row(i)).for_each(|(a, f)| *a += f);
            *count += 1;
        }
        let finish = |mut acc: Vec<f64>, n: usize| {
            (n > 0).then(|| {
                acc.iter_mut().for_each(|a| *a /= n as f64);
                acc
            })
        };
        Ok(Self {
            positive: finish(pos, n_pos),
            negative: finish(neg, n_neg),
            positive_count: n_pos,
            negative_count: n_neg,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCenters {
    pub all: ClassCenter,
    /// `[T, A, V]`
    pub unimodal: [ClassCenter; 3],
}

/// One epoch's cached representations for every training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSnapshot {
    /// `n × d_all`, the fused `F_all*`.
    pub fused: Matrix,
    /// `n × d` per modality, the projected `F_s*`.
    pub projected: [Matrix; 3],
}

impl ClassCenters {
    /// Fused centers use the ground-truth labels, unimodal centers use each
    /// modality's current generated labels.
    pub fn compute(snapshot: &FeatureSnapshot, store: &LabelStore) -> Result<Self> {
        let all = ClassCenter::from_features(&snapshot.fused, &store.ground_truth)?;
        let mut unimodal: [Option<ClassCenter>; 3] = Default::default();
        for m in ModalityId::ALL {
            let labels = store.labels_for(m);
            unimodal[m.index()] = Some(ClassCenter::from_features(&snapshot.projected[m.index()], &labels)?);
        }
        Ok(Self {
            all,
            unimodal: unimodal.map(|c| c.expect("filled above")),
        })
    }
}

fn scaled_distance(f: &[f64], center: &[f64]) -> f64 {
    let sq: f64 = f.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    (sq / f.len().max(1) as f64).sqrt()
}

/// `(D_n − D_p) / (D_p + D_n + ε)` with `D = ‖f − center‖₂/√dim`; zero when
/// either center is absent.
pub fn relative_offset(feature: &[f64], center: &ClassCenter) -> f64 {
    match (&center.positive, &center.negative) {
        (Some(p), Some(n)) => {
            let dp = scaled_distance(feature, p);
            let dn = scaled_distance(feature, n);
            (dn - dp) / (dp + dn + OFFSET_EPS)
        }
        _ => 0.0,
    }
}

/// `clamp(y_gt + β·(α_s − α_all))` into the label range.
pub fn generate_label(alpha_s: f64, alpha_all: f64, y_gt: f64, beta: f64, range: &LabelRange) -> f64 {
    range.clamp(y_gt + beta * (alpha_s - alpha_all))
}

/// `((t−1)/(t+1))·old + (2/(t+1))·new_raw`, `t ≥ 1` being the generation
/// index. Unrolled, generation `k` carries weight `2k/(t(t+1))`. Evaluated as
/// `old + (2/(t+1))·(new_raw − old)` so a constant stream is reproduced exactly.
pub fn momentum_update(old: f64, new_raw: f64, t: u64) -> Result<f64> {
    if t < 1 {
        return Err(Error::Contract("momentum update index must be at least 1".into()));
    }
    if t == 1 {
        return Ok(new_raw);
    }
    let t = t as f64;
    Ok(old + 2.0 / (t + 1.0) * (new_raw - old))
}

/// Generated unimodal labels for every training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStore {
    pub range: LabelRange,
    pub ground_truth: Vec<f64>,
    /// Per sample, `[T, A, V]`.
    pub labels: Vec<[f64; 3]>,
    /// Generation events applied per sample and modality.
    pub updates: Vec<[u64; 3]>,
}

impl LabelStore {
    /// Starts every unimodal label at the multimodal ground truth.
    pub fn new(ground_truth: Vec<f64>, range: LabelRange) -> Result<Self> {
        if let Some(bad) = ground_truth.iter().find(|&&y| !range.contains(y)) {
            return Err(Error::Data(format!(
                "label {bad} outside [{}, {}]",
                range.min, range.max
            )));
        }
        let n = ground_truth.len();
        Ok(Self {
            range,
            labels: ground_truth.iter().map(|&y| [y; 3]).collect(),
            ground_truth,
            updates: vec![[0; 3]; n],
        })
    }

    pub fn len(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground_truth.is_empty()
    }

    pub fn label(&self, sample: usize, m: ModalityId) -> f64 {
        self.labels[sample][m.index()]
    }

    pub fn labels_for(&self, m: ModalityId) -> Vec<f64> {
        self.labels.iter().map(|l| l[m.index()]).collect()
    }

    /// Folds a freshly generated label into the momentum average.
    pub fn apply(&mut self, sample: usize, m: ModalityId, raw: f64) -> Result<f64> {
        let s = m.index();
        let t = self.updates[sample][s] + 1;
        let next = self.range.clamp(momentum_update(self.labels[sample][s], raw, t)?);
        self.labels[sample][s] = next;
        self.updates[sample][s] = t;
        Ok(next)
    }

    /// Recomputes centers from `snapshot` and regenerates every unimodal label.
    pub fn regenerate(&mut self, snapshot: &FeatureSnapshot, beta: f64) -> Result<ClassCenters> {
        if snapshot.fused.rows() != self.len() || snapshot.projected.iter().any(|p| p.rows() != self.len()) {
            return Err(Error::Dimension {
                op: "regenerate",
                left: snapshot.fused.shape(),
                right: (self.len(), 0),
            });
        }
        let centers = ClassCenters::compute(snapshot, self)?;
        for i in 0..self.len() {
            let alpha_all = relative_offset(snapshot.fused.row(i), &centers.all);
            for m in ModalityId::ALL {
                let s = m.index();
                let alpha_s = relative_offset(snapshot.projected[s].row(i), &centers.unimodal[s]);
                let raw = generate_label(alpha_s, alpha_all, self.ground_truth[i], beta, &self.range);
                self.apply(i, m, raw)?;
            }
        }
        Ok(centers)
    }

    /// Fraction of (sample, modality) labels farther than `threshold` from
    /// the ground truth.
    pub fn fraction_moved(&self, threshold: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let moved = self
            .labels
            .iter()
            .zip(&self.ground_truth)
            .flat_map(|(l, &y)| l.iter().map(move |v| (v - y).abs() > threshold))
            .filter(|&m| m)
            .count();
        moved as f64 / (3 * self.len()) as f64
    }

    /// Fraction of samples with at least one label farther than `threshold`
    /// from the ground truth.
    pub fn fraction_samples_moved(&self, threshold: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let moved = self
            .labels
            .iter()
            .zip(&self.ground_truth)
            .filter(|(l, &y)| l.iter().any(|v| (v - y).abs() > threshold))
            .count();
        moved as f64 / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn center(p: Option<Vec<f64>>, n: Option<Vec<f64>>) -> ClassCenter {
        ClassCenter {
            positive_count: p.is_some() as usize,
            negative_count: n.is_some() as usize,
            positive: p,
            negative: n,
        }
    }

    #[test]
    fn single_positive_sample() {
        let f = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let c = ClassCenter::from_features(&f, &[0.5]).unwrap();
        assert_eq!(c.positive, Some(vec![1.0, 2.0]));
        assert_eq!(c.negative, None);
        assert_eq!(relative_offset(&[1.0, 2.0], &c), 0.0);
    }

    #[test]
    fn two_positives_average() {
        let f = Matrix::from_rows(&[[1.0, 2.0], [3.0, 6.0]]).unwrap();
        let c = ClassCenter::from_features(&f, &[1.0, 2.0]).unwrap();
        assert_eq!(c.positive, Some(vec![2.0, 4.0]));
        assert_eq!(c.positive_count, 2);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(ClassCenter::from_features(&Matrix::zeros(0, 2), &[]).is_err());
        assert!(ClassCenter::from_features(&Matrix::zeros(2, 2), &[1.0]).is_err());
    }

    #[test]
    fn zero_labels_are_excluded() {
        let f = Matrix::from_rows(&[[1.0], [5.0], [-3.0]]).unwrap();
        let c = ClassCenter::from_features(&f, &[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(c.positive, Some(vec![1.0]));
        assert_eq!(c.negative, Some(vec![-3.0]));
        assert_eq!((c.positive_count, c.negative_count), (1, 1));
    }

    #[test]
    fn centers_match_group_by_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let f = Matrix::from_fn(40, 3, |_, _| rng.random_range(-2.0..2.0));
        let labels: Vec<f64> = (0..40).map(|i| [-1.5, 0.0, 2.0, 0.3][i % 4]).collect();
        let c = ClassCenter::from_features(&f, &labels).unwrap();
        let mut groups: BTreeMap<i8, (Vec<f64>, usize)> = BTreeMap::new();
        for (i, &y) in labels.iter().enumerate() {
            let key = if y > 0.0 { 1 } else if y < 0.0 { -1 } else { 0 };
            let e = groups.entry(key).or_insert((vec![0.0; 3], 0));
            for j in 0..3 {
                e.0[j] += f[(i, j)];
            }
            e.1 += 1;
        }
        for (key, got) in [(1, &c.positive), (-1, &c.negative)] {
            let (sum, n) = &groups[&key];
            for (g, s) in got.as_ref().unwrap().iter().zip(sum) {
                assert!((g - s / *n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn offset_on_positive_center() {
        let c = center(Some(vec![0.0, 0.0]), Some(vec![2.0, 0.0]));
        let dn = 2.0 / 2f64.sqrt();
        assert_eq!(relative_offset(&[0.0, 0.0], &c), dn / (dn + OFFSET_EPS));
    }

    #[test]
    fn offset_equidistant_is_zero() {
        let c = center(Some(vec![1.0, 0.0]), Some(vec![-1.0, 0.0]));
        assert_eq!(relative_offset(&[0.0, 5.0], &c), 0.0);
    }

    #[test]
    fn offset_hand_instance() {
        // one-dimensional: D_p = 1, D_n = 3
        let c = center(Some(vec![1.0]), Some(vec![-3.0]));
        let a = relative_offset(&[0.0], &c);
        assert_eq!(a, 2.0 / (4.0 + OFFSET_EPS));
        assert!((a - 0.5).abs() < 1e-8);
    }

    #[test]
    fn label_generation() {
        let r = LabelRange::default();
        assert_eq!(generate_label(0.3, 0.3, 1.2, 3.0, &r), 1.2);
        assert_eq!(generate_label(0.7, 0.2, 1.0, 3.0, &r), 2.5);
        assert_eq!(generate_label(1.0, 0.0, 2.8, 3.0, &r), 3.0);
        assert_eq!(r.default_beta(), 3.0);
    }

    #[test]
    fn momentum_two_step_stream() {
        let y1 = momentum_update(123.0, 1.0, 1).unwrap();
        assert_eq!(y1, 1.0);
        let y2 = momentum_update(y1, 2.0, 2).unwrap();
        assert!((y2 - 5.0 / 3.0).abs() < 1e-15);
        assert!(momentum_update(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn momentum_constant_stream_fixed_point() {
        let mut y = 0.0;
        for t in 1..=50 {
            y = momentum_update(y, 0.7, t).unwrap();
            assert_eq!(y, 0.7);
        }
    }

    #[test]
    fn momentum_weights_proportional_to_index() {
        // track the coefficient vector of every generated label symbolically
        for t in 1..=10u64 {
            let mut coeffs: Vec<f64> = Vec::new();
            for k in 1..=t {
                let kf = k as f64;
                coeffs.iter_mut().for_each(|c| *c *= (kf - 1.0) / (kf + 1.0));
                coeffs.push(2.0 / (kf + 1.0));
            }
            let tf = t as f64;
            for (k, c) in coeffs.iter().enumerate() {
                let expected = 2.0 * (k as f64 + 1.0) / (tf * (tf + 1.0));
                assert!((c - expected).abs() < 1e-12);
            }
            assert!((coeffs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn store_rejects_out_of_range_truth() {
        assert!(LabelStore::new(vec![0.0, 3.5], LabelRange::default()).is_err());
    }

    #[test]
    fn identical_representations_reproduce_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 30;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let fused = Matrix::from_fn(n, 4, |_, _| rng.random_range(0.0..1.0));
        let snapshot = FeatureSnapshot {
            fused: fused.clone(),
            projected: [fused.clone(), fused.clone(), fused],
        };
        let mut store = LabelStore::new(y.clone(), LabelRange::default()).unwrap();
        for _ in 0..3 {
            store.regenerate(&snapshot, 3.0).unwrap();
        }
        for (l, g) in store.labels.iter().zip(&y) {
            assert!(l.iter().all(|v| (v - g).abs() < 1e-12));
        }
        assert_eq!(store.updates[0], [3, 3, 3]);
    }

    proptest! {
        #[test]
        fn offset_bounded_and_antisymmetric(
            f in prop::collection::vec(-5.0f64..5.0, 3),
            p in prop::collection::vec(-5.0f64..5.0, 3),
            n in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let c = center(Some(p.clone()), Some(n.clone()));
            let swapped = center(Some(n), Some(p));
            let a = relative_offset(&f, &c);
            prop_assert!(a > -1.0 && a < 1.0);
            prop_assert!((a + relative_offset(&f, &swapped)).abs() < 1e-15);
        }

        #[test]
        fn generated_labels_stay_in_range(
            a in -1.0f64..1.0, b in -1.0f64..1.0, y in -3.0f64..3.0, beta in 0.0f64..10.0,
        ) {
            let r = LabelRange::default();
            let v = generate_label(a, b, y, beta, &r);
            prop_assert!(r.contains(v));
        }
    }
}
