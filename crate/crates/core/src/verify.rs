//! Oracle suites behind `modalign verify`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::alignment::optimal_map;
use crate::error::{Error, Result};
use crate::linalg::{psd_eig, Matrix};
use crate::ulgm::momentum_update;

pub const OPTIMAL_MAP_TOL: f64 = 1e-8;
pub const MOMENTUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    /// Passes when `max_error ≤ tolerance`; NaN never passes.
    pub fn new(name: &str, max_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: String,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn new(suite: &str, checks: Vec<CheckResult>) -> Self {
        Self {
            suite: suite.to_string(),
            checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<38} max_error {:.3e}  tolerance {:.1e}",
                if c.passed { "PASS" } else { "FAIL" },
                format!("{}/{}", self.suite, c.name),
                c.max_error,
                c.tolerance
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    OptimalMap,
    Ulgm,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradcheck" => Ok(Self::Gradcheck),
            "optimal-map" => Ok(Self::OptimalMap),
            "ulgm" => Ok(Self::Ulgm),
            other => Err(Error::Config(format!(
                "unknown suite `{other}` (expected gradcheck, optimal-map or ulgm)"
            ))),
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<VerifyReport> {
    match suite {
        Suite::Gradcheck => crate::training::gradcheck(seed),
        Suite::OptimalMap => optimal_map_suite(seed),
        Suite::Ulgm => Ok(ulgm_suite()),
    }
}

/// `B Bᵀ` with `B` a `d × r` standard normal matrix, plus `shift·I`.
fn random_psd(rng: &mut ChaCha8Rng, d: usize, r: usize, shift: f64) -> Matrix {
    let b = Matrix::from_fn(d, r, |_, _| rng.sample(StandardNormal));
    let mut c = b.matmul(&b.transpose()).expect("conforming shapes");
    for i in 0..d {
        c.as_mut_slice()[i * d + i] += shift;
    }
    // exact symmetry
    Matrix::from_fn(d, d, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]))
}

/// 50 positive-definite pairs must be matched exactly; 20 pairs with
/// `rank C_a < rank C_v` must leave exactly the dropped tail of `C_v`'s spectrum.
pub fn optimal_map_suite(seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11);
    let mut worst_full = 0.0f64;
    for _ in 0..50 {
        let d = rng.random_range(2..=8);
        let c_a = random_psd(&mut rng, d, d, 0.1);
        let c_v = random_psd(&mut rng, d, d, 0.1);
        let res = optimal_map(&c_a, &c_v)?;
        worst_full = worst_full.max(res.residual / c_v.frobenius_norm());
    }

    let mut worst_tail = 0.0f64;
    let mut rank_mismatch = 0.0f64;
    for _ in 0..20 {
        let d = rng.random_range(3..=8);
        let r_a = rng.random_range(1..d);
        let r_v = rng.random_range(r_a + 1..=d);
        let c_a = random_psd(&mut rng, d, r_a, 0.0);
        let c_v = random_psd(&mut rng, d, r_v, 0.0);
        let res = optimal_map(&c_a, &c_v)?;
        let spectrum = psd_eig(&c_v)?.eigenvalues;
        let rank = res.rank_a.min(res.rank_v);
        let dropped: f64 = spectrum[rank..].iter().map(|l| l * l).sum();
        worst_tail = worst_tail.max((res.residual * res.residual - dropped).abs() / dropped);
        if (res.rank_a, res.rank_v) != (r_a, r_v) || res.effective_rank != r_a {
            rank_mismatch = 1.0;
        }
    }
    Ok(VerifyReport::new(
        "optimal-map",
        vec![
            CheckResult::new("full_rank_recovery", worst_full, OPTIMAL_MAP_TOL),
            CheckResult::new("rank_deficient_tail", worst_tail, OPTIMAL_MAP_TOL),
            CheckResult::new("numerical_rank", rank_mismatch, 0.0),
        ],
    ))
}

/// Impulse responses of the momentum update against `2k/(t(t+1))`, and
/// exact reproduction of constant streams.
pub fn ulgm_suite() -> VerifyReport {
    let mut worst = 0.0f64;
    for t in 1..=10u64 {
        for k in 1..=t {
            let mut y = 0.0;
            for step in 1..=t {
                let raw = if step == k { 1.0 } else { 0.0 };
                y = momentum_update(y, raw, step).expect("step ≥ 1");
            }
            let expected = 2.0 * k as f64 / (t * (t + 1)) as f64;
            worst = worst.max((y - expected).abs());
        }
    }
    let mut fixed_point = 0.0f64;
    for c in [-3.0, -0.7, 0.0, 0.1, 1.0 / 3.0, 2.9] {
        let mut y = 0.0;
        for step in 1..=100 {
            y = momentum_update(y, c, step).expect("step ≥ 1");
            fixed_point = fixed_point.max((y - c).abs());
        }
    }
    VerifyReport::new(
        "ulgm",
        vec![
            CheckResult::new("momentum_coefficients", worst, MOMENTUM_TOL),
            CheckResult::new("constant_fixed_point", fixed_point, 0.0),
        ],
    )
}
