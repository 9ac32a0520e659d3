//! Constructive solution of `min_A ‖AᵀC_aA − C_v‖_F`.
//!
//! With `C_a = U_a ε_a U_aᵀ`, `C_v = U_v ε_v U_vᵀ` and `R = min(rank C_a, rank C_v)`,
//! the map is
//!
//! ```text
//! A = (U_a ε_a^{+1/2} U_aᵀ) · Q · (U_v[1:R] ε_v[1:R]^{1/2} U_v[1:R]ᵀ)
//! ```
//!
//! where `Q` carries the leading `R` eigenvectors of `C_v` isometrically into
//! the range of `C_a`. When that range already contains them, `Q` acts as the
//! identity and the product collapses to the plain two-factor form. Either way
//! `AᵀC_aA` equals the rank-`R` truncation of `C_v`, so the residual is zero
//! when `rank C_a ≥ rank C_v` and the dropped tail of the spectrum otherwise.
//! This is a verification oracle; training never learns `A`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{psd_eig, sym_eig, Matrix, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalMapResult {
    pub map_a: Matrix,
    /// `AᵀC_aA`
    pub achieved: Matrix,
    /// `‖AᵀC_aA − C_v‖_F`
    pub residual: f64,
    pub effective_rank: usize,
    pub rank_a: usize,
    pub rank_v: usize,
}

pub fn optimal_map(c_a: &Matrix, c_v: &Matrix) -> Result<OptimalMapResult> {
    optimal_map_with_tol(c_a, c_v, DEFAULT_RANK_TOL)
}

pub fn optimal_map_with_tol(c_a: &Matrix, c_v: &Matrix, rank_tol: f64) -> Result<OptimalMapResult> {
    if c_a.shape() != c_v.shape() {
        return Err(crate::Error::Dimension {
            op: "optimal_map",
            left: c_a.shape(),
            right: c_v.shape(),
        });
    }
    let eig_a = psd_eig(c_a)?;
    let eig_v = psd_eig(c_v)?;
    let rank_a = eig_a.numerical_rank(rank_tol);
    let rank_v = eig_v.numerical_rank(rank_tol);
    let rank = rank_a.min(rank_v);

    let u_a = eig_a.leading_vectors(rank_a);
    let u_v = eig_v.leading_vectors(rank);
    let overlap = u_a.t_matmul(&u_v)?;
    let q = isometric_factor(&overlap)?;

    // A = U_a,r · diag(ε_a^{-1/2}) · Q · diag(ε_v^{1/2}) · U_v,Rᵀ
    let left = Matrix::from_fn(c_a.rows(), rank_a, |i, k| u_a[(i, k)] / eig_a.eigenvalues[k].sqrt());
    let right = Matrix::from_fn(rank, c_v.rows(), |k, j| eig_v.eigenvalues[k].sqrt() * u_v[(j, k)]);
    let map_a = left.matmul(&q)?.matmul(&right)?;

    let achieved = map_a.t_matmul(&c_a.matmul(&map_a)?)?;
    let residual = achieved.sub(c_v)?.frobenius_norm();
    Ok(OptimalMapResult {
        map_a,
        achieved,
        residual,
        effective_rank: rank,
        rank_a,
        rank_v,
    })
}

/// Nearest matrix with orthonormal columns to `w` (`m × k`, `k ≤ m`): the
/// polar factor, completed with arbitrary orthonormal directions where `w`
/// is column-rank deficient. Returns `w` itself when its columns are
/// already orthonormal.
fn isometric_factor(w: &Matrix) -> Result<Matrix> {
    let (m, k) = w.shape();
    if k == 0 {
        return Ok(Matrix::zeros(m, 0));
    }
    let gram = w.t_matmul(w)?;
    let eig = sym_eig(&gram)?;
    let v = &eig.eigenvectors;

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (idx, &s2) in eig.eigenvalues.iter().enumerate() {
        if s2 > 1e-12 {
            let s = s2.sqrt();
            let col = w.matvec(&v.column(idx))?;
            columns.push(col.into_iter().map(|x| x / s).collect());
        } else {
            columns.push(vec![0.0; m]);
        }
    }
    orthonormalize(&mut columns, &eig.eigenvalues);

    // Q = [q_1..q_k] · Vᵀ
    let q = Matrix::from_fn(m, k, |i, j| (0..k).map(|c| columns[c][i] * v[(j, c)]).sum());
    Ok(q)
}

/// Modified Gram-Schmidt (two passes) over columns whose singular value is
/// usable; the rest are replaced by completion vectors from the standard basis.
fn orthonormalize(columns: &mut [Vec<f64>], sq_singular: &[f64]) {
    let m = columns.first().map_or(0, Vec::len);
    let mut done: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for (col, &s2) in columns.iter_mut().zip(sq_singular) {
        let candidate = if s2 > 1e-12 {
            project_out(col.clone(), &done)
        } else {
            None
        };
        let q = candidate.unwrap_or_else(|| {
            (0..m)
                .filter_map(|e| {
                    let mut basis = vec![0.0; m];
                    basis[e] = 1.0;
                    project_out(basis, &done)
                })
                .next()
                .expect("more columns than dimensions")
        });
        *col = q.clone();
        done.push(q);
    }
}

fn project_out(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let before = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-6 * before.max(f64::MIN_POSITIVE) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}
