//! Covariance-matching loss between two modalities' batch features and its
//! analytic gradient with respect to the feature batches.

use crate::error::{Error, Result};
use crate::linalg::{covariance, Matrix};

use super::directive::DirectiveKind;

/// Default saturation level for the private-information loss.
pub const DEFAULT_PRIVATE_CAP: f64 = 1.0;

fn check_pair(op: &'static str, a: &Matrix, b: &Matrix) -> Result<usize> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    if a.rows() == 0 {
        return Err(Error::Contract(format!("{op}: empty covariance")));
    }
    Ok(a.rows())
}

/// `‖C_a − C_v‖_F² / (4d²)` for two `d × d` covariance matrices.
pub fn shared_loss(c_a: &Matrix, c_v: &Matrix) -> Result<f64> {
    let d = check_pair("shared_loss", c_a, c_v)? as f64;
    let sq: f64 = c_a.sub(c_v)?.as_slice().iter().map(|x| x * x).sum();
    Ok(sq / (4.0 * d * d))
}

/// Negated shared loss, saturated at `-cap`.
pub fn private_loss(c_a: &Matrix, c_v: &Matrix, cap: f64) -> Result<f64> {
    check_cap(cap)?;
    Ok(-shared_loss(c_a, c_v)?.min(cap))
}

fn check_cap(cap: f64) -> Result<()> {
    if cap > 0.0 && cap.is_finite() {
        Ok(())
    } else {
        Err(Error::Contract(format!("private loss cap must be positive, got {cap}")))
    }
}

fn check_batches(m_a: &Matrix, m_v: &Matrix) -> Result<()> {
    if m_a.cols() != m_v.cols() {
        return Err(Error::Dimension {
            op: "shared_loss_grad",
            left: m_a.shape(),
            right: m_v.shape(),
        });
    }
    for m in [m_a, m_v] {
        if m.rows() < 2 {
            return Err(Error::DegenerateBatch { rows: m.rows() });
        }
    }
    Ok(())
}

/// Loss value together with its gradients w.r.t. both feature batches.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectiveLoss {
    pub value: f64,
    pub grad_first: Matrix,
    pub grad_second: Matrix,
}

/// Value and gradient of the covariance loss for one directive.
///
/// Feature batches are `N × d` (one row per sample). The shared gradient is
/// `Mc·(C_a − C_v) / (d²(N−1))` for the first batch, with `Mc` the
/// mean-centered batch, and the negation of the same form for the second.
pub fn directive_loss(kind: DirectiveKind, m_a: &Matrix, m_v: &Matrix, cap: f64) -> Result<DirectiveLoss> {
    check_batches(m_a, m_v)?;
    let c_a = covariance(m_a)?;
    let c_v = covariance(m_v)?;
    let theta = shared_loss(&c_a, &c_v)?;
    let (value, sign) = match kind {
        DirectiveKind::Shared => (theta, 1.0),
        DirectiveKind::Private => {
            check_cap(cap)?;
            // saturated branch (including θ == cap) has zero gradient
            if theta >= cap {
                return Ok(DirectiveLoss {
                    value: -cap,
                    grad_first: Matrix::zeros(m_a.rows(), m_a.cols()),
                    grad_second: Matrix::zeros(m_v.rows(), m_v.cols()),
                });
            }
            (-theta, -1.0)
        }
    };
    let d = m_a.cols() as f64;
    let diff = c_a.sub(&c_v)?;
    let scale_a = sign / (d * d * (m_a.rows() as f64 - 1.0));
    let scale_v = -sign / (d * d * (m_v.rows() as f64 - 1.0));
    let grad_first = m_a.centered().matmul(&diff)?.scale(scale_a);
    let grad_second = m_v.centered().matmul(&diff)?.scale(scale_v);
    Ok(DirectiveLoss {
        value,
        grad_first,
        grad_second,
    })
}

/// Gradients `(∂θ/∂M_a, ∂θ/∂M_v)` of the shared loss.
pub fn shared_loss_grad(m_a: &Matrix, m_v: &Matrix) -> Result<(Matrix, Matrix)> {
    let out = directive_loss(DirectiveKind::Shared, m_a, m_v, DEFAULT_PRIVATE_CAP)?;
    Ok((out.grad_first, out.grad_second))
}

/// Gradients of the private loss; zero once the shared loss reaches `cap`.
pub fn private_loss_grad(m_a: &Matrix, m_v: &Matrix, cap: f64) -> Result<(Matrix, Matrix)> {
    let out = directive_loss(DirectiveKind::Private, m_a, m_v, cap)?;
    Ok((out.grad_first, out.grad_second))
}
