//! Similarity functions, training losses with closed-form gradients, and
//! learning-rate schedules.
//!
//! Everything here is a pure function of its inputs. Losses take the
//! embeddings (or scores) a caller already computed and return the value
//! together with the gradient with respect to those inputs; there is no
//! autodiff graph.

mod contrastive;
mod distill;
mod plistmle;
mod schedule;

pub use contrastive::{contrastive_loss, contrastive_per_query, ContrastiveConfig, ContrastiveGrad, TrainingBatch};
pub use distill::distillation_loss;
pub use plistmle::{plistmle_loss, plistmle_weight};
pub use schedule::{lr_at_step, LrScheduleConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-dimension real vector. Values are always finite and `dim > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("embedding must have dim > 0"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("embedding value at {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.values
    }
}

/// Loss value plus the gradient with respect to every differentiable input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossResult<G> {
    pub value: f64,
    pub grad: G,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity. Rejects mismatched dimensions and zero-norm inputs.
pub fn cosine_similarity(u: &Embedding, v: &Embedding) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::input(format!("dimension mismatch: {} vs {}", u.dim(), v.dim())));
    }
    let (uu, vv) = (dot(u.values(), u.values()), dot(v.values(), v.values()));
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::input("cosine similarity of a zero-norm vector"));
    }
    Ok(cosine_from_parts(dot(u.values(), v.values()), uu, vv))
}

/// `dot / sqrt(|u|^2 |v|^2)`, clamped to [-1, 1]. Exactly 1 for identical
/// inputs barring overflow.
pub(crate) fn cosine_from_parts(uv: f64, uu: f64, vv: f64) -> f64 {
    (uv / (uu * vv).sqrt()).clamp(-1.0, 1.0)
}

/// Temperature-scaled cosine similarity, `cos(u, v) / tau`.
pub fn scaled_similarity(u: &Embedding, v: &Embedding, tau: f64) -> Result<f64> {
    check_temperature(tau, "tau")?;
    Ok(cosine_similarity(u, v)? / tau)
}

pub(crate) fn check_temperature(tau: f64, name: &str) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be a positive finite number, got {tau}")))
    }
}

/// Adds `scale * d cos(u, v) / du` into `out`.
///
/// d cos / du = v / (|u||v|) - cos * u / |u|^2
pub(crate) fn accumulate_cosine_grad(u: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
    let nu = norm(u);
    let nv = norm(v);
    let cos = dot(u, v) / (nu * nv);
    let a = scale / (nu * nv);
    let b = scale * cos / (nu * nu);
    for ((o, &ui), &vi) in out.iter_mut().zip(u).zip(v) {
        *o += a * vi - b * ui;
    }
}

/// `log(sum_i w_i exp(x_i))` over entries with `w_i > 0`.
pub(crate) fn weighted_log_sum_exp(terms: &[(f64, f64)]) -> f64 {
    let max = terms.iter().filter(|(w, _)| *w > 0.0).map(|&(_, x)| x).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = terms.iter().filter(|(w, _)| *w > 0.0).map(|&(w, x)| w * (x - max).exp()).sum();
    max + sum.ln()
}

pub(crate) fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_identity_and_orthogonal() {
        assert_eq!(cosine_similarity(&e(&[1.0, 0.0]), &e(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn cosine_diagonal() {
        let c = cosine_similarity(&e(&[1.0, 1.0]), &e(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(c, 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn cosine_rejects_bad_input() {
        assert!(matches!(cosine_similarity(&e(&[1.0, 0.0]), &e(&[1.0, 0.0, 0.0])), Err(Error::InvalidInput(_))));
        assert!(matches!(cosine_similarity(&e(&[0.0, 0.0]), &e(&[1.0, 0.0])), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn scaled_similarity_cases() {
        let u = e(&[0.3, -0.4]);
        assert_abs_diff_eq!(scaled_similarity(&u, &u, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scaled_similarity(&u, &u, 0.05).unwrap(), 20.0, epsilon = 1e-12);
        assert_eq!(scaled_similarity(&e(&[1.0, 0.0]), &e(&[0.0, 2.0]), 0.3).unwrap(), 0.0);
        assert!(matches!(scaled_similarity(&u, &u, 0.0), Err(Error::InvalidConfig(_))));
        assert!(matches!(scaled_similarity(&u, &u, -1.0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn embedding_rejects_empty_and_nan() {
        assert!(Embedding::new(vec![]).is_err());
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
    }
}
