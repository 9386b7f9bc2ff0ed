//! Squared-arcsin spherical loss between an image embedding and the style
//! embeddings.
//!
//! For unit vectors `f` and `s`, `arcsin(‖f − s‖ / 2)` is half the geodesic
//! angle between them, so each term is `(θ/2)²` and the loss is
//! `2 / Σw · Σ wᵢ (θᵢ/2)²`.
//!
//! The half angle is evaluated as `atan2(‖f − s‖, ‖f + s‖)`, which equals the
//! arcsin form on the unit sphere but stays accurate near antipodes, where
//! arcsin turns a rounding error of 1e-16 in the chord into 1e-8 in the angle.

use crate::embedding::{EmbeddingVector, WeightedEmbedding};
use crate::error::{Error, Result};

/// Inputs whose norm deviates from 1 by more than this are rejected.
pub const UNIT_INPUT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossValue {
    pub total: f64,
    /// Unweighted `arcsin(½‖f − sᵢ‖)²` per style, in style order.
    pub per_style: Vec<f64>,
}

fn check_unit(v: &EmbeddingVector, what: &str) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_INPUT_TOLERANCE {
        return Err(Error::domain(format!("{what} is not unit-norm (norm {n})")));
    }
    Ok(())
}

/// `(‖f − s‖, ‖f + s‖)`.
fn chord_pair(f: &[f64], s: &[f64]) -> (f64, f64) {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (a, b) in f.iter().zip(s) {
        minus += (a - b) * (a - b);
        plus += (a + b) * (a + b);
    }
    (minus.sqrt(), plus.sqrt())
}

fn half_angle(f: &[f64], s: &[f64]) -> f64 {
    let (minus, plus) = chord_pair(f, s);
    minus.atan2(plus)
}

/// `arcsin(clamp(½‖f − s‖, 0, 1))²`, i.e. a quarter of the squared angle.
pub fn chord_term(f: &EmbeddingVector, s: &EmbeddingVector) -> Result<f64> {
    if f.dim() != s.dim() {
        return Err(Error::domain(format!(
            "embedding dimensions differ ({} vs {})",
            f.dim(),
            s.dim()
        )));
    }
    check_unit(f, "image embedding")?;
    check_unit(s, "style embedding")?;
    Ok(half_angle(f.values(), s.values()).powi(2))
}

fn check_styles(f: &EmbeddingVector, styles: &[WeightedEmbedding]) -> Result<f64> {
    if styles.is_empty() {
        return Err(Error::domain("style list is empty"));
    }
    let mut weight_sum = 0.0;
    for s in styles {
        if !(s.weight.is_finite() && s.weight > 0.0) {
            return Err(Error::domain(format!(
                "style weight {} is not positive",
                s.weight
            )));
        }
        if s.embedding.dim() != f.dim() {
            return Err(Error::domain(
                "style embedding dimension differs from image embedding",
            ));
        }
        weight_sum += s.weight;
    }
    Ok(weight_sum)
}

/// Weighted spherical loss of one image embedding against all styles.
pub fn style_loss(f: &EmbeddingVector, styles: &[WeightedEmbedding]) -> Result<LossValue> {
    let weight_sum = check_styles(f, styles)?;
    let per_style = styles
        .iter()
        .map(|s| chord_term(f, &s.embedding))
        .collect::<Result<Vec<_>>>()?;
    let weighted: f64 = styles
        .iter()
        .zip(&per_style)
        .map(|(s, c)| s.weight * c)
        .sum();
    Ok(LossValue {
        total: 2.0 / weight_sum * weighted,
        per_style,
    })
}

/// Gradient of `style_loss(f).total` with respect to the components of `f`,
/// treating `f` as an unconstrained vector. Zero where `f = sᵢ`; at an exact
/// antipode the direction is undefined and that term contributes zero.
pub fn style_loss_gradient(f: &EmbeddingVector, styles: &[WeightedEmbedding]) -> Result<Vec<f64>> {
    let weight_sum = check_styles(f, styles)?;
    let fv = f.values();
    let mut grad = vec![0.0; fv.len()];
    for s in styles {
        let sv = s.embedding.values();
        // α = atan2(m, p) with m = ‖f − s‖, p = ‖f + s‖:
        // ∇α = (p/m · (f − s) − m/p · (f + s)) / (m² + p²).
        let (m, p) = chord_pair(fv, sv);
        if m == 0.0 {
            continue;
        }
        let alpha = m.atan2(p);
        let scale = 2.0 / weight_sum * s.weight * 2.0 * alpha / (m * m + p * p);
        let along_minus = p / m;
        let along_plus = if p == 0.0 { 0.0 } else { m / p };
        for ((g, x), y) in grad.iter_mut().zip(fv).zip(sv) {
            *g += scale * (along_minus * (x - y) - along_plus * (x + y));
        }
    }
    Ok(grad)
}

/// Mean of [`style_loss`] over several augmented views.
pub fn batch_loss(views: &[EmbeddingVector], styles: &[WeightedEmbedding]) -> Result<LossValue> {
    if views.is_empty() {
        return Err(Error::domain("view list is empty"));
    }
    let n = views.len() as f64;
    let mut total = 0.0;
    let mut per_style = vec![0.0; styles.len()];
    for v in views {
        let l = style_loss(v, styles)?;
        total += l.total;
        for (acc, p) in per_style.iter_mut().zip(&l.per_style) {
            *acc += p;
        }
    }
    for p in &mut per_style {
        *p /= n;
    }
    Ok(LossValue {
        total: total / n,
        per_style,
    })
}
