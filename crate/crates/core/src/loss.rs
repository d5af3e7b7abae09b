//! Margin-based triplet objective over aligned cross-modal batches.

use crate::error::CoreError;
use crate::linalg::{cosine_similarity, RealVector};
use crate::scalar::Scalar;
use crate::Result;

/// Hinge triplet loss over an aligned batch.
///
/// For every paired `(image_i, text_i)` the loss accumulates
/// `[margin - cos(image_i, text_i) + cos(image_i, text_j)]_+` over all
/// non-paired texts and `[margin - cos(image_i, text_i) + cos(image_j, text_i)]_+`
/// over all non-paired images. Hinges exactly at zero contribute nothing.
pub fn triplet_loss<S: Scalar>(
    images: &[RealVector<S>],
    texts: &[RealVector<S>],
    margin: S,
) -> Result<S> {
    check_batch(images, texts, margin)?;
    let n = images.len();
    let mut cos = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            cos[i * n + j] = cosine_similarity(&images[i], &texts[j])?;
        }
    }
    let mut loss = S::zero();
    for i in 0..n {
        let paired = cos[i * n + i];
        for j in 0..n {
            if j == i {
                continue;
            }
            loss += (margin - paired + cos[i * n + j]).max(S::zero());
            loss += (margin - paired + cos[j * n + i]).max(S::zero());
        }
    }
    Ok(loss)
}

/// Analytic gradient of [`triplet_loss`] with respect to every embedding.
///
/// Returns `(d/d images, d/d texts)`. The subgradient at an exactly inactive
/// hinge is zero, matching the loss convention.
pub fn triplet_loss_grad<S: Scalar>(
    images: &[RealVector<S>],
    texts: &[RealVector<S>],
    margin: S,
) -> Result<(Vec<RealVector<S>>, Vec<RealVector<S>>)> {
    check_batch(images, texts, margin)?;
    let n = images.len();
    let dim = images[0].dim();
    let mut cos = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            cos[i * n + j] = cosine_similarity(&images[i], &texts[j])?;
        }
    }

    let mut grad_images = vec![vec![S::zero(); dim]; n];
    let mut grad_texts = vec![vec![S::zero(); dim]; n];

    // d cos(a,b)/da = b/(|a||b|) - cos(a,b) * a/|a|^2
    let add_cos_grad = |acc: &mut [S], a: &RealVector<S>, b: &RealVector<S>, c: S, w: S| {
        let na = a.norm();
        let nb = b.norm();
        let inv_ab = S::one() / (na * nb);
        let inv_aa = S::one() / (na * na);
        for k in 0..acc.len() {
            acc[k] += w * (b.get(k) * inv_ab - c * a.get(k) * inv_aa);
        }
    };

    for i in 0..n {
        let paired = cos[i * n + i];
        for j in 0..n {
            if j == i {
                continue;
            }
            // text negative: margin - cos(I_i, T_i) + cos(I_i, T_j)
            if margin - paired + cos[i * n + j] > S::zero() {
                add_cos_grad(&mut grad_images[i], &images[i], &texts[i], paired, -S::one());
                add_cos_grad(&mut grad_texts[i], &texts[i], &images[i], paired, -S::one());
                add_cos_grad(&mut grad_images[i], &images[i], &texts[j], cos[i * n + j], S::one());
                add_cos_grad(&mut grad_texts[j], &texts[j], &images[i], cos[i * n + j], S::one());
            }
            // image negative: margin - cos(I_i, T_i) + cos(I_j, T_i)
            if margin - paired + cos[j * n + i] > S::zero() {
                add_cos_grad(&mut grad_images[i], &images[i], &texts[i], paired, -S::one());
                add_cos_grad(&mut grad_texts[i], &texts[i], &images[i], paired, -S::one());
                add_cos_grad(&mut grad_images[j], &images[j], &texts[i], cos[j * n + i], S::one());
                add_cos_grad(&mut grad_texts[i], &texts[i], &images[j], cos[j * n + i], S::one());
            }
        }
    }

    Ok((
        grad_images
            .into_iter()
            .map(RealVector::new)
            .collect::<Result<_>>()?,
        grad_texts
            .into_iter()
            .map(RealVector::new)
            .collect::<Result<_>>()?,
    ))
}

fn check_batch<S: Scalar>(
    images: &[RealVector<S>],
    texts: &[RealVector<S>],
    margin: S,
) -> Result<()> {
    if images.len() != texts.len() {
        return Err(CoreError::Shape(format!(
            "batch of {} images vs {} texts",
            images.len(),
            texts.len()
        )));
    }
    if images.len() < 2 {
        return Err(CoreError::Contract(
            "triplet loss needs at least 2 pairs (no negatives otherwise)".into(),
        ));
    }
    if margin <= S::zero() {
        return Err(CoreError::Contract("margin must be > 0".into()));
    }
    Ok(())
}
