//! Attention-based fusion of global and local feature sequences.
//!
//! Both branches pass through single-head self-attention, then each is
//! re-expressed under guidance of the other (queries from the guided
//! sequence, keys and values from the guiding one). The attended sequences
//! are mean-pooled; the local vector gates the global one through a sigmoid
//! mask while the global vector additively supplements the local one.
//! A small softmax head finally produces the convex combination weights.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::linalg::{relu, sigmoid, softmax, RealMatrix, RealVector};
use crate::scalar::Scalar;
use crate::Result;

/// Nonempty sequence of equal-dimension feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureSequenceRepr<S>", into = "FeatureSequenceRepr<S>")]
#[serde(bound(deserialize = "S: Scalar", serialize = "S: Scalar"))]
pub struct FeatureSequence<S: Scalar> {
    matrix: RealMatrix<S>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
struct FeatureSequenceRepr<S: Scalar> {
    count: usize,
    dim: usize,
    matrix: RealMatrix<S>,
}

impl<S: Scalar> From<FeatureSequence<S>> for FeatureSequenceRepr<S> {
    fn from(f: FeatureSequence<S>) -> Self {
        FeatureSequenceRepr {
            count: f.matrix.rows(),
            dim: f.matrix.cols(),
            matrix: f.matrix,
        }
    }
}

impl<S: Scalar> TryFrom<FeatureSequenceRepr<S>> for FeatureSequence<S> {
    type Error = CoreError;

    fn try_from(r: FeatureSequenceRepr<S>) -> Result<Self> {
        if r.count != r.matrix.rows() || r.dim != r.matrix.cols() {
            return Err(CoreError::Shape(format!(
                "feature sequence header {}x{} does not match matrix {}x{}",
                r.count,
                r.dim,
                r.matrix.rows(),
                r.matrix.cols()
            )));
        }
        FeatureSequence::new(r.matrix)
    }
}

impl<S: Scalar> FeatureSequence<S> {
    pub fn new(matrix: RealMatrix<S>) -> Result<Self> {
        if matrix.rows() == 0 {
            return Err(CoreError::Shape(
                "feature sequence needs at least one row".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn count(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &RealMatrix<S> {
        &self.matrix
    }

    /// Arithmetic mean of the rows.
    pub fn mean_pool(&self) -> RealVector<S> {
        self.matrix.mean_rows().expect("sequence is nonempty")
    }
}

/// Query/key/value projections for one attention block (all `d x d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct AttentionProjection<S: Scalar> {
    pub w_q: RealMatrix<S>,
    pub w_k: RealMatrix<S>,
    pub w_v: RealMatrix<S>,
}

impl<S: Scalar> AttentionProjection<S> {
    pub fn identity(dim: usize) -> Self {
        Self {
            w_q: RealMatrix::identity(dim),
            w_k: RealMatrix::identity(dim),
            w_v: RealMatrix::identity(dim),
        }
    }
}

/// All weights of the fusion stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct FusionParams<S: Scalar> {
    /// Self-attention over the global sequence.
    pub sa_g: AttentionProjection<S>,
    /// Self-attention over the local sequence.
    pub sa_l: AttentionProjection<S>,
    /// Guided attention producing the global branch (queries from global).
    pub ga_g: AttentionProjection<S>,
    /// Guided attention producing the local branch (queries from local).
    pub ga_l: AttentionProjection<S>,
    /// Hidden projection of the weight head, `d x d_h`.
    pub w_alpha: RealMatrix<S>,
    /// Output projection of the weight head, `d_h x 2`.
    pub w_beta: RealMatrix<S>,
}

/// Fused visual vector plus the mixing weights that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct FusedVisual<S: Scalar> {
    pub vector: RealVector<S>,
    /// `(gamma_1, gamma_2)`; `None` on the global-only fallback path.
    pub gamma: Option<(S, S)>,
    /// True when no local features were available.
    pub global_only: bool,
}

fn attention<S: Scalar>(
    queries: &FeatureSequence<S>,
    keys_values: &FeatureSequence<S>,
    p: &AttentionProjection<S>,
) -> Result<FeatureSequence<S>> {
    let d = queries.dim();
    if keys_values.dim() != d {
        return Err(CoreError::Shape(format!(
            "attention over dims {d} and {}",
            keys_values.dim()
        )));
    }
    let q = queries.matrix().matmul(&p.w_q)?;
    let k = keys_values.matrix().matmul(&p.w_k)?;
    let v = keys_values.matrix().matmul(&p.w_v)?;
    let scale = S::one() / S::of(q.cols() as f64).sqrt();

    // rowwise softmax over scaled dot products, accumulated straight into
    // the output buffer (this sits on the training hot path)
    let (rows, keys, cols) = (q.rows(), k.rows(), v.cols());
    let mut out = vec![S::zero(); rows * cols];
    let mut logits = vec![S::zero(); keys];
    for i in 0..rows {
        let q_row = q.row(i);
        let mut max = S::neg_infinity();
        for r in 0..keys {
            let k_row = k.row(r);
            let mut dot = S::zero();
            for c in 0..q_row.len() {
                dot += q_row[c] * k_row[c];
            }
            logits[r] = dot * scale;
            max = max.max(logits[r]);
        }
        let mut sum = S::zero();
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        for r in 0..keys {
            let weight = logits[r] / sum;
            let v_row = v.row(r);
            for j in 0..cols {
                out[i * cols + j] += weight * v_row[j];
            }
        }
    }
    FeatureSequence::new(RealMatrix::new(rows, cols, out)?)
}

/// Single-head scaled dot-product self-attention.
pub fn self_attention<S: Scalar>(
    x: &FeatureSequence<S>,
    p: &AttentionProjection<S>,
) -> Result<FeatureSequence<S>> {
    attention(x, x, p)
}

/// Guided attention: queries from `x`, keys and values from `y`. Output has
/// `x`'s row count.
pub fn guided_attention<S: Scalar>(
    x: &FeatureSequence<S>,
    y: &FeatureSequence<S>,
    p: &AttentionProjection<S>,
) -> Result<FeatureSequence<S>> {
    attention(x, y, p)
}

/// Mask-and-supplement interaction of the pooled branches.
///
/// Returns `(global * sigmoid(local), local + global)` elementwise on the
/// mean-pooled vectors.
pub fn interact<S: Scalar>(
    global: &FeatureSequence<S>,
    local: &FeatureSequence<S>,
) -> Result<(RealVector<S>, RealVector<S>)> {
    if global.dim() != local.dim() {
        return Err(CoreError::Shape(format!(
            "interaction over dims {} and {}",
            global.dim(),
            local.dim()
        )));
    }
    let g = global.mean_pool();
    let l = local.mean_pool();
    let gated_global = g.hadamard(&sigmoid(&l))?;
    let supplemented_local = l.add(&g)?;
    Ok((gated_global, supplemented_local))
}

/// Convex fusion with learned weights.
///
/// `gamma = softmax(relu((g' + l') W_alpha) W_beta)` and the output is
/// `gamma_1 * g' + gamma_2 * l'`, evaluated as `l' + gamma_1 * (g' - l')` so
/// equal inputs are returned bit-exactly.
pub fn dynamic_fuse<S: Scalar>(
    gated_global: &RealVector<S>,
    supplemented_local: &RealVector<S>,
    w_alpha: &RealMatrix<S>,
    w_beta: &RealMatrix<S>,
) -> Result<(RealVector<S>, (S, S))> {
    if w_beta.cols() != 2 {
        return Err(CoreError::Shape(format!(
            "weight head must emit 2 logits, got {}",
            w_beta.cols()
        )));
    }
    let mixed = gated_global.add(supplemented_local)?;
    let hidden = relu(&mixed.vec_mat(w_alpha)?);
    let gamma = softmax(&hidden.vec_mat(w_beta)?)?;
    let (g1, g2) = (gamma.get(0), gamma.get(1));
    let fused = RealVector::new(
        gated_global
            .data()
            .iter()
            .zip(supplemented_local.data())
            .map(|(g, l)| *l + g1 * (*g - *l))
            .collect(),
    )?;
    Ok((fused, (g1, g2)))
}

/// Full fusion chain over the two feature sequences.
///
/// With no local sequence the result degrades to the mean-pooled
/// self-attended global sequence, flagged via [`FusedVisual::global_only`].
pub fn fuse_multilevel<S: Scalar>(
    global: &FeatureSequence<S>,
    local: Option<&FeatureSequence<S>>,
    params: &FusionParams<S>,
) -> Result<FusedVisual<S>> {
    let global_sa = self_attention(global, &params.sa_g)?;
    let Some(local) = local else {
        return Ok(FusedVisual {
            vector: global_sa.mean_pool(),
            gamma: None,
            global_only: true,
        });
    };
    if local.dim() != global.dim() {
        return Err(CoreError::Shape(format!(
            "global dim {} vs local dim {}",
            global.dim(),
            local.dim()
        )));
    }
    let local_sa = self_attention(local, &params.sa_l)?;
    let global_ga = guided_attention(&global_sa, &local_sa, &params.ga_g)?;
    let local_ga = guided_attention(&local_sa, &global_sa, &params.ga_l)?;
    let (gated_global, supplemented_local) = interact(&global_ga, &local_ga)?;
    let (vector, gamma) = dynamic_fuse(
        &gated_global,
        &supplemented_local,
        &params.w_alpha,
        &params.w_beta,
    )?;
    Ok(FusedVisual {
        vector,
        gamma: Some(gamma),
        global_only: false,
    })
}
