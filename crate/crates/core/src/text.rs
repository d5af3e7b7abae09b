//! Bidirectional gated-recurrent text encoder.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::linalg::{sigmoid_scalar, RealMatrix, RealVector};
use crate::scalar::Scalar;
use crate::Result;

/// Gate weights of one recurrent direction.
///
/// Update gate `z = sigmoid(x W_z + h U_z)`, reset gate
/// `r = sigmoid(x W_r + h U_r)`, candidate `c = tanh(x W_c + (r * h) U_c)`,
/// next state `(1 - z) * h + z * c`. No bias terms; initial state is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct GruWeights<S: Scalar> {
    pub w_update: RealMatrix<S>,
    pub u_update: RealMatrix<S>,
    pub w_reset: RealMatrix<S>,
    pub u_reset: RealMatrix<S>,
    pub w_cand: RealMatrix<S>,
    pub u_cand: RealMatrix<S>,
}

impl<S: Scalar> GruWeights<S> {
    pub fn input_dim(&self) -> usize {
        self.w_update.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_update.cols()
    }

    fn validate(&self) -> Result<()> {
        let (e, h) = (self.input_dim(), self.hidden_dim());
        let ok = |m: &RealMatrix<S>, rows, cols| m.rows() == rows && m.cols() == cols;
        if !(ok(&self.w_reset, e, h)
            && ok(&self.w_cand, e, h)
            && ok(&self.u_update, h, h)
            && ok(&self.u_reset, h, h)
            && ok(&self.u_cand, h, h))
        {
            return Err(CoreError::Shape(
                "recurrent gate matrices do not share input/hidden dims".into(),
            ));
        }
        Ok(())
    }

    /// Hidden states after each step over the given inputs, starting from
    /// zero. Gate buffers are reused across steps (training hot path).
    fn run(&self, inputs: &[RealVector<S>]) -> Result<Vec<RealVector<S>>> {
        let h = self.hidden_dim();
        let mut hidden = vec![S::zero(); h];
        let mut update = vec![S::zero(); h];
        let mut reset = vec![S::zero(); h];
        let mut cand = vec![S::zero(); h];
        let mut gated = vec![S::zero(); h];

        let mut states = Vec::with_capacity(inputs.len());
        for input in inputs {
            let x = input.data();
            mat_vec_into(x, &self.w_update, &mut update);
            mat_vec_acc(&hidden, &self.u_update, &mut update);
            mat_vec_into(x, &self.w_reset, &mut reset);
            mat_vec_acc(&hidden, &self.u_reset, &mut reset);
            for j in 0..h {
                update[j] = sigmoid_scalar(update[j]);
                reset[j] = sigmoid_scalar(reset[j]);
                gated[j] = reset[j] * hidden[j];
            }
            mat_vec_into(x, &self.w_cand, &mut cand);
            mat_vec_acc(&gated, &self.u_cand, &mut cand);
            for j in 0..h {
                let c = cand[j].tanh();
                hidden[j] = (S::one() - update[j]) * hidden[j] + update[j] * c;
            }
            states.push(RealVector::new(hidden.clone())?);
        }
        Ok(states)
    }
}

fn mat_vec_into<S: Scalar>(v: &[S], m: &RealMatrix<S>, out: &mut [S]) {
    out.fill(S::zero());
    mat_vec_acc(v, m, out);
}

fn mat_vec_acc<S: Scalar>(v: &[S], m: &RealMatrix<S>, out: &mut [S]) {
    for (k, value) in v.iter().enumerate() {
        let row = m.row(k);
        for (o, cell) in out.iter_mut().zip(row) {
            *o += *value * *cell;
        }
    }
}

/// Embedding table, both recurrent directions, and the output projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct TextEncoderParams<S: Scalar> {
    /// Word embeddings, vocabulary size x embedding dim.
    pub embedding: RealMatrix<S>,
    pub gru_forward: GruWeights<S>,
    pub gru_backward: GruWeights<S>,
    /// Output projection, hidden dim x feature dim.
    pub mlp_weight: RealMatrix<S>,
    pub mlp_bias: RealVector<S>,
}

impl<S: Scalar> TextEncoderParams<S> {
    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.mlp_weight.cols()
    }

    pub fn validate(&self) -> Result<()> {
        self.gru_forward.validate()?;
        self.gru_backward.validate()?;
        let e = self.embedding.cols();
        if self.gru_forward.input_dim() != e || self.gru_backward.input_dim() != e {
            return Err(CoreError::Shape(
                "recurrent input dim does not match the embedding dim".into(),
            ));
        }
        if self.gru_forward.hidden_dim() != self.gru_backward.hidden_dim() {
            return Err(CoreError::Shape(
                "forward and backward hidden dims differ".into(),
            ));
        }
        if self.mlp_weight.rows() != self.gru_forward.hidden_dim() {
            return Err(CoreError::Shape(
                "output projection does not match the hidden dim".into(),
            ));
        }
        if self.mlp_bias.dim() != self.mlp_weight.cols() {
            return Err(CoreError::Shape(
                "output bias does not match the projection".into(),
            ));
        }
        Ok(())
    }
}

/// Encode a nonempty token sequence into one feature vector.
///
/// The forward pass reads the embedded tokens left to right, the backward
/// pass right to left, both from zero states. Step-i states of the two
/// directions are averaged pairwise, the sequence mean is taken, and the
/// affine output layer maps it to the feature space.
pub fn encode_text<S: Scalar>(
    tokens: &[usize],
    params: &TextEncoderParams<S>,
) -> Result<RealVector<S>> {
    if tokens.is_empty() {
        return Err(CoreError::Contract("cannot encode an empty token list".into()));
    }
    params.validate()?;
    let embedded: Vec<RealVector<S>> = tokens
        .iter()
        .map(|&t| {
            if t >= params.vocab_size() {
                return Err(CoreError::Vocabulary(format!(
                    "token index {t} outside vocabulary of size {}",
                    params.vocab_size()
                )));
            }
            RealVector::new(params.embedding.row(t).to_vec())
        })
        .collect::<Result<_>>()?;

    let forward = params.gru_forward.run(&embedded)?;
    let reversed: Vec<RealVector<S>> = embedded.iter().rev().cloned().collect();
    let backward = params.gru_backward.run(&reversed)?;

    let h = params.gru_forward.hidden_dim();
    let mut mean = vec![S::zero(); h];
    let half = S::of(0.5);
    for (hf, hb) in forward.iter().zip(&backward) {
        for j in 0..h {
            mean[j] += (hf.get(j) + hb.get(j)) * half;
        }
    }
    let inv_n = S::one() / S::of(tokens.len() as f64);
    for v in &mut mean {
        *v *= inv_n;
    }

    RealVector::new(mean)?
        .vec_mat(&params.mlp_weight)?
        .add(&params.mlp_bias)
}
