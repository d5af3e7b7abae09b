//! Node featurization and graph-convolution forward passes.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::fusion::FeatureSequence;
use crate::graph::{Detection, ObjectGraph};
use crate::linalg::RealMatrix;
use crate::scalar::Scalar;
use crate::Result;

/// Per-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => x.max(S::zero()),
            Activation::Identity => x,
        }
    }
}

/// One graph-convolution layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct GcnLayer<S: Scalar> {
    #[serde(rename = "w")]
    pub weight: RealMatrix<S>,
    pub activation: Activation,
}

/// Layer stack plus the category vocabulary used for input featurization.
///
/// The first layer must accept `vocab.len() + 4` columns (one-hot category
/// followed by cx, cy, area, prob), and consecutive layers must conform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct GcnParams<S: Scalar> {
    pub category_vocab: Vec<String>,
    pub layers: Vec<GcnLayer<S>>,
}

impl<S: Scalar> GcnParams<S> {
    pub fn input_dim(&self) -> usize {
        self.category_vocab.len() + 4
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .map(|l| l.weight.cols())
            .unwrap_or_else(|| self.input_dim())
    }

    pub fn validate(&self) -> Result<()> {
        let mut dim = self.input_dim();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weight.rows() != dim {
                return Err(CoreError::Shape(format!(
                    "layer {i} expects {} input columns, got weight with {} rows",
                    dim,
                    layer.weight.rows()
                )));
            }
            dim = layer.weight.cols();
        }
        Ok(())
    }
}

/// One feature row per detection: `[one-hot(category) | cx, cy, area, prob]`.
pub fn embed_detections<S: Scalar>(
    nodes: &[Detection<S>],
    vocab: &[String],
) -> Result<FeatureSequence<S>> {
    if nodes.is_empty() {
        return Err(CoreError::Contract(
            "cannot embed an empty detection list".into(),
        ));
    }
    let dim = vocab.len() + 4;
    let mut data = Vec::with_capacity(nodes.len() * dim);
    for node in nodes {
        let cat = vocab
            .iter()
            .position(|c| *c == node.category)
            .ok_or_else(|| CoreError::Vocabulary(node.category.clone()))?;
        for j in 0..vocab.len() {
            data.push(if j == cat { S::one() } else { S::zero() });
        }
        data.extend_from_slice(&[node.cx, node.cy, node.area, node.prob]);
    }
    FeatureSequence::new(RealMatrix::new(nodes.len(), dim, data)?)
}

/// One propagation step: `activation(operator * x * w)`.
pub fn gcn_layer_forward<S: Scalar>(
    x: &FeatureSequence<S>,
    operator: &RealMatrix<S>,
    weight: &RealMatrix<S>,
    activation: Activation,
) -> Result<FeatureSequence<S>> {
    let propagated = operator.matmul(x.matrix())?;
    let projected = propagated.matmul(weight)?;
    FeatureSequence::new(projected.map(|v| activation.apply(v)))
}

/// Node features of a whole graph: embed, then run every layer.
///
/// An empty graph has no local features; `None` signals the fusion stage to
/// fall back to the global branch.
pub fn local_features<S: Scalar>(
    graph: &ObjectGraph<S>,
    params: &GcnParams<S>,
) -> Result<Option<FeatureSequence<S>>> {
    if graph.is_empty() {
        return Ok(None);
    }
    params.validate()?;
    let mut features = embed_detections(&graph.nodes, &params.category_vocab)?;
    for layer in &params.layers {
        features = gcn_layer_forward(&features, &graph.operator, &layer.weight, layer.activation)?;
    }
    Ok(Some(features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::assemble_graph;

    fn det(id: &str, category: &str, cx: f64, cy: f64, area: f64, prob: f64) -> Detection<f64> {
        Detection::new(id.into(), category.into(), cx, cy, area, prob).unwrap()
    }

    #[test]
    fn embedding_layout() {
        let nodes = vec![det("a", "car", 0.5, 0.5, 0.1, 0.9)];
        let vocab = vec!["car".to_string()];
        let f = embed_detections(&nodes, &vocab).unwrap();
        assert_eq!(f.matrix().row(0), &[1.0, 0.5, 0.5, 0.1, 0.9]);

        let vocab = vec!["car".to_string(), "ship".to_string()];
        let nodes = vec![det("b", "ship", 0.2, 0.3, 0.4, 0.5)];
        let f = embed_detections(&nodes, &vocab).unwrap();
        assert_eq!(f.matrix().row(0), &[0.0, 1.0, 0.2, 0.3, 0.4, 0.5]);
    }

    #[test]
    fn embedding_matches_row_oracle() {
        let vocab: Vec<String> = ["car", "ship", "tank"].map(String::from).to_vec();
        let nodes = vec![
            det("a", "ship", 0.1, 0.2, 0.3, 0.4),
            det("b", "car", 0.9, 0.8, 0.7, 0.6),
        ];
        let f = embed_detections(&nodes, &vocab).unwrap();
        assert_eq!(f.count(), 2);
        assert_eq!(f.dim(), 7);
        for (i, node) in nodes.iter().enumerate() {
            let mut row = vec![0.0; 7];
            row[vocab.iter().position(|c| *c == node.category).unwrap()] = 1.0;
            row[3] = node.cx;
            row[4] = node.cy;
            row[5] = node.area;
            row[6] = node.prob;
            assert_eq!(f.matrix().row(i), row.as_slice());
        }
    }

    #[test]
    fn embedding_unknown_category_errors() {
        let nodes = vec![det("a", "plane", 0.5, 0.5, 0.1, 0.9)];
        let vocab = vec!["car".to_string()];
        assert!(matches!(
            embed_detections(&nodes, &vocab),
            Err(CoreError::Vocabulary(_))
        ));
    }

    #[test]
    fn layer_identity_fixed_point() {
        let x = FeatureSequence::new(RealMatrix::new(1, 3, vec![0.2, 0.0, 0.7]).unwrap()).unwrap();
        let op = RealMatrix::identity(1);
        let w = RealMatrix::identity(3);
        let y = gcn_layer_forward(&x, &op, &w, Activation::Relu).unwrap();
        assert_eq!(y.matrix(), x.matrix());
    }

    #[test]
    fn layer_zero_weight_zeroes_output() {
        let x = FeatureSequence::new(RealMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let op = RealMatrix::identity(2);
        let w = RealMatrix::zeros(2, 2);
        let y = gcn_layer_forward(&x, &op, &w, Activation::Relu).unwrap();
        assert!(y.matrix().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn layer_matches_composition_oracle() {
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x = FeatureSequence::new(RealMatrix::from_fn(3, 4, |_, _| next()).unwrap()).unwrap();
        let op = RealMatrix::from_fn(3, 3, |_, _| next()).unwrap();
        let w = RealMatrix::from_fn(4, 2, |_, _| next()).unwrap();
        let y = gcn_layer_forward(&x, &op, &w, Activation::Relu).unwrap();
        let oracle = op
            .matmul(x.matrix())
            .unwrap()
            .matmul(&w)
            .unwrap()
            .map(|v| v.max(0.0));
        for i in 0..3 {
            for j in 0..2 {
                assert!((y.matrix().get(i, j) - oracle.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_shape_mismatch_errors() {
        let x = FeatureSequence::new(RealMatrix::new(2, 3, vec![0.0; 6]).unwrap()).unwrap();
        let op = RealMatrix::identity(2);
        let w = RealMatrix::zeros(4, 2);
        assert!(matches!(
            gcn_layer_forward(&x, &op, &w, Activation::Identity),
            Err(CoreError::Shape(_))
        ));
    }

    #[test]
    fn local_features_identity_layer_is_relu_of_embedding() {
        let graph =
            assemble_graph(&[det("a", "car", 0.5, 0.5, 0.1, 0.9)], 0.8, 1.15, true).unwrap();
        let params = GcnParams {
            category_vocab: vec!["car".to_string()],
            layers: vec![GcnLayer {
                weight: RealMatrix::identity(5),
                activation: Activation::Relu,
            }],
        };
        let f = local_features(&graph, &params).unwrap().unwrap();
        assert_eq!(f.matrix().row(0), &[1.0, 0.5, 0.5, 0.1, 0.9]);
    }

    #[test]
    fn local_features_zero_final_layer() {
        let graph = assemble_graph(
            &[
                det("a", "car", 0.4, 0.5, 0.3, 0.9),
                det("b", "ship", 0.6, 0.5, 0.2, 0.8),
            ],
            0.8,
            1.15,
            true,
        )
        .unwrap();
        let params = GcnParams {
            category_vocab: vec!["car".to_string(), "ship".to_string()],
            layers: vec![
                GcnLayer {
                    weight: RealMatrix::identity(6),
                    activation: Activation::Relu,
                },
                GcnLayer {
                    weight: RealMatrix::zeros(6, 3),
                    activation: Activation::Identity,
                },
            ],
        };
        let f = local_features(&graph, &params).unwrap().unwrap();
        assert_eq!(f.count(), 2);
        assert_eq!(f.dim(), 3);
        assert!(f.matrix().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn local_features_empty_graph_is_none() {
        let graph = assemble_graph::<f64>(&[], 0.8, 1.15, true).unwrap();
        let params = GcnParams {
            category_vocab: vec!["car".to_string()],
            layers: vec![],
        };
        assert!(local_features(&graph, &params).unwrap().is_none());
    }

    #[test]
    fn local_features_matches_layer_by_layer_oracle() {
        let dets = vec![
            det("a", "car", 0.30, 0.30, 0.20, 0.9),
            det("b", "car", 0.35, 0.30, 0.10, 0.8),
            det("c", "ship", 0.70, 0.60, 0.30, 0.7),
            det("d", "ship", 0.20, 0.80, 0.05, 0.6),
        ];
        let graph = assemble_graph(&dets, 0.8, 1.15, true).unwrap();
        let mut state = 42u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let vocab: Vec<String> = ["car", "ship"].map(String::from).to_vec();
        let w0 = RealMatrix::from_fn(6, 5, |_, _| next()).unwrap();
        let w1 = RealMatrix::from_fn(5, 3, |_, _| next()).unwrap();
        let params = GcnParams {
            category_vocab: vocab.clone(),
            layers: vec![
                GcnLayer {
                    weight: w0.clone(),
                    activation: Activation::Relu,
                },
                GcnLayer {
                    weight: w1.clone(),
                    activation: Activation::Identity,
                },
            ],
        };
        let f = local_features(&graph, &params).unwrap().unwrap();

        let embedded = embed_detections(&graph.nodes, &vocab).unwrap();
        let h1 = gcn_layer_forward(&embedded, &graph.operator, &w0, Activation::Relu).unwrap();
        let h2 = gcn_layer_forward(&h1, &graph.operator, &w1, Activation::Identity).unwrap();
        assert_eq!(f.matrix(), h2.matrix());
    }

    #[test]
    fn params_validation_catches_dim_chain_breaks() {
        let params = GcnParams {
            category_vocab: vec!["car".to_string()],
            layers: vec![GcnLayer {
                weight: RealMatrix::<f64>::zeros(7, 3),
                activation: Activation::Relu,
            }],
        };
        assert!(params.validate().is_err());
    }
}
