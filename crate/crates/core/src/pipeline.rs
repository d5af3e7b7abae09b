//! End-to-end desk-scale pipeline: synthetic scenes, finite-difference
//! training of the full model, and inference into a similarity matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::fusion::{
    fuse_multilevel, AttentionProjection, FeatureSequence, FusedVisual, FusionParams,
};
use crate::gcn::{embed_detections, gcn_layer_forward, local_features, Activation, GcnLayer, GcnParams};
use crate::graph::{assemble_graph, Detection, ObjectGraph};
use crate::linalg::{
    cosine_similarity, finite_diff_gradient, RealMatrix, RealVector, DEFAULT_FD_STEP,
};
use crate::loss::{triplet_loss, triplet_loss_grad};
use crate::metrics::{Direction, GroundTruth, SimilarityMatrix};
use crate::text::{encode_text, GruWeights, TextEncoderParams};
use crate::Result;

/// Margin used by the triplet objective unless overridden.
pub const DEFAULT_MARGIN: f64 = 0.2;

/// Detection-graph assembly parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub threshold: f64,
    pub boost: f64,
    pub clamp: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            threshold: 0.8,
            boost: 1.15,
            clamp: true,
        }
    }
}

/// One synthetic image/caption pair standing in for a real sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub scene_id: String,
    pub caption_id: String,
    pub global_features: FeatureSequence<f64>,
    pub detections: Vec<Detection<f64>>,
    pub caption_token_ids: Vec<usize>,
    /// True when the caption is the scene's positive.
    pub positive_pair: bool,
}

/// Synthetic-dataset shape and difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_pairs: usize,
    pub vocab_size: usize,
    pub num_categories: usize,
    pub dim: usize,
    /// 0 removes every cross-modal signal; larger values separate clusters.
    pub separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_pairs: 8,
            vocab_size: 32,
            num_categories: 4,
            dim: 8,
            separation: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_pairs < 1 || self.vocab_size < 1 || self.num_categories < 1 || self.dim < 1 {
            return Err(CoreError::Contract(
                "pairs, vocab, categories and dim must all be >= 1".into(),
            ));
        }
        if self.vocab_size < self.num_pairs {
            return Err(CoreError::Contract(
                "vocabulary must have at least one token bucket per pair".into(),
            ));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(CoreError::Contract(
                "separation must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic synthetic dataset.
///
/// Matched scene/caption pairs share a latent cluster: the caption samples
/// tokens from the pair's vocabulary bucket while the global features point
/// along the pair's latent direction, scaled by `separation`. Detections are
/// deliberately cluster-independent so that `separation = 0` leaves no
/// cross-modal signal at all.
pub fn generate_synthetic(seed: u64, config: &SynthConfig) -> Result<Vec<SyntheticScene>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.dim;
    let bucket = config.vocab_size / config.num_pairs;

    let mut scenes = Vec::with_capacity(config.num_pairs);
    for i in 0..config.num_pairs {
        // latent direction: an axis plus a fixed random tilt
        let mut latent: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.3..0.3)).collect();
        latent[i % d] += 1.0;
        let norm = latent.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut latent {
            *v /= norm;
        }

        let rows = 2;
        let mut data = Vec::with_capacity(rows * d);
        for _ in 0..rows {
            for latent_j in latent.iter().take(d) {
                data.push(config.separation * latent_j + rng.gen_range(-0.3..0.3));
            }
        }
        let global_features = FeatureSequence::new(RealMatrix::new(rows, d, data)?)?;

        let num_detections = rng.gen_range(0..=4usize);
        let mut detections = Vec::new();
        for k in 0..num_detections {
            let category = format!("cat{}", rng.gen_range(0..config.num_categories));
            let cx: f64 = rng.gen_range(0.05..0.95);
            let cy: f64 = rng.gen_range(0.05..0.95);
            detections.push(Detection::new(
                format!("s{i}-d{k}"),
                category.clone(),
                cx,
                cy,
                rng.gen_range(0.01..0.10),
                rng.gen_range(0.5..1.0),
            )?);
            // sometimes stack a near-duplicate to exercise merging
            if rng.gen_bool(0.35) {
                detections.push(Detection::new(
                    format!("s{i}-d{k}x"),
                    category,
                    (cx + rng.gen_range(-0.03..0.03)).clamp(0.0, 1.0),
                    (cy + rng.gen_range(-0.03..0.03)).clamp(0.0, 1.0),
                    rng.gen_range(0.01..0.05),
                    rng.gen_range(0.5..1.0),
                )?);
            }
        }

        let caption_len = rng.gen_range(3..=6usize);
        let start = i * bucket;
        let caption_token_ids = (0..caption_len)
            .map(|_| start + rng.gen_range(0..bucket))
            .collect();

        scenes.push(SyntheticScene {
            scene_id: format!("scene-{i}"),
            caption_id: format!("cap-{i}"),
            global_features,
            detections,
            caption_token_ids,
            positive_pair: true,
        });
    }
    Ok(scenes)
}

/// Diagonal ground truth of a synthetic dataset.
pub fn dataset_ground_truth(scenes: &[SyntheticScene]) -> Result<GroundTruth> {
    GroundTruth::from_pairs(
        scenes
            .iter()
            .filter(|s| s.positive_pair)
            .map(|s| (s.scene_id.clone(), s.caption_id.clone())),
    )
}

/// Every trainable weight of the model plus the graph-assembly settings it
/// was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub graph: GraphConfig,
    pub gcn: GcnParams<f64>,
    pub fusion: FusionParams<f64>,
    pub text: TextEncoderParams<f64>,
}

/// Architecture hyperparameters used to initialize [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub category_vocab: Vec<String>,
    pub vocab_size: usize,
    /// Shared embedding dimension of both modalities.
    pub feature_dim: usize,
    pub gcn_hidden: usize,
    pub fusion_hidden: usize,
    pub embed_dim: usize,
    pub text_hidden: usize,
}

impl ArchConfig {
    /// Derive the architecture from a dataset: feature dim from the global
    /// features, vocabulary size from the largest token, categories from the
    /// detections.
    pub fn from_dataset(scenes: &[SyntheticScene]) -> Result<Self> {
        let first = scenes.first().ok_or_else(|| {
            CoreError::Contract("cannot derive an architecture from an empty dataset".into())
        })?;
        let d = first.global_features.dim();
        let max_token = scenes
            .iter()
            .flat_map(|s| s.caption_token_ids.iter().copied())
            .max()
            .ok_or_else(|| CoreError::Contract("dataset has no caption tokens".into()))?;
        let mut categories: Vec<String> = scenes
            .iter()
            .flat_map(|s| s.detections.iter().map(|det| det.category.clone()))
            .collect();
        categories.sort();
        categories.dedup();
        Ok(Self {
            category_vocab: categories,
            vocab_size: max_token + 1,
            feature_dim: d,
            gcn_hidden: 16,
            fusion_hidden: (d / 2).max(1),
            embed_dim: d,
            text_hidden: d,
        })
    }
}

impl ModelParams {
    /// Random initialization, deterministic for a given seed (ChaCha8).
    pub fn init_random(arch: &ArchConfig, graph: GraphConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        fn fan_in_matrix(
            rng: &mut ChaCha8Rng,
            rows: usize,
            cols: usize,
        ) -> Result<RealMatrix<f64>> {
            let a = 1.0 / (rows as f64).sqrt();
            RealMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..a))
        }
        fn projection(rng: &mut ChaCha8Rng, dim: usize) -> Result<AttentionProjection<f64>> {
            Ok(AttentionProjection {
                w_q: fan_in_matrix(rng, dim, dim)?,
                w_k: fan_in_matrix(rng, dim, dim)?,
                w_v: fan_in_matrix(rng, dim, dim)?,
            })
        }
        fn gru(rng: &mut ChaCha8Rng, e: usize, h: usize) -> Result<GruWeights<f64>> {
            Ok(GruWeights {
                w_update: fan_in_matrix(rng, e, h)?,
                u_update: fan_in_matrix(rng, h, h)?,
                w_reset: fan_in_matrix(rng, e, h)?,
                u_reset: fan_in_matrix(rng, h, h)?,
                w_cand: fan_in_matrix(rng, e, h)?,
                u_cand: fan_in_matrix(rng, h, h)?,
            })
        }

        let d = arch.feature_dim;
        let gcn_in = arch.category_vocab.len() + 4;
        let gcn = GcnParams {
            category_vocab: arch.category_vocab.clone(),
            layers: vec![
                GcnLayer {
                    weight: fan_in_matrix(&mut rng, gcn_in, arch.gcn_hidden)?,
                    activation: Activation::Relu,
                },
                GcnLayer {
                    weight: fan_in_matrix(&mut rng, arch.gcn_hidden, d)?,
                    activation: Activation::Identity,
                },
            ],
        };

        let fusion = FusionParams {
            sa_g: projection(&mut rng, d)?,
            sa_l: projection(&mut rng, d)?,
            ga_g: projection(&mut rng, d)?,
            ga_l: projection(&mut rng, d)?,
            w_alpha: fan_in_matrix(&mut rng, d, arch.fusion_hidden)?,
            w_beta: fan_in_matrix(&mut rng, arch.fusion_hidden, 2)?,
        };

        let text = TextEncoderParams {
            embedding: RealMatrix::from_fn(arch.vocab_size, arch.embed_dim, |_, _| {
                rng.gen_range(-0.5..0.5)
            })?,
            gru_forward: gru(&mut rng, arch.embed_dim, arch.text_hidden)?,
            gru_backward: gru(&mut rng, arch.embed_dim, arch.text_hidden)?,
            mlp_weight: fan_in_matrix(&mut rng, arch.text_hidden, d)?,
            mlp_bias: RealVector::zeros(d),
        };

        Ok(Self {
            graph,
            gcn,
            fusion,
            text,
        })
    }

    /// All visual-side weights (graph layers + fusion) flattened row-major.
    pub fn flatten_visual(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.gcn.layers {
            flat.extend_from_slice(layer.weight.data());
        }
        for p in [
            &self.fusion.sa_g,
            &self.fusion.sa_l,
            &self.fusion.ga_g,
            &self.fusion.ga_l,
        ] {
            flat.extend_from_slice(p.w_q.data());
            flat.extend_from_slice(p.w_k.data());
            flat.extend_from_slice(p.w_v.data());
        }
        flat.extend_from_slice(self.fusion.w_alpha.data());
        flat.extend_from_slice(self.fusion.w_beta.data());
        flat
    }

    /// All text-side weights flattened row-major, bias last.
    pub fn flatten_text(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        flat.extend_from_slice(self.text.embedding.data());
        for g in [&self.text.gru_forward, &self.text.gru_backward] {
            for m in [&g.w_update, &g.u_update, &g.w_reset, &g.u_reset, &g.w_cand, &g.u_cand] {
                flat.extend_from_slice(m.data());
            }
        }
        flat.extend_from_slice(self.text.mlp_weight.data());
        flat.extend_from_slice(self.text.mlp_bias.data());
        flat
    }

    /// Total trainable parameter count.
    pub fn num_params(&self) -> usize {
        self.flatten_visual().len() + self.flatten_text().len()
    }

    /// Rebuild with the visual-side weights replaced by `flat`.
    pub fn with_visual_flat(&self, flat: &[f64]) -> Result<Self> {
        let (gcn, fusion) = visual_parts_from_flat(&self.gcn, &self.fusion, flat)?;
        Ok(Self {
            gcn,
            fusion,
            ..self.clone()
        })
    }

    /// Rebuild with the text-side weights replaced by `flat`.
    pub fn with_text_flat(&self, flat: &[f64]) -> Result<Self> {
        Ok(Self {
            text: text_part_from_flat(&self.text, flat)?,
            ..self.clone()
        })
    }
}

fn visual_parts_from_flat(
    gcn_template: &GcnParams<f64>,
    fusion_template: &FusionParams<f64>,
    flat: &[f64],
) -> Result<(GcnParams<f64>, FusionParams<f64>)> {
    let mut cursor = Cursor::new(flat, "visual");
    let mut gcn = gcn_template.clone();
    for layer in &mut gcn.layers {
        layer.weight = cursor.take_like(&layer.weight)?;
    }
    let mut fusion = fusion_template.clone();
    for p in [
        &mut fusion.sa_g,
        &mut fusion.sa_l,
        &mut fusion.ga_g,
        &mut fusion.ga_l,
    ] {
        p.w_q = cursor.take_like(&p.w_q)?;
        p.w_k = cursor.take_like(&p.w_k)?;
        p.w_v = cursor.take_like(&p.w_v)?;
    }
    fusion.w_alpha = cursor.take_like(&fusion.w_alpha)?;
    fusion.w_beta = cursor.take_like(&fusion.w_beta)?;
    cursor.finish()?;
    Ok((gcn, fusion))
}

fn text_part_from_flat(
    template: &TextEncoderParams<f64>,
    flat: &[f64],
) -> Result<TextEncoderParams<f64>> {
    let mut cursor = Cursor::new(flat, "text");
    let mut text = template.clone();
    text.embedding = cursor.take_like(&text.embedding)?;
    for g in [&mut text.gru_forward, &mut text.gru_backward] {
        g.w_update = cursor.take_like(&g.w_update)?;
        g.u_update = cursor.take_like(&g.u_update)?;
        g.w_reset = cursor.take_like(&g.w_reset)?;
        g.u_reset = cursor.take_like(&g.u_reset)?;
        g.w_cand = cursor.take_like(&g.w_cand)?;
        g.u_cand = cursor.take_like(&g.u_cand)?;
    }
    text.mlp_weight = cursor.take_like(&text.mlp_weight)?;
    text.mlp_bias = RealVector::new(cursor.take_rest(text.mlp_bias.dim())?)?;
    Ok(text)
}

struct Cursor<'a> {
    rest: &'a [f64],
    side: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(rest: &'a [f64], side: &'static str) -> Self {
        Self { rest, side }
    }

    fn take_like(&mut self, template: &RealMatrix<f64>) -> Result<RealMatrix<f64>> {
        let need = template.rows() * template.cols();
        if self.rest.len() < need {
            return Err(CoreError::Shape(format!(
                "{} parameter vector too short",
                self.side
            )));
        }
        let (head, tail) = self.rest.split_at(need);
        self.rest = tail;
        RealMatrix::new(template.rows(), template.cols(), head.to_vec())
    }

    fn take_rest(&mut self, expected: usize) -> Result<Vec<f64>> {
        if self.rest.len() != expected {
            return Err(CoreError::Shape(format!(
                "{} parameter vector tail of {} values, expected {expected}",
                self.side,
                self.rest.len()
            )));
        }
        let out = self.rest.to_vec();
        self.rest = &[];
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if !self.rest.is_empty() {
            return Err(CoreError::Shape(format!(
                "{} parameter vector too long by {} values",
                self.side,
                self.rest.len()
            )));
        }
        Ok(())
    }
}

/// Visual forward pass: graph assembly, local features, fusion with the
/// scene's global features.
pub fn forward_visual(scene: &SyntheticScene, params: &ModelParams) -> Result<FusedVisual<f64>> {
    let graph = assemble_graph(
        &scene.detections,
        params.graph.threshold,
        params.graph.boost,
        params.graph.clamp,
    )?;
    forward_visual_on_graph(&graph, &scene.global_features, params)
}

fn forward_visual_on_graph(
    graph: &ObjectGraph<f64>,
    global: &FeatureSequence<f64>,
    params: &ModelParams,
) -> Result<FusedVisual<f64>> {
    let local = local_features(graph, &params.gcn)?;
    fuse_multilevel(global, local.as_ref(), &params.fusion)
}

/// Caption forward pass.
pub fn forward_text(scene: &SyntheticScene, params: &ModelParams) -> Result<RealVector<f64>> {
    encode_text(&scene.caption_token_ids, &params.text)
}

/// Loss trace and final weights of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// `trace[0]` is the initial loss; one entry per step follows.
    pub trace: Vec<f64>,
}

/// Full-batch gradient descent with central-difference gradients.
///
/// Each step differentiates the triplet loss against every trainable
/// parameter with [`finite_diff_gradient`]. The visual and text sides are
/// differentiated separately: the loss depends on a visual parameter only
/// through the visual embeddings, so the opposite side's embeddings are
/// computed once per step. Deterministic for fixed inputs; a non-finite loss
/// aborts the run.
pub fn train_toy(
    scenes: &[SyntheticScene],
    init: ModelParams,
    steps: usize,
    lr: f64,
    margin: f64,
) -> Result<TrainOutcome> {
    if scenes.len() < 2 {
        return Err(CoreError::Contract("training needs at least 2 pairs".into()));
    }
    if steps < 1 {
        return Err(CoreError::Contract("steps must be >= 1".into()));
    }

    init.gcn.validate()?;
    init.text.validate()?;

    // Graph assembly and input featurization do not depend on trainable
    // weights; cache them per scene.
    let mut caches = Vec::with_capacity(scenes.len());
    for s in scenes {
        let graph = assemble_graph(
            &s.detections,
            init.graph.threshold,
            init.graph.boost,
            init.graph.clamp,
        )?;
        let embedded = if graph.is_empty() {
            None
        } else {
            Some(embed_detections(&graph.nodes, &init.gcn.category_vocab)?)
        };
        caches.push((graph, embedded));
    }

    let visual_embeddings = |gcn: &GcnParams<f64>,
                             fusion: &FusionParams<f64>|
     -> Result<Vec<RealVector<f64>>> {
        scenes
            .iter()
            .zip(&caches)
            .map(|(s, (graph, embedded))| {
                let local = match embedded {
                    Some(input) => {
                        let mut features = input.clone();
                        for layer in &gcn.layers {
                            features = gcn_layer_forward(
                                &features,
                                &graph.operator,
                                &layer.weight,
                                layer.activation,
                            )?;
                        }
                        Some(features)
                    }
                    None => None,
                };
                Ok(fuse_multilevel(&s.global_features, local.as_ref(), fusion)?.vector)
            })
            .collect()
    };
    let text_embeddings = |text: &TextEncoderParams<f64>| -> Result<Vec<RealVector<f64>>> {
        scenes
            .iter()
            .map(|s| encode_text(&s.caption_token_ids, text))
            .collect()
    };

    let mut params = init;
    let mut trace = Vec::with_capacity(steps + 1);
    let h = DEFAULT_FD_STEP;

    let initial = triplet_loss(
        &visual_embeddings(&params.gcn, &params.fusion)?,
        &text_embeddings(&params.text)?,
        margin,
    )?;
    trace.push(initial);

    for step in 0..steps {
        let base_visual = visual_embeddings(&params.gcn, &params.fusion)?;
        let base_text = text_embeddings(&params.text)?;

        let visual_flat = RealVector::new(params.flatten_visual())?;
        let grad_visual = finite_diff_gradient(
            |flat| {
                let (gcn, fusion) =
                    visual_parts_from_flat(&params.gcn, &params.fusion, flat.data())?;
                triplet_loss(&visual_embeddings(&gcn, &fusion)?, &base_text, margin)
            },
            &visual_flat,
            h,
        )?;

        let text_flat = RealVector::new(params.flatten_text())?;
        let grad_text = finite_diff_gradient(
            |flat| {
                let text = text_part_from_flat(&params.text, flat.data())?;
                triplet_loss(&base_visual, &text_embeddings(&text)?, margin)
            },
            &text_flat,
            h,
        )?;

        let descend = |flat: &RealVector<f64>, grad: &RealVector<f64>| -> Vec<f64> {
            flat.data()
                .iter()
                .zip(grad.data())
                .map(|(p, g)| p - lr * g)
                .collect()
        };
        params = params
            .with_visual_flat(&descend(&visual_flat, &grad_visual))?
            .with_text_flat(&descend(&text_flat, &grad_text))?;

        let loss = triplet_loss(
            &visual_embeddings(&params.gcn, &params.fusion)?,
            &text_embeddings(&params.text)?,
            margin,
        )
        .map_err(|e| CoreError::NonFinite(format!("training aborted at step {step}: {e}")))?;
        if !loss.is_finite() {
            return Err(CoreError::NonFinite(format!(
                "training aborted at step {step}: loss is {loss}; trace so far: {trace:?}"
            )));
        }
        trace.push(loss);
    }

    Ok(TrainOutcome { params, trace })
}

/// Cross-modal similarity of a dataset under the given weights: scenes on
/// the query axis, captions on the target axis.
pub fn infer_similarity(
    scenes: &[SyntheticScene],
    params: &ModelParams,
) -> Result<SimilarityMatrix<f64>> {
    let visual: Vec<RealVector<f64>> = scenes
        .iter()
        .map(|s| Ok(forward_visual(s, params)?.vector))
        .collect::<Result<_>>()?;
    let text: Vec<RealVector<f64>> = scenes
        .iter()
        .map(|s| forward_text(s, params))
        .collect::<Result<_>>()?;

    let n = scenes.len();
    let mut data = Vec::with_capacity(n * n);
    for v in &visual {
        for t in &text {
            data.push(cosine_similarity(v, t)?);
        }
    }
    SimilarityMatrix::new(
        scenes.iter().map(|s| s.scene_id.clone()).collect(),
        scenes.iter().map(|s| s.caption_id.clone()).collect(),
        RealMatrix::new(n, n, data)?,
        Direction::I2t,
    )
}

/// Compare the analytic triplet-loss gradient against central differences on
/// a deterministic non-kink batch; returns the max relative error.
pub fn triplet_gradient_check(dim: usize, h: f64, margin: f64, seed: u64) -> Result<f64> {
    let batch = 3usize;
    let mut attempt_seed = seed;
    for _ in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
        let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<RealVector<f64>>> {
            (0..batch)
                .map(|_| RealVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect()
        };
        let images = draw(&mut rng)?;
        let texts = draw(&mut rng)?;

        let mut kink_free = images.iter().chain(&texts).all(|v| v.norm() > 0.1);
        if kink_free {
            'pairs: for i in 0..batch {
                let paired = cosine_similarity(&images[i], &texts[i])?;
                for j in 0..batch {
                    if j == i {
                        continue;
                    }
                    let a1 = margin - paired + cosine_similarity(&images[i], &texts[j])?;
                    let a2 = margin - paired + cosine_similarity(&images[j], &texts[i])?;
                    if a1.abs() < 1e-3 || a2.abs() < 1e-3 {
                        kink_free = false;
                        break 'pairs;
                    }
                }
            }
        }
        if !kink_free {
            attempt_seed = attempt_seed.wrapping_add(1);
            continue;
        }

        let (gi, gt) = triplet_loss_grad(&images, &texts, margin)?;
        let analytic: Vec<f64> = gi
            .iter()
            .chain(&gt)
            .flat_map(|v| v.data().to_vec())
            .collect();
        let flat: Vec<f64> = images
            .iter()
            .chain(&texts)
            .flat_map(|v| v.data().to_vec())
            .collect();
        let fd = finite_diff_gradient(
            |p| {
                let split = |offset: usize| -> Result<Vec<RealVector<f64>>> {
                    (0..batch)
                        .map(|i| {
                            let at = (offset + i) * dim;
                            RealVector::new(p.data()[at..at + dim].to_vec())
                        })
                        .collect()
                };
                triplet_loss(&split(0)?, &split(batch)?, margin)
            },
            &RealVector::new(flat)?,
            h,
        )?;

        let scale = analytic.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let max_rel = analytic
            .iter()
            .zip(fd.data())
            .map(|(a, f)| (a - f).abs() / scale)
            .fold(0.0f64, f64::max);
        return Ok(max_rel);
    }
    Err(CoreError::Contract(
        "no kink-free batch found in 100 seeded attempts".into(),
    ))
}
