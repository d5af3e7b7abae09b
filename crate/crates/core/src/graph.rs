//! Detection-graph preprocessing.
//!
//! Redundant same-category detections are merged to a fixpoint, survivors
//! are ranked by area, and the pairwise distance kernel — boosted for
//! large-area pairs — becomes the adjacency matrix behind a symmetric
//! normalized propagation operator.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::linalg::RealMatrix;
use crate::scalar::{cmp_finite, Scalar};
use crate::Result;

/// One detected object with normalized geometry.
///
/// JSON form (one object per JSONL line):
/// `{"id": "...", "category": "...", "cx": 0.42, "cy": 0.17, "area": 0.031, "prob": 0.93}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionRepr<S>", bound(deserialize = "S: Scalar"))]
pub struct Detection<S: Scalar> {
    pub id: String,
    pub category: String,
    /// Center x in [0,1].
    pub cx: S,
    /// Center y in [0,1].
    pub cy: S,
    /// Fraction of total image pixels, in (0,1].
    pub area: S,
    /// Detector confidence, in (0,1].
    pub prob: S,
}

#[derive(Deserialize)]
struct DetectionRepr<S> {
    id: String,
    category: String,
    cx: S,
    cy: S,
    area: S,
    prob: S,
}

impl<S: Scalar> TryFrom<DetectionRepr<S>> for Detection<S> {
    type Error = CoreError;

    fn try_from(r: DetectionRepr<S>) -> Result<Self> {
        Detection::new(r.id, r.category, r.cx, r.cy, r.area, r.prob)
    }
}

impl<S: Scalar> Detection<S> {
    pub fn new(id: String, category: String, cx: S, cy: S, area: S, prob: S) -> Result<Self> {
        let zero = S::zero();
        let one = S::one();
        let in_unit = |v: S| v.is_finite() && v >= zero && v <= one;
        if !in_unit(cx) || !in_unit(cy) {
            return Err(CoreError::Validation {
                line: 0,
                msg: format!("center ({cx}, {cy}) outside [0,1] for detection {id:?}"),
            });
        }
        if !(area.is_finite() && area > zero && area <= one) {
            return Err(CoreError::Validation {
                line: 0,
                msg: format!("area {area} outside (0,1] for detection {id:?}"),
            });
        }
        if !(prob.is_finite() && prob > zero && prob <= one) {
            return Err(CoreError::Validation {
                line: 0,
                msg: format!("prob {prob} outside (0,1] for detection {id:?}"),
            });
        }
        Ok(Self {
            id,
            category,
            cx,
            cy,
            area,
            prob,
        })
    }
}

/// Merged node list plus the adjacency stack derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct ObjectGraph<S: Scalar> {
    /// Post-merge detections in descending-area order.
    pub nodes: Vec<Detection<S>>,
    /// Enhanced adjacency, zero diagonal, symmetric.
    #[serde(rename = "adjacency_A")]
    pub adjacency: RealMatrix<S>,
    /// Self-looped adjacency: `adjacency + I`.
    pub adjacency_tilde: RealMatrix<S>,
    /// Symmetric normalization of `adjacency_tilde` by its row sums.
    pub operator: RealMatrix<S>,
}

impl<S: Scalar> ObjectGraph<S> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Distance kernel between two detections: `exp(-s) * (1 - s)` with `s` the
/// squared Euclidean distance of the centers. Peaks at 1 for coincident
/// centers and goes negative for `s > 1` unless clamped at zero.
pub fn adjacency_distance<S: Scalar>(x: &Detection<S>, y: &Detection<S>, clamp: bool) -> S {
    let dx = x.cx - y.cx;
    let dy = x.cy - y.cy;
    let s = dx * dx + dy * dy;
    let d = (-s).exp() * (S::one() - s);
    if clamp {
        d.max(S::zero())
    } else {
        d
    }
}

/// True when two detections are close enough (unclamped kernel above the
/// threshold) and share a category, i.e. they should be merged.
pub fn filtration_check<S: Scalar>(x: &Detection<S>, y: &Detection<S>, threshold: S) -> bool {
    x.category == y.category && adjacency_distance(x, y, false) > threshold
}

/// Integrate two detections that passed [`filtration_check`]: mean center,
/// saturating area sum, max confidence.
pub fn merge_pair<S: Scalar>(x: &Detection<S>, y: &Detection<S>, threshold: S) -> Result<Detection<S>> {
    if !filtration_check(x, y, threshold) {
        return Err(CoreError::Contract(format!(
            "detections {:?} and {:?} do not satisfy the filtration criterion",
            x.id, y.id
        )));
    }
    let half = S::of(0.5);
    Detection::new(
        format!("{}+{}", x.id, y.id),
        x.category.clone(),
        (x.cx + y.cx) * half,
        (x.cy + y.cy) * half,
        (x.area + y.area).min(S::one()),
        x.prob.max(y.prob),
    )
}

/// Merge qualifying pairs until none remain.
///
/// Order is canonical: scan pairs by (ascending i, ascending j), merge the
/// first qualifying pair, append the merged node at the end, restart. Each
/// merge removes one node, so the loop terminates.
pub fn merge_until_fixpoint<S: Scalar>(
    detections: &[Detection<S>],
    threshold: S,
) -> Result<Vec<Detection<S>>> {
    check_threshold(threshold)?;
    let mut nodes: Vec<Detection<S>> = detections.to_vec();
    'scan: loop {
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                if filtration_check(&nodes[i], &nodes[j], threshold) {
                    let merged = merge_pair(&nodes[i], &nodes[j], threshold)?;
                    nodes.remove(j);
                    nodes.remove(i);
                    nodes.push(merged);
                    continue 'scan;
                }
            }
        }
        return Ok(nodes);
    }
}

fn check_threshold<S: Scalar>(threshold: S) -> Result<()> {
    if !(threshold > S::zero() && threshold < S::one()) {
        return Err(CoreError::Contract(format!(
            "filtration threshold must lie in (0,1), got {threshold}"
        )));
    }
    Ok(())
}

/// Detections sorted by descending area with 1-based ranks; equal areas keep
/// their input order.
pub fn rank_by_area<S: Scalar>(detections: &[Detection<S>]) -> Vec<(Detection<S>, usize)> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        cmp_finite(detections[b].area, detections[a].area).then(a.cmp(&b))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(idx, i)| (detections[i].clone(), idx + 1))
        .collect()
}

/// Adjacency over area-ranked detections.
///
/// Off-diagonal entry for ranks (m, n) is
/// `boost * exp(1 - sqrt(m * n)) * adjacency_distance`; the diagonal is zero
/// and the result is symmetric. Input order must match the ranks, i.e. come
/// from [`rank_by_area`].
pub fn enhanced_adjacency<S: Scalar>(
    ranked: &[(Detection<S>, usize)],
    boost: S,
    clamp: bool,
) -> Result<RealMatrix<S>> {
    if boost <= S::zero() {
        return Err(CoreError::Contract(format!(
            "boost factor must be > 0, got {boost}"
        )));
    }
    let n = ranked.len();
    RealMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return S::zero();
        }
        let (ref di, rank_i) = ranked[i];
        let (ref dj, rank_j) = ranked[j];
        let gain = (S::one() - S::of((rank_i * rank_j) as f64).sqrt()).exp();
        boost * gain * adjacency_distance(di, dj, clamp)
    })
}

/// Full graph assembly: merge, rank, build the enhanced adjacency, and
/// normalize.
///
/// With the clamp off, strongly negative kernels can produce a non-positive
/// row sum, which is reported as a degenerate degree rather than propagated
/// into the normalization.
pub fn assemble_graph<S: Scalar>(
    detections: &[Detection<S>],
    threshold: S,
    boost: S,
    clamp: bool,
) -> Result<ObjectGraph<S>> {
    let merged = merge_until_fixpoint(detections, threshold)?;
    let ranked = rank_by_area(&merged);
    let adjacency = enhanced_adjacency(&ranked, boost, clamp)?;
    let n = ranked.len();
    let adjacency_tilde = adjacency.add(&RealMatrix::identity(n))?;

    let mut inv_sqrt_degree = Vec::with_capacity(n);
    for i in 0..n {
        let degree: S = adjacency_tilde.row(i).iter().copied().sum();
        if degree <= S::zero() {
            return Err(CoreError::Degenerate(format!(
                "row sum {degree} of the self-looped adjacency at node {i} is not positive"
            )));
        }
        inv_sqrt_degree.push(S::one() / degree.sqrt());
    }
    let operator = RealMatrix::from_fn(n, n, |i, j| {
        inv_sqrt_degree[i] * adjacency_tilde.get(i, j) * inv_sqrt_degree[j]
    })?;

    Ok(ObjectGraph {
        nodes: ranked.into_iter().map(|(d, _)| d).collect(),
        adjacency,
        adjacency_tilde,
        operator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(id: &str, category: &str, cx: f64, cy: f64, area: f64, prob: f64) -> Detection<f64> {
        Detection::new(id.into(), category.into(), cx, cy, area, prob).unwrap()
    }

    #[test]
    fn detection_validation() {
        assert!(Detection::<f64>::new("a".into(), "car".into(), 1.5, 0.0, 0.1, 0.5).is_err());
        assert!(Detection::<f64>::new("a".into(), "car".into(), 0.5, 0.0, 0.0, 0.5).is_err());
        assert!(Detection::<f64>::new("a".into(), "car".into(), 0.5, 0.0, 1.5, 0.5).is_err());
        assert!(Detection::<f64>::new("a".into(), "car".into(), 0.5, 0.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn kernel_point_values() {
        let a = det("a", "car", 0.3, 0.7, 0.1, 0.9);
        assert_eq!(adjacency_distance(&a, &a, false), 1.0);

        let b = det("b", "car", 0.0, 0.0, 0.1, 0.9);
        let c = det("c", "car", 0.5, 0.0, 0.1, 0.9);
        let d = adjacency_distance(&b, &c, false);
        assert!((d - (-0.25f64).exp() * 0.75).abs() < 1e-15);
        assert!((d - 0.58412).abs() < 1e-4);

        let e = det("e", "car", 1.0, 1.0, 0.1, 0.9);
        let un = adjacency_distance(&b, &e, false);
        assert!((un - (-2.0f64).exp() * (1.0 - 2.0)).abs() < 1e-12);
        assert!(un < 0.0);
        assert_eq!(adjacency_distance(&b, &e, true), 0.0);
    }

    #[test]
    fn kernel_is_symmetric() {
        let a = det("a", "car", 0.1, 0.9, 0.1, 0.9);
        let b = det("b", "ship", 0.8, 0.2, 0.2, 0.8);
        assert_eq!(
            adjacency_distance(&a, &b, false),
            adjacency_distance(&b, &a, false)
        );
    }

    #[test]
    fn filtration_gates() {
        let a = det("a", "car", 0.2, 0.2, 0.1, 0.9);
        let same_spot_same_cat = det("b", "car", 0.2, 0.2, 0.1, 0.9);
        let same_spot_other_cat = det("c", "ship", 0.2, 0.2, 0.1, 0.9);
        let far_same_cat = det("d", "car", 0.7, 0.2, 0.1, 0.9);
        assert!(filtration_check(&a, &same_spot_same_cat, 0.8));
        assert!(!filtration_check(&a, &same_spot_other_cat, 0.8));
        // kernel at squared distance 0.25 is ~0.584 < 0.8
        assert!(!filtration_check(&a, &far_same_cat, 0.8));
    }

    #[test]
    fn merge_pair_hand_case() {
        let x = det("x", "car", 0.2, 0.2, 0.01, 0.6);
        let y = det("y", "car", 0.3, 0.2, 0.03, 0.9);
        let z = merge_pair(&x, &y, 0.8).unwrap();
        assert!((z.cx - 0.25).abs() < 1e-15);
        assert!((z.cy - 0.2).abs() < 1e-15);
        assert!((z.area - 0.04).abs() < 1e-15);
        assert_eq!(z.prob, 0.9);
        assert_eq!(z.category, "car");
        assert_eq!(z.id, "x+y");
    }

    #[test]
    fn merge_pair_saturates_area() {
        let x = det("x", "car", 0.5, 0.5, 0.7, 0.6);
        let y = det("y", "car", 0.5, 0.5, 0.7, 0.7);
        let z = merge_pair(&x, &y, 0.8).unwrap();
        assert_eq!(z.area, 1.0);
    }

    #[test]
    fn merge_pair_requires_filtration() {
        let x = det("x", "car", 0.0, 0.0, 0.1, 0.5);
        let y = det("y", "ship", 0.0, 0.0, 0.1, 0.5);
        assert!(matches!(
            merge_pair(&x, &y, 0.8),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn fixpoint_empty_and_untouched_inputs() {
        assert!(merge_until_fixpoint::<f64>(&[], 0.8).unwrap().is_empty());

        let dets = vec![
            det("a", "car", 0.1, 0.1, 0.1, 0.9),
            det("b", "ship", 0.1, 0.1, 0.1, 0.9),
            det("c", "car", 0.9, 0.9, 0.1, 0.9),
        ];
        let merged = merge_until_fixpoint(&dets, 0.8).unwrap();
        assert_eq!(merged, dets);
    }

    #[test]
    fn fixpoint_collapses_stacked_detections() {
        let dets = vec![
            det("a", "car", 0.4, 0.4, 0.2, 0.5),
            det("b", "car", 0.4, 0.4, 0.3, 0.8),
            det("c", "car", 0.4, 0.4, 0.1, 0.6),
        ];
        let merged = merge_until_fixpoint(&dets, 0.8).unwrap();
        assert_eq!(merged.len(), 1);
        assert!((merged[0].area - 0.6).abs() < 1e-15);
        assert_eq!(merged[0].prob, 0.8);
        // canonical order merges (a,b) first, then c with the appended node
        assert_eq!(merged[0].id, "c+a+b");
    }

    #[test]
    fn rank_by_area_orders_and_breaks_ties() {
        let dets = vec![
            det("a", "car", 0.1, 0.1, 0.1, 0.9),
            det("b", "car", 0.9, 0.1, 0.5, 0.9),
            det("c", "car", 0.1, 0.9, 0.3, 0.9),
        ];
        let ranked = rank_by_area(&dets);
        let ids: Vec<_> = ranked.iter().map(|(d, _)| d.id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert_eq!(
            ranked.iter().map(|(_, r)| *r).collect::<Vec<_>>(),
            [1, 2, 3]
        );

        let equal = vec![
            det("x", "car", 0.1, 0.1, 0.2, 0.9),
            det("y", "car", 0.9, 0.9, 0.2, 0.9),
        ];
        let ranked = rank_by_area(&equal);
        assert_eq!(ranked[0].0.id, "x");
        assert_eq!(ranked[1].0.id, "y");

        let single = rank_by_area(&equal[..1]);
        assert_eq!(single[0].1, 1);
    }

    #[test]
    fn enhanced_adjacency_boost_base() {
        // Coincident centers make the kernel 1, isolating the rank gain.
        let dets = vec![
            det("a", "car", 0.5, 0.5, 0.4, 0.9),
            det("b", "ship", 0.5, 0.5, 0.2, 0.9),
        ];
        let ranked = rank_by_area(&dets);
        let a = enhanced_adjacency(&ranked, 1.15, true).unwrap();
        let expected = 1.15 * (1.0 - 2.0f64.sqrt()).exp();
        assert!((a.get(0, 1) - expected).abs() < 1e-12);
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.get(0, 1), a.get(1, 0));
        // off-diagonal gains never exceed the rank-(1,2) base
        assert!(a.get(0, 1) <= 1.15 * (1.0 - 2.0f64.sqrt()).exp() + 1e-15);
    }

    #[test]
    fn enhanced_adjacency_single_node_is_zero() {
        let dets = vec![det("a", "car", 0.5, 0.5, 0.4, 0.9)];
        let ranked = rank_by_area(&dets);
        let a = enhanced_adjacency(&ranked, 1.15, true).unwrap();
        assert_eq!(a.rows(), 1);
        assert_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn assemble_single_node_operator_is_one() {
        let graph = assemble_graph(
            &[det("a", "car", 0.5, 0.5, 0.4, 0.9)],
            0.8,
            1.15,
            true,
        )
        .unwrap();
        assert_eq!(graph.operator.get(0, 0), 1.0);
        assert_eq!(graph.adjacency_tilde.get(0, 0), 1.0);
    }

    #[test]
    fn assemble_far_apart_pair_gives_identity_operator() {
        // Squared distance 2 clamps the kernel to zero.
        let graph = assemble_graph(
            &[
                det("a", "car", 0.0, 0.0, 0.4, 0.9),
                det("b", "car", 1.0, 1.0, 0.2, 0.9),
            ],
            0.8,
            1.15,
            true,
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(graph.operator.get(i, j), expected);
            }
        }
    }

    #[test]
    fn assemble_two_node_closed_form() {
        let graph = assemble_graph(
            &[
                det("a", "car", 0.40, 0.5, 0.4, 0.9),
                det("b", "ship", 0.55, 0.5, 0.2, 0.9),
            ],
            0.8,
            1.15,
            true,
        )
        .unwrap();
        let a = graph.adjacency.get(0, 1);
        assert!(a > 0.0);
        for (i, j, expected) in [
            (0, 0, 1.0 / (1.0 + a)),
            (1, 1, 1.0 / (1.0 + a)),
            (0, 1, a / (1.0 + a)),
            (1, 0, a / (1.0 + a)),
        ] {
            assert!((graph.operator.get(i, j) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn assemble_empty_input_gives_empty_graph() {
        let graph = assemble_graph::<f64>(&[], 0.8, 1.15, true).unwrap();
        assert!(graph.is_empty());
        assert_eq!(graph.operator.rows(), 0);
    }

    #[test]
    fn unclamped_negative_degree_is_reported() {
        // Two same-category nodes too far to merge but with a strongly
        // negative kernel: the off-diagonal entry drags a row sum below zero
        // only when it is < -1; rank gain keeps magnitudes small, so use
        // boost to force it negative enough.
        let dets = vec![
            det("a", "car", 0.0, 0.0, 0.4, 0.9),
            det("b", "car", 1.0, 1.0, 0.2, 0.9),
        ];
        let res = assemble_graph(&dets, 0.8, 12.0, false);
        assert!(matches!(res, Err(CoreError::Degenerate(_))));
    }

    #[test]
    fn graph_json_round_trip() {
        let graph = assemble_graph(
            &[
                det("a", "car", 0.4, 0.5, 0.4, 0.9),
                det("b", "ship", 0.5, 0.5, 0.2, 0.9),
            ],
            0.8,
            1.15,
            true,
        )
        .unwrap();
        let json = serde_json::to_string(&graph).unwrap();
        assert!(json.contains("\"adjacency_A\""));
        let back: ObjectGraph<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(graph, back);
    }
}
