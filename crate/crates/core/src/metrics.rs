//! Similarity matrices and retrieval evaluation (R@k, mR).

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::linalg::{cosine_similarity, RealMatrix, RealVector};
use crate::scalar::{cmp_finite, Scalar};
use crate::Result;

/// Retrieval direction tag carried by a similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    I2t,
    T2i,
    Generic,
}

impl Direction {
    /// Direction of the transposed matrix.
    pub fn flipped(self) -> Self {
        match self {
            Direction::I2t => Direction::T2i,
            Direction::T2i => Direction::I2t,
            Direction::Generic => Direction::Generic,
        }
    }
}

/// M x N score matrix between identified queries (rows) and targets (cols).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<S: Scalar> {
    query_ids: Vec<String>,
    target_ids: Vec<String>,
    scores: RealMatrix<S>,
    direction: Direction,
}

impl<S: Scalar> SimilarityMatrix<S> {
    pub fn new(
        query_ids: Vec<String>,
        target_ids: Vec<String>,
        scores: RealMatrix<S>,
        direction: Direction,
    ) -> Result<Self> {
        if scores.rows() != query_ids.len() || scores.cols() != target_ids.len() {
            return Err(CoreError::Shape(format!(
                "scores {}x{} vs {} query ids and {} target ids",
                scores.rows(),
                scores.cols(),
                query_ids.len(),
                target_ids.len()
            )));
        }
        check_unique(&query_ids, "query")?;
        check_unique(&target_ids, "target")?;
        Ok(Self {
            query_ids,
            target_ids,
            scores,
            direction,
        })
    }

    pub fn query_ids(&self) -> &[String] {
        &self.query_ids
    }

    pub fn target_ids(&self) -> &[String] {
        &self.target_ids
    }

    pub fn scores(&self) -> &RealMatrix<S> {
        &self.scores
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn num_queries(&self) -> usize {
        self.query_ids.len()
    }

    pub fn num_targets(&self) -> usize {
        self.target_ids.len()
    }

    pub fn query_index(&self, id: &str) -> Result<usize> {
        self.query_ids
            .iter()
            .position(|q| q == id)
            .ok_or_else(|| CoreError::Lookup {
                kind: "query",
                id: id.to_string(),
            })
    }

    pub fn target_index(&self, id: &str) -> Result<usize> {
        self.target_ids
            .iter()
            .position(|t| t == id)
            .ok_or_else(|| CoreError::Lookup {
                kind: "target",
                id: id.to_string(),
            })
    }

    /// Column `j` as a dense vector of scores over all queries.
    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.num_queries())
            .map(|i| self.scores.get(i, j))
            .collect()
    }

    /// Swap the axes; the direction label flips with them.
    pub fn transpose(&self) -> Self {
        Self {
            query_ids: self.target_ids.clone(),
            target_ids: self.query_ids.clone(),
            scores: self.scores.transpose(),
            direction: self.direction.flipped(),
        }
    }

    /// Rescale every score, keeping validation.
    pub fn scale(&self, factor: S) -> Result<Self> {
        let scaled = RealMatrix::new(
            self.scores.rows(),
            self.scores.cols(),
            self.scores.data().iter().map(|v| *v * factor).collect(),
        )?;
        Self::new(
            self.query_ids.clone(),
            self.target_ids.clone(),
            scaled,
            self.direction,
        )
    }
}

fn check_unique(ids: &[String], axis: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(CoreError::Validation {
                line: 0,
                msg: format!("duplicate {axis} identifier {id:?}"),
            });
        }
    }
    Ok(())
}

/// Ground-truth positives per query. Sets are nonempty by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroundTruthRepr")]
pub struct GroundTruth {
    positives: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRepr {
    positives: BTreeMap<String, BTreeSet<String>>,
}

impl TryFrom<GroundTruthRepr> for GroundTruth {
    type Error = CoreError;

    fn try_from(repr: GroundTruthRepr) -> Result<Self> {
        GroundTruth::new(repr.positives)
    }
}

impl GroundTruth {
    pub fn new(positives: BTreeMap<String, BTreeSet<String>>) -> Result<Self> {
        for (query, targets) in &positives {
            if targets.is_empty() {
                return Err(CoreError::Validation {
                    line: 0,
                    msg: format!("query {query:?} has an empty positive set"),
                });
            }
        }
        Ok(Self { positives })
    }

    /// Pairwise ground truth from aligned (query, target) id pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut positives: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (q, t) in pairs {
            positives.entry(q).or_default().insert(t);
        }
        Self::new(positives)
    }

    pub fn positives(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.positives
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    /// Ground truth for the transposed matrix: each positive pair reversed.
    pub fn inverted(&self) -> Result<Self> {
        Self::from_pairs(
            self.positives
                .iter()
                .flat_map(|(q, ts)| ts.iter().map(move |t| (t.clone(), q.clone()))),
        )
    }
}

/// One ranked retrieval result.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedTarget<S: Scalar> {
    pub target_id: String,
    pub score: S,
    /// 0-based rank position.
    pub position: usize,
}

/// Indices of `values` sorted by score descending, ties by ascending index.
pub(crate) fn argsort_desc<S: Scalar>(values: &[S]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp_finite(values[b], values[a]).then(a.cmp(&b)));
    order
}

/// Cosine-similarity matrix between two vector collections.
///
/// Row `i`, column `j` holds `cos(queries[i], targets[j])`. Identifiers are
/// synthesized as `q0..` / `t0..`; use [`SimilarityMatrix::new`] directly
/// when real identifiers exist.
pub fn build_similarity<S: Scalar>(
    queries: &[RealVector<S>],
    targets: &[RealVector<S>],
) -> Result<SimilarityMatrix<S>> {
    let mut data = Vec::with_capacity(queries.len() * targets.len());
    for q in queries {
        for t in targets {
            data.push(cosine_similarity(q, t)?);
        }
    }
    let scores = RealMatrix::new(queries.len(), targets.len(), data)?;
    SimilarityMatrix::new(
        (0..queries.len()).map(|i| format!("q{i}")).collect(),
        (0..targets.len()).map(|j| format!("t{j}")).collect(),
        scores,
        Direction::Generic,
    )
}

/// Top ranked targets for one query, score descending, deterministic
/// tie-break by ascending target index.
pub fn rank_targets<S: Scalar>(
    sim: &SimilarityMatrix<S>,
    query: &str,
    top: usize,
) -> Result<Vec<RankedTarget<S>>> {
    if top < 1 || top > sim.num_targets() {
        return Err(CoreError::Contract(format!(
            "top must be in 1..={}, got {top}",
            sim.num_targets()
        )));
    }
    let qi = sim.query_index(query)?;
    let row = sim.scores().row(qi);
    Ok(argsort_desc(row)
        .into_iter()
        .take(top)
        .enumerate()
        .map(|(position, j)| RankedTarget {
            target_id: sim.target_ids()[j].clone(),
            score: row[j],
            position,
        })
        .collect())
}

/// R@k as a percentage: the share of ground-truth queries whose top-k
/// contains at least one positive. `k` is clamped to the target count.
pub fn recall_at_k<S: Scalar>(
    sim: &SimilarityMatrix<S>,
    gt: &GroundTruth,
    k: usize,
) -> Result<f64> {
    if k < 1 {
        return Err(CoreError::Contract("k must be >= 1".into()));
    }
    if gt.is_empty() {
        return Err(CoreError::Contract("ground truth is empty".into()));
    }
    let top = k.min(sim.num_targets());
    let mut hits = 0usize;
    for (query, positives) in gt.positives() {
        for t in positives {
            sim.target_index(t)?;
        }
        let ranked = rank_targets(sim, query, top)?;
        if ranked.iter().any(|r| positives.contains(&r.target_id)) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / gt.positives().len() as f64)
}

/// Mean of the six R@{1,5,10} values across both directions.
pub fn mean_recall(recalls: &[f64]) -> Result<f64> {
    if recalls.len() != 6 {
        return Err(CoreError::Shape(format!(
            "mean recall needs exactly 6 values, got {}",
            recalls.len()
        )));
    }
    Ok(recalls.iter().sum::<f64>() / 6.0)
}

/// R@k over explicit per-query rankings (e.g. re-ranked output).
pub fn recall_from_rankings(
    rankings: &[(String, Vec<String>)],
    gt: &GroundTruth,
    k: usize,
) -> Result<f64> {
    if k < 1 {
        return Err(CoreError::Contract("k must be >= 1".into()));
    }
    if gt.is_empty() {
        return Err(CoreError::Contract("ground truth is empty".into()));
    }
    let mut hits = 0usize;
    for (query, positives) in gt.positives() {
        let ranking = rankings
            .iter()
            .find(|(q, _)| q == query)
            .map(|(_, ids)| ids)
            .ok_or_else(|| CoreError::Lookup {
                kind: "query",
                id: query.clone(),
            })?;
        if ranking.iter().take(k).any(|t| positives.contains(t)) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / gt.positives().len() as f64)
}
