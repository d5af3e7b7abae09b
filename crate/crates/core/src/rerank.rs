//! Multivariate re-ranking of retrieval candidates.
//!
//! For each query, the top-k forward candidates are rescored by three
//! components and re-sorted, without touching the underlying model:
//!
//! - a forward component `exp(-xi * (P_m + 1))` from the candidate's
//!   original rank `P_m`,
//! - a reverse component: the same decay applied to the query's position in
//!   the candidate's own top-l reverse retrieval, or exactly 0 when the
//!   query does not appear there,
//! - a significance component: the candidate's score for the query divided
//!   by the sum of the candidate's scores over every reverse-side item.
//!
//! The final score is `c_fwd + w_c1 * c_rev + w_c2 * c_sig`. Candidates
//! beyond the top-k keep their original relative order after the rescored
//! block.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::metrics::{argsort_desc, SimilarityMatrix};
use crate::scalar::{cmp_finite, Scalar};
use crate::Result;

/// Denominator magnitudes below this are reported as degenerate rather than
/// silently zeroed.
pub const SIGNIFICANCE_DENOM_EPS: f64 = 1e-12;

/// Re-ranking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    /// Forward candidates taken per query.
    pub k: usize,
    /// Reverse candidates inspected per forward candidate.
    pub l: usize,
    /// Ranking decay coefficient, > 0.
    pub xi: f64,
    /// Weight of the reverse component.
    pub w_c1: f64,
    /// Weight of the significance component.
    pub w_c2: f64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            k: 25,
            l: 25,
            xi: 0.1,
            w_c1: 0.5,
            w_c2: 1.25,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.l < 1 {
            return Err(CoreError::Contract("k and l must be >= 1".into()));
        }
        if self.xi.is_nan() || self.xi <= 0.0 {
            return Err(CoreError::Contract("xi must be > 0".into()));
        }
        if self.w_c1 < 0.0 || self.w_c2 < 0.0 {
            return Err(CoreError::Contract("weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// One rescored candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankEntry<S: Scalar> {
    pub target_id: String,
    /// Combined re-ranking score.
    pub score: S,
    /// 0-based rank in the original forward retrieval.
    pub original_rank: usize,
}

/// Re-ranked result for one query: the rescored block followed by the
/// untouched tail.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankedList<S: Scalar> {
    pub query_id: String,
    pub entries: Vec<RerankEntry<S>>,
    /// Targets beyond the top-k, in their original ranked order.
    pub tail: Vec<String>,
}

impl<S: Scalar> RerankedList<S> {
    /// Full ranking: rescored block first, then the tail.
    pub fn ranked_ids(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .map(|e| e.target_id.as_str())
            .chain(self.tail.iter().map(|t| t.as_str()))
    }
}

/// Rank-decay score for a 0-based forward rank.
pub fn forward_component<S: Scalar>(original_rank: usize, xi: S) -> S {
    (-xi * S::of(original_rank as f64 + 1.0)).exp()
}

/// Reverse-retrieval confirmation for `candidate` against `query`.
///
/// The candidate queries the transposed matrix; if `query` lands in its
/// top-l (same descending-score, ascending-index tie-break), the decayed
/// position is returned, otherwise exactly zero.
pub fn reverse_component<S: Scalar>(
    sim: &SimilarityMatrix<S>,
    candidate: &str,
    query: &str,
    l: usize,
    xi: S,
) -> Result<S> {
    let ci = sim.target_index(candidate)?;
    let qi = sim.query_index(query)?;
    let column = sim.column(ci);
    let order = argsort_desc(&column);
    let position = order.iter().take(l).position(|&i| i == qi);
    Ok(match position {
        Some(p) => forward_component(p, xi),
        None => S::zero(),
    })
}

/// Share of the candidate's reverse-side mass assigned to `query`, using raw
/// stored scores. A vanishing denominator is an error, not a silent zero.
pub fn significance_component<S: Scalar>(
    sim: &SimilarityMatrix<S>,
    candidate: &str,
    query: &str,
) -> Result<S> {
    let ci = sim.target_index(candidate)?;
    let qi = sim.query_index(query)?;
    let column = sim.column(ci);
    let denom: S = column.iter().copied().sum();
    if denom.abs() < S::of(SIGNIFICANCE_DENOM_EPS) {
        return Err(CoreError::Degenerate(format!(
            "significance denominator {denom} for candidate {candidate:?} is below {SIGNIFICANCE_DENOM_EPS}"
        )));
    }
    Ok(column[qi] / denom)
}

/// Re-rank every query's top-k candidates by the combined score.
///
/// `k` is clamped to the target count. Ties in the combined score break by
/// original rank, so a weightless configuration reproduces the input order.
pub fn multivariate_rerank<S: Scalar>(
    sim: &SimilarityMatrix<S>,
    config: &RerankConfig,
) -> Result<Vec<RerankedList<S>>> {
    config.validate()?;
    let xi = S::of(config.xi);
    let w1 = S::of(config.w_c1);
    let w2 = S::of(config.w_c2);
    let k = config.k.min(sim.num_targets());

    // Reverse rankings are per-candidate; compute each column once.
    let reverse_orders: Vec<Vec<usize>> = (0..sim.num_targets())
        .map(|j| argsort_desc(&sim.column(j)))
        .collect();
    let column_sums: Vec<S> = (0..sim.num_targets())
        .map(|j| sim.column(j).iter().copied().sum())
        .collect();

    let mut out = Vec::with_capacity(sim.num_queries());
    for (qi, query_id) in sim.query_ids().iter().enumerate() {
        let row = sim.scores().row(qi);
        let forward_order = argsort_desc(row);

        let mut entries = Vec::with_capacity(k);
        for (rank, &ci) in forward_order.iter().take(k).enumerate() {
            let c_fwd = forward_component(rank, xi);
            let c_rev = match reverse_orders[ci].iter().take(config.l).position(|&i| i == qi)
            {
                Some(p) => forward_component(p, xi),
                None => S::zero(),
            };
            let denom = column_sums[ci];
            if denom.abs() < S::of(SIGNIFICANCE_DENOM_EPS) {
                return Err(CoreError::Degenerate(format!(
                    "significance denominator {denom} for candidate {:?} of query {query_id:?}",
                    sim.target_ids()[ci]
                )));
            }
            let c_sig = sim.scores().get(qi, ci) / denom;
            entries.push(RerankEntry {
                target_id: sim.target_ids()[ci].clone(),
                score: c_fwd + w1 * c_rev + w2 * c_sig,
                original_rank: rank,
            });
        }
        entries.sort_by(|a, b| {
            cmp_finite(b.score, a.score).then(a.original_rank.cmp(&b.original_rank))
        });

        let tail = forward_order
            .iter()
            .skip(k)
            .map(|&ci| sim.target_ids()[ci].clone())
            .collect();
        out.push(RerankedList {
            query_id: query_id.clone(),
            entries,
            tail,
        });
    }
    Ok(out)
}

/// Simplified reverse-rank baseline: top-k candidates sorted by the query's
/// position in their reverse retrieval (absent counts as position `l`), ties
/// by original rank.
pub fn baseline_reverse_rerank<S: Scalar>(
    sim: &SimilarityMatrix<S>,
    k: usize,
    l: usize,
) -> Result<Vec<RerankedList<S>>> {
    if k < 1 || l < 1 {
        return Err(CoreError::Contract("k and l must be >= 1".into()));
    }
    let k = k.min(sim.num_targets());
    let reverse_orders: Vec<Vec<usize>> = (0..sim.num_targets())
        .map(|j| argsort_desc(&sim.column(j)))
        .collect();

    let mut out = Vec::with_capacity(sim.num_queries());
    for (qi, query_id) in sim.query_ids().iter().enumerate() {
        let row = sim.scores().row(qi);
        let forward_order = argsort_desc(row);

        let mut scored: Vec<(usize, usize, usize)> = forward_order
            .iter()
            .take(k)
            .enumerate()
            .map(|(rank, &ci)| {
                let pos = reverse_orders[ci]
                    .iter()
                    .take(l)
                    .position(|&i| i == qi)
                    .unwrap_or(l);
                (ci, rank, pos)
            })
            .collect();
        scored.sort_by(|a, b| a.2.cmp(&b.2).then(a.1.cmp(&b.1)));

        let entries = scored
            .into_iter()
            .map(|(ci, rank, pos)| RerankEntry {
                target_id: sim.target_ids()[ci].clone(),
                // Larger is better, mirroring the combined-score convention.
                score: S::of((l - pos) as f64),
                original_rank: rank,
            })
            .collect();
        let tail = forward_order
            .iter()
            .skip(k)
            .map(|&ci| sim.target_ids()[ci].clone())
            .collect();
        out.push(RerankedList {
            query_id: query_id.clone(),
            entries,
            tail,
        });
    }
    Ok(out)
}
