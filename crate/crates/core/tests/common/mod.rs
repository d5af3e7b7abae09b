//! Independent oracles shared by the integration suites.
//!
//! Everything here re-derives expected values from first principles with its
//! own sorting and arithmetic, deliberately sharing no code with the paths
//! under test.

use crossrank::metrics::SimilarityMatrix;
use crossrank::rerank::RerankConfig;

/// One re-ranked query produced by the literal-formula oracle:
/// `(query_id, [(target_id, combined_score)...], tail_ids)`.
pub type OracleList = (String, Vec<(String, f64)>, Vec<String>);

/// Insertion sort of (index, score) pairs by score descending, index
/// ascending — written out longhand so the oracle does not share the
/// implementation's argsort.
fn sorted_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = Vec::with_capacity(scores.len());
    for idx in 0..scores.len() {
        let mut at = order.len();
        for (pos, &existing) in order.iter().enumerate() {
            if scores[idx] > scores[existing] {
                at = pos;
                break;
            }
        }
        order.insert(at, idx);
    }
    order
}

/// Literal evaluation of the re-ranking formulas with full sorts per query
/// and per candidate.
pub fn literal_rerank_oracle(sim: &SimilarityMatrix<f64>, config: &RerankConfig) -> Vec<OracleList> {
    let m = sim.num_queries();
    let n = sim.num_targets();
    let k = config.k.min(n);

    let mut out = Vec::with_capacity(m);
    for qi in 0..m {
        let forward_scores: Vec<f64> = (0..n).map(|j| sim.scores().get(qi, j)).collect();
        let forward_order = sorted_desc(&forward_scores);

        let mut scored: Vec<(usize, usize, f64)> = Vec::with_capacity(k);
        for (rank, &ci) in forward_order.iter().take(k).enumerate() {
            let c_fwd = (-config.xi * (rank as f64 + 1.0)).exp();

            let column: Vec<f64> = (0..m).map(|i| sim.scores().get(i, ci)).collect();
            let reverse_order = sorted_desc(&column);
            let mut c_rev = 0.0;
            for (pos, &i) in reverse_order.iter().take(config.l).enumerate() {
                if i == qi {
                    c_rev = (-config.xi * (pos as f64 + 1.0)).exp();
                    break;
                }
            }

            let mut denom = 0.0;
            for &v in &column {
                denom += v;
            }
            let c_sig = column[qi] / denom;

            scored.push((ci, rank, c_fwd + config.w_c1 * c_rev + config.w_c2 * c_sig));
        }

        // insertion sort by combined score descending, original rank ascending
        let mut resorted: Vec<(usize, usize, f64)> = Vec::with_capacity(scored.len());
        for item in scored {
            let mut at = resorted.len();
            for (pos, existing) in resorted.iter().enumerate() {
                if item.2 > existing.2 || (item.2 == existing.2 && item.1 < existing.1) {
                    at = pos;
                    break;
                }
            }
            resorted.insert(at, item);
        }

        out.push((
            sim.query_ids()[qi].clone(),
            resorted
                .into_iter()
                .map(|(ci, _, s)| (sim.target_ids()[ci].clone(), s))
                .collect(),
            forward_order
                .iter()
                .skip(k)
                .map(|&ci| sim.target_ids()[ci].clone())
                .collect(),
        ))
    }
    out
}

/// Spectral radius estimate by power iteration on a symmetric matrix.
pub fn spectral_radius(matrix: &crossrank::Matrix, iterations: usize) -> f64 {
    let n = matrix.rows();
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.1).collect();
    let mut radius = 0.0;
    for _ in 0..iterations {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[i] += matrix.get(i, j) * v[j];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        radius = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni / norm;
        }
    }
    radius
}

/// Solve the least-squares system `V^T w = target` by normal equations with
/// Gaussian elimination; used to recover barycentric weights of an attention
/// output row against the value rows.
pub fn barycentric_weights(value_rows: &[Vec<f64>], target: &[f64]) -> Option<Vec<f64>> {
    let r = value_rows.len();
    let d = target.len();
    // normal equations: (V V^T) w = V target
    let mut a = vec![vec![0.0; r + 1]; r];
    for i in 0..r {
        for j in 0..r {
            let mut dot = 0.0;
            for c in 0..d {
                dot += value_rows[i][c] * value_rows[j][c];
            }
            a[i][j] = dot;
        }
        let mut rhs = 0.0;
        for c in 0..d {
            rhs += value_rows[i][c] * target[c];
        }
        a[i][r] = rhs;
    }
    // Gaussian elimination with partial pivoting
    for col in 0..r {
        let pivot = (col..r).max_by(|&x, &y| {
            a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..r {
            if row == col {
                continue;
            }
            let factor = a[row][col] / a[col][col];
            for c in col..=r {
                a[row][c] -= factor * a[col][c];
            }
        }
    }
    Some((0..r).map(|i| a[i][r] / a[i][i]).collect())
}
