//! Quantitative evaluation of embeddings and learning curves.

use crate::agent::nearest_action;
use crate::embedding::ActionEmbeddingTable;
use crate::rng::Rng;
use crate::{Error, Result};

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_MAX: usize = 10_000;

/// Top-k principal directions of a point cloud.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// k orthonormal direction vectors.
    pub components: Vec<Vec<f64>>,
    /// N x k projected coordinates (mean-centered data).
    pub projected: Vec<Vec<f64>>,
    /// Fraction of total variance captured by each component, non-increasing.
    pub explained_variance_ratio: Vec<f64>,
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Deterministic sign convention: the entry of largest magnitude (first such
/// index on ties) is made positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Orthonormalize `v` against `found` (classical Gram-Schmidt).
fn orthogonalize(v: &mut [f64], found: &[Vec<f64>]) {
    for f in found {
        let dot: f64 = v.iter().zip(f).map(|(a, b)| a * b).sum();
        for (x, fx) in v.iter_mut().zip(f) {
            *x -= dot * fx;
        }
    }
}

/// PCA via power iteration with deflation.
///
/// Points are mean-centered first. Degenerate directions (zero variance) are
/// filled deterministically with Gram-Schmidt-completed canonical basis
/// vectors and zero explained variance.
pub fn pca_project(points: &[Vec<f64>], k: usize) -> Result<ProjectionResult> {
    if points.is_empty() {
        return Err(Error::Empty { what: "pca points" });
    }
    let n = points.len();
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            context: "pca point width",
            expected: d,
            got: points.iter().map(|p| p.len()).find(|&l| l != d).unwrap(),
        });
    }
    if k == 0 || k > d || d > n {
        return Err(Error::Config(format!(
            "pca needs 1 <= k <= d <= N (k={k}, d={d}, N={n})"
        )));
    }

    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    // Covariance (1/N convention).
    let mut cov = vec![vec![0.0; d]; d];
    for p in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += p[i] * p[j] / n as f64;
            }
        }
    }
    let total_var: f64 = (0..d).map(|i| cov[i][i]).sum();

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for _ in 0..k {
        // Deterministic start: the all-ones direction, made orthogonal to what
        // we already found; fall back to canonical basis vectors if it
        // degenerates.
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        orthogonalize(&mut v, &components);
        if normalize(&mut v) < 1e-12 {
            for axis in 0..d {
                let mut cand = vec![0.0; d];
                cand[axis] = 1.0;
                orthogonalize(&mut cand, &components);
                if normalize(&mut cand) > 1e-6 {
                    v = cand;
                    break;
                }
            }
        }

        let mut eigenvalue = 0.0;
        for _ in 0..POWER_ITER_MAX {
            let mut w = mat_vec(&cov, &v);
            orthogonalize(&mut w, &components);
            let norm = normalize(&mut w);
            if norm < 1e-300 {
                // Null direction: keep the current orthonormal v, eigenvalue 0.
                eigenvalue = 0.0;
                break;
            }
            eigenvalue = norm;
            let delta: f64 = w
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            v = w;
            if delta < POWER_ITER_TOL {
                break;
            }
        }
        fix_sign(&mut v);
        // Deflate.
        for i in 0..d {
            for j in 0..d {
                cov[i][j] -= eigenvalue * v[i] * v[j];
            }
        }
        eigenvalues.push(eigenvalue.max(0.0));
        components.push(v);
    }

    let projected: Vec<Vec<f64>> = centered
        .iter()
        .map(|p| {
            components
                .iter()
                .map(|c| c.iter().zip(p).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let explained_variance_ratio = eigenvalues
        .iter()
        .map(|&l| if total_var > 0.0 { l / total_var } else { 0.0 })
        .collect();
    Ok(ProjectionResult {
        components,
        projected,
        explained_variance_ratio,
    })
}

/// Mean within-group and across-group pairwise distances.
#[derive(Debug, Clone, Copy)]
pub struct ClusterQuality {
    pub intra_mean: f64,
    pub inter_mean: f64,
    pub ratio: f64,
}

/// Cohesion/separation summary of labeled embeddings. Lower ratio means
/// tighter clusters. Errors when every pairwise distance across groups is
/// zero (all points identical).
pub fn cluster_quality(points: &[Vec<f64>], labels: &[i64]) -> Result<ClusterQuality> {
    if points.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "cluster labels",
            expected: points.len(),
            got: labels.len(),
        });
    }
    let distinct: std::collections::BTreeSet<i64> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Degenerate(
            "cluster_quality needs at least two groups".into(),
        ));
    }
    let mut intra_sum = 0.0;
    let mut intra_count = 0usize;
    let mut inter_sum = 0.0;
    let mut inter_count = 0usize;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let dist: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if labels[i] == labels[j] {
                intra_sum += dist;
                intra_count += 1;
            } else {
                inter_sum += dist;
                inter_count += 1;
            }
        }
    }
    if inter_count == 0 {
        return Err(Error::Degenerate("no across-group pairs".into()));
    }
    let inter_mean = inter_sum / inter_count as f64;
    if inter_mean == 0.0 {
        return Err(Error::Degenerate(
            "all points identical; cluster ratio undefined".into(),
        ));
    }
    // Singleton groups contribute no intra pairs.
    let intra_mean = if intra_count > 0 {
        intra_sum / intra_count as f64
    } else {
        0.0
    };
    Ok(ClusterQuality {
        intra_mean,
        inter_mean,
        ratio: intra_mean / inter_mean,
    })
}

/// Compose `sum(plus) - sum(minus)` in embedding space and test whether the
/// nearest action falls in the expected group.
pub fn analogy_check<G: PartialEq>(
    table: &ActionEmbeddingTable,
    plus: &[usize],
    minus: &[usize],
    expected_group: G,
    group_fn: impl Fn(usize) -> G,
) -> Result<bool> {
    let mut v = vec![0.0; table.dim()];
    for &i in plus {
        for (acc, x) in v.iter_mut().zip(table.row(i)?) {
            *acc += x;
        }
    }
    for &i in minus {
        for (acc, x) in v.iter_mut().zip(table.row(i)?) {
            *acc -= x;
        }
    }
    let nearest = nearest_action(table, &v)?;
    Ok(group_fn(nearest) == expected_group)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average rank over ties (1-based).
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            context: "spearman inputs",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Degenerate("spearman needs at least two points".into()));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Degenerate("spearman input has zero rank variance".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// |Spearman| between the action index order and the 1-D PCA projection of
/// the embedding rows. Near 1 means the embeddings of ordered discretized
/// actions line up monotonically along their principal direction.
pub fn monotonicity_check(table: &ActionEmbeddingTable) -> Result<f64> {
    let rows = table.rows();
    let proj = pca_project(&rows, 1)?;
    let xs: Vec<f64> = (0..rows.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = proj.projected.iter().map(|p| p[0]).collect();
    Ok(spearman(&xs, &ys)?.abs())
}

/// Per-episode mean and percentile confidence band over seed resamples.
#[derive(Debug, Clone)]
pub struct BandResult {
    pub mean: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub seeds: usize,
    /// True when only one seed was supplied and the band collapses.
    pub degenerate: bool,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Bootstrap the per-episode mean return over seeds.
///
/// Curves are truncated to the shortest; seeds are resampled with replacement
/// `resamples` times and the band spans the requested central confidence mass.
pub fn bootstrap_band(
    curves: &[Vec<f64>],
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<BandResult> {
    if curves.is_empty() {
        return Err(Error::Empty { what: "curve ensemble" });
    }
    if !(0.0..1.0).contains(&confidence) {
        return Err(Error::Config("confidence must lie in (0, 1)".into()));
    }
    if resamples == 0 {
        return Err(Error::Config("resamples must be positive".into()));
    }
    let len = curves.iter().map(|c| c.len()).min().unwrap();
    if len == 0 {
        return Err(Error::Empty { what: "curves" });
    }
    let n = curves.len();
    let mut rng = Rng::seed_from_u64(seed);
    // resample means: resamples x len
    let mut sample_means = vec![vec![0.0; resamples]; len];
    for r in 0..resamples {
        let picks: Vec<usize> = (0..n).map(|_| rng.range_usize(n)).collect();
        for e in 0..len {
            let mut m = 0.0;
            for &p in &picks {
                m += curves[p][e];
            }
            sample_means[e][r] = m / n as f64;
        }
    }
    let tail = (1.0 - confidence) / 2.0;
    let mut mean = Vec::with_capacity(len);
    let mut low = Vec::with_capacity(len);
    let mut high = Vec::with_capacity(len);
    for e in 0..len {
        let avg = sample_means[e].iter().sum::<f64>() / resamples as f64;
        sample_means[e].sort_by(|a, b| a.partial_cmp(b).unwrap());
        mean.push(avg);
        low.push(percentile(&sample_means[e], tail));
        high.push(percentile(&sample_means[e], 1.0 - tail));
    }
    Ok(BandResult {
        mean,
        low,
        high,
        seeds: n,
        degenerate: n < 2,
    })
}

/// Count how many of the target task's atomic actions align with the source
/// task's action semantics.
///
/// A target action moving `(dx, dy)` per step corresponds, over the source
/// task's longer combos, to the source group with displacement
/// `(source_n_steps / target_n_steps) * (dx, dy)`; the same ratio rescales the
/// target embedding before the nearest-neighbor lookup (a k-step combo's
/// embedding sits at roughly k times an atomic embedding, which is also why
/// the midpoint relation between e.g. a pure two-step combo and its
/// cancelling variant recovers the atomic action).
pub fn gridworld_alignment_matches(
    source_table: &ActionEmbeddingTable,
    source_n_steps: usize,
    target_table: &ActionEmbeddingTable,
    target_n_steps: usize,
) -> Result<usize> {
    if source_n_steps < target_n_steps || source_n_steps % target_n_steps != 0 {
        return Err(Error::Config(
            "alignment check needs source_n_steps to be a multiple of target_n_steps".into(),
        ));
    }
    let ratio = (source_n_steps / target_n_steps) as i64;
    let mut matches = 0;
    for a in 0..target_table.action_count() {
        let (dx, dy) = crate::env::net_displacement(target_n_steps, a)?;
        let scaled: Vec<f64> = target_table
            .row(a)?
            .iter()
            .map(|v| v * ratio as f64)
            .collect();
        let nearest = nearest_action(source_table, &scaled)?;
        if crate::env::net_displacement(source_n_steps, nearest)? == (ratio * dx, ratio * dy) {
            matches += 1;
        }
    }
    Ok(matches)
}

/// First episode (1-based) whose trailing-`window` mean return reaches the
/// threshold; `None` when it never does (including window > curve length).
pub fn episodes_to_threshold(curve: &[f64], threshold: f64, window: usize) -> Option<usize> {
    if window == 0 || window > curve.len() {
        return None;
    }
    let mut sum: f64 = curve[..window].iter().sum();
    if sum / window as f64 >= threshold {
        return Some(window);
    }
    for e in window..curve.len() {
        sum += curve[e] - curve[e - window];
        if sum / window as f64 >= threshold {
            return Some(e + 1);
        }
    }
    None
}
