//! Single-linkage clustering by cutting a Euclidean minimum spanning tree.
//!
//! Cutting every MST edge longer than `t₂` leaves exactly the connected
//! components of the graph that joins rows at distance `≤ t₂`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub k_hat: usize,
    /// Cluster ids in `0..k_hat`, numbered by first appearance.
    pub labels: Vec<usize>,
    pub threshold_used: f64,
    /// MST edge weights, ascending.
    pub mst_edge_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Rules for picking `t₂` from the MST edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRule {
    /// A gap between consecutive sorted weights `w_i < w_{i+1}` only counts
    /// when `w_{i+1} / w_i` reaches this ratio.
    pub min_gap_ratio: f64,
    /// Every cluster produced by the cut must hold at least
    /// `max(1, ⌊fraction·N⌋)` rows.
    pub min_cluster_fraction: f64,
}

impl Default for GapRule {
    fn default() -> Self {
        GapRule {
            min_gap_ratio: 1.5,
            min_cluster_fraction: 0.01,
        }
    }
}

fn row_major(rows: &DMatrix<f64>) -> Vec<f64> {
    let (n, dim) = rows.shape();
    let mut out = Vec::with_capacity(n * dim);
    for i in 0..n {
        out.extend(rows.row(i).iter());
    }
    out
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Prim's algorithm on the complete Euclidean graph over the rows, `O(N²)`
/// distance evaluations. Edges are returned in the order they join the tree.
pub fn minimum_spanning_tree(rows: &DMatrix<f64>) -> Vec<MstEdge> {
    let (n, dim) = rows.shape();
    if n < 2 {
        return Vec::new();
    }
    let data = row_major(rows);
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let cur = row(current);
        let mut next = usize::MAX;
        let mut next_dist = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let dj = distance(cur, row(j));
            if dj < best[j] {
                best[j] = dj;
                parent[j] = current;
            }
            if next == usize::MAX || best[j] < next_dist {
                next = j;
                next_dist = best[j];
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: parent[next],
            b: next,
            weight: best[next],
        });
        current = next;
    }
    edges
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so the forest shape is input-order independent
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Groups rows joined by tree edges of weight `≤ t2`.
pub fn cut_tree(n: usize, edges: &[MstEdge], t2: f64) -> ClusteringResult {
    let mut set = DisjointSet::new(n);
    for e in edges.iter().filter(|e| e.weight <= t2) {
        set.union(e.a, e.b);
    }
    let mut root_label = vec![usize::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut k_hat = 0;
    for i in 0..n {
        let root = set.find(i);
        if root_label[root] == usize::MAX {
            root_label[root] = k_hat;
            k_hat += 1;
        }
        labels.push(root_label[root]);
    }
    let mut weights: Vec<f64> = edges.iter().map(|e| e.weight).collect();
    weights.sort_by(f64::total_cmp);
    ClusteringResult {
        k_hat,
        labels,
        threshold_used: t2,
        mst_edge_weights: weights,
    }
}

pub fn single_linkage(rows: &DMatrix<f64>, t2: f64) -> Result<ClusteringResult> {
    if rows.nrows() == 0 {
        return Err(Error::invalid("single linkage needs at least one row"));
    }
    if t2.is_nan() || t2 < 0.0 {
        return Err(Error::invalid(format!("distance threshold must be ≥ 0, got {t2}")));
    }
    let edges = minimum_spanning_tree(rows);
    Ok(cut_tree(rows.nrows(), &edges, t2))
}

fn one_cluster_threshold(max_weight: f64) -> f64 {
    max_weight + (max_weight * 1e-9).max(1e-12)
}

fn smallest_cluster(n: usize, edges: &[MstEdge], t2: f64) -> usize {
    let result = cut_tree(n, edges, t2);
    let mut sizes = vec![0usize; result.k_hat];
    for &l in &result.labels {
        sizes[l] += 1;
    }
    sizes.into_iter().min().unwrap_or(0)
}

/// Picks `t₂` from a spanning tree of `n` rows.
///
/// Gaps between consecutive sorted edge weights are tried from widest to
/// narrowest; the first one whose ratio reaches `min_gap_ratio` and whose
/// cut leaves no cluster below the minimum size gives `t₂` at its midpoint.
/// If none qualifies, `t₂` sits just above the largest weight (one cluster).
pub fn select_t2_from_tree(n: usize, edges: &[MstEdge], rule: &GapRule) -> f64 {
    let mut w: Vec<f64> = edges.iter().map(|e| e.weight).collect();
    w.sort_by(f64::total_cmp);
    let Some(&max_weight) = w.last() else {
        return 0.0;
    };
    let min_size = ((rule.min_cluster_fraction * n as f64).floor() as usize).max(1);
    let mut gaps: Vec<usize> = (0..w.len() - 1).filter(|&i| w[i + 1] > w[i]).collect();
    gaps.sort_by(|&i, &j| (w[j + 1] - w[j]).total_cmp(&(w[i + 1] - w[i])).then(i.cmp(&j)));
    for i in gaps {
        let (lo, hi) = (w[i], w[i + 1]);
        let ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if ratio < rule.min_gap_ratio {
            continue;
        }
        let t2 = 0.5 * (lo + hi);
        if min_size <= 1 || smallest_cluster(n, edges, t2) >= min_size {
            return t2;
        }
    }
    one_cluster_threshold(max_weight)
}

pub fn select_t2(rows: &DMatrix<f64>) -> Result<f64> {
    select_t2_with(rows, &GapRule::default())
}

pub fn select_t2_with(rows: &DMatrix<f64>, rule: &GapRule) -> Result<f64> {
    if rows.nrows() < 2 {
        return Err(Error::invalid(format!(
            "threshold selection needs at least 2 rows, got {}",
            rows.nrows()
        )));
    }
    let edges = minimum_spanning_tree(rows);
    Ok(select_t2_from_tree(rows.nrows(), &edges, rule))
}

/// Selects `t₂` and clusters in one pass over a shared spanning tree.
/// A single row forms a single cluster.
pub fn cluster_auto(rows: &DMatrix<f64>, rule: &GapRule) -> Result<ClusteringResult> {
    let n = rows.nrows();
    if n == 0 {
        return Err(Error::invalid("single linkage needs at least one row"));
    }
    let edges = minimum_spanning_tree(rows);
    let t2 = select_t2_from_tree(n, &edges, rule);
    Ok(cut_tree(n, &edges, t2))
}
