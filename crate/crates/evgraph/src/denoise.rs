//! Adaptive graph denoising: spanning-tree threshold bound, normalized
//! degree-variance sweep, edge filtering, and noise classification.

use crate::error::{Error, Result};
use crate::graph::{build_graph, Edge, EventGraph, WeightParams};
use crate::segment::Voxel;

/// Outcome of a threshold sweep: the chosen threshold, the spanning-tree
/// upper bound, and the `(delta, variance)` curve ordered by ascending
/// delta.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearchResult {
    pub t_opt: f64,
    pub mst_max: f64,
    pub curve: Vec<(f64, f64)>,
}

/// A graph restricted to edges at or below the chosen threshold. Nodes
/// left with no incident edge are classified as noise and listed in
/// `removed`; all others are in `kept`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoisedVoxel {
    pub graph: EventGraph,
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

/// Node cap for the exhaustive sweep oracle.
pub const BRUTE_FORCE_NODE_LIMIT: usize = 64;
/// Minimum grid resolution for the exhaustive sweep oracle.
pub const BRUTE_FORCE_MIN_GRID: usize = 1000;

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            components: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        self.components -= 1;
        true
    }
}

/// Kruskal pass over the candidate edges. Returns the largest accepted
/// edge weight (0 when no edge is accepted) and the number of components
/// remaining.
fn spanning_forest_max(graph: &EventGraph) -> (f64, usize) {
    let n = graph.n_nodes();
    if n == 0 {
        return (0.0, 0);
    }
    let mut order: Vec<&Edge> = graph.edges.iter().collect();
    order.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    let mut uf = UnionFind::new(n);
    let mut max_w = 0.0f64;
    for e in order {
        if uf.union(e.i, e.j) {
            max_w = max_w.max(e.w);
            if uf.components == 1 {
                break;
            }
        }
    }
    (max_w, uf.components)
}

/// Maximum edge weight on a minimum spanning tree of the candidate graph:
/// the smallest threshold at which every node stays connected. Zero for
/// graphs with at most one node.
pub fn mst_max_edge(graph: &EventGraph) -> Result<f64> {
    if graph.n_nodes() <= 1 {
        return Ok(0.0);
    }
    let (max_w, components) = spanning_forest_max(graph);
    if components > 1 {
        return Err(Error::Disconnected);
    }
    Ok(max_w)
}

/// Per-node count of incident edges with weight at or below `delta`.
pub fn degree_vector(graph: &EventGraph, delta: f64) -> Vec<usize> {
    let mut degrees = vec![0usize; graph.n_nodes()];
    for e in &graph.edges {
        if e.w <= delta {
            degrees[e.i] += 1;
            degrees[e.j] += 1;
        }
    }
    degrees
}

/// Population variance of the degree vector after dividing by its maximum.
/// Returns 0 for an empty vector or an all-zero one, so the guard never
/// divides by zero. Values lie in [0, 0.25].
pub fn normalized_degree_variance(degrees: &[usize]) -> f64 {
    let max = match degrees.iter().max() {
        Some(&m) if m > 0 => m as f64,
        _ => return 0.0,
    };
    let n = degrees.len() as f64;
    let mean = degrees.iter().map(|&d| d as f64 / max).sum::<f64>() / n;
    degrees
        .iter()
        .map(|&d| {
            let dev = d as f64 / max - mean;
            dev * dev
        })
        .sum::<f64>()
        / n
}

/// Sweeps the candidate thresholds (the sorted unique edge weights up to
/// the spanning-tree bound) and picks the one maximizing the normalized
/// degree variance. The degree vector is piecewise-constant between edge
/// weights, so this sweep is exact. Ties resolve to the largest candidate,
/// which keeps degenerate flat-variance graphs connected.
pub fn optimal_threshold(graph: &EventGraph) -> ThresholdSearchResult {
    if graph.n_nodes() <= 1 || graph.edges.is_empty() {
        return ThresholdSearchResult {
            t_opt: 0.0,
            mst_max: 0.0,
            curve: Vec::new(),
        };
    }
    let (mst_max, _) = spanning_forest_max(graph);
    let mut candidates: Vec<f64> = graph
        .edges
        .iter()
        .map(|e| e.w)
        .filter(|w| *w <= mst_max)
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut curve = Vec::with_capacity(candidates.len());
    let mut t_opt = 0.0;
    let mut best = f64::NEG_INFINITY;
    for &delta in &candidates {
        let variance = normalized_degree_variance(&degree_vector(graph, delta));
        curve.push((delta, variance));
        if variance >= best {
            best = variance;
            t_opt = delta;
        }
    }
    ThresholdSearchResult {
        t_opt,
        mst_max,
        curve,
    }
}

/// Keeps exactly the edges with weight at or below `t`; nodes isolated by
/// the filtering are classified as noise.
pub fn filter_graph(graph: &EventGraph, t: f64) -> DenoisedVoxel {
    let edges: Vec<Edge> = graph.edges.iter().filter(|e| e.w <= t).copied().collect();
    let mut degrees = vec![0usize; graph.n_nodes()];
    for e in &edges {
        degrees[e.i] += 1;
        degrees[e.j] += 1;
    }
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (id, &d) in degrees.iter().enumerate() {
        if d == 0 {
            removed.push(id);
        } else {
            kept.push(id);
        }
    }
    DenoisedVoxel {
        graph: EventGraph {
            nodes: graph.nodes.clone(),
            edges,
        },
        kept,
        removed,
    }
}

/// Full per-voxel denoising: weighted graph, threshold search, filtering.
/// Empty and single-node voxels pass through with every node kept; the
/// sweep is undefined there and there is no evidence for removal.
pub fn denoise_voxel(voxel: &Voxel, params: &WeightParams) -> DenoisedVoxel {
    let graph = build_graph(voxel, params);
    if graph.n_nodes() <= 1 {
        let kept = (0..graph.n_nodes()).collect();
        return DenoisedVoxel {
            graph,
            kept,
            removed: Vec::new(),
        };
    }
    let search = optimal_threshold(&graph);
    filter_graph(&graph, search.t_opt)
}

/// Exhaustive sweep oracle for [`optimal_threshold`]: evaluates the
/// variance on a uniform grid over `[0, mst_max]` plus every exact edge
/// weight in that range. Among maximizers it prefers the largest exact
/// edge weight, falling back to the largest grid point only when no edge
/// weight attains the maximum; a variance spike strictly between edge
/// weights would therefore surface as a mismatch.
pub fn brute_force_threshold(
    graph: &EventGraph,
    grid_steps: usize,
) -> Result<ThresholdSearchResult> {
    if graph.n_nodes() > BRUTE_FORCE_NODE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "brute-force sweep supports at most {BRUTE_FORCE_NODE_LIMIT} nodes, got {}",
            graph.n_nodes()
        )));
    }
    if grid_steps < BRUTE_FORCE_MIN_GRID {
        return Err(Error::InvalidArgument(format!(
            "brute-force sweep needs at least {BRUTE_FORCE_MIN_GRID} grid steps, got {grid_steps}"
        )));
    }
    if graph.n_nodes() <= 1 || graph.edges.is_empty() {
        return Ok(ThresholdSearchResult {
            t_opt: 0.0,
            mst_max: 0.0,
            curve: Vec::new(),
        });
    }
    let (mst_max, _) = spanning_forest_max(graph);
    let mut edge_weights: Vec<f64> = graph
        .edges
        .iter()
        .map(|e| e.w)
        .filter(|w| *w <= mst_max)
        .collect();
    edge_weights.sort_by(f64::total_cmp);
    edge_weights.dedup();

    let mut sweep: Vec<f64> = (0..=grid_steps)
        .map(|k| mst_max * k as f64 / grid_steps as f64)
        .collect();
    sweep.extend_from_slice(&edge_weights);
    sweep.sort_by(f64::total_cmp);
    sweep.dedup();

    let mut curve = Vec::with_capacity(sweep.len());
    let mut max_var = f64::NEG_INFINITY;
    for &delta in &sweep {
        let variance = normalized_degree_variance(&degree_vector(graph, delta));
        curve.push((delta, variance));
        max_var = max_var.max(variance);
    }

    let mut best_edge = None;
    let mut best_any = 0.0f64;
    for &(delta, variance) in &curve {
        if variance == max_var {
            best_any = delta;
            if edge_weights.binary_search_by(|w| w.total_cmp(&delta)).is_ok() {
                best_edge = Some(delta);
            }
        }
    }
    Ok(ThresholdSearchResult {
        t_opt: best_edge.unwrap_or(best_any),
        mst_max,
        curve,
    })
}
