//! Inverse-weight graph attention: per-edge logits scaled by `1/w`,
//! softmax coefficients, and neighbor feature aggregation. Forward pass
//! only; parameters come from a file or a seeded generator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Event;
use crate::graph::EventGraph;

/// Conventional negative slope for the LeakyReLU pre-activation.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
/// Lower clamp for edge weights before inversion; coincident events with
/// matching polarity can produce a zero weight.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

/// Parameters of one attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_in x d_out` transform.
    pub w_matrix: Vec<f64>,
    /// Length `2 * d_out`, applied to the concatenated transformed pair.
    pub a_vector: Vec<f64>,
    pub leaky_slope: f64,
    pub w_floor: f64,
}

impl AttentionParams {
    pub fn new(d_in: usize, d_out: usize, w_matrix: Vec<f64>, a_vector: Vec<f64>) -> Result<Self> {
        let params = Self {
            d_in,
            d_out,
            w_matrix,
            a_vector,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            w_floor: DEFAULT_WEIGHT_FLOOR,
        };
        params.validate()?;
        Ok(params)
    }

    /// Draws both parameter blocks uniformly from [-1, 1) with a portable
    /// seeded generator, so a seed fully determines the layer.
    pub fn from_seed(d_in: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_matrix = (0..d_in * d_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a_vector = (0..2 * d_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self {
            d_in,
            d_out,
            w_matrix,
            a_vector,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            w_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 {
            return Err(Error::Config("attention dimensions must be positive".into()));
        }
        if self.w_matrix.len() != self.d_in * self.d_out {
            return Err(Error::DimensionMismatch {
                expected: self.d_in * self.d_out,
                got: self.w_matrix.len(),
            });
        }
        if self.a_vector.len() != 2 * self.d_out {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.d_out,
                got: self.a_vector.len(),
            });
        }
        if self.leaky_slope.is_nan() || self.leaky_slope <= 0.0 || self.leaky_slope >= 1.0 {
            return Err(Error::Config("leaky_slope must lie in (0, 1)".into()));
        }
        if self.w_floor.is_nan() || self.w_floor <= 0.0 {
            return Err(Error::Config("w_floor must be positive".into()));
        }
        Ok(())
    }

    /// Applies the row-major transform to one input feature vector.
    pub fn transform(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                got: f.len(),
            });
        }
        let mut out = vec![0.0; self.d_out];
        for (r, &x) in f.iter().enumerate() {
            let row = &self.w_matrix[r * self.d_out..(r + 1) * self.d_out];
            for (c, &w) in row.iter().enumerate() {
                out[c] += x * w;
            }
        }
        Ok(out)
    }

    fn leaky_relu(&self, x: f64) -> f64 {
        if x >= 0.0 {
            x
        } else {
            self.leaky_slope * x
        }
    }
}

/// On-disk layer description. When the parameter blocks are absent they
/// are generated from `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionParamsFile {
    pub d_in: usize,
    pub d_out: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_matrix: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaky_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl AttentionParamsFile {
    pub fn resolve(self) -> Result<AttentionParams> {
        let mut params = match (self.w_matrix, self.a_vector) {
            (Some(w), Some(a)) => AttentionParams {
                d_in: self.d_in,
                d_out: self.d_out,
                w_matrix: w,
                a_vector: a,
                leaky_slope: DEFAULT_LEAKY_SLOPE,
                w_floor: DEFAULT_WEIGHT_FLOOR,
            },
            (None, None) => {
                AttentionParams::from_seed(self.d_in, self.d_out, self.seed.unwrap_or(0))
            }
            _ => {
                return Err(Error::Config(
                    "parameter file must provide both w_matrix and a_vector, or neither".into(),
                ))
            }
        };
        if let Some(slope) = self.leaky_slope {
            params.leaky_slope = slope;
        }
        params.validate()?;
        Ok(params)
    }
}

/// Loads attention parameters from a JSON description.
pub fn params_from_json(text: &str) -> Result<AttentionParams> {
    let file: AttentionParamsFile = serde_json::from_str(text)?;
    file.resolve()
}

/// Per-node input features, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureSet {
    features: Vec<Vec<f64>>,
    dim: usize,
}

impl NodeFeatureSet {
    pub fn new(features: Vec<Vec<f64>>) -> Result<Self> {
        let dim = features.first().map_or(0, Vec::len);
        if let Some(bad) = features.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(Self { features, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&[f64]> {
        self.features.get(i).map(Vec::as_slice)
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.features
    }
}

/// Raw `(x, y, t, p)` features standardized per coordinate to zero mean
/// and unit variance; raw microsecond timestamps would otherwise dominate
/// the linear transform. Constant coordinates standardize to zero.
pub fn standardized_features(events: &[Event]) -> NodeFeatureSet {
    let n = events.len();
    let mut features = vec![vec![0.0; 4]; n];
    if n == 0 {
        return NodeFeatureSet { features, dim: 4 };
    }
    let raw: Vec<[f64; 4]> = events
        .iter()
        .map(|e| [e.x as f64, e.y as f64, e.t as f64, e.p as f64])
        .collect();
    for c in 0..4 {
        let mean = raw.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = raw.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std > 0.0 {
            for (i, r) in raw.iter().enumerate() {
                features[i][c] = (r[c] - mean) / std;
            }
        }
    }
    NodeFeatureSet { features, dim: 4 }
}

/// Unnormalized attention strength of the edge `(i, j)`:
/// `LeakyReLU(a . (W f_i || W f_j)) / max(w_ij, w_floor)`.
pub fn attention_logit(
    f_i: &[f64],
    f_j: &[f64],
    w_ij: f64,
    params: &AttentionParams,
) -> Result<f64> {
    let zi = params.transform(f_i)?;
    let zj = params.transform(f_j)?;
    let mut pre = 0.0;
    for (c, &z) in zi.iter().enumerate() {
        pre += params.a_vector[c] * z;
    }
    for (c, &z) in zj.iter().enumerate() {
        pre += params.a_vector[params.d_out + c] * z;
    }
    Ok(params.leaky_relu(pre) / w_ij.max(params.w_floor))
}

/// Softmax of node `i`'s logits over its neighbors, computed with
/// max-subtraction so large pre-activations stay finite. Coefficients sum
/// to 1. Errors on isolated nodes; the caller decides their fallback.
pub fn attention_coefficients(
    i: usize,
    graph: &EventGraph,
    feats: &NodeFeatureSet,
    params: &AttentionParams,
) -> Result<BTreeMap<usize, f64>> {
    if i >= graph.n_nodes() {
        return Err(Error::NodeOutOfRange {
            id: i,
            nodes: graph.n_nodes(),
        });
    }
    let mut neighbors: Vec<(usize, f64)> = graph
        .edges
        .iter()
        .filter_map(|e| {
            if e.i == i {
                Some((e.j, e.w))
            } else if e.j == i {
                Some((e.i, e.w))
            } else {
                None
            }
        })
        .collect();
    if neighbors.is_empty() {
        return Err(Error::IsolatedNode(i));
    }
    neighbors.sort_by_key(|&(j, _)| j);

    let f_i = feats.get(i).ok_or(Error::NodeOutOfRange {
        id: i,
        nodes: feats.len(),
    })?;
    let mut logits = Vec::with_capacity(neighbors.len());
    for &(j, w) in &neighbors {
        let f_j = feats.get(j).ok_or(Error::NodeOutOfRange {
            id: j,
            nodes: feats.len(),
        })?;
        logits.push(attention_logit(f_i, f_j, w, params)?);
    }

    let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max_logit).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(neighbors
        .iter()
        .zip(exps)
        .map(|(&(j, _), e)| (j, e / total))
        .collect())
}

/// Coefficient-weighted sum of transformed neighbor features.
pub fn aggregate(
    coeffs: &BTreeMap<usize, f64>,
    feats: &NodeFeatureSet,
    params: &AttentionParams,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; params.d_out];
    for (&j, &alpha) in coeffs {
        let f_j = feats.get(j).ok_or(Error::NodeOutOfRange {
            id: j,
            nodes: feats.len(),
        })?;
        let z = params.transform(f_j)?;
        for (c, &v) in z.iter().enumerate() {
            out[c] += alpha * v;
        }
    }
    Ok(out)
}

/// Applies the attention layer to every node. Isolated nodes receive their
/// own transformed feature so the pass is total over denoised graphs.
pub fn layer_forward(
    graph: &EventGraph,
    feats: &NodeFeatureSet,
    params: &AttentionParams,
) -> Result<NodeFeatureSet> {
    if feats.len() != graph.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: graph.n_nodes(),
            got: feats.len(),
        });
    }
    let adjacency = graph.adjacency();
    let mut out = Vec::with_capacity(graph.n_nodes());
    for (i, neighbors) in adjacency.iter().enumerate() {
        if neighbors.is_empty() {
            out.push(params.transform(feats.get(i).expect("checked length"))?);
        } else {
            let coeffs = attention_coefficients(i, graph, feats, params)?;
            out.push(aggregate(&coeffs, feats, params)?);
        }
    }
    Ok(NodeFeatureSet {
        features: out,
        dim: params.d_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use proptest::prelude::*;

    fn graph_of(n: usize, edges: &[(usize, usize, f64)]) -> EventGraph {
        EventGraph {
            nodes: (0..n).map(|i| Event::new(i as i64, 0, 0, 1)).collect(),
            edges: edges.iter().map(|&(i, j, w)| Edge { i, j, w }).collect(),
        }
    }

    fn identity_params(d: usize) -> AttentionParams {
        let mut w = vec![0.0; d * d];
        for k in 0..d {
            w[k * d + k] = 1.0;
        }
        AttentionParams::new(d, d, w, vec![0.0; 2 * d]).unwrap()
    }

    #[test]
    fn zero_attention_vector_gives_zero_logit() {
        let params = identity_params(3);
        let logit = attention_logit(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], 2.0, &params).unwrap();
        assert_eq!(logit, 0.0);
    }

    #[test]
    fn logit_worked_example() {
        // W = [1], f_i = f_j = [0.5], a = (1, 1): pre-activation is exactly
        // 1, positive so the slope is irrelevant; dividing by w = 2 gives
        // 0.5.
        let params = AttentionParams::new(1, 1, vec![1.0], vec![1.0, 1.0]).unwrap();
        let logit = attention_logit(&[0.5], &[0.5], 2.0, &params).unwrap();
        assert_eq!(logit, 0.5);
    }

    #[test]
    fn logit_matches_term_by_term_recomputation() {
        let params = AttentionParams::from_seed(4, 3, 11);
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        use rand::Rng;
        for _ in 0..50 {
            let f_i: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f_j: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: f64 = rng.gen_range(0.1..5.0);
            let got = attention_logit(&f_i, &f_j, w, &params).unwrap();

            // Independent dense recomputation.
            let mut zi = [0.0; 3];
            let mut zj = [0.0; 3];
            for c in 0..3 {
                for r in 0..4 {
                    zi[c] += params.w_matrix[r * 3 + c] * f_i[r];
                    zj[c] += params.w_matrix[r * 3 + c] * f_j[r];
                }
            }
            let mut pre = 0.0;
            for c in 0..3 {
                pre += params.a_vector[c] * zi[c] + params.a_vector[3 + c] * zj[c];
            }
            let act = if pre >= 0.0 { pre } else { params.leaky_slope * pre };
            let expected = act / w.max(params.w_floor);
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_rejects_dimension_mismatch() {
        let params = identity_params(2);
        assert!(matches!(
            attention_logit(&[1.0], &[1.0, 2.0], 1.0, &params),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn single_neighbor_takes_all_attention() {
        let g = graph_of(2, &[(0, 1, 0.7)]);
        let feats = NodeFeatureSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let params = AttentionParams::from_seed(2, 2, 3);
        let coeffs = attention_coefficients(0, &g, &feats, &params).unwrap();
        assert_eq!(coeffs.len(), 1);
        assert_eq!(coeffs[&1], 1.0);
    }

    #[test]
    fn identical_neighbors_split_evenly() {
        let g = graph_of(3, &[(0, 1, 0.5), (0, 2, 0.5)]);
        let feats =
            NodeFeatureSet::new(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![3.0, 4.0]]).unwrap();
        let params = AttentionParams::from_seed(2, 2, 9);
        let coeffs = attention_coefficients(0, &g, &feats, &params).unwrap();
        assert!((coeffs[&1] - 0.5).abs() < 1e-12);
        assert!((coeffs[&2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn smaller_weight_attracts_more_attention() {
        // Identical neighbor features with a positive pre-activation:
        // the lighter edge must win.
        for seed in 0..30 {
            let mut params = AttentionParams::from_seed(2, 2, seed);
            let feats =
                NodeFeatureSet::new(vec![vec![0.3, -0.8], vec![1.0, 0.5], vec![1.0, 0.5]])
                    .unwrap();
            let pre = {
                let zi = params.transform(feats.get(0).unwrap()).unwrap();
                let zj = params.transform(feats.get(1).unwrap()).unwrap();
                let mut s = 0.0;
                for c in 0..2 {
                    s += params.a_vector[c] * zi[c] + params.a_vector[2 + c] * zj[c];
                }
                s
            };
            if pre < 0.0 {
                // Flip the attention vector to make the pre-activation
                // positive without touching anything else.
                for a in &mut params.a_vector {
                    *a = -*a;
                }
            }
            let g = graph_of(3, &[(0, 1, 0.2), (0, 2, 0.9)]);
            let coeffs = attention_coefficients(0, &g, &feats, &params).unwrap();
            assert!(coeffs[&1] > coeffs[&2], "seed {seed}");
        }
    }

    #[test]
    fn isolated_node_errors_in_coefficients() {
        let g = graph_of(2, &[]);
        let feats = NodeFeatureSet::new(vec![vec![0.0], vec![0.0]]).unwrap();
        let params = identity_params(1);
        assert!(matches!(
            attention_coefficients(0, &g, &feats, &params),
            Err(Error::IsolatedNode(0))
        ));
    }

    #[test]
    fn aggregate_with_identity_transform() {
        let params = identity_params(2);
        let feats =
            NodeFeatureSet::new(vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();

        let single: BTreeMap<usize, f64> = [(1, 1.0)].into_iter().collect();
        assert_eq!(aggregate(&single, &feats, &params).unwrap(), vec![3.0, 4.0]);

        let pair: BTreeMap<usize, f64> = [(1, 0.5), (2, 0.5)].into_iter().collect();
        assert_eq!(aggregate(&pair, &feats, &params).unwrap(), vec![4.0, 5.0]);
    }

    #[test]
    fn aggregate_matches_dense_recomputation() {
        let params = AttentionParams::from_seed(3, 2, 21);
        let feats = NodeFeatureSet::new(vec![
            vec![0.1, 0.2, 0.3],
            vec![-1.0, 0.5, 2.0],
            vec![0.7, -0.7, 0.0],
        ])
        .unwrap();
        let coeffs: BTreeMap<usize, f64> = [(0, 0.2), (1, 0.3), (2, 0.5)].into_iter().collect();
        let got = aggregate(&coeffs, &feats, &params).unwrap();
        for c in 0..2 {
            let mut expected = 0.0;
            for (&j, &alpha) in &coeffs {
                let f = feats.get(j).unwrap();
                let mut z = 0.0;
                for r in 0..3 {
                    z += params.w_matrix[r * 2 + c] * f[r];
                }
                expected += alpha * z;
            }
            assert!((got[c] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_on_edgeless_graph_transforms_in_place() {
        let g = graph_of(3, &[]);
        let feats =
            NodeFeatureSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let params = identity_params(2);
        let out = layer_forward(&g, &feats, &params).unwrap();
        assert_eq!(out.vectors(), feats.vectors());
    }

    #[test]
    fn forward_with_zero_attention_is_uniform() {
        let g = graph_of(3, &[(0, 1, 1.0), (0, 2, 3.0), (1, 2, 2.0)]);
        let feats =
            NodeFeatureSet::new(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let params = identity_params(2); // zero a_vector
        let out = layer_forward(&g, &feats, &params).unwrap();
        // Node 0 averages nodes 1 and 2 uniformly.
        assert_eq!(out.get(0).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn forward_requires_total_features() {
        let g = graph_of(2, &[(0, 1, 1.0)]);
        let feats = NodeFeatureSet::new(vec![vec![1.0]]).unwrap();
        let params = identity_params(1);
        assert!(layer_forward(&g, &feats, &params).is_err());
    }

    #[test]
    fn standardized_features_are_zero_mean_unit_variance() {
        let events = vec![
            Event::new(0, 10, 100, 1),
            Event::new(4, 20, 200, -1),
            Event::new(8, 30, 300, 1),
        ];
        let feats = standardized_features(&events);
        for c in 0..3 {
            let mean: f64 = feats.vectors().iter().map(|f| f[c]).sum::<f64>() / 3.0;
            let var: f64 = feats.vectors().iter().map(|f| f[c] * f[c]).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        // Constant coordinates collapse to zero rather than dividing by 0.
        let constant = standardized_features(&[Event::new(5, 5, 5, 1), Event::new(5, 9, 6, 1)]);
        assert_eq!(constant.vectors()[0][0], 0.0);
    }

    #[test]
    fn params_file_round_trip_and_seeding() {
        let explicit = r#"{"d_in":2,"d_out":1,"w_matrix":[1.0,2.0],"a_vector":[0.5,0.25],"leaky_slope":0.1}"#;
        let p = params_from_json(explicit).unwrap();
        assert_eq!(p.w_matrix, vec![1.0, 2.0]);
        assert_eq!(p.leaky_slope, 0.1);

        let seeded = r#"{"d_in":4,"d_out":8,"seed":42}"#;
        let a = params_from_json(seeded).unwrap();
        let b = AttentionParams::from_seed(4, 8, 42);
        assert_eq!(a, b);

        let partial = r#"{"d_in":2,"d_out":1,"w_matrix":[1.0,2.0]}"#;
        assert!(params_from_json(partial).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn coefficients_sum_to_one(seed in 0u64..300, n in 2usize..12) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.6) {
                        edges.push((i, j, rng.gen_range(1e-6..5.0)));
                    }
                }
            }
            let g = graph_of(n, &edges);
            let feats = NodeFeatureSet::new(
                (0..n).map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect(),
            ).unwrap();
            let params = AttentionParams::from_seed(4, 6, seed.wrapping_add(1));
            let adjacency = g.adjacency();
            for i in 0..n {
                if adjacency[i].is_empty() {
                    continue;
                }
                let coeffs = attention_coefficients(i, &g, &feats, &params).unwrap();
                let total: f64 = coeffs.values().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!(coeffs.values().all(|a| a.is_finite() && *a >= 0.0));
            }
        }

        #[test]
        fn forward_is_permutation_equivariant(seed in 0u64..300, n in 2usize..8) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    edges.push((i, j, rng.gen_range(0.1..4.0)));
                }
            }
            let g = graph_of(n, &edges);
            let feats = NodeFeatureSet::new(
                (0..n).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
            ).unwrap();
            let params = AttentionParams::from_seed(3, 4, seed.wrapping_add(7));
            let base = layer_forward(&g, &feats, &params).unwrap();

            // Relabel node i -> (i + 1) mod n.
            let perm = |i: usize| (i + 1) % n;
            let mut p_edges: Vec<(usize, usize, f64)> = edges
                .iter()
                .map(|&(i, j, w)| {
                    let (a, b) = (perm(i), perm(j));
                    (a.min(b), a.max(b), w)
                })
                .collect();
            p_edges.sort_by_key(|x| (x.0, x.1));
            let mut p_feats = vec![Vec::new(); n];
            for i in 0..n {
                p_feats[perm(i)] = feats.get(i).unwrap().to_vec();
            }
            let pg = graph_of(n, &p_edges);
            let permuted = layer_forward(&pg, &NodeFeatureSet::new(p_feats).unwrap(), &params).unwrap();
            for i in 0..n {
                let a = base.get(i).unwrap();
                let b = permuted.get(perm(i)).unwrap();
                for (x, y) in a.iter().zip(b) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn coefficients_stay_finite_under_extremes(scale in 1.0f64..100.0, tiny in 0.0f64..1.0) {
            // Pre-activations up to +/-100 and weights down to the floor.
            let params = AttentionParams::new(
                1,
                1,
                vec![scale],
                vec![1.0, 1.0],
            ).unwrap();
            let w_small = DEFAULT_WEIGHT_FLOOR * tiny; // clamps to the floor
            let g = graph_of(3, &[(0, 1, w_small), (0, 2, 1.0)]);
            let feats = NodeFeatureSet::new(vec![vec![scale], vec![scale], vec![-scale]]).unwrap();
            let coeffs = attention_coefficients(0, &g, &feats, &params).unwrap();
            let total: f64 = coeffs.values().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(coeffs.values().all(|a| a.is_finite()));
        }
    }
}
