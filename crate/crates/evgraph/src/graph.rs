//! Per-voxel weighted graph construction: reference velocities, angular
//! differences, polarity consistency, and the four-factor edge weight.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{compute_extents_slice, Event};
use crate::segment::Voxel;

/// Velocity magnitudes below this are treated as "no directional evidence"
/// and produce an angular difference of zero.
pub const VELOCITY_EPSILON: f64 = 1e-9;

/// Coefficients of the weighted edge factors. `normalize_factors` rescales
/// distance, speed difference, and angle onto [0, 1] before mixing, which
/// is what makes a fixed preset meaningful across voxels of different
/// physical scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub normalize_factors: bool,
}

impl WeightParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            delta,
            normalize_factors: true,
        }
    }

    /// Distance-only baseline.
    pub fn comb1() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn comb2() -> Self {
        Self::new(0.8, 0.1, 0.05, 0.05)
    }

    /// The balanced default configuration.
    pub fn comb3() -> Self {
        Self::new(0.7, 0.1, 0.1, 0.1)
    }

    pub fn comb4() -> Self {
        Self::new(0.6, 0.2, 0.1, 0.1)
    }

    /// Looks up a preset by name (`comb1`..`comb4`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "comb1" => Some(Self::comb1()),
            "comb2" => Some(Self::comb2()),
            "comb3" => Some(Self::comb3()),
            "comb4" => Some(Self::comb4()),
            _ => None,
        }
    }

    pub fn with_normalization(mut self, on: bool) -> Self {
        self.normalize_factors = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.alpha, self.beta, self.gamma, self.delta];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config(
                "weight coefficients must be finite and non-negative".into(),
            ));
        }
        if coeffs.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(
                "at least one weight coefficient must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for WeightParams {
    fn default() -> Self {
        Self::comb3()
    }
}

/// Planar motion vector for one event. Units are pixels per microsecond,
/// or raw pixels when `degenerate` is set (the defining pair shared a
/// timestamp, so only the 2D displacement is available).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityVector {
    pub vx: f64,
    pub vy: f64,
    pub degenerate: bool,
}

impl VelocityVector {
    pub fn magnitude(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

/// Displacement quotient between two events, falling back to the raw 2D
/// displacement when the timestamps coincide.
pub fn velocity_vector(e_i: &Event, e_j: &Event) -> VelocityVector {
    let dx = (e_j.x - e_i.x) as f64;
    let dy = (e_j.y - e_i.y) as f64;
    let dt = (e_j.t - e_i.t) as f64;
    if dt == 0.0 {
        VelocityVector {
            vx: dx,
            vy: dy,
            degenerate: true,
        }
    } else {
        VelocityVector {
            vx: dx / dt,
            vy: dy / dt,
            degenerate: false,
        }
    }
}

/// Angle in `[0, pi]` between two velocity vectors. Vectors with magnitude
/// below [`VELOCITY_EPSILON`] carry no directional evidence and yield 0.
pub fn angular_difference(u: &VelocityVector, v: &VelocityVector) -> f64 {
    let mu = u.magnitude();
    let mv = v.magnitude();
    if mu < VELOCITY_EPSILON || mv < VELOCITY_EPSILON {
        return 0.0;
    }
    let cos = ((u.vx * v.vx + u.vy * v.vy) / (mu * mv)).clamp(-1.0, 1.0);
    cos.acos()
}

/// 0 when the polarities match, 1 when they differ.
pub fn polarity_consistency(p_i: i8, p_j: i8) -> u8 {
    u8::from(p_i != p_j)
}

/// The four raw factors of one candidate edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFactors {
    /// 3D Euclidean distance over (x, y, t) in raw units.
    pub d: f64,
    /// Absolute difference of the two reference-velocity magnitudes.
    pub dv: f64,
    /// Angular difference of the reference velocities, in `[0, pi]`.
    pub theta: f64,
    /// Polarity consistency indicator: 0 consistent, 1 inconsistent.
    pub pol: u8,
}

/// Per-voxel normalizers: the bounding-box diagonal for distances and the
/// largest speed-magnitude spread for velocity differences. Both clamp to
/// 1 when the voxel is degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorScales {
    pub diag: f64,
    pub max_dv: f64,
}

impl FactorScales {
    /// No-op scales, for mixing raw factors directly.
    pub fn identity() -> Self {
        Self {
            diag: 1.0,
            max_dv: 1.0,
        }
    }

    pub fn for_voxel(voxel: &Voxel) -> Self {
        if voxel.len() < 2 {
            return Self::identity();
        }
        let diag = compute_extents_slice(voxel.events())
            .expect("voxel is non-empty")
            .diagonal();
        let speeds: Vec<f64> = reference_velocities(voxel.events())
            .iter()
            .map(VelocityVector::magnitude)
            .collect();
        let spread = speeds.iter().cloned().fold(f64::MIN, f64::max)
            - speeds.iter().cloned().fold(f64::MAX, f64::min);
        Self {
            diag,
            max_dv: if spread > 0.0 { spread } else { 1.0 },
        }
    }
}

/// Mixes the four factors with the configured coefficients. With
/// `normalize_factors` set, distance is divided by the voxel diagonal,
/// the speed difference by the voxel's maximum spread, and the angle by
/// pi, so every contribution lies in [0, 1].
pub fn edge_weight(f: &PairFactors, scales: &FactorScales, params: &WeightParams) -> f64 {
    let (d, dv, theta) = if params.normalize_factors {
        (
            f.d / scales.diag,
            f.dv / scales.max_dv,
            f.theta / std::f64::consts::PI,
        )
    } else {
        (f.d, f.dv, f.theta)
    };
    params.alpha * d + params.beta * dv + params.gamma * theta + params.delta * f.pol as f64
}

/// One weighted candidate edge; `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Complete weighted graph over one voxel's events. Node ids index into
/// `nodes`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventGraph {
    pub nodes: Vec<Event>,
    pub edges: Vec<Edge>,
}

impl EventGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Neighbor lists with edge weights, indexed by node id.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.i].push((e.j, e.w));
            adj[e.j].push((e.i, e.w));
        }
        adj
    }
}

/// Reference velocity for every node: each event is paired with its
/// nearest strict temporal successor, falling back to the nearest strict
/// predecessor at the end of the voxel, and to the spatially nearest
/// neighbor when the whole voxel shares one timestamp. Ties resolve to the
/// smallest node index.
pub(crate) fn reference_velocities(events: &[Event]) -> Vec<VelocityVector> {
    let n = events.len();
    debug_assert!(n >= 2);
    debug_assert!(events.windows(2).all(|w| w[0].t <= w[1].t));

    // Runs of equal timestamps; events are time-sorted within a voxel.
    let mut run_starts = vec![0usize];
    for k in 1..n {
        if events[k].t != events[k - 1].t {
            run_starts.push(k);
        }
    }

    if run_starts.len() == 1 {
        // Single shared timestamp: fall back to the nearest spatial neighbor.
        return (0..n)
            .map(|i| {
                let mut best = usize::MAX;
                let mut best_d2 = i64::MAX;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let dx = events[j].x - events[i].x;
                    let dy = events[j].y - events[i].y;
                    let d2 = dx * dx + dy * dy;
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = j;
                    }
                }
                velocity_vector(&events[i], &events[best])
            })
            .collect();
    }

    let mut run_of = vec![0usize; n];
    for (r, &start) in run_starts.iter().enumerate() {
        let end = run_starts.get(r + 1).copied().unwrap_or(n);
        for slot in &mut run_of[start..end] {
            *slot = r;
        }
    }

    (0..n)
        .map(|i| {
            let r = run_of[i];
            let reference = if r + 1 < run_starts.len() {
                run_starts[r + 1]
            } else {
                run_starts[r - 1]
            };
            velocity_vector(&events[i], &events[reference])
        })
        .collect()
}

/// Reference velocity of one node, using the nearest-successor rule of
/// `reference_velocities`.
pub fn reference_velocity(voxel: &Voxel, i: usize) -> Result<VelocityVector> {
    let n = voxel.len();
    if n < 2 {
        return Err(Error::TooFewEvents(n));
    }
    if i >= n {
        return Err(Error::NodeOutOfRange { id: i, nodes: n });
    }
    Ok(reference_velocities(voxel.events())[i])
}

/// Raw edge factors for one node pair of a voxel.
pub fn pair_factors(voxel: &Voxel, i: usize, j: usize) -> Result<PairFactors> {
    let n = voxel.len();
    if i >= n || j >= n {
        return Err(Error::NodeOutOfRange {
            id: i.max(j),
            nodes: n,
        });
    }
    if i == j {
        return Err(Error::InvalidArgument(
            "pair factors need two distinct nodes".into(),
        ));
    }
    let vels = reference_velocities(voxel.events());
    Ok(factors_from_parts(
        &voxel.events()[i],
        &voxel.events()[j],
        &vels[i],
        &vels[j],
    ))
}

fn factors_from_parts(
    e_i: &Event,
    e_j: &Event,
    v_i: &VelocityVector,
    v_j: &VelocityVector,
) -> PairFactors {
    let dx = (e_j.x - e_i.x) as f64;
    let dy = (e_j.y - e_i.y) as f64;
    let dt = (e_j.t - e_i.t) as f64;
    PairFactors {
        d: (dx * dx + dy * dy + dt * dt).sqrt(),
        dv: (v_i.magnitude() - v_j.magnitude()).abs(),
        theta: angular_difference(v_i, v_j),
        pol: polarity_consistency(e_i.p, e_j.p),
    }
}

/// Builds the complete candidate graph for one voxel: every unordered
/// event pair becomes an edge weighted by [`edge_weight`].
pub fn build_graph(voxel: &Voxel, params: &WeightParams) -> EventGraph {
    let events = voxel.events();
    let n = events.len();
    if n < 2 {
        return EventGraph {
            nodes: events.to_vec(),
            edges: Vec::new(),
        };
    }
    let vels = reference_velocities(events);
    let scales = FactorScales::for_voxel(voxel);
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let f = factors_from_parts(&events[i], &events[j], &vels[i], &vels[j]);
            edges.push(Edge {
                i,
                j,
                w: edge_weight(&f, &scales, params),
            });
        }
    }
    EventGraph {
        nodes: events.to_vec(),
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(x: i64, y: i64, t: i64, p: i8) -> Event {
        Event::new(x, y, t, p)
    }

    fn random_voxel(seed: u64, n: usize) -> Voxel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Voxel::from_events(
            (0..n)
                .map(|_| {
                    ev(
                        rng.gen_range(0..64),
                        rng.gen_range(0..64),
                        rng.gen_range(0..500),
                        if rng.gen_bool(0.5) { 1 } else { -1 },
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn velocity_quotient_and_fallback() {
        let v = velocity_vector(&ev(0, 0, 0, 1), &ev(2, 4, 2, 1));
        assert_eq!((v.vx, v.vy, v.degenerate), (1.0, 2.0, false));

        let v = velocity_vector(&ev(0, 0, 5, 1), &ev(3, 4, 5, 1));
        assert_eq!((v.vx, v.vy, v.degenerate), (3.0, 4.0, true));
        assert_eq!(v.magnitude(), 5.0);

        let v = velocity_vector(&ev(1, 1, 1, 1), &ev(1, 1, 1, 1));
        assert_eq!((v.vx, v.vy, v.degenerate), (0.0, 0.0, true));
    }

    #[test]
    fn reference_pairs_in_two_node_voxel() {
        let voxel = Voxel::from_events(vec![ev(0, 0, 0, 1), ev(2, 4, 2, 1)]);
        let v0 = reference_velocity(&voxel, 0).unwrap();
        let v1 = reference_velocity(&voxel, 1).unwrap();
        assert_eq!((v0.vx, v0.vy), (1.0, 2.0));
        // The backward reference divides a negated displacement by a
        // negated dt, so the motion estimate matches.
        assert_eq!((v1.vx, v1.vy), (1.0, 2.0));
    }

    #[test]
    fn reference_uses_successor_then_predecessor() {
        let voxel = Voxel::from_events(vec![
            ev(0, 0, 0, 1),
            ev(10, 0, 10, 1),
            ev(30, 0, 20, 1),
        ]);
        // Node 0 references node 1, node 2 references node 1.
        let v0 = reference_velocity(&voxel, 0).unwrap();
        assert_eq!((v0.vx, v0.vy), (1.0, 0.0));
        let v2 = reference_velocity(&voxel, 2).unwrap();
        assert_eq!((v2.vx, v2.vy), (2.0, 0.0));
    }

    #[test]
    fn reference_single_event_voxel_errors() {
        let voxel = Voxel::from_events(vec![ev(0, 0, 0, 1)]);
        assert!(matches!(
            reference_velocity(&voxel, 0),
            Err(Error::TooFewEvents(1))
        ));
    }

    #[test]
    fn reference_achieves_minimal_time_gap() {
        for seed in 0..20 {
            let voxel = random_voxel(seed, 24);
            let events = voxel.events();
            for i in 0..events.len() {
                let v = reference_velocity(&voxel, i).unwrap();
                // Exhaustive oracle: smallest |dt| among strict successors,
                // else among strict predecessors.
                let succ: Vec<i64> = events
                    .iter()
                    .filter(|e| e.t > events[i].t)
                    .map(|e| e.t - events[i].t)
                    .collect();
                let pred: Vec<i64> = events
                    .iter()
                    .filter(|e| e.t < events[i].t)
                    .map(|e| events[i].t - e.t)
                    .collect();
                let want_successor = !succ.is_empty();
                let expected_dt = if want_successor {
                    *succ.iter().min().unwrap()
                } else {
                    *pred.iter().min().unwrap()
                };
                // The reference must be one of the admissible neighbors at
                // the minimal |dt|.
                assert!(!v.degenerate);
                let matches_argmin = events.iter().enumerate().any(|(j, e)| {
                    j != i
                        && (e.t - events[i].t).abs() == expected_dt
                        && (e.t > events[i].t) == want_successor
                        && velocity_vector(&events[i], e) == v
                });
                assert!(matches_argmin, "node {i} seed {seed}");
            }
        }
    }

    #[test]
    fn reference_spatial_fallback_when_all_simultaneous() {
        let voxel = Voxel::from_events(vec![
            ev(0, 0, 7, 1),
            ev(1, 0, 7, 1),
            ev(10, 10, 7, 1),
        ]);
        let v2 = reference_velocity(&voxel, 2).unwrap();
        // Nearest spatial neighbor of node 2 is node 1 at (1, 0).
        assert!(v2.degenerate);
        assert_eq!((v2.vx, v2.vy), (-9.0, -10.0));
    }

    #[test]
    fn angle_examples() {
        let u = VelocityVector { vx: 1.0, vy: 0.0, degenerate: false };
        let v = VelocityVector { vx: 0.0, vy: 1.0, degenerate: false };
        assert!((angular_difference(&u, &v) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

        let u = VelocityVector { vx: 1.0, vy: 1.0, degenerate: false };
        let v = VelocityVector { vx: 2.0, vy: 2.0, degenerate: false };
        // Parallel vectors; the clamped arccos leaves rounding residue.
        assert!(angular_difference(&u, &v).abs() < 1e-7);

        let z = VelocityVector { vx: 0.0, vy: 0.0, degenerate: true };
        let u = VelocityVector { vx: 1.0, vy: 0.0, degenerate: false };
        assert_eq!(angular_difference(&u, &z), 0.0);
    }

    #[test]
    fn polarity_indicator() {
        assert_eq!(polarity_consistency(1, 1), 0);
        assert_eq!(polarity_consistency(1, -1), 1);
        assert_eq!(polarity_consistency(-1, -1), 0);
    }

    #[test]
    fn pair_factor_examples() {
        let voxel = Voxel::from_events(vec![ev(5, 5, 0, 1), ev(5, 5, 9, 1), ev(3, 0, 20, 1)]);
        // Nodes 0 and 1 share coordinates and polarity.
        let f = pair_factors(&voxel, 0, 1).unwrap();
        assert_eq!(f.pol, 0);
        assert_eq!(f.d, 9.0); // purely temporal separation

        let voxel = Voxel::from_events(vec![ev(0, 0, 0, 1), ev(3, 4, 0, -1)]);
        let f = pair_factors(&voxel, 0, 1).unwrap();
        assert_eq!(f.d, 5.0);
        assert_eq!(f.pol, 1);
    }

    #[test]
    fn pair_factors_match_term_by_term_recomputation() {
        let voxel = random_voxel(99, 16);
        let events = voxel.events();
        for i in 0..events.len() {
            for j in 0..events.len() {
                if i == j {
                    continue;
                }
                let f = pair_factors(&voxel, i, j).unwrap();
                let (a, b) = (&events[i], &events[j]);
                let d = (((b.x - a.x).pow(2) + (b.y - a.y).pow(2) + (b.t - a.t).pow(2)) as f64)
                    .sqrt();
                assert!((f.d - d).abs() < 1e-12);
                let vi = reference_velocity(&voxel, i).unwrap();
                let vj = reference_velocity(&voxel, j).unwrap();
                assert!((f.dv - (vi.magnitude() - vj.magnitude()).abs()).abs() < 1e-12);
                assert!((f.theta - angular_difference(&vi, &vj)).abs() < 1e-12);
                assert_eq!(f.pol, u8::from(a.p != b.p));
            }
        }
    }

    #[test]
    fn pair_factors_rejects_bad_ids() {
        let voxel = Voxel::from_events(vec![ev(0, 0, 0, 1), ev(1, 1, 1, 1)]);
        assert!(matches!(
            pair_factors(&voxel, 0, 5),
            Err(Error::NodeOutOfRange { id: 5, nodes: 2 })
        ));
        assert!(pair_factors(&voxel, 1, 1).is_err());
    }

    #[test]
    fn weight_mix_examples() {
        let f = PairFactors { d: 1.0, dv: 0.5, theta: 0.5, pol: 1 };
        let w = edge_weight(
            &f,
            &FactorScales::identity(),
            &WeightParams::comb3().with_normalization(false),
        );
        assert!((w - 0.9).abs() < 1e-12);

        let w = edge_weight(
            &f,
            &FactorScales::identity(),
            &WeightParams::comb1().with_normalization(false),
        );
        assert_eq!(w, f.d);

        let zero = PairFactors { d: 0.0, dv: 0.0, theta: 0.0, pol: 0 };
        assert_eq!(
            edge_weight(&zero, &FactorScales::identity(), &WeightParams::comb3()),
            0.0
        );
    }

    #[test]
    fn graph_sizes() {
        let voxel = Voxel::from_events(vec![ev(0, 0, 0, 1)]);
        let g = build_graph(&voxel, &WeightParams::default());
        assert_eq!((g.n_nodes(), g.n_edges()), (1, 0));

        let voxel = random_voxel(7, 4);
        let g = build_graph(&voxel, &WeightParams::default());
        assert_eq!((g.n_nodes(), g.n_edges()), (4, 6));
    }

    #[test]
    fn graph_edges_match_pairwise_recomputation() {
        let voxel = random_voxel(42, 12);
        let params = WeightParams::comb3();
        let g = build_graph(&voxel, &params);
        assert_eq!(g.n_edges(), 12 * 11 / 2);
        let scales = FactorScales::for_voxel(&voxel);
        for e in &g.edges {
            assert!(e.i < e.j);
            let f = pair_factors(&voxel, e.i, e.j).unwrap();
            let w = edge_weight(&f, &scales, &params);
            assert_eq!(e.w, w);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn factors_are_symmetric_and_in_range(seed in 0u64..500, n in 2usize..12) {
            let voxel = random_voxel(seed, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let fij = pair_factors(&voxel, i, j).unwrap();
                    let fji = pair_factors(&voxel, j, i).unwrap();
                    prop_assert_eq!(fij, fji);
                    prop_assert!((0.0..=std::f64::consts::PI).contains(&fij.theta));
                    prop_assert!(fij.d >= 0.0 && fij.dv >= 0.0);
                }
            }
        }

        #[test]
        fn comb1_without_normalization_is_euclidean(seed in 0u64..500, n in 2usize..10) {
            let voxel = random_voxel(seed, n);
            let g = build_graph(&voxel, &WeightParams::comb1().with_normalization(false));
            let events = voxel.events();
            for e in &g.edges {
                let (a, b) = (&events[e.i], &events[e.j]);
                let d = (((b.x - a.x).pow(2) + (b.y - a.y).pow(2) + (b.t - a.t).pow(2)) as f64)
                    .sqrt();
                prop_assert!((e.w - d).abs() < 1e-12);
            }
        }

        #[test]
        fn normalized_weights_are_bounded(seed in 0u64..500, n in 2usize..14) {
            let voxel = random_voxel(seed, n);
            let params = WeightParams::comb4();
            let bound = params.alpha + params.beta + params.gamma + params.delta;
            let g = build_graph(&voxel, &params);
            for e in &g.edges {
                prop_assert!(e.w >= 0.0);
                prop_assert!(e.w <= bound + 1e-12);
            }
        }

        #[test]
        fn polarity_flip_shifts_weight_by_delta(seed in 0u64..500, n in 2usize..10) {
            let voxel = random_voxel(seed, n);
            let params = WeightParams::comb3();
            let g = build_graph(&voxel, &params);

            let mut flipped_events = voxel.events().to_vec();
            flipped_events[0].p = -flipped_events[0].p;
            let flipped = Voxel::from_events(flipped_events);
            let g2 = build_graph(&flipped, &params);

            for (a, b) in g.edges.iter().zip(g2.edges.iter()) {
                prop_assert_eq!((a.i, a.j), (b.i, b.j));
                let shift = (a.w - b.w).abs();
                if a.i == 0 || a.j == 0 {
                    prop_assert!((shift - params.delta).abs() < 1e-9);
                } else {
                    prop_assert!(shift < 1e-12);
                }
            }
        }
    }
}
