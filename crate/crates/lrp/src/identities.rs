//! Exact electric-network identities and their randomized verification
//! suites.
//!
//! Three families of checks live here: the monotone flow-comparison property
//! (raising the conductance of one edge into a junction never increases the
//! electric flow arriving through a sibling edge), the rank-one update of the
//! grounded-Laplacian inverse that drives its proof, and the cutset
//! variational characterization of effective resistance, which turns any
//! feasible cutset certificate into a lower bound.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::solver::{two_point_resistance, Network, SolverError, Vertex};

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),
    #[error("cutset enumeration limited to {limit} edges, network has {got}")]
    TooManyEdges { got: usize, limit: usize },
}

/// One flow-comparison instance: terminals, the junction triple, and the
/// conductance increment applied to the edge `{w2, w}`.
#[derive(Debug, Clone)]
pub struct ComparisonInstance<S: Scalar = f64> {
    pub net: Network<S>,
    pub source: Vertex,
    pub sink: Vertex,
    pub w: Vertex,
    pub w1: Vertex,
    pub w2: Vertex,
    pub delta_c: S,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonOutcome<S: Scalar = f64> {
    /// The orientation preconditions `g_{w1 w} > 0`, `g_{w2 w} > 0` fail;
    /// the instance is skipped, not failed.
    NotApplicable { g_w1_w: S, g_w2_w: S },
    Checked { g_before: S, g_after: S, holds: bool },
}

/// Compares the electric flow through `{w1, w}` before and after adding
/// `delta_c` to the conductance of `{w2, w}`.
pub fn flow_comparison<S: Scalar>(
    inst: &ComparisonInstance<S>,
) -> Result<ComparisonOutcome<S>, SolverError> {
    let vs = [&inst.w, &inst.w1, &inst.w2];
    for (i, a) in vs.iter().enumerate() {
        for b in vs.iter().skip(i + 1) {
            if a == b {
                return Err(SolverError::InvalidQuery(
                    "w, w1, w2 must be three distinct vertices".into(),
                ));
            }
        }
    }
    if inst.delta_c < S::zero() {
        return Err(SolverError::InvalidQuery("delta_c must be nonnegative".into()));
    }
    let base = two_point_resistance(&inst.net, &inst.source, &inst.sink)?;
    let g_w1_w = base.flow.get(&inst.w1, &inst.w);
    let g_w2_w = base.flow.get(&inst.w2, &inst.w);
    if g_w1_w <= S::zero() || g_w2_w <= S::zero() {
        return Ok(ComparisonOutcome::NotApplicable { g_w1_w, g_w2_w });
    }
    if inst.delta_c == S::zero() {
        return Ok(ComparisonOutcome::Checked { g_before: g_w1_w, g_after: g_w1_w, holds: true });
    }
    let bumped = inst.net.with_edge_delta(&inst.w2, &inst.w, inst.delta_c)?;
    let after = two_point_resistance(&bumped, &inst.source, &inst.sink)?;
    let g_after = after.flow.get(&inst.w1, &inst.w);
    let tol = S::from_f64_lossy(1e-9);
    Ok(ComparisonOutcome::Checked { g_before: g_w1_w, g_after, holds: g_after <= g_w1_w + tol })
}

/// Grounded Laplacian of a connected network: row/column `ground` removed.
/// Returns the row ordering alongside the matrix.
pub fn grounded_matrix<S: Scalar>(
    net: &Network<S>,
    ground: &Vertex,
) -> Result<(Vec<Vertex>, DMatrix<S>), SolverError> {
    if !net.contains(ground) {
        return Err(SolverError::UnknownVertex(ground.to_string()));
    }
    let ordering: Vec<Vertex> = net.vertices().filter(|v| *v != ground).cloned().collect();
    let pos: BTreeMap<&Vertex, usize> = ordering.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let n = ordering.len();
    let mut c = DMatrix::<S>::zeros(n, n);
    for ((u, v), &cond) in net.edges() {
        match (pos.get(u), pos.get(v)) {
            (Some(&i), Some(&j)) => {
                c[(i, j)] -= cond;
                c[(j, i)] -= cond;
                c[(i, i)] += cond;
                c[(j, j)] += cond;
            }
            (Some(&i), None) => c[(i, i)] += cond,
            (None, Some(&j)) => c[(j, j)] += cond,
            (None, None) => {}
        }
    }
    Ok((ordering, c))
}

/// Result of the rank-one grounded-inverse update.
#[derive(Debug, Clone)]
pub struct RankOneUpdate<S: Scalar = f64> {
    /// Row/column order of the matrices (ground excluded).
    pub ordering: Vec<Vertex>,
    pub ground: Vertex,
    pub z_base: DMatrix<S>,
    pub z_updated: DMatrix<S>,
    /// The positive scalar `delta_c / (1 + delta_c * D^T Z D)`.
    pub c_hat: S,
}

/// Updates `Z = C^{-1}` after adding `delta_c` to the conductance of
/// `{w2, w}` without re-inverting: `Z' = Z - c_hat * Z D D^T Z` where `D`
/// indicates `w2` when `w` is the grounded vertex and `w2 - w` otherwise.
pub fn rank_one_update<S: Scalar>(
    net: &Network<S>,
    w2: &Vertex,
    w: &Vertex,
    delta_c: S,
) -> Result<RankOneUpdate<S>, SolverError> {
    if w2 == w {
        return Err(SolverError::InvalidQuery("w2 and w must differ".into()));
    }
    for v in [w2, w] {
        if !net.contains(v) {
            return Err(SolverError::UnknownVertex(v.to_string()));
        }
    }
    if !(delta_c >= S::zero()) {
        return Err(SolverError::InvalidQuery("delta_c must be nonnegative".into()));
    }
    let ground = match net.grounded() {
        Some(g) => g.clone(),
        None => net.max_vertex().cloned().expect("nonempty network"),
    };
    if w2 == &ground {
        return Err(SolverError::InvalidQuery("w2 must not be the grounded vertex".into()));
    }
    let (ordering, c) = grounded_matrix(net, &ground)?;
    let pos: BTreeMap<&Vertex, usize> = ordering.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let n = ordering.len();

    let z_base = c.clone().cholesky().map(|ch| ch.inverse()).ok_or(SolverError::Numeric {
        method: "grounded-inverse",
        residual: f64::NAN,
        iterations: 0,
    })?;

    let mut d = nalgebra::DVector::<S>::zeros(n);
    d[pos[w2]] = S::one();
    if w != &ground {
        d[pos[w]] = -S::one();
    }

    let zd = &z_base * &d;
    let dzd = d.dot(&zd);
    let c_hat = delta_c / (S::one() + delta_c * dzd);
    let mut z_updated = z_base.clone();
    for i in 0..n {
        for j in 0..n {
            z_updated[(i, j)] -= c_hat * zd[i] * zd[j];
        }
    }
    Ok(RankOneUpdate { ordering, ground, z_base, z_updated, c_hat })
}

/// A collection of cutsets with a per-(edge, cutset) conductance assignment;
/// feasible certificates lower-bound the effective resistance.
#[derive(Debug, Clone)]
pub struct CutsetCertificate<S: Scalar = f64> {
    pub source: Vertex,
    pub sink: Vertex,
    /// Each cutset is a set of canonical edges `(u, v)` with `u < v`.
    pub cutsets: Vec<BTreeSet<(Vertex, Vertex)>>,
    /// `(cutset index, edge) -> c_{e, pi}`, defined exactly on member edges.
    pub assignment: BTreeMap<(usize, (Vertex, Vertex)), S>,
}

fn canonical(u: &Vertex, v: &Vertex) -> (Vertex, Vertex) {
    if u < v {
        (u.clone(), v.clone())
    } else {
        (v.clone(), u.clone())
    }
}

fn separates<S: Scalar>(
    net: &Network<S>,
    removed: &BTreeSet<(Vertex, Vertex)>,
    source: &Vertex,
    sink: &Vertex,
) -> bool {
    let mut adj: BTreeMap<&Vertex, Vec<&Vertex>> = BTreeMap::new();
    for ((u, v), _) in net.edges() {
        if removed.contains(&canonical(u, v)) {
            continue;
        }
        adj.entry(u).or_default().push(v);
        adj.entry(v).or_default().push(u);
    }
    let mut seen: BTreeSet<&Vertex> = BTreeSet::new();
    let mut queue = VecDeque::from([source]);
    seen.insert(source);
    while let Some(u) = queue.pop_front() {
        if u == sink {
            return false;
        }
        for &v in adj.get(u).into_iter().flatten() {
            if seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    true
}

/// Evaluates a cutset certificate: verifies that every cutset separates the
/// terminals, that the assignment covers each cutset and satisfies the
/// feasibility constraint `sum_pi 1/c_{e,pi} <= r_e` per edge, and returns
/// `sum_pi 1 / (sum_{e in pi} c_{e,pi})`, which never exceeds the effective
/// resistance.
pub fn cutset_bound<S: Scalar>(
    cert: &CutsetCertificate<S>,
    net: &Network<S>,
) -> Result<S, IdentityError> {
    if cert.cutsets.is_empty() {
        return Err(IdentityError::CertificateInvalid("no cutsets".into()));
    }
    let mut per_edge_load: BTreeMap<(Vertex, Vertex), S> = BTreeMap::new();
    let mut bound = S::zero();
    for (idx, cutset) in cert.cutsets.iter().enumerate() {
        if cutset.is_empty() {
            return Err(IdentityError::CertificateInvalid(format!("cutset {idx} is empty")));
        }
        for (u, v) in cutset {
            if net.conductance(u, v).is_none() {
                return Err(IdentityError::CertificateInvalid(format!(
                    "cutset {idx} references missing edge {{{u}, {v}}}"
                )));
            }
        }
        if !separates(net, cutset, &cert.source, &cert.sink) {
            return Err(IdentityError::CertificateInvalid(format!(
                "cutset {idx} does not separate {} from {}",
                cert.source, cert.sink
            )));
        }
        let mut denom = S::zero();
        for (u, v) in cutset {
            let key = (idx, canonical(u, v));
            let c = cert.assignment.get(&key).copied().ok_or_else(|| {
                IdentityError::CertificateInvalid(format!(
                    "edge {{{u}, {v}}} in cutset {idx} has no assignment"
                ))
            })?;
            if !(c > S::zero()) {
                return Err(IdentityError::CertificateInvalid(format!(
                    "assignment for edge {{{u}, {v}}} in cutset {idx} must be positive"
                )));
            }
            denom += c;
            let load = per_edge_load.entry(canonical(u, v)).or_insert_with(S::zero);
            *load += S::one() / c;
        }
        bound += S::one() / denom;
    }
    let slack = S::from_f64_lossy(1e-9);
    for ((u, v), load) in &per_edge_load {
        let r_e = S::one() / net.conductance(u, v).expect("edge checked above");
        if *load > r_e * (S::one() + slack) {
            return Err(IdentityError::CertificateInvalid(format!(
                "feasibility violated on edge {{{u}, {v}}}: sum 1/c = {} exceeds r_e = {}",
                load.to_f64_lossy(),
                r_e.to_f64_lossy()
            )));
        }
    }
    Ok(bound)
}

/// Builds the optimal certificate from the potential level sets of the unit
/// electric flow: one cutset per slab between consecutive distinct potential
/// values, with `c_{e,pi} = |dU_e| / (r_e * width)`. Feasibility is tight on
/// every flow-carrying edge and the bound telescopes to the resistance.
pub fn optimal_certificate<S: Scalar>(
    net: &Network<S>,
    source: &Vertex,
    sink: &Vertex,
) -> Result<CutsetCertificate<S>, SolverError> {
    let result = two_point_resistance(net, source, sink)?;
    let base = result.potentials[sink];
    let span = (result.potentials[source] - base).to_f64_lossy();

    // merge potential levels closer than a relative tolerance
    let mut levels: Vec<f64> =
        result.potentials.values().map(|u| (*u - base).to_f64_lossy()).collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let merge_tol = span.abs().max(1e-300) * 1e-12;
    let mut merged: Vec<f64> = Vec::new();
    for t in levels {
        match merged.last() {
            Some(&last) if t - last <= merge_tol => {}
            _ => merged.push(t),
        }
    }
    let level_of = |u: S| -> usize {
        let t = (u - base).to_f64_lossy();
        match merged.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i == merged.len() {
                    merged.len() - 1
                } else if t - merged[i - 1] <= merged[i] - t {
                    i - 1
                } else {
                    i
                }
            }
        }
    };

    let slabs = merged.len().saturating_sub(1);
    let mut cutsets: Vec<BTreeSet<(Vertex, Vertex)>> = vec![BTreeSet::new(); slabs];
    let mut assignment: BTreeMap<(usize, (Vertex, Vertex)), S> = BTreeMap::new();
    for ((u, v), &c) in net.edges() {
        let (Some(&pu), Some(&pv)) = (result.potentials.get(u), result.potentials.get(v)) else {
            continue;
        };
        let (lu, lv) = (level_of(pu), level_of(pv));
        if lu == lv {
            continue;
        }
        let (lo, hi) = (lu.min(lv), lu.max(lv));
        let du = S::from_f64_lossy(merged[hi] - merged[lo]);
        for k in lo..hi {
            let width = S::from_f64_lossy(merged[k + 1] - merged[k]);
            let key = canonical(u, v);
            cutsets[k].insert(key.clone());
            assignment.insert((k, key), c * du / width);
        }
    }
    // drop empty slabs (possible when merged levels collapse)
    let mut packed_cutsets = Vec::new();
    let mut packed_assignment = BTreeMap::new();
    for (k, cutset) in cutsets.into_iter().enumerate() {
        if cutset.is_empty() {
            continue;
        }
        let new_idx = packed_cutsets.len();
        for (u, v) in &cutset {
            let c = assignment[&(k, (u.clone(), v.clone()))];
            packed_assignment.insert((new_idx, (u.clone(), v.clone())), c);
        }
        packed_cutsets.push(cutset);
    }
    Ok(CutsetCertificate {
        source: source.clone(),
        sink: sink.clone(),
        cutsets: packed_cutsets,
        assignment: packed_assignment,
    })
}

const CUTSET_EDGE_LIMIT: usize = 16;

/// All minimal edge cutsets between `u` and `v`, by subset enumeration with
/// path checks. Guarded to at most 16 edges.
pub fn enumerate_cutsets<S: Scalar>(
    net: &Network<S>,
    u: &Vertex,
    v: &Vertex,
) -> Result<Vec<BTreeSet<(Vertex, Vertex)>>, IdentityError> {
    let m = net.edge_count();
    if m > CUTSET_EDGE_LIMIT {
        return Err(IdentityError::TooManyEdges { got: m, limit: CUTSET_EDGE_LIMIT });
    }
    let edges: Vec<(Vertex, Vertex)> =
        net.edges().map(|((a, b), _)| (a.clone(), b.clone())).collect();
    let to_set = |mask: u32| -> BTreeSet<(Vertex, Vertex)> {
        edges
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, e)| e.clone())
            .collect()
    };
    let mut cuts = vec![false; 1usize << m];
    let mut minimal = Vec::new();
    for mask in 0u32..(1u32 << m) {
        let set = to_set(mask);
        if !separates(net, &set, u, v) {
            continue;
        }
        cuts[mask as usize] = true;
        // minimal iff no single-edge-smaller subset still separates
        let mut is_minimal = true;
        for i in 0..m {
            if mask & (1 << i) != 0 && cuts[(mask & !(1 << i)) as usize] {
                is_minimal = false;
                break;
            }
        }
        if is_minimal && mask != 0 {
            minimal.push(set);
        }
    }
    Ok(minimal)
}

/// Randomized verification suites behind the `verify` subcommand.
pub mod suites {
    use super::*;
    use crate::solver::{brute_force_resistance, set_resistance, Flow};

    #[derive(Debug, Clone, serde::Serialize)]
    pub struct SuiteReport {
        pub suite: String,
        pub trials: u64,
        pub failures: u64,
        pub worst_violation: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub rejection_rate: Option<f64>,
    }

    impl SuiteReport {
        fn new(suite: &str, trials: u64) -> Self {
            SuiteReport {
                suite: suite.to_string(),
                trials,
                failures: 0,
                worst_violation: f64::NEG_INFINITY,
                rejection_rate: None,
            }
        }

        fn record(&mut self, violation: f64, tolerance: f64) {
            self.worst_violation = self.worst_violation.max(violation);
            if violation > tolerance {
                self.failures += 1;
            }
        }
    }

    /// Random connected network: a uniform attachment tree plus extra edges.
    pub fn random_connected_network(
        rng: &mut ChaCha8Rng,
        min_vertices: usize,
        max_vertices: usize,
        extra_edges: usize,
        unit_conductance: bool,
    ) -> Network<f64> {
        let nv = rng.random_range(min_vertices..=max_vertices);
        let mut net = Network::new();
        for v in 1..nv as i64 {
            let parent = rng.random_range(0..v);
            let c = if unit_conductance { 1.0 } else { rng.random_range(0.2..2.5) };
            net.add_edge(parent, v, c).expect("positive conductance");
        }
        let extra = rng.random_range(0..=extra_edges);
        for _ in 0..extra {
            let a = rng.random_range(0..nv as i64);
            let b = rng.random_range(0..nv as i64);
            if a != b {
                let c = if unit_conductance { 1.0 } else { rng.random_range(0.2..2.5) };
                net.add_edge(a, b, c).expect("positive conductance");
            }
        }
        net
    }

    /// Random series-parallel two-terminal network together with its exact
    /// resistance from the composition laws.
    pub fn random_series_parallel(
        rng: &mut ChaCha8Rng,
        depth: u32,
    ) -> (Network<f64>, Vertex, Vertex, f64) {
        let mut net = Network::new();
        let mut next_id = 2i64;
        let r = build_sp(rng, &mut net, &mut next_id, 0, 1, depth);
        (net, Vertex::Site(0), Vertex::Site(1), r)
    }

    fn build_sp(
        rng: &mut ChaCha8Rng,
        net: &mut Network<f64>,
        next_id: &mut i64,
        s: i64,
        t: i64,
        depth: u32,
    ) -> f64 {
        if depth == 0 || rng.random_range(0..4) == 0 {
            let c = rng.random_range(0.25..4.0);
            net.add_edge(s, t, c).expect("positive conductance");
            return 1.0 / c;
        }
        if rng.random_bool(0.5) {
            let mid = *next_id;
            *next_id += 1;
            let r1 = build_sp(rng, net, next_id, s, mid, depth - 1);
            let r2 = build_sp(rng, net, next_id, mid, t, depth - 1);
            r1 + r2
        } else {
            let r1 = build_sp(rng, net, next_id, s, t, depth - 1);
            let r2 = build_sp(rng, net, next_id, s, t, depth - 1);
            1.0 / (1.0 / r1 + 1.0 / r2)
        }
    }

    /// Random unit flow from `a` to `b`: a convex combination of loop-erased
    /// random-walk paths. Used for the Thomson-principle check.
    pub fn random_unit_flow(
        rng: &mut ChaCha8Rng,
        net: &Network<f64>,
        a: &Vertex,
        b: &Vertex,
        paths: usize,
    ) -> Flow<f64> {
        let mut adj: BTreeMap<&Vertex, Vec<&Vertex>> = BTreeMap::new();
        for ((u, v), _) in net.edges() {
            adj.entry(u).or_default().push(v);
            adj.entry(v).or_default().push(u);
        }
        let mut weights: Vec<f64> = (0..paths).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let mut flow = Flow::new();
        for &w in &weights {
            let mut trail: Vec<&Vertex> = vec![a];
            while trail.last() != Some(&b) {
                let here = *trail.last().expect("nonempty");
                let nexts = &adj[here];
                let next = nexts[rng.random_range(0..nexts.len())];
                if let Some(pos) = trail.iter().position(|&v| v == next) {
                    trail.truncate(pos + 1);
                } else {
                    trail.push(next);
                }
            }
            for pair in trail.windows(2) {
                flow.add(pair[0].clone(), pair[1].clone(), w);
            }
        }
        flow
    }

    /// Flow comparison on rejection-sampled applicable instances.
    pub fn run_flow_comparison(trials: u64, seed: u64) -> SuiteReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = SuiteReport::new("flow-comparison", trials);
        let mut applicable = 0u64;
        let mut rejected = 0u64;
        while applicable < trials {
            let net = random_connected_network(&mut rng, 4, 12, 10, false);
            let nv = net.vertex_count() as i64;
            let w = Vertex::Site(rng.random_range(0..nv));
            let w1 = Vertex::Site(rng.random_range(0..nv));
            let w2 = Vertex::Site(rng.random_range(0..nv));
            let source = Vertex::Site(rng.random_range(0..nv));
            let sink = Vertex::Site(rng.random_range(0..nv));
            if source == sink || w == w1 || w == w2 || w1 == w2 {
                rejected += 1;
                continue;
            }
            let inst = ComparisonInstance {
                net,
                source,
                sink,
                w,
                w1,
                w2,
                delta_c: rng.random_range(0.05..5.0),
            };
            match flow_comparison(&inst) {
                Ok(ComparisonOutcome::Checked { g_before, g_after, holds: _ }) => {
                    applicable += 1;
                    report.record(g_after - g_before, 1e-9);
                }
                Ok(ComparisonOutcome::NotApplicable { .. }) => rejected += 1,
                Err(_) => rejected += 1,
            }
        }
        report.rejection_rate = Some(rejected as f64 / (rejected + applicable) as f64);
        report
    }

    /// Rank-one update identity, grounded-junction variant (`w` grounded).
    pub fn run_rank_one_grounded(trials: u64, seed: u64) -> SuiteReport {
        run_rank_one(trials, seed, true)
    }

    /// Rank-one update identity, interior-junction variant.
    pub fn run_rank_one_interior(trials: u64, seed: u64) -> SuiteReport {
        run_rank_one(trials, seed, false)
    }

    fn run_rank_one(trials: u64, seed: u64, grounded_w: bool) -> SuiteReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(if grounded_w { 1 } else { 2 }));
        let name = if grounded_w { "rank-one-grounded" } else { "rank-one-interior" };
        let mut report = SuiteReport::new(name, trials);
        let mut done = 0u64;
        while done < trials {
            let net = random_connected_network(&mut rng, 4, 10, 8, false);
            let nv = net.vertex_count() as i64;
            let ground = Vertex::Site(nv - 1);
            let w = if grounded_w {
                ground.clone()
            } else {
                Vertex::Site(rng.random_range(0..nv - 1))
            };
            let w2 = Vertex::Site(rng.random_range(0..nv - 1));
            if w2 == w {
                continue;
            }
            let delta = rng.random_range(0.05..4.0);
            let update = match rank_one_update(&net, &w2, &w, delta) {
                Ok(u) => u,
                Err(_) => continue,
            };
            // direct re-assembly of C' from the bumped network
            let bumped = net.with_edge_delta(&w2, &w, delta).expect("positive delta");
            let (_, c_prime) = grounded_matrix(&bumped, &update.ground).expect("ground exists");
            let product = &update.z_updated * &c_prime;
            let n = product.nrows();
            let mut worst = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((product[(i, j)] - target).abs());
                }
            }
            if update.c_hat <= 0.0 {
                worst = worst.max(1.0);
            }
            report.record(worst, 1e-9);
            done += 1;
        }
        report
    }

    /// Random feasible certificates never exceed the solved resistance.
    pub fn run_cutset_bound(trials: u64, seed: u64) -> SuiteReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
        let mut report = SuiteReport::new("cutset-bound", trials);
        let mut done = 0u64;
        while done < trials {
            let net = random_connected_network(&mut rng, 4, 7, 3, false);
            if net.edge_count() > CUTSET_EDGE_LIMIT {
                continue;
            }
            let nv = net.vertex_count() as i64;
            let (u, v) = (Vertex::Site(0), Vertex::Site(nv - 1));
            let all = match enumerate_cutsets(&net, &u, &v) {
                Ok(c) if !c.is_empty() => c,
                _ => continue,
            };
            let count = rng.random_range(1..=all.len().min(4));
            let mut chosen: Vec<BTreeSet<(Vertex, Vertex)>> = Vec::new();
            for _ in 0..count {
                chosen.push(all[rng.random_range(0..all.len())].clone());
            }
            // random positive assignment, scaled per edge into feasibility
            let mut assignment: BTreeMap<(usize, (Vertex, Vertex)), f64> = BTreeMap::new();
            for (idx, cutset) in chosen.iter().enumerate() {
                for e in cutset {
                    assignment.insert((idx, e.clone()), rng.random_range(0.1..5.0));
                }
            }
            let mut load: BTreeMap<(Vertex, Vertex), f64> = BTreeMap::new();
            for ((_, e), c) in &assignment {
                *load.entry(e.clone()).or_insert(0.0) += 1.0 / c;
            }
            for ((idx, e), c) in assignment.clone() {
                let r_e = 1.0 / net.conductance(&e.0, &e.1).expect("edge exists");
                let s = load[&e];
                if s > r_e {
                    assignment.insert((idx, e), c * s / r_e);
                }
            }
            let cert = CutsetCertificate {
                source: u.clone(),
                sink: v.clone(),
                cutsets: chosen,
                assignment,
            };
            let bound = match cutset_bound(&cert, &net) {
                Ok(b) => b,
                Err(_) => continue,
            };
            let r = two_point_resistance(&net, &u, &v).expect("connected").value;
            report.record(bound - r, 1e-9);
            done += 1;
        }
        report
    }

    /// Potential-slab certificates achieve equality on series-parallel
    /// instances.
    pub fn run_cutset_equality(trials: u64, seed: u64) -> SuiteReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));
        let mut report = SuiteReport::new("cutset-equality", trials);
        for _ in 0..trials {
            let (net, s, t, _exact) = random_series_parallel(&mut rng, 3);
            let r = two_point_resistance(&net, &s, &t).expect("connected").value;
            let cert = optimal_certificate(&net, &s, &t).expect("connected");
            let bound = cutset_bound(&cert, &net).expect("constructed certificate is feasible");
            report.record((bound - r).abs(), 1e-8);
        }
        report
    }

    /// Solver vs brute-force flow minimization on small random graphs.
    pub fn run_solver_oracle(trials: u64, seed: u64) -> SuiteReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
        let mut report = SuiteReport::new("solver-oracle", trials);
        let mut done = 0u64;
        while done < trials {
            let net = random_connected_network(&mut rng, 3, 8, 6, false);
            let nv = net.vertex_count() as i64;
            let a = Vertex::Site(rng.random_range(0..nv));
            let b = Vertex::Site(rng.random_range(0..nv));
            if a == b {
                continue;
            }
            if done % 3 == 0 {
                // set-to-set variant
                let s1: BTreeSet<Vertex> = [a.clone()].into();
                let mut s2: BTreeSet<Vertex> = [b.clone()].into();
                let extra = Vertex::Site(rng.random_range(0..nv));
                if extra != a && extra != b {
                    s2.insert(extra);
                }
                let solved = set_resistance(&net, &s1, &s2).expect("connected").value;
                let brute = brute_force_resistance(&net, &s1, &s2).expect("small instance");
                report.record((solved - brute).abs(), 1e-9);
            } else {
                let solved = two_point_resistance(&net, &a, &b).expect("connected").value;
                let s1: BTreeSet<Vertex> = [a.clone()].into();
                let s2: BTreeSet<Vertex> = [b.clone()].into();
                let brute = brute_force_resistance(&net, &s1, &s2).expect("small instance");
                report.record((solved - brute).abs(), 1e-9);
            }
            done += 1;
        }
        report
    }

    /// Exact series/parallel composition laws.
    pub fn run_series_parallel(trials: u64, seed: u64) -> SuiteReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(6));
        let mut report = SuiteReport::new("series-parallel", trials);
        for _ in 0..trials {
            let (net, s, t, exact) = random_series_parallel(&mut rng, 4);
            let solved = two_point_resistance(&net, &s, &t).expect("connected").value;
            report.record((solved - exact).abs(), 1e-10);
        }
        report
    }

    /// Rayleigh monotonicity under random edge additions and conductance
    /// increases.
    pub fn run_rayleigh(trials: u64, seed: u64) -> SuiteReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let mut report = SuiteReport::new("rayleigh", trials);
        let mut done = 0u64;
        while done < trials {
            let net = random_connected_network(&mut rng, 4, 10, 8, false);
            let nv = net.vertex_count() as i64;
            let a = Vertex::Site(rng.random_range(0..nv));
            let b = Vertex::Site(rng.random_range(0..nv));
            if a == b {
                continue;
            }
            let before = two_point_resistance(&net, &a, &b).expect("connected").value;
            let u = Vertex::Site(rng.random_range(0..nv));
            let v = Vertex::Site(rng.random_range(0..nv));
            if u == v {
                continue;
            }
            let bumped =
                net.with_edge_delta(&u, &v, rng.random_range(0.05..3.0)).expect("positive");
            let after = two_point_resistance(&bumped, &a, &b).expect("connected").value;
            report.record(after - before, 1e-10);
            done += 1;
        }
        report
    }

    /// Thomson principle: random unit flows never beat the electric flow.
    pub fn run_thomson(trials: u64, seed: u64) -> SuiteReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(8));
        let mut report = SuiteReport::new("thomson", trials);
        let mut done = 0u64;
        while done < trials {
            let net = random_connected_network(&mut rng, 4, 9, 6, false);
            let nv = net.vertex_count() as i64;
            let a = Vertex::Site(rng.random_range(0..nv));
            let b = Vertex::Site(rng.random_range(0..nv));
            if a == b {
                continue;
            }
            let r = two_point_resistance(&net, &a, &b).expect("connected").value;
            let flow = random_unit_flow(&mut rng, &net, &a, &b, 3);
            let mut energy = 0.0;
            for ((u, v), f) in flow.iter() {
                energy += f * f / net.conductance(u, v).expect("flow follows edges");
            }
            report.record(r - energy, 1e-9);
            done += 1;
        }
        report
    }

    pub const ALL_SUITES: [&str; 9] = [
        "flow-comparison",
        "rank-one-grounded",
        "rank-one-interior",
        "cutset-bound",
        "cutset-equality",
        "solver-oracle",
        "series-parallel",
        "rayleigh",
        "thomson",
    ];

    pub fn run_named(name: &str, trials: u64, seed: u64) -> Option<SuiteReport> {
        Some(match name {
            "flow-comparison" => run_flow_comparison(trials, seed),
            "rank-one-grounded" => run_rank_one_grounded(trials, seed),
            "rank-one-interior" => run_rank_one_interior(trials, seed),
            "cutset-bound" => run_cutset_bound(trials, seed),
            "cutset-equality" => run_cutset_equality(trials, seed),
            "solver-oracle" => run_solver_oracle(trials, seed),
            "series-parallel" => run_series_parallel(trials, seed),
            "rayleigh" => run_rayleigh(trials, seed),
            "thomson" => run_thomson(trials, seed),
            _ => return None,
        })
    }

    pub fn run_all(trials: u64, seed: u64) -> Vec<SuiteReport> {
        ALL_SUITES
            .iter()
            .map(|name| run_named(name, trials, seed).expect("known suite"))
            .collect()
    }
}
