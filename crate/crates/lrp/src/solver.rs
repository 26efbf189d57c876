//! Effective resistances, potentials, and unit electric flows on finite
//! conductance networks.
//!
//! A [`Network`] is an undirected multigraph with positive conductances;
//! parallel edges are folded into a single conductance before solving, and the
//! flow reported on a folded pair is the total. Resistance queries ground the
//! highest-indexed terminal, solve the grounded Laplacian system, and return
//! the potential field, the unit electric flow `f = c * dU`, and its energy.
//! Instances up to 2000 vertices use a dense Cholesky factorization; larger
//! ones fall back to Jacobi-preconditioned conjugate gradient with an
//! iteration cap of `20 * sqrt(N)` and a surfaced failure, never a silently
//! degraded answer. Disconnected terminals surface as an explicit
//! infinite-resistance signal rather than a float sentinel.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{Interval, LrpSample};
use crate::scalar::Scalar;

/// Vertices above this count are solved iteratively.
pub const DENSE_VERTEX_LIMIT: usize = 2000;

const BRUTE_FORCE_LIMIT: usize = 10;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("terminals are disconnected: infinite resistance")]
    InfiniteResistance,
    #[error("numeric failure ({method}): relative residual {residual:.3e} after {iterations} iterations")]
    Numeric { method: &'static str, residual: f64, iterations: usize },
    #[error("instance too large for {what}: {got} > {limit}")]
    TooLarge { what: &'static str, got: usize, limit: usize },
    #[error("conductance must be positive and finite, got {0}")]
    InvalidConductance(f64),
}

/// Vertex id: an integer site or a labeled supernode. Sites order before
/// supernodes, so a contracted complement is the highest-indexed terminal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Site(i64),
    Super(String),
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Site(i) => write!(f, "{i}"),
            Vertex::Super(l) => write!(f, "{l}"),
        }
    }
}

impl From<i64> for Vertex {
    fn from(i: i64) -> Self {
        Vertex::Site(i)
    }
}

/// Antisymmetric edge flow, stored once per unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow<S: Scalar = f64> {
    entries: BTreeMap<(Vertex, Vertex), S>,
}

impl<S: Scalar> Default for Flow<S> {
    fn default() -> Self {
        Flow { entries: BTreeMap::new() }
    }
}

impl<S: Scalar> Flow<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Signed flow from `u` to `v`; zero off the support.
    pub fn get(&self, u: &Vertex, v: &Vertex) -> S {
        if u < v {
            self.entries.get(&(u.clone(), v.clone())).copied().unwrap_or_else(S::zero)
        } else {
            -self.entries.get(&(v.clone(), u.clone())).copied().unwrap_or_else(S::zero)
        }
    }

    pub fn add(&mut self, u: Vertex, v: Vertex, value: S) {
        debug_assert!(u != v);
        let (key, signed) = if u < v { ((u, v), value) } else { ((v, u), -value) };
        let slot = self.entries.entry(key).or_insert_with(S::zero);
        *slot += signed;
    }

    pub fn set(&mut self, u: Vertex, v: Vertex, value: S) {
        debug_assert!(u != v);
        let (key, signed) = if u < v { ((u, v), value) } else { ((v, u), -value) };
        self.entries.insert(key, signed);
    }

    /// Canonical entries `((u, v), f)` with `u < v`.
    pub fn iter(&self) -> impl Iterator<Item = (&(Vertex, Vertex), &S)> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Net outflow per vertex.
    pub fn divergence(&self) -> BTreeMap<Vertex, S> {
        let mut div: BTreeMap<Vertex, S> = BTreeMap::new();
        for ((u, v), &f) in &self.entries {
            *div.entry(u.clone()).or_insert_with(S::zero) += f;
            *div.entry(v.clone()).or_insert_with(S::zero) -= f;
        }
        div
    }

    /// Energy against unit conductances: `sum f^2` over unordered edges.
    pub fn unit_energy(&self) -> S {
        let mut e = S::zero();
        for (_, &f) in &self.entries {
            e += f * f;
        }
        e
    }
}

/// Finite conductance network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<S: Scalar = f64> {
    verts: BTreeSet<Vertex>,
    cond: BTreeMap<(Vertex, Vertex), S>,
    grounded: Option<Vertex>,
}

impl<S: Scalar> Default for Network<S> {
    fn default() -> Self {
        Network { verts: BTreeSet::new(), cond: BTreeMap::new(), grounded: None }
    }
}

impl<S: Scalar> Network<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ensure_vertex(&mut self, v: Vertex) {
        self.verts.insert(v);
    }

    /// Adds conductance `c` between `u` and `v`; parallel contributions fold.
    pub fn add_edge(&mut self, u: impl Into<Vertex>, v: impl Into<Vertex>, c: S) -> Result<(), SolverError> {
        let (u, v) = (u.into(), v.into());
        if !(c > S::zero()) || !c.is_finite() {
            return Err(SolverError::InvalidConductance(c.to_f64_lossy()));
        }
        if u == v {
            return Err(SolverError::InvalidQuery(format!("self-loop at {u}")));
        }
        let key = if u < v { (u.clone(), v.clone()) } else { (v.clone(), u.clone()) };
        self.verts.insert(u);
        self.verts.insert(v);
        let slot = self.cond.entry(key).or_insert_with(S::zero);
        *slot += c;
        Ok(())
    }

    pub fn conductance(&self, u: &Vertex, v: &Vertex) -> Option<S> {
        let key = if u < v { (u.clone(), v.clone()) } else { (v.clone(), u.clone()) };
        self.cond.get(&key).copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.verts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.cond.len()
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.verts.contains(v)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.verts.iter()
    }

    /// Highest vertex in the `Site < Super` ordering.
    pub fn max_vertex(&self) -> Option<&Vertex> {
        self.verts.iter().next_back()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&(Vertex, Vertex), &S)> {
        self.cond.iter()
    }

    pub fn set_grounded(&mut self, v: Option<Vertex>) {
        self.grounded = v;
    }

    pub fn grounded(&self) -> Option<&Vertex> {
        self.grounded.as_ref()
    }

    /// Returns a copy with `delta` added to the conductance of `{u, v}`
    /// (creating the edge if absent and `delta > 0`).
    pub fn with_edge_delta(&self, u: &Vertex, v: &Vertex, delta: S) -> Result<Network<S>, SolverError> {
        let mut out = self.clone();
        if delta == S::zero() {
            return Ok(out);
        }
        out.add_edge(u.clone(), v.clone(), delta)?;
        Ok(out)
    }

    /// Contracts each named group to a fresh supernode. Edges internal to a
    /// group are dropped; parallel conductances fold.
    pub fn contract(&self, groups: &[(String, BTreeSet<Vertex>)]) -> Result<Network<S>, SolverError> {
        for (label, group) in groups {
            if self.verts.contains(&Vertex::Super(label.clone())) {
                return Err(SolverError::InvalidQuery(format!("supernode label {label} already in use")));
            }
            for v in group {
                if !self.verts.contains(v) {
                    return Err(SolverError::UnknownVertex(v.to_string()));
                }
            }
        }
        let map = |v: &Vertex| -> Vertex {
            for (label, group) in groups {
                if group.contains(v) {
                    return Vertex::Super(label.clone());
                }
            }
            v.clone()
        };
        let mut out = Network::new();
        out.grounded = self.grounded.as_ref().map(&map);
        for v in &self.verts {
            out.ensure_vertex(map(v));
        }
        for ((u, v), &c) in &self.cond {
            let (mu, mv) = (map(u), map(v));
            if mu != mv {
                out.add_edge(mu, mv, c)?;
            }
        }
        Ok(out)
    }

    fn indexed(&self) -> (Vec<Vertex>, BTreeMap<Vertex, usize>, Vec<Vec<(usize, S)>>) {
        let verts: Vec<Vertex> = self.verts.iter().cloned().collect();
        let index: BTreeMap<Vertex, usize> =
            verts.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        let mut adj = vec![Vec::new(); verts.len()];
        for ((u, v), &c) in &self.cond {
            let (iu, iv) = (index[u], index[v]);
            adj[iu].push((iv, c));
            adj[iv].push((iu, c));
        }
        (verts, index, adj)
    }
}

/// Builds the conductance network of a sample: unit conductance per window
/// edge, supernode attachments folded to their parallel count.
pub fn network_from_sample(sample: &LrpSample) -> Network<f64> {
    let mut net = Network::new();
    for v in sample.window.lo..=sample.window.hi {
        net.ensure_vertex(Vertex::Site(v));
    }
    for &(i, j) in &sample.edges {
        net.add_edge(Vertex::Site(i), Vertex::Site(j), 1.0).expect("unit conductance");
    }
    for s in &sample.supernodes {
        let sv = Vertex::Super(s.label.clone());
        net.ensure_vertex(sv.clone());
        for (&u, &count) in &s.counts {
            if count > 0 {
                net.add_edge(Vertex::Site(u), sv.clone(), count as f64).expect("positive count");
            }
        }
    }
    net
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SolveMethod {
    DenseCholesky,
    ConjugateGradient,
    ConstrainedLeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SolverStats {
    pub method: SolveMethod,
    pub iterations: usize,
    pub residual: f64,
}

/// Resistance value with the potential field, unit electric flow, and energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ResistanceResult<S: Scalar = f64> {
    pub value: S,
    pub potentials: BTreeMap<Vertex, S>,
    pub flow: Flow<S>,
    pub energy: S,
    pub solver_stats: SolverStats,
}

impl<S: Scalar> ResistanceResult<S> {
    /// JSON with fields value/potentials/flow/energy/solver_stats. The flow is
    /// emitted only on request since it scales with the edge count.
    pub fn to_json(&self, emit_flow: bool) -> Value {
        let potentials: BTreeMap<String, f64> =
            self.potentials.iter().map(|(v, &u)| (v.to_string(), u.to_f64_lossy())).collect();
        let mut doc = json!({
            "value": self.value.to_f64_lossy(),
            "potentials": potentials,
            "energy": self.energy.to_f64_lossy(),
            "solver_stats": self.solver_stats,
        });
        if emit_flow {
            let flow: Vec<Value> = self
                .flow
                .iter()
                .map(|((u, v), f)| json!([u.to_string(), v.to_string(), f.to_f64_lossy()]))
                .collect();
            doc["flow"] = Value::Array(flow);
        }
        doc
    }
}

struct ReducedSystem<S: Scalar> {
    /// Component vertices in index order.
    comp: Vec<usize>,
    /// Position of each component vertex among the unknowns; ground is None.
    unknown_pos: BTreeMap<usize, usize>,
    rows: Vec<Vec<(usize, S)>>,
    diag: Vec<S>,
}

fn component_of<S: Scalar>(adj: &[Vec<(usize, S)>], start: usize) -> Vec<usize> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut comp = Vec::new();
    while let Some(u) = queue.pop_front() {
        comp.push(u);
        for &(v, _) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    comp.sort_unstable();
    comp
}

fn reduce<S: Scalar>(adj: &[Vec<(usize, S)>], comp: &[usize], ground: usize) -> ReducedSystem<S> {
    let mut unknown_pos = BTreeMap::new();
    for &v in comp {
        if v != ground {
            let next = unknown_pos.len();
            unknown_pos.insert(v, next);
        }
    }
    let n = unknown_pos.len();
    let mut rows = vec![Vec::new(); n];
    let mut diag = vec![S::zero(); n];
    for (&v, &p) in &unknown_pos {
        for &(w, c) in &adj[v] {
            diag[p] += c;
            if let Some(&q) = unknown_pos.get(&w) {
                rows[p].push((q, c));
            }
        }
    }
    ReducedSystem { comp: comp.to_vec(), unknown_pos, rows, diag }
}

impl<S: Scalar> ReducedSystem<S> {
    fn apply(&self, x: &[S], out: &mut [S]) {
        for p in 0..x.len() {
            let mut acc = self.diag[p] * x[p];
            for &(q, c) in &self.rows[p] {
                acc -= c * x[q];
            }
            out[p] = acc;
        }
    }

    fn relative_residual(&self, x: &[S], b: &[S]) -> f64 {
        let mut ax = vec![S::zero(); x.len()];
        self.apply(x, &mut ax);
        let mut num = S::zero();
        let mut den = S::zero();
        for p in 0..x.len() {
            let r = b[p] - ax[p];
            num += r * r;
            den += b[p] * b[p];
        }
        (num.to_f64_lossy() / den.to_f64_lossy().max(f64::MIN_POSITIVE)).sqrt()
    }
}

fn solve_dense<S: Scalar>(sys: &ReducedSystem<S>, b: &[S]) -> Result<(Vec<S>, SolverStats), SolverError> {
    let n = b.len();
    let mut a = DMatrix::<S>::zeros(n, n);
    for p in 0..n {
        a[(p, p)] = sys.diag[p];
        for &(q, c) in &sys.rows[p] {
            a[(p, q)] -= c;
        }
    }
    let chol = a.clone().cholesky().ok_or(SolverError::Numeric {
        method: "dense-cholesky",
        residual: f64::NAN,
        iterations: 0,
    })?;
    let bvec = nalgebra::DVector::from_column_slice(b);
    let mut x = chol.solve(&bvec);
    // Iterative refinement keeps the true residual at the 1e-10 contract even
    // for ill-conditioned path-like instances.
    let mut residual = sys.relative_residual(x.as_slice(), b);
    let mut refinements = 0;
    while residual > S::residual_tolerance().to_f64_lossy() * 0.5 && refinements < 3 {
        let r = &bvec - &a * &x;
        x += chol.solve(&r);
        let updated = sys.relative_residual(x.as_slice(), b);
        if updated >= residual {
            break;
        }
        residual = updated;
        refinements += 1;
    }
    if residual > S::residual_tolerance().to_f64_lossy() {
        return Err(SolverError::Numeric {
            method: "dense-cholesky",
            residual,
            iterations: refinements,
        });
    }
    Ok((
        x.as_slice().to_vec(),
        SolverStats { method: SolveMethod::DenseCholesky, iterations: refinements, residual },
    ))
}

fn solve_cg<S: Scalar>(sys: &ReducedSystem<S>, b: &[S]) -> Result<(Vec<S>, SolverStats), SolverError> {
    let n = b.len();
    let cap = (20.0 * (n as f64).sqrt()).ceil() as usize;
    let tol = S::residual_tolerance();
    let norm_b = S::from_f64_lossy(dot(b, b).to_f64_lossy().sqrt().max(f64::MIN_POSITIVE));
    let mut x = vec![S::zero(); n];
    let mut r = b.to_vec();
    let mut z: Vec<S> = r.iter().zip(&sys.diag).map(|(&ri, &di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![S::zero(); n];
    let mut iterations = 0;
    while iterations < cap {
        let rnorm = S::from_f64_lossy(dot(&r, &r).to_f64_lossy().sqrt());
        if rnorm <= tol * norm_b {
            break;
        }
        sys.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / sys.diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }
    let residual = sys.relative_residual(&x, b);
    if residual > tol.to_f64_lossy() {
        return Err(SolverError::Numeric { method: "jacobi-cg", residual, iterations });
    }
    Ok((x, SolverStats { method: SolveMethod::ConjugateGradient, iterations, residual }))
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut s = S::zero();
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Effective resistance between two vertices, with potentials and the unit
/// electric flow.
pub fn two_point_resistance<S: Scalar>(
    net: &Network<S>,
    a: &Vertex,
    b: &Vertex,
) -> Result<ResistanceResult<S>, SolverError> {
    if a == b {
        return Err(SolverError::InvalidQuery("terminals must be distinct".into()));
    }
    for v in [a, b] {
        if !net.contains(v) {
            return Err(SolverError::UnknownVertex(v.to_string()));
        }
    }
    let (verts, index, adj) = net.indexed();
    let (ia, ib) = (index[a], index[b]);
    let comp = component_of(&adj, ia);
    if comp.binary_search(&ib).is_err() {
        return Err(SolverError::InfiniteResistance);
    }

    // Ground the configured vertex when it lies in the component, otherwise
    // the highest-indexed terminal (the proof convention U_n = 0).
    let ground = match net.grounded() {
        Some(g) => {
            let ig = *index.get(g).ok_or_else(|| SolverError::UnknownVertex(g.to_string()))?;
            if comp.binary_search(&ig).is_ok() {
                ig
            } else {
                ia.max(ib)
            }
        }
        None => ia.max(ib),
    };

    let sys = reduce(&adj, &comp, ground);
    let mut b_vec = vec![S::zero(); sys.unknown_pos.len()];
    if let Some(&p) = sys.unknown_pos.get(&ia) {
        b_vec[p] += S::one();
    }
    if let Some(&p) = sys.unknown_pos.get(&ib) {
        b_vec[p] -= S::one();
    }

    let (x, stats) = if sys.unknown_pos.len() <= DENSE_VERTEX_LIMIT {
        solve_dense(&sys, &b_vec)?
    } else {
        solve_cg(&sys, &b_vec)?
    };

    let mut potentials = BTreeMap::new();
    for &v in &sys.comp {
        let u = sys.unknown_pos.get(&v).map(|&p| x[p]).unwrap_or_else(S::zero);
        potentials.insert(verts[v].clone(), u);
    }

    let mut flow = Flow::new();
    let mut energy = S::zero();
    for ((u, v), &c) in net.edges() {
        let (Some(&pu), Some(&pv)) = (potentials.get(u), potentials.get(v)) else {
            continue;
        };
        let f = c * (pu - pv);
        if f != S::zero() {
            flow.set(u.clone(), v.clone(), f);
        }
        energy += f * f / c;
    }

    let value = potentials[a] - potentials[b];
    Ok(ResistanceResult { value, potentials, flow, energy, solver_stats: stats })
}

fn unique_label(net_vertices: &BTreeSet<Vertex>, base: &str) -> String {
    let mut label = base.to_string();
    while net_vertices.contains(&Vertex::Super(label.clone())) {
        label.push('_');
    }
    label
}

/// Resistance between two disjoint vertex sets: both sets are contracted to
/// supernodes (internal edges dropped, parallel conductances summed) and the
/// two-point resistance of the contraction is returned.
pub fn set_resistance<S: Scalar>(
    net: &Network<S>,
    s1: &BTreeSet<Vertex>,
    s2: &BTreeSet<Vertex>,
) -> Result<ResistanceResult<S>, SolverError> {
    if s1.is_empty() || s2.is_empty() {
        return Err(SolverError::InvalidQuery("terminal sets must be nonempty".into()));
    }
    if s1.intersection(s2).next().is_some() {
        return Err(SolverError::InvalidQuery("terminal sets overlap".into()));
    }
    let l1 = unique_label(&net.verts, "S1");
    let l2 = unique_label(&net.verts, "S2");
    let contracted = net.contract(&[(l1.clone(), s1.clone()), (l2.clone(), s2.clone())])?;
    two_point_resistance(&contracted, &Vertex::Super(l1), &Vertex::Super(l2))
}

/// Effective resistance between `i` and `j` using only edges with both
/// endpoints inside `window`.
pub fn restricted_resistance(
    sample: &LrpSample,
    window: Interval,
    i: i64,
    j: i64,
) -> Result<ResistanceResult<f64>, SolverError> {
    if window.lo < sample.window.lo || window.hi > sample.window.hi {
        return Err(SolverError::InvalidQuery(format!(
            "window [{}, {}] escapes the sample window [{}, {}]",
            window.lo, window.hi, sample.window.lo, sample.window.hi
        )));
    }
    if !window.contains(i) || !window.contains(j) {
        return Err(SolverError::InvalidQuery(format!("terminal outside window [{}, {}]", window.lo, window.hi)));
    }
    let mut net = Network::new();
    for v in window.lo..=window.hi {
        net.ensure_vertex(Vertex::Site(v));
    }
    for &(u, v) in &sample.edges {
        if window.contains(u) && window.contains(v) {
            net.add_edge(Vertex::Site(u), Vertex::Site(v), 1.0)?;
        }
    }
    two_point_resistance(&net, &Vertex::Site(i), &Vertex::Site(j))
}

/// Resistance between the contracted intervals `J1 = [x1, x2]` and
/// `J2 = [x3, x4]` for flows that must cross the middle gap: every edge with
/// one endpoint at or left of `x2` and the other at or right of `x3` is
/// removed, as is every edge entering the open gap `(x2, x3)` from outside
/// `[x1, x4]`.
///
/// Once `J1` and `J2` are contracted, a surviving edge outside `[x1, x4]` can
/// only connect a terminal to itself (left-to-right pairs are in the excluded
/// set), so it never carries flow; the solve therefore restricts to
/// `[x1, x4]`. Contracted-complement supernodes fall under the same rule and
/// are dropped.
pub fn hat_resistance(
    sample: &LrpSample,
    x1: i64,
    x2: i64,
    x3: i64,
    x4: i64,
) -> Result<ResistanceResult<f64>, SolverError> {
    if !(x1 < x2 && x2 < x3 && x3 < x4) {
        return Err(SolverError::InvalidQuery(format!(
            "interval endpoints must satisfy x1 < x2 < x3 < x4, got {x1}, {x2}, {x3}, {x4}"
        )));
    }
    let clip = |x: i64| x.clamp(sample.window.lo, sample.window.hi);
    let (lo, hi) = (clip(x1), clip(x4));

    let mut net = Network::new();
    for v in lo..=hi {
        net.ensure_vertex(Vertex::Site(v));
    }
    for &(u, v) in &sample.edges {
        if u < lo || v > hi {
            continue;
        }
        if u <= x2 && v >= x3 {
            continue;
        }
        net.add_edge(Vertex::Site(u), Vertex::Site(v), 1.0)?;
    }

    let j1: BTreeSet<Vertex> = (clip(x1)..=clip(x2)).map(Vertex::Site).collect();
    let j2: BTreeSet<Vertex> = (clip(x3)..=clip(x4)).map(Vertex::Site).collect();
    if j1.is_empty() || j2.is_empty() {
        return Err(SolverError::InvalidQuery(
            "hat-resistance intervals escape the sample window".into(),
        ));
    }
    set_resistance(&net, &j1, &j2)
}

/// Reference oracle: minimizes the flow energy `sum_e r_e f_e^2` over unit
/// flows from `s1` to `s2` by a dense equality-constrained least-squares
/// (KKT) solve. Only for small instances.
pub fn brute_force_resistance<S: Scalar>(
    net: &Network<S>,
    s1: &BTreeSet<Vertex>,
    s2: &BTreeSet<Vertex>,
) -> Result<S, SolverError> {
    if net.vertex_count() > BRUTE_FORCE_LIMIT {
        return Err(SolverError::TooLarge {
            what: "brute-force flow minimization",
            got: net.vertex_count(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if s1.is_empty() || s2.is_empty() {
        return Err(SolverError::InvalidQuery("terminal sets must be nonempty".into()));
    }
    if s1.intersection(s2).next().is_some() {
        return Err(SolverError::InvalidQuery("terminal sets overlap".into()));
    }
    let (verts, index, adj) = net.indexed();
    let term1: BTreeSet<usize> = s1.iter().map(|v| index[v]).collect();
    let term2: BTreeSet<usize> = s2.iter().map(|v| index[v]).collect();

    // Components that touch both terminal sets act in parallel.
    let mut seen = vec![false; verts.len()];
    let mut component_resistances: Vec<S> = Vec::new();
    for start in 0..verts.len() {
        if seen[start] {
            continue;
        }
        let comp = component_of(&adj, start);
        for &v in &comp {
            seen[v] = true;
        }
        let has1 = comp.iter().any(|v| term1.contains(v));
        let has2 = comp.iter().any(|v| term2.contains(v));
        if has1 && has2 {
            component_resistances.push(brute_force_component(net, &verts, &comp, &term1, &term2)?);
        }
    }
    if component_resistances.is_empty() {
        return Err(SolverError::InfiniteResistance);
    }
    let mut inv = S::zero();
    for r in component_resistances {
        inv += S::one() / r;
    }
    Ok(S::one() / inv)
}

fn brute_force_component<S: Scalar>(
    net: &Network<S>,
    verts: &[Vertex],
    comp: &[usize],
    term1: &BTreeSet<usize>,
    term2: &BTreeSet<usize>,
) -> Result<S, SolverError> {
    let comp_set: BTreeSet<usize> = comp.iter().copied().collect();
    let mut edges: Vec<(usize, usize, S)> = Vec::new();
    let index: BTreeMap<&Vertex, usize> = verts.iter().enumerate().map(|(i, v)| (v, i)).collect();
    for ((u, v), &c) in net.edges() {
        let (iu, iv) = (index[u], index[v]);
        if comp_set.contains(&iu) && comp_set.contains(&iv) {
            edges.push((iu.min(iv), iu.max(iv), c));
        }
    }

    let m = edges.len();
    let mut rows: Vec<Vec<(usize, S)>> = Vec::new();
    // conservation at non-terminals
    for &v in comp {
        if term1.contains(&v) || term2.contains(&v) {
            continue;
        }
        let mut row = Vec::new();
        for (e, &(a, b, _)) in edges.iter().enumerate() {
            if a == v {
                row.push((e, S::one()));
            } else if b == v {
                row.push((e, -S::one()));
            }
        }
        rows.push(row);
    }
    // unit total outflow from the source set
    let mut source_row = Vec::new();
    for (e, &(a, b, _)) in edges.iter().enumerate() {
        let a_in = term1.contains(&a);
        let b_in = term1.contains(&b);
        if a_in && !b_in {
            source_row.push((e, S::one()));
        } else if b_in && !a_in {
            source_row.push((e, -S::one()));
        }
    }
    rows.push(source_row);

    let k = rows.len();
    let dim = m + k;
    let mut kkt = DMatrix::<S>::zeros(dim, dim);
    for (e, &(_, _, c)) in edges.iter().enumerate() {
        kkt[(e, e)] = (S::one() + S::one()) / c;
    }
    for (r, row) in rows.iter().enumerate() {
        for &(e, s) in row {
            kkt[(m + r, e)] = s;
            kkt[(e, m + r)] = s;
        }
    }
    let mut rhs = nalgebra::DVector::<S>::zeros(dim);
    rhs[m + k - 1] = S::one();

    let solution = kkt
        .lu()
        .solve(&rhs)
        .ok_or(SolverError::Numeric { method: "kkt-lu", residual: f64::NAN, iterations: 0 })?;

    let mut energy = S::zero();
    for (e, &(_, _, c)) in edges.iter().enumerate() {
        energy += solution[e] * solution[e] / c;
    }
    Ok(energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path(n: usize) -> Network<f64> {
        let mut net = Network::new();
        for i in 0..n as i64 - 1 {
            net.add_edge(i, i + 1, 1.0).unwrap();
        }
        net
    }

    #[test]
    fn series_path() {
        let net = path(3);
        let r = two_point_resistance(&net, &Vertex::Site(0), &Vertex::Site(2)).unwrap();
        assert_relative_eq!(r.value, 2.0, epsilon = 1e-12);
        assert_relative_eq!(r.energy, r.value, epsilon = 1e-10);
        assert_eq!(r.solver_stats.method, SolveMethod::DenseCholesky);
    }

    #[test]
    fn triangle() {
        let mut net = Network::new();
        net.add_edge(0, 1, 1.0).unwrap();
        net.add_edge(1, 2, 1.0).unwrap();
        net.add_edge(0, 2, 1.0).unwrap();
        let r = two_point_resistance(&net, &Vertex::Site(0), &Vertex::Site(1)).unwrap();
        assert_relative_eq!(r.value, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn flow_is_conserved_and_unit() {
        let mut net = Network::new();
        net.add_edge(0, 1, 1.0).unwrap();
        net.add_edge(1, 2, 2.0).unwrap();
        net.add_edge(0, 2, 0.5).unwrap();
        net.add_edge(2, 3, 1.0).unwrap();
        let r = two_point_resistance(&net, &Vertex::Site(0), &Vertex::Site(3)).unwrap();
        let div: BTreeMap<Vertex, f64> = r.flow.divergence();
        assert_relative_eq!(div[&Vertex::Site(0)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(div[&Vertex::Site(3)], -1.0, epsilon = 1e-9);
        assert!(div[&Vertex::Site(1)].abs() < 1e-9);
        assert!(div[&Vertex::Site(2)].abs() < 1e-9);
    }

    #[test]
    fn disconnected_terminals_signal_infinite_resistance() {
        let mut net = Network::new();
        net.add_edge(0, 1, 1.0).unwrap();
        net.add_edge(5, 6, 1.0).unwrap();
        match two_point_resistance(&net, &Vertex::Site(0), &Vertex::Site(6)) {
            Err(SolverError::InfiniteResistance) => {}
            other => panic!("expected infinite-resistance signal, got {other:?}"),
        }
    }

    #[test]
    fn set_resistance_contracts() {
        let net = path(4);
        let s1: BTreeSet<Vertex> = [Vertex::Site(0), Vertex::Site(1)].into();
        let s2: BTreeSet<Vertex> = [Vertex::Site(3)].into();
        let r = set_resistance(&net, &s1, &s2).unwrap();
        assert_relative_eq!(r.value, 2.0, epsilon = 1e-12);

        let bad: BTreeSet<Vertex> = [Vertex::Site(1)].into();
        assert!(matches!(
            set_resistance(&net, &s1, &bad),
            Err(SolverError::InvalidQuery(_))
        ));
    }

    #[test]
    fn brute_force_matches_closed_forms() {
        let net = path(3);
        let s1: BTreeSet<Vertex> = [Vertex::Site(0)].into();
        let s2: BTreeSet<Vertex> = [Vertex::Site(2)].into();
        assert_relative_eq!(brute_force_resistance(&net, &s1, &s2).unwrap(), 2.0, epsilon = 1e-10);

        let mut tri = Network::new();
        tri.add_edge(0, 1, 1.0).unwrap();
        tri.add_edge(1, 2, 1.0).unwrap();
        tri.add_edge(0, 2, 1.0).unwrap();
        let s2: BTreeSet<Vertex> = [Vertex::Site(1)].into();
        assert_relative_eq!(
            brute_force_resistance(&tri, &s1, &s2).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn cg_agrees_with_dense_on_sampled_window() {
        // The same LRP window solved dense and via CG by toggling the vertex
        // count around the dense limit with padding chains.
        let params = crate::model::ModelParams::new(1.0, 4040).unwrap();
        let sample = crate::model::sample_window(params, 0, 900, &[]).unwrap();
        let net = network_from_sample(&sample);
        let dense = two_point_resistance(&net, &Vertex::Site(0), &Vertex::Site(900)).unwrap();
        assert_eq!(dense.solver_stats.method, SolveMethod::DenseCholesky);

        // pad with a long pendant chain so the solve goes iterative; the
        // pendant carries no flow and must not change the value
        let mut padded = net.clone();
        for i in 0..2_200i64 {
            padded.add_edge(10_000 + i, 10_001 + i, 1.0).unwrap();
        }
        padded.add_edge(900, 10_000, 1e-3).unwrap();
        let cg = two_point_resistance(&padded, &Vertex::Site(0), &Vertex::Site(900)).unwrap();
        assert_eq!(cg.solver_stats.method, SolveMethod::ConjugateGradient);
        assert!(cg.solver_stats.residual < 1e-10);
        assert_relative_eq!(cg.value, dense.value, epsilon = 1e-7);
    }

    #[test]
    fn cg_failure_is_surfaced_not_degraded() {
        // A bare path misses the 20*sqrt(N) iteration budget by a wide
        // margin; the solver must report that rather than return garbage.
        let net = path(2_500);
        match two_point_resistance(&net, &Vertex::Site(0), &Vertex::Site(2_499)) {
            Err(SolverError::Numeric { method, residual, iterations }) => {
                assert_eq!(method, "jacobi-cg");
                assert!(residual > 1e-10);
                assert!(iterations >= 1000);
            }
            Ok(r) => {
                // convergence is acceptable too, but only at full tolerance
                assert!(r.solver_stats.residual < 1e-10);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn f32_instantiation_solves_small_networks() {
        let mut net: Network<f32> = Network::new();
        net.add_edge(0, 1, 1.0f32).unwrap();
        net.add_edge(1, 2, 1.0f32).unwrap();
        let r = two_point_resistance(&net, &Vertex::Site(0), &Vertex::Site(2)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-4);
    }

    proptest::proptest! {
        #[test]
        fn flow_lookup_is_antisymmetric(
            entries in proptest::collection::vec((0i64..12, 0i64..12, -3.0f64..3.0), 1..30)
        ) {
            let mut flow: Flow = Flow::new();
            for &(u, v, f) in &entries {
                if u != v {
                    flow.add(Vertex::Site(u), Vertex::Site(v), f);
                }
            }
            for u in 0..12i64 {
                for v in 0..12i64 {
                    if u == v {
                        continue;
                    }
                    let fwd = flow.get(&Vertex::Site(u), &Vertex::Site(v));
                    let bwd = flow.get(&Vertex::Site(v), &Vertex::Site(u));
                    proptest::prop_assert_eq!(fwd, -bwd);
                }
            }
            // total divergence vanishes by antisymmetry
            let total: f64 = flow.divergence().values().sum();
            proptest::prop_assert!(total.abs() < 1e-9);
        }
    }
}
