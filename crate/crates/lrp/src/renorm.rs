//! Block renormalization of a fine sample: the renormalized graph, per-block
//! interval classification, internal energies, red components, and the flow
//! lifting/projection between the two scales.
//!
//! The window is divided into blocks of length `m`; block `i` covers the fine
//! sites `[base + i*m, base + (i+1)*m)`. Two blocks are adjacent in the
//! renormalized graph iff at least one fine edge joins them, which reproduces
//! the model distribution at the coarse scale by the exact rescaling of the
//! cell integrals.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{Interval, LrpSample};
use crate::scalar::Scalar;
use crate::solver::{
    hat_resistance, restricted_resistance, set_resistance, Flow, Network, SolverError, Vertex,
};

#[derive(Debug, Error)]
pub enum RenormError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid scale: m = {m} leaves {blocks} full blocks in the window")]
    InvalidScale { m: i64, blocks: i64 },
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
    #[error("lift infeasible: {0}")]
    LiftInfeasible(String),
    #[error("lambda-hat threshold mode requires a lambda_hat estimate")]
    MissingLambdaHat,
    #[error("classification parameter out of range: {0}")]
    InvalidParameter(String),
}

/// The renormalized block graph of a sample, with back-references from each
/// coarse edge to the fine edges that induce it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenormGraph {
    pub m: i64,
    pub blocks: usize,
    /// Fine coordinate of the left end of block 0.
    pub base: i64,
    edges: BTreeSet<(usize, usize)>,
    fine_backrefs: BTreeMap<(usize, usize), Vec<(i64, i64)>>,
}

impl RenormGraph {
    pub fn block_of(&self, site: i64) -> Option<usize> {
        if site < self.base || site >= self.base + self.m * self.blocks as i64 {
            return None;
        }
        Some(((site - self.base) / self.m) as usize)
    }

    pub fn block_interval(&self, i: usize) -> Interval {
        Interval::new(self.base + self.m * i as i64, self.base + self.m * (i as i64 + 1) - 1)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn edges(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.edges.iter()
    }

    pub fn degree(&self, i: usize) -> u64 {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count() as u64
    }

    pub fn backrefs(&self, i: usize, j: usize) -> &[(i64, i64)] {
        self.fine_backrefs
            .get(&(i.min(j), i.max(j)))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    /// The representative fine edge for a coarse edge: shortest span, ties
    /// broken by the lexicographically smallest pair.
    pub fn representative(&self, i: usize, j: usize) -> Option<(i64, i64)> {
        self.backrefs(i, j)
            .iter()
            .copied()
            .min_by_key(|&(x, y)| ((y - x).abs(), x, y))
    }
}

/// Identifies the intervals `[base + i*m, base + (i+1)*m)` to coarse vertices;
/// an edge joins two coarse vertices iff some fine edge joins the intervals.
pub fn renormalize(sample: &LrpSample, m: i64) -> Result<RenormGraph, RenormError> {
    let len = sample.window.len();
    let blocks = if m >= 1 { len / m } else { 0 };
    if m < 1 || blocks < 2 {
        return Err(RenormError::InvalidScale { m, blocks });
    }
    let base = sample.window.lo;
    let blocks = blocks as usize;
    let upper = base + m * blocks as i64;
    let mut edges = BTreeSet::new();
    let mut fine_backrefs: BTreeMap<(usize, usize), Vec<(i64, i64)>> = BTreeMap::new();
    for &(u, v) in &sample.edges {
        if u < base || v >= upper {
            continue;
        }
        let bu = ((u - base) / m) as usize;
        let bv = ((v - base) / m) as usize;
        if bu == bv {
            continue;
        }
        let key = (bu.min(bv), bu.max(bv));
        edges.insert(key);
        fine_backrefs.entry(key).or_default().push((u, v));
    }
    Ok(RenormGraph { m, blocks, base, edges, fine_backrefs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ThresholdMode {
    /// Threshold `alpha2 * m^delta`.
    Power,
    /// Threshold `alpha2 * lambda_hat(m)` from a prior estimate.
    LambdaHat,
}

/// Classification parameters; the defaults mirror the desk-scale choices
/// `M = 8`, `alpha = (0.1, 0.05)`, `delta = 0.2`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassifyParams {
    pub m: i64,
    /// The `M` of `M`-goodness: cap on the long-edge endpoint count.
    pub m_cap: u64,
    pub delta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub mode: ThresholdMode,
    pub lambda_hat: Option<f64>,
}

impl ClassifyParams {
    pub fn defaults(m: i64) -> Self {
        ClassifyParams {
            m,
            m_cap: 8,
            delta: 0.2,
            alpha1: 0.1,
            alpha2: 0.05,
            mode: ThresholdMode::Power,
            lambda_hat: None,
        }
    }

    fn validate(&self) -> Result<(), RenormError> {
        if self.m < 1 {
            return Err(RenormError::InvalidParameter(format!("m = {}", self.m)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(RenormError::InvalidParameter(format!("delta = {}", self.delta)));
        }
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(RenormError::InvalidParameter(format!("{name} = {v}")));
            }
        }
        Ok(())
    }

    fn threshold(&self) -> Result<f64, RenormError> {
        match self.mode {
            ThresholdMode::Power => Ok(self.alpha2 * (self.m as f64).powf(self.delta)),
            ThresholdMode::LambdaHat => {
                self.lambda_hat.map(|l| self.alpha2 * l).ok_or(RenormError::MissingLambdaHat)
            }
        }
    }
}

/// Per-block statistics and goodness flags at scale `m`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IntervalClassification {
    pub block: usize,
    /// Fine endpoints inside the block of edges reaching beyond the
    /// three-block context.
    pub k_set: Vec<i64>,
    pub xi: u64,
    pub eta: u64,
    pub m_good: bool,
    /// Minimum separation `alpha1 * m` between entering-edge endpoints and
    /// long-edge endpoints.
    pub cond1: bool,
    /// Every long-edge endpoint keeps `R_{I_i}(u, B^c) >= threshold`.
    pub cond2: bool,
    /// The interval-to-interval resistance across the block is at least the
    /// threshold.
    pub cond3: bool,
    pub very_good: bool,
    pub internal_energy: f64,
    /// Block touches the window boundary and lacks its three-block context;
    /// excluded from statistics.
    pub indeterminate: bool,
}

// An edge with one endpoint in a block, as seen by the separation condition.
// Supernode attachments count as edges to the far region.
#[derive(PartialEq, Eq, Clone)]
enum BoundaryEdge {
    Fine(i64, i64),
    Super(i64, String),
}

struct BlockContext {
    /// (edge, endpoint inside the block) entering from anywhere outside.
    entering: Vec<(BoundaryEdge, i64)>,
    /// (edge, endpoint inside the block) leaving beyond the context.
    leaving: Vec<(BoundaryEdge, i64)>,
}

fn block_context(sample: &LrpSample, rg: &RenormGraph, i: usize) -> BlockContext {
    let block = rg.block_interval(i);
    let context = Interval::new(block.lo - rg.m, block.hi + rg.m);
    let mut entering = Vec::new();
    let mut leaving = Vec::new();
    for &(u, v) in &sample.edges {
        let u_in = block.contains(u);
        let v_in = block.contains(v);
        if u_in == v_in {
            continue;
        }
        let (inside, outside) = if u_in { (u, v) } else { (v, u) };
        entering.push((BoundaryEdge::Fine(u, v), inside));
        if !context.contains(outside) {
            leaving.push((BoundaryEdge::Fine(u, v), inside));
        }
    }
    for s in &sample.supernodes {
        for (&u, &count) in &s.counts {
            if count > 0 && block.contains(u) {
                let e = BoundaryEdge::Super(u, s.label.clone());
                entering.push((e.clone(), u));
                leaving.push((e, u));
            }
        }
    }
    BlockContext { entering, leaving }
}

/// `K_i`: fine endpoints in block `i` of edges leaving the three-block
/// context around it.
pub fn boundary_point_set(sample: &LrpSample, rg: &RenormGraph, i: usize) -> Vec<i64> {
    let ctx = block_context(sample, rg, i);
    let k: BTreeSet<i64> = ctx.leaving.iter().map(|&(_, inside)| inside).collect();
    k.into_iter().collect()
}

/// Harmonic combination `(1/b + sum_u 1/a_u)^{-1}`, the closed form of the
/// internal-energy minimization over split weights `theta_u >= 0`,
/// `sum theta_u <= 1`. Zero entries collapse the energy to zero; infinite
/// entries drop out of the sum.
pub fn harmonic_internal_energy<S: Scalar>(a: &[S], b: S) -> S {
    if a.iter().any(|&x| x == S::zero()) || b == S::zero() {
        return S::zero();
    }
    let mut inv = if b.is_finite() { S::one() / b } else { S::zero() };
    for &x in a {
        if x.is_finite() {
            inv += S::one() / x;
        }
    }
    if inv == S::zero() {
        // empty boundary set and an unbounded crossing resistance
        return b;
    }
    S::one() / inv
}

fn block_network(sample: &LrpSample, block: Interval) -> Network<f64> {
    let mut net = Network::new();
    for v in block.lo..=block.hi {
        net.ensure_vertex(Vertex::Site(v));
    }
    for &(u, v) in &sample.edges {
        if block.contains(u) && block.contains(v) {
            net.add_edge(Vertex::Site(u), Vertex::Site(v), 1.0).expect("unit conductance");
        }
    }
    net
}

/// `R_{I_i}(u, B_{alpha1 m}(u)^c)` within the block, or infinity when the
/// ball swallows the whole block.
fn point_to_ball_complement(
    sample: &LrpSample,
    block: Interval,
    u: i64,
    radius: f64,
) -> Result<f64, RenormError> {
    let net = block_network(sample, block);
    let target: BTreeSet<Vertex> = (block.lo..=block.hi)
        .filter(|&v| ((v - u).abs() as f64) >= radius)
        .map(Vertex::Site)
        .collect();
    if target.is_empty() {
        return Ok(f64::INFINITY);
    }
    let source: BTreeSet<Vertex> = [Vertex::Site(u)].into();
    match set_resistance(&net, &source, &target) {
        Ok(r) => Ok(r.value),
        Err(SolverError::InfiniteResistance) => Ok(f64::INFINITY),
        Err(e) => Err(e.into()),
    }
}

/// The per-endpoint resistances `a_u` and the crossing resistance `b` that
/// enter the internal energy of block `i`.
pub fn block_energies(
    sample: &LrpSample,
    rg: &RenormGraph,
    i: usize,
    alpha1: f64,
) -> Result<(Vec<f64>, f64), RenormError> {
    let block = rg.block_interval(i);
    let radius = alpha1 * rg.m as f64;
    let k_set = boundary_point_set(sample, rg, i);
    let mut a = Vec::with_capacity(k_set.len());
    for &u in &k_set {
        a.push(point_to_ball_complement(sample, block, u, radius)?);
    }
    let b = match hat_resistance(sample, block.lo - rg.m, block.lo - 1, block.hi + 1, block.hi + rg.m)
    {
        Ok(r) => r.value,
        Err(SolverError::InfiniteResistance) => f64::INFINITY,
        Err(e) => return Err(e.into()),
    };
    Ok((a, b))
}

/// Internal optimal energy of block `i`: the harmonic combination of the
/// point-to-ball resistances over `K_i` and the interval-to-interval crossing
/// resistance.
pub fn internal_energy(
    sample: &LrpSample,
    rg: &RenormGraph,
    i: usize,
    alpha1: f64,
) -> Result<f64, RenormError> {
    let (a, b) = block_energies(sample, rg, i, alpha1)?;
    Ok(harmonic_internal_energy(&a, b))
}

/// Classifies every block of the sample at scale `params.m`. Blocks lacking
/// the three-block context are flagged indeterminate and carry no resistance
/// statistics.
pub fn classify(
    sample: &LrpSample,
    params: &ClassifyParams,
) -> Result<Vec<IntervalClassification>, RenormError> {
    params.validate()?;
    let threshold = params.threshold()?;
    let rg = renormalize(sample, params.m)?;
    let mut out = Vec::with_capacity(rg.blocks);
    for i in 0..rg.blocks {
        let ctx = block_context(sample, &rg, i);
        let k_set: BTreeSet<i64> = ctx.leaving.iter().map(|&(_, v)| v).collect();
        let xi = k_set.len() as u64;
        let eta = rg.degree(i);
        let m_good = xi <= params.m_cap;
        let indeterminate = i == 0 || i + 2 > rg.blocks;
        if indeterminate {
            out.push(IntervalClassification {
                block: i,
                k_set: k_set.into_iter().collect(),
                xi,
                eta,
                m_good,
                cond1: false,
                cond2: false,
                cond3: false,
                very_good: false,
                internal_energy: f64::NAN,
                indeterminate: true,
            });
            continue;
        }

        let sep = params.alpha1 * params.m as f64;
        let mut cond1 = true;
        'outer: for (e1, v1) in &ctx.entering {
            for (e2, u2) in &ctx.leaving {
                if e1 == e2 {
                    continue;
                }
                if ((v1 - u2).abs() as f64) < sep {
                    cond1 = false;
                    break 'outer;
                }
            }
        }

        let (a, b) = block_energies(sample, &rg, i, params.alpha1)?;
        let cond2 = a.iter().all(|&x| x >= threshold);
        let cond3 = b >= threshold;
        let internal = harmonic_internal_energy(&a, b);
        let very_good = cond1 && internal >= threshold;
        out.push(IntervalClassification {
            block: i,
            k_set: k_set.into_iter().collect(),
            xi,
            eta,
            m_good,
            cond1,
            cond2,
            cond3,
            very_good,
            internal_energy: internal,
            indeterminate: false,
        });
    }
    Ok(out)
}

/// Red components: maximal connected clusters of not-very-good blocks in the
/// renormalized graph.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RedReport {
    /// Sorted members of each component.
    pub components: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
    /// `(k, fraction of components with size >= k)`.
    pub survival: Vec<(usize, f64)>,
}

pub fn red_components(rg: &RenormGraph, very_good: &[bool]) -> RedReport {
    assert_eq!(very_good.len(), rg.blocks, "flags must align with blocks");
    let mut parent: Vec<usize> = (0..rg.blocks).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for &(a, b) in rg.edges() {
        if !very_good[a] && !very_good[b] {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..rg.blocks {
        if !very_good[v] {
            groups.entry(find(&mut parent, v)).or_default().push(v);
        }
    }
    let components: Vec<Vec<usize>> = groups.into_values().collect();
    let sizes: Vec<usize> = components.iter().map(|c| c.len()).collect();
    let max = sizes.iter().copied().max().unwrap_or(0);
    let total = sizes.len().max(1) as f64;
    let survival = (1..=max)
        .map(|k| (k, sizes.iter().filter(|&&s| s >= k).count() as f64 / total))
        .collect();
    RedReport { components, sizes, survival }
}

fn unit_flow_terminals(flow: &Flow<f64>, tol: f64) -> Result<(Vertex, Vertex), RenormError> {
    let mut source = None;
    let mut sink = None;
    for (v, div) in flow.divergence() {
        if div.abs() <= tol {
            continue;
        }
        if (div - 1.0).abs() <= tol {
            if source.replace(v).is_some() {
                return Err(RenormError::InvalidFlow("multiple unit sources".into()));
            }
        } else if (div + 1.0).abs() <= tol {
            if sink.replace(v).is_some() {
                return Err(RenormError::InvalidFlow("multiple unit sinks".into()));
            }
        } else {
            return Err(RenormError::InvalidFlow(format!(
                "vertex {v} has net outflow {div}, expected 0 or +-1"
            )));
        }
    }
    match (source, sink) {
        (Some(s), Some(t)) => Ok((s, t)),
        _ => Err(RenormError::InvalidFlow("flow has no unit source/sink pair".into())),
    }
}

/// Projects a fine unit flow to the renormalized graph:
/// `g_{ij} = sum_{u in I_i} sum_{v in I_j} f_{uv}`. Site flows only.
pub fn project_flow(fine: &Flow<f64>, rg: &RenormGraph) -> Result<Flow<f64>, RenormError> {
    unit_flow_terminals(fine, 1e-9)?;
    let mut g = Flow::new();
    for ((u, v), &f) in fine.iter() {
        let (Vertex::Site(su), Vertex::Site(sv)) = (u, v) else {
            return Err(RenormError::InvalidFlow("projection requires site-indexed flows".into()));
        };
        let (Some(bu), Some(bv)) = (rg.block_of(*su), rg.block_of(*sv)) else {
            return Err(RenormError::InvalidFlow(format!(
                "flow touches sites outside the renormalized window: ({su}, {sv})"
            )));
        };
        if bu == bv {
            continue;
        }
        g.add(Vertex::Site(bu as i64), Vertex::Site(bv as i64), f);
    }
    Ok(g)
}

/// Lifts a renormalized unit flow to a fine unit flow from `a` to `b`.
///
/// Each coarse edge routes its flow through the representative fine edge
/// (shortest span, lexicographic tie-break). Inside each block the incoming
/// amounts split by the product coupling `theta_kl = in_k * out_l / total`
/// and travel along block-restricted unit electric flows between the
/// representative endpoints.
pub fn lift_flow(
    g: &Flow<f64>,
    sample: &LrpSample,
    rg: &RenormGraph,
    a: i64,
    b: i64,
) -> Result<Flow<f64>, RenormError> {
    let (gs, gt) = unit_flow_terminals(g, 1e-9)?;
    let block_a = rg
        .block_of(a)
        .ok_or_else(|| RenormError::InvalidFlow(format!("source {a} outside the window")))?;
    let block_b = rg
        .block_of(b)
        .ok_or_else(|| RenormError::InvalidFlow(format!("sink {b} outside the window")))?;
    if gs != Vertex::Site(block_a as i64) || gt != Vertex::Site(block_b as i64) {
        return Err(RenormError::InvalidFlow(format!(
            "coarse terminals ({gs}, {gt}) do not match the blocks of {a} and {b}"
        )));
    }

    let mut fine = Flow::new();
    // incoming and outgoing attachment points per block: (fine vertex, amount)
    let mut inflow: BTreeMap<usize, Vec<(i64, f64)>> = BTreeMap::new();
    let mut outflow: BTreeMap<usize, Vec<(i64, f64)>> = BTreeMap::new();
    inflow.entry(block_a).or_default().push((a, 1.0));
    outflow.entry(block_b).or_default().push((b, 1.0));

    for ((u, v), &f) in g.iter() {
        if f == 0.0 {
            continue;
        }
        let (Vertex::Site(bu), Vertex::Site(bv)) = (u, v) else {
            return Err(RenormError::InvalidFlow("coarse flow must be block-indexed".into()));
        };
        let (bu, bv) = (*bu as usize, *bv as usize);
        let (x, y) = rg.representative(bu, bv).ok_or_else(|| {
            RenormError::LiftInfeasible(format!(
                "coarse edge ({bu}, {bv}) has no fine representative"
            ))
        })?;
        // x sits in the lower block; orient along the signed coarse flow
        fine.add(Vertex::Site(x), Vertex::Site(y), f);
        let (from, to, amt) = if f > 0.0 { (bu, bv, f) } else { (bv, bu, -f) };
        let (x_from, y_to) = if from < to { (x, y) } else { (y, x) };
        outflow.entry(from).or_default().push((x_from, amt));
        inflow.entry(to).or_default().push((y_to, amt));
    }

    let blocks_touched: BTreeSet<usize> =
        inflow.keys().chain(outflow.keys()).copied().collect();
    for i in blocks_touched {
        let ins = inflow.get(&i).cloned().unwrap_or_default();
        let outs = outflow.get(&i).cloned().unwrap_or_default();
        let total_in: f64 = ins.iter().map(|&(_, w)| w).sum();
        let total_out: f64 = outs.iter().map(|&(_, w)| w).sum();
        if (total_in - total_out).abs() > 1e-9 {
            return Err(RenormError::InvalidFlow(format!(
                "block {i} receives {total_in} but sends {total_out}"
            )));
        }
        if total_in <= 0.0 {
            continue;
        }
        let block = rg.block_interval(i);
        for &(y_in, w_in) in &ins {
            for &(x_out, w_out) in &outs {
                let theta = w_in * w_out / total_in;
                if theta == 0.0 || y_in == x_out {
                    continue;
                }
                let phi = restricted_resistance(sample, block, y_in, x_out)?;
                for ((u, v), &f) in phi.flow.iter() {
                    if f != 0.0 {
                        fine.add(u.clone(), v.clone(), theta * f);
                    }
                }
            }
        }
    }
    Ok(fine)
}
