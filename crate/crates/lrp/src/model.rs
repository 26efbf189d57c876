//! The critical long-range percolation model on finite integer windows.
//!
//! Pair `{i, j}` at distance `k = |i - j| >= 2` is open independently with
//! probability `1 - exp(-beta * I(k))` where `I(k)` is the integral of
//! `|x - y|^{-2}` over the unit cells of `i` and `j`; nearest neighbors are
//! always connected. Sampling walks each distance class with geometric gap
//! skipping, so the expected cost is linear in the window length plus the
//! number of realized edges. All randomness flows through counter-based
//! streams keyed by `(seed, purpose, class)`, which keeps replicates and
//! distance classes independent and makes every sample a pure function of
//! its inputs.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("tail horizon must be >= 2, got {0}")]
    InvalidTailHorizon(i64),
    #[error("distance must be >= {min}, got {got}")]
    InvalidDistance { min: i64, got: i64 },
    #[error("window [{lo}, {hi}] is empty")]
    EmptyWindow { lo: i64, hi: i64 },
    #[error("truncation T={t} must exceed the boundary radius n={n}")]
    InvalidTruncation { t: i64, n: i64 },
    #[error("core [{core_lo}, {core_hi}] must lie inside [-{n}, {n}]")]
    CoreOutsideBox { core_lo: i64, core_hi: i64, n: i64 },
    #[error("forbidden class would remove the nearest-neighbor pair {{{0}, {1}}}")]
    ForbiddenNearestNeighbor(i64, i64),
    #[error("forbidden cross class [{lo}, {hi}] must sit inside the truncated range [-{t}, {t}]")]
    ForbiddenBeyondTruncation { lo: i64, hi: i64, t: i64 },
    #[error("malformed sample json: {0}")]
    MalformedJson(String),
}

/// Inclusive integer interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub lo: i64,
    pub hi: i64,
}

impl Interval {
    pub fn new(lo: i64, hi: i64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: i64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Number of integer sites in the interval.
    pub fn len(&self) -> i64 {
        (self.hi - self.lo + 1).max(0)
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }
}

/// Parameters of the beta-LRP model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    /// Model strength; larger beta means more long edges.
    pub beta: f64,
    /// Master seed of the counter-based stream hierarchy.
    pub seed: u64,
    /// Distance beyond which per-site far edges are always aggregated.
    pub tail_horizon: i64,
}

pub const DEFAULT_TAIL_HORIZON: i64 = 1_000_000;

impl ModelParams {
    pub fn new(beta: f64, seed: u64) -> Result<Self, ModelError> {
        Self::with_tail_horizon(beta, seed, DEFAULT_TAIL_HORIZON)
    }

    pub fn with_tail_horizon(beta: f64, seed: u64, tail_horizon: i64) -> Result<Self, ModelError> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(ModelError::InvalidBeta(beta));
        }
        if tail_horizon < 2 {
            return Err(ModelError::InvalidTailHorizon(tail_horizon));
        }
        Ok(ModelParams { beta, seed, tail_horizon })
    }
}

/// A class of vertex pairs that is deterministically absent (conditioning).
///
/// Because edges are independent, conditioning on the absence of a pair class
/// is implemented by never sampling it, with acceptance rate one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PairClass {
    /// A single unordered pair.
    Pair(i64, i64),
    /// All pairs `{u, v}` with `u` in `inner` and `v` outside `outer`.
    /// Requires `inner` strictly inside `outer` so nearest neighbors survive.
    CrossOutside { inner: Interval, outer: Interval },
}

impl PairClass {
    pub fn forbids(&self, u: i64, v: i64) -> bool {
        match *self {
            PairClass::Pair(a, b) => (u == a && v == b) || (u == b && v == a),
            PairClass::CrossOutside { inner, outer } => {
                (inner.contains(u) && !outer.contains(v))
                    || (inner.contains(v) && !outer.contains(u))
            }
        }
    }
}

fn forbidden_contains(forbidden: &[PairClass], u: i64, v: i64) -> bool {
    forbidden.iter().any(|c| c.forbids(u, v))
}

/// One contracted exterior supernode: parallel unit edges to window vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Supernode {
    pub label: String,
    /// Human-readable description of the vertex set the supernode stands for.
    pub covers: String,
    /// Window vertex -> number of parallel unit-conductance edges.
    pub counts: BTreeMap<i64, u64>,
}

/// One sampled edge configuration on a finite window.
#[derive(Debug, Clone, PartialEq)]
pub struct LrpSample {
    pub params: ModelParams,
    pub window: Interval,
    /// Open pairs `{i, j}`, stored with `i < j`; includes every nearest-neighbor pair.
    pub edges: BTreeSet<(i64, i64)>,
    pub supernodes: Vec<Supernode>,
    pub forbidden: Vec<PairClass>,
}

impl LrpSample {
    pub fn has_edge(&self, u: i64, v: i64) -> bool {
        let key = if u < v { (u, v) } else { (v, u) };
        self.edges.contains(&key)
    }

    /// JSON document with lexicographically sorted edge list (byte-stable).
    pub fn to_json(&self) -> Value {
        let edges: Vec<Value> = self.edges.iter().map(|&(i, j)| json!([i, j])).collect();
        let supernodes: Vec<Value> = self
            .supernodes
            .iter()
            .map(|s| {
                let counts: BTreeMap<String, u64> =
                    s.counts.iter().map(|(&v, &c)| (v.to_string(), c)).collect();
                json!({"label": s.label, "counts": counts})
            })
            .collect();
        json!({
            "beta": self.params.beta,
            "seed": self.params.seed,
            "window": [self.window.lo, self.window.hi],
            "edges": edges,
            "supernodes": supernodes,
            "forbidden": serde_json::to_value(&self.forbidden).expect("pair classes serialize"),
        })
    }

    pub fn from_json(v: &Value) -> Result<LrpSample, ModelError> {
        let err = |m: &str| ModelError::MalformedJson(m.to_string());
        let beta = v["beta"].as_f64().ok_or_else(|| err("beta"))?;
        let seed = v["seed"].as_u64().ok_or_else(|| err("seed"))?;
        let window = Interval::new(
            v["window"][0].as_i64().ok_or_else(|| err("window.lo"))?,
            v["window"][1].as_i64().ok_or_else(|| err("window.hi"))?,
        );
        let mut edges = BTreeSet::new();
        for e in v["edges"].as_array().ok_or_else(|| err("edges"))? {
            let i = e[0].as_i64().ok_or_else(|| err("edge endpoint"))?;
            let j = e[1].as_i64().ok_or_else(|| err("edge endpoint"))?;
            edges.insert((i.min(j), i.max(j)));
        }
        let mut supernodes = Vec::new();
        for s in v["supernodes"].as_array().ok_or_else(|| err("supernodes"))? {
            let label = s["label"].as_str().ok_or_else(|| err("supernode label"))?.to_string();
            let mut counts = BTreeMap::new();
            for (k, c) in s["counts"].as_object().ok_or_else(|| err("supernode counts"))? {
                let vert: i64 = k.parse().map_err(|_| err("supernode count key"))?;
                counts.insert(vert, c.as_u64().ok_or_else(|| err("supernode count"))?);
            }
            supernodes.push(Supernode { label, covers: String::new(), counts });
        }
        let forbidden: Vec<PairClass> = serde_json::from_value(v["forbidden"].clone())
            .map_err(|e| err(&format!("forbidden: {e}")))?;
        Ok(LrpSample {
            params: ModelParams::new(beta, seed).map_err(|e| err(&e.to_string()))?,
            window,
            edges,
            supernodes,
            forbidden,
        })
    }
}

/// `I(k) = ln(k^2 / (k^2 - 1))`, the exact cell integral of `|x-y|^{-2}` at distance `k`.
pub fn coupling_exponent(k: i64) -> Result<f64, ModelError> {
    if k < 2 {
        return Err(ModelError::InvalidDistance { min: 2, got: k });
    }
    let k2 = (k as f64) * (k as f64);
    // ln(k^2/(k^2-1)) = -ln(1 - 1/k^2), kept accurate for large k.
    Ok(-(-1.0 / k2).ln_1p())
}

/// Probability that the pair at distance `k` is open: 1 for `k = 1`,
/// `1 - ((k^2-1)/k^2)^beta` for `k >= 2`.
pub fn edge_probability(beta: f64, k: i64) -> Result<f64, ModelError> {
    if k <= 0 {
        return Err(ModelError::InvalidDistance { min: 1, got: k });
    }
    if k == 1 {
        return Ok(1.0);
    }
    Ok(-(-beta * coupling_exponent(k)?).exp_m1())
}

/// Expected degree of a vertex: `2 + 2 * sum_{k>=2} p_k`, accurate to 1e-10.
///
/// The sum is truncated once the remaining tail (bounded by `beta/K`) can be
/// replaced by its exact first-order value `beta * ln(1 + 1/K)`; the
/// second-order remainder is below `beta^2 / K^3`, far under the target.
pub fn expected_degree(beta: f64) -> f64 {
    let cap = ((beta * beta * 1e12).powf(1.0 / 3.0).ceil() as i64).max(2_000);
    let mut sum = 0.0;
    for k in 2..=cap {
        sum += edge_probability(beta, k).expect("k >= 2");
    }
    sum += beta * (1.0 / cap as f64).ln_1p();
    2.0 + 2.0 * sum
}

/// Counter-based stream derivation: every consumer of randomness owns a
/// stream keyed by `(seed, purpose, class)`, so replicates and distance
/// classes are order-independent and reproducible.
pub mod streams {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub const PURPOSE_WINDOW_EDGES: u64 = 1;
    pub const PURPOSE_FAR_EDGES: u64 = 2;

    pub fn splitmix64(x: u64) -> u64 {
        let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Independent stream for `(seed, purpose, class)`. The class occupies the
    /// low 48 bits of the ChaCha stream id, so streams never collide.
    pub fn stream(seed: u64, purpose: u64, class: u64) -> ChaCha8Rng {
        debug_assert!(class < 1 << 48);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((purpose << 48) | class);
        rng
    }

    /// Per-replicate seed derived from the master seed.
    pub fn replicate_seed(master: u64, replicate: u64) -> u64 {
        splitmix64(master ^ replicate.wrapping_mul(0xA076_1D64_78BD_642F))
    }
}

fn validate_forbidden(forbidden: &[PairClass], window: Interval) -> Result<(), ModelError> {
    for i in window.lo..window.hi {
        if forbidden_contains(forbidden, i, i + 1) {
            return Err(ModelError::ForbiddenNearestNeighbor(i, i + 1));
        }
    }
    Ok(())
}

/// Sample one configuration on the window `[lo, hi]`.
///
/// Each non-nearest pair inside the window is open independently with
/// `edge_probability(beta, k)` unless some forbidden class covers it, in which
/// case it is absent with probability one. Forbidden pairs still consume their
/// stream draws, so samples with and without conditioning are coupled
/// pathwise under the same seed.
pub fn sample_window(
    params: ModelParams,
    lo: i64,
    hi: i64,
    forbidden: &[PairClass],
) -> Result<LrpSample, ModelError> {
    if hi - lo < 1 {
        return Err(ModelError::EmptyWindow { lo, hi });
    }
    let window = Interval::new(lo, hi);
    validate_forbidden(forbidden, window)?;

    let mut edges = BTreeSet::new();
    for i in lo..hi {
        edges.insert((i, i + 1));
    }

    let len = hi - lo;
    for k in 2..=len {
        let p = edge_probability(params.beta, k).expect("k >= 2");
        let positions = (len - k + 1) as u64;
        let mut rng = streams::stream(params.seed, streams::PURPOSE_WINDOW_EDGES, k as u64);
        let geo = Geometric::new(p).expect("p in (0,1)");
        let mut pos: u64 = 0;
        loop {
            let skip = geo.sample(&mut rng);
            pos = match pos.checked_add(skip) {
                Some(p) => p,
                None => break,
            };
            if pos >= positions {
                break;
            }
            let i = lo + pos as i64;
            let j = i + k;
            if !forbidden_contains(forbidden, i, j) {
                edges.insert((i, j));
            }
            pos += 1;
        }
    }

    Ok(LrpSample {
        params,
        window,
        edges,
        supernodes: Vec::new(),
        forbidden: forbidden.to_vec(),
    })
}

/// Sample on `[-n, n]` with the complement contracted to one supernode.
///
/// Sites with `n < |v| <= T` are sampled explicitly (via the window sampler on
/// `[-T, T]`) and every edge they receive from `[-n, n]` becomes one parallel
/// unit edge between the window vertex and the supernode. Edges internal to
/// the complement are dropped: they are loops after contraction. Edges to the
/// far region `|v| > T` are aggregated per window vertex as Poisson counts
/// with the exact rate `beta * (ln((T+1-u)/(T-u)) + ln((T+1+u)/(T+u)))`.
pub fn sample_with_contracted_complement(
    params: ModelParams,
    core: Interval,
    n: i64,
    t: i64,
    forbidden: &[PairClass],
) -> Result<LrpSample, ModelError> {
    if t <= n {
        return Err(ModelError::InvalidTruncation { t, n });
    }
    if core.lo < -n || core.hi > n {
        return Err(ModelError::CoreOutsideBox { core_lo: core.lo, core_hi: core.hi, n });
    }
    let t = t.min(params.tail_horizon);
    if t <= n {
        return Err(ModelError::InvalidTruncation { t, n });
    }
    for class in forbidden {
        if let PairClass::CrossOutside { outer, .. } = class {
            if outer.lo < -t || outer.hi > t {
                return Err(ModelError::ForbiddenBeyondTruncation { lo: outer.lo, hi: outer.hi, t });
            }
        }
    }

    let full = sample_window(params, -t, t, forbidden)?;

    let window = Interval::new(-n, n);
    let mut edges = BTreeSet::new();
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for &(i, j) in &full.edges {
        let i_in = window.contains(i);
        let j_in = window.contains(j);
        match (i_in, j_in) {
            (true, true) => {
                edges.insert((i, j));
            }
            (true, false) => *counts.entry(i).or_insert(0) += 1,
            (false, true) => *counts.entry(j).or_insert(0) += 1,
            (false, false) => {}
        }
    }

    // Poisson tail beyond the truncation, one independent stream per vertex.
    for u in -n..=n {
        let tail_forbidden = forbidden.iter().any(|c| match c {
            PairClass::CrossOutside { inner, outer } => {
                inner.contains(u) && outer.lo >= -t && outer.hi <= t
            }
            PairClass::Pair(..) => false,
        });
        if tail_forbidden {
            continue;
        }
        let tf = t as f64;
        let uf = u as f64;
        let rate = params.beta * (((1.0 / (tf - uf)).ln_1p()) + ((1.0 / (tf + uf)).ln_1p()));
        if rate <= 0.0 {
            continue;
        }
        let mut rng = streams::stream(params.seed, streams::PURPOSE_FAR_EDGES, (u + n) as u64);
        let draw = Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64;
        if draw > 0 {
            *counts.entry(u).or_insert(0) += draw;
        }
    }

    let supernode = Supernode {
        label: "complement".to_string(),
        covers: format!("{{v : {} < |v| <= {}}} plus aggregated tail |v| > {}", n, t, t),
        counts,
    };

    Ok(LrpSample {
        params,
        window,
        edges,
        supernodes: vec![supernode],
        forbidden: forbidden.to_vec(),
    })
}

/// Naive per-pair Bernoulli sampler over a window; distributional oracle for
/// the geometric-skip sampler. Not used by any production path.
pub fn sample_window_naive<R: Rng>(
    params: ModelParams,
    lo: i64,
    hi: i64,
    forbidden: &[PairClass],
    rng: &mut R,
) -> Result<LrpSample, ModelError> {
    if hi - lo < 1 {
        return Err(ModelError::EmptyWindow { lo, hi });
    }
    let window = Interval::new(lo, hi);
    validate_forbidden(forbidden, window)?;
    let mut edges = BTreeSet::new();
    for i in lo..hi {
        edges.insert((i, i + 1));
    }
    for k in 2..=(hi - lo) {
        let p = edge_probability(params.beta, k).expect("k >= 2");
        for i in lo..=(hi - k) {
            if rng.random::<f64>() < p && !forbidden_contains(forbidden, i, i + k) {
                edges.insert((i, i + k));
            }
        }
    }
    Ok(LrpSample { params, window, edges, supernodes: Vec::new(), forbidden: forbidden.to_vec() })
}
