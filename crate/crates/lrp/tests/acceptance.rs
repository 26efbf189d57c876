//! Acceptance suite: one test per criterion, each printing a single
//! `criterion NN (<name>): PASS|FAIL` line (run with `-- --nocapture` to see
//! the lines for passing tests). Every tolerance is pinned here.

use lrp::estimation::{
    self, estimate_lambda, estimate_point_to_box, fit_exponent, multiplicativity_report,
    second_moment_ratio, type_comparison, LambdaMode, ReplicateBatch, Quantity, ScalingConfig,
};
use lrp::identities::suites;
use lrp::model::streams::replicate_seed;
use lrp::model::{
    coupling_exponent, edge_probability, sample_window, Interval, ModelParams,
};
use lrp::renorm::{harmonic_internal_energy, lift_flow, project_flow, renormalize};
use lrp::solver::{two_point_resistance, Network, Vertex};

fn report(criterion: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion:02} ({name}): {} -- {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, left, tol / 2.0, depth - 1) + rec(f, m, b, right, tol / 2.0, depth - 1)
    }
    rec(f, a, b, simpson(f, a, b), tol, 40)
}

#[test]
fn criterion_01_model_exactness() {
    let mut worst_quad: f64 = 0.0;
    for k in 2..=100i64 {
        let inner = move |u: f64| {
            let g = move |v: f64| 1.0 / ((v - u) * (v - u));
            adaptive_simpson(&g, k as f64, k as f64 + 1.0, 1e-14)
        };
        let quad = adaptive_simpson(&inner, 0.0, 1.0, 1e-14);
        worst_quad = worst_quad.max((coupling_exponent(k).unwrap() - quad).abs());
    }

    let reps = 100_000u64;
    let mut worst_sigmas: f64 = 0.0;
    for (bi, &beta) in [0.5f64, 1.0, 2.0].iter().enumerate() {
        let mut hits = vec![0u64; 21];
        for r in 0..reps {
            let seed = replicate_seed(61_000 + bi as u64, r);
            let params = ModelParams::new(beta, seed).unwrap();
            let s = sample_window(params, 0, 20, &[]).unwrap();
            for k in 2..=20i64 {
                if s.has_edge(0, k) {
                    hits[k as usize] += 1;
                }
            }
        }
        for k in 2..=20i64 {
            let p = edge_probability(beta, k).unwrap();
            let freq = hits[k as usize] as f64 / reps as f64;
            let sigma = (p * (1.0 - p) / reps as f64).sqrt();
            worst_sigmas = worst_sigmas.max((freq - p).abs() / sigma);
        }
    }

    let ok = worst_quad < 1e-12 && worst_sigmas < 4.0;
    report(
        1,
        "model exactness",
        ok,
        &format!("max |closed form - quadrature| = {worst_quad:.2e}; worst frequency deviation = {worst_sigmas:.2} sigma"),
    );
}

#[test]
fn criterion_02_solver_correctness() {
    let oracle = suites::run_solver_oracle(100, 77_001);
    let laws = suites::run_series_parallel(100, 77_002);
    let rayleigh = suites::run_rayleigh(200, 77_003);
    let ok = oracle.failures == 0 && laws.failures == 0 && rayleigh.failures == 0;
    report(
        2,
        "solver correctness",
        ok,
        &format!(
            "brute-force gap {:.2e}; series/parallel gap {:.2e}; rayleigh worst increase {:.2e}",
            oracle.worst_violation, laws.worst_violation, rayleigh.worst_violation
        ),
    );
}

#[test]
fn criterion_03_flow_comparison_and_rank_one() {
    let cmp = suites::run_flow_comparison(500, 88_001);
    let grounded = suites::run_rank_one_grounded(100, 88_002);
    let interior = suites::run_rank_one_interior(100, 88_003);
    let ok = cmp.failures == 0 && grounded.failures == 0 && interior.failures == 0;
    report(
        3,
        "flow comparison + rank-one update",
        ok,
        &format!(
            "500 applicable instances, worst g' - g = {:.2e} (rejection rate {:.2}); ||Z'C' - I||max = {:.2e} / {:.2e}",
            cmp.worst_violation,
            cmp.rejection_rate.unwrap_or(f64::NAN),
            grounded.worst_violation,
            interior.worst_violation
        ),
    );
}

#[test]
fn criterion_04_cutset_variational_bound() {
    let bound = suites::run_cutset_bound(50, 99_001);
    let equality = suites::run_cutset_equality(50, 99_002);
    let ok = bound.failures == 0 && equality.failures == 0;
    report(
        4,
        "cutset variational bound",
        ok,
        &format!(
            "worst bound - R = {:.2e}; worst |certificate - R| on series-parallel = {:.2e}",
            bound.worst_violation, equality.worst_violation
        ),
    );
}

#[test]
fn criterion_05_renormalization_self_similarity() {
    // analytic identity: block-pair rates rescale exactly
    let mut worst_identity: f64 = 0.0;
    for &m in &[2i64, 4, 8, 32] {
        for d in 2i64..=10 {
            let mut rate = 0.0;
            for u in 0..m {
                for v in (d * m)..(d * m + m) {
                    rate += coupling_exponent(v - u).unwrap();
                }
            }
            for beta in [0.5f64, 1.0, 2.0] {
                let marginal = -(-beta * rate).exp_m1();
                let direct = edge_probability(beta, d).unwrap();
                worst_identity = worst_identity.max((marginal - direct).abs());
            }
        }
    }

    // statistical: sampled renormalized graphs at m = 8, n = 64 blocks
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let reps = 10_000u64;
    let m = 8i64;
    let blocks = 64usize;
    let dmax = 9usize;
    let mut present = vec![0u64; dmax + 1];
    for r in 0..reps {
        let params = ModelParams::new(1.0, replicate_seed(50_505, r)).unwrap();
        let sample = sample_window(params, 0, m * blocks as i64 - 1, &[]).unwrap();
        let rg = renormalize(&sample, m).unwrap();
        for &(i, j) in rg.edges() {
            let d = j - i;
            if (2..=dmax).contains(&d) {
                present[d] += 1;
            }
        }
    }
    let chi1 = ChiSquared::new(1.0).unwrap();
    let mut min_p = 1.0f64;
    for d in 2..=dmax {
        let trials = ((blocks - d) as u64 * reps) as f64;
        let p = edge_probability(1.0, d as i64).unwrap();
        let observed = present[d] as f64;
        let expected = trials * p;
        let chi2 = (observed - expected).powi(2) / (expected * (1.0 - p));
        min_p = min_p.min(1.0 - chi1.cdf(chi2));
    }

    let ok = worst_identity < 1e-12 && min_p > 0.01;
    report(
        5,
        "renormalization self-similarity",
        ok,
        &format!("max marginal identity gap = {worst_identity:.2e}; min per-distance chi-square p = {min_p:.3}"),
    );
}

#[test]
fn criterion_06_internal_energy_and_flow_lifting() {
    // closed form vs projected-gradient oracle
    use rand::Rng;
    use rand::SeedableRng;
    let qp_oracle = |a: &[f64], b: f64| -> f64 {
        let n = a.len();
        let mut theta = vec![0.0f64; n];
        let lip = 2.0 * (a.iter().cloned().fold(0.0, f64::max) + b * n as f64).max(1.0);
        let step = 1.0 / lip;
        for _ in 0..200_000 {
            let s: f64 = theta.iter().sum();
            let mut next: Vec<f64> = theta
                .iter()
                .zip(a)
                .map(|(&ti, &ai)| (ti - step * (2.0 * ti * ai - 2.0 * (1.0 - s) * b)).max(0.0))
                .collect();
            let total: f64 = next.iter().sum();
            if total > 1.0 {
                let mut sorted = next.clone();
                sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
                let mut acc = 0.0;
                let mut tau = 0.0;
                for (k, &v) in sorted.iter().enumerate() {
                    acc += v;
                    let candidate = (acc - 1.0) / (k as f64 + 1.0);
                    if v - candidate > 0.0 {
                        tau = candidate;
                    }
                }
                for v in &mut next {
                    *v = (*v - tau).max(0.0);
                }
            }
            theta = next;
        }
        let s: f64 = theta.iter().sum();
        theta.iter().zip(a).map(|(&t, &ai)| t * t * ai).sum::<f64>() + (1.0 - s) * (1.0 - s) * b
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(424_242);
    let mut worst_qp: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(0..5);
        let a: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..10.0)).collect();
        let b = rng.random_range(0.1..10.0);
        worst_qp = worst_qp.max((harmonic_internal_energy(&a, b) - qp_oracle(&a, b)).abs());
    }

    // project(lift(g)) returns g exactly
    let mut worst_roundtrip: f64 = 0.0;
    for r in 0..20u64 {
        let params = ModelParams::new(1.0, replicate_seed(606_060, r)).unwrap();
        let sample = sample_window(params, 0, 127, &[]).unwrap();
        let rg = renormalize(&sample, 8).unwrap();
        let mut coarse_net = Network::new();
        for &(i, j) in rg.edges() {
            coarse_net.add_edge(i as i64, j as i64, 1.0).unwrap();
        }
        let coarse = two_point_resistance(
            &coarse_net,
            &Vertex::Site(0),
            &Vertex::Site(rg.blocks as i64 - 1),
        )
        .unwrap();
        let fine = lift_flow(&coarse.flow, &sample, &rg, 0, 127).unwrap();
        let back = project_flow(&fine, &rg).unwrap();
        for ((u, v), &g) in coarse.flow.iter() {
            worst_roundtrip = worst_roundtrip.max((back.get(u, v) - g).abs());
        }
        for ((u, v), &g) in back.iter() {
            worst_roundtrip = worst_roundtrip.max((coarse.flow.get(u, v) - g).abs());
        }
    }

    let ok = worst_qp < 1e-10 && worst_roundtrip < 1e-12;
    report(
        6,
        "internal energy + flow lifting",
        ok,
        &format!("max |closed form - QP oracle| = {worst_qp:.2e}; max project(lift) gap = {worst_roundtrip:.2e}"),
    );
}

#[test]
fn criterion_07_exhaustive_small_n() {
    let exact_mean = 5.0 / 3.0;
    let exact_ratio = 1.12;
    let e = estimate_lambda(1.0, 3, 10_000, 70_711, LambdaMode::Endpoint).unwrap();
    let mean_ok = e.ci95.0 <= exact_mean && exact_mean <= e.ci95.1;
    let r = second_moment_ratio(1.0, 3, 10_000, 70_708).unwrap();
    let ratio_ok = r.ci.0 <= exact_ratio && exact_ratio <= r.ci.1;
    report(
        7,
        "exhaustive small-n agreement",
        mean_ok && ratio_ok,
        &format!(
            "E[R] CI ({:.4}, {:.4}) vs 5/3; ratio CI ({:.4}, {:.4}) vs 1.12",
            e.ci95.0, e.ci95.1, r.ci.0, r.ci.1
        ),
    );
}

#[test]
fn criterion_08_exponent_existence() {
    let scales = [16i64, 32, 64, 128, 256, 512, 1024];
    let replicates = 200u64;
    let mut lambda_estimates = Vec::new();
    let mut ptb_estimates = Vec::new();
    for &n in &scales {
        lambda_estimates.push(
            estimate_lambda(1.0, n, replicates, replicate_seed(80_001, n as u64), LambdaMode::Endpoint)
                .unwrap(),
        );
        ptb_estimates.push(
            estimate_point_to_box(1.0, n, 8 * n, replicates, replicate_seed(80_002, n as u64))
                .unwrap(),
        );
    }
    let lambda_fit = fit_exponent(&lambda_estimates).unwrap();
    let ptb_fit = fit_exponent(&ptb_estimates).unwrap();
    let range_ok = lambda_fit.delta_hat > 0.02 && lambda_fit.delta_hat < 0.98;
    let r2_ok = lambda_fit.r_squared > 0.98;
    let combined = (lambda_fit.stderr.powi(2) + ptb_fit.stderr.powi(2)).sqrt();
    let agreement_ok = (lambda_fit.delta_hat - ptb_fit.delta_hat).abs() <= 2.0 * combined;

    // diagnostic: slope of the point-to-box series after removing the best
    // additive offset (the local escape resistance around the origin), which
    // exposes the shared asymptotic exponent; the offset minimizes the
    // weighted log-space residual of the power-law fit
    let offset_slope = {
        let mut best = (f64::INFINITY, 0.0);
        let min_mean = ptb_estimates.iter().map(|e| e.mean).fold(f64::INFINITY, f64::min);
        for k in 0..400 {
            let a = min_mean * 0.999 * (k as f64) / 400.0;
            let pts: Vec<(f64, f64, f64)> = ptb_estimates
                .iter()
                .map(|e| (e.n as f64, e.mean - a, e.stderr))
                .collect();
            if let Ok(fit) = estimation::weighted_loglog_fit(&pts) {
                let ss_res: f64 = pts
                    .iter()
                    .map(|&(n, m, se)| {
                        let resid = m.ln() - (fit.intercept + fit.delta_hat * n.ln());
                        let se_log = (se / m).max(1e-12);
                        resid * resid / (se_log * se_log)
                    })
                    .sum();
                if ss_res < best.0 {
                    best = (ss_res, fit.delta_hat);
                }
            }
        }
        best.1
    };

    let ok = range_ok && r2_ok && agreement_ok;
    report(
        8,
        "exponent existence",
        ok,
        &format!(
            "lambda fit delta = {:.4} +- {:.4} (r2 {:.4}); point-to-box delta = {:.4} +- {:.4}; |gap| = {:.4} vs 2*combined = {:.4} (offset-corrected point-to-box slope = {:.4})",
            lambda_fit.delta_hat,
            lambda_fit.stderr,
            lambda_fit.r_squared,
            ptb_fit.delta_hat,
            ptb_fit.stderr,
            (lambda_fit.delta_hat - ptb_fit.delta_hat).abs(),
            2.0 * combined,
            offset_slope
        ),
    );
}

#[test]
fn criterion_09_two_sided_multiplicativity() {
    let rows =
        multiplicativity_report(1.0, &[(4, 8), (8, 8), (8, 16)], 400, 90_909).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut detail = String::new();
    for row in &rows {
        let v = row.ratio.expect("all pairs applicable");
        lo = lo.min(v);
        hi = hi.max(v);
        detail.push_str(&format!("({},{}): {:.3}  ", row.m, row.n, v));
    }
    let band = hi / lo;
    report(
        9,
        "two-sided multiplicativity",
        band < 4.0,
        &format!("{detail}band factor = {band:.3}"),
    );
}

#[test]
fn criterion_10_comparability_bands() {
    let cmp = type_comparison(1.0, &[16, 32, 64, 128, 256], 150, 10_101, 8).unwrap();
    let ok = cmp.point_to_box_band < 4.0 && cmp.box_to_box_band < 4.0;
    report(
        10,
        "comparability bands",
        ok,
        &format!(
            "point-to-box ratio band = {:.3}; conditioned box-to-box ratio band = {:.3}",
            cmp.point_to_box_band, cmp.box_to_box_band
        ),
    );
}

#[test]
fn criterion_11_cut_and_separation_points() {
    let reps = 10_000u64;
    let mut ok = true;
    let mut worst_cut_excess = f64::NEG_INFINITY;
    let mut worst_sep_deficit = f64::NEG_INFINITY;
    for &m in &[32i64, 64] {
        for &beta in &[0.5f64, 1.0] {
            let stats = estimation::cut_point_stats(
                beta,
                m,
                reps,
                replicate_seed(111_111, (m as u64) << 8 | (beta * 2.0) as u64),
            )
            .unwrap();
            for &(i, freq) in &stats.cut {
                if i < m / 2 {
                    let bound = 4.0 * (i as f64).powf(-beta);
                    let sigma = (freq * (1.0 - freq) / reps as f64).sqrt().max(1e-4);
                    worst_cut_excess = worst_cut_excess.max(freq - bound - 4.0 * sigma);
                    if freq > bound + 4.0 * sigma {
                        ok = false;
                    }
                }
            }
            for &(_, freq) in &stats.separation {
                let bound = 0.1 * (m as f64).powf(-beta);
                let sigma = (freq * (1.0 - freq) / reps as f64).sqrt().max(1e-4);
                worst_sep_deficit = worst_sep_deficit.max(bound - 4.0 * sigma - freq);
                if freq < bound - 4.0 * sigma {
                    ok = false;
                }
            }
        }
    }
    report(
        11,
        "cut/separation point bounds",
        ok,
        &format!(
            "worst cut excess over 4 i^-beta + 4 sigma = {worst_cut_excess:.4}; worst separation deficit = {worst_sep_deficit:.4}"
        ),
    );
}

#[test]
fn criterion_12_monotone_exponent_in_beta() {
    let scales = [16i64, 32, 64, 128, 256];
    let fit_for = |beta: f64, tag: u64| {
        let estimates: Vec<_> = scales
            .iter()
            .map(|&n| {
                estimate_lambda(beta, n, 200, replicate_seed(120_000 + tag, n as u64), LambdaMode::Endpoint)
                    .unwrap()
            })
            .collect();
        fit_exponent(&estimates).unwrap()
    };
    let f05 = fit_for(0.5, 1);
    let f10 = fit_for(1.0, 2);
    let f20 = fit_for(2.0, 3);
    let pair_ok = |hi: &estimation::ExponentFit, lo: &estimation::ExponentFit| {
        hi.delta_hat >= lo.delta_hat - 2.0 * (hi.stderr.powi(2) + lo.stderr.powi(2)).sqrt()
    };
    let ok = pair_ok(&f05, &f10) && pair_ok(&f10, &f20);
    report(
        12,
        "monotone exponent in beta",
        ok,
        &format!(
            "delta(0.5) = {:.4} +- {:.4} >= delta(1.0) = {:.4} +- {:.4} >= delta(2.0) = {:.4} +- {:.4}",
            f05.delta_hat, f05.stderr, f10.delta_hat, f10.stderr, f20.delta_hat, f20.stderr
        ),
    );
}

#[test]
fn criterion_13_reproducibility() {
    let config = ScalingConfig {
        beta: 1.0,
        scales: vec![16, 32, 64, 128],
        replicates: 60,
        seed: 42,
        truncation_factor: 8,
        max_over_pairs: false,
    };
    let a = estimation::scaling_run(&config).unwrap();
    let b = estimation::scaling_run(&config).unwrap();
    let ja = serde_json::to_string(&a).unwrap();
    let jb = serde_json::to_string(&b).unwrap();
    let runs_ok = ja == jb;

    // merge order cannot change any digit
    let values: Vec<(u64, f64)> = (0..300u64)
        .map(|r| {
            let params = ModelParams::new(1.0, replicate_seed(13_131, r)).unwrap();
            let s = sample_window(params, 0, 31, &[]).unwrap();
            let w = Interval::new(0, 31);
            (r, lrp::solver::restricted_resistance(&s, w, 0, 31).unwrap().value)
        })
        .collect();
    let mut ordered = ReplicateBatch::new();
    for &(r, v) in &values {
        ordered.insert(r, v);
    }
    let mut chunks: Vec<ReplicateBatch> = Vec::new();
    for c in 0..5u64 {
        let mut batch = ReplicateBatch::new();
        for &(r, v) in values.iter().rev() {
            if r % 5 == c {
                batch.insert(r, v);
            }
        }
        chunks.push(batch);
    }
    let mut shuffled = ReplicateBatch::new();
    for idx in [3usize, 0, 4, 2, 1] {
        shuffled.merge(&chunks[idx]);
    }
    let ea = ordered.finalize(32, Quantity::LambdaPp).unwrap();
    let eb = shuffled.finalize(32, Quantity::LambdaPp).unwrap();
    let merge_ok = ea.mean.to_bits() == eb.mean.to_bits()
        && ea.stderr.to_bits() == eb.stderr.to_bits()
        && ea.second_moment.to_bits() == eb.second_moment.to_bits()
        && ea
            .quantiles
            .iter()
            .zip(&eb.quantiles)
            .all(|(x, y)| x.1.to_bits() == y.1.to_bits());

    report(
        13,
        "reproducibility",
        runs_ok && merge_ok,
        &format!(
            "identical-seed reports byte-identical: {runs_ok}; merge-order digits identical: {merge_ok}"
        ),
    );
}
