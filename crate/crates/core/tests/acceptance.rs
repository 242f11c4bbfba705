//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Runs as a plain binary (`harness = false`) so the criteria execute in
//! order, their timings are not disturbed by one another, and the summary
//! lines always reach the terminal.

use std::f64::consts::LN_2;
use std::path::Path;
use std::time::{Duration, Instant};

use advbound::bounds::{frank_wolfe, FwOptions};
use advbound::gaussian::{
    closed_form_loss, gauss_hermite, normal_expectation, sample_mixture_per_class, softplus_neg,
    GaussianProblem, CHECK_NODES, QUADRATURE_NODES,
};
use advbound::geometry::{collision_probability, GraphBuilder};
use advbound::rational::Rational;
use advbound::rng::{split_seed, stream_rng};
use advbound::{
    build_conflict_graph, lin_opt, opt_prob, solve, verify_certificate, zero_one_bound, ConflictGraph, Label,
    LabeledDataset, NeighborhoodSpec, Norm, SolveOptions, SubProblem,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

// Pinned tolerances and budgets.
const C1_INSTANCES: u64 = 500;
const C1_BUDGET: Duration = Duration::from_secs(120);
const C2_INSTANCES: u64 = 100;
const C2_FW_GAP: f64 = 1e-6;
const C2_TOL: f64 = 1e-3;
const C2_BUDGET: Duration = Duration::from_secs(300);
const C3_INSTANCES: u64 = 250;
const C3_BUDGET: Duration = Duration::from_secs(60);
const C4_TOL: f64 = 1e-12;
const C5_DATASETS: u64 = 50;
const C5_EPS_POINTS: usize = 10;
const C5_SEEDS: u64 = 20;
/// Objectives are float logs of exact rationals; equal rationals can differ
/// in the last bits after summation in a different block order.
const C5_SLACK: f64 = 1e-12;
const C6_LN2_TOL: f64 = 1e-10;
const C6_MC_SAMPLES: usize = 10_000_000;
const C6_MC_SIGMAS: f64 = 3.0;
const C6_QUAD_REL: f64 = 1e-8;
const C7_PER_CLASS: usize = 5000;
const C7_GAP: f64 = 0.05;
const C7_BUDGET: Duration = Duration::from_secs(600);
const C8_PER_CLASS: usize = 2000;
const C8_MIN_EDGES: usize = 100_000;
const C8_BUDGET: Duration = Duration::from_secs(60);
/// The reference runs to a moderate gap; tighter gaps only widen the ratio.
const C8_FW_GAP: f64 = 1e-3;
const C8_FW_LIMIT: Duration = Duration::from_secs(600);
const C9_INSTANCES: u64 = 500;
const C9_EXHAUSTIVE_VERTICES: usize = 12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Points uniform in the unit square with counts in 1..=10; budget chosen so
/// graphs range from sparse to dense.
fn random_geometric(rng: &mut ChaCha8Rng, max_per_class: usize) -> (LabeledDataset, NeighborhoodSpec) {
    let n_a = rng.random_range(1..=max_per_class);
    let n_b = rng.random_range(1..=max_per_class);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut counts = Vec::new();
    for (n, label) in [(n_a, Label::Plus), (n_b, Label::Minus)] {
        for _ in 0..n {
            points.push(rng.random::<f64>());
            points.push(rng.random::<f64>());
            labels.push(label);
            counts.push(rng.random_range(1..=10u32));
        }
    }
    let ds = LabeledDataset::new(2, points, labels, counts).unwrap();
    let eps = rng.random_range(0.0..0.3);
    let norm = if rng.random_bool(0.5) { Norm::L2 } else { Norm::Linf };
    (ds, NeighborhoodSpec::new(norm, eps).unwrap())
}

fn random_bipartite(rng: &mut ChaCha8Rng, max_vertices: usize) -> ConflictGraph {
    let n = rng.random_range(2..=max_vertices);
    let n_a = rng.random_range(1..n);
    let n_b = n - n_a;
    let density = rng.random::<f64>();
    let counts_a: Vec<u32> = (0..n_a).map(|_| rng.random_range(1..=10)).collect();
    let counts_b: Vec<u32> = (0..n_b).map(|_| rng.random_range(1..=10)).collect();
    let mut edges = Vec::new();
    for i in 0..n_a as u32 {
        for j in 0..n_b as u32 {
            if rng.random::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    ConflictGraph::from_parts(&counts_a, &counts_b, edges).unwrap()
}

fn instance_rng(criterion: u64, i: u64) -> ChaCha8Rng {
    stream_rng(split_seed(0xACCE_0000 + criterion, i), 0)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let results: Vec<(usize, usize, usize)> = (0..C1_INSTANCES)
        .into_par_iter()
        .map(|i| {
            let (ds, spec) = random_geometric(&mut instance_rng(1, i), 60);
            let g = build_conflict_graph(&ds, &spec).unwrap();
            let cert = solve(&g, &SolveOptions::default()).unwrap();
            let report = verify_certificate(&g, &cert).unwrap();
            (report.violations.len(), g.n_vertices(), g.n_edges())
        })
        .collect();
    let elapsed = start.elapsed();
    let violations: usize = results.iter().map(|r| r.0).sum();
    let max_edges = results.iter().map(|r| r.2).max().unwrap();
    let max_vertices = results.iter().map(|r| r.1).max().unwrap();
    outcome(
        violations == 0 && elapsed < C1_BUDGET,
        format!(
            "{C1_INSTANCES} instances (up to {max_vertices} vertices, {max_edges} edges), \
             {violations} violations, {elapsed:.1?}"
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let results: Vec<(f64, bool)> = (0..C2_INSTANCES)
        .into_par_iter()
        .map(|i| {
            let (ds, spec) = random_geometric(&mut instance_rng(2, i), 20);
            let g = build_conflict_graph(&ds, &spec).unwrap();
            let cert = solve(&g, &SolveOptions::default()).unwrap();
            let fw = frank_wolfe(
                &g,
                &FwOptions {
                    gap_tol: C2_FW_GAP,
                    ..Default::default()
                },
            )
            .unwrap();
            // Sandwich: the exact optimum can only be below a feasible point.
            let sandwich = cert.objective_nats <= fw.objective + 1e-9;
            ((cert.objective_nats - fw.objective).abs(), fw.converged && sandwich)
        })
        .collect();
    let elapsed = start.elapsed();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let bad = results.iter().filter(|r| !r.1).count();
    outcome(
        worst <= C2_TOL && bad == 0 && elapsed < C2_BUDGET,
        format!(
            "{C2_INSTANCES} instances, max |opt - fw| = {worst:.2e} nats, \
             {bad} unconverged or out of order, {elapsed:.1?}"
        ),
    )
}

/// Max weight over every vertex subset that spans no edge.
fn brute_force_mwis(n_a: usize, n_b: usize, w_a: &[i128], w_b: &[i128], edges: &[(usize, usize)]) -> i128 {
    let n = n_a + n_b;
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let in_set = |v: usize| mask >> v & 1 == 1;
        if edges.iter().any(|&(i, j)| in_set(i) && in_set(n_a + j)) {
            continue;
        }
        let w: i128 = (0..n_a).filter(|&i| in_set(i)).map(|i| w_a[i]).sum::<i128>()
            + (0..n_b).filter(|&j| in_set(n_a + j)).map(|j| w_b[j]).sum::<i128>();
        best = best.max(w);
    }
    best
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut not_independent = 0;
    for i in 0..C3_INSTANCES {
        let mut rng = instance_rng(3, i);
        let g = random_bipartite(&mut rng, 16);
        // Alternate whole graphs and induced subproblems.
        let sub = if i % 2 == 0 {
            SubProblem::whole(&g)
        } else {
            let a: Vec<u32> = (0..g.n_a() as u32).filter(|_| rng.random_bool(0.7)).collect();
            let b: Vec<u32> = (0..g.n_b() as u32).filter(|_| rng.random_bool(0.7)).collect();
            if a.is_empty() && b.is_empty() {
                SubProblem::whole(&g)
            } else {
                SubProblem::induced(&g, a, b)
            }
        };
        let res = lin_opt(&sub).unwrap();
        let mass_a: i128 = sub.a.iter().map(|&i| g.count_a(i as usize) as i128).sum();
        let mass_b: i128 = sub.b.iter().map(|&j| g.count_b(j as usize) as i128).sum();
        let w_a: Vec<i128> = sub.a.iter().map(|&i| g.count_a(i as usize) as i128 * mass_b.max(1)).collect();
        let w_b: Vec<i128> = sub.b.iter().map(|&j| g.count_b(j as usize) as i128 * mass_a.max(1)).collect();
        let pos_a = |i: u32| sub.a.iter().position(|&x| x == i).unwrap();
        let pos_b = |j: u32| sub.b.iter().position(|&x| x == j).unwrap();
        let edges: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .filter(|(i, j)| sub.a.contains(i) && sub.b.contains(j))
            .map(|&(i, j)| (pos_a(i), pos_b(j)))
            .collect();
        let oracle = brute_force_mwis(sub.a.len(), sub.b.len(), &w_a, &w_b, &edges);
        // One-sided subproblems scale weights by the lone class mass, which
        // is a common factor; compare after matching the convention.
        let got = res.independent_set_weight(&sub);
        let got_a: i128 = res.a_plus.iter().map(|&i| w_a[pos_a(i)]).sum();
        let got_b: i128 = res.b_plus.iter().map(|&j| w_b[pos_b(j)]).sum();
        let chosen_independent = !g
            .edges()
            .iter()
            .any(|(i, j)| res.a_plus.contains(i) && res.b_plus.contains(j));
        if got_a + got_b != oracle || (mass_a > 0 && mass_b > 0 && got != oracle) {
            mismatches += 1;
        }
        if !chosen_independent {
            not_independent += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && not_independent == 0 && elapsed < C3_BUDGET,
        format!(
            "{C3_INSTANCES} instances with <= 16 vertices, {mismatches} weight mismatches, \
             {not_independent} dependent sets, {elapsed:.1?}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut q_wrong = 0;
    let mut cases = 0;
    for i in 0..200u64 {
        let mut rng = instance_rng(4, i);
        let n_a = rng.random_range(1..=12);
        let n_b = rng.random_range(1..=12);
        let counts_a: Vec<u32> = (0..n_a).map(|_| rng.random_range(1..=1000)).collect();
        let counts_b: Vec<u32> = (0..n_b).map(|_| rng.random_range(1..=1000)).collect();
        let edges = (0..n_a as u32).flat_map(|i| (0..n_b as u32).map(move |j| (i, j))).collect();
        let g = ConflictGraph::from_parts(&counts_a, &counts_b, edges).unwrap();
        let cert = opt_prob(&SubProblem::whole(&g)).unwrap();
        let (ca, cb) = (g.mass_a() as i128, g.mass_b() as i128);
        let expect = Rational::new(ca, ca + cb);
        if cert.q_a.iter().any(|q| *q != expect) || cert.q_b.iter().any(|q| *q != Rational::from_integer(1) - expect) {
            q_wrong += 1;
        }
        let (pa, pb) = (ca as f64 / (ca + cb) as f64, cb as f64 / (ca + cb) as f64);
        let analytic = -pa * pa.ln() - pb * pb.ln();
        worst = worst.max((cert.objective_nats - analytic).abs());
        cases += 1;
    }
    let pair = ConflictGraph::from_parts(&[1], &[1], vec![(0, 0)]).unwrap();
    let pair_obj = opt_prob(&SubProblem::whole(&pair)).unwrap().objective_nats;
    let pair_err = (pair_obj - LN_2).abs();
    outcome(
        q_wrong == 0 && worst <= C4_TOL && pair_err <= C4_TOL,
        format!(
            "{cases} complete bipartite graphs: {q_wrong} with wrong q, max objective error {worst:.1e}; \
             pair objective error {pair_err:.1e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    // (a) eps grids on random datasets.
    let mut eps_violations = 0;
    for i in 0..C5_DATASETS {
        let mut rng = instance_rng(5, i);
        let (ds, spec) = random_geometric(&mut rng, 40);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..C5_EPS_POINTS {
            let eps = 0.35 * k as f64 / (C5_EPS_POINTS - 1) as f64;
            let g = build_conflict_graph(&ds, &NeighborhoodSpec::new(spec.norm.clone(), eps).unwrap()).unwrap();
            let obj = solve(&g, &SolveOptions::default()).unwrap().objective_nats;
            if obj < prev - C5_SLACK {
                eps_violations += 1;
            }
            prev = obj;
        }
    }
    // (b) nested subsamples of one pooled sample. Like the image data the
    // trend was observed on, the setting is one where the bound is still far
    // from converged; k grows by 4x per step.
    let base = GaussianProblem::diagonal_preset(10, 2.0, 7, NeighborhoodSpec::l2(0.0).unwrap()).unwrap();
    let prob = base.with_eps(0.9 * base.mu().norm()).unwrap();
    let pool = sample_mixture_per_class(&prob, 3200, 17).unwrap();
    let sizes = [50u64, 200, 800, 3200];
    let violations: Vec<(u64, u64)> = (0..C5_SEEDS)
        .into_par_iter()
        .flat_map_iter(|s| {
            let seed = split_seed(55, s);
            let objs: Vec<f64> = sizes
                .iter()
                .map(|&k| {
                    let sub = pool.subsample(k, seed).unwrap();
                    let g = build_conflict_graph(&sub, &prob.spec).unwrap();
                    solve(&g, &SolveOptions::default()).unwrap().objective_nats
                })
                .collect();
            let bad: Vec<(u64, u64)> = objs
                .windows(2)
                .zip(&sizes[1..])
                .filter(|(w, _)| w[1] < w[0] - C5_SLACK)
                .map(|(_, &k)| (s, k))
                .collect();
            bad
        })
        .collect();
    outcome(
        eps_violations == 0 && violations.is_empty(),
        format!(
            "{C5_DATASETS} datasets x {C5_EPS_POINTS} eps: {eps_violations} decreases; \
             {C5_SEEDS} seeds x k in {sizes:?}: {} decreases {violations:?}",
            violations.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let l2 = |e: f64| NeighborhoodSpec::l2(e).unwrap();
    let big = closed_form_loss(&GaussianProblem::one_dim(1.0, 1.0, 0.5, l2(1.0)).unwrap()).unwrap();
    let big2 = closed_form_loss(&GaussianProblem::one_dim(1.0, 1.0, 0.5, l2(3.0)).unwrap()).unwrap();
    let ln2_err = (big.loss_nats - LN_2).abs().max((big2.loss_nats - LN_2).abs());

    // Monte Carlo over the class +1 component; by symmetry it covers both.
    let zero = closed_form_loss(&GaussianProblem::one_dim(1.0, 1.0, 0.5, l2(0.0)).unwrap()).unwrap();
    let chunks = 16usize;
    let per_chunk = C6_MC_SAMPLES / chunks;
    let (sum, sum_sq): (f64, f64) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(6, c as u64);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..per_chunk {
                let x = 1.0 + rng.sample::<f64, _>(StandardNormal);
                let f = (-2.0 * x).exp().ln_1p();
                s += f;
                s2 += f * f;
            }
            (s, s2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = (per_chunk * chunks) as f64;
    let mean = sum / n;
    let se = ((sum_sq / n - mean * mean) / (n - 1.0)).sqrt();
    let z = (zero.loss_nats - mean).abs() / se;

    // Quadrature agreement on the stated one-dimensional family across budgets
    // and priors, and on the two-dimensional preset used for criterion 7.
    // Far better separated mixtures (Mahalanobis mean above ~3) drive the loss
    // below 1e-2 and the two rules apart; that case raises the precision flag.
    let mut worst_rel = 0.0f64;
    let mut problems = Vec::new();
    for prior in [0.5, 0.3, 0.8] {
        problems.push(GaussianProblem::one_dim(1.0, 1.0, prior, l2(0.0)).unwrap());
    }
    problems.push(GaussianProblem::diagonal_preset(2, 2.0, 7, l2(0.0)).unwrap());
    for base in &problems {
        for k in 0..=24 {
            let p = base.with_eps(0.05 * k as f64).unwrap();
            let s = closed_form_loss(&p).unwrap();
            worst_rel = worst_rel.max((s.loss_nats - s.loss_check).abs() / s.loss_check);
        }
    }
    let r200 = gauss_hermite(QUADRATURE_NODES);
    let r400 = gauss_hermite(CHECK_NODES);
    let e200 = normal_expectation(softplus_neg, 2.0, 2.0, &r200);
    let e400 = normal_expectation(softplus_neg, 2.0, 2.0, &r400);
    worst_rel = worst_rel.max((e200 - e400).abs() / e400);

    outcome(
        ln2_err <= C6_LN2_TOL && z <= C6_MC_SIGMAS && worst_rel <= C6_QUAD_REL,
        format!(
            "ln2 error {ln2_err:.1e}; eps=0 quadrature {:.8} vs Monte Carlo {mean:.8} +- {se:.1e} \
             ({z:.2} SE); 200 vs 400 nodes max rel diff {worst_rel:.1e}",
            zero.loss_nats
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let spec0 = NeighborhoodSpec::l2(0.0).unwrap();
    let d2 = GaussianProblem::diagonal_preset(2, 2.0, 7, spec0.clone()).unwrap();
    let d100 = GaussianProblem::diagonal_preset(100, 2.0, 7, spec0).unwrap();
    let norm = d2.mu().norm();
    let eps_values: Vec<f64> = [0.2, 0.35, 0.5, 0.65, 0.8].iter().map(|f| f * norm).collect();
    let s2 = sample_mixture_per_class(&d2, C7_PER_CLASS, 11).unwrap();
    let s100 = sample_mixture_per_class(&d100, C7_PER_CLASS, 11).unwrap();
    let gap = |prob: &GaussianProblem, ds: &LabeledDataset, eps: f64| {
        let p = prob.with_eps(eps).unwrap();
        let closed = closed_form_loss(&p).unwrap().loss_nats;
        let g = GraphBuilder::new(p.spec.clone()).prune_first_coordinate(true).build(ds).unwrap();
        let emp = solve(&g, &SolveOptions::fast()).unwrap().objective_nats;
        (closed - emp).abs()
    };
    let mut rows = Vec::new();
    for &e in &eps_values {
        rows.push((e, gap(&d2, &s2, e), gap(&d100, &s100, e)));
    }
    let elapsed = start.elapsed();
    let worst2 = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let widens = rows.iter().all(|r| r.2 > r.1);
    let table: Vec<String> = rows
        .iter()
        .map(|(e, a, b)| format!("eps {e:.3}: d2 {a:.4} d100 {b:.4}"))
        .collect();
    outcome(
        worst2 <= C7_GAP && widens && elapsed < C7_BUDGET,
        format!(
            "n={C7_PER_CLASS}/class, max d=2 gap {worst2:.4} nats, d=100 gap larger at all eps: {widens}; \
             [{}]; {elapsed:.1?}",
            table.join("; ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let prob = GaussianProblem::diagonal_preset(2, 2.0, 7, NeighborhoodSpec::l2(0.7).unwrap()).unwrap();
    let ds = sample_mixture_per_class(&prob, C8_PER_CLASS, 11).unwrap();
    let g = build_conflict_graph(&ds, &prob.spec).unwrap();
    let t = Instant::now();
    let cert = solve(&g, &SolveOptions::default()).unwrap();
    let opt_time = t.elapsed();
    let t = Instant::now();
    let fw = frank_wolfe(
        &g,
        &FwOptions {
            gap_tol: C8_FW_GAP,
            deadline: Some(Instant::now() + C8_FW_LIMIT),
            ..Default::default()
        },
    )
    .unwrap();
    let fw_time = t.elapsed();
    let ratio = fw_time.as_secs_f64() / opt_time.as_secs_f64();
    let agree = (fw.objective - cert.objective_nats).abs() <= C8_FW_GAP;
    outcome(
        g.n_a() == C8_PER_CLASS
            && g.n_b() == C8_PER_CLASS
            && g.n_edges() >= C8_MIN_EDGES
            && opt_time < C8_BUDGET
            && opt_time < fw_time
            && agree,
        format!(
            "{}+{} vertices, {} edges: exact {opt_time:.2?}, Frank-Wolfe (gap {C8_FW_GAP:e}, converged {}) \
             {fw_time:.2?}, ratio {ratio:.0}x, objectives agree: {agree}",
            g.n_a(),
            g.n_b(),
            g.n_edges(),
            fw.converged
        ),
    )
}

/// Smallest 0-1 loss over hard labelings that respect every edge.
fn exhaustive_zero_one(g: &ConflictGraph) -> Rational {
    let (n_a, n) = (g.n_a(), g.n_vertices());
    let mut best_kept = 0u64;
    for mask in 0u32..(1 << n) {
        let on = |v: usize| mask >> v & 1 == 1;
        if g.edges().iter().any(|&(i, j)| on(i as usize) && on(n_a + j as usize)) {
            continue;
        }
        let kept: u64 = (0..n_a).filter(|&i| on(i)).map(|i| g.count_a(i)).sum::<u64>()
            + (0..g.n_b()).filter(|&j| on(n_a + j)).map(|j| g.count_b(j)).sum::<u64>();
        best_kept = best_kept.max(kept);
    }
    let total = g.total_count() as i128;
    Rational::new(total - best_kept as i128, total)
}

fn criterion_9() -> Outcome {
    let results: Vec<(bool, Option<bool>)> = (0..C9_INSTANCES)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(9, i);
            let g = if i % 2 == 0 {
                let (ds, spec) = random_geometric(&mut rng, if i % 4 == 0 { 6 } else { 40 });
                build_conflict_graph(&ds, &spec).unwrap()
            } else {
                random_bipartite(&mut rng, if i % 4 == 1 { C9_EXHAUSTIVE_VERTICES } else { 40 })
            };
            let cert = solve(&g, &SolveOptions::default()).unwrap();
            let zo = zero_one_bound(&cert, &g);
            let feasible = g
                .edges()
                .iter()
                .all(|&(a, b)| !(zo.correct_a[a as usize] && zo.correct_b[b as usize]));
            let optimal =
                (g.n_vertices() <= C9_EXHAUSTIVE_VERTICES).then(|| zo.loss_exact == exhaustive_zero_one(&g));
            (feasible, optimal)
        })
        .collect();
    let infeasible = results.iter().filter(|r| !r.0).count();
    let small = results.iter().filter(|r| r.1.is_some()).count();
    let suboptimal = results.iter().filter(|r| r.1 == Some(false)).count();
    outcome(
        infeasible == 0 && suboptimal == 0 && small >= 100,
        format!(
            "{C9_INSTANCES} instances: {infeasible} infeasible labelings; \
             {small} with <= {C9_EXHAUSTIVE_VERTICES} vertices, {suboptimal} not matching exhaustive search"
        ),
    )
}

fn criterion_10() -> Outcome {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/digit_pair_sweep.sh");
    let script_ok = std::fs::read_to_string(&script)
        .map(|s| s.contains("advbound sweep") && s.contains("--classes"))
        .unwrap_or(false);

    // Same path a user CSV export takes: header, raw digit labels, pair
    // selection, nested subsamples, eps sweep.
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("digits.csv");
    let mut body = String::from("label");
    for k in 0..16 {
        body.push_str(&format!(",px{k}"));
    }
    body.push('\n');
    let mut rng = stream_rng(10, 0);
    for r in 0..1500 {
        let digit = [1, 7, 3][r % 3];
        body.push_str(&digit.to_string());
        for k in 0..16 {
            let centre = if (k + digit) % 3 == 0 { 0.8 } else { 0.2 };
            let v: f64 = (centre + 0.25 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0);
            body.push_str(&format!(",{:.3}", (v * 255.0).round() / 255.0));
        }
        body.push('\n');
    }
    std::fs::write(&csv, body).unwrap();
    let ds = LabeledDataset::load_csv(&csv, 0, Some(("1", "7"))).unwrap();
    let loaded_ok = ds.total_count() == 1000 && ds.class_count(Label::Plus) == 500;
    let mut monotone = true;
    let mut last_row = String::new();
    for &k in &[100u64, 200, 400] {
        let sub = ds.subsample(k, 3).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for e in 0..8 {
            let spec = NeighborhoodSpec::linf(e as f64 * 0.05).unwrap();
            let g = build_conflict_graph(&sub, &spec).unwrap();
            let cert = solve(&g, &SolveOptions::fast()).unwrap();
            monotone &= cert.objective_nats >= prev - C5_SLACK;
            prev = cert.objective_nats;
            last_row = format!(
                "k {k} eps {:.2}: {:.4} nats, collision {:.3}",
                spec.eps,
                cert.objective_nats,
                collision_probability(&g).unwrap()
            );
        }
    }
    outcome(
        script_ok && loaded_ok && monotone,
        format!(
            "script slot present: {script_ok}; CSV pair pipeline loads {} units, eps-monotone: {monotone} \
             (last: {last_row}). Full-size image datasets are not bundled; run the script on an export",
            ds.total_count()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("certificate exactness", criterion_1),
        ("agreement with Frank-Wolfe", criterion_2),
        ("LinOpt vs exhaustive independent sets", criterion_3),
        ("analytic complete-bipartite case", criterion_4),
        ("monotonicity in eps and sample size", criterion_5),
        ("Gaussian closed form", criterion_6),
        ("population vs empirical bound", criterion_7),
        ("performance vs Frank-Wolfe", criterion_8),
        ("0-1 feasibility and optimality", criterion_9),
        ("CSV pipeline and script slot", criterion_10),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", k + 1);
        if filter.as_ref().is_some_and(|f| *f != id) {
            continue;
        }
        let o = run();
        println!("criterion {id:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
