//! Loss evaluation and independent checks on solver output.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConflictGraph;
use crate::maxflow::{dinic, FlowNetwork};
use crate::optprob::{objective_nats, BoundCertificate};
use crate::rational::{big_to_string, to_big, to_f64, Rational};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: String,
    /// `a<i>`, `b<j>`, `edge<k>`, `block<k>` or `total`.
    pub element: String,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl CheckReport {
    pub fn has(&self, condition: &str) -> bool {
        self.violations.iter().any(|v| v.condition == condition)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, condition: &str, element: String, lhs: impl ToString, rhs: impl ToString) {
        self.0.push(Violation {
            condition: condition.to_string(),
            element,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        });
    }
}

fn fmt_rat(r: &Rational) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exact check of primal feasibility, dual feasibility, complementary cover
/// and the duality gap, plus the block structure of the solver's output.
///
/// Condition ids: `q_nonneg`, `q_le_one`, `edge_packing`, `z_nonneg`,
/// `cover`, `duality`, `block_partition`, `block_mass`, `block_ratio`,
/// `block_order`, `edge_direction`.
pub fn verify_certificate(g: &ConflictGraph, cert: &BoundCertificate) -> Result<CheckReport> {
    let (na, nb) = (g.n_a(), g.n_b());
    if cert.q_a.len() != na || cert.q_b.len() != nb || cert.z_a.len() != na || cert.z_b.len() != nb {
        return Err(Error::IndexMismatch(format!(
            "certificate has {}+{} q values and {}+{} z values for a {na}+{nb} graph",
            cert.q_a.len(),
            cert.q_b.len(),
            cert.z_a.len(),
            cert.z_b.len()
        )));
    }
    if let Some(&(e, _)) = cert.z_edges.iter().find(|(e, _)| *e >= g.n_edges()) {
        return Err(Error::IndexMismatch(format!("edge dual {e} out of range")));
    }
    let mut out = Collector(Vec::new());
    let zero = Rational::from_integer(0);
    let one = Rational::from_integer(1);

    for (i, q) in cert.q_a.iter().enumerate() {
        if *q < zero {
            out.push("q_nonneg", format!("a{i}"), fmt_rat(q), 0);
        }
        if *q > one {
            out.push("q_le_one", format!("a{i}"), fmt_rat(q), 1);
        }
    }
    for (j, q) in cert.q_b.iter().enumerate() {
        if *q < zero {
            out.push("q_nonneg", format!("b{j}"), fmt_rat(q), 0);
        }
        if *q > one {
            out.push("q_le_one", format!("b{j}"), fmt_rat(q), 1);
        }
    }
    for (k, &(i, j)) in g.edges().iter().enumerate() {
        let s = cert.q_a[i as usize] + cert.q_b[j as usize];
        if s > one {
            out.push("edge_packing", format!("edge{k}"), fmt_rat(&s), 1);
        }
    }

    // Dual side, in arbitrary precision: duals from different blocks have
    // unrelated denominators.
    let bzero = BigRational::zero();
    let mut cover_a: Vec<BigRational> = cert.z_a.iter().map(to_big).collect();
    let mut cover_b: Vec<BigRational> = cert.z_b.iter().map(to_big).collect();
    let mut z_total = BigRational::zero();
    for (i, z) in cert.z_a.iter().enumerate() {
        if *z < zero {
            out.push("z_nonneg", format!("a{i}"), fmt_rat(z), 0);
        }
    }
    for (j, z) in cert.z_b.iter().enumerate() {
        if *z < zero {
            out.push("z_nonneg", format!("b{j}"), fmt_rat(z), 0);
        }
    }
    for c in cover_a.iter().chain(&cover_b) {
        z_total += c;
    }
    for &(e, ref z) in &cert.z_edges {
        if *z < zero {
            out.push("z_nonneg", format!("edge{e}"), fmt_rat(z), 0);
        }
        let (i, j) = g.edges()[e];
        let zb = to_big(z);
        cover_a[i as usize] += &zb;
        cover_b[j as usize] += &zb;
        z_total += zb;
    }
    let n_big = BigInt::from(g.total_count());
    let p = |c: u64| BigRational::new(BigInt::from(c), n_big.clone());
    for (i, cov) in cover_a.iter().enumerate() {
        let lhs = to_big(&cert.q_a[i]) * cov;
        let rhs = p(g.count_a(i));
        if lhs < rhs {
            out.push("cover", format!("a{i}"), big_to_string(&lhs), big_to_string(&rhs));
        }
    }
    for (j, cov) in cover_b.iter().enumerate() {
        let lhs = to_big(&cert.q_b[j]) * cov;
        let rhs = p(g.count_b(j));
        if lhs < rhs {
            out.push("cover", format!("b{j}"), big_to_string(&lhs), big_to_string(&rhs));
        }
    }
    let p_total = BigRational::one();
    if z_total > p_total || z_total < bzero {
        out.push("duality", "total".into(), big_to_string(&z_total), big_to_string(&p_total));
    }

    check_blocks(g, cert, &mut out);

    let passed = out.0.is_empty();
    Ok(CheckReport {
        passed,
        violations: out.0,
    })
}

fn check_blocks(g: &ConflictGraph, cert: &BoundCertificate, out: &mut Collector) {
    let (na, nb) = (g.n_a(), g.n_b());
    let k = cert.blocks.len();
    if cert.block_of_a.len() != na || cert.block_of_b.len() != nb {
        out.push("block_partition", "total".into(), "block index length", na + nb);
        return;
    }
    let mut seen_a = vec![false; na];
    let mut seen_b = vec![false; nb];
    let one = Rational::from_integer(1);
    for (bi, blk) in cert.blocks.iter().enumerate() {
        let mut ma = 0u64;
        let mut mb = 0u64;
        for &i in &blk.a {
            let i = i as usize;
            if i >= na || seen_a[i] || cert.block_of_a[i] as usize != bi {
                out.push("block_partition", format!("a{i}"), bi, "unique membership");
                continue;
            }
            seen_a[i] = true;
            ma += g.count_a(i);
        }
        for &j in &blk.b {
            let j = j as usize;
            if j >= nb || seen_b[j] || cert.block_of_b[j] as usize != bi {
                out.push("block_partition", format!("b{j}"), bi, "unique membership");
                continue;
            }
            seen_b[j] = true;
            mb += g.count_b(j);
        }
        if ma != blk.mass_a || mb != blk.mass_b || ma + mb == 0 {
            out.push(
                "block_mass",
                format!("block{bi}"),
                format!("{}+{}", blk.mass_a, blk.mass_b),
                format!("{ma}+{mb}"),
            );
            continue;
        }
        let ratio = blk.ratio();
        for &i in &blk.a {
            if let Some(q) = cert.q_a.get(i as usize) {
                if *q != ratio {
                    out.push("block_ratio", format!("a{i}"), fmt_rat(q), fmt_rat(&ratio));
                }
            }
        }
        for &j in &blk.b {
            if let Some(q) = cert.q_b.get(j as usize) {
                if *q != one - ratio {
                    out.push("block_ratio", format!("b{j}"), fmt_rat(q), fmt_rat(&(one - ratio)));
                }
            }
        }
    }
    if seen_a.iter().chain(&seen_b).any(|s| !s) {
        out.push("block_partition", "total".into(), "uncovered vertices", 0);
    }
    for w in 1..k {
        let (lo, hi) = (cert.blocks[w - 1].ratio(), cert.blocks[w].ratio());
        if lo > hi {
            out.push("block_order", format!("block{w}"), fmt_rat(&lo), fmt_rat(&hi));
        }
    }
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let (bu, bv) = (cert.block_of_a[i as usize], cert.block_of_b[j as usize]);
        if bu > bv {
            out.push("edge_direction", format!("edge{e}"), bu, bv);
        }
    }
}

/// Cross-entropy in nats implied by the certificate's `q`. Returns
/// `f64::INFINITY` when some vertex with positive mass has `q = 0`.
pub fn cross_entropy_value(cert: &BoundCertificate, g: &ConflictGraph) -> f64 {
    objective_nats(g, &cert.q_a, &cert.q_b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroOneBound {
    pub loss: f64,
    pub loss_exact: Rational,
    pub correct_a: Vec<bool>,
    pub correct_b: Vec<bool>,
}

/// Thresholds `q` at one half. Ties go to class +1 (part A), which keeps the
/// hard labeling feasible on every edge.
pub fn zero_one_bound(cert: &BoundCertificate, g: &ConflictGraph) -> ZeroOneBound {
    let half = Rational::new(1, 2);
    let correct_a: Vec<bool> = cert.q_a.iter().map(|q| *q >= half).collect();
    let correct_b: Vec<bool> = cert.q_b.iter().map(|q| *q > half).collect();
    let kept: u64 = correct_a
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(i, _)| g.count_a(i))
        .chain(
            correct_b
                .iter()
                .enumerate()
                .filter(|(_, &c)| c)
                .map(|(j, _)| g.count_b(j)),
        )
        .sum();
    let n = g.total_count() as i128;
    let loss_exact = Rational::new(n - kept as i128, n);
    ZeroOneBound {
        loss: to_f64(&loss_exact),
        loss_exact,
        correct_a,
        correct_b,
    }
}

#[derive(Debug, Clone)]
pub struct FwOptions {
    pub gap_tol: f64,
    pub max_iters: usize,
    /// Bisection stops once the bracket is narrower than this.
    pub line_search_tol: f64,
    pub deadline: Option<Instant>,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions {
            gap_tol: 1e-6,
            max_iters: 100_000,
            line_search_tol: 1e-12,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrankWolfeResult {
    /// A positions then B positions.
    pub q: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub timed_out: bool,
}

pub fn frank_wolfe_reference(g: &ConflictGraph, gap_tol: f64, max_iters: usize) -> Result<FrankWolfeResult> {
    frank_wolfe(
        g,
        &FwOptions {
            gap_tol,
            max_iters,
            ..Default::default()
        },
    )
}

/// Conditional gradient over the vertex packing polytope with away steps.
///
/// Atoms are independent sets. The linear minimization oracle is a
/// max-weight independent set with weights `p_v / q_v`, computed by the
/// float-capacity Dinic. The iterate starts at `q = 1/2` everywhere, i.e.
/// half the all-A indicator plus half the all-B indicator.
pub fn frank_wolfe(g: &ConflictGraph, opts: &FwOptions) -> Result<FrankWolfeResult> {
    let (na, nb) = (g.n_a(), g.n_b());
    let nv = na + nb;
    if nv == 0 {
        return Err(Error::EmptyDataset);
    }
    let n_total = g.total_count() as f64;
    let p: Vec<f64> = (0..na)
        .map(|i| g.count_a(i) as f64 / n_total)
        .chain((0..nb).map(|j| g.count_b(j) as f64 / n_total))
        .collect();
    let objective = |q: &[f64]| -> f64 { p.iter().zip(q).map(|(&pv, &qv)| -pv * qv.ln()).sum() };

    let atom_a: Vec<bool> = (0..nv).map(|v| v < na).collect();
    let atom_b: Vec<bool> = (0..nv).map(|v| v >= na).collect();
    let mut atoms: Vec<(Vec<bool>, f64)> = vec![(atom_a, 0.5), (atom_b, 0.5)];
    let mut q = vec![0.5; nv];
    let mut grad = vec![0.0; nv];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut timed_out = false;
    let dot = |w: &[f64], s: &[bool]| -> f64 { w.iter().zip(s).filter(|(_, &b)| b).map(|(x, _)| x).sum() };

    while iterations < opts.max_iters {
        if let Some(d) = opts.deadline {
            if Instant::now() >= d {
                timed_out = true;
                break;
            }
        }
        // Negative gradient: w_v = p_v / q_v.
        for v in 0..nv {
            grad[v] = p[v] / q[v];
        }
        let s = max_weight_independent_set(g, &grad)?;
        let wq: f64 = grad.iter().zip(&q).map(|(w, x)| w * x).sum();
        let fw_gap = dot(&grad, &s) - wq;
        gap = fw_gap;
        if fw_gap <= opts.gap_tol {
            break;
        }
        iterations += 1;

        let (away_idx, away_val) = atoms
            .iter()
            .enumerate()
            .map(|(k, (a, _))| (k, dot(&grad, a)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("active set is never empty");
        let away_gap = wq - away_val;

        let (dir, gamma_max, fw_step): (Vec<f64>, f64, bool) = if fw_gap >= away_gap {
            let d = (0..nv).map(|v| s[v] as u8 as f64 - q[v]).collect();
            (d, 1.0, true)
        } else {
            let (ref a, alpha) = atoms[away_idx];
            let d = (0..nv).map(|v| q[v] - a[v] as u8 as f64).collect();
            (d, alpha / (1.0 - alpha), false)
        };

        let gamma = line_search(&p, &q, &dir, gamma_max, opts.line_search_tol);
        if gamma <= 0.0 {
            // No descent along this direction at working precision.
            break;
        }
        for v in 0..nv {
            q[v] += gamma * dir[v];
            if q[v] < 0.0 {
                q[v] = 0.0;
            }
        }
        if fw_step {
            for (_, w) in atoms.iter_mut() {
                *w *= 1.0 - gamma;
            }
            match atoms.iter().position(|(a, _)| *a == s) {
                Some(k) => atoms[k].1 += gamma,
                None => atoms.push((s, gamma)),
            }
            if gamma >= 1.0 {
                atoms.retain(|(_, w)| *w > 0.0);
            }
        } else {
            for (_, w) in atoms.iter_mut() {
                *w *= 1.0 + gamma;
            }
            atoms[away_idx].1 -= gamma;
            if gamma >= gamma_max {
                atoms.swap_remove(away_idx);
            }
        }
        atoms.retain(|(_, w)| *w > 1e-300);
    }
    let obj = objective(&q);
    Ok(FrankWolfeResult {
        converged: gap <= opts.gap_tol,
        q,
        objective: obj,
        gap,
        iterations,
        timed_out,
    })
}

/// Minimizes the convex restriction `t -> f(q + t d)` on `[0, t_max]` by
/// bisection on its derivative.
fn line_search(p: &[f64], q: &[f64], d: &[f64], t_max: f64, tol: f64) -> f64 {
    let deriv = |t: f64| -> f64 {
        let mut s = 0.0;
        for v in 0..p.len() {
            if d[v] != 0.0 {
                let x = q[v] + t * d[v];
                if x <= 0.0 {
                    return f64::INFINITY;
                }
                s -= p[v] * d[v] / x;
            }
        }
        s
    };
    if deriv(0.0) >= 0.0 {
        return 0.0;
    }
    if deriv(t_max) <= 0.0 {
        return t_max;
    }
    let (mut lo, mut hi) = (0.0, t_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Max-weight independent set for float weights (A positions then B), via
/// min cut. Returns the membership vector.
pub fn max_weight_independent_set(g: &ConflictGraph, weights: &[f64]) -> Result<Vec<bool>> {
    let (na, nb) = (g.n_a(), g.n_b());
    let sink = na + nb + 1;
    let mut net = FlowNetwork::<f64>::with_capacity(sink + 1, na + nb + g.n_edges())?;
    for i in 0..na {
        net.add_arc(0, 1 + i, weights[i])?;
    }
    for j in 0..nb {
        net.add_arc(1 + na + j, sink, weights[na + j])?;
    }
    let total = net.source_capacity()?;
    let inf = 2.0 * total + 1.0;
    for &(i, j) in g.edges() {
        net.add_arc(1 + i as usize, 1 + na + j as usize, inf)?;
    }
    let max_w = weights.iter().fold(0.0f64, |m, &w| m.max(w));
    let tol = 1e-13 * max_w.max(f64::MIN_POSITIVE);
    let flow = dinic(&net, tol)?;
    let reach = &flow.source_reachable;
    Ok((0..na)
        .map(|i| reach[1 + i])
        .chain((0..nb).map(|j| !reach[1 + na + j]))
        .collect())
}
