//! Recursive computation of the optimal correct-classification probabilities.
//!
//! Each step asks [`lin_opt`] whether the uniform guess
//! `q = P(A)/P(A u B)` on A and `P(B)/P(A u B)` on B is optimal. If not, the
//! returned independent set `A+ u B+` splits the problem into `(A+, B-)` and
//! `(A-, B+)`, solved independently. The leaves become blocks; their order
//! (all `(A-, B+)` blocks before all `(A+, B-)` blocks, recursively) makes the
//! block ratios nondecreasing and every edge point from a lower-or-equal
//! block on the A side to its B endpoint's block.
//!
//! The recursion runs on an explicit stack; depth can reach the number of
//! vertices.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConflictGraph;
use crate::linopt::{lin_opt, SubProblem};
use crate::rational::{to_f64, to_pair, Rational};

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Solve connected components separately.
    pub decompose: bool,
    /// Solve components on the rayon pool.
    pub parallel: bool,
    pub deadline: Option<Instant>,
}

impl SolveOptions {
    pub fn fast() -> Self {
        SolveOptions {
            decompose: true,
            parallel: true,
            deadline: None,
        }
    }
}

/// One leaf of the recursion: a base-case subproblem and its dual values.
#[derive(Debug, Clone)]
pub struct LeafBlock {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub mass_a: u64,
    pub mass_b: u64,
    pub scale: Rational,
    pub z_a: Vec<i64>,
    pub z_b: Vec<i64>,
    /// Nonzero scaled edge duals, keyed by global endpoint positions.
    pub z_edges: Vec<((u32, u32), i64)>,
}

impl LeafBlock {
    pub fn ratio(&self) -> Rational {
        Rational::new(self.mass_a as i128, (self.mass_a + self.mass_b) as i128)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub mass_a: u64,
    pub mass_b: u64,
}

impl Block {
    /// Common value of `q` on the block's A vertices.
    pub fn ratio(&self) -> Rational {
        Rational::new(self.mass_a as i128, (self.mass_a + self.mass_b) as i128)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub linopt_calls: u64,
    pub max_pending: u64,
    pub components: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCertificate {
    /// Correct-classification probability per A position.
    pub q_a: Vec<Rational>,
    /// Per B position.
    pub q_b: Vec<Rational>,
    /// Nonzero edge duals as `(edge index in the graph, value)`, sorted.
    pub z_edges: Vec<(usize, Rational)>,
    pub z_a: Vec<Rational>,
    pub z_b: Vec<Rational>,
    pub blocks: Vec<Block>,
    pub block_of_a: Vec<u32>,
    pub block_of_b: Vec<u32>,
    pub objective_nats: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateExport {
    /// A positions first, then B positions.
    pub q: Vec<[i128; 2]>,
    /// `[edge index, num, den]` for every nonzero edge dual.
    pub z_edges: Vec<[i128; 3]>,
    pub z_vertices: Vec<[i128; 2]>,
    pub blocks: Vec<BlockExport>,
    pub objective_nats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockExport {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub ratio: [i128; 2],
}

impl BoundCertificate {
    pub fn z_edge(&self, edge: usize) -> Rational {
        match self.z_edges.binary_search_by_key(&edge, |&(e, _)| e) {
            Ok(k) => self.z_edges[k].1,
            Err(_) => Rational::from_integer(0),
        }
    }

    pub fn to_export(&self) -> CertificateExport {
        CertificateExport {
            q: self.q_a.iter().chain(&self.q_b).map(to_pair).collect(),
            z_edges: self
                .z_edges
                .iter()
                .map(|(e, z)| [*e as i128, *z.numer(), *z.denom()])
                .collect(),
            z_vertices: self.z_a.iter().chain(&self.z_b).map(to_pair).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockExport {
                    a: b.a.clone(),
                    b: b.b.clone(),
                    ratio: to_pair(&b.ratio()),
                })
                .collect(),
            objective_nats: self.objective_nats,
        }
    }
}

/// `sum_v -(c_v / N) ln q_v`; infinite if some `q_v` is zero.
pub fn objective_nats(g: &ConflictGraph, q_a: &[Rational], q_b: &[Rational]) -> f64 {
    let n = g.total_count() as f64;
    let term = |c: u64, q: &Rational| {
        if *q.numer() == 0 {
            f64::INFINITY
        } else if q.numer() == q.denom() {
            0.0
        } else {
            -(c as f64 / n) * ((*q.numer() as f64).ln() - (*q.denom() as f64).ln())
        }
    };
    let sa: f64 = q_a
        .iter()
        .enumerate()
        .map(|(i, q)| term(g.count_a(i), q))
        .sum();
    let sb: f64 = q_b
        .iter()
        .enumerate()
        .map(|(j, q)| term(g.count_b(j), q))
        .sum();
    sa + sb
}

/// Runs the recursion on `sub` and returns its leaves in block order.
pub fn opt_prob_blocks(sub: &SubProblem<'_>, deadline: Option<Instant>) -> Result<(Vec<LeafBlock>, SolveStats)> {
    let g = sub.graph;
    let mut stats = SolveStats::default();
    if sub.n_vertices() == 0 {
        return Ok((Vec::new(), stats));
    }
    if sub.total_mass() == 0 {
        return Err(Error::Invalid("subproblem has zero mass".into()));
    }
    // 0 = not in the current split, 1 = plus side, 2 = minus side.
    let mut side_a = vec![0u8; g.n_a()];
    let mut side_b = vec![0u8; g.n_b()];
    let mut leaves = Vec::new();
    let mut stack: Vec<SubProblem<'_>> = vec![sub.clone()];

    while let Some(cur) = stack.pop() {
        if let Some(d) = deadline {
            if Instant::now() >= d {
                return Err(Error::Timeout);
            }
        }
        stats.linopt_calls += 1;
        let lin = lin_opt(&cur)?;
        if lin.trivial {
            let z_edges = cur
                .edges
                .iter()
                .zip(&lin.z_edges)
                .filter(|(_, &z)| z != 0)
                .map(|(&e, &z)| (e, z))
                .collect();
            leaves.push(LeafBlock {
                a: cur.a,
                b: cur.b,
                mass_a: cur.mass_a,
                mass_b: cur.mass_b,
                scale: lin.scale,
                z_a: lin.z_a,
                z_b: lin.z_b,
                z_edges,
            });
            continue;
        }
        if lin.a_plus.is_empty() || lin.b_plus.is_empty() {
            return Err(Error::Internal(
                "non-trivial split with an empty side of the independent set".into(),
            ));
        }
        for &i in &lin.a_plus {
            side_a[i as usize] = 1;
        }
        for &i in &lin.a_minus {
            side_a[i as usize] = 2;
        }
        for &j in &lin.b_plus {
            side_b[j as usize] = 1;
        }
        for &j in &lin.b_minus {
            side_b[j as usize] = 2;
        }
        let mut e_first = Vec::new();
        let mut e_second = Vec::new();
        for &(i, j) in &cur.edges {
            match (side_a[i as usize], side_b[j as usize]) {
                (1, 2) => e_first.push((i, j)),
                (2, 1) => e_second.push((i, j)),
                (1, 1) => {
                    return Err(Error::Internal(format!(
                        "edge ({i}, {j}) inside the independent set"
                    )))
                }
                _ => {}
            }
        }
        for &i in &cur.a {
            side_a[i as usize] = 0;
        }
        for &j in &cur.b {
            side_b[j as usize] = 0;
        }
        let parent_size = cur.n_vertices();
        let first = SubProblem::with_edges(g, lin.a_plus, lin.b_minus, e_first);
        let second = SubProblem::with_edges(g, lin.a_minus, lin.b_plus, e_second);
        if first.n_vertices() >= parent_size || second.n_vertices() >= parent_size {
            return Err(Error::Internal("recursion made no progress".into()));
        }
        // LIFO: the (A-, B+) branch is popped and emitted first.
        stack.push(first);
        stack.push(second);
        stats.max_pending = stats.max_pending.max(stack.len() as u64);
    }
    Ok((leaves, stats))
}

/// A component's A vertices, B vertices and edges.
type Group = (Vec<u32>, Vec<u32>, Vec<(u32, u32)>);

/// Connected components of `sub`, plus one group of isolated A vertices and
/// one of isolated B vertices. Ordered by first A position, then first B
/// position.
pub fn decompose_components<'g>(sub: &SubProblem<'g>) -> Vec<SubProblem<'g>> {
    let g = sub.graph;
    let na = g.n_a();
    // Union-find over A positions then B positions (offset na).
    let mut parent: Vec<u32> = (0..(na + g.n_b()) as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    let mut degree_a = vec![0u32; na];
    let mut degree_b = vec![0u32; g.n_b()];
    for &(i, j) in &sub.edges {
        degree_a[i as usize] += 1;
        degree_b[j as usize] += 1;
        let ra = find(&mut parent, i);
        let rb = find(&mut parent, na as u32 + j);
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi as usize] = lo;
        }
    }
    let mut comp_index: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut isolated_a = Vec::new();
    let mut isolated_b = Vec::new();
    let mut slot = |root: u32, groups: &mut Vec<Group>| {
        *comp_index.entry(root).or_insert_with(|| {
            groups.push((Vec::new(), Vec::new(), Vec::new()));
            groups.len() - 1
        })
    };
    for &i in &sub.a {
        if degree_a[i as usize] == 0 {
            isolated_a.push(i);
        } else {
            let r = find(&mut parent, i);
            let k = slot(r, &mut groups);
            groups[k].0.push(i);
        }
    }
    for &j in &sub.b {
        if degree_b[j as usize] == 0 {
            isolated_b.push(j);
        } else {
            let r = find(&mut parent, na as u32 + j);
            let k = slot(r, &mut groups);
            groups[k].1.push(j);
        }
    }
    for &(i, j) in &sub.edges {
        let r = find(&mut parent, i);
        let k = comp_index[&r];
        groups[k].2.push((i, j));
    }
    let mut out: Vec<SubProblem<'g>> = groups
        .into_iter()
        .map(|(a, b, e)| SubProblem::with_edges(g, a, b, e))
        .collect();
    if !isolated_a.is_empty() {
        out.push(SubProblem::with_edges(g, isolated_a, Vec::new(), Vec::new()));
    }
    if !isolated_b.is_empty() {
        out.push(SubProblem::with_edges(g, Vec::new(), isolated_b, Vec::new()));
    }
    out
}

/// Assemble leaves covering every vertex of `g` into a certificate. Blocks
/// are stably sorted by ratio, which keeps each input sequence's relative
/// order when it is already sorted.
pub fn assemble(g: &ConflictGraph, mut leaves: Vec<LeafBlock>, stats: SolveStats) -> Result<BoundCertificate> {
    leaves.sort_by_key(LeafBlock::ratio);
    let unset = u32::MAX;
    let mut block_of_a = vec![unset; g.n_a()];
    let mut block_of_b = vec![unset; g.n_b()];
    let zero = Rational::from_integer(0);
    let mut q_a = vec![zero; g.n_a()];
    let mut q_b = vec![zero; g.n_b()];
    let mut z_a = vec![zero; g.n_a()];
    let mut z_b = vec![zero; g.n_b()];
    let mut z_edges = Vec::new();
    let mut blocks = Vec::with_capacity(leaves.len());
    for (k, leaf) in leaves.into_iter().enumerate() {
        let total = (leaf.mass_a + leaf.mass_b) as i128;
        let qa = Rational::new(leaf.mass_a as i128, total);
        let qb = Rational::new(leaf.mass_b as i128, total);
        for (&i, &z) in leaf.a.iter().zip(&leaf.z_a) {
            if block_of_a[i as usize] != unset {
                return Err(Error::Internal(format!("A vertex {i} in two blocks")));
            }
            block_of_a[i as usize] = k as u32;
            q_a[i as usize] = qa;
            z_a[i as usize] = Rational::from_integer(z as i128) / leaf.scale;
        }
        for (&j, &z) in leaf.b.iter().zip(&leaf.z_b) {
            if block_of_b[j as usize] != unset {
                return Err(Error::Internal(format!("B vertex {j} in two blocks")));
            }
            block_of_b[j as usize] = k as u32;
            q_b[j as usize] = qb;
            z_b[j as usize] = Rational::from_integer(z as i128) / leaf.scale;
        }
        for &(e, z) in &leaf.z_edges {
            let idx = g
                .edges()
                .binary_search(&e)
                .map_err(|_| Error::Internal(format!("edge {e:?} not in graph")))?;
            z_edges.push((idx, Rational::from_integer(z as i128) / leaf.scale));
        }
        blocks.push(Block {
            a: leaf.a,
            b: leaf.b,
            mass_a: leaf.mass_a,
            mass_b: leaf.mass_b,
        });
    }
    if block_of_a.iter().chain(&block_of_b).any(|&b| b == unset) {
        return Err(Error::IndexMismatch("leaves do not cover every vertex".into()));
    }
    z_edges.sort_unstable_by_key(|&(e, _)| e);
    let objective = objective_nats(g, &q_a, &q_b);
    Ok(BoundCertificate {
        q_a,
        q_b,
        z_edges,
        z_a,
        z_b,
        blocks,
        block_of_a,
        block_of_b,
        objective_nats: objective,
        stats,
    })
}

/// Runs the recursion on a subproblem spanning the whole graph.
pub fn opt_prob(sub: &SubProblem<'_>) -> Result<BoundCertificate> {
    let g = sub.graph;
    if sub.a.len() != g.n_a() || sub.b.len() != g.n_b() {
        return Err(Error::IndexMismatch(
            "opt_prob certificates need the full vertex set; use opt_prob_blocks".into(),
        ));
    }
    let (leaves, stats) = opt_prob_blocks(sub, None)?;
    assemble(g, leaves, stats)
}

/// Solves the whole graph, optionally component by component.
pub fn solve(g: &ConflictGraph, opts: &SolveOptions) -> Result<BoundCertificate> {
    let whole = SubProblem::whole(g);
    if g.n_vertices() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !opts.decompose {
        let (leaves, stats) = opt_prob_blocks(&whole, opts.deadline)?;
        return assemble(g, leaves, stats);
    }
    let comps = decompose_components(&whole);
    let run = |c: &SubProblem<'_>| opt_prob_blocks(c, opts.deadline);
    let results: Vec<Result<(Vec<LeafBlock>, SolveStats)>> = if opts.parallel {
        comps.par_iter().map(run).collect()
    } else {
        comps.iter().map(run).collect()
    };
    let mut leaves = Vec::new();
    let mut stats = SolveStats {
        components: comps.len() as u64,
        ..Default::default()
    };
    for r in results {
        let (l, s) = r?;
        leaves.extend(l);
        stats.linopt_calls += s.linopt_calls;
        stats.max_pending = stats.max_pending.max(s.max_pending);
    }
    assemble(g, leaves, stats)
}

/// Float copy of `q`, A positions then B positions.
pub fn q_as_f64(cert: &BoundCertificate) -> Vec<f64> {
    cert.q_a.iter().chain(&cert.q_b).map(to_f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn single_conflicting_pair() {
        let g = ConflictGraph::from_parts(&[1], &[1], vec![(0, 0)]).unwrap();
        let c = opt_prob(&SubProblem::whole(&g)).unwrap();
        assert_eq!(c.q_a, vec![r(1, 2)]);
        assert_eq!(c.q_b, vec![r(1, 2)]);
        assert!((c.objective_nats - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(c.blocks.len(), 1);
    }

    #[test]
    fn complete_bipartite_base_case() {
        let g = ConflictGraph::from_parts(&[1, 1], &[1, 2], vec![(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        let c = opt_prob(&SubProblem::whole(&g)).unwrap();
        assert_eq!(c.q_a, vec![r(2, 5); 2]);
        assert_eq!(c.q_b, vec![r(3, 5); 2]);
        let expected = -(0.4f64) * (0.4f64).ln() - 0.6 * (0.6f64).ln();
        assert!((c.objective_nats - expected).abs() < 1e-12);
        assert!((c.objective_nats - 0.6730116670092565).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_path() {
        let g = ConflictGraph::from_parts(&[1, 1], &[3], vec![(1, 0)]).unwrap();
        let c = opt_prob(&SubProblem::whole(&g)).unwrap();
        assert_eq!(c.q_a, vec![r(1, 1), r(1, 4)]);
        assert_eq!(c.q_b, vec![r(3, 4)]);
        let expected = 0.2 * 4f64.ln() + 0.6 * (4.0f64 / 3.0).ln();
        assert!((c.objective_nats - expected).abs() < 1e-15);
        assert!((c.objective_nats - 0.4498681156950466).abs() < 1e-12);
        assert_eq!(
            c.blocks,
            vec![
                Block { a: vec![1], b: vec![0], mass_a: 1, mass_b: 3 },
                Block { a: vec![0], b: vec![], mass_a: 1, mass_b: 0 },
            ]
        );
    }

    #[test]
    fn edgeless_graph_is_lossless() {
        let g = ConflictGraph::from_parts(&[2, 1], &[3], vec![]).unwrap();
        let c = opt_prob(&SubProblem::whole(&g)).unwrap();
        assert!(c.q_a.iter().chain(&c.q_b).all(|q| *q == r(1, 1)));
        assert_eq!(c.objective_nats, 0.0);
    }

    #[test]
    fn partial_subproblem_needs_blocks_api() {
        let g = ConflictGraph::from_parts(&[1, 1], &[1], vec![(0, 0)]).unwrap();
        let sub = SubProblem::induced(&g, vec![0], vec![0]);
        assert!(matches!(opt_prob(&sub), Err(Error::IndexMismatch(_))));
        let (leaves, _) = opt_prob_blocks(&sub, None).unwrap();
        assert_eq!(leaves.len(), 1);
    }

    #[test]
    fn components_are_found() {
        let g = ConflictGraph::from_parts(&[1, 1], &[1, 1], vec![(0, 0), (1, 1)]).unwrap();
        assert_eq!(decompose_components(&SubProblem::whole(&g)).len(), 2);
        let path = ConflictGraph::from_parts(&[1, 1], &[1], vec![(0, 0), (1, 0)]).unwrap();
        assert_eq!(decompose_components(&SubProblem::whole(&path)).len(), 1);
    }

    #[test]
    fn expired_deadline_times_out() {
        let g = ConflictGraph::from_parts(&[1], &[1], vec![(0, 0)]).unwrap();
        let opts = SolveOptions {
            deadline: Some(Instant::now()),
            ..Default::default()
        };
        assert!(matches!(solve(&g, &opts), Err(Error::Timeout)));
    }

    fn random_graph(seed: u64, n: usize) -> ConflictGraph {
        let mut rng = stream_rng(seed, 3);
        let na = rng.random_range(1..=n);
        let nb = rng.random_range(1..=n);
        let ca: Vec<u32> = (0..na).map(|_| rng.random_range(1..=5)).collect();
        let cb: Vec<u32> = (0..nb).map(|_| rng.random_range(1..=5)).collect();
        let p: f64 = rng.random_range(0.0..0.4);
        let mut edges = Vec::new();
        for i in 0..na as u32 {
            for j in 0..nb as u32 {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        ConflictGraph::from_parts(&ca, &cb, edges).unwrap()
    }

    #[test]
    fn componentwise_matches_monolithic() {
        for seed in 0..60 {
            let g = random_graph(seed, 20);
            let mono = opt_prob(&SubProblem::whole(&g)).unwrap();
            let split = solve(&g, &SolveOptions::fast()).unwrap();
            assert_eq!(mono.q_a, split.q_a, "seed {seed}");
            assert_eq!(mono.q_b, split.q_b, "seed {seed}");
            assert!((mono.objective_nats - split.objective_nats).abs() < 1e-12);
        }
    }

    #[test]
    fn block_structure_holds() {
        for seed in 0..100 {
            let g = random_graph(seed, 12);
            let c = solve(&g, &SolveOptions::fast()).unwrap();
            for w in c.blocks.windows(2) {
                assert!(w[0].ratio() <= w[1].ratio());
            }
            for &(i, j) in g.edges() {
                assert!(c.block_of_a[i as usize] <= c.block_of_b[j as usize]);
                assert!(c.q_a[i as usize] + c.q_b[j as usize] <= r(1, 1));
            }
            for blk in &c.blocks {
                assert!(blk.mass_a + blk.mass_b > 0);
            }
        }
    }
}
