//! Neighborhood intersection tests and conflict-graph construction.
//!
//! With neighborhoods `x + eps * Delta` for an origin-symmetric convex `Delta`,
//! two neighborhoods meet iff the gauge distance between the centers is at
//! most `2 * eps`. Balls are closed, so distance exactly `2 * eps` is a
//! conflict.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};

/// Largest total count accepted by the solver. Keeps every scaled flow
/// capacity (about `N^2`) and their sums inside `i64`.
pub const MAX_TOTAL_COUNT: u64 = 1 << 20;

pub type GaugeFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum Norm {
    L2,
    Linf,
    /// User gauge `x -> ||x||_Delta`; must be a norm.
    Custom { name: String, gauge: Arc<GaugeFn> },
}

impl Norm {
    pub fn name(&self) -> &str {
        match self {
            Norm::L2 => "l2",
            Norm::Linf => "linf",
            Norm::Custom { name, .. } => name,
        }
    }

    pub fn custom(name: impl Into<String>, gauge: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Norm::Custom {
            name: name.into(),
            gauge: Arc::new(gauge),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Norm::L2),
            "linf" | "l_inf" | "inf" => Ok(Norm::Linf),
            other => Err(Error::Invalid(format!("unknown norm {other:?}"))),
        }
    }

    /// Norm of a difference vector.
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Norm::Custom { gauge, .. } => gauge(v),
        }
    }

    /// Whether `|v_0| <= ||v||` holds, which the first-coordinate prune needs.
    fn dominates_first_coordinate(&self) -> bool {
        matches!(self, Norm::L2 | Norm::Linf)
    }
}

impl fmt::Debug for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for Norm {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Norm::L2, Norm::L2) | (Norm::Linf, Norm::Linf) => true,
            (Norm::Custom { gauge: a, .. }, Norm::Custom { gauge: b, .. }) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSpec {
    pub norm: Norm,
    pub eps: f64,
}

impl NeighborhoodSpec {
    pub fn new(norm: Norm, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Invalid(format!("eps must be finite and >= 0, got {eps}")));
        }
        Ok(NeighborhoodSpec { norm, eps })
    }

    pub fn l2(eps: f64) -> Result<Self> {
        Self::new(Norm::L2, eps)
    }

    pub fn linf(eps: f64) -> Result<Self> {
        Self::new(Norm::Linf, eps)
    }

    #[inline]
    fn within(&self, x: &[f64], y: &[f64]) -> bool {
        let two_eps = 2.0 * self.eps;
        match &self.norm {
            Norm::L2 => {
                let mut acc = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let d = a - b;
                    acc += d * d;
                }
                acc <= two_eps * two_eps
            }
            Norm::Linf => x.iter().zip(y).all(|(a, b)| (a - b).abs() <= two_eps),
            Norm::Custom { gauge, .. } => {
                let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                gauge(&diff) <= two_eps
            }
        }
    }
}

pub fn neighborhoods_intersect(x: &[f64], x_prime: &[f64], spec: &NeighborhoodSpec) -> Result<bool> {
    if x.len() != x_prime.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: x_prime.len(),
        });
    }
    Ok(spec.within(x, x_prime))
}

/// Spot-checks that a gauge behaves like a norm on `samples` random vectors:
/// nonnegative, zero only at zero, symmetric, positively homogeneous and
/// subadditive. Returns a description of the first failure.
pub fn check_gauge(norm: &Norm, dim: usize, samples: usize, seed: u64) -> std::result::Result<(), String> {
    use rand::Rng;
    let mut rng = crate::rng::stream_rng(seed, 0);
    let zero = vec![0.0; dim];
    if norm.eval(&zero).abs() > 1e-12 {
        return Err("gauge(0) != 0".into());
    }
    for _ in 0..samples {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t: f64 = rng.random_range(0.1..5.0);
        let nx = norm.eval(&x);
        let tol = 1e-9 * (1.0 + nx);
        if !(nx > 0.0) {
            return Err(format!("gauge({x:?}) = {nx} is not positive"));
        }
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        if (norm.eval(&neg) - nx).abs() > tol {
            return Err("gauge is not symmetric".into());
        }
        let scaled: Vec<f64> = x.iter().map(|v| t * v).collect();
        if (norm.eval(&scaled) - t * nx).abs() > tol * t {
            return Err("gauge is not positively homogeneous".into());
        }
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        if norm.eval(&sum) > nx + norm.eval(&y) + tol {
            return Err("gauge violates the triangle inequality".into());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    /// Row in the source dataset; `usize::MAX` for synthetic graphs.
    pub index: usize,
    pub count: u32,
}

/// Bipartite conflict graph. Part A holds the `+1` support points, part B the
/// `-1` points; an edge `(i, j)` joins A position `i` and B position `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictGraph {
    a: Vec<Vertex>,
    b: Vec<Vertex>,
    edges: Vec<(u32, u32)>,
    total: u64,
    pub eps: f64,
    pub norm: String,
}

impl ConflictGraph {
    /// Graph over synthetic vertices given only by their counts.
    pub fn from_parts(counts_a: &[u32], counts_b: &[u32], edges: Vec<(u32, u32)>) -> Result<Self> {
        let mk = |c: &[u32]| {
            c.iter()
                .map(|&count| Vertex {
                    index: usize::MAX,
                    count,
                })
                .collect::<Vec<_>>()
        };
        Self::assemble(mk(counts_a), mk(counts_b), edges, 0.0, "none".into())
    }

    fn assemble(
        a: Vec<Vertex>,
        b: Vec<Vertex>,
        mut edges: Vec<(u32, u32)>,
        eps: f64,
        norm: String,
    ) -> Result<Self> {
        if a.iter().chain(&b).any(|v| v.count == 0) {
            return Err(Error::Invalid("vertex counts must be >= 1".into()));
        }
        if a.len() > u32::MAX as usize || b.len() > u32::MAX as usize {
            return Err(Error::Overflow("vertex index"));
        }
        let total: u64 = a.iter().chain(&b).map(|v| v.count as u64).sum();
        if total > MAX_TOTAL_COUNT {
            return Err(Error::Invalid(format!(
                "total count {total} exceeds the supported maximum {MAX_TOTAL_COUNT}"
            )));
        }
        if let Some(&(i, j)) = edges
            .iter()
            .find(|&&(i, j)| i as usize >= a.len() || j as usize >= b.len())
        {
            return Err(Error::Invalid(format!("edge ({i}, {j}) out of range")));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(ConflictGraph {
            a,
            b,
            edges,
            total,
            eps,
            norm,
        })
    }

    pub fn a_vertices(&self) -> &[Vertex] {
        &self.a
    }

    pub fn b_vertices(&self) -> &[Vertex] {
        &self.b
    }

    pub fn n_a(&self) -> usize {
        self.a.len()
    }

    pub fn n_b(&self) -> usize {
        self.b.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn count_a(&self, i: usize) -> u64 {
        self.a[i].count as u64
    }

    pub fn count_b(&self, j: usize) -> u64 {
        self.b[j].count as u64
    }

    pub fn mass_a(&self) -> u64 {
        self.a.iter().map(|v| v.count as u64).sum()
    }

    pub fn mass_b(&self) -> u64 {
        self.b.iter().map(|v| v.count as u64).sum()
    }

    /// Total count `N` over both parts.
    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// The same graph with the classes exchanged.
    pub fn transposed(&self) -> Self {
        let mut edges: Vec<(u32, u32)> = self.edges.iter().map(|&(i, j)| (j, i)).collect();
        edges.sort_unstable();
        ConflictGraph {
            a: self.b.clone(),
            b: self.a.clone(),
            edges,
            total: self.total,
            eps: self.eps,
            norm: self.norm.clone(),
        }
    }

    pub fn to_export(&self) -> GraphExport {
        GraphExport {
            n_a: self.n_a(),
            n_b: self.n_b(),
            counts_a: self.a.iter().map(|v| v.count).collect(),
            counts_b: self.b.iter().map(|v| v.count).collect(),
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
            eps: self.eps,
            norm: self.norm.clone(),
        }
    }

    pub fn from_export(e: &GraphExport) -> Result<Self> {
        if e.counts_a.len() != e.n_a || e.counts_b.len() != e.n_b {
            return Err(Error::Invalid("part sizes disagree with count lists".into()));
        }
        let mut g = Self::from_parts(
            &e.counts_a,
            &e.counts_b,
            e.edges.iter().map(|&[i, j]| (i, j)).collect(),
        )?;
        g.eps = e.eps;
        g.norm = e.norm.clone();
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub n_a: usize,
    pub n_b: usize,
    pub counts_a: Vec<u32>,
    pub counts_b: Vec<u32>,
    pub edges: Vec<[u32; 2]>,
    pub eps: f64,
    pub norm: String,
}

/// All-pairs conflict graph construction.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    spec: NeighborhoodSpec,
    prune: bool,
}

impl GraphBuilder {
    pub fn new(spec: NeighborhoodSpec) -> Self {
        GraphBuilder { spec, prune: false }
    }

    /// Restrict candidate pairs to a window on the first coordinate before the
    /// full distance test. Only available for L2 and LINF.
    pub fn prune_first_coordinate(mut self, on: bool) -> Self {
        self.prune = on;
        self
    }

    pub fn build(&self, ds: &LabeledDataset) -> Result<ConflictGraph> {
        if self.prune && !self.spec.norm.dominates_first_coordinate() {
            return Err(Error::Unsupported(format!(
                "first-coordinate pruning with norm {}",
                self.spec.norm.name()
            )));
        }
        let d = ds.dim();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, (&l, &c)) in ds.labels().iter().zip(ds.counts()).enumerate() {
            let v = Vertex { index: i, count: c };
            match l {
                Label::Plus => a.push(v),
                Label::Minus => b.push(v),
            }
        }
        let pack = |vs: &[Vertex]| {
            let mut out = Vec::with_capacity(vs.len() * d);
            for v in vs {
                out.extend_from_slice(ds.point(v.index));
            }
            out
        };
        let pa = pack(&a);
        let pb = pack(&b);
        let spec = &self.spec;
        let two_eps = 2.0 * spec.eps;

        // B positions ordered by first coordinate, for the pruned scan.
        let order: Vec<u32> = if self.prune {
            let mut o: Vec<u32> = (0..b.len() as u32).collect();
            o.sort_by(|&x, &y| pb[x as usize * d].total_cmp(&pb[y as usize * d]));
            o
        } else {
            Vec::new()
        };
        let keys: Vec<f64> = order.iter().map(|&j| pb[j as usize * d]).collect();

        let rows: Vec<Vec<(u32, u32)>> = (0..a.len())
            .into_par_iter()
            .with_min_len(16)
            .map(|i| {
                let x = &pa[i * d..(i + 1) * d];
                let mut row = Vec::new();
                if self.prune {
                    let lo = keys.partition_point(|&k| k < x[0] - two_eps);
                    let hi = keys.partition_point(|&k| k <= x[0] + two_eps);
                    for &j in &order[lo..hi] {
                        let y = &pb[j as usize * d..(j as usize + 1) * d];
                        if spec.within(x, y) {
                            row.push((i as u32, j));
                        }
                    }
                    row.sort_unstable();
                } else {
                    for j in 0..b.len() {
                        if spec.within(x, &pb[j * d..(j + 1) * d]) {
                            row.push((i as u32, j as u32));
                        }
                    }
                }
                row
            })
            .collect();
        let edges = rows.concat();
        ConflictGraph::assemble(a, b, edges, spec.eps, spec.norm.name().to_string())
    }
}

pub fn build_conflict_graph(ds: &LabeledDataset, spec: &NeighborhoodSpec) -> Result<ConflictGraph> {
    GraphBuilder::new(spec.clone()).build(ds)
}

/// Count-weighted fraction of (A, B) pairs that conflict.
pub fn collision_probability(g: &ConflictGraph) -> Result<f64> {
    let (ma, mb) = (g.mass_a(), g.mass_b());
    if ma == 0 || mb == 0 {
        return Err(Error::UndefinedStatistic("collision probability needs both classes"));
    }
    let hits: u128 = g
        .edges()
        .iter()
        .map(|&(i, j)| g.count_a(i as usize) as u128 * g.count_b(j as usize) as u128)
        .sum();
    Ok(hits as f64 / (ma as u128 * mb as u128) as f64)
}
