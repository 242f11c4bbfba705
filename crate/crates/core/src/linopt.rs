//! One level of the recursive solver: the dual pair of linear programs over the
//! bipartite vertex packing polytope, solved exactly as a max-flow / min-cut.
//!
//! The LP weights are `r_v = p_v * P(A u B) / P(A)` on A and
//! `p_v * P(A u B) / P(B)` on B. Multiplying by
//! `s = N * C_A * C_B / (C_A + C_B)` clears every denominator: A vertices get
//! integer weight `c_a * C_B`, B vertices `c_b * C_A`. The flow network is
//! source -> a (weight), a -> b (infinite) for each edge, b -> sink (weight).
//! The residual-reachable side of the min cut gives the maximum weight
//! independent set, and the flow itself gives a dual solution `z` that covers
//! every vertex with equality.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::geometry::ConflictGraph;
use crate::maxflow::{max_flow, FlowNetwork};
use crate::rational::Rational;

/// A vertex-induced piece of a [`ConflictGraph`]. Positions are global A and
/// B positions in the parent graph.
#[derive(Debug, Clone)]
pub struct SubProblem<'g> {
    pub graph: &'g ConflictGraph,
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    /// Edges of the parent graph with both ends inside, as global positions.
    pub edges: Vec<(u32, u32)>,
    pub mass_a: u64,
    pub mass_b: u64,
}

impl<'g> SubProblem<'g> {
    pub fn whole(graph: &'g ConflictGraph) -> Self {
        SubProblem {
            graph,
            a: (0..graph.n_a() as u32).collect(),
            b: (0..graph.n_b() as u32).collect(),
            edges: graph.edges().to_vec(),
            mass_a: graph.mass_a(),
            mass_b: graph.mass_b(),
        }
    }

    /// Subproblem on the given vertices with `edges` already restricted to
    /// them.
    pub fn with_edges(graph: &'g ConflictGraph, a: Vec<u32>, b: Vec<u32>, edges: Vec<(u32, u32)>) -> Self {
        let mass_a = a.iter().map(|&i| graph.count_a(i as usize)).sum();
        let mass_b = b.iter().map(|&j| graph.count_b(j as usize)).sum();
        SubProblem {
            graph,
            a,
            b,
            edges,
            mass_a,
            mass_b,
        }
    }

    /// Subproblem induced by the given vertices; scans all parent edges.
    pub fn induced(graph: &'g ConflictGraph, a: Vec<u32>, b: Vec<u32>) -> Self {
        let mut in_a = vec![false; graph.n_a()];
        let mut in_b = vec![false; graph.n_b()];
        a.iter().for_each(|&i| in_a[i as usize] = true);
        b.iter().for_each(|&j| in_b[j as usize] = true);
        let edges = graph
            .edges()
            .iter()
            .copied()
            .filter(|&(i, j)| in_a[i as usize] && in_b[j as usize])
            .collect();
        Self::with_edges(graph, a, b, edges)
    }

    pub fn n_vertices(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn total_mass(&self) -> u64 {
        self.mass_a + self.mass_b
    }
}

/// Scale `s` relating scaled integer weights to probabilities:
/// `value = scaled / s`.
fn scale_for(n_total: u64, mass_a: u64, mass_b: u64) -> Rational {
    if mass_a == 0 || mass_b == 0 {
        Rational::from_integer(n_total as i128)
    } else {
        Rational::new(
            n_total as i128 * mass_a as i128 * mass_b as i128,
            (mass_a + mass_b) as i128,
        )
    }
}

#[derive(Debug, Clone)]
pub struct LinOptResult {
    pub a_plus: Vec<u32>,
    pub a_minus: Vec<u32>,
    pub b_plus: Vec<u32>,
    pub b_minus: Vec<u32>,
    /// Integer LP weights `r'` on the subproblem's A and B lists (same order).
    pub weights_a: Vec<i64>,
    pub weights_b: Vec<i64>,
    /// Scaled dual values: `z = value / scale`. Aligned with the subproblem's
    /// edge list, A list and B list.
    pub z_edges: Vec<i64>,
    pub z_a: Vec<i64>,
    pub z_b: Vec<i64>,
    pub scale: Rational,
    pub flow_value: i64,
    /// True iff the uniform base-case probabilities are optimal.
    pub trivial: bool,
}

impl LinOptResult {
    pub fn z_edge(&self, k: usize) -> Rational {
        Rational::from_integer(self.z_edges[k] as i128) / self.scale
    }

    pub fn z_vertex_a(&self, k: usize) -> Rational {
        Rational::from_integer(self.z_a[k] as i128) / self.scale
    }

    pub fn z_vertex_b(&self, k: usize) -> Rational {
        Rational::from_integer(self.z_b[k] as i128) / self.scale
    }

    /// Weight `r'` of the chosen independent set `A+ u B+`.
    pub fn independent_set_weight(&self, sub: &SubProblem<'_>) -> i128 {
        let plus_a: std::collections::HashSet<u32> = self.a_plus.iter().copied().collect();
        let plus_b: std::collections::HashSet<u32> = self.b_plus.iter().copied().collect();
        let wa: i128 = sub
            .a
            .iter()
            .zip(&self.weights_a)
            .filter(|(i, _)| plus_a.contains(i))
            .map(|(_, &w)| w as i128)
            .sum();
        let wb: i128 = sub
            .b
            .iter()
            .zip(&self.weights_b)
            .filter(|(j, _)| plus_b.contains(j))
            .map(|(_, &w)| w as i128)
            .sum();
        wa + wb
    }

    /// Sum of all dual values, in probability units.
    pub fn z_total(&self) -> Rational {
        let total: i128 = self
            .z_edges
            .iter()
            .chain(&self.z_a)
            .chain(&self.z_b)
            .map(|&z| z as i128)
            .sum();
        Rational::from_integer(total) / self.scale
    }
}

pub fn lin_opt(sub: &SubProblem<'_>) -> Result<LinOptResult> {
    let g = sub.graph;
    if sub.n_vertices() == 0 || sub.total_mass() == 0 {
        return Err(Error::Invalid("LinOpt on an empty subproblem".into()));
    }
    let (ca, cb) = (sub.mass_a, sub.mass_b);
    let scale = scale_for(g.total_count(), ca, cb);

    // One class absent: no edges, r_v = p_v, and y = 1 on the present class
    // is optimal with z_v = p_v.
    if ca == 0 || cb == 0 {
        if !sub.edges.is_empty() {
            return Err(Error::Internal("edges in a one-sided subproblem".into()));
        }
        let weights_a: Vec<i64> = sub.a.iter().map(|&i| g.count_a(i as usize) as i64).collect();
        let weights_b: Vec<i64> = sub.b.iter().map(|&j| g.count_b(j as usize) as i64).collect();
        return Ok(LinOptResult {
            a_plus: sub.a.clone(),
            a_minus: Vec::new(),
            b_plus: sub.b.clone(),
            b_minus: Vec::new(),
            z_a: weights_a.clone(),
            z_b: weights_b.clone(),
            weights_a,
            weights_b,
            z_edges: Vec::new(),
            scale,
            flow_value: 0,
            trivial: true,
        });
    }

    let na = sub.a.len();
    let nb = sub.b.len();
    let mut local_a = vec![u32::MAX; g.n_a()];
    let mut local_b = vec![u32::MAX; g.n_b()];
    for (k, &i) in sub.a.iter().enumerate() {
        local_a[i as usize] = k as u32;
    }
    for (k, &j) in sub.b.iter().enumerate() {
        local_b[j as usize] = k as u32;
    }

    let cb_i = i64::try_from(cb).map_err(|_| Error::Overflow("class mass"))?;
    let ca_i = i64::try_from(ca).map_err(|_| Error::Overflow("class mass"))?;
    let mut weights_a = Vec::with_capacity(na);
    let mut weights_b = Vec::with_capacity(nb);
    let sink = na + nb + 1;
    let mut net = FlowNetwork::<i64>::with_capacity(sink + 1, na + nb + sub.edges.len())?;
    for (k, &i) in sub.a.iter().enumerate() {
        let w = (g.count_a(i as usize) as i64)
            .checked_mul(cb_i)
            .ok_or(Error::Overflow("scaled weight"))?;
        weights_a.push(w);
        net.add_arc(0, 1 + k, w)?;
    }
    for (k, &j) in sub.b.iter().enumerate() {
        let w = (g.count_b(j as usize) as i64)
            .checked_mul(ca_i)
            .ok_or(Error::Overflow("scaled weight"))?;
        weights_b.push(w);
        net.add_arc(1 + na + k, sink, w)?;
    }
    let inf = net.infinite_capacity()?;
    for &(i, j) in &sub.edges {
        let (la, lb) = (local_a[i as usize], local_b[j as usize]);
        if la == u32::MAX || lb == u32::MAX {
            return Err(Error::Internal(format!(
                "edge ({i}, {j}) leaves the subproblem"
            )));
        }
        net.add_arc(1 + la as usize, 1 + na + lb as usize, inf)?;
    }

    let flow = max_flow(&net)?;
    let reach = &flow.source_reachable;

    let mut a_plus = Vec::new();
    let mut a_minus = Vec::new();
    for (k, &i) in sub.a.iter().enumerate() {
        if reach[1 + k] {
            a_plus.push(i);
        } else {
            a_minus.push(i);
        }
    }
    let mut b_plus = Vec::new();
    let mut b_minus = Vec::new();
    for (k, &j) in sub.b.iter().enumerate() {
        if reach[1 + na + k] {
            b_minus.push(j);
        } else {
            b_plus.push(j);
        }
    }

    // Tight cover: z on an edge is its flow, z on a vertex is the unused part
    // of its weight, so (M^T z)_v = r'_v for every v.
    let z_a: Vec<i64> = weights_a
        .iter()
        .zip(&flow.flow[..na])
        .map(|(&w, &f)| w - f)
        .collect();
    let z_b: Vec<i64> = weights_b
        .iter()
        .zip(&flow.flow[na..na + nb])
        .map(|(&w, &f)| w - f)
        .collect();
    let z_edges = flow.flow[na + nb..].to_vec();

    let mass = |list: &[u32], count: &dyn Fn(usize) -> u64| -> u128 {
        list.iter().map(|&v| count(v as usize) as u128).sum()
    };
    let plus = mass(&a_plus, &|i| g.count_a(i)) * mass(&b_plus, &|j| g.count_b(j));
    let minus = mass(&a_minus, &|i| g.count_a(i)) * mass(&b_minus, &|j| g.count_b(j));
    debug_assert!(plus >= minus, "LinOpt split violates P(A+)P(B+) >= P(A-)P(B-)");
    if plus < minus {
        return Err(Error::Internal(
            "independent set lighter than both class indicators".into(),
        ));
    }
    let trivial = plus <= minus;
    debug_assert_eq!(trivial, flow.value as u128 >= ca as u128 * cb as u128);

    Ok(LinOptResult {
        a_plus,
        a_minus,
        b_plus,
        b_minus,
        weights_a,
        weights_b,
        z_edges,
        z_a,
        z_b,
        scale,
        flow_value: flow.value,
        trivial,
    })
}

/// Checks the trivial-branch identities exactly: `z >= 0`, `1^T z` equals
/// `P(A u B)`, and every vertex is covered with equality by its weight.
pub fn check_trivial_identities(sub: &SubProblem<'_>, res: &LinOptResult) -> bool {
    let g = sub.graph;
    let n = g.total_count() as i128;
    if res.z_edges.iter().chain(&res.z_a).chain(&res.z_b).any(|&z| z < 0) {
        return false;
    }
    if res.z_total() != Rational::new(sub.total_mass() as i128, n) {
        return false;
    }
    let mut cover_a = res.z_a.clone();
    let mut cover_b = res.z_b.clone();
    let pos_a: std::collections::HashMap<u32, usize> =
        sub.a.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let pos_b: std::collections::HashMap<u32, usize> =
        sub.b.iter().enumerate().map(|(k, &j)| (j, k)).collect();
    for (k, &(i, j)) in sub.edges.iter().enumerate() {
        cover_a[pos_a[&i]] += res.z_edges[k];
        cover_b[pos_b[&j]] += res.z_edges[k];
    }
    // q_v * (M^T z)_v = p_v with q the base-case ratio.
    let total = sub.total_mass() as i128;
    let ok_side = |cover: &[i64], list: &[u32], class_mass: u64, count: &dyn Fn(usize) -> u64| {
        let q = Rational::new(class_mass as i128, total);
        cover.iter().zip(list).all(|(&c, &v)| {
            let lhs = q * Rational::from_integer(c as i128) / res.scale;
            lhs == Rational::new(count(v as usize) as i128, n)
        })
    };
    let a_ok = sub.mass_a == 0 || ok_side(&cover_a, &sub.a, sub.mass_a, &|i| g.count_a(i));
    let b_ok = sub.mass_b == 0 || ok_side(&cover_b, &sub.b, sub.mass_b, &|j| g.count_b(j));
    a_ok && b_ok && !res.scale.is_zero()
}
