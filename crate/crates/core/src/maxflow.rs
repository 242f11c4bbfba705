//! Maximum flow / minimum cut.
//!
//! [`max_flow`] runs Dinic's algorithm (BFS level graph plus blocking flow
//! with an explicit path stack) over exact `i64` capacities. The engine is
//! generic over [`Capacity`], so the Frank-Wolfe reference solver drives the
//! same code with `f64` capacities. [`edmonds_karp`] is a plain shortest
//! augmenting path implementation kept as an independent check.
//!
//! Source is node `0`, sink is node `n - 1`. After termination the source
//! side of the returned cut is the set of nodes reachable from the source in
//! the residual graph, i.e. the minimum cut closest to the source.

use std::collections::VecDeque;
use std::fmt::Debug;

use crate::error::{Error, Result};

pub trait Capacity: Copy + PartialOrd + Debug + Send + Sync {
    const ZERO: Self;
    fn add(self, other: Self) -> Result<Self>;
    fn sub(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
    fn is_valid(self) -> bool;
}

impl Capacity for i64 {
    const ZERO: Self = 0;

    fn add(self, other: Self) -> Result<Self> {
        self.checked_add(other).ok_or(Error::Overflow("flow arithmetic"))
    }

    fn sub(self, other: Self) -> Self {
        self - other
    }

    fn is_valid(self) -> bool {
        self >= 0
    }
}

impl Capacity for f64 {
    const ZERO: Self = 0.0;

    fn add(self, other: Self) -> Result<Self> {
        let s = self + other;
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::Overflow("floating flow arithmetic"))
        }
    }

    fn sub(self, other: Self) -> Self {
        self - other
    }

    fn is_valid(self) -> bool {
        self >= 0.0 && self.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc<C> {
    pub from: u32,
    pub to: u32,
    pub cap: C,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork<C> {
    n: usize,
    arcs: Vec<Arc<C>>,
}

impl<C: Capacity> FlowNetwork<C> {
    /// Network with `n >= 2` nodes; source `0`, sink `n - 1`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid("flow network needs a source and a sink".into()));
        }
        if n > u32::MAX as usize {
            return Err(Error::Overflow("node index"));
        }
        Ok(FlowNetwork { n, arcs: Vec::new() })
    }

    pub fn with_capacity(n: usize, arcs: usize) -> Result<Self> {
        let mut net = Self::new(n)?;
        net.arcs.reserve(arcs);
        Ok(net)
    }

    pub fn source(&self) -> usize {
        0
    }

    pub fn sink(&self) -> usize {
        self.n - 1
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn arcs(&self) -> &[Arc<C>] {
        &self.arcs
    }

    /// Adds an arc and returns its index.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: C) -> Result<usize> {
        if from >= self.n || to >= self.n {
            return Err(Error::Invalid(format!("arc ({from}, {to}) out of range")));
        }
        if to == self.source() || from == self.sink() {
            return Err(Error::Invalid(format!(
                "arc ({from}, {to}) enters the source or leaves the sink"
            )));
        }
        if !cap.is_valid() {
            return Err(Error::Invalid(format!("invalid capacity {cap:?}")));
        }
        self.arcs.push(Arc {
            from: from as u32,
            to: to as u32,
            cap,
        });
        Ok(self.arcs.len() - 1)
    }

    /// Capacity that strictly exceeds every feasible flow: one more than the
    /// total capacity leaving the source.
    pub fn source_capacity(&self) -> Result<C> {
        let mut total = C::ZERO;
        for a in self.arcs.iter().filter(|a| a.from == 0) {
            total = total.add(a.cap)?;
        }
        Ok(total)
    }
}

impl FlowNetwork<i64> {
    pub fn infinite_capacity(&self) -> Result<i64> {
        self.source_capacity()?
            .checked_add(1)
            .ok_or(Error::Overflow("infinite capacity sentinel"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult<C> {
    pub value: C,
    /// Flow on each input arc, by arc index.
    pub flow: Vec<C>,
    /// Nodes reachable from the source in the final residual graph.
    pub source_reachable: Vec<bool>,
}

/// Residual graph in CSR form. Each input arc `k` owns the forward slot
/// `fwd[k]`; its reverse sits at `rev[fwd[k]]`.
struct Residual<C> {
    start: Vec<u32>,
    to: Vec<u32>,
    rev: Vec<u32>,
    res: Vec<C>,
    fwd: Vec<u32>,
}

impl<C: Capacity> Residual<C> {
    fn build(net: &FlowNetwork<C>) -> Result<Self> {
        let n = net.n;
        let m2 = net.arcs.len() * 2;
        if m2 > u32::MAX as usize {
            return Err(Error::Overflow("arc index"));
        }
        let mut deg = vec![0u32; n + 1];
        for a in &net.arcs {
            deg[a.from as usize + 1] += 1;
            deg[a.to as usize + 1] += 1;
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let start = deg.clone();
        let mut fill = deg;
        let mut to = vec![0u32; m2];
        let mut rev = vec![0u32; m2];
        let mut res = vec![C::ZERO; m2];
        let mut fwd = vec![0u32; net.arcs.len()];
        for (k, a) in net.arcs.iter().enumerate() {
            let u = fill[a.from as usize];
            fill[a.from as usize] += 1;
            let v = fill[a.to as usize];
            fill[a.to as usize] += 1;
            to[u as usize] = a.to;
            res[u as usize] = a.cap;
            rev[u as usize] = v;
            to[v as usize] = a.from;
            res[v as usize] = C::ZERO;
            rev[v as usize] = u;
            fwd[k] = u;
        }
        Ok(Residual {
            start,
            to,
            rev,
            res,
            fwd,
        })
    }

    fn reachable(&self, s: usize, tol: C) -> Vec<bool> {
        let n = self.start.len() - 1;
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        seen[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for e in self.start[u] as usize..self.start[u + 1] as usize {
                let v = self.to[e] as usize;
                if !seen[v] && self.res[e] > tol {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    fn finish(self, net: &FlowNetwork<C>, tol: C) -> Result<FlowResult<C>> {
        let flow: Vec<C> = net
            .arcs
            .iter()
            .zip(&self.fwd)
            .map(|(a, &e)| a.cap.sub(self.res[e as usize]))
            .collect();
        let mut value = C::ZERO;
        for (a, &f) in net.arcs.iter().zip(&flow) {
            if a.from == 0 {
                value = value.add(f)?;
            }
        }
        let source_reachable = self.reachable(0, tol);
        Ok(FlowResult {
            value,
            flow,
            source_reachable,
        })
    }
}

/// Exact maximum flow with Dinic's algorithm.
pub fn max_flow(net: &FlowNetwork<i64>) -> Result<FlowResult<i64>> {
    dinic(net, 0)
}

/// Dinic over any capacity type. Residual capacities at or below `tol` are
/// treated as saturated; pass zero for exact types.
pub fn dinic<C: Capacity>(net: &FlowNetwork<C>, tol: C) -> Result<FlowResult<C>> {
    // Every augmentation is bounded by the source capacity; make sure sums of
    // those stay representable before doing any work.
    net.source_capacity()?;
    let mut g = Residual::build(net)?;
    let n = net.n;
    let (s, t) = (0usize, n - 1);
    let mut level = vec![u32::MAX; n];
    let mut iter = vec![0u32; n];
    let mut queue = VecDeque::with_capacity(n);
    let mut path: Vec<u32> = Vec::new();

    loop {
        level.iter_mut().for_each(|l| *l = u32::MAX);
        level[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for e in g.start[u] as usize..g.start[u + 1] as usize {
                let v = g.to[e] as usize;
                if level[v] == u32::MAX && g.res[e] > tol {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if level[t] == u32::MAX {
            break;
        }
        iter.copy_from_slice(&g.start[..n]);

        // Blocking flow. `path` holds residual slots from s to the current node.
        path.clear();
        let mut u = s;
        loop {
            if u == t {
                let mut bottleneck = g.res[path[0] as usize];
                for &e in &path[1..] {
                    bottleneck = bottleneck.min(g.res[e as usize]);
                }
                let mut cut_at = path.len();
                for (k, &e) in path.iter().enumerate() {
                    let e = e as usize;
                    g.res[e] = g.res[e].sub(bottleneck);
                    let r = g.rev[e] as usize;
                    g.res[r] = g.res[r].add(bottleneck)?;
                    if cut_at == path.len() && !(g.res[e] > tol) {
                        cut_at = k;
                    }
                }
                // Retreat to the tail of the first saturated arc.
                path.truncate(cut_at);
                u = match path.last() {
                    Some(&e) => g.to[e as usize] as usize,
                    None => s,
                };
                continue;
            }
            let end = g.start[u + 1];
            let mut advanced = false;
            while iter[u] < end {
                let e = iter[u] as usize;
                let v = g.to[e] as usize;
                if g.res[e] > tol && level[v] == level[u] + 1 {
                    path.push(e as u32);
                    u = v;
                    advanced = true;
                    break;
                }
                iter[u] += 1;
            }
            if advanced {
                continue;
            }
            // Dead end: drop u from the level graph and back up.
            level[u] = u32::MAX;
            match path.pop() {
                Some(e) => {
                    let prev = g.to[g.rev[e as usize] as usize] as usize;
                    iter[prev] += 1;
                    u = prev;
                }
                None => break,
            }
        }
    }
    g.finish(net, tol)
}

/// Shortest augmenting paths, one at a time. Quadratic-ish; for tests and
/// small instances.
pub fn edmonds_karp<C: Capacity>(net: &FlowNetwork<C>, tol: C) -> Result<FlowResult<C>> {
    net.source_capacity()?;
    let mut g = Residual::build(net)?;
    let n = net.n;
    let (s, t) = (0usize, n - 1);
    let mut pred = vec![u32::MAX; n];
    loop {
        pred.iter_mut().for_each(|p| *p = u32::MAX);
        let mut queue = VecDeque::new();
        queue.push_back(s);
        let mut found = false;
        'bfs: while let Some(u) = queue.pop_front() {
            for e in g.start[u] as usize..g.start[u + 1] as usize {
                let v = g.to[e] as usize;
                if v != s && pred[v] == u32::MAX && g.res[e] > tol {
                    pred[v] = e as u32;
                    if v == t {
                        found = true;
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
        if !found {
            break;
        }
        let mut bottleneck: Option<C> = None;
        let mut v = t;
        while v != s {
            let e = pred[v] as usize;
            bottleneck = Some(match bottleneck {
                None => g.res[e],
                Some(b) => b.min(g.res[e]),
            });
            v = g.to[g.rev[e] as usize] as usize;
        }
        let b = bottleneck.expect("path has at least one arc");
        let mut v = t;
        while v != s {
            let e = pred[v] as usize;
            g.res[e] = g.res[e].sub(b);
            let r = g.rev[e] as usize;
            g.res[r] = g.res[r].add(b)?;
            v = g.to[r] as usize;
        }
    }
    g.finish(net, tol)
}
