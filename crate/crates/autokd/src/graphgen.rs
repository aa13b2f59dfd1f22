//! Random graph generators and the hierarchical operation graph.
//!
//! Student architectures come from a three-level hierarchy: a top-level graph
//! whose nodes each expand into an independently sampled mid-level graph,
//! whose nodes in turn expand into bottom-level graphs of operation units.
//! Each level is drawn from one of three undirected random-graph families
//! (Erdős–Rényi, Watts–Strogatz, Barabási–Albert), converted to a DAG by
//! orienting edges from low to high node index, and wired to a fresh
//! source/sink pair. Flattening contracts the intermediate junctions so the
//! result is a single acyclic graph with one source, one sink, and exactly
//! `top.n * mid.n * bottom.n` operation units.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of bottom-level operation units in one sample.
pub const DEFAULT_UNIT_CAP: usize = 64;

/// The three supported random-graph families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFamily {
    Er,
    Ws,
    Ba,
}

impl GraphFamily {
    pub const ALL: [GraphFamily; 3] = [GraphFamily::Er, GraphFamily::Ws, GraphFamily::Ba];

    /// Smallest node count on which the family is well defined.
    pub fn min_nodes(self) -> usize {
        match self {
            GraphFamily::Er => 1,
            GraphFamily::Ws => 3, // needs an even k with 0 < k < n
            GraphFamily::Ba => 2, // needs 1 <= m < n
        }
    }
}

/// Parameters of one per-level graph generator.
///
/// All family parameters are always present; only the ones belonging to
/// `family` are meaningful, the rest are carried along and ignored. This keeps
/// the type a fixed-width point for the density model in [`crate::bohb`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphGenSpec {
    pub family: GraphFamily,
    /// Node count of the sampled graph.
    pub n: usize,
    /// ER: independent edge probability.
    pub er_p: f64,
    /// WS: ring-lattice degree, even, `< n`.
    pub ws_k: usize,
    /// WS: per-edge rewiring probability.
    pub ws_beta: f64,
    /// BA: edges attached by each arriving node, `< n`.
    pub ba_m: usize,
}

impl GraphGenSpec {
    pub fn er(n: usize, p: f64) -> Self {
        GraphGenSpec {
            family: GraphFamily::Er,
            n,
            er_p: p,
            ws_k: 2,
            ws_beta: 0.0,
            ba_m: 1,
        }
    }

    pub fn ws(n: usize, k: usize, beta: f64) -> Self {
        GraphGenSpec {
            family: GraphFamily::Ws,
            n,
            er_p: 0.5,
            ws_k: k,
            ws_beta: beta,
            ba_m: 1,
        }
    }

    pub fn ba(n: usize, m: usize) -> Self {
        GraphGenSpec {
            family: GraphFamily::Ba,
            n,
            er_p: 0.5,
            ws_k: 2,
            ws_beta: 0.0,
            ba_m: m,
        }
    }

    /// Checks the invariants of the active family.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Parameter("graph node count must be >= 1".into()));
        }
        match self.family {
            GraphFamily::Er => {
                if !(0.0..=1.0).contains(&self.er_p) {
                    return Err(Error::Parameter(format!(
                        "er_p must lie in [0,1], got {}",
                        self.er_p
                    )));
                }
            }
            GraphFamily::Ws => {
                if self.ws_k == 0 || self.ws_k % 2 != 0 || self.ws_k >= self.n {
                    return Err(Error::Parameter(format!(
                        "ws_k must be even with 0 < k < n, got k={} n={}",
                        self.ws_k, self.n
                    )));
                }
                if !(0.0..=1.0).contains(&self.ws_beta) {
                    return Err(Error::Parameter(format!(
                        "ws_beta must lie in [0,1], got {}",
                        self.ws_beta
                    )));
                }
            }
            GraphFamily::Ba => {
                if self.ba_m == 0 || self.ba_m >= self.n {
                    return Err(Error::Parameter(format!(
                        "ba_m must satisfy 1 <= m < n, got m={} n={}",
                        self.ba_m, self.n
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws one undirected graph from the active family.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<UndirectedGraph> {
        match self.family {
            GraphFamily::Er => sample_er(self.n, self.er_p, rng),
            GraphFamily::Ws => sample_ws(self.n, self.ws_k, self.ws_beta, rng),
            GraphFamily::Ba => sample_ba(self.n, self.ba_m, rng),
        }
    }
}

/// The full search point: three per-level generator specs plus the two
/// distillation hyperparameters optimized alongside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorHyperparams {
    pub top: GraphGenSpec,
    pub mid: GraphGenSpec,
    pub bottom: GraphGenSpec,
    /// Softmax temperature, in `[1, 10]`.
    pub kd_temperature: f64,
    /// Mixture weight between cross-entropy and the KL term, in `[0, 1]`.
    pub kd_weight: f64,
}

impl GeneratorHyperparams {
    /// Total operation units a sample will contain.
    pub fn unit_count(&self) -> usize {
        self.top.n * self.mid.n * self.bottom.n
    }

    pub fn validate(&self, unit_cap: usize) -> Result<()> {
        self.top.validate()?;
        self.mid.validate()?;
        self.bottom.validate()?;
        if !(1.0..=10.0).contains(&self.kd_temperature) {
            return Err(Error::Parameter(format!(
                "kd_temperature must lie in [1,10], got {}",
                self.kd_temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.kd_weight) {
            return Err(Error::Parameter(format!(
                "kd_weight must lie in [0,1], got {}",
                self.kd_weight
            )));
        }
        if self.unit_count() > unit_cap {
            return Err(Error::Parameter(format!(
                "operation-unit count {} exceeds cap {}",
                self.unit_count(),
                unit_cap
            )));
        }
        Ok(())
    }
}

/// Simple undirected graph: node count plus a set of `(low, high)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl UndirectedGraph {
    pub fn new(n: usize) -> Self {
        UndirectedGraph {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Inserts `{i, j}`; returns false for self-loops and duplicates.
    pub fn add_edge(&mut self, i: usize, j: usize) -> bool {
        assert!(i < self.n && j < self.n, "edge endpoint out of range");
        if i == j {
            return false;
        }
        self.edges.insert((i.min(j), i.max(j)))
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        self.edges.remove(&(i.min(j), i.max(j)))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == i || b == i)
            .count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }
}

/// Erdős–Rényi G(n, p): each of the n(n-1)/2 possible edges appears
/// independently with probability `p`.
pub fn sample_er<R: Rng>(n: usize, p: f64, rng: &mut R) -> Result<UndirectedGraph> {
    if n == 0 {
        return Err(Error::Parameter("sample_er: n must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "sample_er: p must lie in [0,1], got {p}"
        )));
    }
    let mut g = UndirectedGraph::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                g.add_edge(i, j);
            }
        }
    }
    Ok(g)
}

/// Watts–Strogatz small world: a ring lattice where every node is joined to
/// its `k/2` nearest neighbors on each side, then each lattice edge is
/// rewired with probability `beta` to a uniformly chosen non-duplicate,
/// non-self target. The edge count is always `n * k / 2`.
pub fn sample_ws<R: Rng>(n: usize, k: usize, beta: f64, rng: &mut R) -> Result<UndirectedGraph> {
    if k == 0 || k % 2 != 0 || k >= n {
        return Err(Error::Parameter(format!(
            "sample_ws: k must be even with 0 < k < n, got k={k} n={n}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Parameter(format!(
            "sample_ws: beta must lie in [0,1], got {beta}"
        )));
    }
    let mut g = UndirectedGraph::new(n);
    for dist in 1..=(k / 2) {
        for i in 0..n {
            g.add_edge(i, (i + dist) % n);
        }
    }
    // Rewire in the same deterministic order the lattice was built in.
    for dist in 1..=(k / 2) {
        for i in 0..n {
            let j = (i + dist) % n;
            if !g.has_edge(i, j) {
                continue; // already rewired away by an earlier step
            }
            if rng.random::<f64>() >= beta {
                continue;
            }
            if g.degree(i) == n - 1 {
                continue; // i is saturated, nothing to rewire to
            }
            let target = loop {
                let w = rng.random_range(0..n);
                if w != i && !g.has_edge(i, w) {
                    break w;
                }
            };
            g.remove_edge(i, j);
            g.add_edge(i, target);
        }
    }
    Ok(g)
}

/// Barabási–Albert preferential attachment: a clique seed on `m` nodes, then
/// each arriving node attaches `m` edges to distinct existing nodes chosen
/// with probability proportional to current degree (a degree of zero counts
/// as one so the single-node seed can attract its first edge). The edge count
/// is exactly `m(m-1)/2 + m(n-m)`.
pub fn sample_ba<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<UndirectedGraph> {
    if m == 0 || m >= n {
        return Err(Error::Parameter(format!(
            "sample_ba: m must satisfy 1 <= m < n, got m={m} n={n}"
        )));
    }
    let mut g = UndirectedGraph::new(n);
    for i in 0..m {
        for j in (i + 1)..m {
            g.add_edge(i, j);
        }
    }
    let mut deg = g.degrees();
    for v in m..n {
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        for _ in 0..m {
            let total: u64 = (0..v)
                .filter(|u| !chosen.contains(u))
                .map(|u| deg[u].max(1) as u64)
                .sum();
            let mut ticket = rng.random_range(0..total);
            let mut pick = usize::MAX;
            for u in 0..v {
                if chosen.contains(&u) {
                    continue;
                }
                let w = deg[u].max(1) as u64;
                if ticket < w {
                    pick = u;
                    break;
                }
                ticket -= w;
            }
            chosen.push(pick);
        }
        for &u in &chosen {
            g.add_edge(v, u);
            deg[u] += 1;
            deg[v] += 1;
        }
    }
    Ok(g)
}

/// One level of the hierarchy, directed and wired to a private source/sink.
///
/// Interior nodes are `0..n`; the source is node `n` and the sink `n + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagFragment {
    pub n: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl DagFragment {
    pub fn source(&self) -> usize {
        self.n
    }

    pub fn sink(&self) -> usize {
        self.n + 1
    }
}

/// Directs every edge `{i, j}` from the lower to the higher index (which can
/// never create a cycle), then attaches a fresh source to every node left
/// with in-degree zero and a fresh sink after every node with out-degree
/// zero. Isolated nodes get both.
pub fn to_dag(g: &UndirectedGraph) -> DagFragment {
    let n = g.n();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut in_deg = vec![0usize; n];
    let mut out_deg = vec![0usize; n];
    for (a, b) in g.edges() {
        edges.insert((a, b));
        out_deg[a] += 1;
        in_deg[b] += 1;
    }
    let source = n;
    let sink = n + 1;
    for v in 0..n {
        if in_deg[v] == 0 {
            edges.insert((source, v));
        }
        if out_deg[v] == 0 {
            edges.insert((v, sink));
        }
    }
    DagFragment { n, edges }
}

/// What a node in the flattened graph is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Source,
    Sink,
    /// An operation unit, addressed by its position in the hierarchy.
    Unit {
        top: usize,
        mid: usize,
        bottom: usize,
    },
}

/// The flattened acyclic operation graph a student model is built from.
///
/// Node ids are canonical: the source is 0, units come next sorted by their
/// `(top, mid, bottom)` path, and the sink is last. Edges are sorted. Two
/// samples with the same seed are therefore identical, byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchGraph {
    pub nodes: Vec<NodeKind>,
    pub edges: Vec<(usize, usize)>,
    pub source: usize,
    pub sink: usize,
}

impl ArchGraph {
    pub fn unit_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|k| matches!(k, NodeKind::Unit { .. }))
            .count()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn predecessors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, b)| b == v)
            .map(|&(a, _)| a)
            .collect()
    }

    pub fn successors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(a, _)| a == v)
            .map(|&(_, b)| b)
            .collect()
    }

    /// Kahn's algorithm with an index-ordered ready set, so the order is a
    /// deterministic function of the graph. Errors if a cycle is present.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut in_deg = vec![0usize; n];
        for &(_, b) in &self.edges {
            in_deg[b] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| in_deg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&v) = ready.iter().next() {
            ready.remove(&v);
            order.push(v);
            for w in self.successors(v) {
                in_deg[w] -= 1;
                if in_deg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Internal("operation graph contains a cycle".into()));
        }
        Ok(order)
    }

    /// Full structural check: acyclic, exactly one source and one sink, every
    /// node reachable from the source, and the sink reachable from every node.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for &(a, b) in &self.edges {
            if a >= n || b >= n {
                return Err(Error::Internal("edge endpoint out of range".into()));
            }
        }
        self.topo_order()?;
        let mut in_deg = vec![0usize; n];
        let mut out_deg = vec![0usize; n];
        for &(a, b) in &self.edges {
            out_deg[a] += 1;
            in_deg[b] += 1;
        }
        let sources: Vec<usize> = (0..n).filter(|&v| in_deg[v] == 0).collect();
        let sinks: Vec<usize> = (0..n).filter(|&v| out_deg[v] == 0).collect();
        if sources != [self.source] {
            return Err(Error::Internal(format!(
                "expected unique source {}, found in-degree-0 nodes {:?}",
                self.source, sources
            )));
        }
        if sinks != [self.sink] {
            return Err(Error::Internal(format!(
                "expected unique sink {}, found out-degree-0 nodes {:?}",
                self.sink, sinks
            )));
        }
        let mut fwd = vec![false; n];
        let mut stack = vec![self.source];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut fwd[v], true) {
                continue;
            }
            stack.extend(self.successors(v));
        }
        if fwd.iter().any(|r| !r) {
            return Err(Error::Internal("node unreachable from source".into()));
        }
        let mut bwd = vec![false; n];
        let mut stack = vec![self.sink];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut bwd[v], true) {
                continue;
            }
            stack.extend(self.predecessors(v));
        }
        if bwd.iter().any(|r| !r) {
            return Err(Error::Internal("sink unreachable from some node".into()));
        }
        Ok(())
    }
}

// Assembly-time node: junctions are the per-fragment sources/sinks that get
// contracted away before the canonical relabeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TmpNode {
    Junction,
    GlobalSource,
    GlobalSink,
    Unit { top: usize, mid: usize, bottom: usize },
}

/// Samples the three-level hierarchy described by `theta` and flattens it.
///
/// Each top node expands into an independent mid-level sample and each mid
/// node into an independent bottom-level sample. A parent edge `u -> v`
/// becomes an edge from the sink of `u`'s child graph to the source of `v`'s
/// child graph; all intermediate sources/sinks are then contracted so only
/// operation units and the one global source/sink remain.
pub fn assemble<R: Rng>(
    theta: &GeneratorHyperparams,
    unit_cap: usize,
    rng: &mut R,
) -> Result<ArchGraph> {
    theta.validate(unit_cap)?;

    let top_frag = to_dag(&theta.top.sample(rng)?);
    let mut mid_frags = Vec::with_capacity(theta.top.n);
    let mut bottom_frags = Vec::with_capacity(theta.top.n);
    for _ in 0..theta.top.n {
        mid_frags.push(to_dag(&theta.mid.sample(rng)?));
        let mut row = Vec::with_capacity(theta.mid.n);
        for _ in 0..theta.mid.n {
            row.push(to_dag(&theta.bottom.sample(rng)?));
        }
        bottom_frags.push(row);
    }

    let mut nodes: Vec<TmpNode> = Vec::new();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let push = |nodes: &mut Vec<TmpNode>, kind: TmpNode| -> usize {
        nodes.push(kind);
        nodes.len() - 1
    };

    let gsrc = push(&mut nodes, TmpNode::GlobalSource);
    let gsnk = push(&mut nodes, TmpNode::GlobalSink);

    // Entry/exit junction ids per mid fragment (indexed by top node), and per
    // bottom fragment (indexed by top, mid node).
    let mut mid_io = Vec::with_capacity(theta.top.n);
    let mut bottom_io = Vec::with_capacity(theta.top.n);
    let mut unit_ids = Vec::with_capacity(theta.top.n);
    for t in 0..theta.top.n {
        let m_src = push(&mut nodes, TmpNode::Junction);
        let m_snk = push(&mut nodes, TmpNode::Junction);
        mid_io.push((m_src, m_snk));
        let mut io_row = Vec::with_capacity(theta.mid.n);
        let mut unit_row = Vec::with_capacity(theta.mid.n);
        for m in 0..theta.mid.n {
            let b_src = push(&mut nodes, TmpNode::Junction);
            let b_snk = push(&mut nodes, TmpNode::Junction);
            io_row.push((b_src, b_snk));
            let units: Vec<usize> = (0..theta.bottom.n)
                .map(|b| {
                    push(
                        &mut nodes,
                        TmpNode::Unit {
                            top: t,
                            mid: m,
                            bottom: b,
                        },
                    )
                })
                .collect();
            unit_row.push(units);
        }
        bottom_io.push(io_row);
        unit_ids.push(unit_row);
    }

    // Wire each level. An interior endpoint maps to its child fragment's
    // entry junction (when it is an edge head) or exit junction (edge tail).
    for &(a, b) in &top_frag.edges {
        let from = if a == top_frag.source() { gsrc } else { mid_io[a].1 };
        let to = if b == top_frag.sink() { gsnk } else { mid_io[b].0 };
        edges.insert((from, to));
    }
    for t in 0..theta.top.n {
        let frag = &mid_frags[t];
        for &(a, b) in &frag.edges {
            let from = if a == frag.source() {
                mid_io[t].0
            } else {
                bottom_io[t][a].1
            };
            let to = if b == frag.sink() {
                mid_io[t].1
            } else {
                bottom_io[t][b].0
            };
            edges.insert((from, to));
        }
        for m in 0..theta.mid.n {
            let frag = &bottom_frags[t][m];
            for &(a, b) in &frag.edges {
                let from = if a == frag.source() {
                    bottom_io[t][m].0
                } else {
                    unit_ids[t][m][a]
                };
                let to = if b == frag.sink() {
                    bottom_io[t][m].1
                } else {
                    unit_ids[t][m][b]
                };
                edges.insert((from, to));
            }
        }
    }

    // Contract every junction: splice predecessors straight to successors.
    for j in 0..nodes.len() {
        if nodes[j] != TmpNode::Junction {
            continue;
        }
        let preds: Vec<usize> = edges.iter().filter(|&&(_, b)| b == j).map(|&(a, _)| a).collect();
        let succs: Vec<usize> = edges.iter().filter(|&&(a, _)| a == j).map(|&(_, b)| b).collect();
        edges.retain(|&(a, b)| a != j && b != j);
        for &p in &preds {
            for &s in &succs {
                edges.insert((p, s));
            }
        }
    }

    // Canonical relabel: source 0, units by path, sink last.
    let mut unit_order: Vec<(usize, (usize, usize, usize))> = nodes
        .iter()
        .enumerate()
        .filter_map(|(id, k)| match *k {
            TmpNode::Unit { top, mid, bottom } => Some((id, (top, mid, bottom))),
            _ => None,
        })
        .collect();
    unit_order.sort_by_key(|&(_, path)| path);

    let unit_total = unit_order.len();
    let mut relabel = vec![usize::MAX; nodes.len()];
    relabel[gsrc] = 0;
    for (new_idx, &(old_id, _)) in unit_order.iter().enumerate() {
        relabel[old_id] = new_idx + 1;
    }
    relabel[gsnk] = unit_total + 1;

    let mut out_nodes = Vec::with_capacity(unit_total + 2);
    out_nodes.push(NodeKind::Source);
    for &(_, (top, mid, bottom)) in &unit_order {
        out_nodes.push(NodeKind::Unit { top, mid, bottom });
    }
    out_nodes.push(NodeKind::Sink);

    let out_edges: BTreeSet<(usize, usize)> = edges
        .iter()
        .map(|&(a, b)| (relabel[a], relabel[b]))
        .collect();

    let graph = ArchGraph {
        nodes: out_nodes,
        edges: out_edges.into_iter().collect(),
        source: 0,
        sink: unit_total + 1,
    };
    graph.validate()?;
    Ok(graph)
}

/// Renders the graph as deterministic DOT text. One line per node, one line
/// per edge, so the counts in the text match the graph exactly.
pub fn export_dot(g: &ArchGraph) -> String {
    let mut out = String::new();
    out.push_str("digraph arch {\n");
    out.push_str("  rankdir=TB;\n");
    for (id, kind) in g.nodes.iter().enumerate() {
        match kind {
            NodeKind::Source => {
                let _ = writeln!(out, "  n{id} [label=\"source\", shape=diamond];");
            }
            NodeKind::Sink => {
                let _ = writeln!(out, "  n{id} [label=\"sink\", shape=diamond];");
            }
            NodeKind::Unit { top, mid, bottom } => {
                let _ = writeln!(out, "  n{id} [label=\"{top}/{mid}/{bottom}\", shape=box];");
            }
        }
    }
    for &(a, b) in &g.edges {
        let _ = writeln!(out, "  n{a} -> n{b};");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn er_extremes() {
        let g = sample_er(5, 1.0, &mut rng(1)).unwrap();
        assert_eq!(g.edge_count(), 10);
        let g = sample_er(5, 0.0, &mut rng(1)).unwrap();
        assert_eq!(g.edge_count(), 0);
        // n=1 is legal and yields the single-node graph.
        let g = sample_er(1, 0.7, &mut rng(1)).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn er_mean_edge_count_matches_binomial() {
        // 1000 seeds of G(100, 0.1): mean edge count within 3 standard errors
        // of p * n(n-1)/2 = 495.
        let (n, p, trials) = (100usize, 0.1f64, 1000usize);
        let pairs = (n * (n - 1) / 2) as f64;
        let mut total = 0usize;
        for seed in 0..trials {
            total += sample_er(n, p, &mut rng(seed as u64)).unwrap().edge_count();
        }
        let mean = total as f64 / trials as f64;
        let expect = p * pairs;
        let se = (pairs * p * (1.0 - p) / trials as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean {mean} vs expected {expect} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn ws_lattice_and_edge_count() {
        // beta = 0 leaves the ring untouched: a 6-cycle, all degrees 2.
        let g = sample_ws(6, 2, 0.0, &mut rng(3)).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!(g.degrees().iter().all(|&d| d == 2));

        let g = sample_ws(6, 4, 0.0, &mut rng(3)).unwrap();
        assert_eq!(g.edge_count(), 12);

        // Full rewiring preserves the count: n*k/2 = 40.
        for seed in 0..20 {
            let g = sample_ws(20, 4, 1.0, &mut rng(seed)).unwrap();
            assert_eq!(g.edge_count(), 40);
        }
    }

    #[test]
    fn ws_rejects_bad_k() {
        assert!(sample_ws(6, 3, 0.5, &mut rng(0)).is_err()); // odd
        assert!(sample_ws(6, 6, 0.5, &mut rng(0)).is_err()); // k >= n
        assert!(sample_ws(6, 0, 0.5, &mut rng(0)).is_err());
    }

    #[test]
    fn ba_edge_count_formula() {
        let g = sample_ba(10, 2, &mut rng(7)).unwrap();
        assert_eq!(g.edge_count(), 1 + 16);
        // n = m+1: clique seed plus one arrival -> triangle.
        let g = sample_ba(3, 2, &mut rng(7)).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert!(sample_ba(5, 5, &mut rng(0)).is_err());
        assert!(sample_ba(5, 0, &mut rng(0)).is_err());
    }

    #[test]
    fn ba_degrees_are_heavy_tailed() {
        // Preferential attachment concentrates degree: across 500 seeds the
        // mean maximum degree should exceed three times the mean degree.
        let (n, m, trials) = (200usize, 2usize, 500usize);
        let mut sum_max = 0.0;
        let mut sum_mean = 0.0;
        for seed in 0..trials {
            let g = sample_ba(n, m, &mut rng(seed as u64)).unwrap();
            let deg = g.degrees();
            sum_max += *deg.iter().max().unwrap() as f64;
            sum_mean += deg.iter().sum::<usize>() as f64 / n as f64;
        }
        let mean_max = sum_max / trials as f64;
        let mean_deg = sum_mean / trials as f64;
        assert!(
            mean_max > 3.0 * mean_deg,
            "mean max degree {mean_max} not > 3 * mean degree {mean_deg}"
        );
    }

    #[test]
    fn to_dag_orients_by_index() {
        let mut g = UndirectedGraph::new(4);
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        g.add_edge(2, 3);
        g.add_edge(0, 3);
        let d = to_dag(&g);
        let expected: BTreeSet<(usize, usize)> =
            [(0, 1), (1, 2), (2, 3), (0, 3), (4, 0), (3, 5)].into_iter().collect();
        assert_eq!(d.edges, expected);
    }

    #[test]
    fn to_dag_handles_isolated_nodes() {
        let g = UndirectedGraph::new(3);
        let d = to_dag(&g);
        // source -> {0,1,2} -> sink
        assert_eq!(d.edges.len(), 6);
        for v in 0..3 {
            assert!(d.edges.contains(&(d.source(), v)));
            assert!(d.edges.contains(&(v, d.sink())));
        }
    }

    fn theta_er(top_n: usize, mid_n: usize, bottom_n: usize, p: f64) -> GeneratorHyperparams {
        GeneratorHyperparams {
            top: GraphGenSpec::er(top_n, p),
            mid: GraphGenSpec::er(mid_n, p),
            bottom: GraphGenSpec::er(bottom_n, p),
            kd_temperature: 4.0,
            kd_weight: 0.5,
        }
    }

    #[test]
    fn assemble_unit_count_is_level_product() {
        let g = assemble(&theta_er(2, 2, 2, 0.6), DEFAULT_UNIT_CAP, &mut rng(11)).unwrap();
        assert_eq!(g.unit_count(), 8);

        let g = assemble(&theta_er(1, 1, 1, 0.5), DEFAULT_UNIT_CAP, &mut rng(11)).unwrap();
        assert_eq!(g.unit_count(), 1);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn assemble_is_deterministic_per_seed() {
        let theta = GeneratorHyperparams {
            top: GraphGenSpec::ws(4, 2, 0.4),
            mid: GraphGenSpec::ba(3, 2),
            bottom: GraphGenSpec::er(2, 0.7),
            kd_temperature: 2.0,
            kd_weight: 0.3,
        };
        let a = assemble(&theta, DEFAULT_UNIT_CAP, &mut rng(99)).unwrap();
        let b = assemble(&theta, DEFAULT_UNIT_CAP, &mut rng(99)).unwrap();
        assert_eq!(a, b);
        let c = assemble(&theta, DEFAULT_UNIT_CAP, &mut rng(100)).unwrap();
        assert_ne!(a, c); // different seed, different sample (overwhelmingly)
    }

    #[test]
    fn assemble_rejects_cap_violation() {
        let theta = theta_er(8, 8, 8, 0.5);
        match assemble(&theta, DEFAULT_UNIT_CAP, &mut rng(0)) {
            Err(Error::Parameter(_)) => {}
            other => panic!("expected parameter error, got {other:?}"),
        }
    }

    #[test]
    fn export_dot_counts_match() {
        let g = assemble(&theta_er(1, 1, 1, 0.5), DEFAULT_UNIT_CAP, &mut rng(1)).unwrap();
        let text = export_dot(&g);
        let node_lines = text.lines().filter(|l| l.contains("[label=")).count();
        let edge_lines = text.lines().filter(|l| l.contains("->")).count();
        assert_eq!(node_lines, 3);
        assert_eq!(edge_lines, 2);

        // Identical graphs produce identical text.
        assert_eq!(text, export_dot(&g));

        // Round-trip count check on a bigger sample.
        let g = assemble(&theta_er(3, 2, 2, 0.8), DEFAULT_UNIT_CAP, &mut rng(5)).unwrap();
        let text = export_dot(&g);
        let node_lines = text.lines().filter(|l| l.contains("[label=")).count();
        let edge_lines = text.lines().filter(|l| l.contains("->")).count();
        assert_eq!(node_lines, g.node_count());
        assert_eq!(edge_lines, g.edge_count());
    }

    // Any valid per-level spec, kept small enough for fast property runs.
    fn arb_spec() -> impl Strategy<Value = GraphGenSpec> {
        prop_oneof![
            (1usize..=8, 0.0f64..=1.0).prop_map(|(n, p)| GraphGenSpec::er(n, p)),
            (3usize..=8, 0.0f64..=1.0).prop_flat_map(|(n, beta)| {
                let half_max = (n - 1) / 2;
                (1..=half_max).prop_map(move |h| GraphGenSpec::ws(n, 2 * h, beta))
            }),
            (2usize..=8).prop_flat_map(|n| (1..n).prop_map(move |m| GraphGenSpec::ba(n, m))),
        ]
    }

    proptest! {
        #[test]
        fn sampled_edge_counts_obey_formulas(spec in arb_spec(), seed in 0u64..1000) {
            let g = spec.sample(&mut rng(seed)).unwrap();
            match spec.family {
                GraphFamily::Ws => prop_assert_eq!(g.edge_count(), spec.n * spec.ws_k / 2),
                GraphFamily::Ba => prop_assert_eq!(
                    g.edge_count(),
                    spec.ba_m * (spec.ba_m - 1) / 2 + spec.ba_m * (spec.n - spec.ba_m)
                ),
                GraphFamily::Er => prop_assert!(g.edge_count() <= spec.n * (spec.n - 1) / 2),
            }
        }

        #[test]
        fn to_dag_is_always_single_source_single_sink(spec in arb_spec(), seed in 0u64..1000) {
            let g = spec.sample(&mut rng(seed)).unwrap();
            let d = to_dag(&g);
            // In-fragment degree scan: exactly one in-degree-0 node (the
            // source) and one out-degree-0 node (the sink).
            let total = d.n + 2;
            let mut in_deg = vec![0usize; total];
            let mut out_deg = vec![0usize; total];
            for &(a, b) in &d.edges {
                prop_assert!(a < total && b < total);
                out_deg[a] += 1;
                in_deg[b] += 1;
            }
            let sources: Vec<usize> = (0..total).filter(|&v| in_deg[v] == 0).collect();
            let sinks: Vec<usize> = (0..total).filter(|&v| out_deg[v] == 0).collect();
            prop_assert_eq!(sources, vec![d.source()]);
            prop_assert_eq!(sinks, vec![d.sink()]);
            // Low-to-high orientation cannot create a cycle among interior
            // nodes, and source/sink edges only point outward/inward.
            for &(a, b) in &d.edges {
                if a < d.n && b < d.n {
                    prop_assert!(a < b);
                }
            }
        }

        #[test]
        fn assembled_graphs_validate(
            top in arb_spec(),
            mid in arb_spec(),
            bottom in arb_spec(),
            seed in 0u64..500,
        ) {
            let theta = GeneratorHyperparams {
                top, mid, bottom,
                kd_temperature: 5.0,
                kd_weight: 0.5,
            };
            prop_assume!(theta.unit_count() <= DEFAULT_UNIT_CAP);
            let g = assemble(&theta, DEFAULT_UNIT_CAP, &mut rng(seed)).unwrap();
            prop_assert_eq!(g.unit_count(), theta.unit_count());
            prop_assert!(g.validate().is_ok());
        }
    }
}
