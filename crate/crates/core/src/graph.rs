//! Multigraphs for the fibre-integral expansion: finitely many vertices
//! carrying non-negative genus labels, parallel edges allowed, self-loops
//! representable (whether a loop contributes weight is decided by the
//! contraction engine, not by the graph type). Graphs are compared up to
//! label-preserving isomorphism through a canonical relabeling, and the
//! censuses enumerate connected graphs with at least one edge.
//!
//! Invariants:
//! - edges are stored sorted with each pair in increasing order;
//! - `canonical` is a fixpoint: `g.canonical().canonical() == g.canonical()`;
//! - `automorphism_order` equals the brute-force count of compatible
//!   vertex and half-edge bijection pairs (half-edge pairs per edge, so a
//!   self-loop contributes its flip and parallel classes their shuffles).

use crate::error::{Error, Result};
use itertools::Itertools;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Graph {
    vertices: usize,
    edges: Vec<(usize, usize)>,
    genus: Vec<u64>,
}

impl Graph {
    /// Build a graph on vertices `0..vertices` with all genus labels zero.
    /// Edge endpoints may come in either order; an edge from a vertex to
    /// itself is kept as a self-loop.
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if vertices == 0 {
            return Err(Error::VertexOutOfRange {
                index: 0,
                vertices: 0,
            });
        }
        let mut sorted = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= vertices || b >= vertices {
                return Err(Error::VertexOutOfRange {
                    index: a.max(b),
                    vertices,
                });
            }
            sorted.push((a.min(b), a.max(b)));
        }
        sorted.sort_unstable();
        Ok(Graph {
            vertices,
            edges: sorted,
            genus: vec![0; vertices],
        })
    }

    /// Attach genus labels, one per vertex.
    pub fn with_genus(mut self, genus: Vec<u64>) -> Result<Self> {
        if genus.len() != self.vertices {
            return Err(Error::DimensionMismatch {
                expected: self.vertices,
                got: genus.len(),
            });
        }
        self.genus = genus;
        Ok(self)
    }

    /// The cycle on `k >= 2` vertices; `k = 2` is the doubled edge.
    pub fn cycle(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::VertexOutOfRange {
                index: k,
                vertices: k,
            });
        }
        Graph::new(k, (0..k).map(|i| (i, (i + 1) % k)).collect())
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn genus_labels(&self) -> &[u64] {
        &self.genus
    }

    /// Number of edge ends at `v`; a self-loop counts twice.
    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .map(|&(a, b)| usize::from(a == v) + usize::from(b == v))
            .sum()
    }

    /// Edge multiplicities keyed by the increasing endpoint pair.
    pub fn multiplicities(&self) -> BTreeMap<(usize, usize), usize> {
        let mut m = BTreeMap::new();
        for &e in &self.edges {
            *m.entry(e).or_insert(0) += 1;
        }
        m
    }

    pub fn has_tadpole(&self) -> bool {
        self.edges.iter().any(|&(a, b)| a == b)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.vertices];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                let w = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// First Betti number `E - V + 1` of a connected graph.
    pub fn loop_order(&self) -> i64 {
        self.edges.len() as i64 - self.vertices as i64 + 1
    }

    /// Total genus: first Betti number plus the vertex genus labels.
    pub fn genus(&self) -> i64 {
        self.loop_order() + self.genus.iter().map(|&g| g as i64).sum::<i64>()
    }

    /// An edge whose removal disconnects the graph (or dangles a vertex).
    pub fn has_bridge(&self) -> bool {
        for skip in 0..self.edges.len() {
            let rest: Vec<(usize, usize)> = self
                .edges
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, e)| *e)
                .collect();
            let g = Graph {
                vertices: self.vertices,
                edges: rest,
                genus: self.genus.clone(),
            };
            if !g.is_connected() {
                return true;
            }
        }
        false
    }

    /// Least (edge list, genus labels) pair over all relabelings of the
    /// vertices.
    pub fn canonical(&self) -> Graph {
        let mut best: Option<(Vec<(usize, usize)>, Vec<u64>)> = None;
        for perm in (0..self.vertices).permutations(self.vertices) {
            let mut relabeled: Vec<(usize, usize)> = self
                .edges
                .iter()
                .map(|&(a, b)| {
                    let (x, y) = (perm[a], perm[b]);
                    (x.min(y), x.max(y))
                })
                .collect();
            relabeled.sort_unstable();
            let mut genus = vec![0u64; self.vertices];
            for v in 0..self.vertices {
                genus[perm[v]] = self.genus[v];
            }
            let key = (relabeled, genus);
            if best.as_ref().is_none_or(|b| key < *b) {
                best = Some(key);
            }
        }
        let (edges, genus) = best.expect("a graph has at least one vertex");
        Graph {
            vertices: self.vertices,
            edges,
            genus,
        }
    }

    /// Order of the automorphism group acting on vertices and half-edges:
    /// genus-and-edge-preserving vertex permutations, times a factorial per
    /// parallel-edge class, times a flip and a factorial per self-loop
    /// class.
    pub fn automorphism_order(&self) -> u64 {
        let mut vertex_count = 0u64;
        for perm in (0..self.vertices).permutations(self.vertices) {
            let mut relabeled: Vec<(usize, usize)> = self
                .edges
                .iter()
                .map(|&(a, b)| {
                    let (x, y) = (perm[a], perm[b]);
                    (x.min(y), x.max(y))
                })
                .collect();
            relabeled.sort_unstable();
            if relabeled != self.edges {
                continue;
            }
            let genus_ok = (0..self.vertices).all(|v| self.genus[perm[v]] == self.genus[v]);
            if genus_ok {
                vertex_count += 1;
            }
        }
        let mut order = vertex_count;
        for (&(a, b), &m) in &self.multiplicities() {
            let m = m as u64;
            order *= (1..=m).product::<u64>();
            if a == b {
                order *= 2u64.pow(m as u32);
            }
        }
        order
    }

    /// Canonical text form, e.g. `0-1 0-1 1-2`.
    pub fn edge_text(&self) -> String {
        self.edges
            .iter()
            .map(|(a, b)| format!("{a}-{b}"))
            .join(" ")
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G({}; {}", self.vertices, self.edge_text())?;
        if self.genus.iter().any(|&g| g > 0) {
            write!(f, "; g={}", self.genus.iter().join(","))?;
        }
        write!(f, ")")
    }
}

/// Core census: connected graphs with at least one edge on exactly
/// `vertices` labeled-then-deduplicated vertices, genus labels all zero.
fn census(
    vertices: usize,
    max_degree: usize,
    max_edges: usize,
    allow_loops: bool,
) -> Vec<Graph> {
    if vertices == 0 {
        return Vec::new();
    }
    let mut pairs: Vec<(usize, usize)> = (0..vertices)
        .tuple_combinations()
        .map(|(a, b)| (a, b))
        .collect();
    if allow_loops {
        pairs.extend((0..vertices).map(|v| (v, v)));
        pairs.sort_unstable();
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut degrees = vec![0usize; vertices];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        pairs: &[(usize, usize)],
        idx: usize,
        vertices: usize,
        max_degree: usize,
        budget: usize,
        degrees: &mut Vec<usize>,
        edges: &mut Vec<(usize, usize)>,
        seen: &mut BTreeSet<Vec<(usize, usize)>>,
        out: &mut Vec<Graph>,
    ) {
        if idx == pairs.len() {
            if edges.is_empty() {
                return;
            }
            let g = Graph {
                vertices,
                edges: edges.clone(),
                genus: vec![0; vertices],
            };
            if !g.is_connected() {
                return;
            }
            let canon = g.canonical();
            if seen.insert(canon.edges.clone()) {
                out.push(canon);
            }
            return;
        }
        let (a, b) = pairs[idx];
        let room = if a == b {
            (max_degree.saturating_sub(degrees[a]) / 2).min(budget)
        } else {
            max_degree
                .saturating_sub(degrees[a])
                .min(max_degree.saturating_sub(degrees[b]))
                .min(budget)
        };
        for m in 0..=room {
            if m > 0 {
                if a == b {
                    degrees[a] += 2;
                } else {
                    degrees[a] += 1;
                    degrees[b] += 1;
                }
                edges.push((a, b));
            }
            recurse(
                pairs,
                idx + 1,
                vertices,
                max_degree,
                budget - m,
                degrees,
                edges,
                seen,
                out,
            );
        }
        for _ in 0..room {
            let (a, b) = pairs[idx];
            if a == b {
                degrees[a] -= 2;
            } else {
                degrees[a] -= 1;
                degrees[b] -= 1;
            }
            edges.pop();
        }
    }
    recurse(
        &pairs,
        0,
        vertices,
        max_degree,
        max_edges,
        &mut degrees,
        &mut edges,
        &mut seen,
        &mut out,
    );
    out.sort();
    out
}

/// All connected graphs with at least one edge on exactly `vertices`
/// unlabeled vertices (genus labels zero), every vertex of degree at most
/// `max_degree` (a self-loop spends two), and at most `max_edges` edges;
/// one representative per isomorphism class. This is the engine-facing
/// census: the degree cap implements the feasibility rule that a vertex
/// label with y-degree d can absorb at most d edge ends.
pub fn enumerate_contraction_graphs(
    vertices: usize,
    max_degree: usize,
    max_edges: usize,
    allow_tadpoles: bool,
) -> Vec<Graph> {
    census(vertices, max_degree, max_edges, allow_tadpoles)
}

/// Census by global bounds: connected graphs with at least one edge, at
/// most `max_vertices` vertices, at most `max_edges` edges, and all genus
/// labelings with total genus (first Betti number plus labels) at most
/// `max_genus`; self-loops excluded when `forbid_tadpoles` is set. One
/// representative per label-preserving isomorphism class, sorted.
pub fn enumerate_graphs(
    max_vertices: usize,
    max_edges: usize,
    max_genus: u64,
    forbid_tadpoles: bool,
) -> Vec<Graph> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for v in 1..=max_vertices {
        for g in census(v, 2 * max_edges, max_edges, !forbid_tadpoles) {
            let b1 = g.loop_order();
            if b1 > max_genus as i64 {
                continue;
            }
            let slack = (max_genus as i64 - b1) as u64;
            for labels in genus_labelings(v, slack) {
                let lg = Graph {
                    vertices: v,
                    edges: g.edges.clone(),
                    genus: labels,
                }
                .canonical();
                if seen.insert((lg.vertices, lg.edges.clone(), lg.genus.clone())) {
                    out.push(lg);
                }
            }
        }
    }
    out.sort();
    out
}

/// All vectors of `len` non-negative labels summing to at most `max_sum`.
fn genus_labelings(len: usize, max_sum: u64) -> Vec<Vec<u64>> {
    let mut out: Vec<Vec<u64>> = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for prefix in &out {
            let used: u64 = prefix.iter().sum();
            for g in 0..=(max_sum - used) {
                let mut p = prefix.clone();
                p.push(g);
                next.push(p);
            }
        }
        out = next;
    }
    out
}
