//! Graphs, shift operators, spectral decomposition and random edge sampling.

mod generate;
mod io;
mod res;
mod shift;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use generate::{generate_sensor_graph, Connectivity};
pub use io::{load_graph, parse_graph, save_graph, write_graph};
pub use res::{mean_shift, sample_res, EdgeTerm, Realization, ResModel};
pub use shift::{build_shift, spectral_decompose, symmetric_eigenvalues, ShiftClass, ShiftKind, ShiftOperator, Spectrum};

/// Undirected weighted edge, stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// Undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<RawGraph> for Graph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        Graph::new(raw.n, raw.edges)
    }
}

impl From<Graph> for RawGraph {
    fn from(g: Graph) -> Self {
        RawGraph {
            n: g.n,
            edges: g.edges.iter().map(|e| (e.u, e.v, e.w)).collect(),
        }
    }
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates, out-of-range ids and
    /// non-finite weights. Edge order is preserved; endpoints are normalized
    /// so that `u < v`.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            if !w.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has non-finite weight {w}"
                )));
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            if !seen.insert((a, b)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
            out.push(Edge { u: a, v: b, w });
        }
        Ok(Graph { n, edges: out })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for e in &self.edges {
            d[e.u] += e.w;
            d[e.v] += e.w;
        }
        d
    }

    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }

    /// Relabels nodes so that node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: perm.len(),
            });
        }
        Graph::new(
            self.n,
            self.edges.iter().map(|e| (perm[e.u], perm[e.v], e.w)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_edges() {
        assert!(matches!(
            Graph::new(3, [(0, 0, 1.0)]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(Graph::new(3, [(0, 3, 1.0)]).is_err());
        assert!(Graph::new(3, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(Graph::new(3, [(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn normalizes_endpoints() {
        let g = Graph::new(3, [(2, 1, 0.5)]).unwrap();
        assert_eq!(g.edges()[0], Edge { u: 1, v: 2, w: 0.5 });
        assert_eq!(g.degrees(), vec![0.0, 0.5, 0.5]);
        assert!(!g.is_connected());
    }
}
