use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::{Error, Result};

const MAX_ATTEMPTS: usize = 100;

/// How the random geometric graph decides which node pairs to connect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// Connect every pair closer than the radius; redraw positions until the
    /// result is connected.
    Radius(f64),
    /// Euclidean minimum spanning tree plus the shortest remaining pairs until
    /// the edge count is reached. The count is clamped to
    /// `[n - 1, n (n - 1) / 2]`.
    Edges(usize),
}

/// Random geometric "sensor network" on the unit square with unit weights.
pub fn generate_sensor_graph(n: usize, connectivity: Connectivity, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::arg("n", "a sensor graph needs at least two nodes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match connectivity {
        Connectivity::Radius(radius) => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::arg("radius", format!("must be positive, got {radius}")));
            }
            for _ in 0..MAX_ATTEMPTS {
                let pos = positions(n, &mut rng);
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if dist(pos[i], pos[j]) <= radius {
                            edges.push((i, j, 1.0));
                        }
                    }
                }
                let g = Graph::new(n, edges)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(Error::Disconnected {
                attempts: MAX_ATTEMPTS,
            })
        }
        Connectivity::Edges(target) => {
            let max = n * (n - 1) / 2;
            let target = target.clamp(n - 1, max);
            let pos = positions(n, &mut rng);

            let mut chosen = vec![vec![false; n]; n];
            let mut edges = Vec::with_capacity(target);
            for (i, j) in spanning_tree(&pos) {
                chosen[i][j] = true;
                chosen[j][i] = true;
                edges.push((i.min(j), i.max(j), 1.0));
            }

            let mut rest: Vec<(f64, usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| !chosen[i][j])
                .map(|(i, j)| (dist(pos[i], pos[j]), i, j))
                .collect();
            rest.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
            edges.extend(
                rest.into_iter()
                    .take(target - edges.len())
                    .map(|(_, i, j)| (i, j, 1.0)),
            );
            Graph::new(n, edges)
        }
    }
}

fn positions(n: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect()
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

// Prim's algorithm on the complete Euclidean graph.
fn spanning_tree(pos: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let n = pos.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![(f64::INFINITY, 0usize); n];
    let mut tree = Vec::with_capacity(n - 1);
    in_tree[0] = true;
    for j in 1..n {
        best[j] = (dist(pos[0], pos[j]), 0);
    }
    for _ in 1..n {
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&a, &b| best[a].0.total_cmp(&best[b].0))
            .expect("tree incomplete");
        in_tree[next] = true;
        tree.push((best[next].1, next));
        for j in 0..n {
            if !in_tree[j] {
                let d = dist(pos[next], pos[j]);
                if d < best[j].0 {
                    best[j] = (d, next);
                }
            }
        }
    }
    tree
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_sensor_network_size() {
        let g = generate_sensor_graph(64, Connectivity::Edges(236), 1).unwrap();
        assert_eq!(g.node_count(), 64);
        assert_eq!(g.edge_count(), 236);
        assert!(g.is_connected());
    }

    #[test]
    fn two_nodes_give_single_edge() {
        for target in [0, 1, 5] {
            let g = generate_sensor_graph(2, Connectivity::Edges(target), 9).unwrap();
            assert_eq!(g.edge_count(), 1);
        }
        let g = generate_sensor_graph(2, Connectivity::Radius(2.0), 9).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_sensor_graph(30, Connectivity::Radius(0.35), 4).unwrap();
        let b = generate_sensor_graph(30, Connectivity::Radius(0.35), 4).unwrap();
        assert_eq!(a, b);
        let c = generate_sensor_graph(30, Connectivity::Edges(60), 4).unwrap();
        let d = generate_sensor_graph(30, Connectivity::Edges(60), 5).unwrap();
        assert_ne!(c, d);
    }

    #[test]
    fn tiny_radius_fails() {
        assert!(matches!(
            generate_sensor_graph(40, Connectivity::Radius(1e-6), 0),
            Err(Error::Disconnected { .. })
        ));
    }
}
