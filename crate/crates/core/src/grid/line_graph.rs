use std::collections::VecDeque;

use super::Network;
use crate::matrix::Matrix;

/// Hop distances between branches in the line graph (branches are adjacent
/// when they share a bus).
pub type DistanceMatrix = Matrix;

/// Line-graph geodesic distances with every branch in service.
pub fn line_graph_distance(net: &Network) -> DistanceMatrix {
    line_graph_distance_alive(net, &vec![true; net.n_branches()])
}

/// Line-graph distances over the alive branches only. Unreachable pairs
/// (and pairs involving a dead branch) get the sentinel `N_br`, which exceeds
/// every finite distance.
pub fn line_graph_distance_alive(net: &Network, alive: &[bool]) -> DistanceMatrix {
    let n_br = net.n_branches();
    let sentinel = n_br as f64;
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); net.n_buses()];
    for br in net.branches() {
        if alive[br.id] {
            incident[br.from_bus].push(br.id);
            incident[br.to_bus].push(br.id);
        }
    }
    let mut k = Matrix::filled(n_br, n_br, sentinel);
    let mut dist = vec![usize::MAX; n_br];
    let mut queue = VecDeque::new();
    for src in 0..n_br {
        k[(src, src)] = 0.0;
        if !alive[src] {
            continue;
        }
        dist.fill(usize::MAX);
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let br = &net.branches()[u];
            for bus in [br.from_bus, br.to_bus] {
                for &v in &incident[bus] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        for (dst, &d) in dist.iter().enumerate() {
            if d != usize::MAX {
                k[(src, dst)] = d as f64;
            }
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ieee30, Branch, Bus, Network};

    /// Floyd-Warshall over an explicitly built line-graph adjacency matrix.
    fn floyd_warshall(net: &Network) -> Vec<Vec<f64>> {
        let n = net.n_branches();
        let inf = f64::INFINITY;
        let mut d = vec![vec![inf; n]; n];
        for a in net.branches() {
            d[a.id][a.id] = 0.0;
            for b in net.branches() {
                if a.id != b.id && (b.touches(a.from_bus) || b.touches(a.to_bus)) {
                    d[a.id][b.id] = 1.0;
                }
            }
        }
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][m] + d[m][j] < d[i][j] {
                        d[i][j] = d[i][m] + d[m][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn matches_floyd_warshall_on_ieee30() {
        let net = ieee30();
        let k = line_graph_distance(&net);
        let oracle = floyd_warshall(&net);
        for i in 0..net.n_branches() {
            for j in 0..net.n_branches() {
                assert_eq!(k[(i, j)], oracle[i][j], "pair ({i},{j})");
            }
        }
        // branch 1 (1-2) and branch 41 (6-28)
        assert_eq!(k[(0, 40)], oracle[0][40]);
        assert_eq!(k[(0, 40)], 2.0);
    }

    #[test]
    fn adjacency_and_diagonal() {
        let net = ieee30();
        let k = line_graph_distance(&net);
        // branches 1-2 and 1-3 share bus 1
        assert_eq!(k[(0, 1)], 1.0);
        for n in 0..net.n_branches() {
            assert_eq!(k[(n, n)], 0.0);
        }
    }

    #[test]
    fn symmetric_and_triangle() {
        let net = ieee30();
        let k = line_graph_distance(&net);
        let n = net.n_branches();
        for a in 0..n {
            for b in 0..n {
                assert_eq!(k[(a, b)], k[(b, a)]);
                for c in 0..n {
                    assert!(k[(a, c)] <= k[(a, b)] + k[(b, c)]);
                }
            }
        }
    }

    #[test]
    fn disconnected_pairs_use_sentinel() {
        let buses = (0..4).map(|id| Bus { id, load_p: 0.0, shed_priority: 1.0, is_slack: false }).collect();
        let branches = (0..3)
            .map(|id| Branch { id, from_bus: id, to_bus: id + 1, reactance: 0.1, rating_long: 1.0, cost_weight: 1.0 })
            .collect();
        let net = Network::new(100.0, buses, branches, vec![]).unwrap();
        let k = line_graph_distance_alive(&net, &[true, false, true]);
        assert_eq!(k[(0, 2)], 3.0);
        assert_eq!(k[(0, 1)], 3.0);
        assert_eq!(k[(1, 1)], 0.0);
    }
}
