//! Integer min-cost max-flow by successive shortest paths, and the grid-level
//! rebalancing plan built on it.

use std::collections::{BTreeMap, VecDeque};

use crate::world::{GridId, GridMap};

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i64,
    cost: i64,
    rev: usize,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    adj: Vec<Vec<Edge>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Returns `(node, index)` of the forward edge.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> (usize, usize) {
        let fi = self.adj[from].len();
        let ri = self.adj[to].len() + usize::from(from == to);
        self.adj[from].push(Edge { to, cap, cost, rev: ri });
        self.adj[to].push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
            rev: fi,
        });
        (from, fi)
    }

    /// Flow currently on a forward edge, given its original capacity.
    pub fn flow_on(&self, edge: (usize, usize), original_cap: i64) -> i64 {
        original_cap - self.adj[edge.0][edge.1].cap
    }

    /// Push as much flow as possible from `s` to `t` at minimum cost. Returns `(flow, cost)`.
    pub fn min_cost_max_flow(&mut self, s: usize, t: usize) -> (i64, i64) {
        let n = self.adj.len();
        let (mut flow, mut cost) = (0, 0);
        loop {
            // Bellman-Ford with a queue; residual graphs may carry negative costs.
            let mut dist = vec![i64::MAX; n];
            let mut in_q = vec![false; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut q = VecDeque::new();
            dist[s] = 0;
            q.push_back(s);
            in_q[s] = true;
            while let Some(u) = q.pop_front() {
                in_q[u] = false;
                for (i, e) in self.adj[u].iter().enumerate() {
                    if e.cap > 0 && dist[u] + e.cost < dist[e.to] {
                        dist[e.to] = dist[u] + e.cost;
                        prev[e.to] = Some((u, i));
                        if !in_q[e.to] {
                            in_q[e.to] = true;
                            q.push_back(e.to);
                        }
                    }
                }
            }
            if dist[t] == i64::MAX {
                break;
            }
            let mut push = i64::MAX;
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                push = push.min(self.adj[u][i].cap);
                v = u;
            }
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                self.adj[u][i].cap -= push;
                let r = self.adj[u][i].rev;
                self.adj[v][r].cap += push;
                v = u;
            }
            flow += push;
            cost += push * dist[t];
        }
        (flow, cost)
    }
}

/// Flow on each arc of a rebalancing network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArcFlows {
    /// Units on `arcs[i]`, aligned with the input arcs.
    pub units: Vec<i64>,
    pub flow: i64,
    pub cost: i64,
}

/// Min-cost max-flow from surplus nodes (`gap > 0`, at most `movable` each) to
/// deficit nodes (`gap < 0`) over uncapacitated `(from, to, cost)` arcs.
pub fn rebalance_flows(nodes: usize, arcs: &[(usize, usize, i64)], gap: &[i64], movable: &[i64]) -> ArcFlows {
    let (s, t) = (nodes, nodes + 1);
    let mut net = FlowNetwork::new(nodes + 2);
    let big = gap.iter().filter(|&&d| d > 0).sum::<i64>().max(1);
    for g in 0..nodes {
        let d = gap[g];
        if d > 0 {
            let cap = d.min(movable[g].max(0));
            if cap > 0 {
                net.add_edge(s, g, cap, 0);
            }
        } else if d < 0 {
            net.add_edge(g, t, -d, 0);
        }
    }
    let edges: Vec<(usize, usize)> = arcs.iter().map(|&(a, b, c)| net.add_edge(a, b, big, c)).collect();
    let (flow, cost) = net.min_cost_max_flow(s, t);
    let mut units: Vec<i64> = edges.iter().map(|&e| net.flow_on(e, big)).collect();
    // Opposing flows on a pair of arcs never lower cost; cancel them.
    for i in 0..arcs.len() {
        for j in i + 1..arcs.len() {
            if arcs[i].0 == arcs[j].1 && arcs[i].1 == arcs[j].0 {
                let m = units[i].min(units[j]);
                units[i] -= m;
                units[j] -= m;
            }
        }
    }
    ArcFlows { units, flow, cost }
}

/// Arcs between Chebyshev-adjacent grids, costing their Manhattan distance.
pub fn neighbor_arcs(map: &GridMap) -> Vec<(usize, usize, i64)> {
    let mut arcs = Vec::new();
    for a in map.ids() {
        for b in map.neighborhood9(a).into_iter().flatten() {
            if b != a {
                arcs.push((a.0, b.0, map.manhattan(a, b) as i64));
            }
        }
    }
    arcs
}

/// Optimal grid-to-neighbor moves.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowPlan {
    /// Units moving `from -> to` between Chebyshev neighbors.
    pub moves: BTreeMap<(GridId, GridId), i64>,
    pub flow: i64,
    pub cost: i64,
}

/// City-wide rebalancing over [`neighbor_arcs`].
pub fn plan_rebalance(map: &GridMap, gap: &[i64], movable: &[i64]) -> FlowPlan {
    let arcs = neighbor_arcs(map);
    let f = rebalance_flows(map.len(), &arcs, gap, movable);
    let moves = arcs
        .iter()
        .zip(&f.units)
        .filter(|(_, &u)| u > 0)
        .map(|(&(a, b, _), &u)| ((GridId(a), GridId(b)), u))
        .collect();
    FlowPlan {
        moves,
        flow: f.flow,
        cost: f.cost,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<(usize, usize, i64)> {
        (0..n - 1).flat_map(|i| [(i, i + 1, 1), (i + 1, i, 1)]).collect()
    }

    #[test]
    fn line_example() {
        let f = rebalance_flows(3, &line(3), &[2, 0, -1], &[2, 0, 0]);
        assert_eq!((f.flow, f.cost), (1, 2));
        assert_eq!(f.units, vec![1, 0, 1, 0]);
    }

    #[test]
    fn balanced_is_empty() {
        let map = GridMap::new(3, 3).unwrap();
        let p = plan_rebalance(&map, &[0; 9], &[5; 9]);
        assert_eq!(p, FlowPlan::default());
    }

    #[test]
    fn diagonal_costs_two() {
        let map = GridMap::new(3, 3).unwrap();
        let mut gap = [0i64; 9];
        gap[0] = 1;
        gap[4] = -1;
        let p = plan_rebalance(&map, &gap, &[1; 9]);
        assert_eq!((p.flow, p.cost), (1, 2));
        assert_eq!(p.moves.get(&(GridId(0), GridId(4))), Some(&1));
    }
}
