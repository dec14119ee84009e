#![allow(dead_code)]

pub mod gradcheck;

/// Exhaustive transportation plan: shortest-path costs, maximum shipped volume
/// first, then minimum cost.
pub fn brute_force(n: usize, arcs: &[(usize, usize, i64)], gap: &[i64], movable: &[i64]) -> (i64, i64) {
    const INF: i64 = i64::MAX / 4;
    let mut dist = vec![vec![INF; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b, c) in arcs {
        dist[a][b] = dist[a][b].min(c);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if dist[i][k] + dist[k][j] < dist[i][j] {
                    dist[i][j] = dist[i][k] + dist[k][j];
                }
            }
        }
    }
    let supply: Vec<(usize, i64)> = (0..n)
        .filter(|&g| gap[g] > 0)
        .map(|g| (g, gap[g].min(movable[g].max(0))))
        .collect();
    let mut need: Vec<i64> = gap.iter().map(|&d| (-d).max(0)).collect();
    let mut best = (0, 0);
    fn go(
        i: usize,
        left: i64,
        supply: &[(usize, i64)],
        need: &mut [i64],
        dist: &[Vec<i64>],
        acc: (i64, i64),
        best: &mut (i64, i64),
    ) {
        if i == supply.len() {
            if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                *best = acc;
            }
            return;
        }
        let (g, _) = supply[i];
        let next_left = supply.get(i + 1).map_or(0, |s| s.1);
        go(i + 1, next_left, supply, need, dist, acc, best);
        if left == 0 {
            return;
        }
        for d in 0..need.len() {
            if need[d] > 0 && dist[g][d] < INF / 2 {
                need[d] -= 1;
                go(i, left - 1, supply, need, dist, (acc.0 + 1, acc.1 + dist[g][d]), best);
                need[d] += 1;
            }
        }
    }
    if !supply.is_empty() {
        go(0, supply[0].1, &supply, &mut need, &dist, (0, 0), &mut best);
    }
    best
}
