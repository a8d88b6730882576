//! Reference solvers for small transport problems, independent of the
//! library's code paths.

#![allow(dead_code)]

/// Minimum-cost perfect matching of a square cost matrix (Hungarian method
/// with potentials). Returns the optimal total cost and the column matched to
/// each row.
pub fn hungarian(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut row_of = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[i][col_of[i]]).sum();
    (total, col_of)
}

/// Optimal value of the transportation problem with supplies `a`, demands
/// `b` (equal totals) and costs `c[i][j]`, by successive shortest paths with
/// Bellman-Ford on the residual graph.
pub fn transport_lp(a: &[f64], b: &[f64], c: &[Vec<f64>]) -> f64 {
    let (m, k) = (a.len(), b.len());
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = vec![vec![0.0; k]; m];
    let eps = 1e-15;
    for _ in 0..10_000 {
        if supply.iter().all(|s| *s <= eps) || demand.iter().all(|d| *d <= eps) {
            break;
        }
        // Nodes: sources 0..m, sinks m..m+k.
        let nodes = m + k;
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred = vec![usize::MAX; nodes];
        for i in 0..m {
            if supply[i] > eps {
                dist[i] = 0.0;
            }
        }
        let scale = c.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
        let tiny = 1e-12 * scale;
        for _ in 0..nodes {
            let mut changed = false;
            for i in 0..m {
                for j in 0..k {
                    if dist[i].is_finite() && dist[i] + c[i][j] < dist[m + j] - tiny {
                        dist[m + j] = dist[i] + c[i][j];
                        pred[m + j] = i;
                        changed = true;
                    }
                    if flow[i][j] > eps && dist[m + j].is_finite() && dist[m + j] - c[i][j] < dist[i] - tiny {
                        dist[i] = dist[m + j] - c[i][j];
                        pred[i] = m + j;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let Some(sink) = (0..k)
            .filter(|&j| demand[j] > eps && dist[m + j].is_finite())
            .min_by(|&x, &y| dist[m + x].total_cmp(&dist[m + y]))
        else {
            break;
        };
        // Bottleneck along the path.
        let mut amount = demand[sink];
        let mut node = m + sink;
        let mut steps = 0;
        while pred[node] != usize::MAX {
            steps += 1;
            assert!(steps <= nodes, "negative cycle in the residual graph");
            let p = pred[node];
            if node < m {
                amount = amount.min(flow[node][p - m]);
            }
            node = p;
        }
        amount = amount.min(supply[node]);
        let source = node;
        let mut node = m + sink;
        while pred[node] != usize::MAX {
            let p = pred[node];
            if node >= m {
                flow[p][node - m] += amount;
            } else {
                flow[node][p - m] -= amount;
            }
            node = p;
        }
        supply[source] -= amount;
        demand[sink] -= amount;
    }
    (0..m).map(|i| (0..k).map(|j| flow[i][j] * c[i][j]).sum::<f64>()).sum()
}

/// `MK_p` between two measures on the line via the LP.
pub fn w_p_lp(xa: &[f64], ma: &[f64], xb: &[f64], mb: &[f64], p: f64) -> f64 {
    let c: Vec<Vec<f64>> = xa.iter().map(|x| xb.iter().map(|y| (x - y).abs().powf(p)).collect()).collect();
    transport_lp(ma, mb, &c).max(0.0).powf(1.0 / p)
}

/// Arc length between unit vectors, via the inner product.
pub fn arc(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    d.clamp(-1.0, 1.0).acos()
}

pub fn chord(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

