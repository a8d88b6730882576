//! Exact weights for a discrete source measure.
//!
//! Starting from approximately balanced weights, points are moved between
//! cells along shortest paths of reduced cost (successive shortest paths for
//! the transportation problem with sites as nodes) until every cell holds its
//! target count. The resulting assignment is optimal. The weights are then
//! moved to the interior of the set of weights inducing it: the largest
//! uniform slack is the minimum cycle mean of the constraint graph, and
//! shortest-path potentials with half of that slack make every point's cell a
//! strict minimizer, so the smallest-index argmin reproduces the assignment.

use crate::geometry::SphereSample;

use super::Sites;

pub(super) fn targets(count: usize, l_count: usize) -> Vec<usize> {
    let base = count / l_count;
    let extra = count % l_count;
    (0..l_count).map(|l| base + usize::from(l < extra)).collect()
}

pub(super) fn exact_weights(sites: &Sites, quad: &SphereSample, lambda: &[f64]) -> Option<Vec<f64>> {
    let l_count = sites.len();
    let count = quad.count();
    let cost: Vec<f64> = quad
        .points()
        .flat_map(|x| (0..l_count).map(move |l| sites.cost(x, l)))
        .collect();
    let row = |i: usize| &cost[i * l_count..(i + 1) * l_count];
    let target = targets(count, l_count);
    let mut lambda = lambda.to_vec();

    let argmin = |lambda: &[f64], i: usize| -> usize {
        let r = row(i);
        let mut best = (0, f64::INFINITY);
        for l in 0..l_count {
            let s = r[l] + lambda[l];
            if s < best.1 {
                best = (l, s);
            }
        }
        best.0
    };

    let mut assigned: Vec<usize> = (0..count).map(|i| argmin(&lambda, i)).collect();
    let mut counts = vec![0usize; l_count];
    for &a in &assigned {
        counts[a] += 1;
    }

    let mut reduced = vec![f64::INFINITY; l_count * l_count];
    let mut witness = vec![usize::MAX; l_count * l_count];
    while counts.iter().zip(&target).any(|(c, t)| c > t) {
        reduced.fill(f64::INFINITY);
        witness.fill(usize::MAX);
        for i in 0..count {
            let k = assigned[i];
            let r = row(i);
            let base = r[k] + lambda[k];
            for l in 0..l_count {
                if l == k {
                    continue;
                }
                let rc = (r[l] + lambda[l] - base).max(0.0);
                if rc < reduced[k * l_count + l] {
                    reduced[k * l_count + l] = rc;
                    witness[k * l_count + l] = i;
                }
            }
        }

        // Multi-source Dijkstra from the overfull cells.
        let mut dist = vec![f64::INFINITY; l_count];
        let mut pred = vec![usize::MAX; l_count];
        let mut done = vec![false; l_count];
        for l in 0..l_count {
            if counts[l] > target[l] {
                dist[l] = 0.0;
            }
        }
        for _ in 0..l_count {
            let Some(u) = (0..l_count)
                .filter(|&u| !done[u] && dist[u].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            else {
                break;
            };
            done[u] = true;
            for v in 0..l_count {
                let w = reduced[u * l_count + v];
                if !done[v] && w.is_finite() && dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                    pred[v] = u;
                }
            }
        }
        let sink = (0..l_count)
            .filter(|&l| counts[l] < target[l] && dist[l].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))?;
        let reach = dist[sink];
        for l in 0..l_count {
            lambda[l] += reach - dist[l].min(reach);
        }
        let mut node = sink;
        while pred[node] != usize::MAX {
            let from = pred[node];
            let i = witness[from * l_count + node];
            assigned[i] = node;
            node = from;
        }
        counts[node] -= 1;
        counts[sink] += 1;
    }

    let lambda = center(&cost, l_count, &assigned).unwrap_or(lambda);
    let mut check = vec![0usize; l_count];
    for i in 0..count {
        check[argmin(&lambda, i)] += 1;
    }
    (check == target).then_some(lambda)
}

/// Weights with maximal uniform slack for a fixed assignment, or `None` when
/// the assignment admits no strictly separating weights.
fn center(cost: &[f64], l_count: usize, assigned: &[usize]) -> Option<Vec<f64>> {
    if l_count == 1 {
        return Some(vec![0.0]);
    }
    // λ_k − λ_l <= w[k][l] = min over points i in cell k of c(i,l) − c(i,k).
    let mut w = vec![f64::INFINITY; l_count * l_count];
    for (i, &k) in assigned.iter().enumerate() {
        let r = &cost[i * l_count..(i + 1) * l_count];
        for l in 0..l_count {
            if l != k {
                let v = r[l] - r[k];
                if v < w[k * l_count + l] {
                    w[k * l_count + l] = v;
                }
            }
        }
    }

    // Karp's minimum cycle mean over edges k → l with weight w[k][l].
    let mut walks = vec![vec![f64::INFINITY; l_count]; l_count + 1];
    walks[0].fill(0.0);
    for step in 1..=l_count {
        for v in 0..l_count {
            let mut best = f64::INFINITY;
            for u in 0..l_count {
                let e = w[u * l_count + v];
                if u != v && e.is_finite() && walks[step - 1][u].is_finite() {
                    best = best.min(walks[step - 1][u] + e);
                }
            }
            walks[step][v] = best;
        }
    }
    let mut mean = f64::INFINITY;
    for v in 0..l_count {
        if !walks[l_count][v].is_finite() {
            continue;
        }
        let worst = (0..l_count)
            .filter(|&k| walks[k][v].is_finite())
            .map(|k| (walks[l_count][v] - walks[k][v]) / (l_count - k) as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        mean = mean.min(worst);
    }
    let scale = w.iter().filter(|x| x.is_finite()).fold(0.0f64, |m, x| m.max(x.abs()));
    if !(mean > 1e-12 * scale.max(1.0)) {
        return None;
    }
    let slack = 0.5 * mean.min(scale.max(1.0));

    // Bellman-Ford potentials: λ_k <= λ_l + w[k][l] − slack.
    let mut lambda = vec![0.0; l_count];
    for _ in 0..l_count {
        let mut changed = false;
        for k in 0..l_count {
            for l in 0..l_count {
                let e = w[k * l_count + l];
                if k != l && e.is_finite() && lambda[l] + e - slack < lambda[k] {
                    lambda[k] = lambda[l] + e - slack;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Some(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_sum_to_count() {
        assert_eq!(targets(10, 3), vec![4, 3, 3]);
        assert_eq!(targets(12, 4), vec![3, 3, 3, 3]);
        assert_eq!(targets(7, 7).iter().sum::<usize>(), 7);
    }
}
