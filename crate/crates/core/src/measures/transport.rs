//! Exact bounded-Lipschitz distance between discrete measures.
//!
//! The sup over `|f| <= 1`, `Lip(f) <= 1` reduces to a finite LP over the
//! values of `f` on the pooled support (any feasible assignment extends to
//! R^n by McShane extension and truncation). Its dual is a balanced
//! transport problem: add a ground node carrying `f = 0` that absorbs the
//! mass imbalance at unit cost, and move the signed mass `mu - nu` under the
//! cost `min(|z_k - z_l|, 2)` (a detour through the ground costs 2). The
//! transport is solved exactly by successive shortest paths with potentials.

use super::{euclid, DiscreteMeasure, MeasureFunctionalView};
use crate::error::{Error, Result};

/// Largest pooled support accepted by [`dbl_exact`].
pub const DEFAULT_SUPPORT_CAP: usize = 512;

pub fn dbl_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    dbl_exact_with_cap(mu, nu, DEFAULT_SUPPORT_CAP)
}

pub fn dbl_exact_with_cap(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cap: usize) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let dim = mu.dim();
    // signed pooled measure; merging nets out shared atoms
    let mut pooled = DiscreteMeasure::zero(dim);
    let mut signs = Vec::new();
    for (z, w) in mu.iter() {
        pooled.push(z, w);
        signs.push(1.0);
    }
    for (z, w) in nu.iter() {
        pooled.push(z, w);
        signs.push(-1.0);
    }
    let (points, net) = net_masses(&pooled, &signs);
    if net.len() > cap {
        return Err(Error::SupportTooLarge {
            size: net.len(),
            cap,
        });
    }
    let scale = mu.total_mass().max(nu.total_mass());
    if scale == 0.0 {
        return Ok(0.0);
    }
    let eps = 1e-14 * scale;

    let mut sources: Vec<(Option<usize>, f64)> = Vec::new();
    let mut sinks: Vec<(Option<usize>, f64)> = Vec::new();
    for (k, &c) in net.iter().enumerate() {
        if c > eps {
            sources.push((Some(k), c));
        } else if c < -eps {
            sinks.push((Some(k), -c));
        }
    }
    // ground node absorbs the mass difference
    let supply: f64 = sources.iter().map(|s| s.1).sum();
    let demand: f64 = sinks.iter().map(|s| s.1).sum();
    if supply > demand + eps {
        sinks.push((None, supply - demand));
    } else if demand > supply + eps {
        sources.push((None, demand - supply));
    }
    if sources.is_empty() || sinks.is_empty() {
        return Ok(0.0);
    }
    let cost = |a: Option<usize>, b: Option<usize>| -> f64 {
        match (a, b) {
            (Some(k), Some(l)) => euclid(&points[k * dim..(k + 1) * dim], &points[l * dim..(l + 1) * dim]).min(2.0),
            (None, None) => 0.0,
            _ => 1.0,
        }
    };
    let costs: Vec<Vec<f64>> = sources
        .iter()
        .map(|s| sinks.iter().map(|t| cost(s.0, t.0)).collect())
        .collect();
    let supplies: Vec<f64> = sources.iter().map(|s| s.1).collect();
    let demands: Vec<f64> = sinks.iter().map(|t| t.1).collect();
    Ok(min_cost_transport(&costs, &supplies, &demands, eps).max(0.0))
}

/// Merges atoms (within the merge tolerance) and returns flat coordinates
/// with the net signed mass per merged atom.
fn net_masses(pooled: &DiscreteMeasure, signs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = pooled.dim();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| {
        pooled
            .atom(a)
            .iter()
            .zip(pooled.atom(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut points: Vec<f64> = Vec::new();
    let mut net: Vec<f64> = Vec::new();
    let mut last_first: Vec<(f64, usize)> = Vec::new();
    for k in order {
        let z = pooled.atom(k);
        let w = signs[k] * pooled.weights()[k];
        let hit = last_first
            .iter()
            .rev()
            .take_while(|(x0, _)| (x0 - z[0]).abs() <= super::MERGE_TOL)
            .find(|(_, r)| euclid(&points[r * dim..(r + 1) * dim], z) <= super::MERGE_TOL)
            .map(|(_, r)| *r);
        match hit {
            Some(r) => net[r] += w,
            None => {
                last_first.push((z[0], net.len()));
                points.extend_from_slice(z);
                net.push(w);
            }
        }
    }
    (points, net)
}

/// Balanced transportation problem by successive shortest paths.
///
/// `costs[s][t] >= 0`; total supply equals total demand up to `eps`.
/// Node layout for the shortest-path search: sources `0..a`, sinks `a..a+b`.
fn min_cost_transport(costs: &[Vec<f64>], supplies: &[f64], demands: &[f64], eps: f64) -> f64 {
    let a = supplies.len();
    let b = demands.len();
    let n = a + b;
    let mut supply = supplies.to_vec();
    let mut demand = demands.to_vec();
    let mut flow = vec![vec![0.0f64; b]; a];
    let mut potential = vec![0.0f64; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut done = vec![false; n];

    loop {
        if supply.iter().all(|&s| s <= eps) || demand.iter().all(|&d| d <= eps) {
            break;
        }
        dist.fill(f64::INFINITY);
        parent.fill(usize::MAX);
        done.fill(false);
        for s in 0..a {
            if supply[s] > eps {
                dist[s] = 0.0;
            }
        }
        // dense Dijkstra on reduced costs
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < a {
                for t in 0..b {
                    let v = a + t;
                    if done[v] {
                        continue;
                    }
                    let rc = (costs[u][t] + potential[u] - potential[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        parent[v] = u;
                    }
                }
            } else {
                let t = u - a;
                for s in 0..a {
                    if done[s] || flow[s][t] <= eps {
                        continue;
                    }
                    let rc = (-costs[s][t] + potential[u] - potential[s]).max(0.0);
                    if dist[u] + rc < dist[s] {
                        dist[s] = dist[u] + rc;
                        parent[s] = u;
                    }
                }
            }
        }
        // closest sink with remaining demand
        let target = (0..b)
            .filter(|&t| demand[t] > eps && dist[a + t].is_finite())
            .min_by(|&x, &y| dist[a + x].total_cmp(&dist[a + y]));
        let Some(t_star) = target else { break };
        let reach = dist[a + t_star];
        for v in 0..n {
            potential[v] += dist[v].min(reach);
        }
        // walk back to find the bottleneck
        let mut bottleneck = demand[t_star];
        let mut v = a + t_star;
        loop {
            let p = parent[v];
            if p == usize::MAX {
                bottleneck = bottleneck.min(supply[v]);
                break;
            }
            if v < a {
                // backward edge sink p -> source v cancels flow
                bottleneck = bottleneck.min(flow[v][p - a]);
            }
            v = p;
        }
        let origin = v;
        let mut v = a + t_star;
        loop {
            let p = parent[v];
            if p == usize::MAX {
                break;
            }
            if v >= a {
                flow[p][v - a] += bottleneck;
            } else {
                flow[v][p - a] -= bottleneck;
                if flow[v][p - a] <= eps {
                    flow[v][p - a] = 0.0;
                }
            }
            v = p;
        }
        supply[origin] -= bottleneck;
        if supply[origin] <= eps {
            supply[origin] = 0.0;
        }
        demand[t_star] -= bottleneck;
        if demand[t_star] <= eps {
            demand[t_star] = 0.0;
        }
    }

    let mut total = 0.0;
    for s in 0..a {
        for t in 0..b {
            if flow[s][t] > 0.0 {
                total += flow[s][t] * costs[s][t];
            }
        }
    }
    total
}
