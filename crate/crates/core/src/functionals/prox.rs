//! Inner solvers for the graph-TV proximal operator.
//!
//! Both flavors are solved through duality. Writing `B` for the signed edge
//! difference map `(Bu)_e = u_i - u_j` (anisotropic) and `G` for the
//! node-grouped variant with entries `sqrt(w_ij) (u_i - u_j)` (isotropic),
//! the prox problem
//!
//! ```text
//! min_v 1/2 ||v - f||^2 + t J(v)
//! ```
//!
//! has the dual `min_y 1/2 ||f - B^T y||^2` over the box `|y_e| <= t w_e`
//! (anisotropic), respectively over per-node balls `||z_i||_2 <= t`
//! (isotropic), with primal recovery `v = f - B^T y`. The anisotropic dual is
//! solved by accelerated projected gradient with adaptive restart; the
//! isotropic one by an accelerated primal-dual scheme that exploits the
//! 1-strong convexity of the data term.
//!
//! Feasible dual points give a computable duality gap
//!
//! ```text
//! gap(v, y) = 1/2 ||v - f||^2 + t J(v) - <B^T y, f> + 1/2 ||B^T y||^2 >= 0
//! ```
//!
//! which certifies `||v - v*||^2 <= 2 gap`. Iteration stops as soon as
//! `gap <= dual_tolerance * ||f||^2`.

use super::{GraphTotalVariation, OneHomogeneous, ProxConfig, StepRule};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::signal::Signal;

/// Caller-owned warm-start buffer for prox evaluations.
///
/// Flows keep one of these per run; consecutive prox problems differ only by
/// a small outer step, and restarting the dual variables from the previous
/// solve typically cuts inner iterations by orders of magnitude.
#[derive(Debug, Clone, Default)]
pub enum ProxState {
    /// No usable information; solvers start from zero dual variables.
    #[default]
    Cold,
    /// Dual edge variables of the anisotropic solver.
    EdgeDual { y: Vec<f64> },
    /// Primal iterate and grouped dual variables of the isotropic solver.
    PrimalDual { v: Vec<f64>, z: Vec<f64> },
}

/// How often the (O(E)) duality gap is evaluated.
const GAP_CHECK_EVERY: usize = 8;

/// Anisotropic prox: accelerated projected gradient on the dual box.
pub(super) fn prox_anisotropic(
    tv: &GraphTotalVariation,
    f: &Signal,
    t: f64,
    cfg: &ProxConfig,
    state: &mut ProxState,
) -> Result<Signal> {
    let graph = tv.graph();
    let n = graph.node_count();
    let m = graph.edge_count();
    let fv = f.values();
    let f_norm = f.norm2();
    if m == 0 || f_norm == 0.0 {
        // J is identically zero on edgeless graphs; prox of 0 is 0.
        *state = ProxState::EdgeDual { y: vec![0.0; m] };
        return Ok(if f_norm == 0.0 { f.like(vec![0.0; n]) } else { f.clone() });
    }

    let caps: Vec<f64> = graph.edges().iter().map(|e| t * e.weight).collect();
    let tol = cfg.dual_tolerance * f_norm * f_norm;

    // y: feasible main iterate, y_ex: extrapolated point.
    let mut y = match std::mem::take(state) {
        ProxState::EdgeDual { y } if y.len() == m => y,
        _ => vec![0.0; m],
    };
    for (ye, cap) in y.iter_mut().zip(&caps) {
        *ye = ye.clamp(-cap, *cap);
    }
    let mut y_ex = y.clone();
    let mut x_new = vec![0.0; m];
    let mut v = vec![0.0; n];

    // B^T B is the (unweighted) graph Laplacian on the edge-present subgraph:
    // its norm is at most twice the maximum degree.
    let l_bound = 2.0 * graph.max_degree() as f64;
    let mut l_est = match cfg.step_rule {
        StepRule::Fixed => l_bound,
        StepRule::Backtracking => (l_bound / 8.0).max(1e-12),
    };

    let mut theta: f64 = 1.0;
    let mut last_gap = f64::INFINITY;

    // v = f - B^T y
    let residual = |y: &[f64], v: &mut [f64]| {
        v.copy_from_slice(fv);
        for (e, edge) in graph.edges().iter().enumerate() {
            v[edge.i] -= y[e];
            v[edge.j] += y[e];
        }
    };
    // gap(v(y), y) = t J(v) - <y, B v>  (valid for feasible y)
    let gap_of = |y: &[f64], v: &[f64]| {
        let mut gap = 0.0;
        for (e, edge) in graph.edges().iter().enumerate() {
            let d = v[edge.i] - v[edge.j];
            gap += edge.weight * t * d.abs() - y[e] * d;
        }
        gap
    };

    for iter in 0..cfg.max_inner_iterations {
        if iter % GAP_CHECK_EVERY == 0 {
            residual(&y, &mut v);
            last_gap = gap_of(&y, &v);
            if last_gap <= tol {
                *state = ProxState::EdgeDual { y };
                return Ok(f.like(v));
            }
        }

        residual(&y_ex, &mut v);
        loop {
            let tau = 1.0 / l_est;
            for (e, edge) in graph.edges().iter().enumerate() {
                let g = v[edge.i] - v[edge.j]; // = -(grad D)_e
                x_new[e] = (y_ex[e] + tau * g).clamp(-caps[e], caps[e]);
            }
            if matches!(cfg.step_rule, StepRule::Fixed) {
                break;
            }
            // Backtracking: accept once the quadratic upper model holds,
            // D(x) <= D(y_ex) + <grad, x - y_ex> + L/2 ||x - y_ex||^2.
            let mut vx = vec![0.0; n];
            residual(&x_new, &mut vx);
            let d_x = 0.5 * vx.iter().map(|r| r * r).sum::<f64>();
            let d_y = 0.5 * v.iter().map(|r| r * r).sum::<f64>();
            let mut lin = 0.0;
            let mut sq = 0.0;
            for (e, edge) in graph.edges().iter().enumerate() {
                let g = -(v[edge.i] - v[edge.j]);
                let dx = x_new[e] - y_ex[e];
                lin += g * dx;
                sq += dx * dx;
            }
            if d_x <= d_y + lin + 0.5 * l_est * sq + 1e-14 * d_y.abs() {
                l_est *= 0.97; // trial larger steps again later
                break;
            }
            l_est = (l_est * 2.0).min(l_bound * 4.0);
        }

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;

        // Adaptive restart (gradient-mapping test): if the momentum points
        // against the latest step, drop it.
        let mut restart_dot = 0.0;
        for e in 0..m {
            restart_dot += (y_ex[e] - x_new[e]) * (x_new[e] - y[e]);
        }
        if restart_dot > 0.0 {
            theta = 1.0;
            y_ex.copy_from_slice(&x_new);
        } else {
            for e in 0..m {
                y_ex[e] = x_new[e] + beta * (x_new[e] - y[e]);
            }
            theta = theta_next;
        }
        std::mem::swap(&mut y, &mut x_new);
    }

    residual(&y, &mut v);
    last_gap = last_gap.min(gap_of(&y, &v));
    *state = ProxState::EdgeDual { y };
    Err(Error::ProxNoConvergence {
        iterations: cfg.max_inner_iterations,
        gap: last_gap,
        tolerance: tol,
    })
}

/// Isotropic prox: accelerated primal-dual iteration with per-node ball
/// projections.
pub(super) fn prox_isotropic(
    tv: &GraphTotalVariation,
    f: &Signal,
    t: f64,
    cfg: &ProxConfig,
    state: &mut ProxState,
) -> Result<Signal> {
    let graph = tv.graph();
    let n = graph.node_count();
    let fv = f.values();
    let f_norm = f.norm2();
    let (adj_off, adj) = graph.adjacency();
    let m2 = adj.len(); // directed entries, two per edge
    if m2 == 0 || f_norm == 0.0 {
        *state = ProxState::PrimalDual { v: fv.to_vec(), z: vec![0.0; m2] };
        return Ok(if f_norm == 0.0 { f.like(vec![0.0; n]) } else { f.clone() });
    }

    let sw = tv.sqrt_weights();
    let tol = cfg.dual_tolerance * f_norm * f_norm;

    // ||G||^2 = ||G^T G|| = 2 ||L_w|| <= 4 max_i sum_j w_ij
    let g_norm = (4.0 * graph.max_weighted_degree()).sqrt().max(1e-300);
    let mut tau = 1.0 / g_norm;
    let mut sigma = 1.0 / g_norm;

    let (mut v, mut z) = match std::mem::take(state) {
        ProxState::PrimalDual { v, z } if v.len() == n && z.len() == m2 => (v, z),
        _ => (fv.to_vec(), vec![0.0; m2]),
    };
    project_groups(&mut z, adj_off, t);
    let mut v_bar = v.clone();
    let mut v_prev = vec![0.0; n];
    let mut gt_z = vec![0.0; n];
    let mut last_gap = f64::INFINITY;

    for iter in 0..cfg.max_inner_iterations {
        if iter % GAP_CHECK_EVERY == 0 {
            // gap(v, z) = [1/2||v-f||^2 + t J(v)] - [<G^T z, f> - 1/2||G^T z||^2]
            apply_gt(graph, sw, &z, &mut gt_z);
            let vsig = f.like(v.clone());
            let j_v = tv.eval(&vsig)?;
            let p_val: f64 = 0.5
                * v.iter()
                    .zip(fv)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                + t * j_v;
            let d_val: f64 = gt_z
                .iter()
                .zip(fv)
                .map(|(g, b)| g * b)
                .sum::<f64>()
                - 0.5 * gt_z.iter().map(|g| g * g).sum::<f64>();
            last_gap = p_val - d_val;
            if last_gap <= tol {
                *state = ProxState::PrimalDual { v: v.clone(), z };
                return Ok(vsig);
            }
        }

        // z <- proj( z + sigma G v_bar ), group-wise balls of radius t
        for node in 0..n {
            for pos in adj_off[node]..adj_off[node + 1] {
                let (nbr, e) = adj[pos];
                z[pos] += sigma * sw[e] * (v_bar[node] - v_bar[nbr]);
            }
        }
        project_groups(&mut z, adj_off, t);

        // v <- (v + tau (f - G^T z)) / (1 + tau)
        apply_gt(graph, sw, &z, &mut gt_z);
        v_prev.copy_from_slice(&v);
        for i in 0..n {
            v[i] = (v[i] + tau * (fv[i] - gt_z[i])) / (1.0 + tau);
        }

        // acceleration for the 1-strongly-convex data term
        let theta = 1.0 / (1.0 + 2.0 * tau).sqrt();
        tau *= theta;
        sigma /= theta;
        for i in 0..n {
            v_bar[i] = v[i] + theta * (v[i] - v_prev[i]);
        }
    }

    *state = ProxState::PrimalDual { v, z };
    Err(Error::ProxNoConvergence {
        iterations: cfg.max_inner_iterations,
        gap: last_gap,
        tolerance: tol,
    })
}

/// `out = G^T z` for the node-grouped difference map.
fn apply_gt(
    graph: &crate::domain::WeightedGraph,
    sw: &[f64],
    z: &[f64],
    out: &mut [f64],
) {
    let (adj_off, adj) = graph.adjacency();
    out.iter_mut().for_each(|o| *o = 0.0);
    for node in 0..graph.node_count() {
        for pos in adj_off[node]..adj_off[node + 1] {
            let (nbr, e) = adj[pos];
            let c = sw[e] * z[pos];
            out[node] += c;
            out[nbr] -= c;
        }
    }
}

/// Project each node group of `z` onto the `l2` ball of radius `r`.
fn project_groups(z: &mut [f64], adj_off: &[usize], r: f64) {
    for node in 0..adj_off.len() - 1 {
        let group = &mut z[adj_off[node]..adj_off[node + 1]];
        let norm2: f64 = group.iter().map(|a| a * a).sum();
        if norm2 > r * r {
            let scale = r / norm2.sqrt();
            group.iter_mut().for_each(|a| *a *= scale);
        }
    }
}
