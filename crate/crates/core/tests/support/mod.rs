//! Independent numerical oracles shared by the integration tests.
//!
//! Everything here is deliberately implemented from scratch on plain slices,
//! without touching the library's solvers, so the tests compare two
//! independent routes to the same quantity:
//!
//! * [`brute_prox`] — dense smoothed-Newton minimizer of the prox objective
//!   for tiny graphs (n ≤ ~8);
//! * [`jacobi_eigen`] — cyclic Jacobi eigendecomposition of symmetric
//!   matrices;
//! * [`connected_components`] — union-find component count;
//! * [`best_threshold_cut`] — exhaustive sweep of cut quotients over the
//!   level sets of a signal.

#![allow(dead_code)] // each test binary uses its own subset

/// Edge-difference coupling mirrored from the library (kept separate on
/// purpose; the oracle must not depend on library types).
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Anisotropic,
    Isotropic,
}

/// Solve `H x = b` for a small dense symmetric positive-definite `H` by
/// Gaussian elimination with partial pivoting; `h` is row-major `n × n`.
pub fn dense_solve(mut h: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    assert_eq!(h.len(), n * n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|a, r| h[a * n + col].abs().total_cmp(&h[r * n + col].abs()))
            .unwrap();
        if pivot_row != col {
            for j in 0..n {
                h.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = h[col * n + col];
        assert!(pivot != 0.0, "singular system in oracle solve");
        for row in (col + 1)..n {
            let factor = h[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                h[row * n + j] -= factor * h[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for j in (row + 1)..n {
            s -= h[row * n + j] * x[j];
        }
        x[row] = s / h[row * n + row];
    }
    x
}

/// One smoothing group: a set of weighted edge differences under a common
/// square root, `G(u) = sqrt(sum_e w_e (u_i - u_j)^2 + eps^2)`.
struct Group {
    edges: Vec<(usize, usize, f64)>,
}

fn build_groups(n: usize, edges: &[(usize, usize, f64)], flavor: Flavor) -> Vec<Group> {
    match flavor {
        // one group per edge: sum_e w_e |d_e| smoothed per edge
        Flavor::Anisotropic => edges
            .iter()
            .map(|&(i, j, w)| Group {
                // sqrt(w^2 d^2) = w|d|, so fold the weight into the square
                edges: vec![(i, j, w * w)],
            })
            .collect(),
        // one group per node over its incident edges
        Flavor::Isotropic => {
            let mut groups: Vec<Group> = (0..n).map(|_| Group { edges: Vec::new() }).collect();
            for &(i, j, w) in edges {
                groups[i].edges.push((i, j, w));
                groups[j].edges.push((i, j, w));
            }
            groups.retain(|g| !g.edges.is_empty());
            groups
        }
    }
}

/// Smoothed objective `F(v) = 0.5 ||v - f||^2 + t * sum_g G_g(v)` with its
/// gradient and (dense) Hessian.
fn smoothed_pieces(
    v: &[f64],
    f: &[f64],
    t: f64,
    groups: &[Group],
    eps: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        let d = v[i] - f[i];
        value += 0.5 * d * d;
        grad[i] += d;
        hess[i * n + i] += 1.0;
    }
    for g in groups {
        let mut s = eps * eps;
        for &(i, j, w) in &g.edges {
            let d = v[i] - v[j];
            s += w * d * d;
        }
        let root = s.sqrt();
        value += t * root;
        // b = sum w d (e_i - e_j); grad += t b / root
        let mut b = vec![0.0; n];
        for &(i, j, w) in &g.edges {
            let d = v[i] - v[j];
            b[i] += w * d;
            b[j] -= w * d;
        }
        for i in 0..n {
            grad[i] += t * b[i] / root;
        }
        // hess += t (A / root - b b^T / root^3), A = sum w (e_i-e_j)(e_i-e_j)^T
        for &(i, j, w) in &g.edges {
            let c = t * w / root;
            hess[i * n + i] += c;
            hess[j * n + j] += c;
            hess[i * n + j] -= c;
            hess[j * n + i] -= c;
        }
        let c3 = t / (root * root * root);
        for i in 0..n {
            if b[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                hess[i * n + j] -= c3 * b[i] * b[j];
            }
        }
    }
    (value, grad, hess)
}

/// Brute-force prox oracle: minimize `0.5||v-f||^2 + t J(v)` for the graph
/// functional by damped Newton on a smoothed objective, with the smoothing
/// driven down to 1e-12. The objective is 1-strongly convex, so a gradient
/// norm below `tol` certifies `||v - v*_eps|| <= tol`, and the smoothing
/// bias is bounded by `sqrt(2 t eps #groups)`; both are far below the 1e-4
/// comparisons the tests make.
pub fn brute_prox(
    n: usize,
    edges: &[(usize, usize, f64)],
    flavor: Flavor,
    f: &[f64],
    t: f64,
) -> Vec<f64> {
    assert_eq!(f.len(), n);
    let groups = build_groups(n, edges, flavor);
    let mut v = f.to_vec();
    let scale = f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    for k in 1..=6 {
        let eps = 10f64.powi(-2 * k); // 1e-2 .. 1e-12
        let tol = (1e-9 * scale).max(1e-13);
        for _ in 0..80 {
            let (value, grad, hess) = smoothed_pieces(&v, f, t, &groups, eps);
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gmax <= tol {
                break;
            }
            let step = dense_solve(hess, grad.clone());
            // backtracking on the smoothed objective
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> =
                    v.iter().zip(&step).map(|(x, s)| x - alpha * s).collect();
                let (tv, _, _) = smoothed_pieces(&trial, f, t, &groups, eps);
                if tv <= value || alpha < 1e-12 {
                    v = trial;
                    break;
                }
                alpha *= 0.5;
            }
        }
    }
    v
}

/// Objective value the oracle minimizes, with the exact (non-smoothed)
/// functional; used to cross-check optimality against library outputs.
pub fn prox_objective(
    edges: &[(usize, usize, f64)],
    flavor: Flavor,
    n: usize,
    f: &[f64],
    t: f64,
    v: &[f64],
) -> f64 {
    let mut fit = 0.0;
    for i in 0..f.len() {
        let d = v[i] - f[i];
        fit += 0.5 * d * d;
    }
    let j = match flavor {
        Flavor::Anisotropic => edges
            .iter()
            .map(|&(i, j, w)| w * (v[i] - v[j]).abs())
            .sum::<f64>(),
        Flavor::Isotropic => {
            let groups = build_groups(n, edges, Flavor::Isotropic);
            groups
                .iter()
                .map(|g| {
                    g.edges
                        .iter()
                        .map(|&(i, j, w)| w * (v[i] - v[j]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
        }
    };
    fit + t * j
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major).
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as rows, sorted
/// by descending eigenvalue.
pub fn jacobi_eigen(n: usize, a: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut vecs = vec![0.0; n * n];
    for i in 0..n {
        vecs[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off <= 1e-30 * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t_rot = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t_rot * t_rot + 1.0).sqrt();
                let s = t_rot * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = vecs[k * n + p];
                    let vkq = vecs[k * n + q];
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|row| vecs[row * n + col]).collect())
        .collect();
    (values, vectors)
}

/// Component count of an undirected graph by union-find.
pub fn connected_components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for (a, b) in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components
}

/// Sweep every level set `{u > s}` of `u` and return the smallest quotient
/// `cut(A) / ||m_A||_1`, where `cut(A)` is the weighted boundary of the set
/// and `m_A` is the zero-mean-shifted indicator — the same quotient the
/// TV-over-l1 minimization drives down, evaluated on binary candidates.
pub fn best_threshold_cut(n: usize, edges: &[(usize, usize, f64)], u: &[f64]) -> f64 {
    assert_eq!(u.len(), n);
    let mut levels: Vec<f64> = u.to_vec();
    levels.sort_by(|a, b| a.total_cmp(b));
    levels.dedup();
    let mut best = f64::INFINITY;
    // thresholds between consecutive distinct values
    for w in levels.windows(2) {
        let s = 0.5 * (w[0] + w[1]);
        let inside: Vec<bool> = u.iter().map(|&x| x > s).collect();
        let a = inside.iter().filter(|&&b| b).count();
        if a == 0 || a == n {
            continue;
        }
        let cut: f64 = edges
            .iter()
            .filter(|&&(i, j, _)| inside[i] != inside[j])
            .map(|&(_, _, w)| w)
            .sum();
        // zero-mean indicator: a nodes at 1 - a/n, n - a nodes at -a/n
        let h = a as f64 * (1.0 - a as f64 / n as f64)
            + (n - a) as f64 * (a as f64 / n as f64);
        let q = cut / h;
        if q < best {
            best = q;
        }
    }
    best
}
