//! End-to-end behavior of the three proximal eigenpair flows: monotone
//! invariants along trajectories, convergence on calibrated instances, and
//! fixed-point behavior at exactly-known eigenpairs.

mod support;

use nleig::domain::{two_moons, WeightedGraph};
use nleig::eval::{prox_shrinkage_oracle, theta};
use nleig::flows::{
    agp_run, agp_step, fagp_run, fagp_step, ng_run, ng_step, FlowConfig,
};
use nleig::functionals::{
    subgrad_from_prox, GraphTotalVariation, L1Norm, OneHomogeneous, ProxConfig, ProxState,
    TvFlavor,
};
use nleig::{Domain, GridDomain, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{best_threshold_cut, connected_components};

const THETA_BAR: f64 = std::f64::consts::PI / 360.0;

/// Zero-mean rectangle indicator on a 2-D grid.
fn rectangle_init(grid: &GridDomain, x0: usize, y0: usize, w: usize, h: usize) -> Signal {
    Signal::from_fn(grid, |i| {
        let ix = i % grid.width();
        let iy = i / grid.width();
        if ix >= x0 && ix < x0 + w && iy >= y0 && iy < y0 + h {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
    .zero_mean()
}

/// Noisy ±1 labels as a starting signal on the two-moons cloud.
fn noisy_labels(graph: &WeightedGraph, labels: &[f64], noise_std: f64, seed: u64) -> Signal {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std).unwrap();
    Signal::from_values(
        graph,
        labels.iter().map(|&l| l + normal.sample(&mut rng)).collect(),
    )
    .unwrap()
}

/// Fraction of nodes whose sign matches the labels, up to a global flip.
fn sign_agreement(u: &Signal, labels: &[f64]) -> f64 {
    let n = labels.len() as f64;
    let same = u
        .values()
        .iter()
        .zip(labels)
        .filter(|(v, l)| v.signum() == l.signum())
        .count() as f64;
    (same / n).max(1.0 - same / n)
}

#[test]
fn ng_steps_keep_monotone_invariants_on_rectangle() {
    let grid = GridDomain::new(16, 16, 1.0).unwrap();
    let tv = GraphTotalVariation::anisotropic_on_grid(&grid).unwrap();
    let cfg = ProxConfig::default();
    let u0 = rectangle_init(&grid, 4, 5, 6, 6);
    let dt = 0.5 * u0.norm2();
    // a short prox step yields (to first order) a subgradient at u0 itself
    let t_init = 0.01 * u0.norm2() * u0.norm2() / tv.eval(&u0).unwrap();
    let (_, mut p) = subgrad_from_prox(&tv, &u0, t_init, &cfg).unwrap();
    let mut u = u0;
    let mut state = ProxState::Cold;
    let ones = Signal::constant(&grid, 1.0).unwrap();
    let n_sqrt = (grid.node_count() as f64).sqrt();
    for _ in 0..60 {
        let (u_next, p_next) = ng_step(&tv, &u, &p, dt, &cfg, &mut state).unwrap();
        assert!(
            u_next.inner(&ones).unwrap().abs() <= 1e-8 * n_sqrt,
            "mean-zero invariant broken"
        );
        // the scheme never shrinks the iterate nor grows the subgradient
        let slack = 2.0 * cfg.primal_tolerance(u.norm2() + dt);
        assert!(u_next.norm2() >= u.norm2() - slack, "||u|| decreased");
        assert!(
            p_next.norm2() <= p.norm2() + slack * p.norm2() / dt,
            "||p|| increased"
        );
        let q_before = tv.eval(&u).unwrap() / u.norm2();
        let q_after = tv.eval(&u_next).unwrap() / u_next.norm2();
        assert!(
            q_after <= q_before + 1e-4 * (1.0 + q_before),
            "J/||u|| increased: {q_before} -> {q_after}"
        );
        // mirror the runner: project the rounding residual of the constant
        // component back out, so it cannot compound across steps
        u = u_next.zero_mean();
        p = p_next;
    }
}

#[test]
fn ng_run_rectangle_reaches_numerical_eigenfunction() {
    let grid = GridDomain::new(16, 16, 1.0).unwrap();
    let tv = GraphTotalVariation::anisotropic_on_grid(&grid).unwrap();
    let prox_cfg = ProxConfig::default();
    let u0 = rectangle_init(&grid, 4, 5, 6, 6);
    let cfg = FlowConfig {
        epsilon: 1e-9,
        max_outer_iterations: 400,
        theta_stop: Some(THETA_BAR),
        ..FlowConfig::default()
    };
    let res = ng_run(&tv, &u0, &cfg, &prox_cfg).unwrap();
    assert!(res.converged, "ng did not converge in {} iters", res.iterations);
    assert!(
        res.theta_final < THETA_BAR,
        "theta {} not below pi/360",
        res.theta_final
    );
    assert!(res.residual <= 1e-2, "residual {} too large", res.residual);
    // norm history is nondecreasing
    for w in res.history.windows(2) {
        assert!(w[1].norm_u >= w[0].norm_u * (1.0 - 1e-9), "||u|| decreased");
    }
    // the two eigenvalue estimates agree: Rayleigh-type quotient vs the
    // shrinkage factor of one proximal step applied to the converged state
    let lambda_run = res.lambda_star;
    let shrink =
        prox_shrinkage_oracle(&tv, &res.u_star, 0.5 / lambda_run, &prox_cfg).unwrap();
    assert!(shrink.is_eigen(), "converged state fails the shrinkage test");
    let lambda_hat = shrink.lambda_hat().expect("collinear shrinkage");
    assert!(
        (lambda_run - lambda_hat).abs() <= 0.01 * lambda_run,
        "eigenvalue estimates disagree: {lambda_run} vs {lambda_hat}"
    );
}

#[test]
fn agp_run_separates_two_moons_by_sign() {
    let (cloud, labels) = two_moons(60, 0.08, 2024).unwrap();
    let graph = WeightedGraph::knn(&cloud, 8, None).unwrap();
    // the k-NN graph must be connected for a two-cluster structure
    assert_eq!(
        connected_components(
            graph.node_count(),
            graph.edges().iter().map(|e| (e.i, e.j))
        ),
        1,
        "two-moons k-NN graph is disconnected; test setup invalid"
    );
    let tv = GraphTotalVariation::new(graph.clone(), TvFlavor::Anisotropic);
    let u0 = noisy_labels(&graph, &labels, 1.0, 7);
    let init_agreement = sign_agreement(&u0, &labels);
    assert!(
        init_agreement < 0.95,
        "init already at {init_agreement}, nothing to clean up"
    );
    let cfg = FlowConfig {
        epsilon: 1e-7,
        max_outer_iterations: 600,
        ..FlowConfig::default()
    };
    let prox_cfg = ProxConfig::default();
    let res = agp_run(&tv, &u0, &cfg, &prox_cfg).unwrap();
    let agreement = sign_agreement(&res.u_star, &labels);
    assert!(
        agreement >= 0.95,
        "converged state agrees with labels on only {agreement}"
    );
    assert!(res.residual <= 1e-2, "residual {} too large", res.residual);
    // Unit sphere and monotone J along the recorded history.
    for rec in &res.history {
        assert!((rec.norm_u - 1.0).abs() <= 1e-12, "iterate left the sphere");
    }
    for w in res.history.windows(2) {
        let (a, b) = (w[0].j.unwrap(), w[1].j.unwrap());
        assert!(b <= a + 1e-4 * (1.0 + a), "J increased: {a} -> {b}");
    }
    // displacement decays to below epsilon
    let first = res.history.first().unwrap().displacement;
    let last = res.history[res.history.len() - 2].displacement;
    assert!(last < cfg.epsilon && last < first);
}

#[test]
fn agp_steps_shrink_subgradient_norm() {
    let (cloud, labels) = two_moons(40, 0.08, 5).unwrap();
    let graph = WeightedGraph::knn(&cloud, 8, None).unwrap();
    let tv = GraphTotalVariation::new(graph.clone(), TvFlavor::Anisotropic);
    let cfg = ProxConfig::default();
    let mut u = noisy_labels(&graph, &labels, 0.8, 3)
        .zero_mean()
        .normalized()
        .unwrap();
    let dt = 0.5 / tv.eval(&u).unwrap();
    let mut state = ProxState::Cold;
    let mut p_norms = Vec::new();
    for _ in 0..40 {
        let (u_next, p_half, _) = agp_step(&tv, &u, dt, &cfg, &mut state).unwrap();
        p_norms.push(p_half.norm2());
        u = u_next;
    }
    for w in p_norms.windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + 1e-6) + 1e-8,
            "||p|| increased: {} -> {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn fagp_step_satisfies_per_step_inequalities() {
    let (cloud, labels) = two_moons(40, 0.08, 11).unwrap();
    let graph = WeightedGraph::knn(&cloud, 8, None).unwrap();
    let tv = GraphTotalVariation::new(graph.clone(), TvFlavor::Anisotropic);
    let l1 = L1Norm;
    let cfg = ProxConfig::default();
    let mut u = noisy_labels(&graph, &labels, 0.8, 13)
        .zero_mean()
        .normalized()
        .unwrap();
    let mut state = ProxState::Cold;
    let mut r_prev = f64::INFINITY;
    // fixed step, sized once from the initial quotient (as the runner does):
    // growing it like 1/R_k would inflate the prox subproblems as R falls
    let dt = l1.eval(&u).unwrap() / tv.eval(&u).unwrap();
    for _ in 0..40 {
        let r = tv.eval(&u).unwrap() / l1.eval(&u).unwrap();
        assert!(
            r <= r_prev * (1.0 + 1e-6),
            "quotient increased: {r_prev} -> {r}"
        );
        r_prev = r;
        let q = l1.subgradient(&u).unwrap();
        let step = fagp_step(&tv, &u, &q, r, dt, &cfg, &mut state).unwrap();
        let tol = cfg.primal_tolerance(u.norm2() + dt * r * q.norm2());
        // 1 = ||u||^2 <= <u_half, u> <= ||u_half||^2
        let cross = step.u_half.inner(&u).unwrap();
        let half_sq = step.u_half.norm2().powi(2);
        assert!(cross >= 1.0 - 2.0 * tol, "<u_half, u> = {cross} < 1");
        assert!(
            half_sq >= cross - 2.0 * tol,
            "||u_half||^2 = {half_sq} < <u_half,u> = {cross}"
        );
        // renormalising can only move closer to the previous iterate
        let d_next = step.u_next.distance(&u).unwrap();
        let d_half = step.u_half.distance(&u).unwrap();
        assert!(
            d_next <= d_half + 1e-12,
            "normalisation increased displacement: {d_half} -> {d_next}"
        );
        u = step.u_next;
    }
}

#[test]
fn fagp_with_equal_functionals_pins_quotient_at_one() {
    let grid = GridDomain::new(8, 8, 1.0).unwrap();
    let tv = GraphTotalVariation::anisotropic_on_grid(&grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u0 = Signal::from_fn(&grid, |_| rng.gen_range(-1.0..1.0)).unwrap();
    let cfg = FlowConfig {
        epsilon: 1e-8,
        max_outer_iterations: 50,
        ..FlowConfig::default()
    };
    let res = fagp_run(&tv, &tv, &u0, &cfg, &ProxConfig::default()).unwrap();
    for rec in &res.history {
        let r = rec.rayleigh.expect("quotient recorded");
        assert!((r - 1.0).abs() <= 1e-6, "R = {r} drifted from 1");
    }
}

#[test]
fn fagp_two_moons_approaches_best_threshold_cut() {
    let (cloud, labels) = two_moons(60, 0.08, 2024).unwrap();
    let graph = WeightedGraph::knn(&cloud, 8, None).unwrap();
    let tv = GraphTotalVariation::new(graph.clone(), TvFlavor::Anisotropic);
    let u0 = noisy_labels(&graph, &labels, 1.0, 7);
    let cfg = FlowConfig {
        epsilon: 1e-7,
        max_outer_iterations: 800,
        ..FlowConfig::default()
    };
    let res = fagp_run(&tv, &L1Norm, &u0, &cfg, &ProxConfig::default()).unwrap();
    let agreement = sign_agreement(&res.u_star, &labels);
    assert!(
        agreement >= 0.95,
        "converged state agrees with labels on only {agreement}"
    );
    // quotient history never increases
    for w in res.history.windows(2) {
        let (a, b) = (w[0].rayleigh.unwrap(), w[1].rayleigh.unwrap());
        assert!(b <= a * (1.0 + 1e-6), "R increased: {a} -> {b}");
    }
    // the converged quotient is what thresholding the state itself achieves
    let raw_edges: Vec<(usize, usize, f64)> = graph
        .edges()
        .iter()
        .map(|e| (e.i, e.j, e.weight))
        .collect();
    let best = best_threshold_cut(graph.node_count(), &raw_edges, res.u_star.values());
    assert!(
        res.lambda_star <= 1.05 * best,
        "R(u*) = {} exceeds 1.05 x best threshold cut {best}",
        res.lambda_star
    );
}

/// Exactly representable eigenpairs for the fixed-point checks.
mod fixed_points {
    use super::*;

    /// Single-edge eigenpair (see functionals tests): u = (a, -a), λ = w/a.
    fn two_node() -> (WeightedGraph, GraphTotalVariation, Signal, f64) {
        let w = 0.8;
        let graph = WeightedGraph::new(2, vec![(0, 1, w)]).unwrap();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let u = Signal::from_values(&graph, vec![a, -a]).unwrap();
        let tv = GraphTotalVariation::new(graph.clone(), TvFlavor::Anisotropic);
        (graph, tv, u, w / a)
    }

    /// Complete-graph eigenpair: on K4 with unit weights the zero-mean
    /// indicator of one node has subgradient (3, -1, -1, -1) = 4 u.
    fn k4() -> (WeightedGraph, GraphTotalVariation, Signal, f64) {
        let edges = vec![
            (0, 1, 1.0),
            (0, 2, 1.0),
            (0, 3, 1.0),
            (1, 2, 1.0),
            (1, 3, 1.0),
            (2, 3, 1.0),
        ];
        let graph = WeightedGraph::new(4, edges).unwrap();
        let u = Signal::from_values(&graph, vec![0.75, -0.25, -0.25, -0.25]).unwrap();
        let tv = GraphTotalVariation::new(graph.clone(), TvFlavor::Anisotropic);
        (graph, tv, u, 4.0)
    }

    #[test]
    fn eigenpairs_are_fixed_points_of_all_three_steps() {
        let cfg = ProxConfig::default();
        for (which, (_, tv, u, lambda)) in [two_node(), k4()].into_iter().enumerate() {
            // sanity: the pair passes the shrinkage test with the right λ
            let shrink = prox_shrinkage_oracle(&tv, &u, 0.25 / lambda, &cfg).unwrap();
            assert!(shrink.is_eigen(), "case {which}: not an eigenfunction");
            assert!(
                (shrink.lambda_hat().unwrap() - lambda).abs() <= 1e-6 * lambda,
                "case {which}: wrong eigenvalue"
            );

            let tol = 10.0 * cfg.primal_tolerance(2.0 * u.norm2());

            // unnormalised flow: u maps to itself
            let dt_ng = 0.5 * u.norm2();
            let p = u.scaled(lambda);
            let mut state = ProxState::Cold;
            let (u1, _) = ng_step(&tv, &u, &p, dt_ng, &cfg, &mut state).unwrap();
            assert!(
                u1.distance(&u).unwrap() <= tol,
                "case {which}: ng moved an eigenfunction by {}",
                u1.distance(&u).unwrap()
            );

            // normalised flow: unit-norm u maps to itself
            let un = u.normalized().unwrap();
            let mut state = ProxState::Cold;
            let lam_unit = tv.eval(&un).unwrap();
            let (u2, _, _) = agp_step(&tv, &un, 0.5 / lam_unit, &cfg, &mut state).unwrap();
            assert!(
                u2.distance(&un).unwrap() <= tol,
                "case {which}: agp moved an eigenfunction by {}",
                u2.distance(&un).unwrap()
            );
        }
    }

    #[test]
    fn double_nonlinear_eigenpair_is_fagp_fixed_point() {
        // On the single edge, q = sign(u) and the subgradient p = (w, -w)
        // satisfy p = R q exactly with R = J/||u||_1 = w: a genuine
        // eigenpair of the quotient problem.
        let cfg = ProxConfig::default();
        let (_, tv, u, _) = two_node();
        let un = u.normalized().unwrap();
        let q = L1Norm.subgradient(&un).unwrap();
        let r = tv.eval(&un).unwrap() / un.norm1();
        let p = tv.subgradient(&un).unwrap();
        assert!(p.distance(&q.scaled(r)).unwrap() <= 1e-12);
        let mut state = ProxState::Cold;
        let step = fagp_step(&tv, &un, &q, r, 1.0 / r, &cfg, &mut state).unwrap();
        let tol = 10.0 * cfg.primal_tolerance(2.0 * un.norm2());
        assert!(
            step.u_next.distance(&un).unwrap() <= tol,
            "fagp moved a double-nonlinear eigenfunction by {}",
            step.u_next.distance(&un).unwrap()
        );
    }

    #[test]
    fn theta_is_zero_at_eigenpairs() {
        let (_, tv, u, lambda) = two_node();
        let p = u.scaled(lambda);
        assert!(theta(&u, &p).unwrap() <= 1e-7);
        let canonical = tv.subgradient(&u).unwrap();
        assert!(p.distance(&canonical).unwrap() <= 1e-12);
    }
}
