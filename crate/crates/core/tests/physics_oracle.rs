//! Grid-physics checks against analytic and hand-computed references: the
//! Neumann Laplacian stencil, the main/complementary flow fields, the
//! adaptive step formulas, and the full soliton run.

use nleig::physics::{
    c_op, cg_run, dt_comp, dt_main, e_energy, e_grad, grad_norm_sq, laplacian_neumann, m_op,
    CGConfig, CompWeightMode, PointwiseQ,
};
use nleig::{GridDomain, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn random_signal(domain: &GridDomain, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Signal::from_fn(domain, |_| rng.gen_range(-2.0..2.0)).unwrap()
}

/// Independent discrete Dirichlet form: sum of products of forward
/// differences over grid edges, divided by h².
fn grad_dot(u: &Signal, v: &Signal, grid: &GridDomain) -> f64 {
    let (w, h) = (grid.width(), grid.height());
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let (uv, vv) = (u.values(), v.values());
    let mut acc = 0.0;
    for iy in 0..h {
        for ix in 0..w {
            let i = iy * w + ix;
            if ix + 1 < w {
                acc += (uv[i + 1] - uv[i]) * (vv[i + 1] - vv[i]);
            }
            if iy + 1 < h {
                acc += (uv[i + w] - uv[i]) * (vv[i + w] - vv[i]);
            }
        }
    }
    acc * inv_h2
}

#[test]
fn laplacian_annihilates_constants_and_conserves_mass() {
    for grid in [
        GridDomain::line(17, 0.3).unwrap(),
        GridDomain::new(9, 7, 0.5).unwrap(),
    ] {
        let c = Signal::constant(&grid, 3.7).unwrap();
        assert_eq!(laplacian_neumann(&c, &grid).unwrap().norm2(), 0.0);

        let u = random_signal(&grid, 5);
        let lap = laplacian_neumann(&u, &grid).unwrap();
        let total: f64 = lap.values().iter().sum();
        let scale: f64 = lap.values().iter().map(|v| v.abs()).sum::<f64>().max(1e-30);
        assert!(
            total.abs() <= 1e-12 * scale,
            "mirrored-boundary Laplacian must conserve mass: sum = {total:e}"
        );
    }
}

#[test]
fn laplacian_adjoint_identity_holds_on_random_fields() {
    for grid in [
        GridDomain::line(23, 0.4).unwrap(),
        GridDomain::new(8, 6, 1.3).unwrap(),
    ] {
        let u = random_signal(&grid, 11);
        let v = random_signal(&grid, 13);
        let lap_u = laplacian_neumann(&u, &grid).unwrap();
        let lhs = -lap_u.inner(&v).unwrap();
        let rhs = grad_dot(&u, &v, &grid);
        assert!(
            (lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0),
            "<-Δu, v> = {lhs}, gradient form = {rhs}"
        );
        // Quadratic-form specialisation against the library's own value.
        let energy = grad_norm_sq(&v, &grid).unwrap();
        let direct = -laplacian_neumann(&v, &grid).unwrap().inner(&v).unwrap();
        assert!((energy - direct).abs() <= 1e-10 * energy.max(1.0));
    }
}

#[test]
fn grad_norm_matches_hand_value_on_a_ramp() {
    let n = 12;
    let grid = GridDomain::line(n, 1.0).unwrap();
    let slope = 0.75;
    let ramp = Signal::from_fn(&grid, |i| slope * i as f64).unwrap();
    let want = (n - 1) as f64 * slope * slope;
    assert!((grad_norm_sq(&ramp, &grid).unwrap() - want).abs() <= 1e-12 * want);

    let flat = Signal::constant(&grid, -2.0).unwrap();
    assert_eq!(grad_norm_sq(&flat, &grid).unwrap(), 0.0);
}

#[test]
fn half_integer_cosine_is_an_exact_discrete_eigenfunction() {
    // u_i = cos(pi x_i / L) sampled at cell centres is reproduced exactly by
    // the mirrored-ghost stencil: -Δu = mu u with mu = 2(1 - cos(pi/n))/h².
    let n = 32;
    let h = 0.25;
    let grid = GridDomain::line(n, h).unwrap();
    let l = n as f64 * h;
    let u = Signal::from_fn(&grid, |i| (PI * grid.coords(i).0 / l).cos()).unwrap();
    let mu = 2.0 * (1.0 - (PI / n as f64).cos()) / (h * h);

    let t = laplacian_neumann(&u, &grid).unwrap().scaled(-1.0);
    let err = t.axpy(-mu, &u).unwrap().norm2() / (mu * u.norm2());
    assert!(err <= 1e-12, "relative eigen-defect {err:e}");

    // With Q = identity this state is a steady point of the main flow.
    let q = PointwiseQ::Polynomial { coeffs: vec![0.0, 1.0] };
    let m = m_op(&u, &q, &grid).unwrap();
    assert!(m.norm2() <= 1e-10, "M at an eigenfunction: {:e}", m.norm2());
}

#[test]
fn laplacian_converges_at_second_order_to_the_continuum_mode() {
    let l = 8.0;
    let rel_defect = |n: usize| -> f64 {
        let grid = GridDomain::line(n, l / n as f64).unwrap();
        let u = Signal::from_fn(&grid, |i| (PI * grid.coords(i).0 / l).cos()).unwrap();
        let lam = (PI / l) * (PI / l);
        let lap = laplacian_neumann(&u, &grid).unwrap();
        lap.axpy(lam, &u).unwrap().norm2() / (lam * u.norm2())
    };
    let coarse = rel_defect(32);
    let fine = rel_defect(64);
    assert!(coarse <= 1e-3, "coarse defect {coarse:e}");
    let ratio = coarse / fine;
    assert!(
        (3.9..=4.1).contains(&ratio),
        "halving h should quarter the defect, got ratio {ratio}"
    );
}

#[test]
fn pointwise_nonlinearities_have_consistent_derivatives() {
    let kinds = [
        PointwiseQ::Kdv { c: 0.7 },
        PointwiseQ::CubicSchrodinger,
        PointwiseQ::Polynomial { coeffs: vec![0.3, -1.2, 0.5, 2.0] },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for q in &kinds {
        for _ in 0..50 {
            let v: f64 = rng.gen_range(-3.0..3.0);
            let delta = 1e-5;
            let fd = (q.value(v + delta) - q.value(v - delta)) / (2.0 * delta);
            let exact = q.derivative(v);
            assert!(
                (fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                "{q:?} at {v}: fd {fd} vs exact {exact}"
            );
        }
    }
}

#[test]
fn main_flow_is_bounded_and_decreases_the_dirichlet_form() {
    let grid = GridDomain::line(16, 0.7).unwrap();
    let q = PointwiseQ::Kdv { c: 0.8 };
    // Negating the nonlinearity flips s and leaves M unchanged: for the KdV
    // right side this is the polynomial with mirrored coefficients.
    let neg_q = PointwiseQ::Polynomial { coeffs: vec![0.0, 0.8, -0.5] };
    for seed in [3, 19, 42] {
        let u = random_signal(&grid, seed);
        let m = m_op(&u, &q, &grid).unwrap();
        assert!(m.norm2() <= 2.0 + 1e-12, "difference of unit vectors");

        let t = laplacian_neumann(&u, &grid).unwrap().scaled(-1.0);
        let descent = t.inner(&m).unwrap();
        assert!(
            descent <= 1e-12 * t.norm2(),
            "<T, M> = {descent} must be nonpositive"
        );

        let m_neg = m_op(&u, &neg_q, &grid).unwrap();
        assert!(m.distance(&m_neg).unwrap() <= 1e-12);
    }
}

#[test]
fn constraint_energy_gradient_matches_central_differences() {
    let grid = GridDomain::line(10, 0.4).unwrap();
    let q = PointwiseQ::Kdv { c: 1.3 };
    let u = random_signal(&grid, 29);
    let g = e_grad(&u, &q);
    let delta = 1e-5;
    for i in 0..u.len() {
        let mut plus = u.values().to_vec();
        let mut minus = plus.clone();
        plus[i] += delta;
        minus[i] -= delta;
        let ep = e_energy(&Signal::from_values(&grid, plus).unwrap(), &q);
        let em = e_energy(&Signal::from_values(&grid, minus).unwrap(), &q);
        let fd = (ep - em) / (2.0 * delta);
        let gi = g.values()[i];
        assert!(
            (fd - gi).abs() <= 1e-5 * gi.abs().max(1.0),
            "component {i}: fd {fd} vs grad {gi}"
        );
    }
}

#[test]
fn constraint_energy_vanishes_where_the_nonlinearity_does() {
    let grid = GridDomain::line(8, 1.0).unwrap();
    let c = 1.0;
    let q = PointwiseQ::Kdv { c };
    // q(2c) = -2c² + 2c² = 0 exactly.
    let flat = Signal::constant(&grid, 2.0 * c).unwrap();
    assert_eq!(q.apply(&flat).norm2(), 0.0);
    assert_eq!(e_energy(&flat, &q), 0.0);
    assert_eq!(e_grad(&flat, &q).norm2(), 0.0);

    // Same pointwise zeros on a non-constant state, so T(u) ≠ 0 and the
    // complementary field is well defined — and exactly zero.
    let alt = Signal::from_fn(&grid, |i| if i % 2 == 0 { 0.0 } else { 2.0 * c }).unwrap();
    assert_eq!(e_energy(&alt, &q), 0.0);
    assert_eq!(c_op(&alt, &q, &grid).unwrap().norm2(), 0.0);
    assert_eq!(dt_comp(&alt, &q, &grid).unwrap(), 0.0);
}

#[test]
fn complementary_flow_is_orthogonal_and_descends_the_constraint() {
    let grid = GridDomain::new(6, 5, 0.9).unwrap();
    let q = PointwiseQ::Kdv { c: 0.6 };
    for seed in [7, 23, 77] {
        let u = random_signal(&grid, seed);
        let t = laplacian_neumann(&u, &grid).unwrap().scaled(-1.0);
        let c = c_op(&u, &q, &grid).unwrap();
        let cross = t.inner(&c).unwrap();
        assert!(
            cross.abs() <= 1e-10 * (t.norm2() * c.norm2()).max(1.0),
            "<T, C> = {cross:e}"
        );
        let slope = e_grad(&u, &q).inner(&c).unwrap();
        assert!(slope <= 1e-12, "<∂E, C> = {slope} must be nonpositive");
    }
}

#[test]
fn adaptive_steps_match_hand_evaluation_on_a_four_node_line() {
    let grid = GridDomain::line(4, 0.5).unwrap();
    let u = Signal::from_values(&grid, vec![1.0, 3.0, 2.0, 0.0]).unwrap();
    // By hand (h² = 0.25): Δu = (8, -12, -4, 8), T = -Δu = (-8, 12, 4, -8).
    let m = Signal::from_values(&grid, vec![0.5, -0.25, 0.25, -0.5]).unwrap();
    // <Δu, M> = 4 + 3 - 1 - 4 = 2 and ‖∇M‖² = 1.375 / 0.25 = 5.5,
    // so dt_M = 2·2 / 5.5 = 8/11.
    let dt = dt_main(&u, &m, &grid).unwrap();
    assert!((dt - 8.0 / 11.0).abs() <= 1e-12);
    // Doubling M halves the step.
    let dt2 = dt_main(&u, &m.scaled(2.0), &grid).unwrap();
    assert!((dt2 - 4.0 / 11.0).abs() <= 1e-12);
    // A negative numerator falls back to the fixed safeguard
    // 0.1 h² ‖u‖ / ‖M‖ instead of stepping backwards.
    let dt_fb = dt_main(&u, &m.scaled(-1.0), &grid).unwrap();
    let want_fb = 0.1 * 0.25 * u.norm2() / m.norm2();
    assert!(dt_fb > 0.0 && (dt_fb - want_fb).abs() <= 1e-12 * want_fb);

    // Complementary field by hand with the KdV nonlinearity, c = 1:
    // Q(u) = (-0.5, 1.5, 0, 0), ΣQ = 1, E = 0.5, ∂E = (0, 2, 1, -1),
    // <∂E, T> = 36, ‖T‖² = 288, so
    // C = -∂E + (36/288) T = (-1, -0.5, -0.5, 0) and dt_C = -E/<∂E,C> = 1/3.
    let q = PointwiseQ::Kdv { c: 1.0 };
    let c_hand = Signal::from_values(&grid, vec![-1.0, -0.5, -0.5, 0.0]).unwrap();
    let c_got = c_op(&u, &q, &grid).unwrap();
    assert!(c_got.distance(&c_hand).unwrap() <= 1e-12);
    let dt_c = dt_comp(&u, &q, &grid).unwrap();
    assert!((dt_c - 1.0 / 3.0).abs() <= 1e-12);
    // The step decreases the constraint energy (to zero only in the limit:
    // E is quartic along the ray, the formula linearises it).
    let stepped = u.axpy(dt_c, &c_got).unwrap();
    assert!(e_energy(&stepped, &q) < e_energy(&u, &q));
}

#[test]
fn solver_rejects_states_in_the_laplacian_nullspace() {
    let grid = GridDomain::line(64, 0.2).unwrap();
    let q = PointwiseQ::Kdv { c: 1.0 };
    let flat = Signal::constant(&grid, 1.5).unwrap();
    assert!(cg_run(&flat, &q, &grid, &CGConfig::default()).is_err());
}

#[test]
fn kdv_run_lands_on_the_soliton_profile() {
    let n = 256;
    let length = 40.0;
    let c = 1.0;
    let grid = GridDomain::line(n, length / n as f64).unwrap();
    let u0 = Signal::from_fn(&grid, |i| {
        let x = grid.coords(i).0 - 0.5 * length;
        3.0 * c * (-x * x / 8.0).exp()
    })
    .unwrap();
    let q = PointwiseQ::Kdv { c };
    let cfg = CGConfig {
        epsilon: 1e-5,
        max_iterations: 150_000,
        comp_weight_mode: CompWeightMode::AdaptiveStep,
        record_history: true,
    };
    let run = cg_run(&u0, &q, &grid, &cfg).unwrap();
    let res = &run.result;
    assert!(res.converged, "no convergence in {} iterations", res.iterations);
    assert!(res.lambda_star > 0.0);
    assert!(res.residual <= 1e-2, "eigen-residual {:e}", res.residual);
    assert!(
        res.theta_final.cos() >= (PI / 360.0).cos(),
        "angle between T(u) and Q(u): {:e}",
        res.theta_final
    );

    // The Dirichlet form is nonincreasing along the whole trajectory.
    let js: Vec<f64> = res.history.iter().map(|r| r.j.unwrap()).collect();
    for w in js.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "J rose: {} -> {}", w[0], w[1]);
    }

    // Every complementary phase parks the constraint at (numerical) zero,
    // and the two flow fields stay orthogonal wherever they were evaluated.
    let norm_sq_max = res
        .history
        .iter()
        .map(|r| r.norm_u * r.norm_u)
        .fold(0.0, f64::max);
    for s in &run.steps {
        assert!(
            s.e_after <= 1e-8 * norm_sq_max,
            "iteration {}: E after complementary phase = {:e}",
            s.k,
            s.e_after
        );
        assert!(s.tc_cosine <= 1e-10);
    }

    // Eigenvalue read-out agrees with the norm-ratio cross-check.
    let u = &res.u_star;
    let t = laplacian_neumann(u, &grid).unwrap().scaled(-1.0);
    let qu = q.apply(u);
    let lambda_ratio = t.norm2() / qu.norm2();
    assert!(
        (res.lambda_star - lambda_ratio).abs() <= 2e-2 * lambda_ratio,
        "quotient {} vs norm ratio {}",
        res.lambda_star,
        lambda_ratio
    );

    // Profile check: the converged state matches the closed-form soliton of
    // the reported eigenvalue, centred at the measured peak, to 5% in L2.
    let values = u.values();
    let peak = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!(peak > 0 && peak + 1 < n, "peak must be interior");
    // Parabolic refinement of the peak location.
    let (ym, y0, yp) = (values[peak - 1], values[peak], values[peak + 1]);
    let h = grid.spacing();
    let x_peak = grid.coords(peak).0 + 0.5 * h * (ym - yp) / (ym - 2.0 * y0 + yp);
    let a = (c * res.lambda_star).sqrt() / 2.0;
    let analytic = Signal::from_fn(&grid, |i| {
        let s = 1.0 / (a * (grid.coords(i).0 - x_peak)).cosh();
        3.0 * c * s * s
    })
    .unwrap();
    let rel_l2 = u.distance(&analytic).unwrap() / analytic.norm2();
    assert!(rel_l2 <= 5e-2, "relative L2 distance to soliton: {rel_l2:e}");
}
