//! Eigenpair solver for the grid Laplacian problem `-Δu = λ Q(u)`.
//!
//! `T(u) = -Δu` (Neumann boundary, mirrored ghost cells) is the subgradient
//! of the Dirichlet energy `J(u) = ½‖∇u‖²`, and `Q` is a pointwise nonlinear
//! operator (KdV right-hand side, cubic Schrödinger, or a custom
//! polynomial). The solver alternates two explicit flows:
//!
//! * the *main* flow `u_t = M(u)`, `M(u) = s Q(u)/‖Q(u)‖ − T(u)/‖T(u)‖`,
//!   `s = sign⟨Q(u), T(u)⟩`, whose steady states are eigenpairs, with the
//!   adaptive step `dt_M = 2⟨Δu, M⟩ / ‖∇M‖²` that keeps `J` from increasing;
//! * the *complementary* flow `u_t = C(u)`,
//!   `C(u) = −∂E + (⟨∂E, T⟩/‖T‖²) T`, which drives the constraint energy
//!   `E(u) = ½⟨Q(u), 1⟩²` to zero without changing `J` to first order
//!   (`⟨T, C⟩ = 0` exactly), with the Newton-like step
//!   `dt_C = −E / ⟨∂E, C⟩` that zeroes `E` within a first-order Taylor
//!   approximation. Without it the main flow drifts into the Neumann
//!   nullspace (constants) and returns the useless pair `λ = 0`, `u = const`.
//!
//! The reported eigenvalue is the quotient `λ = ⟨T(u), u⟩ / ⟨Q(u), u⟩`.

use crate::domain::GridDomain;
use crate::error::{Error, Result};
use crate::eval::theta;
use crate::flows::{EigenpairResult, IterationRecord};
use crate::signal::Signal;

/// Pointwise nonlinearity `Q` on the right-hand side of `-Δu = λ Q(u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PointwiseQ {
    /// Stationary KdV right-hand side `q(v) = -c v + v²/2` (`c` = wave speed).
    Kdv { c: f64 },
    /// Stationary 1D cubic Schrödinger right-hand side `q(v) = v³ - v`.
    CubicSchrodinger,
    /// `q(v) = Σ coeffs[i] · vⁱ`.
    Polynomial { coeffs: Vec<f64> },
}

impl PointwiseQ {
    /// `q(v)` at a single value.
    pub fn value(&self, v: f64) -> f64 {
        match self {
            PointwiseQ::Kdv { c } => -c * v + 0.5 * v * v,
            PointwiseQ::CubicSchrodinger => v * v * v - v,
            PointwiseQ::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, &a| acc * v + a)
            }
        }
    }

    /// Exact derivative `q'(v)`.
    pub fn derivative(&self, v: f64) -> f64 {
        match self {
            PointwiseQ::Kdv { c } => -c + v,
            PointwiseQ::CubicSchrodinger => 3.0 * v * v - 1.0,
            PointwiseQ::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, &a)| acc * v + i as f64 * a),
        }
    }

    /// Componentwise application.
    pub fn apply(&self, u: &Signal) -> Signal {
        u.like(u.values().iter().map(|&v| self.value(v)).collect())
    }

    /// Componentwise derivative `q'(u)`.
    pub fn apply_derivative(&self, u: &Signal) -> Signal {
        u.like(u.values().iter().map(|&v| self.derivative(v)).collect())
    }
}

/// How the complementary flow is combined with the main one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompWeightMode {
    /// Alternate main and complementary steps, each with its own adaptive
    /// step size (the default).
    AdaptiveStep,
    /// Single step along the merged direction `M(u) + alpha C(u)`. Since
    /// `⟨T, C⟩ = 0`, the adaptive main step size applies unchanged; no
    /// guidance exists for choosing `alpha` beyond "large enough".
    Merged { alpha: f64 },
}

/// Configuration for [`cg_run`].
#[derive(Debug, Clone)]
pub struct CGConfig {
    /// Stop once `‖u_{k+1} - u_k‖₂ < epsilon` over a full iteration.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub comp_weight_mode: CompWeightMode,
    pub record_history: bool,
}

impl Default for CGConfig {
    fn default() -> Self {
        CGConfig {
            epsilon: 1e-6,
            max_iterations: 50_000,
            comp_weight_mode: CompWeightMode::AdaptiveStep,
            record_history: true,
        }
    }
}

impl CGConfig {
    fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be positive".into(),
            ));
        }
        if let CompWeightMode::Merged { alpha } = self.comp_weight_mode {
            if !(alpha >= 0.0) || !alpha.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "merged-mode alpha must be nonnegative, got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

fn check_on_grid(u: &Signal, grid: &GridDomain, context: &'static str) -> Result<()> {
    use crate::domain::Domain;
    if u.domain_id() != grid.domain_id() || u.len() != grid.node_count() {
        return Err(Error::DomainMismatch { context });
    }
    Ok(())
}

/// Five-point (three-point in 1D) Laplacian with Neumann boundary handling
/// by mirrored ghost cells, scaled by `1/h²`. Returns `Δu`; negate for
/// `T(u) = -Δu`.
pub fn laplacian_neumann(u: &Signal, grid: &GridDomain) -> Result<Signal> {
    check_on_grid(u, grid, "laplacian_neumann")?;
    let (w, h) = (grid.width(), grid.height());
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let v = u.values();
    let mut out = vec![0.0; v.len()];
    for iy in 0..h {
        for ix in 0..w {
            let i = grid.node(ix, iy);
            let c = v[i];
            let mut acc = 0.0;
            // A mirrored ghost cell equals the boundary cell itself, so the
            // corresponding difference vanishes and the term is skipped.
            if ix > 0 {
                acc += v[i - 1] - c;
            }
            if ix + 1 < w {
                acc += v[i + 1] - c;
            }
            if iy > 0 {
                acc += v[i - w] - c;
            }
            if iy + 1 < h {
                acc += v[i + w] - c;
            }
            out[i] = acc * inv_h2;
        }
    }
    Ok(u.like(out))
}

/// Discrete `‖∇v‖²`: sum of squared forward differences over grid edges,
/// divided by `h²`. Adjoint-consistent with [`laplacian_neumann`]:
/// `⟨-Δv, v⟩ = ‖∇v‖²` exactly (up to rounding).
pub fn grad_norm_sq(v: &Signal, grid: &GridDomain) -> Result<f64> {
    check_on_grid(v, grid, "grad_norm_sq")?;
    let (w, h) = (grid.width(), grid.height());
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let vals = v.values();
    let mut acc = 0.0;
    for iy in 0..h {
        for ix in 0..w {
            let i = grid.node(ix, iy);
            if ix + 1 < w {
                let d = vals[i + 1] - vals[i];
                acc += d * d;
            }
            if iy + 1 < h {
                let d = vals[i + w] - vals[i];
                acc += d * d;
            }
        }
    }
    Ok(acc * inv_h2)
}

/// Dirichlet energy `J(u) = ½‖∇u‖²`.
pub fn dirichlet_energy(u: &Signal, grid: &GridDomain) -> Result<f64> {
    Ok(0.5 * grad_norm_sq(u, grid)?)
}

fn t_op(u: &Signal, grid: &GridDomain) -> Result<Signal> {
    Ok(laplacian_neumann(u, grid)?.scaled(-1.0))
}

/// Main-flow direction `M(u) = s Q(u)/‖Q(u)‖ - T(u)/‖T(u)‖`,
/// `s = sign⟨Q(u), T(u)⟩`. Satisfies `‖M‖ ≤ 2`; vanishes exactly at
/// eigenpairs with positive eigenvalue.
pub fn m_op(u: &Signal, q: &PointwiseQ, grid: &GridDomain) -> Result<Signal> {
    let t = t_op(u, grid)?;
    let qu = q.apply(u);
    let nt = t.norm2();
    let nq = qu.norm2();
    if nt == 0.0 {
        return Err(Error::DegenerateInput(
            "T(u) = 0: u is constant, the degenerate state the flow must avoid".into(),
        ));
    }
    if nq == 0.0 {
        return Err(Error::DegenerateInput("Q(u) vanishes identically".into()));
    }
    let s = if qu.inner(&t)? >= 0.0 { 1.0 } else { -1.0 };
    qu.scaled(s / nq).sub(&t.scaled(1.0 / nt))
}

/// Constraint energy `E(u) = ½ ⟨Q(u), 1⟩²`; zero exactly on the subspace of
/// states whose image under `Q` has zero mass.
pub fn e_energy(u: &Signal, q: &PointwiseQ) -> f64 {
    let mass: f64 = u.values().iter().map(|&v| q.value(v)).sum();
    0.5 * mass * mass
}

/// Gradient of [`e_energy`]: `∂E = ⟨Q(u), 1⟩ · q'(u)` componentwise.
pub fn e_grad(u: &Signal, q: &PointwiseQ) -> Signal {
    let mass: f64 = u.values().iter().map(|&v| q.value(v)).sum();
    q.apply_derivative(u).scaled(mass)
}

/// Complementary-flow direction
/// `C(u) = -∂E + (⟨∂E, T⟩/‖T‖²) T`, the projection of `-∂E` onto the
/// orthogonal complement of `T(u)`: descends `E` while leaving `J`
/// unchanged to first order (`⟨T, C⟩ = 0`).
pub fn c_op(u: &Signal, q: &PointwiseQ, grid: &GridDomain) -> Result<Signal> {
    let t = t_op(u, grid)?;
    let nt2 = t.inner(&t)?;
    if nt2 == 0.0 {
        return Err(Error::DegenerateInput(
            "T(u) = 0: complementary direction undefined on constants".into(),
        ));
    }
    let g = e_grad(u, q);
    let coeff = g.inner(&t)? / nt2;
    t.scaled(coeff).sub(&g)
}

/// Adaptive main step `dt_M = 2⟨Δu, M⟩ / ‖∇M‖²` — the nonzero root of the
/// quadratic `J(u + dt M) - J(u)`, so the main step leaves the Dirichlet
/// energy unchanged. Falls back to `0.1 h² ‖u‖/‖M‖` when the formula gives
/// a nonpositive or nonfinite value, and to `0` when `M = 0` (steady state).
pub fn dt_main(u: &Signal, m: &Signal, grid: &GridDomain) -> Result<f64> {
    check_on_grid(u, grid, "dt_main")?;
    let nm = m.norm2();
    if nm == 0.0 {
        return Ok(0.0);
    }
    let num = 2.0 * laplacian_neumann(u, grid)?.inner(m)?;
    let den = grad_norm_sq(m, grid)?;
    let dt = num / den;
    if dt.is_finite() && dt > 0.0 {
        Ok(dt)
    } else {
        let h = grid.spacing();
        Ok(0.1 * h * h * u.norm2() / nm)
    }
}

/// Adaptive complementary step `dt_C = -E / ⟨∂E, C⟩ ≥ 0`, chosen so one step
/// along `C` cancels `E` within a first-order Taylor approximation. Returns
/// `0` (skip the step) when `E = 0` or the denominator vanishes.
pub fn dt_comp(u_half: &Signal, q: &PointwiseQ, grid: &GridDomain) -> Result<f64> {
    let e = e_energy(u_half, q);
    if e == 0.0 {
        return Ok(0.0);
    }
    let c = c_op(u_half, q, grid)?;
    let den = e_grad(u_half, q).inner(&c)?;
    let dt = -e / den;
    if dt.is_finite() && dt > 0.0 {
        Ok(dt)
    } else {
        Ok(0.0)
    }
}

/// Per-iteration step diagnostics from [`cg_run`].
#[derive(Debug, Clone)]
pub struct CgStepDiagnostics {
    pub k: usize,
    /// Main step actually taken, after the monotonicity backtracking.
    pub dt_m: f64,
    /// Raw adaptive main step before backtracking (the energy-neutral root).
    pub dt_m_full: f64,
    /// Number of times the main step was halved before acceptance.
    pub backtracks: usize,
    /// Step size of the first complementary sub-step of the iteration.
    pub dt_c: f64,
    /// Complementary sub-steps taken this iteration (see [`cg_run`] on why
    /// one is not enough).
    pub comp_steps: usize,
    /// Constraint energy after the complementary phase of iteration `k`.
    pub e_after: f64,
    /// Largest `|⟨T(u), C(u)⟩| / (‖T‖‖C‖)` over the iteration's
    /// complementary evaluations; zero by construction, reported as
    /// measured.
    pub tc_cosine: f64,
}

/// Result of [`cg_run`]: the eigenpair plus physics-specific step
/// diagnostics that the generic history rows cannot carry.
#[derive(Debug, Clone)]
pub struct CgRun {
    pub result: EigenpairResult,
    pub steps: Vec<CgStepDiagnostics>,
}

fn lambda_quotient(t: &Signal, qu: &Signal, u: &Signal) -> Result<f64> {
    let den = qu.inner(u)?;
    let lam = t.inner(u)? / den;
    if lam.is_finite() {
        Ok(lam)
    } else {
        Err(Error::DegenerateTrajectory(
            "eigenvalue quotient undefined: <Q(u), u> = 0".into(),
        ))
    }
}

/// Relative target for the complementary phase: iterate until
/// `E(u) <= COMP_TARGET_REL * ||u||²` (or the phase stalls).
const COMP_TARGET_REL: f64 = 1e-10;
/// Hard cap on complementary sub-steps per outer iteration. Each sub-step
/// halves `⟨Q(u), 1⟩` at worst, so 64 covers any realistic magnitude.
const COMP_MAX_SUBSTEPS: usize = 64;
/// Hard cap on main-step halvings per outer iteration; 2⁻⁴⁰ of the raw
/// step is far below any meaningful displacement.
const CG_BACKTRACK_MAX: usize = 40;
/// Relative slack for the Dirichlet-energy monotonicity test, covering
/// floating-point noise in the energy evaluation.
const CG_J_SLACK: f64 = 1e-12;
/// Trust region: a trial iterate may not move farther than this fraction
/// of the current norm in a single outer iteration.
const CG_MAX_REL_DISPLACEMENT: f64 = 0.5;

/// Outcome of one complementary phase.
struct CompPhase {
    u: Signal,
    /// `dt_C` of the first sub-step.
    dt_c: f64,
    steps: usize,
    e_after: f64,
    /// Worst T–C cosine observed.
    tc_cosine: f64,
}

/// Complementary phase at `u`: repeat the adaptive step `u += dt_C C(u)`
/// until the constraint energy is numerically zero.
///
/// `E` vanishes quadratically at its root (both `E` and `∂E` carry a factor
/// `⟨Q(u), 1⟩`), so the first-order step `dt_C = -E/⟨∂E, C⟩` halves
/// `⟨Q(u), 1⟩` instead of cancelling it; reaching `E ≈ 0` within one outer
/// iteration therefore needs the loop. Every sub-step uses the paper
/// step-size formula, so the phase follows the same flow, just to
/// completion.
fn comp_phase(u0: &Signal, q: &PointwiseQ, grid: &GridDomain) -> Result<CompPhase> {
    let mut u = u0.clone();
    let mut dt_first = 0.0;
    let mut steps = 0;
    let mut tc_worst = 0.0f64;
    let mut e = e_energy(&u, q);
    let target = COMP_TARGET_REL * u.norm2().powi(2);
    while e > target && steps < COMP_MAX_SUBSTEPS {
        let c = c_op(&u, q, grid)?;
        let t = t_op(&u, grid)?;
        let nc = c.norm2();
        if nc > 0.0 {
            let cos = t.inner(&c)? / (t.norm2() * nc);
            if cos.abs() > tc_worst.abs() {
                tc_worst = cos;
            }
        }
        let den = e_grad(&u, q).inner(&c)?;
        let dt = -e / den;
        if !dt.is_finite() || dt <= 0.0 {
            break; // flat direction; nothing more the flow can do here
        }
        if steps == 0 {
            dt_first = dt;
        }
        let u_next = u.axpy(dt, &c)?;
        let e_next = e_energy(&u_next, q);
        if !(e_next < e) {
            break; // no further progress (rounding floor)
        }
        u = u_next;
        e = e_next;
        steps += 1;
    }
    Ok(CompPhase {
        u,
        dt_c: dt_first,
        steps,
        e_after: e,
        tc_cosine: tc_worst,
    })
}

/// Flow for `-Δu = λ Q(u)`: an initial complementary phase, then
/// alternating main and complementary phases until the full-iteration
/// displacement drops below `epsilon`.
///
/// Each complementary phase runs the adaptive step to completion
/// (`E ≈ 0`, see [`comp_phase`]); a single step only halves the constraint
/// mass, which lets the main steps re-inject `E` faster than it decays and
/// destabilises the run.
///
/// The raw adaptive main step ([`dt_main`]) is the energy-neutral root of
/// the Dirichlet-energy parabola along `M`: it is the largest step that
/// does not increase `J`, but it leaves no dissipation margin, and the
/// complementary phase always adds a second-order amount of `J`. Taken
/// verbatim, the combined update therefore drifts `J` slowly upward and
/// the iteration wanders off (this is observable even when started at an
/// exact eigenfunction). Each outer iteration instead takes the largest
/// halving of the raw step whose combined main-plus-complementary update
/// keeps `J` non-increasing (within floating-point slack) and displaces
/// the state by at most half its norm; in practice this accepts the half
/// step, the exact minimiser of the same parabola. The halving count is
/// reported per iteration in [`CgStepDiagnostics`].
///
/// History rows carry the Dirichlet energy as `j`, the quotient
/// `⟨T(u), u⟩/⟨Q(u), u⟩` as `lambda`, and the angle between `T(u)` and
/// `Q(u)` as `theta`. A run that lands on a near-constant state (the
/// `λ = 0` degeneracy the complementary flow exists to prevent) is an error.
pub fn cg_run(
    u0: &Signal,
    q: &PointwiseQ,
    grid: &GridDomain,
    cfg: &CGConfig,
) -> Result<CgRun> {
    cfg.check()?;
    check_on_grid(u0, grid, "cg_run")?;
    let degenerate = |u: &Signal| -> bool {
        let n = u.norm2();
        n == 0.0 || u.zero_mean().norm2() <= 1e-6 * n
    };
    if degenerate(u0) {
        return Err(Error::DegenerateInput(
            "u0 is (near-)constant: in the Neumann nullspace".into(),
        ));
    }

    // Initial complementary phase, pushing u0 onto the E = 0 subspace.
    let mut u = comp_phase(u0, q, grid)?.u;
    u.ensure_finite("cg initial complementary phase")?;

    let mut history = Vec::new();
    let mut steps = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.max_iterations {
        if degenerate(&u) {
            return Err(Error::DegenerateTrajectory(
                "flow reached a near-constant state (degenerate solution, lambda = 0)".into(),
            ));
        }
        let m = m_op(&u, q, grid).map_err(|e| match e {
            Error::DegenerateInput(msg) => Error::DegenerateTrajectory(msg),
            other => other,
        })?;
        let j_before = dirichlet_energy(&u, grid)?;
        let j_cap = j_before * (1.0 + CG_J_SLACK);
        let disp_cap = CG_MAX_REL_DISPLACEMENT * u.norm2();
        let (u_next, diag) = match cfg.comp_weight_mode {
            CompWeightMode::AdaptiveStep => {
                let dt_full = dt_main(&u, &m, grid)?;
                let mut dt = dt_full;
                let mut backtracks = 0;
                let (phase, dt_used) = loop {
                    let u_half = u.axpy(dt, &m)?;
                    let phase = comp_phase(&u_half, q, grid)?;
                    let within_trust = phase.u.distance(&u)? <= disp_cap;
                    let monotone = dirichlet_energy(&phase.u, grid)? <= j_cap;
                    if (within_trust && monotone) || backtracks == CG_BACKTRACK_MAX {
                        break (phase, dt);
                    }
                    dt *= 0.5;
                    backtracks += 1;
                };
                let diag = CgStepDiagnostics {
                    k,
                    dt_m: dt_used,
                    dt_m_full: dt_full,
                    backtracks,
                    dt_c: phase.dt_c,
                    comp_steps: phase.steps,
                    e_after: phase.e_after,
                    tc_cosine: phase.tc_cosine,
                };
                (phase.u, diag)
            }
            CompWeightMode::Merged { alpha } => {
                let c = c_op(&u, q, grid)?;
                let t = t_op(&u, grid)?;
                let tc = {
                    let (nt, nc) = (t.norm2(), c.norm2());
                    if nc == 0.0 {
                        0.0
                    } else {
                        t.inner(&c)? / (nt * nc)
                    }
                };
                let dir = m.axpy(alpha, &c)?;
                let dt_full = dt_main(&u, &dir, grid)?;
                let mut dt = dt_full;
                let mut backtracks = 0;
                let (u_next, dt_used) = loop {
                    let trial = u.axpy(dt, &dir)?;
                    let within_trust = trial.distance(&u)? <= disp_cap;
                    let monotone = dirichlet_energy(&trial, grid)? <= j_cap;
                    if (within_trust && monotone) || backtracks == CG_BACKTRACK_MAX {
                        break (trial, dt);
                    }
                    dt *= 0.5;
                    backtracks += 1;
                };
                let diag = CgStepDiagnostics {
                    k,
                    dt_m: dt_used,
                    dt_m_full: dt_full,
                    backtracks,
                    dt_c: 0.0,
                    comp_steps: 0,
                    e_after: e_energy(&u_next, q),
                    tc_cosine: tc,
                };
                (u_next, diag)
            }
        };
        u_next.ensure_finite("cg iteration")?;
        let displacement = u_next.distance(&u)?;
        if cfg.record_history {
            let t = t_op(&u, grid)?;
            let qu = q.apply(&u);
            history.push(IterationRecord {
                k,
                j: Some(dirichlet_energy(&u, grid)?),
                norm_u: u.norm2(),
                lambda: lambda_quotient(&t, &qu, &u)?,
                theta: theta(&t, &qu)?,
                rayleigh: None,
                displacement,
            });
            steps.push(diag);
        }
        u = u_next;
        iterations = k + 1;
        if displacement < cfg.epsilon {
            converged = true;
            break;
        }
    }

    if degenerate(&u) {
        return Err(Error::DegenerateTrajectory(
            "flow reached a near-constant state (degenerate solution, lambda = 0)".into(),
        ));
    }
    let t = t_op(&u, grid)?;
    let qu = q.apply(&u);
    let lambda_star = lambda_quotient(&t, &qu, &u)?;
    let theta_final = theta(&t, &qu)?;
    let residual = t.axpy(-lambda_star, &qu)?.norm2() / t.norm2();
    if cfg.record_history {
        history.push(IterationRecord {
            k: iterations,
            j: Some(dirichlet_energy(&u, grid)?),
            norm_u: u.norm2(),
            lambda: lambda_star,
            theta: theta_final,
            rayleigh: None,
            displacement: 0.0,
        });
    }
    Ok(CgRun {
        result: EigenpairResult {
            u_star: u,
            lambda_star,
            theta_final,
            residual,
            iterations,
            converged,
            history,
        },
        steps,
    })
}
