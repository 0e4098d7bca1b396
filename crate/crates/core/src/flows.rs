//! Iterative flows for the eigenproblem of one-homogeneous functionals.
//!
//! All three flows look for pairs `(u, lambda)` with `lambda u in dJ(u)`
//! (or `lambda q in dJ(u)`, `q in dH(u)`, for quotients of two functionals)
//! by repeatedly solving small convex problems — each outer step is exactly
//! one proximal evaluation:
//!
//! * [`ng_run`] — unnormalised flow. The update solves
//!   `u_{k+1} = u_k + dt ( u_{k+1}/||u_k|| - p_{k+1}/||p_k|| )`, which in
//!   closed form is a prox of the rescaled iterate:
//!   `u_{k+1} = prox_J( u_k / g ; dt / (||p_k|| g) )` with
//!   `g = 1 - dt/||u_k||`. Along the iteration `<u_k, 1> = 0` is preserved,
//!   `||u_k||` grows, `||p_k||` decays, and the ratio `J(u_k)/||u_k||` is
//!   non-increasing. Admissible steps satisfy `0 < dt < ||u_k||`.
//! * [`agp_run`] — normalised flow on the unit sphere. One step solves
//!   `min_v J(v) + ||v - u_k||^2/(2 dt) - lambda_k ||v||^2 / 2` (a prox after
//!   completing the square) and renormalises. `J(u_k)` and `||p_k||` are
//!   non-increasing and `||u_k|| = 1` throughout. Admissible steps satisfy
//!   `dt < 1 / lambda_k`.
//! * [`fagp_run`] — flow for the quotient `R(u) = J(u)/H(u)` of two
//!   one-homogeneous functionals. One step is
//!   `u_{k+1/2} = prox_J( u_k + dt R_k q_k ; dt )`, `q_k in dH(u_k)`,
//!   followed by renormalisation; `R` is non-increasing.
//!
//! Stopping is governed by the step displacement `||u_{k+1} - u_k|| < eps`,
//! with an optional secondary criterion on the angle between the iterate and
//! its subgradient. Runs that exhaust the iteration budget return their
//! partial result with `converged = false` rather than failing.

use crate::error::{Error, Result};
use crate::eval::theta;
use crate::functionals::{subgrad_from_prox, OneHomogeneous, ProxConfig, ProxState};
use crate::signal::Signal;

/// Outer-loop configuration shared by the flows.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    /// Outer time step. `None` picks the algorithm default:
    /// `0.5 ||u0||` (ng), `0.5 ||u0||^2 / J(u0)` (agp), `1 / R(u0)` (fagp).
    pub dt: Option<f64>,
    /// Stop once `||u_{k+1} - u_k||_2 < epsilon`.
    pub epsilon: f64,
    /// Hard cap on outer iterations.
    pub max_outer_iterations: usize,
    /// Optional secondary stop: angle between iterate and subgradient.
    pub theta_stop: Option<f64>,
    /// Record one [`IterationRecord`] per outer iteration.
    pub record_history: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt: None,
            epsilon: 1e-6,
            max_outer_iterations: 500,
            theta_stop: None,
            record_history: true,
        }
    }
}

impl FlowConfig {
    fn check(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "dt must be positive and finite, got {dt}"
                )));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_outer_iterations must be positive".into(),
            ));
        }
        if let Some(th) = self.theta_stop {
            if !(th > 0.0) || !th.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "theta_stop must be positive, got {th}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-iteration diagnostics. The last row of a run describes the final
/// state and carries `displacement = 0`.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    /// `J(u_k)`; absent for flows without an underlying functional.
    pub j: Option<f64>,
    pub norm_u: f64,
    /// Eigenvalue estimate at `u_k` (`J/||u||^2`, or the quotient `R` for
    /// double-nonlinear flows).
    pub lambda: f64,
    /// Angle between the iterate and the vector it should be collinear with.
    pub theta: f64,
    /// Quotient `R(u_k) = J/H`; only populated by [`fagp_run`].
    pub rayleigh: Option<f64>,
    /// `||u_{k+1} - u_k||_2`.
    pub displacement: f64,
}

/// Final state of a flow.
#[derive(Debug, Clone)]
pub struct EigenpairResult {
    pub u_star: Signal,
    pub lambda_star: f64,
    pub theta_final: f64,
    /// Relative eigen-residual, `||p - lambda u|| / ||p||` (or with `q` in
    /// place of `u` for double-nonlinear problems).
    pub residual: f64,
    /// Outer iterations actually performed.
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

/// Relative eigen-residual `||p - lambda target||_2 / ||p||_2`.
///
/// For the single-nonlinear problem pass `target = u`; for the
/// double-nonlinear one pass `target = q in dH(u)`.
pub fn eigen_residual(p: &Signal, target: &Signal, lambda: f64) -> Result<f64> {
    let np = p.norm2();
    if np == 0.0 {
        return Err(Error::DegenerateInput(
            "eigen residual undefined for p = 0".into(),
        ));
    }
    Ok(p.axpy(-lambda, target)?.norm2() / np)
}

/// One step of the unnormalised flow.
///
/// Returns `(u_next, p_next)` where `p_next in dJ(u_next)` is recovered from
/// the prox optimality condition,
/// `p_next = ||p_k|| (u_k - g u_next) / dt`, `g = 1 - dt/||u_k||`.
pub fn ng_step<F: OneHomogeneous + ?Sized>(
    func: &F,
    u: &Signal,
    p: &Signal,
    dt: f64,
    prox_cfg: &ProxConfig,
    state: &mut ProxState,
) -> Result<(Signal, Signal)> {
    let norm_u = u.norm2();
    if !(dt > 0.0 && dt < norm_u) {
        return Err(Error::InvalidParameter(format!(
            "ng step needs 0 < dt < ||u_k||; dt = {dt}, ||u_k|| = {norm_u}"
        )));
    }
    let norm_p = p.norm2();
    if norm_p == 0.0 {
        return Err(Error::DegenerateTrajectory(
            "subgradient vanished; iterate lies in the nullspace of J".into(),
        ));
    }
    let g = 1.0 - dt / norm_u;
    let a = u.scaled(1.0 / g);
    let t_eff = dt / (norm_p * g);
    let u_next = func.prox_warm(&a, t_eff, prox_cfg, state)?;
    let p_next = u.axpy(-g, &u_next)?.scaled(norm_p / dt);
    Ok((u_next, p_next))
}

/// Unnormalised flow: run [`ng_step`] until the displacement (or the angle)
/// stops it.
///
/// `u0` is centred before the run; the flow preserves `<u_k, 1> = 0`
/// exactly. The initial subgradient comes from one *short* proximal step at
/// `u0` (1% of the decay time `||u0||^2 / J(u0)`), so that it is, to first
/// order, a subgradient at `u0` itself. Taking that step with a large time
/// instead would hand the scheme a subgradient belonging to a point far
/// down the decay path, whose norm misrepresents the scale of `dJ(u0)` —
/// the monotone norm growth of the iteration then fails and the trajectory
/// can contract to zero.
pub fn ng_run<F: OneHomogeneous + ?Sized>(
    func: &F,
    u0: &Signal,
    cfg: &FlowConfig,
    prox_cfg: &ProxConfig,
) -> Result<EigenpairResult> {
    cfg.check()?;
    let mut u = u0.zero_mean();
    if u.norm2() == 0.0 {
        return Err(Error::DegenerateInput(
            "initial state is constant; nothing to evolve".into(),
        ));
    }
    let dt = cfg.dt.unwrap_or(0.5 * u.norm2());
    let j0 = func.eval(&u)?;
    if j0 == 0.0 {
        return Err(Error::DegenerateTrajectory(
            "J(u0) = 0; u0 lies in the nullspace of J".into(),
        ));
    }
    let t_init = 0.01 * u.norm2() * u.norm2() / j0;
    let mut state = ProxState::Cold;
    let (_, mut p) = subgrad_from_prox(func, &u, t_init, prox_cfg)?;
    if p.norm2() == 0.0 {
        return Err(Error::DegenerateTrajectory(
            "initial subgradient is zero; u0 lies in the nullspace of J".into(),
        ));
    }

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.max_outer_iterations {
        let (u_next, p_next) = ng_step(func, &u, &p, dt, prox_cfg, &mut state)?;
        let displacement = u_next.distance(&u)?;
        if cfg.record_history {
            let j = func.eval(&u)?;
            let nu = u.norm2();
            history.push(IterationRecord {
                k,
                j: Some(j),
                norm_u: nu,
                lambda: j / (nu * nu),
                theta: theta(&u, &p)?,
                rayleigh: None,
                displacement,
            });
        }
        let th_next = theta(&u_next, &p_next)?;
        // The step preserves the mean in exact arithmetic, but the rescaling
        // by 1/g = 1/(1 - dt/||u||) > 1 amplifies any rounding residual of
        // the constant component geometrically — left alone, the drift
        // eventually dwarfs the signal. Re-centring projects back onto the
        // sector the flow actually lives in.
        u = u_next.zero_mean();
        p = p_next;
        iterations = k + 1;
        if displacement < cfg.epsilon || cfg.theta_stop.map_or(false, |bar| th_next < bar) {
            converged = true;
            break;
        }
    }

    let j = func.eval(&u)?;
    let nu = u.norm2();
    let lambda_star = j / (nu * nu);
    let theta_final = theta(&u, &p)?;
    let residual = eigen_residual(&p, &u, lambda_star)?;
    if cfg.record_history {
        history.push(IterationRecord {
            k: iterations,
            j: Some(j),
            norm_u: nu,
            lambda: lambda_star,
            theta: theta_final,
            rayleigh: None,
            displacement: 0.0,
        });
    }
    Ok(EigenpairResult {
        u_star: u,
        lambda_star,
        theta_final,
        residual,
        iterations,
        converged,
        history,
    })
}

/// One step of the normalised flow.
///
/// Returns `(u_next, p_half, lambda_k)`: the renormalised iterate, the
/// subgradient `p_half in dJ(u_half)` recovered from optimality
/// (`p_half = (u_k - u_half)/dt + lambda_k u_half`), and the Rayleigh
/// quotient `lambda_k = J(u_k)/||u_k||^2` the step was taken at. Because
/// subdifferentials of one-homogeneous functionals are invariant under
/// positive rescaling, `p_half` is also a subgradient at `u_next`.
pub fn agp_step<F: OneHomogeneous + ?Sized>(
    func: &F,
    u: &Signal,
    dt: f64,
    prox_cfg: &ProxConfig,
    state: &mut ProxState,
) -> Result<(Signal, Signal, f64)> {
    let norm_u = u.norm2();
    if norm_u == 0.0 {
        return Err(Error::DegenerateTrajectory("iterate collapsed to zero".into()));
    }
    let j = func.eval(u)?;
    if j == 0.0 {
        return Err(Error::DegenerateTrajectory(
            "J(u_k) = 0; iterate lies in the nullspace of J".into(),
        ));
    }
    let lambda_k = j / (norm_u * norm_u);
    if !(dt > 0.0 && dt * lambda_k < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "agp step needs 0 < dt < ||u_k||^2/J(u_k) = {:.6e}; dt = {dt}",
            1.0 / lambda_k
        )));
    }
    let beta = 1.0 / dt - lambda_k;
    let f_in = u.scaled(1.0 / (beta * dt));
    let u_half = func.prox_warm(&f_in, 1.0 / beta, prox_cfg, state)?;
    let p_half = u.sub(&u_half)?.scaled(1.0 / dt).axpy(lambda_k, &u_half)?;
    let u_next = u_half.normalized().map_err(|_| {
        Error::DegenerateTrajectory("prox output collapsed to zero".into())
    })?;
    Ok((u_next, p_half, lambda_k))
}

/// Normalised flow on the unit sphere: non-increasing `J(u_k)` and
/// `||p_k||`, unit-norm iterates throughout.
///
/// `u0` is centred and normalised before the run.
pub fn agp_run<F: OneHomogeneous + ?Sized>(
    func: &F,
    u0: &Signal,
    cfg: &FlowConfig,
    prox_cfg: &ProxConfig,
) -> Result<EigenpairResult> {
    cfg.check()?;
    let mut u = u0.zero_mean().normalized().map_err(|_| {
        Error::DegenerateInput("initial state is constant; nothing to evolve".into())
    })?;
    let j0 = func.eval(&u)?;
    if j0 == 0.0 {
        return Err(Error::DegenerateInput(
            "J(u0) = 0; initial state lies in the nullspace of J".into(),
        ));
    }
    let dt = cfg.dt.unwrap_or(0.5 / j0); // ||u0|| = 1, so J(u0) = lambda_0
    let mut state = ProxState::Cold;
    let mut p: Option<Signal> = None;

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.max_outer_iterations {
        let (u_next, p_half, lambda_k) = agp_step(func, &u, dt, prox_cfg, &mut state)?;
        let displacement = u_next.distance(&u)?;
        if cfg.record_history {
            let th = match &p {
                Some(prev) => theta(&u, prev)?,
                None => theta(&u, &p_half)?, // no subgradient before the first step
            };
            history.push(IterationRecord {
                k,
                j: Some(func.eval(&u)?),
                norm_u: u.norm2(),
                lambda: lambda_k,
                theta: th,
                rayleigh: None,
                displacement,
            });
        }
        let th_next = theta(&u_next, &p_half)?;
        // Same rounding-drift control as the unnormalised flow: the
        // subproblem input is u scaled by 1/(1 - lambda dt) > 1, so the
        // constant component of the rounding error compounds geometrically
        // unless each iterate is projected back to mean zero.
        u = u_next.zero_mean().normalized().map_err(|_| {
            Error::DegenerateTrajectory("iterate collapsed onto the constants".into())
        })?;
        p = Some(p_half);
        iterations = k + 1;
        if displacement < cfg.epsilon || cfg.theta_stop.map_or(false, |bar| th_next < bar) {
            converged = true;
            break;
        }
    }

    let p = p.expect("max_outer_iterations >= 1 guarantees one step");
    let j = func.eval(&u)?;
    let lambda_star = j / u.norm2().powi(2);
    let theta_final = theta(&u, &p)?;
    let residual = eigen_residual(&p, &u, lambda_star)?;
    if cfg.record_history {
        history.push(IterationRecord {
            k: iterations,
            j: Some(j),
            norm_u: u.norm2(),
            lambda: lambda_star,
            theta: theta_final,
            rayleigh: None,
            displacement: 0.0,
        });
    }
    Ok(EigenpairResult {
        u_star: u,
        lambda_star,
        theta_final,
        residual,
        iterations,
        converged,
        history,
    })
}

/// Output of one [`fagp_step`]: the pre-normalisation iterate is exposed
/// because the step's contraction inequalities are stated through it.
#[derive(Debug, Clone)]
pub struct FagpStep {
    /// Renormalised iterate `u_{k+1}`.
    pub u_next: Signal,
    /// Minimiser of the step subproblem, before renormalisation.
    pub u_half: Signal,
    /// Subgradient `p in dJ(u_half)` recovered from optimality:
    /// `p = R_k q_k - (u_half - u_k)/dt`.
    pub p_half: Signal,
}

/// One step of the quotient flow for `R = J/H`:
/// `u_half = prox_J( u_k + dt R_k q_k ; dt )`, then renormalise.
pub fn fagp_step<F: OneHomogeneous + ?Sized>(
    func_j: &F,
    u: &Signal,
    q: &Signal,
    r: f64,
    dt: f64,
    prox_cfg: &ProxConfig,
    state: &mut ProxState,
) -> Result<FagpStep> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "fagp step needs dt > 0, got {dt}"
        )));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "fagp step needs a positive quotient R_k, got {r}"
        )));
    }
    let f_in = u.axpy(dt * r, q)?;
    let u_half = func_j.prox_warm(&f_in, dt, prox_cfg, state)?;
    let p_half = q.scaled(r).sub(&u_half.sub(u)?.scaled(1.0 / dt))?;
    let u_next = u_half.normalized().map_err(|_| {
        Error::DegenerateTrajectory("prox output collapsed to zero".into())
    })?;
    Ok(FagpStep { u_next, u_half, p_half })
}

/// Quotient flow minimising `R(u) = J(u) / H(u)` over the unit sphere.
///
/// `q_k` is the canonical subgradient selection of `H` at `u_k` (for
/// `H = l1` that is the sign pattern with `sign(0) = 0`). The quotient `R`
/// is non-increasing along the run. Each iterate solves the eigen relation
/// `p = R q` at convergence; the reported `lambda_star` is the final `R`.
pub fn fagp_run<FJ, FH>(
    func_j: &FJ,
    func_h: &FH,
    u0: &Signal,
    cfg: &FlowConfig,
    prox_cfg: &ProxConfig,
) -> Result<EigenpairResult>
where
    FJ: OneHomogeneous + ?Sized,
    FH: OneHomogeneous + ?Sized,
{
    cfg.check()?;
    let mut u = u0.zero_mean().normalized().map_err(|_| {
        Error::DegenerateInput("initial state is constant; nothing to evolve".into())
    })?;
    let quotient = |u: &Signal| -> Result<f64> {
        let h = func_h.eval(u)?;
        if h <= 0.0 {
            return Err(Error::DegenerateTrajectory(
                "H(u_k) = 0; quotient undefined".into(),
            ));
        }
        Ok(func_j.eval(u)? / h)
    };
    let r0 = quotient(&u)?;
    if r0 == 0.0 {
        return Err(Error::DegenerateInput(
            "J(u0) = 0; initial state lies in the nullspace of J".into(),
        ));
    }
    let dt = cfg.dt.unwrap_or(1.0 / r0);
    let mut state = ProxState::Cold;
    let mut p: Option<Signal> = None;
    let mut q = func_h.subgradient(&u)?;
    let mut r = r0;

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.max_outer_iterations {
        let step = fagp_step(func_j, &u, &q, r, dt, prox_cfg, &mut state)?;
        let displacement = step.u_next.distance(&u)?;
        if cfg.record_history {
            let th = match &p {
                Some(prev) => theta(&q, prev)?,
                None => theta(&q, &step.p_half)?,
            };
            history.push(IterationRecord {
                k,
                j: Some(func_j.eval(&u)?),
                norm_u: u.norm2(),
                lambda: r,
                theta: th,
                rayleigh: Some(r),
                displacement,
            });
        }
        u = step.u_next;
        q = func_h.subgradient(&u)?;
        r = quotient(&u)?;
        let th_next = theta(&q, &step.p_half)?;
        p = Some(step.p_half);
        iterations = k + 1;
        if displacement < cfg.epsilon || cfg.theta_stop.map_or(false, |bar| th_next < bar) {
            converged = true;
            break;
        }
    }

    let p = p.expect("max_outer_iterations >= 1 guarantees one step");
    let theta_final = theta(&q, &p)?;
    let residual = eigen_residual(&p, &q, r)?;
    if cfg.record_history {
        history.push(IterationRecord {
            k: iterations,
            j: Some(func_j.eval(&u)?),
            norm_u: u.norm2(),
            lambda: r,
            theta: theta_final,
            rayleigh: Some(r),
            displacement: 0.0,
        });
    }
    Ok(EigenpairResult {
        u_star: u,
        lambda_star: r,
        theta_final,
        residual,
        iterations,
        converged,
        history,
    })
}
