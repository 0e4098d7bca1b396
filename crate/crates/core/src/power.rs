//! Power iterations for black-box operators `T`.
//!
//! The classical power method normalises `L u` each step and converges to
//! the dominant eigenvector of a matrix. Its naive nonlinear analogue
//! (`u ← T(u)/‖T(u)‖`) breaks down for operators that are only meaningful
//! in a certain range (denoisers expect image-scale inputs and roughly
//! preserve the mean). [`bhpg_run`] therefore handles range and mean
//! explicitly — subtract the output mean, rescale the oscillation to that
//! of `u0`, re-add the previous mean — and solves the *relaxed*
//! eigenproblem
//!
//! ```text
//! T(u) - mean(T(u)) = lambda (u - mean(u)),
//! ```
//!
//! whose eigenvalue functional is the centred Rayleigh quotient
//! [`rayleigh_dagger`]. For a mean-preserving denoiser every strict
//! eigenvector with nonnegative entries has `lambda = 1`; the relaxed
//! problem admits the full range of eigenvalues.

use std::sync::Mutex;

use crate::domain::{Domain, GridDomain};
use crate::error::{Error, Result};
use crate::flows::{eigen_residual, EigenpairResult, FlowConfig, IterationRecord};
use crate::functionals::{OneHomogeneous, ProxConfig, ProxState};
use crate::io;
use crate::signal::Signal;

/// A black-box (possibly nonlinear) operator on signals.
///
/// Applications must be pure with respect to a run: the same input yields
/// the same output, and no state observable by the caller changes.
pub trait NonlinearOperator {
    fn apply(&self, u: &Signal) -> Result<Signal>;

    /// Short human-readable description for diagnostics output.
    fn describe(&self) -> String {
        "operator".into()
    }
}

// ---------------------------------------------------------------------------
// Operator registry
// ---------------------------------------------------------------------------

/// Dense square matrix acting by multiplication.
#[derive(Debug, Clone)]
pub struct MatrixOperator {
    n: usize,
    /// Row-major entries, `data[r * n + c]`.
    data: Vec<f64>,
}

impl MatrixOperator {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("matrix must be nonempty".into()));
        }
        if data.len() != n * n {
            return Err(Error::LengthMismatch {
                context: "MatrixOperator::new",
                expected: n * n,
                got: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "matrix entries must be finite, got {bad}"
            )));
        }
        Ok(MatrixOperator { n, data })
    }

    /// Load a dense square matrix from CSV (one row per line).
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let (n, data) = io::read_matrix_csv(path)?;
        MatrixOperator::new(n, data)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }
}

impl NonlinearOperator for MatrixOperator {
    fn apply(&self, u: &Signal) -> Result<Signal> {
        if u.len() != self.n {
            return Err(Error::LengthMismatch {
                context: "matrix apply",
                expected: self.n,
                got: u.len(),
            });
        }
        let x = u.values();
        let out = (0..self.n)
            .map(|r| {
                let row = &self.data[r * self.n..(r + 1) * self.n];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect();
        Ok(u.like(out))
    }

    fn describe(&self) -> String {
        format!("dense {0}x{0} matrix", self.n)
    }
}

/// Variational denoiser `T(u) = prox_t^J(u)` — for total variation, the
/// classical ROF model. Carries its own warm-start state, so repeated
/// applications along an iteration converge quickly.
pub struct ProxDenoiser<F> {
    functional: F,
    t: f64,
    prox_cfg: ProxConfig,
    state: Mutex<ProxState>,
}

impl<F: OneHomogeneous> ProxDenoiser<F> {
    pub fn new(functional: F, t: f64, prox_cfg: ProxConfig) -> Result<Self> {
        crate::functionals::check_time_step(t)?;
        prox_cfg.check()?;
        Ok(ProxDenoiser {
            functional,
            t,
            prox_cfg,
            state: Mutex::new(ProxState::Cold),
        })
    }
}

impl<F: OneHomogeneous> NonlinearOperator for ProxDenoiser<F> {
    fn apply(&self, u: &Signal) -> Result<Signal> {
        let mut state = self.state.lock().expect("prox state lock poisoned");
        self.functional.prox_warm(u, self.t, &self.prox_cfg, &mut state)
    }

    fn describe(&self) -> String {
        format!("proximal denoiser, t = {}", self.t)
    }
}

/// Componentwise window median on a grid: a window of `w` cells in 1D, a
/// `w x w` block in 2D, with out-of-range indices clamped to the boundary.
#[derive(Debug, Clone)]
pub struct MedianFilter {
    grid: GridDomain,
    window: usize,
}

impl MedianFilter {
    pub fn new(grid: GridDomain, window: usize) -> Result<Self> {
        if window < 3 || window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "median window must be an odd integer >= 3, got {window}"
            )));
        }
        Ok(MedianFilter { grid, window })
    }
}

impl NonlinearOperator for MedianFilter {
    fn apply(&self, u: &Signal) -> Result<Signal> {
        if u.domain_id() != self.grid.domain_id() || u.len() != self.grid.node_count() {
            return Err(Error::DomainMismatch { context: "median filter apply" });
        }
        let (w, h) = (self.grid.width(), self.grid.height());
        let r = (self.window / 2) as isize;
        let vals = u.values();
        let mut buf = Vec::with_capacity(self.window * self.window);
        let mut out = Vec::with_capacity(vals.len());
        let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        for iy in 0..h as isize {
            for ix in 0..w as isize {
                buf.clear();
                if h == 1 {
                    for dx in -r..=r {
                        buf.push(vals[clamp(ix + dx, w)]);
                    }
                } else {
                    for dy in -r..=r {
                        let y = clamp(iy + dy, h);
                        for dx in -r..=r {
                            buf.push(vals[y * w + clamp(ix + dx, w)]);
                        }
                    }
                }
                let mid = buf.len() / 2;
                buf.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
                out.push(buf[mid]);
            }
        }
        Ok(u.like(out))
    }

    fn describe(&self) -> String {
        format!("median filter, window {}", self.window)
    }
}

/// External denoiser behind a subprocess: the signal is piped to the
/// command as `node_id,value` CSV on stdin and the transformed signal is
/// read back in the same format from stdout. This plugs in external
/// (including learned) operators without linking them.
#[derive(Debug, Clone)]
pub struct SubprocessOperator {
    program: String,
    args: Vec<String>,
}

impl SubprocessOperator {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        SubprocessOperator { program: program.into(), args }
    }
}

impl NonlinearOperator for SubprocessOperator {
    fn apply(&self, u: &Signal) -> Result<Signal> {
        let out = io::pipe_through_command(&self.program, &self.args, io::signal_csv_string(u))?;
        let origin = std::path::PathBuf::from(format!("<stdout of {}>", self.program));
        let values = io::parse_signal_csv(&out, &origin)?;
        if values.len() != u.len() {
            return Err(Error::LengthMismatch {
                context: "subprocess operator output",
                expected: u.len(),
                got: values.len(),
            });
        }
        let result = u.like(values);
        result.ensure_finite("subprocess operator output")?;
        Ok(result)
    }

    fn describe(&self) -> String {
        format!("subprocess {:?}", self.program)
    }
}

// ---------------------------------------------------------------------------
// Power iterations
// ---------------------------------------------------------------------------

/// One classical power step `L u / ‖L u‖`.
pub fn linear_power_step(l: &MatrixOperator, u: &Signal) -> Result<Signal> {
    let lu = l.apply(u)?;
    lu.normalized().map_err(|_| {
        Error::DegenerateInput("L u = 0: u lies in the nullspace of the matrix".into())
    })
}

/// Classical power method. Converges (in direction) to the dominant
/// eigenpair for diagonalisable `L` with a simple dominant eigenvalue;
/// the eigenvalue estimate is the Rayleigh quotient `⟨u, Lu⟩`.
pub fn linear_power_run(
    l: &MatrixOperator,
    u0: &Signal,
    cfg: &FlowConfig,
) -> Result<EigenpairResult> {
    let mut u = u0.normalized().map_err(|_| {
        Error::DegenerateInput("u0 = 0: power iteration needs a nonzero start".into())
    })?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.max_outer_iterations {
        let u_next = linear_power_step(l, &u)?;
        let displacement = u_next.distance(&u)?;
        if cfg.record_history {
            let lu = l.apply(&u)?;
            history.push(IterationRecord {
                k,
                j: None,
                norm_u: u.norm2(),
                lambda: u.inner(&lu)?,
                theta: crate::eval::theta(&u, &lu)?,
                rayleigh: None,
                displacement,
            });
        }
        u = u_next;
        iterations = k + 1;
        if displacement < cfg.epsilon {
            converged = true;
            break;
        }
    }
    let lu = l.apply(&u)?;
    let lambda_star = u.inner(&lu)?; // ‖u‖ = 1
    let theta_final = crate::eval::theta(&u, &lu)?;
    let residual = eigen_residual(&lu, &u, lambda_star)?;
    if cfg.record_history {
        history.push(IterationRecord {
            k: iterations,
            j: None,
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

/// Naive nonlinear power step `T(u)/‖T(u)‖` — correct for homogeneous `T`,
/// range-distorting for general denoisers (see [`bhpg_run`]).
pub fn naive_nonlinear_power_step(op: &dyn NonlinearOperator, u: &Signal) -> Result<Signal> {
    let tu = op.apply(u)?;
    tu.normalized().map_err(|_| {
        Error::DegenerateInput("T(u) = 0: cannot normalise the operator output".into())
    })
}

/// Centred Rayleigh quotient
/// `R†(u) = ⟨u - mean(u), T(u) - mean(T(u))⟩ / ‖u - mean(u)‖²`;
/// equals the relaxed eigenvalue whenever the relaxed eigenrelation holds.
pub fn rayleigh_dagger(u: &Signal, tu: &Signal) -> Result<f64> {
    let cu = u.zero_mean();
    let den = cu.norm2().powi(2);
    if den == 0.0 {
        return Err(Error::DegenerateInput(
            "R† undefined for constant u".into(),
        ));
    }
    Ok(cu.inner(&tu.zero_mean())? / den)
}

/// One row of a [`bhpg_run`] history.
#[derive(Debug, Clone)]
pub struct RelaxedIterationRecord {
    pub k: usize,
    /// Centred Rayleigh quotient at `u_k`.
    pub r_dagger: f64,
    /// `‖u_k - mean(u_k)‖₂` — constant by construction.
    pub norm_centered: f64,
    /// `|mean(T(u_k)) - mean(u_k)|`: how far the operator is from
    /// mean-preserving (logged, not asserted — it is model-dependent).
    pub mean_drift: f64,
    pub displacement: f64,
}

/// Result of [`bhpg_run`] for the relaxed eigenproblem.
#[derive(Debug, Clone)]
pub struct RelaxedEigenResult {
    pub u_star: Signal,
    /// `R†(u_star)`.
    pub lambda_star: f64,
    /// `‖(T(u) - mean T(u)) - λ(u - mean u)‖₂ / ‖u - mean u‖₂`,
    /// reported whether or not the run converged.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<RelaxedIterationRecord>,
}

/// Power method for non-homogeneous operators. Each iteration applies `T`,
/// centres the output, rescales the oscillation back to `‖u0 - mean(u0)‖`,
/// and restores the previous mean:
///
/// ```text
/// v      = T(u_k)
/// v      = v - mean(v)
/// v      = v · ‖u0 - mean(u0)‖ / ‖v‖
/// u_next = v + mean(u_k)
/// ```
///
/// so `‖u_k - mean(u_k)‖` is constant and the mean never moves — the
/// iterate stays in the operator's expected range. Only `epsilon`,
/// `max_outer_iterations` and `record_history` of the configuration apply.
pub fn bhpg_run(
    op: &dyn NonlinearOperator,
    u0: &Signal,
    cfg: &FlowConfig,
) -> Result<RelaxedEigenResult> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {}",
            cfg.epsilon
        )));
    }
    if cfg.max_outer_iterations == 0 {
        return Err(Error::InvalidParameter(
            "max_outer_iterations must be positive".into(),
        ));
    }
    let amplitude = u0.zero_mean().norm2();
    if amplitude == 0.0 {
        return Err(Error::DegenerateInput(
            "u0 is constant: the relaxed eigenproblem is degenerate".into(),
        ));
    }

    let mut u = u0.clone();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.max_outer_iterations {
        let tu = op.apply(&u)?;
        tu.ensure_finite("operator output")?;
        let centered = tu.zero_mean();
        let osc = centered.norm2();
        if osc == 0.0 {
            return Err(Error::DegenerateTrajectory(
                "operator output collapsed to a constant".into(),
            ));
        }
        let mean_k = u.mean();
        let u_next = centered.scaled(amplitude / osc).offset(mean_k);
        let displacement = u_next.distance(&u)?;
        if cfg.record_history {
            history.push(RelaxedIterationRecord {
                k,
                r_dagger: rayleigh_dagger(&u, &tu)?,
                norm_centered: u.zero_mean().norm2(),
                mean_drift: (tu.mean() - mean_k).abs(),
                displacement,
            });
        }
        u = u_next;
        iterations = k + 1;
        if displacement < cfg.epsilon {
            converged = true;
            break;
        }
    }

    let tu = op.apply(&u)?;
    let lambda_star = rayleigh_dagger(&u, &tu)?;
    let cu = u.zero_mean();
    let residual = tu.zero_mean().axpy(-lambda_star, &cu)?.norm2() / cu.norm2();
    if cfg.record_history {
        history.push(RelaxedIterationRecord {
            k: iterations,
            r_dagger: lambda_star,
            norm_centered: cu.norm2(),
            mean_drift: (tu.mean() - u.mean()).abs(),
            displacement: 0.0,
        });
    }
    Ok(RelaxedEigenResult {
        u_star: u,
        lambda_star,
        residual,
        iterations,
        converged,
        history,
    })
}

/// Render a relaxed-eigenproblem history as CSV with columns
/// `k,r_dagger,norm_centered,mean_drift,step_displacement`.
pub fn relaxed_history_csv_string(rows: &[RelaxedIterationRecord]) -> String {
    use std::fmt::Write as _;
    let mut out = String::with_capacity(48 * rows.len() + 48);
    out.push_str("k,r_dagger,norm_centered,mean_drift,step_displacement\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.k, r.r_dagger, r.norm_centered, r.mean_drift, r.displacement
        );
    }
    out
}
