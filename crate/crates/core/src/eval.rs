//! Convergence diagnostics and analytic oracles.
//!
//! The central question after a run is "did it actually find an eigenpair?".
//! Two complementary measures answer it:
//!
//! * [`theta`] — the angle between `u` and `T(u)`. An exact eigenpair is
//!   perfectly (anti-)parallel; the conventional bar for calling a state a
//!   *numerical eigenfunction* is `theta < pi/360`, half a degree
//!   ([`THETA_NUMERICAL_EIGEN`]).
//! * [`local_ratio_map`] — the pointwise quotient `Lambda(x) = T(u)(x)/u(x)`
//!   on the set where `|u|` is safely away from zero. For an eigenpair the
//!   map is flat; its maximal deviation from the median is a spatial
//!   diagnostic that catches "almost converged except in one corner" states
//!   that a single global angle can miss.
//!
//! The oracles encode closed-form consequences of the eigen relation
//! `lambda u in dJ(u)` for one-homogeneous `J`:
//!
//! * gradient flow `u_t = -p(u)` started at an eigenfunction `f` decays
//!   linearly without changing shape, `u(t) = (1 - lambda t)^+ f`
//!   ([`gradflow_decay_oracle`]);
//! * a proximal step shrinks an eigenfunction towards zero,
//!   `prox_tJ(f) = (1 - t lambda)^+ f` ([`prox_shrinkage_oracle`]) — this is
//!   also a practical *test* for eigenfunctions, and estimates `lambda`;
//! * binary indicators of calibrable sets have eigenvalue
//!   `lambda = J(1_C) / |C|`, the perimeter-to-area ratio
//!   ([`calibrable_lambda`]);
//! * the soliton profile `3c sech^2(sqrt(c lambda) X / 2)` solves
//!   `-u_XX = lambda (-c u + u^2/2)` ([`kdv_soliton`]).

use crate::domain::GridDomain;
use crate::error::{Error, Result};
use crate::functionals::{OneHomogeneous, ProxConfig};
use crate::signal::Signal;

/// Conventional angle below which a state counts as a numerical
/// eigenfunction: half a degree, `pi / 360`.
pub const THETA_NUMERICAL_EIGEN: f64 = std::f64::consts::PI / 360.0;

/// Relative norm below which a prox output counts as fully shrunk.
const FULL_SHRINK_REL: f64 = 1e-3;

/// Angle in `[0, pi]` between `u` and `T(u)`:
/// `theta = arccos( <u, Tu> / (||u|| ||Tu||) )`.
///
/// Errors if either signal is numerically zero — the angle is undefined
/// there, and callers should treat that state as degenerate rather than
/// converged.
pub fn theta(u: &Signal, tu: &Signal) -> Result<f64> {
    let nu = u.norm2();
    let ntu = tu.norm2();
    if nu == 0.0 || ntu == 0.0 {
        return Err(Error::DegenerateInput(
            "theta undefined for zero signals".into(),
        ));
    }
    let cos = (u.inner(tu)? / (nu * ntu)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// Pointwise eigenvalue map restricted to the reliable support of `u`.
#[derive(Debug, Clone)]
pub struct RatioMap {
    /// `T(u)_i / u_i` where masked in, `0.0` elsewhere (see `mask`).
    pub values: Vec<f64>,
    /// True where `|u_i| > threshold`.
    pub mask: Vec<bool>,
    /// Threshold actually used.
    pub threshold: f64,
    /// Median of the masked ratios.
    pub median: f64,
    /// `max_i |ratio_i - median|` over the mask.
    pub max_deviation: f64,
}

impl RatioMap {
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Compute `Lambda(x) = T(u)(x) / u(x)` over `{ |u| > delta }`.
///
/// `delta = None` uses the default `0.05 * max|u|`. Fails when the mask is
/// empty (`u` numerically zero, or `delta` too aggressive).
pub fn local_ratio_map(u: &Signal, tu: &Signal, delta: Option<f64>) -> Result<RatioMap> {
    let threshold = match delta {
        Some(d) => {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "ratio-map threshold must be positive, got {d}"
                )));
            }
            d
        }
        None => 0.05 * u.max_abs(),
    };
    if u.domain_id() != tu.domain_id() {
        return Err(Error::DomainMismatch { context: "local_ratio_map" });
    }
    let mut values = vec![0.0; u.len()];
    let mut mask = vec![false; u.len()];
    let mut masked: Vec<f64> = Vec::new();
    for (i, (&ui, &ti)) in u.values().iter().zip(tu.values()).enumerate() {
        if ui.abs() > threshold {
            let r = ti / ui;
            values[i] = r;
            mask[i] = true;
            masked.push(r);
        }
    }
    if masked.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "ratio map mask is empty at threshold {threshold:.3e}"
        )));
    }
    masked.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = masked.len() / 2;
    let median = if masked.len() % 2 == 1 {
        masked[mid]
    } else {
        0.5 * (masked[mid - 1] + masked[mid])
    };
    let max_deviation = masked
        .iter()
        .map(|r| (r - median).abs())
        .fold(0.0, f64::max);
    Ok(RatioMap {
        values,
        mask,
        threshold,
        median,
        max_deviation,
    })
}

/// Result of [`gradflow_decay_oracle`].
#[derive(Debug, Clone)]
pub struct GradflowReport {
    /// State after integrating `u_t = -p(u)` to the requested time.
    pub simulated: Signal,
    /// Closed form `(1 - lambda t)^+ f`.
    pub analytic: Signal,
    /// `||simulated - analytic|| / max(||analytic||, 1e-12 ||f||)`.
    pub rel_error: f64,
}

/// Integrate the subgradient flow `u_t = -p`, `p in dJ(u)`, from `f` to time
/// `t_final` with `steps` implicit Euler steps (each step is one prox), and
/// compare against the eigenfunction decay law `(1 - lambda t)^+ f`.
///
/// The comparison is only meaningful when `f` is (close to) an eigenfunction
/// with the given `lambda`; for anything else the reported error simply
/// quantifies how badly the decay law fails.
pub fn gradflow_decay_oracle<F: OneHomogeneous + ?Sized>(
    func: &F,
    f: &Signal,
    lambda: f64,
    t_final: f64,
    steps: usize,
    cfg: &ProxConfig,
) -> Result<GradflowReport> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "t_final must be non-negative, got {t_final}"
        )));
    }
    let mut u = f.clone();
    if t_final > 0.0 {
        let dt = t_final / steps as f64;
        let mut state = crate::functionals::ProxState::Cold;
        for _ in 0..steps {
            u = func.prox_warm(&u, dt, cfg, &mut state)?;
        }
    }
    let factor = (1.0 - lambda * t_final).max(0.0);
    let analytic = f.scaled(factor);
    let denom = analytic.norm2().max(1e-12 * f.norm2());
    let rel_error = u.distance(&analytic)? / denom;
    Ok(GradflowReport {
        simulated: u,
        analytic,
        rel_error,
    })
}

/// Outcome of the proximal shrinkage test.
#[derive(Debug, Clone)]
pub enum ProxShrinkage {
    /// Output is collinear with the input: `prox(f) ~ c f`. For an
    /// eigenfunction, `c = 1 - t lambda`, so `lambda_hat = (1 - c) / t`.
    Collinear {
        factor: f64,
        lambda_hat: f64,
        theta: f64,
    },
    /// Output is numerically zero — `t` exceeded the extinction time
    /// `1/lambda`. Consistent with `f` being an eigenfunction, but `lambda`
    /// is not identifiable beyond `lambda >= 1/t`.
    FullyShrunk { residual: f64 },
    /// Output is visibly not a multiple of the input: `f` is not an
    /// eigenfunction at this resolution.
    NotCollinear { theta: f64 },
}

impl ProxShrinkage {
    /// True when the observation is consistent with `f` being an
    /// eigenfunction.
    pub fn is_eigen(&self) -> bool {
        !matches!(self, ProxShrinkage::NotCollinear { .. })
    }

    /// Estimated eigenvalue, when identifiable.
    pub fn lambda_hat(&self) -> Option<f64> {
        match self {
            ProxShrinkage::Collinear { lambda_hat, .. } => Some(*lambda_hat),
            _ => None,
        }
    }
}

/// Test whether `f` behaves like an eigenfunction under one proximal step:
/// compute `v = prox_tJ(f)` and check collinearity of `v` with `f` using the
/// numerical-eigenfunction angle bar `theta < pi/360`.
///
/// Returns the shrinkage factor `c = <v, f> / ||f||^2` and eigenvalue
/// estimate `lambda_hat = (1 - c)/t` when collinear.
pub fn prox_shrinkage_oracle<F: OneHomogeneous + ?Sized>(
    func: &F,
    f: &Signal,
    t: f64,
    cfg: &ProxConfig,
) -> Result<ProxShrinkage> {
    let f_norm = f.norm2();
    if f_norm == 0.0 {
        return Err(Error::DegenerateInput(
            "shrinkage test undefined for the zero signal".into(),
        ));
    }
    let v = func.prox(f, t, cfg)?;
    let v_norm = v.norm2();
    if v_norm <= FULL_SHRINK_REL * f_norm {
        return Ok(ProxShrinkage::FullyShrunk {
            residual: v_norm / f_norm,
        });
    }
    let th = theta(&v, f)?;
    if th <= THETA_NUMERICAL_EIGEN {
        let factor = v.inner(f)? / (f_norm * f_norm);
        Ok(ProxShrinkage::Collinear {
            factor,
            lambda_hat: (1.0 - factor) / t,
            theta: th,
        })
    } else {
        Ok(ProxShrinkage::NotCollinear { theta: th })
    }
}

/// Eigenvalue of a calibrable indicator: `lambda = J(1_C) / |C|`, the
/// generalised perimeter-to-area ratio.
///
/// `indicator` must be binary (entries in `{0, 1}`) and non-empty. Note the
/// full domain gives `lambda = 0`: there is no cut.
pub fn calibrable_lambda<F: OneHomogeneous + ?Sized>(
    func: &F,
    indicator: &Signal,
) -> Result<f64> {
    let mut count = 0usize;
    for &v in indicator.values() {
        if (v - 1.0).abs() <= 1e-12 {
            count += 1;
        } else if v.abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "indicator entries must be 0 or 1, found {v}"
            )));
        }
    }
    if count == 0 {
        return Err(Error::DegenerateInput("indicator selects no nodes".into()));
    }
    Ok(func.eval(indicator)? / count as f64)
}

/// Soliton profile `u(X) = 3c sech^2( sqrt(c lambda) X / 2 )`, sampled at the
/// cell centres of a 1-D grid and centred on the domain midpoint.
///
/// Solves `-u_XX = lambda (-c u + u^2 / 2)` on the line, and satisfies the
/// zero-mass constraint `integral(-c u + u^2/2) = 0` exactly.
pub fn kdv_soliton(domain: &GridDomain, c: f64, lambda: f64) -> Result<Signal> {
    if !domain.is_line() {
        return Err(Error::InvalidParameter(
            "soliton profiles are one-dimensional".into(),
        ));
    }
    if !(c > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "soliton needs c > 0 and lambda > 0, got c = {c}, lambda = {lambda}"
        )));
    }
    let (lx, ly) = domain.extent();
    let mid = 0.5 * lx.max(ly);
    let a = (c * lambda).sqrt() / 2.0;
    Signal::from_fn(domain, |i| {
        let (x, y) = domain.coords(i);
        let coord = if domain.height() == 1 { x } else { y };
        let s = 1.0 / (a * (coord - mid)).cosh();
        3.0 * c * s * s
    })
}

/// Flat summary of how eigen-like a state is; built by [`diagnostics`].
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    /// Angle between `u` and `T(u)`.
    pub theta: f64,
    /// Least-squares eigenvalue `<u, Tu> / <u, u>`.
    pub lambda_hat: f64,
    /// `||Tu - lambda_hat u|| / ||Tu||`.
    pub residual: f64,
    /// Mask threshold used for the ratio map.
    pub mask_threshold: f64,
    /// Pointwise eigenvalue map.
    pub ratio: RatioMap,
}

/// Assemble the standard diagnostics for a pair `(u, T(u))`.
pub fn diagnostics(u: &Signal, tu: &Signal, delta: Option<f64>) -> Result<DiagnosticsReport> {
    let th = theta(u, tu)?;
    let uu = u.inner(u)?;
    let lambda_hat = u.inner(tu)? / uu;
    let residual = tu.axpy(-lambda_hat, u)?.norm2() / tu.norm2().max(1e-300);
    let ratio = local_ratio_map(u, tu, delta)?;
    Ok(DiagnosticsReport {
        theta: th,
        lambda_hat,
        residual,
        mask_threshold: ratio.threshold,
        ratio,
    })
}
