//! One-homogeneous functionals and their proximal operators.
//!
//! A functional `J` is (absolutely) one-homogeneous when `J(c u) = |c| J(u)`
//! for every scalar `c`. Such functionals are the natural setting for the
//! eigenproblem `lambda u in dJ(u)`: subgradients satisfy `<p, u> = J(u)` and
//! `J(v) >= <p, v>` for all `v`, and the subdifferential is invariant under
//! positive rescaling of its argument.
//!
//! Two families are implemented:
//!
//! * [`GraphTotalVariation`] — `J(u) = sum_e w_e |u_i - u_j|` (anisotropic)
//!   or the node-grouped isotropic variant
//!   `J(u) = sum_i sqrt( sum_{j ~ i} w_ij (u_i - u_j)^2 )`.
//!   Constants lie in the nullspace, and every subgradient sums to zero.
//! * [`L1Norm`] — `J(u) = ||u||_1`, whose prox is plain soft thresholding.
//!
//! The proximal operator
//!
//! ```text
//! prox_tJ(f) = argmin_v  1/2 ||v - f||^2 + t J(v)
//! ```
//!
//! is evaluated by first-order inner solvers on a dual formulation (see
//! [`prox`] submodule) with a duality-gap stopping rule: iteration stops once
//! `gap <= dual_tolerance * ||f||^2`. Because the primal objective is
//! 1-strongly convex, a gap of `g` certifies `||v - v*|| <= sqrt(2 g)`; use
//! [`ProxConfig::primal_tolerance`] when comparing prox outputs in tests.

mod prox;

pub use prox::ProxState;

use crate::error::{Error, Result};
use crate::domain::{Domain, WeightedGraph};
use crate::signal::Signal;

/// Step-size policy for the inner prox solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Fixed step `1/L`, with `L` the operator-norm bound of the weighted
    /// incidence map. Parameter-free and safe.
    Fixed,
    /// Backtracking estimate of the local curvature; can take larger steps
    /// on graphs whose worst-case degree bound is pessimistic.
    Backtracking,
}

/// Tuning knobs for proximal evaluations.
#[derive(Debug, Clone)]
pub struct ProxConfig {
    /// Hard cap on inner iterations; exceeding it is an error that carries
    /// the residual duality gap.
    pub max_inner_iterations: usize,
    /// Duality-gap threshold, *relative* to `||f||_2^2`.
    pub dual_tolerance: f64,
    /// Step-size policy.
    pub step_rule: StepRule,
}

impl Default for ProxConfig {
    fn default() -> Self {
        ProxConfig {
            max_inner_iterations: 200_000,
            dual_tolerance: 1e-10,
            step_rule: StepRule::Fixed,
        }
    }
}

impl ProxConfig {
    /// Guaranteed bound on `||v - v*||_2` once the duality gap test passed,
    /// for an input of norm `f_norm2`. Follows from 1-strong convexity of
    /// the prox objective: `||v - v*||^2 <= 2 gap`.
    pub fn primal_tolerance(&self, f_norm2: f64) -> f64 {
        (2.0 * self.dual_tolerance).sqrt() * f_norm2
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.max_inner_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_inner_iterations must be positive".into(),
            ));
        }
        if !(self.dual_tolerance > 0.0) || !self.dual_tolerance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "dual_tolerance must be positive and finite, got {}",
                self.dual_tolerance
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_time_step(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "prox time step must be positive and finite, got {t}"
        )));
    }
    Ok(())
}

/// A one-homogeneous functional with evaluation, subgradient selection and
/// proximal capability.
pub trait OneHomogeneous {
    /// `J(u)`.
    fn eval(&self, u: &Signal) -> Result<f64>;

    /// One valid element of the subdifferential at `u`.
    ///
    /// Ties (zero differences, zero entries) select `0`, which is always an
    /// admissible choice for these functionals. Note that at non-smooth
    /// points this particular selection need not be the one an eigenpair
    /// satisfies; use [`subgrad_from_prox`] to recover the subgradient a
    /// proximal step actually used.
    fn subgradient(&self, u: &Signal) -> Result<Signal>;

    /// `prox_tJ(f)` with a caller-owned warm-start buffer.
    ///
    /// The result is a pure function of `(f, t)` up to the inner tolerance;
    /// the warm state only accelerates convergence when consecutive calls
    /// solve nearby problems, as they do inside the iterative flows.
    fn prox_warm(
        &self,
        f: &Signal,
        t: f64,
        cfg: &ProxConfig,
        state: &mut ProxState,
    ) -> Result<Signal>;

    /// `prox_tJ(f)` from a cold start.
    fn prox(&self, f: &Signal, t: f64, cfg: &ProxConfig) -> Result<Signal> {
        let mut state = ProxState::Cold;
        self.prox_warm(f, t, cfg, &mut state)
    }
}

/// Edge-difference coupling used by [`GraphTotalVariation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvFlavor {
    /// `J(u) = sum_e w_e |u_i - u_j|`; each edge counted once.
    Anisotropic,
    /// `J(u) = sum_i sqrt( sum_{j ~ i} w_ij (u_i - u_j)^2 )`; every edge
    /// contributes to both endpoint groups.
    Isotropic,
}

/// Graph total variation, the workhorse one-homogeneous functional.
///
/// Constants are in the nullspace, subgradients sum to zero, and the prox
/// preserves the mean of its input.
#[derive(Debug, Clone)]
pub struct GraphTotalVariation {
    graph: WeightedGraph,
    flavor: TvFlavor,
    sqrt_weights: Vec<f64>,
}

impl GraphTotalVariation {
    pub fn new(graph: WeightedGraph, flavor: TvFlavor) -> Self {
        let sqrt_weights = graph.edges().iter().map(|e| e.weight.sqrt()).collect();
        GraphTotalVariation {
            graph,
            flavor,
            sqrt_weights,
        }
    }

    /// Anisotropic TV over the 4-neighbour graph of `grid` with unit weights.
    pub fn anisotropic_on_grid(grid: &crate::domain::GridDomain) -> Result<Self> {
        Ok(Self::new(WeightedGraph::from_grid(grid, 1.0)?, TvFlavor::Anisotropic))
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn flavor(&self) -> TvFlavor {
        self.flavor
    }

    pub(crate) fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }

    fn check_domain(&self, u: &Signal, context: &'static str) -> Result<()> {
        if u.domain_id() != self.graph.domain_id() {
            return Err(Error::DomainMismatch { context });
        }
        Ok(())
    }
}

impl OneHomogeneous for GraphTotalVariation {
    fn eval(&self, u: &Signal) -> Result<f64> {
        self.check_domain(u, "GraphTotalVariation::eval")?;
        let x = u.values();
        let j = match self.flavor {
            TvFlavor::Anisotropic => self
                .graph
                .edges()
                .iter()
                .map(|e| e.weight * (x[e.i] - x[e.j]).abs())
                .sum(),
            TvFlavor::Isotropic => {
                let mut j = 0.0;
                for v in 0..self.graph.node_count() {
                    let mut s = 0.0;
                    for &(nbr, e) in self.graph.neighbors(v) {
                        let d = x[v] - x[nbr];
                        s += self.graph.edges()[e].weight * d * d;
                    }
                    j += s.sqrt();
                }
                j
            }
        };
        if !j.is_finite() {
            return Err(Error::NonFinite("GraphTotalVariation::eval"));
        }
        Ok(j)
    }

    fn subgradient(&self, u: &Signal) -> Result<Signal> {
        self.check_domain(u, "GraphTotalVariation::subgradient")?;
        let x = u.values();
        let mut p = vec![0.0; u.len()];
        match self.flavor {
            TvFlavor::Anisotropic => {
                for e in self.graph.edges() {
                    let s = (x[e.i] - x[e.j]).signum_zero();
                    p[e.i] += e.weight * s;
                    p[e.j] -= e.weight * s;
                }
            }
            TvFlavor::Isotropic => {
                for v in 0..self.graph.node_count() {
                    let mut r2 = 0.0;
                    for &(nbr, e) in self.graph.neighbors(v) {
                        let d = x[v] - x[nbr];
                        r2 += self.graph.edges()[e].weight * d * d;
                    }
                    if r2 > 0.0 {
                        let r = r2.sqrt();
                        for &(nbr, e) in self.graph.neighbors(v) {
                            let c = self.graph.edges()[e].weight * (x[v] - x[nbr]) / r;
                            p[v] += c;
                            p[nbr] -= c;
                        }
                    }
                }
            }
        }
        Ok(u.like(p))
    }

    fn prox_warm(
        &self,
        f: &Signal,
        t: f64,
        cfg: &ProxConfig,
        state: &mut ProxState,
    ) -> Result<Signal> {
        self.check_domain(f, "GraphTotalVariation::prox")?;
        check_time_step(t)?;
        cfg.check()?;
        let out = match self.flavor {
            TvFlavor::Anisotropic => prox::prox_anisotropic(self, f, t, cfg, state)?,
            TvFlavor::Isotropic => prox::prox_isotropic(self, f, t, cfg, state)?,
        };
        out.ensure_finite("GraphTotalVariation::prox")?;
        Ok(out)
    }
}

/// `J(u) = ||u||_1`. Unlike graph TV, constants are *not* in the nullspace.
#[derive(Debug, Clone, Copy, Default)]
pub struct L1Norm;

impl OneHomogeneous for L1Norm {
    fn eval(&self, u: &Signal) -> Result<f64> {
        Ok(u.norm1())
    }

    /// Componentwise sign with `sign(0) = 0`.
    fn subgradient(&self, u: &Signal) -> Result<Signal> {
        Ok(u.like(u.values().iter().map(|v| v.signum_zero()).collect()))
    }

    /// Exact soft thresholding; the warm state is ignored.
    fn prox_warm(
        &self,
        f: &Signal,
        t: f64,
        cfg: &ProxConfig,
        _state: &mut ProxState,
    ) -> Result<Signal> {
        check_time_step(t)?;
        cfg.check()?;
        Ok(f.like(
            f.values()
                .iter()
                .map(|&v| v.signum_zero() * (v.abs() - t).max(0.0))
                .collect(),
        ))
    }
}

/// Subgradient used by a proximal step: with `u = prox_tJ(f)`, the optimality
/// condition gives `p = (f - u) / t in dJ(u)`.
///
/// Returns `(u, p)`. This is the reliable way to obtain a subgradient *at a
/// point of interest*: unlike the canonical selection of
/// [`OneHomogeneous::subgradient`], it resolves ties (plateaus, zero
/// differences) the same way the flows themselves do. For an eigenfunction
/// `f` with `lambda f in dJ(f)` and `t < 1/lambda` it returns `p = lambda f`
/// exactly (up to the inner tolerance).
pub fn subgrad_from_prox<F: OneHomogeneous + ?Sized>(
    func: &F,
    f: &Signal,
    t: f64,
    cfg: &ProxConfig,
) -> Result<(Signal, Signal)> {
    check_time_step(t)?;
    let u = func.prox(f, t, cfg)?;
    let p = f.sub(&u)?.scaled(1.0 / t);
    Ok((u, p))
}

/// Orthogonal projection onto `K = dJ(0)`, the subdifferential at zero.
///
/// By the Moreau decomposition `v = prox_J(v) + proj_K(v)` (unit time step),
/// so the projection is `v - prox_J(v)`. `K` is a bounded convex set, hence
/// the output norm is uniformly bounded no matter how large `v` is; and for
/// an eigenpair `lambda u in dJ(u)` with `mu >= lambda` one has
/// `proj_K(mu u) = lambda u`.
pub fn moreau_project<F: OneHomogeneous + ?Sized>(
    func: &F,
    v: &Signal,
    cfg: &ProxConfig,
) -> Result<Signal> {
    let p = func.prox(v, 1.0, cfg)?;
    v.sub(&p)
}

/// `signum` with the convention `sign(0) = 0` (plain `f64::signum(0.) == 1`).
trait SignumZero {
    fn signum_zero(self) -> f64;
}

impl SignumZero for f64 {
    fn signum_zero(self) -> f64 {
        if self == 0.0 {
            0.0
        } else {
            self.signum()
        }
    }
}
