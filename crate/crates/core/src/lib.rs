//! Iterative flows for eigenpairs of nonlinear operators.
//!
//! This crate computes nonlinear eigenpairs — pairs `(u, lambda)` with
//! `T(u) = lambda u`, or `T(u) = lambda Q(u)` in the double-nonlinear case —
//! for operators that are far from linear: subdifferentials of
//! one-homogeneous functionals (graph total variation, `l1`), nonlinear
//! zero-order terms of dispersive model equations, denoisers, and generic
//! black-box maps.
//!
//! The pieces:
//!
//! * [`domain`] / [`signal`]: grids, weighted graphs, and the signals living
//!   on them.
//! * [`functionals`]: one-homogeneous functionals with duality-based
//!   proximal solvers — the building block everything else reuses.
//! * [`flows`]: three proximal eigenpair flows for `lambda u in dJ(u)` —
//!   a norm-preserving unnormalised flow (`ng`), a normalised
//!   Rayleigh-quotient flow (`agp`), and its generalisation to quotients
//!   `J/H` of two one-homogeneous functionals (`fagp`).
//! * [`physics`]: an adaptive-step flow (`cg`) for `-Lap u = lambda Q(u)`
//!   on grids, with a complementary step that enforces the zero-mass
//!   constraint `<Q(u), 1> = 0`.
//! * [`power`]: a mean-preserving nonlinear power method (`bhpg`) for
//!   black-box operators (matrices, denoisers, filters, subprocesses).
//! * [`eval`]: convergence diagnostics (angle `theta`, pointwise eigenvalue
//!   map) and analytic oracles used to validate results.
//! * [`io`]: CSV and PGM import/export.
//!
//! Everything is deterministic given identical inputs and seeds; the only
//! randomness enters through explicitly seeded generators.

pub mod domain;
pub mod error;
pub mod eval;
pub mod flows;
pub mod functionals;
pub mod io;
pub mod physics;
pub mod power;
pub mod signal;

pub use domain::{Domain, DomainId, GridDomain, PointCloud, WeightedGraph};
pub use error::{Error, Result};
pub use signal::Signal;
