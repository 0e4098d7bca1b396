//! Signals (real-valued functions on a domain) and their vector-space ops.
//!
//! A [`Signal`] is a dense vector of finite reals tagged with the
//! [`DomainId`](crate::domain::DomainId) of the domain it was created on.
//! Binary operations check the tag and fail with a domain error instead of
//! silently combining values from unrelated domains.
//!
//! Inner products are plain Euclidean sums: `<u, v> = sum_i u_i v_i`. Grid
//! spacing enters the finite-difference stencils, not the inner product, so
//! quotients like Rayleigh ratios are independent of that convention.

use crate::domain::{Domain, DomainId};
use crate::error::{Error, Result};

/// Dense real-valued signal on a fixed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
    domain: DomainId,
}

impl Signal {
    /// Wrap raw values; checks length against the domain and finiteness.
    pub fn from_values(domain: &dyn Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::LengthMismatch {
                context: "Signal::from_values",
                expected: domain.node_count(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Signal::from_values"));
        }
        Ok(Signal {
            values,
            domain: domain.domain_id(),
        })
    }

    /// All-zero signal.
    pub fn zeros(domain: &dyn Domain) -> Self {
        Signal {
            values: vec![0.0; domain.node_count()],
            domain: domain.domain_id(),
        }
    }

    /// Constant signal.
    pub fn constant(domain: &dyn Domain, c: f64) -> Result<Self> {
        Signal::from_values(domain, vec![c; domain.node_count()])
    }

    /// Build node-wise from the node index.
    pub fn from_fn(domain: &dyn Domain, mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        Signal::from_values(domain, (0..domain.node_count()).map(&mut f).collect())
    }

    /// Same-domain companion with new values (internal fast path; keeps the
    /// domain tag, checks nothing in release builds).
    pub(crate) fn like(&self, values: Vec<f64>) -> Signal {
        debug_assert_eq!(values.len(), self.values.len());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Signal {
            values,
            domain: self.domain,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn domain_id(&self) -> DomainId {
        self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Consume the signal, keeping the raw buffer.
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn check_mate(&self, other: &Signal, context: &'static str) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch { context });
        }
        debug_assert_eq!(self.len(), other.len());
        Ok(())
    }

    /// Euclidean inner product `sum_i u_i v_i`.
    pub fn inner(&self, other: &Signal) -> Result<f64> {
        self.check_mate(other, "inner")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// `l2` norm.
    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `l1` norm.
    pub fn norm1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Arithmetic mean of the entries.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Subtract the mean. Idempotent up to rounding.
    pub fn zero_mean(&self) -> Signal {
        let m = self.mean();
        self.like(self.values.iter().map(|v| v - m).collect())
    }

    /// Rescale to unit `l2` norm; fails on (numerically) zero signals.
    pub fn normalized(&self) -> Result<Signal> {
        let n = self.norm2();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateInput(
                "cannot normalize a zero signal".into(),
            ));
        }
        Ok(self.scaled(1.0 / n))
    }

    /// `c * u`.
    pub fn scaled(&self, c: f64) -> Signal {
        self.like(self.values.iter().map(|v| c * v).collect())
    }

    /// `u + c` componentwise.
    pub fn offset(&self, c: f64) -> Signal {
        self.like(self.values.iter().map(|v| v + c).collect())
    }

    /// `u + v`.
    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.check_mate(other, "add")?;
        Ok(self.like(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    /// `u - v`.
    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.check_mate(other, "sub")?;
        Ok(self.like(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    /// `u + c * v`.
    pub fn axpy(&self, c: f64, other: &Signal) -> Result<Signal> {
        self.check_mate(other, "axpy")?;
        Ok(self.like(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        ))
    }

    /// `||u - v||_2`, the step displacement between consecutive iterates.
    pub fn distance(&self, other: &Signal) -> Result<f64> {
        self.check_mate(other, "distance")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Error unless every entry is finite; `context` names the producer.
    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(context));
        }
        Ok(())
    }
}
