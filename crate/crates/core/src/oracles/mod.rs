//! Function oracles: anything that can evaluate `f(u)` in `(0, 1)` over a
//! bounded domain, and optionally its gradient.
//!
//! The classifier-over-renderer composition that produces `f` in practice is
//! never linked in; it lives behind [`external::ExternalOracle`], which talks
//! to an evaluator process over newline-delimited JSON.

mod adversarial;
mod builtin;
pub mod external;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use adversarial::{adversarial_wrapper, Adversarial};
pub use builtin::{make_builtin, BuiltinKind, BuiltinOracle, BuiltinSpec};
pub use external::{external_oracle, ExternalOracle};

use crate::error::{Result, SrfError};
use crate::geometry::Domain;

/// Lower clip for oracle outputs; values are kept in `[EPS_CLIP, 1 - EPS_CLIP]`.
pub const EPS_CLIP: f64 = 1e-9;

/// Clip a raw evaluator output into the open unit interval.
#[inline]
pub fn clip_unit(f: f64) -> f64 {
    f.clamp(EPS_CLIP, 1.0 - EPS_CLIP)
}

pub trait FunctionOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn domain(&self) -> &Domain;

    fn supports_grad(&self) -> bool;

    /// Raw value of `f(u)`. Callers that need the `(0,1)` guarantee apply
    /// [`clip_unit`].
    fn eval(&self, u: &[f64]) -> Result<f64>;

    /// `∇f(u)`; errors with [`SrfError::GradientUnsupported`] unless
    /// [`supports_grad`](Self::supports_grad).
    fn grad(&self, u: &[f64]) -> Result<Vec<f64>>;

    /// Value and gradient together. Remote oracles override this to use a
    /// single round trip.
    fn eval_with_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.eval(u)?, self.grad(u)?))
    }

    /// Whether concurrent calls are allowed. Serial oracles are evaluated one
    /// corner at a time.
    fn concurrent(&self) -> bool {
        true
    }

    /// Short identifier written into map and trace metadata.
    fn describe(&self) -> String;
}

impl<T: FunctionOracle + ?Sized> FunctionOracle for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn domain(&self) -> &Domain {
        (**self).domain()
    }
    fn supports_grad(&self) -> bool {
        (**self).supports_grad()
    }
    fn eval(&self, u: &[f64]) -> Result<f64> {
        (**self).eval(u)
    }
    fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        (**self).grad(u)
    }
    fn eval_with_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        (**self).eval_with_grad(u)
    }
    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<T: FunctionOracle + ?Sized> FunctionOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn domain(&self) -> &Domain {
        (**self).domain()
    }
    fn supports_grad(&self) -> bool {
        (**self).supports_grad()
    }
    fn eval(&self, u: &[f64]) -> Result<f64> {
        (**self).eval(u)
    }
    fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        (**self).grad(u)
    }
    fn eval_with_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        (**self).eval_with_grad(u)
    }
    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<T: FunctionOracle + ?Sized> FunctionOracle for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn domain(&self) -> &Domain {
        (**self).domain()
    }
    fn supports_grad(&self) -> bool {
        (**self).supports_grad()
    }
    fn eval(&self, u: &[f64]) -> Result<f64> {
        (**self).eval(u)
    }
    fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        (**self).grad(u)
    }
    fn eval_with_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        (**self).eval_with_grad(u)
    }
    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

pub(crate) fn check_point(expected: usize, u: &[f64]) -> Result<()> {
    if u.len() != expected {
        return Err(SrfError::DimensionMismatch {
            expected,
            got: u.len(),
        });
    }
    Ok(())
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Oracle backed by plain closures. Handy for ad-hoc landscapes and tests.
pub struct FnOracle {
    domain: Domain,
    value: Box<ValueFn>,
    gradient: Option<Box<GradFn>>,
    name: String,
}

impl FnOracle {
    pub fn new(domain: Domain, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            domain,
            value: Box::new(value),
            gradient: None,
            name: "fn".into(),
        }
    }

    pub fn with_grad(mut self, gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl FunctionOracle for FnOracle {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn supports_grad(&self) -> bool {
        self.gradient.is_some()
    }

    fn eval(&self, u: &[f64]) -> Result<f64> {
        check_point(self.dim(), u)?;
        Ok((self.value)(u))
    }

    fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_point(self.dim(), u)?;
        match &self.gradient {
            Some(g) => Ok(g(u)),
            None => Err(SrfError::GradientUnsupported),
        }
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// Counts value and gradient requests made against an inner oracle.
pub struct CountingOracle<O> {
    inner: O,
    forward: AtomicU64,
    backward: AtomicU64,
}

impl<O: FunctionOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            forward: AtomicU64::new(0),
            backward: AtomicU64::new(0),
        }
    }

    pub fn forward_calls(&self) -> u64 {
        self.forward.load(Ordering::Relaxed)
    }

    pub fn backward_calls(&self) -> u64 {
        self.backward.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.forward.store(0, Ordering::Relaxed);
        self.backward.store(0, Ordering::Relaxed);
    }
}

impl<O: FunctionOracle> FunctionOracle for CountingOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn domain(&self) -> &Domain {
        self.inner.domain()
    }

    fn supports_grad(&self) -> bool {
        self.inner.supports_grad()
    }

    fn eval(&self, u: &[f64]) -> Result<f64> {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.eval(u)
    }

    fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.backward.fetch_add(1, Ordering::Relaxed);
        self.inner.grad(u)
    }

    fn eval_with_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.backward.fetch_add(1, Ordering::Relaxed);
        self.inner.eval_with_grad(u)
    }

    fn concurrent(&self) -> bool {
        self.inner.concurrent()
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}
