use super::FunctionOracle;
use crate::error::Result;
use crate::geometry::Domain;

/// `g(u) = 1 - f(u)`, `∇g = -∇f`. Robust regions of `g` are the adversarial
/// regions of `f`.
pub struct Adversarial<O> {
    inner: O,
}

pub fn adversarial_wrapper<O: FunctionOracle>(oracle: O) -> Adversarial<O> {
    Adversarial { inner: oracle }
}

impl<O> Adversarial<O> {
    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: FunctionOracle> FunctionOracle for Adversarial<O> {
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
        Ok(1.0 - self.inner.eval(u)?)
    }

    fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inner.grad(u)?.into_iter().map(|g| -g).collect())
    }

    fn eval_with_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (f, g) = self.inner.eval_with_grad(u)?;
        Ok((1.0 - f, g.into_iter().map(|g| -g).collect()))
    }

    fn concurrent(&self) -> bool {
        self.inner.concurrent()
    }

    fn describe(&self) -> String {
        format!("adversarial({})", self.inner.describe())
    }
}
