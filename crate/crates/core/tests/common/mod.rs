#![allow(dead_code)]

use srf_core::geometry::Domain;
use srf_core::oracles::{make_builtin, BuiltinKind, BuiltinOracle, BuiltinSpec, FunctionOracle};
use srf_core::Result;

pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1)
    }

    pub fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

pub fn close(x: f64, y: f64, rel: f64) -> bool {
    (x - y).abs() <= rel * x.abs().max(y.abs()).max(1.0)
}

pub fn cube(n: usize) -> Domain {
    Domain::cube(n, 0.0, 10.0).unwrap()
}

pub fn builtin(kind: BuiltinKind, n: usize) -> BuiltinOracle {
    make_builtin(&BuiltinSpec::new(kind, cube(n))).unwrap()
}

/// Reports a zero gradient everywhere, which is the derivative of a piecewise
/// constant landscape away from its jumps.
pub struct ZeroGrad<O>(pub O);

impl<O: FunctionOracle> FunctionOracle for ZeroGrad<O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn domain(&self) -> &Domain {
        self.0.domain()
    }
    fn supports_grad(&self) -> bool {
        true
    }
    fn eval(&self, u: &[f64]) -> Result<f64> {
        self.0.eval(u)
    }
    fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; u.len()])
    }
    fn describe(&self) -> String {
        format!("zero-grad({})", self.0.describe())
    }
}

/// Component formulas written out per bound.
pub mod explicit {
    /// `f = [f(a), f(b)]`, `q = [f(A), f(B)]`, `g = [f'(a), f'(b)]`
    pub fn naive_1d(f: [f64; 2], r: f64, lambda: f64) -> (f64, f64) {
        (f[0] - lambda * r, -f[1] + lambda * r)
    }

    pub fn oirb_1d(f: [f64; 2], q: [f64; 2], alpha: f64) -> (f64, f64) {
        let (p, s) = (1.0 + alpha / 2.0, alpha / 2.0);
        (-p * q[0] - s * q[1] + 2.0 * f[0], p * q[1] + s * q[0] - 2.0 * f[1])
    }

    pub fn oirw_1d(f: [f64; 2], g: [f64; 2], r: f64, beta: f64) -> (f64, f64) {
        (
            beta / 2.0 * (r * g[0] - f[1]) + (1.0 - beta / 2.0) * f[0],
            beta / 2.0 * (r * g[1] + f[0]) - (1.0 - beta / 2.0) * f[1],
        )
    }

    pub fn trapgrad_1d(f: [f64; 2], g: [f64; 2], r: f64, lambda: f64) -> (f64, f64) {
        let mean = (f[0] + f[1]) / 2.0;
        (-r / 2.0 * g[0] + mean - lambda * r, -r / 2.0 * g[1] - mean + lambda * r)
    }

    /// Corners ordered (a1,a2), (a1,b2), (b1,a2), (b1,b2). Returns
    /// `([∂a1, ∂a2], [∂b1, ∂b2])`.
    pub type Out = ([f64; 2], [f64; 2]);

    pub fn naive_2d(f: [f64; 4], r: [f64; 2], lambda: f64) -> Out {
        let [f00, f01, f10, f11] = f;
        let [r1, r2] = r;
        (
            [r2 / 2.0 * (f00 + f01) - lambda * r1, r1 / 2.0 * (f00 + f10) - lambda * r2],
            [-r2 / 2.0 * (f10 + f11) + lambda * r1, -r1 / 2.0 * (f01 + f11) + lambda * r2],
        )
    }

    pub fn oirb_2d(f: [f64; 4], q: [f64; 4], r: [f64; 2], alpha: f64) -> Out {
        let [f00, f01, f10, f11] = f;
        let [q00, q01, q10, q11] = q;
        let [r1, r2] = r;
        let (c, p, s) = (1.0 + alpha, 1.0 + alpha / 2.0, alpha / 2.0);
        (
            [
                r2 / 2.0 * (-c * (p * (q00 + q01) + s * (q10 + q11)) + 2.0 * (f00 + f01)),
                r1 / 2.0 * (-c * (p * (q00 + q10) + s * (q01 + q11)) + 2.0 * (f00 + f10)),
            ],
            [
                r2 / 2.0 * (c * (p * (q10 + q11) + s * (q00 + q01)) - 2.0 * (f10 + f11)),
                r1 / 2.0 * (c * (p * (q01 + q11) + s * (q00 + q10)) - 2.0 * (f01 + f11)),
            ],
        )
    }

    fn dot(g: [f64; 2], v: [f64; 2]) -> f64 {
        g[0] * v[0] + g[1] * v[1]
    }

    pub fn oirw_2d(f: [f64; 4], g: [[f64; 2]; 4], r: [f64; 2], beta: f64) -> Out {
        let [f00, f01, f10, f11] = f;
        let [g00, g01, g10, g11] = g;
        let [r1, r2] = r;
        let (h1, h2) = (r1 / 2.0, r2 / 2.0);
        let k = 1.0 - 3.0 * beta / 2.0;
        (
            [
                r2 / 2.0
                    * (beta * (dot(g00, [h1, h2]) + dot(g01, [h1, -h2])) + k * (f00 + f01)
                        - beta / 2.0 * (f10 + f11)),
                r1 / 2.0
                    * (beta * (dot(g00, [h1, h2]) + dot(g10, [-h1, h2])) + k * (f00 + f10)
                        - beta / 2.0 * (f01 + f11)),
            ],
            [
                r2 / 2.0
                    * (beta * (dot(g10, [h1, -h2]) + dot(g11, [h1, h2])) - k * (f10 + f11)
                        + beta / 2.0 * (f00 + f01)),
                r1 / 2.0
                    * (beta * (dot(g01, [-h1, h2]) + dot(g11, [h1, h2])) - k * (f01 + f11)
                        + beta / 2.0 * (f00 + f10)),
            ],
        )
    }

    pub fn trapgrad_2d(f: [f64; 4], g: [[f64; 2]; 4], r: [f64; 2], lambda: f64) -> Out {
        let s: f64 = f.iter().sum();
        let [g00, g01, g10, g11] = g;
        let [r1, r2] = r;
        let area = r1 * r2 / 4.0;
        (
            [
                r2 / 4.0 * s - area * (g00[0] + g01[0]) - lambda * r1,
                r1 / 4.0 * s - area * (g00[1] + g10[1]) - lambda * r2,
            ],
            [
                -r2 / 4.0 * s - area * (g10[0] + g11[0]) + lambda * r1,
                -r1 / 4.0 * s - area * (g01[1] + g11[1]) + lambda * r2,
            ],
        )
    }
}

/// Bound gradients obtained by differentiating the region losses under the
/// integral sign, then applying the trapezoid rule on each face. Works in any
/// dimension and shares no code with the library's matrix rules.
pub mod leibniz {
    /// Trapezoid estimate of `∫ f` over the face `{x_k = x}` of `[lo, hi]`.
    pub fn face(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], k: usize, x: f64) -> f64 {
        let n = lo.len();
        let others: Vec<usize> = (0..n).filter(|&i| i != k).collect();
        let width: f64 = others.iter().map(|&i| hi[i] - lo[i]).product();
        let mut sum = 0.0;
        let mut u = vec![0.0; n];
        u[k] = x;
        for mask in 0..(1usize << others.len()) {
            for (j, &i) in others.iter().enumerate() {
                u[i] = if mask >> j & 1 == 1 { hi[i] } else { lo[i] };
            }
            sum += f(&u);
        }
        width * sum / (1usize << others.len()) as f64
    }

    fn grown(a: &[f64], b: &[f64], alpha: f64) -> (Vec<f64>, Vec<f64>) {
        a.iter()
            .zip(b)
            .map(|(a, b)| (a - alpha / 2.0 * (b - a), b + alpha / 2.0 * (b - a)))
            .unzip()
    }

    /// `L = -∫_D f + (λ/2)|r|²`
    pub fn naive(f: &dyn Fn(&[f64]) -> f64, a: &[f64], b: &[f64], lambda: f64) -> (Vec<f64>, Vec<f64>) {
        (0..a.len())
            .map(|k| {
                let r = b[k] - a[k];
                (face(f, a, b, k, a[k]) - lambda * r, -face(f, a, b, k, b[k]) + lambda * r)
            })
            .unzip()
    }

    /// `L = -c_d ∫_D f + c_q ∫_Q f`, `Q` the box grown by `α/2` of each side.
    fn outer(f: &dyn Fn(&[f64]) -> f64, a: &[f64], b: &[f64], alpha: f64, c_d: f64, c_q: f64) -> (Vec<f64>, Vec<f64>) {
        let (qa, qb) = grown(a, b, alpha);
        let (p, s) = (1.0 + alpha / 2.0, alpha / 2.0);
        (0..a.len())
            .map(|k| {
                let (fa, fb) = (face(f, a, b, k, a[k]), face(f, a, b, k, b[k]));
                let (fqa, fqb) = (face(f, &qa, &qb, k, qa[k]), face(f, &qa, &qb, k, qb[k]));
                (c_d * fa - c_q * (p * fqa + s * fqb), -c_d * fb + c_q * (p * fqb + s * fqa))
            })
            .unzip()
    }

    /// `L = -2∫_D f + ∫_Q f`
    pub fn oirb(f: &dyn Fn(&[f64]) -> f64, a: &[f64], b: &[f64], alpha: f64) -> (Vec<f64>, Vec<f64>) {
        outer(f, a, b, alpha, 2.0, 1.0)
    }

    /// `L = -(1 + β/α)∫_D f + (β/α)∫_Q f` at a small but finite `α`.
    pub fn oirw(f: &dyn Fn(&[f64]) -> f64, a: &[f64], b: &[f64], alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
        outer(f, a, b, alpha, 1.0 + beta / alpha, beta / alpha)
    }
}
