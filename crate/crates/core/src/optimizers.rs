//! Bound-update rules and the region-growing loop.
//!
//! Every rule returns `(∇_a L, ∇_b L)` for a loss that is minimized, so a
//! positive `∇_a` moves the left bound outward under `a ← a - η∇_a`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SrfError};
use crate::geometry::{check_dim, corner_matrix, outer_corner_matrix, BinaryMask, Domain, Region};
use crate::oracles::{CountingOracle, FunctionOracle};
use crate::quadrature::{corner_values, corner_values_and_gradients, CornerGradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Oirb,
    Oirw,
    Trapgrad,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Naive, Method::Oirb, Method::Oirw, Method::Trapgrad];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Oirb => "oirb",
            Method::Oirw => "oirw",
            Method::Trapgrad => "trapgrad",
        }
    }

    /// Needs `∇f` at the corners.
    pub fn white_box(self) -> bool {
        matches!(self, Method::Oirw | Method::Trapgrad)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = SrfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Method::Naive),
            "oirb" | "oir_b" => Ok(Method::Oirb),
            "oirw" | "oir_w" => Ok(Method::Oirw),
            "trapgrad" | "trap-grad" => Ok(Method::Trapgrad),
            other => Err(SrfError::InvalidParams(format!(
                "unknown method `{other}` (expected naive, oirb, oirw or trapgrad)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub eta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub steps: usize,
    pub eps_init: f64,
    /// Minimum side length; `None` means `1e-6` times each domain extent.
    pub floor: Option<f64>,
    /// Stop once `|Δa| + |Δb| < 1e-9` for 10 consecutive steps.
    #[serde(default)]
    pub early_stop: bool,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            eta: 0.1,
            lambda: 0.1,
            alpha: 0.05,
            beta: 0.0009,
            steps: 800,
            eps_init: 0.5,
            floor: None,
            early_stop: false,
        }
    }
}

/// Exclusive upper bound on β for OIR_W in dimension `n`, where
/// `γ = 2 - β(2n-1)` reaches zero.
pub fn beta_limit(n: usize) -> f64 {
    2.0 / (2.0 * n as f64 - 1.0)
}

pub fn check_beta(beta: f64, n: usize) -> Result<()> {
    let limit = beta_limit(n);
    if !(beta >= 0.0 && beta < limit) {
        return Err(SrfError::BetaOutOfRange { beta, n, limit });
    }
    Ok(())
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(SrfError::InvalidParams(what.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be >= 0");
        }
        if !self.beta.is_finite() {
            return bad("beta must be finite");
        }
        if self.steps == 0 {
            return bad("steps must be >= 1");
        }
        if !(self.eps_init > 0.0 && self.eps_init.is_finite()) {
            return bad("eps_init must be positive");
        }
        if let Some(fl) = self.floor {
            if !(fl > 0.0 && fl.is_finite()) {
                return bad("floor must be positive");
            }
        }
        Ok(())
    }

    fn floors(&self, domain: &Domain) -> Vec<f64> {
        domain
            .extents()
            .into_iter()
            .map(|e| self.floor.unwrap_or(1e-6 * e))
            .collect()
    }
}

fn check_len(vals: &[f64], n: usize) -> Result<()> {
    if vals.len() != 1usize << n {
        return Err(SrfError::LengthMismatch {
            expected: 1usize << n,
            got: vals.len(),
        });
    }
    Ok(())
}

fn check_grads(g: &CornerGradients, n: usize) -> Result<()> {
    if g.0.dim() != (1usize << n, n) {
        return Err(SrfError::ShapeMismatch(format!(
            "corner gradients are {:?}, expected ({}, {n})",
            g.0.dim(),
            1usize << n
        )));
    }
    Ok(())
}

struct Masked {
    mask: BinaryMask,
    r: Vec<f64>,
    tri: f64,
}

impl Masked {
    fn new(reg: &Region) -> Result<Self> {
        check_dim(reg.dim())?;
        Ok(Self {
            mask: BinaryMask::new(reg.dim())?,
            r: reg.sides(),
            tri: reg.normalized_volume(),
        })
    }

    /// `(M f, M̄ f)`
    fn project(&self, f: &[f64]) -> (Array1<f64>, Array1<f64>) {
        let f = ArrayView1::from(f);
        (self.mask.m().dot(&f), self.mask.m_bar().dot(&f))
    }

    /// `(diag(M G), diag(M̄ G))`
    fn diag(&self, g: &CornerGradients) -> (Vec<f64>, Vec<f64>) {
        let n = self.r.len();
        let (m, mb) = (self.mask.m(), self.mask.m_bar());
        (0..n)
            .map(|k| {
                let col = g.0.column(k);
                (m.row(k).dot(&col), mb.row(k).dot(&col))
            })
            .unzip()
    }
}

/// Naive rule, trapezoid on the Leibniz boundary integrals:
/// `∇_a = 2△ diag⁻¹(r) M̄ f_D - λr`, `∇_b = -2△ diag⁻¹(r) M f_D + λr`.
pub fn naive_step(f_d: &[f64], reg: &Region, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = Masked::new(reg)?;
    check_len(f_d, reg.dim())?;
    let (mf, mbf) = w.project(f_d);
    let ga = (0..reg.dim()).map(|k| w.tri * ((2.0 * mbf[k]) / w.r[k]) - lambda * w.r[k]).collect();
    let gb = (0..reg.dim()).map(|k| w.tri * (-(2.0 * mf[k]) / w.r[k]) + lambda * w.r[k]).collect();
    Ok((ga, gb))
}

/// OIR_B: inner corners `f_D` and corners `f_Q` of the box grown by `α/2`
/// of each side on both ends.
pub fn oirb_step(f_d: &[f64], f_q: &[f64], reg: &Region, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = reg.dim();
    let w = Masked::new(reg)?;
    check_len(f_d, n)?;
    check_len(f_q, n)?;
    let (mf, mbf) = w.project(f_d);
    let (mq, mbq) = w.project(f_q);
    let scale = (1.0 + alpha).powi(n as i32 - 1);
    let (near, far) = (1.0 + 0.5 * alpha, 0.5 * alpha);
    let mut ga = Vec::with_capacity(n);
    let mut gb = Vec::with_capacity(n);
    for k in 0..n {
        let outer_a = scale * (near * mbq[k] + far * mq[k]);
        let outer_b = scale * (near * mq[k] + far * mbq[k]);
        let c = 2.0 * w.tri / w.r[k];
        ga.push(c * (2.0 * mbf[k] - outer_a));
        gb.push(c * (-2.0 * mf[k] + outer_b));
    }
    Ok((ga, gb))
}

/// OIR_W, the `α → 0` limit of OIR_B with emphasis `β`, using corner
/// gradients instead of the outer corners.
pub fn oirw_step(f_d: &[f64], grads: &CornerGradients, reg: &Region, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = reg.dim();
    check_beta(beta, n)?;
    let w = Masked::new(reg)?;
    check_len(f_d, n)?;
    check_grads(grads, n)?;
    let gamma = 2.0 - beta * (2.0 * n as f64 - 1.0);
    let (mf, mbf) = w.project(f_d);
    let (dm, dmb) = w.diag(grads);
    let (m, mb) = (w.mask.m(), w.mask.m_bar());
    let g = &grads.0;
    let mut ga = Vec::with_capacity(n);
    let mut gb = Vec::with_capacity(n);
    for k in 0..n {
        // cross terms: tangential gradients on the faces a_k and b_k
        let mut s = 0.0;
        let mut s_bar = 0.0;
        for i in (0..n).filter(|&i| i != k) {
            let mut on_a = 0.0;
            let mut on_b = 0.0;
            for j in 0..g.nrows() {
                let sign = mb[(i, j)] - m[(i, j)];
                on_a += sign * mb[(k, j)] * g[(j, i)];
                on_b -= sign * m[(k, j)] * g[(j, i)];
            }
            s += w.r[i] * on_a;
            s_bar += w.r[i] * on_b;
        }
        s /= w.r[k];
        s_bar /= w.r[k];
        ga.push(w.tri * ((gamma * mbf[k] - beta * mf[k]) / w.r[k] + beta * dmb[k] + beta * s));
        gb.push(w.tri * (-(gamma * mf[k] - beta * mbf[k]) / w.r[k] + beta * dm[k] + beta * s_bar));
    }
    Ok((ga, gb))
}

/// Gradient of the trapezoid surrogate `-△1ᵀf_D + (λ/2)|r|²` itself.
pub fn trapgrad_step(f_d: &[f64], grads: &CornerGradients, reg: &Region, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = reg.dim();
    let w = Masked::new(reg)?;
    check_len(f_d, n)?;
    check_grads(grads, n)?;
    let total: f64 = f_d.iter().sum();
    let (dm, dmb) = w.diag(grads);
    let ga = (0..n)
        .map(|k| w.tri * (total / w.r[k] - dmb[k]) - lambda * w.r[k])
        .collect();
    let gb = (0..n)
        .map(|k| -w.tri * (total / w.r[k] + dm[k]) + lambda * w.r[k])
        .collect();
    Ok((ga, gb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Bounds {
    pub fn region(&self) -> Result<Region> {
        Region::new(self.a.clone(), self.b.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub forward: u64,
    pub backward: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub clamped: bool,
    /// `-△1ᵀf_D` at the bounds this step was computed from.
    #[serde(skip)]
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthTrace {
    pub method: Method,
    pub params: OptimizerParams,
    pub u0: Vec<f64>,
    pub domain: Domain,
    #[serde(rename = "final")]
    pub final_bounds: Bounds,
    pub counters: Counters,
    pub steps: Vec<Step>,
}

impl GrowthTrace {
    pub fn final_region(&self) -> Result<Region> {
        self.final_bounds.region()
    }
}

/// A failed run. Evaluation failures mid-run keep the steps taken so far.
#[derive(Debug)]
pub struct GrowError {
    pub error: SrfError,
    pub partial: Option<Box<GrowthTrace>>,
}

impl fmt::Display for GrowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.partial {
            Some(p) => write!(f, "{} (after {} steps)", self.error, p.steps.len().saturating_sub(1)),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for GrowError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SrfError> for GrowError {
    fn from(error: SrfError) -> Self {
        Self { error, partial: None }
    }
}

impl From<GrowError> for SrfError {
    fn from(e: GrowError) -> Self {
        e.error
    }
}

fn preflight<O: FunctionOracle + ?Sized>(
    oracle: &O,
    u0: &[f64],
    method: Method,
    params: &OptimizerParams,
    domain: &Domain,
) -> Result<()> {
    params.validate()?;
    let n = domain.dim();
    check_dim(n)?;
    if method == Method::Oirw {
        check_beta(params.beta, n)?;
    }
    if oracle.dim() != n {
        return Err(SrfError::DimensionMismatch {
            expected: n,
            got: oracle.dim(),
        });
    }
    if u0.len() != n {
        return Err(SrfError::DimensionMismatch { expected: n, got: u0.len() });
    }
    if method.white_box() && !oracle.supports_grad() {
        return Err(SrfError::GradientUnsupported);
    }
    if !oracle.domain().encloses(domain) {
        return Err(SrfError::InvalidDomain("run domain must lie inside the oracle's domain".into()));
    }
    if !domain.contains_strictly(u0) {
        return Err(SrfError::InvalidParams(format!("u0 {u0:?} is not strictly inside the domain")));
    }
    for (fl, e) in params.floors(domain).iter().zip(domain.extents()) {
        if *fl > e {
            return Err(SrfError::InvalidParams(format!("floor {fl} exceeds a domain extent {e}")));
        }
    }
    Ok(())
}

/// Clamp to the domain, then widen any side below its floor symmetrically,
/// sliding back inside if the widening crosses the domain edge.
fn contain(a: &mut [f64], b: &mut [f64], domain: &Domain, floors: &[f64]) -> bool {
    let mut clamped = domain.clamp_in_place(a);
    clamped |= domain.clamp_in_place(b);
    for k in 0..a.len() {
        if b[k] - a[k] < floors[k] {
            let c = 0.5 * (a[k] + b[k]);
            let h = 0.5 * floors[k];
            a[k] = c - h;
            b[k] = c + h;
            if a[k] < domain.lo[k] {
                a[k] = domain.lo[k];
                b[k] = domain.lo[k] + floors[k];
            } else if b[k] > domain.hi[k] {
                b[k] = domain.hi[k];
                a[k] = domain.hi[k] - floors[k];
            }
        }
    }
    clamped
}

/// Corners of `reg` clamped into the run domain, and whether anything moved.
fn corners_in(domain: &Domain, reg: &Region, alpha: Option<f64>) -> Result<(ndarray::Array2<f64>, bool)> {
    let mut d = match alpha {
        Some(al) => outer_corner_matrix(reg, al)?,
        None => corner_matrix(reg)?,
    };
    let mut moved = false;
    for mut col in d.columns_mut() {
        let mut u = col.to_vec();
        if domain.clamp_in_place(&mut u) {
            moved = true;
            col.assign(&ArrayView1::from(&u[..]));
        }
    }
    Ok((d, moved))
}

/// One update's bound gradients, surrogate loss and corner-clamp flag.
fn step_gradients<O: FunctionOracle + ?Sized>(
    oracle: &O,
    reg: &Region,
    method: Method,
    params: &OptimizerParams,
    domain: &Domain,
) -> Result<(Vec<f64>, Vec<f64>, f64, bool)> {
    let (d, mut clamped) = corners_in(domain, reg, None)?;
    let (f_d, grads) = if method.white_box() {
        let (v, g) = corner_values_and_gradients(oracle, &d)?;
        (v.f, Some(g))
    } else {
        (corner_values(oracle, &d)?.f, None)
    };
    let loss = -reg.normalized_volume() * f_d.iter().sum::<f64>();
    let (ga, gb) = match method {
        Method::Naive => naive_step(&f_d, reg, params.lambda)?,
        Method::Oirb => {
            let (q, moved) = corners_in(domain, reg, Some(params.alpha))?;
            clamped |= moved;
            let f_q = corner_values(oracle, &q)?.f;
            oirb_step(&f_d, &f_q, reg, params.alpha)?
        }
        Method::Oirw => oirw_step(&f_d, grads.as_ref().expect("white box"), reg, params.beta)?,
        Method::Trapgrad => trapgrad_step(&f_d, grads.as_ref().expect("white box"), reg, params.lambda)?,
    };
    if ga.iter().chain(&gb).any(|g| !g.is_finite()) {
        return Err(SrfError::evaluator("non-finite bound gradient"));
    }
    Ok((ga, gb, loss, clamped))
}

/// Grow a box around `u0` by `params.steps` fixed-size gradient steps.
///
/// Bounds start at `u0 ± eps_init`, and after every update are clamped into
/// `domain` and kept at least `floor` apart. The trace holds the bounds
/// before the first update (`t = 0`) and after each update.
pub fn grow_region<O: FunctionOracle + ?Sized>(
    oracle: &O,
    u0: &[f64],
    method: Method,
    params: &OptimizerParams,
    domain: &Domain,
) -> std::result::Result<GrowthTrace, GrowError> {
    preflight(oracle, u0, method, params, domain)?;
    let counted = CountingOracle::new(oracle);
    let floors = params.floors(domain);
    let mut resolved = params.clone();
    if resolved.floor.is_none() && floors.windows(2).all(|w| w[0] == w[1]) {
        resolved.floor = Some(floors[0]);
    }

    let mut a: Vec<f64> = u0.iter().map(|u| u - params.eps_init).collect();
    let mut b: Vec<f64> = u0.iter().map(|u| u + params.eps_init).collect();
    let clamped0 = contain(&mut a, &mut b, domain, &floors);
    let mut trace = GrowthTrace {
        method,
        params: resolved,
        u0: u0.to_vec(),
        domain: domain.clone(),
        final_bounds: Bounds { a: a.clone(), b: b.clone() },
        counters: Counters::default(),
        steps: Vec::with_capacity(params.steps + 1),
    };
    trace.steps.push(Step {
        t: 0,
        a: a.clone(),
        b: b.clone(),
        clamped: clamped0,
        loss: None,
    });

    let mut quiet = 0usize;
    for t in 1..=params.steps {
        let result = Region::new(a.clone(), b.clone())
            .and_then(|reg| step_gradients(&counted, &reg, method, params, domain));
        let (ga, gb, loss, corner_clamped) = match result {
            Ok(v) => v,
            Err(error) => {
                trace.counters = Counters {
                    forward: counted.forward_calls(),
                    backward: counted.backward_calls(),
                };
                return Err(GrowError {
                    error,
                    partial: Some(Box::new(trace)),
                });
            }
        };
        let (prev_a, prev_b) = (a.clone(), b.clone());
        for k in 0..a.len() {
            a[k] -= params.eta * ga[k];
            b[k] -= params.eta * gb[k];
        }
        let clamped = contain(&mut a, &mut b, domain, &floors) | corner_clamped;
        trace.steps.push(Step {
            t,
            a: a.clone(),
            b: b.clone(),
            clamped,
            loss: Some(loss),
        });
        if params.early_stop {
            let moved: f64 = a
                .iter()
                .zip(&prev_a)
                .chain(b.iter().zip(&prev_b))
                .map(|(x, y)| (x - y).abs())
                .sum();
            quiet = if moved < 1e-9 { quiet + 1 } else { 0 };
            if quiet >= 10 {
                break;
            }
        }
    }
    trace.final_bounds = Bounds { a, b };
    trace.counters = Counters {
        forward: counted.forward_calls(),
        backward: counted.backward_calls(),
    };
    Ok(trace)
}
