//! Analytic test landscapes with known ground truth.

use serde::{Deserialize, Serialize};

use super::{check_point, FunctionOracle};
use crate::error::{Result, SrfError};
use crate::geometry::Domain;

/// Shared parameters of the plateau-shaped landscapes: level `hi` inside the
/// box `[box_lo, box_hi]`, level `lo` outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub hi: f64,
    pub lo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinKind {
    Constant {
        value: f64,
    },
    /// `offset + weights · u`
    Ramp {
        offset: f64,
        weights: Vec<f64>,
    },
    /// Piecewise constant; the box is closed.
    StepBox {
        #[serde(flatten)]
        plateau: Plateau,
    },
    /// `lo + (hi - lo) ∏ σ(s(u_k - l_k)) σ(s(h_k - u_k))`
    SmoothPlateau {
        #[serde(flatten)]
        plateau: Plateau,
        sharpness: f64,
    },
    /// `base + amplitude exp(-|u - c|² / 2w²)`
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        base: f64,
        amplitude: f64,
    },
    /// A smooth plateau with a Gaussian pit of `depth` carved out of it. The
    /// pit is modulated by the plateau profile so values outside the box stay
    /// at `lo`.
    TrapPlateau {
        #[serde(flatten)]
        plateau: Plateau,
        sharpness: f64,
        center: Vec<f64>,
        width: f64,
        depth: f64,
    },
}

impl BuiltinKind {
    fn default_plateau(n: usize) -> Plateau {
        Plateau {
            box_lo: vec![2.0; n],
            box_hi: vec![6.0; n],
            hi: 0.9,
            lo: 0.1,
        }
    }

    /// 0.9 on `[2,6]^n`, 0.1 elsewhere.
    pub fn step_box_default(n: usize) -> Self {
        BuiltinKind::StepBox {
            plateau: Self::default_plateau(n),
        }
    }

    pub fn smooth_plateau_default(n: usize) -> Self {
        BuiltinKind::SmoothPlateau {
            plateau: Self::default_plateau(n),
            sharpness: 8.0,
        }
    }

    pub fn trap_plateau_default(n: usize) -> Self {
        BuiltinKind::TrapPlateau {
            plateau: Self::default_plateau(n),
            sharpness: 8.0,
            center: vec![4.0; n],
            width: 0.3,
            depth: 0.7,
        }
    }

    pub fn gaussian_bump_default(n: usize) -> Self {
        BuiltinKind::GaussianBump {
            center: vec![4.0; n],
            width: 1.0,
            base: 0.1,
            amplitude: 0.8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinKind::Constant { .. } => "constant",
            BuiltinKind::Ramp { .. } => "ramp",
            BuiltinKind::StepBox { .. } => "step_box",
            BuiltinKind::SmoothPlateau { .. } => "smooth_plateau",
            BuiltinKind::GaussianBump { .. } => "gaussian_bump",
            BuiltinKind::TrapPlateau { .. } => "trap_plateau",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinSpec {
    #[serde(flatten)]
    pub kind: BuiltinKind,
    pub domain: Domain,
}

impl BuiltinSpec {
    pub fn new(kind: BuiltinKind, domain: Domain) -> Self {
        Self { kind, domain }
    }

    /// Parse `<kind>[:<params>]` where params are either a bare value
    /// (`constant:0.5`) or `key=value` pairs separated by `/`, e.g.
    /// `step_box:box=2:6,2:6/hi=0.9/lo=0.1`. Vector parameters are comma
    /// lists; a single entry is repeated across all dimensions. Omitted keys
    /// take the desk defaults (plateau `[2,6]^n`, levels 0.9/0.1).
    pub fn parse(text: &str, domain: Domain) -> Result<Self> {
        let n = domain.dim();
        let (kind, params) = match text.split_once(':') {
            Some((k, p)) => (k.trim(), p.trim()),
            None => (text.trim(), ""),
        };
        let mut p = Params::parse(params)?;
        let kind = match kind {
            "constant" => BuiltinKind::Constant {
                value: p.scalar_or_bare("value")?.ok_or_else(|| {
                    SrfError::InvalidSpec("constant needs a value, e.g. constant:0.5".into())
                })?,
            },
            "ramp" => BuiltinKind::Ramp {
                offset: p.scalar("offset")?.unwrap_or(0.0),
                weights: p.vector("w", n)?.unwrap_or_else(|| vec![1.0; n]),
            },
            "step_box" => BuiltinKind::StepBox {
                plateau: p.plateau(n)?,
            },
            "smooth_plateau" => BuiltinKind::SmoothPlateau {
                plateau: p.plateau(n)?,
                sharpness: p.scalar("sharpness")?.unwrap_or(8.0),
            },
            "gaussian_bump" => {
                let BuiltinKind::GaussianBump {
                    center,
                    width,
                    base,
                    amplitude,
                } = BuiltinKind::gaussian_bump_default(n)
                else {
                    unreachable!()
                };
                BuiltinKind::GaussianBump {
                    center: p.vector("center", n)?.unwrap_or(center),
                    width: p.scalar("width")?.unwrap_or(width),
                    base: p.scalar("base")?.unwrap_or(base),
                    amplitude: p.scalar("amp")?.unwrap_or(amplitude),
                }
            }
            "trap_plateau" => BuiltinKind::TrapPlateau {
                plateau: p.plateau(n)?,
                sharpness: p.scalar("sharpness")?.unwrap_or(8.0),
                center: p.vector("center", n)?.unwrap_or_else(|| vec![4.0; n]),
                width: p.scalar("width")?.unwrap_or(0.3),
                depth: p.scalar("depth")?.unwrap_or(0.7),
            },
            other => return Err(SrfError::InvalidSpec(format!("unknown builtin kind `{other}`"))),
        };
        p.finish()?;
        Ok(Self { kind, domain })
    }
}

struct Params {
    bare: Option<String>,
    pairs: Vec<(String, String)>,
}

impl Params {
    fn parse(text: &str) -> Result<Self> {
        let mut bare = None;
        let mut pairs = Vec::new();
        for part in text.split('/').map(str::trim).filter(|s| !s.is_empty()) {
            match part.split_once('=') {
                Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
                None if bare.is_none() && pairs.is_empty() => bare = Some(part.to_string()),
                None => return Err(SrfError::InvalidSpec(format!("expected key=value, got `{part}`"))),
            }
        }
        Ok(Self { bare, pairs })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let idx = self.pairs.iter().position(|(k, _)| k == key)?;
        Some(self.pairs.remove(idx).1)
    }

    fn scalar(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key).map(|v| parse_f64(&v)).transpose()
    }

    fn scalar_or_bare(&mut self, key: &str) -> Result<Option<f64>> {
        match self.bare.take() {
            Some(v) => parse_f64(&v).map(Some),
            None => self.scalar(key),
        }
    }

    fn vector(&mut self, key: &str, n: usize) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.take(key) else { return Ok(None) };
        let vals = v.split(',').map(parse_f64).collect::<Result<Vec<_>>>()?;
        broadcast(vals, n, key).map(Some)
    }

    fn plateau(&mut self, n: usize) -> Result<Plateau> {
        let mut p = BuiltinKind::default_plateau(n);
        if let Some(text) = self.take("box") {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for part in text.split(',') {
                let (l, h) = part
                    .split_once(':')
                    .ok_or_else(|| SrfError::InvalidSpec(format!("box entries are lo:hi, got `{part}`")))?;
                lo.push(parse_f64(l)?);
                hi.push(parse_f64(h)?);
            }
            p.box_lo = broadcast(lo, n, "box")?;
            p.box_hi = broadcast(hi, n, "box")?;
        }
        if let Some(v) = self.scalar("hi")? {
            p.hi = v;
        }
        if let Some(v) = self.scalar("lo")? {
            p.lo = v;
        }
        Ok(p)
    }

    fn finish(self) -> Result<()> {
        if let Some(b) = self.bare {
            return Err(SrfError::InvalidSpec(format!("unexpected bare parameter `{b}`")));
        }
        if let Some((k, _)) = self.pairs.first() {
            return Err(SrfError::InvalidSpec(format!("unknown parameter `{k}`")));
        }
        Ok(())
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| SrfError::InvalidSpec(format!("not a number: `{s}`")))
}

fn broadcast(vals: Vec<f64>, n: usize, key: &str) -> Result<Vec<f64>> {
    match vals.len() {
        1 => Ok(vec![vals[0]; n]),
        len if len == n => Ok(vals),
        len => Err(SrfError::InvalidSpec(format!(
            "`{key}` has {len} entries, expected 1 or {n}"
        ))),
    }
}

/// An analytic oracle built from a [`BuiltinSpec`].
#[derive(Debug, Clone)]
pub struct BuiltinOracle {
    spec: BuiltinSpec,
}

pub fn make_builtin(spec: &BuiltinSpec) -> Result<BuiltinOracle> {
    validate(spec)?;
    Ok(BuiltinOracle { spec: spec.clone() })
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(SrfError::InvalidSpec(format!("{name} must lie in (0,1), got {v}")))
    }
}

fn dim_is(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(SrfError::InvalidSpec(format!("{name} has {} entries, domain has n={n}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SrfError::InvalidSpec(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn validate_plateau(p: &Plateau, n: usize) -> Result<()> {
    dim_is("box_lo", &p.box_lo, n)?;
    dim_is("box_hi", &p.box_hi, n)?;
    if p.box_lo.iter().zip(&p.box_hi).any(|(l, h)| l >= h) {
        return Err(SrfError::InvalidSpec("plateau box needs lo < hi".into()));
    }
    open_unit("hi", p.hi)?;
    open_unit("lo", p.lo)
}

fn validate(spec: &BuiltinSpec) -> Result<()> {
    let n = spec.domain.dim();
    match &spec.kind {
        BuiltinKind::Constant { value } => open_unit("value", *value),
        BuiltinKind::Ramp { offset, weights } => {
            dim_is("weights", weights, n)?;
            // linear, so the extremes over the domain sit at its corners
            let (mut min, mut max) = (*offset, *offset);
            for ((w, l), h) in weights.iter().zip(&spec.domain.lo).zip(&spec.domain.hi) {
                min += (w * l).min(w * h);
                max += (w * l).max(w * h);
            }
            if min < 0.0 || max > 1.0 || !offset.is_finite() {
                return Err(SrfError::InvalidSpec(format!(
                    "ramp ranges over [{min}, {max}] on the domain, must stay within [0,1]"
                )));
            }
            Ok(())
        }
        BuiltinKind::StepBox { plateau } => validate_plateau(plateau, n),
        BuiltinKind::SmoothPlateau { plateau, sharpness } => {
            validate_plateau(plateau, n)?;
            positive("sharpness", *sharpness)
        }
        BuiltinKind::GaussianBump {
            center,
            width,
            base,
            amplitude,
        } => {
            dim_is("center", center, n)?;
            positive("width", *width)?;
            open_unit("base", *base)?;
            open_unit("base + amplitude", base + amplitude)
        }
        BuiltinKind::TrapPlateau {
            plateau,
            sharpness,
            center,
            width,
            depth,
        } => {
            validate_plateau(plateau, n)?;
            positive("sharpness", *sharpness)?;
            dim_is("center", center, n)?;
            positive("width", *width)?;
            if !(*depth >= 0.0 && *depth < plateau.hi) {
                return Err(SrfError::InvalidSpec(format!(
                    "trap depth must lie in [0, hi), got {depth}"
                )));
            }
            Ok(())
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SrfError::InvalidSpec(format!("{name} must be positive, got {v}")))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Product-of-sigmoids profile and its gradient.
fn smooth_profile(p: &Plateau, s: f64, u: &[f64]) -> (f64, Vec<f64>) {
    let mut prod = 1.0;
    let mut dlog = Vec::with_capacity(u.len());
    for ((x, l), h) in u.iter().zip(&p.box_lo).zip(&p.box_hi) {
        let left = sigmoid(s * (x - l));
        let right = sigmoid(s * (h - x));
        prod *= left * right;
        // d/dx log(left·right)
        dlog.push(s * (right - left));
    }
    let grad = dlog.into_iter().map(|d| d * prod).collect();
    (prod, grad)
}

fn gaussian(center: &[f64], width: f64, u: &[f64]) -> (f64, Vec<f64>) {
    let w2 = width * width;
    let d2: f64 = u.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
    let g = (-d2 / (2.0 * w2)).exp();
    let grad = u.iter().zip(center).map(|(x, c)| -g * (x - c) / w2).collect();
    (g, grad)
}

impl BuiltinOracle {
    pub fn spec(&self) -> &BuiltinSpec {
        &self.spec
    }

    fn value(&self, u: &[f64]) -> f64 {
        match &self.spec.kind {
            BuiltinKind::Constant { value } => *value,
            BuiltinKind::Ramp { offset, weights } => offset + weights.iter().zip(u).map(|(w, x)| w * x).sum::<f64>(),
            BuiltinKind::StepBox { plateau: p } => {
                let inside = u
                    .iter()
                    .zip(p.box_lo.iter().zip(&p.box_hi))
                    .all(|(x, (l, h))| l <= x && x <= h);
                if inside {
                    p.hi
                } else {
                    p.lo
                }
            }
            BuiltinKind::SmoothPlateau { plateau: p, sharpness } => {
                p.lo + (p.hi - p.lo) * smooth_profile(p, *sharpness, u).0
            }
            BuiltinKind::GaussianBump {
                center,
                width,
                base,
                amplitude,
            } => base + amplitude * gaussian(center, *width, u).0,
            BuiltinKind::TrapPlateau {
                plateau: p,
                sharpness,
                center,
                width,
                depth,
            } => {
                let (prof, _) = smooth_profile(p, *sharpness, u);
                let (g, _) = gaussian(center, *width, u);
                p.lo + prof * ((p.hi - p.lo) - depth * g)
            }
        }
    }

    fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        let n = u.len();
        Ok(match &self.spec.kind {
            BuiltinKind::Constant { .. } => vec![0.0; n],
            BuiltinKind::Ramp { weights, .. } => weights.clone(),
            BuiltinKind::StepBox { .. } => return Err(SrfError::GradientUnsupported),
            BuiltinKind::SmoothPlateau { plateau: p, sharpness } => smooth_profile(p, *sharpness, u)
                .1
                .into_iter()
                .map(|d| (p.hi - p.lo) * d)
                .collect(),
            BuiltinKind::GaussianBump {
                center,
                width,
                amplitude,
                ..
            } => gaussian(center, *width, u).1.into_iter().map(|d| amplitude * d).collect(),
            BuiltinKind::TrapPlateau {
                plateau: p,
                sharpness,
                center,
                width,
                depth,
            } => {
                let (prof, dprof) = smooth_profile(p, *sharpness, u);
                let (g, dg) = gaussian(center, *width, u);
                let level = (p.hi - p.lo) - depth * g;
                dprof
                    .iter()
                    .zip(&dg)
                    .map(|(dp, dg)| dp * level - prof * depth * dg)
                    .collect()
            }
        })
    }
}

impl FunctionOracle for BuiltinOracle {
    fn dim(&self) -> usize {
        self.spec.domain.dim()
    }

    fn domain(&self) -> &Domain {
        &self.spec.domain
    }

    fn supports_grad(&self) -> bool {
        !matches!(self.spec.kind, BuiltinKind::StepBox { .. })
    }

    fn eval(&self, u: &[f64]) -> Result<f64> {
        check_point(self.dim(), u)?;
        Ok(self.value(u))
    }

    fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_point(self.dim(), u)?;
        self.gradient(u)
    }

    fn describe(&self) -> String {
        format!("builtin:{}", self.spec.kind.name())
    }
}
