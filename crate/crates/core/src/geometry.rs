//! Axis-aligned boxes, the binary corner masks, and corner enumeration.
//!
//! Corner `i` of an `n`-dimensional box is addressed by the `n`-bit binary
//! encoding of `i`: bit `k` (row `k` of the mask, most significant bit first)
//! selects the left bound `a[k]` when 0 and the right bound `b[k]` when 1.
//! Corner 0 is therefore `a` and corner `2^n - 1` is `b`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SrfError};

/// Largest supported dimension; `2^n` corners are evaluated every step.
pub const MAX_DIM: usize = 20;

/// An axis-aligned box `{u : a <= u <= b}` with strictly positive sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Region {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(SrfError::InvalidRegion("dimension must be at least 1".into()));
        }
        if a.len() != b.len() {
            return Err(SrfError::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        for (k, (&lo, &hi)) in a.iter().zip(&b).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(SrfError::InvalidRegion(format!("non-finite bound in dimension {k}")));
            }
            if hi - lo <= 0.0 {
                return Err(SrfError::InvalidRegion(format!(
                    "side {k} is not positive: a={lo}, b={hi}"
                )));
            }
        }
        Ok(Self { a, b })
    }

    /// Box of half-width `half` around `center`.
    pub fn around(center: &[f64], half: f64) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - half).collect(),
            center.iter().map(|c| c + half).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.a
    }

    pub fn upper(&self) -> &[f64] {
        &self.b
    }

    pub fn sides(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| b - a).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Raw volume, the product of the side lengths.
    pub fn volume(&self) -> f64 {
        self.sides().iter().product()
    }

    /// Volume scaled by `1/2^n`, the weight every corner receives in the
    /// trapezoid rule.
    pub fn normalized_volume(&self) -> f64 {
        normalized_volume(self)
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.a.iter().zip(&self.b))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// The box grown by `alpha/2` of each side length on both ends.
    pub fn expanded(&self, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(SrfError::InvalidParams(format!("alpha must be >= 0, got {alpha}")));
        }
        let r = self.sides();
        Self::new(
            self.a.iter().zip(&r).map(|(a, r)| a - 0.5 * alpha * r).collect(),
            self.b.iter().zip(&r).map(|(b, r)| b + 0.5 * alpha * r).collect(),
        )
    }

    /// Largest per-coordinate distance between the bounds of two boxes, which
    /// is the Hausdorff distance under the max-norm.
    pub fn hausdorff(&self, other: &Region) -> f64 {
        self.a
            .iter()
            .zip(&other.a)
            .chain(self.b.iter().zip(&other.b))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// The study space `Ω`, a box with `lo < hi` componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(SrfError::InvalidDomain("dimension must be at least 1".into()));
        }
        if lo.len() != hi.len() {
            return Err(SrfError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (k, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() || l >= h {
                return Err(SrfError::InvalidDomain(format!(
                    "dimension {k} needs finite lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The same interval repeated in every dimension.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn extents(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn volume(&self) -> f64 {
        self.extents().iter().product()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn contains_strictly(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *l < *x && *x < *h)
    }

    /// Does `other` lie inside this domain?
    pub fn encloses(&self, other: &Domain) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    /// Clamp `u` into the domain in place; returns true if anything moved.
    pub fn clamp_in_place(&self, u: &mut [f64]) -> bool {
        let mut moved = false;
        for ((x, l), h) in u.iter_mut().zip(&self.lo).zip(&self.hi) {
            let c = x.clamp(*l, *h);
            if c != *x {
                *x = c;
                moved = true;
            }
        }
        moved
    }

    pub fn as_region(&self) -> Region {
        Region {
            a: self.lo.clone(),
            b: self.hi.clone(),
        }
    }
}

/// The `n x 2^n` matrix `M` whose column `i` is `binary_n(i)`, MSB in row 0,
/// together with its complement `1 - M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    m: Array2<f64>,
    m_bar: Array2<f64>,
}

impl BinaryMask {
    pub fn new(n: usize) -> Result<Self> {
        check_dim(n)?;
        let corners = 1usize << n;
        let m = Array2::from_shape_fn((n, corners), |(k, i)| bit(i, k, n) as f64);
        let m_bar = m.mapv(|x| 1.0 - x);
        Ok(Self { m, m_bar })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn corners(&self) -> usize {
        self.m.ncols()
    }

    pub fn m(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn m_bar(&self) -> &Array2<f64> {
        &self.m_bar
    }
}

/// Construct `M` for dimension `n`.
pub fn mask_matrix(n: usize) -> Result<BinaryMask> {
    BinaryMask::new(n)
}

/// Bit `k` (row `k`, most significant first) of corner index `i` in an
/// `n`-bit encoding.
#[inline]
pub fn bit(i: usize, k: usize, n: usize) -> u8 {
    ((i >> (n - 1 - k)) & 1) as u8
}

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        return Err(SrfError::InvalidParams("dimension must be at least 1".into()));
    }
    if n > MAX_DIM {
        return Err(SrfError::DimensionTooLarge { n, max: MAX_DIM });
    }
    Ok(())
}

/// `D = 1ᵀa + Mᵀ ⊙ (1ᵀr)`: column `i` is corner `i` of the box.
///
/// Each entry selects `a[k]` or `b[k]` directly, which equals `a[k] + r[k]`
/// in exact arithmetic but keeps the last column bit-identical to `b`.
pub fn corner_matrix(reg: &Region) -> Result<Array2<f64>> {
    let n = reg.dim();
    check_dim(n)?;
    Ok(Array2::from_shape_fn((n, 1usize << n), |(k, i)| {
        if bit(i, k, n) == 1 {
            reg.b[k]
        } else {
            reg.a[k]
        }
    }))
}

/// Corners of the outer box `Q = 1ᵀ(a - (α/2)r) + (1+α)Mᵀ ⊙ (1ᵀr)`.
pub fn outer_corner_matrix(reg: &Region, alpha: f64) -> Result<Array2<f64>> {
    corner_matrix(&reg.expanded(alpha)?)
}

/// `(1/2^n) ∏ r_i`.
pub fn normalized_volume(reg: &Region) -> f64 {
    let n = reg.dim() as i32;
    reg.volume() * 0.5f64.powi(n)
}
