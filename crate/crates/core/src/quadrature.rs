//! Corner sampling and the trapezoid / midpoint integrals over boxes.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Result, SrfError};
use crate::geometry::{check_dim, Region};
use crate::oracles::{clip_unit, FunctionOracle};

/// Largest grid the brute-force integral and the map sampler will evaluate.
pub const GRID_BUDGET: usize = 10_000_000;

/// `f_D`: one clipped value per corner, in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerValues {
    pub f: Vec<f64>,
    /// Some corner left the oracle's domain and was clamped back.
    pub clamped: bool,
}

/// `G_D`: row `i` is the gradient at corner `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerGradients(pub Array2<f64>);

impl CornerGradients {
    pub fn zeros(n: usize) -> Self {
        Self(Array2::zeros((1usize << n, n)))
    }
}

fn clamped_columns<O: FunctionOracle + ?Sized>(oracle: &O, corners: &Array2<f64>) -> Result<(Vec<Vec<f64>>, bool)> {
    let n = corners.nrows();
    check_dim(n)?;
    if n != oracle.dim() {
        return Err(SrfError::DimensionMismatch {
            expected: oracle.dim(),
            got: n,
        });
    }
    if corners.ncols() != 1usize << n {
        return Err(SrfError::ShapeMismatch(format!(
            "corner matrix has {} columns, expected {}",
            corners.ncols(),
            1usize << n
        )));
    }
    let mut clamped = false;
    let cols = corners
        .columns()
        .into_iter()
        .map(|c| {
            let mut u = c.to_vec();
            clamped |= oracle.domain().clamp_in_place(&mut u);
            u
        })
        .collect();
    Ok((cols, clamped))
}

/// Evaluate `job` on every column, in parallel when the oracle allows it. The
/// first failing column (in column order) is reported.
fn per_corner<O, T, F>(oracle: &O, cols: &[Vec<f64>], job: F) -> Result<Vec<T>>
where
    O: FunctionOracle + ?Sized,
    T: Send,
    F: Fn(&[f64]) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = if oracle.concurrent() {
        cols.par_iter().map(|u| job(u)).collect()
    } else {
        cols.iter().map(|u| job(u)).collect()
    };
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| e.at_corner(i)))
        .collect()
}

/// `f` at every column of `corners`, clamped into the oracle's domain first and
/// clipped into `[EPS_CLIP, 1 - EPS_CLIP]` after.
pub fn corner_values<O: FunctionOracle + ?Sized>(oracle: &O, corners: &Array2<f64>) -> Result<CornerValues> {
    let (cols, clamped) = clamped_columns(oracle, corners)?;
    let f = per_corner(oracle, &cols, |u| oracle.eval(u).map(clip_unit))?;
    Ok(CornerValues { f, clamped })
}

/// `∇f` at every column of `corners`.
pub fn corner_gradients<O: FunctionOracle + ?Sized>(oracle: &O, corners: &Array2<f64>) -> Result<CornerGradients> {
    if !oracle.supports_grad() {
        return Err(SrfError::GradientUnsupported);
    }
    let (cols, _) = clamped_columns(oracle, corners)?;
    let rows = per_corner(oracle, &cols, |u| oracle.grad(u))?;
    gradient_matrix(rows, corners.nrows())
}

/// Values and gradients in one pass: one forward and one backward request per
/// corner.
pub fn corner_values_and_gradients<O: FunctionOracle + ?Sized>(
    oracle: &O,
    corners: &Array2<f64>,
) -> Result<(CornerValues, CornerGradients)> {
    if !oracle.supports_grad() {
        return Err(SrfError::GradientUnsupported);
    }
    let (cols, clamped) = clamped_columns(oracle, corners)?;
    let both = per_corner(oracle, &cols, |u| oracle.eval_with_grad(u))?;
    let (f, rows): (Vec<f64>, Vec<Vec<f64>>) = both.into_iter().map(|(f, g)| (clip_unit(f), g)).unzip();
    Ok((CornerValues { f, clamped }, gradient_matrix(rows, corners.nrows())?))
}

fn gradient_matrix(rows: Vec<Vec<f64>>, n: usize) -> Result<CornerGradients> {
    let m = rows.len();
    let mut flat = Vec::with_capacity(m * n);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != n {
            return Err(SrfError::Evaluator {
                corner: Some(i),
                message: format!("gradient has {} entries, expected {n}", row.len()),
            });
        }
        flat.extend(row);
    }
    Ok(CornerGradients(Array2::from_shape_vec((m, n), flat).expect("length checked")))
}

/// `△ Σ_i f_D[i]`, the n-dimensional trapezoid rule.
pub fn trapezoid_integral(vals: &[f64], reg: &Region) -> Result<f64> {
    let n = reg.dim();
    check_dim(n)?;
    if vals.len() != 1usize << n {
        return Err(SrfError::LengthMismatch {
            expected: 1usize << n,
            got: vals.len(),
        });
    }
    Ok(reg.normalized_volume() * vals.iter().sum::<f64>())
}

/// Number of points in a `counts[0] x counts[1] x …` grid, or budget-exceeded.
pub(crate) fn grid_size(counts: &[usize]) -> Result<usize> {
    let requested: f64 = counts.iter().map(|&c| c as f64).product();
    if requested > GRID_BUDGET as f64 {
        return Err(SrfError::BudgetExceeded {
            requested,
            limit: GRID_BUDGET,
        });
    }
    Ok(counts.iter().product())
}

/// Split a flat grid index into per-dimension indices, last dimension fastest.
#[inline]
pub(crate) fn unravel(mut i: usize, counts: &[usize], out: &mut [usize]) {
    for k in (0..counts.len()).rev() {
        out[k] = i % counts[k];
        i /= counts[k];
    }
}

/// Raw `f` at `count` grid points, in index order, parallel when allowed.
pub(crate) fn eval_grid<O, P>(oracle: &O, counts: &[usize], point: P) -> Result<Vec<f64>>
where
    O: FunctionOracle + ?Sized,
    P: Fn(&[usize], &mut [f64]) + Sync,
{
    let total = grid_size(counts)?;
    let n = counts.len();
    let one = |i: usize| {
        let mut idx = vec![0usize; n];
        let mut u = vec![0.0; n];
        unravel(i, counts, &mut idx);
        point(&idx, &mut u);
        oracle.eval(&u)
    };
    if oracle.concurrent() {
        (0..total).into_par_iter().map(one).collect()
    } else {
        (0..total).map(one).collect()
    }
}

/// Midpoint-rule estimate of `∫_reg f` on a `pts_per_dim^n` grid of cell centres.
pub fn brute_force_integral<O: FunctionOracle + ?Sized>(oracle: &O, reg: &Region, pts_per_dim: usize) -> Result<f64> {
    let n = reg.dim();
    if n != oracle.dim() {
        return Err(SrfError::DimensionMismatch {
            expected: oracle.dim(),
            got: n,
        });
    }
    if pts_per_dim < 2 {
        return Err(SrfError::InvalidParams(format!("pts_per_dim must be >= 2, got {pts_per_dim}")));
    }
    let counts = vec![pts_per_dim; n];
    let r = reg.sides();
    let a = reg.lower();
    let h: Vec<f64> = r.iter().map(|r| r / pts_per_dim as f64).collect();
    let vals = eval_grid(oracle, &counts, |idx, u| {
        for k in 0..n {
            u[k] = a[k] + (idx[k] as f64 + 0.5) * h[k];
        }
    })?;
    let cell: f64 = h.iter().product();
    Ok(cell * vals.iter().sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{corner_matrix, Domain};
    use crate::oracles::{CountingOracle, FnOracle, EPS_CLIP};
    use proptest::prelude::*;

    fn unit(n: usize) -> Domain {
        Domain::cube(n, 0.0, 1.0).unwrap()
    }

    fn product_fn(n: usize) -> FnOracle {
        FnOracle::new(unit(n), |u: &[f64]| u.iter().product()).with_grad(|u: &[f64]| {
            (0..u.len())
                .map(|k| u.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, x)| x).product())
                .collect()
        })
    }

    #[test]
    fn constant_corners() {
        let f = FnOracle::new(unit(1), |_: &[f64]| 0.5);
        let reg = Region::new(vec![0.2], vec![0.7]).unwrap();
        let v = corner_values(&f, &corner_matrix(&reg).unwrap()).unwrap();
        assert_eq!(v.f, vec![0.5, 0.5]);
        assert!(!v.clamped);
    }

    #[test]
    fn identity_is_clipped_at_the_ends() {
        let f = FnOracle::new(unit(1), |u: &[f64]| u[0]);
        let reg = Region::new(vec![0.0], vec![1.0]).unwrap();
        let v = corner_values(&f, &corner_matrix(&reg).unwrap()).unwrap();
        assert_eq!(v.f, vec![EPS_CLIP, 1.0 - EPS_CLIP]);
    }

    #[test]
    fn bilinear_corners_and_exact_trapezoid() {
        let f = product_fn(2);
        let reg = Region::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let d = corner_matrix(&reg).unwrap();
        let raw: Vec<f64> = d.columns().into_iter().map(|c| f.eval(&c.to_vec()).unwrap()).collect();
        assert_eq!(raw, vec![0.0, 0.0, 0.0, 1.0]);
        assert!((trapezoid_integral(&raw, &reg).unwrap() - 0.25).abs() < 1e-15);
        let g = corner_gradients(&f, &d).unwrap();
        assert_eq!(g.0.row(3).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn constant_one_integrates_to_one_in_every_dimension() {
        for n in 1..=8 {
            let reg = unit(n).as_region();
            let vals = vec![1.0; 1 << n];
            assert!((trapezoid_integral(&vals, &reg).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trapezoid_length_checked() {
        let reg = unit(2).as_region();
        assert!(matches!(
            trapezoid_integral(&[1.0, 2.0, 3.0], &reg),
            Err(SrfError::LengthMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn square_error_within_envelope() {
        let reg = unit(1).as_region();
        let t = trapezoid_integral(&[0.0, 1.0], &reg).unwrap();
        assert_eq!(t, 0.5);
        // |f'| <= 2 on [0,1]
        assert!((t - 1.0 / 3.0).abs() <= 2.0 * 1.0);
    }

    #[test]
    fn brute_force_examples() {
        let c = FnOracle::new(Domain::cube(2, 0.0, 10.0).unwrap(), |_: &[f64]| 0.3);
        let reg = Region::new(vec![1.0, 2.0], vec![4.0, 2.5]).unwrap();
        assert!((brute_force_integral(&c, &reg, 7).unwrap() - 0.3 * 1.5).abs() < 1e-12);

        let lin = FnOracle::new(unit(1), |u: &[f64]| u[0]);
        let sq = FnOracle::new(unit(1), |u: &[f64]| u[0] * u[0]);
        let reg = unit(1).as_region();
        assert!((brute_force_integral(&lin, &reg, 1000).unwrap() - 0.5).abs() < 1e-3);
        assert!((brute_force_integral(&sq, &reg, 1000).unwrap() - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn brute_force_budget_and_minimum() {
        let f = FnOracle::new(unit(3), |_: &[f64]| 0.5);
        let reg = unit(3).as_region();
        assert!(matches!(
            brute_force_integral(&f, &reg, 216),
            Err(SrfError::BudgetExceeded { .. })
        ));
        assert!(brute_force_integral(&f, &reg, 1).is_err());
    }

    #[test]
    fn one_call_per_corner() {
        for n in 1..=6 {
            let f = CountingOracle::new(product_fn(n));
            let d = corner_matrix(&unit(n).as_region()).unwrap();
            corner_values(&f, &d).unwrap();
            assert_eq!(f.forward_calls(), 1 << n);
            assert_eq!(f.backward_calls(), 0);
            f.reset();
            corner_values_and_gradients(&f, &d).unwrap();
            assert_eq!((f.forward_calls(), f.backward_calls()), (1 << n, 1 << n));
        }
    }

    #[test]
    fn outside_corners_are_clamped() {
        let f = FnOracle::new(unit(2), |u: &[f64]| 0.1 + 0.4 * (u[0] + u[1]));
        let reg = Region::new(vec![-0.5, 0.2], vec![0.5, 0.4]).unwrap();
        let v = corner_values(&f, &corner_matrix(&reg).unwrap()).unwrap();
        assert!(v.clamped);
        assert!((v.f[0] - (0.1 + 0.4 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn failing_corner_reports_its_index() {
        let f = FnOracle::new(unit(2), |u: &[f64]| if u[0] > 0.5 && u[1] < 0.5 { f64::NAN } else { 0.5 });
        struct Failing(FnOracle);
        impl FunctionOracle for Failing {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn domain(&self) -> &Domain {
                self.0.domain()
            }
            fn supports_grad(&self) -> bool {
                false
            }
            fn eval(&self, u: &[f64]) -> Result<f64> {
                let v = self.0.eval(u)?;
                if v.is_nan() {
                    Err(SrfError::evaluator("boom"))
                } else {
                    Ok(v)
                }
            }
            fn grad(&self, _: &[f64]) -> Result<Vec<f64>> {
                Err(SrfError::GradientUnsupported)
            }
            fn describe(&self) -> String {
                "failing".into()
            }
        }
        let reg = unit(2).as_region();
        let err = corner_values(&Failing(f), &corner_matrix(&reg).unwrap()).unwrap_err();
        // corner 2 = (b0, a1) = (1, 0)
        assert!(matches!(err, SrfError::Evaluator { corner: Some(2), .. }), "{err}");
    }

    #[test]
    fn gradients_need_support() {
        let f = FnOracle::new(unit(1), |_: &[f64]| 0.5);
        let d = corner_matrix(&unit(1).as_region()).unwrap();
        assert!(matches!(corner_gradients(&f, &d), Err(SrfError::GradientUnsupported)));
    }

    proptest! {
        #[test]
        fn multilinear_trapezoid_matches_midpoint(
            n in 1usize..=3,
            coef in proptest::collection::vec(-1.0f64..1.0, 8),
            lo in proptest::collection::vec(0.0f64..0.5, 3),
            side in proptest::collection::vec(0.05f64..0.5, 3),
        ) {
            // f(u) = Σ_S c_S ∏_{k∈S} u_k over all subsets S of the dimensions
            let c = coef.clone();
            let f = FnOracle::new(unit(n), move |u: &[f64]| {
                (0..(1usize << u.len()))
                    .map(|s| c[s] * (0..u.len()).filter(|k| s >> k & 1 == 1).map(|k| u[k]).product::<f64>())
                    .sum()
            });
            let reg = Region::new(lo[..n].to_vec(), lo[..n].iter().zip(&side).map(|(l, s)| l + s).collect()).unwrap();
            let d = corner_matrix(&reg).unwrap();
            let raw: Vec<f64> = d.columns().into_iter().map(|col| f.eval(&col.to_vec()).unwrap()).collect();
            let t = trapezoid_integral(&raw, &reg).unwrap();
            let pts = if n == 3 { 60 } else { 200 };
            let b = brute_force_integral(&f, &reg, pts).unwrap();
            prop_assert!((t - b).abs() < 1e-3, "{t} vs {b}");
        }

        #[test]
        fn smooth_error_within_envelope(lo in 0.0f64..3.0, side in 1e-3f64..0.5) {
            let reg = Region::new(vec![lo], vec![lo + side]).unwrap();
            let dom = Domain::cube(1, 0.0, 4.0).unwrap();
            let sq = FnOracle::new(dom.clone(), |u: &[f64]| u[0] * u[0]);
            let sin = FnOracle::new(dom, |u: &[f64]| u[0].sin());
            for (f, lip) in [(&sq, 2.0 * (lo + side)), (&sin, 1.0)] {
                let raw = [f.eval(&[lo]).unwrap(), f.eval(&[lo + side]).unwrap()];
                let t = trapezoid_integral(&raw, &reg).unwrap();
                let b = brute_force_integral(f, &reg, 2000).unwrap();
                prop_assert!((t - b).abs() <= lip * side * side);
            }
        }
    }
}
