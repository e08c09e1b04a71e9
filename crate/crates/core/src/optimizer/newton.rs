//! Newton corrections for the fixed-point maps.
//!
//! Near a solution the damped maps slow down when the problem is stiff, and
//! their objective tests stop being informative once rate changes reach the
//! quadrature error. A Newton step on the residual `T(x) - x` converges
//! fast there and needs only the map itself.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Relative forward-difference step of the Jacobian.
const JACOBIAN_STEP: f64 = 1e-6;
/// Singular values below this fraction of the largest are dropped.
const RANK_TOL: f64 = 1e-10;
/// Halvings of a Newton step before it is abandoned.
pub(crate) const NEWTON_HALVINGS: usize = 12;
/// Relative drop of the priced objective a Newton step may cause.
pub(crate) const DRIFT: f64 = 1e-6;

/// Minimum-norm `d` with `J d = -r`, where `J` is the forward-difference
/// Jacobian of `residual` at `x` and `r = residual(x)`. `None` if `J` vanishes.
pub(crate) fn correction(
    x: &[f64],
    r: &[f64],
    mut residual: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Option<Vec<f64>>> {
    let n = x.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let h = JACOBIAN_STEP * x[j].abs().max(1e-3);
        let mut probe = x.to_vec();
        probe[j] += h;
        let rp = residual(&probe)?;
        for i in 0..n {
            jac[(i, j)] = (rp[i] - r[i]) / h;
        }
    }
    let svd = jac.svd(true, true);
    let top = svd.singular_values.max();
    if top.is_nan() || top <= 0.0 {
        return Ok(None);
    }
    let b = DVector::from_iterator(n, r.iter().map(|v| -v));
    Ok(svd
        .solve(&b, RANK_TOL * top)
        .ok()
        .map(|d| d.iter().copied().collect())
        .filter(|d: &Vec<f64>| d.iter().all(|v| v.is_finite())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_linear_residual_in_one_step() {
        // r(x) = A x - b with A = [[2, 1], [0, 3]], b = [1, 3]
        let res = |x: &[f64]| Ok(vec![2.0 * x[0] + x[1] - 1.0, 3.0 * x[1] - 3.0]);
        let x = [0.5, 0.5];
        let r = res(&x).unwrap();
        let d = correction(&x, &r, res).unwrap().unwrap();
        let y = [x[0] + d[0], x[1] + d[1]];
        assert!(
            (y[0] - 0.0).abs() < 1e-6 && (y[1] - 1.0).abs() < 1e-6,
            "{y:?}"
        );
    }

    #[test]
    fn null_directions_get_no_step() {
        // residual depends on x0 + x1 only
        let res = |x: &[f64]| Ok(vec![x[0] + x[1] - 1.0, x[0] + x[1] - 1.0]);
        let x = [0.2, 0.2];
        let r = res(&x).unwrap();
        let d = correction(&x, &r, res).unwrap().unwrap();
        assert!((d[0] - d[1]).abs() < 1e-6);
        assert!((x[0] + d[0] + x[1] + d[1] - 1.0).abs() < 1e-6);
    }
}
