//! Dense matrix exponential/logarithm used by the quadratic-basis oracles.
//!
//! The exponential is nalgebra's scaling-and-squaring implementation. The
//! logarithm is inverse scaling and squaring: repeated principal square
//! roots (Denman-Beavers) until the argument is close to the identity,
//! then an alternating series for log(I + X).

use nalgebra::DMatrix;

use crate::error::{Result, StrupError};

pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().exp()
}

/// Principal square root via the Denman-Beavers iteration.
pub fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let y_inv = y
            .clone()
            .try_inverse()
            .ok_or_else(|| StrupError::Convergence("singular iterate in sqrtm".into()))?;
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| StrupError::Convergence("singular iterate in sqrtm".into()))?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta < 1e-15 * (1.0 + y.norm()) {
            return Ok(y);
        }
    }
    // Accept the last iterate if it actually squares back to a.
    if (&y * &y - a).norm() < 1e-10 * (1.0 + a.norm()) {
        return Ok(y);
    }
    Err(StrupError::Convergence("Denman-Beavers did not converge".into()))
}

/// Principal matrix logarithm.
///
/// Fails when repeated square roots cannot bring the matrix near the
/// identity, which happens outside the principal-branch radius.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut b = a.clone();
    let mut sqrt_count = 0u32;
    while (&b - &id).norm() > 0.25 {
        if sqrt_count >= 40 {
            return Err(StrupError::Convergence(
                "matrix log outside principal-branch radius".into(),
            ));
        }
        b = sqrtm(&b)?;
        sqrt_count += 1;
    }
    let x = &b - &id;
    // log(I + X) = X - X^2/2 + X^3/3 - ...
    let mut term = x.clone();
    let mut log = x.clone();
    for j in 2..200 {
        term = &term * &x;
        let contrib = &term * (if j % 2 == 0 { -1.0 } else { 1.0 } / f64::from(j));
        log += &contrib;
        if contrib.norm() < 1e-18 * (1.0 + log.norm()) {
            break;
        }
    }
    Ok(log * f64::from(2u32.pow(sqrt_count) as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn log_of_exp_round_trip() {
        let mut rng = crate::testutil::rng(11);
        for _ in 0..10 {
            let n = 4;
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            let e = expm(&a);
            let l = logm(&e).unwrap();
            assert!((l - &a).norm() < 1e-11, "round trip failed");
        }
    }

    #[test]
    fn sqrtm_squares_back() {
        let mut rng = crate::testutil::rng(12);
        let n = 5;
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3))
            + DMatrix::<f64>::identity(n, n) * 2.0;
        let s = sqrtm(&a).unwrap();
        assert!((&s * &s - &a).norm() < 1e-12);
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!((expm(&z) - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
    }
}
