//! High-precision reference integration of Hamiltonian vector fields.
//!
//! Dormand-Prince 5(4) with PI step-size control. Tolerances default to
//! 1e-13: tighter targets are not reliably attainable in double precision
//! for adaptive embedded pairs, so the paper-style 1e-15 is not the default.

use crate::error::{Result, StrupError};

/// Tolerances and step budget for [`dopri5`].
#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-13, rel_tol: 1e-13, max_steps: 1_000_000 }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<()> {
        if self.abs_tol <= 0.0 || self.rel_tol <= 0.0 {
            return Err(StrupError::Config("integrator tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(StrupError::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `dx/dt = f(x)` from `x0` over a (signed) time span `t_span`.
///
/// Errors with [`StrupError::Accuracy`] when the step budget is exhausted
/// before reaching `t_span`; accuracy is never silently degraded.
pub fn dopri5<F>(f: F, x0: &[f64], t_span: f64, config: &IntegratorConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    config.validate()?;
    if t_span == 0.0 {
        return Ok(x0.to_vec());
    }
    let dim = x0.len();
    let dir = t_span.signum();
    let t_end = t_span.abs();
    let mut t = 0.0f64;
    let mut x = x0.to_vec();
    let mut h = (t_end / 100.0).min(0.1).max(1e-8);
    let mut err_prev: f64 = 1.0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];

    for _ in 0..config.max_steps {
        if t >= t_end {
            return Ok(x);
        }
        h = h.min(t_end - t);
        k[0] = f(&x);
        for s in 0..6 {
            let mut xs = x.clone();
            for (j, aj) in A[s].iter().enumerate().take(s + 1) {
                if *aj != 0.0 {
                    for i in 0..dim {
                        xs[i] += dir * h * aj * k[j][i];
                    }
                }
            }
            k[s + 1] = f(&xs);
        }
        let mut x5 = x.clone();
        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            x5[i] += dir * h * d5;
            let sc = config.abs_tol + config.rel_tol * x[i].abs().max(x5[i].abs());
            let e = h * (d5 - d4) / sc;
            err_sq += e * e;
        }
        let err = (err_sq / dim as f64).sqrt().max(1e-30);
        if !err.is_finite() || x5.iter().any(|v| !v.is_finite()) {
            return Err(StrupError::Numeric("non-finite state during integration".into()));
        }
        if err <= 1.0 {
            t += h;
            x = x5;
            // PI controller (orders 5/4)
            let fac = 0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 5.0);
            err_prev = err;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
        if h < 1e-15 * t_end {
            return Err(StrupError::Accuracy(
                "step size underflow in reference integrator".into(),
            ));
        }
    }
    if t >= t_end {
        Ok(x)
    } else {
        Err(StrupError::Accuracy(format!(
            "reference integrator exhausted {} steps at t = {t:.3e} of {t_end:.3e}",
            config.max_steps
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_span_is_identity() {
        let x = dopri5(|v| v.to_vec(), &[1.0, 2.0], 0.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn harmonic_oscillator_quarter_turn() {
        // pdot = -q, qdot = p: (1, 0) -> (0, 1) at t = pi/2
        let f = |v: &[f64]| vec![-v[1], v[0]];
        let x = dopri5(f, &[1.0, 0.0], std::f64::consts::FRAC_PI_2, &IntegratorConfig::default())
            .unwrap();
        assert!(x[0].abs() < 1e-11, "{x:?}");
        assert!((x[1] - 1.0).abs() < 1e-11, "{x:?}");
    }

    #[test]
    fn negative_span_reverses() {
        let f = |v: &[f64]| vec![-v[1], v[0]];
        let cfg = IntegratorConfig::default();
        let fwd = dopri5(f, &[0.3, -0.7], 1.7, &cfg).unwrap();
        let back = dopri5(f, &fwd, -1.7, &cfg).unwrap();
        assert!((back[0] - 0.3).abs() < 1e-10);
        assert!((back[1] + 0.7).abs() < 1e-10);
    }

    #[test]
    fn exponential_growth_accuracy() {
        let f = |v: &[f64]| v.to_vec();
        let x = dopri5(f, &[1.0], 1.0, &IntegratorConfig::default()).unwrap();
        assert!((x[0] - std::f64::consts::E).abs() < 1e-11);
    }

    #[test]
    fn step_budget_enforced() {
        let cfg = IntegratorConfig { max_steps: 3, ..Default::default() };
        let f = |v: &[f64]| vec![-v[1], v[0]];
        let r = dopri5(f, &[1.0, 0.0], 100.0, &cfg);
        assert!(matches!(r, Err(StrupError::Accuracy(_))));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = IntegratorConfig { abs_tol: 0.0, ..Default::default() };
        assert!(dopri5(|v| v.to_vec(), &[1.0], 1.0, &cfg).is_err());
    }
}
