//! Canonical phase-space primitives.
//!
//! Coordinates are ordered `(p_1..p_n, q_1..q_n)` everywhere in this crate.
//! The symplectic matrix `J` has blocks `[[0, -I], [I, 0]]` in that ordering,
//! so `J (v_p, v_q) = (-v_q, v_p)`.

use nalgebra::DMatrix;

use crate::error::{Result, StrupError};

/// A point `x = (p, q)` in `2n`-dimensional canonical phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseVector {
    coords: Vec<f64>,
}

impl PhaseVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(StrupError::Dimension(format!(
                "phase vector length must be positive and even, got {}",
                coords.len()
            )));
        }
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(StrupError::Argument("non-finite phase coordinates".into()));
        }
        Ok(Self { coords })
    }

    pub fn zeros(dim_n: usize) -> Self {
        Self { coords: vec![0.0; 2 * dim_n] }
    }

    /// Degrees of freedom `n`.
    pub fn dim_n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Momentum block `p`.
    pub fn p(&self) -> &[f64] {
        &self.coords[..self.dim_n()]
    }

    /// Position block `q`.
    pub fn q(&self) -> &[f64] {
        &self.coords[self.dim_n()..]
    }
}

/// The canonical symplectic form on `R^{2n}`.
#[derive(Clone, Copy, Debug)]
pub struct SymplecticForm {
    dim_n: usize,
}

impl SymplecticForm {
    pub fn new(dim_n: usize) -> Self {
        assert!(dim_n > 0, "dim_n must be positive");
        Self { dim_n }
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    /// Dense `2n x 2n` matrix of `J`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.dim_n;
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            j[(i, n + i)] = -1.0;
            j[(n + i, i)] = 1.0;
        }
        j
    }
}

/// Left-multiplication by `J` without materializing the matrix:
/// `(v_p, v_q) -> (-v_q, v_p)`.
pub fn apply_j(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() % 2 != 0 {
        return Err(StrupError::Dimension(format!(
            "apply_j expects even length, got {}",
            v.len()
        )));
    }
    let n = v.len() / 2;
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = -v[n + i];
        out[n + i] = v[i];
    }
    Ok(out)
}

/// Central finite-difference Jacobian of `map` at `x`.
///
/// Deliberately independent of any analytic Jacobian in this crate; the
/// residual checks below must not share code with what they test.
pub fn fd_jacobian<F>(map: F, x: &[f64], fd_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + fd_step;
        xm[j] = x[j] - fd_step;
        let fp = map(&xp);
        let fm = map(&xm);
        if fp.len() != d || fm.len() != d {
            return Err(StrupError::Dimension("map output length mismatch".into()));
        }
        for i in 0..d {
            if !fp[i].is_finite() || !fm[i].is_finite() {
                return Err(StrupError::Numeric("non-finite map output in fd_jacobian".into()));
            }
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * fd_step);
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(jac)
}

/// Max-norm of `K^T J K - J` for the finite-difference Jacobian `K` of `map` at `x`.
pub fn symplecticity_residual<F>(map: F, x: &PhaseVector, fd_step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if fd_step <= 0.0 {
        return Err(StrupError::Argument("fd_step must be positive".into()));
    }
    let k = fd_jacobian(map, x.coords(), fd_step)?;
    let j = SymplecticForm::new(x.dim_n()).matrix();
    let r = k.transpose() * &j * &k - j;
    Ok(r.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// `|det(K) - 1|` for the finite-difference Jacobian `K` of `map` at `x`.
pub fn volume_residual<F>(map: F, x: &PhaseVector, fd_step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if fd_step <= 0.0 {
        return Err(StrupError::Argument("fd_step must be positive".into()));
    }
    let k = fd_jacobian(map, x.coords(), fd_step)?;
    Ok((k.determinant() - 1.0).abs())
}

/// Default finite-difference step for the residual checks.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
