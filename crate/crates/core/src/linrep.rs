//! Linear symplectic maps as exact quadratic shear stacks: unit-triangular
//! factorization of a symplectic matrix and its conversion to degree-2
//! ridge layers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, StrupError};
use crate::layers::{LayerSpec, RidgeKind, ScalarRidgeLayer};
use crate::matfun::expm;
use crate::model::{Hyper, Method, SympNetModel};
use crate::phase::{PhaseVector, SymplecticForm};

pub const SYMMETRY_TOL: f64 = 1e-14;
pub const SYMPLECTIC_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorOrientation {
    /// `[[I, S], [0, I]]`: shears `p` by `S q`.
    Upper,
    /// `[[I, 0], [S, I]]`: shears `q` by `S p`.
    Lower,
}

/// A unit-triangular symplectic factor `T` or `T^T` with symmetric block `s`.
#[derive(Clone, Debug)]
pub struct TriangularFactor {
    pub s: DMatrix<f64>,
    pub orientation: FactorOrientation,
}

impl TriangularFactor {
    pub fn new(s: DMatrix<f64>, orientation: FactorOrientation) -> Result<Self> {
        if !s.is_square() {
            return Err(StrupError::Dimension(format!(
                "triangular block must be square, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        let skew = (&s - s.transpose()).abs().max();
        if skew > SYMMETRY_TOL {
            return Err(StrupError::Argument(format!(
                "triangular block not symmetric: max |s - s^T| = {skew:.3e}"
            )));
        }
        // exact symmetry downstream
        let sym = (&s + s.transpose()) * 0.5;
        Ok(Self { s: sym, orientation })
    }

    pub fn dim_n(&self) -> usize {
        self.s.nrows()
    }

    /// Dense `2n x 2n` matrix of the factor.
    pub fn materialize(&self) -> DMatrix<f64> {
        let n = self.dim_n();
        let mut m = DMatrix::identity(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                match self.orientation {
                    FactorOrientation::Upper => m[(i, n + j)] = self.s[(i, j)],
                    FactorOrientation::Lower => m[(n + i, j)] = self.s[(i, j)],
                }
            }
        }
        m
    }
}

#[derive(Clone, Debug)]
pub struct FactorizationResult {
    /// Factors in application order: `M = factors[last] * ... * factors[0]`.
    pub factors: Vec<TriangularFactor>,
    /// 0/1 diagonal of the extra peeling factor in the five-factor case.
    pub delta: Option<Vec<u8>>,
    /// Max-norm of (product of factors - input).
    pub residual: f64,
}

/// `max |M^T J M - J|`.
pub fn symplecticity_defect(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() || m.nrows() % 2 != 0 || m.nrows() == 0 {
        return Err(StrupError::Dimension(format!(
            "expected even square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let j = SymplecticForm::new(m.nrows() / 2).matrix();
    Ok((m.transpose() * &j * m - j).abs().max())
}

/// One layer per non-zero eigenvalue of `s`, shearing along the
/// eigenvector with the signed eigenvalue folded into the quadratic
/// coefficient; the stack reproduces the factor's matrix action exactly.
pub fn triangular_to_layers(
    factor: &TriangularFactor,
    h: f64,
) -> Result<Vec<ScalarRidgeLayer>> {
    if !(h > 0.0) {
        return Err(StrupError::Argument(format!("timestep must be positive, got {h}")));
    }
    let n = factor.dim_n();
    let eig = factor.s.clone().symmetric_eigen();
    let cutoff = 1e-13 * factor.s.abs().max().max(1.0);
    let mut layers = Vec::new();
    for (i, &sigma) in eig.eigenvalues.iter().enumerate() {
        if sigma.abs() <= cutoff {
            continue;
        }
        let v = eig.eigenvectors.column(i);
        let mut w = vec![0.0; 2 * n];
        // layer map is x + h alpha'(w.x) Jw with alpha = a y^2; the p-shear
        // picks up a minus sign from J
        let coeff = match factor.orientation {
            FactorOrientation::Upper => {
                w[n..].copy_from_slice(v.as_slice());
                -sigma / (2.0 * h)
            }
            FactorOrientation::Lower => {
                w[..n].copy_from_slice(v.as_slice());
                sigma / (2.0 * h)
            }
        };
        layers.push(ScalarRidgeLayer {
            w,
            kind: RidgeKind::Poly { coeffs: vec![coeff], sigmoid_wrap: false },
        });
    }
    Ok(layers)
}

/// Best symmetric well-conditioned solution of `A X = X A^T`, from random
/// combinations of a null-space basis of the Sylvester operator restricted
/// to symmetric matrices.
fn commuting_symmetric(a: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    // packed symmetric basis E_k -> skew part of A E - E A^T
    let sym_dim = n * (n + 1) / 2;
    // padded square so the SVD carries the full right singular basis
    let mut op = DMatrix::zeros(sym_dim, sym_dim);
    let mut col = 0;
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            let r = a * &e - e * a.transpose();
            let mut row = 0;
            for bi in 0..n {
                for bj in bi + 1..n {
                    op[(row, col)] = r[(bi, bj)];
                    row += 1;
                }
            }
            col += 1;
        }
    }
    let svd = op.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let null_tol = 1e-12 * smax.max(1.0);
    let null_rows: Vec<usize> = (0..sym_dim)
        .filter(|&k| svd.singular_values.get(k).copied().unwrap_or(0.0) <= null_tol)
        .collect();
    if null_rows.is_empty() {
        return Err(StrupError::Convergence(
            "no symmetric solution of A X = X A^T found".into(),
        ));
    }
    let unpack = |c: &DVector<f64>| {
        let mut x = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                x[(i, j)] = c[k];
                x[(j, i)] = c[k];
                k += 1;
            }
        }
        x
    };
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for _ in 0..64 {
        let mut c = DVector::zeros(sym_dim);
        for &r in &null_rows {
            let weight: f64 = rng.random_range(-1.0..1.0);
            for k in 0..sym_dim {
                c[k] += weight * vt[(r, k)];
            }
        }
        let x = unpack(&c);
        let sv = x.clone().svd(false, false).singular_values;
        let (lo, hi) = (sv.min(), sv.max());
        if hi == 0.0 {
            continue;
        }
        let rcond = lo / hi;
        if best.as_ref().map_or(true, |(b, _)| rcond > *b) {
            best = Some((rcond, &x / hi));
        }
    }
    match best {
        Some((rcond, x)) if rcond > 1e-10 => Ok(x),
        Some((rcond, _)) => Err(StrupError::Convergence(format!(
            "symmetric intertwiner too ill-conditioned (rcond {rcond:.3e})"
        ))),
        None => Err(StrupError::Convergence("symmetric intertwiner search failed".into())),
    }
}

fn blocks(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows() / 2;
    (
        m.view((0, 0), (n, n)).into_owned(),
        m.view((0, n), (n, n)).into_owned(),
        m.view((n, 0), (n, n)).into_owned(),
    )
}

fn rcond(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let hi = sv.max();
    if hi == 0.0 { 0.0 } else { sv.min() / hi }
}

fn symmetrized(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Four factors `M = T4^T T3 T2^T T1` for invertible A-block. With
/// `A = I + S3 S2` the symmetry of every block reduces to finding a
/// symmetric invertible `S3` with `A S3 = S3 A^T`; the rest follows by
/// elimination.
fn factor_four(m: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<TriangularFactor>> {
    let n = m.nrows() / 2;
    let (a, b, c) = blocks(m);
    let id = DMatrix::<f64>::identity(n, n);

    // already triangular: single shear, no elimination needed
    if (&a - &id).abs().max() < 1e-13 && c.abs().max() < 1e-13 {
        let zero = DMatrix::zeros(n, n);
        return Ok(vec![
            TriangularFactor::new(symmetrized(b), FactorOrientation::Upper)?,
            TriangularFactor::new(zero.clone(), FactorOrientation::Lower)?,
            TriangularFactor::new(zero.clone(), FactorOrientation::Upper)?,
            TriangularFactor::new(zero, FactorOrientation::Lower)?,
        ]);
    }

    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| StrupError::Numeric("singular A-block in four-factor path".into()))?;
    let s3 = commuting_symmetric(&a, rng)?;
    let s3_inv = s3
        .clone()
        .try_inverse()
        .ok_or_else(|| StrupError::Numeric("intertwiner not invertible".into()))?;
    let s2 = symmetrized(&s3_inv * (&a - &id));
    let s1 = symmetrized(&a_inv * (&b - &s3));
    let s4 = symmetrized((&c - &s2) * &a_inv);
    Ok(vec![
        TriangularFactor::new(s1, FactorOrientation::Upper)?,
        TriangularFactor::new(s2, FactorOrientation::Lower)?,
        TriangularFactor::new(s3, FactorOrientation::Upper)?,
        TriangularFactor::new(s4, FactorOrientation::Lower)?,
    ])
}

fn product(factors: &[TriangularFactor], dim: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(dim, dim);
    for f in factors {
        p = f.materialize() * p;
    }
    p
}

/// Factor a symplectic matrix into 4 unit-triangular symplectic factors
/// (invertible A-block) or 5 (general, with a 0/1-diagonal shear peeled
/// first).
pub fn factor_symplectic(m: &DMatrix<f64>) -> Result<FactorizationResult> {
    let defect = symplecticity_defect(m)?;
    if defect >= SYMPLECTIC_TOL {
        return Err(StrupError::Argument(format!(
            "matrix is not symplectic: |M^T J M - J| = {defect:.3e}"
        )));
    }
    let dim = m.nrows();
    let n = dim / 2;

    if rcond(&blocks(m).0) > 1e-8 {
        if let Ok(factors) = factor_four(m, &mut crate::testutil::rng(0x5f)) {
            let residual = (product(&factors, dim) - m).abs().max();
            if residual < SYMPLECTIC_TOL {
                return Ok(FactorizationResult { factors, delta: None, residual });
            }
        }
    }

    // general case: peel an upper factor with 0/1 diagonal chosen so the
    // remaining A-block is invertible
    let (a, _, c) = blocks(m);
    let mut candidates: Vec<u32> = (0..1u32 << n).collect();
    candidates.sort_by_key(|d| d.count_ones());
    let mut best_err: Option<f64> = None;
    for bits in candidates {
        let delta: Vec<u8> = (0..n).map(|i| ((bits >> i) & 1) as u8).collect();
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            delta.iter().map(|&b| b as f64),
        ));
        if rcond(&(&a - &d * &c)) < 1e-8 {
            continue;
        }
        // M = T(D) * M', so M' = T(-D) M still symplectic
        let mut t_neg = DMatrix::identity(dim, dim);
        t_neg.view_mut((0, n), (n, n)).copy_from(&(-&d));
        let m_rest = t_neg * m;
        let Ok(mut factors) = factor_four(&m_rest, &mut crate::testutil::rng(0x5f ^ bits as u64))
        else {
            continue;
        };
        factors.push(TriangularFactor::new(d, FactorOrientation::Upper)?);
        let residual = (product(&factors, dim) - m).abs().max();
        if residual < SYMPLECTIC_TOL {
            return Ok(FactorizationResult { factors, delta: Some(delta), residual });
        }
        best_err = Some(best_err.map_or(residual, |b: f64| b.min(residual)));
    }
    Err(StrupError::Convergence(format!(
        "factorization stalled; best residual {:?}",
        best_err
    )))
}

/// Exact degree-2 P-SympNet realizing the linear map `x -> Mx` at
/// timestep `h`; at most `4n` layers (invertible A-block) or `5n`.
pub fn model_from_symplectic_matrix(m: &DMatrix<f64>, h: f64) -> Result<SympNetModel> {
    let fact = factor_symplectic(m)?;
    let mut layers = Vec::new();
    for f in &fact.factors {
        for l in triangular_to_layers(f, h)? {
            layers.push(LayerSpec::ScalarRidge(l));
        }
    }
    let hyper = Hyper::poly(layers.len(), 2);
    Ok(SympNetModel { dim_n: m.nrows() / 2, method: Method::P, hyper, layers })
}

/// `e^{hJA} x`, the exact flow of the quadratic Hamiltonian
/// `1/2 x^T A x` via dense matrix exponential.
pub fn matrix_flow_oracle(a: &DMatrix<f64>, h: f64, x: &PhaseVector) -> Result<PhaseVector> {
    let skew = (a - a.transpose()).abs().max();
    if skew > 1e-12 {
        return Err(StrupError::Argument(format!(
            "Hamiltonian matrix not symmetric: max |A - A^T| = {skew:.3e}"
        )));
    }
    if a.nrows() != 2 * x.dim_n() {
        return Err(StrupError::Dimension(format!(
            "matrix is {}x{}, point has dimension {}",
            a.nrows(),
            a.ncols(),
            2 * x.dim_n()
        )));
    }
    let j = SymplecticForm::new(x.dim_n()).matrix();
    let p = expm(&(j * a * h));
    let y = p * DVector::from_column_slice(x.coords());
    PhaseVector::new(y.as_slice().to_vec())
}
