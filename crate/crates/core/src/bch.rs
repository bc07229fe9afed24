//! Truncated Baker-Campbell-Hausdorff machinery on polynomial Hamiltonians.
//!
//! `bch_pair` computes the order-`p` truncation of the Hamiltonian generating
//! the composition of two exact polynomial flows; `backward_error_map` folds
//! it over a layer basis. For quadratic bases an independent matrix-logarithm
//! oracle gives the exact generating Hamiltonian.

use nalgebra::DMatrix;

use crate::error::{Result, StrupError};
use crate::matfun::{expm, logm};
use crate::phase::SymplecticForm;
use crate::poly::MultiPoly;

/// Truncation order of the BCH series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BchOrder {
    pub p: u32,
}

impl BchOrder {
    pub fn new(p: u32) -> Self {
        Self { p }
    }
}

/// Highest supported truncation order.
pub const BCH_MAX_ORDER: u32 = 6;

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product::<f64>().max(1.0)
}

/// Right-nested Poisson bracket of a letter word:
/// `{w_1, {w_2, ... {w_{m-1}, w_m} ... }}`.
fn nested_bracket(word: &[&MultiPoly]) -> Result<MultiPoly> {
    let mut acc = word[word.len() - 1].clone();
    for letter in word[..word.len() - 1].iter().rev() {
        acc = letter.poisson_bracket(&acc)?;
        if acc.is_zero() {
            break;
        }
    }
    Ok(acc)
}

/// All ways of splitting `total` letters into `n` blocks (r_i, s_i) with
/// r_i + s_i >= 1. Each sequence is a word X^{r_1} Y^{s_1} ... X^{r_n} Y^{s_n}.
fn block_sequences(total: u32, n: u32) -> Vec<Vec<(u32, u32)>> {
    fn rec(remaining: u32, blocks_left: u32, cur: &mut Vec<(u32, u32)>, out: &mut Vec<Vec<(u32, u32)>>) {
        if blocks_left == 0 {
            if remaining == 0 {
                out.push(cur.clone());
            }
            return;
        }
        // each remaining block needs at least one letter
        for r in 0..=remaining {
            for s in 0..=(remaining - r) {
                if r + s == 0 {
                    continue;
                }
                if remaining - r - s < blocks_left - 1 {
                    continue;
                }
                cur.push((r, s));
                rec(remaining - r - s, blocks_left - 1, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(total, n, &mut Vec::new(), &mut out);
    out
}

/// Order-`p` truncation of the Hamiltonian generating `phi_hA o phi_hB`
/// (`hA` applied after `hB`), via Dynkin's explicit BCH series.
///
/// The order-`j` contribution carries a factor `h^j` and `j`-fold nested
/// Poisson brackets; `p = 0` returns `hA + hB`.
pub fn bch_pair(ha: &MultiPoly, hb: &MultiPoly, h: f64, order: BchOrder) -> Result<MultiPoly> {
    if order.p > BCH_MAX_ORDER {
        return Err(StrupError::Capability(format!(
            "BCH truncation order {} exceeds supported ceiling {BCH_MAX_ORDER}",
            order.p
        )));
    }
    if ha.nvars() != hb.nvars() {
        return Err(StrupError::Dimension("bch_pair: variable count mismatch".into()));
    }
    let nvars = ha.nvars();
    let mut result = ha.add(hb)?;
    if ha.is_zero() || hb.is_zero() {
        return Ok(result);
    }
    // Dynkin: log(e^X e^Y) = sum_{n>=1} (-1)^{n-1}/n sum_w [w] / (m * prod r_i! s_i!)
    // with X = A, Y = B and one power of h per bracket.
    let max_letters = order.p + 1;
    for m in 2..=max_letters {
        let h_pow = h.powi(m as i32 - 1);
        let mut order_term = MultiPoly::zero(nvars);
        for n in 1..=m {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            for seq in block_sequences(m, n) {
                let (r_last, s_last) = *seq.last().unwrap();
                // words ending in repeated letters have a vanishing innermost bracket
                if s_last >= 2 || (s_last == 0 && r_last >= 2) {
                    continue;
                }
                let mut word: Vec<&MultiPoly> = Vec::with_capacity(m as usize);
                let mut denom = f64::from(m) * f64::from(n) / sign;
                for &(r, s) in &seq {
                    for _ in 0..r {
                        word.push(ha);
                    }
                    for _ in 0..s {
                        word.push(hb);
                    }
                    denom *= factorial(r) * factorial(s);
                }
                let bracket = nested_bracket(&word)?;
                if !bracket.is_zero() {
                    order_term = order_term.add(&bracket.scale(1.0 / denom))?;
                }
            }
        }
        result = result.add(&order_term.scale(h_pow))?;
    }
    Ok(result)
}

/// Left fold of `bch_pair` over a layer basis, matching the map ordering
/// `Phi = phi_{H_k} o ... o phi_{H_1}`: at order 0 this is the plain sum of
/// the basis (the inverse modified Hamiltonian).
pub fn backward_error_map(basis: &[MultiPoly], h: f64, order: BchOrder) -> Result<MultiPoly> {
    let first = basis
        .first()
        .ok_or_else(|| StrupError::Argument("backward_error_map: empty basis".into()))?;
    let mut acc = MultiPoly::zero(first.nvars());
    for hi in basis {
        acc = bch_pair(hi, &acc, h, order)?;
    }
    Ok(acc)
}

/// Symmetric matrix `M` of a purely quadratic Hamiltonian `H = x^T M x / 2`.
pub fn quadratic_to_matrix(h: &MultiPoly) -> Result<DMatrix<f64>> {
    let nvars = h.nvars();
    let mut m = DMatrix::zeros(nvars, nvars);
    for (e, &c) in h.terms() {
        let deg: u32 = e.iter().map(|&x| u32::from(x)).sum();
        if deg != 2 {
            return Err(StrupError::Argument(
                "quadratic oracle requires purely quadratic input".into(),
            ));
        }
        let vars: Vec<usize> = e
            .iter()
            .enumerate()
            .flat_map(|(i, &ei)| std::iter::repeat(i).take(ei as usize))
            .collect();
        let (i, j) = (vars[0], vars[1]);
        if i == j {
            m[(i, i)] += 2.0 * c;
        } else {
            m[(i, j)] += c;
            m[(j, i)] += c;
        }
    }
    Ok(m)
}

/// Quadratic Hamiltonian `x^T G x / 2` from a symmetric matrix.
pub fn matrix_to_quadratic(g: &DMatrix<f64>) -> MultiPoly {
    let nvars = g.nrows();
    let mut p = MultiPoly::zero(nvars);
    for i in 0..nvars {
        let mut e = vec![0u16; nvars];
        e[i] = 2;
        p.add_term(e, 0.5 * g[(i, i)]);
        for j in (i + 1)..nvars {
            let mut e = vec![0u16; nvars];
            e[i] = 1;
            e[j] = 1;
            p.add_term(e, 0.5 * (g[(i, j)] + g[(j, i)]));
        }
    }
    p
}

/// Exact generating Hamiltonian for a composition of quadratic flows.
///
/// Maps each `x^T M_i x / 2` to the Hamiltonian matrix `J M_i`, forms
/// `L = log(exp(h J M_k) ... exp(h J M_1))` and returns the quadratic
/// polynomial `x^T (J^{-1} L / h) x / 2`. Independent of the BCH path.
pub fn quad_matrix_log_oracle(basis: &[MultiPoly], h: f64) -> Result<MultiPoly> {
    let first = basis
        .first()
        .ok_or_else(|| StrupError::Argument("quad oracle: empty basis".into()))?;
    let nvars = first.nvars();
    let n = first.dim_n()?;
    let j = SymplecticForm::new(n).matrix();
    let mut product = DMatrix::<f64>::identity(nvars, nvars);
    for hi in basis {
        if hi.nvars() != nvars {
            return Err(StrupError::Dimension("quad oracle: mixed dimensions".into()));
        }
        let m = quadratic_to_matrix(hi)?;
        let flow = expm(&((&j * m) * h));
        product = flow * product;
    }
    let l = logm(&product)?;
    // J^{-1} = -J
    let g = (-&j * l) / h;
    let g_sym = (&g + g.transpose()) * 0.5;
    Ok(matrix_to_quadratic(&g_sym))
}
