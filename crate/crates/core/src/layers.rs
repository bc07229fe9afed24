//! Hamiltonian shear layers: exact forward flows, closed-form vector-Jacobian
//! products, and the Proposition-10 generalized-ridge parameterization.
//!
//! Every layer is the exact time-`h` flow of its generating Hamiltonian
//! (the shear vector fields are nilpotent of degree two, so one forward-Euler
//! step is the flow). Gradients are hand-derived closed forms guarded by
//! finite-difference tests; there is no tape.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StrupError};
use crate::phase::apply_j;
use crate::poly::{MultiIndex, MultiPoly};

/// Logistic sigmoid, numerically stable on both tails.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softplus, the antiderivative of the logistic sigmoid.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid_d(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 - s)
}

// ---------------------------------------------------------------------------
// packed symmetric storage

/// Length of the packed upper triangle of an `n x n` symmetric matrix.
pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Unpack an upper-triangle vector into a dense symmetric matrix.
pub fn unpack_symmetric(s: &[f64], n: usize) -> DMatrix<f64> {
    assert_eq!(s.len(), packed_len(n), "packed length");
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = s[idx];
            m[(j, i)] = s[idx];
            idx += 1;
        }
    }
    m
}

/// Fold a dense gradient wrt a symmetric matrix onto its packed parameters:
/// entry (i,j), i<j, receives `G_ij + G_ji`; the diagonal receives `G_ii`.
pub fn pack_symmetric_grad(g: &DMatrix<f64>) -> Vec<f64> {
    let n = g.nrows();
    let mut out = Vec::with_capacity(packed_len(n));
    for i in 0..n {
        for j in i..n {
            out.push(if i == j { g[(i, i)] } else { g[(i, j)] + g[(j, i)] });
        }
    }
    out
}

/// Pack a dense symmetric matrix into its upper triangle.
pub fn pack_symmetric(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(packed_len(n));
    for i in 0..n {
        for j in i..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// scalar ridge layers (P- and R-SympNets)

/// Activation of a scalar ridge layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RidgeKind {
    /// `alpha(y) = sum_{k=2..d} a_k y^k`; no linear term. With `sigmoid_wrap`
    /// the polynomial is composed with the logistic sigmoid (off by default).
    Poly { coeffs: Vec<f64>, sigmoid_wrap: bool },
    /// `alpha(y) = sum_j a_j softplus(y + b_j)`.
    Net { a: Vec<f64>, b: Vec<f64> },
}

/// Exact flow of `H = alpha(w^T x)`: `x + h alpha'(w^T x) J w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarRidgeLayer {
    pub w: Vec<f64>,
    pub kind: RidgeKind,
}

impl ScalarRidgeLayer {
    pub fn dim_n(&self) -> usize {
        self.w.len() / 2
    }

    /// Highest polynomial degree, for the `Poly` kind.
    pub fn degree(&self) -> Option<usize> {
        match &self.kind {
            RidgeKind::Poly { coeffs, .. } => Some(coeffs.len() + 1),
            RidgeKind::Net { .. } => None,
        }
    }

    /// `(alpha(y), alpha'(y), alpha''(y))`.
    fn alpha(&self, y: f64) -> (f64, f64, f64) {
        match &self.kind {
            RidgeKind::Poly { coeffs, sigmoid_wrap } => {
                let mut v = 0.0;
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                let mut yk2 = 1.0; // y^{k-2}
                for (i, &a) in coeffs.iter().enumerate() {
                    let k = (i + 2) as f64;
                    d2 += a * k * (k - 1.0) * yk2;
                    d1 += a * k * yk2 * y;
                    v += a * yk2 * y * y;
                    yk2 *= y;
                }
                if *sigmoid_wrap {
                    let s = sigmoid(v);
                    let sd = s * (1.0 - s);
                    let sdd = sd * (1.0 - 2.0 * s);
                    (s, sd * d1, sdd * d1 * d1 + sd * d2)
                } else {
                    (v, d1, d2)
                }
            }
            RidgeKind::Net { a, b } => {
                let mut v = 0.0;
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for (&aj, &bj) in a.iter().zip(b) {
                    let z = y + bj;
                    v += aj * softplus(z);
                    d1 += aj * sigmoid(z);
                    d2 += aj * sigmoid_d(z);
                }
                (v, d1, d2)
            }
        }
    }

    /// `H = alpha(w^T x)` expanded into monomials; `Poly` kind without
    /// sigmoid wrap only.
    pub fn to_poly(&self) -> Result<MultiPoly> {
        let RidgeKind::Poly { coeffs, sigmoid_wrap } = &self.kind else {
            return Err(StrupError::Capability(
                "ridge-net layer has no polynomial Hamiltonian".into(),
            ));
        };
        if *sigmoid_wrap {
            return Err(StrupError::Capability(
                "sigmoid-wrapped ridge layer has no polynomial Hamiltonian".into(),
            ));
        }
        let lin = MultiPoly::linear_form(&self.w);
        let mut out = MultiPoly::zero(self.w.len());
        for (i, &a) in coeffs.iter().enumerate() {
            if a != 0.0 {
                out = out.add(&lin.pow((i + 2) as u32).scale(a))?;
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// generalized ridge layers (GR-SympNets)

/// Which of the two blocks in Proposition 10 carries the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    ASide,
    BSide,
}

/// One-hidden-layer network `R^n -> R`: `N(y) = sum_j a_j softplus(w_j.y + b_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHiddenNet {
    pub dim_in: usize,
    /// Row-major `m x dim_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl OneHiddenNet {
    pub fn width(&self) -> usize {
        self.b.len()
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.w[j * self.dim_in..(j + 1) * self.dim_in]
    }

    fn pre_activations(&self, y: &[f64]) -> Vec<f64> {
        (0..self.width())
            .map(|j| self.row(j).iter().zip(y).map(|(w, v)| w * v).sum::<f64>() + self.b[j])
            .collect()
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.pre_activations(y)
            .iter()
            .zip(&self.a)
            .map(|(&z, &a)| a * softplus(z))
            .sum()
    }

    pub fn grad(&self, y: &[f64]) -> Vec<f64> {
        let z = self.pre_activations(y);
        let mut g = vec![0.0; self.dim_in];
        for j in 0..self.width() {
            let c = self.a[j] * sigmoid(z[j]);
            for (gi, wi) in g.iter_mut().zip(self.row(j)) {
                *gi += c * wi;
            }
        }
        g
    }

    pub fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let z = self.pre_activations(y);
        let mut h = DMatrix::zeros(self.dim_in, self.dim_in);
        for j in 0..self.width() {
            let c = self.a[j] * sigmoid_d(z[j]);
            let row = self.row(j);
            for i in 0..self.dim_in {
                for k in 0..self.dim_in {
                    h[(i, k)] += c * row[i] * row[k];
                }
            }
        }
        h
    }

    /// Gradient of `m . grad N(y)` wrt (w, b, a), appended to `out`.
    fn grad_dot_param_grads(&self, y: &[f64], m: &[f64], scale: f64, out: &mut Vec<f64>) {
        let z = self.pre_activations(y);
        let wm: Vec<f64> = (0..self.width())
            .map(|j| self.row(j).iter().zip(m).map(|(w, v)| w * v).sum())
            .collect();
        for j in 0..self.width() {
            let s = sigmoid(z[j]);
            let sd = sigmoid_d(z[j]);
            for k in 0..self.dim_in {
                out.push(scale * (self.a[j] * sd * y[k] * wm[j] + self.a[j] * s * m[k]));
            }
        }
        for j in 0..self.width() {
            out.push(scale * self.a[j] * sigmoid_d(z[j]) * wm[j]);
        }
        for j in 0..self.width() {
            out.push(scale * sigmoid(z[j]) * wm[j]);
        }
    }

    fn param_count(&self) -> usize {
        self.w.len() + 2 * self.b.len()
    }
}

/// Exact flow of `H = N(Ap + Bq)` with `A B^T = B A^T` by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenRidgeLayer {
    pub dim_n: usize,
    /// Packed upper triangles, length `n(n+1)/2` each.
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub s3: Vec<f64>,
    pub orientation: Orientation,
    pub net: OneHiddenNet,
}

impl GenRidgeLayer {
    /// Materialize `(A, B)` per Proposition 10: the oriented side is
    /// `I + S3 S2`, the other is `S3 + S3 S2 S1 + S1`.
    pub fn materialize(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim_n;
        let s1 = unpack_symmetric(&self.s1, n);
        let s2 = unpack_symmetric(&self.s2, n);
        let s3 = unpack_symmetric(&self.s3, n);
        let first = DMatrix::identity(n, n) + &s3 * &s2;
        let second = &first * &s1 + &s3;
        match self.orientation {
            Orientation::ASide => (first, second),
            Orientation::BSide => (second, first),
        }
    }
}

// ---------------------------------------------------------------------------
// fixed-direction layers (G- and LA-SympNets)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShearDirection {
    /// Updates p: `(p - h grad V(q), q)`.
    PShear,
    /// Updates q: `(p, q + h grad T(p))`.
    QShear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FixedKind {
    /// `K(u) = w^T softplus(W u + b)` (gradient module of a G-SympNet).
    G(OneHiddenNet),
    /// `K(u) = u^T S u`, gradient `2 S u` (linear sublayer of an LA-SympNet).
    LaLinear { s: Vec<f64> },
    /// `K(u) = sum_i a_i softplus(u_i)` (activation layer of an LA-SympNet).
    LaActivation { a: Vec<f64> },
}

/// Shear in a fixed coordinate direction: the Hamiltonian depends on only
/// one of the two blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedDirectionLayer {
    pub dim_n: usize,
    pub direction: ShearDirection,
    pub kind: FixedKind,
}

impl FixedDirectionLayer {
    fn k_eval(&self, u: &[f64]) -> f64 {
        match &self.kind {
            FixedKind::G(net) => net.eval(u),
            FixedKind::LaLinear { s } => {
                let m = unpack_symmetric(s, self.dim_n);
                let uv = DVector::from_column_slice(u);
                (uv.transpose() * m * &uv)[(0, 0)]
            }
            FixedKind::LaActivation { a } => {
                a.iter().zip(u).map(|(&ai, &ui)| ai * softplus(ui)).sum()
            }
        }
    }

    fn k_grad(&self, u: &[f64]) -> Vec<f64> {
        match &self.kind {
            FixedKind::G(net) => net.grad(u),
            FixedKind::LaLinear { s } => {
                let m = unpack_symmetric(s, self.dim_n);
                let g = m * DVector::from_column_slice(u) * 2.0;
                g.iter().copied().collect()
            }
            FixedKind::LaActivation { a } => {
                a.iter().zip(u).map(|(&ai, &ui)| ai * sigmoid(ui)).collect()
            }
        }
    }

    /// Hessian-vector product `grad^2 K(u) . v`.
    fn k_hess_vec(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.kind {
            FixedKind::G(net) => {
                let h = net.hessian(u);
                (h * DVector::from_column_slice(v)).iter().copied().collect()
            }
            FixedKind::LaLinear { s } => {
                let m = unpack_symmetric(s, self.dim_n);
                (m * DVector::from_column_slice(v) * 2.0).iter().copied().collect()
            }
            FixedKind::LaActivation { a } => a
                .iter()
                .zip(u)
                .zip(v)
                .map(|((&ai, &ui), &vi)| ai * sigmoid_d(ui) * vi)
                .collect(),
        }
    }

    /// Gradient of `c . grad K(u)` wrt the layer parameters.
    fn k_param_grads(&self, u: &[f64], c: &[f64], scale: f64, out: &mut Vec<f64>) {
        match &self.kind {
            FixedKind::G(net) => net.grad_dot_param_grads(u, c, scale, out),
            FixedKind::LaLinear { .. } => {
                // d/dS of c . (2 S u) = 2 c u^T as a dense gradient
                let n = self.dim_n;
                let mut g = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        g[(i, j)] = 2.0 * scale * c[i] * u[j];
                    }
                }
                out.extend(pack_symmetric_grad(&g));
            }
            FixedKind::LaActivation { .. } => {
                for (ci, ui) in c.iter().zip(u) {
                    out.push(scale * ci * sigmoid(*ui));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Hénon-like layers (H-SympNets)

/// The map `(p, q) -> (q, -p + h grad alpha(q))` with polynomial `alpha`.
///
/// Not itself a shear, but a composition of four shear flows (see
/// [`HenonLayer::shear_decomposition`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HenonLayer {
    pub dim_n: usize,
    /// Monomial exponents of `alpha` over the q-block (n variables), fixed
    /// order; coefficients are the trainable parameters.
    pub exps: Vec<MultiIndex>,
    pub coeffs: Vec<f64>,
}

fn mono_eval(e: &[u16], q: &[f64]) -> f64 {
    let mut v = 1.0;
    for (&ei, &qi) in e.iter().zip(q) {
        for _ in 0..ei {
            v *= qi;
        }
    }
    v
}

fn mono_partial(e: &[u16], q: &[f64], var: usize) -> f64 {
    if e[var] == 0 {
        return 0.0;
    }
    let mut v = f64::from(e[var]);
    for (i, (&ei, &qi)) in e.iter().zip(q).enumerate() {
        let pow = if i == var { ei - 1 } else { ei };
        for _ in 0..pow {
            v *= qi;
        }
    }
    v
}

impl HenonLayer {
    /// All monomials of total degree 2..=d in n variables, lexicographic.
    pub fn monomial_basis(dim_n: usize, max_degree: u16) -> Vec<MultiIndex> {
        fn rec(e: &mut MultiIndex, var: usize, left: u16, out: &mut Vec<MultiIndex>) {
            if var + 1 == e.len() {
                e[var] = left;
                out.push(e.clone());
                e[var] = 0;
                return;
            }
            for k in 0..=left {
                e[var] = k;
                rec(e, var + 1, left - k, out);
            }
            e[var] = 0;
        }
        let mut out = Vec::new();
        for d in 2..=max_degree {
            rec(&mut vec![0; dim_n], 0, d, &mut out);
        }
        out.sort();
        out
    }

    pub fn alpha_eval(&self, q: &[f64]) -> f64 {
        self.exps
            .iter()
            .zip(&self.coeffs)
            .map(|(e, &c)| c * mono_eval(e, q))
            .sum()
    }

    pub fn alpha_grad(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim_n];
        for (e, &c) in self.exps.iter().zip(&self.coeffs) {
            for (i, gi) in g.iter_mut().enumerate() {
                *gi += c * mono_partial(e, q, i);
            }
        }
        g
    }

    fn alpha_hess_vec(&self, q: &[f64], v: &[f64]) -> Vec<f64> {
        // second partials per monomial, contracted with v
        let mut out = vec![0.0; self.dim_n];
        for (e, &c) in self.exps.iter().zip(&self.coeffs) {
            for i in 0..self.dim_n {
                if e[i] == 0 {
                    continue;
                }
                let mut de = e.to_vec();
                de[i] -= 1;
                let scale = c * f64::from(e[i]);
                for (j, vj) in v.iter().enumerate() {
                    if *vj != 0.0 {
                        out[i] += scale * mono_partial(&de, q, j) * vj;
                    }
                }
            }
        }
        out
    }

    /// `alpha` as a polynomial over the full `2n` phase variables (a function
    /// of the q-block only).
    pub fn alpha_as_phase_poly(&self) -> MultiPoly {
        let nv = 2 * self.dim_n;
        let mut p = MultiPoly::zero(nv);
        for (e, &c) in self.exps.iter().zip(&self.coeffs) {
            let mut full = vec![0u16; nv];
            full[self.dim_n..].copy_from_slice(e);
            p.add_term(full, c);
        }
        p
    }

    /// The four shear Hamiltonians `(H_i, t_i)` whose exact flows compose
    /// (first listed applied first) to the Hénon map at timestep `h`.
    ///
    /// The p-shear by `alpha` acts first; the remaining three unit-timestep
    /// quadratic shears compose to the quarter-turn `(p, q) -> (q, -p)`.
    pub fn shear_decomposition(&self, h: f64) -> Vec<(MultiPoly, f64)> {
        let n = self.dim_n;
        let nv = 2 * n;
        let mut half_q2 = MultiPoly::zero(nv);
        let mut half_p2 = MultiPoly::zero(nv);
        for i in 0..n {
            let mut e = vec![0u16; nv];
            e[n + i] = 2;
            half_q2.add_term(e, 0.5);
            let mut e = vec![0u16; nv];
            e[i] = 2;
            half_p2.add_term(e, 0.5);
        }
        vec![
            (self.alpha_as_phase_poly(), h),
            (half_q2.clone(), -1.0),
            (half_p2, -1.0),
            (half_q2, -1.0),
        ]
    }
}

/// Exact flow of a shear Hamiltonian: one forward-Euler step `x + t J grad H`.
///
/// Only valid when `H` is a shear (nilpotent field); callers pick `H`
/// accordingly.
pub fn shear_flow(h_poly: &MultiPoly, x: &[f64], t: f64) -> Result<Vec<f64>> {
    let g = h_poly.eval_grad(x);
    let jg = apply_j(&g)?;
    Ok(x.iter().zip(&jg).map(|(xi, ji)| xi + t * ji).collect())
}

// ---------------------------------------------------------------------------
// the layer enum

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    ScalarRidge(ScalarRidgeLayer),
    GenRidge(GenRidgeLayer),
    Fixed(FixedDirectionLayer),
    Henon(HenonLayer),
}

impl LayerSpec {
    pub fn dim_n(&self) -> usize {
        match self {
            LayerSpec::ScalarRidge(l) => l.dim_n(),
            LayerSpec::GenRidge(l) => l.dim_n,
            LayerSpec::Fixed(l) => l.dim_n,
            LayerSpec::Henon(l) => l.dim_n,
        }
    }

    pub fn kind_tag(&self) -> &'static str {
        match self {
            LayerSpec::ScalarRidge(l) => match l.kind {
                RidgeKind::Poly { .. } => "ridge-poly",
                RidgeKind::Net { .. } => "ridge-net",
            },
            LayerSpec::GenRidge(_) => "gen-ridge",
            LayerSpec::Fixed(l) => match l.kind {
                FixedKind::G(_) => "fixed-g",
                FixedKind::LaLinear { .. } => "fixed-la-linear",
                FixedKind::LaActivation { .. } => "fixed-la-activation",
            },
            LayerSpec::Henon(_) => "henon",
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<usize> {
        let n = self.dim_n();
        if x.len() != 2 * n {
            return Err(StrupError::Dimension(format!(
                "layer expects dimension {}, got {}",
                2 * n,
                x.len()
            )));
        }
        Ok(n)
    }

    pub fn forward(&self, x: &[f64], h: f64) -> Result<Vec<f64>> {
        let n = self.check_dim(x)?;
        let out = match self {
            LayerSpec::ScalarRidge(l) => {
                let y: f64 = l.w.iter().zip(x).map(|(w, v)| w * v).sum();
                let (_, d1, _) = l.alpha(y);
                if !d1.is_finite() {
                    return Err(StrupError::Numeric(
                        "ridge activation derivative overflowed".into(),
                    ));
                }
                let jw = apply_j(&l.w)?;
                x.iter().zip(&jw).map(|(xi, ji)| xi + h * d1 * ji).collect()
            }
            LayerSpec::GenRidge(l) => {
                let (a, b) = l.materialize();
                let p = DVector::from_column_slice(&x[..n]);
                let q = DVector::from_column_slice(&x[n..]);
                let y = &a * &p + &b * &q;
                let g = DVector::from_vec(l.net.grad(y.as_slice()));
                let new_p = &p - (b.transpose() * &g) * h;
                let new_q = &q + (a.transpose() * &g) * h;
                new_p.iter().chain(new_q.iter()).copied().collect()
            }
            LayerSpec::Fixed(l) => {
                let mut out = x.to_vec();
                match l.direction {
                    ShearDirection::PShear => {
                        let g = l.k_grad(&x[n..]);
                        for i in 0..n {
                            out[i] -= h * g[i];
                        }
                    }
                    ShearDirection::QShear => {
                        let g = l.k_grad(&x[..n]);
                        for i in 0..n {
                            out[n + i] += h * g[i];
                        }
                    }
                }
                out
            }
            LayerSpec::Henon(l) => {
                let g = l.alpha_grad(&x[n..]);
                let mut out = vec![0.0; 2 * n];
                for i in 0..n {
                    out[i] = x[n + i];
                    out[n + i] = -x[i] + h * g[i];
                }
                out
            }
        };
        if out.iter().any(|v: &f64| !v.is_finite()) {
            return Err(StrupError::Numeric("non-finite layer output".into()));
        }
        Ok(out)
    }

    /// Exact inverse of `forward(., h)`. Shear layers invert with timestep
    /// `-h`; the Hénon map inverts in closed form.
    pub fn inverse_apply(&self, y: &[f64], h: f64) -> Result<Vec<f64>> {
        let n = self.check_dim(y)?;
        match self {
            LayerSpec::Henon(l) => {
                // (P, Q) = (q, -p + h grad alpha(q)) => q = P, p = h grad alpha(P) - Q
                let g = l.alpha_grad(&y[..n]);
                let mut out = vec![0.0; 2 * n];
                for i in 0..n {
                    out[i] = h * g[i] - y[n + i];
                    out[n + i] = y[i];
                }
                Ok(out)
            }
            _ => self.forward(y, -h),
        }
    }

    /// Value of the layer's generating Hamiltonian. The Hénon map is not the
    /// flow of a single Hamiltonian, so it is rejected.
    pub fn hamiltonian_eval(&self, x: &[f64]) -> Result<f64> {
        let n = self.check_dim(x)?;
        match self {
            LayerSpec::ScalarRidge(l) => {
                let y: f64 = l.w.iter().zip(x).map(|(w, v)| w * v).sum();
                Ok(l.alpha(y).0)
            }
            LayerSpec::GenRidge(l) => {
                let (a, b) = l.materialize();
                let p = DVector::from_column_slice(&x[..n]);
                let q = DVector::from_column_slice(&x[n..]);
                let y = a * p + b * q;
                Ok(l.net.eval(y.as_slice()))
            }
            LayerSpec::Fixed(l) => Ok(match l.direction {
                ShearDirection::PShear => l.k_eval(&x[n..]),
                ShearDirection::QShear => l.k_eval(&x[..n]),
            }),
            LayerSpec::Henon(_) => Err(StrupError::Capability(
                "henon layer is a composition of four shear flows, not one".into(),
            )),
        }
    }

    /// Gradient of the generating Hamiltonian (same restriction as
    /// [`LayerSpec::hamiltonian_eval`]).
    pub fn hamiltonian_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.check_dim(x)?;
        match self {
            LayerSpec::ScalarRidge(l) => {
                let y: f64 = l.w.iter().zip(x).map(|(w, v)| w * v).sum();
                let d1 = l.alpha(y).1;
                Ok(l.w.iter().map(|wi| d1 * wi).collect())
            }
            LayerSpec::GenRidge(l) => {
                let (a, b) = l.materialize();
                let p = DVector::from_column_slice(&x[..n]);
                let q = DVector::from_column_slice(&x[n..]);
                let y = &a * p + &b * q;
                let g = DVector::from_vec(l.net.grad(y.as_slice()));
                let gp = a.transpose() * &g;
                let gq = b.transpose() * &g;
                Ok(gp.iter().chain(gq.iter()).copied().collect())
            }
            LayerSpec::Fixed(l) => {
                let mut out = vec![0.0; 2 * n];
                match l.direction {
                    ShearDirection::PShear => {
                        out[n..].copy_from_slice(&l.k_grad(&x[n..]));
                    }
                    ShearDirection::QShear => {
                        out[..n].copy_from_slice(&l.k_grad(&x[..n]));
                    }
                }
                Ok(out)
            }
            LayerSpec::Henon(_) => Err(StrupError::Capability(
                "henon layer is a composition of four shear flows, not one".into(),
            )),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::ScalarRidge(l) => {
                l.w.len()
                    + match &l.kind {
                        RidgeKind::Poly { coeffs, .. } => coeffs.len(),
                        RidgeKind::Net { a, b } => a.len() + b.len(),
                    }
            }
            LayerSpec::GenRidge(l) => 3 * l.s1.len() + l.net.param_count(),
            LayerSpec::Fixed(l) => match &l.kind {
                FixedKind::G(net) => net.param_count(),
                FixedKind::LaLinear { s } => s.len(),
                FixedKind::LaActivation { a } => a.len(),
            },
            LayerSpec::Henon(l) => l.coeffs.len(),
        }
    }

    /// Flat parameter vector; order per kind is the struct field order
    /// (documented in the checkpoint format).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        match self {
            LayerSpec::ScalarRidge(l) => {
                out.extend(&l.w);
                match &l.kind {
                    RidgeKind::Poly { coeffs, .. } => out.extend(coeffs),
                    RidgeKind::Net { a, b } => {
                        out.extend(a);
                        out.extend(b);
                    }
                }
            }
            LayerSpec::GenRidge(l) => {
                out.extend(&l.s1);
                out.extend(&l.s2);
                out.extend(&l.s3);
                out.extend(&l.net.w);
                out.extend(&l.net.b);
                out.extend(&l.net.a);
            }
            LayerSpec::Fixed(l) => match &l.kind {
                FixedKind::G(net) => {
                    out.extend(&net.w);
                    out.extend(&net.b);
                    out.extend(&net.a);
                }
                FixedKind::LaLinear { s } => out.extend(s),
                FixedKind::LaActivation { a } => out.extend(a),
            },
            LayerSpec::Henon(l) => out.extend(&l.coeffs),
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(StrupError::Dimension(format!(
                "layer takes {} parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        let mut it = p.iter().copied();
        let mut fill = |dst: &mut Vec<f64>| {
            for v in dst.iter_mut() {
                *v = it.next().expect("length checked");
            }
        };
        match self {
            LayerSpec::ScalarRidge(l) => {
                fill(&mut l.w);
                match &mut l.kind {
                    RidgeKind::Poly { coeffs, .. } => fill(coeffs),
                    RidgeKind::Net { a, b } => {
                        fill(a);
                        fill(b);
                    }
                }
            }
            LayerSpec::GenRidge(l) => {
                fill(&mut l.s1);
                fill(&mut l.s2);
                fill(&mut l.s3);
                fill(&mut l.net.w);
                fill(&mut l.net.b);
                fill(&mut l.net.a);
            }
            LayerSpec::Fixed(l) => match &mut l.kind {
                FixedKind::G(net) => {
                    fill(&mut net.w);
                    fill(&mut net.b);
                    fill(&mut net.a);
                }
                FixedKind::LaLinear { s } => fill(s),
                FixedKind::LaActivation { a } => fill(a),
            },
            LayerSpec::Henon(l) => fill(&mut l.coeffs),
        }
        Ok(())
    }

    /// Reverse-mode pullback: returns the input cotangent and the gradient
    /// of `cotangent . forward(x, h)` wrt the flat parameters.
    pub fn vjp(&self, x: &[f64], h: f64, cot: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.check_dim(x)?;
        if cot.len() != 2 * n {
            return Err(StrupError::Dimension("cotangent length mismatch".into()));
        }
        let mut pgrad = Vec::with_capacity(self.param_count());
        let xbar = match self {
            LayerSpec::ScalarRidge(l) => {
                let y: f64 = l.w.iter().zip(x).map(|(w, v)| w * v).sum();
                let (_, d1, d2) = l.alpha(y);
                let jw = apply_j(&l.w)?;
                let s: f64 = jw.iter().zip(cot).map(|(a, b)| a * b).sum();
                // input: c + h a''(y) (Jw . c) w
                let xbar: Vec<f64> = cot
                    .iter()
                    .zip(&l.w)
                    .map(|(c, w)| c + h * d2 * s * w)
                    .collect();
                // w: h a''(y) (Jw . c) x - h a'(y) J c
                let jc = apply_j(cot)?;
                for i in 0..2 * n {
                    pgrad.push(h * d2 * s * x[i] - h * d1 * jc[i]);
                }
                match &l.kind {
                    RidgeKind::Poly { coeffs, sigmoid_wrap } => {
                        if *sigmoid_wrap {
                            // alpha' = s'(P) P'; d alpha'/d a_k = s''(P) y^k P' + s'(P) k y^{k-1}
                            let mut pv = 0.0;
                            let mut pd = 0.0;
                            let mut yk1 = y; // y^{k-1}, starting at k=2
                            for (i, &a) in coeffs.iter().enumerate() {
                                let k = (i + 2) as f64;
                                pv += a * yk1 * y;
                                pd += a * k * yk1;
                                yk1 *= y;
                            }
                            let sg = sigmoid(pv);
                            let sd = sg * (1.0 - sg);
                            let sdd = sd * (1.0 - 2.0 * sg);
                            let mut yk1 = y;
                            for i in 0..coeffs.len() {
                                let k = (i + 2) as f64;
                                pgrad.push(h * s * (sdd * yk1 * y * pd + sd * k * yk1));
                                yk1 *= y;
                            }
                        } else {
                            let mut yk1 = y;
                            for i in 0..coeffs.len() {
                                let k = (i + 2) as f64;
                                pgrad.push(h * s * k * yk1);
                                yk1 *= y;
                            }
                        }
                    }
                    RidgeKind::Net { a, b } => {
                        for &bj in b.iter() {
                            pgrad.push(h * s * sigmoid(y + bj));
                        }
                        for (&aj, &bj) in a.iter().zip(b) {
                            pgrad.push(h * s * aj * sigmoid_d(y + bj));
                        }
                    }
                }
                xbar
            }
            LayerSpec::GenRidge(l) => {
                let (a, b) = l.materialize();
                let p = DVector::from_column_slice(&x[..n]);
                let q = DVector::from_column_slice(&x[n..]);
                let cp = DVector::from_column_slice(&cot[..n]);
                let cq = DVector::from_column_slice(&cot[n..]);
                let y = &a * &p + &b * &q;
                let g = DVector::from_vec(l.net.grad(y.as_slice()));
                let hess = l.net.hessian(y.as_slice());
                let m = &a * &cq - &b * &cp;
                let r = &hess * &m;
                let pbar = &cp + (a.transpose() * &r) * h;
                let qbar = &cq + (b.transpose() * &r) * h;
                // dense gradients wrt the materialized blocks
                let ga = (&r * p.transpose() + &g * cq.transpose()) * h;
                let gb = (&r * q.transpose() - &g * cp.transpose()) * h;
                // chain through the Proposition-10 construction; the oriented
                // side is I + S3 S2
                let (g_first, g_second) = match l.orientation {
                    Orientation::ASide => (ga, gb),
                    Orientation::BSide => (gb, ga),
                };
                let s1 = unpack_symmetric(&l.s1, n);
                let s2 = unpack_symmetric(&l.s2, n);
                let s3 = unpack_symmetric(&l.s3, n);
                let g_s1 = &s2 * &s3 * &g_second + &g_second;
                let g_s2 = &s3 * &g_first + &s3 * &g_second * &s1;
                let g_s3 = &g_first * &s2 + &g_second + &g_second * &s1 * &s2;
                pgrad.extend(pack_symmetric_grad(&g_s1));
                pgrad.extend(pack_symmetric_grad(&g_s2));
                pgrad.extend(pack_symmetric_grad(&g_s3));
                let m_slice: Vec<f64> = m.iter().copied().collect();
                l.net
                    .grad_dot_param_grads(y.as_slice(), &m_slice, h, &mut pgrad);
                pbar.iter().chain(qbar.iter()).copied().collect()
            }
            LayerSpec::Fixed(l) => {
                let mut xbar = cot.to_vec();
                match l.direction {
                    ShearDirection::PShear => {
                        let hv = l.k_hess_vec(&x[n..], &cot[..n]);
                        for i in 0..n {
                            xbar[n + i] -= h * hv[i];
                        }
                        l.k_param_grads(&x[n..], &cot[..n], -h, &mut pgrad);
                    }
                    ShearDirection::QShear => {
                        let hv = l.k_hess_vec(&x[..n], &cot[n..]);
                        for i in 0..n {
                            xbar[i] += h * hv[i];
                        }
                        l.k_param_grads(&x[..n], &cot[n..], h, &mut pgrad);
                    }
                }
                xbar
            }
            LayerSpec::Henon(l) => {
                let q = &x[n..];
                let hv = l.alpha_hess_vec(q, &cot[n..]);
                let mut xbar = vec![0.0; 2 * n];
                for i in 0..n {
                    xbar[i] = -cot[n + i];
                    xbar[n + i] = cot[i] + h * hv[i];
                }
                for e in &l.exps {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += cot[n + i] * mono_partial(e, q, i);
                    }
                    pgrad.push(h * acc);
                }
                xbar
            }
        };
        Ok((xbar, pgrad))
    }
}
