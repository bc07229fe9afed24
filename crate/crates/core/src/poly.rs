//! Sparse multivariate polynomials over the phase-space variables
//! `x_0 .. x_{2n-1}` with `(x_0..x_{n-1}) = p` and `(x_n..x_{2n-1}) = q`.
//!
//! Terms are stored in a `BTreeMap` keyed by the exponent multi-index, which
//! makes the lexicographic serialization order canonical for free.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Result, StrupError};

/// Exponent multi-index; length equals the number of variables.
pub type MultiIndex = Vec<u16>;

/// Coefficients with absolute value below this are dropped on normalization.
pub const DROP_TOL: f64 = 1e-14;

/// Sparse multivariate polynomial with real coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPoly {
    nvars: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl MultiPoly {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        if c.abs() >= DROP_TOL {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    /// The monomial `c * x^a`.
    pub fn monomial(nvars: usize, exponents: &[u16], c: f64) -> Result<Self> {
        if exponents.len() != nvars {
            return Err(StrupError::Dimension(format!(
                "multi-index length {} != nvars {}",
                exponents.len(),
                nvars
            )));
        }
        let mut p = Self::zero(nvars);
        if c.abs() >= DROP_TOL {
            p.terms.insert(exponents.to_vec(), c);
        }
        Ok(p)
    }

    /// The linear form `w . x`.
    pub fn linear_form(w: &[f64]) -> Self {
        let nvars = w.len();
        let mut p = Self::zero(nvars);
        for (i, &wi) in w.iter().enumerate() {
            if wi.abs() >= DROP_TOL {
                let mut e = vec![0u16; nvars];
                e[i] = 1;
                p.terms.insert(e, wi);
            }
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Degrees of freedom; errors when the variable count is odd.
    pub fn dim_n(&self) -> Result<usize> {
        if self.nvars % 2 != 0 {
            return Err(StrupError::Dimension(format!(
                "polynomial in {} variables has no phase-space split",
                self.nvars
            )));
        }
        Ok(self.nvars / 2)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &f64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exponents: &[u16]) -> f64 {
        self.terms.get(exponents).copied().unwrap_or(0.0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as u32).sum())
            .max()
            .unwrap_or(0)
    }

    fn check_same_vars(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(StrupError::Dimension(format!(
                "polynomials over {} and {} variables",
                self.nvars, other.nvars
            )));
        }
        Ok(())
    }

    pub fn add_term(&mut self, exponents: MultiIndex, c: f64) {
        let v = self.terms.entry(exponents.clone()).or_insert(0.0);
        *v += c;
        if v.abs() < DROP_TOL {
            self.terms.remove(&exponents);
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_vars(other)?;
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            *out.terms.entry(e.clone()).or_insert(0.0) += c;
        }
        out.normalize();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &v) in &self.terms {
            let cv = c * v;
            if cv.abs() >= DROP_TOL {
                out.terms.insert(e.clone(), cv);
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_vars(other)?;
        let mut out = Self::zero(self.nvars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e: MultiIndex = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *out.terms.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        out.normalize();
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = out.mul(self).expect("same nvars");
        }
        out
    }

    fn normalize(&mut self) {
        self.terms.retain(|_, v| v.abs() >= DROP_TOL);
    }

    /// Partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            let k = e[var];
            if k == 0 {
                continue;
            }
            let mut de = e.clone();
            de[var] = k - 1;
            *out.terms.entry(de).or_insert(0.0) += c * f64::from(k);
        }
        out.normalize();
        out
    }

    /// Gradient: component `i` is `d self / d x_i`.
    pub fn grad(&self) -> Vec<Self> {
        (0..self.nvars).map(|i| self.partial(i)).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "eval point dimension");
        let mut acc = 0.0;
        for (e, &c) in &self.terms {
            let mut m = c;
            for (xi, &ei) in x.iter().zip(e) {
                for _ in 0..ei {
                    m *= xi;
                }
            }
            acc += m;
        }
        acc
    }

    pub fn eval_grad(&self, x: &[f64]) -> Vec<f64> {
        self.grad().iter().map(|g| g.eval(x)).collect()
    }

    /// Poisson bracket `{self, other} = grad(self)^T J grad(other)` with the
    /// `(p, q)` ordering and `J = [[0, -I], [I, 0]]` pinned in this crate:
    /// `sum_i d self/d q_i * d other/d p_i - d self/d p_i * d other/d q_i`.
    pub fn poisson_bracket(&self, other: &Self) -> Result<Self> {
        self.check_same_vars(other)?;
        let n = self.dim_n()?;
        let mut out = Self::zero(self.nvars);
        for i in 0..n {
            let a = self.partial(n + i).mul(&other.partial(i))?;
            let b = self.partial(i).mul(&other.partial(n + i))?;
            out = out.add(&a.sub(&b)?)?;
        }
        Ok(out)
    }

    /// Max-norm distance between coefficient maps.
    pub fn coeff_max_diff(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for (e, &c) in &self.terms {
            m = m.max((c - other.coefficient(e)).abs());
        }
        for (e, &c) in &other.terms {
            m = m.max((c - self.coefficient(e)).abs());
        }
        m
    }

    /// Canonical text serialization: one line per term,
    /// `e_0 e_1 .. e_{k-1} : coefficient`, lexicographically sorted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (e, c) in &self.terms {
            for (i, ei) in e.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{ei}");
            }
            let _ = writeln!(s, " : {c:?}");
        }
        s
    }

    pub fn from_text(nvars: usize, text: &str) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (exps, coeff) = line.split_once(':').ok_or_else(|| {
                StrupError::Parse(format!("line {}: missing ':'", lineno + 1))
            })?;
            let e: MultiIndex = exps
                .split_whitespace()
                .map(|t| {
                    t.parse::<u16>()
                        .map_err(|_| StrupError::Parse(format!("line {}: bad exponent '{t}'", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            if e.len() != nvars {
                return Err(StrupError::Dimension(format!(
                    "line {}: {} exponents, expected {nvars}",
                    lineno + 1,
                    e.len()
                )));
            }
            let c: f64 = coeff
                .trim()
                .parse()
                .map_err(|_| StrupError::Parse(format!("line {}: bad coefficient", lineno + 1)))?;
            p.add_term(e, c);
        }
        p.normalize();
        Ok(p)
    }

    /// Human-readable form in the `0.5 x_0^2 + ...` monomial style.
    ///
    /// Coefficients below `1e-12 * max|coefficient|` are suppressed here;
    /// the text serialization keeps full precision.
    pub fn pretty(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let cmax = self.terms.values().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut parts: Vec<(u32, String, f64)> = Vec::new();
        for (e, &c) in &self.terms {
            if c.abs() < 1e-12 * cmax {
                continue;
            }
            let deg: u32 = e.iter().map(|&x| u32::from(x)).sum();
            let mut mono = String::new();
            for (i, &ei) in e.iter().enumerate() {
                if ei == 0 {
                    continue;
                }
                if !mono.is_empty() {
                    mono.push(' ');
                }
                if ei == 1 {
                    let _ = write!(mono, "x_{i}");
                } else {
                    let _ = write!(mono, "x_{i}^{ei}");
                }
            }
            parts.push((deg, mono, c));
        }
        // low degree first, then lexicographic
        parts.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let mut s = String::new();
        for (i, (_, mono, c)) in parts.iter().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if *c < 0.0 {
                    s.push('-');
                }
            } else if *c < 0.0 {
                s.push_str(" - ");
            } else {
                s.push_str(" + ");
            }
            if mono.is_empty() {
                let _ = write!(s, "{mag}");
            } else if (mag - 1.0).abs() < 1e-12 {
                s.push_str(mono);
            } else {
                let _ = write!(s, "{mag} {mono}");
            }
        }
        s
    }
}

/// Denominator convention for [`coefficient_mae`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaeSupport {
    /// Mean over the union of supported monomials (the default).
    Union,
    /// Mean over monomials supported in both polynomials.
    Intersection,
}

/// Mean absolute error between coefficient maps over the chosen support.
pub fn coefficient_mae(learned: &MultiPoly, truth: &MultiPoly, support: MaeSupport) -> Result<f64> {
    if learned.nvars() != truth.nvars() {
        return Err(StrupError::Dimension("coefficient_mae: variable count mismatch".into()));
    }
    if learned.is_zero() && truth.is_zero() {
        return Err(StrupError::Argument(
            "coefficient_mae undefined for two zero polynomials".into(),
        ));
    }
    let mut keys: Vec<&MultiIndex> = Vec::new();
    match support {
        MaeSupport::Union => {
            for (e, _) in learned.terms() {
                keys.push(e);
            }
            for (e, _) in truth.terms() {
                if learned.coefficient(e) == 0.0 {
                    keys.push(e);
                }
            }
        }
        MaeSupport::Intersection => {
            for (e, _) in learned.terms() {
                if truth.coefficient(e) != 0.0 {
                    keys.push(e);
                }
            }
        }
    }
    if keys.is_empty() {
        return Err(StrupError::Argument("coefficient_mae: empty support".into()));
    }
    let sum: f64 = keys
        .iter()
        .map(|e| (learned.coefficient(e) - truth.coefficient(e)).abs())
        .sum();
    Ok(sum / keys.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x(nvars: usize, i: usize) -> MultiPoly {
        let mut e = vec![0u16; nvars];
        e[i] = 1;
        MultiPoly::monomial(nvars, &e, 1.0).unwrap()
    }

    #[test]
    fn add_cancels() {
        let a = MultiPoly::monomial(2, &[2, 0], 1.0).unwrap();
        let b = MultiPoly::monomial(2, &[2, 0], -1.0).unwrap();
        assert!(a.add(&b).unwrap().is_zero());
    }

    #[test]
    fn difference_of_squares() {
        let s = x(2, 0).add(&x(2, 1)).unwrap();
        let d = x(2, 0).sub(&x(2, 1)).unwrap();
        let prod = s.mul(&d).unwrap();
        let expect = MultiPoly::monomial(2, &[2, 0], 1.0)
            .unwrap()
            .add(&MultiPoly::monomial(2, &[0, 2], -1.0).unwrap())
            .unwrap();
        assert_eq!(prod, expect);
    }

    #[test]
    fn scale_example() {
        // 2 * (p^2/2 + q^2/2) = p^2 + q^2
        let h = MultiPoly::monomial(2, &[2, 0], 0.5)
            .unwrap()
            .add(&MultiPoly::monomial(2, &[0, 2], 0.5).unwrap())
            .unwrap();
        let doubled = h.scale(2.0);
        assert_eq!(doubled.coefficient(&[2, 0]), 1.0);
        assert_eq!(doubled.coefficient(&[0, 2]), 1.0);
    }

    #[test]
    fn grad_power_rule() {
        // grad(x0^2 x1) = (2 x0 x1, x0^2, 0, 0) in 4 variables
        let p = MultiPoly::monomial(4, &[2, 1, 0, 0], 1.0).unwrap();
        let g = p.grad();
        assert_eq!(g[0].coefficient(&[1, 1, 0, 0]), 2.0);
        assert_eq!(g[1].coefficient(&[2, 0, 0, 0]), 1.0);
        assert!(g[2].is_zero());
        assert!(g[3].is_zero());
        assert!(MultiPoly::constant(4, 3.0).grad().iter().all(MultiPoly::is_zero));
    }

    #[test]
    fn bracket_hand_example() {
        // {p^2/2, q^2/2}: grad h1 = (p, 0), J grad h2 = (-q, 0), so -pq.
        let h1 = MultiPoly::monomial(2, &[2, 0], 0.5).unwrap();
        let h2 = MultiPoly::monomial(2, &[0, 2], 0.5).unwrap();
        let b = h1.poisson_bracket(&h2).unwrap();
        assert_eq!(b.num_terms(), 1);
        assert!((b.coefficient(&[1, 1]) - (-1.0)).abs() < 1e-15);
    }

    #[test]
    fn bracket_matches_numeric_j_form() {
        use crate::phase::apply_j;
        let mut rng = crate::testutil::rng(7);
        for _ in 0..20 {
            let h1 = crate::testutil::random_poly(&mut rng, 4, 3);
            let h2 = crate::testutil::random_poly(&mut rng, 4, 3);
            let b = h1.poisson_bracket(&h2).unwrap();
            for _ in 0..5 {
                let pt = crate::testutil::random_point(&mut rng, 4, 1.0);
                let g1 = h1.eval_grad(&pt);
                let g2 = h2.eval_grad(&pt);
                let jg2 = apply_j(&g2).unwrap();
                let numeric: f64 = g1.iter().zip(&jg2).map(|(a, b)| a * b).sum();
                let symbolic = b.eval(&pt);
                assert!(
                    (numeric - symbolic).abs() < 1e-10 * (1.0 + numeric.abs()),
                    "{numeric} vs {symbolic}"
                );
            }
        }
    }

    #[test]
    fn mae_examples() {
        let a = MultiPoly::monomial(2, &[2, 0], 0.5).unwrap();
        let b = MultiPoly::monomial(2, &[2, 0], 0.6).unwrap();
        assert_eq!(coefficient_mae(&a, &a, MaeSupport::Union).unwrap(), 0.0);
        assert!((coefficient_mae(&a, &b, MaeSupport::Union).unwrap() - 0.1).abs() < 1e-15);
        let z = MultiPoly::zero(2);
        assert!(coefficient_mae(&z, &z, MaeSupport::Union).is_err());
    }

    #[test]
    fn text_round_trip() {
        let p = MultiPoly::monomial(4, &[2, 0, 1, 0], 0.123456789012345678)
            .unwrap()
            .add(&MultiPoly::monomial(4, &[0, 0, 0, 3], -4.5e-7).unwrap())
            .unwrap();
        let back = MultiPoly::from_text(4, &p.to_text()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn pretty_style() {
        let p = MultiPoly::monomial(2, &[2, 0], 0.5).unwrap();
        assert_eq!(p.pretty(), "0.5 x_0^2");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn jacobi_identity(seed in 0u64..500) {
            let mut rng = crate::testutil::rng(seed);
            for &nv in &[2usize, 4] {
                let f = crate::testutil::random_poly(&mut rng, nv, 3);
                let g = crate::testutil::random_poly(&mut rng, nv, 3);
                let k = crate::testutil::random_poly(&mut rng, nv, 3);
                let t1 = f.poisson_bracket(&g.poisson_bracket(&k).unwrap()).unwrap();
                let t2 = g.poisson_bracket(&k.poisson_bracket(&f).unwrap()).unwrap();
                let t3 = k.poisson_bracket(&f.poisson_bracket(&g).unwrap()).unwrap();
                let sum = t1.add(&t2).unwrap().add(&t3).unwrap();
                prop_assert!(sum.coeff_max_diff(&MultiPoly::zero(nv)) < 1e-10);
            }
        }

        #[test]
        fn leibniz_rule(seed in 0u64..500) {
            let mut rng = crate::testutil::rng(seed.wrapping_add(1000));
            let f = crate::testutil::random_poly(&mut rng, 4, 3);
            let g = crate::testutil::random_poly(&mut rng, 4, 2);
            let k = crate::testutil::random_poly(&mut rng, 4, 2);
            let lhs = f.poisson_bracket(&g.mul(&k).unwrap()).unwrap();
            let rhs = f
                .poisson_bracket(&g)
                .unwrap()
                .mul(&k)
                .unwrap()
                .add(&g.mul(&f.poisson_bracket(&k).unwrap()).unwrap())
                .unwrap();
            prop_assert!(lhs.coeff_max_diff(&rhs) < 1e-9);
        }

        #[test]
        fn bracket_antisymmetry(seed in 0u64..500) {
            let mut rng = crate::testutil::rng(seed.wrapping_add(2000));
            let h1 = crate::testutil::random_poly(&mut rng, 4, 3);
            let h2 = crate::testutil::random_poly(&mut rng, 4, 3);
            prop_assert!(h1.poisson_bracket(&h1).unwrap().is_zero());
            let s = h1
                .poisson_bracket(&h2)
                .unwrap()
                .add(&h2.poisson_bracket(&h1).unwrap())
                .unwrap();
            prop_assert!(s.is_zero());
        }
    }
}
