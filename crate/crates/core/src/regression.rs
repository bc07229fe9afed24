//! Symbolic Hamiltonian regression: trained polynomial-basis model ->
//! truncated backward error map at orders 0..p -> recovered Hamiltonians
//! with a coefficient-MAE column.

use std::fmt::Write as _;

use crate::bch::{backward_error_map, BchOrder, BCH_MAX_ORDER};
use crate::error::{Result, StrupError};
use crate::model::SympNetModel;
use crate::poly::{coefficient_mae, MaeSupport, MultiPoly};

#[derive(Clone, Debug)]
pub struct RegressionRow {
    pub order: u32,
    pub recovered: MultiPoly,
    pub mae: Option<f64>,
    pub term_count: usize,
    pub max_degree: u32,
}

#[derive(Clone, Debug)]
pub struct RegressionReport {
    pub rows: Vec<RegressionRow>,
    pub h: f64,
    pub method: String,
    pub dim_n: usize,
    pub layer_count: usize,
}

/// Backward-error rows `p = 0..=max_order` for a P-SympNet. The MAE column
/// is filled when the ground-truth Hamiltonian is given.
pub fn regress(
    model: &SympNetModel,
    h: f64,
    max_order: u32,
    truth: Option<&MultiPoly>,
    support: MaeSupport,
) -> Result<RegressionReport> {
    if max_order > BCH_MAX_ORDER {
        return Err(StrupError::Capability(format!(
            "max_order {max_order} exceeds BCH ceiling {BCH_MAX_ORDER}"
        )));
    }
    let basis = model.extract_basis()?;
    let mut rows = Vec::with_capacity(max_order as usize + 1);
    for p in 0..=max_order {
        let recovered = backward_error_map(&basis, h, BchOrder::new(p))?;
        let mae = truth
            .map(|t| coefficient_mae(&recovered, t, support))
            .transpose()?;
        rows.push(RegressionRow {
            order: p,
            term_count: recovered.num_terms(),
            max_degree: recovered.total_degree(),
            mae,
            recovered,
        });
    }
    Ok(RegressionReport {
        rows,
        h,
        method: model.method.as_str().into(),
        dim_n: model.dim_n,
        layer_count: model.layers.len(),
    })
}

impl RegressionReport {
    /// Aligned text table mirroring the paper's layout: order, recovered
    /// polynomial, MAE, plus term-count/degree columns for the
    /// `O(p (d-1))` growth.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "method {}  2n = {}  k = {}  h = {}\n",
            self.method,
            2 * self.dim_n,
            self.layer_count,
            self.h
        );
        let _ = writeln!(s, "{:>5}  {:>6}  {:>4}  {:>10}  recovered", "order", "terms", "deg", "MAE");
        for r in &self.rows {
            let mae = r
                .mae
                .map(|v| format!("{v:.1e}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:>5}  {:>6}  {:>4}  {:>10}  {}",
                format!("p={}", r.order),
                r.term_count,
                r.max_degree,
                mae,
                r.recovered.pretty()
            );
        }
        s
    }

    /// Machine-readable JSON; polynomials in the canonical text
    /// serialization (full precision) plus the pretty form.
    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "order": r.order,
                    "term_count": r.term_count,
                    "max_degree": r.max_degree,
                    "mae": r.mae,
                    "polynomial": r.recovered.to_text(),
                    "pretty": r.recovered.pretty(),
                })
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "method": self.method,
            "dim": 2 * self.dim_n,
            "layers": self.layer_count,
            "h": self.h,
            "rows": rows,
        }))
        .expect("report serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bch::quad_matrix_log_oracle;
    use crate::model::{init_model, Hyper, Method};
    use crate::testutil;

    /// P model whose layers all shear along coordinate directions of p only:
    /// the flows commute, so every order equals order zero.
    #[test]
    fn commuting_layers_all_rows_equal() {
        let mut m = init_model(Method::P, 2, &Hyper::poly(2, 2), 1).unwrap();
        // w = e_0 and e_1 (both in the p block), arbitrary coefficients
        m.set_params(&[1.0, 0.0, 0.0, 0.0, 0.7, 0.0, 1.0, 0.0, 0.0, -0.3])
            .unwrap();
        let rep = regress(&m, 0.2, 4, None, MaeSupport::Union).unwrap();
        for r in &rep.rows {
            assert!(r.recovered.coeff_max_diff(&rep.rows[0].recovered) < 1e-15);
        }
    }

    #[test]
    fn order_zero_mae_matches_imh() {
        let mut m = init_model(Method::P, 1, &Hyper::poly(3, 2), 2).unwrap();
        let mut rng = testutil::rng(3);
        let p: Vec<f64> = testutil::random_point(&mut rng, m.param_count(), 0.5);
        m.set_params(&p).unwrap();
        let truth = testutil::random_quadratic(&mut rng, 2, 1.0);
        let rep = regress(&m, 0.1, 2, Some(&truth), MaeSupport::Union).unwrap();
        let expect =
            coefficient_mae(&m.inverse_modified_hamiltonian().unwrap(), &truth, MaeSupport::Union)
                .unwrap();
        assert_eq!(rep.rows[0].mae.unwrap(), expect);
    }

    #[test]
    fn synthetic_quadratic_mae_decreases_with_order() {
        // exact quadratic basis, truth from the matrix-log oracle
        let mut m = init_model(Method::P, 2, &Hyper::poly(4, 2), 4).unwrap();
        let mut rng = testutil::rng(5);
        let p: Vec<f64> = testutil::random_point(&mut rng, m.param_count(), 0.6);
        m.set_params(&p).unwrap();
        let h = 0.05;
        let basis = m.extract_basis().unwrap();
        let truth = quad_matrix_log_oracle(&basis, h).unwrap();
        let rep = regress(&m, h, 4, Some(&truth), MaeSupport::Union).unwrap();
        let maes: Vec<f64> = rep.rows.iter().map(|r| r.mae.unwrap()).collect();
        for w in maes.windows(2) {
            assert!(w[1] < w[0], "{maes:?}");
        }
        assert!(maes[4] < 1e-8 * maes[0], "{maes:?}");
    }

    #[test]
    fn non_polynomial_model_rejected() {
        let g = init_model(Method::G, 1, &Hyper::width(2, 3), 0).unwrap();
        assert!(regress(&g, 0.1, 2, None, MaeSupport::Union).is_err());
    }

    #[test]
    fn report_renders() {
        let m = init_model(Method::P, 1, &Hyper::poly(2, 2), 6).unwrap();
        let rep = regress(&m, 0.1, 1, None, MaeSupport::Union).unwrap();
        let table = rep.to_table();
        assert!(table.contains("p=0") && table.contains("p=1"));
        let json = rep.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 2);
        assert!(regress(&m, 0.1, 99, None, MaeSupport::Union).is_err());
    }
}
