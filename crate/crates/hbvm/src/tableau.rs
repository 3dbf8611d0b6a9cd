//! Discrete operators, HBVM(k, s) Butcher tableaux, and the continuous
//! kernels they discretize.
//!
//! With P_s the k x s matrix of basis values at the quadrature nodes, I_s
//! the matrix of their antiderivatives, and Omega = diag(b), the operators
//! satisfy
//!
//!   I_s = P_{s+1} X̂_s,   P_s' Omega P_s = I,   P_s' Omega I_s = X_s,
//!
//! and the Runge-Kutta matrix of HBVM(k, s) is A = I_s P_s' Omega, i.e.
//! A_ij = b_j a_s(c_i, c_j) for the truncated kernel a_s.  The
//! Runge-Kutta-Nystrom form uses Abar = I_s X_s P_s' Omega with second
//! weight row b o (1 - c).

use crate::error::{Error, Result};
use crate::legendre::{build_spectral, LegendreBasis, SpectralMatrices};
use crate::quadrature::QuadratureRule;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Node-sampled basis and integral matrices for an HBVM(k, s) method.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub k: usize,
    pub s: usize,
    /// k x s, rows are basis values at the nodes.
    pub p_s: DMatrix<f64>,
    /// k x (s+1), same with one more polynomial.
    pub p_s1: DMatrix<f64>,
    /// k x s, rows are antiderivative values at the nodes (P_{s+1} X̂_s).
    pub i_s: DMatrix<f64>,
    /// Quadrature nodes.
    pub c: DVector<f64>,
    /// Quadrature weights (the diagonal of Omega).
    pub b: DVector<f64>,
}

/// Sample the operators on a k-point rule; requires k >= s >= 1.
pub fn build_operators(s: usize, rule: &QuadratureRule) -> Result<DiscreteOperators> {
    if s == 0 {
        return Err(Error::invalid("truncation degree s must be at least 1"));
    }
    let k = rule.len();
    if k < s {
        return Err(Error::invalid(format!(
            "k must be >= s (got k = {k}, s = {s})"
        )));
    }
    let spectral = build_spectral(s)?;
    let basis = LegendreBasis::new(s + 1)?;
    let mut p_s1 = DMatrix::zeros(k, s + 1);
    for (i, &c) in rule.nodes().iter().enumerate() {
        let row = basis.eval(c)?;
        for (j, v) in row.iter().enumerate() {
            p_s1[(i, j)] = *v;
        }
    }
    let p_s = p_s1.columns(0, s).into_owned();
    let i_s = &p_s1 * &spectral.x_hat;
    Ok(DiscreteOperators {
        k,
        s,
        p_s,
        p_s1,
        i_s,
        c: DVector::from_column_slice(rule.nodes()),
        b: DVector::from_column_slice(rule.weights()),
    })
}

impl DiscreteOperators {
    /// Omega as a dense diagonal matrix.
    pub fn omega(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.b)
    }

    /// Max-norm residuals of the two operator identities
    /// (`P' Omega P - I`, `P' Omega I_s - X_s`).
    pub fn identity_residuals(&self, spectral: &SpectralMatrices) -> (f64, f64) {
        let omega = self.omega();
        let gram = self.p_s.transpose() * &omega * &self.p_s;
        let cross = self.p_s.transpose() * &omega * &self.i_s;
        let mut ortho = 0.0_f64;
        let mut integ = 0.0_f64;
        for i in 0..self.s {
            for j in 0..self.s {
                let id = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((gram[(i, j)] - id).abs());
                integ = integ.max((cross[(i, j)] - spectral.x[(i, j)]).abs());
            }
        }
        (ortho, integ)
    }
}

/// A k-stage Runge-Kutta tableau (A, b, c).
#[derive(Debug, Clone)]
pub struct RKTableau {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

/// A k-stage Runge-Kutta-Nystrom tableau (Abar, bbar, b, c).
#[derive(Debug, Clone)]
pub struct RKNTableau {
    pub abar: DMatrix<f64>,
    pub bbar: DVector<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

/// HBVM(k, s) in Runge-Kutta form: A = I_s P_s' Omega.
pub fn rk_tableau(ops: &DiscreteOperators) -> RKTableau {
    let a = &ops.i_s * ops.p_s.transpose() * ops.omega();
    RKTableau {
        a,
        b: ops.b.clone(),
        c: ops.c.clone(),
    }
}

/// HBVM(k, s) in Runge-Kutta-Nystrom form: Abar = I_s X_s P_s' Omega,
/// bbar_i = b_i (1 - c_i).
pub fn rkn_tableau(ops: &DiscreteOperators, spectral: &SpectralMatrices) -> RKNTableau {
    let abar = &ops.i_s * &spectral.x * ops.p_s.transpose() * ops.omega();
    let bbar = DVector::from_iterator(
        ops.k,
        ops.b.iter().zip(ops.c.iter()).map(|(&b, &c)| b * (1.0 - c)),
    );
    RKNTableau {
        abar,
        bbar,
        b: ops.b.clone(),
        c: ops.c.clone(),
    }
}

/// Degree-s truncated kernel a_s(c, tau) = I_s(c)' P_s(tau).
pub fn rk_kernel(s: usize, c: f64, tau: f64) -> Result<f64> {
    let basis = LegendreBasis::new(s)?;
    let ints = basis.integrals(c)?;
    let vals = basis.eval(tau)?;
    Ok(ints.iter().zip(&vals).map(|(i, p)| i * p).sum())
}

/// Nystrom kernel abar_s(c, tau) = I_s(c)' X_s P_s(tau).
pub fn rkn_kernel(s: usize, c: f64, tau: f64) -> Result<f64> {
    let spectral = build_spectral(s)?;
    let basis = LegendreBasis::new(s)?;
    let ints = basis.integrals(c)?;
    let vals = DVector::from_vec(basis.eval(tau)?);
    let xv = &spectral.x * vals;
    Ok(ints.iter().zip(xv.iter()).map(|(i, v)| i * v).sum())
}

/// Lossless float formatting for CSV output (shortest round-trip form).
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Combined export document for both tableau forms.
#[derive(Debug, Clone, Serialize)]
pub struct TableauExport {
    pub k: usize,
    pub s: usize,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "Abar")]
    pub abar: Vec<Vec<f64>>,
    pub bbar: Vec<f64>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl TableauExport {
    pub fn new(ops: &DiscreteOperators, spectral: &SpectralMatrices) -> Self {
        let rk = rk_tableau(ops);
        let rkn = rkn_tableau(ops, spectral);
        TableauExport {
            k: ops.k,
            s: ops.s,
            c: ops.c.iter().copied().collect(),
            b: ops.b.iter().copied().collect(),
            a: matrix_rows(&rk.a),
            abar: matrix_rows(&rkn.abar),
            bbar: rkn.bbar.iter().copied().collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tableau serializes")
    }
}

fn stage_rows_csv(c: &DVector<f64>, m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        out.push_str(&fmt_f64(c[i]));
        for j in 0..m.ncols() {
            out.push(',');
            out.push_str(&fmt_f64(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

fn weight_row_csv(w: &DVector<f64>) -> String {
    let mut out = String::new();
    for v in w.iter() {
        out.push(',');
        out.push_str(&fmt_f64(*v));
    }
    out.push('\n');
    out
}

impl RKTableau {
    /// One row per stage `c_i, A_i1, ..., A_ik`, then the weight row.
    pub fn to_csv(&self) -> String {
        let mut out = stage_rows_csv(&self.c, &self.a);
        out.push_str(&weight_row_csv(&self.b));
        out
    }
}

impl RKNTableau {
    /// One row per stage `c_i, Abar_i1, ..., Abar_ik`, then the two weight
    /// rows (bbar, then b).
    pub fn to_csv(&self) -> String {
        let mut out = stage_rows_csv(&self.c, &self.abar);
        out.push_str(&weight_row_csv(&self.bbar));
        out.push_str(&weight_row_csv(&self.b));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_rule;

    fn ops(s: usize, k: usize) -> DiscreteOperators {
        build_operators(s, &gauss_rule(k).unwrap()).unwrap()
    }

    #[test]
    fn one_by_one_operators() {
        let o = ops(1, 1);
        assert!((o.p_s[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((o.i_s[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(o.b[0], 1.0);
    }

    #[test]
    fn cross_product_recovers_x() {
        let o = ops(1, 2);
        let cross = o.p_s.transpose() * o.omega() * &o.i_s;
        assert!((cross[(0, 0)] - 0.5).abs() < 1e-15);

        let o = ops(2, 2);
        let gram = o.p_s.transpose() * o.omega() * &o.p_s;
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - id).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn operator_identities_across_grid() {
        for s in 1..=6 {
            let spectral = build_spectral(s).unwrap();
            for k in s..=10 {
                let o = ops(s, k);
                // I_s = P_{s+1} X̂_s holds by construction; check it against
                // directly evaluated antiderivatives instead.
                let basis = LegendreBasis::new(s).unwrap();
                for (i, &c) in o.c.iter().enumerate() {
                    let ints = basis.integrals(c).unwrap();
                    for j in 0..s {
                        assert!((o.i_s[(i, j)] - ints[j]).abs() < 1e-13);
                    }
                }
                let (ortho, integ) = o.identity_residuals(&spectral);
                assert!(ortho < 1e-13, "s = {s}, k = {k}: ortho {ortho:.3e}");
                assert!(integ < 1e-13, "s = {s}, k = {k}: integ {integ:.3e}");
            }
        }
    }

    #[test]
    fn rejects_k_smaller_than_s() {
        let rule = gauss_rule(1).unwrap();
        let err = build_operators(2, &rule).unwrap_err();
        assert!(err.to_string().contains("k must be >= s"));
    }

    #[test]
    fn hbvm_1_1_is_implicit_midpoint() {
        let tab = rk_tableau(&ops(1, 1));
        assert_eq!(tab.a[(0, 0)], 0.5);
        assert_eq!(tab.b[0], 1.0);
        assert_eq!(tab.c[0], 0.5);
    }

    #[test]
    fn hbvm_2_2_is_two_stage_gauss() {
        let tab = rk_tableau(&ops(2, 2));
        let off = 3.0_f64.sqrt() / 6.0;
        let expected = [[0.25, 0.25 - off], [0.25 + off, 0.25]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (tab.a[(i, j)] - expected[i][j]).abs() < 1e-14,
                    "A[{i}][{j}]"
                );
            }
        }
    }

    #[test]
    fn rk_row_sums_equal_abscissae() {
        // a_s reproduces int_0^c 1 = c because P_0 is inside the truncation.
        for s in 1..=4 {
            for k in s..=7 {
                let tab = rk_tableau(&ops(s, k));
                for i in 0..k {
                    let row_sum: f64 = (0..k).map(|j| tab.a[(i, j)]).sum();
                    assert!((row_sum - tab.c[i]).abs() < 1e-13, "s={s} k={k} row {i}");
                }
            }
        }
    }

    #[test]
    fn rk_matrix_matches_kernel_samples() {
        for s in 1..=4 {
            for k in s..=6 {
                let o = ops(s, k);
                let tab = rk_tableau(&o);
                for i in 0..k {
                    for j in 0..k {
                        let via_kernel = o.b[j] * rk_kernel(s, o.c[i], o.c[j]).unwrap();
                        assert!((tab.a[(i, j)] - via_kernel).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn rkn_1_1_values() {
        let spectral = build_spectral(1).unwrap();
        let tab = rkn_tableau(&ops(1, 1), &spectral);
        assert!((tab.abar[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((tab.bbar[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rkn_weights_entrywise() {
        for (s, k) in [(1, 3), (2, 4), (3, 5)] {
            let spectral = build_spectral(s).unwrap();
            let o = ops(s, k);
            let tab = rkn_tableau(&o, &spectral);
            for i in 0..k {
                assert_eq!(tab.bbar[i], o.b[i] * (1.0 - o.c[i]));
            }
        }
    }

    #[test]
    fn rkn_matrix_matches_kernel_samples() {
        let spectral = build_spectral(2).unwrap();
        let o = ops(2, 3);
        let tab = rkn_tableau(&o, &spectral);
        for i in 0..3 {
            for j in 0..3 {
                let via_kernel = o.b[j] * rkn_kernel(2, o.c[i], o.c[j]).unwrap();
                assert!((tab.abar[(i, j)] - via_kernel).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_special_values() {
        for tau in [0.0, 0.3, 0.9] {
            for c in [0.0, 0.4, 1.0] {
                assert!((rk_kernel(1, c, tau).unwrap() - c).abs() < 1e-15);
                assert!((rkn_kernel(1, c, tau).unwrap() - 0.5 * c).abs() < 1e-15);
            }
            // int_0^1 P_1 = 0 kills the j = 1 term.
            assert!((rk_kernel(2, 1.0, tau).unwrap() - 1.0).abs() < 1e-14);
            assert_eq!(rk_kernel(3, 0.0, tau).unwrap(), 0.0);
            assert_eq!(rkn_kernel(2, 0.0, tau).unwrap(), 0.0);
        }
    }

    #[test]
    fn nystrom_kernel_is_iterated_kernel() {
        // abar_s(c, tau) = int_0^1 a_s(c, u) a_s(u, tau) du, with the
        // integral evaluated by a 10-point rule (well beyond exactness).
        let rule = gauss_rule(10).unwrap();
        for i in 0..=10 {
            for j in 0..=10 {
                let c = i as f64 / 10.0;
                let tau = j as f64 / 10.0;
                let direct = rkn_kernel(2, c, tau).unwrap();
                let iterated =
                    rule.integrate(|u| rk_kernel(2, c, u).unwrap() * rk_kernel(2, u, tau).unwrap());
                assert!((direct - iterated).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_and_json_exports() {
        let o = ops(1, 1);
        let spectral = build_spectral(1).unwrap();
        let rk = rk_tableau(&o);
        let csv = rk.to_csv();
        assert_eq!(csv, "0.5,0.5\n,1\n");

        let rkn = rkn_tableau(&o, &spectral);
        assert_eq!(rkn.to_csv(), "0.5,0.25\n,0.5\n,1\n");

        let export = TableauExport::new(&o, &spectral);
        let json = export.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["k"], 1);
        assert_eq!(parsed["s"], 1);
        assert_eq!(parsed["A"][0][0], 0.5);
        assert_eq!(parsed["Abar"][0][0], 0.25);
        assert_eq!(parsed["bbar"][0], 0.5);
        assert_eq!(parsed["c"][0], 0.5);
        assert_eq!(parsed["b"][0], 1.0);
    }
}
