//! Gauss-Legendre quadrature on [0, 1].

use crate::error::{Error, Result};

/// Largest supported node count.
pub const MAX_NODES: usize = 64;

/// A k-point Gauss-Legendre rule on [0, 1]: exact for polynomials of
/// degree up to 2k - 1, nodes strictly increasing inside (0, 1).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Standard (unnormalized) Legendre values (L_k(t), L_{k-1}(t)) on [-1, 1].
fn legendre_pair(k: usize, t: f64) -> (f64, f64) {
    debug_assert!(k >= 1);
    let mut prev = 1.0;
    let mut curr = t;
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * t * curr - jf * prev) / (jf + 1.0);
        prev = curr;
        curr = next;
    }
    (curr, prev)
}

/// Build the k-point rule.
///
/// Roots of L_k are found by Newton iteration from Chebyshev-point initial
/// guesses, then mapped to [0, 1].  Nodes are sorted ascending and the rule
/// is symmetrized so that c_i + c_{k+1-i} = 1 and b_i = b_{k+1-i} hold to
/// the last bit, which makes downstream tableaux reproducible.
pub fn gauss_rule(k: usize) -> Result<QuadratureRule> {
    if k == 0 || k > MAX_NODES {
        return Err(Error::invalid(format!(
            "node count k must be in 1..={MAX_NODES}, got {k}"
        )));
    }
    let kf = k as f64;
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..k {
        // Guess for the i-th largest root of L_k.
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (kf + 0.5)).cos();
        for _ in 0..100 {
            let (l, l_prev) = legendre_pair(k, t);
            let dl = kf * (t * l - l_prev) / (t * t - 1.0);
            let dt = l / dl;
            t -= dt;
            if dt.abs() <= 1e-15 * (1.0 + t.abs()) {
                break;
            }
        }
        // One polishing step, then the weight from the derivative.
        let (l, l_prev) = legendre_pair(k, t);
        let dl = kf * (t * l - l_prev) / (t * t - 1.0);
        t -= l / dl;
        let (l, l_prev) = legendre_pair(k, t);
        let dl = kf * (t * l - l_prev) / (t * t - 1.0);
        // Roots come out in decreasing t; store ascending in c = (1 + t)/2.
        nodes[k - 1 - i] = 0.5 * (1.0 + t);
        weights[k - 1 - i] = 1.0 / ((1.0 - t * t) * dl * dl);
    }
    // Symmetrize node/weight pairs about c = 1/2.
    for i in 0..k / 2 {
        let j = k - 1 - i;
        let c = 0.5 * (nodes[i] + (1.0 - nodes[j]));
        nodes[i] = c;
        nodes[j] = 1.0 - c;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if k % 2 == 1 {
        nodes[k / 2] = 0.5;
    }
    Ok(QuadratureRule { nodes, weights })
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// sum_j b_j g(c_j) for a scalar integrand.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&c, &b)| b * g(c))
            .sum()
    }

    /// sum_j b_j g(c_j) for a vector integrand, accumulated in node order.
    pub fn integrate_vec<F: FnMut(f64) -> Vec<f64>>(&self, mut g: F) -> Vec<f64> {
        let mut acc: Option<Vec<f64>> = None;
        for (&c, &b) in self.nodes.iter().zip(&self.weights) {
            let value = g(c);
            match acc.as_mut() {
                None => acc = Some(value.iter().map(|v| b * v).collect()),
                Some(sum) => {
                    for (s, v) in sum.iter_mut().zip(&value) {
                        *s += b * v;
                    }
                }
            }
        }
        acc.unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::LegendreBasis;

    #[test]
    fn one_point_rule_is_exact_midpoint() {
        let rule = gauss_rule(1).unwrap();
        assert_eq!(rule.nodes(), &[0.5]);
        assert_eq!(rule.weights(), &[1.0]);
    }

    #[test]
    fn two_point_rule_frozen_values() {
        // Nodes are the roots of P_2 = sqrt(5)(6x^2 - 6x + 1); weights follow
        // from moment matching on degrees 0 and 1 with symmetric nodes:
        //   b1 + b2 = 1,  b1 c1 + b2 c2 = 1/2  =>  b1 = b2 = 1/2.
        let rule = gauss_rule(2).unwrap();
        let offset = 3.0_f64.sqrt() / 6.0;
        assert!((rule.nodes()[0] - (0.5 - offset)).abs() < 1e-15);
        assert!((rule.nodes()[1] - (0.5 + offset)).abs() < 1e-15);
        assert!((rule.weights()[0] - 0.5).abs() < 1e-15);
        assert!((rule.weights()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn odd_rules_have_exact_middle_node() {
        for k in [1, 3, 5, 7, 9] {
            let rule = gauss_rule(k).unwrap();
            assert_eq!(rule.nodes()[k / 2], 0.5);
        }
    }

    #[test]
    fn nodes_interior_and_increasing() {
        for k in 1..=20 {
            let rule = gauss_rule(k).unwrap();
            let nodes = rule.nodes();
            assert!(nodes[0] > 0.0 && nodes[k - 1] < 1.0);
            for i in 1..k {
                assert!(nodes[i] > nodes[i - 1]);
            }
            assert!(rule.weights().iter().all(|&b| b > 0.0));
        }
    }

    #[test]
    fn symmetry_and_weight_sum() {
        for k in 1..=20 {
            let rule = gauss_rule(k).unwrap();
            let (c, b) = (rule.nodes(), rule.weights());
            for i in 0..k {
                assert!((c[i] + c[k - 1 - i] - 1.0).abs() < 1e-15);
                assert_eq!(b[i], b[k - 1 - i]);
            }
            let total: f64 = b.iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exactness_sweep() {
        for k in 1..=10_usize {
            let rule = gauss_rule(k).unwrap();
            for d in 0..=(2 * k - 1) {
                let integral = rule.integrate(|x| x.powi(d as i32));
                let exact = 1.0 / (d as f64 + 1.0);
                assert!(
                    (integral - exact).abs() < 1e-13,
                    "k = {k}, degree {d}: {integral} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn nodes_are_roots_of_shifted_legendre() {
        for k in 1..=24_usize {
            let basis = LegendreBasis::new(k + 1).unwrap();
            let rule = gauss_rule(k).unwrap();
            for &c in rule.nodes() {
                let residual = basis.eval(c).unwrap()[k].abs();
                assert!(
                    residual < 1e-12,
                    "k = {k}, c = {c}: |P_k(c)| = {residual:.3e}"
                );
            }
        }
    }

    #[test]
    fn integrate_fn_examples() {
        let rule = gauss_rule(2).unwrap();
        assert!((rule.integrate(|x| x * x * x) - 0.25).abs() < 1e-15);

        let rule = gauss_rule(1).unwrap();
        assert_eq!(rule.integrate(|_| 1.0), 1.0);

        let rule = gauss_rule(5).unwrap();
        assert!((rule.integrate(|x| x.powi(9)) - 0.1).abs() < 1e-15);

        let rule = gauss_rule(3).unwrap();
        let v = rule.integrate_vec(|x| vec![1.0, x, x * x]);
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!((v[1] - 0.5).abs() < 1e-15);
        assert!((v[2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_node_counts() {
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(MAX_NODES + 1).is_err());
        assert!(gauss_rule(MAX_NODES).is_ok());
    }
}
