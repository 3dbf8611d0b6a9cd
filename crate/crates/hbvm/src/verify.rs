//! Independent oracle paths used to cross-validate the gamma formulation.
//!
//! The steppers here work directly on the k-stage tableau systems, the
//! Gauss collocation tableau is rebuilt from Lagrange interpolation, and
//! the Nystrom kernel is checked against brute-force quadrature of the
//! iterated kernel.  None of this shares code with the solver module
//! beyond the quadrature rule, so agreement is evidence rather than
//! tautology.

use crate::error::{Error, Result};
use crate::problems::{FirstOrderProblem, SecondOrderSpecialProblem};
use crate::quadrature::gauss_rule;
use crate::solver::{check_step_size, SolveStats, SolverConfig};
use crate::tableau::{rk_kernel, rkn_kernel, RKNTableau, RKTableau};

/// Updated (position, velocity) pair of one Nystrom step.
pub type SecondOrderUpdate = (Vec<f64>, Vec<f64>);
use nalgebra::{DMatrix, DVector};

fn check_finite(values: &[f64], node: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteField { node })
    }
}

/// One step of the k-stage Runge-Kutta system
/// Y_i = y0 + h sum_j A_ij f(Y_j), y1 = y0 + h sum_i b_i f(Y_i),
/// solved by fixed-point iteration.
pub fn stage_step_1st(
    problem: &FirstOrderProblem,
    y0: &[f64],
    h: f64,
    tableau: &RKTableau,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    check_step_size(h)?;
    let k = tableau.c.len();
    let m = problem.dim;
    let mut stages = vec![y0.to_vec(); k];
    let mut f = vec![vec![0.0; m]; k];
    let mut stats = None;
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.max_iters {
        for j in 0..k {
            problem.eval(&stages[j], &mut f[j]);
            check_finite(&f[j], j)?;
        }
        residual = 0.0;
        let mut scale = 0.0_f64;
        for i in 0..k {
            for d in 0..m {
                let mut value = y0[d];
                for j in 0..k {
                    value += h * tableau.a[(i, j)] * f[j][d];
                }
                residual = residual.max((value - stages[i][d]).abs());
                stages[i][d] = value;
                scale = scale.max(value.abs());
            }
        }
        if residual <= cfg.tol * (1.0 + scale) {
            stats = Some(SolveStats {
                iterations: iter,
                residual,
                converged: true,
            });
            break;
        }
    }
    let stats = stats.ok_or_else(|| Error::NonConvergence {
        iterations: cfg.max_iters,
        residual,
        last: crate::solver::GammaVector::from_blocks(&stages),
    })?;
    // Final update from the converged stages.
    for j in 0..k {
        problem.eval(&stages[j], &mut f[j]);
        check_finite(&f[j], j)?;
    }
    let mut y1 = y0.to_vec();
    for (i, fi) in f.iter().enumerate() {
        for d in 0..m {
            y1[d] += h * tableau.b[i] * fi[d];
        }
    }
    Ok((y1, stats))
}

/// One step of the k-stage Runge-Kutta-Nystrom system
/// Y_i = y0 + c_i h v0 + h^2 sum_j Abar_ij f(Y_j),
/// v1 = v0 + h sum b_i f(Y_i), y1 = y0 + h v0 + h^2 sum bbar_i f(Y_i).
pub fn stage_step_2nd(
    problem: &SecondOrderSpecialProblem,
    y0: &[f64],
    v0: &[f64],
    h: f64,
    tableau: &RKNTableau,
    cfg: &SolverConfig,
) -> Result<(SecondOrderUpdate, SolveStats)> {
    check_step_size(h)?;
    let k = tableau.c.len();
    let m = problem.dim;
    let h2 = h * h;
    let mut stages: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..m).map(|d| y0[d] + tableau.c[i] * h * v0[d]).collect())
        .collect();
    let mut f = vec![vec![0.0; m]; k];
    let mut stats = None;
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.max_iters {
        for j in 0..k {
            problem.eval(&stages[j], &mut f[j]);
            check_finite(&f[j], j)?;
        }
        residual = 0.0;
        let mut scale = 0.0_f64;
        for i in 0..k {
            for d in 0..m {
                let mut value = y0[d] + tableau.c[i] * h * v0[d];
                for j in 0..k {
                    value += h2 * tableau.abar[(i, j)] * f[j][d];
                }
                residual = residual.max((value - stages[i][d]).abs());
                stages[i][d] = value;
                scale = scale.max(value.abs());
            }
        }
        if residual <= cfg.tol * (1.0 + scale) {
            stats = Some(SolveStats {
                iterations: iter,
                residual,
                converged: true,
            });
            break;
        }
    }
    let stats = stats.ok_or_else(|| Error::NonConvergence {
        iterations: cfg.max_iters,
        residual,
        last: crate::solver::GammaVector::from_blocks(&stages),
    })?;
    for j in 0..k {
        problem.eval(&stages[j], &mut f[j]);
        check_finite(&f[j], j)?;
    }
    let mut y1 = vec![0.0; m];
    let mut v1 = vec![0.0; m];
    for d in 0..m {
        y1[d] = y0[d] + h * v0[d];
        v1[d] = v0[d];
        for i in 0..k {
            y1[d] += h2 * tableau.bbar[i] * f[i][d];
            v1[d] += h * tableau.b[i] * f[i][d];
        }
    }
    Ok(((y1, v1), stats))
}

/// The s-stage Gauss collocation tableau from first principles:
/// A_ij = int_0^{c_i} l_j(t) dt with l_j the Lagrange basis on the Gauss
/// nodes, expanded into monomials and integrated analytically.
pub fn gauss_collocation_oracle(s: usize) -> Result<RKTableau> {
    if !(1..=3).contains(&s) {
        return Err(Error::invalid(format!(
            "collocation oracle supports s in 1..=3, got {s}"
        )));
    }
    let rule = gauss_rule(s)?;
    let nodes = rule.nodes();
    let mut a = DMatrix::zeros(s, s);
    let mut b = DVector::zeros(s);
    for j in 0..s {
        // Monomial coefficients of l_j.
        let mut coeffs = vec![1.0_f64];
        for (l, &node) in nodes.iter().enumerate() {
            if l == j {
                continue;
            }
            let denominator = nodes[j] - node;
            let mut next = vec![0.0; coeffs.len() + 1];
            for (d, &cd) in coeffs.iter().enumerate() {
                next[d] -= cd * node / denominator;
                next[d + 1] += cd / denominator;
            }
            coeffs = next;
        }
        for (d, &cd) in coeffs.iter().enumerate() {
            b[j] += cd / (d as f64 + 1.0);
        }
        for i in 0..s {
            let mut acc = 0.0;
            for (d, &cd) in coeffs.iter().enumerate() {
                acc += cd * nodes[i].powi(d as i32 + 1) / (d as f64 + 1.0);
            }
            a[(i, j)] = acc;
        }
    }
    Ok(RKTableau {
        a,
        b,
        c: DVector::from_column_slice(nodes),
    })
}

/// Max deviation of abar_s(c, tau) from the quadrature of the iterated
/// kernel int_0^1 a_s(c, u) a_s(u, tau) du over an n x n grid of [0, 1]^2.
/// The integral uses a 2s-point rule, exact for the degree 2s - 2
/// integrand.
pub fn kernel_quadrature_check(s: usize, grid: usize) -> Result<f64> {
    if s == 0 || s > 6 {
        return Err(Error::invalid("kernel check supports 1 <= s <= 6"));
    }
    if grid < 2 {
        return Err(Error::invalid("grid needs at least 2 points"));
    }
    let rule = gauss_rule(2 * s)?;
    let mut worst = 0.0_f64;
    for i in 0..grid {
        let c = i as f64 / (grid - 1) as f64;
        for j in 0..grid {
            let tau = j as f64 / (grid - 1) as f64;
            let direct = rkn_kernel(s, c, tau)?;
            let mut iterated = 0.0;
            for (&u, &w) in rule.nodes().iter().zip(rule.weights()) {
                iterated += w * rk_kernel(s, c, u)? * rk_kernel(s, u, tau)?;
            }
            worst = worst.max((direct - iterated).abs());
        }
    }
    Ok(worst)
}
