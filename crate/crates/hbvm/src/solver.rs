//! One-step solvers in the block-coefficient ("gamma") formulation.
//!
//! Instead of the k stage values, each step solves for the s projections
//! of the vector field onto the truncated Legendre basis, evaluated with
//! the k-point quadrature:
//!
//!   gamma_p = sum_j b_j P_p(c_j) f(argument at node j),   p = 0..s-1,
//!
//! where the node argument reconstructs the polynomial trajectory from
//! gamma.  The block dimension is s for every problem class and every
//! problem order, independently of k.  Updates at t = h only involve the
//! first rows of powers of X_s.

use crate::error::{Error, Result};
use crate::legendre::{build_spectral, xi, LegendreBasis, SpectralMatrices};
use crate::problems::{
    FirstOrderProblem, InitialData, KthOrderProblem, SecondOrderGeneralProblem,
    SecondOrderSpecialProblem,
};
use crate::tableau::DiscreteOperators;
use nalgebra::{DMatrix, DVector};

/// Block vector of s approximate Fourier coefficients, each of state
/// dimension m.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaVector {
    s: usize,
    dim: usize,
    data: Vec<f64>,
}

impl GammaVector {
    pub fn zeros(s: usize, dim: usize) -> Self {
        Self {
            s,
            dim,
            data: vec![0.0; s * dim],
        }
    }

    /// Pack `s` equally sized blocks into one vector.
    pub(crate) fn from_blocks(blocks: &[Vec<f64>]) -> Self {
        let s = blocks.len();
        let dim = blocks.first().map_or(0, Vec::len);
        Self {
            s,
            dim,
            data: blocks.concat(),
        }
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    fn block_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.data[p * self.dim..(p + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

/// Nonlinear iteration used for the gamma equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationScheme {
    /// Plain fixed-point iteration; contractive for small enough h.
    FixedPoint,
    /// Newton with the Jacobian frozen at the initial state.
    SimplifiedNewton,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Residual tolerance, relative to (max-norm of gamma) + 1.
    pub tol: f64,
    pub max_iters: usize,
    pub scheme: IterationScheme,
    /// Reuse the frozen-Jacobian factorization across steps of a run.
    pub jacobian_reuse: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iters: 100,
            scheme: IterationScheme::FixedPoint,
            jacobian_reuse: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Convergence report of one gamma solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Result of one step: the updated derivative levels plus diagnostics.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// y_1, and further derivative levels as the problem class requires.
    pub derivatives: Vec<Vec<f64>>,
    pub gamma: GammaVector,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl StepResult {
    fn new(derivatives: Vec<Vec<f64>>, gamma: GammaVector, stats: SolveStats) -> Self {
        Self {
            derivatives,
            gamma,
            iterations: stats.iterations,
            residual: stats.residual,
            converged: stats.converged,
        }
    }
}

/// Cached LU factorization of the simplified-Newton matrix.
#[derive(Debug)]
pub(crate) struct NewtonCache {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    size: usize,
}

impl NewtonCache {
    fn new(matrix: DMatrix<f64>) -> Self {
        let size = matrix.nrows();
        Self {
            lu: matrix.lu(),
            size,
        }
    }
}

/// One problem class, seen as the map gamma -> Phi(gamma) whose fixed
/// point solves the step.
trait GammaMap {
    fn s(&self) -> usize;
    fn dim(&self) -> usize;
    /// out = Phi(gamma).
    fn apply(&self, gamma: &GammaVector, out: &mut GammaVector) -> Result<()>;
    /// I - dPhi/dgamma with the problem Jacobian frozen at the step start.
    fn newton_matrix(&self) -> Result<DMatrix<f64>>;
}

fn max_abs_diff(a: &GammaVector, b: &GammaVector) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn check_finite(values: &[f64], node: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteField { node })
    }
}

/// Shared accumulation: out_p += b_j P_p(c_j) * f for every block p.
fn accumulate_projection(ops: &DiscreteOperators, node: usize, f: &[f64], out: &mut GammaVector) {
    let weight = ops.b[node];
    for p in 0..ops.s {
        let w = weight * ops.p_s[(node, p)];
        let block = out.block_mut(p);
        for (o, v) in block.iter_mut().zip(f) {
            *o += w * v;
        }
    }
}

fn iterate(
    map: &dyn GammaMap,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
    cache: &mut Option<NewtonCache>,
) -> Result<(GammaVector, SolveStats)> {
    cfg.validate()?;
    let (s, m) = (map.s(), map.dim());
    let mut gamma = match guess {
        Some(g) => {
            if g.s() != s || g.dim() != m {
                return Err(Error::invalid(format!(
                    "initial guess has shape ({}, {}), expected ({s}, {m})",
                    g.s(),
                    g.dim()
                )));
            }
            g.clone()
        }
        None => GammaVector::zeros(s, m),
    };
    match cfg.scheme {
        IterationScheme::FixedPoint => {
            let mut next = GammaVector::zeros(s, m);
            let mut residual = f64::INFINITY;
            for iter in 1..=cfg.max_iters {
                map.apply(&gamma, &mut next)?;
                residual = max_abs_diff(&gamma, &next);
                std::mem::swap(&mut gamma, &mut next);
                let threshold = cfg.tol * (1.0 + gamma.max_norm());
                if residual <= threshold {
                    return Ok((
                        gamma,
                        SolveStats {
                            iterations: iter,
                            residual,
                            converged: true,
                        },
                    ));
                }
            }
            Err(Error::NonConvergence {
                iterations: cfg.max_iters,
                residual,
                last: gamma,
            })
        }
        IterationScheme::SimplifiedNewton => {
            if cache.as_ref().map(|c| c.size != s * m).unwrap_or(true) {
                *cache = Some(NewtonCache::new(map.newton_matrix()?));
            }
            let lu = &cache.as_ref().expect("cache just filled").lu;
            let mut phi = GammaVector::zeros(s, m);
            let mut residual = f64::INFINITY;
            for iter in 1..=cfg.max_iters {
                map.apply(&gamma, &mut phi)?;
                let rhs = DVector::from_iterator(
                    s * m,
                    phi.data.iter().zip(&gamma.data).map(|(p, g)| p - g),
                );
                residual = rhs.amax();
                let delta = lu.solve(&rhs).ok_or(Error::SingularNewtonMatrix)?;
                let increment = delta.amax();
                for (g, d) in gamma.data.iter_mut().zip(delta.iter()) {
                    *g += d;
                }
                let threshold = cfg.tol * (1.0 + gamma.max_norm());
                if residual <= threshold && increment <= threshold {
                    return Ok((
                        gamma,
                        SolveStats {
                            iterations: iter,
                            residual,
                            converged: true,
                        },
                    ));
                }
            }
            Err(Error::NonConvergence {
                iterations: cfg.max_iters,
                residual,
                last: gamma,
            })
        }
    }
}

/// Forward-difference Jacobian of an m-dimensional field.
fn numeric_jacobian<F: Fn(&[f64], &mut [f64])>(eval: F, at: &[f64]) -> DMatrix<f64> {
    let m = at.len();
    let mut base = vec![0.0; m];
    eval(at, &mut base);
    let mut jac = DMatrix::zeros(m, m);
    let mut shifted = at.to_vec();
    let mut column = vec![0.0; m];
    for i in 0..m {
        let step = f64::EPSILON.sqrt() * (1.0 + at[i].abs());
        shifted[i] = at[i] + step;
        eval(&shifted, &mut column);
        shifted[i] = at[i];
        for r in 0..m {
            jac[(r, i)] = (column[r] - base[r]) / step;
        }
    }
    jac
}

pub(crate) fn check_step_size(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "step size h must be positive, got {h}"
        )))
    }
}

fn check_dim(name: &str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} has dimension {got}, expected {expected}"
        )))
    }
}

// ---------------------------------------------------------------------------
// First-order problems: dy/dt = f(y)
// ---------------------------------------------------------------------------

struct FirstOrderMap<'a> {
    problem: &'a FirstOrderProblem,
    y0: &'a [f64],
    h: f64,
    ops: &'a DiscreteOperators,
}

impl GammaMap for FirstOrderMap<'_> {
    fn s(&self) -> usize {
        self.ops.s
    }

    fn dim(&self) -> usize {
        self.problem.dim
    }

    fn apply(&self, gamma: &GammaVector, out: &mut GammaVector) -> Result<()> {
        out.data.fill(0.0);
        let m = self.problem.dim;
        let mut arg = vec![0.0; m];
        let mut f = vec![0.0; m];
        for j in 0..self.ops.k {
            arg.copy_from_slice(self.y0);
            for p in 0..self.ops.s {
                let w = self.h * self.ops.i_s[(j, p)];
                for (a, g) in arg.iter_mut().zip(gamma.block(p)) {
                    *a += w * g;
                }
            }
            self.problem.eval(&arg, &mut f);
            check_finite(&f, j)?;
            accumulate_projection(self.ops, j, &f, out);
        }
        Ok(())
    }

    fn newton_matrix(&self) -> Result<DMatrix<f64>> {
        let spectral = build_spectral(self.ops.s)?;
        let jac = numeric_jacobian(|y, out| self.problem.eval(y, out), self.y0);
        let n = self.ops.s * self.problem.dim;
        Ok(DMatrix::identity(n, n) - spectral.x.kronecker(&jac) * self.h)
    }
}

pub(crate) fn step_1st_impl(
    problem: &FirstOrderProblem,
    y0: &[f64],
    h: f64,
    ops: &DiscreteOperators,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
    cache: &mut Option<NewtonCache>,
) -> Result<StepResult> {
    check_step_size(h)?;
    check_dim("y0", y0.len(), problem.dim)?;
    let map = FirstOrderMap {
        problem,
        y0,
        h,
        ops,
    };
    let (gamma, stats) = iterate(&map, cfg, guess, cache)?;
    let y1: Vec<f64> = y0
        .iter()
        .zip(gamma.block(0))
        .map(|(y, g)| y + h * g)
        .collect();
    Ok(StepResult::new(vec![y1], gamma, stats))
}

/// Solve the gamma equation for a first-order problem.
pub fn solve_gamma_1st(
    problem: &FirstOrderProblem,
    y0: &[f64],
    h: f64,
    ops: &DiscreteOperators,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
) -> Result<(GammaVector, SolveStats)> {
    check_step_size(h)?;
    check_dim("y0", y0.len(), problem.dim)?;
    let map = FirstOrderMap {
        problem,
        y0,
        h,
        ops,
    };
    iterate(&map, cfg, guess, &mut None)
}

/// One step of HBVM(k, s) on a first-order problem: y_1 = y_0 + h gamma_0.
pub fn step_1st(
    problem: &FirstOrderProblem,
    y0: &[f64],
    h: f64,
    ops: &DiscreteOperators,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    step_1st_impl(problem, y0, h, ops, cfg, None, &mut None)
}

// ---------------------------------------------------------------------------
// Special second-order problems: d2y/dt2 = f(y)
// ---------------------------------------------------------------------------

struct SecondSpecialMap<'a> {
    problem: &'a SecondOrderSpecialProblem,
    y0: &'a [f64],
    v0: &'a [f64],
    h: f64,
    ops: &'a DiscreteOperators,
    /// I_s X_s, sampled at the nodes.
    ix: DMatrix<f64>,
    spectral: &'a SpectralMatrices,
}

impl GammaMap for SecondSpecialMap<'_> {
    fn s(&self) -> usize {
        self.ops.s
    }

    fn dim(&self) -> usize {
        self.problem.dim
    }

    fn apply(&self, gamma: &GammaVector, out: &mut GammaVector) -> Result<()> {
        out.data.fill(0.0);
        let m = self.problem.dim;
        let h2 = self.h * self.h;
        let mut arg = vec![0.0; m];
        let mut f = vec![0.0; m];
        for j in 0..self.ops.k {
            let ch = self.ops.c[j] * self.h;
            for d in 0..m {
                arg[d] = self.y0[d] + ch * self.v0[d];
            }
            for p in 0..self.ops.s {
                let w = h2 * self.ix[(j, p)];
                for (a, g) in arg.iter_mut().zip(gamma.block(p)) {
                    *a += w * g;
                }
            }
            self.problem.eval(&arg, &mut f);
            check_finite(&f, j)?;
            accumulate_projection(self.ops, j, &f, out);
        }
        Ok(())
    }

    fn newton_matrix(&self) -> Result<DMatrix<f64>> {
        let jac = numeric_jacobian(|y, out| self.problem.eval(y, out), self.y0);
        let x2 = &self.spectral.x * &self.spectral.x;
        let n = self.ops.s * self.problem.dim;
        Ok(DMatrix::identity(n, n) - x2.kronecker(&jac) * (self.h * self.h))
    }
}

/// Position/velocity update shared by the second-order classes:
/// v_1 = v_0 + h gamma_0, y_1 = y_0 + h v_0 + h^2 (xi_0 gamma_0 - xi_1 gamma_1),
/// with the gamma_1 term absent for s = 1.
fn second_order_update(y0: &[f64], v0: &[f64], h: f64, gamma: &GammaVector) -> Vec<Vec<f64>> {
    let m = y0.len();
    let h2 = h * h;
    let mut y1 = vec![0.0; m];
    let mut v1 = vec![0.0; m];
    for d in 0..m {
        let mut spectral_part = xi(0) * gamma.block(0)[d];
        if gamma.s() > 1 {
            spectral_part -= xi(1) * gamma.block(1)[d];
        }
        y1[d] = y0[d] + h * v0[d] + h2 * spectral_part;
        v1[d] = v0[d] + h * gamma.block(0)[d];
    }
    vec![y1, v1]
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step_2nd_special_impl(
    problem: &SecondOrderSpecialProblem,
    y0: &[f64],
    v0: &[f64],
    h: f64,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
    cache: &mut Option<NewtonCache>,
) -> Result<StepResult> {
    check_step_size(h)?;
    check_dim("y0", y0.len(), problem.dim)?;
    check_dim("v0", v0.len(), problem.dim)?;
    check_dim("spectral matrices", spectral.s, ops.s)?;
    let map = SecondSpecialMap {
        problem,
        y0,
        v0,
        h,
        ops,
        ix: &ops.i_s * &spectral.x,
        spectral,
    };
    let (gamma, stats) = iterate(&map, cfg, guess, cache)?;
    let derivatives = second_order_update(y0, v0, h, &gamma);
    Ok(StepResult::new(derivatives, gamma, stats))
}

/// Solve the gamma equation for a special second-order problem.
#[allow(clippy::too_many_arguments)]
pub fn solve_gamma_2nd_special(
    problem: &SecondOrderSpecialProblem,
    y0: &[f64],
    v0: &[f64],
    h: f64,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
) -> Result<(GammaVector, SolveStats)> {
    check_step_size(h)?;
    check_dim("y0", y0.len(), problem.dim)?;
    check_dim("v0", v0.len(), problem.dim)?;
    check_dim("spectral matrices", spectral.s, ops.s)?;
    let map = SecondSpecialMap {
        problem,
        y0,
        v0,
        h,
        ops,
        ix: &ops.i_s * &spectral.x,
        spectral,
    };
    iterate(&map, cfg, guess, &mut None)
}

/// One Runge-Kutta-Nystrom step of HBVM(k, s) on d2y/dt2 = f(y).
pub fn step_2nd_special(
    problem: &SecondOrderSpecialProblem,
    y0: &[f64],
    v0: &[f64],
    h: f64,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    step_2nd_special_impl(problem, y0, v0, h, ops, spectral, cfg, None, &mut None)
}

// ---------------------------------------------------------------------------
// General second-order problems: d2y/dt2 = f(y, y')
// ---------------------------------------------------------------------------

struct SecondGeneralMap<'a> {
    problem: &'a SecondOrderGeneralProblem,
    y0: &'a [f64],
    v0: &'a [f64],
    h: f64,
    ops: &'a DiscreteOperators,
    ix: DMatrix<f64>,
    spectral: &'a SpectralMatrices,
}

impl GammaMap for SecondGeneralMap<'_> {
    fn s(&self) -> usize {
        self.ops.s
    }

    fn dim(&self) -> usize {
        self.problem.dim
    }

    fn apply(&self, gamma: &GammaVector, out: &mut GammaVector) -> Result<()> {
        out.data.fill(0.0);
        let m = self.problem.dim;
        let h2 = self.h * self.h;
        let mut pos = vec![0.0; m];
        let mut vel = vec![0.0; m];
        let mut f = vec![0.0; m];
        for j in 0..self.ops.k {
            let ch = self.ops.c[j] * self.h;
            for d in 0..m {
                pos[d] = self.y0[d] + ch * self.v0[d];
                vel[d] = self.v0[d];
            }
            for p in 0..self.ops.s {
                let wy = h2 * self.ix[(j, p)];
                let wv = self.h * self.ops.i_s[(j, p)];
                let block = gamma.block(p);
                for d in 0..m {
                    pos[d] += wy * block[d];
                    vel[d] += wv * block[d];
                }
            }
            self.problem.eval(&pos, &vel, &mut f);
            check_finite(&f, j)?;
            accumulate_projection(self.ops, j, &f, out);
        }
        Ok(())
    }

    fn newton_matrix(&self) -> Result<DMatrix<f64>> {
        let jac_y = numeric_jacobian(|y, out| self.problem.eval(y, self.v0, out), self.y0);
        let jac_v = numeric_jacobian(|v, out| self.problem.eval(self.y0, v, out), self.v0);
        let x2 = &self.spectral.x * &self.spectral.x;
        let n = self.ops.s * self.problem.dim;
        Ok(DMatrix::identity(n, n)
            - x2.kronecker(&jac_y) * (self.h * self.h)
            - self.spectral.x.kronecker(&jac_v) * self.h)
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step_2nd_general_impl(
    problem: &SecondOrderGeneralProblem,
    y0: &[f64],
    v0: &[f64],
    h: f64,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
    cache: &mut Option<NewtonCache>,
) -> Result<StepResult> {
    check_step_size(h)?;
    check_dim("y0", y0.len(), problem.dim)?;
    check_dim("v0", v0.len(), problem.dim)?;
    check_dim("spectral matrices", spectral.s, ops.s)?;
    let map = SecondGeneralMap {
        problem,
        y0,
        v0,
        h,
        ops,
        ix: &ops.i_s * &spectral.x,
        spectral,
    };
    let (gamma, stats) = iterate(&map, cfg, guess, cache)?;
    let derivatives = second_order_update(y0, v0, h, &gamma);
    Ok(StepResult::new(derivatives, gamma, stats))
}

/// Solve the gamma equation for a general second-order problem.  The block
/// dimension is the same s as in the special case.
#[allow(clippy::too_many_arguments)]
pub fn solve_gamma_2nd_general(
    problem: &SecondOrderGeneralProblem,
    y0: &[f64],
    v0: &[f64],
    h: f64,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
) -> Result<(GammaVector, SolveStats)> {
    check_step_size(h)?;
    check_dim("y0", y0.len(), problem.dim)?;
    check_dim("v0", v0.len(), problem.dim)?;
    check_dim("spectral matrices", spectral.s, ops.s)?;
    let map = SecondGeneralMap {
        problem,
        y0,
        v0,
        h,
        ops,
        ix: &ops.i_s * &spectral.x,
        spectral,
    };
    iterate(&map, cfg, guess, &mut None)
}

/// One step of HBVM(k, s) on d2y/dt2 = f(y, y').
pub fn step_2nd_general(
    problem: &SecondOrderGeneralProblem,
    y0: &[f64],
    v0: &[f64],
    h: f64,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    step_2nd_general_impl(problem, y0, v0, h, ops, spectral, cfg, None, &mut None)
}

// ---------------------------------------------------------------------------
// General k-th order problems
// ---------------------------------------------------------------------------

/// Update coefficients for an order-k problem: row p holds the first p + 1
/// entries of the first row of X_s^p (the remaining entries are zero).
#[derive(Debug, Clone)]
pub struct KthOrderUpdateCoeffs {
    pub order: usize,
    rows: Vec<Vec<f64>>,
}

impl KthOrderUpdateCoeffs {
    /// First row of X_s^p, truncated to its p + 1 nonzero entries.
    pub fn row(&self, p: usize) -> &[f64] {
        &self.rows[p]
    }
}

/// Compute the update coefficients; requires s >= order so every
/// referenced entry exists.
pub fn kth_update_coeffs(
    spectral: &SpectralMatrices,
    order: usize,
) -> Result<KthOrderUpdateCoeffs> {
    if order == 0 {
        return Err(Error::invalid("problem order must be at least 1"));
    }
    if spectral.s < order {
        return Err(Error::invalid(format!(
            "s must be >= problem order (got s = {}, order = {order})",
            spectral.s
        )));
    }
    let mut rows = vec![vec![1.0]];
    let mut lead = DVector::zeros(spectral.s);
    lead[0] = 1.0;
    for p in 1..order {
        lead = spectral.x.transpose() * lead;
        rows.push(lead.iter().take(p + 1).copied().collect());
    }
    Ok(KthOrderUpdateCoeffs { order, rows })
}

struct KthMap<'a> {
    problem: &'a KthOrderProblem,
    init: &'a [Vec<f64>],
    h: f64,
    ops: &'a DiscreteOperators,
    /// ix_pow[d] = I_s X_s^d at the nodes.
    ix_pow: Vec<DMatrix<f64>>,
    spectral: &'a SpectralMatrices,
}

impl KthMap<'_> {
    fn node_levels(&self, j: usize, gamma: &GammaVector, levels: &mut [Vec<f64>]) {
        let m = self.problem.dim;
        let order = self.problem.order;
        let ch = self.ops.c[j] * self.h;
        for (i, level) in levels.iter_mut().enumerate() {
            // Taylor polynomial of the initial data...
            let mut coeff = 1.0;
            level.copy_from_slice(&self.init[i]);
            for l in 1..order - i {
                coeff *= ch / l as f64;
                for d in 0..m {
                    level[d] += coeff * self.init[l + i][d];
                }
            }
            // ...plus the spectral correction of order h^(order - i).
            let hp = self.h.powi((order - i) as i32);
            let ix = &self.ix_pow[order - 1 - i];
            for p in 0..self.ops.s {
                let w = hp * ix[(j, p)];
                for (lv, g) in level.iter_mut().zip(gamma.block(p)) {
                    *lv += w * g;
                }
            }
        }
    }
}

impl GammaMap for KthMap<'_> {
    fn s(&self) -> usize {
        self.ops.s
    }

    fn dim(&self) -> usize {
        self.problem.dim
    }

    fn apply(&self, gamma: &GammaVector, out: &mut GammaVector) -> Result<()> {
        out.data.fill(0.0);
        let m = self.problem.dim;
        let mut levels = vec![vec![0.0; m]; self.problem.order];
        let mut f = vec![0.0; m];
        for j in 0..self.ops.k {
            self.node_levels(j, gamma, &mut levels);
            self.problem.eval(&levels, &mut f);
            check_finite(&f, j)?;
            accumulate_projection(self.ops, j, &f, out);
        }
        Ok(())
    }

    fn newton_matrix(&self) -> Result<DMatrix<f64>> {
        let m = self.problem.dim;
        let order = self.problem.order;
        let n = self.ops.s * m;
        let mut matrix = DMatrix::identity(n, n);
        let mut x_pow = DMatrix::identity(self.spectral.s, self.spectral.s);
        // Level i enters through h^(order - i) X^(order - i) (x) J_i.
        for i in (0..order).rev() {
            x_pow = &x_pow * &self.spectral.x;
            let jac = numeric_jacobian(
                |level, out| {
                    let mut levels = self.init.to_vec();
                    levels[i] = level.to_vec();
                    self.problem.eval(&levels, out)
                },
                &self.init[i],
            );
            matrix -= x_pow.kronecker(&jac) * self.h.powi((order - i) as i32);
        }
        Ok(matrix)
    }
}

fn check_kth_preconditions(
    problem: &KthOrderProblem,
    init: &InitialData,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
) -> Result<()> {
    check_dim("spectral matrices", spectral.s, ops.s)?;
    if ops.s < problem.order {
        return Err(Error::invalid(format!(
            "s must be >= problem order (got s = {}, order = {})",
            ops.s, problem.order
        )));
    }
    if init.order() != problem.order {
        return Err(Error::invalid(format!(
            "initial data supplies {} derivative levels, problem order is {}",
            init.order(),
            problem.order
        )));
    }
    for (i, level) in init.derivatives.iter().enumerate() {
        check_dim("initial derivative level", level.len(), problem.dim)?;
        let _ = i;
    }
    Ok(())
}

fn ix_powers(
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    order: usize,
) -> Vec<DMatrix<f64>> {
    let mut pow = Vec::with_capacity(order);
    pow.push(ops.i_s.clone());
    for d in 1..order {
        let next = &pow[d - 1] * &spectral.x;
        pow.push(next);
    }
    pow
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step_kth_impl(
    problem: &KthOrderProblem,
    init: &InitialData,
    h: f64,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
    cache: &mut Option<NewtonCache>,
) -> Result<StepResult> {
    check_step_size(h)?;
    check_kth_preconditions(problem, init, ops, spectral)?;
    let map = KthMap {
        problem,
        init: &init.derivatives,
        h,
        ops,
        ix_pow: ix_powers(ops, spectral, problem.order),
        spectral,
    };
    let (gamma, stats) = iterate(&map, cfg, guess, cache)?;
    let coeffs = kth_update_coeffs(spectral, problem.order)?;
    let m = problem.dim;
    let order = problem.order;
    let mut derivatives = Vec::with_capacity(order);
    for i in 0..order {
        let mut level = init.derivatives[i].clone();
        let mut coeff = 1.0;
        for l in 1..order - i {
            coeff *= h / l as f64;
            for d in 0..m {
                level[d] += coeff * init.derivatives[l + i][d];
            }
        }
        let hp = h.powi((order - i) as i32);
        let row = coeffs.row(order - 1 - i);
        for (j, &w) in row.iter().enumerate() {
            for d in 0..m {
                level[d] += hp * w * gamma.block(j)[d];
            }
        }
        derivatives.push(level);
    }
    Ok(StepResult::new(derivatives, gamma, stats))
}

/// Solve the gamma equation for an order-k problem; requires s >= order.
pub fn solve_gamma_kth(
    problem: &KthOrderProblem,
    init: &InitialData,
    h: f64,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
) -> Result<(GammaVector, SolveStats)> {
    check_step_size(h)?;
    check_kth_preconditions(problem, init, ops, spectral)?;
    let map = KthMap {
        problem,
        init: &init.derivatives,
        h,
        ops,
        ix_pow: ix_powers(ops, spectral, problem.order),
        spectral,
    };
    iterate(&map, cfg, guess, &mut None)
}

/// One step of HBVM(k, s) on an order-k problem.
pub fn step_kth(
    problem: &KthOrderProblem,
    init: &InitialData,
    h: f64,
    ops: &DiscreteOperators,
    spectral: &SpectralMatrices,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    step_kth_impl(problem, init, h, ops, spectral, cfg, None, &mut None)
}

// ---------------------------------------------------------------------------
// Dense output
// ---------------------------------------------------------------------------

/// The degree-s polynomial trajectory of one step, evaluable anywhere on
/// the step via sigma^(i)(c h).
#[derive(Debug, Clone)]
pub struct DenseOutput {
    init: Vec<Vec<f64>>,
    h: f64,
    gamma: GammaVector,
    spectral: SpectralMatrices,
}

/// Package a solved step for dense evaluation.  `init` holds the step's
/// initial derivative levels (one for first-order problems, two for
/// second-order ones, and so on).
pub fn dense_output(
    init: Vec<Vec<f64>>,
    h: f64,
    gamma: GammaVector,
    spectral: SpectralMatrices,
) -> Result<DenseOutput> {
    check_step_size(h)?;
    if init.is_empty() {
        return Err(Error::invalid(
            "dense output needs at least one derivative level",
        ));
    }
    check_dim("spectral matrices", spectral.s, gamma.s())?;
    for level in &init {
        check_dim("initial derivative level", level.len(), gamma.dim())?;
    }
    Ok(DenseOutput {
        init,
        h,
        gamma,
        spectral,
    })
}

impl DenseOutput {
    pub fn order(&self) -> usize {
        self.init.len()
    }

    /// All derivative levels of the polynomial trajectory at c in [0, 1].
    /// Evaluation at c = 0 reproduces the initial data exactly.
    pub fn eval(&self, c: f64) -> Result<Vec<Vec<f64>>> {
        let s = self.spectral.s;
        let m = self.gamma.dim();
        let order = self.order();
        let basis = LegendreBasis::new(s)?;
        let ints = basis.integrals(c)?;
        // weights[d] = (X^T)^d I_s(c), so that weights[d] . gamma_blocks
        // equals I_s(c)' X^d gamma.
        let mut weights = vec![DVector::from_vec(ints)];
        for d in 1..order {
            let next = self.spectral.x.transpose() * &weights[d - 1];
            weights.push(next);
        }
        let ch = c * self.h;
        let mut levels = Vec::with_capacity(order);
        for i in 0..order {
            let mut value = self.init[i].clone();
            let mut coeff = 1.0;
            for l in 1..order - i {
                coeff *= ch / l as f64;
                for d in 0..m {
                    value[d] += coeff * self.init[l + i][d];
                }
            }
            let hp = self.h.powi((order - i) as i32);
            let w = &weights[order - 1 - i];
            for p in 0..s {
                let wp = hp * w[p];
                for (v, g) in value.iter_mut().zip(self.gamma.block(p)) {
                    *v += wp * g;
                }
            }
            levels.push(value);
        }
        Ok(levels)
    }
}
