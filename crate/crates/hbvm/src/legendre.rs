//! Orthonormal shifted Legendre polynomials on [0, 1].
//!
//! The basis P_0, P_1, ... satisfies int_0^1 P_i(x) P_j(x) dx = delta_ij,
//! with the sign fixed by positive leading coefficients, so that
//! P_j(1) = sqrt(2j + 1).  Antiderivatives couple neighbouring polynomials
//! through the coefficients xi_i = 1/(2 sqrt(|4 i^2 - 1|)):
//!
//!   int_0^c P_0 = xi_0 P_0(c) + xi_1 P_1(c),
//!   int_0^c P_j = xi_{j+1} P_{j+1}(c) - xi_j P_{j-1}(c),   j >= 1.
//!
//! Collecting these columns gives the (s+1) x s matrix `X̂_s` and its top
//! s x s block `X_s`, which represent integration in coefficient space.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Legendre integration coefficient xi_i = 1/(2 sqrt(|4 i^2 - 1|)).
pub fn xi(i: usize) -> f64 {
    let i = i as f64;
    1.0 / (2.0 * (4.0 * i * i - 1.0).abs().sqrt())
}

fn check_unit_interval(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfDomain { what, value })
    }
}

/// Evaluator of the first `r` orthonormal shifted Legendre polynomials.
#[derive(Debug, Clone, Copy)]
pub struct LegendreBasis {
    r: usize,
}

impl LegendreBasis {
    /// Basis P_0 .. P_{r-1}.
    pub fn new(r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::invalid("basis size r must be at least 1"));
        }
        Ok(Self { r })
    }

    /// Number of polynomials in the basis.
    pub fn len(&self) -> usize {
        self.r
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Values (P_0(x), ..., P_{r-1}(x)) via the three-term recurrence.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        check_unit_interval("x", x)?;
        Ok(eval_unchecked(self.r, x))
    }

    /// Antiderivatives (int_0^c P_0, ..., int_0^c P_{r-1}).
    ///
    /// Computed from the columns of `X̂_r`, so the evaluation path is the
    /// one the spectral matrices describe.  At c = 0 the result is an exact
    /// zero vector.
    pub fn integrals(&self, c: f64) -> Result<Vec<f64>> {
        check_unit_interval("c", c)?;
        if c == 0.0 {
            return Ok(vec![0.0; self.r]);
        }
        let p = eval_unchecked(self.r + 1, c);
        let mut out = Vec::with_capacity(self.r);
        out.push(xi(0) * p[0] + xi(1) * p[1]);
        for j in 1..self.r {
            out.push(xi(j + 1) * p[j + 1] - xi(j) * p[j - 1]);
        }
        Ok(out)
    }
}

/// Recurrence kernel; `x` must already be inside [0, 1].
///
/// P_0 = 1, P_1 = sqrt(3) (2x - 1), and with t = 2x - 1:
///   (j+1)/sqrt(2j+3) P_{j+1} = sqrt(2j+1) t P_j - j/sqrt(2j-1) P_{j-1}.
pub(crate) fn eval_unchecked(r: usize, x: f64) -> Vec<f64> {
    let t = 2.0 * x - 1.0;
    let mut p = Vec::with_capacity(r);
    p.push(1.0);
    if r == 1 {
        return p;
    }
    p.push(3.0_f64.sqrt() * t);
    for j in 1..r - 1 {
        let jf = j as f64;
        let next = (2.0 * jf + 3.0).sqrt() / (jf + 1.0)
            * ((2.0 * jf + 1.0).sqrt() * t * p[j] - jf / (2.0 * jf - 1.0).sqrt() * p[j - 1]);
        p.push(next);
    }
    p
}

/// The integration coefficients and matrices for a degree-s truncation.
#[derive(Debug, Clone)]
pub struct SpectralMatrices {
    pub s: usize,
    /// xi_0 .. xi_s.
    pub xi: Vec<f64>,
    /// s x s top block of `x_hat`.
    pub x: DMatrix<f64>,
    /// (s+1) x s matrix whose column j holds the expansion of int_0^c P_j.
    pub x_hat: DMatrix<f64>,
}

/// Build `X_s` and `X̂_s` for a truncation degree s >= 1.
pub fn build_spectral(s: usize) -> Result<SpectralMatrices> {
    if s == 0 {
        return Err(Error::invalid("truncation degree s must be at least 1"));
    }
    let xis: Vec<f64> = (0..=s).map(xi).collect();
    let mut x_hat = DMatrix::zeros(s + 1, s);
    x_hat[(0, 0)] = xis[0];
    x_hat[(1, 0)] = xis[1];
    for j in 1..s {
        x_hat[(j - 1, j)] = -xis[j];
        x_hat[(j + 1, j)] = xis[j + 1];
    }
    let x = x_hat.rows(0, s).into_owned();
    Ok(SpectralMatrices {
        s,
        xi: xis,
        x,
        x_hat,
    })
}
