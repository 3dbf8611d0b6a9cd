//! Uniform-step time marching, convergence studies and energy-drift
//! reports.

use crate::error::{Error, Result};
use crate::legendre::build_spectral;
use crate::problems::{InitialData, Problem};
use crate::quadrature::gauss_rule;
use crate::solver::{
    dense_output, step_1st_impl, step_2nd_general_impl, step_2nd_special_impl, step_kth_impl,
    GammaVector, SolverConfig, StepResult,
};
use crate::tableau::{build_operators, fmt_f64, DiscreteOperators};
use serde::Serialize;

/// A fixed-step run of HBVM(k, s) over [t0, tf].
#[derive(Debug, Clone)]
pub struct IntegrationPlan {
    pub t0: f64,
    pub tf: f64,
    pub n_steps: usize,
    pub k: usize,
    pub s: usize,
    pub solver: SolverConfig,
    /// Interior dense-output samples recorded per step (0 disables).
    pub dense_samples: usize,
    /// Seed each step's iteration with the previous step's gamma.
    pub warm_start: bool,
}

impl IntegrationPlan {
    pub fn new(t0: f64, tf: f64, n_steps: usize, k: usize, s: usize) -> Self {
        Self {
            t0,
            tf,
            n_steps,
            k,
            s,
            solver: SolverConfig::default(),
            dense_samples: 0,
            warm_start: true,
        }
    }

    /// Validate and return the step size.
    pub fn step_size(&self) -> Result<f64> {
        if !self.t0.is_finite() || !self.tf.is_finite() || self.tf <= self.t0 {
            return Err(Error::invalid(format!(
                "time span must be increasing, got [{}, {}]",
                self.t0, self.tf
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        if self.s == 0 || self.k < self.s {
            return Err(Error::invalid(format!(
                "k must be >= s >= 1 (got k = {}, s = {})",
                self.k, self.s
            )));
        }
        Ok((self.tf - self.t0) / self.n_steps as f64)
    }
}

/// A dense-output sample inside a step.
#[derive(Debug, Clone, Serialize)]
pub struct DenseSample {
    pub t: f64,
    pub levels: Vec<Vec<f64>>,
    pub energy: Option<f64>,
}

/// Step-boundary records of one run, plus optional dense samples.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One entry per boundary: all derivative levels of the state.
    pub states: Vec<Vec<Vec<f64>>>,
    /// First integral at the boundaries, when the problem carries one.
    pub energies: Option<Vec<f64>>,
    /// Solver iterations per boundary (0 for the initial point).
    pub iterations: Vec<usize>,
    /// Final solver residual per boundary (0 for the initial point).
    pub residuals: Vec<f64>,
    pub dense: Vec<DenseSample>,
}

impl Trajectory {
    fn new(t0: f64, init: &InitialData, energy: Option<f64>) -> Self {
        Self {
            times: vec![t0],
            states: vec![init.derivatives.clone()],
            energies: energy.map(|e| vec![e]),
            iterations: vec![0],
            residuals: vec![0.0],
            dense: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest |H(t_n) - H(t_0)| over the run, when energies were recorded.
    pub fn max_energy_drift(&self) -> Option<f64> {
        let energies = self.energies.as_ref()?;
        let h0 = *energies.first()?;
        Some(
            energies
                .iter()
                .fold(0.0_f64, |acc, h| acc.max((h - h0).abs())),
        )
    }

    /// Boundary records as CSV with header
    /// `t, y_1..y_m[, yd_1..yd_m, ...][, H], iters, residual`.
    pub fn to_csv(&self) -> String {
        let order = self.states[0].len();
        let m = self.states[0][0].len();
        let mut out = String::from("t");
        for level in 0..order {
            let prefix = format!("y{}", "d".repeat(level));
            for d in 1..=m {
                out.push_str(&format!(",{prefix}_{d}"));
            }
        }
        if self.energies.is_some() {
            out.push_str(",H");
        }
        out.push_str(",iters,residual\n");
        for n in 0..self.len() {
            out.push_str(&fmt_f64(self.times[n]));
            for level in &self.states[n] {
                for v in level {
                    out.push(',');
                    out.push_str(&fmt_f64(*v));
                }
            }
            if let Some(energies) = &self.energies {
                out.push(',');
                out.push_str(&fmt_f64(energies[n]));
            }
            out.push_str(&format!(",{}", self.iterations[n]));
            out.push(',');
            out.push_str(&fmt_f64(self.residuals[n]));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }
}

#[allow(clippy::too_many_arguments)]
fn step_once(
    problem: &Problem,
    state: &[Vec<f64>],
    h: f64,
    ops: &DiscreteOperators,
    spectral: &crate::legendre::SpectralMatrices,
    cfg: &SolverConfig,
    guess: Option<&GammaVector>,
    cache: &mut Option<crate::solver::NewtonCache>,
) -> Result<StepResult> {
    match problem {
        Problem::FirstOrder(p) => step_1st_impl(p, &state[0], h, ops, cfg, guess, cache),
        Problem::SecondSpecial(p) => {
            step_2nd_special_impl(p, &state[0], &state[1], h, ops, spectral, cfg, guess, cache)
        }
        Problem::SecondGeneral(p) => {
            step_2nd_general_impl(p, &state[0], &state[1], h, ops, spectral, cfg, guess, cache)
        }
        Problem::Kth(p) => {
            let init = InitialData::new(0.0, state.to_vec());
            step_kth_impl(p, &init, h, ops, spectral, cfg, guess, cache)
        }
    }
}

/// March the class-appropriate one-step map `n_steps` times.
///
/// Solver failure aborts with the completed portion of the trajectory
/// attached to the error.
pub fn integrate(
    problem: &Problem,
    init: &InitialData,
    plan: &IntegrationPlan,
) -> Result<Trajectory> {
    let h = plan.step_size()?;
    if init.order() != problem.order() {
        return Err(Error::invalid(format!(
            "initial data supplies {} derivative levels, problem carries {}",
            init.order(),
            problem.order()
        )));
    }
    if init.dim() != problem.dim() {
        return Err(Error::invalid(format!(
            "initial data has dimension {}, problem has {}",
            init.dim(),
            problem.dim()
        )));
    }
    let rule = gauss_rule(plan.k)?;
    let ops = build_operators(plan.s, &rule)?;
    let spectral = build_spectral(plan.s)?;

    let mut trajectory = Trajectory::new(plan.t0, init, problem.invariant(&init.derivatives));
    let mut guess: Option<GammaVector> = None;
    let mut cache = None;
    for n in 0..plan.n_steps {
        let state = trajectory.states[n].clone();
        let had_cache = cache.is_some();
        let mut attempt = step_once(
            problem,
            &state,
            h,
            &ops,
            &spectral,
            &plan.solver,
            guess.as_ref(),
            &mut cache,
        );
        if attempt.is_err() && plan.solver.jacobian_reuse && had_cache {
            // The frozen Jacobian may be stale; refresh once at this state.
            cache = None;
            attempt = step_once(
                problem,
                &state,
                h,
                &ops,
                &spectral,
                &plan.solver,
                guess.as_ref(),
                &mut cache,
            );
        }
        let result = match attempt {
            Ok(r) => r,
            Err(e) => {
                return Err(Error::Aborted {
                    step: n,
                    partial: Box::new(trajectory),
                    source: Box::new(e),
                })
            }
        };
        if !plan.solver.jacobian_reuse {
            cache = None;
        }
        let t_start = plan.t0 + n as f64 * h;
        if plan.dense_samples > 0 {
            let dense = dense_output(state, h, result.gamma.clone(), spectral.clone())?;
            for q in 1..=plan.dense_samples {
                let c = q as f64 / (plan.dense_samples + 1) as f64;
                let levels = dense.eval(c)?;
                let energy = problem.invariant(&levels);
                trajectory.dense.push(DenseSample {
                    t: t_start + c * h,
                    levels,
                    energy,
                });
            }
        }
        trajectory.times.push(plan.t0 + (n + 1) as f64 * h);
        if let Some(energies) = trajectory.energies.as_mut() {
            energies.push(
                problem
                    .invariant(&result.derivatives)
                    .expect("invariant present at start"),
            );
        }
        trajectory.iterations.push(result.iterations);
        trajectory.residuals.push(result.residual);
        trajectory.states.push(result.derivatives);
        guess = plan.warm_start.then_some(result.gamma);
    }
    Ok(trajectory)
}

/// One rung of a convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct OrderStudyRow {
    pub h: f64,
    pub error: f64,
    /// log2(e(2h) / e(h)); absent on the first rung.
    pub slope: Option<f64>,
    /// False once either error sits below the round-off floor of 1e-13.
    pub reliable: bool,
}

/// Rows as CSV `h, error, slope` (empty slope on the first rung).
pub fn order_study_csv(rows: &[OrderStudyRow]) -> String {
    let mut out = String::from("h,error,slope\n");
    for row in rows {
        out.push_str(&fmt_f64(row.h));
        out.push(',');
        out.push_str(&fmt_f64(row.error));
        out.push(',');
        if let Some(slope) = row.slope {
            out.push_str(&fmt_f64(slope));
        }
        out.push('\n');
    }
    out
}

const ROUND_OFF_FLOOR: f64 = 1e-13;

/// Global-error study under repeated halving of h.
///
/// Integrates over [plan.t0, plan.tf] with n_steps, 2 n_steps, ...,
/// comparing the final state against the analytic solution across all
/// derivative levels.  Slopes below the 1e-13 error floor are flagged
/// unreliable (round-off regime).
pub fn order_study(
    problem: &Problem,
    init: &InitialData,
    plan: &IntegrationPlan,
    rungs: usize,
) -> Result<Vec<OrderStudyRow>> {
    let solution = problem
        .analytic()
        .ok_or_else(|| Error::invalid("order study needs a problem with an analytic solution"))?
        .clone();
    if rungs < 4 {
        return Err(Error::invalid("h-ladder needs at least 4 rungs"));
    }
    plan.step_size()?;
    let reference_init = InitialData::new(plan.t0, init.derivatives.clone());
    let exact = solution(&reference_init, plan.tf);
    let mut rows: Vec<OrderStudyRow> = Vec::with_capacity(rungs);
    for r in 0..rungs {
        let mut rung_plan = plan.clone();
        rung_plan.n_steps = plan.n_steps << r;
        let h = rung_plan.step_size()?;
        let trajectory = integrate(problem, init, &rung_plan)?;
        let last = trajectory.states.last().expect("at least one record");
        let mut error = 0.0_f64;
        for (level, exact_level) in last.iter().zip(&exact) {
            for (a, b) in level.iter().zip(exact_level) {
                error = error.max((a - b).abs());
            }
        }
        let slope = rows
            .last()
            .map(|prev: &OrderStudyRow| (prev.error / error).log2());
        let reliable = error >= ROUND_OFF_FLOOR
            && rows
                .last()
                .map(|p| p.error >= ROUND_OFF_FLOOR)
                .unwrap_or(true);
        rows.push(OrderStudyRow {
            h,
            error,
            slope,
            reliable,
        });
    }
    Ok(rows)
}

/// Energy drift H(t_n) - H(t_0) along a run.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyDrift {
    pub times: Vec<f64>,
    pub drift: Vec<f64>,
    pub max_abs: f64,
}

impl EnergyDrift {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,drift\n");
        for (t, d) in self.times.iter().zip(&self.drift) {
            out.push_str(&fmt_f64(*t));
            out.push(',');
            out.push_str(&fmt_f64(*d));
            out.push('\n');
        }
        out
    }
}

/// Run the plan and report the drift series of the problem's first
/// integral.
pub fn energy_drift(
    problem: &Problem,
    init: &InitialData,
    plan: &IntegrationPlan,
) -> Result<EnergyDrift> {
    if problem.invariant(&init.derivatives).is_none() {
        return Err(Error::invalid(
            "energy drift needs a problem with a first integral",
        ));
    }
    let trajectory = integrate(problem, init, plan)?;
    let energies = trajectory.energies.as_ref().expect("invariant present");
    let h0 = energies[0];
    let drift: Vec<f64> = energies.iter().map(|h| h - h0).collect();
    let max_abs = drift.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
    Ok(EnergyDrift {
        times: trajectory.times,
        drift,
        max_abs,
    })
}
