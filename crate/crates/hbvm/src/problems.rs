//! Problem classes and the registry of built-in test problems.
//!
//! All problems are autonomous; a non-autonomous right-hand side must be
//! autonomized by appending the time as an extra state component.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// f(y) -> dy, written into the output slice.
pub type Field1 = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// f(y, y') -> acceleration.
pub type Field2 = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// f(y, y', ..., y^(k-1)) -> k-th derivative; one slice per level.
pub type FieldK = Arc<dyn Fn(&[Vec<f64>], &mut [f64]) + Send + Sync>;
/// First integral H(y).
pub type Invariant1 = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Energy H(y, y').
pub type Invariant2 = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// Analytic solution: all derivative levels at time t, given initial data.
pub type Solution = Arc<dyn Fn(&InitialData, f64) -> Vec<Vec<f64>> + Send + Sync>;

/// Initial time and one state per derivative level (as many as the order).
#[derive(Debug, Clone)]
pub struct InitialData {
    pub t0: f64,
    pub derivatives: Vec<Vec<f64>>,
}

impl InitialData {
    pub fn new(t0: f64, derivatives: Vec<Vec<f64>>) -> Self {
        Self { t0, derivatives }
    }

    pub fn order(&self) -> usize {
        self.derivatives.len()
    }

    pub fn dim(&self) -> usize {
        self.derivatives.first().map_or(0, Vec::len)
    }
}

/// dy/dt = f(y).
#[derive(Clone)]
pub struct FirstOrderProblem {
    pub dim: usize,
    f: Field1,
    pub hamiltonian: Option<Invariant1>,
    pub analytic: Option<Solution>,
}

impl FirstOrderProblem {
    pub fn new(dim: usize, f: Field1) -> Self {
        Self {
            dim,
            f,
            hamiltonian: None,
            analytic: None,
        }
    }

    pub fn with_hamiltonian(mut self, h: Invariant1) -> Self {
        self.hamiltonian = Some(h);
        self
    }

    pub fn with_analytic(mut self, sol: Solution) -> Self {
        self.analytic = Some(sol);
        self
    }

    pub fn eval(&self, y: &[f64], out: &mut [f64]) {
        (self.f)(y, out)
    }
}

/// d2y/dt2 = f(y), no velocity dependence.
#[derive(Clone)]
pub struct SecondOrderSpecialProblem {
    pub dim: usize,
    f: Field1,
    pub energy: Option<Invariant2>,
    pub analytic: Option<Solution>,
}

impl SecondOrderSpecialProblem {
    pub fn new(dim: usize, f: Field1) -> Self {
        Self {
            dim,
            f,
            energy: None,
            analytic: None,
        }
    }

    pub fn with_energy(mut self, h: Invariant2) -> Self {
        self.energy = Some(h);
        self
    }

    pub fn with_analytic(mut self, sol: Solution) -> Self {
        self.analytic = Some(sol);
        self
    }

    pub fn eval(&self, y: &[f64], out: &mut [f64]) {
        (self.f)(y, out)
    }

    /// Canonical first-order form on the doubled state z = (y, y').
    pub fn to_first_order(&self) -> FirstOrderProblem {
        let m = self.dim;
        let f = self.f.clone();
        let mut first = FirstOrderProblem::new(
            2 * m,
            Arc::new(move |z: &[f64], out: &mut [f64]| {
                out[..m].copy_from_slice(&z[m..]);
                let (pos, rest) = z.split_at(m);
                let _ = rest;
                f(pos, &mut out[m..]);
            }),
        );
        if let Some(h) = self.energy.clone() {
            first.hamiltonian = Some(Arc::new(move |z: &[f64]| h(&z[..m], &z[m..])));
        }
        if let Some(sol) = self.analytic.clone() {
            first.analytic = Some(Arc::new(move |init: &InitialData, t: f64| {
                let split = InitialData::new(
                    init.t0,
                    vec![
                        init.derivatives[0][..m].to_vec(),
                        init.derivatives[0][m..].to_vec(),
                    ],
                );
                let levels = sol(&split, t);
                let mut z = levels[0].clone();
                z.extend_from_slice(&levels[1]);
                vec![z]
            }));
        }
        first
    }
}

/// d2y/dt2 = f(y, y').
#[derive(Clone)]
pub struct SecondOrderGeneralProblem {
    pub dim: usize,
    f: Field2,
    pub energy: Option<Invariant2>,
    pub analytic: Option<Solution>,
}

impl SecondOrderGeneralProblem {
    pub fn new(dim: usize, f: Field2) -> Self {
        Self {
            dim,
            f,
            energy: None,
            analytic: None,
        }
    }

    pub fn with_analytic(mut self, sol: Solution) -> Self {
        self.analytic = Some(sol);
        self
    }

    pub fn eval(&self, y: &[f64], v: &[f64], out: &mut [f64]) {
        (self.f)(y, v, out)
    }

    /// First-order form on z = (y, y').
    pub fn to_first_order(&self) -> FirstOrderProblem {
        let m = self.dim;
        let f = self.f.clone();
        FirstOrderProblem::new(
            2 * m,
            Arc::new(move |z: &[f64], out: &mut [f64]| {
                out[..m].copy_from_slice(&z[m..]);
                f(&z[..m], &z[m..], &mut out[m..]);
            }),
        )
    }
}

/// y^(k) = f(y, y', ..., y^(k-1)).
#[derive(Clone)]
pub struct KthOrderProblem {
    pub order: usize,
    pub dim: usize,
    f: FieldK,
    pub analytic: Option<Solution>,
}

impl KthOrderProblem {
    pub fn new(order: usize, dim: usize, f: FieldK) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("problem order must be at least 1"));
        }
        Ok(Self {
            order,
            dim,
            f,
            analytic: None,
        })
    }

    pub fn with_analytic(mut self, sol: Solution) -> Self {
        self.analytic = Some(sol);
        self
    }

    pub fn eval(&self, levels: &[Vec<f64>], out: &mut [f64]) {
        (self.f)(levels, out)
    }

    /// First-order form on the stacked state (y, y', ..., y^(k-1)).
    pub fn to_first_order(&self) -> FirstOrderProblem {
        let m = self.dim;
        let order = self.order;
        let f = self.f.clone();
        FirstOrderProblem::new(
            order * m,
            Arc::new(move |z: &[f64], out: &mut [f64]| {
                out[..(order - 1) * m].copy_from_slice(&z[m..]);
                let levels: Vec<Vec<f64>> =
                    (0..order).map(|i| z[i * m..(i + 1) * m].to_vec()).collect();
                f(&levels, &mut out[(order - 1) * m..]);
            }),
        )
    }
}

/// Any of the four problem classes.
#[derive(Clone)]
pub enum Problem {
    FirstOrder(FirstOrderProblem),
    SecondSpecial(SecondOrderSpecialProblem),
    SecondGeneral(SecondOrderGeneralProblem),
    Kth(KthOrderProblem),
}

impl Problem {
    /// Number of derivative levels carried by the class.
    pub fn order(&self) -> usize {
        match self {
            Problem::FirstOrder(_) => 1,
            Problem::SecondSpecial(_) | Problem::SecondGeneral(_) => 2,
            Problem::Kth(p) => p.order,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::FirstOrder(p) => p.dim,
            Problem::SecondSpecial(p) => p.dim,
            Problem::SecondGeneral(p) => p.dim,
            Problem::Kth(p) => p.dim,
        }
    }

    /// First integral evaluated on a full set of derivative levels, when
    /// the problem carries one.
    pub fn invariant(&self, levels: &[Vec<f64>]) -> Option<f64> {
        match self {
            Problem::FirstOrder(p) => p.hamiltonian.as_ref().map(|h| h(&levels[0])),
            Problem::SecondSpecial(p) => p.energy.as_ref().map(|h| h(&levels[0], &levels[1])),
            Problem::SecondGeneral(p) => p.energy.as_ref().map(|h| h(&levels[0], &levels[1])),
            Problem::Kth(_) => None,
        }
    }

    pub fn analytic(&self) -> Option<&Solution> {
        match self {
            Problem::FirstOrder(p) => p.analytic.as_ref(),
            Problem::SecondSpecial(p) => p.analytic.as_ref(),
            Problem::SecondGeneral(p) => p.analytic.as_ref(),
            Problem::Kth(p) => p.analytic.as_ref(),
        }
    }
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (class, dim) = match self {
            Problem::FirstOrder(p) => ("first-order", p.dim),
            Problem::SecondSpecial(p) => ("second-order-special", p.dim),
            Problem::SecondGeneral(p) => ("second-order-general", p.dim),
            Problem::Kth(p) => ("kth-order", p.dim),
        };
        write!(f, "Problem({class}, dim = {dim})")
    }
}

/// A registry entry: the problem plus default initial data for the CLI.
#[derive(Debug, Clone)]
pub struct BuiltinProblem {
    pub name: &'static str,
    pub problem: Problem,
    pub default_init: InitialData,
}

/// Names accepted by [`builtin`].
pub fn registry_names() -> &'static [&'static str] {
    &[
        "harmonic",
        "henon-heiles",
        "kepler",
        "pendulum",
        "vdpol-2nd",
        "linear-3rd",
    ]
}

fn harmonic() -> BuiltinProblem {
    let problem =
        SecondOrderSpecialProblem::new(1, Arc::new(|y: &[f64], out: &mut [f64]| out[0] = -y[0]))
            .with_energy(Arc::new(|y: &[f64], v: &[f64]| {
                0.5 * (v[0] * v[0] + y[0] * y[0])
            }))
            .with_analytic(Arc::new(|init: &InitialData, t: f64| {
                let tau = t - init.t0;
                let (y0, v0) = (init.derivatives[0][0], init.derivatives[1][0]);
                vec![
                    vec![y0 * tau.cos() + v0 * tau.sin()],
                    vec![-y0 * tau.sin() + v0 * tau.cos()],
                ]
            }));
    BuiltinProblem {
        name: "harmonic",
        problem: Problem::SecondSpecial(problem),
        default_init: InitialData::new(0.0, vec![vec![1.0], vec![0.0]]),
    }
}

fn henon_heiles() -> BuiltinProblem {
    // Canonical state (q1, q2, p1, p2); polynomial Hamiltonian of degree 3.
    let problem = FirstOrderProblem::new(
        4,
        Arc::new(|z: &[f64], out: &mut [f64]| {
            let (q1, q2, p1, p2) = (z[0], z[1], z[2], z[3]);
            out[0] = p1;
            out[1] = p2;
            out[2] = -q1 - 2.0 * q1 * q2;
            out[3] = -q2 - q1 * q1 + q2 * q2;
        }),
    )
    .with_hamiltonian(Arc::new(|z: &[f64]| {
        let (q1, q2, p1, p2) = (z[0], z[1], z[2], z[3]);
        0.5 * (p1 * p1 + p2 * p2) + 0.5 * (q1 * q1 + q2 * q2) + q1 * q1 * q2 - q2 * q2 * q2 / 3.0
    }));
    BuiltinProblem {
        name: "henon-heiles",
        problem: Problem::FirstOrder(problem),
        default_init: InitialData::new(0.0, vec![vec![0.1, -0.1, 0.25, 0.25]]),
    }
}

fn kepler() -> BuiltinProblem {
    let problem = SecondOrderSpecialProblem::new(
        2,
        Arc::new(|q: &[f64], out: &mut [f64]| {
            let r2 = q[0] * q[0] + q[1] * q[1];
            let r3 = r2 * r2.sqrt();
            out[0] = -q[0] / r3;
            out[1] = -q[1] / r3;
        }),
    )
    .with_energy(Arc::new(|q: &[f64], v: &[f64]| {
        let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
        0.5 * (v[0] * v[0] + v[1] * v[1]) - 1.0 / r
    }));
    // Aphelion start of an e = 0.6 orbit (H = -1/2, period 2*pi).
    let e = 0.6_f64;
    BuiltinProblem {
        name: "kepler",
        problem: Problem::SecondSpecial(problem),
        default_init: InitialData::new(
            0.0,
            vec![
                vec![1.0 + e, 0.0],
                vec![0.0, ((1.0 - e) / (1.0 + e)).sqrt()],
            ],
        ),
    }
}

fn pendulum() -> BuiltinProblem {
    let problem = SecondOrderSpecialProblem::new(
        1,
        Arc::new(|y: &[f64], out: &mut [f64]| out[0] = -y[0].sin()),
    )
    .with_energy(Arc::new(|y: &[f64], v: &[f64]| {
        0.5 * v[0] * v[0] - y[0].cos()
    }));
    BuiltinProblem {
        name: "pendulum",
        problem: Problem::SecondSpecial(problem),
        default_init: InitialData::new(0.0, vec![vec![1.0], vec![0.0]]),
    }
}

fn vdpol_2nd() -> BuiltinProblem {
    // Van der Pol oscillator with mu = 1, kept in second-order form.
    let problem = SecondOrderGeneralProblem::new(
        1,
        Arc::new(|y: &[f64], v: &[f64], out: &mut [f64]| {
            out[0] = (1.0 - y[0] * y[0]) * v[0] - y[0];
        }),
    );
    BuiltinProblem {
        name: "vdpol-2nd",
        problem: Problem::SecondGeneral(problem),
        default_init: InitialData::new(0.0, vec![vec![2.0], vec![0.0]]),
    }
}

fn linear_3rd() -> BuiltinProblem {
    // y''' = -y'; characteristic roots {0, i, -i}, so
    // y(t) = (y0 + y0'') - y0'' cos t + y0' sin t.
    let problem = KthOrderProblem::new(
        3,
        1,
        Arc::new(|levels: &[Vec<f64>], out: &mut [f64]| out[0] = -levels[1][0]),
    )
    .expect("order 3 is valid")
    .with_analytic(Arc::new(|init: &InitialData, t: f64| {
        let tau = t - init.t0;
        let (y0, v0, a0) = (
            init.derivatives[0][0],
            init.derivatives[1][0],
            init.derivatives[2][0],
        );
        vec![
            vec![(y0 + a0) - a0 * tau.cos() + v0 * tau.sin()],
            vec![a0 * tau.sin() + v0 * tau.cos()],
            vec![a0 * tau.cos() - v0 * tau.sin()],
        ]
    }));
    BuiltinProblem {
        name: "linear-3rd",
        problem: Problem::Kth(problem),
        default_init: InitialData::new(0.0, vec![vec![1.0], vec![1.0], vec![0.5]]),
    }
}

/// Look up a built-in problem by name.
pub fn builtin(name: &str) -> Result<BuiltinProblem> {
    match name {
        "harmonic" => Ok(harmonic()),
        "henon-heiles" => Ok(henon_heiles()),
        "kepler" => Ok(kepler()),
        "pendulum" => Ok(pendulum()),
        "vdpol-2nd" => Ok(vdpol_2nd()),
        "linear-3rd" => Ok(linear_3rd()),
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            registry: registry_names().join(", "),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small deterministic generator for test states.
    struct Lcg(u64);

    impl Lcg {
        fn next_f64(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            // Uniform in [-1, 1).
            ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    fn central_gradient(h: &Invariant1, z: &[f64]) -> Vec<f64> {
        let step = 1e-5;
        (0..z.len())
            .map(|i| {
                let mut zp = z.to_vec();
                let mut zm = z.to_vec();
                zp[i] += step;
                zm[i] -= step;
                (h(&zp) - h(&zm)) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn registry_contents() {
        for name in registry_names() {
            assert!(builtin(name).is_ok(), "{name}");
        }
        let err = builtin("nope").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("harmonic") && msg.contains("linear-3rd"));
    }

    #[test]
    fn harmonic_metadata() {
        let entry = builtin("harmonic").unwrap();
        let Problem::SecondSpecial(p) = &entry.problem else {
            panic!("wrong class");
        };
        let mut out = [0.0];
        p.eval(&[0.3], &mut out);
        assert_eq!(out[0], -0.3);
        let h = p.energy.as_ref().unwrap();
        assert!((h(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
        let sol = p.analytic.as_ref().unwrap();
        let levels = sol(&entry.default_init, std::f64::consts::PI / 2.0);
        assert!(levels[0][0].abs() < 1e-15);
        assert!((levels[1][0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_forms_satisfy_hamiltonian_structure() {
        // f = J grad H with J = [[0, I], [-I, 0]] on states (q, p), checked
        // by central differences at 100 pseudo-random states.
        let mut rng = Lcg(0x9e3779b97f4a7c15);
        let canonical: Vec<FirstOrderProblem> = vec![
            match builtin("henon-heiles").unwrap().problem {
                Problem::FirstOrder(p) => p,
                _ => unreachable!(),
            },
            match builtin("harmonic").unwrap().problem {
                Problem::SecondSpecial(p) => p.to_first_order(),
                _ => unreachable!(),
            },
            match builtin("pendulum").unwrap().problem {
                Problem::SecondSpecial(p) => p.to_first_order(),
                _ => unreachable!(),
            },
            match builtin("kepler").unwrap().problem {
                Problem::SecondSpecial(p) => p.to_first_order(),
                _ => unreachable!(),
            },
        ];
        for p in &canonical {
            let h = p.hamiltonian.clone().unwrap();
            let m = p.dim / 2;
            for _ in 0..100 {
                let mut z: Vec<f64> = (0..p.dim).map(|_| rng.next_f64()).collect();
                // Keep Kepler away from the collision singularity.
                z[0] += 2.0;
                let grad = central_gradient(&h, &z);
                let mut f = vec![0.0; p.dim];
                p.eval(&z, &mut f);
                let norm_f = f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                for i in 0..m {
                    assert!((f[i] - grad[m + i]).abs() < 1e-6 * (1.0 + norm_f));
                    assert!((f[m + i] + grad[i]).abs() < 1e-6 * (1.0 + norm_f));
                }
            }
        }
    }

    #[test]
    fn analytic_solutions_satisfy_their_odes() {
        let dt = 1e-5;
        for name in ["harmonic", "linear-3rd"] {
            let entry = builtin(name).unwrap();
            let sol = entry.problem.analytic().unwrap().clone();
            let order = entry.problem.order();
            for i in 0..50 {
                let t = 0.1 + 0.13 * i as f64;
                let levels = sol(&entry.default_init, t);
                let plus = sol(&entry.default_init, t + dt);
                let minus = sol(&entry.default_init, t - dt);
                // Each level differentiates to the next one.
                for lvl in 0..order - 1 {
                    for d in 0..entry.problem.dim() {
                        let fd = (plus[lvl][d] - minus[lvl][d]) / (2.0 * dt);
                        assert!((fd - levels[lvl + 1][d]).abs() < 1e-8, "{name} level {lvl}");
                    }
                }
                // The top level differentiates to f(levels).
                let mut top = vec![0.0; entry.problem.dim()];
                match &entry.problem {
                    Problem::SecondSpecial(p) => p.eval(&levels[0], &mut top),
                    Problem::Kth(p) => p.eval(&levels, &mut top),
                    _ => unreachable!(),
                }
                for d in 0..entry.problem.dim() {
                    let fd = (plus[order - 1][d] - minus[order - 1][d]) / (2.0 * dt);
                    assert!((fd - top[d]).abs() < 1e-8, "{name} top level");
                }
            }
        }
    }

    #[test]
    fn first_order_reductions_have_stacked_dimensions() {
        let entry = builtin("kepler").unwrap();
        let Problem::SecondSpecial(p) = &entry.problem else {
            panic!()
        };
        assert_eq!(p.to_first_order().dim, 4);

        let entry = builtin("vdpol-2nd").unwrap();
        let Problem::SecondGeneral(p) = &entry.problem else {
            panic!()
        };
        assert_eq!(p.to_first_order().dim, 2);

        let entry = builtin("linear-3rd").unwrap();
        let Problem::Kth(p) = &entry.problem else {
            panic!()
        };
        let first = p.to_first_order();
        assert_eq!(first.dim, 3);
        let mut out = vec![0.0; 3];
        first.eval(&[1.0, 2.0, 3.0], &mut out);
        assert_eq!(out, vec![2.0, 3.0, -2.0]);
    }

    #[test]
    fn default_initial_data_is_consistent() {
        for name in registry_names() {
            let entry = builtin(name).unwrap();
            assert_eq!(entry.default_init.order(), entry.problem.order(), "{name}");
            assert_eq!(entry.default_init.dim(), entry.problem.dim(), "{name}");
        }
    }

    #[test]
    fn kepler_default_energy() {
        let entry = builtin("kepler").unwrap();
        let h = entry
            .problem
            .invariant(&entry.default_init.derivatives)
            .unwrap();
        assert!((h + 0.5).abs() < 1e-15);
    }
}
