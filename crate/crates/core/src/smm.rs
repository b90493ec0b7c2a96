//! The stochastic micro-macro scheme `f = ρ + εg`, its two-velocity
//! telegraph form in `(ρ, J = εj)`, and their CFL bounds.

use std::sync::Arc;

use crate::collision::RelaxationCache;
use crate::error::{Error, Result};
use crate::grid::{norm_micro_sq, KineticField, NodeFamily};
use crate::noise::GaussianDraw;
use crate::problem::{check_dt, guard, Problem, SchemeKind, Stepper};
use crate::reference::DiffusionExplicitStepper;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CflKind {
    /// `½(dx²/2 + ε dx)`.
    Telegraph,
    /// `2 s_m σ_m dx² / (2(2+ε)) + ε dx/(2+ε)`.
    General,
}

pub fn cfl_dt(dx: f64, epsilon: f64, s_m: f64, sigma_m: f64, kind: CflKind) -> Result<f64> {
    for (key, v) in [
        ("grid.dx", dx),
        ("scheme.epsilon", epsilon),
        ("collision.s_m", s_m),
        ("collision.sigma_m", sigma_m),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config(key, format!("must be finite and > 0, got {v}")));
        }
    }
    Ok(match kind {
        CflKind::Telegraph => 0.5 * (0.5 * dx * dx + epsilon * dx),
        CflKind::General => 2.0 * s_m * sigma_m * dx * dx / (2.0 * (2.0 + epsilon)) + epsilon * dx / (2.0 + epsilon),
    })
}

/// `ρ` on primal nodes and `g` on dual nodes × velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub rho: Vec<f64>,
    pub g: KineticField,
}

impl KineticState {
    pub fn new(rho: Vec<f64>, g: KineticField) -> Self {
        Self { rho, g }
    }

    /// `ρ⁰ = Π f⁰` on primal nodes and `g⁰ = (f⁰ − Π f⁰)/ε` on dual nodes.
    pub fn from_distribution(problem: &Problem, f0: impl Fn(f64, f64) -> f64) -> Self {
        let grid = problem.grid();
        let quad = problem.quadrature();
        let eps = problem.epsilon();
        let rho = (0..grid.num_cells())
            .map(|i| quad.mean(&quad.profile(|v| f0(grid.primal_x(i), v))))
            .collect();
        let mut g = KineticField::zeros(grid.num_cells(), quad.len());
        for i in 0..grid.num_cells() {
            let f = quad.profile(|v| f0(grid.dual_x(i), v));
            let mean = quad.mean(&f);
            for (out, fq) in g.row_mut(i).iter_mut().zip(&f) {
                *out = (fq - mean) / eps;
            }
        }
        Self { rho, g }
    }

    /// Pairs `ρ` with its diffusive equilibrium `g = (1/σ) L⁻¹(v δ⁰ρ)`.
    pub fn equilibrium(problem: &Problem, rho: Vec<f64>) -> Result<Self> {
        let grid = problem.grid();
        Error::check_len(grid.num_cells(), rho.len())?;
        let op = problem.collision();
        let quad = op.quadrature();
        let linv_v = op.pseudo_inverse_apply(quad.nodes())?;
        let m = grid.num_cells();
        let mut g = KineticField::zeros(m, quad.len());
        for i in 0..m {
            let grad = (rho[(i + 1) % m] - rho[i]) / grid.dx();
            let scale = grad / problem.sigma().dual()[i];
            for (out, l) in g.row_mut(i).iter_mut().zip(&linv_v) {
                *out = scale * l;
            }
        }
        Ok(Self { rho, g })
    }
}

pub struct SmmStepper {
    problem: Arc<Problem>,
    dt: f64,
    rho: Vec<f64>,
    g: KineticField,
    g_next: KineticField,
    relax: RelaxationCache,
    nf_primal: Vec<f64>,
    nf_dual: Vec<f64>,
    flux: Vec<f64>,
    residual: Vec<f64>,
    v_plus: Vec<f64>,
    v_minus: Vec<f64>,
    steps: u64,
    time: f64,
}

impl SmmStepper {
    pub fn new(problem: Arc<Problem>, state: KineticState, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let grid = problem.grid();
        let quad = problem.quadrature();
        let m = grid.num_cells();
        Error::check_len(m, state.rho.len())?;
        state.g.check(grid, quad)?;
        let relax = RelaxationCache::new(problem.collision(), problem.sigma().dual(), dt, problem.epsilon())?;
        let v_plus = quad.nodes().iter().map(|v| v.max(0.0)).collect();
        let v_minus = quad.nodes().iter().map(|v| v.min(0.0)).collect();
        let q = quad.len();
        Ok(Self {
            dt,
            rho: state.rho,
            g_next: state.g.clone(),
            g: state.g,
            relax,
            nf_primal: vec![0.0; m],
            nf_dual: vec![0.0; m],
            flux: vec![0.0; m],
            residual: vec![0.0; q],
            v_plus,
            v_minus,
            steps: 0,
            time: 0.0,
            problem,
        })
    }

    pub fn problem(&self) -> &Arc<Problem> {
        &self.problem
    }

    pub fn state(&self) -> KineticState {
        KineticState::new(self.rho.clone(), self.g.clone())
    }

    pub fn micro(&self) -> &KineticField {
        &self.g
    }

    /// The explicit three-point diffusion scheme this stepper degenerates to
    /// as `ε → 0`, started from the current density.
    pub fn limit_diffusion(&self) -> Result<DiffusionExplicitStepper> {
        DiffusionExplicitStepper::new(self.problem.clone(), self.rho.clone(), self.dt)
    }
}

impl Stepper for SmmStepper {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Smm
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn set_dt(&mut self, dt: f64) -> Result<()> {
        check_dt(dt)?;
        if dt != self.dt {
            let p = &self.problem;
            self.relax = RelaxationCache::new(p.collision(), p.sigma().dual(), dt, p.epsilon())?;
            self.dt = dt;
        }
        Ok(())
    }

    fn step(&mut self, draw: &GaussianDraw) -> Result<()> {
        let p = &*self.problem;
        let grid = p.grid();
        let quad = p.quadrature();
        let m = grid.num_cells();
        let dx = grid.dx();
        let eps = p.epsilon();
        let dt = self.dt;
        p.noise()
            .factors_into(NodeFamily::Primal, draw, dt, &mut self.nf_primal)?;
        p.noise().factors_into(NodeFamily::Dual, draw, dt, &mut self.nf_dual)?;

        let transport = dt / (eps * dx);
        let source = dt / (eps * eps * dx);
        let nodes = quad.nodes();
        let weights = quad.weights();
        for i in 0..m {
            let prev = self.g.row((i + m - 1) % m);
            let cur = self.g.row(i);
            let next = self.g.row((i + 1) % m);
            let r = &mut self.residual;
            let mut t_mean = 0.0;
            for q in 0..r.len() {
                let t = self.v_plus[q] * (cur[q] - prev[q]) + self.v_minus[q] * (next[q] - cur[q]);
                r[q] = t;
                t_mean += weights[q] * t;
            }
            let grad = self.rho[(i + 1) % m] - self.rho[i];
            let nf = self.nf_dual[i];
            for q in 0..r.len() {
                r[q] = cur[q] - transport * (r[q] - t_mean) + cur[q] * nf - source * nodes[q] * grad;
            }
            self.relax.cell(i).solve_into(quad, r, self.g_next.row_mut(i));
            self.flux[i] = quad.flux(self.g_next.row(i));
        }
        std::mem::swap(&mut self.g, &mut self.g_next);

        let lambda = dt / dx;
        for i in 0..m {
            let div = self.flux[i] - self.flux[(i + m - 1) % m];
            self.rho[i] += -lambda * div + self.rho[i] * self.nf_primal[i];
        }
        self.steps += 1;
        self.time += dt;
        guard(self.steps, &self.rho)?;
        if self.g.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::BlowUp {
                step: self.steps,
                max_abs: f64::INFINITY,
            });
        }
        Ok(())
    }

    fn density(&self) -> &[f64] {
        &self.rho
    }

    fn energy(&self) -> f64 {
        let p = &self.problem;
        let dx = p.grid().dx();
        let macro_sq: f64 = self.rho.iter().map(|r| r * r).sum::<f64>() * dx;
        let micro_sq = norm_micro_sq(p.grid(), p.quadrature(), &self.g).unwrap_or(f64::NAN);
        macro_sq + p.epsilon() * p.epsilon() * micro_sq
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }

    fn time(&self) -> f64 {
        self.time
    }
}

/// `ρ_i` on primal nodes, `J_{i+1/2} = ε j_{i+1/2}` on dual nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TelegraphState {
    pub rho: Vec<f64>,
    pub current: Vec<f64>,
}

impl TelegraphState {
    pub fn new(rho: Vec<f64>, current: Vec<f64>) -> Result<Self> {
        Error::check_len(rho.len(), current.len())?;
        Ok(Self { rho, current })
    }
}

/// Velocities `±1`, `s ≡ ½`, `σ ≡ 1`; only the grid, noise and `ε` of the
/// problem are used.
pub struct TelegraphStepper {
    problem: Arc<Problem>,
    dt: f64,
    rho: Vec<f64>,
    current: Vec<f64>,
    next: Vec<f64>,
    nf_primal: Vec<f64>,
    nf_dual: Vec<f64>,
    steps: u64,
    time: f64,
}

impl TelegraphStepper {
    pub fn new(problem: Arc<Problem>, state: TelegraphState, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let m = problem.grid().num_cells();
        Error::check_len(m, state.rho.len())?;
        Error::check_len(m, state.current.len())?;
        Ok(Self {
            problem,
            dt,
            rho: state.rho,
            next: vec![0.0; m],
            current: state.current,
            nf_primal: vec![0.0; m],
            nf_dual: vec![0.0; m],
            steps: 0,
            time: 0.0,
        })
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn state(&self) -> TelegraphState {
        TelegraphState {
            rho: self.rho.clone(),
            current: self.current.clone(),
        }
    }
}

impl Stepper for TelegraphStepper {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Telegraph
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn set_dt(&mut self, dt: f64) -> Result<()> {
        check_dt(dt)?;
        self.dt = dt;
        Ok(())
    }

    fn step(&mut self, draw: &GaussianDraw) -> Result<()> {
        let p = &*self.problem;
        let m = p.grid().num_cells();
        let eps = p.epsilon();
        let dt = self.dt;
        p.noise()
            .factors_into(NodeFamily::Primal, draw, dt, &mut self.nf_primal)?;
        p.noise().factors_into(NodeFamily::Dual, draw, dt, &mut self.nf_dual)?;
        let mu = dt / (eps * p.grid().dx());
        let lambda = 1.0 / (1.0 + dt / (eps * eps));
        let j = &self.current;
        for i in 0..m {
            let jp = j[(i + 1) % m];
            let jm = j[(i + m - 1) % m];
            let lap = jp - 2.0 * j[i] + jm;
            let grad = self.rho[(i + 1) % m] - self.rho[i];
            self.next[i] = lambda * (j[i] * (1.0 + self.nf_dual[i]) + 0.5 * mu * lap - mu * grad);
        }
        std::mem::swap(&mut self.current, &mut self.next);
        let j = &self.current;
        for i in 0..m {
            let div = j[i] - j[(i + m - 1) % m];
            self.rho[i] += -mu * div + self.rho[i] * self.nf_primal[i];
        }
        self.steps += 1;
        self.time += dt;
        guard(self.steps, &self.rho)
    }

    fn density(&self) -> &[f64] {
        &self.rho
    }

    fn energy(&self) -> f64 {
        let dx = self.problem.grid().dx();
        self.rho
            .iter()
            .zip(&self.current)
            .map(|(r, j)| r * r + j * j)
            .sum::<f64>()
            * dx
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }

    fn time(&self) -> f64 {
        self.time
    }
}
