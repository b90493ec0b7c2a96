//! Baseline integrators: explicit upwind on the unsplit distribution `f`,
//! and explicit or Crank–Nicolson three-point schemes for the limit diffusion.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::NodeFamily;
use crate::noise::GaussianDraw;
use crate::problem::{check_dt, guard, Problem, SchemeKind, Stepper};

/// `f_i(v_q)` on primal nodes, row-major by node.
pub struct ExplicitKineticStepper {
    problem: Arc<Problem>,
    dt: f64,
    f: Vec<f64>,
    next: Vec<f64>,
    rho: Vec<f64>,
    nf: Vec<f64>,
    collide: Vec<f64>,
    steps: u64,
    time: f64,
}

impl ExplicitKineticStepper {
    pub fn new(problem: Arc<Problem>, f: Vec<f64>, dt: f64) -> Result<Self> {
        let m = problem.grid().num_cells();
        let q = problem.quadrature().len();
        Error::check_len(m * q, f.len())?;
        Self::check_step(&problem, dt)?;
        let mut s = Self {
            next: vec![0.0; f.len()],
            f,
            rho: vec![0.0; m],
            nf: vec![0.0; m],
            collide: vec![0.0; q],
            dt,
            steps: 0,
            time: 0.0,
            problem,
        };
        s.update_density();
        Ok(s)
    }

    /// Requires `dt ≤ safety·ε dx` and `dt ≤ safety·ε²/σ_M`.
    fn check_step(problem: &Problem, dt: f64) -> Result<()> {
        check_dt(dt)?;
        let eps = problem.epsilon();
        let safety = problem.cfl_safety();
        let transport = safety * eps * problem.grid().dx();
        let relax = safety * eps * eps / problem.sigma().bounds().1;
        if dt > transport || dt > relax {
            return Err(Error::config(
                "scheme.dt",
                format!(
                    "explicit kinetic scheme needs dt <= {:.6e} (transport) and <= {:.6e} (relaxation), got {dt:e}",
                    transport, relax
                ),
            ));
        }
        Ok(())
    }

    pub fn distribution(&self) -> &[f64] {
        &self.f
    }

    fn update_density(&mut self) {
        let quad = self.problem.quadrature();
        let q = quad.len();
        for (i, r) in self.rho.iter_mut().enumerate() {
            *r = quad.mean(&self.f[i * q..(i + 1) * q]);
        }
    }
}

impl Stepper for ExplicitKineticStepper {
    fn kind(&self) -> SchemeKind {
        SchemeKind::ExplicitKinetic
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn set_dt(&mut self, dt: f64) -> Result<()> {
        Self::check_step(&self.problem, dt)?;
        self.dt = dt;
        Ok(())
    }

    fn step(&mut self, draw: &GaussianDraw) -> Result<()> {
        let p = &*self.problem;
        let m = p.grid().num_cells();
        let op = p.collision();
        let nodes = op.quadrature().nodes();
        let q = nodes.len();
        let eps = p.epsilon();
        let dt = self.dt;
        p.noise().factors_into(NodeFamily::Primal, draw, dt, &mut self.nf)?;
        let transport = dt / (eps * p.grid().dx());
        let relax = dt / (eps * eps);
        for i in 0..m {
            let cur = &self.f[i * q..(i + 1) * q];
            let prev = &self.f[((i + m - 1) % m) * q..((i + m - 1) % m + 1) * q];
            let next = &self.f[((i + 1) % m) * q..((i + 1) % m + 1) * q];
            op.apply_l_into(cur, &mut self.collide);
            let c = relax * p.sigma().primal()[i];
            let out = &mut self.next[i * q..(i + 1) * q];
            for a in 0..q {
                let v = nodes[a];
                let upwind = if v > 0.0 {
                    v * (cur[a] - prev[a])
                } else {
                    v * (next[a] - cur[a])
                };
                out[a] = cur[a] - transport * upwind + c * self.collide[a] + cur[a] * self.nf[i];
            }
        }
        std::mem::swap(&mut self.f, &mut self.next);
        self.update_density();
        self.steps += 1;
        self.time += dt;
        guard(self.steps, &self.rho)
    }

    fn density(&self) -> &[f64] {
        &self.rho
    }

    /// `‖ρ‖² + Σ_i Π((f_i − ρ_i)²) dx`, i.e. `ε²|||g|||²` with `g = (f − ρ)/ε`.
    fn energy(&self) -> f64 {
        let quad = self.problem.quadrature();
        let q = quad.len();
        let dx = self.problem.grid().dx();
        self.rho
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let fluct: f64 = self.f[i * q..(i + 1) * q]
                    .iter()
                    .zip(quad.weights())
                    .map(|(f, w)| w * (f - r) * (f - r))
                    .sum();
                r * r + fluct
            })
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

/// `(Aρ)_i = (κ_{i+1/2} δ⁰ρ_{i+1/2} − κ_{i−1/2} δ⁰ρ_{i−1/2}) / dx`.
pub fn apply_diffusion_operator(kappa: &[f64], dx: f64, rho: &[f64], out: &mut [f64]) {
    let m = rho.len();
    let inv = 1.0 / (dx * dx);
    for i in 0..m {
        let right = kappa[i] * (rho[(i + 1) % m] - rho[i]);
        let left = kappa[(i + m - 1) % m] * (rho[i] - rho[(i + m - 1) % m]);
        out[i] = (right - left) * inv;
    }
}

pub struct DiffusionExplicitStepper {
    problem: Arc<Problem>,
    kappa: Vec<f64>,
    dt: f64,
    rho: Vec<f64>,
    work: Vec<f64>,
    nf: Vec<f64>,
    steps: u64,
    time: f64,
}

impl DiffusionExplicitStepper {
    /// Uses `κ` of the problem's collision operator and scattering rate.
    pub fn new(problem: Arc<Problem>, rho: Vec<f64>, dt: f64) -> Result<Self> {
        let kappa = problem.kappa();
        Self::with_kappa(problem, kappa, rho, dt)
    }

    pub fn with_kappa(problem: Arc<Problem>, kappa: Vec<f64>, rho: Vec<f64>, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let m = problem.grid().num_cells();
        Error::check_len(m, rho.len())?;
        Error::check_len(m, kappa.len())?;
        if kappa.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(Error::Precondition(
                "diffusion coefficient must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            problem,
            kappa,
            dt,
            rho,
            work: vec![0.0; m],
            nf: vec![0.0; m],
            steps: 0,
            time: 0.0,
        })
    }
}

impl Stepper for DiffusionExplicitStepper {
    fn kind(&self) -> SchemeKind {
        SchemeKind::DiffusionExplicit
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
        p.noise()
            .factors_into(NodeFamily::Primal, draw, self.dt, &mut self.nf)?;
        apply_diffusion_operator(&self.kappa, p.grid().dx(), &self.rho, &mut self.work);
        for ((r, a), nf) in self.rho.iter_mut().zip(&self.work).zip(&self.nf) {
            *r += self.dt * a + *r * nf;
        }
        self.steps += 1;
        self.time += self.dt;
        guard(self.steps, &self.rho)
    }

    fn density(&self) -> &[f64] {
        &self.rho
    }

    fn energy(&self) -> f64 {
        self.rho.iter().map(|r| r * r).sum::<f64>() * self.problem.grid().dx()
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }

    fn time(&self) -> f64 {
        self.time
    }
}

/// Factorized periodic tridiagonal system
/// `a_i x_{i−1} + b_i x_i + c_i x_{i+1} = r_i` (indices mod n), solved by the
/// Sherman–Morrison correction of a plain tridiagonal sweep.
#[derive(Debug, Clone)]
pub struct PeriodicTridiagonal {
    a: Vec<f64>,
    c: Vec<f64>,
    /// Thomas pivots of the modified diagonal.
    pivot: Vec<f64>,
    /// Eliminated super-diagonal.
    upper: Vec<f64>,
    gamma: f64,
    beta: f64,
    z: Vec<f64>,
    denom: f64,
}

impl PeriodicTridiagonal {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = b.len();
        if n < 3 {
            return Err(Error::Precondition(format!(
                "periodic tridiagonal needs n >= 3, got {n}"
            )));
        }
        Error::check_len(n, a.len())?;
        Error::check_len(n, c.len())?;
        let alpha = c[n - 1];
        let beta = a[0];
        let gamma = -b[0];
        let mut bb = b;
        bb[0] -= gamma;
        bb[n - 1] -= alpha * beta / gamma;

        let mut pivot = vec![0.0; n];
        let mut upper = vec![0.0; n];
        pivot[0] = bb[0];
        for i in 1..n {
            upper[i - 1] = c[i - 1] / pivot[i - 1];
            pivot[i] = bb[i] - a[i] * upper[i - 1];
            if pivot[i] == 0.0 || !pivot[i].is_finite() {
                return Err(Error::Numerical("zero pivot in periodic tridiagonal solve".into()));
            }
        }
        let mut s = Self {
            a,
            c,
            pivot,
            upper,
            gamma,
            beta,
            z: Vec::new(),
            denom: 0.0,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        let mut z = vec![0.0; n];
        s.sweep(&u, &mut z);
        s.denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
        if s.denom == 0.0 {
            return Err(Error::Numerical("singular periodic tridiagonal system".into()));
        }
        s.z = z;
        Ok(s)
    }

    fn sweep(&self, r: &[f64], x: &mut [f64]) {
        let n = r.len();
        x[0] = r[0] / self.pivot[0];
        for i in 1..n {
            x[i] = (r[i] - self.a[i] * x[i - 1]) / self.pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper[i] * x[i + 1];
        }
    }

    pub fn solve_into(&self, r: &[f64], x: &mut [f64]) {
        let n = r.len();
        self.sweep(r, x);
        let fact = (x[0] + self.beta * x[n - 1] / self.gamma) / self.denom;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= fact * zi;
        }
    }

    pub fn len(&self) -> usize {
        self.pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivot.is_empty()
    }

    /// Original coefficients `(a_i, c_i)`.
    pub fn off_diagonals(&self) -> (&[f64], &[f64]) {
        (&self.a, &self.c)
    }
}

/// `(I − dt/2 A) ρ^{n+1} = (I + dt/2 A) ρ^n + ρ^n · noise`.
pub struct CrankNicolsonStepper {
    problem: Arc<Problem>,
    kappa: Vec<f64>,
    dt: f64,
    system: PeriodicTridiagonal,
    rho: Vec<f64>,
    rhs: Vec<f64>,
    work: Vec<f64>,
    nf: Vec<f64>,
    steps: u64,
    time: f64,
}

impl CrankNicolsonStepper {
    pub fn new(problem: Arc<Problem>, rho: Vec<f64>, dt: f64) -> Result<Self> {
        let kappa = problem.kappa();
        Self::with_kappa(problem, kappa, rho, dt)
    }

    pub fn with_kappa(problem: Arc<Problem>, kappa: Vec<f64>, rho: Vec<f64>, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let m = problem.grid().num_cells();
        Error::check_len(m, rho.len())?;
        Error::check_len(m, kappa.len())?;
        if kappa.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(Error::Precondition(
                "diffusion coefficient must be finite and >= 0".into(),
            ));
        }
        let system = Self::factor(&kappa, problem.grid().dx(), dt)?;
        Ok(Self {
            problem,
            kappa,
            dt,
            system,
            rho,
            rhs: vec![0.0; m],
            work: vec![0.0; m],
            nf: vec![0.0; m],
            steps: 0,
            time: 0.0,
        })
    }

    fn factor(kappa: &[f64], dx: f64, dt: f64) -> Result<PeriodicTridiagonal> {
        let m = kappa.len();
        let h = 0.5 * dt / (dx * dx);
        let a = (0..m).map(|i| -h * kappa[(i + m - 1) % m]).collect();
        let b = (0..m).map(|i| 1.0 + h * (kappa[i] + kappa[(i + m - 1) % m])).collect();
        let c = (0..m).map(|i| -h * kappa[i]).collect();
        PeriodicTridiagonal::new(a, b, c)
    }
}

impl Stepper for CrankNicolsonStepper {
    fn kind(&self) -> SchemeKind {
        SchemeKind::CrankNicolson
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn set_dt(&mut self, dt: f64) -> Result<()> {
        check_dt(dt)?;
        if dt != self.dt {
            self.system = Self::factor(&self.kappa, self.problem.grid().dx(), dt)?;
            self.dt = dt;
        }
        Ok(())
    }

    fn step(&mut self, draw: &GaussianDraw) -> Result<()> {
        let p = &*self.problem;
        p.noise()
            .factors_into(NodeFamily::Primal, draw, self.dt, &mut self.nf)?;
        apply_diffusion_operator(&self.kappa, p.grid().dx(), &self.rho, &mut self.work);
        for i in 0..self.rho.len() {
            self.rhs[i] = self.rho[i] + 0.5 * self.dt * self.work[i] + self.rho[i] * self.nf[i];
        }
        self.system.solve_into(&self.rhs, &mut self.rho);
        self.steps += 1;
        self.time += self.dt;
        guard(self.steps, &self.rho)
    }

    fn density(&self) -> &[f64] {
        &self.rho
    }

    fn energy(&self) -> f64 {
        self.rho.iter().map(|r| r * r).sum::<f64>() * self.problem.grid().dx()
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }

    fn time(&self) -> f64 {
        self.time
    }
}
