//! Shared read-only problem data and the common stepper interface.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::collision::{CollisionOperator, ScatterField};
use crate::error::{Error, Result};
use crate::grid::{StaggeredGrid1D, VelocityQuadrature};
use crate::noise::{GaussianDraw, NoiseModel};
use crate::reference::{CrankNicolsonStepper, DiffusionExplicitStepper, ExplicitKineticStepper};
use crate::smm::{cfl_dt, CflKind, KineticState, SmmStepper, TelegraphState, TelegraphStepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Smm,
    Telegraph,
    ExplicitKinetic,
    CrankNicolson,
    DiffusionExplicit,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Smm,
        SchemeKind::Telegraph,
        SchemeKind::ExplicitKinetic,
        SchemeKind::CrankNicolson,
        SchemeKind::DiffusionExplicit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Smm => "smm",
            SchemeKind::Telegraph => "telegraph",
            SchemeKind::ExplicitKinetic => "explicit_kinetic",
            SchemeKind::CrankNicolson => "crank_nicolson",
            SchemeKind::DiffusionExplicit => "diffusion_explicit",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a stepper reads but never mutates.
#[derive(Debug, Clone)]
pub struct Problem {
    grid: StaggeredGrid1D,
    collision: CollisionOperator,
    sigma: ScatterField,
    noise: NoiseModel,
    epsilon: f64,
    cfl_safety: f64,
}

impl Problem {
    pub fn new(
        grid: StaggeredGrid1D,
        collision: CollisionOperator,
        sigma: ScatterField,
        noise: NoiseModel,
        epsilon: f64,
        cfl_safety: f64,
    ) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::config(
                "scheme.epsilon",
                format!("must be finite and > 0, got {epsilon}"),
            ));
        }
        if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
            return Err(Error::config(
                "scheme.cfl_safety",
                format!("must lie in (0, 1], got {cfl_safety}"),
            ));
        }
        Error::check_len(grid.num_cells(), sigma.dual().len())?;
        Error::check_len(grid.num_cells(), noise.num_cells())?;
        Ok(Self {
            grid,
            collision,
            sigma,
            noise,
            epsilon,
            cfl_safety,
        })
    }

    /// One-group kernel, `σ ≡ 1`, safety factor 0.9.
    pub fn one_group(grid: StaggeredGrid1D, quad: VelocityQuadrature, noise: NoiseModel, epsilon: f64) -> Result<Self> {
        let sigma = ScatterField::uniform(&grid, 1.0)?;
        let collision = CollisionOperator::one_group(quad)?;
        Self::new(grid, collision, sigma, noise, epsilon, 0.9)
    }

    pub fn grid(&self) -> &StaggeredGrid1D {
        &self.grid
    }

    pub fn quadrature(&self) -> &VelocityQuadrature {
        self.collision.quadrature()
    }

    pub fn collision(&self) -> &CollisionOperator {
        &self.collision
    }

    pub fn sigma(&self) -> &ScatterField {
        &self.sigma
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn cfl_safety(&self) -> f64 {
        self.cfl_safety
    }

    /// Diffusion coefficient on dual nodes.
    pub fn kappa(&self) -> Vec<f64> {
        self.collision.diffusion_coefficient(&self.sigma)
    }

    /// Stability bound of `kind` before the safety factor. Crank–Nicolson has
    /// none; its natural step `dx` is returned.
    pub fn stability_bound(&self, kind: SchemeKind) -> Result<f64> {
        let dx = self.grid.dx();
        let eps = self.epsilon;
        let (s_m, _) = self.collision.kernel().bounds();
        let (sigma_m, sigma_max) = self.sigma.bounds();
        match kind {
            SchemeKind::Smm => cfl_dt(dx, eps, s_m, sigma_m, CflKind::General),
            SchemeKind::Telegraph => cfl_dt(dx, eps, 0.5, 1.0, CflKind::Telegraph),
            SchemeKind::ExplicitKinetic => {
                let q = self.quadrature().len();
                let lmax = (0..q)
                    .map(|a| self.collision.matrix()[a * q + a].abs())
                    .fold(0.0, f64::max);
                Ok(1.0 / (self.quadrature().max_speed() / (eps * dx) + sigma_max * lmax / (eps * eps)))
            }
            SchemeKind::DiffusionExplicit => {
                let kmax = self.kappa().into_iter().fold(0.0, f64::max);
                Ok(dx * dx / (2.0 * kmax))
            }
            SchemeKind::CrankNicolson => Ok(dx),
        }
    }

    /// Largest step used when `kind` picks its own step.
    pub fn auto_dt(&self, kind: SchemeKind) -> Result<f64> {
        let bound = self.stability_bound(kind)?;
        Ok(match kind {
            SchemeKind::CrankNicolson => bound,
            _ => self.cfl_safety * bound,
        })
    }
}

/// A single-path time integrator owning its state.
pub trait Stepper: Send {
    fn kind(&self) -> SchemeKind;

    fn dt(&self) -> f64;

    /// Changes the step for subsequent calls, rebuilding cached solves.
    fn set_dt(&mut self, dt: f64) -> Result<()>;

    /// Advances one step with the given increments.
    fn step(&mut self, draw: &GaussianDraw) -> Result<()>;

    /// `ρ` on primal nodes.
    fn density(&self) -> &[f64];

    /// `‖ρ‖² + ε²|||g|||²` in the scheme's own variables.
    fn energy(&self) -> f64;

    fn steps_taken(&self) -> u64;

    fn time(&self) -> f64;
}

pub(crate) fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            "scheme.dt",
            format!("time step must be finite and > 0, got {dt}"),
        ))
    }
}

/// Blow-up guard shared by all steppers.
pub(crate) fn guard(step: u64, rho: &[f64]) -> Result<()> {
    let mut max_abs: f64 = 0.0;
    for r in rho {
        if !r.is_finite() {
            return Err(Error::BlowUp {
                step,
                max_abs: f64::INFINITY,
            });
        }
        max_abs = max_abs.max(r.abs());
    }
    if max_abs > 1e12 {
        Err(Error::BlowUp { step, max_abs })
    } else {
        Ok(())
    }
}

/// Builds a stepper for `kind` from a velocity-independent initial
/// distribution `f⁰(x) = ρ⁰(x)`, so `g⁰ = 0` and `J⁰ = 0`.
pub fn build_stepper(kind: SchemeKind, problem: Arc<Problem>, rho0: &[f64], dt: f64) -> Result<Box<dyn Stepper>> {
    let m = problem.grid().num_cells();
    Error::check_len(m, rho0.len())?;
    Ok(match kind {
        SchemeKind::Smm => {
            let q = problem.quadrature().len();
            let state = KineticState::new(rho0.to_vec(), crate::grid::KineticField::zeros(m, q));
            Box::new(SmmStepper::new(problem, state, dt)?)
        }
        SchemeKind::Telegraph => {
            let state = TelegraphState::new(rho0.to_vec(), vec![0.0; m])?;
            Box::new(TelegraphStepper::new(problem, state, dt)?)
        }
        SchemeKind::ExplicitKinetic => {
            let q = problem.quadrature().len();
            let f = rho0.iter().flat_map(|r| std::iter::repeat_n(*r, q)).collect();
            Box::new(ExplicitKineticStepper::new(problem, f, dt)?)
        }
        SchemeKind::CrankNicolson => Box::new(CrankNicolsonStepper::new(problem, rho0.to_vec(), dt)?),
        SchemeKind::DiffusionExplicit => Box::new(DiffusionExplicitStepper::new(problem, rho0.to_vec(), dt)?),
    })
}
