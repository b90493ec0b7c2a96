//! Linear collision operator `L f(v) = ∫ s(v,v')(f(v') − f(v)) dv'` on the
//! velocity quadrature, its pseudo-inverse on zero-mean profiles, the
//! diffusion coefficient and the implicit relaxation solve of the scheme.
//!
//! With quadrature weights normalized to one, `∫ · dv'` becomes `Σ_q' 2 w_q' ·`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{StaggeredGrid1D, VelocityQuadrature};

/// Symmetric positive kernel sampled on the quadrature nodes and balanced so
/// that `Σ_q' 2 w_q' s(v_q, v_q') = 1` for every `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionKernel {
    size: usize,
    values: Vec<f64>,
    s_min: f64,
    s_max: f64,
    one_group: bool,
}

impl CollisionKernel {
    /// `s ≡ 1/2`, giving `L f = Π f − f`.
    pub fn one_group(quad: &VelocityQuadrature) -> Self {
        let q = quad.len();
        Self {
            size: q,
            values: vec![0.5; q * q],
            s_min: 0.5,
            s_max: 0.5,
            one_group: true,
        }
    }

    /// Samples `s` on the node pairs and rescales it symmetrically,
    /// `s'_{qq'} = d_q s_{qq'} d_{q'}`, until every row integrates to one.
    pub fn from_fn(quad: &VelocityQuadrature, s: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = quad.len();
        let v = quad.nodes();
        let mut values = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                values[a * n + b] = s(v[a], v[b]);
            }
        }
        let scale = values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for a in 0..n {
            for b in 0..a {
                if (values[a * n + b] - values[b * n + a]).abs() > 1e-12 * scale {
                    return Err(Error::config("collision.kernel", "kernel must be symmetric"));
                }
            }
        }
        if values.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::config("collision.kernel", "kernel must be positive and finite"));
        }

        let w2: Vec<f64> = quad.weights().iter().map(|w| 2.0 * w).collect();
        let row_sums = |vals: &[f64], d: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|a| d[a] * (0..n).map(|b| vals[a * n + b] * w2[b] * d[b]).sum::<f64>())
                .collect()
        };
        let mut d = vec![1.0; n];
        let mut converged = false;
        for _ in 0..10_000 {
            let sums = row_sums(&values, &d);
            if sums.iter().all(|r| (r - 1.0).abs() < 1e-15 * n as f64) {
                converged = true;
                break;
            }
            for a in 0..n {
                d[a] = (d[a] * d[a] / sums[a]).sqrt();
            }
        }
        if !converged {
            return Err(Error::Numerical("kernel balancing did not converge".into()));
        }
        for a in 0..n {
            for b in 0..n {
                values[a * n + b] *= d[a] * d[b];
            }
        }
        // exact symmetry after rounding
        for a in 0..n {
            for b in 0..a {
                let m = 0.5 * (values[a * n + b] + values[b * n + a]);
                values[a * n + b] = m;
                values[b * n + a] = m;
            }
        }
        let s_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let s_max = values.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            size: n,
            values,
            s_min,
            s_max,
            one_group: false,
        })
    }

    pub fn value(&self, q: usize, qp: usize) -> f64 {
        self.values[q * self.size + qp]
    }

    /// `(s_m, s_M)` of the discrete kernel.
    pub fn bounds(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    pub fn is_one_group(&self) -> bool {
        self.one_group
    }
}

/// Scattering rate `σ` sampled on both node families.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterField {
    primal: Vec<f64>,
    dual: Vec<f64>,
    min: f64,
    max: f64,
}

impl ScatterField {
    pub fn uniform(grid: &StaggeredGrid1D, sigma: f64) -> Result<Self> {
        Self::from_fn(grid, |_| sigma)
    }

    pub fn from_fn(grid: &StaggeredGrid1D, sigma: impl Fn(f64) -> f64) -> Result<Self> {
        let m = grid.num_cells();
        let primal: Vec<f64> = (0..m).map(|i| sigma(grid.primal_x(i))).collect();
        let dual: Vec<f64> = (0..m).map(|i| sigma(grid.dual_x(i))).collect();
        if primal.iter().chain(&dual).any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::config(
                "collision.sigma",
                "scattering rate must be positive and finite",
            ));
        }
        let min = primal.iter().chain(&dual).copied().fold(f64::INFINITY, f64::min);
        let max = primal.iter().chain(&dual).copied().fold(0.0, f64::max);
        Ok(Self { primal, dual, min, max })
    }

    pub fn primal(&self) -> &[f64] {
        &self.primal
    }

    pub fn dual(&self) -> &[f64] {
        &self.dual
    }

    /// `(σ_m, σ_M)`.
    pub fn bounds(&self) -> (f64, f64) {
        (self.min, self.max)
    }
}

#[derive(Debug, Clone)]
pub struct CollisionOperator {
    quad: VelocityQuadrature,
    kernel: CollisionKernel,
    lmat: Vec<f64>,
    /// `(L − 1wᵀ)⁻¹`, row-major.
    bordered_inv: Vec<f64>,
    unit_kappa: f64,
}

impl CollisionOperator {
    pub fn new(quad: VelocityQuadrature, kernel: CollisionKernel) -> Result<Self> {
        let n = quad.len();
        Error::check_len(n, kernel.size)?;
        let w = quad.weights();
        let mut lmat = vec![0.0; n * n];
        for a in 0..n {
            let mut diag = 0.0;
            for b in 0..n {
                if a != b {
                    let gain = 2.0 * w[b] * kernel.value(a, b);
                    lmat[a * n + b] = gain;
                    diag += gain;
                }
            }
            lmat[a * n + a] = -diag;
        }

        let bordered = DMatrix::from_fn(n, n, |a, b| lmat[a * n + b] - w[b]);
        let inv = bordered
            .try_inverse()
            .ok_or_else(|| Error::Numerical("collision operator is singular on zero-mean profiles".into()))?;
        let bordered_inv = (0..n * n).map(|k| inv[(k / n, k % n)]).collect();

        let mut op = Self {
            quad,
            kernel,
            lmat,
            bordered_inv,
            unit_kappa: 0.0,
        };
        let v = op.quad.nodes().to_vec();
        let linv_v = op.pseudo_inverse_apply(&v)?;
        op.unit_kappa = -op.quad.flux(&linv_v);
        if !(op.unit_kappa > 0.0) {
            return Err(Error::Numerical(format!(
                "non-positive diffusion coefficient {}",
                op.unit_kappa
            )));
        }
        Ok(op)
    }

    pub fn one_group(quad: VelocityQuadrature) -> Result<Self> {
        let kernel = CollisionKernel::one_group(&quad);
        Self::new(quad, kernel)
    }

    pub fn quadrature(&self) -> &VelocityQuadrature {
        &self.quad
    }

    pub fn kernel(&self) -> &CollisionKernel {
        &self.kernel
    }

    /// Row-major `Q × Q` matrix of `L`.
    pub fn matrix(&self) -> &[f64] {
        &self.lmat
    }

    pub fn apply_l(&self, phi: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.quad.len(), phi.len())?;
        let mut out = vec![0.0; phi.len()];
        self.apply_l_into(phi, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn apply_l_into(&self, phi: &[f64], out: &mut [f64]) {
        matvec(&self.lmat, phi, out);
    }

    /// Solves `L φ = h` with `Π φ = 0`, for `Π h = 0`.
    pub fn pseudo_inverse_apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.quad.len(), h.len())?;
        let mean = self.quad.mean(h);
        let size = h
            .iter()
            .zip(self.quad.weights())
            .map(|(x, w)| w * x * x)
            .sum::<f64>()
            .sqrt();
        if mean.abs() > 1e-10 * size {
            return Err(Error::Precondition(format!(
                "pseudo-inverse input must have zero velocity mean, got Πh = {mean:e}"
            )));
        }
        let mut out = vec![0.0; h.len()];
        matvec(&self.bordered_inv, h, &mut out);
        let drift = self.quad.mean(&out);
        out.iter_mut().for_each(|x| *x -= drift);
        let residual = self
            .apply_l(&out)?
            .iter()
            .zip(h)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = h.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if residual > 1e-10 * scale.max(f64::MIN_POSITIVE) && scale > 0.0 {
            return Err(Error::Numerical(format!("pseudo-inverse residual {residual:e}")));
        }
        Ok(out)
    }

    /// `−Π(v L⁻¹ v)`, the diffusion coefficient for `σ = 1`.
    pub fn unit_diffusivity(&self) -> f64 {
        self.unit_kappa
    }

    /// `κ_{i+1/2} = −Π(v L⁻¹ v) / σ_{i+1/2}`.
    pub fn diffusion_coefficient(&self, sigma: &ScatterField) -> Vec<f64> {
        sigma.dual().iter().map(|s| self.unit_kappa / s).collect()
    }

    /// Solves `(I − (σ dt/ε²) L) g = r` for one cell.
    pub fn implicit_collision_solve(&self, r: &[f64], sigma: f64, dt: f64, epsilon: f64) -> Result<Vec<f64>> {
        Error::check_len(self.quad.len(), r.len())?;
        if !(dt >= 0.0 && epsilon > 0.0 && sigma > 0.0) {
            return Err(Error::Precondition(format!(
                "implicit collision solve needs dt >= 0, epsilon > 0, sigma > 0 (got {dt}, {epsilon}, {sigma})"
            )));
        }
        let solve = self.relaxation(sigma * dt / (epsilon * epsilon))?;
        let mut out = vec![0.0; r.len()];
        solve.solve_into(&self.quad, r, &mut out);
        Ok(out)
    }

    /// Builds the solver for `(I − c L) g = r`.
    pub fn relaxation(&self, c: f64) -> Result<RelaxationSolve> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Precondition(format!(
                "relaxation strength must be finite and >= 0, got {c}"
            )));
        }
        if self.kernel.one_group {
            return Ok(RelaxationSolve {
                damping: Damping::Scalar(1.0 / (1.0 + c)),
            });
        }
        let n = self.quad.len();
        let w = self.quad.weights();
        // I + c(1wᵀ − L): equal to I − cL on zero-mean profiles, uniformly
        // conditioned in c.
        let m = DMatrix::from_fn(n, n, |a, b| {
            let id = if a == b { 1.0 } else { 0.0 };
            id + c * (w[b] - self.lmat[a * n + b])
        });
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("relaxation matrix singular for c = {c}")))?;
        Ok(RelaxationSolve {
            damping: Damping::Dense((0..n * n).map(|k| inv[(k / n, k % n)]).collect()),
        })
    }
}

#[derive(Debug, Clone)]
enum Damping {
    Scalar(f64),
    Dense(Vec<f64>),
}

/// Cached solver for `(I − c L) g = r` at a fixed `c`.
#[derive(Debug, Clone)]
pub struct RelaxationSolve {
    damping: Damping,
}

impl RelaxationSolve {
    /// Writes the solution into `out`. `Π out = Π r` holds to rounding.
    #[inline]
    pub fn solve_into(&self, quad: &VelocityQuadrature, r: &[f64], out: &mut [f64]) {
        let mean = quad.mean(r);
        match &self.damping {
            Damping::Scalar(f) => {
                for (o, x) in out.iter_mut().zip(r) {
                    *o = mean + f * (x - mean);
                }
            }
            Damping::Dense(k) => {
                let n = r.len();
                for a in 0..n {
                    let row = &k[a * n..(a + 1) * n];
                    out[a] = row.iter().zip(r).map(|(kk, x)| kk * (x - mean)).sum();
                }
                let drift = quad.mean(out);
                out.iter_mut().for_each(|o| *o += mean - drift);
            }
        }
    }
}

/// One relaxation solver per distinct scattering value on the dual nodes.
#[derive(Debug, Clone)]
pub struct RelaxationCache {
    solves: Vec<RelaxationSolve>,
    cell_solve: Vec<usize>,
}

impl RelaxationCache {
    pub fn new(op: &CollisionOperator, sigma_dual: &[f64], dt: f64, epsilon: f64) -> Result<Self> {
        let mut keys: Vec<u64> = Vec::new();
        let mut solves = Vec::new();
        let mut cell_solve = Vec::with_capacity(sigma_dual.len());
        for &s in sigma_dual {
            let idx = match keys.iter().position(|&k| k == s.to_bits()) {
                Some(idx) => idx,
                None => {
                    keys.push(s.to_bits());
                    solves.push(op.relaxation(s * dt / (epsilon * epsilon))?);
                    keys.len() - 1
                }
            };
            cell_solve.push(idx);
        }
        Ok(Self { solves, cell_solve })
    }

    #[inline]
    pub fn cell(&self, i: usize) -> &RelaxationSolve {
        &self.solves[self.cell_solve[i]]
    }

    pub fn distinct(&self) -> usize {
        self.solves.len()
    }
}

#[inline]
fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (a, o) in out.iter_mut().enumerate() {
        *o = m[a * n..(a + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum();
    }
}
