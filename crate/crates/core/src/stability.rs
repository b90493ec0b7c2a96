//! Von Neumann analysis of the telegraph scheme: amplification matrices,
//! exact 2×2 spectral norms, the polynomial `Q(X)` and CFL-region scans.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::smm::{cfl_dt, CflKind};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// `μ = dt/(ε dx)`, `λ = 1/(1 + dt/ε²)`, half phase angle `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplificationContext {
    pub mu: f64,
    pub lambda: f64,
    pub theta: f64,
}

impl AmplificationContext {
    pub fn new(dt: f64, dx: f64, epsilon: f64, theta: f64) -> Result<Self> {
        if !(dt > 0.0 && dx > 0.0 && epsilon > 0.0) {
            return Err(Error::config(
                "stability",
                format!("dt, dx, epsilon must be > 0 (got {dt}, {dx}, {epsilon})"),
            ));
        }
        Ok(Self {
            mu: dt / (epsilon * dx),
            lambda: 1.0 / (1.0 + dt / (epsilon * epsilon)),
            theta,
        })
    }

    pub fn from_parts(mu: f64, lambda: f64, theta: f64) -> Self {
        Self { mu, lambda, theta }
    }

    /// `X = sin²θ`.
    pub fn x(&self) -> f64 {
        let s = self.theta.sin();
        s * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex2x2(pub [[Complex64; 2]; 2]);

impl Complex2x2 {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self([[one, zero], [zero, one]])
    }

    pub fn real(m: [[f64; 2]; 2]) -> Self {
        Self(m.map(|row| row.map(|x| Complex64::new(x, 0.0))))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.0[r][c]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Self(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.0;
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] += other.0[r][c];
            }
        }
        Self(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|row| row.map(|x| x * s)))
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Telegraph amplification matrix with the noise factor `1 + dt/2 + √dt ξ`
/// replaced by `a`; `a = 1` gives `Ã`.
fn amplification_with(ctx: &AmplificationContext, a: f64) -> Complex2x2 {
    let AmplificationContext { mu, lambda, theta } = *ctx;
    let x = ctx.x();
    let s = theta.sin();
    let k = a - 2.0 * mu * x;
    let re = |v: f64| Complex64::new(v, 0.0);
    Complex2x2([
        [re(a - 4.0 * mu * mu * lambda * x), -I * (k * 2.0 * lambda * mu * s)],
        [-I * (2.0 * mu * lambda * s), re(k * lambda)],
    ])
}

/// `Ã`.
pub fn amplification_det(ctx: &AmplificationContext) -> Complex2x2 {
    amplification_with(ctx, 1.0)
}

/// `A_{n+1} = Ã + √dt ξ B + dt C`.
pub fn amplification_stoch(ctx: &AmplificationContext, xi: f64, dt: f64) -> Complex2x2 {
    amplification_with(ctx, 1.0 + 0.5 * dt + dt.sqrt() * xi)
}

/// Coefficient of `√dt ξ` in `A_{n+1}`.
pub fn noise_matrix_b(ctx: &AmplificationContext) -> Complex2x2 {
    let AmplificationContext { mu, lambda, theta } = *ctx;
    let zero = Complex64::new(0.0, 0.0);
    Complex2x2([
        [Complex64::new(1.0, 0.0), -I * (2.0 * lambda * mu * theta.sin())],
        [zero, Complex64::new(lambda, 0.0)],
    ])
}

/// Coefficient of `dt` in `A_{n+1}`, `B/2`.
pub fn noise_matrix_c(ctx: &AmplificationContext) -> Complex2x2 {
    noise_matrix_b(ctx).scale(0.5)
}

/// Largest eigenvalue of `m* m`, the squared operator 2-norm.
///
/// `T² − 4D` is evaluated as `(p − r)² + 4|q|²` from the entries of the
/// Hermitian `m* m = [[p, q], [q̄, r]]`. The two are equal, but the direct
/// difference loses all digits when `m` is within rounding of a diagonal
/// matrix with nearly equal entries, which is the regime `dt → 0`.
pub fn spectral_norm_sq(m: &Complex2x2) -> f64 {
    let h = m.adjoint().mul(m);
    let p = h.get(0, 0).re;
    let r = h.get(1, 1).re;
    let q = h.get(0, 1);
    let disc = (p - r) * (p - r) + 4.0 * q.norm_sqr();
    0.5 * (p + r + disc.sqrt())
}

/// Values of `Q(X) = 1 − λ + 2λμX − 2λμ²X² − 2λμ²X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityPolynomial {
    pub q0: f64,
    pub q1: f64,
    /// `min_{X∈[0,1]} Q`, attained at an endpoint by concavity.
    pub min: f64,
    /// `Q` at the context's own `X`.
    pub q_at_x: f64,
    /// `1 − T̃ + D̃ = 8λμ²X Q(X)` at the context's `X`.
    pub one_minus_t_plus_d: f64,
}

pub fn q_polynomial(ctx: &AmplificationContext, x: f64) -> f64 {
    let AmplificationContext { mu, lambda, .. } = *ctx;
    1.0 - lambda + 2.0 * lambda * mu * x - 2.0 * lambda * mu * mu * x * x - 2.0 * lambda * mu * mu * x
}

pub fn stability_polynomial(ctx: &AmplificationContext) -> StabilityPolynomial {
    let q0 = q_polynomial(ctx, 0.0);
    let q1 = q_polynomial(ctx, 1.0);
    let x = ctx.x();
    let q_at_x = q_polynomial(ctx, x);
    StabilityPolynomial {
        q0,
        q1,
        min: q0.min(q1),
        q_at_x,
        one_minus_t_plus_d: 8.0 * ctx.lambda * ctx.mu * ctx.mu * x * q_at_x,
    }
}

/// Telegraph CFL `dt ≤ ½(dx²/2 + ε dx)`.
pub fn telegraph_cfl_holds(dt: f64, dx: f64, epsilon: f64) -> bool {
    cfl_dt(dx, epsilon, 0.5, 1.0, CflKind::Telegraph).is_ok_and(|bound| dt <= bound)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub dt: f64,
    pub dx: f64,
    pub epsilon: f64,
    pub cfl_ok: bool,
    pub max_norm_sq: f64,
    pub q0: f64,
    pub q1: f64,
}

impl ScanPoint {
    /// CFL holds yet some mode is amplified.
    pub fn is_violation(&self) -> bool {
        self.cfl_ok && self.max_norm_sq > 1.0 + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub points: Vec<ScanPoint>,
}

impl ScanReport {
    pub fn violations(&self) -> Vec<&ScanPoint> {
        self.points.iter().filter(|p| p.is_violation()).collect()
    }

    /// Smallest `Q(1)` over CFL-compliant points.
    pub fn min_q1_under_cfl(&self) -> Option<f64> {
        self.points.iter().filter(|p| p.cfl_ok).map(|p| p.q1).reduce(f64::min)
    }

    /// Largest amplification among points violating the CFL condition.
    pub fn max_norm_sq_outside_cfl(&self) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| !p.cfl_ok)
            .map(|p| p.max_norm_sq)
            .reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dt,dx,epsilon,cfl_ok,max_norm_sq,q0,q1\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e}\n",
                p.dt, p.dx, p.epsilon, p.cfl_ok, p.max_norm_sq, p.q0, p.q1
            ));
        }
        out
    }
}

/// `max_θ ‖Ã‖₂²` over `samples` uniform angles in `[0, 2π]` plus `X ∈ {0, 1}`.
pub fn max_norm_sq(dt: f64, dx: f64, epsilon: f64, samples: usize) -> Result<f64> {
    let mut best: f64 = 0.0;
    let denom = samples.saturating_sub(1).max(1) as f64;
    let thetas = (0..samples).map(|k| 2.0 * PI * k as f64 / denom).chain([0.0, 0.5 * PI]);
    for theta in thetas {
        let ctx = AmplificationContext::new(dt, dx, epsilon, theta)?;
        best = best.max(spectral_norm_sq(&amplification_det(&ctx)));
    }
    Ok(best)
}

pub fn scan_point(dt: f64, dx: f64, epsilon: f64, samples: usize) -> Result<ScanPoint> {
    let poly = stability_polynomial(&AmplificationContext::new(dt, dx, epsilon, 0.0)?);
    Ok(ScanPoint {
        dt,
        dx,
        epsilon,
        cfl_ok: telegraph_cfl_holds(dt, dx, epsilon),
        max_norm_sq: max_norm_sq(dt, dx, epsilon, samples)?,
        q0: poly.q0,
        q1: poly.q1,
    })
}

/// Every combination of the given values, in `dt`-major order.
pub fn scan_stability(dts: &[f64], dxs: &[f64], epsilons: &[f64], samples: usize) -> Result<ScanReport> {
    if dts.is_empty() || dxs.is_empty() || epsilons.is_empty() || samples == 0 {
        return Err(Error::config("stability", "scan ranges must be nonempty"));
    }
    let combos: Vec<(f64, f64, f64)> = dts
        .iter()
        .flat_map(|&dt| {
            dxs.iter()
                .flat_map(move |&dx| epsilons.iter().map(move |&e| (dt, dx, e)))
        })
        .collect();
    let points = combos
        .par_iter()
        .map(|&(dt, dx, e)| scan_point(dt, dx, e, samples))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanReport { points })
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Smallest `L` with `E_n ≤ e^{L t_n} E_0` over samples with
/// `t_n ≥ min_fraction · t_max`. Early samples are excluded because their
/// ratio is dominated by a few increments rather than by growth.
pub fn fit_growth_rate(trace: &[(f64, f64)], min_fraction: f64) -> Result<f64> {
    let (t0, e0) = *trace
        .first()
        .ok_or_else(|| Error::Precondition("empty energy trace".into()))?;
    if t0 != 0.0 || !(e0 > 0.0) {
        return Err(Error::Precondition(
            "energy trace must start at t = 0 with positive energy".into(),
        ));
    }
    let t_max = trace.last().map_or(0.0, |p| p.0);
    trace
        .iter()
        .skip(1)
        .filter(|(t, _)| *t >= min_fraction * t_max && *t > 0.0)
        .map(|(t, e)| (e / e0).ln() / t)
        .reduce(f64::max)
        .ok_or_else(|| Error::Precondition("no energy samples in the fitting window".into()))
}

/// `‖ρ‖² + ε² |||g|||²`.
pub fn discrete_energy(
    grid: &crate::grid::StaggeredGrid1D,
    quad: &crate::grid::VelocityQuadrature,
    state: &crate::smm::KineticState,
    epsilon: f64,
) -> Result<f64> {
    let rho = crate::grid::NodalField::primal(state.rho.clone());
    let macro_sq = crate::grid::norm_macro_sq(grid, &rho)?;
    let micro_sq = crate::grid::norm_micro_sq(grid, quad, &state.g)?;
    Ok(macro_sq + epsilon * epsilon * micro_sq)
}

/// `Σ_i (ρ_i² + J_{i+1/2}²) dx`.
pub fn telegraph_energy(grid: &crate::grid::StaggeredGrid1D, state: &crate::smm::TelegraphState) -> Result<f64> {
    Error::check_len(grid.num_cells(), state.rho.len())?;
    Error::check_len(grid.num_cells(), state.current.len())?;
    Ok(state
        .rho
        .iter()
        .zip(&state.current)
        .map(|(r, j)| r * r + j * j)
        .sum::<f64>()
        * grid.dx())
}
