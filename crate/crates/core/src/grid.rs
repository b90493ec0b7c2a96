//! Periodic staggered grid, velocity quadrature and the discrete operators
//! acting on grid functions.
//!
//! Primal nodes sit at `x_i = i dx`, dual nodes at `x_{i+1/2} = (i + 1/2) dx`,
//! `i = 0..M`. Dual node `i` in every array stands for `x_{i+1/2}`. All
//! wraparound goes through [`StaggeredGrid1D::wrap`]; there are no ghost cells.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredGrid1D {
    num_cells: usize,
    length: f64,
    dx: f64,
}

impl StaggeredGrid1D {
    pub fn new(num_cells: usize, length: f64) -> Result<Self> {
        if num_cells < 3 {
            return Err(Error::config(
                "grid.num_cells",
                format!("need at least 3 cells, got {num_cells}"),
            ));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::config(
                "grid.domain_length",
                format!("must be positive and finite, got {length}"),
            ));
        }
        Ok(Self {
            num_cells,
            length,
            dx: length / num_cells as f64,
        })
    }

    /// The unit-length grid used by the reproduced experiments.
    pub fn unit(num_cells: usize) -> Result<Self> {
        Self::new(num_cells, 1.0)
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn primal_x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn dual_x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn node_x(&self, family: NodeFamily, i: usize) -> f64 {
        match family {
            NodeFamily::Primal => self.primal_x(i),
            NodeFamily::Dual => self.dual_x(i),
        }
    }

    pub fn nodes(&self, family: NodeFamily) -> Vec<f64> {
        (0..self.num_cells).map(|i| self.node_x(family, i)).collect()
    }

    /// Periodic index map: `wrap(i + M) == wrap(i)` for every `i`.
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.num_cells as isize) as usize
    }

    pub fn sample(&self, family: NodeFamily, f: impl Fn(f64) -> f64) -> NodalField {
        NodalField {
            family,
            values: (0..self.num_cells).map(|i| f(self.node_x(family, i))).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    /// Gauss–Legendre rule on `[-1, 1]`.
    GaussLegendre,
    /// The discrete velocity set `{-1, +1}` of the telegraph model.
    TwoPoint,
}

/// Nodes and weights on `[-1, 1]` realizing the velocity average
/// `Π φ = ½ ∫ φ(v) dv` as `Σ_q w_q φ(v_q)`, with `Σ_q w_q = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityQuadrature {
    kind: QuadratureKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl VelocityQuadrature {
    pub const DEFAULT_NODES: usize = 16;

    /// Gauss–Legendre rule with `count` nodes, mirrored so that `v_q = -v_{Q-1-q}`
    /// holds bit for bit and the first moment vanishes exactly.
    pub fn gauss_legendre(count: usize) -> Result<Self> {
        let degree =
            NonZeroUsize::new(count).ok_or_else(|| Error::config("velocity.nodes", "need at least one node"))?;
        let rule = GaussLegendre::new(degree);
        let mut pairs: Vec<(f64, f64)> = rule.nodes().copied().zip(rule.weights().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut nodes = vec![0.0; count];
        let mut weights = vec![0.0; count];
        for q in 0..count.div_ceil(2) {
            let mirror = count - 1 - q;
            let v = 0.5 * (pairs[mirror].0 - pairs[q].0);
            let w = 0.5 * (pairs[mirror].1 + pairs[q].1);
            nodes[q] = -v;
            nodes[mirror] = v;
            weights[q] = w;
            weights[mirror] = w;
        }
        if count % 2 == 1 {
            nodes[count / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        Ok(Self {
            kind: QuadratureKind::GaussLegendre,
            nodes,
            weights,
        })
    }

    pub fn two_point() -> Self {
        Self {
            kind: QuadratureKind::TwoPoint,
            nodes: vec![-1.0, 1.0],
            weights: vec![0.5, 0.5],
        }
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max_speed(&self) -> f64 {
        self.nodes.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `Π φ = Σ_q w_q φ(v_q)`.
    pub fn project(&self, phi: &[f64]) -> Result<f64> {
        Error::check_len(self.len(), phi.len())?;
        Ok(self.mean(phi))
    }

    /// `Π` without the length check, for inner loops.
    #[inline]
    pub(crate) fn mean(&self, phi: &[f64]) -> f64 {
        self.weights.iter().zip(phi).map(|(w, p)| w * p).sum()
    }

    /// `Π (v φ)`.
    #[inline]
    pub(crate) fn flux(&self, phi: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.nodes)
            .zip(phi)
            .map(|((w, v), p)| w * v * p)
            .sum()
    }

    /// Evaluates a velocity profile on the nodes.
    pub fn profile(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&v| f(v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFamily {
    Primal,
    Dual,
}

/// A scalar grid function tagged with the node family it lives on.
/// Macroscopic densities are primal fields.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    family: NodeFamily,
    values: Vec<f64>,
}

impl NodalField {
    pub fn primal(values: Vec<f64>) -> Self {
        Self {
            family: NodeFamily::Primal,
            values,
        }
    }

    pub fn dual(values: Vec<f64>) -> Self {
        Self {
            family: NodeFamily::Dual,
            values,
        }
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn expect(&self, family: NodeFamily, grid: &StaggeredGrid1D) -> Result<()> {
        if self.family != family {
            return Err(Error::Alignment {
                expected: family,
                actual: self.family,
            });
        }
        Error::check_len(grid.num_cells(), self.values.len())
    }
}

/// Velocity-dependent field on the dual nodes, stored row-major:
/// `data[i * Q + q] = g_{i+1/2}(v_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticField {
    num_velocities: usize,
    data: Vec<f64>,
}

impl KineticField {
    pub fn zeros(num_cells: usize, num_velocities: usize) -> Self {
        Self {
            num_velocities,
            data: vec![0.0; num_cells * num_velocities],
        }
    }

    pub fn from_vec(num_cells: usize, num_velocities: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_len(num_cells * num_velocities, data.len())?;
        Ok(Self { num_velocities, data })
    }

    /// Samples `f(x_{i+1/2}, v_q)`.
    pub fn from_fn(grid: &StaggeredGrid1D, quad: &VelocityQuadrature, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = (0..grid.num_cells())
            .flat_map(|i| {
                let x = grid.dual_x(i);
                quad.nodes().iter().map(move |&v| (x, v)).collect::<Vec<_>>()
            })
            .map(|(x, v)| f(x, v))
            .collect();
        Self {
            num_velocities: quad.len(),
            data,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.data.len().checked_div(self.num_velocities).unwrap_or(0)
    }

    pub fn num_velocities(&self) -> usize {
        self.num_velocities
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_velocities..(i + 1) * self.num_velocities]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.num_velocities..(i + 1) * self.num_velocities]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn check(&self, grid: &StaggeredGrid1D, quad: &VelocityQuadrature) -> Result<()> {
        Error::check_len(quad.len(), self.num_velocities)?;
        Error::check_len(grid.num_cells() * quad.len(), self.data.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difference {
    /// `D⁻φ_{i+1/2} = (φ_{i+1/2} − φ_{i−1/2})/dx`, dual → dual.
    Minus,
    /// `D⁺φ_{i+1/2} = (φ_{i+3/2} − φ_{i+1/2})/dx`, dual → dual.
    Plus,
    /// `Dᶜφ_{i+1/2} = (φ_{i+3/2} − φ_{i−1/2})/(2dx)`, dual → dual.
    Center,
    /// `D⁰φ_i = (φ_{i+1/2} − φ_{i−1/2})/dx`, dual → primal.
    Zero,
    /// `δ⁰μ_{i+1/2} = (μ_{i+1} − μ_i)/dx`, primal → dual.
    DeltaZero,
}

impl Difference {
    fn families(self) -> (NodeFamily, NodeFamily) {
        match self {
            Difference::Minus | Difference::Plus | Difference::Center => (NodeFamily::Dual, NodeFamily::Dual),
            Difference::Zero => (NodeFamily::Dual, NodeFamily::Primal),
            Difference::DeltaZero => (NodeFamily::Primal, NodeFamily::Dual),
        }
    }
}

pub fn apply_difference(grid: &StaggeredGrid1D, kind: Difference, field: &NodalField) -> Result<NodalField> {
    let (input, output) = kind.families();
    field.expect(input, grid)?;
    let m = grid.num_cells();
    let inv_dx = 1.0 / grid.dx();
    let f = &field.values;
    let values = (0..m)
        .map(|i| {
            let prev = f[(i + m - 1) % m];
            let next = f[(i + 1) % m];
            match kind {
                Difference::Minus | Difference::Zero => (f[i] - prev) * inv_dx,
                Difference::Plus | Difference::DeltaZero => (next - f[i]) * inv_dx,
                Difference::Center => 0.5 * (next - prev) * inv_dx,
            }
        })
        .collect();
    Ok(NodalField { family: output, values })
}

/// `‖μ‖² = Σ_i μ_i² dx` over primal nodes.
pub fn norm_macro_sq(grid: &StaggeredGrid1D, mu: &NodalField) -> Result<f64> {
    mu.expect(NodeFamily::Primal, grid)?;
    Ok(mu.values.iter().map(|v| v * v).sum::<f64>() * grid.dx())
}

/// `|||φ|||² = Σ_i Π(φ_{i+1/2}²) dx`.
pub fn norm_micro_sq(grid: &StaggeredGrid1D, quad: &VelocityQuadrature, phi: &KineticField) -> Result<f64> {
    inner(grid, quad, phi, phi)
}

/// `⟨φ, ψ⟩ = Σ_i Π(φ_{i+1/2} ψ_{i+1/2}) dx`.
pub fn inner(grid: &StaggeredGrid1D, quad: &VelocityQuadrature, phi: &KineticField, psi: &KineticField) -> Result<f64> {
    phi.check(grid, quad)?;
    psi.check(grid, quad)?;
    let total: f64 = (0..grid.num_cells())
        .map(|i| {
            quad.weights()
                .iter()
                .zip(phi.row(i).iter().zip(psi.row(i)))
                .map(|(w, (a, b))| w * a * b)
                .sum::<f64>()
        })
        .sum();
    Ok(total * grid.dx())
}
