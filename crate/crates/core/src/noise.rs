//! Truncated spectral multiplicative noise `Σ_k Qe_k(x) dβ_k`, its node
//! tables `b_ik`, the Itô correction `S_i = ½ Σ_k b_ik²`, and reproducible
//! Gaussian increments.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{NodeFamily, StaggeredGrid1D};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    modes: usize,
    num_cells: usize,
    /// `b_ik` row-major by node.
    primal: Vec<f64>,
    dual: Vec<f64>,
    ito_primal: Vec<f64>,
    ito_dual: Vec<f64>,
    trace: f64,
}

impl NoiseModel {
    /// Builds the tables from `profile(k, x)`, `k < modes`.
    pub fn from_fn(grid: &StaggeredGrid1D, modes: usize, profile: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let m = grid.num_cells();
        let table = |family: NodeFamily| -> Vec<f64> {
            (0..m)
                .flat_map(|i| {
                    let x = grid.node_x(family, i);
                    (0..modes).map(move |k| (k, x))
                })
                .map(|(k, x)| profile(k, x))
                .collect()
        };
        let primal = table(NodeFamily::Primal);
        let dual = table(NodeFamily::Dual);
        if primal.iter().chain(&dual).any(|b| !b.is_finite()) {
            return Err(Error::config("noise", "mode profiles must be finite"));
        }
        let ito = |t: &[f64]| -> Vec<f64> {
            (0..m)
                .map(|i| 0.5 * t[i * modes..(i + 1) * modes].iter().map(|b| b * b).sum::<f64>())
                .collect()
        };
        let trace = (0..modes)
            .map(|k| {
                let sup = (0..m)
                    .map(|i| primal[i * modes + k].abs().max(dual[i * modes + k].abs()))
                    .fold(0.0, f64::max);
                sup * sup
            })
            .sum();
        Ok(Self {
            modes,
            num_cells: m,
            ito_primal: ito(&primal),
            ito_dual: ito(&dual),
            primal,
            dual,
            trace,
        })
    }

    /// Deterministic model: every noise factor is zero.
    pub fn none(grid: &StaggeredGrid1D) -> Self {
        Self::from_fn(grid, 0, |_, _| 0.0).expect("empty noise model")
    }

    /// A single spatially constant mode `Qe_0 = 1`.
    pub fn constant(grid: &StaggeredGrid1D) -> Self {
        Self::from_fn(grid, 1, |_, _| 1.0).expect("constant noise model")
    }

    /// The constant mode plus `N/2` positive and `N/2` negative Fourier modes
    /// `(cos(kωx) + sin(kωx)) / (1 + |k|)`. `ω = 2π` unless
    /// `raw_wavenumbers`, which takes `ω = 1`.
    pub fn paper(grid: &StaggeredGrid1D, n: usize, raw_wavenumbers: bool) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::config(
                "noise.num_modes",
                format!("mode cap N must be even and >= 2, got {n}"),
            ));
        }
        let omega = if raw_wavenumbers { 1.0 } else { 2.0 * PI };
        let half = n / 2;
        Self::from_fn(grid, n + 1, |idx, x| {
            if idx == 0 {
                return 1.0;
            }
            let k = if idx <= half {
                idx as f64
            } else {
                -((idx - half) as f64)
            };
            let phase = k * omega * x;
            (phase.cos() + phase.sin()) / (1.0 + k.abs())
        })
    }

    /// Resolves the `noise.num_modes` setting: 0 is deterministic, 1 the
    /// constant mode alone, and an odd count `N + 1 ≥ 3` the paper spectrum.
    pub fn from_mode_count(grid: &StaggeredGrid1D, num_modes: usize, raw_wavenumbers: bool) -> Result<Self> {
        match num_modes {
            0 => Ok(Self::none(grid)),
            1 => Ok(Self::constant(grid)),
            k if k % 2 == 1 => Self::paper(grid, k - 1, raw_wavenumbers),
            k => Err(Error::config(
                "noise.num_modes",
                format!("mode count must be 0, 1 or odd (constant mode plus N Fourier modes), got {k}"),
            )),
        }
    }

    pub fn num_modes(&self) -> usize {
        self.modes
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn is_deterministic(&self) -> bool {
        self.modes == 0
    }

    fn table(&self, family: NodeFamily) -> &[f64] {
        match family {
            NodeFamily::Primal => &self.primal,
            NodeFamily::Dual => &self.dual,
        }
    }

    /// `b_ik` at node `i` of `family`.
    pub fn coefficient(&self, family: NodeFamily, i: usize, k: usize) -> f64 {
        self.table(family)[i * self.modes + k]
    }

    /// `S_i = ½ Σ_k b_ik²`.
    pub fn ito_correction(&self, family: NodeFamily) -> &[f64] {
        match family {
            NodeFamily::Primal => &self.ito_primal,
            NodeFamily::Dual => &self.ito_dual,
        }
    }

    /// `Σ_k ‖Qe_k‖∞²` over the sampled nodes.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// `dt S_i + √dt Σ_k b_ik ξ_k`.
    pub fn noise_factor(&self, family: NodeFamily, i: usize, draw: &GaussianDraw, dt: f64) -> Result<f64> {
        if i >= self.num_cells {
            return Err(Error::Dimension {
                expected: self.num_cells,
                actual: i,
            });
        }
        Error::check_len(self.modes, draw.len())?;
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::Precondition(format!(
                "time step must be finite and >= 0, got {dt}"
            )));
        }
        Ok(self.factor_at(family, i, &draw.values, dt))
    }

    #[inline]
    fn factor_at(&self, family: NodeFamily, i: usize, xi: &[f64], dt: f64) -> f64 {
        let row = &self.table(family)[i * self.modes..(i + 1) * self.modes];
        let stoch: f64 = row.iter().zip(xi).map(|(b, x)| b * x).sum();
        dt * self.ito_correction(family)[i] + dt.sqrt() * stoch
    }

    /// Noise factors for every node of `family`.
    pub fn factors_into(&self, family: NodeFamily, draw: &GaussianDraw, dt: f64, out: &mut [f64]) -> Result<()> {
        Error::check_len(self.modes, draw.len())?;
        Error::check_len(self.num_cells, out.len())?;
        if self.modes == 0 {
            out.fill(0.0);
            return Ok(());
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.factor_at(family, i, &draw.values, dt);
        }
        Ok(())
    }
}

/// One standard normal per mode for a single time step.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDraw {
    values: Vec<f64>,
    stream: u64,
    step: u64,
}

impl GaussianDraw {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            stream: 0,
            step: 0,
        }
    }

    pub fn zeros(modes: usize) -> Self {
        Self::from_values(vec![0.0; modes])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// The increment over two consecutive fine steps expressed as one
    /// standard normal for the doubled step: `(ξ_a + ξ_b)/√2`.
    pub fn coarsen(a: &GaussianDraw, b: &GaussianDraw) -> Result<GaussianDraw> {
        Error::check_len(a.len(), b.len())?;
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x + y) * std::f64::consts::FRAC_1_SQRT_2)
            .collect();
        Ok(GaussianDraw {
            values,
            stream: a.stream,
            step: a.step / 2,
        })
    }
}

/// Gaussian increments of one realization. Draws are addressed by step, so
/// `(master_seed, stream, step)` always yields the same vector regardless of
/// which steps were sampled before.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    stream: u64,
}

/// Words reserved per step; a standard normal rarely needs more than a few.
const WORDS_PER_STEP_SHIFT: u32 = 20;

impl NoiseStream {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        Self { rng, stream }
    }

    pub fn draw(&mut self, step: u64, modes: usize) -> GaussianDraw {
        self.rng.set_word_pos((step as u128) << WORDS_PER_STEP_SHIFT);
        let values = (0..modes).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        GaussianDraw {
            values,
            stream: self.stream,
            step,
        }
    }
}

/// Convenience form of [`NoiseStream::draw`].
pub fn sample_draw(master_seed: u64, stream: u64, step: u64, modes: usize) -> GaussianDraw {
    NoiseStream::new(master_seed, stream).draw(step, modes)
}
