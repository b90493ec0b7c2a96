//! Monte Carlo ensembles of path-coupled schemes with streamed statistics.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{NodeFamily, StaggeredGrid1D, VelocityQuadrature};
use crate::noise::{GaussianDraw, NoiseModel, NoiseStream};
use crate::problem::{build_stepper, Problem, SchemeKind, Stepper};

/// How coupled schemes share time steps and increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// One shared step (the smallest stable one) and identical increments.
    #[default]
    Lockstep,
    /// Each scheme runs at its own step; only means are comparable.
    Independent,
}

#[derive(Debug, Clone)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub problem: Arc<Problem>,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, problem: Arc<Problem>) -> Self {
        Self { kind, problem }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub schemes: Vec<SchemeSpec>,
    pub realizations: usize,
    pub master_seed: u64,
    /// Sorted, nonnegative.
    pub output_times: Vec<f64>,
    pub initial_density: Vec<f64>,
    /// Overrides the automatic step of every scheme.
    pub dt: Option<f64>,
    pub coupling: Coupling,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Record the ensemble-mean energy after every step.
    pub record_energy: bool,
    /// Fingerprint the increments each scheme consumes.
    pub record_draws: bool,
}

impl EnsembleConfig {
    pub fn new(schemes: Vec<SchemeSpec>, initial_density: Vec<f64>, output_times: Vec<f64>) -> Self {
        Self {
            schemes,
            realizations: 1,
            master_seed: 0,
            output_times,
            initial_density,
            dt: None,
            coupling: Coupling::Lockstep,
            workers: None,
            record_energy: false,
            record_draws: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::config("scheme.kind", "at least one scheme is required"));
        }
        if self.realizations == 0 {
            return Err(Error::config("ensemble.realizations", "must be >= 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("ensemble.workers", "must be >= 1"));
        }
        if self.output_times.iter().any(|t| !(t.is_finite() && *t >= 0.0))
            || self.output_times.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::config(
                "ensemble.output_times",
                "output times must be finite, nonnegative and sorted",
            ));
        }
        let first = &self.schemes[0].problem;
        let m = first.grid().num_cells();
        Error::check_len(m, self.initial_density.len())?;
        for s in &self.schemes {
            if s.problem.grid() != first.grid() {
                return Err(Error::config("grid", "coupled schemes must share one grid"));
            }
            if s.problem.noise() != first.noise() {
                return Err(Error::config("noise", "coupled schemes must share one noise model"));
            }
        }
        if let Some(dt) = self.dt {
            crate::problem::check_dt(dt)?;
        }
        Ok(())
    }

    /// Largest step each scheme may take.
    pub fn max_steps(&self) -> Result<Vec<f64>> {
        let own: Vec<f64> = match self.dt {
            Some(dt) => vec![dt; self.schemes.len()],
            None => self
                .schemes
                .iter()
                .map(|s| s.problem.auto_dt(s.kind))
                .collect::<Result<_>>()?,
        };
        Ok(match self.coupling {
            Coupling::Lockstep => {
                let shared = own.iter().copied().fold(f64::INFINITY, f64::min);
                vec![shared; own.len()]
            }
            Coupling::Independent => own,
        })
    }
}

/// Pointwise statistics of `ρ` over surviving paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldStats {
    pub mean: Vec<f64>,
    /// Unbiased sample variance; zero for a single path.
    pub variance: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone)]
struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Welford {
    fn new(m: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; m],
            m2: vec![0.0; m],
            min: vec![f64::INFINITY; m],
            max: vec![f64::NEG_INFINITY; m],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (x[i] - self.mean[i]);
            self.min[i] = self.min[i].min(x[i]);
            self.max[i] = self.max[i].max(x[i]);
        }
    }

    fn finish(self) -> FieldStats {
        let denom = self.count.saturating_sub(1).max(1) as f64;
        let variance = if self.count > 1 {
            self.m2.iter().map(|v| (v / denom).max(0.0)).collect()
        } else {
            vec![0.0; self.mean.len()]
        };
        FieldStats {
            mean: self.mean,
            variance,
            min: self.min,
            max: self.max,
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub realization: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeStats {
    pub kind: SchemeKind,
    /// Largest step taken.
    pub dt: f64,
    /// Stability bound before the safety factor.
    pub stability_bound: f64,
    pub steps: u64,
    /// One entry per output time.
    pub fields: Vec<FieldStats>,
    pub failures: Vec<Failure>,
    /// `(t_n, mean energy)` after every step, starting at `t = 0`.
    pub energy: Vec<(f64, f64)>,
    /// Per realization, relative L² distance of this path to scheme 0's path
    /// at each output time; `NaN` where either path failed.
    pub path_gaps: Vec<Vec<f64>>,
    /// Per realization fingerprint of all increments consumed.
    pub draw_hashes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub output_times: Vec<f64>,
    pub x: Vec<f64>,
    pub realizations: usize,
    pub master_seed: u64,
    pub coupling: Coupling,
    pub schemes: Vec<SchemeStats>,
}

impl EnsembleStats {
    /// Relative L² gap between the mean fields of schemes `a` and `b` (the
    /// reference) at output index `t`.
    pub fn mean_gap(&self, a: usize, b: usize, t: usize) -> f64 {
        relative_l2_gap(&self.schemes[a].fields[t].mean, &self.schemes[b].fields[t].mean)
    }
}

/// `‖a − b‖₂ / ‖b‖₂`.
pub fn relative_l2_gap(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_extend(mut h: u64, draw: &GaussianDraw) -> u64 {
    for v in draw.values() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

struct PathResult {
    /// `[scheme][time] -> ρ`; `None` after failure.
    densities: Vec<Option<Vec<Vec<f64>>>>,
    failures: Vec<Option<String>>,
    energy: Vec<Vec<f64>>,
    hashes: Vec<u64>,
}

struct Schedule {
    /// Per scheme, per output interval: (number of steps, step).
    segments: Vec<Vec<(u64, f64)>>,
    max_dt: Vec<f64>,
}

fn schedule(cfg: &EnsembleConfig) -> Result<Schedule> {
    let max_dt = cfg.max_steps()?;
    let segments = max_dt
        .iter()
        .map(|&dt_max| {
            let mut prev = 0.0;
            cfg.output_times
                .iter()
                .map(|&t| {
                    let span = t - prev;
                    prev = t;
                    if span <= 0.0 {
                        return (0, dt_max);
                    }
                    let n = ((span / dt_max) * (1.0 - 1e-12)).ceil().max(1.0);
                    (n as u64, span / n)
                })
                .collect()
        })
        .collect();
    Ok(Schedule { segments, max_dt })
}

fn run_path(cfg: &EnsembleConfig, plan: &Schedule, realization: usize) -> Result<PathResult> {
    let ns = cfg.schemes.len();
    let modes = cfg.schemes[0].problem.noise().num_modes();
    let mut steppers: Vec<Option<Box<dyn Stepper>>> = Vec::with_capacity(ns);
    for (k, s) in cfg.schemes.iter().enumerate() {
        steppers.push(Some(build_stepper(
            s.kind,
            s.problem.clone(),
            &cfg.initial_density,
            plan.max_dt[k],
        )?));
    }
    let mut out = PathResult {
        densities: vec![Some(Vec::with_capacity(cfg.output_times.len())); ns],
        failures: vec![None; ns],
        energy: vec![Vec::new(); ns],
        hashes: vec![FNV_OFFSET; ns],
    };
    if cfg.record_energy {
        for (k, s) in steppers.iter().enumerate() {
            out.energy[k].push(s.as_ref().map_or(f64::NAN, |s| s.energy()));
        }
    }
    let mut stream = NoiseStream::new(cfg.master_seed, realization as u64);

    match cfg.coupling {
        Coupling::Lockstep => {
            let mut global = 0u64;
            for seg in 0..cfg.output_times.len() {
                let (n, dt) = plan.segments[0][seg];
                for s in steppers.iter_mut().flatten() {
                    s.set_dt(dt)?;
                }
                for _ in 0..n {
                    let draw = stream.draw(global, modes);
                    global += 1;
                    for k in 0..ns {
                        advance(&mut steppers[k], &mut out, k, &draw, cfg);
                    }
                }
                record(&steppers, &mut out);
            }
        }
        Coupling::Independent => {
            for k in 0..ns {
                let mut global = 0u64;
                for seg in 0..cfg.output_times.len() {
                    let (n, dt) = plan.segments[k][seg];
                    if let Some(s) = steppers[k].as_mut() {
                        s.set_dt(dt)?;
                    }
                    for _ in 0..n {
                        if steppers[k].is_none() {
                            break;
                        }
                        let draw = stream.draw(global, modes);
                        global += 1;
                        advance(&mut steppers[k], &mut out, k, &draw, cfg);
                    }
                    if let (Some(s), Some(d)) = (steppers[k].as_ref(), out.densities[k].as_mut()) {
                        d.push(s.density().to_vec());
                    }
                }
            }
        }
    }
    Ok(out)
}

fn advance(
    slot: &mut Option<Box<dyn Stepper>>,
    out: &mut PathResult,
    k: usize,
    draw: &GaussianDraw,
    cfg: &EnsembleConfig,
) {
    let Some(s) = slot.as_mut() else {
        return;
    };
    if cfg.record_draws {
        out.hashes[k] = fnv_extend(out.hashes[k], draw);
    }
    match s.step(draw) {
        Ok(()) => {
            if cfg.record_energy {
                out.energy[k].push(s.energy());
            }
        }
        Err(e) => {
            out.failures[k] = Some(e.to_string());
            out.densities[k] = None;
            *slot = None;
        }
    }
}

fn record(steppers: &[Option<Box<dyn Stepper>>], out: &mut PathResult) {
    for (s, d) in steppers.iter().zip(out.densities.iter_mut()) {
        if let (Some(s), Some(d)) = (s, d.as_mut()) {
            d.push(s.density().to_vec());
        }
    }
}

/// Runs every realization and reduces in realization order, so the result
/// does not depend on the worker count.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    cfg.validate()?;
    match cfg.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("ensemble.workers", e.to_string()))?;
            pool.install(|| run_validated(cfg))
        }
        None => run_validated(cfg),
    }
}

fn run_validated(cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    let plan = schedule(cfg)?;
    let ns = cfg.schemes.len();
    let nt = cfg.output_times.len();
    let grid = cfg.schemes[0].problem.grid();
    let m = grid.num_cells();

    let mut acc: Vec<Vec<Welford>> = vec![vec![Welford::new(m); nt]; ns];
    let steps_per_scheme: Vec<u64> = plan.segments.iter().map(|s| s.iter().map(|(n, _)| n).sum()).collect();
    let mut energy_sum: Vec<Vec<f64>> = vec![Vec::new(); ns];
    let mut energy_count: Vec<Vec<usize>> = vec![Vec::new(); ns];
    let mut failures: Vec<Vec<Failure>> = vec![Vec::new(); ns];
    let mut gaps: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(cfg.realizations); ns];
    let mut hashes: Vec<Vec<u64>> = vec![Vec::new(); ns];

    const CHUNK: usize = 256;
    let mut start = 0;
    while start < cfg.realizations {
        let end = (start + CHUNK).min(cfg.realizations);
        let results: Vec<Result<PathResult>> = (start..end).into_par_iter().map(|r| run_path(cfg, &plan, r)).collect();
        for (offset, res) in results.into_iter().enumerate() {
            let r = start + offset;
            let res = res?;
            for k in 0..ns {
                if let Some(msg) = &res.failures[k] {
                    failures[k].push(Failure {
                        realization: r,
                        message: msg.clone(),
                    });
                }
                if let Some(d) = &res.densities[k] {
                    for (t, field) in d.iter().enumerate() {
                        acc[k][t].push(field);
                    }
                }
                let gap_row = (0..nt)
                    .map(|t| match (&res.densities[k], &res.densities[0]) {
                        (Some(a), Some(b)) => relative_l2_gap(&a[t], &b[t]),
                        _ => f64::NAN,
                    })
                    .collect();
                gaps[k].push(gap_row);
                if cfg.record_draws {
                    hashes[k].push(res.hashes[k]);
                }
                if cfg.record_energy {
                    let e = &res.energy[k];
                    if energy_sum[k].len() < e.len() {
                        energy_sum[k].resize(e.len(), 0.0);
                        energy_count[k].resize(e.len(), 0);
                    }
                    // a failed path only contributes the steps it completed
                    if res.failures[k].is_none() {
                        for (n, v) in e.iter().enumerate() {
                            energy_sum[k][n] += v;
                            energy_count[k][n] += 1;
                        }
                    }
                }
            }
        }
        start = end;
    }

    let mut schemes = Vec::with_capacity(ns);
    for (k, spec) in cfg.schemes.iter().enumerate() {
        if failures[k].len() == cfg.realizations {
            return Err(Error::EnsembleFailed {
                scheme: spec.kind.to_string(),
                realizations: cfg.realizations,
            });
        }
        let mut energy = Vec::new();
        if cfg.record_energy {
            let mut t = 0.0;
            let mut n_idx = 0usize;
            let mut times = vec![0.0];
            for &(n, dt) in &plan.segments[k] {
                for _ in 0..n {
                    n_idx += 1;
                    t += dt;
                    times.push(t);
                }
            }
            debug_assert_eq!(n_idx + 1, times.len());
            energy = times
                .into_iter()
                .zip(energy_sum[k].iter().zip(&energy_count[k]))
                .map(|(t, (s, c))| (t, s / *c as f64))
                .collect();
        }
        schemes.push(SchemeStats {
            kind: spec.kind,
            dt: {
                let used = plan.segments[k]
                    .iter()
                    .filter(|s| s.0 > 0)
                    .map(|s| s.1)
                    .fold(0.0, f64::max);
                if used > 0.0 {
                    used
                } else {
                    plan.max_dt[k]
                }
            },
            stability_bound: spec.problem.stability_bound(spec.kind)?,
            steps: steps_per_scheme[k],
            fields: std::mem::take(&mut acc[k]).into_iter().map(Welford::finish).collect(),
            failures: std::mem::take(&mut failures[k]),
            energy,
            path_gaps: std::mem::take(&mut gaps[k]),
            draw_hashes: std::mem::take(&mut hashes[k]),
        });
    }
    Ok(EnsembleStats {
        output_times: cfg.output_times.clone(),
        x: grid.nodes(NodeFamily::Primal),
        realizations: cfg.realizations,
        master_seed: cfg.master_seed,
        coupling: cfg.coupling,
        schemes,
    })
}

/// `ρ⁰(x) = 1 + cos(2πx/L + π)`, one period over the domain.
pub fn paper_initial_density(grid: &StaggeredGrid1D) -> Vec<f64> {
    let k = 2.0 * PI / grid.length();
    grid.sample(NodeFamily::Primal, |x| 1.0 + (k * x + PI).cos())
        .into_values()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `ε = 1`, micro-macro against explicit kinetic.
    KineticEps1,
    /// `ε = 10⁻²`, micro-macro against Crank–Nicolson.
    DiffusiveEps1e2,
}

impl Regime {
    pub fn epsilon(self) -> f64 {
        match self {
            Regime::KineticEps1 => 1.0,
            Regime::DiffusiveEps1e2 => 1e-2,
        }
    }

    pub fn output_times(self) -> Vec<f64> {
        match self {
            Regime::KineticEps1 => vec![0.1, 0.3, 0.6, 1.0],
            Regime::DiffusiveEps1e2 => {
                let e = self.epsilon();
                vec![e / 10.0, 4.0 * e / 10.0, 0.05, 0.1]
            }
        }
    }

    pub fn reference(self) -> SchemeKind {
        match self {
            Regime::KineticEps1 => SchemeKind::ExplicitKinetic,
            Regime::DiffusiveEps1e2 => SchemeKind::CrankNicolson,
        }
    }
}

/// Knobs of the paper experiment; defaults reproduce the published setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub num_cells: usize,
    /// Total mode count as in `noise.num_modes`.
    pub num_modes: usize,
    pub realizations: usize,
    pub master_seed: u64,
    pub raw_wavenumbers: bool,
    pub velocity_nodes: usize,
    pub cfl_safety: f64,
    pub workers: Option<usize>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            num_cells: 200,
            num_modes: 201,
            realizations: 100,
            master_seed: 20_240_101,
            raw_wavenumbers: false,
            velocity_nodes: VelocityQuadrature::DEFAULT_NODES,
            cfl_safety: 0.9,
            workers: None,
        }
    }
}

pub fn paper_experiment_config(regime: Regime, opts: &ExperimentOptions) -> Result<EnsembleConfig> {
    let grid = StaggeredGrid1D::unit(opts.num_cells)?;
    let noise = NoiseModel::from_mode_count(&grid, opts.num_modes, opts.raw_wavenumbers)?;
    let quad = VelocityQuadrature::gauss_legendre(opts.velocity_nodes)?;
    let sigma = crate::collision::ScatterField::uniform(&grid, 1.0)?;
    let op = crate::collision::CollisionOperator::one_group(quad)?;
    let problem = Arc::new(Problem::new(
        grid.clone(),
        op,
        sigma,
        noise,
        regime.epsilon(),
        opts.cfl_safety,
    )?);
    let schemes = vec![
        SchemeSpec::new(SchemeKind::Smm, problem.clone()),
        SchemeSpec::new(regime.reference(), problem),
    ];
    let mut cfg = EnsembleConfig::new(schemes, paper_initial_density(&grid), regime.output_times());
    cfg.realizations = opts.realizations;
    cfg.master_seed = opts.master_seed;
    cfg.workers = opts.workers;
    Ok(cfg)
}

pub fn paper_experiment(regime: Regime, opts: &ExperimentOptions) -> Result<EnsembleStats> {
    run_ensemble(&paper_experiment_config(regime, opts)?)
}

/// Ensemble-mean energy traces of one scheme at step `dt_fine · 2^ℓ` for
/// each level `ℓ`, all driven by the same Brownian paths: a coarse increment
/// is the normalized sum of the `2^ℓ` fine increments it spans.
#[allow(clippy::too_many_arguments)]
pub fn coupled_energy_traces(
    spec: &SchemeSpec,
    initial_density: &[f64],
    dt_fine: f64,
    fine_steps: u64,
    levels: &[u32],
    realizations: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<Vec<Vec<(f64, f64)>>> {
    crate::problem::check_dt(dt_fine)?;
    if realizations == 0 {
        return Err(Error::config("ensemble.realizations", "must be >= 1"));
    }
    for &l in levels {
        if !fine_steps.is_multiple_of(1u64 << l) {
            return Err(Error::config(
                "scheme.dt",
                "fine step count must be divisible by every refinement ratio",
            ));
        }
    }
    let modes = spec.problem.noise().num_modes();
    let one_path = |r: usize| -> Result<Vec<Vec<f64>>> {
        let mut stream = NoiseStream::new(master_seed, r as u64);
        levels
            .iter()
            .map(|&l| {
                let ratio = 1u64 << l;
                let mut s = build_stepper(spec.kind, spec.problem.clone(), initial_density, dt_fine * ratio as f64)?;
                let mut e = Vec::with_capacity((fine_steps / ratio + 1) as usize);
                e.push(s.energy());
                let scale = 1.0 / (ratio as f64).sqrt();
                for n in 0..fine_steps / ratio {
                    let mut xi = vec![0.0; modes];
                    for j in 0..ratio {
                        let d = stream.draw(n * ratio + j, modes);
                        for (x, v) in xi.iter_mut().zip(d.values()) {
                            *x += v;
                        }
                    }
                    xi.iter_mut().for_each(|x| *x *= scale);
                    s.step(&GaussianDraw::from_values(xi))?;
                    e.push(s.energy());
                }
                Ok(e)
            })
            .collect()
    };
    let run = || -> Result<Vec<Vec<f64>>> {
        let mut sums: Vec<Vec<f64>> = levels
            .iter()
            .map(|&l| vec![0.0; (fine_steps >> l) as usize + 1])
            .collect();
        const CHUNK: usize = 256;
        let mut start = 0;
        while start < realizations {
            let end = (start + CHUNK).min(realizations);
            let paths: Vec<Result<Vec<Vec<f64>>>> = (start..end).into_par_iter().map(one_path).collect();
            for p in paths {
                for (acc, e) in sums.iter_mut().zip(p?) {
                    for (a, v) in acc.iter_mut().zip(e) {
                        *a += v;
                    }
                }
            }
            start = end;
        }
        Ok(sums)
    };
    let sums = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("ensemble.workers", e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(levels
        .iter()
        .zip(sums)
        .map(|(&l, s)| {
            let dt = dt_fine * (1u64 << l) as f64;
            s.into_iter()
                .enumerate()
                .map(|(n, v)| (n as f64 * dt, v / realizations as f64))
                .collect()
        })
        .collect())
}

/// Growth-rate fit of the ensemble-mean energy at a CFL-compliant step and
/// at half that step, on coupled increments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub dt: f64,
    pub steps: u64,
    pub rate: f64,
    pub rate_half_dt: f64,
    /// `|rate_half_dt − rate| / rate`.
    pub relative_change: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
}

/// Fraction of the horizon skipped before fitting the growth rate.
pub const ENERGY_FIT_WINDOW: f64 = 0.1;

pub fn energy_growth_test(
    spec: &SchemeSpec,
    initial_density: &[f64],
    horizon: f64,
    realizations: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<EnergyReport> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::config(
            "energy.horizon",
            format!("must be finite and > 0, got {horizon}"),
        ));
    }
    let dt_max = spec.problem.auto_dt(spec.kind)?;
    let steps = (horizon / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as u64;
    let dt = horizon / steps as f64;
    let traces = coupled_energy_traces(
        spec,
        initial_density,
        0.5 * dt,
        2 * steps,
        &[1, 0],
        realizations,
        master_seed,
        workers,
    )?;
    let rate = crate::stability::fit_growth_rate(&traces[0], ENERGY_FIT_WINDOW)?;
    let rate_half_dt = crate::stability::fit_growth_rate(&traces[1], ENERGY_FIT_WINDOW)?;
    Ok(EnergyReport {
        dt,
        steps,
        rate,
        rate_half_dt,
        relative_change: ((rate_half_dt - rate) / rate).abs(),
        initial_energy: traces[0][0].1,
        final_energy: traces[0].last().map_or(f64::NAN, |p| p.1),
    })
}
