//! TOML run configuration with defaults matching the kinetic-regime
//! experiment, strict key checking and validation before any compute.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::collision::{CollisionOperator, ScatterField};
use crate::error::{Error, Result};
use crate::grid::{QuadratureKind, StaggeredGrid1D, VelocityQuadrature};
use crate::harness::{paper_initial_density, Coupling, EnsembleConfig, SchemeSpec};
use crate::noise::NoiseModel;
use crate::problem::{Problem, SchemeKind};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub velocity: VelocitySection,
    pub scheme: SchemeSection,
    pub noise: NoiseSection,
    pub ensemble: EnsembleSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub num_cells: usize,
    pub domain_length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            num_cells: 200,
            domain_length: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocitySection {
    /// Ignored for the two-point kind.
    pub nodes: usize,
    pub kind: QuadratureKind,
}

impl Default for VelocitySection {
    fn default() -> Self {
        Self {
            nodes: VelocityQuadrature::DEFAULT_NODES,
            kind: QuadratureKind::GaussLegendre,
        }
    }
}

/// `scheme.dt`: a positive number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DtSetting {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DtRepr {
    Number(f64),
    Word(String),
}

impl Serialize for DtSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DtSetting::Auto => DtRepr::Word("auto".into()),
            DtSetting::Fixed(v) => DtRepr::Number(*v),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DtSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match DtRepr::deserialize(d)? {
            DtRepr::Number(v) => Ok(DtSetting::Fixed(v)),
            DtRepr::Word(w) if w == "auto" => Ok(DtSetting::Auto),
            DtRepr::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub epsilon: f64,
    pub dt: DtSetting,
    pub cfl_safety: f64,
    pub kind: SchemeKind,
    /// Schemes coupled against `kind` by the `compare` subcommand.
    pub compare_with: Vec<SchemeKind>,
    /// Uniform scattering rate.
    pub sigma: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            dt: DtSetting::Auto,
            cfl_safety: 0.9,
            kind: SchemeKind::Smm,
            compare_with: vec![SchemeKind::ExplicitKinetic],
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// 0: none; 1: constant mode; odd `N + 1`: constant plus `N` Fourier modes.
    pub num_modes: usize,
    pub master_seed: u64,
    pub raw_wavenumbers: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            num_modes: 201,
            master_seed: 20_240_101,
            raw_wavenumbers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub realizations: usize,
    /// Worker threads; absent means one per core.
    pub workers: Option<usize>,
    pub output_times: Vec<f64>,
    pub coupling: Coupling,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            realizations: 100,
            workers: None,
            output_times: vec![0.1, 0.3, 0.6, 1.0],
            coupling: Coupling::Lockstep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses and validates TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses TOML text, applies `section.key=value` overrides (values in
    /// TOML syntax, bare words taken as strings) and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<toml>", e.message()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let key = e.path().to_string();
            Error::config(key, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if self.velocity.kind == QuadratureKind::GaussLegendre && self.velocity.nodes == 0 {
            return Err(Error::config("velocity.nodes", "must be >= 1"));
        }
        let s = &self.scheme;
        if !(s.epsilon.is_finite() && s.epsilon > 0.0) {
            return Err(Error::config(
                "scheme.epsilon",
                format!("must be finite and > 0, got {}", s.epsilon),
            ));
        }
        if let DtSetting::Fixed(dt) = s.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::config(
                    "scheme.dt",
                    format!("must be \"auto\" or a finite number > 0, got {dt}"),
                ));
            }
        }
        if !(s.cfl_safety > 0.0 && s.cfl_safety <= 1.0) {
            return Err(Error::config(
                "scheme.cfl_safety",
                format!("must lie in (0, 1], got {}", s.cfl_safety),
            ));
        }
        if !(s.sigma.is_finite() && s.sigma > 0.0) {
            return Err(Error::config(
                "scheme.sigma",
                format!("must be finite and > 0, got {}", s.sigma),
            ));
        }
        NoiseModel::from_mode_count(&grid, self.noise.num_modes, self.noise.raw_wavenumbers)?;
        let e = &self.ensemble;
        if e.realizations == 0 {
            return Err(Error::config("ensemble.realizations", "must be >= 1"));
        }
        if e.workers == Some(0) {
            return Err(Error::config("ensemble.workers", "must be >= 1"));
        }
        if e.output_times.iter().any(|t| !(t.is_finite() && *t >= 0.0))
            || e.output_times.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::config(
                "ensemble.output_times",
                "must be finite, nonnegative and sorted",
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<StaggeredGrid1D> {
        StaggeredGrid1D::new(self.grid.num_cells, self.grid.domain_length)
    }

    pub fn quadrature(&self) -> Result<VelocityQuadrature> {
        match self.velocity.kind {
            QuadratureKind::GaussLegendre => VelocityQuadrature::gauss_legendre(self.velocity.nodes)
                .map_err(|e| Error::config("velocity.nodes", e.to_string())),
            QuadratureKind::TwoPoint => Ok(VelocityQuadrature::two_point()),
        }
    }

    pub fn problem(&self) -> Result<Arc<Problem>> {
        let grid = self.grid()?;
        let noise = NoiseModel::from_mode_count(&grid, self.noise.num_modes, self.noise.raw_wavenumbers)?;
        let sigma = ScatterField::uniform(&grid, self.scheme.sigma)?;
        let op = CollisionOperator::one_group(self.quadrature()?)?;
        Ok(Arc::new(Problem::new(
            grid,
            op,
            sigma,
            noise,
            self.scheme.epsilon,
            self.scheme.cfl_safety,
        )?))
    }

    /// Ensemble over `kinds`, started from `ρ⁰ = 1 − cos(2πx/L)`.
    pub fn ensemble(&self, kinds: &[SchemeKind]) -> Result<EnsembleConfig> {
        let problem = self.problem()?;
        let grid = problem.grid().clone();
        let schemes = kinds.iter().map(|k| SchemeSpec::new(*k, problem.clone())).collect();
        let mut cfg = EnsembleConfig::new(
            schemes,
            paper_initial_density(&grid),
            self.ensemble.output_times.clone(),
        );
        cfg.realizations = self.ensemble.realizations;
        cfg.master_seed = self.noise.master_seed;
        cfg.workers = self.ensemble.workers;
        cfg.coupling = self.ensemble.coupling;
        cfg.dt = match self.scheme.dt {
            DtSetting::Auto => None,
            DtSetting::Fixed(dt) => Some(dt),
        };
        Ok(cfg)
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like section.key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| Error::config(path, "empty key"))?;
    let mut node = table;
    for k in keys {
        node = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{k}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
