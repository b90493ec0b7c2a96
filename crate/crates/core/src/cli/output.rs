//! CSV tables, JSON run metadata and a gnuplot overlay script.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::harness::{Coupling, EnsembleStats, Failure};
use crate::problem::SchemeKind;

pub const GIT_DESCRIBE: &str = env!("SMM_GIT_DESCRIBE");

#[derive(Debug, Clone, Serialize)]
pub struct SchemeMetadata {
    pub kind: SchemeKind,
    pub dt: f64,
    pub stability_bound: f64,
    pub steps: u64,
    pub survivors: Vec<usize>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub git_describe: String,
    pub command: String,
    pub master_seed: u64,
    pub realizations: usize,
    pub coupling: Coupling,
    pub cfl_safety: f64,
    pub output_times: Vec<f64>,
    pub schemes: Vec<SchemeMetadata>,
    pub notes: Vec<String>,
    /// Echo of the resolved configuration.
    pub config: serde_json::Value,
    pub files: Vec<String>,
}

impl RunMetadata {
    pub fn new(command: &str, stats: &EnsembleStats, cfl_safety: f64, config: serde_json::Value) -> Self {
        Self {
            tool: "smm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            git_describe: GIT_DESCRIBE.into(),
            command: command.into(),
            master_seed: stats.master_seed,
            realizations: stats.realizations,
            coupling: stats.coupling,
            cfl_safety,
            output_times: stats.output_times.clone(),
            schemes: stats
                .schemes
                .iter()
                .map(|s| SchemeMetadata {
                    kind: s.kind,
                    dt: s.dt,
                    stability_bound: s.stability_bound,
                    steps: s.steps,
                    survivors: s.fields.iter().map(|f| f.count).collect(),
                    failures: s.failures.clone(),
                })
                .collect(),
            notes: vec![
                "every output time is recorded from one run of each realization".into(),
                "explicit_kinetic: first-order upwind transport, explicit collision, f on primal nodes".into(),
                "crank_nicolson: three-point diffusion operator, noise explicit with Ito correction".into(),
                "initial data rho0(x) = 1 - cos(2 pi x / L), g0 = 0".into(),
            ],
            config,
            files: Vec::new(),
        }
    }
}

pub fn csv_name(kind: SchemeKind, index: usize, time: f64) -> String {
    format!("{}_t{index:02}_{time:.6}.csv", kind.name())
}

/// `x, mean, variance, min, max` with 17 significant digits.
pub fn field_csv(x: &[f64], field: &crate::harness::FieldStats) -> String {
    let mut out = String::with_capacity(x.len() * 120);
    out.push_str("x,mean,variance,min,max\n");
    for i in 0..x.len() {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            x[i], field.mean[i], field.variance[i], field.min[i], field.max[i]
        );
    }
    out
}

/// Overlays the scheme means at each output time, one panel per time.
pub fn gnuplot_script(stats: &EnsembleStats) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key top right");
    let _ = writeln!(s, "set xlabel 'x'");
    let _ = writeln!(s, "set ylabel 'mean rho'");
    let _ = writeln!(s, "set terminal pngcairo size 1200,900");
    let _ = writeln!(s, "set output 'means.png'");
    let n = stats.output_times.len();
    let cols = if n > 1 { 2 } else { 1 };
    let rows = n.div_ceil(cols).max(1);
    let _ = writeln!(s, "set multiplot layout {rows},{cols}");
    for (t, time) in stats.output_times.iter().enumerate() {
        let _ = writeln!(s, "set title 't = {time}'");
        let plots: Vec<String> = stats
            .schemes
            .iter()
            .map(|sc| {
                format!(
                    "'{}' using 1:2 with lines title '{}'",
                    csv_name(sc.kind, t, *time),
                    sc.kind
                )
            })
            .collect();
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    }
    let _ = writeln!(s, "unset multiplot");
    s
}

/// Writes one CSV per scheme and output time, the plot script and
/// `metadata.json`. With no output times only the metadata is written.
pub fn write_outputs(dir: &Path, stats: &EnsembleStats, mut meta: RunMetadata) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for sc in &stats.schemes {
        for (t, time) in stats.output_times.iter().enumerate() {
            let path = dir.join(csv_name(sc.kind, t, *time));
            fs::write(&path, field_csv(&stats.x, &sc.fields[t]))?;
            written.push(path);
        }
    }
    if !stats.output_times.is_empty() {
        let path = dir.join("plot.gp");
        fs::write(&path, gnuplot_script(stats))?;
        written.push(path);
    }
    meta.files = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let path = dir.join("metadata.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&meta).map_err(std::io::Error::other)?,
    )?;
    written.push(path);
    Ok(written)
}
