//! Batch front end: configuration, experiment orchestration and output.

mod config;

pub use config::{BoundarySpec, KappaGenerator, KappaSpec, ProblemSpec, RunConfig, SourceSpec};

use std::fs;
use std::path::{Path, PathBuf};

use crate::adaptive::{run_strategy, ConvergenceRecord, RunOutput};
use crate::error::{invalid, Result};
use crate::io;
use crate::solve::{Discretization, Solution};
use crate::spectral::{OfflineSpaces, SpectralOptions};

/// Files written by [`run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub records: Vec<ConvergenceRecord>,
    pub summary: String,
}

/// A problem set up once and shared by several strategies.
pub struct Prepared {
    pub disc: Discretization,
    pub fine: Solution,
}

impl Prepared {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        let problem = spec.build()?;
        let disc = Discretization::new(&problem)?;
        log::info!(
            "grid {}x{} blocks, {} fine cells per block side, {} DG unknowns, γ = {}",
            spec.nc,
            spec.nc,
            spec.nf,
            disc.grid().num_fine_dofs(),
            disc.gamma()
        );
        let fine = disc.solve_fine()?;
        Ok(Self { disc, fine })
    }

    pub fn execute(&self, config: &RunConfig) -> Result<(OfflineSpaces, Option<Solution>, RunOutput)> {
        let spaces = self.disc.build_spaces(config.spectral_options())?;
        let snapshot = if config.snapshot_reference {
            Some(self.disc.solve_snapshot(&spaces)?)
        } else {
            None
        };
        let out = run_strategy(&self.disc, &spaces, &config.adaptive, &self.fine, snapshot.as_ref())?;
        Ok((spaces, snapshot, out))
    }
}

fn output_dir(config: &RunConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir.map_or_else(|| config.output_dir.clone(), Path::to_path_buf)
}

/// Run one configuration and write `history.csv`, `indicators.csv`,
/// `solution.csv` and `summary.txt` to the output directory.
pub fn run(config: &RunConfig, override_dir: Option<&Path>) -> Result<RunArtifacts> {
    let prepared = Prepared::new(&config.problem)?;
    let (_, _, out) = prepared.execute(config)?;
    let dir = output_dir(config, override_dir);
    fs::create_dir_all(&dir)?;
    io::write_history(&dir.join("history.csv"), &out.records)?;
    io::write_indicators(&dir.join("indicators.csv"), &out.indicators)?;
    io::write_solution(
        &dir.join("solution.csv"),
        prepared.disc.grid(),
        &[("u_H", &out.final_solution.fine), ("u_h", &prepared.fine.fine)],
    )?;
    let summary = format!(
        "{} ({}), {} iterations\n{}",
        config.label,
        config.adaptive.strategy,
        out.records.len(),
        io::summary_table(&out.records)
    );
    fs::write(dir.join("summary.txt"), &summary)?;
    Ok(RunArtifacts {
        dir,
        records: out.records,
        summary,
    })
}

/// Run several configurations on one shared problem and write the
/// long-format `comparison.csv`.
pub fn compare(configs: &[RunConfig], override_dir: Option<&Path>) -> Result<(PathBuf, String)> {
    if configs.len() < 2 {
        return Err(invalid("compare needs at least two configurations"));
    }
    let first = &configs[0].problem;
    if let Some(c) = configs.iter().find(|c| c.problem != *first) {
        return Err(invalid(format!(
            "configuration `{}` defines a different problem than `{}`",
            c.label, configs[0].label
        )));
    }
    let prepared = Prepared::new(first)?;
    let mut runs = Vec::new();
    for c in configs {
        log::info!("running `{}`", c.label);
        let (_, _, out) = prepared.execute(c)?;
        runs.push((c.label.clone(), out.records));
    }
    let csv = io::comparison_csv(&runs);
    let dir = output_dir(&configs[0], override_dir);
    fs::create_dir_all(&dir)?;
    let path = dir.join("comparison.csv");
    fs::write(&path, &csv)?;
    Ok((path, csv))
}

/// Per-block trace constants `Λ_K` of the harmonic snapshot space and of
/// the oversampled one.
#[derive(Debug, Clone)]
pub struct EigDiagnostics {
    pub plain: Vec<f64>,
    pub oversampled: Vec<f64>,
}

impl EigDiagnostics {
    pub fn max_plain(&self) -> f64 {
        self.plain.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_oversampled(&self) -> f64 {
        self.oversampled.iter().copied().fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("block,lambda_snap,lambda_snap_oversampled\n");
        for (i, (a, b)) in self.plain.iter().zip(&self.oversampled).enumerate() {
            s.push_str(&format!("{i},{},{}\n", io::fmt_f64(*a), io::fmt_f64(*b)));
        }
        s
    }
}

/// `Λ_K = λ_max / H` of the family-1 spectrum, for every block.
pub fn trace_constants(spaces: &OfflineSpaces) -> Vec<f64> {
    spaces
        .blocks
        .iter()
        .map(|b| b.eig1.lambda_max() / spaces.coarse_h)
        .collect()
}

pub fn eig_diagnostics(disc: &Discretization, config: &RunConfig) -> Result<EigDiagnostics> {
    let base = SpectralOptions {
        family2: false,
        m_max: Some(0),
        oversampling: None,
    };
    let plain = trace_constants(&disc.build_spaces(base)?);
    let over = SpectralOptions {
        oversampling: Some(config.oversampling.unwrap_or_default()),
        ..base
    };
    let oversampled = trace_constants(&disc.build_spaces(over)?);
    Ok(EigDiagnostics { plain, oversampled })
}

/// Write `eigs.csv` and return the diagnostics.
pub fn diag_eigs(config: &RunConfig, override_dir: Option<&Path>) -> Result<(PathBuf, EigDiagnostics)> {
    let problem = config.problem.build()?;
    let disc = Discretization::new(&problem)?;
    let d = eig_diagnostics(&disc, config)?;
    let dir = output_dir(config, override_dir);
    fs::create_dir_all(&dir)?;
    let path = dir.join("eigs.csv");
    fs::write(&path, d.csv())?;
    Ok((path, d))
}

/// Generate a permeability field from `name[:key=value,...]` and save it;
/// a `.bin` extension selects the binary format.
pub fn gen_kappa(spec: &str, out: &Path) -> Result<()> {
    let (spec, n) = KappaSpec::parse_generator(spec)?;
    let field = spec.build(n.unwrap_or(256))?;
    if out.extension().is_some_and(|e| e == "bin") {
        field.save_binary(out)
    } else {
        field.save_text(out)
    }
}
