//! Run configuration: flat `key = value` lines with dotted sections.
//!
//! ```text
//! # comment
//! grid.Nc = 16
//! grid.nf = 16
//! kappa.generator = channels
//! kappa.contrast = 1e4
//! strategy = adaptive
//! ```
//!
//! Keys are case-insensitive. Relative paths are resolved against the
//! directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adaptive::{AdaptiveConfig, FamilySet, Strategy};
use crate::error::{invalid, Error, Result};
use crate::field::{BoundaryData, BoundaryTable, PermeabilityField, SourceField};
use crate::grid::{Domain, Grid};
use crate::snapshots::Oversampling;
use crate::solve::{Gamma, Problem};
use crate::spectral::SpectralOptions;

const KEYS: &[&str] = &[
    "grid.nc",
    "grid.nf",
    "kappa.generator",
    "kappa.contrast",
    "kappa.seed",
    "kappa.value",
    "kappa.file",
    "source.kind",
    "source.value",
    "source.amplitude",
    "source.file",
    "boundary.g",
    "boundary.value",
    "boundary.file",
    "gamma",
    "gamma.alpha",
    "strategy",
    "adaptive.theta",
    "adaptive.delta0",
    "adaptive.epsilon",
    "adaptive.max_iterations",
    "adaptive.max_dof",
    "adaptive.l1",
    "adaptive.l2",
    "adaptive.families",
    "adaptive.uniform_increment",
    "spectral.m_max",
    "oversampling.enabled",
    "oversampling.halo",
    "oversampling.n_pod",
    "reference.snapshot",
    "output.dir",
    "output.record_time",
    "label",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaGenerator {
    Constant,
    Channels,
    Inclusions,
}

impl FromStr for KappaGenerator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(KappaGenerator::Constant),
            "channels" => Ok(KappaGenerator::Channels),
            "inclusions" => Ok(KappaGenerator::Inclusions),
            _ => Err(invalid(format!("unknown permeability generator `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KappaSpec {
    File(PathBuf),
    Generator {
        kind: KappaGenerator,
        /// Contrast for the patterned generators, the value for `constant`.
        contrast: f64,
        seed: u64,
    },
}

impl KappaSpec {
    pub fn build(&self, n: usize) -> Result<PermeabilityField> {
        match *self {
            KappaSpec::File(ref p) => PermeabilityField::load(p),
            KappaSpec::Generator { kind, contrast, seed } => match kind {
                KappaGenerator::Constant => PermeabilityField::constant(n, contrast),
                KappaGenerator::Channels => PermeabilityField::channels(n, contrast, seed),
                KappaGenerator::Inclusions => PermeabilityField::inclusions(n, contrast, seed),
            },
        }
    }

    /// Parse a generator spec `name[:key=value,...]` with keys `contrast`,
    /// `value` and `seed`.
    pub fn parse_generator(spec: &str) -> Result<(Self, Option<usize>)> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let kind: KappaGenerator = name.trim().parse()?;
        let mut contrast = if kind == KappaGenerator::Constant { 1.0 } else { 1e4 };
        let mut seed = 0;
        let mut n = None;
        for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected key=value in `{kv}`")))?;
            match k.trim() {
                "contrast" | "value" => contrast = parse_num(k, v)?,
                "seed" => seed = parse_num(k, v)?,
                "n" => n = Some(parse_num(k, v)?),
                other => return Err(invalid(format!("unknown generator key `{other}`"))),
            }
        }
        Ok((KappaSpec::Generator { kind, contrast, seed }, n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Constant(f64),
    TwoRegion { amplitude: f64 },
    File(PathBuf),
}

impl SourceSpec {
    pub fn build(&self, n: usize) -> Result<SourceField> {
        match self {
            SourceSpec::Constant(v) => Ok(SourceField::constant(n, *v)),
            SourceSpec::TwoRegion { amplitude } => Ok(SourceField::two_region(n, *amplitude)),
            SourceSpec::File(p) => SourceField::load_text(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    Zero,
    Bilinear,
    Constant(f64),
    File(PathBuf),
}

impl BoundarySpec {
    pub fn build(&self, domain: Domain) -> Result<BoundaryData> {
        Ok(match self {
            BoundarySpec::Zero => BoundaryData::Zero,
            BoundarySpec::Bilinear => BoundaryData::Bilinear,
            BoundarySpec::Constant(c) => BoundaryData::Constant(*c),
            BoundarySpec::File(p) => BoundaryData::Table(BoundaryTable::load_text(p, domain)?),
        })
    }
}

/// Everything that defines the discrete problem (shared by compared runs).
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub nc: usize,
    pub nf: usize,
    pub kappa: KappaSpec,
    pub source: SourceSpec,
    pub boundary: BoundarySpec,
    pub gamma: Gamma,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        let grid = Grid::unit(self.nc, self.nf)?;
        let n = grid.fine_cells_per_axis();
        let kappa = self.kappa.build(n)?;
        let source = self.source.build(n)?;
        let boundary = self.boundary.build(grid.domain())?;
        Ok(Problem::new(grid, kappa)
            .with_source(source)
            .with_boundary(boundary)
            .with_gamma(self.gamma))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub adaptive: AdaptiveConfig,
    pub m_max: Option<usize>,
    pub oversampling: Option<Oversampling>,
    pub snapshot_reference: bool,
    pub output_dir: PathBuf,
    pub label: String,
}

impl RunConfig {
    pub fn spectral_options(&self) -> SpectralOptions {
        SpectralOptions {
            family2: self.adaptive.families == FamilySet::V1V2,
            m_max: self.m_max,
            oversampling: self.oversampling,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    /// Parse config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let map = parse_pairs(text)?;
        let get = |k: &str| map.get(k).map(|(_, v)| v.as_str());
        let num = |k: &str, default| -> Result<f64> { get(k).map_or(Ok(default), |v| parse_num(k, v)) };
        let int = |k: &str, default| -> Result<usize> { get(k).map_or(Ok(default), |v| parse_num(k, v)) };
        let flag = |k: &str| -> Result<bool> { get(k).map_or(Ok(false), |v| parse_bool(k, v)) };
        let path = |k: &str| -> Option<PathBuf> { get(k).map(|v| resolve(base, v)) };

        let nc = int("grid.nc", 4)?;
        let nf = int("grid.nf", 8)?;

        let kappa = match path("kappa.file") {
            Some(p) => {
                if !p.exists() {
                    return Err(invalid(format!("permeability file {} does not exist", p.display())));
                }
                KappaSpec::File(p)
            }
            None => {
                let kind: KappaGenerator = get("kappa.generator").unwrap_or("channels").parse()?;
                let contrast = if kind == KappaGenerator::Constant {
                    num("kappa.value", 1.0)?
                } else {
                    num("kappa.contrast", 1e4)?
                };
                if !(contrast >= 1.0) {
                    return Err(invalid(format!("contrast must be >= 1, got {contrast}")));
                }
                let seed = get("kappa.seed").map_or(Ok(0), |v| parse_num("kappa.seed", v))?;
                KappaSpec::Generator { kind, contrast, seed }
            }
        };

        let source = match get("source.kind").unwrap_or("constant") {
            "constant" => SourceSpec::Constant(num("source.value", 1.0)?),
            "two-region" => SourceSpec::TwoRegion {
                amplitude: num("source.amplitude", 1.0)?,
            },
            "file" => SourceSpec::File(existing(path("source.file"), "source.file")?),
            other => return Err(invalid(format!("unknown source kind `{other}`"))),
        };

        let boundary = match get("boundary.g").unwrap_or("bilinear") {
            "zero" => BoundarySpec::Zero,
            "bilinear" => BoundarySpec::Bilinear,
            "constant" => BoundarySpec::Constant(num("boundary.value", 0.0)?),
            "file" => BoundarySpec::File(existing(path("boundary.file"), "boundary.file")?),
            other => return Err(invalid(format!("unknown boundary data `{other}`"))),
        };

        let gamma = match get("gamma") {
            None => Gamma::default(),
            Some("auto") => Gamma::Auto {
                alpha: num("gamma.alpha", 2.0)?,
            },
            Some(v) => Gamma::Fixed(parse_num("gamma", v)?),
        };

        let strategy: Strategy = get("strategy").unwrap_or("adaptive").parse()?;
        let defaults = AdaptiveConfig::default();
        let theta_default = if strategy == Strategy::Pursuit { 0.8 } else { defaults.theta };
        let adaptive = AdaptiveConfig {
            strategy,
            theta: num("adaptive.theta", theta_default)?,
            delta0: num("adaptive.delta0", defaults.delta0)?,
            epsilon: num("adaptive.epsilon", defaults.epsilon)?,
            max_iterations: int("adaptive.max_iterations", defaults.max_iterations)?,
            max_dof: get("adaptive.max_dof")
                .map(|v| parse_num("adaptive.max_dof", v))
                .transpose()?,
            l1: int("adaptive.l1", defaults.l1)?,
            l2: int("adaptive.l2", defaults.l2)?,
            families: get("adaptive.families").map_or(Ok(defaults.families), str::parse)?,
            uniform_increment: int("adaptive.uniform_increment", defaults.uniform_increment)?,
            record_time: flag("output.record_time")?,
        };
        adaptive.validate()?;

        let m_max = match get("spectral.m_max") {
            None => SpectralOptions::default().m_max,
            Some("all") => None,
            Some(v) => Some(parse_num("spectral.m_max", v)?),
        };

        let oversampling = if flag("oversampling.enabled")? {
            let d = Oversampling::default();
            Some(Oversampling {
                halo: int("oversampling.halo", d.halo)?,
                n_pod: int("oversampling.n_pod", d.n_pod)?,
            })
        } else {
            None
        };

        let label = get("label").map(str::to_string).unwrap_or_else(|| {
            if oversampling.is_some() {
                format!("{strategy}-oversampling")
            } else {
                strategy.to_string()
            }
        });

        Ok(Self {
            problem: ProblemSpec {
                nc,
                nf,
                kappa,
                source,
                boundary,
                gamma,
            },
            adaptive,
            m_max,
            oversampling,
            snapshot_reference: flag("reference.snapshot")?,
            output_dir: path("output.dir").unwrap_or_else(|| resolve(base, "out")),
            label,
        })
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: PathBuf::new(),
        line,
        message,
    };
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(k + 1, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(perr(k + 1, format!("unknown key `{key}`")));
        }
        if let Some((first, _)) = map.insert(key.clone(), (k + 1, value.trim().to_string())) {
            return Err(perr(k + 1, format!("duplicate key `{key}` (first on line {first})")));
        }
    }
    Ok(map)
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    let v = v.trim();
    v.parse()
        .or_else(|_| {
            // allow integers written in float notation, e.g. 1e4
            v.parse::<f64>()
                .ok()
                .filter(|f| f.fract() == 0.0 && *f >= 0.0)
                .and_then(|f| format!("{f:.0}").parse().ok())
                .ok_or(())
        })
        .map_err(|_| invalid(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn resolve(base: &Path, v: &str) -> PathBuf {
    let p = PathBuf::from(v);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn existing(p: Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = p.ok_or_else(|| invalid(format!("`{key}` is required")))?;
    if !p.exists() {
        return Err(invalid(format!("`{key}`: {} does not exist", p.display())));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::parse("grid.Nc = 2\ngrid.nf=4 # fine\nstrategy=pursuit\n", Path::new("/tmp")).unwrap();
        assert_eq!((c.problem.nc, c.problem.nf), (2, 4));
        assert_eq!(c.adaptive.strategy, Strategy::Pursuit);
        assert_eq!(c.adaptive.theta, 0.8);
        assert_eq!(c.problem.boundary, BoundarySpec::Bilinear);
        assert_eq!(c.problem.gamma, Gamma::Fixed(16.0));
        assert_eq!(c.label, "pursuit");
        assert_eq!(c.output_dir, PathBuf::from("/tmp/out"));
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        assert!(RunConfig::parse("grid.nx = 3", base).is_err());
        assert!(RunConfig::parse("grid.nc = 3\ngrid.nc = 4", base).is_err());
        assert!(RunConfig::parse("kappa.contrast = 0.5", base).is_err());
        assert!(RunConfig::parse("kappa.file = /no/such/file", base).is_err());
        assert!(RunConfig::parse("gamma = soft", base).is_err());
        assert!(RunConfig::parse("just text", base).is_err());
    }

    #[test]
    fn generator_specs() {
        let (s, n) = KappaSpec::parse_generator("channels:contrast=1e3,seed=7,n=64").unwrap();
        assert_eq!(n, Some(64));
        assert_eq!(
            s,
            KappaSpec::Generator {
                kind: KappaGenerator::Channels,
                contrast: 1e3,
                seed: 7
            }
        );
        assert!(KappaSpec::parse_generator("stripes").is_err());
    }
}
