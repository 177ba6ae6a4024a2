//! Cell-wise coefficient fields: permeability `κ`, source `f`, and the
//! Dirichlet data `g`.
//!
//! Both cell fields are stored row-major over the fine cells of the whole
//! domain, `value[cy * nx + cx]`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::grid::{Domain, Grid};

const KAPPA_MAGIC: &[u8; 8] = b"GMSKAPPA";

#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl PermeabilityField {
    /// Wrap cell values; every value must be finite and at least 1.
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid("permeability field must have at least one cell"));
        }
        if values.len() != nx * ny {
            return Err(invalid(format!(
                "permeability field has {} values, expected {}",
                values.len(),
                nx * ny
            )));
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 1.0)) {
            return Err(Error::InvalidKappa { cell, value });
        }
        Ok(Self { nx, ny, values })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(n, n, vec![value; n * n])
    }

    /// Long horizontal and vertical high-permeability strips plus a few small
    /// inclusions, laid out in physical coordinates so that refinements of
    /// the same seed look alike.
    pub fn channels(n: usize, contrast: f64, seed: u64) -> Result<Self> {
        check_contrast(contrast)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![1.0; n * n];
        let width = 1.0 / 64.0;
        for k in 0..6 {
            let horizontal = k % 3 != 2;
            let center = rng.random_range(0.06..0.94);
            let w = width * rng.random_range(1.0..2.0);
            let start = rng.random_range(0.0..0.3);
            let end = rng.random_range(0.7..1.0);
            let (x0, x1, y0, y1) = if horizontal {
                (start, end, center - 0.5 * w, center + 0.5 * w)
            } else {
                (center - 0.5 * w, center + 0.5 * w, start, end)
            };
            paint_rect(&mut v, n, [x0, x1, y0, y1], contrast);
        }
        for _ in 0..10 {
            let s = rng.random_range(1.0 / 48.0..1.0 / 20.0);
            let x = rng.random_range(0.0..1.0 - s);
            let y = rng.random_range(0.0..1.0 - s);
            paint_rect(&mut v, n, [x, x + s, y, y + s], contrast);
        }
        Self::new(n, n, v)
    }

    /// Randomly placed square inclusions of value `contrast`.
    pub fn inclusions(n: usize, contrast: f64, seed: u64) -> Result<Self> {
        check_contrast(contrast)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![1.0; n * n];
        for _ in 0..40 {
            let s = rng.random_range(1.0 / 40.0..1.0 / 12.0);
            let x = rng.random_range(0.0..1.0 - s);
            let y = rng.random_range(0.0..1.0 - s);
            paint_rect(&mut v, n, [x, x + s, y, y + s], contrast);
        }
        Self::new(n, n, v)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, cx: usize, cy: usize) -> f64 {
        self.values[cy * self.nx + cx]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::MAX, f64::min)
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        let n = grid.fine_cells_per_axis();
        if self.nx != n || self.ny != n {
            return Err(invalid(format!(
                "permeability field is {}x{} but the grid has {n}x{n} fine cells",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    /// Text format: a `KAPPA nx ny` header, then `nx * ny` values row-major.
    pub fn save_text(&self, path: &Path) -> Result<()> {
        write_cell_table(path, "KAPPA", self.nx, self.ny, &self.values)
    }

    pub fn load_text(path: &Path) -> Result<Self> {
        let (nx, ny, values) = read_cell_table(path, "KAPPA", |v| {
            (!(v.is_finite() && v >= 1.0)).then(|| format!("permeability {v} < 1"))
        })?;
        Self::new(nx, ny, values)
    }

    /// Binary format: 8-byte magic, `nx` and `ny` as u64, then f64 values,
    /// all little-endian.
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(KAPPA_MAGIC)?;
        w.write_all(&(self.nx as u64).to_le_bytes())?;
        w.write_all(&(self.ny as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != KAPPA_MAGIC {
            return Err(Error::Format(format!("{}: not a binary permeability file", path.display())));
        }
        let nx = read_u64(&mut r)? as usize;
        let ny = read_u64(&mut r)? as usize;
        let mut values = Vec::with_capacity(nx * ny);
        let mut buf = [0u8; 8];
        for _ in 0..nx * ny {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Self::new(nx, ny, values)
    }

    /// Load either format, sniffing the magic bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let mut head = [0u8; 8];
        let n = File::open(path)?.read(&mut head)?;
        if n == 8 && &head == KAPPA_MAGIC {
            Self::load_binary(path)
        } else {
            Self::load_text(path)
        }
    }
}

/// Read a `TAG nx ny` text table of `nx * ny` values; `check` rejects a
/// value with a message, which is reported with its cell and line.
fn read_cell_table(path: &Path, tag: &str, check: impl Fn(f64) -> Option<String>) -> Result<(usize, usize, Vec<f64>)> {
    let reader = BufReader::new(File::open(path)?);
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let Some((nx, _)) = header else {
            let parts: Vec<&str> = text.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != tag {
                return Err(perr(lineno, format!("expected header `{tag} nx ny`")));
            }
            let nx = parts[1].parse().map_err(|_| perr(lineno, "bad nx".into()))?;
            let ny = parts[2].parse().map_err(|_| perr(lineno, "bad ny".into()))?;
            header = Some((nx, ny));
            continue;
        };
        for tok in text.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| perr(lineno, format!("cannot parse value `{tok}`")))?;
            if let Some(msg) = check(v) {
                let cell = values.len();
                return Err(perr(lineno, format!("{msg} at cell ({}, {})", cell % nx.max(1), cell / nx.max(1))));
            }
            values.push(v);
        }
    }
    let (nx, ny) = header.ok_or_else(|| perr(0, "empty file".into()))?;
    if values.len() != nx * ny {
        return Err(perr(0, format!("expected {} values, found {}", nx * ny, values.len())));
    }
    Ok((nx, ny, values))
}

fn write_cell_table(path: &Path, tag: &str, nx: usize, ny: usize, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{tag} {nx} {ny}")?;
    for row in values.chunks(nx) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn check_contrast(contrast: f64) -> Result<()> {
    if !(contrast.is_finite() && contrast >= 1.0) {
        return Err(invalid(format!("contrast must be >= 1, got {contrast}")));
    }
    Ok(())
}

/// Set every cell whose center lies in `[x0, x1] × [y0, y1]` (unit square
/// coordinates) to `value`. At least one cell is painted per axis.
fn paint_rect(v: &mut [f64], n: usize, r: [f64; 4], value: f64) {
    let nf = n as f64;
    let span = |a: f64, b: f64| {
        let lo = (a * nf - 0.5).ceil().clamp(0.0, nf - 1.0);
        let hi = (b * nf - 0.5).floor().clamp(0.0, nf - 1.0);
        if hi < lo {
            let mid = (0.5 * (a + b) * nf).floor().clamp(0.0, nf - 1.0) as usize;
            (mid, mid)
        } else {
            (lo as usize, hi as usize)
        }
    };
    let (cx0, cx1) = span(r[0], r[1]);
    let (cy0, cy1) = span(r[2], r[3]);
    for cy in cy0..=cy1 {
        for cx in cx0..=cx1 {
            v[cy * n + cx] = value;
        }
    }
}

/// Piecewise constant source term on fine cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl SourceField {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(invalid(format!("source has {} values, expected {}", values.len(), nx * ny)));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("source values must be finite"));
        }
        Ok(Self { nx, ny, values })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            nx: n,
            ny: n,
            values: vec![value; n * n],
        }
    }

    /// `+amplitude` on a square near the lower-left corner, `-amplitude` on
    /// a square near the upper-right corner, zero elsewhere.
    pub fn two_region(n: usize, amplitude: f64) -> Self {
        let mut values = vec![0.0; n * n];
        paint_rect(&mut values, n, [0.1, 0.35, 0.1, 0.35], amplitude);
        paint_rect(&mut values, n, [0.65, 0.9, 0.65, 0.9], -amplitude);
        Self { nx: n, ny: n, values }
    }

    /// Text format: a `SOURCE nx ny` header, then the values row-major.
    pub fn save_text(&self, path: &Path) -> Result<()> {
        write_cell_table(path, "SOURCE", self.nx, self.ny, &self.values)
    }

    pub fn load_text(path: &Path) -> Result<Self> {
        let (nx, ny, values) = read_cell_table(path, "SOURCE", |v| (!v.is_finite()).then(|| "non-finite source".to_string()))?;
        Self::new(nx, ny, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, cx: usize, cy: usize) -> f64 {
        self.values[cy * self.nx + cx]
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        let n = grid.fine_cells_per_axis();
        if self.nx != n || self.ny != n {
            return Err(invalid(format!(
                "source is {}x{} but the grid has {n}x{n} fine cells",
                self.nx, self.ny
            )));
        }
        Ok(())
    }
}

/// Dirichlet data `g` on the domain boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryData {
    Zero,
    Constant(f64),
    /// `g(x, y) = x y`.
    Bilinear,
    Table(BoundaryTable),
}

impl BoundaryData {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            BoundaryData::Zero => 0.0,
            BoundaryData::Constant(c) => *c,
            BoundaryData::Bilinear => x * y,
            BoundaryData::Table(t) => t.eval(x, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            BoundaryData::Zero => true,
            BoundaryData::Constant(c) => *c == 0.0,
            BoundaryData::Table(t) => t.values.iter().all(|&v| v == 0.0),
            BoundaryData::Bilinear => false,
        }
    }
}

/// Boundary values at the `4n` nodes of an `n`-segment-per-side lattice,
/// counterclockwise from the lower-left corner, interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTable {
    n: usize,
    domain: Domain,
    values: Vec<f64>,
}

impl BoundaryTable {
    pub fn new(n: usize, domain: Domain, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != 4 * n {
            return Err(invalid(format!("boundary table needs 4n values, got {} for n = {n}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("boundary values must be finite"));
        }
        Ok(Self { n, domain, values })
    }

    /// Sample `g` at the lattice nodes.
    pub fn sample(n: usize, domain: Domain, g: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..4 * n)
            .map(|k| {
                let (u, v) = perimeter_point(k as f64 / n as f64);
                g(domain.x0 + u * domain.side, domain.y0 + v * domain.side)
            })
            .collect();
        Self::new(n, domain, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let u = ((x - self.domain.x0) / self.domain.side).clamp(0.0, 1.0);
        let v = ((y - self.domain.y0) / self.domain.side).clamp(0.0, 1.0);
        let dist = [v, 1.0 - u, 1.0 - v, u];
        let side = (0..4).min_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap();
        let t = match side {
            0 => u,
            1 => 1.0 + v,
            2 => 3.0 - u,
            _ => 4.0 - v,
        };
        let m = 4 * self.n;
        let p = t * self.n as f64;
        let k = (p.floor() as usize).min(m);
        let frac = p - k as f64;
        let a = self.values[k % m];
        let b = self.values[(k + 1) % m];
        (1.0 - frac) * a + frac * b
    }

    /// Text format: a `BOUNDARY n` header followed by `4n` values.
    pub fn load_text(path: &Path, domain: Domain) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let perr = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut n = None;
        let mut values = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if n.is_none() {
                let parts: Vec<&str> = t.split_whitespace().collect();
                if parts.len() != 2 || parts[0] != "BOUNDARY" {
                    return Err(perr(k + 1, "expected header `BOUNDARY n`".into()));
                }
                n = Some(parts[1].parse::<usize>().map_err(|_| perr(k + 1, "bad n".into()))?);
                continue;
            }
            for tok in t.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| perr(k + 1, format!("cannot parse value `{tok}`")))?,
                );
            }
        }
        let n = n.ok_or_else(|| perr(0, "empty file".into()))?;
        Self::new(n, domain, values)
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "BOUNDARY {}", self.n)?;
        for v in &self.values {
            writeln!(w, "{v:e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unit-square point at perimeter parameter `t ∈ [0, 4)`.
fn perimeter_point(t: f64) -> (f64, f64) {
    match t {
        t if t < 1.0 => (t, 0.0),
        t if t < 2.0 => (1.0, t - 1.0),
        t if t < 3.0 => (3.0 - t, 1.0),
        t => (0.0, 4.0 - t),
    }
}
