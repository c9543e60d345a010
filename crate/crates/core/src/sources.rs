//! Source densities and the per-source quantities the bounds consume:
//! differential entropy, variance and the zero-rate distortion `D_max`.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::EpsilonLoss;
use crate::quad::integrate_breaks;

/// Upper-tail probability of the standard normal, `Φ_c(x) = P(Z > x)`.
pub fn erfc_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Piecewise-constant density on a uniform grid; cell `i` is centred on `grid[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSource {
    grid: Vec<f64>,
    masses: Vec<f64>,
    step: f64,
}

impl TabulatedSource {
    /// Validates the grid and renormalizes masses that sum to `1 ± 1e-6`.
    pub fn new(grid: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if grid.len() != masses.len() {
            return Err(Error::InvalidSource(format!(
                "grid has {} points but {} masses were given",
                grid.len(),
                masses.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::InvalidSource("need at least two grid points".into()));
        }
        if grid.iter().chain(&masses).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSource("non-finite value in table".into()));
        }
        if let Some(m) = masses.iter().find(|m| **m < 0.0) {
            return Err(Error::InvalidSource(format!("negative mass {m}")));
        }
        let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
        if step <= 0.0 {
            return Err(Error::InvalidSource("grid must be strictly increasing".into()));
        }
        for (k, w) in grid.windows(2).enumerate() {
            let d = w[1] - w[0];
            if d <= 0.0 {
                return Err(Error::InvalidSource(format!(
                    "grid not strictly increasing at index {}",
                    k + 1
                )));
            }
            if (d - step).abs() > 1e-6 * step {
                return Err(Error::InvalidSource(format!(
                    "grid not uniformly spaced at index {} (spacing {d}, expected {step})",
                    k + 1
                )));
            }
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidSource(format!(
                "masses sum to {total}, expected 1 within 1e-6"
            )));
        }
        let masses = masses.into_iter().map(|m| m / total).collect();
        Ok(Self { grid, masses, step })
    }

    /// Discretizes a density onto `n` uniform points spanning `[lo, hi]`.
    pub fn discretize<F: Fn(f64) -> f64>(pdf: F, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || hi <= lo {
            return Err(Error::InvalidSource("need n >= 2 and hi > lo".into()));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        let raw: Vec<f64> = grid.iter().map(|&x| pdf(x) * step).collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidSource("density has no mass on the grid".into()));
        }
        Self::new(grid, raw.into_iter().map(|m| m / total).collect())
    }

    /// Reads a two-column `x,mass` CSV. A non-numeric first row is taken as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut grid = Vec::new();
        let mut masses = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            if rec.len() < 2 {
                return Err(Error::Csv(format!("row {}: expected two columns", row + 1)));
            }
            let x = rec[0].parse::<f64>();
            let m = rec[1].parse::<f64>();
            match (x, m) {
                (Ok(x), Ok(m)) => {
                    grid.push(x);
                    masses.push(m);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::Csv(format!(
                        "row {}: could not parse '{}', '{}' as numbers",
                        row + 1,
                        &rec[0],
                        &rec[1]
                    )))
                }
            }
        }
        Self::new(grid, masses)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file =
            std::fs::File::open(path.as_ref()).map_err(|e| Error::Csv(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn mean(&self) -> f64 {
        self.grid.iter().zip(&self.masses).map(|(x, m)| x * m).sum()
    }

    fn pdf(&self, x: f64) -> f64 {
        let pos = (x - self.grid[0]) / self.step;
        let idx = pos.round();
        if idx < 0.0 || idx > (self.grid.len() - 1) as f64 {
            return 0.0;
        }
        self.masses[idx as usize] / self.step
    }

    fn entropy(&self) -> f64 {
        -self
            .masses
            .iter()
            .filter(|m| **m > 0.0)
            .map(|m| m * (m / self.step).ln())
            .sum::<f64>()
    }

    fn variance(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self
            .grid
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| (x - mean) * (x - mean) * m)
            .sum();
        // within-cell variance of the piecewise-constant density
        second + self.step * self.step / 12.0
    }

    fn expected_loss(&self, y: f64, loss: &EpsilonLoss) -> f64 {
        self.grid
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| m * loss.rho(x - y))
            .sum()
    }
}

/// A scalar memoryless source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Source {
    /// `(α/2)·exp(-α|x|)`
    Laplacian {
        alpha: f64,
    },
    /// Zero-mean normal with variance `sigma2`.
    Gaussian {
        sigma2: f64,
    },
    Tabulated(TabulatedSource),
}

/// The four scalars every bound needs from a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub h_p: f64,
    pub v_p: f64,
    pub d_max_eps: f64,
    pub d_max_zero: f64,
}

impl Source {
    pub fn laplacian(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(Source::Laplacian { alpha })
        } else {
            Err(Error::InvalidSource(format!("alpha must be positive, got {alpha}")))
        }
    }

    pub fn gaussian(sigma2: f64) -> Result<Self> {
        if sigma2 > 0.0 && sigma2.is_finite() {
            Ok(Source::Gaussian { sigma2 })
        } else {
            Err(Error::InvalidSource(format!("sigma2 must be positive, got {sigma2}")))
        }
    }

    pub fn tabulated(grid: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        TabulatedSource::new(grid, masses).map(Source::Tabulated)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Source::Laplacian { .. } => "laplacian",
            Source::Gaussian { .. } => "gaussian",
            Source::Tabulated(_) => "tabulated",
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Source::Laplacian { alpha } => 0.5 * alpha * (-alpha * x.abs()).exp(),
            Source::Gaussian { sigma2 } => (-x * x / (2.0 * sigma2)).exp() / (2.0 * PI * sigma2).sqrt(),
            Source::Tabulated(t) => t.pdf(x),
        }
    }

    /// Differential entropy in nats.
    pub fn differential_entropy(&self) -> f64 {
        match self {
            Source::Laplacian { alpha } => 1.0 - (alpha / 2.0).ln(),
            Source::Gaussian { sigma2 } => 0.5 * (1.0 + (2.0 * PI * sigma2).ln()),
            Source::Tabulated(t) => t.entropy(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Source::Laplacian { alpha } => 2.0 / (alpha * alpha),
            Source::Gaussian { sigma2 } => *sigma2,
            Source::Tabulated(t) => t.variance(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Source::Tabulated(t) => t.mean(),
            _ => 0.0,
        }
    }

    /// `E[ρ_ε(X - y)]`: closed forms at `y = 0` for the parametric sources,
    /// quadrature elsewhere, exact sum for tabulated sources.
    pub fn expected_loss(&self, y: f64, loss: &EpsilonLoss) -> f64 {
        match self {
            Source::Tabulated(t) => t.expected_loss(y, loss),
            _ if y == 0.0 => self.d_max(loss),
            _ => {
                let eps = loss.epsilon();
                let reach = self.half_width(1e-18);
                let breaks = [-reach + y.min(0.0), 0.0, y - eps, y + eps, reach + y.max(0.0)];
                let scale = self.variance().sqrt() / 8.0;
                integrate_breaks(|x| self.pdf(x) * loss.rho(x - y), &breaks, scale)
            }
        }
    }

    /// Minimizer and value of `y ↦ E[ρ_ε(X - y)]` by golden-section search.
    ///
    /// The objective is convex in `y`, so the search converges to the global
    /// minimum. Tolerance in `y` is 1e-10.
    pub fn minimize_expected_loss(&self, loss: &EpsilonLoss) -> (f64, f64) {
        let (lo, hi) = match self {
            Source::Tabulated(t) => (t.grid[0], t.grid[t.grid.len() - 1]),
            _ => {
                let w = self.variance().sqrt() * 4.0;
                (-w, w)
            }
        };
        let y = golden_section(|y| self.expected_loss(y, loss), lo, hi, 1e-10);
        (y, self.expected_loss(y, loss))
    }

    /// Zero-rate distortion `D_max = inf_y E[ρ_ε(X - y)]`.
    pub fn d_max(&self, loss: &EpsilonLoss) -> f64 {
        let eps = loss.epsilon();
        match self {
            Source::Laplacian { alpha } => (-alpha * eps).exp() / alpha,
            Source::Gaussian { sigma2 } => {
                let sigma = sigma2.sqrt();
                2.0 * (sigma2 * self.pdf(eps) - eps * erfc_tail(eps / sigma))
            }
            Source::Tabulated(_) => self.minimize_expected_loss(loss).1,
        }
    }

    pub fn summary(&self, loss: &EpsilonLoss) -> SourceSummary {
        SourceSummary {
            h_p: self.differential_entropy(),
            v_p: self.variance(),
            d_max_eps: self.d_max(loss),
            d_max_zero: self.d_max(&EpsilonLoss::absolute()),
        }
    }

    /// Probability mass outside `[-half_width, half_width]`.
    pub fn tail_mass(&self, half_width: f64) -> f64 {
        match self {
            Source::Laplacian { alpha } => (-alpha * half_width).exp(),
            Source::Gaussian { sigma2 } => 2.0 * erfc_tail(half_width / sigma2.sqrt()),
            Source::Tabulated(t) => t
                .grid
                .iter()
                .zip(&t.masses)
                .filter(|(x, _)| x.abs() > half_width)
                .map(|(_, m)| m)
                .sum(),
        }
    }

    /// Smallest symmetric half-width whose tail mass is at most `tail`.
    pub fn half_width(&self, tail: f64) -> f64 {
        match self {
            Source::Laplacian { alpha } => (1.0 / tail).ln() / alpha,
            Source::Gaussian { sigma2 } => {
                let sigma = sigma2.sqrt();
                // Φ_c(t) ≤ tail/2 solved by bisection
                let (mut lo, mut hi) = (0.0, 40.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if 2.0 * erfc_tail(mid) > tail {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi * sigma
            }
            Source::Tabulated(t) => t.grid[0].abs().max(t.grid[t.grid.len() - 1].abs()) + 0.5 * t.step,
        }
    }
}

/// Golden-section search for the minimum of a unimodal function on `[a, b]`.
pub(crate) fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
