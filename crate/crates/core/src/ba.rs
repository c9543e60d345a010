//! Discretized Blahut–Arimoto solver for `R^(ε)(D)` at a fixed slope.
//!
//! The source is discretized on a uniform grid and the reproduction alphabet
//! is the same grid, so the channel kernel `exp(s·ρ_ε(x_i - y_j))` depends
//! only on `i - j` and is stored once per offset.

use serde::{Deserialize, Serialize};

use crate::bounds::{PointFlags, RDPoint};
use crate::error::{require_negative_slope, Error, Result};
use crate::kernel::EpsilonLoss;
use crate::parallel::{fill_indexed, map_ordered};
use crate::sources::Source;

/// Reproduction masses below this are set to zero.
const MASS_FLOOR: f64 = 1e-300;
/// Kernel entries with `s·ρ` below this exponent are treated as zero.
const KERNEL_CUTOFF: f64 = -700.0;

/// Iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaSettings {
    /// Sup-norm change of the reproduction masses that ends the iteration.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BaSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

/// Discretization of a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of grid points (odd, at least 3).
    pub n: usize,
    /// Half-width of the grid in source standard deviations.
    pub span_sigmas: f64,
    /// Stretch the spacing so that the band `[-ε, ε]` spans an odd number of
    /// whole cells.
    pub align_band: bool,
}

impl GridSpec {
    pub fn new(n: usize, span_sigmas: f64) -> Self {
        Self {
            n,
            span_sigmas,
            align_band: true,
        }
    }

    /// Grid of `n` points whose span leaves at most 1e-10 tail mass.
    pub fn auto(src: &Source, n: usize) -> Self {
        let sigma = src.variance().sqrt();
        Self::new(n, src.half_width(1e-10) / sigma)
    }
}

/// A discretized fixed-slope problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BAProblem {
    x_grid: Vec<f64>,
    p_mass: Vec<f64>,
    step: f64,
    loss: EpsilonLoss,
    s: f64,
    /// `exp(s·ρ_ε(kΔ))` for `k = -(N-1) ..= N-1`, stored at `k + N - 1`.
    kernel: Vec<f64>,
    /// `ρ_ε(kΔ)` with the same layout.
    distortion: Vec<f64>,
    /// Largest `|k|` with a nonzero kernel entry.
    band: usize,
    /// Source mass lost to truncation (zero for tabulated sources).
    tail_mass: f64,
}

impl BAProblem {
    /// Problem on an explicit uniform grid; `y_grid = x_grid`.
    pub fn from_masses(x_grid: Vec<f64>, p_mass: Vec<f64>, loss: EpsilonLoss, s: f64) -> Result<Self> {
        require_negative_slope(s)?;
        let n = x_grid.len();
        if n < 2 || p_mass.len() != n {
            return Err(Error::Domain(
                "grid and masses must have equal length of at least 2".into(),
            ));
        }
        let step = (x_grid[n - 1] - x_grid[0]) / (n - 1) as f64;
        if !(step > 0.0) {
            return Err(Error::Domain("grid must be increasing".into()));
        }
        if x_grid.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step) {
            return Err(Error::Domain("grid must be uniformly spaced".into()));
        }
        if p_mass.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::Domain("masses must be nonnegative".into()));
        }
        let total: f64 = p_mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("masses sum to zero".into()));
        }
        let p_mass: Vec<f64> = p_mass.into_iter().map(|m| m / total).collect();

        let mut kernel = vec![0.0; 2 * n - 1];
        let mut distortion = vec![0.0; 2 * n - 1];
        let mut band = 0;
        for k in 0..n {
            let d = loss.rho(k as f64 * step);
            let e = s * d;
            let kv = if e < KERNEL_CUTOFF { 0.0 } else { e.exp() };
            if kv > 0.0 {
                band = k;
            }
            kernel[n - 1 + k] = kv;
            kernel[n - 1 - k] = kv;
            distortion[n - 1 + k] = d;
            distortion[n - 1 - k] = d;
        }
        Ok(Self {
            x_grid,
            p_mass,
            step,
            loss,
            s,
            kernel,
            distortion,
            band,
            tail_mass: 0.0,
        })
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    /// Reproduction grid (identical to the source grid).
    pub fn y_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn p_mass(&self) -> &[f64] {
        &self.p_mass
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn slope(&self) -> f64 {
        self.s
    }

    pub fn loss(&self) -> EpsilonLoss {
        self.loss
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn len(&self) -> usize {
        self.x_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_grid.is_empty()
    }

    /// `ρ_ε(x_i - y_j)`.
    pub fn distortion(&self, i: usize, j: usize) -> f64 {
        self.distortion[i + self.len() - 1 - j]
    }

    /// The same problem at another slope.
    pub fn with_slope(&self, s: f64) -> Result<Self> {
        let mut p = Self::from_masses(self.x_grid.clone(), self.p_mass.clone(), self.loss, s)?;
        p.tail_mass = self.tail_mass;
        Ok(p)
    }

    /// Index window `[lo, hi]` of partners of `i` inside the kernel band.
    #[inline]
    fn window(&self, i: usize) -> (usize, usize) {
        let n = self.len();
        (i.saturating_sub(self.band), (i + self.band).min(n - 1))
    }

    /// `out_i = Σ_j v_j K(i - j)` over the kernel band.
    fn correlate(&self, v: &[f64], out: &mut [f64]) {
        let n = self.len();
        fill_indexed(out, |i| {
            let (lo, hi) = self.window(i);
            // K is even, so K(i - j) = kernel[j - i + n - 1]
            let k0 = lo + n - 1 - i;
            dot(&v[lo..=hi], &self.kernel[k0..k0 + (hi - lo + 1)])
        });
    }

    /// The minimized objective `-Σ_i p_i log Σ_j q_j K(i - j)`.
    pub fn objective(&self, q: &[f64]) -> f64 {
        let mut z = vec![0.0; self.len()];
        self.correlate(q, &mut z);
        objective_from(&self.p_mass, &z)
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn objective_from(p: &[f64], z: &[f64]) -> f64 {
    -p.iter()
        .zip(z)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, zi)| pi * zi.ln())
        .sum::<f64>()
}

/// Discretizes `src` for a fixed-slope solve.
pub fn build_problem(src: &Source, loss: &EpsilonLoss, s: f64, n: usize, span_sigmas: f64) -> Result<BAProblem> {
    build_problem_with(src, loss, s, GridSpec::new(n, span_sigmas))
}

pub fn build_problem_with(src: &Source, loss: &EpsilonLoss, s: f64, grid: GridSpec) -> Result<BAProblem> {
    require_negative_slope(s)?;
    if let Source::Tabulated(t) = src {
        return BAProblem::from_masses(t.grid().to_vec(), t.masses().to_vec(), *loss, s);
    }
    if grid.n < 3 || grid.n.is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "grid size must be odd and at least 3, got {}",
            grid.n
        )));
    }
    if !(grid.span_sigmas > 0.0) {
        return Err(Error::Domain("span must be positive".into()));
    }
    let half = (grid.n - 1) / 2;
    let mut width = grid.span_sigmas * src.variance().sqrt();
    let mut step = width / half as f64;
    let eps = loss.epsilon();
    if grid.align_band && eps > 0.0 {
        // ε/Δ = m + 1/2 with Δ no smaller than the requested spacing
        let m = (eps / step - 0.5).floor();
        if m >= 0.0 {
            step = eps / (m + 0.5);
            width = step * half as f64;
        }
    }
    let tail = src.tail_mass(width + 0.5 * step);
    if tail > 1e-8 {
        return Err(Error::InsufficientSpan { tail });
    }
    let x_grid: Vec<f64> = (0..grid.n).map(|i| (i as f64 - half as f64) * step).collect();
    let p_mass: Vec<f64> = x_grid.iter().map(|&x| src.pdf(x) * step).collect();
    let mut prob = BAProblem::from_masses(x_grid, p_mass, *loss, s)?;
    prob.tail_mass = tail;
    Ok(prob)
}

/// Outcome of one fixed-slope solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BAResult {
    pub s: f64,
    pub q_mass: Vec<f64>,
    pub d_s: f64,
    /// Rate in nats.
    pub r_s: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value before each update.
    pub objective_trace: Vec<f64>,
    /// Largest step-to-step increase of the objective (zero for a monotone run).
    pub max_objective_increase: f64,
    /// Largest deviation of `Σ q` from 1 observed after an update.
    pub max_normalization_error: f64,
    /// `log max_j c_j` at the last update: the objective is within this many
    /// nats of its minimum.
    pub objective_gap: f64,
    /// Sup-norm change of the reproduction masses at the last update.
    pub last_change: f64,
}

impl BAResult {
    pub fn point(&self) -> RDPoint {
        let mut p = RDPoint::rate(self.d_s, self.r_s, Some(self.s));
        p.flags.not_converged = !self.converged;
        p
    }
}

/// Runs the Blahut–Arimoto update from the uniform reproduction distribution.
pub fn ba_iterate(prob: &BAProblem, tol: f64, max_iter: usize) -> Result<BAResult> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let n = prob.len();
    let p = &prob.p_mass;
    let mut q = vec![1.0 / n as f64; n];
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut trace = Vec::new();
    let mut max_increase: f64 = 0.0;
    let mut max_norm_err: f64 = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    let mut last_delta = f64::INFINITY;

    while iterations < max_iter {
        prob.correlate(&q, &mut z);
        let obj = objective_from(p, &z);
        if let Some(prev) = trace.last() {
            max_increase = max_increase.max(obj - prev);
        }
        trace.push(obj);

        for ((wi, pi), zi) in w.iter_mut().zip(p).zip(&z) {
            *wi = if *zi > 0.0 { pi / zi } else { 0.0 };
        }
        prob.correlate(&w, &mut c);
        gap = c.iter().fold(0.0f64, |m, cj| m.max(*cj)).ln();
        let mut total = 0.0;
        for (qj, cj) in q.iter().zip(c.iter_mut()) {
            let v = qj * *cj;
            *cj = if v < MASS_FLOOR { 0.0 } else { v };
            total += *cj;
        }
        let mut delta: f64 = 0.0;
        let mut sum = 0.0;
        for (qj, cj) in q.iter_mut().zip(&c) {
            let v = cj / total;
            delta = delta.max((v - *qj).abs());
            *qj = v;
            sum += v;
        }
        max_norm_err = max_norm_err.max((sum - 1.0).abs());
        iterations += 1;
        last_delta = delta;
        if delta < tol {
            converged = true;
            break;
        }
    }

    // rate and distortion at the final reproduction distribution
    prob.correlate(&q, &mut z);
    let obj = objective_from(p, &z);
    if let Some(prev) = trace.last() {
        max_increase = max_increase.max(obj - prev);
    }
    trace.push(obj);
    let mut dist_num = vec![0.0; n];
    fill_indexed(&mut dist_num, |i| {
        if z[i] <= 0.0 || p[i] == 0.0 {
            return 0.0;
        }
        let (lo, hi) = prob.window(i);
        let k0 = lo + n - 1 - i;
        let len = hi - lo + 1;
        let acc: f64 = q[lo..=hi]
            .iter()
            .zip(&prob.kernel[k0..k0 + len])
            .zip(&prob.distortion[k0..k0 + len])
            .map(|((qj, k), d)| qj * k * d)
            .sum();
        p[i] * acc / z[i]
    });
    let d_s: f64 = dist_num.iter().sum();
    let r_s = (prob.s * d_s + obj).max(0.0);

    Ok(BAResult {
        s: prob.s,
        q_mass: q,
        d_s,
        r_s,
        iterations,
        converged,
        objective_trace: trace,
        max_objective_increase: max_increase,
        max_normalization_error: max_norm_err,
        objective_gap: gap,
        last_change: last_delta,
    })
}

/// Points of a BA sweep, sorted by distortion, plus the slopes that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct BaCurve {
    pub points: Vec<RDPoint>,
    pub failures: Vec<(f64, Error)>,
}

impl BaCurve {
    /// Rate at distortion `d` by linear interpolation between converged
    /// neighbours. Outside the covered range the tangent line at the nearest
    /// end point (slope `s`) is used and the result is flagged.
    pub fn rate_at(&self, d: f64) -> Option<(f64, PointFlags)> {
        let pts = &self.points;
        let first = pts.first()?;
        let last = pts.last()?;
        let mut flags = PointFlags::default();
        let r = if d <= first.d {
            flags.extrapolated = d < first.d;
            flags.not_converged = first.flags.not_converged;
            first.r + first.s.unwrap_or(0.0) * (d - first.d)
        } else if d >= last.d {
            flags.extrapolated = d > last.d;
            flags.not_converged = last.flags.not_converged;
            (last.r + last.s.unwrap_or(0.0) * (d - last.d)).max(0.0)
        } else {
            let k = pts.partition_point(|p| p.d <= d);
            let (a, b) = (&pts[k - 1], &pts[k]);
            flags.not_converged = a.flags.not_converged || b.flags.not_converged;
            let t = (d - a.d) / (b.d - a.d);
            a.r + t * (b.r - a.r)
        };
        Some((r.max(0.0), flags))
    }
}

/// Solves one BA problem per slope. Slopes are independent and are solved in
/// parallel; the output order does not depend on scheduling.
pub fn ba_curve(src: &Source, loss: &EpsilonLoss, s_list: &[f64], grid: GridSpec, settings: BaSettings) -> BaCurve {
    let results = map_ordered(s_list, |&s| {
        build_problem_with(src, loss, s, grid).and_then(|p| ba_iterate(&p, settings.tol, settings.max_iter))
    });
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (s, res) in s_list.iter().zip(results) {
        match res {
            Ok(r) => points.push(r.point()),
            Err(e) => failures.push((*s, e)),
        }
    }
    points.sort_by(|a, b| a.d.total_cmp(&b.d));
    BaCurve { points, failures }
}
