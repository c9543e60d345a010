//! Numerical cross-checks between the analytic bounds and the BA solver.

use serde::{Deserialize, Serialize};

use crate::ba::{ba_iterate, build_problem_with, BAResult, BaSettings, GridSpec};
use crate::bounds::{
    analytic_upper_laplacian, gaussian_entropy_bound, r_u, slb, trivial_bound_laplacian, SINGULARITY_WINDOW,
};
use crate::error::Result;
use crate::kernel::{g_entropy, g_pdf, slope_of_distortion, EpsilonLoss};
use crate::parallel::map_ordered;
use crate::sources::Source;
use crate::spectral::{cosine_transform, g_cf};
use crate::sweep::{linspace_or_logspace, GridScale};

pub const SANDWICH_TOL: f64 = 2e-2;
pub const DOMINANCE_TOL: f64 = 1e-9;
pub const TWO_ROUTE_TOL: f64 = 1e-12;
pub const CF_TOL: f64 = 1e-7;
pub const GRID_TOL: f64 = 5e-3;
pub const MONOTONE_TOL: f64 = 1e-12;
pub const NORMALIZATION_TOL: f64 = 1e-12;
pub const SLOPE_REL_TOL: f64 = 0.1;
/// At ε = 0 the smallest checked distortion spans this many grid cells.
pub const ZERO_BAND_CELLS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub source: Source,
    pub loss: EpsilonLoss,
    pub ba_n: usize,
    pub ba: BaSettings,
    /// Number of log-spaced slopes in `[-s_max, -s_min]` for the BA checks.
    pub slope_count: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// Slopes at which BA is re-solved on the half-resolution grid.
    pub grid_slopes: Vec<f64>,
}

impl VerifyConfig {
    pub fn new(source: Source, loss: EpsilonLoss, ba_n: usize, ba: BaSettings) -> Self {
        VerifyConfig {
            source,
            loss,
            ba_n,
            ba,
            slope_count: 20,
            s_min: 0.5,
            s_max: 200.0,
            grid_slopes: vec![-1.0, -2.0, -4.0, -8.0],
        }
    }
}

/// One named check. `measured` is the worst observed deviation in the
/// direction that would fail the check; it passes when `measured ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, measured: f64, tolerance: f64, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: measured <= tolerance,
            measured,
            tolerance,
            detail,
        }
    }

    fn errored(name: &str, tolerance: f64, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: false,
            measured: f64::INFINITY,
            tolerance,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub source: String,
    pub epsilon: f64,
    pub ba_n: usize,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn worst<I: IntoIterator<Item = (f64, f64)>>(items: I) -> (f64, f64) {
    items.into_iter().fold(
        (f64::NEG_INFINITY, f64::NAN),
        |acc, (v, at)| if v > acc.0 { (v, at) } else { acc },
    )
}

fn solve_all(src: &Source, loss: &EpsilonLoss, slopes: &[f64], n: usize, ba: BaSettings) -> Vec<Result<BAResult>> {
    let grid = GridSpec::auto(src, n);
    map_ordered(slopes, |&s| {
        build_problem_with(src, loss, s, grid).and_then(|p| ba_iterate(&p, ba.tol, ba.max_iter))
    })
}

fn sandwich(src: &Source, loss: &EpsilonLoss, runs: &[BAResult]) -> Result<CheckResult> {
    let h_p = src.differential_entropy();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for r in runs {
        let d = r.d_s;
        let r_ba = r.point().r;
        lower.push((slb(d, h_p, loss)?.max(0.0) - r_ba, d));
        let s_d = slope_of_distortion(d, loss)?;
        upper.push((r_ba - r_u(src, s_d, loss)?.r, d));
    }
    let (lo, lo_at) = worst(lower);
    let (up, up_at) = worst(upper);
    Ok(CheckResult::new(
        "sandwich",
        lo.max(up),
        SANDWICH_TOL,
        format!("max(SLB - R_BA) = {lo:.3e} at D = {lo_at:.4e}; max(R_BA - R_U) = {up:.3e} at D = {up_at:.4e}"),
    ))
}

fn dominance(src: &Source, loss: &EpsilonLoss, slopes: &[f64]) -> Result<CheckResult> {
    let mut ge = Vec::new();
    let mut au = Vec::new();
    for &s in slopes {
        let ru = r_u(src, s, loss)?.raw;
        ge.push((ru - gaussian_entropy_bound(src, s, loss)?.raw, s));
        if let Source::Laplacian { alpha } = src {
            if ((s.abs() - alpha) / alpha).abs() > SINGULARITY_WINDOW {
                au.push((ru - analytic_upper_laplacian(s, *alpha, loss)?.raw, s));
            }
        }
    }
    let (g, g_at) = worst(ge);
    let mut detail = format!("max(R_U - R_GE) = {g:.3e} at s = {g_at:.4}");
    let mut measured = g;
    if !au.is_empty() {
        let (a, a_at) = worst(au);
        detail.push_str(&format!("; max(R_U - R_AU) = {a:.3e} at s = {a_at:.4}"));
        measured = measured.max(a);
    }
    Ok(CheckResult::new("dominance", measured, DOMINANCE_TOL, detail))
}

fn two_route_slb(src: &Source, loss: &EpsilonLoss) -> Result<CheckResult> {
    let h_p = src.differential_entropy();
    let d_max = src.d_max(loss);
    let mut errs = Vec::new();
    for d in linspace_or_logspace(1e-4 * d_max, d_max, 50, GridScale::Log) {
        let s = slope_of_distortion(d, loss)?;
        let param = h_p - g_entropy(s, loss)?;
        errs.push(((slb(d, h_p, loss)? - param).abs(), d));
    }
    let (e, at) = worst(errs);
    Ok(CheckResult::new(
        "slb_two_route",
        e,
        TWO_ROUTE_TOL,
        format!("max |closed form - parametric| = {e:.3e} at D = {at:.4e}"),
    ))
}

fn cf_consistency(loss: &EpsilonLoss) -> Result<CheckResult> {
    let eps = loss.epsilon();
    let mut errs = Vec::new();
    for s in [-0.5f64, -2.0, -10.0, -50.0] {
        let a = s.abs();
        let reach = eps + 60.0 / a;
        for omega in [0.0, 0.3, 1.0, 3.0, 10.0] {
            let direct = cosine_transform(|x| g_pdf(x, s, loss).unwrap_or(0.0), omega, &[eps], reach, 0.25 / a);
            errs.push(((direct - g_cf(omega, s, loss)?).abs(), omega));
        }
    }
    let (e, at) = worst(errs);
    Ok(CheckResult::new(
        "cf_consistency",
        e,
        CF_TOL,
        format!("max |quadrature - closed form| = {e:.3e} at omega = {at}"),
    ))
}

/// Runs every check. Failures to evaluate a check are reported as failed checks.
pub fn run_verify(cfg: &VerifyConfig) -> VerifyReport {
    let src = &cfg.source;
    let loss = &cfg.loss;
    let s_max = resolvable_slope(cfg);
    let slopes: Vec<f64> = linspace_or_logspace(cfg.s_min, s_max, cfg.slope_count, GridScale::Log)
        .into_iter()
        .map(|v| -v)
        .collect();
    let mut checks = Vec::new();
    let push = |checks: &mut Vec<CheckResult>, name: &str, tol: f64, r: Result<CheckResult>| match r {
        Ok(c) => checks.push(c),
        Err(e) => checks.push(CheckResult::errored(name, tol, e.to_string())),
    };

    let solved = solve_all(src, loss, &slopes, cfg.ba_n, cfg.ba);
    let failures: Vec<String> = slopes
        .iter()
        .zip(&solved)
        .filter_map(|(s, r)| r.as_ref().err().map(|e| format!("s = {s}: {e}")))
        .collect();
    let mut runs: Vec<BAResult> = solved.into_iter().filter_map(|r| r.ok()).collect();
    runs.sort_by(|a, b| a.d_s.total_cmp(&b.d_s));
    if !failures.is_empty() {
        checks.push(CheckResult::errored("ba_solves", 0.0, failures.join("; ")));
    }

    push(&mut checks, "sandwich", SANDWICH_TOL, sandwich(src, loss, &runs));
    if let Some(c) = checks.last_mut() {
        let (gap, gap_at) = worst(runs.iter().map(|r| (r.objective_gap, r.s)));
        let unconverged = runs.iter().filter(|r| !r.converged).count();
        c.detail.push_str(&format!(
            "; slopes in [-{s_max:.4}, -{:.4}]; {unconverged} of {} BA runs hit max_iter; largest Blahut gap {gap:.3e} at s = {gap_at:.4}",
            cfg.s_min,
            runs.len()
        ));
    }
    push(&mut checks, "dominance", DOMINANCE_TOL, dominance(src, loss, &slopes));
    push(&mut checks, "slb_two_route", TWO_ROUTE_TOL, two_route_slb(src, loss));
    push(&mut checks, "cf_consistency", CF_TOL, cf_consistency(loss));

    let (inc, inc_at) = worst(runs.iter().map(|r| (r.max_objective_increase, r.s)));
    checks.push(CheckResult::new(
        "ba_objective_monotone",
        inc.max(0.0),
        MONOTONE_TOL,
        format!("largest objective increase {inc:.3e} at s = {inc_at}"),
    ));
    let (ne, ne_at) = worst(runs.iter().map(|r| (r.max_normalization_error, r.s)));
    checks.push(CheckResult::new(
        "ba_normalization",
        ne.max(0.0),
        NORMALIZATION_TOL,
        format!("largest |sum q - 1| = {ne:.3e} at s = {ne_at}"),
    ));
    checks.push(slope_consistency(&runs));

    if let (true, Source::Laplacian { alpha }) = (loss.is_absolute(), src) {
        let errs = runs.iter().filter_map(|r| {
            trivial_bound_laplacian(r.d_s, *alpha)
                .ok()
                .map(|t| ((r.point().r - t).abs(), r.d_s))
        });
        let (e, at) = worst(errs);
        checks.push(CheckResult::new(
            "laplacian_exact_curve",
            e,
            SANDWICH_TOL,
            format!("max |R_BA + ln(alpha D)| = {e:.3e} at D = {at:.4e}"),
        ));
    }

    push(&mut checks, "grid_convergence", GRID_TOL, grid_convergence(cfg));

    let passed = checks.iter().all(|c| c.passed);
    VerifyReport {
        source: src.name().to_string(),
        epsilon: loss.epsilon(),
        ba_n: cfg.ba_n,
        checks,
        passed,
    }
}

/// The chord between adjacent BA points must have a slope between the two
/// end-point slopes, up to a relative tolerance. This checks convexity,
/// monotonicity and the `dR/dD = s` relation at once.
fn slope_consistency(runs: &[BAResult]) -> CheckResult {
    let pts: Vec<_> = runs
        .iter()
        .map(|r| (r.d_s, r.point().r, r.s))
        .filter(|p| p.1 > 1e-2)
        .collect();
    let mut worst_rel: f64 = 0.0;
    let mut at = f64::NAN;
    for w in pts.windows(2) {
        let ((d0, r0, s0), (d1, r1, s1)) = (w[0], w[1]);
        if d1 - d0 <= 0.0 {
            continue;
        }
        let chord = (r1 - r0) / (d1 - d0);
        let (steep, shallow) = (s0.min(s1), s0.max(s1));
        let below = (steep - chord) / steep.abs();
        let above = (chord - shallow) / shallow.abs();
        let rel = below.max(above).max(0.0);
        if rel > worst_rel {
            worst_rel = rel;
            at = 0.5 * (d0 + d1);
        }
    }
    let detail = if at.is_nan() {
        format!(
            "all {} chord slopes lie between their end-point slopes",
            pts.len().saturating_sub(1)
        )
    } else {
        format!("largest relative excursion of a chord slope outside [s_i, s_i+1]: {worst_rel:.3e} near D = {at:.4e}")
    };
    CheckResult::new("slope_consistency", worst_rel, SLOPE_REL_TOL, detail)
}

/// Largest usable `|s|`. Without the insensitive band the optimal distortion
/// `1/|s|` must span a few grid cells for BA to resolve it.
fn resolvable_slope(cfg: &VerifyConfig) -> f64 {
    if !cfg.loss.is_absolute() {
        return cfg.s_max;
    }
    match build_problem_with(&cfg.source, &cfg.loss, -1.0, GridSpec::auto(&cfg.source, cfg.ba_n)) {
        Ok(p) => cfg.s_max.min(1.0 / (ZERO_BAND_CELLS * p.step())).max(cfg.s_min),
        Err(_) => cfg.s_max,
    }
}

fn coarser(n: usize) -> usize {
    ((n - 1) / 2) | 1
}

fn grid_convergence(cfg: &VerifyConfig) -> Result<CheckResult> {
    let fine = solve_all(&cfg.source, &cfg.loss, &cfg.grid_slopes, cfg.ba_n, cfg.ba);
    let coarse_n = coarser(cfg.ba_n).max(3);
    let coarse = solve_all(&cfg.source, &cfg.loss, &cfg.grid_slopes, coarse_n, cfg.ba);
    let mut diffs = Vec::new();
    for ((s, f), c) in cfg.grid_slopes.iter().zip(fine).zip(coarse) {
        let (f, c) = (f?, c?);
        let dr = (f.point().r - c.point().r).abs();
        diffs.push((dr.max((f.d_s - c.d_s).abs()), *s));
    }
    let (e, at) = worst(diffs);
    Ok(CheckResult::new(
        "grid_convergence",
        e,
        GRID_TOL,
        format!(
            "max change of (D, R) between n={} and n={coarse_n}: {e:.3e} at s = {at}",
            cfg.ba_n
        ),
    ))
}
