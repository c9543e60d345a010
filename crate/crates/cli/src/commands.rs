use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};

use epsrd::ba::{ba_iterate, build_problem_with, BaSettings, GridSpec};
use epsrd::kernel::slope_of_distortion;
use epsrd::parallel::{map_ordered, with_threads};
use epsrd::sources::TabulatedSource;
use epsrd::sweep::{
    dmax_report, round12, run_sweep, write_csv, BoundKind, GridScale, GridVar, SweepConfig, SweepGrid, Units,
};
use epsrd::verify::{run_verify, VerifyConfig};
use epsrd::{EpsilonLoss, Source};
use serde::Serialize;

use crate::args::{Command, Common, Format, ScaleArg, UnitsArg, VarArg};

pub const DEFAULT_MAX_ITER: usize = 200_000;
pub const VERIFY_MAX_ITER: usize = 1_000;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files (exit code 2).
    Config(String),
    /// A check or invariant did not hold (exit code 1).
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

fn config<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn io_err(e: io::Error) -> CliError {
    CliError::Config(format!("output: {e}"))
}

pub fn parse_source(c: &Common) -> Result<Source, CliError> {
    match c.source.as_str() {
        "laplacian" => Source::laplacian(c.alpha).map_err(config),
        "gaussian" => Source::gaussian(c.sigma2).map_err(config),
        other => match other.strip_prefix("csv:") {
            Some(path) => TabulatedSource::from_csv_path(path)
                .map(Source::Tabulated)
                .map_err(|e| CliError::Config(format!("{path}: {e}"))),
            None => Err(CliError::Config(format!(
                "unknown source '{other}' (expected laplacian, gaussian or csv:PATH)"
            ))),
        },
    }
}

fn units(c: &Common) -> Units {
    match c.units {
        UnitsArg::Nats => Units::Nats,
        UnitsArg::Bits => Units::Bits,
    }
}

fn grid(c: &Common) -> SweepGrid {
    SweepGrid {
        var: match c.grid_var {
            VarArg::S => GridVar::S,
            VarArg::D => GridVar::D,
        },
        min: c.grid_min,
        max: c.grid_max,
        count: c.grid_count,
        scale: match c.grid_scale {
            ScaleArg::Log => GridScale::Log,
            ScaleArg::Linear => GridScale::Linear,
        },
    }
}

fn ba_settings(c: &Common, default_cap: usize) -> Result<BaSettings, CliError> {
    if c.ba_tol.is_nan() || c.ba_tol <= 0.0 {
        return Err(CliError::Config("--ba-tol must be positive".into()));
    }
    if c.ba_n < 3 || c.ba_n.is_multiple_of(2) {
        return Err(CliError::Config("--ba-n must be odd and at least 3".into()));
    }
    Ok(BaSettings {
        tol: c.ba_tol,
        max_iter: c.ba_max_iter.unwrap_or(default_cap),
    })
}

/// Runs a parsed command and returns the text to write.
pub fn run(cmd: &Command) -> Result<(), CliError> {
    let c = cmd.common();
    let source = parse_source(c)?;
    let loss = EpsilonLoss::new(c.epsilon).map_err(config)?;
    if c.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let (text, outcome) = with_threads(c.threads, || match cmd {
        Command::Bounds(_) => bounds(c, source, loss).map(|t| (t, Ok(()))),
        Command::Dmax(_) => dmax(c, &source, &loss),
        Command::Ba(_) => ba(c, &source, &loss).map(|t| (t, Ok(()))),
        Command::Verify(_) => verify(c, source, loss),
    })?;
    match &c.output {
        Some(path) => File::create(path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(io_err)?,
        None => io::stdout().lock().write_all(text.as_bytes()).map_err(io_err)?,
    }
    outcome
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct TableJson<'a> {
    source: &'a str,
    epsilon: f64,
    units: Units,
    rows: Vec<epsrd::sweep::TableRecord>,
}

fn bounds(c: &Common, source: Source, loss: EpsilonLoss) -> Result<String, CliError> {
    let cfg = SweepConfig {
        bounds: BoundKind::parse_list(&c.bounds).map_err(config)?,
        grid: grid(c),
        ba_n: c.ba_n,
        ba: ba_settings(c, DEFAULT_MAX_ITER)?,
        source,
        loss,
    };
    let table = run_sweep(&cfg).map_err(config)?;
    let records = table.records(units(c));
    Ok(match c.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(&records, &mut buf).map_err(config)?;
            String::from_utf8(buf).expect("csv output is utf-8")
        }
        Format::Json => to_json(&TableJson {
            source: cfg.source.name(),
            epsilon: loss.epsilon(),
            units: units(c),
            rows: records,
        }),
    })
}

fn dmax(c: &Common, source: &Source, loss: &EpsilonLoss) -> Result<(String, Result<(), CliError>), CliError> {
    let rep = dmax_report(source, loss);
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.11e}")).unwrap_or_default();
    let text = match c.format {
        Format::Json => to_json(&rep),
        Format::Csv => format!(
            "source,epsilon,slb_zero,d_max_eps,d_max_zero,ordered\n{},{},{},{},{},{}\n",
            rep.source,
            fmt(Some(rep.epsilon)),
            fmt(rep.slb_zero),
            fmt(Some(rep.d_max_eps)),
            fmt(Some(rep.d_max_zero)),
            rep.ordered
        ),
    };
    let chain = match rep.slb_zero {
        Some(z) => format!("{z:.4} <= {:.4} <= {:.4}", rep.d_max_eps, rep.d_max_zero),
        None => format!(
            "SLB vacuous; D_max(eps) = {:.4}, D_max(0) = {:.4}",
            rep.d_max_eps, rep.d_max_zero
        ),
    };
    eprintln!("{chain}");
    let outcome = match (&rep.error, rep.ordered) {
        (Some(e), _) => Err(CliError::Failed(e.clone())),
        (None, false) => Err(CliError::Failed(format!("ordering violated: {chain}"))),
        (None, true) => Ok(()),
    };
    Ok((text, outcome))
}

#[derive(Serialize)]
struct BaRow {
    s: f64,
    #[serde(rename = "D")]
    d: Option<f64>,
    #[serde(rename = "R")]
    r: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    objective_gap: Option<f64>,
    flags: String,
}

fn ba(c: &Common, source: &Source, loss: &EpsilonLoss) -> Result<String, CliError> {
    let settings = ba_settings(c, DEFAULT_MAX_ITER)?;
    let values = grid(c).values().map_err(config)?;
    let slopes: Vec<f64> = match c.grid_var {
        VarArg::S => values,
        VarArg::D => values
            .iter()
            .map(|&d| slope_of_distortion(d, loss))
            .collect::<Result<_, _>>()
            .map_err(config)?,
    };
    let spec = GridSpec::auto(source, c.ba_n);
    let u = units(c);
    let mut rows = map_ordered(&slopes, |&s| {
        match build_problem_with(source, loss, s, spec).and_then(|p| ba_iterate(&p, settings.tol, settings.max_iter)) {
            Ok(r) => {
                let p = r.point();
                let mut flags = Vec::new();
                if p.flags.clamped {
                    flags.push(format!("clamped(raw={:.6e})", p.raw));
                }
                if !r.converged {
                    flags.push("not_converged".to_string());
                }
                BaRow {
                    s: round12(s),
                    d: Some(round12(r.d_s)),
                    r: Some(round12(u.convert(p.r))),
                    iterations: Some(r.iterations),
                    converged: Some(r.converged),
                    objective_gap: Some(round12(u.convert(r.objective_gap))),
                    flags: flags.join(";"),
                }
            }
            Err(e) => BaRow {
                s: round12(s),
                d: None,
                r: None,
                iterations: None,
                converged: None,
                objective_gap: None,
                flags: format!("error({})", e.to_string().replace(',', ";")),
            },
        }
    });
    rows.sort_by(|a, b| a.d.unwrap_or(f64::INFINITY).total_cmp(&b.d.unwrap_or(f64::INFINITY)));
    Ok(match c.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let num = |v: Option<f64>| v.map(|x| format!("{x:.11e}")).unwrap_or_default();
            let mut out = String::from("s,D,R,iterations,converged,objective_gap,flags\n");
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    num(Some(r.s)),
                    num(r.d),
                    num(r.r),
                    r.iterations.map(|i| i.to_string()).unwrap_or_default(),
                    r.converged.map(|b| b.to_string()).unwrap_or_default(),
                    num(r.objective_gap),
                    r.flags
                );
            }
            out
        }
    })
}

fn verify(c: &Common, source: Source, loss: EpsilonLoss) -> Result<(String, Result<(), CliError>), CliError> {
    let cfg = VerifyConfig::new(source, loss, c.ba_n, ba_settings(c, VERIFY_MAX_ITER)?);
    let rep = run_verify(&cfg);
    for check in &rep.checks {
        eprintln!(
            "{} {:<22} {:.3e} (tol {:.0e})  {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.measured,
            check.tolerance,
            check.detail
        );
    }
    let outcome = if rep.passed {
        Ok(())
    } else {
        let failed: Vec<_> = rep
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Failed(format!("failed checks: {}", failed.join(", "))))
    };
    Ok((to_json(&rep), outcome))
}
