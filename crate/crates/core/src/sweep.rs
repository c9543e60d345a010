//! Curve tables: every selected bound evaluated on a slope or distortion grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ba::{ba_curve, BaCurve, BaSettings, GridSpec};
use crate::bounds::{
    analytic_upper_laplacian, gaussian_entropy_bound, r_u, slb, slb_zero, trivial_bound_laplacian, PointFlags, RDPoint,
};
use crate::error::{Error, Result};
use crate::kernel::{distortion_of_slope, slope_of_distortion, EpsilonLoss};
use crate::parallel::map_ordered;
use crate::sources::Source;

/// A bound (or reference curve) that can be tabulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Slb,
    Ru,
    Rau,
    Rge,
    Trivial,
    Ba,
}

impl BoundKind {
    pub const ALL: [BoundKind; 6] = [
        BoundKind::Slb,
        BoundKind::Ru,
        BoundKind::Rau,
        BoundKind::Rge,
        BoundKind::Trivial,
        BoundKind::Ba,
    ];

    /// CSV column name.
    pub fn column(&self) -> &'static str {
        match self {
            BoundKind::Slb => "R_slb",
            BoundKind::Ru => "R_u",
            BoundKind::Rau => "R_au",
            BoundKind::Rge => "R_ge",
            BoundKind::Trivial => "R_trivial",
            BoundKind::Ba => "R_ba",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }

    /// Parses a comma-separated list; `all` selects every bound.
    pub fn parse_list(list: &str) -> Result<Vec<BoundKind>> {
        let mut out = Vec::new();
        for item in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if item.eq_ignore_ascii_case("all") {
                out.extend(BoundKind::ALL);
            } else {
                out.push(item.parse()?);
            }
        }
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::Domain("at least one bound must be selected".into()));
        }
        Ok(out)
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slb" => Ok(BoundKind::Slb),
            "ru" => Ok(BoundKind::Ru),
            "rau" => Ok(BoundKind::Rau),
            "rge" => Ok(BoundKind::Rge),
            "trivial" => Ok(BoundKind::Trivial),
            "ba" => Ok(BoundKind::Ba),
            other => Err(Error::Domain(format!("unknown bound '{other}'"))),
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BoundKind::Slb => "slb",
            BoundKind::Ru => "ru",
            BoundKind::Rau => "rau",
            BoundKind::Rge => "rge",
            BoundKind::Trivial => "trivial",
            BoundKind::Ba => "ba",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridVar {
    S,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Log,
    Linear,
}

/// The abscissae of a sweep. For slope grids `min`/`max` may be given with
/// either sign; the magnitudes are used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub var: GridVar,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub scale: GridScale,
}

impl SweepGrid {
    /// Grid values: negative slopes or positive distortions.
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::Domain("grid count must be at least 1".into()));
        }
        let (mut lo, mut hi) = match self.var {
            GridVar::S => (self.min.abs(), self.max.abs()),
            GridVar::D => (self.min, self.max),
        };
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::Domain(format!(
                "grid bounds must be nonzero and finite, got [{}, {}]",
                self.min, self.max
            )));
        }
        let pts = linspace_or_logspace(lo, hi, self.count, self.scale);
        Ok(match self.var {
            GridVar::S => pts.into_iter().map(|v| -v).collect(),
            GridVar::D => pts,
        })
    }
}

/// `count` points from `lo` to `hi`, evenly spaced in value or in log.
pub fn linspace_or_logspace(lo: f64, hi: f64, count: usize, scale: GridScale) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let last = (count - 1) as f64;
    (0..count)
        .map(|k| {
            let t = k as f64 / last;
            match scale {
                GridScale::Linear => lo + t * (hi - lo),
                GridScale::Log => (lo.ln() + t * (hi.ln() - lo.ln())).exp(),
            }
        })
        .collect()
}

/// Everything needed to tabulate bound curves for one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub source: Source,
    pub loss: EpsilonLoss,
    pub grid: SweepGrid,
    pub bounds: Vec<BoundKind>,
    pub ba_n: usize,
    pub ba: BaSettings,
}

/// One value cell of a table row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    pub raw: f64,
    pub flags: PointFlags,
}

/// One grid point with a cell per bound (`None` when not selected or unavailable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub s: f64,
    pub d: f64,
    pub cells: [Option<Cell>; 6],
    pub flags: Vec<String>,
}

impl CurveRow {
    pub fn get(&self, kind: BoundKind) -> Option<f64> {
        self.cells[kind.index()].map(|c| c.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub bounds: Vec<BoundKind>,
    pub rows: Vec<CurveRow>,
}

fn point_cell(kind: BoundKind, p: RDPoint, flags: &mut Vec<String>) -> Cell {
    let col = kind.column();
    if p.flags.clamped {
        flags.push(format!("{col}:clamped(raw={:.6e})", p.raw));
    }
    if p.flags.numeric_fallback {
        flags.push(format!("{col}:numeric"));
    }
    if p.flags.not_converged {
        flags.push(format!("{col}:not_converged"));
    }
    if p.flags.extrapolated {
        flags.push(format!("{col}:extrapolated"));
    }
    Cell {
        value: p.r,
        raw: p.raw,
        flags: p.flags,
    }
}

fn unavailable(kind: BoundKind, why: &str, flags: &mut Vec<String>) -> Option<Cell> {
    flags.push(format!("{}:{why}", kind.column()));
    None
}

fn interpolated_cell(kind: BoundKind, curve: &BaCurve, d: f64, s: f64, flags: &mut Vec<String>) -> Option<Cell> {
    match curve.rate_at(d) {
        Some((r, pf)) => {
            let mut p = RDPoint::rate(d, r, Some(s));
            p.flags.merge(pf);
            Some(point_cell(kind, p, flags))
        }
        None => unavailable(kind, "ba_failed", flags),
    }
}

/// Evaluates every selected bound on the grid. Rows come back sorted by `D`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<CurveTable> {
    let grid = cfg.grid.values()?;
    if cfg.bounds.is_empty() {
        return Err(Error::Domain("at least one bound must be selected".into()));
    }
    let loss = &cfg.loss;
    let src = &cfg.source;
    let slopes: Vec<(f64, f64)> = grid
        .iter()
        .map(|&v| match cfg.grid.var {
            GridVar::S => Ok((v, distortion_of_slope(v, loss)?)),
            GridVar::D => Ok((slope_of_distortion(v, loss)?, v)),
        })
        .collect::<Result<_>>()?;
    let wants = |k: BoundKind| cfg.bounds.contains(&k);
    let ba_spec = GridSpec::auto(src, cfg.ba_n);

    let ba = wants(BoundKind::Ba).then(|| {
        let s_list: Vec<f64> = slopes.iter().map(|p| p.0).collect();
        ba_curve(src, loss, &s_list, ba_spec, cfg.ba)
    });
    // R^(0) reference for sources without a closed form
    let zero_loss = EpsilonLoss::absolute();
    let trivial_ba = (wants(BoundKind::Trivial) && !matches!(src, Source::Laplacian { .. })).then(|| {
        let s_list: Vec<f64> = slopes.iter().map(|p| -1.0 / p.1).collect();
        ba_curve(src, &zero_loss, &s_list, ba_spec, cfg.ba)
    });

    let h_p = src.differential_entropy();
    let mut rows = map_ordered(&slopes, |&(s, d)| {
        let mut flags = Vec::new();
        let mut cells: [Option<Cell>; 6] = [None; 6];
        for &kind in &cfg.bounds {
            let cell = match kind {
                BoundKind::Slb => match slb(d, h_p, loss) {
                    Ok(v) => Some(point_cell(kind, RDPoint::rate(d, v, Some(s)), &mut flags)),
                    Err(e) => unavailable(kind, &error_tag(&e), &mut flags),
                },
                BoundKind::Ru => match r_u(src, s, loss) {
                    Ok(p) => Some(point_cell(kind, p, &mut flags)),
                    Err(e) => unavailable(kind, &error_tag(&e), &mut flags),
                },
                BoundKind::Rge => match gaussian_entropy_bound(src, s, loss) {
                    Ok(p) => Some(point_cell(kind, p, &mut flags)),
                    Err(e) => unavailable(kind, &error_tag(&e), &mut flags),
                },
                BoundKind::Rau => match src {
                    Source::Laplacian { alpha } => match analytic_upper_laplacian(s, *alpha, loss) {
                        Ok(p) => Some(point_cell(kind, p, &mut flags)),
                        Err(e) => unavailable(kind, &error_tag(&e), &mut flags),
                    },
                    _ => unavailable(kind, "not_applicable", &mut flags),
                },
                BoundKind::Trivial => match src {
                    Source::Laplacian { alpha } => match trivial_bound_laplacian(d, *alpha) {
                        Ok(v) => Some(point_cell(kind, RDPoint::rate(d, v, Some(s)), &mut flags)),
                        Err(e) => unavailable(kind, &error_tag(&e), &mut flags),
                    },
                    _ => {
                        flags.push(format!("{}:ba_eps0", kind.column()));
                        let curve = trivial_ba.as_ref().expect("trivial reference curve");
                        interpolated_cell(kind, curve, d, -1.0 / d, &mut flags)
                    }
                },
                BoundKind::Ba => {
                    let curve = ba.as_ref().expect("BA curve");
                    interpolated_cell(kind, curve, d, s, &mut flags)
                }
            };
            cells[kind.index()] = cell;
        }
        CurveRow { s, d, cells, flags }
    });
    rows.sort_by(|a, b| a.d.total_cmp(&b.d));
    Ok(CurveTable {
        bounds: cfg.bounds.clone(),
        rows,
    })
}

fn error_tag(e: &Error) -> String {
    match e {
        Error::SlopeSingularity { .. } => "singular".into(),
        Error::NotApplicable(_) => "not_applicable".into(),
        _ => "error".into(),
    }
}

/// The zero-rate distortions of a source and the SLB crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmaxReport {
    pub source: String,
    pub epsilon: f64,
    /// SLB zero crossing; `None` when the SLB is vacuous.
    pub slb_zero: Option<f64>,
    pub d_max_eps: f64,
    pub d_max_zero: f64,
    /// `slb_zero ≤ d_max_eps ≤ d_max_zero`.
    pub ordered: bool,
    pub error: Option<String>,
}

pub fn dmax_report(src: &Source, loss: &EpsilonLoss) -> DmaxReport {
    let summary = src.summary(loss);
    let zero = slb_zero(src, loss);
    let (slb_zero, error) = match zero {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let ordered = slb_zero
        .map(|z| z <= summary.d_max_eps && summary.d_max_eps <= summary.d_max_zero)
        .unwrap_or(false);
    DmaxReport {
        source: src.name().to_string(),
        epsilon: loss.epsilon(),
        slb_zero,
        d_max_eps: summary.d_max_eps,
        d_max_zero: summary.d_max_zero,
        ordered,
        error,
    }
}

/// Output units for rate columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Nats,
    Bits,
}

impl Units {
    pub fn convert(&self, nats: f64) -> f64 {
        match self {
            Units::Nats => nats,
            Units::Bits => nats / std::f64::consts::LN_2,
        }
    }
}

/// Column order of the CSV output.
pub const CSV_HEADER: [&str; 9] = ["s", "D", "R_slb", "R_u", "R_au", "R_ge", "R_trivial", "R_ba", "flags"];

/// A printable row: every number already rounded to 12 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub s: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub r_slb: Option<f64>,
    pub r_u: Option<f64>,
    pub r_au: Option<f64>,
    pub r_ge: Option<f64>,
    pub r_trivial: Option<f64>,
    pub r_ba: Option<f64>,
    pub flags: String,
}

impl TableRecord {
    pub fn rates(&self) -> [Option<f64>; 6] {
        [self.r_slb, self.r_u, self.r_au, self.r_ge, self.r_trivial, self.r_ba]
    }
}

fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Rounds to the precision used in printed output.
pub fn round12(v: f64) -> f64 {
    fmt12(v).parse().expect("formatted float parses")
}

impl CurveTable {
    /// Rows converted to `units` and rounded for printing.
    pub fn records(&self, units: Units) -> Vec<TableRecord> {
        self.rows
            .iter()
            .map(|row| {
                let r = |k: BoundKind| row.get(k).map(|v| round12(units.convert(v)));
                TableRecord {
                    s: round12(row.s),
                    d: round12(row.d),
                    r_slb: r(BoundKind::Slb),
                    r_u: r(BoundKind::Ru),
                    r_au: r(BoundKind::Rau),
                    r_ge: r(BoundKind::Rge),
                    r_trivial: r(BoundKind::Trivial),
                    r_ba: r(BoundKind::Ba),
                    flags: row.flags.join(";"),
                }
            })
            .collect()
    }
}

/// Writes records as CSV with the fixed header.
pub fn write_csv<W: std::io::Write>(records: &[TableRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for rec in records {
        let mut fields = vec![fmt12(rec.s), fmt12(rec.d)];
        fields.extend(rec.rates().iter().map(|v| v.map(fmt12).unwrap_or_default()));
        fields.push(rec.flags.clone());
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn to_csv_string(records: &[TableRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Csv(e.to_string()))
}

/// Reads CSV produced by [`write_csv`].
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<TableRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?;
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Csv(format!("unexpected header {headers:?}")));
    }
    let num = |f: &str| -> Result<f64> { f.parse().map_err(|_| Error::Csv(format!("bad number '{f}'"))) };
    let opt = |f: &str| -> Result<Option<f64>> {
        if f.is_empty() {
            Ok(None)
        } else {
            num(f).map(Some)
        }
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Csv(format!(
                "expected {} fields, got {}",
                CSV_HEADER.len(),
                rec.len()
            )));
        }
        out.push(TableRecord {
            s: num(&rec[0])?,
            d: num(&rec[1])?,
            r_slb: opt(&rec[2])?,
            r_u: opt(&rec[3])?,
            r_au: opt(&rec[4])?,
            r_ge: opt(&rec[5])?,
            r_trivial: opt(&rec[6])?,
            r_ba: opt(&rec[7])?,
            flags: rec[8].to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_bound_lists() {
        assert_eq!(BoundKind::parse_list("all").unwrap().len(), 6);
        assert_eq!(
            BoundKind::parse_list("rge, slb,slb").unwrap(),
            vec![BoundKind::Slb, BoundKind::Rge]
        );
        assert!(BoundKind::parse_list("").is_err());
        assert!(BoundKind::parse_list("slb,bogus").is_err());
        for k in BoundKind::ALL {
            assert_eq!(k.to_string().parse::<BoundKind>().unwrap(), k);
        }
    }

    #[test]
    fn grid_values() {
        let g = SweepGrid {
            var: GridVar::S,
            min: -200.0,
            max: -0.5,
            count: 3,
            scale: GridScale::Log,
        };
        let v = g.values().unwrap();
        assert!((v[0] + 0.5).abs() < 1e-12 && (v[2] + 200.0).abs() < 1e-9);
        assert!((v[1] + 10.0).abs() < 1e-9);
        let one = SweepGrid { count: 1, ..g };
        assert_eq!(one.values().unwrap().len(), 1);
        assert!(SweepGrid { count: 0, ..g }.values().is_err());
        let lin = SweepGrid {
            var: GridVar::D,
            min: 0.1,
            max: 0.3,
            count: 3,
            scale: GridScale::Linear,
        };
        assert_eq!(lin.values().unwrap()[1], 0.2);
        assert!(SweepGrid { min: 0.0, ..lin }.values().is_err());
    }

    #[test]
    fn single_point_sweep_without_ba() {
        let cfg = SweepConfig {
            source: Source::gaussian(1.0).unwrap(),
            loss: EpsilonLoss::new(0.1).unwrap(),
            grid: SweepGrid {
                var: GridVar::D,
                min: 0.1,
                max: 0.1,
                count: 1,
                scale: GridScale::Log,
            },
            bounds: vec![BoundKind::Slb, BoundKind::Rau, BoundKind::Rge],
            ba_n: 101,
            ba: BaSettings::default(),
        };
        let t = run_sweep(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        let row = &t.rows[0];
        assert!(row.get(BoundKind::Rau).is_none());
        assert!(row.flags.iter().any(|f| f == "R_au:not_applicable"));
        assert!(row.get(BoundKind::Slb).unwrap() <= row.get(BoundKind::Rge).unwrap());

        let recs = t.records(Units::Nats);
        let text = to_csv_string(&recs).unwrap();
        assert!(text.starts_with("s,D,R_slb,R_u,R_au,R_ge,R_trivial,R_ba,flags\n"));
        assert_eq!(read_csv(text.as_bytes()).unwrap(), recs);
        let bits = t.records(Units::Bits);
        let ratio = recs[0].r_ge.unwrap() / bits[0].r_ge.unwrap();
        assert!((ratio - std::f64::consts::LN_2).abs() < 1e-11);
    }

    #[test]
    fn dmax_report_orders_values() {
        let l = EpsilonLoss::new(0.1).unwrap();
        let r = dmax_report(&Source::laplacian(2f64.sqrt()).unwrap(), &l);
        assert!(r.ordered);
        assert!(r.error.is_none());
        let vac = dmax_report(&Source::gaussian(1.0).unwrap(), &EpsilonLoss::new(10.0).unwrap());
        assert!(!vac.ordered && vac.slb_zero.is_none() && vac.error.is_some());
    }
}
