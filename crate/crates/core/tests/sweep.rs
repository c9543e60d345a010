use std::f64::consts::{LN_2, SQRT_2};

use epsrd::ba::BaSettings;
use epsrd::kernel::EpsilonLoss;
use epsrd::parallel::with_threads;
use epsrd::sweep::{
    dmax_report, read_csv, round12, run_sweep, to_csv_string, BoundKind, CurveTable, GridScale, GridVar, SweepConfig,
    SweepGrid, TableRecord, Units, CSV_HEADER,
};
use epsrd::Source;
use proptest::prelude::*;

fn config(source: Source, bounds: &str, count: usize) -> SweepConfig {
    SweepConfig {
        source,
        loss: EpsilonLoss::new(0.1).unwrap(),
        grid: SweepGrid {
            var: GridVar::S,
            min: -0.5,
            max: -50.0,
            count,
            scale: GridScale::Log,
        },
        bounds: BoundKind::parse_list(bounds).unwrap(),
        ba_n: 201,
        ba: BaSettings {
            tol: 1e-10,
            max_iter: 200,
        },
    }
}

fn laplacian_table() -> CurveTable {
    run_sweep(&config(
        Source::laplacian(SQRT_2).unwrap(),
        "slb,ru,rau,rge,trivial",
        12,
    ))
    .unwrap()
}

#[test]
fn header_and_ordering() {
    let table = laplacian_table();
    let text = to_csv_string(&table.records(Units::Nats)).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 13);
    assert!(table.rows.windows(2).all(|w| w[0].d <= w[1].d));
    for row in &table.rows {
        let slb = row.get(BoundKind::Slb).unwrap();
        let ru = row.get(BoundKind::Ru).unwrap();
        let rge = row.get(BoundKind::Rge).unwrap();
        assert!(slb <= ru + 1e-9 && ru <= rge + 1e-9, "{row:?}");
        assert!(row.get(BoundKind::Ba).is_none());
    }
}

#[test]
fn bits_are_nats_over_ln2() {
    let table = laplacian_table();
    let nats = table.records(Units::Nats);
    let bits = table.records(Units::Bits);
    for (n, b) in nats.iter().zip(&bits) {
        assert_eq!(n.d, b.d);
        for (vn, vb) in n.rates().iter().zip(b.rates()) {
            if let (Some(vn), Some(vb)) = (vn, vb) {
                assert!((vb * LN_2 - vn).abs() <= 1e-10 * vn.abs().max(1e-12));
            }
        }
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let cfg = config(Source::gaussian(1.0).unwrap(), "slb,ru,rge,ba", 5);
    let one = with_threads(Some(1), || run_sweep(&cfg).unwrap());
    let three = with_threads(Some(3), || run_sweep(&cfg).unwrap());
    assert_eq!(
        to_csv_string(&one.records(Units::Nats)).unwrap(),
        to_csv_string(&three.records(Units::Nats)).unwrap()
    );
    assert!(one.rows.iter().all(|r| r.get(BoundKind::Ba).is_some()));
}

#[test]
fn au_on_gaussian_is_flagged() {
    let table = run_sweep(&config(Source::gaussian(1.0).unwrap(), "slb,rau", 3)).unwrap();
    for row in &table.rows {
        assert!(row.get(BoundKind::Rau).is_none());
        assert!(row.flags.iter().any(|f| f == "R_au:not_applicable"));
    }
}

#[test]
fn distortion_grid() {
    let mut cfg = config(Source::laplacian(SQRT_2).unwrap(), "slb,ru", 4);
    cfg.grid = SweepGrid {
        var: GridVar::D,
        min: 0.05,
        max: 0.5,
        count: 4,
        scale: GridScale::Linear,
    };
    let table = run_sweep(&cfg).unwrap();
    assert_eq!(table.rows.len(), 4);
    for (row, d) in table.rows.iter().zip([0.05, 0.2, 0.35, 0.5]) {
        assert!((row.d - d).abs() < 1e-9, "{} vs {d}", row.d);
        assert!(row.s < 0.0);
    }
}

#[test]
fn dmax_chain() {
    let loss = EpsilonLoss::new(0.1).unwrap();
    for src in [Source::laplacian(SQRT_2).unwrap(), Source::gaussian(1.0).unwrap()] {
        let rep = dmax_report(&src, &loss);
        assert!(rep.ordered && rep.error.is_none());
        let slb = rep.slb_zero.unwrap();
        assert!(slb <= rep.d_max_eps && rep.d_max_eps <= rep.d_max_zero);
    }
}

fn opt_rate() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![Just(None), (0.0..50.0f64).prop_map(Some)]
}

prop_compose! {
    fn record()(s in -1e3..-1e-3f64, d in 1e-6..10.0f64,
                r in proptest::collection::vec(opt_rate(), 6),
                flags in "[a-zA-Z_:;()=.0-9 -]{0,30}") -> TableRecord {
        let r: Vec<Option<f64>> = r.into_iter().map(|v| v.map(round12)).collect();
        TableRecord {
            s: round12(s), d: round12(d),
            r_slb: r[0], r_u: r[1], r_au: r[2], r_ge: r[3], r_trivial: r[4], r_ba: r[5],
            flags,
        }
    }
}

proptest! {
    #[test]
    fn csv_round_trip(records in proptest::collection::vec(record(), 0..8)) {
        let text = to_csv_string(&records).unwrap();
        let back = read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(back, records);
    }
}
