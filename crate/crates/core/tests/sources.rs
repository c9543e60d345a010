#![allow(clippy::excessive_precision)]

use std::f64::consts::{PI, SQRT_2};

use approx::assert_relative_eq;
use epsrd::kernel::EpsilonLoss;
use epsrd::quad::integrate_breaks;
use epsrd::sources::{erfc_tail, Source, TabulatedSource};
use proptest::prelude::*;

// (ε, D_max Laplacian(√2), D_max Gaussian(1)) from an independent 30-digit quadrature
const D_MAX_REFERENCE: [(f64, f64, f64); 3] = [
    (0.05, 0.65883360774727668, 0.74888170877336524),
    (0.1, 0.61385597514554046, 0.70187066240942932),
    (0.5, 0.34865221527635115, 0.39559311480261206),
];

fn loss(e: f64) -> EpsilonLoss {
    EpsilonLoss::new(e).unwrap()
}

fn named() -> [Source; 2] {
    [Source::laplacian(SQRT_2).unwrap(), Source::gaussian(1.0).unwrap()]
}

/// Upper tail of the standard normal from its continued fraction (large x)
/// or the Taylor series of erf (small x).
fn normal_tail_oracle(x: f64) -> f64 {
    if x < 3.0 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / 2.0 / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        0.5 - sum / (2.0 * PI).sqrt()
    } else {
        let mut f = x;
        for k in (1..200).rev() {
            f = x + k as f64 / f;
        }
        (-x * x / 2.0).exp() / (2.0 * PI).sqrt() / f
    }
}

#[test]
fn normal_tail_matches_series() {
    for k in 0..=80 {
        let x = k as f64 * 0.1;
        let (a, b) = (erfc_tail(x), normal_tail_oracle(x));
        assert!(
            (a - b).abs() <= 1e-12_f64.max(1e-12 * b) || ((a - b) / b).abs() < 1e-12,
            "x={x}: {a} vs {b}"
        );
    }
}

#[test]
fn d_max_matches_reference() {
    for (e, lap, gau) in D_MAX_REFERENCE {
        let [l, g] = named();
        assert_relative_eq!(l.d_max(&loss(e)), lap, max_relative = 1e-13);
        assert_relative_eq!(g.d_max(&loss(e)), gau, max_relative = 1e-12);
    }
}

#[test]
fn d_max_matches_quadrature() {
    for src in named() {
        for e in [0.0, 0.05, 0.1, 0.5, 2.0] {
            let l = loss(e);
            let reach = src.half_width(1e-18);
            let q = integrate_breaks(|x| l.rho(x) * src.pdf(x), &[-reach, -e, 0.0, e, reach], 0.05);
            assert!((q - src.d_max(&l)).abs() < 1e-8, "{} e={e}", src.name());
        }
    }
}

#[test]
fn loss_dominance_of_d_max() {
    let grid = [0.0, 0.05, 0.1, 0.5];
    for src in named() {
        let d: Vec<f64> = grid.iter().map(|&e| src.d_max(&loss(e))).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{}: {d:?}", src.name());
    }
}

#[test]
fn symmetric_sources_minimize_at_zero() {
    for src in named() {
        for e in [0.0, 0.1, 0.5] {
            let (y, v) = src.minimize_expected_loss(&loss(e));
            assert!(y.abs() < 1e-6, "{} e={e}: y*={y}", src.name());
            assert!((v - src.d_max(&loss(e))).abs() < 1e-12);
        }
    }
}

#[test]
fn entropy_and_variance_by_quadrature() {
    for src in named() {
        let reach = src.half_width(1e-18);
        let b = [-reach, 0.0, reach];
        let h = integrate_breaks(
            |x| {
                let p = src.pdf(x);
                if p > 0.0 {
                    -p * p.ln()
                } else {
                    0.0
                }
            },
            &b,
            0.05,
        );
        let v = integrate_breaks(|x| x * x * src.pdf(x), &b, 0.05);
        assert!((h - src.differential_entropy()).abs() < 1e-10);
        assert!((v - src.variance()).abs() < 1e-10);
    }
}

fn tabulated_laplacian(n: usize) -> Source {
    let alpha = SQRT_2;
    Source::Tabulated(TabulatedSource::discretize(|x| 0.5 * alpha * (-alpha * x.abs()).exp(), -20.0, 20.0, n).unwrap())
}

#[test]
fn tabulated_laplacian_converges() {
    let exact = Source::laplacian(SQRT_2).unwrap();
    let l = loss(0.1);
    let mut prev: Option<(f64, f64)> = None;
    for n in [401, 801, 1601, 3201] {
        let t = tabulated_laplacian(n);
        let errs = (
            (t.differential_entropy() - exact.differential_entropy()).abs(),
            (t.d_max(&l) - exact.d_max(&l)).abs(),
        );
        if let Some((h, d)) = prev {
            assert!(errs.0 <= 0.5 * h, "entropy error {} after {}", errs.0, h);
            assert!(errs.1 <= 0.5 * d, "d_max error {} after {}", errs.1, d);
        }
        prev = Some(errs);
    }
}

#[test]
fn tabulated_csv_roundtrip_and_validation() {
    let text = "x,mass\n# comment\n-1,0.25\n0,0.5\n1,0.25\n";
    let t = TabulatedSource::from_csv_reader(text.as_bytes()).unwrap();
    assert_eq!(t.grid(), &[-1.0, 0.0, 1.0]);
    assert_eq!(t.masses(), &[0.25, 0.5, 0.25]);
    assert!(TabulatedSource::from_csv_reader("0,0.5\n2,0.5\n3,0.0\n".as_bytes()).is_err());
    assert!(TabulatedSource::from_csv_reader("0,0.5\n1,0.6\n".as_bytes()).is_err());
    assert!(TabulatedSource::from_csv_reader("0,-0.5\n1,1.5\n".as_bytes()).is_err());
    assert!(TabulatedSource::from_csv_reader("0,1\n".as_bytes()).is_err());
    assert!(TabulatedSource::from_csv_reader("a,b\nc,d\n".as_bytes()).is_err());
}

#[test]
fn asymmetric_tabulated_minimizer_is_found() {
    let t = Source::tabulated(vec![0.0, 1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let (y, v) = t.minimize_expected_loss(&EpsilonLoss::absolute());
    assert!((y - 2.0).abs() < 1e-6, "median minimizer, got {y}");
    assert!((v - 0.8).abs() < 1e-9);
}

#[test]
fn invalid_parameters() {
    assert!(Source::laplacian(0.0).is_err());
    assert!(Source::laplacian(f64::NAN).is_err());
    assert!(Source::gaussian(-1.0).is_err());
}

proptest! {
    #[test]
    fn laplacian_d_max_closed_form(alpha in 0.1f64..10.0, e in 0.0f64..3.0) {
        let src = Source::laplacian(alpha).unwrap();
        let l = EpsilonLoss::new(e).unwrap();
        let (_, v) = src.minimize_expected_loss(&l);
        prop_assert!((v - src.d_max(&l)).abs() < 1e-9 / alpha);
    }

    #[test]
    fn gaussian_tail_mass_consistent(sigma2 in 0.01f64..100.0, tail in 1e-14f64..1e-2) {
        let src = Source::gaussian(sigma2).unwrap();
        let w = src.half_width(tail);
        prop_assert!(src.tail_mass(w) <= tail * (1.0 + 1e-9));
    }
}
