use std::path::Path;
use std::process::{Command, Output};

fn epsrd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epsrd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(field: &str) -> Option<f64> {
    (!field.is_empty()).then(|| field.parse().unwrap())
}

#[test]
fn dmax_laplacian_chain() {
    let o = epsrd(&[
        "dmax",
        "--source",
        "laplacian",
        "--alpha",
        "1.4142135623730951",
        "--epsilon",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let row = &csv_rows(&stdout(&o))[0];
    let vals: Vec<f64> = row[2..5].iter().map(|f| f.parse().unwrap()).collect();
    for (v, want) in vals.iter().zip([0.6136, 0.6139, std::f64::consts::FRAC_1_SQRT_2]) {
        assert!((v - want).abs() < 5e-4, "{v} vs {want}");
    }
    assert_eq!(row[5], "true");
    assert!(String::from_utf8_lossy(&o.stderr).contains("0.6136 <= 0.6139 <= 0.7071"));
}

#[test]
fn dmax_gaussian_json() {
    let o = epsrd(&["dmax", "--source", "gaussian", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["slb_zero"].as_f64().unwrap() - 0.6662).abs() < 5e-4);
    assert!((v["d_max_eps"].as_f64().unwrap() - 0.7019).abs() < 5e-4);
    assert!((v["d_max_zero"].as_f64().unwrap() - 0.7979).abs() < 5e-4);
}

#[test]
fn dmax_zero_band_coincides() {
    let o = epsrd(&["dmax", "--epsilon", "0", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let inv_alpha = 1.0 / 2f64.sqrt();
    assert!((v["slb_zero"].as_f64().unwrap() - inv_alpha).abs() < 1e-8);
    assert!((v["d_max_eps"].as_f64().unwrap() - inv_alpha).abs() < 1e-12);
}

#[test]
fn dmax_vacuous_slb_exits_nonzero() {
    let o = epsrd(&["dmax", "--source", "gaussian", "--epsilon", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("vacuous"));
}

#[test]
fn configuration_errors_exit_2() {
    for args in [
        vec!["bounds", "--source", "uniform"],
        vec!["bounds", "--epsilon", "-1"],
        vec!["bounds", "--bounds", "slb,xyz"],
        vec!["bounds", "--grid-count", "0"],
        vec!["bounds", "--source", "csv:/nonexistent/file.csv"],
        vec!["ba", "--ba-n", "100"],
        vec!["bounds", "--format", "xml"],
    ] {
        let o = epsrd(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bounds_table_shape() {
    let o = epsrd(&[
        "bounds",
        "--grid-var",
        "d",
        "--grid-min",
        "0.005",
        "--grid-max",
        "0.6",
        "--grid-count",
        "25",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(
        text.lines().next().unwrap(),
        "s,D,R_slb,R_u,R_au,R_ge,R_trivial,R_ba,flags"
    );
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 25);
    let ds: Vec<f64> = rows.iter().map(|r| num(&r[1]).unwrap()).collect();
    assert!(ds.windows(2).all(|w| w[0] < w[1]));
    let mut prev_gap = 0.0;
    for r in &rows {
        let d = num(&r[1]).unwrap();
        let (slb, ru, rau, rge) = (
            num(&r[2]).unwrap(),
            num(&r[3]).unwrap(),
            num(&r[4]).unwrap(),
            num(&r[5]).unwrap(),
        );
        assert!(slb <= ru && ru <= rge && ru <= rau);
        assert!(num(&r[7]).is_none());
        if d < 0.01 {
            assert!(rau - slb < 0.01 * slb, "D = {d}: R_AU - SLB = {}", rau - slb);
            assert!(rau - slb > prev_gap);
            prev_gap = rau - slb;
        }
        if d > 0.05 {
            assert!(rau > rge, "D = {d}");
        }
    }
}

#[test]
fn single_point_grid_single_row() {
    let o = epsrd(&["bounds", "--grid-min", "-3", "--grid-max", "-3", "--grid-count", "1"]);
    assert_eq!(csv_rows(&stdout(&o)).len(), 1);
}

#[test]
fn rau_on_gaussian_is_flagged_not_fatal() {
    let o = epsrd(&[
        "bounds",
        "--source",
        "gaussian",
        "--bounds",
        "slb,rau",
        "--grid-count",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    for r in csv_rows(&stdout(&o)) {
        assert!(r[4].is_empty());
        assert!(r[8].contains("R_au:not_applicable"));
    }
}

#[test]
fn bits_are_nats_over_ln2() {
    let base = ["bounds", "--grid-count", "5", "--bounds", "slb,ru,rau,rge,trivial"];
    let nats = csv_rows(&stdout(&epsrd(&base)));
    let bits = csv_rows(&stdout(&epsrd(&[&base[..], &["--units", "bits"]].concat())));
    for (n, b) in nats.iter().zip(&bits) {
        assert_eq!(n[0], b[0]);
        assert_eq!(n[1], b[1]);
        for k in 2..7 {
            let (vn, vb) = (num(&n[k]).unwrap(), num(&b[k]).unwrap());
            assert!((vn / std::f64::consts::LN_2 - vb).abs() <= 5e-12 * vb.abs().max(1e-300));
        }
    }
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let base = [
        "bounds",
        "--grid-count",
        "8",
        "--bounds",
        "all",
        "--ba-n",
        "201",
        "--ba-max-iter",
        "300",
    ];
    let a = epsrd(&[&base[..], &["--threads", "1"]].concat());
    let b = epsrd(&[&base[..], &["--threads", "3"]].concat());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, epsrd(&[&base[..], &["--threads", "1"]].concat()).stdout);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# experiment\nsource = gaussian\nepsilon = 0.3\nformat = json\n").unwrap();
    let path = cfg.to_str().unwrap();
    let o = epsrd(&["dmax", "--config", path, "--epsilon", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["source"], "gaussian");
    assert_eq!(v["epsilon"], 0.1);
    std::fs::write(&cfg, "not a pair\n").unwrap();
    assert_eq!(epsrd(&["dmax", "--config", path]).status.code(), Some(2));
}

#[test]
fn output_file_and_csv_source() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.csv");
    let mut text = String::from("x,mass\n");
    let n = 401;
    let masses: Vec<f64> = (0..n)
        .map(|i| {
            let x = -10.0 + 20.0 * i as f64 / (n - 1) as f64;
            (-x.abs()).exp()
        })
        .collect();
    let total: f64 = masses.iter().sum();
    for (i, m) in masses.iter().enumerate() {
        text.push_str(&format!("{},{}\n", -10.0 + 20.0 * i as f64 / (n - 1) as f64, m / total));
    }
    std::fs::write(&src, text).unwrap();
    let out = dir.path().join("table.csv");
    let spec = format!("csv:{}", src.display());
    let o = epsrd(&[
        "bounds",
        "--source",
        &spec,
        "--bounds",
        "slb,rge",
        "--grid-count",
        "4",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    assert!(Path::new(&out).exists());
    assert_eq!(csv_rows(&std::fs::read_to_string(&out).unwrap()).len(), 4);
}

#[test]
fn ba_subcommand_rows() {
    let o = epsrd(&[
        "ba",
        "--source",
        "gaussian",
        "--grid-min",
        "-20",
        "--grid-max",
        "-5",
        "--grid-count",
        "2",
        "--ba-n",
        "401",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("s,D,R,iterations,converged,objective_gap,flags\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 2);
    assert!(num(&rows[0][1]).unwrap() < num(&rows[1][1]).unwrap());
    assert_eq!(rows[0][4], "true");
}

#[test]
fn verify_tiny_grid_reports_grid_failure() {
    let o = epsrd(&["verify", "--source", "gaussian", "--ba-n", "51", "--ba-max-iter", "300"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], false);
    let grid = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "grid_convergence")
        .unwrap();
    assert_eq!(grid["passed"], false);
    assert!(grid["measured"].as_f64().unwrap() > grid["tolerance"].as_f64().unwrap());
}

#[test]
fn verify_laplacian_full_grid_passes() {
    let o = epsrd(&["verify", "--source", "laplacian", "--epsilon", "0.1", "--ba-n", "2001"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(o.status.code(), Some(0), "{v:#}");
    assert_eq!(v["passed"], true);
}

#[test]
fn verify_gaussian_zero_band_passes() {
    let o = epsrd(&["verify", "--source", "gaussian", "--epsilon", "0", "--ba-n", "2001"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(o.status.code(), Some(0), "{v:#}");
}
