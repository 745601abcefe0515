use std::path::Path;
use std::process::{Command, Output};

fn vsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsi")).args(args).env_remove("VSI_THREADS").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vsi(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Numeric rows of a CSV text, skipping comments and the header.
fn rows(csv: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let data = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, data)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"))
}

// CODATA μB/h in MHz/mT; g = 2.
const GAMMA: f64 = 2.0 * 13.996_244_936_1;

#[test]
fn levels_zero_field_and_central_slope() {
    for (center, nu) in [("v2", 128.0), ("v1v3", 28.0)] {
        let (h, r) = rows(&ok(&["levels", "--center", center, "--b-end", "9", "--points", "10"]));
        assert_eq!(h, ["B_mT", "E_m+3/2", "E_m+1/2", "E_m-1/2", "E_m-3/2", "nu1", "nu2", "central"]);
        assert_eq!(r.len(), 10);
        assert!((r[0][col(&h, "nu1")] - nu).abs() < 1e-9 && (r[0][col(&h, "nu2")] - nu).abs() < 1e-9);
        let c = col(&h, "central");
        let slope = (r[9][c] - r[0][c]) / (r[9][0] - r[0][0]);
        assert!((slope - GAMMA).abs() < 1e-6, "slope {slope}");
        assert!((slope - 27.992).abs() < 1e-3);
    }
}

#[test]
fn bad_range_is_a_usage_error() {
    for args in [
        &["levels", "--b-start", "5", "--b-end", "1"][..],
        &["levels", "--points", "0"],
        &["levels", "--center", "v7"],
        &["map", "--f-end", "-1"],
        &["pump", "--center", "nv"],
    ] {
        let out = vsi(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?} wrote data");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

#[test]
fn default_map_has_both_signed_families() {
    let (h, r) = rows(&ok(&["map"]));
    assert_eq!(h, ["b_mT", "f_MHz", "dpl_percent"]);
    assert_eq!(r.len(), 91 * 601);
    assert_eq!(r.first().unwrap()[..2], [0.0, 0.0]);
    assert_eq!(r.last().unwrap()[..2], [9.0, 300.0]);
    let v: Vec<f64> = r.iter().map(|x| x[2]).collect();
    assert!(v.iter().cloned().fold(f64::MIN, f64::max) > 0.05);
    assert!(v.iter().cloned().fold(f64::MAX, f64::min) < -0.02);
}

#[test]
fn single_point_map_is_one_row() {
    let (_, r) = rows(&ok(&["map", "--b-points", "1", "--f-points", "1", "--f-start", "128"]));
    assert_eq!(r.len(), 1);
    assert!(r[0][2] < 0.0);
}

#[test]
fn map_ridges_follow_the_level_branches() {
    let (f0, f1, nf) = (0.0, 300.0, 601);
    let step = (f1 - f0) / (nf - 1) as f64;
    // Lines closer than about two widths (≈12 MHz at 33 dBm) merge into one ridge.
    let resolved = 25.0;
    let mut checked = 0;
    for (center, sign) in [("v2", -1.0), ("v1v3", 1.0)] {
        let (_, m) = rows(&ok(&["map", "--centers", center, "--b-end", "9", "--b-points", "19"]));
        let (h, lv) = rows(&ok(&["levels", "--center", center, "--b-end", "9", "--points", "19"]));
        for (i, l) in lv.iter().enumerate() {
            let row = &m[i * nf..(i + 1) * nf];
            assert_eq!(row[0][0], l[0]);
            let branches: Vec<f64> = ["nu1", "nu2", "central"].iter().map(|b| l[col(&h, b)]).collect();
            for (k, &target) in branches.iter().enumerate() {
                let apart = branches.iter().enumerate().all(|(j, &o)| j == k || (o - target).abs() > resolved || (o - target).abs() < 1e-9);
                if !apart || target < f0 + 10.0 || target > f1 - 10.0 {
                    continue;
                }
                let best = row
                    .iter()
                    .filter(|p| (p[1] - target).abs() <= 5.0)
                    .max_by(|a, b| (sign * a[2]).total_cmp(&(sign * b[2])))
                    .unwrap();
                assert!((best[1] - target).abs() <= step, "{center} B={}: ridge {} vs {target}", l[0], best[1]);
                checked += 1;
            }
        }
    }
    assert!(checked >= 60, "only {checked} ridges checked");
}

#[test]
fn run_dry_run_counts_programs() {
    assert_eq!(ok(&["run", "rabi_v1v3", "--dry-run"]), "programs\n201\n");
    assert_eq!(ok(&["run", "templates/cpmg_v2", "--dry-run"]), "programs\n21\n");
    let j: serde_json::Value = serde_json::from_str(&ok(&["run", "cpmg_v2.seq", "--dry-run", "--format", "json"])).unwrap();
    assert_eq!(j["programs"], 21);
    assert_eq!(ok(&["run", "cpmg_v2", "--dry-run", "--set", "tau=100ns"]), "programs\n21\n");
}

#[test]
fn run_rabi_template_recovers_the_rabi_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let fit = dir.path().join("fit.json");
    let curve = ok(&["run", "rabi_v1v3", "--fit", "auto", "--fit-output", fit.to_str().unwrap()]);
    let (h, r) = rows(&curve);
    assert_eq!(h, ["x_value", "signal", "stderr_over_members"]);
    assert_eq!(r.len(), 201);
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    assert_eq!(j["converged"], true);
    let nu = j["params"][3].as_f64().unwrap();
    assert!((nu / 12.44 - 1.0).abs() < 0.01, "nu_R = {nu}");
}

#[test]
fn run_cpmg_v2_decays_and_stretched_fit_converges() {
    let out = ok(&["run", "cpmg_v2", "--set", "tau=200ns", "--fit", "stretched_exp", "--format", "json"]);
    let j: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(j["x_unit"], "us");
    let s: Vec<f64> = j["curve"]["signal"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let x: Vec<f64> = j["curve"]["x"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(s.len(), 21);
    // 2n(τ + t_π) with τ = 200 ns, t_π = 21 ns
    assert!((x[1] - 2.0 * 23.0 * 0.221).abs() < 1e-9, "{}", x[1]);
    assert!(s[20] < 0.5 * s[0]);
    assert_eq!(j["fit"]["converged"], true);
    assert_eq!(j["fit"]["kind"], "stretched_exp");
}

#[test]
fn run_reports_parse_errors_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.seq");
    std::fs::write(&p, "sequence {\n    laser dur=300;\n    readout dur=4us;\n}\nsweep t = 0:1:2ns;\n").unwrap();
    let out = vsi(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.seq:2:11: unit_mismatch"), "{err}");
    let out = vsi(&["run", "rabi_v2", "--set", "nu_r=3ns"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unit_mismatch"));
    assert_eq!(vsi(&["run", "rabi_v2", "--fit", "rabi"]).status.code(), Some(2), "CSV fit without --fit-output");
}

#[test]
fn run_accepts_sequence_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fid.seq");
    std::fs::write(
        &p,
        "center v2;\nensemble members=4;\nsequence {\n    laser dur=300us;\n    rf dur=21ns phase=x rabi=1/(2*42ns);\n    wait dur=t;\n    rf dur=21ns phase=x rabi=1/(2*42ns);\n    readout dur=4us;\n}\nsweep t = 0:10:50ns;\n",
    )
    .unwrap();
    let (_, r) = rows(&ok(&["run", p.to_str().unwrap(), "--pulses", "instantaneous"]));
    assert_eq!(r.len(), 6);
    assert!((r[5][0] - 0.05).abs() < 1e-12);
    let out = vsi(&["run", p.to_str().unwrap(), "--fit", "auto", "--format", "json"]);
    assert_eq!(out.status.code(), Some(2), "auto needs a template");
}

#[test]
fn synth_noiseless_curve_is_exact() {
    let (h, r) = rows(&ok(&["synth", "--model", "exp_decay", "--params", "A=1,T=142.1", "--n-points", "11", "--x-end", "710.5"]));
    assert_eq!(h, ["x", "y", "sigma"]);
    for row in &r {
        assert_eq!(row[1], (-row[0] / 142.1).exp());
        assert_eq!(row[2], 0.0);
    }
}

#[test]
fn synth_header_records_provenance() {
    let out = ok(&["synth", "--model", "stretched_exp", "--params", "1,56,0.93", "--noise", "0.01", "--seed", "7"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("# vsi synth model=stretched_exp A=1 T=56 n=0.93"));
    assert_eq!(lines.next(), Some("# noise=0.01 n_points=101 x_start=0 x_end=140 seed=7"));
}

#[test]
fn synth_zero_points_is_an_error() {
    let out = vsi(&["synth", "--model", "exp_decay", "--params", "A=1,T=1", "--n-points", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
    assert_eq!(vsi(&["synth", "--model", "exp_decay", "--params", "A=1,T=-1"]).status.code(), Some(2));
}

#[test]
fn synth_then_fit_recovers_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &str, &[f64]); 3] = [
        ("exp_decay", "A=1,T=142.1", &[1.0, 142.1]),
        ("stretched_exp", "A=1,T=51,n=3.47", &[1.0, 51.0, 3.47]),
        ("rabi", "A=0.5,B=0.5,phi=0,nu=12.44,T=0.2", &[0.5, 0.5, 0.0, 12.44, 0.2]),
    ];
    for (model, params, truth) in cases {
        let data = dir.path().join(format!("{model}.csv"));
        ok(&["synth", "--model", model, "--params", params, "--n-points", "201", "-o", data.to_str().unwrap()]);
        let j: serde_json::Value = serde_json::from_str(&ok(&["fit", data.to_str().unwrap(), "--model", model, "--format", "json"])).unwrap();
        assert_eq!(j["converged"], true, "{model}");
        for (i, t) in truth.iter().enumerate() {
            let got = j["params"][i].as_f64().unwrap();
            assert!((got - t).abs() <= 1e-3 * t.abs().max(1.0), "{model} p{i}: {got} vs {t}");
        }
    }
}

#[test]
fn fit_non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("noise.csv");
    let ys = "1.288 1.449 0.066 -0.765 -1.092 0.031 -1.022 -1.437 0.199 0.133 0.546 -0.914 0.005 -0.065 -1.506 0.538 0.321 2.389 0.203 -0.145 \
              1.233 0.199 0.909 -0.366 0.218 1.024 0.696 0.128 -1.082 0.445 0.077 0.720 0.216 1.088 -0.052 0.202 0.667 -1.087 -0.402 -0.500";
    let text: String = ys.split_whitespace().enumerate().map(|(i, y)| format!("{i},{y}\n")).collect();
    std::fs::write(&p, format!("x,y\n{text}")).unwrap();
    let out = vsi(&["fit", p.to_str().unwrap(), "--model", "stretched_exp"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged=false"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
}

#[test]
fn fit_reads_stdin_and_rejects_bad_csv() {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_vsi"))
        .args(["fit", "-", "--model", "exp_decay", "--format", "json"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let data: String = (0..20).map(|i| format!("{i},{}\n", 2.0 * (-(i as f64) / 5.0).exp())).collect();
    child.stdin.take().unwrap().write_all(data.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let j: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((j["params"][1].as_f64().unwrap() - 5.0).abs() < 1e-6);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "x,y\n1,2\n3,oops\n").unwrap();
    let out = vsi(&["fit", p.to_str().unwrap(), "--model", "exp_decay"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

fn crossing(rows: &[Vec<f64>], target: f64) -> f64 {
    let k = rows.iter().position(|r| r[6] >= target).unwrap();
    let (a, b) = (&rows[k - 1], &rows[k]);
    a[0] + (target - a[6]) * (b[0] - a[0]) / (b[6] - a[6])
}

#[test]
fn pump_v2_time_constant_and_asymptote() {
    let out = ok(&["pump", "--center", "v2", "--dt", "0.05", "--format", "json"]);
    let j: serde_json::Value = serde_json::from_str(&out).unwrap();
    let tau = j["time_constant_us"].as_f64().unwrap();
    let ss: Vec<f64> = j["steady_state"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let r: Vec<Vec<f64>> = j["rows"].as_array().unwrap().iter().map(|r| r.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()).collect();
    assert_eq!(j["columns"], serde_json::json!(["t_us", "p0", "p1", "p2", "p3", "p4", "polarization"]));
    let last = r.last().unwrap();
    assert!(last[0] >= 20.0 * tau);
    for m in 0..5 {
        assert!((last[1 + m] - ss[m]).abs() < 1e-6, "p{m}: {} vs {}", last[1 + m], ss[m]);
    }
    assert!(last[6] > 0.0);
    let t63 = crossing(&r, (1.0 - (-1.0f64).exp()) * (ss[1] - ss[0]));
    assert!((t63 / 28.0 - 1.0).abs() < 0.02, "t63 = {t63}");
    assert!((t63 - tau).abs() < 0.05);
}

#[test]
fn pump_without_pumping_stays_thermal() {
    let (h, r) = rows(&ok(&["pump", "--w-pump", "0", "--duration", "50", "--dt", "5"]));
    assert_eq!(h.len(), 7);
    assert_eq!(r.len(), 11);
    for row in &r {
        assert_eq!(&row[1..], &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
    }
}

#[test]
fn every_subcommand_honors_json_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    ok(&["synth", "--model", "exp_decay", "--params", "1,3", "-o", data.to_str().unwrap()]);
    let cases: [&[&str]; 6] = [
        &["levels", "--points", "3"],
        &["map", "--b-points", "2", "--f-points", "5"],
        &["run", "t1_v2", "--set", "ensemble.members=2"],
        &["synth", "--model", "fid", "--params", "1,40,0,0.03"],
        &["pump", "--duration", "10"],
        &["fit", data.to_str().unwrap(), "--model", "exp_decay"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let path = dir.path().join(format!("out{i}.json"));
        let mut a = args.to_vec();
        a.extend(["--format", "json", "--output", path.to_str().unwrap()]);
        assert!(ok(&a).is_empty(), "{args:?} wrote to stdout");
        let text = std::fs::read_to_string(&path).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    }
}

#[test]
fn unwritable_output_fails() {
    let out = vsi(&["levels", "--output", "/nonexistent-dir/x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent-dir/x.csv"));
}

#[test]
fn config_file_sits_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("vsi.toml");
    std::fs::write(&cfg, "format = \"json\"\n[levels]\ncenter = \"v2\"\npoints = 2\nb_end = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    let j: serde_json::Value = serde_json::from_str(&ok(&["levels", "--config", c])).unwrap();
    assert_eq!(j["center"], "v2");
    assert_eq!(j["rows"].as_array().unwrap().len(), 2);
    let (_, r) = rows(&ok(&["levels", "--config", c, "--format", "csv", "--center", "v1v3"]));
    assert_eq!(r.len(), 2);
    assert!((r[0][5] - 28.0).abs() < 1e-9);
    std::fs::write(&cfg, "[levels]\nbogus = 1\n").unwrap();
    assert_eq!(vsi(&["levels", "--config", c]).status.code(), Some(2));
    std::fs::write(&cfg, "[levels\n").unwrap();
    assert_eq!(vsi(&["levels", "--config", c]).status.code(), Some(2));
}

fn identical_twice(args: &[&str], dir: &Path) {
    let (a, b) = (dir.join("a"), dir.join("b"));
    for p in [&a, &b] {
        let mut v = args.to_vec();
        v.extend(["-o", p.to_str().unwrap()]);
        ok(&v);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{args:?}");
}

#[test]
fn outputs_are_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    identical_twice(&["synth", "--model", "rabi", "--params", "0.5,0.5,0,8.36,0.2", "--noise", "0.05"], dir.path());
    identical_twice(&["map", "--b-points", "5", "--f-points", "50"], dir.path());
    identical_twice(&["run", "hahn_v2", "--set", "ensemble.members=8"], dir.path());
    identical_twice(&["pump", "--center", "v1v3"], dir.path());
    let a = ok(&["synth", "--model", "exp_decay", "--params", "1,3", "--noise", "0.1"]);
    assert_eq!(a, ok(&["synth", "--model", "exp_decay", "--params", "1,3", "--noise", "0.1", "--seed", "42"]));
    assert_ne!(a, ok(&["synth", "--model", "exp_decay", "--params", "1,3", "--noise", "0.1", "--seed", "43"]));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_vsi"))
            .args(["run", "ramsey_v1v3", "--set", "ensemble.members=16"])
            .env("VSI_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert!(one.status.success());
    assert_eq!(one.stdout, run("3").stdout);
    assert_eq!(run("many").status.code(), Some(2));
}
