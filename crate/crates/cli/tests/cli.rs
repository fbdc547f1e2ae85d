//! End-to-end runs of the binary: exit codes, outputs and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dunkl_hardy::grid::WeightedGridFunction;
use dunkl_hardy::measure::Measure;
use dunkl_hardy::root_system::RootSystem;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dunkl-hardy"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_two_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "verify",
        "--system",
        "a1xN",
        "--N",
        "1",
        "--k",
        "1",
        "--estimates",
        "heat2,poisson_dim1",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(dir.path().join("certificates.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["certificate"]["pass"], true);
        assert_eq!(v["campaign"]["tol"], 1e-9);
    }
    let csv = fs::read_to_string(dir.path().join("ratios.csv")).unwrap();
    assert!(csv.starts_with("estimate,x,y,t,ratio\n"));
    assert!(csv.lines().count() > 2);
}

#[test]
fn exit_codes_for_scope_and_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    let o = run(&[
        "verify",
        "--system",
        "a2",
        "--k",
        "1",
        "--estimates",
        "heat2",
        "--out",
        out,
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("heat2"));
    assert_eq!(code(&run(&["verify", "--out", out])), 64);
    assert_eq!(
        code(&run(&["verify", "--estimates", "nope", "--out", out])),
        64
    );
    assert_eq!(code(&run(&["frobnicate"])), 64);
    // measure facts do not need a closed-form kernel
    let sweep = dir.path().join("sweep.toml");
    fs::write(
        &sweep,
        "[sweep]\nx = [-1.0, 1.0]\npoints = 3\nt = [0.5, 2.0]\nt_points = 3\n",
    )
    .unwrap();
    let o = run(&[
        "verify",
        "--system",
        "a2",
        "--k",
        "1",
        "--estimates",
        "measure",
        "--sweep-file",
        path(&sweep),
        "--out",
        out,
    ]);
    assert!(
        code(&o) == 0 || code(&o) == 1,
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(
        fs::read_to_string(dir.path().join("certificates.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let o = run(&[
            "verify",
            "--k",
            "1",
            "--estimates",
            "identities,rosler",
            "--seed",
            "3",
            "--workers",
            "1",
            "--out",
            out,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let files: Vec<Vec<u8>> = ["certificates.jsonl", "ratios.csv"]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        snapshots.push(files);
    }
    assert!(snapshots[0] == snapshots[1]);
}

#[test]
fn chain_mode_on_the_dipole() {
    let dir = tempfile::tempdir().unwrap();
    let m = Measure::new(RootSystem::a1_product(&[1.0]).unwrap());
    let layout = WeightedGridFunction::new(&m, &[-4.0], &[4.0], 9, |_| 0.0).unwrap();
    let plus = layout.map(|z, _| if (z[0] - 3.0).abs() < 0.25 { 1.0 } else { 0.0 });
    let minus = layout.map(|z, _| if (z[0] + 3.0).abs() < 0.25 { 1.0 } else { 0.0 });
    let g = plus
        .axpy(-1.0, &minus)
        .unwrap()
        .scaled(1.0 / (2f64.sqrt() * plus.integral()));
    let input = dir.path().join("dipole.csv");
    fs::write(&input, g.to_csv()).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "decompose",
        "--mode",
        "chain",
        "--input",
        path(&input),
        "--y0",
        "3",
        "--r",
        "0.25",
        "--k",
        "1",
        "--out",
        path(&out),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(
        code(&o),
        0,
        "{stdout}{}",
        String::from_utf8_lossy(&o.stderr)
    );
    // the reflected ball sits 6 away: 24 links of weight (1/4 / 6)^2
    assert!(stdout.contains("1,-3,6,true,24,"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("decomposition.json")).unwrap()).unwrap();
    let sum = report["decomposition"]["bookkeeping"]["chain_coefficient_sum"]
        .as_f64()
        .unwrap();
    assert!((sum - 1.0 / 24.0).abs() < 1e-15);
    assert_eq!(fs::read_dir(out.join("atoms")).unwrap().count(), 24);
    assert_eq!(
        report["decomposition"]["pieces"][0]["atom_data"],
        "atoms/piece_0000.csv"
    );
}

#[test]
fn cz_mode_on_a_spike() {
    let dir = tempfile::tempdir().unwrap();
    let m = Measure::new(RootSystem::a1_product(&[0.0]).unwrap());
    let g = WeightedGridFunction::new(&m, &[0.0], &[1.0], 10, |z| {
        if z[0] < 1.0 / 512.0 {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    let mean = g.integral() / g.total_mass();
    let g = g.map(|_, v| v - mean);
    let a = g.scaled(1.0 / (g.lp_norm(2.0) * g.total_mass().sqrt()));
    let input = dir.path().join("spike.csv");
    fs::write(&input, a.to_csv()).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "decompose",
        "--mode",
        "cz",
        "--input",
        path(&input),
        "--k",
        "0",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("decomposition.json")).unwrap()).unwrap();
    let d = &report["decomposition"];
    assert!(
        d["coefficient_sum"].as_f64().unwrap()
            <= d["bookkeeping"]["coefficient_bound"].as_f64().unwrap()
    );
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "# {\"dim\":1}\nnot,a,grid\n").unwrap();
    let o = run(&[
        "decompose",
        "--mode",
        "cz",
        "--input",
        path(&input),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 65);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    let o = run(&[
        "report",
        "--out",
        path(dir.path()),
        path(&dir.path().join("missing.jsonl")),
    ]);
    assert_eq!(code(&o), 65);
}

#[test]
fn report_merges_runs_in_stable_order() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(
        code(&run(&[
            "verify",
            "--k",
            "1",
            "--estimates",
            "rosler",
            "--out",
            path(&a)
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "verify",
            "--k",
            "0.5",
            "--estimates",
            "heat_radial",
            "--out",
            path(&b)
        ])),
        0
    );
    let fa = a.join("certificates.jsonl");
    let fb = b.join("certificates.jsonl");
    let (m1, m2) = (dir.path().join("m1"), dir.path().join("m2"));
    assert_eq!(
        code(&run(&["report", "--out", path(&m1), path(&fa), path(&fb)])),
        0
    );
    assert_eq!(
        code(&run(&["report", "--out", path(&m2), path(&fb), path(&fa)])),
        0
    );
    let r1 = fs::read_to_string(m1.join("ratios.csv")).unwrap();
    assert_eq!(r1, fs::read_to_string(m2.join("ratios.csv")).unwrap());
    assert_eq!(
        fs::read(m1.join("constants.csv")).unwrap(),
        fs::read(m2.join("constants.csv")).unwrap()
    );
    let names: Vec<&str> = r1
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert!(names.windows(2).all(|w| w[0] <= w[1]));
    assert!(names.contains(&"heat_radial") && names.contains(&"rosler"));
}

#[test]
fn empty_report_has_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(dir.path().join("ratios.csv")).unwrap(),
        "estimate,x,y,t,ratio\n"
    );
    assert_eq!(
        fs::read_to_string(dir.path().join("constants.csv")).unwrap(),
        "estimate,system,c,constant,lower,pass\n"
    );
}
