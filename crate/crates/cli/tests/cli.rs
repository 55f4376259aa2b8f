use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::{Command, Output};

fn racbound(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_racbound"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RACBOUND_THREADS", "1")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn checksums(dir: &Path) -> Vec<(String, String)> {
    let m = json(&dir.join("manifest.json"));
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn bound_reports_objective_and_gain() {
    let dir = tempfile::tempdir().unwrap();
    for (d, k, level, objective, gain) in
        [("2", "2", "1", "3.41421", "0.798248"), ("3", "2", "1+AB", "4.66667", "1.19707"), ("5", "2", "1", "7.65685", "2.13568")]
    {
        let out = dir.path().join(format!("{d}-{k}-{level}"));
        let o = racbound(&["bound", "--d", d, "--k", k, "--level", level], &out);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        assert!(text.contains(&format!("objective {objective}")), "{text}");
        assert!(text.contains(&format!("gain {gain}")), "{text}");
        let name = format!("bound_d{d}_k{k}_{}.json", level.replace('+', ""));
        let rec = json(&out.join(&name));
        assert_eq!(rec["status"], "optimal");
        assert!((rec["objective"].as_f64().unwrap() - objective.parse::<f64>().unwrap()).abs() < 1e-5);
        assert!(rec["ic_margin"].as_f64().unwrap() > 0.0);
        let csv = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
        assert!(csv.starts_with("d,k,level,status,dim,objective,gain,ic_bound,margin\n"));
        for (path, sum) in checksums(&out) {
            let bytes = std::fs::read(out.join(&path)).unwrap();
            assert_eq!(hex::encode(Sha256::digest(&bytes)), sum);
        }
    }
}

#[test]
fn reruns_reproduce_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert!(racbound(&["bound", "--d", "3", "--k", "2"], out).status.success());
    }
    assert_eq!(checksums(&a), checksums(&b));
    let (sa, sb) = (dir.path().join("sa"), dir.path().join("sb"));
    for out in [&sa, &sb] {
        assert!(racbound(&["scan", "--mode", "isotropic", "--resolution", "15", "--plot-data"], out).status.success());
    }
    assert_eq!(checksums(&sa), checksums(&sb));
}

#[test]
fn budget_refusal_names_the_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let o = racbound(&["bound", "--d", "3", "--k", "3", "--level", "1+AB", "--budget", "100"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("133"), "{}", stderr(&o));
}

#[test]
fn invalid_arguments_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["bound", "--d", "2", "--k", "2", "--level", "2"],
        &["bound", "--d", "1", "--k", "2"],
        &["scan", "--mode", "symmetric", "--resolution", "5", "--window", "p00=0.5:1.5"],
        &["scan", "--mode", "case-iv"],
        &["verify", "--target", "curvature"],
    ];
    for args in cases {
        let o = racbound(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn table_marks_skipped_cells_and_margins() {
    let dir = tempfile::tempdir().unwrap();
    let o = racbound(&["table", "--levels", "1,1+AB", "--dmax", "3", "--kmax", "3", "--budget", "60"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        if r[3] == "skipped" {
            assert!(r[4].parse::<usize>().unwrap() > 60);
            assert!(r[5].is_empty());
        } else {
            assert_eq!(r[3], "optimal");
            let ic: f64 = r[7].parse().unwrap();
            let margin: f64 = r[8].parse().unwrap();
            assert!(margin > 0.0);
            if r[0] == "3" {
                assert!((ic - 1.5849625).abs() < 1e-6);
            }
        }
    }
    assert!(rows.iter().any(|r| r[3] == "skipped"));
    assert!(stdout(&o).contains("1.58496"));
}

#[test]
fn scans_write_points_aggregate_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sym");
    let o = racbound(&["scan", "--mode", "symmetric", "--resolution", "21", "--plot-data"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let agg = json(&out.join("aggregate.json"));
    assert!((agg["max_I"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(agg["argmax"].as_array().unwrap().iter().all(|p| (p["chsh"].as_f64().unwrap() - 2.0).abs() < 0.05 + 1e-9));
    let points = std::fs::read_to_string(out.join("points.csv")).unwrap();
    assert!(points.starts_with("p00,p01,p10,p11,pa0,pa1,chsh,chsh_p1,chsh_p2,chsh_p3,quantum,local,I0,I1,I\n"));
    let plot = std::fs::read_to_string(out.join("plot.dat")).unwrap();
    assert_eq!(plot.lines().count(), points.lines().count());

    let out = dir.path().join("case");
    let o = racbound(&["scan", "--mode", "case-ii", "--resolution", "21"], &out);
    assert!(o.status.success());
    let agg = json(&out.join("aggregate.json"));
    assert!((agg["max_I"].as_f64().unwrap() - 0.7982479).abs() < 1e-6);
    assert_eq!(agg["argmax"][0]["pa"], serde_json::json!([0.5, 0.5]));

    let out = dir.path().join("general");
    let o = racbound(&["scan", "--mode", "general", "--resolution", "9", "--summary-only"], &out);
    assert!(o.status.success());
    assert!(!out.join("points.csv").exists());
    assert!((json(&out.join("aggregate.json"))["max_I"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn verify_targets() {
    let dir = tempfile::tempdir().unwrap();
    let ok: [&[&str]; 4] = [
        &["verify", "--target", "signal-decay", "--d", "2", "--xi", "0.8"],
        &["verify", "--target", "hessian"],
        &["verify", "--target", "monotonic", "--d", "4", "--k", "3"],
        &["verify", "--target", "no-signaling", "--d", "3", "--k", "2"],
    ];
    for args in ok {
        let o = racbound(args, &dir.path().join(args[2]));
        assert!(o.status.success(), "{args:?}: {}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).starts_with("PASS"));
    }
    // the full-simplex supremum exceeds xi^2 for ternary channels
    let o = racbound(&["verify", "--target", "signal-decay", "--d", "3", "--xi", "0.5", "--grid", "40"], &dir.path().join("sd3"));
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).starts_with("FAIL"));

    let signaling = serde_json::json!({
        "d": 2, "k": 2,
        "joint": [
            {"x": 0, "y": 0, "table": [[0.5, 0.0], [0.0, 0.5]]},
            {"x": 0, "y": 1, "table": [[0.5, 0.0], [0.0, 0.5]]},
            {"x": 1, "y": 0, "table": [[0.3, 0.0], [0.0, 0.7]]},
            {"x": 1, "y": 1, "table": [[0.5, 0.0], [0.0, 0.5]]}
        ]
    });
    let path = dir.path().join("signaling.json");
    std::fs::write(&path, signaling.to_string()).unwrap();
    let o = racbound(&["verify", "--target", "no-signaling", "--box", path.to_str().unwrap()], &dir.path().join("ns"));
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
