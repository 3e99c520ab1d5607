use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mlmfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlmfm")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(p).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

const SWEEP: &str = r#"
version = 1
mode = "sweep"
seed = 3
replications = 4
[sweep]
deltas = [[0.0, 0.0, 0.0, 0.0], [0.2, 0.2, 0.2, 0.2]]
sizes = [[8, 8]]
t_values = [50]
scale10 = true
"#;

#[test]
fn sweep_summaries_match_replication_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, SWEEP).unwrap();
    let out = dir.path().join("run");
    let res = mlmfm(&["sweep", "-c", path(&cfg), "-o", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let (rh, reps) = read_csv(&out.join("replications.csv"));
    let (ch, cells) = read_csv(&out.join("cells.csv"));
    assert_eq!(reps.len(), 2 * 4 * 3);
    assert_eq!(cells.len(), 2 * 3);
    let rcol = |name: &str| rh.iter().position(|h| h == name).unwrap();
    let ccol = |name: &str| ch.iter().position(|h| h == name).unwrap();

    // brute force: group the log by (cell, group)
    let mut groups: BTreeMap<(String, String), Vec<&Vec<String>>> = BTreeMap::new();
    for r in &reps {
        groups.entry((r[rcol("cell")].clone(), r[rcol("group")].clone())).or_default().push(r);
    }
    for c in &cells {
        let rows = &groups[&(c[ccol("cell")].clone(), c[ccol("group")].clone())];
        assert_eq!(c[ccol("replications")], rows.len().to_string());
        for stat in ["d_q1", "d_q2", "d_q3", "d_q4", "d_phi", "d_psi"] {
            let vals: Vec<f64> = rows.iter().map(|r| r[rcol(stat)].parse().unwrap()).collect();
            let mut sum = 0.0;
            for v in &vals {
                sum += v;
            }
            let mean = sum / vals.len() as f64;
            let mut ss = 0.0;
            for v in &vals {
                ss += (v - mean) * (v - mean);
            }
            let sd = (ss / (vals.len() - 1) as f64).sqrt();
            let got_mean: f64 = c[ccol(&format!("mean_{stat}"))].parse().unwrap();
            let got_sd: f64 = c[ccol(&format!("sd_{stat}"))].parse().unwrap();
            assert_eq!(got_mean, mean, "{stat}");
            assert_eq!(got_sd, sd, "{stat}");
            assert!(got_sd >= 0.0);
            // scaled copy sits next to the raw value
            let x10: f64 = c[ccol(&format!("x10_mean_{stat}"))].parse().unwrap();
            assert_eq!(x10, 10.0 * mean);
        }
        let hits = rows.iter().filter(|r| r[rcol("ranks_correct")] == "1").count();
        let freq: f64 = c[ccol("rank_freq")].parse().unwrap();
        assert_eq!(freq, hits as f64 / rows.len() as f64);
        assert!((0.0..=1.0).contains(&freq));
    }

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["verb"], "sweep");
    assert!(out.join("config.resolved").is_file());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, SWEEP).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(mlmfm(&["sweep", "-c", path(&cfg), "-o", path(&a), "--threads", "1"]).status.success());
    assert!(mlmfm(&["sweep", "-c", path(&cfg), "-o", path(&b), "--threads", "3"]).status.success());
    for f in ["cells.csv", "replications.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn seed_override_changes_the_draw() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(&cfg, "mode = \"simulate\"\n[sim]\nn = 5\np = 5\nt = 10\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(mlmfm(&["simulate", "-c", path(&cfg), "-o", path(&a), "--seed", "1"]).status.success());
    assert!(mlmfm(&["simulate", "-c", path(&cfg), "-o", path(&b), "--seed", "2"]).status.success());
    assert_ne!(fs::read(a.join("panel.csv")).unwrap(), fs::read(b.join("panel.csv")).unwrap());
    assert!(fs::read_to_string(b.join("config.resolved")).unwrap().contains("seed = 2"));
}

#[test]
fn fit_from_csv_with_preprocessing() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = dir.path().join("sim.toml");
    fs::write(&sim_cfg, "mode = \"simulate\"\n[sim]\nn = 10\np = 8\nt = 150\nseed = 4\n").unwrap();
    let sim_out = dir.path().join("sim");
    assert!(mlmfm(&["simulate", "-c", path(&sim_cfg), "-o", path(&sim_out)]).status.success());

    let fit_cfg = dir.path().join("fit.toml");
    fs::write(
        &fit_cfg,
        "mode = \"fit\"\n[data]\npath = \"sim/panel.csv\"\ndifference = true\nstandardize = true\n\
         [estimator]\nk1 = 3\nk2 = 2\n[report]\nwrite_signals = false\n",
    )
    .unwrap();
    let fit_out = dir.path().join("fit");
    let res = mlmfm(&["fit", "-c", path(&fit_cfg), "-o", path(&fit_out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let (_, ranks) = read_csv(&fit_out.join("diagnostics/ranks.csv"));
    assert_eq!(ranks.len(), 3);
    assert!(ranks.iter().all(|r| r[5] == "3" && r[6] == "2"));
    let (_, loadings) = read_csv(&fit_out.join("loadings/group1_q1_varimax_scaled.csv"));
    assert_eq!(loadings.len(), 10);
    let (_, summary) = read_csv(&fit_out.join("summary.csv"));
    assert_eq!(summary.last().unwrap()[0], "all");
    assert!(!fit_out.join("signals").exists());
}

#[test]
fn failures_exit_nonzero_with_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = mlmfm(&["fit", "-c", path(&dir.path().join("missing.toml"))]);
    assert_eq!(res.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"], "io");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "mode = \"sweep\"\n").unwrap();
    let res = mlmfm(&["sweep", "-c", path(&bad)]);
    let err: serde_json::Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("[sweep]"));

    let gappy = dir.path().join("gappy.csv");
    fs::write(&gappy, "group,time,row_id,col_id,value\na,1,x,u,1\na,2,x,u,2\na,2,y,u,3\n").unwrap();
    let res = mlmfm(&["ingest-check", "-i", path(&gappy)]);
    assert!(!res.status.success());
    let err: serde_json::Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"], "ingest");
    assert!(err["message"].as_str().unwrap().contains("(a, 1, y, u)"));
}

#[test]
fn ingest_check_reports_single_group_violation() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    let mut text = String::from("group,time,row_id,col_id,value\n");
    for t in 1..=3 {
        text.push_str(&format!("a,{t},x,u,{t}\n"));
    }
    fs::write(&one, text).unwrap();
    let res = mlmfm(&["ingest-check", "-i", path(&one)]);
    assert_eq!(res.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["ok"], false);
    assert!(report["validation"]["violations"][0].as_str().unwrap().contains("2 groups"));
}
