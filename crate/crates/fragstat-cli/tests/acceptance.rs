//! Acceptance suite: every criterion runs end-to-end through the CLI with
//! the default law (binary uniform, c = 0.25) and seed 42, then asserts on
//! the written artifacts. One pass/fail line is printed per criterion.
//!
//! Runs are cached across criteria; the determinism criterion re-executes
//! every cached invocation with a different worker-thread count and compares
//! all artifacts byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};

const SEED: &str = "42";

struct Registry {
    base: PathBuf,
    /// name -> argv (without the global seed/threads/out-dir flags)
    runs: BTreeMap<String, Vec<String>>,
}

fn registry() -> &'static Mutex<Registry> {
    static REG: OnceLock<Mutex<Registry>> = OnceLock::new();
    REG.get_or_init(|| {
        let base = std::env::temp_dir().join(format!("fragstat-acceptance-{}", std::process::id()));
        std::fs::create_dir_all(&base).unwrap();
        // config for the LLN run: the RMSE-ratio acceptance band rides in
        // the config file
        let lln_cfg = base.join("lln_config.json");
        std::fs::write(
            &lln_cfg,
            r#"{
  "law": {"family": "binary_uniform", "c": 0.25},
  "lln": {
    "epsilon_ladder": [1e-2, 1e-3, 1e-4],
    "m": 200,
    "functions": ["power:1"],
    "ratio_band": [5.0, 20.0]
  }
}
"#,
        )
        .unwrap();
        Mutex::new(Registry {
            base,
            runs: BTreeMap::new(),
        })
    })
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fragstat")
}

fn exec(args: &[String], out_dir: &Path, threads: &str) -> std::process::Output {
    let out = Command::new(bin())
        .args(args)
        .arg("--seed")
        .arg(SEED)
        .arg("--threads")
        .arg(threads)
        .arg("--out-dir")
        .arg(out_dir)
        .output()
        .expect("spawn fragstat");
    assert!(
        out.status.success(),
        "fragstat {:?} failed (status {:?}):\n{}\n{}",
        args,
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Runs (or reuses) a named CLI invocation; returns its artifact directory.
fn ensure_run(name: &str, make_args: impl FnOnce(&Path) -> Vec<String>) -> PathBuf {
    let mut reg = registry().lock().unwrap_or_else(|e| e.into_inner());
    let dir = reg.base.join("a").join(name);
    if !reg.runs.contains_key(name) {
        std::fs::create_dir_all(&dir).unwrap();
        let args = make_args(&reg.base);
        exec(&args, &dir, "2");
        reg.runs.insert(name.to_string(), args);
    }
    dir
}

fn report(dir: &Path, file: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(file))
        .unwrap_or_else(|e| panic!("missing artifact {file} in {}: {e}", dir.display()));
    serde_json::from_str(&text).unwrap()
}

fn announce(criterion: &str, pass: bool) {
    println!(
        "acceptance {criterion}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed");
}

fn strs(args: &[&str]) -> Vec<String> {
    args.iter().map(|s| s.to_string()).collect()
}

#[test]
fn criterion_01_conservation() {
    let dir = ensure_run("tree", |_| {
        strs(&[
            "simulate-tree",
            "--epsilon",
            "1e-3",
            "--replicates",
            "10000",
            "--stats-out",
            "tree_stats.csv",
        ])
    });
    let csv = std::fs::read_to_string(dir.join("tree_stats.csv")).unwrap();
    let mut rows = 0;
    let mut ok = true;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let mass: f64 = f[2].parse().unwrap();
        let min: f64 = f[3].parse().unwrap();
        let max: f64 = f[4].parse().unwrap();
        ok &= (mass - 1.0).abs() <= 1e-12 && min >= 0.25e-3 && max < 1e-3;
        rows += 1;
    }
    let rep = report(&dir, "tree_report.json");
    announce(
        "01 conservation (1e4 trees, mass = 1 within 1e-12, sizes in [0.25e-3, 1e-3))",
        ok && rows == 10_000 && rep["pass"].as_bool().unwrap(),
    );
}

#[test]
fn criterion_02_pi_law() {
    let dir = ensure_run("renewal", |_| strs(&["renewal-check"]));
    let rep = report(&dir, "renewal_report.json");
    let n = rep["increments_n"].as_u64().unwrap();
    let p = rep["ks_pi_increments"]["p_value"].as_f64().unwrap();
    announce(
        &format!("02 pi law (KS on {n} tagged-line increments, p = {p:.4} > 0.01)"),
        n >= 100_000 && p > 0.01,
    );
}

#[test]
fn criterion_03_eta_law() {
    let dir = ensure_run("renewal", |_| strs(&["renewal-check"]));
    let rep = report(&dir, "renewal_report.json");
    let p_res = rep["ks_residual_eta"]["p_value"].as_f64().unwrap();
    let p_smp = rep["ks_sampler_eta"]["p_value"].as_f64().unwrap();
    announce(
        &format!("03 eta law (B_50 KS p = {p_res:.4}, sampler KS p = {p_smp:.4}, both > 0.01)"),
        p_res > 0.01 && p_smp > 0.01,
    );
}

#[test]
fn criterion_04_rate() {
    let dir = ensure_run("rate", |_| {
        strs(&[
            "rate-check",
            "--theta-eff",
            "1.5",
            "--tgrid",
            "2,4,6,8",
            "--m",
            "10000000",
        ])
    });
    let rep = report(&dir, "rate_report.json");
    let r = &rep["report"];
    let decreasing = r["decreasing_pre_noise"].as_bool().unwrap();
    let entry = r["floor_entry_certified"].as_bool().unwrap();
    let consistent = r["consistent_with_unit_slope"].as_bool().unwrap();
    let slope_ok = r["fitted_slope"].as_f64().map_or(true, |s| s <= -1.0);
    let pre = r["pre_noise_points"].as_u64().unwrap();
    announce(
        &format!(
            "04 rate (pre-noise points {pre}, gap decreasing into the floor, \
             data consistent with decay at least e^-t)"
        ),
        decreasing && entry && consistent && slope_ok && pre >= 1,
    );
}

#[test]
fn criterion_05_duality() {
    let dir = ensure_run("duality", |_| strs(&["selftest", "--duality"]));
    let rep = report(&dir, "selftest_report.json");
    let d = &rep["duality"];
    let z1 = d["z_q1"].as_f64().unwrap();
    let z2 = d["z_q2"].as_f64().unwrap();
    announce(
        &format!("05 duality (q=1 z = {z1:.2}, q=2 injective z = {z2:.2}, both <= 3)"),
        z1 <= 3.0 && z2 <= 3.0,
    );
}

fn v_run() -> PathBuf {
    ensure_run("v", |_| {
        strs(&[
            "estimate-v",
            "--f",
            "centered:power:1",
            "--eps",
            "0.01,0.0025,0.000625",
            "--m",
            "1000000",
            "--wick",
            "--odd",
        ])
    })
}

#[test]
fn criterion_06_pair_limit() {
    let rep = report(&v_run(), "v_report.json");
    let z = rep["last_two_rungs_z"].as_f64().unwrap();
    let wick_z = rep["wick"]["z"].as_f64().unwrap();
    announce(
        &format!("06 pair limit (last two rungs z = {z:.2}, q=4 Wick z = {wick_z:.2}, both <= 3)"),
        z <= 3.0 && wick_z <= 3.0,
    );
}

#[test]
fn criterion_07_odd_vanishing() {
    let rep = report(&v_run(), "v_report.json");
    let z = rep["odd"]["z"].as_f64().unwrap();
    let mean = rep["odd"]["scaled_mean"].as_f64().unwrap();
    announce(
        &format!("07 odd-q vanishing (eps^-3/2 moment = {mean:.3}, |z| = {z:.2} < 3)"),
        z < 3.0,
    );
}

#[test]
fn criterion_08_tail_bound() {
    let mut ok = true;
    let mut msg = String::new();
    for (name, eps) in [("tags_1e2", "0.01"), ("tags_1e3", "0.001")] {
        let dir = ensure_run(name, |_| {
            strs(&[
                "simulate-tags",
                "--q",
                "2",
                "--epsilon",
                eps,
                "--replicates",
                "100000",
                "--out",
                "tags.csv",
            ])
        });
        let rep = report(&dir, "tags_report.json");
        let freq = rep["together_frequency"].as_f64().unwrap();
        let se = rep["together_se"].as_f64().unwrap();
        let bound = rep["tail_bound_4eps"].as_f64().unwrap();
        ok &= freq <= bound + 3.0 * se;
        msg.push_str(&format!("eps {eps}: {freq:.5} <= {bound} + 3se; "));
    }
    announce(&format!("08 L_T tail bound ({msg})"), ok);
}

#[test]
fn criterion_09_lln() {
    let dir = ensure_run("lln", |base| {
        vec![
            "lln".to_string(),
            "--config".to_string(),
            base.join("lln_config.json").display().to_string(),
        ]
    });
    let rep = report(&dir, "lln_report.json");
    let f = &rep["report"]["functions"][0];
    let monotone = f["rmse_monotone"].as_bool().unwrap();
    let ratio = f["rmse_ratio_first_last"].as_f64().unwrap();
    let band = rep["ratio_band_ok"].as_bool().unwrap();
    announce(
        &format!("09 LLN (RMSE monotone = {monotone}, ratio first/last = {ratio:.2} in [5, 20])"),
        monotone && band && (5.0..=20.0).contains(&ratio),
    );
}

fn clt_run() -> PathBuf {
    ensure_run("clt", |_| {
        strs(&[
            "clt",
            "--epsilon",
            "1e-4",
            "--m",
            "2000",
            "--functions",
            "centered:power:1,centered:power:2",
            "--v-epsilon",
            "0.000625",
            "--v-m",
            "1000000",
        ])
    })
}

#[test]
fn criterion_10_clt() {
    let rep = report(&clt_run(), "clt_report.json");
    let r = &rep["report"];
    let c0 = &r["coordinates"][0];
    assert_eq!(c0["function"].as_str().unwrap(), "centered:power:1");
    let ad_p = c0["normality"]["p_value"].as_f64().unwrap();
    let zs: Vec<f64> = r["covariance"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["z"].as_f64().unwrap())
        .collect();
    let var_z = r["covariance"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["i"] == 0 && c["j"] == 0)
        .unwrap()["z"]
        .as_f64()
        .unwrap();
    let max_z = zs.iter().cloned().fold(0.0f64, f64::max);
    announce(
        &format!(
            "10 CLT (AD p = {ad_p:.3} not rejected at 1%, Var(Z) z = {var_z:.2}, \
             max covariance z = {max_z:.2}, all <= 3)"
        ),
        ad_p >= 0.01 && zs.iter().all(|&z| z <= 3.0),
    );
}

#[test]
fn criterion_11_determinism() {
    // make sure every run exists, then re-execute each with one worker
    // thread and compare all artifacts byte for byte
    criterion_01_runs();
    fn criterion_01_runs() {
        let _ = ensure_run("tree", |_| {
            strs(&[
                "simulate-tree",
                "--epsilon",
                "1e-3",
                "--replicates",
                "10000",
                "--stats-out",
                "tree_stats.csv",
            ])
        });
        let _ = ensure_run("renewal", |_| strs(&["renewal-check"]));
        let _ = ensure_run("rate", |_| {
            strs(&[
                "rate-check",
                "--theta-eff",
                "1.5",
                "--tgrid",
                "2,4,6,8",
                "--m",
                "10000000",
            ])
        });
        let _ = ensure_run("duality", |_| strs(&["selftest", "--duality"]));
        let _ = v_run();
        for (name, eps) in [("tags_1e2", "0.01"), ("tags_1e3", "0.001")] {
            let _ = ensure_run(name, |_| {
                strs(&[
                    "simulate-tags",
                    "--q",
                    "2",
                    "--epsilon",
                    eps,
                    "--replicates",
                    "100000",
                    "--out",
                    "tags.csv",
                ])
            });
        }
        let _ = ensure_run("lln", |base| {
            vec![
                "lln".to_string(),
                "--config".to_string(),
                base.join("lln_config.json").display().to_string(),
            ]
        });
        let _ = clt_run();
        let _ = ensure_run("selftest", |_| strs(&["selftest"]));
    }

    let reg = registry().lock().unwrap_or_else(|e| e.into_inner());
    let mut compared = 0usize;
    for (name, args) in &reg.runs {
        let dir_a = reg.base.join("a").join(name);
        let dir_b = reg.base.join("b").join(name);
        std::fs::create_dir_all(&dir_b).unwrap();
        exec(args, &dir_b, "1");
        for entry in std::fs::read_dir(&dir_a).unwrap() {
            let path_a = entry.unwrap().path();
            let file = path_a.file_name().unwrap();
            let path_b = dir_b.join(file);
            let a = std::fs::read(&path_a).unwrap();
            let b = std::fs::read(&path_b).unwrap_or_else(|e| {
                panic!("missing rerun artifact {}: {e}", path_b.display())
            });
            assert_eq!(
                a,
                b,
                "artifact {} differs between 2-thread and 1-thread runs of '{name}'",
                file.to_string_lossy()
            );
            compared += 1;
        }
    }
    drop(reg);
    announce(
        &format!("11 determinism ({compared} artifacts byte-identical across worker counts)"),
        compared > 10,
    );
}

#[test]
fn criterion_12_combinatorics() {
    // end to end: the selftest includes the brute-force enumeration match
    let dir = ensure_run("selftest", |_| strs(&["selftest"]));
    let rep = report(&dir, "selftest_report.json");
    let cli_ok = rep["pass"].as_bool().unwrap() && rep["checks_failed"].as_u64().unwrap() == 0;

    // independent in-process spot check of the exact values
    let lib_ok = fragstat_core::limits::k1(8).unwrap() == 109_600
        && fragstat_core::limits::pairing_count(8).unwrap() == 105
        && fragstat_core::limits::enumerate_pairings(6).unwrap().len() == 15;
    announce(
        "12 combinatorics (K1 and pairing counts match brute force for q <= 8)",
        cli_ok && lib_ok,
    );
}
