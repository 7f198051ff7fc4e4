use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use redsim::scenario_file::parse_scenario;

fn redsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redsim"))
        .args(args)
        .env_remove("REDSIM_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Short, small-population scenario so the binary tests stay quick.
fn quick_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("quick.scn");
    fs::write(
        &path,
        "[topology]\ngroups = 3@1500, 3@750, 3@375\nbottleneck_rate = 3000000\n\n[run]\nduration = 12\nwarmup = 2\n",
    )
    .unwrap();
    path
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn bundled_scenarios_parse_and_validate() {
    for (name, delay) in [("baseline_15ms.scn", 0.015), ("baseline_80ms.scn", 0.08)] {
        let text = fs::read_to_string(bundled(name)).unwrap();
        let f = parse_scenario(&text, "x").unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(f.scenario.bottleneck_delay, delay);
        assert_eq!(f.scenario.total_flows(), 60);
        assert_eq!(f.scenario.bottleneck_rate, 30e6);
    }
}

#[test]
fn run_with_bundled_scenario_writes_three_group_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = redsim(&[
        "run",
        bundled("baseline_15ms.scn").to_str().unwrap(),
        "--variant",
        "RED1",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.contains(",RED1,15ms,")));
    for f in ["summary.txt", "summary.csv", "manifest.scn"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn same_seed_twice_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = quick_scenario(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = redsim(&["run", scn.to_str().unwrap(), "--seed", "7", "-o", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
}

#[test]
fn manifest_rerun_reproduces_outputs_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = quick_scenario(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = redsim(&["run", scn.to_str().unwrap(), "--seed", "3", "--trace", "-o", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = a.join("manifest.scn");
    let o = redsim(&["run", manifest.to_str().unwrap(), "-o", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = read_dir_sorted(&a);
    assert!(files.iter().any(|(n, _)| n == "trace.csv"));
    assert_eq!(files, read_dir_sorted(&b));
}

#[test]
fn malformed_key_exits_nonzero_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = tmp.path().join("bad.scn");
    fs::write(&scn, "[red]\nvariant = RED2\nmin_threshold = 5\n").unwrap();
    let out = tmp.path().join("out");
    let o = redsim(&["run", scn.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("bad.scn:3:"), "{err}");
    assert!(err.contains("min_threshold"), "{err}");
    assert!(!out.exists());
}

#[test]
fn output_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = quick_scenario(tmp.path());
    let out = tmp.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_redsim"))
        .args(["run", scn.to_str().unwrap()])
        .env("REDSIM_OUTPUT_DIR", &out)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("metrics.csv").exists());
    assert!(!tmp.path().join("redsim-out").exists());
}

#[test]
fn sweep_is_deterministic_and_parallel_matches_serial() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = quick_scenario(tmp.path());
    let dirs: Vec<PathBuf> = ["p1", "p2", "s"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, serial) in dirs.iter().zip([false, false, true]) {
        let mut args = vec![
            "sweep",
            scn.to_str().unwrap(),
            "--variants",
            "RED1,RED5",
            "--delays-ms",
            "15,80",
            "--jobs",
            "2",
            "-o",
            dir.to_str().unwrap(),
        ];
        if serial {
            args.push("--serial");
        }
        let o = redsim(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let first = read_dir_sorted(&dirs[0]);
    assert_eq!(first, read_dir_sorted(&dirs[1]));
    assert_eq!(first, read_dir_sorted(&dirs[2]));
    let summary = String::from_utf8(first.iter().find(|(n, _)| n == "summary.csv").unwrap().1.clone()).unwrap();
    assert!(summary.starts_with("delay_profile,metric,group,RED1,RED5\n"));
    let cells = first.iter().filter(|(n, _)| n.starts_with("cells/") && n.ends_with(".csv")).count();
    assert_eq!(cells, 4);
}

#[test]
fn sweep_cell_file_reruns_as_that_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = quick_scenario(tmp.path());
    let sweep_dir = tmp.path().join("sweep");
    let o = redsim(&[
        "sweep",
        scn.to_str().unwrap(),
        "--variants",
        "RED4",
        "--delays-ms",
        "80",
        "--serial",
        "-o",
        sweep_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = tmp.path().join("run");
    let cell = sweep_dir.join("cells/RED4-80ms.scn");
    let o = redsim(&["run", cell.to_str().unwrap(), "-o", run_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(sweep_dir.join("cells/RED4-80ms.csv")).unwrap(),
        fs::read(run_dir.join("metrics.csv")).unwrap()
    );
}

#[test]
fn oracle_pattern_case_and_csv_export() {
    let tmp = tempfile::tempdir().unwrap();
    let o = redsim(&[
        "oracle",
        "--variant",
        "red5",
        "--pb",
        "0.1",
        "--sizes",
        "1500,750,375",
        "--samples",
        "0",
        "--csv",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("RED5 p_b=0.1 sizes=1500,750,375"), "{text}");
    assert!(text.contains("Monte-Carlo skipped"));
    let csv = fs::read_to_string(tmp.path().join("oracle_red5_pb0.1.csv")).unwrap();
    assert!(csv.starts_with("n,closed_form_mass,oracle_mass,empirical_mass\n1,0.1000"));
}

#[test]
fn oracle_defaults_pass_with_sampling() {
    let o = redsim(&["oracle", "--samples", "200000"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.ends_with(" ok")).count(), 12, "{text}");
}

#[test]
fn oracle_rejects_variants_without_a_law() {
    let o = redsim(&["oracle", "--variant", "red3", "--samples", "0"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no closed-form"));
}

#[test]
fn goodput_model_examples() {
    let o = redsim(&["goodput-model", "--mss", "1500", "--rtt", "0.1", "--p", "0.01", "--C", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("goodput_bound = 150000.000 bytes/s"));

    let o = redsim(&["goodput-model", "--fair", "1500:750", "--p1", "0.04"]);
    assert!(stdout(&o).contains("p2 = 0.0100000000"));

    let o = redsim(&["goodput-model", "--fair", "900:900", "--p1", "0.03"]);
    assert!(stdout(&o).contains("p2 = 0.0300000000"));
}

#[test]
fn goodput_model_rejects_nonpositive_arguments() {
    for args in [
        vec!["goodput-model", "--mss", "0", "--rtt", "0.1", "--p", "0.01"],
        vec!["goodput-model", "--mss", "1500", "--rtt", "-0.1", "--p", "0.01"],
        vec!["goodput-model", "--mss", "1500", "--rtt", "0.1", "--p", "0"],
        vec!["goodput-model", "--fair", "1500:0", "--p1", "0.04"],
        vec!["goodput-model"],
    ] {
        let o = redsim(&args);
        assert!(!o.status.success(), "{args:?}");
    }
}

#[test]
fn version_prints_the_tool_version() {
    let o = redsim(&["version"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), format!("redsim {}", env!("CARGO_PKG_VERSION")));
}
