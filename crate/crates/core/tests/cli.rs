//! End-to-end runs of the `slicemarket` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slicemarket::format::ResultDocument;

const BIN: &str = env!("CARGO_BIN_EXE_slicemarket");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SLICEMARKET_CONFIG_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        r#"
[deployment]
provider_count = 4
seed = 5
large_cells = { count = 1, capacity = 40.0 }
small_cells = { count = 2, capacity = 20.0 }
cpu_nodes = { count = 2, cores = 32.0, ram = 128.0 }
ram_nodes = { count = 1, cores = 16.0, ram = 256.0 }

[experiment]
instances = 6
"#,
    )
    .unwrap();
    path
}

#[test]
fn experiment_tables_have_pinned_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("results");
    let o = run(&["experiment", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(
        header(&out.join("instances.csv")),
        "instance_id,seed,mechanism,status,social_welfare,nsw_log,eta,zero_utility_fraction,\
         kkt_pass,me_pass,sharing_incentive_pass,kkt_max_abs,me_max_residual,utilities"
    );
    assert_eq!(header(&out.join("utilities.csv")), "instance_id,mechanism,provider,utility");
    assert_eq!(
        header(&out.join("summary.csv")),
        "mechanism,runs,converged,mean_social_welfare,min_social_welfare,mean_nsw_log,\
         zero_nsw_fraction,mean_zero_utility_fraction,mean_eta,min_eta"
    );
    assert_eq!(
        header(&out.join("certificates.csv")),
        "certificate,evaluated,passed,pass_rate,worst_residual"
    );
    assert!(out.join("summary.toml").exists());

    // 6 instances x 4 mechanisms, plus the header
    let rows = fs::read_to_string(out.join("instances.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 6 * 4);
    let utilities = fs::read_to_string(out.join("utilities.csv")).unwrap().lines().count();
    assert_eq!(utilities, 1 + 6 * 4 * 4);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let mut tables = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("w{workers}"));
        let o = run(&[
            "experiment",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "99",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        tables.push(
            ["instances.csv", "utilities.csv", "summary.csv", "certificates.csv"]
                .map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let inst = dir.path().join("inst.toml");
    let res = dir.path().join("res.toml");
    let o = run(&["generate", "--config", config.to_str().unwrap(), "--seed", "3", "--out", inst.to_str().unwrap()]);
    assert!(o.status.success());

    let o = run(&["solve", inst.to_str().unwrap(), "--certificates", "--out", res.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: ResultDocument = toml::from_str(&fs::read_to_string(&res).unwrap()).unwrap();
    assert_eq!(doc.utilities.len(), 4);
    assert!(doc.prices.is_some() && doc.solver.is_some());
    let names: Vec<_> = doc.certificates.iter().map(|c| c.name.as_str()).collect();
    assert!(names.contains(&"kkt") && names.contains(&"sharing-incentive"));
    assert!(doc.certificates.iter().filter(|c| c.name != "envy-freeness").all(|c| c.passed()));

    // a second generation with the same seed is byte-identical
    let again = dir.path().join("again.toml");
    run(&["generate", "--config", config.to_str().unwrap(), "--seed", "3", "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(&inst).unwrap(), fs::read(&again).unwrap());

    let o = run(&["solve", inst.to_str().unwrap(), "--mechanism", "PS"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("mechanism PS"));
}

#[test]
fn config_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = Command::new(BIN)
        .args(["sweep", "--config", "budget-sweep.toml", "--mechanism", "ME", "--out", out.to_str().unwrap()])
        .env("SLICEMARKET_CONFIG_DIR", configs())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&out),
        "kind,point,value,nodes,cells,mechanism,status,provider,template,budget,utility,social_welfare"
    );
    // nine budget points, three providers
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 9 * 3);
}

#[test]
fn exit_codes_separate_failure_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let code = |o: Output| o.status.code();

    assert_eq!(code(run(&["frobnicate"])), Some(2));

    let missing = dir.path().join("missing.toml");
    assert_eq!(code(run(&["solve", missing.to_str().unwrap()])), Some(5));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[experiment]\ninstances = 3\ntypo = 1\n").unwrap();
    assert_eq!(code(run(&["experiment", "--config", bad.to_str().unwrap()])), Some(3));

    let config = small_config(dir.path());
    let inst = dir.path().join("inst.toml");
    run(&["generate", "--config", config.to_str().unwrap(), "--out", inst.to_str().unwrap()]);
    assert_eq!(code(run(&["solve", inst.to_str().unwrap(), "--kkt-tol=-1"])), Some(3));
    assert_eq!(code(run(&["solve", inst.to_str().unwrap(), "--kkt-tol=1e-30"])), Some(4));

    let blocked = dir.path().join("file");
    fs::write(&blocked, "").unwrap();
    let o = run(&[
        "experiment",
        "--config",
        config.to_str().unwrap(),
        "--out",
        blocked.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(code(o), Some(5));
}
