use std::path::Path;
use std::process::{Command, Output};

use opfid::rmt::{sample_levels, EnsembleKind, EnsembleSpec};
use rand::{Rng, SeedableRng};

fn opfid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opfid"))
        .args(args)
        .env_remove("OPFID_CACHE")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_levels(path: &Path, levels: &[f64]) {
    let mut s = String::from("energy\n");
    for e in levels {
        s.push_str(&format!("{e:.17e}\n"));
    }
    std::fs::write(path, s).unwrap();
}

fn printed_entropy(o: &Output) -> f64 {
    let out = stdout(o);
    out.split("relative_entropy=")
        .nth(1)
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| panic!("no entropy in {out:?}"))
}

#[test]
fn sweep_without_out_is_usage_error() {
    let o = opfid(&["dicke-sweep", "--n-atoms", "2", "--boson-cutoff", "8"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn tiny_sweep_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let plot = dir.path().join("sweep.svg");
    let o = opfid(&[
        "dicke-sweep", "--n-atoms", "2", "--boson-cutoff", "8", "--steps", "3",
        "--times", "1,10", "--beta", "0", "--beta", "inf", "--normalize",
        "--out", out.to_str().unwrap(), "--plot", plot.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lambda,t,beta,chi1,chi1_normalized,chi2,dim,sector,status"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 2 * 2);
    assert!(rows.iter().any(|r| r.split(',').nth(2) == Some("inf")));
    assert!(std::fs::read_to_string(&plot).unwrap().contains("<polyline"));
    assert!(stdout(&o).contains("wrote 12 rows"));
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 2);
}

#[test]
fn sweep_cache_is_populated_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    std::fs::create_dir(&cache).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = opfid(&[
            "dicke-sweep", "--n-atoms", "2", "--boson-cutoff", "6", "--steps", "2",
            "--times", "5", "--out", out.to_str().unwrap(), "--cache", cache.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        std::fs::read(out).unwrap()
    };
    let first = run("a.csv");
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 4);
    assert_eq!(run("b.csv"), first);
}

#[test]
fn bad_beta_is_usage_error() {
    let o = opfid(&["dicke-sweep", "--beta", "-1", "--out", "/dev/null", "--steps", "2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn equally_spaced_levels_far_from_wigner() {
    let dir = tempfile::tempdir().unwrap();
    let levels: Vec<f64> = (0..400).map(|k| k as f64).collect();
    let input = dir.path().join("levels.csv");
    write_levels(&input, &levels);
    let out = dir.path().join("hist.csv");
    let o = opfid(&["spacing-stats", "--levels", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(printed_entropy(&o) > 1.0);
    let hist = std::fs::read_to_string(out).unwrap();
    assert_eq!(hist.lines().next().unwrap(), "s_lo,s_hi,density,reference_density");
    assert_eq!(hist.lines().count(), 51);
}

#[test]
fn goe_levels_close_to_wigner() {
    let dir = tempfile::tempdir().unwrap();
    let spec = EnsembleSpec::new(EnsembleKind::Goe, 2100, 1.0, 5).unwrap();
    let input = dir.path().join("goe.csv");
    write_levels(&input, &sample_levels(&spec, 0).unwrap());
    let out = dir.path().join("hist.csv");
    let o = opfid(&["spacing-stats", "--levels", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = printed_entropy(&o);
    assert!(s < 0.1, "relative entropy {s}");
}

#[test]
fn poisson_levels_close_to_poisson_reference() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut levels: Vec<f64> = (0..2100).map(|_| rng.random::<f64>() * 2100.0).collect();
    levels.sort_by(f64::total_cmp);
    let input = dir.path().join("poisson.csv");
    write_levels(&input, &levels);
    let out = dir.path().join("hist.csv");
    let o = opfid(&[
        "spacing-stats", "--levels", input.to_str().unwrap(), "--reference", "poisson",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let s = printed_entropy(&o);
    assert!(s < 0.05, "relative entropy {s}");
}

#[test]
fn too_few_levels_is_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("few.csv");
    write_levels(&input, &(0..15).map(|k| k as f64).collect::<Vec<_>>());
    let o = opfid(&["spacing-stats", "--levels", input.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn dicke_spacing_stats_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hist.csv");
    let o = opfid(&["spacing-stats", "--dicke", "4,30,0.8,full", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(printed_entropy(&o).is_finite());
}

#[test]
fn verify_average_passes() {
    let o = opfid(&["rmt", "verify-average", "--dim", "32", "--samples", "500", "--t", "1,5,20"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("z = ").count(), 6);
}

#[test]
fn conjecture_rejects_single_sample() {
    let o = opfid(&["rmt", "conjecture", "--samples", "1", "--out", "/dev/null"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn conjecture_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = opfid(&[
            "rmt", "conjecture", "--ensemble", "poisson", "--dim", "60", "--samples", "8",
            "--times", "10,50", "--seed", "4", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    assert!(a.starts_with("ensemble,dim,t,n_samples,mean,stderr,seed\n"));
    assert_eq!(a.lines().count(), 3);
}

#[test]
fn fidelity_check_random_pair() {
    let o = opfid(&["fidelity-check", "--dim", "30", "--t", "3", "--dlambda", "1e-3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let ratio: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("ratio = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((6.0..=10.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn fidelity_check_zero_dlambda_and_zero_perturbation() {
    assert_eq!(code(&opfid(&["fidelity-check", "--dlambda", "0"])), 2);
    assert_eq!(code(&opfid(&["fidelity-check", "--dim", "12", "--zero-perturbation"])), 0);
}

#[test]
fn fidelity_check_dicke() {
    let o = opfid(&["fidelity-check", "--dicke", "4,16,0.3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}
