use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lion_bench::{compare, run, Experiment, RunReport, Variant};

const SHORT: &str = "\
[run]
variant = Lion
duration_s = 6
warmup_s = 2
seed = 4
clients = 64

[workload]
kind = ycsb
partitions_per_node = 6
skew_factor = 0.8
cross_ratio = 1.0

[cluster]
nodes = 4
replica_max = 2

[planner]
interval_s = 1
";

fn lion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lion")).args(args).output().expect("binary runs")
}

fn run_cli(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = lion(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn load(dir: &Path) -> RunReport {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn two_pc_on_cross_partition_ycsb_is_all_two_pc() {
    let exp = Experiment::parse(SHORT).unwrap().with_variant(Variant::TwoPc);
    let r = run(&exp, false).unwrap().report;
    assert_eq!(r.path_mix.two_pc, 1.0);
    assert_eq!(r.path_mix.local(), 0.0);
    assert_eq!(r.activity.plan_rounds, 0);
    assert!(r.counts.reconciled);
    assert!(r.counts.committed > 0);
}

#[test]
fn same_config_and_seed_give_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.conf");
    fs::write(&cfg, SHORT).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_cli(&cfg, &a, &["--trace"]);
    run_cli(&cfg, &b, &["--trace"]);
    for f in ["report.json", "timeline.csv", "latency.csv", "trace.log"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // A different seed from the command line changes the run.
    let c = dir.path().join("c");
    run_cli(&cfg, &c, &["--seed", "5"]);
    assert!(!c.join("trace.log").exists());
    let (ra, rc) = (load(&a), load(&c));
    assert_eq!(rc.seed, 5);
    assert_ne!(ra.trace_hash, rc.trace_hash);
    assert_eq!(ra.workload, rc.workload);
}

#[test]
fn report_files_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::parse(SHORT).unwrap();
    let out = run(&exp, false).unwrap();
    out.write_to(dir.path()).unwrap();
    let r = load(dir.path());
    assert_eq!(r, out.report);
    assert_eq!(r.timeline.len(), 6);
    let timeline = fs::read_to_string(dir.path().join("timeline.csv")).unwrap();
    assert_eq!(timeline.lines().count(), 7);
    let sum: u64 = timeline.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(sum, r.timeline.iter().sum::<u64>());
    let latency = fs::read_to_string(dir.path().join("latency.csv")).unwrap();
    assert!(latency.starts_with("txn_id,status,path"));
    assert!(latency.lines().count() > 1);
    let mix = r.path_mix.single + r.path_mix.remastered + r.path_mix.two_pc;
    assert!((mix - 1.0).abs() < 1e-9);
    assert!((r.bytes_per_txn * (r.throughput * 4.0) - r.bytes_total as f64).abs() < 1e-6 * r.bytes_total as f64);
    assert!(r.latency.p50_us <= r.latency.p95_us && r.latency.p95_us <= r.latency.p99_us);
    assert!(r.shifts.is_empty() && r.mean_adaptation_s.is_none());
}

#[test]
fn comparing_a_run_with_itself_gives_unit_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.conf");
    fs::write(&cfg, SHORT).unwrap();
    let a = dir.path().join("a");
    run_cli(&cfg, &a, &[]);
    let out = dir.path().join("cmp");
    let o = lion(&["compare", "--out", out.to_str().unwrap(), a.to_str().unwrap(), a.join("report.json").to_str().unwrap()]);
    assert!(o.status.success());
    let c: lion_bench::Comparison = serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert!(c.workloads_match);
    for row in &c.rows {
        for r in [row.throughput_ratio, row.p50_ratio, row.p99_ratio, row.bytes_ratio] {
            assert_eq!(r, Some(1.0));
        }
    }
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn lion_beats_two_pc_and_mismatched_workloads_are_flagged() {
    let base = Experiment::parse(SHORT).unwrap();
    let two_pc = run(&base.with_variant(Variant::TwoPc), false).unwrap().report;
    let lion = run(&base, false).unwrap().report;
    let c = compare(&[two_pc.clone(), lion]).unwrap();
    assert!(c.rows[1].throughput_ratio.unwrap() > 1.0);
    assert!(c.workloads_match);

    let mut other = base.clone();
    other.workload.ycsb.skew_factor = 0.0;
    let uniform = run(&other, false).unwrap().report;
    let c = compare(&[two_pc.clone(), uniform]).unwrap();
    assert!(!c.workloads_match);
    assert!(!c.rows[0].workload_mismatch && c.rows[1].workload_mismatch);
    assert!(compare(&[two_pc]).is_err());
}

#[test]
fn bad_configs_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "[run]\nseed = 1\n\n[cluster]\nnodes = four\n").unwrap();
    let o = lion(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5"), "{err}");

    fs::write(&cfg, "[run]\nvariant = Lion(Q)\n").unwrap();
    let o = lion(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("2PC, Lion(R), Lion(RW), Lion(RB), Lion"), "{err}");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        Experiment::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 5);
}
