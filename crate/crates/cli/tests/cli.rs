use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use altnas::controller::BestGenomeDocument;
use altnas::cost::{device_budget, CostReport, DeviceProfile};
use altnas::search_space::parse_space;

const ALTNAS: &str = env!("CARGO_BIN_EXE_altnas");
const SYNTH: &str = env!("CARGO_BIN_EXE_altnas-synthetic-evaluator");

fn space(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../spaces").join(name)
}

fn altnas(args: &[&str]) -> Output {
    Command::new(ALTNAS).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(out: Output) -> Output {
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ssd_search(out: &Path, extra: &[&str]) -> Output {
    let sp = space("ssd_tiny.json");
    let mut args = vec![
        "search",
        "--space",
        s(&sp),
        "--evaluator",
        "synthetic:42",
        "--seed",
        "7",
        "--budget-device",
        "max78000",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    altnas(&args)
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn search_produces_a_feasible_best_genome() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run1");
    ok(ssd_search(&run, &[]));
    for f in ["config.json", "history.csv", "checkpoint.json", "best_genome.json", "convergence.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let doc: BestGenomeDocument = serde_json::from_str(&read(run.join("best_genome.json"))).unwrap();
    let sp = parse_space(&read(space("ssd_tiny.json"))).unwrap();
    let budget = device_budget(&DeviceProfile::max78000());
    assert!(budget.admits(&sp, &doc.best.genome).unwrap());
    assert_eq!(doc.space_hash, sp.space_hash());
    // 30 generations plus the header.
    assert_eq!(read(run.join("history.csv")).lines().count(), 31);
}

#[test]
fn non_empty_run_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("keep.txt"), "x").unwrap();
    let out = ssd_search(dir.path(), &[]);
    assert_eq!(code(&out), 1);
    assert_eq!(read(dir.path().join("keep.txt")), "x");
    assert!(!dir.path().join("config.json").exists());
}

#[test]
fn history_is_reproducible_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(ssd_search(&a, &[]));
    ok(ssd_search(&b, &[]));
    ok(ssd_search(&c, &["--workers", "4"]));
    let ha = std::fs::read(a.join("history.csv")).unwrap();
    assert_eq!(ha, std::fs::read(b.join("history.csv")).unwrap());
    assert_eq!(ha, std::fs::read(c.join("history.csv")).unwrap());
    assert_eq!(read(a.join("best_genome.json")), read(c.join("best_genome.json")));
}

#[test]
fn stop_and_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    ok(ssd_search(&full, &[]));
    ok(ssd_search(&part, &["--stop-after", "8"]));
    assert!(!part.join("best_genome.json").exists());
    assert_eq!(read(part.join("history.csv")).lines().count(), 9);
    // A second interruption mid-phase, then completion with another worker count.
    ok(altnas(&["resume", "--run", s(&part), "--stop-after", "9"]));
    ok(altnas(&["resume", "--run", s(&part), "--workers", "4"]));
    for f in ["history.csv", "best_genome.json", "convergence.json", "checkpoint.json"] {
        assert_eq!(read(full.join(f)), read(part.join(f)), "{f} differs");
    }

    // Completed: nothing changes.
    let before = read(part.join("checkpoint.json"));
    let again = ok(altnas(&["resume", "--run", s(&part)]));
    assert!(String::from_utf8_lossy(&again.stderr).contains("already complete"));
    assert_eq!(before, read(part.join("checkpoint.json")));
}

#[test]
fn resume_refuses_edited_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(ssd_search(&run, &["--stop-after", "3"]));

    let config = read(run.join("config.json"));
    std::fs::write(run.join("config.json"), config.replace("\"seed\": 7", "\"seed\": 8")).unwrap();
    let out = altnas(&["resume", "--run", s(&run)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest"));
    std::fs::write(run.join("config.json"), &config).unwrap();

    // Point the frozen config at a copy of the space, then change the copy.
    let copy = dir.path().join("space.json");
    std::fs::copy(space("ssd_tiny.json"), &copy).unwrap();
    let frozen: serde_json::Value = serde_json::from_str(&config).unwrap();
    let mut moved = frozen.clone();
    moved["space"] = serde_json::Value::String(s(&copy).to_string());
    std::fs::write(run.join("config.json"), moved.to_string()).unwrap();
    ok(altnas(&["resume", "--run", s(&run), "--stop-after", "1"]));
    std::fs::write(&copy, read(copy.clone()).replace("[24, 48]", "[24, 40]")).unwrap();
    let out = altnas(&["resume", "--run", s(&run)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing"));

    let missing = altnas(&["resume", "--run", s(dir.path())]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"space": {:?}, "evaluator": "synthetic:1", "seed": 5, "population": 8,
                "generations": 6, "generations_per_phase": 3}}"#,
            s(&space("tiny.json"))
        ),
    )
    .unwrap();
    let run = dir.path().join("run");
    ok(altnas(&["search", "--config", s(&cfg), "--seed", "9", "--out", s(&run)]));
    let frozen: serde_json::Value = serde_json::from_str(&read(run.join("config.json"))).unwrap();
    assert_eq!(frozen["schedule"]["seed"], 9);
    assert_eq!(frozen["evolution"]["population_size"], 8);
    assert_eq!(frozen["evaluator"], "synthetic:1");

    std::fs::write(&cfg, r#"{"sead": 5}"#).unwrap();
    let bad = altnas(&["search", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&bad), 1);
}

const UNIT_SPACE: &str = r#"{"version":1,"input":{"channels":1,"hw":[1,1]},"modules":{
    "backbone":{"axes":[{"name":"s0.width","choices":[1]},{"name":"s0.kernel","choices":[1]}],
        "skeleton":[{"stage":0,"hw":[1,1],"kind":"conv","in_link":"input"}]}}}"#;

#[test]
fn estimate_reports_cost_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let unit = dir.path().join("unit.json");
    std::fs::write(&unit, UNIT_SPACE).unwrap();
    let out = ok(altnas(&[
        "estimate",
        "--space",
        s(&unit),
        "--genome",
        r#"{"backbone":[0,0]}"#,
        "--json",
    ]));
    let report: CostReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((report.params, report.macs, report.weight_bytes), (2, 1, 8));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"]["violations"], serde_json::json!([]));

    // Widest choices everywhere: far over the 32 KB data memory.
    let ssd = space("ssd_tiny.json");
    let big = altnas(&[
        "estimate",
        "--space",
        s(&ssd),
        "--genome",
        r#"{"backbone":[1,1,2,1,2,2,1,1,1],"head":[2,1,1,1,1]}"#,
        "--budget-device",
        "max78000",
    ]);
    assert_eq!(code(&big), 2);
    assert!(String::from_utf8_lossy(&big.stdout).contains("verdict                fail"));

    let bad = altnas(&["estimate", "--space", s(&unit), "--genome", r#"{"backbone":[0]}"#]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn stats_writes_rows_per_condition() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run1");
    ok(ssd_search(&run, &[]));
    let sp = space("ssd_tiny.json");
    let joint = dir.path().join("joint");
    ok(altnas(&[
        "stats", "--space", s(&sp), "--evaluator", "synthetic:42", "--seed", "3",
        "--condition", "joint", "--n", "100", "--budget-device", "max78000", "--out", s(&joint),
    ]));
    let rows = read(joint.join("stats.csv"));
    assert_eq!(rows.lines().count(), 2);
    assert!(rows.lines().nth(1).unwrap().starts_with("joint,100,"));
    assert_eq!(read(joint.join("samples.csv")).lines().count(), 101);
    assert!(!joint.join("comparison.csv").exists());

    let cond = dir.path().join("cond");
    let best = run.join("best_genome.json");
    ok(altnas(&[
        "stats", "--space", s(&sp), "--evaluator", "synthetic:42", "--seed", "3",
        "--fix-from", s(&best), "--module", "head", "--budget-device", "max78000",
        "--out", s(&cond),
    ]));
    let rows = read(cond.join("stats.csv"));
    let lines: Vec<&str> = rows.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("\"head|backbone="));
    // Same seed: the joint row is reproduced.
    assert_eq!(lines[1], read(joint.join("stats.csv")).lines().nth(1).unwrap());
    assert_eq!(read(cond.join("comparison.csv")).lines().count(), 3);

    let one = altnas(&["stats", "--space", s(&sp), "--evaluator", "synthetic:42", "--n", "1"]);
    assert_eq!(code(&one), 1);
    let nofix = altnas(&[
        "stats", "--space", s(&sp), "--evaluator", "synthetic:42", "--condition", "conditioned",
    ]);
    assert_eq!(code(&nofix), 1);
}

#[test]
fn oracle_command() {
    let tiny = space("tiny.json");
    let out = ok(altnas(&["oracle", "--space", s(&tiny), "--evaluator", "synthetic:42"]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // Brute force over the 16 genomes, frozen.
    assert_eq!(v["genome"], serde_json::json!({"backbone":[1,0],"head":[0,0]}));
    assert_eq!(v["fitness"].as_f64().unwrap(), 0.7285458864997457);

    let ssd = space("ssd_tiny.json");
    let over = altnas(&["oracle", "--space", s(&ssd), "--evaluator", "synthetic:42", "--cap", "1000"]);
    assert_eq!(code(&over), 1);
    let none = altnas(&["oracle", "--space", s(&tiny), "--evaluator", "synthetic:42", "--budget-bytes", "8"]);
    assert_eq!(code(&none), 2);
}

#[test]
fn extract_best_verifies_fitness() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(ssd_search(&run, &[]));
    let out = ok(altnas(&["extract-best", "--run", s(&run), "--verify"]));
    assert_eq!(String::from_utf8_lossy(&out.stdout), read(run.join("best_genome.json")));

    // A checkpoint whose recorded fitness was altered no longer verifies.
    let mut ck: serde_json::Value = serde_json::from_str(&read(run.join("checkpoint.json"))).unwrap();
    ck["best"]["fitness"] = serde_json::json!(0.001);
    std::fs::write(run.join("checkpoint.json"), ck.to_string()).unwrap();
    assert_eq!(code(&altnas(&["extract-best", "--run", s(&run), "--verify"])), 3);
}

fn external(mode: &str) -> String {
    format!(
        "external:{} --space {} --seed 42 --mode {mode}",
        shell_quote(SYNTH),
        shell_quote(s(&space("tiny.json")))
    )
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn tiny_search(evaluator: &str, out: &Path) -> Output {
    altnas(&[
        "search", "--space", s(&space("tiny.json")), "--evaluator", evaluator, "--seed", "3",
        "--population", "8", "--generations", "10", "--out", s(out),
    ])
}

#[test]
fn external_evaluator_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let ext = dir.path().join("ext");
    let inproc = dir.path().join("in");
    ok(tiny_search(&external("ok"), &ext));
    ok(tiny_search("synthetic:42", &inproc));
    let a: BestGenomeDocument = serde_json::from_str(&read(ext.join("best_genome.json"))).unwrap();
    let b: BestGenomeDocument = serde_json::from_str(&read(inproc.join("best_genome.json"))).unwrap();
    assert_eq!(a.best.genome, b.best.genome);
    assert_eq!(a.best.fitness, b.best.fitness);
    assert_eq!(read(ext.join("history.csv")), read(inproc.join("history.csv")));
}

#[test]
fn evaluator_faults_exit_with_code_3() {
    for mode in ["bad-hash", "garbage", "out-of-range", "exit-early"] {
        let dir = tempfile::tempdir().unwrap();
        let out = tiny_search(&external(mode), &dir.path().join("run"));
        assert_eq!(code(&out), 3, "{mode}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let dir = tempfile::tempdir().unwrap();
    let missing = tiny_search("external:/nonexistent/evaluator", &dir.path().join("run"));
    assert_eq!(code(&missing), 3);
}

#[test]
fn usage_errors_exit_with_code_1_and_help_documents_protocol() {
    assert_eq!(code(&altnas(&["bogus"])), 1);
    assert_eq!(code(&altnas(&["search", "--out", "x"])), 1);
    let help = ok(altnas(&["--help"]));
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("protocol version 1"));
    assert!(text.contains("Exit codes"));
}
