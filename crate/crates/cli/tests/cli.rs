use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/golden")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retimer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn base_timetable_of_golden_instance_validates() {
    let out = ok(&["validate", "--instance", p(&golden("cross.json")), "--base"]);
    assert!(out.contains("0 violations"), "{out}");
}

#[test]
fn violations_exit_with_one() {
    // the base timetable ignores the perturbation
    let o = run(&[
        "validate",
        "--instance",
        p(&golden("overtake.json")),
        "--base",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("1 violations"), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["decode", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(
        run(&["validate", "--instance", "x.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn domain_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = run(&["decode", "--instance", p(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    // nine trains are too many for the permutation oracle
    let big = dir.path().join("big.json");
    ok(&["generate", "--trains", "9", "--out", p(&big)]);
    let o = run(&["oracle", "--instance", p(&big), "--skip-exact"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("limited to 8"));
}

#[test]
fn evolve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    ok(&[
        "generate",
        "--trains",
        "12",
        "--nodes",
        "8",
        "--seed",
        "4",
        "--out",
        p(&inst),
    ]);
    let csvs: Vec<String> = (0..3)
        .map(|k| {
            let csv = dir.path().join(format!("stats{k}.csv"));
            ok(&[
                "evolve",
                "--instance",
                p(&inst),
                "--seed",
                "1",
                "--generations",
                "15",
                "--stats-out",
                p(&csv),
            ]);
            std::fs::read_to_string(csv).unwrap()
        })
        .collect();
    assert!(csvs[0].starts_with("n,best,median,worst,infeasible_count,T,elapsed_ms\n"));
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[1], csvs[2]);
}

#[test]
fn generated_documents_and_lp_files_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut docs = Vec::new();
    let mut lps = Vec::new();
    for k in 0..3 {
        let inst = dir.path().join(format!("i{k}.json"));
        let lp = dir.path().join(format!("m{k}.lp"));
        ok(&[
            "generate",
            "--topology",
            "star",
            "--nodes",
            "10",
            "--trains",
            "8",
            "--seed",
            "9",
            "--out",
            p(&inst),
        ]);
        ok(&["export-mip", "--instance", p(&inst), "--out", p(&lp)]);
        docs.push(std::fs::read(&inst).unwrap());
        lps.push(std::fs::read(&lp).unwrap());
    }
    assert!(docs.windows(2).all(|w| w[0] == w[1]));
    assert!(lps.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn decode_then_warm_start_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("p.json");
    ok(&[
        "perturb",
        "--instance",
        p(&golden("cross.json")),
        "--seed",
        "2",
        "--delay",
        "900",
        "--out",
        p(&inst),
    ]);
    let perm = dir.path().join("perm.txt");
    std::fs::write(&perm, "# reversed\n5\n4\n3\n2\n1\n0\n").unwrap();
    let sched = dir.path().join("s.json");
    let res = dir.path().join("r.json");
    let out = ok(&[
        "decode",
        "--instance",
        p(&inst),
        "--perm",
        p(&perm),
        "--out",
        p(&res),
        "--schedule-out",
        p(&sched),
    ]);
    assert!(out.contains("complete true"), "{out}");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&res).unwrap()).unwrap();
    assert_eq!(doc["complete"], serde_json::Value::Bool(true));
    assert!(
        ok(&["validate", "--instance", p(&inst), "--schedule", p(&sched)]).contains("0 violations")
    );

    let lp = dir.path().join("m.lp");
    let mst = dir.path().join("m.mst");
    ok(&[
        "export-mip",
        "--instance",
        p(&inst),
        "--out",
        p(&lp),
        "--warm-start",
        p(&sched),
        "--mst-out",
        p(&mst),
    ]);
    let fitness: i64 = out.split_whitespace().nth(1).unwrap().parse().unwrap();
    let start = std::fs::read_to_string(&mst).unwrap();
    assert!(
        start.starts_with(&format!("# objective {fitness}\n")),
        "{start}"
    );
}

#[test]
fn warm_start_from_unvalidated_schedule_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.json");
    std::fs::write(&sched, "{\"trains\": []}").unwrap();
    let o = run(&[
        "export-mip",
        "--instance",
        p(&golden("cross.json")),
        "--out",
        p(&dir.path().join("m.lp")),
        "--warm-start",
        p(&sched),
        "--mst-out",
        p(&dir.path().join("m.mst")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("m.mst").exists());
}

#[test]
fn oracle_reports_the_overtake_gap() {
    let out = ok(&["oracle", "--instance", p(&golden("overtake.json"))]);
    assert!(out.contains("fitness 1620"), "{out}");
    assert!(out.contains("exact optimum 1440"), "{out}");
    assert!(out.contains("gap 180"), "{out}");
}

#[test]
fn diagram_draws_both_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let exact = dir.path().join("x.json");
    ok(&[
        "oracle",
        "--instance",
        p(&golden("overtake.json")),
        "--schedule-out",
        p(&exact),
    ]);
    let svg = dir.path().join("d.svg");
    ok(&[
        "diagram",
        "--instance",
        p(&golden("overtake.json")),
        "--schedule",
        p(&exact),
        "--out",
        p(&svg),
    ]);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.contains("<svg"));
    assert_eq!(text.matches("<polyline").count(), 4);
    let o = run(&[
        "diagram",
        "--instance",
        p(&golden("overtake.json")),
        "--path",
        "0,2",
        "--out",
        p(&svg),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn random_perturbation_follows_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ok(&[
        "perturb",
        "--instance",
        p(&golden("cross.json")),
        "--seed",
        "11",
        "--out",
        p(&a),
    ]);
    ok(&[
        "perturb",
        "--instance",
        p(&golden("cross.json")),
        "--seed",
        "11",
        "--out",
        p(&b),
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let cleared = dir.path().join("c.json");
    ok(&[
        "perturb",
        "--instance",
        p(&a),
        "--clear",
        "--out",
        p(&cleared),
    ]);
    assert_eq!(
        std::fs::read(&cleared).unwrap(),
        std::fs::read(golden("cross.json")).unwrap()
    );
}

#[test]
fn evolve_writes_checkpoint_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("p.json");
    ok(&[
        "perturb",
        "--instance",
        p(&golden("cross.json")),
        "--seed",
        "3",
        "--out",
        p(&inst),
    ]);
    let ck = dir.path().join("ck.txt");
    let best = dir.path().join("best.txt");
    let sched = dir.path().join("s.json");
    ok(&[
        "evolve",
        "--instance",
        p(&inst),
        "--mu",
        "4",
        "--lambda",
        "8",
        "--generations",
        "5",
        "--checkpoint",
        p(&ck),
        "--best-out",
        p(&best),
        "--schedule-out",
        p(&sched),
    ]);
    assert_eq!(
        std::fs::read_to_string(&ck).unwrap(),
        std::fs::read_to_string(&best).unwrap()
    );
    assert!(
        ok(&["validate", "--instance", p(&inst), "--schedule", p(&sched)]).contains("0 violations")
    );
}

/// Lints an exported LP file with HiGHS when the `highspy` Python package is
/// installed; skipped (with a note) otherwise.
#[test]
fn exported_lp_parses_in_highs() {
    let probe = Command::new("python3")
        .args(["-c", "import highspy"])
        .output();
    if !probe.is_ok_and(|o| o.status.success()) {
        eprintln!("highspy not available; LP lint skipped");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("m.lp");
    ok(&[
        "export-mip",
        "--instance",
        p(&golden("overtake.json")),
        "--out",
        p(&lp),
    ]);
    let script = format!(
        "import highspy\nh = highspy.Highs()\nh.setOptionValue('output_flag', False)\n\
         assert h.readModel({:?}) == highspy.HighsStatus.kOk\nh.run()\n\
         print(round(h.getInfo().objective_function_value))\n",
        p(&lp)
    );
    let o = Command::new("python3")
        .args(["-c", &script])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // HiGHS solves the motif to the exact oracle value
    assert_eq!(stdout(&o).trim(), "1440");
}
