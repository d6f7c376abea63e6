//! End-to-end checks of the command-line interface: exit codes, dump
//! caching, query answers, diffing, generation, interpretation, and the
//! bench CSV shape.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pta() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pta"))
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, content).expect("write");
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

const ALLOC_COPY: &str = "func @main() {
entry:
  %p = alloc A
  %q = copy %p
  ret
}
";

const ID_FUNC: &str = "func @main() {
entry:
  %a = alloc A
  %b = alloc B
  %x = call @id(%a)
  %y = call @id(%b)
  ret
}
func @id(%p) {
entry:
  ret %p
}
";

/// Two stores through the same pointer: unification merges what inclusion
/// keeps apart, so the unification dump is a strict superset.
const MERGED: &str = "func @main() {
entry:
  %a = alloc A
  %b = alloc B
  %p = alloc P
  store %a, %p
  store %b, %p
  %x = load %p
  ret
}
";

#[test]
fn analyze_answers_queries_and_writes_the_dump() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "m.pir", ALLOC_COPY);
    let q = write(dir.path(), "q.txt", "PTS %q\nALIAS %p %q\n");
    let dump = dir.path().join("d.txt");

    let out = pta()
        .arg("analyze")
        .args([src.as_os_str(), "--analysis".as_ref(), "fici".as_ref()])
        .arg("--queries")
        .arg(&q)
        .arg("--dump")
        .arg(&dump)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        stdout(&out),
        "PTS %q => {alloc:main.entry.0#0}\nALIAS %p %q => yes\n"
    );
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(text.contains("%main.q = {alloc:main.entry.0#0}"), "{text}");
    assert!(text.contains("analysis = fici"));
}

#[test]
fn rerunning_reuses_the_dump() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "m.pir", ALLOC_COPY);
    let dump = dir.path().join("d.txt");

    let run = || {
        pta()
            .arg("analyze")
            .args([src.as_os_str(), "--analysis".as_ref(), "fici".as_ref()])
            .arg("--dump")
            .arg(&dump)
            .output()
            .unwrap()
    };
    let first = run();
    assert_eq!(first.status.code(), Some(0));
    let bytes = std::fs::read(&dump).unwrap();

    let second = run();
    assert_eq!(second.status.code(), Some(0));
    assert!(stderr(&second).contains("reused"), "{}", stderr(&second));
    assert_eq!(std::fs::read(&dump).unwrap(), bytes, "byte-identical after reuse");

    // A changed module invalidates the header and the dump is rewritten.
    write(dir.path(), "m.pir", MERGED);
    let third = run();
    assert_eq!(third.status.code(), Some(0));
    assert!(!stderr(&third).contains("reused"));
    assert_ne!(std::fs::read(&dump).unwrap(), bytes);
}

#[test]
fn invalid_flag_combinations_fail_without_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "m.pir", ALLOC_COPY);

    let cases: &[&[&str]] = &[
        &["--analysis", "steens", "--solver", "wave"],
        &["--analysis", "fs", "--max-props", "10"],
        &["--analysis", "kcfa"],
        &["--analysis", "kcfa", "--k", "4"],
        &["--analysis", "fscs", "--k", "3"],
        &["--analysis", "fici", "--k", "1"],
    ];
    for (i, extra) in cases.iter().enumerate() {
        let dump = dir.path().join(format!("d{i}.txt"));
        let out = pta()
            .arg("analyze")
            .arg(&src)
            .args(*extra)
            .arg("--dump")
            .arg(&dump)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(1), "case {i}: {}", stderr(&out));
        assert!(!dump.exists(), "case {i} wrote a dump despite failing");
    }

    let ok = pta()
        .arg("analyze")
        .arg(&src)
        .args(["--analysis", "fscs", "--k", "2"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
}

#[test]
fn gen_is_seed_reproducible_and_deterministic_mode_has_single_branches() {
    let a = pta().args(["gen", "--seed", "5"]).output().unwrap();
    let b = pta().args(["gen", "--seed", "5"]).output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b), "same seed, same bytes");
    let c = pta().args(["gen", "--seed", "6"]).output().unwrap();
    assert_ne!(stdout(&a), stdout(&c), "different seed, different program");

    let d = pta().args(["gen", "--seed", "5", "--deterministic"]).output().unwrap();
    let m = pta::ir::parse_module(&stdout(&d)).expect("generated output parses");
    for i in m.instrs() {
        if let pta::ir::InstrKind::Br { targets } = &i.kind {
            assert_eq!(targets.len(), 1, "deterministic mode emitted a choice");
        }
    }
}

#[test]
fn interpret_reports_facts_and_rejects_nondeterminism() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "m.pir", ALLOC_COPY);
    let out = pta().arg("interpret").arg(&src).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("i1.out %main.q -> alloc:main.entry.0#0 (inst 1)"), "{text}");
    assert!(text.contains("Returned after"), "{text}");

    let nd = write(
        dir.path(),
        "nd.pir",
        "func @main() {\nentry:\n  br l, r\nl:\n  ret\nr:\n  ret\n}\n",
    );
    let out = pta().arg("interpret").arg(&nd).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nondeterministic"), "{}", stderr(&out));
}

#[test]
fn diff_detects_equality_and_subset_order() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "m.pir", MERGED);
    let d_fici = dir.path().join("fici.txt");
    let d_steens = dir.path().join("steens.txt");
    for (analysis, dump) in [("fici", &d_fici), ("steens", &d_steens)] {
        let out = pta()
            .arg("analyze")
            .args([src.as_os_str(), "--analysis".as_ref(), analysis.as_ref()])
            .arg("--dump")
            .arg(dump)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }

    let eq = pta().args(["diff"]).args([&d_fici, &d_fici]).output().unwrap();
    assert_eq!(eq.status.code(), Some(0));
    assert_eq!(stdout(&eq), "clean\n");

    // Inclusion refines unification, so subset holds one way round only.
    let fwd = pta()
        .args(["diff"])
        .args([&d_fici, &d_steens])
        .args(["--mode", "subset"])
        .output()
        .unwrap();
    assert_eq!(fwd.status.code(), Some(0), "{}", stdout(&fwd));

    let rev = pta()
        .args(["diff"])
        .args([&d_steens, &d_fici])
        .args(["--mode", "subset"])
        .output()
        .unwrap();
    assert_eq!(rev.status.code(), Some(1));
    assert!(stdout(&rev).contains("mismatch"), "{}", stdout(&rev));
}

#[test]
fn resource_caps_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "m.pir", MERGED);
    let out = pta()
        .arg("analyze")
        .arg(&src)
        .args(["--analysis", "fici", "--max-props", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("resource cap"), "{}", stderr(&out));
}

#[test]
fn bench_emits_one_row_per_program_config_pair() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..2u64 {
        let text = pta::generate::generate_program(&pta::generate::GenConfig {
            seed,
            ..Default::default()
        });
        write(dir.path(), &format!("p{seed}.pir"), &text);
    }
    let out = pta()
        .arg("bench")
        .arg(dir.path())
        .args(["--runs", "2", "--configs", "naive,wave"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("program,config,propagations,millis,speedup_vs_naive"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 2, "#programs x #configs rows:\n{text}");
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 5, "{row}");
        cols[2].parse::<u64>().expect("propagation count");
        cols[3].parse::<f64>().expect("millis");
        cols[4].parse::<f64>().expect("ratio");
    }
}

#[test]
fn context_sensitivity_splits_the_id_function_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "m.pir", ID_FUNC);
    let q = write(dir.path(), "q.txt", "PTS %x\nPTS %y\n");

    let fscs = pta()
        .arg("analyze")
        .args([src.as_os_str(), "--analysis".as_ref(), "fscs".as_ref()])
        .args(["--k", "2"])
        .arg("--queries")
        .arg(&q)
        .output()
        .unwrap();
    assert_eq!(fscs.status.code(), Some(0), "{}", stderr(&fscs));
    assert_eq!(
        stdout(&fscs),
        "PTS %x => {alloc:main.entry.0#0}\nPTS %y => {alloc:main.entry.1#0}\n"
    );

    let fici = pta()
        .arg("analyze")
        .args([src.as_os_str(), "--analysis".as_ref(), "fici".as_ref()])
        .arg("--queries")
        .arg(&q)
        .output()
        .unwrap();
    assert_eq!(
        stdout(&fici),
        "PTS %x => {alloc:main.entry.0#0, alloc:main.entry.1#0}\n\
         PTS %y => {alloc:main.entry.0#0, alloc:main.entry.1#0}\n"
    );
}
