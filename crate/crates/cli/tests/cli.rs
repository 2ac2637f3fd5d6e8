//! End-to-end CLI checks driving the real binary: generation, splitting,
//! noise, training, evaluation, recognition, inspection, reporting, and
//! manifest replay.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qocr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qocr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qocr(args);
    assert!(
        out.status.success(),
        "qocr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("qocr_cli_tests").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_vocab(dir: &Path) -> PathBuf {
    let path = dir.join("vocab.txt");
    fs::write(&path, "a\nb\nc\nd\ne\n").unwrap();
    path
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let dir = workdir("pipeline");
    let vocab = write_vocab(&dir);
    let ds = dir.join("ds");

    let stdout = ok(&[
        "gen",
        "--random-words", "8",
        "--min-len", "2",
        "--max-len", "3",
        "--fonts", "2",
        "--vocab", &s(&vocab),
        "--seed", "3",
        "--out", &s(&ds),
    ]);
    assert!(stdout.contains("16 records"), "{stdout}");
    let labels = fs::read_to_string(ds.join("labels.tsv")).unwrap();
    assert!(labels.starts_with("AMFDS\t1\n"));
    assert!(ds.join("images.bin").exists());
    assert!(ds.join("manifest.json").exists());

    let sp = dir.join("split");
    ok(&["split", "--data", &s(&ds), "--seed", "1", "--out", &s(&sp)]);
    let split_text = fs::read_to_string(sp.join("split.tsv")).unwrap();
    assert_eq!(split_text.lines().count(), 16);

    let noised = dir.join("noised");
    ok(&[
        "noise",
        "--data", &s(&ds),
        "--sp-density", "0.1",
        "--speckle-var", "0.04",
        "--seed", "2",
        "--out", &s(&noised),
    ]);
    assert_eq!(
        fs::read_to_string(noised.join("labels.tsv")).unwrap(),
        labels,
        "noise preserves record geometry"
    );
    assert_ne!(
        fs::read(noised.join("images.bin")).unwrap(),
        fs::read(ds.join("images.bin")).unwrap()
    );

    let run = dir.join("run");
    let stdout = ok(&[
        "train",
        "--data", &s(&ds),
        "--config", "toy",
        "--vocab", &s(&vocab),
        "--seed", "1",
        "--batch", "4",
        "--iters", "8",
        "--out", &s(&run),
    ]);
    assert!(stdout.contains("trained 8 iterations"), "{stdout}");
    assert!(run.join("last.qocr").exists());
    let epochs = fs::read_to_string(run.join("epochs.csv")).unwrap();
    assert!(epochs.starts_with("epoch,end_iteration,mean_loss,val_crr,val_wrr"));
    assert!(epochs.lines().count() >= 2, "{epochs}");

    let ckpt = run.join("last.qocr");
    let evald = dir.join("eval");
    let stdout = ok(&[
        "eval",
        "--ckpt", &s(&ckpt),
        "--data", &s(&ds),
        "--split", "test",
        "--per-sample",
        "--out", &s(&evald),
    ]);
    assert!(stdout.contains("dataset,samples,"), "{stdout}");
    let eval_csv = fs::read_to_string(evald.join("eval.csv")).unwrap();
    assert!(eval_csv.lines().nth(1).unwrap().starts_with("test,"));
    assert!(evald.join("samples.csv").exists());

    // Unsplit evaluation over every record.
    let stdout = ok(&["eval", "--ckpt", &s(&ckpt), "--data", &s(&ds), "--split", "all"]);
    assert!(stdout.contains("all,16,"), "{stdout}");

    let stdout = ok(&[
        "recognize",
        "--ckpt", &s(&ckpt),
        "--data", &s(&ds),
        "--index", "0",
    ]);
    for c in stdout.trim().chars() {
        assert!("abcde".contains(c), "unexpected symbol {c:?}");
    }

    let insp = dir.join("inspect");
    ok(&[
        "inspect",
        "--ckpt", &s(&ckpt),
        "--data", &s(&ds),
        "--index", "1",
        "--out", &s(&insp),
    ]);
    for i in 0..5 {
        assert!(insp.join(format!("conv{i}.txt")).exists());
    }
    let logits = fs::read_to_string(insp.join("logits.csv")).unwrap();
    assert_eq!(logits.lines().count(), 32);
    assert_eq!(logits.lines().next().unwrap().split(',').count(), 6);
    let argmax = fs::read_to_string(insp.join("argmax.csv")).unwrap();
    assert_eq!(argmax.lines().count(), 33);
    assert!(insp.join("input.pgm").exists());

    let rep = dir.join("report");
    ok(&[
        "report",
        "--inputs", &s(&evald.join("eval.csv")),
        "--out", &s(&rep),
    ]);
    let svg = fs::read_to_string(rep.join("chart.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("CRR") && svg.contains("WRR"));
    assert!(rep.join("summary.csv").exists());

    // Reports are deterministic byte-for-byte.
    let rep2 = dir.join("report2");
    ok(&[
        "report",
        "--inputs", &s(&evald.join("eval.csv")),
        "--out", &s(&rep2),
    ]);
    assert_eq!(
        fs::read(rep.join("chart.svg")).unwrap(),
        fs::read(rep2.join("chart.svg")).unwrap()
    );
}

#[test]
fn manifest_replay_reproduces_outputs_byte_identically() {
    let dir = workdir("replay");
    let vocab = write_vocab(&dir);
    let ds = dir.join("ds");
    ok(&[
        "gen",
        "--random-words", "5",
        "--min-len", "2",
        "--max-len", "3",
        "--fonts", "2",
        "--vocab", &s(&vocab),
        "--seed", "9",
        "--out", &s(&ds),
    ]);
    let labels = fs::read(ds.join("labels.tsv")).unwrap();
    let blob = fs::read(ds.join("images.bin")).unwrap();
    let manifest = fs::read(ds.join("manifest.json")).unwrap();

    fs::remove_file(ds.join("labels.tsv")).unwrap();
    fs::remove_file(ds.join("images.bin")).unwrap();
    ok(&["--manifest", &s(&ds.join("manifest.json"))]);

    assert_eq!(fs::read(ds.join("labels.tsv")).unwrap(), labels);
    assert_eq!(fs::read(ds.join("images.bin")).unwrap(), blob);
    assert_eq!(fs::read(ds.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn recognize_accepts_pgm_images() {
    let dir = workdir("pgm");
    let vocab = write_vocab(&dir);
    let ds = dir.join("ds");
    ok(&[
        "gen",
        "--random-words", "4",
        "--min-len", "2",
        "--max-len", "2",
        "--fonts", "1",
        "--vocab", &s(&vocab),
        "--seed", "4",
        "--out", &s(&ds),
    ]);
    let run = dir.join("run");
    ok(&[
        "train",
        "--data", &s(&ds),
        "--config", "toy",
        "--vocab", &s(&vocab),
        "--seed", "2",
        "--batch", "2",
        "--iters", "2",
        "--ratios", "0.5,0.25,0.25",
        "--out", &s(&run),
    ]);

    let pgm = dir.join("word.pgm");
    let (w, h) = (40u32, 12u32);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..w * h).map(|i| if i % 7 == 0 { 0u8 } else { 255u8 }));
    fs::write(&pgm, bytes).unwrap();

    let out_dir = dir.join("rec");
    ok(&[
        "recognize",
        "--ckpt", &s(&run.join("last.qocr")),
        "--image", &s(&pgm),
        "--out", &s(&out_dir),
    ]);
    assert!(out_dir.join("recognized.txt").exists());
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn report_groups_every_experiment() {
    let dir = workdir("report9");
    let mut csv = String::from("dataset,samples,total_chars,total_distance,crr,wrr\n");
    for i in 0..9 {
        csv.push_str(&format!(
            "exp{i},100,850,{},0.9{i}0000,0.8{i}0000\n",
            10 + i
        ));
    }
    let input = dir.join("evals.csv");
    fs::write(&input, csv).unwrap();

    let rep = dir.join("out");
    ok(&["report", "--inputs", &s(&input), "--out", &s(&rep)]);
    let summary = fs::read_to_string(rep.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 10);
    let svg = fs::read_to_string(rep.join("chart.svg")).unwrap();
    for i in 0..9 {
        assert!(svg.contains(&format!(">exp{i}<")), "group label exp{i}");
    }
    // Two value bars per experiment plus background and two legend swatches.
    assert_eq!(svg.matches("<rect").count(), 1 + 18 + 2);

    // Malformed input names the offending line.
    let bad = dir.join("bad.csv");
    fs::write(&bad, "dataset,samples,total_chars,total_distance,crr,wrr\noops,1,2\n").unwrap();
    let out = qocr(&["report", "--inputs", &s(&bad), "--out", &s(&dir.join("bad_out"))]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn errors_use_documented_exit_codes() {
    // Usage error: unknown subcommand.
    let out = qocr(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    // Usage error: no subcommand and no manifest.
    let out = qocr(&[]);
    assert_eq!(out.status.code(), Some(2));

    // Operation error: missing dataset.
    let out = qocr(&["split", "--data", "/nonexistent", "--out", "/tmp/qocr_nope"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "{stderr}");
    assert_eq!(stderr.lines().count(), 1, "one-line errors: {stderr}");

    // Operation error: bad ratios.
    let dir = workdir("codes");
    let vocab = write_vocab(&dir);
    let ds = dir.join("ds");
    ok(&[
        "gen",
        "--random-words", "3",
        "--min-len", "2",
        "--max-len", "2",
        "--fonts", "1",
        "--vocab", &s(&vocab),
        "--seed", "1",
        "--out", &s(&ds),
    ]);
    let out = qocr(&[
        "split",
        "--data", &s(&ds),
        "--ratios", "0.9,0.3,0.1",
        "--out", &s(&dir.join("sp")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
