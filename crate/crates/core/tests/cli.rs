mod common;

use std::path::Path;
use std::process::Command;

fn vidcap(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_vidcap"))
        .args(args)
        .current_dir(cwd)
        .env_remove("VIDCAP_CACHE")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let (code, out, err) = vidcap(args, cwd);
    assert_eq!(code, 0, "vidcap {}: {err}", args.join(" "));
    out
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vidcap(&["frobnicate"], dir.path()).0, 2);
    assert_eq!(vidcap(&["eval", "--no-such-flag"], dir.path()).0, 2);
    assert_eq!(vidcap(&[], dir.path()).0, 2);
    assert_eq!(vidcap(&["--help"], dir.path()).0, 0);
}

#[test]
fn missing_config_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = vidcap(&["train", "--config", "nowhere.kv"], dir.path());
    assert_eq!(code, 1);
    assert!(err.starts_with("error:") && err.contains("nowhere.kv"), "{err}");
}

#[test]
fn config_file_values_apply_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.tsv"), "v1\tएक केटा दौडिरहेको छ\n").unwrap();
    std::fs::write(dir.path().join("r.tsv"), "v1\tएक केटा दौडिरहेको छ\nv1\tएक केटी\n").unwrap();
    std::fs::write(dir.path().join("eval.kv"), "candidates = c.tsv\nreferences = r.tsv\nlabel = fromfile\n").unwrap();
    let out = ok(&["eval", "--config", "eval.kv"], dir.path());
    assert!(out.starts_with("fromfile: BLEU-1 100.00"), "{out}");
    let out = ok(&["eval", "--config", "eval.kv", "--label", "flag"], dir.path());
    assert!(out.starts_with("flag: "), "{out}");
}

#[test]
fn end_to_end_train_caption_eval() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    common::write_dataset(root).unwrap();
    let prepared = ok(
        &["prepare", "--annotations", "annotations.txt", "--translations", "translations.csv", "--out-dir", "data"],
        root,
    );
    assert!(!prepared.is_empty());
    assert!(root.join("data/corpus.csv").is_file() && root.join("data/vocab.txt").is_file());
    ok(&["features", "--frames-dir", "frames", "--backbone", "synthetic", "--cache-dir", "cache"], root);

    let trained = ok(
        &[
            "train", "--data", "data", "--backbone", "synthetic", "--hidden-dim", "16", "--batch-size", "4",
            "--epochs", "2", "--out", "m.ckpt", "--best-out", "b.ckpt", "--cache-dir", "cache",
        ],
        root,
    );
    assert_eq!(trained.lines().filter(|l| l.starts_with("epoch")).count(), 2, "{trained}");
    assert!(root.join("m.ckpt").is_file() && root.join("b.ckpt").is_file());

    let line = ok(
        &["caption", "--video", "clip00_0_5", "--checkpoint", "m.ckpt", "--data", "data", "--cache-dir", "cache"],
        root,
    );
    assert_eq!(line.lines().count(), 1);

    ok(
        &[
            "caption", "--split", "test", "--checkpoint", "m.ckpt", "--data", "data", "--cache-dir", "cache",
            "--out", "cands.tsv",
        ],
        root,
    );
    let cands = std::fs::read_to_string(root.join("cands.tsv")).unwrap();
    assert_eq!(cands.lines().count(), 1);

    let report = ok(
        &["eval", "--checkpoint", "m.ckpt", "--data", "data", "--split", "test", "--cache-dir", "cache", "--out", "r.kv"],
        root,
    );
    assert!(report.contains("BLEU-4") && report.contains("(1 videos)"), "{report}");
    assert!(std::fs::read_to_string(root.join("r.kv")).unwrap().contains("meteor"));

    // the cache root can also come from the environment
    let (code, _, err) = vidcap(&["caption", "--video", "clip00_0_5", "--checkpoint", "m.ckpt", "--data", "data"], root);
    assert_eq!(code, 1, "default cache dir is empty");
    assert!(err.starts_with("error:"), "{err}");
    let out = Command::new(env!("CARGO_BIN_EXE_vidcap"))
        .args(["caption", "--video", "clip00_0_5", "--checkpoint", "m.ckpt", "--data", "data"])
        .current_dir(root)
        .env("VIDCAP_CACHE", "cache")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), line);
}
