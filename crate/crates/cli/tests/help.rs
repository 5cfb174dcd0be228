//! `--help` output of every subcommand against files in tests/golden.
//! Set `UPDATE_GOLDEN=1` to rewrite them.

use std::path::PathBuf;
use std::process::Command;

const SUBCOMMANDS: [&str; 11] = [
    "",
    "corpus-prepare",
    "lm-train",
    "lm-retrain",
    "lm-eval",
    "ngram-train",
    "probe",
    "signature-build",
    "signature-diff",
    "render",
    "replay",
];

fn help(sub: &str) -> String {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memsig"));
    if !sub.is_empty() {
        cmd.arg(sub);
    }
    let out = cmd.arg("--help").env_remove("MEMSIG_JOBS").output().unwrap();
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

fn golden(sub: &str) -> PathBuf {
    let name = if sub.is_empty() { "memsig" } else { sub };
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"))
}

#[test]
fn help_text_matches_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for sub in SUBCOMMANDS {
        let text = help(sub);
        let path = golden(sub);
        if update {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &text).unwrap();
        } else {
            let expected = std::fs::read_to_string(&path).unwrap_or_default();
            assert_eq!(text, expected, "help for {sub:?} differs from {}", path.display());
        }
    }
}

#[test]
fn probe_jobs_read_the_environment() {
    let text = help("probe");
    assert!(text.contains("[env: MEMSIG_JOBS=]"), "{text}");
}
