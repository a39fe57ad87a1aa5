//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "persona_debate.h"

int main(void) {
    PdTallySet *set = NULL;
    if (pd_tallies_from_paper(&set) != PD_STATUS_OK) return 10;
    if (pd_tallies_len(set) != 18) return 11;

    PdCell cell;
    if (pd_tallies_get(set, 0, &cell) != PD_STATUS_OK) return 12;
    if (cell.agent_a != 4 || cell.agent_b != 5 || cell.counts[0] != 38) return 13;

    uint32_t triads[3];
    size_t count = 0;
    if (pd_tallies_triads(set, triads, 1, &count) != PD_STATUS_OK || count != 1) return 14;
    printf("triad %u %u %u\n", triads[0], triads[1], triads[2]);

    uint64_t counts[4] = {38, 14, 10, 2};
    double a = 0, b = 0;
    if (pd_cell_mle(counts, &a, &b) != PD_STATUS_OK) return 15;
    printf("mle %.3f %.3f\n", a, b);

    if (pd_tallies_get(set, 99, &cell) != PD_STATUS_INVALID_ARGUMENT) return 16;
    if (strstr(pd_last_error_message(), "out of range") == NULL) return 17;

    pd_tallies_free(set);
    printf("version %s\n", pd_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn find_cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|cc| Command::new(cc).arg("--version").output().is_ok())
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/persona_debate.h")).unwrap();
    for symbol in [
        "typedef struct PdTallySet PdTallySet;",
        "typedef struct PdFit PdFit;",
        "PD_STATUS_OK = 0",
        "PD_STATUS_PANIC",
        "pd_last_error_message(void)",
        "pd_tallies_from_jsonl(",
        "pd_tallies_triads(",
        "pd_cell_mle(const uint64_t *counts",
        "pd_fit_to_json(",
        "pd_run(",
        "pd_string_free(",
    ] {
        assert!(header.contains(symbol), "header lacks {symbol}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let cc = find_cc().expect("a C compiler (cc, gcc or clang) is required for this test");
    let lib = target_dir().join("libpersona_debate_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "exit {:?}; stdout: {stdout}", out.status.code());
    assert!(stdout.contains("triad 4 5 6"), "{stdout}");
    assert!(stdout.contains("mle 0.625 0.250"), "{stdout}");
    assert!(stdout.contains(&format!("version {}", env!("CARGO_PKG_VERSION"))), "{stdout}");
}
