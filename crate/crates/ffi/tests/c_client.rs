//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "trustspa.h"

int main(void) {
    const double a[6] = {1.0, -1.0, 0.5, 0.2, 2.0, -1.0};
    const double y[2] = {1.0, -0.5};
    TsProblem *p = NULL;
    if (ts_problem_new(a, 2, 3, y, 0.05, &p) != TS_STATUS_OK) return 1;
    TsSolverConfig cfg = ts_solver_config_default();
    TsResult *r = NULL;
    if (ts_solve(p, &cfg, &r) != TS_STATUS_OK) return 2;
    double f[3];
    if (ts_result_copy_signal(r, f, ts_result_signal_len(r)) != TS_STATUS_OK) return 3;
    TsResultInfo info;
    if (ts_result_info(r, &info) != TS_STATUS_OK) return 4;
    if (ts_problem_new(NULL, 2, 3, y, 0.05, NULL) != TS_STATUS_NULL_POINTER) return 5;
    printf("%.6f %.6f %.6f %zu\n", f[0], f[1], f[2], info.iterations);
    ts_result_free(r);
    ts_problem_free(p);
    return isfinite(f[0]) ? 0 : 6;
}
"#;

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().map(|_| cc)
}

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn write_source() -> PathBuf {
    let src = tempfile_dir().join("client.c");
    std::fs::write(&src, PROGRAM).unwrap();
    src
}

#[test]
fn header_compiles_as_c99() {
    assert!(header_dir().join("trustspa.h").exists(), "header was not generated");
    let Some(cc) = compiler() else {
        eprintln!("skipping: no C compiler");
        return;
    };
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header_dir())
        .arg(write_source())
        .status()
        .unwrap();
    assert!(status.success(), "header does not compile");
}

/// Needs the static library from `cargo build -p trustspa-ffi`; `cargo test`
/// alone only builds the rlib.
#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libtrustspa_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let Some(cc) = compiler() else {
        eprintln!("skipping: no C compiler");
        return;
    };
    let header_dir = header_dir();
    let src = write_source();
    let bin = tempfile_dir().join("client");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to compile");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C client exited with {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.split_whitespace().count(), 4, "unexpected output {text:?}");
}

fn tempfile_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("c_client");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
