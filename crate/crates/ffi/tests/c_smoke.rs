//! Compiles and runs the C example against the generated header and the
//! static library, when a C compiler is available.

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps/<name>; the libraries live two
    // levels up.
    let exe = std::env::current_exe().expect("test executable path");
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .copied();
    let Some(cc) = cc else {
        eprintln!("no C compiler found; skipping C smoke test");
        return;
    };

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let archive = target_dir().join("libparo_ffi.a");
    assert!(
        archive.exists(),
        "static library missing at {}",
        archive.display()
    );
    let out = target_dir().join("paro_c_smoke");

    let compile = Command::new(cc)
        .arg(manifest.join("examples/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&archive)
        .arg("-lm")
        .arg("-o")
        .arg(&out)
        .output()
        .expect("run C compiler");
    assert!(
        compile.status.success(),
        "C compilation failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&out).output().expect("run smoke binary");
    assert!(
        run.status.success(),
        "smoke binary failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(
        stdout.contains("savings_params=5359375000"),
        "stdout: {stdout}"
    );
    assert!(stdout.contains("cost_has_method=1"));
    assert!(stdout.contains("simulate_ok=1"));
    assert!(stdout.contains("done"));
}
