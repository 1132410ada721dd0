use std::path::PathBuf;
use std::process::Command;

/// Builds the extension module and runs the Python smoke test against it.
#[test]
fn python_smoke_test() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not found, skipping");
        return;
    }
    let build = Command::new(env!("CARGO"))
        .args(["build", "-p", "mechnli-py", "--features", "extension-module"])
        .current_dir(&root)
        .status()
        .expect("cargo runs");
    assert!(build.success());
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("target"));
    let lib = ["libpymechnli.so", "libpymechnli.dylib", "pymechnli.dll"]
        .iter()
        .map(|n| target.join("debug").join(n))
        .find(|p| p.exists())
        .expect("extension library built");
    let out = Command::new("python3")
        .arg(root.join("python/smoke_test.py"))
        .env("PYMECHNLI_LIB", &lib)
        .output()
        .expect("python3 runs");
    print!("{}", String::from_utf8_lossy(&out.stdout));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.starts_with("ok")).count(), 3);
}
