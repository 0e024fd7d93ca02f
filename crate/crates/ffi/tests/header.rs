use std::path::Path;
use std::process::Command;

#[test]
fn header_declares_the_api_and_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/expcopilot.h")).unwrap();
    for f in [
        "ec_last_error",
        "ec_string_free",
        "ec_session_open",
        "ec_session_suggest",
        "ec_session_prompt",
        "ec_session_free",
        "ec_benchmark_open",
        "ec_benchmark_evaluate",
        "ec_benchmark_free",
        "ec_metric_at_t",
        "ec_cosine",
        "EC_STATUS_INTERNAL = 6",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"expcopilot.h\"\nint main(void) {\n  double v[2] = {1.0, 2.0}, out;\n  return ec_metric_at_t(v, 2, 2, false, &out) == EC_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        ),
        Err(e) => eprintln!("skipping C compile check, no compiler `{cc}`: {e}"),
    }
}
