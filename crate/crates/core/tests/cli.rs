use std::path::Path;
use std::process::Command;

fn conkin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_conkin"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest_without_timings(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("manifest.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| !l.contains("\"record\":\"timing\""))
        .map(str::to_string)
        .collect()
}

#[test]
fn particle_run_passes_and_lists_files() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(
        tmp.path(),
        "p.txt",
        "kind = particle\nc = 0.2\nmodel = conformal\nintegrator.dt = 1e-3\nintegrator.T = 2\n",
    );
    let out = tmp.path().join("out");
    let (code, err) = conkin(&[
        "simulate-particle",
        "--scenario",
        &sc,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let lines = manifest_without_timings(&out);
    let files: Vec<&String> = lines
        .iter()
        .filter(|l| l.contains("\"record\":\"file\""))
        .collect();
    assert_eq!(files.len(), 3);
    for f in files {
        assert!(f.contains("sha256"), "{f}");
    }
    assert!(lines.last().unwrap().contains("\"status\":\"pass\""));
}

#[test]
fn schema_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad = write(
        tmp.path(),
        "bad.txt",
        "kind = particle\nintegrator.dt = 0\nintegrator.T = 1\n",
    );
    let (code, err) = conkin(&[
        "simulate-particle",
        "--scenario",
        &bad,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
    assert!(err.contains("dt must be positive"), "{err}");

    let huge = write(
        tmp.path(),
        "huge.txt",
        "kind = kinetic_density\nintegrator.dt = 1e-3\nintegrator.T = 1\ngrid.q = -1, 1, 1000\ngrid.p = -1, 1, 1000000\n",
    );
    let (code, err) = conkin(&[
        "simulate-kinetic",
        "--scenario",
        &huge,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
    assert!(err.contains("2^27"), "{err}");

    let ok = write(
        tmp.path(),
        "ok.txt",
        "kind = particle\nintegrator.dt = 1e-3\nintegrator.T = 1\n",
    );
    let (code, _) = conkin(&[
        "verify-algebra",
        "--scenario",
        &ok,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3, "kind and subcommand disagree");
}

#[test]
fn failed_check_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    // a coarse step cannot hold the energy drift bound
    let sc = write(
        tmp.path(),
        "p.txt",
        "kind = particle\nmodel = hamiltonian\nintegrator.dt = 0.5\nintegrator.T = 50\nchecks.energy_tol = 1e-12\n",
    );
    let out = tmp.path().join("out");
    let (code, err) = conkin(&[
        "simulate-particle",
        "--scenario",
        &sc,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("energy"), "{err}");
}

#[test]
fn manifests_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let scenarios = [
        (
            "simulate-kinetic",
            "kind = kinetic_density\nmodel = conformal\nc = 0.1\ninitial.q = 0\nintegrator.dt = 0.01\nintegrator.T = 0.2\ngrid.q = -6, 6, 40\ngrid.p = -6, 6, 40\n",
        ),
        ("verify-algebra", "kind = verify\nverify.instances = 12\n"),
    ];
    for (i, (cmd, text)) in scenarios.iter().enumerate() {
        let sc = write(tmp.path(), &format!("s{i}.txt"), text);
        let mut runs = Vec::new();
        for threads in ["1", "4"] {
            let out = tmp.path().join(format!("out{i}_{threads}"));
            let (code, err) = conkin(&[
                cmd,
                "--scenario",
                &sc,
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
                "--seed",
                "7",
            ]);
            assert_eq!(code, 0, "{cmd}: {err}");
            runs.push(manifest_without_timings(&out));
        }
        assert_eq!(runs[0], runs[1], "{cmd}");
        assert!(runs[0][0].contains("\"seed\":7"));
    }
}
