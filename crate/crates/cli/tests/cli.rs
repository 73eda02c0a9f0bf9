//! End-to-end tests of the `lball` binary: artifact round trips,
//! determinism, table output, and the error-reporting contract.

use std::path::Path;
use std::process::{Command, Output};

fn lball(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lball"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr is UTF-8")
}

fn write_unit_triangle(path: &Path) {
    std::fs::write(
        path,
        "OFF\n3 1 0\n0 0 0\n1 0 0\n0.5 0.8660254037844386 0\n3 0 1 2\n",
    )
    .expect("fixture written");
}

#[test]
fn refining_one_face_of_constant_data_gives_six_equal_values() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("tri.off");
    let values = dir.path().join("values.csv");
    write_unit_triangle(&mesh);
    std::fs::write(&values, "vertex_index,value\n0,5.0\n1,5.0\n2,5.0\n").unwrap();

    let prefix = dir.path().join("out");
    let output = lball(&[
        "refine",
        "--mesh",
        mesh.to_str().unwrap(),
        "--values",
        values.to_str().unwrap(),
        "--weight",
        "constant",
        "--radius",
        "1.6",
        "--iterations",
        "1",
        "--out-prefix",
        prefix.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));

    let refined = std::fs::read_to_string(prefix.with_extension("csv")).unwrap();
    let rows: Vec<&str> = refined.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let value: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((value - 5.0).abs() <= 1e-12, "value {value}");
    }
}

#[test]
fn identical_configurations_write_byte_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |prefix: &Path| {
        let output = lball(&[
            "refine",
            "--mesh",
            "scattered:100",
            "--function",
            "sin-cos",
            "--noise-sd",
            "0.2",
            "--seed",
            "7",
            "--weight",
            "hat",
            "--radius",
            "1",
            "--iterations",
            "2",
            "--out-prefix",
            prefix.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "stderr: {}", stderr(&output));
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a);
    run(&b);
    for extension in ["off", "csv", "json"] {
        let left = std::fs::read(a.with_extension(extension)).unwrap();
        let right = std::fs::read(b.with_extension(extension)).unwrap();
        assert_eq!(left, right, "rerun changed the .{extension} artifact");
    }
}

#[test]
fn quad_faces_fail_with_a_parse_error_naming_the_face() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("quad.obj");
    std::fs::write(
        &mesh,
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
    )
    .unwrap();
    let output = lball(&[
        "refine",
        "--mesh",
        mesh.to_str().unwrap(),
        "--function",
        "sin-cos",
    ]);
    assert!(!output.status.success());
    let message = stderr(&output);
    assert!(message.starts_with("error[parse]:"), "stderr: {message}");
    assert!(message.contains(":5:"), "missing line number: {message}");
    assert!(message.contains("face 0"), "missing face name: {message}");
}

#[test]
fn failures_use_stable_machine_parsable_codes() {
    let cases: [(&[&str], &str); 4] = [
        (
            &["refine", "--mesh", "missing.off", "--function", "sin-cos"],
            "error[io]:",
        ),
        (
            &["refine", "--mesh", "mesh.ply", "--function", "sin-cos"],
            "error[format]:",
        ),
        (
            &[
                "refine",
                "--mesh",
                "scattered:1",
                "--function",
                "sin-cos",
                "--weight",
                "cubic",
            ],
            "error[weight]:",
        ),
        (
            &[
                "refine",
                "--mesh",
                "scattered:1",
                "--function",
                "sin-cos",
                "--radius",
                "0.5",
            ],
            "error[config]:",
        ),
    ];
    for (args, code) in cases {
        let output = lball(args);
        assert!(!output.status.success(), "{args:?} unexpectedly passed");
        let message = stderr(&output);
        assert!(
            message.starts_with(code),
            "expected {code} from {args:?}, got: {message}"
        );
    }
}

#[test]
fn verify_reports_every_check_passing_as_json() {
    let output = lball(&["verify"]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let report: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() >= 5);
    for check in checks {
        assert_eq!(
            check["passed"],
            serde_json::Value::Bool(true),
            "failed: {check}"
        );
    }
}

#[test]
fn noise_free_linear_data_zeroes_the_experiment_errors() {
    let output = lball(&[
        "experiment",
        "--mesh",
        "scattered:5",
        "--function",
        "linear:0.3,0.7,-0.2",
        "--noise-sd",
        "0",
        "--radius",
        "1",
        "--iterations",
        "2",
    ]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let table = stdout(&output);
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("method,weight,radius,e2,einf"));
    let mut seen = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 5, "row {line:?}");
        let e2: f64 = cells[3].parse().unwrap();
        match cells[0] {
            "subdivision" | "mls" => {
                assert!(e2 <= 1e-12, "{} leaked error {e2}", cells[0]);
                seen += 1;
            }
            // Local constant averages cannot reproduce a linear function.
            "shepard" => assert!(e2 > 1e-6),
            "initial" => assert!(e2 <= 1e-12),
            other => panic!("unexpected method {other}"),
        }
    }
    assert_eq!(seen, 2);
}

#[test]
fn surface_refinement_of_a_noisy_sphere_reports_reduced_radial_rms() {
    let output = lball(&[
        "surface",
        "--mesh",
        "icosphere:3",
        "--noise-sd",
        "0.02",
        "--seed",
        "4",
        "--radius",
        "auto",
        "--iterations",
        "1",
        "--radial-stats",
    ]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    let rms: Vec<f64> = text
        .lines()
        .map(|line| {
            let tail = line.rsplit(' ').next().unwrap();
            tail.parse().expect("radial rms field")
        })
        .collect();
    assert_eq!(rms.len(), 2);
    assert!(rms[1] < rms[0], "rms went {} -> {}", rms[0], rms[1]);
}
