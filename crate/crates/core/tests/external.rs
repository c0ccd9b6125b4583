use std::path::Path;
use std::time::Duration;

use pigroups::experiment::{Experiment, ExternalExperiment};
use pigroups::pipeflow::{regime_box, PipeFlow, RegimeName};
use pigroups::quadrature::latin_hypercube;
use pigroups::{Error, ExperimentError};

const PIPE_SCRIPT: &str = r#"
import csv, math, sys

def colebrook(re, rr):
    t = -1.8 * math.log10((rr / 3.7) ** 1.11 + 6.9 / re)
    for _ in range(100):
        a = rr / 3.7 + 2.51 * t / re
        f = t + 2.0 * math.log10(a)
        df = 1.0 + 2.0 * 2.51 / (re * a * math.log(10.0))
        step = f / df
        t -= step
        if abs(step) <= 1e-14 * abs(t):
            break
    return 1.0 / (t * t)

rows = csv.DictReader(sys.stdin)
for row in rows:
    rho, mu, d, eps, v = (float(row[k]) for k in ("rho", "mu", "D", "eps", "V"))
    lam = colebrook(rho * v * d / mu, eps / d)
    print(repr(lam * rho * v * v / (2.0 * d)))
"#;

fn symbols() -> Vec<String> {
    ["rho", "mu", "D", "eps", "V"].iter().map(|s| s.to_string()).collect()
}

fn script(dir: &Path, name: &str, body: &str) -> ExternalExperiment {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    ExternalExperiment::new("python3", symbols()).with_args(vec![path.display().to_string()])
}

#[test]
fn external_pipe_model_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let exp = script(dir.path(), "pipe.py", PIPE_SCRIPT).with_batch_size(64);
    let design = latin_hypercube(&regime_box(RegimeName::Turbulent), 150, 3).unwrap();
    let external = exp.evaluate_batch(&design).unwrap();
    let internal = PipeFlow::default().evaluate_batch(&design).unwrap();
    assert_eq!(external.len(), 150);
    for (a, b) in external.iter().zip(&internal) {
        assert!((a / b - 1.0).abs() < 1e-12, "{a} vs {b}");
    }
    let single = exp.evaluate(design.row(5)).unwrap();
    assert_eq!(single, external[5]);
}

#[test]
fn non_numeric_output_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let body = "import sys\nrows = sys.stdin.read().splitlines()[1:]\nfor i, _ in enumerate(rows):\n    print('nan' if i == 2 else 1.0)\n";
    let exp = script(dir.path(), "nan.py", body);
    let design = latin_hypercube(&regime_box(RegimeName::Laminar), 4, 1).unwrap();
    let err = exp.evaluate_batch(&design).unwrap_err();
    assert!(matches!(err, ExperimentError::ParseFailure { row: 2, .. }), "{err}");
}

#[test]
fn nonzero_exit_carries_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let body = "import sys\nsys.stdin.read()\nsys.stderr.write('solver diverged\\n')\nsys.exit(1)\n";
    let exp = script(dir.path(), "fail.py", body);
    let design = latin_hypercube(&regime_box(RegimeName::Laminar), 3, 1).unwrap();
    match exp.evaluate_batch(&design).unwrap_err() {
        ExperimentError::SubprocessFailure { stderr, .. } => assert!(stderr.contains("solver diverged")),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn hung_subprocess_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let exp = script(dir.path(), "hang.py", "import time\ntime.sleep(30)\n").with_timeout(Some(Duration::from_millis(300)));
    let design = latin_hypercube(&regime_box(RegimeName::Laminar), 2, 1).unwrap();
    let start = std::time::Instant::now();
    let err = exp.evaluate_batch(&design).unwrap_err();
    assert!(matches!(err, ExperimentError::Timeout { .. }), "{err}");
    assert!(start.elapsed() < Duration::from_secs(10));
    assert_eq!(Error::from(err).category(), pigroups::Category::Subprocess);
}

#[test]
fn missing_program_is_a_subprocess_error() {
    let exp = ExternalExperiment::new("/nonexistent/solver", symbols());
    let design = latin_hypercube(&regime_box(RegimeName::Laminar), 2, 1).unwrap();
    assert!(matches!(exp.evaluate_batch(&design), Err(ExperimentError::SubprocessFailure { .. })));
}
