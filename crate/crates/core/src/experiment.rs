//! The computer-experiment contract and an out-of-process implementation.
//!
//! External simulators speak a batch protocol: a CSV of query points (header =
//! quantity symbols) on standard input, one dependent value per row on
//! standard output.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::ExperimentError;
use crate::quadrature::Points;

/// A deterministic map from a positive input vector to the dependent value.
pub trait Experiment: Send + Sync {
    fn evaluate(&self, q: &[f64]) -> Result<f64, ExperimentError>;

    /// Evaluate every row; results are in row order regardless of scheduling.
    fn evaluate_batch(&self, points: &Points) -> Result<Vec<f64>, ExperimentError> {
        let results: Vec<Result<f64, ExperimentError>> =
            (0..points.len()).into_par_iter().map(|i| checked(self.evaluate(points.row(i)), points.row(i))).collect();
        results.into_iter().collect()
    }
}

fn checked(value: Result<f64, ExperimentError>, q: &[f64]) -> Result<f64, ExperimentError> {
    match value {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(ExperimentError::NonFinite { point: q.to_vec(), value: v }),
        Err(e) => Err(e),
    }
}

/// Wraps a closure as an experiment.
pub struct FnExperiment<F>(pub F);

impl<F> Experiment for FnExperiment<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn evaluate(&self, q: &[f64]) -> Result<f64, ExperimentError> {
        Ok((self.0)(q))
    }
}

/// Counts how many points the inner experiment was asked for.
pub struct CountingExperiment<E> {
    inner: E,
    count: AtomicU64,
}

impl<E: Experiment> CountingExperiment<E> {
    pub fn new(inner: E) -> Self {
        CountingExperiment { inner, count: AtomicU64::new(0) }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Experiment> Experiment for CountingExperiment<E> {
    fn evaluate(&self, q: &[f64]) -> Result<f64, ExperimentError> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(q)
    }

    fn evaluate_batch(&self, points: &Points) -> Result<Vec<f64>, ExperimentError> {
        self.count.fetch_add(points.len() as u64, Ordering::Relaxed);
        self.inner.evaluate_batch(points)
    }
}

impl<E: Experiment + ?Sized> Experiment for &E {
    fn evaluate(&self, q: &[f64]) -> Result<f64, ExperimentError> {
        (**self).evaluate(q)
    }

    fn evaluate_batch(&self, points: &Points) -> Result<Vec<f64>, ExperimentError> {
        (**self).evaluate_batch(points)
    }
}

impl<E: Experiment + ?Sized> Experiment for Box<E> {
    fn evaluate(&self, q: &[f64]) -> Result<f64, ExperimentError> {
        (**self).evaluate(q)
    }

    fn evaluate_batch(&self, points: &Points) -> Result<Vec<f64>, ExperimentError> {
        (**self).evaluate_batch(points)
    }
}

/// A simulator run as a subprocess per batch.
#[derive(Debug, Clone)]
pub struct ExternalExperiment {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub symbols: Vec<String>,
    pub batch_size: usize,
    pub timeout: Option<Duration>,
}

impl ExternalExperiment {
    pub fn new(program: impl Into<PathBuf>, symbols: Vec<String>) -> Self {
        ExternalExperiment { program: program.into(), args: Vec::new(), symbols, batch_size: 8192, timeout: None }
    }

    pub fn with_args(mut self, args: Vec<String>) -> Self {
        self.args = args;
        self
    }

    pub fn with_batch_size(mut self, size: usize) -> Self {
        self.batch_size = size.max(1);
        self
    }

    pub fn with_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.timeout = timeout;
        self
    }

    fn query_csv(&self, rows: &[&[f64]]) -> Vec<u8> {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(&self.symbols).expect("writing to memory");
        for r in rows {
            out.write_record(r.iter().map(|v| v.to_string())).expect("writing to memory");
        }
        out.into_inner().expect("writing to memory")
    }

    fn run_batch(&self, batch: usize, rows: &[&[f64]]) -> Result<Vec<f64>, ExperimentError> {
        let failure = |status: String, stderr: String| ExperimentError::SubprocessFailure { batch, status, stderr };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| failure("spawn failed".into(), format!("{}: {e}", self.program.display())))?;

        let input = self.query_csv(rows);
        let mut stdin = child.stdin.take().expect("piped");
        let writer = thread::spawn(move || {
            // a simulator that exits early closes the pipe; its exit status reports the problem
            let _ = stdin.write_all(&input);
        });
        let mut stdout = child.stdout.take().expect("piped");
        let mut stderr = child.stderr.take().expect("piped");
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let status = match self.timeout {
            None => child.wait().map_err(|e| failure("wait failed".into(), e.to_string()))?,
            Some(limit) => {
                let start = Instant::now();
                loop {
                    if let Some(status) = child.try_wait().map_err(|e| failure("wait failed".into(), e.to_string()))? {
                        break status;
                    }
                    if start.elapsed() >= limit {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(ExperimentError::Timeout { batch, seconds: limit.as_secs_f64() });
                    }
                    thread::sleep(Duration::from_millis(2));
                }
            }
        };
        let _ = writer.join();
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(failure(status.to_string(), err.trim().to_string()));
        }
        parse_values(batch, &out, rows.len())
    }
}

fn parse_values(batch: usize, out: &str, expected: usize) -> Result<Vec<f64>, ExperimentError> {
    let lines: Vec<&str> = out.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let mut values = Vec::with_capacity(expected);
    for (row, line) in lines.iter().enumerate() {
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => return Err(ExperimentError::ParseFailure { batch, row, text: line.to_string() }),
        }
    }
    if values.len() != expected {
        return Err(ExperimentError::ParseFailure {
            batch,
            row: values.len(),
            text: format!("expected {expected} values, got {}", values.len()),
        });
    }
    Ok(values)
}

impl Experiment for ExternalExperiment {
    fn evaluate(&self, q: &[f64]) -> Result<f64, ExperimentError> {
        Ok(self.run_batch(0, &[q])?[0])
    }

    fn evaluate_batch(&self, points: &Points) -> Result<Vec<f64>, ExperimentError> {
        let rows: Vec<&[f64]> = points.rows().collect();
        let batches: Vec<Result<Vec<f64>, ExperimentError>> = rows
            .par_chunks(self.batch_size)
            .enumerate()
            .map(|(b, chunk)| self.run_batch(b, chunk))
            .collect();
        let mut values = Vec::with_capacity(rows.len());
        for b in batches {
            values.extend(b?);
        }
        Ok(values)
    }
}
