//! Serialization of results: round-trip JSON, exponent tables, run manifests.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::{json, Value};

use crate::algorithms::TraceRow;
use crate::error::{Error, Result};
use crate::linalg::to_rows;
use crate::subspace::SubspaceResult;

/// Writes every float with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
struct ExactFloats {
    indent: usize,
    has_value: bool,
}

impl ExactFloats {
    fn newline<W: ?Sized + Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.indent {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value == 0.0 {
            // keeps the sign of -0.0 out of the output
            w.write_all(b"0.0")
        } else {
            write!(w, "{value:.16e}")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

/// Pretty JSON with floats printed to 17 significant digits.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// JSON tree of a result.
pub fn result_value(result: &SubspaceResult) -> Value {
    json!({
        "eigenvalues": result.eigenvalues,
        "sensitivity": result.sensitivity,
        "c": to_rows(&result.c),
        "u": to_rows(&result.u),
        "z": to_rows(&result.z),
        "groups": result.groups,
        "status": if result.metadata.unique { "unique" } else { "degenerate eigenspace - groups not unique" },
        "metadata": result.metadata,
    })
}

/// Exponent table: one row per variable with the starting basis `W` and the
/// rotated exponents `Z`; a final row carries the eigenvalues.
pub fn write_exponent_table<W: Write>(writer: W, result: &SubspaceResult) -> Result<()> {
    let n = result.z.ncols();
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["variable".to_string()];
    header.extend((1..=n).map(|i| format!("w{i}")));
    header.extend((1..=n).map(|i| format!("z{i}")));
    out.write_record(&header)?;
    for (i, symbol) in result.metadata.symbols.iter().enumerate() {
        let mut rec = vec![symbol.clone()];
        rec.extend(result.metadata.basis[i].iter().map(|v| format!("{v:.16e}")));
        rec.extend(result.z.row(i).iter().map(|v| format!("{v:.16e}")));
        out.write_record(&rec)?;
    }
    let mut last = vec!["eigenvalue".to_string()];
    last.extend(std::iter::repeat_n(String::new(), n));
    last.extend(result.eigenvalues.iter().map(|v| format!("{v:.16e}")));
    out.write_record(&last)?;
    out.flush().map_err(|e| Error::io("<exponent table>", e))?;
    Ok(())
}

/// Fixed-width table with 3-decimal exponents and the eigenvalues.
pub fn human_table(result: &SubspaceResult) -> String {
    let n = result.z.ncols();
    let mut s = String::new();
    let _ = write!(s, "{:<10}", "");
    for i in 1..=n {
        let _ = write!(s, "{:>10}", format!("z{i}"));
    }
    s.push('\n');
    for (i, symbol) in result.metadata.symbols.iter().enumerate() {
        let _ = write!(s, "{symbol:<10}");
        for v in result.z.row(i).iter() {
            let _ = write!(s, "{v:>10.3}");
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<10}", "lambda");
    for v in &result.eigenvalues {
        let _ = write!(s, "{:>10}", format!("{v:.3e}"));
    }
    s.push('\n');
    let _ = write!(s, "{:<10}", "nu");
    for v in &result.sensitivity {
        let _ = write!(s, "{:>10}", format!("{v:.3e}"));
    }
    s.push('\n');
    for (i, g) in result.groups.iter().enumerate() {
        let _ = writeln!(s, "pi_hat{} = {}", i + 1, g.descriptor);
    }
    if !result.metadata.unique {
        s.push_str("warning: degenerate eigenspace - groups not unique\n");
    }
    s
}

/// Per-sample audit trail of a finite-difference run.
pub fn write_trace<W: Write>(writer: W, symbols: &[String], rows: &[TraceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let n = rows.first().map_or(0, |r| r.gradient.len());
    let mut header: Vec<String> = symbols.to_vec();
    header.push("pi".into());
    header.extend((1..=n).map(|i| format!("dpi_dgamma{i}")));
    out.write_record(&header)?;
    for r in rows {
        let rec = r.point.iter().chain(std::iter::once(&r.pi)).chain(&r.gradient).map(|v| format!("{v:.16e}"));
        out.write_record(rec)?;
    }
    out.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

/// Provenance written next to every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_paths: Vec<String>,
    pub seed: u64,
    pub output_dir: String,
    pub version: String,
    pub duration_seconds: f64,
    pub evaluations: u64,
    pub holdout_evaluations: u64,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        RunManifest {
            command: command.into(),
            config_paths: Vec::new(),
            seed: 0,
            output_dir: String::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_seconds: 0.0,
            evaluations: 0,
            holdout_evaluations: 0,
        }
    }
}
