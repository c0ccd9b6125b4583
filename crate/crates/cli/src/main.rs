mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use pigroups::algorithms::{algorithm1, algorithm2_traced, fd_convergence, ridge_check};
use pigroups::dimension::{build_dimension_matrix, describe_group, solve_output_exponents};
use pigroups::pipeflow::{moody_grid, FrictionModel};
use pigroups::report::{human_table, result_value, to_json_string, write_exponent_table, write_trace, RunManifest};
use pigroups::{Category, CountingExperiment, Error, QuantitySystem, SemiEmpiricalModel};

use config::{AlgorithmArgs, Setup, SetupArgs};

#[derive(Parser)]
#[command(name = "pigroups", version, about = "Ranked dimensionless groups from active subspaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dimension matrix, output exponents and a basis of dimensionless groups.
    PiBasis {
        /// Quantity system JSON.
        system: PathBuf,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
        /// Also write the JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the active subspace of the log groups and rotate the basis.
    Analyze {
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        algo: AlgorithmArgs,
        /// Output directory.
        #[arg(long, default_value = "pigroups-out")]
        out: PathBuf,
        /// Write the per-sample evaluation trace (finite differences only).
        #[arg(long)]
        trace: bool,
    },
    /// Eigenvalues of the full-space gradient matrix over a sweep of steps.
    RidgeCheck {
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4,1e-5")]
        h_sweep: Vec<f64>,
        /// Eigenvalues treated as leading (defaults to n + 1).
        #[arg(long)]
        leading: Option<usize>,
        /// Output directory; the CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exponent error of finite differences against a reference step.
    FdConvergence {
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6,1e-7,1e-8")]
        h_sweep: Vec<f64>,
        #[arg(long, default_value_t = 1e-9)]
        reference_h: f64,
        /// Output directory; the CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Friction factor over a grid of Reynolds numbers and relative roughness.
    MoodyData {
        /// log10 Re range.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [2.0, 8.0])]
        re_range: Vec<f64>,
        /// log10 eps/D range.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-6.0, -1.3])]
        rr_range: Vec<f64>,
        /// Grid size along Re and eps/D.
        #[arg(long, value_delimiter = ',', default_values_t = [121, 11])]
        points: Vec<usize>,
        #[arg(long, default_value_t = FrictionModel::Piecewise { re_critical: pigroups::pipeflow::DEFAULT_RE_CRITICAL })]
        friction: FrictionModel,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved semi-empirical model.
    Predict {
        /// Model JSON written by `analyze --algorithm 1`.
        #[arg(long)]
        model: PathBuf,
        /// CSV of points with one column per variable symbol.
        #[arg(long, conflicts_with = "point", required_unless_present = "point")]
        input: Option<PathBuf>,
        /// A single comma-separated point.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Cause chain joined by `: `, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let category = err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::category);
    match category {
        Some(Category::Numerical) => 3,
        Some(Category::Subprocess) => 4,
        Some(Category::Config) | None => 2,
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::PiBasis { system, json, out } => pi_basis(&system, json, out.as_deref()),
        Command::Analyze { setup, algo, out, trace } => analyze(&setup, &algo, &out, trace),
        Command::RidgeCheck { setup, h_sweep, leading, out } => ridge(&setup, &h_sweep, leading, out.as_deref()),
        Command::FdConvergence { setup, h_sweep, reference_h, out } => {
            convergence(&setup, &h_sweep, reference_h, out.as_deref())
        }
        Command::MoodyData { re_range, rr_range, points, friction, out } => {
            if re_range.len() != 2 || rr_range.len() != 2 || points.len() != 2 {
                bail!("--re-range, --rr-range and --points each take two comma-separated values");
            }
            let grid = moody_grid((re_range[0], re_range[1]), (rr_range[0], rr_range[1]), (points[0], points[1]), friction)?;
            let mut w = csv::Writer::from_writer(sink(out.as_deref())?);
            w.write_record(["log10_re", "log10_rel_rough", "lambda"])?;
            for p in grid {
                w.write_record([p.log10_re, p.log10_rel_rough, p.lambda].map(|v| format!("{v:.16e}")))?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Predict { model, input, point, out } => predict(&model, input.as_deref(), point, out.as_deref()),
    }
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Write to stdout; a closed pipe is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn format_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:>10.4}")).collect()
}

fn pi_basis(path: &Path, as_json: bool, out: Option<&Path>) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let system = QuantitySystem::from_json(&text).with_context(|| format!("loading system {}", path.display()))?;
    let d = build_dimension_matrix(&system)?;
    let basis = pigroups::PiBasis::for_system(&system)?;
    let min_norm = solve_output_exponents(&d, &system.dependent_dims_f64())?;
    let symbols = system.symbols();
    let rank = basis.m() - basis.n();
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };

    let doc = json!({
        "symbols": symbols,
        "base_units": system.base_units(),
        "dimension_matrix": rows(&d),
        "rank": rank,
        "groups": basis.n(),
        "w_min_norm": min_norm.as_slice(),
        "w_pinned": system.pinned_output_exponents(),
        "w": basis.w().as_slice(),
        "basis": rows(basis.basis()),
        "descriptors": (0..basis.n())
            .map(|j| describe_group(&symbols, basis.basis().column(j).as_slice()))
            .collect::<Vec<_>>(),
    });
    let json_text = to_json_string(&doc)?;
    if let Some(p) = out {
        write_text(p, &json_text)?;
    }
    if as_json {
        return emit(&json_text);
    }

    let mut s = String::new();
    s.push_str("dimension matrix D\n");
    s.push_str(&format!("{:<8}{}\n", "", symbols.iter().map(|v| format!("{v:>10}")).collect::<String>()));
    for (i, unit) in system.base_units().iter().enumerate() {
        s.push_str(&format!("{unit:<8}{}\n", format_row(d.row(i).iter().copied())));
    }
    s.push_str(&format!("rank {rank}, {} dimensionless groups\n\n", basis.n()));
    s.push_str(&format!("{:<14}{}\n", "w (min-norm)", format_row(min_norm.iter().copied())));
    if let Some(w) = system.pinned_output_exponents() {
        s.push_str(&format!("{:<14}{}\n", "w (pinned)", format_row(w.iter().copied())));
    }
    s.push_str("\nnull-space basis W\n");
    for (i, sym) in symbols.iter().enumerate() {
        s.push_str(&format!("{sym:<8}{}\n", format_row(basis.basis().row(i).iter().copied())));
    }
    for j in 0..basis.n() {
        s.push_str(&format!("pi{} = {}\n", j + 1, describe_group(&symbols, basis.basis().column(j).as_slice())));
    }
    emit(&s)
}

fn manifest(command: &str, setup: &Setup, out: Option<&Path>, started: Instant, evaluations: u64) -> RunManifest {
    let mut m = RunManifest::new(command);
    m.config_paths = setup.input_paths.clone();
    m.seed = setup.config.seed;
    m.output_dir = out.map(|p| p.display().to_string()).unwrap_or_default();
    m.evaluations = evaluations;
    m.duration_seconds = started.elapsed().as_secs_f64();
    m
}

fn analyze(args: &SetupArgs, algo: &AlgorithmArgs, out: &Path, trace: bool) -> anyhow::Result<()> {
    let started = Instant::now();
    let setup = Setup::resolve(args, Some(algo))?;
    if trace && setup.algorithm != 2 {
        bail!("--trace is only available with --algorithm 2");
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let experiment = CountingExperiment::new(&setup.experiment);

    let (result, model, rows) = if setup.algorithm == 2 {
        let (r, rows) = algorithm2_traced(&experiment, &setup.system, &setup.basis, &setup.region, &setup.config, trace)?;
        (r, None, rows)
    } else {
        let o = algorithm1(&experiment, &setup.system, &setup.basis, &setup.region, &setup.config)?;
        (o.result, Some(o.model), None)
    };

    write_text(&out.join("result.json"), &to_json_string(&result_value(&result))?)?;
    write_exponent_table(create(&out.join("exponents.csv"))?, &result)?;
    if let Some(model) = &model {
        write_text(&out.join("model.json"), &model.to_json()?)?;
    }
    if let Some(rows) = &rows {
        write_trace(create(&out.join("trace.csv"))?, &setup.system.symbols(), rows)?;
    }
    let holdout = result.metadata.holdout_evaluations;
    let mut m = manifest("analyze", &setup, Some(out), started, experiment.count() - holdout);
    m.holdout_evaluations = holdout;
    write_text(&out.join("manifest.json"), &to_json_string(&m)?)?;

    let mut text = human_table(&result);
    if let (Some(train), Some(test)) = (result.metadata.training_rmse, result.metadata.holdout_rmse) {
        text.push_str(&format!("surface rmse: training {train:.3e}, hold-out {test:.3e}\n"));
    }
    text.push_str(&format!("{} evaluations; results in {}\n", m.evaluations + holdout, out.display()));
    emit(&text)
}

fn ridge(args: &SetupArgs, hs: &[f64], leading: Option<usize>, out: Option<&Path>) -> anyhow::Result<()> {
    let started = Instant::now();
    let setup = Setup::resolve(args, None)?;
    let leading = leading.unwrap_or(setup.basis.n() + 1);
    let experiment = CountingExperiment::new(&setup.experiment);
    let check = ridge_check(&experiment, &setup.region, setup.config.quadrature, setup.config.seed, hs, leading)?;
    let m = setup.system.m();

    let write_csv = |w: Box<dyn Write>| -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["h".to_string()];
        header.extend((1..=m).map(|i| format!("lambda{i}")));
        w.write_record(&header)?;
        for (h, eig) in check.h.iter().zip(&check.eigenvalues) {
            w.write_record(std::iter::once(h).chain(eig).map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    };
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_csv(Box::new(create(&dir.join("ridge_check.csv"))?))?;
            let summary = json!({
                "h": check.h,
                "leading": leading,
                "trailing_slopes": check.trailing_slopes,
                "leading_drift": check.leading_drift,
            });
            write_text(&dir.join("ridge_check.json"), &to_json_string(&summary)?)?;
            let man = manifest("ridge-check", &setup, Some(dir), started, experiment.count());
            write_text(&dir.join("manifest.json"), &to_json_string(&man)?)?;
        }
        None => write_csv(sink(None)?)?,
    }
    for (i, slope) in check.trailing_slopes.iter().enumerate() {
        eprintln!("lambda{} log-log slope {slope:.3}", leading + i + 1);
    }
    eprintln!("leading drift {:.3e}", check.leading_drift);
    Ok(())
}

fn convergence(args: &SetupArgs, hs: &[f64], reference_h: f64, out: Option<&Path>) -> anyhow::Result<()> {
    let started = Instant::now();
    let setup = Setup::resolve(args, None)?;
    let experiment = CountingExperiment::new(&setup.experiment);
    let conv = fd_convergence(&experiment, &setup.system, &setup.basis, &setup.region, &setup.config, hs, reference_h)?;
    let n = setup.basis.n();

    let write_csv = |w: Box<dyn Write>| -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["h".to_string()];
        header.extend((1..=n).map(|i| format!("z{i}_error")));
        header.push("max_error".into());
        w.write_record(&header)?;
        for ((h, errs), max) in conv.h.iter().zip(&conv.errors).zip(conv.max_errors()) {
            w.write_record(std::iter::once(h).chain(errs).chain(std::iter::once(&max)).map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    };
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_csv(Box::new(create(&dir.join("fd_convergence.csv"))?))?;
            let man = manifest("fd-convergence", &setup, Some(dir), started, experiment.count());
            write_text(&dir.join("manifest.json"), &to_json_string(&man)?)?;
        }
        None => write_csv(sink(None)?)?,
    }
    Ok(())
}

fn predict(model_path: &Path, input: Option<&Path>, point: Option<Vec<f64>>, out: Option<&Path>) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model = SemiEmpiricalModel::from_json(&text).with_context(|| format!("loading model {}", model_path.display()))?;
    let m = model.symbols.len();

    let points: Vec<Vec<f64>> = match (input, point) {
        (_, Some(p)) => vec![p],
        (Some(path), None) => {
            let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
            let header = reader.headers()?.clone();
            let columns: Vec<usize> = model
                .symbols
                .iter()
                .map(|s| {
                    header
                        .iter()
                        .position(|h| h.trim() == s)
                        .with_context(|| format!("{} has no column `{s}`", path.display()))
                })
                .collect::<anyhow::Result<_>>()?;
            let mut points = Vec::new();
            for (row, record) in reader.records().enumerate() {
                let record = record?;
                let values = columns
                    .iter()
                    .map(|&c| {
                        let field = record.get(c).unwrap_or("").trim();
                        field.parse::<f64>().with_context(|| format!("row {row}: bad number `{field}`"))
                    })
                    .collect::<anyhow::Result<Vec<f64>>>()?;
                points.push(values);
            }
            points
        }
        (None, None) => bail!("pass --input FILE or --point"),
    };

    let mut w = csv::Writer::from_writer(sink(out)?);
    let mut header = model.symbols.clone();
    header.push("prediction".into());
    w.write_record(&header)?;
    for p in &points {
        if p.len() != m {
            bail!("point has {} values, the model expects {m}", p.len());
        }
        let value = model.predict(p)?;
        w.write_record(p.iter().chain(std::iter::once(&value)).map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}
