//! Run setup: defaults, then an optional JSON config file, then flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::Args;
use serde::Deserialize;

use pigroups::pipeflow::{pipe_quantity_system, regime_box, FrictionModel, PipeFlow, RegimeName};
use pigroups::{AlgorithmConfig, Experiment, ExternalExperiment, PiBasis, QuadratureSpec, QuantitySystem, RegimeBox};

/// Problem and experiment selection shared by the analysis commands.
#[derive(Debug, Clone, Args)]
pub struct SetupArgs {
    /// Quantity system JSON (defaults to the built-in pipe system).
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Regime box JSON.
    #[arg(long = "box", value_name = "FILE", conflicts_with = "regime")]
    pub box_file: Option<PathBuf>,
    /// Built-in pipe regime: laminar, turbulent or high_re.
    #[arg(long)]
    pub regime: Option<RegimeName>,
    /// JSON file with default settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `pipe` or `exec`.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Executable for `--experiment exec`.
    #[arg(long)]
    pub program: Option<PathBuf>,
    /// Comma-separated arguments passed to the program.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub args: Option<Vec<String>>,
    /// Friction model of the pipe experiment: colebrook, piecewise or piecewise:<Re_c>.
    #[arg(long)]
    pub friction: Option<FrictionModel>,
    /// Per-batch subprocess timeout in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Points per subprocess batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Quadrature: tensor:<p> or mc:<N>.
    #[arg(long)]
    pub quad: Option<QuadratureSpec>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Algorithm knobs of `analyze`.
#[derive(Debug, Clone, Args)]
pub struct AlgorithmArgs {
    /// 1 (response surface) or 2 (finite differences).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub algorithm: Option<u8>,
    /// Finite-difference step in log-group space.
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Latin hypercube design size.
    #[arg(long)]
    pub design: Option<usize>,
    /// Polynomial degree of the response surface.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Hold-out points used to score the surface.
    #[arg(long)]
    pub holdout: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    system: Option<PathBuf>,
    #[serde(rename = "box")]
    box_file: Option<PathBuf>,
    regime: Option<String>,
    experiment: Option<String>,
    program: Option<PathBuf>,
    args: Option<Vec<String>>,
    friction: Option<String>,
    timeout: Option<f64>,
    batch_size: Option<usize>,
    algorithm: Option<u8>,
    h: Option<f64>,
    degree: Option<usize>,
    quadrature: Option<String>,
    design: Option<usize>,
    holdout: Option<usize>,
    seed: Option<u64>,
}

impl FileConfig {
    fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: FileConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // file paths inside a config are relative to the config itself
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.system, &mut cfg.box_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Fully merged settings of one run.
pub struct Setup {
    pub system: QuantitySystem,
    pub basis: PiBasis,
    pub region: RegimeBox,
    pub experiment: Box<dyn Experiment>,
    pub config: AlgorithmConfig,
    pub algorithm: u8,
    pub input_paths: Vec<String>,
}

fn parse_with<T: std::str::FromStr>(text: &str, what: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    text.parse::<T>().map_err(|e| anyhow::anyhow!("invalid {what} `{text}`: {e}"))
}

impl Setup {
    pub fn resolve(setup: &SetupArgs, algo: Option<&AlgorithmArgs>) -> anyhow::Result<Setup> {
        let file = match &setup.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mut input_paths: Vec<String> = setup.config.iter().map(|p| p.display().to_string()).collect();

        let system = match setup.system.clone().or(file.system) {
            Some(path) => {
                input_paths.push(path.display().to_string());
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                QuantitySystem::from_json(&text).with_context(|| format!("loading system {}", path.display()))?
            }
            None => pipe_quantity_system(),
        };
        let basis = PiBasis::for_system(&system)?;

        let regime = match (&setup.regime, &file.regime) {
            (Some(r), _) => Some(*r),
            (None, Some(text)) => Some(parse_with::<RegimeName>(text, "regime")?),
            (None, None) => None,
        };
        let box_file = if setup.regime.is_some() { setup.box_file.clone() } else { setup.box_file.clone().or(file.box_file) };
        let region = match (box_file, regime) {
            (Some(path), _) => {
                input_paths.push(path.display().to_string());
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                RegimeBox::from_json(&text, &system).with_context(|| format!("loading box {}", path.display()))?
            }
            (None, Some(r)) => regime_box(r),
            (None, None) => bail!("no region given: pass --box FILE or --regime NAME"),
        };

        let kind = setup.experiment.as_deref().or(file.experiment.as_deref()).unwrap_or("pipe");
        let experiment: Box<dyn Experiment> = match kind {
            "pipe" => {
                if system.m() != 5 {
                    bail!("the pipe experiment needs the five pipe variables, the system has {}", system.m());
                }
                let model = match (&setup.friction, &file.friction) {
                    (Some(m), _) => *m,
                    (None, Some(text)) => parse_with::<FrictionModel>(text, "friction model")?,
                    (None, None) => FrictionModel::default(),
                };
                Box::new(PipeFlow::new(model))
            }
            "exec" => {
                let program = setup
                    .program
                    .clone()
                    .or(file.program)
                    .context("--experiment exec needs --program")?;
                let mut external = ExternalExperiment::new(program, system.symbols())
                    .with_args(setup.args.clone().or(file.args).unwrap_or_default());
                if let Some(size) = setup.batch_size.or(file.batch_size) {
                    if size == 0 {
                        bail!("batch size must be positive");
                    }
                    external = external.with_batch_size(size);
                }
                if let Some(seconds) = setup.timeout.or(file.timeout) {
                    if !(seconds > 0.0 && seconds.is_finite()) {
                        bail!("timeout must be a positive number of seconds, got {seconds}");
                    }
                    external = external.with_timeout(Some(Duration::from_secs_f64(seconds)));
                }
                Box::new(external)
            }
            other => bail!("unknown experiment `{other}` (expected pipe or exec)"),
        };

        let mut config = AlgorithmConfig::default();
        if let Some(v) = file.h {
            config.h = v;
        }
        if let Some(v) = file.degree {
            config.degree = v;
        }
        if let Some(text) = &file.quadrature {
            config.quadrature = parse_with::<QuadratureSpec>(text, "quadrature")?;
        }
        if let Some(v) = file.design {
            config.design = v;
        }
        if let Some(v) = file.holdout {
            config.holdout = v;
        }
        if let Some(v) = file.seed {
            config.seed = v;
        }
        if let Some(q) = setup.quad {
            config.quadrature = q;
        }
        if let Some(s) = setup.seed {
            config.seed = s;
        }
        let mut algorithm = file.algorithm.unwrap_or(2);
        if let Some(a) = algo {
            algorithm = a.algorithm.unwrap_or(algorithm);
            config.h = a.h.unwrap_or(config.h);
            config.design = a.design.unwrap_or(config.design);
            config.degree = a.degree.unwrap_or(config.degree);
            config.holdout = a.holdout.unwrap_or(config.holdout);
        }
        if !(1..=2).contains(&algorithm) {
            bail!("algorithm must be 1 or 2, got {algorithm}");
        }
        // a rejected setting is a configuration problem, whatever the library calls it
        config.validate().map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;

        Ok(Setup { system, basis, region, experiment, config, algorithm, input_paths })
    }
}
