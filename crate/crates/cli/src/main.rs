use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use focus_cli::{
    cmd_gen, cmd_run, cmd_sweep, CliError, CliResult, GenSpec, Mode, RunSpec, SweepParam, SweepSpec, TraceSource,
};
use focus_core::{Dims, FocusConfig, TraceGenConfig};

/// Trace-driven simulator of a streaming token-concentration VLM accelerator.
#[derive(Debug, Parser)]
#[command(name = "focus", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic video-token trace (.fctr).
    Gen(GenArgs),
    /// Simulate one configuration and write reports.
    Run(RunArgs),
    /// Sweep one configuration parameter and write a long-form CSV.
    Sweep(SweepArgs),
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite value >= 0"))
    }
}

fn grid_shape(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or_else(|| format!("{s:?} is not HxW"))?;
    let h: usize = h.parse().map_err(|_| format!("{s:?} is not HxW"))?;
    let w: usize = w.parse().map_err(|_| format!("{s:?} is not HxW"))?;
    if h == 0 || w == 0 {
        return Err("grid sides must be >= 1".into());
    }
    Ok((h, w))
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    frames: usize,
    /// Tokens per frame as HxW.
    #[arg(long, value_parser = grid_shape)]
    hw: (usize, usize),
    #[arg(long)]
    dmodel: usize,
    /// Probability of copying the same position from the previous frame.
    #[arg(long, default_value = "0", value_parser = unit_interval)]
    temporal: f64,
    /// Probability of copying the left (or upper) neighbour.
    #[arg(long, default_value = "0", value_parser = unit_interval)]
    spatial: f64,
    /// Std-dev of the Gaussian noise added to copied tokens.
    #[arg(long, default_value = "0", value_parser = non_negative)]
    noise: f64,
    /// Number of text tokens appended after the image tokens.
    #[arg(long, default_value_t = 0)]
    text: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Token trace (.fctr) for functional runs.
    #[arg(long, required_unless_present = "sparsity", conflicts_with = "sparsity")]
    trace: Option<PathBuf>,
    /// Layer-wise sparsity CSV for timing-only runs.
    #[arg(long)]
    sparsity: Option<PathBuf>,
    /// Defaults to `functional` with --trace and `timing` with --sparsity.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Compare against the dense reference and write oracle.json.
    #[arg(long)]
    oracle: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed of the random layer weights.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    sweep_param: SweepParam,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    sweep_values: Vec<String>,
}

impl RunArgs {
    fn into_spec(self) -> CliResult<RunSpec> {
        let config = match &self.config {
            Some(path) => FocusConfig::load(path).map_err(|e| match e {
                focus_core::FocusError::Io(source) => CliError::Io {
                    path: path.clone(),
                    source,
                },
                other => CliError::Validation(format!("{}: {other}", path.display())),
            })?,
            None => FocusConfig::default(),
        };
        let source = match (self.trace, self.sparsity) {
            (Some(t), None) => TraceSource::Trace(t),
            (None, Some(s)) => TraceSource::Sparsity(s),
            _ => {
                return Err(CliError::Validation(
                    "exactly one of --trace or --sparsity is required".into(),
                ))
            }
        };
        let mode = self.mode.unwrap_or(match source {
            TraceSource::Trace(_) => Mode::Functional,
            TraceSource::Sparsity(_) => Mode::Timing,
        });
        Ok(RunSpec {
            config,
            source,
            mode,
            oracle: self.oracle,
            out: self.out,
            seed: self.seed,
        })
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(g) => {
            let dims = Dims {
                frames: g.frames,
                rows: g.hw.0,
                cols: g.hw.1,
                text_tokens: g.text,
                d_model: g.dmodel,
                heads: 1,
                head_dim: g.dmodel,
            };
            cmd_gen(&GenSpec {
                gen: TraceGenConfig {
                    dims,
                    temporal_similarity: g.temporal,
                    spatial_similarity: g.spatial,
                    noise_sigma: g.noise,
                    seed: g.seed,
                },
                output: g.output,
            })
        }
        Command::Run(r) => {
            let spec = r.into_spec()?;
            let outcome = cmd_run(&spec)?;
            let rep = &outcome.report;
            println!(
                "total_cycles={} gemm_cycles={} stall_cycles={} sparsity={:.4} utilization={:.4}",
                rep.total_cycles, rep.gemm_cycles, rep.stall_cycles, rep.sparsity, rep.pe_utilization
            );
            if let Some(err) = outcome.max_abs_error {
                println!("max_abs_error={err}");
            }
            Ok(())
        }
        Command::Sweep(s) => {
            let spec = SweepSpec {
                base: s.run.into_spec()?,
                param: s.sweep_param,
                values: s.sweep_values,
            };
            cmd_sweep(&spec)?;
            println!("wrote {}", spec.base.out.join("sweep.csv").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
