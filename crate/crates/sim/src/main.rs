use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phocnn::commands::{self, OutputStatus};
use phocnn::config::{Overrides, RunConfig};
use phocnn::CliError;
use phocnn_core::perf::PowerMode;
use phocnn_core::training::Datapath;

#[derive(Parser)]
#[command(name = "phocnn", version, about = "Photonic CNN accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a benchmark on MNIST and write accuracy, checkpoint and manifest.
    Train(Common),
    /// Evaluate a checkpoint on the test set.
    Infer(Common),
    /// Latency, throughput, energy and pipeline timeline.
    Perf(PerfArgs),
    /// Accuracy over a noise parameter grid.
    Sweep(Common),
    /// Check a run directory against its manifest.
    Report {
        /// Run directory; defaults to the configured output directory.
        dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<String>,
    /// golden or photonic.
    #[arg(long)]
    datapath: Option<String>,
    /// aggregate or per_unit.
    #[arg(long)]
    power_mode: Option<String>,
    /// off, default, or a comma-separated list of noise sites.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct PerfArgs {
    #[command(flatten)]
    common: Common,
    /// Square input size in pixels.
    #[arg(long)]
    image: Option<usize>,
    /// Comma-separated converter resolutions, e.g. 4,8,16.
    #[arg(long, value_delimiter = ',')]
    resolution_sweep: Option<Vec<u32>>,
}

fn config(c: &Common, image: Option<usize>, resolutions: Option<Vec<u32>>) -> Result<RunConfig, CliError> {
    let parse_err = |e: phocnn_core::Error| CliError::Config(e.to_string());
    let overrides = Overrides {
        seed: c.seed,
        out: c.out.clone(),
        benchmark: c.benchmark.clone(),
        datapath: c.datapath.as_deref().map(str::parse::<Datapath>).transpose().map_err(parse_err)?,
        power_mode: c.power_mode.as_deref().map(str::parse::<PowerMode>).transpose().map_err(parse_err)?,
        noise: c.noise.clone(),
        epochs: c.epochs,
        checkpoint: c.checkpoint.clone(),
        image,
        resolutions,
    };
    RunConfig::load(c.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Train(c) => {
            let cfg = config(&c, None, None)?;
            let rows = commands::train(&cfg)?;
            match rows.last() {
                Some(r) => println!("trained {} epochs: test accuracy {:.4}", rows.len(), r.test_accuracy),
                None => println!("0 epochs: wrote the initial weights"),
            }
            println!("outputs in {}", cfg.out.display());
        }
        Cmd::Infer(c) => {
            let cfg = config(&c, None, None)?;
            let e = commands::infer(&cfg)?;
            println!("samples      {}", e.total);
            println!("accuracy     {:.4}", e.accuracy());
            println!("per          {:.2}%", e.per());
            println!("saturations  {}", e.counters.saturations);
            println!("stuck        {}", e.counters.stuck_updates);
        }
        Cmd::Perf(p) => {
            let cfg = config(&p.common, p.image, p.resolution_sweep)?;
            for m in commands::perf(&cfg)? {
                println!("{:<44} {:>16} {:<12} {}", m.metric, m.value, m.unit, m.mode);
            }
        }
        Cmd::Sweep(c) => {
            let cfg = config(&c, None, None)?;
            for r in commands::sweep(&cfg)? {
                println!(
                    "{:<10} accuracy {:.4} ± {:.4}  per delta {:+.2} pp",
                    r.point, r.accuracy_mean, r.accuracy_std, r.per_delta_mean
                );
            }
        }
        Cmd::Report { dir, common } => {
            let dir = match dir {
                Some(d) => d,
                None => config(&common, None, None)?.out,
            };
            let (m, status) = commands::report(&dir)?;
            println!("{} {} ({}), seed {}", m.tool, m.version, m.git_rev, m.seed);
            println!("command {}, config sha256 {}", m.command, m.config_sha256);
            let mut bad = Vec::new();
            for (name, s) in status {
                println!("  {name:<20} {s:?}");
                if s != OutputStatus::Ok {
                    bad.push(name);
                }
            }
            if !bad.is_empty() {
                return Err(CliError::Config(format!("outputs do not match the manifest: {}", bad.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
