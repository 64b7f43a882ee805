use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hotcake::commands::{self, CommandError, CommandResult, ConfigOverrides, FixtureKind};

/// Compress convolution kernels by higher-order Tucker decomposition.
#[derive(Parser)]
#[command(name = "hotcake", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the VBMF centre ranks of a 4-way kernel as JSON.
    Ranks {
        tensor: PathBuf,
        #[arg(long, default_value_t = 2)]
        branches: usize,
        #[arg(long)]
        rsvd: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decompose every layer of a manifest into stage files and a report.
    Decompose {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        branches: Option<usize>,
        #[arg(long)]
        diameter: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rsvd: bool,
        /// Per-layer parameter cap for the rank search.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Check decomposed layers against the direct convolution.
    Verify {
        manifest: PathBuf,
        decomposed_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Side of the square random inputs.
        #[arg(long, default_value_t = 8)]
        size: usize,
        /// Also write the JSON result here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a report.json as a table with the compression order.
    Report {
        report: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate seeded synthetic tensors.
    Fixture {
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
        /// Relative noise for planted tensors, std for noise-matrix.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 100)]
        rows: usize,
        #[arg(long, default_value_t = 60)]
        cols: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    PlantedTucker,
    NoiseMatrix,
    Example2,
}

impl From<Kind> for FixtureKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::PlantedTucker => FixtureKind::PlantedTucker,
            Kind::NoiseMatrix => FixtureKind::NoiseMatrix,
            Kind::Example2 => FixtureKind::Example2,
        }
    }
}

fn run(cmd: Command) -> CommandResult<i32> {
    match cmd {
        Command::Ranks { tensor, branches, rsvd, seed } => {
            let args = commands::RanksArgs { tensor, branches, use_rsvd: rsvd, seed };
            print!("{}", commands::ranks(&args)?);
        }
        Command::Decompose { manifest, out, branches, diameter, seed, rsvd, budget } => {
            let overrides = ConfigOverrides { branches, diameter, seed, use_rsvd: rsvd, budget };
            let args = commands::DecomposeArgs { manifest, out_dir: out.clone(), overrides };
            let r = commands::decompose(&args)?;
            let compressed = r.order.len();
            println!(
                "{} layers, {compressed} compressed, {:.2}x overall; wrote {}",
                r.layers.len(),
                r.totals.compression_ratio,
                out.join(commands::REPORT_FILE).display()
            );
        }
        Command::Verify { manifest, decomposed_dir, trials, seed, size, out } => {
            let args = commands::VerifyArgs { manifest, decomposed_dir, trials, seed, input_size: size };
            let r = commands::verify(&args)?;
            let json = r.to_json();
            if let Some(p) = out {
                hotcake::io::write_atomic(&p, json.as_bytes()).map_err(CommandError::from)?;
            }
            print!("{json}");
            return Ok(r.exit_code());
        }
        Command::Report { report, csv } => {
            print!("{}", commands::report(&report, csv.as_deref())?);
        }
        Command::Fixture { kind, out, seed, dims, ranks, noise, rows, cols } => {
            let args = commands::FixtureArgs { kind: kind.into(), out_dir: out, seed, dims, ranks, noise, rows, cols };
            for p in commands::fixture(&args)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(commands::EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::with_thread_cap(|| run(cli.command)).and_then(|r| r) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("hotcake: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
