use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochlab_cli::{estimate_cost, exit, parse, plot_dir, run, validate, ExperimentConfig, Level, RunError};

#[derive(Parser)]
#[command(name = "stochlab", version, about = "Homogenization and multiscale FEM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and archive its outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory of the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Treat under-resolved perforations as errors.
        #[arg(long)]
        strict: bool,
    },
    /// Check a configuration without solving anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Regenerate the SVG plots of an archive from its CSV files.
    Plot {
        /// Archive directory.
        dir: PathBuf,
    },
}

fn load(path: &PathBuf, seed: Option<u64>, strict: bool) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.strict |= strict;
    Ok(cfg.with_defaults())
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            threads,
            strict,
        } => {
            if let Some(t) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                    eprintln!("error: --threads: {e}");
                    return code(exit::CONFIG);
                }
            }
            let cfg = match load(&config, seed, strict) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(exit::CONFIG);
                }
            };
            let Some(dir) = out.or_else(|| cfg.out.clone()) else {
                eprintln!("error: out: no output directory (set `out` or pass --out)");
                return code(exit::CONFIG);
            };
            match run(cfg, &dir) {
                Ok(m) => {
                    for w in &m.warnings {
                        eprintln!("warning: {w}");
                    }
                    println!("wrote {} files to {}", m.files.len() + 1, dir.display());
                    code(exit::OK)
                }
                Err(e) => {
                    eprintln!("{e}");
                    code(match e {
                        RunError::Config(_) => exit::CONFIG,
                        RunError::Solver(_) => exit::SOLVER,
                        RunError::Io(_) => exit::IO,
                    })
                }
            }
        }
        Command::Validate { config, strict } => {
            let cfg = match load(&config, None, strict) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(exit::CONFIG);
                }
            };
            let diags = validate(&cfg);
            for d in &diags {
                eprintln!("{d}");
            }
            if diags.iter().any(|d| d.level == Level::Error) {
                return code(exit::CONFIG);
            }
            println!("ok: {}", estimate_cost(&cfg));
            code(exit::OK)
        }
        Command::Plot { dir } => match plot_dir(&dir) {
            Ok(files) => {
                for f in files {
                    println!("{}", dir.join(f).display());
                }
                code(exit::OK)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(exit::IO)
            }
        },
    }
}
