use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dirichlet_lab::config::{Flags, RunConfig};

#[derive(Parser)]
#[command(name = "dirichlet-lab", version, about = "Semilinear Dirichlet problems for jump processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and run its verification suites.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Suites to run (verify, trace, mc, wos, estimates); default all.
        #[arg(long = "suite", num_args = 1..)]
        suites: Vec<String>,
        /// Tolerance override, e.g. `verify.residual=1e-7`.
        #[arg(long = "tol", value_name = "KEY=VAL")]
        tol: Vec<String>,
    },
    /// Write a seeded batch of random graph problems.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value = "specs")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: Cli) -> anyhow::Result<bool> {
    dirichlet_lab::init_threads()?;
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            suites,
            tol,
        } => {
            let flags = Flags { out, seed, suites, tol };
            let cfg = RunConfig::load(&config, &flags)?;
            let res = dirichlet_lab::run(&cfg)?;
            let failures = res.failures();
            println!(
                "{} contracts, {} failed; artifacts in {}",
                res.contracts.len(),
                failures.len(),
                cfg.out.display()
            );
            for c in &failures {
                println!("FAIL {} = {:e} (tol {:e})", c.name, c.value, c.tol);
            }
            for s in &res.skipped {
                println!("skipped suite `{s}` (not supported by {})", cfg.spec.backend_name());
            }
            Ok(failures.is_empty())
        }
        Command::Gen { seed, count, out } => {
            for (path, hash) in dirichlet_lab::gen::generate(&out, seed, count)? {
                println!("{hash}  {}", path.display());
            }
            Ok(true)
        }
    }
}
