use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gmsdg::cli::{self, RunConfig};

/// Adaptive multiscale DG solver for high-contrast flow.
///
/// `GMSDG_THREADS` sets the worker count and `GMSDG_OUT` overrides the
/// output directory of every command.
#[derive(Parser)]
#[command(name = "gmsdg", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run { config: PathBuf },
    /// Run several configurations on the same problem and merge the histories.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Generate a permeability field, e.g. `channels:contrast=1e4,seed=7,n=256`.
    GenKappa { spec: String, out: PathBuf },
    /// Report the trace constants with and without oversampling.
    DiagEigs { config: PathBuf },
}

fn init_threads() -> gmsdg::Result<()> {
    if let Ok(v) = std::env::var("GMSDG_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| gmsdg::Error::InvalidArgument(format!("GMSDG_THREADS: cannot parse `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| gmsdg::Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn execute(args: Args) -> gmsdg::Result<()> {
    init_threads()?;
    let out = std::env::var_os("GMSDG_OUT").map(PathBuf::from);
    let out = out.as_deref();
    match args.command {
        Command::Run { config } => {
            let c = RunConfig::load(&config)?;
            let a = cli::run(&c, out)?;
            print!("{}", a.summary);
            println!("wrote {}", a.dir.display());
        }
        Command::Compare { configs } => {
            let cs = configs
                .iter()
                .map(|p| RunConfig::load(p))
                .collect::<gmsdg::Result<Vec<_>>>()?;
            let (path, _) = cli::compare(&cs, out)?;
            println!("wrote {}", path.display());
        }
        Command::GenKappa { spec, out: target } => {
            cli::gen_kappa(&spec, &target)?;
            println!("wrote {}", target.display());
        }
        Command::DiagEigs { config } => {
            let c = RunConfig::load(&config)?;
            let (path, d) = cli::diag_eigs(&c, out)?;
            println!("max Λ_snap            {:.6e}", d.max_plain());
            println!("max Λ_snap oversampled {:.6e}", d.max_oversampled());
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
