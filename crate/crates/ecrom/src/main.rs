use clap::{Args, Parser, Subcommand};
use ecrom::cases::{parse_method, CaseConfig};
use ecrom::pipeline::{run_stage, Stage};
use std::path::PathBuf;

/// Energy-conserving reduced-order modelling of 2-D incompressible flow.
#[derive(Parser)]
#[command(name = "ecrom", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order model and store snapshots.
    Fom(RunArgs),
    /// Build the reduced basis from stored snapshots.
    Pod(RunArgs),
    /// Precompute reduced operators and run the reduced model.
    Rom(RunArgs),
    /// Rerun the reduced model and write error traces against the snapshots.
    Compare(RunArgs),
    /// Full pipeline: fom, pod, rom, compare in one pass.
    All(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Override the grid resolution.
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    grid: Option<Vec<usize>>,

    /// Override the mode counts, comma separated (e.g. 2,4,8).
    #[arg(long, value_delimiter = ',', value_name = "M1,M2,...")]
    modes: Option<Vec<usize>>,

    /// Use the momentum-conserving constrained basis.
    #[arg(long)]
    constrained: bool,

    /// Integrator override: the full-order one for `fom`, the reduced one
    /// for every other stage.
    #[arg(long, value_name = "imr|rk4")]
    method: Option<String>,

    /// Directory for all artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Fom(a) => (Stage::Fom, a),
        Command::Pod(a) => (Stage::Pod, a),
        Command::Rom(a) => (Stage::Rom, a),
        Command::Compare(a) => (Stage::Compare, a),
        Command::All(a) => (Stage::All, a),
    };
    if let Err(e) = run(stage, args) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(stage: Stage, args: RunArgs) -> ecrom::Result<()> {
    let mut cfg = CaseConfig::from_toml_file(&args.config)?;
    if let Some(grid) = &args.grid {
        cfg.nx = grid[0];
        cfg.ny = grid[1];
    }
    if let Some(modes) = args.modes {
        cfg.modes = modes;
    }
    if args.constrained {
        cfg.constrained = true;
    }
    if let Some(name) = &args.method {
        let method = parse_method(name)?;
        match stage {
            Stage::Fom => cfg.fom.method = method,
            _ => cfg.rom.method = method,
        }
    }
    cfg.validate()?;
    run_stage(stage, &cfg, &args.out)
}
