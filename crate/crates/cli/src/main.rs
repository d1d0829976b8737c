use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use repscen::mip::SolverConfig;
use repscen_cli::{effective_config, solve_mps_file, stages, CliError, Context, TrainKind};

#[derive(Parser)]
#[command(name = "repscen", version, about = "Representative-scenario learning pipeline")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for instance-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory holding upstream artifacts; defaults to the output directory.
    #[arg(long = "in", global = true)]
    input: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Lr,
    Ann,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random facility-location instances.
    Generate,
    /// Solve each instance exactly and search for its representative scenario.
    Label,
    /// Build the feature/label dataset.
    Featurize,
    /// Fit the regression models.
    Train {
        #[arg(long, value_enum, default_value_t = Kind::Both)]
        kind: Kind,
    },
    /// Run every method on the evaluation split.
    Evaluate,
    /// Summary statistics, scatter and histogram data.
    Report,
    /// All stages in order.
    Run,
    /// Print the effective configuration as TOML.
    PrintConfig,
    /// Solve an MPS file with the built-in engine (usable as an external backend).
    SolveMps {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        gap: f64,
        #[arg(long, default_value_t = 600.0)]
        time_limit: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::SolveMps { input, output, gap, time_limit } = &cli.command {
        let cfg = SolverConfig { gap_limit: *gap, time_limit: *time_limit, ..Default::default() };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        return solve_mps_file(input, output, &cfg);
    }
    let cfg = effective_config(cli.config.as_deref(), cli.seed, cli.out)?;
    if let Command::PrintConfig = cli.command {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    let ctx = Context::new(cfg, cli.input, cli.jobs);
    match cli.command {
        Command::Generate => stages::generate(&ctx),
        Command::Label => stages::label(&ctx),
        Command::Featurize => stages::featurize(&ctx),
        Command::Train { kind } => stages::train(
            &ctx,
            match kind {
                Kind::Lr => TrainKind::Lr,
                Kind::Ann => TrainKind::Ann,
                Kind::Both => TrainKind::Both,
            },
        ),
        Command::Evaluate => stages::evaluate(&ctx),
        Command::Report => stages::report(&ctx),
        Command::Run => stages::run_all(&ctx),
        Command::PrintConfig | Command::SolveMps { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
