use breakfvm_cli::commands::{
    cmd_simulate, cmd_stable_dt, cmd_study, cmd_verify, cmd_weak_residual, lower,
};
use breakfvm_cli::config::parse_config;
use breakfvm_cli::{configure_threads, CliError};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Finite-volume solver for the nonlinear collision-induced breakage
/// equation: simulation, stability reports, refinement studies and
/// verification suites.
#[derive(Parser)]
#[command(name = "breakfvm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accept a dt_override above the stability bound.
    #[arg(long)]
    force_dt: bool,
    /// Disable the post-step runtime assertions.
    #[arg(long)]
    no_assert: bool,
    /// Ignore unknown configuration keys instead of rejecting them.
    #[arg(long)]
    lax: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Advance the initial data to the horizon and write snapshots and
    /// moments.
    Simulate(CommonArgs),
    /// Print the stability constant and the largest stable time step.
    StableDt(CommonArgs),
    /// Nested-mesh self-convergence study.
    Study {
        #[command(flatten)]
        common: CommonArgs,
        /// Cell counts of the refinement ladder (multiples of the configured
        /// mesh).
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
        i_list: Vec<usize>,
    },
    /// Run the invariant checks and write a pass/fail report.
    Verify(CommonArgs),
    /// Evaluate the weak-form residual of the discrete solution.
    WeakResidual {
        #[command(flatten)]
        common: CommonArgs,
        /// Test function: "eps2" or "eps-edge".
        #[arg(long, default_value = "eps2")]
        phi: String,
        /// Optional refinement ladder; the step refines with the mesh.
        #[arg(long, value_delimiter = ',')]
        i_list: Option<Vec<usize>>,
        /// Support cutoff of the test function (default 0.9 T).
        #[arg(long)]
        t_cut: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(common) => with_lowered(common, cmd_simulate),
        Command::StableDt(common) => with_lowered(common, cmd_stable_dt),
        Command::Study { common, i_list } => {
            with_lowered(common, |low, opts| cmd_study(low, opts, i_list))
        }
        Command::Verify(common) => with_lowered(common, cmd_verify),
        Command::WeakResidual {
            common,
            phi,
            i_list,
            t_cut,
        } => with_lowered(common, |low, opts| {
            cmd_weak_residual(low, opts, phi, i_list.as_deref(), *t_cut)
        }),
    }
}

fn with_lowered(
    common: &CommonArgs,
    action: impl FnOnce(&breakfvm_cli::commands::Lowered, &breakfvm::SimOptions) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Config(format!("cannot read {:?}: {e}", common.config)))?;
    let config = parse_config(&text, !common.lax)?;
    let config_dir = common
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let options = config.sim_options(common.force_dt, common.no_assert);
    let lowered = lower(config, config_dir, common.out.as_deref())?;
    action(&lowered, &options)
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
