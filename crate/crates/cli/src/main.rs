use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use swarmlab::experiments::{self, ExperimentSpec, Recipe, RunError, CSV_COLUMNS, OUTPUT_ROOT_ENV};

#[derive(Parser)]
#[command(name = "swarmlab", version, about = "Run chunk-scheduling experiments from JSON specs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment spec (or a manifest written by a previous run).
    Run {
        spec: PathBuf,
        /// Override the output directory named in the experiment file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the built-in figure recipes.
    ListRecipes,
    /// Compare a mean_field spec against a matching stochastic spec.
    Compare {
        spec_a: PathBuf,
        spec_b: PathBuf,
        #[arg(long, default_value = "compare")]
        output: PathBuf,
    },
}

fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from)
}

fn run(spec_path: &Path, output: Option<PathBuf>) -> Result<(), RunError> {
    let mut spec = ExperimentSpec::from_file(spec_path)?;
    if output.is_some() {
        spec.output_dir = output;
    }
    let manifest = experiments::run_experiment(&spec, output_root().as_deref())?;
    println!("{} finished in {:.2}s -> {}", manifest.kind, manifest.wall_time_s, manifest.output_dir.display());
    for f in &manifest.outputs {
        println!("  {f}");
    }
    Ok(())
}

fn compare(a: &Path, b: &Path, output: PathBuf) -> Result<(), RunError> {
    let (a, b) = (ExperimentSpec::from_file(a)?, ExperimentSpec::from_file(b)?);
    let dir = match output_root() {
        Some(root) if output.is_relative() => root.join(output),
        _ => output,
    };
    let r = experiments::compare_specs(&a, &b, &dir)?;
    println!(
        "{} degrees x {} indices; max |diff| {:.3e}, max z {:.2}; monotonicity violations: mean field {}, stochastic {}",
        r.degrees.len(),
        r.buffer_len,
        r.max_abs_diff,
        r.max_z,
        r.monotonicity_violations_mean_field,
        r.monotonicity_violations_stochastic
    );
    Ok(())
}

fn main() -> ExitCode {
    let help = format!(
        "Output CSV columns per kind:\n{CSV_COLUMNS}\n\n\
         Relative output directories resolve against ${OUTPUT_ROOT_ENV} when set.\n\
         Exit codes: 0 success, 2 invalid spec, 3 solver failure (partial outputs and a FAILED marker kept), 1 I/O error."
    );
    let matches = Cli::command().after_long_help(help).get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let result = match cli.command {
        Command::Run { spec, output } => run(&spec, output),
        Command::ListRecipes => {
            for r in Recipe::ALL {
                println!("{:<38} {}", r.name(), r.description());
            }
            Ok(())
        }
        Command::Compare { spec_a, spec_b, output } => compare(&spec_a, &spec_b, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
