use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use state_concentration::EquivalenceMode;
use state_concentration_cli::{cmd_check, cmd_concentrate, cmd_gen, cmd_params, cmd_reconstruct, CheckArgs, EXIT_PARSE};

/// Concentrate multipartite states into tripartite pieces and test local
/// equivalence.
#[derive(Parser)]
#[command(name = "stconc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Lu,
    Slocc,
}

#[derive(Subcommand)]
enum Command {
    /// Concentrate a state file into a tree file.
    Concentrate {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(2..=3))]
        stop_order: u8,
        /// First-level grouping, e.g. "0-1,2-3,4".
        #[arg(long)]
        pairing: Option<String>,
    },
    /// Rebuild the state from a tree file.
    Reconstruct { tree: PathBuf, output: PathBuf },
    /// Decide LU or SLOCC equivalence of two state files.
    Check {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "lu")]
        mode: Mode,
        /// Operator file relating the states.
        #[arg(long)]
        ops: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(2..=3))]
        stop_order: u8,
        #[arg(long)]
        pairing: Option<String>,
    },
    /// Worst-case real parameter count of a state space.
    Params {
        #[arg(required = true)]
        dims: Vec<usize>,
    },
    /// Generate a state: ghz, w, product, random, paper4 or paper6.
    Gen {
        family: String,
        #[arg(allow_negative_numbers = true)]
        params: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_PARSE);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let mut stdout = io::stdout().lock();
    let result = match &cli.command {
        Command::Concentrate {
            input,
            output,
            stop_order,
            pairing,
        } => cmd_concentrate(input, output, *stop_order as usize, pairing.as_deref(), &mut stdout),
        Command::Reconstruct { tree, output } => cmd_reconstruct(tree, output, &mut stdout),
        Command::Check {
            a,
            b,
            mode,
            ops,
            budget,
            seed,
            stop_order,
            pairing,
        } => cmd_check(
            &CheckArgs {
                a,
                b,
                mode: match mode {
                    Mode::Lu => EquivalenceMode::Lu,
                    Mode::Slocc => EquivalenceMode::Slocc,
                },
                ops: ops.as_deref(),
                budget: *budget,
                seed: *seed,
                stop_order: *stop_order as usize,
                pairing: pairing.as_deref(),
            },
            &mut stdout,
        ),
        Command::Params { dims } => cmd_params(dims, &mut stdout),
        Command::Gen {
            family,
            params,
            seed,
            output,
        } => cmd_gen(family, params, *seed, output, &mut stdout),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
