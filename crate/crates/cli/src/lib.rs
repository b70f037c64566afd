//! Command implementations behind the `stconc` binary. Each command writes
//! its summary to the given sink and returns the process exit code.

pub mod format;

use std::io::Write;
use std::path::Path;

use state_concentration::equivalence::{check_equivalence, SearchOptions, Witness};
use state_concentration::{
    concentrate_with, count_parameters, make_state, reconstruct, ConcentrateOptions, ConcentrationTree,
    EquivalenceMode, EquivalenceVerdict, Error as CoreError, Family, LocalOperatorSet, PairingPlan, StateSpec, Verdict,
};

use format::{read_json, read_tensor, write_json, write_tensor, OpsFile, TreeFile, FORMAT_VERSION};

pub const EXIT_EQUIVALENT: u8 = 0;
pub const EXIT_INEQUIVALENT: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_DIMENSION: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid arguments: {0}")]
    Arguments(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Arguments(_) => EXIT_PARSE,
            CliError::Core(_) => EXIT_DIMENSION,
        }
    }
}

fn io_error(e: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        message: e.to_string(),
    }
}

fn options(order: usize, stop_order: usize, pairing: Option<&str>) -> Result<ConcentrateOptions, CliError> {
    let first_pairing = pairing.map(|p| PairingPlan::parse(p, order)).transpose()?;
    Ok(ConcentrateOptions {
        first_pairing,
        ..ConcentrateOptions::with_stop_order(stop_order)
    })
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
}

fn write_summary(out: &mut dyn Write, tree: &ConcentrationTree) -> std::io::Result<()> {
    writeln!(out, "{:<6} {:<24} {:<24} {:<16} {:>12}", "level", "input", "pairing", "local ranks", "core norm")?;
    for (l, level) in tree.levels.iter().enumerate() {
        let core_norm = level.mode_spectra[0].iter().map(|s| s * s).sum::<f64>().sqrt();
        writeln!(
            out,
            "{:<6} {:<24} {:<24} {:<16} {:>12.9}",
            l,
            join(&level.input_dims, "x"),
            level.pairing.to_string(),
            format!("({})", join(&level.residual_ranks, ",")),
            core_norm
        )?;
    }
    writeln!(
        out,
        "terminal: {} (order {}), norm {:.9}",
        join(tree.terminal.dims(), "x"),
        tree.terminal.order(),
        tree.terminal.norm()
    )?;
    writeln!(out, "tripartite extracts: {}", tree.tripartite_count())
}

pub fn cmd_concentrate(
    input: &Path,
    output: &Path,
    stop_order: usize,
    pairing: Option<&str>,
    out: &mut dyn Write,
) -> Result<u8, CliError> {
    let psi = read_tensor(input)?;
    let tree = concentrate_with(&psi, &options(psi.order(), stop_order, pairing)?)?;
    write_json(output, &TreeFile::from_tree(&tree))?;
    write_summary(out, &tree).map_err(io_error)?;
    Ok(0)
}

pub fn cmd_reconstruct(tree_path: &Path, output: &Path, out: &mut dyn Write) -> Result<u8, CliError> {
    let file: TreeFile = read_json(tree_path)?;
    if file.format_version != FORMAT_VERSION {
        return Err(CliError::Parse {
            path: tree_path.display().to_string(),
            message: format!("unsupported format_version {}", file.format_version),
        });
    }
    let tree = file.to_tree()?;
    let psi = reconstruct(&tree)?;
    write_tensor(output, &psi)?;
    writeln!(out, "reconstructed {} state, norm {:.9}", join(psi.dims(), "x"), psi.norm()).map_err(io_error)?;
    Ok(0)
}

pub struct CheckArgs<'a> {
    pub a: &'a Path,
    pub b: &'a Path,
    pub mode: EquivalenceMode,
    pub ops: Option<&'a Path>,
    pub budget: usize,
    pub seed: u64,
    pub stop_order: usize,
    pub pairing: Option<&'a str>,
}

fn write_verdict(out: &mut dyn Write, v: &EquivalenceVerdict) -> std::io::Result<()> {
    writeln!(out, "verdict: {}", v.status)?;
    match &v.witness {
        Some(Witness::Invariant(s)) => writeln!(out, "witness: {s}")?,
        Some(Witness::Certificate(c)) => writeln!(
            out,
            "witness: certificate over {} level(s), max |Y| {:.3e}, max lower-left {:.3e}",
            c.levels.len(),
            c.max_y_norm(),
            c.max_lower_left_norm()
        )?,
        None => writeln!(out, "witness: none")?,
    }
    writeln!(out, "residuals:")?;
    if v.residuals.is_empty() {
        writeln!(out, "  (none)")?;
    }
    for r in &v.residuals {
        writeln!(
            out,
            "  {:<56} {:>12.3e} {:>10.1e}  {}",
            r.name,
            r.value,
            r.tolerance,
            if r.passed() { "ok" } else { "FAIL" }
        )?;
    }
    Ok(())
}

pub fn cmd_check(args: &CheckArgs<'_>, out: &mut dyn Write) -> Result<u8, CliError> {
    let psi = read_tensor(args.a)?;
    let psi_p = read_tensor(args.b)?;
    if psi.dims() != psi_p.dims() {
        return Err(CoreError::ShapeMismatch {
            left: psi.dims().to_vec(),
            right: psi_p.dims().to_vec(),
        }
        .into());
    }
    let ops = match args.ops {
        Some(path) => {
            let file: OpsFile = read_json(path)?;
            let ops = file
                .ops
                .iter()
                .map(|m| {
                    m.to_matrix().map_err(|message| CliError::Parse {
                        path: path.display().to_string(),
                        message,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(LocalOperatorSet::new(ops, args.mode)?)
        }
        None => None,
    };
    let opts = options(psi.order(), args.stop_order, args.pairing)?;
    let search = SearchOptions::new(args.budget, args.seed);
    let verdict = check_equivalence(&psi, &psi_p, args.mode, ops.as_ref(), &search, &opts)?;
    write_verdict(out, &verdict).map_err(io_error)?;
    Ok(match verdict.status {
        Verdict::Equivalent => EXIT_EQUIVALENT,
        Verdict::Inequivalent => EXIT_INEQUIVALENT,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

pub fn cmd_params(dims: &[usize], out: &mut dyn Write) -> Result<u8, CliError> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(CliError::Arguments("dimensions must be positive".into()));
    }
    let n = count_parameters(dims)?;
    writeln!(out, "{n}").map_err(io_error)?;
    Ok(0)
}

fn parse_list<T: std::str::FromStr>(params: &[String]) -> Result<Vec<T>, CliError> {
    params
        .iter()
        .map(|p| {
            p.parse()
                .map_err(|_| CliError::Arguments(format!("cannot parse parameter {p:?}")))
        })
        .collect()
}

fn parse_four(params: &[String]) -> Result<[f64; 4], CliError> {
    let xs: Vec<f64> = parse_list(params)?;
    xs.try_into()
        .map_err(|_| CliError::Arguments("expected exactly four coefficients".into()))
}

/// `ghz <parties> <dim>`, `w <parties>`, `product|random <dims...>`,
/// `paper4 a1 a2 a3 a4`, `paper6 b1 b2 b3 b4`.
pub fn parse_family(family: &str, params: &[String]) -> Result<Family, CliError> {
    let counts = |n: usize| -> Result<Vec<usize>, CliError> {
        let xs: Vec<usize> = parse_list(params)?;
        if xs.len() != n {
            return Err(CliError::Arguments(format!("{family} takes {n} integer parameter(s)")));
        }
        Ok(xs)
    };
    Ok(match family {
        "ghz" => {
            let xs = counts(2)?;
            Family::Ghz { parties: xs[0], dim: xs[1] }
        }
        "w" => Family::W { parties: counts(1)?[0] },
        "product" => Family::Product { dims: parse_list(params)? },
        "random" => Family::Random { dims: parse_list(params)? },
        "paper4" => Family::FourQubitExample { a: parse_four(params)? },
        "paper6" => Family::SixQubitExample { b: parse_four(params)? },
        other => return Err(CliError::Arguments(format!("unknown family {other:?}"))),
    })
}

pub fn cmd_gen(family: &str, params: &[String], seed: u64, output: &Path, out: &mut dyn Write) -> Result<u8, CliError> {
    let family = parse_family(family, params)?;
    let psi = make_state(&StateSpec::new(family, seed))?;
    write_tensor(output, &psi)?;
    writeln!(out, "wrote {} state to {}", join(psi.dims(), "x"), output.display()).map_err(io_error)?;
    Ok(0)
}
