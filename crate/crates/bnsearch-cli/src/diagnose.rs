//! `bnsearch diagnose`: Gelman-Rubin scale reduction over growing prefixes
//! of trace files, with convergence verdicts at the 1.2 (loose) and 1.1
//! (strict) thresholds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bnsearch::diagnostics::{psrf, ScalarTraceSet};
use bnsearch::Error;
use clap::Args;

use crate::util::{ensure_out_dir, out_path, read_to_string, write_file};
use crate::{CliError, CliResult};

const LOOSE: f64 = 1.2;
const STRICT: f64 = 1.1;

#[derive(Args)]
pub struct DiagnoseArgs {
    /// Trace CSV files; each contributes one chain (or all of its score_*
    /// columns with --per-chain).
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Output directory for psrf.csv and verdict.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Scalar column to diagnose.
    #[arg(long, default_value = "mean_score")]
    pub scalar: String,
    /// Treat every score_* column of each file as its own chain (use with
    /// the per-chain files a run writes).
    #[arg(long, default_value_t = false)]
    pub per_chain: bool,
    /// Evaluate prefixes every this many iterations.
    #[arg(long, default_value_t = 25)]
    pub every: usize,
    /// Fraction of each prefix discarded from the front.
    #[arg(long, default_value_t = 0.5)]
    pub burn_in: f64,
}

fn parse_columns(path: &Path, text: &str) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return Err(CliError::Validation(format!("{}: empty file", path.display())));
    };
    let names: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(CliError::Validation(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                lineno + 2,
                names.len(),
                fields.len()
            )));
        }
        for (i, field) in fields.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                CliError::Validation(format!(
                    "{}:{}: bad number '{field}'",
                    path.display(),
                    lineno + 2
                ))
            })?;
            columns[i].push(value);
        }
    }
    Ok((names, columns))
}

fn load_chains(args: &DiagnoseArgs) -> CliResult<Vec<Vec<f64>>> {
    let mut chains: Vec<Vec<f64>> = Vec::new();
    for path in &args.traces {
        let text = read_to_string(path)?;
        let (names, columns) = parse_columns(path, &text)?;
        if args.per_chain {
            let mut found = false;
            for (name, column) in names.iter().zip(columns) {
                if name.starts_with("score_") {
                    chains.push(column);
                    found = true;
                }
            }
            if !found {
                return Err(CliError::Validation(format!(
                    "{}: no score_* columns",
                    path.display()
                )));
            }
        } else {
            let Some(idx) = names.iter().position(|n| n == &args.scalar) else {
                return Err(CliError::Validation(format!(
                    "{}: no column '{}'",
                    path.display(),
                    args.scalar
                )));
            };
            chains.push(columns.into_iter().nth(idx).expect("index in range"));
        }
    }
    if chains.len() < 2 {
        return Err(CliError::Validation(format!(
            "need at least 2 chains, found {}",
            chains.len()
        )));
    }
    let len = chains[0].len();
    if len == 0 {
        return Err(CliError::Validation("traces carry no iterations".into()));
    }
    for chain in &chains {
        if chain.len() != len {
            return Err(CliError::Validation(format!(
                "misaligned traces: {len} vs {} iterations",
                chain.len()
            )));
        }
    }
    Ok(chains)
}

pub fn run(args: &DiagnoseArgs) -> CliResult<()> {
    if args.every == 0 {
        return Err(CliError::Validation("--every must be positive".into()));
    }
    let chains = load_chains(args)?;
    let len = chains[0].len();

    let mut grid: Vec<usize> = (1..).map(|k| k * args.every).take_while(|&t| t <= len).collect();
    if grid.last() != Some(&len) {
        grid.push(len);
    }

    let mut csv = String::from("prefix_iterations,rhat,degenerate\n");
    let mut first_loose: Option<usize> = None;
    let mut first_strict: Option<usize> = None;
    let mut all_degenerate = true;
    for &t in &grid {
        let prefix: Vec<Vec<f64>> = chains.iter().map(|c| c[..t].to_vec()).collect();
        let set = ScalarTraceSet::with_burn_in(prefix, args.burn_in)
            .map_err(CliError::validation)?;
        match psrf(&set) {
            Ok(rhat) => {
                all_degenerate = false;
                if rhat <= LOOSE && first_loose.is_none() {
                    first_loose = Some(t);
                }
                if rhat <= STRICT && first_strict.is_none() {
                    first_strict = Some(t);
                }
                let _ = writeln!(csv, "{t},{rhat},0");
            }
            Err(Error::DegenerateChains) => {
                // Constant chains agree exactly; count it as convergence.
                if first_loose.is_none() {
                    first_loose = Some(t);
                }
                if first_strict.is_none() {
                    first_strict = Some(t);
                }
                let _ = writeln!(csv, "{t},NaN,1");
            }
            Err(Error::TooFewSamples { .. }) => {
                let _ = writeln!(csv, "{t},NaN,0");
            }
            Err(e) => return Err(CliError::runtime(e)),
        }
    }

    let describe = |first: Option<usize>, threshold: f64| -> String {
        match first {
            Some(t) => format!("R-hat <= {threshold} first reached at iteration {t}"),
            None => format!("R-hat <= {threshold} not reached within {len} iterations"),
        }
    };
    let identical = chains.windows(2).all(|w| w[0] == w[1]);
    let mut verdict = String::new();
    let _ = writeln!(verdict, "chains={} iterations={len}", chains.len());
    if all_degenerate {
        let _ = writeln!(verdict, "all chains constant: converged by degeneracy");
    } else if identical {
        let _ = writeln!(verdict, "all chains identical: converged by degeneracy");
    }
    let _ = writeln!(verdict, "{}", describe(first_loose, LOOSE));
    let _ = writeln!(verdict, "{}", describe(first_strict, STRICT));

    ensure_out_dir(&args.out)?;
    write_file(&out_path(&args.out, "psrf.csv"), &csv)?;
    write_file(&out_path(&args.out, "verdict.txt"), &verdict)?;
    print!("{verdict}");
    Ok(())
}
