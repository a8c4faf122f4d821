//! `bnsearch generate`: seeded benchmark artifacts plus a manifest that
//! records the generating network's train score and test log loss.

use std::collections::BTreeMap;
use std::path::PathBuf;

use bnsearch::benchmark::{generate as generate_benchmark, BenchmarkSpec};
use bnsearch::bn::format::write_network;
use bnsearch::dataset::{write_assignment, write_csv, CompletedView};
use bnsearch::diagnostics::log_loss;
use bnsearch::scoring::{structure_score, FamilyScoreCache, ScoreConfig};
use clap::Args;

use crate::util::{
    ensure_out_dir, key_value_block, out_path, parse_prior, prior_name, write_file,
};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct GenerateArgs {
    /// Output directory for all artifacts.
    #[arg(long)]
    pub out: PathBuf,
    /// Layer sizes, e.g. 1x3x3 (first layer = roots).
    #[arg(long, default_value = "1x3x3")]
    pub layers: String,
    /// Arity of every variable.
    #[arg(long, default_value_t = 3)]
    pub arity: usize,
    /// Cap on previous-layer parents per variable.
    #[arg(long, default_value_t = 4)]
    pub max_parents: usize,
    #[arg(long, default_value_t = 1000)]
    pub train_cases: usize,
    #[arg(long, default_value_t = 1000)]
    pub test_cases: usize,
    /// MCAR rate applied to the training set only.
    #[arg(long, default_value_t = 0.1)]
    pub missing_rate: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Prior recorded in the manifest scores (k2 or bdeu).
    #[arg(long, default_value = "k2")]
    pub prior: String,
    #[arg(long, default_value_t = 1.0)]
    pub ess: f64,
}

fn parse_layers(text: &str) -> CliResult<Vec<usize>> {
    let layers: Result<Vec<usize>, _> = text.split('x').map(str::parse).collect();
    match layers {
        Ok(layers) if !layers.is_empty() && layers.iter().all(|&l| l > 0) => Ok(layers),
        _ => Err(CliError::Validation(format!(
            "bad layer spec '{text}' (expected e.g. 1x3x3)"
        ))),
    }
}

pub fn run(args: &GenerateArgs) -> CliResult<()> {
    let layers = parse_layers(&args.layers)?;
    let prior = parse_prior(&args.prior)?;
    let spec = BenchmarkSpec {
        layers,
        arity: args.arity,
        max_parents: args.max_parents,
        train_cases: args.train_cases,
        test_cases: args.test_cases,
        missing_rate: args.missing_rate,
        seed: args.seed,
    };
    let bench = generate_benchmark(&spec).map_err(CliError::validation)?;

    // Reference scores for the manifest: the generating structure on the
    // truth-completed train view, and the generating network's holdout log
    // loss. `cmd evaluate` reproduces both bit-for-bit from the files.
    let score_cfg = ScoreConfig {
        prior,
        ess: args.ess,
        max_parents: bench.network.n().saturating_sub(1),
        ..ScoreConfig::default()
    };
    let view = CompletedView::new(&bench.train, &bench.mask, &bench.truth)
        .map_err(CliError::runtime)?;
    let mut cache = FamilyScoreCache::new();
    let train_bde = structure_score(&bench.network.structure, &view, &score_cfg, &mut cache)
        .map_err(CliError::runtime)?
        .log_score;
    let test_log_loss = if bench.test.case_count() > 0 {
        log_loss(&bench.network, &bench.test).map_err(CliError::runtime)?.log_loss
    } else {
        f64::NAN
    };

    ensure_out_dir(&args.out)?;
    write_file(
        &out_path(&args.out, "network.bn"),
        &write_network(
            "benchmark",
            &bench.network.variables,
            &bench.network.structure,
            Some(&bench.network.cpts),
        ),
    )?;
    write_file(&out_path(&args.out, "train.csv"), &write_csv(&bench.train))?;
    write_file(&out_path(&args.out, "test.csv"), &write_csv(&bench.test))?;
    write_file(
        &out_path(&args.out, "truth_assignment.csv"),
        &write_assignment(&bench.train, &bench.mask, &bench.truth),
    )?;

    let mut manifest = BTreeMap::new();
    manifest.insert("arity".into(), args.arity.to_string());
    manifest.insert("ess".into(), args.ess.to_string());
    manifest.insert("layers".into(), args.layers.clone());
    manifest.insert("max_parents".into(), args.max_parents.to_string());
    manifest.insert("missing_cells".into(), bench.mask.len().to_string());
    manifest.insert("missing_rate".into(), args.missing_rate.to_string());
    manifest.insert("network_file".into(), "network.bn".into());
    manifest.insert("prior".into(), prior_name(prior).into());
    manifest.insert("seed".into(), args.seed.to_string());
    manifest.insert("test_cases".into(), args.test_cases.to_string());
    manifest.insert("test_file".into(), "test.csv".into());
    manifest.insert("test_log_loss".into(), test_log_loss.to_string());
    manifest.insert("train_bde".into(), train_bde.to_string());
    manifest.insert("train_cases".into(), args.train_cases.to_string());
    manifest.insert("train_file".into(), "train.csv".into());
    manifest.insert("truth_file".into(), "truth_assignment.csv".into());
    manifest.insert("variables".into(), bench.network.n().to_string());
    write_file(&out_path(&args.out, "manifest.txt"), &key_value_block(&manifest))?;

    println!(
        "generated {} variables, {} train cases ({} missing cells), {} test cases",
        bench.network.n(),
        bench.train.case_count(),
        bench.mask.len(),
        bench.test.case_count()
    );
    println!("train_bde={train_bde}");
    println!("test_log_loss={test_log_loss}");
    Ok(())
}
