//! `bnsearch run`: execute the configured engines over a training set and
//! write per-repetition traces, per-chain score tables, final populations,
//! best states, and a summary with credible intervals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use bnsearch::bn::format::write_network;
use bnsearch::bn::Variable;
use bnsearch::dataset::{write_assignment, Dataset, MissingMask};
use bnsearch::diagnostics::credible_interval;
use bnsearch::engines::{run as run_engine, EngineConfig, EngineKind, RunOutput};
use bnsearch::moves::MoveConfig;
use bnsearch::scoring::ScoreConfig;
use clap::Args;

use crate::util::{
    ensure_out_dir, key_value_block, load_dataset, load_network_file, out_path,
    parse_key_value_file, parse_prior, write_file,
};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct RunArgs {
    /// Network file declaring the variables (structure/CPTs are ignored).
    #[arg(long)]
    pub network: PathBuf,
    /// Training CSV; `?` marks missing cells.
    #[arg(long)]
    pub train: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional key=value config file; explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated engines: ea, mcmc, mcmc-adaptive, emcmc,
    /// emcmc-adaptive.
    #[arg(long)]
    pub engines: Option<String>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub crossover_prob: Option<f64>,
    #[arg(long)]
    pub mutation_prob: Option<f64>,
    #[arg(long)]
    pub tournament: Option<usize>,
    #[arg(long)]
    pub data_move_prob: Option<f64>,
    #[arg(long)]
    pub gene_prob: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Relative add,delete,reverse weights, e.g. 1,1,1.
    #[arg(long)]
    pub move_weights: Option<String>,
    #[arg(long)]
    pub max_parents: Option<usize>,
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub ess: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub illegal_penalty: Option<f64>,
    /// EMCMC: step population/2 disjoint pairs per iteration.
    #[arg(long)]
    pub emcmc_sweep: Option<bool>,
}

/// Fully resolved settings (defaults < config file < flags).
struct Settings {
    engines: Vec<String>,
    population: usize,
    iterations: usize,
    repetitions: usize,
    seed: u64,
    crossover_prob: f64,
    mutation_prob: f64,
    tournament: usize,
    data_move_prob: f64,
    gene_prob: f64,
    epsilon: f64,
    move_weights: [f64; 3],
    max_parents: usize,
    prior: String,
    ess: f64,
    temperature: f64,
    illegal_penalty: f64,
    emcmc_sweep: bool,
}

fn parse_move_weights(text: &str) -> CliResult<[f64; 3]> {
    let parts: Result<Vec<f64>, _> = text.split(',').map(str::parse).collect();
    match parts {
        Ok(w) if w.len() == 3 => Ok([w[0], w[1], w[2]]),
        _ => Err(CliError::Validation(format!(
            "bad move weights '{text}' (expected three comma-separated numbers)"
        ))),
    }
}

const KNOWN_KEYS: &[&str] = &[
    "engines",
    "population",
    "iterations",
    "repetitions",
    "seed",
    "crossover_prob",
    "mutation_prob",
    "tournament",
    "data_move_prob",
    "gene_prob",
    "epsilon",
    "move_weights",
    "max_parents",
    "prior",
    "ess",
    "temperature",
    "illegal_penalty",
    "emcmc_sweep",
];

fn resolve_settings(args: &RunArgs) -> CliResult<Settings> {
    let file = match &args.config {
        Some(path) => parse_key_value_file(path)?,
        None => BTreeMap::new(),
    };
    for key in file.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Validation(format!("unknown config key '{key}'")));
        }
    }
    fn pick<T: Clone + std::str::FromStr>(
        flag: &Option<T>,
        file: &BTreeMap<String, String>,
        key: &str,
        default: T,
    ) -> CliResult<T> {
        if let Some(v) = flag {
            return Ok(v.clone());
        }
        match file.get(key) {
            Some(raw) => raw.parse().map_err(|_| {
                CliError::Validation(format!("config key '{key}': bad value '{raw}'"))
            }),
            None => Ok(default),
        }
    }

    let engines_text = pick(
        &args.engines,
        &file,
        "engines",
        "ea,mcmc,mcmc-adaptive,emcmc".to_string(),
    )?;
    let move_weights_text = pick(&args.move_weights, &file, "move_weights", "1,1,1".into())?;
    Ok(Settings {
        engines: engines_text.split(',').map(|s| s.trim().to_string()).collect(),
        population: pick(&args.population, &file, "population", 20)?,
        iterations: pick(&args.iterations, &file, "iterations", 500)?,
        repetitions: pick(&args.repetitions, &file, "repetitions", 5)?,
        seed: pick(&args.seed, &file, "seed", 42)?,
        crossover_prob: pick(&args.crossover_prob, &file, "crossover_prob", 0.5)?,
        mutation_prob: pick(&args.mutation_prob, &file, "mutation_prob", 0.2)?,
        tournament: pick(&args.tournament, &file, "tournament", 2)?,
        data_move_prob: pick(&args.data_move_prob, &file, "data_move_prob", 0.5)?,
        gene_prob: pick(&args.gene_prob, &file, "gene_prob", 0.5)?,
        epsilon: pick(&args.epsilon, &file, "epsilon", 0.05)?,
        move_weights: parse_move_weights(&move_weights_text)?,
        max_parents: pick(&args.max_parents, &file, "max_parents", 4)?,
        prior: pick(&args.prior, &file, "prior", "k2".into())?,
        ess: pick(&args.ess, &file, "ess", 1.0)?,
        temperature: pick(&args.temperature, &file, "temperature", 1.0)?,
        illegal_penalty: pick(&args.illegal_penalty, &file, "illegal_penalty", -1e12)?,
        emcmc_sweep: pick(&args.emcmc_sweep, &file, "emcmc_sweep", false)?,
    })
}

fn engine_config(settings: &Settings, token: &str) -> CliResult<EngineConfig> {
    let (kind, adaptive) = match token {
        "ea" => (EngineKind::Ea, false),
        "ea-adaptive" => (EngineKind::Ea, true),
        "mcmc" => (EngineKind::Mcmc, false),
        "mcmc-adaptive" => (EngineKind::Mcmc, true),
        "emcmc" => (EngineKind::Emcmc, false),
        "emcmc-adaptive" => (EngineKind::Emcmc, true),
        other => {
            return Err(CliError::Validation(format!("unknown engine '{other}'")));
        }
    };
    Ok(EngineConfig {
        kind,
        adaptive,
        population_size: settings.population,
        iterations: settings.iterations,
        repetitions: settings.repetitions,
        crossover_prob: settings.crossover_prob,
        mutation_prob: settings.mutation_prob,
        tournament_size: settings.tournament,
        data_move_prob: settings.data_move_prob,
        seed: settings.seed,
        emcmc_sweep: settings.emcmc_sweep,
        record_digests: true,
    })
}

fn trace_csv(output: &RunOutput) -> String {
    let mut out = String::from(
        "iteration,rep,best_score,mean_score,unique_structures,accept_rate_structure,accept_rate_data\n",
    );
    for row in &output.trace.rows[1..] {
        let mean = row.scores.iter().sum::<f64>() / row.scores.len() as f64;
        let rate = |accepted: usize, proposed: usize| -> f64 {
            if proposed == 0 {
                f64::NAN
            } else {
                accepted as f64 / proposed as f64
            }
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.iteration,
            output.repetition,
            row.best_so_far,
            mean,
            row.unique_structures,
            rate(row.stats.accepted_structure, row.stats.proposed_structure),
            rate(row.stats.accepted_data, row.stats.proposed_data),
        );
    }
    out
}

fn chains_csv(output: &RunOutput) -> String {
    let n_chains = output.trace.rows[0].scores.len();
    let mut out = String::from("iteration");
    for c in 0..n_chains {
        let _ = write!(out, ",score_{c}");
    }
    out.push('\n');
    for row in &output.trace.rows[1..] {
        let _ = write!(out, "{}", row.iteration);
        for score in &row.scores {
            let _ = write!(out, ",{score}");
        }
        out.push('\n');
    }
    out
}

fn population_text(output: &RunOutput, variables: &[Variable]) -> String {
    let mut out = String::new();
    for (i, ind) in output.final_population.iter().enumerate() {
        let _ = writeln!(out, "individual {i} score {}", ind.log_score);
        for v in 0..ind.structure.n() {
            let parents = ind.structure.parents(v);
            if parents.is_empty() {
                continue;
            }
            let names: Vec<&str> =
                parents.iter().map(|&p| variables[p].name.as_str()).collect();
            let _ = writeln!(out, "parents {} {}", variables[v].name, names.join(" "));
        }
        out.push('\n');
    }
    out
}

fn population_assignments_csv(
    output: &RunOutput,
    data: &Dataset,
    mask: &MissingMask,
) -> String {
    let mut out = String::from("individual,case,variable,value\n");
    for (i, ind) in output.final_population.iter().enumerate() {
        for (pos, &(case, var)) in mask.coords().iter().enumerate() {
            let label = &data.variables()[var].value_labels[ind.assignment.values[pos]];
            let _ =
                writeln!(out, "{i},{case},{},{label}", data.variables()[var].name);
        }
    }
    out
}

pub fn run(args: &RunArgs) -> CliResult<()> {
    let settings = resolve_settings(args)?;
    let prior = parse_prior(&settings.prior)?;
    let parsed = load_network_file(&args.network)?;
    let data = load_dataset(&args.train, &parsed.variables)?;
    let mask = MissingMask::of(&data);

    let score_cfg = ScoreConfig {
        prior,
        ess: settings.ess,
        max_parents: settings.max_parents,
        illegal_penalty: settings.illegal_penalty,
        temperature: settings.temperature,
    };
    let move_cfg = MoveConfig {
        crossover_gene_prob: settings.gene_prob,
        structure_move_weights: settings.move_weights,
        epsilon: settings.epsilon,
    };

    ensure_out_dir(&args.out)?;
    let mut echo = BTreeMap::new();
    echo.insert("engines".into(), settings.engines.join(","));
    echo.insert("population".into(), settings.population.to_string());
    echo.insert("iterations".into(), settings.iterations.to_string());
    echo.insert("repetitions".into(), settings.repetitions.to_string());
    echo.insert("seed".into(), settings.seed.to_string());
    echo.insert("crossover_prob".into(), settings.crossover_prob.to_string());
    echo.insert("mutation_prob".into(), settings.mutation_prob.to_string());
    echo.insert("tournament".into(), settings.tournament.to_string());
    echo.insert("data_move_prob".into(), settings.data_move_prob.to_string());
    echo.insert("gene_prob".into(), settings.gene_prob.to_string());
    echo.insert("epsilon".into(), settings.epsilon.to_string());
    echo.insert(
        "move_weights".into(),
        settings
            .move_weights
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    echo.insert("max_parents".into(), settings.max_parents.to_string());
    echo.insert("prior".into(), settings.prior.clone());
    echo.insert("ess".into(), settings.ess.to_string());
    echo.insert("temperature".into(), settings.temperature.to_string());
    echo.insert("illegal_penalty".into(), settings.illegal_penalty.to_string());
    echo.insert("emcmc_sweep".into(), settings.emcmc_sweep.to_string());
    echo.insert("network".into(), args.network.display().to_string());
    echo.insert("train".into(), args.train.display().to_string());
    write_file(&out_path(&args.out, "config.txt"), &key_value_block(&echo))?;

    let mut summary = String::new();
    for token in &settings.engines {
        let engine_cfg = engine_config(&settings, token)?;
        let outputs = run_engine(&data, &mask, engine_cfg, score_cfg.clone(), move_cfg.clone())
            .map_err(|e| CliError::Runtime(format!("engine {token}: {e}")))?;

        let mut finals = Vec::new();
        for output in &outputs {
            let rep = output.repetition;
            write_file(
                &out_path(&args.out, &format!("trace_{token}_rep{rep}.csv")),
                &trace_csv(output),
            )?;
            write_file(
                &out_path(&args.out, &format!("chains_{token}_rep{rep}.csv")),
                &chains_csv(output),
            )?;
            write_file(
                &out_path(&args.out, &format!("population_{token}_rep{rep}.txt")),
                &population_text(output, data.variables()),
            )?;
            write_file(
                &out_path(&args.out, &format!("population_{token}_rep{rep}_assignments.csv")),
                &population_assignments_csv(output, &data, &mask),
            )?;
            write_file(
                &out_path(&args.out, &format!("best_{token}_rep{rep}.bn")),
                &write_network(
                    &format!("best_{token}_rep{rep}"),
                    data.variables(),
                    &output.best.structure,
                    None,
                ),
            )?;
            write_file(
                &out_path(&args.out, &format!("best_{token}_rep{rep}_assignment.csv")),
                &write_assignment(&data, &mask, &output.best.assignment),
            )?;
            finals.push(output.best.log_score);
        }

        let finals_text: Vec<String> = finals.iter().map(|s| s.to_string()).collect();
        let ci = match credible_interval(&finals, 0.95) {
            Ok((lo, hi)) => format!("({lo}, {hi})"),
            Err(_) => "NA".into(),
        };
        let _ = writeln!(
            summary,
            "engine {token}: best_final=[{}] ci95={ci}",
            finals_text.join(", ")
        );
        println!("engine {token}: best scores [{}]", finals_text.join(", "));
    }
    write_file(&out_path(&args.out, "summary.txt"), &summary)?;
    Ok(())
}
