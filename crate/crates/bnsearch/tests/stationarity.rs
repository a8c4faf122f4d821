//! Long-run sampler checks against exact enumeration: the empirical state
//! frequencies of the MH samplers must match the normalized Boltzmann
//! distribution `exp(score/T)` over the enumerable joint space.

use std::collections::HashMap;

use bnsearch::bn::{Structure, Variable};
use bnsearch::dataset::{parse_csv, CompletedView, Dataset, LabelPolicy, MissingAssignment, MissingMask};
use bnsearch::engines::{Engine, EngineConfig, EngineKind};
use bnsearch::moves::MoveConfig;
use bnsearch::scoring::{structure_score, FamilyScoreCache, ScoreConfig};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// All DAGs over `n` variables (every subset of ordered pairs, cycles
/// filtered out).
fn enumerate_dags(n: usize) -> Vec<Structure> {
    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
        .collect();
    let mut dags = Vec::new();
    for mask in 0..(1u32 << arcs.len()) {
        let mut sets = vec![Vec::new(); n];
        for (i, &(u, v)) in arcs.iter().enumerate() {
            if mask >> i & 1 == 1 {
                sets[v].push(u);
            }
        }
        let s = Structure::new(sets).unwrap();
        if s.is_acyclic() {
            dags.push(s);
        }
    }
    dags
}

fn binary_vars(n: usize) -> Vec<Variable> {
    (0..n)
        .map(|i| Variable::new(format!("V{i}"), vec!["a".into(), "b".into()]).unwrap())
        .collect()
}

/// Exact posterior over (DAG, assignment) pairs by enumeration of
/// exp(score / T).
fn exact_posterior(
    data: &Dataset,
    mask: &MissingMask,
    score_cfg: &ScoreConfig,
) -> HashMap<String, f64> {
    let n = data.n_vars();
    let dags = enumerate_dags(n);
    let assignments = enumerate_assignments(data, mask);
    let mut cache = FamilyScoreCache::new();
    let mut weights: Vec<(String, f64)> = Vec::new();
    let mut max_score = f64::NEG_INFINITY;
    for dag in &dags {
        for assignment in &assignments {
            let view = CompletedView::new(data, mask, assignment).unwrap();
            let scored = structure_score(dag, &view, score_cfg, &mut cache).unwrap();
            max_score = max_score.max(scored.log_score / score_cfg.temperature);
            weights.push((state_key(dag, assignment), scored.log_score / score_cfg.temperature));
        }
    }
    let mut total = 0.0;
    let mut posterior = HashMap::new();
    for (_, w) in &mut weights {
        *w = (*w - max_score).exp();
        total += *w;
    }
    for (key, w) in weights {
        posterior.insert(key, w / total);
    }
    posterior
}

fn enumerate_assignments(data: &Dataset, mask: &MissingMask) -> Vec<MissingAssignment> {
    let arities: Vec<usize> =
        mask.coords().iter().map(|&(_, var)| data.variables()[var].arity).collect();
    let mut out = vec![MissingAssignment::empty()];
    for &arity in &arities {
        let mut next = Vec::with_capacity(out.len() * arity);
        for prefix in &out {
            for v in 0..arity {
                let mut values = prefix.values.clone();
                values.push(v);
                next.push(MissingAssignment::new(values));
            }
        }
        out = next;
    }
    out
}

fn state_key(structure: &Structure, assignment: &MissingAssignment) -> String {
    let values: Vec<String> = assignment.values.iter().map(|v| v.to_string()).collect();
    format!("{}|{}", structure.digest(), values.join(","))
}

fn total_variation(empirical: &HashMap<String, f64>, exact: &HashMap<String, f64>) -> f64 {
    let mut tv = 0.0;
    for (key, p) in exact {
        tv += (empirical.get(key).copied().unwrap_or(0.0) - p).abs();
    }
    for (key, p) in empirical {
        if !exact.contains_key(key) {
            tv += p;
        }
    }
    tv / 2.0
}

struct LongRun {
    empirical: HashMap<String, f64>,
    exact: HashMap<String, f64>,
}

/// Step the requested sampler and pool post-burn-in population states.
fn long_run(
    data: &Dataset,
    mask: &MissingMask,
    kind: EngineKind,
    adaptive: bool,
    population_size: usize,
    iterations: usize,
    burn_in: usize,
    seed: u64,
) -> LongRun {
    let score_cfg = ScoreConfig { max_parents: data.n_vars() - 1, ..ScoreConfig::default() };
    let engine_cfg = EngineConfig {
        kind,
        population_size,
        iterations: 1,
        adaptive,
        seed,
        ..EngineConfig::default()
    };
    let exact = exact_posterior(data, mask, &score_cfg);
    let mut engine =
        Engine::new(data, mask, engine_cfg, score_cfg, MoveConfig::default()).unwrap();


    let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let mut population = engine.init_population(&mut init_rng).unwrap();
    let mut chain_rngs: Vec<ChaCha8Rng> = (0..population_size)
        .map(|c| ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(c as u64)))
        .collect();
    let mut loop_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);

    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut samples = 0u64;
    for iteration in 0..iterations {
        match kind {
            EngineKind::Mcmc => {
                engine.mcmc_step(&mut population, &mut chain_rngs).unwrap();
            }
            EngineKind::Emcmc => {
                engine.emcmc_step(&mut population, &mut loop_rng).unwrap();
            }
            EngineKind::Ea => unreachable!("EA is not a sampler"),
        }
        if iteration >= burn_in {
            for ind in &population {
                *counts.entry(state_key(&ind.structure, &ind.assignment)).or_insert(0) += 1;
                samples += 1;
            }
        }
    }
    let empirical: HashMap<String, f64> =
        counts.into_iter().map(|(k, c)| (k, c as f64 / samples as f64)).collect();
    LongRun { empirical, exact }
}

fn two_var_complete() -> (Dataset, MissingMask) {
    let vars = binary_vars(2);
    let csv = "V0,V1\na,a\na,a\nb,b\nb,b\na,a\nb,a\na,b\nb,b\n";
    let data = parse_csv(csv, LabelPolicy::Declared(&vars)).unwrap();
    let mask = MissingMask::of(&data);
    (data, mask)
}

fn three_var_missing() -> (Dataset, MissingMask) {
    let vars = binary_vars(3);
    // 12 cases, two missing cells; V1 tracks V0, V2 tracks V1.
    let csv = "V0,V1,V2\n\
               a,a,a\na,a,a\nb,b,b\nb,b,b\na,a,b\nb,a,a\n\
               a,?,a\nb,b,?\na,a,a\nb,b,b\na,b,b\nb,b,a\n";
    let data = parse_csv(csv, LabelPolicy::Declared(&vars)).unwrap();
    let mask = MissingMask::of(&data);
    assert_eq!(mask.len(), 2);
    (data, mask)
}

#[test]
fn plain_mcmc_matches_enumeration_on_two_vars() {
    let (data, mask) = two_var_complete();
    let run = long_run(&data, &mask, EngineKind::Mcmc, false, 2, 500_000, 1_000, 101);
    assert_eq!(run.exact.len(), 3); // empty, 0->1, 1->0
    let tv = total_variation(&run.empirical, &run.exact);
    println!("plain MCMC 2-var TV = {tv:.4}");
    assert!(tv < 0.02, "total variation {tv} too large");
}

#[test]
fn plain_mcmc_matches_enumeration_with_missing_cells() {
    let (data, mask) = three_var_missing();
    let run = long_run(&data, &mask, EngineKind::Mcmc, false, 2, 500_000, 2_000, 202);
    assert_eq!(run.exact.len(), 25 * 4);
    let tv = total_variation(&run.empirical, &run.exact);
    println!("plain MCMC 3-var TV = {tv:.4}");
    assert!(tv < 0.03, "total variation {tv} too large");
}

#[test]
fn adaptive_mcmc_matches_enumeration() {
    let (data, mask) = three_var_missing();
    let run = long_run(&data, &mask, EngineKind::Mcmc, true, 8, 150_000, 2_000, 303);
    let tv = total_variation(&run.empirical, &run.exact);
    println!("adaptive MCMC 3-var TV = {tv:.4}");
    assert!(tv < 0.03, "total variation {tv} too large");
}

#[test]
fn emcmc_matches_enumeration() {
    let (data, mask) = three_var_missing();
    let run = long_run(&data, &mask, EngineKind::Emcmc, false, 4, 400_000, 5_000, 404);
    let tv = total_variation(&run.empirical, &run.exact);
    println!("EMCMC 3-var TV = {tv:.4}");
    assert!(tv < 0.03, "total variation {tv} too large");
}
