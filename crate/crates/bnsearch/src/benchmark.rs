//! Seeded layered-network benchmark generator.
//!
//! Builds a layered ground-truth network (layer sizes like 1x3x3, ternary
//! variables, Dirichlet(1) CPT rows), forward-samples train and test sets,
//! and masks the training data completely at random. The true CPTs of the
//! published benchmark figure are not available anywhere, so the generator
//! is the configurable stand-in; the manifest written by the CLI makes the
//! substitute ground truth explicit.

use rand::Rng;

use crate::bn::{parent_config_count, BayesianNetwork, Cpt, Structure, Variable};
use crate::dataset::{truth_assignment, Dataset, MissingAssignment, MissingMask};
use crate::error::{Error, Result};
use crate::stream::{child_rng, tag};

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    /// Variables per layer, first layer the roots (e.g. `[1, 3, 3]`).
    pub layers: Vec<usize>,
    /// Arity of every variable.
    pub arity: usize,
    /// Cap on how many previous-layer parents a variable may draw.
    pub max_parents: usize,
    pub train_cases: usize,
    pub test_cases: usize,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            layers: vec![1, 3, 3],
            arity: 3,
            max_parents: 4,
            train_cases: 1000,
            test_cases: 1000,
            missing_rate: 0.1,
            seed: 42,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.contains(&0) {
            return Err(Error::InvalidConfig("layers must all be nonzero".into()));
        }
        if self.arity < 2 {
            return Err(Error::InvalidConfig("arity must be at least 2".into()));
        }
        if self.max_parents == 0 {
            return Err(Error::InvalidConfig("max_parents must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidConfig(format!(
                "missing_rate must be in [0,1], got {}",
                self.missing_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub network: BayesianNetwork,
    /// Training data with MCAR-masked cells.
    pub train: Dataset,
    pub mask: MissingMask,
    /// Original values of the masked cells.
    pub truth: MissingAssignment,
    /// Complete holdout data.
    pub test: Dataset,
}

/// One Dirichlet(1) draw: normalized standard exponentials.
fn dirichlet_row(arity: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut row: Vec<f64> = (0..arity).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = row.iter().sum();
    for p in &mut row {
        *p /= sum;
    }
    row
}

pub fn generate(spec: &BenchmarkSpec) -> Result<Benchmark> {
    spec.validate()?;
    let n: usize = spec.layers.iter().sum();
    let labels: Vec<String> = (0..spec.arity).map(|k| format!("v{k}")).collect();
    let variables: Vec<Variable> = (0..n)
        .map(|i| Variable::new(format!("V{i}"), labels.clone()))
        .collect::<Result<_>>()?;

    // Parents: each non-root variable draws a uniform nonempty subset of
    // the previous layer, capped at max_parents.
    let mut structure_rng = child_rng(spec.seed, &[tag::STRUCTURE]);
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut layer_start = 0usize;
    for (layer, &size) in spec.layers.iter().enumerate() {
        if layer > 0 {
            let prev_size = spec.layers[layer - 1];
            let prev_start = layer_start - prev_size;
            for v in layer_start..layer_start + size {
                let cap = prev_size.min(spec.max_parents);
                let d = structure_rng.gen_range(1..=cap);
                let mut pool: Vec<usize> = (prev_start..prev_start + prev_size).collect();
                for i in 0..d {
                    let j = structure_rng.gen_range(i..pool.len());
                    pool.swap(i, j);
                }
                let mut parents = pool[..d].to_vec();
                parents.sort_unstable();
                sets[v] = parents;
            }
        }
        layer_start += size;
    }
    let structure = Structure::new(sets)?;

    let mut cpt_rng = child_rng(spec.seed, &[tag::CPT]);
    let mut cpts = Vec::with_capacity(n);
    for v in 0..n {
        let q = parent_config_count(structure.parents(v), |p| variables[p].arity);
        let rows: Vec<Vec<f64>> =
            (0..q).map(|_| dirichlet_row(spec.arity, &mut cpt_rng)).collect();
        cpts.push(Cpt::new(v, spec.arity, rows)?);
    }
    let network = BayesianNetwork::new(variables, structure, cpts)?;

    let mut train_rng = child_rng(spec.seed, &[tag::SAMPLE, 0]);
    let complete_train = network.forward_sample(&mut train_rng, spec.train_cases);
    let mut test_rng = child_rng(spec.seed, &[tag::SAMPLE, 1]);
    let test = network.forward_sample(&mut test_rng, spec.test_cases);

    let mut mcar_rng = child_rng(spec.seed, &[tag::MCAR]);
    let (train, mask) = complete_train.inject_mcar(spec.missing_rate, &mut mcar_rng)?;
    let truth = truth_assignment(&complete_train, &mask);

    Ok(Benchmark { network, train, mask, truth, test })
}
