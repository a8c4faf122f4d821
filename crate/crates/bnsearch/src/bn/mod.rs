//! Discrete Bayesian network representation: variables, DAG structures,
//! conditional probability tables, forward sampling, and exact inference by
//! enumeration.
//!
//! A [`Structure`] is an adjacency list of parent sets and is allowed to
//! contain directed cycles; only [`BayesianNetwork`] requires acyclicity.
//! Search operators produce cyclic structures on purpose and the engines
//! decide their fate.

pub mod format;

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// A discrete variable with `arity` named values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub arity: usize,
    pub value_labels: Vec<String>,
}

/// Labels and names are restricted to `[A-Za-z0-9_]+` so the CSV format
/// never needs quoting.
pub fn valid_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Variable {
    pub fn new(name: impl Into<String>, value_labels: Vec<String>) -> Result<Self> {
        let name = name.into();
        if !valid_token(&name) {
            return Err(Error::InvalidConfig(format!("invalid variable name '{name}'")));
        }
        if value_labels.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "variable '{name}' needs at least 2 values, got {}",
                value_labels.len()
            )));
        }
        for label in &value_labels {
            if !valid_token(label) {
                return Err(Error::InvalidConfig(format!(
                    "invalid value label '{label}' for variable '{name}'"
                )));
            }
        }
        let mut seen = value_labels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != value_labels.len() {
            return Err(Error::InvalidConfig(format!(
                "duplicate value labels for variable '{name}'"
            )));
        }
        let arity = value_labels.len();
        Ok(Self { name, arity, value_labels })
    }

    /// Index of a label within this variable's value set.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.value_labels.iter().position(|l| l == label)
    }
}

/// Directed-graph genotype: one parent set per variable, kept sorted.
///
/// Cycles are representable; validity here only means indices are in range,
/// no variable is its own parent, and the sets hold no duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Structure {
    parent_sets: Vec<Vec<usize>>,
}

impl Structure {
    pub fn new(mut parent_sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = parent_sets.len();
        for (v, set) in parent_sets.iter_mut().enumerate() {
            set.sort_unstable();
            for &p in set.iter() {
                if p >= n {
                    return Err(Error::InvalidConfig(format!(
                        "parent index {p} out of range for {n} variables"
                    )));
                }
                if p == v {
                    return Err(Error::InvalidConfig(format!(
                        "variable {v} listed as its own parent"
                    )));
                }
            }
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate parent in the set of variable {v}"
                )));
            }
        }
        Ok(Self { parent_sets })
    }

    /// The arc-free structure over `n` variables.
    pub fn empty(n: usize) -> Self {
        Self { parent_sets: vec![Vec::new(); n] }
    }

    pub fn n(&self) -> usize {
        self.parent_sets.len()
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parent_sets[v]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parent_sets
    }

    pub fn parent_count(&self, v: usize) -> usize {
        self.parent_sets[v].len()
    }

    pub fn max_parent_count(&self) -> usize {
        self.parent_sets.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True iff the arc `u -> v` is present.
    pub fn contains_arc(&self, u: usize, v: usize) -> bool {
        self.parent_sets[v].binary_search(&u).is_ok()
    }

    pub fn arc_count(&self) -> usize {
        self.parent_sets.iter().map(Vec::len).sum()
    }

    /// Copy with `u -> v` added. The arc must be absent and `u != v`.
    pub fn with_arc_added(&self, u: usize, v: usize) -> Self {
        debug_assert!(u != v && !self.contains_arc(u, v));
        let mut next = self.clone();
        let pos = next.parent_sets[v].binary_search(&u).unwrap_err();
        next.parent_sets[v].insert(pos, u);
        next
    }

    /// Copy with `u -> v` removed. The arc must be present.
    pub fn with_arc_removed(&self, u: usize, v: usize) -> Self {
        let mut next = self.clone();
        let pos = next.parent_sets[v].binary_search(&u).expect("arc not present");
        next.parent_sets[v].remove(pos);
        next
    }

    /// Copy with `u -> v` replaced by `v -> u`.
    pub fn with_arc_reversed(&self, u: usize, v: usize) -> Self {
        debug_assert!(!self.contains_arc(v, u));
        self.with_arc_removed(u, v).with_arc_added(v, u)
    }

    /// True iff the graph has no directed cycle.
    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Parents-before-children ordering, or `CyclicStructure`.
    ///
    /// Deterministic: among the ready variables the smallest index goes
    /// first, so an arc-free structure yields `[0, 1, .., n-1]`.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.n();
        let mut remaining: Vec<usize> = self.parent_sets.iter().map(Vec::len).collect();
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for _ in 0..n {
            let next = (0..n).find(|&v| !placed[v] && remaining[v] == 0);
            let Some(v) = next else {
                return Err(Error::CyclicStructure);
            };
            placed[v] = true;
            order.push(v);
            for (child, parents) in self.parent_sets.iter().enumerate() {
                if !placed[child] && parents.binary_search(&v).is_ok() {
                    remaining[child] -= 1;
                }
            }
        }
        Ok(order)
    }

    /// Canonical text form of the parent sets: rows joined by `;`, parents
    /// by `,`. Distinct structures always map to distinct digests.
    pub fn digest(&self) -> String {
        let rows: Vec<String> = self
            .parent_sets
            .iter()
            .map(|set| {
                set.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
            })
            .collect();
        rows.join(";")
    }
}

/// Conditional probability table for one variable: one row per parent
/// configuration, each row a distribution over the variable's values.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub variable: usize,
    pub parent_config_count: usize,
    pub probabilities: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn new(variable: usize, arity: usize, probabilities: Vec<Vec<f64>>) -> Result<Self> {
        let parent_config_count = probabilities.len();
        for (j, row) in probabilities.iter().enumerate() {
            if row.len() != arity {
                return Err(Error::InvalidConfig(format!(
                    "cpt row {j} of variable {variable} has {} entries, expected {arity}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidConfig(format!(
                    "cpt row {j} of variable {variable} has a negative or NaN entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "cpt row {j} of variable {variable} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { variable, parent_config_count, probabilities })
    }
}

/// Parent-configuration row index in mixed-radix order.
///
/// `parents` must be sorted ascending; the lowest parent index is the most
/// significant digit. This single definition fixes the row order shared by
/// CPTs, sufficient statistics, and the network file format.
pub fn parent_config_index(
    parents: &[usize],
    arity_of: impl Fn(usize) -> usize,
    value_of: impl Fn(usize) -> usize,
) -> usize {
    let mut idx = 0;
    for &p in parents {
        idx = idx * arity_of(p) + value_of(p);
    }
    idx
}

/// Number of parent configurations for a parent set.
pub fn parent_config_count(parents: &[usize], arity_of: impl Fn(usize) -> usize) -> usize {
    parents.iter().map(|&p| arity_of(p)).product()
}

/// A fully parameterized discrete Bayesian network (structure must be a DAG).
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianNetwork {
    pub variables: Vec<Variable>,
    pub structure: Structure,
    pub cpts: Vec<Cpt>,
}

impl BayesianNetwork {
    pub fn new(variables: Vec<Variable>, structure: Structure, cpts: Vec<Cpt>) -> Result<Self> {
        let n = variables.len();
        if structure.n() != n || cpts.len() != n {
            return Err(Error::InvalidConfig(format!(
                "component counts disagree: {} variables, {} parent sets, {} cpts",
                n,
                structure.n(),
                cpts.len()
            )));
        }
        if !structure.is_acyclic() {
            return Err(Error::CyclicStructure);
        }
        for (v, cpt) in cpts.iter().enumerate() {
            let q = parent_config_count(structure.parents(v), |p| variables[p].arity);
            if cpt.variable != v || cpt.parent_config_count != q {
                return Err(Error::InvalidConfig(format!(
                    "cpt of variable {v} has {} rows, expected {q}",
                    cpt.parent_config_count
                )));
            }
            if cpt.probabilities.iter().any(|row| row.len() != variables[v].arity) {
                return Err(Error::InvalidConfig(format!(
                    "cpt of variable {v} has rows of the wrong width"
                )));
            }
        }
        Ok(Self { variables, structure, cpts })
    }

    pub fn n(&self) -> usize {
        self.variables.len()
    }

    /// CPT entry P(variable = value | parent values drawn from `assignment`).
    fn cpt_entry(&self, v: usize, value: usize, assignment: &[usize]) -> f64 {
        let row = parent_config_index(
            self.structure.parents(v),
            |p| self.variables[p].arity,
            |p| assignment[p],
        );
        self.cpts[v].probabilities[row][value]
    }

    /// Probability of one complete assignment (chain-rule product).
    pub fn joint_probability(&self, assignment: &[usize]) -> f64 {
        assert_eq!(assignment.len(), self.n());
        let mut prob = 1.0;
        for v in 0..self.n() {
            prob *= self.cpt_entry(v, assignment[v], assignment);
        }
        prob
    }

    /// Draw `case_count` complete records by ancestral sampling.
    pub fn forward_sample(&self, rng: &mut impl Rng, case_count: usize) -> Dataset {
        let order = self.structure.topological_order().expect("network structure is acyclic");
        let n = self.n();
        let mut rows = Vec::with_capacity(case_count);
        let mut record = vec![0usize; n];
        for _ in 0..case_count {
            for &v in &order {
                let row = parent_config_index(
                    self.structure.parents(v),
                    |p| self.variables[p].arity,
                    |p| record[p],
                );
                let dist = &self.cpts[v].probabilities[row];
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                let mut picked = dist.len() - 1;
                for (k, &p) in dist.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        picked = k;
                        break;
                    }
                }
                record[v] = picked;
            }
            rows.push(record.clone());
        }
        Dataset::complete(self.variables.clone(), rows).expect("sampled values are in range")
    }

    /// Exact posterior over `target`'s values given partial evidence, by
    /// enumeration of all consistent completions.
    ///
    /// `evidence[target]` must be `None`. Returns `ZeroEvidenceProbability`
    /// when the evidence configuration has probability zero.
    pub fn conditional_query(&self, target: usize, evidence: &[Option<usize>]) -> Result<Vec<f64>> {
        let n = self.n();
        assert_eq!(evidence.len(), n);
        assert!(evidence[target].is_none(), "target must not be in the evidence");
        let free: Vec<usize> =
            (0..n).filter(|&v| evidence[v].is_none()).collect();
        let mut assignment: Vec<usize> =
            evidence.iter().map(|e| e.unwrap_or(0)).collect();
        let arity = self.variables[target].arity;
        let mut sums = vec![0.0f64; arity];
        // Odometer over the free variables (target included).
        loop {
            sums[assignment[target]] += self.joint_probability(&assignment);
            let mut pos = free.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                let v = free[pos];
                assignment[v] += 1;
                if assignment[v] < self.variables[v].arity {
                    break;
                }
                assignment[v] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
        let total: f64 = sums.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroEvidenceProbability);
        }
        for s in &mut sums {
            *s /= total;
        }
        Ok(sums)
    }
}

/// Number of values a parent-set gene can take for `n` variables and parent
/// limit `m`, the empty set included: `1 + sum_{i=1..m} C(n-1, i)`.
pub fn count_parent_sets(n: usize, m: usize) -> u64 {
    assert!(m < n, "parent limit must be below the variable count");
    let mut total: u128 = 1;
    for i in 1..=m {
        total += binomial(n as u128 - 1, i as u128);
    }
    u64::try_from(total).expect("allele count exceeds u64")
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}
