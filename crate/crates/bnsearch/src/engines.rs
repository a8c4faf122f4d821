//! The three search loops over the joint (structure, missing data) state:
//! an evolutionary algorithm, a population of independent Metropolis-Hastings
//! chains, and the hybrid evolutionary MCMC, all emitting per-iteration
//! traces.
//!
//! Posterior mass lives on DAG space: the samplers auto-reject proposals
//! that land on cyclic structures, while the EA keeps cyclic offspring alive
//! with the illegal-structure penalty so their genes stay in the pool.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{CompletedView, Dataset, MissingAssignment, MissingMask};
use crate::error::{Error, Result};
use crate::moves::{
    build_snapshot, crossover_assignments, crossover_structures, mutate_missing,
    mutate_structure, MoveConfig, ProposalSnapshot, ProposedState,
};
use crate::scoring::{rescore_delta, structure_score, FamilyScoreCache, ScoreConfig, ScoredState};
use crate::stream::{child_rng, derive_seed, tag};

/// Which search loop to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Ea,
    Mcmc,
    Emcmc,
}

/// Engine settings; see the CLI for the externally documented defaults.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub population_size: usize,
    pub iterations: usize,
    /// EMCMC mutate-vs-crossover coin; EA pairing rate.
    pub crossover_prob: f64,
    /// EA per-offspring mutation probability.
    pub mutation_prob: f64,
    /// EA tournament size.
    pub tournament_size: usize,
    /// Probability a mutation step targets the missing chromosome rather
    /// than the structure.
    pub data_move_prob: f64,
    /// Rebuild a population snapshot each iteration and drive proposals
    /// from it.
    pub adaptive: bool,
    pub seed: u64,
    pub repetitions: usize,
    /// EMCMC: step population_size/2 disjoint pairs per iteration instead
    /// of a single random pair.
    pub emcmc_sweep: bool,
    /// Keep per-individual structure digests in the trace (needed by the
    /// diversity diagnostic).
    pub record_digests: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kind: EngineKind::Ea,
            population_size: 20,
            iterations: 500,
            crossover_prob: 0.5,
            mutation_prob: 0.2,
            tournament_size: 2,
            data_move_prob: 0.5,
            adaptive: false,
            seed: 42,
            repetitions: 5,
            emcmc_sweep: false,
            record_digests: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "population_size must be at least 2, got {}",
                self.population_size
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.repetitions < 1 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        if self.tournament_size < 1 {
            return Err(Error::InvalidConfig("tournament_size must be at least 1".into()));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("data_move_prob", self.data_move_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0,1], got {p}")));
            }
        }
        Ok(())
    }

    fn kind_tag(&self) -> u64 {
        let base = match self.kind {
            EngineKind::Ea => 0,
            EngineKind::Mcmc => 1,
            EngineKind::Emcmc => 2,
        };
        base + if self.adaptive { 16 } else { 0 }
    }
}

/// One member of a population / one chain state.
pub type Individual = ScoredState;

/// Per-iteration acceptance bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub proposed_structure: usize,
    pub accepted_structure: usize,
    pub proposed_data: usize,
    pub accepted_data: usize,
    pub proposed_crossover: usize,
    pub accepted_crossover: usize,
}

/// One recorded iteration (row 0 is the initial population).
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iteration: usize,
    pub scores: Vec<f64>,
    pub best_so_far: f64,
    pub unique_structures: usize,
    pub stats: StepStats,
    pub digests: Option<Vec<String>>,
}

/// Full per-repetition history.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }
}

/// Metropolis-Hastings acceptance with Hastings correction:
/// accept with probability
/// `min(1, exp((proposed - current)/T + reverse_log_prob - forward_log_prob))`.
pub fn mh_accept(
    current_score: f64,
    proposed_score: f64,
    forward_log_prob: f64,
    reverse_log_prob: f64,
    temperature: f64,
    rng: &mut impl Rng,
) -> bool {
    let log_ratio =
        (proposed_score - current_score) / temperature + reverse_log_prob - forward_log_prob;
    if log_ratio >= 0.0 {
        true
    } else {
        rng.gen::<f64>() < log_ratio.exp()
    }
}

/// Result of one repetition.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub repetition: usize,
    pub final_population: Vec<Individual>,
    pub trace: Trace,
    /// Highest-scoring state seen at any iteration (initialization included).
    pub best: Individual,
}

/// A configured search over one dataset; drives init, stepping, and traces.
pub struct Engine<'a> {
    data: &'a Dataset,
    mask: &'a MissingMask,
    pub engine_cfg: EngineConfig,
    pub score_cfg: ScoreConfig,
    pub move_cfg: MoveConfig,
    cache: FamilyScoreCache,
    var_arities: Vec<usize>,
}

impl<'a> Engine<'a> {
    pub fn new(
        data: &'a Dataset,
        mask: &'a MissingMask,
        engine_cfg: EngineConfig,
        score_cfg: ScoreConfig,
        move_cfg: MoveConfig,
    ) -> Result<Self> {
        engine_cfg.validate()?;
        score_cfg.validate_for_data(data)?;
        move_cfg.validate()?;
        if !mask.matches(data) {
            return Err(Error::InvalidConfig(
                "mask does not describe the dataset's missing cells".into(),
            ));
        }
        let var_arities = data.variables().iter().map(|v| v.arity).collect();
        Ok(Self {
            data,
            mask,
            engine_cfg,
            score_cfg,
            move_cfg,
            cache: FamilyScoreCache::new(),
            var_arities,
        })
    }

    fn score_state(
        &mut self,
        structure: &crate::bn::Structure,
        assignment: &MissingAssignment,
    ) -> Result<ScoredState> {
        let view = CompletedView::new(self.data, self.mask, assignment)?;
        structure_score(structure, &view, &self.score_cfg, &mut self.cache)
    }

    /// Initial population: each structure is empty with probability 1/2 or a
    /// random DAG whose arcs follow a random permutation; assignments are
    /// uniform over each cell's values.
    pub fn init_population(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<Individual>> {
        let n = self.data.n_vars();
        let m = self.score_cfg.max_parents;
        let arc_prob = if n > 1 { (m as f64 / (n - 1) as f64).min(1.0) } else { 0.0 };
        let mut population = Vec::with_capacity(self.engine_cfg.population_size);
        for _ in 0..self.engine_cfg.population_size {
            let structure = if rng.gen_bool(0.5) {
                crate::bn::Structure::empty(n)
            } else {
                let mut perm: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    let j = rng.gen_range(0..=i);
                    perm.swap(i, j);
                }
                let mut sets = vec![Vec::new(); n];
                for vpos in 1..n {
                    for upos in 0..vpos {
                        let (u, v) = (perm[upos], perm[vpos]);
                        if sets[v].len() < m && rng.gen::<f64>() < arc_prob {
                            sets[v].push(u);
                        }
                    }
                }
                crate::bn::Structure::new(sets)?
            };
            let values: Vec<usize> = (0..self.mask.len())
                .map(|pos| rng.gen_range(0..self.var_arities[self.mask.var_of(pos)]))
                .collect();
            let assignment = MissingAssignment::new(values);
            population.push(self.score_state(&structure, &assignment)?);
        }
        Ok(population)
    }

    fn tournament(&self, population: &[Individual], rng: &mut ChaCha8Rng) -> usize {
        let mut best = rng.gen_range(0..population.len());
        for _ in 1..self.engine_cfg.tournament_size {
            let challenger = rng.gen_range(0..population.len());
            if population[challenger].log_score > population[best].log_score {
                best = challenger;
            }
        }
        best
    }

    /// Apply one unconditional mutation (no MH filter) to an offspring.
    fn ea_mutate(
        &mut self,
        structure: &mut crate::bn::Structure,
        assignment: &mut MissingAssignment,
        snapshot: Option<&ProposalSnapshot>,
        rng: &mut ChaCha8Rng,
    ) {
        let data_move =
            !self.mask.is_empty() && rng.gen::<f64>() < self.engine_cfg.data_move_prob;
        if data_move {
            let mv = mutate_missing(
                assignment,
                self.mask,
                &self.var_arities,
                snapshot,
                self.move_cfg.epsilon,
                rng,
            )
            .expect("mask is nonempty");
            if let ProposedState::Assignment(next) = mv.state {
                *assignment = next;
            }
        } else {
            match mutate_structure(
                structure,
                self.score_cfg.max_parents,
                snapshot,
                &self.move_cfg.structure_move_weights,
                self.move_cfg.epsilon,
                rng,
            ) {
                Ok(mv) => {
                    if let ProposedState::Structure(next) = mv.state {
                        *structure = next;
                    }
                }
                Err(Error::NoFeasibleMove) => {} // leave the offspring unmutated
                Err(e) => panic!("unexpected move error: {e}"),
            }
        }
    }

    /// One EA generation: tournament pairing, crossover-or-clone, unconditional
    /// mutation, then elitist truncation over parents and offspring. In
    /// adaptive mode mutations draw from one whole-population snapshot
    /// (the EA is not a sampler, so no leave-one-out is needed).
    pub fn ea_step(
        &mut self,
        population: &mut Vec<Individual>,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepStats> {
        let snapshot = if self.engine_cfg.adaptive {
            Some(self.snapshot_of(population, None)?)
        } else {
            None
        };
        let snapshot = snapshot.as_ref();
        let target = self.engine_cfg.population_size;
        let mut offspring: Vec<Individual> = Vec::with_capacity(target + 1);
        while offspring.len() < target {
            let pa = &population[self.tournament(population, rng)];
            let pb = &population[self.tournament(population, rng)];
            let (mut sa, mut sb) = (pa.structure.clone(), pb.structure.clone());
            let (mut aa, mut ab) = (pa.assignment.clone(), pb.assignment.clone());
            if rng.gen::<f64>() < self.engine_cfg.crossover_prob {
                let gp = self.move_cfg.crossover_gene_prob;
                let (xa, xb) = crossover_structures(&sa, &sb, gp, rng)?;
                (sa, sb) = (xa, xb);
                let (ya, yb) = crossover_assignments(&aa, &ab, gp, rng)?;
                (aa, ab) = (ya, yb);
            }
            for (mut s, mut a) in [(sa, aa), (sb, ab)] {
                if offspring.len() >= target {
                    break;
                }
                if rng.gen::<f64>() < self.engine_cfg.mutation_prob {
                    self.ea_mutate(&mut s, &mut a, snapshot, rng);
                }
                offspring.push(self.score_state(&s, &a)?);
            }
        }
        // Survivors: top population_size by score from parents then
        // offspring; the stable sort keeps parents ahead of equal-scoring
        // clones.
        population.append(&mut offspring);
        population.sort_by(|x, y| y.log_score.partial_cmp(&x.log_score).unwrap());
        population.truncate(target);
        Ok(StepStats::default())
    }

    /// One MH update of a single chain: flip the data-move coin, propose,
    /// rescore incrementally, and apply the acceptance rule. Cyclic
    /// structure proposals are rejected outright.
    fn chain_update(
        &mut self,
        individual: &mut Individual,
        snapshot: Option<&ProposalSnapshot>,
        stats: &mut StepStats,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let data_move =
            !self.mask.is_empty() && rng.gen::<f64>() < self.engine_cfg.data_move_prob;
        if data_move {
            stats.proposed_data += 1;
            let mv = mutate_missing(
                &individual.assignment,
                self.mask,
                &self.var_arities,
                snapshot,
                self.move_cfg.epsilon,
                rng,
            )?;
            let ProposedState::Assignment(next) = mv.state else { unreachable!() };
            let proposed = rescore_delta(
                individual,
                individual.structure.clone(),
                next,
                &mv.changed_families,
                &mv.changed_cells,
                self.data,
                self.mask,
                &self.score_cfg,
                &mut self.cache,
            )?;
            if mh_accept(
                individual.log_score,
                proposed.log_score,
                mv.forward_log_prob,
                mv.reverse_log_prob,
                self.score_cfg.temperature,
                rng,
            ) {
                *individual = proposed;
                stats.accepted_data += 1;
            }
        } else {
            stats.proposed_structure += 1;
            let mv = match mutate_structure(
                &individual.structure,
                self.score_cfg.max_parents,
                snapshot,
                &self.move_cfg.structure_move_weights,
                self.move_cfg.epsilon,
                rng,
            ) {
                Ok(mv) => mv,
                Err(Error::NoFeasibleMove) => return Ok(()), // counted as rejected
                Err(e) => return Err(e),
            };
            let ProposedState::Structure(next) = mv.state else { unreachable!() };
            if !next.is_acyclic() {
                return Ok(()); // zero posterior mass outside DAG space
            }
            let proposed = rescore_delta(
                individual,
                next,
                individual.assignment.clone(),
                &mv.changed_families,
                &mv.changed_cells,
                self.data,
                self.mask,
                &self.score_cfg,
                &mut self.cache,
            )?;
            if mh_accept(
                individual.log_score,
                proposed.log_score,
                mv.forward_log_prob,
                mv.reverse_log_prob,
                self.score_cfg.temperature,
                rng,
            ) {
                *individual = proposed;
                stats.accepted_structure += 1;
            }
        }
        Ok(())
    }

    /// One sweep of the independent-chain sampler: every chain takes one MH
    /// step from its own stream.
    ///
    /// In adaptive mode each chain's proposals are driven by a
    /// leave-one-out snapshot of the rest of the population taken at its
    /// update moment. Conditioned on the others, that snapshot does not
    /// depend on the chain's own state, so every update is an exactly
    /// invariant MH kernel and the sweep preserves the product posterior;
    /// a snapshot that included the chain itself would bias the stationary
    /// distribution.
    pub fn mcmc_step(
        &mut self,
        population: &mut [Individual],
        chain_rngs: &mut [ChaCha8Rng],
    ) -> Result<StepStats> {
        assert_eq!(population.len(), chain_rngs.len());
        let mut stats = StepStats::default();
        for c in 0..population.len() {
            let snapshot = if self.engine_cfg.adaptive {
                Some(self.snapshot_of(population, Some(c))?)
            } else {
                None
            };
            self.chain_update(&mut population[c], snapshot.as_ref(), &mut stats, &mut chain_rngs[c])?;
        }
        Ok(stats)
    }

    /// One EMCMC iteration: pick a random pair; either exchange information
    /// by crossover with a joint accept (uniform crossover is self-inverse
    /// with symmetric pair probability, so the Hastings factor is 1), or
    /// mutate both members independently under the single-chain MH rule
    /// (with leave-one-out snapshots when adaptive, as in [`Self::mcmc_step`]).
    pub fn emcmc_step(
        &mut self,
        population: &mut [Individual],
        rng: &mut ChaCha8Rng,
    ) -> Result<StepStats> {
        let p = population.len();
        if p < 2 {
            return Err(Error::PopulationTooSmall { required: 2, found: p });
        }
        let mut stats = StepStats::default();
        let pairs: Vec<(usize, usize)> = if self.engine_cfg.emcmc_sweep {
            let mut perm: Vec<usize> = (0..p).collect();
            for i in (1..p).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            perm.chunks_exact(2).map(|c| (c[0].min(c[1]), c[0].max(c[1]))).collect()
        } else {
            let i = rng.gen_range(0..p);
            let mut j = rng.gen_range(0..p - 1);
            if j >= i {
                j += 1;
            }
            vec![(i.min(j), i.max(j))]
        };
        for (i, j) in pairs {
            if rng.gen::<f64>() < self.engine_cfg.crossover_prob {
                stats.proposed_crossover += 1;
                let gp = self.move_cfg.crossover_gene_prob;
                let (sa, sb) =
                    crossover_structures(&population[i].structure, &population[j].structure, gp, rng)?;
                let (aa, ab) =
                    crossover_assignments(&population[i].assignment, &population[j].assignment, gp, rng)?;
                if !sa.is_acyclic() || !sb.is_acyclic() {
                    continue; // offspring pair leaves DAG space: reject
                }
                let oa = self.score_state(&sa, &aa)?;
                let ob = self.score_state(&sb, &ab)?;
                let current = population[i].log_score + population[j].log_score;
                let proposed = oa.log_score + ob.log_score;
                if mh_accept(current, proposed, 0.0, 0.0, self.score_cfg.temperature, rng) {
                    population[i] = oa;
                    population[j] = ob;
                    stats.accepted_crossover += 1;
                }
            } else {
                for c in [i, j] {
                    let snapshot = if self.engine_cfg.adaptive {
                        Some(self.snapshot_of(population, Some(c))?)
                    } else {
                        None
                    };
                    self.chain_update(&mut population[c], snapshot.as_ref(), &mut stats, rng)?;
                }
            }
        }
        Ok(stats)
    }

    /// Population snapshot, optionally leaving one member out.
    fn snapshot_of(
        &self,
        population: &[Individual],
        exclude: Option<usize>,
    ) -> Result<ProposalSnapshot> {
        let pairs: Vec<(&crate::bn::Structure, &MissingAssignment)> = population
            .iter()
            .enumerate()
            .filter(|&(c, _)| Some(c) != exclude)
            .map(|(_, ind)| (&ind.structure, &ind.assignment))
            .collect();
        build_snapshot(&pairs, self.mask, &self.var_arities)
    }

    fn trace_row(
        &self,
        iteration: usize,
        population: &[Individual],
        best_so_far: f64,
        stats: StepStats,
    ) -> TraceRow {
        let digests: Vec<String> = population.iter().map(|ind| ind.structure.digest()).collect();
        let mut unique = digests.clone();
        unique.sort();
        unique.dedup();
        TraceRow {
            iteration,
            scores: population.iter().map(|ind| ind.log_score).collect(),
            best_so_far,
            unique_structures: unique.len(),
            stats,
            digests: self.engine_cfg.record_digests.then_some(digests),
        }
    }

    /// Run one repetition: init, `iterations` steps (snapshot rebuilt each
    /// iteration when adaptive), full trace. Deterministic given
    /// (seed, engine kind, repetition).
    pub fn run_repetition(&mut self, repetition: usize) -> Result<RunOutput> {
        self.cache.clear(); // assignments rarely recur across repetitions
        let rep_seed = derive_seed(
            self.engine_cfg.seed,
            &[tag::ENGINE, self.engine_cfg.kind_tag(), tag::REP, repetition as u64],
        );
        let mut init_rng = child_rng(rep_seed, &[tag::INIT]);
        let mut population = self.init_population(&mut init_rng)?;
        let mut chain_rngs: Vec<ChaCha8Rng> = (0..self.engine_cfg.population_size)
            .map(|c| child_rng(rep_seed, &[tag::CHAIN, c as u64]))
            .collect();
        let mut loop_rng = child_rng(rep_seed, &[tag::LOOP]);

        let mut best = best_of(&population).clone();
        let mut trace = Trace::default();
        trace.rows.push(self.trace_row(0, &population, best.log_score, StepStats::default()));

        for iteration in 1..=self.engine_cfg.iterations {
            let stats = match self.engine_cfg.kind {
                EngineKind::Ea => self.ea_step(&mut population, &mut loop_rng)?,
                EngineKind::Mcmc => self.mcmc_step(&mut population, &mut chain_rngs)?,
                EngineKind::Emcmc => self.emcmc_step(&mut population, &mut loop_rng)?,
            };
            let iter_best = best_of(&population);
            if iter_best.log_score > best.log_score {
                best = iter_best.clone();
            }
            trace.rows.push(self.trace_row(iteration, &population, best.log_score, stats));
        }
        Ok(RunOutput { repetition, final_population: population, trace, best })
    }
}

fn best_of(population: &[Individual]) -> &Individual {
    population
        .iter()
        .max_by(|x, y| x.log_score.partial_cmp(&y.log_score).unwrap())
        .expect("population is nonempty")
}

/// Run every repetition of the configured engine; repetition `r` uses a
/// child stream derived from (seed, engine kind, r).
pub fn run(
    data: &Dataset,
    mask: &MissingMask,
    engine_cfg: EngineConfig,
    score_cfg: ScoreConfig,
    move_cfg: MoveConfig,
) -> Result<Vec<RunOutput>> {
    let mut engine = Engine::new(data, mask, engine_cfg, score_cfg, move_cfg)?;
    let mut outputs = Vec::with_capacity(engine.engine_cfg.repetitions);
    for rep in 0..engine.engine_cfg.repetitions {
        outputs.push(engine.run_repetition(rep)?);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::{Structure, Variable};
    use crate::dataset::parse_csv;
    use crate::dataset::LabelPolicy;
    use rand::SeedableRng;

    fn tiny_incomplete() -> (Dataset, MissingMask) {
        let vars: Vec<Variable> = (0..3)
            .map(|i| Variable::new(format!("V{i}"), vec!["a".into(), "b".into()]).unwrap())
            .collect();
        let csv = "V0,V1,V2\na,b,a\n?,a,b\nb,?,a\na,a,a\nb,b,?\na,b,b\n";
        let data = parse_csv(csv, LabelPolicy::Declared(&vars)).unwrap();
        let mask = MissingMask::of(&data);
        (data, mask)
    }

    fn tiny_complete() -> (Dataset, MissingMask) {
        let vars: Vec<Variable> = (0..2)
            .map(|i| Variable::new(format!("V{i}"), vec!["a".into(), "b".into()]).unwrap())
            .collect();
        let csv = "V0,V1\na,a\na,a\nb,b\nb,a\na,b\nb,b\na,a\nb,b\n";
        let data = parse_csv(csv, LabelPolicy::Declared(&vars)).unwrap();
        let mask = MissingMask::of(&data);
        (data, mask)
    }

    fn base_cfg(kind: EngineKind) -> EngineConfig {
        EngineConfig { kind, population_size: 4, iterations: 20, repetitions: 2, ..EngineConfig::default() }
    }

    #[test]
    fn mh_accept_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Equal scores, symmetric proposal: always accept.
        for _ in 0..100 {
            assert!(mh_accept(-5.0, -5.0, -1.0, -1.0, 1.0, &mut rng));
        }
        // Improvement with symmetric proposal: always accept.
        for _ in 0..100 {
            assert!(mh_accept(-5.0, -4.0, -1.0, -1.0, 1.0, &mut rng));
        }
        // Drop of ln 2 at T=1: accept rate 0.5 within 0.005 over 1e5 trials.
        let mut accepted = 0usize;
        let trials = 100_000;
        let delta = -(2.0f64.ln());
        for _ in 0..trials {
            if mh_accept(0.0, delta, 0.0, 0.0, 1.0, &mut rng) {
                accepted += 1;
            }
        }
        let rate = accepted as f64 / trials as f64;
        assert!((rate - 0.5).abs() < 0.005, "acceptance rate {rate}");
    }

    #[test]
    fn init_population_is_valid_and_deterministic() {
        let (data, mask) = tiny_incomplete();
        let cfg = EngineConfig { population_size: 1000, ..base_cfg(EngineKind::Mcmc) };
        let mut engine =
            Engine::new(&data, &mask, cfg, ScoreConfig::default(), MoveConfig::default())
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pop = engine.init_population(&mut rng).unwrap();
        for ind in &pop {
            assert!(ind.structure.is_acyclic());
            assert!(ind.structure.max_parent_count() <= engine.score_cfg.max_parents);
            assert!(ind.log_score.is_finite());
            assert_eq!(ind.assignment.len(), mask.len());
        }
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let pop2 = engine.init_population(&mut rng2).unwrap();
        for (a, b) in pop.iter().zip(&pop2) {
            assert_eq!(a.structure, b.structure);
            assert_eq!(a.assignment, b.assignment);
            assert_eq!(a.log_score.to_bits(), b.log_score.to_bits());
        }
    }

    #[test]
    fn init_with_complete_data_has_empty_assignments() {
        let (data, mask) = tiny_complete();
        let mut engine = Engine::new(
            &data,
            &mask,
            base_cfg(EngineKind::Ea),
            ScoreConfig::default(),
            MoveConfig::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pop = engine.init_population(&mut rng).unwrap();
        for ind in &pop {
            assert!(ind.assignment.is_empty());
            assert!(ind.log_score.is_finite());
        }
    }

    #[test]
    fn ea_clones_preserve_equal_score_population() {
        // With crossover_prob 0 and mutation_prob 0, offspring are clones;
        // the stable truncation ranks parents ahead of equal-scoring clones,
        // so the generation is unchanged.
        let (data, mask) = tiny_incomplete();
        let cfg = EngineConfig {
            crossover_prob: 0.0,
            mutation_prob: 0.0,
            ..base_cfg(EngineKind::Ea)
        };
        let mut engine =
            Engine::new(&data, &mask, cfg, ScoreConfig::default(), MoveConfig::default())
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Clone one individual across the population so all scores tie.
        let seedling = engine.init_population(&mut rng).unwrap().remove(0);
        let mut pop = vec![seedling.clone(); 4];
        let before: Vec<u64> = pop.iter().map(|i| i.log_score.to_bits()).collect();
        engine.ea_step(&mut pop, &mut rng).unwrap();
        let after: Vec<u64> = pop.iter().map(|i| i.log_score.to_bits()).collect();
        assert_eq!(before, after);
        for ind in &pop {
            assert_eq!(ind.structure, seedling.structure);
        }
    }

    #[test]
    fn ea_best_is_non_decreasing_and_improves() {
        let (data, mask) = tiny_incomplete();
        let mut strict_improvements = 0;
        for seed in 0..5u64 {
            let mut engine = Engine::new(
                &data,
                &mask,
                EngineConfig { iterations: 100, seed, ..base_cfg(EngineKind::Ea) },
                ScoreConfig { max_parents: 2, ..ScoreConfig::default() },
                MoveConfig::default(),
            )
            .unwrap();
            let out = engine.run_repetition(0).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for row in &out.trace.rows {
                assert!(row.best_so_far >= prev);
                prev = row.best_so_far;
                // Elitism: the running best is achieved by some member.
                let max = row.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(max <= row.best_so_far + 1e-12);
            }
            assert!(out.best.log_score >= out.trace.rows[0].best_so_far);
            if out.best.log_score > out.trace.rows[0].best_so_far {
                strict_improvements += 1;
            }
        }
        assert!(strict_improvements >= 4, "EA improved in only {strict_improvements}/5 seeds");
    }

    #[test]
    fn mcmc_auto_rejects_forced_cyclic_proposal() {
        // Two variables with the arc 0->1 present and only `add` feasible:
        // the sole proposal is 1->0, which forms a cycle and must be
        // rejected without changing the state.
        let (data, mask) = tiny_complete();
        let cfg = EngineConfig {
            population_size: 2,
            data_move_prob: 0.0,
            ..base_cfg(EngineKind::Mcmc)
        };
        let move_cfg = MoveConfig {
            structure_move_weights: [1.0, 0.0, 0.0],
            ..MoveConfig::default()
        };
        let mut engine =
            Engine::new(&data, &mask, cfg, ScoreConfig::default(), move_cfg).unwrap();
        let structure = Structure::new(vec![vec![], vec![0]]).unwrap();
        let assignment = MissingAssignment::empty();
        let scored = engine.score_state(&structure, &assignment).unwrap();
        let mut pop = vec![scored.clone(), scored.clone()];
        let mut rngs = vec![ChaCha8Rng::seed_from_u64(1), ChaCha8Rng::seed_from_u64(2)];
        let stats = engine.mcmc_step(&mut pop, &mut rngs).unwrap();
        assert_eq!(stats.proposed_structure, 2);
        assert_eq!(stats.accepted_structure, 0);
        for ind in &pop {
            assert_eq!(ind.structure, structure);
        }
    }

    #[test]
    fn mcmc_chains_are_isolated() {
        // Plain (non-adaptive) chains depend only on their own streams: the
        // shared chains of a 2-population and a 3-population run coincide.
        let (data, mask) = tiny_incomplete();
        let mut traces = Vec::new();
        for pop_size in [2usize, 3] {
            let cfg = EngineConfig {
                population_size: pop_size,
                iterations: 50,
                ..base_cfg(EngineKind::Mcmc)
            };
            let mut engine =
                Engine::new(&data, &mask, cfg, ScoreConfig::default(), MoveConfig::default())
                    .unwrap();
            let out = engine.run_repetition(0).unwrap();
            let per_chain: Vec<Vec<u64>> = (0..2)
                .map(|c| out.trace.rows.iter().map(|r| r.scores[c].to_bits()).collect())
                .collect();
            traces.push(per_chain);
        }
        assert_eq!(traces[0], traces[1]);
    }

    #[test]
    fn emcmc_identical_parents_crossover_is_accepted() {
        let (data, mask) = tiny_incomplete();
        let cfg = EngineConfig {
            population_size: 2,
            crossover_prob: 1.0,
            ..base_cfg(EngineKind::Emcmc)
        };
        let mut engine =
            Engine::new(&data, &mask, cfg, ScoreConfig::default(), MoveConfig::default())
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seedling = engine.init_population(&mut rng).unwrap().remove(0);
        let mut pop = vec![seedling.clone(), seedling.clone()];
        let stats = engine.emcmc_step(&mut pop, &mut rng).unwrap();
        assert_eq!(stats.proposed_crossover, 1);
        assert_eq!(stats.accepted_crossover, 1);
        for ind in &pop {
            assert_eq!(ind.structure, seedling.structure);
            assert_eq!(ind.assignment, seedling.assignment);
        }
    }

    #[test]
    fn emcmc_sweep_steps_disjoint_pairs() {
        let (data, mask) = tiny_incomplete();
        let cfg = EngineConfig {
            population_size: 6,
            crossover_prob: 0.0,
            emcmc_sweep: true,
            ..base_cfg(EngineKind::Emcmc)
        };
        let mut engine =
            Engine::new(&data, &mask, cfg, ScoreConfig::default(), MoveConfig::default())
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut pop = engine.init_population(&mut rng).unwrap();
        let stats = engine.emcmc_step(&mut pop, &mut rng).unwrap();
        // Three pairs, two mutation proposals each.
        assert_eq!(stats.proposed_structure + stats.proposed_data, 6);
    }

    #[test]
    fn emcmc_requires_two_individuals() {
        let (data, mask) = tiny_incomplete();
        let mut engine = Engine::new(
            &data,
            &mask,
            base_cfg(EngineKind::Emcmc),
            ScoreConfig::default(),
            MoveConfig::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut single = vec![engine.init_population(&mut rng).unwrap().remove(0)];
        assert!(matches!(
            engine.emcmc_step(&mut single, &mut rng),
            Err(Error::PopulationTooSmall { required: 2, found: 1 })
        ));
    }

    #[test]
    fn run_shapes_and_determinism() {
        let (data, mask) = tiny_incomplete();
        for kind in [EngineKind::Ea, EngineKind::Mcmc, EngineKind::Emcmc] {
            let cfg = EngineConfig { iterations: 1, repetitions: 1, ..base_cfg(kind) };
            let outs = run(&data, &mask, cfg, ScoreConfig::default(), MoveConfig::default())
                .unwrap();
            assert_eq!(outs.len(), 1);
            assert_eq!(outs[0].trace.rows.len(), 2); // init + 1 iteration
        }
        // Five repetitions: distinct traces, identical on rerun.
        let cfg = EngineConfig {
            iterations: 10,
            repetitions: 5,
            adaptive: true,
            ..base_cfg(EngineKind::Emcmc)
        };
        let a = run(&data, &mask, cfg.clone(), ScoreConfig::default(), MoveConfig::default())
            .unwrap();
        let b = run(&data, &mask, cfg, ScoreConfig::default(), MoveConfig::default()).unwrap();
        assert_eq!(a.len(), 5);
        let digest = |outs: &[RunOutput]| -> Vec<Vec<u64>> {
            outs.iter()
                .map(|o| {
                    o.trace
                        .rows
                        .iter()
                        .flat_map(|r| r.scores.iter().map(|s| s.to_bits()))
                        .collect()
                })
                .collect()
        };
        assert_eq!(digest(&a), digest(&b));
        let unique_reps: std::collections::HashSet<Vec<u64>> =
            digest(&a).into_iter().collect();
        assert_eq!(unique_reps.len(), 5, "repetitions should differ");
    }

    #[test]
    fn scores_stay_coherent_after_stepping() {
        // After any stepping, rescoring each individual from scratch
        // reproduces the stored score.
        let (data, mask) = tiny_incomplete();
        for kind in [EngineKind::Ea, EngineKind::Mcmc, EngineKind::Emcmc] {
            let cfg = EngineConfig {
                iterations: 30,
                repetitions: 1,
                adaptive: kind == EngineKind::Mcmc,
                ..base_cfg(kind)
            };
            let mut engine =
                Engine::new(&data, &mask, cfg, ScoreConfig::default(), MoveConfig::default())
                    .unwrap();
            let out = engine.run_repetition(0).unwrap();
            for ind in &out.final_population {
                let fresh = engine.score_state(&ind.structure, &ind.assignment).unwrap();
                assert!((fresh.log_score - ind.log_score).abs() < 1e-9);
            }
        }
    }
}
