//! State-change operators shared by the engines: uniform parameterized
//! crossover, baseline mutations, and adaptive (population-informed)
//! proposals with exact forward/reverse probabilities for Hastings
//! corrections.
//!
//! Structure proposals do NOT check acyclicity: cyclic results are legal
//! proposals and the engines decide their fate. Every `ProposedMove` carries
//! `exp(forward_log_prob)` equal to the true probability of generating that
//! exact proposal from the source state, and the reverse probability of the
//! exact inverse move evaluated in the proposed state against the same
//! snapshot.

use rand::Rng;

use crate::bn::Structure;
use crate::dataset::{MissingAssignment, MissingMask};
use crate::error::{Error, Result};

/// Settings for the move operators.
#[derive(Debug, Clone)]
pub struct MoveConfig {
    /// Per-gene swap probability for uniform crossover.
    pub crossover_gene_prob: f64,
    /// Relative weights for {add, delete, reverse} structure moves.
    pub structure_move_weights: [f64; 3],
    /// Smoothing constant for adaptive frequencies; keeps every feasible
    /// move's probability strictly positive.
    pub epsilon: f64,
}

impl Default for MoveConfig {
    fn default() -> Self {
        Self {
            crossover_gene_prob: 0.5,
            structure_move_weights: [1.0, 1.0, 1.0],
            epsilon: 0.05,
        }
    }
}

impl MoveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.crossover_gene_prob) {
            return Err(Error::InvalidConfig(format!(
                "crossover_gene_prob must be in [0,1], got {}",
                self.crossover_gene_prob
            )));
        }
        if self.structure_move_weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidConfig("move weights must be nonnegative".into()));
        }
        if self.structure_move_weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidConfig("move weights must not all be zero".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Population arc and missing-value frequencies driving adaptive proposals.
#[derive(Debug, Clone)]
pub struct ProposalSnapshot {
    pub n: usize,
    /// Row-major `n x n`; entry `[u*n + v]` is the fraction of structures
    /// containing the arc `u -> v`. Diagonal is zero.
    pub arc_freq: Vec<f64>,
    /// One distribution per masked cell over that cell's variable values.
    pub value_freq: Vec<Vec<f64>>,
    pub population_size: usize,
}

impl ProposalSnapshot {
    pub fn arc(&self, u: usize, v: usize) -> f64 {
        self.arc_freq[u * self.n + v]
    }
}

/// Row-major `n x n` fraction of structures containing each directed arc.
/// Shared by adaptive proposals and the arc-marginal diagnostic so the two
/// agree bit-for-bit.
pub fn arc_frequencies<'a>(
    structures: impl IntoIterator<Item = &'a Structure>,
) -> Result<Vec<f64>> {
    let mut iter = structures.into_iter();
    let Some(first) = iter.next() else {
        return Err(Error::EmptyPopulation);
    };
    let n = first.n();
    let mut freq = vec![0.0; n * n];
    let mut count = 0.0f64;
    for structure in std::iter::once(first).chain(iter) {
        if structure.n() != n {
            return Err(Error::ShapeMismatch { left: n, right: structure.n() });
        }
        for v in 0..n {
            for &u in structure.parents(v) {
                freq[u * n + v] += 1.0;
            }
        }
        count += 1.0;
    }
    for f in &mut freq {
        *f /= count;
    }
    Ok(freq)
}

/// Population frequencies for adaptive proposals: `arc_freq[u][v]` is the
/// fraction of individuals whose structure contains `u -> v`, and
/// `value_freq[cell]` the distribution of imputed values at that cell.
pub fn build_snapshot(
    population: &[(&Structure, &MissingAssignment)],
    mask: &MissingMask,
    var_arities: &[usize],
) -> Result<ProposalSnapshot> {
    if population.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let n = population[0].0.n();
    let m = population.len() as f64;
    let arc_freq = arc_frequencies(population.iter().map(|&(s, _)| s))?;
    let mut value_freq: Vec<Vec<f64>> = mask
        .coords()
        .iter()
        .map(|&(_, var)| vec![0.0; var_arities[var]])
        .collect();
    for &(_, assignment) in population {
        if assignment.len() != mask.len() {
            return Err(Error::ShapeMismatch { left: mask.len(), right: assignment.len() });
        }
        for (pos, &value) in assignment.values.iter().enumerate() {
            value_freq[pos][value] += 1.0;
        }
    }
    for row in &mut value_freq {
        for f in row.iter_mut() {
            *f /= m;
        }
    }
    Ok(ProposalSnapshot { n, arc_freq, value_freq, population_size: population.len() })
}

/// The state a move proposes.
#[derive(Debug, Clone)]
pub enum ProposedState {
    Structure(Structure),
    Assignment(MissingAssignment),
}

/// A generated proposal with its exact forward and reverse log
/// probabilities and the diff it induces.
#[derive(Debug, Clone)]
pub struct ProposedMove {
    pub state: ProposedState,
    pub forward_log_prob: f64,
    pub reverse_log_prob: f64,
    /// Variables whose parent set changed.
    pub changed_families: Vec<usize>,
    /// Mask positions whose imputed value changed.
    pub changed_cells: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Crossover

/// Uniform parameterized crossover over any gene sequence: each position
/// independently swaps with probability `gene_prob`.
pub fn crossover_uniform<T: Clone>(
    a: &[T],
    b: &[T],
    gene_prob: f64,
    rng: &mut impl Rng,
) -> Result<(Vec<T>, Vec<T>)> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch { left: a.len(), right: b.len() });
    }
    let mut oa: Vec<T> = a.to_vec();
    let mut ob: Vec<T> = b.to_vec();
    for g in 0..a.len() {
        if rng.gen::<f64>() < gene_prob {
            std::mem::swap(&mut oa[g], &mut ob[g]);
        }
    }
    Ok((oa, ob))
}

/// Crossover of two structure chromosomes (gene = whole parent set).
pub fn crossover_structures(
    a: &Structure,
    b: &Structure,
    gene_prob: f64,
    rng: &mut impl Rng,
) -> Result<(Structure, Structure)> {
    let (ra, rb) = crossover_uniform(a.parent_sets(), b.parent_sets(), gene_prob, rng)?;
    // Rows are swapped whole, so validity is inherited from the parents.
    Ok((Structure::new(ra)?, Structure::new(rb)?))
}

/// Crossover of two missing-data chromosomes (gene = one cell value).
pub fn crossover_assignments(
    a: &MissingAssignment,
    b: &MissingAssignment,
    gene_prob: f64,
    rng: &mut impl Rng,
) -> Result<(MissingAssignment, MissingAssignment)> {
    let (va, vb) = crossover_uniform(&a.values, &b.values, gene_prob, rng)?;
    Ok((MissingAssignment::new(va), MissingAssignment::new(vb)))
}

// ---------------------------------------------------------------------------
// Missing-data mutation

fn cell_value_weight(
    snapshot: Option<&ProposalSnapshot>,
    epsilon: f64,
    pos: usize,
    value: usize,
) -> f64 {
    match snapshot {
        None => 1.0,
        Some(s) => s.value_freq[pos][value] + epsilon,
    }
}

/// Resample one missing cell.
///
/// Baseline: the new value is uniform over the `arity - 1` remaining values.
/// Adaptive: the new value is drawn proportional to the population frequency
/// of each remaining value plus `epsilon`. Both directions are evaluated
/// against the same snapshot.
pub fn mutate_missing(
    assignment: &MissingAssignment,
    mask: &MissingMask,
    var_arities: &[usize],
    snapshot: Option<&ProposalSnapshot>,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<ProposedMove> {
    let len = mask.len();
    if len == 0 {
        return Err(Error::NoMissingCells);
    }
    debug_assert_eq!(assignment.len(), len);
    let pos = rng.gen_range(0..len);
    let arity = var_arities[mask.var_of(pos)];
    let current = assignment.values[pos];

    let mut total = 0.0;
    for value in 0..arity {
        if value != current {
            total += cell_value_weight(snapshot, epsilon, pos, value);
        }
    }
    let mut draw = rng.gen::<f64>() * total;
    let mut new_value = if current == 0 { 1 } else { 0 };
    for value in 0..arity {
        if value == current {
            continue;
        }
        let w = cell_value_weight(snapshot, epsilon, pos, value);
        if draw < w {
            new_value = value;
            break;
        }
        draw -= w;
        new_value = value; // rounding guard: keep the last candidate
    }
    let forward_value_prob = cell_value_weight(snapshot, epsilon, pos, new_value) / total;

    // Reverse: from the mutated state, propose the old value back.
    let mut reverse_total = 0.0;
    for value in 0..arity {
        if value != new_value {
            reverse_total += cell_value_weight(snapshot, epsilon, pos, value);
        }
    }
    let reverse_value_prob = cell_value_weight(snapshot, epsilon, pos, current) / reverse_total;

    let cell_log_prob = -(len as f64).ln();
    let mut values = assignment.values.clone();
    values[pos] = new_value;
    Ok(ProposedMove {
        state: ProposedState::Assignment(MissingAssignment::new(values)),
        forward_log_prob: cell_log_prob + forward_value_prob.ln(),
        reverse_log_prob: cell_log_prob + reverse_value_prob.ln(),
        changed_families: Vec::new(),
        changed_cells: vec![pos],
    })
}

// ---------------------------------------------------------------------------
// Structure mutation

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureMoveKind {
    Add,
    Delete,
    Reverse,
}

struct FeasibleMoves {
    adds: Vec<(usize, usize)>,
    dels: Vec<(usize, usize)>,
    revs: Vec<(usize, usize)>,
}

fn feasible_moves(structure: &Structure, max_parents: usize) -> FeasibleMoves {
    let n = structure.n();
    let mut adds = Vec::new();
    let mut dels = Vec::new();
    let mut revs = Vec::new();
    for v in 0..n {
        let room = structure.parent_count(v) < max_parents;
        for u in 0..n {
            if u == v {
                continue;
            }
            if structure.contains_arc(u, v) {
                dels.push((u, v));
                // Reversing u->v adds v->u: the new head u needs room and
                // the reversed arc must not already exist (2-cycles are
                // representable states).
                if !structure.contains_arc(v, u) && structure.parent_count(u) < max_parents {
                    revs.push((u, v));
                }
            } else if room {
                adds.push((u, v));
            }
        }
    }
    FeasibleMoves { adds, dels, revs }
}

fn arc_weight(
    kind: StructureMoveKind,
    u: usize,
    v: usize,
    snapshot: Option<&ProposalSnapshot>,
    epsilon: f64,
) -> f64 {
    match snapshot {
        None => 1.0,
        Some(s) => match kind {
            StructureMoveKind::Add => s.arc(u, v) + epsilon,
            StructureMoveKind::Delete => (1.0 - s.arc(u, v)) + epsilon,
            StructureMoveKind::Reverse => s.arc(v, u) + epsilon,
        },
    }
}

/// Log probability of proposing the exact move `(kind, u, v)` from
/// `structure`, including the feasible-type renormalization. Returns
/// negative infinity when the move has zero probability (its type weight is
/// zero), which makes the originating proposal irreversible and always
/// rejected.
fn proposal_log_prob(
    structure: &Structure,
    max_parents: usize,
    snapshot: Option<&ProposalSnapshot>,
    weights: &[f64; 3],
    epsilon: f64,
    kind: StructureMoveKind,
    arc: (usize, usize),
) -> f64 {
    let feasible = feasible_moves(structure, max_parents);
    let lists = [&feasible.adds, &feasible.dels, &feasible.revs];
    let kinds = [StructureMoveKind::Add, StructureMoveKind::Delete, StructureMoveKind::Reverse];
    let t = kinds.iter().position(|&k| k == kind).unwrap();
    if lists[t].is_empty() || weights[t] == 0.0 {
        return f64::NEG_INFINITY;
    }
    debug_assert!(lists[t].contains(&arc), "inverse arc must be feasible");
    let type_total: f64 = (0..3)
        .map(|i| if lists[i].is_empty() { 0.0 } else { weights[i] })
        .sum();
    let type_prob = weights[t] / type_total;
    let arc_total: f64 =
        lists[t].iter().map(|&(u, v)| arc_weight(kind, u, v, snapshot, epsilon)).sum();
    let arc_prob = arc_weight(kind, arc.0, arc.1, snapshot, epsilon) / arc_total;
    type_prob.ln() + arc_prob.ln()
}

/// Propose an add/delete/reverse arc move.
///
/// The move type is drawn by `weights` restricted to feasible types; the arc
/// uniformly (baseline) or frequency-weighted (adaptive) within the type.
/// The reverse log probability is for the exact inverse move (add<->delete,
/// reverse inverts itself) evaluated in the proposed structure against the
/// same snapshot.
pub fn mutate_structure(
    structure: &Structure,
    max_parents: usize,
    snapshot: Option<&ProposalSnapshot>,
    weights: &[f64; 3],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<ProposedMove> {
    let feasible = feasible_moves(structure, max_parents);
    let lists = [&feasible.adds, &feasible.dels, &feasible.revs];
    let kinds = [StructureMoveKind::Add, StructureMoveKind::Delete, StructureMoveKind::Reverse];
    let effective: [f64; 3] = std::array::from_fn(|t| {
        if lists[t].is_empty() {
            0.0
        } else {
            weights[t]
        }
    });
    let type_total: f64 = effective.iter().sum();
    if type_total <= 0.0 {
        return Err(Error::NoFeasibleMove);
    }

    let mut draw = rng.gen::<f64>() * type_total;
    let mut t = 0;
    for (i, &w) in effective.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        if draw < w {
            t = i;
            break;
        }
        draw -= w;
        t = i;
    }
    let kind = kinds[t];
    let type_prob = effective[t] / type_total;

    let arcs = lists[t];
    let arc_total: f64 =
        arcs.iter().map(|&(u, v)| arc_weight(kind, u, v, snapshot, epsilon)).sum();
    let mut draw = rng.gen::<f64>() * arc_total;
    let mut chosen = arcs[arcs.len() - 1];
    for &(u, v) in arcs {
        let w = arc_weight(kind, u, v, snapshot, epsilon);
        if draw < w {
            chosen = (u, v);
            break;
        }
        draw -= w;
    }
    let (u, v) = chosen;
    let arc_prob = arc_weight(kind, u, v, snapshot, epsilon) / arc_total;
    let forward_log_prob = type_prob.ln() + arc_prob.ln();

    let (next, inverse_kind, inverse_arc, changed_families) = match kind {
        StructureMoveKind::Add => {
            (structure.with_arc_added(u, v), StructureMoveKind::Delete, (u, v), vec![v])
        }
        StructureMoveKind::Delete => {
            (structure.with_arc_removed(u, v), StructureMoveKind::Add, (u, v), vec![v])
        }
        StructureMoveKind::Reverse => {
            let mut fams = vec![u, v];
            fams.sort_unstable();
            (structure.with_arc_reversed(u, v), StructureMoveKind::Reverse, (v, u), fams)
        }
    };
    let reverse_log_prob = proposal_log_prob(
        &next,
        max_parents,
        snapshot,
        weights,
        epsilon,
        inverse_kind,
        inverse_arc,
    );
    Ok(ProposedMove {
        state: ProposedState::Structure(next),
        forward_log_prob,
        reverse_log_prob,
        changed_families,
        changed_cells: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::Variable;
    use crate::dataset::{parse_csv, Dataset, LabelPolicy, MissingMask};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn masked_dataset(csv: &str, arities: &[usize]) -> (Dataset, MissingMask) {
        let vars: Vec<Variable> = arities
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let labels = (0..r).map(|k| format!("v{k}")).collect();
                Variable::new(format!("V{i}"), labels).unwrap()
            })
            .collect();
        let data = parse_csv(csv, LabelPolicy::Declared(&vars)).unwrap();
        let mask = MissingMask::of(&data);
        (data, mask)
    }

    #[test]
    fn crossover_extreme_gene_probs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = vec![1, 2, 3, 4];
        let b = vec![5, 6, 7, 8];
        let (oa, ob) = crossover_uniform(&a, &b, 0.0, &mut rng).unwrap();
        assert_eq!(oa, a);
        assert_eq!(ob, b);
        let (oa, ob) = crossover_uniform(&a, &b, 1.0, &mut rng).unwrap();
        assert_eq!(oa, b);
        assert_eq!(ob, a);
        assert!(matches!(
            crossover_uniform(&a, &b[..3], 0.5, &mut rng),
            Err(Error::ShapeMismatch { left: 4, right: 3 })
        ));
    }

    #[test]
    fn crossover_half_swaps_about_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = vec![0u8; 10_000];
        let b = vec![1u8; 10_000];
        let (oa, _) = crossover_uniform(&a, &b, 0.5, &mut rng).unwrap();
        let swapped = oa.iter().filter(|&&g| g == 1).count() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&swapped), "swap fraction {swapped}");
    }

    #[test]
    fn crossover_conserves_genes_per_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let len = rng.gen_range(1..20);
            let a: Vec<u32> = (0..len).map(|_| rng.gen_range(0..10)).collect();
            let b: Vec<u32> = (0..len).map(|_| rng.gen_range(0..10)).collect();
            let (oa, ob) = crossover_uniform(&a, &b, 0.5, &mut rng).unwrap();
            for g in 0..len {
                let mut parents = [a[g], b[g]];
                let mut children = [oa[g], ob[g]];
                parents.sort_unstable();
                children.sort_unstable();
                assert_eq!(parents, children);
            }
        }
    }

    #[test]
    fn structure_crossover_swaps_whole_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Structure::new(vec![vec![], vec![0], vec![0, 1]]).unwrap();
        let b = Structure::new(vec![vec![1], vec![], vec![]]).unwrap();
        let (oa, ob) = crossover_structures(&a, &b, 1.0, &mut rng).unwrap();
        assert_eq!(oa, b);
        assert_eq!(ob, a);
    }

    #[test]
    fn mutate_missing_baseline_symmetric() {
        let (_, mask) = masked_dataset("V0,V1\n?,v0\nv1,?\n", &[2, 3]);
        let assignment = MissingAssignment::new(vec![0, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mv =
                mutate_missing(&assignment, &mask, &[2, 3], None, 0.05, &mut rng).unwrap();
            let ProposedState::Assignment(next) = &mv.state else {
                panic!("expected assignment move")
            };
            assert_eq!(mv.changed_cells.len(), 1);
            let pos = mv.changed_cells[0];
            assert_ne!(next.values[pos], assignment.values[pos]);
            if pos == 0 {
                // Binary cell: the opposite value, symmetric.
                assert_eq!(mv.forward_log_prob, mv.reverse_log_prob);
                assert!((mv.forward_log_prob.exp() - 0.5).abs() < 1e-12); // 1/2 cells * 1 value
            } else {
                // Ternary cell baseline: each remaining value with prob 1/2.
                assert_eq!(mv.forward_log_prob, mv.reverse_log_prob);
                assert!((mv.forward_log_prob.exp() - 0.25).abs() < 1e-12); // 1/2 * 1/2
            }
        }
    }

    #[test]
    fn mutate_missing_adaptive_hand_example() {
        // Single ternary cell, value_freq (0.8, 0.1, 0.1), epsilon 0.05,
        // current value0: proposes value1/value2 each with prob 0.5; the
        // reverse toward value0 has prob 0.85/(0.85+0.15).
        let (_, mask) = masked_dataset("V0\n?\n", &[3]);
        let assignment = MissingAssignment::new(vec![0]);
        let snapshot = ProposalSnapshot {
            n: 1,
            arc_freq: vec![0.0],
            value_freq: vec![vec![0.8, 0.1, 0.1]],
            population_size: 10,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut counts = [0usize; 3];
        for _ in 0..20_000 {
            let mv = mutate_missing(&assignment, &mask, &[3], Some(&snapshot), 0.05, &mut rng)
                .unwrap();
            let ProposedState::Assignment(next) = &mv.state else { unreachable!() };
            counts[next.values[0]] += 1;
            assert!((mv.forward_log_prob.exp() - 0.5).abs() < 1e-12);
            assert!((mv.reverse_log_prob.exp() - 0.85).abs() < 1e-12);
        }
        assert_eq!(counts[0], 0);
        let f1 = counts[1] as f64 / 20_000.0;
        assert!((f1 - 0.5).abs() < 0.02);
    }

    #[test]
    fn mutate_missing_requires_missing_cells() {
        let (_, mask) = masked_dataset("V0,V1\nv0,v1\n", &[2, 2]);
        let assignment = MissingAssignment::empty();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            mutate_missing(&assignment, &mask, &[2, 2], None, 0.05, &mut rng),
            Err(Error::NoMissingCells)
        ));
    }

    #[test]
    fn mutate_structure_two_var_empty() {
        let s = Structure::empty(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut counts = HashMap::new();
        for _ in 0..10_000 {
            let mv = mutate_structure(&s, 1, None, &[1.0, 1.0, 1.0], 0.05, &mut rng).unwrap();
            let ProposedState::Structure(next) = &mv.state else { unreachable!() };
            *counts.entry(next.digest()).or_insert(0usize) += 1;
            assert!((mv.forward_log_prob.exp() - 0.5).abs() < 1e-12);
        }
        assert_eq!(counts.len(), 2);
        for &c in counts.values() {
            let f = c as f64 / 10_000.0;
            assert!((f - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn delete_then_reverse_probability_hand_enumeration() {
        // 3 nodes, single arc 0->1, baseline weights (1,1,1), m=2.
        // Feasible: 5 adds, 1 delete, 1 reverse -> P(delete move) = 1/3 * 1.
        // From the empty successor only adds (6) are feasible, so the
        // reverse probability is 1 * 1/6.
        let s = Structure::new(vec![vec![], vec![0], vec![]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        loop {
            let mv = mutate_structure(&s, 2, None, &[1.0, 1.0, 1.0], 0.05, &mut rng).unwrap();
            let ProposedState::Structure(next) = &mv.state else { unreachable!() };
            if next.arc_count() == 0 {
                assert!((mv.forward_log_prob.exp() - 1.0 / 3.0).abs() < 1e-12);
                assert!((mv.reverse_log_prob.exp() - 1.0 / 6.0).abs() < 1e-12);
                break;
            }
        }
    }

    #[test]
    fn adaptive_add_hand_normalization() {
        // arc_freq[0][1] = 0.9, everything else 0, epsilon 0.05: among the 6
        // candidate arcs the weight of 0->1 is 0.95 of a 1.2 total.
        let mut arc_freq = vec![0.0; 9];
        arc_freq[1] = 0.9; // u=0, v=1
        let snapshot =
            ProposalSnapshot { n: 3, arc_freq, value_freq: vec![], population_size: 4 };
        let s = Structure::empty(3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut hits = 0usize;
        let trials = 50_000;
        for _ in 0..trials {
            let mv =
                mutate_structure(&s, 2, Some(&snapshot), &[1.0, 1.0, 1.0], 0.05, &mut rng)
                    .unwrap();
            let ProposedState::Structure(next) = &mv.state else { unreachable!() };
            if next.contains_arc(0, 1) {
                hits += 1;
                let want = 0.95 / 1.2;
                assert!((mv.forward_log_prob.exp() - want).abs() < 1e-12);
            }
        }
        let f = hits as f64 / trials as f64;
        assert!((f - 0.95 / 1.2).abs() < 0.01, "empirical {f}");
    }

    #[test]
    fn proposals_respect_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2_000 {
            let n = rng.gen_range(2..5usize);
            let m = rng.gen_range(1..n);
            let mut s = Structure::empty(n);
            for _ in 0..rng.gen_range(0..4) {
                if let Ok(mv) = mutate_structure(&s, m, None, &[1.0, 1.0, 1.0], 0.05, &mut rng)
                {
                    let ProposedState::Structure(next) = mv.state else { unreachable!() };
                    s = next;
                }
            }
            assert!(s.max_parent_count() <= m);
            for v in 0..n {
                assert!(!s.parents(v).contains(&v));
            }
        }
    }

    #[test]
    fn no_feasible_move_with_zero_parent_limit() {
        let s = Structure::empty(3);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        assert!(matches!(
            mutate_structure(&s, 0, None, &[1.0, 1.0, 1.0], 0.05, &mut rng),
            Err(Error::NoFeasibleMove)
        ));
    }

    #[test]
    fn hastings_exactness_empirical() {
        // Draw many proposals from a fixed 4-node state and check that each
        // distinct proposal's frequency matches exp(forward_log_prob) within
        // 3-sigma binomial bounds. Repeat from a successor to validate a
        // reverse probability empirically.
        let s = Structure::new(vec![vec![], vec![0], vec![0], vec![2]]).unwrap();
        let mut arc_freq = vec![0.0; 16];
        arc_freq[1] = 0.5; // 0->1
        arc_freq[2] = 0.25; // 0->2
        arc_freq[7] = 0.75; // 1->3
        let snapshot =
            ProposalSnapshot { n: 4, arc_freq, value_freq: vec![], population_size: 4 };
        let weights = [1.0, 2.0, 0.5];
        let trials = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut freq: HashMap<String, (usize, f64)> = HashMap::new();
        for _ in 0..trials {
            let mv = mutate_structure(&s, 2, Some(&snapshot), &weights, 0.05, &mut rng).unwrap();
            let ProposedState::Structure(next) = &mv.state else { unreachable!() };
            let entry = freq.entry(next.digest()).or_insert((0, mv.forward_log_prob));
            entry.0 += 1;
            assert!((entry.1 - mv.forward_log_prob).abs() < 1e-12);
        }
        let total_prob: f64 = freq.values().map(|&(_, lp)| lp.exp()).sum();
        assert!((total_prob - 1.0).abs() < 1e-9, "proposal probabilities sum to {total_prob}");
        for (digest, (count, log_prob)) in &freq {
            let p = log_prob.exp();
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            let emp = *count as f64 / trials as f64;
            assert!(
                (emp - p).abs() <= 3.0 * sigma + 1e-9,
                "{digest}: empirical {emp} vs exact {p} (sigma {sigma})"
            );
        }

        // Reverse check: pick one specific forward move, re-draw from the
        // successor state, and compare the inverse move's frequency.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mv = loop {
            let mv = mutate_structure(&s, 2, Some(&snapshot), &weights, 0.05, &mut rng).unwrap();
            let ProposedState::Structure(next) = &mv.state else { unreachable!() };
            if next.arc_count() > s.arc_count() {
                break mv;
            }
        };
        let ProposedState::Structure(next) = &mv.state else { unreachable!() };
        let mut back = 0usize;
        for _ in 0..trials {
            let rv =
                mutate_structure(next, 2, Some(&snapshot), &weights, 0.05, &mut rng).unwrap();
            let ProposedState::Structure(prev) = &rv.state else { unreachable!() };
            if prev == &s {
                back += 1;
            }
        }
        let p = mv.reverse_log_prob.exp();
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let emp = back as f64 / trials as f64;
        assert!(
            (emp - p).abs() <= 3.0 * sigma + 1e-9,
            "reverse: empirical {emp} vs exact {p}"
        );
    }

    #[test]
    fn adaptive_weights_always_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..200 {
            let n = 4;
            let mut arc_freq = vec![0.0; n * n];
            for (i, f) in arc_freq.iter_mut().enumerate() {
                if i % n != i / n {
                    *f = rng.gen_range(0.0..=1.0);
                }
            }
            let snapshot = ProposalSnapshot {
                n,
                arc_freq,
                value_freq: vec![vec![1.0, 0.0]],
                population_size: 8,
            };
            for kind in
                [StructureMoveKind::Add, StructureMoveKind::Delete, StructureMoveKind::Reverse]
            {
                for u in 0..n {
                    for v in 0..n {
                        if u != v {
                            assert!(arc_weight(kind, u, v, Some(&snapshot), 0.05) > 0.0);
                        }
                    }
                }
            }
            // Even a degenerate value distribution keeps every remaining
            // value proposable.
            assert!(cell_value_weight(Some(&snapshot), 0.05, 0, 1) > 0.0);
        }
    }

    #[test]
    fn build_snapshot_fractions() {
        let (_, mask) = masked_dataset("V0,V1\n?,v0\n", &[2, 2]);
        let with_arc = Structure::new(vec![vec![], vec![0]]).unwrap();
        let without = Structure::empty(2);
        let a0 = MissingAssignment::new(vec![0]);
        let a1 = MissingAssignment::new(vec![1]);

        let single = build_snapshot(&[(&with_arc, &a0)], &mask, &[2, 2]).unwrap();
        assert_eq!(single.arc(0, 1), 1.0);
        assert_eq!(single.arc(1, 0), 0.0);
        assert_eq!(single.value_freq[0], vec![1.0, 0.0]);

        let pair =
            build_snapshot(&[(&with_arc, &a0), (&without, &a1)], &mask, &[2, 2]).unwrap();
        assert_eq!(pair.arc(0, 1), 0.5);
        assert_eq!(pair.value_freq[0], vec![0.5, 0.5]);

        assert!(matches!(
            build_snapshot(&[], &mask, &[2, 2]),
            Err(Error::EmptyPopulation)
        ));
    }

    #[test]
    fn snapshot_value_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let (_, mask) = masked_dataset("V0,V1\n?,?\nv0,?\n", &[2, 3]);
        let structures: Vec<Structure> = (0..20).map(|_| Structure::empty(2)).collect();
        let assignments: Vec<MissingAssignment> = (0..20)
            .map(|_| {
                MissingAssignment::new(
                    (0..mask.len())
                        .map(|pos| rng.gen_range(0..[2, 3][mask.var_of(pos)]))
                        .collect(),
                )
            })
            .collect();
        let pop: Vec<(&Structure, &MissingAssignment)> =
            structures.iter().zip(assignments.iter()).collect();
        let snapshot = build_snapshot(&pop, &mask, &[2, 3]).unwrap();
        for row in &snapshot.value_freq {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // Diagonal arc frequencies are zero by construction.
        for v in 0..2 {
            assert_eq!(snapshot.arc(v, v), 0.0);
        }
    }
}
