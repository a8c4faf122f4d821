//! Post-hoc and in-run analysis: Gelman-Rubin scale reduction, holdout log
//! loss, best-so-far and diversity curves, arc-marginal posteriors, and
//! percentile credible intervals.

use crate::bn::{BayesianNetwork, Structure};
use crate::dataset::Dataset;
use crate::engines::Trace;
use crate::error::{Error, Result};
use crate::moves::arc_frequencies;

/// M chains of one scalar (typically the log score), with a burn-in
/// fraction discarded from the front before analysis.
#[derive(Debug, Clone)]
pub struct ScalarTraceSet {
    chains: Vec<Vec<f64>>,
    burn_in: f64,
}

impl ScalarTraceSet {
    /// Default burn-in: the first half of every chain is discarded.
    pub fn new(chains: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_burn_in(chains, 0.5)
    }

    pub fn with_burn_in(chains: Vec<Vec<f64>>, burn_in: f64) -> Result<Self> {
        if chains.len() < 2 {
            return Err(Error::TooFewSamples { required: 2, found: chains.len() });
        }
        if !(0.0..1.0).contains(&burn_in) {
            return Err(Error::InvalidConfig(format!(
                "burn-in fraction must be in [0,1), got {burn_in}"
            )));
        }
        let len = chains[0].len();
        for chain in &chains {
            if chain.len() != len {
                return Err(Error::LengthMismatch { expected: len, found: chain.len() });
            }
        }
        Ok(Self { chains, burn_in })
    }
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Gelman-Rubin potential scale reduction over the post-burn-in samples:
/// `B = N * var(chain means)`, `W = mean(within-chain variances)`,
/// `V = (N-1)/N * W + B/N`, `R = sqrt(V/W)`.
///
/// Constant chains (`W = 0`) are reported as `DegenerateChains` rather than
/// a NaN: the chains agree exactly, which is convergence by degeneracy.
pub fn psrf(traces: &ScalarTraceSet) -> Result<f64> {
    let discard = (traces.chains[0].len() as f64 * traces.burn_in).floor() as usize;
    let kept = traces.chains[0].len() - discard;
    if kept < 2 {
        return Err(Error::TooFewSamples { required: 2, found: kept });
    }
    let n = kept as f64;
    let post: Vec<&[f64]> = traces.chains.iter().map(|c| &c[discard..]).collect();
    let means: Vec<f64> = post.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let within: Vec<f64> = post.iter().map(|c| sample_variance(c)).collect();
    let w = within.iter().sum::<f64>() / within.len() as f64;
    if w == 0.0 {
        return Err(Error::DegenerateChains);
    }
    let b = n * sample_variance(&means);
    let v_hat = (n - 1.0) / n * w + b / n;
    Ok((v_hat / w).sqrt())
}

/// Holdout evaluation summary.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Training-data BD score; filled by callers that computed one.
    pub bde_score: Option<f64>,
    /// Mean over scored cases of the per-case sum over variables of
    /// `-ln p(observed value | rest of the case)`.
    pub log_loss: f64,
    /// Per-variable means over the same scored cases.
    pub per_variable: Vec<f64>,
    /// Cases dropped because some query had zero evidence probability or
    /// assigned probability zero to the observed value.
    pub impossible_evidence: usize,
    pub cases_scored: usize,
}

/// Log loss of a network on a complete holdout set.
///
/// For each case and variable X, the model predicts X from all other
/// observed values of the case; the loss term is `-ln p(x_observed)`.
/// Impossible-evidence cases are counted and excluded from the mean, never
/// clamped.
pub fn log_loss(net: &BayesianNetwork, holdout: &Dataset) -> Result<EvalReport> {
    if holdout.case_count() == 0 {
        return Err(Error::EmptyHoldout);
    }
    assert!(holdout.is_complete(), "holdout must be complete");
    let n = net.n();
    let mut per_variable = vec![0.0f64; n];
    let mut total = 0.0f64;
    let mut impossible = 0usize;
    let mut scored = 0usize;
    let mut evidence: Vec<Option<usize>> = vec![None; n];
    for case in 0..holdout.case_count() {
        let mut case_terms = vec![0.0f64; n];
        let mut ok = true;
        for target in 0..n {
            for v in 0..n {
                evidence[v] =
                    if v == target { None } else { holdout.cell(case, v) };
            }
            let observed = holdout.cell(case, target).expect("holdout is complete");
            match net.conditional_query(target, &evidence) {
                Ok(posterior) => {
                    let p = posterior[observed];
                    if p <= 0.0 {
                        ok = false;
                        break;
                    }
                    case_terms[target] = -p.ln();
                }
                Err(Error::ZeroEvidenceProbability) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ok {
            scored += 1;
            for (acc, term) in per_variable.iter_mut().zip(&case_terms) {
                *acc += term;
            }
            total += case_terms.iter().sum::<f64>();
        } else {
            impossible += 1;
        }
    }
    let denom = scored as f64;
    let log_loss = if scored > 0 { total / denom } else { f64::NAN };
    for acc in &mut per_variable {
        *acc = if scored > 0 { *acc / denom } else { f64::NAN };
    }
    Ok(EvalReport {
        bde_score: None,
        log_loss,
        per_variable,
        impossible_evidence: impossible,
        cases_scored: scored,
    })
}

/// Running maximum of the per-iteration population maxima.
pub fn best_so_far(trace: &Trace) -> Vec<f64> {
    assert!(!trace.rows.is_empty(), "trace must be nonempty");
    let mut best = f64::NEG_INFINITY;
    trace
        .rows
        .iter()
        .map(|row| {
            let row_max = row.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            best = best.max(row_max);
            best
        })
        .collect()
}

/// Unique-structure count per iteration, from the recorded digests.
pub fn diversity(trace: &Trace) -> Result<Vec<usize>> {
    trace
        .rows
        .iter()
        .map(|row| {
            let digests = row.digests.as_ref().ok_or(Error::DigestsAbsent)?;
            let mut unique = digests.clone();
            unique.sort();
            unique.dedup();
            Ok(unique.len())
        })
        .collect()
}

/// Fraction of structures containing each directed arc, row-major `n x n`.
/// Identical (bit-for-bit) to the arc table adaptive proposals use.
pub fn arc_marginals<'a>(
    population: impl IntoIterator<Item = &'a Structure>,
) -> Result<Vec<f64>> {
    arc_frequencies(population)
}

/// Central percentile interval with linear interpolation between order
/// statistics (rank `p * (n-1)`).
pub fn credible_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { required: 2, found: samples.len() });
    }
    assert!((0.0..1.0).contains(&level) && level > 0.0, "level must be in (0,1)");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let percentile = |p: f64| -> f64 {
        let rank = p * (sorted.len() - 1) as f64;
        let lo = rank.floor() as usize;
        let hi = rank.ceil() as usize;
        let frac = rank - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    };
    let tail = (1.0 - level) / 2.0;
    Ok((percentile(tail), percentile(1.0 - tail)))
}
