//! Permutation p-values for any fitter, with optional subsampling.

use rand::seq::index::sample as index_sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds::derive_seed;

use super::{DesignMatrix, FitResult};

#[derive(Debug, Clone)]
pub struct PermutationResult {
    /// Two-sided permutation p per coefficient: (1 + #{|b*| >= |b|}) / (1 + m)
    /// over the m successful replicates.
    pub p_values: Vec<(String, f64)>,
    pub n_permutations: usize,
    /// Replicates whose refit failed; counted, not silently skipped.
    pub n_failures: usize,
    pub subsample_used: Option<usize>,
    /// The reference fit on the (sub)sampled design.
    pub reference: FitResult,
}

/// Re-estimate the model under `n_perm` uniform permutations of the outcome.
///
/// When `subsample` is smaller than the design, a seeded uniform row sample
/// is drawn once and both the reference fit and all permutation fits use it.
/// Replicate seeds derive from the master seed by counter, so results do not
/// depend on thread scheduling.
pub fn permutation_pvalues<F>(
    fitter: F,
    design: &DesignMatrix,
    n_perm: usize,
    subsample: Option<usize>,
    seed: u64,
) -> Result<PermutationResult>
where
    F: Fn(&DesignMatrix) -> Result<FitResult> + Sync,
{
    if n_perm == 0 {
        return Err(Error::Argument("n_perm must be >= 1".into()));
    }
    let working;
    let subsample_used;
    match subsample {
        Some(k) if k == 0 => return Err(Error::Argument("subsample must be positive".into())),
        Some(k) if k < design.n_rows() => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
            let mut rows: Vec<usize> = index_sample(&mut rng, design.n_rows(), k).into_vec();
            rows.sort_unstable();
            working = design.subset(&rows);
            subsample_used = Some(k);
        }
        _ => {
            working = design.clone();
            subsample_used = None;
        }
    }

    let reference = fitter(&working)?;
    let observed: Vec<f64> = reference.coefficients.iter().map(|c| c.beta.abs()).collect();

    let replicates: Vec<Option<Vec<f64>>> = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1 + i as u64));
            let mut outcome = working.outcome().to_vec();
            outcome.shuffle(&mut rng);
            let permuted = working.with_outcome(outcome).ok()?;
            let fit = fitter(&permuted).ok()?;
            Some(fit.coefficients.iter().map(|c| c.beta.abs()).collect())
        })
        .collect();

    let n_failures = replicates.iter().filter(|r| r.is_none()).count();
    let n_success = n_perm - n_failures;
    if n_success == 0 {
        return Err(Error::Estimation("every permutation refit failed".into()));
    }

    let mut extreme = vec![0usize; observed.len()];
    for betas in replicates.iter().flatten() {
        for (j, b) in betas.iter().enumerate() {
            if *b >= observed[j] {
                extreme[j] += 1;
            }
        }
    }
    let p_values = reference
        .coefficients
        .iter()
        .zip(&extreme)
        .map(|(c, &e)| (c.name.clone(), (1.0 + e as f64) / (1.0 + n_success as f64)))
        .collect();

    Ok(PermutationResult { p_values, n_permutations: n_perm, n_failures, subsample_used, reference })
}
