//! Logistic regression via iteratively reweighted least squares, and the
//! matched observed/rewired closure sample it is estimated on.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::triads::TriadPool;

use super::{
    chi2_sf, collinear_columns, normal_two_sided_p, Coefficient, DesignBuilder, DesignMatrix,
    FitResult, ModelKind, OverallStat,
};

pub fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Closure probability from raw coefficients and a matching regressor vector.
pub fn logit_predict(beta: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(beta.len(), x.len());
    logistic(beta.iter().zip(x).map(|(b, v)| b * v).sum())
}

fn log_likelihood(y: &[f64], eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| {
            // ln p for y=1, ln(1-p) for y=0, written to stay finite for large |eta|
            if yi > 0.5 {
                -ln_1p_exp(-e)
            } else {
                -ln_1p_exp(e)
            }
        })
        .sum()
}

fn ln_1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Maximum-likelihood logit with Wald z-tests and McFadden pseudo R-squared.
pub fn logit_fit(design: &DesignMatrix) -> Result<FitResult> {
    let n = design.n_rows();
    let p = design.n_cols();
    if p == 0 {
        return Err(Error::Argument("no regressors".into()));
    }
    let y = design.outcome();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Argument("logit outcome must be binary 0/1".into()));
    }
    if n <= p {
        return Err(Error::Estimation(format!("{n} rows cannot identify {p} coefficients")));
    }

    let x = design.dense();
    let names = design.names();
    let mut beta = DVector::zeros(p);
    let mut eta = &x * &beta;
    let mut ll = log_likelihood(y, &eta);
    let mut info: Option<DMatrix<f64>> = None;

    let max_iter = 200;
    let mut converged = false;
    for _ in 0..max_iter {
        let mu: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
        let w: Vec<f64> = mu.iter().map(|&m| (m * (1.0 - m)).max(1e-10)).collect();
        // X' W X and X' W z with z the working response
        let mut xtwx = DMatrix::zeros(p, p);
        let mut xtwz = DVector::zeros(p);
        for i in 0..n {
            let zi = eta[i] + (y[i] - mu[i]) / w[i];
            for a in 0..p {
                let xa = x[(i, a)];
                xtwz[a] += w[i] * xa * zi;
                for b in a..p {
                    xtwx[(a, b)] += w[i] * xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let chol = xtwx.clone().cholesky().ok_or_else(|| {
            let offenders = collinear_columns(&x, &names);
            Error::Estimation(format!(
                "weighted design is rank deficient; offending columns: [{}]",
                offenders.join(", ")
            ))
        })?;
        let proposal = chol.solve(&xtwz);

        // step-halving line search on the log-likelihood
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &beta + (&proposal - &beta) * step;
            let eta_c = &x * &candidate;
            let ll_c = log_likelihood(y, &eta_c);
            if ll_c >= ll - 1e-14 {
                let delta = (&candidate - &beta).amax();
                beta = candidate;
                eta = eta_c;
                let improved = ll_c - ll;
                ll = ll_c;
                info = Some(xtwx.clone());
                accepted = true;
                if delta < 1e-10 || improved.abs() < 1e-12 {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = accepted && converged;
            break;
        }
        if beta.amax() > 1e3 {
            return Err(Error::Estimation(
                "perfect separation detected: coefficients diverging".into(),
            ));
        }
    }
    if !converged {
        // one more separation check before reporting non-convergence
        let separated = y
            .iter()
            .zip(eta.iter())
            .all(|(&yi, &e)| (yi > 0.5 && e > 0.0) || (yi < 0.5 && e < 0.0));
        if separated && eta.amax() > 25.0 {
            return Err(Error::Estimation("perfect separation detected".into()));
        }
        return Err(Error::Estimation("logit did not converge in 200 iterations".into()));
    }

    let info = info.expect("at least one accepted step");
    let cov_m = info
        .cholesky()
        .ok_or_else(|| Error::Estimation("information matrix not invertible".into()))?
        .inverse();

    let mut coefficients = Vec::with_capacity(p);
    for j in 0..p {
        let se = cov_m[(j, j)].max(0.0).sqrt();
        let z = if se > 0.0 { beta[j] / se } else { f64::INFINITY };
        coefficients.push(Coefficient {
            name: design.columns()[j].name.clone(),
            term: design.columns()[j].term.clone(),
            beta: beta[j],
            se,
            p: normal_two_sided_p(z),
        });
    }

    // null model: intercept only
    let p_bar = y.iter().sum::<f64>() / n as f64;
    let ll0 = if p_bar <= 0.0 || p_bar >= 1.0 {
        0.0
    } else {
        n as f64 * (p_bar * p_bar.ln() + (1.0 - p_bar) * (1.0 - p_bar).ln())
    };
    let mcfadden = if ll0 != 0.0 { 1.0 - ll / ll0 } else { f64::NAN };
    let mcfadden_adj = if ll0 != 0.0 { 1.0 - (ll - p as f64) / ll0 } else { f64::NAN };

    let overall = if design.has_constant() && p > 1 {
        let stat = 2.0 * (ll - ll0);
        let df = (p - 1) as f64;
        Some(OverallStat { name: "LR chi2".into(), value: stat, df: (df, 0.0), p: chi2_sf(stat, df) })
    } else {
        None
    };

    let cov: Vec<f64> =
        (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| cov_m[(i, j)]).collect();

    Ok(FitResult {
        model: ModelKind::Logit,
        coefficients,
        n_used: n,
        n_groups: None,
        dropped_groups: 0,
        dropped_rows: 0,
        dropped_columns: Vec::new(),
        r_squared: None,
        adj_r_squared: None,
        log_likelihood: Some(ll),
        null_log_likelihood: Some(ll0),
        mcfadden_r2: Some(mcfadden),
        mcfadden_adj_r2: Some(mcfadden_adj),
        alpha: None,
        alpha_lr_stat: None,
        alpha_p: None,
        overall,
        group_effects: None,
        intercept_adjust: 0.0,
        column_means: design.column_means(),
        cov,
    })
}

/// Matched closure design: every observed triad plus an equal-size uniform
/// sample (without replacement) of rewired triads.
///
/// Outcome is the closure indicator; regressors are the observed-origin flag,
/// the minimal triplet legs weight, their interaction, and a constant.
pub fn matched_closure_sample(
    observed: &TriadPool,
    rewired: &TriadPool,
    seed: u64,
) -> Result<DesignMatrix> {
    let n_obs = observed.len();
    if n_obs == 0 {
        return Err(Error::Argument("observed triad pool is empty".into()));
    }
    if rewired.len() < n_obs {
        return Err(Error::Argument(format!(
            "rewired pool ({}) smaller than observed pool ({n_obs})",
            rewired.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index_sample(&mut rng, rewired.len(), n_obs).into_vec();
    picked.sort_unstable();

    let total = 2 * n_obs;
    let mut outcome = Vec::with_capacity(total);
    let mut flag = Vec::with_capacity(total);
    let mut weight = Vec::with_capacity(total);
    for o in &observed.observations {
        outcome.push(f64::from(o.is_closed()));
        flag.push(1.0);
        weight.push(o.min_legs_weight() as f64);
    }
    for &i in &picked {
        let o = &rewired.observations[i];
        outcome.push(f64::from(o.is_closed()));
        flag.push(0.0);
        weight.push(o.min_legs_weight() as f64);
    }

    DesignBuilder::new(total)
        .constant()
        .raw("observed", flag)
        .raw("min_legs_weight", weight)
        .interaction("observed_x_weight", "observed", "min_legs_weight")
        .build(outcome, None)
}
