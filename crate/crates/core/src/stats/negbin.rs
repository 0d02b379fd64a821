//! Negative binomial (NB2) maximum likelihood, pooled and with group fixed
//! effects via the Hausman-Hall-Griliches conditional likelihood.
//!
//! NB2 parameterization: mean mu = exp(x'beta), variance mu + alpha * mu^2;
//! alpha = 0 recovers Poisson, and the boundary LR test of alpha = 0 uses the
//! half-chi-square(1) correction.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

use super::{
    chi2_sf, collinear_columns, normal_two_sided_p, Coefficient, DesignMatrix, FitResult,
    ModelKind, OverallStat,
};

const LN_ALPHA_MIN: f64 = -18.420680743952367; // alpha = 1e-8
const LN_ALPHA_MAX: f64 = 9.210340371976184; // alpha = 1e4

fn check_counts(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
        return Err(Error::Argument("count outcome must be non-negative integers".into()));
    }
    Ok(())
}

fn poisson_ll(y: &[f64], eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| yi * e - e.exp() - ln_gamma(yi + 1.0))
        .sum()
}

/// NB2 log-likelihood at given means and overdispersion.
pub fn negbin_log_likelihood(y: &[f64], mu: &[f64], alpha: f64) -> f64 {
    let r = 1.0 / alpha;
    y.iter()
        .zip(mu)
        .map(|(&yi, &m)| {
            ln_gamma(yi + r) - ln_gamma(r) - ln_gamma(yi + 1.0) + r * (r / (r + m)).ln()
                + yi * (m / (r + m)).ln()
        })
        .sum()
}

/// Poisson IRLS used for starting values and the alpha = 0 reference.
fn poisson_fit(x: &DMatrix<f64>, y: &[f64], names: &[&str]) -> Result<(DVector<f64>, f64)> {
    let n = x.nrows();
    let p = x.ncols();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut beta = DVector::zeros(p);
    // start the intercept (if any) near ln(mean)
    for j in 0..p {
        let col_is_one = (0..n).all(|i| x[(i, j)] == 1.0);
        if col_is_one {
            beta[j] = (mean_y.max(1e-4)).ln();
            break;
        }
    }
    let mut eta = x * &beta;
    let mut ll = poisson_ll(y, &eta);
    for _ in 0..100 {
        let mut xtwx = DMatrix::zeros(p, p);
        let mut xtwz = DVector::zeros(p);
        for i in 0..n {
            let mu = eta[i].exp().clamp(1e-10, 1e10);
            let z = eta[i] + (y[i] - mu) / mu;
            for a in 0..p {
                let xa = x[(i, a)];
                xtwz[a] += mu * xa * z;
                for b in a..p {
                    xtwx[(a, b)] += mu * xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let chol = xtwx.cholesky().ok_or_else(|| {
            let offenders = collinear_columns(x, names);
            Error::Estimation(format!(
                "design is rank deficient; offending columns: [{}]",
                offenders.join(", ")
            ))
        })?;
        let proposal = chol.solve(&xtwz);
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..30 {
            let candidate = &beta + (&proposal - &beta) * step;
            let eta_c = x * &candidate;
            let ll_c = poisson_ll(y, &eta_c);
            if ll_c.is_finite() && ll_c >= ll - 1e-14 {
                let done = (ll_c - ll).abs() < 1e-12;
                beta = candidate;
                eta = eta_c;
                ll = ll_c;
                advanced = true;
                if done {
                    return Ok((beta, ll));
                }
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    Ok((beta, ll))
}

/// dLL/d(ln alpha) for NB2 at fixed means.
fn alpha_score(y: &[f64], mu: &[f64], ln_alpha: f64) -> f64 {
    let r = (-ln_alpha).exp();
    let dll_dr: f64 = y
        .iter()
        .zip(mu)
        .map(|(&yi, &m)| {
            digamma(yi + r) - digamma(r) + (r / (r + m)).ln() + 1.0 - (yi + r) / (r + m)
        })
        .sum();
    -r * dll_dr
}

/// Pooled NB2 maximum likelihood.
pub fn negbin_fit(design: &DesignMatrix) -> Result<FitResult> {
    negbin_fit_inner(design, true)
}

fn negbin_fit_inner(design: &DesignMatrix, compute_null: bool) -> Result<FitResult> {
    let n = design.n_rows();
    let p = design.n_cols();
    if p == 0 {
        return Err(Error::Argument("no regressors".into()));
    }
    check_counts(design.outcome())?;
    if n <= p {
        return Err(Error::Estimation(format!("{n} rows cannot identify {p} coefficients")));
    }
    let x = design.dense();
    let y = design.outcome();
    let names = design.names();

    let (mut beta, ll_poisson) = poisson_fit(&x, y, &names)?;
    let mut eta = &x * &beta;

    // method-of-moments start for alpha
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let mu = eta[i].exp();
        num += (y[i] - mu).powi(2) - mu;
        den += mu * mu;
    }
    let mut ln_alpha = (num / den).max(1e-6).ln().clamp(LN_ALPHA_MIN, LN_ALPHA_MAX);

    let ll_at = |eta: &DVector<f64>, ln_a: f64| -> f64 {
        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        negbin_log_likelihood(y, &mu, ln_a.exp())
    };

    let mut ll = ll_at(&eta, ln_alpha);
    let mut converged = false;
    let max_outer = 200;
    for _ in 0..max_outer {
        let ll_start = ll;

        // beta step: IRLS with NB2 weights mu / (1 + alpha mu)
        let alpha = ln_alpha.exp();
        for _ in 0..50 {
            let ll_before = ll;
            let mut xtwx = DMatrix::zeros(p, p);
            let mut xtwz = DVector::zeros(p);
            for i in 0..n {
                let mu = eta[i].exp().clamp(1e-10, 1e10);
                let w = mu / (1.0 + alpha * mu);
                let z = eta[i] + (y[i] - mu) / mu;
                for a in 0..p {
                    let xa = x[(i, a)];
                    xtwz[a] += w * xa * z;
                    for b in a..p {
                        xtwx[(a, b)] += w * xa * x[(i, b)];
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    xtwx[(a, b)] = xtwx[(b, a)];
                }
            }
            let chol = xtwx.cholesky().ok_or_else(|| {
                let offenders = collinear_columns(&x, &names);
                Error::Estimation(format!(
                    "design is rank deficient; offending columns: [{}]",
                    offenders.join(", ")
                ))
            })?;
            let proposal = chol.solve(&xtwz);
            let mut step = 1.0;
            let mut advanced = false;
            for _ in 0..30 {
                let candidate = &beta + (&proposal - &beta) * step;
                let eta_c = &x * &candidate;
                let ll_c = ll_at(&eta_c, ln_alpha);
                if ll_c.is_finite() && ll_c >= ll - 1e-14 {
                    beta = candidate;
                    eta = eta_c;
                    ll = ll_c;
                    advanced = true;
                    break;
                }
                step *= 0.5;
            }
            if !advanced || (ll - ll_before).abs() < 1e-12 {
                break;
            }
        }

        // alpha step: safeguarded Newton on ln alpha
        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        for _ in 0..50 {
            let g = alpha_score(y, &mu, ln_alpha);
            if g.abs() < 1e-10 {
                break;
            }
            let h = 1e-5;
            let g2 = (alpha_score(y, &mu, ln_alpha + h) - alpha_score(y, &mu, ln_alpha - h)) / (2.0 * h);
            let mut delta = if g2 < -1e-12 { -g / g2 } else { g.signum() * 0.5 };
            delta = delta.clamp(-2.0, 2.0);
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let candidate = (ln_alpha + delta * step).clamp(LN_ALPHA_MIN, LN_ALPHA_MAX);
                if candidate == ln_alpha {
                    break;
                }
                let ll_c = negbin_log_likelihood(y, &mu, candidate.exp());
                if ll_c >= ll - 1e-14 {
                    ln_alpha = candidate;
                    ll = ll_c;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }

        if (ll - ll_start).abs() < 1e-11 {
            converged = true;
            break;
        }
    }

    // scaled gradient check
    let alpha = ln_alpha.exp();
    let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let mut grad = vec![0.0; p + 1];
    for i in 0..n {
        let common = (y[i] - mu[i]) / (1.0 + alpha * mu[i]);
        for (j, g) in grad.iter_mut().take(p).enumerate() {
            *g += common * x[(i, j)];
        }
    }
    grad[p] = alpha_score(y, &mu, ln_alpha);
    let at_boundary = ln_alpha <= LN_ALPHA_MIN + 1e-9;
    let grad_norm = grad
        .iter()
        .take(if at_boundary { p } else { p + 1 })
        .map(|g| g.abs())
        .fold(0.0f64, f64::max)
        / n as f64;
    if !converged && grad_norm > 1e-6 {
        return Err(Error::Estimation(format!(
            "negative binomial fit did not converge after {max_outer} iterations; scaled gradient norm {grad_norm:.3e}"
        )));
    }

    // covariance from the numeric Hessian over (beta, ln alpha)
    let full_grad = |theta: &[f64]| -> Vec<f64> {
        let b = DVector::from_column_slice(&theta[..p]);
        let la = theta[p];
        let a = la.exp();
        let eta = &x * &b;
        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let mut g = vec![0.0; p + 1];
        for i in 0..n {
            let common = (y[i] - mu[i]) / (1.0 + a * mu[i]);
            for (j, gj) in g.iter_mut().take(p).enumerate() {
                *gj += common * x[(i, j)];
            }
        }
        g[p] = alpha_score(y, &mu, la);
        g
    };
    let mut theta: Vec<f64> = beta.iter().copied().collect();
    theta.push(ln_alpha);
    let hess = numeric_hessian(&full_grad, &theta);
    let cov_full = invert_negative_hessian(&hess)?;

    let mut coefficients = Vec::with_capacity(p);
    for j in 0..p {
        let se = cov_full[(j, j)].max(0.0).sqrt();
        let z = if se > 0.0 { beta[j] / se } else { f64::INFINITY };
        coefficients.push(Coefficient {
            name: design.columns()[j].name.clone(),
            term: design.columns()[j].term.clone(),
            beta: beta[j],
            se,
            p: normal_two_sided_p(z),
        });
    }

    // boundary-corrected LR test of alpha = 0 (Poisson)
    let lr = (2.0 * (ll - ll_poisson)).max(0.0);
    let alpha_p = 0.5 * chi2_sf(lr, 1.0);

    let (ll0, mcfadden, mcfadden_adj, overall) = if compute_null && design.has_constant() && p > 1 {
        let null_design = DesignMatrix::new(
            design.columns().iter().filter(|c| c.term == super::Term::Constant).cloned().collect(),
            design.outcome().to_vec(),
            None,
        )?;
        let null = negbin_fit_inner(&null_design, false)?;
        let ll0 = null.log_likelihood.expect("null fit has LL");
        let k = (p + 1) as f64; // slopes + alpha
        let stat = 2.0 * (ll - ll0);
        let df = (p - 1) as f64;
        (
            Some(ll0),
            Some(1.0 - ll / ll0),
            Some(1.0 - (ll - k) / ll0),
            Some(OverallStat {
                name: "LR chi2".into(),
                value: stat,
                df: (df, 0.0),
                p: chi2_sf(stat, df),
            }),
        )
    } else {
        (None, None, None, None)
    };

    let cov: Vec<f64> =
        (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| cov_full[(i, j)]).collect();

    Ok(FitResult {
        model: ModelKind::NegBin,
        coefficients,
        n_used: n,
        n_groups: None,
        dropped_groups: 0,
        dropped_rows: 0,
        dropped_columns: Vec::new(),
        r_squared: None,
        adj_r_squared: None,
        log_likelihood: Some(ll),
        null_log_likelihood: ll0,
        mcfadden_r2: mcfadden,
        mcfadden_adj_r2: mcfadden_adj,
        alpha: Some(alpha),
        alpha_lr_stat: Some(lr),
        alpha_p: Some(alpha_p),
        overall,
        group_effects: None,
        intercept_adjust: 0.0,
        column_means: design.column_means(),
        cov,
    })
}

fn numeric_hessian(grad: &dyn Fn(&[f64]) -> Vec<f64>, theta: &[f64]) -> DMatrix<f64> {
    let k = theta.len();
    let mut h = DMatrix::zeros(k, k);
    for i in 0..k {
        let step = 1e-5 * (1.0 + theta[i].abs());
        let mut plus = theta.to_vec();
        plus[i] += step;
        let mut minus = theta.to_vec();
        minus[i] -= step;
        let gp = grad(&plus);
        let gm = grad(&minus);
        for j in 0..k {
            h[(j, i)] = (gp[j] - gm[j]) / (2.0 * step);
        }
    }
    // symmetrize
    let ht = h.transpose();
    (h + ht) * 0.5
}

fn invert_negative_hessian(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let neg = -h;
    neg.clone().cholesky().map(|c| c.inverse()).or_else(|| neg.try_inverse()).ok_or_else(|| {
        Error::Estimation("observed information matrix is singular".into())
    })
}

// ---------------------------------------------------------------------------
// Fixed-effects negative binomial (conditional likelihood)
// ---------------------------------------------------------------------------

/// Conditional log-likelihood of the fixed-effects negative binomial model,
/// summed over groups. `lambda` holds exp(x'beta) per row; group row indices
/// index into it.
pub(crate) fn fenb_conditional_ll(
    lambda: &[f64],
    y: &[f64],
    groups: &[Vec<usize>],
) -> f64 {
    let mut ll = 0.0;
    for rows in groups {
        let big_l: f64 = rows.iter().map(|&r| lambda[r]).sum();
        let big_y: f64 = rows.iter().map(|&r| y[r]).sum();
        ll += ln_gamma(big_l) + ln_gamma(big_y + 1.0) - ln_gamma(big_l + big_y);
        for &r in rows {
            ll += ln_gamma(lambda[r] + y[r]) - ln_gamma(lambda[r]) - ln_gamma(y[r] + 1.0);
        }
    }
    ll
}

/// Fixed-effects negative binomial via the conditional likelihood, which
/// absorbs the group heterogeneity; singleton and all-zero groups contribute
/// a constant and are dropped.
pub fn fe_negbin_fit(design: &DesignMatrix) -> Result<FitResult> {
    fe_negbin_fit_inner(design, true)
}

fn fe_negbin_fit_inner(design: &DesignMatrix, compute_null: bool) -> Result<FitResult> {
    let group_labels = design
        .groups()
        .ok_or_else(|| Error::Argument("fixed-effects NB needs group labels".into()))?;
    check_counts(design.outcome())?;
    let n = design.n_rows();
    let p = design.n_cols();
    if p == 0 {
        return Err(Error::Argument("no regressors".into()));
    }

    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in group_labels.iter().enumerate() {
        members.entry(g.as_str()).or_default().push(i);
    }
    let y_all = design.outcome();
    let kept: Vec<Vec<usize>> = members
        .values()
        .filter(|rows| rows.len() > 1 && rows.iter().any(|&r| y_all[r] > 0.0))
        .cloned()
        .collect();
    let dropped_groups = members.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::Estimation(
            "every group is a singleton or all-zero; conditional likelihood is constant".into(),
        ));
    }
    let n_kept: usize = kept.iter().map(Vec::len).sum();

    let x = design.dense();
    let names = design.names();

    let ll_of = |beta: &DVector<f64>| -> f64 {
        let eta = &x * beta;
        let lambda: Vec<f64> = eta.iter().map(|e| e.exp().clamp(1e-12, 1e12)).collect();
        fenb_conditional_ll(&lambda, y_all, &kept)
    };
    let grad_of = |beta: &[f64]| -> Vec<f64> {
        let b = DVector::from_column_slice(beta);
        let eta = &x * &b;
        let lambda: Vec<f64> = eta.iter().map(|e| e.exp().clamp(1e-12, 1e12)).collect();
        let mut g = vec![0.0; p];
        for rows in &kept {
            let big_l: f64 = rows.iter().map(|&r| lambda[r]).sum();
            let big_y: f64 = rows.iter().map(|&r| y_all[r]).sum();
            let outer = digamma(big_l) - digamma(big_l + big_y);
            for &r in rows {
                let inner = digamma(lambda[r] + y_all[r]) - digamma(lambda[r]);
                let scale = (outer + inner) * lambda[r];
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj += scale * x[(r, j)];
                }
            }
        }
        g
    };

    // start at the pooled Poisson solution over kept rows
    let kept_rows: Vec<usize> = kept.iter().flatten().copied().collect();
    let x_kept = DMatrix::from_fn(kept_rows.len(), p, |i, j| x[(kept_rows[i], j)]);
    let y_kept: Vec<f64> = kept_rows.iter().map(|&r| y_all[r]).collect();
    let (mut beta, _) = poisson_fit(&x_kept, &y_kept, &names)?;

    let mut ll = ll_of(&beta);
    let max_iter = 200;
    let mut converged = false;
    for _ in 0..max_iter {
        let g = grad_of(beta.as_slice());
        let gnorm = g.iter().map(|v| v.abs()).fold(0.0f64, f64::max) / n_kept as f64;
        if gnorm < 1e-9 {
            converged = true;
            break;
        }
        let h = numeric_hessian(&grad_of, beta.as_slice());
        let gvec = DVector::from_vec(g);
        let direction = match (-&h).cholesky() {
            Some(c) => c.solve(&gvec),
            // Hessian not negative definite here; take a scaled ascent step
            None => &gvec / (1.0 + gvec.norm()),
        };
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..40 {
            let candidate = &beta + &direction * step;
            let ll_c = ll_of(&candidate);
            if ll_c.is_finite() && ll_c > ll - 1e-14 {
                let done = (ll_c - ll).abs() < 1e-12;
                beta = candidate;
                ll = ll_c;
                advanced = true;
                if done {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            // cannot improve further; accept if the gradient is small enough
            converged = gnorm < 1e-6;
            break;
        }
        if converged {
            break;
        }
    }
    let final_grad = grad_of(beta.as_slice());
    let grad_norm =
        final_grad.iter().map(|v| v.abs()).fold(0.0f64, f64::max) / n_kept as f64;
    if !converged && grad_norm > 1e-6 {
        return Err(Error::Estimation(format!(
            "fixed-effects NB did not converge after {max_iter} iterations; scaled gradient norm {grad_norm:.3e}"
        )));
    }

    let hess = numeric_hessian(&grad_of, beta.as_slice());
    let cov_m = invert_negative_hessian(&hess)?;

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

    let (ll0, mcfadden, mcfadden_adj, overall) = if compute_null && design.has_constant() && p > 1 {
        let null_design = DesignMatrix::new(
            design.columns().iter().filter(|c| c.term == super::Term::Constant).cloned().collect(),
            design.outcome().to_vec(),
            design.groups().map(<[String]>::to_vec),
        )?;
        let null = fe_negbin_fit_inner(&null_design, false)?;
        let ll0 = null.log_likelihood.expect("null fit has LL");
        let k = p as f64;
        let stat = 2.0 * (ll - ll0);
        let df = (p - 1) as f64;
        (
            Some(ll0),
            Some(1.0 - ll / ll0),
            Some(1.0 - (ll - k) / ll0),
            Some(OverallStat {
                name: "LR chi2".into(),
                value: stat,
                df: (df, 0.0),
                p: chi2_sf(stat, df),
            }),
        )
    } else {
        (None, None, None, None)
    };

    // column means over the estimation sample
    let column_means: Vec<f64> = (0..p)
        .map(|j| kept_rows.iter().map(|&r| x[(r, j)]).sum::<f64>() / n_kept as f64)
        .collect();
    let cov: Vec<f64> =
        (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| cov_m[(i, j)]).collect();

    Ok(FitResult {
        model: ModelKind::FeNegBin,
        coefficients,
        n_used: n_kept,
        n_groups: Some(kept.len()),
        dropped_groups,
        dropped_rows: n - n_kept,
        dropped_columns: Vec::new(),
        r_squared: None,
        adj_r_squared: None,
        log_likelihood: Some(ll),
        null_log_likelihood: ll0,
        mcfadden_r2: mcfadden,
        mcfadden_adj_r2: mcfadden_adj,
        alpha: None,
        alpha_lr_stat: None,
        alpha_p: None,
        overall,
        group_effects: None,
        intercept_adjust: 0.0,
        column_means,
        cov,
    })
}
