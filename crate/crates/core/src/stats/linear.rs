//! Least-squares estimators: pooled OLS, within (fixed-effects) OLS, and the
//! diagnostics built on them (VIF, Pearson correlations, power sequences).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::{
    collinear_columns, f_sf, t_two_sided_p, Coefficient, Column, DesignMatrix, FitResult,
    ModelKind, OverallStat, Term,
};

struct LsCore {
    beta: DVector<f64>,
    xtx_inv: DMatrix<f64>,
    rss: f64,
}

/// Solve the normal equations; error names the offending columns on rank loss.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[&str]) -> Result<LsCore> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let chol = xtx.clone().cholesky().ok_or_else(|| {
        let offenders = collinear_columns(x, names);
        Error::Estimation(format!(
            "design is rank deficient; offending columns: [{}]",
            offenders.join(", ")
        ))
    })?;
    let beta = chol.solve(&xty);
    let xtx_inv = chol.inverse();
    let rss = (y - x * &beta).norm_squared();
    Ok(LsCore { beta, xtx_inv, rss })
}

/// Ordinary least squares with classical standard errors and t-test p-values.
pub fn ols_fit(design: &DesignMatrix) -> Result<FitResult> {
    let n = design.n_rows();
    let p = design.n_cols();
    if p == 0 {
        return Err(Error::Argument("no regressors".into()));
    }
    if n <= p {
        return Err(Error::Estimation(format!("{n} rows cannot identify {p} coefficients")));
    }
    let x = design.dense();
    let y = DVector::from_column_slice(design.outcome());
    let names = design.names();
    let core = least_squares(&x, &y, &names)?;

    let df = (n - p) as f64;
    let sigma2 = core.rss / df;
    let has_const = design.has_constant();
    let tss = if has_const {
        let mean = y.mean();
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
    } else {
        y.norm_squared()
    };
    let r2 = if tss > 0.0 { 1.0 - core.rss / tss } else { f64::NAN };
    let adj = if tss > 0.0 {
        1.0 - (1.0 - r2) * (n as f64 - 1.0) / df
    } else {
        f64::NAN
    };

    let mut coefficients = Vec::with_capacity(p);
    for j in 0..p {
        let se = (sigma2 * core.xtx_inv[(j, j)]).max(0.0).sqrt();
        let t = if se > 0.0 { core.beta[j] / se } else { f64::INFINITY };
        coefficients.push(Coefficient {
            name: design.columns()[j].name.clone(),
            term: design.columns()[j].term.clone(),
            beta: core.beta[j],
            se,
            p: t_two_sided_p(t, df),
        });
    }

    let overall = if has_const && p > 1 && tss > 0.0 {
        let q = (p - 1) as f64;
        let f = ((tss - core.rss) / q) / (core.rss / df);
        Some(OverallStat { name: "F".into(), value: f, df: (q, df), p: f_sf(f, q, df) })
    } else {
        None
    };

    let cov: Vec<f64> = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| sigma2 * core.xtx_inv[(i, j)])
        .collect();

    Ok(FitResult {
        model: ModelKind::Ols,
        coefficients,
        n_used: n,
        n_groups: None,
        dropped_groups: 0,
        dropped_rows: 0,
        dropped_columns: Vec::new(),
        r_squared: Some(r2),
        adj_r_squared: Some(adj),
        log_likelihood: None,
        null_log_likelihood: None,
        mcfadden_r2: None,
        mcfadden_adj_r2: None,
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

/// Within-transformation OLS with group fixed effects.
///
/// Singleton groups are perfectly absorbed by their own effect and are
/// dropped (and counted). The constant and any group-constant regressor are
/// absorbed by demeaning and dropped with a warning entry. Group effects are
/// recovered as gamma_l = mean(y_l) - mean(x_l)'beta.
pub fn fe_ols_fit(design: &DesignMatrix) -> Result<FitResult> {
    let groups = design
        .groups()
        .ok_or_else(|| Error::Argument("fixed-effects OLS needs group labels".into()))?;
    let n = design.n_rows();

    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.as_str()).or_default().push(i);
    }
    let kept_groups: Vec<(&str, &Vec<usize>)> =
        members.iter().filter(|(_, rows)| rows.len() > 1).map(|(g, r)| (*g, r)).collect();
    let dropped_groups = members.len() - kept_groups.len();
    let kept_rows: Vec<usize> = kept_groups.iter().flat_map(|(_, rows)| rows.iter().copied()).collect();
    if kept_groups.is_empty() {
        return Err(Error::Estimation(
            "all groups are singletons; no within variation to estimate slopes".into(),
        ));
    }
    let n_kept = kept_rows.len();
    let g_kept = kept_groups.len();

    // Demean outcome and non-constant columns within groups.
    let candidate_cols: Vec<&Column> =
        design.columns().iter().filter(|c| c.term != Term::Constant).collect();
    let mut dropped_columns: Vec<String> = design
        .columns()
        .iter()
        .filter(|c| c.term == Term::Constant)
        .map(|c| c.name.clone())
        .collect();

    let demean = |values: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(n_kept);
        for (_, rows) in &kept_groups {
            let mean = rows.iter().map(|&r| values[r]).sum::<f64>() / rows.len() as f64;
            out.extend(rows.iter().map(|&r| values[r] - mean));
        }
        out
    };

    let y_dm = demean(design.outcome());
    let mut kept_cols: Vec<&Column> = Vec::new();
    let mut x_dm: Vec<Vec<f64>> = Vec::new();
    for c in candidate_cols {
        let dm = demean(&c.values);
        let scale = c.values.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
        if dm.iter().map(|v| v.abs()).fold(0.0f64, f64::max) <= 1e-12 * scale {
            // group-constant: absorbed by the effects
            dropped_columns.push(c.name.clone());
        } else {
            kept_cols.push(c);
            x_dm.push(dm);
        }
    }
    let p = kept_cols.len();
    if p == 0 {
        return Err(Error::Estimation(
            "every regressor is group-constant; nothing to estimate".into(),
        ));
    }
    let df = n_kept as f64 - g_kept as f64 - p as f64;
    if df <= 0.0 {
        return Err(Error::Estimation("not enough within degrees of freedom".into()));
    }

    let x = DMatrix::from_fn(n_kept, p, |i, j| x_dm[j][i]);
    let y = DVector::from_vec(y_dm);
    let names: Vec<&str> = kept_cols.iter().map(|c| c.name.as_str()).collect();
    let core = least_squares(&x, &y, &names)?;

    let sigma2 = core.rss / df;
    let tss = y.norm_squared(); // demeaned outcome already has zero group means
    let r2 = if tss > 0.0 { 1.0 - core.rss / tss } else { f64::NAN };
    let adj = if tss > 0.0 { 1.0 - (1.0 - r2) * (n_kept as f64 - g_kept as f64) / df } else { f64::NAN };

    let mut coefficients = Vec::with_capacity(p);
    for j in 0..p {
        let se = (sigma2 * core.xtx_inv[(j, j)]).max(0.0).sqrt();
        let t = if se > 0.0 { core.beta[j] / se } else { f64::INFINITY };
        coefficients.push(Coefficient {
            name: kept_cols[j].name.clone(),
            term: kept_cols[j].term.clone(),
            beta: core.beta[j],
            se,
            p: t_two_sided_p(t, df),
        });
    }

    // Group effects on the original scale.
    let mut group_effects = Vec::with_capacity(g_kept);
    for (label, rows) in &kept_groups {
        let y_mean = rows.iter().map(|&r| design.outcome()[r]).sum::<f64>() / rows.len() as f64;
        let xb_mean = rows
            .iter()
            .map(|&r| {
                kept_cols
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c.values[r] * core.beta[j])
                    .sum::<f64>()
            })
            .sum::<f64>()
            / rows.len() as f64;
        group_effects.push((label.to_string(), y_mean - xb_mean));
    }
    let mean_gamma = group_effects.iter().map(|(_, g)| g).sum::<f64>() / g_kept as f64;

    let overall = if tss > 0.0 {
        let q = p as f64;
        let f = ((tss - core.rss) / q) / (core.rss / df);
        Some(OverallStat { name: "F".into(), value: f, df: (q, df), p: f_sf(f, q, df) })
    } else {
        None
    };

    // Column means over the estimation sample (kept rows, kept columns).
    let column_means: Vec<f64> = kept_cols
        .iter()
        .map(|c| kept_rows.iter().map(|&r| c.values[r]).sum::<f64>() / n_kept as f64)
        .collect();

    let cov: Vec<f64> = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| sigma2 * core.xtx_inv[(i, j)])
        .collect();

    Ok(FitResult {
        model: ModelKind::FeOls,
        coefficients,
        n_used: n_kept,
        n_groups: Some(g_kept),
        dropped_groups,
        dropped_rows: n - n_kept,
        dropped_columns,
        r_squared: Some(r2),
        adj_r_squared: Some(adj),
        log_likelihood: None,
        null_log_likelihood: None,
        mcfadden_r2: None,
        mcfadden_adj_r2: None,
        alpha: None,
        alpha_lr_stat: None,
        alpha_p: None,
        overall,
        group_effects: Some(group_effects),
        intercept_adjust: mean_gamma,
        column_means,
        cov,
    })
}

/// Variance inflation factors from explicit auxiliary regressions.
pub fn vif(design: &DesignMatrix) -> Result<Vec<(String, f64)>> {
    let non_constant: Vec<usize> = design
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.term != Term::Constant)
        .map(|(i, _)| i)
        .collect();
    if non_constant.len() < 2 {
        return Err(Error::Argument("VIF needs at least two non-constant regressors".into()));
    }
    let mut out = Vec::with_capacity(non_constant.len());
    for &j in &non_constant {
        let target = design.columns()[j].values.clone();
        let others: Vec<Column> = design
            .columns()
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, c)| c.clone())
            .collect();
        let aux = DesignMatrix::new(others, target, None)?;
        let r2 = match ols_fit(&aux) {
            Ok(fit) => fit.r_squared.unwrap_or(f64::NAN),
            // perfect collinearity among the remaining columns
            Err(Error::Estimation(_)) => 1.0,
            Err(e) => return Err(e),
        };
        let v = if r2 >= 1.0 - 1e-12 { f64::INFINITY } else { 1.0 / (1.0 - r2) };
        out.push((design.columns()[j].name.clone(), v));
    }
    Ok(out)
}

/// Symmetric Pearson correlation matrix with unit diagonal.
#[derive(Debug, Clone)]
pub struct PearsonMatrix {
    pub names: Vec<String>,
    values: Vec<f64>,
    /// Columns with zero variance; their correlations are NaN.
    pub flagged: Vec<String>,
}

impl PearsonMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.names.len() + j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for i in 0..self.names.len() {
            out.push_str(&self.names[i]);
            for j in 0..self.names.len() {
                out.push_str(&format!(",{:.6}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

pub fn pearson_matrix(columns: &[(String, Vec<f64>)]) -> Result<PearsonMatrix> {
    let k = columns.len();
    if k == 0 {
        return Err(Error::Argument("no columns".into()));
    }
    let n = columns[0].1.len();
    if n < 2 {
        return Err(Error::Argument("Pearson correlation needs at least two rows".into()));
    }
    if columns.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::Argument("columns have unequal lengths".into()));
    }
    let means: Vec<f64> = columns.iter().map(|(_, v)| v.iter().sum::<f64>() / n as f64).collect();
    let sds: Vec<f64> = columns
        .iter()
        .zip(&means)
        .map(|((_, v), m)| (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()).sqrt())
        .collect();
    let mut flagged = Vec::new();
    for (i, sd) in sds.iter().enumerate() {
        if *sd == 0.0 {
            flagged.push(columns[i].0.clone());
        }
    }
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let r = if i == j {
                1.0
            } else if sds[i] == 0.0 || sds[j] == 0.0 {
                f64::NAN
            } else {
                let cov: f64 = columns[i]
                    .1
                    .iter()
                    .zip(&columns[j].1)
                    .map(|(a, b)| (a - means[i]) * (b - means[j]))
                    .sum();
                cov / (sds[i] * sds[j])
            };
            values[i * k + j] = r;
            values[j * k + i] = r;
        }
    }
    Ok(PearsonMatrix { names: columns.iter().map(|(n, _)| n.clone()).collect(), values, flagged })
}

/// One step of the power-sequence fit scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerStep {
    pub power: usize,
    pub r_squared: f64,
    /// R2(k) - R2(k-1), with R2(0) = 0 (constant-only model).
    pub delta: f64,
}

/// R-squared improvement per added polynomial power of `x`.
///
/// `x` is standardized internally for conditioning; R-squared is unaffected.
/// If the normal equations lose rank at some power the scan stops there and
/// the error names the power.
pub fn power_sequence_r2(x: &[f64], y: &[f64], max_power: usize) -> Result<Vec<PowerStep>> {
    if x.len() != y.len() {
        return Err(Error::Argument("x and y lengths differ".into()));
    }
    if max_power == 0 {
        return Err(Error::Argument("max_power must be >= 1".into()));
    }
    let n = x.len();
    if n <= max_power + 1 {
        return Err(Error::Argument(format!(
            "{n} rows cannot fit powers up to {max_power}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    if sd == 0.0 {
        return Err(Error::Argument("x has zero variance".into()));
    }
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();

    let mut steps = Vec::with_capacity(max_power);
    let mut prev_r2 = 0.0;
    for k in 1..=max_power {
        let mut builder = super::DesignBuilder::new(n).constant();
        for power in 1..=k {
            let values: Vec<f64> = z.iter().map(|v| v.powi(power as i32)).collect();
            builder = builder.raw(&format!("x{power}"), values);
        }
        let design = builder.build(y.to_vec(), None)?;
        let fit = ols_fit(&design).map_err(|e| {
            Error::Estimation(format!("numerical rank loss at power {k}: {e}"))
        })?;
        let r2 = fit.r_squared.unwrap_or(f64::NAN);
        steps.push(PowerStep { power: k, r_squared: r2, delta: r2 - prev_r2 });
        prev_r2 = r2;
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::DesignBuilder;
    use approx::assert_relative_eq;

    fn simple_design(x: Vec<f64>, y: Vec<f64>) -> DesignMatrix {
        DesignBuilder::new(x.len()).constant().raw("x", x).build(y, None).unwrap()
    }

    #[test]
    fn exact_line_recovered() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let fit = ols_fit(&simple_design(x, y)).unwrap();
        assert_relative_eq!(fit.beta("x").unwrap(), 2.5, epsilon = 1e-12);
        assert_relative_eq!(fit.beta("const").unwrap(), -1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn three_point_fit_matches_hand_solution() {
        // points (0,1), (1,3), (2,4): slope 1.5, intercept 7/6 by normal equations
        let fit = simple_design(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 4.0]);
        let fit = ols_fit(&fit).unwrap();
        assert_relative_eq!(fit.beta("x").unwrap(), 1.5, epsilon = 1e-12);
        assert_relative_eq!(fit.beta("const").unwrap(), 7.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_outcome_gives_zero_slope() {
        let fit = ols_fit(&simple_design(vec![1.0, 2.0, 3.0, 4.0], vec![5.0; 4])).unwrap();
        assert_relative_eq!(fit.beta("x").unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(fit.beta("const").unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_column_reported() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let design = DesignBuilder::new(4)
            .constant()
            .raw("x", x.clone())
            .raw("x_copy", x)
            .build(vec![1.0, 2.0, 3.0, 4.0], None)
            .unwrap();
        match ols_fit(&design) {
            Err(Error::Estimation(msg)) => assert!(msg.contains("x_copy"), "{msg}"),
            other => panic!("expected rank-deficiency error, got {other:?}"),
        }
    }

    fn dummy_encoded_oracle(design: &DesignMatrix) -> Vec<(String, f64)> {
        // expand group labels into dummies (reference = first label) plus
        // constant, fit pooled OLS, return the shared slopes
        let groups = design.groups().unwrap();
        let mut labels: Vec<&String> = groups.iter().collect();
        labels.sort();
        labels.dedup();
        // keep only groups with >= 2 rows to mirror the singleton drop
        let kept_rows: Vec<usize> = (0..design.n_rows())
            .filter(|&i| groups.iter().filter(|g| **g == groups[i]).count() > 1)
            .collect();
        let sub = design.subset(&kept_rows);
        let sub_groups = sub.groups().unwrap().to_vec();
        let mut kept_labels: Vec<&String> = sub_groups.iter().collect();
        kept_labels.sort();
        kept_labels.dedup();

        let mut builder = DesignBuilder::new(sub.n_rows());
        for label in kept_labels.iter() {
            let dummy: Vec<f64> =
                sub_groups.iter().map(|g| if g == *label { 1.0 } else { 0.0 }).collect();
            builder = builder.raw(&format!("g_{label}"), dummy);
        }
        let mut names = Vec::new();
        for c in sub.columns() {
            if c.term != Term::Constant {
                builder = builder.raw(&c.name, c.values.clone());
                names.push(c.name.clone());
            }
        }
        let dummy_design = builder.build(sub.outcome().to_vec(), None).unwrap();
        let fit = ols_fit(&dummy_design).unwrap();
        names.into_iter().map(|n| (n.clone(), fit.beta(&n).unwrap())).collect()
    }

    #[test]
    fn fe_ols_matches_dummy_encoding() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let g = rng.random_range(3..6);
            let mut xs = Vec::new();
            let mut x2 = Vec::new();
            let mut ys = Vec::new();
            let mut groups = Vec::new();
            for gi in 0..g {
                let size = rng.random_range(1..7);
                let effect = rng.random_range(-3.0..3.0);
                for _ in 0..size {
                    let x = rng.random_range(-2.0..2.0);
                    let z = rng.random_range(-1.0..1.0);
                    let y = effect + 1.7 * x - 0.8 * z + rng.random_range(-0.5..0.5);
                    xs.push(x);
                    x2.push(z);
                    ys.push(y);
                    groups.push(format!("g{gi}"));
                }
            }
            let design = DesignBuilder::new(ys.len())
                .raw("x", xs)
                .raw("z", x2)
                .build(ys, Some(groups))
                .unwrap();
            let Ok(fe) = fe_ols_fit(&design) else { continue };
            let oracle = dummy_encoded_oracle(&design);
            for (name, b) in oracle {
                let fe_b = fe.beta(&name).unwrap();
                assert_relative_eq!(fe_b, b, epsilon = 1e-8, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn fe_ols_two_groups_same_slope() {
        // identical within-slope 2.0 in both groups
        let design = DesignBuilder::new(6)
            .raw("x", vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0])
            .build(
                vec![0.0, 2.0, 4.0, 10.0, 12.0, 14.0],
                Some(vec!["a".into(), "a".into(), "a".into(), "b".into(), "b".into(), "b".into()]),
            )
            .unwrap();
        let fit = fe_ols_fit(&design).unwrap();
        assert_relative_eq!(fit.beta("x").unwrap(), 2.0, epsilon = 1e-12);
        let effects = fit.group_effects.as_ref().unwrap();
        assert_relative_eq!(effects[0].1, 0.0, epsilon = 1e-12);
        assert_relative_eq!(effects[1].1, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn fe_ols_drops_group_constant_regressor() {
        let design = DesignBuilder::new(6)
            .raw("x", vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0])
            .raw("fixed", vec![5.0, 5.0, 5.0, 9.0, 9.0, 9.0])
            .build(
                vec![0.0, 2.0, 4.0, 1.0, 3.0, 5.0],
                Some(vec!["a".into(), "a".into(), "a".into(), "b".into(), "b".into(), "b".into()]),
            )
            .unwrap();
        let fit = fe_ols_fit(&design).unwrap();
        assert!(fit.dropped_columns.contains(&"fixed".to_string()));
        assert!(fit.coefficient("fixed").is_none());
    }

    #[test]
    fn fe_ols_all_singletons_errors() {
        let design = DesignBuilder::new(3)
            .raw("x", vec![1.0, 2.0, 3.0])
            .build(vec![1.0, 2.0, 3.0], Some(vec!["a".into(), "b".into(), "c".into()]))
            .unwrap();
        assert!(fe_ols_fit(&design).is_err());
    }

    #[test]
    fn vif_orthogonal_is_one() {
        let design = DesignBuilder::new(4)
            .constant()
            .raw("a", vec![1.0, 1.0, -1.0, -1.0])
            .raw("b", vec![1.0, -1.0, 1.0, -1.0])
            .build(vec![0.0; 4], None)
            .unwrap();
        let v = vif(&design).unwrap();
        for (_, value) in v {
            assert_relative_eq!(value, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn vif_duplicate_column_diverges() {
        let design = DesignBuilder::new(5)
            .constant()
            .raw("a", vec![1.0, 2.0, 3.0, 4.0, 5.0])
            .raw("b", vec![1.0, 2.0, 3.0, 4.0, 5.0])
            .raw("c", vec![2.0, 1.0, 3.0, 1.0, 2.0])
            .build(vec![0.0; 5], None)
            .unwrap();
        let v = vif(&design).unwrap();
        let a = v.iter().find(|(n, _)| n == "a").unwrap().1;
        assert!(a.is_infinite());
    }

    #[test]
    fn vif_matches_auxiliary_identity() {
        let design = DesignBuilder::new(6)
            .constant()
            .raw("a", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5])
            .raw("b", vec![2.0, 1.9, 3.2, 4.9, 4.1, 6.0])
            .raw("c", vec![0.3, -1.0, 0.5, 2.0, -0.7, 1.1])
            .build(vec![0.0; 6], None)
            .unwrap();
        let v = vif(&design).unwrap();
        for (name, value) in v {
            // recompute 1/(1-R2) by hand
            let target = design.column(&name).unwrap().values.clone();
            let others: Vec<Column> = design
                .columns()
                .iter()
                .filter(|c| c.name != name)
                .cloned()
                .collect();
            let aux = DesignMatrix::new(others, target, None).unwrap();
            let r2 = ols_fit(&aux).unwrap().r_squared.unwrap();
            assert_relative_eq!(value, 1.0 / (1.0 - r2), epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn pearson_basics() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let m = pearson_matrix(&[("x".into(), x.clone()), ("neg".into(), neg)]).unwrap();
        assert_relative_eq!(m.get(0, 0), 1.0);
        assert_relative_eq!(m.get(0, 1), -1.0, epsilon = 1e-12);
        assert_relative_eq!(m.get(1, 0), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_three_rows_hand_value() {
        // x = (1,2,3), y = (2,2,5): r = 3/sqrt(2*6) ... compute by formula
        let m = pearson_matrix(&[("x".into(), vec![1.0, 2.0, 3.0]), ("y".into(), vec![2.0, 2.0, 5.0])])
            .unwrap();
        let expected = 3.0 / (2.0f64.sqrt() * 6.0f64.sqrt());
        assert_relative_eq!(m.get(0, 1), expected, epsilon = 1e-12);
    }

    #[test]
    fn pearson_flags_zero_variance() {
        let m = pearson_matrix(&[("x".into(), vec![1.0, 2.0, 3.0]), ("k".into(), vec![4.0, 4.0, 4.0])])
            .unwrap();
        assert!(m.flagged.contains(&"k".to_string()));
        assert!(m.get(0, 1).is_nan());
    }

    #[test]
    fn power_sequence_detects_quadratic() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 20.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v - 0.7 * v * v).collect();
        let steps = power_sequence_r2(&x, &y, 5).unwrap();
        assert!(steps[1].delta > 1e-6, "quadratic step should improve fit");
        for s in &steps[2..] {
            assert!(s.delta.abs() < 1e-9, "power {} should not improve", s.power);
        }
        assert_relative_eq!(steps[1].r_squared, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn power_sequence_linear_flatlines_after_one() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let steps = power_sequence_r2(&x, &y, 4).unwrap();
        assert_relative_eq!(steps[0].r_squared, 1.0, epsilon = 1e-10);
        for s in &steps[1..] {
            assert!(s.delta.abs() < 1e-9);
        }
    }

    #[test]
    fn power_sequence_cubic_peaks_at_three() {
        let x: Vec<f64> = (0..300).map(|i| i as f64 / 30.0 - 5.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v * v - 2.0 * v).collect();
        let steps = power_sequence_r2(&x, &y, 6).unwrap();
        assert!(steps[2].r_squared > 1.0 - 1e-10);
        assert!(steps[2].delta > 1e-6);
        for s in &steps[3..] {
            assert!(s.delta.abs() < 1e-9);
        }
    }
}
