//! Marginal predictions over a regressor grid, and the leader-interaction
//! augmentation used to contrast one leader's curve against the rest.

use crate::error::{Error, Result};

use super::{
    fe_negbin_fit, fe_ols_fit, logistic, logit_fit, negbin_fit, ols_fit, Column, DesignMatrix,
    FitResult, ModelKind, Term, Z_975,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginPoint {
    pub value: f64,
    pub prediction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub eta: f64,
    pub se_eta: f64,
}

fn resolve(
    fit: &FitResult,
    name: &str,
    vary: &str,
    value: f64,
    overrides: &[(String, f64)],
    depth: usize,
) -> Result<f64> {
    if depth > 8 {
        return Err(Error::Argument(format!("cyclic term derivation at '{name}'")));
    }
    if name == vary {
        return Ok(value);
    }
    if let Some((_, v)) = overrides.iter().find(|(n, _)| n == name) {
        return Ok(*v);
    }
    let idx = fit
        .coefficients
        .iter()
        .position(|c| c.name == name)
        .ok_or_else(|| Error::Argument(format!("unknown regressor '{name}'")))?;
    match &fit.coefficients[idx].term {
        Term::Constant => Ok(1.0),
        Term::Raw => Ok(fit.column_means[idx]),
        Term::Square { base } => {
            let b = resolve(fit, base, vary, value, overrides, depth + 1)?;
            Ok(b * b)
        }
        Term::Interaction { a, b } => {
            let va = resolve(fit, a, vary, value, overrides, depth + 1)?;
            let vb = resolve(fit, b, vary, value, overrides, depth + 1)?;
            Ok(va * vb)
        }
    }
}

/// Predictions over a grid of one regressor, other regressors held at their
/// estimation-sample means (or explicit overrides). Squared and interaction
/// terms are recomputed from their bases, so varying `d_forbidden` moves
/// `d_forbidden_sq` consistently. Delta-method 95% intervals on the linear
/// predictor, mapped through the model's response scale.
pub fn marginal_predictions(
    fit: &FitResult,
    vary: &str,
    grid: &[f64],
    overrides: &[(String, f64)],
) -> Result<Vec<MarginPoint>> {
    let known = fit.coefficients.iter().any(|c| c.name == vary)
        || fit.coefficients.iter().any(|c| match &c.term {
            Term::Square { base } => base == vary,
            Term::Interaction { a, b } => a == vary || b == vary,
            _ => false,
        });
    if !known {
        return Err(Error::Argument(format!("unknown regressor '{vary}'")));
    }
    let p = fit.coefficients.len();
    let mut out = Vec::with_capacity(grid.len());
    for &v in grid {
        let mut x = Vec::with_capacity(p);
        for c in &fit.coefficients {
            x.push(resolve(fit, &c.name, vary, v, overrides, 0)?);
        }
        let eta: f64 =
            fit.intercept_adjust + x.iter().zip(&fit.coefficients).map(|(xi, c)| xi * c.beta).sum::<f64>();
        let mut var = 0.0;
        for i in 0..p {
            for j in 0..p {
                var += x[i] * fit.cov[i * p + j] * x[j];
            }
        }
        let se = var.max(0.0).sqrt();
        let (lo, hi) = (eta - Z_975 * se, eta + Z_975 * se);
        let transform = |e: f64| -> f64 {
            match fit.model {
                ModelKind::Ols | ModelKind::FeOls => e,
                ModelKind::Logit => logistic(e),
                ModelKind::NegBin | ModelKind::FeNegBin => e.exp(),
            }
        };
        out.push(MarginPoint {
            value: v,
            prediction: transform(eta),
            ci_low: transform(lo),
            ci_high: transform(hi),
            eta,
            se_eta: se,
        });
    }
    Ok(out)
}

/// Augment a design with a 0/1 flag plus its interactions with `base` and
/// `base` squared, then fit. The flagged subgroup gets its own constant,
/// linear, and quadratic shifts; margins per subgroup come from overrides on
/// the flag column.
pub fn leader_interaction_fit(
    design: &DesignMatrix,
    flag_name: &str,
    flag: &[f64],
    base: &str,
    kind: ModelKind,
) -> Result<FitResult> {
    if flag.len() != design.n_rows() {
        return Err(Error::Argument("flag length differs from design rows".into()));
    }
    if flag.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Argument("flag must be 0/1".into()));
    }
    if flag.iter().all(|&v| v == flag[0]) {
        return Err(Error::Argument("flag is constant; no contrast to estimate".into()));
    }
    let base_col = design
        .column(base)
        .ok_or_else(|| Error::Argument(format!("unknown base regressor '{base}'")))?;
    let base_sq = design
        .columns()
        .iter()
        .find(|c| matches!(&c.term, Term::Square { base: b } if b == base));

    let mut augmented = design.clone();
    augmented.push_column(Column { name: flag_name.into(), term: Term::Raw, values: flag.to_vec() })?;
    augmented.push_column(Column {
        name: format!("{flag_name}_x_{base}"),
        term: Term::Interaction { a: flag_name.into(), b: base.into() },
        values: flag.iter().zip(&base_col.values).map(|(f, b)| f * b).collect(),
    })?;
    if let Some(sq) = base_sq {
        augmented.push_column(Column {
            name: format!("{flag_name}_x_{}", sq.name),
            term: Term::Interaction { a: flag_name.into(), b: sq.name.clone() },
            values: flag.iter().zip(&sq.values).map(|(f, b)| f * b).collect(),
        })?;
    }
    match kind {
        ModelKind::Ols => ols_fit(&augmented),
        ModelKind::FeOls => fe_ols_fit(&augmented),
        ModelKind::Logit => logit_fit(&augmented),
        ModelKind::NegBin => negbin_fit(&augmented),
        ModelKind::FeNegBin => fe_negbin_fit(&augmented),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sampling;
    use crate::stats::DesignBuilder;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_regressor_margins_equal_fitted_line() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v).collect();
        let design = DesignBuilder::new(40).constant().raw("x", x).build(y, None).unwrap();
        let fit = ols_fit(&design).unwrap();
        let grid = [0.0, 2.0, 5.0, 9.0];
        let margins = marginal_predictions(&fit, "x", &grid, &[]).unwrap();
        for m in margins {
            assert_relative_eq!(m.prediction, 1.0 + 0.5 * m.value, epsilon = 1e-9);
        }
    }

    #[test]
    fn quadratic_margins_peak_at_vertex() {
        // planted quadratic peaking at 0.5
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 500;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 2.0 * v - 2.0 * v * v + 0.3 + rng.random_range(-0.01..0.01))
            .collect();
        let design = DesignBuilder::new(n)
            .constant()
            .raw("x", x)
            .square("x_sq", "x")
            .build(y, None)
            .unwrap();
        let fit = ols_fit(&design).unwrap();
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let margins = marginal_predictions(&fit, "x", &grid, &[]).unwrap();
        let peak = margins
            .iter()
            .max_by(|a, b| a.prediction.partial_cmp(&b.prediction).unwrap())
            .unwrap();
        assert!((peak.value - 0.5).abs() <= 0.02, "peak at {}", peak.value);
        // analytic vertex from the coefficients
        let vertex = -fit.beta("x").unwrap() / (2.0 * fit.beta("x_sq").unwrap());
        assert!((vertex - 0.5).abs() < 0.02);
    }

    #[test]
    fn nb_intercept_only_margins_flat() {
        let y = vec![3.0, 2.0, 4.0, 3.0, 5.0, 1.0, 3.0, 2.0];
        let design = DesignBuilder::new(8).constant().build(y, None).unwrap();
        let fit = negbin_fit(&design).unwrap();
        let margins = marginal_predictions(&fit, "const", &[1.0, 1.0], &[]).unwrap();
        let expected = fit.beta("const").unwrap().exp();
        for m in margins {
            assert_relative_eq!(m.prediction, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn unknown_regressor_rejected() {
        let design = DesignBuilder::new(10)
            .constant()
            .raw("x", (0..10).map(f64::from).collect())
            .build((0..10).map(f64::from).collect(), None)
            .unwrap();
        let fit = ols_fit(&design).unwrap();
        assert!(marginal_predictions(&fit, "zzz", &[0.0], &[]).is_err());
    }

    #[test]
    fn interaction_terms_near_zero_when_flag_uninformative() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let flag: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let y: Vec<f64> = x.iter().map(|&v| 1.0 + v + rng.random_range(-0.1..0.1)).collect();
        let design = DesignBuilder::new(n)
            .constant()
            .raw("x", x)
            .square("x_sq", "x")
            .build(y, None)
            .unwrap();
        let fit = leader_interaction_fit(&design, "flag", &flag, "x", ModelKind::Ols).unwrap();
        assert!(fit.beta("flag").unwrap().abs() < 0.05);
        assert!(fit.beta("flag_x_x").unwrap().abs() < 0.2);
        assert!(fit.p_value("flag_x_x").unwrap() > 0.01);
    }

    #[test]
    fn planted_subgroup_curvature_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 4000;
        let mut x = Vec::with_capacity(n);
        let mut flag = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let xv: f64 = rng.random_range(0.0..1.0);
            let fv = f64::from(i % 4 == 0);
            // flagged subgroup: stronger curvature and higher baseline
            let eta = if fv > 0.5 {
                1.0 + 3.0 * xv - 3.0 * xv * xv
            } else {
                0.5 + 1.0 * xv - 1.0 * xv * xv
            };
            x.push(xv);
            flag.push(fv);
            y.push(sampling::poisson(&mut rng, eta.exp()) as f64);
        }
        let design = DesignBuilder::new(n)
            .constant()
            .raw("x", x)
            .square("x_sq", "x")
            .build(y, None)
            .unwrap();
        let fit = leader_interaction_fit(&design, "flag", &flag, "x", ModelKind::NegBin).unwrap();
        assert!(fit.beta("flag").unwrap() > 0.0, "baseline shift sign");
        assert!(fit.beta("flag_x_x").unwrap() > 0.0, "linear interaction sign");
        assert!(fit.beta("flag_x_x_sq").unwrap() < 0.0, "quadratic interaction sign");

        // margins per flag value use the matching curve
        let grid = [0.2, 0.5];
        let flagged = marginal_predictions(&fit, "x", &grid, &[("flag".into(), 1.0)]).unwrap();
        let rest = marginal_predictions(&fit, "x", &grid, &[("flag".into(), 0.0)]).unwrap();
        assert!(flagged[1].prediction > rest[1].prediction);
    }

    #[test]
    fn constant_flag_rejected() {
        let design = DesignBuilder::new(10)
            .constant()
            .raw("x", (0..10).map(f64::from).collect())
            .build((0..10).map(f64::from).collect(), None)
            .unwrap();
        assert!(
            leader_interaction_fit(&design, "flag", &[1.0; 10], "x", ModelKind::Ols).is_err()
        );
    }
}
