//! Estimation and inference engines.
//!
//! Self-contained fitters (OLS, logit, negative binomial, each with optional
//! leader fixed effects), permutation p-values, rank/ECDF tests, kernel
//! density estimation, lowess, correlation/VIF diagnostics, and marginal
//! predictions. Everything is a pure function of its inputs; randomized
//! procedures take explicit seeds.

mod linear;
mod logit;
mod margins;
mod negbin;
mod permutation;
mod ranktests;
pub mod sampling;
mod smooth;

pub use linear::{fe_ols_fit, ols_fit, pearson_matrix, power_sequence_r2, vif, PearsonMatrix, PowerStep};
pub use logit::{logistic, logit_fit, logit_predict, matched_closure_sample};
pub use margins::{leader_interaction_fit, marginal_predictions, MarginPoint};
pub use negbin::{fe_negbin_fit, negbin_fit, negbin_log_likelihood};
pub use permutation::{permutation_pvalues, PermutationResult};
pub use ranktests::{ks_two_sample, wilcoxon_signed_rank, KsResult, WilcoxonResult};
pub use smooth::{kde_epanechnikov, lowess, Kde};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a design column derives from the underlying variables. Margins use
/// this to move squared and interaction terms consistently with their bases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Constant,
    Raw,
    Square { base: String },
    Interaction { a: String, b: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub term: Term,
    pub values: Vec<f64>,
}

/// A named regression design: regressor columns, outcome, optional groups.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    columns: Vec<Column>,
    outcome: Vec<f64>,
    groups: Option<Vec<String>>,
}

impl DesignMatrix {
    pub fn new(
        columns: Vec<Column>,
        outcome: Vec<f64>,
        groups: Option<Vec<String>>,
    ) -> Result<DesignMatrix> {
        let n = outcome.len();
        if n == 0 {
            return Err(Error::Argument("design matrix needs at least one row".into()));
        }
        let mut seen = HashMap::new();
        for (i, c) in columns.iter().enumerate() {
            if c.values.len() != n {
                return Err(Error::Argument(format!(
                    "column '{}' has {} rows, outcome has {n}",
                    c.name,
                    c.values.len()
                )));
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("column '{}' has a missing cell", c.name)));
            }
            if seen.insert(c.name.clone(), i).is_some() {
                return Err(Error::Argument(format!("duplicate column name '{}'", c.name)));
            }
        }
        if outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("outcome has a missing cell".into()));
        }
        if let Some(g) = &groups {
            if g.len() != n {
                return Err(Error::Argument("groups length differs from outcome".into()));
            }
        }
        Ok(DesignMatrix { columns, outcome, groups })
    }

    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn groups(&self) -> Option<&[String]> {
        self.groups.as_deref()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn has_constant(&self) -> bool {
        self.columns.iter().any(|c| c.term == Term::Constant)
    }

    /// Same design with a replacement outcome (used by permutation tests).
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<DesignMatrix> {
        DesignMatrix::new(self.columns.clone(), outcome, self.groups.clone())
    }

    /// Row subset in the given order.
    pub fn subset(&self, rows: &[usize]) -> DesignMatrix {
        let pick = |v: &[f64]| rows.iter().map(|&r| v[r]).collect::<Vec<f64>>();
        DesignMatrix {
            columns: self
                .columns
                .iter()
                .map(|c| Column { name: c.name.clone(), term: c.term.clone(), values: pick(&c.values) })
                .collect(),
            outcome: pick(&self.outcome),
            groups: self
                .groups
                .as_ref()
                .map(|g| rows.iter().map(|&r| g[r].clone()).collect()),
        }
    }

    /// Append a derived column.
    pub fn push_column(&mut self, column: Column) -> Result<()> {
        if column.values.len() != self.n_rows() {
            return Err(Error::Argument(format!("column '{}' has wrong length", column.name)));
        }
        if self.column(&column.name).is_some() {
            return Err(Error::Argument(format!("duplicate column name '{}'", column.name)));
        }
        self.columns.push(column);
        Ok(())
    }

    /// Row-major copy of the regressor block.
    pub(crate) fn dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_rows();
        let p = self.n_cols();
        nalgebra::DMatrix::from_fn(n, p, |i, j| self.columns[j].values[i])
    }

    pub(crate) fn column_means(&self) -> Vec<f64> {
        let n = self.n_rows() as f64;
        self.columns.iter().map(|c| c.values.iter().sum::<f64>() / n).collect()
    }
}

/// Convenience builder for hand-assembled designs.
pub struct DesignBuilder {
    columns: Vec<Column>,
    n: usize,
}

impl DesignBuilder {
    pub fn new(n: usize) -> DesignBuilder {
        DesignBuilder { columns: Vec::new(), n }
    }

    pub fn constant(mut self) -> Self {
        self.columns.push(Column { name: "const".into(), term: Term::Constant, values: vec![1.0; self.n] });
        self
    }

    pub fn raw(mut self, name: &str, values: Vec<f64>) -> Self {
        self.columns.push(Column { name: name.into(), term: Term::Raw, values });
        self
    }

    pub fn square(mut self, name: &str, base: &str) -> Self {
        let values = self
            .columns
            .iter()
            .find(|c| c.name == base)
            .map(|c| c.values.iter().map(|v| v * v).collect())
            .unwrap_or_default();
        self.columns.push(Column { name: name.into(), term: Term::Square { base: base.into() }, values });
        self
    }

    pub fn interaction(mut self, name: &str, a: &str, b: &str) -> Self {
        let va = self.columns.iter().find(|c| c.name == a).map(|c| c.values.clone()).unwrap_or_default();
        let vb = self.columns.iter().find(|c| c.name == b).map(|c| c.values.clone()).unwrap_or_default();
        let values = va.iter().zip(&vb).map(|(x, y)| x * y).collect();
        self.columns.push(Column {
            name: name.into(),
            term: Term::Interaction { a: a.into(), b: b.into() },
            values,
        });
        self
    }

    pub fn build(self, outcome: Vec<f64>, groups: Option<Vec<String>>) -> Result<DesignMatrix> {
        DesignMatrix::new(self.columns, outcome, groups)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Ols,
    FeOls,
    Logit,
    NegBin,
    FeNegBin,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::FeOls => "fe_ols",
            ModelKind::Logit => "logit",
            ModelKind::NegBin => "negbin",
            ModelKind::FeNegBin => "fe_negbin",
        }
    }
}

/// One estimated coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub term: Term,
    pub beta: f64,
    pub se: f64,
    pub p: f64,
}

/// Overall model test (F for OLS, likelihood-ratio chi-square for ML models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallStat {
    pub name: String,
    pub value: f64,
    pub df: (f64, f64),
    pub p: f64,
}

/// Estimation output. Carries enough state (column means, coefficient
/// covariance, term derivations) to compute marginal predictions later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub coefficients: Vec<Coefficient>,
    pub n_used: usize,
    pub n_groups: Option<usize>,
    /// Groups dropped because they carry no within information
    /// (singletons for FE-OLS; singletons and all-zero groups for FE-NB).
    pub dropped_groups: usize,
    pub dropped_rows: usize,
    /// Regressors dropped during estimation (e.g. group-constant under FE).
    pub dropped_columns: Vec<String>,
    pub r_squared: Option<f64>,
    pub adj_r_squared: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub null_log_likelihood: Option<f64>,
    pub mcfadden_r2: Option<f64>,
    pub mcfadden_adj_r2: Option<f64>,
    /// NB2 overdispersion and its boundary-corrected LR test against Poisson.
    pub alpha: Option<f64>,
    pub alpha_lr_stat: Option<f64>,
    pub alpha_p: Option<f64>,
    pub overall: Option<OverallStat>,
    /// Per-group effects (fixed-effects OLS); label, gamma.
    pub group_effects: Option<Vec<(String, f64)>>,
    /// Added to the linear predictor by margins (mean group effect for FE-OLS).
    pub intercept_adjust: f64,
    /// Means of the design columns over the estimation sample.
    pub column_means: Vec<f64>,
    /// Row-major p x p covariance of the coefficients.
    pub cov: Vec<f64>,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn beta(&self, name: &str) -> Option<f64> {
        self.coefficient(name).map(|c| c.beta)
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.coefficient(name).map(|c| c.p)
    }

    /// exp(beta) per coefficient (odds ratios for logit, rate ratios for NB).
    pub fn exp_beta(&self) -> Vec<(String, f64)> {
        self.coefficients.iter().map(|c| (c.name.clone(), c.beta.exp())).collect()
    }

    /// Flat `key = value` rendering, one line per field.
    pub fn to_flat_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("model", self.model.label().to_string());
        put("n_used", self.n_used.to_string());
        if let Some(g) = self.n_groups {
            put("n_groups", g.to_string());
        }
        put("dropped_groups", self.dropped_groups.to_string());
        put("dropped_rows", self.dropped_rows.to_string());
        for c in &self.coefficients {
            put(&format!("beta.{}", c.name), format!("{:.10e}", c.beta));
            put(&format!("se.{}", c.name), format!("{:.10e}", c.se));
            put(&format!("p.{}", c.name), format!("{:.10e}", c.p));
        }
        let pairs = [
            ("r_squared", self.r_squared),
            ("adj_r_squared", self.adj_r_squared),
            ("log_likelihood", self.log_likelihood),
            ("null_log_likelihood", self.null_log_likelihood),
            ("mcfadden_r2", self.mcfadden_r2),
            ("mcfadden_adj_r2", self.mcfadden_adj_r2),
            ("alpha", self.alpha),
            ("alpha_lr_stat", self.alpha_lr_stat),
            ("alpha_p", self.alpha_p),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                put(k, format!("{v:.10e}"));
            }
        }
        if let Some(o) = &self.overall {
            put("overall.stat", o.name.clone());
            put("overall.value", format!("{:.10e}", o.value));
            put("overall.p", format!("{:.10e}", o.p));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// shared numeric helpers
// ---------------------------------------------------------------------------

pub(crate) fn normal_cdf(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().cdf(z)
}

pub(crate) fn normal_two_sided_p(z: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(z.abs()))
}

pub(crate) fn t_two_sided_p(t: f64, df: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    if df <= 0.0 {
        return f64::NAN;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

pub(crate) fn chi2_sf(x: f64, df: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if df <= 0.0 || x < 0.0 {
        return f64::NAN;
    }
    let dist = ChiSquared::new(df).expect("valid chi2");
    1.0 - dist.cdf(x)
}

pub(crate) fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};
    if d1 <= 0.0 || d2 <= 0.0 || x < 0.0 {
        return f64::NAN;
    }
    let dist = FisherSnedecor::new(d1, d2).expect("valid F");
    1.0 - dist.cdf(x)
}

/// 97.5% standard-normal quantile used for 95% confidence intervals.
pub(crate) const Z_975: f64 = 1.959963984540054;

/// Find columns that are (numerically) linear combinations of earlier ones,
/// for rank-deficiency reporting. Modified Gram-Schmidt with a relative tol.
pub(crate) fn collinear_columns(x: &nalgebra::DMatrix<f64>, names: &[&str]) -> Vec<String> {
    let n = x.nrows();
    let p = x.ncols();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut offenders = Vec::new();
    for j in 0..p {
        let mut v = nalgebra::DVector::from_fn(n, |i, _| x[(i, j)]);
        let scale = v.norm();
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        if v.norm() <= 1e-10 * scale.max(1e-300) {
            offenders.push(names[j].to_string());
        } else {
            let norm = v.norm();
            basis.push(v / norm);
        }
    }
    offenders
}
