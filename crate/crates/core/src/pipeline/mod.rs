//! End-to-end orchestration: ingest, index, census, closure curves, rewired
//! worlds, density comparison, features, correlations, bivariate fits, the
//! four success models, margins, and the robustness sweeps. Every output is
//! a flat file listed (with its digest) in a run manifest, and the whole
//! bundle is a pure function of the config and master seed.

pub mod config;
pub mod synth;

pub use config::PipelineConfig;
pub use synth::{synth_corpus, QuadraticSuccess, SynthParams};

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{
    assemble_features, ExclusionReport, FeatureOptions, FeatureTable, OutcomeKind,
};
use crate::graph::CoPlayIndex;
use crate::records::{load_dataset, parse_records, Dataset, YearBounds};
use crate::rewire::{
    build_pools, compare_forbidden_densities, generate_world, verify_world, world_census,
    DensityComparison, RewiredWorld, SlotPools,
};
use crate::seeds::derive_seed;
use crate::stats::{
    fe_negbin_fit, fe_ols_fit, kde_epanechnikov, ks_two_sample, leader_interaction_fit, logit_fit,
    lowess, marginal_predictions, matched_closure_sample, negbin_fit, ols_fit, pearson_matrix,
    permutation_pvalues, power_sequence_r2, wilcoxon_signed_rank, DesignBuilder, DesignMatrix,
    FitResult, KsResult, ModelKind, PermutationResult, WilcoxonResult,
};
use crate::triads::{census_dataset, closure_curve, pooled_triplets, Origin, SessionCensus, TriadPool};

/// Seed streams fanned out from the master seed.
const STREAM_WORLD_BASE: u64 = 1000;
const STREAM_CLOSURE_SAMPLE: u64 = 2000;
const STREAM_PERMUTATION: u64 = 3000;

const MODELS: [(&str, ModelKind, OutcomeKind, bool); 4] = [
    ("ols", ModelKind::Ols, OutcomeKind::LogReleases, false),
    ("nb", ModelKind::NegBin, OutcomeKind::Releases, false),
    ("fe_ols", ModelKind::FeOls, OutcomeKind::LogReleases, true),
    ("fe_nb", ModelKind::FeNegBin, OutcomeKind::Releases, true),
];

fn fit_model(kind: ModelKind, design: &DesignMatrix) -> Result<FitResult> {
    match kind {
        ModelKind::Ols => ols_fit(design),
        ModelKind::FeOls => fe_ols_fit(design),
        ModelKind::Logit => logit_fit(design),
        ModelKind::NegBin => negbin_fit(design),
        ModelKind::FeNegBin => fe_negbin_fit(design),
    }
}

/// Everything the run produced, in memory, plus the manifest identifying the
/// files on disk.
#[derive(Debug)]
pub struct ReportBundle {
    pub out_dir: PathBuf,
    pub n_sessions: usize,
    pub observed_censuses: Vec<SessionCensus>,
    pub worlds_generated: usize,
    pub total_world_violations: u64,
    pub infeasible_share: f64,
    pub comparison: Option<DensityComparison>,
    pub wilcoxon: Option<WilcoxonResult>,
    pub ks: Option<KsResult>,
    pub closure_logit: Option<FitResult>,
    pub closure_permutation: Option<PermutationResult>,
    pub features: FeatureTable,
    pub exclusions: ExclusionReport,
    pub fits: BTreeMap<String, FitResult>,
    /// Location of the maximum of the forbidden-density margins, per model.
    pub forbidden_margin_peak: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub manifest_path: PathBuf,
    pub manifest_digest: String,
}

/// Tracks written files so a failed stage removes its partial outputs, and
/// collects digests for the manifest.
struct BundleWriter {
    out_dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl BundleWriter {
    fn new(out_dir: &Path) -> Result<BundleWriter> {
        fs::create_dir_all(out_dir)?;
        Ok(BundleWriter { out_dir: out_dir.to_path_buf(), digests: BTreeMap::new() })
    }

    fn write(&mut self, rel: &str, content: &str) -> Result<()> {
        let path = self.out_dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, content)?;
        self.digests.insert(rel.to_string(), hex_digest(content.as_bytes()));
        Ok(())
    }

    fn cleanup(&self) {
        for rel in self.digests.keys() {
            let _ = fs::remove_file(self.out_dir.join(rel));
        }
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in out {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

pub fn load_input(cfg: &PipelineConfig) -> Result<Dataset> {
    let bounds = YearBounds::default();
    let mut records = Vec::new();
    if let (Some(sessions), Some(personnel)) = (&cfg.sessions, &cfg.personnel) {
        let (d, _) = load_dataset(sessions, personnel, bounds)?;
        records.extend(d.sessions().iter().cloned());
    }
    if let Some(path) = &cfg.records {
        let text = fs::read_to_string(path)?;
        records.extend(parse_records(&text)?);
    }
    Dataset::new(records, bounds)
}

fn read_leader_list(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn census_csv(d: &Dataset, censuses: &[SessionCensus]) -> String {
    let mut out = String::from(
        "session_id,year,n_connected,n_open,n_closed,n_forbidden,d_open,d_closed,d_forbidden\n",
    );
    for (s, c) in d.sessions().iter().zip(censuses) {
        let dens = c
            .densities()
            .map(|x| format!("{},{},{}", x.open, x.closed, x.forbidden))
            .unwrap_or_else(|| ",,".to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.session_id,
            s.year,
            c.n_connected(),
            c.n_open,
            c.n_closed,
            c.n_forbidden,
            dens
        );
    }
    out
}

fn curve_csv(points: &[crate::triads::CurvePoint]) -> String {
    let mut out =
        String::from("quantile,mean_min_legs_weight,closure_probability_raw,closure_probability\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.quantile, p.mean_min_legs_weight, p.closure_probability_raw, p.closure_probability
        );
    }
    out
}

fn margins_csv(points: &[crate::stats::MarginPoint]) -> String {
    let mut out = String::from("value,prediction,ci_low,ci_high,eta,se_eta\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.value, p.prediction, p.ci_low, p.ci_high, p.eta, p.se_eta
        );
    }
    out
}

fn world_personnel_csv(d: &Dataset, pools: &SlotPools, world: &RewiredWorld) -> String {
    let mut out = String::from("session_id,musician_id,instrument_id\n");
    for (s, row) in d.sessions().iter().zip(&world.assignment) {
        for (entry, &m) in s.personnel.iter().zip(row) {
            for inst in &entry.instruments {
                let _ = writeln!(out, "{},{},{}", s.session_id, pools.musician_name(m), inst);
            }
        }
    }
    out
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

fn write_curve(
    cfg: &PipelineConfig,
    writer: &mut BundleWriter,
    pool: &TriadPool,
    rel: &str,
    notes: &mut Vec<String>,
) -> Result<()> {
    if pool.is_empty() {
        notes.push(format!("{rel}: skipped, no connected triads"));
        return Ok(());
    }
    let q = cfg.quantiles.min(pool.len());
    if q < cfg.quantiles {
        notes.push(format!("{rel}: quantiles clamped to {q} (pool has {} triads)", pool.len()));
    }
    let w = cfg.smoothing_window.min(q);
    let curve = closure_curve(pool, q, w)?;
    writer.write(rel, &curve_csv(&curve))
}

/// Run the full analysis. Stage failures abort with the stage named and the
/// partial outputs removed.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<ReportBundle> {
    cfg.validate()?;
    let mut writer = BundleWriter::new(out_dir)?;
    match run_stages(cfg, out_dir, &mut writer) {
        Ok(bundle) => Ok(bundle),
        Err(e) => {
            writer.cleanup();
            Err(e)
        }
    }
}

fn run_stages(
    cfg: &PipelineConfig,
    out_dir: &Path,
    writer: &mut BundleWriter,
) -> Result<ReportBundle> {
    let mut notes: Vec<String> = Vec::new();

    // ingest
    let d = load_input(cfg).map_err(|e| e.in_stage("ingest"))?;
    if d.is_empty() {
        return Err(Error::Validation("dataset is empty".into()).in_stage("ingest"));
    }
    let excluded_leaders = match &cfg.exclude_leaders {
        Some(path) => read_leader_list(path).map_err(|e| e.in_stage("ingest"))?,
        None => HashSet::new(),
    };

    // graph
    let ix = CoPlayIndex::build(&d);

    // census
    let censuses =
        census_dataset(&d, &ix, cfg.theta).map_err(|e| e.in_stage("census"))?;
    writer.write("censuses.csv", &census_csv(&d, &censuses)).map_err(|e| e.in_stage("census"))?;

    // observed closure curve
    let observed_pool = pooled_triplets(&d, &ix, cfg.theta, Origin::Observed)
        .map_err(|e| e.in_stage("closure-curve"))?;
    write_curve(cfg, writer, &observed_pool, "closure_observed.csv", &mut notes)
        .map_err(|e| e.in_stage("closure-curve"))?;

    // rewired worlds
    let mut worlds_generated = 0usize;
    let mut total_world_violations = 0u64;
    let mut infeasible_share = 0.0;
    let mut comparison: Option<DensityComparison> = None;
    let mut wilcoxon: Option<WilcoxonResult> = None;
    let mut ks: Option<KsResult> = None;
    let mut closure_logit: Option<FitResult> = None;
    let mut closure_permutation: Option<PermutationResult> = None;

    if cfg.n_worlds == 0 {
        notes.push("rewire: skipped (n_worlds = 0); all rewire-dependent outputs omitted".into());
    } else {
        let stage = |e: Error| e.in_stage("rewire");
        let pools = build_pools(&d, cfg.window_years).map_err(stage)?;
        let worlds: Vec<RewiredWorld> = (0..cfg.n_worlds)
            .into_par_iter()
            .map(|i| generate_world(&d, &pools, derive_seed(cfg.seed, STREAM_WORLD_BASE + u64::from(i))))
            .collect();
        worlds_generated = worlds.len();
        let total_slots = pools.n_slots().max(1) as f64;
        let mut world_censuses = Vec::with_capacity(worlds.len());
        let mut rewired_pool = TriadPool::default();
        for (i, world) in worlds.iter().enumerate() {
            let report = verify_world(&d, world).map_err(stage)?;
            total_world_violations += report.total();
            infeasible_share += world.infeasible_slots as f64 / total_slots;
            writer
                .write(
                    &format!("worlds/world_{i:03}/personnel.csv"),
                    &world_personnel_csv(&d, &pools, world),
                )
                .map_err(stage)?;
            writer
                .write(
                    &format!("worlds/world_{i:03}/manifest.txt"),
                    &format!(
                        "seed = {}\nwindow_years = {}\ninfeasible_slots = {}\nviolations = {}\n",
                        world.seed,
                        world.window_years,
                        world.infeasible_slots,
                        report.total()
                    ),
                )
                .map_err(stage)?;
            let censuses_w = world_census(&d, &pools, world, cfg.theta).map_err(stage)?;
            let materialized =
                crate::rewire::materialize_world(&d, &pools, world).map_err(stage)?;
            let ix_w = CoPlayIndex::build(&materialized);
            rewired_pool.extend(
                pooled_triplets(&materialized, &ix_w, cfg.theta, Origin::Rewired(i as u32))
                    .map_err(stage)?,
            );
            world_censuses.push(censuses_w);
        }
        infeasible_share /= worlds.len().max(1) as f64;
        if total_world_violations > 0 {
            notes.push(format!(
                "rewire: {total_world_violations} constraint violations across infeasible slots"
            ));
        }

        write_curve(cfg, writer, &rewired_pool, "closure_rewired.csv", &mut notes)
            .map_err(stage)?;

        // forbidden-density comparison, KDE, rank tests
        let cmp = compare_forbidden_densities(&d, &censuses, &world_censuses).map_err(stage)?;
        let mut table = String::from(
            "session_id,year,n_forbidden_observed,observed,mean_rewired,difference,n_worlds_defined\n",
        );
        for r in &cmp.rows {
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{}",
                r.session_id,
                r.year,
                r.n_forbidden_observed,
                r.observed,
                r.mean_rewired,
                r.difference,
                r.n_worlds_defined
            );
        }
        writer.write("density_comparison.csv", &table).map_err(stage)?;

        let mut tests_text = format!(
            "n_restricted = {}\nshare_rewired_higher = {}\nskipped_undefined = {}\n",
            cmp.n_restricted, cmp.share_rewired_higher, cmp.skipped_undefined
        );
        if cmp.differences.iter().any(|&x| x != 0.0) {
            let w = wilcoxon_signed_rank(&cmp.differences).map_err(stage)?;
            let _ = writeln!(tests_text, "wilcoxon.z = {}", w.z);
            let _ = writeln!(tests_text, "wilcoxon.p_two_sided = {}", w.p_two_sided);
            let _ = writeln!(tests_text, "wilcoxon.exact = {}", w.exact);
            wilcoxon = Some(w);
        } else {
            notes.push("comparison: Wilcoxon skipped (no nonzero differences)".into());
        }
        if !cmp.observed_restricted.is_empty() {
            let k = ks_two_sample(&cmp.observed_restricted, &cmp.mean_rewired_restricted)
                .map_err(stage)?;
            let _ = writeln!(tests_text, "ks.d = {}", k.d);
            let _ = writeln!(tests_text, "ks.p = {}", k.p);
            ks = Some(k);
        }
        writer.write("comparison_tests.txt", &tests_text).map_err(stage)?;

        if cmp.differences.len() >= 2
            && cmp.differences.iter().any(|&x| x != cmp.differences[0])
        {
            let kde = kde_epanechnikov(&cmp.differences, cfg.kde_bandwidth).map_err(stage)?;
            let mut csv = String::from("x,density\n");
            for (x, f) in kde.grid(512) {
                let _ = writeln!(csv, "{x},{f}");
            }
            writer.write("kde_differences.csv", &csv).map_err(stage)?;

            // overlaid densities of observed and mean-rewired proportions
            let all: Vec<f64> = cmp
                .observed_restricted
                .iter()
                .chain(&cmp.mean_rewired_restricted)
                .copied()
                .collect();
            let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let obs_kde = kde_epanechnikov(&cmp.observed_restricted, cfg.kde_bandwidth);
            let rew_kde = kde_epanechnikov(&cmp.mean_rewired_restricted, cfg.kde_bandwidth);
            if let (Ok(obs_kde), Ok(rew_kde)) = (obs_kde, rew_kde) {
                let mut csv = String::from("x,observed_density,rewired_density\n");
                for x in grid(lo - obs_kde.bandwidth, hi + obs_kde.bandwidth, 512) {
                    let _ =
                        writeln!(csv, "{x},{},{}", obs_kde.evaluate(x), rew_kde.evaluate(x));
                }
                writer.write("kde_forbidden_densities.csv", &csv).map_err(stage)?;
            } else {
                notes.push("comparison: overlay KDE skipped (zero-variance sample)".into());
            }
        } else {
            notes.push("comparison: KDE skipped (degenerate difference sample)".into());
        }
        comparison = Some(cmp);

        // matched closure logit with permutation p-values
        if rewired_pool.len() >= observed_pool.len() && !observed_pool.is_empty() {
            let stage = |e: Error| e.in_stage("closure-logit");
            let design = matched_closure_sample(
                &observed_pool,
                &rewired_pool,
                derive_seed(cfg.seed, STREAM_CLOSURE_SAMPLE),
            )
            .map_err(stage)?;
            match logit_fit(&design) {
                Ok(fit) => {
                    let mut text = fit.to_flat_text();
                    for (name, or) in fit.exp_beta() {
                        let _ = writeln!(text, "odds_ratio.{name} = {or:.10e}");
                    }
                    let subsample = cfg.permutation_subsample.min(design.n_rows());
                    let perm = permutation_pvalues(
                        logit_fit,
                        &design,
                        cfg.n_permutations,
                        (subsample < design.n_rows()).then_some(subsample),
                        derive_seed(cfg.seed, STREAM_PERMUTATION),
                    )
                    .map_err(stage)?;
                    for (name, p) in &perm.p_values {
                        let _ = writeln!(text, "permutation_p.{name} = {p}");
                    }
                    let _ = writeln!(text, "permutation_failures = {}", perm.n_failures);
                    writer.write("closure_logit.txt", &text).map_err(stage)?;
                    closure_permutation = Some(perm);
                    closure_logit = Some(fit);
                }
                Err(Error::Estimation(msg)) => {
                    notes.push(format!("closure-logit: skipped ({msg})"));
                }
                Err(e) => return Err(stage(e)),
            }
        } else {
            notes.push("closure-logit: skipped (rewired pool smaller than observed)".into());
        }
    }

    // features
    let opts = FeatureOptions {
        cutoff_year: cfg.cutoff_year,
        excluded_leaders,
        top_k_instruments: cfg.top_k_instruments,
        horizon_years: cfg.horizon_years,
        log_offset_one: false,
    };
    let (features, exclusions) =
        assemble_features(&d, &ix, &censuses, &opts).map_err(|e| e.in_stage("features"))?;
    {
        let stage = |e: Error| e.in_stage("features");
        writer
            .write("features.csv", &features.to_csv_string().map_err(stage)?)
            .map_err(stage)?;
        let mut text = String::new();
        let _ = writeln!(text, "right_censoring = {}", exclusions.right_censoring);
        let _ = writeln!(text, "excluded_leader = {}", exclusions.excluded_leader);
        let _ = writeln!(text, "zero_releases = {}", exclusions.zero_releases);
        let _ = writeln!(text, "no_connected_triads = {}", exclusions.no_connected_triads);
        let _ = writeln!(text, "missing_distinctiveness = {}", exclusions.missing_distinctiveness);
        let _ = writeln!(text, "kept = {}", exclusions.kept);
        writer.write("exclusions.txt", &text).map_err(stage)?;
    }
    if features.is_empty() {
        return Err(Error::Validation(
            "no sessions survived the sample filters; nothing to estimate".into(),
        )
        .in_stage("features"));
    }

    // correlations
    {
        let stage = |e: Error| e.in_stage("correlations");
        let m = pearson_matrix(&features.correlation_columns()).map_err(stage)?;
        writer.write("correlations.csv", &m.to_csv()).map_err(stage)?;
        if !m.flagged.is_empty() {
            notes.push(format!("correlations: zero-variance columns [{}]", m.flagged.join(", ")));
        }
    }

    // bivariate quadratic, categorical, and lowess views per triad density
    {
        let stage = |e: Error| e.in_stage("bivariate");
        let y: Vec<f64> = features.rows.iter().map(|r| r.log10_releases).collect();
        for (label, values) in [
            ("forbidden", features.rows.iter().map(|r| r.d_forbidden).collect::<Vec<f64>>()),
            ("closed", features.rows.iter().map(|r| r.d_closed).collect()),
            ("open", features.rows.iter().map(|r| r.d_open).collect()),
        ] {
            let design = DesignBuilder::new(values.len())
                .constant()
                .raw("density", values.clone())
                .square("density_sq", "density")
                .build(y.clone(), None)
                .map_err(stage)?;
            match ols_fit(&design) {
                Ok(fit) => {
                    let margins = marginal_predictions(&fit, "density", &grid(0.0, 1.0, 101), &[])
                        .map_err(stage)?;
                    writer
                        .write(&format!("bivariate_quadratic_{label}.csv"), &margins_csv(&margins))
                        .map_err(stage)?;
                }
                Err(Error::Estimation(msg)) => {
                    notes.push(format!("bivariate {label}: quadratic skipped ({msg})"));
                }
                Err(e) => return Err(stage(e)),
            }

            // categorical estimator over quarter bins
            let mut csv = String::from("bin_low,bin_high,n,mean_log10_releases,ci_low,ci_high\n");
            for b in 0..4 {
                let (lo, hi) = (b as f64 * 0.25, (b + 1) as f64 * 0.25);
                let members: Vec<f64> = values
                    .iter()
                    .zip(&y)
                    .filter(|(v, _)| **v >= lo && (**v < hi || (b == 3 && **v <= hi)))
                    .map(|(_, y)| *y)
                    .collect();
                if members.is_empty() {
                    let _ = writeln!(csv, "{lo},{hi},0,,,");
                    continue;
                }
                let n = members.len() as f64;
                let mean = members.iter().sum::<f64>() / n;
                let sd = (members.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n - 1.0).max(1.0))
                .sqrt();
                let half = 1.959963984540054 * sd / n.sqrt();
                let _ = writeln!(
                    csv,
                    "{lo},{hi},{},{mean},{},{}",
                    members.len(),
                    mean - half,
                    mean + half
                );
            }
            writer.write(&format!("bivariate_categories_{label}.csv"), &csv).map_err(stage)?;

            // lowess over the scatter
            let fitted = lowess(&values, &y, cfg.lowess_f, 0).map_err(stage)?;
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
            let mut csv = String::from("density,fitted\n");
            for i in order {
                let _ = writeln!(csv, "{},{}", values[i], fitted[i]);
            }
            writer.write(&format!("bivariate_lowess_{label}.csv"), &csv).map_err(stage)?;

            // power sequence, reducing the cap on numerical rank loss
            let mut emitted = false;
            for cap in (1..=8).rev() {
                match power_sequence_r2(&values, &y, cap) {
                    Ok(steps) => {
                        let mut csv = String::from("power,r_squared,delta\n");
                        for s in &steps {
                            let _ = writeln!(csv, "{},{},{}", s.power, s.r_squared, s.delta);
                        }
                        writer
                            .write(&format!("power_sequence_{label}.csv"), &csv)
                            .map_err(stage)?;
                        if cap < 8 {
                            notes.push(format!(
                                "power sequence {label}: capped at {cap} powers (rank loss)"
                            ));
                        }
                        emitted = true;
                        break;
                    }
                    Err(Error::Estimation(_)) | Err(Error::Argument(_)) => continue,
                    Err(e) => return Err(stage(e)),
                }
            }
            if !emitted {
                notes.push(format!("power sequence {label}: skipped (degenerate density)"));
            }
        }
    }

    // the four success models plus margins
    let mut fits: BTreeMap<String, FitResult> = BTreeMap::new();
    let mut forbidden_margin_peak: BTreeMap<String, f64> = BTreeMap::new();
    {
        let stage = |e: Error| e.in_stage("fit");
        let mut summary = String::from("model,coefficient,beta,se,p\n");
        for (label, kind, outcome, with_groups) in MODELS {
            let design = features.design(outcome, with_groups, &[]).map_err(stage)?;
            let fit = fit_model(kind, &design).map_err(stage)?;
            writer
                .write(
                    &format!("fit_{label}.json"),
                    &serde_json::to_string_pretty(&fit)
                        .map_err(|e| stage(Error::Validation(e.to_string())))?,
                )
                .map_err(stage)?;
            writer.write(&format!("fit_{label}.txt"), &fit.to_flat_text()).map_err(stage)?;
            for c in &fit.coefficients {
                let _ = writeln!(summary, "{label},{},{},{},{}", c.name, c.beta, c.se, c.p);
            }

            for vary in ["d_forbidden", "d_closed", "median_tie_strength"] {
                let grid_values = if vary == "median_tie_strength" {
                    let lo = features
                        .rows
                        .iter()
                        .map(|r| r.median_tie_strength)
                        .fold(f64::INFINITY, f64::min);
                    let hi = features
                        .rows
                        .iter()
                        .map(|r| r.median_tie_strength)
                        .fold(f64::NEG_INFINITY, f64::max);
                    if lo == hi {
                        notes.push(format!("margins {vary} {label}: skipped (constant)"));
                        continue;
                    }
                    grid(lo, hi, 101)
                } else {
                    grid(0.0, 1.0, 101)
                };
                let margins =
                    marginal_predictions(&fit, vary, &grid_values, &[]).map_err(stage)?;
                if vary == "d_forbidden" {
                    let peak = margins
                        .iter()
                        .max_by(|a, b| a.prediction.partial_cmp(&b.prediction).unwrap())
                        .map(|p| p.value)
                        .unwrap_or(f64::NAN);
                    forbidden_margin_peak.insert(label.to_string(), peak);
                }
                writer
                    .write(&format!("margins_{vary}_{label}.csv"), &margins_csv(&margins))
                    .map_err(stage)?;
            }
            fits.insert(label.to_string(), fit);
        }
        writer.write("models_summary.csv", &summary).map_err(stage)?;
    }

    // leader interaction (most-active leader vs the rest, count model)
    {
        let stage = |e: Error| e.in_stage("leader-interaction");
        let mut by_leader: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &features.rows {
            *by_leader.entry(r.leader_id.as_str()).or_insert(0) += 1;
        }
        let mut top_leader: Option<(&str, usize)> = None;
        for (l, n) in &by_leader {
            if top_leader.is_none_or(|(_, best)| *n > best) {
                top_leader = Some((l, *n));
            }
        }
        let top_leader = top_leader.map(|(l, _)| l.to_string());
        match top_leader {
            Some(leader) if by_leader.len() > 1 => {
                let flag: Vec<f64> = features
                    .rows
                    .iter()
                    .map(|r| f64::from(r.leader_id == leader))
                    .collect();
                let design = features.design(OutcomeKind::Releases, false, &[]).map_err(stage)?;
                match leader_interaction_fit(&design, "focal_leader", &flag, "d_forbidden", ModelKind::NegBin)
                {
                    Ok(fit) => {
                        let mut text = format!("focal_leader = {leader}\n");
                        text.push_str(&fit.to_flat_text());
                        writer.write("leader_interaction.txt", &text).map_err(stage)?;
                        let g = grid(0.0, 1.0, 101);
                        let focal = marginal_predictions(
                            &fit,
                            "d_forbidden",
                            &g,
                            &[("focal_leader".into(), 1.0)],
                        )
                        .map_err(stage)?;
                        let rest = marginal_predictions(
                            &fit,
                            "d_forbidden",
                            &g,
                            &[("focal_leader".into(), 0.0)],
                        )
                        .map_err(stage)?;
                        let mut csv = String::from(
                            "value,focal_prediction,focal_ci_low,focal_ci_high,rest_prediction,rest_ci_low,rest_ci_high\n",
                        );
                        for (a, b) in focal.iter().zip(&rest) {
                            let _ = writeln!(
                                csv,
                                "{},{},{},{},{},{},{}",
                                a.value, a.prediction, a.ci_low, a.ci_high, b.prediction, b.ci_low, b.ci_high
                            );
                        }
                        writer.write("margins_leader_interaction.csv", &csv).map_err(stage)?;
                    }
                    Err(Error::Estimation(msg)) | Err(Error::Argument(msg)) => {
                        notes.push(format!("leader-interaction: skipped ({msg})"));
                    }
                    Err(e) => return Err(stage(e)),
                }
            }
            _ => notes.push("leader-interaction: skipped (single leader in sample)".into()),
        }
    }

    // manifest
    let manifest_path = out_dir.join("manifest.txt");
    let mut manifest = String::new();
    let _ = writeln!(manifest, "toolkit = coplay {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "config_digest = {}", hex_digest(cfg.canonical().as_bytes()));
    let _ = writeln!(manifest, "master_seed = {}", cfg.seed);
    let _ = writeln!(manifest, "seed_stream.worlds = {STREAM_WORLD_BASE}+i");
    let _ = writeln!(manifest, "seed_stream.closure_sample = {STREAM_CLOSURE_SAMPLE}");
    let _ = writeln!(manifest, "seed_stream.permutation = {STREAM_PERMUTATION}");
    let _ = writeln!(manifest, "n_sessions = {}", d.len());
    let _ = writeln!(manifest, "worlds_generated = {worlds_generated}");
    for note in &notes {
        let _ = writeln!(manifest, "note = {note}");
    }
    let _ = write!(manifest, "{}", config_block(cfg));
    for (rel, digest) in &writer.digests {
        let _ = writeln!(manifest, "file.{rel} = {digest}");
    }
    fs::write(&manifest_path, &manifest)?;
    let manifest_digest = hex_digest(manifest.as_bytes());

    Ok(ReportBundle {
        out_dir: out_dir.to_path_buf(),
        n_sessions: d.len(),
        observed_censuses: censuses,
        worlds_generated,
        total_world_violations,
        infeasible_share,
        comparison,
        wilcoxon,
        ks,
        closure_logit,
        closure_permutation,
        features,
        exclusions,
        fits,
        forbidden_margin_peak,
        notes,
        manifest_path,
        manifest_digest,
    })
}

fn config_block(cfg: &PipelineConfig) -> String {
    cfg.canonical().lines().map(|l| format!("config.{l}\n")).collect()
}

// ---------------------------------------------------------------------------
// robustness sweeps
// ---------------------------------------------------------------------------

/// One sweep row: the forbidden-density coefficients of one model under one
/// sweep setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep: String,
    pub setting: String,
    pub model: String,
    pub forbidden_beta: f64,
    pub forbidden_se: f64,
    pub forbidden_p: f64,
    pub forbidden_sq_beta: f64,
    pub forbidden_sq_se: f64,
    pub forbidden_sq_p: f64,
    pub n_used: usize,
}

#[derive(Debug, Default)]
pub struct RobustnessReport {
    pub rows: Vec<SweepRow>,
    pub notes: Vec<String>,
}

fn fit_four_models(
    features: &FeatureTable,
    omit: &[&str],
    sweep: &str,
    setting: &str,
    rows: &mut Vec<SweepRow>,
    notes: &mut Vec<String>,
) -> Result<()> {
    for (label, kind, outcome, with_groups) in MODELS {
        let design = features.design(outcome, with_groups, omit)?;
        match fit_model(kind, &design) {
            Ok(fit) => {
                let fb = fit.coefficient("d_forbidden");
                let fb2 = fit.coefficient("d_forbidden_sq");
                match (fb, fb2) {
                    (Some(fb), Some(fb2)) => rows.push(SweepRow {
                        sweep: sweep.into(),
                        setting: setting.into(),
                        model: label.into(),
                        forbidden_beta: fb.beta,
                        forbidden_se: fb.se,
                        forbidden_p: fb.p,
                        forbidden_sq_beta: fb2.beta,
                        forbidden_sq_se: fb2.se,
                        forbidden_sq_p: fb2.p,
                        n_used: fit.n_used,
                    }),
                    _ => notes.push(format!(
                        "{sweep} {setting} {label}: forbidden terms dropped during estimation"
                    )),
                }
            }
            Err(Error::Estimation(msg)) => {
                notes.push(format!("{sweep} {setting} {label}: skipped ({msg})"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// The four appendix-style sweeps: closed-terms omission, strong-tie
/// threshold, right-hand cutoff, and high-reputation-leader exclusion.
pub fn robustness_suite(cfg: &PipelineConfig, out_dir: &Path) -> Result<RobustnessReport> {
    cfg.validate()?;
    let mut writer = BundleWriter::new(out_dir)?;
    match robustness_stages(cfg, &mut writer) {
        Ok(report) => Ok(report),
        Err(e) => {
            writer.cleanup();
            Err(e)
        }
    }
}

fn robustness_stages(cfg: &PipelineConfig, writer: &mut BundleWriter) -> Result<RobustnessReport> {
    let d = load_input(cfg).map_err(|e| e.in_stage("ingest"))?;
    let ix = CoPlayIndex::build(&d);
    let excluded_leaders = match &cfg.exclude_leaders {
        Some(path) => read_leader_list(path).map_err(|e| e.in_stage("ingest"))?,
        None => HashSet::new(),
    };
    let base_opts = FeatureOptions {
        cutoff_year: cfg.cutoff_year,
        excluded_leaders: excluded_leaders.clone(),
        top_k_instruments: cfg.top_k_instruments,
        horizon_years: cfg.horizon_years,
        log_offset_one: false,
    };

    let mut report = RobustnessReport::default();
    let stage = |e: Error| e.in_stage("robustness");

    let base_censuses = census_dataset(&d, &ix, cfg.theta).map_err(stage)?;
    let (base_features, _) =
        assemble_features(&d, &ix, &base_censuses, &base_opts).map_err(stage)?;
    if base_features.is_empty() {
        return Err(stage(Error::Validation("no sessions survive the base filters".into())));
    }

    // A: omit the closed-triads terms
    fit_four_models(
        &base_features,
        &["d_closed", "d_closed_sq"],
        "closed_omitted",
        "base",
        &mut report.rows,
        &mut report.notes,
    )
    .map_err(stage)?;

    // B: strong-tie threshold sweep
    for &theta in &cfg.theta_sweep {
        let censuses = census_dataset(&d, &ix, theta).map_err(stage)?;
        let (features, _) = assemble_features(&d, &ix, &censuses, &base_opts).map_err(stage)?;
        if features.is_empty() {
            report.notes.push(format!("theta {theta}: empty sample"));
            continue;
        }
        fit_four_models(&features, &[], "theta", &theta.to_string(), &mut report.rows, &mut report.notes)
            .map_err(stage)?;
    }

    // C: right-hand cutoff sweep
    for &cutoff in &cfg.cutoff_sweep {
        let opts = FeatureOptions { cutoff_year: cutoff, ..base_opts.clone() };
        let (features, _) = assemble_features(&d, &ix, &base_censuses, &opts).map_err(stage)?;
        if features.is_empty() {
            report.notes.push(format!("cutoff {cutoff}: empty sample"));
            continue;
        }
        fit_four_models(&features, &[], "cutoff", &cutoff.to_string(), &mut report.rows, &mut report.notes)
            .map_err(stage)?;
    }

    // D: drop the most prolific leaders (a stand-in for award lists when no
    // explicit exclusion file is configured)
    let exclusion_set = if excluded_leaders.is_empty() {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in d.sessions() {
            *counts.entry(s.leader_id.as_str()).or_insert(0) += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let take = (ranked.len() / 100).max(1);
        let set: HashSet<String> =
            ranked.into_iter().take(take).map(|(l, _)| l.to_string()).collect();
        report
            .notes
            .push(format!("leader exclusion: no file configured, dropping top {take} leaders"));
        set
    } else {
        excluded_leaders
    };
    let opts = FeatureOptions { excluded_leaders: exclusion_set, ..base_opts.clone() };
    let (features, _) = assemble_features(&d, &ix, &base_censuses, &opts).map_err(stage)?;
    if features.is_empty() {
        report.notes.push("leader exclusion: empty sample".into());
    } else {
        fit_four_models(
            &features,
            &[],
            "leaders_excluded",
            "top",
            &mut report.rows,
            &mut report.notes,
        )
        .map_err(stage)?;
    }

    let mut csv = String::from(
        "sweep,setting,model,forbidden_beta,forbidden_se,forbidden_p,forbidden_sq_beta,forbidden_sq_se,forbidden_sq_p,n_used\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            r.sweep,
            r.setting,
            r.model,
            r.forbidden_beta,
            r.forbidden_se,
            r.forbidden_p,
            r.forbidden_sq_beta,
            r.forbidden_sq_se,
            r.forbidden_sq_p,
            r.n_used
        );
    }
    writer.write("robustness_sweeps.csv", &csv).map_err(stage)?;
    let mut notes_text = String::new();
    for n in &report.notes {
        let _ = writeln!(notes_text, "note = {n}");
    }
    writer.write("robustness_notes.txt", &notes_text).map_err(stage)?;
    Ok(report)
}
