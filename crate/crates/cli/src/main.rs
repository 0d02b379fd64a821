//! `coplay` command line: ingest session data, inspect co-play weights,
//! census triads, build closure curves, generate rewired worlds, assemble
//! features, fit success models, and run the full pipeline.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coplay::error::Error;
use coplay::features::{assemble_features, FeatureOptions, FeatureTable, OutcomeKind};
use coplay::graph::CoPlayIndex;
use coplay::pipeline::{
    run_pipeline, robustness_suite, synth_corpus, PipelineConfig, QuadraticSuccess, SynthParams,
};
use coplay::records::{
    load_dataset, load_dataset_dir, parse_records, write_csv, Dataset, YearBounds,
};
use coplay::rewire::{build_pools, generate_world, verify_world};
use coplay::stats::{
    fe_negbin_fit, fe_ols_fit, logit_fit, marginal_predictions, negbin_fit, ols_fit,
    permutation_pvalues, Column, DesignMatrix, FitResult, Term,
};
use coplay::triads::{census_dataset, closure_curve, pooled_triplets, Origin, SessionCensus};

#[derive(Parser)]
#[command(name = "coplay", version, about = "Triad census and rewiring null models for temporal collaboration networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load session tables (and/or plain-text records) into a dataset directory.
    Ingest(IngestArgs),
    /// Co-play graph queries.
    Graph(GraphArgs),
    /// Per-session triad census.
    Census(CensusArgs),
    /// Probability of closure by minimal-legs-weight quantile.
    ClosureCurve(ClosureCurveArgs),
    /// Generate rewired null worlds.
    Rewire(RewireArgs),
    /// Assemble the session-level regression table.
    Features(FeaturesArgs),
    /// Fit a success model on a feature table.
    Fit(FitArgs),
    /// Marginal predictions from a saved fit.
    Margins(MarginsArgs),
    /// Permutation p-values for a design CSV.
    Permute(PermuteArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Full analysis pipeline.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    sessions: Option<PathBuf>,
    #[arg(long)]
    personnel: Option<PathBuf>,
    /// Plain-text record file (blank-line separated session blocks).
    #[arg(long)]
    records: Option<PathBuf>,
    /// Output dataset directory (sessions.csv + personnel.csv).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[command(subcommand)]
    command: GraphCommand,
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Emit a session's co-play weight matrix as CSV.
    Weights(WeightsArgs),
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    session: String,
    /// Override the as-of year (defaults to the session's own year).
    #[arg(long)]
    as_of: Option<i32>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CensusArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 2)]
    theta: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClosureCurveArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 2)]
    theta: u32,
    #[arg(long, default_value_t = 10_000)]
    quantiles: usize,
    #[arg(long, default_value_t = 100)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RewireArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 100)]
    worlds: u32,
    #[arg(long, default_value_t = 1)]
    window: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Census CSV from the census subcommand; recomputed when omitted.
    #[arg(long)]
    censuses: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    theta: u32,
    #[arg(long, default_value_t = 2000)]
    cutoff: i32,
    /// File with one leader id per line to exclude from the sample.
    #[arg(long)]
    exclude_leaders: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    top_k: usize,
    #[arg(long, default_value_t = 5)]
    horizon: u32,
    /// Use log10(releases + 1) instead of log10(releases).
    #[arg(long)]
    log_offset_one: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    Ols,
    Nb,
    Logit,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum)]
    model: FitModel,
    /// Absorb leader fixed effects.
    #[arg(long)]
    fixed_effects: bool,
    /// Drop these regressors (comma separated).
    #[arg(long, value_delimiter = ',')]
    omit: Vec<String>,
    /// Output path; .json gets JSON, anything else the flat key-value text.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MarginsArgs {
    /// fit.json produced by the fit subcommand.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    vary: String,
    /// Grid as lo:hi:step.
    #[arg(long, default_value = "0:1:0.01")]
    grid: String,
    /// Fix other regressors as name=value pairs (comma separated).
    #[arg(long, value_delimiter = ',')]
    at: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PermuteArgs {
    /// CSV with the outcome column plus numeric regressors.
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long, value_enum)]
    model: FitModel,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    bands: usize,
    #[arg(long, default_value_t = 5)]
    band_size: usize,
    #[arg(long, default_value_t = 10)]
    instruments: usize,
    #[arg(long, default_value_t = 1950)]
    start_year: i32,
    #[arg(long, default_value_t = 5)]
    years: u32,
    #[arg(long, default_value_t = 50)]
    sessions_per_year: usize,
    #[arg(long, default_value_t = 0.7)]
    loyalty: f64,
    /// Planted success rule: linear term on the log10 scale.
    #[arg(long)]
    success_linear: Option<f64>,
    /// Planted success rule: quadratic term on the log10 scale.
    #[arg(long)]
    success_quadratic: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    base_log10_releases: f64,
    #[arg(long, default_value_t = 0.05)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(subcommand)]
    command: PipelineCommand,
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run the full analysis into an output directory.
    Run(PipelineRunArgs),
    /// Run the robustness sweeps.
    Robustness(PipelineRunArgs),
}

#[derive(Args)]
struct PipelineRunArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                Error::Stage { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Graph(args) => match args.command {
            GraphCommand::Weights(args) => weights(args),
        },
        Command::Census(args) => census(args),
        Command::ClosureCurve(args) => closure(args),
        Command::Rewire(args) => rewire(args),
        Command::Features(args) => features(args),
        Command::Fit(args) => fit(args),
        Command::Margins(args) => margins(args),
        Command::Permute(args) => permute(args),
        Command::Synth(args) => synth(args),
        Command::Pipeline(args) => match args.command {
            PipelineCommand::Run(args) => {
                let text = fs::read_to_string(&args.config)?;
                let cfg = PipelineConfig::parse(&text)?;
                let bundle = run_pipeline(&cfg, &args.out)?;
                println!(
                    "pipeline complete: {} sessions, {} worlds, manifest {}",
                    bundle.n_sessions,
                    bundle.worlds_generated,
                    bundle.manifest_path.display()
                );
                for note in &bundle.notes {
                    println!("note: {note}");
                }
                Ok(())
            }
            PipelineCommand::Robustness(args) => {
                let text = fs::read_to_string(&args.config)?;
                let cfg = PipelineConfig::parse(&text)?;
                let report = robustness_suite(&cfg, &args.out)?;
                println!("robustness sweeps complete: {} rows", report.rows.len());
                for note in &report.notes {
                    println!("note: {note}");
                }
                Ok(())
            }
        },
    }
}

fn load_dir(path: &Path) -> Result<Dataset, Error> {
    Ok(load_dataset_dir(path, YearBounds::default())?.0)
}

fn ingest(args: IngestArgs) -> Result<(), Error> {
    let bounds = YearBounds::default();
    let mut records = Vec::new();
    let mut session_rows = 0;
    let mut personnel_rows = 0;
    match (&args.sessions, &args.personnel) {
        (Some(s), Some(p)) => {
            let (d, report) = load_dataset(s, p, bounds)?;
            session_rows = report.session_rows;
            personnel_rows = report.personnel_rows;
            records.extend(d.sessions().iter().cloned());
        }
        (None, None) => {}
        _ => {
            return Err(Error::Config(
                "--sessions and --personnel must be given together".into(),
            ))
        }
    }
    if let Some(path) = &args.records {
        let text = fs::read_to_string(path)?;
        records.extend(parse_records(&text)?);
    }
    if records.is_empty() {
        return Err(Error::Config("no input: pass --sessions/--personnel and/or --records".into()));
    }
    let dataset = Dataset::new(records, bounds)?;
    write_csv(&dataset, &args.out)?;
    println!(
        "ingested {} sessions ({} session rows, {} personnel rows) into {}",
        dataset.len(),
        session_rows,
        personnel_rows,
        args.out.display()
    );
    Ok(())
}

fn weights(args: WeightsArgs) -> Result<(), Error> {
    let d = load_dir(&args.dataset)?;
    let ix = CoPlayIndex::build(&d);
    let mut session = d
        .get(&args.session)
        .ok_or_else(|| Error::Argument(format!("unknown session '{}'", args.session)))?
        .clone();
    if let Some(year) = args.as_of {
        session.year = year;
    }
    let matrix = ix.session_weight_matrix(&session);
    let csv = matrix.to_csv();
    match args.out {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn census_csv_text(d: &Dataset, censuses: &[SessionCensus]) -> String {
    let mut out = String::from(
        "session_id,year,theta,n_connected,n_open,n_closed,n_forbidden,d_open,d_closed,d_forbidden\n",
    );
    for (s, c) in d.sessions().iter().zip(censuses) {
        let dens = c
            .densities()
            .map(|x| format!("{},{},{}", x.open, x.closed, x.forbidden))
            .unwrap_or_else(|| ",,".to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.session_id,
            s.year,
            c.theta,
            c.n_connected(),
            c.n_open,
            c.n_closed,
            c.n_forbidden,
            dens
        ));
    }
    out
}

fn census(args: CensusArgs) -> Result<(), Error> {
    let d = load_dir(&args.dataset)?;
    let ix = CoPlayIndex::build(&d);
    let censuses = census_dataset(&d, &ix, args.theta)?;
    fs::write(&args.out, census_csv_text(&d, &censuses))?;
    println!("censused {} sessions at theta={} into {}", d.len(), args.theta, args.out.display());
    Ok(())
}

fn closure(args: ClosureCurveArgs) -> Result<(), Error> {
    let d = load_dir(&args.dataset)?;
    let ix = CoPlayIndex::build(&d);
    let pool = pooled_triplets(&d, &ix, args.theta, Origin::Observed)?;
    let quantiles = args.quantiles.min(pool.len());
    let window = args.window.min(quantiles.max(1));
    if quantiles < args.quantiles {
        eprintln!("note: quantiles clamped to {quantiles} (pool has {} triads)", pool.len());
    }
    let curve = closure_curve(&pool, quantiles, window)?;
    let mut out =
        String::from("quantile,mean_min_legs_weight,closure_probability_raw,closure_probability\n");
    for p in &curve {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.quantile, p.mean_min_legs_weight, p.closure_probability_raw, p.closure_probability
        ));
    }
    fs::write(&args.out, out)?;
    println!("closure curve over {} triads into {}", pool.len(), args.out.display());
    Ok(())
}

fn rewire(args: RewireArgs) -> Result<(), Error> {
    let d = load_dir(&args.dataset)?;
    let pools = build_pools(&d, args.window)?;
    fs::create_dir_all(&args.out)?;
    for i in 0..args.worlds {
        let seed = coplay::seeds::derive_seed(args.seed, 1000 + u64::from(i));
        let world = generate_world(&d, &pools, seed);
        let report = verify_world(&d, &world)?;
        let dir = args.out.join(format!("world_{i:03}"));
        fs::create_dir_all(&dir)?;
        let mut csv = String::from("session_id,musician_id,instrument_id\n");
        for (s, row) in d.sessions().iter().zip(&world.assignment) {
            for (entry, &m) in s.personnel.iter().zip(row) {
                for inst in &entry.instruments {
                    csv.push_str(&format!(
                        "{},{},{}\n",
                        s.session_id,
                        pools.musician_name(m),
                        inst
                    ));
                }
            }
        }
        fs::write(dir.join("personnel.csv"), csv)?;
        fs::write(
            dir.join("manifest.txt"),
            format!(
                "seed = {}\nwindow_years = {}\ninfeasible_slots = {}\nviolations = {}\n",
                world.seed,
                world.window_years,
                world.infeasible_slots,
                report.total()
            ),
        )?;
    }
    println!("generated {} worlds into {}", args.worlds, args.out.display());
    Ok(())
}

fn read_censuses(path: &Path, d: &Dataset, theta: u32) -> Result<Vec<SessionCensus>, Error> {
    let mut by_id = std::collections::HashMap::new();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_col), Some(open_col), Some(closed_col), Some(forbidden_col)) = (
        col("session_id"),
        col("n_open"),
        col("n_closed"),
        col("n_forbidden"),
    ) else {
        return Err(Error::Validation("census CSV missing required columns".into()));
    };
    for row in reader.records() {
        let row = row?;
        let parse = |i: usize| -> Result<u64, Error> {
            row.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Validation("bad census row".into()))
        };
        by_id.insert(
            row.get(id_col).unwrap_or_default().to_string(),
            SessionCensus {
                n_open: parse(open_col)?,
                n_closed: parse(closed_col)?,
                n_forbidden: parse(forbidden_col)?,
                theta,
            },
        );
    }
    d.sessions()
        .iter()
        .map(|s| {
            by_id.get(&s.session_id).copied().ok_or_else(|| {
                Error::Validation(format!("census CSV missing session '{}'", s.session_id))
            })
        })
        .collect()
}

fn features(args: FeaturesArgs) -> Result<(), Error> {
    let d = load_dir(&args.dataset)?;
    let ix = CoPlayIndex::build(&d);
    let censuses = match &args.censuses {
        Some(path) => read_censuses(path, &d, args.theta)?,
        None => census_dataset(&d, &ix, args.theta)?,
    };
    let excluded_leaders = match &args.exclude_leaders {
        Some(path) => fs::read_to_string(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        None => HashSet::new(),
    };
    let opts = FeatureOptions {
        cutoff_year: args.cutoff,
        excluded_leaders,
        top_k_instruments: args.top_k,
        horizon_years: args.horizon,
        log_offset_one: args.log_offset_one,
    };
    let (table, report) = assemble_features(&d, &ix, &censuses, &opts)?;
    table.write_csv(&args.out)?;
    println!(
        "kept {} rows (right-censoring {}, excluded leader {}, zero releases {}, no connected triads {}, missing distinctiveness {})",
        report.kept,
        report.right_censoring,
        report.excluded_leader,
        report.zero_releases,
        report.no_connected_triads,
        report.missing_distinctiveness
    );
    Ok(())
}

fn fit(args: FitArgs) -> Result<(), Error> {
    let table = FeatureTable::read_csv(&args.features)?;
    let omit: Vec<&str> = args.omit.iter().map(String::as_str).collect();
    let fit = match (args.model, args.fixed_effects) {
        (FitModel::Ols, false) => ols_fit(&table.design(OutcomeKind::LogReleases, false, &omit)?)?,
        (FitModel::Ols, true) => fe_ols_fit(&table.design(OutcomeKind::LogReleases, true, &omit)?)?,
        (FitModel::Nb, false) => negbin_fit(&table.design(OutcomeKind::Releases, false, &omit)?)?,
        (FitModel::Nb, true) => fe_negbin_fit(&table.design(OutcomeKind::Releases, true, &omit)?)?,
        (FitModel::Logit, _) => {
            return Err(Error::Argument(
                "logit applies to closure designs, not the feature table".into(),
            ))
        }
    };
    write_fit(&fit, &args.out)?;
    println!("fitted {} on {} rows into {}", fit.model.label(), fit.n_used, args.out.display());
    Ok(())
}

fn write_fit(fit: &FitResult, out: &Path) -> Result<(), Error> {
    if out.extension().is_some_and(|e| e == "json") {
        fs::write(out, serde_json::to_string_pretty(fit).map_err(|e| Error::Validation(e.to_string()))?)?;
    } else {
        fs::write(out, fit.to_flat_text())?;
    }
    Ok(())
}

fn margins(args: MarginsArgs) -> Result<(), Error> {
    let fit: FitResult = serde_json::from_str(&fs::read_to_string(&args.fit)?)
        .map_err(|e| Error::Validation(format!("cannot parse fit json: {e}")))?;
    let parts: Vec<&str> = args.grid.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(Error::Argument(format!("grid must be lo:hi:step, got '{}'", args.grid)));
    };
    let (lo, hi, step): (f64, f64, f64) = (
        lo.parse().map_err(|_| Error::Argument("bad grid lo".into()))?,
        hi.parse().map_err(|_| Error::Argument("bad grid hi".into()))?,
        step.parse().map_err(|_| Error::Argument("bad grid step".into()))?,
    );
    if step <= 0.0 || hi < lo {
        return Err(Error::Argument("grid must satisfy lo <= hi, step > 0".into()));
    }
    let mut grid = Vec::new();
    let mut x = lo;
    while x <= hi + 1e-12 {
        grid.push(x);
        x += step;
    }
    let mut overrides = Vec::new();
    for pair in &args.at {
        let (name, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("--at needs name=value, got '{pair}'")))?;
        overrides.push((
            name.trim().to_string(),
            value.trim().parse::<f64>().map_err(|_| Error::Argument("bad --at value".into()))?,
        ));
    }
    let points = marginal_predictions(&fit, &args.vary, &grid, &overrides)?;
    let mut out = String::from("value,prediction,ci_low,ci_high,eta,se_eta\n");
    for p in &points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.value, p.prediction, p.ci_low, p.ci_high, p.eta, p.se_eta
        ));
    }
    fs::write(&args.out, out)?;
    println!("{} margin points into {}", points.len(), args.out.display());
    Ok(())
}

fn permute(args: PermuteArgs) -> Result<(), Error> {
    let mut reader = csv::Reader::from_path(&args.design)?;
    let headers = reader.headers()?.clone();
    let mut columns: Vec<(String, Vec<f64>)> =
        headers.iter().map(|h| (h.to_string(), Vec::new())).collect();
    for row in reader.records() {
        let row = row?;
        for (i, cell) in row.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Validation(format!("non-numeric cell '{cell}'")))?;
            columns[i].1.push(v);
        }
    }
    let outcome_idx = columns
        .iter()
        .position(|(n, _)| n == &args.outcome)
        .ok_or_else(|| Error::Argument(format!("no column '{}'", args.outcome)))?;
    let outcome = columns.remove(outcome_idx).1;
    let n = outcome.len();
    let mut cols = vec![Column { name: "const".into(), term: Term::Constant, values: vec![1.0; n] }];
    cols.extend(
        columns.into_iter().map(|(name, values)| Column { name, term: Term::Raw, values }),
    );
    let design = DesignMatrix::new(cols, outcome, None)?;
    let fitter = match args.model {
        FitModel::Ols => ols_fit,
        FitModel::Nb => negbin_fit,
        FitModel::Logit => logit_fit,
    };
    let result = permutation_pvalues(fitter, &design, args.n, args.subsample, args.seed)?;
    let mut out = String::from("coefficient,beta,permutation_p\n");
    for ((name, p), c) in result.p_values.iter().zip(&result.reference.coefficients) {
        out.push_str(&format!("{name},{},{p}\n", c.beta));
    }
    out.push_str(&format!("#failures,{},\n", result.n_failures));
    fs::write(&args.out, out)?;
    println!(
        "{} permutations ({} failures) into {}",
        result.n_permutations,
        result.n_failures,
        args.out.display()
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), Error> {
    let success = match (args.success_linear, args.success_quadratic) {
        (Some(linear), Some(quadratic)) => Some(QuadraticSuccess { linear, quadratic }),
        (None, None) => None,
        _ => {
            return Err(Error::Argument(
                "--success-linear and --success-quadratic must be given together".into(),
            ))
        }
    };
    let params = SynthParams {
        n_bands: args.bands,
        band_size: args.band_size,
        n_instruments: args.instruments,
        start_year: args.start_year,
        n_years: args.years,
        sessions_per_year: args.sessions_per_year,
        loyalty: args.loyalty,
        base_log10_releases: args.base_log10_releases,
        success,
        noise_sd: args.noise_sd,
        alpha: args.alpha,
        seed: args.seed,
    };
    let d = synth_corpus(&params)?;
    write_csv(&d, &args.out)?;
    println!("synthesized {} sessions into {}", d.len(), args.out.display());
    Ok(())
}
