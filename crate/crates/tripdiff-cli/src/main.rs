//! Command-line front-end for the `tripdiff` estimators.
//!
//! Four subcommands bind the library into reproducible runs: `estimate`
//! (regression + imputation point estimates with optional bootstrap),
//! `decompose` (the term-level decomposition report), `event-study`
//! (post-treatment curve merged with held-out placebo lags, CSV + SVG),
//! and `simulate` (seeded data generation with a sidecar truth table).
//! Every run writes a `run.json` manifest echoing the resolved options.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tripdiff::decomposition::{decompose_with_cap, write_term_csv, DEFAULT_TUPLE_CAP};
use tripdiff::imputation::{
    att_overall, event_study, impute_counterfactuals, placebo_test, AttWeighting, EventPoint,
    PlaceboFitting,
};
use tripdiff::inference::{bootstrap, BootstrapConfig, BootstrapSummary, ClusterKey, Scheme};
use tripdiff::panel::{derive_schedule, read_csv_path, write_csv, PanelDataset, TreatmentSchedule};
use tripdiff::regression::{fit_three_way_fe, tdr_estimate, FitOptions};
use tripdiff::simulate::{gen_dgp, DgpConfig};
use tripdiff::{Error, Result};

#[derive(Parser)]
#[command(name = "tripdiff", version, about = "Staggered triple-differences estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Point estimates (regression and imputation) with optional bootstrap.
    Estimate(EstimateArgs),
    /// Term-level decomposition report of the regression estimate.
    Decompose(DecomposeArgs),
    /// Post-treatment event-study curve with held-out placebo lags.
    EventStudy(EventStudyArgs),
    /// Generate a panel from a JSON DGP config, with its truth table.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum BootstrapArg {
    None,
    Cluster,
    Pigeonhole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ClusterArg {
    Dyad,
    S,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum WeightingArg {
    Uniform,
    CohortSize,
}

#[derive(Args, Serialize)]
struct CommonArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Master seed for bootstrap draws.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BootstrapArg::None)]
    bootstrap: BootstrapArg,
    /// Clustering margin for `--bootstrap cluster`.
    #[arg(long, value_enum, default_value_t = ClusterArg::Dyad)]
    cluster: ClusterArg,
    /// Bootstrap draws.
    #[arg(long, default_value_t = 200)]
    draws: usize,
    /// Rayon thread-pool size (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Serialize)]
struct EstimateArgs {
    /// Panel CSV (`s,r,t,y,d` or `s,r,t,y,g`).
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Aggregation weighting for the imputation ATT.
    #[arg(long, value_enum, default_value_t = WeightingArg::Uniform)]
    weighting: WeightingArg,
}

#[derive(Args, Serialize)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Also write every enumerated term to `terms.csv`.
    #[arg(long)]
    term_dump: bool,
}

#[derive(Args, Serialize)]
struct EventStudyArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Largest post-treatment event time (default: T - 1).
    #[arg(long)]
    max_post: Option<usize>,
    /// Number of held-out placebo lags to attempt.
    #[arg(long, default_value_t = 0)]
    max_pre: usize,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// JSON DGP configuration.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Override the seed inside the config.
    #[arg(long)]
    override_seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(&args),
        Command::Decompose(args) => cmd_decompose(&args),
        Command::EventStudy(args) => cmd_event_study(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        2
    } else {
        match e {
            Error::DegenerateDesign(_) => 3,
            Error::EnumerationCapExceeded { .. } => 4,
            _ => 1,
        }
    }
}

fn init_threads(common: &CommonArgs) {
    if let Some(n) = common.threads {
        // Already-initialized pools (tests calling main twice) are fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn tuple_cap() -> Result<u64> {
    match std::env::var("TRIPDIFF_TUPLE_CAP") {
        Ok(v) => v
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("TRIPDIFF_TUPLE_CAP: bad value {v:?}"))),
        Err(_) => Ok(DEFAULT_TUPLE_CAP),
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidConfig(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::write(dir.join(name), content)
        .map_err(|e| Error::InvalidConfig(format!("cannot write {name}: {e}")))
}

fn write_run_manifest<A: Serialize>(dir: &Path, subcommand: &str, args: &A, cap: u64) -> Result<()> {
    #[derive(Serialize)]
    struct Manifest<'a, A> {
        subcommand: &'a str,
        tuple_cap: u64,
        #[serde(flatten)]
        args: &'a A,
    }
    let manifest = Manifest { subcommand, tuple_cap: cap, args };
    write_file(
        dir,
        "run.json",
        &serde_json::to_string_pretty(&manifest).expect("manifest serialization"),
    )
}

fn scheme_for(common: &CommonArgs) -> Option<Scheme> {
    match common.bootstrap {
        BootstrapArg::None => None,
        BootstrapArg::Cluster => Some(Scheme::OneWayCluster(match common.cluster {
            ClusterArg::Dyad => ClusterKey::Dyad,
            ClusterArg::S => ClusterKey::S,
            ClusterArg::R => ClusterKey::R,
        })),
        BootstrapArg::Pigeonhole => Some(Scheme::PigeonholeTwoWay),
    }
}

fn run_bootstrap<E>(
    panel: &PanelDataset<f64>,
    common: &CommonArgs,
    estimator: E,
) -> Result<Option<BootstrapSummary<f64>>>
where
    E: Fn(&[f64]) -> Result<f64> + Sync,
{
    let Some(scheme) = scheme_for(common) else { return Ok(None) };
    let config = BootstrapConfig { scheme, draws: common.draws, seed: common.seed };
    bootstrap(panel, estimator, &config).map(Some)
}

fn weighted_tau(panel: &PanelDataset<f64>, w: &[f64]) -> Result<f64> {
    let fit = fit_three_way_fe(panel, Some(w), None, true, &FitOptions::default())?;
    Ok(fit.tau.expect("treatment requested"))
}

fn weighted_att(
    panel: &PanelDataset<f64>,
    schedule: &TreatmentSchedule,
    weighting: WeightingArg,
    w: &[f64],
) -> Result<f64> {
    let result = impute_counterfactuals(panel, schedule, Some(w))?;
    if result.effects.is_empty() {
        return Err(Error::EmptyEffects);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for e in &result.effects {
        let base = match weighting {
            WeightingArg::Uniform => 1.0,
            WeightingArg::CohortSize => e.n_units as f64,
        };
        let wi = base * w[panel.idx(e.s, e.r, e.t)];
        num += wi * e.effect;
        den += wi;
    }
    Ok(num / den)
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    init_threads(&args.common);
    ensure_out(&args.common.out)?;
    write_run_manifest(&args.common.out, "estimate", args, tuple_cap()?)?;
    let panel: PanelDataset<f64> = read_csv_path(&args.input)?;
    let schedule = derive_schedule(&panel)?;

    let tau = tdr_estimate(&panel)?;
    let imputed = impute_counterfactuals(&panel, &schedule, None)?;
    let weighting = match args.weighting {
        WeightingArg::Uniform => AttWeighting::Uniform,
        WeightingArg::CohortSize => AttWeighting::CohortSize,
    };
    let att = att_overall(&imputed.effects, weighting)?;

    let tau_boot = run_bootstrap(&panel, &args.common, |w| weighted_tau(&panel, w))?;
    let att_boot = run_bootstrap(&panel, &args.common, |w| {
        weighted_att(&panel, &schedule, args.weighting, w)
    })?;

    #[derive(Serialize)]
    struct EstimateReport {
        tdr_estimate: f64,
        imputation_att: f64,
        n_imputed_cells: usize,
        n_dropped_cells: usize,
        bootstrap_tdr: Option<BootstrapSummary<f64>>,
        bootstrap_imputation_att: Option<BootstrapSummary<f64>>,
    }
    let report = EstimateReport {
        tdr_estimate: tau,
        imputation_att: att,
        n_imputed_cells: imputed.effects.len(),
        n_dropped_cells: imputed.dropped.len(),
        bootstrap_tdr: tau_boot,
        bootstrap_imputation_att: att_boot,
    };
    write_file(
        &args.common.out,
        "estimate.json",
        &serde_json::to_string_pretty(&report).expect("report serialization"),
    )
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<()> {
    init_threads(&args.common);
    ensure_out(&args.common.out)?;
    let cap = tuple_cap()?;
    write_run_manifest(&args.common.out, "decompose", args, cap)?;
    let panel: PanelDataset<f64> = read_csv_path(&args.input)?;
    let report = decompose_with_cap(&panel, cap)?;
    write_file(&args.common.out, "decomposition.json", &report.to_json())?;
    if args.term_dump {
        let schedule = derive_schedule(&panel)?;
        let file = fs::File::create(args.common.out.join("terms.csv"))
            .map_err(|e| Error::InvalidConfig(format!("cannot write terms.csv: {e}")))?;
        write_term_csv(&panel, &schedule, cap, io_buf(file))?;
    }
    Ok(())
}

fn io_buf(file: fs::File) -> std::io::BufWriter<fs::File> {
    std::io::BufWriter::new(file)
}

fn cmd_event_study(args: &EventStudyArgs) -> Result<()> {
    init_threads(&args.common);
    ensure_out(&args.common.out)?;
    write_run_manifest(&args.common.out, "event-study", args, tuple_cap()?)?;
    let panel: PanelDataset<f64> = read_csv_path(&args.input)?;
    let schedule = derive_schedule(&panel)?;
    let max_post = args.max_post.unwrap_or(panel.t_count().saturating_sub(1));

    let mut points: Vec<EventPoint<f64>> = Vec::new();
    // Placebo lags become negative event times; infeasible lags are kept as
    // empty points so the curve always spans the requested window.
    for lag in (1..=args.max_pre).rev() {
        let point = match placebo_test(&panel, &schedule, lag, PlaceboFitting::default(), None) {
            Ok(p) => {
                let ci = match run_bootstrap(&panel, &args.common, |w| {
                    placebo_test(&panel, &schedule, lag, PlaceboFitting::default(), Some(w))
                        .map(|p| p.estimate)
                })? {
                    Some(b) => Some((b.ci_lo, b.ci_hi)),
                    None => None,
                };
                EventPoint { k: -(lag as i64), estimate: Some(p.estimate), n: p.n, ci }
            }
            Err(Error::InsufficientPretreatmentData(_)) => {
                EventPoint { k: -(lag as i64), estimate: None, n: 0, ci: None }
            }
            Err(e) => return Err(e),
        };
        points.push(point);
    }
    let post = event_study(&panel, &schedule, max_post)?;
    for p in post {
        let ci = if p.estimate.is_some() {
            let k = p.k as usize;
            match run_bootstrap(&panel, &args.common, |w| {
                let result = impute_counterfactuals(&panel, &schedule, Some(w))?;
                let mut num = 0.0;
                let mut den = 0.0;
                for e in result.effects.iter().filter(|e| e.event_time == k) {
                    let wi = w[panel.idx(e.s, e.r, e.t)];
                    num += wi * e.effect;
                    den += wi;
                }
                if den > 0.0 {
                    Ok(num / den)
                } else {
                    Err(Error::EmptyEffects)
                }
            })? {
                Some(b) => Some((b.ci_lo, b.ci_hi)),
                None => None,
            }
        } else {
            None
        };
        points.push(EventPoint { ci, ..p });
    }

    let mut csv = String::from("k,estimate,n,ci_lo,ci_hi\n");
    for p in &points {
        let est = p.estimate.map(|e| e.to_string()).unwrap_or_default();
        let (lo, hi) = match p.ci {
            Some((lo, hi)) => (lo.to_string(), hi.to_string()),
            None => (String::new(), String::new()),
        };
        csv.push_str(&format!("{},{},{},{},{}\n", p.k, est, p.n, lo, hi));
    }
    write_file(&args.common.out, "event_study.csv", &csv)?;

    let svg_points: Vec<svg::SvgPoint> = points
        .iter()
        .map(|p| svg::SvgPoint { k: p.k, estimate: p.estimate, ci: p.ci })
        .collect();
    write_file(&args.common.out, "event_study.svg", &svg::render_event_study(&svg_points))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    init_threads(&args.common);
    ensure_out(&args.common.out)?;
    let raw = fs::read_to_string(&args.config)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", args.config.display())))?;
    let mut config: DgpConfig = serde_json::from_str(&raw)
        .map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
    if let Some(seed) = args.override_seed {
        config.seed = seed;
    }
    #[derive(Serialize)]
    struct SimManifest<'a> {
        #[serde(flatten)]
        args: &'a SimulateArgs,
        resolved_config: &'a DgpConfig,
    }
    write_run_manifest(
        &args.common.out,
        "simulate",
        &SimManifest { args, resolved_config: &config },
        tuple_cap()?,
    )?;

    let (panel, schedule, truth) = gen_dgp(&config)?;
    let file = fs::File::create(args.common.out.join("panel.csv"))
        .map_err(|e| Error::InvalidConfig(format!("cannot write panel.csv: {e}")))?;
    write_csv(&panel, io_buf(file))?;

    let mut csv = String::from("r,g,t,att\n");
    for (&(r, g, t), &att) in &truth.atts {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            panel.r_label(r),
            panel.t_label(g),
            panel.t_label(t),
            att
        ));
    }
    write_file(&args.common.out, "truth.csv", &csv)?;
    // Also record the derived adoption map for downstream tooling.
    let mut gmap = String::from("s,r,g\n");
    for s in 0..panel.s_count() {
        for r in 0..panel.r_count() {
            let g = schedule.g(s, r);
            let label = if g >= schedule.never() {
                "never".to_string()
            } else {
                panel.t_label(g).to_string()
            };
            gmap.push_str(&format!("{},{},{}\n", panel.s_label(s), panel.r_label(r), label));
        }
    }
    write_file(&args.common.out, "adoption.csv", &gmap)
}
