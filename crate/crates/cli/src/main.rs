use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use eqte::bootstrap::{b_out_of_n_bootstrap, full_bootstrap, BootstrapConfig, BootstrapSummary, CiMethod};
use eqte::counterfactual::{GridConfig, ProposedConfig};
use eqte::data::{ingest_csv, parse_level_spec, parse_probability_list};
use eqte::evt::DEFAULT_AD_REPLICATES;
use eqte::methods::{estimate, parse_methods, EstimatorConfig, Method};
use eqte::simulation::{generate_dgp, generate_traffic, run_study, DgpConfig, ErrorKind, StudyConfig};
use eqte::threshold::{select_transition, Convention, TransitionSelection};
use eqte::{Dataset, Estimand};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "eqte", version, about = "Quantile treatment effects at intermediate and extreme levels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select the bulk/tail transition level.
    Threshold(ThresholdArgs),
    /// Estimate QTE/QTT with the requested methods.
    Estimate(EstimateArgs),
    /// Run the Monte Carlo comparison study.
    Simulate(SimulateArgs),
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Args, Serialize, Clone)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    treatment: String,
    /// Outcome-model covariates (comma separated); every other column when omitted.
    #[arg(long)]
    covariates: Option<String>,
}

#[derive(Args, Serialize, Clone)]
struct SelectionArgs {
    #[arg(long, default_value_t = eqte::threshold::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value = eqte::threshold::DEFAULT_CANDIDATES)]
    candidates: String,
    /// Parametric bootstrap replicates per goodness-of-fit p-value.
    #[arg(long, default_value_t = DEFAULT_AD_REPLICATES)]
    ad_replicates: usize,
    #[arg(long, default_value = "paper-literal")]
    convention: String,
}

#[derive(Args, Serialize, Clone)]
struct ThresholdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    selection: SelectionArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Clone)]
struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Propensity-model covariates; the outcome covariates when omitted.
    #[arg(long)]
    propensity_covariates: Option<String>,
    #[arg(long, default_value = "proposed,or,ipw,firpo")]
    methods: String,
    #[arg(long, default_value = "0.85,0.9,0.95,0.995")]
    p: String,
    #[arg(long, default_value = "qte,qtt")]
    estimands: String,
    #[command(flatten)]
    #[serde(flatten)]
    selection: SelectionArgs,
    #[arg(long, default_value_t = 75)]
    bulk_points: usize,
    #[arg(long, default_value_t = 25)]
    extreme_points: usize,
    #[arg(long, default_value_t = 0.9995)]
    tau_max: f64,
    /// Bootstrap replicates; 0 disables standard errors and intervals.
    #[arg(long, default_value_t = eqte::bootstrap::DEFAULT_REPLICATES)]
    bootstrap: usize,
    /// Subsample size for b-out-of-n resampling; 0 resamples n rows.
    #[arg(long, default_value_t = 0)]
    bootstrap_b: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value = "percentile")]
    ci_method: String,
    /// Include treatment-covariate interactions in the outcome regression.
    #[arg(long)]
    or_interactions: bool,
    #[arg(long, default_value_t = 0.01)]
    clamp_lower: f64,
    #[arg(long, default_value_t = 0.99)]
    clamp_upper: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Clone)]
struct SimulateArgs {
    #[arg(long, default_value = "500,1000")]
    n: String,
    #[arg(long, default_value = "gaussian,t1")]
    error: String,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value = "0.85,0.9,0.95,0.995")]
    p: String,
    #[arg(long, default_value = "qte,qtt")]
    estimands: String,
    #[arg(long, default_value = "or,ipw,firpo,proposed")]
    methods: String,
    #[command(flatten)]
    #[serde(flatten)]
    selection: SelectionArgs,
    #[arg(long, default_value_t = 10_000_000)]
    oracle_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes PREFIX.csv, PREFIX.txt and PREFIX.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Clone)]
struct GenerateArgs {
    /// `traffic` (eight site covariates) or `study` (the simulation design).
    #[arg(long, default_value = "traffic")]
    design: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value = "gaussian")]
    error: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Estimation(String),
}

impl Failure {
    fn stage(stage: &str, err: eqte::Error) -> Self {
        let msg = format!("{stage}: {err}");
        if err.is_validation() {
            Failure::Validation(msg)
        } else {
            Failure::Estimation(msg)
        }
    }

    fn invalid(stage: &str, err: eqte::Error) -> Self {
        Failure::Validation(format!("{stage}: {err}"))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Serialize)]
struct Meta<'a, C: Serialize> {
    version: &'static str,
    command: &'static str,
    seed: u64,
    convention: Convention,
    config: &'a C,
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect()
}

fn parse_estimands(s: &str) -> CliResult<Vec<Estimand>> {
    let mut out = Vec::new();
    for part in split_list(s) {
        let e: Estimand = part.parse().map_err(|e| Failure::invalid("arguments", e))?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    if out.is_empty() {
        return Err(Failure::Validation("arguments: no estimands requested".into()));
    }
    Ok(out)
}

fn header_of(path: &Path) -> CliResult<Vec<String>> {
    let file = File::open(path).map_err(|e| Failure::Validation(format!("input: cannot open {}: {e}", path.display())))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    Ok(r
        .headers()
        .map_err(|e| Failure::Validation(format!("input: {}: {e}", path.display())))?
        .iter()
        .map(String::from)
        .collect())
}

/// Reads the outcome, treatment and the union of the covariate lists.
fn load(args: &DataArgs, extra: &[String]) -> CliResult<(Dataset, Vec<String>)> {
    let covariates = match &args.covariates {
        Some(c) => split_list(c),
        None => header_of(&args.data)?
            .into_iter()
            .filter(|h| h != &args.outcome && h != &args.treatment)
            .collect(),
    };
    let mut all = covariates.clone();
    for c in extra {
        if !all.contains(c) {
            all.push(c.clone());
        }
    }
    let file = File::open(&args.data)
        .map_err(|e| Failure::Validation(format!("input: cannot open {}: {e}", args.data.display())))?;
    let data = ingest_csv(io::BufReader::new(file), &args.outcome, &args.treatment, &all)
        .map_err(|e| Failure::invalid(&format!("input {}", args.data.display()), e))?;
    Ok((data, covariates))
}

fn selection_settings(s: &SelectionArgs) -> CliResult<(Vec<f64>, Convention)> {
    if !(s.lambda > 0.0 && s.lambda.is_finite()) {
        return Err(Failure::Validation(format!("arguments: --lambda must be positive, got {}", s.lambda)));
    }
    let levels = parse_level_spec(&s.candidates).map_err(|e| Failure::invalid("arguments: --candidates", e))?;
    let convention = s.convention.parse().map_err(|e| Failure::invalid("arguments: --convention", e))?;
    Ok((levels, convention))
}

fn proposed_config(s: &SelectionArgs, grid: GridConfig) -> CliResult<ProposedConfig> {
    let (candidates, convention) = selection_settings(s)?;
    Ok(ProposedConfig {
        candidates,
        lambda: s.lambda,
        ad_replicates: s.ad_replicates,
        convention,
        grid,
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Estimation(format!("report: {e}")))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")
            .map_err(|e| Failure::Validation(format!("output: cannot write {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ThresholdReport<'a> {
    #[serde(flatten)]
    meta: Meta<'a, ThresholdArgs>,
    selection: &'a TransitionSelection,
}

fn cmd_threshold(args: &ThresholdArgs) -> CliResult<()> {
    let (levels, convention) = selection_settings(&args.selection)?;
    let (data, _) = load(&args.data, &[])?;
    let sel = select_transition(&data, &levels, args.selection.lambda, args.selection.ad_replicates, args.seed, convention)
        .map_err(|e| Failure::stage("threshold selection", e))?;
    let report = ThresholdReport {
        meta: Meta {
            version: VERSION,
            command: "threshold",
            seed: args.seed,
            convention,
            config: args,
        },
        selection: &sel,
    };
    if args.out.is_some() {
        println!("{:>8} {:>12} {:>10} {:>10}", "level", "exceedances", "p-value", "A2");
        for c in &sel.candidates {
            println!(
                "{:>8} {:>12} {:>10.4} {:>10}",
                c.level,
                c.n_exceedances,
                c.p_value,
                c.ad_statistic.map(|a| format!("{a:.4}")).unwrap_or_else(|| "untested".into())
            );
        }
        println!("k_hat = {}, tau_u = {}", sel.k_hat, sel.selected_level);
        for w in &sel.warnings {
            println!("warning: {w}");
        }
    }
    emit_json(&report, args.out.as_deref())
}

#[derive(Serialize)]
struct Cell {
    method: Method,
    estimand: Estimand,
    p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    point: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap_failed_replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transition_level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct BootstrapInfo {
    replicates: usize,
    b: Option<usize>,
    ci_level: f64,
    ci_method: CiMethod,
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    #[serde(flatten)]
    meta: Meta<'a, EstimateArgs>,
    n: usize,
    n_treated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapInfo>,
    results: Vec<Cell>,
    warnings: Vec<String>,
}

fn point_vector(
    data: &Dataset,
    method: Method,
    config: &EstimatorConfig,
    p_list: &[f64],
    estimands: &[Estimand],
    seed: u64,
) -> eqte::Result<Vec<f64>> {
    let r = estimate(data, method, config, p_list, estimands, seed)?;
    let mut out = Vec::with_capacity(p_list.len() * estimands.len());
    for &e in estimands {
        for &p in p_list {
            let hit = r
                .effects
                .iter()
                .find(|x| x.estimand == e && x.p == p)
                .ok_or_else(|| eqte::Error::Internal(format!("missing {e} at p = {p}")))?;
            out.push(hit.point);
        }
    }
    Ok(out)
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let methods = parse_methods(&args.methods).map_err(|e| Failure::invalid("arguments: --methods", e))?;
    let p_list = parse_probability_list(&args.p).map_err(|e| Failure::invalid("arguments: --p", e))?;
    let estimands = parse_estimands(&args.estimands)?;
    if let Some(p) = p_list.iter().find(|&&p| p > args.tau_max) {
        return Err(Failure::Validation(format!("arguments: p = {p} exceeds --tau-max {}", args.tau_max)));
    }
    let ci_method: CiMethod = args.ci_method.parse().map_err(|e| Failure::invalid("arguments: --ci-method", e))?;
    let clamp = eqte::baselines::Clamp::new(args.clamp_lower, args.clamp_upper)
        .map_err(|e| Failure::invalid("arguments: clamp", e))?;
    let proposed = proposed_config(
        &args.selection,
        GridConfig {
            bulk_points: args.bulk_points,
            extreme_points: args.extreme_points,
            tau_max: args.tau_max,
        },
    )?;
    let convention = proposed.convention;
    let prop_cov = args.propensity_covariates.as_deref().map(split_list);
    let (data, covariates) = load(&args.data, prop_cov.as_deref().unwrap_or(&[]))?;
    let config = EstimatorConfig {
        proposed,
        clamp,
        or_interactions: args.or_interactions,
        propensity_covariates: Some(prop_cov.unwrap_or_else(|| covariates.clone())),
        outcome_covariates: Some(covariates),
    };
    let boot = (args.bootstrap > 0).then(|| BootstrapConfig {
        replicates: args.bootstrap,
        seed: args.seed,
        ci_level: args.ci_level,
        ci_method,
    });
    if let Some(b) = &boot {
        if b.replicates < eqte::bootstrap::MIN_REPLICATES {
            return Err(Failure::Validation(format!(
                "arguments: --bootstrap must be 0 or at least {}",
                eqte::bootstrap::MIN_REPLICATES
            )));
        }
        if !(b.ci_level > 0.0 && b.ci_level < 1.0) {
            return Err(Failure::Validation(format!("arguments: --ci-level {} outside (0, 1)", b.ci_level)));
        }
        if args.bootstrap_b != 0 && !(eqte::bootstrap::MIN_SUBSAMPLE..=data.n()).contains(&args.bootstrap_b) {
            return Err(Failure::Validation(format!(
                "arguments: --bootstrap-b must be 0 or within [{}, {}]",
                eqte::bootstrap::MIN_SUBSAMPLE,
                data.n()
            )));
        }
    }

    let mut cells = Vec::new();
    let mut warnings = Vec::new();
    let mut any_ok = false;
    for (mi, &method) in methods.iter().enumerate() {
        let seed = eqte::rng::child_seed(args.seed, mi as u64);
        let result = estimate(&data, method, &config, &p_list, &estimands, seed);
        let result = match result {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("{}: estimation failed: {e}", method.label()));
                for &estimand in &estimands {
                    for &p in &p_list {
                        cells.push(Cell {
                            method,
                            estimand,
                            p,
                            point: None,
                            q1: None,
                            q0: None,
                            se: None,
                            ci_low: None,
                            ci_high: None,
                            bias: None,
                            bootstrap_failed_replicates: None,
                            transition_level: None,
                            error: Some(e.to_string()),
                        });
                    }
                }
                continue;
            }
        };
        any_ok = true;
        warnings.extend(result.warnings.iter().map(|w| format!("{}: {w}", method.label())));
        let summaries: Option<std::result::Result<Vec<BootstrapSummary>, eqte::Error>> = boot.as_ref().map(|b| {
            let b = BootstrapConfig { seed, ..*b };
            let f = |d: &Dataset, s: u64| point_vector(d, method, &config, &p_list, &estimands, s);
            if args.bootstrap_b == 0 {
                full_bootstrap(&data, f, &b)
            } else {
                b_out_of_n_bootstrap(&data, f, args.bootstrap_b, &b)
            }
        });
        if let Some(Err(e)) = &summaries {
            warnings.push(format!("{}: bootstrap failed: {e}", method.label()));
        }
        let mut k = 0;
        for &estimand in &estimands {
            for &p in &p_list {
                let eff = result.effects.iter().find(|x| x.estimand == estimand && x.p == p);
                let s = match &summaries {
                    Some(Ok(v)) => v.get(k),
                    _ => None,
                };
                let boot_err = match &summaries {
                    Some(Err(e)) => Some(format!("bootstrap: {e}")),
                    _ => None,
                };
                cells.push(Cell {
                    method,
                    estimand,
                    p,
                    point: eff.map(|x| x.point),
                    q1: eff.map(|x| x.q1),
                    q0: eff.map(|x| x.q0),
                    se: s.map(|s| s.se),
                    ci_low: s.map(|s| s.ci_low),
                    ci_high: s.map(|s| s.ci_high),
                    bias: s.map(|s| s.bias),
                    bootstrap_failed_replicates: s.map(|s| s.n_failed),
                    transition_level: result.transition_level,
                    error: boot_err,
                });
                k += 1;
            }
        }
    }

    let report = EstimateReport {
        meta: Meta {
            version: VERSION,
            command: "estimate",
            seed: args.seed,
            convention,
            config: args,
        },
        n: data.n(),
        n_treated: data.n_treated(),
        bootstrap: boot.map(|b| BootstrapInfo {
            replicates: b.replicates,
            b: (args.bootstrap_b > 0).then_some(args.bootstrap_b),
            ci_level: b.ci_level,
            ci_method: b.ci_method,
        }),
        results: cells,
        warnings,
    };
    if args.out.is_some() {
        print_cells(&report);
    }
    emit_json(&report, args.out.as_deref())?;
    if !any_ok {
        return Err(Failure::Estimation("estimation: every requested method failed".into()));
    }
    Ok(())
}

fn print_cells(report: &EstimateReport<'_>) {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    println!(
        "{:<9} {:<4} {:>7} {:>12} {:>10} {:>25}",
        "method", "", "p", "estimate", "se", "ci"
    );
    for c in &report.results {
        let ci = match (c.ci_low, c.ci_high) {
            (Some(a), Some(b)) => format!("[{a:.3}, {b:.3}]"),
            _ => "-".into(),
        };
        println!(
            "{:<9} {:<4} {:>7} {:>12} {:>10} {:>25}{}",
            c.method.label(),
            c.estimand.to_string(),
            c.p,
            fmt(c.point),
            fmt(c.se),
            ci,
            c.error.as_ref().map(|e| format!("  ({e})")).unwrap_or_default()
        );
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    #[serde(flatten)]
    meta: Meta<'a, SimulateArgs>,
    design_notes: [&'static str; 3],
    result: &'a eqte::simulation::StudyResult,
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let n_list = split_list(&args.n)
        .iter()
        .map(|s| s.parse::<usize>().map_err(|_| Failure::Validation(format!("arguments: bad sample size {s:?}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let error_kinds = split_list(&args.error)
        .iter()
        .map(|s| s.parse::<ErrorKind>().map_err(|e| Failure::invalid("arguments: --error", e)))
        .collect::<CliResult<Vec<_>>>()?;
    let p_list = parse_probability_list(&args.p).map_err(|e| Failure::invalid("arguments: --p", e))?;
    let methods = parse_methods(&args.methods).map_err(|e| Failure::invalid("arguments: --methods", e))?;
    let estimands = parse_estimands(&args.estimands)?;
    let proposed = proposed_config(&args.selection, GridConfig::default())?;
    let convention = proposed.convention;
    let config = StudyConfig {
        n_list,
        error_kinds,
        p_list,
        estimands,
        methods,
        n_replicates: args.reps,
        seed: args.seed,
        oracle_draws: args.oracle_draws,
        estimator: EstimatorConfig {
            proposed,
            ..EstimatorConfig::default()
        },
    };
    config.validate().map_err(|e| Failure::invalid("arguments", e))?;
    let result = run_study(&config).map_err(|e| Failure::stage("simulation", e))?;
    let table = format!(
        "# eqte {VERSION}; seed {}; convention {convention}\n{}",
        args.seed,
        result.to_table()
    );
    let report = SimulateReport {
        meta: Meta {
            version: VERSION,
            command: "simulate",
            seed: args.seed,
            convention,
            config: args,
        },
        design_notes: [
            "X1 standard deviation 6; X2 exponential with mean 2",
            "t1 errors have unit scale",
            "one error draw per unit shared by both potential outcomes",
        ],
        result: &result,
    };
    match &args.out {
        None => print!("{table}"),
        Some(prefix) => {
            let with_ext = |ext: &str| {
                let mut s = prefix.clone().into_os_string();
                s.push(ext);
                PathBuf::from(s)
            };
            let csv_path = with_ext(".csv");
            let file = File::create(&csv_path)
                .map_err(|e| Failure::Validation(format!("output: cannot write {}: {e}", csv_path.display())))?;
            result.write_csv(BufWriter::new(file)).map_err(|e| Failure::stage("output", e))?;
            let txt = with_ext(".txt");
            std::fs::write(&txt, &table)
                .map_err(|e| Failure::Validation(format!("output: cannot write {}: {e}", txt.display())))?;
            emit_json(&report, Some(&with_ext(".json")))?;
            print!("{table}");
        }
    }
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> CliResult<()> {
    let (data, y, d) = match args.design.as_str() {
        "traffic" => (
            generate_traffic(args.n, args.seed).map_err(|e| Failure::invalid("generate", e))?,
            "aadt",
            "cs",
        ),
        "study" => {
            let error_kind = args.error.parse().map_err(|e| Failure::invalid("arguments: --error", e))?;
            (
                generate_dgp(DgpConfig {
                    n: args.n,
                    error_kind,
                    seed: args.seed,
                })
                .map_err(|e| Failure::invalid("generate", e))?,
                "y",
                "d",
            )
        }
        other => {
            return Err(Failure::Validation(format!(
                "arguments: unknown design {other:?} (expected traffic or study)"
            )))
        }
    };
    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Validation(format!("output: cannot write {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    data.write_csv(sink, y, d).map_err(|e| Failure::stage("output", e))
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("EQTE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Validation(format!("EQTE_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Estimation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Threshold(a) => cmd_threshold(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Generate(a) => cmd_generate(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Estimation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
