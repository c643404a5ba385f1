use std::fmt::Write as _;

use serde::Serialize;
use survregime::data::{load_survival_csv, load_two_stage_csv, CsvSchema, TwoStageSchema};
use survregime::inference::wald_interval;
use survregime::optimize::{derive_seed, SearchDiagnostics};
use survregime::simulation::{SinglePopulation, TwoStagePopulation};
use survregime::{
    bootstrap_inference, bootstrap_two_stage, compare_to_simple, maximize_value, oracle_value, plugin, run_study,
    BootstrapConfig, Comparison, ErrorDist, EstimatorConfig, Functional, InferenceResult, LinearRegime, LinearSpace,
    Method, NuisanceSpec, OracleTarget, PropensityModel, PsSpec, SearchConfig, SingleStageDesign, Stage1Features,
    StudyDesign, StudyReport, StudySettings, SurvivalSample, TwoStageDesign, TwoStageFit, TwoStagePropensity,
    TwoStageRegime, TwoStageSpace,
};

use crate::config::{
    DataArgs, DesignArg, ErrorArg, OracleArgs, RunConfig, SearchSettings, SimulateArgs, TwoStageConfig,
};

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Core(survregime::Error),
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.class() {
                survregime::ErrorClass::Input => 1,
                survregime::ErrorClass::Fit => 2,
                survregime::ErrorClass::Search => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl From<survregime::Error> for CliError {
    fn from(e: survregime::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// A command's output in both formats.
pub struct Rendered {
    pub json: String,
    pub text: String,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes") + "\n"
}

fn config_line<T: Serialize>(v: &T) -> String {
    format!("# config {}\n", serde_json::to_string(v).expect("config serializes"))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Ipsw => "ipsw",
        Method::Aipsw => "aipsw",
    }
}

enum PsChoice {
    Logistic,
    Constant,
    Known(String),
}

fn parse_ps(s: &str) -> Result<PsChoice> {
    match s {
        "logistic" => Ok(PsChoice::Logistic),
        "constant" => Ok(PsChoice::Constant),
        _ => match s.strip_prefix("known=") {
            Some(v) if !v.is_empty() => Ok(PsChoice::Known(v.to_string())),
            _ => Err(CliError::Usage(format!(
                "--ps must be logistic, constant or known=<column>, got {s:?}"
            ))),
        },
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(CliError::Usage("--time values must be positive".into()));
    }
    Ok(())
}

fn search_config(args: &DataArgs, t: f64, seed: u64) -> SearchConfig {
    SearchConfig {
        population_size: args.population,
        generations: args.generations,
        restarts: args.restarts,
        ..SearchConfig::new(Functional::SurvivalAt { t }, args.smoothing(), seed)
    }
}

fn run_config(args: &DataArgs, command: &'static str, methods: Vec<Method>, threads: Option<usize>) -> RunConfig {
    let base = search_config(args, 1.0, args.seed);
    RunConfig {
        command,
        version: env!("CARGO_PKG_VERSION"),
        input: args.input.clone(),
        time_col: args.time_col.clone(),
        event_col: args.event_col.clone(),
        treatment_col: args.treatment_col.clone(),
        covariates: args.covariates.clone(),
        times: args.times.clone(),
        methods,
        ps: args.ps.clone(),
        smoothing: args.smoothing(),
        seed: args.seed,
        search: SearchSettings {
            population: base.population_size,
            generations: base.generations,
            restarts: base.restarts,
            crossover: base.crossover,
            mutation: base.mutation,
            tolerance: base.tolerance,
        },
        level: args.level,
        bootstrap: args.bootstrap,
        re_optimize: args.re_optimize,
        trace: args.trace,
        two_stage: args.two_stage.then(|| TwoStageConfig {
            interim_time: args.interim_time.unwrap_or(f64::NAN),
            stage1_treatment_col: args.stage1_treatment_col.clone(),
            interim_covariates: args.interim_covariates.clone(),
            stage1_features: args.features(),
            censor_limit: args.limit(),
        }),
        threads,
    }
}

/// Loads the sample; a `known=<column>` propensity column is read alongside
/// the covariates and split off.
fn load_single(args: &DataArgs, ps: &PsChoice) -> Result<(SurvivalSample, PropensityModel)> {
    let mut covs: Vec<&str> = args.covariates.iter().map(String::as_str).collect();
    if let PsChoice::Known(col) = ps {
        covs.push(col);
    }
    let schema = CsvSchema::new(&args.time_col, &args.event_col, &args.treatment_col, &covs);
    let full = load_survival_csv(&args.input, &schema)?;
    match ps {
        PsChoice::Logistic => Ok((full, PropensityModel::Logistic { columns: None })),
        PsChoice::Constant => Ok((full, PropensityModel::Constant)),
        PsChoice::Known(_) => {
            let p = args.covariates.len();
            let probs: Vec<f64> = full.covariates().column(p).collect();
            let sample = SurvivalSample::with_names(
                args.covariates.clone(),
                full.covariates().select_columns(&(0..p).collect::<Vec<_>>()),
                full.treatment().to_vec(),
                full.time().to_vec(),
                full.event().to_vec(),
            )?;
            Ok((sample, PropensityModel::Known(probs)))
        }
    }
}

#[derive(Serialize)]
struct EstimateRow {
    t: f64,
    method: Method,
    /// Coefficient names, intercept first.
    terms: Vec<String>,
    eta: Vec<f64>,
    value: f64,
    wald: InferenceResult,
    bootstrap: Option<InferenceResult>,
    treated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    search: Option<SearchDiagnostics>,
}

#[derive(Serialize)]
struct EstimateOutput {
    config: RunConfig,
    n: usize,
    warnings: Vec<String>,
    results: Vec<EstimateRow>,
}

fn terms(names: &[String]) -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(names.iter().cloned())
        .collect()
}

fn boot_config(args: &DataArgs, replicates: usize, seed: u64) -> BootstrapConfig {
    BootstrapConfig {
        replicates,
        level: args.level,
        seed,
        refit_models: true,
        re_optimize: args.re_optimize,
    }
}

/// Seeds for target time `ti` under method `mi`: search, then bootstrap.
fn seeds(seed: u64, mi: usize, ti: usize) -> (u64, u64) {
    let s = derive_seed(derive_seed(seed, mi as u64), ti as u64);
    (derive_seed(s, 0), derive_seed(s, 1))
}

pub fn estimate(args: &DataArgs, threads: Option<usize>) -> Result<Rendered> {
    check_times(&args.times)?;
    if args.two_stage {
        return estimate_two_stage(args, threads);
    }
    let ps = parse_ps(&args.ps)?;
    let (sample, ps_model) = load_single(args, &ps)?;
    let methods = args.method.methods();
    let p = sample.n_covariates();
    let mut rows = Vec::new();
    for (mi, &method) in methods.iter().enumerate() {
        let spec = NuisanceSpec::new(method, ps_model.clone());
        let fit = spec.fit(&sample)?;
        let est = fit.estimator(&sample)?;
        for (ti, &t) in args.times.iter().enumerate() {
            let (search_seed, boot_seed) = seeds(args.seed, mi, ti);
            let cfg = search_config(args, t, search_seed);
            let found = maximize_value(&est, &LinearSpace { p }, &cfg)?;
            let pl = plugin(&sample, &fit, &found.regime, &cfg.smoothing, t)?;
            let bootstrap = match args.bootstrap {
                Some(b) => Some(
                    bootstrap_inference(&sample, &spec, &found.regime, &cfg, &boot_config(args, b, boot_seed))?.result,
                ),
                None => None,
            };
            let treated = found
                .regime
                .assignments(sample.covariates(), &survregime::SmoothingSpec::hard())?
                .iter()
                .filter(|&&g| g > 0.5)
                .count();
            rows.push((
                ti,
                mi,
                EstimateRow {
                    t,
                    method,
                    terms: terms(sample.covariate_names()),
                    eta: found.regime.eta().to_vec(),
                    value: found.value,
                    wald: wald_interval(found.value, pl.se, args.level),
                    bootstrap,
                    treated,
                    search: args.trace.then_some(found.diagnostics),
                },
            ));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let out = EstimateOutput {
        config: run_config(args, "estimate", methods, threads),
        n: sample.len(),
        warnings: sample.warnings().to_vec(),
        results: rows.into_iter().map(|r| r.2).collect(),
    };
    let mut text = config_line(&out.config);
    let _ = writeln!(text, "n = {}", out.n);
    let _ = writeln!(
        text,
        "{:>10}  {:<6}  {:<40}  {:>7}  {:>6}  {:>17}  {:>17}",
        "t", "method", "eta", "S(t)", "SE", "Wald CI", "bootstrap CI"
    );
    for r in &out.results {
        let boot = r
            .bootstrap
            .as_ref()
            .map_or("-".to_string(), |b| format!("({:.3}, {:.3})", b.ci_lower, b.ci_upper));
        let _ = writeln!(
            text,
            "{:>10}  {:<6}  {:<40}  {:>7.4}  {:>6.4}  {:>17}  {:>17}",
            r.t,
            method_name(r.method),
            fmt_vec(&r.eta),
            r.value,
            r.wald.se,
            format!("({:.3}, {:.3})", r.wald.ci_lower, r.wald.ci_upper),
            boot
        );
    }
    Ok(Rendered {
        json: to_json(&out),
        text,
    })
}

fn two_stage_ps(s: &str) -> Result<TwoStagePropensity> {
    match parse_ps(s)? {
        PsChoice::Logistic => Ok(TwoStagePropensity::Logistic),
        PsChoice::Constant => Ok(TwoStagePropensity::Constant),
        PsChoice::Known(v) => {
            let parts: Vec<f64> = v
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("two-stage known propensities must be numbers, got {v:?}")))?;
            match parts[..] {
                [p] => Ok(TwoStagePropensity::Known { stage0: p, stage1: p }),
                [p0, p1] => Ok(TwoStagePropensity::Known { stage0: p0, stage1: p1 }),
                _ => Err(CliError::Usage(
                    "known= takes one or two probabilities for two-stage data".into(),
                )),
            }
        }
    }
}

#[derive(Serialize)]
struct TwoStageRow {
    t: f64,
    method: Method,
    terms0: Vec<String>,
    terms1: Vec<String>,
    eta0: Vec<f64>,
    eta1: Vec<f64>,
    value: f64,
    /// Normal interval with the bootstrap standard error.
    wald: InferenceResult,
    bootstrap: InferenceResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    search: Option<SearchDiagnostics>,
}

#[derive(Serialize)]
struct TwoStageOutput {
    config: RunConfig,
    n: usize,
    warnings: Vec<String>,
    results: Vec<TwoStageRow>,
}

fn estimate_two_stage(args: &DataArgs, threads: Option<usize>) -> Result<Rendered> {
    if args.method == crate::config::MethodArg::Aipsw {
        return Err(CliError::Usage("two-stage data support the ipsw method only".into()));
    }
    if args.interim_covariates.is_empty() {
        return Err(CliError::Usage("--two-stage needs --interim-covariates".into()));
    }
    let interim = args.interim_time.expect("clap requires --interim-time");
    let schema = TwoStageSchema {
        time: args.time_col.clone(),
        event: args.event_col.clone(),
        stage0_treatment: args.treatment_col.clone(),
        baseline_covariates: args.covariates.clone(),
        stage1_treatment: args.stage1_treatment_col.clone(),
        interim_covariates: args.interim_covariates.clone(),
    };
    let sample = load_two_stage_csv(&args.input, interim, &schema)?;
    let ps = two_stage_ps(&args.ps)?;
    let fit = TwoStageFit::new(&sample, &ps, args.limit())?;
    let est = fit.estimator(&sample)?;
    let space = TwoStageSpace {
        p0: args.covariates.len(),
        p1: args.interim_covariates.len(),
        features: args.features(),
    };
    let terms0 = terms(&args.covariates);
    let terms1 = match args.features() {
        Stage1Features::Full => {
            let mut t = terms(&args.covariates);
            t.push("stage0_rule".into());
            t.extend(args.interim_covariates.iter().cloned());
            t
        }
        Stage1Features::InterimOnly => terms(&args.interim_covariates),
    };
    let replicates = args.bootstrap.unwrap_or(200);
    let mut results = Vec::new();
    for (ti, &t) in args.times.iter().enumerate() {
        let (search_seed, boot_seed) = seeds(args.seed, 0, ti);
        let cfg = search_config(args, t, search_seed);
        let found = maximize_value(&est, &space, &cfg)?;
        let boot = bootstrap_two_stage(
            &sample,
            &ps,
            args.limit(),
            &found.regime,
            &cfg,
            &boot_config(args, replicates, boot_seed),
        )?;
        results.push(TwoStageRow {
            t,
            method: Method::Ipsw,
            terms0: terms0.clone(),
            terms1: terms1.clone(),
            eta0: found.regime.eta0().to_vec(),
            eta1: found.regime.eta1().to_vec(),
            value: found.value,
            wald: wald_interval(found.value, boot.result.se, args.level),
            bootstrap: boot.result,
            search: args.trace.then_some(found.diagnostics),
        });
    }
    let mut config = run_config(args, "estimate", vec![Method::Ipsw], threads);
    config.bootstrap = Some(replicates);
    let out = TwoStageOutput {
        config,
        n: sample.len(),
        warnings: sample.warnings().to_vec(),
        results,
    };
    let mut text = config_line(&out.config);
    let _ = writeln!(text, "n = {}", out.n);
    let _ = writeln!(
        text,
        "{:>10}  {:<26}  {:<40}  {:>7}  {:>6}  {:>17}",
        "t", "eta0", "eta1", "S(t)", "SE", "bootstrap CI"
    );
    for r in &out.results {
        let _ = writeln!(
            text,
            "{:>10}  {:<26}  {:<40}  {:>7.4}  {:>6.4}  {:>17}",
            r.t,
            fmt_vec(&r.eta0),
            fmt_vec(&r.eta1),
            r.value,
            r.bootstrap.se,
            format!("({:.3}, {:.3})", r.bootstrap.ci_lower, r.bootstrap.ci_upper)
        );
    }
    Ok(Rendered {
        json: to_json(&out),
        text,
    })
}

#[derive(Serialize)]
struct CompareRow {
    method: Method,
    terms: Vec<String>,
    eta: Vec<f64>,
    #[serde(flatten)]
    comparison: Comparison,
}

#[derive(Serialize)]
struct CompareOutput {
    config: RunConfig,
    n: usize,
    warnings: Vec<String>,
    results: Vec<CompareRow>,
}

pub fn compare(args: &DataArgs, threads: Option<usize>) -> Result<Rendered> {
    check_times(&args.times)?;
    if args.two_stage {
        return Err(CliError::Usage("compare supports single-stage data only".into()));
    }
    let replicates = args.bootstrap.unwrap_or(500);
    // Fail on a bad bootstrap size before any fitting.
    boot_config(args, replicates, 0).validate()?;
    let ps = parse_ps(&args.ps)?;
    let (sample, ps_model) = load_single(args, &ps)?;
    let methods = args.method.methods();
    let p = sample.n_covariates();
    let mut rows = Vec::new();
    for (mi, &method) in methods.iter().enumerate() {
        let spec = NuisanceSpec::new(method, ps_model.clone());
        let fit = spec.fit(&sample)?;
        let est = fit.estimator(&sample)?;
        for (ti, &t) in args.times.iter().enumerate() {
            let (search_seed, boot_seed) = seeds(args.seed, mi, ti);
            let cfg = search_config(args, t, search_seed);
            let found = maximize_value(&est, &LinearSpace { p }, &cfg)?;
            let boot = boot_config(args, replicates, boot_seed);
            let comparison = compare_to_simple(&sample, &spec, &found.regime, &cfg, args.level, Some(&boot))?;
            rows.push((
                ti,
                mi,
                CompareRow {
                    method,
                    terms: terms(sample.covariate_names()),
                    eta: found.regime.eta().to_vec(),
                    comparison,
                },
            ));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut config = run_config(args, "compare", methods, threads);
    config.bootstrap = Some(replicates);
    let out = CompareOutput {
        config,
        n: sample.len(),
        warnings: sample.warnings().to_vec(),
        results: rows.into_iter().map(|r| r.2).collect(),
    };
    let mut text = config_line(&out.config);
    let _ = writeln!(text, "n = {}", out.n);
    let _ = writeln!(
        text,
        "{:>10}  {:<6}  {:<10}  {:>8}  {:>17}  {:>17}",
        "t", "method", "vs", "diff", "Wald CI", "bootstrap CI"
    );
    for r in &out.results {
        for d in [&r.comparison.vs_treat_all, &r.comparison.vs_treat_none] {
            let boot = d
                .bootstrap
                .as_ref()
                .map_or("-".to_string(), |b| format!("({:.3}, {:.3})", b.ci_lower, b.ci_upper));
            let _ = writeln!(
                text,
                "{:>10}  {:<6}  {:<10}  {:>8.4}  {:>17}  {:>17}",
                r.comparison.t,
                method_name(r.method),
                d.simple,
                d.estimate,
                format!("({:.3}, {:.3})", d.wald.ci_lower, d.wald.ci_upper),
                boot
            );
        }
    }
    Ok(Rendered {
        json: to_json(&out),
        text,
    })
}

fn error_dist(e: ErrorArg) -> ErrorDist {
    match e {
        ErrorArg::Extreme => ErrorDist::ExtremeValue,
        ErrorArg::Logistic => ErrorDist::Logistic,
    }
}

/// `[S-]{I|A}/{T|F}`
fn parse_estimator(label: &str) -> Result<EstimatorConfig> {
    let bad = || CliError::Usage(format!("unknown estimator {label:?}; expected e.g. S-I/T or A/F"));
    let (smoothed, rest) = match label.strip_prefix("S-") {
        Some(r) => (true, r),
        None => (false, label),
    };
    let (m, ps) = rest.split_once('/').ok_or_else(bad)?;
    let method = match m {
        "I" => Method::Ipsw,
        "A" => Method::Aipsw,
        _ => return Err(bad()),
    };
    let ps = match ps {
        "T" => PsSpec::TrueModel,
        "F" => PsSpec::InterceptOnly,
        _ => return Err(bad()),
    };
    Ok(EstimatorConfig::new(method, smoothed, ps))
}

#[derive(Serialize)]
struct SimulateConfig {
    command: &'static str,
    version: &'static str,
    design: DesignArg,
    error: ErrorArg,
    scenario: u8,
    censor: f64,
    n: usize,
    t: f64,
    reps: usize,
    seed: u64,
    estimators: Vec<String>,
    threads: Option<usize>,
}

#[derive(Serialize)]
struct SimulateOutput {
    config: SimulateConfig,
    report: StudyReport,
}

pub fn simulate(args: &SimulateArgs, threads: Option<usize>) -> Result<Rendered> {
    let labels: Vec<String> = args.estimators.clone().unwrap_or_else(|| {
        let d: &[&str] = match args.design {
            DesignArg::Single => &["S-I/T", "S-A/T"],
            DesignArg::TwoStage => &["S-I/T"],
        };
        d.iter().map(|s| s.to_string()).collect()
    });
    let configs = labels.iter().map(|l| parse_estimator(l)).collect::<Result<Vec<_>>>()?;
    let (design, n, t) = match args.design {
        DesignArg::Single => {
            let n = args.n.unwrap_or(250);
            (
                StudyDesign::Single(SingleStageDesign::new(
                    n,
                    error_dist(args.error),
                    args.censor,
                    args.t,
                    0,
                )),
                n,
                args.t,
            )
        }
        DesignArg::TwoStage => {
            let n = args.n.unwrap_or(500);
            let d = TwoStageDesign::new(args.scenario, n, args.censor, 0);
            d.validate()?;
            if configs.iter().any(|c| c.method == Method::Aipsw) {
                return Err(CliError::Usage(
                    "two-stage studies support the I estimators only".into(),
                ));
            }
            (StudyDesign::TwoStage(d), n, d.t())
        }
    };
    let base = StudySettings::new(args.reps, args.seed);
    let settings = StudySettings {
        n_mc: args.n_mc,
        bootstrap: args.bootstrap,
        population_size: args.population.unwrap_or(base.population_size),
        generations: args.generations.unwrap_or(base.generations),
        restarts: args.restarts.unwrap_or(base.restarts),
        ..base
    };
    let report = run_study(&design, &configs, &settings)?;
    let config = SimulateConfig {
        command: "simulate",
        version: env!("CARGO_PKG_VERSION"),
        design: args.design,
        error: args.error,
        scenario: args.scenario,
        censor: args.censor,
        n,
        t,
        reps: args.reps,
        seed: args.seed,
        estimators: labels,
        threads,
    };
    let text = config_line(&config) + &report.to_text();
    let out = SimulateOutput { config, report };
    Ok(Rendered {
        json: to_json(&out),
        text,
    })
}

#[derive(Serialize)]
struct OracleOutput {
    config: OracleConfig,
    value: f64,
    /// Share of the population the regime treats differently from the
    /// optimal one.
    misclassification: f64,
    optimal_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<GridResult>,
}

#[derive(Serialize)]
struct OracleConfig {
    command: &'static str,
    version: &'static str,
    design: DesignArg,
    error: Option<ErrorArg>,
    scenario: Option<u8>,
    eta: Vec<f64>,
    eta1: Option<Vec<f64>>,
    t: f64,
    n_mc: usize,
    seed: u64,
    grid: Option<usize>,
}

#[derive(Serialize)]
struct GridResult {
    steps: usize,
    eta0: Vec<f64>,
    value: f64,
}

pub fn oracle(args: &OracleArgs) -> Result<Rendered> {
    let out = match args.design {
        DesignArg::Single => {
            if args.grid.is_some() {
                return Err(CliError::Usage("--grid applies to the two-stage design".into()));
            }
            let truth = SingleStageDesign::optimal_regime();
            let regime = match &args.eta {
                Some(e) => LinearRegime::new(e.clone())?,
                None => truth.clone(),
            };
            if regime.eta().len() != 3 {
                return Err(CliError::Usage("--eta needs three values: intercept, x1, x2".into()));
            }
            let t = args.t.unwrap_or(2.0);
            let error = error_dist(args.error);
            let value = oracle_value(OracleTarget::Single { regime: &regime, error }, t, args.n_mc, args.seed)?;
            let pop = SinglePopulation::new(error, t, args.n_mc, args.seed);
            OracleOutput {
                config: OracleConfig {
                    command: "oracle",
                    version: env!("CARGO_PKG_VERSION"),
                    design: args.design,
                    error: Some(args.error),
                    scenario: None,
                    eta: regime.eta().to_vec(),
                    eta1: None,
                    t,
                    n_mc: args.n_mc,
                    seed: args.seed,
                    grid: None,
                },
                value,
                misclassification: pop.misclassification(&regime, &truth),
                optimal_value: pop.value(&truth),
                grid: None,
            }
        }
        DesignArg::TwoStage => {
            let d = TwoStageDesign::new(args.scenario, 500, 0.15, 0);
            d.validate()?;
            let truth = d.optimal_regime();
            let regime = TwoStageRegime::new(
                args.eta0.clone().unwrap_or_else(|| truth.eta0().to_vec()),
                args.eta1.clone().unwrap_or_else(|| truth.eta1().to_vec()),
                Stage1Features::InterimOnly,
            )?;
            if regime.eta0().len() != 2 || regime.eta1().len() != 2 {
                return Err(CliError::Usage("--eta0 and --eta1 need two values each".into()));
            }
            let t = args.t.unwrap_or_else(|| d.t());
            let value = oracle_value(
                OracleTarget::TwoStage {
                    regime: &regime,
                    scenario: args.scenario,
                },
                t,
                args.n_mc,
                args.seed,
            )?;
            let pop = TwoStagePopulation::new(args.scenario, t, args.n_mc, args.seed);
            let grid = args.grid.map(|steps| {
                let (r, v) = pop.stage0_grid_search(steps);
                GridResult {
                    steps,
                    eta0: r.eta0().to_vec(),
                    value: v,
                }
            });
            OracleOutput {
                config: OracleConfig {
                    command: "oracle",
                    version: env!("CARGO_PKG_VERSION"),
                    design: args.design,
                    error: None,
                    scenario: Some(args.scenario),
                    eta: regime.eta0().to_vec(),
                    eta1: Some(regime.eta1().to_vec()),
                    t,
                    n_mc: args.n_mc,
                    seed: args.seed,
                    grid: args.grid,
                },
                value,
                misclassification: pop.misclassification(&regime, &truth),
                optimal_value: pop.value(&truth),
                grid,
            }
        }
    };
    let mut text = config_line(&out.config);
    let _ = writeln!(text, "value              {:.4}", out.value);
    let _ = writeln!(text, "optimal value      {:.4}", out.optimal_value);
    let _ = writeln!(text, "misclassification  {:.4}", out.misclassification);
    if let Some(g) = &out.grid {
        let _ = writeln!(
            text,
            "grid ({} angles)   eta0 {}  value {:.4}",
            g.steps,
            fmt_vec(&g.eta0),
            g.value
        );
    }
    Ok(Rendered {
        json: to_json(&out),
        text,
    })
}
