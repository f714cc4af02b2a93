//! The `scalelaw` command line.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data, fit and IO
//! errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use scalelaw_core::data::{HoldoutRule, DEFAULT_HOLDOUT_FLOPS};
use scalelaw_core::eval::{
    default_thresholds, log_thresholds, threshold_sweep, validate_model, Strategy, StrategyRow,
    ThresholdSweep, Validation, ValidationReport, DEFAULT_SUCCESS_MRE,
};
use scalelaw_core::fit::{fit_form, predict, FitRequest, Form, Law, LinkKind, Query, ScalingModel};
use scalelaw_core::synth::{
    generate_grid, paper_coefficient_presets, BenchmarkTruth, GridSpec, GroundTruth, NoiseKind,
};

use crate::config::{Config, SEED_ENV};
use crate::error::{Error, Result};
use crate::io::{self, Format};
use crate::manifest::{write_atomic, RunManifest};
use crate::svg;

#[derive(Debug, Parser)]
#[command(
    name = "scalelaw",
    version,
    about = "Fit, validate and apply downstream-accuracy scaling laws"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one functional form to one benchmark.
    Fit(FitArgs),
    /// Score a fitted model on the train and held-out sides of a compute threshold.
    Validate(ValidateArgs),
    /// Refit below each of a range of compute thresholds and locate where extrapolation starts to work.
    Sweep(SweepArgs),
    /// Evaluate a fitted model at one budget.
    Predict(PredictArgs),
    /// Generate a synthetic experiment grid from known laws.
    Synth(SynthArgs),
    /// Plot fitted models against data and tabulate their validation scores.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config with `benchmarks`, `fit` and `holdout` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Optimizer seed; overrides SCALELAW_SEED and the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitSelect {
    /// Experiment file (.csv or .json).
    #[arg(long)]
    pub input: PathBuf,
    /// Registered benchmark name (ignored by `average`).
    #[arg(long)]
    pub benchmark: Option<String>,
    #[arg(long, value_parser = parse_form)]
    pub form: Form,
    /// Proxy metric for `two_stage` and `proxy_link`.
    #[arg(long)]
    pub proxy: Option<String>,
    #[arg(long, value_parser = parse_link, default_value = "linear")]
    pub link: LinkKind,
    /// Comma-separated components for `average`.
    #[arg(long, value_delimiter = ',')]
    pub benchmarks: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub select: FitSelect,
    #[command(flatten)]
    pub common: Common,
    /// Model JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HoldoutArgs {
    /// Runs above this budget are held out [default: config, else 6e21].
    #[arg(long)]
    pub flops_threshold: Option<f64>,
    /// Runs at this token-to-parameter ratio are held out.
    #[arg(long)]
    pub tpr_holdout: Option<f64>,
    /// pass@k observations with larger k are held out.
    #[arg(long)]
    pub k_holdout_above: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub holdout: HoldoutArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub select: FitSelect,
    #[command(flatten)]
    pub common: Common,
    /// `default` or `min:max:n` (log-spaced).
    #[arg(long, default_value = "default")]
    pub thresholds: String,
    /// Success means validation MRE (percent) below this.
    #[arg(long, default_value_t = DEFAULT_SUCCESS_MRE)]
    pub success_mre: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, conflicts_with_all = ["n", "d", "proxy_value"])]
    pub flops: Option<f64>,
    #[arg(long, requires = "flops")]
    pub k: Option<f64>,
    #[arg(long, requires = "d")]
    pub n: Option<f64>,
    #[arg(long, requires = "n")]
    pub d: Option<f64>,
    #[arg(long, conflicts_with_all = ["n", "d"])]
    pub proxy_value: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Benchmark whose published coefficients drive the generator.
    #[arg(long, conflicts_with = "params", required_unless_present = "params")]
    pub preset: Option<String>,
    /// Law of the preset: `nd_law` or `bnsl`.
    #[arg(long, default_value = "nd_law", requires = "preset")]
    pub law: String,
    /// JSON benchmark truth (or array of them) with `spec` and `truth`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// JSON grid spec; the reference 48 x 5 grid when omitted.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_parser = parse_noise)]
    pub noise: Option<NoiseKind>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (.csv or .json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of model JSON files.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub holdout: HoldoutArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_form(s: &str) -> std::result::Result<Form, String> {
    s.parse().map_err(|e: scalelaw_core::Error| e.to_string())
}

fn parse_link(s: &str) -> std::result::Result<LinkKind, String> {
    s.parse().map_err(|e: scalelaw_core::Error| e.to_string())
}

fn parse_noise(s: &str) -> std::result::Result<NoiseKind, String> {
    match s {
        "none" => Ok(NoiseKind::None),
        "gaussian_accuracy" => Ok(NoiseKind::GaussianAccuracy),
        "gaussian_logit" => Ok(NoiseKind::GaussianLogit),
        _ => Err(format!(
            "unknown noise `{s}` (none|gaussian_accuracy|gaussian_logit)"
        )),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Predict(a) => cmd_predict(&a, stdout),
        Command::Synth(a) => cmd_synth(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = Config::load_or_default(common.config.as_deref())?;
    cfg.resolve_seed(common.seed)?;
    Ok(cfg)
}

fn request(select: &FitSelect, cfg: &Config) -> Result<FitRequest> {
    let benchmark = match (&select.benchmark, select.form) {
        (Some(b), _) => b.clone(),
        (None, Form::Average) => String::new(),
        (None, form) => {
            return Err(Error::Usage(format!(
                "--benchmark is required for --form {form}"
            )))
        }
    };
    let mut req = FitRequest::new(select.form, benchmark);
    if let Some(p) = &select.proxy {
        req = req.with_proxy(p.clone(), select.link);
    }
    req.link = select.link;
    req.benchmark_set = select
        .benchmarks
        .clone()
        .or_else(|| cfg.average_set.clone());
    Ok(req)
}

fn fit_error(req: &FitRequest, source: scalelaw_core::Error) -> Error {
    let benchmark = if req.form == Form::Average {
        "average".to_string()
    } else {
        req.benchmark.clone()
    };
    Error::Fit {
        form: req.form.to_string(),
        benchmark,
        source,
    }
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let req = request(&a.select, &cfg)?;
    let records = io::load_experiments_auto(&a.select.input)?;
    let model =
        fit_form(&records, &cfg.registry(), &req, &cfg.fit).map_err(|e| fit_error(&req, e))?;
    io::write_json(&a.out, &model)?;
    let mut m = RunManifest::new(
        "fit",
        a.common.config.as_deref(),
        vec![a.select.input.clone()],
        cfg.fit.seed,
    );
    m.outputs.push(a.out.clone());
    m.write(&RunManifest::path_for_file(&a.out))
}

fn holdout_rule(h: &HoldoutArgs, cfg: &Config) -> Result<HoldoutRule> {
    let base = cfg.holdout;
    let mut rule = HoldoutRule::new(
        h.flops_threshold.unwrap_or(base.flops_threshold),
        h.tpr_holdout.or(base.tpr_holdout),
    )
    .map_err(|e| Error::Usage(e.to_string()))?;
    rule.k_holdout_above = h.k_holdout_above.or(base.k_holdout_above);
    Ok(rule)
}

/// Shortest round-trip float text, in exponent form when very large or small.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn report_rows(v: &Validation) -> String {
    let mut s = String::from("split,empty,points,excluded,clamped,mae,mre_pct,rmse,r2\n");
    for r in [&v.train, &v.valid] {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.split.as_str(),
            r.empty,
            r.points,
            r.excluded,
            r.clamped,
            opt(r.mae()),
            opt(r.mre_pct()),
            opt(r.rmse()),
            opt(r.r2())
        ));
    }
    s
}

fn residual_rows(reports: [&ValidationReport; 2]) -> String {
    let mut s = String::from("split,run_id,flops,k,predicted,actual\n");
    for r in reports {
        for res in &r.residuals {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.split.as_str(),
                res.run_id,
                num(res.flops),
                res.k.map_or_else(String::new, |k| k.to_string()),
                num(res.predicted),
                num(res.actual)
            ));
        }
    }
    s
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let cfg = Config::load_or_default(a.config.as_deref())?;
    let rule = holdout_rule(&a.holdout, &cfg)?;
    let model = io::load_model(&a.model)?;
    let records = io::load_experiments_auto(&a.input)?;
    let v = validate_model(&model, &records, &rule)?;
    let outputs = [
        (a.out.join("validation.json"), io::to_json(&v)?),
        (a.out.join("validation.csv"), report_rows(&v)),
        (
            a.out.join("residuals.csv"),
            residual_rows([&v.train, &v.valid]),
        ),
    ];
    finish_dir(
        "validate",
        a.config.as_deref(),
        vec![a.model.clone(), a.input.clone()],
        cfg.fit.seed,
        &a.out,
        &outputs,
    )
}

/// Writes every output, then the directory manifest.
fn finish_dir(
    command: &str,
    config: Option<&Path>,
    inputs: Vec<PathBuf>,
    seed: u64,
    dir: &Path,
    outputs: &[(PathBuf, String)],
) -> Result<()> {
    let mut m = RunManifest::new(command, config, inputs, seed);
    for (path, body) in outputs {
        write_atomic(path, body.as_bytes())?;
        m.outputs.push(path.clone());
    }
    m.write(&RunManifest::path_for_dir(dir))
}

fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    if s == "default" {
        return Ok(default_thresholds());
    }
    let bad = || {
        Error::Usage(format!(
            "--thresholds expects `default` or `min:max:n`, got `{s}`"
        ))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    log_thresholds(lo, hi, n).map_err(|e| Error::Usage(e.to_string()))
}

fn strategy_label(req: &FitRequest) -> String {
    match req.form {
        Form::TwoStage => format!("two_stage_{}", link_name(req.link)),
        f => f.to_string(),
    }
}

fn link_name(l: LinkKind) -> &'static str {
    match l {
        LinkKind::Linear => "linear",
        LinkKind::Logistic => "logistic",
    }
}

fn sweep_rows(s: &ThresholdSweep) -> String {
    let mut out = String::from("threshold,evaluable,success,valid_mre_pct,error\n");
    for p in &s.points {
        let err = p.error.as_deref().unwrap_or("").replace('"', "'");
        let err = if err.is_empty() {
            err
        } else {
            format!("\"{err}\"")
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            num(p.threshold),
            p.evaluable,
            p.success,
            opt(p.valid_mre_pct),
            err
        ));
    }
    out
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let thresholds = parse_thresholds(&a.thresholds)?;
    let cfg = load_config(&a.common)?;
    let req = request(&a.select, &cfg)?;
    let records = io::load_experiments_auto(&a.select.input)?;
    let registry = cfg.registry();
    if req.form != Form::Average {
        registry
            .get(&req.benchmark)
            .map_err(|e| fit_error(&req, e))?;
    }
    let label = strategy_label(&req);
    let strategy = Strategy::from_request(label.clone(), &registry, req.clone(), &cfg.fit);
    let sweep = threshold_sweep(&records, &strategy, &thresholds, a.success_mre)
        .map_err(|e| fit_error(&req, e))?;
    let title = format!("{} {label}: success vs. compute threshold", req.benchmark);
    let outputs = [
        (a.out.join("sweep.json"), io::to_json(&sweep)?),
        (a.out.join("sweep.csv"), sweep_rows(&sweep)),
        (
            a.out.join("sweep.svg"),
            svg::sweep_plot(&sweep, title.trim()),
        ),
    ];
    finish_dir(
        "sweep",
        a.common.config.as_deref(),
        vec![a.select.input.clone()],
        cfg.fit.seed,
        &a.out,
        &outputs,
    )
}

fn cmd_predict(a: &PredictArgs, stdout: &mut dyn Write) -> Result<()> {
    let query = match (a.flops, a.k, a.n, a.d, a.proxy_value) {
        (Some(c), None, None, None, None) => Query::Flops { c },
        (Some(c), Some(k), None, None, None) => Query::FlopsK { c, k },
        (None, None, Some(n), Some(d), None) => Query::ParamsTokens { n, d },
        (None, None, None, None, Some(value)) => Query::Proxy { value },
        _ => {
            return Err(Error::Usage(
                "give one of --flops [--k], --n with --d, or --proxy-value".into(),
            ))
        }
    };
    let model = io::load_model(&a.model)?;
    let p = predict(&model, &query)?;
    writeln!(stdout, "{},{},{}", num(p.raw), num(p.normalized), p.clamped)
        .map_err(|e| Error::io("<stdout>", e))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Truths {
    One(BenchmarkTruth),
    Many(Vec<BenchmarkTruth>),
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let format = Format::from_path(&a.out)?;
    let truths = match (&a.preset, &a.params) {
        (Some(name), None) => {
            let presets = paper_coefficient_presets();
            let p = presets.get(name).ok_or_else(|| {
                Error::Core(scalelaw_core::Error::NotFound(format!(
                    "preset `{name}` (benchmark not registered)"
                )))
            })?;
            let truth = match a.law.as_str() {
                "nd_law" => GroundTruth::NdLaw(p.nd_law),
                "bnsl" => GroundTruth::Bnsl(p.bnsl),
                other => {
                    return Err(Error::Usage(format!(
                        "--law must be nd_law or bnsl, got `{other}`"
                    )))
                }
            };
            vec![BenchmarkTruth::new(p.spec(), truth)]
        }
        (None, Some(path)) => match io::read_json_file::<Truths>(path)? {
            Truths::One(t) => vec![t],
            Truths::Many(ts) => ts,
        },
        _ => {
            return Err(Error::Usage(
                "give exactly one of --preset or --params".into(),
            ))
        }
    };
    let mut grid = match &a.grid {
        Some(path) => io::read_json_file::<GridSpec>(path)?,
        None => GridSpec::reference_shape(Vec::new()),
    };
    grid.benchmarks.extend(truths);
    if let Some(kind) = a.noise {
        grid.noise.kind = kind;
    }
    if let Some(sigma) = a.sigma {
        grid.noise.sigma = sigma;
    }
    match a.seed {
        Some(s) => grid.seed = s,
        None => {
            if let Ok(v) = std::env::var(SEED_ENV) {
                grid.seed = v.trim().parse().map_err(|_| {
                    Error::Usage(format!(
                        "{SEED_ENV} must be a non-negative integer, got `{v}`"
                    ))
                })?;
            }
        }
    }
    let records = generate_grid(&grid)?;
    io::save_experiments(&a.out, &records, format)?;
    let inputs = a.params.iter().chain(&a.grid).cloned().collect();
    let mut m = RunManifest::new("synth", None, inputs, grid.seed);
    m.outputs.push(a.out.clone());
    m.write(&RunManifest::path_for_file(&a.out))
}

/// Comparison label: the form, with the link for two-stage models.
pub fn model_label(model: &ScalingModel) -> String {
    match &model.law {
        Law::TwoStage(m) => format!("two_stage_{}", m.stage2.kind()),
        _ => model.form().to_string(),
    }
}

fn is_model_file(path: &Path) -> bool {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    name.ends_with(".json") && !name.ends_with(".manifest.json") && name != "manifest.json"
}

fn comparison_rows(rows: &[(String, String, StrategyRow)]) -> String {
    let mut s = String::from(
        "strategy,benchmark,model,valid_mae,valid_mre_pct,train_rmse,train_r2,error\n",
    );
    for (file, benchmark, r) in rows {
        let err = r.error.as_deref().unwrap_or("").replace('"', "'");
        let err = if err.is_empty() {
            err
        } else {
            format!("\"{err}\"")
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.strategy,
            benchmark,
            file,
            opt(r.valid_mae()),
            opt(r.valid_mre_pct()),
            opt(r.train_rmse()),
            opt(r.train_r2()),
            err
        ));
    }
    s
}

#[derive(serde::Serialize)]
struct ComparisonEntry<'a> {
    model: &'a str,
    benchmark: &'a str,
    #[serde(flatten)]
    row: &'a StrategyRow,
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let cfg = Config::load_or_default(a.config.as_deref())?;
    let rule = holdout_rule(&a.holdout, &cfg)?;
    let records = io::load_experiments_auto(&a.input)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.models)
        .map_err(|e| Error::io(&a.models, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&a.models, err)))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.is_file() && is_model_file(p));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Usage(format!(
            "no model JSON files in `{}`",
            a.models.display()
        )));
    }

    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    for path in &paths {
        let model = io::load_model(path)?;
        let stem = path
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let (validation, error) = match validate_model(&model, &records, &rule) {
            Ok(v) => {
                outputs.push((
                    a.out.join(format!("{stem}.svg")),
                    svg::accuracy_plot(&model, &records, &rule)?,
                ));
                (Some(v), None)
            }
            Err(e) => (None, Some(e.to_string())),
        };
        let file = path
            .file_name()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        rows.push((
            file,
            model.benchmark.clone(),
            StrategyRow {
                strategy: model_label(&model),
                validation,
                error,
            },
        ));
    }
    let entries: Vec<ComparisonEntry<'_>> = rows
        .iter()
        .map(|(file, benchmark, row)| ComparisonEntry {
            model: file,
            benchmark,
            row,
        })
        .collect();
    outputs.push((a.out.join("comparison.json"), io::to_json(&entries)?));
    outputs.push((a.out.join("comparison.csv"), comparison_rows(&rows)));

    let mut inputs = paths.clone();
    inputs.push(a.input.clone());
    finish_dir(
        "report",
        a.config.as_deref(),
        inputs,
        cfg.fit.seed,
        &a.out,
        &outputs,
    )
}

/// Default holdout threshold, exposed for help text and tests.
pub const DEFAULT_FLOPS_THRESHOLD: f64 = DEFAULT_HOLDOUT_FLOPS;
