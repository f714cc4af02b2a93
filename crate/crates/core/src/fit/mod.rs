//! Fitting recipes: which points to keep, which space to fit in and which
//! optimizer to use for every law, plus prediction from a fitted model.
//!
//! Every pipeline collects its points in a canonical order (compute, then run
//! id, then `k`), so results do not depend on record order.

mod closed;
mod nonlinear;
pub mod space;
mod two_stage;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{
    denormalize_accuracy, normalize_accuracy, samples_for, BenchmarkRegistry, BenchmarkSpec,
    ExperimentRecord, FilterRule, Sample,
};
use crate::error::{Error, Result};
use crate::forms::{Bnsl, Irreducible, Link, NdLaw, PassKLaw, PowerLawLogAcc};
use crate::math::powf;
use crate::optim::FitConfig;

pub use closed::{fit_average, fit_passk, fit_power_law, DEFAULT_AVERAGE_SET};
pub use nonlinear::{fit_bnsl, fit_irreducible, fit_nd_law, CEILING_UNCONSTRAINED, SINGLE_TPR};
pub use two_stage::{fit_proxy_link, fit_two_stage};

/// Compute-to-proxy stage: `L(c) = l0 + a (c / c_ref)^-alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyPowerLaw {
    pub l0: f64,
    pub a: f64,
    pub alpha: f64,
    pub c_ref: f64,
}

impl ProxyPowerLaw {
    pub fn eval(&self, c: f64) -> f64 {
        self.l0 + self.a * powf(c / self.c_ref, -self.alpha)
    }
}

/// Compute → proxy → accuracy chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageModel {
    pub stage1: ProxyPowerLaw,
    pub stage2: Link,
    pub proxy_name: String,
}

impl TwoStageModel {
    pub fn eval(&self, c: f64) -> f64 {
        self.stage2.eval(self.stage1.eval(c))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyLinkModel {
    pub proxy_name: String,
    pub link: Link,
}

/// Direct law on the mean normalized accuracy of several benchmarks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageModel {
    pub law: PowerLawLogAcc,
    pub components: Vec<BenchmarkSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", content = "params", rename_all = "snake_case")]
pub enum Law {
    PowerLaw(PowerLawLogAcc),
    Bnsl(Bnsl),
    NdLaw(NdLaw),
    Irreducible(Irreducible),
    PasskLaw(PassKLaw),
    TwoStage(TwoStageModel),
    ProxyLink(ProxyLinkModel),
    AveragePowerLaw(AverageModel),
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::PowerLaw(_) => "power_law",
            Law::Bnsl(_) => "bnsl",
            Law::NdLaw(_) => "nd_law",
            Law::Irreducible(_) => "irreducible",
            Law::PasskLaw(_) => "passk_law",
            Law::TwoStage(_) => "two_stage",
            Law::ProxyLink(_) => "proxy_link",
            Law::AveragePowerLaw(_) => "average_power_law",
        }
    }

    /// Whether the law returns normalized (chance-corrected) accuracy.
    fn is_normalized(&self) -> bool {
        matches!(
            self,
            Law::PowerLaw(_)
                | Law::NdLaw(_)
                | Law::Irreducible(_)
                | Law::PasskLaw(_)
                | Law::AveragePowerLaw(_)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub train_points: usize,
    /// Final value of the minimized loss in the pipeline's fit space.
    pub objective: f64,
    /// `least_squares`, `huber` or `squared`.
    pub loss: String,
    /// Smallest and largest training compute.
    pub train_range: [f64; 2],
    /// Points dropped after filtering (e.g. pass rates of exactly 0 or 1).
    #[serde(default)]
    pub excluded_points: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
}

/// A fitted law together with the data conventions needed to use it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingModel {
    #[serde(flatten)]
    pub law: Law,
    pub c_ref: f64,
    pub benchmark: String,
    pub q_random: f64,
    pub filter_rule: FilterRule,
    pub fit_stats: FitStats,
}

impl ScalingModel {
    pub fn form(&self) -> &'static str {
        self.law.name()
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.fit_stats.flags.iter().any(|f| f == flag)
    }
}

/// Input of a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    Flops { c: f64 },
    ParamsTokens { n: f64, d: f64 },
    FlopsK { c: f64, k: f64 },
    Proxy { value: f64 },
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Flops { .. } => f.write_str("flops"),
            Query::ParamsTokens { .. } => f.write_str("params/tokens"),
            Query::FlopsK { .. } => f.write_str("flops/k"),
            Query::Proxy { .. } => f.write_str("proxy"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Accuracy on the benchmark's own scale, clamped to `[0, 1]`.
    pub raw: f64,
    /// Chance-corrected accuracy of the clamped raw value.
    pub normalized: f64,
    /// Whether the law's output fell outside `[0, 1]`.
    pub clamped: bool,
}

fn shape_mismatch(model: &ScalingModel, query: &Query) -> Error {
    Error::ShapeMismatch {
        form: model.form().to_string(),
        query: query.to_string(),
    }
}

/// Evaluates the model's law at `query`, returning unclamped accuracy on the
/// law's own scale (normalized or raw).
fn eval_law(model: &ScalingModel, query: &Query) -> Result<f64> {
    match (&model.law, *query) {
        (Law::PowerLaw(l), Query::Flops { c }) => l.eval(c),
        (Law::AveragePowerLaw(m), Query::Flops { c }) => m.law.eval(c),
        (Law::Irreducible(l), Query::Flops { c }) => l.eval(c),
        (Law::Bnsl(l), Query::Flops { c }) => l.eval(c),
        (Law::NdLaw(l), Query::ParamsTokens { n, d }) => l.eval(n, d),
        (Law::PasskLaw(l), Query::FlopsK { c, k }) => l.eval(c, k),
        (Law::TwoStage(m), Query::Flops { c }) => {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "compute must be positive, got {c}"
                )));
            }
            Ok(m.eval(c))
        }
        (Law::ProxyLink(m), Query::Proxy { value }) => Ok(m.link.eval(value)),
        _ => Err(shape_mismatch(model, query)),
    }
}

/// Predicted accuracy for `query`. Raw accuracy is clamped to `[0, 1]` with a
/// flag; the normalized value is derived from the clamped raw value.
pub fn predict(model: &ScalingModel, query: &Query) -> Result<Prediction> {
    let value = eval_law(model, query)?;
    let raw = if model.law.is_normalized() {
        denormalize_accuracy(value, model.q_random)?
    } else {
        value
    };
    if raw.is_nan() {
        return Err(Error::DegenerateFit(format!(
            "{} model produced NaN at {query:?}",
            model.form()
        )));
    }
    let clamped_raw = raw.clamp(0.0, 1.0);
    Ok(Prediction {
        raw: clamped_raw,
        normalized: (clamped_raw - model.q_random) / (1.0 - model.q_random),
        clamped: clamped_raw != raw,
    })
}

/// One observed point a model can be scored on.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint {
    pub run_id: String,
    pub flops: f64,
    pub tpr: f64,
    pub k: Option<u32>,
    pub query: Query,
    /// Observed accuracy on the model's raw scale.
    pub actual: f64,
}

/// Points of `records` a model applies to, filtered by the model's own rule.
/// Returns the points and the number dropped by the filter.
pub fn eval_points(
    model: &ScalingModel,
    records: &[ExperimentRecord],
) -> Result<(Vec<EvalPoint>, usize)> {
    if let Law::AveragePowerLaw(m) = &model.law {
        let avg = closed::average_series(records, &m.components)?;
        let points = avg
            .points
            .into_iter()
            .filter(|p| model.filter_rule.accepts(p.1, 0.0))
            .map(|(r, q)| EvalPoint {
                run_id: r.run_id.clone(),
                flops: r.flops,
                tpr: r.tpr,
                k: None,
                query: Query::Flops { c: r.flops },
                actual: q,
            })
            .collect();
        return Ok((points, avg.excluded));
    }

    if !records
        .iter()
        .any(|r| r.observations_for(&model.benchmark).next().is_some())
    {
        return Err(Error::NotFound(format!(
            "benchmark `{}` in records",
            model.benchmark
        )));
    }
    let passk = matches!(model.law, Law::PasskLaw(_));
    let mut dropped = 0;
    let mut out = Vec::new();
    for s in samples_for(records, &model.benchmark) {
        let applies = if passk {
            s.obs.k.is_some()
        } else {
            s.obs.is_single_sample()
        };
        if !applies {
            continue;
        }
        if !model.filter_rule.accepts(s.value(), model.q_random) {
            dropped += 1;
            continue;
        }
        let query = match &model.law {
            Law::NdLaw(_) => Query::ParamsTokens {
                n: s.record.n_params,
                d: s.record.d_tokens,
            },
            Law::PasskLaw(_) => Query::FlopsK {
                c: s.flops(),
                k: f64::from(s.obs.k.unwrap_or(1)),
            },
            Law::ProxyLink(m) => Query::Proxy {
                value: proxy_of(&s, &m.proxy_name)?,
            },
            _ => Query::Flops { c: s.flops() },
        };
        out.push(EvalPoint {
            run_id: s.run_id().to_string(),
            flops: s.flops(),
            tpr: s.record.tpr,
            k: s.obs.k,
            query,
            actual: s.value(),
        });
    }
    Ok((out, dropped))
}

fn proxy_of(s: &Sample<'_>, name: &str) -> Result<f64> {
    s.obs
        .proxies
        .get(name)
        .copied()
        .ok_or_else(|| Error::MissingProxy(format!("`{name}` for run `{}`", s.run_id())))
}

/// Single-sample observations of `spec` accepted by `rule`, in canonical order.
pub(crate) fn fit_samples<'a>(
    records: &'a [ExperimentRecord],
    spec: &BenchmarkSpec,
    rule: FilterRule,
) -> Result<Vec<Sample<'a>>> {
    spec.validate()?;
    if !records
        .iter()
        .any(|r| r.observations_for(&spec.name).next().is_some())
    {
        return Err(Error::NotFound(format!(
            "benchmark `{}` in records",
            spec.name
        )));
    }
    Ok(samples_for(records, &spec.name)
        .into_iter()
        .filter(|s| s.obs.is_single_sample() && rule.accepts(s.value(), spec.q_random))
        .collect())
}

pub(crate) fn normalized_values(samples: &[Sample<'_>], q_random: f64) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| normalize_accuracy(s.value(), q_random))
        .collect()
}

pub(crate) fn need(got: usize, needed: usize) -> Result<()> {
    if got < needed {
        Err(Error::TooFewPoints { needed, got })
    } else {
        Ok(())
    }
}

pub(crate) fn flops_range<I: IntoIterator<Item = f64>>(flops: I) -> [f64; 2] {
    flops
        .into_iter()
        .fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], c| {
            [lo.min(c), hi.max(c)]
        })
}

/// Which stage-2 link a two-stage fit uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    #[default]
    Linear,
    Logistic,
}

impl FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LinkKind::Linear),
            "logistic" => Ok(LinkKind::Logistic),
            _ => Err(Error::InvalidArgument(format!(
                "unknown link `{s}` (linear|logistic)"
            ))),
        }
    }
}

/// Pipeline selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    PowerLaw,
    Bnsl,
    NdLaw,
    Irreducible,
    Passk,
    TwoStage,
    ProxyLink,
    Average,
}

impl Form {
    pub const ALL: [Form; 8] = [
        Form::PowerLaw,
        Form::Bnsl,
        Form::NdLaw,
        Form::Irreducible,
        Form::Passk,
        Form::TwoStage,
        Form::ProxyLink,
        Form::Average,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Form::PowerLaw => "power_law",
            Form::Bnsl => "bnsl",
            Form::NdLaw => "nd_law",
            Form::Irreducible => "irreducible",
            Form::Passk => "passk",
            Form::TwoStage => "two_stage",
            Form::ProxyLink => "proxy_link",
            Form::Average => "average",
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Form::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown form `{s}`")))
    }
}

/// Everything besides records and optimizer settings that selects a fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRequest {
    pub form: Form,
    /// Benchmark name; ignored by [`Form::Average`].
    pub benchmark: String,
    pub proxy: Option<String>,
    pub link: LinkKind,
    /// Components of [`Form::Average`]; `None` means [`DEFAULT_AVERAGE_SET`].
    pub benchmark_set: Option<Vec<String>>,
}

impl FitRequest {
    pub fn new(form: Form, benchmark: impl Into<String>) -> Self {
        Self {
            form,
            benchmark: benchmark.into(),
            proxy: None,
            link: LinkKind::default(),
            benchmark_set: None,
        }
    }

    pub fn with_proxy(mut self, proxy: impl Into<String>, link: LinkKind) -> Self {
        self.proxy = Some(proxy.into());
        self.link = link;
        self
    }
}

/// Runs the pipeline selected by `req`.
pub fn fit_form(
    records: &[ExperimentRecord],
    registry: &BenchmarkRegistry,
    req: &FitRequest,
    cfg: &FitConfig,
) -> Result<ScalingModel> {
    if req.form == Form::Average {
        return match &req.benchmark_set {
            Some(set) => fit_average(records, registry, set, cfg),
            None => fit_average(records, registry, &DEFAULT_AVERAGE_SET, cfg),
        };
    }
    let spec = registry.get(&req.benchmark)?;
    let proxy = || {
        req.proxy
            .as_deref()
            .ok_or_else(|| Error::MissingProxy(format!("{} fit needs a proxy name", req.form)))
    };
    match req.form {
        Form::PowerLaw => fit_power_law(records, spec, cfg),
        Form::Bnsl => fit_bnsl(records, spec, cfg),
        Form::NdLaw => fit_nd_law(records, spec, cfg),
        Form::Irreducible => fit_irreducible(records, spec, cfg),
        Form::Passk => fit_passk(records, spec, cfg),
        Form::TwoStage => fit_two_stage(records, spec, proxy()?, req.link, cfg),
        Form::ProxyLink => fit_proxy_link(records, spec, proxy()?, cfg),
        Form::Average => unreachable!(),
    }
}
