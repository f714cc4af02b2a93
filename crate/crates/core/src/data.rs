//! Experiment records, benchmark registry, accuracy normalization, fit-point
//! filtering and holdout splitting.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FLOPs above which runs are held out for validation by default.
pub const DEFAULT_HOLDOUT_FLOPS: f64 = 6e21;

/// Relative slack allowed between a stated token-to-parameter ratio and `D / N`.
pub const TPR_REL_TOL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricType {
    Acc,
    AccNorm,
    ExactMatch,
    PassAtK,
}

impl MetricType {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricType::Acc => "acc",
            MetricType::AccNorm => "acc_norm",
            MetricType::ExactMatch => "exact_match",
            MetricType::PassAtK => "pass_at_k",
        }
    }
}

impl fmt::Display for MetricType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acc" => Ok(MetricType::Acc),
            "acc_norm" => Ok(MetricType::AccNorm),
            "exact_match" => Ok(MetricType::ExactMatch),
            "pass_at_k" | "pass@k" => Ok(MetricType::PassAtK),
            other => Err(Error::Schema {
                field: "metric_type".into(),
                message: format!("unknown metric type `{other}`"),
            }),
        }
    }
}

/// One benchmark score of one run, plus any proxy metrics measured alongside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricObservation {
    pub benchmark: String,
    pub metric_type: MetricType,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub proxies: BTreeMap<String, f64>,
}

impl MetricObservation {
    pub fn new(benchmark: impl Into<String>, metric_type: MetricType, value: f64) -> Self {
        Self {
            benchmark: benchmark.into(),
            metric_type,
            value,
            k: None,
            proxies: BTreeMap::new(),
        }
    }

    pub fn with_k(mut self, k: u32) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_proxy(mut self, name: impl Into<String>, value: f64) -> Self {
        self.proxies.insert(name.into(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.value) {
            return Err(schema("value", format!("{} is outside [0, 1]", self.value)));
        }
        match (self.metric_type, self.k) {
            (MetricType::PassAtK, None) => {
                return Err(schema(
                    "k",
                    "pass_at_k observations need a sample count".into(),
                ))
            }
            (MetricType::PassAtK, Some(0)) => return Err(schema("k", "k must be >= 1".into())),
            (MetricType::PassAtK, Some(_)) => {}
            (_, Some(_)) => {
                return Err(schema(
                    "k",
                    "k is only allowed for pass_at_k observations".into(),
                ))
            }
            (_, None) => {}
        }
        if let Some((name, v)) = self.proxies.iter().find(|(_, v)| !v.is_finite()) {
            return Err(schema("proxy_value", format!("proxy `{name}` is {v}")));
        }
        Ok(())
    }

    /// True for the single-sample score: non pass@k metrics, or pass@1.
    pub fn is_single_sample(&self) -> bool {
        self.k.is_none_or(|k| k == 1)
    }
}

/// One training run with its budget and downstream observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: String,
    pub n_params: f64,
    pub d_tokens: f64,
    pub flops: f64,
    pub tpr: f64,
    pub dataset: String,
    #[serde(default)]
    pub observations: Vec<MetricObservation>,
}

impl ExperimentRecord {
    /// Builds a record, deriving `flops = 6ND` and `tpr = D/N` when absent.
    pub fn new(
        run_id: impl Into<String>,
        n_params: f64,
        d_tokens: f64,
        flops: Option<f64>,
        tpr: Option<f64>,
        dataset: impl Into<String>,
    ) -> Result<Self> {
        let flops = match flops {
            Some(f) => f,
            None => compute_flops(n_params, d_tokens).map_err(|_| {
                schema(
                    "n_params",
                    format!("need positive N and D, got N={n_params} D={d_tokens}"),
                )
            })?,
        };
        let rec = Self {
            run_id: run_id.into(),
            n_params,
            d_tokens,
            flops,
            tpr: tpr.unwrap_or(d_tokens / n_params),
            dataset: dataset.into(),
            observations: Vec::new(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn with_observation(mut self, obs: MetricObservation) -> Self {
        self.observations.push(obs);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(schema("run_id", "empty run id".into()));
        }
        for (field, v) in [
            ("n_params", self.n_params),
            ("d_tokens", self.d_tokens),
            ("flops", self.flops),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(schema(field, format!("must be positive, got {v}")));
            }
        }
        let ratio = self.d_tokens / self.n_params;
        if !(self.tpr.is_finite() && (self.tpr - ratio).abs() <= TPR_REL_TOL * ratio) {
            return Err(schema(
                "tpr",
                format!("{} disagrees with d_tokens / n_params = {ratio}", self.tpr),
            ));
        }
        for obs in &self.observations {
            obs.validate()?;
        }
        Ok(())
    }

    /// Observations for `benchmark`, in stored order.
    pub fn observations_for<'a>(
        &'a self,
        benchmark: &'a str,
    ) -> impl Iterator<Item = &'a MetricObservation> + 'a {
        self.observations
            .iter()
            .filter(move |o| o.benchmark == benchmark)
    }

    /// The single-sample score on `benchmark`, if recorded.
    pub fn score(&self, benchmark: &str) -> Option<&MetricObservation> {
        self.observations
            .iter()
            .find(|o| o.benchmark == benchmark && o.is_single_sample())
    }
}

/// A (record, observation) pair: the unit every fit consumes.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub record: &'a ExperimentRecord,
    pub obs: &'a MetricObservation,
}

impl Sample<'_> {
    pub fn flops(&self) -> f64 {
        self.record.flops
    }

    pub fn value(&self) -> f64 {
        self.obs.value
    }

    pub fn run_id(&self) -> &str {
        &self.record.run_id
    }
}

/// Every observation of `benchmark` across `records`, ordered by
/// (flops, run id, k) so that fits do not depend on input order.
pub fn samples_for<'a>(records: &'a [ExperimentRecord], benchmark: &str) -> Vec<Sample<'a>> {
    let mut out: Vec<Sample<'a>> = records
        .iter()
        .flat_map(|record| {
            record
                .observations
                .iter()
                .filter(|o| o.benchmark == benchmark)
                .map(move |obs| Sample { record, obs })
        })
        .collect();
    out.sort_by(|a, b| {
        a.record
            .flops
            .total_cmp(&b.record.flops)
            .then_with(|| a.record.run_id.cmp(&b.record.run_id))
            .then_with(|| a.obs.k.cmp(&b.obs.k))
    });
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub name: String,
    pub metric_type: MetricType,
    pub q_random: f64,
    pub filter_margin: f64,
}

impl BenchmarkSpec {
    pub fn new(
        name: impl Into<String>,
        metric_type: MetricType,
        q_random: f64,
        filter_margin: f64,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            metric_type,
            q_random,
            filter_margin,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.q_random) {
            return Err(schema(
                "q_random",
                format!("{} is outside [0, 1)", self.q_random),
            ));
        }
        if !(self.filter_margin >= 0.0 && self.filter_margin.is_finite()) {
            return Err(schema(
                "filter_margin",
                format!("{} must be nonnegative", self.filter_margin),
            ));
        }
        Ok(())
    }

    /// The margin rule with this benchmark's configured margin.
    pub fn margin_rule(&self) -> FilterRule {
        FilterRule::Margin(self.filter_margin)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RegistryEntry {
    metric_type: MetricType,
    q_random: f64,
    filter_margin: f64,
}

/// Benchmarks by name. Serializes as `{name: {metric_type, q_random, filter_margin}}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "BTreeMap<String, RegistryEntry>",
    into = "BTreeMap<String, RegistryEntry>"
)]
pub struct BenchmarkRegistry {
    specs: BTreeMap<String, BenchmarkSpec>,
}

impl TryFrom<BTreeMap<String, RegistryEntry>> for BenchmarkRegistry {
    type Error = Error;

    fn try_from(map: BTreeMap<String, RegistryEntry>) -> Result<Self> {
        let mut reg = BenchmarkRegistry::default();
        for (name, e) in map {
            reg.insert(BenchmarkSpec::new(
                name,
                e.metric_type,
                e.q_random,
                e.filter_margin,
            )?);
        }
        Ok(reg)
    }
}

impl From<BenchmarkRegistry> for BTreeMap<String, RegistryEntry> {
    fn from(reg: BenchmarkRegistry) -> Self {
        reg.specs
            .into_iter()
            .map(|(name, s)| {
                (
                    name,
                    RegistryEntry {
                        metric_type: s.metric_type,
                        q_random: s.q_random,
                        filter_margin: s.filter_margin,
                    },
                )
            })
            .collect()
    }
}

impl BenchmarkRegistry {
    /// Chance-level floors for the twelve standard benchmarks. Multiple-choice
    /// floors are the estimated values for `acc_norm`; everything else uses
    /// the plain random-guess baseline.
    pub fn builtin() -> Self {
        use MetricType::*;
        let rows: [(&str, MetricType, f64, f64); 12] = [
            ("ARC-E", AccNorm, 0.2918, 0.05),
            ("ARC-C", AccNorm, 0.2150, 0.05),
            ("SciQ", AccNorm, 0.3039, 0.05),
            ("PIQA", AccNorm, 0.5286, 0.05),
            ("HellaSwag", AccNorm, 0.2518, 0.05),
            ("Winogrande", Acc, 0.5, 0.05),
            ("WebQS", ExactMatch, 0.0, 0.05),
            ("TriviaQA", ExactMatch, 0.0, 0.05),
            ("LAMBADA", Acc, 0.0, 0.05),
            ("GSM8K", ExactMatch, 0.0, 0.05),
            ("HumanEval", PassAtK, 0.0, 0.05),
            ("LBPP", PassAtK, 0.0, 0.02),
        ];
        let mut reg = Self::default();
        for (name, metric, q, margin) in rows {
            reg.insert(BenchmarkSpec {
                name: name.to_string(),
                metric_type: metric,
                q_random: q,
                filter_margin: margin,
            });
        }
        reg
    }

    pub fn insert(&mut self, spec: BenchmarkSpec) -> Option<BenchmarkSpec> {
        self.specs.insert(spec.name.clone(), spec)
    }

    pub fn get(&self, name: &str) -> Result<&BenchmarkSpec> {
        self.specs.get(name).ok_or_else(|| {
            Error::NotFound(format!("benchmark `{name}` (benchmark not registered)"))
        })
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: BenchmarkRegistry) {
        self.specs.extend(other.specs);
    }

    pub fn iter(&self) -> impl Iterator<Item = &BenchmarkSpec> {
        self.specs.values()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// Which points a fit may use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "margin", rename_all = "snake_case")]
pub enum FilterRule {
    /// Keep `value >= q_random + margin`.
    Margin(f64),
    /// Keep `value > q_random`.
    AboveFloor,
    /// Keep everything.
    All,
}

impl FilterRule {
    pub fn accepts(&self, value: f64, q_random: f64) -> bool {
        match *self {
            // Small slack so that `q_random + margin` computed in floating point
            // does not exclude a value sitting exactly on the boundary.
            FilterRule::Margin(m) => value >= q_random + m - 1e-12,
            FilterRule::AboveFloor => value > q_random,
            FilterRule::All => true,
        }
    }
}

impl fmt::Display for FilterRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterRule::Margin(m) => write!(f, "margin({m})"),
            FilterRule::AboveFloor => f.write_str("above_floor"),
            FilterRule::All => f.write_str("all"),
        }
    }
}

/// Runs held out for validation: budget strictly above `flops_threshold`, or
/// trained at `tpr_holdout`. For pass@k data, observations with
/// `k > k_holdout_above` are held out as well.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRule {
    pub flops_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tpr_holdout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_holdout_above: Option<u32>,
}

impl Default for HoldoutRule {
    fn default() -> Self {
        Self {
            flops_threshold: DEFAULT_HOLDOUT_FLOPS,
            tpr_holdout: None,
            k_holdout_above: None,
        }
    }
}

impl HoldoutRule {
    pub fn new(flops_threshold: f64, tpr_holdout: Option<f64>) -> Result<Self> {
        if !(flops_threshold.is_finite() && flops_threshold > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "flops threshold must be positive, got {flops_threshold}"
            )));
        }
        Ok(Self {
            flops_threshold,
            tpr_holdout,
            k_holdout_above: None,
        })
    }

    pub fn with_k_holdout_above(mut self, k: u32) -> Self {
        self.k_holdout_above = Some(k);
        self
    }

    pub fn holds_out(&self, record: &ExperimentRecord) -> bool {
        self.holds_out_at(record.flops, record.tpr, None)
    }

    pub fn holds_out_sample(&self, s: &Sample<'_>) -> bool {
        self.holds_out_at(s.record.flops, s.record.tpr, s.obs.k)
    }

    /// Point-level test on a run's budget, token ratio and sample count.
    pub fn holds_out_at(&self, flops: f64, tpr: f64, k: Option<u32>) -> bool {
        flops > self.flops_threshold
            || self
                .tpr_holdout
                .is_some_and(|t| (tpr - t).abs() <= TPR_REL_TOL * t)
            || matches!((self.k_holdout_above, k), (Some(kmax), Some(k)) if k > kmax)
    }
}

/// Training compute under the `C = 6ND` convention.
pub fn compute_flops(n_params: f64, d_tokens: f64) -> Result<f64> {
    if !(n_params > 0.0 && d_tokens > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "parameters and tokens must be positive, got N={n_params} D={d_tokens}"
        )));
    }
    Ok(6.0 * n_params * d_tokens)
}

fn check_floor(q_random: f64) -> Result<()> {
    if !(0.0..1.0).contains(&q_random) {
        return Err(Error::InvalidArgument(format!(
            "q_random must lie in [0, 1), got {q_random}"
        )));
    }
    Ok(())
}

/// Rescales accuracy so that chance level maps to 0 and a perfect score to 1.
/// Below-chance scores map to negative values.
pub fn normalize_accuracy(q: f64, q_random: f64) -> Result<f64> {
    check_floor(q_random)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "accuracy {q} outside [0, 1]"
        )));
    }
    Ok((q - q_random) / (1.0 - q_random))
}

/// Inverse of [`normalize_accuracy`].
pub fn denormalize_accuracy(q_norm: f64, q_random: f64) -> Result<f64> {
    check_floor(q_random)?;
    Ok(q_random + q_norm * (1.0 - q_random))
}

/// Keeps, per record, only the observations of `spec.name` accepted by `rule`;
/// records left with no such observation are dropped. Order is preserved and
/// observations of other benchmarks are untouched.
pub fn filter_fit_points(
    records: &[ExperimentRecord],
    spec: &BenchmarkSpec,
    rule: FilterRule,
) -> Result<Vec<ExperimentRecord>> {
    if !records.is_empty()
        && !records
            .iter()
            .any(|r| r.observations_for(&spec.name).next().is_some())
    {
        return Err(Error::NotFound(format!(
            "benchmark `{}` in records",
            spec.name
        )));
    }
    let out = records
        .iter()
        .filter_map(|r| {
            let mut kept = false;
            let observations: Vec<MetricObservation> = r
                .observations
                .iter()
                .filter(|o| {
                    if o.benchmark != spec.name {
                        return true;
                    }
                    let ok = rule.accepts(o.value, spec.q_random);
                    kept |= ok;
                    ok
                })
                .cloned()
                .collect();
            kept.then(|| ExperimentRecord {
                observations,
                ..r.clone()
            })
        })
        .collect();
    Ok(out)
}

/// Partitions records into (train, valid) under `rule`; order is preserved.
pub fn split_holdout(
    records: &[ExperimentRecord],
    rule: &HoldoutRule,
) -> (Vec<ExperimentRecord>, Vec<ExperimentRecord>) {
    records.iter().cloned().partition(|r| !rule.holds_out(r))
}

fn schema(field: &str, message: String) -> Error {
    Error::Schema {
        field: field.into(),
        message,
    }
}
