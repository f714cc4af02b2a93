//! Closed-form fits: the direct law and the pass@k law are linear in
//! double-log space and solved by least squares.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{
    fit_samples, flops_range, need, normalized_values, AverageModel, FitStats, Law, ScalingModel,
};
use crate::data::{
    normalize_accuracy, samples_for, BenchmarkRegistry, BenchmarkSpec, ExperimentRecord, FilterRule,
};
use crate::error::{Error, Result};
use crate::forms::{PassKLaw, PowerLawLogAcc};
use crate::math::{exp, ln};
use crate::optim::{linear_least_squares, FitConfig};

/// Benchmarks averaged by default: all built-in benchmarks except GSM8K and LBPP.
pub const DEFAULT_AVERAGE_SET: [&str; 10] = [
    "ARC-E",
    "ARC-C",
    "SciQ",
    "PIQA",
    "HellaSwag",
    "Winogrande",
    "WebQS",
    "TriviaQA",
    "LAMBADA",
    "HumanEval",
];

fn check_open_unit(run_id: &str, q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            run_id: run_id.to_string(),
            message: format!("normalized accuracy {q} outside (0, 1)"),
        })
    }
}

/// Least squares of `ln(-ln Q')` on `ln(c / c_ref)`. Returns the law and half
/// the residual sum of squares.
fn solve_power_law(points: &[(&str, f64, f64)], c_ref: f64) -> Result<(PowerLawLogAcc, f64)> {
    need(points.len(), 2)?;
    let mut design = Vec::with_capacity(points.len());
    let mut targets = Vec::with_capacity(points.len());
    for &(run_id, c, q) in points {
        check_open_unit(run_id, q)?;
        design.push([ln(c / c_ref), 1.0]);
        targets.push(ln(-ln(q)));
    }
    let theta = linear_least_squares(&design, &targets)?;
    let alpha = -theta[0];
    if !(alpha > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "fitted exponent alpha = {alpha} is not positive"
        )));
    }
    let sse: f64 = design
        .iter()
        .zip(&targets)
        .map(|(row, y)| {
            let r = row[0] * theta[0] + theta[1] - y;
            r * r
        })
        .sum();
    Ok((PowerLawLogAcc::new(exp(theta[1]), alpha, c_ref)?, 0.5 * sse))
}

pub fn fit_power_law(
    records: &[ExperimentRecord],
    spec: &BenchmarkSpec,
    cfg: &FitConfig,
) -> Result<ScalingModel> {
    cfg.validate()?;
    let rule = cfg.filter.unwrap_or_else(|| spec.margin_rule());
    let samples = fit_samples(records, spec, rule)?;
    let q = normalized_values(&samples, spec.q_random)?;
    let points: Vec<_> = samples
        .iter()
        .zip(&q)
        .map(|(s, &q)| (s.run_id(), s.flops(), q))
        .collect();
    let (law, objective) = solve_power_law(&points, cfg.c_ref)?;
    Ok(ScalingModel {
        law: Law::PowerLaw(law),
        c_ref: cfg.c_ref,
        benchmark: spec.name.clone(),
        q_random: spec.q_random,
        filter_rule: rule,
        fit_stats: FitStats {
            train_points: points.len(),
            objective,
            loss: "least_squares".into(),
            train_range: flops_range(points.iter().map(|p| p.1)),
            excluded_points: 0,
            flags: Vec::new(),
            rmse: None,
            r2: None,
        },
    })
}

/// Fits `ln(-ln Q) = logA + alpha x + beta ln k + delta x ln k` with
/// `x = ln(c / c_ref)` on every observation carrying `k`. Pass rates of
/// exactly 0 or 1 have no finite transform and are excluded with a count.
pub fn fit_passk(
    records: &[ExperimentRecord],
    spec: &BenchmarkSpec,
    cfg: &FitConfig,
) -> Result<ScalingModel> {
    cfg.validate()?;
    spec.validate()?;
    let rule = cfg.filter.unwrap_or(FilterRule::All);
    if !records
        .iter()
        .any(|r| r.observations_for(&spec.name).next().is_some())
    {
        return Err(Error::NotFound(format!(
            "benchmark `{}` in records",
            spec.name
        )));
    }
    let samples: Vec<_> = samples_for(records, &spec.name)
        .into_iter()
        .filter(|s| s.obs.k.is_some())
        .collect();
    if samples.is_empty() {
        return Err(Error::Schema {
            field: "k".into(),
            message: format!("no `{}` observation carries a k value", spec.name),
        });
    }

    let mut excluded = 0;
    let mut design = Vec::new();
    let mut targets = Vec::new();
    let mut flops = Vec::new();
    for s in samples
        .iter()
        .filter(|s| rule.accepts(s.value(), spec.q_random))
    {
        let q = normalize_accuracy(s.value(), spec.q_random)?;
        if !(q > 0.0 && q < 1.0) {
            excluded += 1;
            continue;
        }
        let x = ln(s.flops() / cfg.c_ref);
        let lk = ln(f64::from(s.obs.k.unwrap_or(1)));
        design.push([1.0, x, lk, x * lk]);
        targets.push(ln(-ln(q)));
        flops.push(s.flops());
    }
    need(design.len(), 4)?;
    let mut distinct_c = flops.clone();
    distinct_c.sort_by(f64::total_cmp);
    distinct_c.dedup();
    need(distinct_c.len(), 3)?;

    let theta = linear_least_squares(&design, &targets)?;
    let sse: f64 = design
        .iter()
        .zip(&targets)
        .map(|(row, y)| {
            let r: f64 = row.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() - y;
            r * r
        })
        .sum();
    Ok(ScalingModel {
        law: Law::PasskLaw(PassKLaw::new(
            theta[0], theta[1], theta[2], theta[3], cfg.c_ref,
        )?),
        c_ref: cfg.c_ref,
        benchmark: spec.name.clone(),
        q_random: spec.q_random,
        filter_rule: rule,
        fit_stats: FitStats {
            train_points: design.len(),
            objective: 0.5 * sse,
            loss: "least_squares".into(),
            train_range: flops_range(flops),
            excluded_points: excluded,
            flags: Vec::new(),
            rmse: None,
            r2: None,
        },
    })
}

pub(crate) struct AverageSeries<'a> {
    /// Record and its mean normalized accuracy, in canonical order.
    pub points: Vec<(&'a ExperimentRecord, f64)>,
    pub excluded: usize,
}

/// Mean normalized accuracy per record over `components`. A record missing a
/// component, or scoring below a component's margin, is excluded entirely.
pub(crate) fn average_series<'a>(
    records: &'a [ExperimentRecord],
    components: &[BenchmarkSpec],
) -> Result<AverageSeries<'a>> {
    if components.is_empty() {
        return Err(Error::InvalidArgument(
            "average needs at least one benchmark".into(),
        ));
    }
    let mut points = Vec::new();
    let mut excluded = 0;
    'records: for r in records {
        let mut sum = 0.0;
        for spec in components {
            let Some(obs) = r.score(&spec.name) else {
                excluded += 1;
                continue 'records;
            };
            if !spec.margin_rule().accepts(obs.value, spec.q_random) {
                excluded += 1;
                continue 'records;
            }
            sum += normalize_accuracy(obs.value, spec.q_random)?;
        }
        points.push((r, sum / components.len() as f64));
    }
    points.sort_by(|a, b| {
        a.0.flops
            .total_cmp(&b.0.flops)
            .then_with(|| a.0.run_id.cmp(&b.0.run_id))
    });
    Ok(AverageSeries { points, excluded })
}

/// Fits the direct law to the per-record mean normalized accuracy of
/// `benchmark_set`. The resulting model has `q_random = 0`.
pub fn fit_average<S: AsRef<str>>(
    records: &[ExperimentRecord],
    registry: &BenchmarkRegistry,
    benchmark_set: &[S],
    cfg: &FitConfig,
) -> Result<ScalingModel> {
    cfg.validate()?;
    let components = benchmark_set
        .iter()
        .map(|name| registry.get(name.as_ref()).cloned())
        .collect::<Result<Vec<_>>>()?;
    let rule = cfg.filter.unwrap_or(FilterRule::All);
    let series = average_series(records, &components)?;
    let points: Vec<_> = series
        .points
        .iter()
        .filter(|(_, q)| rule.accepts(*q, 0.0))
        .map(|(r, q)| (r.run_id.as_str(), r.flops, *q))
        .collect();
    if points.is_empty() {
        return Err(Error::TooFewPoints { needed: 2, got: 0 });
    }
    let (law, objective) = solve_power_law(&points, cfg.c_ref)?;
    Ok(ScalingModel {
        law: Law::AveragePowerLaw(AverageModel { law, components }),
        c_ref: cfg.c_ref,
        benchmark: "average".into(),
        q_random: 0.0,
        filter_rule: rule,
        fit_stats: FitStats {
            train_points: points.len(),
            objective,
            loss: "least_squares".into(),
            train_range: flops_range(points.iter().map(|p| p.1)),
            excluded_points: series.excluded,
            flags: Vec::new(),
            rmse: None,
            r2: None,
        },
    })
}
