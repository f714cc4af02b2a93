//! Validation metrics, holdout evaluation, the compute-threshold sweep and
//! strategy comparison.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{BenchmarkRegistry, ExperimentRecord, HoldoutRule};
use crate::error::{Error, Result};
use crate::fit::{eval_points, fit_form, predict, FitRequest, ScalingModel};
use crate::math::{exp, ln, sqrt};
use crate::optim::{fit_logistic_binary, FitConfig, LogisticFit};

/// Lowest and highest compute threshold of the default sweep grid.
pub const DEFAULT_SWEEP_RANGE: [f64; 2] = [6e19, 5e22];
pub const DEFAULT_SWEEP_POINTS: usize = 20;
/// A threshold succeeds when validation MRE (percent) is below this.
pub const DEFAULT_SUCCESS_MRE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
        }
    }
}

/// Error summary of predictions against observations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    /// Mean relative error in percent; `None` when an observation is not
    /// strictly positive.
    pub mre_pct: Option<f64>,
    pub rmse: f64,
    /// `None` when the observations have zero variance.
    pub r2: Option<f64>,
}

pub fn compute_metrics(predicted: &[f64], actual: &[f64]) -> Result<Metrics> {
    if predicted.len() != actual.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} predictions for {} observations",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidArgument(
            "metrics need at least one point".into(),
        ));
    }
    if predicted.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("metrics need finite values".into()));
    }
    let n = actual.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut rel = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        let e = p - a;
        abs += e.abs();
        sq += e * e;
        rel += e.abs() / a;
    }
    let mean_a = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean_a) * (a - mean_a)).sum();
    Ok(Metrics {
        mae: abs / n,
        mre_pct: actual.iter().all(|&a| a > 0.0).then(|| 100.0 * rel / n),
        rmse: sqrt(sq / n),
        r2: (ss_tot > 0.0).then(|| 1.0 - sq / ss_tot),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub run_id: String,
    pub flops: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    /// Clamped prediction on the model's output scale.
    pub predicted: f64,
    pub actual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub split: Split,
    /// No point of this split survived the model's filter.
    pub empty: bool,
    pub points: usize,
    /// Points dropped by the model's filter.
    pub excluded: usize,
    /// Predictions clamped into `[0, 1]`.
    pub clamped: usize,
    pub metrics: Option<Metrics>,
    pub residuals: Vec<Residual>,
}

impl ValidationReport {
    fn empty(split: Split, excluded: usize) -> Self {
        Self {
            split,
            empty: true,
            points: 0,
            excluded,
            clamped: 0,
            metrics: None,
            residuals: Vec::new(),
        }
    }

    pub fn mae(&self) -> Option<f64> {
        self.metrics.map(|m| m.mae)
    }

    pub fn mre_pct(&self) -> Option<f64> {
        self.metrics.and_then(|m| m.mre_pct)
    }

    pub fn rmse(&self) -> Option<f64> {
        self.metrics.map(|m| m.rmse)
    }

    pub fn r2(&self) -> Option<f64> {
        self.metrics.and_then(|m| m.r2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub train: ValidationReport,
    pub valid: ValidationReport,
}

/// Splits at observation level: a record contributes each observation to the
/// side `rule` assigns it (pass@k observations may split by `k`). Records
/// left without observations are dropped.
pub fn split_observations(
    records: &[ExperimentRecord],
    rule: &HoldoutRule,
) -> (Vec<ExperimentRecord>, Vec<ExperimentRecord>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for r in records {
        let (out, keep): (Vec<_>, Vec<_>) = r
            .observations
            .iter()
            .cloned()
            .partition(|o| rule.holds_out_at(r.flops, r.tpr, o.k));
        for (side, obs) in [(&mut train, keep), (&mut valid, out)] {
            if !obs.is_empty() {
                side.push(ExperimentRecord {
                    observations: obs,
                    ..r.clone()
                });
            }
        }
    }
    (train, valid)
}

fn report(
    model: &ScalingModel,
    records: &[ExperimentRecord],
    split: Split,
) -> Result<ValidationReport> {
    let (points, excluded) = match eval_points(model, records) {
        Ok(p) => p,
        Err(Error::NotFound(_)) => return Ok(ValidationReport::empty(split, 0)),
        Err(e) => return Err(e),
    };
    if points.is_empty() {
        return Ok(ValidationReport::empty(split, excluded));
    }
    let mut residuals = Vec::with_capacity(points.len());
    let mut clamped = 0;
    for p in &points {
        let pred = predict(model, &p.query)?;
        clamped += usize::from(pred.clamped);
        residuals.push(Residual {
            run_id: p.run_id.clone(),
            flops: p.flops,
            k: p.k,
            predicted: pred.raw,
            actual: p.actual,
        });
    }
    let predicted: Vec<f64> = residuals.iter().map(|r| r.predicted).collect();
    let actual: Vec<f64> = residuals.iter().map(|r| r.actual).collect();
    Ok(ValidationReport {
        split,
        empty: false,
        points: residuals.len(),
        excluded,
        clamped,
        metrics: Some(compute_metrics(&predicted, &actual)?),
        residuals,
    })
}

/// Scores `model` on the train and validation sides of `rule`, using the
/// model's own point filter on both.
pub fn validate_model(
    model: &ScalingModel,
    records: &[ExperimentRecord],
    rule: &HoldoutRule,
) -> Result<Validation> {
    // Surfaces a missing benchmark before the split hides it.
    eval_points(model, records)?;
    let (train, valid) = split_observations(records, rule);
    Ok(Validation {
        train: report(model, &train, Split::Train)?,
        valid: report(model, &valid, Split::Valid)?,
    })
}

type FitFn<'a> = Box<dyn Fn(&[ExperimentRecord]) -> Result<ScalingModel> + 'a>;

/// A named fitting procedure over a record set.
pub struct Strategy<'a> {
    pub name: String,
    fit: FitFn<'a>,
}

impl<'a> Strategy<'a> {
    pub fn new(
        name: impl Into<String>,
        fit: impl Fn(&[ExperimentRecord]) -> Result<ScalingModel> + 'a,
    ) -> Self {
        Self {
            name: name.into(),
            fit: Box::new(fit),
        }
    }

    /// Strategy running the dispatch entry point for `request`.
    pub fn from_request(
        name: impl Into<String>,
        registry: &'a BenchmarkRegistry,
        request: FitRequest,
        cfg: &'a FitConfig,
    ) -> Self {
        Self::new(name, move |recs| fit_form(recs, registry, &request, cfg))
    }

    pub fn fit(&self, records: &[ExperimentRecord]) -> Result<ScalingModel> {
        (self.fit)(records)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    /// Fit and validation both produced a relative error.
    pub evaluable: bool,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_mre_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub success_mre: f64,
    pub points: Vec<ThresholdPoint>,
    /// Success model in `ln T`; absent when evaluable outcomes are all equal.
    pub logistic: Option<LogisticFit>,
    /// Compute where success probability reaches 1/2. When every evaluable
    /// threshold succeeds this is the smallest evaluable threshold.
    pub crossing: Option<f64>,
    pub all_success: bool,
}

impl ThresholdSweep {
    pub fn thresholds(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.threshold).collect()
    }

    pub fn successes(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.success).collect()
    }
}

/// `count` log-uniform thresholds spanning `[lo, hi]`.
pub fn log_thresholds(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || count < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "need 0 < lo < hi and at least two thresholds, got [{lo}, {hi}] x {count}"
        )));
    }
    let (a, b) = (ln(lo), ln(hi));
    Ok((0..count)
        .map(|i| match i {
            0 => lo,
            i if i == count - 1 => hi,
            i => exp(a + (b - a) * i as f64 / (count - 1) as f64),
        })
        .collect())
}

pub fn default_thresholds() -> Vec<f64> {
    log_thresholds(
        DEFAULT_SWEEP_RANGE[0],
        DEFAULT_SWEEP_RANGE[1],
        DEFAULT_SWEEP_POINTS,
    )
    .expect("default sweep range is valid")
}

/// For each threshold `T`: fit on runs with compute `<= T`, validate on runs
/// above it, and call it a success when validation MRE is below
/// `success_mre` percent. A logistic curve in `ln T` is fit to the outcomes.
pub fn threshold_sweep(
    records: &[ExperimentRecord],
    strategy: &Strategy<'_>,
    thresholds: &[f64],
    success_mre: f64,
) -> Result<ThresholdSweep> {
    if thresholds.len() < 2 {
        return Err(Error::InvalidArgument(
            "a sweep needs at least two thresholds".into(),
        ));
    }
    if thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0))
        || thresholds.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidArgument(
            "thresholds must be positive and strictly increasing".into(),
        ));
    }
    if !(success_mre > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "success MRE must be positive, got {success_mre}"
        )));
    }

    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let rule = HoldoutRule::new(t, None)?;
        let (train, _) = split_observations(records, &rule);
        let outcome = strategy
            .fit(&train)
            .and_then(|model| validate_model(&model, records, &rule));
        let point = match outcome {
            Ok(v) => match v.valid.mre_pct() {
                Some(mre) => ThresholdPoint {
                    threshold: t,
                    evaluable: true,
                    success: mre < success_mre,
                    valid_mre_pct: Some(mre),
                    error: None,
                },
                None => ThresholdPoint {
                    threshold: t,
                    evaluable: false,
                    success: false,
                    valid_mre_pct: None,
                    error: Some("no validation points with positive accuracy".into()),
                },
            },
            Err(e) => ThresholdPoint {
                threshold: t,
                evaluable: false,
                success: false,
                valid_mre_pct: None,
                error: Some(e.to_string()),
            },
        };
        points.push(point);
    }

    let evaluated: Vec<&ThresholdPoint> = points.iter().filter(|p| p.evaluable).collect();
    let any_success = evaluated.iter().any(|p| p.success);
    let all_success = !evaluated.is_empty() && evaluated.iter().all(|p| p.success);
    let (logistic, crossing) = if all_success {
        (None, Some(evaluated[0].threshold))
    } else if !any_success {
        (None, None)
    } else {
        let xs: Vec<f64> = evaluated.iter().map(|p| ln(p.threshold)).collect();
        let ys: Vec<bool> = evaluated.iter().map(|p| p.success).collect();
        let fit = fit_logistic_binary(&xs, &ys)?;
        (Some(fit), Some(exp(fit.crossing())))
    };
    Ok(ThresholdSweep {
        success_mre,
        points,
        logistic,
        crossing,
        all_success,
    })
}

/// One strategy's scores: validation MAE/MRE and training RMSE/R², or the
/// error that stopped it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<Validation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StrategyRow {
    pub fn valid_mae(&self) -> Option<f64> {
        self.validation.as_ref().and_then(|v| v.valid.mae())
    }

    pub fn valid_mre_pct(&self) -> Option<f64> {
        self.validation.as_ref().and_then(|v| v.valid.mre_pct())
    }

    pub fn train_rmse(&self) -> Option<f64> {
        self.validation.as_ref().and_then(|v| v.train.rmse())
    }

    pub fn train_r2(&self) -> Option<f64> {
        self.validation.as_ref().and_then(|v| v.train.r2())
    }
}

/// Fits every strategy on the training side of `rule` and scores it on both
/// sides. Failures become error rows.
pub fn compare_strategies(
    records: &[ExperimentRecord],
    strategies: &[Strategy<'_>],
    rule: &HoldoutRule,
) -> Result<Vec<StrategyRow>> {
    if strategies.is_empty() {
        return Err(Error::InvalidArgument("no strategies to compare".into()));
    }
    let (train, _) = split_observations(records, rule);
    Ok(strategies
        .iter()
        .map(|s| {
            match s
                .fit(&train)
                .and_then(|m| validate_model(&m, records, rule))
            {
                Ok(v) => StrategyRow {
                    strategy: s.name.clone(),
                    validation: Some(v),
                    error: None,
                },
                Err(e) => StrategyRow {
                    strategy: s.name.clone(),
                    validation: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MetricObservation, MetricType};

    #[test]
    fn metrics_worked_example() {
        let m = compute_metrics(&[0.5, 0.7], &[0.4, 0.8]).unwrap();
        // Hand arithmetic: errors 0.1, 0.1; relative 0.25, 0.125; SS_res 0.02, SS_tot 0.08.
        assert!((m.mae - 0.1).abs() < 1e-12);
        assert!((m.mre_pct.unwrap() - 18.75).abs() < 1e-9);
        assert!((m.rmse - 0.1).abs() < 1e-12);
        assert!((m.r2.unwrap() - 0.75).abs() < 1e-9);
    }

    #[test]
    fn metrics_identity_and_mean_predictor() {
        let a = [0.2, 0.4, 0.9];
        let m = compute_metrics(&a, &a).unwrap();
        assert_eq!(
            (m.mae, m.mre_pct, m.rmse, m.r2),
            (0.0, Some(0.0), 0.0, Some(1.0))
        );
        let mean = a.iter().sum::<f64>() / 3.0;
        let m = compute_metrics(&[mean; 3], &a).unwrap();
        assert!(m.r2.unwrap().abs() < 1e-12);
    }

    #[test]
    fn metrics_zero_actual_drops_mre_only() {
        let m = compute_metrics(&[0.1, 0.5], &[0.0, 0.4]).unwrap();
        assert_eq!(m.mre_pct, None);
        assert!((m.mae - 0.1).abs() < 1e-12);
        assert!(m.r2.is_some());
        assert!(compute_metrics(&[0.1], &[0.1, 0.2]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn threshold_grid() {
        let t = default_thresholds();
        assert_eq!(t.len(), 20);
        assert_eq!((t[0], t[19]), (6e19, 5e22));
        let ratios: Vec<f64> = t.windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() < 1e-9);
        }
        assert!(log_thresholds(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn observation_level_split() {
        let r = ExperimentRecord::new("r", 1e8, 2e9, None, None, "d")
            .unwrap()
            .with_observation(
                MetricObservation::new("HumanEval", MetricType::PassAtK, 0.1).with_k(1),
            )
            .with_observation(
                MetricObservation::new("HumanEval", MetricType::PassAtK, 0.4).with_k(64),
            );
        let rule = HoldoutRule::default().with_k_holdout_above(32);
        let (train, valid) = split_observations(core::slice::from_ref(&r), &rule);
        assert_eq!(train[0].observations.len(), 1);
        assert_eq!(valid[0].observations[0].k, Some(64));
        let (train, valid) = split_observations(&[r], &HoldoutRule::default());
        assert_eq!((train.len(), valid.len()), (1, 0));
    }
}
