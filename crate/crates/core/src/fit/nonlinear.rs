//! Robust nonlinear fits: broken power law, parameter/token law and the
//! irreducible-error law.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::space::{
    ln_floor, multistart, BnslSpace, Features, IrreducibleSpace, NdSpace, ResidualObjective,
};
use super::{fit_samples, flops_range, need, normalized_values, FitStats, Law, ScalingModel};
use crate::data::{BenchmarkSpec, ExperimentRecord, FilterRule, Sample, TPR_REL_TOL};
use crate::error::{Error, Result};
use crate::forms::{Bnsl, Irreducible, NdLaw};
use crate::math::{exp, ln, powf, softplus};
use crate::optim::{
    basin_hopping, linear_least_squares, minimize_bounded, Bound, FitConfig, OptResult,
};

/// Flag set when every training point shares one token-to-parameter ratio.
pub const SINGLE_TPR: &str = "single_tpr_ill_posed";
/// Flag set when near-optimal starts disagree on the accuracy ceiling.
pub const CEILING_UNCONSTRAINED: &str = "ceiling_unconstrained";

const EXPONENT_GRID: [f64; 4] = [0.1, 0.3, 0.5, 0.8];
const FLOOR_GRID: [f64; 3] = [0.0, 0.05, 0.2];
const LN_EXPONENT: Bound = (-6.907755278982137, 1.6094379124341003); // [1e-3, 5]
const LN_AMPLITUDE: Bound = (-60.0, 60.0);

/// Near-best starts: objective within this relative margin of the best.
const NEAR_BEST_REL: f64 = 0.1;
const CEILING_SPREAD: f64 = 0.1;
const CEILING_PROFILE_POINTS: usize = 95;

fn log_accuracy_targets(samples: &[Sample<'_>], q_random: f64) -> Result<Vec<f64>> {
    let q = normalized_values(samples, q_random)?;
    samples
        .iter()
        .zip(q)
        .map(|(s, q)| {
            if q > 0.0 && q < 1.0 {
                Ok(-ln(q))
            } else {
                Err(Error::Domain {
                    run_id: s.run_id().into(),
                    message: format!("normalized accuracy {q} outside (0, 1)"),
                })
            }
        })
        .collect()
}

fn stats(
    n: usize,
    best: &OptResult,
    cfg: &FitConfig,
    samples: &[Sample<'_>],
    flags: Vec<String>,
) -> FitStats {
    FitStats {
        train_points: n,
        objective: best.objective,
        loss: cfg.loss.as_str().into(),
        train_range: flops_range(samples.iter().map(|s| s.flops())),
        excluded_points: 0,
        flags,
        rmse: None,
        r2: None,
    }
}

fn count_distinct_tpr(samples: &[Sample<'_>]) -> usize {
    let mut tprs: Vec<f64> = samples.iter().map(|s| s.record.tpr).collect();
    tprs.sort_by(f64::total_cmp);
    let mut groups = 0;
    let mut anchor = f64::NAN;
    for t in tprs {
        if !((t - anchor).abs() <= TPR_REL_TOL * anchor) {
            groups += 1;
            anchor = t;
        }
    }
    groups
}

fn geometric_mean<I: Iterator<Item = f64>>(xs: I) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + ln(x), n + 1));
    exp(sum / n as f64)
}

/// Fits `-ln Q' = A N^-alpha + B D^-beta` by Huber loss in log-accuracy space,
/// starting from every point of the initialization grid.
pub fn fit_nd_law(
    records: &[ExperimentRecord],
    spec: &BenchmarkSpec,
    cfg: &FitConfig,
) -> Result<ScalingModel> {
    cfg.validate()?;
    let rule = cfg.filter.unwrap_or_else(|| spec.margin_rule());
    let samples = fit_samples(records, spec, rule)?;
    need(samples.len(), 5)?;
    let ys = log_accuracy_targets(&samples, spec.q_random)?;
    let n_ref = geometric_mean(samples.iter().map(|s| s.record.n_params));
    let d_ref = geometric_mean(samples.iter().map(|s| s.record.d_tokens));
    let xs: Vec<Features> = samples
        .iter()
        .map(|s| [s.record.n_params / n_ref, s.record.d_tokens / d_ref])
        .collect();

    let starts = if cfg.init_grid.is_empty() {
        let m = samples.len() / 2;
        let half = ln_floor(ys[m] / 2.0);
        let (ln_n, ln_d) = (ln(xs[m][0]), ln(xs[m][1]));
        let mut grid = Vec::new();
        for &alpha in &EXPONENT_GRID {
            for &beta in &EXPONENT_GRID {
                grid.push(vec![
                    half + alpha * ln_n,
                    ln(alpha),
                    half + beta * ln_d,
                    ln(beta),
                ]);
            }
        }
        grid
    } else {
        cfg.init_grid.clone()
    };
    let bounds = [LN_AMPLITUDE, LN_EXPONENT, LN_AMPLITUDE, LN_EXPONENT];
    let objective = ResidualObjective {
        space: &NdSpace,
        xs: &xs,
        ys: &ys,
        loss: cfg.loss,
        delta: cfg.huber_delta,
    };
    let (best_idx, results) = multistart(&objective, &starts, &bounds, cfg)?;
    let best = results[best_idx].as_ref().expect("best start succeeded");
    let th = &best.params;
    let (alpha, beta) = (exp(th[1]), exp(th[3]));
    let law = NdLaw::new(
        exp(th[0] + alpha * ln(n_ref)),
        alpha,
        exp(th[2] + beta * ln(d_ref)),
        beta,
    )?;

    let mut flags = Vec::new();
    if count_distinct_tpr(&samples) < 2 {
        flags.push(SINGLE_TPR.into());
    }
    Ok(ScalingModel {
        law: Law::NdLaw(law),
        c_ref: cfg.c_ref,
        benchmark: spec.name.clone(),
        q_random: spec.q_random,
        filter_rule: rule,
        fit_stats: stats(samples.len(), best, cfg, &samples, flags),
    })
}

/// Profiles the objective over the ceiling: for each `Q_max` on a grid the
/// remaining parameters are refit with `E` pinned. Returns the spread of
/// ceilings whose profile objective is near the best.
fn ceiling_spread(
    objective: &ResidualObjective<'_, IrreducibleSpace>,
    best: &OptResult,
    cfg: &FitConfig,
) -> f64 {
    let cutoff = best.objective * (1.0 + NEAR_BEST_REL) + f64::EPSILON;
    let q_best = exp(-best.params[2]);
    let (mut lo, mut hi) = (q_best, q_best);
    for i in 0..CEILING_PROFILE_POINTS {
        let q_max = 1.0 - i as f64 / CEILING_PROFILE_POINTS as f64;
        let e = -ln(q_max);
        let bounds = [LN_AMPLITUDE, LN_EXPONENT, (e, e)];
        let mut x0 = vec![best.params[0], best.params[1], e];
        crate::optim::project(&mut x0, &bounds);
        if let Ok(r) = minimize_bounded(objective, &x0, &bounds, cfg) {
            if r.objective <= cutoff {
                lo = lo.min(q_max);
                hi = hi.max(q_max);
            }
        }
    }
    hi - lo
}

/// Fits `-ln Q' = A (c / c_ref)^-alpha + E` with `E >= 0`, reporting the
/// ceiling `Q_max = exp(-E)`. Flags the ceiling as unconstrained when
/// near-optimal fits disagree on it by more than 0.1.
pub fn fit_irreducible(
    records: &[ExperimentRecord],
    spec: &BenchmarkSpec,
    cfg: &FitConfig,
) -> Result<ScalingModel> {
    cfg.validate()?;
    let rule = cfg.filter.unwrap_or_else(|| spec.margin_rule());
    let samples = fit_samples(records, spec, rule)?;
    need(samples.len(), 4)?;
    let ys = log_accuracy_targets(&samples, spec.q_random)?;
    let xs: Vec<Features> = samples
        .iter()
        .map(|s| [s.flops() / cfg.c_ref, 0.0])
        .collect();

    let starts = if cfg.init_grid.is_empty() {
        let m = samples.len() / 2;
        let lx = ln(xs[m][0]);
        let mut grid = Vec::new();
        for &alpha in &EXPONENT_GRID {
            for &e in &FLOOR_GRID {
                let amp = (ys[m] - e).max(0.1 * ys[m]);
                grid.push(vec![ln_floor(amp) + alpha * lx, ln(alpha), e]);
            }
        }
        grid
    } else {
        cfg.init_grid.clone()
    };
    let bounds = [LN_AMPLITUDE, LN_EXPONENT, (0.0, 5.0)];
    let objective = ResidualObjective {
        space: &IrreducibleSpace,
        xs: &xs,
        ys: &ys,
        loss: cfg.loss,
        delta: cfg.huber_delta,
    };
    let (best_idx, results) = multistart(&objective, &starts, &bounds, cfg)?;
    let best = results[best_idx].as_ref().expect("best start succeeded");

    let mut flags = Vec::new();
    if ceiling_spread(&objective, best, cfg) > CEILING_SPREAD {
        flags.push(CEILING_UNCONSTRAINED.into());
    }

    let th = &best.params;
    let law = Irreducible::new(exp(th[0]), exp(th[1]), th[2], cfg.c_ref)?;
    Ok(ScalingModel {
        law: Law::Irreducible(law),
        c_ref: cfg.c_ref,
        benchmark: spec.name.clone(),
        q_random: spec.q_random,
        filter_rule: rule,
        fit_stats: stats(samples.len(), best, cfg, &samples, flags),
    })
}

const BNSL_C0_GRID: [f64; 5] = [-0.1, 0.0, 0.1, 0.3, 0.6];
const BNSL_C1_GRID: [f64; 6] = [-1.0, 0.0, 0.5, 1.0, 2.0, 4.0];
const BNSL_F1_GRID: [f64; 3] = [0.25, 1.0, 4.0];
const BNSL_BREAKS: usize = 6;
const BNSL_STARTS: usize = 4;

/// Seeds for the broken power law: for each value of the nonlinear
/// parameters on a grid, the linear pair `(a, b')` is solved exactly; the
/// best few combinations become starting points.
fn bnsl_seeds(xs: &[Features], ys: &[f64], u_range: Bound) -> Vec<Vec<f64>> {
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    let lxs: Vec<f64> = xs.iter().map(|x| ln(x[0])).collect();
    for &c0 in &BNSL_C0_GRID {
        for &c1 in &BNSL_C1_GRID {
            for i in 0..BNSL_BREAKS {
                let u = u_range.0 + (u_range.1 - u_range.0) * i as f64 / (BNSL_BREAKS - 1) as f64;
                for &f1 in &BNSL_F1_GRID {
                    let design: Vec<[f64; 2]> = lxs
                        .iter()
                        .map(|&l| [1.0, exp(-c0 * l - c1 * f1 * softplus((l - u) / f1))])
                        .collect();
                    let Ok(ab) = linear_least_squares(&design, ys) else {
                        continue;
                    };
                    let sse: f64 = design
                        .iter()
                        .zip(ys)
                        .map(|(row, y)| {
                            let r = ab[0] + ab[1] * row[1] - y;
                            r * r
                        })
                        .sum();
                    if sse.is_finite() {
                        scored.push((sse, vec![ab[0], ab[1], c0, c1, u, ln(f1)]));
                    }
                }
            }
        }
    }
    // Stable sort keeps grid order among ties.
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored
        .into_iter()
        .take(BNSL_STARTS)
        .map(|(_, t)| t)
        .collect()
}

/// Fits the broken power law on raw accuracy by Huber loss with basin
/// hopping. The break location is searched in log space within the observed
/// compute range widened by one decade on each side.
pub fn fit_bnsl(
    records: &[ExperimentRecord],
    spec: &BenchmarkSpec,
    cfg: &FitConfig,
) -> Result<ScalingModel> {
    cfg.validate()?;
    let rule = cfg.filter.unwrap_or(FilterRule::AboveFloor);
    let samples = fit_samples(records, spec, rule)?;
    need(samples.len(), 7)?;
    let xs: Vec<Features> = samples
        .iter()
        .map(|s| [s.flops() / cfg.c_ref, 0.0])
        .collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.value()).collect();
    let [c_lo, c_hi] = flops_range(samples.iter().map(|s| s.flops()));
    let decade = ln(10.0);
    let u_range = (ln(c_lo / cfg.c_ref) - decade, ln(c_hi / cfg.c_ref) + decade);
    let bounds = [
        (-5.0, 5.0),
        (-100.0, 100.0),
        (-2.0, 2.0),
        (-20.0, 20.0),
        u_range,
        (ln(0.02), ln(50.0)),
    ];

    let starts = if cfg.init_grid.is_empty() {
        bnsl_seeds(&xs, &ys, u_range)
    } else {
        cfg.init_grid.clone()
    };
    if starts.is_empty() {
        return Err(Error::AllHopsFailed);
    }
    let objective = ResidualObjective {
        space: &BnslSpace,
        xs: &xs,
        ys: &ys,
        loss: cfg.loss,
        delta: cfg.huber_delta,
    };
    let (best_idx, results) = multistart(&objective, &starts, &bounds, cfg)?;
    let seed = results[best_idx].as_ref().expect("best start succeeded");
    let hopped = basin_hopping(&objective, &seed.params, &bounds, cfg)?;
    let best = if hopped.objective <= seed.objective {
        &hopped
    } else {
        seed
    };

    let th = &best.params;
    let law = Bnsl::new(
        th[0],
        th[1] * powf(cfg.c_ref, th[2]),
        th[2],
        th[3],
        cfg.c_ref * exp(th[4]),
        exp(th[5]),
    )?;
    Ok(ScalingModel {
        law: Law::Bnsl(law),
        c_ref: cfg.c_ref,
        benchmark: spec.name.clone(),
        q_random: spec.q_random,
        filter_rule: rule,
        fit_stats: stats(samples.len(), best, cfg, &samples, Vec::new()),
    })
}
