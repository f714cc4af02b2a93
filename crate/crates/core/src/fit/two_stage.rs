//! Fits that go through an intermediate proxy metric.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::space::{
    ln_floor, multistart, Features, LogisticLinkSpace, ProxyLogisticSpace, ProxyPowerSpace,
    ResidualObjective,
};
use super::{
    fit_samples, flops_range, need, proxy_of, FitStats, Law, LinkKind, ProxyLinkModel,
    ProxyPowerLaw, ScalingModel, TwoStageModel,
};
use crate::data::{BenchmarkSpec, ExperimentRecord, FilterRule};
use crate::error::{Error, Result};
use crate::forms::Link;
use crate::math::{exp, ln, logit, mean, sigmoid, sqrt};
use crate::optim::{linear_least_squares, minimize_bounded, Bound, FitConfig, Loss};

const EXPONENT_GRID: [f64; 4] = [0.1, 0.3, 0.5, 0.8];
const LEVEL_OFFSETS: [f64; 4] = [0.1, 0.5, 1.0, 3.0];
const SLOPE_GRID: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
const CENTER_POINTS: usize = 7;
const LINK_STARTS: usize = 4;

fn span(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Stage 1: `L(c) = l0 + a (c / c_ref)^-alpha` by robust loss.
fn fit_stage1(flops: &[f64], ls: &[f64], cfg: &FitConfig) -> Result<(ProxyPowerLaw, f64)> {
    let xs: Vec<Features> = flops.iter().map(|&c| [c / cfg.c_ref, 0.0]).collect();
    let (lmin, lmax) = span(ls);
    let r = (lmax - lmin).max(1e-12);
    let m = ls.len() / 2;
    let lx = ln(xs[m][0]);
    let starts = if cfg.init_grid.is_empty() {
        let mut grid = Vec::new();
        for &off in &LEVEL_OFFSETS {
            let l0 = lmin - off * r;
            for &alpha in &EXPONENT_GRID {
                grid.push(vec![l0, ln_floor(ls[m] - l0) + alpha * lx, ln(alpha)]);
            }
        }
        grid
    } else {
        cfg.init_grid.clone()
    };
    let bounds = [(lmin - 20.0 * r, lmin), (-60.0, 60.0), (ln(1e-3), ln(5.0))];
    let objective = ResidualObjective {
        space: &ProxyPowerSpace,
        xs: &xs,
        ys: ls,
        loss: cfg.loss,
        delta: cfg.huber_delta,
    };
    let (best_idx, results) = multistart(&objective, &starts, &bounds, cfg)?;
    let best = results[best_idx].as_ref().expect("best start succeeded");
    let th = &best.params;
    Ok((
        ProxyPowerLaw {
            l0: th[0],
            a: exp(th[1]),
            alpha: exp(th[2]),
            c_ref: cfg.c_ref,
        },
        best.objective,
    ))
}

fn half_sse(pred: impl Iterator<Item = f64>, ys: &[f64]) -> f64 {
    0.5 * pred.zip(ys).map(|(p, y)| (p - y) * (p - y)).sum::<f64>()
}

/// `Acc = a sigmoid(k (L - L0)) + b`, seeded by solving `(a, b)` exactly on a
/// grid of `(k, L0)`.
fn fit_logistic_link(ls: &[f64], accs: &[f64], cfg: &FitConfig) -> Result<(Link, f64)> {
    let (lmin, lmax) = span(ls);
    let r = (lmax - lmin).max(1e-12);
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    for sign in [-1.0, 1.0] {
        for &k in &SLOPE_GRID {
            let k = sign * k / r;
            for i in 0..CENTER_POINTS {
                let l0 = lmin - r + 3.0 * r * i as f64 / (CENTER_POINTS - 1) as f64;
                let design: Vec<[f64; 2]> =
                    ls.iter().map(|&l| [sigmoid(k * (l - l0)), 1.0]).collect();
                let Ok(ab) = linear_least_squares(&design, accs) else {
                    continue;
                };
                if ab[0] < 0.0 {
                    continue;
                }
                let sse = half_sse(design.iter().map(|row| ab[0] * row[0] + ab[1]), accs);
                scored.push((sse, vec![ab[0], ab[1], k, l0]));
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let starts: Vec<Vec<f64>> = scored
        .into_iter()
        .take(LINK_STARTS)
        .map(|(_, t)| t)
        .collect();
    if starts.is_empty() {
        return Err(Error::DegenerateFit(
            "no admissible logistic link start".into(),
        ));
    }
    let xs: Vec<Features> = ls.iter().map(|&l| [l, 0.0]).collect();
    let kmax = 1e3 / r;
    let bounds: [Bound; 4] = [
        (0.0, 10.0),
        (-10.0, 10.0),
        (-kmax, kmax),
        (lmin - 10.0 * r, lmax + 10.0 * r),
    ];
    let objective = ResidualObjective {
        space: &LogisticLinkSpace,
        xs: &xs,
        ys: accs,
        loss: cfg.loss,
        delta: cfg.huber_delta,
    };
    let (best_idx, results) = multistart(&objective, &starts, &bounds, cfg)?;
    let best = results[best_idx].as_ref().expect("best start succeeded");
    let th = &best.params;
    Ok((
        Link::Logistic {
            a: th[0],
            b: th[1],
            k: th[2],
            l0: th[3],
        },
        best.objective,
    ))
}

fn check_variance(accs: &[f64]) -> Result<()> {
    let (lo, hi) = span(accs);
    if hi - lo <= 0.0 {
        return Err(Error::DegenerateFit("zero accuracy variance".into()));
    }
    Ok(())
}

/// Compute → proxy → accuracy. Stage 1 fits the proxy against compute; stage
/// 2 fits the link on observed (proxy, accuracy) pairs only.
pub fn fit_two_stage(
    records: &[ExperimentRecord],
    spec: &BenchmarkSpec,
    proxy_name: &str,
    link_kind: LinkKind,
    cfg: &FitConfig,
) -> Result<ScalingModel> {
    cfg.validate()?;
    let rule = cfg.filter.unwrap_or_else(|| spec.margin_rule());
    let samples = fit_samples(records, spec, rule)?;
    need(samples.len(), 5)?;
    let ls = samples
        .iter()
        .map(|s| proxy_of(s, proxy_name))
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = samples.iter().map(|s| s.value()).collect();
    let flops: Vec<f64> = samples.iter().map(|s| s.flops()).collect();
    check_variance(&accs)?;

    let (stage1, obj1) = fit_stage1(&flops, &ls, cfg)?;
    let (stage2, obj2, loss2) = match link_kind {
        LinkKind::Linear => {
            let design: Vec<[f64; 2]> = ls.iter().map(|&l| [1.0, l]).collect();
            let ab = linear_least_squares(&design, &accs)?;
            let sse = half_sse(ls.iter().map(|&l| ab[0] + ab[1] * l), &accs);
            (Link::Linear { a: ab[0], b: ab[1] }, sse, "least_squares")
        }
        LinkKind::Logistic => {
            let (link, obj) = fit_logistic_link(&ls, &accs, cfg)?;
            (link, obj, cfg.loss.as_str())
        }
    };
    Ok(ScalingModel {
        law: Law::TwoStage(TwoStageModel {
            stage1,
            stage2,
            proxy_name: proxy_name.into(),
        }),
        c_ref: cfg.c_ref,
        benchmark: spec.name.clone(),
        q_random: spec.q_random,
        filter_rule: rule,
        fit_stats: FitStats {
            train_points: samples.len(),
            objective: obj1 + obj2,
            loss: format!("{}+{}", cfg.loss.as_str(), loss2),
            train_range: flops_range(flops),
            excluded_points: 0,
            flags: Vec::new(),
            rmse: None,
            r2: None,
        },
    })
}

/// `Acc = 1 / (1 + exp(-a L + b))` by least squares on accuracy, seeded from
/// a linear fit in logit space. Reports training RMSE and R².
pub fn fit_proxy_link(
    records: &[ExperimentRecord],
    spec: &BenchmarkSpec,
    proxy_name: &str,
    cfg: &FitConfig,
) -> Result<ScalingModel> {
    cfg.validate()?;
    let rule = cfg.filter.unwrap_or(FilterRule::All);
    let samples = fit_samples(records, spec, rule)?;
    need(samples.len(), 4)?;
    let ls = samples
        .iter()
        .map(|s| proxy_of(s, proxy_name))
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = samples.iter().map(|s| s.value()).collect();

    let design: Vec<[f64; 2]> = ls.iter().map(|&l| [l, 1.0]).collect();
    let logits: Vec<f64> = accs
        .iter()
        .map(|&q| logit(q.clamp(1e-3, 1.0 - 1e-3)))
        .collect();
    let init = linear_least_squares(&design, &logits)?;
    let x0 = [init[0], -init[1]];
    let reach = 1e3 * (1.0 + x0[0].abs().max(x0[1].abs()));
    let bounds = [(-reach, reach); 2];

    let xs: Vec<Features> = ls.iter().map(|&l| [l, 0.0]).collect();
    let objective = ResidualObjective {
        space: &ProxyLogisticSpace,
        xs: &xs,
        ys: &accs,
        loss: Loss::Squared,
        delta: cfg.huber_delta,
    };
    let best = minimize_bounded(&objective, &x0, &bounds, cfg)?;
    let (a, b) = (best.params[0], best.params[1]);

    let pred: Vec<f64> = ls.iter().map(|&l| sigmoid(a * l - b)).collect();
    let n = accs.len() as f64;
    let ss_res: f64 = pred.iter().zip(&accs).map(|(p, y)| (p - y) * (p - y)).sum();
    let m = mean(&accs);
    let ss_tot: f64 = accs.iter().map(|y| (y - m) * (y - m)).sum();
    Ok(ScalingModel {
        law: Law::ProxyLink(ProxyLinkModel {
            proxy_name: proxy_name.into(),
            link: Link::ProxyLogistic { a, b },
        }),
        c_ref: cfg.c_ref,
        benchmark: spec.name.clone(),
        q_random: spec.q_random,
        filter_rule: rule,
        fit_stats: FitStats {
            train_points: samples.len(),
            objective: best.objective,
            loss: Loss::Squared.as_str().into(),
            train_range: flops_range(samples.iter().map(|s| s.flops())),
            excluded_points: 0,
            flags: Vec::new(),
            rmse: Some(sqrt(ss_res / n)),
            r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        },
    })
}
