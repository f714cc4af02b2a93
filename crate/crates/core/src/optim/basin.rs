//! Basin hopping with greedy acceptance.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{minimize_bounded, project, Bound, FitConfig, Objective, OptResult};
use crate::error::{Error, Result};

/// Global search: local minimization from `x0`, then `cfg.basin_hops` rounds
/// of {uniform perturbation of the incumbent by `cfg.basin_step`, local
/// minimization, keep if strictly better}.
///
/// The returned `trace` holds the incumbent objective after the initial
/// search and after each hop, so it is nonincreasing. Deterministic for a
/// given `cfg.seed`. With zero hops this is exactly [`minimize_bounded`].
pub fn basin_hopping<O: Objective + ?Sized>(
    objective: &O,
    x0: &[f64],
    bounds: &[Bound],
    cfg: &FitConfig,
) -> Result<OptResult> {
    let first = minimize_bounded(objective, x0, bounds, cfg);
    if cfg.basin_hops == 0 {
        return first;
    }
    if let Err(e @ Error::InvalidArgument(_)) = &first {
        // Bad dimensions or a start outside the box: hopping cannot help.
        if x0.len() != bounds.len() {
            return Err(e.clone());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<OptResult> = first.ok();
    let mut trace = Vec::with_capacity(cfg.basin_hops + 1);
    let mut iterations = best.as_ref().map_or(0, |b| b.iterations);
    trace.push(best.as_ref().map_or(f64::INFINITY, |b| b.objective));

    let mut start = x0.to_vec();
    for _ in 0..cfg.basin_hops {
        let base = best.as_ref().map_or(x0, |b| b.params.as_slice());
        for (i, (s, &b)) in start.iter_mut().zip(base).enumerate() {
            let h = cfg.step_for(i);
            *s = b + rng.random_range(-h..=h);
        }
        project(&mut start, bounds);
        if let Ok(local) = minimize_bounded(objective, &start, bounds, cfg) {
            iterations += local.iterations;
            if best.as_ref().is_none_or(|b| local.objective < b.objective) {
                best = Some(local);
            }
        }
        trace.push(best.as_ref().map_or(f64::INFINITY, |b| b.objective));
    }

    let mut best = best.ok_or(Error::AllHopsFailed)?;
    best.iterations = iterations;
    best.trace = Some(trace);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn double_well(x: &[f64], g: &mut [f64]) -> f64 {
        let t = x[0];
        g[0] = 4.0 * t * t * t - 8.0 * t + 0.5;
        t * t * t * t - 4.0 * t * t + 0.5 * t
    }

    /// Root of the derivative in [-2, -1] by bisection.
    fn left_well_oracle() -> f64 {
        let d = |t: f64| 4.0 * t * t * t - 8.0 * t + 0.5;
        let (mut lo, mut hi) = (-2.0, -1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if d(lo) * d(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn finds_global_well() {
        let cfg = FitConfig {
            basin_hops: 20,
            basin_step: vec![2.0],
            seed: 7,
            ..FitConfig::default()
        };
        let r = basin_hopping(&double_well, &[1.3], &[(-3.0, 3.0)], &cfg).unwrap();
        let target = left_well_oracle();
        assert!((target + 1.446).abs() < 2e-3);
        assert!((r.params[0] - target).abs() < 1e-6, "{r:?}");
        let trace = r.trace.unwrap();
        assert_eq!(trace.len(), 21);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_hops_is_local_search() {
        let cfg = FitConfig {
            basin_hops: 0,
            ..FitConfig::default()
        };
        let a = basin_hopping(&double_well, &[1.3], &[(-3.0, 3.0)], &cfg).unwrap();
        let b = minimize_bounded(&double_well, &[1.3], &[(-3.0, 3.0)], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convex_matches_local() {
        let quad = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 0.25);
            g[1] = 4.0 * (x[1] + 1.0);
            (x[0] - 0.25) * (x[0] - 0.25) + 2.0 * (x[1] + 1.0) * (x[1] + 1.0)
        };
        let cfg = FitConfig {
            basin_hops: 10,
            ..FitConfig::default()
        };
        let r = basin_hopping(&quad, &[2.0, 2.0], &[(-5.0, 5.0); 2], &cfg).unwrap();
        assert!((r.params[0] - 0.25).abs() < 1e-8 && (r.params[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = FitConfig {
            basin_hops: 15,
            basin_step: vec![1.5],
            seed: 3,
            ..FitConfig::default()
        };
        let a = basin_hopping(&double_well, &[2.0], &[(-3.0, 3.0)], &cfg).unwrap();
        let b = basin_hopping(&double_well, &[2.0], &[(-3.0, 3.0)], &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace, b.trace);
    }
}
