//! Bounded limited-memory quasi-Newton minimization.
//!
//! Projected L-BFGS: variables sitting on a bound with the gradient pushing
//! outward are frozen for the iteration, the two-loop recursion runs on the
//! remaining free coordinates, and an Armijo backtracking search follows the
//! projected path `P(x + t d)`.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{project, Bound, FitConfig, Objective, OptResult};
use crate::error::{Error, Result};
use crate::math::sqrt;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_masked(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(free)
        .filter(|(_, &f)| f)
        .map(|((x, y), _)| x * y)
        .sum()
}

fn free_mask(x: &[f64], g: &[f64], bounds: &[Bound]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(lo, hi))| !((xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0)))
        .collect()
}

fn projected_grad_norm(g: &[f64], free: &[bool]) -> f64 {
    g.iter()
        .zip(free)
        .filter(|(_, &f)| f)
        .fold(0.0_f64, |m, (gi, _)| m.max(gi.abs()))
}

/// Minimizes `objective` over the box `bounds` starting from `x0`.
///
/// The result lies inside the box and its objective never exceeds `f(x0)`.
/// `converged` is set when the projected-gradient infinity norm reaches
/// `cfg.grad_tol`; otherwise the search stopped on `max_iters` or because no
/// further decrease was representable.
pub fn minimize_bounded<O: Objective + ?Sized>(
    objective: &O,
    x0: &[f64],
    bounds: &[Bound],
    cfg: &FitConfig,
) -> Result<OptResult> {
    cfg.validate()?;
    let n = x0.len();
    if bounds.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} bounds for {n} parameters",
            bounds.len()
        )));
    }
    for (i, (&xi, &(lo, hi))) in x0.iter().zip(bounds).enumerate() {
        if !(lo <= hi) || !(lo <= xi && xi <= hi) {
            return Err(Error::InvalidArgument(format!(
                "x0[{i}] = {xi} is outside [{lo}, {hi}]"
            )));
        }
    }

    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective.value_grad(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "objective is not finite at x0 ({f})"
        )));
    }

    let memory = cfg.memory.max(1);
    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(memory);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut alphas = vec![0.0; memory];

    while iterations < cfg.max_iters {
        let free = free_mask(&x, &g, bounds);
        if projected_grad_norm(&g, &free) <= cfg.grad_tol {
            converged = true;
            break;
        }

        // Two-loop recursion restricted to the free coordinates.
        for ((di, &gi), &fr) in d.iter_mut().zip(&g).zip(&free) {
            *di = if fr { gi } else { 0.0 };
        }
        for (i, p) in pairs.iter().enumerate().rev() {
            let a = p.rho * dot_masked(&p.s, &d, &free);
            alphas[i] = a;
            for ((di, yi), &fr) in d.iter_mut().zip(&p.y).zip(&free) {
                if fr {
                    *di -= a * yi;
                }
            }
        }
        let gamma = match pairs.back() {
            Some(p) => dot(&p.s, &p.y) / dot(&p.y, &p.y),
            None => 1.0 / sqrt(dot_masked(&g, &g, &free)).max(1e-300),
        };
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for (i, p) in pairs.iter().enumerate() {
            let beta = p.rho * dot_masked(&p.y, &d, &free);
            for ((di, si), &fr) in d.iter_mut().zip(&p.s).zip(&free) {
                if fr {
                    *di += si * (alphas[i] - beta);
                }
            }
        }
        for di in d.iter_mut() {
            *di = -*di;
        }
        if dot(&d, &g) >= 0.0 {
            pairs.clear();
            let gn = sqrt(dot_masked(&g, &g, &free)).max(1e-300);
            for ((di, &gi), &fr) in d.iter_mut().zip(&g).zip(&free) {
                *di = if fr { -gi / gn } else { 0.0 };
            }
        }

        // Armijo backtracking along the projected path.
        let mut t = 1.0;
        let mut accepted = None;
        let mut any_finite = false;
        let mut evaluated = false;
        for _ in 0..MAX_BACKTRACKS {
            for ((xti, &xi), &di) in xt.iter_mut().zip(&x).zip(&d) {
                *xti = xi + t * di;
            }
            project(&mut xt, bounds);
            if xt == x {
                break;
            }
            let ft = objective.value_grad(&xt, &mut gt);
            evaluated = true;
            let finite = ft.is_finite() && gt.iter().all(|v| v.is_finite());
            any_finite |= finite;
            if finite {
                let decrease: f64 = g
                    .iter()
                    .zip(&xt)
                    .zip(&x)
                    .map(|((gi, a), b)| gi * (a - b))
                    .sum();
                if ft <= f + ARMIJO * decrease && ft < f {
                    accepted = Some(ft);
                    break;
                }
                t *= 0.5;
            } else {
                t *= 0.1;
            }
        }

        let Some(ft) = accepted else {
            if evaluated && !any_finite && pairs.is_empty() {
                return Err(Error::LineSearch {
                    best: Box::new(OptResult {
                        params: x,
                        objective: f,
                        iterations,
                        converged: false,
                        trace: Some(trace),
                    }),
                });
            }
            if !pairs.is_empty() {
                // Retry from a steepest-descent direction before giving up.
                pairs.clear();
                continue;
            }
            break;
        };

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y) && sy > 0.0 {
            if pairs.len() == memory {
                pairs.pop_front();
            }
            pairs.push_back(Pair {
                s,
                y,
                rho: 1.0 / sy,
            });
        }
        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        f = ft;
        trace.push(f);
        iterations += 1;
    }

    if !converged {
        let free = free_mask(&x, &g, bounds);
        converged = projected_grad_norm(&g, &free) <= cfg.grad_tol;
    }
    Ok(OptResult {
        params: x,
        objective: f,
        iterations,
        converged,
        trace: Some(trace),
    })
}
