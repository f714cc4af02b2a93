//! Fit-space parametrizations of the nonlinear laws.
//!
//! Each space maps a parameter vector `theta` and a point's features to the
//! quantity the residual is taken in, together with the analytic gradient
//! `∂pred/∂theta`. Positive parameters are carried as logarithms.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln, sigmoid, softplus};
use crate::optim::{minimize_bounded, Bound, FitConfig, Loss, Objective, OptResult};

/// Up to two features per point (compute, or parameters and tokens, or a proxy).
pub type Features = [f64; 2];

pub trait FitSpace {
    fn dim(&self) -> usize;

    /// Model prediction at `x`; writes `∂pred/∂theta` into `grad`.
    fn eval(&self, theta: &[f64], x: &Features, grad: &mut [f64]) -> f64;
}

/// Broken power law on raw accuracy against `x = c / c_ref`.
///
/// `theta = [a, b', c0, c1, ln(d1 / c_ref), ln f1]` with `b' = b c_ref^-c0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct BnslSpace;

impl FitSpace for BnslSpace {
    fn dim(&self) -> usize {
        6
    }

    fn eval(&self, th: &[f64], x: &Features, g: &mut [f64]) -> f64 {
        let (a, b, c0, c1, u) = (th[0], th[1], th[2], th[3], th[4]);
        let f1 = exp(th[5]);
        let l = ln(x[0]);
        let t = (l - u) / f1;
        let sp = softplus(t);
        let s = sigmoid(t);
        let e = exp(-c0 * l - c1 * f1 * sp);
        g[0] = 1.0;
        g[1] = e;
        g[2] = -b * e * l;
        g[3] = -b * e * f1 * sp;
        g[4] = b * e * c1 * s;
        g[5] = -b * e * c1 * f1 * (sp - t * s);
        a + b * e
    }
}

/// `-ln Q'` of the parameter/token law on reference-scaled inputs.
///
/// `theta = [ln A', ln alpha, ln B', ln beta]`, `x = [N / n_ref, D / d_ref]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct NdSpace;

impl FitSpace for NdSpace {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, th: &[f64], x: &Features, g: &mut [f64]) -> f64 {
        let (alpha, beta) = (exp(th[1]), exp(th[3]));
        let (ln_n, ln_d) = (ln(x[0]), ln(x[1]));
        let t1 = exp(th[0] - alpha * ln_n);
        let t2 = exp(th[2] - beta * ln_d);
        g[0] = t1;
        g[1] = -t1 * alpha * ln_n;
        g[2] = t2;
        g[3] = -t2 * beta * ln_d;
        t1 + t2
    }
}

/// `-ln Q' = A x^-alpha + E`; `theta = [ln A, ln alpha, E]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IrreducibleSpace;

impl FitSpace for IrreducibleSpace {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, th: &[f64], x: &Features, g: &mut [f64]) -> f64 {
        let alpha = exp(th[1]);
        let lx = ln(x[0]);
        let t = exp(th[0] - alpha * lx);
        g[0] = t;
        g[1] = -t * alpha * lx;
        g[2] = 1.0;
        t + th[2]
    }
}

/// Compute-to-proxy law `L = l0 + a x^-alpha`; `theta = [l0, ln a, ln alpha]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProxyPowerSpace;

impl FitSpace for ProxyPowerSpace {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, th: &[f64], x: &Features, g: &mut [f64]) -> f64 {
        let alpha = exp(th[2]);
        let lx = ln(x[0]);
        let t = exp(th[1] - alpha * lx);
        g[0] = 1.0;
        g[1] = t;
        g[2] = -t * alpha * lx;
        th[0] + t
    }
}

/// `Acc = a sigmoid(k (L - L0)) + b`; `theta = [a, b, k, L0]`, `x = [L, _]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LogisticLinkSpace;

impl FitSpace for LogisticLinkSpace {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, th: &[f64], x: &Features, g: &mut [f64]) -> f64 {
        let (a, b, k, l0) = (th[0], th[1], th[2], th[3]);
        let s = sigmoid(k * (x[0] - l0));
        let ds = s * (1.0 - s);
        g[0] = s;
        g[1] = 1.0;
        g[2] = a * ds * (x[0] - l0);
        g[3] = -a * ds * k;
        a * s + b
    }
}

/// `Acc = 1 / (1 + exp(-a L + b))`; `theta = [a, b]`, `x = [L, _]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProxyLogisticSpace;

impl FitSpace for ProxyLogisticSpace {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, th: &[f64], x: &Features, g: &mut [f64]) -> f64 {
        let s = sigmoid(th[0] * x[0] - th[1]);
        let ds = s * (1.0 - s);
        g[0] = ds * x[0];
        g[1] = -ds;
        s
    }
}

/// `Σ loss(pred_i - y_i)` with its gradient.
pub struct ResidualObjective<'a, S: FitSpace> {
    pub space: &'a S,
    pub xs: &'a [Features],
    pub ys: &'a [f64],
    pub loss: Loss,
    pub delta: f64,
}

impl<S: FitSpace> Objective for ResidualObjective<'_, S> {
    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut dp = vec![0.0; self.space.dim()];
        let mut total = 0.0;
        for (x, &y) in self.xs.iter().zip(self.ys) {
            let r = self.space.eval(theta, x, &mut dp) - y;
            total += self.loss.value(r, self.delta);
            let w = self.loss.derivative(r, self.delta);
            for (g, d) in grad.iter_mut().zip(&dp) {
                *g += w * d;
            }
        }
        total
    }
}

/// Runs the bounded minimizer from every start and returns all outcomes in
/// start order plus the index of the best one (lowest objective, then lowest
/// start index). Starts are clamped into the box first.
pub fn multistart<S: FitSpace>(
    objective: &ResidualObjective<'_, S>,
    starts: &[Vec<f64>],
    bounds: &[Bound],
    cfg: &FitConfig,
) -> Result<(usize, Vec<Option<OptResult>>)> {
    let mut results = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for (i, start) in starts.iter().enumerate() {
        let mut x0 = start.clone();
        crate::optim::project(&mut x0, bounds);
        match minimize_bounded(objective, &x0, bounds, cfg) {
            Ok(r) => {
                if best.is_none_or(|(_, f)| r.objective < f) {
                    best = Some((i, r.objective));
                }
                results.push(Some(r));
            }
            Err(e) => {
                last_err = Some(e);
                results.push(None);
            }
        }
    }
    match best {
        Some((i, _)) => Ok((i, results)),
        None => Err(last_err.unwrap_or(Error::AllHopsFailed)),
    }
}

/// `ln(y)` for a strictly positive `y`, otherwise a small floor; used only
/// when seeding amplitudes.
pub(crate) fn ln_floor(y: f64) -> f64 {
    ln(y.max(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central differences with step `1e-5 * max(1, |theta_j|)`.
    fn check<S: FitSpace>(space: &S, theta: &[f64], x: &Features) {
        let n = space.dim();
        let mut g = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        space.eval(theta, x, &mut g);
        for j in 0..n {
            let h = 1e-5 * theta[j].abs().max(1.0);
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[j] += h;
            tm[j] -= h;
            let fd =
                (space.eval(&tp, x, &mut scratch) - space.eval(&tm, x, &mut scratch)) / (2.0 * h);
            let scale = g[j].abs().max(fd.abs()).max(1e-6);
            assert!(
                (g[j] - fd).abs() / scale < 1e-4,
                "component {j}: analytic {} vs fd {} at {theta:?} {x:?}",
                g[j],
                fd
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = [
                libm::exp(rng.random_range(-7.0..3.0)),
                libm::exp(rng.random_range(-2.0..2.0)),
            ];
            let bnsl = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-0.3..0.5),
                rng.random_range(0.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
            ];
            check(&BnslSpace, &bnsl, &x);
            let nd = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..0.5),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..0.5),
            ];
            check(&NdSpace, &nd, &x);
            let irr = [
                rng.random_range(-2.0..1.0),
                rng.random_range(-2.0..0.5),
                rng.random_range(0.0..1.0),
            ];
            check(&IrreducibleSpace, &irr, &x);
            let pp = [
                rng.random_range(0.0..3.0),
                rng.random_range(-2.0..1.0),
                rng.random_range(-2.0..0.5),
            ];
            check(&ProxyPowerSpace, &pp, &x);
            let l = [rng.random_range(1.0..4.0), 0.0];
            let lg = [
                rng.random_range(0.1..1.0),
                rng.random_range(0.0..0.5),
                rng.random_range(-5.0..5.0),
                rng.random_range(1.0..4.0),
            ];
            check(&LogisticLinkSpace, &lg, &l);
            let pl = [rng.random_range(-4.0..4.0), rng.random_range(-6.0..6.0)];
            check(&ProxyLogisticSpace, &pl, &l);
        }
    }
}
