//! Losses and optimizers behind every fit.

mod basin;
mod lbfgsb;
mod logistic;
mod lstsq;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::FilterRule;
use crate::forms::DEFAULT_C_REF;

pub use basin::basin_hopping;
pub use lbfgsb::minimize_bounded;
pub use logistic::{fit_logistic_binary, LogisticFit};
pub use lstsq::linear_least_squares;

/// Default Huber threshold.
pub const DEFAULT_HUBER_DELTA: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Huber,
    Squared,
}

impl Loss {
    pub fn value(self, r: f64, delta: f64) -> f64 {
        match self {
            Loss::Huber => huber(r, delta),
            Loss::Squared => 0.5 * r * r,
        }
    }

    /// d(loss)/dr
    pub fn derivative(self, r: f64, delta: f64) -> f64 {
        match self {
            Loss::Huber => r.clamp(-delta, delta),
            Loss::Squared => r,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Loss::Huber => "huber",
            Loss::Squared => "squared",
        }
    }
}

/// Quadratic for `|r| <= delta`, linear beyond, continuous first derivative.
pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Optimizer settings shared by all nonlinear fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub loss: Loss,
    pub huber_delta: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Explicit starting points (in each pipeline's fit space); empty means
    /// the pipeline's own default grid.
    pub init_grid: Vec<Vec<f64>>,
    pub basin_hops: usize,
    /// Per-dimension uniform perturbation half-width; empty means 0.5 everywhere.
    pub basin_step: Vec<f64>,
    /// Number of correction pairs kept by the quasi-Newton minimizer.
    pub memory: usize,
    /// Reference compute for every compute-indexed law.
    pub c_ref: f64,
    /// Replaces the pipeline's default point filter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterRule>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            loss: Loss::Huber,
            huber_delta: DEFAULT_HUBER_DELTA,
            max_iters: 3000,
            grad_tol: 1e-11,
            seed: 0,
            init_grid: Vec::new(),
            basin_hops: 100,
            basin_step: Vec::new(),
            memory: 10,
            c_ref: DEFAULT_C_REF,
            filter: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.huber_delta > 0.0)
            || self.max_iters == 0
            || !(self.grad_tol > 0.0)
            || !(self.c_ref > 0.0 && self.c_ref.is_finite())
        {
            return Err(crate::Error::InvalidArgument(
                "fit config needs huber_delta > 0, max_iters > 0, grad_tol > 0 and c_ref > 0"
                    .into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn step_for(&self, dim: usize) -> f64 {
        self.basin_step.get(dim).copied().unwrap_or(0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

/// A differentiable objective: returns `f(x)` and writes `∇f(x)` into `grad`.
pub trait Objective {
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

/// Closed box `[lo, hi]` for one coordinate; infinite ends are allowed.
pub type Bound = (f64, f64);

pub(crate) fn project(x: &mut [f64], bounds: &[Bound]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}
