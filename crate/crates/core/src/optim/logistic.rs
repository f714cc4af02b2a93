//! Binary logistic regression on one regressor.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ln, sigmoid, sqrt};

/// Gradient norm (in standardized units) at which Newton iterations stop.
const GRAD_TOL: f64 = 1e-10;

/// Maximum-likelihood fit of `P(y = 1 | x) = sigmoid(w x + b)`, or the
/// bracket of a perfectly separating threshold when no finite maximum exists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogisticFit {
    Finite {
        w: f64,
        b: f64,
    },
    /// Outcomes switch between `lo` and `hi` with no overlap (`lo == hi`
    /// covers quasi-separation at a shared point).
    Separated {
        lo: f64,
        hi: f64,
        increasing: bool,
    },
}

impl LogisticFit {
    /// Regressor value where the success probability is 1/2.
    pub fn crossing(&self) -> f64 {
        match *self {
            LogisticFit::Finite { w, b } => -b / w,
            LogisticFit::Separated { lo, hi, .. } => 0.5 * (lo + hi),
        }
    }

    pub fn is_separated(&self) -> bool {
        matches!(self, LogisticFit::Separated { .. })
    }
}

pub fn fit_logistic_binary(xs: &[f64], ys: &[bool]) -> Result<LogisticFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "{} regressors for {} outcomes",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("regressors must be finite".into()));
    }
    let extent = |want: bool| {
        xs.iter()
            .zip(ys)
            .filter(|(_, &y)| y == want)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&x, _)| {
                (lo.min(x), hi.max(x))
            })
    };
    let (min0, max0) = extent(false);
    let (min1, max1) = extent(true);
    if !min0.is_finite() || !min1.is_finite() {
        return Err(Error::InvalidArgument(
            "logistic regression needs at least one success and one failure".into(),
        ));
    }
    if max0 <= min1 {
        return Ok(LogisticFit::Separated {
            lo: max0,
            hi: min1,
            increasing: true,
        });
    }
    if max1 <= min0 {
        return Ok(LogisticFit::Separated {
            lo: max1,
            hi: min0,
            increasing: false,
        });
    }

    // Newton-Raphson on standardized regressors with step halving.
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n);
    let z = |x: f64| (x - mean) / sd;
    let loglik = |w: f64, b: f64| -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let t = w * z(x) + b;
                let p = if y { sigmoid(t) } else { sigmoid(-t) };
                ln(p.max(f64::MIN_POSITIVE))
            })
            .sum()
    };
    let (mut w, mut b) = (0.0, 0.0);
    let mut ll = loglik(w, b);
    for _ in 0..200 {
        let (mut gw, mut gb, mut hww, mut hwb, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let zx = z(x);
            let p = sigmoid(w * zx + b);
            let r = f64::from(u8::from(y)) - p;
            let v = p * (1.0 - p);
            gw += r * zx;
            gb += r;
            hww += v * zx * zx;
            hwb += v * zx;
            hbb += v;
        }
        if sqrt(gw * gw + gb * gb) <= GRAD_TOL {
            break;
        }
        let det = hww * hbb - hwb * hwb;
        if !(det > 0.0) {
            break;
        }
        let dw = (hbb * gw - hwb * gb) / det;
        let db = (hww * gb - hwb * gw) / det;
        let mut step = 1.0;
        loop {
            let (nw, nb) = (w + step * dw, b + step * db);
            let nll = loglik(nw, nb);
            if nll >= ll || step < 1e-12 {
                w = nw;
                b = nb;
                ll = nll;
                break;
            }
            step *= 0.5;
        }
    }
    // Back to the original regressor scale.
    Ok(LogisticFit::Finite {
        w: w / sd,
        b: b - w * mean / sd,
    })
}
