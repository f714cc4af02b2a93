//! Parametric scaling-law forms.
//!
//! Compute-indexed forms evaluate on `c / c_ref`; every logarithm is natural.
//! Normalized forms return accuracy on the chance-corrected scale, see
//! [`crate::data::normalize_accuracy`].

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, expm1, ln, log1p, powf, sigmoid, softplus};

/// Default FLOPs reference scale.
pub const DEFAULT_C_REF: f64 = 1e21;

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

/// Direct law on log-accuracy: `-ln Q' = A (c / c_ref)^-alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawLogAcc {
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    pub c_ref: f64,
}

impl PowerLawLogAcc {
    pub fn new(a: f64, alpha: f64, c_ref: f64) -> Result<Self> {
        Ok(Self {
            a: positive("A", a)?,
            alpha: positive("alpha", alpha)?,
            c_ref: positive("c_ref", c_ref)?,
        })
    }

    /// `-ln Q'` at compute `c`.
    pub fn neg_log(&self, c: f64) -> Result<f64> {
        let c = positive("compute", c)?;
        Ok(self.a * powf(c / self.c_ref, -self.alpha))
    }

    pub fn eval(&self, c: f64) -> Result<f64> {
        Ok(exp(-self.neg_log(c)?))
    }

    /// The same curve expressed against another reference scale.
    pub fn rescaled(&self, c_ref: f64) -> Self {
        Self {
            a: self.a * powf(c_ref / self.c_ref, -self.alpha),
            alpha: self.alpha,
            c_ref,
        }
    }
}

/// Broken power law with one transition, on raw FLOPs and raw accuracy:
/// `Q = a + b C^-c0 (1 + (C/d1)^(1/f1))^(-c1 f1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bnsl {
    pub a: f64,
    pub b: f64,
    pub c0: f64,
    pub c1: f64,
    pub d1: f64,
    pub f1: f64,
}

impl Bnsl {
    pub fn new(a: f64, b: f64, c0: f64, c1: f64, d1: f64, f1: f64) -> Result<Self> {
        positive("d1", d1)?;
        if !(f1.is_finite() && f1 != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "f1 must be finite and nonzero, got {f1}"
            )));
        }
        Ok(Self {
            a,
            b,
            c0,
            c1,
            d1,
            f1,
        })
    }

    pub fn eval(&self, c: f64) -> Result<f64> {
        let c = positive("compute", c)?;
        if self.b == 0.0 {
            return Ok(self.a);
        }
        // The bracket is evaluated as exp(-c1 f1 softplus(ln(C/d1) / f1)).
        let t = (ln(c) - ln(self.d1)) / self.f1;
        let log_term = -self.c0 * ln(c) - self.c1 * self.f1 * softplus(t);
        Ok(self.a + self.b * exp(log_term))
    }
}

/// Parameter/token law: `-ln Q' = A N^-alpha + B D^-beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NdLaw {
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub beta: f64,
}

impl NdLaw {
    pub fn new(a: f64, alpha: f64, b: f64, beta: f64) -> Result<Self> {
        Ok(Self {
            a: positive("A", a)?,
            alpha: positive("alpha", alpha)?,
            b: positive("B", b)?,
            beta: positive("beta", beta)?,
        })
    }

    pub fn neg_log(&self, n: f64, d: f64) -> Result<f64> {
        let n = positive("n_params", n)?;
        let d = positive("d_tokens", d)?;
        Ok(self.a * powf(n, -self.alpha) + self.b * powf(d, -self.beta))
    }

    pub fn eval(&self, n: f64, d: f64) -> Result<f64> {
        Ok(exp(-self.neg_log(n, d)?))
    }
}

/// Log-accuracy law with an accuracy ceiling: `-ln Q' = A (c/c_ref)^-alpha + E`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Irreducible {
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub c_ref: f64,
}

impl Irreducible {
    pub fn new(a: f64, alpha: f64, e: f64, c_ref: f64) -> Result<Self> {
        if !(e.is_finite() && e >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "E must be nonnegative, got {e}"
            )));
        }
        Ok(Self {
            a: positive("A", a)?,
            alpha: positive("alpha", alpha)?,
            e,
            c_ref: positive("c_ref", c_ref)?,
        })
    }

    /// Builds the parameter set whose ceiling is `q_max`.
    pub fn with_ceiling(a: f64, alpha: f64, q_max: f64, c_ref: f64) -> Result<Self> {
        if !(q_max > 0.0 && q_max <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ceiling must lie in (0, 1], got {q_max}"
            )));
        }
        Self::new(a, alpha, -ln(q_max), c_ref)
    }

    pub fn q_max(&self) -> f64 {
        exp(-self.e)
    }

    pub fn neg_log(&self, c: f64) -> Result<f64> {
        let c = positive("compute", c)?;
        Ok(self.a * powf(c / self.c_ref, -self.alpha) + self.e)
    }

    pub fn eval(&self, c: f64) -> Result<f64> {
        Ok(exp(-self.neg_log(c)?))
    }
}

/// Pass@k law: `ln(-ln Q) = logA + alpha x + beta ln k + delta x ln k` with
/// `x = ln(c / c_ref)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassKLaw {
    #[serde(rename = "logA")]
    pub log_a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub c_ref: f64,
}

impl PassKLaw {
    pub fn new(log_a: f64, alpha: f64, beta: f64, delta: f64, c_ref: f64) -> Result<Self> {
        if ![log_a, alpha, beta, delta].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "pass@k coefficients must be finite".into(),
            ));
        }
        Ok(Self {
            log_a,
            alpha,
            beta,
            delta,
            c_ref: positive("c_ref", c_ref)?,
        })
    }

    /// `ln(-ln Q)` at `(c, k)`.
    pub fn log_neg_log(&self, c: f64, k: f64) -> Result<f64> {
        let c = positive("compute", c)?;
        if !(k >= 1.0 && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("k must be >= 1, got {k}")));
        }
        let x = ln(c / self.c_ref);
        let lk = ln(k);
        Ok(self.log_a + self.alpha * x + self.beta * lk + self.delta * x * lk)
    }

    pub fn eval(&self, c: f64, k: f64) -> Result<f64> {
        Ok(exp(-exp(self.log_neg_log(c, k)?)))
    }
}

/// Proxy-metric to accuracy links.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    /// `a + b L`
    Linear { a: f64, b: f64 },
    /// `a / (1 + exp(-k (L - L0))) + b`
    Logistic {
        a: f64,
        b: f64,
        k: f64,
        #[serde(rename = "L0")]
        l0: f64,
    },
    /// `1 / (1 + exp(-a L + b))`
    ProxyLogistic { a: f64, b: f64 },
}

impl Link {
    /// Unclamped link output; callers decide whether to clamp to `[0, 1]`.
    pub fn eval(&self, l: f64) -> f64 {
        match *self {
            Link::Linear { a, b } => a + b * l,
            Link::Logistic { a, b, k, l0 } => a * sigmoid(k * (l - l0)) + b,
            Link::ProxyLogistic { a, b } => sigmoid(a * l - b),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Link::Linear { .. } => "linear",
            Link::Logistic { .. } => "logistic",
            Link::ProxyLogistic { .. } => "proxy_logistic",
        }
    }
}

fn check_pass_args(q: f64, k: u32) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "probability {q} outside [0, 1]"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    Ok(())
}

/// Probability that at least one of `k` independent trials succeeds:
/// `1 - (1 - q)^k`, evaluated as `-expm1(k log1p(-q))`.
pub fn passk_exact(q: f64, k: u32) -> Result<f64> {
    check_pass_args(q, k)?;
    if q == 1.0 {
        return Ok(1.0);
    }
    Ok(-expm1(f64::from(k) * log1p(-q)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassKBounds {
    /// `kq e^{-kq}`
    pub loose_lower: f64,
    /// `1 - e^{-kq}`
    pub tight_lower: f64,
    /// `min(kq, 1)`
    pub upper: f64,
}

/// Analytic bounds around [`passk_exact`]:
/// `loose_lower <= tight_lower <= exact <= upper`.
pub fn passk_bounds(q: f64, k: u32) -> Result<PassKBounds> {
    check_pass_args(q, k)?;
    let kq = f64::from(k) * q;
    Ok(PassKBounds {
        loose_lower: kq * exp(-kq),
        tight_lower: -expm1(-kq),
        upper: kq.min(1.0),
    })
}
