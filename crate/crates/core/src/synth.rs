//! Synthetic experiment grids drawn from known laws.
//!
//! Runs are placed on a log-uniform compute grid crossed with a set of
//! token-to-parameter ratios; `N = sqrt(c / (6 tpr))` and `D = tpr N` so that
//! `6ND = c` exactly. Accuracy comes from a ground-truth law, then noise is
//! applied and the value is clamped to `[0, 1]`. Output is a pure function of
//! the [`GridSpec`], seed included.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    denormalize_accuracy, BenchmarkRegistry, BenchmarkSpec, ExperimentRecord, MetricObservation,
    MetricType,
};
use crate::error::{Error, Result};
use crate::fit::ProxyPowerLaw;
use crate::forms::{Bnsl, Irreducible, Link, NdLaw, PassKLaw, PowerLawLogAcc};
use core::f64::consts::TAU;

use crate::math::{exp, ln, log10, logit, sigmoid, sin, sqrt};

/// Compute range of the reference grid.
pub const REFERENCE_FLOPS_RANGE: [f64; 2] = [1e18, 3.77e22];
/// Budgets per ratio in the reference grid.
pub const REFERENCE_POINTS: usize = 48;
/// Token-to-parameter ratios of the reference grid.
pub const REFERENCE_TPRS: [f64; 5] = [10.0, 20.0, 40.0, 80.0, 160.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    LogUniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    /// Additive Gaussian on raw accuracy.
    GaussianAccuracy,
    /// Additive Gaussian on the logit of normalized accuracy.
    GaussianLogit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(kind: NoiseKind, sigma: f64) -> Self {
        Self { kind, sigma }
    }
}

/// Accuracy as a function of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", content = "params", rename_all = "snake_case")]
pub enum GroundTruth {
    PowerLaw(PowerLawLogAcc),
    Bnsl(Bnsl),
    NdLaw(NdLaw),
    Irreducible(Irreducible),
    PasskLaw(PassKLaw),
    /// Accuracy is `link(stage1(c))`; the proxy value is attached to every
    /// observation under `proxy`.
    ProxyChain {
        proxy: String,
        stage1: ProxyPowerLaw,
        link: Link,
    },
    /// `below` up to and including `switch_flops`, `above` beyond it.
    RegimeSwitch {
        below: Box<GroundTruth>,
        above: Box<GroundTruth>,
        switch_flops: f64,
    },
    /// `base` with `amplitude * sin(2 pi log10(c) / period_decades + phase)`
    /// added to the logit of its accuracy: a systematic, compute-periodic
    /// departure from the law.
    LogitWave {
        base: Box<GroundTruth>,
        amplitude: f64,
        period_decades: f64,
        phase: f64,
    },
}

impl GroundTruth {
    /// Noise-free raw accuracy of a run (unclamped).
    pub fn accuracy(&self, q_random: f64, n: f64, d: f64, c: f64, k: u32) -> Result<f64> {
        let norm = |q: Result<f64>| q.and_then(|q| denormalize_accuracy(q, q_random));
        match self {
            GroundTruth::PowerLaw(l) => norm(l.eval(c)),
            GroundTruth::Bnsl(l) => l.eval(c),
            GroundTruth::NdLaw(l) => norm(l.eval(n, d)),
            GroundTruth::Irreducible(l) => norm(l.eval(c)),
            GroundTruth::PasskLaw(l) => norm(l.eval(c, f64::from(k))),
            GroundTruth::ProxyChain { stage1, link, .. } => Ok(link.eval(stage1.eval(c))),
            GroundTruth::RegimeSwitch {
                below,
                above,
                switch_flops,
            } => {
                if c <= *switch_flops {
                    below.accuracy(q_random, n, d, c, k)
                } else {
                    above.accuracy(q_random, n, d, c, k)
                }
            }
            GroundTruth::LogitWave {
                base,
                amplitude,
                period_decades,
                phase,
            } => {
                let q = base.accuracy(q_random, n, d, c, k)?;
                let wave = amplitude * sin(TAU * log10(c) / period_decades + phase);
                Ok(sigmoid(logit(q) + wave))
            }
        }
    }

    fn chain_proxy(&self, c: f64) -> Option<(&str, f64)> {
        match self {
            GroundTruth::ProxyChain { proxy, stage1, .. } => Some((proxy.as_str(), stage1.eval(c))),
            GroundTruth::RegimeSwitch {
                below,
                above,
                switch_flops,
            } => {
                if c <= *switch_flops {
                    below.chain_proxy(c)
                } else {
                    above.chain_proxy(c)
                }
            }
            GroundTruth::LogitWave { base, .. } => base.chain_proxy(c),
            _ => None,
        }
    }
}

/// An extra proxy metric attached to a benchmark's observations:
/// `law(c) + sigma z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyTruth {
    pub name: String,
    pub law: ProxyPowerLaw,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTruth {
    pub spec: BenchmarkSpec,
    pub truth: GroundTruth,
    /// Sample counts to emit for pass@k data; empty means a single sample.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ks: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proxies: Vec<ProxyTruth>,
}

impl BenchmarkTruth {
    pub fn new(spec: BenchmarkSpec, truth: GroundTruth) -> Self {
        Self {
            spec,
            truth,
            ks: Vec::new(),
            proxies: Vec::new(),
        }
    }

    pub fn with_ks(mut self, ks: Vec<u32>) -> Self {
        self.ks = ks;
        self
    }

    pub fn with_proxy(mut self, name: impl Into<String>, law: ProxyPowerLaw, sigma: f64) -> Self {
        self.proxies.push(ProxyTruth {
            name: name.into(),
            law,
            sigma,
        });
        self
    }
}

fn default_dataset() -> String {
    "synthetic".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub flops_range: [f64; 2],
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
    pub tprs: Vec<f64>,
    #[serde(default)]
    pub benchmarks: Vec<BenchmarkTruth>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dataset")]
    pub dataset: String,
}

impl GridSpec {
    /// 48 budgets over `[1e18, 3.77e22]` at ratios {10, 20, 40, 80, 160}, no noise.
    pub fn reference_shape(benchmarks: Vec<BenchmarkTruth>) -> Self {
        Self {
            flops_range: REFERENCE_FLOPS_RANGE,
            points: REFERENCE_POINTS,
            spacing: Spacing::LogUniform,
            tprs: REFERENCE_TPRS.to_vec(),
            benchmarks,
            noise: NoiseSpec::none(),
            seed: 0,
            dataset: default_dataset(),
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec, seed: u64) -> Self {
        self.noise = noise;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.flops_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "flops range needs 0 < min < max, got [{lo}, {hi}]"
            )));
        }
        if self.points < 2 {
            return Err(Error::InvalidArgument(
                "grid needs at least 2 points".into(),
            ));
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be >= 0, got {}",
                self.noise.sigma
            )));
        }
        if self.tprs.is_empty() || self.tprs.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidArgument(
                "ratios must be a non-empty list of positive values".into(),
            ));
        }
        for b in &self.benchmarks {
            b.spec.validate()?;
            if b.ks.contains(&0) {
                return Err(Error::InvalidArgument(format!(
                    "`{}`: k must be >= 1",
                    b.spec.name
                )));
            }
            if !b.ks.is_empty() && b.spec.metric_type != MetricType::PassAtK {
                return Err(Error::InvalidArgument(format!(
                    "`{}`: k values need metric type pass_at_k",
                    b.spec.name
                )));
            }
        }
        Ok(())
    }

    /// The compute budgets, ascending, endpoints exact.
    pub fn budgets(&self) -> Vec<f64> {
        let [lo, hi] = self.flops_range;
        let (a, b) = (ln(lo), ln(hi));
        let last = self.points - 1;
        (0..self.points)
            .map(|i| match i {
                0 => lo,
                i if i == last => hi,
                i => exp(a + (b - a) * i as f64 / last as f64),
            })
            .collect()
    }
}

fn apply_noise(q: f64, q_random: f64, noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> f64 {
    if noise.kind == NoiseKind::None {
        return q.clamp(0.0, 1.0);
    }
    let z: f64 = rng.sample(StandardNormal);
    let noisy = match noise.kind {
        NoiseKind::None => q,
        NoiseKind::GaussianAccuracy => q + noise.sigma * z,
        NoiseKind::GaussianLogit => {
            let qn = (q - q_random) / (1.0 - q_random);
            if qn > 0.0 && qn < 1.0 {
                q_random + (1.0 - q_random) * sigmoid(logit(qn) + noise.sigma * z)
            } else {
                q
            }
        }
    };
    noisy.clamp(0.0, 1.0)
}

/// Run id of the `i`-th budget at ratio `tpr`.
pub fn run_id(i: usize, tpr: f64) -> String {
    format!("c{i:03}-tpr{tpr}")
}

/// Generates one record per (budget, ratio), budgets ascending, ratios in the
/// given order.
pub fn generate_grid(spec: &GridSpec) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.points * spec.tprs.len());
    for (i, c) in spec.budgets().into_iter().enumerate() {
        for &tpr in &spec.tprs {
            let n = sqrt(c / (6.0 * tpr));
            let d = tpr * n;
            let mut rec = ExperimentRecord::new(
                run_id(i, tpr),
                n,
                d,
                Some(c),
                Some(tpr),
                spec.dataset.clone(),
            )?;
            for b in &spec.benchmarks {
                let ks: &[u32] = if b.ks.is_empty() { &[1] } else { &b.ks };
                for &k in ks {
                    let truth = b.truth.accuracy(b.spec.q_random, n, d, c, k)?;
                    let value = apply_noise(truth, b.spec.q_random, &spec.noise, &mut rng);
                    let mut obs =
                        MetricObservation::new(b.spec.name.clone(), b.spec.metric_type, value);
                    if b.spec.metric_type == MetricType::PassAtK {
                        obs = obs.with_k(k);
                    }
                    if let Some((name, l)) = b.truth.chain_proxy(c) {
                        obs = obs.with_proxy(name, l);
                    }
                    for p in &b.proxies {
                        let z: f64 = if p.sigma > 0.0 {
                            rng.sample(StandardNormal)
                        } else {
                            0.0
                        };
                        obs = obs.with_proxy(p.name.clone(), p.law.eval(c) + p.sigma * z);
                    }
                    rec.observations.push(obs);
                }
            }
            rec.validate()?;
            out.push(rec);
        }
    }
    Ok(out)
}

/// Published per-benchmark coefficients for data generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub benchmark: String,
    pub metric_type: MetricType,
    pub q_random: f64,
    /// Parameter/token law coefficients.
    pub nd_law: NdLaw,
    /// Fitted accuracy ceiling of the irreducible-error law.
    pub q_max: f64,
    /// Broken power law coefficients.
    pub bnsl: Bnsl,
}

impl Preset {
    /// Benchmark spec with the preset floor and the built-in filter margin.
    pub fn spec(&self) -> BenchmarkSpec {
        let margin = BenchmarkRegistry::builtin()
            .get(&self.benchmark)
            .map_or(0.05, |s| s.filter_margin);
        BenchmarkSpec {
            name: self.benchmark.clone(),
            metric_type: self.metric_type,
            q_random: self.q_random,
            filter_margin: margin,
        }
    }

    pub fn nd_truth(&self) -> BenchmarkTruth {
        BenchmarkTruth::new(self.spec(), GroundTruth::NdLaw(self.nd_law))
    }
}

/// Per-benchmark coefficient sets of the parameter/token law, accuracy
/// ceilings and broken-power-law fits, keyed by benchmark name.
pub fn paper_coefficient_presets() -> BTreeMap<String, Preset> {
    use MetricType::*;
    type Row = (&'static str, MetricType, f64, [f64; 4], f64, [f64; 6]);
    #[rustfmt::skip]
    let rows: [Row; 12] = [
        ("ARC-E", AccNorm, 0.2918, [1533.4592, 0.3749, 2923.3999, 0.3812], 1.000,
            [0.8538, -0.0602, -0.0600, 1.8536, 9.9284e23, 4.6051]),
        ("ARC-C", AccNorm, 0.2150, [19299.0332, 0.4600, 1485.5598, 0.3075], 1.000,
            [0.5893, -0.5303, 0.0081, 4.4732, 6.0827e23, 2.1720]),
        ("SciQ", AccNorm, 0.3039, [8337.3408, 0.5125, 40321.4180, 0.5396], 1.000,
            [0.9529, -1.9482, 0.0321, 2.5706, 2.6232e23, 3.6247]),
        ("PIQA", AccNorm, 0.5286, [7089.8726, 0.4722, 55.5856, 0.1908], 0.903,
            [0.8395, -2.6444, 0.0516, 1.3468, 5.3039e23, 3.9068]),
        ("HellaSwag", AccNorm, 0.2518, [1428930.3750, 0.7129, 23078.4102, 0.4476], 0.912,
            [0.8345, -0.0000, -0.3223, 2.5585, 5.9625e23, 6.7484]),
        ("Winogrande", Acc, 0.5000, [22017.3926, 0.4690, 22097.4961, 0.4240], 0.776,
            [0.7929, -0.0002, -0.1871, 2.0815, 6.0827e23, 4.8339]),
        ("WebQS", ExactMatch, 0.0, [1639.4487, 0.3363, 100.6403, 0.1855], 0.510,
            [0.3313, -0.1212, -0.0290, 1.0261, 5.9625e23, 4.2342]),
        ("TriviaQA", ExactMatch, 0.0, [11691.8994, 0.4424, 10492.5020, 0.3853], 1.000,
            [0.5112, -0.1595, -0.0299, 2.3873, 5.3039e23, 3.0171]),
        ("LAMBADA", Acc, 0.0, [11417.5391, 0.5088, 90.9843, 0.2349], 0.947,
            [0.7787, -1.6112, 0.0153, 1.5842, 2.6232e23, 4.4197]),
        ("GSM8K", ExactMatch, 0.0, [51693336.0, 0.8205, 9641845.0, 0.6506], 1.000,
            [1.5170, -0.2524, -0.0451, 0.8311, 5.9625e23, 3.6804]),
        ("HumanEval", PassAtK, 0.0, [2985.0347, 0.3745, 1341.2744, 0.3002], 1.000,
            [0.5652, -1.0906, 0.0133, 1.0865, 5.3039e23, 3.1396]),
        ("LBPP", PassAtK, 0.0, [3306785.0, 0.7146, 150.6138, 0.1617], 1.000,
            [-1.5884, 0.4172, 0.0226, -2.1642, 4.6091e22, 1.8686]),
    ];
    rows.into_iter()
        .map(|(name, metric, q_random, nd, q_max, bn)| {
            let preset = Preset {
                benchmark: name.to_string(),
                metric_type: metric,
                q_random,
                nd_law: NdLaw {
                    a: nd[0],
                    alpha: nd[1],
                    b: nd[2],
                    beta: nd[3],
                },
                q_max,
                bnsl: Bnsl {
                    a: bn[0],
                    b: bn[1],
                    c0: bn[2],
                    c1: bn[3],
                    d1: bn[4],
                    f1: bn[5],
                },
            };
            (name.to_string(), preset)
        })
        .collect()
}
