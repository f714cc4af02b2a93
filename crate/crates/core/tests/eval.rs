use std::f64::consts::TAU;

use scalelaw_core::data::{
    BenchmarkRegistry, BenchmarkSpec, ExperimentRecord, HoldoutRule, MetricType,
};
use scalelaw_core::eval::{
    compare_strategies, default_thresholds, split_observations, threshold_sweep, validate_model,
    Split, Strategy, DEFAULT_SUCCESS_MRE,
};
use scalelaw_core::fit::{
    fit_nd_law, fit_power_law, predict, FitRequest, Form, LinkKind, ProxyPowerLaw,
};
use scalelaw_core::forms::{PowerLawLogAcc, DEFAULT_C_REF};
use scalelaw_core::optim::FitConfig;
use scalelaw_core::synth::{
    generate_grid, paper_coefficient_presets, BenchmarkTruth, GridSpec, GroundTruth, NoiseKind,
    NoiseSpec,
};

fn trivia() -> BenchmarkSpec {
    BenchmarkSpec::new("TriviaQA", MetricType::ExactMatch, 0.0, 0.05).unwrap()
}

fn arc_e_grid(noise: NoiseSpec, seed: u64) -> (BenchmarkSpec, Vec<ExperimentRecord>) {
    let preset = &paper_coefficient_presets()["ARC-E"];
    let g = GridSpec::reference_shape(vec![preset.nd_truth()]).with_noise(noise, seed);
    (preset.spec(), generate_grid(&g).unwrap())
}

fn protocol() -> HoldoutRule {
    HoldoutRule::new(6e21, Some(160.0)).unwrap()
}

#[test]
fn noise_free_holdout_is_exact() {
    let (spec, recs) = arc_e_grid(NoiseSpec::none(), 0);
    let (train, _) = split_observations(&recs, &protocol());
    let model = fit_nd_law(&train, &spec, &FitConfig::default()).unwrap();
    let v = validate_model(&model, &recs, &protocol()).unwrap();
    assert_eq!(v.valid.split, Split::Valid);
    assert!(!v.valid.empty);
    assert!(v.valid.mae().unwrap() <= 1e-6, "{:?}", v.valid.metrics);
    assert_eq!(v.train.points, model.fit_stats.train_points);
    assert_eq!(
        v.train.points + v.valid.points + v.train.excluded + v.valid.excluded,
        recs.len()
    );
}

#[test]
fn noisy_holdout_sits_at_noise_floor() {
    for seed in 0..50 {
        let (spec, recs) = arc_e_grid(NoiseSpec::new(NoiseKind::GaussianAccuracy, 0.01), seed);
        let (train, _) = split_observations(&recs, &protocol());
        let model = fit_nd_law(&train, &spec, &FitConfig::default()).unwrap();
        let mae = validate_model(&model, &recs, &protocol())
            .unwrap()
            .valid
            .mae()
            .unwrap();
        assert!((0.004..=0.02).contains(&mae), "seed {seed}: {mae}");
    }
}

#[test]
fn residuals_match_independent_predictions() {
    let (spec, recs) = arc_e_grid(NoiseSpec::new(NoiseKind::GaussianLogit, 0.05), 3);
    let model = fit_nd_law(&recs, &spec, &FitConfig::default()).unwrap();
    // Everything on the train side.
    let rule = HoldoutRule::new(1e30, None).unwrap();
    let v = validate_model(&model, &recs, &rule).unwrap();
    assert!(v.valid.empty && v.valid.metrics.is_none());
    assert_eq!(v.train.points, model.fit_stats.train_points);
    let mut abs = 0.0;
    for res in &v.train.residuals {
        let rec = recs.iter().find(|r| r.run_id == res.run_id).unwrap();
        let want = predict(
            &model,
            &scalelaw_core::fit::Query::ParamsTokens {
                n: rec.n_params,
                d: rec.d_tokens,
            },
        )
        .unwrap()
        .raw;
        assert_eq!(res.predicted, want);
        assert_eq!(res.actual, rec.score("ARC-E").unwrap().value);
        abs += (want - res.actual).abs();
    }
    let mae = abs / v.train.points as f64;
    assert!((mae - v.train.mae().unwrap()).abs() < 1e-15);
}

#[test]
fn missing_benchmark_is_an_error() {
    let (spec, recs) = arc_e_grid(NoiseSpec::none(), 0);
    let model = fit_nd_law(&recs, &spec, &FitConfig::default()).unwrap();
    let other = generate_grid(&GridSpec::reference_shape(vec![BenchmarkTruth::new(
        trivia(),
        GroundTruth::PowerLaw(PowerLawLogAcc::new(1.0, 0.3, DEFAULT_C_REF).unwrap()),
    )]))
    .unwrap();
    assert!(validate_model(&model, &other, &protocol()).is_err());
}

fn power_strategy(spec: &BenchmarkSpec) -> Strategy<'_> {
    Strategy::new("power_law", move |recs| {
        fit_power_law(recs, spec, &FitConfig::default())
    })
}

fn law_grid(truth: GroundTruth, noise: NoiseSpec, seed: u64) -> Vec<ExperimentRecord> {
    generate_grid(
        &GridSpec::reference_shape(vec![BenchmarkTruth::new(trivia(), truth)])
            .with_noise(noise, seed),
    )
    .unwrap()
}

#[test]
fn sweep_on_exact_law_always_succeeds() {
    let law = PowerLawLogAcc::new(1.0, 0.3, DEFAULT_C_REF).unwrap();
    let recs = law_grid(GroundTruth::PowerLaw(law), NoiseSpec::none(), 0);
    let spec = trivia();
    let sweep = threshold_sweep(
        &recs,
        &power_strategy(&spec),
        &default_thresholds(),
        DEFAULT_SUCCESS_MRE,
    )
    .unwrap();
    assert_eq!(sweep.points.len(), 20);
    let evaluable: Vec<_> = sweep.points.iter().filter(|p| p.evaluable).collect();
    assert!(evaluable.len() >= 15);
    assert!(evaluable.iter().all(|p| p.success));
    assert!(sweep.all_success);
    assert!(sweep.crossing.unwrap() <= evaluable[0].threshold);
    // Above the largest budget nothing is left to validate on.
    assert!(!sweep.points.last().unwrap().evaluable);
}

fn regime_switch(seed: u64) -> (Vec<ExperimentRecord>, f64) {
    let law = GroundTruth::PowerLaw(PowerLawLogAcc::new(1.0, 0.3, DEFAULT_C_REF).unwrap());
    let c_star = 3e21;
    let truth = GroundTruth::RegimeSwitch {
        below: Box::new(GroundTruth::LogitWave {
            base: Box::new(law.clone()),
            amplitude: 1.0,
            period_decades: 1.0,
            phase: TAU * seed as f64 / 50.0,
        }),
        above: Box::new(law),
        switch_flops: c_star,
    };
    (
        law_grid(truth, NoiseSpec::new(NoiseKind::GaussianLogit, 0.02), seed),
        c_star,
    )
}

#[test]
fn sweep_locates_regime_switch() {
    let spec = trivia();
    for seed in [0, 17, 33] {
        let (recs, c_star) = regime_switch(seed);
        let sweep = threshold_sweep(
            &recs,
            &power_strategy(&spec),
            &default_thresholds(),
            DEFAULT_SUCCESS_MRE,
        )
        .unwrap();
        let first = sweep.points.iter().find(|p| p.evaluable).unwrap();
        assert!(!first.success, "{seed}");
        assert!(sweep.logistic.is_some());
        let ratio = sweep.crossing.unwrap() / c_star;
        assert!((1.0 / 3.0..3.0).contains(&ratio), "seed {seed}: {ratio}");
    }
}

#[test]
fn sweep_is_deterministic_and_validates_input() {
    let spec = trivia();
    let (recs, _) = regime_switch(4);
    let s = power_strategy(&spec);
    let t = default_thresholds();
    assert_eq!(
        threshold_sweep(&recs, &s, &t, 10.0).unwrap(),
        threshold_sweep(&recs, &s, &t, 10.0).unwrap()
    );
    assert!(threshold_sweep(&recs, &s, &t[..1], 10.0).is_err());
    assert!(threshold_sweep(&recs, &s, &[1e21, 1e20], 10.0).is_err());
}

fn eq2_with_proxy(noise: NoiseSpec, seed: u64) -> Vec<ExperimentRecord> {
    let truth = BenchmarkTruth::new(
        trivia(),
        GroundTruth::PowerLaw(PowerLawLogAcc::new(1.0, 0.3, DEFAULT_C_REF).unwrap()),
    )
    .with_proxy(
        "nll",
        ProxyPowerLaw {
            l0: 1.7,
            a: 1.5,
            alpha: 0.25,
            c_ref: DEFAULT_C_REF,
        },
        0.0,
    );
    generate_grid(&GridSpec::reference_shape(vec![truth]).with_noise(noise, seed)).unwrap()
}

fn table_strategies<'a>(reg: &'a BenchmarkRegistry, cfg: &'a FitConfig) -> Vec<Strategy<'a>> {
    vec![
        Strategy::from_request(
            "power_law",
            reg,
            FitRequest::new(Form::PowerLaw, "TriviaQA"),
            cfg,
        ),
        Strategy::from_request("bnsl", reg, FitRequest::new(Form::Bnsl, "TriviaQA"), cfg),
        Strategy::from_request(
            "two_stage_linear",
            reg,
            FitRequest::new(Form::TwoStage, "TriviaQA").with_proxy("nll", LinkKind::Linear),
            cfg,
        ),
        Strategy::from_request(
            "two_stage_logistic",
            reg,
            FitRequest::new(Form::TwoStage, "TriviaQA").with_proxy("nll", LinkKind::Logistic),
            cfg,
        ),
    ]
}

#[test]
fn comparison_table_rows() {
    let recs = eq2_with_proxy(NoiseSpec::none(), 0);
    let mut reg = BenchmarkRegistry::default();
    reg.insert(trivia());
    let cfg = FitConfig {
        basin_hops: 10,
        ..FitConfig::default()
    };
    let rows = compare_strategies(&recs, &table_strategies(&reg, &cfg), &protocol()).unwrap();
    let names: Vec<_> = rows.iter().map(|r| r.strategy.as_str()).collect();
    assert_eq!(
        names,
        [
            "power_law",
            "bnsl",
            "two_stage_linear",
            "two_stage_logistic"
        ]
    );
    assert!(rows.iter().all(|r| r.error.is_none()), "{rows:?}");
    let power = rows[0].valid_mae().unwrap();
    assert!(power < 1e-9);
    assert!(power < rows[2].valid_mae().unwrap() && power < rows[3].valid_mae().unwrap());
    assert!(rows[0].train_r2().unwrap() > 0.999999);

    let one = compare_strategies(&recs, &table_strategies(&reg, &cfg)[..1], &protocol()).unwrap();
    assert_eq!(one.len(), 1);
    assert!(compare_strategies(&recs, &[], &protocol()).is_err());
}

#[test]
fn failing_strategy_becomes_error_row() {
    let recs = eq2_with_proxy(NoiseSpec::none(), 0);
    let mut reg = BenchmarkRegistry::default();
    reg.insert(trivia());
    let cfg = FitConfig::default();
    let strategies = vec![
        Strategy::from_request(
            "two_stage_brier",
            &reg,
            FitRequest::new(Form::TwoStage, "TriviaQA").with_proxy("brier", LinkKind::Linear),
            &cfg,
        ),
        Strategy::from_request(
            "power_law",
            &reg,
            FitRequest::new(Form::PowerLaw, "TriviaQA"),
            &cfg,
        ),
    ];
    let rows = compare_strategies(&recs, &strategies, &protocol()).unwrap();
    assert!(rows[0].error.as_deref().unwrap().contains("brier"));
    assert!(rows[0].valid_mae().is_none());
    assert!(rows[1].valid_mae().is_some());
}
