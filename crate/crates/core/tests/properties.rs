use proptest::collection::vec as pvec;
use proptest::prelude::*;

use scalelaw_core::data::{
    denormalize_accuracy, filter_fit_points, normalize_accuracy, split_holdout, BenchmarkSpec,
    ExperimentRecord, FilterRule, HoldoutRule, MetricObservation, MetricType,
};
use scalelaw_core::eval::compute_metrics;
use scalelaw_core::fit::{fit_power_law, Law};
use scalelaw_core::forms::{
    passk_bounds, passk_exact, Irreducible, NdLaw, PassKLaw, PowerLawLogAcc,
};
use scalelaw_core::optim::{
    fit_logistic_binary, huber, linear_least_squares, minimize_bounded, FitConfig,
};
use scalelaw_core::synth::{
    generate_grid, BenchmarkTruth, GridSpec, GroundTruth, NoiseKind, NoiseSpec,
};

fn record(i: usize, flops: f64, tpr: f64, value: f64) -> ExperimentRecord {
    let n = (flops / (6.0 * tpr)).sqrt();
    ExperimentRecord::new(format!("r{i:03}"), n, tpr * n, Some(flops), None, "mix")
        .unwrap()
        .with_observation(MetricObservation::new("B", MetricType::Acc, value))
}

fn records() -> impl Strategy<Value = Vec<ExperimentRecord>> {
    pvec(
        (
            17.0f64..23.0,
            prop::sample::select(vec![10.0, 20.0, 40.0, 80.0, 160.0]),
            0.0f64..=1.0,
        ),
        1..40,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (lc, tpr, v))| record(i, 10f64.powf(lc), tpr, v))
            .collect()
    })
}

proptest! {
    // ---- data ----

    #[test]
    fn normalization_round_trip(q in 0.0f64..=1.0, r in 0.0f64..0.999) {
        let back = denormalize_accuracy(normalize_accuracy(q, r).unwrap(), r).unwrap();
        prop_assert!((back - q).abs() <= 1e-12);
    }

    #[test]
    fn normalization_increasing(q in 0.0f64..0.999, dq in 1e-9f64..0.5, r in 0.0f64..0.999) {
        let q2 = (q + dq).min(1.0);
        prop_assume!(q2 > q);
        prop_assert!(normalize_accuracy(q2, r).unwrap() > normalize_accuracy(q, r).unwrap());
    }

    #[test]
    fn holdout_partitions(recs in records(), thr in 19.0f64..23.0, tpr in prop::option::of(Just(160.0))) {
        let rule = HoldoutRule::new(10f64.powf(thr), tpr).unwrap();
        let (train, valid) = split_holdout(&recs, &rule);
        prop_assert_eq!(train.len() + valid.len(), recs.len());
        for r in &train {
            prop_assert!(!valid.iter().any(|v| v.run_id == r.run_id));
        }
    }

    #[test]
    fn filter_monotone_in_margin(recs in records(), q_random in 0.0f64..0.6, m in 0.0f64..0.2) {
        let spec = BenchmarkSpec::new("B", MetricType::Acc, q_random, 0.05).unwrap();
        let wide = filter_fit_points(&recs, &spec, FilterRule::Margin(0.0)).unwrap();
        let narrow = filter_fit_points(&recs, &spec, FilterRule::Margin(m)).unwrap();
        for r in &narrow {
            prop_assert!(wide.iter().any(|w| w.run_id == r.run_id));
        }
    }

    // ---- forms ----

    #[test]
    fn power_law_and_irreducible_increase_in_compute(
        a in 1e-3f64..1e3, alpha in 1e-3f64..3.0, e in 0.0f64..3.0,
        lc in 15.0f64..26.0, ratio in 1e-3f64..10.0,
    ) {
        let (c1, c2) = (10f64.powf(lc), 10f64.powf(lc) * (1.0 + ratio));
        let pl = PowerLawLogAcc::new(a, alpha, 1e21).unwrap();
        let irr = Irreducible::new(a, alpha, e, 1e21).unwrap();
        prop_assert!(pl.neg_log(c2).unwrap() < pl.neg_log(c1).unwrap());
        prop_assert!(pl.eval(c2).unwrap() >= pl.eval(c1).unwrap());
        prop_assert!(irr.neg_log(c2).unwrap() < irr.neg_log(c1).unwrap());
        prop_assert!(irr.eval(c2).unwrap() >= irr.eval(c1).unwrap());
    }

    #[test]
    fn nd_law_increases_in_params_and_tokens(
        a in 1e-2f64..1e7, alpha in 1e-2f64..1.5, b in 1e-2f64..1e7, beta in 1e-2f64..1.5,
        ln_n in 16.0f64..25.0, ln_d in 18.0f64..29.0, ratio in 1e-3f64..10.0,
    ) {
        let law = NdLaw::new(a, alpha, b, beta).unwrap();
        let (n, d) = (ln_n.exp(), ln_d.exp());
        let base = law.neg_log(n, d).unwrap();
        prop_assert!(law.neg_log(n * (1.0 + ratio), d).unwrap() < base);
        prop_assert!(law.neg_log(n, d * (1.0 + ratio)).unwrap() < base);
        prop_assert!(law.eval(n * (1.0 + ratio), d).unwrap() >= law.eval(n, d).unwrap());
        prop_assert!(law.eval(n, d * (1.0 + ratio)).unwrap() >= law.eval(n, d).unwrap());
    }

    #[test]
    fn power_law_reference_reparametrization(
        a in 1e-2f64..1e2, alpha in 1e-2f64..2.0, lref in 18.0f64..24.0, lc in 17.0f64..24.0,
    ) {
        let pl = PowerLawLogAcc::new(a, alpha, 1e21).unwrap();
        let c_ref = 10f64.powf(lref);
        let moved = PowerLawLogAcc::new(a * (c_ref / 1e21).powf(-alpha), alpha, c_ref).unwrap();
        let c = 10f64.powf(lc);
        let (x, y) = (pl.neg_log(c).unwrap(), moved.neg_log(c).unwrap());
        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        let (p, q) = (pl.eval(c).unwrap(), moved.eval(c).unwrap());
        prop_assert!((p - q).abs() <= 1e-12 * p.max(1e-300) + 1e-300);
    }

    #[test]
    fn zero_floor_irreducible_is_power_law(a in 1e-2f64..1e2, alpha in 1e-2f64..2.0, lc in 17.0f64..24.0) {
        let c = 10f64.powf(lc);
        let pl = PowerLawLogAcc::new(a, alpha, 1e21).unwrap();
        let irr = Irreducible::new(a, alpha, 0.0, 1e21).unwrap();
        prop_assert_eq!(irr.eval(c).unwrap(), pl.eval(c).unwrap());
    }

    #[test]
    fn passk_law_at_one_sample_is_compute_only(
        log_a in -3.0f64..3.0, alpha in -2.0f64..-0.01, beta in -1.0f64..1.0, delta in -1.0f64..1.0,
        lc in 17.0f64..24.0,
    ) {
        let law = PassKLaw::new(log_a, alpha, beta, delta, 1e21).unwrap();
        let c = 10f64.powf(lc);
        let x = (c / 1e21).ln();
        let want = (-(log_a + alpha * x).exp()).exp();
        prop_assert!((law.eval(c, 1.0).unwrap() - want).abs() <= 1e-15);
    }

    #[test]
    fn passk_bounds_ordered(q in 0.0f64..=1.0, k in 1u32..=1024) {
        let b = passk_bounds(q, k).unwrap();
        let exact = passk_exact(q, k).unwrap();
        prop_assert!(b.loose_lower <= b.tight_lower + 1e-12);
        prop_assert!(b.tight_lower <= exact + 1e-12);
        prop_assert!(exact <= b.upper + 1e-12);
        prop_assert!(b.upper <= (f64::from(k) * q).min(1.0) + 1e-12);
    }

    #[test]
    fn passk_exact_nondecreasing(q in 0.0f64..=1.0, dq in 0.0f64..0.5, k in 1u32..1024, dk in 0u32..64) {
        let q2 = (q + dq).min(1.0);
        prop_assert!(passk_exact(q, k + dk).unwrap() >= passk_exact(q, k).unwrap());
        prop_assert!(passk_exact(q2, k).unwrap() >= passk_exact(q, k).unwrap());
    }

    // ---- optim ----

    #[test]
    fn huber_symmetric_and_monotone(r in -10.0f64..10.0, s in 0.0f64..5.0, delta in 1e-4f64..1.0) {
        prop_assert_eq!(huber(r, delta), huber(-r, delta));
        let bigger = r.abs() + s;
        prop_assert!(huber(bigger, delta) >= huber(r, delta));
    }

    #[test]
    fn bounded_minimizer_stays_in_box(
        center in pvec(-5.0f64..5.0, 3), scale in pvec(0.1f64..10.0, 3), x0 in pvec(-1.0f64..1.0, 3),
    ) {
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                let d = x[i] - center[i];
                v += scale[i] * d * d;
                g[i] = 2.0 * scale[i] * d;
            }
            v
        };
        let bounds = [(-1.0, 1.0); 3];
        let mut g0 = [0.0; 3];
        let f0 = f(&x0, &mut g0);
        let r = minimize_bounded(&f, &x0, &bounds, &FitConfig::default()).unwrap();
        prop_assert!(r.objective <= f0);
        for (i, x) in r.params.iter().enumerate() {
            prop_assert!((-1.0..=1.0).contains(x));
            prop_assert!((x - center[i].clamp(-1.0, 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn least_squares_residuals_orthogonal(rows in pvec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 4..30)) {
        let design: Vec<[f64; 3]> = rows.iter().map(|&(a, b, _)| [1.0, a, b]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.2).collect();
        prop_assume!(linear_least_squares(&design, &ys).is_ok());
        let beta = linear_least_squares(&design, &ys).unwrap();
        let scale = 1.0 + ys.iter().map(|y| y.abs()).sum::<f64>() * 5.0;
        for j in 0..3 {
            let dot: f64 = design
                .iter()
                .zip(&ys)
                .map(|(row, y)| row[j] * (y - row.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>()))
                .sum();
            prop_assert!(dot.abs() <= 1e-8 * scale, "{dot}");
        }
    }

    #[test]
    fn logistic_crossing_follows_affine_map(xs in pvec(-3.0f64..3.0, 6..40), flips in pvec(any::<bool>(), 40)) {
        // Overlapping classes so the maximum-likelihood fit is finite.
        let ys: Vec<bool> = xs.iter().zip(&flips).map(|(&x, &f)| (x > 0.0) ^ f).collect();
        prop_assume!(ys.iter().any(|&y| y) && ys.iter().any(|&y| !y));
        let (Ok(a), Ok(b)) = (
            fit_logistic_binary(&xs, &ys),
            fit_logistic_binary(&xs.iter().map(|x| 2.0 * x + 5.0).collect::<Vec<_>>(), &ys),
        ) else {
            return Err(TestCaseError::fail("fit failed"));
        };
        prop_assume!(a.crossing().abs() < 1e3);
        prop_assert!((b.crossing() - (2.0 * a.crossing() + 5.0)).abs() < 1e-6 * (1.0 + a.crossing().abs()));
    }

    // ---- fit ----

    #[test]
    fn increasing_data_gives_positive_exponent(steps in pvec(1e-3f64..0.05, 3..20), start in 0.06f64..0.3) {
        let mut v = start;
        let recs: Vec<_> = steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                v = (v + s).min(0.99 - 1e-3 * (steps.len() - i) as f64);
                record(i, 1e19 * 1.5f64.powi(i as i32), 20.0, v)
            })
            .collect();
        prop_assume!(recs.windows(2).all(|w| w[1].observations[0].value > w[0].observations[0].value));
        let spec = BenchmarkSpec::new("B", MetricType::Acc, 0.0, 0.05).unwrap();
        let m = fit_power_law(&recs, &spec, &FitConfig::default()).unwrap();
        let Law::PowerLaw(l) = m.law else { unreachable!() };
        prop_assert!(l.alpha > 0.0);
    }

    // ---- eval ----

    #[test]
    fn metrics_invariants(pairs in pvec((0.0f64..1.0, 0.01f64..1.0), 1..50), seed in any::<u64>()) {
        let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
        let a: Vec<f64> = pairs.iter().map(|x| x.1).collect();
        let m = compute_metrics(&p, &a).unwrap();
        prop_assert!(m.mae >= 0.0 && m.mae <= m.rmse + 1e-15);
        if let Some(r2) = m.r2 {
            prop_assert!(r2 <= 1.0);
        }
        // A deterministic shuffle of the pairs.
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        idx.sort_by_key(|&i| (i as u64).wrapping_mul(seed | 1).rotate_left(17));
        let ps: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let as_: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
        let s = compute_metrics(&ps, &as_).unwrap();
        prop_assert!((s.mae - m.mae).abs() < 1e-12);
        prop_assert!((s.rmse - m.rmse).abs() < 1e-12);
        prop_assert!((s.mre_pct.unwrap() - m.mre_pct.unwrap()).abs() < 1e-9);
        match (s.r2, m.r2) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    // ---- synth ----

    #[test]
    fn grids_reproducible_per_seed(seed in any::<u64>(), sigma in 0.0f64..0.2) {
        let truth = BenchmarkTruth::new(
            BenchmarkSpec::new("B", MetricType::Acc, 0.25, 0.05).unwrap(),
            GroundTruth::PowerLaw(PowerLawLogAcc::new(1.0, 0.3, 1e21).unwrap()),
        );
        let g = GridSpec::reference_shape(vec![truth]).with_noise(NoiseSpec::new(NoiseKind::GaussianLogit, sigma), seed);
        prop_assert_eq!(generate_grid(&g).unwrap(), generate_grid(&g).unwrap());
    }
}
