use proptest::prelude::*;
use sdesr::score::{AnalyticGaussianScore, GaussianDataSpec, ScoreFunction};
use sdesr::{ImageTensor, NoiseSchedule, SdeKind, SdeModel};

fn log_density(spec: &GaussianDataSpec, model: &SdeModel, x: &[f64], t: f64) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let (m, var) = spec.marginal(model, i, t).unwrap();
            -0.5 * (v - m).powi(2) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
        })
        .sum()
}

fn kind() -> impl Strategy<Value = SdeKind> {
    prop_oneof![Just(SdeKind::Ve), Just(SdeKind::Vp), Just(SdeKind::SubVp)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn analytic_score_is_the_log_density_gradient(
        kind in kind(),
        t in 1e-3f64..1.0,
        mean in prop::collection::vec(-1.0f64..1.0, 2),
        variance in 0.05f64..2.0,
        unit in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let model = SdeModel::new(kind, NoiseSchedule::default());
        let spec = GaussianDataSpec::new(mean.clone(), variance).unwrap();
        // Place x within a couple of marginal standard deviations of the mode.
        let x: Vec<f64> = (0..2)
            .map(|i| {
                let (m, var) = spec.marginal(&model, i, t).unwrap();
                // Keep the point representable in f32 without changing its offset scale.
                ((m + unit[i] * var.sqrt()) as f32) as f64
            })
            .collect();
        let score = AnalyticGaussianScore::new(spec.clone(), model)
            .score(&ImageTensor::from_vector(&[x[0] as f32, x[1] as f32]), &ImageTensor::from_vector(&[0.0, 0.0]), t)
            .unwrap();
        for i in 0..2 {
            let (_, var) = spec.marginal(&model, i, t).unwrap();
            let h = 1e-4;
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (log_density(&spec, &model, &xp, t) - log_density(&spec, &model, &xm, t)) / (2.0 * h);
            let exact = f64::from(score.as_slice()[i]);
            // Near the mode both sides vanish; fall back to the score's natural scale.
            let tol = 1e-5 * fd.abs().max(1.0 / var.sqrt());
            prop_assert!((fd - exact).abs() <= tol, "coord {i}: fd {fd} vs {exact}");
        }
    }
}
