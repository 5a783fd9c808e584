use proptest::prelude::*;
use sdesr::{integrate_moment_odes, NoiseSchedule, SdeKind, SdeModel};

fn kind() -> impl Strategy<Value = SdeKind> {
    prop_oneof![Just(SdeKind::Ve), Just(SdeKind::Vp), Just(SdeKind::SubVp)]
}

proptest! {
    #[test]
    fn closed_form_matches_moment_odes(kind in kind(), t in 1e-5f64..1.0) {
        let model = SdeModel::new(kind, NoiseSchedule::default());
        let closed = model.marginal_prob(t).unwrap();
        let ode = integrate_moment_odes(&model, t, 4000).unwrap();
        prop_assert!((closed.std - ode.std).abs() <= 5e-3 * closed.std, "{kind} t={t}: {} vs {}", closed.std, ode.std);
        prop_assert!((closed.mean_coeff - ode.mean_coeff).abs() <= 1e-4);
    }

    #[test]
    fn std_is_nondecreasing(kind in kind(), a in 1e-5f64..1.0, b in 1e-5f64..1.0) {
        let model = SdeModel::new(kind, NoiseSchedule::default());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(model.marginal_prob(lo).unwrap().std <= model.marginal_prob(hi).unwrap().std);
    }

    #[test]
    fn ve_mean_is_preserved(t in 1e-5f64..1.0) {
        let model = SdeModel::new(SdeKind::Ve, NoiseSchedule::default());
        prop_assert_eq!(model.marginal_prob(t).unwrap().mean_coeff, 1.0);
    }

    #[test]
    fn subvp_std_is_vp_std_squared(t in 1e-5f64..1.0) {
        let vp = SdeModel::new(SdeKind::Vp, NoiseSchedule::default()).marginal_prob(t).unwrap();
        let sub = SdeModel::new(SdeKind::SubVp, NoiseSchedule::default()).marginal_prob(t).unwrap();
        prop_assert!((sub.std - vp.std * vp.std).abs() <= 4.0 * f64::EPSILON * vp.std);
        prop_assert_eq!(sub.mean_coeff, vp.mean_coeff);
    }

    #[test]
    fn subvp_diffusion_is_below_vp(t in 1e-5f64..1.0) {
        let vp = SdeModel::new(SdeKind::Vp, NoiseSchedule::default()).diffusion(t).unwrap();
        let sub = SdeModel::new(SdeKind::SubVp, NoiseSchedule::default()).diffusion(t).unwrap();
        prop_assert!(sub <= vp);
    }
}
