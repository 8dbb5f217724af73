use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use snpirt::inference::{chi2_upper, ks_uniform};
use snpirt::likelihood::logistic;
use snpirt::params::unscale_item_params;
use snpirt::snp::{latent_moments_closed_form, SnpDensity};
use snpirt::{gauss_hermite_rule, rescale_item_params, ItemParams, LatentMoments, SnpAngles};

fn angles() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-FRAC_PI_2..FRAC_PI_2, 1..=2)
}

proptest! {
    #[test]
    fn density_integrates_to_one(phi in angles()) {
        let d = SnpDensity::new(&SnpAngles::new(phi).unwrap()).unwrap();
        let rule = gauss_hermite_rule(40).unwrap();
        let mass = rule.integrate(|z| d.poly(z).powi(2));
        prop_assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_moments_agree_with_closed_form(phi in angles()) {
        let a = SnpAngles::new(phi).unwrap();
        let d = SnpDensity::new(&a).unwrap();
        let (m, c) = (d.moments(), latent_moments_closed_form(&a));
        prop_assert!((m.mean - c.mean).abs() < 1e-12);
        prop_assert!((m.variance - c.variance).abs() < 1e-12);
        prop_assert!(m.variance > 0.0);
    }

    #[test]
    fn rescaling_round_trips(
        a0 in prop::collection::vec(-2.0..2.0f64, 3),
        a1 in prop::collection::vec(0.2..2.5f64, 3),
        mean in -2.0..2.0f64,
        var in 0.2..4.0f64,
    ) {
        let raw = ItemParams::new(a0, a1).unwrap();
        let mom = LatentMoments::new(mean, var).unwrap();
        let back = unscale_item_params(&rescale_item_params(&raw, &mom).unwrap(), &mom).unwrap();
        for (x, y) in raw.to_vec().iter().zip(back.to_vec()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_is_a_probability(eta in -800.0..800.0f64) {
        let p = logistic(eta);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + logistic(-eta) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chi2_tail_decreases(x in 0.0..50.0f64, dx in 0.01..5.0f64, dof in 0.3..20.0f64) {
        let (a, b) = (chi2_upper(x, dof).unwrap(), chi2_upper(x + dx, dof).unwrap());
        prop_assert!(b <= a && (0.0..=1.0).contains(&b));
    }

    #[test]
    fn ks_p_value_is_a_probability(u in prop::collection::vec(0.0..=1.0f64, 1..200)) {
        let r = ks_uniform(&u).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!(r.statistic > 0.0 && r.statistic <= 1.0);
    }
}
