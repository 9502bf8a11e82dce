use clear_core::experiments::metrics::psnr_from_mse;
use clear_core::experiments::sweep::{geometric_grid, sweep, to_csv};
use clear_core::experiments::{
    degrade, mse, phantom, psnr, ssim, DegradationSpec, EstimatorId, EstimatorSettings, PhantomId,
};
use clear_core::Grid;
use proptest::prelude::*;

#[test]
fn sweep_csv_is_independent_of_thread_count() {
    let s = EstimatorSettings::new(EstimatorId::TvIso, 1.0);
    let grid = geometric_grid(3.0, 60.0, 5).unwrap();
    let spec = DegradationSpec::awgn(15.0, 12);
    let a = sweep(&s, &grid, PhantomId::SheppLike, 20, &spec, 1).unwrap();
    let b = sweep(&s, &grid, PhantomId::SheppLike, 20, &spec, 3).unwrap();
    assert_eq!(to_csv(&a), to_csv(&b));
    assert_eq!(a.len(), 5);
    assert!(a.windows(2).all(|w| w[0].param < w[1].param));
}

#[test]
fn nlm_sweep_refit_prefers_larger_bandwidth() {
    let s = EstimatorSettings {
        nlm_s: 3,
        sigma_noise: 20.0,
        ..EstimatorSettings::new(EstimatorId::Nlm, 1.0)
    };
    let grid = geometric_grid(1e3, 1e6, 12).unwrap();
    let r = sweep(
        &s,
        &grid,
        PhantomId::TextureStripes,
        32,
        &DegradationSpec::awgn(20.0, 7),
        1,
    )
    .unwrap();
    let best = |f: fn(&clear_core::experiments::SweepRecord) -> f64| {
        r.iter().min_by(|a, b| f(a).total_cmp(&f(b))).unwrap().param
    };
    assert!(best(|x| x.mse_refit) >= best(|x| x.mse_orig));
}

#[test]
fn degradations_are_reproducible_per_seed() {
    let x0 = phantom(PhantomId::SheppLike, 24).unwrap();
    for spec in [
        DegradationSpec::awgn(10.0, 3),
        DegradationSpec::mask(0.4, 5.0, 3),
        DegradationSpec::blur(1.2, 5.0, 3),
    ] {
        let (a, _) = degrade(&x0, &spec).unwrap();
        let (b, _) = degrade(&x0, &spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = degrade(&x0, &DegradationSpec { seed: 4, ..spec }).unwrap();
        assert_ne!(a, c);
    }
}

#[test]
fn metrics_on_known_pairs() {
    let a = Grid::filled(16, 16, 100.0);
    let b = Grid::filled(16, 16, 110.0);
    assert_eq!(mse(&a, &b).unwrap(), 100.0);
    let expect = 10.0 * (255.0f64 * 255.0 / 100.0).log10();
    assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-12);
    assert!(psnr_from_mse(0.0).is_infinite());
    let x = phantom(PhantomId::Squares2d, 16).unwrap();
    assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mask_zeroes_exact_fraction(frac in 0.0f64..0.9, seed in 0u64..10_000) {
        let x0 = Grid::filled(10, 10, 1.0);
        let (_, phi) = degrade(&x0, &DegradationSpec::mask(frac, 0.0, seed)).unwrap();
        let kept = phi.apply(x0.as_slice()).unwrap().iter().filter(|v| **v != 0.0).count();
        prop_assert_eq!(kept, 100 - (frac * 100.0).floor() as usize);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(seed in 0u64..1000) {
        let x0 = phantom(PhantomId::SheppLike, 16).unwrap();
        let (y, _) = degrade(&x0, &DegradationSpec::awgn(25.0, seed)).unwrap();
        let s1 = ssim(&x0, &y).unwrap();
        let s2 = ssim(&y, &x0).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!(s1 <= 1.0 && s1 > -1.0);
    }
}
