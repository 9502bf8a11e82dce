use clear_core::closed_form::{hard_threshold, soft_threshold, TikhonovModel};
use clear_core::experiments::{degrade, phantom, DegradationSpec, PhantomId};
use clear_core::primal_dual::{solve_analysis, solve_estimate, PDConfig, Regularizer};
use clear_core::refit::{
    self, clear_one_step, clear_two_step, dense_jacobian, invariant_refit_dense, AnalysisProvider, JvpProvider,
    LinearProvider, SoftThresholdProvider, TikhonovProvider,
};
use clear_core::{Grid, LinearMap};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight(cfg: PDConfig) -> PDConfig {
    cfg.with_rel_tol(1e-13).with_max_iters(200_000)
}

/// Mean of `y` over each run of equal values in `x`.
fn plateau_means(x: &Grid, y: &Grid) -> Grid {
    let v = x.as_slice();
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    for i in 1..=v.len() {
        if i == v.len() || (v[i] - v[i - 1]).abs() > 1e-6 * x.max_abs() {
            let m = y.as_slice()[start..i].iter().sum::<f64>() / (i - start) as f64;
            out[start..i].iter_mut().for_each(|o| *o = m);
            start = i;
        }
    }
    Grid::new(v.len(), 1, out).unwrap()
}

#[test]
fn tv1d_refit_equals_plateau_means() {
    let x0 = phantom(PhantomId::Step1d, 96).unwrap();
    let (y, phi) = degrade(&x0, &DegradationSpec::awgn(10.0, 21)).unwrap();
    let gamma = LinearMap::forward_gradient_1d(96);
    let cfg = tight(PDConfig::new(25.0, Regularizer::L1Analysis, &gamma));
    let res = solve_analysis(&phi, &gamma, &y, &cfg, &y).unwrap();
    let r = clear_one_step(&res.estimate, &res.jvp_out, &phi, &y).unwrap();
    let oracle = plateau_means(&res.estimate, &y);
    assert!(r.refit.rel_err(&oracle) <= 1e-5, "{}", r.refit.rel_err(&oracle));
    assert!((r.rho - 1.0).abs() <= 1e-8);
}

#[test]
fn one_step_matches_two_step_for_tv() {
    let x0 = phantom(PhantomId::Squares2d, 16).unwrap();
    let (y, phi) = degrade(&x0, &DegradationSpec::awgn(20.0, 4)).unwrap();
    let gamma = LinearMap::forward_gradient_2d(16, 16);
    for reg in [Regularizer::L1Analysis, Regularizer::L12Analysis] {
        let cfg = tight(PDConfig::new(15.0, reg, &gamma));
        let res = solve_analysis(&phi, &gamma, &y, &cfg, &y).unwrap();
        let one = clear_one_step(&res.estimate, &res.jvp_out, &phi, &y).unwrap();
        let prov = AnalysisProvider {
            phi: phi.clone(),
            gamma: gamma.clone(),
            cfg,
        };
        let two = clear_two_step(&prov, &phi, &y).unwrap();
        assert!(
            one.refit.rel_err(&two.refit) <= 1e-5,
            "{reg:?}: {}",
            one.refit.rel_err(&two.refit)
        );
    }
}

#[test]
fn algorithmic_jvp_matches_finite_differences_on_a_fixed_budget() {
    let x0 = phantom(PhantomId::SheppLike, 16).unwrap();
    let (y, phi) = degrade(&x0, &DegradationSpec::awgn(15.0, 9)).unwrap();
    let gamma = LinearMap::forward_gradient_2d(16, 16);
    let d = Grid::new(16, 16, (0..256).map(|i| ((i * 31) % 17) as f64 - 8.0).collect()).unwrap();
    for reg in [Regularizer::L1Analysis, Regularizer::L12Analysis] {
        let cfg = PDConfig::new(10.0, reg, &gamma).with_rel_tol(0.0).with_max_iters(4000);
        let alg = solve_analysis(&phi, &gamma, &y, &cfg, &d).unwrap().jvp_out;
        let fd = refit::fd_jvp_central(|v| Ok(solve_estimate(&phi, &gamma, v, &cfg)?.estimate), &y, &d, None).unwrap();
        assert!(fd.rel_err(&alg) <= 1e-4, "{reg:?}: {}", fd.rel_err(&alg));
    }
}

#[test]
fn rho_is_one_when_phi_j_is_a_projector() {
    // Small dense Lasso: ΦJ projects onto the span of the active columns.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, p) = (12, 8);
    let m = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    let phi = LinearMap::dense(
        m,
        LinearMap::identity(p, 1).in_space(),
        LinearMap::identity(n, 1).in_space(),
    )
    .unwrap();
    let x0: Vec<f64> = vec![30.0, 0.0, 0.0, -20.0, 0.0, 0.0, 10.0, 0.0];
    let clean = phi.apply(&x0).unwrap();
    let y = Grid::new(n, 1, clean.iter().map(|c| c + rng.random::<f64>() - 0.5).collect()).unwrap();
    let gamma = LinearMap::identity(p, 1);
    let cfg = tight(PDConfig::new(0.5, Regularizer::L1Analysis, &gamma));
    let prov = AnalysisProvider {
        phi: phi.clone(),
        gamma,
        cfg,
    };
    let r = clear_two_step(&prov, &phi, &y).unwrap();
    assert!((r.rho - 1.0).abs() <= 1e-8, "{}", r.rho);

    // Soft thresholding, many draws.
    let id = LinearMap::identity(64, 1);
    for _ in 0..20 {
        let y = Grid::new(64, 1, (0..64).map(|_| rng.random::<f64>() * 200.0 - 100.0).collect()).unwrap();
        let r = clear_two_step(&SoftThresholdProvider { lambda: 30.0 }, &id, &y).unwrap();
        assert!((r.rho - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn refit_support_stays_inside_estimate_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let id = LinearMap::identity(128, 1);
    for _ in 0..20 {
        let y = Grid::new(128, 1, (0..128).map(|_| rng.random::<f64>() * 100.0 - 50.0).collect()).unwrap();
        let lambda = 5.0 + 40.0 * rng.random::<f64>();
        let r = clear_two_step(&SoftThresholdProvider { lambda }, &id, &y).unwrap();
        let est = soft_threshold(&y, lambda).unwrap().estimate;
        for i in 0..128 {
            if est[i] == 0.0 {
                assert_eq!(r.refit[i], 0.0);
            }
        }
    }
}

#[test]
fn invariant_refit_and_clear_agree_in_data_space_for_projectors() {
    let x0 = phantom(PhantomId::Step1d, 48).unwrap();
    let (y, phi) = degrade(&x0, &DegradationSpec::awgn(10.0, 3)).unwrap();
    let gamma = LinearMap::forward_gradient_1d(48);
    let cfg = tight(PDConfig::new(25.0, Regularizer::L1Analysis, &gamma));
    let prov = AnalysisProvider {
        phi: phi.clone(),
        gamma: gamma.clone(),
        cfg,
    };
    let inv = invariant_refit_dense(&prov, &phi, &y).unwrap();
    let clear = clear_two_step(&prov, &phi, &y).unwrap().refit;
    let a = Grid::new(48, 1, phi.apply(inv.as_slice()).unwrap()).unwrap();
    let b = Grid::new(48, 1, phi.apply(clear.as_slice()).unwrap()).unwrap();
    assert!(a.rel_err(&b) <= 1e-8, "{}", a.rel_err(&b));

    // Soft thresholding: the invariant re-fitting is hard thresholding.
    let y = Grid::new(10, 1, vec![3.0, -0.2, 5.0, 0.9, -7.0, 1.5, 0.0, -1.1, 2.2, 0.4]).unwrap();
    let inv = invariant_refit_dense(&SoftThresholdProvider { lambda: 1.0 }, &LinearMap::identity(10, 1), &y).unwrap();
    assert!(inv.rel_err(&hard_threshold(&y, 1.0).unwrap().estimate) < 1e-14);
}

#[test]
fn tikhonov_refit_matches_dense_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = DMatrix::from_fn(
        12,
        12,
        |i, j| if i == j { 1.0 } else { 0.0 } + 0.2 * (rng.random::<f64>() - 0.5),
    );
    let phi = LinearMap::dense_1d(m.clone());
    let model = TikhonovModel::new(phi.clone(), LinearMap::forward_gradient_1d(12), 3.0).unwrap();
    let j = model.jacobian_dense().unwrap();
    let prov = TikhonovProvider(model);
    let y = Grid::new(12, 1, (0..12).map(|_| rng.random::<f64>() * 100.0).collect()).unwrap();
    let r = clear_two_step(&prov, &phi, &y).unwrap();
    let yv = DVector::from_column_slice(y.as_slice());
    let x = &j * &yv;
    let delta = &yv - &m * &x;
    let pjd = &m * &j * &delta;
    let rho = pjd.dot(&delta) / pjd.norm_squared();
    let expect = &x + &j * &delta * rho;
    let got = DVector::from_column_slice(r.refit.as_slice());
    assert!((&got - &expect).norm() <= 1e-10 * expect.norm());
    assert_eq!(dense_jacobian(&prov, &y).unwrap().shape(), (12, 12));
}

#[test]
fn linear_denoiser_refit_and_twicing_closed_forms() {
    // Φ = Id and a symmetric W: CLEAR = (1+ρ)W − ρW², twicing = 2W − W².
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 16;
    let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
    let w = (&b * b.transpose()) / (n as f64 * 4.0);
    let lin = LinearProvider { w: w.clone() };
    let phi = LinearMap::identity(n, 1);
    let y = Grid::new(n, 1, (0..n).map(|_| rng.random::<f64>() * 10.0).collect()).unwrap();
    let r = clear_two_step(&lin, &phi, &y).unwrap();
    let yv = DVector::from_column_slice(y.as_slice());
    let clear = (&w * (1.0 + r.rho) - &w * &w * r.rho) * &yv;
    assert!((DVector::from_column_slice(r.refit.as_slice()) - &clear).norm() <= 1e-10 * clear.norm());
    let twice = refit::boost_twicing(|v| lin.estimate(v), &phi, &y, 2).unwrap();
    let tw = (&w * 2.0 - &w * &w) * &yv;
    assert!((DVector::from_column_slice(twice.as_slice()) - tw).norm() <= 1e-10 * clear.norm());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rho_matches_its_definition(v in prop::collection::vec(-10.0f64..10.0, 2..20), a in -3.0f64..3.0) {
        let n = v.len();
        let w: Vec<f64> = v.iter().enumerate().map(|(i, x)| a * x + (i as f64).sin()).collect();
        let num: f64 = w.iter().zip(&v).map(|(p, q)| p * q).sum();
        let den: f64 = w.iter().map(|p| p * p).sum();
        let dsq: f64 = v.iter().map(|p| p * p).sum();
        let r = refit::rho(&w, &v, refit::RHO_GUARD);
        if den > refit::RHO_GUARD * dsq && den > 0.0 {
            prop_assert!((r - num / den).abs() <= 1e-12 * (num / den).abs().max(1.0));
        } else {
            prop_assert_eq!(r, 1.0);
        }
        prop_assert_eq!(n, w.len());
    }

    #[test]
    fn refit_identity_holds(seed in 0u64..1000, lambda in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = Grid::new(24, 1, (0..24).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect()).unwrap();
        let model = TikhonovModel::new(LinearMap::identity(24, 1), LinearMap::forward_gradient_1d(24), lambda).unwrap();
        let prov = TikhonovProvider(model);
        let r = clear_two_step(&prov, &LinearMap::identity(24, 1), &y).unwrap();
        let expect = &r.estimate + &r.jvp_delta.scale(r.rho);
        prop_assert!(r.refit.rel_err(&expect) <= 1e-14);
        let again = prov.jvp(&y, &(&r.delta.scale(2.0) + &y)).unwrap();
        let lin = &r.jvp_delta.scale(2.0) + &prov.jvp(&y, &y).unwrap();
        prop_assert!(again.rel_err(&lin) <= 1e-8);
    }
}
