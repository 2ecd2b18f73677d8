use nalgebra::DMatrix;
use num_complex::Complex;
use proptest::prelude::*;
use qbcharge_core::analysis::*;
use qbcharge_core::lindblad::{liouvillian_apply, LindbladModel};
use qbcharge_core::models::{
    effective_params, engine_populations, env_modified_params, timescale_separation_ratio, EffectiveParams,
    EngineParams,
};
use qbcharge_core::operator::{DensityMatrix, HilbertSpace, Operator};
use qbcharge_core::symmetric::{embed_reduced, hp_ladder, project_symmetric, ReducedState};

type C = Complex<f64>;

fn direct_moments(beta: f64, n: usize) -> (f64, f64) {
    let p = gibbs_populations(beta, n);
    let mean: f64 = p.iter().enumerate().map(|(m, x)| m as f64 * x).sum();
    let var: f64 = p.iter().enumerate().map(|(m, x)| (m as f64 - mean).powi(2) * x).sum();
    (mean, var)
}

fn matrix(d: usize, entries: &[f64]) -> DMatrix<C> {
    DMatrix::from_fn(d, d, |i, j| C::new(entries[2 * (i * d + j)], entries[2 * (i * d + j) + 1]))
}

fn hermitian(d: usize, entries: &[f64]) -> DMatrix<C> {
    let m = matrix(d, entries);
    (&m + m.adjoint()) * C::new(0.5, 0.0)
}

fn random_state(d: usize, entries: &[f64]) -> DensityMatrix {
    let a = matrix(d, entries);
    let mut rho = &a * a.adjoint();
    let tr = rho.trace();
    rho /= tr;
    let rho = (&rho + rho.adjoint()) * C::new(0.5, 0.0);
    DensityMatrix::new(Operator::from_matrix(rho).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_preserves_trace_and_hermiticity(
        d in 2usize..5,
        h in prop::collection::vec(-1.0f64..1.0, 32),
        a in prop::collection::vec(-1.0f64..1.0, 32),
        b in prop::collection::vec(-1.0f64..1.0, 32),
        r in prop::collection::vec(-1.0f64..1.0, 32),
        rates in prop::collection::vec(0.0f64..2.0, 2),
    ) {
        let h = Operator::from_matrix(hermitian(d, &h)).unwrap();
        let jumps = vec![
            (Operator::from_matrix(matrix(d, &a)).unwrap(), rates[0]),
            (Operator::from_matrix(matrix(d, &b)).unwrap(), rates[1]),
        ];
        let model = LindbladModel::new(h, jumps).unwrap();
        let rho = random_state(d, &r);
        let out = liouvillian_apply(&model, rho.operator()).unwrap();
        prop_assert!(out.trace().norm() < 1e-12);
        prop_assert!(out.hermiticity_deviation() < 1e-12);
    }

    #[test]
    fn closed_form_moments_match_summation(beta in -6.0f64..6.0, n in 1usize..2000) {
        let (mean, var) = direct_moments(beta, n);
        let nf = n as f64;
        prop_assert!((mean_excitation(beta, n) - mean).abs() <= 1e-12 * nf.max(1.0));
        prop_assert!((excitation_variance(beta, n) - var).abs() <= 1e-10 * nf * nf);
    }

    #[test]
    fn moments_stay_accurate_near_zero_temperature_inverse(beta in -1e-4f64..1e-4, n in 1usize..500) {
        let (mean, var) = direct_moments(beta, n);
        prop_assert!((mean_excitation(beta, n) - mean).abs() <= 1e-12 * n as f64);
        prop_assert!((excitation_variance(beta, n) - var).abs() <= 1e-10 * (n * n) as f64);
    }

    #[test]
    fn steady_metrics_are_consistent(beta in -5.0f64..-1e-3, n in 1usize..100_000) {
        for m in [collective_metrics(beta, n), individual_metrics(beta, n)] {
            prop_assert!((0.0..=1.0).contains(&m.energy_density));
            prop_assert!(m.sigma >= 0.0);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&m.ergotropy_ratio));
            prop_assert!((m.ergotropy + m.locked - m.energy).abs() <= 1e-12 * m.energy.max(1.0));
        }
    }

    #[test]
    fn ergotropy_ratio_grows_with_battery_count(beta in -3.0f64..-0.05, n in 1usize..5000) {
        let a = collective_metrics(beta, n).ergotropy_ratio;
        let b = collective_metrics(beta, n + 1).ergotropy_ratio;
        prop_assert!(b >= a - 1e-14);
    }

    #[test]
    fn rate_is_birth_minus_death(beta in -4.0f64..1.0, gamma in 0.01f64..2.0, n in 1usize..300, frac in 0.0f64..=1.0) {
        let m = ((n as f64) * frac).floor() as usize;
        let (nf, mf) = (n as f64, m as f64);
        let up = gamma * (-beta).exp() * (mf + 1.0) * (nf - mf);
        let down = gamma * mf * (nf + 1.0 - mf);
        let w = excitation_rate_w(beta, gamma, n, m).unwrap();
        prop_assert!((w - (up - down)).abs() <= 1e-12 * (up + down).max(1.0));
    }

    #[test]
    fn m_plus_is_last_positive_rate(beta in -4.0f64..-0.01, n in 1usize..2000) {
        let mp = m_plus(beta, n);
        prop_assert!(excitation_rate_w(beta, 1.0, n, mp).unwrap() > 0.0);
        for m in mp + 1..=n {
            prop_assert!(excitation_rate_w(beta, 1.0, n, m).unwrap() <= 0.0);
        }
    }

    #[test]
    fn ladder_obeys_spin_algebra(n in 1usize..60) {
        let l = hp_ladder(n).unwrap();
        let comm = &(&l.pi_s_plus * &l.pi_s_minus) - &(&l.pi_s_minus * &l.pi_s_plus);
        for m in 0..=n {
            prop_assert!((comm.matrix()[(m, m)].re - (2.0 * m as f64 - n as f64)).abs() < 1e-10);
        }
        prop_assert!(comm.hermiticity_deviation() == 0.0);
    }

    #[test]
    fn embedding_round_trips(n in 1usize..7, w in prop::collection::vec(0.01f64..1.0, 7)) {
        let z: f64 = w[..=n].iter().sum();
        let p: Vec<f64> = w[..=n].iter().map(|x| x / z).collect();
        let rs = ReducedState::from_populations(n, &p).unwrap();
        let proj = project_symmetric(&embed_reduced(&rs).unwrap()).unwrap();
        prop_assert!(proj.leakage.abs() < 1e-13);
        let back = proj.state.unwrap();
        for (a, b) in back.populations().iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn inversion_iff_work_condition(bh in 0.0f64..3.0, bc in 0.0f64..3.0, omega_h in 1.1f64..5.0) {
        let p = EngineParams::from_products(bh, bc, omega_h, 1.0, 1.0, 0.01).unwrap();
        let pops = engine_populations(&p);
        prop_assume!((bh - bc).abs() > 1e-9);
        prop_assert_eq!(pops[1] > pops[0], p.work_extraction_condition());
        prop_assert_eq!(effective_params(&p).is_ok(), p.work_extraction_condition());
        if let Ok(e) = effective_params(&p) {
            prop_assert!(e.beta_e_omega0 < 0.0 && e.gamma_e > 0.0);
        }
    }

    #[test]
    fn separation_ratio_scales_as_root_n(g in 0.0f64..0.1, n in 1usize..1000) {
        let p = EngineParams::from_products(0.2, 1.0, 2.0, 1.0, 1.0, g).unwrap();
        let r1 = timescale_separation_ratio(&p, 1);
        prop_assert!((timescale_separation_ratio(&p, n) - r1 * (n as f64).sqrt()).abs() <= 1e-15 * (1.0 + r1 * n as f64));
    }

    #[test]
    fn quiet_environment_leaves_parameters(beta in -4.0f64..-0.01, gamma in 1e-4f64..1.0, benv in -2.0f64..2.0) {
        let e = EffectiveParams::new(beta, gamma).unwrap();
        let m = env_modified_params(&e, 0.0, benv).unwrap();
        prop_assert!((m.params.beta_e_omega0 - beta).abs() < 1e-12);
        prop_assert_eq!(m.params.gamma_e, gamma);
        prop_assert!(m.stable_charging);
    }
}

#[test]
fn ergotropy_deficit_decays_inversely_with_battery_count() {
    let beta = -0.8;
    let scaled: Vec<f64> = [100usize, 300, 1000, 3000, 10_000]
        .iter()
        .map(|&n| n as f64 * (1.0 - collective_metrics(beta, n).ergotropy_ratio))
        .collect();
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi / lo < 1.05, "{scaled:?}");
}

#[test]
fn fluctuation_tail_decays_exponentially() {
    let beta = -0.8;
    let r20 = fluctuation_residual(beta, 20);
    let direct = fluctuation_asymptote(beta) - fluctuation_exact(beta, 20);
    assert!((r20 - direct).abs() < 1e-13);

    // least-squares slope of ln r against N over [20, 60]
    let pts: Vec<(f64, f64)> = (20..=60).map(|n| (n as f64, fluctuation_residual(beta, n).ln())).collect();
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / k, sy / k);
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = num / den;
    assert!(slope <= beta / 2.0, "slope {slope}");
    let bound = |n: usize| n as f64 * (beta * n as f64 / 2.0).exp();
    for n in 20..=60 {
        assert!(fluctuation_residual(beta, n) <= bound(n));
    }
}

#[test]
fn singlet_and_mixed_leakage() {
    let space = HilbertSpace::qubits(2).unwrap();
    let mixed = project_symmetric(&DensityMatrix::maximally_mixed(&space)).unwrap();
    assert!((mixed.leakage - 0.25).abs() < 1e-15);
}
