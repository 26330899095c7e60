use std::f64::consts::PI;

use num_complex::Complex64;
use omit_core::linear_response::{lambda_of, linspace, spectrum, transmission};
use omit_core::stability::{build_stability_matrix, eigenvalues};
use omit_core::steady_state::{solve_steady_state, steady_residual};
use omit_core::{default_params, SystemParams};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = SystemParams> {
    (0.0..2.0 * PI, 0.0..2.0 * PI, 0.05f64..0.8, 0.2f64..3.0, 0.0f64..80e-6).prop_map(|(phi2, phimu, mu, g2, pc)| {
        default_params()
            .with_g2_phase(phi2)
            .with_mu_phase(phimu)
            .with_mu_over_span(mu)
            .with_g2_over_g1(g2)
            .with_pump_power(pc)
    })
}

fn offset() -> impl Strategy<Value = f64> {
    0.97f64..1.03
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gauge_shift_leaves_transmission_unchanged(p in point(), theta in 0.0..2.0 * PI, w in offset()) {
        let q = p.clone().with_g2_phase(p.g2_phase + theta).with_mu_phase(p.mu_phase - theta);
        let (sp, _) = solve_steady_state(&p).unwrap();
        let (sq, _) = solve_steady_state(&q).unwrap();
        prop_assert!((sp.n_cav - sq.n_cav).abs() <= 1e-10 * sp.n_cav.max(1e-300));
        let omega = w * p.omega_m;
        let a = transmission(&p, &sp, omega).unwrap().t_p;
        let b = transmission(&q, &sq, omega).unwrap().t_p;
        prop_assert!((a - b).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn eigenvalues_close_under_conjugation_and_sum_to_trace(p in point()) {
        let (s, _) = solve_steady_state(&p).unwrap();
        let ev = eigenvalues(&build_stability_matrix(&p, &s)).unwrap();
        let wm = p.omega_m;
        let mut pool: Vec<Complex64> = ev.iter().map(|z| z.conj()).collect();
        for z in &ev {
            let (k, d) = pool.iter().enumerate().map(|(k, w)| (k, (z - w).norm())).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            prop_assert!(d <= 1e-8 * wm);
            pool.remove(k);
        }
        let sum: Complex64 = ev.iter().sum();
        prop_assert!((sum - (-p.kappa - p.gamma1 - p.gamma2)).norm() <= 1e-10 * wm);
    }

    #[test]
    fn steady_state_is_self_consistent(p in point()) {
        let (s, _) = solve_steady_state(&p).unwrap();
        let eps = p.drive().unwrap().eps_l;
        prop_assert!(steady_residual(&p, &s) <= 1e-9 * p.port_coupling() * eps.max(1.0));
    }

    #[test]
    fn anti_stokes_amplitude_satisfies_its_denominator(p in point(), w in offset()) {
        let (s, _) = solve_steady_state(&p).unwrap();
        let r = transmission(&p, &s, w * p.omega_m).unwrap();
        let drive = p.port_coupling() * p.drive().unwrap().eps_p;
        prop_assert!((r.a1_minus * r.denominator(s.n_cav) - drive).norm() <= 1e-12 * drive);
        prop_assert!((r.t_p - (1.0 - p.eta * p.kappa * r.a1_minus / drive)).norm() <= 1e-12 * r.t_p.norm().max(1.0));
    }

    #[test]
    fn uncoupled_kernel_is_sum_of_resonators(p in point(), w in offset()) {
        let mut p = p;
        p.mu_mag = 0.0;
        let omega = w * p.omega_m;
        let single = |g: f64, gamma: f64| {
            let plus = Complex64::new(gamma / 2.0, -(omega + p.omega_m));
            let minus = Complex64::new(gamma / 2.0, -(omega - p.omega_m));
            g * g * (1.0 / plus - 1.0 / minus)
        };
        let expected = single(p.g1_mag, p.gamma1) + single(p.g2_mag, p.gamma2);
        let got = lambda_of(&p, omega).unwrap();
        prop_assert!((got - expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn mirror_phase_preserves_transmission_magnitude(p in point(), w in offset()) {
        // phi2 -> -phi2 with a real intermechanical coupling conjugates the loop.
        let p = p.with_mu_phase(0.0);
        let q = p.clone().with_g2_phase(-p.g2_phase);
        let (sp, _) = solve_steady_state(&p).unwrap();
        let (sq, _) = solve_steady_state(&q).unwrap();
        let omega = w * p.omega_m;
        let a = transmission(&p, &sp, omega).unwrap().abs_t;
        let b = transmission(&q, &sq, omega).unwrap().abs_t;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
    }
}

#[test]
fn spectrum_is_independent_of_grid_direction() {
    let p = default_params().with_g2_phase(0.8);
    let grid = linspace(0.99 * p.omega_m, 1.01 * p.omega_m, 301);
    let mut rev = grid.clone();
    rev.reverse();
    let a = spectrum(&p, &grid).unwrap();
    let b = spectrum(&p, &rev).unwrap();
    assert_eq!(a.omegas, b.omegas);
    assert_eq!(a.tau_g(), b.tau_g());
    assert_eq!(a.params_fingerprint, b.params_fingerprint);
}
