//! Mean-field steady state of the pumped loop.
//!
//! Both mechanical mean fields are linear in the photon number `n = |ā|²`,
//! so the radiation-pressure frequency shift is `c·n` for a real constant `c`
//! and the cavity amplitude obeys the real cubic
//! `n·[(Δ − c·n)² + κ²/4] = ηκε_l²`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::SystemParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SteadyState {
    pub a_bar: Complex64,
    pub b1_bar: Complex64,
    pub b2_bar: Complex64,
    /// `|ā|²`.
    pub n_cav: f64,
}

impl SteadyState {
    pub const ZERO: SteadyState = SteadyState {
        a_bar: Complex64::new(0.0, 0.0),
        b1_bar: Complex64::new(0.0, 0.0),
        b2_bar: Complex64::new(0.0, 0.0),
        n_cav: 0.0,
    };

    /// Radiation-pressure shift `(g1 b̄1* + g1* b̄1) + (g2 b̄2* + g2* b̄2)`, rad/s.
    pub fn frequency_shift(&self, p: &SystemParams) -> f64 {
        2.0 * (p.g1().conj() * self.b1_bar).re + 2.0 * (p.g2().conj() * self.b2_bar).re
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyStateDiagnostics {
    /// Positive real roots of the photon-number cubic, ascending.
    pub cubic_roots: Vec<f64>,
    pub selected_index: usize,
    pub multistable: bool,
    /// Shift coefficient `c`, rad/s per photon.
    pub shift_coefficient: f64,
}

/// Mechanical mean fields per unit photon number, `(b̄1/n, b̄2/n)`.
pub fn mechanical_response(p: &SystemParams) -> Result<(Complex64, Complex64)> {
    let (g1, g2, mu) = (p.g1(), p.g2(), p.mu());
    let r1 = I * p.omega_m + p.gamma1 / 2.0;
    let r2 = I * p.omega_m + p.gamma2 / 2.0;
    let den = r1 * r2 + mu.norm_sqr();
    if den.norm() < 1e-12 * p.omega_m * p.omega_m {
        return Err(Error::MechanicalSingularity { magnitude: den.norm() });
    }
    let b1 = (I * g1 * r2 - mu * g2) / den;
    let b2 = (I * g2 + I * mu.conj() * b1) / r2;
    Ok((b1, b2))
}

/// `c` such that `2Re(g1* b̄1) + 2Re(g2* b̄2) = c·n`.
pub fn effective_shift_coefficient(p: &SystemParams) -> Result<f64> {
    let (b1, b2) = mechanical_response(p)?;
    Ok(2.0 * (p.g1().conj() * b1).re + 2.0 * (p.g2().conj() * b2).re)
}

struct Cubic {
    /// Coefficients of n^3, n^2, n, 1.
    c: [f64; 4],
}

impl Cubic {
    fn eval(&self, n: f64) -> f64 {
        ((self.c[0] * n + self.c[1]) * n + self.c[2]) * n + self.c[3]
    }

    fn deriv(&self, n: f64) -> f64 {
        (3.0 * self.c[0] * n + 2.0 * self.c[1]) * n + self.c[2]
    }

    /// Sum of term magnitudes, the scale for relative residuals.
    fn scale(&self, n: f64) -> f64 {
        (self.c[0] * n * n * n).abs() + (self.c[1] * n * n).abs() + (self.c[2] * n).abs() + self.c[3].abs()
    }

    fn relative_residual(&self, n: f64) -> f64 {
        self.eval(n).abs() / self.scale(n)
    }

    /// All real roots in `(lo, hi]`, found by splitting at the stationary
    /// points and bisecting each monotone piece with a sign change.
    fn roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut cuts = vec![lo];
        let (qa, qb, qc) = (3.0 * self.c[0], 2.0 * self.c[1], self.c[2]);
        let mut stationary = Vec::new();
        if qa != 0.0 {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let s = disc.sqrt();
                // numerically stable quadratic roots
                let q = -0.5 * (qb + qb.signum() * s);
                if q != 0.0 {
                    stationary.push(q / qa);
                    stationary.push(qc / q);
                } else {
                    stationary.push(0.0);
                }
            }
        } else if qb != 0.0 {
            stationary.push(-qc / qb);
        }
        stationary.sort_by(|a, b| a.total_cmp(b));
        for s in stationary {
            if s > lo && s < hi {
                cuts.push(s);
            }
        }
        cuts.push(hi);

        let mut roots: Vec<f64> = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fb == 0.0 {
                roots.push(b);
                continue;
            }
            if fa.signum() == fb.signum() || fa == 0.0 {
                continue;
            }
            roots.push(self.refine(a, b, fa));
        }
        roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * y.abs());
        roots.retain(|&r| r > lo);
        roots
    }

    fn refine(&self, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = self.eval(m);
            if fm == 0.0 {
                return m;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        // one Newton polish from the midpoint, kept only if it stays inside
        let m = 0.5 * (a + b);
        let d = self.deriv(m);
        if d != 0.0 {
            let n = m - self.eval(m) / d;
            if n >= a && n <= b && self.eval(n).abs() <= self.eval(m).abs() {
                return n;
            }
        }
        m
    }
}

/// Solves the mean-field steady state, taking the lowest-power branch when
/// the cubic has several positive roots.
pub fn solve_steady_state(p: &SystemParams) -> Result<(SteadyState, SteadyStateDiagnostics)> {
    let (b1_per_n, b2_per_n) = mechanical_response(p)?;
    let c = 2.0 * (p.g1().conj() * b1_per_n).re + 2.0 * (p.g2().conj() * b2_per_n).re;
    let eps_l = p.drive()?.eps_l;
    let rhs = p.eta * p.kappa * eps_l * eps_l;

    if rhs == 0.0 {
        return Ok((
            SteadyState::ZERO,
            SteadyStateDiagnostics {
                cubic_roots: vec![0.0],
                selected_index: 0,
                multistable: false,
                shift_coefficient: c,
            },
        ));
    }

    let (delta, kappa) = (p.delta, p.kappa);
    let cubic = Cubic {
        c: [c * c, -2.0 * delta * c, delta * delta + kappa * kappa / 4.0, -rhs],
    };
    let n_upper = 4.0 * p.eta * eps_l * eps_l / kappa * (1.0 + 4.0 * delta * delta / (kappa * kappa));
    let roots = cubic.roots_in(0.0, n_upper);
    for &r in &roots {
        if cubic.relative_residual(r) > 1e-10 {
            return Err(Error::Infeasible(format!(
                "root {r:e} fails the cubic check (relative residual {:e})",
                cubic.relative_residual(r)
            )));
        }
    }
    let n = *roots
        .first()
        .ok_or_else(|| Error::Infeasible(format!("no root in (0, {n_upper:e}]")))?;

    let a_bar = p.port_coupling() * eps_l / (I * delta + kappa / 2.0 - I * c * n);
    let n_cav = a_bar.norm_sqr();
    let state = SteadyState {
        a_bar,
        b1_bar: b1_per_n * n_cav,
        b2_bar: b2_per_n * n_cav,
        n_cav,
    };
    let multistable = roots.len() >= 3;
    Ok((
        state,
        SteadyStateDiagnostics {
            cubic_roots: roots,
            selected_index: 0,
            multistable,
            shift_coefficient: c,
        },
    ))
}

/// Largest modulus of the three mean-field time derivatives at `state` with
/// the probe switched off.
pub fn steady_residual(p: &SystemParams, state: &SteadyState) -> f64 {
    let (g1, g2, mu) = (p.g1(), p.g2(), p.mu());
    let eps_l = p.drive().map(|d| d.eps_l).unwrap_or(f64::NAN);
    let SteadyState { a_bar: a, b1_bar: b1, b2_bar: b2, .. } = *state;
    let n = a.norm_sqr();
    let shift = (g1 * b1.conj() + g1.conj() * b1) + (g2 * b2.conj() + g2.conj() * b2);
    let da = -I * p.delta * a + I * a * shift + p.port_coupling() * eps_l - p.kappa / 2.0 * a;
    let db1 = -I * p.omega_m * b1 + I * mu * b2 + I * g1 * n - p.gamma1 / 2.0 * b1;
    let db2 = -I * p.omega_m * b2 + I * mu.conj() * b1 + I * g2 * n - p.gamma2 / 2.0 * b2;
    da.norm().max(db1.norm()).max(db2.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_params;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn base() -> SystemParams {
        default_params().with_mu_over_span(0.5)
    }

    /// Mechanical fields evaluated straight from the printed steady-state
    /// expressions for a given photon number.
    fn printed_b(p: &SystemParams, n: f64) -> (Complex64, Complex64) {
        let (g1, g2, mu) = (p.g1(), p.g2(), p.mu());
        let b1 = (I * g1 * (I * p.omega_m + p.gamma2 / 2.0) - mu * g2) * n
            / ((I * p.omega_m + p.gamma1 / 2.0) * (I * p.omega_m + p.gamma2 / 2.0) + mu.norm_sqr());
        let b2 = (I * g2 * n + I * mu.conj() * b1) / (I * p.omega_m + p.gamma2 / 2.0);
        (b1, b2)
    }

    #[test]
    fn decoupled_cavity_has_no_shift() {
        let mut p = base();
        p.g1_mag = 0.0;
        p.g2_mag = 0.0;
        assert_eq!(effective_shift_coefficient(&p).unwrap(), 0.0);
    }

    #[test]
    fn shift_is_linear_in_photon_number() {
        let p = base();
        let c = effective_shift_coefficient(&p).unwrap();
        for n in [1.0, 7.3] {
            let (b1, b2) = printed_b(&p, n);
            let lhs = 2.0 * (p.g1().conj() * b1).re + 2.0 * (p.g2().conj() * b2).re;
            assert!((lhs - c * n).abs() <= 1e-12 * (c * n).abs(), "{lhs} vs {}", c * n);
        }
    }

    fn power_law_slope(p: &SystemParams) -> f64 {
        let c1 = effective_shift_coefficient(&SystemParams { mu_mag: p.mu_mag * 1e4, ..p.clone() }).unwrap();
        let c2 = effective_shift_coefficient(&SystemParams { mu_mag: p.mu_mag * 1e5, ..p.clone() }).unwrap();
        (c2.abs().ln() - c1.abs().ln()) / 10f64.ln()
    }

    #[test]
    fn shift_decays_as_inverse_mu_for_real_loop() {
        // Leading term -4 Re(g1* mu g2)/|mu|^2 survives unless the loop phase is +-pi/2.
        let p = base();
        let slope = power_law_slope(&p);
        assert!((slope + 1.0).abs() < 0.02, "slope {slope}");
        let big = SystemParams { mu_mag: p.mu_mag * 1e5, ..p.clone() };
        let lead = -4.0 * (p.g1().conj() * big.mu() * p.g2()).re / (big.mu_mag * big.mu_mag);
        let c = effective_shift_coefficient(&big).unwrap();
        assert!((c - lead).abs() < 1e-2 * lead.abs(), "{c} vs {lead}");
    }

    #[test]
    fn shift_decays_as_inverse_square_mu_for_quadrature_loop() {
        let p = base().with_g2_phase(std::f64::consts::FRAC_PI_2);
        let slope = power_law_slope(&p);
        assert!((slope + 2.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn undriven_state_is_zero() {
        let p = base().with_pump_power(0.0);
        let (s, _) = solve_steady_state(&p).unwrap();
        assert_eq!(s, SteadyState::ZERO);
    }

    #[test]
    fn linear_cavity_lorentzian() {
        let mut p = base();
        p.g1_mag = 0.0;
        p.g2_mag = 0.0;
        let (s, d) = solve_steady_state(&p).unwrap();
        let eps = p.drive().unwrap().eps_l;
        let expected = p.eta * p.kappa * eps * eps / (p.delta * p.delta + p.kappa * p.kappa / 4.0);
        assert!((s.n_cav - expected).abs() <= 1e-13 * expected);
        assert_eq!(d.cubic_roots.len(), 1);
        assert!(!d.multistable);
    }

    #[test]
    fn default_state_is_self_consistent() {
        for phi2 in [0.0, FRAC_PI_2, PI, 4.0] {
            let p = base().with_g2_phase(phi2);
            let (s, d) = solve_steady_state(&p).unwrap();
            let (b1, b2) = printed_b(&p, s.n_cav);
            assert!((b1 - s.b1_bar).norm() <= 1e-10 * b1.norm());
            assert!((b2 - s.b2_bar).norm() <= 1e-10 * b2.norm());
            let eps = p.drive().unwrap().eps_l;
            let shift = (p.g1() * b1.conj() + p.g1().conj() * b1) + (p.g2() * b2.conj() + p.g2().conj() * b2);
            let a = p.port_coupling() * eps / (I * p.delta + p.kappa / 2.0 - I * shift);
            assert!((a - s.a_bar).norm() <= 1e-10 * a.norm());
            assert_eq!(s.n_cav, s.a_bar.norm_sqr());
            let tol = 1e-9 * (p.kappa * s.a_bar.norm() + 1.0);
            assert!(steady_residual(&p, &s) <= tol);
            for &r in &d.cubic_roots {
                let c = d.shift_coefficient;
                let val = r * ((p.delta - c * r).powi(2) + p.kappa * p.kappa / 4.0);
                let rhs = p.eta * p.kappa * eps * eps;
                assert!((val - rhs).abs() <= 1e-10 * rhs);
            }
        }
    }

    #[test]
    fn residual_of_zero_state_is_drive_term() {
        let p = base();
        let eps = p.drive().unwrap().eps_l;
        assert_eq!(steady_residual(&p, &SteadyState::ZERO), p.port_coupling() * eps);
    }

    #[test]
    fn perturbing_the_solution_raises_the_residual() {
        let p = base();
        let (s, _) = solve_steady_state(&p).unwrap();
        let moved = SteadyState {
            a_bar: s.a_bar + 0.1,
            ..s
        };
        assert!(steady_residual(&p, &moved) > steady_residual(&p, &s));
    }

    #[test]
    fn doubling_pump_doubles_photons_without_coupling() {
        let mut p = base();
        p.g1_mag = 0.0;
        p.g2_mag = 0.0;
        let n1 = solve_steady_state(&p).unwrap().0.n_cav;
        let n2 = solve_steady_state(&p.clone().with_pump_power(2.0 * p.pump_power)).unwrap().0.n_cav;
        assert!((n2 - 2.0 * n1).abs() <= 1e-14 * n2);
    }

    #[test]
    fn common_coupling_phase_rotates_mechanics() {
        let p = base();
        let theta = 0.7;
        let mut q = p.clone();
        q.g1_phase = theta;
        q.g2_phase = p.g2_phase + theta;
        let (s, _) = solve_steady_state(&p).unwrap();
        let (t, _) = solve_steady_state(&q.validated().unwrap()).unwrap();
        let rot = Complex64::from_polar(1.0, theta);
        assert!((s.n_cav - t.n_cav).abs() <= 1e-10 * s.n_cav);
        assert!((s.b1_bar * rot - t.b1_bar).norm() <= 1e-10 * s.b1_bar.norm());
        assert!((s.b2_bar * rot - t.b2_bar).norm() <= 1e-10 * s.b2_bar.norm());
    }

    #[test]
    fn folded_cubic_reports_multistability() {
        // Place eta*kappa*eps^2 halfway between the local extrema of
        // n[(delta - c n)^2 + kappa^2/4] so that three positive roots exist.
        let p = base();
        let c = effective_shift_coefficient(&p).unwrap();
        let (d, k) = (p.delta, p.kappa);
        let f = |n: f64| n * ((d - c * n).powi(2) + k * k / 4.0);
        let disc = (16.0 * d * d * c * c - 12.0 * c * c * (d * d + k * k / 4.0)).sqrt();
        let n_lo = (4.0 * d * c - disc) / (6.0 * c * c);
        let n_hi = (4.0 * d * c + disc) / (6.0 * c * c);
        let target = 0.5 * (f(n_lo) + f(n_hi));
        let eps2 = target / (p.eta * k);
        let q = p.clone().with_pump_power(eps2 * crate::params::photon_energy(p.pump_wavelength));
        let (s, diag) = solve_steady_state(&q).unwrap();
        assert!(diag.multistable);
        assert_eq!(diag.cubic_roots.len(), 3);
        assert!(diag.cubic_roots.windows(2).all(|w| w[0] < w[1]));
        assert!((s.n_cav - diag.cubic_roots[0]).abs() <= 1e-9 * diag.cubic_roots[0]);
        let rhs = q.eta * k * q.drive().unwrap().eps_l.powi(2);
        for &r in &diag.cubic_roots {
            assert!((f(r) - rhs).abs() <= 1e-10 * rhs);
        }
    }

    #[test]
    fn singular_mechanics_is_an_error() {
        // (i wm + g1/2)(i wm + g2/2) + |mu|^2 = 0 when g1 = g2 = 0 and |mu| = wm.
        let mut p = base();
        p.gamma1 = 0.0;
        p.gamma2 = 0.0;
        p.mu_mag = p.omega_m;
        assert!(matches!(solve_steady_state(&p), Err(Error::MechanicalSingularity { .. })));
    }
}
