//! Closed-form first-order sideband response to a weak probe.
//!
//! With the probe at offset `ω = ω_p − ω_l`, the anti-Stokes cavity amplitude
//! is `A1− = √(ηκ) ε_p / (Ξ(ω) − |ā|² Λ (1 − Γ))` and the transmission is
//! `t_p = 1 − ηκ / (Ξ(ω) − |ā|² Λ (1 − Γ))`. `Λ` and `Γ` both depend on `ω`
//! and are recomputed at every offset.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Denominator, Error, Result};
use crate::params::SystemParams;
use crate::steady_state::{solve_steady_state, SteadyState};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Smallest admissible magnitude of a transmission denominator.
pub const POLE_FLOOR: f64 = 1e-300;
/// Relative floor for the mechanical denominators `f1`, `f2`.
pub const F_FLOOR: f64 = 1e-12;

/// `α1,2(±ω_m)` and the two mechanical denominators at one probe offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaTerms {
    /// `α1(ω_m) = −iω − iω_m + γ1/2`
    pub alpha1_plus: Complex64,
    /// `α2(ω_m) = −iω − iω_m + γ2/2`
    pub alpha2_plus: Complex64,
    /// `α1(−ω_m) = −iω + iω_m + γ1/2`
    pub alpha1_minus: Complex64,
    /// `α2(−ω_m) = −iω + iω_m + γ2/2`
    pub alpha2_minus: Complex64,
    /// `α1(−ω_m) α2(−ω_m) + |μ|²`
    pub f1: Complex64,
    /// `α1(ω_m) α2(ω_m) + |μ|²`
    pub f2: Complex64,
}

impl AlphaTerms {
    /// Reports a vanishing `f1` or `f2`, measured against the size of its terms.
    pub fn check(&self, mu_sq: f64, omega: f64) -> Result<()> {
        let small = |f: Complex64, a: Complex64, b: Complex64| f.norm() <= F_FLOOR * (a.norm() * b.norm() + mu_sq);
        if small(self.f1, self.alpha1_minus, self.alpha2_minus) {
            return Err(Error::ResponseSingularity {
                which: Denominator::F1,
                omega,
            });
        }
        if small(self.f2, self.alpha1_plus, self.alpha2_plus) {
            return Err(Error::ResponseSingularity {
                which: Denominator::F2,
                omega,
            });
        }
        Ok(())
    }
}

pub fn alpha_f_terms(p: &SystemParams, omega: f64) -> AlphaTerms {
    let mu_sq = p.mu_mag * p.mu_mag;
    let alpha1_plus = Complex64::new(p.gamma1 / 2.0, -omega - p.omega_m);
    let alpha2_plus = Complex64::new(p.gamma2 / 2.0, -omega - p.omega_m);
    let alpha1_minus = Complex64::new(p.gamma1 / 2.0, -omega + p.omega_m);
    let alpha2_minus = Complex64::new(p.gamma2 / 2.0, -omega + p.omega_m);
    AlphaTerms {
        alpha1_plus,
        alpha2_plus,
        alpha1_minus,
        alpha2_minus,
        f1: alpha1_minus * alpha2_minus + mu_sq,
        f2: alpha1_plus * alpha2_plus + mu_sq,
    }
}

/// The four-term mechanical feedback kernel `Λ(ω)`.
pub fn lambda_of(p: &SystemParams, omega: f64) -> Result<Complex64> {
    let t = alpha_f_terms(p, omega);
    t.check(p.mu_mag * p.mu_mag, omega)?;
    let (g1, g2, mu) = (p.g1(), p.g2(), p.mu());
    let lam = I * g1 * (-I * g1.conj() * t.alpha2_plus - mu.conj() * g2.conj()) / t.f2
        + I * g1.conj() * (I * g1 * t.alpha2_minus - mu * g2) / t.f1
        + I * g2 * (-I * g2.conj() * t.alpha1_plus - mu * g1.conj()) / t.f2
        + I * g2.conj() * (I * g2 * t.alpha1_minus - mu.conj() * g1) / t.f1;
    Ok(lam)
}

/// `Ξ(ω) = iΔ + κ/2 − iω − i·shift`, with the radiation-pressure shift taken
/// from the steady state.
pub fn xi_of(p: &SystemParams, state: &SteadyState, omega: f64) -> Complex64 {
    let shift = state.frequency_shift(p);
    Complex64::new(p.kappa / 2.0, p.delta - omega - shift)
}

/// `Ξ*(−ω)`: substitute `−ω`, then conjugate.
pub fn xi_conj_neg(p: &SystemParams, state: &SteadyState, omega: f64) -> Complex64 {
    xi_of(p, state, -omega).conj()
}

/// Response to the probe at one offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeResponse {
    /// Probe offset from the pump, rad/s.
    pub omega: f64,
    pub xi: Complex64,
    pub lam: Complex64,
    pub gam: Complex64,
    pub a1_minus: Complex64,
    pub t_p: Complex64,
    pub abs_t: f64,
    /// Phase of `t_p`, rad. Unwrapped along the grid inside a [`Spectrum`].
    pub psi: f64,
    /// Group delay, s. `None` until a delay has been evaluated.
    pub tau_g: Option<f64>,
}

impl ProbeResponse {
    /// `Ξ − |ā|² Λ (1 − Γ)`.
    pub fn denominator(&self, n_cav: f64) -> Complex64 {
        self.xi - n_cav * self.lam * (1.0 - self.gam)
    }
}

/// Probe transmission and anti-Stokes amplitude at offset `omega`.
pub fn transmission(p: &SystemParams, state: &SteadyState, omega: f64) -> Result<ProbeResponse> {
    let n = state.n_cav;
    let xi = xi_of(p, state, omega);
    let lam = if n == 0.0 {
        // The kernel only enters multiplied by |ā|²; skip its singularity check.
        lambda_of(p, omega).unwrap_or(Complex64::new(0.0, 0.0))
    } else {
        lambda_of(p, omega)?
    };
    let gam_den = xi_conj_neg(p, state, omega) + lam * n;
    if gam_den.norm() < POLE_FLOOR {
        return Err(Error::Pole { omega });
    }
    let gam = n * lam / gam_den;
    let den = xi - n * lam * (1.0 - gam);
    if den.norm() < POLE_FLOOR {
        return Err(Error::Pole { omega });
    }
    let eps_p = p.drive()?.eps_p;
    let a1_minus = p.port_coupling() * eps_p / den;
    let t_p = 1.0 - p.eta * p.kappa / den;
    Ok(ProbeResponse {
        omega,
        xi,
        lam,
        gam,
        a1_minus,
        t_p,
        abs_t: t_p.norm(),
        psi: t_p.arg(),
        tau_g: None,
    })
}

/// Wraps a phase difference into `(−π, π]`.
pub fn wrap_phase(d: f64) -> f64 {
    let r = (d + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Largest single-step phase change the three-point delay stencil accepts.
pub const STENCIL_MAX_JUMP: f64 = PI / 2.0;

/// `τ_g = dψ/dω_p` by a central difference of the unwrapped phase.
pub fn group_delay(p: &SystemParams, state: &SteadyState, omega: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("delay step must be positive, got {step}")));
    }
    let lo = transmission(p, state, omega - step)?.t_p.arg();
    let mid = transmission(p, state, omega)?.t_p.arg();
    let hi = transmission(p, state, omega + step)?.t_p.arg();
    let d1 = wrap_phase(mid - lo);
    let d2 = wrap_phase(hi - mid);
    for jump in [d1, d2] {
        if jump.abs() > STENCIL_MAX_JUMP {
            return Err(Error::StencilTooCoarse { omega, jump });
        }
    }
    Ok((d1 + d2) / (2.0 * step))
}

/// Default delay stencil half-width: `1e-6 ω_m`.
pub fn default_delay_step(p: &SystemParams) -> f64 {
    1e-6 * p.omega_m
}

/// Sampled response over a probe-offset grid.
#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    /// Strictly increasing probe offsets, rad/s.
    pub omegas: Vec<f64>,
    pub responses: Vec<ProbeResponse>,
    pub n_cav: f64,
    pub params_fingerprint: String,
}

impl Spectrum {
    pub fn abs_t(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.abs_t).collect()
    }

    pub fn tau_g(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.tau_g.unwrap_or(f64::NAN)).collect()
    }
}

/// Hex digest of the parameter set, used to tag derived artifacts.
pub fn params_fingerprint(p: &SystemParams) -> String {
    let mut h = Sha256::new();
    for v in [
        p.omega_m,
        p.kappa,
        p.gamma1,
        p.gamma2,
        p.g1_mag,
        p.g1_phase,
        p.g2_mag,
        p.g2_phase,
        p.mu_mag,
        p.mu_phase,
        p.delta,
        p.eta,
        p.pump_power,
        p.probe_power,
        p.pump_wavelength,
    ] {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Sorts a monotone grid ascending; rejects repeated or unordered points.
pub fn ascending_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("grid contains non-finite values".into()));
    }
    let increasing = grid.windows(2).all(|w| w[0] < w[1]);
    let decreasing = grid.windows(2).all(|w| w[0] > w[1]);
    if increasing {
        Ok(grid.to_vec())
    } else if decreasing {
        Ok(grid.iter().rev().copied().collect())
    } else {
        Err(Error::InvalidArgument("grid must be strictly monotone".into()))
    }
}

/// Phase unwrapping along a sequence by nearest-branch continuation.
pub fn unwrap_phases(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut prev_raw = 0.0;
    let mut acc = 0.0;
    for (i, &r) in raw.iter().enumerate() {
        if i == 0 {
            acc = r;
        } else {
            acc += wrap_phase(r - prev_raw);
        }
        prev_raw = r;
        out.push(acc);
    }
    out
}

/// Options for [`spectrum_with`].
#[derive(Clone, Copy, Debug)]
pub struct SpectrumOptions {
    /// Half-width of the group-delay stencil; `None` skips delays.
    pub delay_step: Option<f64>,
}

/// Full spectrum with group delay at the default stencil.
pub fn spectrum(p: &SystemParams, grid: &[f64]) -> Result<Spectrum> {
    spectrum_with(
        p,
        grid,
        SpectrumOptions {
            delay_step: Some(default_delay_step(p)),
        },
    )
}

pub fn spectrum_with(p: &SystemParams, grid: &[f64], opts: SpectrumOptions) -> Result<Spectrum> {
    let (state, _) = solve_steady_state(p)?;
    spectrum_at_state(p, &state, grid, opts)
}

/// Spectrum for an already-solved steady state.
pub fn spectrum_at_state(
    p: &SystemParams,
    state: &SteadyState,
    grid: &[f64],
    opts: SpectrumOptions,
) -> Result<Spectrum> {
    let omegas = ascending_grid(grid)?;
    let mut responses = omegas
        .iter()
        .enumerate()
        .map(|(i, &w)| transmission(p, state, w).map_err(|e| Error::at(i, e)))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = responses.iter().map(|r| r.psi).collect();
    for (r, psi) in responses.iter_mut().zip(unwrap_phases(&raw)) {
        r.psi = psi;
    }
    if let Some(step) = opts.delay_step {
        for (i, r) in responses.iter_mut().enumerate() {
            r.tau_g = Some(group_delay(p, state, r.omega, step).map_err(|e| Error::at(i, e))?);
        }
    }
    Ok(Spectrum {
        omegas,
        responses,
        n_cav: state.n_cav,
        params_fingerprint: params_fingerprint(p),
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
