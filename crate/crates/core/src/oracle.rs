//! Time-domain cross-check of the sideband formulas.
//!
//! The six linearized fluctuation equations are integrated from rest under the
//! probe drive, and the late-time trajectory is demodulated at `e^{∓iωt}`.
//! Time is scaled as `s = ω_m t`, and the drive amplitude is set to one and
//! restored afterwards (the equations are linear).

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear_response::transmission;
use crate::params::SystemParams;
use crate::stability::analyze;
use crate::steady_state::{solve_steady_state, SteadyState};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Step-size policy for the Dormand–Prince 5(4) pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StepPolicy {
    /// Local error per step below `rtol` relative (plus `atol` absolute).
    Adaptive { rtol: f64, atol: f64 },
    /// Constant step in scaled time `s = ω_m t`.
    Fixed { ds: f64 },
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OracleOptions {
    /// Integration length, s. Defaults to `25/|margin|`.
    pub horizon: Option<f64>,
    pub step: StepPolicy,
    /// Drive periods demodulated at the end of the run (split in two halves).
    pub periods: usize,
    /// Largest relative change between the two half-window amplitudes.
    pub drift_threshold: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            horizon: None,
            step: StepPolicy::Adaptive { rtol: 1e-12, atol: 1e-14 },
            periods: 20,
            drift_threshold: 1e-6,
        }
    }
}

/// Demodulated first-order sidebands of one run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DemodResult {
    /// Probe offset, rad/s.
    pub omega: f64,
    /// `δa` at `e^{−iωt}`.
    pub a1_minus: Complex64,
    /// `δa` at `e^{+iωt}`.
    pub a1_plus: Complex64,
    /// `δb1` at `e^{−iωt}`.
    pub b1_minus: Complex64,
    /// `δb2` at `e^{−iωt}`.
    pub c1_minus: Complex64,
    /// Largest relative difference between the two half-window estimates.
    pub transient_decay: f64,
    /// `δa` content at `e^{∓2iωt}` relative to the fundamental.
    pub harmonic_ratio: f64,
    /// Integration length, s.
    pub horizon: f64,
    pub steps: usize,
}

/// Right-hand side of the fluctuation equations in scaled time, for unit
/// probe amplitude. State order `(δa, δa*, δb1, δb1*, δb2, δb2*)`.
#[derive(Clone, Copy, Debug)]
pub struct Linearized {
    cav: Complex64,
    cav_c: Complex64,
    m1: Complex64,
    m1_c: Complex64,
    m2: Complex64,
    m2_c: Complex64,
    a: Complex64,
    g1: Complex64,
    g2: Complex64,
    mu: Complex64,
    drive: f64,
    /// Drive frequency in units of `ω_m`.
    pub nu: f64,
}

impl Linearized {
    pub fn new(p: &SystemParams, state: &SteadyState, omega: f64) -> Linearized {
        let wm = p.omega_m;
        let shift = state.frequency_shift(p);
        let det = (p.delta - shift) / wm;
        let half_k = p.kappa / (2.0 * wm);
        Linearized {
            cav: Complex64::new(-half_k, -det),
            cav_c: Complex64::new(-half_k, det),
            m1: Complex64::new(-p.gamma1 / (2.0 * wm), -1.0),
            m1_c: Complex64::new(-p.gamma1 / (2.0 * wm), 1.0),
            m2: Complex64::new(-p.gamma2 / (2.0 * wm), -1.0),
            m2_c: Complex64::new(-p.gamma2 / (2.0 * wm), 1.0),
            a: state.a_bar,
            g1: p.g1() / wm,
            g2: p.g2() / wm,
            mu: p.mu() / wm,
            drive: p.port_coupling() / wm,
            nu: omega / wm,
        }
    }

    pub fn rhs(&self, s: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let (da, dac, b1, b1c, b2, b2c) = (y[0], y[1], y[2], y[3], y[4], y[5]);
        let e = Complex64::from_polar(1.0, -self.nu * s);
        // Mechanical displacement-like quadratures seen by the cavity.
        let x = self.g1.conj() * b1 + self.g1 * b1c + self.g2.conj() * b2 + self.g2 * b2c;
        // Intensity fluctuation driving the mechanics.
        let n = self.a.conj() * da + self.a * dac;
        dy[0] = self.cav * da + I * self.a * x + self.drive * e;
        dy[1] = self.cav_c * dac - I * self.a.conj() * x + self.drive * e.conj();
        dy[2] = self.m1 * b1 + I * self.g1 * n + I * self.mu * b2;
        dy[3] = self.m1_c * b1c - I * self.g1.conj() * n - I * self.mu.conj() * b2c;
        dy[4] = self.m2 * b2 + I * self.g2 * n + I * self.mu.conj() * b1;
        dy[5] = self.m2_c * b2c - I * self.g2.conj() * n - I * self.mu * b1c;
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(s, y)` from `s0` to `s1` in place; returns the number
/// of accepted steps.
pub fn dopri5<const N: usize, F>(f: F, s0: f64, s1: f64, y: &mut [Complex64; N], policy: StepPolicy) -> Result<usize>
where
    F: Fn(f64, &[Complex64; N], &mut [Complex64; N]),
{
    let mut s = s0;
    let mut k1 = [ZERO; N];
    let mut k2 = [ZERO; N];
    let mut k3 = [ZERO; N];
    let mut k4 = [ZERO; N];
    let mut k5 = [ZERO; N];
    let mut k6 = [ZERO; N];
    let mut k7 = [ZERO; N];
    let mut tmp = [ZERO; N];
    let mut ynew = [ZERO; N];
    f(s, y, &mut k1);
    let (mut h, adaptive) = match policy {
        StepPolicy::Adaptive { .. } => (1e-2_f64.min(s1 - s0), true),
        StepPolicy::Fixed { ds } => {
            if !(ds > 0.0) {
                return Err(Error::InvalidArgument(format!("step must be positive, got {ds}")));
            }
            (ds, false)
        }
    };
    let mut steps = 0;
    while s < s1 {
        let last = s + h >= s1;
        if last {
            h = s1 - s;
        }
        macro_rules! stage {
            ($out:ident, $c:expr, $( $a:expr => $k:ident ),+) => {
                for i in 0..N {
                    tmp[i] = y[i] + h * ($( $a * $k[i] + )+ ZERO);
                }
                f(s + $c * h, &tmp, &mut $out);
            };
        }
        stage!(k2, C2, A21 => k1);
        stage!(k3, C3, A31 => k1, A32 => k2);
        stage!(k4, C4, A41 => k1, A42 => k2, A43 => k3);
        stage!(k5, C5, A51 => k1, A52 => k2, A53 => k3, A54 => k4);
        stage!(k6, 1.0, A61 => k1, A62 => k2, A63 => k3, A64 => k4, A65 => k5);
        for i in 0..N {
            ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        f(s + h, &ynew, &mut k7);
        let accept = match policy {
            StepPolicy::Fixed { .. } => true,
            StepPolicy::Adaptive { rtol, atol } => {
                let mut acc = 0.0;
                for i in 0..N {
                    let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                    let sc = atol + rtol * y[i].norm().max(ynew[i].norm());
                    acc += (e.norm() / sc).powi(2);
                }
                let err = (acc / N as f64).sqrt();
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let ok = err <= 1.0;
                if ok {
                    s = if last { s1 } else { s + h };
                    *y = ynew;
                    k1 = k7;
                    steps += 1;
                }
                h *= factor;
                if h < 1e-14 * s.abs().max(1.0) {
                    return Err(Error::StepUnderflow { time: s });
                }
                ok
            }
        };
        if !adaptive && accept {
            s = if last { s1 } else { s + h };
            *y = ynew;
            k1 = k7;
            steps += 1;
        }
    }
    Ok(steps)
}

/// Final fluctuation state after integrating from rest to `s_end` (scaled
/// time), unit probe amplitude.
pub fn simulate(sys: &Linearized, y0: [Complex64; 6], s_end: f64, policy: StepPolicy) -> Result<[Complex64; 6]> {
    let mut y = y0;
    dopri5(|s, y: &[Complex64; 6], dy: &mut [Complex64; 6]| sys.rhs(s, y, dy), 0.0, s_end, &mut y, policy)?;
    Ok(y)
}

/// Fields demodulated over one window: `δa·e^{iνs}`, `δa·e^{−iνs}`,
/// `δb1·e^{iνs}`, `δb2·e^{iνs}`, `δa·e^{2iνs}`, `δa·e^{−2iνs}`.
const ACC: usize = 6;

fn demod_window(sys: &Linearized, y: &mut [Complex64; 6], s0: f64, s1: f64, policy: StepPolicy) -> Result<([Complex64; ACC], usize)> {
    let mut z = [ZERO; 12];
    z[..6].copy_from_slice(y);
    let nu = sys.nu;
    let steps = dopri5(
        |s, z: &[Complex64; 12], dz: &mut [Complex64; 12]| {
            let (head, tail) = dz.split_at_mut(6);
            sys.rhs(s, &z[..6], head);
            let up = Complex64::from_polar(1.0, nu * s);
            let down = up.conj();
            tail[0] = z[0] * up;
            tail[1] = z[0] * down;
            tail[2] = z[2] * up;
            tail[3] = z[4] * up;
            tail[4] = z[0] * up * up;
            tail[5] = z[0] * down * down;
        },
        s0,
        s1,
        &mut z,
        policy,
    )?;
    y.copy_from_slice(&z[..6]);
    let len = s1 - s0;
    let mut out = [ZERO; ACC];
    for k in 0..ACC {
        out[k] = z[6 + k] / len;
    }
    Ok((out, steps))
}

/// Integrates the fluctuation equations at probe offset `omega` and
/// demodulates the final drive periods.
pub fn integrate_linearized(p: &SystemParams, state: &SteadyState, omega: f64, opts: &OracleOptions) -> Result<DemodResult> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidArgument(format!("probe offset must be positive, got {omega}")));
    }
    if opts.periods < 2 || opts.periods % 2 != 0 {
        return Err(Error::InvalidArgument("demodulation needs an even number of periods >= 2".into()));
    }
    let report = analyze(p)?;
    if !report.stable {
        return Err(Error::Unstable {
            margin: report.margin,
            eigenvalue: report.leading,
        });
    }
    let minimum = 20.0 / report.margin.abs();
    let horizon = opts.horizon.unwrap_or(25.0 / report.margin.abs());
    if horizon < minimum {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon:e} s is shorter than 20/|margin| = {minimum:e} s"
        )));
    }
    let sys = Linearized::new(p, state, omega);
    let wm = p.omega_m;
    let s_end = horizon * wm;
    let half = (opts.periods / 2) as f64 * 2.0 * PI / sys.nu;
    let s_win = s_end - 2.0 * half;
    if s_win <= 0.0 {
        return Err(Error::InvalidArgument("horizon shorter than the demodulation window".into()));
    }
    let mut y = [ZERO; 6];
    let mut steps = dopri5(|s, y: &[Complex64; 6], dy: &mut [Complex64; 6]| sys.rhs(s, y, dy), 0.0, s_win, &mut y, opts.step)?;
    let (first, n1) = demod_window(&sys, &mut y, s_win, s_win + half, opts.step)?;
    let (second, n2) = demod_window(&sys, &mut y, s_win + half, s_end, opts.step)?;
    steps += n1 + n2;

    let mean: Vec<Complex64> = first.iter().zip(&second).map(|(a, b)| 0.5 * (a + b)).collect();
    let scale = mean[..4].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let drift = if scale > 0.0 {
        first[..4]
            .iter()
            .zip(&second[..4])
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale
    } else {
        0.0
    };
    if drift > opts.drift_threshold {
        return Err(Error::Inconclusive {
            drift,
            threshold: opts.drift_threshold,
        });
    }
    let fundamental = mean[0].norm().max(mean[1].norm());
    let harmonic_ratio = if fundamental > 0.0 {
        mean[4].norm().max(mean[5].norm()) / fundamental
    } else {
        0.0
    };
    let amp = p.drive()?.eps_p;
    Ok(DemodResult {
        omega,
        a1_minus: mean[0] * amp,
        a1_plus: mean[1] * amp,
        b1_minus: mean[2] * amp,
        c1_minus: mean[3] * amp,
        transient_decay: drift,
        harmonic_ratio,
        horizon,
        steps,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleComparison {
    pub omegas: Vec<f64>,
    pub formula: Vec<Complex64>,
    pub measured: Vec<DemodResult>,
    pub rel_errors: Vec<f64>,
    pub max_rel_error: f64,
}

/// Closed-form versus integrated `A1−` over a probe grid.
pub fn oracle_compare(p: &SystemParams, omega_grid: &[f64], opts: &OracleOptions) -> Result<OracleComparison> {
    let (state, _) = solve_steady_state(p)?;
    let rows = omega_grid
        .par_iter()
        .enumerate()
        .map(|(i, &w)| {
            let formula = transmission(p, &state, w).map_err(|e| Error::at(i, e))?.a1_minus;
            let measured = integrate_linearized(p, &state, w, opts).map_err(|e| Error::at(i, e))?;
            let err = (measured.a1_minus - formula).norm() / formula.norm();
            Ok((formula, measured, err))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = OracleComparison {
        omegas: omega_grid.to_vec(),
        formula: Vec::new(),
        measured: Vec::new(),
        rel_errors: Vec::new(),
        max_rel_error: 0.0,
    };
    for (f, m, e) in rows {
        out.formula.push(f);
        out.measured.push(m);
        out.rel_errors.push(e);
        out.max_rel_error = out.max_rel_error.max(e);
    }
    Ok(out)
}
