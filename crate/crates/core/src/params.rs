//! Physical parameter set and its flat key/value configuration form.
//!
//! Every rate and frequency is stored as an angular quantity in rad/s. The
//! config document may use either normalized keys (`kappa_over_omega_m`,
//! `mu_mag_over_gamma_span`, ...) or absolute keys (`*_rad_s`, `*_hz`).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Reduced Planck constant, J s (CODATA 2018, exact).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Full parameter set of the cavity + two-resonator loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Mechanical angular frequency, rad/s.
    pub omega_m: f64,
    /// Cavity decay rate, rad/s.
    pub kappa: f64,
    /// Passive resonator loss rate, rad/s.
    pub gamma1: f64,
    /// Active resonator rate, rad/s; negative means gain.
    pub gamma2: f64,
    pub g1_mag: f64,
    pub g1_phase: f64,
    pub g2_mag: f64,
    pub g2_phase: f64,
    pub mu_mag: f64,
    pub mu_phase: f64,
    /// Pump detuning from the cavity, rad/s.
    pub delta: f64,
    /// Cavity coupling ratio in (0, 1].
    pub eta: f64,
    /// Control laser power, W.
    pub pump_power: f64,
    /// Probe laser power, W.
    pub probe_power: f64,
    /// Control laser wavelength, m.
    pub pump_wavelength: f64,
}

/// Drive amplitudes derived from the laser powers, in s^(-1/2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedDrive {
    pub eps_l: f64,
    pub eps_p: f64,
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Amplitude `ε` with `ε² ħω = P` for a laser of the given power and wavelength.
pub fn drive_amplitude(power: f64, wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::InvalidParam {
            field: "pump_wavelength".into(),
            reason: format!("must be positive and finite, got {wavelength}"),
        });
    }
    if !(power >= 0.0) || !power.is_finite() {
        return Err(Error::InvalidParam {
            field: "power".into(),
            reason: format!("must be non-negative and finite, got {power}"),
        });
    }
    Ok((power / photon_energy(wavelength)).sqrt())
}

/// `ħω` for light of the given wavelength, J.
pub fn photon_energy(wavelength: f64) -> f64 {
    HBAR * 2.0 * PI * SPEED_OF_LIGHT / wavelength
}

/// Baseline scenario: red-sideband pumping of a sideband-resolved cavity with
/// a balanced gain/loss mechanical pair and `|g2| = 2 g1`.
pub fn default_params() -> SystemParams {
    let omega_m = TAU * 3.68e9;
    let gamma1 = 0.5e-2 * omega_m;
    let gamma2 = -gamma1;
    let g1_mag = TAU * 1.0e6;
    SystemParams {
        omega_m,
        kappa: 0.1 * omega_m,
        gamma1,
        gamma2,
        g1_mag,
        g1_phase: 0.0,
        g2_mag: 2.0 * g1_mag,
        g2_phase: 0.0,
        mu_mag: 0.5 * (gamma1 - gamma2),
        mu_phase: 0.0,
        delta: omega_m,
        eta: 0.5,
        pump_power: 50e-6,
        probe_power: 1e-6,
        pump_wavelength: 1537e-9,
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        default_params()
    }
}

impl SystemParams {
    pub fn g1(&self) -> Complex64 {
        Complex64::from_polar(self.g1_mag, self.g1_phase)
    }

    pub fn g2(&self) -> Complex64 {
        Complex64::from_polar(self.g2_mag, self.g2_phase)
    }

    pub fn mu(&self) -> Complex64 {
        Complex64::from_polar(self.mu_mag, self.mu_phase)
    }

    /// `γ1 − γ2`, the unit in which the intermechanical coupling is quoted.
    pub fn gamma_span(&self) -> f64 {
        self.gamma1 - self.gamma2
    }

    /// Closed-loop phase `Φ = −φ1 + φ2 + φμ`, wrapped to `[0, 2π)`.
    pub fn loop_phase(&self) -> f64 {
        normalize_phase(-self.g1_phase + self.g2_phase + self.mu_phase)
    }

    pub fn drive(&self) -> Result<DerivedDrive> {
        Ok(DerivedDrive {
            eps_l: drive_amplitude(self.pump_power, self.pump_wavelength)?,
            eps_p: drive_amplitude(self.probe_power, self.pump_wavelength)?,
        })
    }

    /// `√(ηκ)`, the external coupling amplitude of the cavity port.
    pub fn port_coupling(&self) -> f64 {
        (self.eta * self.kappa).sqrt()
    }

    pub fn with_g2_phase(mut self, phi2: f64) -> Self {
        self.g2_phase = normalize_phase(phi2);
        self
    }

    pub fn with_mu_phase(mut self, phase: f64) -> Self {
        self.mu_phase = normalize_phase(phase);
        self
    }

    pub fn with_g1_phase(mut self, phase: f64) -> Self {
        self.g1_phase = normalize_phase(phase);
        self
    }

    /// Sets `|μ|` in units of `γ1 − γ2`.
    pub fn with_mu_over_span(mut self, ratio: f64) -> Self {
        self.mu_mag = ratio * self.gamma_span();
        self
    }

    /// Sets `|g2|` in units of `|g1|`.
    pub fn with_g2_over_g1(mut self, ratio: f64) -> Self {
        self.g2_mag = ratio * self.g1_mag;
        self
    }

    pub fn with_pump_power(mut self, watts: f64) -> Self {
        self.pump_power = watts;
        self
    }

    pub fn mu_over_span(&self) -> f64 {
        self.mu_mag / self.gamma_span()
    }

    /// Checks every invariant and normalizes the stored phases.
    pub fn validated(mut self) -> Result<Self> {
        let finite = [
            ("omega_m", self.omega_m),
            ("kappa", self.kappa),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("g1_mag", self.g1_mag),
            ("g1_phase", self.g1_phase),
            ("g2_mag", self.g2_mag),
            ("g2_phase", self.g2_phase),
            ("mu_mag", self.mu_mag),
            ("mu_phase", self.mu_phase),
            ("delta", self.delta),
            ("eta", self.eta),
            ("pump_power", self.pump_power),
            ("probe_power", self.probe_power),
            ("pump_wavelength", self.pump_wavelength),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.omega_m <= 0.0 {
            return Err(invalid("omega_m", "must be > 0"));
        }
        if self.kappa <= 0.0 {
            return Err(invalid("kappa", "must be > 0"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid("eta", format!("must lie in (0, 1], got {}", self.eta)));
        }
        for (name, v) in [
            ("g1_mag", self.g1_mag),
            ("g2_mag", self.g2_mag),
            ("mu_mag", self.mu_mag),
            ("pump_power", self.pump_power),
            ("probe_power", self.probe_power),
        ] {
            if v < 0.0 {
                return Err(invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        if self.pump_wavelength <= 0.0 {
            return Err(invalid("pump_wavelength", "must be > 0"));
        }
        self.g1_phase = normalize_phase(self.g1_phase);
        self.g2_phase = normalize_phase(self.g2_phase);
        self.mu_phase = normalize_phase(self.mu_phase);
        Ok(self)
    }

    /// Parses a flat JSON config document; omitted keys take their defaults.
    pub fn from_config(raw: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(raw).map_err(|e| Error::Config(format!("malformed document: {e}")))?;
        Self::from_config_value(&value)
    }

    pub fn from_config_value(value: &Value) -> Result<Self> {
        let doc: ConfigDoc = serde_json::from_value(value.clone()).map_err(|e| Error::Config(e.to_string()))?;
        doc.resolve()
    }

    /// Absolute-unit config document. Feeding it back through
    /// [`SystemParams::from_config`] reproduces `self` bit for bit.
    pub fn to_config(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: f64| {
            m.insert(k.to_string(), Value::from(v));
        };
        put("omega_m_rad_s", self.omega_m);
        put("kappa_rad_s", self.kappa);
        put("gamma1_rad_s", self.gamma1);
        put("gamma2_rad_s", self.gamma2);
        put("g1_mag_rad_s", self.g1_mag);
        put("g1_phase_rad", self.g1_phase);
        put("g2_mag_rad_s", self.g2_mag);
        put("g2_phase_rad", self.g2_phase);
        put("mu_mag_rad_s", self.mu_mag);
        put("mu_phase_rad", self.mu_phase);
        put("delta_rad_s", self.delta);
        put("eta", self.eta);
        put("pump_power_w", self.pump_power);
        put("probe_power_w", self.probe_power);
        put("pump_wavelength_m", self.pump_wavelength);
        m
    }

    /// The same parameters expressed in the normalized keys.
    pub fn to_normalized_config(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: f64| {
            m.insert(k.to_string(), Value::from(v));
        };
        put("omega_m_hz", self.omega_m / TAU);
        put("kappa_over_omega_m", self.kappa / self.omega_m);
        put("gamma1_over_omega_m", self.gamma1 / self.omega_m);
        put("gamma2_over_omega_m", self.gamma2 / self.omega_m);
        put("g1_mag_hz", self.g1_mag / TAU);
        put("g1_phase_rad", self.g1_phase);
        put("g2_mag_over_g1", self.g2_mag / self.g1_mag);
        put("g2_phase_rad", self.g2_phase);
        put("mu_mag_over_gamma_span", self.mu_mag / self.gamma_span());
        put("mu_phase_rad", self.mu_phase);
        put("delta_over_omega_m", self.delta / self.omega_m);
        put("eta", self.eta);
        put("pump_power_w", self.pump_power);
        put("probe_power_w", self.probe_power);
        put("pump_wavelength_m", self.pump_wavelength);
        m
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Groups of mutually exclusive keys; setting one key of a group through an
/// override must drop the others.
pub const KEY_GROUPS: &[&[&str]] = &[
    &["omega_m_hz", "omega_m_rad_s"],
    &["kappa_over_omega_m", "kappa_rad_s"],
    &["gamma1_over_omega_m", "gamma1_rad_s"],
    &["gamma2_over_omega_m", "gamma2_rad_s"],
    &["g1_mag_hz", "g1_mag_rad_s"],
    &["g1_phase_rad"],
    &["g2_mag_over_g1", "g2_mag_rad_s"],
    &["g2_phase_rad"],
    &["mu_mag_over_gamma_span", "mu_mag_rad_s"],
    &["mu_phase_rad"],
    &["delta_over_omega_m", "delta_rad_s"],
    &["eta"],
    &["pump_power_w"],
    &["probe_power_w"],
    &["pump_wavelength_m"],
];

/// Inserts `key = value` into a config map, removing alternative spellings of
/// the same quantity.
pub fn apply_override(map: &mut Map<String, Value>, key: &str, value: f64) -> Result<()> {
    let group = KEY_GROUPS
        .iter()
        .find(|g| g.contains(&key))
        .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
    for k in group.iter() {
        map.remove(*k);
    }
    map.insert(key.to_string(), Value::from(value));
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    omega_m_hz: Option<f64>,
    omega_m_rad_s: Option<f64>,
    kappa_over_omega_m: Option<f64>,
    kappa_rad_s: Option<f64>,
    gamma1_over_omega_m: Option<f64>,
    gamma1_rad_s: Option<f64>,
    gamma2_over_omega_m: Option<f64>,
    gamma2_rad_s: Option<f64>,
    g1_mag_hz: Option<f64>,
    g1_mag_rad_s: Option<f64>,
    g1_phase_rad: Option<f64>,
    g2_mag_over_g1: Option<f64>,
    g2_mag_rad_s: Option<f64>,
    g2_phase_rad: Option<f64>,
    mu_mag_over_gamma_span: Option<f64>,
    mu_mag_rad_s: Option<f64>,
    mu_phase_rad: Option<f64>,
    delta_over_omega_m: Option<f64>,
    delta_rad_s: Option<f64>,
    eta: Option<f64>,
    pump_power_w: Option<f64>,
    probe_power_w: Option<f64>,
    pump_wavelength_m: Option<f64>,
}

fn pick(
    relative: Option<f64>,
    relative_key: &str,
    absolute: Option<f64>,
    absolute_key: &str,
    unit: f64,
    default_ratio: f64,
) -> Result<f64> {
    match (relative, absolute) {
        (Some(_), Some(_)) => Err(Error::Config(format!(
            "keys `{relative_key}` and `{absolute_key}` are mutually exclusive"
        ))),
        (Some(r), None) => Ok(r * unit),
        (None, Some(a)) => Ok(a),
        (None, None) => Ok(default_ratio * unit),
    }
}

impl ConfigDoc {
    fn resolve(self) -> Result<SystemParams> {
        let d = default_params();
        let omega_m = pick(self.omega_m_hz, "omega_m_hz", self.omega_m_rad_s, "omega_m_rad_s", TAU, d.omega_m / TAU)?;
        let kappa = pick(
            self.kappa_over_omega_m,
            "kappa_over_omega_m",
            self.kappa_rad_s,
            "kappa_rad_s",
            omega_m,
            d.kappa / d.omega_m,
        )?;
        let gamma1 = pick(
            self.gamma1_over_omega_m,
            "gamma1_over_omega_m",
            self.gamma1_rad_s,
            "gamma1_rad_s",
            omega_m,
            d.gamma1 / d.omega_m,
        )?;
        let gamma2 = pick(
            self.gamma2_over_omega_m,
            "gamma2_over_omega_m",
            self.gamma2_rad_s,
            "gamma2_rad_s",
            omega_m,
            d.gamma2 / d.omega_m,
        )?;
        let g1_mag = pick(self.g1_mag_hz, "g1_mag_hz", self.g1_mag_rad_s, "g1_mag_rad_s", TAU, d.g1_mag / TAU)?;
        let g2_mag = pick(
            self.g2_mag_over_g1,
            "g2_mag_over_g1",
            self.g2_mag_rad_s,
            "g2_mag_rad_s",
            g1_mag,
            d.g2_mag / d.g1_mag,
        )?;
        let mu_mag = pick(
            self.mu_mag_over_gamma_span,
            "mu_mag_over_gamma_span",
            self.mu_mag_rad_s,
            "mu_mag_rad_s",
            gamma1 - gamma2,
            d.mu_mag / d.gamma_span(),
        )?;
        let delta = pick(
            self.delta_over_omega_m,
            "delta_over_omega_m",
            self.delta_rad_s,
            "delta_rad_s",
            omega_m,
            d.delta / d.omega_m,
        )?;
        SystemParams {
            omega_m,
            kappa,
            gamma1,
            gamma2,
            g1_mag,
            g1_phase: self.g1_phase_rad.unwrap_or(d.g1_phase),
            g2_mag,
            g2_phase: self.g2_phase_rad.unwrap_or(d.g2_phase),
            mu_mag,
            mu_phase: self.mu_phase_rad.unwrap_or(d.mu_phase),
            delta,
            eta: self.eta.unwrap_or(d.eta),
            pump_power: self.pump_power_w.unwrap_or(d.pump_power),
            probe_power: self.probe_power_w.unwrap_or(d.probe_power),
            pump_wavelength: self.pump_wavelength_m.unwrap_or(d.pump_wavelength),
        }
        .validated()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_baseline_scenario() {
        let p = default_params();
        assert!((p.omega_m / TAU - 3.68e9).abs() < 1e-3);
        assert_eq!(p.kappa, 0.1 * p.omega_m);
        assert_eq!(p.gamma1 + p.gamma2, 0.0);
        assert_eq!(p.delta, p.omega_m);
        assert_eq!(p.g2_mag, 2.0 * p.g1_mag);
        assert_eq!(p.g1_phase, 0.0);
        assert_eq!(p.mu().im, 0.0);
        assert_eq!(p.eta, 0.5);
        assert_eq!(p.pump_power, 50e-6);
        assert_eq!(p.pump_wavelength, 1537e-9);
    }

    #[test]
    fn zero_power_gives_zero_amplitude() {
        assert_eq!(drive_amplitude(0.0, 1537e-9).unwrap(), 0.0);
    }

    #[test]
    fn pump_amplitude_matches_hand_value() {
        // hbar * 2 pi c / 1537 nm = 1.29237e-19 J; 50 uW / that = 3.8688e14 s^-1
        let eps = drive_amplitude(50e-6, 1537e-9).unwrap();
        let by_hand = 50e-6 / (1.054_571_817e-34 * 2.0 * PI * 299_792_458.0 / 1537e-9);
        assert!((eps * eps - by_hand).abs() / by_hand < 1e-14);
        assert!((eps * eps - 3.8687e14).abs() / 3.8687e14 < 1e-4);
    }

    #[test]
    fn amplitude_round_trips_to_power() {
        for &p in &[1e-9, 10e-6, 50e-6, 1.0] {
            let eps = drive_amplitude(p, 1537e-9).unwrap();
            let back = photon_energy(1537e-9) * eps * eps;
            assert!((back - p).abs() <= 4.0 * f64::EPSILON * p);
        }
    }

    #[test]
    fn non_positive_wavelength_is_rejected() {
        assert!(drive_amplitude(1e-6, 0.0).is_err());
        assert!(drive_amplitude(1e-6, -1.0).is_err());
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(SystemParams::from_config("{}").unwrap(), default_params());
    }

    #[test]
    fn mu_in_units_of_gamma_span() {
        let p = SystemParams::from_config(r#"{"mu_mag_over_gamma_span": 0.5}"#).unwrap();
        assert_eq!(p.mu_mag, 0.5 * (p.gamma1 - p.gamma2));
    }

    #[test]
    fn out_of_range_eta_names_field() {
        let err = SystemParams::from_config(r#"{"eta": 1.5}"#).unwrap_err();
        assert!(err.to_string().contains("eta"), "{err}");
    }

    #[test]
    fn unknown_key_is_listed() {
        let err = SystemParams::from_config(r#"{"kapa_over_omega_m": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("kapa_over_omega_m"), "{err}");
    }

    #[test]
    fn conflicting_spellings_are_rejected() {
        assert!(SystemParams::from_config(r#"{"omega_m_hz": 1e9, "omega_m_rad_s": 6e9}"#).is_err());
    }

    #[test]
    fn hz_keys_are_multiplied_by_two_pi() {
        let p = SystemParams::from_config(r#"{"g1_mag_hz": 1e6, "omega_m_hz": 1e9}"#).unwrap();
        assert_eq!(p.g1_mag, TAU * 1e6);
        assert_eq!(p.omega_m, TAU * 1e9);
        // relative keys follow the resolved base
        assert_eq!(p.kappa, 0.1 * p.omega_m);
        assert_eq!(p.g2_mag, 2.0 * p.g1_mag);
    }

    #[test]
    fn phases_are_normalized() {
        let p = SystemParams::from_config(r#"{"g2_phase_rad": -1.0, "mu_phase_rad": 7.0}"#).unwrap();
        assert!((p.g2_phase - (TAU - 1.0)).abs() < 1e-15);
        assert!((p.mu_phase - (7.0 - TAU)).abs() < 1e-15);
        assert_eq!(normalize_phase(TAU), 0.0);
        assert_eq!(normalize_phase(-0.0), 0.0);
    }

    #[test]
    fn override_replaces_alternative_spelling() {
        let mut m = default_params().to_config();
        apply_override(&mut m, "mu_mag_over_gamma_span", 0.2).unwrap();
        let p = SystemParams::from_config_value(&Value::Object(m)).unwrap();
        assert_eq!(p.mu_mag, 0.2 * p.gamma_span());
        let mut m = Map::new();
        assert!(apply_override(&mut m, "nope", 1.0).is_err());
    }

    fn arb_params() -> impl Strategy<Value = SystemParams> {
        (
            1e8f64..1e11,
            0.01f64..0.5,
            1e-4f64..1e-2,
            1e5f64..1e8,
            0.0f64..5.0,
            -10.0f64..10.0,
            0.0f64..1.0,
            -10.0f64..10.0,
            0.01f64..1.0,
            0.0f64..1e-3,
        )
            .prop_map(|(wm, k, g, g1, g2r, ph2, mur, phmu, eta, pc)| {
                SystemParams {
                    omega_m: wm,
                    kappa: k * wm,
                    gamma1: g * wm,
                    gamma2: -0.7 * g * wm,
                    g1_mag: g1,
                    g1_phase: 0.3,
                    g2_mag: g2r * g1,
                    g2_phase: ph2,
                    mu_mag: mur * 1.7 * g * wm,
                    mu_phase: phmu,
                    delta: 0.9 * wm,
                    eta,
                    pump_power: pc,
                    probe_power: 1e-7,
                    pump_wavelength: 1.55e-6,
                }
                .validated()
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn config_round_trip_is_identity(p in arb_params()) {
            let doc = serde_json::to_string(&Value::Object(p.to_config())).unwrap();
            let q = SystemParams::from_config(&doc).unwrap();
            prop_assert_eq!(&p, &q);
            let doc2 = serde_json::to_string(&Value::Object(q.to_config())).unwrap();
            prop_assert_eq!(doc, doc2);
        }

        #[test]
        fn normalized_round_trip_within_ulps(p in arb_params()) {
            let q = SystemParams::from_config_value(&Value::Object(p.to_normalized_config())).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            prop_assert!(close(p.omega_m, q.omega_m));
            prop_assert!(close(p.kappa, q.kappa));
            prop_assert!(close(p.gamma1, q.gamma1));
            prop_assert!(close(p.gamma2, q.gamma2));
            prop_assert!(close(p.g1_mag, q.g1_mag));
            prop_assert!(close(p.g2_mag, q.g2_mag));
            prop_assert!(close(p.mu_mag, q.mu_mag));
            prop_assert!(close(p.delta, q.delta));
            prop_assert_eq!(p.g2_phase, q.g2_phase);
        }

        #[test]
        fn couplings_rebuild_from_polar_pair(p in arb_params()) {
            let g2 = p.g2();
            prop_assert!((g2.norm() - p.g2_mag).abs() <= 1e-15 * p.g2_mag.max(1.0));
            prop_assert!(p.g2_phase >= 0.0 && p.g2_phase < TAU);
        }
    }
}
