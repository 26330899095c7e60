//! Figures of merit of the transmission window: band peaks, half widths,
//! gain–bandwidth and delay–bandwidth products, and parameter sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear_response::{linspace, spectrum_at_state, transmission, SpectrumOptions, default_delay_step};
use crate::params::SystemParams;
use crate::stability::{analyze, check_monotone, locate_ep, EpOptions};
use crate::steady_state::solve_steady_state;

/// Minimum number of grid points a band must contain.
pub const MIN_BAND_POINTS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Band {
    /// `ω < ω_m`
    Lower,
    /// `ω > ω_m`
    Upper,
    /// The whole grid.
    Full,
}

impl Band {
    pub fn contains(self, omega: f64, omega_m: f64) -> bool {
        match self {
            Band::Lower => omega < omega_m,
            Band::Upper => omega > omega_m,
            Band::Full => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Lower => "lower",
            Band::Upper => "upper",
            Band::Full => "full",
        }
    }
}

/// Whether a curve is split at `ω_m` or analysed as one band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BandMode {
    Split,
    Single,
    /// `Split` above the exceptional point, `Single` below it.
    Auto,
}

impl BandMode {
    pub fn bands(self) -> &'static [Band] {
        match self {
            BandMode::Split => &[Band::Lower, Band::Upper],
            _ => &[Band::Full],
        }
    }
}

/// Replaces [`BandMode::Auto`] by the mode matching the side of the EP.
pub fn resolve_mode(p: &SystemParams, mode: BandMode) -> Result<BandMode> {
    if mode != BandMode::Auto {
        return Ok(mode);
    }
    let span = p.gamma_span().abs();
    let ep = locate_ep(p, (0.0, 0.5 * span), &EpOptions::default())?;
    Ok(if p.mu_mag > ep.mu_ep { BandMode::Split } else { BandMode::Single })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak {
    pub omega: f64,
    pub value: f64,
    /// Grid index of the sampled maximum.
    pub index: usize,
}

fn band_indices(omegas: &[f64], band: Band, omega_m: f64) -> Vec<usize> {
    (0..omegas.len()).filter(|&i| band.contains(omegas[i], omega_m)).collect()
}

/// Grid maximum within a band, refined by a parabola through its neighbours.
pub fn find_band_peak(omegas: &[f64], values: &[f64], band: Band, omega_m: f64) -> Result<Peak> {
    if omegas.len() != values.len() {
        return Err(Error::InvalidArgument("grid and values differ in length".into()));
    }
    let idx = band_indices(omegas, band, omega_m);
    if idx.len() < MIN_BAND_POINTS {
        return Err(Error::BandTooSparse {
            points: idx.len(),
            required: MIN_BAND_POINTS,
        });
    }
    let mut best = idx[0];
    for &i in &idx {
        if values[i].is_nan() {
            continue;
        }
        if values[i] > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    if best == idx[0] || best == *idx.last().unwrap() {
        return Err(Error::PeakOnBoundary { omega: omegas[best] });
    }
    let (x0, x1, x2) = (omegas[best - 1], omegas[best], omegas[best + 1]);
    let (y0, y1, y2) = (values[best - 1], values[best], values[best + 1]);
    let (omega, value) = parabola_vertex([x0, x1, x2], [y0, y1, y2]).unwrap_or((x1, y1));
    Ok(Peak {
        omega,
        value: value.max(y1),
        index: best,
    })
}

/// Vertex of the parabola through three points, if it is a maximum lying
/// between the outer abscissae.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    // Newton form about the middle point.
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d12 - d01) / (x[2] - x[0]);
    if !(a < 0.0) {
        return None;
    }
    let b = d01 - a * (x[0] + x[1]);
    let xv = -b / (2.0 * a);
    if !(xv > x[0] && xv < x[2]) {
        return None;
    }
    let yv = y[1] + (xv - x[1]) * (d01 + a * (xv - x[0]));
    Some((xv, yv))
}

/// Half-maximum crossings around a peak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HalfWidth {
    pub hwhm: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Only one crossing lies inside the band.
    pub truncated: bool,
}

fn crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        return 0.5 * (x0 + x1);
    }
    x0 + (level - y0) * (x1 - x0) / (y1 - y0)
}

/// Half width at half maximum: `(ω_hi − ω_lo)/2`, or the distance from the
/// peak to the only crossing found inside the band.
pub fn hwhm(omegas: &[f64], values: &[f64], peak: &Peak, band: Band, omega_m: f64) -> Result<HalfWidth> {
    if !(peak.value > 0.0) || !peak.value.is_finite() {
        return Err(Error::BandwidthUndefined(format!("peak value {} is not positive", peak.value)));
    }
    let level = peak.value / 2.0;
    let inside = |i: usize| band.contains(omegas[i], omega_m);
    let mut lo = None;
    let mut i = peak.index;
    while i > 0 && inside(i - 1) {
        if values[i - 1] <= level {
            lo = Some(crossing(omegas[i - 1], values[i - 1], omegas[i], values[i], level));
            break;
        }
        i -= 1;
    }
    let mut hi = None;
    let mut j = peak.index;
    while j + 1 < omegas.len() && inside(j + 1) {
        if values[j + 1] <= level {
            hi = Some(crossing(omegas[j], values[j], omegas[j + 1], values[j + 1], level));
            break;
        }
        j += 1;
    }
    let (hwhm, truncated) = match (lo, hi) {
        (Some(l), Some(h)) => ((h - l) / 2.0, false),
        (Some(l), None) => (peak.omega - l, true),
        (None, Some(h)) => (h - peak.omega, true),
        (None, None) => {
            return Err(Error::BandwidthUndefined(format!(
                "no half-maximum crossing around omega = {:e} rad/s",
                peak.omega
            )))
        }
    };
    if !(hwhm > 0.0) {
        return Err(Error::BandwidthUndefined(format!("non-positive half width {hwhm:e}")));
    }
    Ok(HalfWidth { hwhm, lo, hi, truncated })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BandMetrics {
    pub band: Band,
    /// rad/s
    pub peak_omega: f64,
    /// `|t_p|` (dimensionless) or `τ_g` (s).
    pub peak_value: f64,
    /// rad/s
    pub hwhm: f64,
    pub product: f64,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum BandResult {
    Measured(BandMetrics),
    /// The delay peak is negative: fast light, no product.
    Advance { band: Band, peak_omega: f64, peak_value: f64 },
    Undefined { band: Band, reason: String },
}

impl BandResult {
    pub fn metrics(&self) -> Option<&BandMetrics> {
        match self {
            BandResult::Measured(m) => Some(m),
            _ => None,
        }
    }

    pub fn band(&self) -> Band {
        match self {
            BandResult::Measured(m) => m.band,
            BandResult::Advance { band, .. } | BandResult::Undefined { band, .. } => *band,
        }
    }
}

/// Peak, half width and product of one band. With `flag_advance`, a
/// non-positive peak is reported as [`BandResult::Advance`].
pub fn analyze_band(omegas: &[f64], values: &[f64], band: Band, omega_m: f64, flag_advance: bool) -> BandResult {
    let peak = match find_band_peak(omegas, values, band, omega_m) {
        Ok(p) => p,
        Err(e) => {
            if flag_advance {
                let idx = band_indices(omegas, band, omega_m);
                if let Some(&best) = idx.iter().max_by(|&&a, &&b| values[a].total_cmp(&values[b])) {
                    if values[best] <= 0.0 {
                        return BandResult::Advance {
                            band,
                            peak_omega: omegas[best],
                            peak_value: values[best],
                        };
                    }
                }
            }
            return BandResult::Undefined {
                band,
                reason: e.to_string(),
            };
        }
    };
    if flag_advance && peak.value <= 0.0 {
        return BandResult::Advance {
            band,
            peak_omega: peak.omega,
            peak_value: peak.value,
        };
    }
    match hwhm(omegas, values, &peak, band, omega_m) {
        Ok(h) => BandResult::Measured(BandMetrics {
            band,
            peak_omega: peak.omega,
            peak_value: peak.value,
            hwhm: h.hwhm,
            product: peak.value * h.hwhm,
            truncated: h.truncated,
        }),
        Err(e) => BandResult::Undefined {
            band,
            reason: e.to_string(),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Quantity {
    /// Peak `|t_p|` times half width.
    Gain,
    /// Peak `τ_g` times half width.
    Delay,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    /// `φ2` (rad) or `|μ|` (rad/s).
    pub axis: f64,
    pub bands: Vec<BandResult>,
    /// Sum of the measured band products; NaN when no band was measured.
    pub total: f64,
}

impl SweepRow {
    fn new(axis: f64, bands: Vec<BandResult>) -> SweepRow {
        let measured: Vec<f64> = bands.iter().filter_map(|b| b.metrics().map(|m| m.product)).collect();
        let total = if measured.is_empty() {
            f64::NAN
        } else {
            measured.iter().sum()
        };
        SweepRow { axis, bands, total }
    }

    pub fn band(&self, band: Band) -> Option<&BandResult> {
        self.bands.iter().find(|b| b.band() == band)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub axis_name: String,
    pub quantity: Quantity,
    pub mode: BandMode,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn axis(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.axis).collect()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total).collect()
    }

    /// Per-row metrics of one band, `None` where it was not measured.
    pub fn band_series(&self, band: Band) -> Vec<Option<BandMetrics>> {
        self.rows
            .iter()
            .map(|r| r.band(band).and_then(|b| b.metrics().copied()))
            .collect()
    }
}

/// `(max − min)/mean`; NaN entries poison the result.
pub fn relative_spread(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (max - min) / mean
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Indices of strict interior local maxima.
pub fn interior_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] > values[i + 1])
        .collect()
}

/// Probe grid and band handling shared by the sweeps.
#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub omega_grid: Vec<f64>,
    pub mode: BandMode,
    pub delay_step: Option<f64>,
}

impl SweepOptions {
    /// `[0.98, 1.02]·ω_m` on 4001 points, band mode chosen automatically.
    pub fn for_params(p: &SystemParams) -> SweepOptions {
        SweepOptions {
            omega_grid: linspace(0.98 * p.omega_m, 1.02 * p.omega_m, 4001),
            mode: BandMode::Auto,
            delay_step: None,
        }
    }
}

fn precheck_stability(p: &SystemParams, phi2_grid: &[f64]) -> Result<()> {
    let reports = phi2_grid
        .par_iter()
        .map(|&phi2| analyze(&p.clone().with_g2_phase(phi2)).map(|r| (phi2, r)))
        .collect::<Result<Vec<_>>>()?;
    for (phi2, r) in reports {
        if !r.stable {
            return Err(Error::UnstableAt { phi2, margin: r.margin });
        }
    }
    Ok(())
}

fn phase_sweep(p: &SystemParams, phi2_grid: &[f64], opts: &SweepOptions, quantity: Quantity) -> Result<SweepTable> {
    check_monotone("phi2", phi2_grid)?;
    precheck_stability(p, phi2_grid)?;
    let mode = resolve_mode(p, opts.mode)?;
    let delay_step = match quantity {
        Quantity::Gain => None,
        Quantity::Delay => Some(opts.delay_step.unwrap_or_else(|| default_delay_step(p))),
    };
    let rows = phi2_grid
        .par_iter()
        .enumerate()
        .map(|(i, &phi2)| {
            let q = p.clone().with_g2_phase(phi2);
            let (state, _) = solve_steady_state(&q).map_err(|e| Error::at(i, e))?;
            let sp = spectrum_at_state(&q, &state, &opts.omega_grid, SpectrumOptions { delay_step })
                .map_err(|e| Error::at(i, e))?;
            let values = match quantity {
                Quantity::Gain => sp.abs_t(),
                Quantity::Delay => sp.tau_g(),
            };
            let bands = mode
                .bands()
                .iter()
                .map(|&b| analyze_band(&sp.omegas, &values, b, q.omega_m, quantity == Quantity::Delay))
                .collect();
            Ok(SweepRow::new(phi2, bands))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        axis_name: "phi2_rad".into(),
        quantity,
        mode,
        rows,
    })
}

/// Gain–bandwidth table over `φ2`. Every point must be stable.
pub fn gain_bandwidth_sweep(p: &SystemParams, phi2_grid: &[f64], opts: &SweepOptions) -> Result<SweepTable> {
    phase_sweep(p, phi2_grid, opts, Quantity::Gain)
}

/// Delay–bandwidth table over `φ2`, from the group-delay curve.
pub fn delay_bandwidth_sweep(p: &SystemParams, phi2_grid: &[f64], opts: &SweepOptions) -> Result<SweepTable> {
    phase_sweep(p, phi2_grid, opts, Quantity::Delay)
}

#[derive(Clone, Debug, Serialize)]
pub struct CellError {
    pub mu_index: usize,
    /// `None` when the whole row failed (steady state).
    pub omega_index: Option<usize>,
    pub message: String,
}

/// `|t_p|` over `(|μ|, ω)`; `values[i][j]` belongs to `mu_grid[i]`, `omega_grid[j]`.
#[derive(Clone, Debug, Serialize)]
pub struct TransmissionMap {
    pub omega_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    pub phi2: f64,
    pub omega_m: f64,
    pub gamma_span: f64,
    pub values: Vec<Vec<f64>>,
    pub errors: Vec<CellError>,
}

impl TransmissionMap {
    pub fn omega_normalized(&self) -> Vec<f64> {
        self.omega_grid.iter().map(|w| w / self.omega_m).collect()
    }

    pub fn mu_normalized(&self) -> Vec<f64> {
        self.mu_grid.iter().map(|m| m / self.gamma_span).collect()
    }
}

pub fn map2d(p: &SystemParams, omega_grid: &[f64], mu_grid: &[f64], phi2: f64) -> Result<TransmissionMap> {
    check_monotone("omega", omega_grid)?;
    check_monotone("mu", mu_grid)?;
    let base = p.clone().with_g2_phase(phi2);
    let rows: Vec<(Vec<f64>, Vec<CellError>)> = mu_grid
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| {
            let q = SystemParams { mu_mag: mu, ..base.clone() };
            let mut errs = Vec::new();
            let state = match solve_steady_state(&q) {
                Ok((s, _)) => s,
                Err(e) => {
                    errs.push(CellError {
                        mu_index: i,
                        omega_index: None,
                        message: e.to_string(),
                    });
                    return (vec![f64::NAN; omega_grid.len()], errs);
                }
            };
            let row = omega_grid
                .iter()
                .enumerate()
                .map(|(j, &w)| match transmission(&q, &state, w) {
                    Ok(r) => r.abs_t,
                    Err(e) => {
                        errs.push(CellError {
                            mu_index: i,
                            omega_index: Some(j),
                            message: e.to_string(),
                        });
                        f64::NAN
                    }
                })
                .collect();
            (row, errs)
        })
        .collect();
    let mut values = Vec::with_capacity(rows.len());
    let mut errors = Vec::new();
    for (row, errs) in rows {
        values.push(row);
        errors.extend(errs);
    }
    Ok(TransmissionMap {
        omega_grid: omega_grid.to_vec(),
        mu_grid: mu_grid.to_vec(),
        phi2: base.g2_phase,
        omega_m: p.omega_m,
        gamma_span: p.gamma_span(),
        values,
        errors,
    })
}
