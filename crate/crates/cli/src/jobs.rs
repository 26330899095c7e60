use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use omit_core::analysis::{
    delay_bandwidth_sweep, gain_bandwidth_sweep, map2d as transmission_map, relative_spread, BandMode, BandResult,
    SweepOptions, SweepTable,
};
use omit_core::linear_response::{linspace, params_fingerprint, spectrum as probe_spectrum};
use omit_core::oracle::{oracle_compare, OracleOptions};
use omit_core::params::{apply_override, KEY_GROUPS};
use omit_core::stability::{
    analyze, locate_ep, mechanical_root_loci, stability_map as stab_map, CellStatus, EpOptions, EpPhasePolicy,
    MechanicalWindow,
};
use omit_core::{Error, SystemParams};
use serde_json::{json, Map, Value};

use crate::output::{manifest_path, num, object, sidecar, write_json, Csv};
use crate::{Common, G2Grid, ModeArg, MuGrid, OmegaGrid, PolicyArg};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure {
            code: if e.is_physics() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

/// Names the grid point of a per-point failure.
fn at_point(e: Error, label: &str, grid: &[f64]) -> Failure {
    match e {
        Error::AtGridPoint { index, source } => {
            let inner = Failure::from(*source);
            let value = grid.get(index).copied().unwrap_or(f64::NAN);
            Failure {
                code: inner.code,
                message: format!("at {label} = {value}: {}", inner.message),
            }
        }
        other => other.into(),
    }
}

type JobResult = Result<(), Failure>;

struct Setup {
    params: SystemParams,
    /// Grid settings recorded in a manifest for the same job.
    recorded: Map<String, Value>,
}

fn setup(common: &Common, job: &str, defaults: &[(&str, f64)]) -> Result<Setup, Failure> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // A second initialisation in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut map = Map::new();
    let mut recorded = Map::new();
    if let Some(path) = &common.config {
        let raw = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        let doc: Value = serde_json::from_str(&raw)
            .map_err(|e| usage(format!("{}: malformed config: {e}", path.display())))?;
        let Value::Object(mut obj) = doc else {
            return Err(usage(format!("{}: config must be a JSON object", path.display())));
        };
        if let Some(resolved) = obj.remove("resolved_params") {
            let Value::Object(params) = resolved else {
                return Err(usage("manifest `resolved_params` must be an object"));
            };
            if obj.get("job").and_then(Value::as_str) == Some(job) {
                if let Some(Value::Object(g)) = obj.remove("grid") {
                    recorded = g;
                }
            }
            map = params;
        } else {
            map = obj;
        }
    }
    for (key, value) in defaults {
        let group = KEY_GROUPS.iter().find(|g| g.contains(key)).expect("known key");
        if !group.iter().any(|k| map.contains_key(*k)) {
            map.insert(key.to_string(), Value::from(*value));
        }
    }
    for item in &common.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{item}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| usage(format!("--set {key}: `{value}` is not a number")))?;
        apply_override(&mut map, key.trim(), value)?;
    }
    let params = SystemParams::from_config_value(&Value::Object(map))?;
    Ok(Setup { params, recorded })
}

impl Setup {
    fn f64_or(&self, flag: Option<f64>, key: &str, default: f64) -> f64 {
        flag.or_else(|| self.recorded.get(key).and_then(Value::as_f64)).unwrap_or(default)
    }

    fn usize_or(&self, flag: Option<usize>, key: &str, default: usize) -> usize {
        flag.or_else(|| self.recorded.get(key).and_then(Value::as_u64).map(|v| v as usize))
            .unwrap_or(default)
    }

    fn str_or<'a>(&'a self, key: &str) -> Option<&'a str> {
        self.recorded.get(key).and_then(Value::as_str)
    }

    fn omega_grid(&self, g: &OmegaGrid, lo: f64, hi: f64, n: usize) -> Result<(f64, f64, usize), Failure> {
        let lo = self.f64_or(g.omega_min, "omega_min", lo);
        let hi = self.f64_or(g.omega_max, "omega_max", hi);
        let n = self.usize_or(g.omega_points, "omega_points", n);
        range_check("omega", lo, hi, n)?;
        if lo <= 0.0 {
            return Err(usage("--omega-min must be positive"));
        }
        Ok((lo, hi, n))
    }
}

fn range_check(name: &str, lo: f64, hi: f64, n: usize) -> Result<(), Failure> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(usage(format!("{name} range must be finite")));
    }
    if n == 0 {
        return Err(usage(format!("--{name}-points must be at least 1")));
    }
    if n > 1 && !(lo < hi) {
        return Err(usage(format!("{name} range needs min < max, got [{lo}, {hi}]")));
    }
    Ok(())
}

/// `n` phases on `[0, 2π]` (closed) or `[0, 2π)` (open).
fn phase_grid(n: usize, closed: bool) -> Result<Vec<f64>, Failure> {
    if n == 0 {
        return Err(usage("--phi2-points must be at least 1"));
    }
    if closed {
        Ok(linspace(0.0, 2.0 * PI, n))
    } else {
        Ok((0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect())
    }
}

fn write_manifest(common: &Common, job: &str, p: &SystemParams, grid: Value, summary: Value) -> JobResult {
    let output = common
        .out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let manifest = object(vec![
        ("tool", json!("omit")),
        ("version", json!(env!("CARGO_PKG_VERSION"))),
        ("core_version", json!(omit_core::VERSION)),
        ("job", json!(job)),
        ("output", json!(output)),
        ("params_fingerprint", json!(params_fingerprint(p))),
        ("resolved_params", Value::Object(p.to_config())),
        ("normalized_params", Value::Object(p.to_normalized_config())),
        ("grid", grid),
        ("summary", summary),
    ]);
    let path = manifest_path(&common.out);
    write_json(&path, &manifest).map_err(|e| io_failure(&path, e))
}

fn write_csv(common: &Common, csv: &Csv) -> JobResult {
    csv.write(&common.out).map_err(|e| io_failure(&common.out, e))
}

fn write_errors(common: &Common, errors: &[Value]) -> JobResult {
    let path = sidecar(&common.out, "errors.json");
    if errors.is_empty() {
        if path.exists() {
            fs::remove_file(&path).map_err(|e| io_failure(&path, e))?;
        }
        return Ok(());
    }
    write_json(&path, &Value::Array(errors.to_vec())).map_err(|e| io_failure(&path, e))
}

pub fn spectrum(common: &Common, omega: &OmegaGrid) -> JobResult {
    let s = setup(common, "spectrum", &[])?;
    let p = &s.params;
    let (lo, hi, n) = s.omega_grid(omega, 0.98, 1.02, 2001)?;
    let report = analyze(p)?;
    if !report.stable {
        return Err(Error::Unstable {
            margin: report.margin,
            eigenvalue: report.leading,
        }
        .into());
    }
    let wm = p.omega_m;
    let grid = linspace(lo * wm, hi * wm, n);
    let normalized: Vec<f64> = grid.iter().map(|w| w / wm).collect();
    let sp = probe_spectrum(p, &grid).map_err(|e| at_point(e, "omega/omega_m", &normalized))?;
    let mut csv = Csv::new(&[
        "omega_over_omega_m",
        "omega_rad_s",
        "re_tp",
        "im_tp",
        "abs_tp",
        "abs_tp_sq",
        "psi_rad",
        "tau_g_s",
    ]);
    for r in &sp.responses {
        csv.row(&[
            num(r.omega / wm),
            num(r.omega),
            num(r.t_p.re),
            num(r.t_p.im),
            num(r.abs_t),
            num(r.t_p.norm_sqr()),
            num(r.psi),
            num(r.tau_g.unwrap_or(f64::NAN)),
        ]);
    }
    write_csv(common, &csv)?;
    write_manifest(
        common,
        "spectrum",
        p,
        json!({"omega_min": lo, "omega_max": hi, "omega_points": n}),
        json!({
            "n_cav": sp.n_cav,
            "stability_margin_rad_s": report.margin,
            "stability_margin_over_omega_m": report.margin / wm,
        }),
    )
}

pub fn stability_map(common: &Common, g2: &G2Grid, phi2_points: Option<usize>) -> JobResult {
    let s = setup(common, "stability-map", &[])?;
    let p = &s.params;
    let lo = s.f64_or(g2.g2mag_min, "g2mag_min", 0.05);
    let hi = s.f64_or(g2.g2mag_max, "g2mag_max", 3.0);
    let n = s.usize_or(g2.g2mag_points, "g2mag_points", 60);
    range_check("g2mag", lo, hi, n)?;
    let nphi = s.usize_or(phi2_points, "phi2_points", 65);
    let phi = phase_grid(nphi, true)?;
    let g2_ratio = linspace(lo, hi, n);
    let g2_abs: Vec<f64> = g2_ratio.iter().map(|r| r * p.g1_mag).collect();
    let map = stab_map(p, &g2_abs, &phi, p.mu_mag)?;
    let wm = p.omega_m;
    let mut csv = Csv::new(&[
        "g2_mag_over_g1",
        "g2_mag_rad_s",
        "phi2_rad",
        "status",
        "margin_rad_s",
        "margin_over_omega_m",
    ]);
    let mut errors = Vec::new();
    for (i, row) in map.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let (status, margin) = match cell {
                CellStatus::Stable { margin } => ("stable", *margin),
                CellStatus::Unstable { margin } => ("unstable", *margin),
                CellStatus::Failed(msg) => {
                    errors.push(json!({"g2_mag_over_g1": g2_ratio[i], "phi2_rad": phi[j], "message": msg}));
                    ("failed", f64::NAN)
                }
            };
            csv.row(&[
                num(g2_ratio[i]),
                num(g2_abs[i]),
                num(phi[j]),
                status.to_string(),
                num(margin),
                num(margin / wm),
            ]);
        }
    }
    write_csv(common, &csv)?;
    write_errors(common, &errors)?;
    write_manifest(
        common,
        "stability-map",
        p,
        json!({"g2mag_min": lo, "g2mag_max": hi, "g2mag_points": n, "phi2_points": nphi}),
        json!({
            "mu_mag_over_gamma_span": p.mu_over_span(),
            "stable_cells": map.stable_count(),
            "unstable_cells": map.unstable_count(),
            "failed_cells": map.failed_count(),
        }),
    )
}

pub fn root_loci(common: &Common, phi2_points: Option<usize>) -> JobResult {
    let s = setup(common, "root-loci", &[])?;
    let p = &s.params;
    let nphi = s.usize_or(phi2_points, "phi2_points", 129);
    let phi = phase_grid(nphi, true)?;
    let loci = mechanical_root_loci(p, &phi, MechanicalWindow::default()).map_err(|e| at_point(e, "phi2", &phi))?;
    let (wm, span) = (p.omega_m, p.gamma_span());
    let mut csv = Csv::new(&[
        "phi2_rad",
        "track",
        "re_lambda_rad_s",
        "im_lambda_rad_s",
        "re_over_gamma_span",
        "im_over_omega_m",
    ]);
    for (k, &phi2) in phi.iter().enumerate() {
        for (t, track) in loci.tracks.iter().enumerate() {
            let z = track[k];
            csv.row(&[
                num(phi2),
                loci.labels[t].clone(),
                num(z.re),
                num(z.im),
                num(z.re / span),
                num(z.im / wm),
            ]);
        }
    }
    write_csv(common, &csv)?;
    write_manifest(
        common,
        "root-loci",
        p,
        json!({"phi2_points": nphi, "window_over_omega_m": [0.9, 1.1]}),
        json!({"mu_mag_over_gamma_span": p.mu_over_span()}),
    )
}

pub fn map2d(common: &Common, omega: &OmegaGrid, mu: &MuGrid) -> JobResult {
    let s = setup(common, "map2d", &[])?;
    let p = &s.params;
    let (lo, hi, n) = s.omega_grid(omega, 0.98, 1.02, 401)?;
    let mlo = s.f64_or(mu.mu_min, "mu_min", 0.0);
    let mhi = s.f64_or(mu.mu_max, "mu_max", 0.6);
    let mn = s.usize_or(mu.mu_points, "mu_points", 61);
    range_check("mu", mlo, mhi, mn)?;
    if mlo < 0.0 {
        return Err(usage("--mu-min must be non-negative"));
    }
    let (wm, span) = (p.omega_m, p.gamma_span());
    let omega_grid = linspace(lo * wm, hi * wm, n);
    let mu_ratio = linspace(mlo, mhi, mn);
    let mu_grid: Vec<f64> = mu_ratio.iter().map(|r| r * span).collect();
    let map = transmission_map(p, &omega_grid, &mu_grid, p.g2_phase)?;
    let mut csv = Csv::new(&[
        "mu_over_gamma_span",
        "mu_rad_s",
        "omega_over_omega_m",
        "omega_rad_s",
        "abs_tp",
    ]);
    for (i, row) in map.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            csv.row(&[
                num(mu_ratio[i]),
                num(mu_grid[i]),
                num(omega_grid[j] / wm),
                num(omega_grid[j]),
                num(*v),
            ]);
        }
    }
    let errors: Vec<Value> = map
        .errors
        .iter()
        .map(|e| {
            json!({
                "mu_over_gamma_span": mu_ratio[e.mu_index],
                "omega_over_omega_m": e.omega_index.map(|j| omega_grid[j] / wm),
                "message": e.message,
            })
        })
        .collect();
    write_csv(common, &csv)?;
    write_errors(common, &errors)?;
    write_manifest(
        common,
        "map2d",
        p,
        json!({
            "omega_min": lo, "omega_max": hi, "omega_points": n,
            "mu_min": mlo, "mu_max": mhi, "mu_points": mn,
        }),
        json!({"phi2_rad": p.g2_phase, "failed_cells": errors.len()}),
    )
}

fn mode_name(m: BandMode) -> &'static str {
    match m {
        BandMode::Split => "split",
        BandMode::Single => "single",
        BandMode::Auto => "auto",
    }
}

fn band_rows(table: &SweepTable, wm: f64, csv: &mut Csv, errors: &mut Vec<Value>) {
    for row in &table.rows {
        for b in &row.bands {
            let band = b.band().name().to_string();
            let cells = match b {
                BandResult::Measured(m) => [
                    "measured".to_string(),
                    num(m.peak_omega / wm),
                    num(m.peak_omega),
                    num(m.peak_value),
                    num(m.hwhm),
                    num(m.hwhm / wm),
                    num(m.product),
                    m.truncated.to_string(),
                ],
                BandResult::Advance {
                    peak_omega, peak_value, ..
                } => [
                    "advance".to_string(),
                    num(peak_omega / wm),
                    num(*peak_omega),
                    num(*peak_value),
                    num(f64::NAN),
                    num(f64::NAN),
                    num(f64::NAN),
                    "false".to_string(),
                ],
                BandResult::Undefined { reason, .. } => {
                    errors.push(json!({"phi2_rad": row.axis, "band": band, "message": reason}));
                    [
                        "undefined".to_string(),
                        num(f64::NAN),
                        num(f64::NAN),
                        num(f64::NAN),
                        num(f64::NAN),
                        num(f64::NAN),
                        num(f64::NAN),
                        "false".to_string(),
                    ]
                }
            };
            let mut line = vec![num(row.axis), band];
            line.extend(cells);
            line.push(num(row.total));
            csv.row(&line);
        }
    }
}

pub fn bandwidth(
    common: &Common,
    omega: &OmegaGrid,
    phi2_points: Option<usize>,
    band_mode: Option<ModeArg>,
    delay: bool,
) -> JobResult {
    let job = if delay { "delay-bw" } else { "gain-bw" };
    let defaults: &[(&str, f64)] = if delay { &[("pump_power_w", 10e-6)] } else { &[] };
    let s = setup(common, job, defaults)?;
    let p = &s.params;
    let (lo, hi, n) = s.omega_grid(omega, 0.98, 1.02, 4001)?;
    let nphi = s.usize_or(phi2_points, "phi2_points", 32);
    let phi = phase_grid(nphi, false)?;
    let mode = match band_mode {
        Some(ModeArg::Split) => BandMode::Split,
        Some(ModeArg::Single) => BandMode::Single,
        Some(ModeArg::Auto) => BandMode::Auto,
        None => match s.str_or("band_mode") {
            Some("split") => BandMode::Split,
            Some("single") => BandMode::Single,
            _ => BandMode::Auto,
        },
    };
    let wm = p.omega_m;
    let opts = SweepOptions {
        omega_grid: linspace(lo * wm, hi * wm, n),
        mode,
        delay_step: None,
    };
    let table = if delay {
        delay_bandwidth_sweep(p, &phi, &opts)
    } else {
        gain_bandwidth_sweep(p, &phi, &opts)
    }
    .map_err(|e| at_point(e, "phi2", &phi))?;
    let mut csv = Csv::new(&[
        "phi2_rad",
        "band",
        "status",
        "peak_omega_over_omega_m",
        "peak_omega_rad_s",
        "peak_value",
        "hwhm_rad_s",
        "hwhm_over_omega_m",
        "product",
        "truncated",
        "total",
    ]);
    let mut errors = Vec::new();
    band_rows(&table, wm, &mut csv, &mut errors);
    write_csv(common, &csv)?;
    write_errors(common, &errors)?;
    let spread = relative_spread(&table.totals());
    write_manifest(
        common,
        job,
        p,
        json!({
            "omega_min": lo, "omega_max": hi, "omega_points": n,
            "phi2_points": nphi, "band_mode": mode_name(mode),
        }),
        json!({
            "resolved_band_mode": mode_name(table.mode),
            "peak_quantity": if delay { "tau_g_s" } else { "abs_tp" },
            "total_relative_spread": if spread.is_finite() { json!(spread) } else { Value::Null },
        }),
    )
}

pub fn ep(common: &Common, bracket: Option<Vec<f64>>, policy: Option<PolicyArg>) -> JobResult {
    let s = setup(common, "ep", &[])?;
    let p = &s.params;
    let (lo, hi) = match bracket {
        Some(b) => (b[0], b[1]),
        None => match s.recorded.get("bracket").and_then(Value::as_array) {
            Some(b) if b.len() == 2 => (b[0].as_f64().unwrap_or(0.15), b[1].as_f64().unwrap_or(0.35)),
            _ => (0.15, 0.35),
        },
    };
    if !(lo >= 0.0 && lo < hi) {
        return Err(usage(format!("--bracket needs 0 <= LO < HI, got {lo} {hi}")));
    }
    let policy = match policy {
        Some(PolicyArg::Fixed) => EpPhasePolicy::Fixed,
        Some(PolicyArg::LocusMinimum) => EpPhasePolicy::LocusMinimum,
        None => match s.str_or("policy") {
            Some("fixed") => EpPhasePolicy::Fixed,
            _ => EpPhasePolicy::LocusMinimum,
        },
    };
    let policy_name = match policy {
        EpPhasePolicy::Fixed => "fixed",
        EpPhasePolicy::LocusMinimum => "locus-minimum",
    };
    let span = p.gamma_span();
    let opts = EpOptions {
        policy,
        ..EpOptions::default()
    };
    let r = locate_ep(p, (lo * span, hi * span), &opts)?;
    let result = json!({
        "mu_ep_over_gamma_span": r.mu_ep / span,
        "mu_ep_rad_s": r.mu_ep,
        "gap_at_ep_rad_s": r.gap_at_ep,
        "gap_at_ep_over_gamma_span": r.gap_at_ep / span,
        "phi2_rad": r.phi2,
        "bracket_over_gamma_span": [lo, hi],
        "policy": policy_name,
    });
    write_json(&common.out, &result).map_err(|e| io_failure(&common.out, e))?;
    write_manifest(
        common,
        "ep",
        p,
        json!({"bracket": [lo, hi], "policy": policy_name}),
        result,
    )
}

pub fn oracle_check(common: &Common, omega: &OmegaGrid) -> JobResult {
    let s = setup(common, "oracle-check", &[])?;
    let p = &s.params;
    let (lo, hi, n) = s.omega_grid(omega, 0.99, 1.01, 5)?;
    let wm = p.omega_m;
    let grid = linspace(lo * wm, hi * wm, n);
    let normalized: Vec<f64> = grid.iter().map(|w| w / wm).collect();
    let opts = OracleOptions::default();
    let cmp = oracle_compare(p, &grid, &opts).map_err(|e| at_point(e, "omega/omega_m", &normalized))?;
    let mut csv = Csv::new(&[
        "omega_over_omega_m",
        "omega_rad_s",
        "re_a1_formula",
        "im_a1_formula",
        "re_a1_measured",
        "im_a1_measured",
        "rel_error",
        "transient_decay",
        "harmonic_ratio",
    ]);
    for k in 0..grid.len() {
        let (f, m) = (cmp.formula[k], &cmp.measured[k]);
        csv.row(&[
            num(grid[k] / wm),
            num(grid[k]),
            num(f.re),
            num(f.im),
            num(m.a1_minus.re),
            num(m.a1_minus.im),
            num(cmp.rel_errors[k]),
            num(m.transient_decay),
            num(m.harmonic_ratio),
        ]);
    }
    write_csv(common, &csv)?;
    write_manifest(
        common,
        "oracle-check",
        p,
        json!({"omega_min": lo, "omega_max": hi, "omega_points": n}),
        json!({
            "max_rel_error": cmp.max_rel_error,
            "drift_threshold": opts.drift_threshold,
        }),
    )
}
