//! Linear stability of the steady state, mechanical root loci and the
//! exceptional point of the mechanical pair.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix6};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::minimize::{golden_section, scan_then_golden};
use crate::params::SystemParams;
use crate::steady_state::{solve_steady_state, SteadyState};

const I: Complex64 = Complex64::new(0.0, 1.0);

pub type StabilityMatrix = Matrix6<Complex64>;

/// Drift matrix of `(δa, δa*, δb1, δb1*, δb2, δb2*)`.
pub fn build_stability_matrix(p: &SystemParams, state: &SteadyState) -> StabilityMatrix {
    let a = state.a_bar;
    let ac = a.conj();
    let (g1, g2, mu) = (p.g1(), p.g2(), p.mu());
    let shift = state.frequency_shift(p);
    let wm = p.omega_m;
    let m11 = Complex64::new(-p.kappa / 2.0, -p.delta + shift);
    let m22 = Complex64::new(-p.kappa / 2.0, p.delta - shift);
    let z = Complex64::new(0.0, 0.0);
    let d1m = Complex64::new(-p.gamma1 / 2.0, -wm);
    let d1p = Complex64::new(-p.gamma1 / 2.0, wm);
    let d2m = Complex64::new(-p.gamma2 / 2.0, -wm);
    let d2p = Complex64::new(-p.gamma2 / 2.0, wm);
    #[rustfmt::skip]
    let m = Matrix6::new(
        m11, z, I * a * g1.conj(), I * a * g1, I * a * g2.conj(), I * a * g2,
        z, m22, -I * ac * g1.conj(), -I * ac * g1, -I * ac * g2.conj(), -I * ac * g2,
        I * ac * g1, I * a * g1, d1m, z, I * mu, z,
        -I * ac * g1.conj(), -I * a * g1.conj(), z, d1p, z, -I * mu.conj(),
        I * ac * g2, I * a * g2, I * mu.conj(), z, d2m, z,
        -I * ac * g2.conj(), -I * a * g2.conj(), z, -I * mu, z, d2p,
    );
    m
}

/// Eigenvalues from a complex Schur form. Any unreduced 2×2 block left on
/// the diagonal is solved directly.
pub fn eigenvalues(m: &StabilityMatrix) -> Result<Vec<Complex64>> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("stability matrix has non-finite entries".into()));
    }
    let schur = nalgebra::Schur::try_new(*m, f64::EPSILON, 10_000).ok_or(Error::EigenNonConvergence)?;
    let (_, t) = schur.unpack();
    let n = 6;
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].norm() > 0.0 {
            let block = Matrix2::new(t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let (l1, l2) = eig2(&block);
            out.push(l1);
            out.push(l2);
            i += 2;
        } else {
            out.push(t[(i, i)]);
            i += 1;
        }
    }
    Ok(out)
}

fn eig2(b: &Matrix2<Complex64>) -> (Complex64, Complex64) {
    let half_tr = (b[(0, 0)] + b[(1, 1)]) / 2.0;
    let det = b[(0, 0)] * b[(1, 1)] - b[(0, 1)] * b[(1, 0)];
    let disc = (half_tr * half_tr - det).sqrt();
    (half_tr + disc, half_tr - disc)
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub eigenvalues: Vec<Complex64>,
    pub stable: bool,
    /// Largest real part, rad/s.
    pub margin: f64,
    /// The eigenvalue attaining the margin.
    pub leading: Complex64,
}

pub fn classify(m: &StabilityMatrix) -> Result<StabilityReport> {
    let eigenvalues = eigenvalues(m)?;
    let leading = *eigenvalues
        .iter()
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .expect("six eigenvalues");
    Ok(StabilityReport {
        stable: leading.re < 0.0,
        margin: leading.re,
        leading,
        eigenvalues,
    })
}

/// Solves the steady state and classifies it.
pub fn analyze(p: &SystemParams) -> Result<StabilityReport> {
    let (state, _) = solve_steady_state(p)?;
    classify(&build_stability_matrix(p, &state))
}

/// Like [`analyze`], but an unstable point is an error.
pub fn require_stable(p: &SystemParams) -> Result<StabilityReport> {
    let r = analyze(p)?;
    if r.stable {
        Ok(r)
    } else {
        Err(Error::Unstable {
            margin: r.margin,
            eigenvalue: r.leading,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CellStatus {
    Stable { margin: f64 },
    Unstable { margin: f64 },
    /// The steady state or eigen solve failed at this cell.
    Failed(String),
}

impl CellStatus {
    pub fn is_stable(&self) -> bool {
        matches!(self, CellStatus::Stable { .. })
    }

    pub fn is_unstable(&self) -> bool {
        matches!(self, CellStatus::Unstable { .. })
    }
}

/// Stability over `(|g2|, φ2)` at fixed `|μ|`. `cells[i][j]` belongs to
/// `g2_mag_grid[i]` and `phi2_grid[j]`.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityMap {
    pub g2_mag_grid: Vec<f64>,
    pub phi2_grid: Vec<f64>,
    pub mu_mag: f64,
    pub cells: Vec<Vec<CellStatus>>,
}

impl StabilityMap {
    fn count(&self, pred: impl Fn(&CellStatus) -> bool) -> usize {
        self.cells.iter().flatten().filter(|c| pred(c)).count()
    }

    pub fn stable_count(&self) -> usize {
        self.count(CellStatus::is_stable)
    }

    pub fn unstable_count(&self) -> usize {
        self.count(CellStatus::is_unstable)
    }

    pub fn failed_count(&self) -> usize {
        self.count(|c| matches!(c, CellStatus::Failed(_)))
    }
}

pub(crate) fn check_monotone(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} grid is empty")));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} grid has non-finite values")));
    }
    let inc = grid.windows(2).all(|w| w[0] < w[1]);
    let dec = grid.windows(2).all(|w| w[0] > w[1]);
    if inc || dec {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} grid must be strictly monotone")))
    }
}

pub fn stability_map(p: &SystemParams, g2_mag_grid: &[f64], phi2_grid: &[f64], mu_mag: f64) -> Result<StabilityMap> {
    check_monotone("|g2|", g2_mag_grid)?;
    check_monotone("phi2", phi2_grid)?;
    if !(mu_mag >= 0.0) || !mu_mag.is_finite() {
        return Err(Error::InvalidArgument(format!("|mu| must be finite and non-negative, got {mu_mag}")));
    }
    let cells = g2_mag_grid
        .par_iter()
        .map(|&g2| {
            phi2_grid
                .iter()
                .map(|&phi2| {
                    let q = SystemParams {
                        g2_mag: g2,
                        g2_phase: phi2,
                        mu_mag,
                        ..p.clone()
                    };
                    match analyze(&q) {
                        Ok(r) if r.stable => CellStatus::Stable { margin: r.margin },
                        Ok(r) => CellStatus::Unstable { margin: r.margin },
                        Err(e) => CellStatus::Failed(e.to_string()),
                    }
                })
                .collect()
        })
        .collect();
    Ok(StabilityMap {
        g2_mag_grid: g2_mag_grid.to_vec(),
        phi2_grid: phi2_grid.to_vec(),
        mu_mag,
        cells,
    })
}

/// Band of imaginary parts, in units of `ω_m`, searched for the mechanical pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MechanicalWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for MechanicalWindow {
    fn default() -> Self {
        MechanicalWindow { lo: 0.9, hi: 1.1 }
    }
}

/// The two mechanical eigenvalues near `+iω_m`, larger imaginary part first.
///
/// With `Δ ≈ ω_m` the conjugate cavity root also lands in the window; it is
/// rejected as the most strongly damped candidate.
pub fn select_mechanical(eigs: &[Complex64], omega_m: f64, window: MechanicalWindow) -> Result<[Complex64; 2]> {
    let mut inside: Vec<Complex64> = eigs
        .iter()
        .copied()
        .filter(|z| z.im > window.lo * omega_m && z.im < window.hi * omega_m)
        .collect();
    if inside.len() < 2 {
        return Err(Error::Selection {
            found: inside.len(),
            spectrum: eigs.to_vec(),
        });
    }
    inside.sort_by(|a, b| b.re.total_cmp(&a.re));
    let (x, y) = (inside[0], inside[1]);
    Ok(if x.im >= y.im { [x, y] } else { [y, x] })
}

pub fn mechanical_pair(p: &SystemParams, window: MechanicalWindow) -> Result<[Complex64; 2]> {
    let r = analyze(p)?;
    select_mechanical(&r.eigenvalues, p.omega_m, window)
}

/// Two continuity-linked eigenvalue paths over `φ2`. Track 0 starts as the
/// higher-frequency root. Points are raw `(Re λ, Im λ)` in rad/s.
#[derive(Clone, Debug, Serialize)]
pub struct RootLocus {
    pub phi2_grid: Vec<f64>,
    pub tracks: [Vec<Complex64>; 2],
    pub labels: [String; 2],
}

/// Assignment of `next` to the previous pair minimizing summed distance.
pub fn pair_step(prev: [Complex64; 2], next: [Complex64; 2]) -> [Complex64; 2] {
    let straight = (prev[0] - next[0]).norm() + (prev[1] - next[1]).norm();
    let swapped = (prev[0] - next[1]).norm() + (prev[1] - next[0]).norm();
    if swapped < straight {
        [next[1], next[0]]
    } else {
        next
    }
}

pub fn mechanical_root_loci(p: &SystemParams, phi2_grid: &[f64], window: MechanicalWindow) -> Result<RootLocus> {
    check_monotone("phi2", phi2_grid)?;
    let pairs = phi2_grid
        .par_iter()
        .enumerate()
        .map(|(i, &phi2)| mechanical_pair(&p.clone().with_g2_phase(phi2), window).map_err(|e| Error::at(i, e)))
        .collect::<Result<Vec<_>>>()?;
    let mut tracks = [Vec::with_capacity(pairs.len()), Vec::with_capacity(pairs.len())];
    let mut prev = pairs[0];
    for (i, &pair) in pairs.iter().enumerate() {
        let cur = if i == 0 { pair } else { pair_step(prev, pair) };
        tracks[0].push(cur[0]);
        tracks[1].push(cur[1]);
        prev = cur;
    }
    Ok(RootLocus {
        phi2_grid: phi2_grid.to_vec(),
        tracks,
        labels: ["A".into(), "B".into()],
    })
}

/// How `φ2` is treated while searching for the exceptional point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EpPhasePolicy {
    /// Keep the configured `φ2`.
    Fixed,
    /// At each `|μ|`, use the closest approach of the pair along the
    /// `φ2 ∈ [0, π]` locus.
    LocusMinimum,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpOptions {
    pub policy: EpPhasePolicy,
    pub window: MechanicalWindow,
    /// Coarse samples of the gap across the bracket.
    pub samples: usize,
    /// Coarse samples of `φ2` for [`EpPhasePolicy::LocusMinimum`].
    pub phase_samples: usize,
    /// Golden-section tolerance on `|μ|`, relative to `γ1 − γ2`.
    pub tol: f64,
}

impl Default for EpOptions {
    fn default() -> Self {
        EpOptions {
            policy: EpPhasePolicy::LocusMinimum,
            window: MechanicalWindow::default(),
            samples: 41,
            phase_samples: 33,
            tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpResult {
    /// rad/s
    pub mu_ep: f64,
    /// Separation of the mechanical pair at `mu_ep`, rad/s.
    pub gap_at_ep: f64,
    /// Search interval for `|μ|`, rad/s.
    pub bracket: (f64, f64),
    /// `φ2` at which the gap was evaluated.
    pub phi2: f64,
    pub policy: EpPhasePolicy,
}

pub fn mechanical_gap(p: &SystemParams, window: MechanicalWindow) -> Result<f64> {
    let [a, b] = mechanical_pair(p, window)?;
    Ok((a - b).norm())
}

/// Smallest gap over `φ2 ∈ [0, π]` and where it occurs.
pub fn min_gap_over_phase(p: &SystemParams, opts: &EpOptions) -> Result<(f64, f64)> {
    scan_then_golden(
        |phi2| mechanical_gap(&p.clone().with_g2_phase(phi2), opts.window),
        0.0,
        PI,
        opts.phase_samples,
        1e-13,
        false,
    )
}

fn gap_for_policy(p: &SystemParams, opts: &EpOptions) -> Result<(f64, f64)> {
    match opts.policy {
        EpPhasePolicy::Fixed => Ok((p.g2_phase, mechanical_gap(p, opts.window)?)),
        EpPhasePolicy::LocusMinimum => min_gap_over_phase(p, opts),
    }
}

/// Minimizes the mechanical-pair gap over `|μ| ∈ bracket` (rad/s).
pub fn locate_ep(p: &SystemParams, bracket: (f64, f64), opts: &EpOptions) -> Result<EpResult> {
    let (lo, hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
        return Err(Error::InvalidArgument(format!("EP bracket must satisfy 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    let span = p.gamma_span().abs().max(f64::MIN_POSITIVE);
    let gap = |mu: f64| gap_for_policy(&SystemParams { mu_mag: mu, ..p.clone() }, opts).map(|(_, g)| g);
    let (coarse, _) = scan_then_golden(gap, lo, hi, opts.samples, opts.tol * span, true)?;
    // A second pass from a tight bracket removes any bias from the coarse cell.
    let step = (hi - lo) / (opts.samples.max(3) - 1) as f64;
    let (mu_ep, _) = golden_section(
        gap,
        (coarse - step).max(lo),
        (coarse + step).min(hi),
        opts.tol * span,
    )?;
    let (phi2, gap_at_ep) = gap_for_policy(&SystemParams { mu_mag: mu_ep, ..p.clone() }, opts)?;
    Ok(EpResult {
        mu_ep,
        gap_at_ep,
        bracket,
        phi2,
        policy: opts.policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_params;
    use crate::steady_state::SteadyState;
    use std::f64::consts::FRAC_PI_2;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
        v
    }

    /// Greedy multiset match of `a` against the conjugates of `a`.
    fn conjugation_defect(a: &[Complex64]) -> f64 {
        let mut pool: Vec<Complex64> = a.iter().map(|z| z.conj()).collect();
        let mut worst: f64 = 0.0;
        for z in a {
            let (k, d) = pool
                .iter()
                .enumerate()
                .map(|(k, w)| (k, (z - w).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            worst = worst.max(d);
            pool.remove(k);
        }
        worst
    }

    #[test]
    fn undriven_blocks_decouple() {
        let p = default_params();
        let m = build_stability_matrix(&p, &SteadyState::ZERO);
        for r in 0..2 {
            for c in 2..6 {
                assert_eq!(m[(r, c)], Complex64::new(0.0, 0.0));
                assert_eq!(m[(c, r)], Complex64::new(0.0, 0.0));
            }
        }
        let ev = sorted(eigenvalues(&m).unwrap());
        let cavity = [
            Complex64::new(-p.kappa / 2.0, -p.delta),
            Complex64::new(-p.kappa / 2.0, p.delta),
        ];
        for c in cavity {
            assert!(ev.iter().any(|z| (z - c).norm() < 1e-9 * p.omega_m));
        }
    }

    #[test]
    fn uncoupled_matrix_is_diagonal() {
        let mut p = default_params();
        p.g1_mag = 0.0;
        p.g2_mag = 0.0;
        p.mu_mag = 0.0;
        let (s, _) = solve_steady_state(&p).unwrap();
        let m = build_stability_matrix(&p, &s);
        for r in 0..6 {
            for c in 0..6 {
                if r != c {
                    assert_eq!(m[(r, c)], Complex64::new(0.0, 0.0));
                }
            }
        }
        let expected = sorted(vec![
            Complex64::new(-p.kappa / 2.0, -p.delta),
            Complex64::new(-p.kappa / 2.0, p.delta),
            Complex64::new(-p.gamma1 / 2.0, -p.omega_m),
            Complex64::new(-p.gamma1 / 2.0, p.omega_m),
            Complex64::new(-p.gamma2 / 2.0, -p.omega_m),
            Complex64::new(-p.gamma2 / 2.0, p.omega_m),
        ]);
        let got = sorted(eigenvalues(&m).unwrap());
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).norm() < 1e-9 * p.omega_m, "{g} vs {e}");
        }
        let r = classify(&m).unwrap();
        assert!(!r.stable);
        assert!((r.margin + p.gamma2 / 2.0).abs() < 1e-9 * p.omega_m);
    }

    #[test]
    fn default_spectrum_is_conjugation_closed() {
        for phi2 in [0.0, 0.7, FRAC_PI_2, 2.9, 4.4] {
            let r = analyze(&default_params().with_g2_phase(phi2)).unwrap();
            assert!(conjugation_defect(&r.eigenvalues) <= 1e-8 * default_params().omega_m);
        }
    }

    #[test]
    fn trace_identity() {
        let p = default_params().with_g2_phase(1.3);
        let (s, _) = solve_steady_state(&p).unwrap();
        let m = build_stability_matrix(&p, &s);
        let tr = m.trace();
        let sum: Complex64 = eigenvalues(&m).unwrap().iter().sum();
        let expected = -p.kappa - p.gamma1 - p.gamma2;
        assert!((tr - expected).norm() < 1e-12 * p.omega_m);
        assert!((sum - expected).norm() < 1e-10 * p.omega_m);
    }

    #[test]
    fn matrix_rows_are_conjugate_pairs() {
        // Swapping each (x, x*) pair of basis vectors maps M to its conjugate.
        let p = default_params().with_g2_phase(2.2).with_mu_phase(0.4);
        let (s, _) = solve_steady_state(&p).unwrap();
        let m = build_stability_matrix(&p, &s);
        let sw = |k: usize| k ^ 1;
        for r in 0..6 {
            for c in 0..6 {
                assert!((m[(sw(r), sw(c))] - m[(r, c)].conj()).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn defaults_stable_at_every_phase() {
        for mu in [0.2, 0.5] {
            for k in 0..16 {
                let p = default_params()
                    .with_mu_over_span(mu)
                    .with_g2_phase(2.0 * PI * k as f64 / 16.0);
                assert!(require_stable(&p).is_ok(), "mu {mu} k {k}");
            }
        }
    }

    #[test]
    fn weak_second_coupling_is_unstable() {
        let p = default_params().with_mu_over_span(0.2).with_g2_over_g1(0.05);
        match require_stable(&p) {
            Err(Error::Unstable { margin, eigenvalue }) => {
                assert!(margin > 0.0);
                assert_eq!(margin, eigenvalue.re);
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn gauge_shift_preserves_stability() {
        let p = default_params().with_mu_over_span(0.2).with_g2_over_g1(0.7);
        for (phi2, theta) in [(0.3, 1.1), (2.0, -0.8), (4.0, 2.5)] {
            let a = analyze(&p.clone().with_g2_phase(phi2)).unwrap();
            let b = analyze(&p.clone().with_g2_phase(phi2 + theta).with_mu_phase(p.mu_phase - theta)).unwrap();
            assert_eq!(a.stable, b.stable);
            assert!((a.margin - b.margin).abs() < 1e-9 * p.omega_m);
        }
    }

    #[test]
    fn map_is_periodic_and_weaker_coupling_is_less_stable() {
        let p = default_params();
        let g2: Vec<f64> = (0..6).map(|i| p.g1_mag * (0.05 + 0.4 * i as f64)).collect();
        let phi: Vec<f64> = (0..9).map(|j| 2.0 * PI * j as f64 / 8.0).collect();
        let weak = stability_map(&p, &g2, &phi, 0.2 * p.gamma_span()).unwrap();
        let strong = stability_map(&p, &g2, &phi, 0.5 * p.gamma_span()).unwrap();
        for row in &weak.cells {
            assert_eq!(row[0].is_stable(), row[8].is_stable());
        }
        assert!(weak.unstable_count() > strong.unstable_count());
        assert_eq!(weak.failed_count(), 0);
        assert!(stability_map(&p, &[1.0, 0.5, 2.0], &phi, 0.0).is_err());
    }

    #[test]
    fn selection_rejects_cavity_root() {
        let p = default_params().with_mu_over_span(0.5);
        let r = analyze(&p).unwrap();
        let in_window = r
            .eigenvalues
            .iter()
            .filter(|z| z.im > 0.9 * p.omega_m && z.im < 1.1 * p.omega_m)
            .count();
        assert_eq!(in_window, 3);
        let pair = select_mechanical(&r.eigenvalues, p.omega_m, MechanicalWindow::default()).unwrap();
        for z in pair {
            assert!(z.re > -p.kappa / 4.0);
        }
        assert!(pair[0].im >= pair[1].im);
    }

    #[test]
    fn empty_window_is_a_selection_error() {
        let p = default_params();
        let r = analyze(&p).unwrap();
        let w = MechanicalWindow { lo: 2.0, hi: 3.0 };
        match select_mechanical(&r.eigenvalues, p.omega_m, w) {
            Err(Error::Selection { found, spectrum }) => {
                assert_eq!(found, 0);
                assert_eq!(spectrum.len(), 6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pairing_follows_nearest_points() {
        let a = Complex64::new(0.0, 1.0);
        let b = Complex64::new(0.0, -1.0);
        assert_eq!(pair_step([a, b], [b * 1.01, a * 1.01]), [a * 1.01, b * 1.01]);
        assert_eq!(pair_step([a, b], [a, b]), [a, b]);
    }

    fn loci(mu: f64, lo: f64, hi: f64, n: usize) -> RootLocus {
        let p = default_params().with_mu_over_span(mu);
        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        mechanical_root_loci(&p, &grid, MechanicalWindow::default()).unwrap()
    }

    #[test]
    fn broken_phase_tracks_keep_loss_ranking_and_swap_frequency() {
        let l = loci(0.2, 0.0, PI, 129);
        let [a, b] = &l.tracks;
        let re_sign = (a[0].re - b[0].re).signum();
        assert!(a.iter().zip(b).all(|(x, y)| (x.re - y.re).signum() == re_sign));
        let first = (a[0].im - b[0].im).signum();
        let last = (a[128].im - b[128].im).signum();
        assert_ne!(first, last);
    }

    #[test]
    fn unbroken_phase_tracks_keep_frequency_gap_and_swap_damping() {
        let l = loci(0.5, 0.0, PI, 129);
        let [a, b] = &l.tracks;
        assert!(a.iter().zip(b).all(|(x, y)| x.im > y.im));
        let first = (a[0].re - b[0].re).signum();
        let last = (a[128].re - b[128].re).signum();
        assert_ne!(first, last);
    }

    #[test]
    fn second_half_period_backtracks() {
        let fwd = loci(0.2, 0.0, PI, 33);
        let back = loci(0.2, PI, 2.0 * PI, 33);
        let scale = default_params().gamma_span();
        for k in 0..33 {
            let set_f = [fwd.tracks[0][k], fwd.tracks[1][k]];
            let set_b = [back.tracks[0][32 - k], back.tracks[1][32 - k]];
            let d = ((set_f[0] - set_b[0]).norm() + (set_f[1] - set_b[1]).norm())
                .min((set_f[0] - set_b[1]).norm() + (set_f[1] - set_b[0]).norm());
            assert!(d < 1e-6 * scale, "k {k}: {d}");
        }
    }

    #[test]
    fn tracks_are_continuous() {
        let l = loci(0.5, 0.0, 2.0 * PI, 129);
        let [a, b] = &l.tracks;
        for k in 1..a.len() {
            let step = (a[k] - a[k - 1]).norm().max((b[k] - b[k - 1]).norm());
            assert!(step < (a[k] - b[k]).norm());
        }
    }

    fn decoupled() -> SystemParams {
        let mut p = default_params();
        p.g1_mag = 0.0;
        p.g2_mag = 0.0;
        p
    }

    #[test]
    fn decoupled_ep_quarter_span() {
        let p = decoupled();
        let span = p.gamma_span();
        for policy in [EpPhasePolicy::Fixed, EpPhasePolicy::LocusMinimum] {
            let opts = EpOptions { policy, ..EpOptions::default() };
            let ep = locate_ep(&p, (0.15 * span, 0.35 * span), &opts).unwrap();
            assert!((ep.mu_ep / span - 0.25).abs() < 1e-6, "{}", ep.mu_ep / span);
            assert!(ep.gap_at_ep <= 1e-6 * span, "{}", ep.gap_at_ep / span);
        }
    }

    #[test]
    fn decoupled_gap_matches_dimer_formula() {
        let p = decoupled();
        let span = p.gamma_span();
        for r in [0.1, 0.2, 0.3, 0.45] {
            let q = p.clone().with_mu_over_span(r);
            let g = mechanical_gap(&q, MechanicalWindow::default()).unwrap();
            let expected = 2.0 * ((span / 4.0).powi(2) - (r * span).powi(2)).abs().sqrt();
            assert!((g - expected).abs() < 1e-9 * span, "{r}: {g} vs {expected}");
        }
    }

    #[test]
    fn coupled_ep_in_expected_range_and_locally_minimal() {
        let p = default_params();
        let span = p.gamma_span();
        let opts = EpOptions::default();
        let ep = locate_ep(&p, (0.15 * span, 0.35 * span), &opts).unwrap();
        let r = ep.mu_ep / span;
        assert!(r > 0.2 && r < 0.28, "{r}");
        assert!(ep.gap_at_ep <= 1e-6 * span, "{}", ep.gap_at_ep / span);
        let d = 0.01 * span;
        for mu in [ep.mu_ep - d, ep.mu_ep + d] {
            let (_, g) = min_gap_over_phase(&SystemParams { mu_mag: mu, ..p.clone() }, &opts).unwrap();
            assert!(g > ep.gap_at_ep);
        }
    }

    #[test]
    fn bracket_without_interior_minimum() {
        let p = decoupled();
        let span = p.gamma_span();
        let err = locate_ep(&p, (0.3 * span, 0.4 * span), &EpOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
        assert!(locate_ep(&p, (0.4 * span, 0.3 * span), &EpOptions::default()).is_err());
    }
}
