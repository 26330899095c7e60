//! Bracketed scalar minimization.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[lo, hi]`, stopping once the
/// bracket is narrower than `tol`. Returns the best abscissa and its value.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        // Stop when the probes can no longer be separated in floating point.
        if c >= d {
            break;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Samples `f` on `samples` evenly spaced points, then refines around the best
/// sample. With `require_interior`, a minimum at either endpoint is an error.
pub fn scan_then_golden<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    samples: usize,
    tol: f64,
    require_interior: bool,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let samples = samples.max(3);
    let xs: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        let v = f(x)?;
        if v < best_v {
            best_v = v;
            best = i;
        }
    }
    if best == 0 || best == samples - 1 {
        if require_interior {
            return Err(Error::Bracket { lo, hi });
        }
        return Ok((xs[best], best_v));
    }
    let (x, v) = golden_section(&mut f, xs[best - 1], xs[best + 1], tol)?;
    Ok(if v <= best_v { (x, v) } else { (xs[best], best_v) })
}
