//! Small scalar root-finding and grid helpers shared by the analysis modules.

/// Bisection on a bracketing interval. `f(lo)` and `f(hi)` must differ in sign
/// (or one must vanish). Stops when the bracket is narrower than
/// `rel_tol * max(|lo|, |hi|)` or after 200 halvings.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if !(flo.is_finite() && fhi.is_finite()) {
        return None;
    }
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * lo.abs().max(hi.abs()) || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `n` points log-spaced from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `n` points linearly spaced from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// All sign-change brackets of `f` sampled on `grid`, each refined by bisection.
pub fn all_roots<F: FnMut(f64) -> f64>(mut f: F, grid: &[f64], rel_tol: f64) -> Vec<f64> {
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for i in 0..grid.len().saturating_sub(1) {
        let (a, b) = (vals[i], vals[i + 1]);
        if !(a.is_finite() && b.is_finite()) {
            continue;
        }
        if a == 0.0 {
            out.push(grid[i]);
        } else if a.signum() != b.signum() && b != 0.0 {
            if let Some(x) = bisect(&mut f, grid[i], grid[i + 1], rel_tol) {
                out.push(x);
            }
        }
    }
    out
}
