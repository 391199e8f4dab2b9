//! Scalar root finding, quadrature and bounded searches used by the rate
//! formulas and the density oracle.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// `n` log-spaced points from `lo` to `hi` inclusive (`0 < lo < hi`).
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| if i == n - 1 { hi } else { (a + (b - a) * i as f64 / (n - 1) as f64).exp() }).collect()
}

/// Bisection for a sign change of `f` on `[a, b]`.
///
/// `f(a)` and `f(b)` must have opposite signs (zero counts as either).
/// Stops when the bracket is narrower than `tol` or after 200 halvings.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() <= tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Adaptive Simpson quadrature to relative tolerance `rel_tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    if !whole.is_finite() {
        return whole;
    }
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || !delta.is_finite() || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Composite Simpson on uniformly spaced samples (odd count, at least 3).
pub fn simpson_uniform(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "composite Simpson needs an odd number of samples");
    let mut s = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * dx / 3.0
}

/// Outcome of a bounded search on a log-spaced box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub x: f64,
    pub value: f64,
    /// Best grid point sat on the lower end of the box.
    pub at_lower: bool,
    /// Best grid point sat on the upper end of the box.
    pub at_upper: bool,
}

/// Maximize `f(origin + s)` over `s` in `[s_lo, s_hi]` on a log grid of `n`
/// points, then refine by golden section between the neighbours of the best
/// grid point (in log coordinates). Non-finite values count as `-inf`.
pub fn maximize_log_offset(f: impl Fn(f64) -> f64, origin: f64, s_lo: f64, s_hi: f64, n: usize) -> SearchResult {
    let g = |ls: f64| {
        let v = f(origin + ls.exp());
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };
    let grid = log_grid(s_lo, s_hi, n);
    let logs: Vec<f64> = grid.iter().map(|s| s.ln()).collect();
    let (mut best_i, mut best_v) = (0, f64::NEG_INFINITY);
    for (i, &ls) in logs.iter().enumerate() {
        let v = g(ls);
        if v > best_v {
            best_i = i;
            best_v = v;
        }
    }
    let lo = logs[best_i.saturating_sub(1)];
    let hi = logs[(best_i + 1).min(n - 1)];
    let (ls, v) = golden_max(g, lo, hi, 1e-12);
    let (x, value) = if v >= best_v { (origin + ls.exp(), v) } else { (origin + grid[best_i], best_v) };
    SearchResult { x, value, at_lower: best_i == 0, at_upper: best_i == n - 1 }
}

/// Two-dimensional analogue of [`SearchResult`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult2 {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub x_at_lower: bool,
    pub x_at_upper: bool,
    pub y_at_lower: bool,
    pub y_at_upper: bool,
}

impl SearchResult2 {
    pub fn on_boundary(&self) -> bool {
        self.x_at_lower || self.x_at_upper || self.y_at_lower || self.y_at_upper
    }
}

/// Maximize `f(x, y)` over a box `[x_lo, x_hi] × [y_lo, y_hi]` (all positive)
/// with a log grid of `n × n` points followed by alternating golden-section
/// refinement along each coordinate. Non-finite values count as `-inf`.
///
/// Extra candidate points (warm starts) are evaluated alongside the grid.
pub fn maximize_log_box(
    f: impl Fn(f64, f64) -> f64 + Sync,
    (x_lo, x_hi): (f64, f64),
    (y_lo, y_hi): (f64, f64),
    n: usize,
    warm: &[(f64, f64)],
) -> SearchResult2 {
    use rayon::prelude::*;
    let g = |lx: f64, ly: f64| {
        let v = f(lx.exp(), ly.exp());
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };
    let xs: Vec<f64> = log_grid(x_lo, x_hi, n).iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = log_grid(y_lo, y_hi, n).iter().map(|v| v.ln()).collect();
    // Row maxima in parallel, then a fixed-order reduction.
    let rows: Vec<(usize, f64)> = xs
        .par_iter()
        .map(|&lx| {
            let mut best = (0, f64::NEG_INFINITY);
            for (j, &ly) in ys.iter().enumerate() {
                let v = g(lx, ly);
                if v > best.1 {
                    best = (j, v);
                }
            }
            best
        })
        .collect();
    let (mut bi, mut bj, mut bv) = (0, 0, f64::NEG_INFINITY);
    for (i, &(j, v)) in rows.iter().enumerate() {
        if v > bv {
            bi = i;
            bj = j;
            bv = v;
        }
    }
    let mut lx = xs[bi];
    let mut ly = ys[bj];
    for &(wx, wy) in warm {
        if wx >= x_lo && wx <= x_hi && wy >= y_lo && wy <= y_hi {
            let v = g(wx.ln(), wy.ln());
            if v > bv {
                bv = v;
                lx = wx.ln();
                ly = wy.ln();
            }
        }
    }
    let step_x = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    let step_y = (ys[n - 1] - ys[0]) / (n - 1) as f64;
    for _ in 0..30 {
        let prev = bv;
        let (nx, vx) = golden_max(|t| g(t, ly), (lx - step_x).max(xs[0]), (lx + step_x).min(xs[n - 1]), 1e-12);
        if vx > bv {
            lx = nx;
            bv = vx;
        }
        let (ny, vy) = golden_max(|t| g(lx, t), (ly - step_y).max(ys[0]), (ly + step_y).min(ys[n - 1]), 1e-12);
        if vy > bv {
            ly = ny;
            bv = vy;
        }
        if (bv - prev).abs() <= 1e-14 * (1.0 + bv.abs()) {
            break;
        }
    }
    let edge = |v: f64, lo: f64, step: f64| (v - lo).abs() <= 0.5 * step;
    SearchResult2 {
        x: lx.exp(),
        y: ly.exp(),
        value: bv,
        x_at_lower: edge(lx, xs[0], step_x),
        x_at_upper: edge(lx, xs[n - 1], step_x),
        y_at_lower: edge(ly, ys[0], step_y),
        y_at_upper: edge(ly, ys[n - 1], step_y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_integrates_exp() {
        let v = adaptive_simpson(f64::exp, 0.0, 3.0, 1e-10);
        assert!((v - (3f64.exp() - 1.0)).abs() < 1e-8);
        let u: Vec<f64> = (0..=100).map(|i| (i as f64 * 0.03).exp()).collect();
        assert!((simpson_uniform(&u, 0.03) - (3f64.exp() - 1.0)).abs() < 1e-7);
    }

    #[test]
    fn log_offset_search_reports_boundary() {
        // (1 - e^{-t}) / t decreases, so the sup sits at the lower edge.
        let r = maximize_log_offset(|t| -(-t).exp_m1() / t, 0.0, 1e-9, 1e6, 200);
        assert!(r.at_lower);
        assert!((r.value - 1.0).abs() < 1e-6);
        let r = maximize_log_offset(|t| t * (-t).exp(), 0.0, 1e-6, 1e3, 200);
        assert!(!r.at_lower && !r.at_upper);
        assert!((r.x - 1.0).abs() < 1e-5);
    }

    #[test]
    fn box_search_finds_interior_peak() {
        let r = maximize_log_box(
            |x, y| -(x.ln() - 1.0).powi(2) - (y.ln() + 0.5).powi(2),
            (0.01, 100.0),
            (0.01, 100.0),
            40,
            &[],
        );
        assert!(!r.on_boundary());
        assert!((r.x - 1f64.exp()).abs() < 1e-4);
        assert!((r.y - (-0.5f64).exp()).abs() < 1e-4);
    }
}
