//! Adaptive composite Simpson rule on a logarithmic grid.

/// Integrates `g` over [a, b] (0 < a < b) by substituting f = e^t and
/// applying composite Simpson in t. Starts at `per_decade` intervals per
/// decade and doubles until successive estimates differ by less than
/// `rel_tol`. Returns (integral, intervals used).
pub fn integrate_log<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, per_decade: usize, rel_tol: f64) -> (f64, usize) {
    assert!(a > 0.0 && b > a, "integrate_log needs 0 < a < b");
    let (ta, tb) = (a.ln(), b.ln());
    let decades = (b / a).log10();
    let mut n = ((per_decade as f64 * decades).ceil() as usize).max(2);
    n += n % 2;
    let h = |t: f64| {
        let f = t.exp();
        g(f) * f
    };
    let simpson = |n: usize| {
        let dt = (tb - ta) / n as f64;
        let mut s = h(ta) + h(tb);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * h(ta + i as f64 * dt);
        }
        s * dt / 3.0
    };
    let mut prev = simpson(n);
    // Refinement stops at 2^22 intervals whether or not rel_tol was met.
    while n < 1 << 22 {
        n *= 2;
        let cur = simpson(n);
        if (cur - prev).abs() <= rel_tol * cur.abs() || !cur.is_finite() {
            return (cur, n);
        }
        prev = cur;
    }
    (prev, n)
}

/// `points` log-spaced values from a to b inclusive.
pub fn log_grid(a: f64, b: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                a
            } else if i == points - 1 {
                b
            } else {
                (la + (lb - la) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn lin_grid(a: f64, b: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![a];
    }
    (0..points)
        .map(|i| {
            if i == points - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (points - 1) as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_is_log() {
        let (v, _) = integrate_log(|f| 3.0 / f, 1e-2, 1e4, 64, 1e-8);
        assert!((v / (3.0 * 1e6f64.ln()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lorentzian_band() {
        let w = 0.3;
        let (v, _) = integrate_log(|f| 1.0 / (1.0 + (w * f).powi(2)), 1e-3, 1e5, 64, 1e-8);
        let exact = ((w * 1e5f64).atan() - (w * 1e-3f64).atan()) / w;
        assert!((v / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grids_hit_endpoints() {
        let g = log_grid(1e-2, 1e4, 7);
        assert_eq!(g[0], 1e-2);
        assert_eq!(g[6], 1e4);
        assert!((g[1] - 1e-1).abs() < 1e-15);
        assert_eq!(lin_grid(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }
}
