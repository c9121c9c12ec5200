//! Small numerical kernels shared across modules: adaptive Simpson
//! quadrature, fixed Gauss-Legendre rules and golden-section maximisation.

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Relative accuracy floor of [`adaptive_simpson`], so huge integrands do not chase an absolute target.
pub const SIMPSON_RTOL: f64 = 1e-12;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`,
/// or relative tolerance [`SIMPSON_RTOL`] on each cell when that is looser.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0
        || delta.abs() <= 15.0 * tol.max(SIMPSON_RTOL * (left + right).abs())
        || (b - a) <= 4.0 * f64::EPSILON * m.abs().max(1.0)
    {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

const GL5_NODES: [f64; 5] =
    [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL5_WEIGHTS: [f64; 5] =
    [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];

/// Five-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre5<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL5_NODES.iter().zip(GL5_WEIGHTS.iter()).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Five-point Gauss-Legendre rule for a vector-valued integrand of length `n`.
pub fn gauss_legendre5_vec<F: FnMut(f64) -> Vec<f64>>(mut f: F, a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    if b <= a {
        return acc;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
        for (s, v) in acc.iter_mut().zip(f(mid + half * x)) {
            *s += w * half * v;
        }
    }
    acc
}

/// Golden-section search for a maximiser of `f` on `[a, b]`.
///
/// Returns the best point visited (endpoints included), so the result is
/// never worse than `max(f(a), f(b))` even when `f` is not unimodal.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, x_tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (a, b);
    let mut best = (a, f(a));
    let fb = f(b);
    if fb > best.1 {
        best = (b, fb);
    }
    if hi <= lo {
        return best;
    }
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if f1 > best.1 {
            best = (x1, f1);
        }
        if f2 > best.1 {
            best = (x2, f2);
        }
        if hi - lo <= x_tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    best
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `n` points spaced uniformly on `[a, b]`, both ends included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

/// `n` geometrically spaced points on `[a, b]` with `0 < a <= b`.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    linspace(la, lb, n)
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                a
            } else if i == n - 1 {
                b
            } else {
                l.exp()
            }
        })
        .collect()
}

/// Sort and drop near-duplicates (relative spacing below `1e-14`).
pub fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in grid"));
    v.dedup_by(|b, a| (*b - *a).abs() <= 1e-14 * a.abs().max(1.0));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial() {
        let v = adaptive_simpson(&|t: f64| t * t, 0.0, 1.0, 1e-12);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_kink() {
        let v = adaptive_simpson(&|t: f64| (t - 0.3).abs(), 0.0, 1.0, 1e-11);
        assert!((v - (0.045 + 0.245)).abs() < 1e-10);
    }

    #[test]
    fn gauss_exact_for_degree_nine() {
        let v = gauss_legendre5(&|t: f64| t.powi(9) + t.powi(4), 0.0, 2.0);
        assert!((v - (1024.0 / 10.0 + 32.0 / 5.0)).abs() < 1e-10);
    }

    #[test]
    fn golden_finds_interior_peak() {
        let (x, fx) = golden_max(&|t: f64| -(t - 0.7).powi(2), 0.0, 2.0, 1e-12);
        assert!((x - 0.7).abs() < 1e-6);
        assert!(fx.abs() < 1e-12);
    }

    #[test]
    fn grids() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        let l = logspace(1.0, 100.0, 3);
        assert!((l[1] - 10.0).abs() < 1e-12);
        let mut v = vec![1.0, 0.5, 1.0 + 1e-16, 0.5];
        sort_dedup(&mut v);
        assert_eq!(v, vec![0.5, 1.0]);
    }
}
