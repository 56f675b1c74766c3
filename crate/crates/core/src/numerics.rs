//! Deterministic reductions and quadrature rules shared by the other modules.

use std::f64::consts::PI;

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise (cascade) summation with a fixed tree: the result depends only on
/// the input order, never on how work is scheduled.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..len` without allocating.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(len: usize, f: &F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            return (lo..hi).map(f).sum();
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, len, f)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), &|i| a[i] * b[i])
}

/// Weighted dot product `Σ w_i a_i b_i`.
pub fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    pairwise_sum_by(a.len(), &|i| w[i] * a[i] * b[i])
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Nodes and weights of the `m`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..(m + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed Gauss–Legendre rule mapped onto an interval.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(m: usize) -> Self {
        let (nodes, weights) = gauss_legendre(m);
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

// Kronrod 15 / Gauss 7 abscissae and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`
/// to absolute tolerance `tol`; the interval with the largest error estimate
/// is bisected until the summed estimate falls below `tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> QuadResult {
    if a == b {
        return QuadResult {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = kronrod15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let total_err: f64 = pieces.iter().map(|p| p.3).sum();
        if total_err <= tol || pieces.len() >= MAX_INTERVALS {
            let value = pairwise_sum(&pieces.iter().map(|p| p.2).collect::<Vec<_>>());
            return QuadResult {
                value,
                error: total_err,
                converged: total_err <= tol,
            };
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval exhausted at machine resolution; keep it as is.
            let (v, _) = kronrod15(&f, lo, hi);
            pieces.push((lo, hi, v, 0.0));
            continue;
        }
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Least-squares line `y = intercept + slope * x`; returns (intercept, slope, sse).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    Some((intercept, slope, sse))
}

/// Richardson extrapolation of `coarse` (step 2h) and `fine` (step h) for an
/// error of order `p`.
pub fn richardson(coarse: f64, fine: f64, p: f64) -> f64 {
    fine + (fine - coarse) / (2f64.powf(p) - 1.0)
}

/// Riemann zeta function for real `x ≠ 1`, by Euler–Maclaurin summation.
pub fn zeta(x: f64) -> f64 {
    // B_{2j} / (2j)!
    const TERMS: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30_240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
        -691.0 / 1_307_674_368_000.0,
    ];
    if x == 1.0 {
        return f64::NAN;
    }
    const M: usize = 16;
    let m = M as f64;
    let head: f64 = (1..M).map(|k| (k as f64).powf(-x)).sum();
    let mut tail = m.powf(1.0 - x) / (x - 1.0) + 0.5 * m.powf(-x);
    // rising factorial x(x+1)...(x+2j-2)
    let mut rising = x;
    let mut power = m.powf(-x - 1.0);
    for (j, t) in TERMS.iter().enumerate() {
        tail += t * rising * power;
        let k = 2.0 * j as f64;
        rising *= (x + k + 1.0) * (x + k + 2.0);
        power /= m * m;
    }
    head + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::new(6);
        // degree 11 is the exactness limit of a 6-point rule
        let v = rule.integrate(0.0, 2.0, |x| x.powi(11));
        assert_relative_eq!(v, 2f64.powi(12) / 12.0, max_relative = 1e-13);
        let (_, w) = gauss_legendre(17);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_quadrature_handles_endpoint_singularity() {
        let r = integrate_adaptive(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-10);
        assert!(r.converged);
        assert!((r.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum_by(1000, &|i| i as f64), 499_500.0);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (b, m, sse) = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(b, 1.0, epsilon = 1e-14);
        assert_relative_eq!(m, 2.0, epsilon = 1e-14);
        assert!(sse < 1e-20);
    }

    #[test]
    fn zeta_reference_values() {
        assert_relative_eq!(zeta(2.0), std::f64::consts::PI.powi(2) / 6.0, max_relative = 1e-13);
        assert_relative_eq!(zeta(0.0), -0.5, max_relative = 1e-13);
        assert_relative_eq!(zeta(-1.0), -1.0 / 12.0, max_relative = 1e-12);
        // ζ(1/2) = -1.4603545088095868...
        assert_relative_eq!(zeta(0.5), -1.460_354_508_809_586_8, max_relative = 1e-13);
    }
}
