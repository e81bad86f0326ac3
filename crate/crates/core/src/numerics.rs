//! Small numerical kernels: adaptive Gauss-Kronrod quadrature, root
//! bracketing, and a couple of grid helpers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
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

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum bisection depth of any subinterval.
    pub max_depth: u32,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-14,
            max_depth: 20,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub intervals: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7/K15 quadrature over `[a, b]`, with `breaks` as
/// mandatory interior subdivision points.
///
/// The panel with the largest error estimate is bisected until the summed
/// error drops below `max(abs_tol, rel_tol |I|)`. Fails with
/// [`Error::Numeric`] when a panel that still needs splitting has reached
/// `max_depth`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
            intervals: 0,
        });
    }
    let mut points = vec![a];
    points.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    points.push(b);
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in points.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1]);
        evaluations += 15;
        total += v;
        total_err += e;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
            depth: 0,
        });
    }

    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        if worst.depth >= opts.max_depth {
            if !total.is_finite() {
                return Err(Error::numeric("quadrature produced a non-finite value"));
            }
            return Err(Error::numeric(format!(
                "quadrature did not converge: panel [{:.6e}, {:.6e}] at depth cap {}; \
                 estimate {:.6e} +/- {:.3e} (tolerance {:.3e}, {} evaluations)",
                worst.a, worst.b, opts.max_depth, total, total_err, tol, evaluations
            )));
        }
        let m = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&f, worst.a, m);
        let (v2, e2) = gk15(&f, m, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        for (lo, hi, v, e) in [(worst.a, m, v1, e1), (m, worst.b, v2, e2)] {
            heap.push(Panel {
                a: lo,
                b: hi,
                value: v,
                error: e,
                depth: worst.depth + 1,
            });
        }
    }
    // Re-sum to shed accumulated rounding from the incremental updates.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Integral {
        value,
        error,
        evaluations,
        intervals: heap.len(),
    })
}

/// Integral over `[a, inf)` for `a > 0` via the substitution `x = a / s`.
pub fn integrate_tail<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOptions) -> Result<Integral> {
    if a <= 0.0 {
        return Err(Error::domain(
            "tail integration needs a positive lower limit",
        ));
    }
    integrate(
        |s: f64| {
            if s <= 0.0 {
                0.0
            } else {
                let x = a / s;
                f(x) * a / (s * s)
            }
        },
        0.0,
        1.0,
        &[],
        opts,
    )
}

/// Brent's method for a root of `f` bracketed by `[a, b]`.
pub fn brent_root<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::numeric(format!(
            "root not bracketed on [{a}, {b}]: f = {fa}, {fb}"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(Error::numeric("brent_root exceeded iteration cap"))
}

/// First time in `[t0, t1]` where `f` crosses `level`, located by scanning
/// `samples` equal steps and refining the first sign change with Brent.
pub fn first_crossing<F: Fn(f64) -> f64>(
    f: F,
    level: f64,
    t0: f64,
    t1: f64,
    samples: usize,
) -> Option<f64> {
    let g = |t: f64| f(t) - level;
    let mut prev_t = t0;
    let mut prev = g(t0);
    for i in 1..=samples.max(1) {
        let t = t0 + (t1 - t0) * i as f64 / samples.max(1) as f64;
        let cur = g(t);
        if prev == 0.0 {
            return Some(prev_t);
        }
        if prev.signum() != cur.signum() {
            return brent_root(g, prev_t, t, 1e-13 * t1.abs().max(1.0)).ok();
        }
        prev_t = t;
        prev = cur;
    }
    None
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Ordinary least-squares line `y = intercept + slope x` with its R^2.
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (intercept, slope, r2)
}

/// Golden-section minimum of `f` on `[a, b]`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + c.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Least-squares fit of `y = amplitude x^power` in linear space, returning
/// `(amplitude, power)`. The amplitude is solved exactly for each power.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::data(
            "power-law fit needs matching x, y with >= 2 points",
        ));
    }
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("power-law fit needs x > 0"));
    }
    let amp = |p: f64| {
        let num: f64 = x.iter().zip(y).map(|(a, b)| b * a.powf(p)).sum();
        let den: f64 = x.iter().map(|a| a.powf(2.0 * p)).sum();
        num / den
    };
    let cost = |p: f64| {
        let c = amp(p);
        x.iter()
            .zip(y)
            .map(|(a, b)| (b - c * a.powf(p)).powi(2))
            .sum::<f64>()
    };
    let power = golden_section(cost, 0.01, 5.0, 1e-12);
    Ok((amp(power), power))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn integrates_polynomial_exactly() {
        let r = integrate(
            |x| x.powi(5) - 2.0 * x,
            0.0,
            2.0,
            &[],
            QuadOptions::default(),
        )
        .unwrap();
        assert!((r.value - (64.0 / 6.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn integrates_lorentzian_tail() {
        // int_1^inf dx / (1 + x^2) = pi/4
        let r = integrate_tail(|x| 1.0 / (1.0 + x * x), 1.0, QuadOptions::default()).unwrap();
        assert!((r.value - PI / 4.0).abs() < 1e-9);
    }

    #[test]
    fn resolves_narrow_peak_with_break() {
        let w = 1e-3;
        let f = |x: f64| w / PI / ((x - 3.0).powi(2) + w * w);
        let r = integrate(f, 0.0, 10.0, &[3.0], QuadOptions::default()).unwrap();
        let exact = ((7.0f64 / w).atan() + (3.0f64 / w).atan()) / PI;
        assert!((r.value - exact).abs() < 1e-6, "{} vs {}", r.value, exact);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions {
            max_depth: 2,
            rel_tol: 1e-12,
            abs_tol: 0.0,
        };
        let err = integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &[], opts).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn brent_finds_cosine_zero() {
        let r = brent_root(f64::cos, 0.0, 3.0, 1e-14).unwrap();
        assert!((r - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn first_crossing_picks_earliest() {
        let t = first_crossing(f64::sin, 0.5, 0.0, 10.0, 200).unwrap();
        assert!((t - PI / 6.0).abs() < 1e-10);
    }

    #[test]
    fn regression_recovers_line() {
        let x = linspace(0.0, 5.0, 11);
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let (a, b, r2) = linear_regression(&x, &y);
        assert!((a - 2.0).abs() < 1e-12 && (b - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let x = linspace(1.0, 50.0, 40);
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v.powf(0.7)).collect();
        let (a, p) = fit_power_law(&x, &y).unwrap();
        assert!((a - 2.5).abs() < 1e-6 && (p - 0.7).abs() < 1e-8);
    }
}
