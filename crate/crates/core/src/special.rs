//! Normal-distribution helpers and Gauss-Legendre rules.

use libm::erfc;
use statrs::function::erf::erfc_inv;

pub const SQRT_PI: f64 = 1.772_453_850_905_516;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Upper tail `P(Z > x)` of the standard normal.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else if x == f64::NEG_INFINITY {
        1.0
    } else {
        0.5 * erfc(x / SQRT_2)
    }
}

#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    normal_sf(-x)
}

/// `P(l < Z < u)` for the standard normal, computed from the tail that keeps
/// the difference well conditioned.
pub fn normal_interval_mass(l: f64, u: f64) -> f64 {
    if u <= l {
        return 0.0;
    }
    if l >= 0.0 {
        normal_sf(l) - normal_sf(u)
    } else if u <= 0.0 {
        normal_sf(-u) - normal_sf(-l)
    } else {
        1.0 - normal_sf(-l) - normal_sf(u)
    }
}

/// Inverse of [`normal_sf`]: the `x` with `P(Z > x) = q`.
pub fn normal_isf(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::INFINITY;
    }
    if q >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let mut x = SQRT_2 * erfc_inv(2.0 * q);
    // one Newton step on the survival function polishes the rational approximation
    let pdf = (-0.5 * x * x).exp() / (SQRT_2 * SQRT_PI);
    if pdf > 0.0 {
        let step = (normal_sf(x) - q) / pdf;
        if step.is_finite() {
            x += step;
        }
    }
    x
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { p0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Composite rule over `[lo, hi]` with panels of at most `max_width`,
/// returning `(nodes, weights)` mapped onto the interval.
pub fn composite_rule(lo: f64, hi: f64, max_width: f64, base: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    if hi <= lo {
        return (xs, ws);
    }
    let panels = ((hi - lo) / max_width).ceil().max(1.0) as usize;
    let h = (hi - lo) / panels as f64;
    for p in 0..panels {
        let a = lo + p as f64 * h;
        for (x, w) in base.0.iter().zip(&base.1) {
            xs.push(a + 0.5 * h * (x + 1.0));
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Integrates `f` over `[lo, hi]` with breakpoints, using a composite rule.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    max_width: f64,
    order: usize,
) -> f64 {
    let base = gauss_legendre(order);
    let mut cuts: Vec<f64> = std::iter::once(lo)
        .chain(breaks.iter().copied().filter(|&b| b > lo && b < hi))
        .chain(std::iter::once(hi))
        .collect();
    cuts.sort_unstable_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .map(|w| {
            let (xs, ws) = composite_rule(w[0], w[1], max_width, &base);
            xs.iter().zip(&ws).map(|(&x, &wt)| wt * f(x)).sum::<f64>()
        })
        .sum()
}

/// Exact floating-point accumulator: keeps the running sum as a list of
/// non-overlapping partials (Shewchuk), so the rounded result is correct and
/// its sign is exact.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Adds the exact product `a * b`.
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        self.add(p);
        self.add(a.mul_add(b, -p));
    }

    /// The exact sum rounded to nearest, ties to even.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}
