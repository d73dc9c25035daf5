//! Scalar optimization and special functions.
//!
//! Everything here runs on `libm` so that the crate stays `no_std`.

use libm::{erfc, exp, fabs, lgamma, log, sqrt};

const INV_GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Location and value of a scalar maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    /// Argmax.
    pub x: f64,
    /// Objective at `x`.
    pub value: f64,
    /// The maximum sits on the lower end of the search interval.
    pub at_lower: bool,
    /// The maximum sits on the upper end of the search interval.
    pub at_upper: bool,
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Golden-section search for the maximum of a unimodal function on
/// `[lo, hi]`. Stops once the bracket is narrower than
/// `rel_tol * max(|x|, 1)`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Maximum {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_GOLDEN * (b - a);
    let mut d = a + INV_GOLDEN * (b - a);
    let mut fc = finite_or_neg_inf(f(c));
    let mut fd = finite_or_neg_inf(f(d));
    // 200 iterations shrink any finite bracket far below f64 resolution.
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a) <= rel_tol * fabs(mid).max(1.0) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_GOLDEN * (b - a);
            fc = finite_or_neg_inf(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_GOLDEN * (b - a);
            fd = finite_or_neg_inf(f(d));
        }
    }
    let (x, value) = if fc >= fd { (c, fc) } else { (d, fd) };
    let span = hi - lo;
    Maximum {
        x,
        value,
        at_lower: (x - lo) <= 1e-6 * span,
        at_upper: (hi - x) <= 1e-6 * span,
    }
}

/// Coarse grid scan followed by golden-section refinement around the best
/// grid point. Guards the golden search against a poor initial bracket.
pub fn grid_golden_max<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    grid: usize,
    rel_tol: f64,
) -> Maximum {
    let grid = grid.max(3);
    let step = (hi - lo) / (grid - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..grid {
        let v = finite_or_neg_inf(f(lo + step * i as f64));
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = if best_i + 1 >= grid {
        hi
    } else {
        lo + step * (best_i + 1) as f64
    };
    let mut m = golden_section_max(&mut f, a, b, rel_tol);
    if best_v > m.value {
        m.x = lo + step * best_i as f64;
        m.value = best_v;
    }
    // The edge grid points are evaluated exactly; prefer them when the
    // refinement cannot beat them.
    if best_i == 0 {
        let v = finite_or_neg_inf(f(lo));
        if v >= m.value {
            m.x = lo;
            m.value = v;
        }
    } else if best_i + 1 == grid {
        let v = finite_or_neg_inf(f(hi));
        if v >= m.value {
            m.x = hi;
            m.value = v;
        }
    }
    let span = hi - lo;
    m.at_lower = (m.x - lo) <= 1e-6 * span;
    m.at_upper = (hi - m.x) <= 1e-6 * span;
    m
}

/// Arithmetic mean. Returns NaN on empty input.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Population standard deviation (divisor `n`).
pub fn population_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation polished with one Halley step, giving
/// close to full double precision.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = sqrt(-2.0 * log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = sqrt(-2.0 * log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * sqrt(2.0 * core::f64::consts::PI) * exp(x * x / 2.0);
    x - u / (1.0 + x * u / 2.0)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x);
    let front = exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

// Lentz's method for the continued fraction of I_x(a, b).
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if fabs(del - 1.0) < 1e-15 {
            break;
        }
    }
    h
}

/// Two-sided tail probability `P(|T| >= |t|)` of Student's t with `df`
/// (possibly fractional) degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form converges fast for small arguments.
        let pi2 = core::f64::consts::PI * core::f64::consts::PI;
        let w = -pi2 / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            s += exp(j * j * w);
        }
        (1.0 - sqrt(2.0 * core::f64::consts::PI) / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = exp(-2.0 * kf * kf * lambda * lambda);
            s += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}
