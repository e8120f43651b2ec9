//! Normal distribution functions and sample summaries.

use crate::scalar::Real;

/// Standard normal density.
pub fn normal_pdf<T: Real>(x: T) -> T {
    (-(x * x) / T::lit(2.0)).exp() / (T::TAU()).sqrt()
}

/// Standard normal cdf Φ(x) = erfc(−x/√2)/2.
pub fn normal_cdf<T: Real>(x: T) -> T {
    erfc(-x / T::SQRT_2()) / T::lit(2.0)
}

/// Complementary error function.
///
/// Uses the positive-term series for erf on |x| < 2.5 and a Lentz continued
/// fraction for erfc beyond, which keeps full relative precision in the
/// lower tail of Φ.
pub fn erfc<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let cut = T::lit(2.5);
    if x.abs() < cut {
        T::one() - erf_series(x)
    } else if x > T::zero() {
        erfc_continued_fraction(x)
    } else {
        T::lit(2.0) - erfc_continued_fraction(-x)
    }
}

fn frac_1_sqrt_pi<T: Real>() -> T {
    T::lit(0.564_189_583_547_756_3)
}

fn erf_series<T: Real>(x: T) -> T {
    // erf(x) = 2/√π · e^{−x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1))
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = T::one();
    for _ in 0..200 {
        k += T::lit(2.0);
        term = term * T::lit(2.0) * x2 / k;
        sum += term;
        if term.abs() <= T::epsilon() * sum.abs() {
            break;
        }
    }
    T::lit(2.0) * frac_1_sqrt_pi::<T>() * (-x2).exp() * sum
}

fn erfc_continued_fraction<T: Real>(x: T) -> T {
    // erfc(x) = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))
    let tiny = T::min_positive_value() / T::epsilon();
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    for n in 1..500 {
        let a = T::from_count(n) / T::lit(2.0);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f *= delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    (-(x * x)).exp() * frac_1_sqrt_pi::<T>() / f
}

/// Standard normal quantile Φ⁻¹(p) for p ∈ (0, 1).
///
/// Acklam's rational approximation polished by Halley steps against
/// [`normal_cdf`]. Returns ∓∞ at p = 0 and p = 1, NaN outside [0, 1].
pub fn normal_quantile<T: Real>(p: T) -> T {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return T::nan();
    }
    if p == T::zero() {
        return T::neg_infinity();
    }
    if p == T::one() {
        return T::infinity();
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let pf = p.as_f64();
    let p_low = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x0 = if pf < p_low {
        tail((-2.0 * pf.ln()).sqrt())
    } else if pf <= 1.0 - p_low {
        let q = pf - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - pf).ln()).sqrt())
    };
    let mut x = T::lit(x0);
    for _ in 0..3 {
        let e = normal_cdf(x) - p;
        let u = e * T::TAU().sqrt() * (x * x / T::lit(2.0)).exp();
        let step = u / (T::one() + x * u / T::lit(2.0));
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

pub fn mean<T: Real>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_count(xs.len())
}

/// Population (1/n) variance.
pub fn variance<T: Real>(xs: &[T]) -> T {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_count(xs.len())
}

/// Unbiased (1/(n−1)) variance.
pub fn sample_variance<T: Real>(xs: &[T]) -> T {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_count(xs.len() - 1)
}

/// Central moments m2, m3, m4 (1/n normalisation).
fn central_moments<T: Real>(xs: &[T]) -> (T, T, T) {
    let m = mean(xs);
    let n = T::from_count(xs.len());
    let (mut m2, mut m3, mut m4) = (T::zero(), T::zero(), T::zero());
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Sample skewness m3 / m2^{3/2}; `None` for a degenerate sample.
pub fn skewness<T: Real>(xs: &[T]) -> Option<T> {
    let (m2, m3, _) = central_moments(xs);
    (m2 > T::zero()).then(|| m3 / m2.powf(T::lit(1.5)))
}

/// Sample excess kurtosis m4 / m2² − 3; `None` for a degenerate sample.
pub fn excess_kurtosis<T: Real>(xs: &[T]) -> Option<T> {
    let (m2, _, m4) = central_moments(xs);
    (m2 > T::zero()).then(|| m4 / (m2 * m2) - T::lit(3.0))
}

/// Kolmogorov–Smirnov distance between the empirical cdf of `xs` and `cdf`.
pub fn ks_distance<T: Real>(xs: &[T], cdf: impl Fn(T) -> T) -> T {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = T::from_count(sorted.len());
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let hi = T::from_count(i + 1) / n - f;
            let lo = f - T::from_count(i) / n;
            hi.max(lo)
        })
        .fold(T::zero(), T::max)
}

/// KS distance to the normal law with the sample's own mean and standard
/// deviation; `None` when the sample is degenerate.
pub fn ks_distance_fitted_normal<T: Real>(xs: &[T]) -> Option<T> {
    let m = mean(xs);
    let sd = variance(xs).sqrt();
    (sd > T::zero()).then(|| ks_distance(xs, |x| normal_cdf((x - m) / sd)))
}

/// Linear-interpolation quantile of an unsorted sample (for reporting only;
/// the estimator uses order statistics directly).
pub fn interpolated_quantile<T: Real>(xs: &[T], q: f64) -> T {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let w = T::lit(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * w
}

pub fn median<T: Real>(xs: &[T]) -> T {
    interpolated_quantile(xs, 0.5)
}
