//! Small special-function helpers shared by the distribution and simulator code.

use num_complex::Complex64;

/// Regularized incomplete gamma functions for integer shape `k`,
/// returned as `(P, Q)` with `P + Q = 1`.
///
/// The smaller of the two is computed directly so that both tails keep full
/// relative precision.
pub(crate) fn erlang_tails(k: u32, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let kf = f64::from(k);
    if x < kf {
        // P(k, x) = e^{-x} sum_{j >= k} x^j / j!
        let mut term = (-x).exp();
        for j in 1..=k {
            term *= x / f64::from(j);
        }
        let mut sum = 0.0;
        let mut j = kf;
        loop {
            sum += term;
            j += 1.0;
            term *= x / j;
            if term < sum * 1e-17 {
                break;
            }
        }
        (sum, 1.0 - sum)
    } else {
        // Q(k, x) = e^{-x} sum_{j < k} x^j / j!
        let mut term = (-x).exp();
        let mut sum = 0.0;
        for j in 0..k {
            sum += term;
            term *= x / f64::from(j + 1);
        }
        (1.0 - sum, sum)
    }
}

/// Density of the Erlang distribution with shape `k` and rate `rate`.
pub(crate) fn erlang_density(k: u32, rate: f64, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let x = rate * t;
    let mut log_fact = 0.0;
    for j in 1..k {
        log_fact += f64::from(j).ln();
    }
    let log_density = rate.ln() + f64::from(k - 1) * x.ln() - x - log_fact;
    if k == 1 {
        rate * (-x).exp()
    } else if x == 0.0 {
        0.0
    } else {
        log_density.exp()
    }
}

/// Quantile of the unit-rate Erlang distribution with shape `k`.
pub(crate) fn erlang_quantile(k: u32, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if k == 1 {
        return -(-p).ln_1p();
    }
    let target_q = 1.0 - p;
    let mut lo = 0.0;
    let mut hi = f64::from(k).max(1.0);
    while erlang_tails(k, hi).1 > target_q {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (pp, qq) = erlang_tails(k, x);
        // compare in whichever tail is better conditioned
        let residual = if p < 0.5 { pp - p } else { target_q - qq };
        if residual.abs() < 1e-17 {
            break;
        }
        if residual > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let density = erlang_density(k, 1.0, x);
        let newton = if density > 0.0 {
            x - residual / density
        } else {
            f64::NAN
        };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-15 * hi.max(1e-300) {
            break;
        }
    }
    x
}

/// `(1 - e^{-z}) / z`, accurate near zero.
pub(crate) fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 0.25 {
        // sum_{n>=0} (-z)^n / (n+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for n in 1..30 {
            term *= -z / f64::from(n + 1);
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        (1.0 - (-z).exp()) / z
    }
}

/// `int_0^1 x e^{-z x} dx = (1 - e^{-z}(1 + z)) / z^2`, accurate near zero.
pub(crate) fn phi2(z: Complex64) -> Complex64 {
    if z.norm() < 0.25 {
        // sum_{n>=0} (-z)^n / (n! (n+2))
        let mut fact = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.5, 0.0);
        for n in 1..30 {
            fact *= -z / f64::from(n);
            let term = fact / f64::from(n + 2);
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        (1.0 - (-z).exp() * (1.0 + z)) / (z * z)
    }
}

/// `int_0^1 x^2 e^{-z x} dx = (2 - e^{-z}(z^2 + 2z + 2)) / z^3`, accurate near zero.
pub(crate) fn phi3(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        // sum_{n>=0} (-z)^n / (n! (n+3))
        let mut fact = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(1.0 / 3.0, 0.0);
        for n in 1..40 {
            fact *= -z / f64::from(n);
            let term = fact / f64::from(n + 3);
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        (2.0 - (-z).exp() * (z * z + 2.0 * z + 2.0)) / (z * z * z)
    }
}
