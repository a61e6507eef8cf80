//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used for transforms of continuous kernels where a closed form is not
//! wanted (sampled histories, cross-checks of the closed forms).

use num_complex::Complex64;
use thiserror::Error;

use crate::distributions::DelayDistribution;

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

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("subdivision limit reached with error estimate {estimate:e} above {tolerance:e}")]
    Limit { estimate: f64, tolerance: f64 },
    #[error("integrand is not finite on [{0}, {1}]")]
    NonFinite(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
}

/// One 15-point Kronrod panel with its embedded 7-point Gauss error estimate.
fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol` by global
/// bisection of the worst panel.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
) -> Result<QuadratureResult, QuadratureError> {
    const MAX_PANELS: usize = 4000;
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            error: 0.0,
        });
    }
    let (v, e) = panel(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(QuadratureError::NonFinite(a, b));
        }
        if error <= abs_tol {
            return Ok(QuadratureResult { value, error });
        }
        if panels.len() >= MAX_PANELS {
            return Err(QuadratureError::Limit {
                estimate: error,
                tolerance: abs_tol,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("at least one panel");
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = panel(&f, lo, mid);
        let (v2, e2) = panel(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Laplace transform of a continuous kernel by quadrature of its density,
/// truncating the tail where its mass falls below `1e-13`.
///
/// Returns `None` for atomic distributions.
pub fn laplace_by_quadrature(
    dist: &DelayDistribution,
    lambda: Complex64,
    abs_tol: f64,
) -> Option<Result<Complex64, QuadratureError>> {
    dist.density(0.0)?;
    let (lo, hi) = support_window(dist);
    let re = integrate(
        |t| (-lambda * t).exp().re * dist.density(t).unwrap_or(0.0),
        lo,
        hi,
        abs_tol,
    );
    let im = integrate(
        |t| (-lambda * t).exp().im * dist.density(t).unwrap_or(0.0),
        lo,
        hi,
        abs_tol,
    );
    Some(re.and_then(|r| im.map(|i| Complex64::new(r.value, i.value))))
}

fn support_window(dist: &DelayDistribution) -> (f64, f64) {
    use crate::distributions::DistributionKind;
    match dist.kind() {
        DistributionKind::Uniform { lower, upper } => (*lower, *upper),
        _ => (0.0, dist.tail_cutoff(1e-13)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_oscillatory_integrals() {
        let r = integrate(|x| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert!((r.value - 9.0).abs() < 1e-12);
        let r = integrate(|x| (10.0 * x).cos(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!(r.value.abs() < 1e-12);
        let r = integrate(|x| (-x).exp(), 0.0, 40.0, 1e-12).unwrap();
        assert!((r.value - (1.0 - (-40f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        let lam = Complex64::new(0.4, 1.7);
        for d in [
            DelayDistribution::exponential(1.3).unwrap(),
            DelayDistribution::gamma(2, 1.0).unwrap(),
            DelayDistribution::gamma(5, 2.0).unwrap(),
            DelayDistribution::uniform(0.3, 2.1).unwrap(),
        ] {
            let q = laplace_by_quadrature(&d, lam, 1e-12).unwrap().unwrap();
            let exact = d.laplace(lam).unwrap();
            assert!((q - exact).norm() < 1e-10, "{d}: {q} vs {exact}");
            // imaginary axis: C and S
            let m = d.trig_moments(2.2);
            let q = laplace_by_quadrature(&d, Complex64::new(0.0, 2.2), 1e-12)
                .unwrap()
                .unwrap();
            assert!((q.re - m.c_value).abs() < 1e-10);
            assert!((-q.im - m.s_value).abs() < 1e-10);
        }
        assert!(
            laplace_by_quadrature(&DelayDistribution::dirac(1.0).unwrap(), lam, 1e-12).is_none()
        );
    }
}
