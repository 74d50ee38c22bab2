//! Adaptive Gauss-Kronrod quadrature on an interval, used for KL
//! divergences, Stein-identity checks, and density normalization tests.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

// G7-K15 nodes and weights (positive half; QUADPACK values).
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// One G7-K15 evaluation on `[a, b]`; returns the K15 estimate and an error
/// estimate from the G7/K15 difference.
fn gk15<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let half = T::of(0.5);
    let center = (a + b) * half;
    let hw = (b - a) * half;
    let mut kronrod = T::zero();
    let mut gauss = T::zero();
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let x = T::of(x);
        let wk = T::of(wk);
        let v = if x == T::zero() {
            f(center)
        } else {
            f(center - hw * x) + f(center + hw * x)
        };
        kronrod += wk * v;
        // G7 nodes are the odd-indexed Kronrod nodes plus the center (i = 7).
        if i % 2 == 1 {
            gauss += T::of(WG[i / 2]) * v;
        }
    }
    (kronrod * hw, (kronrod - gauss).abs() * hw.abs())
}

/// Adaptive quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<T: Scalar>(f: impl Fn(T) -> T, a: T, b: T, tol: T) -> Result<T> {
    let mut total = T::zero();
    // Work stack of (lo, hi, local tolerance, depth).
    let mut stack = vec![(a, b, tol, 0u32)];
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (est, err) = gk15(&f, lo, hi);
        if err <= t || depth >= 60 {
            if depth >= 60 && err > t * T::of(1e3) {
                return Err(Error::QuadratureFailure(format!(
                    "interval [{lo}, {hi}] error {err} above tolerance {t}"
                )));
            }
            total += est;
        } else {
            let mid = (lo + hi) * T::of(0.5);
            let ht = t * T::of(0.5);
            stack.push((lo, mid, ht, depth + 1));
            stack.push((mid, hi, ht, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v: f64 = integrate(|x| x * x, 0.0, 3.0, 1e-10).unwrap();
        assert!((v - 9.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_mass() {
        let v: f64 = integrate(
            |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -12.0,
            12.0,
            1e-10,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kinked_integrand() {
        // Laplace density, kink at 0.
        let v: f64 = integrate(|x: f64| 0.25 * (-x.abs() / 2.0).exp(), -40.0, 40.0, 1e-8).unwrap();
        assert!((v - 1.0).abs() < 1e-7);
    }
}
