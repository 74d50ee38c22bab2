//! Kernel Stein discrepancy: the Stein kernel `h_p` and its V- and
//! U-statistics. Everything here touches the model only through its score
//! function, so densities known up to a normalization constant are fully
//! supported — the context records a log-normalization offset precisely to
//! let tests assert that no computation reads it.

use crate::error::{Error, Result};
use crate::kernels::{eval_kernel, kernel_grad_x, kernel_trace_grad_xy, KernelSpec, Sample};
use crate::quad;
use crate::scalar::Scalar;
use crate::targets::{self, TargetModel};

/// Model/kernel pair for Stein computations.
#[derive(Debug, Clone)]
pub struct SteinContext<T: Scalar> {
    model: TargetModel<T>,
    spec: KernelSpec<T>,
    /// Additive constant on the model's log density, i.e. an unknown
    /// normalization factor. No statistic reads it: the score is invariant.
    log_norm_offset: T,
}

impl<T: Scalar> SteinContext<T> {
    pub fn new(model: TargetModel<T>, spec: KernelSpec<T>) -> Result<Self> {
        if !model.is_continuous() {
            return Err(Error::InvalidInput(
                "Stein statistics need a continuous model with a score".into(),
            ));
        }
        if !spec.is_differentiable() {
            return Err(Error::UnsupportedKernel(format!(
                "Stein statistics need a differentiable kernel, got {spec}"
            )));
        }
        Ok(SteinContext { model, spec, log_norm_offset: T::zero() })
    }

    /// Same context with the density scaled by `exp(offset)`; statistics are
    /// unchanged bit-for-bit.
    pub fn with_log_norm_offset(mut self, offset: T) -> Self {
        self.log_norm_offset = offset;
        self
    }

    pub fn model(&self) -> &TargetModel<T> {
        &self.model
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn log_norm_offset(&self) -> T {
        self.log_norm_offset
    }

    /// The model's score kinks (Laplace) make the Lipschitz assumptions of
    /// the asymptotic theory unverifiable; such contexts are experimental.
    pub fn is_experimental(&self) -> bool {
        matches!(self.model, TargetModel::Laplace1d { .. })
    }
}

/// Weak-convergence condition satisfied by the (kernel, dimension) pair, if
/// any: Gaussian kernels qualify in d=1 only, IMQ kernels in any dimension.
/// `None` means the asymptotic guarantee is not established and callers
/// should surface a warning.
pub fn weak_convergence_condition<T: Scalar>(spec: &KernelSpec<T>, d: usize) -> Option<u8> {
    match spec {
        KernelSpec::Gaussian { .. } if d == 1 => Some(1),
        KernelSpec::Imq { .. } => Some(3),
        _ => None,
    }
}

/// Stein kernel
/// `h_p(x, y) = s_p(x)ᵀ s_p(y) k + s_p(y)ᵀ ∇_x k + s_p(x)ᵀ ∇_y k + tr ∇_{x,y} k`.
pub fn stein_kernel<T: Scalar>(ctx: &SteinContext<T>, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "points of dimension {} and {}",
            x.len(),
            y.len()
        )));
    }
    let sx = targets::score(&ctx.model, x)?;
    let sy = targets::score(&ctx.model, y)?;
    let k = eval_kernel(&ctx.spec, x, y)?;
    let gx = kernel_grad_x(&ctx.spec, x, y)?;
    // By symmetry of the kernel, ∇_y k(x, y) = ∇_1 k(y, x).
    let gy = kernel_grad_x(&ctx.spec, y, x)?;
    let mut acc = kernel_trace_grad_xy(&ctx.spec, x, y)?;
    for i in 0..x.len() {
        // Add the two cross terms in value order so that swapping (x, y)
        // reproduces the identical floating-point sum: exact symmetry.
        let a = sy[i] * gx[i];
        let b = sx[i] * gy[i];
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        acc += sx[i] * sy[i] * k + lo + hi;
    }
    Ok(acc)
}

fn stein_matrix_sums<T: Scalar>(ctx: &SteinContext<T>, x: &Sample<T>) -> Result<(T, T)> {
    // Full double sum and the diagonal sum.
    let n = x.n();
    let mut full = T::zero();
    let mut diag = T::zero();
    for i in 0..n {
        diag += stein_kernel(ctx, x.row(i), x.row(i))?;
        for j in 0..n {
            full += stein_kernel(ctx, x.row(i), x.row(j))?;
        }
    }
    Ok((full, diag))
}

/// KSD V-statistic `d_S^2 = (1/n^2) ΣΣ h_p(x_i, x_j)`; nonnegative since
/// `h_p` is PSD, with tiny negatives clamped to 0.
pub fn ksd2_vstat<T: Scalar>(ctx: &SteinContext<T>, x: &Sample<T>) -> Result<T> {
    let (full, _) = stein_matrix_sums(ctx, x)?;
    let n = T::of(x.n() as f64);
    let value = full / (n * n);
    let tol = T::of(1e-10).max(T::epsilon() * T::of(1024.0));
    if value < -tol {
        return Err(Error::InternalConsistency(format!("KSD V-statistic {value} below -{tol}")));
    }
    Ok(value.max(T::zero()))
}

/// KSD U-statistic `(1/(n(n-1))) Σ_{i≠j} h_p(x_i, x_j)`; may be negative.
pub fn ksd2_ustat<T: Scalar>(ctx: &SteinContext<T>, x: &Sample<T>) -> Result<T> {
    if x.n() < 2 {
        return Err(Error::InvalidInput(format!(
            "KSD U-statistic needs n >= 2, got {}",
            x.n()
        )));
    }
    let (full, diag) = stein_matrix_sums(ctx, x)?;
    let n = T::of(x.n() as f64);
    Ok((full - diag) / (n * (n - T::one())))
}

/// Quadrature check of the Stein identity: `∫ h_p(x, y) p(x) dx` for a fixed
/// `y`, integrating against `ctx`'s own model. Near 0 whenever the score and
/// the integrating density belong to the same model.
pub fn stein_mean_check<T: Scalar>(ctx: &SteinContext<T>, y: &[T]) -> Result<T> {
    stein_mean_check_under(ctx, ctx.model(), y)
}

/// Same integral against an arbitrary 1-d data model; nonzero values expose
/// a score miswired against the sampling distribution.
pub fn stein_mean_check_under<T: Scalar>(
    ctx: &SteinContext<T>,
    data_model: &TargetModel<T>,
    y: &[T],
) -> Result<T> {
    if ctx.model.dim() != 1 || data_model.dim() != 1 {
        return Err(Error::NoClosedForm("Stein mean check is 1-d only".into()));
    }
    let (lo, hi) = targets::quad_window(&[&ctx.model, data_model])?;
    let y_pt = [y[0]];
    quad::integrate(
        |x: T| {
            let density = targets::log_density(data_model, &[x]).unwrap().exp();
            stein_kernel(ctx, &[x], &y_pt).unwrap() * density
        },
        lo,
        hi,
        T::of(1e-7),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::RngStream;
    use crate::targets::sample;

    fn std_normal() -> TargetModel<f64> {
        TargetModel::gaussian_diag(vec![0.0], 1.0).unwrap()
    }

    fn ctx_gauss() -> SteinContext<f64> {
        SteinContext::new(std_normal(), KernelSpec::gaussian(1.0).unwrap()).unwrap()
    }

    #[test]
    fn context_validation() {
        let finite = TargetModel::finite(
            crate::large_deviations::FiniteDist::new(vec![0.5, 0.5]).unwrap(),
        );
        assert!(SteinContext::new(finite, KernelSpec::gaussian(1.0).unwrap()).is_err());
        assert!(SteinContext::new(std_normal(), KernelSpec::delta(2).unwrap()).is_err());
        let lap = SteinContext::new(
            TargetModel::laplace(0.0, 1.0).unwrap(),
            KernelSpec::gaussian(1.0).unwrap(),
        )
        .unwrap();
        assert!(lap.is_experimental());
        assert!(!ctx_gauss().is_experimental());
    }

    #[test]
    fn condition_tagging() {
        let gauss = KernelSpec::gaussian(1.0).unwrap();
        let imq = KernelSpec::imq(1.0, -0.5).unwrap();
        assert_eq!(weak_convergence_condition(&gauss, 1), Some(1));
        assert_eq!(weak_convergence_condition(&gauss, 2), None);
        assert_eq!(weak_convergence_condition(&imq, 1), Some(3));
        assert_eq!(weak_convergence_condition(&imq, 5), Some(3));
    }

    #[test]
    fn stein_kernel_pinned_values() {
        let ctx = ctx_gauss();
        // At x=y=0 the scores vanish; only the trace term d/w survives.
        assert!((stein_kernel(&ctx, &[0.0], &[0.0]).unwrap() - 1.0).abs() < 1e-12);
        // At x=y=1: s=-1 each, k=1, gradient terms 0, trace term 1.
        assert!((stein_kernel(&ctx, &[1.0], &[1.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stein_kernel_symmetry() {
        let contexts = [
            ctx_gauss(),
            SteinContext::new(
                TargetModel::gaussian_mixture(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], 1.0)
                    .unwrap(),
                KernelSpec::imq(1.0, -0.5).unwrap(),
            )
            .unwrap(),
        ];
        let mut rng = RngStream::new(30, 0).rng();
        for ctx in &contexts {
            for _ in 0..500 {
                let x = [rng.random::<f64>() * 6.0 - 3.0];
                let y = [rng.random::<f64>() * 6.0 - 3.0];
                let a = stein_kernel(ctx, &x, &y).unwrap();
                let b = stein_kernel(ctx, &y, &x).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    // Finite-difference assembly of all four terms from kernel and log
    // density evaluations only.
    fn stein_fd(model: &TargetModel<f64>, spec: &KernelSpec<f64>, x: f64, y: f64) -> f64 {
        let h = 1e-5;
        let s = |v: f64| {
            (targets::log_density(model, &[v + h]).unwrap()
                - targets::log_density(model, &[v - h]).unwrap())
                / (2.0 * h)
        };
        let k = |a: f64, b: f64| eval_kernel(spec, &[a], &[b]).unwrap();
        let gx = (k(x + h, y) - k(x - h, y)) / (2.0 * h);
        let gy = (k(x, y + h) - k(x, y - h)) / (2.0 * h);
        let gxy = (k(x + h, y + h) - k(x + h, y - h) - k(x - h, y + h) + k(x - h, y - h))
            / (4.0 * h * h);
        s(x) * s(y) * k(x, y) + s(y) * gx + s(x) * gy + gxy
    }

    #[test]
    fn stein_kernel_matches_finite_differences() {
        let model = TargetModel::gaussian_diag(vec![0.4], 1.7).unwrap();
        for spec in [KernelSpec::gaussian(0.8).unwrap(), KernelSpec::imq(1.2, -0.5).unwrap()] {
            let ctx = SteinContext::new(model.clone(), spec.clone()).unwrap();
            let mut rng = RngStream::new(31, 0).rng();
            for _ in 0..200 {
                let x = rng.random::<f64>() * 6.0 - 3.0;
                let y = rng.random::<f64>() * 6.0 - 3.0;
                let a = stein_kernel(&ctx, &[x], &[y]).unwrap();
                let b = stein_fd(&model, &spec, x, y);
                assert!((a - b).abs() < 1e-4, "{spec} at ({x}, {y}): {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn vstat_basics() {
        let ctx = ctx_gauss();
        let x = Sample::from_scalars(vec![0.0]).unwrap();
        assert!((ksd2_vstat(&ctx, &x).unwrap() - 1.0).abs() < 1e-12);
        let mut rng = RngStream::new(32, 0).rng();
        for trial in 0..500 {
            let n = 2 + rng.random_range(0..8);
            let x = sample(&std_normal(), n, RngStream::new(33, trial)).unwrap();
            assert!(ksd2_vstat(&ctx, &x).unwrap() >= 0.0);
        }
    }

    #[test]
    fn vstat_null_decay() {
        let ctx = ctx_gauss();
        let mut mean = 0.0;
        for trial in 0..50 {
            let x = sample(&std_normal(), 2000, RngStream::new(34, trial)).unwrap();
            mean += ksd2_vstat(&ctx, &x).unwrap();
        }
        mean /= 50.0;
        assert!(mean <= 0.01, "mean V-statistic {mean}");
    }

    #[test]
    fn ustat_basics() {
        let ctx = ctx_gauss();
        let two = Sample::from_scalars(vec![0.3, -0.8]).unwrap();
        let u = ksd2_ustat(&ctx, &two).unwrap();
        let h = stein_kernel(&ctx, &[0.3], &[-0.8]).unwrap();
        assert!((u - h).abs() < 1e-12);
        let one = Sample::from_scalars(vec![0.0]).unwrap();
        assert!(ksd2_ustat(&ctx, &one).is_err());
    }

    #[test]
    fn ustat_zero_mean_under_null() {
        let ctx = ctx_gauss();
        let trials = 200;
        let mut vals = Vec::with_capacity(trials);
        for trial in 0..trials {
            let x = sample(&std_normal(), 2000, RngStream::new(35, trial as u64)).unwrap();
            vals.push(ksd2_ustat(&ctx, &x).unwrap());
        }
        let mean: f64 = vals.iter().sum::<f64>() / trials as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn ustat_vstat_gap_identity_and_bound() {
        // The V- and U-statistics share the off-diagonal sum, so their gap
        // is exactly v - u = (diag/n - v) / (n - 1); with H_p = max_i
        // h_p(x_i, x_i) this gives the one-sided bound v - u <= H_p/(n-1)
        // that makes the U-statistic threshold adjustment conservative.
        let ctx = ctx_gauss();
        let alt = TargetModel::gaussian_diag(vec![0.7], 2.0).unwrap();
        for trial in 0..500 {
            let n = 2 + (trial as usize % 12);
            let x = sample(&alt, n, RngStream::new(36, trial)).unwrap();
            let v = ksd2_vstat(&ctx, &x).unwrap();
            let u = ksd2_ustat(&ctx, &x).unwrap();
            let diag: f64 =
                (0..n).map(|i| stein_kernel(&ctx, x.row(i), x.row(i)).unwrap()).sum();
            let h_max = (0..n)
                .map(|i| stein_kernel(&ctx, x.row(i), x.row(i)).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let identity = (diag / n as f64 - v) / (n as f64 - 1.0);
            assert!(
                ((v - u) - identity).abs() <= 1e-10 * (1.0 + v.abs()),
                "trial {trial}: gap {} vs identity {identity}",
                v - u
            );
            assert!(
                v - u <= h_max / (n as f64 - 1.0) + 1e-12,
                "trial {trial}: one-sided bound violated"
            );
        }
    }

    #[test]
    fn stein_identity_by_quadrature() {
        for spec in [KernelSpec::gaussian(1.0).unwrap(), KernelSpec::imq(1.0, -0.5).unwrap()] {
            for model in [
                std_normal(),
                TargetModel::gaussian_mixture(vec![0.3, 0.7], vec![vec![-1.0], vec![2.0]], 1.0)
                    .unwrap(),
            ] {
                let ctx = SteinContext::new(model, spec.clone()).unwrap();
                for y in [0.0, 3.7, -1.2] {
                    let v = stein_mean_check(&ctx, &[y]).unwrap();
                    assert!(v.abs() <= 1e-5, "{spec} at y={y}: {v}");
                }
            }
        }
    }

    #[test]
    fn miswired_score_detected() {
        // Score of N(1,1) integrated against N(0,1) data.
        let ctx = SteinContext::new(
            TargetModel::gaussian_diag(vec![1.0], 1.0).unwrap(),
            KernelSpec::gaussian(1.0).unwrap(),
        )
        .unwrap();
        let v = stein_mean_check_under(&ctx, &std_normal(), &[0.0]).unwrap();
        assert!(v.abs() > 1e-3, "miswired score not detected: {v}");
    }

    #[test]
    fn normalization_offset_is_inert() {
        let base = ctx_gauss();
        let scaled = ctx_gauss().with_log_norm_offset(7.25);
        assert_eq!(scaled.log_norm_offset(), 7.25);
        let x = sample(&std_normal(), 40, RngStream::new(37, 0)).unwrap();
        // Bit-identical statistics: only the score enters, never the offset.
        assert_eq!(
            ksd2_vstat(&base, &x).unwrap().to_bits(),
            ksd2_vstat(&scaled, &x).unwrap().to_bits()
        );
        assert_eq!(
            ksd2_ustat(&base, &x).unwrap().to_bits(),
            ksd2_ustat(&scaled, &x).unwrap().to_bits()
        );
        assert_eq!(
            stein_kernel(&base, &[0.3], &[1.1]).unwrap().to_bits(),
            stein_kernel(&scaled, &[0.3], &[1.1]).unwrap().to_bits()
        );
    }
}
