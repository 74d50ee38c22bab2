//! MMD statistics: model-vs-sample (biased and unbiased), two-sample
//! (biased and unbiased), the closed-form population value, and the sup over
//! a finite kernel family.
//!
//! The two-sample squared statistic is
//! `(1/m^2) ΣΣ k(y_i, y_j) + (1/n^2) ΣΣ k(x_i, x_j) - (2/mn) ΣΣ k(x_i, y_j)`,
//! with the `1/m^2` and `1/n^2` factors on the within-sample sums; dropping
//! them would be inconsistent with the biased/unbiased gap bound
//! `K/m + K/n`, so the factors are kept.

use crate::error::{Error, Result};
use crate::kernels::{eval_kernel, KernelSpec, Sample};
use crate::scalar::Scalar;
use crate::targets::{self, TargetModel};

/// A squared-MMD estimate plus the bookkeeping needed by calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdValue<T: Scalar> {
    /// Squared-MMD estimate. Biased values are nonnegative; unbiased values
    /// may be negative.
    pub value: T,
    pub kind: MmdKind,
    /// Size of the data sample `X`.
    pub n: usize,
    /// Size of the model-side sample `Y`; `None` for model-vs-sample.
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmdKind {
    Biased,
    Unbiased,
}

// Clamp a biased statistic: tiny negatives are floating-point noise, larger
// ones indicate a bug.
fn clamp_biased<T: Scalar>(value: T) -> Result<T> {
    let tol = T::of(1e-12).max(T::epsilon() * T::of(64.0));
    if value < -tol {
        return Err(Error::InternalConsistency(format!(
            "biased squared MMD {value} below -{tol}"
        )));
    }
    Ok(value.max(T::zero()))
}

// E_{y ~ P} k(x, y): closed-form Gaussian embeddings, or the probability
// lookup for finite models under the delta kernel.
fn embed_dot<T: Scalar>(model: &TargetModel<T>, spec: &KernelSpec<T>, x: &[T]) -> Result<T> {
    match (model, spec) {
        (TargetModel::Finite { probs }, KernelSpec::Delta { t }) => {
            if probs.len() != *t {
                return Err(Error::DimensionMismatch(format!(
                    "delta kernel alphabet {t} vs model alphabet {}",
                    probs.len()
                )));
            }
            let idx = x[0].round().as_f64();
            if idx < 0.0 || idx >= *t as f64 {
                return Err(Error::InvalidInput(format!("symbol {idx} outside alphabet")));
            }
            Ok(probs.probs()[idx as usize])
        }
        _ => targets::mean_embedding_dot(model, spec, x),
    }
}

// E_{y, y' ~ P} k(y, y').
fn embed_norm<T: Scalar>(model: &TargetModel<T>, spec: &KernelSpec<T>) -> Result<T> {
    match (model, spec) {
        (TargetModel::Finite { probs }, KernelSpec::Delta { .. }) => {
            Ok(probs.probs().iter().map(|&p| p * p).sum())
        }
        _ => targets::embedding_norm_sq(model, spec),
    }
}

fn model_terms<T: Scalar>(
    model: &TargetModel<T>,
    spec: &KernelSpec<T>,
    x: &Sample<T>,
) -> Result<(T, T)> {
    let norm = embed_norm(model, spec)?;
    let mut dot = T::zero();
    for row in x.rows() {
        dot += embed_dot(model, spec, row)?;
    }
    Ok((norm, dot / T::of(x.n() as f64)))
}

/// Biased model-vs-sample squared MMD
/// `d_k^2 = E k(y, y') - (2/n) Σ E k(x_i, y) + (1/n^2) ΣΣ k(x_i, x_j)`.
pub fn mmd2_biased_model<T: Scalar>(
    model: &TargetModel<T>,
    spec: &KernelSpec<T>,
    x: &Sample<T>,
) -> Result<MmdValue<T>> {
    let (norm, dot) = model_terms(model, spec, x)?;
    let n = x.n();
    let mut within = T::zero();
    for i in 0..n {
        for j in 0..n {
            within += eval_kernel(spec, x.row(i), x.row(j))?;
        }
    }
    let nf = T::of(n as f64);
    let value = clamp_biased(norm - T::of(2.0) * dot + within / (nf * nf))?;
    Ok(MmdValue { value, kind: MmdKind::Biased, n, m: None })
}

/// Unbiased model-vs-sample squared MMD: the within-sample sum drops the
/// diagonal and divides by `n(n-1)`.
pub fn mmd2_unbiased_model<T: Scalar>(
    model: &TargetModel<T>,
    spec: &KernelSpec<T>,
    x: &Sample<T>,
) -> Result<MmdValue<T>> {
    let n = x.n();
    if n < 2 {
        return Err(Error::InvalidInput(format!("unbiased statistic needs n >= 2, got {n}")));
    }
    let (norm, dot) = model_terms(model, spec, x)?;
    let mut within = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                within += eval_kernel(spec, x.row(i), x.row(j))?;
            }
        }
    }
    let nf = T::of(n as f64);
    let value = norm - T::of(2.0) * dot + within / (nf * (nf - T::one()));
    Ok(MmdValue { value, kind: MmdKind::Unbiased, n, m: None })
}

// Order samples by (size, lexicographic data) so the summation order — and
// hence the floating-point result — is identical under argument swap. The
// statistics below are symmetric in the sample roles, so this is safe.
fn canonical<'a, T: Scalar>(
    y: &'a Sample<T>,
    x: &'a Sample<T>,
) -> (&'a Sample<T>, &'a Sample<T>) {
    let swap = match y.n().cmp(&x.n()) {
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => y
            .data()
            .iter()
            .zip(x.data())
            .find_map(|(a, b)| a.partial_cmp(b).filter(|o| o.is_ne()))
            .map(|o| o == std::cmp::Ordering::Greater)
            .unwrap_or(false),
    };
    if swap {
        (x, y)
    } else {
        (y, x)
    }
}

fn two_sample_sums<T: Scalar>(
    spec: &KernelSpec<T>,
    y: &Sample<T>,
    x: &Sample<T>,
) -> Result<(T, T, T, T, T)> {
    if y.d() != x.d() {
        return Err(Error::DimensionMismatch(format!(
            "samples of dimension {} and {}",
            y.d(),
            x.d()
        )));
    }
    let swapped = !std::ptr::eq(canonical(y, x).0, y);
    let (y, x) = canonical(y, x);
    // Full within-sample sums (with diagonal), diagonal sums, and the cross
    // sum; enough to build both the biased and unbiased statistics.
    let mut syy = T::zero();
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut dyy = T::zero();
    let mut dxx = T::zero();
    for i in 0..y.n() {
        dyy += eval_kernel(spec, y.row(i), y.row(i))?;
        for j in 0..y.n() {
            syy += eval_kernel(spec, y.row(i), y.row(j))?;
        }
    }
    for i in 0..x.n() {
        dxx += eval_kernel(spec, x.row(i), x.row(i))?;
        for j in 0..x.n() {
            sxx += eval_kernel(spec, x.row(i), x.row(j))?;
        }
    }
    for i in 0..x.n() {
        for j in 0..y.n() {
            sxy += eval_kernel(spec, x.row(i), y.row(j))?;
        }
    }
    if swapped {
        Ok((sxx, syy, sxy, dxx, dyy))
    } else {
        Ok((syy, sxx, sxy, dyy, dxx))
    }
}

/// Biased two-sample squared MMD.
pub fn mmd2_biased_two<T: Scalar>(
    spec: &KernelSpec<T>,
    y: &Sample<T>,
    x: &Sample<T>,
) -> Result<MmdValue<T>> {
    let (syy, sxx, sxy, _, _) = two_sample_sums(spec, y, x)?;
    let m = T::of(y.n() as f64);
    let n = T::of(x.n() as f64);
    let value = clamp_biased(syy / (m * m) + sxx / (n * n) - T::of(2.0) * sxy / (m * n))?;
    Ok(MmdValue { value, kind: MmdKind::Biased, n: x.n(), m: Some(y.n()) })
}

/// Unbiased two-sample squared MMD: diagonal-removed within-sample sums.
pub fn mmd2_unbiased_two<T: Scalar>(
    spec: &KernelSpec<T>,
    y: &Sample<T>,
    x: &Sample<T>,
) -> Result<MmdValue<T>> {
    if y.n() < 2 || x.n() < 2 {
        return Err(Error::InvalidInput(format!(
            "unbiased statistic needs m, n >= 2, got m={}, n={}",
            y.n(),
            x.n()
        )));
    }
    let (syy, sxx, sxy, dyy, dxx) = two_sample_sums(spec, y, x)?;
    let m = T::of(y.n() as f64);
    let n = T::of(x.n() as f64);
    let value = (syy - dyy) / (m * (m - T::one())) + (sxx - dxx) / (n * (n - T::one()))
        - T::of(2.0) * sxy / (m * n);
    Ok(MmdValue { value, kind: MmdKind::Unbiased, n: x.n(), m: Some(y.n()) })
}

/// Exact closed-form population squared MMD between two models.
pub fn population_mmd2<T: Scalar>(
    model_p: &TargetModel<T>,
    model_q: &TargetModel<T>,
    spec: &KernelSpec<T>,
) -> Result<T> {
    if let (TargetModel::Finite { probs: p }, TargetModel::Finite { probs: q }) =
        (model_p, model_q)
    {
        if let KernelSpec::Delta { .. } = spec {
            if p.len() != q.len() {
                return Err(Error::DimensionMismatch("P and Q alphabets differ".into()));
            }
            let mut acc = T::zero();
            for (&a, &b) in p.probs().iter().zip(q.probs().iter()) {
                let diff = a - b;
                acc += diff * diff;
            }
            return Ok(acc);
        }
    }
    let value = embed_norm(model_p, spec)? + embed_norm(model_q, spec)?
        - T::of(2.0) * targets::cross_embedding(model_p, model_q, spec)?;
    clamp_biased(value)
}

/// Sup-over-family two-sample statistic: the max over member kernels of the
/// (unsquared) biased MMD.
pub fn sup_family<T: Scalar>(
    spec: &KernelSpec<T>,
    y: &Sample<T>,
    x: &Sample<T>,
) -> Result<T> {
    let widths = match spec {
        KernelSpec::Family { widths } => widths,
        _ => {
            return Err(Error::UnsupportedKernel(format!(
                "sup statistic needs a kernel family, got {spec}"
            )))
        }
    };
    let mut best = T::neg_infinity();
    for &w in widths {
        let member = KernelSpec::gaussian(w)?;
        best = best.max(mmd2_biased_two(&member, y, x)?.value.sqrt());
    }
    Ok(best)
}
