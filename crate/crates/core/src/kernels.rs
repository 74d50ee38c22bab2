//! Kernel evaluation, Gram matrices, kernel derivatives, and the median
//! bandwidth heuristic.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Kernel family descriptor. Every variant carries a uniform upper bound
/// `K` on `k(x, y)` accessible via [`KernelSpec::bound`].
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec<T: Scalar> {
    /// `k(x, y) = exp(-||x - y||^2 / (2 w))`, `w > 0`.
    Gaussian { w: T },
    /// Inverse multiquadric `k(x, y) = (c^2 + ||x - y||^2)^eta`,
    /// `c > 0`, `-1 < eta < 0`.
    Imq { c: T, eta: T },
    /// Indicator kernel `k(i, j) = 1{i = j}` on the alphabet `{0, .., t-1}`.
    Delta { t: usize },
    /// Finite family of Gaussian bandwidths; evaluated only through the
    /// sup-over-family statistic, never pointwise.
    Family { widths: Vec<T> },
}

impl<T: Scalar> KernelSpec<T> {
    pub fn gaussian(w: T) -> Result<Self> {
        if !(w > T::zero()) || !w.is_finite() {
            return Err(Error::InvalidInput(format!("gaussian bandwidth w={w} must be > 0")));
        }
        Ok(KernelSpec::Gaussian { w })
    }

    pub fn imq(c: T, eta: T) -> Result<Self> {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("imq scale c={c} must be > 0")));
        }
        if !(eta > -T::one() && eta < T::zero()) {
            return Err(Error::InvalidInput(format!("imq exponent eta={eta} must lie in (-1, 0)")));
        }
        Ok(KernelSpec::Imq { c, eta })
    }

    pub fn delta(t: usize) -> Result<Self> {
        if t < 2 {
            return Err(Error::InvalidInput(format!("delta alphabet size t={t} must be >= 2")));
        }
        Ok(KernelSpec::Delta { t })
    }

    pub fn family(widths: Vec<T>) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::InvalidInput("family must be nonempty".into()));
        }
        for &w in &widths {
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::InvalidInput(format!("family bandwidth {w} must be > 0")));
            }
        }
        Ok(KernelSpec::Family { widths })
    }

    /// Uniform upper bound `K` on the kernel.
    pub fn bound(&self) -> T {
        match self {
            KernelSpec::Gaussian { .. } | KernelSpec::Delta { .. } | KernelSpec::Family { .. } => {
                T::one()
            }
            KernelSpec::Imq { c, eta } => (*c * *c).powf(*eta),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        matches!(self, KernelSpec::Gaussian { .. } | KernelSpec::Imq { .. })
    }

    /// Parse a kernel descriptor, e.g. `gaussian:w=1.0`, `imq:c=1.0,eta=-0.5`,
    /// `delta:t=3`, `family:gaussian:w=0.5;1;2`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("kernel descriptor `{s}` missing `:`")))?;
        match name {
            "gaussian" => {
                let kv = parse_kv(rest)?;
                KernelSpec::gaussian(get_scalar(&kv, "w", s)?)
            }
            "imq" => {
                let kv = parse_kv(rest)?;
                KernelSpec::imq(get_scalar(&kv, "c", s)?, get_scalar(&kv, "eta", s)?)
            }
            "delta" => {
                let kv = parse_kv(rest)?;
                let t = get_scalar::<f64>(&kv, "t", s)?;
                if t.fract() != 0.0 || t < 0.0 {
                    return Err(Error::Parse(format!("delta alphabet size in `{s}` must be a nonnegative integer")));
                }
                KernelSpec::delta(t as usize)
            }
            "family" => {
                let inner = rest.strip_prefix("gaussian:w=").ok_or_else(|| {
                    Error::Parse(format!("family descriptor `{s}` must look like family:gaussian:w=0.5;1;2"))
                })?;
                let widths = inner
                    .split(';')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map(T::of)
                            .map_err(|_| Error::Parse(format!("bad bandwidth `{v}` in `{s}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                KernelSpec::family(widths)
            }
            other => Err(Error::Parse(format!("unknown kernel variant `{other}`"))),
        }
    }
}

impl<T: Scalar> std::fmt::Display for KernelSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelSpec::Gaussian { w } => write!(f, "gaussian:w={w}"),
            KernelSpec::Imq { c, eta } => write!(f, "imq:c={c},eta={eta}"),
            KernelSpec::Delta { t } => write!(f, "delta:t={t}"),
            KernelSpec::Family { widths } => {
                write!(f, "family:gaussian:w=")?;
                for (i, w) in widths.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{w}")?;
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn parse_kv(s: &str) -> Result<Vec<(String, String)>> {
    s.split(',')
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{pair}`")))
        })
        .collect()
}

pub(crate) fn get_scalar<T: Scalar>(kv: &[(String, String)], key: &str, ctx: &str) -> Result<T> {
    let raw = kv
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Parse(format!("missing `{key}` in `{ctx}`")))?;
    raw.parse::<f64>()
        .map(T::of)
        .map_err(|_| Error::Parse(format!("bad number `{raw}` for `{key}` in `{ctx}`")))
}

/// An n x d array of real observations, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T: Scalar> {
    data: Vec<T>,
    n: usize,
    d: usize,
}

impl<T: Scalar> Sample<T> {
    pub fn new(data: Vec<T>, n: usize, d: usize) -> Result<Self> {
        if n < 1 || d < 1 {
            return Err(Error::InvalidInput(format!("sample shape {n}x{d} must be at least 1x1")));
        }
        if data.len() != n * d {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match shape {n}x{d}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sample contains non-finite entries".into()));
        }
        Ok(Sample { data, n, d })
    }

    /// One-dimensional sample from a vector of scalars.
    pub fn from_scalars(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Sample::new(values, n, 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.d)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

/// Dense row-major Gram matrix.
#[derive(Debug, Clone)]
pub struct Gram<T: Scalar> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Scalar> Gram<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

fn sq_dist<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = T::zero();
    for (&a, &b) in x.iter().zip(y.iter()) {
        let diff = a - b;
        acc += diff * diff;
    }
    acc
}

/// Evaluate `k(x, y)`. Rejects the `Family` variant: family statistics are
/// a sup over member statistics, not a pointwise kernel.
pub fn eval_kernel<T: Scalar>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "points of dimension {} and {}",
            x.len(),
            y.len()
        )));
    }
    match spec {
        KernelSpec::Gaussian { w } => {
            Ok((-sq_dist(x, y) / (T::of(2.0) * *w)).exp())
        }
        KernelSpec::Imq { c, eta } => Ok((*c * *c + sq_dist(x, y)).powf(*eta)),
        KernelSpec::Delta { .. } => {
            let equal = x
                .iter()
                .zip(y.iter())
                .all(|(&a, &b)| a.round() == b.round());
            Ok(if equal { T::one() } else { T::zero() })
        }
        KernelSpec::Family { .. } => Err(Error::UnsupportedKernel(
            "family kernels are evaluated through the sup-over-family statistic".into(),
        )),
    }
}

/// Gram matrix with entry `(i, j) = k(X_i, Y_j)`.
pub fn gram<T: Scalar>(spec: &KernelSpec<T>, x: &Sample<T>, y: &Sample<T>) -> Result<Gram<T>> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch(format!(
            "samples of dimension {} and {}",
            x.d(),
            y.d()
        )));
    }
    let mut data = Vec::with_capacity(x.n() * y.n());
    for i in 0..x.n() {
        for j in 0..y.n() {
            data.push(eval_kernel(spec, x.row(i), y.row(j))?);
        }
    }
    Ok(Gram { data, rows: x.n(), cols: y.n() })
}

/// Gradient of the kernel in its first argument.
pub fn kernel_grad_x<T: Scalar>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<Vec<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "points of dimension {} and {}",
            x.len(),
            y.len()
        )));
    }
    match spec {
        KernelSpec::Gaussian { w } => {
            let k = eval_kernel(spec, x, y)?;
            Ok(x.iter()
                .zip(y.iter())
                .map(|(&a, &b)| -((a - b) / *w) * k)
                .collect())
        }
        KernelSpec::Imq { c, eta } => {
            let u = *c * *c + sq_dist(x, y);
            let factor = T::of(2.0) * *eta * u.powf(*eta - T::one());
            Ok(x.iter().zip(y.iter()).map(|(&a, &b)| factor * (a - b)).collect())
        }
        _ => Err(Error::UnsupportedKernel(format!("{spec} has no gradient"))),
    }
}

/// Trace of the mixed second derivative matrix `∂^2 k / ∂x_i ∂y_i` summed
/// over coordinates.
pub fn kernel_trace_grad_xy<T: Scalar>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "points of dimension {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d = T::of(x.len() as f64);
    let r2 = sq_dist(x, y);
    match spec {
        KernelSpec::Gaussian { w } => {
            let k = (-r2 / (T::of(2.0) * *w)).exp();
            Ok((d / *w - r2 / (*w * *w)) * k)
        }
        KernelSpec::Imq { c, eta } => {
            let u = *c * *c + r2;
            let two = T::of(2.0);
            let e = *eta;
            Ok(-two * e * d * u.powf(e - T::one())
                - two * two * e * (e - T::one()) * r2 * u.powf(e - two))
        }
        _ => Err(Error::UnsupportedKernel(format!("{spec} has no derivatives"))),
    }
}

/// Median-heuristic bandwidth: half the median of the pairwise squared
/// distances, so the kernel at the median distance equals `e^{-1}`. Falls
/// back to the smallest positive squared distance when the median is zero.
pub fn median_bandwidth<T: Scalar>(x: &Sample<T>) -> Result<T> {
    if x.n() < 2 {
        return Err(Error::InvalidInput(format!(
            "median bandwidth needs n >= 2, got n={}",
            x.n()
        )));
    }
    let mut dists = Vec::with_capacity(x.n() * (x.n() - 1) / 2);
    for i in 0..x.n() {
        for j in (i + 1)..x.n() {
            dists.push(sq_dist(x.row(i), x.row(j)));
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        (dists[mid - 1] + dists[mid]) * T::of(0.5)
    };
    let half = T::of(0.5);
    if median > T::zero() {
        return Ok(median * half);
    }
    match dists.iter().find(|&&v| v > T::zero()) {
        Some(&v) => Ok(v * half),
        None => Err(Error::DegenerateSample("all points identical".into())),
    }
}
