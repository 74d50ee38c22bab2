//! Model distributions: sampling, log densities, score functions, analytic
//! Gaussian-kernel embeddings, and KL divergences.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{get_scalar, parse_kv, KernelSpec, Sample};
use crate::large_deviations::FiniteDist;
use crate::quad;
use crate::rng::RngStream;
use crate::scalar::Scalar;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A model distribution `P` (or data distribution `Q`).
#[derive(Debug, Clone, PartialEq)]
pub enum TargetModel<T: Scalar> {
    /// Isotropic Gaussian on `R^d`.
    GaussianDiag { mu: Vec<T>, sigma2: T },
    /// Mixture of isotropic Gaussians with a shared variance.
    GaussianMixture { weights: Vec<T>, means: Vec<Vec<T>>, sigma2: T },
    /// Laplace distribution on `R`.
    Laplace1d { mu: T, b: T },
    /// Distribution on the finite alphabet `{0, .., t-1}`; samples are the
    /// symbol indices as reals.
    Finite { probs: FiniteDist<T> },
}

impl<T: Scalar> TargetModel<T> {
    pub fn gaussian_diag(mu: Vec<T>, sigma2: T) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidInput("empty mean vector".into()));
        }
        if !(sigma2 > T::zero()) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!("sigma2={sigma2} must be > 0")));
        }
        Ok(TargetModel::GaussianDiag { mu, sigma2 })
    }

    pub fn gaussian_mixture(weights: Vec<T>, means: Vec<Vec<T>>, sigma2: T) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::InvalidInput(format!(
                "mixture has {} weights but {} means",
                weights.len(),
                means.len()
            )));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidInput("mixture means must share a positive dimension".into()));
        }
        if weights.iter().any(|&w| w < T::zero()) {
            return Err(Error::InvalidInput("mixture weights must be nonnegative".into()));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::of(1e-12) {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}, not 1")));
        }
        if !(sigma2 > T::zero()) {
            return Err(Error::InvalidInput(format!("sigma2={sigma2} must be > 0")));
        }
        Ok(TargetModel::GaussianMixture { weights, means, sigma2 })
    }

    pub fn laplace(mu: T, b: T) -> Result<Self> {
        if !(b > T::zero()) || !b.is_finite() {
            return Err(Error::InvalidInput(format!("laplace scale b={b} must be > 0")));
        }
        Ok(TargetModel::Laplace1d { mu, b })
    }

    pub fn finite(probs: FiniteDist<T>) -> Self {
        TargetModel::Finite { probs }
    }

    /// Dimension of the sample space (finite models live on a 1-d encoding).
    pub fn dim(&self) -> usize {
        match self {
            TargetModel::GaussianDiag { mu, .. } => mu.len(),
            TargetModel::GaussianMixture { means, .. } => means[0].len(),
            TargetModel::Laplace1d { .. } | TargetModel::Finite { .. } => 1,
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, TargetModel::Finite { .. })
    }

    /// Parse a model descriptor, e.g. `gauss:mu=0,sigma2=8`,
    /// `laplace:mu=0,b=2`, `mix:w=.5;.5,mu=-1;1,sigma2=1`, `finite:p=.5;.5`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("model descriptor `{s}` missing `:`")))?;
        let kv = parse_kv(rest)?;
        let list = |key: &str| -> Result<Vec<T>> {
            let raw = kv
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Parse(format!("missing `{key}` in `{s}`")))?;
            raw.split(';')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map(T::of)
                        .map_err(|_| Error::Parse(format!("bad number `{v}` in `{s}`")))
                })
                .collect()
        };
        match name {
            "gauss" => TargetModel::gaussian_diag(list("mu")?, get_scalar(&kv, "sigma2", s)?),
            "laplace" => TargetModel::laplace(get_scalar(&kv, "mu", s)?, get_scalar(&kv, "b", s)?),
            "mix" => {
                let means = list("mu")?.into_iter().map(|m| vec![m]).collect();
                TargetModel::gaussian_mixture(list("w")?, means, get_scalar(&kv, "sigma2", s)?)
            }
            "finite" => Ok(TargetModel::finite(FiniteDist::new(list("p")?)?)),
            other => Err(Error::Parse(format!("unknown model variant `{other}`"))),
        }
    }
}

impl<T: Scalar> std::fmt::Display for TargetModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |xs: &[T]| {
            xs.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
        };
        match self {
            TargetModel::GaussianDiag { mu, sigma2 } => {
                write!(f, "gauss:mu={},sigma2={sigma2}", join(mu))
            }
            TargetModel::GaussianMixture { weights, means, sigma2 } => {
                let mus: Vec<T> = means.iter().map(|m| m[0]).collect();
                write!(f, "mix:w={},mu={},sigma2={sigma2}", join(weights), join(&mus))
            }
            TargetModel::Laplace1d { mu, b } => write!(f, "laplace:mu={mu},b={b}"),
            TargetModel::Finite { probs } => write!(f, "finite:p={}", join(probs.probs())),
        }
    }
}

/// Draw `n` i.i.d. observations; deterministic given the stream.
pub fn sample<T: Scalar>(model: &TargetModel<T>, n: usize, stream: RngStream) -> Result<Sample<T>> {
    if n < 1 {
        return Err(Error::InvalidInput("sample size must be >= 1".into()));
    }
    let mut rng = stream.rng();
    let d = model.dim();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        match model {
            TargetModel::GaussianDiag { mu, sigma2 } => {
                let sigma = sigma2.as_f64().sqrt();
                for &m in mu {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(m + T::of(sigma * z));
                }
            }
            TargetModel::GaussianMixture { weights, means, sigma2 } => {
                let sigma = sigma2.as_f64().sqrt();
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut comp = weights.len() - 1;
                for (i, &w) in weights.iter().enumerate() {
                    acc += w.as_f64();
                    if u < acc {
                        comp = i;
                        break;
                    }
                }
                for &m in &means[comp] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(m + T::of(sigma * z));
                }
            }
            TargetModel::Laplace1d { mu, b } => {
                // Inverse CDF: x = mu - b sgn(u) ln(1 - 2|u|), u ~ U(-1/2, 1/2).
                let u: f64 = rng.random::<f64>() - 0.5;
                let t = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                data.push(*mu - *b * T::of(u.signum() * t.ln()));
            }
            TargetModel::Finite { probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut sym = probs.len() - 1;
                for (i, &p) in probs.probs().iter().enumerate() {
                    acc += p.as_f64();
                    if u < acc {
                        sym = i;
                        break;
                    }
                }
                data.push(T::of(sym as f64));
            }
        }
    }
    Sample::new(data, n, d)
}

fn check_dim<T: Scalar>(model: &TargetModel<T>, x: &[T]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model dimension {} vs point dimension {}",
            model.dim(),
            x.len()
        )));
    }
    Ok(())
}

fn log_normal_iso<T: Scalar>(x: &[T], mu: &[T], sigma2: T) -> T {
    let d = T::of(x.len() as f64);
    let mut sq = T::zero();
    for (&a, &m) in x.iter().zip(mu.iter()) {
        let diff = a - m;
        sq += diff * diff;
    }
    let half = T::of(0.5);
    -half * d * (T::of(LN_2PI) + sigma2.ln()) - sq / (T::of(2.0) * sigma2)
}

/// Exact log density. Finite models return `-inf` on zero-probability
/// symbols.
pub fn log_density<T: Scalar>(model: &TargetModel<T>, x: &[T]) -> Result<T> {
    check_dim(model, x)?;
    match model {
        TargetModel::GaussianDiag { mu, sigma2 } => Ok(log_normal_iso(x, mu, *sigma2)),
        TargetModel::GaussianMixture { weights, means, sigma2 } => {
            let mut best = T::neg_infinity();
            let terms: Vec<T> = weights
                .iter()
                .zip(means.iter())
                .map(|(&w, m)| {
                    let t = if w > T::zero() {
                        w.ln() + log_normal_iso(x, m, *sigma2)
                    } else {
                        T::neg_infinity()
                    };
                    if t > best {
                        best = t;
                    }
                    t
                })
                .collect();
            if best == T::neg_infinity() {
                return Ok(T::neg_infinity());
            }
            let sum: T = terms.iter().map(|&t| (t - best).exp()).sum();
            Ok(best + sum.ln())
        }
        TargetModel::Laplace1d { mu, b } => {
            Ok(-(T::of(2.0) * *b).ln() - (x[0] - *mu).abs() / *b)
        }
        TargetModel::Finite { probs } => {
            let idx = x[0].round().as_f64();
            if idx < 0.0 || idx >= probs.len() as f64 {
                return Err(Error::InvalidInput(format!("symbol {idx} outside alphabet")));
            }
            let p = probs.probs()[idx as usize];
            Ok(if p > T::zero() { p.ln() } else { T::neg_infinity() })
        }
    }
}

/// Score function `∇_x log p(x)` for continuous models. The Laplace score at
/// its kink is defined as 0.
pub fn score<T: Scalar>(model: &TargetModel<T>, x: &[T]) -> Result<Vec<T>> {
    check_dim(model, x)?;
    match model {
        TargetModel::GaussianDiag { mu, sigma2 } => {
            Ok(x.iter().zip(mu.iter()).map(|(&a, &m)| -(a - m) / *sigma2).collect())
        }
        TargetModel::GaussianMixture { weights, means, sigma2 } => {
            // Responsibility-weighted component scores via log-sum-exp.
            let logs: Vec<T> = weights
                .iter()
                .zip(means.iter())
                .map(|(&w, m)| {
                    if w > T::zero() {
                        w.ln() + log_normal_iso(x, m, *sigma2)
                    } else {
                        T::neg_infinity()
                    }
                })
                .collect();
            let best = logs.iter().copied().fold(T::neg_infinity(), T::max);
            let denom: T = logs.iter().map(|&t| (t - best).exp()).sum();
            let mut out = vec![T::zero(); x.len()];
            for (t, m) in logs.iter().zip(means.iter()) {
                let r = (*t - best).exp() / denom;
                for (o, (&a, &mm)) in out.iter_mut().zip(x.iter().zip(m.iter())) {
                    *o += r * (-(a - mm) / *sigma2);
                }
            }
            Ok(out)
        }
        TargetModel::Laplace1d { mu, b } => {
            let diff = x[0] - *mu;
            let s = if diff == T::zero() { T::zero() } else { -diff.signum() / *b };
            Ok(vec![s])
        }
        TargetModel::Finite { .. } => {
            Err(Error::NoClosedForm("finite models have no Lebesgue score".into()))
        }
    }
}

/// `E_{y ~ P} k(x, y)` for a Gaussian kernel and Gaussian(-mixture) model.
pub fn mean_embedding_dot<T: Scalar>(
    model: &TargetModel<T>,
    spec: &KernelSpec<T>,
    x: &[T],
) -> Result<T> {
    let w = match spec {
        KernelSpec::Gaussian { w } => *w,
        _ => {
            return Err(Error::NoClosedForm(format!(
                "mean embedding closed form needs a Gaussian kernel, got {spec}"
            )))
        }
    };
    check_dim(model, x)?;
    match model {
        TargetModel::GaussianDiag { mu, sigma2 } => Ok(gauss_cross_term(x, mu, w, *sigma2)),
        TargetModel::GaussianMixture { weights, means, sigma2 } => {
            let mut acc = T::zero();
            for (&wt, m) in weights.iter().zip(means.iter()) {
                acc += wt * gauss_cross_term(x, m, w, *sigma2);
            }
            Ok(acc)
        }
        _ => Err(Error::NoClosedForm(format!("no closed-form embedding for {model}"))),
    }
}

// E exp(-||x - y||^2 / 2w) with y ~ N(mu, v I):
// (w / (w + v))^{d/2} exp(-||x - mu||^2 / (2 (w + v))).
fn gauss_cross_term<T: Scalar>(x: &[T], mu: &[T], w: T, v: T) -> T {
    let d = T::of(x.len() as f64);
    let denom = w + v;
    let mut sq = T::zero();
    for (&a, &m) in x.iter().zip(mu.iter()) {
        let diff = a - m;
        sq += diff * diff;
    }
    (w / denom).powf(d * T::of(0.5)) * (-sq / (T::of(2.0) * denom)).exp()
}

/// `E_{y, y' ~ P} k(y, y')` for a Gaussian kernel and Gaussian(-mixture)
/// model.
pub fn embedding_norm_sq<T: Scalar>(model: &TargetModel<T>, spec: &KernelSpec<T>) -> Result<T> {
    let w = match spec {
        KernelSpec::Gaussian { w } => *w,
        _ => {
            return Err(Error::NoClosedForm(format!(
                "embedding norm closed form needs a Gaussian kernel, got {spec}"
            )))
        }
    };
    match model {
        TargetModel::GaussianDiag { mu, sigma2 } => {
            let d = T::of(mu.len() as f64);
            Ok((w / (w + T::of(2.0) * *sigma2)).powf(d * T::of(0.5)))
        }
        TargetModel::GaussianMixture { weights, means, sigma2 } => {
            // y - y' ~ N(mu_a - mu_b, 2 sigma^2 I) for components (a, b).
            let v = T::of(2.0) * *sigma2;
            let mut acc = T::zero();
            for (&wa, ma) in weights.iter().zip(means.iter()) {
                for (&wb, mb) in weights.iter().zip(means.iter()) {
                    acc += wa * wb * gauss_cross_term(ma, mb, w, v);
                }
            }
            Ok(acc)
        }
        _ => Err(Error::NoClosedForm(format!("no closed-form embedding for {model}"))),
    }
}

/// Population cross term `E_{y ~ P, x ~ Q} k(y, x)` for Gaussian kernel and
/// Gaussian/mixture models.
pub(crate) fn cross_embedding<T: Scalar>(
    model_p: &TargetModel<T>,
    model_q: &TargetModel<T>,
    spec: &KernelSpec<T>,
) -> Result<T> {
    let w = match spec {
        KernelSpec::Gaussian { w } => *w,
        _ => return Err(Error::NoClosedForm("cross embedding needs a Gaussian kernel".into())),
    };
    let comps = |m: &TargetModel<T>| -> Result<(Vec<T>, Vec<Vec<T>>, T)> {
        match m {
            TargetModel::GaussianDiag { mu, sigma2 } => {
                Ok((vec![T::one()], vec![mu.clone()], *sigma2))
            }
            TargetModel::GaussianMixture { weights, means, sigma2 } => {
                Ok((weights.clone(), means.clone(), *sigma2))
            }
            _ => Err(Error::NoClosedForm(format!("no closed-form embedding for {m}"))),
        }
    };
    let (wp, mp, s2p) = comps(model_p)?;
    let (wq, mq, s2q) = comps(model_q)?;
    let v = s2p + s2q;
    let mut acc = T::zero();
    for (&wa, ma) in wp.iter().zip(mp.iter()) {
        for (&wb, mb) in wq.iter().zip(mq.iter()) {
            acc += wa * wb * gauss_cross_term(ma, mb, w, v);
        }
    }
    Ok(acc)
}

// Integration window covering essentially all the mass of both 1-d models.
pub(crate) fn quad_window<T: Scalar>(models: &[&TargetModel<T>]) -> Result<(T, T)> {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for m in models {
        let (centers, sd): (Vec<T>, T) = match m {
            TargetModel::GaussianDiag { mu, sigma2 } => (vec![mu[0]], sigma2.sqrt()),
            TargetModel::GaussianMixture { means, sigma2, .. } => {
                (means.iter().map(|v| v[0]).collect(), sigma2.sqrt())
            }
            TargetModel::Laplace1d { mu, b } => (vec![*mu], T::of(2.0f64.sqrt()) * *b),
            TargetModel::Finite { .. } => {
                return Err(Error::InvalidInput("finite model has no quadrature window".into()))
            }
        };
        let pad = T::of(12.0) * sd;
        for c in centers {
            lo = lo.min(c - pad);
            hi = hi.max(c + pad);
        }
    }
    Ok((lo, hi))
}

/// KL divergence `D(P || Q)` in nats.
pub fn kld<T: Scalar>(model_p: &TargetModel<T>, model_q: &TargetModel<T>) -> Result<T> {
    match (model_p, model_q) {
        (TargetModel::Finite { probs: p }, TargetModel::Finite { probs: q }) => p.kld(q),
        (TargetModel::Finite { .. }, _) | (_, TargetModel::Finite { .. }) => Err(
            Error::InvalidInput("KLD needs both models finite or both continuous".into()),
        ),
        (
            TargetModel::GaussianDiag { mu: mp, sigma2: sp },
            TargetModel::GaussianDiag { mu: mq, sigma2: sq },
        ) => {
            if mp.len() != mq.len() {
                return Err(Error::DimensionMismatch("KLD of unequal dimensions".into()));
            }
            let d = T::of(mp.len() as f64);
            let mut shift = T::zero();
            for (&a, &b) in mp.iter().zip(mq.iter()) {
                let diff = a - b;
                shift += diff * diff;
            }
            let half = T::of(0.5);
            Ok(half * (d * ((*sq / *sp).ln() + *sp / *sq - T::one()) + shift / *sq))
        }
        _ => {
            if model_p.dim() != 1 || model_q.dim() != 1 {
                return Err(Error::NoClosedForm(
                    "quadrature KLD is implemented for 1-d models only".into(),
                ));
            }
            let (lo, hi) = quad_window(&[model_p, model_q])?;
            quad::integrate(
                |x: T| {
                    let lp = log_density(model_p, &[x]).unwrap();
                    if lp == T::neg_infinity() {
                        return T::zero();
                    }
                    let lq = log_density(model_q, &[x]).unwrap();
                    lp.exp() * (lp - lq)
                },
                lo,
                hi,
                T::of(1e-6),
            )
        }
    }
}
