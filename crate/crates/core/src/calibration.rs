//! Thresholds: closed-form distribution-free formulas, Monte Carlo,
//! permutation bootstrap, wild bootstrap, and the min-combination rule.
//!
//! Scale bookkeeping: some distribution-free formulas live on the distance
//! scale (compare against `sqrt(statistic)`), others on the squared scale.
//! [`DfreeThreshold`] carries the flag and converts, so `combine_min` always
//! compares like with like.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{eval_kernel, KernelSpec, Sample};
use crate::ksd::{self, SteinContext};
use crate::mmd;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::targets::{self, TargetModel};

/// Statistics computed from one sample against an analytic model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelStatistic<T: Scalar> {
    MmdBiasedModel,
    MmdUnbiasedModel,
    KsdVstat,
    KsdUstat,
    /// Log-likelihood ratio `(1/n) Σ log(q(x_i)/p(x_i))` against the given
    /// alternative; the oracle baseline.
    Lr(TargetModel<T>),
}

impl<T: Scalar> ModelStatistic<T> {
    /// Whether the statistic lives on the squared (discrepancy²) scale.
    pub fn squared_scale(&self) -> bool {
        !matches!(self, ModelStatistic::Lr(_))
    }
}

/// Statistics computed from a pair of samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoSampleStatistic {
    MmdBiasedTwo,
    MmdUnbiasedTwo,
    /// Sup over a Gaussian family of the unsquared biased MMD.
    SupFamily,
}

impl TwoSampleStatistic {
    pub fn squared_scale(&self) -> bool {
        !matches!(self, TwoSampleStatistic::SupFamily)
    }
}

/// How a test threshold is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdRule {
    /// Closed-form distribution-free formula.
    Dfree,
    /// Monte Carlo from the model (simple tests).
    MonteCarlo { b: usize },
    /// Permutation bootstrap on the pooled samples (two-sample tests).
    Permutation { b: usize },
    /// Wild bootstrap with Rademacher multipliers (KSD tests).
    Wild { b: usize },
    /// Minimum of a data-driven rule and the distribution-free formula.
    MinCombo { inner: Box<ThresholdRule> },
}

fn check_b(b: usize) -> Result<usize> {
    if b < 50 {
        return Err(Error::InvalidInput(format!("replicate count B={b} must be >= 50")));
    }
    Ok(b)
}

impl ThresholdRule {
    /// Parse `dfree`, `mc:B=500`, `perm:B=500`, `wild:B=500`, or
    /// `min:<inner>` (e.g. `min:mc:B=500`).
    pub fn parse(s: &str) -> Result<Self> {
        if s == "dfree" {
            return Ok(ThresholdRule::Dfree);
        }
        if let Some(inner) = s.strip_prefix("min:") {
            let inner = ThresholdRule::parse(inner)?;
            if matches!(inner, ThresholdRule::Dfree | ThresholdRule::MinCombo { .. }) {
                return Err(Error::Parse(format!(
                    "`min:` needs a data-driven inner rule, got `{s}`"
                )));
            }
            return Ok(ThresholdRule::MinCombo { inner: Box::new(inner) });
        }
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("threshold rule `{s}` missing `:`")))?;
        let b = rest
            .strip_prefix("B=")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("expected `B=<count>` in `{s}`")))?;
        let b = check_b(b)?;
        match name {
            "mc" => Ok(ThresholdRule::MonteCarlo { b }),
            "perm" => Ok(ThresholdRule::Permutation { b }),
            "wild" => Ok(ThresholdRule::Wild { b }),
            other => Err(Error::Parse(format!("unknown threshold rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdRule::Dfree => write!(f, "dfree"),
            ThresholdRule::MonteCarlo { b } => write!(f, "mc:B={b}"),
            ThresholdRule::Permutation { b } => write!(f, "perm:B={b}"),
            ThresholdRule::Wild { b } => write!(f, "wild:B={b}"),
            ThresholdRule::MinCombo { inner } => write!(f, "min:{inner}"),
        }
    }
}

/// Distribution-free threshold formula selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DfreeKind<T: Scalar> {
    /// Simple test on the biased statistic; distance scale.
    Simple,
    /// Simple test on the unbiased statistic; squared scale.
    SimpleUnbiased,
    /// Two-sample test on the biased statistic; distance scale.
    Two,
    /// Two-sample test on the unbiased statistic; squared scale.
    TwoUnbiased,
    /// Tighter two-sample threshold; requires m == n; distance scale.
    TwoTight,
    /// KSD threshold applied to the squared statistic directly.
    Ksd,
    /// KSD U-statistic threshold; `h_p` bounds the Stein-kernel diagonal.
    KsdUnbiased { h_p: T },
}

/// A threshold value plus the scale it lives on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfreeThreshold<T: Scalar> {
    pub value: T,
    pub squared_scale: bool,
}

impl<T: Scalar> DfreeThreshold<T> {
    /// The threshold expressed on the squared-statistic scale.
    pub fn on_squared_scale(&self) -> T {
        if self.squared_scale {
            self.value
        } else {
            self.value * self.value
        }
    }
}

/// Closed-form distribution-free thresholds; see [`DfreeKind`] for scales.
pub fn dfree_threshold<T: Scalar>(
    kind: DfreeKind<T>,
    k: T,
    n: usize,
    m: Option<usize>,
    alpha: T,
) -> Result<DfreeThreshold<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidInput(format!("alpha={alpha} must lie in (0, 1)")));
    }
    if !(k > T::zero()) || n == 0 {
        return Err(Error::InvalidInput(format!("need K > 0 and n >= 1, got K={k}, n={n}")));
    }
    let nf = T::of(n as f64);
    let need_m = || {
        m.ok_or_else(|| Error::InvalidInput("two-sample threshold needs m".into()))
            .map(|m| T::of(m as f64))
    };
    let simple = (T::of(2.0) * k / nf).sqrt() * (T::one() + (-alpha.ln()).sqrt());
    let value = match kind {
        DfreeKind::Simple => DfreeThreshold { value: simple, squared_scale: false },
        DfreeKind::SimpleUnbiased => {
            DfreeThreshold { value: simple * simple + k / nf, squared_scale: true }
        }
        DfreeKind::Two | DfreeKind::TwoUnbiased => {
            let mf = need_m()?;
            let two = ((k / mf).sqrt() + (k / nf).sqrt())
                * (T::of(2.0) + (-T::of(2.0) * (alpha / T::of(2.0)).ln()).sqrt());
            match kind {
                DfreeKind::Two => DfreeThreshold { value: two, squared_scale: false },
                _ => DfreeThreshold {
                    value: two * two + k / mf + k / nf,
                    squared_scale: true,
                },
            }
        }
        DfreeKind::TwoTight => {
            let mf = need_m()?;
            if mf != nf {
                return Err(Error::InvalidInput(format!(
                    "tight two-sample threshold needs m == n, got m={mf}, n={n}"
                )));
            }
            DfreeThreshold {
                value: T::of(4.0) * k / nf.sqrt() * (-alpha.ln()).sqrt(),
                squared_scale: false,
            }
        }
        DfreeKind::Ksd => DfreeThreshold {
            value: (T::one() / nf).sqrt() * (T::one() + (-alpha.ln()).sqrt()),
            squared_scale: true,
        },
        DfreeKind::KsdUnbiased { h_p } => DfreeThreshold {
            value: (T::one() / nf).sqrt() * (T::one() + (-alpha.ln()).sqrt()) + h_p / nf,
            squared_scale: true,
        },
    };
    Ok(value)
}

/// Order-statistic rank for the `(1 - alpha)` empirical quantile of `b`
/// replicates: `ceil((1 - alpha)(b + 1))`, capped at `b`.
pub(crate) fn quantile_rank(alpha: f64, b: usize) -> usize {
    let rank = ((1.0 - alpha) * (b as f64 + 1.0)).ceil() as usize;
    rank.clamp(1, b)
}

fn quantile_of<T: Scalar>(mut replicates: Vec<T>, alpha: T) -> T {
    replicates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = quantile_rank(alpha.as_f64(), replicates.len());
    replicates[rank - 1]
}

/// Evaluate a model-vs-sample statistic.
pub fn eval_model_statistic<T: Scalar>(
    model: &TargetModel<T>,
    spec: &KernelSpec<T>,
    statistic: &ModelStatistic<T>,
    x: &Sample<T>,
) -> Result<T> {
    match statistic {
        ModelStatistic::MmdBiasedModel => Ok(mmd::mmd2_biased_model(model, spec, x)?.value),
        ModelStatistic::MmdUnbiasedModel => Ok(mmd::mmd2_unbiased_model(model, spec, x)?.value),
        ModelStatistic::KsdVstat => {
            ksd::ksd2_vstat(&SteinContext::new(model.clone(), spec.clone())?, x)
        }
        ModelStatistic::KsdUstat => {
            ksd::ksd2_ustat(&SteinContext::new(model.clone(), spec.clone())?, x)
        }
        ModelStatistic::Lr(model_q) => {
            let mut acc = T::zero();
            for row in x.rows() {
                let lp = targets::log_density(model, row)?;
                let lq = targets::log_density(model_q, row)?;
                if lp == T::neg_infinity() || lq == T::neg_infinity() {
                    return Err(Error::SupportViolation(
                        "zero density in the likelihood ratio".into(),
                    ));
                }
                acc += lq - lp;
            }
            Ok(acc / T::of(x.n() as f64))
        }
    }
}

/// Evaluate a two-sample statistic.
pub fn eval_two_sample_statistic<T: Scalar>(
    spec: &KernelSpec<T>,
    statistic: TwoSampleStatistic,
    y: &Sample<T>,
    x: &Sample<T>,
) -> Result<T> {
    match statistic {
        TwoSampleStatistic::MmdBiasedTwo => Ok(mmd::mmd2_biased_two(spec, y, x)?.value),
        TwoSampleStatistic::MmdUnbiasedTwo => Ok(mmd::mmd2_unbiased_two(spec, y, x)?.value),
        TwoSampleStatistic::SupFamily => mmd::sup_family(spec, y, x),
    }
}

/// Monte Carlo threshold: the empirical `(1 - alpha)` quantile of the
/// statistic over `b` fresh size-`n` samples drawn from the model. The
/// result depends only on `(model, spec, statistic, n, alpha, b, stream)`,
/// never on observed data.
pub fn mc_threshold<T: Scalar>(
    model: &TargetModel<T>,
    spec: &KernelSpec<T>,
    statistic: &ModelStatistic<T>,
    n: usize,
    alpha: T,
    b: usize,
    stream: RngStream,
) -> Result<T> {
    check_b(b)?;
    let mut replicates = Vec::with_capacity(b);
    for rep in 0..b {
        let x = targets::sample(model, n, stream.child(rep as u64))?;
        replicates.push(eval_model_statistic(model, spec, statistic, &x)?);
    }
    Ok(quantile_of(replicates, alpha))
}

// Pooled-sample machinery for the permutation bootstrap. Storing the full
// pooled Gram matrix would need O((m+n)^2) memory, so kernel values are
// evaluated on the fly: row sums once up front, then an O(s^2) subset sum
// per replicate over the smaller side s = min(m, n).

// One family member (or the plain kernel) with its pair evaluation
// specialized for the hot loops. The Gaussian fast path precomputes
// `-1/(2w)`; it agrees with `eval_kernel` to within one rounding of the
// exponent (trading the per-pair division for a multiply).
struct MemberKernel<T: Scalar> {
    spec: KernelSpec<T>,
    gauss_neg_inv_2w: Option<T>,
}

impl<T: Scalar> MemberKernel<T> {
    fn new(spec: KernelSpec<T>) -> Self {
        let gauss_neg_inv_2w = match &spec {
            KernelSpec::Gaussian { w } => Some(-(T::one() / (T::of(2.0) * *w))),
            _ => None,
        };
        MemberKernel { spec, gauss_neg_inv_2w }
    }

    #[inline]
    fn eval(&self, x: &[T], y: &[T]) -> Result<T> {
        if let Some(scale) = self.gauss_neg_inv_2w {
            let mut acc = T::zero();
            for (&a, &b) in x.iter().zip(y.iter()) {
                let diff = a - b;
                acc += diff * diff;
            }
            Ok((acc * scale).exp())
        } else {
            eval_kernel(&self.spec, x, y)
        }
    }
}

struct PooledSums<T: Scalar> {
    /// Per-width kernels (one entry for plain kernels).
    members: Vec<MemberKernel<T>>,
    /// Row sums `u_i = Σ_j k(p_i, p_j)` per width.
    row_sums: Vec<Vec<T>>,
    /// Total sum `Σ_ij k` per width.
    totals: Vec<T>,
    /// Diagonal sums `Σ_i k(p_i, p_i)` per width.
    diag_totals: Vec<T>,
    /// Diagonal entries per width.
    diags: Vec<Vec<T>>,
}

fn pooled_sums<T: Scalar>(spec: &KernelSpec<T>, pooled: &Sample<T>) -> Result<PooledSums<T>> {
    let members: Vec<MemberKernel<T>> = match spec {
        KernelSpec::Family { widths } => widths
            .iter()
            .map(|&w| KernelSpec::gaussian(w).map(MemberKernel::new))
            .collect::<Result<_>>()?,
        other => vec![MemberKernel::new(other.clone())],
    };
    let n = pooled.n();
    let mut row_sums = vec![vec![T::zero(); n]; members.len()];
    let mut diags = vec![vec![T::zero(); n]; members.len()];
    for (w, member) in members.iter().enumerate() {
        let rs = &mut row_sums[w];
        let dg = &mut diags[w];
        // Scalar Gaussian fast path works on the flat data directly.
        let flat = (pooled.d() == 1).then(|| pooled.data()).zip(member.gauss_neg_inv_2w);
        for i in 0..n {
            let row_i = pooled.row(i);
            dg[i] = member.eval(row_i, row_i)?;
            rs[i] += dg[i];
            let mut acc_i = T::zero();
            if let Some((flat, scale)) = flat {
                let xi = flat[i];
                for (rj, &xj) in rs[i + 1..].iter_mut().zip(&flat[i + 1..]) {
                    let diff = xi - xj;
                    let v = (diff * diff * scale).exp();
                    acc_i += v;
                    *rj += v;
                }
            } else {
                for j in (i + 1)..n {
                    let v = member.eval(row_i, pooled.row(j))?;
                    acc_i += v;
                    rs[j] += v;
                }
            }
            rs[i] += acc_i;
        }
    }
    let totals = row_sums.iter().map(|r| r.iter().copied().sum()).collect();
    let diag_totals = diags.iter().map(|d| d.iter().copied().sum()).collect();
    Ok(PooledSums { members, row_sums, totals, diag_totals, diags })
}

// Statistic value for the split (subset A of size s, complement of size
// n_total - s), with the subset taking the smaller-side role.
fn split_statistic<T: Scalar>(
    sums: &PooledSums<T>,
    pooled: &Sample<T>,
    subset: &[usize],
    other_size: usize,
    statistic: TwoSampleStatistic,
) -> Result<T> {
    let s = subset.len();
    let sf = T::of(s as f64);
    let of = T::of(other_size as f64);
    let mut best = T::neg_infinity();
    for (w, member) in sums.members.iter().enumerate() {
        // Within-subset sum S_AA (on-the-fly kernels), subset row-sum total
        // r = Σ_{i∈A} u_i; then S_AB = r - S_AA and S_BB = total - 2r + S_AA.
        let mut s_aa = T::zero();
        let mut s_aa_diag = T::zero();
        let mut r = T::zero();
        let two = T::of(2.0);
        let flat = (pooled.d() == 1).then(|| pooled.data()).zip(member.gauss_neg_inv_2w);
        for (a, &i) in subset.iter().enumerate() {
            r += sums.row_sums[w][i];
            s_aa_diag += sums.diags[w][i];
            s_aa += sums.diags[w][i];
            let mut acc_i = T::zero();
            if let Some((flat, scale)) = flat {
                let xi = flat[i];
                for &j in subset.iter().take(a) {
                    let diff = xi - flat[j];
                    acc_i += (diff * diff * scale).exp();
                }
            } else {
                let row_i = pooled.row(i);
                for &j in subset.iter().take(a) {
                    acc_i += member.eval(row_i, pooled.row(j))?;
                }
            }
            s_aa += two * acc_i;
        }
        let s_ab = r - s_aa;
        let s_bb = sums.totals[w] - two * r + s_aa;
        let s_bb_diag = sums.diag_totals[w] - s_aa_diag;
        let value = match statistic {
            TwoSampleStatistic::MmdBiasedTwo | TwoSampleStatistic::SupFamily => {
                let v = s_aa / (sf * sf) + s_bb / (of * of) - two * s_ab / (sf * of);
                // Bootstrap replicates tolerate larger negative round-off
                // than the primary statistic: these are O(K) sums of ~n^2
                // terms that cancel almost exactly under the null.
                v.max(T::zero())
            }
            TwoSampleStatistic::MmdUnbiasedTwo => {
                (s_aa - s_aa_diag) / (sf * (sf - T::one()))
                    + (s_bb - s_bb_diag) / (of * (of - T::one()))
                    - two * s_ab / (sf * of)
            }
        };
        best = best.max(value);
    }
    if statistic == TwoSampleStatistic::SupFamily {
        best = best.sqrt();
    }
    Ok(best)
}

fn pool_samples<T: Scalar>(y: &Sample<T>, x: &Sample<T>) -> Result<Sample<T>> {
    if y.d() != x.d() {
        return Err(Error::DimensionMismatch(format!(
            "samples of dimension {} and {}",
            y.d(),
            x.d()
        )));
    }
    let mut data = Vec::with_capacity((y.n() + x.n()) * y.d());
    data.extend_from_slice(y.data());
    data.extend_from_slice(x.data());
    Sample::new(data, y.n() + x.n(), y.d())
}

/// Permutation-bootstrap threshold: pools the samples, recomputes the
/// statistic on `b` uniformly random `(m, n)` splits, and returns the
/// `(1 - alpha)` quantile. Replicate `i` uses `stream.child(i)`.
pub fn permutation_threshold<T: Scalar>(
    spec: &KernelSpec<T>,
    y: &Sample<T>,
    x: &Sample<T>,
    statistic: TwoSampleStatistic,
    alpha: T,
    b: usize,
    stream: RngStream,
) -> Result<T> {
    permutation_threshold_and_statistic(spec, y, x, statistic, alpha, b, stream)
        .map(|(_, threshold)| threshold)
}

/// [`permutation_threshold`] fused with the observed statistic: both come
/// from one set of pooled kernel sums, so a harness trial pays for the
/// pooled pass once. The observed value equals the direct statistic up to
/// summation-order round-off.
pub fn permutation_threshold_and_statistic<T: Scalar>(
    spec: &KernelSpec<T>,
    y: &Sample<T>,
    x: &Sample<T>,
    statistic: TwoSampleStatistic,
    alpha: T,
    b: usize,
    stream: RngStream,
) -> Result<(T, T)> {
    check_b(b)?;
    if y.n() + x.n() < 4 {
        return Err(Error::InvalidInput(format!(
            "permutation bootstrap needs m + n >= 4, got {}",
            y.n() + x.n()
        )));
    }
    if statistic == TwoSampleStatistic::MmdUnbiasedTwo && (y.n() < 2 || x.n() < 2) {
        return Err(Error::InvalidInput("unbiased statistic needs m, n >= 2".into()));
    }
    let pooled = pool_samples(y, x)?;
    let sums = pooled_sums(spec, &pooled)?;
    let total = pooled.n();
    // A uniformly random subset of the smaller size, taking that side's
    // role, is distributed exactly as a uniform permutation split.
    let small = y.n().min(x.n());
    let large = total - small;
    // Observed statistic: the subset is the smaller sample's own indices.
    let observed_subset: Vec<usize> = if y.n() <= x.n() {
        (0..y.n()).collect()
    } else {
        (y.n()..total).collect()
    };
    let observed = split_statistic(&sums, &pooled, &observed_subset, large, statistic)?;
    let mut replicates = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = stream.child(rep as u64).rng();
        let subset = rand::seq::index::sample(&mut rng, total, small).into_vec();
        replicates.push(split_statistic(&sums, &pooled, &subset, large, statistic)?);
    }
    Ok((observed, quantile_of(replicates, alpha)))
}

// Quadratic form of one wild-bootstrap replicate, accumulated row by row:
// `Σ_i w_i (Σ_j H_ij w_j)`. The batched engine below reproduces this
// operation order exactly, one replicate per lane; this reference form backs
// the equivalence test.
#[cfg(test)]
pub(crate) fn wild_quadratic<T: Scalar>(h: &[T], n: usize, w: &[T], ustat: bool) -> T {
    let mut acc = T::zero();
    let mut diag = T::zero();
    for i in 0..n {
        diag += h[i * n + i];
        let mut row = T::zero();
        for j in 0..n {
            row += h[i * n + j] * w[j];
        }
        acc += w[i] * row;
    }
    wild_scale(acc, diag, n, ustat)
}

fn wild_scale<T: Scalar>(acc: T, diag: T, n: usize, ustat: bool) -> T {
    let nf = T::of(n as f64);
    if ustat {
        // W_i^2 = 1, so the diagonal contribution is exactly Σ_i H_ii.
        (acc - diag) / (nf * (nf - T::one()))
    } else {
        acc / (nf * nf)
    }
}

// All `b` replicates at once. `signs` is column-major: lane `r` of chunk
// `j` holds W_j of replicate `r`, so the inner loop vectorizes across
// replicates while each lane performs exactly `wild_quadratic`'s sums.
fn wild_replicates_batched<T: Scalar>(
    h: &[T],
    n: usize,
    signs: &[T],
    b: usize,
    ustat: bool,
) -> Vec<T> {
    let mut diag = T::zero();
    let mut acc = vec![T::zero(); b];
    let mut row = vec![T::zero(); b];
    for i in 0..n {
        diag += h[i * n + i];
        row.iter_mut().for_each(|v| *v = T::zero());
        for j in 0..n {
            let hij = h[i * n + j];
            let w_j = &signs[j * b..(j + 1) * b];
            for (r, &w) in row.iter_mut().zip(w_j) {
                *r += hij * w;
            }
        }
        let w_i = &signs[i * b..(i + 1) * b];
        for (a, (&r, &w)) in acc.iter_mut().zip(row.iter().zip(w_i)) {
            *a += w * r;
        }
    }
    acc.into_iter().map(|a| wild_scale(a, diag, n, ustat)).collect()
}

/// Wild bootstrap on a precomputed symmetric kernel matrix `h` (row-major,
/// `n` by `n`): `b` Rademacher sign vectors, replicate `(1/n^2) wᵀ H w`
/// (diagonal removed and `1/(n(n-1))` for the U-statistic).
pub fn wild_threshold_matrix<T: Scalar>(
    h: &[T],
    n: usize,
    ustat: bool,
    alpha: T,
    b: usize,
    stream: RngStream,
) -> Result<T> {
    check_b(b)?;
    if n < 2 || h.len() != n * n {
        return Err(Error::InvalidInput(format!(
            "wild bootstrap needs an n x n matrix with n >= 2, got n={n}, len={}",
            h.len()
        )));
    }
    // Column-major sign matrix: replicate r of coordinate j at [j*b + r].
    let mut signs = vec![T::zero(); n * b];
    for rep in 0..b {
        let mut rng = stream.child(rep as u64).rng();
        for j in 0..n {
            signs[j * b + rep] = if rng.random::<bool>() { T::one() } else { -T::one() };
        }
    }
    Ok(quantile_of(wild_replicates_batched(h, n, &signs, b, ustat), alpha))
}

fn stein_matrix<T: Scalar>(ctx: &SteinContext<T>, x: &Sample<T>) -> Result<Vec<T>> {
    let n = x.n();
    let mut h = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let v = ksd::stein_kernel(ctx, x.row(i), x.row(j))?;
            h[i * n + j] = v;
            h[j * n + i] = v;
        }
    }
    Ok(h)
}

/// Wild-bootstrap threshold for the KSD statistics: builds the Stein-kernel
/// matrix on the data and delegates to [`wild_threshold_matrix`].
pub fn wild_threshold<T: Scalar>(
    ctx: &SteinContext<T>,
    x: &Sample<T>,
    statistic: &ModelStatistic<T>,
    alpha: T,
    b: usize,
    stream: RngStream,
) -> Result<T> {
    wild_threshold_and_statistic(ctx, x, statistic, alpha, b, stream)
        .map(|(_, threshold)| threshold)
}

/// [`wild_threshold`] fused with the observed statistic, sharing one
/// Stein-kernel matrix. The statistic matches `ksd2_vstat`/`ksd2_ustat`
/// bit for bit (same pair values, same summation order).
pub fn wild_threshold_and_statistic<T: Scalar>(
    ctx: &SteinContext<T>,
    x: &Sample<T>,
    statistic: &ModelStatistic<T>,
    alpha: T,
    b: usize,
    stream: RngStream,
) -> Result<(T, T)> {
    let ustat = match statistic {
        ModelStatistic::KsdVstat => false,
        ModelStatistic::KsdUstat => true,
        other => {
            return Err(Error::InvalidInput(format!(
                "wild bootstrap applies to KSD statistics, got {other:?}"
            )))
        }
    };
    let n = x.n();
    if n < 2 {
        return Err(Error::InvalidInput(format!("wild bootstrap needs n >= 2, got {n}")));
    }
    let h = stein_matrix(ctx, x)?;
    let mut full = T::zero();
    let mut diag = T::zero();
    for i in 0..n {
        diag += h[i * n + i];
        for j in 0..n {
            full += h[i * n + j];
        }
    }
    let nf = T::of(n as f64);
    let observed = if ustat {
        (full - diag) / (nf * (nf - T::one()))
    } else {
        let value = full / (nf * nf);
        let tol = T::of(1e-10).max(T::epsilon() * T::of(1024.0));
        if value < -tol {
            return Err(Error::InternalConsistency(format!(
                "KSD V-statistic {value} below -{tol}"
            )));
        }
        value.max(T::zero())
    };
    let threshold = wild_threshold_matrix(&h, n, ustat, alpha, b, stream)?;
    Ok((observed, threshold))
}

/// Minimum of a data-driven and a distribution-free threshold. Both must be
/// on the same statistic scale — the caller's contract.
pub fn combine_min<T: Scalar>(data_driven: T, dfree: T) -> T {
    data_driven.min(dfree)
}
