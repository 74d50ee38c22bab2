//! Exact finite-alphabet computations with the method of types: type
//! enumeration, type-class probabilities with their sandwich bounds, exact
//! test error probabilities under the delta kernel, the two-sample exponent
//! `D*`, and finite-n verification of Sanov-style bounds.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability vector on a `t`-letter alphabet, `t >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDist<T: Scalar> {
    probs: Vec<T>,
}

impl<T: Scalar> FiniteDist<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidInput("alphabet size must be >= 2".into()));
        }
        if probs.iter().any(|&p| p < T::zero() || !p.is_finite()) {
            return Err(Error::InvalidInput("probabilities must be nonnegative".into()));
        }
        let total: T = probs.iter().copied().sum();
        let tol = T::of(1e-12).max(T::epsilon() * T::of(16.0 * probs.len() as f64));
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(FiniteDist { probs })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `D(self || other)` in nats; `+inf` on support violation.
    pub fn kld(&self, other: &FiniteDist<T>) -> Result<T> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch("KLD of unequal alphabets".into()));
        }
        Ok(kld_vec(&self.probs, &other.probs))
    }
}

fn kld_vec<T: Scalar>(p: &[T], q: &[T]) -> T {
    let mut acc = T::zero();
    for (&a, &b) in p.iter().zip(q.iter()) {
        if a > T::zero() {
            if b <= T::zero() {
                return T::infinity();
            }
            acc += a * (a / b).ln();
        }
    }
    acc
}

/// Integer count vector summing to `m`: the type of an `m`-sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeVector {
    counts: Vec<u64>,
    m: u64,
}

impl TypeVector {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidInput("alphabet size must be >= 2".into()));
        }
        let m = counts.iter().sum();
        Ok(TypeVector { counts, m })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Empirical distribution `counts / m`.
    pub fn empirical<T: Scalar>(&self) -> Vec<T> {
        let m = T::of(self.m as f64);
        self.counts.iter().map(|&c| T::of(c as f64) / m).collect()
    }
}

fn compositions_count(m: u64, t: usize) -> Option<u128> {
    // C(m + t - 1, t - 1) with overflow checks.
    let mut acc: u128 = 1;
    for i in 1..=(t as u128 - 1) {
        acc = acc.checked_mul(m as u128 + i)?;
        acc /= i;
    }
    Some(acc)
}

const ENUMERATION_GUARD: u128 = 10_000_000;

/// All compositions of `m` into `t` nonnegative parts, lexicographic order.
pub fn enumerate_types(m: u64, t: usize) -> Result<Vec<TypeVector>> {
    if t < 2 {
        return Err(Error::InvalidInput("alphabet size must be >= 2".into()));
    }
    let count = compositions_count(m, t)
        .filter(|&c| c <= ENUMERATION_GUARD)
        .ok_or_else(|| {
            Error::TooLarge(format!("composition count for m={m}, t={t} exceeds the guard"))
        })?;
    let mut out = Vec::with_capacity(count as usize);
    let mut counts = vec![0u64; t];
    fill_compositions(m, 0, &mut counts, &mut out);
    Ok(out)
}

fn fill_compositions(rem: u64, idx: usize, counts: &mut Vec<u64>, out: &mut Vec<TypeVector>) {
    if idx == counts.len() - 1 {
        counts[idx] = rem;
        out.push(TypeVector { counts: counts.clone(), m: counts.iter().sum() });
        return;
    }
    for v in 0..=rem {
        counts[idx] = v;
        fill_compositions(rem - v, idx + 1, counts, out);
    }
}

/// Exact multinomial log-probability of the type class of `tv` under `r`.
/// Returns `-inf` when `r` lacks support for a positive count.
pub fn type_log_prob<T: Scalar>(tv: &TypeVector, r: &FiniteDist<T>) -> Result<T> {
    if tv.len() != r.len() {
        return Err(Error::DimensionMismatch("type and distribution alphabets differ".into()));
    }
    let mut acc = T::of((tv.m() as f64) + 1.0).ln_gamma();
    for (&c, &p) in tv.counts().iter().zip(r.probs().iter()) {
        if c == 0 {
            continue;
        }
        if p <= T::zero() {
            return Ok(T::neg_infinity());
        }
        let cf = T::of(c as f64);
        acc = acc - (cf + T::one()).ln_gamma() + cf * p.ln();
    }
    Ok(acc)
}

/// Sandwich bounds on the type-class probability:
/// `(m+1)^{-t} e^{-m D} <= P(type) <= e^{-m D}` with `D = D(T/m || R)`.
#[derive(Debug, Clone, Copy)]
pub struct Sandwich<T: Scalar> {
    pub log_lower: T,
    pub log_exact: T,
    pub log_upper: T,
}

impl<T: Scalar> Sandwich<T> {
    pub fn lower(&self) -> T {
        self.log_lower.exp()
    }

    pub fn exact(&self) -> T {
        self.log_exact.exp()
    }

    pub fn upper(&self) -> T {
        self.log_upper.exp()
    }

    pub fn holds(&self) -> bool {
        // Epsilon slack: the bounds can coincide with the exact value (e.g.
        // single-letter types), where log-gamma round-off decides the order.
        let tol = T::of(1e-9) * (T::one() + self.log_exact.abs());
        self.log_lower <= self.log_exact + tol && self.log_exact <= self.log_upper + tol
    }
}

pub fn type_prob_sandwich<T: Scalar>(tv: &TypeVector, r: &FiniteDist<T>) -> Result<Sandwich<T>> {
    if tv.len() != r.len() {
        return Err(Error::DimensionMismatch("type and distribution alphabets differ".into()));
    }
    for (&c, &p) in tv.counts().iter().zip(r.probs().iter()) {
        if c > 0 && p <= T::zero() {
            return Err(Error::SupportViolation("type lies outside the support of R".into()));
        }
    }
    let m = T::of(tv.m() as f64);
    let t = T::of(tv.len() as f64);
    let d = kld_vec(&tv.empirical::<T>(), r.probs());
    let log_upper = -m * d;
    Ok(Sandwich {
        log_lower: log_upper - t * (m + T::one()).ln(),
        log_exact: type_log_prob(tv, r)?,
        log_upper,
    })
}

/// Squared-distance MMD of the delta kernel: `d(p, q) = sqrt(sum (p_i - q_i)^2)`.
pub fn delta_mmd<T: Scalar>(p: &[T], q: &[T]) -> T {
    let mut acc = T::zero();
    for (&a, &b) in p.iter().zip(q.iter()) {
        let diff = a - b;
        acc += diff * diff;
    }
    acc.sqrt()
}

fn log_sum_exp<T: Scalar>(terms: &[T]) -> T {
    let best = terms.iter().copied().fold(T::neg_infinity(), T::max);
    if best == T::neg_infinity() {
        return T::neg_infinity();
    }
    let sum: T = terms.iter().map(|&t| (t - best).exp()).sum();
    best + sum.ln()
}

/// Exact type-I and type-II error probabilities of the simple delta-kernel
/// test `d(P, T/n) <= gamma` on a finite alphabet: type-I under `P`,
/// type-II under `Q`.
pub fn exact_error_probs<T: Scalar>(
    p: &FiniteDist<T>,
    q: &FiniteDist<T>,
    gamma: T,
    n: u64,
) -> Result<(T, T)> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch("P and Q alphabets differ".into()));
    }
    let types = enumerate_types(n, p.len())?;
    let mut reject_p = Vec::new();
    let mut accept_q = Vec::new();
    for tv in &types {
        let emp = tv.empirical::<T>();
        if delta_mmd(p.probs(), &emp) <= gamma {
            accept_q.push(type_log_prob(tv, q)?);
        } else {
            reject_p.push(type_log_prob(tv, p)?);
        }
    }
    let clamp = |v: T| v.max(T::zero()).min(T::one());
    Ok((clamp(log_sum_exp(&reject_p).exp()), clamp(log_sum_exp(&accept_q).exp())))
}

/// Optimal two-sample type-II exponent
/// `D* = inf_R c D(R||P) + (1-c) D(R||Q) = -log sum_i p_i^c q_i^{1-c}`.
pub fn dstar<T: Scalar>(p: &FiniteDist<T>, q: &FiniteDist<T>, c: T) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch("P and Q alphabets differ".into()));
    }
    if !(c > T::zero() && c < T::one()) {
        return Err(Error::InvalidInput(format!("ratio c={c} must lie in (0, 1)")));
    }
    let mut acc = T::zero();
    for (&a, &b) in p.probs().iter().zip(q.probs().iter()) {
        if a > T::zero() && b > T::zero() {
            acc += a.powf(c) * b.powf(T::one() - c);
        }
    }
    if acc <= T::zero() {
        return Ok(T::infinity());
    }
    Ok(-acc.ln())
}

/// Grid over the `t`-simplex with coordinates `k / steps`; calls `f` on each
/// point. Used as the brute-force infimum oracle.
pub fn simplex_grid<T: Scalar>(t: usize, steps: u64, mut f: impl FnMut(&[T])) {
    let mut point = vec![T::zero(); t];
    let inv = T::one() / T::of(steps as f64);
    fn recurse<T: Scalar>(
        rem: u64,
        idx: usize,
        inv: T,
        point: &mut Vec<T>,
        f: &mut impl FnMut(&[T]),
    ) {
        if idx == point.len() - 1 {
            point[idx] = T::of(rem as f64) * inv;
            f(point);
            return;
        }
        for v in 0..=rem {
            point[idx] = T::of(v as f64) * inv;
            recurse(rem - v, idx + 1, inv, point, f);
        }
    }
    recurse(steps, 0, inv, &mut point, &mut f);
}

/// Finite-n verification of the Sanov bounds for the region
/// `Γ = {R : d_delta(P, R) <= gamma}` under sampling from `Q`.
#[derive(Debug, Clone)]
pub struct SanovReport<T: Scalar> {
    pub n: u64,
    pub gamma: T,
    /// Exact finite-n rate `-log Prob_Q(type in Γ) / n`.
    pub rate: T,
    /// Grid infimum of `D(. || Q)` over `Γ`.
    pub i_min: T,
    /// Minimum of `D(T/n || Q)` over achievable types in `Γ`.
    pub i_type: T,
    /// Combinatorial slack `t log(n+1) / n`.
    pub slack: T,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub vacuous: bool,
}

const GRID_STEPS: u64 = 1000;

pub fn sanov_sandwich_check<T: Scalar>(
    p: &FiniteDist<T>,
    q: &FiniteDist<T>,
    gamma: T,
    n: u64,
) -> Result<SanovReport<T>> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch("P and Q alphabets differ".into()));
    }
    let t = p.len();
    let types = enumerate_types(n, t)?;
    let mut log_terms = Vec::new();
    let mut i_type = T::infinity();
    for tv in &types {
        let emp = tv.empirical::<T>();
        if delta_mmd(p.probs(), &emp) <= gamma {
            log_terms.push(type_log_prob(tv, q)?);
            i_type = i_type.min(kld_vec(&emp, q.probs()));
        }
    }
    let slack = T::of(t as f64) * T::of((n as f64) + 1.0).ln() / T::of(n as f64);
    if log_terms.is_empty() {
        return Ok(SanovReport {
            n,
            gamma,
            rate: T::infinity(),
            i_min: T::infinity(),
            i_type: T::infinity(),
            slack,
            lower_ok: true,
            upper_ok: true,
            vacuous: true,
        });
    }
    let rate = -log_sum_exp(&log_terms) / T::of(n as f64);

    let mut i_min = T::infinity();
    simplex_grid::<T>(t, GRID_STEPS, |r| {
        if delta_mmd(p.probs(), r) <= gamma {
            i_min = i_min.min(kld_vec(r, q.probs()));
        }
    });

    Ok(SanovReport {
        n,
        gamma,
        rate,
        i_min,
        i_type,
        slack,
        lower_ok: i_min - slack <= rate,
        upper_ok: rate <= i_type + slack,
        vacuous: false,
    })
}

/// Finite-n verification of the two-sequence Sanov bounds for the pair
/// region `Γ = {(R, S) : d_delta(R, S) <= gamma}` with `y^m ~ P`, `x^n ~ Q`.
#[derive(Debug, Clone)]
pub struct ExtendedSanovReport<T: Scalar> {
    pub m: u64,
    pub n: u64,
    pub gamma: T,
    pub c: T,
    /// Exact finite-n rate `-log Prob((R̂, Ŝ) in Γ) / (m + n)`.
    pub rate: T,
    /// Grid infimum of `c D(R||P) + (1-c) D(S||Q)` over `Γ`.
    pub j_min: T,
    /// Minimum over achievable type pairs in `Γ`.
    pub j_type: T,
    pub slack: T,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub vacuous: bool,
}

pub fn extended_sanov_check<T: Scalar>(
    p: &FiniteDist<T>,
    q: &FiniteDist<T>,
    gamma: T,
    m: u64,
    n: u64,
) -> Result<ExtendedSanovReport<T>> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch("P and Q alphabets differ".into()));
    }
    let t = p.len();
    let total = T::of((m + n) as f64);
    let c = T::of(m as f64) / total;
    let types_m = enumerate_types(m, t)?;
    let types_n = enumerate_types(n, t)?;
    if (types_m.len() as u128) * (types_n.len() as u128) > ENUMERATION_GUARD {
        return Err(Error::TooLarge("type-pair enumeration exceeds the guard".into()));
    }

    let log_p: Vec<T> =
        types_m.iter().map(|tv| type_log_prob(tv, p)).collect::<Result<_>>()?;
    let log_q: Vec<T> =
        types_n.iter().map(|tv| type_log_prob(tv, q)).collect::<Result<_>>()?;

    let mut log_terms = Vec::new();
    let mut j_type = T::infinity();
    for (tm, &lp) in types_m.iter().zip(log_p.iter()) {
        let emp_m = tm.empirical::<T>();
        let d_r = kld_vec(&emp_m, p.probs());
        for (tn, &lq) in types_n.iter().zip(log_q.iter()) {
            let emp_n = tn.empirical::<T>();
            if delta_mmd(&emp_m, &emp_n) <= gamma {
                log_terms.push(lp + lq);
                j_type = j_type.min(c * d_r + (T::one() - c) * kld_vec(&emp_n, q.probs()));
            }
        }
    }
    let slack = T::of(t as f64)
        * (T::of((m as f64) + 1.0).ln() + T::of((n as f64) + 1.0).ln())
        / total;
    if log_terms.is_empty() {
        return Ok(ExtendedSanovReport {
            m,
            n,
            gamma,
            c,
            rate: T::infinity(),
            j_min: T::infinity(),
            j_type: T::infinity(),
            slack,
            lower_ok: true,
            upper_ok: true,
            vacuous: true,
        });
    }
    let rate = -log_sum_exp(&log_terms) / total;
    let j_min = pair_grid_infimum(p, q, gamma, c);

    Ok(ExtendedSanovReport {
        m,
        n,
        gamma,
        c,
        rate,
        j_min,
        j_type,
        slack,
        lower_ok: j_min - slack <= rate,
        upper_ok: rate <= j_type + slack,
        vacuous: false,
    })
}

/// Grid infimum of `c D(R||P) + (1-c) D(S||Q)` over pairs with
/// `d_delta(R, S) <= gamma`. Pair grids are quadratic in the simplex grid
/// size, so the resolution drops for `t > 2`.
pub fn pair_grid_infimum<T: Scalar>(p: &FiniteDist<T>, q: &FiniteDist<T>, gamma: T, c: T) -> T {
    let t = p.len();
    let steps = if t == 2 { GRID_STEPS } else { 60 };
    let mut points: Vec<Vec<T>> = Vec::new();
    simplex_grid::<T>(t, steps, |r| points.push(r.to_vec()));
    let d_p: Vec<T> = points.iter().map(|r| kld_vec(r, p.probs())).collect();
    let d_q: Vec<T> = points.iter().map(|s| kld_vec(s, q.probs())).collect();
    let mut best = T::infinity();
    for (r, &dr) in points.iter().zip(d_p.iter()) {
        if c * dr >= best {
            continue;
        }
        for (s, &dq) in points.iter().zip(d_q.iter()) {
            let v = c * dr + (T::one() - c) * dq;
            if v < best && delta_mmd(r, s) <= gamma {
                best = v;
            }
        }
    }
    best
}
