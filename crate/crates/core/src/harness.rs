//! Test runners, repeated-trial error estimation, exponent fitting, the
//! likelihood-ratio oracle, and the toy-experiment presets.
//!
//! Everything here is a pure function of `(config, master seed)`: each
//! (trial, grid index, hypothesis) triple owns a hashed RNG stream, trials
//! run in parallel, and aggregation happens after an ordered collect so the
//! schedule cannot change any output bit. The environment variable
//! `KUHT_THREADS` caps the worker count (unset or 0 = automatic).

use rayon::prelude::*;

use crate::calibration::{
    self, DfreeKind, DfreeThreshold, ModelStatistic, ThresholdRule, TwoSampleStatistic,
};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Sample};
use crate::ksd::{self, SteinContext};
use crate::large_deviations::{exact_error_probs, FiniteDist};
use crate::mmd;
use crate::rng::{splitmix64, RngStream};
use crate::targets::{self, TargetModel};

/// Which test statistic the runner computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    SimpleMmd,
    TwoSampleMmd,
    KsdV,
    KsdU,
    SupFamily,
    LrOracle,
}

impl TestKind {
    pub fn is_two_sample(self) -> bool {
        matches!(self, TestKind::TwoSampleMmd | TestKind::SupFamily)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "simple" | "simple_mmd" => Ok(TestKind::SimpleMmd),
            "two_sample" | "two_sample_mmd" => Ok(TestKind::TwoSampleMmd),
            "ksd_v" => Ok(TestKind::KsdV),
            "ksd_u" => Ok(TestKind::KsdU),
            "sup_family" => Ok(TestKind::SupFamily),
            "lr" | "lr_oracle" => Ok(TestKind::LrOracle),
            other => Err(Error::Parse(format!("unknown test kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            TestKind::SimpleMmd => "simple_mmd",
            TestKind::TwoSampleMmd => "two_sample_mmd",
            TestKind::KsdV => "ksd_v",
            TestKind::KsdU => "ksd_u",
            TestKind::SupFamily => "sup_family",
            TestKind::LrOracle => "lr_oracle",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    AcceptH0,
    RejectH0,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::AcceptH0 => "accept_H0",
            Decision::RejectH0 => "reject_H0",
        })
    }
}

/// Model/kernel/threshold configuration shared by every trial of a test.
#[derive(Debug, Clone)]
pub struct TestContext {
    /// The null model `P`.
    pub model_p: TargetModel<f64>,
    /// The alternative `Q`; required by the likelihood-ratio oracle.
    pub model_q: Option<TargetModel<f64>>,
    pub kernel: KernelSpec<f64>,
    pub rule: ThresholdRule,
    pub alpha: f64,
}

/// Data for one test run: one sample against the model, or a pair.
#[derive(Debug, Clone, Copy)]
pub enum TestData<'a> {
    One(&'a Sample<f64>),
    Two { y: &'a Sample<f64>, x: &'a Sample<f64> },
}

/// Outcome of a single test run. `decision` is the raw comparison
/// `statistic > threshold`, with no clamping at the decision layer.
#[derive(Debug, Clone)]
pub struct TestReport {
    pub statistic: f64,
    pub threshold: f64,
    pub rule: ThresholdRule,
    pub decision: Decision,
    pub warnings: Vec<String>,
    /// `(master seed, stream id)` of the threshold RNG stream.
    pub seeds: (u64, u64),
}

fn one_sample<'a>(kind: TestKind, data: TestData<'a>) -> Result<&'a Sample<f64>> {
    match data {
        TestData::One(x) => Ok(x),
        TestData::Two { .. } => Err(Error::InvalidInput(format!(
            "{kind} takes a single sample"
        ))),
    }
}

fn two_samples<'a>(
    kind: TestKind,
    data: TestData<'a>,
) -> Result<(&'a Sample<f64>, &'a Sample<f64>)> {
    match data {
        TestData::Two { y, x } => Ok((y, x)),
        TestData::One(_) => Err(Error::InvalidInput(format!(
            "{kind} takes a pair of samples"
        ))),
    }
}

fn lr_statistic(ctx: &TestContext) -> Result<ModelStatistic<f64>> {
    let q = ctx.model_q.clone().ok_or_else(|| {
        Error::InvalidInput("likelihood-ratio oracle needs the alternative model".into())
    })?;
    Ok(ModelStatistic::Lr(q))
}

fn compute_statistic(
    kind: TestKind,
    ctx: &TestContext,
    data: TestData<'_>,
) -> Result<(f64, Vec<String>)> {
    let mut warnings = Vec::new();
    if matches!(kind, TestKind::KsdV | TestKind::KsdU) {
        let x = one_sample(kind, data)?;
        if ksd::weak_convergence_condition(&ctx.kernel, x.d()).is_none() {
            warnings.push(format!(
                "no weak-convergence guarantee for kernel {} in dimension {}",
                ctx.kernel,
                x.d()
            ));
        }
    }
    let value = match kind {
        TestKind::SimpleMmd => {
            mmd::mmd2_biased_model(&ctx.model_p, &ctx.kernel, one_sample(kind, data)?)?.value
        }
        TestKind::TwoSampleMmd => {
            let (y, x) = two_samples(kind, data)?;
            mmd::mmd2_biased_two(&ctx.kernel, y, x)?.value
        }
        TestKind::KsdV | TestKind::KsdU => {
            let x = one_sample(kind, data)?;
            let sctx = SteinContext::new(ctx.model_p.clone(), ctx.kernel.clone())?;
            if sctx.is_experimental() {
                warnings.push("score is not differentiable everywhere; KSD is heuristic here".into());
            }
            match kind {
                TestKind::KsdV => ksd::ksd2_vstat(&sctx, x)?,
                _ => ksd::ksd2_ustat(&sctx, x)?,
            }
        }
        TestKind::SupFamily => {
            let (y, x) = two_samples(kind, data)?;
            mmd::sup_family(&ctx.kernel, y, x)?
        }
        TestKind::LrOracle => calibration::eval_model_statistic(
            &ctx.model_p,
            &ctx.kernel,
            &lr_statistic(ctx)?,
            one_sample(kind, data)?,
        )?,
    };
    Ok((value, warnings))
}

// Stein-kernel diagonal bound H_p = max_i h_p(x_i, x_i) for the U-statistic
// threshold adjustment.
fn stein_diag_bound(ctx: &TestContext, x: &Sample<f64>) -> Result<f64> {
    let sctx = SteinContext::new(ctx.model_p.clone(), ctx.kernel.clone())?;
    let mut best = f64::NEG_INFINITY;
    for row in x.rows() {
        best = best.max(ksd::stein_kernel(&sctx, row, row)?);
    }
    Ok(best)
}

// Distribution-free threshold for a kind, delivered on the statistic's own
// scale (squared for the squared statistics, unsquared for sup_family).
fn dfree_for_kind(kind: TestKind, ctx: &TestContext, data: TestData<'_>) -> Result<f64> {
    let k = ctx.kernel.bound();
    let value = match kind {
        TestKind::SimpleMmd => {
            let x = one_sample(kind, data)?;
            dfree_scaled(DfreeKind::Simple, k, x.n(), None, ctx.alpha)?
        }
        TestKind::TwoSampleMmd => {
            let (y, x) = two_samples(kind, data)?;
            dfree_scaled(DfreeKind::Two, k, x.n(), Some(y.n()), ctx.alpha)?
        }
        TestKind::KsdV => {
            let x = one_sample(kind, data)?;
            dfree_scaled(DfreeKind::Ksd, 1.0, x.n(), None, ctx.alpha)?
        }
        TestKind::KsdU => {
            let x = one_sample(kind, data)?;
            let h_p = stein_diag_bound(ctx, x)?;
            dfree_scaled(DfreeKind::KsdUnbiased { h_p }, 1.0, x.n(), None, ctx.alpha)?
        }
        TestKind::SupFamily => {
            let (y, x) = two_samples(kind, data)?;
            // Unsquared statistic pairs with the unsquared tight threshold.
            calibration::dfree_threshold(DfreeKind::TwoTight, k, x.n(), Some(y.n()), ctx.alpha)?
                .value
        }
        TestKind::LrOracle => {
            return Err(Error::InvalidInput(
                "no distribution-free threshold for the likelihood ratio".into(),
            ))
        }
    };
    Ok(value)
}

fn dfree_scaled(
    kind: DfreeKind<f64>,
    k: f64,
    n: usize,
    m: Option<usize>,
    alpha: f64,
) -> Result<f64> {
    let t: DfreeThreshold<f64> = calibration::dfree_threshold(kind, k, n, m, alpha)?;
    Ok(t.on_squared_scale())
}

fn model_statistic_for(kind: TestKind, ctx: &TestContext) -> Result<ModelStatistic<f64>> {
    match kind {
        TestKind::SimpleMmd => Ok(ModelStatistic::MmdBiasedModel),
        TestKind::KsdV => Ok(ModelStatistic::KsdVstat),
        TestKind::KsdU => Ok(ModelStatistic::KsdUstat),
        TestKind::LrOracle => lr_statistic(ctx),
        other => Err(Error::InvalidInput(format!(
            "Monte Carlo calibration applies to simple tests, not {other}"
        ))),
    }
}

fn two_sample_statistic_for(kind: TestKind) -> Result<TwoSampleStatistic> {
    match kind {
        TestKind::TwoSampleMmd => Ok(TwoSampleStatistic::MmdBiasedTwo),
        TestKind::SupFamily => Ok(TwoSampleStatistic::SupFamily),
        other => Err(Error::InvalidInput(format!(
            "permutation calibration applies to two-sample tests, not {other}"
        ))),
    }
}

// Data-driven or closed-form threshold for one run. `hoisted` short-circuits
// the Monte-Carlo leg when the caller has already computed it for this
// sample size (it depends on the model and n only, never on the data).
fn compute_threshold(
    kind: TestKind,
    ctx: &TestContext,
    rule: &ThresholdRule,
    data: TestData<'_>,
    stream: RngStream,
    hoisted: Option<f64>,
) -> Result<f64> {
    match rule {
        ThresholdRule::Dfree => dfree_for_kind(kind, ctx, data),
        ThresholdRule::MonteCarlo { b } => {
            if let Some(v) = hoisted {
                return Ok(v);
            }
            let x = one_sample(kind, data)?;
            calibration::mc_threshold(
                &ctx.model_p,
                &ctx.kernel,
                &model_statistic_for(kind, ctx)?,
                x.n(),
                ctx.alpha,
                *b,
                stream,
            )
        }
        ThresholdRule::Permutation { b } => {
            let (y, x) = two_samples(kind, data)?;
            calibration::permutation_threshold(
                &ctx.kernel,
                y,
                x,
                two_sample_statistic_for(kind)?,
                ctx.alpha,
                *b,
                stream,
            )
        }
        ThresholdRule::Wild { b } => {
            let statistic = match kind {
                TestKind::KsdV => ModelStatistic::KsdVstat,
                TestKind::KsdU => ModelStatistic::KsdUstat,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "wild bootstrap applies to KSD tests, not {other}"
                    )))
                }
            };
            let x = one_sample(kind, data)?;
            let sctx = SteinContext::new(ctx.model_p.clone(), ctx.kernel.clone())?;
            calibration::wild_threshold(&sctx, x, &statistic, ctx.alpha, *b, stream)
        }
        ThresholdRule::MinCombo { inner } => {
            let data_driven = compute_threshold(kind, ctx, inner, data, stream, hoisted)?;
            Ok(calibration::combine_min(data_driven, dfree_for_kind(kind, ctx, data)?))
        }
    }
}

/// Run one test: statistic, threshold per the context's rule, decision.
/// `stream` feeds only the threshold's randomness (if any).
pub fn run_test(
    kind: TestKind,
    ctx: &TestContext,
    data: TestData<'_>,
    stream: RngStream,
) -> Result<TestReport> {
    let (statistic, warnings) = compute_statistic(kind, ctx, data)?;
    let threshold = compute_threshold(kind, ctx, &ctx.rule, data, stream, None)?;
    Ok(TestReport {
        statistic,
        threshold,
        rule: ctx.rule.clone(),
        decision: if statistic > threshold { Decision::RejectH0 } else { Decision::AcceptH0 },
        warnings,
        seeds: (stream.master_seed, stream.stream_id),
    })
}

/// Likelihood-ratio oracle test: statistic `(1/n) Σ log(q(x_i)/p(x_i))`
/// against the Monte Carlo `(1-alpha)` quantile of the same statistic under
/// `P`.
pub fn lr_oracle(
    model_p: &TargetModel<f64>,
    model_q: &TargetModel<f64>,
    x: &Sample<f64>,
    alpha: f64,
    b: usize,
    stream: RngStream,
) -> Result<TestReport> {
    let ctx = TestContext {
        model_p: model_p.clone(),
        model_q: Some(model_q.clone()),
        // The kernel is unused by the likelihood ratio; any valid spec works.
        kernel: KernelSpec::gaussian(1.0)?,
        rule: ThresholdRule::MonteCarlo { b },
        alpha,
    };
    run_test(TestKind::LrOracle, &ctx, TestData::One(x), stream)
}

/// Rule for the model-sample size of two-sample tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MRule {
    /// `m = ⌈n^1.5⌉`.
    Pow15,
    /// `m = n`.
    Equal,
    /// `m = ⌈n c/(1-c)⌉`, targeting a sample fraction `m/(m+n) → c`.
    Ratio { c: f64 },
}

pub fn m_rule(n: usize, rule: MRule) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    match rule {
        // n^1.5 via sqrt(n^3): exact for perfect squares, no powf round-off.
        MRule::Pow15 => Ok(((n as u128).pow(3) as f64).sqrt().ceil() as usize),
        MRule::Equal => Ok(n),
        MRule::Ratio { c } => {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::InvalidInput(format!("ratio c={c} must lie in (0,1)")));
            }
            Ok((n as f64 * c / (1.0 - c)).ceil() as usize)
        }
    }
}

/// One grid point of an empirical error curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub n: usize,
    pub m: Option<usize>,
    pub trials: usize,
    pub type1_hat: f64,
    pub type2_hat: f64,
    pub mean_stat_h0: f64,
    pub mean_stat_h1: f64,
    pub threshold_mean: f64,
}

/// Empirical error curve across a sample-size grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub rows: Vec<CurveRow>,
    pub seed: u64,
}

pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl ErrorCurve {
    /// CSV with the fixed header, LF line endings, and 17-significant-digit
    /// floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,m,trials,type1_hat,type2_hat,mean_stat_h0,mean_stat_h1,threshold_mean,seed\n",
        );
        for row in &self.rows {
            let m = row.m.map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.n,
                m,
                row.trials,
                fmt_float(row.type1_hat),
                fmt_float(row.type2_hat),
                fmt_float(row.mean_stat_h0),
                fmt_float(row.mean_stat_h1),
                fmt_float(row.threshold_mean),
                self.seed,
            ));
        }
        out
    }
}

/// Full experiment description; every output is a pure function of this.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: TestKind,
    pub model_p: TargetModel<f64>,
    pub model_q: TargetModel<f64>,
    pub kernel: KernelSpec<f64>,
    pub rule: ThresholdRule,
    pub alpha: f64,
    pub n_grid: Vec<usize>,
    /// Model-sample size rule for two-sample kinds.
    pub m_rule: Option<MRule>,
    pub trials: usize,
    pub seed: u64,
    /// `D(P ‖ Q)` attached by presets for reporting.
    pub kld: Option<f64>,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::InvalidInput("empty sample-size grid".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha={} must lie in (0,1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

// Stream id for (trial, grid index, hypothesis); the sentinel trial
// u64::MAX names the per-size hoisted-threshold stream.
fn stream_id(trial: u64, size_index: u64, hypothesis: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(trial).wrapping_add(size_index)).wrapping_add(hypothesis))
}

/// Run `f` on a worker pool capped by `KUHT_THREADS` (unset/0 = default).
pub fn with_thread_cap<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let cap = std::env::var("KUHT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0);
    match cap.and_then(|t| rayon::ThreadPoolBuilder::new().num_threads(t).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Estimate error rates over the grid; also returns every per-trial report
/// (per grid point, trial-major: `[h0_0, h1_0, h0_1, h1_1, ..]`).
pub fn estimate_error_rates_detailed(
    config: &ExperimentConfig,
) -> Result<(ErrorCurve, Vec<Vec<TestReport>>)> {
    config.validate()?;
    let ctx = TestContext {
        model_p: config.model_p.clone(),
        model_q: Some(config.model_q.clone()),
        kernel: config.kernel.clone(),
        rule: config.rule.clone(),
        alpha: config.alpha,
    };
    let mut rows = Vec::with_capacity(config.n_grid.len());
    let mut all_reports = Vec::with_capacity(config.n_grid.len());
    with_thread_cap(|| -> Result<()> {
        for (j, &n) in config.n_grid.iter().enumerate() {
            let m = match (config.kind.is_two_sample(), config.m_rule) {
                (true, Some(rule)) => Some(m_rule(n, rule)?),
                (true, None) => Some(n),
                (false, _) => None,
            };
            // The Monte-Carlo leg of the rule depends only on (model, n),
            // so compute it once per grid point.
            let hoisted = hoisted_mc(&ctx, config, j, n)?;
            let trial_reports: Vec<Result<(TestReport, TestReport)>> = (0..config.trials)
                .into_par_iter()
                .map(|trial| {
                    let h0 = run_trial(config, &ctx, trial as u64, j as u64, 0, n, m, hoisted)?;
                    let h1 = run_trial(config, &ctx, trial as u64, j as u64, 1, n, m, hoisted)?;
                    Ok((h0, h1))
                })
                .collect();
            let mut reports = Vec::with_capacity(2 * config.trials);
            let (mut rej0, mut acc1) = (0usize, 0usize);
            let (mut s0, mut s1, mut thr) = (0.0f64, 0.0, 0.0);
            for r in trial_reports {
                let (h0, h1) = r?;
                if h0.decision == Decision::RejectH0 {
                    rej0 += 1;
                }
                if h1.decision == Decision::AcceptH0 {
                    acc1 += 1;
                }
                s0 += h0.statistic;
                s1 += h1.statistic;
                thr += h0.threshold + h1.threshold;
                reports.push(h0);
                reports.push(h1);
            }
            let t = config.trials as f64;
            rows.push(CurveRow {
                n,
                m,
                trials: config.trials,
                type1_hat: rej0 as f64 / t,
                type2_hat: acc1 as f64 / t,
                mean_stat_h0: s0 / t,
                mean_stat_h1: s1 / t,
                threshold_mean: thr / (2.0 * t),
            });
            all_reports.push(reports);
        }
        Ok(())
    })?;
    Ok((ErrorCurve { rows, seed: config.seed }, all_reports))
}

/// Estimate error rates over the grid (see the detailed variant).
pub fn estimate_error_rates(config: &ExperimentConfig) -> Result<ErrorCurve> {
    estimate_error_rates_detailed(config).map(|(curve, _)| curve)
}

fn hoisted_mc(
    ctx: &TestContext,
    config: &ExperimentConfig,
    j: usize,
    n: usize,
) -> Result<Option<f64>> {
    let mc_b = match &config.rule {
        ThresholdRule::MonteCarlo { b } => Some(*b),
        ThresholdRule::MinCombo { inner } => match inner.as_ref() {
            ThresholdRule::MonteCarlo { b } => Some(*b),
            _ => None,
        },
        _ => None,
    };
    let Some(b) = mc_b else { return Ok(None) };
    let stream = RngStream::new(config.seed, stream_id(u64::MAX, j as u64, 2));
    calibration::mc_threshold(
        &ctx.model_p,
        &ctx.kernel,
        &model_statistic_for(config.kind, ctx)?,
        n,
        ctx.alpha,
        b,
        stream,
    )
    .map(Some)
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    config: &ExperimentConfig,
    ctx: &TestContext,
    trial: u64,
    j: u64,
    hypothesis: u64,
    n: usize,
    m: Option<usize>,
    hoisted: Option<f64>,
) -> Result<TestReport> {
    let base = RngStream::new(config.seed, stream_id(trial, j, hypothesis));
    let data_model = if hypothesis == 0 { &config.model_p } else { &config.model_q };
    let x = targets::sample(data_model, n, base.child(1))?;
    let thr_stream = base.child(2);
    if config.kind.is_two_sample() {
        let y = targets::sample(&config.model_p, m.unwrap(), base.child(0))?;
        let data = TestData::Two { y: &y, x: &x };
        // Permutation rules share one pooled kernel pass between the
        // observed statistic and the bootstrap replicates.
        let perm_b = match &ctx.rule {
            ThresholdRule::Permutation { b } => Some(*b),
            ThresholdRule::MinCombo { inner } => match inner.as_ref() {
                ThresholdRule::Permutation { b } => Some(*b),
                _ => None,
            },
            _ => None,
        };
        if let Some(b) = perm_b {
            let (statistic, mut threshold) = calibration::permutation_threshold_and_statistic(
                &ctx.kernel,
                &y,
                &x,
                two_sample_statistic_for(config.kind)?,
                ctx.alpha,
                b,
                thr_stream,
            )?;
            if matches!(&ctx.rule, ThresholdRule::MinCombo { .. }) {
                threshold =
                    calibration::combine_min(threshold, dfree_for_kind(config.kind, ctx, data)?);
            }
            return Ok(report(statistic, threshold, ctx, Vec::new(), thr_stream));
        }
        let (statistic, warnings) = compute_statistic(config.kind, ctx, data)?;
        let threshold =
            compute_threshold(config.kind, ctx, &ctx.rule, data, thr_stream, hoisted)?;
        Ok(report(statistic, threshold, ctx, warnings, thr_stream))
    } else {
        let data = TestData::One(&x);
        // Wild rules share one Stein-kernel matrix between the observed
        // statistic and the bootstrap replicates.
        let wild_b = match &ctx.rule {
            ThresholdRule::Wild { b } => Some(*b),
            ThresholdRule::MinCombo { inner } => match inner.as_ref() {
                ThresholdRule::Wild { b } => Some(*b),
                _ => None,
            },
            _ => None,
        };
        let wild_b = wild_b.filter(|_| matches!(config.kind, TestKind::KsdV | TestKind::KsdU));
        if let Some(b) = wild_b {
            let mut warnings = Vec::new();
            if ksd::weak_convergence_condition(&ctx.kernel, x.d()).is_none() {
                warnings.push(format!(
                    "no weak-convergence guarantee for kernel {} in dimension {}",
                    ctx.kernel,
                    x.d()
                ));
            }
            let sctx = SteinContext::new(ctx.model_p.clone(), ctx.kernel.clone())?;
            if sctx.is_experimental() {
                warnings.push("score is not differentiable everywhere; KSD is heuristic here".into());
            }
            let statistic_kind = match config.kind {
                TestKind::KsdV => ModelStatistic::KsdVstat,
                _ => ModelStatistic::KsdUstat,
            };
            let (statistic, mut threshold) = calibration::wild_threshold_and_statistic(
                &sctx,
                &x,
                &statistic_kind,
                ctx.alpha,
                b,
                thr_stream,
            )?;
            if matches!(&ctx.rule, ThresholdRule::MinCombo { .. }) {
                threshold =
                    calibration::combine_min(threshold, dfree_for_kind(config.kind, ctx, data)?);
            }
            return Ok(report(statistic, threshold, ctx, warnings, thr_stream));
        }
        let (statistic, warnings) = compute_statistic(config.kind, ctx, data)?;
        let threshold =
            compute_threshold(config.kind, ctx, &ctx.rule, data, thr_stream, hoisted)?;
        Ok(report(statistic, threshold, ctx, warnings, thr_stream))
    }
}

fn report(
    statistic: f64,
    threshold: f64,
    ctx: &TestContext,
    warnings: Vec<String>,
    stream: RngStream,
) -> TestReport {
    TestReport {
        statistic,
        threshold,
        rule: ctx.rule.clone(),
        decision: if statistic > threshold { Decision::RejectH0 } else { Decision::AcceptH0 },
        warnings,
        seeds: (stream.master_seed, stream.stream_id),
    }
}

/// Size variable for exponent fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Against {
    N,
    MPlusN,
}

/// Least-squares fit of `-log(type2_hat)` against the size variable.
#[derive(Debug, Clone, Copy)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Rows dropped because `type2_hat` was exactly 0 or 1.
    pub dropped: usize,
}

pub fn fit_exponent(curve: &ErrorCurve, against: Against) -> Result<ExponentFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0usize;
    for row in &curve.rows {
        if !(row.type2_hat > 0.0 && row.type2_hat < 1.0) {
            dropped += 1;
            continue;
        }
        let x = match against {
            Against::N => row.n as f64,
            Against::MPlusN => {
                let m = row.m.ok_or_else(|| {
                    Error::InvalidInput("fitting against m+n needs m in every row".into())
                })?;
                (row.n + m) as f64
            }
        };
        xs.push(x);
        ys.push(-row.type2_hat.ln());
    }
    if xs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "exponent fit needs >= 3 usable rows, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("degenerate size grid".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ExponentFit { slope, intercept: my - slope * mx, r2, dropped })
}

/// The Gaussian-vs-Laplace toy experiment: `P = N(0, 8)`, `Q = Laplace(0, 2)`
/// (equal means and variances), Gaussian kernel `w = 1`, level 0.1.
pub fn gauss_vs_laplace(seed: u64) -> Result<ExperimentConfig> {
    let model_p = TargetModel::gaussian_diag(vec![0.0], 8.0)?;
    let model_q = TargetModel::laplace(0.0, 2.0)?;
    let kld = targets::kld(&model_p, &model_q)?;
    Ok(ExperimentConfig {
        kind: TestKind::SimpleMmd,
        model_p,
        model_q,
        kernel: KernelSpec::gaussian(1.0)?,
        rule: ThresholdRule::MonteCarlo { b: 500 },
        alpha: 0.1,
        n_grid: vec![25, 50, 100, 200, 400],
        m_rule: Some(MRule::Pow15),
        trials: 500,
        seed,
        kld: Some(kld),
    })
}

/// The Gaussian-mixture toy experiment: `Q` is a 5-component mixture with
/// means drawn from Uniform[0, 10], shared weight 1/5 and variance 1; `P`
/// is `Q` with independent `scale * N(0,1)` perturbations added to each
/// mean. Both draws are seeded, so the preset is deterministic.
pub fn gauss_mixture(seed: u64, perturbation_scale: f64) -> Result<ExperimentConfig> {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = RngStream::new(seed, stream_id(u64::MAX, 0, 3)).rng();
    let q_means: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random_range(0.0..10.0)]).collect();
    let p_means: Vec<Vec<f64>> = q_means
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(&mut rng);
            vec![m[0] + perturbation_scale * z]
        })
        .collect();
    let weights = vec![0.2; 5];
    let model_p = TargetModel::gaussian_mixture(weights.clone(), p_means, 1.0)?;
    let model_q = TargetModel::gaussian_mixture(weights, q_means, 1.0)?;
    Ok(ExperimentConfig {
        kind: TestKind::SimpleMmd,
        model_p,
        model_q,
        kernel: KernelSpec::gaussian(1.0)?,
        rule: ThresholdRule::MonteCarlo { b: 500 },
        alpha: 0.1,
        n_grid: vec![25, 50, 100, 200],
        m_rule: Some(MRule::Pow15),
        trials: 500,
        seed,
        kld: None,
    })
}

/// Named presets for the CLI.
pub fn preset(name: &str, seed: u64) -> Result<ExperimentConfig> {
    match name {
        "gauss_vs_laplace" => gauss_vs_laplace(seed),
        "gauss_mixture" => gauss_mixture(seed, 1.0),
        other => Err(Error::InvalidInput(format!("unknown preset `{other}`"))),
    }
}

/// The finite-alphabet demo pair `P = (0.5, 0.5)`, `Q = (0.9, 0.1)`.
pub fn finite_demo_pair() -> (FiniteDist<f64>, FiniteDist<f64>) {
    (
        FiniteDist::new(vec![0.5, 0.5]).unwrap(),
        FiniteDist::new(vec![0.9, 0.1]).unwrap(),
    )
}

/// `D(P ‖ Q)` for the demo pair (the Chernoff-Stein exponent reference).
pub fn finite_demo_reference() -> f64 {
    let (p, q) = finite_demo_pair();
    p.kld(&q).unwrap()
}

/// Exact error curve of the delta-kernel simple test on the demo pair with
/// the distribution-free threshold. `trials` is 1 and the statistic means
/// are 0 in each row: the probabilities are analytic, not simulated;
/// `threshold_mean` records the threshold itself.
pub fn finite_demo_curve(n_grid: &[u64], alpha: f64) -> Result<ErrorCurve> {
    let (p, q) = finite_demo_pair();
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let gamma = calibration::dfree_threshold(
            DfreeKind::<f64>::Simple,
            1.0,
            n as usize,
            None,
            alpha,
        )?
        .value;
        let (t1, t2) = exact_error_probs(&p, &q, gamma, n)?;
        rows.push(CurveRow {
            n: n as usize,
            m: None,
            trials: 1,
            type1_hat: t1,
            type2_hat: t2,
            mean_stat_h0: 0.0,
            mean_stat_h1: 0.0,
            threshold_mean: gamma,
        });
    }
    Ok(ErrorCurve { rows, seed: 0 })
}
