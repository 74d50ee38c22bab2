//! Acceptance suite: one test per criterion, each ending with a single
//! `criterion N: PASS` line and an elapsed-time check against its budget.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use kuht::calibration::{dfree_threshold, DfreeKind, ThresholdRule};
use kuht::harness::{
    estimate_error_rates, estimate_error_rates_detailed, finite_demo_curve, finite_demo_pair,
    finite_demo_reference, fit_exponent, gauss_vs_laplace, m_rule, Against, ErrorCurve,
    ExperimentConfig, MRule, TestKind,
};
use kuht::kernels::{eval_kernel, kernel_grad_x, kernel_trace_grad_xy};
use kuht::ksd::{ksd2_ustat, stein_mean_check};
use kuht::large_deviations::{
    dstar, enumerate_types, extended_sanov_check, sanov_sandwich_check, simplex_grid,
    type_prob_sandwich,
};
use kuht::mmd::{
    mmd2_biased_model, mmd2_biased_two, mmd2_unbiased_model, mmd2_unbiased_two, population_mmd2,
};
use kuht::targets::sample;
use kuht::{FiniteDist, KernelSpec, RngStream, SteinContext, TargetModel};

fn finish(start: Instant, budget: Duration, id: u32, what: &str) {
    let elapsed = start.elapsed();
    assert!(
        elapsed < budget,
        "criterion {id} exceeded its {budget:?} budget: {elapsed:?}"
    );
    println!("criterion {id}: PASS — {what} ({elapsed:.2?})");
}

fn std_normal() -> TargetModel {
    TargetModel::gaussian_diag(vec![0.0], 1.0).unwrap()
}

/// 1. Distribution-free level guarantee for the simple MMD test.
#[test]
fn criterion_01_dfree_level_guarantee() {
    let start = Instant::now();
    let config = ExperimentConfig {
        kind: TestKind::SimpleMmd,
        model_p: std_normal(),
        model_q: std_normal(),
        kernel: KernelSpec::gaussian(1.0).unwrap(),
        rule: ThresholdRule::Dfree,
        alpha: 0.1,
        n_grid: vec![50, 200],
        m_rule: None,
        trials: 500,
        seed: 42,
        kld: None,
    };
    let curve = estimate_error_rates(&config).unwrap();
    for row in &curve.rows {
        assert!(
            row.type1_hat <= 0.1,
            "type-I rate {} at n={} exceeds the guaranteed level 0.1",
            row.type1_hat,
            row.n
        );
    }
    finish(start, Duration::from_secs(60), 1, "simple MMD dfree type-I ≤ 0.1 at n ∈ {50, 200}");
}

/// 2. Bootstrap calibration: empirical levels near alpha under H0.
#[test]
fn criterion_02_calibrated_levels() {
    let start = Instant::now();
    let base = ExperimentConfig {
        kind: TestKind::TwoSampleMmd,
        model_p: std_normal(),
        model_q: std_normal(),
        kernel: KernelSpec::gaussian(1.0).unwrap(),
        rule: ThresholdRule::Permutation { b: 200 },
        alpha: 0.1,
        n_grid: vec![100],
        m_rule: Some(MRule::Equal),
        trials: 300,
        seed: 42,
        kld: None,
    };
    let perm = estimate_error_rates(&base).unwrap();
    let wild = estimate_error_rates(&ExperimentConfig {
        kind: TestKind::KsdV,
        rule: ThresholdRule::Wild { b: 500 },
        m_rule: None,
        ..base
    })
    .unwrap();
    for (name, curve) in [("permutation two-sample MMD", &perm), ("wild-bootstrap KSD", &wild)] {
        let rate = curve.rows[0].type1_hat;
        assert!(
            (0.05..=0.16).contains(&rate),
            "{name} rejection rate {rate} outside [0.05, 0.16] at alpha = 0.1"
        );
    }
    finish(
        start,
        Duration::from_secs(300),
        2,
        "permutation and wild-bootstrap H0 rejection rates within [0.05, 0.16]",
    );
}

/// 3. Exhaustive type-probability sandwich on a 3-letter alphabet.
#[test]
fn criterion_03_sandwich_exhaustive() {
    let start = Instant::now();
    let mut rng = RngStream::new(3, 0).rng();
    let mut checked = 0usize;
    for _ in 0..20 {
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let r = FiniteDist::new(raw.iter().map(|v| v / total).collect()).unwrap();
        for m in 1..=15u64 {
            for tv in enumerate_types(m, 3).unwrap() {
                let sandwich = type_prob_sandwich(&tv, &r).unwrap();
                assert!(
                    sandwich.holds(),
                    "sandwich violated at m={m}, type {:?}, R={:?}",
                    tv.counts(),
                    r.probs()
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 10_000, "exhaustive sweep covered only {checked} types");
    finish(
        start,
        Duration::from_secs(30),
        3,
        "type-probability sandwich holds for every type, t=3, m ≤ 15, 20 random R",
    );
}

/// 4. Finite-n Sanov sandwich, plus the extended two-sample variant.
#[test]
fn criterion_04_sanov_sandwich() {
    let start = Instant::now();
    let (p, q) = finite_demo_pair();
    for n in [20u64, 40, 60] {
        let report = sanov_sandwich_check(&p, &q, 0.2, n).unwrap();
        assert!(
            report.lower_ok && report.upper_ok,
            "Sanov sandwich failed at n={n}: rate={}, bounds=[{}, {} + slack {}]",
            report.rate,
            report.i_type,
            report.i_min,
            report.slack
        );
        assert!(!report.vacuous, "Sanov bounds vacuous at n={n}");
    }
    let ext = extended_sanov_check(&p, &q, 0.2, 20, 20).unwrap();
    assert!(
        ext.lower_ok && ext.upper_ok,
        "extended Sanov sandwich failed at m=n=20: rate={}, bounds=[{}, {} + slack {}]",
        ext.rate,
        ext.j_type,
        ext.j_min,
        ext.slack
    );
    finish(
        start,
        Duration::from_secs(60),
        4,
        "Sanov sandwich holds at n ∈ {20, 40, 60} and extended variant at m=n=20",
    );
}

/// 5. Closed-form optimal exponent D* versus a simplex-grid infimum.
#[test]
fn criterion_05_dstar_closed_form() {
    let start = Instant::now();
    fn kl_vs(r: &[f64], s: &[f64]) -> f64 {
        r.iter()
            .zip(s)
            .map(|(&ri, &si)| if ri > 0.0 { ri * (ri / si).ln() } else { 0.0 })
            .sum()
    }
    let mut rng = RngStream::new(5, 0).rng();
    for rep in 0..25 {
        let t = if rep % 2 == 0 { 2 } else { 3 };
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            let raw: Vec<f64> = (0..t).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        };
        let p = draw(&mut rng);
        let q = draw(&mut rng);
        let c = rng.random_range(0.1..0.9);
        let closed = dstar(
            &FiniteDist::new(p.clone()).unwrap(),
            &FiniteDist::new(q.clone()).unwrap(),
            c,
        )
        .unwrap();
        let steps = if t == 2 { 4000 } else { 500 };
        let mut grid_min = f64::INFINITY;
        simplex_grid(t, steps, |r: &[f64]| {
            grid_min = grid_min.min(c * kl_vs(r, &p) + (1.0 - c) * kl_vs(r, &q));
        });
        assert!(
            (closed - grid_min).abs() <= 1e-3,
            "D* mismatch (t={t}, c={c}): closed {closed} vs grid {grid_min}"
        );
    }
    let (p, q) = finite_demo_pair();
    let reference = dstar(&p, &q, 0.5).unwrap();
    assert!(
        (reference - 0.111572).abs() <= 1e-3,
        "reference D* {reference} differs from 0.111572"
    );
    finish(
        start,
        Duration::from_secs(30),
        5,
        "D* matches grid infimum within 1e-3 on 25 random triples; reference 0.111572 confirmed",
    );
}

/// 6. Chernoff-Stein bound: fitted type-II exponents versus D(P || Q).
#[test]
fn criterion_06_chernoff_stein_exponents() {
    let start = Instant::now();
    let reference = finite_demo_reference();
    assert!((reference - 0.510826).abs() <= 1e-6);

    let exact = finite_demo_curve(&[20, 30, 40, 50, 60], 0.1).unwrap();
    let fit = fit_exponent(&exact, Against::N).unwrap();
    assert!(
        fit.slope > 0.0 && fit.slope <= reference + 0.02,
        "exact-curve slope {} outside (0, {}]",
        fit.slope,
        reference + 0.02
    );

    let (p, q) = finite_demo_pair();
    let lr = estimate_error_rates(&ExperimentConfig {
        kind: TestKind::LrOracle,
        model_p: TargetModel::finite(p),
        model_q: TargetModel::finite(q),
        kernel: KernelSpec::gaussian(1.0).unwrap(),
        rule: ThresholdRule::MonteCarlo { b: 500 },
        alpha: 0.1,
        n_grid: vec![6, 8, 10, 12],
        m_rule: None,
        trials: 2000,
        seed: 42,
        kld: None,
    })
    .unwrap();
    let lr_fit = fit_exponent(&lr, Against::N).unwrap();
    assert!(
        (lr_fit.slope - reference).abs() <= 0.3 * reference,
        "LR-oracle slope {} not within 30% of {reference}",
        lr_fit.slope
    );
    finish(
        start,
        Duration::from_secs(120),
        6,
        "exact-curve slope within (0, D(P||Q)+0.02]; LR-oracle slope within 30% of D(P||Q)",
    );
}

/// 7. Unbiasedness of d_u² and the biased/unbiased gap bounds.
#[test]
fn criterion_07_unbiasedness_and_gap_bounds() {
    let start = Instant::now();
    let spec = KernelSpec::gaussian(1.0).unwrap();
    let model_p = std_normal();
    let model_q = TargetModel::gaussian_diag(vec![1.0], 1.0).unwrap();
    let population = population_mmd2(&model_p, &model_q, &spec).unwrap();
    assert!((population - 0.177273).abs() <= 1e-4);

    let trials = 2000;
    let mut vals = Vec::with_capacity(trials);
    for t in 0..trials {
        let stream = RngStream::new(7, t as u64);
        let y = sample(&model_p, 50, stream.child(0)).unwrap();
        let x = sample(&model_q, 50, stream.child(1)).unwrap();
        vals.push(mmd2_unbiased_two(&spec, &y, &x).unwrap().value);
    }
    let mean = vals.iter().sum::<f64>() / trials as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
    let se = (var / trials as f64).sqrt();
    assert!(
        (mean - population).abs() <= 3.0 * se,
        "trial-averaged d_u² {mean} not within 3 SE ({se:.2e}) of {population}"
    );

    let k = spec.bound();
    let mut rng = RngStream::new(11, 0).rng();
    for i in 0..500u64 {
        let mu = rng.random_range(-2.0..2.0);
        let sigma2 = rng.random_range(0.5..3.0);
        let model = TargetModel::gaussian_diag(vec![mu], sigma2).unwrap();
        let n = rng.random_range(2..40usize);
        let m = rng.random_range(2..40usize);
        let stream = RngStream::new(13, i);
        let x = sample(&model, n, stream.child(0)).unwrap();
        let y = sample(&model, m, stream.child(1)).unwrap();
        let one_gap = (mmd2_unbiased_model(&model, &spec, &x).unwrap().value
            - mmd2_biased_model(&model, &spec, &x).unwrap().value)
            .abs();
        assert!(
            one_gap <= k / n as f64 + 1e-12,
            "one-sample gap {one_gap} exceeds K/n at n={n}"
        );
        let two_gap = (mmd2_unbiased_two(&spec, &y, &x).unwrap().value
            - mmd2_biased_two(&spec, &y, &x).unwrap().value)
            .abs();
        assert!(
            two_gap <= k / m as f64 + k / n as f64 + 1e-12,
            "two-sample gap {two_gap} exceeds K/m + K/n at m={m}, n={n}"
        );
    }
    finish(
        start,
        Duration::from_secs(120),
        7,
        "d_u² unbiased within 3 SE of closed form; gap bounds hold on 500 random instances",
    );
}

/// 8. Stein machinery: derivative identities and the mean-zero property.
#[test]
fn criterion_08_stein_checks() {
    let start = Instant::now();
    let specs = [KernelSpec::gaussian(1.0).unwrap(), KernelSpec::imq(1.0, -0.5).unwrap()];
    let h = 1e-5;
    let mut rng = RngStream::new(8, 0).rng();
    for spec in &specs {
        for d in [1usize, 2, 5] {
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let y: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let grad = kernel_grad_x(spec, &x, &y).unwrap();
                for i in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (eval_kernel(spec, &xp, &y).unwrap()
                        - eval_kernel(spec, &xm, &y).unwrap())
                        / (2.0 * h);
                    assert!(
                        (fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1e-6),
                        "grad_x mismatch ({spec}, d={d}, i={i}): fd {fd} vs {}",
                        grad[i]
                    );
                }
                let trace = kernel_trace_grad_xy(spec, &x, &y).unwrap();
                let mut fd_trace = 0.0;
                for i in 0..d {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[i] += h;
                    ym[i] -= h;
                    fd_trace += (kernel_grad_x(spec, &x, &yp).unwrap()[i]
                        - kernel_grad_x(spec, &x, &ym).unwrap()[i])
                        / (2.0 * h);
                }
                assert!(
                    (fd_trace - trace).abs() <= 1e-5 * trace.abs().max(1e-6),
                    "trace_grad_xy mismatch ({spec}, d={d}): fd {fd_trace} vs {trace}"
                );
            }
        }
    }

    let ctx = SteinContext::new(std_normal(), KernelSpec::gaussian(1.0).unwrap()).unwrap();
    for i in 0..10 {
        let y = -3.0 + 6.0 * i as f64 / 9.0;
        let value = stein_mean_check(&ctx, &[y]).unwrap();
        assert!(value.abs() <= 1e-5, "Stein mean {value} at y={y} exceeds 1e-5");
    }

    let trials = 500;
    let model = std_normal();
    let mut vals = Vec::with_capacity(trials);
    for t in 0..trials {
        let x = sample(&model, 30, RngStream::new(17, t as u64)).unwrap();
        vals.push(ksd2_ustat(&ctx, &x).unwrap());
    }
    let mean = vals.iter().sum::<f64>() / trials as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
    let se = (var / trials as f64).sqrt();
    assert!(
        mean.abs() <= 3.0 * se,
        "U-statistic H0 mean {mean} not within 3 SE ({se:.2e}) of 0"
    );
    finish(
        start,
        Duration::from_secs(60),
        8,
        "kernel derivatives match finite differences; Stein mean ≈ 0; U-stat unbiased under H0",
    );
}

fn betas(curve: &ErrorCurve) -> Vec<f64> {
    curve.rows.iter().map(|r| r.type2_hat).collect()
}

/// 9. Qualitative power-curve reproduction on the Gaussian-vs-Laplace pair.
#[test]
fn criterion_09_power_curves() {
    let start = Instant::now();
    let base = gauss_vs_laplace(42).unwrap();
    let alpha = base.alpha;
    let k = base.kernel.bound();
    let variants: [(TestKind, ThresholdRule); 3] = [
        (TestKind::SimpleMmd, ThresholdRule::MonteCarlo { b: 500 }),
        (TestKind::TwoSampleMmd, ThresholdRule::Permutation { b: 500 }),
        (TestKind::KsdV, ThresholdRule::Wild { b: 500 }),
    ];
    let mut all_betas = Vec::new();
    for (kind, rule) in variants {
        let config = ExperimentConfig { kind, rule, ..base.clone() };
        let (curve, reports) = estimate_error_rates_detailed(&config).unwrap();
        let b = betas(&curve);
        assert!(
            b[4] < b[0],
            "{kind}: type-II at n=400 ({}) not below type-II at n=25 ({})",
            b[4],
            b[0]
        );
        let (mut below, mut total) = (0usize, 0usize);
        for (j, point_reports) in reports.iter().enumerate() {
            let n = config.n_grid[j];
            let dfree = match kind {
                TestKind::SimpleMmd => {
                    dfree_threshold(DfreeKind::Simple, k, n, None, alpha).unwrap()
                }
                TestKind::TwoSampleMmd => {
                    let m = m_rule(n, MRule::Pow15).unwrap();
                    dfree_threshold(DfreeKind::Two, k, n, Some(m), alpha).unwrap()
                }
                _ => dfree_threshold(DfreeKind::Ksd, 1.0, n, None, alpha).unwrap(),
            }
            .on_squared_scale();
            for report in point_reports {
                total += 1;
                if report.threshold < dfree {
                    below += 1;
                }
            }
        }
        let frac = below as f64 / total as f64;
        assert!(
            frac >= 0.95,
            "{kind}: bootstrap threshold below dfree in only {:.1}% of trials",
            100.0 * frac
        );
        all_betas.push((kind, b));
    }

    let lr = estimate_error_rates(&ExperimentConfig {
        kind: TestKind::LrOracle,
        rule: ThresholdRule::MonteCarlo { b: 500 },
        ..base.clone()
    })
    .unwrap();
    let lr_betas = betas(&lr);
    for (kind, b) in &all_betas {
        for (i, &n) in base.n_grid.iter().enumerate() {
            assert!(
                lr_betas[i] <= b[i] + 0.05,
                "LR type-II {} exceeds {kind} type-II {} + 0.05 at n={n}",
                lr_betas[i],
                b[i]
            );
        }
    }
    finish(
        start,
        Duration::from_secs(900),
        9,
        "power grows with n, LR oracle dominates, bootstrap thresholds beat dfree ≥ 95% of trials",
    );
}

/// 10. End-to-end determinism of the experiment CLI artifacts.
#[test]
fn criterion_10_cli_determinism() {
    let start = Instant::now();
    let root = std::env::temp_dir().join(format!("kuht-acceptance-{}", std::process::id()));
    let mut artifacts: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for run in 0..2 {
        let out = root.join(format!("run{run}"));
        std::fs::create_dir_all(&out).unwrap();
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_kuht"))
            .args(["experiment", "--preset", "gauss_vs_laplace", "--seed", "42", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "experiment run {run} failed: {status}");
        artifacts.push((
            std::fs::read(out.join("gauss_vs_laplace_simple_mmd.csv")).unwrap(),
            std::fs::read(out.join("gauss_vs_laplace_simple_mmd.svg")).unwrap(),
        ));
    }
    assert!(!artifacts[0].0.is_empty() && !artifacts[0].1.is_empty());
    assert_eq!(artifacts[0].0, artifacts[1].0, "CSV bytes differ between identical runs");
    assert_eq!(artifacts[0].1, artifacts[1].1, "SVG bytes differ between identical runs");
    let _ = std::fs::remove_dir_all(&root);
    finish(start, Duration::from_secs(120), 10, "repeated preset runs emit byte-identical CSV and SVG");
}
