//! Command-line front end: descriptor parsing, dispatch, CSV/SVG emission.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. The one-line
//! result summary goes to standard output; everything else (warnings,
//! diagnostics) goes to standard error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::calibration::ThresholdRule;
use crate::error::{Error, Result};
use crate::harness::{
    self, Against, ErrorCurve, ExperimentConfig, TestContext, TestData, TestKind,
};
use crate::kernels::{KernelSpec, Sample};
use crate::large_deviations::{extended_sanov_check, sanov_sandwich_check, FiniteDist};
use crate::rng::RngStream;
use crate::targets::{self, TargetModel};

#[derive(Parser, Debug)]
#[command(name = "kuht", version, about = "Kernel-based universal hypothesis testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one hypothesis test on freshly sampled data.
    Test(TestArgs),
    /// Run an experiment preset and write its CSV and SVG outputs.
    Experiment(ExperimentArgs),
    /// Compute a threshold without running a test.
    Calibrate(TestArgs),
    /// Finite-alphabet Sanov sandwich report.
    Sanov(SanovArgs),
    /// Fit an error exponent on the finite-alphabet demo.
    Exponent(ExponentArgs),
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Test kind: simple|two_sample|ksd_v|ksd_u|sup_family|lr.
    #[arg(long)]
    kind: String,
    /// Null model descriptor, e.g. gauss:mu=0,sigma2=1.
    #[arg(long)]
    model: String,
    /// Alternative model (required by the likelihood-ratio oracle).
    #[arg(long)]
    model_q: Option<String>,
    /// Model the data is sampled from (defaults to the null model).
    #[arg(long)]
    data: Option<String>,
    /// Kernel descriptor, e.g. gaussian:w=1.
    #[arg(long, default_value = "gaussian:w=1")]
    kernel: String,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Data sample size.
    #[arg(long)]
    n: usize,
    /// Model sample size for two-sample kinds (defaults to n).
    #[arg(long)]
    m: Option<usize>,
    /// Threshold rule: dfree|mc:B=500|perm:B=500|wild:B=500|min:mc:B=500.
    #[arg(long, default_value = "dfree")]
    threshold: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Preset name: gauss_vs_laplace|gauss_mixture.
    #[arg(long)]
    preset: String,
    /// Override the preset's test kind.
    #[arg(long)]
    kind: Option<String>,
    /// Override the preset's threshold rule.
    #[arg(long)]
    threshold: Option<String>,
    /// Override the preset's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory for the CSV/SVG pair.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Plot type-II error on a log scale.
    #[arg(long)]
    log_y: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SanovArgs {
    /// Null distribution, semicolon-separated, e.g. .5;.5.
    #[arg(long)]
    p: String,
    /// Data distribution, same alphabet.
    #[arg(long)]
    q: String,
    /// Acceptance radius for the delta-kernel test.
    #[arg(long)]
    gamma: f64,
    /// Comma-separated sample sizes, e.g. 20,40,60.
    #[arg(long)]
    n: String,
    /// Also run the extended (two-sample) check with this model sample size.
    #[arg(long)]
    extended_m: Option<u64>,
    /// Report path.
    #[arg(long, default_value = "sanov_report.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExponentArgs {
    /// Preset name: finite-demo.
    #[arg(long)]
    preset: String,
    /// Comma-separated sample sizes.
    #[arg(long, default_value = "20,30,40,50,60")]
    n: String,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            // Descriptor/argument problems are usage errors.
            Error::Parse(_) | Error::InvalidInput(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other),
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, A>(args: I) -> ExitCode
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successful exits.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(line) => {
            println!("{line}");
            ExitCode::from(0)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn check_alpha(alpha: f64) -> std::result::Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--alpha {alpha} must lie in (0, 1)")))
    }
}

fn dispatch(command: Command) -> std::result::Result<String, CliError> {
    match command {
        Command::Test(args) => run_single_test(args, false),
        Command::Calibrate(args) => run_single_test(args, true),
        Command::Experiment(args) => run_experiment(args),
        Command::Sanov(args) => run_sanov(args),
        Command::Exponent(args) => run_exponent(args),
    }
}

fn parse_test_setup(
    args: &TestArgs,
) -> std::result::Result<(TestKind, TestContext, Sample<f64>, Option<Sample<f64>>, RngStream), CliError>
{
    check_alpha(args.alpha)?;
    let kind = TestKind::parse(&args.kind)?;
    let model_p = TargetModel::parse(&args.model)?;
    let model_q = args.model_q.as_deref().map(TargetModel::parse).transpose()?;
    let kernel = KernelSpec::parse(&args.kernel)?;
    let rule = ThresholdRule::parse(&args.threshold)?;
    let data_model = match args.data.as_deref() {
        Some(s) => TargetModel::parse(s)?,
        None => model_p.clone(),
    };
    let base = RngStream::new(args.seed, 0);
    let x = targets::sample(&data_model, args.n, base.child(1)).map_err(CliError::from)?;
    let y = if kind.is_two_sample() {
        let m = args.m.unwrap_or(args.n);
        Some(targets::sample(&model_p, m, base.child(0)).map_err(CliError::from)?)
    } else {
        None
    };
    let ctx = TestContext { model_p, model_q, kernel, rule, alpha: args.alpha };
    Ok((kind, ctx, x, y, base.child(2)))
}

fn run_single_test(args: TestArgs, calibrate_only: bool) -> std::result::Result<String, CliError> {
    let (kind, ctx, x, y, stream) = parse_test_setup(&args)?;
    let data = match &y {
        Some(y) => TestData::Two { y, x: &x },
        None => TestData::One(&x),
    };
    let report = harness::run_test(kind, &ctx, data, stream).map_err(CliError::Runtime)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if calibrate_only {
        Ok(format!("threshold={:.6e} rule={}", report.threshold, report.rule))
    } else {
        Ok(format!(
            "decision={} statistic={:.6e} threshold={:.6e} kind={kind}",
            report.decision, report.statistic, report.threshold
        ))
    }
}

/// Default calibration rule per test kind.
pub fn default_rule_for(kind: TestKind) -> ThresholdRule {
    match kind {
        TestKind::SimpleMmd | TestKind::LrOracle => ThresholdRule::MonteCarlo { b: 500 },
        TestKind::TwoSampleMmd | TestKind::SupFamily => ThresholdRule::Permutation { b: 500 },
        TestKind::KsdV | TestKind::KsdU => ThresholdRule::Wild { b: 500 },
    }
}

fn run_experiment(args: ExperimentArgs) -> std::result::Result<String, CliError> {
    let mut config: ExperimentConfig = harness::preset(&args.preset, args.seed)?;
    if let Some(kind) = args.kind.as_deref() {
        config.kind = TestKind::parse(kind)?;
        config.rule = default_rule_for(config.kind);
    }
    if let Some(rule) = args.threshold.as_deref() {
        config.rule = ThresholdRule::parse(rule)?;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(kld) = config.kld {
        eprintln!("preset {}: D(P||Q) = {kld:.6} nats", args.preset);
    }
    let curve = harness::estimate_error_rates(&config).map_err(CliError::Runtime)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(e.into()))?;
    let stem = format!("{}_{}", args.preset, config.kind);
    let csv_path = args.out.join(format!("{stem}.csv"));
    let svg_path = args.out.join(format!("{stem}.svg"));
    write_atomic(&csv_path, &curve.to_csv())?;
    let opts = SvgOptions {
        title: format!("{} / {}", args.preset, config.kind),
        x_label: "n".into(),
        y_label: "error rate".into(),
        log_y: args.log_y,
    };
    write_atomic(&svg_path, &emit_svg(&curve, &opts)?)?;
    Ok(format!("wrote {} {}", csv_path.display(), svg_path.display()))
}

fn write_atomic(path: &Path, contents: &str) -> std::result::Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(e.into()))
}

fn parse_dist(s: &str) -> Result<FiniteDist<f64>> {
    let probs: Result<Vec<f64>> = s
        .split(';')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad probability `{v}`")))
        })
        .collect();
    FiniteDist::new(probs?)
}

fn parse_usize_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| Error::Parse(format!("bad sample size `{v}`")))
        })
        .collect()
}

fn run_sanov(args: SanovArgs) -> std::result::Result<String, CliError> {
    let p = parse_dist(&args.p)?;
    let q = parse_dist(&args.q)?;
    let ns = parse_usize_list(&args.n)?;
    if ns.is_empty() {
        return Err(CliError::Usage("--n needs at least one sample size".into()));
    }
    let mut out = String::from("kind,m,n,gamma,rate,i_lower,i_upper,slack,lower_ok,upper_ok,vacuous\n");
    let mut all_hold = true;
    for &n in &ns {
        let r = sanov_sandwich_check(&p, &q, args.gamma, n).map_err(CliError::Runtime)?;
        all_hold &= r.lower_ok && r.upper_ok;
        let _ = writeln!(
            out,
            "sanov,,{},{},{},{},{},{},{},{},{}",
            r.n,
            harness_fmt(r.gamma),
            harness_fmt(r.rate),
            harness_fmt(r.i_min),
            harness_fmt(r.i_type),
            harness_fmt(r.slack),
            r.lower_ok,
            r.upper_ok,
            r.vacuous
        );
    }
    if let Some(m) = args.extended_m {
        for &n in &ns {
            let r = extended_sanov_check(&p, &q, args.gamma, m, n).map_err(CliError::Runtime)?;
            all_hold &= r.lower_ok && r.upper_ok;
            let _ = writeln!(
                out,
                "extended,{},{},{},{},{},{},{},{},{},{}",
                r.m,
                r.n,
                harness_fmt(r.gamma),
                harness_fmt(r.rate),
                harness_fmt(r.j_min),
                harness_fmt(r.j_type),
                harness_fmt(r.slack),
                r.lower_ok,
                r.upper_ok,
                r.vacuous
            );
        }
    }
    write_atomic(&args.out, &out)?;
    Ok(format!("report={} all_hold={all_hold}", args.out.display()))
}

fn harness_fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn run_exponent(args: ExponentArgs) -> std::result::Result<String, CliError> {
    check_alpha(args.alpha)?;
    if args.preset != "finite-demo" {
        return Err(CliError::Usage(format!(
            "unknown exponent preset `{}` (expected finite-demo)",
            args.preset
        )));
    }
    let ns = parse_usize_list(&args.n)?;
    let curve = harness::finite_demo_curve(&ns, args.alpha).map_err(CliError::Runtime)?;
    let fit = harness::fit_exponent(&curve, Against::N).map_err(CliError::Runtime)?;
    if fit.dropped > 0 {
        eprintln!("dropped {} degenerate grid point(s) from the fit", fit.dropped);
    }
    Ok(format!(
        "slope={:.6} r2={:.6} reference={:.6}",
        fit.slope,
        fit.r2,
        harness::finite_demo_reference()
    ))
}

/// Rendering options for [`emit_svg`].
#[derive(Debug, Clone)]
pub struct SvgOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot log10 of the values instead (points at 0 are skipped).
    pub log_y: bool,
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

fn coord(v: f64) -> String {
    format!("{v:.6}")
}

/// Render an error curve as a self-contained SVG: one polyline per series
/// (type-I and type-II rates over n), a legend, labeled axes. The output is
/// byte-deterministic in the input.
pub fn emit_svg(curve: &ErrorCurve, opts: &SvgOptions) -> Result<String> {
    if curve.rows.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "plot needs at least 2 rows, got {}",
            curve.rows.len()
        )));
    }
    let xs: Vec<f64> = curve.rows.iter().map(|r| r.n as f64).collect();
    let series: [(&str, &str, Vec<f64>); 2] = [
        ("type1_hat", "#c0392b", curve.rows.iter().map(|r| r.type1_hat).collect()),
        ("type2_hat", "#2980b9", curve.rows.iter().map(|r| r.type2_hat).collect()),
    ];
    let transform = |v: f64| -> Option<f64> {
        if opts.log_y {
            (v > 0.0).then(|| v.log10())
        } else {
            Some(v)
        }
    };
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, _, vs) in &series {
        for &v in vs {
            if let Some(t) = transform(v) {
                ymin = ymin.min(t);
                ymax = ymax.max(t);
            }
        }
    }
    if !ymin.is_finite() {
        return Err(Error::InvalidInput("no plottable points".into()));
    }
    if !opts.log_y {
        ymin = 0.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let (xmin, xmax) = (xs[0].min(*xs.last().unwrap()), xs[0].max(*xs.last().unwrap()));
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - xmin) / xspan * plot_w;
    let py = |y: f64| MARGIN_T + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>",
        coord(MARGIN_L + plot_w / 2.0),
        xml_escape(&opts.title)
    );
    // Axes.
    let _ = writeln!(
        svg,
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>",
        l = coord(MARGIN_L),
        r = coord(MARGIN_L + plot_w),
        b = coord(MARGIN_T + plot_h)
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>",
        l = coord(MARGIN_L),
        t = coord(MARGIN_T),
        b = coord(MARGIN_T + plot_h)
    );
    // X ticks at the data points.
    for (&x, row) in xs.iter().zip(&curve.rows) {
        let _ = writeln!(
            svg,
            "<line x1=\"{x0}\" y1=\"{b}\" x2=\"{x0}\" y2=\"{b2}\" stroke=\"black\"/>\
             <text x=\"{x0}\" y=\"{ty}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{n}</text>",
            x0 = coord(px(x)),
            b = coord(MARGIN_T + plot_h),
            b2 = coord(MARGIN_T + plot_h + 5.0),
            ty = coord(MARGIN_T + plot_h + 18.0),
            n = row.n
        );
    }
    // Five y ticks.
    for i in 0..=4 {
        let v = ymin + (ymax - ymin) * (i as f64) / 4.0;
        let label = if opts.log_y { format!("1e{v:.2}") } else { format!("{v:.3}") };
        let _ = writeln!(
            svg,
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"black\"/>\
             <text x=\"{tx}\" y=\"{ty}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{label}</text>",
            x0 = coord(MARGIN_L - 5.0),
            x1 = coord(MARGIN_L),
            y = coord(py(v)),
            tx = coord(MARGIN_L - 8.0),
            ty = coord(py(v) + 4.0),
        );
    }
    // Axis labels.
    let _ = writeln!(
        svg,
        "<text x=\"{x}\" y=\"{y}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{l}</text>",
        x = coord(MARGIN_L + plot_w / 2.0),
        y = coord(SVG_H - 12.0),
        l = xml_escape(&opts.x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{y}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 {yr})\">{l}</text>",
        y = coord(MARGIN_T + plot_h / 2.0),
        yr = coord(MARGIN_T + plot_h / 2.0),
        l = xml_escape(&opts.y_label)
    );
    // Series polylines and legend.
    for (idx, (name, color, vs)) in series.iter().enumerate() {
        let mut points = String::new();
        for (&x, &v) in xs.iter().zip(vs) {
            if let Some(t) = transform(v) {
                let _ = write!(points, "{},{} ", coord(px(x)), coord(py(t)));
            }
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        );
        let ly = MARGIN_T + 14.0 + 18.0 * idx as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"1.5\"/>\
             <text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>",
            x0 = coord(SVG_W - MARGIN_R + 10.0),
            x1 = coord(SVG_W - MARGIN_R + 34.0),
            y = coord(ly),
            tx = coord(SVG_W - MARGIN_R + 40.0),
            ty = coord(ly + 4.0),
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Recover the plotted `(n, value)` pairs of each polyline from SVG text by
/// inverting the linear coordinate transform; used to cross-check the SVG
/// against its source CSV.
pub fn parse_svg_points(svg: &str, curve: &ErrorCurve) -> Result<Vec<Vec<(f64, f64)>>> {
    let xs: Vec<f64> = curve.rows.iter().map(|r| r.n as f64).collect();
    let mut ymax = f64::NEG_INFINITY;
    for r in &curve.rows {
        ymax = ymax.max(r.type1_hat).max(r.type2_hat);
    }
    let ymin = 0.0;
    let ymax = if ymax <= ymin { ymin + 1.0 } else { ymax };
    let (xmin, xmax) = (xs[0].min(*xs.last().unwrap()), xs[0].max(*xs.last().unwrap()));
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let mut out = Vec::new();
    for chunk in svg.split("<polyline").skip(1) {
        let start = chunk
            .find("points=\"")
            .ok_or_else(|| Error::Parse("polyline without points".into()))?
            + "points=\"".len();
        let end = chunk[start..]
            .find('"')
            .ok_or_else(|| Error::Parse("unterminated points attribute".into()))?;
        let mut pts = Vec::new();
        for pair in chunk[start..start + end].split_whitespace() {
            let (sx, sy) = pair
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad point `{pair}`")))?;
            let px: f64 = sx.parse().map_err(|_| Error::Parse(format!("bad x `{sx}`")))?;
            let py: f64 = sy.parse().map_err(|_| Error::Parse(format!("bad y `{sy}`")))?;
            let x = xmin + (px - MARGIN_L) / plot_w * xspan;
            let y = ymin + (1.0 - (py - MARGIN_T) / plot_h) * (ymax - ymin);
            pts.push((x, y));
        }
        out.push(pts);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::CurveRow;

    fn demo_curve() -> ErrorCurve {
        ErrorCurve {
            rows: vec![
                CurveRow {
                    n: 25,
                    m: None,
                    trials: 10,
                    type1_hat: 0.08,
                    type2_hat: 0.71,
                    mean_stat_h0: 0.0,
                    mean_stat_h1: 0.0,
                    threshold_mean: 0.1,
                },
                CurveRow {
                    n: 50,
                    m: None,
                    trials: 10,
                    type1_hat: 0.1,
                    type2_hat: 0.42,
                    mean_stat_h0: 0.0,
                    mean_stat_h1: 0.0,
                    threshold_mean: 0.07,
                },
                CurveRow {
                    n: 100,
                    m: None,
                    trials: 10,
                    type1_hat: 0.09,
                    type2_hat: 0.11,
                    mean_stat_h0: 0.0,
                    mean_stat_h1: 0.0,
                    threshold_mean: 0.05,
                },
            ],
            seed: 42,
        }
    }

    fn opts() -> SvgOptions {
        SvgOptions {
            title: "demo".into(),
            x_label: "n".into(),
            y_label: "error rate".into(),
            log_y: false,
        }
    }

    #[test]
    fn svg_structure_and_determinism() {
        let curve = demo_curve();
        let a = emit_svg(&curve, &opts()).unwrap();
        let b = emit_svg(&curve, &opts()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains("legend") || a.contains("type1_hat"));
        assert!(a.contains("type2_hat"));
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn svg_rejects_short_curves() {
        let mut curve = demo_curve();
        curve.rows.truncate(1);
        assert!(emit_svg(&curve, &opts()).is_err());
    }

    #[test]
    fn svg_points_round_trip_to_curve_values() {
        let curve = demo_curve();
        let svg = emit_svg(&curve, &opts()).unwrap();
        let series = parse_svg_points(&svg, &curve).unwrap();
        assert_eq!(series.len(), 2);
        for (pts, extract) in series.iter().zip([
            |r: &CurveRow| r.type1_hat,
            |r: &CurveRow| r.type2_hat,
        ]) {
            assert_eq!(pts.len(), curve.rows.len());
            for ((x, y), row) in pts.iter().zip(&curve.rows) {
                assert!((x - row.n as f64).abs() < 1e-3);
                assert!((y - extract(row)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn svg_log_scale_skips_zeros() {
        let mut curve = demo_curve();
        curve.rows[0].type1_hat = 0.0;
        let mut o = opts();
        o.log_y = true;
        let svg = emit_svg(&curve, &o).unwrap();
        let first_points = svg
            .split("<polyline")
            .nth(1)
            .unwrap()
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(first_points.split_whitespace().count(), 2); // zero skipped
    }

    #[test]
    fn dist_and_list_parsing() {
        let p = parse_dist(".5;.5").unwrap();
        assert_eq!(p.probs(), &[0.5, 0.5]);
        assert!(parse_dist("0.5;oops").is_err());
        assert_eq!(parse_usize_list("20,40,60").unwrap(), vec![20, 40, 60]);
        assert!(parse_usize_list("20,x").is_err());
    }

    #[test]
    fn default_rules() {
        assert_eq!(
            default_rule_for(TestKind::SimpleMmd),
            ThresholdRule::MonteCarlo { b: 500 }
        );
        assert_eq!(
            default_rule_for(TestKind::TwoSampleMmd),
            ThresholdRule::Permutation { b: 500 }
        );
        assert_eq!(default_rule_for(TestKind::KsdV), ThresholdRule::Wild { b: 500 });
    }
}
