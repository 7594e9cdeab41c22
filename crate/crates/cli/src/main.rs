use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lss_clt::correction::{self, CorrectionOptions, LssResult, RootRule, Variant};
use lss_clt::data_gen::{self, CovarianceSpec, DataMatrix, DistributionSpec, StandardizeMode};
use lss_clt::harness::{self, ExperimentConfig, McReport, Nu4Mode, QqPair, StatisticKind};
use lss_clt::identity_test::{self, TestResult};
use lss_clt::spectra::{self, Spectrum};
use lss_clt::TestFunction;

#[derive(Parser)]
#[command(name = "lss", version, about = "Spectral statistics of (XᵀX − pI)/√(np) for p ≫ n")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic p×n data matrix as CSV (one row per variable).
    Gen(GenArgs),
    /// Test H0: Σ = I with L_n on a CSV data matrix.
    Test(TestArgs),
    /// Corrected linear spectral statistic of a data matrix or a spectrum.
    Lss(LssArgs),
    /// Empirical size of L_n under the identity.
    McSize(McArgs),
    /// Empirical power of L_n under a non-identity covariance.
    McPower(McArgs),
    /// Moments of the calibrated statistic with p = n^p_exp.
    McTable1(Table1Args),
    /// Q-Q pairs of standardized replicate values against N(0,1).
    Qq(QqArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    Ln,
    Gn,
    GnCalib,
    Qn,
}

impl From<StatArg> for StatisticKind {
    fn from(s: StatArg) -> Self {
        match s {
            StatArg::Ln => StatisticKind::Ln,
            StatArg::Gn => StatisticKind::Gn,
            StatArg::GnCalib => StatisticKind::GnCalib,
            StatArg::Qn => StatisticKind::Qn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Nu4ModeArg {
    Known,
    Estimated,
}

#[derive(Args)]
struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write results here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InputArgs {
    /// CSV data matrix, one row per variable; `-` reads stdin.
    #[arg(long, short)]
    input: PathBuf,
    /// The CSV holds one row per sample instead.
    #[arg(long)]
    transpose: bool,
    #[arg(long, default_value = "none")]
    standardize: StandardizeMode,
}

#[derive(Args)]
struct ContourArgs {
    /// Contour radius in (0,1).
    #[arg(long, default_value_t = CorrectionOptions::default().rho)]
    rho: f64,
    /// Trapezoid nodes on the contour.
    #[arg(long, default_value_t = CorrectionOptions::default().nodes)]
    nodes: usize,
    #[arg(long, default_value = "min-modulus")]
    root_rule: RootRule,
}

impl ContourArgs {
    fn options(&self, calibrated: bool) -> Result<CorrectionOptions> {
        let opts = CorrectionOptions { rho: self.rho, nodes: self.nodes, calibrated, root_rule: self.root_rule };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "normal")]
    dist: DistributionSpec,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value = "identity")]
    cov: CovarianceSpec,
    #[arg(long, env = "LSS_SEED", default_value_t = 0)]
    seed: u64,
    /// Output format; csv writes the matrix itself.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Significance levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    alpha: Vec<f64>,
    /// Fourth moment of the entries; estimated from the data when omitted.
    #[arg(long)]
    nu4: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct LssArgs {
    /// CSV data matrix, one row per variable.
    #[arg(long, short, conflicts_with = "spectrum", required_unless_present = "spectrum")]
    input: Option<PathBuf>,
    /// Eigenvalues of the normalized matrix, one per line.
    #[arg(long, requires = "p")]
    spectrum: Option<PathBuf>,
    /// Dimension behind `--spectrum`.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    transpose: bool,
    #[arg(long, default_value = "none")]
    standardize: StandardizeMode,
    /// Builtin name or poly:c0,c1,...
    #[arg(long, default_value = "xsq")]
    f: TestFunction,
    #[arg(long, default_value = "gn-calib")]
    variant: Variant,
    /// Required with `--spectrum`; estimated from the data otherwise.
    #[arg(long)]
    nu4: Option<f64>,
    #[command(flatten)]
    contour: ContourArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value = "normal")]
    dist: DistributionSpec,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, env = "LSS_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// identity, spike:NU or banded:V1,V2.
    #[arg(long, default_value = "identity")]
    cov: CovarianceSpec,
    #[arg(long, value_enum, default_value = "ln")]
    statistic: StatArg,
    #[arg(long, default_value = "xsq")]
    f: TestFunction,
    #[arg(long, value_enum, default_value = "known")]
    nu4_mode: Nu4ModeArg,
    #[command(flatten)]
    contour: ContourArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunArgs {
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Run experiments above the cost limit.
    #[arg(long)]
    force: bool,
    /// No progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct Table1Args {
    #[arg(long, default_value = "normal")]
    dist: DistributionSpec,
    #[arg(long)]
    n: usize,
    /// p is n raised to this power, rounded.
    #[arg(long)]
    p_exp: f64,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, env = "LSS_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "halfx3")]
    f: TestFunction,
    #[arg(long, default_value = "gn-calib")]
    variant: Variant,
    #[arg(long, value_enum, default_value = "known")]
    nu4_mode: Nu4ModeArg,
    #[command(flatten)]
    contour: ContourArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct QqArgs {
    #[command(flatten)]
    mc: McArgs,
    /// Number of quantile levels.
    #[arg(long, default_value_t = 99)]
    grid: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Test(a) => cmd_test(a),
        Command::Lss(a) => cmd_lss(a),
        Command::McSize(a) => cmd_mc(a, Experiment::Size),
        Command::McPower(a) => cmd_mc(a, Experiment::Power),
        Command::McTable1(a) => cmd_table1(a),
        Command::Qq(a) => cmd_qq(a),
    }
}

fn emit(output: &Option<PathBuf>, body: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn warn_all<W: std::fmt::Display>(warnings: &[W]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    if a.n == 0 || a.p == 0 {
        bail!("n and p must both be at least 1");
    }
    // builds the factor, which rejects designs that are not positive definite
    data_gen::covariance_factor(&a.cov, a.p)?;
    let raw = data_gen::sample_matrix(&a.dist, a.p, a.n, a.seed)?;
    let data = data_gen::apply_covariance(&raw, &a.cov)?;
    let body = match a.format {
        Format::Csv | Format::Text => {
            let mut buf = Vec::new();
            data_gen::write_matrix_csv(&mut buf, &data)?;
            String::from_utf8(buf)?
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Gen<'a> {
                dist: String,
                cov: String,
                seed: u64,
                p: usize,
                n: usize,
                rows: Vec<&'a [f64]>,
            }
            json(&Gen {
                dist: a.dist.to_string(),
                cov: a.cov.to_string(),
                seed: a.seed,
                p: data.p(),
                n: data.n(),
                rows: data.rows().collect(),
            })?
        }
    };
    emit(&a.output, &body)
}

fn read_data(path: &PathBuf, transpose: bool, standardize: StandardizeMode) -> Result<DataMatrix> {
    let reader: Box<dyn Read> = if path.as_os_str() == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
    };
    let mut data = data_gen::read_matrix_csv(reader).with_context(|| format!("reading {}", path.display()))?;
    if transpose {
        data = data.transpose();
    }
    if data.p() < data.n() {
        bail!(
            "the matrix has p={} variables and n={} samples, but the statistics assume p ≥ n; \
             rows must be variables (pass --transpose if the file holds one sample per row)",
            data.p(),
            data.n()
        );
    }
    if standardize != StandardizeMode::None {
        data = data_gen::standardize(&data, standardize)?;
    }
    Ok(data)
}

fn cmd_test(a: TestArgs) -> Result<()> {
    for &alpha in &a.alpha {
        identity_test::critical_values(alpha)?;
    }
    if let Some(v) = a.nu4 {
        if !v.is_finite() {
            bail!("--nu4 must be finite");
        }
    }
    let data = read_data(&a.input.input, a.input.transpose, a.input.standardize)?;
    let mut result = identity_test::l_n(&data, a.nu4)?.with_decisions(&a.alpha)?;
    result.standardization = Some(a.input.standardize);
    let body = match a.common.format {
        Format::Json => json(&result)?,
        Format::Csv => test_csv(&result),
        Format::Text => test_text(&result),
    };
    emit(&a.common.output, &body)
}

fn test_csv(r: &TestResult) -> String {
    let mut s = String::from("statistic,p_value,nu4_used,nu4_source,n,p,alpha,reject\n");
    let source = serde_json::to_value(r.nu4_source).ok().and_then(|v| v.as_str().map(str::to_owned));
    for d in &r.decisions {
        let _ = writeln!(
            s,
            "{:?},{:?},{:?},{},{},{},{:?},{}",
            r.statistic,
            r.p_value,
            r.nu4_used,
            source.as_deref().unwrap_or(""),
            r.n,
            r.p,
            d.alpha,
            d.reject
        );
    }
    s
}

fn test_text(r: &TestResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n = {}, p = {}", r.n, r.p);
    let _ = writeln!(s, "L_n = {:.6}", r.statistic);
    let _ = writeln!(s, "nu4 = {:.6} ({:?})", r.nu4_used, r.nu4_source);
    let _ = writeln!(s, "p-value = {:.6}", r.p_value);
    for d in &r.decisions {
        let verdict = if d.reject { "reject" } else { "do not reject" };
        let _ = writeln!(s, "alpha = {}: {verdict}", d.alpha);
    }
    s
}

fn read_spectrum(path: &PathBuf, p: usize) -> Result<Spectrum> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: f64 = t.parse().with_context(|| format!("{} line {}: `{t}` is not a number", path.display(), i + 1))?;
        values.push(v);
    }
    if values.is_empty() {
        bail!("{}: no eigenvalues", path.display());
    }
    if p < values.len() {
        bail!("--p {p} is smaller than the {} eigenvalues given", values.len());
    }
    Ok(Spectrum::from_values(values, p)?)
}

fn cmd_lss(a: LssArgs) -> Result<()> {
    let opts = a.contour.options(a.variant == Variant::GnCalib)?;
    if let Some(v) = a.nu4 {
        if !v.is_finite() {
            bail!("--nu4 must be finite");
        }
    }
    let (spectrum, nu4) = match (&a.input, &a.spectrum) {
        (_, Some(path)) => {
            let nu4 = a.nu4.context("--spectrum needs --nu4")?;
            (read_spectrum(path, a.p.unwrap_or_default())?, nu4)
        }
        (Some(path), None) => {
            let data = read_data(path, a.transpose, a.standardize)?;
            let nu4 = a.nu4.unwrap_or_else(|| identity_test::nu4_hat(&data));
            (spectra::eigenvalues(&spectra::normalized_gram(&data))?, nu4)
        }
        (None, None) => bail!("one of --input or --spectrum is required"),
    };
    let result = match a.variant {
        Variant::Qn => correction::qn_statistic(&spectrum, &a.f, nu4)?,
        Variant::Gn | Variant::GnCalib => correction::gn_statistic(&spectrum, &a.f, nu4, &opts)?,
    };
    warn_all(&result.warnings);
    let body = match a.common.format {
        Format::Json => json(&result)?,
        Format::Csv => lss_csv(&result),
        Format::Text => lss_text(&result),
    };
    emit(&a.common.output, &body)
}

fn lss_csv(r: &LssResult) -> String {
    let std = r.standardized.map(|v| format!("{v:?}")).unwrap_or_default();
    format!(
        "variant,function,n,p,nu4,raw_lss,correction,statistic,asymptotic_mean,asymptotic_var,standardized\n\
         {},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{std}\n",
        variant_name(r.variant),
        r.function.label(),
        r.n,
        r.p,
        r.nu4,
        r.raw_lss,
        r.correction,
        r.statistic,
        r.asymptotic_mean,
        r.asymptotic_var,
    )
}

fn lss_text(r: &LssResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} of {} (n = {}, p = {}, nu4 = {})", variant_name(r.variant), r.function, r.n, r.p, r.nu4);
    let _ = writeln!(s, "raw lss     {:.6}", r.raw_lss);
    let _ = writeln!(s, "correction  {:.6}", r.correction);
    let _ = writeln!(s, "statistic   {:.6}", r.statistic);
    let _ = writeln!(s, "limit mean  {:.6}", r.asymptotic_mean);
    let _ = writeln!(s, "limit var   {:.6}", r.asymptotic_var);
    if let Some(z) = r.standardized {
        let _ = writeln!(s, "standardized {z:.6}");
    }
    s
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Gn => "gn",
        Variant::GnCalib => "gn-calib",
        Variant::Qn => "qn",
    }
}

#[derive(Clone, Copy)]
enum Experiment {
    Size,
    Power,
    /// Whatever the config describes.
    Any,
}

fn mc_config(a: &McArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(a.dist, a.n, a.p);
    cfg.reps = a.reps;
    cfg.seed = a.seed;
    cfg.alpha = a.alpha;
    cfg.cov = a.cov;
    cfg.statistic = a.statistic.into();
    cfg.f = a.f.clone();
    cfg.nu4_mode = nu4_mode(a.nu4_mode);
    cfg.correction = a.contour.options(true)?;
    apply_run(&mut cfg, &a.run)?;
    Ok(cfg)
}

fn nu4_mode(m: Nu4ModeArg) -> Nu4Mode {
    match m {
        Nu4ModeArg::Known => Nu4Mode::Known,
        Nu4ModeArg::Estimated => Nu4Mode::Estimated,
    }
}

fn apply_run(cfg: &mut ExperimentConfig, run: &RunArgs) -> Result<()> {
    if run.workers == Some(0) {
        bail!("--workers must be at least 1");
    }
    cfg.workers = run.workers;
    cfg.force = run.force;
    cfg.validate()?;
    Ok(())
}

fn execute(cfg: &ExperimentConfig, kind: Experiment, quiet: bool) -> Result<McReport> {
    let reps = cfg.reps;
    let step = (reps / 100).max(1);
    let progress = move |k: usize| {
        if k.is_multiple_of(step) || k == reps {
            eprint!("\rreplications {k}/{reps}");
            if k == reps {
                eprintln!();
            }
        }
    };
    let progress: Option<&(dyn Fn(usize) + Sync)> = if quiet { None } else { Some(&progress) };
    let report = match kind {
        Experiment::Size => harness::run_size(cfg, progress)?,
        Experiment::Power => harness::run_power(cfg, progress)?,
        Experiment::Any => harness::run_experiment(cfg, progress)?,
    };
    if !quiet {
        eprintln!("finished in {:.1}s", report.wall_time);
    }
    Ok(report)
}

fn cmd_mc(a: McArgs, kind: Experiment) -> Result<()> {
    let cfg = mc_config(&a)?;
    let report = execute(&cfg, kind, a.run.quiet)?;
    emit(&a.common.output, &report_body(&report, a.common.format)?)
}

fn cmd_table1(a: Table1Args) -> Result<()> {
    if !(a.p_exp.is_finite() && a.p_exp > 0.0) {
        bail!("--p-exp must be positive");
    }
    let p = (a.n as f64).powf(a.p_exp).round();
    if !(p >= 1.0 && p < usize::MAX as f64) {
        bail!("n^p_exp = {p} is not a usable dimension");
    }
    let mut cfg = ExperimentConfig::new(a.dist, a.n, p as usize);
    cfg.reps = a.reps;
    cfg.seed = a.seed;
    cfg.f = a.f.clone();
    cfg.statistic = match a.variant {
        Variant::Gn => StatisticKind::Gn,
        Variant::GnCalib => StatisticKind::GnCalib,
        Variant::Qn => StatisticKind::Qn,
    };
    cfg.nu4_mode = nu4_mode(a.nu4_mode);
    cfg.correction = a.contour.options(true)?;
    apply_run(&mut cfg, &a.run)?;
    let report = execute(&cfg, Experiment::Any, a.run.quiet)?;
    emit(&a.common.output, &report_body(&report, a.common.format)?)
}

fn report_body(r: &McReport, format: Format) -> Result<String> {
    let c = &r.config;
    Ok(match format {
        Format::Json => json(r)?,
        Format::Csv => format!(
            "dist,cov,statistic,f,n,p,reps,seed,alpha,rate,mean,sd,raw_mean,raw_sd,center,scale\n\
             {},{},{},{},{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            c.dist,
            csv_field(&c.cov.to_string()),
            stat_name(c.statistic),
            c.f.label(),
            c.n,
            c.p,
            c.reps,
            c.seed,
            c.alpha,
            r.empirical_rate,
            r.sample_mean,
            r.sample_sd,
            r.raw_mean,
            r.raw_sd,
            r.center,
            r.scale,
        ),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{} with {} entries, cov {}, n = {}, p = {}, {} reps, seed {}",
                stat_name(c.statistic),
                c.dist,
                c.cov,
                c.n,
                c.p,
                c.reps,
                c.seed
            );
            let _ = writeln!(s, "rejection rate at {}: {:.3}", c.alpha, r.empirical_rate);
            let _ = writeln!(s, "standardized mean {:.4}, sd {:.4}", r.sample_mean, r.sample_sd);
            let _ = writeln!(s, "raw mean {:.4}, sd {:.4}", r.raw_mean, r.raw_sd);
            s
        }
    })
}

fn csv_field(s: &str) -> String {
    if s.contains(',') {
        format!("\"{s}\"")
    } else {
        s.to_owned()
    }
}

fn stat_name(s: StatisticKind) -> &'static str {
    match s {
        StatisticKind::Ln => "ln",
        StatisticKind::Gn => "gn",
        StatisticKind::GnCalib => "gn-calib",
        StatisticKind::Qn => "qn",
    }
}

fn cmd_qq(a: QqArgs) -> Result<()> {
    if a.grid == 0 {
        bail!("--grid must be at least 1");
    }
    let cfg = mc_config(&a.mc)?;
    let report = execute(&cfg, Experiment::Any, a.mc.run.quiet)?;
    let pairs = harness::qq_export(&report, a.grid)?;
    let body = match a.mc.common.format {
        Format::Json => json(&pairs)?,
        Format::Csv => harness::qq_csv(&pairs),
        Format::Text => qq_text(&pairs),
    };
    emit(&a.mc.common.output, &body)
}

fn qq_text(pairs: &[QqPair]) -> String {
    let mut s = String::from("theoretical  empirical\n");
    for q in pairs {
        let _ = writeln!(s, "{:>11.4}  {:>9.4}", q.theoretical, q.empirical);
    }
    s
}
