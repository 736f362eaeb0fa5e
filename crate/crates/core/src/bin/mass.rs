use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mass_core::coherence::{
    mutual_coherence_with, overlap_probability_closed_form, overlap_probability_monte_carlo,
    prop2_success_bound, CoherenceMethod,
};
use mass_core::dft;
use mass_core::harness::pipeline::target_energy;
use mass_core::harness::{
    band_summaries, recover_trial, roc_from_energies, roc_rows, roc_sweep, run_pipeline, sample_trial, write_records_csv,
    EnergySamples, OperatingPoints, PipelineOutput, ResolvedScenario, Scenario,
};
use mass_core::harness::report::write_serialized_csv;
use mass_core::rng::{stream, Purpose};
use mass_core::sampler::{select_primes, SamplingPlan, StackedSystem};
use mass_core::{MassError, Result};

#[derive(Parser)]
#[command(name = "mass", version, about = "Multi-rate asynchronous sub-Nyquist spectrum sensing")]
struct Cli {
    /// JSON scenario file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write results into this directory instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the scenario trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Show the branch lengths and rates of a sampling plan.
    Plan(PlanArgs),
    /// Sub-Nyquist samples of one trial.
    Sample(TrialArg),
    /// Recovered spectrum of one trial.
    Recover(TrialArg),
    /// Per-trial detection records and per-band occupancy.
    Detect,
    /// ROC of the target band at the configured false-alarm targets.
    Roc(RocArgs),
    /// Coherence, plan validity and recovery bound of a plan.
    Analyze(AnalyzeArgs),
    /// Closed-form and Monte-Carlo no-overlap probability.
    Overlap(OverlapArgs),
    /// Full scenario: records, occupancy and ROC.
    Run,
}

#[derive(Args)]
struct PlanSource {
    /// Nyquist length N.
    #[arg(long)]
    n: Option<usize>,
    /// Explicit branch lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    primes: Option<Vec<usize>>,
    /// Number of branches for prime selection.
    #[arg(long)]
    v: Option<usize>,
    /// Scale factor for prime selection.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    source: PlanSource,
}

#[derive(Args)]
struct TrialArg {
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Args)]
struct RocArgs {
    /// Fixed thresholds instead of the scenario's false-alarm targets.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: PlanSource,
    /// Sparsity for the recovery bound.
    #[arg(long)]
    k: Option<usize>,
    /// Write one alias-matrix CSV per branch into this directory.
    #[arg(long)]
    alias_csv: Option<PathBuf>,
}

#[derive(Args)]
struct OverlapArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    k: usize,
}

struct Output {
    dir: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn open(&self, name: &str) -> Result<Box<dyn Write>> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let ext = match self.format {
                    Format::Csv => "csv",
                    Format::Json => "json",
                };
                let path = dir.join(format!("{name}.{ext}"));
                eprintln!("wrote {}", path.display());
                Ok(Box::new(io::BufWriter::new(fs::File::create(path)?)))
            }
            None => Ok(Box::new(io::stdout().lock())),
        }
    }

    fn rows<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = self.open(name)?;
        match self.format {
            Format::Csv => write_serialized_csv(rows, &mut w)?,
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, rows)?;
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

fn scenario(cli: &Cli) -> Result<ResolvedScenario> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| MassError::Config("this command needs --config <path>".into()))?;
    let mut s = Scenario::load(path)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(trials) = cli.trials {
        s.trials = trials;
    }
    s.resolve()
}

fn output_dir(cli: &Cli, ctx: Option<&ResolvedScenario>) -> Option<PathBuf> {
    cli.out
        .clone()
        .or_else(|| ctx.and_then(|c| c.scenario.output.dir.as_ref().map(PathBuf::from)))
}

fn run(cli: Cli) -> Result<()> {
    let plain = Output { dir: cli.out.clone(), format: cli.format };
    match &cli.command {
        Command::Plan(args) => {
            let plan = plan_from(&cli, &args.source)?;
            plan_rows(&plain, &plan)
        }
        Command::Analyze(args) => analyze(&cli, &plain, args),
        Command::Overlap(args) => overlap(&cli, &plain, args),
        Command::Sample(arg) => {
            let ctx = scenario(&cli)?;
            let out = Output { dir: output_dir(&cli, Some(&ctx)), format: cli.format };
            sample(&ctx, &out, arg.trial)
        }
        Command::Recover(arg) => {
            let ctx = scenario(&cli)?;
            let out = Output { dir: output_dir(&cli, Some(&ctx)), format: cli.format };
            recover(&ctx, &out, arg.trial)
        }
        Command::Detect => {
            let ctx = scenario(&cli)?;
            let out = Output { dir: output_dir(&cli, Some(&ctx)), format: cli.format };
            detect(&ctx, &out).map(|_| ())
        }
        Command::Roc(args) => {
            let ctx = scenario(&cli)?;
            let out = Output { dir: output_dir(&cli, Some(&ctx)), format: cli.format };
            let points = match &args.thresholds {
                Some(t) => OperatingPoints::Thresholds(t.clone()),
                None => OperatingPoints::TargetPfas(ctx.scenario.detection.roc_pfas.clone()),
            };
            let pts = roc_sweep(&ctx, &points)?;
            out.rows("roc", &roc_rows(&ctx, &pts))
        }
        Command::Run => {
            let ctx = scenario(&cli)?;
            let out = Output { dir: output_dir(&cli, Some(&ctx)), format: cli.format };
            let output = detect(&ctx, &out)?;
            if ctx.bands.is_empty() {
                return Ok(());
            }
            let band = ctx.scenario.detection.target_band;
            let energies = EnergySamples {
                h0: output.records.iter().map(|r| r.energy_h0[band]).collect(),
                h1: output.records.iter().map(|r| r.energy_h1[band]).collect(),
            };
            let pts = roc_from_energies(&energies, &OperatingPoints::TargetPfas(ctx.scenario.detection.roc_pfas.clone()))?;
            out.rows("roc", &roc_rows(&ctx, &pts))
        }
    }
}

fn plan_from(cli: &Cli, src: &PlanSource) -> Result<SamplingPlan> {
    if let Some(primes) = &src.primes {
        let n = src.n.ok_or_else(|| MassError::Config("--primes needs --n".into()))?;
        return SamplingPlan::new(n, 1.0, primes.clone());
    }
    if let (Some(n), Some(v)) = (src.n, src.v) {
        return select_primes(n, v, src.a);
    }
    if cli.config.is_some() {
        return Ok(scenario(cli)?.plan);
    }
    Err(MassError::Config("give --n with --primes or --v, or --config".into()))
}

#[derive(Serialize)]
struct BranchRow {
    branch: usize,
    m: usize,
    rate_hz: f64,
    undersampling: f64,
}

fn plan_rows(out: &Output, plan: &SamplingPlan) -> Result<()> {
    let rows: Vec<BranchRow> = plan
        .branch_lengths()
        .iter()
        .zip(plan.rates_hz())
        .zip(plan.undersampling_factors())
        .enumerate()
        .map(|(i, ((&m, rate_hz), d))| BranchRow { branch: i, m, rate_hz, undersampling: d })
        .collect();
    eprintln!(
        "N = {}, v = {}, samples = {}, sum ratio = {:.6}, mean ratio = {:.6}",
        plan.nyquist_n(),
        plan.branches(),
        plan.total_samples(),
        plan.sum_ratio(),
        plan.mean_ratio()
    );
    out.rows("plan", &rows)
}

#[derive(Serialize)]
struct AnalyzeRow {
    n: usize,
    primes: String,
    valid: bool,
    mu: f64,
    predicted_mu: f64,
    max_shared: usize,
    k: Option<usize>,
    bound: Option<f64>,
}

fn analyze(cli: &Cli, out: &Output, args: &AnalyzeArgs) -> Result<()> {
    let src = &args.source;
    let plan = match (&src.primes, src.n) {
        (Some(p), Some(n)) => SamplingPlan::unchecked(n, 1.0, p.clone())?,
        _ => plan_from(cli, src)?,
    };
    let system = StackedSystem::new(&plan, vec![0.0; plan.total_samples()])?;
    let report = mutual_coherence_with(&system, CoherenceMethod::Auto)?;
    if let Some(dir) = &args.alias_csv {
        fs::create_dir_all(dir)?;
        for (i, a) in plan.alias_matrices().iter().enumerate() {
            a.write_csv_file(&dir.join(format!("alias_{i}_m{}.csv", a.rows())))?;
        }
    }
    let row = AnalyzeRow {
        n: plan.nyquist_n(),
        primes: plan.branch_lengths().iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" "),
        valid: plan.is_valid(),
        mu: report.mu,
        predicted_mu: report.predicted_mu,
        max_shared: report.max_shared,
        k: args.k,
        bound: args.k.filter(|&k| k >= 1).map(|k| prop2_success_bound(k, &plan)),
    };
    eprintln!("mu = {} validity = {}", row.mu, row.valid);
    out.rows("analyze", &[row])
}

#[derive(Serialize)]
struct OverlapRow {
    n: usize,
    m: usize,
    k: usize,
    closed_form: f64,
    monte_carlo: f64,
    three_sigma: f64,
    trials: usize,
    within: bool,
}

fn overlap(cli: &Cli, out: &Output, args: &OverlapArgs) -> Result<()> {
    if !(args.m > 0 && args.m < args.n && args.k <= args.n) {
        return Err(MassError::Config("need 0 < m < n and k <= n".into()));
    }
    let trials = cli.trials.unwrap_or(100_000).max(1);
    let mut rng = stream(cli.seed.unwrap_or(0), Purpose::Overlap, 0, 0);
    let closed = overlap_probability_closed_form(args.k, args.n, args.m);
    let est = overlap_probability_monte_carlo(args.k, args.n, args.m, trials, &mut rng);
    let row = OverlapRow {
        n: args.n,
        m: args.m,
        k: args.k,
        closed_form: closed,
        monte_carlo: est.value,
        three_sigma: est.half_width,
        trials,
        within: est.contains(closed),
    };
    out.rows("overlap", &[row])
}

#[derive(Serialize)]
struct SampleRow {
    branch: usize,
    index: usize,
    time_s: f64,
    value: f64,
}

fn sample(ctx: &ResolvedScenario, out: &Output, trial: usize) -> Result<()> {
    let (samples, draws) = sample_trial(ctx, &ctx.signal, trial)?;
    let rates = ctx.plan.rates_hz();
    let mut rows = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        for (m, &value) in s.iter().enumerate() {
            rows.push(SampleRow { branch: i, index: m, time_s: m as f64 / rates[i] + draws.offsets_s[i], value });
        }
    }
    out.rows("samples", &rows)
}

#[derive(Serialize)]
struct SpectrumRow {
    bin: i64,
    frequency_hz: f64,
    magnitude: f64,
}

fn recover(ctx: &ResolvedScenario, out: &Output, trial: usize) -> Result<()> {
    let (rec, _) = recover_trial(ctx, &ctx.signal, trial)?;
    let t = ctx.signal.observation_s;
    eprintln!(
        "support {} of k = {}, residual {:.6e}, iterations {}, rank deficient {}",
        rec.support.len(),
        ctx.recovery.sparsity,
        rec.residual_norm,
        rec.iterations,
        rec.rank_deficient
    );
    for (l, _) in ctx.bands.iter().enumerate() {
        eprintln!("band {l} energy {:.6e}", target_energy(ctx, &rec.magnitude, l)?);
    }
    match out.format {
        Format::Csv => {
            let mut w = out.open("spectrum")?;
            rec.write_csv(&mut w, t)?;
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let n = rec.magnitude.len();
            let rows: Vec<SpectrumRow> = rec
                .magnitude
                .iter()
                .enumerate()
                .map(|(pos, &magnitude)| {
                    let bin = dft::bin_at(n, pos);
                    SpectrumRow { bin, frequency_hz: bin as f64 / t, magnitude }
                })
                .collect();
            out.rows("spectrum", &rows)
        }
    }
}

fn detect(ctx: &ResolvedScenario, out: &Output) -> Result<PipelineOutput> {
    let output = run_pipeline(ctx)?;
    match out.format {
        Format::Csv => {
            let mut w = out.open("records")?;
            write_records_csv(&output, &mut w)?;
            w.flush()?;
        }
        Format::Json => out.rows("records", &output.records)?,
    }
    out.rows("bands", &band_summaries(ctx, &output))?;
    Ok(output)
}
