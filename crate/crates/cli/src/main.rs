//! `fedkd`: run distillation experiments between KRR agents.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use fedkd_core::datagen::{gen_linear_regression, SyntheticRegressionSpec};
use fedkd_core::harness::{
    emit_csv, emit_plots, expand_sweep, point_dir_name, prepare_data, read_metrics_csv, run_experiment, run_sweep,
    LoadedConfig, RunRecord,
};
use fedkd_core::protocols::equivalence_suite;
use fedkd_core::{Error, Result};

#[derive(Parser)]
#[command(name = "fedkd", version, about = "Knowledge distillation between kernel ridge regression agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset CSV, plus the train/test and per-agent parts when a config is given.
    GenData(GenDataArgs),
    /// Run one experiment config.
    Simulate(RunArgs),
    /// Run the closed-form equivalence suite and print a pass/fail table.
    Verify(VerifyArgs),
    /// Expand the config's sweep grid and run every point.
    Sweep(SweepArgs),
    /// Render SVG plots from an existing metrics CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct OutArg {
    /// Output directory [default: config `output_dir`, else `out`].
    #[arg(long, env = "FEDKD_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LogY {
    /// Logarithmic y axis; pass `--log-y=false` for a linear one.
    #[arg(long, default_value_t = true, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    log_y: bool,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config value, e.g. `--set rounds=50 --set agents.0.c=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct GenDataArgs {
    /// Take the data source and split from this config.
    #[arg(long, conflicts_with_all = ["d", "ratio", "noise"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    d: Option<usize>,
    /// Samples per dimension.
    #[arg(long, default_value_t = 1.5)]
    ratio: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: OutArg,
    #[command(flatten)]
    log_y: LogY,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: OutArg,
    #[command(flatten)]
    log_y: LogY,
    /// Concurrent runs [default: logical processors].
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random instances in the suite.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// Master seed of the suite.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Also run this config and check its simulations against their closed forms.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Metrics CSV written by `simulate` or `sweep`.
    #[arg(long)]
    input: PathBuf,
    /// Output directory [default: the CSV's directory].
    #[arg(long, env = "FEDKD_OUT")]
    out: Option<PathBuf>,
    #[command(flatten)]
    log_y: LogY,
}

fn load(args: &ConfigArgs) -> Result<LoadedConfig> {
    let mut cfg = LoadedConfig::load(&args.config)?;
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    cfg.apply_overrides(&overrides)?;
    Ok(cfg)
}

fn out_dir(flag: &Option<PathBuf>, cfg: Option<&LoadedConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.clone();
    }
    cfg.and_then(|c| c.config.output_dir.as_deref().map(|d| c.resolve(d)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_run(record: &RunRecord, dir: &Path, log_y: bool) -> Result<()> {
    emit_csv(record, dir)?;
    emit_plots(&record.series, dir, log_y)?;
    Ok(())
}

fn print_run(record: &RunRecord) {
    for s in &record.series {
        if s.eval_set == "test" {
            println!(
                "{:<12} {:<16} test mse {:>12.5e} after {} steps",
                s.scheme,
                s.agent,
                s.last().unwrap_or(f64::NAN),
                s.values.len()
            );
        }
    }
    for r in &record.verification {
        println!("verify: {}", r.summary());
    }
    for n in &record.notes {
        println!("note: {n}");
    }
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    match &args.config {
        Some(path) => {
            let mut cfg = LoadedConfig::load(path)?;
            if let Some(seed) = args.seed {
                cfg.apply_overrides(&[format!("seed={seed}")])?;
            }
            let dir = out_dir(&args.out.out, Some(&cfg));
            let data = prepare_data(&cfg)?;
            mkdir(&dir)?;
            data.train.save_csv(dir.join("train.csv"))?;
            data.test.save_csv(dir.join("test.csv"))?;
            for (i, p) in data.parts.iter().enumerate() {
                p.save_csv(dir.join(format!("agent{}.csv", i + 1)))?;
            }
            println!(
                "wrote {} train, {} test samples and {} agent parts to {}",
                data.train.len(),
                data.test.len(),
                data.parts.len(),
                dir.display()
            );
        }
        None => {
            let spec = SyntheticRegressionSpec {
                d: args.d.expect("clap enforces --d without --config"),
                ratio: args.ratio,
                noise: args.noise,
                seed: args.seed.unwrap_or(0),
            };
            let data = gen_linear_regression(&spec)?;
            let dir = out_dir(&args.out.out, None);
            mkdir(&dir)?;
            let path = dir.join("data.csv");
            data.save_csv(&path)?;
            println!("wrote {} samples of dimension {} to {}", data.len(), data.dim(), path.display());
        }
    }
    Ok(())
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn simulate(args: &RunArgs) -> Result<bool> {
    let cfg = load(&args.config)?;
    let dir = out_dir(&args.out.out, Some(&cfg));
    let record = run_experiment(&cfg)?;
    write_run(&record, &dir, args.log_y.log_y)?;
    print_run(&record);
    println!("wrote {} ({:.2}s)", dir.display(), record.wall_time.as_secs_f64());
    Ok(record.verified())
}

fn sweep(args: &SweepArgs) -> Result<bool> {
    if args.jobs == Some(0) {
        return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
    }
    let cfg = load(&args.config)?;
    let dir = out_dir(&args.out.out, Some(&cfg));
    let points = expand_sweep(&cfg)?;
    println!("running {} configurations", points.len());
    let records = run_sweep(&cfg, args.jobs)?;
    let mut summary = String::from("label,scheme,agent,eval_set,final_mse\n");
    for r in &records {
        write_run(r, &dir.join(point_dir_name(&r.label)), args.log_y.log_y)?;
        for s in &r.series {
            summary.push_str(&format!(
                "{},{},{},{},{:e}\n",
                r.label,
                s.scheme,
                s.agent,
                s.eval_set,
                s.last().unwrap_or(f64::NAN)
            ));
        }
        let status = if r.verified() { "ok" } else { "VERIFY FAILED" };
        println!("{:<32} {:>8.2}s {status}", r.label, r.wall_time.as_secs_f64());
    }
    mkdir(&dir)?;
    let path = dir.join("sweep.csv");
    std::fs::write(&path, summary).map_err(|e| Error::io(path.display().to_string(), e))?;
    println!("{} run records written under {}", records.len(), dir.display());
    Ok(records.iter().all(RunRecord::verified))
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let checks = equivalence_suite(args.seed, args.instances)?;
    println!("{:>8}  {:<44} {:>12} {:>10}  result", "instance", "check", "deviation", "tolerance");
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        println!(
            "{:>8}  {:<44} {:>12.3e} {:>10.0e}  {}",
            c.instance,
            c.check,
            c.deviation,
            c.tolerance,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", checks.len(), failed);
    if let Some(path) = &args.config {
        let cfg = LoadedConfig::load(path)?;
        let record = run_experiment(&cfg)?;
        for r in &record.verification {
            ok &= r.passed;
            println!("config: {}", r.summary());
        }
        for n in &record.notes {
            println!("config note: {n}");
        }
    }
    Ok(ok)
}

fn plot(args: &PlotArgs) -> Result<()> {
    let series = read_metrics_csv(&args.input)?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| args.input.parent().map(Path::to_path_buf).unwrap_or_default());
    for p in emit_plots(&series, &dir, args.log_y.log_y)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a).map(|_| true),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Sweep(a) => sweep(a),
        Command::Plot(a) => plot(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error [verification]: simulation disagrees with its closed form");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(1)
        }
    }
}
