use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use lienav_core::estimation::{GateConfig, GateMode};
use lienav_core::pipeline::{
    monte_carlo, run_pipeline, write_gnss_csv, write_imu_csv, write_truth_csv, PipelineConfig, StopAfter, TruthRecord,
};
use lienav_core::simulator::{simulate, ProfileKind};

#[derive(Parser, Debug)]
#[command(name = "lienav", version, about = "GNSS/INS post-processing on SE2(3) x T(6)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (imu.csv, gnss.csv, truth.csv).
    Simulate(SimArgs),
    /// Static detection, leveling and heading alignment only.
    Align(DataArgs),
    /// Alignment followed by the forward filter.
    Filter(DataArgs),
    /// Alignment, filter and smoother.
    Smooth(DataArgs),
    /// Full pipeline; writes an RMSE report when --truth is given.
    Run(DataArgs),
    /// Repeated simulate-and-run trials with pooled RMSE.
    Montecarlo(McArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Configuration file (`key = value [unit]` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_gate)]
    gate: Option<GateMode>,
    /// Chi-square gate threshold.
    #[arg(long)]
    kappa: Option<f64>,
    /// Seconds after the static interval excluded from RMSE.
    #[arg(long)]
    skip_seconds: Option<f64>,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    imu: Option<PathBuf>,
    #[arg(long)]
    gnss: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_profile)]
    profile: Option<ProfileKind>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct McArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_profile)]
    profile: Option<ProfileKind>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_gate(s: &str) -> std::result::Result<GateMode, String> {
    s.parse().map_err(|e: lienav_core::error::Error| e.to_string())
}

fn parse_profile(s: &str) -> std::result::Result<ProfileKind, String> {
    s.parse().map_err(|e: lienav_core::error::Error| e.to_string())
}

fn stage<T>(r: lienav_core::error::Result<T>, name: &str) -> Result<T> {
    r.map_err(|e| anyhow!("stage `{name}` failed: {e}"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| anyhow!("stage `export` failed: {}: {e}", dir.display()))
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => stage(PipelineConfig::from_file(p), "configuration")?,
        None => PipelineConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(m) = common.gate {
        cfg.settings.filter.gate.mode = m;
    }
    if let Some(k) = common.kappa {
        cfg.settings.filter.gate = stage(GateConfig::new(k, cfg.settings.filter.gate.mode), "configuration")?;
    }
    if let Some(s) = common.skip_seconds {
        anyhow::ensure!(
            s >= 0.0 && s.is_finite(),
            "stage `configuration` failed: --skip-seconds must be non-negative, got {s}"
        );
        cfg.settings.skip_seconds = s;
    }
    Ok(cfg)
}

fn cmd_simulate(args: &SimArgs) -> Result<()> {
    let mut cfg = load(&args.common)?;
    if let Some(p) = args.profile {
        cfg.simulation.profile.kind = p;
    }
    cfg.simulation.noise.seed = args.seed.unwrap_or(cfg.seed);
    let data = stage(simulate(&cfg.simulation), "simulate")?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let truth: Vec<TruthRecord> = data
        .reference
        .epochs
        .iter()
        .zip(&data.truth)
        .map(|(e, s)| TruthRecord { t: e.t, state: *s })
        .collect();
    let export = |r| stage(r, "export");
    export(write_imu_csv(&dir.join("imu.csv"), &data.imu))?;
    export(write_gnss_csv(&dir.join("gnss.csv"), &data.gnss))?;
    export(write_truth_csv(&dir.join("truth.csv"), &truth))?;
    println!(
        "simulated {} profile: {} IMU samples, {} GNSS fixes -> {}",
        cfg.simulation.profile.kind,
        data.imu.len(),
        data.gnss.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_data(args: &DataArgs, stop: StopAfter, report: bool) -> Result<()> {
    let mut cfg = load(&args.common)?;
    if let Some(p) = &args.imu {
        cfg.imu_path = Some(p.clone());
    }
    if let Some(p) = &args.gnss {
        cfg.gnss_path = Some(p.clone());
    }
    if let Some(p) = &args.truth {
        cfg.truth_path = Some(p.clone());
    }
    if !report {
        cfg.truth_path = None;
    }
    let run = run_pipeline(&cfg, stop)?;
    let out = &run.output;
    println!(
        "static interval {:.3}-{:.3} s, heading {:.4} deg",
        out.static_interval.t_start,
        out.static_interval.t_end,
        out.psi0.to_degrees()
    );
    if stop >= StopAfter::Filter {
        println!(
            "fused {} fixes, {} down-weighted by the gate",
            out.fused, out.down_weighted
        );
    }
    for p in [
        &run.files.heading,
        &run.files.filtered,
        &run.files.smoothed,
        &run.files.report,
    ]
    .into_iter()
    .flatten()
    {
        println!("wrote {}", p.display());
    }
    if let Some(r) = &run.report {
        print!("{r}");
    }
    Ok(())
}

fn cmd_montecarlo(args: &McArgs) -> Result<()> {
    let mut cfg = load(&args.common)?;
    if let Some(p) = args.profile {
        cfg.simulation.profile.kind = p;
    }
    if let Some(n) = args.trials {
        cfg.trials = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let report = monte_carlo(&cfg)?;
    let text = report.to_string();
    let dir: &Path = &cfg.output_dir;
    create_dir(dir)?;
    let path = dir.join("montecarlo.csv");
    std::fs::write(&path, &text).map_err(|e| anyhow!("stage `export` failed: {}: {e}", path.display()))?;
    print!("{text}");
    eprintln!(
        "runtime {:.1} s, wrote {}",
        report.runtime.as_secs_f64(),
        path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Align(a) => cmd_data(a, StopAfter::Align, false),
        Command::Filter(a) => cmd_data(a, StopAfter::Filter, false),
        Command::Smooth(a) => cmd_data(a, StopAfter::Smooth, false),
        Command::Run(a) => cmd_data(a, StopAfter::Smooth, true),
        Command::Montecarlo(a) => cmd_montecarlo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
