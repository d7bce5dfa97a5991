//! File-driven processing: configuration, CSV ingestion and export, the
//! align, filter and smooth pipeline, RMSE reports and Monte Carlo runs.

mod config;
mod io;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::alignment::{
    detect_static, heading_align, init_state, leveling, AlignmentData, HeadingPosterior, StaticInterval,
};
use crate::error::{Error, Result, StageContext};
use crate::estimation::{rts_smooth, run_filter, FilterEpoch};
use crate::ins::{GnssFix, ImuSample};
use crate::lie::{ConcentratedGaussian, GroupElement};
use crate::simulator::simulate;

pub use config::{PipelineConfig, PipelineSettings};
pub use io::{
    fmt_num, read_gnss_csv, read_imu_csv, read_truth_csv, trajectory_row, write_gnss_csv, write_imu_csv,
    write_trajectory_csv, write_truth_csv, TruthRecord, TRAJECTORY_HEADER,
};
pub use report::{channel_errors, rmse, ChannelRmse, RmseAccumulator, RmseReport, CHANNELS};

/// How far [`estimate`] runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum StopAfter {
    Align,
    Filter,
    Smooth,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub static_interval: StaticInterval,
    /// Present unless the heading was fixed in the settings.
    pub heading: Option<HeadingPosterior>,
    pub psi0: f64,
    pub initial: ConcentratedGaussian,
    /// Epoch times, starting at the beginning of the static interval.
    pub times: Vec<f64>,
    pub filtered: Vec<ConcentratedGaussian>,
    /// Empty unless the smoother ran.
    pub smoothed: Vec<ConcentratedGaussian>,
    pub fused: usize,
    /// Fixes whose update weight was below one.
    pub down_weighted: usize,
}

/// Runs the processing chain on in-memory data. Errors carry the stage name.
pub fn estimate(
    imu: &[ImuSample],
    gnss: &[GnssFix],
    settings: &PipelineSettings,
    stop: StopAfter,
) -> Result<PipelineOutput> {
    if gnss.is_empty() {
        return Err(Error::NoMeasurements("GNSS stream is empty".into())).stage("ingest");
    }
    let stat = detect_static(imu, &settings.align.detection).stage("static detection")?;
    leveling(&stat.mean_accel).stage("leveling")?;
    let data = AlignmentData {
        imu,
        gnss,
        stat: &stat,
        filter: &settings.filter,
    };
    let (psi0, heading) = match settings.fixed_heading {
        Some(psi) => (psi, None),
        None => {
            let h = heading_align(&data, &settings.align).stage("heading alignment")?;
            info!(
                "heading alignment: psi* = {:.3} deg (sigma {:.3} deg)",
                h.psi_star.to_degrees(),
                h.sigma_psi_star.to_degrees()
            );
            (h.psi_star, Some(h))
        }
    };
    let initial = init_state(&stat, gnss, psi0, &settings.filter.lever, &settings.align.p0).stage("initialization")?;
    let mut out = PipelineOutput {
        static_interval: stat,
        heading,
        psi0,
        initial,
        times: Vec::new(),
        filtered: Vec::new(),
        smoothed: Vec::new(),
        fused: 0,
        down_weighted: 0,
    };
    if stop == StopAfter::Align {
        return Ok(out);
    }

    let history: Vec<FilterEpoch> =
        run_filter(&initial, &imu[stat.start_index..], gnss, &settings.filter).stage("filter")?;
    out.times = history.iter().map(|e| e.t).collect();
    out.filtered = history.iter().map(|e| *e.updated()).collect();
    for g in history.iter().filter_map(|e| e.gate.as_ref()) {
        out.fused += 1;
        if g.weight < 1.0 {
            out.down_weighted += 1;
        }
    }
    if stop == StopAfter::Smooth {
        out.smoothed = rts_smooth(&history).stage("smoother")?;
    }
    Ok(out)
}

/// Index of the first epoch included in error statistics.
fn first_scored(out: &PipelineOutput, skip_seconds: f64) -> usize {
    let t0 = out.static_interval.t_end + skip_seconds;
    out.times.partition_point(|t| *t < t0)
}

/// Accumulates filtered and smoothed errors against `truth(k)` for every
/// scored epoch `k`.
fn score<'a>(
    out: &PipelineOutput,
    skip_seconds: f64,
    truth: impl Fn(usize) -> Result<&'a GroupElement>,
) -> Result<(RmseAccumulator, RmseAccumulator)> {
    let mut f = RmseAccumulator::default();
    let mut s = RmseAccumulator::default();
    for k in first_scored(out, skip_seconds)..out.times.len() {
        let t = truth(k)?;
        f.add(&out.filtered[k].mean, t);
        if let Some(sm) = out.smoothed.get(k) {
            s.add(&sm.mean, t);
        }
    }
    Ok((f, s))
}

/// Files written by [`run_pipeline`].
#[derive(Clone, Debug, Default)]
pub struct PipelineFiles {
    pub filtered: Option<PathBuf>,
    pub smoothed: Option<PathBuf>,
    pub heading: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub output: PipelineOutput,
    pub files: PipelineFiles,
    pub report: Option<RmseReport>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn heading_text(out: &PipelineOutput) -> String {
    let mut s = format!("psi0[deg],{}\n", fmt_num(out.psi0.to_degrees()));
    if let Some(h) = &out.heading {
        s += &format!("sigma[deg],{}\n", fmt_num(h.sigma_psi_star.to_degrees()));
        s += &format!("curvature,{}\n", fmt_num(h.curvature));
        for (psi, c) in h.samples {
            s += &format!("candidate[deg],{},{}\n", fmt_num(psi.to_degrees()), fmt_num(c));
        }
    }
    s
}

/// Reads the configured files, runs [`estimate`] up to `stop` and writes the
/// results into the output directory. On error, files written so far are
/// removed.
pub fn run_pipeline(cfg: &PipelineConfig, stop: StopAfter) -> Result<PipelineRun> {
    let mut written: Vec<PathBuf> = Vec::new();
    let result = run_pipeline_inner(cfg, stop, &mut written);
    if result.is_err() {
        for p in &written {
            if let Err(e) = std::fs::remove_file(p) {
                warn!("could not remove partial output {}: {e}", p.display());
            }
        }
    }
    result
}

fn run_pipeline_inner(cfg: &PipelineConfig, stop: StopAfter, written: &mut Vec<PathBuf>) -> Result<PipelineRun> {
    let started = Instant::now();
    cfg.validate().stage("configuration")?;
    let missing = |what: &str| Error::InvalidParameter(format!("no {what} file configured"));
    let imu_path = cfg.imu_path.as_ref().ok_or_else(|| missing("IMU")).stage("ingest")?;
    let gnss_path = cfg.gnss_path.as_ref().ok_or_else(|| missing("GNSS")).stage("ingest")?;
    let imu = read_imu_csv(imu_path, cfg.gyro_unit, cfg.accel_unit).stage("ingest")?;
    let gnss = read_gnss_csv(gnss_path, &cfg.gnss_sigma).stage("ingest")?;
    let truth = match &cfg.truth_path {
        Some(p) => Some(read_truth_csv(p).stage("ingest")?),
        None => None,
    };

    let output = estimate(&imu, &gnss, &cfg.settings, stop)?;

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(dir, e))
        .stage("export")?;
    let mut files = PipelineFiles::default();
    let mut emit = |name: &str, write: &dyn Fn(&Path) -> Result<()>| -> Result<PathBuf> {
        let p = dir.join(name);
        written.push(p.clone());
        write(&p).stage("export")?;
        Ok(p)
    };
    files.heading = Some(emit("heading.csv", &|p| write_text(p, &heading_text(&output)))?);
    if stop >= StopAfter::Filter {
        files.filtered = Some(emit("filtered.csv", &|p| {
            write_trajectory_csv(p, &output.times, &output.filtered)
        })?);
    }
    if stop >= StopAfter::Smooth {
        files.smoothed = Some(emit("smoothed.csv", &|p| {
            write_trajectory_csv(p, &output.times, &output.smoothed)
        })?);
    }

    let report = match (&truth, stop) {
        (Some(truth), StopAfter::Smooth) => {
            let lookup = |k: usize| -> Result<&GroupElement> {
                let t = output.times[k];
                let i = truth.partition_point(|r| r.t < t - 1e-6);
                match truth.get(i) {
                    Some(r) if (r.t - t).abs() <= 1e-6 => Ok(&r.state),
                    _ => Err(Error::Misaligned(format!("no truth epoch at t = {t}"))),
                }
            };
            let (f, s) = score(&output, cfg.settings.skip_seconds, lookup).stage("report")?;
            let report = RmseReport {
                filtered: f.finish().stage("report")?,
                smoothed: s.finish().stage("report")?,
                trials: 1,
                diverged: 0,
                runtime: started.elapsed(),
            };
            files.report = Some(emit("rmse.csv", &|p| write_text(p, &report.to_string()))?);
            Some(report)
        }
        _ => None,
    };
    Ok(PipelineRun { output, files, report })
}

/// Worker count from `LIE_NAV_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Option<usize> {
    let raw = std::env::var("LIE_NAV_THREADS").ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            warn!("ignoring LIE_NAV_THREADS = `{raw}`");
            None
        }
    }
}

/// One simulated trial: errors against the simulator truth.
pub fn run_trial(cfg: &PipelineConfig, seed: u64) -> Result<(RmseAccumulator, RmseAccumulator)> {
    let mut sim = cfg.simulation;
    sim.noise.seed = seed;
    let data = simulate(&sim).stage("simulate")?;
    let out = estimate(&data.imu, &data.gnss, &cfg.settings, StopAfter::Smooth)?;
    let offset = out.static_interval.start_index;
    score(&out, cfg.settings.skip_seconds, |k| Ok(&data.truth[k + offset]))
}

fn is_divergence(e: &Error) -> bool {
    match e {
        Error::Stage { source, .. } => is_divergence(source),
        Error::NonFinite(_)
        | Error::OutOfChart { .. }
        | Error::SingularInnovation
        | Error::SmootherGain { .. }
        | Error::NotPositiveDefinite(_)
        | Error::NonConvexFit { .. }
        | Error::Alignment(_) => true,
        _ => false,
    }
}

/// Runs `cfg.trials` simulated trials with seeds `cfg.seed + i`. Errors are
/// pooled over all scored epochs of all converged trials; the reduction is
/// in seed order, so the result does not depend on scheduling.
pub fn monte_carlo(cfg: &PipelineConfig) -> Result<RmseReport> {
    let started = Instant::now();
    cfg.validate().stage("configuration")?;
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into())).stage("configuration");
    }
    let work = || -> Vec<Result<(RmseAccumulator, RmseAccumulator)>> {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|i| run_trial(cfg, cfg.seed.wrapping_add(i)))
            .collect()
    };
    let results = match thread_limit() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut filtered = RmseAccumulator::default();
    let mut smoothed = RmseAccumulator::default();
    let mut diverged = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((f, s)) => {
                filtered.merge(&f);
                smoothed.merge(&s);
            }
            Err(e) if is_divergence(&e) => {
                warn!("trial {i} (seed {}) diverged: {e}", cfg.seed.wrapping_add(i as u64));
                diverged += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if diverged * 20 > cfg.trials {
        return Err(Error::TooManyDivergences {
            diverged,
            trials: cfg.trials,
        });
    }
    Ok(RmseReport {
        filtered: filtered.finish().stage("report")?,
        smoothed: smoothed.finish().stage("report")?,
        trials: cfg.trials,
        diverged,
        runtime: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{ProfileKind, SimNoiseConfig};

    fn quiet_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.simulation.profile.kind = ProfileKind::Circular;
        cfg.simulation.profile.duration = 60.0;
        cfg.simulation.noise = SimNoiseConfig::zero();
        cfg.settings.fixed_heading = Some(0.0);
        cfg.trials = 1;
        cfg.with_filter_noise_from_simulation()
    }

    #[test]
    fn empty_gnss_fails_before_filtering() {
        let imu = vec![ImuSample::new(0.0, Default::default(), Default::default())];
        match estimate(&imu, &[], &PipelineSettings::default(), StopAfter::Smooth) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "ingest");
                assert!(matches!(*source, Error::NoMeasurements(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noise_free_trial_is_near_exact() {
        let mut cfg = quiet_config();
        cfg.settings.fixed_heading = Some(cfg.simulation.profile.heading);
        let r = monte_carlo(&cfg).unwrap();
        for v in r.filtered.0.iter().chain(r.smoothed.0.iter()) {
            assert!(*v < 1e-3, "{r}");
        }
    }
}
