//! Benchmark runs of the ring problem, the cutoff x regrid-interval sweep
//! and CSV reports.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::AmrConfig;
use crate::driver::{AcousticsSimulation, PhaseTimers, RunStats};
use crate::error::{AmrError, Result};
use crate::executor::{PoolCounters, WriteCounters};
use crate::snapshot::Snapshot;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub cutoff: f64,
    pub regrid_interval: usize,
    pub final_time: f64,
    pub coarse_steps: usize,
    pub level_steps: Vec<usize>,
    pub cells_advanced: Vec<u64>,
    pub total_cells_advanced: u64,
    pub avg_patches_per_level: Vec<f64>,
    pub avg_patches_per_step: f64,
    pub conservation_residual: f64,
    pub max_cfl: f64,
    /// Largest observed Courant number excluding the first coarse step.
    pub max_cfl_after_first: f64,
    pub rejected_steps: usize,
    pub launches_merged: u64,
    pub launches_unmerged: u64,
    pub overlap_fraction: f64,
    pub span_pipelined: f64,
    pub span_serial: f64,
    pub pool: PoolCounters,
    pub writes: WriteCounters,
    pub timers: PhaseTimers,
    /// Cells in the hierarchy at the end of the run.
    pub final_cells: usize,
    pub final_patches: usize,
}

impl RunReport {
    pub fn from_simulation(sim: &AcousticsSimulation) -> Self {
        let s: &RunStats = &sim.stats;
        RunReport {
            cutoff: sim.config.cutoff,
            regrid_interval: sim.config.regrid_interval,
            final_time: sim.time(),
            coarse_steps: s.coarse_steps,
            level_steps: s.level_steps.clone(),
            cells_advanced: s.cells_advanced.clone(),
            total_cells_advanced: s.total_cells_advanced(),
            avg_patches_per_level: s.avg_patches_per_level(),
            avg_patches_per_step: s.avg_patches_per_step(),
            conservation_residual: sim.conservation_residual(),
            max_cfl: s.max_cfl(),
            max_cfl_after_first: s.cfl_history.iter().skip(1).copied().fold(0.0, f64::max),
            rejected_steps: s.rejected_steps,
            launches_merged: s.launches_merged,
            launches_unmerged: s.launches_unmerged,
            overlap_fraction: s.overlap_fraction(),
            span_pipelined: s.span_pipelined,
            span_serial: s.span_serial,
            pool: sim.pool.counters(),
            writes: s.writes,
            timers: s.timers,
            final_cells: sim.hierarchy.total_cells(),
            final_patches: sim.hierarchy.total_patches(),
        }
    }
}

fn snapshot_path(dir: &Path, index: usize, time: f64) -> PathBuf {
    dir.join(format!("snapshot_{index:04}_t{time:.6}.txt"))
}

/// Run the ring problem to `t_final`, writing a snapshot at every output
/// time when `snapshots` is given. On failure the last good state is written
/// to `last_good.txt` there before the error is returned.
pub fn run(config: AmrConfig, snapshots: Option<&Path>) -> Result<(RunReport, AcousticsSimulation)> {
    if let Some(dir) = snapshots {
        std::fs::create_dir_all(dir).map_err(|e| AmrError::io(dir, e))?;
    }
    let mut sim = AcousticsSimulation::acoustics(config)?;
    let mut written = 0;
    let result = sim.run(|h| {
        if let Some(dir) = snapshots {
            Snapshot::from_hierarchy(h).write(&snapshot_path(dir, written, h.levels[0].time))?;
        }
        written += 1;
        Ok(())
    });
    if let Err(e) = result {
        if let Some(dir) = snapshots {
            Snapshot::from_hierarchy(&sim.hierarchy).write(&dir.join("last_good.txt"))?;
        }
        return Err(e);
    }
    Ok((RunReport::from_simulation(&sim), sim))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cutoff: f64,
    pub regrid_interval: usize,
    pub result: std::result::Result<RunReport, String>,
}

/// One run per (cutoff, interval) pair, intervals outermost. Failed runs are
/// kept as failed rows.
pub fn sweep(config: &AmrConfig, cutoffs: &[f64], intervals: &[usize]) -> Result<Vec<SweepRow>> {
    if cutoffs.is_empty() || intervals.is_empty() {
        return Err(AmrError::config("sweep", "cutoff and interval lists must be nonempty"));
    }
    let mut rows = Vec::new();
    for &k in intervals {
        for &c in cutoffs {
            let cfg = AmrConfig { cutoff: c, regrid_interval: k, output_times: Vec::new(), ..config.clone() };
            let result = cfg.validate().and_then(|_| run(cfg, None)).map(|r| r.0).map_err(|e| e.to_string());
            rows.push(SweepRow { cutoff: c, regrid_interval: k, result });
        }
    }
    Ok(rows)
}

/// Flat CSV row shared by `run` and `sweep` reports.
#[derive(Debug, Serialize)]
struct CsvRow {
    cutoff: f64,
    regrid_interval: usize,
    status: String,
    final_time: Option<f64>,
    coarse_steps: Option<usize>,
    total_cells_advanced: Option<u64>,
    cells_advanced_per_level: Option<String>,
    avg_patches_per_step: Option<f64>,
    avg_patches_per_level: Option<String>,
    conservation_residual: Option<f64>,
    max_cfl: Option<f64>,
    rejected_steps: Option<usize>,
    launches_merged: Option<u64>,
    launches_unmerged: Option<u64>,
    overlap_fraction: Option<f64>,
    span_pipelined: Option<f64>,
    span_serial: Option<f64>,
    pool_system_reservations: Option<usize>,
    pool_acquires: Option<usize>,
    pool_releases: Option<usize>,
    pool_high_water_bytes: Option<usize>,
    solution_bytes_written: Option<u64>,
    wave_bytes_written: Option<u64>,
    time_advance: Option<f64>,
    time_ghost_fill: Option<f64>,
    time_regrid: Option<f64>,
    time_updating: Option<f64>,
    time_other: Option<f64>,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

impl CsvRow {
    fn new(row: &SweepRow) -> Self {
        let r = row.result.as_ref().ok();
        CsvRow {
            cutoff: row.cutoff,
            regrid_interval: row.regrid_interval,
            status: match &row.result {
                Ok(_) => "ok".into(),
                Err(e) => format!("failed: {e}"),
            },
            final_time: r.map(|r| r.final_time),
            coarse_steps: r.map(|r| r.coarse_steps),
            total_cells_advanced: r.map(|r| r.total_cells_advanced),
            cells_advanced_per_level: r.map(|r| join(&r.cells_advanced)),
            avg_patches_per_step: r.map(|r| r.avg_patches_per_step),
            avg_patches_per_level: r.map(|r| join(&r.avg_patches_per_level)),
            conservation_residual: r.map(|r| r.conservation_residual),
            max_cfl: r.map(|r| r.max_cfl),
            rejected_steps: r.map(|r| r.rejected_steps),
            launches_merged: r.map(|r| r.launches_merged),
            launches_unmerged: r.map(|r| r.launches_unmerged),
            overlap_fraction: r.map(|r| r.overlap_fraction),
            span_pipelined: r.map(|r| r.span_pipelined),
            span_serial: r.map(|r| r.span_serial),
            pool_system_reservations: r.map(|r| r.pool.system_reservations),
            pool_acquires: r.map(|r| r.pool.acquires),
            pool_releases: r.map(|r| r.pool.releases),
            pool_high_water_bytes: r.map(|r| r.pool.high_water_bytes),
            solution_bytes_written: r.map(|r| r.writes.solution_bytes),
            wave_bytes_written: r.map(|r| r.writes.wave_bytes),
            time_advance: r.map(|r| r.timers.advance),
            time_ghost_fill: r.map(|r| r.timers.ghost_fill),
            time_regrid: r.map(|r| r.timers.regrid),
            time_updating: r.map(|r| r.timers.updating),
            time_other: r.map(|r| r.timers.other),
        }
    }
}

pub fn write_report_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let io = |e: csv::Error| AmrError::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(CsvRow::new(r)).map_err(io)?;
    }
    w.flush().map_err(|e| AmrError::io(path, e))
}

/// Human-readable one-line summary of a report.
pub fn summary(r: &RunReport) -> String {
    format!(
        "t={:.6} steps={} cells_advanced={} avg_patches/step={:.2} residual={:.3e} max_cfl={:.4} overlap={:.3} launches merged/unmerged={}/{} pool_reservations={}",
        r.final_time,
        r.coarse_steps,
        r.total_cells_advanced,
        r.avg_patches_per_step,
        r.conservation_residual,
        r.max_cfl,
        r.overlap_fraction,
        r.launches_merged,
        r.launches_unmerged,
        r.pool.system_reservations
    )
}
