//! Time integration of the whole hierarchy: the recursive level cycle, CFL
//! control per coarse step and run statistics.
//!
//! One step of level `l`:
//!
//! 1. regrid the finer levels when `l` has taken `regrid_interval` steps,
//! 2. save the coarse cells next to level `l+1` and zero its fix buffers,
//! 3. fill ghost cells,
//! 4. accumulate C1 against the saved coarser cells,
//! 5. advance every patch,
//! 6. accumulate fine-side and coarse-side interface terms,
//! 7. take `R` steps of level `l+1`,
//! 8. average level `l+1` onto `l`,
//! 9. apply the conservation fix.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AmrConfig, ExecutorMode};
use crate::error::Result;
use crate::executor::{plan_level_launches, simulate, DeviceTimeline, MemoryPool, PatchWork, WriteCounters};
use crate::hierarchy::{Hierarchy, InitialCondition, Patch};
use crate::regrid::{create_hierarchy, regrid, RegridParams};
use crate::riemann::{Acoustics, Medium, RiemannSolver};
use crate::stepper::{advance_patch, reduce_patch_cfl, select_dt, AdvanceOutput, CflDecision, CflGuard, StepOptions, StepTag};
use crate::sync::{
    accumulate_c1, accumulate_coarse_side, accumulate_fine_side, apply_conservation_fix, fill_level_ghosts,
    save_coarse_cells, update_fine_to_coarse,
};

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimers {
    pub advance: f64,
    pub ghost_fill: f64,
    pub regrid: f64,
    pub updating: f64,
    pub other: f64,
}

/// Launch statistics of one level step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelStepLaunches {
    pub level: usize,
    pub patches: usize,
    pub accumulate_merged: usize,
    pub accumulate_unmerged: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub coarse_steps: usize,
    pub level_steps: Vec<usize>,
    pub cells_advanced: Vec<u64>,
    /// Sum over level steps of the level's patch count.
    pub patch_steps: Vec<u64>,
    pub rejected_steps: usize,
    /// Largest observed Courant number of each accepted coarse step.
    pub cfl_history: Vec<f64>,
    pub launches_merged: u64,
    pub launches_unmerged: u64,
    pub level_launches: Vec<LevelStepLaunches>,
    pub copy_time: f64,
    pub hidden_copy_time: f64,
    pub span_pipelined: f64,
    pub span_serial: f64,
    pub writes: WriteCounters,
    /// Pool system reservations after each accepted coarse step.
    pub pool_reservations: Vec<usize>,
    pub timers: PhaseTimers,
}

impl RunStats {
    pub fn total_cells_advanced(&self) -> u64 {
        self.cells_advanced.iter().sum()
    }

    /// Average patch count per step of each level.
    pub fn avg_patches_per_level(&self) -> Vec<f64> {
        self.patch_steps
            .iter()
            .zip(&self.level_steps)
            .map(|(&p, &n)| if n == 0 { 0.0 } else { p as f64 / n as f64 })
            .collect()
    }

    /// Sum over levels of the average patch count per step.
    pub fn avg_patches_per_step(&self) -> f64 {
        self.avg_patches_per_level().iter().sum()
    }

    pub fn max_cfl(&self) -> f64 {
        self.cfl_history.iter().copied().fold(0.0, f64::max)
    }

    pub fn overlap_fraction(&self) -> f64 {
        if self.copy_time > 0.0 {
            self.hidden_copy_time / self.copy_time
        } else {
            0.0
        }
    }

    fn ensure_level(&mut self, l: usize) {
        if self.level_steps.len() <= l {
            self.level_steps.resize(l + 1, 0);
            self.cells_advanced.resize(l + 1, 0);
            self.patch_steps.resize(l + 1, 0);
        }
    }
}

pub struct Simulation<const M: usize, const W: usize, S: RiemannSolver<M, W>> {
    pub config: AmrConfig,
    pub hierarchy: Hierarchy,
    pub solver: S,
    pub options: StepOptions,
    pub stats: RunStats,
    pub pool: MemoryPool,
    regrid_params: RegridParams,
    initial_integral: Vec<f64>,
    next_dt: f64,
    step_cfl: f64,
    level_speed: Vec<f64>,
    /// Timeline of the most recent level-0 step.
    pub last_timeline: Option<DeviceTimeline>,
}

pub type AcousticsSimulation = Simulation<3, 2, Acoustics>;

impl AcousticsSimulation {
    /// Acoustics with the configured medium and ring initial condition.
    pub fn acoustics(config: AmrConfig) -> Result<Self> {
        let solver = Acoustics::new(Medium::new(config.bulk_modulus, config.density)?);
        let ring = config.ring.clone();
        Simulation::new(config, solver, &move |x, y, q: &mut [f64]| ring.eval(x, y, q))
    }
}

impl<const M: usize, const W: usize, S: RiemannSolver<M, W>> Simulation<M, W, S> {
    pub fn new(config: AmrConfig, solver: S, ic: &InitialCondition) -> Result<Self> {
        let hierarchy = create_hierarchy(&config, M, ic)?;
        Self::from_hierarchy(config, solver, hierarchy)
    }

    /// Start from an already built hierarchy at its current time.
    pub fn from_hierarchy(config: AmrConfig, solver: S, hierarchy: Hierarchy) -> Result<Self> {
        config.validate()?;
        let options = StepOptions {
            limiter: config.limiter,
            transverse_corrections: true,
            save_fluctuations: config.conservation_fix,
        };
        let base = &hierarchy.levels[0];
        let first_dt = select_dt(config.cfl_desired, base.dx.min(base.dy), solver.max_speed(), config.dt_max())
            .min(config.dt_max());
        Ok(Simulation {
            initial_integral: hierarchy.composite_integral(),
            pool: MemoryPool::new(config.device.pool_chunk_bytes),
            regrid_params: RegridParams::from(&config),
            config,
            hierarchy,
            solver,
            options,
            stats: RunStats::default(),
            next_dt: first_dt,
            step_cfl: 0.0,
            level_speed: Vec::new(),
            last_timeline: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.hierarchy.levels[0].time
    }

    /// Largest relative change of any component of the composite integral
    /// since the start (absolute where the initial integral vanishes).
    pub fn conservation_residual(&self) -> f64 {
        let now = self.hierarchy.composite_integral();
        now.iter()
            .zip(&self.initial_integral)
            .map(|(a, b)| {
                let d = (a - b).abs();
                if *b != 0.0 {
                    d / b.abs()
                } else {
                    d
                }
            })
            .fold(0.0, f64::max)
    }

    /// Advance to `t_final`, calling `on_output` at every configured output
    /// time reached (including `t = 0`).
    pub fn run(&mut self, mut on_output: impl FnMut(&Hierarchy) -> Result<()>) -> Result<()> {
        let t_final = self.config.t_final;
        let mut outputs: Vec<f64> = self.config.output_times.iter().copied().filter(|&t| t <= t_final).collect();
        outputs.sort_by(f64::total_cmp);
        outputs.dedup();
        let eps = 1e-12 * t_final.abs().max(1.0);
        let mut next_out = 0;
        loop {
            while next_out < outputs.len() && outputs[next_out] <= self.time() + eps {
                on_output(&self.hierarchy)?;
                next_out += 1;
            }
            if self.time() >= t_final - eps {
                break;
            }
            let stop = outputs.get(next_out).copied().unwrap_or(t_final).min(t_final);
            self.step(stop)?;
        }
        Ok(())
    }

    /// One coarse step, not going past `stop`. Steps whose observed Courant
    /// number exceeds one are undone and retried with half the step.
    pub fn step(&mut self, stop: f64) -> Result<()> {
        let t = self.time();
        let mut dt = self.next_dt;
        if t + dt > stop - 1e-12 * stop.abs().max(1.0) {
            dt = stop - t;
        }
        let mut guard = CflGuard::default();
        loop {
            let backup = (self.hierarchy.clone(), self.stats.clone());
            self.step_cfl = 0.0;
            self.level_speed.clear();
            self.hierarchy.levels[0].dt = dt;
            if let Err(e) = self.advance_level(0) {
                // keep the last good state for diagnostics
                self.hierarchy = backup.0;
                self.stats = backup.1;
                return Err(e);
            }
            match guard.check(self.step_cfl, dt) {
                Ok(CflDecision::Accept) => break,
                Ok(CflDecision::Retry(smaller)) => {
                    self.hierarchy = backup.0;
                    self.stats = backup.1;
                    self.stats.rejected_steps += 1;
                    dt = smaller;
                }
                Err(e) => {
                    self.hierarchy = backup.0;
                    self.stats = backup.1;
                    return Err(e);
                }
            }
        }
        self.stats.coarse_steps += 1;
        self.stats.cfl_history.push(self.step_cfl);
        self.stats.pool_reservations.push(self.pool.counters().system_reservations);
        self.next_dt = self.next_step_size();
        Ok(())
    }

    fn next_step_size(&self) -> f64 {
        let dt_max = self.config.dt_max();
        let mut dt = dt_max;
        let mut scale = 1.0;
        for (l, level) in self.hierarchy.levels.iter().enumerate() {
            if let Some(&s) = self.level_speed.get(l) {
                let h = level.dx.min(level.dy);
                dt = dt.min(select_dt(self.config.cfl_desired, h, s, dt_max / scale) * scale);
            }
            if l + 1 < self.hierarchy.levels.len() {
                scale *= self.hierarchy.ratio(l) as f64;
            }
        }
        dt
    }

    fn advance_level(&mut self, l: usize) -> Result<()> {
        let fix = self.config.conservation_fix;
        if l + 1 < self.hierarchy.max_levels && self.hierarchy.levels[l].steps_since_regrid >= self.config.regrid_interval {
            let t0 = Instant::now();
            regrid(&mut self.hierarchy, l, &self.regrid_params, None)?;
            self.stats.timers.regrid += t0.elapsed().as_secs_f64();
        }
        let dt = self.hierarchy.levels[l].dt;
        let has_finer = l + 1 < self.hierarchy.levels.len();
        let t0 = Instant::now();
        if has_finer {
            let r = self.hierarchy.ratio(l);
            self.hierarchy.levels[l + 1].dt = dt / r as f64;
            if fix {
                save_coarse_cells(&mut self.hierarchy, l + 1);
            }
        }
        self.stats.timers.other += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        fill_level_ghosts(&mut self.hierarchy, l)?;
        self.stats.timers.ghost_fill += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let outputs = self.advance_patches(l, dt)?;
        self.stats.timers.advance += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        self.record_level_step(l, dt, &outputs)?;
        if fix {
            self.accumulate_interfaces(l, dt, &outputs)?;
        }
        let level = &mut self.hierarchy.levels[l];
        level.old_time = level.time;
        level.time += dt;
        self.stats.timers.other += t0.elapsed().as_secs_f64();

        if has_finer {
            for _ in 0..self.hierarchy.ratio(l) {
                self.advance_level(l + 1)?;
            }
            let t0 = Instant::now();
            let t = self.hierarchy.levels[l].time;
            let fine = &mut self.hierarchy.levels[l + 1];
            fine.time = t;
            for p in &mut fine.patches {
                p.field.time = t;
            }
            update_fine_to_coarse(&mut self.hierarchy, l + 1)?;
            if fix {
                apply_conservation_fix(&mut self.hierarchy, l + 1);
            }
            self.stats.timers.updating += t0.elapsed().as_secs_f64();
        }
        self.hierarchy.levels[l].steps_since_regrid += 1;
        Ok(())
    }

    /// Advance all patches of level `l` with C1 taken first. Returns the
    /// advance output of each patch and how many of its records are
    /// fine-side ones.
    fn advance_patches(&mut self, l: usize, dt: f64) -> Result<Vec<(AdvanceOutput<M>, usize)>> {
        let fix = self.config.conservation_fix;
        let (dxc, dyc) = if l > 0 {
            let c = &self.hierarchy.levels[l - 1];
            (c.dx, c.dy)
        } else {
            (0.0, 0.0)
        };
        let step = self.stats.coarse_steps;
        let solver = &self.solver;
        let opts = &self.options;
        let pool = &self.pool;
        let level = &mut self.hierarchy.levels[l];
        let (dx, dy) = (level.dx, level.dy);
        let run = |p: &mut Patch| -> Result<(AdvanceOutput<M>, usize)> {
            if fix && l > 0 {
                accumulate_c1(p, solver, dt, dxc, dyc)?;
            }
            match &mut p.old {
                Some(o) => o.clone_from(&p.field),
                None => p.old = Some(p.field.clone()),
            }
            let mut requests = Vec::new();
            if fix {
                requests.extend_from_slice(&p.fix.requests);
                requests.extend_from_slice(&p.lookup.requests);
            }
            let n_fine = if fix { p.fix.requests.len() } else { 0 };
            let solution = p.cells() * M * std::mem::size_of::<f64>();
            let field_block = pool.acquire(p.field.bytes())?;
            let wave_block = if opts.save_fluctuations { Some(pool.acquire(4 * solution)?) } else { None };
            let tag = StepTag { patch: p.id, level: l, step };
            let out = advance_patch(&mut p.field, dt, dx, dy, solver, opts, &requests, tag);
            pool.release(field_block)?;
            if let Some(b) = wave_block {
                pool.release(b)?;
            }
            Ok((out?, n_fine))
        };
        match self.config.executor {
            ExecutorMode::Pipelined => level.patches.par_iter_mut().map(run).collect(),
            ExecutorMode::Serial => level.patches.iter_mut().map(run).collect(),
        }
    }

    fn record_level_step(&mut self, l: usize, dt: f64, outputs: &[(AdvanceOutput<M>, usize)]) -> Result<()> {
        let level = &self.hierarchy.levels[l];
        let maxima: Vec<f64> = outputs.iter().map(|o| o.0.cfl).collect();
        let cfl = reduce_patch_cfl(&maxima)?;
        self.step_cfl = self.step_cfl.max(cfl);
        if self.level_speed.len() <= l {
            self.level_speed.resize(l + 1, 0.0);
        }
        if dt > 0.0 {
            let s = cfl * level.dx.min(level.dy) / dt;
            self.level_speed[l] = self.level_speed[l].max(s);
        }

        let stats = &mut self.stats;
        stats.ensure_level(l);
        stats.level_steps[l] += 1;
        stats.cells_advanced[l] += level.cells() as u64;
        stats.patch_steps[l] += level.patches.len() as u64;
        for (o, _) in outputs {
            stats.writes.add(o.solution_bytes, o.saved.as_ref().map_or(0, |s| s.bytes()));
        }

        let work: Vec<PatchWork> = level
            .patches
            .iter()
            .map(|p| PatchWork {
                id: p.id,
                cells: p.cells(),
                in_bytes: p.field.bytes(),
                out_bytes: p.cells() * M * std::mem::size_of::<f64>(),
                interface_edges: p.fix.requests.len() + p.lookup.requests.len(),
            })
            .collect();
        let model = &self.config.device;
        let with_c1 = l > 0;
        let merged = plan_level_launches(&work, true, with_c1, model);
        let unmerged = plan_level_launches(&work, false, with_c1, model);
        let count = |t: &[crate::executor::DeviceTask]| t.iter().filter(|t| t.kind.is_accumulate()).count();
        stats.level_launches.push(LevelStepLaunches {
            level: l,
            patches: work.len(),
            accumulate_merged: count(&merged),
            accumulate_unmerged: count(&unmerged),
        });
        stats.launches_merged += merged.len() as u64;
        stats.launches_unmerged += unmerged.len() as u64;
        let plan = if model.merge_launches { merged } else { unmerged };
        let serial = simulate(plan.clone(), model, true)?;
        let timeline = match self.config.executor {
            ExecutorMode::Pipelined => simulate(plan, model, false)?,
            ExecutorMode::Serial => serial.clone(),
        };
        stats.copy_time += timeline.copy_time;
        stats.hidden_copy_time += timeline.hidden_copy_time;
        stats.span_pipelined += timeline.span;
        stats.span_serial += serial.span;
        if l == 0 {
            self.last_timeline = Some(timeline);
        }
        Ok(())
    }

    /// Fine-side terms into level `l`'s own buffers and coarse-side terms
    /// into level `l+1`'s buffers.
    fn accumulate_interfaces(&mut self, l: usize, dt: f64, outputs: &[(AdvanceOutput<M>, usize)]) -> Result<()> {
        let merged = self.config.device.merge_launches;
        let (lo, hi) = self.hierarchy.levels.split_at_mut(l + 1);
        let (coarse_dx, coarse_dy) = if l > 0 { (lo[l - 1].dx, lo[l - 1].dy) } else { (0.0, 0.0) };
        let level = &mut lo[l];
        let (dx, dy) = (level.dx, level.dy);
        let mut finer = hi.first_mut();
        let fine_side = |p: &mut Patch, out: &(AdvanceOutput<M>, usize)| -> Result<()> {
            if l > 0 {
                accumulate_fine_side(p, &out.0.records[..out.1], dt, coarse_dx, coarse_dy)?;
            }
            Ok(())
        };
        if merged {
            for (p, out) in level.patches.iter_mut().zip(outputs) {
                fine_side(p, out)?;
            }
            if let Some(f) = finer.as_mut() {
                for (p, out) in level.patches.iter().zip(outputs) {
                    accumulate_coarse_side(&mut f.patches, &p.lookup, &out.0.records[out.1..], dt, dx, dy)?;
                }
            }
        } else {
            for (p, out) in level.patches.iter_mut().zip(outputs) {
                fine_side(p, out)?;
                if let Some(f) = finer.as_mut() {
                    accumulate_coarse_side(&mut f.patches, &p.lookup, &out.0.records[out.1..], dt, dx, dy)?;
                }
            }
        }
        Ok(())
    }
}
