//! Device-execution model: launch planning per level, the discrete-event
//! timeline, write-byte accounting and the arena memory pool.
//!
//! The model is synthetic. Costs are in arbitrary time units and only feed
//! scheduling statistics, never the numerics.

mod pool;
mod timeline;

pub use pool::{size_class, BlockHandle, MemoryPool, PoolCounters};
pub use timeline::{simulate, DeviceTask, DeviceTimeline, TaskKind, TaskSpan};

use serde::Serialize;

use crate::config::DeviceModel;

/// What the planner needs to know about one patch of a level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchWork {
    pub id: u64,
    pub cells: usize,
    /// Bytes moved to the device before the advance.
    pub in_bytes: usize,
    /// Bytes moved back after it.
    pub out_bytes: usize,
    /// Coarse-fine interface edges handled by the C1 and accumulate tasks.
    pub interface_edges: usize,
}

/// Size of the CFL scalar returned with every patch.
pub const CFL_SCALAR_BYTES: usize = 8;

/// Ordered task list for one level: per patch, largest first, a stream with
/// transfer-in, C1, advance and transfer-out; then the flux accumulation,
/// either two level-wide tasks (`merged`) or two per patch.
pub fn plan_level_launches(patches: &[PatchWork], merged: bool, with_c1: bool, model: &DeviceModel) -> Vec<DeviceTask> {
    let mut order: Vec<&PatchWork> = patches.iter().collect();
    order.sort_by(|a, b| b.cells.cmp(&a.cells).then(a.id.cmp(&b.id)));
    let copy = |bytes: usize| bytes as f64 / model.bandwidth;
    let work = |cells: usize| cells as f64 * model.cell_cost;
    let mut tasks = Vec::with_capacity(6 * patches.len() + 2);
    let mut advances = Vec::with_capacity(patches.len());
    for (s, p) in order.iter().enumerate() {
        let task = |kind, cost, bytes| DeviceTask { kind, stream: s, cost, bytes, patch_ids: vec![p.id], deps: vec![] };
        tasks.push(task(TaskKind::TransferIn, copy(p.in_bytes), p.in_bytes));
        if with_c1 {
            tasks.push(task(TaskKind::C1, work(p.interface_edges), 0));
        }
        advances.push(tasks.len());
        tasks.push(task(TaskKind::Advance, work(p.cells), 0));
        let out = p.out_bytes + CFL_SCALAR_BYTES;
        tasks.push(task(TaskKind::TransferOut, copy(out), out));
        if !merged {
            tasks.push(task(TaskKind::AccumulateFine, work(p.interface_edges), 0));
            tasks.push(task(TaskKind::AccumulateCoarse, work(p.interface_edges), 0));
        }
    }
    if merged {
        let ids: Vec<u64> = order.iter().map(|p| p.id).collect();
        let edges: usize = patches.iter().map(|p| p.interface_edges).sum();
        let stream = order.len();
        for kind in [TaskKind::AccumulateFine, TaskKind::AccumulateCoarse] {
            tasks.push(DeviceTask {
                kind,
                stream,
                cost: work(edges),
                bytes: 0,
                patch_ids: ids.clone(),
                deps: advances.clone(),
            });
        }
    }
    tasks
}

/// Bytes written per data family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WriteCounters {
    pub solution_bytes: u64,
    pub wave_bytes: u64,
}

impl WriteCounters {
    pub fn add(&mut self, solution: usize, wave: usize) {
        self.solution_bytes += solution as u64;
        self.wave_bytes += wave as u64;
    }

    /// Wave bytes over solution bytes; 0 before anything was written.
    pub fn ratio(&self) -> f64 {
        if self.solution_bytes == 0 {
            0.0
        } else {
            self.wave_bytes as f64 / self.solution_bytes as f64
        }
    }
}
