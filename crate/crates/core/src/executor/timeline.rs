//! Discrete-event model of a device with a compute engine and one or two
//! copy engines fed by ordered streams.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::DeviceModel;
use crate::error::{AmrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    TransferIn,
    TransferOut,
    C1,
    Advance,
    AccumulateFine,
    AccumulateCoarse,
}

impl TaskKind {
    pub fn is_transfer(self) -> bool {
        matches!(self, TaskKind::TransferIn | TaskKind::TransferOut)
    }

    pub fn is_accumulate(self) -> bool {
        matches!(self, TaskKind::AccumulateFine | TaskKind::AccumulateCoarse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTask {
    pub kind: TaskKind,
    pub stream: usize,
    /// Duration once started.
    pub cost: f64,
    pub bytes: usize,
    pub patch_ids: Vec<u64>,
    /// Indices of earlier-or-later tasks that must finish first, beyond the
    /// stream predecessor.
    pub deps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaskSpan {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceTimeline {
    pub tasks: Vec<DeviceTask>,
    pub spans: Vec<TaskSpan>,
    pub span: f64,
    pub copy_time: f64,
    pub compute_time: f64,
    /// Copy time overlapped by compute.
    pub hidden_copy_time: f64,
    pub launches: usize,
    pub bytes_in: usize,
    pub bytes_out: usize,
}

impl DeviceTimeline {
    /// Fraction of copy time hidden behind compute; 0 when nothing is copied.
    pub fn overlap_fraction(&self) -> f64 {
        if self.copy_time > 0.0 {
            self.hidden_copy_time / self.copy_time
        } else {
            0.0
        }
    }

    pub fn accumulate_launches(&self) -> usize {
        self.tasks.iter().filter(|t| t.kind.is_accumulate()).count()
    }

    /// One CSV row per task: task_id, kind, stream, start, end, bytes,
    /// patch_ids (space separated).
    pub fn write_csv(&self, w: impl Write) -> csv::Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            task_id: usize,
            kind: TaskKind,
            stream: usize,
            start: f64,
            end: f64,
            bytes: usize,
            patch_ids: &'a str,
        }
        let mut out = csv::Writer::from_writer(w);
        for (k, (t, s)) in self.tasks.iter().zip(&self.spans).enumerate() {
            let ids: Vec<String> = t.patch_ids.iter().map(u64::to_string).collect();
            out.serialize(Row {
                task_id: k,
                kind: t.kind,
                stream: t.stream,
                start: s.start,
                end: s.end,
                bytes: t.bytes,
                patch_ids: &ids.join(" "),
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| AmrError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| AmrError::io(path, e.into()))
    }
}

fn engine_of(kind: TaskKind, copy_engines: usize) -> usize {
    match kind {
        TaskKind::TransferIn => 1,
        TaskKind::TransferOut if copy_engines >= 2 => 2,
        TaskKind::TransferOut => 1,
        _ => 0,
    }
}

/// Length of the part of `[a, b)` covered by the sorted disjoint intervals.
fn covered(a: f64, b: f64, intervals: &[(f64, f64)]) -> f64 {
    intervals
        .iter()
        .map(|&(s, e)| (b.min(e) - a.max(s)).max(0.0))
        .sum()
}

/// Schedule `tasks` in enqueue order. Task `k` is enqueued at
/// `(k + 1) * launch_overhead`; each engine repeatedly starts the
/// earliest-enqueued task whose stream predecessor and dependencies have
/// finished. With `serial` every task waits for the previous one.
pub fn simulate(tasks: Vec<DeviceTask>, model: &DeviceModel, serial: bool) -> Result<DeviceTimeline> {
    let n = tasks.len();
    let lambda = model.launch_overhead;
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut last_in_stream = std::collections::HashMap::new();
    for (k, t) in tasks.iter().enumerate() {
        if t.cost < 0.0 || !t.cost.is_finite() {
            return Err(AmrError::Scheduling(format!("task {k} has invalid cost {}", t.cost)));
        }
        if let Some(p) = last_in_stream.insert(t.stream, k) {
            preds[k].push(p);
        }
        for &d in &t.deps {
            if d >= n || d == k {
                return Err(AmrError::Scheduling(format!("task {k} depends on invalid task {d}")));
            }
            preds[k].push(d);
        }
        if serial && k > 0 {
            preds[k].push(k - 1);
        }
    }
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut waiting: Vec<usize> = preds.iter().map(Vec::len).collect();
    for (k, ps) in preds.iter().enumerate() {
        for &p in ps {
            succs[p].push(k);
        }
    }
    let mut ready: [Vec<usize>; 3] = Default::default();
    for k in 0..n {
        if waiting[k] == 0 {
            ready[engine_of(tasks[k].kind, model.copy_engines)].push(k);
        }
    }
    let ready_time = |k: usize, end: &[f64]| preds[k].iter().map(|&p| end[p]).fold((k + 1) as f64 * lambda, f64::max);
    let mut free = [0.0f64; 3];
    let mut end = vec![f64::NAN; n];
    let mut start = vec![f64::NAN; n];
    for _ in 0..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for e in 0..3 {
            let Some(t_min) = ready[e].iter().map(|&k| ready_time(k, &end)).reduce(f64::min) else {
                continue;
            };
            let t = free[e].max(t_min);
            let k = ready[e].iter().copied().filter(|&k| ready_time(k, &end) <= t).min().expect("nonempty");
            if best.map_or(true, |(bt, _, _)| t < bt) {
                best = Some((t, k, e));
            }
        }
        let Some((t, k, e)) = best else {
            return Err(AmrError::Scheduling("dependency cycle among device tasks".into()));
        };
        ready[e].retain(|&x| x != k);
        start[k] = t;
        end[k] = t + tasks[k].cost;
        free[e] = end[k];
        for &s in &succs[k] {
            waiting[s] -= 1;
            if waiting[s] == 0 {
                ready[engine_of(tasks[s].kind, model.copy_engines)].push(s);
            }
        }
    }

    let spans: Vec<TaskSpan> = (0..n).map(|k| TaskSpan { start: start[k], end: end[k] }).collect();
    let mut compute: Vec<(f64, f64)> = Vec::new();
    let (mut copy_time, mut compute_time, mut bytes_in, mut bytes_out) = (0.0, 0.0, 0, 0);
    for (t, s) in tasks.iter().zip(&spans) {
        match t.kind {
            TaskKind::TransferIn => {
                copy_time += t.cost;
                bytes_in += t.bytes;
            }
            TaskKind::TransferOut => {
                copy_time += t.cost;
                bytes_out += t.bytes;
            }
            _ => {
                compute_time += t.cost;
                compute.push((s.start, s.end));
            }
        }
    }
    let hidden = tasks
        .iter()
        .zip(&spans)
        .filter(|(t, _)| t.kind.is_transfer())
        .map(|(_, s)| covered(s.start, s.end, &compute))
        .sum();
    Ok(DeviceTimeline {
        span: spans.iter().map(|s| s.end).fold(0.0, f64::max),
        spans,
        copy_time,
        compute_time,
        hidden_copy_time: hidden,
        launches: n,
        bytes_in,
        bytes_out,
        tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(lambda: f64) -> DeviceModel {
        DeviceModel { launch_overhead: lambda, ..Default::default() }
    }

    fn patch_tasks(n: usize, t: f64) -> Vec<DeviceTask> {
        let mut v = Vec::new();
        for s in 0..n {
            for kind in [TaskKind::TransferIn, TaskKind::Advance, TaskKind::TransferOut] {
                v.push(DeviceTask { kind, stream: s, cost: t, bytes: 8, patch_ids: vec![s as u64], deps: vec![] });
            }
        }
        v
    }

    #[test]
    fn one_patch_is_sum_of_costs() {
        let tl = simulate(patch_tasks(1, 2.0), &model(0.0), false).unwrap();
        assert_eq!(tl.span, 6.0);
    }

    #[test]
    fn engines_do_not_overlap() {
        let tl = simulate(patch_tasks(5, 1.5), &model(0.3), false).unwrap();
        for e in 0..3 {
            let mut iv: Vec<_> = tl
                .tasks
                .iter()
                .zip(&tl.spans)
                .filter(|(t, _)| engine_of(t.kind, 2) == e)
                .map(|(_, s)| (s.start, s.end))
                .collect();
            iv.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            assert!(iv.windows(2).all(|w| w[0].1 <= w[1].0));
        }
    }

    #[test]
    fn cycle_is_error() {
        let mut t = patch_tasks(1, 1.0);
        t[0].deps.push(2);
        assert!(matches!(simulate(t, &model(0.0), false), Err(AmrError::Scheduling(_))));
    }

    #[test]
    fn csv_header() {
        let tl = simulate(patch_tasks(1, 1.0), &model(0.0), false).unwrap();
        let mut buf = Vec::new();
        tl.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("task_id,kind,stream,start,end,bytes,patch_ids\n"));
        assert!(s.contains("transfer_in"));
    }
}
