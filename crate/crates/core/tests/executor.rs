use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use waveamr::config::{Boundary, DeviceModel};
use waveamr::driver::AcousticsSimulation;
use waveamr::executor::{plan_level_launches, simulate, DeviceTask, MemoryPool, PatchWork, TaskKind};
use waveamr::AmrConfig;

fn engine(kind: TaskKind, copy_engines: usize) -> usize {
    match kind {
        TaskKind::TransferIn => 1,
        TaskKind::TransferOut => copy_engines.min(2),
        _ => 0,
    }
}

fn patches() -> impl Strategy<Value = Vec<PatchWork>> {
    prop::collection::vec((1usize..5000, 0usize..400), 1..12).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(k, (cells, edges))| PatchWork {
                id: k as u64,
                cells,
                in_bytes: cells * 24 + 100,
                out_bytes: cells * 24,
                interface_edges: edges,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn timeline_invariants(
        ps in patches(),
        merged in any::<bool>(),
        with_c1 in any::<bool>(),
        lambda in 0.0f64..50.0,
        copy_engines in 1usize..3,
        serial in any::<bool>(),
    ) {
        let model = DeviceModel { launch_overhead: lambda, copy_engines, ..Default::default() };
        let plan = plan_level_launches(&ps, merged, with_c1, &model);
        let tl = simulate(plan.clone(), &model, serial).unwrap();
        let s = &tl.spans;
        let eps = 1e-9;
        for (k, t) in tl.tasks.iter().enumerate() {
            prop_assert!(s[k].start + eps >= (k + 1) as f64 * lambda);
            prop_assert!((s[k].end - s[k].start - t.cost).abs() < eps);
            for &d in &t.deps {
                prop_assert!(s[k].start + eps >= s[d].end);
            }
            if serial && k > 0 {
                prop_assert!(s[k].start + eps >= s[k - 1].end);
            }
        }
        // stream FIFO
        for a in 0..plan.len() {
            for b in a + 1..plan.len() {
                if plan[a].stream == plan[b].stream {
                    prop_assert!(s[b].start + eps >= s[a].end);
                }
            }
        }
        // engine exclusivity
        for e in 0..3 {
            let mut busy: Vec<(f64, f64)> = plan
                .iter()
                .zip(s)
                .filter(|(t, _)| engine(t.kind, copy_engines) == e)
                .map(|(_, s)| (s.start, s.end))
                .collect();
            busy.sort_by(|x, y| x.0.total_cmp(&y.0));
            for w in busy.windows(2) {
                prop_assert!(w[1].0 + eps >= w[0].1);
            }
        }
        let copy_in: f64 = plan.iter().filter(|t| t.kind == TaskKind::TransferIn).map(|t| t.cost).sum();
        prop_assert!(tl.span + eps >= tl.compute_time);
        prop_assert!(tl.span + eps >= copy_in);
        prop_assert!(tl.hidden_copy_time <= tl.copy_time + eps);
        let serial_span = simulate(plan, &model, true).unwrap().span;
        prop_assert!(tl.span <= serial_span + eps);
    }
}

fn equal_patches(n: usize, t: usize) -> Vec<PatchWork> {
    (0..n as u64)
        .map(|id| PatchWork { id, cells: t, in_bytes: t, out_bytes: t - 8, interface_edges: 0 })
        .collect()
}

#[test]
fn one_patch_has_nothing_to_overlap() {
    let model = DeviceModel { launch_overhead: 0.0, bandwidth: 1.0, cell_cost: 1.0, ..Default::default() };
    let tl = simulate(plan_level_launches(&equal_patches(1, 500), true, false, &model), &model, false).unwrap();
    assert_eq!(tl.span, 1500.0);
    assert_eq!(tl.hidden_copy_time, 0.0);
}

#[test]
fn four_equal_patches_hide_all_but_two_transfers() {
    let model = DeviceModel { launch_overhead: 0.0, bandwidth: 1.0, cell_cost: 1.0, ..Default::default() };
    let tl = simulate(plan_level_launches(&equal_patches(4, 1000), true, false, &model), &model, false).unwrap();
    assert_eq!(tl.span, 6000.0);
    assert_eq!(tl.copy_time - tl.hidden_copy_time, 2000.0);
}

#[test]
fn one_shared_copy_engine_serialises_all_transfers() {
    let model = DeviceModel { launch_overhead: 0.0, bandwidth: 1.0, cell_cost: 1.0, copy_engines: 1, ..Default::default() };
    let tl = simulate(plan_level_launches(&equal_patches(4, 1000), true, false, &model), &model, false).unwrap();
    assert_eq!(tl.span, 8000.0);
}

#[test]
fn launch_bound_regime() {
    let model = DeviceModel { launch_overhead: 100.0, bandwidth: 1e12, cell_cost: 1e-9, ..Default::default() };
    let ps = equal_patches(20, 100);
    let plan = plan_level_launches(&ps, false, true, &model);
    let n = plan.len() as f64;
    let tl = simulate(plan, &model, false).unwrap();
    assert!((tl.span - n * 100.0).abs() < 1e-3, "{} vs {}", tl.span, n * 100.0);
}

#[test]
fn dependency_cycle_is_a_scheduling_error() {
    let t = |stream, deps| DeviceTask { kind: TaskKind::Advance, stream, cost: 1.0, bytes: 0, patch_ids: vec![], deps };
    let r = simulate(vec![t(0, vec![1]), t(1, vec![0])], &DeviceModel::default(), false);
    assert!(r.is_err());
}

#[test]
fn timeline_csv_has_one_row_per_task() {
    let model = DeviceModel::default();
    let tl = simulate(plan_level_launches(&equal_patches(3, 100), false, true, &model), &model, false).unwrap();
    let mut buf = Vec::new();
    tl.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "task_id,kind,stream,start,end,bytes,patch_ids");
    assert_eq!(lines.len(), tl.tasks.len() + 1);
}

#[test]
fn concurrent_acquirers_get_disjoint_reusable_blocks() {
    let pool = Arc::new(MemoryPool::new(1 << 22));
    let handles: Vec<_> = (0..8u64)
        .map(|w| {
            let pool = pool.clone();
            std::thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(w);
                (0..200).map(|_| pool.acquire(rng.gen_range(1..50_000)).unwrap()).collect::<Vec<_>>()
            })
        })
        .collect();
    let mut all: Vec<_> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    all.sort_by_key(|h| h.offset);
    for w in all.windows(2) {
        assert!(!w[0].overlaps(&w[1]), "{:?} {:?}", w[0], w[1]);
    }
    let reserved = pool.counters().system_reservations;
    let sizes: Vec<usize> = all.iter().map(|h| h.size).collect();
    for h in all {
        pool.release(h).unwrap();
    }
    let again: Vec<_> = sizes.iter().map(|&s| pool.acquire(s).unwrap()).collect();
    assert_eq!(pool.counters().system_reservations, reserved);
    assert_eq!(again.len(), sizes.len());
}

fn single_level_run(fix: bool) -> AcousticsSimulation {
    let c = AmrConfig {
        mx: 40,
        my: 30,
        max_levels: 1,
        refinement_ratios: vec![],
        max_patch_dim: 20,
        conservation_fix: fix,
        boundary: [Boundary::Periodic; 4],
        ..Default::default()
    };
    let mut sim = AcousticsSimulation::acoustics(c).unwrap();
    for _ in 0..3 {
        sim.step(1e30).unwrap();
    }
    sim
}

#[test]
fn write_bytes_match_closed_form() {
    let sim = single_level_run(true);
    let steps = sim.stats.coarse_steps as u64;
    let (mut solution, mut wave) = (0u64, 0u64);
    for p in &sim.hierarchy.levels[0].patches {
        let (nx, ny) = (p.bbox.nx as u64, p.bbox.ny as u64);
        solution += nx * ny * 3 * 8;
        wave += 2 * ((nx + 1) * ny + nx * (ny + 1)) * 3 * 8;
    }
    assert_eq!(sim.hierarchy.levels[0].patches.len(), 4);
    assert_eq!(sim.stats.writes.solution_bytes, steps * solution);
    assert_eq!(sim.stats.writes.wave_bytes, steps * wave);
    let ratio = sim.stats.writes.ratio();
    assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
}

#[test]
fn no_wave_bytes_without_flux_saving() {
    let sim = single_level_run(false);
    assert_eq!(sim.stats.writes.wave_bytes, 0);
    assert!(sim.stats.writes.solution_bytes > 0);
}
