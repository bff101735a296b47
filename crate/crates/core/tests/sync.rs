use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use waveamr::config::Boundary;
use waveamr::driver::Simulation;
use waveamr::geometry::{Axis, IndexBox, Side};
use waveamr::hierarchy::{cell_center, init_patch, Hierarchy, Level, Patch};
use waveamr::riemann::{Acoustics, Medium, RiemannSolver};
use waveamr::sync::{accumulate_c1, fill_ghost, rebuild_fix_structures, save_coarse_cells, update_fine_to_coarse};
use waveamr::AmrConfig;

fn config(mx: usize, my: usize, tile: usize, periodic: bool) -> AmrConfig {
    AmrConfig {
        mx,
        my,
        max_levels: 2,
        refinement_ratios: vec![2],
        max_patch_dim: tile,
        min_patch_dim: 1,
        boundary: [if periodic { Boundary::Periodic } else { Boundary::Outflow }; 4],
        ..Default::default()
    }
}

type Ic = dyn Fn(f64, f64, &mut [f64]) + Sync;

fn two_level(c: &AmrConfig, fine: &[IndexBox], coarse_ic: &Ic, fine_ic: &Ic) -> Hierarchy {
    let mut h = Hierarchy::create(c, 3, coarse_ic).unwrap();
    let (dx, dy, ext) = h.level_geometry(1);
    let mut patches = Vec::new();
    for b in fine {
        let mut p = Patch::new(h.fresh_id(), 1, *b, dx, dy, 3, 2);
        init_patch(&h.geom, &mut p, fine_ic);
        patches.push(p);
    }
    h.levels.push(Level::new(1, dx, dy, ext, patches));
    rebuild_fix_structures(&mut h, 1).unwrap();
    h
}

fn constant(v: [f64; 3]) -> impl Fn(f64, f64, &mut [f64]) + Sync {
    move |_, _, q: &mut [f64]| q.copy_from_slice(&v)
}

fn random_fill(h: &mut Hierarchy, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for level in &mut h.levels {
        for p in &mut level.patches {
            for j in 0..p.bbox.ny as i64 {
                for i in 0..p.bbox.nx as i64 {
                    for v in p.field.cell_mut(i, j) {
                        *v = rng.gen_range(-1.0..1.0);
                    }
                }
            }
        }
    }
}

#[test]
fn same_level_neighbour_ghosts_are_copies() {
    let c = config(20, 10, 10, true);
    let h = Hierarchy::create(&c, 3, &constant([1.5, -2.0, 0.25])).unwrap();
    assert_eq!(h.levels[0].patches.len(), 2);
    let f = fill_ghost(&h, 0, 0).unwrap();
    for j in -2..12 {
        for i in -2..12 {
            assert_eq!(f.cell(i, j), &[1.5, -2.0, 0.25]);
        }
    }
}

#[test]
fn outflow_ghosts_repeat_edge_cells() {
    let mut c = config(6, 5, 64, false);
    c.max_levels = 1;
    c.refinement_ratios.clear();
    let mut h = Hierarchy::create(&c, 3, &constant([0.0; 3])).unwrap();
    random_fill(&mut h, 3);
    h.levels[0].patches[0].field.set(0, 0, 2, 7.5);
    let f = fill_ghost(&h, 0, 0).unwrap();
    assert_eq!(f.get(0, -1, 2), 7.5);
    assert_eq!(f.get(0, -2, 2), 7.5);
    for j in 0..5 {
        for g in 1..=2 {
            assert_eq!(f.cell(-g, j), f.cell(0, j));
            assert_eq!(f.cell(5 + g, j), f.cell(5, j));
        }
    }
    for i in 0..6 {
        for g in 1..=2 {
            assert_eq!(f.cell(i, -g), f.cell(i, 0));
            assert_eq!(f.cell(i, 4 + g), f.cell(i, 4));
        }
    }
    assert_eq!(f.cell(-2, -2), f.cell(0, 0));
}

#[test]
fn coarse_interpolation_reproduces_linear_fields_in_space_and_time() {
    let c = config(16, 16, 64, false);
    let linear = |x: f64, y: f64, q: &mut [f64]| {
        q[0] = 2.0 * x + 3.0 * y;
        q[1] = -x + 0.5;
        q[2] = 4.0 * y;
    };
    let mut h = two_level(&c, &[IndexBox::new(10, 12, 8, 6)], &linear, &constant([0.0; 3]));
    // old data is the linear field, new data the same plus one
    let coarse = &mut h.levels[0];
    for p in &mut coarse.patches {
        p.old = Some(p.field.clone());
        for v in p.field.as_mut_slice() {
            *v += 1.0;
        }
    }
    coarse.old_time = 0.0;
    coarse.time = 1.0;
    h.levels[1].time = 0.25;
    let f = fill_ghost(&h, 1, 0).unwrap();
    let p = &h.levels[1].patches[0];
    let mut want = [0.0; 3];
    for j in -2..8 {
        for i in -2..10 {
            if !f.is_ghost(i, j) {
                continue;
            }
            let (x, y) = cell_center(&h.geom, p, i, j);
            linear(x, y, &mut want);
            for k in 0..3 {
                assert!((f.get(k, i, j) - (want[k] + 0.25)).abs() < 1e-12, "({i},{j}) k={k}");
            }
        }
    }
}

#[test]
fn ghost_fill_is_idempotent() {
    let c = config(24, 24, 8, true);
    let mut h = two_level(&c, &[IndexBox::new(4, 4, 12, 8), IndexBox::new(16, 4, 8, 16)], &constant([0.0; 3]), &constant([0.0; 3]));
    random_fill(&mut h, 5);
    for level in 0..2 {
        for k in 0..h.levels[level].patches.len() {
            let once = fill_ghost(&h, level, k).unwrap();
            let mut again = h.clone();
            again.levels[level].patches[k].field = once.clone();
            let twice = fill_ghost(&again, level, k).unwrap();
            assert_eq!(once.as_slice(), twice.as_slice());
        }
    }
}

#[test]
fn updating_averages_children() {
    let c = config(8, 8, 64, false);
    let mut h = two_level(&c, &[IndexBox::new(2, 2, 2, 2)], &constant([9.0; 3]), &constant([0.0; 3]));
    let fine = &mut h.levels[1].patches[0].field;
    for (n, (i, j)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
        fine.cell_mut(i, j).copy_from_slice(&[(n + 1) as f64; 3]);
    }
    update_fine_to_coarse(&mut h, 1).unwrap();
    assert_eq!(h.levels[0].value(0, 1, 1), Some(2.5));
    assert_eq!(h.levels[0].value(0, 0, 1), Some(9.0));
}

#[test]
fn updating_preserves_integrals_and_is_idempotent() {
    let c = config(16, 16, 6, true);
    let mut h = two_level(&c, &[IndexBox::new(2, 4, 10, 12), IndexBox::new(20, 0, 12, 6)], &constant([0.0; 3]), &constant([0.0; 3]));
    random_fill(&mut h, 9);
    update_fine_to_coarse(&mut h, 1).unwrap();
    let (cl, fl) = (&h.levels[0], &h.levels[1]);
    for fp in &fl.patches {
        let cbox = fp.bbox.coarsen(2);
        for k in 0..3 {
            let fine_sum: f64 = fp.field.interior_sum()[k] * fl.dx * fl.dy;
            let coarse_sum: f64 = cbox.iter().map(|(i, j)| cl.value(k, i, j).unwrap()).sum::<f64>() * cl.dx * cl.dy;
            assert!((fine_sum - coarse_sum).abs() < 1e-13);
        }
    }
    let before = h.levels[0].patches.iter().map(|p| p.field.as_slice().to_vec()).collect::<Vec<_>>();
    update_fine_to_coarse(&mut h, 1).unwrap();
    let after = h.levels[0].patches.iter().map(|p| p.field.as_slice().to_vec()).collect::<Vec<_>>();
    assert_eq!(before, after);
}

#[test]
fn updating_out_of_sync_levels_is_an_error() {
    let c = config(8, 8, 64, false);
    let mut h = two_level(&c, &[IndexBox::new(2, 2, 4, 4)], &constant([0.0; 3]), &constant([0.0; 3]));
    h.levels[1].time = 0.5;
    assert!(update_fine_to_coarse(&mut h, 1).is_err());
}

#[test]
fn coarse_cell_buffer_covers_projection_perimeter() {
    let c = config(16, 16, 64, false);
    let mut h = two_level(&c, &[IndexBox::new(8, 6, 10, 14)], &constant([3.0, 2.0, 1.0]), &constant([0.0; 3]));
    save_coarse_cells(&mut h, 1);
    let fix = &h.levels[1].patches[0].fix;
    // coarse projection is 5x7
    assert_eq!(fix.entries.len(), 2 * (5 + 7));
    assert_eq!(fix.requests.len(), 2 * fix.entries.len());
    for q in fix.saved.states.chunks(3) {
        assert_eq!(q, &[3.0, 2.0, 1.0]);
    }
}

#[test]
fn coarse_cell_buffer_reads_each_owner() {
    let c = config(16, 8, 8, false);
    let ic = |x: f64, _: f64, q: &mut [f64]| q.copy_from_slice(&[if x < 0.5 { 1.0 } else { 2.0 }, 0.0, 0.0]);
    let mut h = two_level(&c, &[IndexBox::new(10, 4, 12, 6)], &ic, &constant([0.0; 3]));
    assert_eq!(h.levels[0].patches.len(), 2);
    save_coarse_cells(&mut h, 1);
    let fix = &h.levels[1].patches[0].fix;
    for (e, entry) in fix.entries.iter().enumerate() {
        let owner = &h.levels[0].patches[entry.coarse_patch];
        assert!(owner.bbox.contains(entry.coarse_cell.0, entry.coarse_cell.1));
        let want = if entry.coarse_cell.0 < 8 { 1.0 } else { 2.0 };
        assert_eq!(fix.saved.states[3 * e], want);
    }
}

#[test]
fn c1_wave_form_equals_flux_difference() {
    let c = config(16, 16, 8, true);
    let mut h = two_level(&c, &[IndexBox::new(6, 6, 14, 10)], &constant([0.0; 3]), &constant([0.0; 3]));
    random_fill(&mut h, 21);
    save_coarse_cells(&mut h, 1);
    let solver = Acoustics::new(Medium::new(2.5, 0.7).unwrap());
    let (dxc, dyc) = (h.levels[0].dx, h.levels[0].dy);
    let dt = 0.003;
    let p = &mut h.levels[1].patches[0];
    accumulate_c1::<3, 2, _>(p, &solver, dt, dxc, dyc).unwrap();
    let fix = &p.fix;
    let (nx, ny) = (p.bbox.nx as i64, p.bbox.ny as i64);
    for (e, entry) in fix.entries.iter().enumerate() {
        let qc: [f64; 3] = fix.saved.states[3 * e..3 * e + 3].try_into().unwrap();
        let axis = entry.side.axis();
        let h_c = if axis == Axis::X { dxc } else { dyc };
        let mut want = [0.0; 3];
        for s in 0..2 {
            let a = entry.fine_start + s;
            let (i, j) = match entry.side {
                Side::Left => (0, a),
                Side::Right => (nx - 1, a),
                Side::Bottom => (a, 0),
                Side::Top => (a, ny - 1),
            };
            let qf: [f64; 3] = p.field.cell(i, j).try_into().unwrap();
            let (fc, ff) = (solver.flux(axis, &qc), solver.flux(axis, &qf));
            for k in 0..3 {
                want[k] += entry.sign * dt / (2.0 * h_c) * (ff[k] - fc[k]);
            }
        }
        for k in 0..3 {
            assert!((fix.buffer.c1[3 * e + k] - want[k]).abs() < 1e-14, "entry {e} k={k}");
        }
    }
}

#[test]
fn static_two_level_periodic_run_conserves() {
    let residual = |fix: bool| {
        let c = AmrConfig {
            conservation_fix: fix,
            regrid_interval: 10_000,
            cfl_desired: 0.8,
            ..config(32, 32, 16, true)
        };
        let ring = |x: f64, y: f64, q: &mut [f64]| {
            let r2 = (x - 0.4).powi(2) + (y - 0.55).powi(2);
            q.copy_from_slice(&[1.0 + (-r2 / 0.01).exp(), 0.3, -0.2]);
        };
        let mut h = two_level(&c, &[IndexBox::new(16, 16, 24, 20), IndexBox::new(40, 16, 8, 8)], &ring, &ring);
        update_fine_to_coarse(&mut h, 1).unwrap();
        let solver = Acoustics::new(Medium::new(1.0, 1.0).unwrap());
        let mut sim = Simulation::from_hierarchy(c, solver, h).unwrap();
        for _ in 0..20 {
            sim.step(1e30).unwrap();
        }
        assert_eq!(sim.hierarchy.levels[1].patches.len(), 2);
        sim.conservation_residual()
    };
    let (with, without) = (residual(true), residual(false));
    assert!(with < 1e-12, "{with}");
    assert!(without > 1e3 * with, "{without} vs {with}");
}

fn fine_boxes(slots: Vec<Option<(i64, i64, usize, usize)>>) -> Vec<IndexBox> {
    // 4x4 slots of 16x16 fine cells; boxes aligned to the coarse grid
    slots
        .into_iter()
        .enumerate()
        .filter_map(|(s, b)| {
            let (si, sj) = ((s % 4) as i64 * 16, (s / 4) as i64 * 16);
            b.map(|(i, j, w, h)| IndexBox::new(si + 2 * i, sj + 2 * j, 2 * w.min(8 - i as usize), 2 * h.min(8 - j as usize)))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn buffer_and_lookup_table_are_a_bijection(
        slots in prop::collection::vec(prop::option::of((0i64..7, 0i64..7, 1usize..9, 1usize..9)), 16),
        tile in 4usize..33,
        periodic in any::<bool>(),
    ) {
        let boxes = fine_boxes(slots);
        prop_assume!(!boxes.is_empty());
        let c = config(32, 32, tile, periodic);
        let h = two_level(&c, &boxes, &constant([0.0; 3]), &constant([0.0; 3]));
        let (coarse, fine) = (&h.levels[0], &h.levels[1]);
        let mut seen = vec![Vec::new(); fine.patches.len()];
        for (n, fp) in fine.patches.iter().enumerate() {
            seen[n] = vec![0usize; fp.fix.entries.len()];
        }
        for (cpi, cp) in coarse.patches.iter().enumerate() {
            prop_assert_eq!(cp.lookup.entries.len(), cp.lookup.requests.len());
            for l in &cp.lookup.entries {
                let entry = fine.patches[l.fine_patch].fix.entries[l.offset];
                seen[l.fine_patch][l.offset] += 1;
                prop_assert_eq!(entry.coarse_patch, cpi);
                prop_assert_eq!(entry.coarse_cell, (cp.bbox.i0 + l.cell.0, cp.bbox.j0 + l.cell.1));
                prop_assert_eq!(l.face, entry.side.opposite());
            }
        }
        for (n, fp) in fine.patches.iter().enumerate() {
            prop_assert!(seen[n].iter().all(|&k| k == 1));
            for e in &fp.fix.entries {
                // never a cell covered by the fine level
                prop_assert!(fine.owner(e.coarse_cell.0 * 2, e.coarse_cell.1 * 2).is_none());
            }
        }
    }
}
