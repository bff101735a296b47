use proptest::prelude::*;

use waveamr::config::Boundary;
use waveamr::geometry::IndexBox;
use waveamr::hierarchy::{Hierarchy, InitialCondition};
use waveamr::regrid::{buffer_flags, cluster_flags, create_hierarchy, flag_cells, regrid, ClusterParams, FlagField, RegridParams};
use waveamr::AmrConfig;

fn flat(_: f64, _: f64, q: &mut [f64]) {
    q.copy_from_slice(&[1.0, 0.0, 0.0]);
}

fn single_level(n: usize) -> AmrConfig {
    AmrConfig { mx: n, my: n, max_levels: 1, refinement_ratios: vec![], ..Default::default() }
}

#[test]
fn spike_flags_itself_and_edge_neighbours() {
    let mut h = Hierarchy::create(&single_level(12), 3, &|_, _, q: &mut [f64]| q.fill(0.0)).unwrap();
    h.levels[0].patches[0].field.set(0, 5, 5, 1.0);
    let flags = flag_cells(&h, 0, 0.5).unwrap();
    let mut want: Vec<(i64, i64)> = vec![(5, 5), (4, 5), (6, 5), (5, 4), (5, 6)];
    want.sort();
    let mut got: Vec<(i64, i64)> = flags.extent.iter().filter(|&(i, j)| flags.get(i, j)).collect();
    got.sort();
    assert_eq!(got, want);
}

#[test]
fn constant_field_and_infinite_tolerance_flag_nothing() {
    let h = Hierarchy::create(&single_level(10), 3, &flat).unwrap();
    assert_eq!(flag_cells(&h, 0, 0.0).unwrap().count(), 0);
    let mut h = h;
    h.levels[0].patches[0].field.set(0, 3, 3, 100.0);
    assert_eq!(flag_cells(&h, 0, f64::INFINITY).unwrap().count(), 0);
}

#[test]
fn buffer_of_nothing_is_nothing() {
    let h = Hierarchy::create(&single_level(10), 3, &flat).unwrap();
    let f = FlagField::new(IndexBox::new(0, 0, 10, 10));
    assert_eq!(buffer_flags(&f, &h.geom, 3).count(), 0);
    let mut one = f.clone();
    one.set(5, 5, true);
    assert_eq!(buffer_flags(&one, &h.geom, 0), one);
    let b = buffer_flags(&one, &h.geom, 1);
    assert_eq!(b.count(), 9);
    assert_eq!(b.count_in(&IndexBox::new(4, 4, 3, 3)), 9);
}

#[test]
fn full_rectangle_is_one_box() {
    let ext = IndexBox::new(0, 0, 30, 30);
    let mut f = FlagField::new(ext);
    f.mark_box(&IndexBox::new(5, 7, 10, 10));
    let boxes = cluster_flags(&f, &FlagField::filled(ext, true), &ClusterParams { cutoff: 0.9, max_dim: 100, min_dim: 2 });
    assert_eq!(boxes.len(), 1);
    assert_eq!(boxes[0].bbox, IndexBox::new(5, 7, 10, 10));
    assert_eq!(boxes[0].efficiency(), 1.0);
}

#[test]
fn two_blocks_across_a_gap_give_two_boxes() {
    let ext = IndexBox::new(0, 0, 30, 10);
    let mut f = FlagField::new(ext);
    f.mark_box(&IndexBox::new(2, 3, 4, 4));
    f.mark_box(&IndexBox::new(16, 3, 4, 4));
    let boxes = cluster_flags(&f, &FlagField::filled(ext, true), &ClusterParams { cutoff: 0.7, max_dim: 100, min_dim: 2 });
    assert_eq!(boxes.len(), 2);
    for b in &boxes {
        assert!(b.efficiency() >= 0.7);
    }
    assert_eq!(boxes.iter().map(|b| b.flagged).sum::<usize>(), 32);
}

fn flag_field() -> impl Strategy<Value = FlagField> {
    (8usize..40, 8usize..40, prop::collection::vec((0i64..40, 0i64..40, 1usize..8, 1usize..8), 0..6), prop::collection::vec((0i64..40, 0i64..40), 0..20))
        .prop_map(|(nx, ny, blobs, dots)| {
            let ext = IndexBox::new(0, 0, nx, ny);
            let mut f = FlagField::new(ext);
            for (i, j, w, h) in blobs {
                if let Some(b) = IndexBox::new(i, j, w, h).intersect(&ext) {
                    f.mark_box(&b);
                }
            }
            for (i, j) in dots {
                if ext.contains(i, j) {
                    f.set(i, j, true);
                }
            }
            f
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn clustering_postconditions(
        flags in flag_field(),
        cutoff in 0.3f64..0.95,
        max_dim in 2usize..30,
        min_dim in 1usize..5,
        restrict in prop::option::of((0i64..10, 0i64..10, 4usize..40, 4usize..40)),
    ) {
        let ext = flags.extent;
        let allowed = match restrict {
            None => FlagField::filled(ext, true),
            Some((i, j, w, h)) => {
                let mut a = FlagField::new(ext);
                if let Some(b) = IndexBox::new(i, j, w, h).intersect(&ext) {
                    a.mark_box(&b);
                }
                a
            }
        };
        let p = ClusterParams { cutoff, max_dim, min_dim };
        let boxes = cluster_flags(&flags, &allowed, &p);
        prop_assert_eq!(&boxes, &cluster_flags(&flags, &allowed, &p));
        let mut cover = vec![0u8; ext.cells()];
        for b in &boxes {
            prop_assert!(ext.contains_box(&b.bbox));
            prop_assert!(b.bbox.nx <= max_dim && b.bbox.ny <= max_dim);
            prop_assert!(b.flagged > 0);
            prop_assert!(b.efficiency() >= cutoff || b.bbox.nx.max(b.bbox.ny) < 2 * min_dim);
            for (i, j) in b.bbox.iter() {
                prop_assert!(allowed.get(i, j));
                cover[j as usize * ext.nx + i as usize] += 1;
            }
        }
        for (i, j) in ext.iter() {
            let c = cover[j as usize * ext.nx + i as usize];
            prop_assert!(c <= 1, "boxes overlap at ({}, {})", i, j);
            if flags.get(i, j) && allowed.get(i, j) {
                prop_assert_eq!(c, 1, "flag at ({}, {}) not covered", i, j);
            }
        }
    }
}

fn ring(x0: f64, y0: f64) -> impl Fn(f64, f64, &mut [f64]) + Sync {
    move |x, y, q: &mut [f64]| {
        let r = (x - x0).hypot(y - y0);
        q.copy_from_slice(&[(-((r - 0.2) / 0.05).powi(2)).exp(), 0.0, 0.0]);
    }
}

fn amr_config(periodic: bool) -> AmrConfig {
    AmrConfig {
        mx: 48,
        my: 40,
        max_patch_dim: 24,
        regrid_interval: 2,
        flag_tolerance: 0.02,
        boundary: [if periodic { Boundary::Periodic } else { Boundary::Outflow }; 4],
        ..Default::default()
    }
}

fn nesting_holds(h: &Hierarchy) -> bool {
    for l in 1..h.levels.len() {
        let r = h.ratio(l - 1);
        let coarse = &h.levels[l - 1];
        for p in &h.levels[l].patches {
            let cb = p.bbox.coarsen(r);
            assert_eq!(cb.refine(r), p.bbox, "fine patch not aligned");
            let margin = if l == 1 { 0 } else { 1 };
            for (i, j) in cb.grow(margin).iter() {
                match h.wrap(l - 1, i, j) {
                    Some((a, b)) if coarse.owner(a, b).is_none() => return false,
                    _ => {}
                }
            }
        }
    }
    true
}

fn audit_regrid(periodic: bool, ic: &InitialCondition, moved: &InitialCondition) {
    let c = amr_config(periodic);
    let mut h = create_hierarchy(&c, 3, ic).unwrap();
    assert_eq!(h.levels.len(), 3);
    assert!(nesting_holds(&h));
    // move the feature on every existing level, then regrid from the base
    for level in &mut h.levels {
        for p in &mut level.patches {
            waveamr::hierarchy::init_patch(&h.geom, p, moved);
        }
    }
    let before = h.clone();
    let params = RegridParams::from(&c);
    regrid(&mut h, 0, &params, None).unwrap();
    assert!(nesting_holds(&h));
    for l in 0..before.levels.len().min(h.levels.len() - 1) {
        let flags = buffer_flags(&flag_cells(&before, l, c.flag_tolerance).unwrap(), &before.geom, c.regrid_interval);
        let r = h.ratio(l) as i64;
        let fine = &h.levels[l + 1];
        for (i, j) in flags.extent.iter() {
            if flags.get(i, j) && (l == 0 || before.levels[l].owner(i, j).is_some()) {
                assert!(fine.owner(i * r, j * r).is_some(), "level {l} flag ({i},{j}) uncovered");
            }
        }
    }
}

#[test]
fn regrid_covers_moved_feature_outflow() {
    audit_regrid(false, &ring(0.4, 0.5), &ring(0.55, 0.45));
}

#[test]
fn regrid_covers_moved_feature_periodic() {
    audit_regrid(true, &ring(0.15, 0.5), &ring(0.05, 0.6));
}

#[test]
fn no_flags_removes_fine_levels() {
    let c = amr_config(false);
    let mut h = create_hierarchy(&c, 3, &ring(0.5, 0.5)).unwrap();
    assert!(h.levels.len() > 1);
    for level in &mut h.levels {
        for p in &mut level.patches {
            waveamr::hierarchy::init_patch(&h.geom, p, &flat);
        }
    }
    regrid(&mut h, 0, &RegridParams::from(&c), None).unwrap();
    assert_eq!(h.levels.len(), 1);
}

#[test]
fn unchanged_flags_give_identical_boxes() {
    let c = AmrConfig { max_levels: 2, refinement_ratios: vec![2], ..amr_config(true) };
    let mut h = create_hierarchy(&c, 3, &ring(0.5, 0.5)).unwrap();
    let boxes = |h: &Hierarchy| h.levels[1].patches.iter().map(|p| p.bbox).collect::<Vec<_>>();
    let first = boxes(&h);
    regrid(&mut h, 0, &RegridParams::from(&c), None).unwrap();
    assert_eq!(boxes(&h), first);
}

#[test]
fn new_patches_respect_patch_size_limits() {
    let c = AmrConfig { max_patch_dim: 16, min_patch_dim: 4, ..amr_config(false) };
    let h = create_hierarchy(&c, 3, &ring(0.5, 0.5)).unwrap();
    for level in &h.levels {
        for p in &level.patches {
            assert!(p.bbox.nx <= 16 && p.bbox.ny <= 16, "{:?}", p.bbox);
            assert!(level.extent.contains_box(&p.bbox));
        }
    }
}
