//! Data exchange between patches and levels: ghost-cell filling,
//! fine-to-coarse averaging and the conservation fix at coarse-fine
//! interfaces.
//!
//! For a fine patch on level `L` the fix keeps one entry per coarse cell
//! face it touches. Three accumulators per entry are summed when the fix is
//! applied:
//!
//! * `c1`: fluctuations of the Riemann problem between the saved coarse state
//!   and each fine border cell, once per fine substep,
//! * `fine`: fine fluctuations and correction fluxes at the fine boundary
//!   edges,
//! * `coarse`: the coarse fluctuation and correction flux at the interface,
//!   which are replaced.

use crate::error::{AmrError, Result};
use crate::field::PatchField;
use crate::geometry::{Axis, IndexBox, Side};
use crate::hierarchy::{wrap_index, Hierarchy, Level, Patch};
use crate::riemann::RiemannSolver;
use crate::stepper::{EdgeFluxRecord, EdgeRequest};

/// One coarse cell face on the boundary of a fine patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixEntry {
    /// Side of the fine patch the coarse cell lies on.
    pub side: Side,
    /// Coarse cell in the coarser level's index space, wrapped into the domain.
    pub coarse_cell: (i64, i64),
    pub coarse_patch: usize,
    /// First fine interior index along the side.
    pub fine_start: i64,
    /// +1 when the coarse cell is on the high side of the fine patch.
    pub sign: f64,
}

/// Coarse states next to a fine patch, saved at the start of the coarse step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoarseCellBuffer {
    pub states: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConservationFixBuffer {
    pub c1: Vec<f64>,
    pub fine: Vec<f64>,
    pub coarse: Vec<f64>,
}

impl ConservationFixBuffer {
    fn resize(&mut self, n: usize) {
        for v in [&mut self.c1, &mut self.fine, &mut self.coarse] {
            v.clear();
            v.resize(n, 0.0);
        }
    }

    pub fn zero(&mut self) {
        for v in [&mut self.c1, &mut self.fine, &mut self.coarse] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Combined correction of entry `e`, component `k`.
    #[inline]
    pub fn total(&self, m: usize, e: usize, k: usize) -> f64 {
        let o = e * m + k;
        (self.c1[o] + self.fine[o]) + self.coarse[o]
    }
}

/// Fix state held by a fine patch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FineFix {
    pub entries: Vec<FixEntry>,
    pub ratio: usize,
    pub saved: CoarseCellBuffer,
    pub buffer: ConservationFixBuffer,
    /// Fine boundary edges, `ratio` per entry in entry order.
    pub requests: Vec<EdgeRequest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LookupEntry {
    /// Local interior cell of the coarse patch.
    pub cell: (i64, i64),
    /// Face of that cell shared with the fine patch.
    pub face: Side,
    pub fine_patch: usize,
    /// Entry index inside the fine patch's buffers.
    pub offset: usize,
}

/// Coarse-side view of the fix: which of this patch's cells border finer
/// patches and where their buffers live.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LookupTable {
    pub entries: Vec<LookupEntry>,
    /// Coarse interface edges, one per entry in entry order.
    pub requests: Vec<EdgeRequest>,
}

fn along(side: Side, i: i64, j: i64) -> i64 {
    match side.axis() {
        Axis::X => j,
        Axis::Y => i,
    }
}

/// Rebuild the fix entries of every patch on `fine_level` and the lookup
/// tables of the level below. Call after either level changed.
pub fn rebuild_fix_structures(h: &mut Hierarchy, fine_level: usize) -> Result<()> {
    let coarse_level = fine_level - 1;
    let r = h.ratio(coarse_level);
    let m = h.num_eqn;
    let (lo, hi) = h.levels.split_at_mut(fine_level);
    let coarse = &mut lo[coarse_level];
    let fine = &mut hi[0];
    for p in &mut coarse.patches {
        p.lookup = LookupTable::default();
    }
    let geom = h.geom.clone();
    for fp in 0..fine.patches.len() {
        let bbox = fine.patches[fp].bbox;
        let cbox = bbox.coarsen(r);
        debug_assert_eq!(cbox.refine(r), bbox, "fine patch not aligned to the coarse grid");
        let mut entries = Vec::new();
        let mut requests = Vec::new();
        for side in Side::ALL {
            let (di, dj) = side.outward();
            let cells: Vec<(i64, i64)> = match side {
                Side::Left => (cbox.j0..cbox.j1()).map(|j| (cbox.i0, j)).collect(),
                Side::Right => (cbox.j0..cbox.j1()).map(|j| (cbox.i1() - 1, j)).collect(),
                Side::Bottom => (cbox.i0..cbox.i1()).map(|i| (i, cbox.j0)).collect(),
                Side::Top => (cbox.i0..cbox.i1()).map(|i| (i, cbox.j1() - 1)).collect(),
            };
            for (ci, cj) in cells {
                let Some((ni, nj)) = wrap_index(&geom, &coarse.extent, ci + di, cj + dj) else {
                    continue;
                };
                if fine.owner(ni * r as i64, nj * r as i64).is_some() {
                    continue;
                }
                let Some(cp) = coarse.owner(ni, nj) else {
                    return Err(AmrError::Invariant(format!(
                        "coarse cell ({ni},{nj}) next to level-{fine_level} patch {} has no owner",
                        fine.patches[fp].id
                    )));
                };
                let fine_start = along(side, ci, cj) * r as i64
                    - along(side, bbox.i0, bbox.j0);
                let offset = entries.len();
                entries.push(FixEntry {
                    side,
                    coarse_cell: (ni, nj),
                    coarse_patch: cp,
                    fine_start,
                    sign: if side.is_high() { 1.0 } else { -1.0 },
                });
                for s in 0..r as i64 {
                    let a = fine_start + s;
                    requests.push(match side {
                        Side::Left => EdgeRequest { axis: Axis::X, i: 0, j: a },
                        Side::Right => EdgeRequest { axis: Axis::X, i: bbox.nx as i64, j: a },
                        Side::Bottom => EdgeRequest { axis: Axis::Y, i: a, j: 0 },
                        Side::Top => EdgeRequest { axis: Axis::Y, i: a, j: bbox.ny as i64 },
                    });
                }
                let cpatch = &mut coarse.patches[cp];
                let cell = (ni - cpatch.bbox.i0, nj - cpatch.bbox.j0);
                let face = side.opposite();
                cpatch.lookup.entries.push(LookupEntry { cell, face, fine_patch: fp, offset });
                cpatch.lookup.requests.push(match face {
                    Side::Left => EdgeRequest { axis: Axis::X, i: cell.0, j: cell.1 },
                    Side::Right => EdgeRequest { axis: Axis::X, i: cell.0 + 1, j: cell.1 },
                    Side::Bottom => EdgeRequest { axis: Axis::Y, i: cell.0, j: cell.1 },
                    Side::Top => EdgeRequest { axis: Axis::Y, i: cell.0, j: cell.1 + 1 },
                });
            }
        }
        let fix = &mut fine.patches[fp].fix;
        fix.ratio = r;
        fix.saved.states = vec![0.0; entries.len() * m];
        fix.buffer.resize(entries.len() * m);
        fix.entries = entries;
        fix.requests = requests;
    }
    Ok(())
}

/// Copy the current coarse state next to every fine patch of `fine_level`
/// and zero the accumulators. Start of a coarse step.
pub fn save_coarse_cells(h: &mut Hierarchy, fine_level: usize) {
    let m = h.num_eqn;
    let (lo, hi) = h.levels.split_at_mut(fine_level);
    let coarse = &lo[fine_level - 1];
    for p in &mut hi[0].patches {
        let fix = &mut p.fix;
        for (e, entry) in fix.entries.iter().enumerate() {
            let cp = &coarse.patches[entry.coarse_patch];
            let q = cp.field.cell(entry.coarse_cell.0 - cp.bbox.i0, entry.coarse_cell.1 - cp.bbox.j0);
            fix.saved.states[e * m..(e + 1) * m].copy_from_slice(q);
        }
        fix.buffer.zero();
    }
}

/// Fix weight for a fine edge: `dt_f * fine edge length / coarse cell area`.
#[inline]
fn fine_weight(axis: Axis, ratio: usize, dt_fine: f64, dxc: f64, dyc: f64) -> f64 {
    match axis {
        Axis::X => dt_fine / (dxc * ratio as f64),
        Axis::Y => dt_fine / (dyc * ratio as f64),
    }
}

fn load<const M: usize>(s: &[f64]) -> [f64; M] {
    let mut q = [0.0; M];
    q.copy_from_slice(&s[..M]);
    q
}

/// Riemann problems between the saved coarse states and the fine border
/// cells at the start of a fine substep.
pub fn accumulate_c1<const M: usize, const W: usize, S: RiemannSolver<M, W>>(
    patch: &mut Patch,
    solver: &S,
    dt_fine: f64,
    dxc: f64,
    dyc: f64,
) -> Result<()> {
    let fix = &mut patch.fix;
    let r = fix.ratio;
    let (nx, ny) = (patch.bbox.nx as i64, patch.bbox.ny as i64);
    for (e, entry) in fix.entries.iter().enumerate() {
        let qc: [f64; M] = load(&fix.saved.states[e * M..]);
        // flux difference f(coarse) - f(fine) seen from the coarse cell
        let w = -fine_weight(entry.side.axis(), r, dt_fine, dxc, dyc);
        for s in 0..r as i64 {
            let a = entry.fine_start + s;
            let (i, j) = match entry.side {
                Side::Left => (0, a),
                Side::Right => (nx - 1, a),
                Side::Bottom => (a, 0),
                Side::Top => (a, ny - 1),
            };
            let qf: [f64; M] = load(patch.field.cell(i, j));
            let (ql, qr) = if entry.side.is_high() { (qf, qc) } else { (qc, qf) };
            let out = solver.solve_normal_checked(entry.side.axis(), &ql, &qr)?;
            let dst = &mut fix.buffer.c1[e * M..(e + 1) * M];
            for k in 0..M {
                dst[k] += w * (out.amdq[k] + out.apdq[k]);
            }
        }
    }
    Ok(())
}

fn check_edge(expected: &EdgeRequest, got: &EdgeRequest) -> Result<()> {
    if expected != got {
        return Err(AmrError::Invariant(format!(
            "edge record {got:?} does not match interface edge {expected:?}"
        )));
    }
    Ok(())
}

/// Fine fluctuations into the patch plus the signed correction flux at every
/// fine boundary edge of one substep. `records` answer `patch.fix.requests`.
pub fn accumulate_fine_side<const M: usize>(
    patch: &mut Patch,
    records: &[EdgeFluxRecord<M>],
    dt_fine: f64,
    dxc: f64,
    dyc: f64,
) -> Result<()> {
    let fix = &mut patch.fix;
    if records.len() != fix.requests.len() {
        return Err(AmrError::Invariant(format!(
            "{} fine edge records for {} interface edges",
            records.len(),
            fix.requests.len()
        )));
    }
    let r = fix.ratio;
    for (e, entry) in fix.entries.iter().enumerate() {
        let w = fine_weight(entry.side.axis(), r, dt_fine, dxc, dyc);
        for s in 0..r {
            let n = e * r + s;
            let rec = &records[n];
            check_edge(&fix.requests[n], &rec.edge)?;
            let inward = if entry.side.is_high() { &rec.amdq } else { &rec.apdq };
            let dst = &mut fix.buffer.fine[e * M..(e + 1) * M];
            for k in 0..M {
                dst[k] += w * (inward[k] + entry.sign * rec.flux[k]);
            }
        }
    }
    Ok(())
}

/// Coarse fluctuation into the coarse cell and the signed coarse correction
/// flux, to be replaced by the fine contributions. `records` answer
/// `lookup.requests` of one coarse patch.
pub fn accumulate_coarse_side<const M: usize>(
    fine_patches: &mut [Patch],
    lookup: &LookupTable,
    records: &[EdgeFluxRecord<M>],
    dt_coarse: f64,
    dxc: f64,
    dyc: f64,
) -> Result<()> {
    if records.len() != lookup.requests.len() {
        return Err(AmrError::Invariant(format!(
            "{} coarse edge records for {} interface edges",
            records.len(),
            lookup.requests.len()
        )));
    }
    for (n, le) in lookup.entries.iter().enumerate() {
        let rec = &records[n];
        check_edge(&lookup.requests[n], &rec.edge)?;
        let lambda = match le.face.axis() {
            Axis::X => dt_coarse / dxc,
            Axis::Y => dt_coarse / dyc,
        };
        let fix = &mut fine_patches[le.fine_patch].fix;
        let sign = fix.entries[le.offset].sign;
        let into = if le.face.is_high() { &rec.amdq } else { &rec.apdq };
        let dst = &mut fix.buffer.coarse[le.offset * M..(le.offset + 1) * M];
        for k in 0..M {
            dst[k] += lambda * (into[k] - sign * rec.flux[k]);
        }
    }
    Ok(())
}

/// Add the accumulated corrections to the coarse cells bordering
/// `fine_level` and zero the buffers.
pub fn apply_conservation_fix(h: &mut Hierarchy, fine_level: usize) {
    let m = h.num_eqn;
    let (lo, hi) = h.levels.split_at_mut(fine_level);
    let coarse = &mut lo[fine_level - 1];
    let fine = &mut hi[0];
    for cp in &mut coarse.patches {
        for le in &cp.lookup.entries {
            let buf = &fine.patches[le.fine_patch].fix.buffer;
            let q = cp.field.cell_mut(le.cell.0, le.cell.1);
            for (k, v) in q.iter_mut().enumerate() {
                *v += buf.total(m, le.offset, k);
            }
        }
    }
    for p in &mut fine.patches {
        p.fix.buffer.zero();
    }
}

/// Replace coarse cells covered by `fine_level` with the average of their
/// fine children.
pub fn update_fine_to_coarse(h: &mut Hierarchy, fine_level: usize) -> Result<()> {
    let r = h.ratio(fine_level - 1);
    let m = h.num_eqn;
    let (lo, hi) = h.levels.split_at_mut(fine_level);
    let coarse = &mut lo[fine_level - 1];
    let fine = &hi[0];
    let tol = 1e-12 * coarse.time.abs().max(1.0);
    if (coarse.time - fine.time).abs() > tol {
        return Err(AmrError::Sequencing(format!(
            "averaging level {fine_level} at t={} onto level {} at t={}",
            fine.time,
            fine_level - 1,
            coarse.time
        )));
    }
    let inv = 1.0 / (r * r) as f64;
    let ri = r as i64;
    let mut acc = vec![0.0; m];
    for fp in &fine.patches {
        let cbox = fp.bbox.coarsen(r);
        for cp in &mut coarse.patches {
            let Some(overlap) = cp.bbox.intersect(&cbox) else { continue };
            for (ci, cj) in overlap.iter() {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for b in 0..ri {
                    for a in 0..ri {
                        let q = fp.field.cell(ci * ri + a - fp.bbox.i0, cj * ri + b - fp.bbox.j0);
                        for k in 0..m {
                            acc[k] += q[k];
                        }
                    }
                }
                let dst = cp.field.cell_mut(ci - cp.bbox.i0, cj - cp.bbox.j0);
                for k in 0..m {
                    dst[k] = acc[k] * inv;
                }
            }
        }
    }
    Ok(())
}

/// Data of a level cell at the level's current time, or at `old_time` when
/// `old` is set.
#[inline]
fn level_cell(level: &Level, old: bool, i: i64, j: i64) -> Option<&[f64]> {
    let p = &level.patches[level.owner(i, j)?];
    let f = if old { p.old.as_ref().unwrap_or(&p.field) } else { &p.field };
    Some(f.cell(i - p.bbox.i0, j - p.bbox.j0))
}

/// Linear reconstruction of the coarse solution at fine cell `(fi, fj)`.
/// Slopes are central where both neighbours exist, one-sided where only one
/// does.
pub(crate) fn coarse_sample(h: &Hierarchy, cl: usize, old: bool, fi: i64, fj: i64, out: &mut [f64]) -> Result<()> {
    let r = h.ratio(cl);
    let level = &h.levels[cl];
    let ri = r as i64;
    let (ci, cj) = (fi.div_euclid(ri), fj.div_euclid(ri));
    let xi = (fi.rem_euclid(ri) as f64 + 0.5) / r as f64 - 0.5;
    let eta = (fj.rem_euclid(ri) as f64 + 0.5) / r as f64 - 0.5;
    let at = |i: i64, j: i64| wrap_index(&h.geom, &level.extent, i, j).and_then(|(a, b)| level_cell(level, old, a, b));
    let q0 = at(ci, cj).ok_or_else(|| {
        AmrError::Invariant(format!("no level-{cl} data under level-{} cell ({fi},{fj})", cl + 1))
    })?;
    let (w, e, s, n) = (at(ci - 1, cj), at(ci + 1, cj), at(ci, cj - 1), at(ci, cj + 1));
    let slope = |lo: Option<&[f64]>, hi: Option<&[f64]>, k: usize| match (lo, hi) {
        (Some(a), Some(b)) => 0.5 * (b[k] - a[k]),
        (Some(a), None) => q0[k] - a[k],
        (None, Some(b)) => b[k] - q0[k],
        (None, None) => 0.0,
    };
    for (k, o) in out.iter_mut().enumerate() {
        *o = q0[k] + xi * slope(w, e, k) + eta * slope(s, n, k);
    }
    Ok(())
}

/// Coarse data interpolated in space and linearly in time to `t`.
fn coarse_interp(h: &Hierarchy, cl: usize, t: f64, fi: i64, fj: i64, out: &mut [f64], tmp: &mut [f64]) -> Result<()> {
    let level = &h.levels[cl];
    let span = level.time - level.old_time;
    coarse_sample(h, cl, false, fi, fj, out)?;
    if span > 0.0 {
        let alpha = (t - level.old_time) / span;
        if alpha < 1.0 {
            coarse_sample(h, cl, true, fi, fj, tmp)?;
            for (o, v) in out.iter_mut().zip(tmp.iter()) {
                *o = *v + alpha * (*o - *v);
            }
        }
    }
    Ok(())
}

/// Copy of a patch's field with every ghost cell filled: from same-level
/// neighbours, by interpolation from the coarser level, then by the
/// physical boundary conditions.
pub fn fill_ghost(h: &Hierarchy, level: usize, patch: usize) -> Result<PatchField> {
    let lev = &h.levels[level];
    let p = &lev.patches[patch];
    let mut f = p.field.clone();
    let g = f.ghost_width() as i64;
    let (nx, ny) = (p.bbox.nx as i64, p.bbox.ny as i64);
    let m = f.num_eqn();
    let t = lev.time;
    let mut outside = Vec::new();
    let mut buf = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    for j in -g..ny + g {
        for i in -g..nx + g {
            if !f.is_ghost(i, j) {
                continue;
            }
            let (gi, gj) = (p.bbox.i0 + i, p.bbox.j0 + j);
            let Some((wi, wj)) = wrap_index(&h.geom, &lev.extent, gi, gj) else {
                outside.push((i, j));
                continue;
            };
            if let Some(src) = lev.owner(wi, wj) {
                let sp = &lev.patches[src];
                let q = sp.field.cell(wi - sp.bbox.i0, wj - sp.bbox.j0);
                f.cell_mut(i, j).copy_from_slice(q);
            } else if level == 0 {
                return Err(AmrError::Invariant(format!("base-level cell ({wi},{wj}) has no patch")));
            } else {
                coarse_interp(h, level - 1, t, wi, wj, &mut buf, &mut tmp)?;
                f.cell_mut(i, j).copy_from_slice(&buf);
            }
        }
    }
    // outflow: zero-order extrapolation from the nearest cell inside the domain
    let ext = lev.extent;
    for (i, j) in outside {
        let (mut gi, mut gj) = (p.bbox.i0 + i, p.bbox.j0 + j);
        if !h.geom.periodic_x() {
            gi = gi.clamp(ext.i0, ext.i1() - 1);
        }
        if !h.geom.periodic_y() {
            gj = gj.clamp(ext.j0, ext.j1() - 1);
        }
        buf.copy_from_slice(f.cell(gi - p.bbox.i0, gj - p.bbox.j0));
        f.cell_mut(i, j).copy_from_slice(&buf);
    }
    Ok(f)
}

/// Fill ghosts of every patch on `level` from data as it was before any of
/// them changed.
pub fn fill_level_ghosts(h: &mut Hierarchy, level: usize) -> Result<()> {
    use rayon::prelude::*;
    let n = h.levels[level].patches.len();
    let filled: Vec<PatchField> = (0..n)
        .into_par_iter()
        .map(|k| fill_ghost(h, level, k))
        .collect::<Result<_>>()?;
    for (p, f) in h.levels[level].patches.iter_mut().zip(filled) {
        p.field = f;
    }
    Ok(())
}

/// Boxes of `level` as a union, for tests and diagnostics.
pub fn level_boxes(h: &Hierarchy, level: usize) -> Vec<IndexBox> {
    h.levels[level].patches.iter().map(|p| p.bbox).collect()
}
