//! Error flagging, flag buffering, Berger-Rigoutsos clustering and
//! construction of new refined levels.

use crate::config::AmrConfig;
use crate::error::Result;
use crate::geometry::IndexBox;
use crate::hierarchy::{init_patch, wrap_index, Geometry, Hierarchy, InitialCondition, Level, Patch};
use crate::sync::{fill_ghost, rebuild_fix_structures};

/// Dense boolean mask over a level's index extent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlagField {
    pub extent: IndexBox,
    flags: Vec<bool>,
}

impl FlagField {
    pub fn new(extent: IndexBox) -> Self {
        FlagField { extent, flags: vec![false; extent.cells()] }
    }

    pub fn filled(extent: IndexBox, value: bool) -> Self {
        FlagField { extent, flags: vec![value; extent.cells()] }
    }

    #[inline]
    fn idx(&self, i: i64, j: i64) -> usize {
        (j - self.extent.j0) as usize * self.extent.nx + (i - self.extent.i0) as usize
    }

    #[inline]
    pub fn get(&self, i: i64, j: i64) -> bool {
        self.extent.contains(i, j) && self.flags[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: i64, j: i64, v: bool) {
        let o = self.idx(i, j);
        self.flags[o] = v;
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn count_in(&self, b: &IndexBox) -> usize {
        b.iter().filter(|&(i, j)| self.get(i, j)).count()
    }

    pub fn and(&mut self, other: &FlagField) {
        for (a, b) in self.flags.iter_mut().zip(&other.flags) {
            *a &= *b;
        }
    }

    pub fn mark_box(&mut self, b: &IndexBox) {
        if let Some(b) = b.intersect(&self.extent) {
            for (i, j) in b.iter() {
                self.set(i, j, true);
            }
        }
    }
}

/// Flag cells whose pressure differs from any of its four neighbours by more
/// than `tolerance`.
pub fn flag_cells(h: &Hierarchy, level: usize, tolerance: f64) -> Result<FlagField> {
    let lev = &h.levels[level];
    let mut flags = FlagField::new(lev.extent);
    for k in 0..lev.patches.len() {
        let f = fill_ghost(h, level, k)?;
        let b = lev.patches[k].bbox;
        for j in 0..b.ny as i64 {
            for i in 0..b.nx as i64 {
                let p = f.get(0, i, j);
                let d = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .map(|&(di, dj)| (f.get(0, i + di, j + dj) - p).abs())
                    .fold(0.0, f64::max);
                if d > tolerance {
                    flags.set(b.i0 + i, b.j0 + j, true);
                }
            }
        }
    }
    Ok(flags)
}

/// Separable max (`dilate`) or min (erode) filter of half-width `n`.
/// Out-of-domain neighbours wrap in periodic directions and are otherwise
/// ignored.
fn morph(src: &FlagField, geom: &Geometry, n: usize, dilate: bool) -> FlagField {
    let ext = src.extent;
    let n = n as i64;
    let pass = |f: &FlagField, di: i64, dj: i64| {
        let mut out = FlagField::new(ext);
        for (i, j) in ext.iter() {
            let mut v = f.get(i, j);
            for s in -n..=n {
                if let Some((a, b)) = wrap_index(geom, &ext, i + s * di, j + s * dj) {
                    if dilate {
                        v |= f.get(a, b);
                    } else {
                        v &= f.get(a, b);
                    }
                }
            }
            out.set(i, j, v);
        }
        out
    };
    pass(&pass(src, 1, 0), 0, 1)
}

/// Grow flagged regions by `n` cells in every direction, diagonals included.
pub fn buffer_flags(flags: &FlagField, geom: &Geometry, n: usize) -> FlagField {
    if n == 0 {
        return flags.clone();
    }
    morph(flags, geom, n, true)
}

pub fn erode(mask: &FlagField, geom: &Geometry, n: usize) -> FlagField {
    morph(mask, geom, n, false)
}

pub fn refine_mask(mask: &FlagField, ratio: usize) -> FlagField {
    let mut out = FlagField::new(mask.extent.refine(ratio));
    let r = ratio as i64;
    let ext = out.extent;
    for (i, j) in ext.iter() {
        out.set(i, j, mask.get(i.div_euclid(r), j.div_euclid(r)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub cutoff: f64,
    /// Largest box side, in the clustered level's cells.
    pub max_dim: usize,
    /// Smallest side produced by an inflection cut or bisection.
    pub min_dim: usize,
}

/// A clustered box with its flag statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterBox {
    pub bbox: IndexBox,
    pub flagged: usize,
}

impl ClusterBox {
    pub fn efficiency(&self) -> f64 {
        self.flagged as f64 / self.bbox.cells() as f64
    }
}

fn shrink(flags: &FlagField, b: &IndexBox) -> Option<IndexBox> {
    let (mut i0, mut i1, mut j0, mut j1) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for (i, j) in b.iter() {
        if flags.get(i, j) {
            i0 = i0.min(i);
            i1 = i1.max(i);
            j0 = j0.min(j);
            j1 = j1.max(j);
        }
    }
    (i0 <= i1).then(|| IndexBox::new(i0, j0, (i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize))
}

fn signatures(flags: &FlagField, b: &IndexBox) -> (Vec<usize>, Vec<usize>) {
    let mut sx = vec![0; b.nx];
    let mut sy = vec![0; b.ny];
    for (i, j) in b.iter() {
        if flags.get(i, j) {
            sx[(i - b.i0) as usize] += 1;
            sy[(j - b.j0) as usize] += 1;
        }
    }
    (sx, sy)
}

/// Split position (cells in the lower part) in one direction, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cut {
    x_dir: bool,
    at: usize,
}

fn split(b: &IndexBox, c: Cut) -> (IndexBox, IndexBox) {
    if c.x_dir {
        (
            IndexBox::new(b.i0, b.j0, c.at, b.ny),
            IndexBox::new(b.i0 + c.at as i64, b.j0, b.nx - c.at, b.ny),
        )
    } else {
        (
            IndexBox::new(b.i0, b.j0, b.nx, c.at),
            IndexBox::new(b.i0, b.j0 + c.at as i64, b.nx, b.ny - c.at),
        )
    }
}

/// Twice the distance of cut `at` from the centre of a side of length `n`.
fn off_centre(at: usize, n: usize) -> usize {
    (2 * at).abs_diff(n)
}

fn hole_cut(sx: &[usize], sy: &[usize]) -> Option<Cut> {
    let mut best: Option<(usize, Cut)> = None;
    for (x_dir, s) in [(true, sx), (false, sy)] {
        for (k, &v) in s.iter().enumerate() {
            if v == 0 {
                let d = off_centre(k, s.len());
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, Cut { x_dir, at: k }));
                }
            }
        }
    }
    best.map(|(_, c)| c)
}

fn inflection_cut(sx: &[usize], sy: &[usize], min_dim: usize) -> Option<Cut> {
    let mut best: Option<(i64, usize, Cut)> = None;
    for (x_dir, s) in [(true, sx), (false, sy)] {
        let n = s.len();
        if n < 4 {
            continue;
        }
        let lap: Vec<i64> = (1..n - 1)
            .map(|k| s[k - 1] as i64 - 2 * s[k] as i64 + s[k + 1] as i64)
            .collect();
        for k in 0..lap.len() - 1 {
            let (a, b) = (lap[k], lap[k + 1]);
            if a.signum() * b.signum() >= 0 {
                continue;
            }
            // cut between signature cells k+1 and k+2
            let at = k + 2;
            if at < min_dim || n - at < min_dim {
                continue;
            }
            let strength = (b - a).abs();
            let d = off_centre(at, n);
            let better = match best {
                None => true,
                Some((bs, bd, _)) => strength > bs || (strength == bs && d < bd),
            };
            if better {
                best = Some((strength, d, Cut { x_dir, at }));
            }
        }
    }
    best.map(|(_, _, c)| c)
}

/// Berger-Rigoutsos clustering of `flags` restricted to `allowed`.
///
/// Every flagged allowed cell ends up in exactly one box; boxes are
/// disjoint, inside `allowed`, and no side exceeds `max_dim`.
pub fn cluster_flags(flags: &FlagField, allowed: &FlagField, p: &ClusterParams) -> Vec<ClusterBox> {
    let mut f = flags.clone();
    f.and(allowed);
    let mut out = Vec::new();
    let mut stack = vec![f.extent];
    while let Some(b) = stack.pop() {
        let Some(b) = shrink(&f, &b) else { continue };
        let flagged = f.count_in(&b);
        let cb = ClusterBox { bbox: b, flagged };
        let fits = b.nx <= p.max_dim && b.ny <= p.max_dim;
        let inside = b.iter().all(|(i, j)| allowed.get(i, j));
        let forced = !fits || !inside;
        if !forced && cb.efficiency() >= p.cutoff {
            out.push(cb);
            continue;
        }
        let (sx, sy) = signatures(&f, &b);
        let min = if forced { 1 } else { p.min_dim.max(1) };
        let cut = hole_cut(&sx, &sy).or_else(|| inflection_cut(&sx, &sy, min)).or_else(|| {
            let x_dir = b.nx >= b.ny;
            let n = if x_dir { b.nx } else { b.ny };
            (n >= 2 * min).then_some(Cut { x_dir, at: n / 2 })
        });
        match cut {
            Some(c) => {
                let (lo, hi) = split(&b, c);
                // low half is processed first
                stack.push(hi);
                stack.push(lo);
            }
            None => out.push(cb),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegridParams {
    pub cutoff: f64,
    pub max_patch_dim: usize,
    pub min_patch_dim: usize,
    pub buffer: usize,
    pub flag_tolerance: f64,
}

impl From<&AmrConfig> for RegridParams {
    fn from(c: &AmrConfig) -> Self {
        RegridParams {
            cutoff: c.cutoff,
            max_patch_dim: c.max_patch_dim,
            min_patch_dim: c.min_patch_dim,
            buffer: c.regrid_interval,
            flag_tolerance: c.flag_tolerance,
        }
    }
}

/// Rebuild every level finer than `base` from new flags. When `ic` is given
/// new patches are initialized from it, otherwise from old patches of the
/// same level or by interpolation from the next coarser new level.
///
/// The hierarchy gains at most one level per call.
pub fn regrid(h: &mut Hierarchy, base: usize, params: &RegridParams, ic: Option<&InitialCondition>) -> Result<()> {
    let top = h.finest().min(h.max_levels.saturating_sub(2));
    if base > top || h.max_levels < 2 {
        return Ok(());
    }
    // allowed regions for the boxes of level l+1, in level-l index space
    let mut allowed: Vec<FlagField> = Vec::new();
    let mut union = FlagField::new(h.levels[base].extent);
    for p in &h.levels[base].patches {
        union.mark_box(&p.bbox);
    }
    allowed.push(erode(&union, &h.geom, 1));
    for l in base + 1..=top {
        let prev = erode(&allowed[l - 1 - base], &h.geom, 1);
        allowed.push(refine_mask(&prev, h.ratio(l - 1)));
    }

    let mut new_boxes: Vec<Vec<IndexBox>> = vec![Vec::new(); top - base + 1];
    for l in (base..=top).rev() {
        let r = h.ratio(l);
        let mut flags = flag_cells(h, l, params.flag_tolerance)?;
        flags = buffer_flags(&flags, &h.geom, params.buffer);
        if l < top {
            let r1 = h.ratio(l + 1) as i64;
            let (_, _, ext1) = h.level_geometry(l + 1);
            let mut nest = FlagField::new(ext1);
            for b in &new_boxes[l + 1 - base] {
                nest.mark_box(&b.coarsen(r1 as usize));
            }
            let nest = buffer_flags(&nest, &h.geom, 1);
            for (i, j) in ext1.iter() {
                if nest.get(i, j) {
                    flags.set(i.div_euclid(r as i64), j.div_euclid(r as i64), true);
                }
            }
        }
        let cp = ClusterParams {
            cutoff: params.cutoff,
            max_dim: (params.max_patch_dim / r).max(1),
            min_dim: params.min_patch_dim.div_ceil(r).max(1),
        };
        new_boxes[l - base] = cluster_flags(&flags, &allowed[l - base], &cp)
            .into_iter()
            .map(|c| c.bbox.refine(r))
            .collect();
    }

    let mut old_levels: Vec<Level> = h.levels.drain(base + 1..).collect();
    let t = h.levels[base].time;
    for (k, boxes) in new_boxes.into_iter().enumerate() {
        let l = base + 1 + k;
        if boxes.is_empty() {
            break;
        }
        let (dx, dy, ext) = h.level_geometry(l);
        let patches = boxes
            .iter()
            .map(|b| {
                let id = h.fresh_id();
                let mut p = Patch::new(id, l, *b, dx, dy, h.num_eqn, h.ghost_width);
                p.field.time = t;
                p
            })
            .collect();
        let mut level = Level::new(l, dx, dy, ext, patches);
        level.time = t;
        level.old_time = t;
        match ic {
            Some(ic) => {
                for p in &mut level.patches {
                    init_patch(&h.geom, p, ic);
                }
            }
            None => fill_new_level(h, &mut level, old_levels.get(k))?,
        }
        h.levels.push(level);
        rebuild_fix_structures(h, l)?;
    }
    old_levels.clear();
    for l in base..h.levels.len() {
        h.levels[l].steps_since_regrid = 0;
    }
    Ok(())
}

/// Copy from the old patches of the same level where they overlap,
/// otherwise interpolate from the new coarser level.
fn fill_new_level(h: &Hierarchy, level: &mut Level, old: Option<&Level>) -> Result<()> {
    let cl = level.index - 1;
    let m = h.num_eqn;
    let mut buf = vec![0.0; m];
    for p in &mut level.patches {
        for (gi, gj) in p.bbox.iter() {
            let (i, j) = (gi - p.bbox.i0, gj - p.bbox.j0);
            if let Some(q) = old.and_then(|o| o.owner(gi, gj).map(|k| (o, k))).map(|(o, k)| {
                let op = &o.patches[k];
                op.field.cell(gi - op.bbox.i0, gj - op.bbox.j0)
            }) {
                p.field.cell_mut(i, j).copy_from_slice(q);
            } else {
                crate::sync::coarse_sample(h, cl, false, gi, gj, &mut buf)?;
                p.field.cell_mut(i, j).copy_from_slice(&buf);
            }
        }
    }
    Ok(())
}

/// Base level plus as many refined levels as the initial data calls for,
/// every level initialized from `ic` and averaged down.
pub fn create_hierarchy(config: &AmrConfig, num_eqn: usize, ic: &InitialCondition) -> Result<Hierarchy> {
    let mut h = Hierarchy::create(config, num_eqn, ic)?;
    let params = RegridParams::from(config);
    loop {
        let before = h.levels.len();
        regrid(&mut h, 0, &params, Some(ic))?;
        if h.levels.len() == before || h.levels.len() == config.max_levels {
            break;
        }
    }
    for l in (1..h.levels.len()).rev() {
        crate::sync::update_fine_to_coarse(&mut h, l)?;
    }
    Ok(h)
}
