//! Patches, levels and the patch hierarchy.
//!
//! Levels are 0-based here: level 0 is the base grid that tiles the domain.

use crate::config::{AmrConfig, Boundary};
use crate::error::{AmrError, Result};
use crate::field::PatchField;
use crate::geometry::IndexBox;
use crate::sync::{FineFix, LookupTable};

/// Initial-condition callback: fills `q` at the point `(x, y)`.
pub type InitialCondition = dyn Fn(f64, f64, &mut [f64]) + Sync;

#[derive(Debug, Clone)]
pub struct Patch {
    pub id: u64,
    pub level: usize,
    /// Interior box in the level's global index space.
    pub bbox: IndexBox,
    pub dx: f64,
    pub dy: f64,
    pub field: PatchField,
    /// Interior data at the start of the level's current step, used for
    /// time interpolation of finer ghost cells.
    pub old: Option<PatchField>,
    /// Buffers for the conservation fix against the next coarser level.
    pub fix: FineFix,
    /// Cells of this patch that border finer patches.
    pub lookup: LookupTable,
}

impl Patch {
    pub fn new(id: u64, level: usize, bbox: IndexBox, dx: f64, dy: f64, m: usize, g: usize) -> Self {
        Patch {
            id,
            level,
            bbox,
            dx,
            dy,
            field: PatchField::new(m, bbox.nx, bbox.ny, g),
            old: None,
            fix: FineFix::default(),
            lookup: LookupTable::default(),
        }
    }

    pub fn cells(&self) -> usize {
        self.bbox.cells()
    }
}

/// Physical extent and boundary types shared by all levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub boundary: [Boundary; 4],
}

impl Geometry {
    pub fn periodic_x(&self) -> bool {
        self.boundary[0] == Boundary::Periodic
    }

    pub fn periodic_y(&self) -> bool {
        self.boundary[2] == Boundary::Periodic
    }
}

/// Cell center of local cell `(i, j)` of a patch (ghost indices allowed).
pub fn cell_center(geom: &Geometry, patch: &Patch, i: i64, j: i64) -> (f64, f64) {
    (
        geom.x0 + ((patch.bbox.i0 + i) as f64 + 0.5) * patch.dx,
        geom.y0 + ((patch.bbox.j0 + j) as f64 + 0.5) * patch.dy,
    )
}

pub const NO_OWNER: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct Level {
    pub index: usize,
    pub dx: f64,
    pub dy: f64,
    /// Whole domain in this level's index space.
    pub extent: IndexBox,
    pub patches: Vec<Patch>,
    /// Current time of every patch on the level.
    pub time: f64,
    /// Time of the `old` patch data.
    pub old_time: f64,
    pub dt: f64,
    pub steps_since_regrid: usize,
    owner: Vec<u32>,
}

impl Level {
    pub fn new(index: usize, dx: f64, dy: f64, extent: IndexBox, patches: Vec<Patch>) -> Self {
        let mut l = Level {
            index,
            dx,
            dy,
            extent,
            patches,
            time: 0.0,
            old_time: 0.0,
            dt: 0.0,
            steps_since_regrid: 0,
            owner: Vec::new(),
        };
        l.rebuild_owner_map();
        l
    }

    /// Recompute the cell-to-patch map after the patch list changed.
    pub fn rebuild_owner_map(&mut self) {
        self.owner = vec![NO_OWNER; self.extent.cells()];
        for (k, p) in self.patches.iter().enumerate() {
            for j in p.bbox.j0..p.bbox.j1() {
                let row = (j - self.extent.j0) as usize * self.extent.nx;
                for i in p.bbox.i0..p.bbox.i1() {
                    let o = row + (i - self.extent.i0) as usize;
                    debug_assert_eq!(self.owner[o], NO_OWNER, "patches overlap at ({i},{j})");
                    self.owner[o] = k as u32;
                }
            }
        }
    }

    /// Patch index owning in-domain cell `(i, j)`, if any.
    #[inline]
    pub fn owner(&self, i: i64, j: i64) -> Option<usize> {
        if !self.extent.contains(i, j) {
            return None;
        }
        let o = (j - self.extent.j0) as usize * self.extent.nx + (i - self.extent.i0) as usize;
        match self.owner[o] {
            NO_OWNER => None,
            k => Some(k as usize),
        }
    }

    pub fn cells(&self) -> usize {
        self.patches.iter().map(Patch::cells).sum()
    }

    /// Value of in-domain cell `(i, j)` component `k` from its owning patch.
    pub fn value(&self, k: usize, i: i64, j: i64) -> Option<f64> {
        self.owner(i, j).map(|p| {
            let patch = &self.patches[p];
            patch.field.get(k, i - patch.bbox.i0, j - patch.bbox.j0)
        })
    }
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub geom: Geometry,
    pub num_eqn: usize,
    pub ghost_width: usize,
    pub max_levels: usize,
    /// Ratio between level `l` and `l+1`.
    pub ratios: Vec<usize>,
    pub levels: Vec<Level>,
    next_id: u64,
}

fn split_even(n: usize, max: usize) -> Vec<(usize, usize)> {
    let tiles = n.div_ceil(max);
    let base = n / tiles;
    let extra = n % tiles;
    let mut out = Vec::with_capacity(tiles);
    let mut start = 0;
    for t in 0..tiles {
        let len = base + usize::from(t < extra);
        out.push((start, len));
        start += len;
    }
    out
}

impl Hierarchy {
    /// Base level tiling the domain with patches no larger than
    /// `max_patch_dim`, initialized from `ic`.
    pub fn create(config: &AmrConfig, num_eqn: usize, ic: &InitialCondition) -> Result<Self> {
        config.validate()?;
        let geom = Geometry {
            x0: config.x_lower,
            y0: config.y_lower,
            x1: config.x_upper,
            y1: config.y_upper,
            boundary: config.boundary,
        };
        let mut h = Hierarchy {
            geom,
            num_eqn,
            ghost_width: config.ghost_width,
            max_levels: config.max_levels,
            ratios: config.refinement_ratios[..config.max_levels - 1].to_vec(),
            levels: Vec::new(),
            next_id: 0,
        };
        let dx = (config.x_upper - config.x_lower) / config.mx as f64;
        let dy = (config.y_upper - config.y_lower) / config.my as f64;
        let mut patches = Vec::new();
        for (j0, ny) in split_even(config.my, config.max_patch_dim) {
            for (i0, nx) in split_even(config.mx, config.max_patch_dim) {
                let id = h.fresh_id();
                let bbox = IndexBox::new(i0 as i64, j0 as i64, nx, ny);
                patches.push(Patch::new(id, 0, bbox, dx, dy, num_eqn, config.ghost_width));
            }
        }
        h.levels.push(Level::new(0, dx, dy, IndexBox::new(0, 0, config.mx, config.my), patches));
        for p in &mut h.levels[0].patches {
            init_patch(&h.geom, p, ic);
        }
        Ok(h)
    }

    pub fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id - 1
    }

    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn ratio(&self, level: usize) -> usize {
        self.ratios[level]
    }

    /// Cell size and index extent of `level`, whether or not it exists yet.
    pub fn level_geometry(&self, level: usize) -> (f64, f64, IndexBox) {
        let base = &self.levels[0];
        let r: usize = self.ratios[..level].iter().product();
        (
            base.dx / r as f64,
            base.dy / r as f64,
            IndexBox::new(0, 0, base.extent.nx * r, base.extent.ny * r),
        )
    }

    /// Map a possibly out-of-domain index at `level` into the domain,
    /// wrapping periodic directions. `None` outside non-periodic edges.
    #[inline]
    pub fn wrap(&self, level: usize, i: i64, j: i64) -> Option<(i64, i64)> {
        let ext = self.levels.get(level).map(|l| l.extent).unwrap_or_else(|| self.level_geometry(level).2);
        wrap_index(&self.geom, &ext, i, j)
    }

    pub fn total_cells(&self) -> usize {
        self.levels.iter().map(Level::cells).sum()
    }

    pub fn total_patches(&self) -> usize {
        self.levels.iter().map(|l| l.patches.len()).sum()
    }

    /// Componentwise integral of the composite solution: every region counted
    /// once, at the finest level covering it.
    pub fn composite_integral(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.num_eqn];
        for (l, level) in self.levels.iter().enumerate() {
            let finer = self.levels.get(l + 1);
            let r = if finer.is_some() { self.ratios[l] as i64 } else { 1 };
            let area = level.dx * level.dy;
            for p in &level.patches {
                let mut s = vec![0.0; self.num_eqn];
                for (gi, gj) in p.bbox.iter() {
                    if let Some(f) = finer {
                        if f.owner(gi * r, gj * r).is_some() {
                            continue;
                        }
                    }
                    let q = p.field.cell(gi - p.bbox.i0, gj - p.bbox.j0);
                    for k in 0..self.num_eqn {
                        s[k] += q[k];
                    }
                }
                for k in 0..self.num_eqn {
                    total[k] += s[k] * area;
                }
            }
        }
        total
    }

    pub fn patch_by_id(&self, id: u64) -> Option<&Patch> {
        self.levels.iter().flat_map(|l| l.patches.iter()).find(|p| p.id == id)
    }

    pub fn check_finite(&self) -> Result<()> {
        for l in &self.levels {
            for p in &l.patches {
                if !p.field.all_finite() {
                    return Err(AmrError::Invariant(format!("non-finite data on patch {}", p.id)));
                }
            }
        }
        Ok(())
    }
}

#[inline]
pub fn wrap_index(geom: &Geometry, ext: &IndexBox, i: i64, j: i64) -> Option<(i64, i64)> {
    let wi = if i < ext.i0 || i >= ext.i1() {
        if !geom.periodic_x() {
            return None;
        }
        ext.i0 + (i - ext.i0).rem_euclid(ext.nx as i64)
    } else {
        i
    };
    let wj = if j < ext.j0 || j >= ext.j1() {
        if !geom.periodic_y() {
            return None;
        }
        ext.j0 + (j - ext.j0).rem_euclid(ext.ny as i64)
    } else {
        j
    };
    Some((wi, wj))
}

/// Evaluate `ic` at every interior cell center.
pub fn init_patch(geom: &Geometry, patch: &mut Patch, ic: &InitialCondition) {
    let m = patch.field.num_eqn();
    let mut q = vec![0.0; m];
    for j in 0..patch.bbox.ny as i64 {
        for i in 0..patch.bbox.nx as i64 {
            let (x, y) = cell_center(geom, patch, i, j);
            q.iter_mut().for_each(|v| *v = 0.0);
            ic(x, y, &mut q);
            patch.field.cell_mut(i, j).copy_from_slice(&q);
        }
    }
}
