//! Single-patch advance with the dimensionally unsplit second-order
//! wave-propagation update, and CFL step-size control.
//!
//! Row sweeps run first, then column sweeps. Both accumulate limited
//! second-order corrections and transverse contributions into the correction
//! fluxes `F` (x-edges) and `G` (y-edges); the interior is updated once at
//! the end:
//!
//! ```text
//! Q -= dt/dx (A+dQ[i-1/2] + A-dQ[i+1/2]) + dt/dy (B+dQ[j-1/2] + B-dQ[j+1/2])
//!    + dt/dx (F[i+1/2] - F[i-1/2])       + dt/dy (G[j+1/2] - G[j-1/2])
//! ```

use crate::config::Limiter;
use crate::error::{AmrError, Result};
use crate::field::PatchField;
use crate::geometry::Axis;
use crate::riemann::{limit_wave, RiemannSolver};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub limiter: Limiter,
    /// Also split the second-order corrections transversally (full corner
    /// transport). Without it only the fluctuations are split.
    pub transverse_corrections: bool,
    /// Materialize the four edge-fluctuation arrays, as needed when
    /// interface waves are saved for the conservation fix.
    pub save_fluctuations: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            limiter: Limiter::VanLeer,
            transverse_corrections: true,
            save_fluctuations: false,
        }
    }
}

/// An edge whose fluctuations and correction flux should be captured.
///
/// `(i, j)` is an interior-index cell; the edge is its low face along `axis`
/// (left face for `X`, bottom face for `Y`). Valid ranges are
/// `0..=nx` x `0..ny` for x-edges and `0..nx` x `0..=ny` for y-edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeRequest {
    pub axis: Axis,
    pub i: i64,
    pub j: i64,
}

/// Fluctuations and final correction flux at one captured edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFluxRecord<const M: usize> {
    pub edge: EdgeRequest,
    /// Enters the low-side cell.
    pub amdq: [f64; M],
    /// Enters the high-side cell.
    pub apdq: [f64; M],
    /// Correction flux (F for x-edges, G for y-edges) as used in the update.
    pub flux: [f64; M],
    /// Start time of the step that produced the record.
    pub time: f64,
    pub dt: f64,
}

/// The four fluctuation arrays over all edges bounding interior cells.
#[derive(Debug, Clone, Default)]
pub struct SavedFluctuations {
    pub amdq_x: Vec<f64>,
    pub apdq_x: Vec<f64>,
    pub bmdq_y: Vec<f64>,
    pub bpdq_y: Vec<f64>,
}

impl SavedFluctuations {
    pub fn bytes(&self) -> usize {
        (self.amdq_x.len() + self.apdq_x.len() + self.bmdq_y.len() + self.bpdq_y.len())
            * std::mem::size_of::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct AdvanceOutput<const M: usize> {
    /// Largest `|s| dt / h` over edges bounding interior cells.
    pub cfl: f64,
    pub records: Vec<EdgeFluxRecord<M>>,
    pub saved: Option<SavedFluctuations>,
    /// Bytes written to the solution array.
    pub solution_bytes: usize,
}

/// Identifies the patch in blowup diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepTag {
    pub patch: u64,
    pub level: usize,
    pub step: usize,
}

#[inline]
fn load<const M: usize>(data: &[f64], off: usize) -> [f64; M] {
    let mut q = [0.0; M];
    q.copy_from_slice(&data[off..off + M]);
    q
}

#[inline]
fn add_scaled<const M: usize>(dst: &mut [f64], off: usize, a: f64, v: &[f64; M]) {
    for k in 0..M {
        dst[off + k] += a * v[k];
    }
}

/// Advance the interior of `field` by `dt`. Ghost cells must already hold
/// data at `field.time`.
#[allow(clippy::too_many_arguments)]
pub fn advance_patch<const M: usize, const W: usize, S: RiemannSolver<M, W>>(
    field: &mut PatchField,
    dt: f64,
    dx: f64,
    dy: f64,
    solver: &S,
    opts: &StepOptions,
    requests: &[EdgeRequest],
    tag: StepTag,
) -> Result<AdvanceOutput<M>> {
    assert_eq!(field.num_eqn(), M, "field component count differs from solver");
    let g = field.ghost_width();
    assert!(g >= 2, "second-order update needs two ghost layers");
    let nx = field.nx();
    let ny = field.ny();
    let n = field.stride();
    let r = field.padded_rows();
    let dtdx = dt / dx;
    let dtdy = dt / dy;

    // x-edge (I, J) is the left face of padded cell (I, J); y-edge (I, J) its
    // bottom face.
    let xe = |i: usize, j: usize| (j * (n + 1) + i) * M;
    let ye = |i: usize, j: usize| (j * n + i) * M;
    let mut amdq_x = vec![0.0; (n + 1) * r * M];
    let mut apdq_x = vec![0.0; (n + 1) * r * M];
    let mut f_x = vec![0.0; (n + 1) * r * M];
    let mut bmdq_y = vec![0.0; n * (r + 1) * M];
    let mut bpdq_y = vec![0.0; n * (r + 1) * M];
    let mut g_y = vec![0.0; n * (r + 1) * M];

    let q = field.as_slice();
    let mut cfl: f64 = 0.0;
    let line_len = n.max(r) + 1;
    let mut waves = vec![[[0.0; M]; W]; line_len];
    let mut speeds = vec![[0.0; W]; line_len];

    // Row sweeps over rows g-1 ..= g+ny.
    for pj in (g - 1)..=(g + ny) {
        let interior_row = pj >= g && pj < g + ny;
        for pi in 1..n {
            let ql: [f64; M] = load(q, field.padded_offset(pi - 1, pj));
            let qr: [f64; M] = load(q, field.padded_offset(pi, pj));
            let out = solver.solve_normal(Axis::X, &ql, &qr);
            amdq_x[xe(pi, pj)..xe(pi, pj) + M].copy_from_slice(&out.amdq);
            apdq_x[xe(pi, pj)..xe(pi, pj) + M].copy_from_slice(&out.apdq);
            waves[pi] = out.waves;
            speeds[pi] = out.speeds;
            if interior_row && pi >= g && pi <= g + nx {
                for s in out.speeds {
                    cfl = cfl.max(s.abs() * dtdx);
                }
            }
        }
        for pi in g..=(g + nx) {
            let mut cq = [0.0; M];
            for p in 0..W {
                let s = speeds[pi][p];
                if s == 0.0 {
                    continue;
                }
                let up = if s > 0.0 { pi - 1 } else { pi + 1 };
                let wl = limit_wave(&waves[pi][p], &waves[up][p], opts.limiter);
                let coef = 0.5 * s.abs() * (1.0 - s.abs() * dtdx);
                for k in 0..M {
                    cq[k] += coef * wl[k];
                }
            }
            add_scaled(&mut f_x, xe(pi, pj), 1.0, &cq);

            let mut am: [f64; M] = load(&amdq_x, xe(pi, pj));
            let mut ap: [f64; M] = load(&apdq_x, xe(pi, pj));
            if opts.transverse_corrections {
                for k in 0..M {
                    am[k] += cq[k];
                    ap[k] -= cq[k];
                }
            }
            let c = -0.5 * dtdx;
            if pi < g + nx {
                let (down, up) = solver.solve_transverse(Axis::X, &ap);
                add_scaled(&mut g_y, ye(pi, pj), c, &down);
                add_scaled(&mut g_y, ye(pi, pj + 1), c, &up);
            }
            if pi > g {
                let (down, up) = solver.solve_transverse(Axis::X, &am);
                add_scaled(&mut g_y, ye(pi - 1, pj), c, &down);
                add_scaled(&mut g_y, ye(pi - 1, pj + 1), c, &up);
            }
        }
    }

    // Column sweeps over columns g-1 ..= g+nx.
    for pi in (g - 1)..=(g + nx) {
        let interior_col = pi >= g && pi < g + nx;
        for pj in 1..r {
            let ql: [f64; M] = load(q, field.padded_offset(pi, pj - 1));
            let qr: [f64; M] = load(q, field.padded_offset(pi, pj));
            let out = solver.solve_normal(Axis::Y, &ql, &qr);
            bmdq_y[ye(pi, pj)..ye(pi, pj) + M].copy_from_slice(&out.amdq);
            bpdq_y[ye(pi, pj)..ye(pi, pj) + M].copy_from_slice(&out.apdq);
            waves[pj] = out.waves;
            speeds[pj] = out.speeds;
            if interior_col && pj >= g && pj <= g + ny {
                for s in out.speeds {
                    cfl = cfl.max(s.abs() * dtdy);
                }
            }
        }
        for pj in g..=(g + ny) {
            let mut cq = [0.0; M];
            for p in 0..W {
                let s = speeds[pj][p];
                if s == 0.0 {
                    continue;
                }
                let up = if s > 0.0 { pj - 1 } else { pj + 1 };
                let wl = limit_wave(&waves[pj][p], &waves[up][p], opts.limiter);
                let coef = 0.5 * s.abs() * (1.0 - s.abs() * dtdy);
                for k in 0..M {
                    cq[k] += coef * wl[k];
                }
            }
            add_scaled(&mut g_y, ye(pi, pj), 1.0, &cq);

            let mut bm: [f64; M] = load(&bmdq_y, ye(pi, pj));
            let mut bp: [f64; M] = load(&bpdq_y, ye(pi, pj));
            if opts.transverse_corrections {
                for k in 0..M {
                    bm[k] += cq[k];
                    bp[k] -= cq[k];
                }
            }
            let c = -0.5 * dtdy;
            if pj < g + ny {
                let (left, right) = solver.solve_transverse(Axis::Y, &bp);
                add_scaled(&mut f_x, xe(pi, pj), c, &left);
                add_scaled(&mut f_x, xe(pi + 1, pj), c, &right);
            }
            if pj > g {
                let (left, right) = solver.solve_transverse(Axis::Y, &bm);
                add_scaled(&mut f_x, xe(pi, pj - 1), c, &left);
                add_scaled(&mut f_x, xe(pi + 1, pj - 1), c, &right);
            }
        }
    }

    let records = requests
        .iter()
        .map(|e| {
            let pi = (e.i + g as i64) as usize;
            let pj = (e.j + g as i64) as usize;
            let (am, ap, fl) = match e.axis {
                Axis::X => {
                    debug_assert!(e.i >= 0 && e.i <= nx as i64 && e.j >= 0 && e.j < ny as i64);
                    let o = xe(pi, pj);
                    (load(&amdq_x, o), load(&apdq_x, o), load(&f_x, o))
                }
                Axis::Y => {
                    debug_assert!(e.i >= 0 && e.i < nx as i64 && e.j >= 0 && e.j <= ny as i64);
                    let o = ye(pi, pj);
                    (load(&bmdq_y, o), load(&bpdq_y, o), load(&g_y, o))
                }
            };
            EdgeFluxRecord {
                edge: *e,
                amdq: am,
                apdq: ap,
                flux: fl,
                time: field.time,
                dt,
            }
        })
        .collect();

    let saved = opts.save_fluctuations.then(|| {
        let mut s = SavedFluctuations::default();
        for pj in g..g + ny {
            for pi in g..=g + nx {
                s.amdq_x.extend_from_slice(&amdq_x[xe(pi, pj)..xe(pi, pj) + M]);
                s.apdq_x.extend_from_slice(&apdq_x[xe(pi, pj)..xe(pi, pj) + M]);
            }
        }
        for pj in g..=g + ny {
            for pi in g..g + nx {
                s.bmdq_y.extend_from_slice(&bmdq_y[ye(pi, pj)..ye(pi, pj) + M]);
                s.bpdq_y.extend_from_slice(&bpdq_y[ye(pi, pj)..ye(pi, pj) + M]);
            }
        }
        s
    });

    let data = field.as_mut_slice();
    let mut finite = true;
    for pj in g..g + ny {
        for pi in g..g + nx {
            let o = (pj * n + pi) * M;
            for k in 0..M {
                let d = dtdx * (apdq_x[xe(pi, pj) + k] + amdq_x[xe(pi + 1, pj) + k])
                    + dtdy * (bpdq_y[ye(pi, pj) + k] + bmdq_y[ye(pi, pj + 1) + k])
                    + dtdx * (f_x[xe(pi + 1, pj) + k] - f_x[xe(pi, pj) + k])
                    + dtdy * (g_y[ye(pi, pj + 1) + k] - g_y[ye(pi, pj) + k]);
                let v = data[o + k] - d;
                finite &= v.is_finite();
                data[o + k] = v;
            }
        }
    }
    if !finite {
        return Err(AmrError::NumericBlowup {
            patch: tag.patch,
            level: tag.level,
            step: tag.step,
        });
    }
    field.time += dt;

    Ok(AdvanceOutput {
        cfl,
        records,
        saved,
        solution_bytes: nx * ny * M * std::mem::size_of::<f64>(),
    })
}

/// Second stage of the CFL reduction: the coordinator's max over per-patch
/// maxima.
pub fn reduce_patch_cfl(patch_maxima: &[f64]) -> Result<f64> {
    if patch_maxima.is_empty() {
        return Err(AmrError::EmptyLevel);
    }
    Ok(patch_maxima.iter().copied().fold(0.0, f64::max))
}

/// `dt = nu * h / |s|`, or `dt_max` when no wave moves.
pub fn select_dt(cfl_desired: f64, h: f64, max_speed: f64, dt_max: f64) -> f64 {
    if max_speed == 0.0 {
        dt_max
    } else {
        cfl_desired * h / max_speed.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CflDecision {
    Accept,
    /// Retry the step with the given smaller step size.
    Retry(f64),
}

/// Rejects steps whose observed Courant number exceeds one and halves the
/// step until it passes.
#[derive(Debug, Clone)]
pub struct CflGuard {
    pub max_rejections: usize,
    consecutive: usize,
}

impl Default for CflGuard {
    fn default() -> Self {
        CflGuard {
            max_rejections: 10,
            consecutive: 0,
        }
    }
}

impl CflGuard {
    pub fn check(&mut self, observed: f64, dt: f64) -> Result<CflDecision> {
        if observed <= 1.0 {
            self.consecutive = 0;
            return Ok(CflDecision::Accept);
        }
        self.consecutive += 1;
        if self.consecutive > self.max_rejections {
            return Err(AmrError::CflAbort {
                rejections: self.consecutive,
                observed,
            });
        }
        Ok(CflDecision::Retry(dt / 2.0))
    }

    pub fn consecutive_rejections(&self) -> usize {
        self.consecutive
    }
}
