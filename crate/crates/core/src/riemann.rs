//! Normal and transverse Riemann solvers plus wave limiting.
//!
//! Solvers are generic over the number of equations `M` and waves `W` so any
//! linear or linearized system can plug into the stepper; two-dimensional
//! linear acoustics with state `(p, u, v)` is the shipped instance.

use crate::config::Limiter;
use crate::error::{AmrError, Result};
use crate::geometry::Axis;

/// Waves, speeds and fluctuations from one edge Riemann problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannOutput<const M: usize, const W: usize> {
    pub waves: [[f64; M]; W],
    pub speeds: [f64; W],
    /// Left-going fluctuation, enters the left cell.
    pub amdq: [f64; M],
    /// Right-going fluctuation, enters the right cell.
    pub apdq: [f64; M],
}

pub trait RiemannSolver<const M: usize, const W: usize>: Sync {
    /// Riemann problem normal to an edge crossed along `axis`.
    fn solve_normal(&self, axis: Axis, ql: &[f64; M], qr: &[f64; M]) -> RiemannOutput<M, W>;

    /// Split a normal fluctuation from a sweep along `axis` into its
    /// down-going (left-going) and up-going (right-going) parts in the other
    /// direction, each already multiplied by its speed.
    fn solve_transverse(&self, axis: Axis, asdq: &[f64; M]) -> ([f64; M], [f64; M]);

    /// Physical flux along `axis`, used for consistency checks.
    fn flux(&self, axis: Axis, q: &[f64; M]) -> [f64; M];

    /// Largest characteristic speed magnitude.
    fn max_speed(&self) -> f64;

    fn solve_normal_checked(
        &self,
        axis: Axis,
        ql: &[f64; M],
        qr: &[f64; M],
    ) -> Result<RiemannOutput<M, W>> {
        if ql.iter().chain(qr.iter()).any(|v| !v.is_finite()) {
            return Err(AmrError::NumericInput);
        }
        Ok(self.solve_normal(axis, ql, qr))
    }

    fn solve_transverse_checked(&self, axis: Axis, asdq: &[f64; M]) -> Result<([f64; M], [f64; M])> {
        if asdq.iter().any(|v| !v.is_finite()) {
            return Err(AmrError::NumericInput);
        }
        Ok(self.solve_transverse(axis, asdq))
    }
}

/// Homogeneous acoustic medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    pub bulk_modulus: f64,
    pub density: f64,
    sound_speed: f64,
    impedance: f64,
}

impl Medium {
    pub fn new(bulk_modulus: f64, density: f64) -> Result<Self> {
        if !(bulk_modulus > 0.0) || !bulk_modulus.is_finite() {
            return Err(AmrError::config("bulk_modulus", "must be positive"));
        }
        if !(density > 0.0) || !density.is_finite() {
            return Err(AmrError::config("density", "must be positive"));
        }
        let c = (bulk_modulus / density).sqrt();
        Ok(Medium {
            bulk_modulus,
            density,
            sound_speed: c,
            impedance: density * c,
        })
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    pub fn impedance(&self) -> f64 {
        self.impedance
    }
}

/// Linear acoustics `q_t + A q_x + B q_y = 0` with `q = (p, u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acoustics {
    pub medium: Medium,
}

impl Acoustics {
    pub fn new(medium: Medium) -> Self {
        Acoustics { medium }
    }

    /// Index of the velocity component normal to edges crossed along `axis`.
    #[inline]
    fn normal_velocity(axis: Axis) -> usize {
        match axis {
            Axis::X => 1,
            Axis::Y => 2,
        }
    }
}

impl RiemannSolver<3, 2> for Acoustics {
    #[inline]
    fn solve_normal(&self, axis: Axis, ql: &[f64; 3], qr: &[f64; 3]) -> RiemannOutput<3, 2> {
        let z = self.medium.impedance;
        let c = self.medium.sound_speed;
        let n = Self::normal_velocity(axis);
        let dp = qr[0] - ql[0];
        let dun = qr[n] - ql[n];
        let a1 = (-dp + z * dun) / (2.0 * z);
        let a2 = (dp + z * dun) / (2.0 * z);

        let mut w1 = [0.0; 3];
        w1[0] = -a1 * z;
        w1[n] = a1;
        let mut w2 = [0.0; 3];
        w2[0] = a2 * z;
        w2[n] = a2;

        RiemannOutput {
            waves: [w1, w2],
            speeds: [-c, c],
            amdq: [-c * w1[0], -c * w1[1], -c * w1[2]],
            apdq: [c * w2[0], c * w2[1], c * w2[2]],
        }
    }

    #[inline]
    fn solve_transverse(&self, axis: Axis, asdq: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
        let z = self.medium.impedance;
        let c = self.medium.sound_speed;
        let t = Self::normal_velocity(axis.other());
        let b1 = (-asdq[0] + z * asdq[t]) / (2.0 * z);
        let b2 = (asdq[0] + z * asdq[t]) / (2.0 * z);

        let mut down = [0.0; 3];
        down[0] = c * b1 * z;
        down[t] = -c * b1;
        let mut up = [0.0; 3];
        up[0] = c * b2 * z;
        up[t] = c * b2;
        (down, up)
    }

    fn flux(&self, axis: Axis, q: &[f64; 3]) -> [f64; 3] {
        let n = Self::normal_velocity(axis);
        let mut f = [0.0; 3];
        f[0] = self.medium.bulk_modulus * q[n];
        f[n] = q[0] / self.medium.density;
        f
    }

    fn max_speed(&self) -> f64 {
        self.medium.sound_speed
    }
}

/// Van Leer limiter function.
#[inline]
pub fn van_leer(theta: f64) -> f64 {
    (theta + theta.abs()) / (1.0 + theta.abs())
}

#[inline]
pub fn limiter_phi(limiter: Limiter, theta: f64) -> f64 {
    match limiter {
        Limiter::None => 1.0,
        Limiter::VanLeer => van_leer(theta),
    }
}

/// Limit one wave against the same family's wave at the upwind edge, using
/// the projection ratio `theta = <W_up, W> / <W, W>`.
#[inline]
pub fn limit_wave<const M: usize>(edge: &[f64; M], upwind: &[f64; M], limiter: Limiter) -> [f64; M] {
    if limiter == Limiter::None {
        return *edge;
    }
    let norm2: f64 = edge.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return *edge;
    }
    let dot: f64 = edge.iter().zip(upwind).map(|(a, b)| a * b).sum();
    let phi = limiter_phi(limiter, dot / norm2);
    let mut out = *edge;
    for v in out.iter_mut() {
        *v *= phi;
    }
    out
}
