//! Initial conditions and exact solutions for acoustics test problems.

use std::f64::consts::PI;

use crate::config::RingProblem;

impl RingProblem {
    /// Point value at `(x, y)` of the ring perturbation plus background.
    pub fn eval(&self, x: f64, y: f64, q: &mut [f64]) {
        let r = (x - self.center.0).hypot(y - self.center.1);
        let s = (r - self.radius) / self.width;
        q[0] = self.background[0] + self.amplitude * (-s * s).exp();
        q[1] = self.background[1];
        q[2] = self.background[2];
    }
}

/// Standing acoustic wave on a periodic box:
///
/// ```text
/// p = cos(kx x) cos(ky y) cos(w t)
/// u = kx / (rho w) sin(kx x) cos(ky y) sin(w t)
/// v = ky / (rho w) cos(kx x) sin(ky y) sin(w t)
/// ```
///
/// with `w = c |k|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandingWave {
    pub kx: f64,
    pub ky: f64,
    pub bulk_modulus: f64,
    pub density: f64,
}

/// Mean of `cos(k x)` (or `sin` when `sine`) over `[a, b]`.
fn mean_trig(k: f64, a: f64, b: f64, sine: bool) -> f64 {
    if k == 0.0 {
        return if sine { 0.0 } else { 1.0 };
    }
    let d = (b - a) * k;
    if sine {
        ((k * a).cos() - (k * b).cos()) / d
    } else {
        ((k * b).sin() - (k * a).sin()) / d
    }
}

impl StandingWave {
    /// One wavelength in each direction of the unit square.
    pub fn unit(bulk_modulus: f64, density: f64) -> Self {
        StandingWave { kx: 2.0 * PI, ky: 2.0 * PI, bulk_modulus, density }
    }

    pub fn omega(&self) -> f64 {
        (self.bulk_modulus / self.density).sqrt() * self.kx.hypot(self.ky)
    }

    pub fn point(&self, x: f64, y: f64, t: f64, q: &mut [f64]) {
        let w = self.omega();
        let (cx, sx) = ((self.kx * x).cos(), (self.kx * x).sin());
        let (cy, sy) = ((self.ky * y).cos(), (self.ky * y).sin());
        q[0] = cx * cy * (w * t).cos();
        q[1] = self.kx / (self.density * w) * sx * cy * (w * t).sin();
        q[2] = self.ky / (self.density * w) * cx * sy * (w * t).sin();
    }

    /// Exact average over the cell `[x0, x1] x [y0, y1]`.
    pub fn cell_average(&self, x0: f64, x1: f64, y0: f64, y1: f64, t: f64, q: &mut [f64]) {
        let w = self.omega();
        let (cx, sx) = (mean_trig(self.kx, x0, x1, false), mean_trig(self.kx, x0, x1, true));
        let (cy, sy) = (mean_trig(self.ky, y0, y1, false), mean_trig(self.ky, y0, y1, true));
        q[0] = cx * cy * (w * t).cos();
        q[1] = self.kx / (self.density * w) * sx * cy * (w * t).sin();
        q[2] = self.ky / (self.density * w) * cx * sy * (w * t).sin();
    }
}
