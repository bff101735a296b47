//! Run configuration and its flat `key = value` file format.
//!
//! One key per line, `#` starts a comment, blank lines are ignored and
//! unknown keys are rejected. Lists are comma separated. See `KEYS` for the
//! accepted names.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{AmrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero-order extrapolation.
    Outflow,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limiter {
    None,
    VanLeer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutorMode {
    /// Patches advanced one after another; timeline without overlap.
    Serial,
    /// Patches advanced concurrently; overlapped transfer/compute timeline.
    Pipelined,
}

/// Parameters of the synthetic device cost model. Units are arbitrary
/// "microsecond equivalents"; they only feed scheduling statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    pub launch_overhead: f64,
    /// Bytes per time unit.
    pub bandwidth: f64,
    /// Time units per cell for compute tasks.
    pub cell_cost: f64,
    /// 1: a single copy engine shared by both directions; 2: separate
    /// host-to-device and device-to-host engines.
    pub copy_engines: usize,
    pub merge_launches: bool,
    pub pool_chunk_bytes: usize,
}

impl Default for DeviceModel {
    fn default() -> Self {
        DeviceModel {
            launch_overhead: 20.0,
            bandwidth: 1.0e4,
            cell_cost: 2.0e-3,
            copy_engines: 2,
            merge_launches: true,
            pool_chunk_bytes: 64 << 20,
        }
    }
}

/// Ring-shaped pressure perturbation `p = A exp(-((r - r0)/w)^2)` on top of a
/// constant background state.
#[derive(Debug, Clone, PartialEq)]
pub struct RingProblem {
    pub amplitude: f64,
    pub radius: f64,
    pub width: f64,
    pub center: (f64, f64),
    pub background: [f64; 3],
}

impl Default for RingProblem {
    fn default() -> Self {
        RingProblem {
            amplitude: 1.0,
            radius: 0.5,
            width: 0.06,
            center: (0.5, 0.5),
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmrConfig {
    pub x_lower: f64,
    pub x_upper: f64,
    pub y_lower: f64,
    pub y_upper: f64,
    pub mx: usize,
    pub my: usize,
    pub max_levels: usize,
    /// Ratio between level `l` and `l+1`; `max_levels - 1` entries.
    pub refinement_ratios: Vec<usize>,
    pub cfl_desired: f64,
    /// Step used when no wave speed is seen; defaults to a tenth of the
    /// acoustic crossing time of the shorter domain side.
    pub dt_max: Option<f64>,
    pub regrid_interval: usize,
    pub cutoff: f64,
    pub max_patch_dim: usize,
    pub min_patch_dim: usize,
    pub ghost_width: usize,
    pub flag_tolerance: f64,
    pub conservation_fix: bool,
    pub limiter: Limiter,
    /// Left, right, bottom, top.
    pub boundary: [Boundary; 4],
    pub t_final: f64,
    pub bulk_modulus: f64,
    pub density: f64,
    pub ring: RingProblem,
    pub output_times: Vec<f64>,
    pub executor: ExecutorMode,
    pub device: DeviceModel,
}

impl Default for AmrConfig {
    fn default() -> Self {
        AmrConfig {
            x_lower: 0.0,
            x_upper: 1.0,
            y_lower: 0.0,
            y_upper: 1.0,
            mx: 200,
            my: 200,
            max_levels: 3,
            refinement_ratios: vec![2, 2],
            cfl_desired: 0.9,
            dt_max: None,
            regrid_interval: 8,
            cutoff: 0.7,
            max_patch_dim: 260,
            min_patch_dim: 4,
            ghost_width: 2,
            flag_tolerance: 0.01,
            conservation_fix: true,
            limiter: Limiter::VanLeer,
            boundary: [Boundary::Outflow; 4],
            t_final: 0.6,
            bulk_modulus: 1.0,
            density: 1.0,
            ring: RingProblem::default(),
            output_times: Vec::new(),
            executor: ExecutorMode::Pipelined,
            device: DeviceModel::default(),
        }
    }
}

/// Every key accepted by [`AmrConfig::parse`].
pub const KEYS: &[&str] = &[
    "x_lower",
    "x_upper",
    "y_lower",
    "y_upper",
    "mx",
    "my",
    "max_levels",
    "refinement_ratios",
    "cfl_desired",
    "dt_max",
    "regrid_interval",
    "cutoff",
    "max_patch_dim",
    "min_patch_dim",
    "ghost_width",
    "flag_tolerance",
    "conservation_fix",
    "limiter",
    "bc_left",
    "bc_right",
    "bc_bottom",
    "bc_top",
    "t_final",
    "bulk_modulus",
    "density",
    "ring_amplitude",
    "ring_radius",
    "ring_width",
    "ring_x",
    "ring_y",
    "background_p",
    "background_u",
    "background_v",
    "output_times",
    "executor",
    "launch_overhead",
    "bandwidth",
    "cell_cost",
    "copy_engines",
    "merge_launches",
    "pool_chunk_bytes",
];

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse::<T>().map_err(|_| AmrError::Parse {
        line,
        reason: format!("cannot parse `{raw}` for `{key}`"),
    })
}

fn list<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(line, key, s))
        .collect()
}

fn boundary(line: usize, key: &str, raw: &str) -> Result<Boundary> {
    match raw {
        "outflow" => Ok(Boundary::Outflow),
        "periodic" => Ok(Boundary::Periodic),
        _ => Err(AmrError::Parse {
            line,
            reason: format!("`{key}` must be outflow or periodic, got `{raw}`"),
        }),
    }
}

impl AmrConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AmrError::io(path, e))?;
        Self::parse(&text)
    }

    /// Parse a config file body on top of the defaults, then validate.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = AmrConfig::default();
        for (n, raw_line) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, raw) = content.split_once('=').ok_or_else(|| AmrError::Parse {
                line,
                reason: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let raw = raw.trim();
            match key {
                "x_lower" => c.x_lower = value(line, key, raw)?,
                "x_upper" => c.x_upper = value(line, key, raw)?,
                "y_lower" => c.y_lower = value(line, key, raw)?,
                "y_upper" => c.y_upper = value(line, key, raw)?,
                "mx" => c.mx = value(line, key, raw)?,
                "my" => c.my = value(line, key, raw)?,
                "max_levels" => c.max_levels = value(line, key, raw)?,
                "refinement_ratios" => c.refinement_ratios = list(line, key, raw)?,
                "cfl_desired" => c.cfl_desired = value(line, key, raw)?,
                "dt_max" => c.dt_max = Some(value(line, key, raw)?),
                "regrid_interval" => c.regrid_interval = value(line, key, raw)?,
                "cutoff" => c.cutoff = value(line, key, raw)?,
                "max_patch_dim" => c.max_patch_dim = value(line, key, raw)?,
                "min_patch_dim" => c.min_patch_dim = value(line, key, raw)?,
                "ghost_width" => c.ghost_width = value(line, key, raw)?,
                "flag_tolerance" => c.flag_tolerance = value(line, key, raw)?,
                "conservation_fix" => c.conservation_fix = value(line, key, raw)?,
                "limiter" => {
                    c.limiter = match raw {
                        "none" => Limiter::None,
                        "van_leer" | "vanleer" => Limiter::VanLeer,
                        _ => {
                            return Err(AmrError::Parse {
                                line,
                                reason: format!("unknown limiter `{raw}`"),
                            })
                        }
                    }
                }
                "bc_left" => c.boundary[0] = boundary(line, key, raw)?,
                "bc_right" => c.boundary[1] = boundary(line, key, raw)?,
                "bc_bottom" => c.boundary[2] = boundary(line, key, raw)?,
                "bc_top" => c.boundary[3] = boundary(line, key, raw)?,
                "t_final" => c.t_final = value(line, key, raw)?,
                "bulk_modulus" => c.bulk_modulus = value(line, key, raw)?,
                "density" => c.density = value(line, key, raw)?,
                "ring_amplitude" => c.ring.amplitude = value(line, key, raw)?,
                "ring_radius" => c.ring.radius = value(line, key, raw)?,
                "ring_width" => c.ring.width = value(line, key, raw)?,
                "ring_x" => c.ring.center.0 = value(line, key, raw)?,
                "ring_y" => c.ring.center.1 = value(line, key, raw)?,
                "background_p" => c.ring.background[0] = value(line, key, raw)?,
                "background_u" => c.ring.background[1] = value(line, key, raw)?,
                "background_v" => c.ring.background[2] = value(line, key, raw)?,
                "output_times" => c.output_times = list(line, key, raw)?,
                "executor" => {
                    c.executor = match raw {
                        "serial" => ExecutorMode::Serial,
                        "pipelined" => ExecutorMode::Pipelined,
                        _ => {
                            return Err(AmrError::Parse {
                                line,
                                reason: format!("unknown executor `{raw}`"),
                            })
                        }
                    }
                }
                "launch_overhead" => c.device.launch_overhead = value(line, key, raw)?,
                "bandwidth" => c.device.bandwidth = value(line, key, raw)?,
                "cell_cost" => c.device.cell_cost = value(line, key, raw)?,
                "copy_engines" => c.device.copy_engines = value(line, key, raw)?,
                "merge_launches" => c.device.merge_launches = value(line, key, raw)?,
                "pool_chunk_bytes" => c.device.pool_chunk_bytes = value(line, key, raw)?,
                _ => {
                    return Err(AmrError::Parse {
                        line,
                        reason: format!("unknown key `{key}`"),
                    })
                }
            }
        }
        if c.refinement_ratios.len() == 1 && c.max_levels > 2 {
            c.refinement_ratios = vec![c.refinement_ratios[0]; c.max_levels - 1];
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        fn err(key: &str, reason: impl Into<String>) -> AmrError {
            AmrError::config(key, reason)
        }
        if self.mx == 0 {
            return Err(err("mx", "must be >= 1"));
        }
        if self.my == 0 {
            return Err(err("my", "must be >= 1"));
        }
        if !(self.x_upper > self.x_lower) {
            return Err(err("x_upper", "must exceed x_lower"));
        }
        if !(self.y_upper > self.y_lower) {
            return Err(err("y_upper", "must exceed y_lower"));
        }
        if self.max_levels == 0 {
            return Err(err("max_levels", "must be >= 1"));
        }
        if self.refinement_ratios.len() < self.max_levels - 1 {
            return Err(err(
                "refinement_ratios",
                format!("need {} ratios for {} levels", self.max_levels - 1, self.max_levels),
            ));
        }
        if self.refinement_ratios.iter().any(|&r| r < 2) {
            return Err(err("refinement_ratios", "every ratio must be >= 2"));
        }
        if !(self.cfl_desired > 0.0 && self.cfl_desired <= 1.0) {
            return Err(err("cfl_desired", "must lie in (0, 1]"));
        }
        if let Some(d) = self.dt_max {
            if !(d > 0.0) {
                return Err(err("dt_max", "must be positive"));
            }
        }
        if self.regrid_interval == 0 {
            return Err(err("regrid_interval", "must be >= 1"));
        }
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(err("cutoff", "must lie in (0, 1]"));
        }
        if self.min_patch_dim == 0 {
            return Err(err("min_patch_dim", "must be >= 1"));
        }
        if self.min_patch_dim > self.max_patch_dim {
            return Err(err("min_patch_dim", "must not exceed max_patch_dim"));
        }
        if self.ghost_width != 2 {
            return Err(err("ghost_width", "the second-order scheme requires exactly 2"));
        }
        for (i, &r) in self.refinement_ratios.iter().take(self.max_levels.saturating_sub(1)).enumerate() {
            if self.max_patch_dim < r {
                return Err(err(
                    "max_patch_dim",
                    format!("smaller than refinement ratio {r} of level {}", i + 1),
                ));
            }
        }
        if !(self.flag_tolerance >= 0.0) {
            return Err(err("flag_tolerance", "must be >= 0"));
        }
        if !(self.t_final >= 0.0) {
            return Err(err("t_final", "must be >= 0"));
        }
        if !(self.bulk_modulus > 0.0) {
            return Err(err("bulk_modulus", "must be positive"));
        }
        if !(self.density > 0.0) {
            return Err(err("density", "must be positive"));
        }
        let periodic = |b: Boundary| b == Boundary::Periodic;
        if periodic(self.boundary[0]) != periodic(self.boundary[1]) {
            return Err(err("bc_right", "periodic boundaries must be set on both x sides"));
        }
        if periodic(self.boundary[2]) != periodic(self.boundary[3]) {
            return Err(err("bc_top", "periodic boundaries must be set on both y sides"));
        }
        if self.output_times.iter().any(|t| !(*t >= 0.0)) {
            return Err(err("output_times", "times must be >= 0"));
        }
        if !(1..=2).contains(&self.device.copy_engines) {
            return Err(err("copy_engines", "must be 1 or 2"));
        }
        if !(self.device.bandwidth > 0.0) {
            return Err(err("bandwidth", "must be positive"));
        }
        if !(self.device.launch_overhead >= 0.0) {
            return Err(err("launch_overhead", "must be >= 0"));
        }
        if !(self.device.cell_cost >= 0.0) {
            return Err(err("cell_cost", "must be >= 0"));
        }
        if self.device.pool_chunk_bytes == 0 {
            return Err(err("pool_chunk_bytes", "must be positive"));
        }
        Ok(())
    }

    pub fn periodic_x(&self) -> bool {
        self.boundary[0] == Boundary::Periodic
    }

    pub fn periodic_y(&self) -> bool {
        self.boundary[2] == Boundary::Periodic
    }

    pub fn sound_speed(&self) -> f64 {
        (self.bulk_modulus / self.density).sqrt()
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max.unwrap_or_else(|| {
            let w = (self.x_upper - self.x_lower).min(self.y_upper - self.y_lower);
            0.1 * w / self.sound_speed()
        })
    }

    /// Ratio between level `level` and `level + 1` (0-based levels).
    pub fn ratio(&self, level: usize) -> usize {
        self.refinement_ratios[level]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        AmrConfig::default().validate().unwrap();
    }

    #[test]
    fn parse_overrides_and_comments() {
        let c = AmrConfig::parse("# demo\nmx = 64 # base\nmy=32\n\nrefinement_ratios = 4\nbc_left = periodic\nbc_right = periodic\n").unwrap();
        assert_eq!((c.mx, c.my), (64, 32));
        assert_eq!(c.refinement_ratios, vec![4, 4]);
        assert!(c.periodic_x() && !c.periodic_y());
    }

    #[test]
    fn unknown_key_reports_line() {
        match AmrConfig::parse("mx = 10\n\ncutof = 0.5\n") {
            Err(AmrError::Parse { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("cutof"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_line() {
        assert!(matches!(AmrConfig::parse("mx = ten"), Err(AmrError::Parse { line: 1, .. })));
    }

    #[test]
    fn zero_cells_names_key() {
        match AmrConfig::parse("mx = 0") {
            Err(AmrError::Config { key, .. }) => assert_eq!(key, "mx"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ghost_width_is_fixed() {
        assert!(matches!(AmrConfig::parse("ghost_width = 3"), Err(AmrError::Config { .. })));
    }

    #[test]
    fn one_sided_periodic_rejected() {
        assert!(AmrConfig::parse("bc_left = periodic").is_err());
    }
}
