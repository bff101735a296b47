//! Plain-text hierarchy snapshots.
//!
//! ```text
//! waveamr-snapshot
//! time <t>
//! levels <number of levels>
//! components <m>
//! patches <number of patches>
//! patch <level> <i0> <j0> <nx> <ny> <dx> <dy>
//! <i> <j> <q_0> ... <q_m-1>        one row per cell, i fastest
//! ```
//!
//! Indices are global within the patch's level. Floats are written in
//! shortest round-trip form, so reading a snapshot back is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{AmrError, Result};
use crate::geometry::IndexBox;
use crate::hierarchy::Hierarchy;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPatch {
    pub level: usize,
    pub bbox: IndexBox,
    pub dx: f64,
    pub dy: f64,
    /// Interior values, cell-major, `i` fastest.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub levels: usize,
    pub components: usize,
    pub patches: Vec<SnapshotPatch>,
}

impl Snapshot {
    pub fn from_hierarchy(h: &Hierarchy) -> Self {
        let mut patches = Vec::new();
        for level in &h.levels {
            for p in &level.patches {
                let mut data = Vec::with_capacity(p.cells() * h.num_eqn);
                for j in 0..p.bbox.ny as i64 {
                    for i in 0..p.bbox.nx as i64 {
                        data.extend_from_slice(p.field.cell(i, j));
                    }
                }
                patches.push(SnapshotPatch { level: p.level, bbox: p.bbox, dx: p.dx, dy: p.dy, data });
            }
        }
        Snapshot { time: h.levels[0].time, levels: h.levels.len(), components: h.num_eqn, patches }
    }

    pub fn cells(&self) -> usize {
        self.patches.iter().map(|p| p.bbox.cells()).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "waveamr-snapshot");
        let _ = writeln!(s, "time {}", self.time);
        let _ = writeln!(s, "levels {}", self.levels);
        let _ = writeln!(s, "components {}", self.components);
        let _ = writeln!(s, "patches {}", self.patches.len());
        for p in &self.patches {
            let b = p.bbox;
            let _ = writeln!(s, "patch {} {} {} {} {} {} {}", p.level, b.i0, b.j0, b.nx, b.ny, p.dx, p.dy);
            for (k, q) in p.data.chunks(self.components).enumerate() {
                let _ = write!(s, "{} {}", b.i0 + (k % b.nx) as i64, b.j0 + (k / b.nx) as i64);
                for v in q {
                    let _ = write!(s, " {v}");
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| AmrError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AmrError::io(path, e))?;
        Self::parse(&text).map_err(|reason| AmrError::Snapshot { path: path.to_path_buf(), reason })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| format!("unexpected end of file, expected {what}"));
        let header = |(n, l): (usize, &str), key: &str| -> std::result::Result<String, String> {
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| format!("line {n}: expected `{key}`"))
        };
        fn num<T: std::str::FromStr>(n: usize, s: &str) -> std::result::Result<T, String> {
            s.trim().parse().map_err(|_| format!("line {n}: bad number `{s}`"))
        }
        let (n, magic) = next("header")?;
        if magic != "waveamr-snapshot" {
            return Err(format!("line {n}: not a snapshot"));
        }
        let l = next("time")?;
        let time = num(l.0, &header(l, "time")?)?;
        let l = next("levels")?;
        let levels = num(l.0, &header(l, "levels")?)?;
        let l = next("components")?;
        let components: usize = num(l.0, &header(l, "components")?)?;
        let l = next("patches")?;
        let count: usize = num(l.0, &header(l, "patches")?)?;
        let mut patches = Vec::with_capacity(count);
        for _ in 0..count {
            let l = next("patch")?;
            let n = l.0;
            let f: Vec<String> = header(l, "patch")?.split_whitespace().map(str::to_string).collect();
            if f.len() != 7 {
                return Err(format!("line {n}: patch line needs 7 fields"));
            }
            let bbox = IndexBox::new(num(n, &f[1])?, num(n, &f[2])?, num(n, &f[3])?, num(n, &f[4])?);
            let mut data = Vec::with_capacity(bbox.cells() * components);
            for k in 0..bbox.cells() {
                let (n, row) = next("cell row")?;
                let v: Vec<&str> = row.split_whitespace().collect();
                if v.len() != 2 + components {
                    return Err(format!("line {n}: expected {} fields", 2 + components));
                }
                let (i, j): (i64, i64) = (num(n, v[0])?, num(n, v[1])?);
                if (i, j) != (bbox.i0 + (k % bbox.nx) as i64, bbox.j0 + (k / bbox.nx) as i64) {
                    return Err(format!("line {n}: cell ({i},{j}) out of order"));
                }
                for s in &v[2..] {
                    data.push(num(n, s)?);
                }
            }
            patches.push(SnapshotPatch { level: num(n, &f[0])?, bbox, dx: num(n, &f[5])?, dy: num(n, &f[6])?, data });
        }
        Ok(Snapshot { time, levels, components, patches })
    }
}
