//! Integer index boxes and orientation helpers.
//!
//! Every level has its own global index space: level-0 cell `(i, j)` covers
//! `[x0 + i dx, x0 + (i+1) dx) x [y0 + j dy, y0 + (j+1) dy)`, and a level-`l+1`
//! cell `(m, b)` lies inside level-`l` cell `(floor(m / R), floor(b / R))`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }
}

/// One of the four sides of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn axis(self) -> Axis {
        match self {
            Side::Left | Side::Right => Axis::X,
            Side::Bottom | Side::Top => Axis::Y,
        }
    }

    /// True for the side with the larger coordinate (right, top).
    pub fn is_high(self) -> bool {
        matches!(self, Side::Right | Side::Top)
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }

    /// Unit step pointing out of the rectangle through this side.
    pub fn outward(self) -> (i64, i64) {
        match self {
            Side::Left => (-1, 0),
            Side::Right => (1, 0),
            Side::Bottom => (0, -1),
            Side::Top => (0, 1),
        }
    }
}

/// Half-open integer box `[i0, i0+nx) x [j0, j0+ny)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexBox {
    pub i0: i64,
    pub j0: i64,
    pub nx: usize,
    pub ny: usize,
}

impl IndexBox {
    pub fn new(i0: i64, j0: i64, nx: usize, ny: usize) -> Self {
        IndexBox { i0, j0, nx, ny }
    }

    pub fn i1(&self) -> i64 {
        self.i0 + self.nx as i64
    }

    pub fn j1(&self) -> i64 {
        self.j0 + self.ny as i64
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.nx == 0 || self.ny == 0
    }

    pub fn contains(&self, i: i64, j: i64) -> bool {
        i >= self.i0 && i < self.i1() && j >= self.j0 && j < self.j1()
    }

    pub fn contains_box(&self, other: &IndexBox) -> bool {
        other.i0 >= self.i0 && other.i1() <= self.i1() && other.j0 >= self.j0 && other.j1() <= self.j1()
    }

    pub fn intersect(&self, other: &IndexBox) -> Option<IndexBox> {
        let i0 = self.i0.max(other.i0);
        let j0 = self.j0.max(other.j0);
        let i1 = self.i1().min(other.i1());
        let j1 = self.j1().min(other.j1());
        if i1 > i0 && j1 > j0 {
            Some(IndexBox::new(i0, j0, (i1 - i0) as usize, (j1 - j0) as usize))
        } else {
            None
        }
    }

    pub fn refine(&self, ratio: usize) -> IndexBox {
        let r = ratio as i64;
        IndexBox::new(self.i0 * r, self.j0 * r, self.nx * ratio, self.ny * ratio)
    }

    /// Smallest coarse box containing this box.
    pub fn coarsen(&self, ratio: usize) -> IndexBox {
        let r = ratio as i64;
        let i0 = self.i0.div_euclid(r);
        let j0 = self.j0.div_euclid(r);
        let i1 = (self.i1() + r - 1).div_euclid(r);
        let j1 = (self.j1() + r - 1).div_euclid(r);
        IndexBox::new(i0, j0, (i1 - i0) as usize, (j1 - j0) as usize)
    }

    pub fn grow(&self, n: i64) -> IndexBox {
        IndexBox::new(
            self.i0 - n,
            self.j0 - n,
            (self.nx as i64 + 2 * n).max(0) as usize,
            (self.ny as i64 + 2 * n).max(0) as usize,
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let (i0, i1) = (self.i0, self.i1());
        (self.j0..self.j1()).flat_map(move |j| (i0..i1).map(move |i| (i, j)))
    }
}

/// Map a fine index to its coarse parent index.
pub fn coarsen_index(i: i64, ratio: usize) -> i64 {
    i.div_euclid(ratio as i64)
}
