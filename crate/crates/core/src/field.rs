/// Cell data of one patch including its ghost frame.
///
/// Values are stored cell by cell with the `m` components of a cell adjacent,
/// rows of the padded array contiguous. Interior indices run over
/// `0..nx` x `0..ny`; ghosts use `-g..0` and `nx..nx+g`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchField {
    m: usize,
    nx: usize,
    ny: usize,
    g: usize,
    pub time: f64,
    data: Vec<f64>,
}

impl PatchField {
    pub fn new(m: usize, nx: usize, ny: usize, g: usize) -> Self {
        PatchField {
            m,
            nx,
            ny,
            g,
            time: 0.0,
            data: vec![0.0; m * (nx + 2 * g) * (ny + 2 * g)],
        }
    }

    pub fn num_eqn(&self) -> usize {
        self.m
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn ghost_width(&self) -> usize {
        self.g
    }

    /// Padded row length in cells.
    pub fn stride(&self) -> usize {
        self.nx + 2 * self.g
    }

    pub fn padded_rows(&self) -> usize {
        self.ny + 2 * self.g
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, i: i64, j: i64) -> usize {
        let g = self.g as i64;
        debug_assert!(i >= -g && i < self.nx as i64 + g, "i={i} out of range");
        debug_assert!(j >= -g && j < self.ny as i64 + g, "j={j} out of range");
        (((j + g) as usize) * self.stride() + (i + g) as usize) * self.m
    }

    /// Offset of padded cell `(pi, pj)`, both counted from the ghost corner.
    #[inline]
    pub fn padded_offset(&self, pi: usize, pj: usize) -> usize {
        (pj * self.stride() + pi) * self.m
    }

    #[inline]
    pub fn get(&self, k: usize, i: i64, j: i64) -> f64 {
        self.data[self.offset(i, j) + k]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: i64, j: i64, v: f64) {
        let o = self.offset(i, j);
        self.data[o + k] = v;
    }

    #[inline]
    pub fn cell(&self, i: i64, j: i64) -> &[f64] {
        let o = self.offset(i, j);
        &self.data[o..o + self.m]
    }

    #[inline]
    pub fn cell_mut(&mut self, i: i64, j: i64) -> &mut [f64] {
        let o = self.offset(i, j);
        &mut self.data[o..o + self.m]
    }

    pub fn is_ghost(&self, i: i64, j: i64) -> bool {
        i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Componentwise sum over interior cells.
    pub fn interior_sum(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.m];
        for j in 0..self.ny as i64 {
            for i in 0..self.nx as i64 {
                for (k, v) in self.cell(i, j).iter().enumerate() {
                    s[k] += v;
                }
            }
        }
        s
    }

    /// Copy the interior from another field of identical shape.
    pub fn copy_interior_from(&mut self, other: &PatchField) {
        assert_eq!((self.m, self.nx, self.ny), (other.m, other.nx, other.ny));
        for j in 0..self.ny as i64 {
            let a = self.offset(0, j);
            let b = other.offset(0, j);
            let len = self.nx * self.m;
            self.data[a..a + len].copy_from_slice(&other.data[b..b + len]);
        }
    }

    /// Bytes of the whole padded array.
    pub fn bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f64>()
    }
}
