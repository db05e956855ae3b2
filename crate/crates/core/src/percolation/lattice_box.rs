use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Closed integer box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]` in `Z^d`.
///
/// "Side n" means `n + 1` vertices along that axis. Vertices are linearly
/// indexed with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Vec<i32>,
    hi: Vec<i32>,
}

/// Largest supported dimension; neighbour masks use two bits per axis.
pub const MAX_DIM: usize = 16;

impl LatticeBox {
    pub fn new(lo: Vec<i32>, hi: Vec<i32>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(invalid("box corners must have the same positive dimension"));
        }
        if lo.len() > MAX_DIM {
            return Err(invalid(format!("dimension {} exceeds {MAX_DIM}", lo.len())));
        }
        if lo.iter().zip(&hi).any(|(l, h)| h < l) {
            return Err(invalid(format!("box hi {hi:?} below lo {lo:?}")));
        }
        let count = lo
            .iter()
            .zip(&hi)
            .try_fold(1usize, |acc, (l, h)| acc.checked_mul((h - l) as usize + 1));
        match count {
            Some(c) if c <= u32::MAX as usize => Ok(LatticeBox { lo, hi }),
            _ => Err(invalid("vertex count overflows u32")),
        }
    }

    /// Cube with lower corner `lo` and side `side` on every axis.
    pub fn cube(lo: &[i32], side: i32) -> Result<Self> {
        Self::new(lo.to_vec(), lo.iter().map(|l| l + side).collect())
    }

    /// Cube `{z : |z - center|_inf <= radius}`.
    pub fn centered(center: &[i32], radius: i32) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
    pub fn lo(&self) -> &[i32] {
        &self.lo
    }
    pub fn hi(&self) -> &[i32] {
        &self.hi
    }
    /// Number of vertices along `axis`.
    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis]) as usize + 1
    }
    /// Side length along `axis` (`extent - 1`).
    pub fn side(&self, axis: usize) -> i32 {
        self.hi[axis] - self.lo[axis]
    }
    /// Smallest side over all axes.
    pub fn min_side(&self) -> i32 {
        (0..self.dim()).map(|a| self.side(a)).min().unwrap_or(0)
    }
    pub fn is_cube(&self) -> bool {
        (1..self.dim()).all(|a| self.side(a) == self.side(0))
    }
    pub fn vertex_count(&self) -> usize {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }
    /// Number of nearest-neighbour edges with both endpoints in the box.
    pub fn edge_count(&self) -> usize {
        (0..self.dim()).map(|a| self.axis_edge_count(a)).sum()
    }
    pub(crate) fn axis_edge_count(&self, axis: usize) -> usize {
        (0..self.dim())
            .map(|b| if b == axis { self.extent(b) - 1 } else { self.extent(b) })
            .product()
    }

    pub fn contains(&self, p: &[i32]) -> bool {
        p.len() == self.dim() && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| l <= x && x <= h)
    }
    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|a| self.lo[a] <= other.lo[a] && other.hi[a] <= self.hi[a])
    }
    pub fn intersect(&self, other: &LatticeBox) -> Option<LatticeBox> {
        if other.dim() != self.dim() {
            return None;
        }
        let lo: Vec<i32> = (0..self.dim()).map(|a| self.lo[a].max(other.lo[a])).collect();
        let hi: Vec<i32> = (0..self.dim()).map(|a| self.hi[a].min(other.hi[a])).collect();
        if lo.iter().zip(&hi).any(|(l, h)| h < l) {
            None
        } else {
            Some(LatticeBox { lo, hi })
        }
    }
    pub fn intersects(&self, other: &LatticeBox) -> bool {
        self.intersect(other).is_some()
    }
    /// Real-valued center.
    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| (self.lo[a] as f64 + self.hi[a] as f64) / 2.0).collect()
    }
    /// Integer vertex nearest the center (rounding down on ties).
    pub fn center_vertex(&self) -> Vec<i32> {
        (0..self.dim()).map(|a| self.lo[a] + self.side(a) / 2).collect()
    }

    pub fn index_of(&self, p: &[i32]) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let mut idx = 0usize;
        let mut stride = 1usize;
        for a in 0..self.dim() {
            idx += (p[a] - self.lo[a]) as usize * stride;
            stride *= self.extent(a);
        }
        Some(idx)
    }

    pub fn coords_into(&self, mut idx: usize, out: &mut [i32]) {
        for a in 0..self.dim() {
            let e = self.extent(a);
            out[a] = self.lo[a] + (idx % e) as i32;
            idx /= e;
        }
    }

    pub fn coords_of(&self, idx: usize) -> Vec<i32> {
        let mut out = vec![0; self.dim()];
        self.coords_into(idx, &mut out);
        out
    }

    /// Linear stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        (0..axis).map(|a| self.extent(a)).product()
    }

    /// Iterates over all vertices in index order.
    pub fn points(&self) -> impl Iterator<Item = Vec<i32>> + '_ {
        (0..self.vertex_count()).map(move |i| self.coords_of(i))
    }

    /// Translates the box by `v`.
    pub fn translated(&self, v: &[i32]) -> LatticeBox {
        LatticeBox {
            lo: self.lo.iter().zip(v).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(v).map(|(a, b)| a + b).collect(),
        }
    }

    /// Whether `p` lies on the face `coord[axis] == lo[axis]` (`upper = false`)
    /// or `coord[axis] == hi[axis]` (`upper = true`).
    pub fn on_face(&self, p: &[i32], axis: usize, upper: bool) -> bool {
        if upper {
            p[axis] == self.hi[axis]
        } else {
            p[axis] == self.lo[axis]
        }
    }
}

/// `|x - y|_inf`.
pub fn linf(x: &[i32], y: &[i32]) -> i32 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
}

/// `|x - y|_1`.
pub fn l1(x: &[i32], y: &[i32]) -> i32 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// `|x - y|_2^2`.
pub fn l2_sq(x: &[i32], y: &[i32]) -> i64 {
    x.iter().zip(y).map(|(a, b)| ((a - b) as i64).pow(2)).sum()
}
