use serde::{Deserialize, Serialize};

use super::lattice_box::LatticeBox;
use crate::error::{invalid, Result};

/// Partition of an ambient box into translates of `[0, k)^d` anchored at
/// `anchor`, clipped to the box. Unclipped tiles have side `k - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tiling {
    ambient: LatticeBox,
    k: i32,
    anchor: Vec<i32>,
    index_box: LatticeBox,
}

fn floor_div(a: i32, b: i32) -> i32 {
    a.div_euclid(b)
}

impl Tiling {
    /// Tiling anchored at the lower corner of `ambient`.
    pub fn new(ambient: &LatticeBox, k: i32) -> Result<Self> {
        Self::anchored(ambient, k, ambient.lo())
    }

    pub fn anchored(ambient: &LatticeBox, k: i32, anchor: &[i32]) -> Result<Self> {
        if k < 2 {
            return Err(invalid(format!("tile parameter k = {k} must be at least 2")));
        }
        if anchor.len() != ambient.dim() {
            return Err(invalid("anchor dimension mismatch"));
        }
        let lo: Vec<i32> = (0..ambient.dim()).map(|a| floor_div(ambient.lo()[a] - anchor[a], k)).collect();
        let hi: Vec<i32> = (0..ambient.dim()).map(|a| floor_div(ambient.hi()[a] - anchor[a], k)).collect();
        Ok(Tiling { ambient: ambient.clone(), k, anchor: anchor.to_vec(), index_box: LatticeBox::new(lo, hi)? })
    }

    pub fn anchor(&self) -> &[i32] {
        &self.anchor
    }
    pub fn k(&self) -> i32 {
        self.k
    }
    pub fn ambient(&self) -> &LatticeBox {
        &self.ambient
    }
    /// Box of macroscopic indices `x~`.
    pub fn index_box(&self) -> &LatticeBox {
        &self.index_box
    }
    pub fn tile_count(&self) -> usize {
        self.index_box.vertex_count()
    }
    /// Index of the tile containing `y`, in constant time.
    pub fn tile_of(&self, y: &[i32]) -> Vec<i32> {
        y.iter().zip(&self.anchor).map(|(v, a)| floor_div(v - a, self.k)).collect()
    }
    /// Unclipped tile `T(x~) = {y : anchor + k x~ <= y < anchor + k (x~ + 1)}`.
    pub fn full_tile(&self, idx: &[i32]) -> LatticeBox {
        let lo: Vec<i32> = idx.iter().zip(&self.anchor).map(|(i, a)| a + i * self.k).collect();
        let hi: Vec<i32> = lo.iter().map(|l| l + self.k - 1).collect();
        LatticeBox::new(lo, hi).expect("tile corners are ordered")
    }
    /// Tile clipped to the ambient box.
    pub fn tile(&self, idx: &[i32]) -> Option<LatticeBox> {
        self.full_tile(idx).intersect(&self.ambient)
    }
    pub fn is_clipped(&self, idx: &[i32]) -> bool {
        !self.ambient.contains_box(&self.full_tile(idx))
    }
}

/// Free-function form of [`Tiling::new`].
pub fn tile(bx: &LatticeBox, k: i32) -> Result<Tiling> {
    Tiling::new(bx, k)
}

/// Concentric enlargements of a cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enlargement {
    /// Side `floor(3n/2)`.
    pub plus: LatticeBox,
    /// Side `floor(6n/5)`.
    pub oplus: LatticeBox,
    /// Set when an ambient box was supplied and clipping changed a cube.
    pub plus_clipped: bool,
    pub oplus_clipped: bool,
}

fn scaled(q: &LatticeBox, num: i32, den: i32) -> LatticeBox {
    let mut lo = Vec::with_capacity(q.dim());
    let mut hi = Vec::with_capacity(q.dim());
    for a in 0..q.dim() {
        let n = q.side(a);
        let n2 = n * num / den;
        let l = q.lo()[a] - (n2 - n) / 2;
        lo.push(l);
        hi.push(l + n2);
    }
    LatticeBox::new(lo, hi).expect("enlargement is ordered")
}

/// `Q+` and `Q⊕` with integer sides `floor(3n/2)` and `floor(6n/5)` about the
/// center of `Q`; when the side change is odd the extra unit goes to the
/// upper corner.
pub fn enlarge_cube(q: &LatticeBox) -> Enlargement {
    Enlargement { plus: scaled(q, 3, 2), oplus: scaled(q, 6, 5), plus_clipped: false, oplus_clipped: false }
}

/// As [`enlarge_cube`], clipped to `ambient`.
pub fn enlarge_within(q: &LatticeBox, ambient: &LatticeBox) -> Enlargement {
    let e = enlarge_cube(q);
    let plus = e.plus.intersect(ambient).unwrap_or_else(|| q.clone());
    let oplus = e.oplus.intersect(ambient).unwrap_or_else(|| q.clone());
    Enlargement {
        plus_clipped: plus != e.plus,
        oplus_clipped: oplus != e.oplus,
        plus,
        oplus,
    }
}

/// `Q+` only.
pub fn plus_of(q: &LatticeBox) -> LatticeBox {
    scaled(q, 3, 2)
}

/// `Q⊕` only.
pub fn oplus_of(q: &LatticeBox) -> LatticeBox {
    scaled(q, 6, 5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling_partitions_box() {
        // 10 vertices per axis, k = 5: four 5x5 tiles
        let b = LatticeBox::cube(&[0, 0], 9).unwrap();
        let t = Tiling::new(&b, 5).unwrap();
        assert_eq!(t.tile_count(), 4);
        let mut hits = vec![0; b.vertex_count()];
        for idx in t.index_box().points() {
            let tb = t.tile(&idx).unwrap();
            assert_eq!(tb.side(0), 4);
            assert_eq!(tb.vertex_count(), 25);
            for p in tb.points() {
                hits[b.index_of(&p).unwrap()] += 1;
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn tile_lookup_is_floor_division() {
        let b = LatticeBox::cube(&[0, 0], 20).unwrap();
        let t = Tiling::anchored(&b, 5, &[0, 0]).unwrap();
        assert_eq!(t.tile_of(&[7, 3]), vec![1, 0]);
        let neg = LatticeBox::cube(&[-7, -7], 14).unwrap();
        let tn = Tiling::anchored(&neg, 5, &[0, 0]).unwrap();
        assert_eq!(tn.tile_of(&[-1, 4]), vec![-1, 0]);
    }

    #[test]
    fn oversized_tile_is_clipped() {
        let b = LatticeBox::cube(&[0, 0], 3).unwrap();
        let t = Tiling::new(&b, 10).unwrap();
        assert_eq!(t.tile_count(), 1);
        assert_eq!(t.tile(&[0, 0]).unwrap(), b);
        assert!(t.is_clipped(&[0, 0]));
        assert!(Tiling::new(&b, 1).is_err());
    }

    #[test]
    fn enlargement_sides_and_centers() {
        let q = LatticeBox::cube(&[0, 0], 20).unwrap();
        let e = enlarge_cube(&q);
        assert_eq!(e.plus.side(0), 30);
        assert_eq!(e.oplus.side(1), 24);
        assert_eq!(e.plus.center(), q.center());
        assert_eq!(e.oplus.center(), q.center());
        let one = LatticeBox::cube(&[4, 4], 1).unwrap();
        let e1 = enlarge_cube(&one);
        assert_eq!(e1.plus, one);
        assert_eq!(e1.oplus, one);
    }

    #[test]
    fn clipping_is_recorded() {
        let amb = LatticeBox::cube(&[0, 0], 20).unwrap();
        let q = LatticeBox::cube(&[0, 0], 10).unwrap();
        let e = enlarge_within(&q, &amb);
        assert!(e.plus_clipped);
        assert!(amb.contains_box(&e.plus));
    }
}
