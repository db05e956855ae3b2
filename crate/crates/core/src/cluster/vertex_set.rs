use crate::error::{Error, Result};
use crate::percolation::LatticeBox;

/// Sorted set of vertices, stored as linear indices into a frame box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSet {
    frame: LatticeBox,
    idx: Vec<usize>,
}

impl VertexSet {
    pub fn new(frame: &LatticeBox, mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        VertexSet { frame: frame.clone(), idx }
    }

    pub fn empty(frame: &LatticeBox) -> Self {
        VertexSet { frame: frame.clone(), idx: Vec::new() }
    }

    pub fn from_points(frame: &LatticeBox, pts: &[Vec<i32>]) -> Result<Self> {
        let idx = pts
            .iter()
            .map(|p| frame.index_of(p).ok_or_else(|| Error::OutsideRegion(p.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(frame, idx))
    }

    /// All vertices of `region` (which must lie in `frame`).
    pub fn from_box(frame: &LatticeBox, region: &LatticeBox) -> Self {
        let idx = region.points().filter_map(|p| frame.index_of(&p)).collect();
        Self::new(frame, idx)
    }

    pub fn frame(&self) -> &LatticeBox {
        &self.frame
    }
    pub fn indices(&self) -> &[usize] {
        &self.idx
    }
    pub fn len(&self) -> usize {
        self.idx.len()
    }
    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }
    pub fn contains(&self, v: usize) -> bool {
        self.idx.binary_search(&v).is_ok()
    }
    pub fn contains_point(&self, p: &[i32]) -> bool {
        self.frame.index_of(p).map(|v| self.contains(v)).unwrap_or(false)
    }
    pub fn points(&self) -> Vec<Vec<i32>> {
        self.idx.iter().map(|&v| self.frame.coords_of(v)).collect()
    }
    pub fn is_subset(&self, other: &VertexSet) -> bool {
        self.frame == other.frame && self.idx.iter().all(|&v| other.contains(v))
    }
    /// Members lying in `region`.
    pub fn restrict(&self, region: &LatticeBox) -> VertexSet {
        let mut c = vec![0; self.frame.dim()];
        let idx = self
            .idx
            .iter()
            .copied()
            .filter(|&v| {
                self.frame.coords_into(v, &mut c);
                region.contains(&c)
            })
            .collect();
        VertexSet { frame: self.frame.clone(), idx }
    }
    /// Membership bitmap over the frame.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.frame.vertex_count()];
        for &v in &self.idx {
            m[v] = true;
        }
        m
    }
}
