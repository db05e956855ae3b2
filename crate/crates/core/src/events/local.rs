use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::percolation::{BondConfig, LatticeBox, SiteConfig};

pub(crate) const NONE: u32 = u32::MAX;

/// Nearest-neighbour open graph of a configuration restricted to a box, in
/// region-local indices. Edges leaving the box are dropped.
pub(crate) struct LocalGraph {
    region: LatticeBox,
    masks: Vec<u32>,
    open: Vec<bool>,
    strides: Vec<usize>,
}

/// Connected components of a [`LocalGraph`].
pub(crate) struct Labels {
    pub label: Vec<u32>,
    pub sizes: Vec<usize>,
    /// Bit `2a` when the cluster meets the lower face of axis `a`, bit
    /// `2a + 1` for the upper face.
    pub faces: Vec<u64>,
    /// Largest extent `max_a (hi_a - lo_a)` of the bounding box.
    pub diam: Vec<i32>,
    pub min_vertex: Vec<Vec<i32>>,
}

impl Labels {
    pub fn largest(&self) -> Option<u32> {
        (0..self.sizes.len())
            .min_by(|&a, &b| {
                self.sizes[b].cmp(&self.sizes[a]).then_with(|| self.min_vertex[a].cmp(&self.min_vertex[b]))
            })
            .map(|i| i as u32)
    }
    pub fn spans(&self, id: u32, d: usize) -> bool {
        let all = if d == 32 { u64::MAX } else { (1u64 << (2 * d)) - 1 };
        self.faces[id as usize] & all == all
    }
}

fn outside(region: &LatticeBox) -> Error {
    Error::OutsideRegion(region.hi().to_vec())
}

impl LocalGraph {
    pub fn bond(cfg: &BondConfig, region: &LatticeBox) -> Result<Self> {
        let frame = cfg.lattice_box();
        if !frame.contains_box(region) {
            return Err(outside(region));
        }
        let d = region.dim();
        let mut masks = vec![0u32; region.vertex_count()];
        let mut c = vec![0; d];
        for (r, m) in masks.iter_mut().enumerate() {
            region.coords_into(r, &mut c);
            let mut bits = cfg.mask(frame.index_of(&c).expect("inside frame"));
            for a in 0..d {
                if c[a] == region.hi()[a] {
                    bits &= !(1 << (2 * a));
                }
                if c[a] == region.lo()[a] {
                    bits &= !(1 << (2 * a + 1));
                }
            }
            *m = bits;
        }
        let open = masks.iter().map(|&m| m != 0).collect();
        Ok(LocalGraph { strides: (0..d).map(|a| region.stride(a)).collect(), region: region.clone(), masks, open })
    }

    pub fn site(cfg: &SiteConfig, region: &LatticeBox) -> Result<Self> {
        let frame = cfg.lattice_box();
        if !frame.contains_box(region) {
            return Err(outside(region));
        }
        let d = region.dim();
        let n = region.vertex_count();
        let mut c = vec![0; d];
        let open: Vec<bool> = (0..n)
            .map(|r| {
                region.coords_into(r, &mut c);
                cfg.is_open_at(&c)
            })
            .collect();
        let strides: Vec<usize> = (0..d).map(|a| region.stride(a)).collect();
        let mut masks = vec![0u32; n];
        for r in 0..n {
            if !open[r] {
                continue;
            }
            region.coords_into(r, &mut c);
            for a in 0..d {
                if c[a] < region.hi()[a] && open[r + strides[a]] {
                    masks[r] |= 1 << (2 * a);
                    masks[r + strides[a]] |= 1 << (2 * a + 1);
                }
            }
        }
        Ok(LocalGraph { region: region.clone(), masks, open, strides })
    }

    pub fn region(&self) -> &LatticeBox {
        &self.region
    }
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    #[inline]
    pub fn for_each_neighbor(&self, r: usize, mut f: impl FnMut(usize, usize, bool)) {
        let m = self.masks[r];
        let mut bits = m;
        while bits != 0 {
            let dir = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let a = dir / 2;
            if dir % 2 == 0 {
                f(r + self.strides[a], a, true);
            } else {
                f(r - self.strides[a], a, false);
            }
        }
    }

    pub fn label(&self) -> Labels {
        let n = self.len();
        let d = self.region.dim();
        let mut label = vec![NONE; n];
        let (mut sizes, mut faces, mut diam, mut min_vertex) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut queue = Vec::new();
        let mut c = vec![0; d];
        let (lo, hi) = (self.region.lo(), self.region.hi());
        for start in 0..n {
            if label[start] != NONE || !self.open[start] {
                continue;
            }
            let id = sizes.len() as u32;
            label[start] = id;
            queue.clear();
            queue.push(start);
            let mut best = self.region.coords_of(start);
            let mut bmin = best.clone();
            let mut bmax = best.clone();
            let mut fc = 0u64;
            let mut head = 0;
            while head < queue.len() {
                let r = queue[head];
                head += 1;
                self.region.coords_into(r, &mut c);
                if c.as_slice().cmp(best.as_slice()) == Ordering::Less {
                    best.copy_from_slice(&c);
                }
                for a in 0..d {
                    bmin[a] = bmin[a].min(c[a]);
                    bmax[a] = bmax[a].max(c[a]);
                    if c[a] == lo[a] {
                        fc |= 1 << (2 * a);
                    }
                    if c[a] == hi[a] {
                        fc |= 1 << (2 * a + 1);
                    }
                }
                self.for_each_neighbor(r, |s, _, _| {
                    if label[s] == NONE {
                        label[s] = id;
                        queue.push(s);
                    }
                });
            }
            sizes.push(queue.len());
            faces.push(fc);
            diam.push((0..d).map(|a| bmax[a] - bmin[a]).max().unwrap_or(0));
            min_vertex.push(best);
        }
        Labels { label, sizes, faces, diam, min_vertex }
    }

    /// Whether the members (`keep(r)`) inside `sub` join the opposing faces
    /// of `sub` along every axis through edges inside `sub`.
    pub fn crosses(&self, sub: &LatticeBox, keep: impl Fn(usize) -> bool, scratch: &mut Scratch) -> bool {
        let d = self.region.dim();
        if sub.min_side() == 0 {
            return true;
        }
        let epoch = scratch.advance(self.len());
        let (slo, shi) = (sub.lo(), sub.hi());
        let mut need = (0..d).fold(0u64, |acc, a| acc | 3 << (2 * a));
        let mut c = vec![0; d];
        let mut lc = vec![0; d];
        for p in sub.points() {
            let r = self.region.index_of(&p).expect("sub-box inside region");
            if scratch.mark[r] == epoch || !keep(r) {
                continue;
            }
            scratch.mark[r] = epoch;
            scratch.queue.clear();
            scratch.queue.push(r);
            let mut fc = 0u64;
            let mut head = 0;
            while head < scratch.queue.len() {
                let u = scratch.queue[head];
                head += 1;
                self.region.coords_into(u, &mut c);
                for a in 0..d {
                    if c[a] == slo[a] {
                        fc |= 1 << (2 * a);
                    }
                    if c[a] == shi[a] {
                        fc |= 1 << (2 * a + 1);
                    }
                }
                lc.copy_from_slice(&c);
                let mark = &mut scratch.mark;
                let queue = &mut scratch.queue;
                self.for_each_neighbor(u, |s, a, up| {
                    let inside = if up { lc[a] < shi[a] } else { lc[a] > slo[a] };
                    if inside && mark[s] != epoch && keep(s) {
                        mark[s] = epoch;
                        queue.push(s);
                    }
                });
            }
            for a in 0..d {
                if fc >> (2 * a) & 3 == 3 {
                    need &= !(3 << (2 * a));
                }
            }
            if need == 0 {
                return true;
            }
        }
        false
    }

    /// Breadth-first distances from `src` through open edges of the region.
    pub fn distances(&self, src: usize, scratch: &mut Scratch) -> Vec<u32> {
        let mut dist = vec![NONE; self.len()];
        if !self.open[src] {
            return dist;
        }
        dist[src] = 0;
        scratch.queue.clear();
        scratch.queue.push(src);
        let mut head = 0;
        while head < scratch.queue.len() {
            let u = scratch.queue[head];
            head += 1;
            let du = dist[u];
            let queue = &mut scratch.queue;
            self.for_each_neighbor(u, |s, _, _| {
                if dist[s] == NONE {
                    dist[s] = du + 1;
                    queue.push(s);
                }
            });
        }
        dist
    }
}

/// Reusable marks for repeated searches over one region.
#[derive(Default)]
pub(crate) struct Scratch {
    mark: Vec<u32>,
    epoch: u32,
    queue: Vec<usize>,
}

impl Scratch {
    fn advance(&mut self, n: usize) -> u32 {
        if self.mark.len() < n || self.epoch == u32::MAX - 1 {
            self.mark.clear();
            self.mark.resize(n, 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.epoch
    }
}
