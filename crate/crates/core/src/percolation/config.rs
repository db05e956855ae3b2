use super::lattice_box::LatticeBox;
use crate::error::{invalid, Error, Result};
use crate::par::{map_indexed, Exec};
use crate::rng::{domain, uniform_at};

#[inline]
pub(crate) fn get_bit(words: &[u64], i: usize) -> bool {
    words[i >> 6] >> (i & 63) & 1 == 1
}

#[inline]
pub(crate) fn set_bit(words: &mut [u64], i: usize, v: bool) {
    if v {
        words[i >> 6] |= 1 << (i & 63);
    } else {
        words[i >> 6] &= !(1 << (i & 63));
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("probability {p} outside [0, 1]")))
    }
}

/// Packs `n` Bernoulli(`p`) bits drawn from the counter stream `(seed, dom)`.
fn sample_bits(n: usize, p: f64, seed: u64, dom: u64, exec: Exec) -> Vec<u64> {
    let words = n.div_ceil(64);
    map_indexed(exec, words, |w| {
        let mut word = 0u64;
        for b in 0..64 {
            let i = w * 64 + b;
            if i < n && uniform_at(seed, dom, i as u64) < p {
                word |= 1 << b;
            }
        }
        word
    })
}

/// Direction `2a` is `+e_a`, direction `2a + 1` is `-e_a`.
#[inline]
pub fn dir_axis(dir: usize) -> (usize, bool) {
    (dir / 2, dir % 2 == 0)
}

/// Bond percolation configuration on a finite box.
///
/// Edges are indexed axis-major: all edges parallel to axis 0 first, each
/// axis block ordered by the linear index of the lower endpoint within the
/// box shrunk by one along that axis.
#[derive(Debug, Clone)]
pub struct BondConfig {
    bx: LatticeBox,
    p: f64,
    seed: u64,
    bits: Vec<u64>,
    masks: Vec<u32>,
    strides: Vec<usize>,
}

impl PartialEq for BondConfig {
    fn eq(&self, other: &Self) -> bool {
        self.bx == other.bx && self.bits == other.bits && self.seed == other.seed && self.p.to_bits() == other.p.to_bits()
    }
}

impl BondConfig {
    /// Each edge open independently with probability `p`.
    pub fn sample(bx: &LatticeBox, p: f64, seed: u64) -> Result<Self> {
        Self::sample_with(bx, p, seed, Exec::default())
    }

    pub fn sample_with(bx: &LatticeBox, p: f64, seed: u64, exec: Exec) -> Result<Self> {
        check_probability(p)?;
        let bits = sample_bits(bx.edge_count(), p, seed, domain::BOND, exec);
        Ok(Self::assemble(bx.clone(), p, seed, bits))
    }

    /// Deterministic configuration: the edge from `x` to `x + e_axis` is open
    /// iff `open(x, axis)`. `p` is recorded as NaN.
    pub fn from_predicate(bx: &LatticeBox, open: impl Fn(&[i32], usize) -> bool) -> Self {
        let n = bx.edge_count();
        let mut bits = vec![0u64; n.div_ceil(64)];
        let mut c = vec![0; bx.dim()];
        for v in 0..bx.vertex_count() {
            bx.coords_into(v, &mut c);
            for a in 0..bx.dim() {
                if c[a] < bx.hi()[a] && open(&c, a) {
                    set_bit(&mut bits, edge_index(bx, &c, a), true);
                }
            }
        }
        Self::assemble(bx.clone(), f64::NAN, 0, bits)
    }

    /// Configuration with exactly the listed open edges `(x, axis)`.
    pub fn from_edges(bx: &LatticeBox, edges: &[(Vec<i32>, usize)]) -> Result<Self> {
        let mut bits = vec![0u64; bx.edge_count().div_ceil(64)];
        for (x, a) in edges {
            let mut y = x.clone();
            y[*a] += 1;
            if !bx.contains(x) || !bx.contains(&y) {
                return Err(Error::OutsideRegion(x.clone()));
            }
            set_bit(&mut bits, edge_index(bx, x, *a), true);
        }
        Ok(Self::assemble(bx.clone(), f64::NAN, 0, bits))
    }

    /// Rebuilds a configuration from its packed bit array.
    pub fn from_bits(bx: LatticeBox, p: f64, seed: u64, bits: Vec<u64>) -> Result<Self> {
        if bits.len() != bx.edge_count().div_ceil(64) {
            return Err(Error::Format("bit array length does not match the box".into()));
        }
        Ok(Self::assemble(bx, p, seed, bits))
    }

    fn assemble(bx: LatticeBox, p: f64, seed: u64, bits: Vec<u64>) -> Self {
        let nv = bx.vertex_count();
        let strides: Vec<usize> = (0..bx.dim()).map(|a| bx.stride(a)).collect();
        let mut masks = vec![0u32; nv];
        let mut c = vec![0; bx.dim()];
        for v in 0..nv {
            bx.coords_into(v, &mut c);
            for a in 0..bx.dim() {
                if c[a] < bx.hi()[a] && get_bit(&bits, edge_index(&bx, &c, a)) {
                    masks[v] |= 1 << (2 * a);
                    masks[v + strides[a]] |= 1 << (2 * a + 1);
                }
            }
        }
        BondConfig { bx, p, seed, bits, masks, strides }
    }

    pub fn lattice_box(&self) -> &LatticeBox {
        &self.bx
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn dim(&self) -> usize {
        self.bx.dim()
    }
    pub fn bits(&self) -> &[u64] {
        &self.bits
    }
    pub fn edge_count(&self) -> usize {
        self.bx.edge_count()
    }
    pub fn open_edge_count(&self) -> usize {
        let n = self.edge_count();
        (0..n).filter(|&i| get_bit(&self.bits, i)).count()
    }
    pub fn is_open_index(&self, edge: usize) -> bool {
        get_bit(&self.bits, edge)
    }
    /// Bit `2a` set iff the edge to `+e_a` is open, bit `2a + 1` for `-e_a`.
    #[inline]
    pub fn mask(&self, v: usize) -> u32 {
        self.masks[v]
    }
    /// Open degree in the whole configuration, the measure `mu(x)`.
    #[inline]
    pub fn degree(&self, v: usize) -> u32 {
        self.masks[v].count_ones()
    }
    /// A vertex is open iff it has at least one open incident edge.
    #[inline]
    pub fn is_vertex_open(&self, v: usize) -> bool {
        self.masks[v] != 0
    }
    #[inline]
    pub fn step(&self, v: usize, dir: usize) -> usize {
        let (a, up) = dir_axis(dir);
        if up {
            v + self.strides[a]
        } else {
            v - self.strides[a]
        }
    }
    /// Open neighbours of `v` as linear indices.
    pub fn open_neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let m = self.masks[v];
        (0..2 * self.dim()).filter(move |d| m >> d & 1 == 1).map(move |d| self.step(v, d))
    }
    /// Whether the edge `{x, x + e_axis}` is open.
    pub fn is_open(&self, x: &[i32], axis: usize) -> bool {
        self.bx
            .index_of(x)
            .map(|v| self.masks[v] >> (2 * axis) & 1 == 1)
            .unwrap_or(false)
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
}

/// Canonical index of the edge `{x, x + e_axis}`; requires `x[axis] < hi[axis]`.
pub fn edge_index(bx: &LatticeBox, x: &[i32], axis: usize) -> usize {
    let offset: usize = (0..axis).map(|a| bx.axis_edge_count(a)).sum();
    let mut idx = 0usize;
    let mut stride = 1usize;
    for a in 0..bx.dim() {
        let e = if a == axis { bx.extent(a) - 1 } else { bx.extent(a) };
        idx += (x[a] - bx.lo()[a]) as usize * stride;
        stride *= e;
    }
    offset + idx
}

/// Site percolation configuration on a finite box.
#[derive(Debug, Clone)]
pub struct SiteConfig {
    bx: LatticeBox,
    q: f64,
    seed: u64,
    bits: Vec<u64>,
}

impl PartialEq for SiteConfig {
    fn eq(&self, other: &Self) -> bool {
        self.bx == other.bx && self.bits == other.bits && self.seed == other.seed && self.q.to_bits() == other.q.to_bits()
    }
}

impl SiteConfig {
    pub fn sample(bx: &LatticeBox, q: f64, seed: u64) -> Result<Self> {
        Self::sample_with(bx, q, seed, Exec::default())
    }

    pub fn sample_with(bx: &LatticeBox, q: f64, seed: u64, exec: Exec) -> Result<Self> {
        check_probability(q)?;
        let bits = sample_bits(bx.vertex_count(), q, seed, domain::SITE, exec);
        Ok(SiteConfig { bx: bx.clone(), q, seed, bits })
    }

    pub fn from_predicate(bx: &LatticeBox, open: impl Fn(&[i32]) -> bool) -> Self {
        let n = bx.vertex_count();
        let mut bits = vec![0u64; n.div_ceil(64)];
        let mut c = vec![0; bx.dim()];
        for v in 0..n {
            bx.coords_into(v, &mut c);
            if open(&c) {
                set_bit(&mut bits, v, true);
            }
        }
        SiteConfig { bx: bx.clone(), q: f64::NAN, seed: 0, bits }
    }

    /// Builds a field from per-vertex booleans in index order.
    pub fn from_vec(bx: &LatticeBox, open: &[bool]) -> Result<Self> {
        if open.len() != bx.vertex_count() {
            return Err(invalid("site vector length does not match the box"));
        }
        let mut bits = vec![0u64; open.len().div_ceil(64)];
        for (i, &o) in open.iter().enumerate() {
            set_bit(&mut bits, i, o);
        }
        Ok(SiteConfig { bx: bx.clone(), q: f64::NAN, seed: 0, bits })
    }

    pub fn from_bits(bx: LatticeBox, q: f64, seed: u64, bits: Vec<u64>) -> Result<Self> {
        if bits.len() != bx.vertex_count().div_ceil(64) {
            return Err(Error::Format("bit array length does not match the box".into()));
        }
        Ok(SiteConfig { bx, q, seed, bits })
    }

    pub fn lattice_box(&self) -> &LatticeBox {
        &self.bx
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn bits(&self) -> &[u64] {
        &self.bits
    }
    #[inline]
    pub fn is_open(&self, v: usize) -> bool {
        get_bit(&self.bits, v)
    }
    pub fn is_open_at(&self, x: &[i32]) -> bool {
        self.bx.index_of(x).map(|v| self.is_open(v)).unwrap_or(false)
    }
    pub fn open_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Shifted open set `{x - sigma : x open}`; sites whose preimage leaves
    /// the box are closed.
    pub fn shift(&self, sigma: &[i32]) -> Result<SiteConfig> {
        if sigma.len() != self.bx.dim() {
            return Err(invalid("shift dimension mismatch"));
        }
        let norm: i64 = sigma.iter().map(|s| (*s as i64).abs()).sum();
        if norm > 1 {
            return Err(Error::InvalidShift(norm));
        }
        let shifted = SiteConfig::from_predicate(&self.bx, |x| {
            let y: Vec<i32> = x.iter().zip(sigma).map(|(a, b)| a + b).collect();
            self.is_open_at(&y)
        });
        Ok(SiteConfig { q: self.q, seed: self.seed, ..shifted })
    }
}

/// Free-function form of [`BondConfig::sample`].
pub fn sample_bond_config(bx: &LatticeBox, p: f64, seed: u64) -> Result<BondConfig> {
    BondConfig::sample(bx, p, seed)
}

/// Free-function form of [`SiteConfig::sample`].
pub fn sample_site_config(bx: &LatticeBox, q: f64, seed: u64) -> Result<SiteConfig> {
    SiteConfig::sample(bx, q, seed)
}

/// Free-function form of [`SiteConfig::shift`].
pub fn shift_sites(cfg: &SiteConfig, sigma: &[i32]) -> Result<SiteConfig> {
    cfg.shift(sigma)
}
