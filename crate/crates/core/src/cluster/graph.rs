use serde::{Deserialize, Serialize};

use super::vertex_set::VertexSet;
use crate::error::{invalid, Error, Result};
use crate::percolation::{BondConfig, LatticeBox, SiteConfig};

/// Lattice adjacency used for clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Adjacency {
    /// `|x - y|_1 = 1`.
    #[default]
    Nearest,
    /// `|x - y|_inf = 1`; only defined for site fields.
    Star,
}

/// Borrowed percolation configuration of either kind.
#[derive(Debug, Clone, Copy)]
pub enum ConfigRef<'a> {
    Bond(&'a BondConfig),
    Site(&'a SiteConfig),
}

impl<'a> From<&'a BondConfig> for ConfigRef<'a> {
    fn from(c: &'a BondConfig) -> Self {
        ConfigRef::Bond(c)
    }
}

impl<'a> From<&'a SiteConfig> for ConfigRef<'a> {
    fn from(c: &'a SiteConfig) -> Self {
        ConfigRef::Site(c)
    }
}

/// The open subgraph of a configuration under a fixed adjacency.
#[derive(Debug, Clone, Copy)]
pub enum OpenGraph<'a> {
    Bond(&'a BondConfig),
    Site(&'a SiteConfig, Adjacency),
}

impl<'a> OpenGraph<'a> {
    pub fn new(cfg: impl Into<ConfigRef<'a>>, adjacency: Adjacency) -> Result<Self> {
        match (cfg.into(), adjacency) {
            (ConfigRef::Bond(_), Adjacency::Star) => {
                Err(invalid("star adjacency is only defined for site configurations"))
            }
            (ConfigRef::Bond(c), Adjacency::Nearest) => Ok(OpenGraph::Bond(c)),
            (ConfigRef::Site(c), a) => Ok(OpenGraph::Site(c, a)),
        }
    }

    pub fn frame(&self) -> &'a LatticeBox {
        match self {
            OpenGraph::Bond(c) => c.lattice_box(),
            OpenGraph::Site(c, _) => c.lattice_box(),
        }
    }

    pub fn adjacency(&self) -> Adjacency {
        match self {
            OpenGraph::Bond(_) => Adjacency::Nearest,
            OpenGraph::Site(_, a) => *a,
        }
    }
}

impl<'a> From<&'a BondConfig> for OpenGraph<'a> {
    fn from(c: &'a BondConfig) -> Self {
        OpenGraph::Bond(c)
    }
}

impl<'a> From<&'a SiteConfig> for OpenGraph<'a> {
    fn from(c: &'a SiteConfig) -> Self {
        OpenGraph::Site(c, Adjacency::Nearest)
    }
}

/// Neighbour offsets. Unit offsets come in the order `+e_0, -e_0, +e_1, ...`,
/// which matches the bit layout of bond masks.
pub fn offsets(d: usize, adjacency: Adjacency) -> Vec<Vec<i32>> {
    match adjacency {
        Adjacency::Nearest => (0..2 * d)
            .map(|dir| {
                let mut v = vec![0; d];
                v[dir / 2] = if dir % 2 == 0 { 1 } else { -1 };
                v
            })
            .collect(),
        Adjacency::Star => {
            let total = 3usize.pow(d as u32);
            (0..total)
                .map(|code| {
                    let mut c = code;
                    (0..d)
                        .map(|_| {
                            let x = (c % 3) as i32 - 1;
                            c /= 3;
                            x
                        })
                        .collect::<Vec<i32>>()
                })
                .filter(|v| v.iter().any(|&x| x != 0))
                .collect()
        }
    }
}

/// The open graph restricted to a region, addressed by region-local indices.
pub(crate) struct RegionView<'a> {
    graph: OpenGraph<'a>,
    region: LatticeBox,
    offs: Vec<Vec<i32>>,
    rdelta: Vec<isize>,
    fdelta: Vec<isize>,
    open: Vec<bool>,
}

impl<'a> RegionView<'a> {
    pub fn new(graph: OpenGraph<'a>, region: &LatticeBox) -> Result<Self> {
        let frame = graph.frame();
        if !frame.contains_box(region) {
            return Err(invalid("region must lie inside the configuration box"));
        }
        let d = region.dim();
        let offs = offsets(d, graph.adjacency());
        let delta = |b: &LatticeBox, o: &[i32]| -> isize {
            (0..d).map(|a| o[a] as isize * b.stride(a) as isize).sum()
        };
        let rdelta = offs.iter().map(|o| delta(region, o)).collect();
        let fdelta = offs.iter().map(|o| delta(frame, o)).collect();
        let mut view = RegionView { graph, region: region.clone(), offs, rdelta, fdelta, open: Vec::new() };
        let n = region.vertex_count();
        let mut c = vec![0; d];
        let mut open = vec![false; n];
        for (r, slot) in open.iter_mut().enumerate() {
            region.coords_into(r, &mut c);
            let f = frame.index_of(&c).expect("region inside frame");
            *slot = view.vertex_open(f, &c);
        }
        view.open = open;
        Ok(view)
    }

    fn vertex_open(&self, f: usize, c: &[i32]) -> bool {
        match self.graph {
            OpenGraph::Bond(cfg) => {
                let m = cfg.mask(f);
                m != 0
                    && (0..2 * c.len()).any(|dir| {
                        m >> dir & 1 == 1 && {
                            let a = dir / 2;
                            let y = if dir % 2 == 0 { c[a] + 1 } else { c[a] - 1 };
                            self.region.lo()[a] <= y && y <= self.region.hi()[a]
                        }
                    })
            }
            OpenGraph::Site(cfg, _) => cfg.is_open(f),
        }
    }

    pub fn region(&self) -> &LatticeBox {
        &self.region
    }
    pub fn graph(&self) -> OpenGraph<'a> {
        self.graph
    }
    /// Frame-indexed vertex set of the given region-local vertices.
    pub fn frame_set(&self, locals: impl IntoIterator<Item = usize>) -> VertexSet {
        let mut c = vec![0; self.region.dim()];
        let idx = locals.into_iter().map(|r| self.frame_of_local(r, &mut c)).collect();
        VertexSet::new(self.frame(), idx)
    }
    pub fn frame(&self) -> &LatticeBox {
        self.graph.frame()
    }
    pub fn len(&self) -> usize {
        self.open.len()
    }
    pub fn is_open(&self, r: usize) -> bool {
        self.open[r]
    }

    pub fn local_of(&self, x: &[i32]) -> Result<usize> {
        self.region.index_of(x).ok_or_else(|| Error::OutsideRegion(x.to_vec()))
    }

    pub fn frame_of_local(&self, r: usize, c: &mut [i32]) -> usize {
        self.region.coords_into(r, c);
        self.frame().index_of(c).expect("region inside frame")
    }

    /// Calls `f` with the region-local index of every open neighbour of the
    /// open vertex `r` whose coordinates are `c`.
    pub fn for_each_neighbor(&self, r: usize, c: &[i32], mut f: impl FnMut(usize)) {
        let frame = self.frame();
        let fidx = frame.index_of(c).expect("vertex inside frame");
        let lo = self.region.lo();
        let hi = self.region.hi();
        let inside = |off: &[i32]| {
            off.iter().enumerate().all(|(a, &o)| {
                let y = c[a] + o;
                lo[a] <= y && y <= hi[a]
            })
        };
        match self.graph {
            OpenGraph::Bond(cfg) => {
                let m = cfg.mask(fidx);
                for dir in 0..self.offs.len() {
                    if m >> dir & 1 == 1 && inside(&self.offs[dir]) {
                        f((r as isize + self.rdelta[dir]) as usize);
                    }
                }
            }
            OpenGraph::Site(cfg, _) => {
                for dir in 0..self.offs.len() {
                    if inside(&self.offs[dir]) && cfg.is_open((fidx as isize + self.fdelta[dir]) as usize) {
                        f((r as isize + self.rdelta[dir]) as usize);
                    }
                }
            }
        }
    }

    /// Multi-source breadth-first distances over the whole region. Vertices
    /// not reached within `limit` (or excluded by `allowed`) get `u32::MAX`.
    /// `parent` receives the BFS tree when supplied.
    pub fn distances(
        &self,
        sources: &[usize],
        limit: u32,
        allowed: Option<&[bool]>,
        mut parent: Option<&mut Vec<usize>>,
    ) -> Vec<u32> {
        let n = self.len();
        let ok = |r: usize| self.open[r] && allowed.map(|a| a[r]).unwrap_or(true);
        let mut dist = vec![u32::MAX; n];
        if let Some(p) = parent.as_deref_mut() {
            p.clear();
            p.resize(n, usize::MAX);
        }
        let mut queue = Vec::new();
        for &s in sources {
            if ok(s) && dist[s] == u32::MAX {
                dist[s] = 0;
                queue.push(s);
            }
        }
        let mut c = vec![0; self.region.dim()];
        let mut head = 0;
        while head < queue.len() {
            let r = queue[head];
            head += 1;
            let dr = dist[r];
            if dr + 1 >= limit {
                continue;
            }
            self.region.coords_into(r, &mut c);
            self.for_each_neighbor(r, &c, |s| {
                if dist[s] == u32::MAX && ok(s) {
                    dist[s] = dr + 1;
                    if let Some(p) = parent.as_deref_mut() {
                        p[s] = r;
                    }
                    queue.push(s);
                }
            });
        }
        dist
    }

    /// Breadth-first distances from `src`, stopping once `limit` is reached.
    /// Returns the visited vertices in order of discovery with their distance.
    pub fn bfs(&self, src: usize, limit: u32, mut stop: impl FnMut(usize) -> bool) -> Vec<(usize, u32)> {
        let mut out = Vec::new();
        if !self.open[src] {
            return out;
        }
        let mut seen = vec![false; self.len()];
        let mut c = vec![0; self.region.dim()];
        seen[src] = true;
        out.push((src, 0));
        if stop(src) {
            return out;
        }
        let mut head = 0;
        while head < out.len() {
            let (r, dr) = out[head];
            head += 1;
            if dr + 1 >= limit {
                continue;
            }
            self.region.coords_into(r, &mut c);
            let mut halt = false;
            self.for_each_neighbor(r, &c, |s| {
                if !halt && !seen[s] {
                    seen[s] = true;
                    out.push((s, dr + 1));
                    halt = stop(s);
                }
            });
            if halt {
                break;
            }
        }
        out
    }
}
