use super::graph::{Adjacency, OpenGraph};
use super::vertex_set::VertexSet;
use crate::error::{invalid, Result};
use crate::percolation::LatticeBox;

/// A finite vertex set `H` with conductances on its internal edges, the
/// ambient measure `mu` and the intrinsic measure `mu_0`.
///
/// Vertices are numbered `0..len()` in increasing frame index. Only edges
/// with positive conductance are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSubgraph {
    frame: LatticeBox,
    index: Vec<usize>,
    points: Vec<Vec<i32>>,
    edges: Vec<(u32, u32, f64)>,
    start: Vec<usize>,
    nbrs: Vec<(u32, u32)>,
    mu: Vec<f64>,
    mu0: Vec<f64>,
}

impl WeightedSubgraph {
    /// Builds a graph from explicit vertices and weighted edges. `mu`
    /// defaults to the intrinsic degree.
    pub fn from_parts(
        points: Vec<Vec<i32>>,
        edges: Vec<(usize, usize, f64)>,
        mu: Option<Vec<f64>>,
    ) -> Result<Self> {
        let d = points.first().map(|p| p.len()).ok_or_else(|| invalid("graph needs a vertex"))?;
        let mut lo = points[0].clone();
        let mut hi = points[0].clone();
        for p in &points {
            if p.len() != d {
                return Err(invalid("mixed dimensions"));
            }
            for a in 0..d {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let frame = LatticeBox::new(lo, hi)?;
        let n = points.len();
        let mut order: Vec<usize> = (0..n).collect();
        let fidx: Vec<usize> = points.iter().map(|p| frame.index_of(p).expect("inside hull")).collect();
        order.sort_by_key(|&i| fidx[i]);
        let mut rank = vec![0usize; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let index: Vec<usize> = order.iter().map(|&i| fidx[i]).collect();
        if index.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate vertex"));
        }
        let mut es = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            if u >= n || v >= n || u == v || !(w >= 0.0) {
                return Err(invalid("bad edge"));
            }
            if w > 0.0 {
                let (a, b) = (rank[u].min(rank[v]) as u32, rank[u].max(rank[v]) as u32);
                es.push((a, b, w));
            }
        }
        let mu = match mu {
            Some(m) if m.len() != n => return Err(invalid("measure length mismatch")),
            Some(m) => Some(order.iter().map(|&i| m[i]).collect()),
            None => None,
        };
        let points = order.iter().map(|&i| points[i].clone()).collect();
        Ok(Self::assemble(frame, index, points, es, mu))
    }

    fn assemble(
        frame: LatticeBox,
        index: Vec<usize>,
        points: Vec<Vec<i32>>,
        mut edges: Vec<(u32, u32, f64)>,
        mu: Option<Vec<f64>>,
    ) -> Self {
        let n = index.len();
        edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        let mut deg = vec![0usize; n];
        let mut mu0 = vec![0.0; n];
        for &(u, v, w) in &edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
            mu0[u as usize] += w;
            mu0[v as usize] += w;
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + deg[i];
        }
        let mut fill = start.clone();
        let mut nbrs = vec![(0u32, 0u32); start[n]];
        for (e, &(u, v, _)) in edges.iter().enumerate() {
            nbrs[fill[u as usize]] = (v, e as u32);
            fill[u as usize] += 1;
            nbrs[fill[v as usize]] = (u, e as u32);
            fill[v as usize] += 1;
        }
        let mu = mu.unwrap_or_else(|| mu0.clone());
        WeightedSubgraph { frame, index, points, edges, start, nbrs, mu, mu0 }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }
    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.frame.dim()
    }
    pub fn frame(&self) -> &LatticeBox {
        &self.frame
    }
    pub fn frame_indices(&self) -> &[usize] {
        &self.index
    }
    pub fn point(&self, i: usize) -> &[i32] {
        &self.points[i]
    }
    pub fn points(&self) -> &[Vec<i32>] {
        &self.points
    }
    pub fn index_of(&self, x: &[i32]) -> Option<usize> {
        let f = self.frame.index_of(x)?;
        self.index.binary_search(&f).ok()
    }
    /// Edges `(u, v, conductance)` with `u < v`.
    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }
    /// `(neighbour, edge id)` pairs of vertex `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[(u32, u32)] {
        &self.nbrs[self.start[i]..self.start[i + 1]]
    }
    #[inline]
    pub fn conductance(&self, e: usize) -> f64 {
        self.edges[e].2
    }
    /// Ambient measure `mu`.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    /// Intrinsic measure `mu_0`, the weighted degree inside the graph.
    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }
    pub fn vertex_set(&self) -> VertexSet {
        VertexSet::new(&self.frame, self.index.clone())
    }

    /// Component id of each vertex among those with `keep[i]`; others get
    /// `u32::MAX`.
    pub fn components(&self, keep: Option<&[bool]>) -> (Vec<u32>, usize) {
        let n = self.len();
        let alive = |i: usize| keep.map(|k| k[i]).unwrap_or(true);
        let mut comp = vec![u32::MAX; n];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != u32::MAX || !alive(s) {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &(v, _) in self.neighbors(u) {
                    let v = v as usize;
                    if comp[v] == u32::MAX && alive(v) {
                        comp[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (comp, count as usize)
    }

    /// Hop distances from `src`; unreachable vertices get `u32::MAX`.
    pub fn hop_distances(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        dist[src] = 0;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in self.neighbors(u) {
                let v = v as usize;
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.len() > 0 && self.components(None).1 == 1
    }

    /// Subgraph induced by `keep`, carrying the ambient measure along and
    /// recomputing `mu_0`. Returns the map from new to old vertex numbers.
    pub fn induced(&self, keep: &[bool]) -> (WeightedSubgraph, Vec<usize>) {
        let old: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        let mut new_of = vec![u32::MAX; self.len()];
        for (k, &i) in old.iter().enumerate() {
            new_of[i] = k as u32;
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v, _)| keep[u as usize] && keep[v as usize])
            .map(|&(u, v, w)| (new_of[u as usize], new_of[v as usize], w))
            .collect();
        let g = Self::assemble(
            self.frame.clone(),
            old.iter().map(|&i| self.index[i]).collect(),
            old.iter().map(|&i| self.points[i].clone()).collect(),
            edges,
            Some(old.iter().map(|&i| self.mu[i]).collect()),
        );
        (g, old)
    }
}

/// The subgraph induced by `h`: conductance 1 on open edges inside `h`,
/// `mu` the open degree in the whole configuration, `mu_0` the open degree
/// inside `h`.
pub fn induced_graph(graph: OpenGraph<'_>, h: &VertexSet) -> Result<WeightedSubgraph> {
    if graph.adjacency() == Adjacency::Star {
        return Err(invalid("induced graphs use nearest-neighbour bonds"));
    }
    let frame = graph.frame();
    if h.frame() != frame {
        return Err(invalid("vertex set and configuration use different frames"));
    }
    let d = frame.dim();
    let idx = h.indices();
    let mut edges = Vec::new();
    let mut mu = Vec::with_capacity(idx.len());
    let mut c = vec![0; d];
    for (i, &v) in idx.iter().enumerate() {
        frame.coords_into(v, &mut c);
        let mut amb = 0u32;
        for dir in 0..2 * d {
            let a = dir / 2;
            let up = dir % 2 == 0;
            let y = if up { c[a] + 1 } else { c[a] - 1 };
            if y < frame.lo()[a] || y > frame.hi()[a] {
                continue;
            }
            let w = if up { v + frame.stride(a) } else { v - frame.stride(a) };
            let open = match graph {
                OpenGraph::Bond(cfg) => cfg.mask(v) >> dir & 1 == 1,
                OpenGraph::Site(cfg, _) => cfg.is_open(v) && cfg.is_open(w),
            };
            if !open {
                continue;
            }
            amb += 1;
            if up {
                if let Ok(j) = idx.binary_search(&w) {
                    edges.push((i as u32, j as u32, 1.0));
                }
            }
        }
        mu.push(amb as f64);
    }
    let points = idx.iter().map(|&v| frame.coords_of(v)).collect();
    Ok(WeightedSubgraph::assemble(frame.clone(), idx.to_vec(), points, edges, Some(mu)))
}
