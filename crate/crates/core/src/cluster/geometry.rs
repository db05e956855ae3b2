use std::io::Write;

use serde::{Deserialize, Serialize};

use super::graph::{OpenGraph, RegionView};
use super::vertex_set::VertexSet;
use crate::error::{invalid, Error, Result};
use crate::percolation::LatticeBox;

/// Sentinel for an infinite chemical distance.
pub const INFINITE: u32 = u32::MAX;

/// Outcome of a crossing test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub crossing: bool,
    pub per_axis: Vec<bool>,
    /// The target box has side 0 along some axis.
    pub degenerate: bool,
}

/// Whether some connected piece of `set ∩ q` joins the two opposing faces of
/// `q` along every axis. Connectivity uses open edges of `graph` inside `q`.
pub fn is_crossing(graph: OpenGraph<'_>, set: &VertexSet, q: &LatticeBox) -> Result<Crossing> {
    let d = q.dim();
    if q.min_side() == 0 {
        return Ok(Crossing { crossing: true, per_axis: vec![true; d], degenerate: true });
    }
    let view = RegionView::new(graph, q)?;
    let mut member = vec![false; view.len()];
    let mut c = vec![0; d];
    for &v in set.indices() {
        set.frame().coords_into(v, &mut c);
        if let Some(r) = q.index_of(&c) {
            member[r] = view.is_open(r);
        }
    }
    let mut per_axis = vec![false; d];
    let mut seen = vec![false; view.len()];
    let mut queue = Vec::new();
    for start in 0..view.len() {
        if !member[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.clear();
        queue.push(start);
        let mut faces = 0u64;
        let mut head = 0;
        while head < queue.len() {
            let r = queue[head];
            head += 1;
            q.coords_into(r, &mut c);
            for a in 0..d {
                if c[a] == q.lo()[a] {
                    faces |= 1 << (2 * a);
                }
                if c[a] == q.hi()[a] {
                    faces |= 1 << (2 * a + 1);
                }
            }
            view.for_each_neighbor(r, &c, |s| {
                if member[s] && !seen[s] {
                    seen[s] = true;
                    queue.push(s);
                }
            });
        }
        for (a, hit) in per_axis.iter_mut().enumerate() {
            *hit |= faces >> (2 * a) & 3 == 3;
        }
    }
    Ok(Crossing { crossing: per_axis.iter().all(|&x| x), per_axis, degenerate: false })
}

fn unit_neighbors(bx: &LatticeBox, x: &[i32], mut f: impl FnMut(&[i32], usize, bool)) {
    let mut y = x.to_vec();
    for a in 0..x.len() {
        for up in [true, false] {
            y[a] = if up { x[a] + 1 } else { x[a] - 1 };
            if bx.contains(&y) {
                f(&y, a, up);
            }
            y[a] = x[a];
        }
    }
}

/// Internal boundary `∂_i(A|Q)`: vertices of `A` with a lattice neighbour in
/// `Q - A`.
pub fn internal_boundary(a: &VertexSet, q: &LatticeBox) -> VertexSet {
    let frame = a.frame();
    let idx = a
        .indices()
        .iter()
        .copied()
        .filter(|&v| {
            let x = frame.coords_of(v);
            let mut hit = false;
            unit_neighbors(q, &x, |y, _, _| hit |= !a.contains_point(y));
            hit
        })
        .collect();
    VertexSet::new(frame, idx)
}

/// External boundary `∂_e(A|Q)`: vertices of `Q - A` with a lattice
/// neighbour in `A`.
pub fn external_boundary(a: &VertexSet, q: &LatticeBox) -> VertexSet {
    let frame = a.frame();
    let mut idx = Vec::new();
    for &v in a.indices() {
        let x = frame.coords_of(v);
        if !q.contains(&x) {
            continue;
        }
        unit_neighbors(q, &x, |y, _, _| {
            if !a.contains_point(y) {
                if let Some(w) = frame.index_of(y) {
                    idx.push(w);
                }
            }
        });
    }
    VertexSet::new(frame, idx)
}

/// A lattice edge `{x, x + e_axis}` named by its lower endpoint.
pub type LatticeEdge = (Vec<i32>, usize);

/// Edge boundary `∂_E(A1, A2)`: lattice edges with one endpoint in each set.
pub fn edge_boundary(a1: &VertexSet, a2: &VertexSet) -> Vec<LatticeEdge> {
    edge_boundary_filtered(a1, a2, |_, _| true)
}

/// `∂_E(A1, A2 | O_E)`: the edge boundary restricted to open bonds.
pub fn open_edge_boundary(
    cfg: &crate::percolation::BondConfig,
    a1: &VertexSet,
    a2: &VertexSet,
) -> Vec<LatticeEdge> {
    edge_boundary_filtered(a1, a2, |x, a| cfg.is_open(x, a))
}

fn edge_boundary_filtered(
    a1: &VertexSet,
    a2: &VertexSet,
    keep: impl Fn(&[i32], usize) -> bool,
) -> Vec<LatticeEdge> {
    let frame = a1.frame();
    let mut out = Vec::new();
    for &v in a1.indices() {
        let x = frame.coords_of(v);
        unit_neighbors(frame, &x, |y, a, up| {
            if a2.contains_point(y) {
                let lower = if up { x.clone() } else { y.to_vec() };
                if keep(&lower, a) {
                    out.push((lower, a));
                }
            }
        });
    }
    out.sort();
    out.dedup();
    out
}

/// Length of the shortest open path from `x` to `y` inside `region`, or
/// [`INFINITE`]. A vertex with no open edge in the region is at infinite
/// distance from everything, itself included.
pub fn chemical_distance(graph: OpenGraph<'_>, x: &[i32], y: &[i32], region: &LatticeBox) -> Result<u32> {
    let view = RegionView::new(graph, region)?;
    let s = view.local_of(x)?;
    let t = view.local_of(y)?;
    if !view.is_open(s) || !view.is_open(t) {
        return Ok(INFINITE);
    }
    let out = view.bfs(s, INFINITE, |r| r == t);
    Ok(out.last().filter(|(r, _)| *r == t).map(|&(_, d)| d).unwrap_or(INFINITE))
}

/// The chemical ball `B_ω(x, r) = {y : d_ω(x, y) < r}` inside a region.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemicalBall {
    pub center: Vec<i32>,
    pub radius: u32,
    /// Members in the configuration frame.
    pub set: VertexSet,
    /// Distances aligned with `set.indices()`.
    pub dist: Vec<u32>,
}

pub fn chemical_ball(graph: OpenGraph<'_>, x: &[i32], r: u32, region: &LatticeBox) -> Result<ChemicalBall> {
    let view = RegionView::new(graph, region)?;
    let s = view.local_of(x)?;
    if !view.is_open(s) {
        return Err(Error::ClosedVertex(x.to_vec()));
    }
    let mut found = if r == 0 { Vec::new() } else { view.bfs(s, r, |_| false) };
    let mut c = vec![0; region.dim()];
    let mut pairs: Vec<(usize, u32)> =
        found.drain(..).map(|(loc, d)| (view.frame_of_local(loc, &mut c), d)).collect();
    pairs.sort_unstable();
    let set = VertexSet::new(view.frame(), pairs.iter().map(|p| p.0).collect());
    Ok(ChemicalBall { center: x.to_vec(), radius: r, set, dist: pairs.into_iter().map(|p| p.1).collect() })
}

impl ChemicalBall {
    pub fn len(&self) -> usize {
        self.set.len()
    }
    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
    /// Writes `x0,..,x{d-1},distance` rows.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let d = self.center.len();
        let header: Vec<String> = (0..d).map(|a| format!("x{a}")).chain(["distance".into()]).collect();
        writeln!(w, "{}", header.join(","))?;
        for (p, dist) in self.set.points().iter().zip(&self.dist) {
            for x in p {
                write!(w, "{x},")?;
            }
            writeln!(w, "{dist}")?;
        }
        Ok(())
    }
}

/// `diam(A) = max |x - y|_inf` over pairs of `A`.
pub fn diameter(a: &VertexSet) -> Result<i32> {
    let pts = a.points();
    diameter_of_points(&pts)
}

pub fn diameter_of_points(pts: &[Vec<i32>]) -> Result<i32> {
    let first = pts.first().ok_or(Error::EmptySet("diameter of an empty set"))?;
    let d = first.len();
    let mut lo = first.clone();
    let mut hi = first.clone();
    for p in pts {
        if p.len() != d {
            return Err(invalid("mixed dimensions"));
        }
        for a in 0..d {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    Ok((0..d).map(|a| hi[a] - lo[a]).max().unwrap_or(0))
}
