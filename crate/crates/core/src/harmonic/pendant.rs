use serde::{Deserialize, Serialize};

use crate::cluster::WeightedSubgraph;
use crate::error::{invalid, Result};

/// A slab of the lattice with a side-`R` cube hanging off its far end by a
/// single edge, and the exponentially weighted Poincare ratio of the cube's
/// indicator.
///
/// The slab is `[0, s-1] x [0, 3R-1]^{d-1}` with `x_0 = (0, c, ..., c)`,
/// `c = floor(3R/2)`. The cube is `[s, s+R-1] x [c - floor(R/2), ...]^{d-1}`
/// and its only edge to the slab joins `(s-1, c, ..., c)` to `(s, c, ..., c)`,
/// so the attaching vertex of the cube lies at distance `s` from `x_0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PendantCube {
    pub d: usize,
    pub r: u32,
    pub s: u32,
    #[serde(skip)]
    pub graph: Option<WeightedSubgraph>,
    pub x0: usize,
    pub vertices: usize,
    pub cube_vertices: usize,
    /// `min_a sum (f - a)^2 psi mu` for `f` the cube indicator.
    pub numerator: f64,
    /// `R^2 sum_e |grad f|^2 psi~ nu`.
    pub denominator: f64,
    pub ratio: f64,
}

/// `min_a sum_x (f(x) - a)^2 psi(x) mu(x)` and
/// `R^2 sum_{xy} nu_xy (f(x) - f(y))^2 min(psi(x), psi(y))` with
/// `psi(x) = exp(-d(x_0, x) / R)` and `mu` the intrinsic measure.
pub fn exp_weighted_ratio(g: &WeightedSubgraph, x0: usize, r: u32, f: &[f64]) -> Result<(f64, f64)> {
    if f.len() != g.len() || x0 >= g.len() || r == 0 {
        return Err(invalid("function length, base point or radius out of range"));
    }
    let dist = g.hop_distances(x0);
    let psi: Vec<f64> = dist
        .iter()
        .map(|&k| if k == u32::MAX { 0.0 } else { (-(k as f64) / r as f64).exp() })
        .collect();
    let mu = g.mu0();
    let w: Vec<f64> = (0..g.len()).map(|v| psi[v] * mu[v]).collect();
    let total: f64 = w.iter().sum();
    let a = f.iter().zip(&w).map(|(f, w)| f * w).sum::<f64>() / total;
    let num = f.iter().zip(&w).map(|(f, w)| (f - a).powi(2) * w).sum();
    let energy: f64 = g
        .edges()
        .iter()
        .map(|&(u, v, c)| {
            let (u, v) = (u as usize, v as usize);
            c * (f[u] - f[v]).powi(2) * psi[u].min(psi[v])
        })
        .sum();
    Ok((num, (r as f64).powi(2) * energy))
}

fn push_box(points: &mut Vec<Vec<i32>>, edges: &mut Vec<(usize, usize, f64)>, lo: &[i32], hi: &[i32]) -> usize {
    let d = lo.len();
    let base = points.len();
    let dims: Vec<usize> = (0..d).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
    let total: usize = dims.iter().product();
    let mut stride = vec![1usize; d];
    for a in 1..d {
        stride[a] = stride[a - 1] * dims[a - 1];
    }
    for i in 0..total {
        let mut rem = i;
        let mut p = vec![0; d];
        for a in 0..d {
            p[a] = lo[a] + (rem % dims[a]) as i32;
            rem /= dims[a];
        }
        for a in 0..d {
            if p[a] < hi[a] {
                edges.push((base + i, base + i + stride[a], 1.0));
            }
        }
        points.push(p);
    }
    base
}

/// Builds the pendant cube graph and evaluates the weighted ratio of the
/// cube's indicator.
pub fn pendant_cube_graph(d: usize, r: u32, s: u32) -> Result<PendantCube> {
    if d < 2 || r < 2 || s < 2 {
        return Err(invalid("need d >= 2, R >= 2 and s >= 2"));
    }
    let (ri, si) = (r as i32, s as i32);
    let c = 3 * ri / 2;
    let mut points = Vec::new();
    let mut edges = Vec::new();
    let mut lo = vec![0; d];
    let mut hi = vec![3 * ri - 1; d];
    hi[0] = si - 1;
    push_box(&mut points, &mut edges, &lo, &hi);
    let slab = points.len();
    lo = vec![c - ri / 2; d];
    lo[0] = si;
    hi = lo.iter().map(|&v| v + ri - 1).collect();
    push_box(&mut points, &mut edges, &lo, &hi);
    let cube_vertices = points.len() - slab;
    let mut x0 = vec![c; d];
    x0[0] = 0;
    let mut attach = vec![c; d];
    attach[0] = si - 1;
    let mut inner = vec![c; d];
    inner[0] = si;
    let find = |p: &[i32], range: std::ops::Range<usize>| range.into_iter().find(|&i| points[i] == p).expect("point built");
    edges.push((find(&attach, 0..slab), find(&inner, slab..points.len()), 1.0));
    let g = WeightedSubgraph::from_parts(points, edges, None)?;
    let x0 = g.index_of(&x0).expect("base point present");
    let f: Vec<f64> = (0..g.len()).map(|v| if g.point(v)[0] >= si { 1.0 } else { 0.0 }).collect();
    let (numerator, denominator) = exp_weighted_ratio(&g, x0, r, &f)?;
    Ok(PendantCube {
        d,
        r,
        s,
        x0,
        vertices: g.len(),
        cube_vertices,
        numerator,
        denominator,
        ratio: numerator / denominator,
        graph: Some(g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slope(d: usize) -> f64 {
        let rs = [4u32, 6, 8, 10];
        let pts: Vec<(f64, f64)> = rs
            .iter()
            .map(|&r| ((r as f64).ln(), pendant_cube_graph(d, r, 10 * r).unwrap().ratio.ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn structure() {
        let p = pendant_cube_graph(3, 4, 40).unwrap();
        let g = p.graph.as_ref().unwrap();
        assert_eq!(p.cube_vertices, 64);
        assert_eq!(p.vertices, 40 * 144 + 64);
        assert!(g.is_connected());
        let dist = g.hop_distances(p.x0);
        let near = (0..g.len()).filter(|&v| g.point(v)[0] >= 40).map(|v| dist[v]).min().unwrap();
        assert_eq!(near, 40);
        let crossing = g.edges().iter().filter(|&&(u, v, _)| (g.point(u as usize)[0] >= 40) != (g.point(v as usize)[0] >= 40)).count();
        assert_eq!(crossing, 1);
    }

    #[test]
    fn constant_function_has_zero_numerator() {
        let p = pendant_cube_graph(2, 4, 20).unwrap();
        let g = p.graph.unwrap();
        let (num, den) = exp_weighted_ratio(&g, p.x0, 4, &vec![2.5; g.len()]).unwrap();
        assert!(num.abs() < 1e-20 && den == 0.0);
    }

    #[test]
    fn growth_in_three_dimensions() {
        let s = slope(3);
        assert!((s - 1.0).abs() <= 0.3, "slope {s}");
    }

    #[test]
    fn no_growth_in_two_dimensions() {
        let s = slope(2);
        assert!(s.abs() <= 0.3, "slope {s}");
    }
}
