use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::WeightedSubgraph;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, sym_eigen, top_generalized_eig, Laplacian};
use crate::rng::stream;

/// Components above this size use the Lanczos path.
pub const DENSE_CAP: usize = 400;

/// Vertex weights `phi` and edge weights `phi~` on the outer graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareWeights {
    pub vertex: Vec<f64>,
    pub edge: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoincareMethod {
    Trivial,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoincareResult {
    /// Best constant, `+inf` when the energy kernel carries variance.
    pub constant: f64,
    pub method: PoincareMethod,
    /// A maximising function on the outer graph's vertices.
    pub witness: Option<Vec<f64>>,
}

/// Best constant in `min_a sum_H (f - a)^2 phi mu <= P sum_{E(H*)} |grad f|^2 phi~ nu`
/// over `f : H* -> R`.
///
/// `outer` defaults to `h`; its vertex set must contain that of `h`.
pub fn poincare_constant(
    h: &WeightedSubgraph,
    outer: Option<&WeightedSubgraph>,
    weights: Option<&PoincareWeights>,
) -> Result<PoincareResult> {
    let Some(outer) = outer else {
        return poincare_on(h, &vec![true; h.len()], weights);
    };
    let mut inner = vec![false; outer.len()];
    for p in h.points() {
        let i = outer.index_of(p).ok_or_else(|| invalid("inner graph is not contained in the enlargement"))?;
        inner[i] = true;
    }
    poincare_on(outer, &inner, weights)
}

/// As [`poincare_constant`], with `H` given as a mask over `outer`.
pub fn poincare_on(outer: &WeightedSubgraph, inner: &[bool], weights: Option<&PoincareWeights>) -> Result<PoincareResult> {
    let n = outer.len();
    if inner.len() != n {
        return Err(invalid("inner mask length mismatch"));
    }
    if !inner.iter().any(|&b| b) {
        return Err(Error::EmptySet("Poincare constant of an empty set"));
    }
    if let Some(w) = weights {
        if w.vertex.len() != n || w.edge.len() != outer.edges().len() {
            return Err(invalid("weight lengths do not match the graph"));
        }
    }
    for i in 0..n {
        if inner[i] && !(outer.mu()[i] > 0.0) {
            return Err(invalid(format!("measure vanishes at {:?}", outer.point(i))));
        }
    }
    let wv: Vec<f64> = (0..n)
        .map(|i| if inner[i] { outer.mu()[i] * weights.map(|w| w.vertex[i]).unwrap_or(1.0) } else { 0.0 })
        .collect();
    let scale = weights.map(|w| w.edge.as_slice());

    let comp = edge_components(outer, scale);
    let mut hit: Vec<usize> = (0..n).filter(|&i| wv[i] > 0.0).map(|i| comp[i]).collect();
    hit.sort_unstable();
    hit.dedup();
    if hit.len() > 1 {
        let witness = (0..n).map(|i| if comp[i] == hit[0] { 1.0 } else { 0.0 }).collect();
        return Ok(PoincareResult { constant: f64::INFINITY, method: PoincareMethod::Trivial, witness: Some(witness) });
    }
    let Some(&target) = hit.first() else {
        return Ok(PoincareResult { constant: 0.0, method: PoincareMethod::Trivial, witness: None });
    };
    let members: Vec<usize> = (0..n).filter(|&i| comp[i] == target).collect();
    if members.iter().filter(|&&i| wv[i] > 0.0).count() < 2 {
        return Ok(PoincareResult { constant: 0.0, method: PoincareMethod::Trivial, witness: None });
    }

    let mut keep = vec![false; n];
    for &i in &members {
        keep[i] = true;
    }
    let (sub, old) = outer.induced(&keep);
    let sub_scale: Option<Vec<f64>> = scale.map(|s| {
        let mut by_pair = std::collections::HashMap::new();
        for (e, &(u, v, _)) in outer.edges().iter().enumerate() {
            by_pair.insert((u, v), s[e]);
        }
        sub.edges()
            .iter()
            .map(|&(u, v, _)| by_pair[&(old[u as usize] as u32, old[v as usize] as u32)])
            .collect()
    });
    let lap = Laplacian::new(&sub, sub_scale.as_deref());
    let w: Vec<f64> = old.iter().map(|&i| wv[i]).collect();
    let wsum: f64 = w.iter().sum();
    let m = sub.len();

    let (constant, f, method) = if m <= DENSE_CAP {
        let (val, f) = dense_top(&lap, &w, wsum);
        (val, f, PoincareMethod::Dense)
    } else {
        let apply_v = |f: &[f64], out: &mut [f64]| {
            let mean = dot(&w, f) / wsum;
            for i in 0..m {
                out[i] = w[i] * (f[i] - mean);
            }
        };
        let mut rng = stream(0x9e37_79b9);
        let start: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
        let (val, f) = top_generalized_eig(&lap, apply_v, &start, 1e-10, 300)?;
        (val, f, PoincareMethod::Lanczos)
    };
    let mut witness = vec![0.0; n];
    for (k, &i) in old.iter().enumerate() {
        witness[i] = f[k];
    }
    Ok(PoincareResult { constant: constant.max(0.0), method, witness: Some(witness) })
}

fn edge_components(g: &WeightedSubgraph, scale: Option<&[f64]>) -> Vec<usize> {
    let n = g.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (e, &(u, v, c)) in g.edges().iter().enumerate() {
        if c * scale.map(|s| s[e]).unwrap_or(1.0) > 0.0 {
            let a = find(&mut parent, u as usize);
            let b = find(&mut parent, v as usize);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

fn dense_top(lap: &Laplacian, w: &[f64], wsum: f64) -> (f64, Vec<f64>) {
    let m = lap.len();
    let (vals, vecs) = sym_eigen(lap.dense());
    let k = m - 1;
    let mut cols = nalgebra::DMatrix::zeros(m, k);
    for j in 0..k {
        let s = 1.0 / vals[j + 1].max(f64::MIN_POSITIVE).sqrt();
        for i in 0..m {
            cols[(i, j)] = vecs[(i, j + 1)] * s;
        }
    }
    let mut vc = cols.clone();
    let wc: Vec<f64> = (0..k).map(|j| (0..m).map(|i| w[i] * cols[(i, j)]).sum()).collect();
    for j in 0..k {
        for i in 0..m {
            vc[(i, j)] = w[i] * cols[(i, j)] - w[i] * wc[j] / wsum;
        }
    }
    let mut red = cols.transpose() * vc;
    red = (&red + red.transpose()) * 0.5;
    let (rv, rvec) = sym_eigen(red);
    let g = rvec.column(k - 1);
    let f: Vec<f64> = (0..m).map(|i| (0..k).map(|j| cols[(i, j)] * g[j]).sum()).collect();
    (rv[k - 1], f)
}

/// Ratio `min_a sum (f - a)^2 w / energy(f)` for one function.
pub fn rayleigh_ratio(outer: &WeightedSubgraph, inner: &[bool], weights: Option<&PoincareWeights>, f: &[f64]) -> f64 {
    let n = outer.len();
    let w: Vec<f64> = (0..n)
        .map(|i| if inner[i] { outer.mu()[i] * weights.map(|x| x.vertex[i]).unwrap_or(1.0) } else { 0.0 })
        .collect();
    let wsum: f64 = w.iter().sum();
    let mean = dot(&w, f) / wsum;
    let var: f64 = (0..n).map(|i| w[i] * (f[i] - mean).powi(2)).sum();
    let energy: f64 = outer
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(u, v, c))| c * weights.map(|x| x.edge[e]).unwrap_or(1.0) * (f[u as usize] - f[v as usize]).powi(2))
        .sum();
    if var == 0.0 {
        0.0
    } else {
        var / energy
    }
}
