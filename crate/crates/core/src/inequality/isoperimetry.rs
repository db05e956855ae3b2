use rand::Rng;
use serde::{Deserialize, Serialize};

use super::poincare::{poincare_on, PoincareWeights};
use crate::cluster::WeightedSubgraph;
use crate::error::{Error, Result};
use crate::rng::stream;

/// How the minima are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IsoMode {
    /// Full subset enumeration.
    Exact,
    /// Sweep cuts and local search; values are upper bounds.
    Search,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsoperimetryOptions {
    pub mode: IsoMode,
    /// Largest vertex count accepted by exact enumeration.
    pub cap: usize,
    pub seed: u64,
    /// Random smoothed vectors swept in search mode.
    pub restarts: usize,
}

impl Default for IsoperimetryOptions {
    fn default() -> Self {
        IsoperimetryOptions { mode: IsoMode::Exact, cap: 18, seed: 0, restarts: 8 }
    }
}

/// Isoperimetric and Cheeger constants with minimising sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsoperimetryReport {
    /// `I_H`: min of `i(A)` over `0 < mu_0(A) <= mu_0(H)/2`.
    pub i_h: f64,
    /// `I*_H`: as `I_H` with `A` and `H - A` both connected.
    pub i_star: f64,
    /// `J_H`: min of the Cheeger ratio over proper nonempty `A`.
    pub j_h: f64,
    pub witness_i: Vec<Vec<i32>>,
    pub witness_i_star: Vec<Vec<i32>>,
    pub witness_j: Vec<Vec<i32>>,
    pub exact: bool,
    pub mu0_total: f64,
}

pub fn isoperimetry(h: &WeightedSubgraph, mode: IsoMode) -> Result<IsoperimetryReport> {
    isoperimetry_with(h, &IsoperimetryOptions { mode, ..Default::default() })
}

pub fn isoperimetry_with(h: &WeightedSubgraph, opts: &IsoperimetryOptions) -> Result<IsoperimetryReport> {
    if h.is_empty() {
        return Err(Error::EmptySet("isoperimetry of an empty graph"));
    }
    let (comp, count) = h.components(None);
    if count > 1 {
        let a = 0;
        let b = (0..h.len()).find(|&i| comp[i] != comp[a]).expect("second component");
        return Err(Error::Disconnected(h.point(a).to_vec(), h.point(b).to_vec()));
    }
    match opts.mode {
        IsoMode::Exact => {
            if h.len() > opts.cap {
                return Err(Error::CapExceeded { what: "exact isoperimetry", size: h.len(), cap: opts.cap });
            }
            Ok(exact(h))
        }
        IsoMode::Search => search(h, opts),
    }
}

struct Best {
    val: f64,
    set: Vec<usize>,
}

impl Best {
    fn new() -> Self {
        Best { val: f64::INFINITY, set: Vec::new() }
    }
    fn offer(&mut self, val: f64, set: impl FnOnce() -> Vec<usize>) -> bool {
        if val < self.val {
            self.val = val;
            self.set = set();
            true
        } else {
            false
        }
    }
}

fn bits_to_vec(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

fn mask_connected(mask: u32, adj: &[u32]) -> bool {
    if mask == 0 {
        return false;
    }
    let mut reach = mask & mask.wrapping_neg();
    loop {
        let mut next = reach;
        let mut m = reach;
        while m != 0 {
            let v = m.trailing_zeros() as usize;
            m &= m - 1;
            next |= adj[v] & mask;
        }
        if next == reach {
            return reach == mask;
        }
        reach = next;
    }
}

fn exact(h: &WeightedSubgraph) -> IsoperimetryReport {
    let n = h.len();
    let mu0 = h.mu0();
    let total: f64 = mu0.iter().sum();
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut adj = vec![0u32; n];
    for &(u, v, _) in h.edges() {
        adj[u as usize] |= 1 << v;
        adj[v as usize] |= 1 << u;
    }
    let size = 1usize << n;
    let mut mu_a = vec![0.0f64; size];
    let mut bnd = vec![0.0f64; size];
    let mut best_i = Best::new();
    let mut best_star = Best::new();
    let mut best_j = Best::new();
    for mask in 1..size {
        let v = mask.trailing_zeros() as usize;
        let prev = mask & (mask - 1);
        let mut into_prev = 0.0;
        for &(w, e) in h.neighbors(v) {
            if prev >> w & 1 == 1 {
                into_prev += h.conductance(e as usize);
            }
        }
        mu_a[mask] = mu_a[prev] + mu0[v];
        bnd[mask] = bnd[prev] + mu0[v] - 2.0 * into_prev;
        let m = mask as u32;
        if m == full {
            continue;
        }
        let ma = mu_a[mask];
        let b = bnd[mask].max(0.0);
        let rest = total - ma;
        if ma > 0.0 && rest > 0.0 {
            best_j.offer(total * b / (ma * rest), || bits_to_vec(m, n));
        }
        if ma > 0.0 && ma <= total / 2.0 {
            let i = b / ma;
            best_i.offer(i, || bits_to_vec(m, n));
            if i < best_star.val && mask_connected(m, &adj) && mask_connected(full & !m, &adj) {
                best_star.offer(i, || bits_to_vec(m, n));
            }
        }
    }
    report(h, best_i, best_star, best_j, true, total)
}

fn report(h: &WeightedSubgraph, i: Best, s: Best, j: Best, exact: bool, total: f64) -> IsoperimetryReport {
    let pts = |b: &Best| b.set.iter().map(|&v| h.point(v).to_vec()).collect();
    IsoperimetryReport {
        i_h: i.val,
        i_star: s.val,
        j_h: j.val,
        witness_i: pts(&i),
        witness_i_star: pts(&s),
        witness_j: pts(&j),
        exact,
        mu0_total: total,
    }
}

/// Incrementally maintained cut `A` of a graph.
struct Cut<'a> {
    h: &'a WeightedSubgraph,
    inside: Vec<bool>,
    mu: f64,
    bnd: f64,
    total: f64,
}

impl<'a> Cut<'a> {
    fn new(h: &'a WeightedSubgraph) -> Self {
        let total = h.mu0().iter().sum();
        Cut { h, inside: vec![false; h.len()], mu: 0.0, bnd: 0.0, total }
    }
    fn flip(&mut self, v: usize) {
        let mut to_a = 0.0;
        for &(w, e) in self.h.neighbors(v) {
            if self.inside[w as usize] {
                to_a += self.h.conductance(e as usize);
            }
        }
        let deg = self.h.mu0()[v];
        if self.inside[v] {
            self.inside[v] = false;
            self.mu -= deg;
            self.bnd += 2.0 * to_a - deg;
        } else {
            self.inside[v] = true;
            self.mu += deg;
            self.bnd += deg - 2.0 * to_a;
        }
    }
    fn members(&self, complement: bool) -> Vec<usize> {
        (0..self.inside.len()).filter(|&v| self.inside[v] != complement).collect()
    }
    fn iso(&self) -> (f64, bool) {
        let rest = self.total - self.mu;
        let (small, comp) = if self.mu <= rest { (self.mu, false) } else { (rest, true) };
        if small <= 0.0 {
            (f64::INFINITY, comp)
        } else {
            (self.bnd.max(0.0) / small, comp)
        }
    }
    fn cheeger(&self) -> f64 {
        let rest = self.total - self.mu;
        if self.mu <= 0.0 || rest <= 0.0 {
            f64::INFINITY
        } else {
            self.total * self.bnd.max(0.0) / (self.mu * rest)
        }
    }
    fn connected_sides(&self) -> bool {
        let (_, k1) = self.h.components(Some(&self.inside));
        let out: Vec<bool> = self.inside.iter().map(|b| !b).collect();
        let (_, k2) = self.h.components(Some(&out));
        k1 == 1 && k2 == 1
    }
}

fn sweep(h: &WeightedSubgraph, f: &[f64], i: &mut Best, s: &mut Best, j: &mut Best) {
    let n = h.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| f[a].total_cmp(&f[b]).then(a.cmp(&b)));
    let mut cut = Cut::new(h);
    for &v in order.iter().take(n - 1) {
        cut.flip(v);
        let (iv, comp) = cut.iso();
        i.offer(iv, || cut.members(comp));
        j.offer(cut.cheeger(), || cut.members(false));
        if iv < s.val && cut.connected_sides() {
            s.offer(iv, || cut.members(comp));
        }
    }
}

/// Greedy single-vertex moves that lower the isoperimetric ratio.
fn local_search(h: &WeightedSubgraph, start: &[usize], i: &mut Best, s: &mut Best, j: &mut Best) {
    let mut cut = Cut::new(h);
    for &v in start {
        cut.flip(v);
    }
    let n = h.len();
    for _ in 0..4 * n {
        let (cur, _) = cut.iso();
        let mut best_move = None;
        let mut best_val = cur;
        for v in 0..n {
            let on_boundary = h.neighbors(v).iter().any(|&(w, _)| cut.inside[w as usize] != cut.inside[v]);
            if !on_boundary {
                continue;
            }
            cut.flip(v);
            let (val, _) = cut.iso();
            if val < best_val - 1e-15 {
                best_val = val;
                best_move = Some(v);
            }
            cut.flip(v);
        }
        match best_move {
            Some(v) => cut.flip(v),
            None => break,
        }
    }
    let (iv, comp) = cut.iso();
    i.offer(iv, || cut.members(comp));
    j.offer(cut.cheeger(), || cut.members(false));
    if iv < s.val && cut.connected_sides() {
        s.offer(iv, || cut.members(comp));
    }
}

fn search(h: &WeightedSubgraph, opts: &IsoperimetryOptions) -> Result<IsoperimetryReport> {
    let n = h.len();
    let total: f64 = h.mu0().iter().sum();
    let mut i = Best::new();
    let mut s = Best::new();
    let mut j = Best::new();
    if n < 2 {
        return Ok(report(h, i, s, j, false, total));
    }
    let mut vectors = Vec::new();
    let weights = PoincareWeights { vertex: vec![1.0; n], edge: vec![1.0; h.edges().len()] };
    let mu0_graph = WeightedSubgraph::from_parts(
        h.points().to_vec(),
        h.edges().iter().map(|&(u, v, w)| (u as usize, v as usize, w)).collect(),
        Some(h.mu0().to_vec()),
    )?;
    if let Ok(res) = poincare_on(&mu0_graph, &vec![true; n], Some(&weights)) {
        if let Some(w) = res.witness {
            vectors.push(w);
        }
    }
    let mut rng = stream(opts.seed);
    for _ in 0..opts.restarts {
        let mut f: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        for _ in 0..20 {
            let g: Vec<f64> = (0..n)
                .map(|v| {
                    let d = h.mu0()[v];
                    if d == 0.0 {
                        return f[v];
                    }
                    let avg: f64 = h
                        .neighbors(v)
                        .iter()
                        .map(|&(w, e)| h.conductance(e as usize) * f[w as usize])
                        .sum::<f64>()
                        / d;
                    0.5 * (f[v] + avg)
                })
                .collect();
            f = g;
        }
        vectors.push(f);
    }
    for f in &vectors {
        sweep(h, f, &mut i, &mut s, &mut j);
    }
    let seeds = [i.set.clone(), j.set.clone()];
    for start in seeds.iter().filter(|x| !x.is_empty()) {
        local_search(h, start, &mut i, &mut s, &mut j);
    }
    Ok(report(h, i, s, j, false, total))
}
