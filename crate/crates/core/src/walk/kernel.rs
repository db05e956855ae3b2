use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_vertex, Stepper};
use crate::cluster::WeightedSubgraph;
use crate::error::{invalid, Error, Result};
use crate::linalg::sym_eigen;
use crate::par::{map_indexed, Exec};
use crate::rng::{derive_seed, stream, tag};

/// Boundary condition of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// The walk on the whole finite graph.
    #[default]
    None,
    /// Killed on leaving `B(center, radius) = {y : d(center, y) < radius}`.
    Killed { center: usize, radius: u32 },
}

impl Boundary {
    fn alive(&self, g: &WeightedSubgraph) -> Result<Vec<bool>> {
        match *self {
            Boundary::None => Ok(vec![true; g.len()]),
            Boundary::Killed { center, radius } => {
                if center >= g.len() {
                    return Err(invalid("ball centre out of range"));
                }
                Ok(g.hop_distances(center).into_iter().map(|d| d < radius).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelMethod {
    /// Poisson-weighted powers of the jump matrix.
    #[default]
    Uniformization,
    /// Eigendecomposition of the symmetrized generator.
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactOptions {
    pub method: KernelMethod,
    /// Bound on the discarded Poisson mass.
    pub tolerance: f64,
    /// Largest graph accepted by the dense kernel.
    pub cap: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions { method: KernelMethod::Uniformization, tolerance: 1e-12, cap: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    Exact { method: KernelMethod, truncation: f64 },
    MonteCarlo { trials: usize, seed: u64 },
}

/// One row `y -> q_t(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelRow {
    Dense(Vec<f64>),
    /// Nonzero entries `(y, q, standard error)` in increasing `y`.
    Sparse(Vec<(u32, f64, f64)>),
}

impl KernelRow {
    pub fn get(&self, y: usize) -> f64 {
        match self {
            KernelRow::Dense(v) => v[y],
            KernelRow::Sparse(e) => e.binary_search_by_key(&(y as u32), |t| t.0).map(|i| e[i].1).unwrap_or(0.0),
        }
    }
    pub fn stderr(&self, y: usize) -> f64 {
        match self {
            KernelRow::Dense(_) => 0.0,
            KernelRow::Sparse(e) => e.binary_search_by_key(&(y as u32), |t| t.0).map(|i| e[i].2).unwrap_or(0.0),
        }
    }
    /// Dense copy over `n` vertices.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        match self {
            KernelRow::Dense(v) => v.clone(),
            KernelRow::Sparse(e) => {
                let mut v = vec![0.0; n];
                for &(y, q, _) in e {
                    v[y as usize] = q;
                }
                v
            }
        }
    }
    fn entries(&self) -> Vec<(usize, f64, f64)> {
        match self {
            KernelRow::Dense(v) => v.iter().enumerate().filter(|(_, q)| **q != 0.0).map(|(y, &q)| (y, q, 0.0)).collect(),
            KernelRow::Sparse(e) => e.iter().map(|&(y, q, s)| (y as usize, q, s)).collect(),
        }
    }
}

/// Heat kernel rows `q_t(x, ·)` for a set of sources on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernel {
    pub times: Vec<f64>,
    /// Reference measure `mu_0`.
    pub mu: Vec<f64>,
    pub sources: Vec<usize>,
    pub mode: KernelMode,
    pub boundary: Boundary,
    /// `rows[i][j]` is the row of `sources[j]` at `times[i]`.
    pub rows: Vec<Vec<KernelRow>>,
}

impl HeatKernel {
    pub fn len(&self) -> usize {
        self.mu.len()
    }
    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
    fn source_pos(&self, x: usize) -> usize {
        self.sources.iter().position(|&s| s == x).expect("source present in kernel")
    }
    /// `q_{times[ti]}(x, y)` for a source `x`.
    pub fn q(&self, ti: usize, x: usize, y: usize) -> f64 {
        self.rows[ti][self.source_pos(x)].get(y)
    }
    pub fn stderr(&self, ti: usize, x: usize, y: usize) -> f64 {
        self.rows[ti][self.source_pos(x)].stderr(y)
    }
    pub fn row(&self, ti: usize, x: usize) -> &KernelRow {
        &self.rows[ti][self.source_pos(x)]
    }
    /// `sum_y q_t(x, y) mu(y)`.
    pub fn mass(&self, ti: usize, x: usize) -> f64 {
        self.row(ti, x).entries().iter().map(|&(y, q, _)| q * self.mu[y]).sum()
    }
    /// Full matrix at one time; every vertex must be a source.
    pub fn matrix(&self, ti: usize) -> Result<DMatrix<f64>> {
        let n = self.len();
        if self.sources.len() != n {
            return Err(invalid("matrix needs every vertex as a source"));
        }
        let mut m = DMatrix::zeros(n, n);
        for (j, &x) in self.sources.iter().enumerate() {
            for (y, q, _) in self.rows[ti][j].entries() {
                m[(x, y)] = q;
            }
        }
        Ok(m)
    }
    /// Writes `t,x,y,q,stderr` for every stored nonzero entry, with `x` and
    /// `y` as vertex numbers.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t,x,y,q,stderr")?;
        for (ti, t) in self.times.iter().enumerate() {
            for (j, &x) in self.sources.iter().enumerate() {
                for (y, q, s) in self.rows[ti][j].entries() {
                    writeln!(w, "{:.16e},{x},{y},{:.16e},{:.16e}", t, q, s)?;
                }
            }
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(invalid("times must be finite and nonnegative"));
    }
    Ok(())
}

fn ln_factorial(k: usize) -> f64 {
    statrs::function::gamma::ln_gamma(k as f64 + 1.0)
}

fn poisson_pmf(t: f64, k: usize) -> f64 {
    if t == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-t + k as f64 * t.ln() - ln_factorial(k)).exp()
}

/// `P(N >= k)` for `N` Poisson with mean `t`.
pub fn poisson_tail(t: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if t == 0.0 {
        return 0.0;
    }
    if (k as f64) <= t {
        let below: f64 = (0..k).map(|j| poisson_pmf(t, j)).sum();
        return (1.0 - below).max(0.0);
    }
    let mut sum = 0.0;
    let mut j = k;
    loop {
        let p = poisson_pmf(t, j);
        sum += p;
        if p <= sum * 1e-17 || p == 0.0 {
            return sum;
        }
        j += 1;
    }
}

/// Smallest `K` with `P(N > K) < tol` at the largest time.
fn truncation_point(t: f64, tol: f64) -> usize {
    let mut k = t.ceil() as usize;
    while poisson_tail(t, k + 1) >= tol {
        k += 1 + (k / 64);
    }
    k
}

/// Rows of the kernel by uniformization: `P^x(Y_t = ·) = sum_k e^{-t} t^k/k! (delta_x P^k)`.
fn uniformized_row(g: &WeightedSubgraph, alive: &[bool], x: usize, times: &[f64], k_max: usize) -> Vec<KernelRow> {
    let n = g.len();
    let mu = g.mu0();
    let mut acc = vec![vec![0.0; n]; times.len()];
    if !alive[x] {
        return acc.into_iter().map(KernelRow::Dense).collect();
    }
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    v[x] = 1.0;
    let mut support = vec![x];
    let mut in_support = vec![false; n];
    in_support[x] = true;
    for k in 0..=k_max {
        for (ti, &t) in times.iter().enumerate() {
            let w = poisson_pmf(t, k);
            if w > 0.0 {
                let row = &mut acc[ti];
                for &y in &support {
                    row[y] += w * v[y];
                }
            }
        }
        if k == k_max {
            break;
        }
        let len = support.len();
        for i in 0..len {
            let u = support[i];
            let mass = v[u];
            if mass == 0.0 {
                continue;
            }
            let scale = mass / mu[u];
            for &(y, e) in g.neighbors(u) {
                let y = y as usize;
                if !alive[y] {
                    continue;
                }
                next[y] += scale * g.conductance(e as usize);
                if !in_support[y] {
                    in_support[y] = true;
                    support.push(y);
                }
            }
        }
        for &y in &support {
            v[y] = next[y];
            next[y] = 0.0;
        }
    }
    acc.into_iter()
        .map(|mut row| {
            for (y, q) in row.iter_mut().enumerate() {
                *q /= mu[y];
            }
            KernelRow::Dense(row)
        })
        .collect()
}

fn transpose(per_source: Vec<Vec<KernelRow>>, times: usize) -> Vec<Vec<KernelRow>> {
    let mut rows: Vec<Vec<KernelRow>> = (0..times).map(|_| Vec::with_capacity(per_source.len())).collect();
    for src in per_source {
        for (ti, r) in src.into_iter().enumerate() {
            rows[ti].push(r);
        }
    }
    rows
}

/// Exact rows `q_t(x, ·)` for the given sources by uniformization, with no
/// size cap.
pub fn heat_kernel_rows(
    g: &WeightedSubgraph,
    sources: &[usize],
    times: &[f64],
    boundary: Boundary,
    tolerance: f64,
    exec: Exec,
) -> Result<HeatKernel> {
    check_times(times)?;
    for &x in sources {
        check_vertex(g, x)?;
    }
    if !(tolerance > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let alive = boundary.alive(g)?;
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let k_max = truncation_point(t_max, tolerance);
    let truncation = times.iter().map(|&t| poisson_tail(t, k_max + 1)).fold(0.0, f64::max);
    let per_source = map_indexed(exec, sources.len(), |j| uniformized_row(g, &alive, sources[j], times, k_max));
    Ok(HeatKernel {
        times: times.to_vec(),
        mu: g.mu0().to_vec(),
        sources: sources.to_vec(),
        mode: KernelMode::Exact { method: KernelMethod::Uniformization, truncation },
        boundary,
        rows: transpose(per_source, times.len()),
    })
}

fn spectral(g: &WeightedSubgraph, times: &[f64], boundary: Boundary) -> Result<HeatKernel> {
    let alive = boundary.alive(g)?;
    let idx: Vec<usize> = (0..g.len()).filter(|&i| alive[i]).collect();
    let mut pos = vec![usize::MAX; g.len()];
    for (k, &i) in idx.iter().enumerate() {
        pos[i] = k;
    }
    let m = idx.len();
    let mu = g.mu0();
    let mut s = DMatrix::<f64>::zeros(m, m);
    for (k, &i) in idx.iter().enumerate() {
        s[(k, k)] = -1.0;
        for &(j, e) in g.neighbors(i) {
            let j = j as usize;
            if alive[j] {
                s[(k, pos[j])] += g.conductance(e as usize) / (mu[i] * mu[j]).sqrt();
            }
        }
    }
    let (vals, vecs) = sym_eigen(s);
    let n = g.len();
    let rows = times
        .iter()
        .map(|&t| {
            let ex: Vec<f64> = vals.iter().map(|l| (t * l).exp()).collect();
            let scaled = DMatrix::from_fn(m, m, |r, c| vecs[(r, c)] * ex[c]);
            let p = &scaled * vecs.transpose();
            (0..n)
                .map(|x| {
                    let mut row = vec![0.0; n];
                    if alive[x] {
                        for (k, &y) in idx.iter().enumerate() {
                            row[y] = p[(pos[x], k)] / (mu[x] * mu[y]).sqrt();
                        }
                    }
                    KernelRow::Dense(row)
                })
                .collect()
        })
        .collect();
    Ok(HeatKernel {
        times: times.to_vec(),
        mu: mu.to_vec(),
        sources: (0..n).collect(),
        mode: KernelMode::Exact { method: KernelMethod::Spectral, truncation: 0.0 },
        boundary,
        rows,
    })
}

/// The full kernel matrix on every vertex and time. Graphs above the cap
/// need [`heat_kernel_rows`] or [`mc_heat_kernel`].
pub fn exact_heat_kernel_with(
    g: &WeightedSubgraph,
    times: &[f64],
    boundary: Boundary,
    opts: &ExactOptions,
    exec: Exec,
) -> Result<HeatKernel> {
    check_times(times)?;
    if g.len() > opts.cap {
        return Err(Error::CapExceeded { what: "dense heat kernel (use Monte Carlo or single rows)", size: g.len(), cap: opts.cap });
    }
    if let Some(x) = (0..g.len()).find(|&x| g.mu0()[x] <= 0.0) {
        return Err(invalid(format!("vertex {:?} is isolated", g.point(x))));
    }
    match opts.method {
        KernelMethod::Spectral => spectral(g, times, boundary),
        KernelMethod::Uniformization => {
            let all: Vec<usize> = (0..g.len()).collect();
            heat_kernel_rows(g, &all, times, boundary, opts.tolerance, exec)
        }
    }
}

/// [`exact_heat_kernel_with`] under default options.
pub fn exact_heat_kernel(g: &WeightedSubgraph, times: &[f64], boundary: Boundary) -> Result<HeatKernel> {
    exact_heat_kernel_with(g, times, boundary, &ExactOptions::default(), Exec::default())
}

/// Row `q_t(x, ·)` estimated from `trials` independent walks, with binomial
/// standard errors.
pub fn mc_heat_kernel(g: &WeightedSubgraph, x: usize, times: &[f64], trials: usize, seed: u64, exec: Exec) -> Result<HeatKernel> {
    check_vertex(g, x)?;
    check_times(times)?;
    if trials == 0 {
        return Err(invalid("trials must be positive"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let t_max = times[*order.last().expect("nonempty")];
    let st = Stepper::new(g);
    let key = tag("mc-kernel");
    let positions = map_indexed(exec, trials, |i| {
        let mut rng = stream(derive_seed(seed, &[key, i as u64]));
        let mut out = vec![0u32; times.len()];
        let mut cur = x;
        let mut t = st.hold(&mut rng);
        for &ti in &order {
            while t <= times[ti] {
                cur = st.jump(cur, &mut rng);
                t += st.hold(&mut rng);
            }
            out[ti] = cur as u32;
        }
        let _ = t_max;
        out
    });
    let mu = g.mu0();
    let nf = trials as f64;
    let rows = (0..times.len())
        .map(|ti| {
            let mut ys: Vec<u32> = positions.iter().map(|p| p[ti]).collect();
            ys.sort_unstable();
            let mut entries = Vec::new();
            let mut i = 0;
            while i < ys.len() {
                let y = ys[i];
                let j = ys[i..].partition_point(|&v| v == y) + i;
                let p = (j - i) as f64 / nf;
                let m = mu[y as usize];
                entries.push((y, p / m, (p * (1.0 - p) / nf).sqrt() / m));
                i = j;
            }
            vec![KernelRow::Sparse(entries)]
        })
        .collect();
    Ok(HeatKernel {
        times: times.to_vec(),
        mu: mu.to_vec(),
        sources: vec![x],
        mode: KernelMode::MonteCarlo { trials, seed },
        boundary: Boundary::None,
        rows,
    })
}
