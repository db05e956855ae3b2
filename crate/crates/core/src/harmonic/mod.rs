//! Discrete Dirichlet problems on balls of a weighted graph, Harnack ratios
//! and oscillation decay of positive harmonic functions, and the pendant
//! cube graph on which the exponentially weighted Poincare inequality
//! degenerates.
//!
//! A function `h` on `B ∪ ∂_e B` is harmonic on `B` when
//! `sum_y nu_xy (h(y) - h(x)) = 0` for every `x` in `B`.

mod pendant;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::WeightedSubgraph;
use crate::error::{invalid, Error, Result};
use crate::linalg::{solve_cg, Laplacian};
use crate::par::{map_indexed, map_slice, Exec};
use crate::rng::{derive_seed, stream, tag};
use crate::walk::Stepper;

pub use pendant::{exp_weighted_ratio, pendant_cube_graph, PendantCube};

/// Largest number of unknowns accepted by the dense solver.
pub const DIRECT_CAP: usize = 3000;

/// A vertex set `B` with its exterior boundary `∂_e B` in a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Option<usize>,
    pub radius: Option<u32>,
    /// Sorted interior vertices.
    pub interior: Vec<usize>,
    /// Sorted vertices outside `B` with a neighbour in `B`.
    pub boundary: Vec<usize>,
    /// Distance from the centre on `B ∪ ∂_e B`, when the ball has one.
    pub dist: Vec<u32>,
}

impl Ball {
    /// `B(x, R) = {y : d(x, y) < R}` in the graph distance.
    pub fn new(g: &WeightedSubgraph, center: usize, radius: u32) -> Result<Ball> {
        if center >= g.len() {
            return Err(invalid("ball centre out of range"));
        }
        if radius == 0 {
            return Err(invalid("radius must be positive"));
        }
        let d = g.hop_distances(center);
        let interior: Vec<usize> = (0..g.len()).filter(|&v| d[v] < radius).collect();
        let boundary: Vec<usize> = (0..g.len()).filter(|&v| d[v] == radius).collect();
        if boundary.is_empty() {
            return Err(Error::NoPathToBoundary(g.point(center).to_vec()));
        }
        Ok(Ball { center: Some(center), radius: Some(radius), interior, boundary, dist: d })
    }

    /// An arbitrary interior set. Every component of the interior must touch
    /// the boundary.
    pub fn from_interior(g: &WeightedSubgraph, mut interior: Vec<usize>) -> Result<Ball> {
        interior.sort_unstable();
        interior.dedup();
        if interior.is_empty() || interior.last().is_some_and(|&v| v >= g.len()) {
            return Err(invalid("interior must be a nonempty set of vertices"));
        }
        let mut inside = vec![false; g.len()];
        for &v in &interior {
            inside[v] = true;
        }
        let mut boundary: Vec<usize> = interior
            .iter()
            .flat_map(|&v| g.neighbors(v).iter().map(|&(y, _)| y as usize))
            .filter(|&y| !inside[y])
            .collect();
        boundary.sort_unstable();
        boundary.dedup();
        let (comp, count) = g.components(Some(&inside));
        let mut reaches = vec![false; count];
        for &v in &interior {
            if g.neighbors(v).iter().any(|&(y, _)| !inside[y as usize]) {
                reaches[comp[v] as usize] = true;
            }
        }
        if let Some(&v) = interior.iter().find(|&&v| !reaches[comp[v] as usize]) {
            return Err(Error::NoPathToBoundary(g.point(v).to_vec()));
        }
        Ok(Ball { center: None, radius: None, interior, boundary, dist: Vec::new() })
    }

    /// Interior vertices within distance `< r` of the centre.
    pub fn inner(&self, r: u32) -> Result<Vec<usize>> {
        if self.center.is_none() {
            return Err(invalid("inner balls need a centred ball"));
        }
        Ok(self.interior.iter().copied().filter(|&v| self.dist[v] < r).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    /// Direct for small systems, conjugate gradients otherwise.
    #[default]
    Auto,
    Direct,
    Iterative,
}

/// `h` on `B ∪ ∂_e B` with its largest normalized residual
/// `max_x |sum_y nu_xy (h(y) - h(x))| / mu_0(x)` over `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSolution {
    pub ball: Ball,
    pub boundary_values: Vec<f64>,
    pub interior_values: Vec<f64>,
    pub residual: f64,
    pub tolerance: f64,
    pub method: SolveMethod,
}

impl HarmonicSolution {
    /// Value at a vertex of `B ∪ ∂_e B`.
    pub fn value(&self, v: usize) -> Option<f64> {
        if let Ok(i) = self.ball.interior.binary_search(&v) {
            return Some(self.interior_values[i]);
        }
        self.ball.boundary.binary_search(&v).ok().map(|i| self.boundary_values[i])
    }

    pub fn boundary_range(&self) -> (f64, f64) {
        range(&self.boundary_values)
    }

    /// Whether the interior values lie within the boundary range up to the
    /// solver tolerance.
    pub fn maximum_principle_holds(&self) -> bool {
        let (lo, hi) = self.boundary_range();
        let slack = self.tolerance.max(1e-12 * hi.abs().max(lo.abs()).max(1.0)) * 10.0;
        self.interior_values.iter().all(|&v| v >= lo - slack && v <= hi + slack)
    }

    /// `Osc(h, A) = max_A h - min_A h`.
    pub fn oscillation(&self, set: &[usize]) -> f64 {
        let vals: Vec<f64> = set.iter().filter_map(|&v| self.value(v)).collect();
        let (lo, hi) = range(&vals);
        if vals.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

fn residual(g: &WeightedSubgraph, ball: &Ball, full: &[f64]) -> f64 {
    let mu = g.mu0();
    ball.interior
        .iter()
        .map(|&x| {
            let s: f64 = g.neighbors(x).iter().map(|&(y, e)| g.conductance(e as usize) * (full[y as usize] - full[x])).sum();
            s.abs() / mu[x]
        })
        .fold(0.0, f64::max)
}

/// Solves `Lh = 0` on `B` with `h = boundary_values` on `∂_e B`, listed in
/// the order of `ball.boundary`. The residual target is `1e-10` times the
/// boundary range.
pub fn solve_dirichlet(g: &WeightedSubgraph, ball: &Ball, boundary_values: &[f64], method: SolveMethod) -> Result<HarmonicSolution> {
    if boundary_values.len() != ball.boundary.len() {
        return Err(invalid("one boundary value per boundary vertex"));
    }
    if boundary_values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("boundary values must be finite"));
    }
    let (lo, hi) = range(boundary_values);
    let tolerance = 1e-10 * (hi - lo).max(f64::MIN_POSITIVE);
    let n = ball.interior.len();
    let mut full = vec![0.0; g.len()];
    for (&v, &b) in ball.boundary.iter().zip(boundary_values) {
        full[v] = b;
    }
    let mut inside = vec![false; g.len()];
    for &v in &ball.interior {
        inside[v] = true;
    }
    let mut shift = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for (k, &x) in ball.interior.iter().enumerate() {
        for &(y, e) in g.neighbors(x) {
            let y = y as usize;
            if !inside[y] {
                let c = g.conductance(e as usize);
                shift[k] += c;
                rhs[k] += c * full[y];
            }
        }
    }
    let (sub, _) = g.induced(&inside);
    let lap = Laplacian::new(&sub, None);
    let direct = match method {
        SolveMethod::Direct if n > DIRECT_CAP => {
            return Err(Error::CapExceeded { what: "dense Dirichlet system", size: n, cap: DIRECT_CAP })
        }
        SolveMethod::Direct => true,
        SolveMethod::Auto => n <= 400,
        SolveMethod::Iterative => false,
    };
    let values = if hi - lo == 0.0 {
        vec![lo; n]
    } else if direct {
        let mut a = lap.dense();
        for k in 0..n {
            a[(k, k)] += shift[k];
        }
        let chol = nalgebra::Cholesky::new(a).ok_or_else(|| Error::Numerical("Dirichlet matrix is not positive definite".into()))?;
        chol.solve(&DVector::from_vec(rhs.clone())).as_slice().to_vec()
    } else {
        let mut x = solve_cg(&lap, Some(&shift), &rhs, 1e-14, 20 * n + 100)?;
        for _ in 0..8 {
            for (k, &v) in ball.interior.iter().enumerate() {
                full[v] = x[k];
            }
            if residual(g, ball, &full) <= tolerance {
                break;
            }
            let mut ax = vec![0.0; n];
            lap.apply(&x, &mut ax);
            let r: Vec<f64> = (0..n).map(|k| rhs[k] - ax[k] - shift[k] * x[k]).collect();
            let dx = solve_cg(&lap, Some(&shift), &r, 1e-14, 20 * n + 100)?;
            for k in 0..n {
                x[k] += dx[k];
            }
        }
        x
    };
    for (k, &v) in ball.interior.iter().enumerate() {
        full[v] = values[k];
    }
    let res = residual(g, ball, &full);
    if res > tolerance {
        return Err(Error::Numerical(format!("Dirichlet residual {res:e} above target {tolerance:e}")));
    }
    Ok(HarmonicSolution {
        ball: ball.clone(),
        boundary_values: boundary_values.to_vec(),
        interior_values: values,
        residual: res,
        tolerance,
        method,
    })
}

/// `sup h / inf h` over the inner ball `B(x, r)`.
pub fn harnack_ratio(sol: &HarmonicSolution, r: u32) -> Result<f64> {
    let inner = sol.ball.inner(r)?;
    if inner.is_empty() {
        return Err(invalid("inner ball is empty"));
    }
    let vals: Vec<f64> = inner.iter().filter_map(|&v| sol.value(v)).collect();
    let (lo, hi) = range(&vals);
    if lo <= 0.0 {
        return Err(Error::NonPositive(lo));
    }
    Ok(hi / lo)
}

/// I.i.d. uniform values in `[0.1, 1.1)`, one vector per dataset.
pub fn random_boundary_data(len: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let key = tag("boundary-data");
    (0..count)
        .map(|i| {
            let mut rng = stream(derive_seed(seed, &[key, i as u64]));
            (0..len).map(|_| 0.1 + rng.random::<f64>()).collect()
        })
        .collect()
}

/// Ratios `Osc(h, B_1) / Osc(h, B_0)` over an ensemble, with
/// `B_0 = B(x, R)` and `B_1 = B(x, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationDecay {
    pub outer: u32,
    pub inner: u32,
    pub factors: Vec<f64>,
    pub max: f64,
    pub harnack: Vec<f64>,
    pub maximum_principle: bool,
}

/// Solves one Dirichlet problem per dataset and reports oscillation decay
/// factors and Harnack ratios on the inner ball.
pub fn oscillation_decay(g: &WeightedSubgraph, ball: &Ball, inner: u32, datasets: &[Vec<f64>], exec: Exec) -> Result<OscillationDecay> {
    let outer = ball.radius.ok_or_else(|| invalid("oscillation decay needs a centred ball"))?;
    if inner == 0 || inner > outer {
        return Err(invalid("inner radius must lie in 1..=R"));
    }
    let inner_set = ball.inner(inner)?;
    let results = map_slice(exec, datasets, |data| -> Result<(f64, f64, bool)> {
        let sol = solve_dirichlet(g, ball, data, SolveMethod::Auto)?;
        let o0 = sol.oscillation(&ball.interior);
        let o1 = sol.oscillation(&inner_set);
        let factor = if o0 == 0.0 { 0.0 } else { o1 / o0 };
        let h = if data.iter().all(|&v| v > 0.0) { harnack_ratio(&sol, inner)? } else { f64::NAN };
        Ok((factor, h, sol.maximum_principle_holds()))
    });
    let mut factors = Vec::with_capacity(results.len());
    let mut harnack = Vec::with_capacity(results.len());
    let mut mp = true;
    for r in results {
        let (f, h, ok) = r?;
        factors.push(f);
        harnack.push(h);
        mp &= ok;
    }
    let max = factors.iter().cloned().fold(0.0, f64::max);
    Ok(OscillationDecay { outer, inner, factors, max, harnack, maximum_principle: mp })
}

/// Monte Carlo estimate of `E^x h(Y_tau)` with `tau` the hitting time of
/// `∂_e B`; returns the mean and its standard error.
pub fn boundary_hit_estimate(sol: &HarmonicSolution, g: &WeightedSubgraph, x: usize, trials: usize, seed: u64, exec: Exec) -> Result<(f64, f64)> {
    crate::walk::check_vertex(g, x)?;
    if trials < 2 {
        return Err(invalid("at least two trials"));
    }
    let mut on_boundary = vec![None; g.len()];
    for (&v, &b) in sol.ball.boundary.iter().zip(&sol.boundary_values) {
        on_boundary[v] = Some(b);
    }
    if let Some(b) = on_boundary[x] {
        return Ok((b, 0.0));
    }
    let st = Stepper::new(g);
    let key = tag("boundary-hit");
    let samples = map_indexed(exec, trials, |i| {
        let mut rng = stream(derive_seed(seed, &[key, i as u64]));
        let mut cur = x;
        loop {
            cur = st.jump(cur, &mut rng);
            if let Some(b) = on_boundary[cur] {
                return b;
            }
        }
    });
    let n = trials as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::{BondConfig, LatticeBox};
    use crate::walk::cluster_graph;
    use proptest::prelude::*;

    fn lattice(d: usize, side: i32) -> WeightedSubgraph {
        let b = LatticeBox::cube(&vec![0; d], side).unwrap();
        cluster_graph(&BondConfig::sample(&b, 1.0, 0).unwrap(), &b).unwrap()
    }

    fn path(n: i32) -> WeightedSubgraph {
        let pts = (0..n).map(|i| vec![i]).collect();
        let edges = (0..n as usize - 1).map(|i| (i, i + 1, 1.0)).collect();
        WeightedSubgraph::from_parts(pts, edges, None).unwrap()
    }

    #[test]
    fn three_vertex_path() {
        let g = path(3);
        let b = Ball::new(&g, 1, 1).unwrap();
        assert_eq!(b.interior, vec![1]);
        assert_eq!(b.boundary, vec![0, 2]);
        for m in [SolveMethod::Direct, SolveMethod::Iterative] {
            let s = solve_dirichlet(&g, &b, &[0.0, 2.0], m).unwrap();
            assert!((s.value(1).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_are_harmonic() {
        let g = lattice(2, 20);
        let b = Ball::new(&g, g.index_of(&[10, 10]).unwrap(), 8).unwrap();
        let s = solve_dirichlet(&g, &b, &vec![3.5; b.boundary.len()], SolveMethod::Auto).unwrap();
        assert!(s.interior_values.iter().all(|&v| v == 3.5));
        assert_eq!(harnack_ratio(&s, 4).unwrap(), 1.0);
        assert_eq!(s.oscillation(&b.interior), 0.0);
    }

    #[test]
    fn linear_functions_are_reproduced() {
        let g = lattice(2, 30);
        let b = Ball::new(&g, g.index_of(&[15, 15]).unwrap(), 12).unwrap();
        let f = |v: usize| 2.0 * g.point(v)[0] as f64 - 0.5 * g.point(v)[1] as f64;
        let data: Vec<f64> = b.boundary.iter().map(|&v| f(v)).collect();
        for m in [SolveMethod::Direct, SolveMethod::Iterative] {
            let s = solve_dirichlet(&g, &b, &data, m).unwrap();
            for (&v, &h) in b.interior.iter().zip(&s.interior_values) {
                assert!((h - f(v)).abs() < 1e-8, "{m:?}");
            }
            assert!(s.residual <= s.tolerance);
        }
    }

    #[test]
    fn unreachable_interior_is_rejected() {
        let g = WeightedSubgraph::from_parts(vec![vec![0], vec![1], vec![5], vec![6]], vec![(0, 1, 1.0), (2, 3, 1.0)], None).unwrap();
        assert!(matches!(Ball::from_interior(&g, vec![1, 2, 3]), Err(Error::NoPathToBoundary(_))));
        assert!(Ball::from_interior(&g, vec![1]).is_ok());
        let lone = path(3);
        assert!(matches!(Ball::new(&lone, 0, 5), Err(Error::NoPathToBoundary(_))));
    }

    #[test]
    fn harnack_is_scale_invariant() {
        let g = lattice(2, 24);
        let b = Ball::new(&g, g.index_of(&[12, 12]).unwrap(), 10).unwrap();
        let data = &random_boundary_data(b.boundary.len(), 1, 4)[0];
        let s1 = solve_dirichlet(&g, &b, data, SolveMethod::Auto).unwrap();
        let scaled: Vec<f64> = data.iter().map(|v| v * 7.0).collect();
        let s2 = solve_dirichlet(&g, &b, &scaled, SolveMethod::Auto).unwrap();
        let (r1, r2) = (harnack_ratio(&s1, 5).unwrap(), harnack_ratio(&s2, 5).unwrap());
        assert!((r1 - r2).abs() < 1e-9 * r1);
        let neg: Vec<f64> = data.iter().map(|v| v - 0.6).collect();
        let s3 = solve_dirichlet(&g, &b, &neg, SolveMethod::Auto).unwrap();
        assert!(harnack_ratio(&s3, 9).is_err() || s3.interior_values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn decay_factors_below_one() {
        let g = lattice(2, 36);
        let b = Ball::new(&g, g.index_of(&[18, 18]).unwrap(), 16).unwrap();
        let data = random_boundary_data(b.boundary.len(), 10, 1);
        let r = oscillation_decay(&g, &b, 8, &data, Exec::Parallel).unwrap();
        assert!(r.max < 1.0 && r.maximum_principle);
        assert!(r.harnack.iter().all(|&h| h >= 1.0 && h.is_finite()));
    }

    #[test]
    fn iterated_decay_is_submultiplicative() {
        let g = lattice(2, 36);
        let b = Ball::new(&g, g.index_of(&[18, 18]).unwrap(), 16).unwrap();
        let data = &random_boundary_data(b.boundary.len(), 1, 2)[0];
        let s = solve_dirichlet(&g, &b, data, SolveMethod::Auto).unwrap();
        let osc: Vec<f64> = [16, 8, 4].iter().map(|&r| s.oscillation(&b.inner(r).unwrap())).collect();
        let f1 = osc[1] / osc[0];
        let f2 = osc[2] / osc[1];
        let max = f1.max(f2);
        assert!(osc[2] / osc[0] <= max * max + 1e-15);
    }

    #[test]
    fn boundary_hits_match_solution() {
        let g = lattice(2, 12);
        let b = Ball::new(&g, g.index_of(&[6, 6]).unwrap(), 4).unwrap();
        let data = &random_boundary_data(b.boundary.len(), 1, 9)[0];
        let s = solve_dirichlet(&g, &b, data, SolveMethod::Auto).unwrap();
        let x = g.index_of(&[7, 6]).unwrap();
        let (m, se) = boundary_hit_estimate(&s, &g, x, 40_000, 3, Exec::Parallel).unwrap();
        assert!((m - s.value(x).unwrap()).abs() < 4.0 * se);
    }

    #[test]
    fn averaging_iteration_contracts_to_solution() {
        let cfg = BondConfig::sample(&LatticeBox::cube(&[0, 0], 16).unwrap(), 0.7, 3).unwrap();
        let g = cluster_graph(&cfg, cfg.lattice_box()).unwrap();
        let b = Ball::new(&g, 0, 6).unwrap();
        let data = &random_boundary_data(b.boundary.len(), 1, 5)[0];
        let s = solve_dirichlet(&g, &b, data, SolveMethod::Auto).unwrap();
        let mut full = vec![0.0; g.len()];
        for (&v, &x) in b.boundary.iter().zip(data) {
            full[v] = x;
        }
        let mut prev = f64::INFINITY;
        for _ in 0..3000 {
            let next: Vec<f64> = b
                .interior
                .iter()
                .map(|&x| g.neighbors(x).iter().map(|&(y, e)| g.conductance(e as usize) * full[y as usize]).sum::<f64>() / g.mu0()[x])
                .collect();
            for (&x, v) in b.interior.iter().zip(next) {
                full[x] = v;
            }
            let err = b.interior.iter().map(|&x| (full[x] - s.value(x).unwrap()).abs()).fold(0.0, f64::max);
            assert!(err <= prev + 1e-15);
            prev = err;
        }
        assert!(prev < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn maximum_principle(seed in any::<u64>(), r in 2u32..7) {
            let cfg = BondConfig::sample(&LatticeBox::cube(&[0, 0], 14).unwrap(), 0.65, seed).unwrap();
            let g = cluster_graph(&cfg, cfg.lattice_box()).unwrap();
            if let Ok(b) = Ball::new(&g, 0, r) {
                let data = &random_boundary_data(b.boundary.len(), 1, seed)[0];
                let s = solve_dirichlet(&g, &b, data, SolveMethod::Auto).unwrap();
                prop_assert!(s.maximum_principle_holds());
                prop_assert!(s.residual <= s.tolerance);
            }
        }
    }
}
