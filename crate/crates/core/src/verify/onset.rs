use serde::{Deserialize, Serialize};

use super::{distances, fit_samples, gaussian_of, kernel_samples, EnvelopeFit, Gaussian, GaussianOptions, LineFit, Metric, Violation, SLACK};
use crate::cluster::WeightedSubgraph;
use crate::error::{invalid, Result};
use crate::events::{alpha2, beta, wilson};
use crate::par::Exec;
use crate::walk::{exit_budget, heat_kernel_rows, Boundary};

/// Envelope constants fitted on the full lattice and the factor by which
/// they are relaxed before use on a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub fitted: Gaussian,
    pub relax: f64,
}

impl Reference {
    pub fn from_fit(fit: &EnvelopeFit, relax: f64) -> Result<Reference> {
        if !(relax >= 1.0) {
            return Err(invalid("relaxation factor must be at least 1"));
        }
        Ok(Reference { fitted: gaussian_of(fit)?, relax })
    }

    /// Prefactors and exponents moved outward by the relaxation factor.
    pub fn relaxed(&self) -> Gaussian {
        let r = self.relax;
        let c = self.fitted;
        Gaussian { c1: c.c1 / r, c2: c.c2 * r, c3: c.c3 * r, c4: c.c4 / r }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SxOptions {
    pub times: Vec<f64>,
    /// Distances `|x - y|` at which targets are sampled.
    pub dists: Vec<u32>,
    pub reference: Reference,
    /// Largest tolerated probability of meeting a truncated vertex.
    pub budget: f64,
    pub metric: Metric,
}

/// Onset time of the relaxed reference envelope at `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SxEstimate {
    pub x: usize,
    /// `None` when the envelope fails at the last admissible time.
    pub sx: Option<f64>,
    /// Grid times within the exit budget.
    pub times: Vec<f64>,
    /// Grid times dropped by the exit budget.
    pub dropped: Vec<f64>,
    pub passing: Vec<bool>,
    pub constants: Gaussian,
    pub checked: usize,
    pub violations: Vec<Violation>,
}

/// Largest `t <= t_max` with exit budget at most `budget`, by bisection.
pub fn admissible_horizon(g: &WeightedSubgraph, x: usize, budget: f64, t_max: f64) -> Result<f64> {
    if exit_budget(g, x, t_max)? <= budget {
        return Ok(t_max);
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if exit_budget(g, x, mid)? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Smallest grid time `T` such that the relaxed envelope holds at every
/// admissible grid time `t >= T` for every sampled `y` with `D <= t`.
pub fn estimate_s_x(g: &WeightedSubgraph, x: usize, opts: &SxOptions, exec: Exec) -> Result<SxEstimate> {
    if opts.times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(invalid("onset times must be positive"));
    }
    let mut times = opts.times.clone();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for &t in &times {
        if exit_budget(g, x, t)? <= opts.budget {
            keep.push(t);
        } else {
            dropped.push(t);
        }
    }
    let env = opts.reference.relaxed();
    if keep.is_empty() {
        return Ok(SxEstimate { x, sx: None, times: keep, dropped, passing: Vec::new(), constants: env, checked: 0, violations: Vec::new() });
    }
    let dist = distances(g, x, opts.metric);
    let targets: Vec<usize> = (0..g.len()).filter(|&y| opts.dists.contains(&dist[y])).collect();
    let k = heat_kernel_rows(g, &[x], &keep, Boundary::None, 1e-12, exec)?;
    let samples = kernel_samples(
        g,
        &k,
        x,
        &GaussianOptions { metric: opts.metric, t_min: 0.0, dist_frac: 1.0, targets: Some(targets) },
    );
    let violations = env.violations(g.dim(), x, &samples, SLACK);
    let passing: Vec<bool> = keep.iter().map(|&t| !violations.iter().any(|v| v.t == t)).collect();
    let sx = match passing.iter().rposition(|&p| !p) {
        None => Some(keep[0]),
        Some(i) if i + 1 < keep.len() => Some(keep[i + 1]),
        Some(_) => None,
    };
    Ok(SxEstimate { x, sx, times: keep, dropped, passing, constants: env, checked: samples.len(), violations })
}

/// Empirical tail `P(S_x >= n)` over an ensemble, with `None` read as
/// infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SxTail {
    pub thresholds: Vec<f64>,
    pub exceed: Vec<u64>,
    pub freq: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub samples: usize,
    pub monotone: bool,
    /// Free fit of `log(-log P)` against `log n`; the slope is the stretched
    /// exponent.
    pub stretched: Option<LineFit>,
    /// `alpha_2 beta` for comparison with the fitted exponent.
    pub suggested_exponent: f64,
}

pub fn s_x_tail(values: &[Option<f64>], thresholds: &[f64], d: usize) -> Result<SxTail> {
    if values.is_empty() || thresholds.is_empty() {
        return Err(invalid("need onset values and thresholds"));
    }
    let n = values.len() as u64;
    let exceed: Vec<u64> = thresholds
        .iter()
        .map(|&th| values.iter().filter(|v| v.is_none_or(|s| s >= th)).count() as u64)
        .collect();
    let freq: Vec<f64> = exceed.iter().map(|&k| k as f64 / n as f64).collect();
    let (lo, hi) = exceed.iter().map(|&k| wilson(k, n)).unzip();
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .zip(&freq)
        .filter(|(th, p)| **th > 0.0 && **p > 0.0 && **p < 1.0)
        .map(|(th, p)| (th.ln(), (-p.ln()).ln()))
        .collect();
    let stretched = if pts.len() >= 2 {
        LineFit::new(&pts.iter().map(|p| p.0).collect::<Vec<_>>(), &pts.iter().map(|p| p.1).collect::<Vec<_>>()).ok()
    } else {
        None
    };
    let mut order: Vec<usize> = (0..thresholds.len()).collect();
    order.sort_by(|&a, &b| thresholds[a].total_cmp(&thresholds[b]));
    let monotone = order.windows(2).all(|w| freq[w[1]] <= freq[w[0]]);
    Ok(SxTail {
        thresholds: thresholds.to_vec(),
        exceed,
        freq,
        lo,
        hi,
        samples: values.len(),
        monotone,
        stretched,
        suggested_exponent: alpha2(d) * beta(d),
    })
}

/// Fits reference constants on the given kernel with `D <= t`.
pub fn reference_from_kernel(
    g: &WeightedSubgraph,
    k: &crate::walk::HeatKernel,
    x: usize,
    dists: &[u32],
    relax: f64,
) -> Result<Reference> {
    let dist = distances(g, x, Metric::L1);
    let targets: Vec<usize> = (0..g.len()).filter(|&y| dists.contains(&dist[y])).collect();
    let samples = kernel_samples(g, k, x, &GaussianOptions { targets: Some(targets), ..Default::default() });
    let (fit, _) = fit_samples("reference", g.dim(), x, &samples)?;
    Reference::from_fit(&fit, relax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::tests::lattice;

    fn grid() -> (Vec<f64>, Vec<u32>) {
        ((0..8).map(|i| 2f64.powf(i as f64 * 0.5)).collect(), vec![0, 1, 2, 4, 8])
    }

    fn decorated() -> (WeightedSubgraph, usize) {
        let side = 60;
        let mut pts = Vec::new();
        for i in 0..=side {
            for j in 0..=side {
                pts.push(vec![i, j]);
            }
        }
        let id = |i: i32, j: i32| (i * (side + 1) + j) as usize;
        let on_path = |i: i32, j: i32| i == 30 && (20..30).contains(&j);
        let mut edges = Vec::new();
        for i in 0..=side {
            for j in 0..=side {
                for (di, dj) in [(1, 0), (0, 1)] {
                    let (a, b) = (i + di, j + dj);
                    if a > side || b > side {
                        continue;
                    }
                    let path_edge = i == 30 && a == 30 && (20..30).contains(&j);
                    if (on_path(i, j) || on_path(a, b)) && !path_edge {
                        continue;
                    }
                    edges.push((id(i, j), id(a, b), 1.0));
                }
            }
        }
        let g = WeightedSubgraph::from_parts(pts, edges, None).unwrap();
        let x = g.index_of(&[30, 20]).unwrap();
        (g, x)
    }

    fn reference() -> Reference {
        let g = lattice(2, 60);
        let x = g.index_of(&[30, 30]).unwrap();
        let (times, dists) = grid();
        let k = heat_kernel_rows(&g, &[x], &times, Boundary::None, 1e-12, Exec::Sequential).unwrap();
        reference_from_kernel(&g, &k, x, &dists, 4.0).unwrap()
    }

    #[test]
    fn lattice_onset_is_first_time() {
        let g = lattice(2, 60);
        let x = g.index_of(&[30, 30]).unwrap();
        let (times, dists) = grid();
        let opts = SxOptions { times: times.clone(), dists, reference: reference(), budget: 1e-3, metric: Metric::L1 };
        let e = estimate_s_x(&g, x, &opts, Exec::Sequential).unwrap();
        assert_eq!(e.sx, Some(times[0]));
        assert!(e.dropped.is_empty() && e.violations.is_empty());
    }

    #[test]
    fn pendant_path_delays_onset() {
        let (g, x) = decorated();
        assert_eq!(g.mu0()[x], 1.0);
        let (times, dists) = grid();
        let opts = SxOptions { times: times.clone(), dists, reference: reference(), budget: 1e-3, metric: Metric::L1 };
        let e = estimate_s_x(&g, x, &opts, Exec::Sequential).unwrap();
        assert!(e.sx.is_none_or(|s| s > times[0]), "{:?}", e.sx);
    }

    #[test]
    fn refinement_never_lowers_onset() {
        let (g, x) = decorated();
        let (times, dists) = grid();
        let r = reference();
        let coarse = SxOptions { times: times.iter().step_by(2).copied().collect(), dists: dists.clone(), reference: r, budget: 1e-3, metric: Metric::L1 };
        let fine = SxOptions { times, dists, reference: r, budget: 1e-3, metric: Metric::L1 };
        let a = estimate_s_x(&g, x, &coarse, Exec::Sequential).unwrap();
        let b = estimate_s_x(&g, x, &fine, Exec::Sequential).unwrap();
        let last_fail = |e: &SxEstimate| e.passing.iter().rposition(|&p| !p).map(|i| e.times[i]).unwrap_or(0.0);
        assert!(last_fail(&b) >= last_fail(&a));
        let sb = b.sx.unwrap_or(f64::INFINITY);
        let first_coarse_after = a.times.iter().copied().find(|&t| t >= sb).unwrap_or(f64::INFINITY);
        assert!(a.sx.unwrap_or(f64::INFINITY) <= first_coarse_after);
    }

    #[test]
    fn horizon_respects_budget() {
        let g = lattice(2, 40);
        let x = g.index_of(&[20, 20]).unwrap();
        let h = admissible_horizon(&g, x, 1e-3, 1000.0).unwrap();
        assert!(exit_budget(&g, x, h).unwrap() <= 1e-3);
        assert!(exit_budget(&g, x, h * 1.01).unwrap() > 1e-3);
    }

    #[test]
    fn tail_counts() {
        let v = [Some(1.0), Some(2.0), Some(4.0), None];
        let t = s_x_tail(&v, &[1.0, 2.0, 4.0, 8.0], 2).unwrap();
        assert_eq!(t.exceed, vec![4, 3, 2, 1]);
        assert!(t.monotone);
        assert!((t.suggested_exponent - beta(2) / 44.0).abs() < 1e-15);
    }
}
