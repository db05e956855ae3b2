use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fit_samples, EnvelopeFit, LineFit, Sample};
use crate::cluster::{induced_graph, largest_open_cluster, WeightedSubgraph};
use crate::error::{invalid, Error, Result};
use crate::par::{map_indexed, Exec};
use crate::percolation::{BondConfig, LatticeBox};
use crate::rng::{derive_seed, stream, tag};
use crate::walk::{exit_budget, heat_kernel_rows, Boundary};

const Z95: f64 = 1.959963984540054;

/// Conditional mean of `q_t(x, y)` given `x, y` in the largest cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealedReport {
    pub x: Vec<i32>,
    pub targets: Vec<Vec<i32>>,
    /// `|x - y|_1` per target.
    pub dists: Vec<u32>,
    pub times: Vec<f64>,
    /// Configurations in which both endpoints lie in the largest cluster.
    pub used: Vec<usize>,
    /// `mean[ti][yi]`.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub ci_lo: Vec<Vec<f64>>,
    pub ci_hi: Vec<Vec<f64>>,
    /// Largest exit budget over the used configurations, per time.
    pub leak: Vec<f64>,
    /// Gaussian envelope of the means over the points with `D <= t`.
    pub fit: Option<EnvelopeFit>,
}

fn cluster_of(cfg: &BondConfig, region: &LatticeBox) -> Result<WeightedSubgraph> {
    let c = largest_open_cluster(cfg.into(), region)?;
    induced_graph(cfg.into(), &c)
}

/// Averages `q_t(x, y)` over an ensemble, conditioning on `x` and `y` lying
/// in the largest open cluster of `region`.
pub fn annealed_average(
    configs: &[BondConfig],
    region: &LatticeBox,
    x: &[i32],
    targets: &[Vec<i32>],
    times: &[f64],
    exec: Exec,
) -> Result<AnnealedReport> {
    if targets.is_empty() || times.is_empty() {
        return Err(invalid("need targets and times"));
    }
    let per = map_indexed(exec, configs.len(), |c| -> Result<Option<(Vec<Option<Vec<f64>>>, Vec<f64>)>> {
        let g = cluster_of(&configs[c], region)?;
        let Some(xi) = g.index_of(x) else { return Ok(None) };
        if g.mu0()[xi] == 0.0 {
            return Ok(None);
        }
        let k = heat_kernel_rows(&g, &[xi], times, Boundary::None, 1e-12, Exec::Sequential)?;
        let vals = targets
            .iter()
            .map(|y| g.index_of(y).map(|yi| (0..times.len()).map(|ti| k.q(ti, xi, yi)).collect()))
            .collect();
        let leak = times.iter().map(|&t| exit_budget(&g, xi, t)).collect::<Result<Vec<_>>>()?;
        Ok(Some((vals, leak)))
    });
    let nt = times.len();
    let ny = targets.len();
    let mut values: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); ny]; nt];
    let mut leak = vec![0.0f64; nt];
    for r in per {
        let Some((vals, lk)) = r? else { continue };
        for (yi, v) in vals.iter().enumerate() {
            if let Some(v) = v {
                for ti in 0..nt {
                    values[ti][yi].push(v[ti]);
                }
            }
        }
        if vals.iter().any(|v| v.is_some()) {
            for ti in 0..nt {
                leak[ti] = leak[ti].max(lk[ti]);
            }
        }
    }
    let used: Vec<usize> = (0..ny).map(|yi| values[0][yi].len()).collect();
    if used.iter().all(|&u| u == 0) {
        return Err(Error::EmptySet("no configuration has both endpoints in the largest cluster"));
    }
    let mut mean = vec![vec![f64::NAN; ny]; nt];
    let mut stderr = vec![vec![f64::NAN; ny]; nt];
    for ti in 0..nt {
        for yi in 0..ny {
            let v = &values[ti][yi];
            if v.is_empty() {
                continue;
            }
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            mean[ti][yi] = m;
            stderr[ti][yi] = if v.len() > 1 { (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt() } else { 0.0 };
        }
    }
    let ci_lo = mean.iter().zip(&stderr).map(|(m, s)| m.iter().zip(s).map(|(m, s)| m - Z95 * s).collect()).collect();
    let ci_hi = mean.iter().zip(&stderr).map(|(m, s)| m.iter().zip(s).map(|(m, s)| m + Z95 * s).collect()).collect();
    let dists: Vec<u32> = targets.iter().map(|y| y.iter().zip(x).map(|(a, b)| (a - b).unsigned_abs()).sum()).collect();
    let mut samples = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        for yi in 0..ny {
            let m = mean[ti][yi];
            if t > 0.0 && m > 0.0 && dists[yi] as f64 <= t {
                samples.push(Sample { t, y: yi, dist: dists[yi], q: m });
            }
        }
    }
    let fit = if samples.is_empty() { None } else { Some(fit_samples("annealed_l1", x.len(), 0, &samples)?.0) };
    Ok(AnnealedReport {
        x: x.to_vec(),
        targets: targets.to_vec(),
        dists,
        times: times.to_vec(),
        used,
        mean,
        stderr,
        ci_lo,
        ci_hi,
        leak,
        fit,
    })
}

/// How pairs are drawn inside the largest cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairSpec {
    pub pairs_per_config: usize,
    /// Sup-norm separation drawn uniformly from `min_sep..=max_sep`.
    pub min_sep: u32,
    pub max_sep: u32,
    pub quantile: f64,
    pub seed: u64,
}

impl Default for PairSpec {
    fn default() -> Self {
        PairSpec { pairs_per_config: 500, min_sep: 1, max_sep: 20, quantile: 0.999, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationRow {
    pub sep: u32,
    pub pairs: usize,
    pub exceed: usize,
    pub freq: f64,
}

/// Distribution of `d_omega(x, y) / |x - y|_inf` over sampled pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemicalReport {
    pub pairs: usize,
    pub median: f64,
    pub q90: f64,
    pub q99: f64,
    /// The configured quantile, used as `C_H`.
    pub c_h: f64,
    pub max_ratio: f64,
    /// Every sampled pair has `d_omega = |x - y|_1`.
    pub l1_exact: bool,
    /// `2 C_H`.
    pub threshold: f64,
    pub rows: Vec<SeparationRow>,
    /// `log freq` against separation over the rows with positive frequency.
    pub decay: Option<LineFit>,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn bfs_to(g: &WeightedSubgraph, x: usize, y: usize, dist: &mut [u32], queue: &mut VecDeque<usize>, touched: &mut Vec<usize>) -> Option<u32> {
    for &v in touched.iter() {
        dist[v] = u32::MAX;
    }
    touched.clear();
    queue.clear();
    dist[x] = 0;
    touched.push(x);
    queue.push_back(x);
    while let Some(u) = queue.pop_front() {
        if u == y {
            return Some(dist[u]);
        }
        for &(v, _) in g.neighbors(u) {
            let v = v as usize;
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                touched.push(v);
                queue.push_back(v);
            }
        }
    }
    None
}

/// Samples pairs in the largest cluster of `region` for every configuration
/// and reports the chemical-distance ratio distribution.
pub fn fit_chemical_constant(configs: &[BondConfig], region: &LatticeBox, spec: &PairSpec, exec: Exec) -> Result<ChemicalReport> {
    if spec.min_sep == 0 || spec.max_sep < spec.min_sep || !(spec.quantile > 0.0 && spec.quantile < 1.0) {
        return Err(invalid("separations must satisfy 1 <= min <= max and the quantile lie in (0, 1)"));
    }
    let key = tag("chemical-pairs");
    let per = map_indexed(exec, configs.len(), |c| -> Result<Vec<(u32, u32, u32)>> {
        let g = cluster_of(&configs[c], region)?;
        let d = g.dim();
        let mut rng = stream(derive_seed(spec.seed, &[key, c as u64]));
        let mut dist = vec![u32::MAX; g.len()];
        let mut queue = VecDeque::new();
        let mut touched = Vec::new();
        let mut out = Vec::with_capacity(spec.pairs_per_config);
        if g.len() < 2 {
            return Ok(out);
        }
        for _ in 0..spec.pairs_per_config {
            for _ in 0..100 {
                let x = rng.random_range(0..g.len());
                let r = rng.random_range(spec.min_sep..=spec.max_sep) as i32;
                let axis = rng.random_range(0..d);
                let mut p = g.point(x).to_vec();
                for (a, c) in p.iter_mut().enumerate() {
                    *c += if a == axis { if rng.random::<bool>() { r } else { -r } } else { rng.random_range(-r..=r) };
                }
                let Some(y) = g.index_of(&p) else { continue };
                if let Some(dw) = bfs_to(&g, x, y, &mut dist, &mut queue, &mut touched) {
                    let l1 = g.point(x).iter().zip(&p).map(|(a, b)| (a - b).unsigned_abs()).sum();
                    out.push((r as u32, dw, l1));
                    break;
                }
            }
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in per {
        all.extend(r?);
    }
    if all.is_empty() {
        return Err(Error::EmptySet("no pairs found in the largest clusters"));
    }
    let mut ratios: Vec<f64> = all.iter().map(|&(s, dw, _)| dw as f64 / s as f64).collect();
    ratios.sort_by(f64::total_cmp);
    let c_h = quantile(&ratios, spec.quantile);
    let threshold = 2.0 * c_h;
    let rows: Vec<SeparationRow> = (spec.min_sep..=spec.max_sep)
        .map(|sep| {
            let at: Vec<_> = all.iter().filter(|p| p.0 == sep).collect();
            let exceed = at.iter().filter(|p| p.1 as f64 / sep as f64 > threshold).count();
            SeparationRow { sep, pairs: at.len(), exceed, freq: if at.is_empty() { 0.0 } else { exceed as f64 / at.len() as f64 } }
        })
        .collect();
    let pos: Vec<&SeparationRow> = rows.iter().filter(|r| r.freq > 0.0).collect();
    let decay = if pos.len() >= 2 {
        LineFit::new(&pos.iter().map(|r| r.sep as f64).collect::<Vec<_>>(), &pos.iter().map(|r| r.freq.ln()).collect::<Vec<_>>()).ok()
    } else {
        None
    };
    Ok(ChemicalReport {
        pairs: all.len(),
        median: quantile(&ratios, 0.5),
        q90: quantile(&ratios, 0.9),
        q99: quantile(&ratios, 0.99),
        c_h,
        max_ratio: *ratios.last().expect("nonempty"),
        l1_exact: all.iter().all(|p| p.1 == p.2),
        threshold,
        rows,
        decay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn configs(side: i32, p: f64, n: usize) -> (Vec<BondConfig>, LatticeBox) {
        let b = LatticeBox::cube(&[0, 0], side).unwrap();
        ((0..n as u64).map(|s| BondConfig::sample(&b, p, s).unwrap()).collect(), b)
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert!((quantile(&v, 0.9) - 4.6).abs() < 1e-15);
    }

    #[test]
    fn full_lattice_distances_are_l1() {
        let (cfgs, b) = configs(30, 1.0, 2);
        let spec = PairSpec { pairs_per_config: 300, ..Default::default() };
        let r = fit_chemical_constant(&cfgs, &b, &spec, Exec::Parallel).unwrap();
        assert!(r.l1_exact);
        assert!(r.max_ratio <= 2.0 && r.c_h <= 2.0);
        assert_eq!(r.pairs, 600);
    }

    #[test]
    fn chemical_report_is_thread_independent() {
        let (cfgs, b) = configs(30, 0.6, 3);
        let spec = PairSpec { pairs_per_config: 100, max_sep: 10, ..Default::default() };
        let a = fit_chemical_constant(&cfgs, &b, &spec, Exec::Sequential).unwrap();
        let c = fit_chemical_constant(&cfgs, &b, &spec, Exec::Parallel).unwrap();
        assert_eq!(a, c);
        assert!(a.median >= 1.0 && a.c_h >= a.q99);
    }

    #[test]
    fn annealed_equals_quenched_on_the_lattice() {
        let (cfgs, b) = configs(30, 1.0, 3);
        let x = vec![15, 15];
        let targets = vec![vec![15, 15], vec![17, 16]];
        let times = [2.0, 6.0];
        let r = annealed_average(&cfgs, &b, &x, &targets, &times, Exec::Sequential).unwrap();
        let g = cluster_of(&cfgs[0], &b).unwrap();
        let xi = g.index_of(&x).unwrap();
        let k = heat_kernel_rows(&g, &[xi], &times, Boundary::None, 1e-12, Exec::Sequential).unwrap();
        for ti in 0..2 {
            for (yi, y) in targets.iter().enumerate() {
                assert_eq!(r.mean[ti][yi], k.q(ti, xi, g.index_of(y).unwrap()));
                assert_eq!(r.stderr[ti][yi], 0.0);
            }
        }
        assert_eq!(r.used, vec![3, 3]);
        assert!(r.fit.is_some());
    }

    #[test]
    fn annealed_needs_a_connected_pair() {
        let b = LatticeBox::cube(&[0, 0], 6).unwrap();
        let cfgs = vec![BondConfig::sample(&b, 0.0, 1).unwrap()];
        assert!(annealed_average(&cfgs, &b, &[3, 3], &[vec![4, 3]], &[1.0], Exec::Sequential).is_err());
    }
}
