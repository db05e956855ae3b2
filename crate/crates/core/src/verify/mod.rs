//! Fitted envelopes for the heat kernel: on-diagonal decay, two-sided
//! Gaussian bounds, the short-time regimes, the onset time `S_x`, annealed
//! averages and the chemical-distance constant.
//!
//! Every fit is a least-squares line on a log scale. Envelope constants are
//! then obtained by shifting the fitted line to the extreme residual on each
//! side, so that the reported inequality holds on every sampled point.

mod ensemble;
mod onset;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cluster::WeightedSubgraph;
use crate::error::{invalid, Error, Result};
use crate::walk::HeatKernel;

pub use ensemble::{annealed_average, fit_chemical_constant, AnnealedReport, ChemicalReport, PairSpec, SeparationRow};
pub use onset::{admissible_horizon, estimate_s_x, reference_from_kernel, s_x_tail, Reference, SxEstimate, SxOptions, SxTail};

/// Relative slack used when re-checking fitted envelopes.
const SLACK: f64 = 1e-9;

/// Ordinary least squares `y = intercept + slope x` with its `R^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

impl LineFit {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(invalid("a line fit needs at least two points"));
        }
        let nf = n as f64;
        let mx = xs.iter().sum::<f64>() / nf;
        let my = ys.iter().sum::<f64>() / nf;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx == 0.0 {
            return Err(invalid("a line fit needs two distinct abscissae"));
        }
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
        Ok(LineFit { slope, intercept, r2, points: n })
    }

    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

/// A sampled kernel value that breaks an envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub x: usize,
    pub y: usize,
    pub q: f64,
    pub bound: f64,
    pub side: Side,
}

pub fn write_violations_csv(v: &[Violation], w: &mut impl Write) -> Result<()> {
    writeln!(w, "t,x,y,q,bound")?;
    for e in v {
        writeln!(w, "{:.16e},{},{},{:.16e},{:.16e}", e.t, e.x, e.y, e.q, e.bound)?;
    }
    Ok(())
}

/// Fitted constants of one bound together with the tested region and any
/// violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub bound: String,
    pub constants: BTreeMap<String, f64>,
    pub fit: LineFit,
    pub t_range: (f64, f64),
    pub dist_range: (u32, u32),
    pub violations: Vec<Violation>,
}

impl EnvelopeFit {
    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Distance used in off-diagonal bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Graph distance on the working graph.
    Chemical,
    /// `|x - y|_1` between lattice points.
    #[default]
    L1,
}

pub(crate) fn distances(g: &WeightedSubgraph, x: usize, metric: Metric) -> Vec<u32> {
    match metric {
        Metric::Chemical => g.hop_distances(x),
        Metric::L1 => {
            let px = g.point(x);
            (0..g.len())
                .map(|y| g.point(y).iter().zip(px).map(|(a, b)| (a - b).unsigned_abs()).sum())
                .collect()
        }
    }
}

/// One sampled value `q_t(x, y)` with the distance `D` between `x` and `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Sample {
    pub t: f64,
    pub y: usize,
    pub dist: u32,
    pub q: f64,
}

/// `c_lo t^{-d/2} exp(-c_2 D^2/t)` and `c_hi t^{-d/2} exp(-c_4 D^2/t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Gaussian {
    pub fn lower(&self, d: usize, t: f64, dist: u32) -> f64 {
        self.c1 * t.powf(-(d as f64) / 2.0) * (-self.c2 * (dist as f64).powi(2) / t).exp()
    }
    pub fn upper(&self, d: usize, t: f64, dist: u32) -> f64 {
        self.c3 * t.powf(-(d as f64) / 2.0) * (-self.c4 * (dist as f64).powi(2) / t).exp()
    }
    pub(crate) fn violations(&self, d: usize, x: usize, samples: &[Sample], slack: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for s in samples {
            let (lo, hi) = (self.lower(d, s.t, s.dist), self.upper(d, s.t, s.dist));
            if s.q > hi * (1.0 + slack) {
                out.push(Violation { t: s.t, x, y: s.y, q: s.q, bound: hi, side: Side::Upper });
            }
            if s.q < lo * (1.0 - slack) {
                out.push(Violation { t: s.t, x, y: s.y, q: s.q, bound: lo, side: Side::Lower });
            }
        }
        out
    }
}

fn t_range(samples: &[Sample]) -> (f64, f64) {
    samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.t), b.max(s.t)))
}

fn d_range(samples: &[Sample]) -> (u32, u32) {
    samples.iter().fold((u32::MAX, 0), |(a, b), s| (a.min(s.dist), b.max(s.dist)))
}

/// Largest hop distance from `x` to a vertex it reaches.
fn eccentricity(g: &WeightedSubgraph, x: usize) -> u32 {
    g.hop_distances(x).into_iter().filter(|&d| d != u32::MAX).max().unwrap_or(0)
}

/// Slope of `log q_t(x, x)` against `log t` on `[t_lo, t_hi]`, the smallest
/// `c_2` with `q_t(x, x) <= c_2 t^{-d/2}` and the largest `c_3` with
/// `q_t(x, x) >= c_3 (t log t)^{-d/2}` (for `t > 1`) on the window.
///
/// The window must span half a decade, start at `t >= 1` and end by `R^2`
/// with `R` the eccentricity of `x`.
pub fn fit_ondiagonal(g: &WeightedSubgraph, k: &HeatKernel, x: usize, window: (f64, f64)) -> Result<EnvelopeFit> {
    let (lo, hi) = window;
    if !(lo >= 1.0 && hi >= lo * 10f64.sqrt()) {
        return Err(invalid("window must start at t >= 1 and span half a decade"));
    }
    let r = eccentricity(g, x) as f64;
    if hi > r * r {
        return Err(invalid(format!("window ends at {hi} beyond the squared graph radius {}", r * r)));
    }
    let d = g.dim() as f64;
    let mut lt = Vec::new();
    let mut lq = Vec::new();
    let mut samples = Vec::new();
    for (ti, &t) in k.times.iter().enumerate() {
        if t >= lo && t <= hi {
            let q = k.q(ti, x, x);
            if q > 0.0 {
                lt.push(t.ln());
                lq.push(q.ln());
                samples.push(Sample { t, y: x, dist: 0, q });
            }
        }
    }
    if samples.len() < 3 {
        return Err(Error::EmptySet("fewer than three kernel times in the window"));
    }
    let fit = LineFit::new(&lt, &lq)?;
    let c2 = samples.iter().map(|s| s.q * s.t.powf(d / 2.0)).fold(0.0, f64::max);
    let c3 = samples
        .iter()
        .filter(|s| s.t > 1.0)
        .map(|s| s.q * (s.t * s.t.ln()).powf(d / 2.0))
        .fold(f64::INFINITY, f64::min);
    let mut violations = Vec::new();
    for s in &samples {
        let up = c2 * s.t.powf(-d / 2.0);
        if s.q > up * (1.0 + SLACK) {
            violations.push(Violation { t: s.t, x, y: x, q: s.q, bound: up, side: Side::Upper });
        }
        if s.t > 1.0 {
            let down = c3 * (s.t * s.t.ln()).powf(-d / 2.0);
            if s.q < down * (1.0 - SLACK) {
                violations.push(Violation { t: s.t, x, y: x, q: s.q, bound: down, side: Side::Lower });
            }
        }
    }
    let mut constants = BTreeMap::new();
    constants.insert("slope".into(), fit.slope);
    constants.insert("c2".into(), c2);
    if c3.is_finite() {
        constants.insert("c3".into(), c3);
    }
    Ok(EnvelopeFit { bound: "on_diagonal".into(), constants, fit, t_range: t_range(&samples), dist_range: (0, 0), violations })
}

/// Region of a Gaussian envelope fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianOptions {
    pub metric: Metric,
    /// Smallest time used (the onset `S_x` when known).
    pub t_min: f64,
    /// Points satisfy `D <= dist_frac * t`.
    pub dist_frac: f64,
    /// Restricts `y` to these vertices.
    pub targets: Option<Vec<usize>>,
}

impl Default for GaussianOptions {
    fn default() -> Self {
        GaussianOptions { metric: Metric::L1, t_min: 0.0, dist_frac: 1.0, targets: None }
    }
}

pub(crate) fn kernel_samples(g: &WeightedSubgraph, k: &HeatKernel, x: usize, opts: &GaussianOptions) -> Vec<Sample> {
    let dist = distances(g, x, opts.metric);
    let reach = g.hop_distances(x);
    let targets: Vec<usize> = match &opts.targets {
        Some(t) => t.clone(),
        None => (0..g.len()).collect(),
    };
    let mut out = Vec::new();
    for (ti, &t) in k.times.iter().enumerate() {
        if t <= 0.0 || t < opts.t_min {
            continue;
        }
        let row = k.row(ti, x);
        for &y in &targets {
            if reach[y] == u32::MAX || (dist[y] as f64) > opts.dist_frac * t {
                continue;
            }
            let q = row.get(y);
            if q > 0.0 {
                out.push(Sample { t, y, dist: dist[y], q });
            }
        }
    }
    out
}

pub(crate) fn fit_samples(bound: &str, d: usize, x: usize, samples: &[Sample]) -> Result<(EnvelopeFit, Gaussian)> {
    if samples.is_empty() {
        return Err(Error::EmptySet("admissible region"));
    }
    let half = d as f64 / 2.0;
    let z: Vec<f64> = samples.iter().map(|s| (s.dist as f64).powi(2) / s.t).collect();
    let w: Vec<f64> = samples.iter().map(|s| s.q.ln() + half * s.t.ln()).collect();
    let fit = if z.iter().any(|&v| v != z[0]) {
        LineFit::new(&z, &w)?
    } else {
        let m = w.iter().sum::<f64>() / w.len() as f64;
        LineFit { slope: 0.0, intercept: m, r2: 1.0, points: w.len() }
    };
    let c = (-fit.slope).max(0.0);
    let shifted: Vec<f64> = w.iter().zip(&z).map(|(w, z)| w + c * z).collect();
    let hi = shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = shifted.iter().cloned().fold(f64::INFINITY, f64::min);
    let env = Gaussian { c1: lo.exp(), c2: c, c3: hi.exp(), c4: c };
    let violations = env.violations(d, x, samples, SLACK);
    let constants = BTreeMap::from([
        ("c1".to_string(), env.c1),
        ("c2".to_string(), env.c2),
        ("c3".to_string(), env.c3),
        ("c4".to_string(), env.c4),
    ]);
    Ok((
        EnvelopeFit { bound: bound.into(), constants, fit, t_range: t_range(samples), dist_range: d_range(samples), violations },
        env,
    ))
}

/// Regresses `log(t^{d/2} q_t(x, y))` on `D^2/t` over the region and returns
/// the tightest two-sided Gaussian envelope with the fitted exponent.
pub fn fit_gaussian_envelope(g: &WeightedSubgraph, k: &HeatKernel, x: usize, opts: &GaussianOptions) -> Result<EnvelopeFit> {
    if !(opts.dist_frac > 0.0) {
        return Err(invalid("dist_frac must be positive"));
    }
    let samples = kernel_samples(g, k, x, opts);
    let name = match opts.metric {
        Metric::Chemical => "gaussian_chemical",
        Metric::L1 => "gaussian_l1",
    };
    Ok(fit_samples(name, g.dim(), x, &samples)?.0)
}

/// Vertices `x ± D e_i` for every axis `i` and every `D` in `dists`, where
/// `|x - y|_1 = |x - y|_2`.
pub fn axis_targets(g: &WeightedSubgraph, x: usize, dists: &[u32]) -> Vec<usize> {
    let px = g.point(x).to_vec();
    let mut out = Vec::new();
    for &dd in dists {
        for a in 0..px.len() {
            for sign in [1i32, -1] {
                let mut p = px.clone();
                p[a] += sign * dd as i32;
                if let Some(y) = g.index_of(&p) {
                    out.push(y);
                }
                if dd == 0 {
                    break;
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// The constants of a fitted Gaussian envelope.
pub fn gaussian_of(fit: &EnvelopeFit) -> Result<Gaussian> {
    let get = |n: &str| fit.constant(n).ok_or_else(|| invalid(format!("fit has no constant {n}")));
    Ok(Gaussian { c1: get("c1")?, c2: get("c2")?, c3: get("c3")?, c4: get("c4")? })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShortTimeOptions {
    pub metric: Metric,
    /// The power bound is tested where `t <= c5 D^2 / log D`.
    pub c5: f64,
}

impl Default for ShortTimeOptions {
    fn default() -> Self {
        ShortTimeOptions { metric: Metric::Chemical, c5: 1.0 }
    }
}

/// Short-time regimes of the kernel from `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTimeReport {
    /// `log q` against `D (1 + log(D/t))` where `D >= t`.
    pub poisson: Option<LineFit>,
    /// `log(t^{d/2} q)` against `D^2/t` where `1 <= D <= t`.
    pub gaussian: Option<LineFit>,
    /// The Poisson-regime fit has negative slope and `R^2 >= 0.9`.
    pub poisson_shape: bool,
    pub c5: f64,
    /// Smallest `c6` with `q <= c6 t^{-d}` where `t <= c5 D^2/log D`.
    pub c6: Option<f64>,
    pub power_points: usize,
    /// `exp` of the largest gap between the two fits near `D = t`.
    pub overlap_factor: Option<f64>,
    pub points: usize,
}

/// Fits the Gaussian and Poisson-tail regimes of `q_t(x, y)` for `D >= 1`
/// and the power bound in the short-time region.
pub fn check_short_time(g: &WeightedSubgraph, k: &HeatKernel, x: usize, opts: &ShortTimeOptions) -> Result<ShortTimeReport> {
    let so = GaussianOptions { metric: opts.metric, t_min: 0.0, dist_frac: f64::INFINITY, targets: None };
    let samples: Vec<Sample> = kernel_samples(g, k, x, &so).into_iter().filter(|s| s.dist >= 1).collect();
    let d = g.dim() as f64;
    let u = |s: &Sample| {
        let dd = s.dist as f64;
        dd * (1.0 + (dd / s.t).ln())
    };
    let pois: Vec<&Sample> = samples.iter().filter(|s| s.dist as f64 >= s.t).collect();
    let gaus: Vec<&Sample> = samples.iter().filter(|s| s.dist as f64 <= s.t).collect();
    let poisson = LineFit::new(&pois.iter().map(|s| u(s)).collect::<Vec<_>>(), &pois.iter().map(|s| s.q.ln()).collect::<Vec<_>>()).ok();
    let gaussian = LineFit::new(
        &gaus.iter().map(|s| (s.dist as f64).powi(2) / s.t).collect::<Vec<_>>(),
        &gaus.iter().map(|s| s.q.ln() + d / 2.0 * s.t.ln()).collect::<Vec<_>>(),
    )
    .ok();
    let power: Vec<&Sample> = samples
        .iter()
        .filter(|s| s.dist >= 2 && s.t <= opts.c5 * (s.dist as f64).powi(2) / (s.dist as f64).ln())
        .collect();
    let c6 = if power.is_empty() { None } else { Some(power.iter().map(|s| s.q * s.t.powf(d)).fold(0.0, f64::max)) };
    let overlap_factor = match (&poisson, &gaussian) {
        (Some(p), Some(gf)) => {
            let gap = samples
                .iter()
                .filter(|s| {
                    let r = s.dist as f64 / s.t;
                    (0.8..=1.25).contains(&r)
                })
                .map(|s| {
                    let lp = p.at(u(s));
                    let lg = gf.at((s.dist as f64).powi(2) / s.t) - d / 2.0 * s.t.ln();
                    (lp - lg).abs()
                })
                .fold(f64::NAN, f64::max);
            if gap.is_nan() {
                None
            } else {
                Some(gap.exp())
            }
        }
        _ => None,
    };
    Ok(ShortTimeReport {
        poisson_shape: poisson.is_some_and(|p| p.slope < 0.0 && p.r2 >= 0.9),
        poisson,
        gaussian,
        c5: opts.c5,
        c6,
        power_points: power.len(),
        overlap_factor,
        points: samples.len(),
    })
}
