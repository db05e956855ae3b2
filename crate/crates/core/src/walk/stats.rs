use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::kernel::{heat_kernel_rows, poisson_tail, Boundary};
use super::{check_vertex, Stepper};
use crate::cluster::WeightedSubgraph;
use crate::error::{invalid, Result};
use crate::events::wilson;
use crate::par::{map_indexed, Exec};
use crate::rng::{derive_seed, stream, tag};

const KERNEL_TOL: f64 = 1e-12;
/// Poisson tail dropped by exact displacement curves, small enough that the
/// dropped moments stay below `1e-11` for `t <= 100`.
const MSD_TOL: f64 = 1e-16;

/// `e^{-s} I_n(s)` by its power series, summed to relative `1e-12`.
fn scaled_bessel(n: u32, s: f64) -> f64 {
    if s == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    let lh = (s / 2.0).ln();
    let mut sum = 0.0;
    let mut k = 0u64;
    loop {
        let kf = k as f64;
        let term = ((2.0 * kf + nf) * lh - ln_gamma(kf + 1.0) - ln_gamma(kf + nf + 1.0) - s).exp();
        sum += term;
        if kf > s / 2.0 && term <= 1e-13 * sum {
            return sum;
        }
        k += 1;
    }
}

/// `P^0(Y_t = y)` for the walk on the full lattice `Z^d`, where each
/// coordinate is an independent rate-`1/d` walk.
pub fn lattice_oracle(d: usize, t: f64, y: &[i32]) -> Result<f64> {
    if d == 0 || y.len() != d {
        return Err(invalid("point must have d coordinates"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t must be finite and nonnegative"));
    }
    let s = t / d as f64;
    Ok(y.iter().map(|&c| scaled_bessel(c.unsigned_abs(), s)).product())
}

/// Vertices where the working graph may differ from the infinite cluster:
/// those with a missing ambient edge or lying on a face of the frame.
fn truncated(g: &WeightedSubgraph, v: usize) -> bool {
    if g.mu0()[v] < g.mu()[v] {
        return true;
    }
    let f = g.frame();
    g.point(v).iter().enumerate().any(|(a, &c)| c == f.lo()[a] || c == f.hi()[a])
}

/// Upper bound on the probability that the walk from `x` meets a truncated
/// vertex before time `t`.
pub fn exit_budget(g: &WeightedSubgraph, x: usize, t: f64) -> Result<f64> {
    check_vertex(g, x)?;
    let dist = g.hop_distances(x);
    let near = (0..g.len()).filter(|&v| dist[v] != u32::MAX && truncated(g, v)).map(|v| dist[v]).min();
    Ok(match near {
        Some(k) => poisson_tail(t, k as usize),
        None => 0.0,
    })
}

/// Empirical law of the exit time `tau(x, r)` from `B(x, r) = {d(x, y) < r}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitTimes {
    pub x: usize,
    pub r: u32,
    pub trials: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    /// Number of trials with `tau <= t` at each grid time.
    pub exits: Vec<u64>,
    pub cdf: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ExitTimes {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t,value,lo,hi")?;
        for i in 0..self.times.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", self.times[i], self.cdf[i], self.lo[i], self.hi[i])?;
        }
        Ok(())
    }
}

/// Monte Carlo CDF of `tau(x, r)` on a time grid with Wilson intervals.
/// The ball must avoid truncated vertices.
pub fn exit_time_stats(
    g: &WeightedSubgraph,
    x: usize,
    r: u32,
    trials: usize,
    times: &[f64],
    seed: u64,
    exec: Exec,
) -> Result<ExitTimes> {
    check_vertex(g, x)?;
    if r == 0 || trials == 0 {
        return Err(invalid("radius and trials must be positive"));
    }
    if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(invalid("times must be finite and nonnegative"));
    }
    let dist = g.hop_distances(x);
    let inside: Vec<bool> = dist.iter().map(|&k| k < r).collect();
    if (0..g.len()).any(|v| inside[v] && truncated(g, v)) {
        return Err(invalid("ball reaches the edge of the graph region"));
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let st = Stepper::new(g);
    let key = tag("exit-time");
    let taus = map_indexed(exec, trials, |i| {
        let mut rng = stream(derive_seed(seed, &[key, i as u64]));
        let mut cur = x;
        let mut t = 0.0;
        loop {
            t += st.hold(&mut rng);
            if t > t_max {
                return f64::INFINITY;
            }
            cur = st.jump(cur, &mut rng);
            if !inside[cur] {
                return t;
            }
        }
    });
    let exits: Vec<u64> = times.iter().map(|&t| taus.iter().filter(|&&s| s <= t).count() as u64).collect();
    let n = trials as u64;
    let (lo, hi) = exits.iter().map(|&k| wilson(k, n)).unzip();
    Ok(ExitTimes {
        x,
        r,
        trials,
        seed,
        times: times.to_vec(),
        cdf: exits.iter().map(|&k| k as f64 / trials as f64).collect(),
        exits,
        lo,
        hi,
    })
}

/// `M(t) = sum_y d(x_1, y) q_t(x_1, y) mu(y)` and
/// `Q(t) = -sum_y q_t(x_1, y) log q_t(x_1, y) mu(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashCurves {
    pub x1: usize,
    pub times: Vec<f64>,
    pub m: Vec<f64>,
    pub q: Vec<f64>,
    /// Discarded Poisson mass of the kernel.
    pub truncation: f64,
}

impl NashCurves {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t,m,q")?;
        for i in 0..self.times.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.times[i], self.m[i], self.q[i])?;
        }
        Ok(())
    }
}

/// Nash functionals from the exact kernel row of `x1`, with `d` the graph
/// distance of the working graph.
pub fn nash_functionals(g: &WeightedSubgraph, x1: usize, times: &[f64]) -> Result<NashCurves> {
    let k = heat_kernel_rows(g, &[x1], times, Boundary::None, KERNEL_TOL, Exec::Sequential)?;
    let dist = g.hop_distances(x1);
    let mu = g.mu0();
    let mut m = Vec::with_capacity(times.len());
    let mut q = Vec::with_capacity(times.len());
    for ti in 0..times.len() {
        let row = k.row(ti, x1).to_dense(g.len());
        let mut mt = 0.0;
        let mut qt = 0.0;
        for (y, &v) in row.iter().enumerate() {
            if v > 0.0 {
                mt += dist[y] as f64 * v * mu[y];
                qt -= v * v.ln() * mu[y];
            }
        }
        m.push(mt);
        q.push(qt);
    }
    let truncation = match k.mode {
        super::KernelMode::Exact { truncation, .. } => truncation,
        super::KernelMode::MonteCarlo { .. } => 0.0,
    };
    Ok(NashCurves { x1, times: times.to_vec(), m, q, truncation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsdMode {
    Exact,
    MonteCarlo { trials: usize, seed: u64 },
}

/// `E^x |Y_t - x|^2` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdCurve {
    pub x: usize,
    pub mode: MsdMode,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Zero in exact mode.
    pub stderr: Vec<f64>,
}

impl MsdCurve {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t,value,stderr")?;
        for i in 0..self.times.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.times[i], self.values[i], self.stderr[i])?;
        }
        Ok(())
    }
}

fn sq_dist(a: &[i32], b: &[i32]) -> f64 {
    a.iter().zip(b).map(|(&u, &v)| ((u - v) as f64).powi(2)).sum()
}

/// Mean-square Euclidean displacement from `x`.
pub fn msd(g: &WeightedSubgraph, x: usize, times: &[f64], mode: MsdMode, exec: Exec) -> Result<MsdCurve> {
    check_vertex(g, x)?;
    let px = g.point(x).to_vec();
    let (values, stderr) = match mode {
        MsdMode::Exact => {
            let k = heat_kernel_rows(g, &[x], times, Boundary::None, MSD_TOL, exec)?;
            let mu = g.mu0();
            let values = (0..times.len())
                .map(|ti| {
                    let row = k.row(ti, x).to_dense(g.len());
                    row.iter().enumerate().map(|(y, &q)| q * mu[y] * sq_dist(g.point(y), &px)).sum()
                })
                .collect();
            (values, vec![0.0; times.len()])
        }
        MsdMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(invalid("trials must be positive"));
            }
            if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(invalid("times must be finite and nonnegative"));
            }
            let mut order: Vec<usize> = (0..times.len()).collect();
            order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
            let st = Stepper::new(g);
            let key = tag("msd");
            let samples = map_indexed(exec, trials, |i| {
                let mut rng = stream(derive_seed(seed, &[key, i as u64]));
                let mut out = vec![0.0; times.len()];
                let mut cur = x;
                let mut t = st.hold(&mut rng);
                for &ti in &order {
                    while t <= times[ti] {
                        cur = st.jump(cur, &mut rng);
                        t += st.hold(&mut rng);
                    }
                    out[ti] = sq_dist(g.point(cur), &px);
                }
                out
            });
            let n = trials as f64;
            let mut values = Vec::with_capacity(times.len());
            let mut errs = Vec::with_capacity(times.len());
            for ti in 0..times.len() {
                let mean = samples.iter().map(|s| s[ti]).sum::<f64>() / n;
                let var = if trials > 1 {
                    samples.iter().map(|s| (s[ti] - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                values.push(mean);
                errs.push((var / n).sqrt());
            }
            (values, errs)
        }
    };
    Ok(MsdCurve { x, mode, times: times.to_vec(), values, stderr })
}
