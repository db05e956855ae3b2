//! The continuous-time simple random walk on a weighted subgraph: sample
//! paths, exact and Monte Carlo heat kernels, exit times, Nash functionals
//! and mean-square displacement.
//!
//! The walk waits an exponential(1) time at each vertex and then crosses an
//! incident edge chosen with probability proportional to its conductance.
//! Its reversible measure is the intrinsic degree `mu_0` of the working
//! graph, and every kernel is a density with respect to it:
//! `q_t(x, y) = P^x(Y_t = y) / mu_0(y)`.

mod kernel;
mod stats;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::cluster::{induced_graph, largest_open_cluster, WeightedSubgraph};
use crate::error::{invalid, Result};
use crate::percolation::{BondConfig, LatticeBox};
use crate::rng::stream;

pub use kernel::{
    exact_heat_kernel, exact_heat_kernel_with, heat_kernel_rows, mc_heat_kernel, poisson_tail, Boundary, ExactOptions,
    HeatKernel, KernelMethod, KernelMode, KernelRow,
};
pub use stats::{
    exit_budget, exit_time_stats, lattice_oracle, msd, nash_functionals, ExitTimes, MsdCurve, MsdMode, NashCurves,
};

/// One sample path on `[0, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: usize,
    /// Increasing jump times in `(0, t_end]`.
    pub times: Vec<f64>,
    /// `vertices[0] = start`; `vertices[i + 1]` is entered at `times[i]`.
    pub vertices: Vec<usize>,
    pub t_end: f64,
    pub seed: u64,
}

impl Trajectory {
    /// Position at time `t`.
    pub fn position_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        self.vertices[k]
    }
    pub fn jumps(&self) -> usize {
        self.times.len()
    }
}

/// Draws holding times and conductance-weighted jumps.
pub(crate) struct Stepper<'g> {
    g: &'g WeightedSubgraph,
}

impl<'g> Stepper<'g> {
    pub fn new(g: &'g WeightedSubgraph) -> Self {
        Stepper { g }
    }

    #[inline]
    pub fn jump(&self, x: usize, rng: &mut impl Rng) -> usize {
        let nb = self.g.neighbors(x);
        let total = self.g.mu0()[x];
        let mut u = rng.random::<f64>() * total;
        for &(y, e) in nb {
            u -= self.g.conductance(e as usize);
            if u < 0.0 {
                return y as usize;
            }
        }
        nb.last().expect("vertex has an edge").0 as usize
    }

    #[inline]
    pub fn hold(&self, rng: &mut impl Rng) -> f64 {
        rng.sample::<f64, _>(Exp1)
    }
}

pub(crate) fn check_vertex(g: &WeightedSubgraph, x: usize) -> Result<()> {
    if x >= g.len() {
        return Err(invalid(format!("vertex {x} out of range")));
    }
    if g.mu0()[x] <= 0.0 {
        return Err(invalid(format!("vertex {:?} is isolated", g.point(x))));
    }
    Ok(())
}

/// Samples the walk from `x` up to time `t_end`.
pub fn simulate_walk(g: &WeightedSubgraph, x: usize, t_end: f64, seed: u64) -> Result<Trajectory> {
    check_vertex(g, x)?;
    if !(t_end >= 0.0) {
        return Err(invalid("t_end must be nonnegative"));
    }
    let mut rng = stream(seed);
    let st = Stepper::new(g);
    let mut times = Vec::new();
    let mut vertices = vec![x];
    let mut t = 0.0;
    let mut cur = x;
    loop {
        t += st.hold(&mut rng);
        if t > t_end {
            break;
        }
        cur = st.jump(cur, &mut rng);
        times.push(t);
        vertices.push(cur);
    }
    Ok(Trajectory { start: x, times, vertices, t_end, seed })
}

/// The graph of the largest open cluster of `q`, with unit conductances.
pub fn cluster_graph(cfg: &BondConfig, q: &LatticeBox) -> Result<WeightedSubgraph> {
    let c = largest_open_cluster(cfg.into(), q)?;
    induced_graph(cfg.into(), &c)
}
