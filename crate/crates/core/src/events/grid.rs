use serde::{Deserialize, Serialize};

use crate::percolation::{enlarge_cube, LatticeBox};

/// Sizes and positions of the sub-cubes checked by a quantified event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeGrid {
    pub sizes: Vec<i32>,
    /// Position stride used for each size.
    pub strides: Vec<i32>,
    pub cubes: usize,
    /// Every admissible cube is listed.
    pub exhaustive: bool,
}

pub(crate) fn geometric_sizes(from: i32, to: i32, ratio: f64) -> Vec<i32> {
    let mut out = Vec::new();
    let mut s = from.max(0);
    while s < to {
        out.push(s);
        s = (s + 1).max((s as f64 * ratio).ceil() as i32);
    }
    out.push(to);
    out
}

fn positions(lo: i32, hi: i32, stride: i32) -> Vec<i32> {
    if lo > hi {
        return Vec::new();
    }
    let mut out: Vec<i32> = (0..).map(|j| lo + j * stride).take_while(|&l| l <= hi).collect();
    if *out.last().expect("nonempty") != hi {
        out.push(hi);
    }
    out
}

fn product(ranges: &[Vec<i32>], side: i32, out: &mut Vec<LatticeBox>) {
    if ranges.iter().any(|r| r.is_empty()) {
        return;
    }
    let d = ranges.len();
    let mut idx = vec![0usize; d];
    loop {
        let lo: Vec<i32> = (0..d).map(|a| ranges[a][idx[a]]).collect();
        out.push(LatticeBox::cube(&lo, side).expect("valid cube"));
        let mut a = 0;
        while a < d {
            idx[a] += 1;
            if idx[a] < ranges[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
        if a == d {
            return;
        }
    }
}

/// Sub-cubes `Q' ⊆ Q` with `s(Q') >= n/8`, sizes and positions on a common
/// stride `max(1, floor(n/16))`.
pub(crate) fn crossing_grid(q: &LatticeBox) -> (Vec<LatticeBox>, CubeGrid) {
    let n = q.min_side();
    let stride = (n / 16).max(1);
    let first = ((n + 7) / 8).max(1).min(n);
    let mut sizes: Vec<i32> = (0..).map(|j| first + j * stride).take_while(|&s| s < n).collect();
    sizes.push(n);
    let mut cubes = Vec::new();
    for &s in &sizes {
        let ranges: Vec<Vec<i32>> = (0..q.dim()).map(|a| positions(q.lo()[a], q.hi()[a] - s, stride)).collect();
        product(&ranges, s, &mut cubes);
    }
    let grid = CubeGrid { strides: vec![stride; sizes.len()], cubes: cubes.len(), exhaustive: stride == 1, sizes };
    (cubes, grid)
}

/// Cubes `Q'` with `(Q')^+ ⊆ Q^+`, `Q' ∩ Q^⊕ ≠ ∅` and `n^alpha <= s(Q') <= n`.
/// Below `exhaustive_side` every size and position is listed; above it sizes
/// follow a geometric grid and positions a stride of `floor(s/4)`.
pub(crate) fn quantified_grid(q: &LatticeBox, alpha: f64, ratio: f64, exhaustive_side: i32) -> (Vec<LatticeBox>, CubeGrid) {
    let n = q.min_side();
    let e = enlarge_cube(q);
    let (plus, oplus) = (e.plus, e.oplus);
    let first = ((n as f64).powf(alpha).ceil() as i32).clamp(0, n);
    let exhaustive = n <= exhaustive_side;
    let sizes = if exhaustive { (first..=n).collect() } else { geometric_sizes(first, n, ratio) };
    let mut cubes = Vec::new();
    let mut strides = Vec::with_capacity(sizes.len());
    for &s in &sizes {
        let stride = if exhaustive { 1 } else { (s / 4).max(1) };
        strides.push(stride);
        let probe = enlarge_cube(&LatticeBox::cube(&vec![0; q.dim()], s).expect("valid cube")).plus;
        let ranges: Vec<Vec<i32>> = (0..q.dim())
            .map(|a| {
                let below = -probe.lo()[a];
                let above = probe.hi()[a] - s;
                let lo = (plus.lo()[a] + below).max(oplus.lo()[a] - s);
                let hi = (plus.hi()[a] - s - above).min(oplus.hi()[a]);
                positions(lo, hi, stride)
            })
            .collect();
        product(&ranges, s, &mut cubes);
    }
    let grid = CubeGrid { sizes, strides, cubes: cubes.len(), exhaustive };
    (cubes, grid)
}
