use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::poincare::poincare_on;
use crate::cluster::{induced_graph, OpenGraph, RegionView, WeightedSubgraph};
use crate::error::{Error, Result};
use crate::par::{map_slice, Exec};
use crate::percolation::LatticeBox;
use crate::rng::{derive_seed, keyed, stream};

/// Constants of the good-ball hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessConstants {
    /// Volume constant: `C_V r^d <= mu(B(x, r))`.
    pub c_v: f64,
    /// Poincare constant: `P <= C_P r^2`.
    pub c_p: f64,
    /// Enlargement factor of the weak inequality.
    pub c_w: f64,
    /// Smallest chaining radius.
    pub c_e: f64,
    /// Path-length factor for chaining.
    pub c_f: f64,
}

impl Default for GoodnessConstants {
    fn default() -> Self {
        GoodnessConstants { c_v: 0.5, c_p: 4.0, c_w: 2.0, c_e: 2.0, c_f: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    None,
    Good,
    VeryGood,
    ExceedinglyGood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// The ball is too light.
    Volume,
    /// A function with a large variance-to-energy ratio.
    Poincare,
    /// `N_B` exceeds the admissible scale.
    Scale,
    /// No admissible chain between two points.
    Path,
}

/// Why a classification failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: WitnessKind,
    pub center: Vec<i32>,
    pub radius: u32,
    pub value: f64,
    /// Extra points (the far endpoint for path failures).
    pub points: Vec<Vec<i32>>,
    /// Values of the offending function on `points` for Poincare failures.
    pub function: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessReport {
    pub verdict: Verdict,
    pub constants: GoodnessConstants,
    pub center: Vec<i32>,
    pub radius: u32,
    pub volume: f64,
    pub poincare: Option<f64>,
    /// Smallest scale above which every checked sub-ball is good.
    pub n_b: Option<u32>,
    /// The enlarged ball touched the edge of the region or lattice box.
    pub unreliable: bool,
    pub radius_grid: Vec<u32>,
    pub balls_checked: usize,
    pub witness: Option<Witness>,
}

/// Which sub-ball centres are examined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterPolicy {
    All,
    /// A seeded sample of this many centres per radius, always including the
    /// ball's own centre.
    Sample(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VeryGoodOptions {
    pub kappa: f64,
    /// Radii up to this value are all checked.
    pub exact_radius_max: u32,
    pub centers: CenterPolicy,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for VeryGoodOptions {
    fn default() -> Self {
        VeryGoodOptions { kappa: 1.25, exact_radius_max: 40, centers: CenterPolicy::All, seed: 0, exec: Exec::Parallel }
    }
}

pub(crate) struct BallCheck {
    pub good: bool,
    pub contained: bool,
    pub volume: f64,
    pub poincare: Option<f64>,
    pub unreliable: bool,
    pub witness: Option<Witness>,
}

fn ball_radius(c_w: f64, r: u32) -> u32 {
    ((c_w * r as f64).ceil() as u32).max(r)
}

/// Goodness of `B(x, r)` where `x` is region-local. `admit` sees the ball
/// `B(x, r)` as region-local indices and may veto the check.
pub(crate) fn check_ball(
    view: &RegionView<'_>,
    x: usize,
    r: u32,
    k: &GoodnessConstants,
    admit: impl Fn(&[usize]) -> bool,
) -> Result<BallCheck> {
    let rw = ball_radius(k.c_w, r);
    let mut found = view.bfs(x, rw, |_| false);
    let inner_locals: Vec<usize> = found.iter().filter(|p| p.1 < r).map(|p| p.0).collect();
    if !admit(&inner_locals) {
        return Ok(BallCheck { good: false, contained: false, volume: 0.0, poincare: None, unreliable: false, witness: None });
    }
    let d = view.region().dim();
    let mut c = vec![0; d];
    let mut tagged: Vec<(usize, u32, usize)> =
        found.drain(..).map(|(loc, dist)| (view.frame_of_local(loc, &mut c), dist, loc)).collect();
    tagged.sort_unstable();
    let set = view.frame_set(tagged.iter().map(|t| t.2));
    let g = induced_graph(view.graph(), &set)?;
    let inner: Vec<bool> = tagged.iter().map(|t| t.1 < r).collect();
    let volume: f64 = (0..g.len()).filter(|&i| inner[i]).map(|i| g.mu()[i]).sum();
    let unreliable = touches_edge(view, &g, &tagged, rw);
    let center = view.region().coords_of(x);
    let need = k.c_v * (r as f64).powi(d as i32);
    if volume < need {
        return Ok(BallCheck {
            good: false,
            contained: true,
            volume,
            poincare: None,
            unreliable,
            witness: Some(Witness { kind: WitnessKind::Volume, center, radius: r, value: volume, points: vec![], function: vec![] }),
        });
    }
    let res = poincare_on(&g, &inner, None)?;
    let good = res.constant <= k.c_p * (r as f64).powi(2);
    let witness = (!good).then(|| Witness {
        kind: WitnessKind::Poincare,
        center,
        radius: r,
        value: res.constant,
        points: g.points().to_vec(),
        function: res.witness.clone().unwrap_or_default(),
    });
    Ok(BallCheck { good, contained: true, volume, poincare: Some(res.constant), unreliable, witness })
}

fn touches_edge(view: &RegionView<'_>, g: &WeightedSubgraph, tagged: &[(usize, u32, usize)], rw: u32) -> bool {
    let frame = view.frame();
    let region = view.region();
    tagged.iter().enumerate().any(|(i, &(_, dist, loc))| {
        if dist + 1 >= rw {
            return false;
        }
        let c = region.coords_of(loc);
        let on_face = (0..c.len()).any(|a| c[a] == frame.lo()[a] || c[a] == frame.hi()[a]);
        let mut inside = 0.0;
        view.for_each_neighbor(loc, &c, |_| inside += 1.0);
        on_face || g.mu()[i] > inside
    })
}

fn base_report(center: Vec<i32>, radius: u32, k: GoodnessConstants) -> GoodnessReport {
    GoodnessReport {
        verdict: Verdict::None,
        constants: k,
        center,
        radius,
        volume: 0.0,
        poincare: None,
        n_b: None,
        unreliable: false,
        radius_grid: vec![],
        balls_checked: 0,
        witness: None,
    }
}

fn open_center(view: &RegionView<'_>, x: &[i32]) -> Result<usize> {
    let loc = view.local_of(x)?;
    if !view.is_open(loc) {
        return Err(Error::ClosedVertex(x.to_vec()));
    }
    Ok(loc)
}

/// Checks the volume lower bound and the weak Poincare inequality for
/// `B(x, r)` with enlargement `B(x, C_W r)`.
pub fn classify_good(
    graph: OpenGraph<'_>,
    region: &LatticeBox,
    x: &[i32],
    r: u32,
    k: &GoodnessConstants,
) -> Result<GoodnessReport> {
    let view = RegionView::new(graph, region)?;
    let loc = open_center(&view, x)?;
    let chk = check_ball(&view, loc, r, k, |_| true)?;
    let mut rep = base_report(x.to_vec(), r, *k);
    rep.verdict = if chk.good { Verdict::Good } else { Verdict::None };
    rep.volume = chk.volume;
    rep.poincare = chk.poincare;
    rep.unreliable = chk.unreliable;
    rep.witness = chk.witness;
    rep.radius_grid = vec![r];
    rep.balls_checked = 1;
    Ok(rep)
}

/// Radii checked below `big`, in increasing order.
pub fn radius_grid(big: u32, opts: &VeryGoodOptions) -> Vec<u32> {
    if big <= opts.exact_radius_max {
        return (1..=big).collect();
    }
    let mut out = vec![1u32];
    loop {
        let last = *out.last().expect("nonempty");
        let next = ((last as f64 * opts.kappa).ceil() as u32).max(last + 1);
        if next >= big {
            break;
        }
        out.push(next);
    }
    out.push(big);
    out
}

fn sample_centers(ball: &[usize], center: usize, r: u32, opts: &VeryGoodOptions) -> Vec<usize> {
    match opts.centers {
        CenterPolicy::All => ball.to_vec(),
        CenterPolicy::Sample(m) => {
            let key = derive_seed(opts.seed, &[r as u64]);
            let mut ranked: Vec<(u64, usize)> =
                ball.iter().filter(|&&y| y != center).map(|&y| (keyed(key, y as u64), y)).collect();
            ranked.sort_unstable();
            let mut out: Vec<usize> = std::iter::once(center).chain(ranked.into_iter().map(|p| p.1)).take(m.max(1)).collect();
            out.sort_unstable();
            out
        }
    }
}

pub(crate) struct VeryGood {
    pub n_b: u32,
    pub very_good: bool,
    pub report: GoodnessReport,
}

pub(crate) fn very_good_in_view(
    view: &RegionView<'_>,
    x: usize,
    big: u32,
    k: &GoodnessConstants,
    opts: &VeryGoodOptions,
) -> Result<VeryGood> {
    let d = view.region().dim();
    let dist = view.distances(&[x], big, None, None);
    let ball: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] != u32::MAX).collect();
    let inside = |locs: &[usize]| locs.iter().all(|&z| dist[z] != u32::MAX);
    let grid = radius_grid(big, opts);
    let mut rep = base_report(view.region().coords_of(x), big, *k);
    rep.radius_grid = grid.clone();
    let mut n_b = 1u32;
    for &r in grid.iter().rev() {
        let centers = sample_centers(&ball, x, r, opts);
        let checks = map_slice(opts.exec, &centers, |&y| check_ball(view, y, r, k, inside));
        let mut failed = None;
        for chk in checks {
            let chk = chk?;
            if !chk.contained {
                continue;
            }
            rep.balls_checked += 1;
            rep.unreliable |= chk.unreliable;
            if !chk.good && failed.is_none() {
                failed = chk.witness;
            }
        }
        if let Some(w) = failed {
            n_b = r + 1;
            rep.witness = Some(w);
            break;
        }
    }
    let own = check_ball(view, x, big, k, |_| true)?;
    rep.volume = own.volume;
    rep.poincare = own.poincare;
    let very_good = (n_b as f64) <= (big as f64).powf(1.0 / (d as f64 + 2.0));
    rep.n_b = Some(n_b);
    rep.verdict = if very_good {
        Verdict::VeryGood
    } else if own.good {
        Verdict::Good
    } else {
        Verdict::None
    };
    if very_good {
        rep.witness = None;
    } else if rep.witness.is_none() {
        rep.witness = Some(Witness { kind: WitnessKind::Scale, center: rep.center.clone(), radius: big, value: n_b as f64, points: vec![], function: vec![] });
    }
    Ok(VeryGood { n_b, very_good, report: rep })
}

/// Finds `N_B` for `B(x, R)` over the configured radius grid and centres and
/// reports whether `N_B <= R^{1/(d+2)}`.
pub fn classify_very_good(
    graph: OpenGraph<'_>,
    region: &LatticeBox,
    x: &[i32],
    big: u32,
    k: &GoodnessConstants,
    opts: &VeryGoodOptions,
) -> Result<GoodnessReport> {
    let view = RegionView::new(graph, region)?;
    let loc = open_center(&view, x)?;
    Ok(very_good_in_view(&view, loc, big, k, opts)?.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedinglyOptions {
    pub very_good: VeryGoodOptions,
    /// Options for the chaining balls `B(z, r log r)`.
    pub chain: VeryGoodOptions,
    pub pairs: usize,
    pub radii: usize,
    pub seed: u64,
}

impl Default for ExceedinglyOptions {
    fn default() -> Self {
        ExceedinglyOptions {
            very_good: VeryGoodOptions::default(),
            chain: VeryGoodOptions { centers: CenterPolicy::Sample(4), exec: Exec::Sequential, ..VeryGoodOptions::default() },
            pairs: 8,
            radii: 3,
            seed: 0,
        }
    }
}

/// Very good with `N_B^{10(d+2)} <= R_1`, and sampled pairs of far-apart
/// points can be joined by short chains of very good balls.
pub fn classify_exceedingly_good(
    graph: OpenGraph<'_>,
    region: &LatticeBox,
    x0: &[i32],
    big: u32,
    k: &GoodnessConstants,
    opts: &ExceedinglyOptions,
) -> Result<GoodnessReport> {
    let view = RegionView::new(graph, region)?;
    let loc = open_center(&view, x0)?;
    let d = region.dim() as i32;
    let vg = very_good_in_view(&view, loc, big, k, &opts.very_good)?;
    let mut rep = vg.report;
    let scale_ok = (vg.n_b as f64).powi(10 * (d + 2)) <= big as f64;
    if !vg.very_good || !scale_ok {
        if vg.very_good {
            rep.witness = Some(Witness { kind: WitnessKind::Scale, center: x0.to_vec(), radius: big, value: vg.n_b as f64, points: vec![], function: vec![] });
        }
        return Ok(rep);
    }
    let r_lo = k.c_e.ceil().max(1.0) as u32;
    let r_hi = (vg.n_b as f64).powi(d + 2).floor() as u32;
    let radii: Vec<u32> = if r_lo > r_hi {
        vec![]
    } else {
        let span = r_hi - r_lo;
        let m = opts.radii.max(1) as u32;
        let mut v: Vec<u32> = (0..m).map(|i| r_lo + span * i / (m - 1).max(1)).collect();
        v.dedup();
        v
    };
    let slack = (big as f64).powf(0.25);
    let dist0 = view.distances(&[loc], big, None, None);
    let ball: Vec<usize> = (0..dist0.len()).filter(|&i| dist0[i] != u32::MAX).collect();
    let mut rng = stream(derive_seed(opts.seed, &[big as u64]));
    let mut memo: HashMap<(usize, u32), bool> = HashMap::new();
    for &r in &radii {
        for _ in 0..opts.pairs {
            let x1 = ball[rng.random_range(0..ball.len())];
            let from1 = view.distances(&[x1], u32::MAX, None, None);
            let far: Vec<usize> = ball.iter().copied().filter(|&z| from1[z] != u32::MAX && from1[z] as f64 >= slack).collect();
            if far.is_empty() {
                continue;
            }
            let x2 = far[rng.random_range(0..far.len())];
            let d12 = from1[x2];
            let from2 = view.distances(&[x2], u32::MAX, None, None);
            let limit = (k.c_f * d12 as f64).floor() as u32;
            if !chain_exists(&view, &from1, &from2, slack, limit, r, k, &opts.chain, &mut memo)? {
                rep.witness = Some(Witness {
                    kind: WitnessKind::Path,
                    center: view.region().coords_of(x1),
                    radius: r,
                    value: d12 as f64,
                    points: vec![view.region().coords_of(x2)],
                    function: vec![],
                });
                return Ok(rep);
            }
        }
    }
    rep.verdict = Verdict::ExceedinglyGood;
    Ok(rep)
}

#[allow(clippy::too_many_arguments)]
fn chain_exists(
    view: &RegionView<'_>,
    from1: &[u32],
    from2: &[u32],
    slack: f64,
    limit: u32,
    r: u32,
    k: &GoodnessConstants,
    chain: &VeryGoodOptions,
    memo: &mut HashMap<(usize, u32), bool>,
) -> Result<bool> {
    let rad = ((r as f64 * (r as f64).ln()).ceil() as u32).max(1);
    let d = view.region().dim() as i32;
    let admissible = |z: usize, memo: &mut HashMap<(usize, u32), bool>| -> Result<bool> {
        if let Some(&v) = memo.get(&(z, r)) {
            return Ok(v);
        }
        let vg = very_good_in_view(view, z, rad, k, chain)?;
        let ok = vg.very_good && (vg.n_b as f64).powi(d + 2) <= r as f64;
        memo.insert((z, r), ok);
        Ok(ok)
    };
    let n = view.len();
    let mut depth = vec![u32::MAX; n];
    let mut queue = Vec::new();
    for z in 0..n {
        if from1[z] != u32::MAX && from1[z] as f64 <= slack && admissible(z, memo)? {
            depth[z] = 0;
            queue.push(z);
        }
    }
    let mut head = 0;
    let mut c = vec![0; view.region().dim()];
    while head < queue.len() {
        let z = queue[head];
        head += 1;
        if from2[z] != u32::MAX && from2[z] as f64 <= slack {
            return Ok(true);
        }
        if depth[z] >= limit {
            continue;
        }
        view.region().coords_into(z, &mut c);
        let mut next = Vec::new();
        view.for_each_neighbor(z, &c, |w| next.push(w));
        for w in next {
            if depth[w] == u32::MAX && admissible(w, memo)? {
                depth[w] = depth[z] + 1;
                queue.push(w);
            } else if depth[w] == u32::MAX {
                depth[w] = u32::MAX - 1;
            }
        }
    }
    Ok(false)
}
