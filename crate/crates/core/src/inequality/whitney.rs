use std::io::Write;

use serde::{Deserialize, Serialize};

use super::poincare::PoincareWeights;
use crate::cluster::{induced_graph, OpenGraph, RegionView, WeightedSubgraph};
use crate::error::{invalid, Error, Result};
use crate::percolation::LatticeBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitneyParams {
    /// Ratio between distance to the complement and ball radius.
    pub lambda: f64,
    /// Sandwich factor `K`.
    pub k: f64,
    /// Smallest regular scale `R_0`, usually `N_B`.
    pub r0: u32,
    pub c_w: f64,
    /// Skips `lambda >= 10^3 v 21 C_W` and `10 <= K <= lambda/10`, keeping
    /// only `lambda > 2K > 0`.
    pub relaxed: bool,
}

impl WhitneyParams {
    pub fn validate(&self) -> Result<()> {
        if self.relaxed {
            if !(self.k > 0.0 && self.lambda > 2.0 * self.k) {
                return Err(invalid("relaxed Whitney parameters need lambda > 2K > 0"));
            }
            return Ok(());
        }
        if self.lambda < 1000f64.max(21.0 * self.c_w) {
            return Err(invalid("lambda must be at least max(1000, 21 C_W)"));
        }
        if self.k < 10.0 || self.k > self.lambda / 10.0 {
            return Err(invalid("K must lie in [10, lambda/10]"));
        }
        Ok(())
    }
    pub fn lambda1(&self) -> f64 {
        self.lambda - 2.0 * self.k
    }
    pub fn lambda2(&self) -> f64 {
        self.lambda + 2.0 * self.k
    }
    /// Threshold factor for boundary balls, `2 lambda_2`.
    pub fn eta(&self) -> f64 {
        2.0 * self.lambda2()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitneyBall {
    pub center: Vec<i32>,
    pub s: f64,
    pub rho: u32,
    pub boundary: bool,
    /// `|B(y, 3s)|`.
    pub prime_size: usize,
    /// `|B''|`: `B(y, 10s)`, or for boundary balls the component of
    /// `B(y, 2 lambda s) ∩ B` through `y`.
    pub double_prime_size: usize,
    /// `|B*|`: `B(y, 10 C_W s)` for interior balls, `B''` otherwise.
    pub star_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitneyChecks {
    pub disjoint: bool,
    /// Points of `B(y_i, K s_i)` outside `[lambda_1 s_i, lambda_2 s_i]`.
    pub sandwich_violations: usize,
    /// Points with `rho >= lambda_2 R_0` outside every `B(y_i, 3 s_i)`.
    pub interior_uncovered: usize,
    /// Points of `B` outside the interior `B'` and boundary `B''` balls.
    pub uncovered: usize,
    pub max_overlap_k: usize,
    pub max_overlap_double: usize,
    pub center_in_first: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCover {
    pub center: Vec<i32>,
    pub radius: u32,
    pub params: WhitneyParams,
    /// Interior balls first, boundary balls from index `m` on.
    pub balls: Vec<WhitneyBall>,
    pub m: usize,
    /// `F(i)`: balls whose `K`-enlargement meets the geodesic from the
    /// centre to `y_i`.
    pub chains: Vec<Vec<usize>>,
    /// `F*(j) = {i : j in F(i)}`.
    pub chains_star: Vec<Vec<usize>>,
    pub checks: WhitneyChecks,
}

struct BallData {
    rho: Vec<u32>,
    dist0: Vec<u32>,
    parent: Vec<usize>,
}

fn ball_data(view: &RegionView<'_>, x0: usize, radius: u32) -> Result<BallData> {
    if !view.is_open(x0) {
        return Err(Error::ClosedVertex(view.region().coords_of(x0)));
    }
    let mut parent = Vec::new();
    let dist0 = view.distances(&[x0], u32::MAX, None, Some(&mut parent));
    let rim: Vec<usize> = (0..dist0.len()).filter(|&z| dist0[z] == radius).collect();
    let rho = view.distances(&rim, u32::MAX, None, None);
    Ok(BallData { rho, dist0, parent })
}

/// Per-vertex weight `phi = ((R ∧ rho)/R)^2` on `B(x0, R)` and edge weight
/// `phi~(e) = min` over the endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct BallWeight {
    pub graph: WeightedSubgraph,
    /// Graph distance to the complement; `u32::MAX` when the component lies
    /// inside the ball.
    pub rho: Vec<u32>,
    pub phi: Vec<f64>,
    pub phi_edge: Vec<f64>,
    pub radius: u32,
}

impl BallWeight {
    pub fn weights(&self) -> PoincareWeights {
        PoincareWeights { vertex: self.phi.clone(), edge: self.phi_edge.clone() }
    }
}

pub fn compute_weight(graph: OpenGraph<'_>, region: &LatticeBox, x0: &[i32], radius: u32) -> Result<BallWeight> {
    if radius == 0 {
        return Err(invalid("ball radius must be positive"));
    }
    let view = RegionView::new(graph, region)?;
    let loc = view.local_of(x0)?;
    let data = ball_data(&view, loc, radius)?;
    let inside: Vec<usize> = (0..data.dist0.len()).filter(|&z| data.dist0[z] < radius).collect();
    let mut c = vec![0; region.dim()];
    let mut tagged: Vec<(usize, usize)> = inside.iter().map(|&z| (view.frame_of_local(z, &mut c), z)).collect();
    tagged.sort_unstable();
    let g = induced_graph(view.graph(), &view.frame_set(inside.iter().copied()))?;
    let rho: Vec<u32> = tagged.iter().map(|&(_, z)| data.rho[z]).collect();
    let big = radius as f64;
    let phi: Vec<f64> = rho.iter().map(|&r| (big.min(r as f64) / big).powi(2)).collect();
    let phi_edge = g.edges().iter().map(|&(u, v, _)| phi[u as usize].min(phi[v as usize])).collect();
    Ok(BallWeight { graph: g, rho, phi, phi_edge, radius })
}

/// Greedy Whitney decomposition of `B(x0, R)` at scale `R_0`.
pub fn whitney_cover(
    graph: OpenGraph<'_>,
    region: &LatticeBox,
    x0: &[i32],
    radius: u32,
    params: &WhitneyParams,
) -> Result<WhitneyCover> {
    params.validate()?;
    let view = RegionView::new(graph, region)?;
    let root = view.local_of(x0)?;
    let data = ball_data(&view, root, radius)?;
    let n = view.len();
    let in_ball = |z: usize| data.dist0[z] < radius;
    if !(0..n).any(|z| data.dist0[z] == radius) {
        return Err(invalid("the ball contains its whole component, so the distance to its complement is undefined"));
    }
    let lambda = params.lambda;
    let r0 = params.r0 as f64;
    let region_box = view.region().clone();

    let smallest = lambda * (r0 + 1.0);
    let mut order: Vec<(u32, Vec<i32>, usize)> = (0..n)
        .filter(|&z| in_ball(z) && data.rho[z] as f64 >= smallest)
        .map(|z| (data.rho[z], region_box.coords_of(z), z))
        .collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut slack = vec![f64::INFINITY; n];
    let mut picked: Vec<(usize, f64)> = Vec::new();
    for &(rho, _, y) in &order {
        let s = rho as f64 / lambda;
        if s < r0 + 1.0 {
            break;
        }
        if slack[y] < s {
            continue;
        }
        picked.push((y, s));
        for (z, dz) in view.bfs(y, (2.0 * s).ceil() as u32 + 1, |_| false) {
            slack[z] = slack[z].min(dz as f64 - s);
        }
    }
    drop(order);

    let reach = |y: usize, t: f64| view.bfs(y, t.ceil().max(1.0) as u32, |_| false);
    let holds_root = |&(y, s): &(usize, f64)| reach(y, s).iter().any(|&(z, dz)| z == root && (dz as f64) < s);
    let eta = params.eta();
    let (mut interior, mut boundary): (Vec<_>, Vec<_>) = picked.iter().copied().partition(|&(_, s)| s >= eta * r0);
    let mut center_in_first = false;
    for list in [&mut interior, &mut boundary] {
        if let Some(i) = list.iter().position(holds_root) {
            let b = list.remove(i);
            list.insert(0, b);
            break;
        }
        if !list.is_empty() {
            break;
        }
    }
    let m = interior.len();
    let all: Vec<(usize, f64)> = interior.into_iter().chain(boundary).collect();
    if let Some(&first) = all.first() {
        center_in_first = holds_root(&first);
    }

    let mut k_lists: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut base_count = vec![0u32; n];
    let mut three_cover = vec![false; n];
    let mut covered = vec![false; n];
    let mut double_count = vec![0u32; n];
    let mut stamp = vec![u32::MAX; n];
    let mut sandwich_violations = 0;
    let mut balls = Vec::with_capacity(all.len());
    let mut c = vec![0; region_box.dim()];
    for (i, &(y, s)) in all.iter().enumerate() {
        let is_boundary = i >= m;
        let far = [params.k * s, 10.0 * s, 10.0 * params.c_w * s, 2.0 * lambda * s]
            .into_iter()
            .fold(0.0f64, f64::max);
        let near = reach(y, far);
        let mut prime_size = 0;
        for &(z, dz) in &near {
            let dz = dz as f64;
            if dz < s {
                base_count[z] += 1;
            }
            if dz < params.k * s {
                k_lists[z].push(i as u32);
                let rz = data.rho[z] as f64;
                if rz < params.lambda1() * s || rz > params.lambda2() * s {
                    sandwich_violations += 1;
                }
            }
            if dz < 3.0 * s {
                three_cover[z] = true;
                prime_size += 1;
                if !is_boundary {
                    covered[z] = true;
                }
            }
        }
        let double: Vec<usize> = if is_boundary {
            let tag = i as u32;
            for &(z, dz) in &near {
                if (dz as f64) < 2.0 * lambda * s && in_ball(z) {
                    stamp[z] = tag;
                }
            }
            let mut comp = vec![y];
            stamp[y] = u32::MAX - 1;
            let mut head = 0;
            while head < comp.len() {
                let r = comp[head];
                head += 1;
                region_box.coords_into(r, &mut c);
                view.for_each_neighbor(r, &c, |w| {
                    if stamp[w] == tag {
                        stamp[w] = u32::MAX - 1;
                        comp.push(w);
                    }
                });
            }
            comp
        } else {
            near.iter().filter(|&&(_, dz)| (dz as f64) < 10.0 * s).map(|&(z, _)| z).collect()
        };
        for &z in &double {
            double_count[z] += 1;
            if is_boundary {
                covered[z] = true;
            }
        }
        let star_size = if is_boundary {
            double.len()
        } else {
            near.iter().filter(|&&(_, dz)| (dz as f64) < 10.0 * params.c_w * s).count()
        };
        balls.push(WhitneyBall {
            center: region_box.coords_of(y),
            s,
            rho: data.rho[y],
            boundary: is_boundary,
            prime_size,
            double_prime_size: double.len(),
            star_size,
        });
    }

    let chains: Vec<Vec<usize>> = all
        .iter()
        .map(|&(y, _)| {
            let mut hit: Vec<usize> = Vec::new();
            let mut z = y;
            loop {
                hit.extend(k_lists[z].iter().map(|&j| j as usize));
                if z == root || data.parent[z] == usize::MAX {
                    break;
                }
                z = data.parent[z];
            }
            hit.sort_unstable();
            hit.dedup();
            hit
        })
        .collect();
    let mut chains_star = vec![Vec::new(); all.len()];
    for (i, f) in chains.iter().enumerate() {
        for &j in f {
            chains_star[j].push(i);
        }
    }

    let ball_pts: Vec<usize> = (0..n).filter(|&z| in_ball(z)).collect();
    let threshold = params.lambda2() * r0;
    let checks = WhitneyChecks {
        disjoint: base_count.iter().all(|&c| c <= 1),
        sandwich_violations,
        interior_uncovered: ball_pts.iter().filter(|&&z| !three_cover[z] && data.rho[z] as f64 >= threshold).count(),
        uncovered: ball_pts.iter().filter(|&&z| !covered[z]).count(),
        max_overlap_k: ball_pts.iter().map(|&z| k_lists[z].len()).max().unwrap_or(0),
        max_overlap_double: ball_pts.iter().map(|&z| double_count[z] as usize).max().unwrap_or(0),
        center_in_first,
    };
    Ok(WhitneyCover {
        center: x0.to_vec(),
        radius,
        params: *params,
        balls,
        m,
        chains,
        chains_star,
        checks,
    })
}

impl WhitneyCover {
    /// Writes `i,x0,..,x{d-1},s,boundary` rows.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let d = self.center.len();
        let cols: Vec<String> = std::iter::once("i".to_string())
            .chain((0..d).map(|a| format!("x{a}")))
            .chain(["s".into(), "boundary".into()])
            .collect();
        writeln!(w, "{}", cols.join(","))?;
        for (i, b) in self.balls.iter().enumerate() {
            write!(w, "{i},")?;
            for x in &b.center {
                write!(w, "{x},")?;
            }
            writeln!(w, "{:.17e},{}", b.s, b.boundary as u8)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequality::poincare::poincare_on;
    use crate::percolation::BondConfig;

    fn line(len: i32) -> (BondConfig, LatticeBox) {
        let b = LatticeBox::new(vec![-len], vec![len]).unwrap();
        (BondConfig::sample(&b, 1.0, 0).unwrap(), b)
    }

    fn strict() -> WhitneyParams {
        WhitneyParams { lambda: 1000.0, k: 10.0, r0: 51, c_w: 1.0, relaxed: false }
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        assert!(strict().validate().is_ok());
        assert!(WhitneyParams { lambda: 999.0, ..strict() }.validate().is_err());
        assert!(WhitneyParams { k: 101.0, ..strict() }.validate().is_err());
        assert!(WhitneyParams { lambda: 8.0, k: 2.0, relaxed: true, ..strict() }.validate().is_ok());
    }

    #[test]
    fn first_ball_sits_at_the_centre() {
        let (cfg, b) = line(61_000);
        let cov = whitney_cover((&cfg).into(), &b, &[0], 60_000, &strict()).unwrap();
        let first = &cov.balls[0];
        assert_eq!(first.center, vec![0]);
        assert_eq!(first.rho, 60_000);
        assert!((first.s - 60.0).abs() < 1e-12);
        assert!(cov.checks.center_in_first);
    }

    #[test]
    fn path_cover_properties() {
        let (cfg, b) = line(61_000);
        let cov = whitney_cover((&cfg).into(), &b, &[0], 60_000, &strict()).unwrap();
        let c = &cov.checks;
        assert!(c.disjoint);
        assert_eq!(c.sandwich_violations, 0);
        assert_eq!(c.interior_uncovered, 0);
        assert_eq!(c.uncovered, 0);
        assert!(c.max_overlap_k <= 22, "overlap {}", c.max_overlap_k);
        for b in &cov.balls {
            assert!(b.s >= 52.0);
            assert!(strict().lambda * b.s - 0.5 <= b.rho as f64 && b.rho as f64 <= 0.5 * (1.0 + strict().lambda) + strict().lambda * b.s);
        }
        assert!(cov.chains.iter().enumerate().all(|(i, f)| f.contains(&i)));
    }

    #[test]
    fn relaxed_cover_in_the_plane() {
        let b = LatticeBox::cube(&[0, 0], 130).unwrap();
        let cfg = BondConfig::sample(&b, 1.0, 0).unwrap();
        let p = WhitneyParams { lambda: 8.0, k: 2.0, r0: 3, c_w: 1.0, relaxed: true };
        let cov = whitney_cover((&cfg).into(), &b, &[65, 65], 60, &p).unwrap();
        assert!(cov.checks.disjoint);
        assert!(cov.checks.center_in_first);
        assert_eq!(cov.checks.interior_uncovered, 0);
        assert_eq!(cov.checks.sandwich_violations, 0);
        assert_eq!(cov.checks.uncovered, 0);
        assert!(cov.balls.len() > 4);
        let mut out = Vec::new();
        cov.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), cov.balls.len() + 1);
    }

    #[test]
    fn weight_examples() {
        let b = LatticeBox::cube(&[0, 0], 40).unwrap();
        let cfg = BondConfig::sample(&b, 1.0, 0).unwrap();
        let w = compute_weight((&cfg).into(), &b, &[20, 20], 10).unwrap();
        let c = w.graph.index_of(&[20, 20]).unwrap();
        assert_eq!(w.phi[c], 1.0);
        let edge = w.graph.index_of(&[29, 20]).unwrap();
        assert_eq!(w.rho[edge], 1);
        assert!((w.phi[edge] - 0.01).abs() < 1e-15);
        for &(u, v, _) in w.graph.edges() {
            let (a, bb) = (w.rho[u as usize] as i64, w.rho[v as usize] as i64);
            assert!((a - bb).abs() <= 1);
        }
        assert!(w.phi_edge.iter().all(|&x| x >= 1.0 / 100.0 && x <= 1.0));
    }

    #[test]
    fn weighted_constant_scales_like_radius_squared() {
        let b = LatticeBox::cube(&[0, 0], 70).unwrap();
        let cfg = BondConfig::sample(&b, 1.0, 0).unwrap();
        let mut ratios = Vec::new();
        for radius in [4u32, 8, 16] {
            let w = compute_weight((&cfg).into(), &b, &[35, 35], radius).unwrap();
            let all = vec![true; w.graph.len()];
            let p = poincare_on(&w.graph, &all, Some(&w.weights())).unwrap().constant;
            ratios.push(p / (radius as f64).powi(2));
        }
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi / lo < 3.0, "ratios {ratios:?}");
    }
}
