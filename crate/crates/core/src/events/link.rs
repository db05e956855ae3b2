use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::local::LocalGraph;
use super::renorm::{alpha1, alpha2, check_d, check_h, RenormParams};
use super::{EventKind, EventReport};
use crate::error::{invalid, Error, Result};
use crate::percolation::{linf, plus_of, BondConfig, LatticeBox, Tiling};
use crate::rng::{derive_seed, stream, tag};

/// What [`check_l`] decides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LMode {
    /// `L(Q, m, x0, x1)` for one tile scale and one pair.
    Pair { m: i32, x0: Vec<i32>, x1: Vec<i32> },
    /// `L(Q)`: `H(Q, alpha_2) ∧ D(Q, alpha_2)` and a sample of pairs and scales.
    Full,
}

/// The tile path found for one pair, re-measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAudit {
    pub m: i32,
    pub tiles: Vec<Vec<i32>>,
    /// Number of steps `k`.
    pub steps: usize,
    /// `2 lambda_0 |x0 - x1|_inf`, which `m k` must stay below.
    pub budget: f64,
    pub start: Vec<i32>,
    pub end: Vec<i32>,
    /// Consecutive tiles are lattice neighbours, the endpoints lie in the
    /// end tiles, and `m k < budget`.
    pub consistent: bool,
}

struct PsiCache<'a> {
    cfg: &'a BondConfig,
    tiling: Tiling,
    params: RenormParams,
    bits: HashMap<Vec<i32>, bool>,
    cost: u64,
}

impl<'a> PsiCache<'a> {
    fn new(cfg: &'a BondConfig, m: i32, params: &RenormParams) -> Result<Self> {
        let mut inner = params.clone();
        inner.audit = false;
        inner.stop_at_first = true;
        Ok(PsiCache { cfg, tiling: Tiling::new(cfg.lattice_box(), m)?, params: inner, bits: HashMap::new(), cost: 0 })
    }

    fn get(&mut self, idx: &[i32]) -> Result<bool> {
        if let Some(&b) = self.bits.get(idx) {
            return Ok(b);
        }
        let tile = self.tiling.full_tile(idx);
        let a = alpha1(tile.dim());
        let open = if self.cfg.lattice_box().contains_box(&plus_of(&tile)) {
            let h = check_h(self.cfg, &tile, a, &self.params)?;
            self.cost += h.cost;
            h.verdict && {
                let d = check_d(self.cfg, &tile, a, &self.params)?;
                self.cost += d.cost;
                d.verdict
            }
        } else {
            false
        };
        self.bits.insert(idx.to_vec(), open);
        Ok(open)
    }
}

struct Endpoints {
    /// Tile index and the cluster point it was reached through.
    tiles: Vec<(Vec<i32>, Vec<i32>)>,
}

fn endpoint_tiles(x: &[i32], slack: f64, plus: &LatticeBox, lg: &LocalGraph, member: impl Fn(usize) -> bool, tiling: &Tiling) -> Endpoints {
    let r = slack.floor() as i32;
    let mut tiles: Vec<(Vec<i32>, Vec<i32>)> = Vec::new();
    let lo: Vec<i32> = x.iter().zip(plus.lo()).map(|(v, l)| (v - r).max(*l)).collect();
    let hi: Vec<i32> = x.iter().zip(plus.hi()).map(|(v, h)| (v + r).min(*h)).collect();
    let Ok(ball) = LatticeBox::new(lo, hi) else { return Endpoints { tiles } };
    let mut pts: Vec<Vec<i32>> = ball
        .points()
        .filter(|p| member(lg.region().index_of(p).expect("ball inside Q+")))
        .collect();
    pts.sort_by_key(|p| linf(p, x));
    for p in pts {
        let t = tiling.tile_of(&p);
        if plus.contains_box(&tiling.full_tile(&t)) && !tiles.iter().any(|(u, _)| *u == t) {
            tiles.push((t, p));
        }
    }
    Endpoints { tiles }
}

fn pair_search(
    q: &LatticeBox,
    cache: &mut PsiCache<'_>,
    lg: &LocalGraph,
    cv: Option<u32>,
    labels: &[u32],
    x0: &[i32],
    x1: &[i32],
    lambda0: f64,
) -> Result<(bool, Option<PathAudit>, usize)> {
    let n = q.min_side() as f64;
    let m = cache.tiling.k();
    let plus = lg.region().clone();
    let Some(c) = cv else { return Ok((false, None, 0)) };
    let slack = n.powf(2.0 / 9.0);
    let sup = linf(x0, x1) as f64;
    let budget = 2.0 * lambda0 * sup;
    let max_steps = ((budget / m as f64).ceil() as i64 - 1).max(-1);
    let member = |r: usize| labels[r] == c;
    let starts = endpoint_tiles(x0, slack, &plus, lg, member, &cache.tiling);
    let ends = endpoint_tiles(x1, slack, &plus, lg, member, &cache.tiling);
    if max_steps < 0 || starts.tiles.is_empty() || ends.tiles.is_empty() {
        return Ok((false, None, 0));
    }
    let mut parent: HashMap<Vec<i32>, Option<Vec<i32>>> = HashMap::new();
    let mut frontier: Vec<Vec<i32>> = Vec::new();
    for (t, _) in &starts.tiles {
        if !parent.contains_key(t) && cache.get(t)? {
            parent.insert(t.clone(), None);
            frontier.push(t.clone());
        }
    }
    let is_end = |t: &[i32]| ends.tiles.iter().find(|(u, _)| u == t).map(|(_, p)| p.clone());
    let mut visited = frontier.len();
    let mut depth = 0i64;
    let found = loop {
        if let Some(t) = frontier.iter().find(|t| is_end(t).is_some()) {
            break Some(t.clone());
        }
        if depth >= max_steps || frontier.is_empty() {
            break None;
        }
        let mut next = Vec::new();
        for t in &frontier {
            for a in 0..t.len() {
                for s in [1, -1] {
                    let mut u = t.clone();
                    u[a] += s;
                    if parent.contains_key(&u) || !plus.contains_box(&cache.tiling.full_tile(&u)) {
                        continue;
                    }
                    if cache.get(&u)? {
                        parent.insert(u.clone(), Some(t.clone()));
                        next.push(u);
                    }
                }
            }
        }
        visited += next.len();
        frontier = next;
        depth += 1;
    };
    let Some(last) = found else { return Ok((false, None, visited)) };
    let mut tiles = vec![last.clone()];
    while let Some(Some(p)) = parent.get(tiles.last().expect("nonempty")) {
        tiles.push(p.clone());
    }
    tiles.reverse();
    let start = starts.tiles.iter().find(|(u, _)| *u == tiles[0]).map(|(_, p)| p.clone()).expect("start tile");
    let end = is_end(&last).expect("end tile");
    let steps = tiles.len() - 1;
    let consistent = tiles.windows(2).all(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).sum::<i32>() == 1)
        && cache.tiling.full_tile(&tiles[0]).contains(&start)
        && cache.tiling.full_tile(&last).contains(&end)
        && (m as f64) * (steps as f64) < budget;
    Ok((true, Some(PathAudit { m, tiles, steps, budget, start, end, consistent }), visited))
}

fn labelled_plus(cfg: &BondConfig, q: &LatticeBox) -> Result<(LocalGraph, Vec<u32>, Option<u32>)> {
    let plus = plus_of(q);
    if !cfg.lattice_box().contains_box(&plus) {
        return Err(Error::OutsideRegion(plus.hi().to_vec()));
    }
    let lg = LocalGraph::bond(cfg, &plus)?;
    let labels = lg.label();
    let cv = labels.largest();
    Ok((lg, labels.label, cv))
}

/// `L(Q, m, x0, x1)`: a nearest-neighbour path of tiles `T^m` inside `Q^+`,
/// each satisfying `H ∧ D` at exponent `alpha_1`, from a tile holding a point
/// of `C^∨(Q^+)` within `n^{2/9}` of `x0` to one near `x1`, with
/// `m k < 2 lambda_0 |x0 - x1|_inf`.
pub fn check_l_pair(cfg: &BondConfig, q: &LatticeBox, m: i32, x0: &[i32], x1: &[i32], params: &RenormParams) -> Result<(EventReport, Option<PathAudit>)> {
    if !q.contains(x0) || !q.contains(x1) {
        return Err(invalid("endpoints must lie in Q"));
    }
    let n = q.min_side() as f64;
    if (linf(x0, x1) as f64) < n.powf(2.0 / 9.0) {
        return Err(invalid("endpoints must be at sup-distance at least n^(2/9)"));
    }
    let (lg, labels, cv) = labelled_plus(cfg, q)?;
    let mut cache = PsiCache::new(cfg, m, params)?;
    let (ok, audit, visited) = pair_search(q, &mut cache, &lg, cv, &labels, x0, x1, params.lambda0_for(q.dim()))?;
    let mut report = EventReport::new(EventKind::L, q);
    report.verdict = ok;
    report.sub.insert("m_in_range".into(), m >= params.c_e && (m as f64) <= n.powf(1.0 / 9.0));
    report.counts.insert("tiles_visited".into(), visited as f64);
    report.counts.insert("tiles_evaluated".into(), cache.bits.len() as f64);
    if let Some(a) = &audit {
        report.counts.insert("steps".into(), a.steps as f64);
        report.witness = a.tiles.clone();
        report.sub.insert("path_consistent".into(), a.consistent);
    }
    report.cost = cache.cost + lg.len() as u64;
    Ok((report, audit))
}

/// Tile scales `m` in `[C_E, n^{1/9}]`, at most `count` of them, evenly
/// spread and including both ends.
pub(crate) fn m_values(n: i32, c_e: i32, count: usize) -> Vec<i32> {
    let top = ((n as f64).powf(1.0 / 9.0) + 1e-12).floor() as i32;
    let lo = c_e.max(2);
    if top < lo || count == 0 {
        return Vec::new();
    }
    let span = (top - lo) as usize;
    let mut out: Vec<i32> = if count == 1 || span == 0 {
        vec![lo]
    } else {
        (0..count).map(|i| lo + ((i * span) as f64 / (count - 1) as f64).round() as i32).collect()
    };
    out.dedup();
    out
}

/// Decides `L(Q, m, x0, x1)` for one pair, or the full `L(Q)`.
pub fn check_l(cfg: &BondConfig, q: &LatticeBox, mode: &LMode, params: &RenormParams) -> Result<EventReport> {
    match mode {
        LMode::Pair { m, x0, x1 } => check_l_pair(cfg, q, *m, x0, x1, params).map(|(r, _)| r),
        LMode::Full => check_l_full(cfg, q, params),
    }
}

fn check_l_full(cfg: &BondConfig, q: &LatticeBox, params: &RenormParams) -> Result<EventReport> {
    let d = q.dim();
    let a2 = alpha2(d);
    let mut report = EventReport::new(EventKind::L, q);
    let h = check_h(cfg, q, a2, params)?;
    report.cost += h.cost;
    report.sub.insert("h".into(), h.verdict);
    report.heuristic |= h.heuristic;
    if !h.verdict {
        report.failing = h.failing;
        if params.stop_at_first {
            return Ok(report);
        }
    }
    let dd = check_d(cfg, q, a2, params)?;
    report.cost += dd.cost;
    report.sub.insert("d".into(), dd.verdict);
    if !dd.verdict {
        report.failing = report.failing.or(dd.failing);
        if params.stop_at_first {
            return Ok(report);
        }
    }
    let n = q.min_side();
    let ms = m_values(n, params.c_e, params.l_m_values);
    report.sub.insert("pairs_vacuous".into(), ms.is_empty());
    let mut pairs_ok = true;
    if !ms.is_empty() {
        let (lg, labels, cv) = labelled_plus(cfg, q)?;
        let min_sep = (n as f64).powf(2.0 / 9.0).ceil() as i32;
        let mut g = stream(derive_seed(params.seed, &[tag("l-pairs"), q.lo().iter().fold(n as u64, |h, &v| h.wrapping_mul(1_000_003).wrapping_add(v as u64))]));
        let mut pairs = Vec::new();
        let mut tries = 0;
        while pairs.len() < params.l_pairs && tries < 100 * params.l_pairs.max(1) {
            tries += 1;
            let x0: Vec<i32> = (0..d).map(|a| g.random_range(q.lo()[a]..=q.hi()[a])).collect();
            let x1: Vec<i32> = (0..d).map(|a| g.random_range(q.lo()[a]..=q.hi()[a])).collect();
            if linf(&x0, &x1) >= min_sep {
                pairs.push((x0, x1));
            }
        }
        let lambda0 = params.lambda0_for(d);
        let mut checked = 0usize;
        'outer: for &m in &ms {
            let mut cache = PsiCache::new(cfg, m, params)?;
            for (x0, x1) in &pairs {
                checked += 1;
                let (ok, _, _) = pair_search(q, &mut cache, &lg, cv, &labels, x0, x1, lambda0)?;
                if !ok {
                    pairs_ok = false;
                    report.witness = vec![x0.clone(), x1.clone()];
                    report.counts.insert("failing_m".into(), m as f64);
                    if params.stop_at_first {
                        report.cost += cache.cost;
                        break 'outer;
                    }
                }
            }
            report.cost += cache.cost;
        }
        report.counts.insert("pairs_checked".into(), checked as f64);
    }
    report.sub.insert("pairs".into(), pairs_ok);
    report.verdict = h.verdict && dd.verdict && pairs_ok;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(side: i32) -> LatticeBox {
        LatticeBox::cube(&[0, 0], side).unwrap()
    }

    #[test]
    fn scale_range() {
        assert!(m_values(32, 2, 3).is_empty());
        assert_eq!(m_values(512, 2, 3), vec![2]);
        assert_eq!(m_values(1 << 18, 2, 3), vec![2, 3, 4]);
        assert_eq!(m_values(1 << 27, 2, 3), vec![2, 5, 8]);
    }

    #[test]
    fn straight_path_on_full_lattice() {
        let cfg = BondConfig::sample(&frame(80), 1.0, 0).unwrap();
        let q = LatticeBox::cube(&[20, 20], 32).unwrap();
        let (r, audit) = check_l_pair(&cfg, &q, 4, &[21, 30], &[50, 30], &RenormParams::default()).unwrap();
        assert!(r.verdict);
        assert!(!r.sub["m_in_range"]);
        let a = audit.unwrap();
        assert!(a.consistent);
        assert!(a.steps <= 8, "{a:?}");
    }

    #[test]
    fn closed_configuration_has_no_path() {
        let cfg = BondConfig::sample(&frame(80), 0.0, 0).unwrap();
        let q = LatticeBox::cube(&[20, 20], 32).unwrap();
        let (r, audit) = check_l_pair(&cfg, &q, 4, &[21, 30], &[50, 30], &RenormParams::default()).unwrap();
        assert!(!r.verdict);
        assert!(audit.is_none());
    }

    #[test]
    fn tight_budget_rejects_long_paths() {
        let cfg = BondConfig::sample(&frame(80), 1.0, 0).unwrap();
        let q = LatticeBox::cube(&[20, 20], 32).unwrap();
        let params = RenormParams { lambda0: Some(0.1), ..RenormParams::default() };
        let (r, _) = check_l_pair(&cfg, &q, 4, &[21, 30], &[50, 30], &params).unwrap();
        assert!(!r.verdict);
    }

    #[test]
    fn close_endpoints_are_rejected() {
        let cfg = BondConfig::sample(&frame(80), 1.0, 0).unwrap();
        let q = LatticeBox::cube(&[20, 20], 32).unwrap();
        assert!(check_l_pair(&cfg, &q, 4, &[30, 30], &[30, 31], &RenormParams::default()).is_err());
    }

    #[test]
    fn full_mode_on_full_lattice() {
        let cfg = BondConfig::sample(&frame(90), 1.0, 0).unwrap();
        let q = LatticeBox::cube(&[30, 30], 32).unwrap();
        let r = check_l(&cfg, &q, &LMode::Full, &RenormParams::default()).unwrap();
        assert!(r.verdict);
        assert!(r.sub["pairs_vacuous"]);
    }
}
