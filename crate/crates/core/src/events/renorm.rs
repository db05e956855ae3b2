use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::grid::{crossing_grid, quantified_grid, CubeGrid};
use super::local::{Labels, LocalGraph, Scratch, NONE};
use super::site::{check_f, check_k, FOptions};
use super::{EventKind, EventReport};
use crate::error::{invalid, Error, Result};
use crate::par::{map_indexed, Exec};
use crate::percolation::{linf, plus_of, BondConfig, LatticeBox, SiteConfig, Tiling};
use crate::rng::{derive_seed, stream, tag};

/// `alpha_1 = 1/(4 + d)`, the sub-cube exponent of the `psi` field.
pub fn alpha1(d: usize) -> f64 {
    1.0 / (4.0 + d as f64)
}

/// `alpha_2 = 1/(11 (d + 2))`, the sub-cube exponent of `L(Q)`.
pub fn alpha2(d: usize) -> f64 {
    1.0 / (11.0 * (d as f64 + 2.0))
}

/// Constants and search budgets shared by the quantified events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormParams {
    /// Tile parameter of the macroscopic field behind `H_0`.
    pub k0: i32,
    /// Defaults to `1/(4d + 2)`.
    pub eps0: Option<f64>,
    pub lambda_k: f64,
    /// Chemical-distance constant; defaults to `3d`.
    pub c_h: Option<f64>,
    /// Path-length constant of `L`; defaults to `d`.
    pub lambda0: Option<f64>,
    pub c_e: i32,
    pub exhaustive_side: i32,
    pub size_ratio: f64,
    pub pair_sources: usize,
    pub pair_targets: usize,
    pub l_pairs: usize,
    pub l_m_values: usize,
    pub f: FOptions,
    /// Stop at the first failing sub-cube.
    pub stop_at_first: bool,
    /// Run the inclusion and sandwich audits on true instances.
    pub audit: bool,
    pub seed: u64,
}

impl Default for RenormParams {
    fn default() -> Self {
        RenormParams {
            k0: 17,
            eps0: None,
            lambda_k: 7.0 / 8.0,
            c_h: None,
            lambda0: None,
            c_e: 2,
            exhaustive_side: 24,
            size_ratio: 1.25,
            pair_sources: 20,
            pair_targets: 100,
            l_pairs: 50,
            l_m_values: 3,
            f: FOptions::default(),
            stop_at_first: true,
            audit: true,
            seed: 0,
        }
    }
}

impl RenormParams {
    pub fn eps0_for(&self, d: usize) -> f64 {
        self.eps0.unwrap_or(1.0 / (4.0 * d as f64 + 2.0))
    }
    pub fn c_h_for(&self, d: usize) -> f64 {
        self.c_h.unwrap_or(3.0 * d as f64)
    }
    pub fn lambda0_for(&self, d: usize) -> f64 {
        self.lambda0.unwrap_or(d as f64)
    }
    pub(crate) fn validate(&self) -> Result<()> {
        if self.k0 < 2 {
            return Err(invalid("k0 must be at least 2"));
        }
        if !(self.size_ratio > 1.0) {
            return Err(invalid("size_ratio must exceed 1"));
        }
        if !(0.0..1.0).contains(&self.lambda_k) {
            return Err(invalid("lambda_k must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn require_plus(cfg: &BondConfig, q: &LatticeBox) -> Result<LatticeBox> {
    let plus = plus_of(q);
    if !cfg.lattice_box().contains_box(&plus) {
        return Err(Error::OutsideRegion(plus.hi().to_vec()));
    }
    Ok(plus)
}

/// Outcome of `R(Q)` together with the labelled `Q^+` it was read from.
pub(crate) struct RState {
    pub verdict: bool,
    pub plus: LocalGraph,
    pub labels: Labels,
    /// `C^∨(Q^+)`.
    pub cv_plus: Option<u32>,
    pub sub: Vec<(&'static str, bool)>,
    pub failing: Option<LatticeBox>,
    pub cost: u64,
}

pub(crate) fn r_state(cfg: &BondConfig, q: &LatticeBox, lazy: bool, scratch: &mut Scratch) -> Result<RState> {
    let d = q.dim();
    let n = q.min_side();
    let plus_box = require_plus(cfg, q)?;
    let plus = LocalGraph::bond(cfg, &plus_box)?;
    let labels = plus.label();
    let mut cost = plus.len() as u64;
    let crossing: Vec<u32> = (0..labels.sizes.len() as u32).filter(|&i| labels.spans(i, d)).collect();
    let unique = crossing.len() == 1;
    let small_others =
        (0..labels.sizes.len() as u32).all(|i| crossing.first() == Some(&i) || 8 * labels.diam[i as usize] <= n);
    let cv_plus = labels.largest();
    let cv_plus_crossing = cv_plus.is_some_and(|i| labels.spans(i, d));
    let q_graph = LocalGraph::bond(cfg, q)?;
    let q_labels = q_graph.label();
    cost += q_graph.len() as u64;
    let cv_q = q_labels.largest();
    let cv_q_crossing = cv_q.is_some_and(|i| q_labels.spans(i, d));
    let mut sub = vec![
        ("unique_crossing", unique),
        ("small_others", small_others),
        ("cv_q_crossing", cv_q_crossing),
        ("cv_plus_crossing", cv_plus_crossing),
    ];
    let mut failing = None;
    let cheap = unique && small_others && cv_q_crossing && cv_plus_crossing;
    let mut subcubes = false;
    if cheap || !lazy {
        subcubes = unique;
        if let Some(&c) = crossing.first().filter(|_| unique) {
            let (cubes, _) = crossing_grid(q);
            for sq in &cubes {
                cost += sq.vertex_count() as u64;
                if !plus.crosses(sq, |r| labels.label[r] == c, scratch) {
                    subcubes = false;
                    failing = Some(sq.clone());
                    break;
                }
            }
        }
        sub.push(("subcube_crossing", subcubes));
    }
    let r0 = unique && small_others && subcubes;
    sub.push(("r0", r0));
    let verdict = r0 && cv_q_crossing && cv_plus_crossing;
    if verdict {
        let (cq, cp) = (cv_q.expect("crossing"), cv_plus.expect("crossing"));
        let inside = q.points().enumerate().all(|(r, p)| {
            q_labels.label[r] != cq || labels.label[plus_box.index_of(&p).expect("Q inside Q+")] == cp
        });
        sub.push(("cv_inclusion", inside));
    }
    Ok(RState { verdict, plus, labels, cv_plus, sub, failing, cost })
}

/// `R(Q)`: a unique crossing cluster of `Q^+` that crosses every sub-cube of
/// side at least `n/8`, no other `Q^+`-cluster of diameter above `n/8`, and
/// crossing largest clusters in both `Q` and `Q^+`.
pub fn check_r(cfg: &BondConfig, q: &LatticeBox) -> Result<EventReport> {
    let st = r_state(cfg, q, false, &mut Scratch::default())?;
    let mut report = EventReport::new(EventKind::R, q);
    report.verdict = st.verdict;
    for (k, v) in st.sub {
        report.sub.insert(k.into(), v);
    }
    report.failing = st.failing;
    report.grid = Some(crossing_grid(q).1);
    report.counts.insert("clusters_plus".into(), st.labels.sizes.len() as f64);
    report.cost = st.cost;
    Ok(report)
}

/// Which per-tile event a macroscopic field records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroKind {
    /// `R(T(x~))`.
    Phi,
    /// `H(T(x~), alpha_1) ∧ D(T(x~), alpha_1)`.
    Psi,
}

/// Macroscopic site process over the tiles of a configuration box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroField {
    pub kind: MacroKind,
    pub tiling: Tiling,
    /// `None` where the tile or its enlargement leaves the box.
    pub bits: Vec<Option<bool>>,
}

/// Two-by-two contingency test of independence between paired bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceTest {
    pub pairs: u64,
    /// `table[a][b]` counts pairs with first bit `a` and second bit `b`.
    pub table: [[u64; 2]; 2],
    pub chi2: f64,
    pub p_value: f64,
    pub correlation: f64,
}

impl IndependenceTest {
    pub fn from_table(table: [[u64; 2]; 2]) -> Self {
        let pairs: u64 = table.iter().flatten().sum();
        let n = pairs as f64;
        let row = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
        let col = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
        let degenerate = row.contains(&0) || col.contains(&0);
        let (chi2, p_value, correlation) = if degenerate || pairs == 0 {
            (0.0, 1.0, 0.0)
        } else {
            let mut chi2 = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let e = row[a] as f64 * col[b] as f64 / n;
                    chi2 += (table[a][b] as f64 - e).powi(2) / e;
                }
            }
            let p = 1.0 - ChiSquared::new(1.0).expect("one degree of freedom").cdf(chi2);
            let num = table[1][1] as f64 * table[0][0] as f64 - table[1][0] as f64 * table[0][1] as f64;
            let den = (row[0] as f64 * row[1] as f64 * col[0] as f64 * col[1] as f64).sqrt();
            (chi2, p, num / den)
        };
        IndependenceTest { pairs, table, chi2, p_value, correlation }
    }

    pub fn merge(tests: &[IndependenceTest]) -> Self {
        let mut table = [[0u64; 2]; 2];
        for t in tests {
            for a in 0..2 {
                for b in 0..2 {
                    table[a][b] += t.table[a][b];
                }
            }
        }
        Self::from_table(table)
    }
}

impl MacroField {
    pub fn k(&self) -> i32 {
        self.tiling.k()
    }
    pub fn bit(&self, idx: &[i32]) -> Option<bool> {
        self.tiling.index_box().index_of(idx).and_then(|i| self.bits[i])
    }
    pub fn available(&self) -> usize {
        self.bits.iter().flatten().count()
    }
    /// Fraction of available bits equal to one.
    pub fn marginal(&self) -> Option<f64> {
        let avail = self.available();
        (avail > 0).then(|| self.bits.iter().flatten().filter(|&&b| b).count() as f64 / avail as f64)
    }
    /// The field as a site configuration on the index box, unavailable tiles
    /// closed.
    pub fn to_site_config(&self) -> SiteConfig {
        let open: Vec<bool> = self.bits.iter().map(|b| b.unwrap_or(false)).collect();
        SiteConfig::from_vec(self.tiling.index_box(), &open).expect("one bit per tile")
    }
    /// Contingency table over available pairs `(x~, x~ + sep e_a)`.
    pub fn independence(&self, sep: i32) -> IndependenceTest {
        let ib = self.tiling.index_box();
        let mut table = [[0u64; 2]; 2];
        let mut y = vec![0; ib.dim()];
        for (i, x) in ib.points().enumerate() {
            let Some(bx) = self.bits[i] else { continue };
            for a in 0..ib.dim() {
                y.copy_from_slice(&x);
                y[a] += sep;
                if let Some(by) = self.bit(&y) {
                    table[bx as usize][by as usize] += 1;
                }
            }
        }
        IndependenceTest::from_table(table)
    }
}

/// Builds the `phi` or `psi` field of tile parameter `k` over the
/// configuration box. A tile whose enlargement leaves the box is unavailable.
pub fn macro_field(cfg: &BondConfig, k: i32, kind: MacroKind, params: &RenormParams, exec: Exec) -> Result<MacroField> {
    params.validate()?;
    let frame = cfg.lattice_box();
    let tiling = Tiling::new(frame, k)?;
    let ib = tiling.index_box().clone();
    let d = frame.dim();
    let bits = map_indexed(exec, ib.vertex_count(), |i| -> Result<Option<bool>> {
        let tile = tiling.full_tile(&ib.coords_of(i));
        if !frame.contains_box(&plus_of(&tile)) {
            return Ok(None);
        }
        let bit = match kind {
            MacroKind::Phi => r_state(cfg, &tile, true, &mut Scratch::default())?.verdict,
            MacroKind::Psi => {
                let mut inner = params.clone();
                inner.audit = false;
                inner.stop_at_first = true;
                check_h(cfg, &tile, alpha1(d), &inner)?.verdict && check_d(cfg, &tile, alpha1(d), &inner)?.verdict
            }
        };
        Ok(Some(bit))
    });
    Ok(MacroField { kind, tiling, bits: bits.into_iter().collect::<Result<_>>()? })
}

/// Lazily evaluated `phi` bits of the `k0` tiling anchored at the box corner.
pub(crate) struct PhiCache<'a> {
    cfg: &'a BondConfig,
    tiling: Tiling,
    bits: Vec<u8>,
    scratch: Scratch,
    pub cost: u64,
}

impl<'a> PhiCache<'a> {
    pub fn new(cfg: &'a BondConfig, k0: i32) -> Result<Self> {
        let tiling = Tiling::new(cfg.lattice_box(), k0)?;
        let n = tiling.tile_count();
        Ok(PhiCache { cfg, tiling, bits: vec![0; n], scratch: Scratch::default(), cost: 0 })
    }

    fn get(&mut self, idx: &[i32]) -> Result<bool> {
        let Some(i) = self.tiling.index_box().index_of(idx) else { return Ok(false) };
        if self.bits[i] == 0 {
            let tile = self.tiling.full_tile(idx);
            let open = if self.cfg.lattice_box().contains_box(&plus_of(&tile)) {
                let st = r_state(self.cfg, &tile, true, &mut self.scratch)?;
                self.cost += st.cost;
                st.verdict
            } else {
                false
            };
            self.bits[i] = 1 + open as u8;
        }
        Ok(self.bits[i] == 2)
    }
}

/// Largest special cube inside `q` for the tiling: a union of enlarged tiles
/// `T(x~)^+` over a macroscopic cube. Returns the macroscopic cube and the
/// special cube, choosing the lowest corner among equal sizes.
pub fn special_cube(q: &LatticeBox, tiling: &Tiling) -> Option<(LatticeBox, LatticeBox)> {
    let k = tiling.k();
    let d = q.dim();
    let t0 = LatticeBox::cube(&vec![0; d], k - 1).expect("tile");
    let t0p = plus_of(&t0);
    let below = -t0p.lo()[0];
    let above = t0p.hi()[0] - (k - 1);
    let anchor = tiling.anchor();
    let mut first = vec![0; d];
    let mut span = i32::MAX;
    for a in 0..d {
        let lo = (q.lo()[a] - anchor[a] + below + k - 1).div_euclid(k);
        let hi = (q.hi()[a] - anchor[a] - (k - 1) - above).div_euclid(k);
        first[a] = lo;
        span = span.min(hi - lo);
    }
    if span < 0 {
        return None;
    }
    let macro_cube = LatticeBox::cube(&first, span).expect("macro cube");
    let lo: Vec<i32> = (0..d).map(|a| anchor[a] + k * first[a] - below).collect();
    let side = k * span + (k - 1) + below + above;
    Some((macro_cube, LatticeBox::cube(&lo, side).expect("special cube")))
}

pub(crate) struct H0Outcome {
    pub verdict: bool,
    pub special: bool,
    pub heuristic: bool,
}

pub(crate) fn h0_cached(cache: &mut PhiCache<'_>, q: &LatticeBox, params: &RenormParams) -> Result<H0Outcome> {
    let Some((mq, _)) = special_cube(q, &cache.tiling) else {
        return Ok(H0Outcome { verdict: true, special: false, heuristic: false });
    };
    let d = q.dim();
    let grown = LatticeBox::new(mq.lo().iter().map(|v| v - 1).collect(), mq.hi().iter().map(|v| v + 1).collect())?;
    let mut open = Vec::with_capacity(grown.vertex_count());
    for p in grown.points() {
        open.push(cache.get(&p)?);
    }
    let field = SiteConfig::from_vec(&grown, &open)?;
    let k = check_k(&field, &mq, params.lambda_k)?;
    if !k.verdict {
        return Ok(H0Outcome { verdict: false, special: true, heuristic: false });
    }
    let f = check_f(&field, &mq, params.eps0_for(d), &params.f)?;
    Ok(H0Outcome { verdict: f.verdict, special: true, heuristic: f.heuristic })
}

/// `H_0(Q)`: the macroscopic field of the largest special cube inside `Q`
/// satisfies `K(·, 7/8)` and `F(·, eps_0)`; true when no special cube fits.
pub fn check_h0(cfg: &BondConfig, q: &LatticeBox, params: &RenormParams) -> Result<EventReport> {
    params.validate()?;
    let mut cache = PhiCache::new(cfg, params.k0)?;
    let out = h0_cached(&mut cache, q, params)?;
    let mut report = EventReport::new(EventKind::H0, q);
    report.verdict = out.verdict;
    report.heuristic = out.verdict && out.heuristic;
    report.sub.insert("special".into(), out.special);
    report.cost = cache.cost;
    Ok(report)
}

fn grid_for(q: &LatticeBox, alpha: f64, params: &RenormParams) -> Result<(Vec<LatticeBox>, CubeGrid)> {
    params.validate()?;
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(invalid("alpha must lie in (0, 1/2)"));
    }
    if !q.is_cube() {
        return Err(invalid("quantified events need a cube"));
    }
    Ok(quantified_grid(q, alpha, params.size_ratio, params.exhaustive_side))
}

/// `H(Q, alpha)`: `R(Q)`, and `R(Q') ∧ H_0(Q')` for every grid cube `Q'`
/// with `Q'^+ ⊆ Q^+`, `Q' ∩ Q^⊕ ≠ ∅` and `n^alpha <= s(Q') <= n`.
pub fn check_h(cfg: &BondConfig, q: &LatticeBox, alpha: f64, params: &RenormParams) -> Result<EventReport> {
    let (cubes, grid) = grid_for(q, alpha, params)?;
    let mut report = EventReport::new(EventKind::H, q);
    let mut scratch = Scratch::default();
    let top = r_state(cfg, q, params.stop_at_first, &mut scratch)?;
    report.cost += top.cost;
    report.sub.insert("r".into(), top.verdict);
    let mut ok = top.verdict;
    let mut checked = 0usize;
    let mut special = 0usize;
    let mut heuristic = false;
    if ok || !params.stop_at_first {
        let mut cache = PhiCache::new(cfg, params.k0)?;
        let (mut r_all, mut h0_all) = (true, true);
        for c in &cubes {
            checked += 1;
            let st = r_state(cfg, c, true, &mut scratch)?;
            report.cost += st.cost;
            let h0 = if st.verdict { Some(h0_cached(&mut cache, c, params)?) } else { None };
            if let Some(h) = &h0 {
                special += h.special as usize;
                heuristic |= h.heuristic;
            }
            let pass = h0.as_ref().is_some_and(|h| h.verdict);
            r_all &= st.verdict;
            h0_all &= h0.as_ref().is_none_or(|h| h.verdict);
            if !pass {
                ok = false;
                if report.failing.is_none() {
                    report.failing = Some(c.clone());
                }
                if params.stop_at_first {
                    break;
                }
            }
        }
        report.cost += cache.cost;
        report.sub.insert("subcubes_r".into(), r_all);
        report.sub.insert("subcubes_h0".into(), h0_all);
    }
    report.verdict = ok;
    report.heuristic = ok && heuristic;
    report.counts.insert("cubes_checked".into(), checked as f64);
    report.counts.insert("special_cubes".into(), special as f64);
    if ok && params.audit {
        let cp = top.cv_plus.expect("crossing");
        let plus_box = top.plus.region().clone();
        let mut violations = 0usize;
        for c in &cubes {
            let lg = LocalGraph::bond(cfg, c)?;
            let labels = lg.label();
            report.cost += lg.len() as u64;
            let Some(id) = labels.largest() else { continue };
            let bad = c.points().enumerate().any(|(r, p)| {
                labels.label[r] == id && top.labels.label[plus_box.index_of(&p).expect("inside Q+")] != cp
            });
            violations += bad as usize;
        }
        report.sub.insert("inclusion".into(), violations == 0);
        report.counts.insert("inclusion_violations".into(), violations as f64);
    }
    report.grid = Some(grid);
    Ok(report)
}

struct PairCheck {
    pass: bool,
    pairs: u64,
    max_ratio: f64,
    sandwich_ok: bool,
    cost: u64,
}

/// Chemical distances inside `C^∨(Q^+)` between its points in `Q`, at
/// sup-distance at least `n/12`.
fn distance_pairs(st: &RState, q: &LatticeBox, c_h: f64, sandwich: Option<f64>, params: &RenormParams, scratch: &mut Scratch) -> PairCheck {
    let n = q.min_side();
    let mut out = PairCheck { pass: true, pairs: 0, max_ratio: 0.0, sandwich_ok: true, cost: 0 };
    let Some(c) = st.cv_plus else {
        out.pass = false;
        return out;
    };
    let region = st.plus.region();
    let members: Vec<(usize, Vec<i32>)> = q
        .points()
        .filter_map(|p| {
            let r = region.index_of(&p).expect("Q inside Q+");
            (st.labels.label[r] == c).then_some((r, p))
        })
        .collect();
    if members.len() < 2 {
        return out;
    }
    let exhaustive = q.vertex_count() <= 12usize.pow(q.dim() as u32);
    let mut g = stream(derive_seed(params.seed, &[tag("d-pairs"), q.lo().iter().fold(n as u64, |h, &v| h.wrapping_mul(1_000_003).wrapping_add(v as u64))]));
    let sources: Vec<usize> = if exhaustive {
        (0..members.len()).collect()
    } else {
        let mut s = sample(&mut g, members.len(), params.pair_sources.min(members.len())).into_vec();
        s.sort_unstable();
        s
    };
    for &si in &sources {
        let (src, ref x) = members[si];
        let dist = st.plus.distances(src, scratch);
        out.cost += st.plus.len() as u64;
        let targets: Vec<usize> = if exhaustive {
            (si + 1..members.len()).collect()
        } else {
            sample(&mut g, members.len(), params.pair_targets.min(members.len())).into_vec()
        };
        for ti in targets {
            let (dst, ref y) = members[ti];
            let sup = linf(x, y);
            let dw = dist[dst];
            if let Some(bound) = sandwich {
                if dw == NONE || (dw as i64) < sup as i64 || dw as f64 > c_h * bound.max(sup as f64) {
                    out.sandwich_ok = false;
                }
            }
            if sup == 0 || 12 * sup < n {
                continue;
            }
            out.pairs += 1;
            let ratio = if dw == NONE { f64::INFINITY } else { dw as f64 / sup as f64 };
            out.max_ratio = out.max_ratio.max(ratio);
            if ratio > c_h {
                out.pass = false;
            }
        }
        if !out.pass && sandwich.is_none() {
            break;
        }
    }
    out
}

/// `D(Q, alpha)`: `D_0(Q')` over the same sub-cube grid as [`check_h`],
/// where `D_0(Q') = R(Q')` plus `d(x, y) <= C_H |x - y|_inf` inside
/// `C^∨(Q'^+)` for its points in `Q'` at sup-distance at least `s(Q')/12`.
pub fn check_d(cfg: &BondConfig, q: &LatticeBox, alpha: f64, params: &RenormParams) -> Result<EventReport> {
    let (cubes, grid) = grid_for(q, alpha, params)?;
    let d = q.dim();
    let c_h = params.c_h_for(d);
    let mut report = EventReport::new(EventKind::D, q);
    let mut scratch = Scratch::default();
    let mut ok = true;
    let (mut checked, mut pairs, mut max_ratio) = (0usize, 0u64, 0.0f64);
    let (mut r_all, mut dist_all) = (true, true);
    for c in &cubes {
        checked += 1;
        let st = r_state(cfg, c, true, &mut scratch)?;
        report.cost += st.cost;
        let mut pass = st.verdict;
        r_all &= st.verdict;
        if st.verdict {
            let pc = distance_pairs(&st, c, c_h, None, params, &mut scratch);
            report.cost += pc.cost;
            pairs += pc.pairs;
            max_ratio = max_ratio.max(pc.max_ratio);
            pass = pc.pass;
            dist_all &= pc.pass;
        }
        if !pass {
            ok = false;
            if report.failing.is_none() {
                report.failing = Some(c.clone());
            }
            if params.stop_at_first {
                break;
            }
        }
    }
    report.sub.insert("subcubes_r".into(), r_all);
    report.sub.insert("subcubes_distance".into(), dist_all);
    report.verdict = ok;
    report.counts.insert("cubes_checked".into(), checked as f64);
    report.counts.insert("pairs".into(), pairs as f64);
    report.counts.insert("max_ratio".into(), max_ratio);
    report.counts.insert("c_h".into(), c_h);
    if ok && params.audit {
        let top = r_state(cfg, q, true, &mut scratch)?;
        if top.verdict {
            let bound = 1.0 + (q.min_side() as f64).powf(alpha);
            let pc = distance_pairs(&top, q, c_h, Some(bound), params, &mut scratch);
            report.cost += pc.cost;
            report.sub.insert("sandwich".into(), pc.sandwich_ok);
        }
    }
    report.grid = Some(grid);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::enlarge_cube;

    fn frame(side: i32) -> LatticeBox {
        LatticeBox::cube(&[0, 0], side).unwrap()
    }

    #[test]
    fn exponents() {
        assert_eq!(alpha1(2), 1.0 / 6.0);
        assert_eq!(alpha2(2), 1.0 / 44.0);
    }

    #[test]
    fn r_extremes() {
        let f = frame(30);
        let q = LatticeBox::cube(&[8, 8], 12).unwrap();
        let full = BondConfig::sample(&f, 1.0, 1).unwrap();
        let r = check_r(&full, &q).unwrap();
        assert!(r.verdict);
        assert!(r.sub.values().all(|&v| v));
        let empty = BondConfig::sample(&f, 0.0, 1).unwrap();
        let r = check_r(&empty, &q).unwrap();
        assert!(!r.verdict);
        assert_eq!(r.sub["unique_crossing"], false);
    }

    #[test]
    fn r_rejects_second_large_cluster() {
        let f = frame(40);
        let q = LatticeBox::cube(&[12, 12], 16).unwrap();
        let on_seg = |x: &[i32]| x[0] == 20 && (14..=24).contains(&x[1]);
        let cfg = BondConfig::from_predicate(&f, |x, a| {
            let mut y = x.to_vec();
            y[a] += 1;
            on_seg(x) == on_seg(&y)
        });
        let r = check_r(&cfg, &q).unwrap();
        assert!(!r.verdict);
        assert!(r.sub["unique_crossing"]);
        assert!(!r.sub["small_others"]);
    }

    #[test]
    fn r_true_implies_inclusion() {
        let f = frame(40);
        let q = LatticeBox::cube(&[12, 12], 16).unwrap();
        let mut trues = 0;
        for seed in 0..60 {
            let cfg = BondConfig::sample(&f, 0.9, seed).unwrap();
            let r = check_r(&cfg, &q).unwrap();
            if r.verdict {
                trues += 1;
                assert!(r.sub["cv_inclusion"]);
            }
        }
        assert!(trues > 0);
    }

    #[test]
    fn special_cube_fits_enlarged_tiles() {
        let f = frame(100);
        let tiling = Tiling::new(&f, 17).unwrap();
        assert!(special_cube(&LatticeBox::cube(&[0, 0], 23).unwrap(), &tiling).is_none());
        let q = LatticeBox::cube(&[10, 10], 60).unwrap();
        let (mq, sq) = special_cube(&q, &tiling).unwrap();
        assert!(q.contains_box(&sq));
        for x in mq.points() {
            assert!(sq.contains_box(&plus_of(&tiling.full_tile(&x))));
        }
        let lo_tile = plus_of(&tiling.full_tile(mq.lo()));
        assert_eq!(lo_tile.lo(), sq.lo());
        let hi_tile = plus_of(&tiling.full_tile(mq.hi()));
        assert_eq!(hi_tile.hi(), sq.hi());
        let bigger = LatticeBox::cube(&mq.lo().iter().map(|v| v - 1).collect::<Vec<_>>(), mq.side(0) + 1).unwrap();
        let grown = enlarge_cube(&tiling.full_tile(bigger.lo())).plus;
        assert!(!q.contains_box(&grown) || !q.contains_box(&plus_of(&tiling.full_tile(bigger.hi()))));
    }

    #[test]
    fn h_and_d_hold_on_full_lattice() {
        let params = RenormParams::default();
        let f = frame(90);
        let cfg = BondConfig::sample(&f, 1.0, 3).unwrap();
        for n in [8, 16, 32] {
            let q = LatticeBox::cube(&[30, 30], n).unwrap();
            let h = check_h(&cfg, &q, alpha1(2), &params).unwrap();
            assert!(h.verdict, "H fails at n = {n}: {:?}", h.failing);
            assert!(h.sub["inclusion"]);
            let d = check_d(&cfg, &q, alpha1(2), &params).unwrap();
            assert!(d.verdict, "D fails at n = {n}: {:?}", d.failing);
            assert!(d.sub["sandwich"]);
            assert!(d.counts["max_ratio"] <= 2.0);
        }
    }

    #[test]
    fn h_fails_on_empty_configuration() {
        let cfg = BondConfig::sample(&frame(30), 0.0, 3).unwrap();
        let q = LatticeBox::cube(&[10, 10], 8).unwrap();
        assert!(!check_h(&cfg, &q, 0.2, &RenormParams::default()).unwrap().verdict);
        assert!(!check_d(&cfg, &q, 0.2, &RenormParams::default()).unwrap().verdict);
    }

    #[test]
    fn true_h_instances_pass_inclusion() {
        let params = RenormParams { exhaustive_side: 4, ..RenormParams::default() };
        let f = frame(60);
        let q = LatticeBox::cube(&[20, 20], 16).unwrap();
        for seed in 0..40 {
            let cfg = BondConfig::sample(&f, 0.85, seed).unwrap();
            let h = check_h(&cfg, &q, 0.4, &params).unwrap();
            if h.verdict {
                assert!(h.sub["inclusion"]);
            }
        }
    }

    #[test]
    fn d_rejects_detours() {
        let f = frame(40);
        let q = LatticeBox::cube(&[12, 12], 12).unwrap();
        let params = RenormParams { c_h: Some(1.05), ..RenormParams::default() };
        let cfg = BondConfig::sample(&f, 1.0, 0).unwrap();
        let d = check_d(&cfg, &q, 0.2, &params).unwrap();
        assert!(!d.verdict);
        assert!(d.counts["max_ratio"] > 1.05);
    }

    #[test]
    fn phi_field_all_ones_at_full_density() {
        let cfg = BondConfig::sample(&frame(80), 1.0, 0).unwrap();
        let field = macro_field(&cfg, 17, MacroKind::Phi, &RenormParams::default(), Exec::Sequential).unwrap();
        assert!(field.available() > 0);
        assert_eq!(field.marginal(), Some(1.0));
        assert!(field.bits.iter().any(|b| b.is_none()));
    }

    #[test]
    fn psi_field_all_ones_at_full_density() {
        let cfg = BondConfig::sample(&frame(30), 1.0, 0).unwrap();
        let field = macro_field(&cfg, 3, MacroKind::Psi, &RenormParams::default(), Exec::Parallel).unwrap();
        assert_eq!(field.marginal(), Some(1.0));
    }

    #[test]
    fn independence_of_separated_bits() {
        let params = RenormParams::default();
        let tests: Vec<IndependenceTest> = (0..30)
            .map(|seed| {
                let cfg = BondConfig::sample(&frame(60), 0.6, seed).unwrap();
                macro_field(&cfg, 5, MacroKind::Phi, &params, Exec::Parallel).unwrap().independence(3)
            })
            .collect();
        let merged = IndependenceTest::merge(&tests);
        assert!(merged.pairs > 1000);
        assert!(merged.p_value > 0.001, "{merged:?}");
    }

    #[test]
    fn contingency_statistics() {
        let t = IndependenceTest::from_table([[25, 25], [25, 25]]);
        assert_eq!(t.chi2, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let t = IndependenceTest::from_table([[50, 0], [0, 50]]);
        assert!((t.correlation - 1.0).abs() < 1e-12);
        assert!((t.chi2 - 100.0).abs() < 1e-9);
        assert!(t.p_value < 1e-6);
    }
}
