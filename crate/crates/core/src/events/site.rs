use rand::Rng;
use serde::{Deserialize, Serialize};

use super::local::LocalGraph;
use super::{EventKind, EventReport};
use crate::cluster::{offsets, Adjacency};
use crate::error::{invalid, Result};
use crate::percolation::{LatticeBox, SiteConfig};
use crate::rng::{derive_seed, stream, tag};

/// `beta = 1 - 2/(1 + d)`.
pub fn beta(d: usize) -> f64 {
    1.0 - 2.0 / (1.0 + d as f64)
}

/// `K(Q, lambda)`: the largest open `Q`-cluster crosses `Q` and fills more
/// than a fraction `lambda` of it.
pub fn check_k(cfg: &SiteConfig, q: &LatticeBox, lambda: f64) -> Result<EventReport> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(invalid("lambda must lie in [0, 1)"));
    }
    let lg = LocalGraph::site(cfg, q)?;
    let labels = lg.label();
    let mut report = EventReport::new(EventKind::K, q);
    report.cost = lg.len() as u64;
    let Some(id) = labels.largest() else {
        report.sub.insert("crossing".into(), false);
        report.counts.insert("density".into(), 0.0);
        return Ok(report);
    };
    let crossing = q.min_side() == 0 || labels.spans(id, q.dim());
    let density = labels.sizes[id as usize] as f64 / q.vertex_count() as f64;
    report.sub.insert("crossing".into(), crossing);
    report.sub.insert("dense".into(), density > lambda);
    report.counts.insert("density".into(), density);
    report.counts.insert("clusters".into(), labels.sizes.len() as f64);
    report.verdict = crossing && density > lambda;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FMode {
    /// Enumerates every `*`-connected set up to the size cap.
    Exact,
    /// Greedy and annealed growth from closed seeds. A `false` verdict comes
    /// with a violating set; a `true` verdict is heuristic.
    #[default]
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FOptions {
    pub mode: FMode,
    /// Largest set size examined. Defaults to `max(ceil(n^beta), 64)` in
    /// search mode and 12 in exact mode, clipped to `|Q|`.
    pub r_cap: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FOptions {
    fn default() -> Self {
        FOptions { mode: FMode::Search, r_cap: None, restarts: 10, seed: 0 }
    }
}

struct KingCube {
    q: LatticeBox,
    nbrs: Vec<Vec<usize>>,
}

impl KingCube {
    fn new(q: &LatticeBox) -> Self {
        let offs = offsets(q.dim(), Adjacency::Star);
        let mut c = vec![0; q.dim()];
        let mut y = vec![0; q.dim()];
        let nbrs = (0..q.vertex_count())
            .map(|r| {
                q.coords_into(r, &mut c);
                offs.iter()
                    .filter_map(|o| {
                        for a in 0..c.len() {
                            y[a] = c[a] + o[a];
                        }
                        q.index_of(&y)
                    })
                    .collect()
            })
            .collect();
        KingCube { q: q.clone(), nbrs }
    }
}

fn closed_under_shift(cfg: &SiteConfig, q: &LatticeBox, sigma: &[i32]) -> Vec<bool> {
    let mut c = vec![0; q.dim()];
    (0..q.vertex_count())
        .map(|r| {
            q.coords_into(r, &mut c);
            for (x, s) in c.iter_mut().zip(sigma) {
                *x += s;
            }
            !cfg.is_open_at(&c)
        })
        .collect()
}

fn shifts(d: usize) -> Vec<Vec<i32>> {
    let mut out = vec![vec![0; d]];
    for a in 0..d {
        for s in [1, -1] {
            let mut v = vec![0; d];
            v[a] = s;
            out.push(v);
        }
    }
    out
}

/// Smallest closed count that violates `|A ∩ O_sigma| >= (1 - eps)|A|` at
/// size `r`.
fn threshold(eps: f64, r: usize) -> usize {
    (eps * r as f64).floor() as usize + 1
}

struct Enumerator<'a> {
    king: &'a KingCube,
    closed: &'a [bool],
    root: usize,
    r: usize,
    t: usize,
    seen: Vec<bool>,
    set: Vec<usize>,
    visited: u64,
}

impl Enumerator<'_> {
    fn run(&mut self, untried: Vec<usize>, c: usize) -> bool {
        let mut untried = untried;
        while let Some(u) = untried.pop() {
            self.visited += 1;
            self.set.push(u);
            let c2 = c + self.closed[u] as usize;
            if self.set.len() == self.r {
                if c2 >= self.t {
                    return true;
                }
            } else if c2 + (self.r - self.set.len()) >= self.t {
                let mut fresh = Vec::new();
                for &w in &self.king.nbrs[u] {
                    if w > self.root && !self.seen[w] {
                        self.seen[w] = true;
                        fresh.push(w);
                    }
                }
                let mut next = untried.clone();
                next.extend_from_slice(&fresh);
                if self.run(next, c2) {
                    return true;
                }
                for w in fresh {
                    self.seen[w] = false;
                }
            }
            self.set.pop();
        }
        false
    }
}

fn exact_violation(king: &KingCube, closed: &[bool], r: usize, t: usize, visited: &mut u64) -> Option<Vec<usize>> {
    let n = closed.len();
    for root in 0..n {
        let mut e = Enumerator { king, closed, root, r, t, seen: vec![false; n], set: Vec::new(), visited: 0 };
        e.seen[root] = true;
        let found = e.run(vec![root], 0);
        *visited += e.visited;
        if found {
            return Some(e.set);
        }
    }
    None
}

fn grow_violation(
    king: &KingCube,
    closed: &[bool],
    eps: f64,
    r_min: usize,
    r_cap: usize,
    noise: Option<&mut rand_chacha::ChaCha8Rng>,
) -> Option<Vec<usize>> {
    let q = &king.q;
    let d = q.dim();
    let n = closed.len();
    let closed_pts: Vec<Vec<i32>> = (0..n).filter(|&r| closed[r]).map(|r| q.coords_of(r)).collect();
    let mut rng = noise;
    for seed in (0..n).filter(|&r| closed[r]) {
        let mut in_set = vec![false; n];
        let mut frontier = vec![false; n];
        let mut set = vec![seed];
        in_set[seed] = true;
        let mut used = vec![false; closed_pts.len()];
        let mut count = 1usize;
        let mut c = vec![0; d];
        loop {
            let s = set.len();
            if s >= r_min && count as f64 > eps * s as f64 {
                return Some(set);
            }
            if s >= r_cap {
                break;
            }
            let last = *set.last().expect("nonempty");
            for &w in &king.nbrs[last] {
                if !in_set[w] {
                    frontier[w] = true;
                }
            }
            for (i, p) in closed_pts.iter().enumerate() {
                used[i] = in_set[q.index_of(p).expect("inside cube")];
            }
            let mut best: Option<(usize, (i64, i64, u64))> = None;
            for w in (0..n).filter(|&w| frontier[w] && !in_set[w]) {
                q.coords_into(w, &mut c);
                let gap = closed_pts
                    .iter()
                    .zip(&used)
                    .filter(|(_, &u)| !u)
                    .map(|(p, _)| p.iter().zip(&c).map(|(a, b)| (a - b).abs()).max().unwrap_or(0))
                    .min()
                    .unwrap_or(0) as i64;
                let jitter = match rng.as_deref_mut() {
                    Some(g) => g.random::<u64>(),
                    None => 0,
                };
                let mut score = (closed[w] as i64, -gap, u64::MAX - jitter);
                if let Some(g) = rng.as_deref_mut() {
                    if g.random::<f64>() < 0.1 {
                        score.0 = 0;
                        score.1 = i64::MIN / 2 + g.random_range(0..1000);
                    }
                }
                if best.map(|(_, b)| score > b).unwrap_or(true) {
                    best = Some((w, score));
                }
            }
            let Some((w, _)) = best else { break };
            in_set[w] = true;
            count += closed[w] as usize;
            set.push(w);
        }
    }
    None
}

/// `F(Q, eps)`: every `*`-connected `A ⊆ Q` with `|A| >= s(Q)^beta` keeps
/// `|A ∩ O_sigma| >= (1 - eps)|A|` for every shift `sigma` in `{0, ±e_a}`.
/// Sites shifted out of the configuration box count as closed.
pub fn check_f(cfg: &SiteConfig, q: &LatticeBox, eps: f64, opts: &FOptions) -> Result<EventReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("eps must lie in (0, 1)"));
    }
    let d = q.dim();
    let size = q.vertex_count();
    let n = q.min_side().max(0) as f64;
    let r_min = (n.powf(beta(d)).ceil() as usize).max(1);
    let r_cap = opts
        .r_cap
        .unwrap_or(match opts.mode {
            FMode::Exact => 12,
            FMode::Search => r_min.max(64),
        })
        .min(size);
    let mut report = EventReport::new(EventKind::F, q);
    report.verdict = true;
    report.counts.insert("r_min".into(), r_min as f64);
    report.counts.insert("r_cap".into(), r_cap as f64);
    let king = KingCube::new(q);
    let mut complete = true;
    let mut heuristic = false;
    let mut cost = 0u64;
    for sigma in shifts(d) {
        let closed = closed_under_shift(cfg, q, &sigma);
        let total = closed.iter().filter(|&&b| b).count();
        if (total as f64) <= eps * r_min as f64 {
            continue;
        }
        let witness = match opts.mode {
            FMode::Exact => {
                let mut found = None;
                for r in r_min..=r_cap {
                    let t = threshold(eps, r);
                    if total < t {
                        continue;
                    }
                    if let Some(w) = exact_violation(&king, &closed, r, t, &mut cost) {
                        found = Some(w);
                        break;
                    }
                }
                if found.is_none() && r_cap < size {
                    complete = false;
                }
                found
            }
            FMode::Search => {
                let mut found = grow_violation(&king, &closed, eps, r_min, r_cap, None);
                for k in 0..opts.restarts {
                    if found.is_some() {
                        break;
                    }
                    let mut g = stream(derive_seed(opts.seed, &[tag("anneal"), k as u64]));
                    found = grow_violation(&king, &closed, eps, r_min, r_cap, Some(&mut g));
                }
                if found.is_none() {
                    heuristic = true;
                }
                found
            }
        };
        if let Some(w) = witness {
            report.verdict = false;
            report.witness = w.iter().map(|&r| q.coords_of(r)).collect();
            report.counts.insert("witness_closed".into(), w.iter().filter(|&&r| closed[r]).count() as f64);
            report.shift = Some(sigma);
            heuristic = false;
            complete = true;
            break;
        }
    }
    report.heuristic = heuristic;
    report.sub.insert("complete".into(), complete && !heuristic);
    report.cost = cost;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::SiteConfig;
    use proptest::prelude::*;

    fn cube(side: i32) -> LatticeBox {
        LatticeBox::cube(&[0, 0], side).unwrap()
    }

    #[test]
    fn beta_values() {
        assert!((beta(2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((beta(3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn k_on_extreme_fields() {
        let b = cube(9);
        let full = SiteConfig::from_predicate(&b, |_| true);
        assert!(check_k(&full, &b, 7.0 / 8.0).unwrap().verdict);
        let empty = SiteConfig::from_predicate(&b, |_| false);
        assert!(!check_k(&empty, &b, 7.0 / 8.0).unwrap().verdict);
    }

    #[test]
    fn k_needs_density() {
        let b = cube(9);
        let half = SiteConfig::from_predicate(&b, |x| x[0] <= 4 || x[1] == 0);
        let r = check_k(&half, &b, 7.0 / 8.0).unwrap();
        assert!(r.sub["crossing"]);
        assert!(!r.verdict);
    }

    #[test]
    fn f_on_extreme_fields() {
        let frame = cube(8);
        let q = LatticeBox::cube(&[1, 1], 6).unwrap();
        let full = SiteConfig::from_predicate(&frame, |_| true);
        for mode in [FMode::Exact, FMode::Search] {
            let opts = FOptions { mode, r_cap: Some(8), ..Default::default() };
            assert!(check_f(&full, &q, 0.25, &opts).unwrap().verdict);
        }
        let empty = SiteConfig::from_predicate(&frame, |_| false);
        let r = check_f(&empty, &q, 0.5, &FOptions { mode: FMode::Exact, r_cap: Some(8), ..Default::default() }).unwrap();
        assert!(!r.verdict);
        assert_eq!(r.witness.len(), 2);
    }

    #[test]
    fn f_lenient_eps_passes_with_one_open_site_per_set() {
        let frame = cube(8);
        let q = LatticeBox::cube(&[1, 1], 6).unwrap();
        let cfg = SiteConfig::from_predicate(&frame, |x| x[0] % 2 == 0 || x[1] % 2 == 0);
        let r = check_f(&cfg, &q, 0.99, &FOptions { mode: FMode::Exact, r_cap: Some(6), ..Default::default() }).unwrap();
        assert!(r.verdict);
    }

    #[test]
    fn exact_and_search_agree_on_random_fields() {
        let frame = cube(8);
        let q = LatticeBox::cube(&[1, 1], 6).unwrap();
        let mut disagreements = 0;
        for seed in 0..200 {
            let cfg = SiteConfig::sample(&frame, 0.8, seed).unwrap();
            let e = check_f(&cfg, &q, 0.25, &FOptions { mode: FMode::Exact, r_cap: Some(8), ..Default::default() }).unwrap();
            let s = check_f(&cfg, &q, 0.25, &FOptions { mode: FMode::Search, r_cap: Some(8), ..Default::default() }).unwrap();
            disagreements += (e.verdict != s.verdict) as usize;
            if !s.verdict {
                assert!(!e.verdict, "search found a violation that exact enumeration missed");
            }
        }
        assert_eq!(disagreements, 0);
    }

    #[test]
    fn exact_enumeration_counts_king_animals() {
        let q = LatticeBox::cube(&[0, 0], 5).unwrap();
        let king = KingCube::new(&q);
        let closed = vec![false; q.vertex_count()];
        let mut count = 0usize;
        for root in 0..closed.len() {
            let mut e = Enumerator { king: &king, closed: &closed, root, r: 2, t: 0, seen: vec![false; closed.len()], set: Vec::new(), visited: 0 };
            e.seen[root] = true;
            count += count_sets(&mut e, vec![root]);
        }
        // pairs of king-adjacent cells in a 6x6 grid: 2*6*5 orthogonal + 2*5*5 diagonal
        assert_eq!(count, 110);
    }

    fn count_sets(e: &mut Enumerator<'_>, untried: Vec<usize>) -> usize {
        let mut untried = untried;
        let mut total = 0;
        while let Some(u) = untried.pop() {
            e.set.push(u);
            if e.set.len() == e.r {
                total += 1;
            } else {
                let mut fresh = Vec::new();
                for &w in &e.king.nbrs[u] {
                    if w > e.root && !e.seen[w] {
                        e.seen[w] = true;
                        fresh.push(w);
                    }
                }
                let mut next = untried.clone();
                next.extend_from_slice(&fresh);
                total += count_sets(e, next);
                for w in fresh {
                    e.seen[w] = false;
                }
            }
            e.set.pop();
        }
        total
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]
        #[test]
        fn increasing_events_are_monotone_in_q(seed in any::<u64>(), q1 in 0.5f64..0.95, dq in 0.0f64..0.05) {
            let frame = cube(9);
            let q = LatticeBox::cube(&[1, 1], 7).unwrap();
            let lo = SiteConfig::sample(&frame, q1, seed).unwrap();
            let hi = SiteConfig::sample(&frame, q1 + dq, seed).unwrap();
            if check_k(&lo, &frame, 0.6).unwrap().verdict {
                prop_assert!(check_k(&hi, &frame, 0.6).unwrap().verdict);
            }
            let opts = FOptions { mode: FMode::Exact, r_cap: Some(6), ..Default::default() };
            if check_f(&lo, &q, 0.4, &opts).unwrap().verdict {
                prop_assert!(check_f(&hi, &q, 0.4, &opts).unwrap().verdict);
            }
        }
    }
}
