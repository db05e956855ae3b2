//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with the measured quantities.

use std::io::Write as _;
use std::time::Instant;

use perc_cli::spec::{HarnackSpec, Kind};
use perc_cli::{run_experiment, ExperimentSpec, RunOptions};
use perc_core::cluster::{induced_graph, VertexSet, WeightedSubgraph};
use perc_core::events::{estimate_tail, EventKind, TailSpec};
use perc_core::harmonic::{oscillation_decay, pendant_cube_graph, random_boundary_data, Ball};
use perc_core::inequality::{
    classify_very_good, isoperimetry, poincare_constant, rayleigh_ratio, CenterPolicy, GoodnessConstants, IsoMode,
    Verdict, VeryGoodOptions,
};
use perc_core::par::Exec;
use perc_core::percolation::{BondConfig, LatticeBox};
use perc_core::rng::{derive_seed, stream, tag};
use perc_core::verify::{
    axis_targets, estimate_s_x, fit_chemical_constant, fit_gaussian_envelope, fit_ondiagonal, reference_from_kernel,
    GaussianOptions, LineFit, Metric, PairSpec, Reference, SxOptions,
};
use perc_core::walk::{
    cluster_graph, exact_heat_kernel, exit_budget, exit_time_stats, heat_kernel_rows, lattice_oracle, msd,
    nash_functionals, Boundary, HeatKernel, MsdMode,
};
use rand::Rng;

fn verdict(n: u32, pass: bool, detail: String) {
    let line = format!("acceptance criterion {n:>2}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn full_box(d: usize, radius: i32) -> (WeightedSubgraph, usize) {
    let bx = LatticeBox::centered(&vec![0; d], radius).unwrap();
    let cfg = BondConfig::from_predicate(&bx, |_, _| true);
    let g = cluster_graph(&cfg, &bx).unwrap();
    let x = g.index_of(&vec![0; d]).unwrap();
    (g, x)
}

/// The chemical ball `{|y|_1 <= r}` of the full lattice.
fn diamond(r: i32) -> (WeightedSubgraph, usize) {
    let bx = LatticeBox::centered(&[0, 0], r).unwrap();
    let cfg = BondConfig::from_predicate(&bx, |_, _| true);
    let pts: Vec<Vec<i32>> = bx.points().filter(|p| p[0].abs() + p[1].abs() <= r).collect();
    let set = VertexSet::from_points(&bx, &pts).unwrap();
    let g = induced_graph((&cfg).into(), &set).unwrap();
    let x = g.index_of(&[0, 0]).unwrap();
    (g, x)
}

fn nearest(g: &WeightedSubgraph, target: &[i32]) -> usize {
    perc_cli::run::nearest_vertex(g, target).unwrap()
}

/// Cluster graph of a `side x side` box at density `p` and its vertex
/// nearest the centre.
fn cluster_box(side: i32, p: f64, seed: u64) -> (WeightedSubgraph, usize) {
    let bx = LatticeBox::new(vec![0, 0], vec![side - 1, side - 1]).unwrap();
    let cfg = BondConfig::sample(&bx, p, seed).unwrap();
    let g = cluster_graph(&cfg, &bx).unwrap();
    let x = nearest(&g, &bx.center_vertex());
    (g, x)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp()).collect()
}

fn loglog_slope(times: &[f64], values: &[f64], lo: f64, hi: f64) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo - 1e-9 && **t <= hi + 1e-9)
        .map(|(t, v)| (t.ln(), v.ln()))
        .unzip();
    LineFit::new(&xs, &ys).unwrap().slope
}

#[test]
fn criterion_01_exact_kernel_invariants() {
    let start = Instant::now();
    let times = [0.5, 1.0, 1.5, 3.0];
    let mut worst = [0.0f64; 4];
    let mut clusters = 0;
    let mut seed = 0;
    while clusters < 20 {
        seed += 1;
        let (g, _) = cluster_box(30, 0.6, derive_seed(1, &[seed]));
        if g.len() > 500 || g.len() < 20 {
            continue;
        }
        clusters += 1;
        let k = exact_heat_kernel(&g, &times, Boundary::None).unwrap();
        let mu = g.mu0();
        let n = g.len();
        let m: Vec<_> = (0..times.len()).map(|ti| k.matrix(ti).unwrap()).collect();
        for ti in 0..times.len() {
            for x in 0..n {
                let mut mass = 0.0;
                for y in 0..n {
                    let q = m[ti][(x, y)];
                    worst[0] = worst[0].max((q - m[ti][(y, x)]).abs());
                    worst[2] = worst[2].max(-q);
                    mass += q * mu[y];
                }
                worst[1] = worst[1].max((mass - 1.0).abs());
            }
        }
        for (a, b, c) in [(0, 1, 2), (1, 2, 3), (2, 2, 3)] {
            let (ta, tb, tc) = (times[a], times[b], times[c]);
            if (ta + tb - tc).abs() > 1e-12 {
                continue;
            }
            for x in 0..n {
                for y in 0..n {
                    let ck: f64 = (0..n).map(|z| m[a][(x, z)] * m[b][(z, y)] * mu[z]).sum();
                    worst[3] = worst[3].max((ck - m[c][(x, y)]).abs());
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst.iter().all(|&w| w <= 1e-10) && secs < 60.0;
    verdict(
        1,
        pass,
        format!(
            "{clusters} clusters; max |asym| {:.1e}, |mass-1| {:.1e}, negativity {:.1e}, |CK| {:.1e}; {secs:.1}s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
}

#[test]
fn criterion_02_analytic_oracles() {
    let edge = WeightedSubgraph::from_parts(vec![vec![0], vec![1]], vec![(0, 1, 1.0)], None).unwrap();
    let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.25).collect();
    let k = exact_heat_kernel(&edge, &times, Boundary::None).unwrap();
    let mut edge_err = 0.0f64;
    for (ti, &t) in times.iter().enumerate() {
        let e = (-2.0 * t).exp();
        edge_err = edge_err.max((k.q(ti, 0, 0) - (1.0 + e) / 2.0).abs()).max((k.q(ti, 0, 1) - (1.0 - e) / 2.0).abs());
    }

    let (g, c) = full_box(2, 20);
    let ot = [0.5, 1.0, 2.0, 3.0, 4.0];
    let kk = exact_heat_kernel(&g, &ot, Boundary::None).unwrap();
    let mut oracle_ok = true;
    let mut oracle_err = 0.0f64;
    let mut leak_max = 0.0f64;
    for (ti, &t) in ot.iter().enumerate() {
        let leak = exit_budget(&g, c, t).unwrap();
        leak_max = leak_max.max(leak);
        for y in 0..g.len() {
            let p = g.point(y);
            if p[0].abs() + p[1].abs() > 8 {
                continue;
            }
            let boxed = kk.q(ti, c, y) * g.mu0()[y];
            let err = (boxed - lattice_oracle(2, t, p).unwrap()).abs();
            oracle_err = oracle_err.max(err);
            oracle_ok &= err <= leak + 1e-12;
        }
    }

    let (g, c) = full_box(2, 5);
    let et = [0.1, 0.5, 1.0, 2.0, 3.0];
    let trials = 100_000;
    let ex = exit_time_stats(&g, c, 1, trials, &et, 17, Exec::Parallel).unwrap();
    let exit_ok = et.iter().enumerate().all(|(i, &t)| {
        let want = 1.0 - (-t).exp();
        ex.lo[i] <= want && want <= ex.hi[i]
    });
    let pass = edge_err <= 1e-12 && oracle_ok && exit_ok;
    verdict(
        2,
        pass,
        format!(
            "edge err {edge_err:.1e}; oracle err {oracle_err:.1e} (leak bound {leak_max:.1e}); exit law inside Wilson CI at {trials} trials: {exit_ok}"
        ),
    );
}

/// Random connected vertex sets grown on bond configurations.
fn random_connected_subgraphs(count: usize, max: usize, seed: u64) -> Vec<WeightedSubgraph> {
    let mut out = Vec::new();
    let bx = LatticeBox::new(vec![0, 0], vec![7, 7]).unwrap();
    let mut i = 0u64;
    while out.len() < count {
        i += 1;
        let cfg = BondConfig::sample(&bx, 0.7, derive_seed(seed, &[i])).unwrap();
        let g = cluster_graph(&cfg, &bx).unwrap();
        let mut rng = stream(derive_seed(seed, &[tag("grow"), i]));
        let size = rng.random_range(2..=max).min(g.len());
        if size < 2 {
            continue;
        }
        let mut keep = vec![false; g.len()];
        let mut members = vec![rng.random_range(0..g.len())];
        keep[members[0]] = true;
        while members.len() < size {
            let u = members[rng.random_range(0..members.len())];
            let nb = g.neighbors(u);
            let (v, _) = nb[rng.random_range(0..nb.len())];
            if !keep[v as usize] {
                keep[v as usize] = true;
                members.push(v as usize);
            }
        }
        let (h, _) = g.induced(&keep);
        if h.is_connected() {
            out.push(h);
        }
    }
    out
}

/// Best Rayleigh ratio found by a (1+1) evolution strategy with the
/// one-fifth success rule over `budget` random functions.
fn rayleigh_search(h: &WeightedSubgraph, budget: usize, seed: u64) -> f64 {
    let n = h.len();
    let inner = vec![true; n];
    let mut rng = stream(seed);
    let mut best: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut val = rayleigh_ratio(h, &inner, None, &best);
    let mut sigma = 0.5;
    for _ in 1..budget {
        let cand: Vec<f64> =
            best.iter().map(|v| v + sigma * (rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>() - 1.5) * 2.0).collect();
        let r = rayleigh_ratio(h, &inner, None, &cand);
        if r > val {
            val = r;
            let norm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
            best = cand.iter().map(|v| v / norm).collect();
            sigma *= 1.5;
        } else {
            sigma *= 1.5f64.powf(-0.25);
        }
    }
    val
}

#[test]
fn criterion_03_inequality_suite() {
    let subs = random_connected_subgraphs(200, 14, 3);
    let mut violations = 0;
    for h in &subs {
        let r = isoperimetry(h, IsoMode::Exact).unwrap();
        let tol = 1e-12;
        let ok = r.exact
            && r.i_h >= 2.0 / r.mu0_total - tol
            && r.i_h <= r.i_star + tol
            && r.i_star <= 2.0 * r.i_h + tol
            && r.i_h <= r.j_h + tol
            && r.j_h <= 2.0 * r.i_h + tol;
        violations += !ok as usize;
    }
    let small: Vec<&WeightedSubgraph> = subs.iter().filter(|h| h.len() <= 10 && h.len() >= 2).take(40).collect();
    let mut gap = 0.0f64;
    for (i, h) in small.iter().enumerate() {
        let p = poincare_constant(h, None, None).unwrap().constant;
        let s = rayleigh_search(h, 10_000, derive_seed(5, &[i as u64]));
        gap = gap.max((p - s).abs());
    }
    let pass = violations == 0 && gap <= 1e-6;
    verdict(
        3,
        pass,
        format!(
            "{} subgraphs, {violations} inequality violations; {} Poincare constants vs 10^4-sample search, max gap {gap:.1e}",
            subs.len(),
            small.len()
        ),
    );
}

struct DecaySetup {
    g: WeightedSubgraph,
    x: usize,
    times: Vec<f64>,
    k: HeatKernel,
}

fn decay_setup(p1: bool) -> DecaySetup {
    let (g, x) = if p1 { diamond(60) } else { cluster_box(200, 0.6, 404) };
    let times = log_grid(4.0, 100.0, 15);
    let k = heat_kernel_rows(&g, &[x], &times, Boundary::None, 1e-12, Exec::Parallel).unwrap();
    DecaySetup { g, x, times, k }
}

#[test]
fn criterion_04_on_diagonal_decay() {
    let start = Instant::now();
    let a = decay_setup(true);
    let fa = fit_ondiagonal(&a.g, &a.k, a.x, (4.0, 100.0)).unwrap();
    let b = decay_setup(false);
    let fb = fit_ondiagonal(&b.g, &b.k, b.x, (4.0, 100.0)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (fa.fit.slope + 1.0).abs() <= 0.05 && (fb.fit.slope + 1.0).abs() <= 0.15 && secs < 600.0;
    verdict(
        4,
        pass,
        format!(
            "p=1 ball R=60 slope {:.4}; p=0.6 200x200 box slope {:.4} ({} vertices); {secs:.1}s",
            fa.fit.slope,
            fb.fit.slope,
            b.g.len()
        ),
    );
}

#[test]
fn criterion_05_nash_moment_growth() {
    let a = decay_setup(true);
    let b = decay_setup(false);
    let na = nash_functionals(&a.g, a.x, &a.times).unwrap();
    let nb = nash_functionals(&b.g, b.x, &b.times).unwrap();
    let sa = loglog_slope(&a.times, &na.m, 4.0, 100.0);
    let sb = loglog_slope(&b.times, &nb.m, 4.0, 100.0);
    let mono = |q: &[f64]| q.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let fine = log_grid(0.05, 100.0, 60);
    let qa = nash_functionals(&a.g, a.x, &fine).unwrap();
    let qb = nash_functionals(&b.g, b.x, &fine).unwrap();
    let monotone = mono(&na.q) && mono(&nb.q) && mono(&qa.q) && mono(&qb.q);
    let pass = (sa - 0.5).abs() <= 0.05 && (sb - 0.5).abs() <= 0.10 && monotone;
    verdict(5, pass, format!("M slope p=1 {sa:.4}, p=0.6 {sb:.4}; Q nondecreasing on both grids: {monotone}"));
}

const ONSET_DISTS: [u32; 7] = [0, 1, 2, 4, 6, 8, 12];

fn onset_reference(times: &[f64]) -> Reference {
    let (lat, lx) = full_box(2, 60);
    let lk = heat_kernel_rows(&lat, &[lx], times, Boundary::None, 1e-12, Exec::Parallel).unwrap();
    reference_from_kernel(&lat, &lk, lx, &ONSET_DISTS, 4.0).unwrap()
}

fn onset_times() -> Vec<f64> {
    log_grid(1.0, 64.0, 13)
}

#[test]
fn criterion_06_gaussian_envelope() {
    let (g, x) = diamond(60);
    let times = log_grid(4.0, 100.0, 15);
    let k = heat_kernel_rows(&g, &[x], &times, Boundary::None, 1e-12, Exec::Parallel).unwrap();
    let dists: Vec<u32> = (0..=40).collect();
    let opts = GaussianOptions { metric: Metric::L1, t_min: 4.0, dist_frac: 1.0, targets: Some(axis_targets(&g, x, &dists)) };
    let fit = fit_gaussian_envelope(&g, &k, x, &opts).unwrap();
    let finite = fit.constants.values().all(|c| c.is_finite() && *c > 0.0);
    let p1_ok = finite && fit.fit.r2 >= 0.98 && fit.violations.is_empty();

    let times = onset_times();
    let reference = onset_reference(&times);
    let mut finite_sx = 0;
    let mut post_onset_violations = 0;
    let mut values = Vec::new();
    for c in 0..10u64 {
        let (g, x) = cluster_box(200, 0.6, derive_seed(66, &[c]));
        let opts = SxOptions {
            times: times.clone(),
            dists: ONSET_DISTS.to_vec(),
            reference: reference.clone(),
            budget: 1e-3,
            metric: Metric::L1,
        };
        let est = estimate_s_x(&g, x, &opts, Exec::Parallel).unwrap();
        if let Some(sx) = est.sx {
            finite_sx += 1;
            post_onset_violations += est.violations.iter().filter(|v| v.t >= sx).count();
        }
        values.push(est.sx);
    }
    let pass = p1_ok && finite_sx >= 9 && post_onset_violations == 0;
    verdict(
        6,
        pass,
        format!(
            "p=1: R^2 {:.4}, c=({:.3},{:.3},{:.3},{:.3}), {} violations; p=0.6: S_x finite {finite_sx}/10 {values:?}, {post_onset_violations} violations after onset",
            fit.fit.r2,
            fit.constants["c1"],
            fit.constants["c2"],
            fit.constants["c3"],
            fit.constants["c4"],
            fit.violations.len()
        ),
    );
}

#[test]
fn criterion_07_exit_time_bound() {
    let (g, x) = full_box(2, 40);
    let mut zs = Vec::new();
    let mut ys = Vec::new();
    for rho in [10u32, 15, 20, 25, 30] {
        let r2 = (rho * rho) as f64;
        let times: Vec<f64> = [12.0, 10.0, 8.0, 7.0, 6.0, 5.0, 4.0].iter().map(|k| r2 / k).collect();
        let ex = exit_time_stats(&g, x, rho, 20_000, &times, derive_seed(7, &[rho as u64]), Exec::Parallel).unwrap();
        for (i, &t) in times.iter().enumerate() {
            if ex.exits[i] >= 20 {
                zs.push(r2 / t);
                ys.push(ex.cdf[i].ln());
            }
        }
    }
    let fit = LineFit::new(&zs, &ys).unwrap();
    let pass = fit.r2 >= 0.9 && fit.slope < 0.0;
    verdict(
        7,
        pass,
        format!("{} points over rho in 10..=30, t <= rho^2/4: slope {:.4}, R^2 {:.4}", fit.points, fit.slope, fit.r2),
    );
}

fn tail(event: EventKind, p: f64, trials: usize) -> perc_core::events::TailEstimate {
    let spec = TailSpec { event, d: 2, sizes: vec![8, 16, 32], trials, p, seed: derive_seed(8, &[tag(event.name())]), ..Default::default() };
    estimate_tail(&spec, Exec::Parallel).unwrap()
}

#[test]
fn criterion_08_event_tails() {
    let mut parts = Vec::new();
    let mut pass = true;
    for (event, p) in [(EventKind::K, 0.95), (EventKind::H, 0.6), (EventKind::D, 0.6), (EventKind::L, 0.6)] {
        let est = tail(event, p, 1000);
        let freqs: Vec<String> = est.rows.iter().map(|r| format!("{:.3}", r.frequency)).collect();
        pass &= est.monotone;
        let at_one = tail(event, 1.0, 100);
        let zero = at_one.rows.iter().all(|r| r.failures == 0);
        pass &= zero;
        parts.push(format!("{} [{}] zero at 1: {zero}", event.name(), freqs.join(", ")));
    }
    verdict(8, pass, parts.join("; "));
}

#[test]
fn criterion_09_chemical_distance() {
    let bx = LatticeBox::new(vec![0, 0], vec![59, 59]).unwrap();
    let full = vec![BondConfig::from_predicate(&bx, |_, _| true)];
    let spec = PairSpec { pairs_per_config: 10_000, min_sep: 1, max_sep: 25, quantile: 0.999, seed: 9 };
    let exact = fit_chemical_constant(&full, &bx, &spec, Exec::Parallel).unwrap();

    let quant = |side: i32| {
        let bx = LatticeBox::new(vec![0, 0], vec![side - 1, side - 1]).unwrap();
        let configs: Vec<BondConfig> =
            (0..40u64).map(|c| BondConfig::sample(&bx, 0.6, derive_seed(90, &[side as u64, c])).unwrap()).collect();
        let spec = PairSpec { pairs_per_config: 1000, min_sep: 1, max_sep: 10, quantile: 0.999, seed: 91 };
        fit_chemical_constant(&configs, &bx, &spec, Exec::Parallel).unwrap()
    };
    let q40 = quant(40);
    let q80 = quant(80);
    let rel = (q80.c_h / q40.c_h - 1.0).abs();
    let pass = exact.l1_exact && exact.pairs == 10_000 && rel <= 0.10;
    verdict(
        9,
        pass,
        format!(
            "p=1: {} pairs, l1 exact {}; p=0.6 99.9% ratio {:.3} (40) vs {:.3} (80), change {:.1}%",
            exact.pairs,
            exact.l1_exact,
            q40.c_h,
            q80.c_h,
            100.0 * rel
        ),
    );
}

struct HarnackRow {
    max_factor: f64,
    harnack: f64,
    mp: bool,
}

fn harnack_rows(g: &WeightedSubgraph, x: usize, seed: u64) -> Vec<HarnackRow> {
    [16u32, 32]
        .iter()
        .map(|&r| {
            let ball = Ball::new(g, x, r).unwrap();
            let data = random_boundary_data(ball.boundary.len(), 50, derive_seed(seed, &[r as u64]));
            let od = oscillation_decay(g, &ball, r / 2, &data, Exec::Parallel).unwrap();
            let h = od.harnack.iter().cloned().fold(0.0, f64::max);
            HarnackRow { max_factor: od.max, harnack: h, mp: od.maximum_principle }
        })
        .collect()
}

#[test]
fn criterion_10_harnack_and_oscillation() {
    let (g, x) = full_box(2, 40);
    let full = harnack_rows(&g, x, 10);

    let opts = VeryGoodOptions { centers: CenterPolicy::Sample(12), seed: 10, ..Default::default() };
    let k = GoodnessConstants::default();
    let side = 121;
    let bx = LatticeBox::new(vec![0, 0], vec![side - 1, side - 1]).unwrap();
    let mut perc = None;
    let mut tried = 0;
    for c in 0..20u64 {
        tried += 1;
        let cfg = BondConfig::sample(&bx, 0.6, derive_seed(100, &[c])).unwrap();
        let g = cluster_graph(&cfg, &bx).unwrap();
        let x = nearest(&g, &bx.center_vertex());
        let p = g.point(x).to_vec();
        let rep = classify_very_good((&cfg).into(), &bx, &p, 32, &k, &opts).unwrap();
        if rep.verdict >= Verdict::VeryGood {
            perc = Some(harnack_rows(&g, x, 11 + c));
            break;
        }
    }
    let Some(perc) = perc else {
        verdict(10, false, format!("no very good ball of radius 32 among {tried} configurations"));
        return;
    };
    let check = |rows: &[HarnackRow]| {
        let decay = rows.iter().all(|r| r.max_factor < 1.0);
        let mp = rows.iter().all(|r| r.mp);
        let ratio = rows[0].harnack.max(rows[1].harnack) / rows[0].harnack.min(rows[1].harnack);
        (decay && mp && ratio < 2.0, ratio)
    };
    let (a, ra) = check(&full);
    let (b, rb) = check(&perc);
    verdict(
        10,
        a && b,
        format!(
            "p=1: max factor {:.3}/{:.3}, Harnack {:.3}/{:.3} (x{ra:.2}); p=0.6 very good ball (config {tried}): max factor {:.3}/{:.3}, Harnack {:.3}/{:.3} (x{rb:.2})",
            full[0].max_factor, full[1].max_factor, full[0].harnack, full[1].harnack,
            perc[0].max_factor, perc[1].max_factor, perc[0].harnack, perc[1].harnack
        ),
    );
}

fn pendant_slope(d: usize) -> f64 {
    let radii = [4u32, 6, 8, 10];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &r in &radii {
        let pc = pendant_cube_graph(d, r, 10 * r).unwrap();
        xs.push((r as f64).ln());
        ys.push(pc.ratio.ln());
    }
    LineFit::new(&xs, &ys).unwrap().slope
}

#[test]
fn criterion_11_weighted_pi_counterexample() {
    let s3 = pendant_slope(3);
    let s2 = pendant_slope(2);
    let pass = (s3 - 1.0).abs() <= 0.3 && s2.abs() <= 0.3;
    verdict(11, pass, format!("d=3 slope {s3:.4}; d=2 slope {s2:.4}"));
}

#[test]
fn criterion_12_mean_square_displacement() {
    let (g, x) = full_box(2, 80);
    let times = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
    let m = msd(&g, x, &times, MsdMode::Exact, Exec::Parallel).unwrap();
    let err = times.iter().zip(&m.values).map(|(t, v)| (t - v).abs()).fold(0.0, f64::max);

    let times = onset_times();
    let reference = onset_reference(&times);
    let (g, x) = cluster_box(200, 0.6, derive_seed(66, &[0]));
    let est = estimate_s_x(
        &g,
        x,
        &SxOptions { times: times.clone(), dists: ONSET_DISTS.to_vec(), reference, budget: 1e-3, metric: Metric::L1 },
        Exec::Parallel,
    )
    .unwrap();
    let grid = log_grid(10.0, 100.0, 11);
    let band = match est.sx {
        Some(sx) => {
            let ts: Vec<f64> = grid.iter().cloned().filter(|&t| t >= sx).collect();
            let mm = msd(&g, x, &ts, MsdMode::Exact, Exec::Parallel).unwrap();
            let r: Vec<f64> = mm.values.iter().zip(&ts).map(|(v, t)| v / t).collect();
            let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
            Some((ts.len(), lo, hi))
        }
        None => None,
    };
    let band_ok = matches!(band, Some((n, lo, hi)) if n > 0 && hi / lo <= 3.0);
    let pass = err <= 1e-10 && band_ok;
    verdict(
        12,
        pass,
        format!("p=1 max |msd - t| {err:.1e}; p=0.6 onset {:?}, msd/t over t in [10,100] after onset (points, min, max) {band:?}", est.sx),
    );
}

#[test]
fn criterion_13_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut specs = Vec::new();
    let base = |kind: Kind| {
        let mut s = ExperimentSpec { kind: Some(kind), seed: 2024, ..Default::default() };
        s.lattice.p = 0.65;
        s.lattice.side = 31;
        s
    };
    specs.push(base(Kind::Sample));
    let mut g = base(Kind::Geometry);
    g.lattice.configs = 3;
    g.geometry.pairs_per_config = 100;
    specs.push(g);
    let mut i = base(Kind::Inequalities);
    i.lattice.configs = 4;
    specs.push(i);
    let mut e = base(Kind::Events);
    e.events.sizes = vec![4, 8];
    e.events.trials = 100;
    e.lattice.p = 0.95;
    specs.push(e);
    let mut k = base(Kind::Kernel);
    k.kernel.times.count = 6;
    k.kernel.msd_trials = 500;
    k.kernel.exit_radii = vec![3];
    k.kernel.exit_trials = 500;
    specs.push(k);
    let mut b = base(Kind::Bounds);
    b.lattice.p = 1.0;
    b.kernel.times.hi = 50.0;
    b.kernel.times.count = 8;
    b.bounds.window = [4.0, 50.0];
    b.bounds.max_dist = 10;
    specs.push(b);
    let mut h = base(Kind::Harnack);
    h.harnack = HarnackSpec { radii: vec![4, 6], datasets: 5 };
    specs.push(h);

    let mut compared = 0;
    let mut mismatched = Vec::new();
    for s in &specs {
        let name = s.kind.unwrap().name();
        let mut runs = Vec::new();
        for (tag, threads) in [("a", 1), ("b", 3), ("c", 1)] {
            let mut s = s.clone();
            s.out = Some(tmp.path().join(format!("{name}-{tag}")));
            let (dir, m) = run_experiment(&s, RunOptions { threads: Some(threads) }).unwrap();
            let files: Vec<(String, Vec<u8>)> =
                m.files.iter().map(|f| (f.path.clone(), std::fs::read(dir.join(&f.path)).unwrap())).collect();
            runs.push(files);
        }
        compared += runs[0].len();
        if runs[0] != runs[1] || runs[0] != runs[2] {
            mismatched.push(name);
        }
    }
    let pass = mismatched.is_empty();
    verdict(
        13,
        pass,
        format!("{} experiment kinds, {compared} artifacts compared over 3 runs at 1 and 3 threads; mismatches {mismatched:?}", specs.len()),
    );
}
