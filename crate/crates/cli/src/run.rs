//! Experiment pipelines, one per kind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use perc_core::cluster::{chemical_ball, induced_graph, largest_open_cluster, WeightedSubgraph};
use perc_core::events::{estimate_tail, TailSpec};
use perc_core::harmonic::{oscillation_decay, random_boundary_data, Ball};
use perc_core::inequality::{
    classify_very_good, isoperimetry_with, poincare_constant, IsoMode, IsoperimetryOptions, VeryGoodOptions,
};
use perc_core::par::Exec;
use perc_core::percolation::{snapshot, BondConfig, LatticeBox, SiteConfig};
use perc_core::rng::{derive_seed, tag};
use perc_core::verify::{
    axis_targets, check_short_time, estimate_s_x, fit_chemical_constant, fit_gaussian_envelope, fit_ondiagonal, gaussian_of,
    reference_from_kernel, write_violations_csv, GaussianOptions, Metric, PairSpec, ShortTimeOptions, SxOptions,
};
use perc_core::walk::{
    cluster_graph, exit_time_stats, heat_kernel_rows, msd, nash_functionals, Boundary, HeatKernel, MsdMode,
};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::manifest::{ArtifactDir, Manifest};
use crate::report;
use crate::spec::{ExperimentSpec, Kind, Model};

const KERNEL_TOL: f64 = 1e-12;

/// Execution settings that do not affect outputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
}

/// Float formatting shared by every CSV the runner writes.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Directory an experiment writes to when none is configured.
pub fn default_out(kind: Kind) -> PathBuf {
    PathBuf::from("out").join(kind.name())
}

/// Validates `spec`, runs it on a dedicated worker pool and writes its
/// artifacts, summary and manifest.
pub fn run_experiment(spec: &ExperimentSpec, opts: RunOptions) -> Result<(PathBuf, Manifest), CliError> {
    spec.validate()?;
    let kind = spec.kind()?;
    let out = spec.out.clone().unwrap_or_else(|| default_out(kind));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        if n == 0 {
            return Err(CliError::Validation(vec!["threads: must be positive".into()]));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let threads = pool.current_num_threads();
    let manifest = pool.install(|| -> Result<Manifest, CliError> {
        let mut dir = ArtifactDir::create(&out)?;
        let summary = match kind {
            Kind::Sample => run_sample(spec, &mut dir)?,
            Kind::Geometry => run_geometry(spec, &mut dir)?,
            Kind::Inequalities => run_inequalities(spec, &mut dir)?,
            Kind::Events => run_events(spec, &mut dir)?,
            Kind::Kernel => run_kernel(spec, &mut dir)?,
            Kind::Bounds => run_bounds(spec, &mut dir)?,
            Kind::Harnack => run_harnack(spec, &mut dir)?,
            Kind::Report => report::run_report(&spec.report.inputs, &mut dir)?,
        };
        dir.write_json("summary.json", &summary)?;
        let size = match kind {
            Kind::Events | Kind::Report => None,
            _ => Some(spec.lattice.side),
        };
        dir.finish(kind.name(), size, spec, threads)
    })?;
    Ok((out, manifest))
}

fn lattice_box(spec: &ExperimentSpec) -> Result<LatticeBox, CliError> {
    let d = spec.lattice.d;
    Ok(LatticeBox::new(vec![0; d], vec![spec.lattice.side - 1; d])?)
}

fn config_seed(spec: &ExperimentSpec, c: usize) -> u64 {
    derive_seed(spec.seed, &[tag("config"), c as u64])
}

fn bond_configs(spec: &ExperimentSpec, bx: &LatticeBox) -> Result<Vec<BondConfig>, CliError> {
    (0..spec.lattice.configs)
        .map(|c| Ok(BondConfig::sample_with(bx, spec.lattice.p, config_seed(spec, c), Exec::Parallel)?))
        .collect()
}

/// The vertex of `g` closest to `target` in `l1`, ties going to the smaller
/// index.
pub fn nearest_vertex(g: &WeightedSubgraph, target: &[i32]) -> Result<usize, CliError> {
    (0..g.len())
        .min_by_key(|&i| g.point(i).iter().zip(target).map(|(a, b)| (a - b).unsigned_abs()).sum::<u32>())
        .ok_or_else(|| CliError::Runtime("the cluster is empty".into()))
}

fn centered_cluster(spec: &ExperimentSpec) -> Result<(LatticeBox, WeightedSubgraph, usize), CliError> {
    let bx = lattice_box(spec)?;
    let cfg = BondConfig::sample_with(&bx, spec.lattice.p, config_seed(spec, 0), Exec::Parallel)?;
    let g = cluster_graph(&cfg, &bx)?;
    let x = nearest_vertex(&g, &bx.center_vertex())?;
    Ok((bx, g, x))
}

fn point_json(p: &[i32]) -> Value {
    json!(p)
}

fn run_sample(spec: &ExperimentSpec, dir: &mut ArtifactDir) -> Result<Value, CliError> {
    let bx = lattice_box(spec)?;
    let seed = config_seed(spec, 0);
    dir.stage("sample", |dir| match spec.lattice.model {
        Model::Bond => {
            let cfg = BondConfig::sample_with(&bx, spec.lattice.p, seed, Exec::Parallel)?;
            dir.write_with("config.snapshot", None, |w| snapshot::write_bond(w, &cfg))?;
            let largest = largest_open_cluster((&cfg).into(), &bx)?;
            Ok(json!({
                "model": "bond",
                "vertices": bx.vertex_count(),
                "edges": cfg.edge_count(),
                "open_edges": cfg.open_edge_count(),
                "largest_cluster": largest.len(),
            }))
        }
        Model::Site => {
            let cfg = SiteConfig::sample_with(&bx, spec.lattice.p, seed, Exec::Parallel)?;
            dir.write_with("config.snapshot", None, |w| snapshot::write_site(w, &cfg))?;
            let largest = largest_open_cluster((&cfg).into(), &bx)?;
            Ok(json!({
                "model": "site",
                "vertices": bx.vertex_count(),
                "open_sites": cfg.open_count(),
                "largest_cluster": largest.len(),
            }))
        }
    })
}

fn run_geometry(spec: &ExperimentSpec, dir: &mut ArtifactDir) -> Result<Value, CliError> {
    let bx = lattice_box(spec)?;
    let configs = dir.stage("sample", |_| bond_configs(spec, &bx))?;
    let gs = &spec.geometry;
    let pairs = PairSpec {
        pairs_per_config: gs.pairs_per_config,
        min_sep: gs.min_sep,
        max_sep: gs.max_sep,
        quantile: gs.quantile,
        seed: derive_seed(spec.seed, &[tag("pairs")]),
    };
    let rep = dir.stage("chemical", |_| Ok(fit_chemical_constant(&configs, &bx, &pairs, Exec::Parallel)?))?;
    let mut csv = String::from("sep,pairs,exceed,freq\n");
    for r in &rep.rows {
        let _ = writeln!(csv, "{},{},{},{}", r.sep, r.pairs, r.exceed, fmt(r.freq));
    }
    dir.write("separations.csv", Some("separations"), csv.as_bytes())?;
    dir.write_json("chemical.json", &rep)?;
    let g = cluster_graph(&configs[0], &bx)?;
    let x = g.point(nearest_vertex(&g, &bx.center_vertex())?).to_vec();
    let ball = dir.stage("ball", |_| Ok(chemical_ball((&configs[0]).into(), &x, gs.ball_radius, &bx)?))?;
    dir.write_with("ball.csv", None, |w| ball.write_csv(w))?;
    Ok(json!({
        "pairs": rep.pairs,
        "median": rep.median,
        "c_h": rep.c_h,
        "max_ratio": rep.max_ratio,
        "l1_exact": rep.l1_exact,
        "ball_center": point_json(&x),
        "ball_size": ball.len(),
    }))
}

fn run_inequalities(spec: &ExperimentSpec, dir: &mut ArtifactDir) -> Result<Value, CliError> {
    let bx = lattice_box(spec)?;
    let configs = dir.stage("sample", |_| bond_configs(spec, &bx))?;
    let q = &spec.inequalities;
    let center = bx.center_vertex();
    let region = LatticeBox::centered(&center, q.radius)?;
    let rows = dir.stage("measure", |_| {
        configs
            .iter()
            .enumerate()
            .map(|(c, cfg)| -> Result<(String, bool), CliError> {
                let piece = largest_open_cluster(cfg.into(), &region)?;
                let h = induced_graph(cfg.into(), &piece)?;
                let mut row = format!("{c},{}", h.len());
                let mut holds = true;
                if h.len() < 2 {
                    row.push_str(",NA,NA,NA,NA,NA,NA,NA");
                } else {
                    let mode = if h.len() <= q.exact_cap { IsoMode::Exact } else { IsoMode::Search };
                    let iso = isoperimetry_with(
                        &h,
                        &IsoperimetryOptions { mode, cap: q.exact_cap.max(1), seed: config_seed(spec, c), ..Default::default() },
                    )?;
                    let pc = poincare_constant(&h, None, None)?;
                    holds = !iso.exact
                        || (iso.i_h >= 2.0 / iso.mu0_total * (1.0 - 1e-12)
                            && iso.i_h <= iso.i_star * (1.0 + 1e-12)
                            && iso.i_star <= 2.0 * iso.i_h * (1.0 + 1e-12)
                            && iso.i_h <= iso.j_h * (1.0 + 1e-12)
                            && iso.j_h <= 2.0 * iso.i_h * (1.0 + 1e-12));
                    let _ = write!(
                        row,
                        ",{},{},{},{},{},{},{}",
                        fmt(iso.mu0_total),
                        fmt(iso.i_h),
                        fmt(iso.i_star),
                        fmt(iso.j_h),
                        iso.exact,
                        fmt(pc.constant),
                        holds
                    );
                }
                if q.very_good_radius > 0 && cfg.is_vertex_open(bx.index_of(&center).expect("centre lies in the box")) {
                    let rep = classify_very_good(
                        cfg.into(),
                        &bx,
                        &center,
                        q.very_good_radius,
                        &q.constants,
                        &VeryGoodOptions { seed: config_seed(spec, c), ..Default::default() },
                    )?;
                    let verdict = serde_json::to_value(rep.verdict)?;
                    let _ = write!(
                        row,
                        ",{},{}",
                        verdict.as_str().unwrap_or("unknown"),
                        rep.n_b.map_or("NA".to_string(), |n| n.to_string())
                    );
                } else {
                    row.push_str(",NA,NA");
                }
                Ok((row, holds))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut csv = String::from("config,vertices,mu0,i_h,i_star,j_h,exact,poincare,inequalities_hold,verdict,n_b\n");
    let mut failures = 0;
    for (r, holds) in &rows {
        failures += !holds as usize;
        csv.push_str(r);
        csv.push('\n');
    }
    dir.write("inequalities.csv", Some("inequalities"), csv.as_bytes())?;
    Ok(json!({ "configs": configs.len(), "box_radius": q.radius, "inequality_failures": failures }))
}

fn run_events(spec: &ExperimentSpec, dir: &mut ArtifactDir) -> Result<Value, CliError> {
    let e = &spec.events;
    let ts = TailSpec {
        event: e.event,
        d: spec.lattice.d,
        sizes: e.sizes.clone(),
        trials: e.trials,
        p: spec.lattice.p,
        lambda: e.lambda,
        eps: e.eps,
        alpha: e.alpha,
        params: e.params.clone(),
        seed: derive_seed(spec.seed, &[tag("events")]),
    };
    let est = dir.stage("tail", |_| Ok(estimate_tail(&ts, Exec::Parallel)?))?;
    let mut csv = String::from("size,trials,failures,frequency,ci_lo,ci_hi,heuristic\n");
    for r in &est.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.size,
            r.trials,
            r.failures,
            fmt(r.frequency),
            fmt(r.ci_lo),
            fmt(r.ci_hi),
            r.heuristic
        );
    }
    dir.write("tail.csv", Some("tail"), csv.as_bytes())?;
    dir.write("tail_fit.json", None, (est.fit_json() + "\n").as_bytes())?;
    Ok(json!({ "event": est.event, "monotone": est.monotone, "gamma": est.gamma, "fit": est.fit }))
}

fn kernel_rows(spec: &ExperimentSpec, g: &WeightedSubgraph, x: usize, times: &[f64]) -> Result<HeatKernel, CliError> {
    Ok(heat_kernel_rows(g, &[x], times, Boundary::None, KERNEL_TOL, Exec::Parallel).map_err(|e| {
        CliError::Runtime(format!("kernel on {} vertices at side {}: {e}", g.len(), spec.lattice.side))
    })?)
}

fn run_kernel(spec: &ExperimentSpec, dir: &mut ArtifactDir) -> Result<Value, CliError> {
    let (_, g, x) = dir.stage("sample", |_| centered_cluster(spec))?;
    let ks = &spec.kernel;
    let times = ks.times.times();
    let k = dir.stage("kernel", |_| kernel_rows(spec, &g, x, &times))?;
    dir.write_with("kernel.csv", Some("kernel"), |w| k.write_csv(w))?;
    let mode = if ks.msd_trials == 0 {
        MsdMode::Exact
    } else {
        MsdMode::MonteCarlo { trials: ks.msd_trials, seed: derive_seed(spec.seed, &[tag("msd")]) }
    };
    let m = dir.stage("msd", |_| Ok(msd(&g, x, &times, mode, Exec::Parallel)?))?;
    dir.write_with("msd.csv", Some("msd"), |w| m.write_csv(w))?;
    let nash = dir.stage("nash", |_| Ok(nash_functionals(&g, x, &times)?))?;
    dir.write_with("nash.csv", Some("nash"), |w| nash.write_csv(w))?;
    for &r in &ks.exit_radii {
        let seed = derive_seed(spec.seed, &[tag("exit"), r as u64]);
        let ex = dir.stage("exit", |_| Ok(exit_time_stats(&g, x, r, ks.exit_trials, &times, seed, Exec::Parallel)?))?;
        dir.write_with(&format!("exit_r{r}.csv"), Some("exit"), |w| ex.write_csv(w))?;
    }
    let last = times.len() - 1;
    Ok(json!({
        "vertices": g.len(),
        "x": point_json(g.point(x)),
        "return_probability_last": k.q(last, x, x) * g.mu()[x],
        "msd_over_t_last": m.values[last] / times[last],
        "nash_q_nondecreasing": nash.q.windows(2).all(|w| w[1] >= w[0] - 1e-12),
        "nash_truncation": nash.truncation,
    }))
}

fn run_bounds(spec: &ExperimentSpec, dir: &mut ArtifactDir) -> Result<Value, CliError> {
    let (bx, g, x) = dir.stage("sample", |_| centered_cluster(spec))?;
    let b = &spec.bounds;
    let d = spec.lattice.d;
    let times = spec.kernel.times.times();
    let k = dir.stage("kernel", |_| kernel_rows(spec, &g, x, &times))?;
    let diag = dir.stage("on_diagonal", |_| Ok(fit_ondiagonal(&g, &k, x, (b.window[0], b.window[1]))?))?;
    let dists: Vec<u32> = (0..=b.max_dist).collect();
    let targets = if b.axis_only {
        axis_targets(&g, x, &dists)
    } else {
        let px = g.point(x);
        (0..g.len())
            .filter(|&y| g.point(y).iter().zip(px).map(|(a, c)| (a - c).unsigned_abs()).sum::<u32>() <= b.max_dist)
            .collect()
    };
    let gopts = GaussianOptions { metric: b.metric, t_min: b.window[0], dist_frac: 1.0, targets: Some(targets.clone()) };
    let env = dir.stage("envelope", |_| Ok(fit_gaussian_envelope(&g, &k, x, &gopts)?))?;
    let gauss = gaussian_of(&env)?;
    let short = dir.stage("short_time", |_| {
        Ok(check_short_time(&g, &k, x, &ShortTimeOptions { metric: Metric::Chemical, c5: 1.0 }).ok())
    })?;
    let dist = match b.metric {
        Metric::Chemical => g.hop_distances(x),
        Metric::L1 => {
            let px = g.point(x);
            (0..g.len()).map(|y| g.point(y).iter().zip(px).map(|(a, c)| (a - c).unsigned_abs()).sum()).collect()
        }
    };
    let mut scatter = String::from("t,y,dist,q,lower,upper\n");
    for (ti, &t) in times.iter().enumerate() {
        if t < b.window[0] {
            continue;
        }
        for &y in &targets {
            let q = k.q(ti, x, y);
            if q > 0.0 && dist[y] as f64 <= t {
                let _ = writeln!(
                    scatter,
                    "{},{y},{},{},{},{}",
                    fmt(t),
                    dist[y],
                    fmt(q),
                    fmt(gauss.lower(d, t, dist[y])),
                    fmt(gauss.upper(d, t, dist[y]))
                );
            }
        }
    }
    dir.write("envelope_scatter.csv", Some("envelope_scatter"), scatter.as_bytes())?;
    dir.write_with("violations.csv", None, |w| write_violations_csv(&env.violations, w))?;
    let onset = if b.onset_relax > 0.0 {
        Some(dir.stage("onset", |_| onset(spec, &bx, &g, x, &times))?)
    } else {
        None
    };
    let slope = diag.fit.slope;
    let target = -(d as f64) / 2.0;
    let out = json!({
        "on_diagonal": diag,
        "gaussian": env,
        "short_time": short,
        "onset": onset,
    });
    dir.write_json("envelope.json", &out)?;
    Ok(json!({
        "vertices": g.len(),
        "x": point_json(g.point(x)),
        "on_diagonal_slope": slope,
        "target_slope": target,
        "slope_deviation": (slope - target).abs(),
        "slope_within_0_05": (slope - target).abs() <= 0.05,
        "envelope_r2": env.fit.r2,
        "envelope_violations": env.violations.len(),
        "onset": onset.as_ref().map(|o| o.sx),
    }))
}

/// Onset at `x` against the envelope fitted on the full box of the same
/// size.
fn onset(
    spec: &ExperimentSpec,
    bx: &LatticeBox,
    g: &WeightedSubgraph,
    x: usize,
    times: &[f64],
) -> Result<perc_core::verify::SxEstimate, CliError> {
    let b = &spec.bounds;
    let full = BondConfig::from_predicate(bx, |_, _| true);
    let lat = cluster_graph(&full, bx)?;
    let lx = nearest_vertex(&lat, &bx.center_vertex())?;
    let dists: Vec<u32> = (0..=b.max_dist).collect();
    let lk = kernel_rows(spec, &lat, lx, times)?;
    let reference = reference_from_kernel(&lat, &lk, lx, &dists, b.onset_relax)?;
    let opts = SxOptions { times: times.to_vec(), dists, reference, budget: b.onset_budget, metric: b.metric };
    Ok(estimate_s_x(g, x, &opts, Exec::Parallel)?)
}

fn run_harnack(spec: &ExperimentSpec, dir: &mut ArtifactDir) -> Result<Value, CliError> {
    let (_, g, x) = dir.stage("sample", |_| centered_cluster(spec))?;
    let h = &spec.harnack;
    let mut table = String::from("outer,inner,max_factor,harnack_min,harnack_max,maximum_principle\n");
    let mut factors = String::from("outer,dataset,factor,harnack\n");
    let mut per_radius = Vec::new();
    for &r in &h.radii {
        let ball = Ball::new(&g, x, r)?;
        let data = random_boundary_data(ball.boundary.len(), h.datasets, derive_seed(spec.seed, &[tag("boundary"), r as u64]));
        let od = dir.stage("solve", |_| Ok(oscillation_decay(&g, &ball, r / 2, &data, Exec::Parallel)?))?;
        let hmin = od.harnack.iter().cloned().fold(f64::INFINITY, f64::min);
        let hmax = od.harnack.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(table, "{r},{},{},{},{},{}", od.inner, fmt(od.max), fmt(hmin), fmt(hmax), od.maximum_principle);
        for (i, (f, hr)) in od.factors.iter().zip(&od.harnack).enumerate() {
            let _ = writeln!(factors, "{r},{i},{},{}", fmt(*f), fmt(*hr));
        }
        per_radius.push(json!({
            "outer": r,
            "inner": od.inner,
            "interior": ball.interior.len(),
            "max_factor": od.max,
            "harnack_max": hmax,
            "maximum_principle": od.maximum_principle,
        }));
    }
    dir.write("harnack.csv", Some("harnack"), table.as_bytes())?;
    dir.write("factors.csv", None, factors.as_bytes())?;
    Ok(json!({ "vertices": g.len(), "x": point_json(g.point(x)), "radii": per_radius }))
}

/// Reads an experiment spec, applying the command-line overrides.
pub fn load_spec(
    kind: Kind,
    path: Option<&Path>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<ExperimentSpec, CliError> {
    let mut spec = match path {
        Some(p) => ExperimentSpec::from_path(p)?,
        None => ExperimentSpec::default(),
    };
    match spec.kind {
        Some(k) if k != kind => {
            return Err(CliError::Validation(vec![format!(
                "kind: spec declares `{}` but the `{}` subcommand was invoked",
                k.name(),
                kind.name()
            )]))
        }
        _ => spec.kind = Some(kind),
    }
    if out.is_some() {
        spec.out = out;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}
