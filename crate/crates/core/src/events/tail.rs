use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::link::{check_l, LMode};
use super::renorm::{alpha1, alpha2, check_d, check_h, check_h0, check_r, RenormParams};
use super::site::{beta, check_f, check_k};
use super::{EventKind, EventReport};
use crate::error::{invalid, Result};
use crate::par::{map_indexed, Exec};
use crate::percolation::{plus_of, BondConfig, LatticeBox, SiteConfig};
use crate::rng::{derive_seed, tag};

const Z95: f64 = 1.959963984540054;

/// Wilson score interval at 95% for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Which event to sample and at what density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailSpec {
    pub event: EventKind,
    pub d: usize,
    pub sizes: Vec<i32>,
    pub trials: usize,
    /// Site density for `K` and `F`, bond density otherwise.
    pub p: f64,
    /// Density threshold of `K`; defaults to `7/8`.
    pub lambda: Option<f64>,
    /// Tolerance of `F`; defaults to `1/(4d + 2)`.
    pub eps: Option<f64>,
    /// Sub-cube exponent of `H` and `D`; defaults to `1/(4 + d)`.
    pub alpha: Option<f64>,
    pub params: RenormParams,
    pub seed: u64,
}

impl Default for TailSpec {
    fn default() -> Self {
        TailSpec {
            event: EventKind::K,
            d: 2,
            sizes: vec![8, 16, 32],
            trials: 1000,
            p: 0.95,
            lambda: None,
            eps: None,
            alpha: None,
            params: RenormParams::default(),
            seed: 0,
        }
    }
}

impl TailSpec {
    fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(alpha1(self.d))
    }

    /// Exponent `gamma` of the stretched-exponential bound targeted by the
    /// event.
    pub fn gamma(&self) -> f64 {
        let d = self.d;
        match self.event {
            EventKind::K => d as f64 - 1.0,
            EventKind::F | EventKind::H0 => beta(d),
            EventKind::R => 1.0,
            EventKind::D => self.alpha(),
            EventKind::H => self.alpha() * beta(d),
            EventKind::L => alpha2(d) * beta(d),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > 4 {
            return Err(invalid("dimension must lie in 1..=4"));
        }
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) || self.sizes[0] < 1 {
            return Err(invalid("sizes must be positive and strictly increasing"));
        }
        if self.trials < 100 {
            return Err(invalid("at least 100 trials per size are required"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid("density must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Margin around `Q^+` that keeps every input of the event inside the
    /// sampled box.
    fn margin(&self) -> i32 {
        match self.event {
            EventKind::K | EventKind::F | EventKind::R | EventKind::D => 1,
            EventKind::H0 | EventKind::H | EventKind::L => 2 * self.params.k0 + 1,
        }
    }

    /// Runs the event once on the cube of side `n` from configuration seed
    /// `seed`.
    pub fn run_one(&self, n: i32, seed: u64) -> Result<EventReport> {
        let d = self.d;
        let origin = vec![0; d];
        match self.event {
            EventKind::K | EventKind::F => {
                let q = LatticeBox::cube(&vec![1; d], n)?;
                let frame = LatticeBox::cube(&origin, n + 2)?;
                let site = SiteConfig::sample(&frame, self.p, seed)?;
                let eps = self.eps.unwrap_or(self.params.eps0_for(d));
                match self.event {
                    EventKind::K => check_k(&site, &q, self.lambda.unwrap_or(7.0 / 8.0)),
                    _ => check_f(&site, &q, eps, &self.params.f),
                }
            }
            _ => {
                let probe = plus_of(&LatticeBox::cube(&origin, n)?);
                let m = self.margin();
                let q = LatticeBox::cube(&vec![m - probe.lo()[0]; d], n)?;
                let frame = LatticeBox::cube(&origin, probe.side(0) + 2 * m)?;
                let cfg = BondConfig::sample(&frame, self.p, seed)?;
                match self.event {
                    EventKind::R => check_r(&cfg, &q),
                    EventKind::H0 => check_h0(&cfg, &q, &self.params),
                    EventKind::H => check_h(&cfg, &q, self.alpha(), &self.params),
                    EventKind::D => check_d(&cfg, &q, self.alpha(), &self.params),
                    _ => check_l(&cfg, &q, &LMode::Full, &self.params),
                }
            }
        }
    }
}

/// Failure counts at one cube size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub size: i32,
    pub trials: u64,
    pub failures: u64,
    pub frequency: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Passing trials whose verdict rests on a heuristic search.
    pub heuristic: u64,
}

impl SizeRow {
    fn new(size: i32, trials: u64, failures: u64, heuristic: u64) -> Self {
        let (ci_lo, ci_hi) = wilson(failures, trials);
        let frequency = if trials == 0 { 0.0 } else { failures as f64 / trials as f64 };
        SizeRow { size, trials, failures, frequency, ci_lo, ci_hi, heuristic }
    }
}

/// Least-squares fit of `log P(fail) = a - b n^gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub event: String,
    pub gamma: f64,
    pub ci_method: String,
    pub rows: Vec<SizeRow>,
    /// Point estimates are nonincreasing in the size.
    pub monotone: bool,
    /// Absent when fewer than two sizes saw a failure.
    pub fit: Option<TailFit>,
}

impl TailEstimate {
    pub fn from_rows(event: &str, gamma: f64, rows: Vec<SizeRow>) -> Self {
        let monotone = rows.windows(2).all(|w| w[1].frequency <= w[0].frequency);
        let fit = fit_stretched(&rows, gamma);
        TailEstimate { event: event.into(), gamma, ci_method: "wilson-95".into(), rows, monotone, fit }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,trials,failures,ci_lo,ci_hi\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.16e},{:.16e}", r.size, r.trials, r.failures, r.ci_lo, r.ci_hi);
        }
        out
    }

    /// JSON summary of the fit and the monotonicity audit.
    pub fn fit_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "event": self.event,
            "gamma": self.gamma,
            "ci_method": self.ci_method,
            "monotone": self.monotone,
            "fit": self.fit,
        }))
        .expect("summary serializes")
    }
}

fn fit_stretched(rows: &[SizeRow], gamma: f64) -> Option<TailFit> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.failures > 0).map(|r| ((r.size as f64).powf(gamma), r.frequency.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(TailFit { a: my - slope * mx, b: -slope, gamma, points: pts.len() })
}

/// Failure frequencies of the event across the size grid from independent
/// configurations seeded by `(seed, event, size, trial)`.
pub fn estimate_tail(spec: &TailSpec, exec: Exec) -> Result<TailEstimate> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.sizes.len());
    for &n in &spec.sizes {
        let outcomes = map_indexed(exec, spec.trials, |t| {
            let seed = derive_seed(spec.seed, &[tag(spec.event.name()), n as u64, t as u64]);
            spec.run_one(n, seed).map(|r| (r.verdict, r.heuristic))
        });
        let mut failures = 0;
        let mut heuristic = 0;
        for o in outcomes {
            let (ok, h) = o?;
            failures += !ok as u64;
            heuristic += (ok && h) as u64;
        }
        rows.push(SizeRow::new(n, spec.trials as u64, failures, heuristic));
    }
    Ok(TailEstimate::from_rows(spec.event.name(), spec.gamma(), rows))
}

/// Which event defines the onset scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnsetKind {
    /// `N_x`, from `L(Q)`.
    N,
    /// `M_x`, from `H(Q, alpha) ∧ D(Q, alpha)`.
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnsetSpec {
    pub kind: OnsetKind,
    pub d: usize,
    pub sizes: Vec<i32>,
    pub configs: usize,
    pub p: f64,
    /// Cubes containing `x` checked per size; the first is anchored at `x`.
    pub positions: usize,
    pub alpha: Option<f64>,
    pub params: RenormParams,
    pub seed: u64,
}

impl Default for OnsetSpec {
    fn default() -> Self {
        OnsetSpec {
            kind: OnsetKind::N,
            d: 2,
            sizes: vec![8, 16, 32],
            configs: 100,
            p: 0.6,
            positions: 2,
            alpha: None,
            params: RenormParams::default(),
            seed: 0,
        }
    }
}

/// Per-configuration onset scales: the smallest grid size from which every
/// checked cube containing `x` passes, `None` when the top size fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetScales {
    pub kind: OnsetKind,
    pub x: Vec<i32>,
    pub sizes: Vec<i32>,
    pub onset: Vec<Option<i32>>,
    /// Lower corners checked per size, relative to `x`.
    pub offsets: Vec<Vec<Vec<i32>>>,
    pub infinite: usize,
}

impl OnsetScales {
    /// Frequencies of `onset > n` for each grid size `n`.
    pub fn exceedance(&self) -> TailEstimate {
        let total = self.onset.len() as u64;
        let rows = self
            .sizes
            .iter()
            .map(|&n| {
                let k = self.onset.iter().filter(|o| o.is_none_or(|v| v > n)).count() as u64;
                SizeRow::new(n, total, k, 0)
            })
            .collect();
        let name = match self.kind {
            OnsetKind::N => "n_x",
            OnsetKind::M => "m_x",
        };
        TailEstimate::from_rows(name, f64::NAN, rows)
    }
}

fn offsets_for(n: i32, d: usize, positions: usize, seed: u64) -> Vec<Vec<i32>> {
    let mut out = vec![vec![0; d]];
    if positions > 1 {
        out.push(vec![n / 2; d]);
    }
    let mut j = 0u64;
    while out.len() < positions {
        let off: Vec<i32> = (0..d)
            .map(|a| (crate::rng::uniform_at(seed, (n + 1) as u64, j * d as u64 + a as u64) * (n + 1) as f64) as i32)
            .map(|v| v.min(n))
            .collect();
        j += 1;
        if !out.contains(&off) {
            out.push(off);
        }
        if j > 64 * positions as u64 {
            break;
        }
    }
    out
}

/// Onset scales `N_x` or `M_x` at the centre `x` of one configuration box
/// per ensemble member.
pub fn estimate_onset_scales(spec: &OnsetSpec, exec: Exec) -> Result<OnsetScales> {
    let d = spec.d;
    if spec.sizes.is_empty() || spec.sizes.windows(2).any(|w| w[0] >= w[1]) || spec.sizes[0] < 1 {
        return Err(invalid("sizes must be positive and strictly increasing"));
    }
    if spec.configs == 0 || spec.positions == 0 {
        return Err(invalid("configs and positions must be positive"));
    }
    let top = *spec.sizes.last().expect("nonempty");
    let reach = 2 * top + 2 * spec.params.k0 + 2;
    let x = vec![reach; d];
    let frame = LatticeBox::cube(&vec![0; d], 2 * reach)?;
    let alpha = spec.alpha.unwrap_or(alpha1(d));
    let offsets: Vec<Vec<Vec<i32>>> = spec
        .sizes
        .iter()
        .map(|&n| offsets_for(n, d, spec.positions, derive_seed(spec.seed, &[tag("onset-offsets"), n as u64])))
        .collect();
    let onset = map_indexed(exec, spec.configs, |c| -> Result<Option<i32>> {
        let cfg = BondConfig::sample(&frame, spec.p, derive_seed(spec.seed, &[tag("onset"), c as u64]))?;
        let mut onset = Some(spec.sizes[0]);
        for (i, &n) in spec.sizes.iter().enumerate().rev() {
            let mut pass = true;
            for off in &offsets[i] {
                let lo: Vec<i32> = x.iter().zip(off).map(|(v, o)| v - o).collect();
                let q = LatticeBox::cube(&lo, n)?;
                pass &= match spec.kind {
                    OnsetKind::N => check_l(&cfg, &q, &LMode::Full, &spec.params)?.verdict,
                    OnsetKind::M => {
                        check_h(&cfg, &q, alpha, &spec.params)?.verdict && check_d(&cfg, &q, alpha, &spec.params)?.verdict
                    }
                };
                if !pass {
                    break;
                }
            }
            if !pass {
                onset = spec.sizes.get(i + 1).copied();
                break;
            }
        }
        Ok(onset)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let infinite = onset.iter().filter(|o| o.is_none()).count();
    Ok(OnsetScales { kind: spec.kind, x, sizes: spec.sizes.clone(), onset, offsets, infinite })
}
