//! Declarative experiment configuration.

use std::path::{Path, PathBuf};

use perc_core::events::{EventKind, RenormParams};
use perc_core::inequality::GoodnessConstants;
use perc_core::verify::Metric;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Sample,
    Geometry,
    Inequalities,
    Events,
    Kernel,
    Bounds,
    Harnack,
    Report,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Sample => "sample",
            Kind::Geometry => "geometry",
            Kind::Inequalities => "inequalities",
            Kind::Events => "events",
            Kind::Kernel => "kernel",
            Kind::Bounds => "bounds",
            Kind::Harnack => "harnack",
            Kind::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Bond,
    Site,
}

/// The sampled lattice and ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSpec {
    pub d: usize,
    /// Bond density, or site density when `model = "site"`.
    pub p: f64,
    /// Side of the sampled box `[0, side)^d`.
    pub side: i32,
    pub model: Model,
    pub configs: usize,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec { d: 2, p: 1.0, side: 41, model: Model::Bond, configs: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub pairs_per_config: usize,
    pub min_sep: u32,
    pub max_sep: u32,
    pub quantile: f64,
    /// Radius of the chemical ball recorded around the centre.
    pub ball_radius: u32,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec { pairs_per_config: 500, min_sep: 1, max_sep: 10, quantile: 0.999, ball_radius: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalitySpec {
    /// Half-width of the boxes whose cluster pieces are measured.
    pub radius: i32,
    /// Largest vertex count handled by exact subset enumeration.
    pub exact_cap: usize,
    /// Radius of the very-good classification; zero skips it.
    pub very_good_radius: u32,
    pub constants: GoodnessConstants,
}

impl Default for InequalitySpec {
    fn default() -> Self {
        InequalitySpec { radius: 2, exact_cap: 16, very_good_radius: 0, constants: GoodnessConstants::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSpec {
    pub event: EventKind,
    pub sizes: Vec<i32>,
    pub trials: usize,
    pub lambda: Option<f64>,
    pub eps: Option<f64>,
    pub alpha: Option<f64>,
    pub params: RenormParams,
}

impl Default for EventSpec {
    fn default() -> Self {
        EventSpec {
            event: EventKind::K,
            sizes: vec![8, 16, 32],
            trials: 1000,
            lambda: None,
            eps: None,
            alpha: None,
            params: RenormParams::default(),
        }
    }
}

/// Log-spaced time grid `lo .. hi` with `count` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid { lo: 1.0, hi: 100.0, count: 21 }
    }
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..self.count).map(|i| (a + (b - a) * i as f64 / (self.count - 1) as f64).exp()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub times: TimeGrid,
    /// Monte Carlo trials for the displacement curve; zero means exact.
    pub msd_trials: usize,
    pub exit_radii: Vec<u32>,
    pub exit_trials: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { times: TimeGrid::default(), msd_trials: 0, exit_radii: vec![], exit_trials: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    /// Time window of the on-diagonal regression.
    pub window: [f64; 2],
    pub metric: Metric,
    /// Restricts the envelope fit to the coordinate axes through the centre.
    pub axis_only: bool,
    /// Largest distance used by the envelope fit.
    pub max_dist: u32,
    /// Onset estimation against a lattice reference relaxed by this factor;
    /// zero skips it.
    pub onset_relax: f64,
    pub onset_budget: f64,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        BoundsSpec {
            window: [4.0, 100.0],
            metric: Metric::L1,
            axis_only: true,
            max_dist: 30,
            onset_relax: 0.0,
            onset_budget: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnackSpec {
    pub radii: Vec<u32>,
    pub datasets: usize,
}

impl Default for HarnackSpec {
    fn default() -> Self {
        HarnackSpec { radii: vec![8, 16], datasets: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSpec {
    pub inputs: Vec<PathBuf>,
}

/// Everything that determines an experiment's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Option<Kind>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub lattice: LatticeSpec,
    pub geometry: GeometrySpec,
    pub inequalities: InequalitySpec,
    pub events: EventSpec,
    pub kernel: KernelSpec,
    pub bounds: BoundsSpec,
    pub harnack: HarnackSpec,
    pub report: ReportSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kind: None,
            seed: 0,
            out: None,
            lattice: LatticeSpec::default(),
            geometry: GeometrySpec::default(),
            inequalities: InequalitySpec::default(),
            events: EventSpec::default(),
            kernel: KernelSpec::default(),
            bounds: BoundsSpec::default(),
            harnack: HarnackSpec::default(),
            report: ReportSpec::default(),
        }
    }
}

const MAX_VERTICES: usize = 4_000_000;

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(vec![e.message().to_string()]))
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(vec![format!("spec {}: {e}", path.display())]))?;
        Self::from_toml(&text)
    }

    pub fn kind(&self) -> Result<Kind, CliError> {
        self.kind.ok_or_else(|| CliError::Validation(vec!["kind: missing".into()]))
    }

    /// Every offending field with the reason it was rejected.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bad = |field: &str, msg: &str| out.push(format!("{field}: {msg}"));
        let Some(kind) = self.kind else {
            bad("kind", "missing");
            return out;
        };
        let l = &self.lattice;
        if kind != Kind::Report {
            if !(1..=4).contains(&l.d) {
                bad("lattice.d", "must lie in 1..=4");
            }
            if !(0.0..=1.0).contains(&l.p) {
                bad("lattice.p", "must lie in [0, 1]");
            }
            if l.side < 2 {
                bad("lattice.side", "must be at least 2");
            } else if (1..=4).contains(&l.d) && (l.side as f64).powi(l.d as i32) > MAX_VERTICES as f64 {
                bad("lattice.side", "box exceeds the vertex cap");
            }
            if l.configs == 0 || l.configs > 10_000 {
                bad("lattice.configs", "must lie in 1..=10000");
            }
            if l.model == Model::Site && kind != Kind::Sample {
                bad("lattice.model", "site configurations are only sampled; other kinds use bonds");
            }
        }
        match kind {
            Kind::Sample | Kind::Report => {}
            Kind::Geometry => {
                let g = &self.geometry;
                if g.pairs_per_config == 0 {
                    bad("geometry.pairs_per_config", "must be positive");
                }
                if g.min_sep == 0 || g.max_sep < g.min_sep {
                    bad("geometry.max_sep", "separations must satisfy 1 <= min_sep <= max_sep");
                }
                if !(g.quantile > 0.0 && g.quantile < 1.0) {
                    bad("geometry.quantile", "must lie in (0, 1)");
                }
            }
            Kind::Inequalities => {
                let q = &self.inequalities;
                if q.radius < 1 || 2 * q.radius + 1 > l.side {
                    bad("inequalities.radius", "boxes must fit inside the lattice box");
                }
                if q.exact_cap > 22 {
                    bad("inequalities.exact_cap", "exact enumeration is capped at 22 vertices");
                }
                if q.very_good_radius as i32 * 2 > l.side {
                    bad("inequalities.very_good_radius", "ball does not fit inside the lattice box");
                }
            }
            Kind::Events => {
                let e = &self.events;
                if e.sizes.is_empty() || e.sizes[0] < 1 || e.sizes.windows(2).any(|w| w[0] >= w[1]) {
                    bad("events.sizes", "must be positive and strictly increasing");
                }
                if e.trials < 100 {
                    bad("events.trials", "at least 100 trials are required");
                }
            }
            Kind::Kernel | Kind::Bounds => {
                let t = &self.kernel.times;
                if !(t.lo > 0.0 && t.hi >= t.lo && t.hi.is_finite()) || t.count == 0 || t.count > 10_000 {
                    bad("kernel.times", "needs 0 < lo <= hi and 1..=10000 points");
                }
                if self.kernel.exit_radii.contains(&0) {
                    bad("kernel.exit_radii", "radii must be positive");
                }
                if !self.kernel.exit_radii.is_empty() && self.kernel.exit_trials == 0 {
                    bad("kernel.exit_trials", "must be positive");
                }
                let b = &self.bounds;
                if kind == Kind::Bounds {
                    if !(b.window[0] >= 1.0 && b.window[1] > b.window[0]) {
                        bad("bounds.window", "needs 1 <= lo < hi");
                    }
                    if b.onset_relax != 0.0 && b.onset_relax < 1.0 {
                        bad("bounds.onset_relax", "must be zero or at least 1");
                    }
                    if !(b.onset_budget > 0.0 && b.onset_budget < 1.0) {
                        bad("bounds.onset_budget", "must lie in (0, 1)");
                    }
                }
            }
            Kind::Harnack => {
                let h = &self.harnack;
                if h.radii.is_empty() || h.radii.iter().any(|&r| r < 2 || 2 * r as i32 >= l.side) {
                    bad("harnack.radii", "radii must lie in 2..side/2");
                }
                if h.datasets == 0 {
                    bad("harnack.datasets", "must be positive");
                }
            }
        }
        if kind == Kind::Report && self.report.inputs.is_empty() {
            bad("report.inputs", "at least one artifact directory is required");
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(p))
        }
    }
}
