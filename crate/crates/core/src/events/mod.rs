//! Renormalization events on sampled configurations, the macroscopic site
//! fields built from them, and Monte Carlo tail estimates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::percolation::LatticeBox;

mod grid;
mod link;
mod local;
mod renorm;
mod site;
mod tail;

pub use grid::CubeGrid;
pub use link::{check_l, check_l_pair, LMode, PathAudit};
pub use renorm::{
    alpha1, alpha2, check_d, check_h, check_h0, check_r, macro_field, special_cube, IndependenceTest, MacroField,
    MacroKind, RenormParams,
};
pub use site::{beta, check_f, check_k, FMode, FOptions};
pub use tail::{
    estimate_onset_scales, estimate_tail, wilson, OnsetKind, OnsetScales, OnsetSpec, SizeRow, TailEstimate, TailFit, TailSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    K,
    F,
    R,
    H0,
    H,
    D,
    L,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::K => "k",
            EventKind::F => "f",
            EventKind::R => "r",
            EventKind::H0 => "h0",
            EventKind::H => "h",
            EventKind::D => "d",
            EventKind::L => "l",
        }
    }
}

impl std::str::FromStr for EventKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "k" => EventKind::K,
            "f" => EventKind::F,
            "r" => EventKind::R,
            "h0" => EventKind::H0,
            "h" => EventKind::H,
            "d" => EventKind::D,
            "l" => EventKind::L,
            other => return Err(crate::error::invalid(format!("unknown event kind `{other}`"))),
        })
    }
}

/// Verdict of one event on one cube, with the evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub event: EventKind,
    pub cube: LatticeBox,
    pub verdict: bool,
    /// A `true` verdict rests on a search that could have missed a violation.
    pub heuristic: bool,
    /// False when some input needed by the event lay outside the sampled box.
    pub available: bool,
    pub sub: BTreeMap<String, bool>,
    pub counts: BTreeMap<String, f64>,
    pub witness: Vec<Vec<i32>>,
    pub shift: Option<Vec<i32>>,
    /// First sub-cube on which a quantified event failed.
    pub failing: Option<LatticeBox>,
    pub grid: Option<CubeGrid>,
    /// Vertex visits spent on the decision.
    pub cost: u64,
}

impl EventReport {
    pub fn new(event: EventKind, cube: &LatticeBox) -> Self {
        EventReport {
            event,
            cube: cube.clone(),
            verdict: false,
            heuristic: false,
            available: true,
            sub: BTreeMap::new(),
            counts: BTreeMap::new(),
            witness: Vec::new(),
            shift: None,
            failing: None,
            grid: None,
            cost: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}
