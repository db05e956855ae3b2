//! Isoperimetric, Cheeger and Poincare constants, ball classification and
//! Whitney covers.

mod goodness;
mod isoperimetry;
mod poincare;
mod whitney;

pub use isoperimetry::{isoperimetry, isoperimetry_with, IsoMode, IsoperimetryOptions, IsoperimetryReport};
pub use poincare::{
    poincare_constant, poincare_on, rayleigh_ratio, PoincareMethod, PoincareResult, PoincareWeights, DENSE_CAP,
};
pub use goodness::{
    classify_exceedingly_good, classify_good, classify_very_good, radius_grid, CenterPolicy, ExceedinglyOptions,
    GoodnessConstants, GoodnessReport, Verdict, VeryGoodOptions, Witness, WitnessKind,
};
pub use whitney::{compute_weight, whitney_cover, BallWeight, WhitneyBall, WhitneyChecks, WhitneyCover, WhitneyParams};
