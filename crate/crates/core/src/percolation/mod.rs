//! Percolation configurations on finite boxes and the cube calculus built on
//! top of them.

mod config;
mod cubes;
mod lattice_box;
pub mod snapshot;

pub use config::{
    dir_axis, edge_index, sample_bond_config, sample_site_config, shift_sites, BondConfig, SiteConfig,
};
pub use cubes::{enlarge_cube, enlarge_within, oplus_of, plus_of, tile, Enlargement, Tiling};
pub use lattice_box::{l1, l2_sq, linf, LatticeBox, MAX_DIM};
