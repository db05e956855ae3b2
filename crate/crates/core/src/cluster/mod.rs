//! Cluster labeling, crossing tests, boundaries, chemical distance and
//! induced weighted subgraphs.

mod geometry;
mod graph;
mod labeling;
mod subgraph;
mod vertex_set;

pub(crate) use graph::RegionView;
pub use geometry::{
    chemical_ball, chemical_distance, diameter, diameter_of_points, edge_boundary, external_boundary,
    internal_boundary, is_crossing, open_edge_boundary, ChemicalBall, Crossing, LatticeEdge, INFINITE,
};
pub use graph::{offsets, Adjacency, ConfigRef, OpenGraph};
pub use labeling::{
    label_clusters, label_graph, largest_cluster, largest_open_cluster, ClusterLabeling, NO_CLUSTER,
};
pub use subgraph::{induced_graph, WeightedSubgraph};
pub use vertex_set::VertexSet;
