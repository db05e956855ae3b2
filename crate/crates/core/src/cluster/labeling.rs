use std::cmp::Ordering;
use std::io::Write;

use super::graph::{Adjacency, ConfigRef, OpenGraph, RegionView};
use super::vertex_set::VertexSet;
use crate::error::Result;
use crate::percolation::LatticeBox;

/// Marker for vertices that belong to no cluster.
pub const NO_CLUSTER: u32 = u32::MAX;

/// Connected components of the open graph inside a region.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    frame: LatticeBox,
    region: LatticeBox,
    adjacency: Adjacency,
    labels: Vec<u32>,
    sizes: Vec<usize>,
    min_vertex: Vec<Vec<i32>>,
}

/// Labels the open clusters of `cfg` inside `region`.
///
/// Bond vertices count as open when they have an open edge inside the
/// region. Star adjacency is rejected for bond configurations.
pub fn label_clusters<'a>(
    cfg: impl Into<ConfigRef<'a>>,
    region: &LatticeBox,
    adjacency: Adjacency,
) -> Result<ClusterLabeling> {
    let graph = OpenGraph::new(cfg, adjacency)?;
    label_graph(graph, region)
}

pub fn label_graph(graph: OpenGraph<'_>, region: &LatticeBox) -> Result<ClusterLabeling> {
    let view = RegionView::new(graph, region)?;
    Ok(label_view(&view, graph.adjacency()))
}

pub(crate) fn label_view(view: &RegionView<'_>, adjacency: Adjacency) -> ClusterLabeling {
    let n = view.len();
    let region = view.region();
    let d = region.dim();
    let mut labels = vec![NO_CLUSTER; n];
    let mut sizes = Vec::new();
    let mut min_vertex = Vec::new();
    let mut queue = Vec::new();
    let mut c = vec![0; d];
    for start in 0..n {
        if labels[start] != NO_CLUSTER || !view.is_open(start) {
            continue;
        }
        let id = sizes.len() as u32;
        labels[start] = id;
        queue.clear();
        queue.push(start);
        let mut best = region.coords_of(start);
        let mut head = 0;
        while head < queue.len() {
            let r = queue[head];
            head += 1;
            region.coords_into(r, &mut c);
            if c.as_slice().cmp(best.as_slice()) == Ordering::Less {
                best.copy_from_slice(&c);
            }
            view.for_each_neighbor(r, &c, |s| {
                if labels[s] == NO_CLUSTER {
                    labels[s] = id;
                    queue.push(s);
                }
            });
        }
        sizes.push(queue.len());
        min_vertex.push(best);
    }
    ClusterLabeling {
        frame: view.frame().clone(),
        region: region.clone(),
        adjacency,
        labels,
        sizes,
        min_vertex,
    }
}

impl ClusterLabeling {
    pub fn frame(&self) -> &LatticeBox {
        &self.frame
    }
    pub fn region(&self) -> &LatticeBox {
        &self.region
    }
    pub fn adjacency(&self) -> Adjacency {
        self.adjacency
    }
    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
    /// Lexicographically smallest vertex of each cluster.
    pub fn min_vertices(&self) -> &[Vec<i32>] {
        &self.min_vertex
    }
    /// Labels indexed by region-local vertex index.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
    pub fn open_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != NO_CLUSTER).count()
    }
    pub fn label_of(&self, x: &[i32]) -> Option<u32> {
        self.region
            .index_of(x)
            .map(|r| self.labels[r])
            .filter(|&l| l != NO_CLUSTER)
    }

    /// Members of cluster `id` in the frame's indexing.
    pub fn cluster(&self, id: u32) -> VertexSet {
        let mut c = vec![0; self.region.dim()];
        let idx = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == id)
            .map(|(r, _)| {
                self.region.coords_into(r, &mut c);
                self.frame.index_of(&c).expect("region inside frame")
            })
            .collect();
        VertexSet::new(&self.frame, idx)
    }

    /// Cluster containing `x`, empty when `x` is closed.
    pub fn cluster_of(&self, x: &[i32]) -> VertexSet {
        match self.label_of(x) {
            Some(id) => self.cluster(id),
            None => VertexSet::empty(&self.frame),
        }
    }

    /// Index of the largest cluster under the size-then-minimal-vertex order.
    pub fn largest_id(&self) -> Option<u32> {
        (0..self.sizes.len())
            .min_by(|&a, &b| {
                self.sizes[b]
                    .cmp(&self.sizes[a])
                    .then_with(|| self.min_vertex[a].cmp(&self.min_vertex[b]))
            })
            .map(|i| i as u32)
    }

    /// Writes `x0,..,x{d-1},component` rows for every open vertex.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let d = self.region.dim();
        let header: Vec<String> = (0..d).map(|a| format!("x{a}")).chain(["component".into()]).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut c = vec![0; d];
        for (r, &l) in self.labels.iter().enumerate() {
            if l == NO_CLUSTER {
                continue;
            }
            self.region.coords_into(r, &mut c);
            for x in &c {
                write!(w, "{x},")?;
            }
            writeln!(w, "{l}")?;
        }
        Ok(())
    }
}

/// The largest open cluster of the labeling restricted to `q`.
///
/// When `q` is the labeled region this is the largest open `q`-cluster.
/// For a smaller `q` the candidates are the sets `C ∩ q`. Ties go to the
/// candidate whose smallest vertex is lexicographically smaller. The result
/// is empty when `q` holds no open vertex.
pub fn largest_cluster(labeling: &ClusterLabeling, q: &LatticeBox) -> VertexSet {
    if q == labeling.region() {
        return match labeling.largest_id() {
            Some(id) => labeling.cluster(id),
            None => VertexSet::empty(labeling.frame()),
        };
    }
    let Some(q) = labeling.region().intersect(q) else {
        return VertexSet::empty(labeling.frame());
    };
    let mut size = vec![0usize; labeling.cluster_count()];
    let mut best: Vec<Option<Vec<i32>>> = vec![None; labeling.cluster_count()];
    for x in q.points() {
        if let Some(l) = labeling.label_of(&x) {
            size[l as usize] += 1;
            let slot = &mut best[l as usize];
            if slot.as_ref().map(|b| x < *b).unwrap_or(true) {
                *slot = Some(x);
            }
        }
    }
    let winner = (0..size.len())
        .filter(|&i| size[i] > 0)
        .min_by(|&a, &b| size[b].cmp(&size[a]).then_with(|| best[a].cmp(&best[b])));
    match winner {
        Some(id) => labeling.cluster(id as u32).restrict(&q),
        None => VertexSet::empty(labeling.frame()),
    }
}

/// Labels `q` and returns its largest open cluster `C^v(q)`.
pub fn largest_open_cluster(graph: OpenGraph<'_>, q: &LatticeBox) -> Result<VertexSet> {
    let lab = label_graph(graph, q)?;
    Ok(largest_cluster(&lab, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::{BondConfig, SiteConfig};

    fn bx(side: i32) -> LatticeBox {
        LatticeBox::cube(&[0, 0], side).unwrap()
    }

    #[test]
    fn all_open_sites_form_one_cluster() {
        let b = bx(2);
        let cfg = SiteConfig::from_predicate(&b, |_| true);
        let lab = label_clusters(&cfg, &b, Adjacency::Nearest).unwrap();
        assert_eq!(lab.sizes(), &[9]);
    }

    #[test]
    fn diagonal_pair_depends_on_adjacency() {
        let b = bx(2);
        let cfg = SiteConfig::from_predicate(&b, |x| x == [0, 0] || x == [1, 1]);
        let near = label_clusters(&cfg, &b, Adjacency::Nearest).unwrap();
        let star = label_clusters(&cfg, &b, Adjacency::Star).unwrap();
        assert_eq!(near.cluster_count(), 2);
        assert_eq!(star.cluster_count(), 1);
    }

    #[test]
    fn closed_bond_config_has_no_clusters() {
        let b = bx(5);
        let cfg = BondConfig::sample(&b, 0.0, 1).unwrap();
        let lab = label_clusters(&cfg, &b, Adjacency::Nearest).unwrap();
        assert_eq!(lab.cluster_count(), 0);
        assert!(largest_cluster(&lab, &b).is_empty());
    }

    #[test]
    fn star_adjacency_rejected_for_bonds() {
        let b = bx(3);
        let cfg = BondConfig::sample(&b, 0.5, 1).unwrap();
        assert!(label_clusters(&cfg, &b, Adjacency::Star).is_err());
    }

    #[test]
    fn largest_prefers_size_then_smaller_vertex() {
        let b = LatticeBox::new(vec![0, 0], vec![9, 2]).unwrap();
        let five = SiteConfig::from_predicate(&b, |x| x[1] == 0 && x[0] < 5 || x[1] == 2 && x[0] >= 7);
        let lab = label_clusters(&five, &b, Adjacency::Nearest).unwrap();
        let c = largest_cluster(&lab, &b);
        assert_eq!(c.len(), 5);
        assert!(c.contains_point(&[0, 0]));

        let tie = SiteConfig::from_predicate(&b, |x| x[1] == 2 && x[0] < 4 || x[1] == 0 && x[0] >= 6);
        let lab = label_clusters(&tie, &b, Adjacency::Nearest).unwrap();
        let c = largest_cluster(&lab, &b);
        assert_eq!(c.len(), 4);
        assert!(c.contains_point(&[0, 2]), "cluster with lexicographically smaller minimum wins");
    }

    #[test]
    fn bond_vertices_need_an_edge_inside_region() {
        let b = bx(4);
        let cfg = BondConfig::from_edges(&b, &[(vec![1, 1], 0)]).unwrap();
        let inner = LatticeBox::new(vec![0, 0], vec![1, 4]).unwrap();
        assert_eq!(label_clusters(&cfg, &b, Adjacency::Nearest).unwrap().open_count(), 2);
        assert_eq!(label_clusters(&cfg, &inner, Adjacency::Nearest).unwrap().open_count(), 0);
    }

    #[test]
    fn size_table_matches_open_count() {
        let b = bx(30);
        let cfg = BondConfig::sample(&b, 0.55, 9).unwrap();
        let lab = label_clusters(&cfg, &b, Adjacency::Nearest).unwrap();
        assert_eq!(lab.sizes().iter().sum::<usize>(), lab.open_count());
        let open = (0..b.vertex_count()).filter(|&v| cfg.is_vertex_open(v)).count();
        assert_eq!(lab.open_count(), open);
        let id = lab.largest_id().unwrap();
        assert_eq!(largest_cluster(&lab, &b).len(), lab.sizes()[id as usize]);
    }

    #[test]
    fn csv_lists_open_vertices() {
        let b = bx(1);
        let cfg = SiteConfig::from_predicate(&b, |x| x[0] == 0);
        let lab = label_clusters(&cfg, &b, Adjacency::Nearest).unwrap();
        let mut out = Vec::new();
        lab.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "x0,x1,component\n0,0,0\n0,1,0\n");
    }
}
