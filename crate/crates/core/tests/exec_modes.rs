use perc_core::events::{estimate_tail, EventKind, TailSpec};
use perc_core::par::Exec;
use perc_core::percolation::{BondConfig, LatticeBox, SiteConfig};
use perc_core::walk::{cluster_graph, heat_kernel_rows, mc_heat_kernel, msd, Boundary, MsdMode};

fn cluster(side: i32, p: f64, seed: u64) -> perc_core::cluster::WeightedSubgraph {
    let bx = LatticeBox::cube(&[0, 0], side).unwrap();
    cluster_graph(&BondConfig::sample(&bx, p, seed).unwrap(), &bx).unwrap()
}

#[test]
fn sampling_does_not_depend_on_execution_mode() {
    let bx = LatticeBox::cube(&[0, 0, 0], 20).unwrap();
    let a = BondConfig::sample_with(&bx, 0.4, 17, Exec::Sequential).unwrap();
    let b = BondConfig::sample_with(&bx, 0.4, 17, Exec::Parallel).unwrap();
    assert_eq!(a.bits(), b.bits());
    let s = SiteConfig::sample_with(&bx, 0.7, 17, Exec::Sequential).unwrap();
    let t = SiteConfig::sample_with(&bx, 0.7, 17, Exec::Parallel).unwrap();
    assert_eq!(s.bits(), t.bits());
}

#[test]
fn monte_carlo_kernel_is_reproducible_across_modes() {
    let g = cluster(24, 0.7, 3);
    let times = [0.5, 2.0, 8.0];
    let a = mc_heat_kernel(&g, 0, &times, 3000, 21, Exec::Sequential).unwrap();
    let b = mc_heat_kernel(&g, 0, &times, 3000, 21, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exact_rows_agree_and_conserve_mass() {
    let g = cluster(24, 0.65, 8);
    let sources: Vec<usize> = (0..g.len()).step_by(g.len() / 5 + 1).collect();
    let times = [0.25, 3.0, 30.0];
    let a = heat_kernel_rows(&g, &sources, &times, Boundary::None, 1e-12, Exec::Sequential).unwrap();
    let b = heat_kernel_rows(&g, &sources, &times, Boundary::None, 1e-12, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    for ti in 0..times.len() {
        for &x in &sources {
            assert!((a.mass(ti, x) - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn exact_and_sampled_displacement_are_consistent() {
    let g = cluster(60, 1.0, 0);
    let x = g.index_of(&[30, 30]).unwrap();
    let times = [1.0, 4.0];
    let exact = msd(&g, x, &times, MsdMode::Exact, Exec::Parallel).unwrap();
    let mc = msd(&g, x, &times, MsdMode::MonteCarlo { trials: 20_000, seed: 5 }, Exec::Parallel).unwrap();
    for i in 0..times.len() {
        assert!((exact.values[i] - times[i]).abs() < 1e-9);
        assert!((mc.values[i] - exact.values[i]).abs() < 5.0 * mc.stderr[i] + 1e-12);
    }
}

#[test]
fn event_tails_are_reproducible_across_modes() {
    let spec = TailSpec { event: EventKind::K, sizes: vec![8, 12], trials: 100, p: 0.9, ..Default::default() };
    let a = estimate_tail(&spec, Exec::Sequential).unwrap();
    let b = estimate_tail(&spec, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}
