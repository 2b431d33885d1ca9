use swarmlab::fullstack_sim::{run_fullstack, FullStackConfig};

fn mean_in_degree(m: &swarmlab::fullstack_sim::FullStackMetrics, class: &str) -> f64 {
    let nodes: Vec<_> = m.mesh.iter().filter(|d| d.class == class).collect();
    nodes.iter().map(|d| d.in_degree as f64).sum::<f64>() / nodes.len() as f64
}

#[test]
fn high_bandwidth_peers_end_up_with_more_suppliers() {
    let m = run_fullstack(&FullStackConfig { seed: 5, ..FullStackConfig::default() }).unwrap();
    assert_eq!(m.mesh.len(), 101);
    let (high, low) = (mean_in_degree(&m, "High"), mean_in_degree(&m, "Low"));
    assert!(high > low, "High {high} vs Low {low}");
    for d in &m.mesh {
        assert!(d.in_degree <= d.in_cap && d.out_degree <= d.out_cap);
    }
    assert_eq!(m.requests_sent, m.requests_received + m.requests_in_flight);
}
