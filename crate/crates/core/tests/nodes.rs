use std::f64::consts::PI;

use pilot_relax::nodes::{find_nodes, refine_node, track_node};
use pilot_relax::wavefield::WaveState;

#[test]
fn psi1_node_path_is_one_closed_loop() {
    let s = WaveState::psi1();
    let paths = track_node(&s, "psi1", 0.0, s.period(), 0.01, 64).unwrap();
    assert_eq!(paths.len(), 1);
    let path = &paths[0];
    assert!(path.is_closed(1e-6));
    for &(t, x) in &path.samples {
        assert!(s.value(x, t).norm() < 1e-8, "t = {t}");
    }
    let hops = path
        .samples
        .windows(2)
        .map(|w| (w[1].1[0] - w[0].1[0]).hypot(w[1].1[1] - w[0].1[1]));
    assert!(hops.fold(0.0, f64::max) < 0.1);
}

#[test]
fn psi1_period_is_four_pi() {
    assert!((WaveState::psi1().period() - 4.0 * PI).abs() < 1e-12);
}

#[test]
fn psi1_gains_a_second_node_near_the_walls_at_times() {
    let s = WaveState::psi1();
    let mut counts = [0usize; 3];
    for k in 0..200 {
        let t = k as f64 * 4.0 * PI / 200.0;
        let nodes = find_nodes(&s, t, 64);
        assert!((1..=2).contains(&nodes.len()), "t = {t}");
        counts[nodes.len()] += 1;
        for x in &nodes {
            let back = refine_node(&s, t, [x[0] + 1e-3, x[1] - 1e-3]).unwrap();
            assert!((back[0] - x[0]).hypot(back[1] - x[1]) < 1e-9);
        }
    }
    assert!(counts[1] > counts[2] && counts[2] > 0);
    assert_eq!(find_nodes(&s, 0.0, 64).len(), 1);
}
