use sigctl_demo::{departure_histogram, queue_rewards, Demo};

#[test]
fn histogram_counts_every_sample() {
    let h = departure_histogram(2.0, 5.0, 3600.0, 1000, 12, 1).unwrap();
    assert_eq!(h.iter().sum::<u32>(), 1000);
    assert!(h[1] > h[10]);
}

#[test]
fn translation_moves_only_log_energy() {
    let near = queue_rewards(4, 2.0, 8.0).unwrap();
    let far = queue_rewards(4, 60.0, 8.0).unwrap();
    assert_eq!(near[0], far[0]);
    assert!(near[1] < far[1]);
}

#[test]
fn demo_runs_to_completion() {
    let mut d = Demo::new(1, 120, "max-pressure").unwrap();
    let first: serde_json::Value = serde_json::from_str(&d.tick().unwrap()).unwrap();
    assert_eq!(first["lanes"].as_array().unwrap().len(), 4);
    d.set_controller("random").unwrap();
    while !d.finished() {
        d.tick().unwrap();
    }
}
