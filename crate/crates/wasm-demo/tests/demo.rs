use cfsearch_wasm_demo::Demo;

#[test]
fn fan_orders_bands_and_follows_the_driver() {
    let demo = Demo::new(3).unwrap();
    let low = demo.fan(0, 8).unwrap();
    let high = demo.fan(demo.levels().len() - 1, 8).unwrap();
    assert_eq!(low.history.len(), cfsearch_wasm_demo::HISTORY_SHOWN);
    assert_eq!(low.bands.len(), 8);
    for step in &low.bands {
        assert!(step.windows(2).all(|w| w[0] <= w[1]));
    }
    // The first step only sees observed data, so the driver kicks in from step two.
    assert_eq!(low.path[0], high.path[0]);
    assert!(high.path[7] > low.path[7] + 1.0);
    assert!(demo.fan(99, 8).is_err());
}

#[test]
fn search_reaches_a_reachable_goal() {
    let demo = Demo::new(3).unwrap();
    let high = demo.fan(demo.levels().len() - 1, 8).unwrap();
    let goal = high.path[7];
    let summary = demo.search(goal, 8, 40, 40, 1).unwrap();
    assert!(summary.converged, "{summary:?}");
    assert!((summary.terminal - goal).abs() <= 0.05 * goal.abs());
    assert!(summary.best_fitness.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(summary.driver_levels.len(), 8);
    let json = serde_json::to_value(&summary).unwrap();
    assert_eq!(json["converged"], true);

    let again = demo.search(goal, 8, 40, 40, 1).unwrap();
    assert_eq!(again.best_fitness, summary.best_fitness);
}
