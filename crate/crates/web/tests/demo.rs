use texdeform_web::Demo;

#[test]
fn arrays_have_matching_lengths() {
    let demo = Demo::new(8, 12).unwrap();
    let n = demo.vertex_count();
    assert_eq!(demo.positions().len(), 3 * n);
    assert_eq!(demo.uvs().len(), 2 * n);
    assert_eq!(demo.features().len(), 12);
    assert_eq!(demo.targets().len(), 24);
    assert!(demo.faces().iter().all(|&i| (i as usize) < n));
}

#[test]
fn weight_field_peaks_at_the_feature() {
    let demo = Demo::new(8, 6).unwrap();
    let w = demo.weight_field(2, 2.0, 1e-3).unwrap();
    let v = demo.features()[2] as usize;
    assert_eq!(w[v], 1.0);
    assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
    assert!(demo.weight_field(6, 2.0, 1e-3).is_err());
}

#[test]
fn unwarped_run_keeps_the_sphere() {
    let mut demo = Demo::new(8, 12).unwrap();
    let before = demo.positions();
    let summary: serde_json::Value = serde_json::from_str(&demo.run(0.5, 2.0, 1e-3, 10).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    let moved = before.iter().zip(demo.positions()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(moved < 1e-6, "{moved}");
}

#[test]
fn warped_run_moves_vertices_and_reset_restores() {
    let mut demo = Demo::new(8, 12).unwrap();
    let before = demo.positions();
    demo.set_warp(40.0);
    let summary: serde_json::Value = serde_json::from_str(&demo.run(0.5, 2.0, 1e-3, 10).unwrap()).unwrap();
    assert!(!summary["history"].as_array().unwrap().is_empty());
    assert_ne!(demo.positions(), before);
    demo.reset();
    assert_eq!(demo.positions(), before);
    assert!(demo.run(1.5, 2.0, 1e-3, 10).unwrap_err().contains("alpha"));
}
