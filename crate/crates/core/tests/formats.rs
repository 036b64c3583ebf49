mod common;

use common::*;
use nalgebra::Point2;
use proptest::prelude::*;
use texdeform::formats::{load_correspondences, save_correspondences, save_result, Correspondence, CorrespondenceSet, ImageInfo, Report};
use texdeform::lri::lri_encode;
use texdeform::obj::{load_obj, parse_obj};
use texdeform::optimize::{run, total_energy, SolverConfig};
use texdeform::{fixtures, Error, LaplacianScheme};

#[test]
fn version_is_optional_but_checked() {
    let body = r#""image":{"width":10,"height":10},"pairs":[{"vertex":3,"pixel":[1.5,2]}]"#;
    assert!(CorrespondenceSet::from_json_str(&format!("{{{body}}}")).is_ok());
    assert!(CorrespondenceSet::from_json_str(&format!(r#"{{"version":1,{body}}}"#)).is_ok());
    let err = CorrespondenceSet::from_json_str(&format!(r#"{{"version":7,{body}}}"#)).unwrap_err();
    assert_eq!(err.field_path().as_deref(), Some("version"));
}

#[test]
fn schema_paths_name_the_field() {
    let cases = [
        (r#"{"image":{"width":10},"pairs":[]}"#, "image"),
        (r#"{"image":{"width":10,"height":10},"pairs":[{"vertex":-1,"pixel":[0,0]}]}"#, "pairs[0].vertex"),
        (r#"{"image":{"width":10,"height":10},"pairs":[{"vertex":0,"pixel":[0,0]},{"vertex":1,"pixel":"x"}]}"#, "pairs[1].pixel"),
        (r#"{"image":{"width":10,"height":10},"pairs":[],"extra":1}"#, "extra"),
        (r#"{"image":{"width":10,"height":10},"pairs":[{"vertex":0,"pixel":[0,11]}]}"#, "pairs[0].pixel"),
    ];
    for (text, path) in cases {
        let err = CorrespondenceSet::from_json_str(text).unwrap_err();
        assert_eq!(err.field_path().as_deref(), Some(path), "{text}: {err}");
    }
}

#[test]
fn vertex_ids_are_checked_against_the_mesh() {
    let mesh = fixtures::grid(3, 3, 1.0);
    let n = mesh.vertex_count();
    let set = CorrespondenceSet::new(5.0, 5.0, vec![Correspondence { vertex: n, pixel: Point2::new(1.0, 1.0) }]).unwrap();
    assert!(matches!(set.check_mesh(&mesh), Err(Error::InvalidVertex { id, count }) if id == n && count == n));
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corr, _) = fixtures::consistent_fixture();
    let path = dir.path().join("corr.json");
    save_correspondences(&corr, &path).unwrap();
    assert_eq!(load_correspondences(&path).unwrap(), corr);
    assert!(matches!(load_correspondences(dir.path().join("missing.json")), Err(Error::Io { .. })));
}

#[test]
fn saved_result_is_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(5);
    let mesh = random_closed(&mut r, 60);
    let verts = random_vertices(&mut r, mesh.vertex_count(), 8);
    let mut cam = random_camera(&mut r);
    let corr = noisy_correspondences(&mut r, &mesh, &verts, &mut cam, 10.0);

    let tex = dir.path().join("photo.png");
    let (w, h) = (corr.width().ceil() as u32, corr.height().ceil() as u32);
    image::RgbImage::new(w, h).save(&tex).unwrap();
    let image = ImageInfo::probe(&tex).unwrap();
    assert_eq!((image.width, image.height), (w, h));

    let cfg = SolverConfig { max_iterations: 4, ..Default::default() };
    let result = run(&mesh, &image, &corr, &cfg).unwrap();
    let out = dir.path().join("out");
    let saved = save_result(&result, &cfg, &image, &out).unwrap();

    let report: Report = serde_json::from_str(&std::fs::read_to_string(&saved.report).unwrap()).unwrap();
    assert_eq!(report.energy_history.len(), report.iterations);
    assert_eq!(report.timings.per_iteration.len(), report.iterations);
    assert_eq!(report.feature_count, corr.len());
    assert_eq!(report, Report::new(&result, &cfg));

    let text = std::fs::read_to_string(&saved.mesh).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("vt ")).count(), mesh.vertex_count());
    let mtl = std::fs::read_to_string(out.join("mesh.mtl")).unwrap();
    assert!(mtl.lines().any(|l| l == "map_Kd photo.png"));
    assert!(out.join("photo.png").exists());

    let reloaded = load_obj(&saved.mesh).unwrap();
    assert_eq!(reloaded.faces(), mesh.faces());
    assert!(max_distance(reloaded.positions(), result.mesh.positions()) <= 1e-12);
    let rest = lri_encode(&mesh, LaplacianScheme::Cotangent).unwrap();
    let again = total_energy(&reloaded, &corr, &result.cameras, &weights_for(&reloaded, &corr), &rest, result.frames.as_ref().unwrap(), cfg.alpha).unwrap();
    assert!(relative_gap(again.detail, report.energy.detail) <= 1e-9, "{} vs {}", again.detail, report.energy.detail);
}

fn weights_for(mesh: &texdeform::Mesh, corr: &CorrespondenceSet) -> texdeform::WeightField {
    let geo = texdeform::geodesic::multi_source_geodesics(mesh, &corr.vertices()).unwrap();
    texdeform::geodesic::geodesic_weights(&geo, 2.0, 1e-3).unwrap()
}

#[test]
fn alpha_one_output_matches_input_obj() {
    let dir = tempfile::tempdir().unwrap();
    let (mesh, corr, _) = fixtures::consistent_fixture();
    let image = ImageInfo::new(640, 480).unwrap();
    let cfg = SolverConfig { alpha: 1.0, ..Default::default() };
    let result = run(&mesh, &image, &corr, &cfg).unwrap();
    let saved = save_result(&result, &cfg, &image, dir.path()).unwrap();
    assert!(saved.texture.is_none());
    let back = load_obj(&saved.mesh).unwrap();
    assert!(max_distance(back.positions(), mesh.positions()) <= 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correspondence_json_round_trips(
        w in 1.0..4096.0f64,
        h in 1.0..4096.0f64,
        raw in prop::collection::btree_map(0usize..100_000, (0.0..1.0f64, 0.0..1.0f64), 1..40),
    ) {
        let pairs = raw.into_iter().map(|(v, (x, y))| Correspondence { vertex: v, pixel: Point2::new(x * w, y * h) }).collect();
        let set = CorrespondenceSet::new(w, h, pairs).unwrap();
        prop_assert_eq!(CorrespondenceSet::from_json_str(&set.to_json_string()).unwrap(), set);
    }

    #[test]
    fn obj_text_keeps_positions_exact(seed in 0u64..1000) {
        let mut r = rng(seed);
        let mesh = random_mesh(&mut r, 60);
        let text = texdeform::obj::obj_string(&mesh, None, None).unwrap();
        let back = parse_obj(&text, "p").unwrap();
        prop_assert_eq!(back.positions(), mesh.positions());
    }
}
