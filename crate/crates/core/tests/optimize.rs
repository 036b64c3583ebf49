mod common;

use common::*;
use nalgebra::{Matrix2x3, Point2, Point3, Vector2};
use proptest::prelude::*;
use rand::Rng;
use texdeform::camera::{fit_local_cameras, AffineCamera, CameraField};
use texdeform::deform::FrameField;
use texdeform::formats::{Correspondence, CorrespondenceSet, ImageInfo, Report};
use texdeform::geodesic::{geodesic_weights, multi_source_geodesics};
use texdeform::lri::lri_encode;
use texdeform::optimize::{assign_uvs, out_of_image, run, total_energy, AnchorPolicy, SolverConfig, StopReason};
use texdeform::{fixtures, DetailMode, Error, LaplacianScheme, Mesh, Stage};

fn image_of(corr: &CorrespondenceSet) -> ImageInfo {
    ImageInfo::new(corr.width().ceil() as u32, corr.height().ceil() as u32).unwrap()
}

/// Both energy terms written as plain loops over scalars.
fn scalar_energy(
    mesh: &Mesh,
    corr: &CorrespondenceSet,
    cameras: &CameraField,
    weights: &texdeform::WeightField,
    lri: &texdeform::lri::LriEncoding,
    frames: &FrameField,
) -> (f64, f64) {
    let n = mesh.vertex_count();
    let mut detail = 0.0;
    for i in 0..n {
        let mut lv = [0.0; 3];
        for c in 0..3 {
            lv[c] = mesh.position(i)[c];
            for &(j, w) in lri.laplacian.row(i) {
                lv[c] -= w * mesh.position(j)[c];
            }
        }
        let f = &frames.frames[i];
        let d = &lri.local_deltas[i];
        for r in 0..3 {
            let mut target = 0.0;
            for c in 0..3 {
                target += f[(r, c)] * d[c];
            }
            detail += (lv[r] - target) * (lv[r] - target);
        }
    }
    let mut projection = 0.0;
    for i in 0..n {
        let cam = cameras.get(i);
        for (j, pair) in corr.pairs().iter().enumerate() {
            let v = mesh.position(pair.vertex);
            for r in 0..2 {
                let mut e = cam.translation[r] - pair.pixel[r];
                for c in 0..3 {
                    e += cam.matrix[(r, c)] * v[c];
                }
                projection += weights.get(j, i) * e * e;
            }
        }
    }
    (detail, projection)
}

#[test]
fn energy_matches_scalar_loops() {
    for seed in 0..10 {
        let mut r = rng(500 + seed);
        let rest = random_mesh(&mut r, 40);
        let lri = lri_encode(&rest, LaplacianScheme::Cotangent).unwrap();
        let moved = rest
            .with_positions(rest.positions().iter().map(|p| p + nalgebra::Vector3::new(r.random_range(-0.1..0.1), 0.0, r.random_range(-0.1..0.1))).collect())
            .unwrap();
        let verts = random_vertices(&mut r, rest.vertex_count(), 5);
        let mut cam = random_camera(&mut r);
        let corr = noisy_correspondences(&mut r, &rest, &verts, &mut cam, 3.0);
        let geo = multi_source_geodesics(&moved, &verts).unwrap();
        let weights = geodesic_weights(&geo, 2.0, 1e-3).unwrap();
        let cameras = CameraField::new((0..rest.vertex_count()).map(|_| random_camera(&mut r)).collect());
        let frames = FrameField {
            frames: lri.frames.iter().map(|f| *nalgebra::Rotation3::from_euler_angles(0.1, 0.2, 0.3).matrix() * f).collect(),
        };
        let alpha = r.random_range(0.0..1.0);
        let e = total_energy(&moved, &corr, &cameras, &weights, &lri, &frames, alpha).unwrap();
        let (detail, projection) = scalar_energy(&moved, &corr, &cameras, &weights, &lri, &frames);
        assert!(relative_gap(e.detail, detail) <= 1e-10);
        assert!(relative_gap(e.projection, projection) <= 1e-10);
        assert!(relative_gap(e.total, (1.0 - alpha) * detail + alpha * projection) <= 1e-12);
    }
}

#[test]
fn rest_state_has_zero_detail_energy() {
    let (mesh, corr, cam) = fixtures::consistent_fixture();
    let lri = lri_encode(&mesh, LaplacianScheme::Cotangent).unwrap();
    let geo = multi_source_geodesics(&mesh, &corr.vertices()).unwrap();
    let weights = geodesic_weights(&geo, 2.0, 1e-3).unwrap();
    let frames = FrameField { frames: lri.frames.clone() };
    let cameras = CameraField::uniform(cam, mesh.vertex_count());
    let e = total_energy(&mesh, &corr, &cameras, &weights, &lri, &frames, 0.5).unwrap();
    assert!(e.detail <= 1e-20);
    assert!(e.projection <= 1e-12);
}

#[test]
fn centred_vertex_maps_to_the_image_centre() {
    let mesh = Mesh::new(
        vec![Point3::new(50.0, 40.0, 7.0), Point3::new(0.0, 0.0, 0.0), Point3::new(120.0, 0.0, 1.0)],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let cams = CameraField::uniform(AffineCamera::orthographic(), 3);
    let uvs = assign_uvs(&mesh, &cams, 100.0, 80.0).unwrap();
    assert_eq!(uvs[0], Point2::new(0.5, 0.5));
    assert!(uvs[2].x > 1.0);
    assert_eq!(out_of_image(&uvs), vec![2]);
}

#[test]
fn alpha_one_keeps_the_mesh_bit_identical() {
    let (mesh, corr) = {
        let mut r = rng(42);
        let mesh = random_closed(&mut r, 50);
        let verts = random_vertices(&mut r, mesh.vertex_count(), 6);
        let mut cam = random_camera(&mut r);
        let corr = noisy_correspondences(&mut r, &mesh, &verts, &mut cam, 8.0);
        (mesh, corr)
    };
    let cfg = SolverConfig { alpha: 1.0, ..Default::default() };
    let result = run(&mesh, &image_of(&corr), &corr, &cfg).unwrap();
    for (a, b) in result.mesh.positions().iter().zip(mesh.positions()) {
        for c in 0..3 {
            assert_eq!(a[c].to_bits(), b[c].to_bits());
        }
    }
    assert_eq!(result.uvs.len(), mesh.vertex_count());
}

#[test]
fn consistent_fixture_converges_at_once() {
    let (mesh, corr, _) = fixtures::consistent_fixture();
    let image = image_of(&corr);
    let result = run(&mesh, &image, &corr, &SolverConfig::default()).unwrap();
    assert!(result.converged());
    assert!(result.iterations <= 3);
    let p = corr.len() as f64;
    assert!(result.energy.projection <= 1e-8 * p * image.diagonal().powi(2));
    assert!(max_distance(result.mesh.positions(), mesh.positions()) <= 1e-4 * mesh.bbox_diagonal());
    for pair in corr.pairs() {
        let uv = result.uvs[pair.vertex];
        assert!((uv.x * image.width as f64 - pair.pixel.x).abs() <= 1e-6 * image.width as f64);
        assert!((uv.y * image.height as f64 - pair.pixel.y).abs() <= 1e-6 * image.height as f64);
    }
}

#[test]
fn history_is_finite_and_bounded_by_max_iterations() {
    let mut r = rng(77);
    let mesh = random_closed(&mut r, 50);
    let verts = random_vertices(&mut r, mesh.vertex_count(), 8);
    let mut cam = random_camera(&mut r);
    let corr = noisy_correspondences(&mut r, &mesh, &verts, &mut cam, 15.0);
    let cfg = SolverConfig { max_iterations: 3, tol: 1e-15, ..Default::default() };
    let result = run(&mesh, &image_of(&corr), &corr, &cfg).unwrap();
    assert_eq!(result.stop_reason, StopReason::MaxIterations);
    assert_eq!(result.iterations, 3);
    assert_eq!(result.history.len(), 3);
    for h in &result.history {
        assert!(h.energy.is_finite() && h.energy.detail >= 0.0 && h.energy.projection >= 0.0);
    }
}

#[test]
fn setup_errors_are_tagged() {
    let (mesh, corr, _) = fixtures::consistent_fixture();
    let image = image_of(&corr);

    let few = CorrespondenceSet::new(corr.width(), corr.height(), corr.pairs()[..3].to_vec()).unwrap();
    let err = run(&mesh, &image, &few, &SolverConfig::default()).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage: Stage::Setup, iteration: 0, source } if matches!(**source, Error::TooFewCorrespondences { .. })), "{err}");

    let small = ImageInfo::new(10, 10).unwrap();
    let err = run(&mesh, &small, &corr, &SolverConfig::default()).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage: Stage::Setup, source, .. } if matches!(**source, Error::PixelOutOfBounds { .. })), "{err}");

    let cfg = SolverConfig { anchor: AnchorPolicy::Vertex(mesh.vertex_count()), ..Default::default() };
    assert!(run(&mesh, &image, &corr, &cfg).is_err());
    let cfg = SolverConfig { beta: 0.0, ..Default::default() };
    assert!(run(&mesh, &image, &corr, &cfg).is_err());
}

#[test]
fn coplanar_features_fail_in_the_camera_stage() {
    let mesh = fixtures::grid(4, 4, 1.0);
    let pairs = (0..4)
        .map(|v| Correspondence { vertex: v, pixel: Point2::new(10.0 + v as f64, 10.0) })
        .collect();
    let corr = CorrespondenceSet::new(100.0, 100.0, pairs).unwrap();
    let err = run(&mesh, &ImageInfo::new(100, 100).unwrap(), &corr, &SolverConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: Stage::GlobalCamera, iteration: 1, .. }), "{err}");
}

#[test]
fn report_is_deterministic() {
    let mut r = rng(91);
    let mesh = random_closed(&mut r, 50);
    let verts = random_vertices(&mut r, mesh.vertex_count(), 7);
    let mut cam = random_camera(&mut r);
    let corr = noisy_correspondences(&mut r, &mesh, &verts, &mut cam, 6.0);
    let cfg = SolverConfig { mode: DetailMode::Literal, ..Default::default() };
    let a = run(&mesh, &image_of(&corr), &corr, &cfg).unwrap();
    let b = run(&mesh, &image_of(&corr), &corr, &cfg).unwrap();
    assert_eq!(Report::new(&a, &cfg).deterministic_json(), Report::new(&b, &cfg).deterministic_json());
    assert_eq!(a.mesh.positions(), b.mesh.positions());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn local_fit_never_loses_to_another_camera_field(seed in 0u64..10_000, scale in 0.5..2.0f64) {
        let mut r = rng(seed);
        let mesh = random_mesh(&mut r, 40);
        let verts = random_vertices(&mut r, mesh.vertex_count(), 6);
        let mut cam = random_camera(&mut r);
        let corr = noisy_correspondences(&mut r, &mesh, &verts, &mut cam, 5.0);
        let geo = multi_source_geodesics(&mesh, &verts).unwrap();
        let weights = geodesic_weights(&geo, 2.0, 1e-3).unwrap();
        let lri = lri_encode(&mesh, LaplacianScheme::Cotangent).unwrap();
        let frames = FrameField { frames: lri.frames.clone() };
        let fitted = fit_local_cameras(&mesh, &corr, &weights);
        prop_assume!(fitted.is_ok());
        let other = CameraField::uniform(
            AffineCamera::new(cam.matrix * scale + Matrix2x3::repeat(0.3), cam.translation + Vector2::new(1.0, -2.0)),
            mesh.vertex_count(),
        );
        let a = total_energy(&mesh, &corr, &fitted.unwrap(), &weights, &lri, &frames, 0.5).unwrap();
        let b = total_energy(&mesh, &corr, &other, &weights, &lri, &frames, 0.5).unwrap();
        prop_assert!(a.projection <= b.projection * (1.0 + 1e-12));
    }
}
