//! In-browser demo: a bumpy sphere, synthetic photo correspondences bent by
//! an adjustable warp, the geodesic weight field of any feature, and the full
//! alternating optimization.

use nalgebra::Point2;
use serde_json::json;
use texdeform::camera::AffineCamera;
use texdeform::geodesic::{geodesic_weights, multi_source_geodesics};
use texdeform::{fixtures, CorrespondenceSet, ImageInfo, Mesh, SolverConfig};
use wasm_bindgen::prelude::*;

const WIDTH: f64 = 512.0;
const HEIGHT: f64 = 512.0;

#[wasm_bindgen]
pub struct Demo {
    rest: Mesh,
    current: Mesh,
    camera: AffineCamera,
    features: Vec<usize>,
    corr: CorrespondenceSet,
    uvs: Vec<Point2<f64>>,
}

#[wasm_bindgen]
impl Demo {
    /// `detail` sets the sphere resolution; `feature_count` the number of picked pairs.
    #[wasm_bindgen(constructor)]
    pub fn new(detail: usize, feature_count: usize) -> Result<Demo, String> {
        let detail = detail.clamp(4, 64);
        let rest = fixtures::bumpy_sphere(detail, 2 * detail, 0.12);
        let feature_count = feature_count.clamp(4, rest.vertex_count());
        let camera = fixtures::framing_camera(&rest, WIDTH, HEIGHT);
        let features = fixtures::spread_vertices(&rest, feature_count);
        let corr = bend(&rest, &features, &camera, 0.0);
        let uvs = project_uvs(&rest, &camera);
        Ok(Demo {
            current: rest.clone(),
            rest,
            camera,
            features,
            corr,
            uvs,
        })
    }

    /// Moves the synthetic photo features along a smooth bend of the given strength (pixels).
    pub fn set_warp(&mut self, strength: f64) {
        self.corr = bend(&self.rest, &self.features, &self.camera, strength);
    }

    pub fn vertex_count(&self) -> usize {
        self.rest.vertex_count()
    }

    /// Flattened triangle indices.
    pub fn faces(&self) -> Vec<u32> {
        self.rest.faces().iter().flatten().map(|&i| i as u32).collect()
    }

    /// Flattened xyz of the current (possibly deformed) mesh.
    pub fn positions(&self) -> Vec<f64> {
        self.current.positions().iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    /// Flattened per-vertex texture coordinates, v pointing down.
    pub fn uvs(&self) -> Vec<f64> {
        self.uvs.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn features(&self) -> Vec<u32> {
        self.features.iter().map(|&v| v as u32).collect()
    }

    /// Flattened target pixels of the features, in a 512×512 image.
    pub fn targets(&self) -> Vec<f64> {
        self.corr.pixels().iter().flat_map(|p| [p.x, p.y]).collect()
    }

    /// Weight of every vertex with respect to feature `index`, scaled so the feature itself is 1.
    pub fn weight_field(&self, index: usize, beta: f64, eps: f64) -> Result<Vec<f64>, String> {
        let source = *self.features.get(index).ok_or_else(|| format!("no feature {index}"))?;
        let geo = multi_source_geodesics(&self.current, &[source]).map_err(|e| e.to_string())?;
        let w = geodesic_weights(&geo, beta, eps).map_err(|e| e.to_string())?;
        let top = w.row(0).iter().cloned().fold(0.0, f64::max);
        Ok(w.row(0).iter().map(|x| x / top).collect())
    }

    /// Runs the optimization from the rest mesh and returns a JSON summary
    /// with the energy history.
    pub fn run(&mut self, alpha: f64, beta: f64, eps: f64, max_iterations: usize) -> Result<String, String> {
        let cfg = SolverConfig {
            alpha,
            beta,
            eps,
            max_iterations: max_iterations.max(1),
            ..Default::default()
        };
        let image = ImageInfo::new(WIDTH as u32, HEIGHT as u32).map_err(|e| e.to_string())?;
        let result = texdeform::run(&self.rest, &image, &self.corr, &cfg).map_err(|e| e.to_string())?;
        let history: Vec<_> = result
            .history
            .iter()
            .map(|h| json!({ "total": h.energy.total, "detail": h.energy.detail, "projection": h.energy.projection }))
            .collect();
        self.current = result.mesh;
        self.uvs = result.uvs;
        Ok(json!({
            "iterations": result.iterations,
            "converged": result.stop_reason == texdeform::StopReason::Converged,
            "history": history,
            "out_of_image": result.out_of_image.len(),
            "seconds": result.timings.total_seconds,
        })
        .to_string())
    }

    /// Restores the rest mesh and its projected texture coordinates.
    pub fn reset(&mut self) {
        self.current = self.rest.clone();
        self.uvs = project_uvs(&self.rest, &self.camera);
    }
}

fn bend(mesh: &Mesh, features: &[usize], camera: &AffineCamera, strength: f64) -> CorrespondenceSet {
    fixtures::synthesize_correspondences(mesh, features, camera, WIDTH, HEIGHT, |p| {
        let t = (p.y - HEIGHT / 2.0) / (HEIGHT / 2.0);
        Point2::new(p.x + strength * (t * t - 0.5), p.y)
    })
}

fn project_uvs(mesh: &Mesh, camera: &AffineCamera) -> Vec<Point2<f64>> {
    mesh.positions()
        .iter()
        .map(|v| {
            let p = camera.project(v);
            Point2::new(p.x / WIDTH, p.y / HEIGHT)
        })
        .collect()
}
