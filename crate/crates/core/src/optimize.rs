//! Alternating minimization of the combined texturing/deformation energy.
//!
//! Each iteration recomputes geodesic weights on the current mesh, picks the
//! global camera at the geodesic medoid, deforms the mesh against it (unless
//! `alpha = 1`), refits one camera per vertex and evaluates the energy.

use std::time::Instant;

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{self, AffineCamera, CameraField, MIN_PAIRS};
use crate::deform::{DeformProblem, DeformSolver, DetailMode, FrameField};
use crate::error::{Error, Result, Stage};
use crate::formats::{CorrespondenceSet, ImageInfo, StageTimings};
use crate::geodesic::{self, EdgeGraph, WeightField};
use crate::laplacian::{LaplacianOperator, LaplacianScheme};
use crate::lri::{self, LriEncoding};
use crate::mesh::Mesh;

/// Energies at or below `ENERGY_FLOOR · P · (image diagonal)²` count as converged.
pub const ENERGY_FLOOR: f64 = 1e-20;

/// How the deformation anchor is chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "vertex")]
pub enum AnchorPolicy {
    /// The geodesic medoid of the features, pinned at its current position.
    #[default]
    Medoid,
    /// A fixed vertex, pinned at its current position.
    Vertex(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub tol: f64,
    pub max_iterations: usize,
    pub laplacian: LaplacianScheme,
    pub mode: DetailMode,
    pub anchor: AnchorPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: geodesic::DEFAULT_BETA,
            eps: geodesic::DEFAULT_EPS,
            tol: 1e-3,
            max_iterations: 20,
            laplacian: LaplacianScheme::default(),
            mode: DetailMode::default(),
            anchor: AnchorPolicy::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidArgument(format!("{what} out of range: {v}")));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", self.alpha);
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta", self.beta);
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps", self.eps);
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol", self.tol);
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// `total = (1 − α)·detail + α·projection`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    /// Σ_i ‖L(v'_i) − F'_i d_i‖²
    pub detail: f64,
    /// Σ_i Σ_j w[j][i] ‖M_i v_j + c_i − p_j‖²
    pub projection: f64,
}

impl EnergyReport {
    fn combine(alpha: f64, detail: f64, projection: f64) -> Self {
        Self {
            total: (1.0 - alpha) * detail + alpha * projection,
            detail,
            projection,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.detail.is_finite() && self.projection.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: EnergyReport,
    pub global_vertex: usize,
    pub global_camera: AffineCamera,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunTimings {
    pub total_seconds: f64,
    pub setup_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mesh: Mesh,
    pub cameras: CameraField,
    pub frames: Option<FrameField>,
    /// Image-normalized UVs (top-left origin), not clamped.
    pub uvs: Vec<Point2<f64>>,
    /// Vertices whose UV leaves `[0, 1]²`.
    pub out_of_image: Vec<usize>,
    pub energy: EnergyReport,
    pub history: Vec<IterationRecord>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub feature_count: usize,
    pub timings: RunTimings,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }
}

/// The combined energy for the given state.
pub fn total_energy(
    mesh: &Mesh,
    corr: &CorrespondenceSet,
    cameras: &CameraField,
    weights: &WeightField,
    lri: &LriEncoding,
    frames: &FrameField,
    alpha: f64,
) -> Result<EnergyReport> {
    if frames.frames.len() != mesh.vertex_count() || lri.vertex_count() != mesh.vertex_count() {
        return Err(Error::InvalidArgument("frames or encoding do not match the mesh".into()));
    }
    let targets = lri.rotated_deltas(&frames.frames);
    energy_terms(mesh, corr, cameras, weights, &lri.laplacian, &targets, alpha)
}

fn energy_terms(
    mesh: &Mesh,
    corr: &CorrespondenceSet,
    cameras: &CameraField,
    weights: &WeightField,
    laplacian: &LaplacianOperator,
    targets: &[Vector3<f64>],
    alpha: f64,
) -> Result<EnergyReport> {
    let n = mesh.vertex_count();
    corr.check_mesh(mesh)?;
    if cameras.len() != n || weights.vertex_count() != n || weights.source_count() != corr.len() {
        return Err(Error::InvalidArgument("energy inputs differ in size".into()));
    }
    let positions = mesh.positions();
    let detail: f64 = (0..n)
        .map(|i| (laplacian.apply_at(i, positions) - targets[i]).norm_squared())
        .sum();

    let features = corr.feature_positions(mesh);
    let pixels = corr.pixels();
    let mut projection = 0.0;
    for (i, cam) in cameras.cameras().iter().enumerate() {
        for (j, (v, p)) in features.iter().zip(&pixels).enumerate() {
            projection += weights.get(j, i) * (cam.project(v) - p).norm_squared();
        }
    }
    Ok(EnergyReport::combine(alpha, detail, projection))
}

/// `uv_i = (M_i v_i + c_i) / (width, height)`, unclamped.
pub fn assign_uvs(mesh: &Mesh, cameras: &CameraField, width: f64, height: f64) -> Result<Vec<Point2<f64>>> {
    if cameras.len() != mesh.vertex_count() {
        return Err(Error::InvalidArgument("camera field length differs from vertex count".into()));
    }
    Ok(mesh
        .positions()
        .iter()
        .zip(cameras.cameras())
        .map(|(v, cam)| {
            let p = cam.project(v);
            Point2::new(p.x / width, p.y / height)
        })
        .collect())
}

/// Indices of UVs outside `[0, 1]²`.
pub fn out_of_image(uvs: &[Point2<f64>]) -> Vec<usize> {
    uvs.iter()
        .enumerate()
        .filter(|(_, uv)| !((0.0..=1.0).contains(&uv.x) && (0.0..=1.0).contains(&uv.y)))
        .map(|(i, _)| i)
        .collect()
}

/// Detail state that does not change across iterations.
enum Detail {
    /// `alpha = 1`: the mesh never moves, so only rest deltas are needed.
    Fixed {
        laplacian: LaplacianOperator,
        deltas: Vec<Vector3<f64>>,
    },
    Deforming {
        lri: Box<LriEncoding>,
        solver: Box<DeformSolver>,
    },
}

pub fn run(mesh: &Mesh, image: &ImageInfo, corr: &CorrespondenceSet, cfg: &SolverConfig) -> Result<RunResult> {
    let started = Instant::now();
    let setup = |e: Error| e.at(Stage::Setup, 0);

    cfg.validate().map_err(setup)?;
    corr.check_mesh(mesh).map_err(setup)?;
    if corr.len() < MIN_PAIRS {
        return Err(setup(Error::TooFewCorrespondences {
            required: MIN_PAIRS,
            got: corr.len(),
        }));
    }
    let (width, height) = (image.width as f64, image.height as f64);
    for (index, p) in corr.pairs().iter().enumerate() {
        if !(0.0..=width).contains(&p.pixel.x) || !(0.0..=height).contains(&p.pixel.y) {
            return Err(setup(Error::PixelOutOfBounds {
                index,
                x: p.pixel.x,
                y: p.pixel.y,
                width,
                height,
            }));
        }
    }
    if let AnchorPolicy::Vertex(v) = cfg.anchor {
        if v >= mesh.vertex_count() {
            return Err(setup(Error::InvalidVertex {
                id: v,
                count: mesh.vertex_count(),
            }));
        }
    }

    let mut detail = if cfg.alpha < 1.0 {
        let lri = lri::lri_encode(mesh, cfg.laplacian).map_err(setup)?;
        let mut solver = DeformSolver::new(&lri);
        solver.prepare_positions(&corr.vertices(), cfg.alpha).map_err(setup)?;
        Detail::Deforming {
            lri: Box::new(lri),
            solver: Box::new(solver),
        }
    } else {
        let laplacian = LaplacianOperator::new(mesh, cfg.laplacian).map_err(setup)?;
        let deltas = laplacian.apply(mesh.positions());
        Detail::Fixed { laplacian, deltas }
    };
    let setup_seconds = started.elapsed().as_secs_f64();

    let sources = corr.vertices();
    let floor = ENERGY_FLOOR * corr.len() as f64 * image.diagonal().powi(2);
    let mut current = mesh.clone();
    let mut cameras: Option<CameraField> = None;
    let mut frames: Option<FrameField> = None;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;

    for k in 1..=cfg.max_iterations {
        let mut t = StageTimings::default();

        let clock = Instant::now();
        let graph = EdgeGraph::new(&current);
        let geo = geodesic::multi_source_geodesics_on(&graph, &sources).map_err(|e| e.at(Stage::Geodesics, k))?;
        let weights = geodesic::geodesic_weights(&geo, cfg.beta, cfg.eps).map_err(|e| e.at(Stage::Geodesics, k))?;
        t.geodesics = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let global = camera::estimate_global_camera(&current, corr, &geo, cameras.as_ref())
            .map_err(|e| e.at(Stage::GlobalCamera, k))?;
        t.global_camera = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        if let Detail::Deforming { lri, solver } = &mut detail {
            let anchor = match cfg.anchor {
                AnchorPolicy::Medoid => global.vertex,
                AnchorPolicy::Vertex(v) => v,
            };
            let problem = DeformProblem {
                lri,
                mesh: &current,
                corr,
                camera: global.camera,
                weights: &weights,
                alpha: cfg.alpha,
                anchor,
                anchor_position: mesh.position(anchor),
                anchor_frame: None,
                mode: cfg.mode,
            };
            let (next, f) = solver.deform(&problem).map_err(|e| e.at(Stage::Deform, k))?;
            current = next;
            frames = Some(f);
        }
        t.deform = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let fitted = camera::fit_local_cameras(&current, corr, &weights).map_err(|e| e.at(Stage::LocalCameras, k))?;
        t.local_cameras = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let energy = match &detail {
            Detail::Fixed { laplacian, deltas } => {
                energy_terms(&current, corr, &fitted, &weights, laplacian, deltas, cfg.alpha)
            }
            Detail::Deforming { lri, .. } => total_energy(
                &current,
                corr,
                &fitted,
                &weights,
                lri,
                frames.as_ref().expect("deform ran"),
                cfg.alpha,
            ),
        }
        .map_err(|e| e.at(Stage::Energy, k))?;
        if !energy.is_finite() {
            return Err(Error::NonFinite("energy").at(Stage::Energy, k));
        }
        t.energy = clock.elapsed().as_secs_f64();
        cameras = Some(fitted);

        let prev = history.last().map(|r| r.energy.total);
        history.push(IterationRecord {
            iteration: k,
            energy,
            global_vertex: global.vertex,
            global_camera: global.camera,
            timings: t,
        });
        if converged(prev, energy.total, cfg.tol, floor) {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    let cameras = cameras.expect("at least one iteration ran");
    let uvs = assign_uvs(&current, &cameras, width, height)?;
    let out_of_image = out_of_image(&uvs);
    let last = history.last().expect("at least one iteration ran");
    Ok(RunResult {
        energy: last.energy,
        iterations: history.len(),
        mesh: current,
        cameras,
        frames,
        uvs,
        out_of_image,
        history,
        stop_reason,
        feature_count: corr.len(),
        timings: RunTimings {
            total_seconds: started.elapsed().as_secs_f64(),
            setup_seconds,
        },
    })
}

fn converged(prev: Option<f64>, energy: f64, tol: f64, floor: f64) -> bool {
    if energy <= floor {
        return true;
    }
    match prev {
        Some(p) if p > 0.0 => (energy - p).abs() / p < tol,
        _ => false,
    }
}

/// Rest frames for callers that evaluate the energy without a deformation step.
pub fn rest_frames(lri: &LriEncoding) -> FrameField {
    FrameField {
        frames: lri.frames.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_rule() {
        assert!(!converged(None, 1.0, 1e-3, 0.0));
        assert!(converged(Some(1.0), 0.9995, 1e-3, 0.0));
        assert!(!converged(Some(1.0), 0.99, 1e-3, 0.0));
        assert!(converged(None, 1e-20, 1e-3, 1e-18));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for cfg in [
            SolverConfig { alpha: 1.5, ..Default::default() },
            SolverConfig { beta: 0.0, ..Default::default() },
            SolverConfig { eps: -1.0, ..Default::default() },
            SolverConfig { tol: 0.0, ..Default::default() },
            SolverConfig { max_iterations: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn uv_of_centred_vertex() {
        let mesh = crate::fixtures::grid(2, 2, 1.0).with_positions(vec![
            nalgebra::Point3::new(50.0, 25.0, 3.0),
            nalgebra::Point3::new(150.0, 25.0, 0.0),
            nalgebra::Point3::new(50.0, 125.0, 0.0),
            nalgebra::Point3::new(-1.0, 20.0, 0.0),
        ]);
        let mesh = mesh.unwrap();
        let cams = CameraField::uniform(AffineCamera::orthographic(), 4);
        let uvs = assign_uvs(&mesh, &cams, 100.0, 50.0).unwrap();
        assert_eq!(uvs[0], Point2::new(0.5, 0.5));
        assert_eq!(out_of_image(&uvs), vec![1, 2, 3]);
    }
}
