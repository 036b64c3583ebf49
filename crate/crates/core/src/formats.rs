//! Correspondence files, texture-image metadata and result packaging.
//!
//! Correspondence JSON (version 1):
//!
//! ```json
//! {"version": 1, "image": {"width": 640, "height": 480},
//!  "pairs": [{"vertex": 12, "pixel": [310.5, 122.0]}]}
//! ```
//!
//! Pixels use a top-left origin with x to the right and y downward.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::mesh::Mesh;
use crate::obj;
use crate::optimize::{IterationRecord, RunResult, SolverConfig, StopReason};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub vertex: usize,
    pub pixel: Point2<f64>,
}

/// Validated feature pairs plus the image size they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    width: f64,
    height: f64,
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(width: f64, height: f64, pairs: Vec<Correspondence>) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && height > 0.0 && height.is_finite()) {
            return Err(Error::Schema {
                path: "image".into(),
                message: format!("image size must be positive, got {width}x{height}"),
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(pairs.len());
        for (index, pair) in pairs.iter().enumerate() {
            let (x, y) = (pair.pixel.x, pair.pixel.y);
            if !(0.0..=width).contains(&x) || !(0.0..=height).contains(&y) {
                return Err(Error::PixelOutOfBounds {
                    index,
                    x,
                    y,
                    width,
                    height,
                });
            }
            if !seen.insert(pair.vertex) {
                return Err(Error::DuplicateVertex(pair.vertex));
            }
        }
        Ok(Self { width, height, pairs })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn vertices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.vertex).collect()
    }

    pub fn pixels(&self) -> Vec<Point2<f64>> {
        self.pairs.iter().map(|p| p.pixel).collect()
    }

    /// Current positions of the feature vertices, in pair order.
    pub fn feature_positions(&self, mesh: &Mesh) -> Vec<Point3<f64>> {
        self.pairs.iter().map(|p| mesh.position(p.vertex)).collect()
    }

    /// Binds the set to a mesh: at least one pair, every id in range.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::TooFewCorrespondences { required: 1, got: 0 });
        }
        let n = mesh.vertex_count();
        match self.pairs.iter().find(|p| p.vertex >= n) {
            Some(p) => Err(Error::InvalidVertex { id: p.vertex, count: n }),
            None => Ok(()),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: CorrespondenceDoc = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        doc.into_set()
    }

    pub fn to_json_string(&self) -> String {
        let doc = CorrespondenceDoc {
            version: Some(SCHEMA_VERSION),
            image: ImageSize {
                width: self.width,
                height: self.height,
            },
            pairs: self
                .pairs
                .iter()
                .map(|p| PairDoc {
                    vertex: p.vertex,
                    pixel: [p.pixel.x, p.pixel.y],
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("plain data serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrespondenceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<u32>,
    image: ImageSize,
    pairs: Vec<PairDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageSize {
    width: f64,
    height: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairDoc {
    vertex: usize,
    pixel: [f64; 2],
}

impl CorrespondenceDoc {
    fn into_set(self) -> Result<CorrespondenceSet> {
        match self.version {
            None | Some(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(Error::Schema {
                    path: "version".into(),
                    message: format!("unsupported schema version {v}, expected {SCHEMA_VERSION}"),
                })
            }
        }
        let pairs = self
            .pairs
            .into_iter()
            .map(|p| Correspondence {
                vertex: p.vertex,
                pixel: Point2::new(p.pixel[0], p.pixel[1]),
            })
            .collect();
        CorrespondenceSet::new(self.image.width, self.image.height, pairs)
    }
}

impl Error {
    /// JSON path of the offending field for correspondence validation errors.
    pub fn field_path(&self) -> Option<String> {
        match self {
            Error::Schema { path, .. } => Some(path.clone()),
            Error::PixelOutOfBounds { index, .. } => Some(format!("pairs[{index}].pixel")),
            Error::DuplicateVertex(_) => Some("pairs".into()),
            _ => None,
        }
    }
}

pub fn load_correspondences(path: impl AsRef<Path>) -> Result<CorrespondenceSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CorrespondenceSet::from_json_str(&text)
}

pub fn save_correspondences(set: &CorrespondenceSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_json_string()).map_err(|e| Error::io(path, e))
}

/// Texture image: pixel size and the file it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageInfo {
    pub width: u32,
    pub height: u32,
    pub path: Option<PathBuf>,
}

impl ImageInfo {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image size must be positive, got {width}x{height}")));
        }
        Ok(Self {
            width,
            height,
            path: None,
        })
    }

    /// Reads the size from the file header without decoding pixels.
    #[cfg(feature = "image-probe")]
    pub fn probe(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (width, height) = image::image_dimensions(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(format!("{}: {other}", path.display())),
        })?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            ..Self::new(width, height)?
        })
    }

    #[cfg(not(feature = "image-probe"))]
    pub fn probe(path: impl AsRef<Path>) -> Result<Self> {
        Err(Error::Image(format!(
            "{}: built without image support",
            path.as_ref().display()
        )))
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

/// Contents of `report.json`. Everything except `timings` is a pure function
/// of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub tol: f64,
    pub max_iterations: usize,
    pub laplacian: crate::laplacian::LaplacianScheme,
    pub mode: crate::deform::DetailMode,
    pub vertex_count: usize,
    pub feature_count: usize,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub energy: EnergyEntry,
    pub energy_history: Vec<EnergyEntry>,
    pub global_camera_vertices: Vec<usize>,
    pub out_of_image_uv_count: usize,
    pub out_of_image_vertices: Vec<usize>,
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEntry {
    pub total: f64,
    pub detail: f64,
    pub projection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub setup_seconds: f64,
    pub per_iteration: Vec<StageTimings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub geodesics: f64,
    pub global_camera: f64,
    pub deform: f64,
    pub local_cameras: f64,
    pub energy: f64,
}

impl StageTimings {
    pub fn get(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Geodesics => self.geodesics,
            Stage::GlobalCamera => self.global_camera,
            Stage::Deform => self.deform,
            Stage::LocalCameras => self.local_cameras,
            Stage::Energy => self.energy,
            Stage::Setup => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.geodesics + self.global_camera + self.deform + self.local_cameras + self.energy
    }
}

impl Report {
    pub fn new(result: &RunResult, config: &SolverConfig) -> Self {
        let entry = |r: &IterationRecord| EnergyEntry {
            total: r.energy.total,
            detail: r.energy.detail,
            projection: r.energy.projection,
        };
        Self {
            alpha: config.alpha,
            beta: config.beta,
            eps: config.eps,
            tol: config.tol,
            max_iterations: config.max_iterations,
            laplacian: config.laplacian,
            mode: config.mode,
            vertex_count: result.mesh.vertex_count(),
            feature_count: result.feature_count,
            iterations: result.iterations,
            stop_reason: result.stop_reason,
            energy: EnergyEntry {
                total: result.energy.total,
                detail: result.energy.detail,
                projection: result.energy.projection,
            },
            energy_history: result.history.iter().map(entry).collect(),
            global_camera_vertices: result.history.iter().map(|r| r.global_vertex).collect(),
            out_of_image_uv_count: result.out_of_image.len(),
            out_of_image_vertices: result.out_of_image.clone(),
            timings: Timings {
                total_seconds: result.timings.total_seconds,
                setup_seconds: result.timings.setup_seconds,
                per_iteration: result.history.iter().map(|r| r.timings).collect(),
            },
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// The report as JSON with the `timings` field removed.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("plain data serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        serde_json::to_string_pretty(&v).expect("plain data serializes")
    }
}

/// Files written by [`save_result`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SavedResult {
    pub mesh: PathBuf,
    pub report: PathBuf,
    pub texture: Option<PathBuf>,
}

/// Writes `mesh.obj` (with `vt` per vertex), `mesh.mtl` and a copy of the
/// texture when `image.path` is set, and `report.json`.
pub fn save_result(
    result: &RunResult,
    config: &SolverConfig,
    image: &ImageInfo,
    out_dir: impl AsRef<Path>,
) -> Result<SavedResult> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let texture = match &image.path {
        Some(src) => {
            let name = src
                .file_name()
                .ok_or_else(|| Error::InvalidArgument(format!("texture path {} has no file name", src.display())))?;
            let dst = out_dir.join(name);
            if fs::canonicalize(src).ok() != fs::canonicalize(&dst).ok() || !dst.exists() {
                fs::copy(src, &dst).map_err(|e| Error::io(src, e))?;
            }
            Some(dst)
        }
        None => None,
    };
    let texture_name = texture
        .as_ref()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned());

    let mesh_path = out_dir.join("mesh.obj");
    obj::save_obj(&result.mesh, Some(&result.uvs), texture_name.as_deref(), &mesh_path)?;

    let report_path = out_dir.join("report.json");
    let report = Report::new(result, config);
    fs::write(&report_path, report.to_json_string()).map_err(|e| Error::io(&report_path, e))?;

    Ok(SavedResult {
        mesh: mesh_path,
        report: report_path,
        texture,
    })
}
