//! Texture a triangle mesh from a single casual image while deforming the mesh
//! to fit the image.
//!
//! The pipeline alternates two least-squares steps: per-vertex affine cameras
//! weighted by geodesic distance to the feature vertices, and a
//! detail-preserving deformation that pulls feature vertices onto their pixels
//! through a global camera. See [`optimize::run`].

pub mod camera;
pub mod deform;
pub mod error;
pub mod fixtures;
pub mod formats;
pub mod geodesic;
pub mod laplacian;
pub mod lri;
pub mod mesh;
pub mod obj;
pub mod optimize;
pub mod sparse;

pub use camera::{AffineCamera, CameraField};
pub use deform::{DetailMode, FrameField};
pub use error::{Error, Result, Stage};
pub use formats::{Correspondence, CorrespondenceSet, ImageInfo, Report};
pub use geodesic::{GeodesicField, WeightField};
pub use laplacian::LaplacianScheme;
pub use mesh::Mesh;
pub use optimize::{run, AnchorPolicy, EnergyReport, RunResult, SolverConfig, StopReason};
