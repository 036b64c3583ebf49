//! Affine cameras: weighted least-squares fitting, per-vertex local cameras
//! and the global camera taken at the geodesic medoid of the features.

use nalgebra::{Matrix2x3, Matrix3, Matrix3x2, Point2, Point3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::CorrespondenceSet;
use crate::geodesic::{GeodesicField, WeightField};
use crate::mesh::Mesh;

/// Fits whose centered normal matrix exceeds this condition number are rejected.
pub const DEGENERACY_CONDITION: f64 = 1e12;

/// Minimum number of correspondences for an affine fit.
pub const MIN_PAIRS: usize = 4;

/// `x ↦ M x + c`, model units to image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineCamera {
    pub matrix: Matrix2x3<f64>,
    pub translation: Vector2<f64>,
}

impl AffineCamera {
    pub fn new(matrix: Matrix2x3<f64>, translation: Vector2<f64>) -> Self {
        Self { matrix, translation }
    }

    /// Drops z.
    pub fn orthographic() -> Self {
        Self::new(Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0), Vector2::zeros())
    }

    #[inline]
    pub fn project(&self, v: &Point3<f64>) -> Point2<f64> {
        Point2::from(self.matrix * v.coords + self.translation)
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().chain(self.translation.iter()).all(|x| x.is_finite())
    }
}

/// Σ_j w_j ‖M v_j + c − p_j‖².
pub fn weighted_residual(cam: &AffineCamera, points3: &[Point3<f64>], points2: &[Point2<f64>], weights: &[f64]) -> f64 {
    points3
        .iter()
        .zip(points2)
        .zip(weights)
        .map(|((v, p), w)| w * (cam.project(v) - p).norm_squared())
        .sum()
}

/// Weighted least-squares affine camera.
///
/// The two image axes share one normal matrix; the problem is solved in
/// coordinates centered on the weighted centroid, which is equivalent to the
/// 4-unknown normal equations per axis.
pub fn fit_affine_camera(points3: &[Point3<f64>], points2: &[Point2<f64>], weights: &[f64]) -> Result<AffineCamera> {
    if points3.len() != points2.len() || points3.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "fit needs matching lengths, got {} points, {} pixels, {} weights",
            points3.len(),
            points2.len(),
            weights.len()
        )));
    }
    if points3.len() < MIN_PAIRS {
        return Err(Error::TooFewCorrespondences {
            required: MIN_PAIRS,
            got: points3.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(format!("fit weights must be positive, got {w}")));
    }

    let wsum: f64 = weights.iter().sum();
    let mut xbar = Vector3::zeros();
    let mut pbar = Vector2::zeros();
    for ((v, p), &w) in points3.iter().zip(points2).zip(weights) {
        xbar += v.coords * w;
        pbar += p.coords * w;
    }
    xbar /= wsum;
    pbar /= wsum;

    let mut cov = Matrix3::zeros();
    let mut cross = Matrix3x2::<f64>::zeros();
    for ((v, p), &w) in points3.iter().zip(points2).zip(weights) {
        let dx = v.coords - xbar;
        let dp = p.coords - pbar;
        cov += dx * dx.transpose() * w;
        cross += dx * dp.transpose() * w;
    }

    let eig = SymmetricEigen::new(cov);
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmin > 0.0) || lmax / lmin > DEGENERACY_CONDITION {
        return Err(Error::DegenerateConfiguration {
            vertex: None,
            reason: format!("normal matrix condition {:.3e} exceeds {DEGENERACY_CONDITION:e}", lmax / lmin.max(0.0)),
        });
    }
    // cov is SPD here, so Cholesky succeeds
    let chol = cov.cholesky().ok_or_else(|| Error::DegenerateConfiguration {
        vertex: None,
        reason: "normal matrix is not positive definite".into(),
    })?;
    let rows_t = chol.solve(&cross); // 3×2, columns are the rows of M
    let matrix = rows_t.transpose();
    let translation = pbar - matrix * xbar;
    let cam = AffineCamera::new(matrix, translation);
    if !cam.is_finite() {
        return Err(Error::NonFinite("camera fit"));
    }
    Ok(cam)
}

/// One affine camera per mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraField {
    cameras: Vec<AffineCamera>,
}

impl CameraField {
    pub fn new(cameras: Vec<AffineCamera>) -> Self {
        Self { cameras }
    }

    pub fn uniform(camera: AffineCamera, n: usize) -> Self {
        Self {
            cameras: vec![camera; n],
        }
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn get(&self, i: usize) -> &AffineCamera {
        &self.cameras[i]
    }

    pub fn cameras(&self) -> &[AffineCamera] {
        &self.cameras
    }
}

/// Per-vertex fits: vertex `i` minimizes Σ_j w[j][i] ‖M_i v_j + c_i − p_j‖²
/// over the current feature positions.
pub fn fit_local_cameras(mesh: &Mesh, corr: &CorrespondenceSet, weights: &WeightField) -> Result<CameraField> {
    corr.check_mesh(mesh)?;
    let p = corr.len();
    if p < MIN_PAIRS {
        return Err(Error::TooFewCorrespondences {
            required: MIN_PAIRS,
            got: p,
        });
    }
    if weights.source_count() != p || weights.vertex_count() != mesh.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "weight field is {}x{}, expected {}x{}",
            weights.source_count(),
            weights.vertex_count(),
            p,
            mesh.vertex_count()
        )));
    }
    let points3 = corr.feature_positions(mesh);
    let points2 = corr.pixels();
    let mut w = vec![0.0; p];
    let mut cameras = Vec::with_capacity(mesh.vertex_count());
    for i in 0..mesh.vertex_count() {
        for (j, slot) in w.iter_mut().enumerate() {
            *slot = weights.get(j, i);
        }
        let cam = fit_affine_camera(&points3, &points2, &w).map_err(|e| match e {
            Error::DegenerateConfiguration { reason, .. } => Error::DegenerateConfiguration {
                vertex: Some(i),
                reason,
            },
            other => other,
        })?;
        cameras.push(cam);
    }
    Ok(CameraField::new(cameras))
}

/// argmin_i Σ_j D(v_i, v_j); ties resolve to the lowest index.
pub fn geodesic_medoid(geo: &GeodesicField) -> usize {
    let sums = geo.column_sums();
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s < sums[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalCamera {
    pub camera: AffineCamera,
    /// The geodesic medoid the camera was taken from.
    pub vertex: usize,
}

/// The camera of the geodesic medoid vertex. Without a previous camera field
/// (first iteration) an unweighted fit over all correspondences is used.
pub fn estimate_global_camera(
    mesh: &Mesh,
    corr: &CorrespondenceSet,
    geo: &GeodesicField,
    prev: Option<&CameraField>,
) -> Result<GlobalCamera> {
    if geo.source_count() != corr.len() || geo.vertex_count() != mesh.vertex_count() {
        return Err(Error::InvalidArgument(
            "geodesic field does not match correspondences and mesh".into(),
        ));
    }
    let vertex = geodesic_medoid(geo);
    let camera = match prev {
        Some(field) => {
            if field.len() != mesh.vertex_count() {
                return Err(Error::InvalidArgument("camera field length differs from vertex count".into()));
            }
            *field.get(vertex)
        }
        None => {
            let points3 = corr.feature_positions(mesh);
            let ones = vec![1.0; corr.len()];
            fit_affine_camera(&points3, &corr.pixels(), &ones)?
        }
    };
    Ok(GlobalCamera { camera, vertex })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthographic_projection() {
        let cam = AffineCamera::orthographic();
        assert_eq!(cam.project(&Point3::new(3.0, 4.0, 9.0)), Point2::new(3.0, 4.0));
        let cam = AffineCamera::new(Matrix2x3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0), Vector2::new(-1.0, 7.0));
        assert_eq!(cam.project(&Point3::origin()), Point2::new(-1.0, 7.0));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let p3: Vec<_> = (0..4).map(|k| Point3::new(k as f64, 2.0 * k as f64, -(k as f64))).collect();
        let p2: Vec<_> = (0..4).map(|k| Point2::new(k as f64, 1.0)).collect();
        let err = fit_affine_camera(&p3, &p2, &[1.0; 4]).unwrap_err();
        assert!(matches!(err, Error::DegenerateConfiguration { vertex: None, .. }), "{err}");
    }

    #[test]
    fn coplanar_points_are_degenerate() {
        let p3: Vec<_> = (0..6).map(|k| Point3::new(k as f64, (k * k) as f64, 0.0)).collect();
        let p2: Vec<_> = (0..6).map(|k| Point2::new(k as f64, 1.0)).collect();
        assert!(matches!(
            fit_affine_camera(&p3, &p2, &[1.0; 6]),
            Err(Error::DegenerateConfiguration { .. })
        ));
    }

    #[test]
    fn too_few_and_bad_weights() {
        let p3 = vec![Point3::origin(); 3];
        let p2 = vec![Point2::origin(); 3];
        assert!(matches!(
            fit_affine_camera(&p3, &p2, &[1.0; 3]),
            Err(Error::TooFewCorrespondences { required: 4, got: 3 })
        ));
        let p3 = vec![Point3::origin(); 4];
        let p2 = vec![Point2::origin(); 4];
        assert!(fit_affine_camera(&p3, &p2, &[1.0, 1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn recovers_exact_camera() {
        let truth = AffineCamera::new(
            Matrix2x3::new(120.0, -3.0, 14.0, 6.5, -2.0, -110.0),
            Vector2::new(320.0, 240.0),
        );
        let p3: Vec<_> = [[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.1, 1.0, 0.3], [0.0, 0.4, 1.0], [0.7, 0.7, 0.7]]
            .iter()
            .map(|p| Point3::from(*p))
            .collect();
        let p2: Vec<_> = p3.iter().map(|v| truth.project(v)).collect();
        let cam = fit_affine_camera(&p3, &p2, &[1.0, 3.0, 0.5, 2.0, 9.0]).unwrap();
        for (v, p) in p3.iter().zip(&p2) {
            assert!((cam.project(v) - p).norm() <= 1e-9);
        }
        assert!((cam.matrix - truth.matrix).norm() < 1e-9);
    }
}
