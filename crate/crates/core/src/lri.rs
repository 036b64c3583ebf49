//! Linear rotation-invariant encoding: per-vertex local frames, relative
//! rotations between neighbouring frames and frame-local Laplacian deltas.
//!
//! Frames are stored with their axes as columns `[tangent | bitangent | normal]`,
//! so `F_j = F_i R_ij` with `R_ij = F_iᵀ F_j`, and a delta is recovered as
//! `δ_i = F_i d_i`. Rotating the whole rest pose by `Q` maps every frame to
//! `Q F_i` and leaves all `R_ij` and `d_i` unchanged.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::laplacian::{LaplacianOperator, LaplacianScheme};
use crate::mesh::Mesh;

#[derive(Debug, Clone)]
pub struct LriEncoding {
    pub laplacian: LaplacianOperator,
    /// Rest frames, one per vertex.
    pub frames: Vec<Matrix3<f64>>,
    /// Undirected edges `(a, b)`, `a < b`, matching `rotations`.
    pub edges: Vec<(usize, usize)>,
    /// `R_ab = F_aᵀ F_b` for each entry of `edges`.
    pub rotations: Vec<Matrix3<f64>>,
    /// `d_i = F_iᵀ δ_i`.
    pub local_deltas: Vec<Vector3<f64>>,
    /// Rest positions the encoding was built from.
    pub rest_positions: Vec<Point3<f64>>,
}

impl LriEncoding {
    pub fn vertex_count(&self) -> usize {
        self.frames.len()
    }

    /// Relative rotation for the directed edge `i → j`, if the edge exists.
    pub fn relative_rotation(&self, i: usize, j: usize) -> Option<Matrix3<f64>> {
        let (a, b, flip) = if i < j { (i, j, false) } else { (j, i, true) };
        let k = self.edges.binary_search(&(a, b)).ok()?;
        let r = self.rotations[k];
        Some(if flip { r.transpose() } else { r })
    }

    /// Rest Laplacian deltas expressed in world space through `frames`.
    pub fn rotated_deltas(&self, frames: &[Matrix3<f64>]) -> Vec<Vector3<f64>> {
        frames
            .iter()
            .zip(&self.local_deltas)
            .map(|(f, d)| f * d)
            .collect()
    }
}

pub fn lri_encode(mesh: &Mesh, scheme: LaplacianScheme) -> Result<LriEncoding> {
    let laplacian = LaplacianOperator::new(mesh, scheme)?;
    let normals = mesh.area_weighted_normals();
    let frames = (0..mesh.vertex_count())
        .map(|i| local_frame(mesh, &normals, i))
        .collect::<Result<Vec<_>>>()?;
    let edges = mesh.edges();
    let rotations = edges
        .iter()
        .map(|&(a, b)| frames[a].transpose() * frames[b])
        .collect();
    let deltas = laplacian.apply(mesh.positions());
    let local_deltas = frames
        .iter()
        .zip(&deltas)
        .map(|(f, d)| f.transpose() * d)
        .collect();
    Ok(LriEncoding {
        laplacian,
        frames,
        edges,
        rotations,
        local_deltas,
        rest_positions: mesh.positions().to_vec(),
    })
}

/// Frame of vertex `i`: normal from `normals`, tangent from the first ring
/// edge with a usable projection onto the tangent plane.
pub fn local_frame(mesh: &Mesh, normals: &[Vector3<f64>], i: usize) -> Result<Matrix3<f64>> {
    let p = mesh.position(i);
    let ring = mesh.ring(i);
    let scale = ring
        .iter()
        .map(|&j| (mesh.position(j) - p).norm_squared())
        .fold(0.0, f64::max);
    let n = normals[i];
    if scale == 0.0 || n.norm() <= 1e-14 * scale {
        return Err(Error::DegenerateFrame(i));
    }
    let n = n.normalize();
    for &j in ring {
        let e = mesh.position(j) - p;
        let t = e - n * n.dot(&e);
        if t.norm() > 1e-9 * e.norm() && e.norm() > 0.0 {
            let t = t.normalize();
            let b = n.cross(&t);
            return Ok(Matrix3::from_columns(&[t, b, n]));
        }
    }
    Err(Error::DegenerateFrame(i))
}
