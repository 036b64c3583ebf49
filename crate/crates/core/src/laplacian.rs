//! Discrete Laplacian (differential) coordinates.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Upper clamp for individual cotangent values; near-degenerate triangles
/// would otherwise produce unbounded weights.
pub const COT_CLAMP: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianScheme {
    Uniform,
    #[default]
    Cotangent,
}

impl std::str::FromStr for LaplacianScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "cotangent" | "cot" => Ok(Self::Cotangent),
            other => Err(format!("unknown laplacian scheme `{other}`")),
        }
    }
}

/// Row-normalized Laplacian `δ_i = v_i − Σ_j w_ij v_j` with `Σ_j w_ij = 1`.
///
/// Weights are fixed at construction (rest connectivity and geometry) and the
/// operator is then applied to arbitrary positions, so it is linear in them.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianOperator {
    scheme: LaplacianScheme,
    rows: Vec<Vec<(usize, f64)>>,
}

impl LaplacianOperator {
    pub fn new(mesh: &Mesh, scheme: LaplacianScheme) -> Result<Self> {
        let n = mesh.vertex_count();
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| mesh.ring(i).iter().map(|&j| (j, 0.0)).collect())
            .collect();
        if let Some(i) = rows.iter().position(|r| r.is_empty()) {
            return Err(Error::IsolatedVertex(i));
        }

        match scheme {
            LaplacianScheme::Uniform => {
                for row in &mut rows {
                    let w = 1.0 / row.len() as f64;
                    row.iter_mut().for_each(|e| e.1 = w);
                }
            }
            LaplacianScheme::Cotangent => {
                let p = mesh.positions();
                for f in mesh.faces() {
                    for k in 0..3 {
                        let (a, b, o) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                        let half = 0.5 * clamped_cot(&p[a], &p[b], &p[o]);
                        add_weight(&mut rows[a], b, half);
                        add_weight(&mut rows[b], a, half);
                    }
                }
                for row in &mut rows {
                    let sum: f64 = row.iter().map(|e| e.1).sum();
                    if sum > 0.0 {
                        row.iter_mut().for_each(|e| e.1 /= sum);
                    } else {
                        // every incident cotangent clamped away
                        let w = 1.0 / row.len() as f64;
                        row.iter_mut().for_each(|e| e.1 = w);
                    }
                }
            }
        }
        Ok(Self { scheme, rows })
    }

    pub fn scheme(&self) -> LaplacianScheme {
        self.scheme
    }

    pub fn vertex_count(&self) -> usize {
        self.rows.len()
    }

    /// Neighbour weights of row `i` (ring order, summing to one).
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn apply_at(&self, i: usize, positions: &[Point3<f64>]) -> Vector3<f64> {
        self.rows[i]
            .iter()
            .fold(positions[i].coords, |acc, &(j, w)| acc - positions[j].coords * w)
    }

    pub fn apply(&self, positions: &[Point3<f64>]) -> Vec<Vector3<f64>> {
        (0..self.rows.len()).map(|i| self.apply_at(i, positions)).collect()
    }

    /// Scalar form applied to one coordinate channel.
    pub fn apply_scalar(&self, values: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().fold(values[i], |acc, &(j, w)| acc - w * values[j]))
            .collect()
    }

    /// `Lᵀ y` for one channel.
    pub fn apply_transpose_scalar(&self, values: &[f64]) -> Vec<f64> {
        let mut out = values.to_vec();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out[j] -= w * values[i];
            }
        }
        out
    }

    /// Upper-triangle triplets of `LᵀL`.
    pub fn normal_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            entries.clear();
            entries.push((i, 1.0));
            entries.extend(row.iter().map(|&(j, w)| (j, -w)));
            for &(a, va) in &entries {
                for &(b, vb) in &entries {
                    if a <= b {
                        out.push((a, b, va * vb));
                    }
                }
            }
        }
        out
    }

    /// Triplets `(row, col, value)` of the N×N matrix, diagonal included.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.rows.iter().map(|r| r.len() + 1).sum());
        for (i, row) in self.rows.iter().enumerate() {
            out.push((i, i, 1.0));
            out.extend(row.iter().map(|&(j, w)| (i, j, -w)));
        }
        out
    }
}

fn add_weight(row: &mut [(usize, f64)], j: usize, w: f64) {
    if let Some(e) = row.iter_mut().find(|e| e.0 == j) {
        e.1 += w;
    }
}

/// Cotangent of the angle at `o` in triangle (a, b, o), clamped to `[0, COT_CLAMP]`.
fn clamped_cot(a: &Point3<f64>, b: &Point3<f64>, o: &Point3<f64>) -> f64 {
    let u = a - o;
    let v = b - o;
    let cross = u.cross(&v).norm();
    let dot = u.dot(&v);
    let cot = if cross > 0.0 {
        dot / cross
    } else if dot > 0.0 {
        COT_CLAMP
    } else {
        0.0
    };
    cot.clamp(0.0, COT_CLAMP)
}

/// Per-vertex differential coordinates under a given scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianCoords {
    pub scheme: LaplacianScheme,
    pub deltas: Vec<Vector3<f64>>,
}

pub fn laplacian_coords(mesh: &Mesh, scheme: LaplacianScheme) -> Result<LaplacianCoords> {
    let op = LaplacianOperator::new(mesh, scheme)?;
    Ok(LaplacianCoords {
        scheme,
        deltas: op.apply(mesh.positions()),
    })
}
