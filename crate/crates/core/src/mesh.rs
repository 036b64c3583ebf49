//! Indexed triangle mesh with ordered one-ring adjacency.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Indexed triangle mesh.
///
/// Construction validates face indices and builds, for every vertex, its
/// one-ring ordered by face winding. Connectivity is immutable; positions can
/// be replaced wholesale with [`Mesh::with_positions`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    positions: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    rings: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn new(positions: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = positions.len();
        for (fi, f) in faces.iter().enumerate() {
            for &index in f {
                if index >= n {
                    return Err(Error::IndexOutOfRange {
                        face: fi,
                        index,
                        count: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFace { face: fi });
            }
        }
        if positions.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("vertex positions"));
        }
        let rings = build_rings(n, &faces)?;
        Ok(Self {
            positions,
            faces,
            rings,
        })
    }

    /// Same connectivity, new vertex positions.
    pub fn with_positions(&self, positions: Vec<Point3<f64>>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} positions, got {}",
                self.positions.len(),
                positions.len()
            )));
        }
        if positions.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("vertex positions"));
        }
        Ok(Self {
            positions,
            faces: self.faces.clone(),
            rings: self.rings.clone(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> Point3<f64> {
        self.positions[i]
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// One-ring neighbours of `i`, ordered by face winding.
    pub fn ring(&self, i: usize) -> &[usize] {
        &self.rings[i]
    }

    /// Undirected edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .rings
            .iter()
            .enumerate()
            .flat_map(|(i, ring)| ring.iter().filter(move |&&j| i < j).map(move |&j| (i, j)))
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        (self.positions[a] - self.positions[b]).norm()
    }

    /// Area-weighted vertex normals (unnormalized sums of face cross products).
    pub fn area_weighted_normals(&self) -> Vec<Vector3<f64>> {
        let mut normals = vec![Vector3::zeros(); self.positions.len()];
        for f in &self.faces {
            let [a, b, c] = *f;
            let n = (self.positions[b] - self.positions[a]).cross(&(self.positions[c] - self.positions[a]));
            for &v in f {
                normals[v] += n;
            }
        }
        normals
    }

    pub fn bbox(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from([f64::INFINITY; 3]);
        let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
        for p in &self.positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        if self.positions.is_empty() {
            return 0.0;
        }
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }
}

fn build_rings(n: usize, faces: &[[usize; 3]]) -> Result<Vec<Vec<usize>>> {
    // For every vertex, the (next, next-next) pairs of its incident faces in
    // face order. A face (i, a, b) contributes the directed ring edge a -> b.
    let mut fans: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for f in faces {
        for k in 0..3 {
            fans[f[k]].push((f[(k + 1) % 3], f[(k + 2) % 3]));
        }
    }

    let mut rings = Vec::with_capacity(n);
    for (i, fan) in fans.iter().enumerate() {
        if fan.is_empty() {
            return Err(Error::IsolatedVertex(i));
        }
        rings.push(order_fan(fan));
    }
    Ok(rings)
}

fn order_fan(fan: &[(usize, usize)]) -> Vec<usize> {
    let is_target = |v: usize| fan.iter().any(|&(_, b)| b == v);
    // Boundary vertices start where the fan opens; interior ones at the first face.
    let start = fan
        .iter()
        .map(|&(a, _)| a)
        .find(|&a| !is_target(a))
        .unwrap_or(fan[0].0);

    let mut ring = vec![start];
    let mut used = vec![false; fan.len()];
    let mut cur = start;
    while let Some(k) = (0..fan.len()).find(|&k| !used[k] && fan[k].0 == cur) {
        used[k] = true;
        let next = fan[k].1;
        if next == start || ring.contains(&next) {
            break;
        }
        ring.push(next);
        cur = next;
    }
    // Non-manifold leftovers keep face order.
    for &(a, b) in fan {
        for v in [a, b] {
            if !ring.contains(&v) {
                ring.push(v);
            }
        }
    }
    ring
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> Mesh {
        Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn rings_follow_winding() {
        let m = quad();
        assert_eq!(m.ring(0), &[1, 2, 3]);
        assert_eq!(m.ring(2), &[3, 0, 1]);
        assert_eq!(m.edges(), vec![(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn adjacency_is_symmetric() {
        let m = crate::fixtures::icosahedron();
        for i in 0..m.vertex_count() {
            for &j in m.ring(i) {
                assert!(m.ring(j).contains(&i));
            }
        }
        assert!(m.ring(0).len() == 5);
    }

    #[test]
    fn rejects_bad_faces() {
        let p = vec![Point3::origin(); 3];
        assert!(matches!(
            Mesh::new(p.clone(), vec![[0, 1, 3]]),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
        assert!(matches!(
            Mesh::new(p.clone(), vec![[0, 1, 1]]),
            Err(Error::DegenerateFace { face: 0 })
        ));
        let mut p4 = p;
        p4.push(Point3::origin());
        assert!(matches!(
            Mesh::new(p4, vec![[0, 1, 2]]),
            Err(Error::IsolatedVertex(3))
        ));
    }
}
