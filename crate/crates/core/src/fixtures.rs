//! Procedural meshes and correspondence sets used by tests, benchmarks and
//! the browser demo.

use std::f64::consts::PI;

use nalgebra::{Matrix2x3, Point2, Point3, Vector2};

use crate::camera::AffineCamera;
use crate::formats::{Correspondence, CorrespondenceSet};
use crate::mesh::Mesh;

/// Planar `nx × ny` vertex grid in the z = 0 plane, normals along +z.
pub fn grid(nx: usize, ny: usize, spacing: f64) -> Mesh {
    assert!(nx >= 2 && ny >= 2);
    let positions = (0..ny)
        .flat_map(|y| (0..nx).map(move |x| Point3::new(x as f64 * spacing, y as f64 * spacing, 0.0)))
        .collect();
    let id = |x: usize, y: usize| y * nx + x;
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for y in 0..ny - 1 {
        for x in 0..nx - 1 {
            faces.push([id(x, y), id(x + 1, y), id(x + 1, y + 1)]);
            faces.push([id(x, y), id(x + 1, y + 1), id(x, y + 1)]);
        }
    }
    Mesh::new(positions, faces).expect("grid is valid")
}

/// Regular icosahedron with unit circumradius.
pub fn icosahedron() -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let positions = raw
        .iter()
        .map(|p| Point3::from(nalgebra::Vector3::from(*p).normalize()))
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    Mesh::new(positions, faces).expect("icosahedron is valid")
}

/// Latitude/longitude sphere with `rings × segments + 2` vertices and a
/// smooth radial bump pattern of relative amplitude `bump`.
pub fn bumpy_sphere(rings: usize, segments: usize, bump: f64) -> Mesh {
    ellipsoid(rings, segments, bump, [1.0, 1.0, 1.0])
}

/// Like [`bumpy_sphere`] but scaled per axis.
pub fn ellipsoid(rings: usize, segments: usize, bump: f64, scale: [f64; 3]) -> Mesh {
    assert!(rings >= 1 && segments >= 3);
    let surface = |theta: f64, phi: f64| {
        let r = 1.0 + bump * (3.0 * phi).sin() * (2.0 * theta).sin() + 0.5 * bump * (5.0 * theta).cos();
        Point3::new(
            scale[0] * r * theta.sin() * phi.cos(),
            scale[1] * r * theta.sin() * phi.sin(),
            scale[2] * r * theta.cos(),
        )
    };
    let mut positions = vec![surface(0.0, 0.0)];
    for k in 1..=rings {
        let theta = PI * k as f64 / (rings + 1) as f64;
        for s in 0..segments {
            positions.push(surface(theta, 2.0 * PI * s as f64 / segments as f64));
        }
    }
    positions.push(surface(PI, 0.0));

    let north = 0;
    let south = positions.len() - 1;
    let id = |k: usize, s: usize| 1 + (k - 1) * segments + s % segments;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([north, id(1, s), id(1, s + 1)]);
    }
    for k in 1..rings {
        for s in 0..segments {
            let (a, b, c, d) = (id(k, s), id(k + 1, s), id(k + 1, s + 1), id(k, s + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for s in 0..segments {
        faces.push([south, id(rings, s + 1), id(rings, s)]);
    }
    Mesh::new(positions, faces).expect("sphere is valid")
}

/// Open tube along +z (a "bottle" without caps), `rings × segments` vertices.
pub fn cylinder(rings: usize, segments: usize, radius: f64, height: f64) -> Mesh {
    assert!(rings >= 2 && segments >= 3);
    let mut positions = Vec::with_capacity(rings * segments);
    for k in 0..rings {
        let z = height * k as f64 / (rings - 1) as f64;
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            positions.push(Point3::new(radius * phi.cos(), radius * phi.sin(), z));
        }
    }
    let id = |k: usize, s: usize| k * segments + s % segments;
    let mut faces = Vec::new();
    for k in 0..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (id(k, s), id(k, s + 1), id(k + 1, s + 1), id(k + 1, s));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(positions, faces).expect("cylinder is valid")
}

/// 5,000-vertex elongated bumpy body (49 rings × 102 segments + 2 poles).
pub fn lion_scale_mesh() -> Mesh {
    ellipsoid(49, 102, 0.08, [1.6, 0.8, 0.9])
}

/// An orthographic camera looking down -y (image x ← model x, image y ← −model z)
/// that maps the mesh bounding box into a `width × height` image with a margin.
pub fn framing_camera(mesh: &Mesh, width: f64, height: f64) -> AffineCamera {
    let (lo, hi) = mesh.bbox();
    let sx = 0.8 * width / (hi.x - lo.x).max(1e-12);
    let sz = 0.8 * height / (hi.z - lo.z).max(1e-12);
    let s = sx.min(sz);
    // slight tilt so the camera is a general affine map, not an axis drop
    let m = Matrix2x3::new(s, 0.08 * s, 0.05 * s, -0.03 * s, 0.1 * s, -s);
    let centre = nalgebra::center(&lo, &hi);
    let c = Vector2::new(width / 2.0, height / 2.0) - m * centre.coords;
    AffineCamera::new(m, c)
}

/// Picks `count` feature vertices spread over the index range.
pub fn spread_vertices(mesh: &Mesh, count: usize) -> Vec<usize> {
    let n = mesh.vertex_count();
    assert!(count <= n);
    // odd stride walk, distinct because gcd(stride, n) is forced to 1
    let mut stride = (n as f64 * 0.618_033_988_75) as usize | 1;
    while gcd(stride, n) != 1 {
        stride += 2;
    }
    (0..count).map(|k| (7 + k * stride) % n).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Correspondences obtained by projecting `vertices` through `camera` and
/// then applying `warp` in image space. Pixels are clamped to the image.
pub fn synthesize_correspondences(
    mesh: &Mesh,
    vertices: &[usize],
    camera: &AffineCamera,
    width: f64,
    height: f64,
    warp: impl Fn(Point2<f64>) -> Point2<f64>,
) -> CorrespondenceSet {
    let pairs = vertices
        .iter()
        .map(|&v| {
            let p = warp(camera.project(&mesh.position(v)));
            Correspondence {
                vertex: v,
                pixel: Point2::new(p.x.clamp(0.0, width), p.y.clamp(0.0, height)),
            }
        })
        .collect();
    CorrespondenceSet::new(width, height, pairs).expect("synthesized set is valid")
}

/// Image-space bend used by the scale fixtures: pixels are pushed sideways
/// proportionally to the squared distance from the image's vertical centre.
pub fn bend_warp(width: f64, height: f64, amount: f64) -> impl Fn(Point2<f64>) -> Point2<f64> {
    move |p| {
        let t = (p.y - height / 2.0) / (height / 2.0);
        Point2::new(p.x + amount * width * t * t, p.y)
    }
}

/// The 5,000-vertex / 86-feature scale fixture with a bent target image.
pub fn lion_scale_fixture() -> (Mesh, CorrespondenceSet) {
    let mesh = lion_scale_mesh();
    let (w, h) = (1024.0, 768.0);
    let cam = framing_camera(&mesh, w, h);
    let verts = spread_vertices(&mesh, 86);
    let corr = synthesize_correspondences(&mesh, &verts, &cam, w, h, bend_warp(w, h, 0.04));
    (mesh, corr)
}

/// 20 features projected exactly through a known camera into a 640×480
/// image; the mesh is already consistent with the correspondences.
pub fn consistent_fixture() -> (Mesh, CorrespondenceSet, AffineCamera) {
    let mesh = bumpy_sphere(12, 20, 0.1);
    let (w, h) = (640.0, 480.0);
    let cam = framing_camera(&mesh, w, h);
    let verts = spread_vertices(&mesh, 20);
    let corr = synthesize_correspondences(&mesh, &verts, &cam, w, h, |p| p);
    (mesh, corr, cam)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(grid(4, 3, 1.0).vertex_count(), 12);
        assert_eq!(icosahedron().vertex_count(), 12);
        assert_eq!(bumpy_sphere(5, 8, 0.0).vertex_count(), 42);
        assert_eq!(cylinder(3, 6, 1.0, 2.0).vertex_count(), 18);
        assert_eq!(lion_scale_mesh().vertex_count(), 5000);
    }

    #[test]
    fn sphere_faces_point_outward() {
        let m = bumpy_sphere(6, 10, 0.0);
        for f in m.faces() {
            let [a, b, c] = f.map(|i| m.position(i));
            let n = (b - a).cross(&(c - a));
            let centroid = (a.coords + b.coords + c.coords) / 3.0;
            assert!(n.dot(&centroid) > 0.0);
        }
    }

    #[test]
    fn spread_is_distinct() {
        let m = lion_scale_mesh();
        let mut v = spread_vertices(&m, 86);
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), 86);
    }
}
