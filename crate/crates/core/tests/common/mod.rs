//! Random instances and dense reference implementations shared by the
//! integration tests. The oracles use explicit dense matrices and never call
//! the library's solvers.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix4, Point2, Point3, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texdeform::camera::AffineCamera;
use texdeform::deform::{DeformProblem, FrameField};
use texdeform::fixtures;
use texdeform::formats::{Correspondence, CorrespondenceSet};
use texdeform::laplacian::LaplacianOperator;
use texdeform::Mesh;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Jittered height-field grid with at most `max_vertices` vertices.
pub fn random_grid(rng: &mut ChaCha8Rng, max_vertices: usize) -> Mesh {
    let nx = rng.random_range(3..=7usize);
    let ny = rng.random_range(3..=(max_vertices / nx).clamp(3, 7));
    let base = fixtures::grid(nx, ny, 1.0);
    let positions = base
        .positions()
        .iter()
        .map(|p| {
            Point3::new(
                p.x + rng.random_range(-0.25..0.25),
                p.y + rng.random_range(-0.25..0.25),
                rng.random_range(-0.4..0.4),
            )
        })
        .collect();
    base.with_positions(positions).unwrap()
}

/// Closed surface with randomly perturbed radii, at most `max_vertices` vertices.
pub fn random_closed(rng: &mut ChaCha8Rng, max_vertices: usize) -> Mesh {
    let segments = rng.random_range(4..=8usize);
    let rings = rng.random_range(2..=((max_vertices - 2) / segments).clamp(2, 6));
    let base = fixtures::bumpy_sphere(rings, segments, 0.1);
    let positions = base
        .positions()
        .iter()
        .map(|p| p * rng.random_range(0.85..1.15))
        .collect();
    base.with_positions(positions).unwrap()
}

pub fn random_mesh(rng: &mut ChaCha8Rng, max_vertices: usize) -> Mesh {
    if rng.random_bool(0.5) {
        random_grid(rng, max_vertices)
    } else {
        random_closed(rng, max_vertices)
    }
}

pub fn random_camera(rng: &mut ChaCha8Rng) -> AffineCamera {
    let m = Matrix2x3::from_fn(|_, _| rng.random_range(-60.0..60.0));
    let c = Vector2::new(rng.random_range(200.0..300.0), rng.random_range(150.0..250.0));
    AffineCamera::new(m, c)
}

/// `count` distinct vertices in random order.
pub fn random_vertices(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, count).into_vec()
}

/// Projects the chosen vertices through `camera` and adds pixel noise of
/// amplitude `noise`. Pixels are shifted to non-negative coordinates and the
/// image is sized to contain them; `camera` is shifted along, so noise-free
/// pairs stay exactly consistent with it.
pub fn noisy_correspondences(
    rng: &mut ChaCha8Rng,
    mesh: &Mesh,
    vertices: &[usize],
    camera: &mut AffineCamera,
    noise: f64,
) -> CorrespondenceSet {
    let pixels: Vec<Point2<f64>> = vertices
        .iter()
        .map(|&v| {
            let p = camera.project(&mesh.position(v));
            let jitter = if noise > 0.0 {
                Vector2::new(rng.random_range(-noise..noise), rng.random_range(-noise..noise))
            } else {
                Vector2::zeros()
            };
            p + jitter
        })
        .collect();
    let shift = pixels
        .iter()
        .fold(Vector2::zeros(), |acc: Vector2<f64>, p| acc.inf(&p.coords))
        .map(|m| (1.0 - m).max(0.0));
    camera.translation += shift;
    let pairs: Vec<Correspondence> = vertices
        .iter()
        .zip(&pixels)
        .map(|(&vertex, p)| Correspondence {
            vertex,
            pixel: p + shift,
        })
        .collect();
    let hi = pairs.iter().fold(Vector2::zeros(), |acc: Vector2<f64>, p| acc.sup(&p.pixel.coords));
    CorrespondenceSet::new(hi.x.ceil() + 1.0, hi.y.ceil() + 1.0, pairs).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.random_range(0.05..5.0)).collect()
}

/// Weighted affine fit by explicit 4×4 normal equations per image axis.
pub fn oracle_camera(points3: &[Point3<f64>], points2: &[Point2<f64>], weights: &[f64]) -> AffineCamera {
    let mut a = Matrix4::<f64>::zeros();
    let mut bx = Vector4::<f64>::zeros();
    let mut by = Vector4::<f64>::zeros();
    for ((v, p), &w) in points3.iter().zip(points2).zip(weights) {
        let row = Vector4::new(v.x, v.y, v.z, 1.0);
        a += row * row.transpose() * w;
        bx += row * (w * p.x);
        by += row * (w * p.y);
    }
    let lu = a.lu();
    let x = lu.solve(&bx).expect("oracle system is regular");
    let y = lu.solve(&by).expect("oracle system is regular");
    AffineCamera::new(
        Matrix2x3::new(x[0], x[1], x[2], y[0], y[1], y[2]),
        Vector2::new(x[3], y[3]),
    )
}

/// Σ_j w_j ‖M v_j + c − p_j‖² written out component by component.
pub fn scalar_residual(cam: &AffineCamera, points3: &[Point3<f64>], points2: &[Point2<f64>], weights: &[f64]) -> f64 {
    let m = &cam.matrix;
    let c = &cam.translation;
    let mut total = 0.0;
    for k in 0..points3.len() {
        let v = &points3[k];
        let ex = m[(0, 0)] * v.x + m[(0, 1)] * v.y + m[(0, 2)] * v.z + c[0] - points2[k].x;
        let ey = m[(1, 0)] * v.x + m[(1, 1)] * v.y + m[(1, 2)] * v.z + c[1] - points2[k].y;
        total += weights[k] * (ex * ex + ey * ey);
    }
    total
}

/// Explicit N×N Laplacian matrix assembled from the operator's rows.
pub fn dense_laplacian(op: &LaplacianOperator) -> DMatrix<f64> {
    let n = op.vertex_count();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        l[(i, i)] = 1.0;
        for &(j, w) in op.row(i) {
            l[(i, j)] -= w;
        }
    }
    l
}

/// Minimizer of the deformation quadratic from the dense 3N×3N normal
/// equations (no axis decoupling, no sparsity).
pub fn oracle_positions(problem: &DeformProblem, frames: &FrameField) -> Vec<Point3<f64>> {
    let n = problem.mesh.vertex_count();
    let l = dense_laplacian(&problem.lri.laplacian);
    let alpha = problem.alpha;
    let mut a = DMatrix::<f64>::zeros(3 * n, 3 * n);
    let mut b = DVector::<f64>::zeros(3 * n);

    // detail rows: for each vertex i and axis c, Σ_k L[i][k] x_{k,c} = (F'_i d_i)_c
    for i in 0..n {
        let target = frames.frames[i] * problem.lri.local_deltas[i];
        for c in 0..3 {
            let mut row = DVector::<f64>::zeros(3 * n);
            for k in 0..n {
                row[3 * k + c] = l[(i, k)];
            }
            a += &row * row.transpose() * (1.0 - alpha);
            b += &row * ((1.0 - alpha) * target[c]);
        }
    }
    // projection rows: Σ_c M[r][c] x_{j,c} = p_j[r] − c[r]
    let means: Vec<f64> = (0..problem.corr.len())
        .map(|j| problem.weights.row(j).iter().sum::<f64>() / n as f64)
        .collect();
    for (j, pair) in problem.corr.pairs().iter().enumerate() {
        for r in 0..2 {
            let mut row = DVector::<f64>::zeros(3 * n);
            for c in 0..3 {
                row[3 * pair.vertex + c] = problem.camera.matrix[(r, c)];
            }
            let rhs = pair.pixel[r] - problem.camera.translation[r];
            a += &row * row.transpose() * (alpha * means[j]);
            b += &row * (alpha * means[j] * rhs);
        }
    }
    for c in 0..3 {
        let k = 3 * problem.anchor + c;
        a[(k, k)] += 1.0;
        b[k] += problem.anchor_position[c];
    }
    let x = a.cholesky().expect("oracle normal matrix is SPD").solve(&b);
    (0..n).map(|i| Point3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])).collect()
}

/// The deformation quadratic evaluated with the dense Laplacian.
pub fn oracle_objective(problem: &DeformProblem, frames: &FrameField, positions: &[Point3<f64>]) -> f64 {
    let n = positions.len();
    let l = dense_laplacian(&problem.lri.laplacian);
    let mut detail = 0.0;
    for i in 0..n {
        let target = frames.frames[i] * problem.lri.local_deltas[i];
        for c in 0..3 {
            let lx: f64 = (0..n).map(|k| l[(i, k)] * positions[k][c]).sum();
            detail += (lx - target[c]).powi(2);
        }
    }
    let mut projection = 0.0;
    for (j, pair) in problem.corr.pairs().iter().enumerate() {
        let w = problem.weights.row(j).iter().sum::<f64>() / n as f64;
        let v = positions[pair.vertex];
        let m = &problem.camera.matrix;
        for r in 0..2 {
            let e = m[(r, 0)] * v.x + m[(r, 1)] * v.y + m[(r, 2)] * v.z + problem.camera.translation[r] - pair.pixel[r];
            projection += w * e * e;
        }
    }
    let anchor = (positions[problem.anchor] - problem.anchor_position).norm_squared();
    (1.0 - problem.alpha) * detail + problem.alpha * projection + anchor
}

pub fn max_distance(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// O(N²) Dijkstra without a heap, on edge lengths re-quantized from the
/// mesh geometry with the graph's quantum.
pub fn naive_units(mesh: &Mesh, quantum: f64, source: usize) -> Vec<u64> {
    let n = mesh.vertex_count();
    let mut dist = vec![u64::MAX; n];
    let mut done = vec![false; n];
    dist[source] = 0;
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !done[v] && dist[v] != u64::MAX && (u == usize::MAX || dist[v] < dist[u]) {
                u = v;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        for &v in mesh.ring(u) {
            let len = (mesh.edge_length(u, v) / quantum).round() as u64;
            dist[v] = dist[v].min(dist[u] + len);
        }
    }
    dist
}
