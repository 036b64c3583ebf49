//! Detail-preserving deformation under image-projection constraints.
//!
//! Two sparse least-squares solves: first the deformed local frames from the
//! rest relative rotations (anchor frame pinned), then positions whose
//! Laplacian matches the frame-rotated rest deltas while feature vertices
//! project onto their pixels through the global camera.
//!
//! The position solve decouples: every projection constraint uses the same
//! camera `M`, so expressing positions in the eigenbasis of `MᵀM` turns the
//! 3N×3N normal matrix into three N×N matrices
//! `(1−α) LᵀL + α μ_k D_W + E_anchor` that share one sparsity pattern.

use nalgebra::{DMatrix, DVector, Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::AffineCamera;
use crate::error::{Error, Result};
use crate::formats::CorrespondenceSet;
use crate::geodesic::WeightField;
use crate::lri::LriEncoding;
use crate::mesh::Mesh;
use crate::sparse::{Cholesky, SpdSolver, SymmetricBuilder, SymmetricCsc, Symbolic};

/// Which detail term the position solve targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetailMode {
    /// Frames are solved and rotate the rest deltas.
    #[default]
    Lri,
    /// Rest deltas are used unrotated (`‖L(v') − L(v)‖²`).
    Literal,
}

impl std::str::FromStr for DetailMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lri" => Ok(Self::Lri),
            "literal" => Ok(Self::Literal),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Inputs of one deformation step.
#[derive(Debug, Clone)]
pub struct DeformProblem<'a> {
    pub lri: &'a LriEncoding,
    pub mesh: &'a Mesh,
    pub corr: &'a CorrespondenceSet,
    pub camera: AffineCamera,
    pub weights: &'a WeightField,
    pub alpha: f64,
    pub anchor: usize,
    pub anchor_position: Point3<f64>,
    /// Target frame of the anchor; `None` pins it to its rest frame.
    pub anchor_frame: Option<Matrix3<f64>>,
    pub mode: DetailMode,
}

impl DeformProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        let n = self.mesh.vertex_count();
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.alpha >= 1.0 {
            return Err(Error::InvalidArgument(
                "alpha = 1 disables deformation; the step must not be called".into(),
            ));
        }
        if self.anchor >= n {
            return Err(Error::InvalidVertex {
                id: self.anchor,
                count: n,
            });
        }
        if self.lri.vertex_count() != n {
            return Err(Error::InvalidArgument("encoding and mesh differ in vertex count".into()));
        }
        self.corr.check_mesh(self.mesh)?;
        if self.weights.source_count() != self.corr.len() || self.weights.vertex_count() != n {
            return Err(Error::InvalidArgument("weight field does not match problem".into()));
        }
        if !self.camera.is_finite() || !self.anchor_position.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("deformation constraints"));
        }
        Ok(())
    }

    fn anchor_target_frame(&self) -> Matrix3<f64> {
        self.anchor_frame.unwrap_or(self.lri.frames[self.anchor])
    }
}

/// Aggregated feature weights `W_j = (1/N) Σ_i w[j][i]`.
pub fn feature_weights(weights: &WeightField) -> Vec<f64> {
    weights.row_means()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameField {
    pub frames: Vec<Matrix3<f64>>,
}

/// Feature sets larger than this use the full sparse system instead of the
/// dense feature block.
const MAX_DENSE_FEATURES: usize = 1024;

/// Factorizations reused across deformation steps of one run. Bound to the
/// encoding it was created for.
///
/// Frames: the connection Laplacian is factored once with some anchor; other
/// anchors are handled by a rank-6 update, and the result is memoized per
/// anchor and target frame.
///
/// Positions: with `F` the feature vertices and `R` the rest, `A_RR` only
/// depends on `α` (the anchor enters as a rank-1 update), so each step needs
/// two cached solves per axis plus a dense `|F|×|F|` Schur complement.
#[derive(Debug, Clone)]
pub struct DeformSolver {
    n: usize,
    laplacian_normal: Vec<(usize, usize, f64)>,
    frame_base: Vec<(usize, usize, f64)>,
    frame_symbolic: Option<Symbolic>,
    frame_factor: Option<FrameFactor>,
    frame_memo: Option<(usize, Matrix3<f64>, FrameField)>,
    positions: Option<PositionCache>,
    full_symbolic: Option<Symbolic>,
}

#[derive(Debug, Clone)]
enum FrameFactor {
    /// Direct factor anchored at `reference`, plus the update for the last
    /// other anchor requested.
    Base {
        reference: usize,
        factor: Cholesky,
        update: Option<AnchorSwap>,
    },
    /// Factorization failed; a solver per anchor (CG fallback).
    PerAnchor { anchor: usize, solver: SpdSolver },
}

/// Woodbury data for replacing the reference anchor by `anchor`.
#[derive(Debug, Clone)]
struct AnchorSwap {
    anchor: usize,
    /// `H⁻¹ U` for the six unit columns of the two anchor blocks.
    columns: Vec<Vec<f64>>,
    capacitance: nalgebra::LU<f64, nalgebra::U6, nalgebra::U6>,
}

#[derive(Debug, Clone)]
struct PositionCache {
    alpha: f64,
    features: Vec<usize>,
    /// vertex -> index in R (or NONE)
    r_index: Vec<usize>,
    /// vertex -> index in F (or NONE)
    f_index: Vec<usize>,
    r_vertices: Vec<usize>,
    factor: Cholesky,
    /// Entries `(r, f, value)` of `A_RF`.
    cross: Vec<(usize, usize, f64)>,
    a_ff: DMatrix<f64>,
    /// `A_FR A_RR⁻¹ A_RF` without the anchor.
    g: DMatrix<f64>,
    anchor: Option<RankOne>,
}

/// Sherman-Morrison data for an anchor inside R.
#[derive(Debug, Clone)]
struct RankOne {
    vertex: usize,
    u: Vec<f64>,
    gamma: f64,
    w_f: DVector<f64>,
}

const NONE: usize = usize::MAX;

impl DeformSolver {
    pub fn new(lri: &LriEncoding) -> Self {
        let n = lri.vertex_count();
        let laplacian_normal = lri.laplacian.normal_triplets();

        let mut frame_base = Vec::with_capacity(lri.edges.len() * 15 + 3 * n);
        for i in 0..3 * n {
            frame_base.push((i, i, 0.0));
        }
        for (&(a, b), r) in lri.edges.iter().zip(&lri.rotations) {
            for k in 0..3 {
                frame_base.push((3 * a + k, 3 * a + k, 1.0));
                frame_base.push((3 * b + k, 3 * b + k, 1.0));
            }
            for p in 0..3 {
                for q in 0..3 {
                    frame_base.push((3 * a + p, 3 * b + q, -r[(p, q)]));
                }
            }
        }
        Self {
            n,
            laplacian_normal,
            frame_base,
            frame_symbolic: None,
            frame_factor: None,
            frame_memo: None,
            positions: None,
            full_symbolic: None,
        }
    }

    /// Factors the frame system anchored at `reference`. Optional: the first
    /// frame solve does it on demand.
    pub fn prepare_frames(&mut self, reference: usize) -> Result<()> {
        if reference >= self.n {
            return Err(Error::InvalidVertex {
                id: reference,
                count: self.n,
            });
        }
        let a = self.frame_matrix(reference);
        let sym = self
            .frame_symbolic
            .get_or_insert_with(|| Symbolic::analyze(&a, 3));
        self.frame_factor = Some(match Cholesky::factor(&a, sym) {
            Ok(factor) => FrameFactor::Base {
                reference,
                factor,
                update: None,
            },
            Err(_) => FrameFactor::PerAnchor {
                anchor: reference,
                solver: SpdSolver::new(&a, sym),
            },
        });
        Ok(())
    }

    /// Factors the feature-independent block of the position system.
    /// Optional: the first position solve does it on demand.
    pub fn prepare_positions(&mut self, features: &[usize], alpha: f64) -> Result<()> {
        self.positions = PositionCache::build(self.n, &self.laplacian_normal, features, alpha)?;
        if self.positions.is_none() {
            self.ensure_full_symbolic();
        }
        Ok(())
    }

    fn frame_matrix(&self, anchor: usize) -> SymmetricCsc {
        let mut trip = self.frame_base.clone();
        for k in 0..3 {
            trip.push((3 * anchor + k, 3 * anchor + k, 1.0));
        }
        SymmetricCsc::from_upper_triplets(3 * self.n, &trip)
    }

    fn ensure_full_symbolic(&mut self) {
        if self.full_symbolic.is_none() {
            let a = SymmetricCsc::from_upper_triplets(self.n, &self.laplacian_normal);
            self.full_symbolic = Some(Symbolic::analyze(&a, 1));
        }
    }

    /// Solves the anchored frame system for three right-hand sides.
    fn frame_solve(&mut self, anchor: usize, rhs: &[Vec<f64>; 3]) -> Result<[Vec<f64>; 3]> {
        if self.frame_factor.is_none() {
            self.prepare_frames(anchor)?;
        }
        let needs_per_anchor = matches!(&self.frame_factor, Some(FrameFactor::PerAnchor { anchor: a, .. }) if *a != anchor);
        if needs_per_anchor {
            let a = self.frame_matrix(anchor);
            let sym = self.frame_symbolic.as_ref().expect("analysed with the first factor");
            self.frame_factor = Some(FrameFactor::PerAnchor {
                anchor,
                solver: SpdSolver::new(&a, sym),
            });
        }
        match self.frame_factor.as_mut().expect("set above") {
            FrameFactor::PerAnchor { solver, .. } => Ok([solver.solve(&rhs[0])?, solver.solve(&rhs[1])?, solver.solve(&rhs[2])?]),
            FrameFactor::Base {
                reference,
                factor,
                update,
            } => {
                if *reference == anchor {
                    return Ok([factor.solve(&rhs[0]), factor.solve(&rhs[1]), factor.solve(&rhs[2])]);
                }
                if update.as_ref().map(|u| u.anchor) != Some(anchor) {
                    *update = Some(AnchorSwap::new(factor, *reference, anchor)?);
                }
                let swap = update.as_ref().expect("set above");
                Ok([
                    swap.solve(factor, *reference, &rhs[0]),
                    swap.solve(factor, *reference, &rhs[1]),
                    swap.solve(factor, *reference, &rhs[2]),
                ])
            }
        }
    }

    /// Least-squares frames `min Σ_edges ‖F'_b − F'_a R_ab‖² + ‖F'_anchor − target‖²`,
    /// each result projected to the nearest rotation. The target is the
    /// anchor's rest frame unless `anchor_frame` is set.
    pub fn solve_frames(&mut self, problem: &DeformProblem) -> Result<FrameField> {
        problem.validate()?;
        self.check(problem)?;
        // The rest frames satisfy every edge equation exactly, so with the
        // anchor at its rest frame they are the minimizer.
        if problem.anchor_frame.is_none() {
            return Ok(FrameField {
                frames: problem.lri.frames.clone(),
            });
        }
        let n = self.n;
        let anchor = problem.anchor;
        let target = problem.anchor_target_frame();
        if let Some((a, t, frames)) = &self.frame_memo {
            if *a == anchor && *t == target {
                return Ok(frames.clone());
            }
        }

        // rows of F are solved as column vectors y with H y = target row
        let rhs: [Vec<f64>; 3] = std::array::from_fn(|row| {
            let mut b = vec![0.0; 3 * n];
            for k in 0..3 {
                b[3 * anchor + k] = target[(row, k)];
            }
            b
        });
        let x = self.frame_solve(anchor, &rhs)?;
        let frames = (0..n)
            .map(|i| {
                let f = Matrix3::from_fn(|row, k| x[row][3 * i + k]);
                if !f.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("frame solve"));
                }
                nearest_rotation(&f).ok_or(Error::DegenerateFrame(i))
            })
            .collect::<Result<Vec<_>>>()?;
        let field = FrameField { frames };
        self.frame_memo = Some((anchor, target, field.clone()));
        Ok(field)
    }

    /// Positions minimizing
    /// `(1−α) Σ_i ‖L(v'_i) − F'_i d_i‖² + α Σ_j W_j ‖M v'_j + c − p_j‖² + ‖v'_anchor − anchor_pos‖²`.
    pub fn solve_positions(&mut self, problem: &DeformProblem, frames: &FrameField) -> Result<Vec<Point3<f64>>> {
        problem.validate()?;
        self.check(problem)?;
        if frames.frames.len() != self.n {
            return Err(Error::InvalidArgument("frame field length differs from vertex count".into()));
        }
        let features = problem.corr.vertices();
        let stale = match &self.positions {
            Some(c) => c.alpha.to_bits() != problem.alpha.to_bits() || c.features != features,
            None => self.full_symbolic.is_none(),
        };
        if stale {
            self.prepare_positions(&features, problem.alpha)?;
        }
        let system = PositionSystem::new(problem, frames);
        let mut channels: [Vec<f64>; 3] = Default::default();
        for (k, out) in channels.iter_mut().enumerate() {
            let rhs = system.rhs(problem, k);
            let blocked = match self.positions.as_mut() {
                Some(cache) => cache.solve(problem, &system, k, &rhs).ok(),
                None => None,
            };
            *out = match blocked {
                Some(x) => x,
                None => {
                    self.ensure_full_symbolic();
                    let sym = self.full_symbolic.as_ref().expect("analysed above");
                    let a = system.full_matrix(problem, &self.laplacian_normal, k);
                    SpdSolver::new(&a, sym).solve(&rhs)?
                }
            };
        }
        let positions: Vec<Point3<f64>> = (0..self.n)
            .map(|i| Point3::from(system.q * Vector3::new(channels[0][i], channels[1][i], channels[2][i])))
            .collect();
        if positions.iter().any(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("deformed positions"));
        }
        Ok(positions)
    }

    /// Frame solve (or rest frames in literal mode) followed by the position solve.
    pub fn deform(&mut self, problem: &DeformProblem) -> Result<(Mesh, FrameField)> {
        problem.validate()?;
        let frames = match problem.mode {
            DetailMode::Lri => self.solve_frames(problem)?,
            DetailMode::Literal => FrameField {
                frames: problem.lri.frames.clone(),
            },
        };
        let positions = self.solve_positions(problem, &frames)?;
        Ok((problem.mesh.with_positions(positions)?, frames))
    }

    fn check(&self, problem: &DeformProblem) -> Result<()> {
        if problem.lri.vertex_count() != self.n {
            return Err(Error::InvalidArgument("solver was built for a different encoding".into()));
        }
        Ok(())
    }
}

impl AnchorSwap {
    fn new(factor: &Cholesky, reference: usize, anchor: usize) -> Result<Self> {
        let n3 = factor.dim();
        let idx = Self::indices(reference, anchor);
        let columns: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| {
                let mut e = vec![0.0; n3];
                e[i] = 1.0;
                factor.solve(&e)
            })
            .collect();
        let mut k = nalgebra::Matrix6::<f64>::zeros();
        for p in 0..6 {
            k[(p, p)] = if p < 3 { -1.0 } else { 1.0 };
            for q in 0..6 {
                k[(p, q)] += columns[q][idx[p]];
            }
        }
        let capacitance = k.lu();
        if !capacitance.is_invertible() {
            return Err(Error::Solver("anchor update is singular".into()));
        }
        Ok(Self {
            anchor,
            columns,
            capacitance,
        })
    }

    /// Unit columns removed (reference) then added (anchor).
    fn indices(reference: usize, anchor: usize) -> [usize; 6] {
        [
            3 * reference,
            3 * reference + 1,
            3 * reference + 2,
            3 * anchor,
            3 * anchor + 1,
            3 * anchor + 2,
        ]
    }

    fn solve(&self, factor: &Cholesky, reference: usize, b: &[f64]) -> Vec<f64> {
        let mut y = factor.solve(b);
        let idx = Self::indices(reference, self.anchor);
        let s = nalgebra::Vector6::from_fn(|p, _| y[idx[p]]);
        let z = self.capacitance.solve(&s).expect("checked invertible");
        for (col, zq) in self.columns.iter().zip(z.iter()) {
            for (yi, ci) in y.iter_mut().zip(col) {
                *yi -= ci * zq;
            }
        }
        y
    }
}

/// Per-step data of the decoupled position system: `Q` diagonalizes `MᵀM`
/// and positions are solved as `u = Qᵀ v`, one axis at a time.
struct PositionSystem {
    q: Matrix3<f64>,
    mu: Vector3<f64>,
    /// `(1−α) Lᵀ s` per axis with `s = Qᵀ F'_i d_i`.
    detail_rhs: [Vec<f64>; 3],
    feature_w: Vec<f64>,
    /// `Qᵀ Mᵀ (p_j − c)` per feature.
    feature_rhs: Vec<Vector3<f64>>,
    anchor_target: Vector3<f64>,
}

impl PositionSystem {
    fn new(problem: &DeformProblem, frames: &FrameField) -> Self {
        let alpha = problem.alpha;
        let m = problem.camera.matrix;
        let eig = SymmetricEigen::new(m.transpose() * m);
        let q = eig.eigenvectors;
        let qt = q.transpose();
        let mu = eig.eigenvalues.map(|x| x.max(0.0));
        let targets = problem.lri.rotated_deltas(&frames.frames);
        let detail_rhs = std::array::from_fn(|k| {
            let s: Vec<f64> = targets.iter().map(|t| (qt * t)[k]).collect();
            let mut r = problem.lri.laplacian.apply_transpose_scalar(&s);
            r.iter_mut().for_each(|x| *x *= 1.0 - alpha);
            r
        });
        let b_t = (m * q).transpose();
        let feature_rhs = problem
            .corr
            .pairs()
            .iter()
            .map(|p| b_t * (p.pixel.coords - problem.camera.translation))
            .collect();
        Self {
            q,
            mu,
            detail_rhs,
            feature_w: feature_weights(problem.weights),
            feature_rhs,
            anchor_target: qt * problem.anchor_position.coords,
        }
    }

    fn feature_stiffness(&self, alpha: f64, j: usize, k: usize) -> f64 {
        alpha * self.feature_w[j] * self.mu[k]
    }

    fn rhs(&self, problem: &DeformProblem, k: usize) -> Vec<f64> {
        let mut rhs = self.detail_rhs[k].clone();
        rhs[problem.anchor] += self.anchor_target[k];
        for (j, pair) in problem.corr.pairs().iter().enumerate() {
            rhs[pair.vertex] += problem.alpha * self.feature_w[j] * self.feature_rhs[j][k];
        }
        rhs
    }

    fn full_matrix(&self, problem: &DeformProblem, laplacian_normal: &[(usize, usize, f64)], k: usize) -> SymmetricCsc {
        let n = problem.mesh.vertex_count();
        let mut builder = SymmetricBuilder::with_capacity(n, laplacian_normal.len() + problem.corr.len() + 1);
        for &(i, j, v) in laplacian_normal {
            builder.add(i, j, (1.0 - problem.alpha) * v);
        }
        builder.add(problem.anchor, problem.anchor, 1.0);
        for (j, pair) in problem.corr.pairs().iter().enumerate() {
            builder.add(pair.vertex, pair.vertex, self.feature_stiffness(problem.alpha, j, k));
        }
        builder.build()
    }
}

impl PositionCache {
    /// `None` when the blocked path does not apply (too many features, no
    /// free vertices, or `A_RR` not positive definite).
    fn build(n: usize, laplacian_normal: &[(usize, usize, f64)], features: &[usize], alpha: f64) -> Result<Option<Self>> {
        let p = features.len();
        if p == 0 || p > MAX_DENSE_FEATURES || p >= n {
            return Ok(None);
        }
        let mut f_index = vec![NONE; n];
        for (j, &v) in features.iter().enumerate() {
            if v >= n || f_index[v] != NONE {
                return Err(Error::InvalidArgument(format!("bad feature vertex {v}")));
            }
            f_index[v] = j;
        }
        let mut r_index = vec![NONE; n];
        let mut r_vertices = Vec::with_capacity(n - p);
        for v in 0..n {
            if f_index[v] == NONE {
                r_index[v] = r_vertices.len();
                r_vertices.push(v);
            }
        }

        let scale = 1.0 - alpha;
        let mut rr = Vec::with_capacity(laplacian_normal.len());
        let mut cross = Vec::new();
        let mut a_ff = DMatrix::zeros(p, p);
        for &(i, j, v) in laplacian_normal {
            let v = scale * v;
            match (r_index[i], r_index[j]) {
                (ri, rj) if ri != NONE && rj != NONE => rr.push((ri.min(rj), ri.max(rj), v)),
                (ri, NONE) if ri != NONE => cross.push((ri, f_index[j], v)),
                (NONE, rj) if rj != NONE => cross.push((rj, f_index[i], v)),
                _ => {
                    let (fi, fj) = (f_index[i], f_index[j]);
                    a_ff[(fi, fj)] += v;
                    if fi != fj {
                        a_ff[(fj, fi)] += v;
                    }
                }
            }
        }
        let a_rr = SymmetricCsc::from_upper_triplets(r_vertices.len(), &rr);
        let factor = match Cholesky::factor(&a_rr, &Symbolic::analyze(&a_rr, 1)) {
            Ok(f) => f,
            Err(_) => return Ok(None),
        };

        // G = A_FR A_RR⁻¹ A_RF, one column per feature
        let mut by_feature: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
        for &(r, f, v) in &cross {
            by_feature[f].push((r, v));
        }
        let mut g = DMatrix::zeros(p, p);
        let mut col = vec![0.0; r_vertices.len()];
        for (j, entries) in by_feature.iter().enumerate() {
            if entries.is_empty() {
                continue;
            }
            col.iter_mut().for_each(|x| *x = 0.0);
            for &(r, v) in entries {
                col[r] += v;
            }
            let z = factor.solve(&col);
            for &(r, f, v) in &cross {
                g[(f, j)] += v * z[r];
            }
        }
        let g = (&g + g.transpose()) * 0.5;

        Ok(Some(Self {
            alpha,
            features: features.to_vec(),
            r_index,
            f_index,
            r_vertices,
            factor,
            cross,
            a_ff,
            g,
            anchor: None,
        }))
    }

    fn set_anchor(&mut self, anchor: usize) {
        if self.anchor.as_ref().map(|a| a.vertex) == Some(anchor) {
            return;
        }
        let ra = self.r_index[anchor];
        if ra == NONE {
            self.anchor = None;
            return;
        }
        let mut e = vec![0.0; self.r_vertices.len()];
        e[ra] = 1.0;
        let u = self.factor.solve(&e);
        let gamma = 1.0 + u[ra];
        let mut w_f = DVector::zeros(self.features.len());
        for &(r, f, v) in &self.cross {
            w_f[f] += v * u[r];
        }
        self.anchor = Some(RankOne {
            vertex: anchor,
            u,
            gamma,
            w_f,
        });
    }

    /// `A_RR⁻¹ v`, anchor included.
    fn rr_solve(&self, v: &[f64]) -> Vec<f64> {
        let mut t = self.factor.solve(v);
        if let Some(a) = &self.anchor {
            let s = t[self.r_index[a.vertex]] / a.gamma;
            for (ti, ui) in t.iter_mut().zip(&a.u) {
                *ti -= ui * s;
            }
        }
        t
    }

    fn solve(&mut self, problem: &DeformProblem, system: &PositionSystem, k: usize, rhs: &[f64]) -> Result<Vec<f64>> {
        self.set_anchor(problem.anchor);
        let p = self.features.len();
        let b_r: Vec<f64> = self.r_vertices.iter().map(|&v| rhs[v]).collect();
        let mut b_f = DVector::from_fn(p, |j, _| rhs[self.features[j]]);

        let t = self.rr_solve(&b_r);
        for &(r, f, v) in &self.cross {
            b_f[f] -= v * t[r];
        }

        let mut s = &self.a_ff - &self.g;
        for j in 0..p {
            s[(j, j)] += system.feature_stiffness(problem.alpha, j, k);
        }
        match &self.anchor {
            Some(a) => s += &a.w_f * a.w_f.transpose() / a.gamma,
            None => {
                let fa = self.f_index[problem.anchor];
                s[(fa, fa)] += 1.0;
            }
        }
        let x_f = s
            .cholesky()
            .ok_or_else(|| Error::Solver("feature block is not positive definite".into()))?
            .solve(&b_f);

        let mut v = b_r;
        for &(r, f, val) in &self.cross {
            v[r] -= val * x_f[f];
        }
        let x_r = self.rr_solve(&v);

        let mut x = vec![0.0; rhs.len()];
        for (&vtx, &val) in self.r_vertices.iter().zip(&x_r) {
            x[vtx] = val;
        }
        for (&vtx, &val) in self.features.iter().zip(x_f.iter()) {
            x[vtx] = val;
        }
        Ok(x)
    }
}

pub fn solve_frames(problem: &DeformProblem) -> Result<FrameField> {
    DeformSolver::new(problem.lri).solve_frames(problem)
}

pub fn solve_positions(problem: &DeformProblem, frames: &FrameField) -> Result<Vec<Point3<f64>>> {
    DeformSolver::new(problem.lri).solve_positions(problem, frames)
}

pub fn deform(problem: &DeformProblem) -> Result<Mesh> {
    Ok(DeformSolver::new(problem.lri).deform(problem)?.0)
}

/// Value of the quadratic the position solve minimizes, evaluated term by term.
pub fn deformation_objective(problem: &DeformProblem, frames: &FrameField, positions: &[Point3<f64>]) -> f64 {
    let alpha = problem.alpha;
    let lap = &problem.lri.laplacian;
    let detail: f64 = (0..positions.len())
        .map(|i| (lap.apply_at(i, positions) - frames.frames[i] * problem.lri.local_deltas[i]).norm_squared())
        .sum();
    let feature_w = feature_weights(problem.weights);
    let projection: f64 = problem
        .corr
        .pairs()
        .iter()
        .zip(&feature_w)
        .map(|(pair, w)| w * (problem.camera.project(&positions[pair.vertex]) - pair.pixel).norm_squared())
        .sum();
    let anchor = (positions[problem.anchor] - problem.anchor_position).norm_squared();
    (1.0 - alpha) * detail + alpha * projection + anchor
}

/// Closest rotation in the Frobenius sense (polar factor with det = +1).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let mut u = svd.u?;
    let v_t = svd.v_t?;
    if (u * v_t).determinant() < 0.0 {
        let c = -u.column(2);
        u.set_column(2, &c);
    }
    let r = u * v_t;
    r.iter().all(|x| x.is_finite()).then_some(r)
}
