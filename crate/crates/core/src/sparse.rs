//! Sparse symmetric positive-definite solves for the normal equations.
//!
//! Minimum-degree ordering (optionally on a block graph), elimination-tree
//! symbolic analysis and an up-looking sparse Cholesky, with a
//! Jacobi-preconditioned conjugate-gradient fallback.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Accumulates a symmetric matrix; `add(i, j, v)` adds `v` to both `A_ij`
/// and `A_ji` (once on the diagonal).
#[derive(Debug, Clone)]
pub struct SymmetricBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymmetricBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i.min(j), i.max(j), v));
    }

    pub fn build(&self) -> SymmetricCsc {
        SymmetricCsc::from_upper_triplets(self.n, &self.entries)
    }
}

/// Upper triangle (diagonal included) of a symmetric matrix, column-compressed
/// with rows sorted inside each column.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricCsc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricCsc {
    /// `triplets` hold `(row, col, value)` with `row <= col`; duplicates are summed.
    pub fn from_upper_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(_, j, _) in triplets {
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut buf = vec![(0usize, 0.0f64); triplets.len()];
        for &(i, j, v) in triplets {
            buf[next[j]] = (i, v);
            next[j] += 1;
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        for j in 0..n {
            let col = &mut buf[counts[j]..counts[j + 1]];
            col.sort_by_key(|e| e.0);
            for &(i, v) in col.iter() {
                if row_idx.len() > col_ptr[j] && *row_idx.last().unwrap() == i {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| self.column(j).find(|&(i, _)| i == j).map_or(0.0, |e| e.1))
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Dense copy (tests and small problems).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                m[(i, j)] += v;
                if i != j {
                    m[(j, i)] += v;
                }
            }
        }
        m
    }

    fn permuted_upper(&self, inv_perm: &[usize]) -> SymmetricCsc {
        let mut trip = Vec::with_capacity(self.nnz());
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                let (a, b) = (inv_perm[i], inv_perm[j]);
                trip.push((a.min(b), a.max(b), v));
            }
        }
        SymmetricCsc::from_upper_triplets(self.n, &trip)
    }
}

/// Fill-reducing ordering plus elimination tree and column structure of `L`.
/// Reusable across matrices with the same sparsity pattern.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    /// new index -> old index
    perm: Vec<usize>,
    /// old index -> new index
    inv_perm: Vec<usize>,
    parent: Vec<usize>,
    l_col_ptr: Vec<usize>,
}

impl Symbolic {
    /// Analyses `a`, ordering `block`-sized groups of consecutive unknowns
    /// together (use 1 for scalar problems).
    pub fn analyze(a: &SymmetricCsc, block: usize) -> Self {
        let n = a.dim();
        assert!(block >= 1 && n.is_multiple_of(block), "dimension must be a multiple of the block size");
        let nb = n / block;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nb];
        for j in 0..n {
            for (i, _) in a.column(j) {
                let (bi, bj) = (i / block, j / block);
                if bi != bj {
                    adj[bi].push(bj);
                    adj[bj].push(bi);
                }
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        let block_order = minimum_degree(adj);
        let perm: Vec<usize> = block_order
            .iter()
            .flat_map(|&b| (0..block).map(move |k| b * block + k))
            .collect();
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }

        let c = a.permuted_upper(&inv_perm);
        let parent = etree(&c);
        let mut counts = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(&c, k, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut l_col_ptr = Vec::with_capacity(n + 1);
        l_col_ptr.push(0);
        for k in 0..n {
            l_col_ptr.push(l_col_ptr[k] + counts[k]);
        }
        Self {
            n,
            perm,
            inv_perm,
            parent,
            l_col_ptr,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries of the factor.
    pub fn factor_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }
}

/// Approximate minimum-degree ordering on a quotient graph: eliminated
/// vertices become elements whose variable lists stand in for the cliques they
/// would create. Degrees are the usual upper bounds
/// `|A_u| + |L_p| − 1 + Σ_e |L_e \ L_p|`; ties go to the lowest index.
fn minimum_degree(adj: Vec<Vec<usize>>) -> Vec<usize> {
    let n = adj.len();
    let mut var_adj = adj;
    let mut var_elems: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    // 0 = variable, 1 = element, 2 = absorbed element
    let mut state = vec![0u8; n];
    let mut degree: Vec<usize> = var_adj.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = degree.iter().enumerate().map(|(v, &d)| Reverse((d, v))).collect();
    let mut mark = vec![0usize; n];
    let mut stamp = 0usize;
    let mut w = vec![NONE; n];
    let mut touched = Vec::new();
    let mut order = Vec::with_capacity(n);
    let mut lp = Vec::new();

    while let Some(Reverse((d, p))) = heap.pop() {
        if state[p] != 0 || d != degree[p] {
            continue;
        }
        order.push(p);
        state[p] = 1;

        stamp += 1;
        mark[p] = stamp;
        lp.clear();
        for &u in &var_adj[p] {
            if state[u] == 0 && mark[u] != stamp {
                mark[u] = stamp;
                lp.push(u);
            }
        }
        for e in std::mem::take(&mut var_elems[p]) {
            if state[e] != 1 {
                continue;
            }
            for &u in &elem_vars[e] {
                if state[u] == 0 && mark[u] != stamp {
                    mark[u] = stamp;
                    lp.push(u);
                }
            }
            state[e] = 2;
            elem_vars[e] = Vec::new();
        }
        var_adj[p] = Vec::new();
        lp.sort_unstable();
        let lp_stamp = stamp;

        for &u in &lp {
            var_elems[u].retain(|&e| state[e] == 1);
            var_elems[u].push(p);
            // edges inside the new element are implied by it
            var_adj[u].retain(|&x| state[x] == 0 && mark[x] != lp_stamp);
        }
        // w[e] = |L_e \ L_p| for elements touching L_p
        for &u in &lp {
            for &e in &var_elems[u] {
                if e == p {
                    continue;
                }
                if w[e] == NONE {
                    w[e] = elem_vars[e].len();
                    touched.push(e);
                }
                w[e] -= 1;
            }
        }
        let remaining = n - order.len();
        for &u in &lp {
            let mut deg = var_adj[u].len() + lp.len() - 1;
            let mut absorbed_any = false;
            for &e in &var_elems[u] {
                if e == p {
                    continue;
                }
                if w[e] == 0 {
                    absorbed_any = true;
                } else {
                    deg += w[e];
                }
            }
            if absorbed_any {
                var_elems[u].retain(|&e| e == p || w[e] != 0);
            }
            let deg = deg.min(degree[u] + lp.len() - 1).min(remaining - 1);
            degree[u] = deg;
            heap.push(Reverse((deg, u)));
        }
        for e in touched.drain(..) {
            if w[e] == 0 {
                // L_e is contained in L_p
                state[e] = 2;
                elem_vars[e] = Vec::new();
            }
            w[e] = NONE;
        }
        elem_vars[p] = lp.clone();
    }
    order
}

fn etree(c: &SymmetricCsc) -> Vec<usize> {
    let n = c.dim();
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for (i, _) in c.column(k) {
            let mut i = i;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal), returned in
/// `stack[top..]` in topological order.
fn ereach(c: &SymmetricCsc, k: usize, parent: &[usize], stack: &mut [usize], mark: &mut [usize]) -> usize {
    let n = c.dim();
    let mut top = n;
    mark[k] = k;
    for (i, _) in c.column(k) {
        if i > k {
            continue;
        }
        let mut i = i;
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

/// Numeric factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    symbolic: Symbolic,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    pub fn factor(a: &SymmetricCsc, symbolic: &Symbolic) -> Result<Self> {
        let n = a.dim();
        if symbolic.n != n {
            return Err(Error::Solver("symbolic analysis dimension mismatch".into()));
        }
        let c = a.permuted_upper(&symbolic.inv_perm);
        let nnz = symbolic.factor_nnz();
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut next: Vec<usize> = symbolic.l_col_ptr[..n].to_vec();
        let mut x = vec![0.0f64; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];

        for k in 0..n {
            let top = ereach(&c, k, &symbolic.parent, &mut stack, &mut mark);
            x[k] = 0.0;
            for (i, v) in c.column(k) {
                if i <= k {
                    x[i] += v;
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let start = symbolic.l_col_ptr[i];
                let lki = x[i] / lx[start];
                x[i] = 0.0;
                for p in start + 1..next[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k;
                lx[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Solver(format!(
                    "matrix is not positive definite (pivot {k}: {d:e})"
                )));
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }
        Ok(Self {
            symbolic: symbolic.clone(),
            l_row_idx: li,
            l_values: lx,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let n = s.n;
        let mut y: Vec<f64> = (0..n).map(|k| b[s.perm[k]]).collect();
        // L y = b
        for j in 0..n {
            let r = s.l_col_ptr[j]..s.l_col_ptr[j + 1];
            y[j] /= self.l_values[r.start];
            let yj = y[j];
            for p in r.start + 1..r.end {
                y[self.l_row_idx[p]] -= self.l_values[p] * yj;
            }
        }
        // Lᵀ x = y
        for j in (0..n).rev() {
            let r = s.l_col_ptr[j]..s.l_col_ptr[j + 1];
            let mut v = y[j];
            for p in r.start + 1..r.end {
                v -= self.l_values[p] * y[self.l_row_idx[p]];
            }
            y[j] = v / self.l_values[r.start];
        }
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[s.perm[k]] = y[k];
        }
        x
    }
}

/// Jacobi-preconditioned conjugate gradient. Stops when
/// `‖r‖ ≤ tol · ‖b‖`; fails after `max_iter` iterations.
pub fn conjugate_gradient(a: &SymmetricCsc, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver("conjugate gradient breakdown".into()));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if norm(&r) <= tol * b_norm {
            return Ok(x);
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::Solver(format!(
        "conjugate gradient did not converge in {max_iter} iterations"
    )))
}

/// Solver state for one matrix: a Cholesky factor, or CG when factorization failed.
#[derive(Debug, Clone)]
pub enum SpdSolver {
    Direct(Cholesky),
    Iterative { matrix: SymmetricCsc },
}

/// CG tolerance for the fallback path.
pub const CG_TOLERANCE: f64 = 1e-10;

impl SpdSolver {
    pub fn new(a: &SymmetricCsc, symbolic: &Symbolic) -> Self {
        match Cholesky::factor(a, symbolic) {
            Ok(f) => SpdSolver::Direct(f),
            Err(_) => SpdSolver::Iterative { matrix: a.clone() },
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x = match self {
            SpdSolver::Direct(f) => f.solve(b),
            SpdSolver::Iterative { matrix } => {
                conjugate_gradient(matrix, b, CG_TOLERANCE, 10 * matrix.dim().max(1))?
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear solve"));
        }
        Ok(x)
    }

    pub fn is_direct(&self) -> bool {
        matches!(self, SpdSolver::Direct(_))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
