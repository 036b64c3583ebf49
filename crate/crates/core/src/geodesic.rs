//! Edge-graph geodesic distances from feature vertices and the
//! inverse-distance weight kernel `1 / (ε + D^β)`.
//!
//! Path lengths are accumulated in fixed point (`u64` multiples of a
//! per-mesh quantum) so that summation is exact and order-independent:
//! `dist_a[b] == dist_b[a]` holds bit-for-bit.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Default kernel exponent.
pub const DEFAULT_BETA: f64 = 2.0;
/// Default kernel offset.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Vertex adjacency with quantized edge lengths, in CSR layout.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    lengths: Vec<u64>,
    quantum: f64,
}

impl EdgeGraph {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.vertex_count();
        let total: f64 = mesh.edges().iter().map(|&(a, b)| mesh.edge_length(a, b)).sum();
        // Any simple path is shorter than the sum of all edges, so 2^62
        // quanta over that total cannot overflow.
        let quantum = if total > 0.0 { total / (1u64 << 62) as f64 } else { 1.0 };
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut lengths = Vec::new();
        offsets.push(0);
        for i in 0..n {
            for &j in mesh.ring(i) {
                targets.push(j);
                lengths.push(quantize(mesh.edge_length(i, j), quantum));
            }
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            lengths,
            quantum,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Length represented by one fixed-point unit.
    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    /// `(neighbour, quantized length)` pairs of vertex `v`.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.targets[r.clone()].iter().copied().zip(self.lengths[r].iter().copied())
    }

    pub fn to_length(&self, units: u64) -> f64 {
        units as f64 * self.quantum
    }

    /// Fixed-point shortest-path lengths from `source`; `None` = unreachable.
    pub fn dijkstra(&self, source: usize) -> Vec<Option<u64>> {
        let n = self.vertex_count();
        let mut dist: Vec<Option<u64>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = Some(0);
        heap.push(Reverse((0u64, source)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for (v, len) in self.neighbors(u) {
                let nd = d + len;
                if dist[v].is_none_or(|old| nd < old) {
                    dist[v] = Some(nd);
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        dist
    }
}

fn quantize(length: f64, quantum: f64) -> u64 {
    (length / quantum).round() as u64
}

/// P×N distances from each source (feature) vertex to every vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    sources: Vec<usize>,
    vertex_count: usize,
    dist: Vec<f64>,
}

impl GeodesicField {
    pub fn from_rows(sources: Vec<usize>, vertex_count: usize, dist: Vec<f64>) -> Result<Self> {
        if dist.len() != sources.len() * vertex_count {
            return Err(Error::InvalidArgument("distance matrix has the wrong size".into()));
        }
        Ok(Self {
            sources,
            vertex_count,
            dist,
        })
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.dist[j * self.vertex_count..(j + 1) * self.vertex_count]
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.dist[j * self.vertex_count + i]
    }

    /// Σ_j D(v_i, v_j) for every vertex i.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.vertex_count];
        for j in 0..self.sources.len() {
            for (s, d) in sums.iter_mut().zip(self.row(j)) {
                *s += d;
            }
        }
        sums
    }

    /// CSV with one row per source: `source,d_0,d_1,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source");
        for i in 0..self.vertex_count {
            out.push_str(&format!(",v{i}"));
        }
        out.push('\n');
        for (j, s) in self.sources.iter().enumerate() {
            out.push_str(&s.to_string());
            for d in self.row(j) {
                out.push(',');
                out.push_str(&d.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn multi_source_geodesics(mesh: &Mesh, sources: &[usize]) -> Result<GeodesicField> {
    multi_source_geodesics_on(&EdgeGraph::new(mesh), sources)
}

pub fn multi_source_geodesics_on(graph: &EdgeGraph, sources: &[usize]) -> Result<GeodesicField> {
    let n = graph.vertex_count();
    if sources.is_empty() {
        return Err(Error::InvalidArgument("no geodesic sources given".into()));
    }
    if let Some(&id) = sources.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidVertex { id, count: n });
    }
    let mut dist = Vec::with_capacity(sources.len() * n);
    for &s in sources {
        for (v, d) in graph.dijkstra(s).into_iter().enumerate() {
            let d = d.ok_or(Error::Unreachable {
                source_vertex: s,
                vertex: v,
            })?;
            dist.push(graph.to_length(d));
        }
    }
    GeodesicField::from_rows(sources.to_vec(), n, dist)
}

/// P×N weights `w[j][i] = 1 / (ε + D(v_i, v_j)^β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    rows: usize,
    vertex_count: usize,
    w: Vec<f64>,
    pub beta: f64,
    pub eps: f64,
}

impl WeightField {
    pub fn from_rows(rows: usize, vertex_count: usize, w: Vec<f64>, beta: f64, eps: f64) -> Result<Self> {
        if w.len() != rows * vertex_count {
            return Err(Error::InvalidArgument("weight matrix has the wrong size".into()));
        }
        Ok(Self {
            rows,
            vertex_count,
            w,
            beta,
            eps,
        })
    }

    /// Same weight for every entry.
    pub fn constant(rows: usize, vertex_count: usize, value: f64) -> Self {
        Self {
            rows,
            vertex_count,
            w: vec![value; rows * vertex_count],
            beta: f64::NAN,
            eps: f64::NAN,
        }
    }

    pub fn source_count(&self) -> usize {
        self.rows
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.w[j * self.vertex_count + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.w[j * self.vertex_count..(j + 1) * self.vertex_count]
    }

    /// Weights of all sources as seen from vertex `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.rows).map(|j| self.get(j, i)).collect()
    }

    /// Per-source mean over vertices, `(1/N) Σ_i w[j][i]`.
    pub fn row_means(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|j| self.row(j).iter().sum::<f64>() / self.vertex_count as f64)
            .collect()
    }
}

pub fn geodesic_weights(field: &GeodesicField, beta: f64, eps: f64) -> Result<WeightField> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let w = field.dist.iter().map(|&d| kernel(d, beta, eps)).collect();
    WeightField::from_rows(field.source_count(), field.vertex_count(), w, beta, eps)
}

#[inline]
pub fn kernel(distance: f64, beta: f64, eps: f64) -> f64 {
    let p = if beta == 2.0 { distance * distance } else { distance.powf(beta) };
    1.0 / (eps + p)
}
