//! Weighted hypergraphs, their incidence matrices and the padded K x K form
//! consumed by incidence attention heads.
//!
//! Vertices and hyperedges are 1-based in the public API and in the text
//! format. Row/column 0 of the padded matrix is the all-zero "global" row.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One weighted hyperedge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub weight: u64,
    pub vertices: Vec<usize>,
}

/// A weighted hypergraph with integer weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHypergraph")]
pub struct Hypergraph {
    #[serde(rename = "num_vertices")]
    n_v: usize,
    edges: Vec<Hyperedge>,
}

#[derive(Deserialize)]
struct RawHypergraph {
    num_vertices: usize,
    edges: Vec<Hyperedge>,
}

impl TryFrom<RawHypergraph> for Hypergraph {
    type Error = Error;
    fn try_from(raw: RawHypergraph) -> Result<Self> {
        Hypergraph::new(raw.num_vertices, raw.edges)
    }
}

/// A single invariant violation reported by [`validate_hypergraph`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoVertices,
    NoEdges,
    ZeroWeight { edge: usize },
    EmptyEdge { edge: usize },
    VertexOutOfRange { edge: usize, vertex: usize },
    DuplicateVertex { edge: usize, vertex: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoVertices => write!(f, "hypergraph must have at least one vertex"),
            Violation::NoEdges => write!(f, "hypergraph must have at least one edge"),
            Violation::ZeroWeight { edge } => write!(f, "edge {edge}: weight must be ≥ 1"),
            Violation::EmptyEdge { edge } => write!(f, "edge {edge}: vertex set is empty"),
            Violation::VertexOutOfRange { edge, vertex } => {
                write!(f, "edge {edge}: vertex {vertex} out of range")
            }
            Violation::DuplicateVertex { edge, vertex } => {
                write!(f, "edge {edge}: duplicate vertex {vertex}")
            }
        }
    }
}

/// Lists every invariant violation of a candidate hypergraph (edges are
/// reported 1-based). An empty report means the instance is valid.
pub fn validate_hypergraph(n_v: usize, edges: &[Hyperedge]) -> Vec<Violation> {
    let mut report = Vec::new();
    if n_v == 0 {
        report.push(Violation::NoVertices);
    }
    if edges.is_empty() {
        report.push(Violation::NoEdges);
    }
    for (j, e) in edges.iter().enumerate() {
        let edge = j + 1;
        if e.weight == 0 {
            report.push(Violation::ZeroWeight { edge });
        }
        if e.vertices.is_empty() {
            report.push(Violation::EmptyEdge { edge });
        }
        let mut seen = BTreeSet::new();
        for &v in &e.vertices {
            if v == 0 || v > n_v {
                report.push(Violation::VertexOutOfRange { edge, vertex: v });
            } else if !seen.insert(v) {
                report.push(Violation::DuplicateVertex { edge, vertex: v });
            }
        }
    }
    report
}

impl Hypergraph {
    /// Builds a validated hypergraph.
    pub fn new(n_v: usize, edges: Vec<Hyperedge>) -> Result<Self> {
        let report = validate_hypergraph(n_v, &edges);
        if !report.is_empty() {
            let msg: Vec<String> = report.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidHypergraph(msg.join("; ")));
        }
        Ok(Self { n_v, edges })
    }

    /// Convenience constructor from `(weight, vertices)` pairs.
    pub fn from_edges(n_v: usize, edges: &[(u64, &[usize])]) -> Result<Self> {
        Self::new(
            n_v,
            edges
                .iter()
                .map(|(w, vs)| Hyperedge {
                    weight: *w,
                    vertices: vs.to_vec(),
                })
                .collect(),
        )
    }

    /// Parses the JSON text format and validates it.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawHypergraph =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(raw.num_vertices, raw.edges)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hypergraph serializes")
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn n_e(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }

    pub fn max_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).max().unwrap_or(1)
    }

    /// The smallest admissible row count, `max(n_v, n_e) + 1`.
    pub fn min_rows(&self) -> usize {
        self.n_v.max(self.n_e()) + 1
    }

    pub fn contains(&self, edge: usize, vertex: usize) -> bool {
        self.edges[edge - 1].vertices.contains(&vertex)
    }
}

/// The `n_v x n_e` weighted incidence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix(Matrix);

impl IncidenceMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn n_v(&self) -> usize {
        self.0.rows()
    }

    pub fn n_e(&self) -> usize {
        self.0.cols()
    }
}

/// `A[i][j] = w(e_j)` when vertex `i` belongs to `e_j`, else 0.
pub fn build_incidence(h: &Hypergraph) -> IncidenceMatrix {
    let mut a = Matrix::zeros(h.n_v(), h.n_e());
    for (j, e) in h.edges().iter().enumerate() {
        for &v in &e.vertices {
            a[(v - 1, j)] = e.weight as f64;
        }
    }
    IncidenceMatrix(a)
}

/// The `K x K` padded incidence matrix: zero first row and column, `A` in the
/// block at rows `1..=n_v`, columns `1..=n_e`, zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedIncidence {
    m: Matrix,
    // nonzeros per row of A~ and of A~^T, in increasing column order
    rows_nz: Vec<Vec<(usize, f64)>>,
    cols_nz: Vec<Vec<(usize, f64)>>,
}

impl PaddedIncidence {
    fn wrap(m: Matrix) -> Self {
        let k = m.rows();
        let mut rows_nz = vec![Vec::new(); k];
        let mut cols_nz = vec![Vec::new(); k];
        for (i, j, v) in m.nonzeros() {
            rows_nz[i].push((j, v));
            cols_nz[j].push((i, v));
        }
        Self {
            m,
            rows_nz,
            cols_nz,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn k(&self) -> usize {
        self.m.rows()
    }

    /// Nonzeros of row `i` of `A~` (`transpose = false`) or of `A~^T`.
    pub fn row_nonzeros(&self, i: usize, transpose: bool) -> &[(usize, f64)] {
        if transpose {
            &self.cols_nz[i]
        } else {
            &self.rows_nz[i]
        }
    }

    /// Wraps an arbitrary square matrix; used by tests and the kernel's
    /// dimension checks.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Dimension(format!(
                "padded incidence must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(Self::wrap(m))
    }
}

/// Pads `A` to `k x k`. Covers the `n_e > n_v`, `n_e < n_v` and `n_e = n_v`
/// cases uniformly: trailing rows/columns beyond the block are zero.
pub fn pad_incidence(a: &IncidenceMatrix, k: usize) -> Result<PaddedIncidence> {
    let required = a.n_v().max(a.n_e()) + 1;
    if k < required {
        return Err(Error::LayoutTooSmall { k, required });
    }
    let mut p = Matrix::zeros(k, k);
    for i in 0..a.n_v() {
        for j in 0..a.n_e() {
            p[(i + 1, j + 1)] = a.matrix()[(i, j)];
        }
    }
    Ok(PaddedIncidence::wrap(p))
}
