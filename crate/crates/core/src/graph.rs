//! Token graphs and their normalized Laplacians.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;

/// A graph over token positions `0..n`.
///
/// Edges are ordered `(src, dst)` pairs. Self-loops are dropped and
/// duplicates collapse to their first occurrence when the graph is built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<String>>,
}

impl TokenGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>, labels: Option<Vec<String>>) -> Result<Self> {
        if n == 0 {
            return invalid("a token graph needs at least one node");
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return invalid(format!("{} labels for {n} nodes", labels.len()));
            }
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut kept = Vec::with_capacity(edges.len());
        for (s, d) in edges {
            if s >= n || d >= n {
                return invalid(format!("edge ({s}, {d}) out of range for n = {n}"));
            }
            if s != d && seen.insert((s, d)) {
                kept.push((s, d));
            }
        }
        Ok(Self { n, edges: kept, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn is_symmetric(&self) -> bool {
        let set: HashSet<_> = self.edges.iter().copied().collect();
        self.edges.iter().all(|&(s, d)| set.contains(&(d, s)))
    }

    /// Undirected structure as `(n, sorted edge list)`; equal keys mean equal
    /// Laplacians.
    pub fn structure_key(&self) -> (usize, Vec<(usize, usize)>) {
        let mut e: Vec<_> = self.edges.iter().flat_map(|&(s, d)| [(s, d), (d, s)]).collect();
        e.sort_unstable();
        e.dedup();
        (self.n, e)
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return invalid("permutation length must equal n");
        }
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check.iter().enumerate().any(|(i, &p)| i != p) {
            return invalid("not a permutation");
        }
        let edges = self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        let labels = self.labels.as_ref().map(|l| {
            let mut out = vec![String::new(); self.n];
            for (i, lab) in l.iter().enumerate() {
                out[perm[i]] = lab.clone();
            }
            out
        });
        Self::new(self.n, edges, labels)
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            n: self.n,
            edges: self.edges.iter().map(|&(s, d)| [s, d]).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn from_json(json: GraphJson) -> Result<Self> {
        let edges = json.edges.into_iter().map(|[s, d]| (s, d)).collect();
        Self::new(json.n, edges, json.labels)
    }
}

/// Wire form of a graph: `{"n": 3, "edges": [[0,1],[1,2]], "labels": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// Path graph `0 → 1 → … → n-1`.
pub fn build_chain_graph(n: usize) -> Result<TokenGraph> {
    if n == 0 {
        return invalid("chain graph needs n >= 1");
    }
    TokenGraph::new(n, (0..n - 1).map(|i| (i, i + 1)).collect(), None)
}

/// Erdős–Rényi style directed graph: each ordered pair `(s, d)`, `s != d`,
/// is an edge with probability `edge_prob`. Deterministic per seed.
pub fn random_graph(n: usize, edge_prob: f64, seed: u64) -> Result<TokenGraph> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return invalid("edge probability must lie in [0, 1]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.gen_bool(edge_prob) {
                edges.push((s, d));
            }
        }
    }
    TokenGraph::new(n, edges, None)
}

/// Closes the edge set under reversal. Missing reverse edges are appended in
/// the order their forward edge appears.
pub fn symmetrize(g: &TokenGraph) -> TokenGraph {
    let mut set: HashSet<(usize, usize)> = g.edges.iter().copied().collect();
    let mut edges = g.edges.clone();
    for &(s, d) in &g.edges {
        if set.insert((d, s)) {
            edges.push((d, s));
        }
    }
    TokenGraph {
        n: g.n,
        edges,
        labels: g.labels.clone(),
    }
}

/// `L = I - D^{-1/2} A D^{-1/2}` of an undirected token graph.
///
/// Isolated nodes get a zero row and column. The dense matrix is kept for
/// the spectral path; the nonzero pattern is also kept in CSR form so the
/// polynomial path can apply `L` in `O(|E| d)`.
#[derive(Debug, Clone)]
pub struct NormalizedLaplacian {
    matrix: DenseMatrix,
    degrees: Vec<f64>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedLaplacian {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Sparse product `L · x`.
    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(x.rows(), self.n(), "laplacian apply shape mismatch");
        let mut out = DenseMatrix::zeros(x.rows(), x.cols());
        self.apply_into(x, &mut out);
        out
    }

    /// `out = L · x` without allocating.
    pub(crate) fn apply_into(&self, x: &DenseMatrix, out: &mut DenseMatrix) {
        for i in 0..self.n() {
            let row = out.row_mut(i);
            row.fill(0.0);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.values[p];
                for (o, v) in row.iter_mut().zip(x.row(self.col_idx[p])) {
                    *o += w * v;
                }
            }
        }
    }
}

pub fn normalized_laplacian(g: &TokenGraph) -> Result<NormalizedLaplacian> {
    if !g.is_symmetric() {
        return invalid("normalized_laplacian needs a symmetric edge set; call symmetrize first");
    }
    let n = g.n;
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(s, d) in &g.edges {
        neighbors[s].push(d);
    }
    let degrees: Vec<f64> = neighbors.iter().map(|nb| nb.len() as f64).collect();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();

    let mut matrix = DenseMatrix::zeros(n, n);
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for i in 0..n {
        let mut entries: Vec<(usize, f64)> = neighbors[i].iter().map(|&j| (j, -inv_sqrt[i] * inv_sqrt[j])).collect();
        if degrees[i] > 0.0 {
            entries.push((i, 1.0));
        }
        entries.sort_unstable_by_key(|e| e.0);
        for (j, v) in entries {
            matrix.set(i, j, v);
            col_idx.push(j);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(NormalizedLaplacian {
        matrix,
        degrees,
        row_ptr,
        col_idx,
        values,
    })
}
