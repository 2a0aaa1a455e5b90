//! Random geometric graphs, Metropolis-Hastings mixing weights, and numerical
//! checks of the consensus-matrix properties the diffusion stage relies on.
//!
//! The simulator only ever applies `G` row-wise ([`MixingMatrix::combine`]).
//! Explicit Kronecker products `G ⊗ I_{rQ}` are formed in
//! [`validate_consensus`] when `J·rQ` is small enough; larger instances use
//! the Kronecker identities instead.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::kernels::GramMatrix;

/// Resampling budget for [`Graph::random_geometric`].
pub const MAX_CONNECT_ATTEMPTS: usize = 1000;

/// Tolerance for a singular value to count as equal to one.
pub const UNIT_SINGULAR_TOL: f64 = 1e-8;

/// Above this size `validate_consensus` stops materializing `G ⊗ I`.
pub const EXPLICIT_KRONECKER_LIMIT: usize = 600;

/// Undirected graph over nodes in the unit square. Every node is its own
/// neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    positions: Vec<[f64; 2]>,
    radius: f64,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Connects every pair of nodes closer than `radius`.
    pub fn from_positions(positions: Vec<[f64; 2]>, radius: f64) -> Self {
        let n = positions.len();
        let mut neighbors = vec![Vec::new(); n];
        for (j, nb) in neighbors.iter_mut().enumerate() {
            for i in 0..n {
                let dx = positions[j][0] - positions[i][0];
                let dy = positions[j][1] - positions[i][1];
                if i == j || (dx * dx + dy * dy).sqrt() < radius {
                    nb.push(i);
                }
            }
        }
        Self {
            positions,
            radius,
            neighbors,
        }
    }

    /// Uniform placement on `[0,1]²`, resampled until connected.
    pub fn random_geometric<R: Rng + ?Sized>(
        nodes: usize,
        radius: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::InvalidParameter(format!(
                "a network needs at least 2 nodes, got {nodes}"
            )));
        }
        if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
            return Err(Error::InvalidParameter(format!(
                "connection radius must lie in (0, √2], got {radius}"
            )));
        }
        for _ in 0..MAX_CONNECT_ATTEMPTS {
            let positions = (0..nodes)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let graph = Self::from_positions(positions, radius);
            if graph.is_connected() {
                return Ok(graph);
            }
        }
        Err(Error::NotConnected {
            nodes,
            radius,
            attempts: MAX_CONNECT_ATTEMPTS,
        })
    }

    pub fn nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// `N_j`, sorted, including `j`.
    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }

    /// `δ_j = |N_j|` (the self-loop counts).
    pub fn degree(&self, j: usize) -> usize {
        self.neighbors[j].len()
    }

    pub fn is_adjacent(&self, j: usize, i: usize) -> bool {
        self.neighbors[j].binary_search(&i).is_ok()
    }

    /// Undirected edges `(j, i)` with `j < i`; self-loops excluded.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(j, nb)| nb.iter().filter(move |&&i| i > j).map(move |&i| (j, i)))
    }

    /// `|E|` counted without self-loops.
    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.nodes();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(j) = queue.pop_front() {
            for &i in &self.neighbors[j] {
                if !seen[i] {
                    seen[i] = true;
                    count += 1;
                    queue.push_back(i);
                }
            }
        }
        count == n
    }

    /// `node,x1,x2` with header.
    pub fn write_positions_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "node,x1,x2")?;
        for (j, p) in self.positions.iter().enumerate() {
            writeln!(out, "{j},{},{}", p[0], p[1])?;
        }
        Ok(())
    }

    /// `source,target` with header, one line per undirected edge.
    pub fn write_edges_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "source,target")?;
        for (j, i) in self.edges() {
            writeln!(out, "{j},{i}")?;
        }
        Ok(())
    }
}

/// Symmetric combine weights `G`, stored densely and as sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    dense: DMatrix<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    pub fn from_dense(dense: DMatrix<f64>) -> Result<Self> {
        check_len(dense.nrows(), dense.ncols())?;
        let rows = (0..dense.nrows())
            .map(|j| {
                (0..dense.ncols())
                    .filter(|&i| dense[(j, i)] != 0.0)
                    .map(|i| (i, dense[(j, i)]))
                    .collect()
            })
            .collect();
        Ok(Self { dense, rows })
    }

    /// No mixing: every node keeps its own vector.
    pub fn identity(nodes: usize) -> Self {
        Self::from_dense(DMatrix::identity(nodes, nodes)).expect("square")
    }

    /// `g_ji = 1/max{δ_j, δ_i}` on edges, `1 - Σ` on the diagonal.
    pub fn metropolis_hastings(graph: &Graph) -> Self {
        let n = graph.nodes();
        let mut dense = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut off = 0.0;
            for &i in graph.neighbors(j) {
                if i != j {
                    let g = 1.0 / graph.degree(j).max(graph.degree(i)) as f64;
                    dense[(j, i)] = g;
                    off += g;
                }
            }
            dense[(j, j)] = 1.0 - off;
        }
        Self::from_dense(dense).expect("square")
    }

    pub fn nodes(&self) -> usize {
        self.dense.nrows()
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// Nonzero `(i, g_ji)` pairs of row `j` in increasing `i`.
    pub fn row(&self, j: usize) -> &[(usize, f64)] {
        &self.rows[j]
    }

    /// Diffusion: `w_j = Σ_i g_ji w'_i` for every node.
    pub fn combine(&self, intermediates: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        check_len(self.nodes(), intermediates.len())?;
        let dim = intermediates.first().map_or(0, |v| v.len());
        for v in intermediates {
            check_len(dim, v.len())?;
        }
        Ok(self
            .rows
            .iter()
            .map(|row| {
                let mut acc = DVector::zeros(dim);
                for &(i, g) in row {
                    acc.axpy(g, &intermediates[i], 1.0);
                }
                acc
            })
            .collect())
    }

    /// True when every nonzero off-diagonal weight sits on a graph edge.
    pub fn is_compatible_with(&self, graph: &Graph) -> bool {
        self.nodes() == graph.nodes()
            && self
                .rows
                .iter()
                .enumerate()
                .all(|(j, row)| row.iter().all(|&(i, _)| graph.is_adjacent(j, i)))
    }

    /// `max_j |Σ_i g_ji - 1|`.
    pub fn row_sum_deviation(&self) -> f64 {
        self.dense
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn symmetry_deviation(&self) -> f64 {
        (&self.dense - self.dense.transpose()).amax()
    }

    /// `‖G - (1/J)·11ᵀ‖₂`.
    pub fn contraction_norm(&self) -> f64 {
        let n = self.nodes();
        let centered = &self.dense - DMatrix::from_element(n, n, 1.0 / n as f64);
        centered.singular_values().max()
    }
}

/// Numerical audit of a mixing matrix against the consensus-matrix
/// definition and the K-metric equivalence of the modified consensus matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusReport {
    pub row_sum_deviation: f64,
    pub symmetry_deviation: f64,
    pub contraction_norm: f64,
    /// Singular values of `G ⊗ I_{rQ}` within [`UNIT_SINGULAR_TOL`] of one.
    pub unit_singular_values: usize,
    /// The count the definition requires, `rQ`.
    pub expected_unit_singular_values: usize,
    /// Largest singular value not counted as one (0 when there is none).
    pub max_subunit_singular_value: f64,
    /// `‖𝒦^{-1/2}(G ⊗ I)𝒦^{1/2} - G ⊗ I‖_max` with `𝒦 = I_J ⊗ (K + γI)`.
    pub similarity_deviation: f64,
    /// Whether the Kronecker products were materialized.
    pub explicit: bool,
}

impl ConsensusReport {
    pub fn is_contraction(&self) -> bool {
        self.contraction_norm < 1.0
    }

    pub fn spectrum_ok(&self) -> bool {
        self.unit_singular_values == self.expected_unit_singular_values
            && self.max_subunit_singular_value < 1.0 - UNIT_SINGULAR_TOL
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "row_sum_deviation={}\nsymmetry_deviation={}\ncontraction_norm={}\ncontraction_ok={}\n\
             unit_singular_values={}\nexpected_unit_singular_values={}\n\
             max_subunit_singular_value={}\nspectrum_ok={}\nsimilarity_deviation={}\nexplicit={}\n",
            self.row_sum_deviation,
            self.symmetry_deviation,
            self.contraction_norm,
            self.is_contraction(),
            self.unit_singular_values,
            self.expected_unit_singular_values,
            self.max_subunit_singular_value,
            self.spectrum_ok(),
            self.similarity_deviation,
            self.explicit,
        )
    }
}

/// Symmetric square root and inverse square root of an SPD matrix.
pub fn symmetric_sqrt_pair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter(
            "matrix is not positive definite".into(),
        ));
    }
    let v = &eig.eigenvectors;
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok((v * sqrt * v.transpose(), v * inv_sqrt * v.transpose()))
}

pub fn validate_consensus(g: &MixingMatrix, gram: &GramMatrix) -> Result<ConsensusReport> {
    let nodes = g.nodes();
    let dim = gram.dim();
    let (k_half, k_neg_half) = symmetric_sqrt_pair(&gram.metric())?;
    let explicit = nodes * dim <= EXPLICIT_KRONECKER_LIMIT;

    let (singular, similarity_deviation) = if explicit {
        let eye_j = DMatrix::<f64>::identity(nodes, nodes);
        let p = g.dense().kronecker(&DMatrix::<f64>::identity(dim, dim));
        let big_half = eye_j.kronecker(&k_half);
        let big_neg_half = eye_j.kronecker(&k_neg_half);
        let p_hat = big_neg_half * &p * big_half;
        let dev = (p_hat - &p).amax();
        (p.singular_values().as_slice().to_vec(), dev)
    } else {
        // σ(G ⊗ I) is σ(G) repeated rQ times; block (j,i) of P̂ is K^{-1/2}(g_ji I)K^{1/2}.
        let sv_g = g.dense().singular_values();
        let singular = sv_g
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, dim))
            .collect();
        let mut dev: f64 = 0.0;
        let eye = DMatrix::<f64>::identity(dim, dim);
        for j in 0..nodes {
            for i in 0..nodes {
                let gji = g.dense()[(j, i)];
                let block = &k_neg_half * (&eye * gji) * &k_half;
                dev = dev.max((block - &eye * gji).amax());
            }
        }
        (singular, dev)
    };

    let unit = singular
        .iter()
        .filter(|&&s| (s - 1.0).abs() <= UNIT_SINGULAR_TOL)
        .count();
    let max_sub = singular
        .iter()
        .copied()
        .filter(|&s| (s - 1.0).abs() > UNIT_SINGULAR_TOL)
        .fold(0.0, f64::max);

    Ok(ConsensusReport {
        row_sum_deviation: g.row_sum_deviation(),
        symmetry_deviation: g.symmetry_deviation(),
        contraction_norm: g.contraction_norm(),
        unit_singular_values: unit,
        expected_unit_singular_values: dim,
        max_subunit_singular_value: max_sub,
        similarity_deviation,
        explicit,
    })
}

/// Stacks per-node vectors into `z = [w_1ᵀ, …, w_Jᵀ]ᵀ`.
pub fn stack(states: &[DVector<f64>]) -> DVector<f64> {
    let parts: Vec<f64> = states.iter().flat_map(|w| w.iter().copied()).collect();
    DVector::from_vec(parts)
}

/// `‖(I - BBᵀ)z‖₂`, computed as the distance of each node's block from the
/// network average.
pub fn disagreement(z: &DVector<f64>, nodes: usize) -> Result<f64> {
    if nodes == 0 || !z.len().is_multiple_of(nodes) {
        return Err(Error::DimensionMismatch {
            expected: nodes.max(1) * (z.len() / nodes.max(1)).max(1),
            found: z.len(),
        });
    }
    let dim = z.len() / nodes;
    let mut mean = DVector::zeros(dim);
    for j in 0..nodes {
        mean += z.rows(j * dim, dim);
    }
    mean /= nodes as f64;
    let mut acc = 0.0;
    for j in 0..nodes {
        acc += (z.rows(j * dim, dim) - &mean).norm_squared();
    }
    Ok(acc.sqrt())
}

/// Consensus basis `B = [b_1 … b_n]` with `b_n = (1_J ⊗ e_n)/√J`.
pub fn consensus_basis(nodes: usize, dim: usize) -> DMatrix<f64> {
    let ones = DMatrix::from_element(nodes, 1, 1.0 / (nodes as f64).sqrt());
    ones.kronecker(&DMatrix::<f64>::identity(dim, dim))
}

/// Same quantity as [`disagreement`], via the explicit projector `I - BBᵀ`.
pub fn disagreement_explicit(z: &DVector<f64>, nodes: usize) -> Result<f64> {
    if nodes == 0 || !z.len().is_multiple_of(nodes) {
        return Err(Error::DimensionMismatch {
            expected: nodes.max(1),
            found: z.len(),
        });
    }
    let b = consensus_basis(nodes, z.len() / nodes);
    let n = z.len();
    let proj = DMatrix::<f64>::identity(n, n) - &b * b.transpose();
    Ok((proj * z).norm())
}
