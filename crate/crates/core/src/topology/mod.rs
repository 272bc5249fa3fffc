//! Gossip matrices for decentralized averaging.
//!
//! A [`GossipMatrix`] is a symmetric, doubly stochastic `m × m` matrix whose
//! entry `(k, l)` is the weight worker `k` puts on the model of worker `l`
//! during one communication round. The builders here use uniform weights
//! over closed neighborhoods: every node keeps a self-loop, and each of its
//! `deg + 1` closed-neighborhood entries gets weight `1 / (deg + 1)`. All the
//! built topologies are regular, so this is symmetric and doubly stochastic.

mod spectrum;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use spectrum::{
    analytic_gap_order, eigenvalues_symmetric, mixing_error, mixing_errors, spectral_gap,
    symmetric_eigenvalues, SpectrumReport, JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE,
};

/// Tolerance on row/column sums and symmetry for built matrices.
pub const BUILD_TOLERANCE: f64 = 1e-12;
/// Tolerance on row/column sums and symmetry for matrices read from disk.
pub const LOAD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    FullyConnected,
    Ring,
    /// Two-dimensional torus (wrap-around grid); `m` must be a perfect square.
    #[serde(rename = "grid")]
    Grid2dTorus,
    /// Node `i` linked to `i ± 2^j mod m` for `j < log2 m`; `m` a power of two.
    #[serde(rename = "exponential")]
    StaticExponential,
    Disconnected,
    /// Matrix read from a CSV file.
    Custom(PathBuf),
}

impl TopologyKind {
    /// The four connected built-in topologies, best-connected first.
    pub const CONNECTED: [TopologyKind; 4] = [
        TopologyKind::FullyConnected,
        TopologyKind::StaticExponential,
        TopologyKind::Grid2dTorus,
        TopologyKind::Ring,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TopologyKind::FullyConnected => "fully-connected",
            TopologyKind::Ring => "ring",
            TopologyKind::Grid2dTorus => "grid",
            TopologyKind::StaticExponential => "exponential",
            TopologyKind::Disconnected => "disconnected",
            TopologyKind::Custom(_) => "custom",
        }
    }

    /// Parses the names produced by [`TopologyKind::name`]; `custom` needs a path
    /// and is not accepted here.
    pub fn from_name(name: &str) -> Option<TopologyKind> {
        match name {
            "fully-connected" => Some(TopologyKind::FullyConnected),
            "ring" => Some(TopologyKind::Ring),
            "grid" => Some(TopologyKind::Grid2dTorus),
            "exponential" => Some(TopologyKind::StaticExponential),
            "disconnected" => Some(TopologyKind::Disconnected),
            _ => None,
        }
    }

    /// Checks the structural constraint the topology places on `m`.
    pub fn check_size(&self, m: usize) -> Result<()> {
        let fail = |what: &str| {
            Err(Error::invalid(format!(
                "topology {} requires {what}, got m = {m}",
                self.name()
            )))
        };
        match self {
            TopologyKind::Disconnected => {
                if m < 1 {
                    return fail("m >= 1");
                }
            }
            TopologyKind::Grid2dTorus => {
                if m < 2 || perfect_square_root(m).is_none() {
                    return fail("m to be a perfect square (m >= 4)");
                }
            }
            TopologyKind::StaticExponential => {
                if m < 2 || !m.is_power_of_two() {
                    return fail("m to be a power of two (m >= 2)");
                }
            }
            TopologyKind::FullyConnected | TopologyKind::Ring | TopologyKind::Custom(_) => {
                if m < 2 {
                    return fail("m >= 2");
                }
            }
        }
        Ok(())
    }

    /// Closed neighborhoods (self included) of every node, or `None` for
    /// [`TopologyKind::Custom`].
    fn neighborhoods(&self, m: usize) -> Option<Vec<BTreeSet<usize>>> {
        let mut sets: Vec<BTreeSet<usize>> = (0..m).map(|i| BTreeSet::from([i])).collect();
        match self {
            TopologyKind::FullyConnected => {
                for set in &mut sets {
                    set.extend(0..m);
                }
            }
            TopologyKind::Ring => {
                for (i, set) in sets.iter_mut().enumerate() {
                    set.insert((i + 1) % m);
                    set.insert((i + m - 1) % m);
                }
            }
            TopologyKind::Grid2dTorus => {
                let side = perfect_square_root(m)?;
                for (i, set) in sets.iter_mut().enumerate() {
                    let (r, c) = (i / side, i % side);
                    set.insert(((r + 1) % side) * side + c);
                    set.insert(((r + side - 1) % side) * side + c);
                    set.insert(r * side + (c + 1) % side);
                    set.insert(r * side + (c + side - 1) % side);
                }
            }
            TopologyKind::StaticExponential => {
                let levels = m.trailing_zeros();
                for (i, set) in sets.iter_mut().enumerate() {
                    for j in 0..levels {
                        let hop = 1usize << j;
                        set.insert((i + hop) % m);
                        set.insert((i + m - hop) % m);
                    }
                }
            }
            TopologyKind::Disconnected => {}
            TopologyKind::Custom(_) => return None,
        }
        Some(sets)
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyKind::Custom(path) => write!(f, "custom({})", path.display()),
            other => f.write_str(other.name()),
        }
    }
}

fn perfect_square_root(m: usize) -> Option<usize> {
    let r = (m as f64).sqrt().round() as usize;
    (r * r == m).then_some(r)
}

/// Symmetric doubly stochastic mixing matrix.
///
/// Stored densely (row-major) for spectral work and as per-row sparse lists
/// for the mixing product used in every D-SGD step.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipMatrix {
    m: usize,
    entries: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    kind: TopologyKind,
}

impl GossipMatrix {
    /// Validates `entries` (row-major, `m × m`) against every invariant at
    /// tolerance `tol`.
    pub fn from_entries(m: usize, entries: Vec<f64>, kind: TopologyKind, tol: f64) -> Result<Self> {
        validate_entries(m, &entries, tol)?;
        let rows = (0..m)
            .map(|k| {
                (0..m)
                    .filter_map(|l| {
                        let v = entries[k * m + l];
                        (v != 0.0).then_some((l, v))
                    })
                    .collect()
            })
            .collect();
        Ok(GossipMatrix {
            m,
            entries,
            rows,
            kind,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &TopologyKind {
        &self.kind
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.entries[k * self.m + l]
    }

    /// Row-major dense entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Nonzero `(column, weight)` pairs of row `k`.
    pub fn row(&self, k: usize) -> &[(usize, f64)] {
        &self.rows[k]
    }

    pub fn is_identity(&self) -> bool {
        (0..self.m).all(|k| (0..self.m).all(|l| self.get(k, l) == if k == l { 1.0 } else { 0.0 }))
    }

    /// `out = P · input` for row-major `m × d` buffers.
    pub fn mix_into(&self, input: &[f64], d: usize, out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.m * d);
        debug_assert_eq!(out.len(), self.m * d);
        for (k, row) in self.rows.iter().enumerate() {
            let dst = &mut out[k * d..(k + 1) * d];
            dst.fill(0.0);
            for &(l, weight) in row {
                let src = &input[l * d..(l + 1) * d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += weight * s;
                }
            }
        }
    }
}

fn validate_entries(m: usize, entries: &[f64], tol: f64) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidMatrix(msg));
    if m == 0 {
        return bad("matrix is empty".into());
    }
    if entries.len() != m * m {
        return bad(format!(
            "not square: {} entries for {m} rows",
            entries.len()
        ));
    }
    let position = |i: usize| (i / m, i % m);
    if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
        let (k, l) = position(i);
        return bad(format!("non-finite entry at ({k},{l})"));
    }
    if let Some(i) = entries.iter().position(|&v| v < 0.0) {
        let (k, l) = position(i);
        return bad(format!("negative entry {} at ({k},{l})", entries[i]));
    }
    if let Some(i) = entries.iter().position(|&v| v > 1.0 + tol) {
        let (k, l) = position(i);
        return bad(format!("entry {} at ({k},{l}) exceeds 1", entries[i]));
    }
    for k in 0..m {
        for l in (k + 1)..m {
            let (a, b) = (entries[k * m + l], entries[l * m + k]);
            if (a - b).abs() > tol {
                return bad(format!(
                    "asymmetric: entry ({k},{l}) = {a} but ({l},{k}) = {b}"
                ));
            }
        }
    }
    for k in 0..m {
        let row: f64 = entries[k * m..(k + 1) * m].iter().sum();
        if (row - 1.0).abs() > tol {
            return bad(format!("row {k} sums to {row}, not 1"));
        }
    }
    for l in 0..m {
        let col: f64 = (0..m).map(|k| entries[k * m + l]).sum();
        if (col - 1.0).abs() > tol {
            return bad(format!("column {l} sums to {col}, not 1"));
        }
    }
    Ok(())
}

/// Builds the gossip matrix of `kind` on `m` workers.
///
/// [`TopologyKind::Custom`] reads the matrix from its path and checks that it
/// has `m` rows.
pub fn build_gossip_matrix(kind: &TopologyKind, m: usize) -> Result<GossipMatrix> {
    kind.check_size(m)?;
    let Some(sets) = kind.neighborhoods(m) else {
        let TopologyKind::Custom(path) = kind else {
            unreachable!("only custom topologies lack neighborhoods")
        };
        let matrix = load_gossip_matrix(path)?;
        if matrix.m() != m {
            return Err(Error::DimensionMismatch {
                context: "custom gossip matrix",
                expected: m,
                actual: matrix.m(),
            });
        }
        return Ok(matrix);
    };
    let mut entries = vec![0.0; m * m];
    for (k, set) in sets.iter().enumerate() {
        let weight = 1.0 / set.len() as f64;
        for &l in set {
            entries[k * m + l] = weight;
        }
    }
    GossipMatrix::from_entries(m, entries, kind.clone(), BUILD_TOLERANCE)
}

/// Reads an `m × m` matrix from a header-less CSV file and validates it.
pub fn load_gossip_matrix(path: &Path) -> Result<GossipMatrix> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => csv_err(e.to_string()),
        })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field
                    .parse::<f64>()
                    .map_err(|_| csv_err(format!("row {r}, column {c}: '{field}' is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let m = rows.len();
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != m) {
        return Err(Error::InvalidMatrix(format!(
            "not square: {m} rows but row {r} has {} columns",
            row.len()
        )));
    }
    let entries = rows.into_iter().flatten().collect();
    GossipMatrix::from_entries(
        m,
        entries,
        TopologyKind::Custom(path.to_path_buf()),
        LOAD_TOLERANCE,
    )
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn assert_invariants(p: &GossipMatrix) {
        let m = p.m();
        for k in 0..m {
            let row: f64 = (0..m).map(|l| p.get(k, l)).sum();
            let col: f64 = (0..m).map(|l| p.get(l, k)).sum();
            assert!((row - 1.0).abs() <= 1e-12, "row {k} of {}", p.kind());
            assert!((col - 1.0).abs() <= 1e-12, "col {k} of {}", p.kind());
            for l in 0..m {
                assert_eq!(p.get(k, l), p.get(l, k));
                assert!((0.0..=1.0).contains(&p.get(k, l)));
            }
        }
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(contents.as_bytes()).unwrap();
        file
    }

    #[test]
    fn fully_connected_is_uniform_averaging() {
        let p = build_gossip_matrix(&TopologyKind::FullyConnected, 4).unwrap();
        assert!(p.entries().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn disconnected_is_identity() {
        let p = build_gossip_matrix(&TopologyKind::Disconnected, 3).unwrap();
        assert!(p.is_identity());
        assert!(build_gossip_matrix(&TopologyKind::Disconnected, 1).is_ok());
    }

    #[test]
    fn ring_of_four_is_circulant() {
        let p = build_gossip_matrix(&TopologyKind::Ring, 4).unwrap();
        let third = 1.0 / 3.0;
        let first = [third, third, 0.0, third];
        for k in 0..4 {
            for l in 0..4 {
                assert_eq!(p.get(k, l), first[(l + 4 - k) % 4]);
            }
        }
        assert_invariants(&p);
    }

    #[test]
    fn sparsity_matches_topology() {
        // 4x4 torus: each node has four distinct neighbors.
        let grid = build_gossip_matrix(&TopologyKind::Grid2dTorus, 16).unwrap();
        for k in 0..16 {
            assert_eq!(grid.row(k).len(), 5);
            assert!(grid.row(k).iter().all(|&(_, w)| w == 0.2));
        }
        assert!(grid.get(0, 1) > 0.0 && grid.get(0, 4) > 0.0 && grid.get(0, 3) > 0.0);
        assert_eq!(grid.get(0, 5), 0.0);
        // m = 16 exponential: hops 1, 2, 4 both ways and 8 once.
        let exp = build_gossip_matrix(&TopologyKind::StaticExponential, 16).unwrap();
        let neighbors: Vec<usize> = exp.row(0).iter().map(|&(l, _)| l).collect();
        assert_eq!(neighbors, vec![0, 1, 2, 4, 8, 12, 14, 15]);
    }

    #[test]
    fn every_builder_satisfies_invariants() {
        for m in [4usize, 9, 16, 64] {
            for kind in [
                TopologyKind::FullyConnected,
                TopologyKind::Ring,
                TopologyKind::Grid2dTorus,
                TopologyKind::StaticExponential,
                TopologyKind::Disconnected,
            ] {
                if kind.check_size(m).is_ok() {
                    assert_invariants(&build_gossip_matrix(&kind, m).unwrap());
                }
            }
        }
        // small degenerate sizes where neighbor sets collapse
        assert_invariants(&build_gossip_matrix(&TopologyKind::Ring, 2).unwrap());
        assert_invariants(&build_gossip_matrix(&TopologyKind::Grid2dTorus, 4).unwrap());
        assert_invariants(&build_gossip_matrix(&TopologyKind::StaticExponential, 2).unwrap());
    }

    #[test]
    fn structural_constraints_are_named() {
        let err = build_gossip_matrix(&TopologyKind::Grid2dTorus, 10).unwrap_err();
        assert!(err.to_string().contains("perfect square"), "{err}");
        let err = build_gossip_matrix(&TopologyKind::StaticExponential, 12).unwrap_err();
        assert!(err.to_string().contains("power of two"), "{err}");
        assert!(build_gossip_matrix(&TopologyKind::Ring, 1).is_err());
        assert!(build_gossip_matrix(&TopologyKind::Disconnected, 0).is_err());
    }

    #[test]
    fn loads_valid_csv() {
        let file = write_csv("1,0\n0,1\n");
        let p = load_gossip_matrix(file.path()).unwrap();
        assert!(p.is_identity());
        assert!(matches!(p.kind(), TopologyKind::Custom(_)));

        let file = write_csv("0.5, 0.5\n0.5, 0.5\n");
        assert_eq!(load_gossip_matrix(file.path()).unwrap().get(0, 1), 0.5);
    }

    #[test]
    fn rejects_invalid_csv_with_first_violation() {
        let err = load_gossip_matrix(write_csv("0.9,0.2\n0.1,0.8\n").path()).unwrap_err();
        assert!(err.to_string().contains("asymmetric"), "{err}");

        let err = load_gossip_matrix(write_csv("0.5,0.5\n0.5,0.5\n0.5,0.5\n").path()).unwrap_err();
        assert!(err.to_string().contains("not square"), "{err}");

        let err = load_gossip_matrix(write_csv("1.5,-0.5\n-0.5,1.5\n").path()).unwrap_err();
        assert!(err.to_string().contains("negative"), "{err}");

        let err = load_gossip_matrix(write_csv("0.6,0.5\n0.5,0.6\n").path()).unwrap_err();
        assert!(err.to_string().contains("row 0 sums"), "{err}");

        let err = load_gossip_matrix(write_csv("0.5,x\n0.5,0.5\n").path()).unwrap_err();
        assert!(err.to_string().contains("not a number"), "{err}");

        assert!(matches!(
            load_gossip_matrix(Path::new("/nonexistent/p.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn custom_kind_checks_worker_count() {
        let file = write_csv("0.5,0.5\n0.5,0.5\n");
        let kind = TopologyKind::Custom(file.path().to_path_buf());
        assert_eq!(build_gossip_matrix(&kind, 2).unwrap().m(), 2);
        assert!(matches!(
            build_gossip_matrix(&kind, 3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mixing_matches_dense_product() {
        let p = build_gossip_matrix(&TopologyKind::Ring, 5).unwrap();
        let d = 3;
        let input: Vec<f64> = (0..15).map(|i| (i as f64).sin()).collect();
        let mut out = vec![0.0; 15];
        p.mix_into(&input, d, &mut out);
        for k in 0..5 {
            for j in 0..d {
                let dense: f64 = (0..5).map(|l| p.get(k, l) * input[l * d + j]).sum();
                assert!((out[k * d + j] - dense).abs() < 1e-15);
            }
        }
    }
}
