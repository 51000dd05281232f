//! Rectangular areal lattice with 8-neighbour (queen) contiguity.
//!
//! Cells are linearised column-major: the cell at zero-based `(row, col)`
//! has index `col * rows + row`. All indices in the Rust API are zero-based;
//! file formats add one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BandedSym;
use crate::partitions::Partition;

#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    rows: usize,
    cols: usize,
    neighbors: Vec<Vec<usize>>,
}

/// Serializable form of a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "column_major")]
    pub order: CellOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellOrder {
    #[serde(rename = "column-major")]
    ColumnMajor,
}

fn column_major() -> CellOrder {
    CellOrder::ColumnMajor
}

impl GridTopology {
    /// Builds the `rows x cols` lattice.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "grid dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let n = rows * cols;
        let mut neighbors = vec![Vec::with_capacity(8); n];
        for c in 0..cols {
            for r in 0..rows {
                let i = c * rows + r;
                for dc in -1i64..=1 {
                    for dr in -1i64..=1 {
                        if dc == 0 && dr == 0 {
                            continue;
                        }
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        if rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                            continue;
                        }
                        neighbors[i].push(cc as usize * rows + rr as usize);
                    }
                }
                neighbors[i].sort_unstable();
            }
        }
        Ok(Self {
            rows,
            cols,
            neighbors,
        })
    }

    pub fn from_descriptor(d: &GridDescriptor) -> Result<Self> {
        Self::new(d.rows, d.cols)
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            rows: self.rows,
            cols: self.cols,
            order: CellOrder::ColumnMajor,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        col * self.rows + row
    }

    /// `(row, col)` of a cell.
    pub fn position(&self, cell: usize) -> (usize, usize) {
        (cell % self.rows, cell / self.rows)
    }

    /// Sorted neighbour list of `cell`.
    pub fn neighbors(&self, cell: usize) -> &[usize] {
        &self.neighbors[cell]
    }

    pub fn degree(&self, cell: usize) -> usize {
        self.neighbors[cell].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Half-bandwidth of the adjacency matrix under the column-major order.
    pub fn bandwidth(&self) -> usize {
        if self.cols == 1 {
            1.min(self.n_cells() - 1)
        } else {
            (self.rows + 1).min(self.n_cells() - 1)
        }
    }

    /// Undirected neighbour pairs `(i, j)` with `i < j`, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.n_cells() {
            Err(Error::OutOfRange {
                index: cell,
                lo: 0,
                hi: self.n_cells() - 1,
            })
        } else {
            Ok(())
        }
    }

    /// Number of neighbours of `cell` labelled differently from it.
    pub fn boundary_length(&self, labels: &Partition, cell: usize) -> Result<usize> {
        self.check_cell(cell)?;
        if labels.n_items() != self.n_cells() {
            return Err(Error::Dimension(format!(
                "partition has {} items, grid has {} cells",
                labels.n_items(),
                self.n_cells()
            )));
        }
        let s = labels.labels();
        Ok(self.neighbors[cell]
            .iter()
            .filter(|&&j| s[j] != s[cell])
            .count())
    }

    /// Sum of boundary lengths over all cells (twice the number of cut edges).
    pub fn total_boundary_length(&self, labels: &Partition) -> usize {
        let s = labels.labels();
        self.edges().filter(|&(i, j)| s[i] != s[j]).count() * 2
    }

    /// Leroux precision `zeta (D - W) + (1 - zeta) I`.
    pub fn leroux_precision(&self, zeta: f64) -> Result<LerouxPrecision> {
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::Parameter(format!("zeta must lie in [0, 1], got {zeta}")));
        }
        let n = self.n_cells();
        let mut m = BandedSym::zeros(n, self.bandwidth());
        for i in 0..n {
            m.set(i, i, zeta * self.degree(i) as f64 + (1.0 - zeta));
            for &j in self.neighbors(i).iter().filter(|&&j| j < i) {
                m.set(i, j, -zeta);
            }
        }
        Ok(LerouxPrecision { zeta, matrix: m })
    }
}

/// Symmetric cell adjacency, the only structure the partition prior sees.
pub trait Adjacency {
    fn n_cells(&self) -> usize;

    /// Sorted neighbour list of `cell`.
    fn neighbors(&self, cell: usize) -> &[usize];

    /// Twice the number of edges joining differently labelled cells.
    fn total_boundary_length(&self, labels: &Partition) -> usize {
        let s = labels.labels();
        (0..self.n_cells())
            .map(|i| self.neighbors(i).iter().filter(|&&j| s[j] != s[i]).count())
            .sum()
    }
}

impl Adjacency for GridTopology {
    fn n_cells(&self) -> usize {
        GridTopology::n_cells(self)
    }

    fn neighbors(&self, cell: usize) -> &[usize] {
        GridTopology::neighbors(self, cell)
    }

    fn total_boundary_length(&self, labels: &Partition) -> usize {
        GridTopology::total_boundary_length(self, labels)
    }
}

/// Sub-lattice induced by a subset of the cells of a grid, reindexed in the
/// order the cells were given.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGraph {
    cells: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
}

impl CellGraph {
    /// Original grid index of each cell.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
}

impl Adjacency for CellGraph {
    fn n_cells(&self) -> usize {
        self.cells.len()
    }

    fn neighbors(&self, cell: usize) -> &[usize] {
        &self.neighbors[cell]
    }
}

impl GridTopology {
    /// Induced sub-lattice on `cells`, which must be distinct and in range.
    pub fn induced(&self, cells: &[usize]) -> Result<CellGraph> {
        if cells.is_empty() {
            return Err(Error::Dimension("induced sub-lattice needs at least one cell".into()));
        }
        let mut local = vec![None; self.n_cells()];
        for (k, &c) in cells.iter().enumerate() {
            self.check_cell(c)?;
            if local[c].replace(k).is_some() {
                return Err(Error::Dimension(format!("cell {c} listed twice")));
            }
        }
        let neighbors = cells
            .iter()
            .map(|&c| {
                let mut nb: Vec<usize> = self.neighbors(c).iter().filter_map(|&j| local[j]).collect();
                nb.sort_unstable();
                nb
            })
            .collect();
        Ok(CellGraph { cells: cells.to_vec(), neighbors })
    }
}

/// `Q(zeta, W)` stored as a banded symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LerouxPrecision {
    zeta: f64,
    matrix: BandedSym,
}

impl LerouxPrecision {
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn matrix(&self) -> &BandedSym {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn quad_form(&self, u: &[f64]) -> f64 {
        self.matrix.quad_form(u)
    }

    /// `log det Q`; `-inf` when singular (`zeta = 1`).
    pub fn log_det(&self) -> f64 {
        match self.matrix.cholesky() {
            Ok(c) => c.log_det(),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}
