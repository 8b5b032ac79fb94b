//! Symmetric sparse matrices stored as their lower triangle in compressed
//! sparse column form, plus the `LDLᵀ` factorization in [`ldlt`].

mod ldlt;

use std::io::{self, Write};
use std::sync::Arc;

pub use ldlt::{ldlt_factor, Inertia, LdltFactor, Ordering, Pivot, SymbolicLdlt};

use crate::{Error, Result};

/// Sparsity pattern of the lower triangle (diagonal included).
///
/// `blocks` partitions `0..n` into contiguous groups of at most two indices
/// (the free DOFs of one node). The factorization eliminates a block at a
/// time and pivots only inside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymPattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    block_starts: Vec<usize>,
}

impl SymPattern {
    /// Builds a pattern from `(row, col)` coordinates of either triangle.
    /// Diagonal entries are always included.
    pub fn from_coords(n: usize, coords: impl IntoIterator<Item = (usize, usize)>, block_starts: Option<Vec<usize>>) -> Result<Self> {
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for (i, j) in coords {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            cols[c].push(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut col in cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend(col);
            col_ptr.push(row_idx.len());
        }
        let block_starts = match block_starts {
            Some(b) => {
                let ok = b.first() == Some(&0)
                    && b.last() == Some(&n)
                    && b.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 2);
                if !ok {
                    return Err(Error::invalid("block partition must cover 0..n with blocks of size 1 or 2"));
                }
                b
            }
            None => (0..n).step_by(2).chain(std::iter::once(n)).collect::<Vec<_>>(),
        };
        let mut block_starts = block_starts;
        block_starts.dedup();
        Ok(SymPattern { n, col_ptr, row_idx, block_starts })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn block_starts(&self) -> &[usize] {
        &self.block_starts
    }

    /// Position of entry `(i, j)` (either triangle) in the value array.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c >= self.n {
            return None;
        }
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        rows.binary_search(&r).ok().map(|k| self.col_ptr[c] + k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    pattern: Arc<SymPattern>,
    values: Vec<f64>,
}

impl SparseSym {
    pub fn zeros(pattern: Arc<SymPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        SparseSym { pattern, values }
    }

    pub fn from_values(pattern: Arc<SymPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::invalid(format!(
                "pattern has {} entries, got {} values",
                pattern.nnz(),
                values.len()
            )));
        }
        Ok(SparseSym { pattern, values })
    }

    /// Builds a matrix from the lower triangle of a dense row-major array,
    /// keeping every nonzero entry.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::invalid("dense array must hold n*n entries"));
        }
        let coords = (0..n).flat_map(|j| (j..n).map(move |i| (i, j))).filter(|&(i, j)| dense[i * n + j] != 0.0);
        let pattern = Arc::new(SymPattern::from_coords(n, coords, None)?);
        let mut m = SparseSym::zeros(pattern);
        for j in 0..n {
            for p in m.pattern.col_ptr[j]..m.pattern.col_ptr[j + 1] {
                let i = m.pattern.row_idx[p];
                m.values[p] = dense[i * n + j];
            }
        }
        Ok(m)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut dense = vec![0.0; n * n];
        for j in 0..n {
            for p in self.pattern.col_ptr[j]..self.pattern.col_ptr[j + 1] {
                let i = self.pattern.row_idx[p];
                dense[i * n + j] = self.values[p];
                dense[j * n + i] = self.values[p];
            }
        }
        dense
    }

    pub fn pattern(&self) -> &Arc<SymPattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn same_pattern(&self, other: &SparseSym) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern
    }

    /// `y = K x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        sym_mul_add(&self.pattern, |p| self.values[p], x, &mut y);
        y
    }

    /// Infinity norm (maximum absolute row sum) of the full symmetric matrix.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.dim()];
        let pat = &self.pattern;
        for j in 0..pat.n {
            for p in pat.col_ptr[j]..pat.col_ptr[j + 1] {
                let i = pat.row_idx[p];
                let a = self.values[p].abs();
                rows[i] += a;
                if i != j {
                    rows[j] += a;
                }
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Writes the lower triangle in Matrix Market coordinate format.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        let pat = &self.pattern;
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", pat.n, pat.n, pat.nnz())?;
        for j in 0..pat.n {
            for p in pat.col_ptr[j]..pat.col_ptr[j + 1] {
                writeln!(w, "{} {} {:.17e}", pat.row_idx[p] + 1, j + 1, self.values[p])?;
            }
        }
        Ok(())
    }
}

fn sym_mul_add(pat: &SymPattern, value: impl Fn(usize) -> f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), pat.n, "vector length must match matrix dimension");
    for j in 0..pat.n {
        let xj = x[j];
        let mut acc = 0.0;
        for p in pat.col_ptr[j]..pat.col_ptr[j + 1] {
            let i = pat.row_idx[p];
            let a = value(p);
            if i == j {
                acc += a * xj;
            } else {
                y[i] += a * xj;
                acc += a * x[i];
            }
        }
        y[j] += acc;
    }
}

/// Matrix-free product `(K_new − K_old) v` for two matrices sharing a pattern.
pub fn delta_apply(k_new: &SparseSym, k_old: &SparseSym, v: &[f64]) -> Result<Vec<f64>> {
    if !k_new.same_pattern(k_old) {
        return Err(Error::invalid("delta product needs matrices with identical sparsity patterns"));
    }
    if v.len() != k_new.dim() {
        return Err(Error::invalid(format!("vector of length {} for dimension {}", v.len(), k_new.dim())));
    }
    let mut y = vec![0.0; k_new.dim()];
    sym_mul_add(&k_new.pattern, |p| k_new.values[p] - k_old.values[p], v, &mut y);
    Ok(y)
}
