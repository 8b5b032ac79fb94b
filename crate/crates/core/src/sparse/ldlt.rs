//! Up-looking block `LDLᵀ` factorization with a fill-reducing ordering.
//!
//! The matrix is partitioned into blocks of one or two rows (the free DOFs of
//! a node). Blocks are ordered by approximate minimum degree on the block
//! graph, which fixes the symbolic structure for every matrix sharing the
//! pattern. Each diagonal block is pivoted with the Bunch–Kaufman rule
//! restricted to the block, giving `P K Pᵀ = L D Lᵀ` with unit lower `L` and
//! `D` made of 1×1 and 2×2 pivots. Pivots below `1e−14·‖K‖∞` are reported as
//! singular rather than perturbed.

use std::sync::Arc;

use super::{SparseSym, SymPattern};
use crate::{Error, Result};

const NONE: usize = usize::MAX;
/// Bunch–Kaufman growth bound `(1 + √17) / 8`.
const BK_ALPHA: f64 = 0.640_388_203_202_208_4;
const PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    Natural,
    #[default]
    Amd,
}

#[derive(Debug, Clone, Copy)]
struct AEntry {
    block_row: usize,
    local_row: u8,
    local_col: u8,
    value: usize,
}

/// Ordering and symbolic structure of the factor, reusable for every matrix
/// with the same pattern.
#[derive(Debug)]
pub struct SymbolicLdlt {
    pattern: Arc<SymPattern>,
    /// Original scalar start of the block placed at each new position.
    orig_start: Vec<usize>,
    /// Scalar start of each block in the permuted order (length `nb + 1`).
    new_start: Vec<usize>,
    amap_ptr: Vec<usize>,
    amap: Vec<AEntry>,
    l_col_ptr: Vec<usize>,
    l_rows: Vec<usize>,
    l_val_ptr: Vec<usize>,
    reach_ptr: Vec<usize>,
    reach: Vec<usize>,
}

impl SymbolicLdlt {
    pub fn analyze(pattern: Arc<SymPattern>, ordering: Ordering) -> Result<Arc<Self>> {
        let starts = pattern.block_starts().to_vec();
        let nb = starts.len() - 1;
        let n = pattern.dim();
        let mut block_of = vec![0usize; n];
        for b in 0..nb {
            for d in starts[b]..starts[b + 1] {
                block_of[d] = b;
            }
        }

        // Block adjacency (both triangles, no diagonal).
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nb];
        for c in 0..n {
            for p in pattern.col_ptr()[c]..pattern.col_ptr()[c + 1] {
                let (bi, bj) = (block_of[pattern.row_idx()[p]], block_of[c]);
                if bi != bj {
                    adj[bi].push(bj);
                    adj[bj].push(bi);
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }

        let perm: Vec<usize> = match ordering {
            Ordering::Natural => (0..nb).collect(),
            Ordering::Amd if nb > 0 => {
                let mut ap = Vec::with_capacity(nb + 1);
                let mut ai = Vec::new();
                ap.push(0usize);
                for (b, a) in adj.iter().enumerate() {
                    // AMD expects every column present; include the diagonal.
                    let mut col: Vec<usize> = a.clone();
                    col.push(b);
                    col.sort_unstable();
                    ai.extend(col);
                    ap.push(ai.len());
                }
                let (p, _, _) = amd::order::<usize>(nb, &ap, &ai, &amd::Control::default())
                    .map_err(|s| Error::invalid(format!("AMD ordering failed: {s:?}")))?;
                p
            }
            Ordering::Amd => Vec::new(),
        };
        let mut inv = vec![0usize; nb];
        for (k, &b) in perm.iter().enumerate() {
            inv[b] = k;
        }
        let bsize: Vec<usize> = perm.iter().map(|&b| starts[b + 1] - starts[b]).collect();
        let orig_start: Vec<usize> = perm.iter().map(|&b| starts[b]).collect();
        let mut new_start = Vec::with_capacity(nb + 1);
        new_start.push(0);
        for &s in &bsize {
            new_start.push(new_start.last().unwrap() + s);
        }

        // Map every stored entry of A into (block column, block row <= column).
        let mut per_col: Vec<Vec<AEntry>> = vec![Vec::new(); nb];
        for c in 0..n {
            for p in pattern.col_ptr()[c]..pattern.col_ptr()[c + 1] {
                let r = pattern.row_idx()[p];
                let (br, bc) = (block_of[r], block_of[c]);
                let (nr, nc) = (inv[br], inv[bc]);
                let lr = (r - starts[br]) as u8;
                let lc = (c - starts[bc]) as u8;
                let entry = if nr <= nc {
                    (nc, AEntry { block_row: nr, local_row: lr, local_col: lc, value: p })
                } else {
                    (nr, AEntry { block_row: nc, local_row: lc, local_col: lr, value: p })
                };
                per_col[entry.0].push(entry.1);
            }
        }
        let mut amap_ptr = Vec::with_capacity(nb + 1);
        let mut amap = Vec::new();
        amap_ptr.push(0);
        for col in per_col {
            amap.extend(col);
            amap_ptr.push(amap.len());
        }

        // Elimination tree of the permuted block graph.
        let upper = |j: usize| {
            let mut rows: Vec<usize> = adj[perm[j]].iter().map(|&b| inv[b]).filter(|&i| i < j).collect();
            rows.sort_unstable();
            rows
        };
        let mut parent = vec![NONE; nb];
        let mut ancestor = vec![NONE; nb];
        for j in 0..nb {
            for i in upper(j) {
                let mut r = i;
                while ancestor[r] != NONE && ancestor[r] != j {
                    let next = ancestor[r];
                    ancestor[r] = j;
                    r = next;
                }
                if ancestor[r] == NONE {
                    ancestor[r] = j;
                    parent[r] = j;
                }
            }
        }

        // Row patterns of L in topological order, and column counts.
        let mut flag = vec![NONE; nb];
        let mut reach_ptr = Vec::with_capacity(nb + 1);
        let mut reach = Vec::new();
        let mut col_count = vec![0usize; nb];
        let mut stack = Vec::new();
        let mut path = Vec::new();
        reach_ptr.push(0);
        for j in 0..nb {
            flag[j] = j;
            stack.clear();
            for i in upper(j) {
                path.clear();
                let mut r = i;
                while flag[r] != j {
                    path.push(r);
                    flag[r] = j;
                    r = parent[r];
                }
                while let Some(x) = path.pop() {
                    stack.push(x);
                }
            }
            // `stack` holds paths pushed ancestor-last; reversing gives the
            // topological order used by the numeric phase.
            for &i in stack.iter().rev() {
                reach.push(i);
                col_count[i] += 1;
            }
            reach_ptr.push(reach.len());
        }

        let mut l_col_ptr = Vec::with_capacity(nb + 1);
        l_col_ptr.push(0);
        for &c in &col_count {
            l_col_ptr.push(l_col_ptr.last().unwrap() + c);
        }
        let mut l_rows = vec![0usize; reach.len()];
        let mut fill = l_col_ptr[..nb].to_vec();
        for j in 0..nb {
            for &i in &reach[reach_ptr[j]..reach_ptr[j + 1]] {
                l_rows[fill[i]] = j;
                fill[i] += 1;
            }
        }
        let mut l_val_ptr = Vec::with_capacity(l_rows.len() + 1);
        l_val_ptr.push(0);
        for i in 0..nb {
            for p in l_col_ptr[i]..l_col_ptr[i + 1] {
                l_val_ptr.push(l_val_ptr.last().unwrap() + bsize[l_rows[p]] * bsize[i]);
            }
        }

        Ok(Arc::new(SymbolicLdlt {
            pattern,
            orig_start,
            new_start,
            amap_ptr,
            amap,
            l_col_ptr,
            l_rows,
            l_val_ptr,
            reach_ptr,
            reach,
        }))
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    fn n_blocks(&self) -> usize {
        self.new_start.len() - 1
    }

    fn bsize(&self, k: usize) -> usize {
        self.new_start[k + 1] - self.new_start[k]
    }

    /// Number of scalar entries stored in the strictly lower factor.
    pub fn factor_nnz(&self) -> usize {
        *self.l_val_ptr.last().unwrap_or(&0)
    }

    /// Permutation of scalar indices: position `k` of the permuted system
    /// holds original index `perm()[k]`.
    pub fn perm(&self) -> Vec<usize> {
        (0..self.n_blocks())
            .flat_map(|k| (0..self.bsize(k)).map(move |a| self.orig_start[k] + a))
            .collect()
    }

    pub fn factor(self: &Arc<Self>, k: &SparseSym) -> Result<LdltFactor> {
        if !Arc::ptr_eq(&self.pattern, k.pattern()) && *self.pattern != **k.pattern() {
            return Err(Error::invalid("matrix pattern differs from the analyzed pattern"));
        }
        let nb = self.n_blocks();
        let values = k.values();
        let tol = PIVOT_TOL * k.norm_inf();
        let mut lx = vec![0.0; self.factor_nnz()];
        let mut fill: Vec<usize> = self.l_col_ptr[..nb].to_vec();
        let mut pivots = Vec::with_capacity(nb);
        let mut dinv: Vec<[f64; 4]> = Vec::with_capacity(nb);
        let mut y: Vec<[f64; 4]> = vec![[0.0; 4]; nb];

        for j in 0..nb {
            let bj = self.bsize(j);
            let mut d = [0.0; 4];
            for e in &self.amap[self.amap_ptr[j]..self.amap_ptr[j + 1]] {
                let v = values[e.value];
                let (lr, lc) = (e.local_row as usize, e.local_col as usize);
                if e.block_row == j {
                    d[lr * bj + lc] = v;
                    d[lc * bj + lr] = v;
                } else {
                    y[e.block_row][lr * bj + lc] += v;
                }
            }
            for &i in &self.reach[self.reach_ptr[j]..self.reach_ptr[j + 1]] {
                let bi = self.bsize(i);
                let yi = std::mem::replace(&mut y[i], [0.0; 4]);
                for p in self.l_col_ptr[i]..fill[i] {
                    let r = self.l_rows[p];
                    let br = self.bsize(r);
                    let le = &lx[self.l_val_ptr[p]..self.l_val_ptr[p + 1]];
                    let yr = &mut y[r];
                    for a in 0..br {
                        for c in 0..bj {
                            let mut s = 0.0;
                            for b in 0..bi {
                                s += le[a * bi + b] * yi[b * bj + c];
                            }
                            yr[a * bj + c] -= s;
                        }
                    }
                }
                // L(j, i) = yᵢᵀ D(i)⁻¹
                let di = &dinv[i];
                let mut lji = [0.0; 4];
                for c in 0..bj {
                    for b in 0..bi {
                        let mut s = 0.0;
                        for t in 0..bi {
                            s += yi[t * bj + c] * di[t * bi + b];
                        }
                        lji[c * bi + b] = s;
                    }
                }
                for c in 0..bj {
                    for c2 in 0..bj {
                        let mut s = 0.0;
                        for b in 0..bi {
                            s += lji[c * bi + b] * yi[b * bj + c2];
                        }
                        d[c * bj + c2] -= s;
                    }
                }
                let p = fill[i];
                lx[self.l_val_ptr[p]..self.l_val_ptr[p + 1]].copy_from_slice(&lji[..bj * bi]);
                fill[i] += 1;
            }
            let (pivot, inv) = pivot_block(&d, bj, tol, self.orig_start[j])?;
            pivots.push(pivot);
            dinv.push(inv);
        }

        Ok(LdltFactor { symbolic: Arc::clone(self), lx, pivots, dinv })
    }
}

/// Pivot structure of one diagonal block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pivot {
    One(f64),
    /// Two 1×1 pivots; `swapped` when the second row was eliminated first.
    TwoOnes { swapped: bool, d: [f64; 2] },
    /// A 2×2 pivot `[[a, b], [b, c]]`.
    Two { a: f64, b: f64, c: f64 },
}

fn pivot_block(d: &[f64; 4], size: usize, tol: f64, first_dof: usize) -> Result<(Pivot, [f64; 4])> {
    let singular = |offset: usize, value: f64| Error::SingularMatrix { pivot: first_dof + offset, value };
    if size == 1 {
        let a = d[0];
        if !(a.abs() > tol) {
            return Err(singular(0, a));
        }
        return Ok((Pivot::One(a), [1.0 / a, 0.0, 0.0, 0.0]));
    }
    let (a, b, c) = (d[0], d[1], d[3]);
    if a.abs() >= BK_ALPHA * b.abs() {
        if !(a.abs() > tol) {
            return Err(singular(0, a));
        }
        let l = b / a;
        let d2 = c - l * b;
        if !(d2.abs() > tol) {
            return Err(singular(1, d2));
        }
        let inv = [1.0 / a + l * l / d2, -l / d2, -l / d2, 1.0 / d2];
        Ok((Pivot::TwoOnes { swapped: false, d: [a, d2] }, inv))
    } else if c.abs() >= BK_ALPHA * b.abs() {
        let l = b / c;
        let d2 = a - l * b;
        if !(d2.abs() > tol) {
            return Err(singular(0, d2));
        }
        let inv = [1.0 / d2, -l / d2, -l / d2, 1.0 / c + l * l / d2];
        Ok((Pivot::TwoOnes { swapped: true, d: [c, d2] }, inv))
    } else {
        let det = a * c - b * b;
        if !(det.abs() > tol * b.abs()) {
            return Err(singular(0, det / b));
        }
        Ok((Pivot::Two { a, b, c }, [c / det, -b / det, -b / det, a / det]))
    }
}

/// Counts of positive, negative and zero eigenvalues of `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone)]
pub struct LdltFactor {
    symbolic: Arc<SymbolicLdlt>,
    lx: Vec<f64>,
    pivots: Vec<Pivot>,
    dinv: Vec<[f64; 4]>,
}

impl LdltFactor {
    pub fn symbolic(&self) -> &Arc<SymbolicLdlt> {
        &self.symbolic
    }

    pub fn dim(&self) -> usize {
        self.symbolic.dim()
    }

    pub fn pivots(&self) -> &[Pivot] {
        &self.pivots
    }

    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia::default();
        let mut count = |v: f64| {
            if v > 0.0 {
                out.positive += 1
            } else {
                out.negative += 1
            }
        };
        for p in &self.pivots {
            match *p {
                Pivot::One(d) => count(d),
                Pivot::TwoOnes { d, .. } => d.iter().for_each(|&v| count(v)),
                Pivot::Two { a, b, c } => {
                    let det = a * c - b * b;
                    if det < 0.0 {
                        count(1.0);
                        count(-1.0);
                    } else {
                        count(a + c);
                        count(a + c);
                    }
                }
            }
        }
        out
    }

    /// Solves `K x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let s = &*self.symbolic;
        let n = s.dim();
        if b.len() != n {
            return Err(Error::invalid(format!("right-hand side of length {} for dimension {n}", b.len())));
        }
        let nb = s.n_blocks();
        let mut x = vec![0.0; n];
        for k in 0..nb {
            for a in 0..s.bsize(k) {
                x[s.new_start[k] + a] = b[s.orig_start[k] + a];
            }
        }
        for i in 0..nb {
            let (bi, oi) = (s.bsize(i), s.new_start[i]);
            let xi = [x[oi], if bi == 2 { x[oi + 1] } else { 0.0 }];
            for p in s.l_col_ptr[i]..s.l_col_ptr[i + 1] {
                let r = s.l_rows[p];
                let (br, or) = (s.bsize(r), s.new_start[r]);
                let le = &self.lx[s.l_val_ptr[p]..s.l_val_ptr[p + 1]];
                for a in 0..br {
                    let mut acc = 0.0;
                    for t in 0..bi {
                        acc += le[a * bi + t] * xi[t];
                    }
                    x[or + a] -= acc;
                }
            }
        }
        for i in 0..nb {
            let (bi, oi) = (s.bsize(i), s.new_start[i]);
            let di = &self.dinv[i];
            if bi == 1 {
                x[oi] *= di[0];
            } else {
                let (u, v) = (x[oi], x[oi + 1]);
                x[oi] = di[0] * u + di[1] * v;
                x[oi + 1] = di[2] * u + di[3] * v;
            }
        }
        for i in (0..nb).rev() {
            let (bi, oi) = (s.bsize(i), s.new_start[i]);
            let mut acc = [0.0; 2];
            for p in s.l_col_ptr[i]..s.l_col_ptr[i + 1] {
                let r = s.l_rows[p];
                let (br, or) = (s.bsize(r), s.new_start[r]);
                let le = &self.lx[s.l_val_ptr[p]..s.l_val_ptr[p + 1]];
                for a in 0..br {
                    for t in 0..bi {
                        acc[t] += le[a * bi + t] * x[or + a];
                    }
                }
            }
            for t in 0..bi {
                x[oi + t] -= acc[t];
            }
        }
        let mut out = vec![0.0; n];
        for k in 0..nb {
            for a in 0..s.bsize(k) {
                out[s.orig_start[k] + a] = x[s.new_start[k] + a];
            }
        }
        Ok(out)
    }

    /// Dense `(perm, L, D)` with `K[perm][:, perm] = L D Lᵀ`, row-major.
    /// Intended for inspection of small systems.
    pub fn to_dense_factors(&self) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        let s = &*self.symbolic;
        let n = s.dim();
        let mut l = vec![0.0; n * n];
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            l[i * n + i] = 1.0;
        }
        for i in 0..s.n_blocks() {
            let (bi, oi) = (s.bsize(i), s.new_start[i]);
            for p in s.l_col_ptr[i]..s.l_col_ptr[i + 1] {
                let r = s.l_rows[p];
                let (br, or) = (s.bsize(r), s.new_start[r]);
                let le = &self.lx[s.l_val_ptr[p]..s.l_val_ptr[p + 1]];
                for a in 0..br {
                    for t in 0..bi {
                        l[(or + a) * n + oi + t] = le[a * bi + t];
                    }
                }
            }
            match self.pivots[i] {
                Pivot::One(v) => d[oi * n + oi] = v,
                Pivot::TwoOnes { swapped, d: [d1, d2] } => {
                    // Re-expand the block: D_block = (inverse of the stored inverse).
                    let _ = (swapped, d1, d2);
                    let di = self.dinv[i];
                    let det = di[0] * di[3] - di[1] * di[2];
                    d[oi * n + oi] = di[3] / det;
                    d[oi * n + oi + 1] = -di[1] / det;
                    d[(oi + 1) * n + oi] = -di[2] / det;
                    d[(oi + 1) * n + oi + 1] = di[0] / det;
                }
                Pivot::Two { a, b, c } => {
                    d[oi * n + oi] = a;
                    d[oi * n + oi + 1] = b;
                    d[(oi + 1) * n + oi] = b;
                    d[(oi + 1) * n + oi + 1] = c;
                }
            }
        }
        (s.perm(), l, d)
    }
}

/// Analyzes the pattern of `k` with the default ordering and factors it.
pub fn ldlt_factor(k: &SparseSym) -> Result<LdltFactor> {
    SymbolicLdlt::analyze(Arc::clone(k.pattern()), Ordering::default())?.factor(k)
}
