//! Compressed sparse column matrices and a direct sparse LU solver.
//!
//! The factorization is left-looking (Gilbert-Peierls) with threshold
//! partial pivoting, after a minimum-degree column ordering of the
//! symmetrized pattern. Power-flow Jacobians are structurally symmetric, so
//! the diagonal is preferred as pivot whenever it is large enough.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("matrix is singular (no usable pivot in column {0})")]
    Singular(usize),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("right-hand side has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Relative pivot threshold: the diagonal is kept unless it is smaller than
/// this fraction of the largest candidate in its column.
const PIVOT_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; ncols + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[c + 1] += 1;
        }
        for c in 0..ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut rows = vec![0; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            rows[next[c]] = r;
            vals[next[c]] = v;
            next[c] += 1;
        }
        // sort each column by row and merge duplicates
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for c in 0..ncols {
            scratch.clear();
            scratch.extend((counts[c]..counts[c + 1]).map(|k| (rows[k], vals[k])));
            scratch.sort_unstable_by_key(|&(r, _)| r);
            for &(r, v) in &scratch {
                if row_idx.len() > col_ptr[c] && *row_idx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(row, value)` pairs of column `c`, ascending in row.
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_idx[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(k) => self.values[self.col_ptr[c] + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (c, col) in (0..self.ncols).map(|c| self.column(c)).enumerate() {
            for (r, v) in col {
                d[r][c] = v;
            }
        }
        d
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for (c, &xc) in x.iter().enumerate() {
            for (r, v) in self.column(c) {
                y[r] += v * xc;
            }
        }
        y
    }
}

/// Minimum-degree ordering on the pattern of `A + Aᵀ`. Ties go to the
/// lowest index so the ordering is deterministic.
fn minimum_degree_order(a: &CscMatrix) -> Vec<usize> {
    let n = a.ncols;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in 0..n {
        for (r, _) in a.column(c) {
            if r != c {
                adj[c].push(r);
                adj[r].push(c);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    let mut mark = vec![usize::MAX; n];
    let mut stamp = 0;
    while let Some((_, pivot)) = queue.pop_first() {
        order.push(pivot);
        let nbrs = std::mem::take(&mut adj[pivot]);
        // connect the neighbours into a clique and drop the pivot
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            let list = &mut adj[u];
            list.retain(|&w| w != pivot);
            stamp += 1;
            for &w in list.iter() {
                mark[w] = stamp;
            }
            for &w in &nbrs {
                if w != u && mark[w] != stamp {
                    list.push(w);
                }
            }
            queue.insert((list.len(), u));
        }
    }
    order
}

/// LU factors with `P A Q = L U`, `L` unit lower triangular.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    /// Column order: step k factors column `col_perm[k]` of A.
    col_perm: Vec<usize>,
    /// Pivot row (original index) of step k.
    pivot_row: Vec<usize>,
    /// Strictly lower part of L per step, rows in original indices.
    l_cols: Vec<Vec<(usize, f64)>>,
    /// Strictly upper part of U per step, rows as step indices.
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
}

impl SparseLu {
    pub fn factor(a: &CscMatrix) -> Result<SparseLu, SparseError> {
        if !a.is_square() {
            return Err(SparseError::NotSquare {
                rows: a.nrows,
                cols: a.ncols,
            });
        }
        Self::factor_ordered(a, minimum_degree_order(a))
    }

    /// Factors with a column order from an earlier factorization of a matrix
    /// with the same pattern, skipping the ordering step.
    pub fn factor_ordered(a: &CscMatrix, col_perm: Vec<usize>) -> Result<SparseLu, SparseError> {
        if !a.is_square() {
            return Err(SparseError::NotSquare {
                rows: a.nrows,
                cols: a.ncols,
            });
        }
        let n = a.ncols;
        if col_perm.len() != n {
            return Err(SparseError::DimensionMismatch {
                expected: n,
                found: col_perm.len(),
            });
        }
        // step at which each original row became pivotal
        let mut row_step = vec![usize::MAX; n];
        let mut pivot_row = Vec::with_capacity(n);
        let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut u_cols = Vec::with_capacity(n);
        let mut u_diag = Vec::with_capacity(n);

        let mut x = vec![0.0; n];
        let mut in_pattern = vec![false; n];
        let mut pattern: Vec<usize> = Vec::new();
        let mut visited = vec![usize::MAX; n];
        let mut topo: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for (k, &col) in col_perm.iter().enumerate() {
            pattern.clear();
            topo.clear();
            for (r, v) in a.column(col) {
                x[r] = v;
                if !in_pattern[r] {
                    in_pattern[r] = true;
                    pattern.push(r);
                }
            }
            // reach of the column through the graph of L, in topological order
            let seeds: Vec<usize> = pattern.clone();
            for r in seeds {
                let s = row_step[r];
                if s == usize::MAX || visited[s] == k {
                    continue;
                }
                visited[s] = k;
                stack.push((s, 0));
                while let Some(top) = stack.last_mut() {
                    let j = top.0;
                    let lcol = &l_cols[j];
                    let mut child = top.1;
                    let mut next = None;
                    while child < lcol.len() {
                        let row = lcol[child].0;
                        child += 1;
                        if !in_pattern[row] {
                            in_pattern[row] = true;
                            pattern.push(row);
                        }
                        let sj = row_step[row];
                        if sj != usize::MAX && visited[sj] != k {
                            visited[sj] = k;
                            next = Some(sj);
                            break;
                        }
                    }
                    top.1 = child;
                    match next {
                        Some(sj) => stack.push((sj, 0)),
                        None => {
                            topo.push(j);
                            stack.pop();
                        }
                    }
                }
            }
            // sparse triangular solve, topological order is reverse postorder
            let mut ucol = Vec::with_capacity(topo.len());
            for &j in topo.iter().rev() {
                let xj = x[pivot_row[j]];
                ucol.push((j, xj));
                if xj != 0.0 {
                    for &(row, l) in &l_cols[j] {
                        x[row] -= l * xj;
                    }
                }
            }
            // pivot among rows not yet pivotal
            let mut best = usize::MAX;
            let mut best_abs = 0.0f64;
            for &r in &pattern {
                if row_step[r] == usize::MAX {
                    let v = x[r].abs();
                    if v > best_abs {
                        best_abs = v;
                        best = r;
                    }
                }
            }
            if best == usize::MAX || best_abs == 0.0 || !best_abs.is_finite() {
                return Err(SparseError::Singular(col));
            }
            if row_step[col] == usize::MAX && in_pattern[col] && x[col].abs() >= PIVOT_THRESHOLD * best_abs {
                best = col;
            }
            let piv = x[best];
            let mut lcol = Vec::new();
            for &r in &pattern {
                if row_step[r] == usize::MAX && r != best && x[r] != 0.0 {
                    lcol.push((r, x[r] / piv));
                }
            }
            row_step[best] = k;
            pivot_row.push(best);
            l_cols.push(lcol);
            ucol.retain(|&(_, v)| v != 0.0);
            u_cols.push(ucol);
            u_diag.push(piv);
            for &r in &pattern {
                x[r] = 0.0;
                in_pattern[r] = false;
            }
        }
        Ok(SparseLu {
            n,
            col_perm,
            pivot_row,
            l_cols,
            u_cols,
            u_diag,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Column order used by this factorization.
    pub fn column_order(&self) -> &[usize] {
        &self.col_perm
    }

    /// Solves `A x = b`, overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), SparseError> {
        if b.len() != self.n {
            return Err(SparseError::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let mut z = vec![0.0; self.n];
        for k in 0..self.n {
            let zk = b[self.pivot_row[k]];
            z[k] = zk;
            if zk != 0.0 {
                for &(r, l) in &self.l_cols[k] {
                    b[r] -= l * zk;
                }
            }
        }
        for k in (0..self.n).rev() {
            let xk = z[k] / self.u_diag[k];
            z[k] = xk;
            if xk != 0.0 {
                for &(j, u) in &self.u_cols[k] {
                    z[j] -= u * xk;
                }
            }
        }
        for (k, &c) in self.col_perm.iter().enumerate() {
            b[c] = z[k];
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    /// Stored entries of L and U (diagonal included once).
    pub fn factor_nnz(&self) -> usize {
        self.n
            + self.l_cols.iter().map(Vec::len).sum::<usize>()
            + self.u_cols.iter().map(Vec::len).sum::<usize>()
    }
}
