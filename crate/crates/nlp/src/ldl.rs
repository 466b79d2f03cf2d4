//! Sparse LDLᵀ factorization without pivoting.
//!
//! The factorization follows the classic up-looking scheme driven by the
//! elimination tree. It relies on regularization (quasi-definiteness) rather
//! than pivoting for stability, and reports the number of positive pivots so
//! callers can check the inertia of KKT matrices.

use crate::ordering::{minimum_degree, Permutation};

/// Symmetric sparse matrix stored as the upper triangle (CSC) of a permuted
/// matrix, together with a map from caller "slots" into the value array.
///
/// Callers describe the pattern once as a list of `(row, col)` entries in
/// their own indexing (either triangle, duplicates allowed), then refill the
/// numeric values every iteration through [`SymmetricMatrix::values_mut`]
/// and [`SymmetricMatrix::slot`].
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    n: usize,
    perm: Permutation,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    slot_to_value: Vec<usize>,
}

impl SymmetricMatrix {
    /// Builds the pattern. Every diagonal entry is always present, whether or
    /// not it appears in `entries`.
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Self {
        let perm = minimum_degree(n, entries);
        Self::with_permutation(n, entries, perm)
    }

    pub fn with_permutation(n: usize, entries: &[(usize, usize)], perm: Permutation) -> Self {
        let mapped: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(r, c)| {
                let (pr, pc) = (perm.iperm[r], perm.iperm[c]);
                if pr <= pc {
                    (pr, pc)
                } else {
                    (pc, pr)
                }
            })
            .collect();

        let mut all: Vec<(usize, usize)> = mapped.clone();
        all.extend((0..n).map(|i| (i, i)));
        // column-major, rows ascending
        all.sort_unstable_by_key(|&(r, c)| (c, r));
        all.dedup();

        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(all.len());
        for &(r, c) in &all {
            col_ptr[c + 1] += 1;
            row_idx.push(r);
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }

        let slot_to_value = mapped
            .iter()
            .map(|&(r, c)| {
                let start = col_ptr[c];
                let end = col_ptr[c + 1];
                start
                    + row_idx[start..end]
                        .binary_search(&r)
                        .expect("entry present in pattern")
            })
            .collect();

        Self {
            n,
            perm,
            values: vec![0.0; row_idx.len()],
            col_ptr,
            row_idx,
            slot_to_value,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `value` to the entry registered as slot `slot`.
    #[inline]
    pub fn add_slot(&mut self, slot: usize, value: f64) {
        let k = self.slot_to_value[slot];
        self.values[k] += value;
    }

    /// Adds `value` to diagonal entry `i` (caller indexing).
    pub fn add_diagonal(&mut self, i: usize, value: f64) {
        let p = self.perm.iperm[i];
        let end = self.col_ptr[p + 1];
        // diagonal is the last entry of its upper-triangular column
        debug_assert_eq!(self.row_idx[end - 1], p);
        self.values[end - 1] += value;
    }

    /// y += A x in caller indexing.
    pub fn mul_add(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.n {
            let oc = self.perm.perm[c];
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                let or = self.perm.perm[r];
                let v = self.values[k];
                y[or] += v * x[oc];
                if r != c {
                    y[oc] += v * x[or];
                }
            }
        }
    }
}

/// Symbolic analysis plus numeric storage for an LDLᵀ factorization.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    etree: Vec<Option<usize>>,
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
    d: Vec<f64>,
    d_inv: Vec<f64>,
    positive_pivots: usize,
}

/// Result of a numeric factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factorization {
    /// Factorization completed; the count of positive pivots is attached.
    Ok { positive: usize, negative: usize },
    /// A pivot vanished (relative to `pivot_tol`) at the given position.
    ZeroPivot(usize),
}

impl LdlFactor {
    pub fn analyze(a: &SymmetricMatrix) -> Self {
        let n = a.n;
        let mut etree = vec![None; n];
        let mut l_nz = vec![0usize; n];
        let mut work = vec![usize::MAX; n];
        for j in 0..n {
            work[j] = j;
            for k in a.col_ptr[j]..a.col_ptr[j + 1] {
                let mut i = a.row_idx[k];
                while work[i] != j {
                    if etree[i].is_none() {
                        etree[i] = Some(j);
                    }
                    l_nz[i] += 1;
                    work[i] = j;
                    match etree[i] {
                        Some(next) => i = next,
                        None => break,
                    }
                }
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for i in 0..n {
            l_col_ptr[i + 1] = l_col_ptr[i] + l_nz[i];
        }
        let total = l_col_ptr[n];
        Self {
            n,
            etree,
            l_col_ptr,
            l_row_idx: vec![0; total],
            l_values: vec![0.0; total],
            d: vec![0.0; n],
            d_inv: vec![0.0; n],
            positive_pivots: 0,
        }
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_values.len()
    }

    /// Numeric factorization of `a`, which must share the pattern used in
    /// [`LdlFactor::analyze`].
    pub fn factor(&mut self, a: &SymmetricMatrix, pivot_tol: f64) -> Factorization {
        let n = self.n;
        let mut y_vals = vec![0.0; n];
        let mut y_marked = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.l_col_ptr[..n].to_vec();
        let mut positive = 0usize;

        for k in 0..n {
            let mut nnz_y = 0usize;
            let mut diag = 0.0;
            let mut diag_scale = 0.0f64;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let b = a.row_idx[p];
                let v = a.values[p];
                if b == k {
                    diag = v;
                    diag_scale = v.abs();
                    continue;
                }
                y_vals[b] = v;
                if !y_marked[b] {
                    y_marked[b] = true;
                    elim[0] = b;
                    let mut n_elim = 1;
                    let mut next = self.etree[b];
                    while let Some(nx) = next {
                        if nx >= k || y_marked[nx] {
                            break;
                        }
                        y_marked[nx] = true;
                        elim[n_elim] = nx;
                        n_elim += 1;
                        next = self.etree[nx];
                    }
                    while n_elim > 0 {
                        n_elim -= 1;
                        y_idx[nnz_y] = elim[n_elim];
                        nnz_y += 1;
                    }
                }
            }

            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let end = next_space[c];
                let yc = y_vals[c];
                for j in self.l_col_ptr[c]..end {
                    y_vals[self.l_row_idx[j]] -= self.l_values[j] * yc;
                }
                self.l_row_idx[end] = k;
                let lkc = yc * self.d_inv[c];
                self.l_values[end] = lkc;
                diag -= yc * lkc;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_marked[c] = false;
            }

            if !diag.is_finite() || diag.abs() <= pivot_tol * diag_scale.max(1.0) {
                self.positive_pivots = positive;
                return Factorization::ZeroPivot(k);
            }
            if diag > 0.0 {
                positive += 1;
            }
            self.d[k] = diag;
            self.d_inv[k] = 1.0 / diag;
        }
        self.positive_pivots = positive;
        Factorization::Ok {
            positive,
            negative: n - positive,
        }
    }

    /// Solves A x = b in place (caller indexing) using the last numeric
    /// factorization of `a`.
    pub fn solve(&self, a: &SymmetricMatrix, rhs: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|k| rhs[a.perm.perm[k]]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.l_col_ptr[i]..self.l_col_ptr[i + 1] {
                    x[self.l_row_idx[j]] -= self.l_values[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.d_inv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.l_col_ptr[i]..self.l_col_ptr[i + 1] {
                xi -= self.l_values[j] * x[self.l_row_idx[j]];
            }
            x[i] = xi;
        }
        for k in 0..n {
            rhs[a.perm.perm[k]] = x[k];
        }
    }
}
