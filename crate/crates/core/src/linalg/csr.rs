/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a zero-valued matrix whose pattern is given by per-row column
    /// lists. Lists are sorted and deduplicated.
    pub fn from_row_patterns(ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            debug_assert!(row.last().map_or(true, |&c| c < ncols));
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        let values = vec![0.0; indices.len()];
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    /// Square pattern coupling every pair of vertices that share an element.
    /// `keep` selects the rows/columns retained and their compressed index.
    pub fn pattern_from_elements<const K: usize>(
        n: usize,
        elements: &[[usize; K]],
        map: &[Option<usize>],
    ) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for el in elements {
            for &a in el {
                let Some(ra) = map[a] else { continue };
                for &b in el {
                    if let Some(cb) = map[b] {
                        rows[ra].push(cb);
                    }
                }
            }
        }
        Self::from_row_patterns(n, rows)
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nrows];
        for &(r, c, _) in triplets {
            rows[r].push(c);
        }
        let mut m = Self::from_row_patterns(ncols, rows);
        for &(r, c, v) in triplets {
            m.add(r, c, v);
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].binary_search(&j).ok().map(|k| a + k)
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (a, b) = (self.indptr[i], self.indptr[i + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.indices[k]];
            }
            *yi = s;
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let dst = next[c];
                indices[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    /// Sparse product `self * other` (Gustavson's row-by-row algorithm).
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch in matmul");
        let n = other.ncols;
        let mut marker = vec![usize::MAX; n];
        let mut acc = vec![0.0; n];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut row_cols = Vec::new();
        for i in 0..self.nrows {
            row_cols.clear();
            for ka in self.indptr[i]..self.indptr[i + 1] {
                let k = self.indices[ka];
                let va = self.values[ka];
                for kb in other.indptr[k]..other.indptr[k + 1] {
                    let j = other.indices[kb];
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        row_cols.push(j);
                    }
                    acc[j] += va * other.values[kb];
                }
            }
            row_cols.sort_unstable();
            for &j in &row_cols {
                indices.push(j);
                values.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: n,
            indptr,
            indices,
            values,
        }
    }

    /// Dense copy, for small coarse-level systems.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// Symmetric Gauss-Seidel sweep pieces; `forward` selects the direction.
    pub(crate) fn gauss_seidel(&self, diag: &[f64], b: &[f64], x: &mut [f64], forward: bool) {
        let mut sweep = |i: usize| {
            let (a, e) = (self.indptr[i], self.indptr[i + 1]);
            let mut s = b[i];
            for k in a..e {
                let j = self.indices[k];
                if j != i {
                    s -= self.values[k] * x[j];
                }
            }
            x[i] = s / diag[i];
        };
        if forward {
            (0..self.nrows).for_each(&mut sweep);
        } else {
            (0..self.nrows).rev().for_each(&mut sweep);
        }
    }

    /// Largest asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}
