//! Compressed sparse row matrices.
//!
//! Used for adjacency, Laplacians and the pooling transforms. Column indices
//! within a row are kept sorted, which fixes the floating-point summation
//! order of every product.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) outside a {nrows} x {ncols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("dimension mismatch: matrix has {expected} columns, operand has {found} rows")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed CSR structure: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets. Duplicates are summed in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, SparseError> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(SparseError::OutOfBounds {
                    row: r,
                    col: c,
                    nrows,
                    ncols,
                });
            }
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for mut row in rows {
            // stable sort keeps duplicate summation in input order
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        })
    }

    /// Rebuild from raw CSR arrays, checking structure.
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<Self, SparseError> {
        if indptr.len() != nrows + 1 || indptr[0] != 0 {
            return Err(SparseError::Malformed("indptr length or origin".into()));
        }
        if indices.len() != data.len() || *indptr.last().unwrap() != indices.len() {
            return Err(SparseError::Malformed("indices/data length".into()));
        }
        for r in 0..nrows {
            let (a, b) = (indptr[r], indptr[r + 1]);
            if a > b {
                return Err(SparseError::Malformed(format!("row {r} pointer decreases")));
            }
            let row = &indices[a..b];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= ncols) {
                return Err(SparseError::Malformed(format!("row {r} column indices")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Iterate `(col, value)` over row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.data[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.data[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip).expect("transpose stays in bounds")
    }

    /// Sparse times dense: `self · x` with `x` of shape `ncols × c`.
    pub fn mul_dense(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>, SparseError> {
        let mut out = Array2::zeros((self.nrows, x.ncols()));
        self.mul_dense_into(x, &mut out)?;
        Ok(out)
    }

    /// Like [`mul_dense`](Self::mul_dense) but writes into `out` (overwritten).
    pub fn mul_dense_into(&self, x: &ArrayView2<f64>, out: &mut Array2<f64>) -> Result<(), SparseError> {
        if x.nrows() != self.ncols {
            return Err(SparseError::DimensionMismatch {
                expected: self.ncols,
                found: x.nrows(),
            });
        }
        let c = x.ncols();
        assert_eq!(out.dim(), (self.nrows, c));
        out.fill(0.0);
        match (x.as_slice(), out.as_slice_mut()) {
            (Some(xs), Some(os)) => {
                for r in 0..self.nrows {
                    let orow = &mut os[r * c..(r + 1) * c];
                    for k in self.indptr[r]..self.indptr[r + 1] {
                        let j = self.indices[k];
                        let v = self.data[k];
                        let xrow = &xs[j * c..(j + 1) * c];
                        for (o, &xv) in orow.iter_mut().zip(xrow) {
                            *o += v * xv;
                        }
                    }
                }
            }
            _ => {
                for r in 0..self.nrows {
                    for k in self.indptr[r]..self.indptr[r + 1] {
                        let j = self.indices[k];
                        let v = self.data[k];
                        for col in 0..c {
                            out[[r, col]] += v * x[[j, col]];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Sparse times vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out[[r, c]] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5)]).unwrap();
        assert_eq!(m.indices(), &[0, 2]);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let err = CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, SparseError::OutOfBounds { row: 2, .. }));
    }

    #[test]
    fn dense_product_matches_dense_matmul() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, -2.0), (1, 1, 3.0)]).unwrap();
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let y = m.mul_dense(&x.view()).unwrap();
        assert_eq!(y, m.to_dense().dot(&x));
        let t = m.transpose();
        assert_eq!(t.to_dense(), m.to_dense().t().to_owned());
        assert!(m.mul_dense(&y.view()).is_err());
    }

    #[test]
    fn raw_roundtrip_validates() {
        let m = CsrMatrix::identity(3);
        let back = CsrMatrix::from_raw(3, 3, m.indptr().to_vec(), m.indices().to_vec(), m.data().to_vec()).unwrap();
        assert_eq!(back, m);
        assert!(CsrMatrix::from_raw(3, 3, vec![0, 1, 1], vec![0], vec![1.0]).is_err());
    }
}
