use std::ops::{AddAssign, Mul};

use nalgebra::{DMatrix, DVector, Scalar};
use num_traits::Zero;

/// Compressed sparse row matrix with sorted, deduplicated column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T> CsrMatrix<T>
where
    T: Copy + Zero + AddAssign,
{
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(i, j, _) in &entries {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, std::iter::empty())
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> T {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => T::zero(),
        }
    }

    /// Matrix-vector product `A x` for any vector scalar that can absorb `T`.
    pub fn mul_vec<U>(&self, x: &[U]) -> Vec<U>
    where
        U: Copy + Zero + AddAssign + Mul<T, Output = U>,
    {
        assert_eq!(x.len(), self.ncols, "dimension mismatch in mul_vec");
        (0..self.nrows)
            .map(|i| {
                let mut acc = U::zero();
                for (j, v) in self.row(i) {
                    acc += x[j] * v;
                }
                acc
            })
            .collect()
    }

    pub fn map<U, F>(&self, f: F) -> CsrMatrix<U>
    where
        F: Fn(T) -> U,
    {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
    }
}

impl<T: Copy> CsrMatrix<T> {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of row `i` as `(col, value)` pairs in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }
}

impl<T> CsrMatrix<T>
where
    T: Scalar + Copy + Zero + AddAssign,
{
    pub fn to_dense(&self) -> DMatrix<T> {
        let mut out = DMatrix::from_element(self.nrows, self.ncols, T::zero());
        for (i, j, v) in self.triplets() {
            out[(i, j)] += v;
        }
        out
    }

    /// Product with a dense matrix, column by column.
    pub fn mul_dense<U>(&self, x: &DMatrix<U>) -> DMatrix<U>
    where
        U: Scalar + Copy + Zero + AddAssign + Mul<T, Output = U>,
    {
        assert_eq!(x.nrows(), self.ncols, "dimension mismatch in mul_dense");
        let mut out = DMatrix::from_element(self.nrows, x.ncols(), U::zero());
        for c in 0..x.ncols() {
            let col: Vec<U> = x.column(c).iter().copied().collect();
            let y = self.mul_vec(&col);
            out.set_column(c, &DVector::from_vec(y));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let a = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (0, 1, 0.5)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 1), 2.5);
        assert_eq!(a.get(1, 2), 1.0);
        assert_eq!(a.get(0, 0), 0.0);
        let cols: Vec<usize> = a.row(1).map(|(j, _)| j).collect();
        assert_eq!(cols, vec![0, 2]);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 2.0), (1, 2, -1.0), (2, 1, 4.0), (2, 2, 1.0)]);
        let x = [1.0, 2.0, 3.0];
        let y = a.mul_vec(&x);
        let yd = a.to_dense() * DVector::from_column_slice(&x);
        for i in 0..3 {
            assert_eq!(y[i], yd[i]);
        }
        assert_eq!(a.transpose().get(1, 2), 4.0);
    }
}
