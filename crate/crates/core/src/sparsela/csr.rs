use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::sym::SparseSym;

/// General rectangular sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Duplicates are summed; column indices end up sorted within each row.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut t = triplets.to_vec();
        for &(r, c, _) in &t {
            if r >= rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: rows,
                });
            }
            if c >= cols {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    len: cols,
                });
            }
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<T> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_sym(a: &SparseSym<T>) -> Self {
        let mut trip = Vec::with_capacity(2 * a.nnz());
        for (r, c, v) in a.iter_lower() {
            trip.push((r, c, v));
            if r != c {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(a.n(), a.n(), &trip).expect("indices come from a valid matrix")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |p| (r, self.col_idx[p], self.values[p]))
        })
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| {
                let (c, v) = self.row(r);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect())
    }

    pub fn matvec_transpose(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: y.len(),
            });
        }
        let mut x = vec![T::zero(); self.cols];
        for (r, c, v) in self.iter() {
            x[c] += v * y[r];
        }
        Ok(x)
    }

    pub fn transpose(&self) -> Self {
        let trip: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, &trip).expect("transpose keeps indices in range")
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut acc = vec![T::zero(); other.cols];
        let mut mark = vec![usize::MAX; other.cols];
        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.rows {
            let start = col_idx.len();
            let (ac, av) = self.row(r);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&j, &b) in bc.iter().zip(bv) {
                    if mark[j] != r {
                        mark[j] = r;
                        acc[j] = T::zero();
                        col_idx.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            col_idx[start..].sort_unstable();
            for &j in &col_idx[start..] {
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Lower triangle of a square matrix that is symmetric by construction.
    pub fn to_sym_lower(&self) -> Result<SparseSym<T>> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        let trip: Vec<_> = self.iter().filter(|&(r, c, _)| r >= c).collect();
        SparseSym::from_triplets(self.rows, &trip)
    }

    /// `Aᵀ diag(w) A`, or `AᵀA` when `w` is `None`.
    pub fn gram(&self, w: Option<&[T]>) -> Result<SparseSym<T>> {
        if let Some(w) = w {
            if w.len() != self.rows {
                return Err(Error::DimensionMismatch {
                    expected: self.rows,
                    found: w.len(),
                });
            }
        }
        let mut trip = Vec::new();
        for r in 0..self.rows {
            let wr = w.map_or(T::one(), |w| w[r]);
            let (c, v) = self.row(r);
            for a in 0..c.len() {
                for b in 0..=a {
                    let (i, j) = if c[a] >= c[b] {
                        (c[a], c[b])
                    } else {
                        (c[b], c[a])
                    };
                    trip.push((i, j, wr * v[a] * v[b]));
                }
            }
        }
        SparseSym::from_triplets(self.cols, &trip)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.rows * self.cols];
        for (r, c, v) in self.iter() {
            d[r * self.cols + c] += v;
        }
        d
    }

    /// Keep only the listed rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> Result<Self> {
        let mut trip = Vec::new();
        for (new, &r) in keep.iter().enumerate() {
            if r >= self.rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: self.rows,
                });
            }
            let (c, v) = self.row(r);
            trip.extend(c.iter().zip(v).map(|(&j, &a)| (new, j, a)));
        }
        Self::from_triplets(keep.len(), self.cols, &trip)
    }
}

/// Product of two symmetric matrices whose product is itself symmetric
/// (for example powers and polynomials of one matrix).
pub fn sym_product<T: Scalar>(a: &SparseSym<T>, b: &SparseSym<T>) -> Result<SparseSym<T>> {
    CsrMatrix::from_sym(a)
        .matmul(&CsrMatrix::from_sym(b))?
        .to_sym_lower()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_product() {
        let a = CsrMatrix::<f64>::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)])
            .unwrap();
        let b = CsrMatrix::<f64>::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, 1.0), (2, 0, 4.0)])
            .unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.to_dense(), vec![9.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn gram_matches_transpose_product() {
        let a = CsrMatrix::<f64>::from_triplets(
            2,
            3,
            &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (1, 2, -1.0)],
        )
        .unwrap();
        let g = a.gram(None).unwrap();
        let g2 = a.transpose().matmul(&a).unwrap();
        assert_eq!(g.to_dense(), g2.to_dense());
        let gw = a.gram(Some(&[2.0, 0.5])).unwrap();
        assert_eq!(gw.get(2, 2), 2.0 * 4.0 + 0.5);
    }

    #[test]
    fn transpose_matvec() {
        let a = CsrMatrix::<f64>::from_triplets(2, 2, &[(0, 1, 2.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap(), vec![2.0, 1.0]);
        assert_eq!(a.matvec_transpose(&[1.0, 0.0]).unwrap(), vec![0.0, 2.0]);
        assert!(a.matvec(&[1.0]).is_err());
    }
}
