use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric sparse matrix holding only its lower triangle in compressed
/// sparse column form. Row indices are strictly increasing within a column
/// and the diagonal entry, when present, comes first.
///
/// Explicit zeros are kept: precisions that depend on hyperparameters keep a
/// fixed pattern so a symbolic factorization can be reused.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym<T> {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseSym<T> {
    /// Assemble from coordinate triplets. Entries may be given in either
    /// triangle; `(i, j)` and `(j, i)` address the same stored element and
    /// duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidExtent(
                "matrix dimension must be at least 1".into(),
            ));
        }
        let mut lower: Vec<(usize, usize, T)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange {
                    index: i.max(j),
                    len: n,
                });
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            lower.push((r, c, v));
        }
        lower.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));

        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(lower.len());
        let mut values: Vec<T> = Vec::with_capacity(lower.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in lower {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Build directly from compressed lower-triangle arrays.
    pub fn from_csc(
        n: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if n == 0 || col_ptr.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: col_ptr.len(),
            });
        }
        if row_idx.len() != values.len() || col_ptr[n] != row_idx.len() {
            return Err(Error::DimensionMismatch {
                expected: col_ptr[n],
                found: row_idx.len(),
            });
        }
        for c in 0..n {
            let rows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
            if rows.iter().any(|&r| r < c || r >= n) || rows.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "column {c} is not a sorted lower-triangle column"
                )));
            }
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(d: &[T]) -> Self {
        let n = d.len();
        Self {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored (lower-triangle) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Stored entries as `(row, col, value)` with `row >= col`.
    pub fn iter_lower(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1])
                .map(move |p| (self.row_idx[p], c, self.values[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(k) => self.values[self.col_ptr[c] + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let mut y = vec![T::zero(); self.n];
        for (r, c, v) in self.iter_lower() {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        Ok(y)
    }

    /// Number of structural nonzeros in each row of the full symmetric matrix.
    pub fn row_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n];
        for (r, c, _) in self.iter_lower() {
            counts[r] += 1;
            if r != c {
                counts[c] += 1;
            }
        }
        counts
    }

    /// Full symmetric adjacency (no self loops), used by orderings.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (r, c, _) in self.iter_lower() {
            if r != c {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
        adj
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<T> {
        let n = self.n;
        let mut d = vec![T::zero(); n * n];
        for (r, c, v) in self.iter_lower() {
            d[r * n + c] = v;
            d[c * n + r] = v;
        }
        d
    }

    pub fn scale(&self, a: T) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= a;
        }
        out
    }

    /// `a·self + b·other` on the union pattern.
    pub fn add_scaled(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let n = self.n;
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(row_idx.capacity());
        col_ptr.push(0);
        for c in 0..n {
            let (mut p, pe) = (self.col_ptr[c], self.col_ptr[c + 1]);
            let (mut q, qe) = (other.col_ptr[c], other.col_ptr[c + 1]);
            while p < pe || q < qe {
                let rp = if p < pe { self.row_idx[p] } else { usize::MAX };
                let rq = if q < qe { other.row_idx[q] } else { usize::MAX };
                if rp == rq {
                    row_idx.push(rp);
                    values.push(a * self.values[p] + b * other.values[q]);
                    p += 1;
                    q += 1;
                } else if rp < rq {
                    row_idx.push(rp);
                    values.push(a * self.values[p]);
                    p += 1;
                } else {
                    row_idx.push(rq);
                    values.push(b * other.values[q]);
                    q += 1;
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Symmetric permutation `P A Pᵀ` where `perm[new] = old`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: perm.len(),
            });
        }
        let mut inv = vec![usize::MAX; self.n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= self.n || inv[old] != usize::MAX {
                return Err(Error::InvalidParameter(
                    "permutation is not a bijection".into(),
                ));
            }
            inv[old] = new;
        }
        let trip: Vec<_> = self
            .iter_lower()
            .map(|(r, c, v)| (inv[r], inv[c], v))
            .collect();
        Self::from_triplets(self.n, &trip)
    }

    /// Whether two matrices share the same stored pattern.
    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.col_ptr == other.col_ptr && self.row_idx == other.row_idx
    }

    pub fn cast<U: Scalar>(&self) -> SparseSym<U> {
        SparseSym {
            n: self.n,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values: self
                .values
                .iter()
                .map(|v| U::of(v.to_f64_lossy()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_fold_into_lower_triangle() {
        let a = SparseSym::<f64>::from_triplets(
            3,
            &[(0, 1, 1.0), (1, 0, 2.0), (2, 2, 5.0), (0, 0, 1.0)],
        )
        .unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.diag(), vec![1.0, 0.0, 5.0]);
    }

    #[test]
    fn dense_copy_is_symmetric() {
        let a =
            SparseSym::<f64>::from_triplets(3, &[(2, 0, 4.0), (1, 1, 2.0), (0, 0, 1.0)]).unwrap();
        let d = a.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d[i * 3 + j], d[j * 3 + i]);
            }
        }
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]).unwrap(), vec![5.0, 2.0, 4.0]);
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = SparseSym::<f64>::from_triplets(2, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        let b = SparseSym::<f64>::identity(2);
        let c = a.add_scaled(2.0, &b, 3.0).unwrap();
        assert_eq!(c.to_dense(), vec![5.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn permute_round_trip() {
        let a = SparseSym::<f64>::from_triplets(
            3,
            &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0), (2, 0, 0.5)],
        )
        .unwrap();
        let p = a.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.get(0, 0), 3.0);
        assert_eq!(p.get(0, 1), 0.5);
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            SparseSym::<f64>::from_triplets(2, &[(2, 0, 1.0)]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(SparseSym::<f64>::from_triplets(0, &[]).is_err());
    }
}
