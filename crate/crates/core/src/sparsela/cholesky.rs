//! Up-looking sparse Cholesky with a reusable symbolic analysis.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ordering::{compute_ordering, OrderingChoice};
use super::sym::SparseSym;

const NONE: usize = usize::MAX;

/// Ordering, elimination tree and column structure of `L` for one sparsity
/// pattern. Numeric factorizations of any matrix with that pattern reuse it.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    inv: Vec<usize>,
    parent: Vec<usize>,
    l_col_ptr: Vec<usize>,
    // upper triangle of P A Pᵀ, column compressed
    c_col_ptr: Vec<usize>,
    c_row_idx: Vec<usize>,
    // position in the C arrays of each stored entry of the input
    value_map: Vec<usize>,
    a_col_ptr: Vec<usize>,
    a_row_idx: Vec<usize>,
}

impl SymbolicCholesky {
    pub fn analyze<T: Scalar>(a: &SparseSym<T>, ordering: OrderingChoice) -> Self {
        let n = a.n();
        let perm = compute_ordering(&a.adjacency(), ordering);
        let mut inv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }

        // Entries of A land in column max(inv[r], inv[c]) of the permuted upper triangle.
        let mut counts = vec![0usize; n + 1];
        for (r, c, _) in a.iter_lower() {
            counts[inv[r].max(inv[c]) + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let c_col_ptr = counts.clone();
        let mut next = counts;
        let mut c_row_idx = vec![0usize; a.nnz()];
        let mut value_map = vec![0usize; a.nnz()];
        for (idx, (r, c, _)) in a.iter_lower().enumerate() {
            let (i, j) = (inv[r], inv[c]);
            let (row, col) = if i <= j { (i, j) } else { (j, i) };
            let pos = next[col];
            next[col] += 1;
            c_row_idx[pos] = row;
            value_map[idx] = pos;
        }

        let parent = etree(n, &c_col_ptr, &c_row_idx);

        // Column counts of L from the row patterns given by ereach.
        let mut col_count = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for k in 0..n {
            let top = ereach(k, &c_col_ptr, &c_row_idx, &parent, &mut stack, &mut flag);
            for &i in &stack[top..n] {
                col_count[i] += 1;
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_col_ptr[k + 1] = l_col_ptr[k] + col_count[k];
        }

        Self {
            n,
            perm,
            inv,
            parent,
            l_col_ptr,
            c_col_ptr,
            c_row_idx,
            value_map,
            a_col_ptr: a.col_ptr().to_vec(),
            a_row_idx: a.row_idx().to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `perm[k]` is the original index of the k-th pivot.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }

    pub fn elimination_tree(&self) -> &[usize] {
        &self.parent
    }

    fn matches(&self, a: &SparseSym<impl Scalar>) -> bool {
        a.n() == self.n
            && a.col_ptr() == self.a_col_ptr.as_slice()
            && a.row_idx() == self.a_row_idx.as_slice()
    }

    /// Numeric factorization of a matrix with the analysed pattern.
    pub fn factorize<T: Scalar>(self: &Arc<Self>, a: &SparseSym<T>) -> Result<CholFactor<T>> {
        if a.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: a.n(),
            });
        }
        if !self.matches(a) {
            return Err(Error::InvalidParameter(
                "matrix pattern differs from the analysed pattern".into(),
            ));
        }
        let n = self.n;
        let mut cx = vec![T::zero(); a.nnz()];
        for (idx, &v) in a.values().iter().enumerate() {
            cx[self.value_map[idx]] = v;
        }
        let max_diag = a.diag().into_iter().fold(T::zero(), |m, d| m.max(d.abs()));
        let tol = T::pivot_tolerance() * max_diag;

        let nnz = self.factor_nnz();
        let mut li = vec![0usize; nnz];
        let mut lx = vec![T::zero(); nnz];
        let mut next: Vec<usize> = self.l_col_ptr[..n].to_vec();
        let mut x = vec![T::zero(); n];
        let mut stack = vec![0usize; n];
        let mut flag = vec![NONE; n];

        for k in 0..n {
            let top = ereach(
                k,
                &self.c_col_ptr,
                &self.c_row_idx,
                &self.parent,
                &mut stack,
                &mut flag,
            );
            for p in self.c_col_ptr[k]..self.c_col_ptr[k + 1] {
                x[self.c_row_idx[p]] = cx[p];
            }
            let mut d = x[k];
            x[k] = T::zero();
            for &i in &stack[top..n] {
                let lki = x[i] / lx[self.l_col_ptr[i]];
                x[i] = T::zero();
                for p in self.l_col_ptr[i] + 1..next[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k;
                lx[p] = lki;
            }
            if !(d > tol) {
                return Err(Error::NotPositiveDefinite {
                    pivot: self.perm[k],
                });
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }

        Ok(CholFactor {
            symbolic: Arc::clone(self),
            row_idx: li,
            values: lx,
        })
    }
}

fn etree(n: usize, cp: &[usize], ci: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &i0 in &ci[cp[k]..cp[k + 1]] {
            let mut i = i0;
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row k of L, returned in `stack[top..n]` in topological order.
fn ereach(
    k: usize,
    cp: &[usize],
    ci: &[usize],
    parent: &[usize],
    stack: &mut [usize],
    flag: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    flag[k] = k;
    for &i0 in &ci[cp[k]..cp[k + 1]] {
        if i0 > k {
            continue;
        }
        let mut i = i0;
        let mut len = 0;
        while flag[i] != k {
            stack[len] = i;
            len += 1;
            flag[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

/// Numeric Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct CholFactor<T> {
    symbolic: Arc<SymbolicCholesky>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CholFactor<T> {
    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn permutation(&self) -> &[usize] {
        &self.symbolic.perm
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `L` as lower-triangle triplets in the permuted index space.
    pub fn l_entries(&self) -> Vec<(usize, usize, T)> {
        let s = &self.symbolic;
        (0..s.n)
            .flat_map(|j| (s.l_col_ptr[j]..s.l_col_ptr[j + 1]).map(move |p| (p, j)))
            .map(|(p, j)| (self.row_idx[p], j, self.values[p]))
            .collect()
    }

    pub fn diag_l(&self) -> Vec<T> {
        let s = &self.symbolic;
        (0..s.n).map(|j| self.values[s.l_col_ptr[j]]).collect()
    }

    pub fn logdet(&self) -> T {
        let two = T::one() + T::one();
        two * self.diag_l().into_iter().map(|d| d.ln()).sum::<T>()
    }

    /// Forward substitution `L y = b` in the permuted space (in place).
    pub fn solve_l_in_place(&self, y: &mut [T]) {
        self.solve_l_from(y, 0);
    }

    // Entries before `start` must be zero.
    fn solve_l_from(&self, y: &mut [T], start: usize) {
        let s = &self.symbolic;
        for j in start..s.n {
            let p0 = s.l_col_ptr[j];
            y[j] /= self.values[p0];
            let yj = y[j];
            for p in p0 + 1..s.l_col_ptr[j + 1] {
                y[self.row_idx[p]] -= self.values[p] * yj;
            }
        }
    }

    /// Back substitution `Lᵀ x = y` in the permuted space (in place).
    pub fn solve_lt_in_place(&self, y: &mut [T]) {
        let s = &self.symbolic;
        for j in (0..s.n).rev() {
            let p0 = s.l_col_ptr[j];
            let mut acc = y[j];
            for p in p0 + 1..s.l_col_ptr[j + 1] {
                acc -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = acc / self.values[p0];
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let s = &self.symbolic;
        if b.len() != s.n {
            return Err(Error::DimensionMismatch {
                expected: s.n,
                found: b.len(),
            });
        }
        let mut y: Vec<T> = s.perm.iter().map(|&i| b[i]).collect();
        self.solve_l_in_place(&mut y);
        self.solve_lt_in_place(&mut y);
        let mut x = vec![T::zero(); s.n];
        for (k, &i) in s.perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    /// `‖L⁻¹ P b‖²` = `bᵀ A⁻¹ b`.
    pub fn inv_quad_form(&self, b: &[T]) -> Result<T> {
        let s = &self.symbolic;
        if b.len() != s.n {
            return Err(Error::DimensionMismatch {
                expected: s.n,
                found: b.len(),
            });
        }
        let mut y: Vec<T> = s.perm.iter().map(|&i| b[i]).collect();
        self.solve_l_in_place(&mut y);
        Ok(y.iter().map(|&v| v * v).sum())
    }

    /// Map a standard normal vector `z` to a draw from N(0, A⁻¹).
    pub fn transform_standard_normal(&self, z: &[T]) -> Result<Vec<T>> {
        let s = &self.symbolic;
        if z.len() != s.n {
            return Err(Error::DimensionMismatch {
                expected: s.n,
                found: z.len(),
            });
        }
        let mut y = z.to_vec();
        self.solve_lt_in_place(&mut y);
        let mut x = vec![T::zero(); s.n];
        for (k, &i) in s.perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    /// Draw from N(0, A⁻¹) with a ChaCha8 stream; identical seeds give
    /// bit-identical draws.
    pub fn sample(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let z: Vec<T> = (0..self.n())
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                T::of(v)
            })
            .collect();
        self.transform_standard_normal(&z).expect("length matches")
    }

    /// Diagonal of A⁻¹ at the requested nodes, one solve per node.
    pub fn inverse_diagonal_at(&self, nodes: &[usize]) -> Result<Vec<T>> {
        let s = &self.symbolic;
        let mut out = Vec::with_capacity(nodes.len());
        let mut y = vec![T::zero(); s.n];
        for &i in nodes {
            if i >= s.n {
                return Err(Error::IndexOutOfRange { index: i, len: s.n });
            }
            y.iter_mut().for_each(|v| *v = T::zero());
            y[s.inv[i]] = T::one();
            // e_iᵀ A⁻¹ e_i = ‖L⁻¹ P e_i‖²
            self.solve_l_from(&mut y, s.inv[i]);
            out.push(y.iter().map(|&v| v * v).sum());
        }
        Ok(out)
    }
}

/// Analyse and factorize in one step.
pub fn factorize<T: Scalar>(a: &SparseSym<T>, ordering: OrderingChoice) -> Result<CholFactor<T>> {
    Arc::new(SymbolicCholesky::analyze(a, ordering)).factorize(a)
}

/// Draw x ~ N(0, A⁻¹) from a factor.
pub fn sample_gmrf<T: Scalar>(f: &CholFactor<T>, seed: u64) -> Vec<T> {
    f.sample(seed)
}
