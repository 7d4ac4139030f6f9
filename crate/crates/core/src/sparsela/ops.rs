use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::sym::SparseSym;

/// `xᵀ A x` using the stored lower triangle.
pub fn quad_form<T: Scalar>(a: &SparseSym<T>, x: &[T]) -> Result<T> {
    if x.len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: x.len(),
        });
    }
    let two = T::one() + T::one();
    Ok(a.iter_lower()
        .map(|(r, c, v)| {
            if r == c {
                v * x[r] * x[r]
            } else {
                two * v * x[r] * x[c]
            }
        })
        .sum())
}

/// Kronecker product `A ⊗ B`. With `A` over time and `B` over space the
/// result uses time-major node indices `t·n_B + s`.
pub fn kron<T: Scalar>(a: &SparseSym<T>, b: &SparseSym<T>) -> SparseSym<T> {
    let nb = b.n();
    let full = |m: &SparseSym<T>| -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(2 * m.nnz());
        for (r, c, v) in m.iter_lower() {
            out.push((r, c, v));
            if r != c {
                out.push((c, r, v));
            }
        }
        out
    };
    let (fa, fb) = (full(a), full(b));
    let mut trip = Vec::with_capacity(a.nnz() * b.nnz() * 2);
    for &(i, j, va) in &fa {
        for &(k, l, vb) in &fb {
            let (r, c) = (i * nb + k, j * nb + l);
            if r >= c {
                trip.push((r, c, va * vb));
            }
        }
    }
    SparseSym::from_triplets(a.n() * nb, &trip).expect("kron indices are in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_form_identity() {
        let i3 = SparseSym::<f64>::identity(3);
        assert_eq!(quad_form(&i3, &[1.0, 2.0, 2.0]).unwrap(), 9.0);
        assert!(quad_form(&i3, &[1.0]).is_err());
    }

    #[test]
    fn kron_with_identity_is_block_diagonal() {
        let b =
            SparseSym::<f64>::from_triplets(2, &[(0, 0, 2.0), (1, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let k = kron(&SparseSym::identity(2), &b);
        let d = k.to_dense();
        let expect = [
            2.0, 1.0, 0.0, 0.0, //
            1.0, 2.0, 0.0, 0.0, //
            0.0, 0.0, 2.0, 1.0, //
            0.0, 0.0, 1.0, 2.0,
        ];
        assert_eq!(d, expect);
    }
}
