mod common;

use common::{ar1_precision, dense, dense_kron, path_laplacian, random_spd};
use nalgebra::DMatrix;
use proptest::prelude::*;
use stdisagg::sparsela::{factorize, kron, quad_form, sample_gmrf, OrderingChoice, SparseSym};
use stdisagg::Error;

fn reconstruct(f: &stdisagg::CholFactorF64) -> DMatrix<f64> {
    let n = f.n();
    let mut l = DMatrix::zeros(n, n);
    for (r, c, v) in f.l_entries() {
        l[(r, c)] = v;
    }
    let llt = &l * l.transpose();
    let p = f.permutation();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(p[i], p[j])] = llt[(i, j)];
        }
    }
    out
}

#[test]
fn factor_reconstructs_random_spd() {
    for seed in 0..5 {
        let a = random_spd(60, 0.08, seed);
        let f = factorize(&a, OrderingChoice::Amd).unwrap();
        let d = dense(&a);
        let rel = (reconstruct(&f) - &d).abs().max() / d.abs().max();
        assert!(rel < 1e-10, "relative reconstruction error {rel}");
        assert!(f.diag_l().iter().all(|&v| v > 0.0));
    }
}

#[test]
fn solve_matches_dense_oracle() {
    let a = random_spd(50, 0.1, 42);
    let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
    let x = factorize(&a, OrderingChoice::Amd)
        .unwrap()
        .solve(&b)
        .unwrap();
    let xd = dense(&a)
        .lu()
        .solve(&nalgebra::DVector::from_vec(b.clone()))
        .unwrap();
    let diff = x
        .iter()
        .zip(xd.iter())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-9, "max abs diff {diff}");
    let r = a.matvec(&x).unwrap();
    let res = r
        .iter()
        .zip(&b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    assert!(res / b.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-8);
}

#[test]
fn logdet_matches_dense_oracle() {
    let a = random_spd(40, 0.15, 3);
    let f = factorize(&a, OrderingChoice::Amd).unwrap();
    let oracle = dense(&a).determinant().ln();
    assert!((f.logdet() - oracle).abs() < 1e-9);
}

#[test]
fn natural_and_amd_agree() {
    let a = random_spd(30, 0.2, 9);
    let b: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let f1 = factorize(&a, OrderingChoice::Amd).unwrap();
    let f2 = factorize(&a, OrderingChoice::Natural).unwrap();
    assert!((f1.logdet() - f2.logdet()).abs() < 1e-10);
    let (x1, x2) = (f1.solve(&b).unwrap(), f2.solve(&b).unwrap());
    assert!(x1.iter().zip(&x2).all(|(p, q)| (p - q).abs() < 1e-10));
}

#[test]
fn dimension_mismatch_is_reported() {
    let f = factorize(&SparseSym::<f64>::identity(3), OrderingChoice::Amd).unwrap();
    assert!(matches!(
        f.solve(&[1.0]),
        Err(Error::DimensionMismatch {
            expected: 3,
            found: 1
        })
    ));
}

#[test]
fn intrinsic_model_is_not_positive_definite() {
    let q = path_laplacian(5);
    assert!(matches!(
        factorize(&q, OrderingChoice::Amd),
        Err(Error::NotPositiveDefinite { .. })
    ));
}

#[test]
fn amd_limits_fill_on_a_grid_stack() {
    // 3-D lattice with 7-point connectivity: minimum degree must beat the
    // natural (banded) order by a clear margin.
    let (nx, ny, nz) = (12, 12, 8);
    let idx = |x: usize, y: usize, z: usize| (z * ny + y) * nx + x;
    let mut trip = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = idx(x, y, z);
                trip.push((i, i, 7.0));
                if x > 0 {
                    trip.push((i, idx(x - 1, y, z), -1.0));
                }
                if y > 0 {
                    trip.push((i, idx(x, y - 1, z), -1.0));
                }
                if z > 0 {
                    trip.push((i, idx(x, y, z - 1), -1.0));
                }
            }
        }
    }
    let a = SparseSym::from_triplets(nx * ny * nz, &trip).unwrap();
    let amd = factorize(&a, OrderingChoice::Amd).unwrap().nnz();
    let nat = factorize(&a, OrderingChoice::Natural).unwrap().nnz();
    assert!(
        (amd as f64) < 0.6 * nat as f64,
        "amd {amd} vs natural {nat}"
    );
}

fn empirical_cov(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let n = samples[0].len();
    let m = samples.len() as f64;
    let mut c = DMatrix::zeros(n, n);
    for s in samples {
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] += s[i] * s[j] / m;
            }
        }
    }
    c
}

#[test]
fn identity_samples_have_unit_variance() {
    let f = factorize(&SparseSym::<f64>::identity(2), OrderingChoice::Amd).unwrap();
    let draws: Vec<_> = (0..20_000).map(|s| sample_gmrf(&f, s)).collect();
    let c = empirical_cov(&draws);
    assert!((c[(0, 0)] - 1.0).abs() < 0.03 && (c[(1, 1)] - 1.0).abs() < 0.03);
}

#[test]
fn sample_covariance_matches_inverse() {
    let cases = vec![
        SparseSym::from_triplets(2, &[(0, 0, 2.0), (1, 0, 1.0), (1, 1, 2.0)]).unwrap(),
        random_spd(4, 0.7, 5),
        ar1_precision(4, 0.6),
    ];
    for q in cases {
        let f = factorize(&q, OrderingChoice::Amd).unwrap();
        let draws: Vec<_> = (0..20_000).map(|s| f.sample(1000 + s)).collect();
        let c = empirical_cov(&draws);
        let sigma = dense(&q).try_inverse().unwrap();
        let m = draws.len() as f64;
        for i in 0..q.n() {
            for j in 0..q.n() {
                // s.e. of a Gaussian sample covariance entry
                let se = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / m).sqrt();
                assert!(
                    (c[(i, j)] - sigma[(i, j)]).abs() < 3.0 * se,
                    "entry ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn kron_of_ar1_and_besag_matches_dense() {
    let a = ar1_precision(3, 0.5);
    let b = path_laplacian(4);
    let k = kron(&a, &b);
    let expect = dense_kron(&dense(&a), &dense(&b));
    assert_eq!(dense(&k), expect);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kron_logdet_identity(na in 1usize..12, nb in 1usize..12, sa in 0u64..1000, sb in 0u64..1000) {
        let a = random_spd(na, 0.3, sa);
        let b = random_spd(nb, 0.3, sb);
        let la = factorize(&a, OrderingChoice::Amd).unwrap().logdet();
        let lb = factorize(&b, OrderingChoice::Amd).unwrap().logdet();
        let lk = factorize(&kron(&a, &b), OrderingChoice::Amd).unwrap().logdet();
        let expect = nb as f64 * la + na as f64 * lb;
        prop_assert!((lk - expect).abs() < 1e-8 * expect.abs().max(1.0));
    }

    #[test]
    fn solve_is_inverse(n in 1usize..40, seed in 0u64..10_000) {
        let a = random_spd(n, 0.2, seed);
        let b: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).sqrt()).collect();
        let x = factorize(&a, OrderingChoice::Amd).unwrap().solve(&b).unwrap();
        let r = a.matvec(&x).unwrap();
        for (p, q) in r.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-8 * q.abs().max(1.0));
        }
    }

    #[test]
    fn stored_matrix_is_symmetric(n in 1usize..20, seed in 0u64..1000) {
        let a = random_spd(n, 0.3, seed);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
    }

    #[test]
    fn quad_form_is_non_negative(n in 1usize..20, seed in 0u64..1000, x in proptest::collection::vec(-5.0f64..5.0, 20)) {
        let a = random_spd(n, 0.3, seed);
        prop_assert!(quad_form(&a, &x[..n]).unwrap() >= 0.0);
    }
}
