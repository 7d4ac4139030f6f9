//! Box-constrained Nelder–Mead and finite-difference Hessians.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Smallest curvature allowed when inverting a Hessian.
pub const MIN_CURVATURE: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop once the spread of objective values across the simplex falls below this.
    pub ftol: f64,
    pub initial_step: f64,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            ftol: 1e-5,
            initial_step: 0.5,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub evaluations: usize,
    pub best: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

fn clamp(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Minimise `f` over the box `[lower, upper]`. Non-finite values count as +∞.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut start = x0.to_vec();
    clamp(&mut start, lower, upper);
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut best_x = start.clone();
    let mut best_f = eval(&start, &mut evals);
    let mut converged = false;

    for round in 0..=opts.restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best_x.clone(), best_f)];
        for i in 0..n {
            let mut x = best_x.clone();
            let step = opts.initial_step / (1 + round) as f64;
            x[i] += if x[i] + step <= upper[i] { step } else { -step };
            clamp(&mut x, lower, upper);
            let fx = eval(&x, &mut evals);
            simplex.push((x, fx));
        }
        converged = false;
        while iterations < opts.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            if spread.is_finite() && spread.abs() < opts.ftol {
                converged = true;
                break;
            }
            iterations += 1;
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| {
                let mut x: Vec<f64> = (0..n)
                    .map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j]))
                    .collect();
                clamp(&mut x, lower, upper);
                x
            };
            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let x = along(-0.5);
                    let v = eval(&x, &mut evals);
                    (x, v)
                } else {
                    let x = along(0.5);
                    let v = eval(&x, &mut evals);
                    (x, v)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for (x, fx) in simplex.iter_mut().skip(1) {
                        for j in 0..n {
                            x[j] = x0[j] + 0.5 * (x[j] - x0[j]);
                        }
                        *fx = eval(x, &mut evals);
                    }
                }
            }
            let b = simplex
                .iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty simplex");
            trace.push(TraceEntry {
                iteration: iterations,
                evaluations: evals,
                best: b.1,
                x: b.0.clone(),
            });
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best_f - opts.ftol;
        if simplex[0].1 <= best_f {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        if !converged || (round > 0 && !improved) {
            break;
        }
    }
    NelderMeadResult {
        x: best_x,
        f: best_f,
        iterations,
        evaluations: evals,
        converged,
        trace,
    }
}

/// Central-difference Hessian with step `h` in every coordinate.
/// `f0` is `f(x)`. Returns a row-major `n × n` matrix.
pub fn fd_hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], f0: f64, h: f64) -> Vec<f64> {
    let n = x.len();
    let mut hess = vec![0.0; n * n];
    let shifted = |di: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, d) in di {
            y[i] += d;
        }
        y
    };
    for i in 0..n {
        let fp = f(&shifted(&[(i, h)]));
        let fm = f(&shifted(&[(i, -h)]));
        hess[i * n + i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let fpp = f(&shifted(&[(i, h), (j, h)]));
            let fpm = f(&shifted(&[(i, h), (j, -h)]));
            let fmp = f(&shifted(&[(i, -h), (j, h)]));
            let fmm = f(&shifted(&[(i, -h), (j, -h)]));
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[i * n + j] = v;
            hess[j * n + i] = v;
        }
    }
    hess
}

/// Inverse of a row-major `n × n` Hessian with eigenvalues floored at
/// [`MIN_CURVATURE`]; the flag reports whether it was positive definite.
pub fn laplace_covariance(h: &[f64], n: usize) -> (Vec<f64>, bool) {
    let m = DMatrix::from_fn(n, n, |i, j| {
        if h[i * n + j].is_finite() {
            h[i * n + j]
        } else {
            0.0
        }
    });
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let pd = eig.eigenvalues.iter().all(|&l| l > 0.0) && h.iter().all(|v| v.is_finite());
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(MIN_CURVATURE));
    let cov = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
    ((0..n * n).map(|k| cov[(k / n, k % n)]).collect(), pd)
}
