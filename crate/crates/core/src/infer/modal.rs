//! Likelihood and kriging in a spatial eigenbasis.
//!
//! When the latent field is a sum of independent stationary AR(1) chains
//! attached to orthonormal spatial modes, and the projection maps each fine
//! mode onto a single coarse mode, the aggregated data decouple into one
//! small temporal block per coarse mode. The fine Neumann DCT modes satisfy
//! this under uniform block averaging; the Besag baseline satisfies it with
//! its own eigenvectors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::operators::{NeumannAxis, NeumannSpectrum};

const LOG_2PI: f64 = 1.8378770664093453;

/// Fine spatial modes.
#[derive(Debug, Clone)]
pub enum FineModes {
    Dct(NeumannSpectrum),
    /// Row-major `n × n`, row `k` is mode `k`.
    Dense {
        n: usize,
        values: Vec<f64>,
    },
}

impl FineModes {
    pub fn n(&self) -> usize {
        match self {
            FineModes::Dct(s) => s.n_modes(),
            FineModes::Dense { n, .. } => *n,
        }
    }

    pub fn value(&self, mode: usize, node: usize) -> f64 {
        match self {
            FineModes::Dct(s) => s.value(mode, node),
            FineModes::Dense { n, values } => values[mode * n + node],
        }
    }

    /// `out[s] = Σ_k coef[k]·u_k(s)`.
    pub fn synthesize(&self, coef: &[f64]) -> Vec<f64> {
        match self {
            FineModes::Dct(s) => {
                let (nx, ny) = (s.x.n, s.y.n);
                let mut tmp = vec![0.0; ny * nx];
                for ky in 0..ny {
                    for kx in 0..nx {
                        let c = coef[ky * nx + kx];
                        if c == 0.0 {
                            continue;
                        }
                        let ux = s.x.mode(kx);
                        let row = &mut tmp[ky * nx..(ky + 1) * nx];
                        for ix in 0..nx {
                            row[ix] += c * ux[ix];
                        }
                    }
                }
                let mut out = vec![0.0; nx * ny];
                for ky in 0..ny {
                    let uy = s.y.mode(ky);
                    let row = &tmp[ky * nx..(ky + 1) * nx];
                    for iy in 0..ny {
                        let w = uy[iy];
                        let o = &mut out[iy * nx..(iy + 1) * nx];
                        for ix in 0..nx {
                            o[ix] += w * row[ix];
                        }
                    }
                }
                out
            }
            FineModes::Dense { n, values } => {
                let mut out = vec![0.0; *n];
                for (k, &c) in coef.iter().enumerate() {
                    if c != 0.0 {
                        for (o, &u) in out.iter_mut().zip(&values[k * n..(k + 1) * n]) {
                            *o += c * u;
                        }
                    }
                }
                out
            }
        }
    }
}

/// Fine modes, an orthonormal coarse basis, and the fine-to-coarse map.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub fine: FineModes,
    /// Row-major `n_c × n_c`: row `k̃` is coarse mode `k̃` over cells.
    pub coarse: Vec<f64>,
    pub n_coarse: usize,
    /// Coarse image of each fine mode: `A u_k = g·ũ_k̃`.
    pub map: Vec<Option<(usize, f64)>>,
    pub members: Vec<Vec<usize>>,
}

/// How block averaging by `s` acts on the `n`-point DCT modes: each fine
/// mode lands on at most one coarse mode.
pub fn axis_aggregation_map(
    n: usize,
    s: usize,
) -> Result<(NeumannAxis, Vec<Option<(usize, f64)>>)> {
    if s == 0 || n % s != 0 {
        return Err(Error::IndivisibleFactor {
            axis: "grid",
            factor: s,
            extent: n,
        });
    }
    let nc = n / s;
    let fine = NeumannAxis::new(n);
    let coarse = NeumannAxis::new(nc);
    let mut map = Vec::with_capacity(n);
    for k in 0..n {
        let u = fine.mode(k);
        let avg: Vec<f64> = (0..nc)
            .map(|c| u[c * s..(c + 1) * s].iter().sum::<f64>() / s as f64)
            .collect();
        let coef: Vec<f64> = (0..nc)
            .map(|kc| coarse.mode(kc).iter().zip(&avg).map(|(a, b)| a * b).sum())
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (kc, &c) in coef.iter().enumerate() {
            if c.abs() > 1e-10 {
                if best.is_some() {
                    return Err(Error::InvalidParameter(format!(
                        "fine mode {k} spreads over several coarse modes"
                    )));
                }
                best = Some((kc, c));
            }
        }
        map.push(best);
    }
    Ok((coarse, map))
}

impl ModalBasis {
    /// DCT basis of an `nx × ny` Neumann grid aggregated in `s × s` blocks.
    pub fn block_dct(nx: usize, ny: usize, dx: f64, dy: f64, s: usize) -> Result<Self> {
        let fine = NeumannSpectrum::new(nx, ny, dx, dy);
        let (cx, mx) = axis_aggregation_map(nx, s)?;
        let (cy, my) = axis_aggregation_map(ny, s)?;
        let (ncx, ncy) = (nx / s, ny / s);
        let n_coarse = ncx * ncy;
        let mut coarse = vec![0.0; n_coarse * n_coarse];
        for ky in 0..ncy {
            for kx in 0..ncx {
                let row = (ky * ncx + kx) * n_coarse;
                for iy in 0..ncy {
                    for ix in 0..ncx {
                        coarse[row + iy * ncx + ix] = cx.mode(kx)[ix] * cy.mode(ky)[iy];
                    }
                }
            }
        }
        let mut map = Vec::with_capacity(nx * ny);
        for ky in 0..ny {
            for kx in 0..nx {
                map.push(match (mx[kx], my[ky]) {
                    (Some((ax, gx)), Some((ay, gy))) => Some((ay * ncx + ax, gx * gy)),
                    _ => None,
                });
            }
        }
        Ok(Self::assemble(FineModes::Dct(fine), coarse, n_coarse, map))
    }

    /// Fine and coarse resolutions coincide; `basis` is row-major, one mode per row.
    pub fn identity_map(n: usize, basis: Vec<f64>) -> Self {
        let map = (0..n).map(|k| Some((k, 1.0))).collect();
        Self::assemble(
            FineModes::Dense {
                n,
                values: basis.clone(),
            },
            basis,
            n,
            map,
        )
    }

    fn assemble(
        fine: FineModes,
        coarse: Vec<f64>,
        n_coarse: usize,
        map: Vec<Option<(usize, f64)>>,
    ) -> Self {
        let mut members = vec![Vec::new(); n_coarse];
        for (k, m) in map.iter().enumerate() {
            if let Some((kc, _)) = m {
                members[*kc].push(k);
            }
        }
        Self {
            fine,
            coarse,
            n_coarse,
            map,
            members,
        }
    }

    pub fn n_fine(&self) -> usize {
        self.fine.n()
    }
}

/// Stationary variance and lag-one coefficient of every fine mode's chain.
#[derive(Debug, Clone)]
pub struct ModeParams {
    pub var: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Covariance of window means (length `t_f`) of a unit-variance AR(1) chain at window lag `lag`.
pub fn window_covariance(phi: f64, t_f: usize, lag: usize) -> f64 {
    let mut acc = 0.0;
    for a in 0..t_f {
        for b in 0..t_f {
            let d = (lag * t_f + b) as i64 - a as i64;
            acc += phi.powi(d.unsigned_abs() as i32);
        }
    }
    acc / (t_f * t_f) as f64
}

/// Covariance between the chain at step `t` and the mean over window `j`.
pub fn point_window_covariance(phi: f64, t_f: usize, t: usize, j: usize) -> f64 {
    (j * t_f..(j + 1) * t_f)
        .map(|q| phi.powi(t.abs_diff(q) as i32))
        .sum::<f64>()
        / t_f as f64
}

/// Posterior summary returned by an engine.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub beta_mean: Vec<f64>,
    /// Row-major `p × p`.
    pub beta_cov: Vec<f64>,
    /// Mean of `xᵀβ + z` at the prediction nodes.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

struct Factored {
    chol: Vec<Cholesky<f64, Dyn>>,
    ly: Vec<DVector<f64>>,
    lx: Vec<DMatrix<f64>>,
    logdet: f64,
    quad: f64,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

/// Engine over complete data on a block-aggregated lattice.
#[derive(Debug, Clone)]
pub struct ModalEngine {
    pub basis: ModalBasis,
    pub nt: usize,
    pub t_f: usize,
    ntc: usize,
    p: usize,
    eps: f64,
    y_t: Vec<DVector<f64>>,
    x_t: Vec<DMatrix<f64>>,
    n_obs: usize,
}

impl ModalEngine {
    /// `y` holds one value per cell, time-major (`window·n_c + cell`);
    /// `x` is the matching row-major design with `p` columns.
    pub fn new(
        basis: ModalBasis,
        nt: usize,
        t_f: usize,
        y: &[f64],
        x: &[f64],
        p: usize,
        eps: f64,
    ) -> Result<Self> {
        if t_f == 0 || nt % t_f != 0 {
            return Err(Error::IndivisibleFactor {
                axis: "t",
                factor: t_f,
                extent: nt,
            });
        }
        let nc = basis.n_coarse;
        let ntc = nt / t_f;
        if y.len() != nc * ntc {
            return Err(Error::DimensionMismatch {
                expected: nc * ntc,
                found: y.len(),
            });
        }
        if x.len() != y.len() * p {
            return Err(Error::DimensionMismatch {
                expected: y.len() * p,
                found: x.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "modal engine needs complete, finite data".into(),
            ));
        }
        let mut y_t = vec![DVector::zeros(ntc); nc];
        let mut x_t = vec![DMatrix::zeros(ntc, p); nc];
        for j in 0..ntc {
            for kc in 0..nc {
                let row = &basis.coarse[kc * nc..(kc + 1) * nc];
                let mut acc = 0.0;
                let mut accx = vec![0.0; p];
                for c in 0..nc {
                    let w = row[c];
                    let r = j * nc + c;
                    acc += w * y[r];
                    for q in 0..p {
                        accx[q] += w * x[r * p + q];
                    }
                }
                y_t[kc][j] = acc;
                for q in 0..p {
                    x_t[kc][(j, q)] = accx[q];
                }
            }
        }
        Ok(Self {
            basis,
            nt,
            t_f,
            ntc,
            p,
            eps,
            y_t,
            x_t,
            n_obs: y.len(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    fn check_params(&self, params: &ModeParams) -> Result<()> {
        let n = self.basis.n_fine();
        if params.var.len() != n || params.phi.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: params.var.len().min(params.phi.len()),
            });
        }
        Ok(())
    }

    /// Noise-free covariance of the window means of coarse mode `kc`.
    fn block_covariance(&self, kc: usize, params: &ModeParams) -> DMatrix<f64> {
        let ntc = self.ntc;
        let mut c = DMatrix::zeros(ntc, ntc);
        let mut lag_cov = vec![0.0; ntc];
        let mut cached_phi = f64::NAN;
        for &k in &self.basis.members[kc] {
            let (_, g) = self.basis.map[k].expect("members are mapped");
            let w = g * g * params.var[k];
            if w == 0.0 {
                continue;
            }
            let phi = params.phi[k];
            if phi != cached_phi {
                for (l, v) in lag_cov.iter_mut().enumerate() {
                    *v = window_covariance(phi, self.t_f, l);
                }
                cached_phi = phi;
            }
            for i in 0..ntc {
                for j in 0..ntc {
                    c[(i, j)] += w * lag_cov[i.abs_diff(j)];
                }
            }
        }
        c
    }

    fn factor(&self, params: &ModeParams, tau: f64) -> Result<Factored> {
        self.check_params(params)?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise precision must be positive, got {tau}"
            )));
        }
        let nc = self.basis.n_coarse;
        let p = self.p;
        let mut chol = Vec::with_capacity(nc);
        let mut ly = Vec::with_capacity(nc);
        let mut lx = Vec::with_capacity(nc);
        let mut logdet = 0.0;
        let mut quad = 0.0;
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = DVector::<f64>::zeros(p);
        for kc in 0..nc {
            let mut c = self.block_covariance(kc, params);
            for i in 0..self.ntc {
                c[(i, i)] += 1.0 / tau;
            }
            let ch = Cholesky::new(c).ok_or(Error::NonFiniteLikelihood)?;
            let l = ch.l_dirty();
            logdet += 2.0 * (0..self.ntc).map(|i| l[(i, i)].ln()).sum::<f64>();
            let mut yk = self.y_t[kc].clone();
            l.solve_lower_triangular_mut(&mut yk);
            let mut xk = self.x_t[kc].clone();
            l.solve_lower_triangular_mut(&mut xk);
            quad += yk.norm_squared();
            a += xk.transpose() * &xk;
            b += xk.transpose() * &yk;
            chol.push(ch);
            ly.push(yk);
            lx.push(xk);
        }
        for i in 0..p {
            a[(i, i)] += self.eps;
        }
        Ok(Factored {
            chol,
            ly,
            lx,
            logdet,
            quad,
            a,
            b,
        })
    }

    /// Log density of the data with β integrated against N(0, ε⁻¹I).
    pub fn log_marginal(&self, params: &ModeParams, tau: f64) -> Result<f64> {
        let f = self.factor(params, tau)?;
        let p = self.p;
        let (logdet_a, bab) = if p > 0 {
            let ca = Cholesky::new(f.a.clone()).ok_or(Error::NonFiniteLikelihood)?;
            let la = ca.l_dirty();
            let ld = 2.0 * (0..p).map(|i| la[(i, i)].ln()).sum::<f64>();
            let mut z = f.b.clone();
            la.solve_lower_triangular_mut(&mut z);
            (ld, z.norm_squared())
        } else {
            (0.0, 0.0)
        };
        let n = self.n_obs as f64;
        let lp =
            -0.5 * (n * LOG_2PI + f.logdet + logdet_a - p as f64 * self.eps.ln() + f.quad - bab);
        if !lp.is_finite() {
            return Err(Error::NonFiniteLikelihood);
        }
        Ok(lp)
    }

    /// Posterior of `xᵀβ + z` at every fine node (time-major, `t·n_s + s`),
    /// with `x_pred` the row-major fine design.
    pub fn posterior(
        &self,
        params: &ModeParams,
        tau: f64,
        x_pred: &[f64],
        want_var: bool,
    ) -> Result<Posterior> {
        let f = self.factor(params, tau)?;
        let p = self.p;
        let ns = self.basis.fine.n();
        let nt = self.nt;
        if x_pred.len() != ns * nt * p {
            return Err(Error::DimensionMismatch {
                expected: ns * nt * p,
                found: x_pred.len(),
            });
        }
        let ca = Cholesky::new(f.a.clone()).ok_or(Error::NonFiniteLikelihood)?;
        let beta = ca.solve(&f.b);
        let a_inv = ca.inverse();

        // α_k̃ = C⁻¹(ỹ − X̃β̂)
        let alpha: Vec<DVector<f64>> = (0..self.basis.n_coarse)
            .map(|kc| {
                let r = &f.ly[kc] - &f.lx[kc] * &beta;
                f.chol[kc]
                    .l_dirty()
                    .tr_solve_lower_triangular(&r)
                    .expect("triangular solve")
            })
            .collect();

        let nf = self.basis.n_fine();
        let mut mean = vec![0.0; ns * nt];
        let mut coef = vec![0.0; nf];
        for t in 0..nt {
            for k in 0..nf {
                coef[k] = match self.basis.map[k] {
                    Some((kc, g)) if params.var[k] != 0.0 => {
                        let s: f64 = (0..self.ntc)
                            .map(|j| {
                                point_window_covariance(params.phi[k], self.t_f, t, j)
                                    * alpha[kc][j]
                            })
                            .sum();
                        g * params.var[k] * s
                    }
                    _ => 0.0,
                };
            }
            let z = self.basis.fine.synthesize(&coef);
            for s in 0..ns {
                let n = t * ns + s;
                let xb: f64 = (0..p).map(|q| x_pred[n * p + q] * beta[q]).sum();
                mean[n] = xb + z[s];
            }
        }

        let var = if want_var {
            self.posterior_variance(params, &f, &a_inv, x_pred)
        } else {
            vec![f64::NAN; ns * nt]
        };
        Ok(Posterior {
            beta_mean: beta.iter().copied().collect(),
            beta_cov: (0..p)
                .flat_map(|i| (0..p).map(move |j| (i, j)))
                .map(|(i, j)| a_inv[(i, j)])
                .collect(),
            mean,
            var,
        })
    }

    fn posterior_variance(
        &self,
        params: &ModeParams,
        f: &Factored,
        a_inv: &DMatrix<f64>,
        x_pred: &[f64],
    ) -> Vec<f64> {
        let p = self.p;
        let ns = self.basis.fine.n();
        let nt = self.nt;
        let ntc = self.ntc;
        let nf = self.basis.n_fine();

        let prior: Vec<f64> = (0..ns)
            .map(|s| {
                (0..nf)
                    .map(|k| self.basis.fine.value(k, s).powi(2) * params.var[k])
                    .sum()
            })
            .collect();
        // fine mode values, mode-major, for the member gathers below
        let uvals: Vec<f64> = (0..nf)
            .flat_map(|k| (0..ns).map(move |s| (k, s)))
            .map(|(k, s)| self.basis.fine.value(k, s))
            .collect();

        let mut var = vec![0.0; ns * nt];
        let mut ccc = vec![0.0; ns];
        let mut xcc = vec![0.0; ns * p];
        let mut r = vec![0.0; ns * ntc];
        for t in 0..nt {
            ccc.iter_mut().for_each(|v| *v = 0.0);
            xcc.iter_mut().for_each(|v| *v = 0.0);
            for kc in 0..self.basis.n_coarse {
                let members = &self.basis.members[kc];
                if members.is_empty() {
                    continue;
                }
                let l = f.chol[kc].l_dirty();
                r.iter_mut().for_each(|v| *v = 0.0);
                for &k in members {
                    if params.var[k] == 0.0 {
                        continue;
                    }
                    let (_, g) = self.basis.map[k].expect("members are mapped");
                    let mut h = DVector::from_iterator(
                        ntc,
                        (0..ntc).map(|j| {
                            g * params.var[k]
                                * point_window_covariance(params.phi[k], self.t_f, t, j)
                        }),
                    );
                    l.solve_lower_triangular_mut(&mut h);
                    let u = &uvals[k * ns..(k + 1) * ns];
                    for s in 0..ns {
                        let us = u[s];
                        if us == 0.0 {
                            continue;
                        }
                        let rs = &mut r[s * ntc..(s + 1) * ntc];
                        for j in 0..ntc {
                            rs[j] += us * h[j];
                        }
                    }
                }
                let lx = &f.lx[kc];
                for s in 0..ns {
                    let rs = &r[s * ntc..(s + 1) * ntc];
                    ccc[s] += rs.iter().map(|v| v * v).sum::<f64>();
                    for q in 0..p {
                        let mut acc = 0.0;
                        for j in 0..ntc {
                            acc += lx[(j, q)] * rs[j];
                        }
                        xcc[s * p + q] += acc;
                    }
                }
            }
            for s in 0..ns {
                let n = t * ns + s;
                let d: Vec<f64> = (0..p).map(|q| x_pred[n * p + q] - xcc[s * p + q]).collect();
                let mut dad = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        dad += d[i] * a_inv[(i, j)] * d[j];
                    }
                }
                var[n] = (prior[s] - ccc[s] + dad).max(0.0);
            }
        }
        var
    }
}
