//! Dense semidefinite programming in linear-matrix-inequality form:
//! minimize `c.x` subject to `F0 + sum_k x_k F_k >= 0` per block and
//! `A x = b`, over free real variables `x` with Hermitian block data.
//!
//! Equality constraints are eliminated exactly up front (least squares plus
//! nullspace parametrization), which is also where an inconsistent
//! charge-representability constraint surfaces as an infeasibility
//! certificate. The cone problem itself runs through a homogeneous
//! self-dual primal-dual interior-point iteration with Nesterov-Todd
//! scaling and a dense Cholesky solve of the Schur complement; complex
//! Hermitian blocks are embedded as real symmetric blocks of doubled
//! dimension so the core stays in real arithmetic.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::spectral::{self, Operator};
use crate::tol::{ITER_MAX, SDP_TOL, STRUCT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("block {block}: matrix {index} is not hermitian (residual {residual:.3e})")]
    NotHermitian {
        block: usize,
        index: usize,
        residual: f64,
    },
    #[error("block {block}: matrix {index} is {rows}x{cols}, expected {dim}x{dim}")]
    BlockShape {
        block: usize,
        index: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("block {block} supplies {found} coefficient matrices for {vars} variables")]
    CoefficientCount {
        block: usize,
        found: usize,
        vars: usize,
    },
    #[error("equality row {row} has {found} coefficients for {vars} variables")]
    EqualityShape { row: usize, found: usize, vars: usize },
    #[error("problem must have at least one variable and one block")]
    Empty,
    #[error("linear algebra failure in solver: {0}")]
    Numerical(&'static str),
}

type Result<T> = std::result::Result<T, SdpError>;

/// One PSD constraint `F0 + sum_k x_k F_k >= 0`.
#[derive(Debug, Clone)]
pub struct SdpBlock {
    pub dim: usize,
    pub f0: Operator,
    pub coeffs: Vec<Operator>,
}

/// A semidefinite program over free real variables.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub objective: Vec<f64>,
    pub blocks: Vec<SdpBlock>,
    /// Rows of the equality system `A x = b`.
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Infeasibility/unboundedness evidence.
#[derive(Debug, Clone)]
pub enum SdpCertificate {
    /// PSD multipliers `Z_b` with `sum_b <F_k^b, Z_b> = 0` for all k and
    /// `sum_b <F0^b, Z_b> < 0`; for inconsistent equalities, the Farkas
    /// vector `y` with `A^T y = 0`, `b.y > 0` is reported instead.
    DualRay {
        blocks: Vec<DMatrix<f64>>,
        equality: Vec<f64>,
    },
    /// Direction `d` with `sum_k d_k F_k >= 0` and `c.d < 0`.
    PrimalRay(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Vec<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub certificate: Option<SdpCertificate>,
}

impl SdpProblem {
    pub fn new(objective: Vec<f64>, blocks: Vec<SdpBlock>) -> Self {
        SdpProblem {
            objective,
            blocks,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
        }
    }

    pub fn add_equality(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    fn validate(&self) -> Result<usize> {
        let m = self.objective.len();
        if m == 0 || self.blocks.is_empty() {
            return Err(SdpError::Empty);
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            if b.coeffs.len() != m {
                return Err(SdpError::CoefficientCount {
                    block: bi,
                    found: b.coeffs.len(),
                    vars: m,
                });
            }
            for (k, f) in std::iter::once(&b.f0).chain(b.coeffs.iter()).enumerate() {
                if f.rows() != b.dim || f.cols() != b.dim {
                    return Err(SdpError::BlockShape {
                        block: bi,
                        index: k,
                        rows: f.rows(),
                        cols: f.cols(),
                        dim: b.dim,
                    });
                }
                let residual = f
                    .hermiticity_residual()
                    .map_err(|_| SdpError::Numerical("non-square block matrix"))?;
                if residual > STRUCT_TOL {
                    return Err(SdpError::NotHermitian {
                        block: bi,
                        index: k,
                        residual,
                    });
                }
            }
        }
        for (ri, row) in self.eq_rows.iter().enumerate() {
            if row.len() != m {
                return Err(SdpError::EqualityShape {
                    row: ri,
                    found: row.len(),
                    vars: m,
                });
            }
        }
        Ok(m)
    }
}

fn has_imaginary_part(op: &Operator) -> bool {
    let n = op.rows();
    for i in 0..n {
        for j in 0..n {
            if op.get(i, j).im.abs() > 1e-14 {
                return true;
            }
        }
    }
    false
}

/// Real symmetric embedding of a Hermitian operator: `A + iB` maps to
/// `[[A, -B], [B, A]]`. With `double == false` the imaginary part is assumed
/// absent and the original dimension is kept.
fn embed_real(op: &Operator, double: bool) -> DMatrix<f64> {
    let n = op.rows();
    if !double {
        return DMatrix::from_fn(n, n, |i, j| op.get(i, j).re);
    }
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, ii) = (i / n, i % n);
        let (bj, jj) = (j / n, j % n);
        let z = op.get(ii, jj);
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            (1, 0) => z.im,
            _ => unreachable!(),
        }
    })
}

fn sym_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn symmetrize_real(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn min_eig(a: &DMatrix<f64>) -> f64 {
    let mut s = a.clone();
    symmetrize_real(&mut s);
    let se = s.symmetric_eigen();
    se.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v))
}

/// Eliminated-equality reduction: `x = x_p + N z`.
struct Reduction {
    x_particular: DVector<f64>,
    nullspace: DMatrix<f64>,
    farkas: Option<Vec<f64>>,
}

fn reduce_equalities(m: usize, rows: &[Vec<f64>], rhs: &[f64]) -> Result<Reduction> {
    if rows.is_empty() {
        return Ok(Reduction {
            x_particular: DVector::zeros(m),
            nullspace: DMatrix::identity(m, m),
            farkas: None,
        });
    }
    let e = rows.len();
    let a = DMatrix::from_fn(e, m, |i, j| rows[i][j]);
    let b = DVector::from_fn(e, |i, _| rhs[i]);
    let ata = a.transpose() * &a;
    let atb = a.transpose() * &b;
    let se = ata.clone().symmetric_eigen();
    let lam_max = se.eigenvalues.iter().fold(0.0f64, |mx, &v| mx.max(v.abs()));
    let cut = lam_max.max(1e-300) * 1e-12;
    // pseudoinverse solve for the particular solution
    let mut xp = DVector::zeros(m);
    for k in 0..m {
        let lam = se.eigenvalues[k];
        if lam.abs() <= cut {
            continue;
        }
        let vk = se.eigenvectors.column(k);
        let coef = vk.dot(&atb) / lam;
        xp += vk * coef;
    }
    let resid = &a * &xp - &b;
    let scale = 1.0 + b.amax();
    if resid.amax() > 1e-8 * scale {
        // Farkas vector for the inconsistent system
        return Ok(Reduction {
            x_particular: xp,
            nullspace: DMatrix::zeros(m, 0),
            farkas: Some((-resid).iter().copied().collect()),
        });
    }
    let null_cols: Vec<usize> = (0..m).filter(|&k| se.eigenvalues[k].abs() <= cut).collect();
    let nullspace = DMatrix::from_fn(m, null_cols.len(), |i, j| se.eigenvectors[(i, null_cols[j])]);
    Ok(Reduction {
        x_particular: xp,
        nullspace,
        farkas: None,
    })
}

/// Per-block Nesterov-Todd scaling data.
struct NtScaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    /// `T = R^{-T} R^{-1}`.
    t: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<NtScaling> {
    let n = s.nrows();
    let ls = s.clone().cholesky()?.l();
    let lz = z.clone().cholesky()?.l();
    let prod = ls.transpose() * &lz;
    let svd = prod.try_svd(true, false, 1e-14, 1000)?;
    let u = svd.u?;
    let sig = svd.singular_values;
    if sig.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let mut usig = u.clone();
    for k in 0..n {
        let f = 1.0 / sig[k].sqrt();
        for i in 0..n {
            usig[(i, k)] *= f;
        }
    }
    let r = &ls * &usig;
    // R^{-1} = Sigma^{1/2} U^T Ls^{-1}
    let ls_inv = ls
        .solve_lower_triangular(&DMatrix::identity(n, n))?;
    let mut sig_ut = u.transpose() * &ls_inv;
    for i in 0..n {
        let f = sig[i].sqrt();
        for j in 0..n {
            sig_ut[(i, j)] *= f;
        }
    }
    let r_inv = sig_ut;
    let t = r_inv.transpose() * &r_inv;
    Some(NtScaling {
        r,
        r_inv,
        t,
        lambda: sig,
    })
}

/// Largest step `alpha` keeping `Lambda + alpha M >= 0`, where `Lambda` is the
/// positive diagonal of the scaled point.
fn max_step_scaled(lambda: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let mut w = m.clone();
    for i in 0..n {
        for j in 0..n {
            w[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
        }
    }
    symmetrize_real(&mut w);
    let lo = w.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if lo >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lo
    }
}

struct ConeState {
    s: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    x: DVector<f64>,
    tau: f64,
    kappa: f64,
}

/// Solve the reduced cone problem `min c.z` s.t. `G0_b + sum_j z_j Gj_b >= 0`.
/// Returns `(x, primal, dual, status, iterations, certificate)`.
#[allow(clippy::type_complexity)]
fn solve_cone(
    c: &DVector<f64>,
    g0: &[DMatrix<f64>],
    gj: &[Vec<DMatrix<f64>>],
) -> (DVector<f64>, f64, f64, SdpStatus, usize, Option<SdpCertificate>) {
    let nb = g0.len();
    let f = c.len();
    let nu: f64 = g0.iter().map(|b| b.nrows() as f64).sum::<f64>() + 1.0;
    let norm_h = 1.0 + g0.iter().map(|b| b.norm()).fold(0.0f64, f64::max);
    let norm_c = 1.0 + c.amax();

    let mut st = ConeState {
        s: g0.iter().map(|b| DMatrix::identity(b.nrows(), b.nrows())).collect(),
        z: g0.iter().map(|b| DMatrix::identity(b.nrows(), b.nrows())).collect(),
        x: DVector::zeros(f),
        tau: 1.0,
        kappa: 1.0,
    };

    let mut best: Option<(DVector<f64>, f64, f64, f64)> = None; // x, pobj, dobj, score
    let mut iterations = 0usize;

    for iter in 0..ITER_MAX {
        iterations = iter + 1;
        // residuals
        let mut rz: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for b in 0..nb {
            let mut acc = st.s[b].clone();
            for j in 0..f {
                if st.x[j] != 0.0 {
                    acc -= &gj[b][j] * st.x[j];
                }
            }
            acc -= &g0[b] * st.tau;
            rz.push(acc);
        }
        let mut rx = DVector::zeros(f);
        for j in 0..f {
            let mut acc = c[j] * st.tau;
            for b in 0..nb {
                acc -= sym_dot(&gj[b][j], &st.z[b]);
            }
            rx[j] = acc;
        }
        let hz: f64 = (0..nb).map(|b| sym_dot(&g0[b], &st.z[b])).sum();
        let cx = c.dot(&st.x);
        let rtau = st.kappa + cx + hz;

        let gap_sz: f64 = (0..nb).map(|b| sym_dot(&st.s[b], &st.z[b])).sum();
        let mu = (gap_sz + st.tau * st.kappa) / nu;

        // convergence measures of the de-homogenized iterate
        let pres = rz.iter().map(|m| m.norm()).fold(0.0f64, f64::max) / st.tau / norm_h;
        let dres = rx.amax() / st.tau / norm_c;
        let pobj = cx / st.tau;
        let dobj = -hz / st.tau;
        let gap_rel = gap_sz / st.tau / st.tau / (1.0 + pobj.abs());
        let score = pres.max(dres).max(gap_rel);
        if best.as_ref().map_or(true, |b| score < b.3) {
            best = Some((st.x.clone() / st.tau, pobj, dobj, score));
        }
        if pres <= 1e-10 && dres <= 1e-10 && gap_rel <= 1e-10 {
            break;
        }

        // infeasibility detection
        if st.tau <= 1e-10 * st.kappa.max(1.0) || (mu <= 1e-14 && st.tau <= 1e-8) {
            if hz < -1e-12 {
                let zn: Vec<DMatrix<f64>> = st.z.iter().map(|m| m / (-hz)).collect();
                let ok_orth = (0..f).all(|j| {
                    let v: f64 = (0..nb).map(|b| sym_dot(&gj[b][j], &zn[b])).sum();
                    v.abs() <= 1e-6 * norm_h
                });
                if ok_orth {
                    return (
                        st.x.clone(),
                        f64::NAN,
                        f64::NAN,
                        SdpStatus::Infeasible,
                        iterations,
                        Some(SdpCertificate::DualRay {
                            blocks: zn,
                            equality: Vec::new(),
                        }),
                    );
                }
            }
            if cx < -1e-12 {
                let xn = st.x.clone() / (-cx);
                let psd_dir = (0..nb).all(|b| {
                    let mut acc = DMatrix::zeros(g0[b].nrows(), g0[b].nrows());
                    for j in 0..f {
                        acc += &gj[b][j] * xn[j];
                    }
                    min_eig(&acc) >= -1e-7
                });
                if psd_dir {
                    return (
                        st.x.clone(),
                        f64::NAN,
                        f64::NAN,
                        SdpStatus::Unbounded,
                        iterations,
                        Some(SdpCertificate::PrimalRay(xn.iter().copied().collect())),
                    );
                }
            }
            break;
        }

        // NT scalings
        let mut scal: Vec<NtScaling> = Vec::with_capacity(nb);
        let mut failed = false;
        for b in 0..nb {
            match nt_scaling(&st.s[b], &st.z[b]) {
                Some(w) => scal.push(w),
                None => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            break;
        }

        // Schur complement H_jk = sum_b <Gj, T Gk T>
        let mut tgt: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(nb);
        for b in 0..nb {
            let tb = &scal[b].t;
            let cols: Vec<DMatrix<f64>> = (0..f).map(|j| tb * &gj[b][j] * tb).collect();
            tgt.push(cols);
        }
        let mut h = DMatrix::zeros(f, f);
        for j in 0..f {
            for k in j..f {
                let mut acc = 0.0;
                for b in 0..nb {
                    acc += sym_dot(&gj[b][j], &tgt[b][k]);
                }
                h[(j, k)] = acc;
                h[(k, j)] = acc;
            }
        }
        // tiny ridge for near-dependent columns
        let ridge = 1e-13 * (1.0 + h.diagonal().amax());
        for j in 0..f {
            h[(j, j)] += ridge;
        }
        let chol = match h.clone().cholesky() {
            Some(c) => c,
            None => break,
        };

        let gvec = DVector::from_fn(f, |j, _| {
            (0..nb).map(|b| sym_dot(&gj[b][j], &(&scal[b].t * &g0[b] * &scal[b].t))).sum()
        });
        let w00: f64 = (0..nb)
            .map(|b| sym_dot(&g0[b], &(&scal[b].t * &g0[b] * &scal[b].t)))
            .sum();
        let qvec = DVector::from_fn(f, |j, _| {
            (0..nb).map(|b| sym_dot(&gj[b][j], &(&scal[b].t * &rz[b] * &scal[b].t))).sum()
        });
        let q0: f64 = (0..nb)
            .map(|b| sym_dot(&g0[b], &(&scal[b].t * &rz[b] * &scal[b].t)))
            .sum();

        // the v-solve does not depend on the centering target
        let mut gc = gvec.clone();
        gc += c;
        let v = chol.solve(&(-gc));

        // one Newton solve for a given centering target; returns the direction
        let newton = |sigma: f64,
                      ds_target: &[DMatrix<f64>],
                      dkappa_target: f64|
         -> Option<(DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, f64, f64)> {
            let eta = 1.0 - sigma;
            // p_j = sum_b <Gj, R^{-T} D R^{-1}>, p0 likewise with G0
            let mut pvec = DVector::zeros(f);
            let mut p0 = 0.0;
            let mut rd: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
            for b in 0..nb {
                let e = scal[b].r_inv.transpose() * &ds_target[b] * &scal[b].r_inv;
                for j in 0..f {
                    pvec[j] += sym_dot(&gj[b][j], &e);
                }
                p0 += sym_dot(&g0[b], &e);
                rd.push(e);
            }
            let rhs1 = -rx.clone() * eta + &pvec + &qvec * eta;
            let u = chol.solve(&rhs1);
            let cg = DVector::from_fn(f, |j, _| c[j] - gvec[j]);
            let den = cg.dot(&v) - st.kappa / st.tau - w00;
            if den.abs() < 1e-300 {
                return None;
            }
            let rhs2 = -eta * rtau - dkappa_target / st.tau - p0 - eta * q0;
            let dtau = (rhs2 - cg.dot(&u)) / den;
            let dx = &u + &v * dtau;
            let mut ds: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
            let mut dz: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
            for b in 0..nb {
                let mut dsb = -rz[b].clone() * eta;
                for j in 0..f {
                    if dx[j] != 0.0 {
                        dsb += &gj[b][j] * dx[j];
                    }
                }
                dsb += &g0[b] * dtau;
                // dz = R^{-T} D R^{-1} - T ds T
                let mut dzb = rd[b].clone();
                dzb -= &scal[b].t * &dsb * &scal[b].t;
                symmetrize_real(&mut dsb);
                symmetrize_real(&mut dzb);
                ds.push(dsb);
                dz.push(dzb);
            }
            let dkappa = (dkappa_target - st.kappa * dtau) / st.tau;
            Some((dx, ds, dz, dtau, dkappa))
        };

        // affine (predictor) direction: target  -Lambda^2, -tau*kappa
        let aff_targets: Vec<DMatrix<f64>> = (0..nb)
            .map(|b| {
                let n = scal[b].lambda.len();
                DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        -scal[b].lambda[i] * scal[b].lambda[i]
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        // convert targets through L_Lambda^{-1}
        let linv = |b: usize, m: &DMatrix<f64>| -> DMatrix<f64> {
            let lam = &scal[b].lambda;
            let n = lam.len();
            DMatrix::from_fn(n, n, |i, j| 2.0 * m[(i, j)] / (lam[i] + lam[j]))
        };
        let aff_ds: Vec<DMatrix<f64>> = (0..nb).map(|b| linv(b, &aff_targets[b])).collect();
        let aff = match newton(0.0, &aff_ds, -st.tau * st.kappa) {
            Some(d) => d,
            None => break,
        };
        let (_adx, ads, adz, adtau, adkappa) = aff;

        // affine step length
        let mut alpha_aff = 1.0f64;
        for b in 0..nb {
            let ds_sc = &scal[b].r_inv * &ads[b] * scal[b].r_inv.transpose();
            let dz_sc = scal[b].r.transpose() * &adz[b] * &scal[b].r;
            alpha_aff = alpha_aff.min(max_step_scaled(&scal[b].lambda, &ds_sc));
            alpha_aff = alpha_aff.min(max_step_scaled(&scal[b].lambda, &dz_sc));
        }
        if adtau < 0.0 {
            alpha_aff = alpha_aff.min(-st.tau / adtau);
        }
        if adkappa < 0.0 {
            alpha_aff = alpha_aff.min(-st.kappa / adkappa);
        }
        alpha_aff = alpha_aff.min(1.0);

        let mut gap_aff = (st.tau + alpha_aff * adtau) * (st.kappa + alpha_aff * adkappa);
        for b in 0..nb {
            let sn = &st.s[b] + &ads[b] * alpha_aff;
            let zn = &st.z[b] + &adz[b] * alpha_aff;
            gap_aff += sym_dot(&sn, &zn);
        }
        let mu_aff = gap_aff / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // combined direction with Mehrotra corrector
        let comb_ds: Vec<DMatrix<f64>> = (0..nb)
            .map(|b| {
                let ds_sc = &scal[b].r_inv * &ads[b] * scal[b].r_inv.transpose();
                let dz_sc = scal[b].r.transpose() * &adz[b] * &scal[b].r;
                let mut corr = (&ds_sc * &dz_sc + &dz_sc * &ds_sc) * 0.5;
                let n = scal[b].lambda.len();
                for i in 0..n {
                    corr[(i, i)] -= sigma * mu;
                    corr[(i, i)] += scal[b].lambda[i] * scal[b].lambda[i];
                }
                linv(b, &(-corr))
            })
            .collect();
        let dkappa_target = sigma * mu - st.tau * st.kappa - adtau * adkappa;
        let comb = match newton(sigma, &comb_ds, dkappa_target) {
            Some(d) => d,
            None => break,
        };
        let (dx, ds, dz, dtau, dkappa) = comb;

        let mut alpha = 1.0f64;
        for b in 0..nb {
            let ds_sc = &scal[b].r_inv * &ds[b] * scal[b].r_inv.transpose();
            let dz_sc = scal[b].r.transpose() * &dz[b] * &scal[b].r;
            alpha = alpha.min(max_step_scaled(&scal[b].lambda, &ds_sc));
            alpha = alpha.min(max_step_scaled(&scal[b].lambda, &dz_sc));
        }
        if dtau < 0.0 {
            alpha = alpha.min(-st.tau / dtau);
        }
        if dkappa < 0.0 {
            alpha = alpha.min(-st.kappa / dkappa);
        }
        alpha = (0.99 * alpha).min(1.0);
        if alpha <= 1e-13 {
            break;
        }

        st.x += &dx * alpha;
        st.tau += alpha * dtau;
        st.kappa += alpha * dkappa;
        for b in 0..nb {
            st.s[b] += &ds[b] * alpha;
            st.z[b] += &dz[b] * alpha;
            symmetrize_real(&mut st.s[b]);
            symmetrize_real(&mut st.z[b]);
        }
    }

    match best {
        Some((x, pobj, dobj, score)) => {
            let certified = score <= 1e-8
                || ((pobj - dobj).abs() <= SDP_TOL * (1.0 + pobj.abs()) && score <= 1e-7);
            let status = if certified {
                SdpStatus::Optimal
            } else {
                SdpStatus::MaxIter
            };
            (x, pobj, dobj, status, iterations, None)
        }
        None => (
            DVector::zeros(f),
            f64::NAN,
            f64::NAN,
            SdpStatus::MaxIter,
            iterations,
            None,
        ),
    }
}

/// Solve a semidefinite program. `status == Optimal` certifies a duality gap
/// within `SDP_TOL * (1 + |primal|)`; infeasibility and unboundedness carry
/// explicit rays.
pub fn solve_sdp(p: &SdpProblem) -> Result<SdpSolution> {
    let m = p.validate()?;
    let red = reduce_equalities(m, &p.eq_rows, &p.eq_rhs)?;
    if let Some(farkas) = red.farkas {
        return Ok(SdpSolution {
            x: red.x_particular.iter().copied().collect(),
            primal_value: f64::NAN,
            dual_value: f64::NAN,
            status: SdpStatus::Infeasible,
            iterations: 0,
            certificate: Some(SdpCertificate::DualRay {
                blocks: Vec::new(),
                equality: farkas,
            }),
        });
    }
    let f = red.nullspace.ncols();

    // reduced blocks: G0 = F0 + sum_k xp_k Fk ; Gj = sum_k N_kj Fk
    let mut g0: Vec<DMatrix<f64>> = Vec::with_capacity(p.blocks.len());
    let mut gj: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let double =
            has_imaginary_part(&b.f0) || b.coeffs.iter().any(has_imaginary_part);
        let mut base = embed_real(&b.f0, double);
        let fk_real: Vec<DMatrix<f64>> = b.coeffs.iter().map(|f| embed_real(f, double)).collect();
        for k in 0..m {
            let w = red.x_particular[k];
            if w != 0.0 {
                base += &fk_real[k] * w;
            }
        }
        symmetrize_real(&mut base);
        let dim = base.nrows();
        let cols: Vec<DMatrix<f64>> = (0..f)
            .map(|j| {
                let mut acc = DMatrix::zeros(dim, dim);
                for k in 0..m {
                    let w = red.nullspace[(k, j)];
                    if w != 0.0 {
                        acc += &fk_real[k] * w;
                    }
                }
                symmetrize_real(&mut acc);
                acc
            })
            .collect();
        g0.push(base);
        gj.push(cols);
    }

    let c_full = DVector::from_fn(m, |i, _| p.objective[i]);
    let offset = c_full.dot(&red.x_particular);

    if f == 0 {
        // variables fully determined by the equalities; just grade feasibility
        let feasible = g0.iter().all(|b| min_eig(b) >= -1e-8);
        let value = offset;
        return Ok(SdpSolution {
            x: red.x_particular.iter().copied().collect(),
            primal_value: if feasible { value } else { f64::NAN },
            dual_value: if feasible { value } else { f64::NAN },
            status: if feasible {
                SdpStatus::Optimal
            } else {
                SdpStatus::Infeasible
            },
            iterations: 0,
            certificate: None,
        });
    }

    let c_red = red.nullspace.transpose() * &c_full;
    let (z, pobj, dobj, status, iterations, certificate) = solve_cone(&c_red, &g0, &gj);

    let x_full = &red.x_particular + &red.nullspace * &z;
    let (primal_value, dual_value) = match status {
        SdpStatus::Infeasible | SdpStatus::Unbounded => (f64::NAN, f64::NAN),
        _ => (pobj + offset, dobj + offset),
    };
    Ok(SdpSolution {
        x: x_full.iter().copied().collect(),
        primal_value,
        dual_value,
        status,
        iterations,
        certificate,
    })
}

/// Hermitian parametrization of an `n x n` space by `n*n` real variables:
/// the diagonal entries first, then for each pair `i < j` (row-major) the
/// real and imaginary parts of the upper off-diagonal entry.
pub fn hermitian_basis(n: usize) -> Vec<Operator> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let mut m = Operator::zeros(n, n);
        m.set(i, i, spectral::ONE);
        out.push(m);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut re = Operator::zeros(n, n);
            re.set(i, j, spectral::ONE);
            re.set(j, i, spectral::ONE);
            out.push(re);
            let mut im = Operator::zeros(n, n);
            im.set(i, j, spectral::I);
            im.set(j, i, -spectral::I);
            out.push(im);
        }
    }
    out
}

/// Inverse of the [`hermitian_basis`] coordinates.
pub fn hermitian_to_params(h: &Operator) -> Vec<f64> {
    let n = h.rows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(h.get(i, i).re);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(h.get(i, j).re);
            out.push(h.get(i, j).im);
        }
    }
    out
}

/// Assemble a Hermitian operator from [`hermitian_basis`] coordinates.
pub fn hermitian_from_params(n: usize, params: &[f64]) -> Operator {
    let mut m = Operator::zeros(n, n);
    for i in 0..n {
        m.set(i, i, spectral::C64::new(params[i], 0.0));
    }
    let mut idx = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = spectral::C64::new(params[idx], params[idx + 1]);
            idx += 2;
            m.set(i, j, v);
            m.set(j, i, v.conj());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::C64;

    fn pauli_z() -> Operator {
        Operator::diagonal(vec![1.0, -1.0]).to_dense().unwrap()
    }

    #[test]
    fn minimizes_spectral_norm_epigraph() {
        // min x s.t. x*1 - Z >= 0  => x = 1
        let z = pauli_z();
        let block = SdpBlock {
            dim: 2,
            f0: z.scale_re(-1.0),
            coeffs: vec![Operator::identity(2).to_dense().unwrap()],
        };
        let p = SdpProblem::new(vec![1.0], vec![block]);
        let sol = solve_sdp(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_value - 1.0).abs() < 1e-7, "value {}", sol.primal_value);
        assert!(sol.dual_value <= sol.primal_value + 1e-9);
    }

    #[test]
    fn detects_infeasible_equalities() {
        let block = SdpBlock {
            dim: 1,
            f0: Operator::identity(1).to_dense().unwrap(),
            coeffs: vec![Operator::zeros(1, 1)],
        };
        let mut p = SdpProblem::new(vec![0.0], vec![block]);
        p.add_equality(vec![1.0], 1.0);
        p.add_equality(vec![1.0], 2.0);
        let sol = solve_sdp(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        assert!(matches!(sol.certificate, Some(SdpCertificate::DualRay { .. })));
    }

    #[test]
    fn detects_conic_infeasibility() {
        // x >= 1 and -x >= 0 cannot both hold
        let b1 = SdpBlock {
            dim: 1,
            f0: Operator::identity(1).scale_re(-1.0).to_dense().unwrap(),
            coeffs: vec![Operator::identity(1).to_dense().unwrap()],
        };
        let b2 = SdpBlock {
            dim: 1,
            f0: Operator::zeros(1, 1),
            coeffs: vec![Operator::identity(1).scale_re(-1.0).to_dense().unwrap()],
        };
        let p = SdpProblem::new(vec![0.0], vec![b1, b2]);
        let sol = solve_sdp(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded_direction() {
        // min -x s.t. x >= 0
        let b = SdpBlock {
            dim: 1,
            f0: Operator::zeros(1, 1),
            coeffs: vec![Operator::identity(1).to_dense().unwrap()],
        };
        let p = SdpProblem::new(vec![-1.0], vec![b]);
        let sol = solve_sdp(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Unbounded);
        assert!(matches!(sol.certificate, Some(SdpCertificate::PrimalRay(_))));
    }

    #[test]
    fn complex_block_round_trip() {
        // min x s.t. x*1 - H >= 0 with complex Hermitian H => x = lambda_max(H)
        let h = Operator::hermitian(Operator::from_rows(
            2,
            2,
            vec![
                C64::new(0.3, 0.0),
                C64::new(0.1, -0.7),
                C64::new(0.1, 0.7),
                C64::new(-0.2, 0.0),
            ],
        ).unwrap())
        .unwrap();
        let want = crate::spectral::spectral_bounds(&h).unwrap().1;
        let block = SdpBlock {
            dim: 2,
            f0: h.scale_re(-1.0),
            coeffs: vec![Operator::identity(2).to_dense().unwrap()],
        };
        let p = SdpProblem::new(vec![1.0], vec![block]);
        let sol = solve_sdp(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_value - want).abs() < 1e-7);
    }

    #[test]
    fn hermitian_params_round_trip() {
        let h = hermitian_from_params(3, &[1.0, 2.0, -0.5, 0.3, 0.4, -0.1, 0.2, 0.6, 0.0]);
        let p = hermitian_to_params(&h);
        let h2 = hermitian_from_params(3, &p);
        assert!(h.approx_eq(&h2, 0.0));
        assert!(h.hermiticity_residual().unwrap() == 0.0);
    }
}
