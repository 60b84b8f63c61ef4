//! Symmetry-violation measures for U(1)-covariant codes.
//!
//! A [`U1Code`] bundles an encoding channel with charge observables on its
//! logical and physical spaces. The measures quantify how far the encoder is
//! from intertwining the two induced phase rotations: the worst-case and
//! average group deviation over one period, the pointwise deviation at the
//! identity (a Fisher-information rate), and the static charge deviation.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{common_period, Channel, ChannelError, U1Rep};
use crate::metric::{
    channel_qfi_at_zero, choi_purified_distance, diamond_distance, dist_zero_numerical_range,
    golden_max, scan_max_periodic, worst_case_purified_distance_restarts, Certification,
    DistanceResult, MetricError,
};
use crate::spectral::{
    eigh, herm_unitary_exp, spectral_range, symmetrize, Operator, SpectralError,
};
use crate::tol::{DENSE_DIM_CAP, STRUCT_TOL};

type Result<T> = std::result::Result<T, SymmetryError>;

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(
        "encoder maps {enc_in} -> {enc_out} but the charges act on {logical} (logical) and {physical} (physical)"
    )]
    DimMismatch {
        enc_in: usize,
        enc_out: usize,
        logical: usize,
        physical: usize,
    },
    #[error("{side} charge is constant; every deviation measure would be degenerate")]
    ConstantCharge { side: &'static str },
    #[error("dense physical charge of dimension {dim} exceeds the eigendecomposition cap {cap}")]
    ChargeTooLarge { dim: usize, cap: usize },
    #[error("non-isometric encoder of physical dimension {dim} exceeds the heuristic cap {cap}")]
    EncoderTooLarge { dim: usize, cap: usize },
    #[error("channel maps {got_in} -> {got_out}, expected {want_in} -> {want_out}")]
    CompositionMismatch {
        got_in: usize,
        got_out: usize,
        want_in: usize,
        want_out: usize,
    },
}

/// Number of equispaced period samples used by the certified group scans.
pub const GROUP_SCAN_GRID: usize = 1024;
/// Coarser sampling used when each period sample needs a heuristic search or
/// a semidefinite solve.
pub const GROUP_SCAN_GRID_COSTLY: usize = 32;

/// An encoding together with logical and physical charge observables whose
/// phase actions share a common period.
pub struct U1Code {
    encoder: Channel,
    logical: U1Rep,
    physical: U1Rep,
    tau: f64,
    isometry: Option<Operator>,
}

impl U1Code {
    pub fn new(encoder: Channel, logical: U1Rep, physical: U1Rep) -> Result<Self> {
        if encoder.dim_in() != logical.dim() || encoder.dim_out() != physical.dim() {
            return Err(SymmetryError::DimMismatch {
                enc_in: encoder.dim_in(),
                enc_out: encoder.dim_out(),
                logical: logical.dim(),
                physical: physical.dim(),
            });
        }
        if spectral_range(logical.charge())? <= STRUCT_TOL {
            return Err(SymmetryError::ConstantCharge { side: "logical" });
        }
        if spectral_range(physical.charge())? <= STRUCT_TOL {
            return Err(SymmetryError::ConstantCharge { side: "physical" });
        }
        let tau = common_period(&logical, &physical)?;
        let isometry = if encoder.is_isometric() {
            Some(encoder.kraus()[0].clone())
        } else {
            None
        };
        Ok(U1Code {
            encoder,
            logical,
            physical,
            tau,
            isometry,
        })
    }

    pub fn encoder(&self) -> &Channel {
        &self.encoder
    }

    pub fn logical(&self) -> &U1Rep {
        &self.logical
    }

    pub fn physical(&self) -> &U1Rep {
        &self.physical
    }

    /// Common period of the two phase actions.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim_l(&self) -> usize {
        self.logical.dim()
    }

    pub fn dim_s(&self) -> usize {
        self.physical.dim()
    }

    pub fn is_isometric(&self) -> bool {
        self.isometry.is_some()
    }

    /// The encoding isometry when the encoder has a single Kraus operator.
    pub fn isometry(&self) -> Option<&Operator> {
        self.isometry.as_ref()
    }
}

/// Rows of the isometry expressed in the eigenbasis of the physical charge,
/// binned by eigenvalue. The overlap matrix at group parameter theta is then
/// a short phase-weighted sum of fixed small matrices, which keeps period
/// scans cheap even when the physical space is huge.
struct OverlapBins {
    gaps: Vec<f64>,
    mats: Vec<Operator>,
}

impl OverlapBins {
    fn build(w: &Operator, hs: &Operator) -> Result<OverlapBins> {
        let dl = w.cols();
        let (values, p): (Vec<f64>, Operator) = match hs.diag_slice() {
            Some(d) => (d.to_vec(), w.clone()),
            None => {
                if hs.rows() > DENSE_DIM_CAP {
                    return Err(SymmetryError::ChargeTooLarge {
                        dim: hs.rows(),
                        cap: DENSE_DIM_CAP,
                    });
                }
                let s = eigh(hs)?;
                (s.values.clone(), s.vectors.adjoint().mul(w)?)
            }
        };
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-8 * scale;
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
        let mut gaps: Vec<f64> = Vec::new();
        let mut accs: Vec<Vec<C64>> = Vec::new();
        for &j in &order {
            if gaps.is_empty() || values[j] - gaps[gaps.len() - 1] > tol {
                gaps.push(values[j]);
                accs.push(vec![C64::new(0.0, 0.0); dl * dl]);
            }
            let acc = accs.last_mut().unwrap();
            for a in 0..dl {
                let pa = p.get(j, a).conj();
                for b in 0..dl {
                    acc[a * dl + b] += pa * p.get(j, b);
                }
            }
        }
        let mats = accs
            .into_iter()
            .map(|data| Operator::from_rows(dl, dl, data).expect("square bin"))
            .collect();
        Ok(OverlapBins { gaps, mats })
    }

    /// `exp(i H_L theta) W^dag exp(-i H_S theta) W`.
    fn overlap_at(&self, hl: &Operator, theta: f64) -> Result<Operator> {
        let dl = hl.rows();
        let mut s = Operator::zeros(dl, dl);
        for (g, mat) in self.gaps.iter().zip(self.mats.iter()) {
            s = s.add(&mat.scale(C64::from_polar(1.0, -g * theta)))?;
        }
        Ok(herm_unitary_exp(hl, theta)?.mul(&s)?)
    }
}

fn phase_channel(h: &Operator, theta: f64) -> Result<Channel> {
    Ok(Channel::from_unitary(herm_unitary_exp(h, -theta)?)?)
}

/// The two sides of the covariance condition at group parameter `theta`:
/// rotate-then-encode and encode-then-rotate.
fn conjugated_pair(code: &U1Code, theta: f64) -> Result<(Channel, Channel)> {
    if code.dim_s() > DENSE_DIM_CAP {
        return Err(SymmetryError::EncoderTooLarge {
            dim: code.dim_s(),
            cap: DENSE_DIM_CAP,
        });
    }
    let us = phase_channel(code.physical.charge(), theta)?;
    let ul = phase_channel(code.logical.charge(), theta)?;
    let a = Channel::compose(&us, &code.encoder)?;
    let b = Channel::compose(&code.encoder, &ul)?;
    Ok((a, b))
}

/// Worst-case deviation from covariance over one group period:
/// `max_theta P(rotate-then-encode, encode-then-rotate)`. Exact for
/// isometric encoders, heuristic (and so labeled) otherwise.
pub fn delta_group(code: &U1Code) -> Result<DistanceResult> {
    Ok(delta_group_detailed(code)?.0)
}

/// [`delta_group`] together with the maximizing group parameter.
pub fn delta_group_detailed(code: &U1Code) -> Result<(DistanceResult, f64)> {
    if let Some(w) = code.isometry() {
        let bins = OverlapBins::build(w, code.physical.charge())?;
        let hl = code.logical.charge();
        let f = |theta: f64| -> std::result::Result<f64, SymmetryError> {
            let m = bins.overlap_at(hl, theta)?;
            let (d0, _, _) = dist_zero_numerical_range(&m)?;
            Ok((1.0 - d0 * d0).max(0.0).sqrt())
        };
        let (value, theta) = scan_max_periodic(&f, code.tau(), GROUP_SCAN_GRID)?;
        let m = bins.overlap_at(hl, theta)?;
        let (_, _, witness) = dist_zero_numerical_range(&m)?;
        return Ok((
            DistanceResult {
                value,
                certification: Certification::Exact,
                witness: Some(witness),
            },
            theta,
        ));
    }
    // non-isometric: each sample is itself a multi-start search, so scan
    // coarsely with few restarts and re-polish the winning parameter
    let f = |theta: f64| -> std::result::Result<f64, SymmetryError> {
        let (a, b) = conjugated_pair(code, theta)?;
        Ok(worst_case_purified_distance_restarts(&a, &b, 4)?.value)
    };
    let (_, theta) = coarse_scan(&f, code.tau())?;
    let (a, b) = conjugated_pair(code, theta)?;
    let polished = worst_case_purified_distance_restarts(&a, &b, 16)?;
    Ok((polished, theta))
}

/// Deviation from covariance as seen by the maximally entangled input:
/// `max_theta P_choi(rotate-then-encode, encode-then-rotate)`. A lower bound
/// on [`delta_group`] that stays exactly computable for any encoder.
pub fn delta_group_choi(code: &U1Code) -> Result<f64> {
    Ok(delta_group_choi_detailed(code)?.0)
}

pub fn delta_group_choi_detailed(code: &U1Code) -> Result<(f64, f64)> {
    if let Some(w) = code.isometry() {
        let bins = OverlapBins::build(w, code.physical.charge())?;
        let hl = code.logical.charge();
        let dl = code.dim_l() as f64;
        // for isometric pairs the Choi fidelity is |tr overlap| / d_L
        let f = |theta: f64| -> std::result::Result<f64, SymmetryError> {
            let fbar = (bins.overlap_at(hl, theta)?.trace().norm() / dl).min(1.0);
            Ok((1.0 - fbar * fbar).max(0.0).sqrt())
        };
        return Ok(scan_max_periodic(&f, code.tau(), GROUP_SCAN_GRID)?);
    }
    let f = |theta: f64| -> std::result::Result<f64, SymmetryError> {
        let (a, b) = conjugated_pair(code, theta)?;
        Ok(choi_purified_distance(&a, &b)?)
    };
    coarse_scan(&f, code.tau())
}

/// Worst-case deviation in diamond distance over one period. Coincides with
/// [`delta_group`] for isometric encoders (both sides have pure outputs);
/// otherwise each period sample is a semidefinite solve. Samples whose solve
/// does not certify optimality are skipped and the result is downgraded to a
/// lower bound.
pub fn delta_group_diamond(code: &U1Code) -> Result<DistanceResult> {
    if code.is_isometric() {
        return delta_group(code);
    }
    let mut skipped = false;
    let mut best = (0.0f64, 0.0f64);
    for k in 0..GROUP_SCAN_GRID_COSTLY {
        let theta = code.tau() * k as f64 / GROUP_SCAN_GRID_COSTLY as f64;
        let (a, b) = conjugated_pair(code, theta)?;
        match diamond_distance(&a, &b) {
            Ok(r) => {
                if r.value > best.0 {
                    best = (r.value, theta);
                }
            }
            Err(MetricError::NotCertified { .. }) => skipped = true,
            Err(e) => return Err(e.into()),
        }
    }
    let width = code.tau() / GROUP_SCAN_GRID_COSTLY as f64;
    let f = |theta: f64| -> std::result::Result<f64, SymmetryError> {
        let (a, b) = conjugated_pair(code, theta)?;
        Ok(diamond_distance(&a, &b)?.value)
    };
    let refined = golden_max(&f, best.1 - width, best.1 + width, 1e-8)?;
    let value = refined.0.max(best.0);
    Ok(DistanceResult {
        value,
        certification: if skipped {
            Certification::LowerBound
        } else {
            Certification::Exact
        },
        witness: None,
    })
}

fn coarse_scan<F>(f: &F, period: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> std::result::Result<f64, SymmetryError>,
{
    let grid = GROUP_SCAN_GRID_COSTLY;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..grid {
        let theta = period * k as f64 / grid as f64;
        let v = f(theta)?;
        if v > best.0 {
            best = (v, theta);
        }
    }
    let width = period / grid as f64;
    let refined = golden_max(f, best.1 - width, best.1 + width, 1e-6)?;
    Ok(if refined.0 > best.0 { refined } else { best })
}

/// Rate at which the two sides of the covariance condition separate at the
/// identity: the square root of the Fisher information of the conjugated
/// encoder family at parameter zero.
pub fn delta_point(code: &U1Code) -> Result<f64> {
    let (kraus, dkraus) = conjugated_family(code)?;
    let qfi = channel_qfi_at_zero(&kraus, &dkraus)?;
    Ok(qfi.value.max(0.0).sqrt())
}

/// Kraus family of rotate-encode-unrotate and its derivative at zero:
/// `dK = -i (H_S K - K H_L)`.
fn conjugated_family(code: &U1Code) -> Result<(Vec<Operator>, Vec<Operator>)> {
    let hs = code.physical.charge();
    let hl = code.logical.charge().to_dense()?;
    let kraus: Vec<Operator> = code.encoder.kraus().to_vec();
    let minus_i = C64::new(0.0, -1.0);
    let mut dkraus = Vec::with_capacity(kraus.len());
    for k in &kraus {
        let d = hs.mul(k)?.sub(&k.mul(&hl)?)?.scale(minus_i);
        dkraus.push(d);
    }
    Ok((kraus, dkraus))
}

/// Observable pulled back through the encoder: `E^dag(H_S)`.
pub fn charge_dual(code: &U1Code) -> Result<Operator> {
    Ok(symmetrize(&code.encoder.apply_dual(code.physical.charge())?))
}

/// Spectral range of `H_L - E^dag(H_S)`: the static mismatch between the
/// logical charge and the pulled-back physical charge.
pub fn delta_charge(code: &U1Code) -> Result<f64> {
    let dual = charge_dual(code)?;
    let diff = code.logical.charge().to_dense()?.sub(&dual)?;
    Ok(spectral_range(&symmetrize(&diff))?)
}

/// Difference of the pulled-back charge between the extreme eigenvectors of
/// the logical charge.
pub fn charge_fluctuation(code: &U1Code) -> Result<f64> {
    Ok(charge_fluctuation_detailed(code)?.0)
}

/// [`charge_fluctuation`] plus the pair of logical eigenvalues (largest,
/// smallest) whose eigenvectors anchored the computation; the spectrum of
/// the logical charge may be degenerate, in which case the deterministic
/// eigendecomposition ordering fixes the choice.
pub fn charge_fluctuation_detailed(code: &U1Code) -> Result<(f64, (f64, f64))> {
    let dual = charge_dual(code)?;
    let spec = eigh(&code.logical.charge().to_dense()?)?;
    let top = spec.values.len() - 1;
    let vmax = spec.vectors.column(top);
    let vmin = spec.vectors.column(0);
    let expect = |v: &Operator| -> Result<f64> {
        Ok(v.adjoint().mul(&dual.mul(v)?)?.get(0, 0).re)
    };
    let chi = expect(&vmax)? - expect(&vmin)?;
    Ok((chi, (spec.values[top], spec.values[0])))
}

/// Largest fluctuation of the physical charge over encoded pure states,
/// `max_psi sqrt(8 Var_{E(psi)}(H_S))`. The logical-qubit case is resolved by
/// a dense Bloch-sphere grid with local refinement; larger logical spaces use
/// a multi-start ascent and are labeled heuristic. Always at most
/// `sqrt(2) * range(H_S)`.
pub fn frak_b(code: &U1Code) -> Result<DistanceResult> {
    let hs = code.physical.charge();
    let hs2 = match hs.diag_slice() {
        Some(d) => Operator::diagonal(d.iter().map(|x| x * x).collect()),
        None => hs.mul(hs)?,
    };
    let a = symmetrize(&code.encoder.apply_dual(&hs2)?);
    let b = symmetrize(&code.encoder.apply_dual(hs)?);
    let (var, psi, certification) = if code.dim_l() == 2 {
        let (v, p) = bloch_max_variance(&a, &b);
        (v, p, Certification::Exact)
    } else {
        let (v, p) = ascent_max_variance(&a, &b)?;
        (v, p, Certification::Heuristic)
    };
    Ok(DistanceResult {
        value: (8.0 * var.max(0.0)).sqrt(),
        certification,
        witness: Some(psi),
    })
}

fn pauli_coeffs(m: &Operator) -> (f64, [f64; 3]) {
    let m00 = m.get(0, 0).re;
    let m11 = m.get(1, 1).re;
    let m01 = m.get(0, 1);
    ((m00 + m11) / 2.0, [m01.re, -m01.im, (m00 - m11) / 2.0])
}

fn bloch_max_variance(a: &Operator, b: &Operator) -> (f64, Operator) {
    let (a0, av) = pauli_coeffs(a);
    let (b0, bv) = pauli_coeffs(b);
    let value = |t: f64, p: f64| -> f64 {
        let n = [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()];
        let ea = a0 + av[0] * n[0] + av[1] * n[1] + av[2] * n[2];
        let eb = b0 + bv[0] * n[0] + bv[1] * n[1] + bv[2] * n[2];
        ea - eb * eb
    };
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=360 {
        let t = std::f64::consts::PI * i as f64 / 360.0;
        for j in 0..720 {
            let p = 2.0 * std::f64::consts::PI * j as f64 / 720.0;
            let v = value(t, p);
            if v > best.0 {
                best = (v, t, p);
            }
        }
    }
    // compass refinement from the best grid node
    let (mut v, mut t, mut p) = best;
    let mut step = std::f64::consts::PI / 360.0;
    while step > 1e-12 {
        let cands = [(t + step, p), (t - step, p), (t, p + step), (t, p - step)];
        let mut moved = false;
        for &(tc, pc) in &cands {
            let vc = value(tc, pc);
            if vc > v {
                v = vc;
                t = tc;
                p = pc;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let psi = Operator::col_vector(vec![
        C64::new((t / 2.0).cos(), 0.0),
        C64::from_polar((t / 2.0).sin(), p),
    ]);
    (v, psi)
}

fn ascent_max_variance(a: &Operator, b: &Operator) -> Result<(f64, Operator)> {
    let dl = a.rows();
    let nparams = 2 * dl;
    let to_state = |params: &[f64]| -> Operator {
        let mut amps: Vec<C64> = (0..dl)
            .map(|k| C64::new(params[2 * k], params[2 * k + 1]))
            .collect();
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let norm = if norm < 1e-12 { 1.0 } else { norm };
        for z in &mut amps {
            *z /= norm;
        }
        Operator::col_vector(amps)
    };
    let objective = |params: &[f64]| -> Result<f64> {
        let psi = to_state(params);
        let ea = psi.adjoint().mul(&a.mul(&psi)?)?.get(0, 0).re;
        let eb = psi.adjoint().mul(&b.mul(&psi)?)?.get(0, 0).re;
        Ok(ea - eb * eb)
    };
    let mut best = (f64::NEG_INFINITY, vec![0.0; nparams]);
    for seed in 0..16u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<f64> = (0..nparams).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut v = objective(&params)?;
        let mut step = 0.1;
        for _ in 0..60 {
            if step < 1e-10 {
                break;
            }
            let h = 1e-5;
            let mut grad = vec![0.0; nparams];
            for k in 0..nparams {
                let orig = params[k];
                params[k] = orig + h;
                let vp = objective(&params)?;
                params[k] = orig - h;
                let vm = objective(&params)?;
                params[k] = orig;
                grad[k] = (vp - vm) / (2.0 * h);
            }
            let gnorm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-11 {
                break;
            }
            let trial: Vec<f64> = params
                .iter()
                .zip(grad.iter())
                .map(|(x, g)| x + step * g / gnorm)
                .collect();
            let vt = objective(&trial)?;
            if vt > v {
                params = trial;
                v = vt;
                step *= 1.3;
            } else {
                step *= 0.5;
            }
        }
        if v > best.0 {
            best = (v, params);
        }
    }
    let psi = to_state(&best.1);
    Ok((best.0, psi))
}

/// Pointwise deviation of the corrected family `R o N o rotate-encode-unrotate`
/// at parameter zero, evaluated at a caller-supplied recovery.
pub struct DeltaPointStar {
    pub value: f64,
    /// Worst-case purified distance of the corrected channel from the
    /// identity (heuristic search; the corrected channel is never isometric).
    pub achieved_epsilon: f64,
    /// When the caller stated the epsilon its recovery is supposed to
    /// achieve: whether the corrected channel reproduces it within 1e-6.
    pub epsilon_matches: Option<bool>,
}

pub fn delta_point_star(
    code: &U1Code,
    noise: &Channel,
    recovery: &Channel,
    expected_epsilon: Option<f64>,
) -> Result<DeltaPointStar> {
    if noise.dim_in() != code.dim_s() {
        return Err(SymmetryError::CompositionMismatch {
            got_in: noise.dim_in(),
            got_out: noise.dim_out(),
            want_in: code.dim_s(),
            want_out: noise.dim_out(),
        });
    }
    if recovery.dim_in() != noise.dim_out() || recovery.dim_out() != code.dim_l() {
        return Err(SymmetryError::CompositionMismatch {
            got_in: recovery.dim_in(),
            got_out: recovery.dim_out(),
            want_in: noise.dim_out(),
            want_out: code.dim_l(),
        });
    }
    let (kraus0, dkraus0) = conjugated_family(code)?;
    let mut fronts = Vec::new();
    for r in recovery.kraus() {
        for n in noise.kraus() {
            fronts.push(r.mul(n)?);
        }
    }
    let mut kraus = Vec::with_capacity(fronts.len() * kraus0.len());
    let mut dkraus = Vec::with_capacity(kraus.capacity());
    for m in &fronts {
        for (k, dk) in kraus0.iter().zip(dkraus0.iter()) {
            kraus.push(m.mul(k)?);
            dkraus.push(m.mul(dk)?);
        }
    }
    let corrected = Channel::new(kraus.clone())?;
    let achieved = worst_case_purified_distance_restarts(
        &corrected,
        &Channel::identity(code.dim_l()),
        16,
    )?
    .value;
    let epsilon_matches = expected_epsilon.map(|e| (achieved - e).abs() <= 1e-6);
    let qfi = channel_qfi_at_zero(&kraus, &dkraus)?;
    Ok(DeltaPointStar {
        value: qfi.value.max(0.0).sqrt(),
        achieved_epsilon: achieved,
        epsilon_matches,
    })
}

/// Certification labels and diagnostics accompanying a [`SymmetryReport`].
pub struct SymmetryFlags {
    pub group: Certification,
    pub group_diamond: Certification,
    pub frak_b: Certification,
    /// Logical eigenvalues (largest, smallest) anchoring the charge
    /// fluctuation.
    pub chi_eigenvalues: (f64, f64),
    /// Group parameter at which the worst-case deviation was attained.
    pub theta_group: f64,
}

/// All symmetry-violation measures of a code in one pass.
pub struct SymmetryReport {
    pub delta_group: f64,
    pub delta_group_choi: f64,
    pub delta_group_diamond: f64,
    pub delta_point: f64,
    pub delta_charge: f64,
    pub chi: f64,
    pub frak_b: f64,
    pub flags: SymmetryFlags,
}

pub fn symmetry_report(code: &U1Code) -> Result<SymmetryReport> {
    let (group, theta_group) = delta_group_detailed(code)?;
    let diamond = if code.is_isometric() {
        DistanceResult {
            value: group.value,
            certification: Certification::Exact,
            witness: None,
        }
    } else {
        delta_group_diamond(code)?
    };
    let choi = delta_group_choi(code)?;
    let point = delta_point(code)?;
    let charge = delta_charge(code)?;
    let (chi, chi_eigenvalues) = charge_fluctuation_detailed(code)?;
    let b = frak_b(code)?;
    Ok(SymmetryReport {
        delta_group: group.value,
        delta_group_choi: choi,
        delta_group_diamond: diamond.value,
        delta_point: point,
        delta_charge: charge,
        chi,
        frak_b: b.value,
        flags: SymmetryFlags {
            group: group.certification,
            group_diamond: diamond.certification,
            frak_b: b.certification,
            chi_eigenvalues,
            theta_group,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::U1Rep;

    fn diag_rep(values: Vec<f64>) -> U1Rep {
        U1Rep::new(Operator::diagonal(values)).expect("rational diagonal charge")
    }

    fn code_from_isometry(w: Operator, hl: Vec<f64>, hs: Vec<f64>) -> U1Code {
        let enc = Channel::from_isometry(w).expect("isometry");
        U1Code::new(enc, diag_rep(hl), diag_rep(hs)).expect("valid code")
    }

    fn trivial_code() -> U1Code {
        code_from_isometry(Operator::identity(2), vec![0.5, -0.5], vec![0.5, -0.5])
    }

    /// Identity encoder with H_S = Z, H_L = Z/2: overlap at theta is
    /// exp(-i Z theta / 2), so the worst-case deviation is |sin(theta/2)|,
    /// maximal (= 1) at theta = pi within the common period 2 pi.
    fn half_phase_code() -> U1Code {
        code_from_isometry(Operator::identity(2), vec![0.5, -0.5], vec![1.0, -1.0])
    }

    fn random_isometry(rows: usize, cols: usize, seed: u64) -> Operator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<C64> = (0..rows * cols)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let raw = Operator::from_rows(rows, cols, data).unwrap();
        let mut basis: Vec<Vec<C64>> = Vec::new();
        for c in 0..cols {
            let mut v: Vec<C64> = (0..rows).map(|r| raw.get(r, c)).collect();
            for _ in 0..2 {
                for prev in &basis {
                    let ip: C64 = prev.iter().zip(v.iter()).map(|(p, x)| p.conj() * x).sum();
                    for (x, p) in v.iter_mut().zip(prev.iter()) {
                        *x -= ip * p;
                    }
                }
            }
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for z in &mut v {
                *z /= norm;
            }
            basis.push(v);
        }
        Operator::from_fn(rows, cols, |r, c| basis[c][r])
    }

    fn random_code(seed: u64, ds: usize) -> U1Code {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7_777));
        let w = random_isometry(ds, 2, seed);
        let hs: Vec<f64> = (0..ds).map(|_| rng.gen_range(-3i64..=3) as f64).collect();
        let hs = if hs.iter().all(|&x| x == hs[0]) {
            let mut h = hs;
            h[0] += 1.0;
            h
        } else {
            hs
        };
        code_from_isometry(w, vec![1.0, -1.0], hs)
    }

    #[test]
    fn trivial_code_has_no_deviation() {
        let code = trivial_code();
        assert!(delta_group(&code).unwrap().value < 1e-9);
        assert!(delta_point(&code).unwrap() < 1e-7);
        assert!(delta_charge(&code).unwrap() < 1e-10);
        // pulled-back charge is Z/2 itself
        assert!((charge_fluctuation(&code).unwrap() - 1.0).abs() < 1e-10);
        // dual of H_S^2 is 1/4, variance maximal (1/4) on the equator
        let b = frak_b(&code).unwrap();
        assert!((b.value - std::f64::consts::SQRT_2).abs() < 1e-8);
        assert!(matches!(b.certification, Certification::Exact));
    }

    #[test]
    fn half_phase_code_measures() {
        let code = half_phase_code();
        assert!((code.tau() - 2.0 * std::f64::consts::PI).abs() < 1e-9);
        let (g, theta) = delta_group_detailed(&code).unwrap();
        assert!((g.value - 1.0).abs() < 1e-9);
        assert!((theta - std::f64::consts::PI).abs() < 1e-6);
        // single-Kraus family exp(-i Z theta / 2): Fisher information 1
        assert!((delta_point(&code).unwrap() - 1.0).abs() < 1e-9);
        assert!((delta_charge(&code).unwrap() - 1.0).abs() < 1e-10);
        // trace overlap |cos(theta/2)| also reaches zero at theta = pi
        assert!((delta_group_choi(&code).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn binned_overlap_matches_direct_product() {
        let code = random_code(3, 6);
        let w = code.isometry().unwrap();
        let bins = OverlapBins::build(w, code.physical().charge()).unwrap();
        let hl = code.logical().charge().to_dense().unwrap();
        let hs = code.physical().charge().to_dense().unwrap();
        for k in 0..50 {
            let theta = code.tau() * k as f64 / 50.0 + 0.0137;
            let fast = bins.overlap_at(&hl, theta).unwrap();
            let us = herm_unitary_exp(&hs, -theta).unwrap();
            let ul = herm_unitary_exp(&hl, theta).unwrap();
            let direct = ul.mul(&w.adjoint().mul(&us.mul(w).unwrap()).unwrap()).unwrap();
            assert!(fast.approx_eq(&direct, 1e-9));
        }
    }

    #[test]
    fn group_deviation_invariant_under_physical_basis_change() {
        let code = random_code(11, 5);
        let g1 = delta_group(&code).unwrap().value;
        let u = random_isometry(5, 5, 99);
        let w2 = u.mul(code.isometry().unwrap()).unwrap();
        let hs2 = u
            .mul(&code.physical().charge().to_dense().unwrap())
            .unwrap()
            .mul(&u.adjoint())
            .unwrap();
        let enc = Channel::from_isometry(w2).unwrap();
        let rotated = U1Code::new(
            enc,
            diag_rep(vec![1.0, -1.0]),
            U1Rep::new(symmetrize(&hs2)).unwrap(),
        )
        .unwrap();
        let g2 = delta_group(&rotated).unwrap().value;
        assert!((g1 - g2).abs() < 1e-7, "g1={g1} g2={g2}");
    }

    #[test]
    fn charge_scaling_moves_units() {
        let code = random_code(5, 5);
        let scaled = {
            let hl: Vec<f64> = code
                .logical()
                .charge()
                .diag_slice()
                .unwrap()
                .iter()
                .map(|x| 2.0 * x)
                .collect();
            let hs: Vec<f64> = code
                .physical()
                .charge()
                .diag_slice()
                .unwrap()
                .iter()
                .map(|x| 2.0 * x)
                .collect();
            code_from_isometry(code.isometry().unwrap().clone(), hl, hs)
        };
        let dp1 = delta_point(&code).unwrap();
        let dp2 = delta_point(&scaled).unwrap();
        assert!((dp2 - 2.0 * dp1).abs() <= 1e-8 * dp1.max(1.0));
        let dc1 = delta_charge(&code).unwrap();
        let dc2 = delta_charge(&scaled).unwrap();
        assert!((dc2 - 2.0 * dc1).abs() <= 1e-8 * dc1.max(1.0));
        let b1 = frak_b(&code).unwrap().value;
        let b2 = frak_b(&scaled).unwrap().value;
        assert!((b2 - 2.0 * b1).abs() <= 1e-6 * b1.max(1.0));
        let g1 = delta_group(&code).unwrap().value;
        let g2 = delta_group(&scaled).unwrap().value;
        assert!((g1 - g2).abs() <= 1e-7);
    }

    #[test]
    fn point_dominates_charge_on_random_codes() {
        for seed in 0..10 {
            let code = random_code(seed, 4 + (seed as usize % 3));
            let dp = delta_point(&code).unwrap();
            let dc = delta_charge(&code).unwrap();
            assert!(dp >= dc - 1e-7, "seed {seed}: dp={dp} dc={dc}");
        }
    }

    #[test]
    fn fluctuation_bound_capped_by_physical_range() {
        for seed in 0..6 {
            let code = random_code(seed + 40, 5);
            let cap = 2f64.sqrt() * spectral_range(code.physical().charge()).unwrap();
            let b = frak_b(&code).unwrap().value;
            assert!(b <= cap + 1e-7, "seed {seed}: b={b} cap={cap}");
        }
    }

    #[test]
    fn report_is_coherent_for_isometric_codes() {
        let code = random_code(21, 5);
        let rep = symmetry_report(&code).unwrap();
        assert!((rep.delta_group_diamond - rep.delta_group).abs() < 1e-9);
        assert!(rep.delta_group_choi <= rep.delta_group + 1e-7);
        assert!(rep.delta_point >= rep.delta_charge - 1e-7);
        assert!(rep.delta_group_diamond >= rep.delta_group * rep.delta_group / 2.0 - 1e-7);
        assert!(matches!(rep.flags.group, Certification::Exact));
    }

    #[test]
    fn point_star_reduces_to_point_without_noise() {
        let code = half_phase_code();
        let noise = Channel::identity(2);
        let recovery = Channel::identity(2);
        let r = delta_point_star(&code, &noise, &recovery, Some(0.0)).unwrap();
        assert!((r.value - delta_point(&code).unwrap()).abs() < 1e-6);
        assert!(r.achieved_epsilon < 1e-6);
        assert_eq!(r.epsilon_matches, Some(true));
    }

    #[test]
    fn non_isometric_encoder_takes_heuristic_path() {
        // mix of two isometries: trace preserving but not isometric
        let w1 = random_isometry(3, 2, 1);
        let w2 = random_isometry(3, 2, 2);
        let scale = C64::new(0.5f64.sqrt(), 0.0);
        let enc = Channel::new(vec![w1.scale(scale), w2.scale(scale)]).unwrap();
        let code = U1Code::new(
            enc,
            diag_rep(vec![1.0, -1.0]),
            diag_rep(vec![1.0, 0.0, -1.0]),
        )
        .unwrap();
        let g = delta_group(&code).unwrap();
        assert!(matches!(g.certification, Certification::Heuristic));
        let choi = delta_group_choi(&code).unwrap();
        let dia = delta_group_diamond(&code).unwrap();
        // heuristic worst case is a found value, hence at least the Choi one
        assert!(g.value >= choi - 1e-6);
        assert!(dia.value >= g.value * g.value / 2.0 - 1e-6);
        assert!(dia.value >= choi * choi / 2.0 - 1e-7);
    }

    #[test]
    fn constant_charge_rejected() {
        let enc = Channel::from_isometry(Operator::identity(2)).unwrap();
        let err = U1Code::new(enc, diag_rep(vec![1.0, -1.0]), diag_rep(vec![2.0, 2.0]));
        assert!(matches!(
            err,
            Err(SymmetryError::ConstantCharge { side: "physical" })
        ));
    }
}
