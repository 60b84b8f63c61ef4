//! Kraus-form quantum channels and the algebra on them: Choi matrices,
//! duals, complementary channels, composition, tensor products, convex
//! mixtures, and the stock channels used throughout the crate (erasure,
//! dephasing with a Z-axis rotation, unitary conjugation). Also hosts
//! periodic U(1) charge representations.
//!
//! Conventions fixed here and relied on everywhere else:
//! * Choi ordering is input-major: `J = sum_ij |i><j|_in (x) Phi(|i><j|)_out`,
//!   so `Tr_out J = 1_in` and `Tr J = dim_in`.
//! * Kraus lists are stored exactly as given; no canonicalization. Gauge
//!   sensitive consumers (charge-representability programs) state which
//!   representation they use.
//! * Erasure appends an explicit vacuum level as the last basis index of
//!   each erased site.

use thiserror::Error;

use crate::spectral::{self, eigh, herm_unitary_exp, kron, Operator, SpectralError, ZERO};
use crate::tol::{FIT_TOL, STRUCT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("kraus list is empty")]
    Empty,
    #[error("kraus operator {index} is {rows}x{cols}, expected {dim_out}x{dim_in}")]
    KrausShape {
        index: usize,
        rows: usize,
        cols: usize,
        dim_out: usize,
        dim_in: usize,
    },
    #[error("channel is not trace preserving (residual {residual:.3e})")]
    NotTracePreserving { residual: f64 },
    #[error("dimension mismatch: {left} vs {right} in {operation}")]
    DimMismatch {
        left: usize,
        right: usize,
        operation: &'static str,
    },
    #[error("mixture probabilities must be nonnegative and sum to 1 (got sum {sum})")]
    BadProbability { sum: f64 },
    #[error("operator is not unitary or isometric (residual {residual:.3e})")]
    NotIsometric { residual: f64 },
    #[error("charge spectrum is not rational within tolerance (gap {gap})")]
    NonRationalSpectrum { gap: f64 },
    #[error("periodicity check failed (residual {residual:.3e})")]
    NotPeriodic { residual: f64 },
    #[error("channel is not a rotated dephasing channel (residual {residual:.3e})")]
    NotDephasing { residual: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

type Result<T> = std::result::Result<T, ChannelError>;

/// A completely positive trace-preserving map in Kraus form.
#[derive(Debug, Clone)]
pub struct Channel {
    kraus: Vec<Operator>,
    dim_in: usize,
    dim_out: usize,
}

impl Channel {
    /// Validate shapes and trace preservation, then freeze the Kraus list.
    pub fn new(kraus: Vec<Operator>) -> Result<Self> {
        let first = kraus.first().ok_or(ChannelError::Empty)?;
        let (dim_out, dim_in) = (first.rows(), first.cols());
        for (index, k) in kraus.iter().enumerate() {
            if k.rows() != dim_out || k.cols() != dim_in {
                return Err(ChannelError::KrausShape {
                    index,
                    rows: k.rows(),
                    cols: k.cols(),
                    dim_out,
                    dim_in,
                });
            }
        }
        let mut gram = Operator::zeros(dim_in, dim_in);
        for k in &kraus {
            gram = gram.add(&k.adjoint().mul(k)?)?;
        }
        let residual = gram.sub(&Operator::identity(dim_in))?.max_abs();
        if residual > STRUCT_TOL {
            return Err(ChannelError::NotTracePreserving { residual });
        }
        Ok(Channel {
            kraus,
            dim_in,
            dim_out,
        })
    }

    pub fn kraus(&self) -> &[Operator] {
        &self.kraus
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn identity(dim: usize) -> Self {
        Channel {
            kraus: vec![Operator::identity(dim)],
            dim_in: dim,
            dim_out: dim,
        }
    }

    /// Unitary conjugation `U (.) U^dag`.
    pub fn from_unitary(u: Operator) -> Result<Self> {
        if u.rows() != u.cols() {
            return Err(ChannelError::DimMismatch {
                left: u.rows(),
                right: u.cols(),
                operation: "from_unitary",
            });
        }
        Self::from_isometry(u)
    }

    /// Isometric conjugation `V (.) V^dag` with `V^dag V = 1`.
    pub fn from_isometry(v: Operator) -> Result<Self> {
        let gram = v.adjoint().mul(&v)?;
        let residual = gram.sub(&Operator::identity(v.cols()))?.max_abs();
        if residual > STRUCT_TOL {
            return Err(ChannelError::NotIsometric { residual });
        }
        let (dim_out, dim_in) = (v.rows(), v.cols());
        Ok(Channel {
            kraus: vec![v],
            dim_in,
            dim_out,
        })
    }

    /// True when the channel is a single-Kraus isometric conjugation.
    pub fn is_isometric(&self) -> bool {
        if self.kraus.len() != 1 {
            return false;
        }
        let v = &self.kraus[0];
        match v.adjoint().mul(v) {
            Ok(gram) => match gram.sub(&Operator::identity(self.dim_in)) {
                Ok(d) => d.max_abs() <= STRUCT_TOL,
                Err(_) => false,
            },
            Err(_) => false,
        }
    }

    pub fn apply(&self, rho: &Operator) -> Result<Operator> {
        if rho.rows() != self.dim_in || rho.cols() != self.dim_in {
            return Err(ChannelError::DimMismatch {
                left: rho.rows(),
                right: self.dim_in,
                operation: "apply",
            });
        }
        let mut out = Operator::zeros(self.dim_out, self.dim_out);
        for k in &self.kraus {
            out = out.add(&k.mul(rho)?.mul(&k.adjoint())?)?;
        }
        Ok(out)
    }

    /// Adjoint (Heisenberg) action `X -> sum K^dag X K`; unital, not TP.
    pub fn apply_dual(&self, x: &Operator) -> Result<Operator> {
        if x.rows() != self.dim_out || x.cols() != self.dim_out {
            return Err(ChannelError::DimMismatch {
                left: x.rows(),
                right: self.dim_out,
                operation: "apply_dual",
            });
        }
        let mut out = Operator::zeros(self.dim_in, self.dim_in);
        for k in &self.kraus {
            out = out.add(&k.adjoint().mul(x)?.mul(k)?)?;
        }
        Ok(out)
    }

    /// Kraus list of the dual map (adjoints of the originals).
    pub fn dual_kraus(&self) -> Vec<Operator> {
        self.kraus.iter().map(|k| k.adjoint()).collect()
    }

    /// Choi matrix in input-major ordering; PSD with `Tr_out J = 1_in`.
    pub fn choi(&self) -> Operator {
        kraus_choi(&self.kraus, self.dim_in, self.dim_out)
    }

    /// Complementary channel from the stacked-Kraus Stinespring isometry:
    /// environment dimension equals the Kraus count, and the k-th output
    /// basis row of each Kraus operator becomes the k-th complementary
    /// Kraus operator.
    pub fn complementary(&self) -> Channel {
        let r = self.kraus.len();
        let mut comp = Vec::with_capacity(self.dim_out);
        for k in 0..self.dim_out {
            let mut f = Operator::zeros(r, self.dim_in);
            for (i, op) in self.kraus.iter().enumerate() {
                for a in 0..self.dim_in {
                    let v = op.get(k, a);
                    if v != ZERO {
                        f.set(i, a, v);
                    }
                }
            }
            comp.push(f);
        }
        Channel {
            kraus: comp,
            dim_in: self.dim_in,
            dim_out: r,
        }
    }

    /// `after . before` (apply `before` first).
    pub fn compose(after: &Channel, before: &Channel) -> Result<Channel> {
        if before.dim_out != after.dim_in {
            return Err(ChannelError::DimMismatch {
                left: before.dim_out,
                right: after.dim_in,
                operation: "compose",
            });
        }
        let mut kraus = Vec::with_capacity(after.kraus.len() * before.kraus.len());
        for a in &after.kraus {
            for b in &before.kraus {
                kraus.push(a.mul(b)?);
            }
        }
        Ok(Channel {
            kraus,
            dim_in: before.dim_in,
            dim_out: after.dim_out,
        })
    }

    pub fn tensor(a: &Channel, b: &Channel) -> Channel {
        let mut kraus = Vec::with_capacity(a.kraus.len() * b.kraus.len());
        for ka in &a.kraus {
            for kb in &b.kraus {
                kraus.push(kron(ka, kb));
            }
        }
        Channel {
            kraus,
            dim_in: a.dim_in * b.dim_in,
            dim_out: a.dim_out * b.dim_out,
        }
    }

    /// Convex mixture: Kraus lists scaled by `sqrt(p_i)` and concatenated.
    pub fn mix(channels: &[Channel], probs: &[f64]) -> Result<Channel> {
        let first = channels.first().ok_or(ChannelError::Empty)?;
        let sum: f64 = probs.iter().sum();
        if probs.len() != channels.len() || probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(ChannelError::BadProbability { sum });
        }
        let (dim_in, dim_out) = (first.dim_in, first.dim_out);
        let mut kraus = Vec::new();
        for (ch, &p) in channels.iter().zip(probs) {
            if ch.dim_in != dim_in || ch.dim_out != dim_out {
                return Err(ChannelError::DimMismatch {
                    left: ch.dim_in,
                    right: dim_in,
                    operation: "mix",
                });
            }
            let w = p.sqrt();
            for k in &ch.kraus {
                kraus.push(k.scale_re(w));
            }
        }
        Ok(Channel {
            kraus,
            dim_in,
            dim_out,
        })
    }

    /// `U . self . U^dag` for a unitary on matching dimensions.
    pub fn conjugate_by_unitary(&self, u: &Operator) -> Result<Channel> {
        let u_ch = Channel::from_unitary(u.clone())?;
        let u_dag = Channel::from_unitary(u.adjoint())?;
        Channel::compose(&u_ch, &Channel::compose(self, &u_dag)?)
    }
}

/// Choi matrix of a raw Kraus list (no TP requirement).
pub fn kraus_choi(kraus: &[Operator], dim_in: usize, dim_out: usize) -> Operator {
    let n = dim_in * dim_out;
    let mut j = Operator::zeros(n, n);
    for k in kraus {
        for i in 0..dim_in {
            for a in 0..dim_out {
                let left = k.get(a, i);
                if left == ZERO {
                    continue;
                }
                for jj in 0..dim_in {
                    for b in 0..dim_out {
                        let right = k.get(b, jj).conj();
                        if right == ZERO {
                            continue;
                        }
                        let row = i * dim_out + a;
                        let col = jj * dim_out + b;
                        let cur = j.get(row, col);
                        j.set(row, col, cur + left * right);
                    }
                }
            }
        }
    }
    j
}

/// Parameters `(p, phi)` of a rotated dephasing channel
/// `(1-p) e^{-i phi Z/2} (.) e^{i phi Z/2} + p Z e^{-i phi Z/2} (.) e^{i phi Z/2} Z`,
/// canonicalized to `p <= 1/2`; `residual` is the max-entry Choi mismatch of
/// the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingParams {
    pub p: f64,
    pub phi: f64,
    pub residual: f64,
}

/// The rotated dephasing channel with coherence factor `xi = (1-2p) e^{-i phi}`.
pub fn rotated_dephasing(p: f64, phi: f64) -> Channel {
    let rot = herm_unitary_exp(&Operator::diagonal(vec![0.5, -0.5]), -phi).expect("qubit charge");
    let z = Operator::diagonal(vec![1.0, -1.0]);
    let k0 = rot.scale_re((1.0 - p).sqrt());
    let k1 = z.mul(&rot).expect("qubit product").scale_re(p.sqrt());
    Channel {
        kraus: vec![k0, k1],
        dim_in: 2,
        dim_out: 2,
    }
}

pub fn dephasing(p: f64) -> Channel {
    rotated_dephasing(p, 0.0)
}

/// Fit a qubit channel to the rotated dephasing family. Populations must be
/// fixed points and the coherence must transform as `|0><1| -> xi |0><1|`;
/// anything else is rejected with the Choi-mismatch residual.
pub fn extract_dephasing(ch: &Channel) -> Result<DephasingParams> {
    if ch.dim_in != 2 || ch.dim_out != 2 {
        return Err(ChannelError::DimMismatch {
            left: ch.dim_in,
            right: 2,
            operation: "extract_dephasing",
        });
    }
    let mut e01 = Operator::zeros(2, 2);
    e01.set(0, 1, spectral::ONE);
    let coh = ch.apply(&e01)?;
    let xi = coh.get(0, 1);
    let mut p = (1.0 - xi.norm()) / 2.0;
    if p < 0.0 {
        p = 0.0;
    }
    let phi = if xi.norm() <= 1e-15 {
        0.0
    } else {
        let raw = -xi.arg();
        raw.rem_euclid(2.0 * std::f64::consts::PI)
    };
    let residual = ch
        .choi()
        .sub(&rotated_dephasing(p, phi).choi())?
        .max_abs();
    if residual > FIT_TOL {
        return Err(ChannelError::NotDephasing { residual });
    }
    Ok(DephasingParams { p, phi, residual })
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Continued-fraction rational reconstruction with bounded denominator.
fn to_rational(x: f64, max_den: u128) -> Option<(u128, u128)> {
    if x <= 0.0 {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0u128, 1u128, 1u128, 0u128);
    let mut v = x;
    for _ in 0..64 {
        let a = v.floor();
        if a >= 1e18 {
            return None;
        }
        let ai = a as u128;
        let p2 = ai.checked_mul(p1)?.checked_add(p0)?;
        let q2 = ai.checked_mul(q1)?.checked_add(q0)?;
        if q2 > max_den {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let frac = v - a;
        if frac.abs() < 1e-12 {
            break;
        }
        v = 1.0 / frac;
    }
    if q1 == 0 {
        return None;
    }
    let approx = p1 as f64 / q1 as f64;
    if (approx - x).abs() <= 1e-9 * x.max(1.0) {
        let g = gcd_u128(p1, q1);
        Some((p1 / g, q1 / g))
    } else {
        None
    }
}

fn gcd_rational(a: (u128, u128), b: (u128, u128)) -> Option<(u128, u128)> {
    let num = gcd_u128(a.0.checked_mul(b.1)?, b.0.checked_mul(a.1)?);
    let den = a.1.checked_mul(b.1)?;
    let g = gcd_u128(num, den);
    Some((num / g, den / g))
}

/// A U(1) representation generated by a Hermitian charge with rational
/// spectrum, `U_theta = e^{-i H theta}`, periodic with period `tau`.
#[derive(Debug, Clone)]
pub struct U1Rep {
    h: Operator,
    tau: f64,
    /// gcd of the spectral gaps as an exact rational (num, den).
    gap: (u128, u128),
}

impl U1Rep {
    /// Compute the period from the gcd of the spectral gaps; charges whose
    /// gaps are not rational (denominator up to 1e6) are rejected.
    pub fn new(h: Operator) -> Result<Self> {
        let h = Operator::hermitian(h)?;
        // Diagonal charges skip the eigendecomposition: sorting the diagonal
        // gives the spectrum directly, which keeps huge many-body charges
        // (stored as diagonals) out of dense eigen routines.
        let values: Vec<f64> = match h.diag_slice() {
            Some(d) => {
                let mut v = d.to_vec();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            }
            None => eigh(&h)?.values,
        };
        let mut gap: Option<(u128, u128)> = None;
        for w in values.windows(2) {
            let g = w[1] - w[0];
            if g <= 1e-9 {
                continue;
            }
            let r = to_rational(g, 1_000_000).ok_or(ChannelError::NonRationalSpectrum { gap: g })?;
            gap = Some(match gap {
                None => r,
                Some(prev) => {
                    gcd_rational(prev, r).ok_or(ChannelError::NonRationalSpectrum { gap: g })?
                }
            });
        }
        let gap = gap.unwrap_or((1, 1));
        let g = gap.0 as f64 / gap.1 as f64;
        let tau = 2.0 * std::f64::consts::PI / g;
        // periodicity: all relative phases e^{-i (lam_k - lam_0) tau} must
        // close up to the same global phase
        let base = values[0];
        let mut residual = 0.0f64;
        for &lam in &values {
            let phase = ((lam - base) * tau).rem_euclid(2.0 * std::f64::consts::PI);
            residual = residual.max(phase.min(2.0 * std::f64::consts::PI - phase));
        }
        if residual > 1e-8 {
            return Err(ChannelError::NotPeriodic { residual });
        }
        Ok(U1Rep { h, tau, gap })
    }

    pub fn charge(&self) -> &Operator {
        &self.h
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    /// `e^{-i H theta}`. Materializes a dense matrix even for diagonal
    /// charges; at large dimension scale rows against `charge().diag_slice()`
    /// instead of calling this.
    pub fn unitary(&self, theta: f64) -> Operator {
        herm_unitary_exp(&self.h, -theta).expect("validated hermitian charge")
    }
}

/// Smallest common period of two representations (gcd of the gap rationals).
pub fn common_period(a: &U1Rep, b: &U1Rep) -> Result<f64> {
    let g = gcd_rational(a.gap, b.gap).ok_or(ChannelError::NonRationalSpectrum { gap: 0.0 })?;
    Ok(2.0 * std::f64::consts::PI / (g.0 as f64 / g.1 as f64))
}

/// Full erasure `C^d -> C^{d+1}`: every input is replaced by the appended
/// vacuum level, `rho -> |vac><vac| Tr(rho)`.
pub fn full_erasure(d: usize) -> Channel {
    let mut kraus = Vec::with_capacity(d);
    for j in 0..d {
        let mut k = Operator::zeros(d + 1, d);
        k.set(d, j, spectral::ONE);
        kraus.push(k);
    }
    Channel {
        kraus,
        dim_in: d,
        dim_out: d + 1,
    }
}

/// Embedding of `n` qubits into `n` qutrits (vacuum level unused),
/// as an isometric channel.
pub fn qubit_embedding(n: usize) -> Channel {
    let mut iota = Operator::zeros(3, 2);
    iota.set(0, 0, spectral::ONE);
    iota.set(1, 1, spectral::ONE);
    let mut v = Operator::identity(1).to_dense().expect("small");
    for _ in 0..n {
        v = kron(&v, &iota);
    }
    let dim_in = 1 << n;
    let dim_out = 3usize.pow(n as u32);
    Channel {
        kraus: vec![v],
        dim_in,
        dim_out,
    }
}

/// Erasure of site `l` on an `n`-site system of enlarged (qutrit) sites:
/// `rho -> |vac><vac|_l (x) Tr_l(rho)`. Three Kraus operators per site.
pub fn site_erasure(n: usize, l: usize) -> Channel {
    let d = 3usize.pow(n as u32);
    let mut kraus = Vec::with_capacity(3);
    for x in 0..3usize {
        // |vac><x|_l tensor identity elsewhere
        let mut factors: Vec<Operator> = Vec::with_capacity(n);
        for site in 0..n {
            if site == l {
                let mut f = Operator::zeros(3, 3);
                f.set(2, x, spectral::ONE);
                factors.push(f);
            } else {
                factors.push(Operator::identity(3).to_dense().expect("small"));
            }
        }
        let mut k = factors[0].clone();
        for f in &factors[1..] {
            k = kron(&k, f);
        }
        kraus.push(k);
    }
    Channel {
        kraus,
        dim_in: d,
        dim_out: d,
    }
}

/// Uniform mixture of single-site erasures on `n` enlarged sites.
pub fn erasure_mixture(n: usize) -> Result<Channel> {
    let channels: Vec<Channel> = (0..n).map(|l| site_erasure(n, l)).collect();
    let probs = vec![1.0 / n as f64; n];
    Channel::mix(&channels, &probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{partial_trace, C64, ONE};

    #[test]
    fn identity_choi_is_twice_max_entangled() {
        let j = Channel::identity(2).choi();
        // 2|Phi+><Phi+| has entries 1 at the four corners of the (00,11) grid
        for (r, c, want) in [
            (0usize, 0usize, 1.0),
            (0, 3, 1.0),
            (3, 0, 1.0),
            (3, 3, 1.0),
            (1, 1, 0.0),
            (2, 2, 0.0),
        ] {
            assert!((j.get(r, c) - C64::new(want, 0.0)).norm() < 1e-12);
        }
        assert!((j.trace().re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_trace_preserving() {
        let k = Operator::identity(2).scale_re(0.5);
        let err = Channel::new(vec![k]).unwrap_err();
        assert!(matches!(err, ChannelError::NotTracePreserving { .. }));
    }

    #[test]
    fn dephasing_kraus_match_named_construction() {
        let direct = Channel::new(vec![
            Operator::identity(2).scale_re(0.75f64.sqrt()),
            Operator::diagonal(vec![1.0, -1.0]).scale_re(0.25f64.sqrt()),
        ])
        .unwrap();
        let named = dephasing(0.25);
        assert!(direct.choi().approx_eq(&named.choi(), 1e-12));
    }

    #[test]
    fn full_erasure_dual_kills_traceless_charge() {
        let e = full_erasure(2);
        let z_out = Operator::diagonal(vec![1.0, -1.0, 0.0]).to_dense().unwrap();
        let pulled = e.apply_dual(&z_out).unwrap();
        assert!(pulled.max_abs() < 1e-12);
    }

    #[test]
    fn erasure_mixture_kraus_count() {
        let mix = erasure_mixture(3).unwrap();
        assert_eq!(mix.kraus().len(), 9);
        assert_eq!(mix.dim_in(), 27);
    }

    #[test]
    fn u1_unitary_values() {
        let rep = U1Rep::new(Operator::diagonal(vec![0.5, -0.5]).to_dense().unwrap()).unwrap();
        assert!(rep.unitary(0.0).approx_eq(&Operator::identity(2).to_dense().unwrap(), 1e-14));
        let u = rep.unitary(std::f64::consts::PI);
        assert!((u.get(0, 0) - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((u.get(1, 1) - C64::new(0.0, 1.0)).norm() < 1e-12);
        assert!((rep.tau() - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn rational_period_of_scaled_charge() {
        // H = (3/2) Z has gap 3, so tau = 2 pi / 3
        let rep = U1Rep::new(Operator::diagonal(vec![1.5, -1.5]).to_dense().unwrap()).unwrap();
        assert!((rep.tau() - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-10);
    }

    #[test]
    fn extract_dephasing_inverts_xi() {
        // coherence 0.5 e^{-i pi/3} -> p = 0.25, phi = pi/3
        let ch = rotated_dephasing(0.25, std::f64::consts::PI / 3.0);
        let params = extract_dephasing(&ch).unwrap();
        assert!((params.p - 0.25).abs() < 1e-12);
        assert!((params.phi - std::f64::consts::PI / 3.0).abs() < 1e-12);
        assert!(params.residual < 1e-12);
    }

    #[test]
    fn dephasing_p_zero_phi_pi_is_z_up_to_phase() {
        let ch = rotated_dephasing(0.0, std::f64::consts::PI);
        let z = Operator::from_rows(
            2,
            2,
            vec![ONE, ZERO, ZERO, C64::new(-1.0, 0.0)],
        )
        .unwrap();
        let z_ch = Channel::from_unitary(z).unwrap();
        assert!(ch.choi().approx_eq(&z_ch.choi(), 1e-12));
    }

    #[test]
    fn non_dephasing_rejected() {
        // amplitude damping is not in the family
        let mut k0 = Operator::identity(2).to_dense().unwrap();
        k0.set(1, 1, C64::new(0.8f64.sqrt(), 0.0));
        let mut k1 = Operator::zeros(2, 2);
        k1.set(0, 1, C64::new(0.2f64.sqrt(), 0.0));
        let ch = Channel::new(vec![k0, k1]).unwrap();
        let err = extract_dephasing(&ch).unwrap_err();
        assert!(matches!(err, ChannelError::NotDephasing { .. }));
    }

    #[test]
    fn choi_marginal_is_identity() {
        let ch = rotated_dephasing(0.3, 1.1);
        let j = ch.choi();
        let marg = partial_trace(&j, &[2, 2], &[0]).unwrap();
        assert!(marg.approx_eq(&Operator::identity(2).to_dense().unwrap(), 1e-12));
    }
}
