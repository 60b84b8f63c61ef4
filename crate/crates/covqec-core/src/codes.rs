//! Concrete code families with closed-form expectations.
//!
//! Two families are constructed explicitly: interpolated thermodynamic codes
//! on `n` qubits (two Dicke-plus-extremal-string codewords, total-spin
//! charge) and shortened first-order Reed-Muller codes on `2^t - 1` qubits.
//! Both come with closed-form records for every symmetry measure so the
//! numerical pipeline can be cross-checked end to end, plus the two-copy
//! repetition code used by the reference-frame protocol.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::channel::{Channel, ChannelError, U1Rep};
use crate::metric::{golden_max, scan_max_periodic};
use crate::spectral::{eigh, fix_row_leg, Operator, SpectralError};
use crate::symmetry::{SymmetryError, U1Code};

type Result<T> = std::result::Result<T, CodesError>;

/// Dense state-vector constructions keep a full `2^n` amplitude vector per
/// codeword; beyond this cap callers must rely on closed forms.
pub const DENSE_SITE_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum CodesError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error("thermodynamic parameters need n > m >= 2, n+m even, 0 <= q <= 1; got n={n} m={m} q={q}")]
    BadThermoParams { n: usize, m: usize, q: f64 },
    #[error("Dicke parameters need |m| <= n and n+m even; got n={n} m={m}")]
    BadDickeParams { n: usize, m: i64 },
    #[error("supported Reed-Muller orders are t in {{3, 4}}; got {t}")]
    BadRmOrder { t: usize },
    #[error("dense construction capped at {cap} sites; got n={n}")]
    TooManySites { n: usize, cap: usize },
    #[error("recovery kernel vectors collide at m = n-2 (n={n}, m={m}); no recovery is defined there")]
    RecoveryDegenerate { n: usize, m: usize },
    #[error("repetition code needs logical dimension >= 2; got {d}")]
    BadRepetitionDim { d: usize },
}

/// Parameters of the interpolated thermodynamic code: `n` qubits, logical
/// gap `m`, interpolation weight `q` (0 = exactly covariant, 1 = exactly
/// error-correcting under single erasure).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoParams {
    pub n: usize,
    pub m: usize,
    pub q: f64,
}

impl ThermoParams {
    pub fn new(n: usize, m: usize, q: f64) -> Result<Self> {
        if m < 2 || n <= m || (n + m) % 2 != 0 || !(0.0..=1.0).contains(&q) || !q.is_finite() {
            return Err(CodesError::BadThermoParams { n, m, q });
        }
        Ok(ThermoParams { n, m, q })
    }
}

/// Parameters of the shortened first-order Reed-Muller code on `2^t - 1`
/// qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmParams {
    pub t: usize,
}

impl RmParams {
    pub fn new(t: usize) -> Result<Self> {
        if !(3..=4).contains(&t) {
            return Err(CodesError::BadRmOrder { t });
        }
        Ok(RmParams { t })
    }

    pub fn sites(&self) -> usize {
        (1 << self.t) - 1
    }
}

/// Closed-form values of the symmetry measures for a code family, used to
/// cross-check the numerical pipeline and to reach system sizes where dense
/// construction is impossible.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormRecord {
    pub epsilon_tilde: f64,
    pub epsilon_leading: f64,
    pub delta_group: f64,
    pub delta_point: f64,
    pub delta_charge: f64,
    pub chi: f64,
    pub frak_b: f64,
    /// Coefficient `c` in `E^dag(H_S) = c Z_L`.
    pub dual_hs_coeff: f64,
    pub notes: String,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Dicke state on `n` qubits with total-Z eigenvalue `-m`: the uniform
/// superposition over all bitstrings of weight `(n+m)/2`. Leftmost bit is
/// the most significant index digit.
pub fn dicke_state(n: usize, m: i64) -> Result<Operator> {
    if m.unsigned_abs() as usize > n || (n as i64 + m) % 2 != 0 {
        return Err(CodesError::BadDickeParams { n, m });
    }
    if n > DENSE_SITE_CAP {
        return Err(CodesError::TooManySites {
            n,
            cap: DENSE_SITE_CAP,
        });
    }
    let weight = ((n as i64 + m) / 2) as u32;
    let amp = 1.0 / (binomial(n, weight as usize) as f64).sqrt();
    let mut data = vec![C64::new(0.0, 0.0); 1 << n];
    for (i, slot) in data.iter_mut().enumerate() {
        if (i as u32).count_ones() == weight {
            *slot = C64::new(amp, 0.0);
        }
    }
    Ok(Operator::col_vector(data))
}

/// Diagonal of the total-spin charge `H_S = -1/2 sum_l Z_l` in the
/// computational basis: entry `i` is `weight(i) - n/2`.
fn spin_charge_diag(n: usize) -> Vec<f64> {
    (0..1usize << n)
        .map(|i| i.count_ones() as f64 - n as f64 / 2.0)
        .collect()
}

fn codeword_pair_code(c0: Operator, c1: Operator, m_half: f64, n: usize) -> Result<U1Code> {
    let dim = 1usize << n;
    let w = Operator::from_fn(dim, 2, |r, c| {
        if c == 0 {
            c0.get(r, 0)
        } else {
            c1.get(r, 0)
        }
    });
    let encoder = Channel::from_isometry(w)?;
    let logical = U1Rep::new(Operator::diagonal(vec![m_half, -m_half]))?;
    let physical = U1Rep::new(Operator::diagonal(spin_charge_diag(n)))?;
    Ok(U1Code::new(encoder, logical, physical)?)
}

/// Interpolated thermodynamic code: codewords
/// `c0 = sqrt(n/(n+qm)) |m_n> + sqrt(qm/(n+qm)) |(-n)_n>` and the partner
/// with both Dicke labels negated, charges `H_L = (m/2) Z_L` and
/// `H_S = -1/2 sum_l Z_l`.
pub fn thermo_code(p: ThermoParams) -> Result<U1Code> {
    let ThermoParams { n, m, q } = p;
    if n > DENSE_SITE_CAP {
        return Err(CodesError::TooManySites {
            n,
            cap: DENSE_SITE_CAP,
        });
    }
    let a = (n as f64 / (n as f64 + q * m as f64)).sqrt();
    let b = (q * m as f64 / (n as f64 + q * m as f64)).sqrt();
    let mi = m as i64;
    let ni = n as i64;
    let c0 = dicke_state(n, mi)?
        .scale_re(a)
        .add(&dicke_state(n, -ni)?.scale_re(b))?;
    let c1 = dicke_state(n, -mi)?
        .scale_re(a)
        .add(&dicke_state(n, ni)?.scale_re(b))?;
    codeword_pair_code(c0, c1, m as f64 / 2.0, n)
}

/// Closed forms for every symmetry measure of the thermodynamic family.
pub fn thermo_closed_forms(p: ThermoParams) -> ClosedFormRecord {
    let n = p.n as f64;
    let m = p.m as f64;
    let q = p.q;
    let s = n + q * m;
    let factor = ((n + m) * (n + (2.0 * q - 1.0) * m)).sqrt() / s;
    ClosedFormRecord {
        epsilon_tilde: (0.5 - factor / 2.0).max(0.0).sqrt(),
        epsilon_leading: (1.0 - q) * m / (2.0 * n),
        delta_group: (1.0 - ((n - q * m) / s).powi(2)).max(0.0).sqrt(),
        delta_point: (m + n) * (q * m / s).sqrt(),
        delta_charge: q * m * (n + m) / s,
        chi: m * n * (1.0 - q) / s,
        frak_b: (2.0 * m * n * (m + q * n) / s).sqrt(),
        dual_hs_coeff: m * n * (1.0 - q) / (2.0 * s),
        notes: format!("thermodynamic family n={} m={} q={}", p.n, p.m, q),
    }
}

/// Lower bound on the recovery inaccuracy of the thermodynamic family under
/// uniform single-site erasure, from the charge fluctuation against the
/// erasure cap on the charge-regularization quantity: `chi / (2n)`.
pub fn thermo_epsilon_lower(p: ThermoParams) -> f64 {
    let n = p.n as f64;
    let m = p.m as f64;
    (1.0 - p.q) * m / (2.0 * (n + p.q * m))
}

/// Per-site recovery kernels for the thermodynamic family under single-site
/// erasure. By permutation symmetry of Dicke states the same kernels serve
/// every erased site: the two operators map the surviving `n-1` qubits back
/// to the logical space, and `span` collects the four orthonormal vectors
/// they act on. States outside that span carry no code weight at leading
/// order; completion onto them is materialized only when assembling the
/// corrected channel, where it enters through a rank-limited positive term.
pub struct ThermoRecovery {
    /// `|0_L><r0| + |1_L><phi1|` with `r0 = |(m-1)_{n-1}>`.
    pub a_tilde: Operator,
    /// `|0_L><phi0| + |1_L><r1|` with `r1 = |(-m+1)_{n-1}>`.
    pub b_tilde: Operator,
    /// `2^{n-1} x 4` orthonormal columns spanning the recognized subspace.
    pub span: Operator,
    /// Coherence retention of the recovered channel:
    /// `sqrt((n+m)(n+(2q-1)m)) / (n+qm)`.
    pub off_diag_factor: f64,
}

pub fn thermo_optimal_recovery(p: ThermoParams) -> Result<ThermoRecovery> {
    let ThermoParams { n, m, q } = p;
    if n > DENSE_SITE_CAP {
        return Err(CodesError::TooManySites {
            n,
            cap: DENSE_SITE_CAP,
        });
    }
    if m == n - 2 {
        return Err(CodesError::RecoveryDegenerate { n, m });
    }
    let nf = n as f64;
    let mf = m as f64;
    let denom = nf + (2.0 * q - 1.0) * mf;
    let ca = ((nf - mf) / denom).sqrt();
    let cb = (2.0 * q * mf / denom).sqrt();
    let k = n - 1;
    let mi = m as i64;
    let ki = k as i64;
    let r0 = dicke_state(k, mi - 1)?;
    let r1 = dicke_state(k, -mi + 1)?;
    let phi1 = dicke_state(k, -mi - 1)?
        .scale_re(ca)
        .add(&dicke_state(k, ki)?.scale_re(cb))?;
    let phi0 = dicke_state(k, mi + 1)?
        .scale_re(ca)
        .add(&dicke_state(k, -ki)?.scale_re(cb))?;
    let dim = 1usize << k;
    let bra_rows = |top: &Operator, bot: &Operator| {
        Operator::from_fn(2, dim, |r, c| {
            if r == 0 {
                top.get(c, 0).conj()
            } else {
                bot.get(c, 0).conj()
            }
        })
    };
    let a_tilde = bra_rows(&r0, &phi1);
    let b_tilde = bra_rows(&phi0, &r1);
    let span = Operator::from_fn(dim, 4, |r, c| {
        [&r0, &phi1, &phi0, &r1][c].get(r, 0)
    });
    let factor = ((nf + mf) * denom).sqrt() / (nf + q * mf);
    Ok(ThermoRecovery {
        a_tilde,
        b_tilde,
        span,
        off_diag_factor: factor,
    })
}

/// Recovered logical channel of the thermodynamic code under uniform
/// single-site erasure with the kernel recovery: for each erased site the
/// surviving qubits pass through the kernels, and weight outside the
/// recognized span is deposited on the first logical basis state through the
/// positive completion operator `1 - sum_x (Q^dag V_x)^dag (Q^dag V_x)`.
pub fn thermo_corrected_channel(p: ThermoParams) -> Result<Channel> {
    let recovery = thermo_optimal_recovery(p)?;
    let code = thermo_code(p)?;
    let w = code.isometry().expect("thermo encoder is isometric");
    let n = p.n;
    let dims = vec![2usize; n];
    let site_weight = (1.0 / n as f64).sqrt();
    let mut kraus = Vec::new();
    for l in 0..n {
        let mut span_gram = Operator::identity(2);
        for x in 0..2 {
            let vx = fix_row_leg(w, &dims, l, x)?;
            kraus.push(recovery.a_tilde.mul(&vx)?.scale_re(site_weight));
            kraus.push(recovery.b_tilde.mul(&vx)?.scale_re(site_weight));
            let in_span = recovery.span.adjoint().mul(&vx)?;
            span_gram = span_gram.sub(&in_span.adjoint().mul(&in_span)?)?;
        }
        let comp = eigh(&span_gram)?;
        for (j, &mu) in comp.values.iter().enumerate() {
            if mu > 1e-12 {
                let u = comp.vectors.column(j);
                kraus.push(Operator::from_fn(2, 2, |r, c| {
                    if r == 0 {
                        (mu / n as f64).sqrt() * u.get(c, 0).conj()
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }));
            }
        }
    }
    Ok(Channel::new(kraus)?)
}

/// Shortened first-order Reed-Muller code on `n = 2^t - 1` qubits: codeword
/// bitstrings are the evaluations of the nonconstant linear Boolean forms at
/// the nonzero points of `F_2^t`, giving `2^t` strings per logical basis
/// state (complemented for the second one). Charges are `H_L = Z_L / 2` and
/// the total-spin charge.
pub fn rm_code(p: RmParams) -> Result<U1Code> {
    let t = p.t;
    let n = p.sites();
    let words = rm_codewords(t);
    let amp = 1.0 / ((1usize << t) as f64).sqrt();
    let dim = 1usize << n;
    let full = dim - 1;
    let mut d0 = vec![C64::new(0.0, 0.0); dim];
    let mut d1 = vec![C64::new(0.0, 0.0); dim];
    for &wd in &words {
        d0[wd] = C64::new(amp, 0.0);
        d1[wd ^ full] = C64::new(amp, 0.0);
    }
    codeword_pair_code(
        Operator::col_vector(d0),
        Operator::col_vector(d1),
        0.5,
        n,
    )
}

/// Codewords of the shortened length-`2^t - 1` first-order code as basis
/// indices (leftmost bit most significant). Entry `a` evaluates the linear
/// form `z -> a . z` at the points `z = 1 .. 2^t - 1` in increasing order.
pub fn rm_codewords(t: usize) -> Vec<usize> {
    let n = (1usize << t) - 1;
    (0..1usize << t)
        .map(|a| {
            let mut idx = 0usize;
            for (j, z) in (1..=n).enumerate() {
                let bit = ((a & z).count_ones() & 1) as usize;
                idx |= bit << (n - 1 - j);
            }
            idx
        })
        .collect()
}

/// Closed forms for the shortened Reed-Muller family. The code is an exact
/// single-erasure code with a pulled-back charge of zero, so only the group
/// and pointwise deviations are nontrivial.
pub fn rm_closed_forms(p: RmParams) -> ClosedFormRecord {
    let n = p.sites() as f64;
    ClosedFormRecord {
        epsilon_tilde: 0.0,
        epsilon_leading: 0.0,
        delta_group: (1.0 - ((n - 1.0) / (n + 1.0)).powi(2)).sqrt(),
        delta_point: (n + 1.0).sqrt(),
        delta_charge: 1.0,
        chi: 0.0,
        frak_b: (2.0 * n).sqrt(),
        dual_hs_coeff: 0.0,
        notes: format!("shortened Reed-Muller t={} (n={})", p.t, p.sites()),
    }
}

/// Two-copy repetition encoding of an abstract two-level system into the
/// extreme levels of a `d_L`-dimensional space, with the decoding channel
/// that corrects arbitrary noise on the first copy: Kraus
/// `R_k = |0><k, 0| + |1><k+e mod d, e|` plus rank-one completion on the
/// ancilla levels strictly between `0` and `e = d_L - 1`.
pub fn repetition_code(d_l: usize) -> Result<(Channel, Channel)> {
    if d_l < 2 {
        return Err(CodesError::BadRepetitionDim { d: d_l });
    }
    let e = d_l - 1;
    let dd = d_l * d_l;
    let enc = Operator::from_fn(dd, 2, |r, c| {
        let target = if c == 0 { 0 } else { e * d_l + e };
        if r == target {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let encoder = Channel::from_isometry(enc)?;
    let mut kraus = Vec::new();
    for k in 0..d_l {
        let bra0 = k * d_l;
        let bra1 = ((k + e) % d_l) * d_l + e;
        kraus.push(Operator::from_fn(2, dd, |r, c| {
            if (r == 0 && c == bra0) || (r == 1 && c == bra1) {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }));
    }
    for k in 0..d_l {
        for a in 1..e {
            let bra = k * d_l + a;
            kraus.push(Operator::from_fn(2, dd, |r, c| {
                if r == 0 && c == bra {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }));
        }
    }
    Ok((encoder, Channel::new(kraus)?))
}

/// Alternate-arrangement evaluation of the thermodynamic closed forms; kept
/// separate from [`thermo_closed_forms`] so transcription slips in either
/// arrangement show up as a disagreement.
pub fn thermo_closed_forms_alt(p: ThermoParams) -> ClosedFormRecord {
    let n = p.n as f64;
    let m = p.m as f64;
    let q = p.q;
    let s = n + q * m;
    // group deviation from the scan of the overlap profile
    // P(theta) = sqrt(1 - ((n + qm cos((n+m) theta/2)) / (n+qm))^2)
    let profile = |theta: f64| -> std::result::Result<f64, std::convert::Infallible> {
        let re = (n + q * m * ((n + m) * theta / 2.0).cos()) / s;
        Ok((1.0 - re * re).max(0.0).sqrt())
    };
    let tau = 2.0 * std::f64::consts::PI;
    let (delta_group, _) = scan_max_periodic(&profile, tau, 4096).unwrap();
    let x = (n + (2.0 * q - 1.0) * m) / (2.0 * s);
    let y = (n + m) / (2.0 * s);
    let coeff = {
        let a2 = n / s;
        let b2 = q * m / s;
        a2 * m / 2.0 - b2 * n / 2.0
    };
    let chi = 2.0 * coeff;
    let c2 = m * n * (m + q * n) / (4.0 * s);
    ClosedFormRecord {
        epsilon_tilde: (0.5 - (x * y).sqrt()).max(0.0).sqrt(),
        epsilon_leading: ((1.0 - q) * m) / 2.0 / n,
        delta_group,
        delta_point: (q * m * (m + n) * (m + n) / s).sqrt(),
        delta_charge: m - chi,
        chi,
        frak_b: (8.0 * c2).sqrt(),
        dual_hs_coeff: coeff,
        notes: String::new(),
    }
}

/// Alternate-arrangement evaluation of the Reed-Muller closed forms.
pub fn rm_closed_forms_alt(p: RmParams) -> ClosedFormRecord {
    let n = p.sites() as f64;
    let profile = |theta: f64| -> std::result::Result<f64, std::convert::Infallible> {
        let re = (n + ((n + 1.0) * theta / 2.0).cos()) / (n + 1.0);
        Ok((1.0 - re * re).max(0.0).sqrt())
    };
    let tau = 2.0 * std::f64::consts::PI;
    let (coarse, at) = scan_max_periodic(&profile, tau, 4096).unwrap();
    let width = tau / 4096.0;
    let (refined, _) = golden_max(&profile, at - width, at + width, 1e-12).unwrap();
    ClosedFormRecord {
        epsilon_tilde: 0.0,
        epsilon_leading: 0.0,
        delta_group: coarse.max(refined),
        delta_point: (n + 1.0) / (n + 1.0).sqrt(),
        delta_charge: 1.0,
        chi: 0.0,
        frak_b: (8.0 * (n / 4.0)).sqrt(),
        dual_hs_coeff: 0.0,
        notes: String::new(),
    }
}
