use covqec_core::channel::{rotated_dephasing, Channel};
use covqec_core::metric::{
    channel_qfi_at_zero, choi_fidelity, diamond_distance, pure_state_qfi,
    purified_distance_states, state_fidelity, trace_distance_states, worst_case_purified_distance,
    Certification,
};
use covqec_core::spectral::{herm_unitary_exp, Operator, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Operator {
    let data: Vec<C64> = (0..rows * cols)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Operator::from_rows(rows, cols, data).unwrap()
}

fn random_density(rng: &mut ChaCha8Rng, d: usize) -> Operator {
    let g = random_matrix(rng, d, d);
    let rho = g.mul(&g.adjoint()).unwrap();
    let tr = rho.trace().re;
    rho.scale_re(1.0 / tr)
}

fn random_isometry(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Operator {
    assert!(rows >= cols);
    let mut cols_data: Vec<Vec<C64>> = Vec::new();
    for _ in 0..cols {
        let mut v: Vec<C64> = (0..rows)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        for _ in 0..2 {
            for prev in &cols_data {
                let ov: C64 = prev
                    .iter()
                    .zip(v.iter())
                    .map(|(p, x)| p.conj() * x)
                    .sum();
                for (x, p) in v.iter_mut().zip(prev.iter()) {
                    *x -= ov * p;
                }
            }
        }
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= n;
        }
        cols_data.push(v);
    }
    Operator::from_fn(rows, cols, |i, j| cols_data[j][i])
}

fn random_channel(rng: &mut ChaCha8Rng, din: usize, dout: usize, r: usize) -> Channel {
    let v = random_isometry(rng, dout * r, din);
    let mut kraus = Vec::with_capacity(r);
    for k in 0..r {
        kraus.push(Operator::from_fn(dout, din, |i, j| v.get(k * dout + i, j)));
    }
    Channel::new(kraus).unwrap()
}

#[test]
fn fuchs_van_de_graaf_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..100 {
        let d = 2 + trial % 3;
        let a = random_density(&mut rng, d);
        let b = random_density(&mut rng, d);
        let f = state_fidelity(&a, &b).unwrap();
        let t = trace_distance_states(&a, &b).unwrap();
        assert!(1.0 - f <= t + 1e-9, "lower FvdG failed: f={f} t={t}");
        assert!(
            t <= (1.0 - f * f).max(0.0).sqrt() + 1e-9,
            "upper FvdG failed: f={f} t={t}"
        );
    }
}

#[test]
fn purified_distance_triangle_on_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..60 {
        let d = 2 + trial % 3;
        let a = random_density(&mut rng, d);
        let b = random_density(&mut rng, d);
        let c = random_density(&mut rng, d);
        let pac = purified_distance_states(&a, &c).unwrap();
        let pab = purified_distance_states(&a, &b).unwrap();
        let pbc = purified_distance_states(&b, &c).unwrap();
        assert!(pac <= pab + pbc + 1e-7);
    }
}

#[test]
fn fidelity_monotone_under_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..40 {
        let d = 2 + trial % 2;
        let a = random_density(&mut rng, d);
        let b = random_density(&mut rng, d);
        let ch = random_channel(&mut rng, d, d, 2);
        let before = purified_distance_states(&a, &b).unwrap();
        let after = purified_distance_states(&ch.apply(&a).unwrap(), &ch.apply(&b).unwrap())
            .unwrap();
        assert!(after <= before + 1e-7, "after={after} before={before}");
    }
}

#[test]
fn worst_case_monotone_under_post_processing() {
    // left side is heuristic (a lower bound found by search), right side is
    // exact for isometric pairs, so the inequality is safe to assert
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..6 {
        let v1 = random_isometry(&mut rng, 4, 2);
        let v2 = random_isometry(&mut rng, 4, 2);
        let c1 = Channel::from_isometry(v1).unwrap();
        let c2 = Channel::from_isometry(v2).unwrap();
        let post = random_channel(&mut rng, 4, 2, 2);
        let base = worst_case_purified_distance(&c1, &c2).unwrap();
        assert_eq!(base.certification, Certification::Exact);
        let p1 = Channel::compose(&post, &c1).unwrap();
        let p2 = Channel::compose(&post, &c2).unwrap();
        let processed = worst_case_purified_distance(&p1, &p2).unwrap();
        assert_eq!(processed.certification, Certification::Heuristic);
        assert!(processed.value <= base.value + 1e-7);
    }
}

#[test]
fn worst_case_triangle_on_isometric_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let c: Vec<Channel> = (0..3)
            .map(|_| Channel::from_isometry(random_isometry(&mut rng, 5, 2)).unwrap())
            .collect();
        let p02 = worst_case_purified_distance(&c[0], &c[2]).unwrap().value;
        let p01 = worst_case_purified_distance(&c[0], &c[1]).unwrap().value;
        let p12 = worst_case_purified_distance(&c[1], &c[2]).unwrap().value;
        assert!(p02 <= p01 + p12 + 1e-7);
    }
}

#[test]
fn diamond_choi_chains_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..30 {
        let d = 2 + trial % 2;
        let a = random_channel(&mut rng, d, d, 2);
        let b = random_channel(&mut rng, d, d, 2);
        let dd = diamond_distance(&a, &b).unwrap();
        let f = choi_fidelity(&a, &b).unwrap();
        let ja = a.choi().scale_re(1.0 / d as f64);
        let jb = b.choi().scale_re(1.0 / d as f64);
        let tchoi = trace_distance_states(&ja, &jb).unwrap();
        // diamond dominates the Choi-state trace distance, which dominates 1 - f
        assert!(dd.value >= tchoi - 1e-7);
        assert!(tchoi >= 1.0 - f - 1e-7);
    }
}

#[test]
fn diamond_dominates_worst_case_purified_squared() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..8 {
        let a = random_channel(&mut rng, 2, 2, 2);
        let id = Channel::identity(2);
        let dd = diamond_distance(&a, &id).unwrap();
        let p = worst_case_purified_distance(&a, &id).unwrap();
        // heuristic p is a found input, so p^2 <= true P^2 <= diamond
        assert!(dd.value >= p.value * p.value - 1e-7);
    }
}

#[test]
fn worst_case_heuristic_finds_dephasing_closed_form() {
    for &(p, phi) in &[(0.1, 0.2), (0.25, 0.0), (0.3, 0.9)] {
        let ch = rotated_dephasing(p, phi);
        let id = Channel::identity(2);
        let got = worst_case_purified_distance(&ch, &id).unwrap();
        let expect = (0.5 * (1.0 - (1.0 - 2.0 * p) * phi.cos())).sqrt();
        assert!(got.value <= expect + 1e-9);
        assert!(
            (got.value - expect).abs() < 1e-5,
            "p={p} phi={phi}: got {} want {expect}",
            got.value
        );
    }
}

#[test]
fn qfi_matches_finite_difference_overlap() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let d = 4;
        let h = {
            let g = random_matrix(&mut rng, d, d);
            g.add(&g.adjoint()).unwrap().scale_re(0.5)
        };
        let psi = {
            let mut v: Vec<C64> = (0..d)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for z in v.iter_mut() {
                *z /= n;
            }
            Operator::col_vector(v)
        };
        let dpsi = h.mul(&psi).unwrap().scale(-covqec_core::spectral::I);
        let f = pure_state_qfi(&psi, &dpsi).unwrap();
        let delta = 1e-4;
        let u = herm_unitary_exp(&Operator::hermitian(h.clone()).unwrap(), -delta).unwrap();
        let shifted = u.mul(&psi).unwrap();
        let overlap = psi.hs_inner(&shifted).unwrap().norm();
        let approx = 8.0 * (1.0 - overlap) / (delta * delta);
        let rel = (f - approx).abs() / f.max(1e-12);
        assert!(rel < 1e-4, "rel error {rel}");
    }
}

#[test]
fn channel_qfi_bounded_by_unitary_family_value() {
    // post-processing by dephasing cannot increase the QFI of the family
    let h = Operator::diagonal(vec![0.5, -0.5]);
    let hd = h.to_dense().unwrap();
    for &p in &[0.0, 0.1, 0.3] {
        let ch = rotated_dephasing(p, 0.0);
        let kraus: Vec<Operator> = ch.kraus().to_vec();
        let dkraus: Vec<Operator> = kraus
            .iter()
            .map(|k| k.mul(&hd.scale(-covqec_core::spectral::I)).unwrap())
            .collect();
        let f = channel_qfi_at_zero(&kraus, &dkraus).unwrap().value;
        assert!(f <= 1.0 + 1e-9);
        if p == 0.0 {
            assert!((f - 1.0).abs() < 1e-8);
        }
    }
}
