use berryline::estimators::Branches;
use berryline::linalg::C64;
use berryline::measure::{hadamard_overlap, hadamard_sample, qpe_sample, register_distribution, register_outcome, Basis, QpeConfig};
use berryline::rng::stream;
use std::f64::consts::PI;

#[test]
fn exact_register_phase_reads_deterministically() {
    let mut rng = stream(1, "qpe", 0);
    let theta = 2.0 * PI * 5.0 / 64.0;
    for _ in 0..200 {
        assert_eq!(register_outcome(theta, 6, &mut rng), 5);
    }
}

#[test]
fn nearest_outcome_has_at_least_textbook_probability() {
    for theta in [0.1234, 1.0, 2.5, 4.0001, 6.2] {
        let p = register_distribution(theta, 8);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let k = ((theta / (2.0 * PI) * 256.0).round() as usize) % 256;
        assert!(p[k] >= 4.0 / (PI * PI), "theta {theta}: {}", p[k]);
    }
}

#[test]
fn leaked_draws_match_branch_weight() {
    let q = 0.12;
    let br = Branches { weights: vec![1.0 - q, q], phases: vec![1.0, 2.5] };
    let cfg = QpeConfig { m_bits: 10, repetitions: 5, vote_bits: 4 };
    let mut rng = stream(2, "leak", 0);
    let runs = 4000;
    let mut off = 0usize;
    let mut correct = 0usize;
    for _ in 0..runs {
        let o = qpe_sample(&br, &cfg, &mut rng).unwrap();
        off += o.off_branch;
        if (o.phase - 1.0).abs() < 2.0 * PI / 16.0 {
            correct += 1;
        }
    }
    let draws = (runs * cfg.repetitions) as f64;
    let frac = off as f64 / draws;
    let band = 4.0 * (q * (1.0 - q) / draws).sqrt();
    assert!((frac - q).abs() < band, "off-branch fraction {frac} vs {q}");
    assert!(correct as f64 / runs as f64 > 0.95);
}

#[test]
fn hadamard_edge_cases() {
    let mut rng = stream(3, "hadamard", 0);
    assert_eq!(hadamard_sample(C64::new(1.0, 0.0), Basis::Real, 1000, &mut rng).unwrap(), 1.0);
    let n = 1_000_000u64;
    let f = hadamard_sample(C64::new(0.0, 0.0), Basis::Real, n, &mut rng).unwrap();
    assert!((f - 0.5).abs() < 3.0 / (2.0 * (n as f64).sqrt()));
    assert!(hadamard_sample(C64::new(1.0, 0.1), Basis::Real, 10, &mut rng).is_err());
}

#[test]
fn hadamard_phase_noise_scales_with_overlap_modulus() {
    // With z = r e^{i theta}, each reconstructed component has variance (1 - x^2)/N, so the
    // phase spread is sqrt(1 - r^2 s)/(r sqrt N) where s = sin^2(2 theta)/2.
    let n = 10_000u64;
    let theta = 0.9f64;
    for r in [1.0, 0.6] {
        let z = C64::from_polar(r, theta);
        let mut rng = stream(4, "phase-noise", (r * 10.0) as u64);
        let phases: Vec<f64> = (0..4000).map(|_| hadamard_overlap(z, n, &mut rng).unwrap().arg()).collect();
        let m = phases.iter().sum::<f64>() / phases.len() as f64;
        let sd = (phases.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (phases.len() - 1) as f64).sqrt();
        let s = (2.0 * theta).sin().powi(2) / 2.0;
        let want = (1.0 - r * r * s).sqrt() / (r * (n as f64).sqrt());
        assert!((sd / want - 1.0).abs() < 0.06, "r {r}: {sd} vs {want}");
    }
}
