use berryline::estimators::RichardsonScheme;
use berryline::linalg::C64;
use berryline::numerics::{fit_power, mean, std_dev};
use berryline::propagate::Direction;
use berryline::randomize::{randomized_richardson, DistributionKind, RuntimeDistribution};
use berryline::response::OverlapSource;
use berryline::Result;

fn all_kinds(lambda: f64) -> Vec<RuntimeDistribution> {
    vec![
        RuntimeDistribution::new(DistributionKind::Uniform, lambda).unwrap(),
        RuntimeDistribution::new(DistributionKind::Triangular, lambda).unwrap(),
        RuntimeDistribution::bump(lambda, 1.0).unwrap(),
    ]
}

/// Return amplitudes whose forward-reverse phase is `theta + b cos(omega T) / T^2` exactly.
struct Synthetic {
    theta: f64,
    b: f64,
    omega: f64,
}

impl OverlapSource for Synthetic {
    fn overlap(&self, t: f64, direction: Direction) -> Result<C64> {
        let dynamical = -direction.sign() * 0.5 * t;
        Ok(C64::from_polar(1.0, self.theta + dynamical + self.b * (self.omega * t).cos() / (t * t)))
    }
}

#[test]
fn sample_means_match_characteristic_function() {
    for d in all_kinds(0.2) {
        let xs = d.sample(100_000, 5).unwrap();
        for xi in [3.0, 25.0, 80.0] {
            let c: Vec<f64> = xs.iter().map(|x| (xi * x).cos()).collect();
            let se = std_dev(&c) / (c.len() as f64).sqrt();
            let want = d.characteristic(xi).re;
            assert!((mean(&c) - want).abs() < 4.0 * se, "{:?} xi {xi}: {} vs {want}", d.kind, mean(&c));
        }
    }
}

#[test]
fn uniform_characteristic_is_a_sinc() {
    let d = RuntimeDistribution::new(DistributionKind::Uniform, 0.2).unwrap();
    for xi in [0.5, 7.0, 100.0, 1234.5] {
        let want = (0.2 * xi as f64).sin() / (0.2 * xi) * xi.cos();
        let got = d.characteristic(xi);
        assert!((got.re - want).abs() < 1e-12, "{xi}: {} vs {want}", got.re);
    }
}

#[test]
fn samples_respect_support_and_mean() {
    for d in all_kinds(0.25) {
        let xs = d.sample(100_000, 9).unwrap();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= 0.75 && hi <= 1.25, "{:?}: [{lo}, {hi}]", d.kind);
        let band = 3.0 * std_dev(&xs) / (xs.len() as f64).sqrt();
        assert!((mean(&xs) - 1.0).abs() < band, "{:?}: mean {}", d.kind, mean(&xs));
    }
}

#[test]
fn smooth_bump_decays_faster_than_any_power() {
    let d = RuntimeDistribution::bump(0.2, 1.0).unwrap();
    let weighted = |xi: f64| d.characteristic(xi).norm() * (1.0 + xi).powi(3);
    let sup = (0..200).map(|k| weighted(10f64.powf(1.0 + 2.0 * k as f64 / 199.0))).fold(0.0, f64::max);
    println!("sup of |chi| (1 + xi)^3 over [10, 1000]: {sup:.3e}");
    assert!(sup.is_finite());
    assert!(weighted(3000.0) < 1e-3 * sup);
    assert!(d.characteristic(1000.0).norm() < 1e-3 / (0.2 * 1000.0));
}

#[test]
fn randomized_mean_tracks_the_averaged_residual() {
    let src = Synthetic { theta: 0.8, b: 40.0, omega: 1.0 };
    let d = RuntimeDistribution::new(DistributionKind::Uniform, 0.2).unwrap();
    let s = RichardsonScheme::new(2.0, 1).unwrap();
    let t = 30.0;
    let r = randomized_richardson(&src, &d, t, &s, 20_000, 4, 0.8, 0.8).unwrap();
    let want = d.expect(
        |x| s.weights.iter().enumerate().map(|(k, w)| w * src.b * (src.omega * t * x * 2f64.powi(k as i32)).cos() / (t * x * 2f64.powi(k as i32)).powi(2)).sum(),
        t * 2.0 * src.omega,
    );
    assert!((r.bias - want).abs() < 4.0 * r.se, "{} vs {want} (se {})", r.bias, r.se);
    assert_eq!(r.dropped, 0);
}

#[test]
fn fluctuations_shrink_as_inverse_root_samples() {
    let src = Synthetic { theta: 0.8, b: 40.0, omega: 1.0 };
    let d = RuntimeDistribution::new(DistributionKind::Uniform, 0.2).unwrap();
    let s = RichardsonScheme::new(2.0, 1).unwrap();
    let ns = [100usize, 1000, 10_000];
    let spread: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let means: Vec<f64> = (0..200)
                .map(|rep| randomized_richardson(&src, &d, 30.0, &s, n, 1000 + rep, 0.8, 0.8).unwrap().mean)
                .collect();
            std_dev(&means)
        })
        .collect();
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = fit_power(&x, &spread).unwrap().slope;
    assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
}

#[test]
fn seeds_fix_the_sample_sequence() {
    let d = RuntimeDistribution::bump(0.2, 1.0).unwrap();
    assert_eq!(d.sample(500, 11).unwrap(), d.sample(500, 11).unwrap());
    assert_ne!(d.sample(500, 11).unwrap(), d.sample(500, 12).unwrap());
    assert!(RuntimeDistribution::new(DistributionKind::Triangular, 1.0).is_err());
}
