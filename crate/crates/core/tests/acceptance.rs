//! End-to-end acceptance checks. Each criterion reads its driver from `configs/` and prints
//! one PASS/FAIL line. `ACCEPT_ONLY=3,5` restricts the run to the listed criteria.

use berryline::estimators::{RichardsonScheme, EstimateSeries};
use berryline::harness::{
    load_toml, run_estimate, run_hadamard_on, sweep, sweep_on, EstimateConfig, Experiment, HadamardRunConfig, Overrides,
    PlotKind, SweepConfig, emit_plotdata, residual_spectrum,
};
use berryline::linalg::{column, op_norm, vec_norm, C64};
use berryline::measure::{hadamard_exact_bias, hadamard_overlap};
use berryline::numerics::{fit_power, least_squares, std_dev};
use berryline::propagate::{record, uniform_checkpoints, Direction};
use berryline::randomize::{bias_prediction, exact_bias, lifted_estimate, randomized_richardson, richardson_at, RuntimeDistribution};
use berryline::response::{OverlapSource, ResponseTable};
use berryline::rng::stream;
use berryline::spectral::ground_projector;
use rand::Rng;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

/// Writes past the test harness's output capture so plain `cargo test` shows the verdicts.
fn report(line: String) {
    use std::io::Write;
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn section<T: for<'de> Deserialize<'de>>(name: &str, key: &str) -> T {
    let v: toml::Table = load_toml(&config(name)).unwrap();
    v.get(key).unwrap_or_else(|| panic!("{name} lacks [{key}]")).clone().try_into().unwrap()
}

fn sweep_config(name: &str) -> SweepConfig {
    SweepConfig::load(&config(name), &Overrides::default()).unwrap()
}

/// Every cone driver shares these settings, so one tabulation serves them all.
const CONE_TABLE: (f64, f64) = (3.0, 1700.0);

struct Cone {
    exp: Experiment,
    table: ResponseTable,
}

fn cone() -> &'static Cone {
    static CONE: OnceLock<Cone> = OnceLock::new();
    CONE.get_or_init(|| {
        let cfg = sweep_config("criterion2_first_order.toml");
        let exp = Experiment::new(&cfg.model, &cfg.spectral, &cfg.propagation).unwrap();
        let start = Instant::now();
        let table = exp.table(CONE_TABLE.0, CONE_TABLE.1, 24).unwrap();
        report(format!(
            "  cone response table on [{}, {}]: {} panels, verify error {:.1e}, {:.1?}",
            CONE_TABLE.0,
            CONE_TABLE.1,
            ((CONE_TABLE.1 - CONE_TABLE.0) / table.panel_width).round(),
            table.verify_error,
            start.elapsed()
        ));
        assert!(table.verify_error < 1e-10);
        Cone { exp, table }
    })
}

/// Runs a cone sweep on the shared table when the config asks for tabulation.
fn cone_sweep(cfg: &SweepConfig) -> berryline::harness::SweepResult {
    let c = cone();
    assert_eq!(cfg.model, c.exp.spec, "cone drivers must share one model");
    if cfg.table.is_some() {
        let (lo, hi) = cfg.span(c.exp.period());
        assert!(c.table.contains(lo) && c.table.contains(hi), "span [{lo}, {hi}] outside the shared table");
        sweep_on(&c.exp, &c.table, cfg).unwrap()
    } else {
        sweep_on(&c.exp, &c.exp.direct(), cfg).unwrap()
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// `inf { T : sup_{T' >= T} err(T') <= eps }` on a grid.
fn required_runtime(ts: &[f64], errs: &[f64], eps: f64) -> Option<f64> {
    let mut idx = None;
    for k in (0..ts.len()).rev() {
        if errs[k] > eps {
            break;
        }
        idx = Some(k);
    }
    idx.filter(|&k| k > 0).map(|k| ts[k])
}

fn transport() -> Verdict {
    #[derive(Deserialize)]
    struct Transport {
        runtime: f64,
        checkpoints: usize,
    }
    let t: Transport = section("criterion1_transport.toml", "transport");
    let cfg: SweepConfig = {
        let v: toml::Table = load_toml(&config("criterion1_transport.toml")).unwrap();
        let mut v = v;
        v.insert("grid".into(), toml::Value::try_from(toml::toml! { start = 1.0 }).unwrap());
        v.insert("stack".into(), toml::Value::try_from(toml::toml! { kind = "single" }).unwrap());
        v.try_into().unwrap()
    };
    let start = Instant::now();
    let exp = Experiment::new(&cfg.model, &cfg.spectral, &cfg.propagation).unwrap();
    let cps = uniform_checkpoints(t.checkpoints);
    let rec = record(&exp.h, &exp.frame, t.runtime, Direction::Forward, &cps, &cfg.propagation).unwrap();
    let psi0 = column(&exp.frame.vectors[0], 0);
    let theta_d = t.runtime * exp.frame.mean_ground_energy();
    let expected = &psi0 * C64::from_polar(1.0, exp.oracle - theta_d);
    let transport = vec_norm(&(rec.u_ideal.last().unwrap() * &psi0 - expected));
    let (p0, _) = ground_projector(&exp.h, 0.0);
    let defect = cps
        .iter()
        .zip(&rec.u_ideal)
        .map(|(&s, u)| op_norm(&(u * &p0 * u.adjoint() - ground_projector(&exp.h, s).0)))
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        transport <= 1e-7 && defect <= 1e-7 && secs <= 10.0,
        format!("transport {transport:.2e}, intertwining {defect:.2e} over {} checkpoints, {secs:.1} s", cps.len()),
    )
}

fn first_order() -> Verdict {
    let start = Instant::now();
    let cfg = sweep_config("criterion2_first_order.toml");
    let c = cone();
    let r = sweep_on(&c.exp, &c.exp.direct(), &cfg).unwrap();
    let phi1 = r.phi1;
    let last = r.points.last().unwrap();
    let rel = (last.runtime * last.error - phi1).abs() / phi1;
    let ts: Vec<f64> = r.points.iter().map(|p| p.runtime).collect();
    let rem: Vec<f64> = r.points.iter().map(|p| p.error - phi1 / p.runtime).collect();
    let slope = fit_power(&ts, &rem).unwrap().slope;
    let fit = r.fit.unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        rel <= 0.03 && (slope + 2.0).abs() <= 0.2 && secs <= 120.0,
        format!(
            "T phi at T={:.0}: rel err {rel:.2e}; |phi - phi1/T| slope {slope:.3}; single-evolution slope {:.3}, coefficient/phi1 {:.3}; {secs:.1} s",
            last.runtime,
            fit.exponent,
            fit.coefficient / phi1
        ),
    )
}

/// Golden-section minimum of `f` on `[a, b]`.
fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Grid scan then golden refinement of the extremum of `f` in a window.
fn extremum<F: Fn(f64) -> f64>(f: F, centre: f64, width: f64, maximize: bool) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    let n = 64;
    let xs: Vec<f64> = (0..=n).map(|k| centre - width / 2.0 + width * k as f64 / n as f64).collect();
    let k = (0..=n).min_by(|&a, &b| (sign * f(xs[a])).total_cmp(&(sign * f(xs[b])))).unwrap();
    let h = width / n as f64;
    golden(|x| sign * f(x), xs[k] - h, xs[k] + h)
}

fn leakage() -> Verdict {
    #[derive(Deserialize)]
    struct Leak {
        runtime: f64,
        zeros_near: Vec<f64>,
        maxima_near: Vec<f64>,
    }
    let l: Leak = section("criterion3_leakage.toml", "leakage");
    let c = cone();
    let measured = |t: f64| 1.0 - c.table.overlap(t, Direction::Forward).unwrap().norm_sqr();
    let predicted = |t: f64| berryline::apt::leakage_prediction(&c.exp.frame, t);
    let rel_at = |t: f64| (measured(t) - predicted(t)).abs() / predicted(t);
    let rel200 = rel_at(l.runtime);
    let period = c.exp.period();
    let zero_err = l
        .zeros_near
        .iter()
        .map(|&t| {
            let tp = extremum(predicted, t, period, false);
            let tm = extremum(measured, tp, period / 2.0, false);
            (tm - tp).abs() / period
        })
        .fold(0.0, f64::max);
    let (ts, rels): (Vec<f64>, Vec<f64>) = l
        .maxima_near
        .iter()
        .map(|&t| {
            let tp = extremum(predicted, t, period, true);
            (tp, rel_at(tp))
        })
        .unzip();
    let slope = fit_power(&ts, &rels).unwrap().slope;
    verdict(
        rel200 <= 0.1 && zero_err <= 0.02 && (slope + 1.0).abs() <= 0.3,
        format!("rel err at T={}: {rel200:.2e}; zero offsets <= {zero_err:.2e} periods; rel err slope at maxima {slope:.3}", l.runtime),
    )
}

fn cancellation() -> Verdict {
    #[derive(Deserialize)]
    struct Inv {
        shifts: Vec<f64>,
        runtimes: Vec<f64>,
    }
    let cfg = sweep_config("criterion4_cancellation.toml");
    let inv: Inv = section("criterion4_cancellation.toml", "invariance");
    let r = cone_sweep(&cfg);
    let fit = r.fit.clone().unwrap();
    let c = cone();
    let ts: Vec<f64> = r.points.iter().map(|p| p.runtime).collect();
    let y: Vec<f64> = r.points.iter().map(|p| p.error - c.exp.apt.fr_osc(p.runtime) / (p.runtime * p.runtime)).collect();
    let cols: Vec<Vec<f64>> = (1..=3).map(|k| ts.iter().map(|t| t.powi(-k)).collect()).collect();
    let coef = least_squares(&cols, &y).unwrap();
    let odd = coef[0].abs() / r.phi1;
    let direct = c.exp.direct();
    let mut worst: f64 = 0.0;
    for &shift in &inv.shifts {
        let mut spec = cfg.model.clone();
        spec.shift = shift;
        let shifted = Experiment::new(&spec, &cfg.spectral, &cfg.propagation).unwrap();
        let sd = shifted.direct();
        for &t in &inv.runtimes {
            let a = lifted_estimate(&direct, t, r.coarse).unwrap();
            let b = lifted_estimate(&sd, t, r.coarse).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        (fit.exponent + 2.0).abs() <= 0.15 && odd < 0.01 && worst <= 1e-10,
        format!("fwd-rev slope {:.3}; 1/T coefficient {:.2e} of phi1; shift invariance {worst:.1e}", fit.exponent, odd),
    )
}

fn richardson_criterion() -> Verdict {
    #[derive(Deserialize)]
    struct Syn {
        trials: usize,
        orders: Vec<usize>,
        alphas: Vec<f64>,
    }
    let syn: Syn = section("criterion5_richardson.toml", "synthetic");
    let mut rng = stream(5, "synthetic", 0);
    let mut annihilation: f64 = 0.0;
    let mut bound_ok = true;
    for &m in &syn.orders {
        for &alpha in &syn.alphas {
            let s = RichardsonScheme::new(alpha, m).unwrap();
            bound_ok &= s.weight_sum() <= (m as f64 + 1.0) * (alpha * alpha / (alpha * alpha - 1.0)).powi(m as i32) + 1e-12;
            for _ in 0..syn.trials {
                let a: f64 = rng.random_range(-3.0..3.0);
                let cs: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let t: f64 = rng.random_range(5.0..50.0);
                let vals: Vec<f64> = s
                    .runtimes(t)
                    .iter()
                    .map(|&tk| a + cs.iter().enumerate().map(|(j, c)| c * tk.powi(-2 * (j as i32 + 1))).sum::<f64>())
                    .collect();
                annihilation = annihilation.max((s.combine(&vals) - a).abs());
            }
        }
    }
    let cfg = sweep_config("criterion5_richardson.toml");
    let r = cone_sweep(&cfg);
    let av = r.averaged_fit.unwrap();
    verdict(
        annihilation <= 1e-12 && bound_ok && av.exponent <= -2.7,
        format!(
            "synthetic annihilation {annihilation:.1e}; weight-sum bound {}; averaged residual slope {:.3} (raw {:.3})",
            if bound_ok { "holds" } else { "violated" },
            av.exponent,
            r.fit.map(|f| f.exponent).unwrap_or(f64::NAN)
        ),
    )
}

fn randomization() -> Verdict {
    #[derive(Deserialize)]
    struct Bump {
        runtime: f64,
        sharpness: f64,
        floor_samples: Vec<usize>,
        floor_runtimes: Vec<f64>,
    }
    let c = cone();
    // Noise-free bias slope.
    let exact_cfg = sweep_config("criterion6_bias.toml");
    let exact = cone_sweep(&exact_cfg);
    let slope = exact.averaged_fit.as_ref().unwrap().exponent;
    // Sampled bias against the prediction, pointwise.
    let cfg = sweep_config("criterion6_randomized.toml");
    let sampled = cone_sweep(&cfg);
    let berryline::harness::Stack::Randomized { distribution, samples, .. } = &cfg.stack else { panic!("randomized stack expected") };
    let scheme = RichardsonScheme::new(2.0, 1).unwrap();
    let mut worst_z: f64 = 0.0;
    for p in &sampled.points {
        let pred = bias_prediction(&c.exp.apt, distribution, p.runtime, &scheme);
        worst_z = worst_z.max((p.error - pred).abs() / p.se.unwrap());
    }
    // Smooth bump at one runtime.
    let b: Bump = section("criterion6_randomized.toml", "bump");
    let bump = RuntimeDistribution::bump(distribution.lambda, b.sharpness).unwrap();
    let band = c.exp.frame.max_frequency();
    let coarse = sampled.coarse;
    let uni_bias = exact_bias(&c.table, distribution, b.runtime, &scheme, coarse, c.exp.oracle, band).unwrap();
    let bump_bias = exact_bias(&c.table, &bump, b.runtime, &scheme, coarse, c.exp.oracle, band).unwrap();
    let ratio = uni_bias.abs() / bump_bias.abs().max(1e-300);
    let mut detail = format!(
        "exact bias slope {slope:.3}; sampled bias vs prediction within {worst_z:.2} SE; bump/uniform at T={}: {:.2e}/{:.2e} (ratio {ratio:.1})",
        b.runtime,
        bump_bias.abs(),
        uni_bias.abs()
    );
    let mut bump_ok = ratio >= 10.0;
    if !bump_ok {
        // Floor-limited: the sampled bump estimate is indistinguishable from zero and its
        // standard error falls as T^-2 N^-1/2.
        let mc = randomized_richardson(&c.table, &bump, b.runtime, &scheme, *samples, 61, coarse, c.exp.oracle).unwrap();
        let ses_n: Vec<f64> = b
            .floor_samples
            .iter()
            .map(|&n| randomized_richardson(&c.table, &bump, b.runtime, &scheme, n, 62, coarse, c.exp.oracle).unwrap().se)
            .collect();
        let ses_t: Vec<f64> = b
            .floor_runtimes
            .iter()
            .map(|&t| randomized_richardson(&c.table, &bump, t, &scheme, *samples, 63, coarse, c.exp.oracle).unwrap().se)
            .collect();
        let ns: Vec<f64> = b.floor_samples.iter().map(|&n| n as f64).collect();
        let sn = fit_power(&ns, &ses_n).unwrap().slope;
        let st = fit_power(&b.floor_runtimes, &ses_t).unwrap().slope;
        bump_ok = mc.bias.abs() <= 3.0 * mc.se && (st + 2.0).abs() <= 0.2 && (sn + 0.5).abs() <= 0.05;
        detail += &format!("; floor: bias {:.1e} vs SE {:.1e}, SE slopes {st:.3} in T, {sn:.3} in N", mc.bias.abs(), mc.se);
    }
    verdict((slope + 3.0).abs() <= 0.3 && worst_z <= 3.0 && bump_ok, detail)
}

fn qpe_pipeline() -> Verdict {
    #[derive(Deserialize)]
    struct Cal {
        t_lo: f64,
        t_hi: f64,
        step: f64,
        epsilons: Vec<f64>,
    }
    let mut ok = true;
    let mut detail = String::new();
    for name in ["criterion7_qpe_cone.toml", "criterion7_qpe_three_level.toml", "criterion7_qpe_near_pi.toml"] {
        let cfg = EstimateConfig::load(&config(name), &Overrides::default()).unwrap();
        let start = Instant::now();
        let report = run_estimate(&cfg).unwrap();
        let counts: Vec<String> = report.summary.iter().map(|s| format!("{}/{}", s.successes, s.trials)).collect();
        ok &= report.summary.iter().all(|s| s.successes * 10 >= s.trials * 9);
        let worst = report.trials.iter().map(|t| t.result.abs_err / t.epsilon).fold(0.0, f64::max);
        detail += &format!(
            "{} (theta_B {:.4}): {} [worst err/eps {worst:.2}, {:.0} s]; ",
            name.trim_start_matches("criterion7_qpe_").trim_end_matches(".toml"),
            report.theta_oracle,
            counts.join(" "),
            start.elapsed().as_secs_f64()
        );
    }
    let cal: Cal = section("criterion7_qpe_cone.toml", "calibration");
    let c = cone();
    let scheme = RichardsonScheme::new(2.0, 1).unwrap();
    let coarse = c.exp.coarse(&Default::default()).unwrap();
    let n = ((cal.t_hi - cal.t_lo) / cal.step).round() as usize;
    let ts: Vec<f64> = (0..=n).map(|k| cal.t_lo + cal.step * k as f64).collect();
    let errs: Vec<f64> = ts
        .iter()
        .map(|&t| match richardson_at(&c.table, &scheme, t, coarse) {
            Ok(v) => (v - c.exp.oracle).abs(),
            Err(_) => f64::INFINITY,
        })
        .collect();
    let treq: Vec<f64> = cal.epsilons.iter().map(|&e| required_runtime(&ts, &errs, e).unwrap()).collect();
    let fit = fit_power(&cal.epsilons, &treq).unwrap();
    let f = &c.exp.frame;
    let factor = cal
        .epsilons
        .iter()
        .zip(&treq)
        .map(|(e, t)| t * f.gap(1, 0).powi(2) * e.sqrt() / f.hdot_norm[0])
        .fold(0.0, f64::max);
    ok &= (fit.slope + 0.5).abs() <= 0.07;
    detail += &format!("T_req exponent {:.3} (T_req {treq:.1?}), calibrated T0 constant {factor:.2}", fit.slope);
    verdict(ok, detail)
}

fn hadamard() -> Verdict {
    #[derive(Deserialize)]
    struct Amp {
        runtime_lo: f64,
        runtime_hi: f64,
        target_leak: f64,
        shots: u64,
        repetitions: usize,
    }
    #[derive(Deserialize)]
    struct Cal {
        t_lo: f64,
        t_hi: f64,
        step: f64,
        epsilons: Vec<f64>,
    }
    let name = "criterion8_hadamard.toml";
    let cfg = HadamardRunConfig::load(&config(name), &Overrides::default()).unwrap();
    let c = cone();
    let (lo, hi) = cfg.span(&c.exp.frame);
    assert!(c.table.contains(lo) && c.table.contains(hi));
    let start = Instant::now();
    let report = run_hadamard_on(&c.exp, &c.table, &cfg).unwrap();
    let s = &report.summary[0];
    let n = report.trials[0].result.samples;
    let mut ok = s.successes * 10 >= s.trials * 9;
    let mut detail = format!(
        "{}/{} within {:.0e} (N = {n}, T = {:.2}, {:.0} s)",
        s.successes,
        s.trials,
        s.epsilon,
        report.trials[0].result.runtime,
        start.elapsed().as_secs_f64()
    );

    // Leakage amplification of the phase noise.
    let amp: Amp = section(name, "amplification");
    let direct = c.exp.direct();
    let leak = |t: f64| 1.0 - direct.overlap(t, Direction::Forward).unwrap().norm_sqr();
    let t_amp = golden(|t| (leak(t) - amp.target_leak).abs(), amp.runtime_lo, amp.runtime_hi);
    let z = direct.overlap(t_amp, Direction::Forward).unwrap();
    let p = 1.0 - z.norm_sqr();
    let spread = |w: C64, label: u64| {
        let phases: Vec<f64> = (0..amp.repetitions)
            .map(|k| {
                let mut rng = stream(81 + label, "amplification", k as u64);
                (hadamard_overlap(w, amp.shots, &mut rng).unwrap() * w.conj()).arg()
            })
            .collect();
        std_dev(&phases)
    };
    let measured = spread(z, 0) / spread(z / z.norm(), 1);
    let expected = (1.0 - p).powf(-0.5);
    let amp_err = (measured / expected - 1.0).abs();
    ok &= amp_err <= 0.1;
    // Per-component shot variance is (1 - x^2)/N, so the exact ratio also depends on arg z.
    let s2 = (2.0 * z.arg()).sin().powi(2) / 2.0;
    let exact = expected * ((1.0 - (1.0 - p) * s2) / (1.0 - s2)).sqrt();
    detail += &format!("; amplification {measured:.3} vs {expected:.3} at p_leak {p:.3} ({exact:.3} with the phase-dependent shot variance)");

    // Runtime needed by the noise-free bias.
    let cal: Cal = section(name, "calibration");
    let dist = RuntimeDistribution::new(cfg.hadamard.distribution, cfg.hadamard.lambda).unwrap();
    let coarse = c.exp.coarse(&Default::default()).unwrap();
    let m = ((cal.t_hi - cal.t_lo) / cal.step).round() as usize;
    let ts: Vec<f64> = (0..=m).map(|k| cal.t_lo + cal.step * k as f64).collect();
    let errs: Vec<f64> = ts
        .iter()
        .map(|&t| {
            hadamard_exact_bias(&c.table, &c.exp.frame, &dist, t, cfg.hadamard.alpha, coarse).map(f64::abs).unwrap_or(f64::INFINITY)
        })
        .collect();
    let treq: Vec<f64> = cal.epsilons.iter().map(|&e| required_runtime(&ts, &errs, e).unwrap()).collect();
    let slope = fit_power(&cal.epsilons, &treq).unwrap().slope;
    ok &= (slope + 1.0 / 3.0).abs() <= 0.07;
    detail += &format!("; T_req exponent {slope:.3} (T_req {treq:.1?})");
    verdict(ok, detail)
}

fn spectrum() -> Verdict {
    let cfg = sweep_config("criterion9_spectrum.toml");
    let r = cone_sweep(&cfg);
    let spec = residual_spectrum(&r.dense).unwrap();
    let peak = spec.iter().map(|b| b.magnitude).fold(0.0, f64::max);
    let dw = spec[1].omega;
    // Hann main lobe is two bins wide on each side.
    let cutoff = r.gap_min - 2.0 * dw;
    let low = spec.iter().skip(1).filter(|b| b.omega < cutoff).map(|b| b.magnitude).fold(0.0, f64::max) / peak;
    let top = spec.iter().skip(1).max_by(|a, b| a.magnitude.total_cmp(&b.magnitude)).unwrap().omega;
    let near = |w: f64| spec.iter().filter(|b| (b.omega - w).abs() <= 1.5 * dw).map(|b| b.magnitude).fold(0.0, f64::max) / peak;
    verdict(
        low <= 0.05,
        format!(
            "largest bin below gap_min: {low:.3} of peak; dominant omega {top:.3}; relative height at omega_1 {:.2}, at 2 omega_1 {:.2}",
            near(r.omega1),
            near(2.0 * r.omega1)
        ),
    )
}

fn reproducibility() -> Verdict {
    let names = [
        "criterion1_transport.toml",
        "criterion2_first_order.toml",
        "criterion3_leakage.toml",
        "criterion4_cancellation.toml",
        "criterion5_richardson.toml",
        "criterion6_bias.toml",
        "criterion6_randomized.toml",
        "criterion7_qpe_cone.toml",
        "criterion7_qpe_three_level.toml",
        "criterion7_qpe_near_pi.toml",
        "criterion8_hadamard.toml",
        "criterion9_spectrum.toml",
        "criterion10_reproducibility.toml",
    ];
    let missing: Vec<&str> = names.iter().filter(|n| !config(n).exists()).cloned().collect();
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let mut cfg = sweep_config("criterion10_reproducibility.toml");
        let out = dir.path().join(sub);
        cfg.output = Some(out.clone());
        let r = sweep(&cfg).unwrap();
        emit_plotdata(&r, PlotKind::BiasVsT, &out.join("bias.csv")).unwrap();
        ["series.csv", "error_vs_t.csv", "bias.csv", "sweep.json"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let a = run("a");
    let b = run("b");
    let same = a == b;
    let series: EstimateSeries = serde_json::from_slice::<berryline::harness::SweepResult>(&a[3]).unwrap().series;
    verdict(
        missing.is_empty() && same && !series.points.is_empty(),
        format!("{} driver configs present, missing {:?}; repeated sweep outputs identical: {same}", names.len() - missing.len(), missing),
    )
}

#[test]
fn acceptance() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPT_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(u32, &str, fn() -> Verdict); 10] = [
        (1, "adiabatic transport", transport),
        (2, "first-order phase", first_order),
        (3, "leakage", leakage),
        (4, "forward-reverse cancellation", cancellation),
        (5, "Richardson extrapolation", richardson_criterion),
        (6, "runtime randomization", randomization),
        (7, "phase-estimation pipeline", qpe_pipeline),
        (8, "Hadamard pipeline", hadamard),
        (9, "frequency closure", spectrum),
        (10, "reproducibility", reproducibility),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        report(format!(
            "criterion {id:>2} {name}: {} ({}; {:.1} s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        ));
        if !v.pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
