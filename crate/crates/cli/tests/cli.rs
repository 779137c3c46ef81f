use std::path::Path;
use std::process::{Command, Output};

const BASE: &str = r#"
seed = 4

[model]
kind = "spin-cone"
field = 1.0
theta_cone = 0.4

[spectral]
grid = 512

[propagation]
tol = 1e-10
"#;

fn berryline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_berryline")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, format!("{BASE}\n{body}")).unwrap();
    p.to_str().unwrap().to_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn sweep_compare_and_plot_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let single = write(d, "single.toml", "[grid]\nstart = 40.0\nratio = 1.5\ncount = 5\n[stack]\nkind = \"single\"");
    let fr = write(d, "fr.toml", "[grid]\nstart = 40.0\nratio = 1.5\ncount = 5\n[stack]\nkind = \"fwd-rev\"");
    for (cfg, out) in [(&single, d.join("a")), (&fr, d.join("b"))] {
        let o = berryline(&["sweep", "-c", cfg, "-o", path(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("sweep.json").exists() && out.join("error_vs_t.csv").exists());
    }
    let o = berryline(&["compare", path(&d.join("a")), path(&d.join("b")), "-o", path(&d.join("cmp"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let printed = String::from_utf8(o.stdout).unwrap();
    assert_eq!(printed, std::fs::read_to_string(d.join("cmp/comparison.txt")).unwrap());
    assert!(printed.contains("fwd-rev"));

    let o = berryline(&["plotdata", path(&d.join("b")), "-k", "bias-vs-t", "-o", path(&d.join("bias.csv"))]);
    assert_eq!(code(&o), 0);
    let rows = std::fs::read_to_string(d.join("bias.csv")).unwrap().lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 6);
}

#[test]
fn global_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "s.toml", "[grid]\nstart = 40.0\nratio = 1.5\ncount = 4\n[stack]\nkind = \"single\"");
    let o = berryline(&["--seed", "99", "--grid", "256", "--tol-prop", "1e-9", "sweep", "-c", &cfg, "-o", path(&d.join("o"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("o/sweep.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 99);
    let o = berryline(&["--tol-prop", "2", "sweep", "-c", &cfg, "-o", path(&d.join("p"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let short = write(d, "short.toml", "[grid]\nstart = 40.0\ncount = 3\n[stack]\nkind = \"single\"");
    let o = berryline(&["sweep", "-c", &short, "-o", path(&d.join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 4"));

    let o = berryline(&["sweep", "-c", path(&d.join("missing.toml")), "-o", path(&d.join("x"))]);
    assert_eq!(code(&o), 2);

    let bad_cone = write(d, "cone.toml", "[grid]\nstart = 40.0\n[stack]\nkind = \"single\"").replace("cone.toml", "cone2.toml");
    std::fs::write(&bad_cone, std::fs::read_to_string(d.join("cone.toml")).unwrap().replace("theta_cone = 0.4", "theta_cone = 4.0")).unwrap();
    assert_eq!(code(&berryline(&["sweep", "-c", &bad_cone, "-o", path(&d.join("x"))])), 2);

    assert_eq!(code(&berryline(&["compare"])), 2);
    assert_eq!(code(&berryline(&["plotdata", path(&d.join("nowhere")), "-o", path(&d.join("y.csv"))])), 2);
    assert_eq!(code(&berryline(&["frobnicate"])), 2);
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "tiny.toml", "[grid]\nstart = 40.0\n[stack]\nkind = \"fwd-rev\"").replace("tiny.toml", "tiny2.toml");
    std::fs::write(&cfg, std::fs::read_to_string(d.join("tiny.toml")).unwrap().replace("tol = 1e-10", "tol = 1e-10\nmax_steps = 4")).unwrap();
    let o = berryline(&["sweep", "-c", &cfg, "-o", path(&d.join("x"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
