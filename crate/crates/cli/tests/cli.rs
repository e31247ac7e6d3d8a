//! End-to-end runs of the `modlindley` binary and its report functions.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modlindley::models::{ModelConfig, ModelKind, StationaryArConfig};
use modlindley::stochcore::StateLaw;
use modlindley_cli::commands::{compare_report, diagnose_report, simulate_report, solve_report};
use modlindley_cli::config::{GridSection, RunConfig, SimSection};
use modlindley_cli::report::{rows_from_csv, CompareReport, Report, SimulateReport, SolveReport};
use tempfile::TempDir;

fn exp(rate: f64) -> StateLaw {
    StateLaw::Exponential { rate }
}

fn scalar_ar(a: f64) -> ModelConfig {
    ModelConfig::StationaryAr(StationaryArConfig {
        transition: vec![vec![1.0]],
        lambda: vec![1.0],
        service: vec![exp(2.0)],
        a: vec![a],
    })
}

fn run_config(model: ModelConfig, points: Option<Vec<f64>>, replications: usize) -> RunConfig {
    let mut cfg = RunConfig::parse(&toml::to_string(&minimal(model)).unwrap()).unwrap();
    if let Some(points) = points {
        cfg.grid = GridSection {
            points: Some(points),
            auto: None,
        };
    }
    cfg.sim = SimSection {
        replications,
        steps: 200,
        seed: 7,
    };
    cfg
}

fn minimal(model: ModelConfig) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert("model".into(), toml::Value::try_from(model).unwrap());
    t
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn write(&self, name: &str, cfg: &RunConfig) -> PathBuf {
        self.write_text(name, &toml::to_string(cfg).unwrap())
    }

    fn write_text(&self, name: &str, text: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn modlindley(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modlindley"))
        .args(args)
        .output()
        .unwrap()
}

fn run_on(cmd: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, config.to_str().unwrap()];
    args.extend_from_slice(extra);
    modlindley(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_reports_the_anchor_as_ok() {
    let fx = Fixture::new();
    let cfg = run_config(ModelConfig::canonical(ModelKind::StationaryAr), None, 1000);
    let path = fx.write("ar.toml", &cfg);
    let out = fx.path("solve.json");
    let o = run_on("solve", &path, &["--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: SolveReport = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(report.anchor.status, "OK");
    assert_eq!(report.rows.len(), 2 * 12);
    assert!(report.diagnostics.max_residual <= 1e-9);
    assert_eq!(report.unknowns[0].name, "v");
}

#[test]
fn out_of_range_coefficient_is_a_config_error_naming_the_field() {
    let fx = Fixture::new();
    let path = fx.write("bad.toml", &run_config(scalar_ar(0.5), None, 1000));
    let text = std::fs::read_to_string(&path).unwrap().replace("a = [0.5]", "a = [1.2]");
    let path = fx.write_text("bad.toml", &text);
    let o = run_on("solve", &path, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.a"), "{}", stderr(&o));
}

#[test]
fn repeated_modulated_eigenvalues_are_a_solver_error() {
    let fx = Fixture::new();
    let path = fx.write_text(
        "degenerate.toml",
        r#"
[model]
kind = "transient_ar"
generator = [[0.0, 0.0], [0.0, 0.0]]
lambda = [1.0, 1.0]
service = [{ kind = "exponential", rate = 2.0 }, { kind = "exponential", rate = 2.0 }]
a = [0.5, 0.4]
r = 0.5
eta = 0.1
w = 0.0
initial = [0.5, 0.5]
"#,
    );
    let o = run_on("solve", &path, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("degenerate spectrum"), "{}", stderr(&o));
}

#[test]
fn usage_and_io_failures_exit_with_one() {
    assert_eq!(modlindley(&["solve", "/nonexistent/run.toml"]).status.code(), Some(1));
    assert_eq!(modlindley(&["frobnicate"]).status.code(), Some(1));
    let fx = Fixture::new();
    let path = fx.write("ar.toml", &run_config(scalar_ar(0.5), None, 1000));
    assert_eq!(run_on("solve", &path, &["--max-order", "61"]).status.code(), Some(1));
    assert_eq!(modlindley(&["--help"]).status.code(), Some(0));
}

#[test]
fn thread_cap_comes_from_the_environment() {
    let fx = Fixture::new();
    let path = fx.write("ar.toml", &run_config(scalar_ar(0.5), Some(vec![1.5]), 1000));
    let run = |value: &str| {
        Command::new(env!("CARGO_BIN_EXE_modlindley"))
            .args(["solve", path.to_str().unwrap()])
            .env(modlindley_cli::THREADS_ENV, value)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, run("0").stdout);
    assert_eq!(run("many").status.code(), Some(1));
}

#[test]
fn simulate_is_byte_identical_for_a_fixed_seed() {
    let fx = Fixture::new();
    let cfg = run_config(ModelConfig::canonical(ModelKind::ShotNoise), Some(vec![0.0, 0.5, 2.0]), 20_000);
    let path = fx.write("shot.toml", &cfg);
    let a = run_on("simulate", &path, &["--format", "json"]);
    let b = run_on("simulate", &path, &["--format", "json"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let report: SimulateReport = serde_json::from_slice(&a.stdout).unwrap();
    let at_zero: f64 = report.rows.iter().filter(|r| r.point == 0.0).map(|r| r.sim_mean.unwrap()).sum();
    assert!((at_zero - 1.0).abs() < 1e-12, "{at_zero}");
    let other_seed = run_on("simulate", &path, &["--format", "json", "--seed", "8"]);
    assert_ne!(a.stdout, other_seed.stdout);
}

#[test]
fn doubling_replications_shrinks_standard_errors_by_root_two() {
    let cfg = run_config(ModelConfig::canonical(ModelKind::StationaryAr), Some(vec![0.5, 2.0]), 20_000);
    let mut doubled = cfg.clone();
    doubled.sim.replications *= 2;
    let (a, b) = (simulate_report(&cfg).unwrap(), simulate_report(&doubled).unwrap());
    for (x, y) in a.rows.iter().zip(&b.rows) {
        let ratio = y.sim_se.unwrap() / x.sim_se.unwrap();
        assert!((ratio - 0.5f64.sqrt()).abs() < 0.15, "ratio {ratio}");
    }
}

#[test]
fn scalar_compare_passes_and_a_perturbed_unknown_fails() {
    let fx = Fixture::new();
    let path = fx.write("ar.toml", &run_config(scalar_ar(0.5), Some(vec![0.5, 1.0, 2.0]), 100_000));
    let ok = run_on("compare", &path, &["--format", "json"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let report: CompareReport = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(report.summary.pass && report.summary.max_abs_z <= 3.0);
    assert_eq!(report.atoms.len(), 0);

    let bad = run_on("compare", &path, &["--format", "json", "--inject-unknown-perturbation", "0.1"]);
    assert_eq!(bad.status.code(), Some(3));
    let report: CompareReport = serde_json::from_slice(&bad.stdout).unwrap();
    assert!(!report.summary.pass && report.summary.max_abs_z > 3.0);
}

#[test]
fn fgm_without_dependence_agrees_with_its_reference_model() {
    let ModelConfig::StationaryFgm(mut f) = ModelConfig::canonical(ModelKind::StationaryFgm) else {
        unreachable!()
    };
    f.theta = vec![vec![0.0; 2]; 2];
    let base = StationaryArConfig {
        transition: f.transition.clone(),
        lambda: f.lambda.clone(),
        service: f.service.clone(),
        a: f.a.clone(),
    };
    let fgm = ModelConfig::StationaryFgm(f);
    let mut cfg = run_config(fgm, None, 20_000);
    cfg.reference = Some(ModelConfig::StationaryAr(base));
    let report = compare_report(&cfg, None).unwrap();
    let diff = report.summary.reference_max_diff.unwrap();
    assert!(diff <= 1e-10, "{diff}");
}

#[test]
fn diagnose_lists_spectra_with_verdicts() {
    let fx = Fixture::new();
    let path = fx.write_text(
        "transient.toml",
        r#"
[model]
kind = "transient_ar"
generator = [[-1.0, 1.0], [1.0, -1.0]]
lambda = [2.0, 3.0]
service = [{ kind = "exponential", rate = 3.0 }, { kind = "exponential", rate = 4.0 }]
a = [0.5, 0.25]
r = 0.5
eta = 0.0
w = 0.5
"#,
    );
    let o = run_on("diagnose", &path, &[]);
    assert_eq!(o.status.code(), Some(0));
    let csv = String::from_utf8(o.stdout).unwrap();
    let nu: Vec<f64> = csv
        .lines()
        .filter(|l| l.starts_with("nu,"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let (lo, hi) = ((7.0 - 5f64.sqrt()) / 2.0, (7.0 + 5f64.sqrt()) / 2.0);
    assert!((nu[0] - lo).abs() < 1e-12 && (nu[1] - hi).abs() < 1e-12, "{nu:?}");
    assert!((nu[0] - 2.38197).abs() < 1e-5 && (nu[1] - 4.61803).abs() < 1e-5);
    assert!(csv.lines().filter(|l| l.starts_with("nu,")).all(|l| l.ends_with(",OK")));

    let wd = diagnose_report(&run_config(ModelConfig::canonical(ModelKind::WaitDependent), None, 1)).unwrap();
    let gamma: Vec<_> = wd.entries.iter().filter(|e| e.quantity == "gamma").collect();
    assert_eq!(gamma[0].verdict, "structural");
    assert!(gamma[0].value.norm() < 1e-10);
    assert!(gamma[1..].iter().all(|e| e.verdict == "OK" && e.value.re > 0.0));
    assert!(wd.ok);

    let ModelConfig::ShotNoise(shot) = ModelConfig::canonical(ModelKind::ShotNoise) else {
        unreachable!()
    };
    let moduli: Vec<f64> = diagnose_report(&run_config(ModelConfig::ShotNoise(shot.clone()), None, 1))
        .unwrap()
        .entries
        .iter()
        .filter(|e| e.quantity == "contraction_modulus")
        .map(|e| e.value.re)
        .collect();
    let expected: Vec<f64> = shot.t.iter().map(|t| (-shot.speed * t).exp()).collect();
    assert_eq!(moduli.len(), expected.len());
    for (m, e) in moduli.iter().zip(&expected) {
        assert!((m - e).abs() < 1e-15);
    }
}

#[test]
fn json_reports_parse_back_to_the_in_memory_values() {
    let cfg = run_config(ModelConfig::canonical(ModelKind::Inar), None, 5_000);
    let solve = solve_report(&cfg, None).unwrap();
    let back: SolveReport = serde_json::from_str(&solve.to_json()).unwrap();
    assert_eq!(back, solve);
    assert_eq!(back.to_json(), solve.to_json());

    let compare = compare_report(&cfg, None).unwrap();
    let back: CompareReport = serde_json::from_str(&compare.to_json()).unwrap();
    assert_eq!(back, compare);
    for (a, b) in compare.rows.iter().zip(&back.rows) {
        assert_eq!(a.analytic_re.map(f64::to_bits), b.analytic_re.map(f64::to_bits));
        assert_eq!(a.z_score.map(f64::to_bits), b.z_score.map(f64::to_bits));
    }
    assert_eq!(rows_from_csv(&compare.to_csv()).unwrap(), compare.rows);
}

mod grid {
    use super::*;
    use modlindley::C64;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn auto_grid_stays_out_of_pole_neighbourhoods(
            lambda in prop::collection::vec(0.3f64..3.0, 2),
            mu in prop::collection::vec(0.3f64..4.0, 2),
            a in prop::collection::vec(0.05f64..0.8, 2),
            count in 2usize..30,
        ) {
            let model = ModelConfig::StationaryAr(StationaryArConfig {
                transition: vec![vec![0.6, 0.4], vec![0.3, 0.7]],
                lambda,
                service: mu.iter().map(|&rate| exp(rate)).collect(),
                a,
            });
            let mut cfg = run_config(model.clone(), None, 1);
            cfg.grid.auto.as_mut().unwrap().count = count;
            let built = model.build().unwrap();
            for s in cfg.grid_points().unwrap() {
                prop_assert!(built.system.check_pole(C64::new(s, 0.0)).is_ok(), "{s}");
            }
        }
    }
}
