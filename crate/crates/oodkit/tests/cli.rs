//! End-to-end tests of the `oodkit` binary: every subcommand, the exit-code
//! contract and the in-process composition oracle for `eval`.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oodkit::dumpio;
use oodkit::enhancers::{self, EnhancerSpec};
use oodkit::metrics;
use oodkit::scorers::{score_set, Scorer};
use oodkit::types::ScoreSet;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_oodkit")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p.to_string_lossy().into_owned()
    }

    /// Generates train/test/ood dumps plus a head CSV via the synth command.
    fn standard_data(&self) -> (String, String, String, String) {
        let train_cfg = self.write(
            "train.cfg",
            &format!(
                "kind=class_clouds\nclasses=4\ndim=16\nn_per_class=50\nmean_scale=5.0\nseed=11\nhead_out={}\n",
                self.p("head.csv")
            ),
        );
        run_ok(&["synth", "--spec", &train_cfg, "--out", &self.p("train.ooda")]);
        let test_cfg = self.write(
            "test.cfg",
            "kind=rect_gauss\nmu=1.0\nsigma=1.0\ndim=16\nn=80\nrectified=true\nseed=12\ntag=id_test\n",
        );
        run_ok(&["synth", "--spec", &test_cfg, "--out", &self.p("id.ooda")]);
        let ood_cfg = self.write(
            "ood.cfg",
            "kind=rect_gauss\nmu=0.4\nsigma=1.0\ndim=16\nn=70\nrectified=true\nseed=13\ntag=ood\n",
        );
        run_ok(&["synth", "--spec", &ood_cfg, "--out", &self.p("ood.ooda")]);
        (
            self.p("train.ooda"),
            self.p("id.ooda"),
            self.p("ood.ooda"),
            self.p("head.csv"),
        )
    }
}

#[test]
fn profile_command_round_trips() {
    let fx = Fixture::new();
    let (train, _, _, _) = fx.standard_data();
    let stdout = run_ok(&["profile", "--id", &train, "--out", &fx.p("prof.ooda")]);
    assert!(stdout.starts_with("profile: D=16 N=200"));

    // written profile equals the in-process computation at dump precision
    let set = dumpio::read_activation_set(Path::new(&train)).unwrap();
    let expect = enhancers::build_profile(&set).unwrap();
    let back = dumpio::read_profile(&fx.path("prof.ooda")).unwrap();
    assert_eq!(back.count(), expect.count());
    assert_eq!(back.source_checksum(), expect.source_checksum());
    for (a, b) in back.mu().iter().zip(expect.mu()) {
        assert_eq!(*a as f32, *b as f32);
    }
}

#[test]
fn profile_command_enforces_tag() {
    let fx = Fixture::new();
    let (_, id_test, _, _) = fx.standard_data();
    let out = run(&["profile", "--id", &id_test, "--out", &fx.p("p.ooda")]);
    assert_eq!(out.status.code(), Some(3));
    let ok = run(&[
        "profile",
        "--id",
        &id_test,
        "--out",
        &fx.p("p.ooda"),
        "--allow-any-tag",
    ]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn eval_matches_in_process_composition() {
    let fx = Fixture::new();
    let (train, id, ood, head_path) = fx.standard_data();
    run_ok(&["profile", "--id", &train, "--out", &fx.p("prof.ooda")]);
    let cfg = fx.write(
        "eval.cfg",
        &format!("enhancer=ras\nscorer=ebo\ntemperature=1\nprofile={}\n", fx.p("prof.ooda")),
    );
    run_ok(&[
        "eval",
        "--id",
        &id,
        "--ood",
        &ood,
        "--head",
        &head_path,
        "--config",
        &cfg,
        "--out",
        &fx.p("results.csv"),
    ]);
    let csv = std::fs::read_to_string(fx.path("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,dataset,auroc,fpr95,aupr");
    assert_eq!(lines.len(), 3, "one ood row plus the average row");
    assert!(lines[1].starts_with("ras+ebo,ood,"));
    assert!(lines[2].starts_with("ras+ebo,average,"));

    // oracle: the same pipeline composed in process
    let head = dumpio::read_linear_head(Path::new(&head_path)).unwrap();
    let profile = dumpio::read_profile(&fx.path("prof.ooda")).unwrap();
    let spec = EnhancerSpec::ras(profile);
    let scorer = Scorer::Ebo { temperature: 1.0 };
    let id_set = dumpio::read_activation_set(Path::new(&id)).unwrap();
    let ood_set = dumpio::read_activation_set(Path::new(&ood)).unwrap();
    let si = score_set(&id_set, &head, &spec, &scorer).unwrap();
    let so = score_set(&ood_set, &head, &spec, &scorer).unwrap();
    let combined = ScoreSet::concat(&[&si, &so]).unwrap();
    let auroc = metrics::auroc(&combined).unwrap();
    let fpr = metrics::fpr_at_tpr(&combined, 0.95).unwrap();
    let aupr = metrics::aupr(&combined).unwrap();
    let row1: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row1[2], auroc.to_string());
    assert_eq!(row1[3], fpr.to_string());
    assert_eq!(row1[4], aupr.to_string());
}

#[test]
fn eval_self_comparison_is_near_chance() {
    let fx = Fixture::new();
    let (_, id, _, head_path) = fx.standard_data();
    let cfg = fx.write("identity.cfg", "enhancer=identity\nscorer=ebo\n");
    // the same dump as both sides: every score pair ties, so AUROC is 0.5
    run_ok(&[
        "eval",
        "--id",
        &id,
        "--ood",
        &id,
        "--head",
        &head_path,
        "--config",
        &cfg,
        "--out",
        &fx.p("self.csv"),
    ]);
    let csv = std::fs::read_to_string(fx.path("self.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let auroc: f64 = row[2].parse().unwrap();
    assert_eq!(auroc, 0.5);
}

#[test]
fn eval_rejects_bad_config_with_exit_3() {
    let fx = Fixture::new();
    let (_, id, ood, head_path) = fx.standard_data();
    let cfg = fx.write("bad.cfg", "enhancer=nonsense\nscorer=ebo\n");
    let out = run(&[
        "eval", "--id", &id, "--ood", &ood, "--head", &head_path, "--config", &cfg,
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("enhancer"), "offending key not echoed: {stderr}");
}

#[test]
fn missing_input_file_exits_2() {
    let fx = Fixture::new();
    let out = run(&["profile", "--id", &fx.p("absent.ooda"), "--out", &fx.p("x.ooda")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn singular_covariance_exits_4() {
    let fx = Fixture::new();
    let (_, id, ood, head_path) = fx.standard_data();
    // a constant calibration dump has zero covariance: mds cannot be fitted
    let const_cfg = fx.write(
        "const.cfg",
        "kind=rect_gauss\nmu=3.0\nsigma=0.000000000001\ndim=16\nn=20\nrectified=true\nseed=5\ntag=id_train\n",
    );
    run_ok(&["synth", "--spec", &const_cfg, "--out", &fx.p("const.ooda")]);
    // labels are required by the fit; attach them by rewriting the dump
    let set = dumpio::read_activation_set(&fx.path("const.ooda"))
        .unwrap()
        .with_labels((0..20).map(|i| i % 2).collect())
        .unwrap();
    dumpio::write_activation_set(&set, &fx.path("const.ooda")).unwrap();
    let cfg = fx.write(
        "mds.cfg",
        &format!("enhancer=identity\nscorer=mds\ncalibration={}\n", fx.p("const.ooda")),
    );
    let out = run(&[
        "eval", "--id", &id, "--ood", &ood, "--head", &head_path, "--config", &cfg,
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn gamma_command_zero_for_identical_dumps() {
    let fx = Fixture::new();
    let (_, id, _, _) = fx.standard_data();
    run_ok(&[
        "gamma", "--id", &id, "--ood", &id, "--grid", "10:90:20",
        "--out", &fx.p("gamma.csv"),
    ]);
    let csv = std::fs::read_to_string(fx.path("gamma.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "p,gamma,stderr");
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1], "0");
    }
}

#[test]
fn residuals_command_zero_for_own_source() {
    let fx = Fixture::new();
    let (train, _, _, _) = fx.standard_data();
    run_ok(&["profile", "--id", &train, "--out", &fx.p("prof.ooda")]);
    run_ok(&[
        "residuals",
        "--ood",
        &train,
        "--profile",
        &fx.p("prof.ooda"),
        "--out",
        &fx.p("res.csv"),
    ]);
    let csv = std::fs::read_to_string(fx.path("res.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "rank,ood_mean,residual");
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        // profile went through f32 storage, so the diff is f32-eps scale
        let residual: f64 = fields[2].parse().unwrap();
        assert!(residual.abs() < 1e-6, "residual {residual}");
    }
}

#[test]
fn accuracy_command_identity_delta_zero() {
    let fx = Fixture::new();
    let (train, _, _, head_path) = fx.standard_data();
    let cfg = fx.write("identity.cfg", "enhancer=identity\nscorer=ebo\n");
    run_ok(&[
        "accuracy",
        "--id",
        &train,
        "--head",
        &head_path,
        "--config",
        &cfg,
        "--out",
        &fx.p("acc.csv"),
    ]);
    let csv = std::fs::read_to_string(fx.path("acc.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "enhancer,acc_base,acc_enhanced,delta");
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0], "identity");
    assert_eq!(fields[3], "0");
}

#[test]
fn synth_seed_override_changes_output() {
    let fx = Fixture::new();
    let spec = fx.write(
        "s.cfg",
        "kind=rect_gauss\nmu=0.0\nsigma=1.0\ndim=8\nn=10\nrectified=false\nseed=1\n",
    );
    run_ok(&["synth", "--spec", &spec, "--out", &fx.p("a.ooda")]);
    run_ok(&["synth", "--spec", &spec, "--out", &fx.p("b.ooda"), "--seed", "2"]);
    assert_ne!(
        std::fs::read(fx.path("a.ooda")).unwrap(),
        std::fs::read(fx.path("b.ooda")).unwrap()
    );
}

#[test]
fn eval_with_calibrated_enhancers_and_scorers() {
    let fx = Fixture::new();
    let (train, id, ood, head_path) = fx.standard_data();
    // react calibrated from the training dump; mds fitted on the same dump
    let cfg = fx.write(
        "react-mds.cfg",
        &format!("enhancer=react\npercentile_p=90\nscorer=mds\ncalibration={train}\n"),
    );
    run_ok(&[
        "eval",
        "--id",
        &id,
        "--ood",
        &ood,
        "--head",
        &head_path,
        "--config",
        &cfg,
        "--out",
        &fx.p("react-mds.csv"),
    ]);
    let csv = std::fs::read_to_string(fx.path("react-mds.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("react+mds,"));

    // dice + gen
    let cfg = fx.write(
        "dice-gen.cfg",
        &format!("enhancer=dice\ndice_sparsity_p=50\nscorer=gen\ncalibration={train}\n"),
    );
    run_ok(&[
        "eval", "--id", &id, "--ood", &ood, "--head", &head_path, "--config", &cfg,
        "--out", &fx.p("dice-gen.csv"),
    ]);
    let csv = std::fs::read_to_string(fx.path("dice-gen.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("dice+gen,"));
}

#[test]
fn markdown_flag_renders_table() {
    let fx = Fixture::new();
    let (_, id, ood, head_path) = fx.standard_data();
    let cfg = fx.write("identity.cfg", "enhancer=identity\nscorer=ebo\n");
    let out = run(&[
        "eval", "--id", &id, "--ood", &ood, "--head", &head_path, "--config", &cfg,
        "--out", &fx.p("m.csv"), "--markdown",
    ]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("| method | dataset |"));
}
