use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nsalloc_cli::config::InitialState;
use nsalloc_cli::ExperimentConfig;
use nsalloc_core::instances;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nsalloc"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&std::fs::read_to_string(bundled(name)).unwrap()).unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn bundled_configs_match_the_builtin_instances() {
    for (name, graph, agents) in [
        ("example1_alg1.cfg", instances::graph_g1(), instances::example1_agents()),
        ("example1_alg2.cfg", instances::graph_g2(), instances::example1_agents()),
        ("example2_digraph.cfg", instances::graph_g1(), instances::example2_agents()),
        ("example2_undirected.cfg", instances::graph_g2(), instances::example2_agents()),
    ] {
        let cfg = load(name);
        assert_eq!(cfg.graph().unwrap(), graph, "{name}");
        assert_eq!(cfg.agents().unwrap(), agents, "{name}");
    }
    assert_eq!(load("example1_alg2.cfg").initial, InitialState::DispatchAlg2);
}

#[test]
fn dispatch_run_reaches_the_reported_optimum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["run", bundled("example1_alg1.cfg").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(tmp.path());
    for (got, want) in s["terminal"]["y"].as_array().unwrap().iter().zip(instances::EXAMPLE1_OPTIMUM) {
        assert!((got[0].as_f64().unwrap() - want).abs() < 1e-2);
    }
    assert!(s["oracle"]["passed"].as_bool().unwrap());
    assert!(s["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    let v1: Vec<f64> = s["lyapunov"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(v1.windows(2).all(|w| w[1] <= w[0] + 1e-6));
    let csv = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,agent,coord,x,y,s,w");
}

#[test]
fn undirected_planar_run_converges_below_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let out =
        run(&["run", bundled("example2_undirected.cfg").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(summary(tmp.path())["oracle"]["max_deviation"].as_f64().unwrap() < 1e-2);
}

#[test]
fn dumped_config_round_trips() {
    for name in ["example1_alg1.cfg", "example1_alg2.cfg", "example2_digraph.cfg", "example2_undirected.cfg"] {
        let out = run(&["run", bundled(name).to_str().unwrap(), "--dump-config"]);
        assert_eq!(code(&out), 0);
        let dumped = ExperimentConfig::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
        assert_eq!(dumped, load(name), "{name}");
        assert_eq!(ExperimentConfig::parse(&dumped.to_toml()).unwrap(), dumped);
    }
}

#[test]
fn overrides_show_up_in_the_dumped_config() {
    let out = run(&[
        "run",
        bundled("example1_alg1.cfg").to_str().unwrap(),
        "--dump-config",
        "--step",
        "0.0005",
        "--horizon",
        "12",
        "--seed",
        "9",
        "--verify",
    ]);
    let cfg = ExperimentConfig::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((cfg.params.step_size, cfg.params.max_time, cfg.seed), (0.0005, 12.0, 9));
}

#[test]
fn same_config_and_seed_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(bundled("example2_digraph.cfg"))
        .unwrap()
        .replace("type = \"zeros\"", "type = \"random\"\nscale = 2.0")
        .replace("max_time = 30.0", "max_time = 3.0")
        .replace("verify = true", "verify = false");
    let cfg = write_config(tmp.path(), &text);
    let mut outputs = Vec::new();
    for (k, seed) in ["7", "7", "8"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{k}"));
        let out = run(&["run", cfg.to_str().unwrap(), "--seed", seed, "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(dir.join("trajectory.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0], outputs[2]);
}

#[test]
fn malformed_config_exits_2_with_a_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "name = \"broken\"\nalgorithm = \"alg1\"\n[graph]\nnodes = four\n");
    let out = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn unknown_fields_are_parse_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let text =
        std::fs::read_to_string(bundled("example1_alg1.cfg")).unwrap().replace("seed = 0", "seed = 0\ncolour = 3");
    let out = run(&["run", write_config(tmp.path(), &text).to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn validation_failures_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(bundled("example1_alg1.cfg")).unwrap();
    let cases = [
        base.replace("lower = [20.0], upper = [40.0]", "lower = [41.0], upper = [40.0]"),
        base.replace("algorithm = \"alg1\"", "algorithm = \"alg2\""),
        base.replace("k1 = 5.0", "k1 = 0.0"),
        base.replace(
            "anchor = [35.0] },\n]\n\n[[agents]]\nresource = [40.0]",
            "anchor = [35.0, 1.0] },\n]\n\n[[agents]]\nresource = [40.0]",
        ),
    ];
    for (k, text) in cases.iter().enumerate() {
        assert_ne!(text, &base, "case {k} did not apply");
        let out =
            run(&["run", write_config(tmp.path(), text).to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
        assert_eq!(code(&out), 3, "case {k}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn divergence_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        bundled("example1_alg1.cfg").to_str().unwrap(),
        "--step",
        "0.5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn check_params_reports_bounds() {
    let out = run(&["check-params", bundled("example1_alg1.cfg").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("k2 = 26.000000    pass (needs > 25.000000)"), "{text}");
    assert!(text.contains("overall         pass"));

    let out = run(&["check-params", bundled("example2_undirected.cfg").to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("fully distributed: no bound required"), "{text}");

    let tmp = tempfile::tempdir().unwrap();
    let zero = std::fs::read_to_string(bundled("example1_alg1.cfg")).unwrap().replace("k1 = 5.0", "k1 = 0.0");
    let out = run(&["check-params", write_config(tmp.path(), &zero).to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("k1 = 0.000000     FAIL") && text.contains("gains must be positive"), "{text}");

    let out = run(&["check-params", bundled("example1_alg1.cfg").to_str().unwrap(), "--step", "0.05"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("forward Euler may diverge"));
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        bundled("example2_undirected.cfg").to_str().unwrap(),
        "--horizon",
        "15",
        "--sweep",
        "k2=5,10,20",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().matches("max deviation").count(), 3);
    for v in ["5", "10", "20"] {
        let s = summary(&tmp.path().join(format!("k2={v}")));
        assert_eq!(s["gains"][1].as_f64().unwrap(), v.parse::<f64>().unwrap());
    }
    let bad = run(&["run", bundled("example2_undirected.cfg").to_str().unwrap(), "--sweep", "k9=1"]);
    assert_eq!(code(&bad), 2);
}
