//! End-to-end runs of the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use residrl::base::BasePolicy;
use residrl::cli::{ABLATION_CSV, BASE_CKPT, BASE_CURVE, DEMO_DIR, MANIFEST, RESIDUAL_CKPT};
use residrl::residual::ResidualPolicy;

fn residrl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_residrl"))
        .args(args)
        .env_remove("RESIDRL_OUT")
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit status")
}

const TINY_PPO: &str = "name = tiny\nppo.total_env_steps = 4096\nppo.eval_every = 2\nppo.eval_episodes = 2\n";

#[test]
fn missing_domain_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "exp.cfg", "real_domain = absent.cfg\n");
    let o = residrl(&["pretrain", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn parse_error_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "exp.cfg", "n_demos = 3\nthis line is wrong\n");
    let o = residrl(&["pretrain", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("exp.cfg:2"));
}

#[test]
fn downstream_commands_report_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "exp.cfg", TINY_PPO);
    let c = cfg.to_str().unwrap();
    for cmd in [&["collect-demos", c][..], &["train-residual", c], &["eval", c], &["transfer", c], &["ablate", c, "--seeds", "1"]] {
        let o = residrl(cmd, dir.path());
        assert_eq!(code(&o), 4, "{cmd:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains(BASE_CKPT), "{cmd:?}");
    }
}

#[test]
fn short_pretrain_is_deterministic_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "exp.cfg", TINY_PPO);
    let c = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    // far too short to reach the target: the checkpoint is still written
    let first = residrl(&["pretrain", c, "--seed", "7"], &a);
    assert_eq!(code(&first), 3);
    assert_eq!(code(&residrl(&["pretrain", c, "--seed", "7"], &b)), 3);
    let curve = |root: &Path| fs::read(root.join("tiny/seed_7").join(BASE_CURVE)).unwrap();
    assert_eq!(curve(&a), curve(&b));
    let ckpt = a.join("tiny/seed_7").join(BASE_CKPT);
    let h1 = BasePolicy::load(&ckpt).unwrap().param_hash();
    assert_eq!(h1, BasePolicy::load(&b.join("tiny/seed_7").join(BASE_CKPT)).unwrap().param_hash());

    let again = residrl(&["pretrain", c, "--seed", "7"], &a);
    assert_eq!(code(&again), 2);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    assert_eq!(code(&residrl(&["pretrain", c, "--seed", "7", "--force"], &a)), 3);
    assert_eq!(BasePolicy::load(&ckpt).unwrap().param_hash(), h1);
}

#[test]
fn environment_variable_sets_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "exp.cfg", TINY_PPO);
    let root = dir.path().join("envroot");
    let o = Command::new(env!("CARGO_BIN_EXE_residrl"))
        .args(["pretrain", cfg.to_str().unwrap(), "--seed", "1"])
        .env("RESIDRL_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
    assert!(root.join("tiny/seed_1").join(BASE_CKPT).exists());
}

#[test]
fn full_pipeline_on_small_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let body = "name = e2e\nseeds = 0\nn_demos = 3\neval_episodes = 4\n\
                rlpd.max_env_steps = 300\nrlpd.eval_every = 150\nrlpd.eval_episodes = 2\n";
    let cfg = write_cfg(dir.path(), "exp.cfg", body);
    let c = cfg.to_str().unwrap();
    let out = dir.path().join("runs");
    let seed_dir = out.join("e2e/seed_0");
    let run = |args: &[&str]| {
        let o = residrl(args, &out);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };

    run(&["pretrain", c]);
    run(&["collect-demos", c]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(seed_dir.join(DEMO_DIR).join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest["n"], 3);
    assert!(manifest["attempts"].as_u64().unwrap() >= 3);
    let demo_bytes = fs::read(seed_dir.join(DEMO_DIR).join("demo_000.bin")).unwrap();

    // same seed, same trajectories byte for byte
    run(&["collect-demos", c, "--force"]);
    assert_eq!(fs::read(seed_dir.join(DEMO_DIR).join("demo_000.bin")).unwrap(), demo_bytes);

    run(&["train-residual", c]);
    assert!(ResidualPolicy::load(&seed_dir.join(RESIDUAL_CKPT)).is_ok());

    let o = run(&["eval", c, "--stack", "base", "--n", "3"]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let last: serde_json::Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    assert_eq!(last["n_episodes"], 3);
    assert!(last["success_rate"].as_f64().unwrap() >= 0.0);
    run(&["eval", c]);

    run(&["sweep", c, "--n", "2"]);
    let grid: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(seed_dir.join("sweep_residual.json")).unwrap()).unwrap();
    assert_eq!(grid["cells"].as_array().unwrap().len(), 5);

    run(&["ablate", c, "--seeds", "1"]);
    let csv = fs::read_to_string(out.join("e2e").join(ABLATION_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);

    run(&["transfer", c]);
    let t: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(seed_dir.join("transfer.json")).unwrap()).unwrap();
    assert!(t["yaw_sign"]["fraction"].is_number());
}
