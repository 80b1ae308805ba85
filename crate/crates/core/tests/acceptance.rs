//! Acceptance run: every exit criterion at its fixed threshold, one
//! PASS/FAIL line each. Exits non-zero when any criterion fails.
//!
//! The expensive criteria share one pipeline per seed: base pretraining,
//! demo collection, the ablation variants, a state-conditioned residual,
//! the displacement sweeps and the transfer scenario.

use std::time::Instant;

use rand::Rng as _;
use residrl::base::{pretrain, BasePolicy, PpoConfig};
use residrl::eval::{
    ablate_seed, evaluate, robustness_sweep, transfer_scenario, AblationRow, Stack, TransferReport, Variant,
    SWEEP_OFFSETS,
};
use residrl::geom::{clamp_action, ActionDelta, Pose2, Twist2};
use residrl::nn::{gradient_check, Activation, Matrix, Mlp, MlpSpec};
use residrl::residual::demos::rollout_demo;
use residrl::residual::rlpd::RlpdConfig;
use residrl::residual::{
    base_action, collect_demos, combine, demo_gate, train_residual, FloorConfig, ObsMode, ReplayStore, Transition,
};
use residrl::seed;
use residrl::sim::{self, BaseObs, DomainConfig};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const EVAL_EPISODES: usize = 20;
const N_DEMOS: usize = 20;

struct Line {
    id: u32,
    pass: bool,
    detail: String,
}

fn line(id: u32, pass: bool, detail: impl Into<String>) -> Line {
    let l = Line { id, pass, detail: detail.into() };
    println!("criterion {:2}: {} {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.detail);
    l
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---- 7: distribution of pre-clamp demo-collection actions ----

fn distribution_preservation() -> Line {
    let base = BasePolicy::new_random(&[64, 64], -1.0, &mut seed::stream(70, "acceptance-base", 0));
    let domain = DomainConfig::real();
    let mut z: [Vec<f64>; 3] = Default::default();
    let mut mean_mismatch = 0usize;
    let mut episode = 0u64;
    while z[0].len() < 10_000 {
        let traj = rollout_demo(&base, &domain, seed::derive(70, "acceptance-demo", episode)).expect("rollout");
        episode += 1;
        for (t, step) in traj.steps.iter().enumerate() {
            let f = &traj.frames[t];
            let e = f.obs.ee_pose;
            let g = f.goal_noisy;
            let obs = BaseObs {
                ee_pose: e,
                ee_twist: f.obs.ee_twist,
                goal_pose_noisy: g,
                goal_minus_ee: [g.x - e.x, g.y - e.y, residrl::geom::wrap_deg(g.theta - e.theta)],
            };
            let (mu, sigma) = base.policy.forward(&obs.to_vec()).expect("forward");
            for j in 0..3 {
                if mu[j] != f.base_action[j] {
                    mean_mismatch += 1;
                }
                // executed pre-clamp action is a_b + a_r with a_b = mu
                let executed = f.base_action[j] + step.residual_action[j];
                z[j].push((executed - mu[j]) / sigma[j]);
            }
        }
    }
    let n = z[0].len() as f64;
    let mut ok = mean_mismatch == 0;
    let mut parts = Vec::new();
    for zj in &z {
        let m = mean(zj);
        let var = zj.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        // standardized draws: standard error of the mean is 1/sqrt(n), target variance 1
        let within = m.abs() <= 3.0 / n.sqrt() && (0.9..=1.1).contains(&var);
        ok &= within;
        parts.push(format!("mean {m:+.4} var ratio {var:.3}"));
    }
    line(7, ok, format!("{} steps; {}; base-mean mismatches {mean_mismatch}", n, parts.join(" | ")))
}

// ---- 8: zero-initialized residual leaves the base action unchanged ----

fn warm_start_identity() -> Line {
    let base = BasePolicy::new_random(&[64, 64], -1.0, &mut seed::stream(80, "acceptance-base", 0));
    let domain = DomainConfig::real();
    let demos: Vec<_> = (0..2).map(|i| rollout_demo(&base, &domain, i).expect("rollout")).collect();
    let cfg = RlpdConfig { max_env_steps: 0, eval_episodes: 1, ..RlpdConfig::default() };
    let fresh = train_residual(Some(&base), &domain, &demos, &cfg, 80, |_| {}).expect("init").policy;
    let mut rng = seed::stream(80, "acceptance-warm", 0);
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let mut state = sim::reset(&domain, seed::derive(80, "acceptance-warm-reset", i));
        for _ in 0..rng.random_range(0..15) {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            state = sim::advance(&state, &domain, clamp_action(a).unwrap()).state;
        }
        let obs = sim::observe_residual(&mut state, &domain);
        let a_b = base_action(Some(&base), &state);
        let a_r = fresh.mean(&fresh.observer.encode(&obs, &state.goal_pose_noisy), &a_b).expect("mean");
        let combined = combine(a_b, a_r).unwrap().to_array();
        let base_only = clamp_action(a_b).unwrap().to_array();
        for j in 0..3 {
            worst = worst.max((combined[j] - base_only[j]).abs());
        }
    }
    line(8, worst <= f64::EPSILON, format!("max |combined - base| over 100 observations = {worst:e}"))
}

// ---- 9: exactness suites ----

fn dummy(tag: f64, i: usize, len: usize) -> Transition {
    Transition {
        obs: vec![tag, i as f64],
        base_action: [0.0; 3],
        residual_action: [0.0; 3],
        reward: if i + 1 == len { 1.0 } else { 0.0 },
        done: i + 1 == len,
        next_obs: vec![tag, i as f64 + 1.0],
        next_base_action: [0.0; 3],
    }
}

fn exactness() -> Line {
    let mut failures = Vec::new();

    let mut rng = seed::stream(90, "acceptance-exact", 0);
    let mut batches = 0;
    for case in 0..200 {
        let mut store = ReplayStore::new(50, 5000);
        for k in 0..rng.random_range(1..8) {
            let len = rng.random_range(1..40);
            store.push_demo((0..len).map(|i| dummy(-(k as f64) - 1.0, i, len)).collect());
        }
        for i in 0..rng.random_range(1..500) {
            store.push_online(dummy(1.0, i, usize::MAX));
        }
        let batch_size = 2 * rng.random_range(1..129);
        let (batch, counts) = store.symmetric_sample(batch_size, &mut rng);
        let demo_drawn = batch.iter().filter(|t| t.obs[0] < 0.0).count();
        if counts.demo != batch_size / 2 || counts.online != batch_size / 2 || demo_drawn != batch_size / 2 {
            failures.push(format!("sample case {case}: {counts:?}"));
        }
        batches += 1;
    }

    let gate = [
        (11, vec![10, 12, 20], true),
        (12, vec![10, 12, 20], false),
        (15, vec![10, 12, 20, 30], true),
        (16, vec![10, 12, 20, 30], false),
        (1, vec![], false),
    ];
    for (len, lengths, admit) in gate {
        if demo_gate(len, &lengths) != admit {
            failures.push(format!("gate {len} vs {lengths:?}"));
        }
    }

    let cfg = DomainConfig::nominal();
    let mut s = sim::reset(&cfg, 0);
    let g = s.goal_pose_true;
    let boundary = [
        (Pose2::new(g.x + 3.0, g.y, g.theta), true),
        (Pose2::new(g.x, g.y - 3.0, g.theta), true),
        (Pose2::new(g.x + 3.0 + 1e-9, g.y, g.theta), false),
        (Pose2::new(g.x, g.y, g.theta + 5.0), true),
        (Pose2::new(g.x, g.y, g.theta - 5.0), true),
        (Pose2::new(g.x, g.y, g.theta + 5.0 + 1e-9), false),
        (Pose2::new(g.x + 2.9, g.y, g.theta - 4.9), true),
    ];
    for (p, expect) in boundary {
        s.ee_pose = p;
        if sim::check_success(&s) != expect {
            failures.push(format!("success predicate at {p:?}"));
        }
    }

    let clamped = clamp_action([1.3, -2.0, 0.5]).unwrap();
    if clamped != (ActionDelta { dx: 1.0, dy: -1.0, dtheta: 0.5 }) {
        failures.push("clamp (1.3, -2, 0.5)".into());
    }
    if clamp_action(clamped.to_array()).unwrap() != clamped {
        failures.push("clamp idempotence".into());
    }
    if combine([0.8, 0.0, 0.0], [0.5, 0.0, 0.0]).unwrap() != (ActionDelta { dx: 1.0, dy: 0.0, dtheta: 0.0 }) {
        failures.push("combine (0.8 + 0.5)".into());
    }
    if clamp_action([f64::NAN, 0.0, 0.0]).is_ok() {
        failures.push("non-finite action accepted".into());
    }

    let detail = if failures.is_empty() {
        format!("{batches} batches split exactly; gate, success boundary and clamp cases exact")
    } else {
        failures.join("; ")
    };
    line(9, failures.is_empty(), detail)
}

// ---- 10: numerical core ----

fn numerical_core() -> Line {
    let mut worst_grad: f64 = 0.0;
    for i in 0..50u64 {
        let mut rng = seed::stream(100, "acceptance-gradcheck", i);
        let input = rng.random_range(1..7);
        let hidden: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(2..9)).collect();
        let output = rng.random_range(1..5);
        let act = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
        let mut spec = MlpSpec::linear(input, &hidden, output, act);
        if rng.random_bool(0.5) {
            spec = spec.with_layer_norm();
        }
        let net = Mlp::new(spec, 1.0, &mut rng);
        let rows = rng.random_range(1..6);
        let mut uniform = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let x = Matrix::from_vec(rows, input, uniform(rows * input));
        let w = Matrix::from_vec(rows, output, uniform(rows * output));
        worst_grad = worst_grad.max(gradient_check(&net, &x, &w, 1e-6, 1e-9));
    }

    let domains = [DomainConfig::nominal(), DomainConfig::real(), DomainConfig::transfer()];
    let mut replay_mismatch = 0;
    for i in 0..1000u64 {
        let cfg = &domains[i as usize % 3];
        let mut rng = seed::stream(101, "acceptance-replay", i);
        let len = rng.random_range(1..40);
        let actions: Vec<ActionDelta> = (0..len)
            .map(|_| clamp_action([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).unwrap())
            .collect();
        let run = || {
            let mut s = sim::reset(cfg, i);
            let mut trace = Vec::new();
            for a in &actions {
                let r = sim::step(&s, cfg, *a);
                trace.push((r.state.ee_pose, r.state.ee_twist, r.residual_obs.contact_wrench, r.residual_obs.image_wrist));
                s = r.state;
                if r.done {
                    break;
                }
            }
            trace
        };
        let bits = |t: &[(Pose2, Twist2, [f64; 3], image::GrayImage)]| -> Vec<u64> {
            t.iter()
                .flat_map(|(p, v, w, img)| {
                    let mut b: Vec<u64> = p.to_array().iter().chain(&v.to_array()).chain(w).map(|x| x.to_bits()).collect();
                    b.extend(img.as_raw().iter().map(|&px| px as u64));
                    b
                })
                .collect()
        };
        if bits(&run()) != bits(&run()) {
            replay_mismatch += 1;
        }
    }

    // zero action, contact-free: energy about the fixed setpoint never rises
    let mut energy_rises = 0;
    for i in 0..1000u64 {
        let mut rng = seed::stream(102, "acceptance-energy", i);
        let cfg = DomainConfig {
            socket_pose_true: Pose2::new(0.0, -500.0, 0.0),
            workspace_bound: 1e9,
            ..domains[i as usize % 3].clone()
        };
        let target = Pose2::new(0.0, 30.0, 0.0);
        let mut pose =
            Pose2::new(rng.random_range(-10.0..10.0), 30.0 + rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let mut twist = Twist2 {
            vx: rng.random_range(-50.0..50.0),
            vy: rng.random_range(-50.0..50.0),
            omega: rng.random_range(-50.0..50.0),
        };
        let mut e = sim::controller_energy(&cfg, &pose, &twist, &target);
        for _ in 0..300 {
            let w = sim::substep(&cfg, &mut pose, &mut twist, &target);
            let next = sim::controller_energy(&cfg, &pose, &twist, &target);
            if next > e || w != residrl::sim::Wrench::ZERO {
                energy_rises += 1;
                break;
            }
            e = next;
        }
    }
    line(
        10,
        worst_grad < 1e-4 && replay_mismatch == 0 && energy_rises == 0,
        format!(
            "gradcheck max rel err {worst_grad:.2e} over 50 nets; replay mismatches {replay_mismatch}/1000; \
             energy rises {energy_rises}/1000"
        ),
    )
}

// ---- shared per-seed pipeline for 1-6 and 11 ----

struct SeedRun {
    seed: u64,
    pretrain_s: f64,
    pretrain_steps: usize,
    nominal_success: f64,
    rows: Vec<AblationRow>,
    full_train_s: f64,
    image_displaced: f64,
    state_displaced: f64,
    base_displaced: f64,
    transfer: TransferReport,
}

fn row(rows: &[AblationRow], v: Variant) -> &AblationRow {
    rows.iter().find(|r| r.variant == v).expect("variant evaluated")
}

fn run_seed(s: u64, ppo: &PpoConfig, rlpd: &RlpdConfig) -> residrl::Result<SeedRun> {
    let nominal = DomainConfig::nominal();
    let real = DomainConfig::real();

    let t = Instant::now();
    let run = pretrain(ppo, &nominal, s, |_| {})?;
    let pretrain_s = t.elapsed().as_secs_f64();
    let base = run.policy;
    let nominal_eval = evaluate(Stack::base_only(&base), &nominal, 100, seed::derive(s, "acceptance-nominal", 0))?;

    let demos = collect_demos(&base, &real, N_DEMOS, s, FloorConfig::default())?.trajectories;
    let t = Instant::now();
    let (mut rows, full) = ablate_seed(&base, &demos, &real, rlpd, s, EVAL_EPISODES, &[Variant::Full])?;
    let full_train_s = t.elapsed().as_secs_f64();
    let full = full.expect("full variant trained");
    let others = [Variant::NoDemoUpdate, Variant::NoBaseActionInput, Variant::BaseOnly, Variant::ScratchRl];
    rows.extend(ablate_seed(&base, &demos, &real, rlpd, s, EVAL_EPISODES, &others)?.0);

    let state_cfg = RlpdConfig { obs_mode: ObsMode::State, ..rlpd.clone() };
    let state = train_residual(Some(&base), &real, &demos, &state_cfg, s, |_| {})?;
    let sweep_seed = seed::derive(s, "acceptance-sweep", 0);
    let sweep = |stack| robustness_sweep(stack, &real, &SWEEP_OFFSETS, EVAL_EPISODES, sweep_seed);
    let image_displaced = sweep(Stack::with_residual(&base, &full.policy))?.displaced_success();
    let state_displaced = sweep(Stack::with_residual(&base, &state.policy))?.displaced_success();
    let base_displaced = sweep(Stack::base_only(&base))?.displaced_success();

    let (transfer, _) = transfer_scenario(&base, &DomainConfig::transfer(), rlpd, N_DEMOS, EVAL_EPISODES, s)?;

    Ok(SeedRun {
        seed: s,
        pretrain_s,
        pretrain_steps: run.env_steps,
        nominal_success: nominal_eval.success_rate,
        rows,
        full_train_s,
        image_displaced,
        state_displaced,
        base_displaced,
        transfer,
    })
}

fn experiment_lines(runs: &[SeedRun], ppo: &PpoConfig) -> Vec<Line> {
    let mut out = Vec::new();

    let pretrain_total: f64 = runs.iter().map(|r| r.pretrain_s).sum();
    let per_seed: Vec<String> = runs.iter().map(|r| format!("s{} {:.2}@{}", r.seed, r.nominal_success, r.pretrain_steps)).collect();
    out.push(line(
        1,
        runs.iter().all(|r| r.nominal_success >= 0.90 && r.pretrain_steps <= ppo.total_env_steps.min(1_500_000))
            && pretrain_total <= 3600.0,
        format!("nominal success over 100 episodes [{}]; pretraining {:.0} s total", per_seed.join(", "), pretrain_total),
    ));

    let zero_shot: Vec<f64> = runs.iter().map(|r| row(&r.rows, Variant::BaseOnly).success_rate).collect();
    out.push(line(
        2,
        zero_shot.iter().all(|z| (0.40..=0.80).contains(z)),
        format!("real-domain zero-shot success per seed {zero_shot:?}, band [0.40, 0.80]"),
    ));

    let full: Vec<f64> = runs.iter().map(|r| row(&r.rows, Variant::Full).success_rate).collect();
    let full_total: f64 = runs.iter().map(|r| r.full_train_s).sum();
    let at_target = full.iter().filter(|&&f| f >= 0.95).count();
    out.push(line(
        3,
        at_target >= 4 && full_total <= 5400.0,
        format!("adapted success per seed {full:?} ({at_target}/5 >= 0.95); residual training {full_total:.0} s total"),
    ));

    let cycles = |v: Variant| -> Vec<f64> { runs.iter().filter_map(|r| row(&r.rows, v).mean_cycle_time_s).collect() };
    let (c_full, c_base) = (cycles(Variant::Full), cycles(Variant::BaseOnly));
    let ok4 = !c_full.is_empty() && !c_base.is_empty() && mean(&c_full) < mean(&c_base);
    out.push(line(
        4,
        ok4,
        format!("mean cycle time adapted {:.3} s vs base {:.3} s", mean(&c_full), mean(&c_base)),
    ));

    let success = |v: Variant| mean(&runs.iter().map(|r| row(&r.rows, v).success_rate).collect::<Vec<_>>());
    let m: Vec<(Variant, f64)> = Variant::ALL.iter().map(|&v| (v, success(v))).collect();
    let get = |v: Variant| m.iter().find(|(w, _)| *w == v).unwrap().1;
    let at_least = |a: f64, b: f64| a > b || (a == 1.0 && b == 1.0);
    let full_m = get(Variant::Full);
    let scratch = get(Variant::ScratchRl);
    let lowest = m.iter().filter(|(v, _)| *v != Variant::ScratchRl).all(|(_, s)| scratch < *s);
    let means: Vec<String> = m.iter().map(|(v, s)| format!("{} {s:.3}", v.name())).collect();
    out.push(line(
        5,
        at_least(full_m, get(Variant::NoDemoUpdate)) && at_least(full_m, get(Variant::NoBaseActionInput)) && lowest,
        format!("mean success over seeds: {}", means.join(", ")),
    ));

    let img = mean(&runs.iter().map(|r| r.image_displaced).collect::<Vec<_>>());
    let st = mean(&runs.iter().map(|r| r.state_displaced).collect::<Vec<_>>());
    let bs = mean(&runs.iter().map(|r| r.base_displaced).collect::<Vec<_>>());
    out.push(line(
        6,
        img >= st && st >= bs,
        format!("displaced-socket mean success image {img:.3} >= state {st:.3} >= base {bs:.3}"),
    ));

    let zs = mean(&runs.iter().map(|r| r.transfer.zero_shot.success_rate).collect::<Vec<_>>());
    let ad = mean(&runs.iter().map(|r| r.transfer.adapted.success_rate).collect::<Vec<_>>());
    let agree: usize = runs.iter().map(|r| r.transfer.yaw_sign.agree).sum();
    let total: usize = runs.iter().map(|r| r.transfer.yaw_sign.total).sum();
    let yaw = if total == 0 { 0.0 } else { agree as f64 / total as f64 };
    out.push(line(
        11,
        (0.3..=0.7).contains(&zs) && ad >= 0.95 && yaw >= 0.8,
        format!("transfer zero-shot {zs:.3} in [0.3, 0.7], adapted {ad:.3}, yaw sign {agree}/{total} = {yaw:.3}"),
    ));
    out
}

fn main() {
    let t0 = Instant::now();
    let mut lines = vec![distribution_preservation(), warm_start_identity(), exactness(), numerical_core()];

    let ppo = PpoConfig::default();
    let rlpd = RlpdConfig::default();
    let mut runs = Vec::new();
    let mut pipeline_error = None;
    for s in SEEDS {
        match run_seed(s, &ppo, &rlpd) {
            Ok(r) => {
                eprintln!("seed {s} done after {:.0} s", t0.elapsed().as_secs_f64());
                runs.push(r);
            }
            Err(e) => {
                pipeline_error = Some(format!("seed {s}: {e}"));
                break;
            }
        }
    }
    match pipeline_error {
        None => lines.extend(experiment_lines(&runs, &ppo)),
        Some(e) => {
            for id in [1, 2, 3, 4, 5, 6, 11] {
                lines.push(line(id, false, format!("pipeline failed: {e}")));
            }
        }
    }

    lines.sort_by_key(|l| l.id);
    let failed: Vec<u32> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        lines.len() - failed.len(),
        lines.len(),
        t0.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        for l in lines.iter().filter(|l| !l.pass) {
            println!("  {}: {}", l.id, l.detail);
        }
        std::process::exit(1);
    }
}
