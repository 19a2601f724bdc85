//! Acceptance checks. Prints one `criterion N: PASS|FAIL` line per check and
//! exits non-zero if any fail.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use kdoffload::a3c::{evaluate, k_step_return, returns_backward, train, EvalConfig, Hyperparams};
use kdoffload::baselines::{evaluate_baseline, exhaustive_optimum, Baseline};
use kdoffload::channel::ap_transmit_prob;
use kdoffload::env::{
    adjusted_task_delay, local_recompute, raw_task_delay, Env, ExecSite, MobilityPenalty, Upstream,
};
use kdoffload::mobility::{
    build_transition_matrix, evolve, expected_handoffs, node_usability, HeadwayChain, HeadwayDistribution,
};
use kdoffload::nn::{
    backward_actor, backward_critic, forward_actor, forward_critic, init_params, log_prob, policy_entropy,
    Activation, NetParams,
};
use kdoffload::scenario::presets;
use kdoffload::scenario::{NodeKind, TaskProfile, VnPenalty};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_transmit_prob() -> Check {
    let start = Instant::now();
    for w in [1u32, 3, 7, 15, 31, 63] {
        for m in [0u32, 3, 5] {
            let p = ap_transmit_prob(w, m, 0.0).map_err(|e| e.to_string())?;
            let want = 2.0 / (f64::from(w) + 1.0);
            ensure((p - want).abs() <= 1e-15, format!("W={w} m={m}: {p} vs {want}"))?;
        }
    }
    let t = start.elapsed();
    ensure(t.as_secs_f64() < 1.0, format!("took {t:?}"))?;
    Ok(format!("6 windows exact in {t:?}"))
}

fn random_chain(rng: &mut ChaCha8Rng) -> HeadwayChain {
    let z_min = rng.random_range(1.0..20.0);
    let unit = rng.random_range(1.0..10.0);
    let z_max = z_min + unit * rng.random_range(1..60) as f64;
    let n = HeadwayChain::state_count(z_min, z_max, unit);
    let beta: f64 = rng.random_range(0.0..=1.0);
    let top = (1.0 - beta * (1.0 - (z_min + (n - 1) as f64 * unit) / z_max)).max(1.0);
    let mut initial: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let total: f64 = initial.iter().sum();
    initial.iter_mut().for_each(|v| *v /= total);
    HeadwayChain {
        z_min,
        z_max,
        unit,
        p: rng.random_range(0.0..0.5) / top,
        q: rng.random_range(0.0..0.5) / top,
        beta,
        comm_range_state: rng.random_range(0..n),
        time_step: 1.0,
        initial_dist: initial,
    }
}

fn c2_chain_stochastic() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_row = 0.0f64;
    let mut worst_mass = 0.0f64;
    for _ in 0..1000 {
        let chain = random_chain(&mut rng);
        let q = build_transition_matrix(&chain).map_err(|e| e.to_string())?;
        for i in 0..q.states() {
            let row = q.row(i);
            ensure(row.iter().all(|&v| v >= 0.0), format!("negative entry in row {i}"))?;
            worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        let mut dist = HeadwayDistribution::new(chain.initial_dist.clone()).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            dist = evolve(&dist, &q, 1).map_err(|e| e.to_string())?;
            ensure(dist.probs.iter().all(|&v| v >= 0.0), "negative probability")?;
            worst_mass = worst_mass.max((dist.probs.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure(worst_row <= 1e-12, format!("row sum off by {worst_row:e}"))?;
    ensure(worst_mass <= 1e-12, format!("mass off by {worst_mass:e}"))?;
    Ok(format!("1000 chains, max row error {worst_row:.1e}, max mass error {worst_mass:.1e} over 200 steps"))
}

fn c3_usability_monotone() -> Check {
    // 41 states, 0..=40
    let base = HeadwayChain {
        z_min: 10.0,
        z_max: 205.0,
        unit: 5.0,
        p: 0.3,
        q: 0.3,
        beta: 0.5,
        comm_range_state: 30,
        time_step: 1.0,
        initial_dist: HeadwayChain::point_mass(41, 20),
    };
    let exec = 25.0;
    let mut prev = f64::INFINITY;
    for i in 0..20 {
        let p = 0.65 * i as f64 / 19.0;
        let r = node_usability(&HeadwayChain { p, ..base.clone() }, exec).map_err(|e| e.to_string())?;
        ensure(r <= prev + 1e-12, format!("R rose to {r} at p={p}"))?;
        prev = r;
    }
    let mut prev = f64::NEG_INFINITY;
    for k in 1..40 {
        let r = node_usability(&HeadwayChain { comm_range_state: k, ..base.clone() }, exec).map_err(|e| e.to_string())?;
        ensure(r >= prev - 1e-12, format!("R fell to {r} at range state {k}"))?;
        prev = r;
    }
    Ok("non-increasing over 20 values of p, non-decreasing over range states 1..39".into())
}

fn dense_usability(chain: &HeadwayChain, exec: f64) -> f64 {
    let n = chain.states();
    let mut q = vec![vec![0.0; n]; n];
    for (j, row) in q.iter_mut().enumerate() {
        let factor = 1.0 - chain.beta * (1.0 - (chain.z_min + j as f64 * chain.unit) / chain.z_max);
        let (pj, qj) = (chain.p * factor, chain.q * factor);
        row[j] = 1.0 - pj - qj;
        if j == 0 { row[j] += qj } else { row[j - 1] = qj }
        if j == n - 1 { row[j] += pj } else { row[j + 1] = pj }
    }
    let steps = ((exec / chain.time_step).round() as usize).max(1);
    let mut pi = chain.initial_dist.clone();
    for _ in 0..steps {
        pi = (0..n).map(|j| (0..n).map(|i| pi[i] * q[i][j]).sum()).collect();
    }
    pi[..=chain.comm_range_state].iter().sum()
}

fn c4_delay_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let kinds = [NodeKind::Local, NodeKind::Bs, NodeKind::Ap, NodeKind::Vn];
    for _ in 0..1000 {
        let kind = kinds[rng.random_range(0..4)];
        let (f, du, ddep) = (rng.random_range(0.0..1e4), rng.random_range(0.0..1e8), rng.random_range(0.0..3e9));
        let (fc, b) = (rng.random_range(10.0..1000.0), rng.random_range(1e6..1e8));
        let link = rng.random_bool(0.7).then(|| rng.random_range(1e7..3e8));
        let (eta, d_h, f_local) = (rng.random_range(0.0..0.1), rng.random_range(0.0..5.0), rng.random_range(10.0..200.0));
        let back_link = rng.random_range(1e7..3e8);
        let weighting = if rng.random_bool(0.5) { VnPenalty::AsPrinted } else { VnPenalty::FailureProb };
        let mut chain = random_chain(&mut rng);
        chain.time_step = rng.random_range(0.5..5.0);

        let d = f / fc + if kind == NodeKind::Local { 0.0 } else { du / b } + link.map_or(0.0, |r| ddep / r);
        let expected = match kind {
            NodeKind::Bs | NodeKind::Ap => d + d_h * eta * d,
            NodeKind::Vn => {
                let r = dense_usability(&chain, d);
                let w = if weighting == VnPenalty::AsPrinted { r } else { 1.0 - r };
                d + w * (f / f_local + ddep / back_link)
            }
            _ => d,
        };

        let task = TaskProfile { id: 0, compute_demand: f, interactive_data: du, dep_data_in: ddep, parallel_group: None };
        let up = [link.map_or(Upstream::CoLocated, |rate| Upstream::Remote { rate })];
        let raw = raw_task_delay(&task, &ExecSite { kind, cpu_freq: fc, access_rate: b }, &up).map_err(|e| e.to_string())?;
        let penalty = match kind {
            NodeKind::Bs | NodeKind::Ap => MobilityPenalty::Handoff {
                handoffs: expected_handoffs(1.0 / raw, eta).map_err(|e| e.to_string())?,
                handoff_delay: d_h,
            },
            NodeKind::Vn => MobilityPenalty::Usability {
                usability: node_usability(&chain, raw).map_err(|e| e.to_string())?,
                local_recompute: local_recompute(&task, f_local, &[Upstream::Remote { rate: back_link }])
                    .map_err(|e| e.to_string())?,
            },
            _ => MobilityPenalty::None,
        };
        let got = adjusted_task_delay(raw, kind, &penalty, weighting).map_err(|e| e.to_string())?;
        worst = worst.max((got - expected).abs() / expected.abs().max(f64::MIN_POSITIVE));
    }
    ensure(worst <= 1e-12, format!("relative error {worst:e}"))?;
    Ok(format!("1000 tuples, max relative error {worst:.1e}"))
}

/// Returns the number of parameters checked away from rectifier kinks, the
/// worst relative error among differences above 1e-8, and the worst absolute
/// difference.
fn fd_check(mut p: NetParams, analytic: Vec<f64>, f: impl Fn(&NetParams) -> f64) -> (usize, f64, f64) {
    const EPS: f64 = 1e-5;
    let (mut checked, mut worst, mut worst_abs) = (0, 0.0f64, 0.0f64);
    for i in 0..p.param_count() {
        let orig = *p.values_mut().nth(i).unwrap();
        let at = |v: f64, p: &mut NetParams| {
            *p.values_mut().nth(i).unwrap() = v;
            f(p)
        };
        let (up, down, mid) = (at(orig + EPS, &mut p), at(orig - EPS, &mut p), at(orig, &mut p));
        let (left, right) = ((mid - down) / EPS, (up - mid) / EPS);
        if (left - right).abs() > 1e-3 * (1.0 + left.abs().max(right.abs())) {
            continue;
        }
        let numeric = (up - down) / (2.0 * EPS);
        let diff = (analytic[i] - numeric).abs();
        worst_abs = worst_abs.max(diff);
        if diff > 1e-8 {
            worst = worst.max(diff / analytic[i].abs().max(numeric.abs()));
        }
        checked += 1;
    }
    (checked, worst, worst_abs)
}

fn c5_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut total, mut worst, mut worst_abs) = (0, 0, 0.0f64, 0.0f64);
    for seed in 0..10u64 {
        let sizes = [6, 8, 8, 4];
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
        let actor = init_params(&sizes, Activation::Softmax, seed, 1).map_err(|e| e.to_string())?;
        let (a, adv) = (rng.random_range(0..4), rng.random_range(-2.0..2.0));
        let g = backward_actor(&actor, &x, a, adv, 0.01).map_err(|e| e.to_string())?;
        let (c, w, wa) = fd_check(actor.clone(), g.values().copied().collect(), |p| {
            let probs = forward_actor(p, &x).unwrap();
            log_prob(&probs, a) * adv + 0.01 * policy_entropy(&probs)
        });
        checked += c;
        total += actor.param_count();
        worst = worst.max(w);
        worst_abs = worst_abs.max(wa);

        let sizes = [6, 8, 8, 1];
        let critic = init_params(&sizes, Activation::Identity, seed, 2).map_err(|e| e.to_string())?;
        let target = rng.random_range(-3.0..3.0);
        let g = backward_critic(&critic, &x, target).map_err(|e| e.to_string())?;
        let (c, w, wa) = fd_check(critic.clone(), g.values().copied().collect(), |p| {
            (target - forward_critic(p, &x).unwrap()).powi(2)
        });
        checked += c;
        total += critic.param_count();
        worst = worst.max(w);
        worst_abs = worst_abs.max(wa);
    }
    ensure(worst <= 1e-4, format!("relative error {worst:e}"))?;
    ensure(checked * 10 >= total * 8, format!("only {checked}/{total} parameters away from kinks"))?;
    Ok(format!("10 actor and 10 critic nets, {checked}/{total} parameters, max relative error {worst:.1e}, max absolute difference {worst_abs:.1e}"))
}

fn c6_dominant_node() -> Check {
    let scenario = Arc::new(presets::dominant_node(0).map_err(|e| e.to_string())?);
    let hyper = Hyperparams { workers: 1, episodes: 5000, seed: 6, entropy_coef: 0.01, gamma: 0.99, ..Hyperparams::default() };
    let report = train(scenario.clone(), &hyper).map_err(|e| e.to_string())?;
    let run = evaluate(&report.actor, &report.norms, scenario, &EvalConfig::new(500, 60)).map_err(|e| e.to_string())?;
    let share = run.metrics.slot_share(1);
    ensure(share >= 0.95, format!("dominant share {share:.3}"))?;
    Ok(format!("dominant slot chosen {:.1}% after 5000 episodes", 100.0 * share))
}

fn c7_dependency_trap() -> Check {
    let scenario = Arc::new(presets::dependency_trap().map_err(|e| e.to_string())?);
    let hyper = Hyperparams { workers: 1, episodes: 20_000, seed: 7, ..Hyperparams::default() };
    let report = train(scenario.clone(), &hyper).map_err(|e| e.to_string())?;
    let cfg = EvalConfig::new(500, 70);
    let kd = evaluate(&report.actor, &report.norms, scenario.clone(), &cfg).map_err(|e| e.to_string())?;
    let greedy = evaluate_baseline(scenario.clone(), Baseline::Greedy, &cfg).map_err(|e| e.to_string())?;
    let env = Env::new(scenario).map_err(|e| e.to_string())?;
    let mut optimum = 0.0;
    for i in 0..cfg.episodes {
        optimum += exhaustive_optimum(&env, cfg.episode_seed(i)).map_err(|e| e.to_string())?.service_delay;
    }
    optimum /= cfg.episodes as f64;
    let (k, g) = (kd.metrics.mean_service_delay, greedy.metrics.mean_service_delay);
    let detail = format!("kd {k:.3}, greedy {g:.3}, optimum {optimum:.3}");
    ensure(k <= 0.9 * g && k <= 1.1 * optimum, detail.clone())?;
    Ok(detail)
}

const REFERENCE_EPISODES: &str = "80000";

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kdoffload")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn mean_delay(metrics: &Path) -> Result<f64, String> {
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(metrics).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    v["policies"][0]["mean_service_delay"].as_f64().ok_or_else(|| "no mean_service_delay".into())
}

fn episodes_in(training: &Path) -> Result<usize, String> {
    let text = std::fs::read_to_string(training).map_err(|e| e.to_string())?;
    Ok(text.lines().filter(|l| !l.starts_with('#')).count().saturating_sub(1))
}

fn c8_reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let scenario = p("reference.toml");
    cli(&["gen", "--preset", "reference", "--seed", "0", "--out", &scenario])?;
    let train_args = |out: &str, single: bool| {
        let mut a = vec!["train", "--scenario", &scenario, "--seed", "8", "--episodes", REFERENCE_EPISODES, "--out", out];
        if single {
            a.push("--single-thread");
        } else {
            a.extend(["--workers", "4"]);
        }
        a.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let run = |args: Vec<String>| cli(&args.iter().map(String::as_str).collect::<Vec<_>>());
    run(train_args(&p("a"), true))?;
    run(train_args(&p("b"), true))?;
    for f in ["model.ckpt", "training.csv"] {
        let same = std::fs::read(dir.path().join("a").join(f)).ok() == std::fs::read(dir.path().join("b").join(f)).ok();
        ensure(same, format!("single-thread {f} differs between runs"))?;
    }
    run(train_args(&p("c"), false))?;
    let (na, nc) = (episodes_in(&dir.path().join("a/training.csv"))?, episodes_in(&dir.path().join("c/training.csv"))?);
    ensure(na == nc, format!("episode counts {na} vs {nc}"))?;
    for run_dir in ["a", "c"] {
        let ckpt = dir.path().join(run_dir).join("model.ckpt");
        cli(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--scenario", &scenario, "--episodes", "500", "--out", &p(&format!("eval-{run_dir}"))])?;
    }
    let (da, dc) = (mean_delay(&dir.path().join("eval-a/metrics.json"))?, mean_delay(&dir.path().join("eval-c/metrics.json"))?);
    let gap = (dc - da).abs() / da;
    let detail = format!("byte-identical single-thread runs; {na} episodes each; delay {da:.3} vs {dc:.3} ({:.1}%)", 100.0 * gap);
    ensure(gap <= 0.05, detail.clone())?;
    Ok(detail)
}

fn c9_reference_config() -> Check {
    let s = presets::reference(0).map_err(|e| e.to_string())?;
    let c = &s.config;
    let n = &c.nodes;
    ensure(n.bs.as_ref().map(|b| b.freqs.clone()) == Some(vec![560.0, 676.0]), "BS frequencies")?;
    ensure(n.ap.as_ref().map(|a| a.freqs.clone()) == Some(vec![526.0, 430.0]), "AP frequencies")?;
    ensure(
        n.vn.as_ref().map(|v| v.freqs.clone()) == Some(vec![124.0, 120.0, 177.0, 144.0, 165.0, 130.0]),
        "VN frequencies",
    )?;
    let b = &c.bandwidth;
    ensure([b.bs_bs, b.bs_ap, b.ap_ap, b.ap_vehicle] == [1e8; 4], "100M links")?;
    ensure(b.bs_vehicle == 5e7 && b.vehicle_vehicle == 3e8, "50M/300M links")?;
    ensure(n.freq_jitter_std == 5.0, "frequency jitter")?;
    let mix: Vec<(u32, f64)> = c.service.mixture.iter().map(|m| (m.count, m.cycles)).collect();
    ensure(mix == vec![(4, 5000.0), (3, 2000.0), (3, 9000.0)], format!("mixture {mix:?}"))?;
    ensure(c.service.demand_jitter_std == 500.0, "demand jitter")?;
    let h = Hyperparams::reference();
    ensure(h.hidden == vec![64, 64, 64] && h.workers == 4, "network width and workers")?;
    ensure(h.entropy_coef == 0.01 && h.gamma == 0.99, "entropy coefficient and discount")?;
    ensure(h.episodes == 80_000 && !h.single_thread, "episode budget")?;
    Ok("catalog, bandwidths, mixture and learner settings match".into())
}

fn c10_backward_returns() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let len = rng.random_range(1..40);
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-100.0..0.0)).collect();
        let (bootstrap, gamma) = (rng.random_range(-50.0..0.0), rng.random_range(0.0..=1.0));
        let backward = returns_backward(&rewards, bootstrap, gamma);
        for t in 0..len {
            let direct = k_step_return(&rewards[t..], bootstrap, gamma).map_err(|e| e.to_string())?;
            ensure(backward[t].to_bits() == direct.to_bits(), format!("step {t}: {} vs {direct}", backward[t]))?;
        }
    }
    Ok("100 sequences, bitwise equal".into())
}

fn main() {
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    // (criterion, check, wall-clock budget in seconds)
    let checks: [(usize, fn() -> Check, f64); 10] = [
        (1, c1_transmit_prob, 1.0),
        (2, c2_chain_stochastic, 10.0),
        (3, c3_usability_monotone, 60.0),
        (4, c4_delay_oracle, 60.0),
        (5, c5_gradients, 60.0),
        (6, c6_dominant_node, 300.0),
        (7, c7_dependency_trap, 900.0),
        (8, c8_reproducibility, 1800.0),
        (9, c9_reference_config, 60.0),
        (10, c10_backward_returns, 60.0),
    ];
    let mut failed = 0;
    for (n, check, budget) in checks {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let result = check().and_then(|detail| {
            let t = start.elapsed().as_secs_f64();
            ensure(t <= budget, format!("{detail}; took {t:.1}s, budget {budget}s"))?;
            Ok(detail)
        });
        match result {
            Ok(detail) => println!("criterion {n}: PASS {detail} [{:.1?}]", start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL {detail} [{:.1?}]", start.elapsed());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
