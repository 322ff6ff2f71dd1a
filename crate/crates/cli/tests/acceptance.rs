//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use ridematch::baselines::TimingPolicy;
use ridematch::domain::{DriverState, Mode, Order, OrderStatus, Point};
use ridematch::env::{Env, OBS_DIM};
use ridematch::matching::{
    assign_drivers, brute_force_assignment, brute_force_pairing, ddr_pair, pair_passengers, RideEntity,
};
use ridematch::metrics::{evaluate, Evaluation, IntervalSummary, Metric};
use ridematch::policy::{log_prob, PolicyParams};
use ridematch::ppo::{gae, ppo_loss, train, IterationLog, Minibatch, PpoConfig, RunOptions};
use ridematch::scenario::Scenario;

type Outcome = Result<String, String>;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const TRAIN_ITERATIONS: usize = 500;
const EVAL_EPISODES: usize = 200;
const EVAL_SEED: u64 = 20_240_601;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn load(name: &str, mode: Mode) -> Scenario {
    let mut s = Scenario::load(scenario_path(name)).expect("shipped scenario loads");
    s.sim.mode = mode;
    s
}

fn peak_config() -> PpoConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/peak_ppo.toml");
    toml::from_str(&std::fs::read_to_string(path).expect("shipped config")).expect("valid config")
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs `f` over `items` on up to `workers()` threads, keeping input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let per = items.len().div_ceil(workers()).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(per)
            .map(|chunk| s.spawn(|| chunk.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// One-sided p-value for H1: mean(d) > 0.
fn one_sided_p(d: &[f64]) -> f64 {
    let sd = sample_sd(d);
    if sd == 0.0 {
        return if mean(d) > 0.0 { 0.0 } else { 1.0 };
    }
    let t = mean(d) / (sd / (d.len() as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (d.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(t)
}

fn random_order(rng: &mut ChaCha8Rng, id: u32, extent: f64) -> Order {
    let mut p = || Point::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent));
    let origin = p();
    let mut destination = p();
    while destination == origin {
        destination = p();
    }
    Order {
        id,
        origin,
        destination,
        request_tick: 0,
        cancel_deadline: 300,
        status: OrderStatus::Waiting,
    }
}

// 1

fn pbrs_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for k in 0..1000u64 {
        let mode = if k % 2 == 0 { Mode::Hailing } else { Mode::Pooling };
        let s = load("small", mode);
        let ep = s.generate_episode(rng.random()).map_err(|e| e.to_string())?;
        let mut env = Env::new(s.sim.clone(), ep).map_err(|e| e.to_string())?;
        let p_match = rng.random_range(0.0..1.0);
        let (mut natural, mut shaped) = (0.0, 0.0);
        while !env.is_done() {
            let out = env.step(u8::from(rng.random_bool(p_match))).map_err(|e| e.to_string())?;
            natural += out.reward;
            shaped += out.shaped_reward;
        }
        worst = worst.max((shaped - natural).abs() / natural.abs().max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    if worst < 1e-6 && secs < 60.0 {
        Ok(format!("1000 episodes, max relative gap {worst:.2e}, {secs:.1}s"))
    } else {
        Err(format!("max relative gap {worst:.2e}, {secs:.1}s"))
    }
}

// 2

fn matching_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for trial in 0..1000 {
        let n = rng.random_range(0..=10);
        let extent = if trial % 2 == 0 { 3.0 } else { 8.0 };
        let orders: Vec<Order> = (0..n).map(|k| random_order(&mut rng, k, extent)).collect();
        let th = rng.random_range(0.3..0.9);
        let fast = pair_passengers(&orders, th).total_weight;
        let slow = brute_force_pairing(&orders, th).map_err(|e| e.to_string())?.total_weight;
        if fast != slow {
            return Err(format!("pairing trial {trial}: {fast} vs {slow}"));
        }
    }
    for trial in 0..1000 {
        let ne = rng.random_range(0..=6);
        let nd = rng.random_range(0..=6u32);
        let entities: Vec<RideEntity> = (0..ne).map(|k| RideEntity::single(&random_order(&mut rng, k, 5.0))).collect();
        let drivers: Vec<DriverState> = (0..nd)
            .map(|k| DriverState::idle(k, Point::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0))))
            .collect();
        let fast = assign_drivers(&entities, &drivers, 40.0).total_pickup_time;
        let slow = brute_force_assignment(&entities, &drivers, 40.0)
            .map_err(|e| e.to_string())?
            .total_pickup_time;
        if fast != slow {
            return Err(format!("assignment trial {trial}: {fast} vs {slow}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs < 120.0 {
        Ok(format!("1000 pairing + 1000 assignment instances exact, {secs:.1}s"))
    } else {
        Err(format!("exact but took {secs:.1}s"))
    }
}

// 3

fn ride_lengths(seq: &[(u32, bool, Point)]) -> HashMap<u32, f64> {
    let mut onboard: HashMap<u32, f64> = HashMap::new();
    let mut done = HashMap::new();
    for w in 0..seq.len() {
        if w > 0 {
            let leg = seq[w - 1].2.distance(&seq[w].2);
            onboard.values_mut().for_each(|v| *v += leg);
        }
        let (id, pickup, _) = seq[w];
        if pickup {
            onboard.insert(id, 0.0);
        } else {
            done.insert(id, onboard.remove(&id).unwrap());
        }
    }
    done
}

fn ddr_oracle(a: &Order, b: &Order) -> f64 {
    let mut best: f64 = 0.0;
    for (f, s) in [(a, b), (b, a)] {
        for outer in [false, true] {
            let mut seq = vec![(f.id, true, f.origin), (s.id, true, s.origin)];
            if outer {
                seq.extend([(s.id, false, s.destination), (f.id, false, f.destination)]);
            } else {
                seq.extend([(f.id, false, f.destination), (s.id, false, s.destination)]);
            }
            let rides = ride_lengths(&seq);
            let score = [f, s]
                .iter()
                .map(|o| (o.origin.distance(&o.destination) / rides[&o.id]).min(1.0))
                .fold(f64::INFINITY, f64::min);
            best = best.max(score);
        }
    }
    best
}

fn ddr_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let a = random_order(&mut rng, 1, 6.0);
        let b = random_order(&mut rng, 2, 6.0);
        let c = ddr_pair(&a, &b, 0.0).map_err(|e| e.to_string())?.ok_or("threshold 0 rejected a pair")?;
        worst = worst.max((c.ddr - ddr_oracle(&a, &b)).abs());
    }
    let mk = |id, x0, x1| Order {
        id,
        origin: Point::new(x0, 0.0),
        destination: Point::new(x1, 0.0),
        request_tick: 0,
        cancel_deadline: 300,
        status: OrderStatus::Waiting,
    };
    let nested = ddr_pair(&mk(1, 0.0, 10.0), &mk(2, 2.0, 8.0), 0.6)
        .map_err(|e| e.to_string())?
        .ok_or("nested pair rejected")?;
    let nested_ok = (nested.ddr - 1.0).abs() < 1e-12 && nested.detour_i.abs() < 1e-12 && nested.detour_j.abs() < 1e-12;
    if worst < 1e-9 && nested_ok {
        Ok(format!("10000 instances, max deviation {worst:.1e}; nested case DDR 1, zero detour"))
    } else {
        Err(format!("max deviation {worst:.1e}, nested ddr {} detours {} {}", nested.ddr, nested.detour_i, nested.detour_j))
    }
}

// 4

fn perturbed(sizes: &[usize], seed: u64, rng: &mut ChaCha8Rng, sd: f64) -> PolicyParams {
    let base = PolicyParams::init_with(sizes, seed).unwrap();
    let data = base.as_slice().iter().map(|w| w + rng.random_range(-sd..sd)).collect();
    PolicyParams::from_parts(sizes.to_vec(), data).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn central_difference(params: &PolicyParams, f: impl Fn(&PolicyParams) -> f64, analytic: &[f64]) -> f64 {
    let h = 1e-6;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let w = params.as_slice()[i];
        probe.as_mut_slice()[i] = w + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = w - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = w;
        worst = worst.max(rel(analytic[i], (up - down) / (2.0 * h)));
    }
    worst
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut net_worst: f64 = 0.0;
    for k in 0..100 {
        let mut sizes = vec![rng.random_range(1..=6)];
        for _ in 0..rng.random_range(1..=3) {
            sizes.push(rng.random_range(2..=8));
        }
        sizes.push(1);
        let params = perturbed(&sizes, k, &mut rng, 0.5);
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (cl, cv) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let f = params.forward(&x).unwrap();
        let g = params.backward(&f.cache, cl, cv).unwrap();
        let obj = |p: &PolicyParams| {
            let r = p.forward(&x).unwrap();
            cl * r.logit + cv * r.v
        };
        net_worst = net_worst.max(central_difference(&params, obj, &g));
    }

    let sizes = [OBS_DIM, 8, 8, 1];
    let params = perturbed(&sizes, 7, &mut rng, 0.3);
    let mut mb = Minibatch::default();
    for _ in 0..32 {
        let mut x = [0.0; OBS_DIM];
        x.iter_mut().for_each(|v| *v = rng.random_range(-1.5..1.5));
        let f = params.forward(&x).unwrap();
        let a = u8::from(rng.random_bool(0.5));
        let shift = [-0.4, -0.05, 0.05, 0.4][rng.random_range(0..4)];
        mb.obs.push(x);
        mb.actions.push(a);
        mb.old_log_probs.push(log_prob(f.p, a) + shift);
        mb.old_values.push(f.v + rng.random_range(-0.5..0.5));
        mb.advantages.push(rng.random_range(-2.0..2.0));
        mb.returns.push(f.v + rng.random_range(-1.0..1.0));
    }
    let cfg = PpoConfig::default();
    let (_, _, g) = ppo_loss(&params, &mb, &cfg).map_err(|e| e.to_string())?;
    let loss_worst = central_difference(&params, |p| ppo_loss(p, &mb, &cfg).unwrap().0, &g);
    if net_worst < 1e-4 && loss_worst < 1e-3 {
        Ok(format!("networks max rel err {net_worst:.1e}; PPO loss max rel err {loss_worst:.1e}"))
    } else {
        Err(format!("networks {net_worst:.1e} (< 1e-4), loss {loss_worst:.1e} (< 1e-3)"))
    }
}

// 5

fn gae_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..80);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
        let mut d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.08)).collect();
        d[n - 1] = true;
        let (adv, _) = gae(&r, &v, &d, rng.random_range(-20.0..20.0), 1.0, 1.0);
        let mut g = 0.0;
        for t in (0..n).rev() {
            if d[t] {
                g = 0.0;
            }
            g += r[t];
            worst = worst.max((adv[t] - (g - v[t])).abs());
        }
    }
    if worst < 1e-6 {
        Ok(format!("100 buffers, max deviation {worst:.1e}"))
    } else {
        Err(format!("max deviation {worst:.1e}"))
    }
}

// 6

fn sweep_policies(mode: Mode) -> Vec<TimingPolicy> {
    ridematch_cli::default_intervals(mode)
        .into_iter()
        .map(|k| if k == 1 { TimingPolicy::FirstDispatch } else { TimingPolicy::FixedInterval(k) })
        .collect()
}

fn paired_diff(a: &Evaluation, b: &Evaluation, m: Metric) -> Vec<f64> {
    a.episodes
        .iter()
        .zip(&b.episodes)
        .filter_map(|(x, y)| Some(y.get(m)? - x.get(m)?))
        .collect()
}

fn baseline_structure(sweep: &[(TimingPolicy, Evaluation)]) -> Outcome {
    let matching: Vec<f64> = sweep.iter().map(|(_, e)| e.report.get(Metric::AvgMatching).mean).collect();
    let pickup: Vec<f64> = sweep.iter().map(|(_, e)| e.report.get(Metric::AvgPickup).mean).collect();
    let increasing = matching.windows(2).all(|w| w[1] > w[0]);
    // a pickup increase must not be significant on the paired differences
    let mut pickup_ok = true;
    for w in sweep.windows(2) {
        let d = paired_diff(&w[0].1, &w[1].1, Metric::AvgPickup);
        let lower = mean(&d) - 1.959_963_984_540_054 * sample_sd(&d) / (d.len() as f64).sqrt();
        pickup_ok &= lower <= 0.0;
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" < ");
    let detail = format!("matching {} ; pickup {}", fmt(&matching), fmt(&pickup).replace('<', ">="));
    if increasing && pickup_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 7, 8, 10

struct Run {
    seed: u64,
    log: Vec<IterationLog>,
    params: PolicyParams,
}

fn train_runs(mode: Mode, pbrs: bool) -> Result<Vec<Run>, String> {
    let s = load("peak", mode);
    let results = par_map(&SEEDS, |&seed| {
        let cfg = PpoConfig {
            iterations: TRAIN_ITERATIONS,
            seed,
            pbrs,
            ..peak_config()
        };
        let t = Instant::now();
        let out = train(&s, &cfg, RunOptions::default(), |_, _| Ok(())).map_err(|e| e.to_string())?;
        if let Some(f) = out.failure {
            return Err(format!("seed {seed}: {f}"));
        }
        eprintln!("  trained {mode} seed {seed} pbrs={pbrs} in {:.0}s", t.elapsed().as_secs_f64());
        Ok(Run {
            seed,
            log: out.log,
            params: out.params,
        })
    });
    results.into_iter().collect()
}

fn window_returns(log: &[IterationLog], final_part: bool) -> Vec<f64> {
    let k = (log.len() / 10).max(1);
    let slice = if final_part { &log[log.len() - k..] } else { &log[..k] };
    slice.iter().flat_map(|r| r.episodes.iter().map(|e| e.natural_return)).collect()
}

fn window_action_rate(log: &[IterationLog]) -> f64 {
    let k = (log.len() / 10).max(1);
    mean(&log[log.len() - k..].iter().map(|r| r.action_rate).collect::<Vec<_>>())
}

fn improvement(runs: &[Run]) -> Outcome {
    let d: Vec<f64> = runs
        .iter()
        .map(|r| mean(&window_returns(&r.log, true)) - mean(&window_returns(&r.log, false)))
        .collect();
    let p = one_sided_p(&d);
    let detail = format!(
        "final-minus-initial return per seed [{}], p = {p:.4}",
        d.iter().map(|x| format!("{x:.0}")).collect::<Vec<_>>().join(", ")
    );
    if p < 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The seed with the best natural return over its final tenth of training.
fn selected(runs: &[Run]) -> &Run {
    runs.iter()
        .max_by(|a, b| mean(&window_returns(&a.log, true)).total_cmp(&mean(&window_returns(&b.log, true))))
        .unwrap()
}

fn learned_eval(s: &Scenario, run: &Run, stochastic: bool) -> Result<Evaluation, String> {
    let p = TimingPolicy::Learned {
        params: run.params.clone(),
        stochastic,
    };
    evaluate(&p, s, EVAL_EPISODES, EVAL_SEED, workers()).map_err(|e| e.to_string())
}

fn efficacy(sweep: &[(TimingPolicy, Evaluation)], runs: &[Run], learned: &Evaluation) -> Outcome {
    let (best_label, best) = sweep
        .iter()
        .map(|(p, e)| (p.label(), e.report.get(Metric::AvgTotalWaiting).mean))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let got = learned.report.get(Metric::AvgTotalWaiting).mean;
    let detail = format!(
        "learned (seed {}) avg total wait {got:.2}s vs best baseline {best_label} {best:.2}s, bound {:.2}s; \
         learned return {:.0}, cancelled {:.1}/episode",
        selected(runs).seed,
        best * 1.02,
        learned.report.get(Metric::NaturalReturn).mean,
        learned.report.get(Metric::Cancelled).mean,
    );
    if got <= best * 1.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ablation(pbrs: &[Run], natural: &[Run]) -> Outcome {
    let mut collapsed = 0;
    let mut rates = Vec::new();
    for (a, b) in pbrs.iter().zip(natural) {
        let (ra, rb) = (window_action_rate(&a.log), window_action_rate(&b.log));
        if rb < 0.2 * ra {
            collapsed += 1;
        }
        rates.push(format!("{rb:.3}/{ra:.3}"));
    }
    let d: Vec<f64> = pbrs
        .iter()
        .zip(natural)
        .map(|(a, b)| mean(&window_returns(&a.log, true)) - mean(&window_returns(&b.log, true)))
        .collect();
    let p = one_sided_p(&d);
    let detail = format!(
        "final action rate natural/pbrs [{}], {collapsed} of 5 collapsed; return gap p = {p:.4}",
        rates.join(", ")
    );
    if collapsed >= 3 || p < 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Deterministic evaluations decide; sampled ones are printed alongside.
fn adaptability(hailing: &Evaluation, pooling: &Evaluation, sampled: Option<(&Evaluation, &Evaluation)>) -> Outcome {
    let h = IntervalSummary::of(&hailing.intervals(), 5);
    let p = IntervalSummary::of(&pooling.intervals(), 5);
    let mut detail = format!(
        "interval IQR pooling {:.1} (mean {:.2}, {} intervals) vs hailing {:.1} (mean {:.2}, {} intervals)",
        p.iqr, p.mean, p.count, h.iqr, h.mean, h.count
    );
    if let Some((sh, sp)) = sampled {
        let (sh, sp) = (IntervalSummary::of(&sh.intervals(), 5), IntervalSummary::of(&sp.intervals(), 5));
        detail.push_str(&format!("; sampled actions: pooling {:.1} vs hailing {:.1}", sp.iqr, sh.iqr));
    }
    if p.count > 0 && h.count > 0 && p.iqr > h.iqr {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 9

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ridematch"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = scenario_path("small");
    let scenario = scenario.to_str().unwrap();
    let mut ckpts = Vec::new();
    let mut reports = Vec::new();
    for k in 0..2 {
        let t = dir.path().join(format!("train{k}"));
        let e = dir.path().join(format!("eval{k}"));
        run_cli(&[
            "train", "--scenario", scenario, "--seed", "17", "--iterations", "4", "--jobs", "1", "--out", t.to_str().unwrap(),
        ])?;
        let ckpt = t.join("checkpoints/policy_final.bin");
        let policy = format!("learned:{}", ckpt.display());
        run_cli(&[
            "eval", "--scenario", scenario, "--seed", "17", "--episodes", "8", "--jobs", "1", "--policy", &policy, "--out",
            e.to_str().unwrap(),
        ])?;
        ckpts.push(read(&ckpt)?);
        let mut bytes = Vec::new();
        for f in ["report.csv", "episodes.csv", "intervals.csv", "summary.txt"] {
            bytes.extend(read(&e.join("reports").join(f))?);
        }
        bytes.extend(read(&t.join("logs/train.jsonl"))?);
        reports.push(bytes);
    }
    if ckpts[0] == ckpts[1] && reports[0] == reports[1] {
        Ok(format!("checkpoints ({} bytes) and reports identical across runs", ckpts[0].len()))
    } else {
        Err("outputs differ between identical runs".into())
    }
}

fn report(results: &mut Vec<(usize, &'static str, Outcome)>, n: usize, name: &'static str, r: Outcome) {
    match &r {
        Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
        Err(d) => println!("criterion {n:>2} FAIL  {name}: {d}"),
    }
    results.push((n, name, r));
}

fn main() {
    let start = Instant::now();
    let mut results = Vec::new();
    report(&mut results, 1, "shaped return equals natural return", pbrs_equivalence());
    report(&mut results, 2, "matching optimality", matching_optimality());
    report(&mut results, 3, "DDR correctness", ddr_correctness());
    report(&mut results, 4, "gradient correctness", gradient_correctness());
    report(&mut results, 5, "GAE oracle", gae_oracle());
    report(&mut results, 9, "CLI determinism", determinism());

    let mut sweeps = HashMap::new();
    for mode in [Mode::Hailing, Mode::Pooling] {
        let s = load("peak", mode);
        let evals = par_map(&sweep_policies(mode), |p| {
            (p.clone(), evaluate(p, &s, EVAL_EPISODES, EVAL_SEED, 1).expect("baseline evaluation"))
        });
        sweeps.insert(mode, evals);
    }
    report(&mut results, 6, "baseline structure", baseline_structure(&sweeps[&Mode::Hailing]));

    let mut learned = HashMap::new();
    let mut sampled = HashMap::new();
    let mut pbrs_hailing = None;
    for mode in [Mode::Hailing, Mode::Pooling] {
        let s = load("peak", mode);
        match train_runs(mode, true) {
            Ok(runs) => {
                report(&mut results, 7, if mode == Mode::Hailing { "training improves (hailing)" } else { "training improves (pooling)" }, improvement(&runs));
                if let Ok(e) = learned_eval(&s, selected(&runs), true) {
                    sampled.insert(mode, e);
                }
                let outcome = learned_eval(&s, selected(&runs), false).map(|e| {
                    let r = efficacy(&sweeps[&mode], &runs, &e);
                    learned.insert(mode, e);
                    r
                });
                let name = if mode == Mode::Hailing { "learned vs best interval (hailing)" } else { "learned vs best interval (pooling)" };
                report(&mut results, 7, name, outcome.unwrap_or_else(Err));
                if mode == Mode::Hailing {
                    pbrs_hailing = Some(runs);
                }
            }
            Err(e) => report(&mut results, 7, "training", Err(e)),
        }
    }

    let ablation_result = match (pbrs_hailing.as_deref(), train_runs(Mode::Hailing, false)) {
        (Some(p), Ok(n)) => ablation(p, &n),
        (None, _) => Err("no PBRS runs to compare".into()),
        (_, Err(e)) => Err(e),
    };
    report(&mut results, 8, "PBRS ablation", ablation_result);

    let adapt = match (learned.get(&Mode::Hailing), learned.get(&Mode::Pooling)) {
        (Some(h), Some(p)) => {
            let extra = sampled.get(&Mode::Hailing).zip(sampled.get(&Mode::Pooling));
            adaptability(h, p, extra)
        }
        _ => Err("learned policies unavailable".into()),
    };
    report(&mut results, 10, "interval dispersion", adapt);

    let failed: Vec<String> = results.iter().filter(|r| r.2.is_err()).map(|r| format!("{} ({})", r.0, r.1)).collect();
    println!("acceptance finished in {:.0}s", start.elapsed().as_secs_f64());
    if failed.is_empty() {
        println!("all criteria passed");
    } else {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
