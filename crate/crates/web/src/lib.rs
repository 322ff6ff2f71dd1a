//! Browser front end: DDR explorer, single-episode simulation and an
//! interval sweep, all returning JSON strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ridematch::baselines::{PolicySpec, TimingPolicy};
use ridematch::domain::{Mode, Order, OrderStatus, Point};
use ridematch::env::StepOutcome;
use ridematch::matching::{best_pair_plan, PairCandidate};
use ridematch::metrics::{eval_episode_seed, evaluate, run_episode, EpisodeMetrics, IntervalSummary, Metric};
use ridematch::policy::PolicyParams;
use ridematch::scenario::Scenario;

const PEAK: &str = include_str!("../../../scenarios/peak.toml");
const SMALL: &str = include_str!("../../../scenarios/small.toml");

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn scenario(name: &str, mode: &str) -> Result<Scenario, JsError> {
    let text = match name {
        "peak" => PEAK,
        "small" => SMALL,
        other => return Err(JsError::new(&format!("unknown scenario '{other}'"))),
    };
    let mut s = Scenario::parse(text, std::path::Path::new(name)).map_err(js)?;
    s.sim.mode = mode.parse::<Mode>().map_err(js)?;
    Ok(s)
}

fn order(id: u32, ox: f64, oy: f64, dx: f64, dy: f64) -> Order {
    Order {
        id,
        origin: Point::new(ox, oy),
        destination: Point::new(dx, dy),
        request_tick: 0,
        cancel_deadline: 300,
        status: OrderStatus::Waiting,
    }
}

#[derive(Serialize)]
struct DdrView {
    accepted: bool,
    threshold: f64,
    #[serde(flatten)]
    plan: PairCandidate,
    direct_a: f64,
    direct_b: f64,
}

/// Best shared route for two riders A and B (coordinates in km).
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn ddr(ax: f64, ay: f64, adx: f64, ady: f64, bx: f64, by: f64, bdx: f64, bdy: f64, threshold: f64) -> Result<String, JsError> {
    let a = order(1, ax, ay, adx, ady);
    let b = order(2, bx, by, bdx, bdy);
    let plan = best_pair_plan(&a, &b).map_err(js)?;
    let view = DdrView {
        accepted: plan.ddr >= threshold,
        threshold,
        direct_a: a.direct_distance(),
        direct_b: b.direct_distance(),
        plan,
    };
    serde_json::to_string(&view).map_err(js)
}

#[derive(Serialize)]
struct Tick {
    t: u32,
    action: u8,
    waiting: usize,
    idle: usize,
    matched: usize,
    reward: f64,
}

#[derive(Serialize)]
struct EpisodeView {
    policy: String,
    metrics: EpisodeMetrics,
    ticks: Vec<Tick>,
}

fn policy_from(spec: &str, checkpoint: Option<Vec<u8>>) -> Result<TimingPolicy, JsError> {
    if let Some(bytes) = checkpoint.filter(|b| !b.is_empty()) {
        let params = PolicyParams::from_bytes(&bytes).map_err(js)?;
        return Ok(TimingPolicy::Learned {
            params,
            stochastic: false,
        });
    }
    match spec.parse::<PolicySpec>().map_err(js)? {
        PolicySpec::Learned(_) => Err(JsError::new("load a checkpoint file to run a learned policy")),
        s => TimingPolicy::from_spec(&s, false).map_err(js),
    }
}

/// Plays one episode and returns its metrics plus a per-tick timeline.
/// A non-empty `checkpoint` overrides `policy` with a learned policy.
#[wasm_bindgen]
pub fn simulate(scenario_name: &str, mode: &str, policy: &str, seed: u64, checkpoint: Option<Vec<u8>>) -> Result<String, JsError> {
    let s = scenario(scenario_name, mode)?;
    let p = policy_from(policy, checkpoint)?;
    let mut ticks = Vec::with_capacity(s.sim.horizon as usize);
    let mut sink = |o: &StepOutcome| {
        ticks.push(Tick {
            t: o.info.t,
            action: o.info.action,
            waiting: o.info.waiting,
            idle: o.info.idle_drivers,
            matched: o.info.matched_count,
            reward: o.reward,
        })
    };
    let metrics = run_episode(&p, &s, eval_episode_seed(seed, 0), Some(&mut sink)).map_err(js)?;
    serde_json::to_string(&EpisodeView {
        policy: p.label(),
        metrics,
        ticks,
    })
    .map_err(js)
}

#[derive(Serialize)]
struct SweepRow {
    policy: String,
    matching: f64,
    pickup: f64,
    detour: f64,
    total: f64,
    total_ci: f64,
    interval_iqr: f64,
}

/// Evaluates first dispatch and fixed intervals on paired episodes.
/// `intervals` is comma separated; 1 stands for first dispatch.
#[wasm_bindgen]
pub fn sweep(scenario_name: &str, mode: &str, intervals: &str, episodes: usize, seed: u64) -> Result<String, JsError> {
    let s = scenario(scenario_name, mode)?;
    let mut rows = Vec::new();
    for part in intervals.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k: u32 = part.parse().map_err(|_| JsError::new(&format!("bad interval '{part}'")))?;
        let p = match k {
            0 => return Err(JsError::new("intervals start at 1")),
            1 => TimingPolicy::FirstDispatch,
            k => TimingPolicy::FixedInterval(k),
        };
        let e = evaluate(&p, &s, episodes, seed, 1).map_err(js)?;
        let total = e.report.get(Metric::AvgTotalWaiting);
        rows.push(SweepRow {
            policy: p.label(),
            matching: e.report.get(Metric::AvgMatching).mean,
            pickup: e.report.get(Metric::AvgPickup).mean,
            detour: e.report.get(Metric::AvgDetour).mean,
            total: total.mean,
            total_ci: total.ci95,
            interval_iqr: IntervalSummary::of(&e.intervals(), 5).iqr,
        });
    }
    serde_json::to_string(&rows).map_err(js)
}
