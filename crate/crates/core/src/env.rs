//! The match-timing environment.
//!
//! One step covers one tick: arrivals for the tick join the pool, expired
//! orders leave it, and if the action is 1 the pool is matched. The state
//! observed by the agent is the state after the tick has advanced, before
//! the next tick's arrivals are known.

use serde::{Deserialize, Serialize};

use crate::domain::{DriverState, DriverStatus, Mode, Order, OrderStatus, SimParams, Tick};
use crate::error::{Error, Result};
use crate::matching::{
    assign_drivers, build_entities, pair_passengers, solo_entities, AssignmentResult, EntityKind, RideEntity,
};
use crate::scenario::EpisodeData;

pub const OBS_DIM: usize = 6;

/// `[T, ΔT, N_p, W̄_p, W_max, N_d]`, each divided by its scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Unscaled statistics behind an observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateStats {
    pub t: Tick,
    pub since_match: Tick,
    pub waiting: usize,
    pub mean_wait: f64,
    pub max_wait: f64,
    pub idle_drivers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Tick at which the action was taken.
    pub t: Tick,
    pub action: u8,
    /// Orders served by this step's matching.
    pub matched_count: usize,
    pub f_pick: f64,
    pub f_detour: f64,
    /// Orders that expired during this step.
    pub cancelled_count: usize,
    /// Pool size when the action was applied.
    pub waiting: usize,
    /// Idle drivers when the action was applied.
    pub idle_drivers: usize,
    /// Orders still waiting right after the action.
    pub unmatched: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Observation,
    /// Natural reward (negative seconds).
    pub reward: f64,
    pub shaped_reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

impl StepOutcome {
    /// One structured trace line.
    pub fn trace_line(&self) -> String {
        let i = &self.info;
        format!(
            "t={} action={} n_p={} n_d={} reward={:.6} shaped={:.6} matches={} f_pick={:.3} f_detour={:.3} cancelled={}",
            i.t,
            i.action,
            i.waiting,
            i.idle_drivers,
            self.reward + 0.0,
            self.shaped_reward + 0.0,
            i.matched_count,
            i.f_pick + 0.0,
            i.f_detour + 0.0,
            i.cancelled_count
        )
    }
}

/// What happened to one served passenger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassengerRecord {
    pub order: u32,
    pub request_tick: Tick,
    pub match_tick: Tick,
    pub pooled: bool,
    /// Seconds between request and match.
    pub matching_time: f64,
    /// Seconds between match and boarding.
    pub pickup_time: f64,
    pub detour_delay: f64,
}

impl PassengerRecord {
    pub fn total_wait(&self) -> f64 {
        self.matching_time + self.pickup_time + self.detour_delay
    }
}

/// Order counts by fate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderLedger {
    pub injected: usize,
    pub matched: usize,
    pub cancelled: usize,
    pub waiting: usize,
}

impl OrderLedger {
    pub fn reconciles(&self) -> bool {
        self.injected == self.matched + self.cancelled + self.waiting
    }
}

/// A solved matching on some pool, before it is applied.
#[derive(Debug, Clone)]
pub struct MatchPlan {
    pub entities: Vec<RideEntity>,
    pub assignment: AssignmentResult,
    pub f_pick: f64,
    /// Detour seconds of the pairs that received a driver.
    pub f_detour: f64,
}

impl MatchPlan {
    pub fn matched_orders(&self) -> usize {
        self.assignment
            .matches
            .iter()
            .map(|m| self.entities[m.entity].members.len())
            .sum()
    }
}

/// Solves the matching the environment would run on this pool.
pub fn plan_matching(params: &SimParams, waiting: &[Order], idle: &[DriverState]) -> MatchPlan {
    let entities = match params.mode {
        Mode::Hailing => solo_entities(waiting),
        Mode::Pooling => {
            let pairing = pair_passengers(waiting, params.ddr_threshold);
            build_entities(&pairing, waiting, params.allow_solo_in_pooling)
        }
    };
    let assignment = if entities.is_empty() || idle.is_empty() {
        AssignmentResult {
            unmatched_entities: (0..entities.len()).collect(),
            unmatched_drivers: idle.iter().map(|d| d.id).collect(),
            ..Default::default()
        }
    } else {
        assign_drivers(&entities, idle, params.speed)
    };
    let f_detour = assignment
        .matches
        .iter()
        .map(|m| &entities[m.entity])
        .filter(|e| e.kind == EntityKind::Pair)
        .flat_map(|e| e.detour_seconds(params.speed))
        .sum();
    MatchPlan {
        f_pick: assignment.total_pickup_time,
        f_detour,
        entities,
        assignment,
    }
}

/// Potential of a state given its matching plan.
pub fn potential_of(mode: Mode, plan: &MatchPlan) -> f64 {
    match mode {
        Mode::Hailing => -plan.f_pick,
        Mode::Pooling => -(plan.f_pick + plan.f_detour),
    }
}

/// `−(φ·R_m + R_w)` with `R_m = tick × unmatched`.
pub fn reward_hailing(params: &SimParams, action: u8, unmatched: usize, f_pick: f64) -> f64 {
    let r_m = params.tick * unmatched as f64;
    let r_w = if action == 1 { f_pick } else { 0.0 };
    -(params.phi * r_m + r_w)
}

/// Hailing penalty plus `τ·R_d`.
pub fn reward_pooling(params: &SimParams, action: u8, unmatched: usize, f_pick: f64, f_detour: f64) -> f64 {
    let r_d = if action == 1 { f_detour } else { 0.0 };
    reward_hailing(params, action, unmatched, f_pick) - params.tau * r_d
}

/// Finite-horizon PBRS: the terminal step returns the potential to `Φ(s_0)`.
pub fn pbrs_shape(reward: f64, phi_s: f64, phi_next: f64, phi_0: f64, terminal: bool) -> f64 {
    if terminal {
        reward - phi_s + phi_0
    } else {
        reward + phi_next - phi_s
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    params: SimParams,
    episode: EpisodeData,
    horizon: Tick,
    shaping: bool,
    next_arrival: usize,
    t: Tick,
    last_match_tick: Option<Tick>,
    waiting: Vec<Order>,
    drivers: Vec<DriverState>,
    records: Vec<PassengerRecord>,
    ledger: OrderLedger,
    match_ticks: Vec<Tick>,
    phi_0: f64,
    phi_now: f64,
    cached_plan: Option<MatchPlan>,
    done: bool,
}

impl Env {
    /// A fresh environment positioned at `s_0` of `episode`.
    pub fn new(params: SimParams, episode: EpisodeData) -> Result<Self> {
        params.validate()?;
        episode.validate()?;
        let mut env = Self {
            horizon: episode.horizon,
            params,
            episode: EpisodeData::empty(1),
            shaping: true,
            next_arrival: 0,
            t: 0,
            last_match_tick: None,
            waiting: Vec::new(),
            drivers: Vec::new(),
            records: Vec::new(),
            ledger: OrderLedger::default(),
            match_ticks: Vec::new(),
            phi_0: 0.0,
            phi_now: 0.0,
            cached_plan: None,
            done: false,
        };
        env.reset(episode)?;
        Ok(env)
    }

    /// Turns potential computation off; shaped rewards then equal natural ones.
    pub fn with_shaping(mut self, on: bool) -> Self {
        self.shaping = on;
        self.refresh_potential();
        self.phi_0 = self.phi_now;
        self
    }

    pub fn reset(&mut self, episode: EpisodeData) -> Result<Observation> {
        episode.validate()?;
        self.horizon = episode.horizon;
        self.drivers = episode.initial_drivers.clone();
        self.episode = episode;
        self.next_arrival = 0;
        self.t = 0;
        self.last_match_tick = None;
        self.waiting.clear();
        self.records.clear();
        self.match_ticks.clear();
        self.ledger = OrderLedger::default();
        self.done = false;
        self.refresh_potential();
        self.phi_0 = self.phi_now;
        Ok(self.observe())
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn t(&self) -> Tick {
        self.t
    }

    pub fn horizon(&self) -> Tick {
        self.horizon
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn last_match_tick(&self) -> Option<Tick> {
        self.last_match_tick
    }

    pub fn waiting(&self) -> &[Order] {
        &self.waiting
    }

    pub fn drivers(&self) -> &[DriverState] {
        &self.drivers
    }

    pub fn records(&self) -> &[PassengerRecord] {
        &self.records
    }

    pub fn ledger(&self) -> OrderLedger {
        self.ledger
    }

    /// Ticks at which a matching was run.
    pub fn match_ticks(&self) -> &[Tick] {
        &self.match_ticks
    }

    /// Current potential `Φ(s_t)`; zero when shaping is off.
    pub fn potential(&self) -> f64 {
        self.phi_now
    }

    pub fn initial_potential(&self) -> f64 {
        self.phi_0
    }

    pub fn idle_drivers(&self) -> Vec<DriverState> {
        self.drivers.iter().filter(|d| d.is_idle()).cloned().collect()
    }

    pub fn stats(&self) -> StateStats {
        let tick = self.params.tick;
        let waits: Vec<f64> = self
            .waiting
            .iter()
            .map(|o| (self.t - o.request_tick) as f64 * tick)
            .collect();
        let (mean_wait, max_wait) = if waits.is_empty() {
            (0.0, 0.0)
        } else {
            (
                waits.iter().sum::<f64>() / waits.len() as f64,
                waits.iter().cloned().fold(0.0, f64::max),
            )
        };
        StateStats {
            t: self.t,
            since_match: self.t - self.last_match_tick.unwrap_or(0),
            waiting: self.waiting.len(),
            mean_wait,
            max_wait,
            idle_drivers: self.drivers.iter().filter(|d| d.is_idle()).count(),
        }
    }

    pub fn observe(&self) -> Observation {
        let s = self.stats();
        let k = &self.params.obs_scale;
        Observation([
            s.t as f64 / self.horizon as f64,
            s.since_match as f64 * self.params.tick / k.since_match,
            s.waiting as f64 / k.waiting_count,
            s.mean_wait / k.mean_wait,
            s.max_wait / k.max_wait,
            s.idle_drivers as f64 / k.idle_drivers,
        ])
    }

    fn refresh_potential(&mut self) {
        if self.shaping {
            let plan = plan_matching(&self.params, &self.waiting, &self.idle_drivers());
            self.phi_now = potential_of(self.params.mode, &plan);
            self.cached_plan = Some(plan);
        } else {
            self.phi_now = 0.0;
            self.cached_plan = None;
        }
    }

    fn inject_arrivals(&mut self) -> usize {
        let start = self.next_arrival;
        while let Some(o) = self.episode.arrivals.get(self.next_arrival) {
            if o.request_tick > self.t {
                break;
            }
            if o.request_tick == self.t {
                self.waiting.push(o.clone());
                self.ledger.injected += 1;
            }
            self.next_arrival += 1;
        }
        self.next_arrival - start
    }

    fn expire_and_release(&mut self) -> usize {
        let t = self.t;
        let before = self.waiting.len();
        self.waiting.retain(|o| o.cancel_deadline > t);
        let cancelled = before - self.waiting.len();
        self.ledger.cancelled += cancelled;
        for d in &mut self.drivers {
            if !d.is_idle() && d.busy_until <= t {
                d.status = DriverStatus::Idle;
            }
        }
        cancelled
    }

    fn apply_plan(&mut self, plan: &MatchPlan) {
        let tick = self.params.tick;
        let speed = self.params.speed;
        let mut served = std::collections::HashSet::new();
        for m in &plan.assignment.matches {
            let entity = &plan.entities[m.entity];
            let detours = entity.detour_seconds(speed);
            for (k, &id) in entity.members.iter().enumerate() {
                let order = self
                    .waiting
                    .iter()
                    .find(|o| o.id == id)
                    .expect("planned order is waiting");
                let offset = entity.boarding_offset_km(id).unwrap_or(0.0);
                self.records.push(PassengerRecord {
                    order: id,
                    request_tick: order.request_tick,
                    match_tick: self.t,
                    pooled: entity.kind == EntityKind::Pair,
                    matching_time: (self.t - order.request_tick) as f64 * tick,
                    pickup_time: m.pickup_time + offset / speed * 3600.0,
                    detour_delay: detours[k],
                });
                served.insert(id);
            }
            let busy_seconds = m.pickup_time + entity.route_km() / speed * 3600.0;
            let busy_ticks = ((busy_seconds / tick).ceil() as Tick).max(1);
            let driver = self
                .drivers
                .iter_mut()
                .find(|d| d.id == m.driver)
                .expect("planned driver exists");
            driver.status = DriverStatus::Enroute;
            driver.busy_until = self.t + busy_ticks;
            driver.position = entity.last_dropoff();
        }
        self.waiting.retain(|o| !served.contains(&o.id));
        self.ledger.matched += served.len();
    }

    pub fn step(&mut self, action: u8) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step called after the episode ended".into()));
        }
        if action > 1 {
            return Err(Error::InvalidArgument(format!("action must be 0 or 1, got {action}")));
        }
        let phi_s = self.phi_now;
        let injected = self.inject_arrivals();
        let mut cancelled = self.expire_and_release();
        let waiting_at_action = self.waiting.len();
        let idle_at_action = self.drivers.iter().filter(|d| d.is_idle()).count();

        let (f_pick, f_detour, matched) = if action == 1 {
            let plan = match self.cached_plan.take() {
                Some(p) if injected == 0 && cancelled == 0 => p,
                _ => plan_matching(&self.params, &self.waiting, &self.idle_drivers()),
            };
            self.apply_plan(&plan);
            self.last_match_tick = Some(self.t);
            self.match_ticks.push(self.t);
            (plan.f_pick, plan.f_detour, plan.matched_orders())
        } else {
            (0.0, 0.0, 0)
        };
        let unmatched = self.waiting.len();
        let reward = match self.params.mode {
            Mode::Hailing => reward_hailing(&self.params, action, unmatched, f_pick),
            Mode::Pooling => reward_pooling(&self.params, action, unmatched, f_pick, f_detour),
        };

        let t_acted = self.t;
        self.t += 1;
        cancelled += self.expire_and_release();
        self.done = self.t >= self.horizon;
        self.ledger.waiting = self.waiting.len();

        let shaped_reward = if !self.shaping {
            reward
        } else if self.done {
            self.cached_plan = None;
            pbrs_shape(reward, phi_s, 0.0, self.phi_0, true)
        } else {
            self.refresh_potential();
            pbrs_shape(reward, phi_s, self.phi_now, self.phi_0, false)
        };

        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            shaped_reward,
            done: self.done,
            info: StepInfo {
                t: t_acted,
                action,
                matched_count: matched,
                f_pick,
                f_detour,
                cancelled_count: cancelled,
                waiting: waiting_at_action,
                idle_drivers: idle_at_action,
                unmatched,
            },
        })
    }

    /// Marks every order's final status; useful after an episode ends.
    pub fn final_statuses(&self) -> Vec<(u32, OrderStatus)> {
        let matched: std::collections::HashSet<u32> = self.records.iter().map(|r| r.order).collect();
        let waiting: std::collections::HashSet<u32> = self.waiting.iter().map(|o| o.id).collect();
        self.episode
            .arrivals
            .iter()
            .take(self.next_arrival)
            .map(|o| {
                let s = if matched.contains(&o.id) {
                    OrderStatus::Assigned
                } else if waiting.contains(&o.id) {
                    OrderStatus::Waiting
                } else {
                    OrderStatus::Cancelled
                };
                (o.id, s)
            })
            .collect()
    }
}
