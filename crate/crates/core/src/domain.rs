//! Value types and planar geometry shared by every other module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete simulation time, counted in ticks from the start of an episode.
pub type Tick = u32;

/// A location in a local planar frame, in kilometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A circular demand zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: u32,
    pub centroid: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderStatus {
    Waiting,
    Paired,
    Assigned,
    Cancelled,
    Completed,
}

impl OrderStatus {
    /// Allowed lifecycle moves. `Completed` is reached from `Assigned`
    /// once the vehicle drops the passenger off.
    pub fn can_transition_to(self, next: OrderStatus) -> bool {
        use OrderStatus::*;
        matches!(
            (self, next),
            (Waiting, Paired)
                | (Waiting, Assigned)
                | (Waiting, Cancelled)
                | (Paired, Assigned)
                | (Assigned, Completed)
        )
    }
}

/// A passenger request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: u32,
    pub origin: Point,
    pub destination: Point,
    pub request_tick: Tick,
    pub cancel_deadline: Tick,
    pub status: OrderStatus,
}

impl Order {
    pub fn direct_distance(&self) -> f64 {
        self.origin.distance(&self.destination)
    }

    pub fn validate(&self) -> Result<()> {
        if self.request_tick >= self.cancel_deadline {
            return Err(Error::Validation(format!(
                "order {}: request tick {} is not before cancel deadline {}",
                self.id, self.request_tick, self.cancel_deadline
            )));
        }
        if !self.origin.is_finite() || !self.destination.is_finite() {
            return Err(Error::Validation(format!("order {}: non-finite location", self.id)));
        }
        if self.origin == self.destination {
            return Err(Error::Validation(format!(
                "order {}: origin equals destination",
                self.id
            )));
        }
        Ok(())
    }

    /// Moves the order to `next`, rejecting moves outside the lifecycle.
    pub fn transition(&mut self, next: OrderStatus) -> Result<()> {
        if !self.status.can_transition_to(next) {
            return Err(Error::Contract(format!(
                "order {}: illegal status change {:?} -> {:?}",
                self.id, self.status, next
            )));
        }
        self.status = next;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverStatus {
    Idle,
    Enroute,
    Serving,
}

/// A vehicle. Only idle drivers are eligible for assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverState {
    pub id: u32,
    pub position: Point,
    pub status: DriverStatus,
    /// Tick at which the driver becomes idle again at `position`.
    pub busy_until: Tick,
}

impl DriverState {
    pub fn idle(id: u32, position: Point) -> Self {
        Self {
            id,
            position,
            status: DriverStatus::Idle,
            busy_until: 0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.status == DriverStatus::Idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hailing,
    Pooling,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Hailing => "hailing",
            Mode::Pooling => "pooling",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hailing" => Ok(Mode::Hailing),
            "pooling" => Ok(Mode::Pooling),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// Divisors applied to the raw observation statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsScale {
    pub since_match: f64,
    pub waiting_count: f64,
    pub mean_wait: f64,
    pub max_wait: f64,
    pub idle_drivers: f64,
}

impl Default for ObsScale {
    fn default() -> Self {
        Self {
            since_match: 60.0,
            waiting_count: 50.0,
            mean_wait: 300.0,
            max_wait: 300.0,
            idle_drivers: 50.0,
        }
    }
}

/// Simulation constants for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Vehicle speed in km/h.
    pub speed: f64,
    /// Seconds an order may stay unmatched before it is cancelled.
    pub cancel_after: f64,
    /// Seconds per tick.
    pub tick: f64,
    /// Episode length in ticks.
    pub horizon: Tick,
    pub mode: Mode,
    /// Weight of matching wait relative to pickup wait.
    pub phi: f64,
    /// Weight of detour delay relative to pickup wait.
    pub tau: f64,
    /// Minimum pair DDR for two orders to share a vehicle.
    pub ddr_threshold: f64,
    /// Unpaired orders may still be dispatched alone in pooling mode.
    pub allow_solo_in_pooling: bool,
    pub obs_scale: ObsScale,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            speed: 40.0,
            cancel_after: 300.0,
            tick: 1.0,
            horizon: 600,
            mode: Mode::Hailing,
            phi: 1.0,
            tau: 0.5,
            ddr_threshold: 0.6,
            allow_solo_in_pooling: true,
            obs_scale: ObsScale::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("sim.{what}")));
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad("speed must be positive");
        }
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return bad("tick must be positive");
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if !(self.cancel_after > 0.0 && self.cancel_after.is_finite()) {
            return bad("cancel_after must be positive");
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return bad("phi must be non-negative");
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad("tau must be non-negative");
        }
        if !(self.ddr_threshold > 0.0 && self.ddr_threshold <= 1.0) {
            return bad("ddr_threshold must lie in (0, 1]");
        }
        let s = &self.obs_scale;
        if [s.since_match, s.waiting_count, s.mean_wait, s.max_wait, s.idle_drivers]
            .iter()
            .any(|d| !(*d > 0.0 && d.is_finite()))
        {
            return bad("obs_scale divisors must be positive");
        }
        Ok(())
    }

    /// Cancellation window expressed in whole ticks (at least one).
    pub fn cancel_ticks(&self) -> Tick {
        ((self.cancel_after / self.tick).ceil() as Tick).max(1)
    }

    /// Seconds needed to cover `km` at the configured speed.
    pub fn seconds_for(&self, km: f64) -> f64 {
        km / self.speed * 3600.0
    }
}

/// Length of the polyline through `points`, in kilometers.
pub fn route_distance(points: &[Point]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "route needs at least 2 points, got {}",
            points.len()
        )));
    }
    Ok(points.windows(2).map(|w| w[0].distance(&w[1])).sum())
}

/// Seconds needed to travel `distance` km at `speed` km/h.
pub fn travel_time(distance: f64, speed: f64) -> Result<f64> {
    if !(speed > 0.0) {
        return Err(Error::InvalidArgument(format!("speed must be positive, got {speed}")));
    }
    if !(distance >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distance must be non-negative, got {distance}"
        )));
    }
    Ok(distance / speed * 3600.0)
}
