//! Detour delay rate (DDR) of a two-passenger shared ride.
//!
//! For a pair (a, b) picked up in the order `O_a, O_b` there are two
//! drop-off templates:
//!
//! * crossed, `O_a → O_b → D_a → D_b`: both riders detour,
//!   `DDR(a) = d(O_a, D_a) / d(O_a, O_b, D_a)` and
//!   `DDR(b) = d(O_b, D_b) / d(O_b, D_a, D_b)`;
//! * nested, `O_a → O_b → D_b → D_a`: only `a` detours,
//!   `DDR(a) = d(O_a, D_a) / d(O_a, O_b, D_b, D_a)` and `DDR(b) = 1`.
//!
//! A template scores the smaller of its two rider ratios. Both templates
//! are evaluated with either order picked up first and the best of the four
//! is kept, so the result does not depend on argument order.

use serde::{Deserialize, Serialize};

use crate::domain::{Order, Point};
use crate::error::{Error, Result};

/// Weights handed to the matching solver are DDR values quantised to this
/// resolution so the optimum is computed in exact integer arithmetic.
pub const WEIGHT_SCALE: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub order: u32,
    pub kind: StopKind,
    pub at: Point,
}

impl Stop {
    fn pickup(o: &Order) -> Self {
        Self {
            order: o.id,
            kind: StopKind::Pickup,
            at: o.origin,
        }
    }

    fn dropoff(o: &Order) -> Self {
        Self {
            order: o.id,
            kind: StopKind::Dropoff,
            at: o.destination,
        }
    }
}

/// The best shared-ride plan for two orders. `i < j` by order id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCandidate {
    pub i: u32,
    pub j: u32,
    /// Smaller rider ratio of the chosen sequence, in (0, 1].
    pub ddr: f64,
    pub sequence: [Stop; 4],
    /// Extra in-vehicle km over the direct trip, per rider.
    pub detour_i: f64,
    pub detour_j: f64,
}

impl PairCandidate {
    /// Integer edge weight used by the pairing optimisation.
    pub fn weight(&self) -> i64 {
        (self.ddr * WEIGHT_SCALE).round() as i64
    }

    /// Length of the whole route from the first pickup to the last drop-off.
    pub fn route_km(&self) -> f64 {
        self.sequence
            .windows(2)
            .map(|w| w[0].at.distance(&w[1].at))
            .sum()
    }

    pub fn detour_of(&self, order: u32) -> Option<f64> {
        if order == self.i {
            Some(self.detour_i)
        } else if order == self.j {
            Some(self.detour_j)
        } else {
            None
        }
    }
}

struct Plan {
    score: f64,
    sequence: [Stop; 4],
    detour_first: f64,
    detour_second: f64,
}

fn ratio(direct: f64, actual: f64) -> f64 {
    (direct / actual).min(1.0)
}

/// Crossed template with `a` picked up first.
fn crossed(a: &Order, b: &Order) -> Plan {
    let da = a.direct_distance();
    let db = b.direct_distance();
    let ride_a = a.origin.distance(&b.origin) + b.origin.distance(&a.destination);
    let ride_b = b.origin.distance(&a.destination) + a.destination.distance(&b.destination);
    Plan {
        score: ratio(da, ride_a).min(ratio(db, ride_b)),
        sequence: [Stop::pickup(a), Stop::pickup(b), Stop::dropoff(a), Stop::dropoff(b)],
        detour_first: (ride_a - da).max(0.0),
        detour_second: (ride_b - db).max(0.0),
    }
}

/// Nested template with `a` picked up first.
fn nested(a: &Order, b: &Order) -> Plan {
    let da = a.direct_distance();
    let ride_a = a.origin.distance(&b.origin) + b.direct_distance() + b.destination.distance(&a.destination);
    Plan {
        score: ratio(da, ride_a),
        sequence: [Stop::pickup(a), Stop::pickup(b), Stop::dropoff(b), Stop::dropoff(a)],
        detour_first: (ride_a - da).max(0.0),
        detour_second: 0.0,
    }
}

/// Best of the four sequences for two distinct orders, regardless of any
/// feasibility threshold.
pub fn best_pair_plan(x: &Order, y: &Order) -> Result<PairCandidate> {
    if x.id == y.id {
        return Err(Error::InvalidArgument(format!(
            "cannot pair order {} with itself",
            x.id
        )));
    }
    let (lo, hi) = if x.id < y.id { (x, y) } else { (y, x) };
    // candidates in tie-break order: lower id first, crossed before nested
    let plans = [
        (crossed(lo, hi), false),
        (nested(lo, hi), false),
        (crossed(hi, lo), true),
        (nested(hi, lo), true),
    ];
    let mut best = 0;
    for k in 1..plans.len() {
        if plans[k].0.score > plans[best].0.score {
            best = k;
        }
    }
    let (plan, swapped) = &plans[best];
    let (detour_i, detour_j) = if *swapped {
        (plan.detour_second, plan.detour_first)
    } else {
        (plan.detour_first, plan.detour_second)
    };
    Ok(PairCandidate {
        i: lo.id,
        j: hi.id,
        ddr: plan.score,
        sequence: plan.sequence,
        detour_i,
        detour_j,
    })
}

/// Evaluates a pair; `Ok(None)` when the best DDR is below `threshold`.
pub fn ddr_pair(x: &Order, y: &Order, threshold: f64) -> Result<Option<PairCandidate>> {
    let c = best_pair_plan(x, y)?;
    Ok((c.ddr >= threshold).then_some(c))
}
