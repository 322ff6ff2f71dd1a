//! Exact matching engines.
//!
//! Pooling runs two stages: orders are first paired by a maximum-weight
//! matching on DDR, then pairs and leftover singles (the "entities") are
//! assigned to idle drivers by a min-cost assignment on pickup time.
//! Hailing skips the first stage. Brute-force oracles for both stages live
//! alongside for cross-checking.

mod assignment;
mod blossom;
mod ddr;

use serde::{Deserialize, Serialize};

pub use assignment::min_cost_assignment;
pub use blossom::max_weight_matching;
pub use ddr::{best_pair_plan, ddr_pair, PairCandidate, Stop, StopKind, WEIGHT_SCALE};

use crate::domain::{DriverState, Order, Point};
use crate::error::{Error, Result};

/// Largest instance `brute_force_pairing` accepts.
pub const PAIRING_ORACLE_LIMIT: usize = 12;
/// Largest side `brute_force_assignment` accepts.
pub const ASSIGNMENT_ORACLE_LIMIT: usize = 7;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    /// Chosen pairs, sorted by `(i, j)`.
    pub pairs: Vec<PairCandidate>,
    /// Orders left unpaired, sorted by id.
    pub singletons: Vec<u32>,
    /// Objective value in quantised weight units.
    pub total_weight: i64,
    /// Sum of the chosen pairs' DDR.
    pub total_ddr: f64,
}

impl PairingResult {
    fn from_pairs(mut pairs: Vec<PairCandidate>, orders: &[Order]) -> Self {
        pairs.sort_by_key(|p| (p.i, p.j));
        let paired: std::collections::HashSet<u32> =
            pairs.iter().flat_map(|p| [p.i, p.j]).collect();
        let mut singletons: Vec<u32> = orders
            .iter()
            .map(|o| o.id)
            .filter(|id| !paired.contains(id))
            .collect();
        singletons.sort_unstable();
        Self {
            total_weight: pairs.iter().map(PairCandidate::weight).sum(),
            total_ddr: pairs.iter().map(|p| p.ddr).sum(),
            pairs,
            singletons,
        }
    }

    /// Keeps only the pairs for which `keep` holds; the rest become singles.
    pub fn retain_pairs(&self, keep: impl Fn(&PairCandidate) -> bool) -> PairingResult {
        let mut out = self.clone();
        let (kept, dropped): (Vec<_>, Vec<_>) = out.pairs.drain(..).partition(|p| keep(p));
        out.singletons.extend(dropped.iter().flat_map(|p| [p.i, p.j]));
        out.singletons.sort_unstable();
        out.total_weight = kept.iter().map(PairCandidate::weight).sum();
        out.total_ddr = kept.iter().map(|p| p.ddr).sum();
        out.pairs = kept;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Single,
    Pair,
}

/// A unit dispatched to one driver: a single order or a pooled pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RideEntity {
    pub kind: EntityKind,
    pub members: Vec<u32>,
    /// Every stop in service order, starting with the first pickup.
    pub stops: Vec<Stop>,
    /// Extra in-vehicle km per member, aligned with `members`.
    pub detour_km: Vec<f64>,
}

impl RideEntity {
    pub fn single(order: &Order) -> Self {
        Self {
            kind: EntityKind::Single,
            members: vec![order.id],
            stops: vec![
                Stop {
                    order: order.id,
                    kind: StopKind::Pickup,
                    at: order.origin,
                },
                Stop {
                    order: order.id,
                    kind: StopKind::Dropoff,
                    at: order.destination,
                },
            ],
            detour_km: vec![0.0],
        }
    }

    pub fn pair(c: &PairCandidate) -> Self {
        Self {
            kind: EntityKind::Pair,
            members: vec![c.i, c.j],
            stops: c.sequence.to_vec(),
            detour_km: vec![c.detour_i, c.detour_j],
        }
    }

    pub fn first_pickup(&self) -> Point {
        self.stops[0].at
    }

    pub fn last_dropoff(&self) -> Point {
        self.stops[self.stops.len() - 1].at
    }

    /// In-vehicle route length from the first pickup to the last drop-off.
    pub fn route_km(&self) -> f64 {
        self.stops.windows(2).map(|w| w[0].at.distance(&w[1].at)).sum()
    }

    /// Km driven from the first pickup until `order` boards.
    pub fn boarding_offset_km(&self, order: u32) -> Option<f64> {
        let mut acc = 0.0;
        for (k, s) in self.stops.iter().enumerate() {
            if k > 0 {
                acc += self.stops[k - 1].at.distance(&s.at);
            }
            if s.order == order && s.kind == StopKind::Pickup {
                return Some(acc);
            }
        }
        None
    }

    pub fn detour_seconds(&self, speed: f64) -> Vec<f64> {
        self.detour_km.iter().map(|d| d / speed * 3600.0).collect()
    }
}

/// Builds dispatch units from a pairing: pairs first in `(i, j)` order, then
/// singles by id when `include_singles` is set.
pub fn build_entities(pairing: &PairingResult, orders: &[Order], include_singles: bool) -> Vec<RideEntity> {
    let mut out: Vec<RideEntity> = pairing.pairs.iter().map(RideEntity::pair).collect();
    if include_singles {
        let by_id: std::collections::HashMap<u32, &Order> = orders.iter().map(|o| (o.id, o)).collect();
        out.extend(
            pairing
                .singletons
                .iter()
                .filter_map(|id| by_id.get(id))
                .map(|o| RideEntity::single(o)),
        );
    }
    out
}

/// Singles for every order, sorted by id.
pub fn solo_entities(orders: &[Order]) -> Vec<RideEntity> {
    let mut sorted: Vec<&Order> = orders.iter().collect();
    sorted.sort_by_key(|o| o.id);
    sorted.into_iter().map(RideEntity::single).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverMatch {
    pub driver: u32,
    /// Index into the entity slice passed to the solver.
    pub entity: usize,
    /// Seconds from the driver's position to the entity's first pickup.
    pub pickup_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    /// Sorted by driver id.
    pub matches: Vec<DriverMatch>,
    pub unmatched_entities: Vec<usize>,
    pub unmatched_drivers: Vec<u32>,
    pub total_pickup_time: f64,
}

impl AssignmentResult {
    fn from_pairs(pairs: Vec<(usize, usize)>, entities: &[RideEntity], drivers: &[DriverState], speed: f64) -> Self {
        let mut matches: Vec<DriverMatch> = pairs
            .iter()
            .map(|&(d, e)| DriverMatch {
                driver: drivers[d].id,
                entity: e,
                pickup_time: pickup_seconds(&drivers[d], &entities[e], speed),
            })
            .collect();
        matches.sort_by_key(|m| m.driver);
        let mut used_e = vec![false; entities.len()];
        let mut used_d = vec![false; drivers.len()];
        for &(d, e) in &pairs {
            used_d[d] = true;
            used_e[e] = true;
        }
        let mut unmatched_drivers: Vec<u32> = drivers
            .iter()
            .zip(&used_d)
            .filter(|(_, u)| !**u)
            .map(|(d, _)| d.id)
            .collect();
        unmatched_drivers.sort_unstable();
        Self {
            total_pickup_time: matches.iter().map(|m| m.pickup_time).sum(),
            matches,
            unmatched_entities: (0..entities.len()).filter(|&e| !used_e[e]).collect(),
            unmatched_drivers,
        }
    }
}

fn pickup_seconds(driver: &DriverState, entity: &RideEntity, speed: f64) -> f64 {
    driver.position.distance(&entity.first_pickup()) / speed * 3600.0
}

fn sorted_by_id(orders: &[Order]) -> Vec<&Order> {
    let mut v: Vec<&Order> = orders.iter().collect();
    v.sort_by_key(|o| o.id);
    v
}

/// All feasible pair candidates, in `(i, j)` id order, with their indices
/// into the id-sorted order list.
fn feasible_edges(sorted: &[&Order], threshold: f64) -> Vec<(usize, usize, PairCandidate)> {
    let mut out = Vec::new();
    for a in 0..sorted.len() {
        for b in a + 1..sorted.len() {
            if let Ok(Some(c)) = ddr_pair(sorted[a], sorted[b], threshold) {
                out.push((a, b, c));
            }
        }
    }
    out
}

/// Maximum total-DDR pairing of the waiting orders.
pub fn pair_passengers(orders: &[Order], ddr_threshold: f64) -> PairingResult {
    let sorted = sorted_by_id(orders);
    let edges = feasible_edges(&sorted, ddr_threshold);
    let weighted: Vec<(usize, usize, i64)> = edges.iter().map(|(a, b, c)| (*a, *b, c.weight())).collect();
    let mate = max_weight_matching(sorted.len(), &weighted);
    let pairs = edges
        .into_iter()
        .filter(|(a, b, _)| mate[*a] == Some(*b))
        .map(|(_, _, c)| c)
        .collect();
    PairingResult::from_pairs(pairs, orders)
}

/// Exhaustive pairing optimum, for cross-checking on small inputs.
pub fn brute_force_pairing(orders: &[Order], ddr_threshold: f64) -> Result<PairingResult> {
    if orders.len() > PAIRING_ORACLE_LIMIT {
        return Err(Error::TooLarge(format!(
            "brute-force pairing handles at most {PAIRING_ORACLE_LIMIT} orders, got {}",
            orders.len()
        )));
    }
    let sorted = sorted_by_id(orders);
    let n = sorted.len();
    let mut cand: Vec<Vec<Option<PairCandidate>>> = vec![vec![None; n]; n];
    for (a, b, c) in feasible_edges(&sorted, ddr_threshold) {
        cand[a][b] = Some(c);
    }

    // best[mask] = best weight using only the orders in `mask`
    let full = 1usize << n;
    let mut best = vec![0i64; full];
    let mut choice: Vec<Option<(usize, usize)>> = vec![None; full];
    for mask in 1..full {
        let a = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << a);
        best[mask] = best[rest];
        choice[mask] = None;
        for b in a + 1..n {
            if rest & (1 << b) == 0 {
                continue;
            }
            if let Some(c) = &cand[a][b] {
                let w = c.weight() + best[rest & !(1 << b)];
                if w > best[mask] {
                    best[mask] = w;
                    choice[mask] = Some((a, b));
                }
            }
        }
    }
    let mut pairs = Vec::new();
    let mut mask = full - 1;
    while mask != 0 {
        let a = mask.trailing_zeros() as usize;
        match choice[mask] {
            Some((a, b)) => {
                pairs.push(cand[a][b].clone().expect("chosen edge exists"));
                mask &= !(1 << a) & !(1 << b);
            }
            None => mask &= !(1 << a),
        }
    }
    Ok(PairingResult::from_pairs(pairs, orders))
}

/// Maximum-cardinality assignment of drivers to entities with minimum total
/// pickup time. `speed` is in km/h.
pub fn assign_drivers(entities: &[RideEntity], drivers: &[DriverState], speed: f64) -> AssignmentResult {
    let cost: Vec<Vec<f64>> = drivers
        .iter()
        .map(|d| entities.iter().map(|e| pickup_seconds(d, e, speed)).collect())
        .collect();
    let sol = min_cost_assignment(&cost);
    let pairs = sol
        .into_iter()
        .enumerate()
        .filter_map(|(d, e)| e.map(|e| (d, e)))
        .collect();
    AssignmentResult::from_pairs(pairs, entities, drivers, speed)
}

/// Enumerates every injection of the smaller side into the larger one.
pub fn brute_force_assignment(
    entities: &[RideEntity],
    drivers: &[DriverState],
    speed: f64,
) -> Result<AssignmentResult> {
    if entities.len() > ASSIGNMENT_ORACLE_LIMIT || drivers.len() > ASSIGNMENT_ORACLE_LIMIT {
        return Err(Error::TooLarge(format!(
            "brute-force assignment handles at most {ASSIGNMENT_ORACLE_LIMIT} per side, got {}x{}",
            drivers.len(),
            entities.len()
        )));
    }
    let cost: Vec<Vec<f64>> = drivers
        .iter()
        .map(|d| entities.iter().map(|e| pickup_seconds(d, e, speed)).collect())
        .collect();
    let transpose = drivers.len() > entities.len();
    let (small, large) = if transpose {
        (entities.len(), drivers.len())
    } else {
        (drivers.len(), entities.len())
    };
    let at = |s: usize, l: usize| if transpose { cost[l][s] } else { cost[s][l] };

    fn search(
        s: usize,
        small: usize,
        large: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
        at: &dyn Fn(usize, usize) -> f64,
    ) {
        if s == small {
            if acc < best.0 {
                *best = (acc, current.clone());
            }
            return;
        }
        for l in 0..large {
            if !used[l] {
                used[l] = true;
                current.push(l);
                search(s + 1, small, large, used, current, acc + at(s, l), best, at);
                current.pop();
                used[l] = false;
            }
        }
    }

    let mut best = (f64::INFINITY, Vec::new());
    search(0, small, large, &mut vec![false; large], &mut Vec::new(), 0.0, &mut best, &at);
    let pairs = best
        .1
        .iter()
        .enumerate()
        .map(|(s, &l)| if transpose { (l, s) } else { (s, l) })
        .collect();
    Ok(AssignmentResult::from_pairs(pairs, entities, drivers, speed))
}

/// Total pickup seconds of the optimal assignment; 0 when a side is empty.
pub fn f_pick(entities: &[RideEntity], drivers: &[DriverState], speed: f64) -> f64 {
    if entities.is_empty() || drivers.is_empty() {
        return 0.0;
    }
    assign_drivers(entities, drivers, speed).total_pickup_time
}

/// Total detour seconds over every paired rider.
pub fn f_detour(pairing: &PairingResult, speed: f64) -> f64 {
    pairing
        .pairs
        .iter()
        .map(|p| (p.detour_i + p.detour_j) / speed * 3600.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::OrderStatus;

    fn order(id: u32, o: (f64, f64), d: (f64, f64)) -> Order {
        Order {
            id,
            origin: Point::new(o.0, o.1),
            destination: Point::new(d.0, d.1),
            request_tick: 0,
            cancel_deadline: 300,
            status: OrderStatus::Waiting,
        }
    }

    fn driver(id: u32, x: f64, y: f64) -> DriverState {
        DriverState::idle(id, Point::new(x, y))
    }

    fn entity_at(id: u32, x: f64, y: f64) -> RideEntity {
        RideEntity::single(&order(id, (x, y), (x + 1.0, y)))
    }

    #[test]
    fn trivial_pairings() {
        assert!(pair_passengers(&[], 0.6).pairs.is_empty());
        let one = [order(1, (0., 0.), (1., 0.))];
        let r = pair_passengers(&one, 0.6);
        assert!(r.pairs.is_empty());
        assert_eq!(r.singletons, vec![1]);
        assert_eq!(brute_force_pairing(&[], 0.6).unwrap(), PairingResult::default());
    }

    #[test]
    fn two_feasible_orders_pair_up() {
        let o = [order(1, (0., 0.), (10., 0.)), order(2, (2., 0.), (8., 0.))];
        let r = brute_force_pairing(&o, 0.6).unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert!(r.singletons.is_empty());
        assert_eq!(r, pair_passengers(&o, 0.6));
    }

    #[test]
    fn oracle_rejects_large_inputs() {
        let many: Vec<Order> = (0..13).map(|k| order(k, (k as f64, 0.), (k as f64, 5.))).collect();
        assert!(matches!(brute_force_pairing(&many, 0.6), Err(Error::TooLarge(_))));
        let ents: Vec<RideEntity> = (0..8).map(|k| entity_at(k, k as f64, 0.)).collect();
        assert!(matches!(
            brute_force_assignment(&ents, &[driver(0, 0., 0.)], 40.0),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn assignment_examples() {
        let r = assign_drivers(&[entity_at(1, 2., 0.)], &[driver(0, 0., 0.)], 40.0);
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.matches[0].pickup_time, 180.0);

        let ents = [entity_at(1, 1., 0.), entity_at(2, 9., 0.)];
        let drivers = [driver(0, 0., 0.), driver(1, 10., 0.)];
        let r = assign_drivers(&ents, &drivers, 40.0);
        assert_eq!(r.total_pickup_time, 180.0);
        assert_eq!(r.matches[0].entity, 0);
        assert_eq!(r.matches[1].entity, 1);
        assert_eq!(brute_force_assignment(&ents, &drivers, 40.0).unwrap(), r);
    }

    #[test]
    fn assignment_empty_and_unbalanced() {
        let r = assign_drivers(&[], &[driver(0, 0., 0.)], 40.0);
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_drivers, vec![0]);
        let r = brute_force_assignment(&[entity_at(1, 0., 0.)], &[], 40.0).unwrap();
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched_entities, vec![0]);

        let ents = [entity_at(1, 0., 0.), entity_at(2, 5., 0.), entity_at(3, 1., 0.)];
        let drivers = [driver(7, 0.5, 0.), driver(9, 4., 0.)];
        let a = assign_drivers(&ents, &drivers, 40.0);
        let b = brute_force_assignment(&ents, &drivers, 40.0).unwrap();
        assert_eq!(a.matches.len(), 2);
        assert_eq!(a.total_pickup_time, b.total_pickup_time);
    }

    #[test]
    fn f_pick_and_f_detour() {
        assert_eq!(f_pick(&[entity_at(1, 1., 0.)], &[], 40.0), 0.0);
        assert_eq!(f_pick(&[entity_at(1, 2., 0.)], &[driver(0, 0., 0.)], 40.0), 180.0);
        assert_eq!(f_detour(&PairingResult::default(), 40.0), 0.0);
        let o = [order(1, (0., 0.), (10., 0.)), order(2, (2., 0.), (8., 0.))];
        let mut p = pair_passengers(&o, 0.6);
        p.pairs[0].detour_i = 2.0;
        p.pairs[0].detour_j = 0.0;
        assert_eq!(f_detour(&p, 40.0), 180.0);
    }

    #[test]
    fn pair_entity_geometry() {
        let o = [order(1, (0., 0.), (10., 0.)), order(2, (2., 0.), (8., 0.))];
        let p = pair_passengers(&o, 0.6);
        let e = RideEntity::pair(&p.pairs[0]);
        assert_eq!(e.first_pickup(), Point::new(0., 0.));
        assert_eq!(e.boarding_offset_km(2), Some(2.0));
        assert_eq!(e.boarding_offset_km(1), Some(0.0));
        assert_eq!(e.route_km(), 10.0);
        assert_eq!(e.last_dropoff(), Point::new(10., 0.));
        let ents = build_entities(&p, &o, true);
        assert_eq!(ents.len(), 1);
    }

    #[test]
    fn retain_pairs_moves_members_to_singles() {
        let o = [order(1, (0., 0.), (10., 0.)), order(2, (2., 0.), (8., 0.)), order(3, (50., 50.), (51., 50.))];
        let p = pair_passengers(&o, 0.6);
        assert_eq!(p.singletons, vec![3]);
        let q = p.retain_pairs(|_| false);
        assert!(q.pairs.is_empty());
        assert_eq!(q.singletons, vec![1, 2, 3]);
        assert_eq!(q.total_weight, 0);
    }
}
