//! Scenario files and episode generation.
//!
//! A scenario fixes the demand model (per-zone Poisson rates, optionally
//! piecewise constant over equal-length time buckets), the origin-destination
//! transition matrix, the fleet and the simulation constants. Episodes are
//! sampled from it deterministically given a seed.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::domain::{DriverState, Order, OrderStatus, Point, SimParams, Tick, Zone};
use crate::error::{Error, Result};
use crate::rng::{stream, Concern};

const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneRecord {
    id: u32,
    cx: f64,
    cy: f64,
    radius: f64,
}

/// On-disk layout. Field names are the documented schema keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    fleet_size: usize,
    spawn_weights: Vec<f64>,
    lambda: Vec<Vec<f64>>,
    od: Vec<Vec<f64>>,
    #[serde(default)]
    sim: SimParams,
    #[serde(default)]
    zones: Vec<ZoneRecord>,
}

/// A validated demand and supply model.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub zones: Vec<Zone>,
    /// `arrival_rates[zone][bucket]`: expected requests per tick.
    pub arrival_rates: Vec<Vec<f64>>,
    /// Row-stochastic: `od[i][j]` is the chance a trip from zone i ends in zone j.
    pub od: Vec<Vec<f64>>,
    pub fleet_size: usize,
    pub spawn_weights: Vec<f64>,
    pub sim: SimParams,
}

/// Everything needed to replay one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeData {
    pub seed: u64,
    pub horizon: Tick,
    pub arrivals: Vec<Order>,
    pub initial_drivers: Vec<DriverState>,
}

impl EpisodeData {
    pub fn empty(horizon: Tick) -> Self {
        Self {
            seed: 0,
            horizon,
            arrivals: Vec::new(),
            initial_drivers: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.arrivals.windows(2) {
            if w[0].request_tick > w[1].request_tick {
                return Err(Error::Validation("arrivals are not time-ordered".into()));
            }
        }
        for o in &self.arrivals {
            o.validate()?;
            if o.request_tick >= self.horizon {
                return Err(Error::Validation(format!(
                    "order {} requested at tick {} beyond horizon {}",
                    o.id, o.request_tick, self.horizon
                )));
            }
            if o.status != OrderStatus::Waiting {
                return Err(Error::Validation(format!("order {} is not fresh", o.id)));
            }
        }
        Ok(())
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses scenario text; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Schema {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let scenario = Scenario {
            name: file.name.unwrap_or_else(|| {
                origin
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            }),
            zones: file
                .zones
                .into_iter()
                .map(|z| Zone {
                    id: z.id,
                    centroid: Point::new(z.cx, z.cy),
                    radius: z.radius,
                })
                .collect(),
            arrival_rates: file.lambda,
            od: file.od,
            fleet_size: file.fleet_size,
            spawn_weights: file.spawn_weights,
            sim: file.sim,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ScenarioFile {
            name: Some(self.name.clone()),
            fleet_size: self.fleet_size,
            spawn_weights: self.spawn_weights.clone(),
            lambda: self.arrival_rates.clone(),
            od: self.od.clone(),
            sim: self.sim.clone(),
            zones: self
                .zones
                .iter()
                .map(|z| ZoneRecord {
                    id: z.id,
                    cx: z.centroid.x,
                    cy: z.centroid.y,
                    radius: z.radius,
                })
                .collect(),
        };
        toml::to_string(&file).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let n = self.zones.len();
        let mut ids: Vec<u32> = self.zones.iter().map(|z| z.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("zone ids must be unique".into()));
        }
        for z in &self.zones {
            if !z.centroid.is_finite() || !(z.radius >= 0.0 && z.radius.is_finite()) {
                return Err(Error::Validation(format!("zone {}: bad geometry", z.id)));
            }
        }
        if self.arrival_rates.len() != n {
            return Err(Error::Validation(format!(
                "lambda has {} rows for {} zones",
                self.arrival_rates.len(),
                n
            )));
        }
        let buckets = self.arrival_rates.first().map_or(1, Vec::len);
        if buckets == 0 {
            return Err(Error::Validation("lambda rows need at least one bucket".into()));
        }
        for (z, rates) in self.zones.iter().zip(&self.arrival_rates) {
            if rates.len() != buckets {
                return Err(Error::Validation(format!(
                    "zone {}: expected {buckets} lambda buckets, got {}",
                    z.id,
                    rates.len()
                )));
            }
            if rates.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(Error::Validation(format!("zone {}: negative lambda", z.id)));
            }
        }
        if self.od.len() != n {
            return Err(Error::Validation(format!("od has {} rows for {n} zones", self.od.len())));
        }
        for (i, (z, row)) in self.zones.iter().zip(&self.od).enumerate() {
            if row.len() != n {
                return Err(Error::Validation(format!(
                    "zone {}: od row has {} entries, expected {n}",
                    z.id,
                    row.len()
                )));
            }
            if row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                return Err(Error::Validation(format!("zone {}: negative od entry", z.id)));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "zone {}: od row sums to {sum}, expected 1",
                    z.id
                )));
            }
            if z.radius == 0.0 && row[i] > 0.0 {
                return Err(Error::Validation(format!(
                    "zone {}: zero radius with self-destination would yield empty trips",
                    z.id
                )));
            }
        }
        if self.spawn_weights.len() != n {
            return Err(Error::Validation(format!(
                "spawn_weights has {} entries for {n} zones",
                self.spawn_weights.len()
            )));
        }
        if self.spawn_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Validation("spawn_weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn bucket_count(&self) -> usize {
        self.arrival_rates.first().map_or(1, Vec::len)
    }

    /// Time bucket covering tick `t`; buckets split the horizon evenly.
    pub fn bucket_of(&self, t: Tick) -> usize {
        let b = self.bucket_count();
        ((t as usize * b) / self.sim.horizon as usize).min(b - 1)
    }

    /// Expected number of requests over one episode.
    pub fn expected_demand(&self) -> f64 {
        (0..self.sim.horizon)
            .map(|t| {
                let b = self.bucket_of(t);
                self.arrival_rates.iter().map(|r| r[b]).sum::<f64>()
            })
            .sum()
    }

    pub fn sample_arrivals(&self, seed: u64) -> Vec<Order> {
        let cancel = self.sim.cancel_ticks();
        let mut staged: Vec<(Tick, usize, Point, Point)> = Vec::new();
        for (zi, zone) in self.zones.iter().enumerate() {
            let mut arrivals = stream(seed, Concern::Arrivals, zi as u32);
            let mut dests = stream(seed, Concern::Destinations, zi as u32);
            let od = WeightedIndex::new(&self.od[zi]).ok();
            for t in 0..self.sim.horizon {
                let lambda = self.arrival_rates[zi][self.bucket_of(t)];
                if lambda <= 0.0 {
                    continue;
                }
                let count = Poisson::new(lambda)
                    .expect("positive finite rate")
                    .sample(&mut arrivals) as usize;
                for _ in 0..count {
                    let origin = uniform_in_disk(&mut arrivals, zone);
                    let Some(od) = od.as_ref() else { continue };
                    let dz = &self.zones[od.sample(&mut dests)];
                    let mut destination = uniform_in_disk(&mut dests, dz);
                    while destination == origin {
                        destination = uniform_in_disk(&mut dests, dz);
                    }
                    staged.push((t, zi, origin, destination));
                }
            }
        }
        // stable: ties keep zone order, then draw order within the zone
        staged.sort_by_key(|&(t, zi, ..)| (t, zi));
        staged
            .into_iter()
            .enumerate()
            .map(|(id, (t, _, origin, destination))| Order {
                id: id as u32,
                origin,
                destination,
                request_tick: t,
                cancel_deadline: t + cancel,
                status: OrderStatus::Waiting,
            })
            .collect()
    }

    pub fn sample_drivers(&self, seed: u64) -> Result<Vec<DriverState>> {
        if self.fleet_size == 0 {
            return Ok(Vec::new());
        }
        let picker = WeightedIndex::new(&self.spawn_weights).map_err(|_| {
            Error::Validation("spawn_weights are all zero but fleet_size > 0".into())
        })?;
        let mut rng = stream(seed, Concern::Drivers, 0);
        Ok((0..self.fleet_size)
            .map(|id| {
                let zone = &self.zones[picker.sample(&mut rng)];
                DriverState::idle(id as u32, uniform_in_disk(&mut rng, zone))
            })
            .collect())
    }

    pub fn generate_episode(&self, seed: u64) -> Result<EpisodeData> {
        Ok(EpisodeData {
            seed,
            horizon: self.sim.horizon,
            arrivals: self.sample_arrivals(seed),
            initial_drivers: self.sample_drivers(seed)?,
        })
    }
}

fn uniform_in_disk<R: Rng>(rng: &mut R, zone: &Zone) -> Point {
    let r = zone.radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Point::new(
        zone.centroid.x + r * theta.cos(),
        zone.centroid.y + r * theta.sin(),
    )
}

/// Parameters of a synthetic square-grid city.
#[derive(Debug, Clone)]
pub struct GridCity {
    pub name: String,
    pub side: usize,
    /// Distance between neighbouring zone centroids, km.
    pub spacing: f64,
    pub radius: f64,
    /// Total requests per tick across all zones.
    pub total_rate: f64,
    pub fleet_size: usize,
    /// Ratio between the busiest and the quietest zone rate.
    pub hotspot_ratio: f64,
    /// OD weights decay as `exp(-distance / od_length)`.
    pub od_length: f64,
    pub sim: SimParams,
}

impl GridCity {
    /// Builds a heterogeneous grid: rates and driver spawn weights peak at
    /// the centre; destinations favour nearby zones.
    pub fn build(&self) -> Scenario {
        let n = self.side * self.side;
        let mid = (self.side as f64 - 1.0) / 2.0;
        let zones: Vec<Zone> = (0..n)
            .map(|k| Zone {
                id: k as u32,
                centroid: Point::new(
                    (k % self.side) as f64 * self.spacing,
                    (k / self.side) as f64 * self.spacing,
                ),
                radius: self.radius,
            })
            .collect();
        let max_r = (2.0f64).sqrt() * mid.max(1e-9);
        let heat: Vec<f64> = (0..n)
            .map(|k| {
                let dx = (k % self.side) as f64 - mid;
                let dy = (k / self.side) as f64 - mid;
                let frac = if mid > 0.0 { dx.hypot(dy) / max_r } else { 0.0 };
                self.hotspot_ratio.powf(1.0 - frac)
            })
            .collect();
        let heat_sum: f64 = heat.iter().sum();
        let arrival_rates = heat
            .iter()
            .map(|h| vec![self.total_rate * h / heat_sum])
            .collect();
        let od = zones
            .iter()
            .map(|a| {
                let w: Vec<f64> = zones
                    .iter()
                    .map(|b| (-a.centroid.distance(&b.centroid) / self.od_length).exp())
                    .collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>();
        let mut od: Vec<Vec<f64>> = od;
        for row in &mut od {
            // pin the row sum to 1 exactly in floating point
            let rest: f64 = row[1..].iter().sum();
            row[0] = 1.0 - rest;
        }
        Scenario {
            name: self.name.clone(),
            zones,
            arrival_rates,
            od,
            fleet_size: self.fleet_size,
            spawn_weights: heat,
            sim: self.sim.clone(),
        }
    }
}
