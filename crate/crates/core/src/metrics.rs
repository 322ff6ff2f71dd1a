//! Episode evaluation and report aggregation.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::TimingPolicy;
use crate::domain::{Mode, Tick};
use crate::env::{Env, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::{child_seed, Concern};
use crate::scenario::Scenario;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    /// Per served passenger; `None` when nobody was served.
    pub avg_pickup_time: Option<f64>,
    pub avg_matching_time: Option<f64>,
    pub avg_detour_delay: Option<f64>,
    pub avg_total_waiting_time: Option<f64>,
    pub total_pickup_time: f64,
    pub total_matching_time: f64,
    pub total_detour_delay: f64,
    pub total_waiting_time: f64,
    pub served_count: usize,
    pub cancelled_count: usize,
    pub natural_return: f64,
    /// Fraction of ticks with a matching.
    pub match_rate: f64,
    /// Gaps between consecutive matching ticks.
    pub match_intervals: Vec<Tick>,
}

impl EpisodeMetrics {
    /// Summarises a finished environment.
    pub fn from_env(env: &Env, seed: u64, natural_return: f64) -> Self {
        let recs = env.records();
        let total_pickup_time: f64 = recs.iter().map(|r| r.pickup_time).sum();
        let total_matching_time: f64 = recs.iter().map(|r| r.matching_time).sum();
        let total_detour_delay: f64 = recs.iter().map(|r| r.detour_delay).sum();
        let total_waiting_time: f64 = recs.iter().map(|r| r.total_wait()).sum();
        let n = recs.len();
        let avg = |x: f64| if n == 0 { None } else { Some(x / n as f64) };
        let ticks = env.match_ticks();
        Self {
            seed,
            avg_pickup_time: avg(total_pickup_time),
            avg_matching_time: avg(total_matching_time),
            avg_detour_delay: avg(total_detour_delay),
            avg_total_waiting_time: avg(total_waiting_time),
            total_pickup_time,
            total_matching_time,
            total_detour_delay,
            total_waiting_time,
            served_count: n,
            cancelled_count: env.ledger().cancelled,
            natural_return,
            match_rate: ticks.len() as f64 / env.horizon() as f64,
            match_intervals: ticks.windows(2).map(|w| w[1] - w[0]).collect(),
        }
    }

    /// Value of a named metric; `None` for absent averages.
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::AvgPickup => self.avg_pickup_time,
            Metric::AvgMatching => self.avg_matching_time,
            Metric::AvgDetour => self.avg_detour_delay,
            Metric::AvgTotalWaiting => self.avg_total_waiting_time,
            Metric::TotalPickup => Some(self.total_pickup_time),
            Metric::TotalMatching => Some(self.total_matching_time),
            Metric::TotalDetour => Some(self.total_detour_delay),
            Metric::TotalWaiting => Some(self.total_waiting_time),
            Metric::Served => Some(self.served_count as f64),
            Metric::Cancelled => Some(self.cancelled_count as f64),
            Metric::NaturalReturn => Some(self.natural_return),
            Metric::MatchRate => Some(self.match_rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    AvgPickup,
    AvgMatching,
    AvgDetour,
    AvgTotalWaiting,
    TotalPickup,
    TotalMatching,
    TotalDetour,
    TotalWaiting,
    Served,
    Cancelled,
    NaturalReturn,
    MatchRate,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Metric::AvgPickup,
        Metric::AvgMatching,
        Metric::AvgDetour,
        Metric::AvgTotalWaiting,
        Metric::TotalPickup,
        Metric::TotalMatching,
        Metric::TotalDetour,
        Metric::TotalWaiting,
        Metric::Served,
        Metric::Cancelled,
        Metric::NaturalReturn,
        Metric::MatchRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AvgPickup => "avg_pickup_time",
            Metric::AvgMatching => "avg_matching_time",
            Metric::AvgDetour => "avg_detour_delay",
            Metric::AvgTotalWaiting => "avg_total_waiting_time",
            Metric::TotalPickup => "total_pickup_time",
            Metric::TotalMatching => "total_matching_time",
            Metric::TotalDetour => "total_detour_delay",
            Metric::TotalWaiting => "total_waiting_time",
            Metric::Served => "served_count",
            Metric::Cancelled => "cancelled_count",
            Metric::NaturalReturn => "natural_return",
            Metric::MatchRate => "match_rate",
        }
    }

    /// Whether a larger value is better; `None` when neither is.
    pub fn higher_is_better(self) -> Option<bool> {
        match self {
            Metric::Served | Metric::NaturalReturn => Some(true),
            Metric::MatchRate => None,
            _ => Some(false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Episodes that contributed a value.
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    /// Half-width of the 95% normal-approximation interval.
    pub ci95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                se: f64::NAN,
                ci95: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            mean,
            se,
            ci95: Z95 * se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub strategy: String,
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub episodes: usize,
    /// In `Metric::ALL` order.
    pub metrics: Vec<(Metric, Summary)>,
}

impl AggregateReport {
    pub fn from_episodes(strategy: &str, scenario: &Scenario, seed: u64, eps: &[EpisodeMetrics]) -> Self {
        let metrics = Metric::ALL
            .iter()
            .map(|&m| {
                let vals: Vec<f64> = eps.iter().filter_map(|e| e.get(m)).collect();
                (m, Summary::of(&vals))
            })
            .collect();
        Self {
            strategy: strategy.to_string(),
            scenario: scenario.name.clone(),
            mode: scenario.sim.mode,
            seed,
            episodes: eps.len(),
            metrics,
        }
    }

    pub fn get(&self, m: Metric) -> Summary {
        self.metrics
            .iter()
            .find(|(k, _)| *k == m)
            .map(|(_, s)| *s)
            .expect("every metric is summarised")
    }

    /// Human-readable multi-line summary.
    pub fn summary_text(&self) -> String {
        let mut s = format!(
            "strategy {} on {} ({}), {} episodes, seed {}\n",
            self.strategy, self.scenario, self.mode, self.episodes, self.seed
        );
        for (m, v) in &self.metrics {
            let _ = writeln!(s, "  {:<24} {:>12.3} ± {:.3} (se {:.3})", m.name(), v.mean, v.ci95, v.se);
        }
        s
    }
}

/// Per-episode results plus their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: AggregateReport,
    pub episodes: Vec<EpisodeMetrics>,
}

impl Evaluation {
    /// Every gap between matchings across all episodes.
    pub fn intervals(&self) -> Vec<Tick> {
        self.episodes.iter().flat_map(|e| e.match_intervals.iter().copied()).collect()
    }
}

/// Seed of evaluation episode `k`; shared by every strategy for pairing.
pub fn eval_episode_seed(seed: u64, k: usize) -> u64 {
    child_seed(seed, Concern::Episodes, k as u32)
}

/// Plays one episode; `trace` receives every step outcome.
pub fn run_episode(
    policy: &TimingPolicy,
    scenario: &Scenario,
    episode_seed: u64,
    mut trace: Option<&mut dyn FnMut(&StepOutcome)>,
) -> Result<EpisodeMetrics> {
    let ep = scenario.generate_episode(episode_seed)?;
    let mut env = Env::new(scenario.sim.clone(), ep)?.with_shaping(false);
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(episode_seed, Concern::Actions, 0));
    let mut obs = env.observe();
    let mut ret = 0.0;
    while !env.is_done() {
        let a = policy.decide(&obs, env.t(), env.last_match_tick(), &mut rng)?;
        let out = env.step(a)?;
        if let Some(f) = trace.as_mut() {
            f(&out);
        }
        ret += out.reward;
        obs = out.observation;
    }
    Ok(EpisodeMetrics::from_env(&env, episode_seed, ret))
}

/// Evaluates `policy` on `n_episodes` paired-seed episodes using up to
/// `jobs` threads; results are ordered by episode index.
pub fn evaluate(policy: &TimingPolicy, scenario: &Scenario, n_episodes: usize, seed: u64, jobs: usize) -> Result<Evaluation> {
    if n_episodes < 1 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    scenario.validate()?;
    let seeds: Vec<u64> = (0..n_episodes).map(|k| eval_episode_seed(seed, k)).collect();
    let jobs = jobs.max(1).min(n_episodes);
    let mut results: Vec<Option<Result<EpisodeMetrics>>> = (0..n_episodes).map(|_| None).collect();
    if jobs == 1 {
        for (s, r) in seeds.iter().zip(results.iter_mut()) {
            *r = Some(run_episode(policy, scenario, *s, None));
        }
    } else {
        let per = n_episodes.div_ceil(jobs);
        std::thread::scope(|sc| {
            for (ss, rs) in seeds.chunks(per).zip(results.chunks_mut(per)) {
                sc.spawn(move || {
                    for (s, r) in ss.iter().zip(rs.iter_mut()) {
                        *r = Some(run_episode(policy, scenario, *s, None));
                    }
                });
            }
        });
    }
    let episodes = results
        .into_iter()
        .map(|r| r.expect("every episode ran"))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        report: AggregateReport::from_episodes(&policy.label(), scenario, seed, &episodes),
        episodes,
    })
}

/// Reports side by side with differences against one baseline row.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reports: Vec<AggregateReport>,
    pub baseline: usize,
}

impl Comparison {
    pub fn new(reports: Vec<AggregateReport>, baseline: usize) -> Result<Self> {
        if reports.len() < 2 {
            return Err(Error::InvalidArgument("comparison needs at least two reports".into()));
        }
        if baseline >= reports.len() {
            return Err(Error::InvalidArgument(format!("baseline index {baseline} out of range")));
        }
        let r0 = &reports[0];
        for r in &reports[1..] {
            if r.scenario != r0.scenario || r.mode != r0.mode || r.seed != r0.seed || r.episodes != r0.episodes {
                return Err(Error::Contract(format!(
                    "report '{}' was not evaluated on the same scenario and seeds as '{}'",
                    r.strategy, r0.strategy
                )));
            }
        }
        Ok(Self { reports, baseline })
    }

    /// Difference of each strategy's mean from the baseline's.
    pub fn difference(&self, row: usize, m: Metric) -> f64 {
        self.reports[row].get(m).mean - self.reports[self.baseline].get(m).mean
    }

    /// Index of the best strategy on `m`, if the metric has a direction
    /// and any finite value.
    pub fn best(&self, m: Metric) -> Option<usize> {
        let higher = m.higher_is_better()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.reports.iter().enumerate() {
            let v = r.get(m).mean;
            if !v.is_finite() {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, b)) => {
                    if higher {
                        v > b
                    } else {
                        v < b
                    }
                }
            };
            if better {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Long format: one row per strategy and metric.
    pub fn to_long_csv(&self) -> String {
        let mut s = String::from("strategy,metric,mean,se,ci95,diff_vs_baseline,best\n");
        for m in Metric::ALL {
            let best = self.best(m);
            for (i, r) in self.reports.iter().enumerate() {
                let v = r.get(m);
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.strategy,
                    m.name(),
                    fmt_num(v.mean),
                    fmt_num(v.se),
                    fmt_num(v.ci95),
                    fmt_num(self.difference(i, m)),
                    if best == Some(i) { "*" } else { "" }
                );
            }
        }
        s
    }

    /// Wide format: one row per strategy; best cells carry a `*` suffix.
    pub fn to_table_csv(&self) -> String {
        let mut s = String::from("strategy,episodes");
        for m in Metric::ALL {
            let _ = write!(s, ",{0}_mean,{0}_ci95", m.name());
        }
        s.push('\n');
        for (i, r) in self.reports.iter().enumerate() {
            let _ = write!(s, "{},{}", r.strategy, r.episodes);
            for m in Metric::ALL {
                let v = r.get(m);
                let mark = if self.best(m) == Some(i) { "*" } else { "" };
                let _ = write!(s, ",{}{mark},{}", fmt_num(v.mean), fmt_num(v.ci95));
            }
            s.push('\n');
        }
        s
    }
}

/// One report as a single-row wide CSV.
pub fn report_csv(report: &AggregateReport) -> String {
    let mut s = String::from("strategy,scenario,mode,seed,episodes");
    for m in Metric::ALL {
        let _ = write!(s, ",{0}_mean,{0}_se,{0}_ci95", m.name());
    }
    s.push('\n');
    let _ = write!(
        s,
        "{},{},{},{},{}",
        report.strategy, report.scenario, report.mode, report.seed, report.episodes
    );
    for (_, v) in &report.metrics {
        let _ = write!(s, ",{},{},{}", fmt_num(v.mean), fmt_num(v.se), fmt_num(v.ci95));
    }
    s.push('\n');
    s
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    /// `(lower edge, count)` for bins of width `bin`.
    pub histogram: Vec<(Tick, usize)>,
    pub bin: Tick,
}

impl IntervalSummary {
    pub fn of(intervals: &[Tick], bin: Tick) -> Self {
        let bin = bin.max(1);
        let mut v: Vec<f64> = intervals.iter().map(|&x| x as f64).collect();
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25);
        let q3 = quantile(&v, 0.75);
        let mut histogram: Vec<(Tick, usize)> = Vec::new();
        if let Some(&max) = intervals.iter().max() {
            let bins = (max / bin + 1) as usize;
            let mut counts = vec![0usize; bins];
            for &x in intervals {
                counts[(x / bin) as usize] += 1;
            }
            histogram = counts.into_iter().enumerate().map(|(i, c)| (i as Tick * bin, c)).collect();
        }
        Self {
            count: v.len(),
            mean: if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 },
            q1,
            median: quantile(&v, 0.5),
            q3,
            iqr: q3 - q1,
            histogram,
            bin,
        }
    }

    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("lower,upper,count\n");
        for (lo, c) in &self.histogram {
            let _ = writeln!(s, "{},{},{}", lo, lo + self.bin, c);
        }
        s
    }
}
