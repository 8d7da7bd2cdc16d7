//! Day-by-day simulation of the queue under an equilibrium arrival
//! distribution, observed at a fixed sampling schedule.
//!
//! Each day draws `N ~ Poisson(λ)` customers. A customer arrives at zero with
//! probability `atom`, uniformly on `[−w, 0)` with the pre-opening mass, and
//! otherwise in a grid cell `[rδ, (r+1)δ)` chosen with probability
//! `δ f(rδ)`, uniformly inside the cell. Service starts at time zero, is FCFS
//! and exponential with rate μ.
//!
//! Day `l` of a run with seed `s` uses ChaCha stream `l` keyed by `s`, so any
//! single day can be replayed on its own.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::equilibrium::EquilibriumDistribution;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Times at which the queue is inspected every day.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSchedule {
    times: Vec<f64>,
    spacing_hint: Option<f64>,
}

impl SamplingSchedule {
    /// Strictly increasing times, at least three of them.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::InvalidSchedule(format!(
                "need at least 3 sampling times, got {}",
                times.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSchedule(
                "sampling times must be finite".into(),
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(
                "sampling times must be strictly increasing".into(),
            ));
        }
        Ok(SamplingSchedule {
            times,
            spacing_hint: None,
        })
    }

    /// `start, start + Δ, …` up to and including `end`.
    pub fn equidistant(start: f64, spacing: f64, end: f64) -> Result<Self> {
        if spacing.is_nan() || spacing <= 0.0 || start.is_nan() || end.is_nan() || end < start {
            return Err(Error::InvalidSchedule(format!(
                "bad equidistant schedule: start {start}, spacing {spacing}, end {end}"
            )));
        }
        let count = ((end - start) / spacing + 1e-9).floor() as usize + 1;
        let times = (0..count)
            .map(|i| round_to_grid(start + i as f64 * spacing))
            .collect();
        let mut schedule = Self::new(times)?;
        schedule.spacing_hint = Some(spacing);
        Ok(schedule)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn spacing_hint(&self) -> Option<f64> {
        self.spacing_hint
    }
}

fn round_to_grid(t: f64) -> f64 {
    // Strips accumulated representation error (0.30000000000000004 -> 0.3).
    (t * 1e9).round() / 1e9
}

/// One day's arrivals and departures, both in FCFS order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DayRealization {
    pub arrivals: Vec<f64>,
    pub departures: Vec<f64>,
}

impl DayRealization {
    /// Builds a day from arrival times and the service times of the customers
    /// in arrival order.
    pub fn from_services(mut arrivals: Vec<f64>, services: &[f64]) -> Self {
        arrivals.sort_by(f64::total_cmp);
        let mut departures = Vec::with_capacity(arrivals.len());
        let mut free_at = 0.0f64;
        for (&arrival, &service) in arrivals.iter().zip(services) {
            free_at = arrival.max(free_at) + service;
            departures.push(free_at);
        }
        DayRealization {
            arrivals,
            departures,
        }
    }

    /// Number in system at `t`; arrivals and departures at `t` both count.
    pub fn queue_length(&self, t: f64) -> u32 {
        let arrived = self.arrivals.partition_point(|&a| a <= t);
        let departed = self.departures.partition_point(|&d| d <= t);
        (arrived - departed) as u32
    }
}

/// Inverse-CDF sampler of arrival times for one equilibrium.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    atom_prob: f64,
    pre_prob: f64,
    pre_width: f64,
    cell_cdf: Vec<f64>,
    density_offset: i64,
    delta: f64,
    poisson: Option<Poisson<f64>>,
    service: Exp<f64>,
}

impl ArrivalSampler {
    pub fn new(eq: &EquilibriumDistribution, params: &ModelParams) -> Result<Self> {
        let mut cell_cdf = Vec::with_capacity(eq.density.len());
        let mut acc = 0.0;
        for &f in &eq.density {
            acc += eq.grid_step * f.max(0.0);
            cell_cdf.push(acc);
        }
        let total = eq.atom + eq.pre_mass() + acc;
        if total.is_nan() || total <= 0.0 {
            return Err(Error::InvalidParameter(
                "equilibrium carries no probability mass".into(),
            ));
        }
        cell_cdf
            .iter_mut()
            .for_each(|c| *c /= acc.max(f64::MIN_POSITIVE));
        let poisson = if params.lambda() > 0.0 {
            Some(
                Poisson::new(params.lambda())
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(ArrivalSampler {
            atom_prob: eq.atom / total,
            pre_prob: eq.pre_mass() / total,
            pre_width: eq.pre_width,
            cell_cdf,
            density_offset: eq.density_offset,
            delta: eq.grid_step,
            poisson,
            service: Exp::new(params.mu()).map_err(|e| Error::InvalidParameter(e.to_string()))?,
        })
    }

    pub fn arrival_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if u < self.atom_prob {
            return 0.0;
        }
        if u < self.atom_prob + self.pre_prob {
            return -self.pre_width * rng.random::<f64>();
        }
        let v: f64 = rng.random();
        let cell = self
            .cell_cdf
            .partition_point(|&c| c <= v)
            .min(self.cell_cdf.len().saturating_sub(1));
        let jitter: f64 = rng.random();
        ((self.density_offset + cell as i64) as f64 + jitter) * self.delta
    }

    pub fn sample_day<R: Rng + ?Sized>(&self, rng: &mut R) -> DayRealization {
        let customers = self.poisson.map_or(0, |p| p.sample(rng) as usize);
        let arrivals: Vec<f64> = (0..customers).map(|_| self.arrival_time(rng)).collect();
        // Services are i.i.d., so tied arrivals at the atom need no explicit
        // shuffling: any assignment order gives the same law.
        let services: Vec<f64> = (0..customers).map(|_| self.service.sample(rng)).collect();
        DayRealization::from_services(arrivals, &services)
    }
}

/// Draws a single day.
pub fn sample_day<R: Rng + ?Sized>(
    eq: &EquilibriumDistribution,
    params: &ModelParams,
    rng: &mut R,
) -> Result<DayRealization> {
    Ok(ArrivalSampler::new(eq, params)?.sample_day(rng))
}

/// Queue lengths of `day` at the schedule.
pub fn observe(day: &DayRealization, schedule: &SamplingSchedule) -> Vec<u32> {
    let mut counts = Vec::with_capacity(schedule.len());
    observe_into(day, schedule.times(), &mut counts);
    counts
}

fn observe_into(day: &DayRealization, times: &[f64], counts: &mut Vec<u32>) {
    counts.clear();
    let (mut arrived, mut departed) = (0usize, 0usize);
    for &t in times {
        while arrived < day.arrivals.len() && day.arrivals[arrived] <= t {
            arrived += 1;
        }
        while departed < day.departures.len() && day.departures[departed] <= t {
            departed += 1;
        }
        counts.push((arrived - departed) as u32);
    }
}

/// RNG for day `day` of a run keyed by `seed`.
pub fn day_rng(seed: u64, day: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(day);
    rng
}

/// Simulates `n` days and hands each day's counts to `sink` in day order.
pub fn simulate_with<F>(
    eq: &EquilibriumDistribution,
    params: &ModelParams,
    schedule: &SamplingSchedule,
    n: usize,
    seed: u64,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(&[u32]),
{
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one day".into()));
    }
    let sampler = ArrivalSampler::new(eq, params)?;
    let mut counts = Vec::with_capacity(schedule.len());
    for day in 0..n {
        let mut rng = day_rng(seed, day as u64);
        let realization = sampler.sample_day(&mut rng);
        observe_into(&realization, schedule.times(), &mut counts);
        sink(&counts);
    }
    Ok(())
}

/// `n` independent days observed at `schedule`.
pub fn simulate(
    eq: &EquilibriumDistribution,
    params: &ModelParams,
    schedule: &SamplingSchedule,
    n: usize,
    seed: u64,
) -> Result<ObservationSet> {
    let mut counts = Vec::with_capacity(n);
    simulate_with(eq, params, schedule, n, seed, |row| {
        counts.push(row.to_vec())
    })?;
    Ok(ObservationSet {
        schedule: schedule.clone(),
        counts,
    })
}

/// Queue-length observations: one row per day, one column per sampling
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub schedule: SamplingSchedule,
    pub counts: Vec<Vec<u32>>,
}

impl ObservationSet {
    pub fn new(schedule: SamplingSchedule, counts: Vec<Vec<u32>>) -> Result<Self> {
        if let Some(row) = counts.iter().find(|row| row.len() != schedule.len()) {
            return Err(Error::DimensionMismatch {
                expected: schedule.len(),
                found: row.len(),
            });
        }
        Ok(ObservationSet { schedule, counts })
    }

    pub fn days(&self) -> usize {
        self.counts.len()
    }

    pub fn times(&self) -> &[f64] {
        self.schedule.times()
    }

    /// Header of sampling times, then one row of counts per day.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = self.times().iter().map(|t| t.to_string()).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for row in &self.counts {
            line.clear();
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&c.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty observation file".into()))?
            .map_err(|e| Error::Format(e.to_string()))?;
        let times = header
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad sampling time {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let schedule = SamplingSchedule::new(times)?;
        let mut counts = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Format(format!("line {}: bad count {s:?}", lineno + 2)))
                })
                .collect::<Result<Vec<_>>>()?;
            counts.push(row);
        }
        if counts.is_empty() {
            return Err(Error::InvalidObservations("no days recorded".into()));
        }
        Self::new(schedule, counts)
    }
}
