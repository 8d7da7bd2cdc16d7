//! Discrete-time propagation of the queue-length distribution.
//!
//! `Q(t)` is the number of customers in the system at time `t`, including
//! the one in service. On the grid `{rδ}` the distribution `P_0..P_K` moves
//! by one explicit Euler step of the forward equations per slot:
//!
//! ```text
//! P_0 += δ (μ P_1 - λf P_0)
//! P_k += δ (λf P_{k-1} + μ P_{k+1} - (λf + μ) P_k)     1 <= k < K
//! P_K  = 1 - Σ_{k<K} P_k
//! ```
//!
//! Before time zero (early-birds game only) the server is idle and the
//! arrival rate is constant, so the count is advanced exactly as a Poisson
//! increment instead.

use std::io::Write;

use crate::equilibrium::EquilibriumDistribution;
use crate::error::{Error, Result};
use crate::model::{time_to_slot, ModelParams};

/// Propagation stops once the system is empty with this probability.
pub const EMPTY_THRESHOLD: f64 = 1.0 - 1e-8;

/// Source states with less mass than this are skipped when computing
/// cross-time covariances.
pub const COVARIANCE_SKIP: f64 = 1e-12;

const RENORMALIZE_LOG_LEVEL: f64 = 1e-9;

/// Distribution of the queue length at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    pub time: f64,
    pub probs: Vec<f64>,
}

impl QueueState {
    /// Queue of exactly `k` customers, truncated at `truncation`.
    pub fn point(time: f64, k: usize, truncation: usize) -> Self {
        let mut probs = vec![0.0; truncation + 1];
        probs[k.min(truncation)] = 1.0;
        QueueState { time, probs }
    }

    /// Poisson(`mean`) with the tail beyond `truncation` folded into the cap.
    pub fn poisson(time: f64, mean: f64, truncation: usize) -> Self {
        QueueState {
            time,
            probs: poisson_probs(mean, truncation),
        }
    }

    pub fn truncation(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn p0(&self) -> f64 {
        self.probs[0]
    }

    pub fn mean(&self) -> f64 {
        mean_of(&self.probs)
    }

    pub fn variance(&self) -> f64 {
        variance_of(&self.probs)
    }
}

pub(crate) fn mean_of(probs: &[f64]) -> f64 {
    probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

pub(crate) fn variance_of(probs: &[f64]) -> f64 {
    let (m1, m2) = probs
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(m1, m2), (k, p)| {
            let k = k as f64;
            (m1 + k * p, m2 + k * k * p)
        });
    (m2 - m1 * m1).max(0.0)
}

/// Poisson(`mean`) pmf on `0..=truncation`, remaining tail added to the last
/// entry.
pub fn poisson_probs(mean: f64, truncation: usize) -> Vec<f64> {
    let mut probs = Vec::with_capacity(truncation + 1);
    if mean <= 0.0 {
        probs.push(1.0);
        probs.resize(truncation + 1, 0.0);
        return probs;
    }
    let ln_mean = mean.ln();
    let mut ln_pmf = -mean;
    let mut total = 0.0;
    for k in 0..truncation {
        if k > 0 {
            ln_pmf += ln_mean - (k as f64).ln();
        }
        let p = ln_pmf.exp();
        total += p;
        probs.push(p);
    }
    probs.push((1.0 - total).max(0.0));
    probs
}

/// One explicit Euler step of length `delta`, in place.
///
/// The cap entry is set by complementarity, negatives are clamped and the
/// vector renormalized.
pub(crate) fn euler_step(probs: &mut [f64], arrival_rate: f64, mu: f64, delta: f64) -> Result<()> {
    let courant = delta * (arrival_rate + mu);
    if courant >= 1.0 {
        return Err(Error::StepTooCoarse(courant));
    }
    let cap = probs.len() - 1;
    let inflow = delta * arrival_rate;
    let service = delta * mu;
    let mut below = 0.0;
    let mut partial = 0.0;
    for k in 0..cap {
        let here = probs[k];
        let above = probs[k + 1];
        let next = if k == 0 {
            here + service * above - inflow * here
        } else {
            here + inflow * below + service * above - (inflow + service) * here
        };
        below = here;
        probs[k] = next;
        partial += next;
    }
    probs[cap] = 1.0 - partial;
    sanitize(probs);
    Ok(())
}

fn sanitize(probs: &mut [f64]) {
    let mut clamped = 0.0;
    for p in probs.iter_mut() {
        if *p < 0.0 {
            clamped -= *p;
            *p = 0.0;
        } else if *p > 1.0 {
            clamped += *p - 1.0;
            *p = 1.0;
        }
    }
    if clamped > 0.0 {
        let total: f64 = probs.iter().sum();
        if clamped > RENORMALIZE_LOG_LEVEL {
            log::debug!("clamped {clamped:e} of probability mass, renormalizing");
        }
        probs.iter_mut().for_each(|p| *p /= total);
    }
}

/// Advances `state` by one grid step with arrival rate `λf(t)`.
pub fn step(state: &QueueState, arrival_rate: f64, params: &ModelParams) -> Result<QueueState> {
    if arrival_rate.is_nan() || arrival_rate < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "arrival rate must be nonnegative, got {arrival_rate}"
        )));
    }
    let mut probs = state.probs.clone();
    euler_step(&mut probs, arrival_rate, params.mu(), params.delta())?;
    Ok(QueueState {
        time: state.time + params.delta(),
        probs,
    })
}

/// Poisson increment of `mean` applied to `probs`, tail folded into the cap.
fn add_poisson_arrivals(probs: &mut [f64], mean: f64) {
    if mean <= 0.0 {
        return;
    }
    let cap = probs.len() - 1;
    let increments = poisson_probs(mean, cap);
    let source = probs.to_vec();
    probs.iter_mut().for_each(|p| *p = 0.0);
    for (j, &pj) in source.iter().enumerate() {
        if pj == 0.0 {
            continue;
        }
        let mut spilled = pj;
        for (i, &pi) in increments.iter().enumerate().take(cap - j) {
            probs[j + i] += pj * pi;
            spilled -= pj * pi;
        }
        probs[cap] += spilled.max(0.0);
    }
}

/// Moves `probs` from grid slot `from` to slot `to` under the arrival
/// profile of `eq`.
pub(crate) fn advance(
    probs: &mut [f64],
    from: i64,
    to: i64,
    eq: &EquilibriumDistribution,
    params: &ModelParams,
) -> Result<()> {
    let delta = params.delta();
    let mut slot = from;
    if slot < 0 && to > slot {
        // Idle server before the opening: the count only grows, by a Poisson
        // number with mean ∫ λf over the elapsed time.
        let stop = to.min(0);
        let mean = eq.pre_zero_rate(params) * (stop - slot) as f64 * delta;
        add_poisson_arrivals(probs, mean);
        slot = stop;
    }
    let mu = params.mu();
    let lambda = params.lambda();
    while slot < to {
        euler_step(probs, lambda * eq.density_at_slot(slot), mu, delta)?;
        slot += 1;
    }
    Ok(())
}

/// Queue-length distributions on consecutive grid slots.
#[derive(Debug, Clone)]
pub struct QueueSeries {
    delta: f64,
    first_slot: i64,
    states: Vec<Vec<f64>>,
}

impl QueueSeries {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first_slot(&self) -> i64 {
        self.first_slot
    }

    pub fn last_slot(&self) -> i64 {
        self.first_slot + self.states.len() as i64 - 1
    }

    pub fn time_of(&self, index: usize) -> f64 {
        (self.first_slot + index as i64) as f64 * self.delta
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|i| self.time_of(i)).collect()
    }

    pub fn probs(&self, index: usize) -> &[f64] {
        &self.states[index]
    }

    /// Distribution at grid slot `slot`.
    pub fn at_slot(&self, slot: i64) -> Option<&[f64]> {
        let index = slot - self.first_slot;
        if index < 0 {
            return None;
        }
        self.states.get(index as usize).map(Vec::as_slice)
    }

    /// Distribution at the grid time nearest `t`.
    pub fn at_time(&self, t: f64) -> Result<&[f64]> {
        self.at_slot(time_to_slot(t, self.delta))
            .ok_or(Error::TimeOutOfRange(t))
    }

    pub fn mean_at(&self, t: f64) -> Result<f64> {
        self.at_time(t).map(mean_of)
    }

    pub fn variance_at(&self, t: f64) -> Result<f64> {
        self.at_time(t).map(variance_of)
    }

    pub fn state(&self, index: usize) -> QueueState {
        QueueState {
            time: self.time_of(index),
            probs: self.states[index].clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = QueueState> + '_ {
        (0..self.states.len()).map(|i| self.state(i))
    }

    /// Writes `time,p0,mean,var` per grid step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,p0,mean,var")?;
        for (i, probs) in self.states.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                self.time_of(i),
                probs[0],
                mean_of(probs),
                variance_of(probs)
            )?;
        }
        Ok(())
    }
}

/// Queue-length distributions under `eq`, from the first support time until
/// the system is empty (P₀ > 1 − 10⁻⁸ after the last arrival) or the horizon.
pub fn propagate(eq: &EquilibriumDistribution, params: &ModelParams) -> Result<QueueSeries> {
    let delta = params.delta();
    let truncation = params.truncation();
    let horizon_slot = params.horizon_slot();
    let mut states = Vec::new();

    let first_slot = eq.first_slot();
    for slot in first_slot..0 {
        let elapsed = slot as f64 * delta + eq.pre_width;
        states.push(poisson_probs(
            eq.pre_zero_rate(params) * elapsed.max(0.0),
            truncation,
        ));
    }
    let mut probs = poisson_probs(params.lambda() * eq.mass_at_zero(params), truncation);
    states.push(probs.clone());

    let last_arrival_slot = eq.last_density_slot();
    let mu = params.mu();
    let lambda = params.lambda();
    let mut slot = 0i64;
    while slot < horizon_slot {
        if slot > last_arrival_slot && probs[0] > EMPTY_THRESHOLD {
            break;
        }
        euler_step(&mut probs, lambda * eq.density_at_slot(slot), mu, delta)?;
        slot += 1;
        states.push(probs.clone());
    }
    Ok(QueueSeries {
        delta,
        first_slot,
        states,
    })
}

/// Per-slot mean and variance of the queue length.
pub fn moments(series: &QueueSeries) -> (Vec<f64>, Vec<f64>) {
    series
        .states
        .iter()
        .map(|p| (mean_of(p), variance_of(p)))
        .unzip()
}

/// `Cov[Q(s), Q(t)]` for grid times `s <= t`.
///
/// `E[Q(s)Q(t)]` is assembled from the conditional distributions obtained by
/// re-propagating each deterministic state `Q(s) = k` up to `t`.
pub fn covariance(
    eq: &EquilibriumDistribution,
    params: &ModelParams,
    s: f64,
    t: f64,
    series: &QueueSeries,
) -> Result<f64> {
    if s > t {
        return Err(Error::UnorderedTimes { s, t });
    }
    let delta = params.delta();
    let (s_slot, t_slot) = (time_to_slot(s, delta), time_to_slot(t, delta));
    let source = series.at_slot(s_slot).ok_or(Error::TimeOutOfRange(s))?;
    let target = series.at_slot(t_slot).ok_or(Error::TimeOutOfRange(t))?;
    if s_slot == t_slot {
        return Ok(variance_of(source));
    }
    let cross = conditional_means(eq, params, source, s_slot, &[t_slot])?[0];
    Ok(cross - mean_of(source) * mean_of(target))
}

/// `E[Q(s) Q(t_j)]` for each target slot, via conditional propagation from
/// every state `k` at `s` with non-negligible mass.
fn conditional_means(
    eq: &EquilibriumDistribution,
    params: &ModelParams,
    source: &[f64],
    s_slot: i64,
    targets: &[i64],
) -> Result<Vec<f64>> {
    let truncation = source.len() - 1;
    let mut cross = vec![0.0; targets.len()];
    let mut probs = vec![0.0; truncation + 1];
    for (k, &pk) in source.iter().enumerate().skip(1) {
        if pk <= COVARIANCE_SKIP {
            continue;
        }
        probs.iter_mut().for_each(|p| *p = 0.0);
        probs[k] = 1.0;
        let mut at = s_slot;
        for (j, &target) in targets.iter().enumerate() {
            advance(&mut probs, at, target, eq, params)?;
            at = target;
            cross[j] += k as f64 * pk * mean_of(&probs);
        }
    }
    Ok(cross)
}

/// Means, variances and covariance matrix of the queue length at a set of
/// grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Row-major, `times.len()` squared.
    pub covariance: Vec<Vec<f64>>,
}

impl MomentSummary {
    pub fn dim(&self) -> usize {
        self.times.len()
    }

    /// Sub-summary for the given times, matched to the nearest stored time.
    pub fn restrict(&self, times: &[f64]) -> Result<MomentSummary> {
        let scale = self
            .times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
            .min(1.0);
        let index: Vec<usize> = times
            .iter()
            .map(|&t| {
                self.times
                    .iter()
                    .position(|&u| (u - t).abs() <= 1e-9 * scale.max(1e-9) + 1e-12)
                    .ok_or(Error::TimeOutOfRange(t))
            })
            .collect::<Result<_>>()?;
        Ok(MomentSummary {
            times: index.iter().map(|&i| self.times[i]).collect(),
            mean: index.iter().map(|&i| self.mean[i]).collect(),
            variance: index.iter().map(|&i| self.variance[i]).collect(),
            covariance: index
                .iter()
                .map(|&i| index.iter().map(|&j| self.covariance[i][j]).collect())
                .collect(),
        })
    }
}

/// Propagates `eq` and fills a [`MomentSummary`] at `times`.
pub fn covariance_matrix(
    eq: &EquilibriumDistribution,
    params: &ModelParams,
    times: &[f64],
) -> Result<MomentSummary> {
    let series = propagate(eq, params)?;
    covariance_matrix_from(eq, params, times, &series)
}

/// As [`covariance_matrix`], reusing an already propagated series.
pub fn covariance_matrix_from(
    eq: &EquilibriumDistribution,
    params: &ModelParams,
    times: &[f64],
    series: &QueueSeries,
) -> Result<MomentSummary> {
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSchedule(
            "covariance times must be strictly increasing".into(),
        ));
    }
    let delta = params.delta();
    let slots: Vec<i64> = times.iter().map(|&t| time_to_slot(t, delta)).collect();
    let dists: Vec<&[f64]> = slots
        .iter()
        .zip(times)
        .map(|(&slot, &t)| series.at_slot(slot).ok_or(Error::TimeOutOfRange(t)))
        .collect::<Result<_>>()?;
    let mean: Vec<f64> = dists.iter().map(|p| mean_of(p)).collect();
    let variance: Vec<f64> = dists.iter().map(|p| variance_of(p)).collect();

    let dim = times.len();
    let mut covariance = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        covariance[i][i] = variance[i];
        if i + 1 == dim {
            continue;
        }
        let cross = conditional_means(eq, params, dists[i], slots[i], &slots[i + 1..])?;
        for (offset, value) in cross.into_iter().enumerate() {
            let j = i + 1 + offset;
            let rho = value - mean[i] * mean[j];
            covariance[i][j] = rho;
            covariance[j][i] = rho;
        }
    }
    Ok(MomentSummary {
        times: times.to_vec(),
        mean,
        variance,
        covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(5.0, 1.0, 2.0, 0.2, 20.0).unwrap()
    }

    /// Row-stochastic one-step matrix built directly from the forward
    /// equations, with the cap row closing the chain.
    fn transition_matrix(k_max: usize, rate: f64, mu: f64, delta: f64) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; k_max + 1]; k_max + 1];
        for from in 0..=k_max {
            let up = if from < k_max { rate * delta } else { 0.0 };
            let down = if from > 0 { mu * delta } else { 0.0 };
            if from < k_max {
                m[from][from + 1] = up;
            }
            if from > 0 {
                m[from][from - 1] = down;
            }
            m[from][from] = 1.0 - up - down;
        }
        m
    }

    #[test]
    fn empty_queue_without_arrivals_is_absorbing() {
        let p = params();
        let s = QueueState::point(0.0, 0, p.truncation());
        let next = step(&s, 0.0, &p).unwrap();
        assert_eq!(next.probs, s.probs);
        assert!((next.time - 0.001).abs() < 1e-15);
    }

    #[test]
    fn single_customer_single_step() {
        let p = params();
        let s = QueueState::point(0.0, 1, p.truncation());
        let next = step(&s, 0.0, &p).unwrap();
        assert!((next.probs[0] - 0.001).abs() < 1e-15);
        assert!((next.probs[1] - 0.999).abs() < 1e-15);
        assert!(next.probs[2..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn step_matches_transition_matrix() {
        let p = params();
        let rate = 5.0 * 0.08;
        let s = QueueState::poisson(0.0, 5.0 * 0.45, p.truncation());
        let next = step(&s, rate, &p).unwrap();
        let m = transition_matrix(p.truncation(), rate, 1.0, 0.001);
        for (to, &got) in next.probs.iter().enumerate() {
            let expected: f64 = s.probs.iter().zip(&m).map(|(q, row)| q * row[to]).sum();
            assert!((got - expected).abs() < 1e-14, "state {to}");
        }
    }

    #[test]
    fn coarse_step_is_rejected() {
        let p = ModelParams::builder(5.0, 1.0, 2.0, 0.2)
            .delta(0.5)
            .build()
            .unwrap();
        let s = QueueState::point(0.0, 1, p.truncation());
        assert!(matches!(step(&s, 1.5, &p), Err(Error::StepTooCoarse(_))));
        assert!(step(&s, 0.5, &p).is_ok());
    }

    #[test]
    fn moments_of_simple_states() {
        let e0 = QueueState::point(0.0, 0, 4);
        assert_eq!((e0.mean(), e0.variance()), (0.0, 0.0));
        let bern = QueueState {
            time: 0.0,
            probs: vec![0.5, 0.5, 0.0, 0.0],
        };
        assert_eq!(bern.mean(), 0.5);
        assert_eq!(bern.variance(), 0.25);
    }

    #[test]
    fn poisson_probs_sum_to_one() {
        let probs = poisson_probs(3.2, 12);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((probs[0] - (-3.2f64).exp()).abs() < 1e-15);
        assert_eq!(poisson_probs(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn poisson_increment_convolves() {
        let mut probs = vec![0.0; 30];
        probs[2] = 1.0;
        add_poisson_arrivals(&mut probs, 1.5);
        let direct = poisson_probs(1.5, 27);
        for i in 0..27 {
            assert!((probs[i + 2] - direct[i]).abs() < 1e-15);
        }
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pure_death_keeps_emptying() {
        let p = params();
        let mut state = QueueState::poisson(0.0, 5.0, p.truncation());
        let mut last = state.p0();
        for _ in 0..5000 {
            state = step(&state, 0.0, &p).unwrap();
            assert!(state.p0() >= last);
            assert!((state.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            last = state.p0();
        }
    }
}
