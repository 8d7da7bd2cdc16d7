//! Method-of-moments estimation of θ from queue-length observations.
//!
//! In equilibrium the expected cost is the same at every time of the
//! support, so on `[t_a, t_b]` the mean queue length is a straight line with
//! slope `−θμ` whose extension hits `q(0)/2` at zero. Any two sampling times
//! inside the support give an estimate of θ from the sample means; the
//! estimator averages the estimates obtained by pairing each time with the
//! one farthest from it.
//!
//! Sampling indices are zero-based throughout this module.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::MomentSummary;
use crate::error::{Error, Result};
use crate::simulator::ObservationSet;

/// Sufficient statistics of an observation set: column sums and the
/// extreme increase positions over all days.
///
/// Filling it day by day avoids holding an `n × m` matrix for fine
/// schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStats {
    times: Vec<f64>,
    days: usize,
    sums: Vec<u64>,
    first_increase: Option<usize>,
    last_increase: Option<usize>,
}

impl ObservationStats {
    pub fn new(times: &[f64]) -> Self {
        ObservationStats {
            times: times.to_vec(),
            days: 0,
            sums: vec![0; times.len()],
            first_increase: None,
            last_increase: None,
        }
    }

    pub fn from_observations(obs: &ObservationSet) -> Self {
        let mut stats = Self::new(obs.times());
        obs.counts.iter().for_each(|row| stats.push_day(row));
        stats
    }

    /// Adds one day of counts, ordered as the sampling times.
    pub fn push_day(&mut self, counts: &[u32]) {
        debug_assert_eq!(counts.len(), self.sums.len());
        for (sum, &c) in self.sums.iter_mut().zip(counts) {
            *sum += u64::from(c);
        }
        // An increase between i-1 and i makes i a candidate start and i-1 a
        // candidate end of the observed arrival interval. When the schedule
        // opens at time 0 the atom drains from there, so the first gap is
        // left out of the scan.
        let from = if self.times.first() == Some(&0.0) {
            2
        } else {
            1
        };
        let increases = || (from..counts.len()).filter(|&i| counts[i] > counts[i - 1]);
        if let Some(i) = increases().next() {
            self.first_increase = Some(self.first_increase.map_or(i, |a| a.min(i)));
        }
        if let Some(i) = increases().next_back() {
            self.last_increase = Some(self.last_increase.map_or(i, |b| b.max(i)));
        }
        self.days += 1;
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Column means `q̂_n(t_i)`.
    pub fn means(&self) -> Vec<f64> {
        let n = self.days.max(1) as f64;
        self.sums.iter().map(|&s| s as f64 / n).collect()
    }
}

/// Column means of the count matrix.
pub fn sample_means(obs: &ObservationSet) -> Vec<f64> {
    ObservationStats::from_observations(obs).means()
}

/// Why θ could not be estimated from a data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimationFailure {
    /// No day shows an increase between consecutive sampling times.
    NoIncreaseObserved,
    /// The first observed increase comes after the last one.
    EmptySupport { a_hat_time: f64, b_hat_time: f64 },
    /// Fewer than two usable estimation times.
    TooFewPoints { count: usize },
}

impl fmt::Display for EstimationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimationFailure::NoIncreaseObserved => f.write_str("no increase observed"),
            EstimationFailure::EmptySupport {
                a_hat_time,
                b_hat_time,
            } => write!(
                f,
                "estimated support is empty ({a_hat_time} > {b_hat_time})"
            ),
            EstimationFailure::TooFewPoints { count } => {
                write!(
                    f,
                    "only {count} estimation time(s) in the estimated support"
                )
            }
        }
    }
}

/// Estimated boundaries of the arrival interval on the sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportEstimate {
    /// First index at which some day shows an increase from the previous
    /// sampling time.
    pub a_hat_index: usize,
    /// Last index from which some day shows an increase to the next
    /// sampling time.
    pub b_hat_index: usize,
    pub a_hat_time: f64,
    pub b_hat_time: f64,
    /// First sampling index at or after the true start (oracle mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_tilde_index: Option<usize>,
    /// Last sampling index at or before the true end (oracle mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_tilde_index: Option<usize>,
}

impl SupportEstimate {
    /// Fills the grid-truth indices from known support boundaries.
    pub fn with_grid_truth(mut self, times: &[f64], t_a: f64, t_b: f64) -> Self {
        self.a_tilde_index = times.iter().position(|&t| t >= t_a);
        self.b_tilde_index = times.iter().rposition(|&t| t <= t_b);
        self
    }
}

pub fn estimate_support(
    obs: &ObservationSet,
) -> std::result::Result<SupportEstimate, EstimationFailure> {
    support_from_stats(&ObservationStats::from_observations(obs))
}

pub fn support_from_stats(
    stats: &ObservationStats,
) -> std::result::Result<SupportEstimate, EstimationFailure> {
    match (stats.first_increase, stats.last_increase) {
        (Some(first), Some(last)) => Ok(SupportEstimate {
            a_hat_index: first,
            b_hat_index: last - 1,
            a_hat_time: stats.times[first],
            b_hat_time: stats.times[last - 1],
            a_tilde_index: None,
            b_tilde_index: None,
        }),
        _ => Err(EstimationFailure::NoIncreaseObserved),
    }
}

/// Element of `candidates` (sorted) farthest from `t`; ties go to the
/// smaller time.
pub fn farthest_partner(t: f64, candidates: &[f64]) -> f64 {
    let first = candidates[0];
    let last = candidates[candidates.len() - 1];
    if (t - first).abs() >= (last - t).abs() {
        first
    } else {
        last
    }
}

/// θ from the sample means at two times in the support.
///
/// When one of the times is zero the atom term `q̂(0)/2` is used.
pub fn pair_estimate(t_i: f64, q_i: f64, t_j: f64, q_j: f64, mu: f64) -> Result<f64> {
    if t_i == t_j {
        return Err(Error::CoincidentTimes(t_i));
    }
    Ok(if t_j == 0.0 {
        -(q_i - q_j / 2.0) / (mu * t_i)
    } else if t_i == 0.0 {
        -(q_j - q_i / 2.0) / (mu * t_j)
    } else {
        -(q_i - q_j) / (mu * (t_i - t_j))
    })
}

/// θ from two times when customers may arrive before the opening.
///
/// Before zero the mean grows with slope `(1−θ)μ`, after zero it falls with
/// slope `−θμ`; a pair straddling zero mixes both.
pub fn pair_estimate_early_birds(t_i: f64, q_i: f64, t_j: f64, q_j: f64, mu: f64) -> Result<f64> {
    if t_i == t_j {
        return Err(Error::CoincidentTimes(t_i));
    }
    let ((s, qs), (t, qt)) = if t_i < t_j {
        ((t_i, q_i), (t_j, q_j))
    } else {
        ((t_j, q_j), (t_i, q_i))
    };
    let slope = (qs - qt) / (mu * (s - t));
    Ok(if t <= 0.0 {
        1.0 - slope
    } else if s <= 0.0 {
        s / (s - t) - slope
    } else {
        -slope
    })
}

/// Which pairwise formula applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairRule {
    /// No arrivals before zero; zero is the atom.
    Atom,
    /// Arrivals before zero allowed.
    EarlyBirds,
}

impl PairRule {
    fn estimate(self, t_i: f64, q_i: f64, t_j: f64, q_j: f64, mu: f64) -> Result<f64> {
        match self {
            PairRule::Atom => pair_estimate(t_i, q_i, t_j, q_j, mu),
            PairRule::EarlyBirds => pair_estimate_early_birds(t_i, q_i, t_j, q_j, mu),
        }
    }
}

/// One term of the mean estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub time: f64,
    pub partner: f64,
    pub estimate: f64,
}

/// Mean over `times` of the pair estimate with the farthest partner.
///
/// `times` must be sorted, distinct and at least two long.
pub fn theta_from_means(
    times: &[f64],
    means: &[f64],
    mu: f64,
    rule: PairRule,
) -> Result<(f64, Vec<PairEstimate>)> {
    if times.len() != means.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            found: means.len(),
        });
    }
    if times.len() < 2 {
        return Err(Error::InvalidObservations(
            "need at least two estimation times".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let partner = farthest_partner(t, times);
        let j = if partner == times[0] {
            0
        } else {
            times.len() - 1
        };
        pairs.push(PairEstimate {
            time: t,
            partner,
            estimate: rule.estimate(t, means[i], partner, means[j], mu)?,
        });
    }
    let theta = pairs.iter().map(|p| p.estimate).sum::<f64>() / pairs.len() as f64;
    Ok((theta, pairs))
}

/// Coefficients writing θ̂ as a linear combination `Σ g_i q̂(t_i)` of the
/// sample means, for estimation times that exclude zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub times: Vec<f64>,
    /// `k_i = |T|(t_i − d(t_i))μ`
    pub k: Vec<f64>,
    /// `g_i = Σ_{j≠i} 1{d(t_j)=t_i}/k_j − 1/k_i`
    pub g: Vec<f64>,
}

impl Weights {
    pub fn new(times: &[f64], mu: f64) -> Self {
        let size = times.len() as f64;
        let partners: Vec<usize> = times
            .iter()
            .map(|&t| {
                if farthest_partner(t, times) == times[0] {
                    0
                } else {
                    times.len() - 1
                }
            })
            .collect();
        let k: Vec<f64> = times
            .iter()
            .zip(&partners)
            .map(|(&t, &j)| size * (t - times[j]) * mu)
            .collect();
        let mut g: Vec<f64> = k.iter().map(|&ki| -1.0 / ki).collect();
        for (j, &partner) in partners.iter().enumerate() {
            if partner != j {
                g[partner] += 1.0 / k[j];
            }
        }
        Weights {
            times: times.to_vec(),
            k,
            g,
        }
    }

    /// `Σ g_i q_i`.
    pub fn combine(&self, means: &[f64]) -> f64 {
        self.g.iter().zip(means).map(|(g, q)| g * q).sum()
    }
}

/// `g Σ gᵀ` written as `Σ g_i² v_i + 2 Σ_{i<j} g_i g_j ρ_ij`.
pub fn asymptotic_variance(g: &[f64], sigma: &MomentSummary) -> Result<f64> {
    if sigma.dim() != g.len() || sigma.covariance.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            found: sigma.dim(),
        });
    }
    let mut total = 0.0;
    for i in 0..g.len() {
        total += g[i] * g[i] * sigma.variance[i];
        for j in i + 1..g.len() {
            total += 2.0 * g[i] * g[j] * sigma.covariance[i][j];
        }
    }
    Ok(total.max(0.0))
}

/// Outcome of one estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta_hat: Option<f64>,
    pub support: Option<SupportEstimate>,
    pub estimation_times: Vec<f64>,
    pub pairs: Vec<PairEstimate>,
    /// Over the positive estimation times only.
    pub weights: Option<Weights>,
    pub asymptotic_variance: Option<f64>,
    pub days: usize,
    pub failure: Option<EstimationFailure>,
}

impl EstimationResult {
    fn failed(days: usize, support: Option<SupportEstimate>, failure: EstimationFailure) -> Self {
        EstimationResult {
            theta_hat: None,
            support,
            estimation_times: Vec::new(),
            pairs: Vec::new(),
            weights: None,
            asymptotic_variance: None,
            days,
            failure: Some(failure),
        }
    }

    pub fn success(&self) -> bool {
        self.failure.is_none()
    }

    /// Fills `asymptotic_variance = g Σ gᵀ` from a summary covering the
    /// weight times.
    pub fn attach_variance(&mut self, summary: &MomentSummary) -> Result<()> {
        if let Some(weights) = &self.weights {
            let sigma = summary.restrict(&weights.times)?;
            self.asymptotic_variance = Some(asymptotic_variance(&weights.g, &sigma)?);
        }
        Ok(())
    }

    /// 95% normal interval `θ̂ ± 1.96 sqrt(gΣgᵀ/n)`.
    pub fn confidence_interval(&self) -> Option<(f64, f64)> {
        let theta = self.theta_hat?;
        let var = self.asymptotic_variance?;
        let half = 1.96 * (var / self.days as f64).sqrt();
        Some((theta - half, theta + half))
    }
}

/// Estimator for the game without early birds (with or without closing
/// time).
///
/// With `include_zero` the sampling time zero, when present, joins the
/// estimation times and is paired through the atom formula; the weights are
/// always computed over the positive times.
pub fn mean_estimator(obs: &ObservationSet, mu: f64, include_zero: bool) -> EstimationResult {
    mean_estimator_from_stats(&ObservationStats::from_observations(obs), mu, include_zero)
}

pub fn mean_estimator_from_stats(
    stats: &ObservationStats,
    mu: f64,
    include_zero: bool,
) -> EstimationResult {
    estimate(stats, mu, include_zero, PairRule::Atom)
}

/// Estimator for the game with early birds.
pub fn estimator_early_birds(obs: &ObservationSet, mu: f64) -> EstimationResult {
    estimator_early_birds_from_stats(&ObservationStats::from_observations(obs), mu)
}

pub fn estimator_early_birds_from_stats(stats: &ObservationStats, mu: f64) -> EstimationResult {
    estimate(stats, mu, false, PairRule::EarlyBirds)
}

fn estimate(
    stats: &ObservationStats,
    mu: f64,
    include_zero: bool,
    rule: PairRule,
) -> EstimationResult {
    let days = stats.days();
    let support = match support_from_stats(stats) {
        Ok(support) => support,
        Err(failure) => return EstimationResult::failed(days, None, failure),
    };
    if support.a_hat_index > support.b_hat_index {
        return EstimationResult::failed(
            days,
            Some(support),
            EstimationFailure::EmptySupport {
                a_hat_time: support.a_hat_time,
                b_hat_time: support.b_hat_time,
            },
        );
    }
    let times = stats.times();
    let mut indices: Vec<usize> = (support.a_hat_index..=support.b_hat_index).collect();
    if include_zero && rule == PairRule::Atom {
        if let Some(zero) = times.iter().position(|&t| t == 0.0) {
            if !indices.contains(&zero) {
                indices.insert(0, zero);
                indices.sort_unstable();
            }
        }
    }
    if indices.len() < 2 {
        return EstimationResult::failed(
            days,
            Some(support),
            EstimationFailure::TooFewPoints {
                count: indices.len(),
            },
        );
    }

    let all_means = stats.means();
    let est_times: Vec<f64> = indices.iter().map(|&i| times[i]).collect();
    let est_means: Vec<f64> = indices.iter().map(|&i| all_means[i]).collect();
    let (theta, pairs) = theta_from_means(&est_times, &est_means, mu, rule)
        .expect("estimation times are distinct and at least two");

    let weight_times: Vec<f64> = match rule {
        PairRule::Atom => est_times.iter().copied().filter(|&t| t > 0.0).collect(),
        PairRule::EarlyBirds => est_times.clone(),
    };
    let weights = (weight_times.len() >= 2).then(|| Weights::new(&weight_times, mu));

    EstimationResult {
        theta_hat: Some(theta),
        support: Some(support),
        estimation_times: est_times,
        pairs,
        weights,
        asymptotic_variance: None,
        days,
        failure: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::SamplingSchedule;

    fn obs(times: Vec<f64>, rows: Vec<Vec<u32>>) -> ObservationSet {
        ObservationSet::new(SamplingSchedule::new(times).unwrap(), rows).unwrap()
    }

    #[test]
    fn sample_means_basic() {
        let o = obs(vec![0.0, 1.0, 2.0], vec![vec![3, 1, 0]]);
        assert_eq!(sample_means(&o), vec![3.0, 1.0, 0.0]);
        let o = obs(vec![0.0, 1.0, 2.0], vec![vec![0, 0, 0]; 4]);
        assert_eq!(sample_means(&o), vec![0.0; 3]);
        let o = obs(vec![0.0, 1.0, 2.0], vec![vec![2, 1, 0], vec![4, 0, 1]]);
        assert_eq!(sample_means(&o), vec![3.0, 0.5, 0.5]);
    }

    #[test]
    fn support_single_day() {
        // One-based (â, b̂) = (3, 3) in the usual notation.
        let o = obs(
            (0..6).map(f64::from).collect(),
            vec![vec![0, 0, 1, 2, 1, 0]],
        );
        let s = estimate_support(&o).unwrap();
        assert_eq!((s.a_hat_index, s.b_hat_index), (2, 2));
        assert_eq!((s.a_hat_time, s.b_hat_time), (2.0, 2.0));
    }

    #[test]
    fn support_takes_extremes_over_days() {
        let o = obs(
            (1..7).map(f64::from).collect(),
            vec![
                vec![0, 0, 0, 1, 0, 0],
                vec![0, 1, 0, 0, 0, 0],
                vec![2, 1, 0, 0, 1, 0],
            ],
        );
        let s = estimate_support(&o).unwrap();
        assert_eq!((s.a_hat_index, s.b_hat_index), (1, 3));
    }

    #[test]
    fn increase_out_of_time_zero_is_ignored() {
        let o = obs(vec![0.0, 5.0, 10.0, 15.0, 20.0], vec![vec![0, 2, 1, 0, 0]]);
        assert_eq!(
            estimate_support(&o),
            Err(EstimationFailure::NoIncreaseObserved)
        );
        // Without a sample at zero the first gap counts.
        let o = obs(vec![1.0, 5.0, 10.0, 15.0, 20.0], vec![vec![0, 2, 1, 0, 0]]);
        let s = estimate_support(&o).unwrap();
        assert_eq!((s.a_hat_index, s.b_hat_index), (1, 0));
    }

    #[test]
    fn atom_only_days_show_no_increase() {
        let o = obs(vec![0.0, 1.0, 2.0, 3.0], vec![vec![2, 1, 0, 0]; 5]);
        assert_eq!(
            estimate_support(&o),
            Err(EstimationFailure::NoIncreaseObserved)
        );
        let r = mean_estimator(&o, 1.0, true);
        assert!(!r.success());
        assert_eq!(r.failure, Some(EstimationFailure::NoIncreaseObserved));
    }

    #[test]
    fn grid_truth_indices() {
        let times: Vec<f64> = (0..21).map(f64::from).collect();
        let s = SupportEstimate {
            a_hat_index: 3,
            b_hat_index: 12,
            a_hat_time: 3.0,
            b_hat_time: 12.0,
            a_tilde_index: None,
            b_tilde_index: None,
        }
        .with_grid_truth(&times, 2.075, 12.415);
        assert_eq!((s.a_tilde_index, s.b_tilde_index), (Some(3), Some(12)));
    }

    #[test]
    fn farthest_partner_tie_rule() {
        let c = [2.0, 7.0, 12.0];
        assert_eq!(farthest_partner(2.0, &c), 12.0);
        assert_eq!(farthest_partner(7.0, &c), 2.0);
        assert_eq!(farthest_partner(12.0, &c), 2.0);
    }

    #[test]
    fn pair_estimate_branches() {
        assert!((pair_estimate(4.0, 3.0, 9.0, 2.5, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((pair_estimate(9.0, 2.5, 4.0, 3.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((pair_estimate(5.0, 1.5, 0.0, 4.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((pair_estimate(0.0, 4.0, 5.0, 1.5, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(pair_estimate(3.0, 1.0, 3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn early_birds_branches_recover_theta() {
        let (theta, mu, w) = (0.3, 1.5, 2.0);
        // Piecewise-linear mean: rises with slope (1-θ)μ until zero, falls
        // with slope −θμ after.
        let q = |t: f64| {
            if t <= 0.0 {
                (1.0 - theta) * mu * (t + w)
            } else {
                (1.0 - theta) * mu * w - theta * mu * t
            }
        };
        for (s, t) in [
            (-1.5, -0.5),
            (-1.0, 2.0),
            (-1.0, 0.0),
            (0.0, 3.0),
            (1.0, 4.0),
        ] {
            let est = pair_estimate_early_birds(s, q(s), t, q(t), mu).unwrap();
            assert!((est - theta).abs() < 1e-12, "pair ({s}, {t}): {est}");
        }
    }

    #[test]
    fn mixed_branch_worked_example() {
        let theta: f64 = 0.2;
        // E[Q(s)] − E[Q(t)] for s = −1, t = 2 with q(0) = 0 anchoring.
        let qs = -(1.0 - theta);
        let qt = -theta * 2.0;
        let est = pair_estimate_early_birds(-1.0, qs, 2.0, qt, 1.0).unwrap();
        assert!((est - theta).abs() < 1e-15);
    }

    #[test]
    fn weights_worked_example() {
        let w = Weights::new(&[2.0, 7.0, 12.0], 1.0);
        assert_eq!(w.k, vec![-30.0, 15.0, 30.0]);
        let expected = [2.0 / 15.0, -1.0 / 15.0, -1.0 / 15.0];
        for (g, e) in w.g.iter().zip(expected) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_sum_equals_mean_of_pairs() {
        let times = [1.5, 3.0, 4.0, 6.5, 9.0];
        let means = [2.0, 1.7, 1.2, 1.1, 0.3];
        let (theta, _) = theta_from_means(&times, &means, 1.3, PairRule::Atom).unwrap();
        let w = Weights::new(&times, 1.3);
        assert!((w.combine(&means) - theta).abs() < 1e-14);
    }

    #[test]
    fn exact_recovery_with_zero() {
        let (theta, mu, c) = (0.09, 1.0, 1.3);
        let times: Vec<f64> = (0..21).map(f64::from).collect();
        let rows: Vec<Vec<u32>> = vec![];
        let _ = rows;
        let means: Vec<f64> = times
            .iter()
            .map(|&t| {
                if t == 0.0 {
                    2.0 * c
                } else {
                    c - theta * mu * t
                }
            })
            .collect();
        let sel = [0.0, 3.0, 4.0, 5.0, 8.0, 12.0];
        let sel_means: Vec<f64> = sel.iter().map(|&t| means[t as usize]).collect();
        let (est, pairs) = theta_from_means(&sel, &sel_means, mu, PairRule::Atom).unwrap();
        assert!((est - theta).abs() < 1e-14);
        assert_eq!(pairs[0].partner, 12.0);
        assert_eq!(pairs[5].partner, 0.0);
    }

    #[test]
    fn variance_small_cases() {
        let sigma = MomentSummary {
            times: vec![1.0, 2.0],
            mean: vec![0.0, 0.0],
            variance: vec![1.0, 1.0],
            covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert_eq!(asymptotic_variance(&[1.0, -1.0], &sigma).unwrap(), 2.0);
        let zero = MomentSummary {
            times: vec![1.0, 2.0],
            mean: vec![0.0; 2],
            variance: vec![0.0; 2],
            covariance: vec![vec![0.0; 2]; 2],
        };
        assert_eq!(asymptotic_variance(&[0.3, 7.0], &zero).unwrap(), 0.0);
        assert!(asymptotic_variance(&[1.0], &sigma).is_err());
    }

    #[test]
    fn empty_support_is_a_failure_not_an_error() {
        // The only increase sits between indices 1 and 2: â = 2, b̂ = 1.
        let o = obs(vec![0.0, 5.0, 10.0, 15.0, 20.0], vec![vec![3, 0, 1, 0, 0]]);
        let r = mean_estimator(&o, 1.0, true);
        assert!(matches!(
            r.failure,
            Some(EstimationFailure::EmptySupport { .. })
        ));
        assert!(r.theta_hat.is_none());
    }

    #[test]
    fn zero_rescues_single_support_point() {
        // â = b̂ = 2; with zero the estimation set is {0, 10}.
        let o = obs(
            vec![0.0, 5.0, 10.0, 15.0, 20.0],
            vec![vec![3, 0, 1, 0, 0], vec![2, 1, 0, 1, 0]],
        );
        let r = mean_estimator(&o, 1.0, true);
        assert!(r.success(), "{:?}", r.failure);
        assert_eq!(r.estimation_times, vec![0.0, 10.0]);
        assert!(r.weights.is_none());
        let r = mean_estimator(&o, 1.0, false);
        assert_eq!(
            r.failure,
            Some(EstimationFailure::TooFewPoints { count: 1 })
        );
    }
}
