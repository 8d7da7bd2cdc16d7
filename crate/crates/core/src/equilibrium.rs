//! Symmetric Nash equilibrium arrival distribution on the discrete grid.
//!
//! Without early birds the equilibrium has an atom `p_e` at time zero, no
//! arrivals on `(0, t_a)` and density `f_e(t) = (μ/λ)(1 − P₀(t) − θ)` on
//! `[t_a, t_b]`. For a trial atom the queue is propagated with no arrivals
//! until the expected cost of arriving drops to the cost at zero (this is
//! `t_a`), then with the density above until it turns nonpositive (`t_b`) or
//! the total mass reaches one. Bisection on the atom closes the mass balance.
//!
//! With early birds the density is `(μ/λ)(1 − θ)` on `[−w, 0)` and the same
//! queue-driven formula on `[0, t_w]`; bisection runs on `w` instead.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{euler_step, mean_of, poisson_probs, QueueSeries};
use crate::error::{Error, Result};
use crate::model::{
    time_to_slot, ModelConfig, ModelParams, Variant, BISECTION_MAX_ITERATIONS, BISECTION_TOLERANCE,
};

/// Hard cap on the number of grid slots a single trial may walk.
const MAX_TRIAL_SLOTS: i64 = 50_000_000;

/// Equilibrium arrival distribution `F_e` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumDistribution {
    pub variant: Variant,
    /// Probability of arriving exactly at time zero.
    pub atom: f64,
    /// Length `w` of the constant-density interval before zero.
    pub pre_width: f64,
    /// Density on `[−w, 0)`.
    pub pre_density: f64,
    pub support_start: f64,
    pub support_end: f64,
    /// Grid slot of `density[0]`.
    pub density_offset: i64,
    /// Density on consecutive grid slots; zero outside.
    pub density: Vec<f64>,
    pub equilibrium_cost: f64,
    pub grid_step: f64,
}

impl EquilibriumDistribution {
    /// Density of the post-opening part at grid slot `slot`.
    pub fn density_at_slot(&self, slot: i64) -> f64 {
        let index = slot - self.density_offset;
        if index < 0 {
            return 0.0;
        }
        self.density.get(index as usize).copied().unwrap_or(0.0)
    }

    pub fn density_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            if t >= -self.pre_width {
                return self.pre_density;
            }
            return 0.0;
        }
        self.density_at_slot(time_to_slot(t, self.grid_step))
    }

    /// Arrival rate `λf` before the opening.
    pub fn pre_zero_rate(&self, params: &ModelParams) -> f64 {
        params.lambda() * self.pre_density
    }

    /// Mass present at the opening: the atom plus everything that arrived
    /// before it.
    pub fn mass_at_zero(&self, _params: &ModelParams) -> f64 {
        self.atom + self.pre_mass()
    }

    pub fn pre_mass(&self) -> f64 {
        self.pre_width * self.pre_density
    }

    pub fn continuous_mass(&self) -> f64 {
        self.grid_step * self.density.iter().sum::<f64>()
    }

    /// Atom + pre-opening mass + grid integral of the density.
    pub fn total_mass(&self) -> f64 {
        self.atom + self.pre_mass() + self.continuous_mass()
    }

    /// First grid slot carrying probability of a customer being present.
    pub fn first_slot(&self) -> i64 {
        if self.pre_width > 0.0 {
            -((self.pre_width / self.grid_step + 1e-9).floor() as i64)
        } else {
            0
        }
    }

    /// Last grid slot with stored density, `-1` if there is none.
    pub fn last_density_slot(&self) -> i64 {
        self.density_offset + self.density.len() as i64 - 1
    }

    pub fn density_times(&self) -> Vec<f64> {
        (0..self.density.len())
            .map(|i| (self.density_offset + i as i64) as f64 * self.grid_step)
            .collect()
    }

    /// Writes `time,density` for the pre-opening interval edges and every
    /// stored grid slot.
    pub fn write_density_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,density")?;
        if self.pre_width > 0.0 {
            writeln!(out, "{},{}", -self.pre_width, self.pre_density)?;
            for slot in self.first_slot()..0 {
                writeln!(out, "{},{}", slot as f64 * self.grid_step, self.pre_density)?;
            }
        }
        for (t, f) in self.density_times().into_iter().zip(&self.density) {
            writeln!(out, "{t},{f}")?;
        }
        Ok(())
    }
}

/// Solves the variant selected by `params`.
pub fn solve(params: &ModelParams) -> Result<EquilibriumDistribution> {
    match params.variant() {
        Variant::NoEarlyBirds => solve_no_early_birds(params),
        Variant::ClosingTime => solve_closing_time(params),
        Variant::EarlyBirds => solve_early_birds(params),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stop {
    MassReached,
    DensityExhausted,
    Closed,
    NeverReached,
}

#[derive(Debug)]
struct Trial {
    mass: f64,
    start_slot: Option<i64>,
    density: Vec<f64>,
    stop: Stop,
}

/// Walks the grid for a trial atom `atom`.
///
/// Costs are compared in units of `α+β`, so the result depends on the cost
/// pair only through θ.
fn atom_trial(atom: f64, params: &ModelParams, close_slot: Option<i64>) -> Result<Trial> {
    let (lambda, mu, delta, theta) = (params.lambda(), params.mu(), params.delta(), params.theta());
    let mut probs = poisson_probs(lambda * atom, params.truncation());
    let cost_at_zero = lambda * atom / (2.0 * mu);
    let mut mass = atom;
    let mut density = Vec::new();
    let mut start_slot = None;
    let mut rate = 0.0;
    let mut slot = 0i64;
    let stop = loop {
        euler_step(&mut probs, rate, mu, delta)?;
        slot += 1;
        if close_slot.is_some_and(|close| slot > close) {
            break Stop::Closed;
        }
        if slot > MAX_TRIAL_SLOTS {
            break Stop::DensityExhausted;
        }
        let t = slot as f64 * delta;
        if start_slot.is_none() {
            if mean_of(&probs) / mu + theta * t > cost_at_zero {
                if theta * t > cost_at_zero {
                    // Tardiness alone already exceeds the cost at zero.
                    break Stop::NeverReached;
                }
                continue;
            }
            start_slot = Some(slot);
        }
        let f = mu / lambda * (1.0 - probs[0] - theta);
        if f <= 0.0 {
            break Stop::DensityExhausted;
        }
        density.push(f);
        mass += delta * f;
        if mass >= 1.0 {
            break Stop::MassReached;
        }
        rate = lambda * f;
    };
    Ok(Trial {
        mass,
        start_slot,
        density,
        stop,
    })
}

/// Bisection on `[lo, hi]`, moving `hi` down whenever the trial reaches unit
/// mass. Returns the final bracket.
fn bisect<F>(mut lo: f64, mut hi: f64, tolerance: f64, mut reaches_one: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<bool>,
{
    let mut iterations = 0;
    while hi - lo > tolerance {
        if iterations == BISECTION_MAX_ITERATIONS {
            return Err(Error::NonConvergence {
                iterations,
                width: hi - lo,
            });
        }
        let mid = 0.5 * (lo + hi);
        if reaches_one(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok((lo, hi))
}

fn solve_with_atom(
    params: &ModelParams,
    close_slot: Option<i64>,
) -> Result<EquilibriumDistribution> {
    let delta = params.delta();
    let (lo, _) = bisect(0.0, 1.0, BISECTION_TOLERANCE, |atom| {
        Ok(atom_trial(atom, params, close_slot)?.mass >= 1.0)
    })?;
    // The lower end is the trial whose density runs out (or hits the
    // closing time) before unit mass, so the support end is fixed by the
    // density cut-off rather than by the bracket resolution.
    let atom = lo;
    let trial = atom_trial(atom, params, close_slot)?;
    log::debug!(
        "atom {atom:.7}: mass {:.7}, stop {:?}, {} density slots",
        trial.mass,
        trial.stop,
        trial.density.len()
    );

    let start_slot = match (trial.start_slot, close_slot) {
        (Some(start), _) if !trial.density.is_empty() => start,
        (_, Some(_)) => {
            return Err(Error::ClosingTimeTooEarly {
                closing_time: params.closing_time(),
                threshold: all_at_zero_threshold(params),
            })
        }
        (start, None) => {
            let t_a = start.map_or(f64::INFINITY, |s| s as f64 * delta);
            return Err(Error::NoInteriorArrivals {
                t_a,
                horizon: params.horizon(),
            });
        }
    };
    let support_start = start_slot as f64 * delta;
    if close_slot.is_none() && support_start > params.horizon() {
        return Err(Error::NoInteriorArrivals {
            t_a: support_start,
            horizon: params.horizon(),
        });
    }
    let support_end = (start_slot + trial.density.len() as i64 - 1) as f64 * delta;
    Ok(EquilibriumDistribution {
        variant: params.variant(),
        atom,
        pre_width: 0.0,
        pre_density: 0.0,
        support_start,
        support_end,
        density_offset: start_slot,
        density: trial.density,
        equilibrium_cost: (params.alpha() + params.beta()) * params.lambda() * atom
            / (2.0 * params.mu()),
        grid_step: delta,
    })
}

/// Equilibrium without early birds and without closing time.
pub fn solve_no_early_birds(params: &ModelParams) -> Result<EquilibriumDistribution> {
    expect_variant(params, Variant::NoEarlyBirds)?;
    solve_with_atom(params, None)
}

/// Earliest grid time at which arriving is no dearer than joining an atom of
/// the whole population at zero.
///
/// With a closing time at or before this point everyone arriving at zero is
/// an equilibrium and no interior arrivals exist.
pub fn all_at_zero_threshold(params: &ModelParams) -> f64 {
    let (lambda, mu, delta, theta) = (params.lambda(), params.mu(), params.delta(), params.theta());
    let mut probs = poisson_probs(lambda, params.truncation());
    let cost_at_zero = lambda / (2.0 * mu);
    let mut slot = 0i64;
    loop {
        if euler_step(&mut probs, 0.0, mu, delta).is_err() {
            return f64::INFINITY;
        }
        slot += 1;
        let t = slot as f64 * delta;
        if mean_of(&probs) / mu + theta * t <= cost_at_zero {
            return t;
        }
        if theta * t > cost_at_zero {
            return f64::INFINITY;
        }
    }
}

/// Equilibrium when no arrivals are accepted after the closing time `T`.
///
/// The density walk stops at slot `⌈T/δ⌉`; if the unconstrained support ends
/// before `T` the result coincides with [`solve_no_early_birds`].
pub fn solve_closing_time(params: &ModelParams) -> Result<EquilibriumDistribution> {
    expect_variant(params, Variant::ClosingTime)?;
    let close_slot = (params.closing_time() / params.delta() - 1e-9).ceil() as i64;
    solve_with_atom(params, Some(close_slot))
}

fn early_trial(width: f64, params: &ModelParams) -> Result<Trial> {
    let (lambda, mu, delta, theta) = (params.lambda(), params.mu(), params.delta(), params.theta());
    let pre_mass = width * mu / lambda * (1.0 - theta);
    let mut probs = poisson_probs(lambda * pre_mass, params.truncation());
    let mut mass = pre_mass;
    let mut density = Vec::new();
    let mut slot = 0i64;
    let stop = loop {
        let f = mu / lambda * (1.0 - probs[0] - theta);
        if f <= 0.0 {
            break Stop::DensityExhausted;
        }
        density.push(f);
        mass += delta * f;
        if mass >= 1.0 {
            break Stop::MassReached;
        }
        if slot > MAX_TRIAL_SLOTS {
            break Stop::DensityExhausted;
        }
        euler_step(&mut probs, lambda * f, mu, delta)?;
        slot += 1;
    };
    Ok(Trial {
        mass,
        start_slot: Some(0),
        density,
        stop,
    })
}

/// Equilibrium when customers may queue before the opening.
pub fn solve_early_birds(params: &ModelParams) -> Result<EquilibriumDistribution> {
    expect_variant(params, Variant::EarlyBirds)?;
    let (lambda, mu, theta) = (params.lambda(), params.mu(), params.theta());
    let upper = lambda / (mu * (1.0 - theta));
    let (lo, hi) = bisect(0.0, upper, BISECTION_TOLERANCE, |w| {
        Ok(early_trial(w, params)?.mass >= 1.0)
    })?;
    let width = lo;
    let trial = early_trial(width, params)?;
    log::debug!(
        "pre-width {width:.7}: mass {:.7}, stop {:?}, {} density slots",
        trial.mass,
        trial.stop,
        trial.density.len()
    );
    if trial.density.is_empty() {
        return Err(Error::NonConvergence {
            iterations: BISECTION_MAX_ITERATIONS,
            width: hi - lo,
        });
    }
    let delta = params.delta();
    Ok(EquilibriumDistribution {
        variant: Variant::EarlyBirds,
        atom: 0.0,
        pre_width: width,
        pre_density: mu / lambda * (1.0 - theta),
        support_start: -width,
        support_end: (trial.density.len() - 1) as f64 * delta,
        density_offset: 0,
        density: trial.density,
        equilibrium_cost: params.alpha() * width,
        grid_step: delta,
    })
}

fn expect_variant(params: &ModelParams, variant: Variant) -> Result<()> {
    if params.variant() != variant {
        return Err(Error::InvalidParameter(format!(
            "expected {variant} parameters, got {}",
            params.variant()
        )));
    }
    Ok(())
}

/// Expected cost of a customer arriving at grid time `t` when everybody
/// else follows `eq`.
pub fn expected_cost(
    t: f64,
    eq: &EquilibriumDistribution,
    series: &QueueSeries,
    params: &ModelParams,
) -> Result<f64> {
    let (alpha, beta, mu) = (params.alpha(), params.beta(), params.mu());
    let slot = time_to_slot(t, params.delta());
    if slot == 0 && eq.variant != Variant::EarlyBirds {
        // A batch arriving together is served in random order: on average a
        // member waits for half of the others.
        return Ok((alpha + beta) * params.lambda() * eq.atom / (2.0 * mu));
    }
    let q = series
        .at_slot(slot)
        .map(mean_of)
        .ok_or(Error::TimeOutOfRange(t))?;
    let t = slot as f64 * params.delta();
    if t < 0.0 {
        Ok((alpha + beta) * q / mu - alpha * t)
    } else {
        Ok((alpha + beta) * q / mu + beta * t)
    }
}

const ARTIFACT_FORMAT: &str = "nash-queue/equilibrium";
const ARTIFACT_VERSION: u32 = 1;

/// Self-describing interchange file holding an equilibrium and the
/// parameters it was solved for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumArtifact {
    pub format: String,
    pub version: u32,
    pub params: ModelConfig,
    pub theta: f64,
    pub equilibrium: EquilibriumDistribution,
    /// Grid times of `equilibrium.density`.
    pub density_times: Vec<f64>,
}

impl EquilibriumArtifact {
    pub fn new(params: &ModelParams, equilibrium: EquilibriumDistribution) -> Self {
        EquilibriumArtifact {
            format: ARTIFACT_FORMAT.to_string(),
            version: ARTIFACT_VERSION,
            params: params.to_config(),
            theta: params.theta(),
            density_times: equilibrium.density_times(),
            equilibrium,
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        self.params.to_params()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: EquilibriumArtifact =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if artifact.format != ARTIFACT_FORMAT {
            return Err(Error::Format(format!(
                "not an equilibrium artifact (format {:?})",
                artifact.format
            )));
        }
        if artifact.version != ARTIFACT_VERSION {
            return Err(Error::Format(format!(
                "unsupported artifact version {}",
                artifact.version
            )));
        }
        if artifact.density_times.len() != artifact.equilibrium.density.len() {
            return Err(Error::Format(
                "density_times and density lengths differ".into(),
            ));
        }
        artifact.params.to_params()?;
        Ok(artifact)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
