//! Replication harness: repeat (simulate, estimate) κ times per cell of an
//! (n, schedule) grid and summarize the estimates.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate, QueueSeries};
use crate::equilibrium::{solve, EquilibriumDistribution};
use crate::error::{Error, Result};
use crate::estimator::{
    estimator_early_birds_from_stats, mean_estimator_from_stats, EstimationResult, ObservationStats,
};
use crate::model::{ModelConfig, ModelParams, Variant};
use crate::simulator::{simulate_with, SamplingSchedule};

/// How the sampling instants of one column are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    /// `m` equidistant instants `start, start+Δ, …`.
    Uniform {
        m: usize,
        spacing: f64,
        #[serde(default)]
        start: f64,
    },
    Explicit {
        times: Vec<f64>,
    },
}

impl ScheduleSpec {
    pub fn uniform(m: usize, spacing: f64) -> Self {
        ScheduleSpec::Uniform {
            m,
            spacing,
            start: 0.0,
        }
    }

    pub fn build(&self) -> Result<SamplingSchedule> {
        match self {
            ScheduleSpec::Uniform { m, spacing, start } => {
                if *m < 2 || spacing.is_nan() || *spacing <= 0.0 {
                    return Err(Error::InvalidSchedule(format!(
                        "m = {m}, spacing = {spacing}"
                    )));
                }
                SamplingSchedule::equidistant(*start, *spacing, start + (*m - 1) as f64 * spacing)
            }
            ScheduleSpec::Explicit { times } => SamplingSchedule::new(times.clone()),
        }
    }

    /// Short column label such as `m=21 (spacing 1)`.
    pub fn label(&self) -> String {
        match self {
            ScheduleSpec::Uniform { m, spacing, .. } => format!("m={m} (spacing {spacing})"),
            ScheduleSpec::Explicit { times } => format!("m={} (explicit)", times.len()),
        }
    }
}

/// A full replication study.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub params: ModelParams,
    pub n_values: Vec<usize>,
    pub schedules: Vec<ScheduleSpec>,
    pub replications: usize,
    pub master_seed: u64,
    pub include_zero: bool,
}

/// On-disk form of [`ExperimentPlan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub model: ModelConfig,
    pub n_values: Vec<usize>,
    pub schedules: Vec<ScheduleSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default = "default_include_zero")]
    pub include_zero: bool,
}

fn default_replications() -> usize {
    20
}

fn default_include_zero() -> bool {
    true
}

pub const DEFAULT_MASTER_SEED: u64 = 20_200_101;

impl ExperimentPlan {
    pub fn new(
        params: ModelParams,
        n_values: Vec<usize>,
        schedules: Vec<ScheduleSpec>,
        replications: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let plan = ExperimentPlan {
            params,
            n_values,
            schedules,
            replications,
            master_seed,
            include_zero: true,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter(
                "replications must be positive".into(),
            ));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::InvalidParameter(
                "n_values must be nonempty and positive".into(),
            ));
        }
        if self.schedules.is_empty() {
            return Err(Error::InvalidSchedule("no schedules".into()));
        }
        for spec in &self.schedules {
            spec.build()?;
        }
        Ok(())
    }

    /// Master seed precedence: explicit plan field, then the model's seed,
    /// then [`DEFAULT_MASTER_SEED`].
    pub fn from_config(config: &PlanConfig) -> Result<Self> {
        let seed = config
            .master_seed
            .or(config.model.seed)
            .unwrap_or(DEFAULT_MASTER_SEED);
        let mut plan = ExperimentPlan::new(
            config.model.to_params()?,
            config.n_values.clone(),
            config.schedules.clone(),
            config.replications,
            seed,
        )?;
        plan.include_zero = config.include_zero;
        Ok(plan)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: PlanConfig =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_config(&config)
    }

    pub fn to_config(&self) -> PlanConfig {
        PlanConfig {
            model: self.params.to_config(),
            n_values: self.n_values.clone(),
            schedules: self.schedules.clone(),
            replications: self.replications,
            master_seed: Some(self.master_seed),
            include_zero: self.include_zero,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `k` in the cell (n, schedule).
///
/// Folds the master seed, the day count itself (not its position), the
/// schedule index and `k` through SplitMix64, so adding n values leaves the
/// other cells unchanged.
pub fn replication_seed(master: u64, n: usize, schedule_index: usize, k: usize) -> u64 {
    [n as u64, schedule_index as u64, k as u64]
        .iter()
        .fold(splitmix64(master), |h, &x| splitmix64(h ^ x))
}

/// One replication of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub k: usize,
    pub seed: u64,
    /// `None` when θ could not be estimated.
    pub theta_hat: Option<f64>,
    pub failure: Option<String>,
}

/// AE, STD and MSE over the successful replications of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub n: usize,
    pub schedule_index: usize,
    pub m: usize,
    pub ae: Option<f64>,
    /// Needs at least two successes.
    pub std: Option<f64>,
    pub mse: Option<f64>,
    pub eta: usize,
    pub replications: usize,
    pub per_replication: Vec<ReplicationRecord>,
}

impl ExperimentSummary {
    fn from_records(
        n: usize,
        schedule_index: usize,
        m: usize,
        theta: f64,
        per_replication: Vec<ReplicationRecord>,
    ) -> Self {
        let ok = successes(&per_replication);
        let eta = ok.len();
        let (ae, std, mse) = if eta == 0 {
            (None, None, None)
        } else {
            let ae = ok.iter().sum::<f64>() / eta as f64;
            let std = (eta >= 2).then(|| {
                (ok.iter().map(|x| (x - ae).powi(2)).sum::<f64>() / (eta - 1) as f64).sqrt()
            });
            let mse = ok.iter().map(|x| (x - theta).powi(2)).sum::<f64>() / eta as f64;
            (Some(ae), std, Some(mse))
        };
        ExperimentSummary {
            n,
            schedule_index,
            m,
            ae,
            std,
            mse,
            eta,
            replications: per_replication.len(),
            per_replication,
        }
    }

    pub fn estimates(&self) -> Vec<f64> {
        successes(&self.per_replication)
    }

    /// Table cell: `AE (STD)`, with `| η = k` appended when some
    /// replications failed.
    pub fn cell(&self) -> String {
        let Some(ae) = self.ae else {
            return format!("N/A | η = {}", self.eta);
        };
        let mut s = format!("{ae:.4}");
        if let Some(std) = self.std {
            let _ = write!(s, " ({std:.4})");
        }
        if self.eta < self.replications {
            let _ = write!(s, " | η = {}", self.eta);
        }
        s
    }
}

fn successes(records: &[ReplicationRecord]) -> Vec<f64> {
    records.iter().filter_map(|r| r.theta_hat).collect()
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub plan: ExperimentPlan,
    pub equilibrium: EquilibriumDistribution,
    pub series: QueueSeries,
    /// Indexed `[n index][schedule index]`.
    pub summaries: Vec<Vec<ExperimentSummary>>,
}

impl ExperimentResults {
    pub fn cell(&self, n: usize, schedule_index: usize) -> Option<&ExperimentSummary> {
        let i = self.plan.n_values.iter().position(|&v| v == n)?;
        self.summaries.get(i)?.get(schedule_index)
    }
}

/// Simulates `n` days with `seed` and estimates θ, without storing the
/// count matrix.
pub fn simulate_and_estimate(
    eq: &EquilibriumDistribution,
    params: &ModelParams,
    schedule: &SamplingSchedule,
    n: usize,
    seed: u64,
    include_zero: bool,
) -> Result<(EstimationResult, Vec<f64>)> {
    let mut stats = ObservationStats::new(schedule.times());
    simulate_with(eq, params, schedule, n, seed, |row| stats.push_day(row))?;
    let result = match params.variant() {
        Variant::EarlyBirds => estimator_early_birds_from_stats(&stats, params.mu()),
        _ => mean_estimator_from_stats(&stats, params.mu(), include_zero),
    };
    Ok((result, stats.means()))
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResults> {
    plan.validate()?;
    let params = &plan.params;
    let eq = solve(params)?;
    let series = propagate(&eq, params)?;
    let schedules: Vec<SamplingSchedule> = plan
        .schedules
        .iter()
        .map(ScheduleSpec::build)
        .collect::<Result<_>>()?;

    let mut summaries = Vec::with_capacity(plan.n_values.len());
    for &n in &plan.n_values {
        let mut row = Vec::with_capacity(schedules.len());
        for (s, schedule) in schedules.iter().enumerate() {
            let mut records = Vec::with_capacity(plan.replications);
            for k in 0..plan.replications {
                let seed = replication_seed(plan.master_seed, n, s, k);
                let (result, _) =
                    simulate_and_estimate(&eq, params, schedule, n, seed, plan.include_zero)?;
                records.push(ReplicationRecord {
                    k: k + 1,
                    seed,
                    theta_hat: result.theta_hat,
                    failure: result.failure.map(|f| f.to_string()),
                });
            }
            log::info!("n = {n}, {}: done", plan.schedules[s].label());
            row.push(ExperimentSummary::from_records(
                n,
                s,
                schedule.len(),
                params.theta(),
                records,
            ));
        }
        summaries.push(row);
    }
    Ok(ExperimentResults {
        plan: plan.clone(),
        equilibrium: eq,
        series,
        summaries,
    })
}

/// Box-plot statistics with whiskers at the most extreme points within
/// 1.5 IQR of the quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPlot {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxPlot {
    pub fn new(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let fence = 1.5 * (q3 - q1);
        let inside = |x: &&f64| **x >= q1 - fence && **x <= q3 + fence;
        let lower_whisker = *v.iter().find(inside).unwrap_or(&q1);
        let upper_whisker = *v.iter().rev().find(inside).unwrap_or(&q3);
        let outliers = v
            .iter()
            .copied()
            .filter(|x| *x < q1 - fence || *x > q3 + fence)
            .collect();
        Some(BoxPlot {
            median,
            q1,
            q3,
            lower_whisker,
            upper_whisker,
            outliers,
        })
    }
}

/// Which groups of files [`emit_outputs`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputSelection {
    pub tables: bool,
    pub figures: bool,
}

impl Default for OutputSelection {
    fn default() -> Self {
        OutputSelection {
            tables: true,
            figures: true,
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(content.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes table and figure CSVs into `dir` and returns the paths written.
///
/// Tables: `table_cells.csv` (AE (STD) grid, rows n, columns schedules),
/// `table_characteristics.csv` (AE/STD/MSE rows per cell), `summary.csv`,
/// `replications.csv` and `boxplot.csv`.
///
/// Figures: `fig_equilibrium.csv` (t, f_e, q), `fig_sample_means.csv`
/// (three replications of q̂ plus exact q, largest n, first schedule) and
/// `fig_pair_estimates.csv` (first replication of that cell).
pub fn emit_outputs(
    results: &ExperimentResults,
    dir: &Path,
    selection: OutputSelection,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, content: String| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, &content)?;
        written.push(path);
        Ok(())
    };
    if selection.tables {
        emit("table_cells.csv", table_cells(results))?;
        emit("table_characteristics.csv", table_characteristics(results))?;
        emit("summary.csv", summary_csv(results))?;
        emit("replications.csv", replications_csv(results))?;
        emit("boxplot.csv", boxplot_csv(results))?;
    }
    if selection.figures {
        emit("fig_equilibrium.csv", equilibrium_csv(results)?)?;
        let (means, pairs) = sample_mean_figures(results)?;
        emit("fig_sample_means.csv", means)?;
        emit("fig_pair_estimates.csv", pairs)?;
    }
    Ok(written)
}

fn table_cells(results: &ExperimentResults) -> String {
    let plan = &results.plan;
    let mut out = String::from("n");
    for spec in &plan.schedules {
        out.push(',');
        out.push_str(&csv_field(&spec.label()));
    }
    out.push('\n');
    for (i, &n) in plan.n_values.iter().enumerate() {
        out.push_str(&n.to_string());
        for cell in &results.summaries[i] {
            out.push(',');
            out.push_str(&csv_field(&cell.cell()));
        }
        out.push('\n');
    }
    out
}

fn table_characteristics(results: &ExperimentResults) -> String {
    let plan = &results.plan;
    let mut out = String::from("statistic");
    for &n in &plan.n_values {
        for spec in &plan.schedules {
            let _ = write!(out, ",{}", csv_field(&format!("n={n} {}", spec.label())));
        }
    }
    out.push('\n');
    type Row = (&'static str, fn(&ExperimentSummary) -> String);
    let rows: [Row; 4] = [
        ("AE", |c| opt(c.ae)),
        ("STD", |c| opt(c.std)),
        ("MSE", |c| opt(c.mse)),
        ("eta", |c| c.eta.to_string()),
    ];
    for (name, f) in rows {
        out.push_str(name);
        for row in &results.summaries {
            for cell in row {
                out.push(',');
                out.push_str(&f(cell));
            }
        }
        out.push('\n');
    }
    out
}

fn summary_csv(results: &ExperimentResults) -> String {
    let mut out = String::from("n,schedule,m,replications,eta,ae,std,mse\n");
    for row in &results.summaries {
        for c in row {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.n,
                c.schedule_index,
                c.m,
                c.replications,
                c.eta,
                opt(c.ae),
                opt(c.std),
                opt(c.mse)
            );
        }
    }
    out
}

fn replications_csv(results: &ExperimentResults) -> String {
    let mut out = String::from("n,schedule,k,seed,theta_hat,failure\n");
    for row in &results.summaries {
        for c in row {
            for r in &c.per_replication {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.n,
                    c.schedule_index,
                    r.k,
                    r.seed,
                    opt(r.theta_hat),
                    csv_field(r.failure.as_deref().unwrap_or(""))
                );
            }
        }
    }
    out
}

fn boxplot_csv(results: &ExperimentResults) -> String {
    let mut out =
        String::from("n,schedule,eta,median,q1,q3,lower_whisker,upper_whisker,outliers\n");
    for row in &results.summaries {
        for c in row {
            let _ = write!(out, "{},{},{}", c.n, c.schedule_index, c.eta);
            match BoxPlot::new(&c.estimates()) {
                Some(b) => {
                    let outliers: Vec<String> = b.outliers.iter().map(f64::to_string).collect();
                    let _ = writeln!(
                        out,
                        ",{},{},{},{},{},{}",
                        b.median,
                        b.q1,
                        b.q3,
                        b.lower_whisker,
                        b.upper_whisker,
                        outliers.join(";")
                    );
                }
                None => out.push_str(",,,,,,\n"),
            }
        }
    }
    out
}

fn equilibrium_csv(results: &ExperimentResults) -> Result<String> {
    let eq = &results.equilibrium;
    let series = &results.series;
    let mut out = String::from("time,density,mean_queue\n");
    for (i, state) in series.iter().enumerate() {
        let slot = series.first_slot() + i as i64;
        let _ = writeln!(
            out,
            "{},{},{}",
            state.time,
            eq.density_at_slot(slot),
            state.mean()
        );
    }
    Ok(out)
}

fn sample_mean_figures(results: &ExperimentResults) -> Result<(String, String)> {
    let plan = &results.plan;
    let n = *plan.n_values.iter().max().expect("validated plan");
    let schedule = plan.schedules[0].build()?;
    let reps = plan.replications.min(3);
    let mut columns = Vec::with_capacity(reps);
    let mut first = None;
    for k in 0..reps {
        let seed = replication_seed(plan.master_seed, n, 0, k);
        let (result, means) = simulate_and_estimate(
            &results.equilibrium,
            &plan.params,
            &schedule,
            n,
            seed,
            plan.include_zero,
        )?;
        columns.push(means);
        if k == 0 {
            first = Some(result);
        }
    }

    let mut means_csv = String::from("time");
    for k in 0..reps {
        let _ = write!(means_csv, ",rep{}", k + 1);
    }
    means_csv.push_str(",exact\n");
    for (i, &t) in schedule.times().iter().enumerate() {
        let _ = write!(means_csv, "{t}");
        for col in &columns {
            let _ = write!(means_csv, ",{}", col[i]);
        }
        let exact = results
            .series
            .mean_at(t)
            .map(|q| q.to_string())
            .unwrap_or_default();
        let _ = writeln!(means_csv, ",{exact}");
    }

    let mut pairs_csv = String::from("time,partner,estimate\n");
    if let Some(result) = first {
        for p in &result.pairs {
            let _ = writeln!(pairs_csv, "{},{},{}", p.time, p.partner, p.estimate);
        }
    }
    Ok((means_csv, pairs_csv))
}
