use nalgebra::DMatrix;

use nash_queue::dynamics::{covariance, covariance_matrix_from, propagate};
use nash_queue::equilibrium::{solve, EquilibriumArtifact};
use nash_queue::simulator::simulate;
use nash_queue::{Error, ModelParams, SamplingSchedule};

fn config_a() -> ModelParams {
    ModelParams::builder(5.0, 1.0, 2.0, 0.2)
        .horizon(20.0)
        .build()
        .unwrap()
}

#[test]
fn covariance_matrix_is_symmetric_psd_with_variance_diagonal() {
    let params = config_a();
    let eq = solve(&params).unwrap();
    let series = propagate(&eq, &params).unwrap();
    let times: Vec<f64> = (0..=20).map(f64::from).collect();
    let sigma = covariance_matrix_from(&eq, &params, &times, &series).unwrap();
    let m = times.len();
    for (i, &t) in times.iter().enumerate() {
        assert!((sigma.covariance[i][i] - series.variance_at(t).unwrap()).abs() < 1e-12);
        assert!((sigma.mean[i] - series.mean_at(t).unwrap()).abs() < 1e-12);
        for j in 0..m {
            assert!((sigma.covariance[i][j] - sigma.covariance[j][i]).abs() < 1e-12);
        }
    }
    let matrix = DMatrix::from_fn(m, m, |i, j| sigma.covariance[i][j]);
    let smallest = matrix.symmetric_eigen().eigenvalues.min();
    assert!(smallest > -1e-9, "smallest eigenvalue {smallest}");
}

#[test]
fn covariance_matches_monte_carlo() {
    let params = config_a();
    let eq = solve(&params).unwrap();
    let series = propagate(&eq, &params).unwrap();
    let times = vec![1.0, 4.0, 8.0, 12.0];
    let n = 100_000;
    let obs = simulate(
        &eq,
        &params,
        &SamplingSchedule::new(times.clone()).unwrap(),
        n,
        3,
    )
    .unwrap();
    let means: Vec<f64> = (0..times.len())
        .map(|i| obs.counts.iter().map(|r| r[i] as f64).sum::<f64>() / n as f64)
        .collect();
    for i in 0..times.len() {
        for j in i..times.len() {
            let products: Vec<f64> = obs
                .counts
                .iter()
                .map(|r| (r[i] as f64 - means[i]) * (r[j] as f64 - means[j]))
                .collect();
            let empirical = products.iter().sum::<f64>() / (n - 1) as f64;
            let exact = covariance(&eq, &params, times[i], times[j], &series).unwrap();
            // Standard error from the spread of the centred products.
            let spread = products
                .iter()
                .map(|p| (p - empirical).powi(2))
                .sum::<f64>()
                / n as f64;
            let se = (spread / n as f64).sqrt();
            assert!(
                (empirical - exact).abs() < 4.0 * se,
                "cov({}, {}): {empirical} vs {exact}",
                times[i],
                times[j]
            );
        }
    }
}

#[test]
fn covariance_rejects_reversed_times() {
    let params = config_a();
    let eq = solve(&params).unwrap();
    let series = propagate(&eq, &params).unwrap();
    assert!(matches!(
        covariance(&eq, &params, 5.0, 3.0, &series),
        Err(Error::UnorderedTimes { .. })
    ));
}

#[test]
fn queue_at_opening_is_poisson_batch() {
    let params = config_a();
    let eq = solve(&params).unwrap();
    let series = propagate(&eq, &params).unwrap();
    let mean = params.lambda() * eq.atom;
    assert!((series.mean_at(0.0).unwrap() - mean).abs() < 1e-9);
    assert!((series.variance_at(0.0).unwrap() - mean).abs() < 1e-6);
}

#[test]
fn closing_time_stops_arrivals() {
    let params = ModelParams::builder(5.0, 1.0, 2.0, 0.2)
        .closing_time(8.0)
        .build()
        .unwrap();
    let eq = solve(&params).unwrap();
    assert!(eq.support_end <= 8.0 + 1e-9);
    assert!((eq.total_mass() - 1.0).abs() < 1e-4);
    let schedule = SamplingSchedule::equidistant(0.0, 0.5, 20.0).unwrap();
    let obs = simulate(&eq, &params, &schedule, 2000, 5).unwrap();
    // After the closing time the queue can only shrink.
    let after: Vec<usize> = (0..schedule.len())
        .filter(|&i| schedule.times()[i] > 8.0)
        .collect();
    for row in &obs.counts {
        for w in after.windows(2) {
            assert!(row[w[1]] <= row[w[0]]);
        }
    }
}

#[test]
fn early_birds_queue_builds_before_opening() {
    let params = ModelParams::builder(10.0, 1.0, 2.0, 0.1)
        .early_birds()
        .horizon(30.0)
        .build()
        .unwrap();
    let eq = solve(&params).unwrap();
    let series = propagate(&eq, &params).unwrap();
    assert!(eq.pre_width > 0.0);
    assert_eq!(eq.atom, 0.0);
    assert!(series.first_slot() < 0);
    let before = series.mean_at(-0.5).unwrap();
    let at_open = series.mean_at(0.0).unwrap();
    assert!(at_open > before);
    // Nobody is served before the opening, so the pre-opening queue is the
    // Poisson count of early arrivals.
    let expected = params.lambda() * eq.pre_density * (eq.pre_width - 0.5);
    assert!(
        (before - expected).abs() < 0.01 * expected,
        "{before} vs {expected}"
    );
}

#[test]
fn artifact_file_round_trip() {
    let params = ModelParams::builder(5.0, 1.0, 2.0, 0.2)
        .delta(0.01)
        .build()
        .unwrap();
    let eq = solve(&params).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eq.json");
    EquilibriumArtifact::new(&params, eq.clone())
        .save(&path)
        .unwrap();
    let back = EquilibriumArtifact::load(&path).unwrap();
    assert_eq!(back.equilibrium, eq);
    assert_eq!(back.model_params().unwrap(), params);
    assert!(matches!(
        EquilibriumArtifact::load(dir.path().join("missing.json")),
        Err(Error::Io { .. })
    ));
}
