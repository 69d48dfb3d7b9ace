use takedown_core::calibrate::{
    fit_tau, fit_tau_by_platform, read_sors, sample_illegal_probs, write_synthetic_sors, FitMethod,
    FitOptions, IllegalProbSpec, SorFilter,
};
use takedown_core::engine::{run_for_steps, run_until_converged};
use takedown_core::experiments::{
    read_sweep, run_sweep, run_sweep_on, sweep_network, write_sweep, Metric, SeedSchedule,
    SweepSpec,
};
use takedown_core::netgen::{
    k_core, random_walk_growth, read_edge_list, write_edge_list, DegreeMode, NetSpec, RwgParams,
};
use takedown_core::simcore::{seed_rng, SimConfig};
use takedown_core::{DelayDistribution32, DelayDistribution64};

fn small_spec() -> SweepSpec {
    SweepSpec {
        tau_grid: vec![0.25, 4.0, 200.0],
        runs_per_cell: 4,
        network: NetSpec::SyntheticRwg(RwgParams {
            n_final: 150,
            n_init: 11,
            k_out: 10,
            p_friend: 0.5,
        }),
        n_resamples: 500,
        ..SweepSpec::desk()
    }
}

#[test]
fn synthetic_records_calibrate_a_sweep_delay() {
    let mut buf = Vec::new();
    write_synthetic_sors(&mut buf, "P", "all", 8.0, 5_000, &mut seed_rng(5)).unwrap();
    let ingest = read_sors(&buf[..], &SorFilter::default()).unwrap();
    let report = fit_tau_by_platform(&ingest.records, 30).unwrap();
    let tau = report.fits[0].0.tau_mle.unwrap();
    assert!((tau / 8.0 - 1.0).abs() < 0.05, "{tau}");

    let spec = SweepSpec {
        tau_grid: vec![tau],
        ..small_spec()
    };
    let res = run_sweep(&spec).unwrap();
    assert_eq!(res.rows.len(), 3);
    assert!(res.row(tau, Metric::Prevalence).is_some());
}

#[test]
fn sweep_file_round_trip() {
    let res = run_sweep(&small_spec()).unwrap();
    let mut buf = Vec::new();
    write_sweep(&res, &mut buf).unwrap();
    let (meta, rows) = read_sweep(&buf[..]).unwrap();
    assert_eq!(rows, res.rows);
    assert_eq!(meta, res.metadata);
}

#[test]
fn common_seeds_reuse_baseline_draws() {
    let spec = SweepSpec {
        seeds: SeedSchedule::Common,
        ..small_spec()
    };
    let net = sweep_network(&spec).unwrap();
    let res = run_sweep_on(&spec, &net).unwrap();
    let base: Vec<u64> = res.baseline.iter().map(|r| r.seed).collect();
    for cell in &res.cells {
        let seeds: Vec<u64> = cell.runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, base);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let one = run_sweep(&SweepSpec {
        workers: 1,
        ..small_spec()
    })
    .unwrap();
    let four = run_sweep(&SweepSpec {
        workers: 4,
        ..small_spec()
    })
    .unwrap();
    assert_eq!(one.rows, four.rows);
}

#[test]
fn reduction_falls_with_delay() {
    let res = run_sweep(&small_spec()).unwrap();
    let fast = res.row(0.25, Metric::Prevalence).unwrap().mean_reduction;
    let slow = res.row(200.0, Metric::Prevalence).unwrap().mean_reduction;
    assert!(fast > 0.8, "{fast}");
    assert!(fast > slow, "{fast} vs {slow}");
}

#[test]
fn generated_network_survives_edge_list_round_trip() {
    let net = random_walk_growth(
        &RwgParams {
            n_final: 300,
            n_init: 6,
            k_out: 5,
            p_friend: 0.5,
        },
        &mut seed_rng(3),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_edge_list(&net, &mut buf).unwrap();
    let back = read_edge_list(&buf[..]).unwrap();
    assert_eq!(back, net);
    let core = k_core(&back, 5, DegreeMode::Total).unwrap();
    let again = k_core(&core.network, 5, DegreeMode::Total).unwrap();
    assert_eq!(again.network, core.network);
}

#[test]
fn removal_free_run_has_no_removed_messages() {
    let net = random_walk_growth(
        &RwgParams {
            n_final: 100,
            n_init: 6,
            k_out: 5,
            p_friend: 0.5,
        },
        &mut seed_rng(9),
    )
    .unwrap();
    let probs = vec![0.5; net.n_nodes()];
    let run = run_for_steps(&SimConfig::default(), &net, &probs, seed_rng(9), 50).unwrap();
    assert!(run.illegal_created > 0);
    assert_eq!(run.lifetimes.removed_count(), 0);
    assert_eq!(run.steps, 50);
}

#[test]
fn zero_probability_converges_at_zero() {
    let net = random_walk_growth(
        &RwgParams {
            n_final: 100,
            n_init: 6,
            k_out: 5,
            p_friend: 0.5,
        },
        &mut seed_rng(4),
    )
    .unwrap();
    let probs =
        sample_illegal_probs(&IllegalProbSpec::none(), net.n_nodes(), &mut seed_rng(4)).unwrap();
    let run = run_until_converged(&SimConfig::default(), &net, &probs, seed_rng(4)).unwrap();
    assert!(run.converged);
    assert_eq!(run.prevalence, 0.0);
    assert_eq!((run.impressions, run.reach), (0, 0));
}

#[test]
fn single_precision_fit_agrees_with_double() {
    let delays: Vec<u32> = (0..400).map(|i| (i % 37) as u32).collect();
    let d64 = DelayDistribution64::from_delays("p", None, delays.clone()).unwrap();
    let d32 = DelayDistribution32::from_delays("p", None, delays).unwrap();
    for method in [FitMethod::Mle, FitMethod::LogCcdfLs] {
        let a = fit_tau(&d64, &FitOptions::new(method)).unwrap().tau_hat;
        let b = fit_tau(&d32, &FitOptions::new(method)).unwrap().tau_hat as f64;
        assert!((a - b).abs() / a < 1e-4, "{method:?}: {a} vs {b}");
    }
}
