//! Simulators checked against the exact solvers, and the solvers against
//! each other.

use ebaloha::markov::{stationary_gth, SparseChain};
use ebaloha::oracle::{
    build_truncated_chain, exact_first_success_time, exact_stationary, exact_throughput, Solver, DEFAULT_BUDGET,
};
use ebaloha::sim::{run_first_success_experiment, run_queued_replicas, run_saturated, run_saturated_replicas, SimConfig};
use ebaloha::stats::mean_se;
use ebaloha::{BackoffLaw, SystemState};

fn law(i0: f64) -> BackoffLaw {
    BackoffLaw::exponential(2.0, i0).unwrap()
}

#[test]
fn three_user_throughput_matches_oracle() {
    let chain = build_truncated_chain(3, 14, law(4.0), DEFAULT_BUDGET).unwrap();
    let st = exact_stationary(&chain, Solver::Auto, 1e-12).unwrap();
    assert!(st.boundary_mass < 1e-6, "{}", st.boundary_mass);
    let exact = exact_throughput(&chain, &st.pi).unwrap();

    let cfg = SimConfig::saturated(law(4.0), SystemState::zeros(3).unwrap(), 2_000_000, 21);
    let sim = run_saturated_replicas(&cfg, 8).unwrap().replica_throughput();
    assert!((sim.mean - exact).abs() < 4.0 * sim.se, "{} +- {} vs {exact}", sim.mean, sim.se);
}

#[test]
fn first_success_matches_oracle_from_a_deep_start() {
    let exact = exact_first_success_time(2, 30, law(1.5), 3, DEFAULT_BUDGET).unwrap();
    let sample = run_first_success_experiment(2, law(1.5), 3, 1_000_000, 20_000, 9).unwrap();
    let p = sample.at(1_000_000).unwrap();
    assert_eq!(p.censored_fraction, 0.0);
    assert!((p.mean - exact).abs() < 4.0 * p.se, "{} +- {} vs {exact}", p.mean, p.se);
}

#[test]
fn replicas_merge_like_separate_runs() {
    let mut cfg = SimConfig::saturated(law(1.5), SystemState::zeros(3).unwrap(), 100_000, 4);
    let merged = run_saturated_replicas(&cfg, 4).unwrap();
    let mut acc = run_saturated(&cfg).unwrap();
    for s in 1..4 {
        cfg.stream = s;
        acc = acc.merge(&run_saturated(&cfg).unwrap()).unwrap();
    }
    assert_eq!(merged, acc);
}

#[test]
fn boundary_mass_tracks_the_regime() {
    let mass = |i0: f64, m: u32| {
        let c = build_truncated_chain(2, m, law(i0), DEFAULT_BUDGET).unwrap();
        exact_stationary(&c, Solver::Direct, 1e-12).unwrap().boundary_mass
    };
    let ergodic: Vec<f64> = [10, 20, 40].iter().map(|&m| mass(2.0, m)).collect();
    assert!(ergodic.windows(2).all(|w| w[1] <= w[0]), "{ergodic:?}");
    let transient: Vec<f64> = [10, 20, 40].iter().map(|&m| mass(0.0, m)).collect();
    assert!(transient.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{transient:?}");
    assert!(transient.iter().all(|&p| p > 0.5), "{transient:?}");
}

#[test]
fn first_success_time_grows_with_the_cap_when_transient() {
    let t: Vec<f64> =
        [8u32, 16, 32].iter().map(|&m| exact_first_success_time(2, m, law(0.0), 0, DEFAULT_BUDGET).unwrap()).collect();
    assert!(t[1] > 1.5 * t[0] && t[2] > 1.5 * t[1], "{t:?}");
}

#[test]
fn gth_recovers_a_uniform_law() {
    let rows = vec![
        vec![(0, 0.2), (1, 0.4), (2, 0.4)],
        vec![(0, 0.4), (1, 0.2), (3, 0.4)],
        vec![(0, 0.4), (2, 0.2), (3, 0.4)],
        vec![(1, 0.4), (2, 0.4), (3, 0.2)],
    ];
    let chain = SparseChain::new(rows).unwrap();
    let pi = stationary_gth(&chain, None).unwrap();
    for p in pi {
        assert!((p - 0.25).abs() < 1e-14);
    }
}

#[test]
fn queued_runs_conserve_packets() {
    let mut cfg = SimConfig::queued(law(1.5), SystemState::zeros(3).unwrap(), 50_000, 2, 0.25);
    cfg.sample_stride = 50;
    let stats = run_queued_replicas(&cfg, 4).unwrap();
    assert!(stats.replicas.iter().all(|r| r.is_conserved()));
    let rates: Vec<f64> = stats.replicas.iter().map(|r| r.departures as f64 / r.slots as f64).collect();
    let m = mean_se(&rates);
    assert!((m.mean - 0.25).abs() < 0.01, "{m:?}");
}
