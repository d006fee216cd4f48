use clesplit::abc::*;
use clesplit::crn::{two_pool, TWO_POOL_THETA};
use clesplit::obs::{observe, ObservationModel};
use clesplit::rng::stream;
use clesplit::sim::{simulate_path, SchemeConfig, SchemeKind, TimeGrid};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn prior(low: &[f64], high: &[f64]) -> PriorSpec {
    let names = (1..=low.len()).map(|k| format!("t{k}")).collect();
    PriorSpec::new(names, low.to_vec(), high.to_vec()).unwrap()
}

fn cloud(thetas: Vec<Vec<f64>>, weights: Vec<f64>) -> ParticleCloud {
    let n = thetas.len();
    ParticleCloud { round: 1, thetas, weights, distances: vec![0.0; n], epsilon: f64::INFINITY, proposal_cov: None }
}

/// Two-pool model observed through X1 with unknown measurement sd.
fn two_pool_problem(n: usize, delta: f64, a: usize, seed: u64) -> InferenceProblem {
    let net = two_pool();
    let grid = TimeGrid::new(0.0, n, delta, a).unwrap();
    let scheme = SchemeConfig::new(SchemeKind::SplitTwoPoolLieTrotter, seed);
    let x0 = vec![100.0, 0.0];
    let traj = simulate_path(&net, &scheme, &x0, &TWO_POOL_THETA, &grid).unwrap();
    let model = ObservationModel::with_sigma(2, vec![0], Some(2.0)).unwrap();
    let data = observe(&traj, &model, &mut stream(seed, &[99])).unwrap();
    let prior = PriorSpec::new(
        ["theta1", "theta2", "theta3", "theta4", "sigma"].map(String::from).to_vec(),
        vec![0.0; 5],
        vec![1.0, 5.0, 5.0, 2.0, 5.0],
    )
    .unwrap();
    InferenceProblem::new(
        net,
        scheme,
        x0,
        grid,
        vec![0],
        NoiseSpec::Estimated,
        TWO_POOL_THETA.to_vec(),
        vec![0, 1, 2, 3],
        prior,
        &data,
    )
    .unwrap()
}

fn truth() -> Vec<f64> {
    let mut t = TWO_POOL_THETA.to_vec();
    t.push(2.0);
    t
}

#[test]
fn prior_density_and_support() {
    let pr = prior(&[0.0, -1.0], &[2.0, 3.0]);
    assert!((pr.density(&[1.0, 0.0]) - 1.0 / 8.0).abs() < 1e-15);
    assert_eq!(pr.density(&[2.5, 0.0]), 0.0);
    assert_eq!(pr.log_density(&[1.0, -1.5]), f64::NEG_INFINITY);
    let mut r = stream(1, &[]);
    for _ in 0..1000 {
        assert!(pr.contains(&pr.sample(&mut r)));
    }
    assert!(PriorSpec::new(vec!["a".into()], vec![1.0], vec![1.0]).is_err());
}

#[test]
fn perturbation_covariance_of_two_points() {
    let c = cloud(vec![vec![0.0], vec![2.0]], vec![0.5, 0.5]);
    // Weighted variance about the mean 1 is (1 + 1) / 2 = 1, doubled.
    assert!((c.perturbation_cov()[(0, 0)] - 2.0).abs() < 1e-15);
    assert_eq!(c.weighted_mean(), vec![1.0]);
}

#[test]
fn identical_particles_propose_near_themselves() {
    let c = cloud(vec![vec![0.3, 0.7]; 10], vec![0.1; 10]);
    let k = Perturbation::new(&c).unwrap();
    let pr = prior(&[0.0, 0.0], &[1.0, 1.0]);
    let mut r = stream(2, &[]);
    for _ in 0..100 {
        let (t, _) = k.propose(&pr, &mut r);
        assert!((t[0] - 0.3).abs() < 1e-4 && (t[1] - 0.7).abs() < 1e-4);
    }
}

#[test]
fn epsilon_examples() {
    assert_eq!(epsilon_update(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.5);
    assert_eq!(epsilon_update(&[3.0, 1.0, 4.0, 2.0], 1.0).unwrap(), 4.0);
    assert_eq!(epsilon_update(&[0.7; 5], 0.5).unwrap(), 0.7);
    assert!(epsilon_update(&[], 0.5).is_err());
}

#[test]
fn synthetic_likelihood_moments() {
    let (mu, cov) = mean_and_cov(&[vec![0.0], vec![2.0]]).unwrap();
    assert_eq!(mu, vec![1.0]);
    assert!((cov[(0, 0)] - 2.0).abs() < 1e-9);
    // Two samples in three dimensions: rank one before jitter.
    let (_, cov) = mean_and_cov(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
    assert!(cov.clone().cholesky().is_some());
    assert_eq!(cov, cov.transpose());
    assert!(mean_and_cov(&[vec![1.0]]).is_err());
}

fn log_normal_density(x: &[f64], m: &[f64], cov: &DMatrix<f64>) -> f64 {
    let p = x.len();
    let d = nalgebra::DVector::from_iterator(p, x.iter().zip(m).map(|(a, b)| a - b));
    let inv = cov.clone().try_inverse().unwrap();
    let q = (d.transpose() * inv * &d)[(0, 0)];
    -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + q)
}

#[test]
fn single_ancestor_weight_matches_closed_form() {
    let pr = prior(&[0.0, 0.0], &[4.0, 2.0]);
    let c = cloud(vec![vec![1.0, 1.0]], vec![1.0]);
    let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.2]);
    let k = Perturbation::with_cov(&c, cov.clone()).unwrap();
    let theta = [1.0, 1.0];
    let expect = pr.log_density(&theta) - log_normal_density(&theta, &theta, &cov);
    assert!((smc_log_weight(&theta, &pr, Some(&k)) - expect).abs() < 1e-12);
    let theta = [1.3, 0.6];
    let expect = pr.log_density(&theta) - log_normal_density(&theta, &[1.0, 1.0], &cov);
    assert!((smc_log_weight(&theta, &pr, Some(&k)) - expect).abs() < 1e-12);
    assert_eq!(smc_particle_weight(&[5.0, 1.0], &pr, Some(&k)), 0.0);
}

#[test]
fn symmetric_cloud_gives_symmetric_weights() {
    let pr = prior(&[-5.0], &[5.0]);
    let c = cloud(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]);
    let k = Perturbation::new(&c).unwrap();
    for x in [0.2, 0.9, 2.5] {
        let a = smc_log_weight(&[x], &pr, Some(&k));
        let b = smc_log_weight(&[-x], &pr, Some(&k));
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn weight_reduction_identity_on_random_cases() {
    let mut r = stream(7, &[]);
    for case in 0..10_000 {
        let p = 1 + case % 4;
        let q = 1 + (case / 4) % 3;
        let low: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..0.0)).collect();
        let high: Vec<f64> = low.iter().map(|l| l + r.random_range(0.5..3.0)).collect();
        let pr = prior(&low, &high);
        let m = p + 1 + case % 7;
        let thetas: Vec<Vec<f64>> = (0..m).map(|_| pr.sample(&mut r)).collect();
        let weights: Vec<f64> = (0..m).map(|_| r.random_range(0.1..1.0)).collect();
        let c = cloud(thetas, weights);
        let k = if case % 5 == 0 { None } else { Some(Perturbation::new(&c).unwrap()) };
        let theta = pr.sample(&mut r);
        let summaries: Vec<Vec<f64>> =
            (0..2 + case % 5).map(|_| (0..q).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let st = synthetic_likelihood_stats(&summaries, &summaries).unwrap();
        let s_dc: Vec<f64> = (0..q).map(|_| r.random_range(-3.0..3.0)).collect();
        let a = dc_particle_weight(&theta, &s_dc, &pr, k.as_ref(), &st).unwrap();
        let b = smc_particle_weight(&theta, &pr, k.as_ref());
        if b.is_finite() {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "case {case}: {a} vs {b}");
        } else {
            assert_eq!(a, b);
        }
        let la = dc_log_weight(&theta, &s_dc, &pr, k.as_ref(), &st).unwrap();
        assert!((la - smc_log_weight(&theta, &pr, k.as_ref())).abs() <= 1e-12);
    }
}

#[test]
fn round_one_weight_is_the_density_ratio() {
    let pr = prior(&[0.0], &[1.0]);
    let fwd = vec![vec![0.0], vec![2.0]];
    let dc = vec![vec![1.0], vec![1.5]];
    let st = synthetic_likelihood_stats(&fwd, &dc).unwrap();
    let s = [1.2];
    let expect = log_normal_density(&s, &[1.0], &DMatrix::from_element(1, 1, 2.0 + 1e-10))
        - log_normal_density(&s, &[1.25], &DMatrix::from_element(1, 1, 0.125 + 1e-10));
    assert!((dc_log_weight(&[0.5], &s, &pr, None, &st).unwrap() - expect).abs() < 1e-12);
    assert_eq!(dc_particle_weight(&[1.5], &s, &pr, None, &st).unwrap(), 0.0);
}

#[test]
fn normalization_and_fallback() {
    let (w, flag) = normalize_log_weights(&[-1000.0, -1001.0, f64::NEG_INFINITY]);
    assert!(!flag);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(w[2], 0.0);
    let (w, flag) = normalize_log_weights(&[f64::NEG_INFINITY; 4]);
    assert!(flag);
    assert_eq!(w, vec![0.25; 4]);
}

#[test]
fn categorical_draws_match_weights() {
    let w = [0.1, 0.25, 0.05, 0.4, 0.2];
    let n = 100_000;
    let mut counts = [0usize; 5];
    let mut r = stream(11, &[]);
    for _ in 0..n {
        counts[sample_categorical(&w, &mut r)] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&w)
        .map(|(c, p)| {
            let e = p * n as f64;
            (*c as f64 - e).powi(2) / e
        })
        .sum();
    // Upper 1% point of chi-squared with 4 degrees of freedom.
    assert!(chi2 < 13.2767, "chi2 = {chi2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proposals_stay_in_the_prior(seed in 0u64..1000, spread in 0.01f64..5.0) {
        let pr = prior(&[0.0, 0.0], &[1.0, 1.0]);
        let mut r = stream(seed, &[]);
        let thetas: Vec<Vec<f64>> = (0..20).map(|_| pr.sample(&mut r)).collect();
        let c = cloud(thetas, vec![0.05; 20]);
        let k = Perturbation::with_cov(&c, DMatrix::identity(2, 2) * spread).unwrap();
        for _ in 0..20 {
            let (t, _) = k.propose(&pr, &mut r);
            prop_assert!(pr.contains(&t));
        }
    }
}

#[test]
fn single_particle_sample_is_that_path() {
    let problem = two_pool_problem(10, 1.0, 5, 3);
    let cfg = DcConfig::new(1, 2.0);
    let s = data_conditional_sample(&problem, &truth(), &cfg, 5, &[1]).unwrap();
    let y = s.resample(&mut stream(5, &[2]));
    assert_eq!(y, s.forward[0]);
}

#[test]
fn exact_match_gets_the_largest_weight() {
    let mut problem = two_pool_problem(10, 1.0, 5, 3);
    let cfg = DcConfig::new(4, 2.0);
    let first = data_conditional_sample(&problem, &truth(), &cfg, 5, &[1]).unwrap();
    problem.observed = first.forward[2].clone();
    let second = data_conditional_sample(&problem, &truth(), &cfg, 5, &[1]).unwrap();
    assert_eq!(first.forward, second.forward);
    for w in &second.weights {
        assert!(w.iter().all(|v| *v <= w[2]));
    }
}

#[test]
fn conditioned_path_tracks_the_data() {
    let problem = two_pool_problem(50, 0.2, 10, 4);
    let cfg = DcConfig::new(32, 2.0);
    let msd = |y: &[f64]| y.iter().zip(&problem.observed).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    let mut wins = 0;
    for rep in 0..10u64 {
        let s = data_conditional_sample(&problem, &truth(), &cfg, 6, &[rep]).unwrap();
        let y_dc = s.resample(&mut stream(6, &[rep, 2]));
        let fwd: Vec<f64> = s.forward.iter().map(|y| msd(y)).collect();
        let median = clesplit::stats::median(&fwd);
        wins += usize::from(msd(&y_dc) < median);
    }
    assert_eq!(wins, 10);
}

#[test]
fn path_parallelism_does_not_change_results() {
    let problem = two_pool_problem(20, 0.5, 5, 8);
    let cfg = DcConfig::new(16, 2.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| data_conditional_sample(&problem, &truth(), &cfg, 9, &[0]).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.forward, b.forward);
    assert_eq!(a.weights, b.weights);
}

fn small_settings(rounds: usize) -> AbcSettings {
    AbcSettings { m_particles: 60, max_rounds: rounds, pretrain: 200, seed: 21, ..AbcSettings::default() }
}

#[test]
fn one_round_is_a_uniform_prior_sample() {
    let problem = two_pool_problem(10, 1.0, 5, 3);
    let run = run_abc_smc(&problem, &small_settings(1)).unwrap();
    assert_eq!(run.clouds.len(), 1);
    let c = run.final_cloud();
    assert_eq!(c.len(), 60);
    assert!(c.weights.iter().all(|w| (w - 1.0 / 60.0).abs() < 1e-15));
    assert!(c.thetas.iter().all(|t| problem.prior.contains(t)));
    assert_eq!(run.report.rounds[0].attempts, 60);
    assert_eq!(run.report.stop_reason, StopReason::MaxRounds);
}

fn check_run(run: &AbcRun, problem: &InferenceProblem, settings: &AbcSettings, paths_per_call: u64) {
    let steps = problem.grid.n_steps() as u64;
    let mut cumulative = 0;
    for (k, c) in run.clouds.iter().enumerate() {
        assert_eq!(c.len(), settings.m_particles);
        assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(c.weights.iter().all(|w| *w >= 0.0));
        assert!(c.thetas.iter().all(|t| problem.prior.contains(t)));
        if k > 0 {
            assert!(c.epsilon <= run.clouds[k - 1].epsilon);
            assert!(c.distances.iter().all(|d| *d < c.epsilon));
        }
    }
    for r in &run.report.rounds {
        cumulative += r.simulator_calls;
        assert_eq!(r.cumulative_simulator_calls, cumulative);
        assert_eq!(r.paths, r.attempts * paths_per_call);
        assert_eq!(r.fine_steps, r.paths * steps);
        if r.completed {
            assert!(r.acceptance_rate >= settings.min_acceptance);
        }
    }
}

#[test]
fn multi_round_runs_keep_their_invariants() {
    let problem = two_pool_problem(20, 0.5, 5, 3);
    let settings = small_settings(4);
    let fwd = run_abc_smc(&problem, &settings).unwrap();
    check_run(&fwd, &problem, &settings, 1);
    let dc = run_abc_smc_dc(&problem, &settings, &DcConfig::new(8, 2.0)).unwrap();
    check_run(&dc, &problem, &settings, 8);
    assert!(dc.clouds.len() >= 2);
    // Round-1 weights carry the synthetic-likelihood ratio, so they differ.
    let w = &dc.clouds[0].weights;
    assert!(w.iter().any(|v| (v - w[0]).abs() > 1e-12));
}

#[test]
fn acceptance_floor_stops_the_run() {
    let problem = two_pool_problem(10, 1.0, 5, 3);
    let settings = AbcSettings { min_acceptance: 0.9, max_rounds: 10, ..small_settings(10) };
    let run = run_abc_smc(&problem, &settings).unwrap();
    assert_eq!(run.report.stop_reason, StopReason::LowAcceptance);
    let last = run.report.rounds.last().unwrap();
    assert!(!last.completed);
    assert_eq!(last.attempts, settings.max_attempts());
    assert_eq!(run.clouds.len(), run.report.rounds.len() - 1);
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let problem = two_pool_problem(10, 1.0, 5, 3);
    let settings = small_settings(3);
    let go = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_abc_smc_dc(&problem, &settings, &DcConfig::new(4, 2.0)).unwrap())
    };
    let (a, b) = (go(1), go(3));
    assert_eq!(a.clouds, b.clouds);
    assert_eq!(a.report, b.report);
    let mut csv_a = Vec::new();
    write_cloud_csv(a.final_cloud(), &a.report.parameters, &mut csv_a).unwrap();
    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with("theta1,theta2,theta3,theta4,sigma,weight,distance\n"));
}

#[test]
fn dc_config_is_checked() {
    let problem = two_pool_problem(10, 1.0, 5, 3);
    let s = small_settings(1);
    assert!(run_abc_smc_dc(&problem, &s, &DcConfig::new(1, 2.0)).is_err());
    assert!(run_abc_smc_dc(&problem, &s, &DcConfig::new(4, 0.5)).is_err());
}
