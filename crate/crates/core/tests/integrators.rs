use clesplit::crn::{self, PropensitySpec, Reaction, ReactionNetwork};
use clesplit::rng;
use clesplit::sim::*;
use clesplit::stats::{ks_two_sample, mean, variance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Dormand–Prince 5(4) with step-size control, integrating `y' = f(y)` on `[0, t]`.
fn dopri<F: Fn(f64) -> f64>(f: F, y0: f64, t: f64, tol: f64) -> f64 {
    let (mut y, mut s) = (y0, 0.0);
    let mut dt = t / 100.0;
    while s < t {
        dt = dt.min(t - s);
        let k1 = f(y);
        let k2 = f(y + dt * (k1 / 5.0));
        let k3 = f(y + dt * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
        let k4 = f(y + dt * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3));
        let k5 = f(y + dt * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3 - 212.0 / 729.0 * k4));
        let k6 = f(y + dt * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3 + 49.0 / 176.0 * k4
            - 5103.0 / 18656.0 * k5));
        let y5 = y + dt * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 - 2187.0 / 6784.0 * k5
            + 11.0 / 84.0 * k6);
        let k7 = f(y5);
        let y4 = y + dt * (5179.0 / 57600.0 * k1 + 7571.0 / 16695.0 * k3 + 393.0 / 640.0 * k4
            - 92097.0 / 339200.0 * k5 + 187.0 / 2100.0 * k6 + 1.0 / 40.0 * k7);
        let err = (y5 - y4).abs();
        if err <= tol {
            y = y5;
            s += dt;
        }
        let factor = if err == 0.0 { 4.0 } else { 0.9 * (tol / err).powf(0.2) };
        dt *= factor.clamp(0.2, 4.0);
    }
    y
}

fn bern_rhs(a: f64, b: f64, s: f64) -> impl Fn(f64) -> f64 {
    move |z: f64| -0.5 * b * z + (0.5 * a - s / 8.0) / z
}

#[test]
fn bernoulli_flow_matches_adaptive_rk_sweep() {
    let mut r = rng::stream(11, &[]);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 1000 {
        let z: f64 = r.random_range(0.1..5.0);
        let a: f64 = r.random_range(0.0..5.0);
        let b: f64 = r.random_range(-2.0..2.0);
        let s: f64 = r.random_range(0.0..4.0);
        let h: f64 = r.random_range(0.0..1.0);
        let k = a - 0.25 * s;
        let u_end = if b.abs() < 1e-10 { z * z + k * h } else { z * z * (-b * h).exp() + k * (1.0 - (-b * h).exp()) / b };
        // Keep the oracle away from the z = 0 singularity of the vector field.
        if u_end.min(z * z) < 0.05 {
            continue;
        }
        let (got, clamped) = bernoulli_flow_raw(z, a, b, s, h);
        assert!(!clamped);
        worst = worst.max((got - dopri(bern_rhs(a, b, s), z, h, 1e-13)).abs());
        checked += 1;
    }
    assert!(worst <= 1e-8, "max deviation {worst:e}");
}

#[test]
fn bernoulli_zero_b_matches_adaptive_rk() {
    let (z, clamped) = bernoulli_flow_raw(1.0, 1.0, 0.0, 0.0, 0.5);
    assert!(!clamped);
    assert!((z - 1.224744871391589).abs() < 1e-12);
    assert!((z - dopri(bern_rhs(1.0, 0.0, 0.0), 1.0, 0.5, 1e-13)).abs() <= 1e-10);
}

#[test]
fn bernoulli_radicand_example_clamps() {
    let radicand = (-4.0 + (-1f64).exp() * 4.04) / 4.0;
    assert!(radicand < 0.0);
    assert_eq!(bernoulli_flow_raw(0.1, 0.0, 1.0, 4.0, 1.0), (0.0, true));
}

fn coeffs(a: f64, b: f64, c_in: Vec<f64>, c_out: Vec<f64>) -> clesplit::crn::CondCirCoefficients {
    clesplit::crn::CondCirCoefficients {
        species: 0,
        a_tilde: a,
        b_tilde: b,
        r_in: (0..c_in.len()).collect(),
        r_out: (c_in.len()..c_in.len() + c_out.len()).collect(),
        c_in,
        c_out,
    }
}

fn normals(r: &mut impl Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect()
}

/// |m - target| within 3 standard errors of the mean of `xs`.
fn assert_mean_within_3se(xs: &[f64], target: f64) {
    let se = (variance(xs) / xs.len() as f64).sqrt();
    let m = mean(xs);
    assert!((m - target).abs() < 3.0 * se, "mean {m} vs {target} (se {se})");
}

/// Sample variance within 3 standard errors, using the Gaussian fourth moment.
fn assert_var_within_3se(xs: &[f64], target: f64) {
    let v = variance(xs);
    let se = target * (2.0 / (xs.len() - 1) as f64).sqrt();
    assert!((v - target).abs() < 3.0 * se, "variance {v} vs {target} (se {se})");
}

#[test]
fn brownian_and_perturbation_flow_variances() {
    let h: f64 = 0.1;
    let k = coeffs(0.0, 0.0, vec![1.5, -0.7], vec![2.0, 0.5, -1.0]);
    let mut r = rng::stream(3, &[]);
    let n = 100_000;
    let mut bm = Vec::with_capacity(n);
    let mut pert = Vec::with_capacity(n);
    for _ in 0..n {
        let wi = normals(&mut r, 2, h.sqrt());
        let wo = normals(&mut r, 3, h.sqrt());
        bm.push(brownian_flow(1.0, &k, &wi));
        pert.push(perturbation_flow(5.0, &k, &wo));
    }
    assert_var_within_3se(&bm, 0.25 * k.sum_c2_in() * h);
    assert_var_within_3se(&pert, k.sum_c2_out() * h);
}

#[test]
fn cir_component_step_mean_matches_exact_cir() {
    let p = CirParams::new(2.0, 1.0, 0.5).unwrap();
    let k = p.coefficients();
    let (x0, h): (f64, f64) = (1.0, 0.01);
    let mut r = rng::stream(5, &[]);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| cir_component_step(x0, &k, h, &normals(&mut r, 1, h.sqrt()), &[]).0)
        .collect();
    assert_mean_within_3se(&draws, p.mean(x0, h));
}

#[test]
fn cir_component_step_distribution_matches_exact_sampler() {
    let p = CirParams::new(2.0, 1.0, 0.5).unwrap();
    let k = p.coefficients();
    let (x0, h, n): (f64, f64, usize) = (1.0, 0.001, 50_000);
    let mut r = rng::stream(6, &[]);
    let split: Vec<f64> = (0..n).map(|_| cir_component_step(x0, &k, h, &normals(&mut r, 1, h.sqrt()), &[]).0).collect();
    let exact: Vec<f64> = (0..n).map(|_| cir_exact_sample(&p, x0, h, &mut r).unwrap()).collect();
    let ks = ks_two_sample(&split, &exact);
    assert!(ks < 0.02, "KS {ks}");
}

#[test]
fn cir_exact_sampler_moments() {
    let p = CirParams::new(2.0, 1.0, 0.5).unwrap();
    assert!(p.feller());
    let mut r = rng::stream(7, &[]);
    let long: Vec<f64> = (0..100_000).map(|_| cir_exact_sample(&p, 2.0, 50.0, &mut r).unwrap()).collect();
    assert_mean_within_3se(&long, 2.0);
    let short: Vec<f64> = (0..100_000).map(|_| cir_exact_sample(&p, 0.5, 0.3, &mut r).unwrap()).collect();
    assert_mean_within_3se(&short, p.mean(0.5, 0.3));
    let v = variance(&short);
    assert!((v - p.variance(0.5, 0.3)).abs() < 0.03 * p.variance(0.5, 0.3));
}

#[test]
fn cir_exact_sampler_noise_free_limit() {
    let p = CirParams::new(2.0, 1.0, 1e-6).unwrap();
    let mut r = rng::stream(8, &[]);
    let x = cir_exact_sample(&p, 1.0, 0.1, &mut r).unwrap();
    assert!((x - p.mean(1.0, 0.1)).abs() < 1e-6);
    assert!(cir_exact_sample(&p, -1.0, 0.1, &mut r).is_err());
    assert!(CirParams::new(0.0, 1.0, 1.0).is_err());
}

#[test]
fn splitting_matches_exact_cir_at_horizon() {
    // Many steps of the splitting on a pure CIR against the exact law at T = 1.
    let p = CirParams::new(2.0, 1.0, 0.5).unwrap();
    let k = p.coefficients();
    let h: f64 = 0.01;
    let n = 20_000;
    let mut r = rng::stream(9, &[]);
    let split: Vec<f64> = (0..n)
        .map(|_| {
            let mut x = 1.0;
            for _ in 0..100 {
                x = cir_component_step(x, &k, h, &normals(&mut r, 1, h.sqrt()), &[]).0;
            }
            x
        })
        .collect();
    let exact: Vec<f64> = (0..n).map(|_| cir_exact_sample(&p, 1.0, 1.0, &mut r).unwrap()).collect();
    assert_mean_within_3se(&split, p.mean(1.0, 1.0));
    assert!(ks_two_sample(&split, &exact) < 0.03);
}

fn decay_net(k: f64) -> (ReactionNetwork, Vec<f64>) {
    let net = ReactionNetwork::new(
        vec!["X".into()],
        vec!["k".into()],
        vec![Reaction { nu_minus: vec![1], nu_plus: vec![0], propensity: PropensitySpec::MassAction { rate: 0, orders: vec![1] } }],
    )
    .unwrap();
    (net, vec![k])
}

#[test]
fn eum_examples() {
    let tp = crn::two_pool();
    let theta = crn::TWO_POOL_THETA;
    let (x, clamps) = eum_step(&tp, &[100.0, 0.0], &theta, 0.1, &[0.0; 4], NegativityPolicy::Truncate).unwrap();
    assert!((x[0] - 97.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    assert_eq!(clamps, 0);

    let (x, _) = eum_step(&tp, &[0.0, 0.0], &theta, 0.1, &[0.3, -0.2, 1.0, 0.5], NegativityPolicy::Truncate).unwrap();
    assert_eq!(x, vec![0.0, 0.0]);

    let (x, clamps) = eum_step(&tp, &[1.0, 0.0], &theta, 0.1, &[100.0, 0.0, 0.0, 0.0], NegativityPolicy::Truncate).unwrap();
    assert_eq!(x[0], 0.0);
    assert_eq!(clamps, 1);
    let (x, clamps) = eum_step(&tp, &[1.0, 0.0], &theta, 0.1, &[100.0, 0.0, 0.0, 0.0], NegativityPolicy::Abs).unwrap();
    assert!(x[0] > 0.0);
    assert_eq!(clamps, 1);
}

#[test]
fn generic_splitting_identity_on_inert_network() {
    let (net, _) = decay_net(0.0);
    let mut r = rng::stream(1, &[]);
    let (x, clamps) = generic_splitting_step(&net, &[3.5], &[0.0], 0.1, &[0], &mut r).unwrap();
    assert_eq!(x, vec![3.5]);
    assert_eq!(clamps, 0);
}

proptest! {
    #[test]
    fn generic_equals_hand_written_two_pool(
        x1 in 0.0f64..200.0, x2 in 0.0f64..200.0,
        t in proptest::array::uniform4(0.01f64..2.0),
        dw in proptest::array::uniform4(-1.0f64..1.0),
        h in 0.001f64..0.5,
    ) {
        let tp = crn::two_pool();
        let dw: Vec<f64> = dw.iter().map(|w| w * h.sqrt()).collect();
        let (g, cg) = generic_splitting_step_with(&tp, &[x1, x2], &t, h, &[0, 1], &dw).unwrap();
        let (m, cm) = twopool_lietrotter_step_with(&[x1, x2], &t, h, &dw).unwrap();
        prop_assert!((g[0] - m[0]).abs() <= 1e-12 * (1.0 + m[0].abs()));
        prop_assert!((g[1] - m[1]).abs() <= 1e-12 * (1.0 + m[1].abs()));
        prop_assert_eq!(cg, cm);
    }

    #[test]
    fn generic_equals_hand_written_lv_lie_trotter(
        x1 in 0.0f64..300.0, x2 in 0.0f64..300.0,
        dw in proptest::array::uniform3(-1.0f64..1.0),
        h in 0.001f64..0.2,
    ) {
        let lv = crn::lotka_volterra();
        let t = crn::LV_THETA;
        let dw: Vec<f64> = dw.iter().map(|w| w * h.sqrt()).collect();
        let (g, _) = generic_splitting_step_with(&lv, &[x1, x2], &t, h, &[0, 1], &dw).unwrap();
        let (m, _) = lv_lie_trotter_step_with(&[x1, x2], &t, h, &dw).unwrap();
        prop_assert!((g[0] - m[0]).abs() <= 1e-10 * (1.0 + m[0].abs()));
        prop_assert!((g[1] - m[1]).abs() <= 1e-10 * (1.0 + m[1].abs()));
    }
}

#[test]
fn generic_splitting_stays_nonnegative() {
    let mut r = rng::stream(2, &[]);
    for (net, theta) in [
        (crn::two_pool(), crn::TWO_POOL_THETA.to_vec()),
        (crn::lotka_volterra(), crn::LV_THETA.to_vec()),
        (crn::repressilator(), crn::REPRESSILATOR_THETA.to_vec()),
    ] {
        let order: Vec<usize> = (0..net.n_species()).collect();
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..net.n_species()).map(|_| r.random_range(0.0..50.0)).collect();
            let h = r.random_range(0.001..0.5);
            let (y, _) = generic_splitting_step(&net, &x, &theta, h, &order, &mut r).unwrap();
            assert!(y.iter().all(|v| v.is_finite() && *v >= 0.0), "{y:?}");
        }
    }
}

#[test]
fn zero_step_is_identity_for_model_schemes() {
    let x = [3.0, 40.0, 1.0, 20.0, 7.0, 60.0];
    let (y, _) = repressilator_strang_step_with(&x, &crn::REPRESSILATOR_THETA, 0.0, &[0.0; 9]).unwrap();
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() < 1e-12 * (1.0 + a));
    }
    let (y, _) = lv_strang_step_with(&[100.0, 100.0], &crn::LV_THETA, 0.0, &[0.0; 5]).unwrap();
    assert!((y[0] - 100.0).abs() < 1e-12 && (y[1] - 100.0).abs() < 1e-12);
    let (y, _) = twopool_lietrotter_step_with(&[100.0, 3.0], &crn::TWO_POOL_THETA, 0.0, &[0.0; 4]).unwrap();
    assert!((y[0] - 100.0).abs() < 1e-12 && (y[1] - 3.0).abs() < 1e-12);
}

#[test]
fn repressilator_zero_noise_tracks_ode_splitting() {
    let net = crn::repressilator();
    let theta = crn::REPRESSILATOR_THETA;
    let x = [10.0, 40.0, 30.0, 20.0, 5.0, 60.0];
    let mut errs = vec![];
    for h in [0.02, 0.01, 0.005] {
        let (s, _) = repressilator_strang_step_with(&x, &theta, h, &[0.0; 9]).unwrap();
        let o = cond_linear_ode_step(&net, &x, &theta, h).unwrap();
        let e = s.iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        errs.push(e);
    }
    // The zero-noise flow differs from the ODE by the Ito correction, O(h) per step.
    assert!(errs[0] < 0.05, "{errs:?}");
    assert!(errs[1] < 0.6 * errs[0] && errs[2] < 0.6 * errs[1], "{errs:?}");
}

#[test]
fn two_pool_decoupled_mean_decay() {
    let net = crn::two_pool();
    let theta = [0.1, 0.2, 0.0, 0.0];
    let grid = TimeGrid::new(0.0, 5, 1.0, 50).unwrap();
    let cfg = SchemeConfig::new(SchemeKind::SplitTwoPoolLieTrotter, 4);
    let finals: Vec<f64> = (0..4000)
        .map(|p| simulate_path_indexed(&net, &cfg, &[100.0, 0.0], &theta, &grid, p).unwrap().final_state()[0])
        .collect();
    assert_mean_within_3se(&finals, 100.0 * (-0.5f64).exp());
}

#[test]
fn lv_splitting_stays_finite_where_eum_breaks() {
    let net = crn::lotka_volterra();
    let theta = crn::LV_THETA;
    let grid = TimeGrid::new(0.0, 500, 0.1, 1).unwrap();
    let mut eum_events = 0;
    for p in 0..100 {
        let s = simulate_path_indexed(&net, &SchemeConfig::new(SchemeKind::SplitLvStrang, 1), &[100.0, 100.0], &theta, &grid, p)
            .unwrap();
        assert!(s.states.iter().all(|v| v.is_finite() && *v >= 0.0));
        let e = simulate_path_indexed(&net, &SchemeConfig::new(SchemeKind::EumTruncate, 1), &[100.0, 100.0], &theta, &grid, p)
            .unwrap();
        eum_events += e.clamp_events + e.diverged() as u64;
    }
    assert!(eum_events > 0);
}

#[test]
fn simulate_path_single_step_and_determinism() {
    let net = crn::two_pool();
    let theta = crn::TWO_POOL_THETA;
    let grid = TimeGrid::new(0.0, 1, 0.1, 1).unwrap();
    let cfg = SchemeConfig::new(SchemeKind::SplitTwoPoolLieTrotter, 77);
    let traj = simulate_path(&net, &cfg, &[100.0, 0.0], &theta, &grid).unwrap();
    let (step, _) = twopool_lietrotter_step(&[100.0, 0.0], &theta, 0.1, &mut path_rng(77, 0)).unwrap();
    assert_eq!(traj.state(0), &[100.0, 0.0]);
    assert_eq!(traj.state(1), step.as_slice());

    for kind in SchemeKind::ALL {
        let (net, theta, x0) = match kind {
            SchemeKind::SplitRepressilatorStrang => {
                (crn::repressilator(), crn::REPRESSILATOR_THETA.to_vec(), crn::REPRESSILATOR_X0.to_vec())
            }
            SchemeKind::SplitLvStrang | SchemeKind::SplitLvLieTrotter => {
                (crn::lotka_volterra(), crn::LV_THETA.to_vec(), vec![100.0, 100.0])
            }
            _ => (crn::two_pool(), crn::TWO_POOL_THETA.to_vec(), vec![100.0, 0.0]),
        };
        let grid = TimeGrid::new(0.0, 20, 0.5, 5).unwrap();
        let cfg = SchemeConfig::new(kind, 123);
        let a = simulate_path(&net, &cfg, &x0, &theta, &grid).unwrap();
        let b = simulate_path(&net, &cfg, &x0, &theta, &grid).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn repressilator_grid_shapes() {
    let net = crn::repressilator();
    let grid = TimeGrid::new(0.0, 50, 0.2, 10).unwrap();
    let cfg = SchemeConfig::new(SchemeKind::SplitRepressilatorStrang, 5);
    let traj = simulate_path(&net, &cfg, &crn::REPRESSILATOR_X0, &crn::REPRESSILATOR_THETA, &grid).unwrap();
    assert_eq!(traj.n_points(), 501);
    assert_eq!(traj.d(), 6);
    assert_eq!(traj.observation_states().len(), 51 * 6);
    assert_eq!(traj.state(0), &crn::REPRESSILATOR_X0);
    assert_eq!(traj.observation(50), traj.final_state());
}

#[test]
fn model_schemes_reject_other_networks() {
    let cfg = SchemeConfig::new(SchemeKind::SplitLvStrang, 0);
    assert!(Stepper::new(&crn::two_pool(), &crn::TWO_POOL_THETA, &cfg).is_err());
    let mut cfg = SchemeConfig::new(SchemeKind::SplitGenericLieTrotter, 0);
    cfg.species_update_order = Some(vec![0, 0]);
    assert!(Stepper::new(&crn::two_pool(), &crn::TWO_POOL_THETA, &cfg).is_err());
}

#[test]
fn trajectory_csv_round_trip() {
    let net = crn::lotka_volterra();
    let grid = TimeGrid::new(0.0, 4, 0.5, 5).unwrap();
    let traj = simulate_path(&net, &SchemeConfig::new(SchemeKind::SplitLvStrang, 2), &[100.0, 100.0], &crn::LV_THETA, &grid)
        .unwrap();
    let mut buf = vec![];
    traj.write_csv(&mut buf, Resolution::Fine).unwrap();
    let table = read_table(buf.as_slice()).unwrap();
    assert_eq!(table.columns, vec!["X1", "X2"]);
    assert_eq!(table.values, traj.states);
    assert_eq!(table.times.len(), 21);
    let mut buf = vec![];
    traj.write_csv(&mut buf, Resolution::Observation).unwrap();
    let table = read_table(buf.as_slice()).unwrap();
    assert_eq!(table.values, traj.observation_states());
    assert_eq!(table.times, grid.obs_times());
}

#[test]
fn gillespie_examples() {
    let (net, _) = decay_net(0.0);
    let mut r = rng::stream(10, &[]);
    let path = gillespie_ssa(&net, &[5.0], &[0.0], 10.0, &mut r).unwrap();
    assert_eq!(path.times.len(), 1);
    assert_eq!(path.state_at(7.0), &[5.0]);

    let (net, theta) = decay_net(0.1);
    let finals: Vec<f64> =
        (0..10_000).map(|_| gillespie_ssa(&net, &[1000.0], &theta, 5.0, &mut r).unwrap().final_state()[0]).collect();
    assert_mean_within_3se(&finals, 1000.0 * (-0.5f64).exp());
    assert!(gillespie_ssa(&net, &[1.5], &theta, 1.0, &mut r).is_err());
}

fn linear_drift_matrix(theta: &[f64]) -> DMatrix<f64> {
    let (t1, t2, t3, t4) = (theta[0], theta[1], theta[2], theta[3]);
    DMatrix::from_row_slice(2, 2, &[-(t1 + t3), t4, t3, -(t2 + t4)])
}

#[test]
fn ode_steps_identity_and_taylor() {
    let net = crn::repressilator();
    let x = crn::REPRESSILATOR_X0;
    assert_eq!(cond_linear_ode_step(&net, &x, &crn::REPRESSILATOR_THETA, 0.0).unwrap(), x.to_vec());
    let (inert, _) = decay_net(0.0);
    assert_eq!(rk4_step(&inert, &[2.0], &[0.0], 0.3).unwrap(), vec![2.0]);

    let growth = ReactionNetwork::new(
        vec!["X".into()],
        vec!["k".into()],
        vec![Reaction { nu_minus: vec![1], nu_plus: vec![2], propensity: PropensitySpec::MassAction { rate: 0, orders: vec![1] } }],
    )
    .unwrap();
    let y = rk4_step(&growth, &[2.0], &[1.0], 0.1).unwrap();
    let taylor = 2.0 * (1.0 + 0.1 + 0.005 + 0.001 / 6.0 + 0.0001 / 24.0);
    assert!((y[0] - taylor).abs() < 1e-14);
}

#[test]
fn cond_linear_matches_matrix_exponential_when_split_commutes() {
    let net = crn::two_pool();
    let theta = [0.3, 0.7, 0.0, 0.0];
    let x0 = DVector::from_vec(vec![50.0, 20.0]);
    let mut x = x0.as_slice().to_vec();
    for _ in 0..10 {
        x = cond_linear_ode_step(&net, &x, &theta, 0.25).unwrap();
    }
    let exact = (linear_drift_matrix(&theta) * 2.5).exp() * x0;
    assert!((x[0] - exact[0]).abs() < 1e-10 && (x[1] - exact[1]).abs() < 1e-10);
}

#[test]
fn cond_linear_strang_is_second_order_on_coupled_system() {
    let net = crn::two_pool();
    let theta = crn::TWO_POOL_THETA;
    let x0 = DVector::from_vec(vec![100.0, 0.0]);
    let exact = (linear_drift_matrix(&theta) * 2.0).exp() * &x0;
    let err = |steps: usize| {
        let h = 2.0 / steps as f64;
        let mut x = x0.as_slice().to_vec();
        for _ in 0..steps {
            x = cond_linear_ode_step(&net, &x, &theta, h).unwrap();
        }
        ((x[0] - exact[0]).powi(2) + (x[1] - exact[1]).powi(2)).sqrt()
    };
    let slope = (err(20) / err(40)).log2();
    assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
}

#[test]
fn rk4_local_error_is_fifth_order() {
    let net = crn::two_pool();
    let theta = crn::TWO_POOL_THETA;
    let x0 = DVector::from_vec(vec![100.0, 10.0]);
    let a = linear_drift_matrix(&theta);
    let hs = [0.4, 0.2, 0.1, 0.05];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let y = rk4_step(&net, x0.as_slice(), &theta, h).unwrap();
            let e = (&a * h).exp() * &x0;
            ((y[0] - e[0]).powi(2) + (y[1] - e[1]).powi(2)).sqrt()
        })
        .collect();
    // Least-squares slope of log error against log h.
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope - 5.0).abs() < 0.3, "slope {slope}");
}
