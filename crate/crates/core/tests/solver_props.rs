use odefit_core::residual::assemble;
use odefit_core::series::DerivativeMethod;
use odefit_core::solver::{
    empirical_convergence_order, fit, gd_fit, nr_fit, sgd_fit, snr_fit, Method, SolverConfig, Termination,
};
use proptest::prelude::*;

mod common;
use common::*;

fn cfg(method: Method, r: Option<usize>, seed: u64) -> SolverConfig {
    SolverConfig {
        subset_r: r,
        seed,
        ..SolverConfig::with_method(method)
    }
}

#[test]
fn nr_first_step_solves_normal_equations() {
    for (name, guess) in [("population", POPULATION_GUESSES[0].to_vec()), ("lorenz", LORENZ_GUESSES[0].to_vec())] {
        let p = problem(name, true, DerivativeMethod::ForwardDifference, 3);
        let fit = nr_fit(p.model.as_ref(), &p.data, &p.deriv, &guess, &SolverConfig::default()).unwrap();
        let a1 = &fit.trace[0].params;
        let sys = assemble(p.model.as_ref(), &p.data, &p.deriv, a1, None).unwrap();
        let grad = sys.jacobian.tr_mul(&sys.residual);
        let scale = sys.jacobian.abs().tr_mul(&sys.residual.abs());
        for l in 0..grad.len() {
            assert!(grad[l].abs() <= 1e-10 * scale[l], "{name}: component {l}: {} vs {}", grad[l], scale[l]);
        }
        assert!(fit.trace[1].step <= 1e-8, "{name}: second step {}", fit.trace[1].step);
        assert_eq!(fit.termination, Termination::ToleranceMet);
    }
}

#[test]
fn nr_guesses_agree_on_population_and_lorenz() {
    let p = problem("population", true, DerivativeMethod::ForwardDifference, 0);
    let fits: Vec<_> = POPULATION_GUESSES
        .iter()
        .map(|g| nr_fit(p.model.as_ref(), &p.data, &p.deriv, g, &SolverConfig::default()).unwrap())
        .collect();
    for f in &fits {
        assert!(f.iterations <= 3);
        assert!(max_abs_diff(f.params.as_slice(), fits[0].params.as_slice()) <= 1e-6);
    }
    let p = problem("lorenz", true, DerivativeMethod::ForwardDifference, 0);
    let f = nr_fit(p.model.as_ref(), &p.data, &p.deriv, &LORENZ_GUESSES[0], &SolverConfig::default()).unwrap();
    assert!(f.iterations <= 3 && f.converged);
}

#[test]
fn gd_descends_and_matches_nr_on_population() {
    let p = problem("population", true, DerivativeMethod::ForwardDifference, 0);
    let nr = nr_fit(p.model.as_ref(), &p.data, &p.deriv, &POPULATION_GUESSES[0], &SolverConfig::default()).unwrap();
    let gd = gd_fit(p.model.as_ref(), &p.data, &p.deriv, &POPULATION_GUESSES[0], &cfg(Method::Gd, None, 0)).unwrap();
    assert!(gd.converged);
    assert!((500..20_000).contains(&gd.iterations), "{}", gd.iterations);
    assert!(max_abs_diff(gd.params.as_slice(), nr.params.as_slice()) <= 1e-3);
    let norms = gd.residual_norms();
    for w in norms.windows(2) {
        assert!(w[1] * w[1] <= w[0] * w[0] * (1.0 + 1e-12));
    }
}

#[test]
fn nr_and_gd_share_the_noiseless_argmin() {
    let p = problem("population", false, DerivativeMethod::ForwardDifference, 0);
    let nr = nr_fit(p.model.as_ref(), &p.data, &p.deriv, &POPULATION_GUESSES[1], &SolverConfig::default()).unwrap();
    let gd = gd_fit(p.model.as_ref(), &p.data, &p.deriv, &POPULATION_GUESSES[1], &cfg(Method::Gd, None, 0)).unwrap();
    assert!(max_abs_diff(nr.params.as_slice(), gd.params.as_slice()) <= 1e-4);
}

#[test]
fn lorenz_gd_guesses_share_a2() {
    let p = problem("lorenz", true, DerivativeMethod::ForwardDifference, 0);
    let a2: Vec<f64> = LORENZ_GUESSES
        .iter()
        .map(|g| gd_fit(p.model.as_ref(), &p.data, &p.deriv, g, &cfg(Method::Gd, None, 0)).unwrap().params.as_slice()[1])
        .collect();
    for v in &a2 {
        assert!((v - a2[0]).abs() < 1e-5, "{a2:?}");
    }
}

#[test]
fn full_subsets_reproduce_deterministic_methods() {
    for (name, guess) in [
        ("population", POPULATION_GUESSES[2].to_vec()),
        ("lorenz", LORENZ_GUESSES[1].to_vec()),
        ("activator-inhibitor", ACTIVATOR_GUESSES[0].to_vec()),
    ] {
        let p = problem(name, true, DerivativeMethod::ForwardDifference, 1);
        let n = p.model.n_states();
        let m = p.model.as_ref();
        let nr = nr_fit(m, &p.data, &p.deriv, &guess, &cfg(Method::Nr, None, 5)).unwrap();
        let snr = snr_fit(m, &p.data, &p.deriv, &guess, &cfg(Method::Snr, Some(n), 5)).unwrap();
        let gd = gd_fit(m, &p.data, &p.deriv, &guess, &cfg(Method::Gd, None, 5)).unwrap();
        let sgd = sgd_fit(m, &p.data, &p.deriv, &guess, &cfg(Method::Sgd, Some(n), 5)).unwrap();
        for (det, sto) in [(&nr, &snr), (&gd, &sgd)] {
            assert_eq!(det.trace.len(), sto.trace.len(), "{name}");
            for (a, b) in det.trace.iter().zip(&sto.trace) {
                assert_eq!(a.params, b.params);
                assert_eq!(a.residual_norm.to_bits(), b.residual_norm.to_bits());
                assert_eq!(a.eta, b.eta);
            }
            assert_eq!(det.termination, sto.termination);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let p = problem("activator-inhibitor", true, DerivativeMethod::ForwardDifference, 4);
    for method in Method::ALL {
        let c = cfg(method, method.is_stochastic().then_some(1), 11);
        let a = fit(p.model.as_ref(), &p.data, &p.deriv, &ACTIVATOR_GUESSES[0], &c).unwrap();
        let b = fit(p.model.as_ref(), &p.data, &p.deriv, &ACTIVATOR_GUESSES[0], &c).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn snr_single_equation_matches_nr_on_population() {
    let p = problem("population", false, DerivativeMethod::ForwardDifference, 0);
    let nr = nr_fit(p.model.as_ref(), &p.data, &p.deriv, &POPULATION_GUESSES[0], &SolverConfig::default()).unwrap();
    let snr = snr_fit(p.model.as_ref(), &p.data, &p.deriv, &POPULATION_GUESSES[0], &cfg(Method::Snr, Some(1), 9)).unwrap();
    assert!(snr.converged);
    assert!(max_rel_err(snr.params.as_slice(), nr.params.as_slice()) <= 0.01);
}

#[test]
fn lorenz_a2_moves_only_when_its_equation_is_drawn() {
    let p = problem("lorenz", true, DerivativeMethod::ForwardDifference, 0);
    let fit = snr_fit(p.model.as_ref(), &p.data, &p.deriv, &LORENZ_GUESSES[0], &cfg(Method::Snr, Some(1), 3)).unwrap();
    let mut prev = LORENZ_GUESSES[0][1];
    let mut moved = 0;
    for rec in &fit.trace {
        let drawn = rec.subset.as_ref().unwrap().contains(&1);
        if drawn {
            moved += 1;
        } else {
            assert_eq!(rec.params[1], prev, "a2 changed at iteration {}", rec.iteration);
        }
        prev = rec.params[1];
    }
    assert!(moved > 0);
}

#[test]
fn sgd_single_equation_stays_close_to_gd() {
    let p = problem("population", false, DerivativeMethod::ForwardDifference, 0);
    let m = p.model.as_ref();
    let gd = gd_fit(m, &p.data, &p.deriv, &POPULATION_GUESSES[0], &cfg(Method::Gd, None, 0)).unwrap();
    let sgd = sgd_fit(m, &p.data, &p.deriv, &POPULATION_GUESSES[0], &cfg(Method::Sgd, Some(1), 2)).unwrap();
    let norm = |a: &[f64]| assemble(m, &p.data, &p.deriv, a, None).unwrap().norm();
    assert!(norm(sgd.params.as_slice()) <= 10.0 * norm(gd.params.as_slice()));
}

#[test]
fn sgd_step_descends_on_its_own_subset() {
    let p = problem("activator-inhibitor", true, DerivativeMethod::ForwardDifference, 0);
    let m = p.model.as_ref();
    let fit = sgd_fit(m, &p.data, &p.deriv, &ACTIVATOR_GUESSES[1], &cfg(Method::Sgd, Some(1), 4)).unwrap();
    let mut a = fit.initial.clone();
    for rec in fit.trace.iter().take(300) {
        let subset = rec.subset.as_ref().unwrap();
        let before = assemble(m, &p.data, &p.deriv, &a, Some(subset)).unwrap().sum_of_squares();
        let after = assemble(m, &p.data, &p.deriv, &rec.params, Some(subset)).unwrap().sum_of_squares();
        assert!(after <= before * (1.0 + 1e-12), "iteration {}", rec.iteration);
        a = rec.params.clone();
    }
}

#[test]
fn nr_is_quadratic_on_activator_inhibitor() {
    let p = problem("activator-inhibitor", false, DerivativeMethod::ThreePointNonuniform, 0);
    let fit = nr_fit(p.model.as_ref(), &p.data, &p.deriv, &ACTIVATOR_GUESSES[0], &SolverConfig::default()).unwrap();
    let est = empirical_convergence_order(&fit.iterates(), fit.params.as_slice()).unwrap();
    assert!(est.order.unwrap() >= 1.7, "{est:?}");
}

#[test]
fn nr_on_affine_residual_reports_one_step() {
    let p = problem("lorenz", false, DerivativeMethod::ForwardDifference, 0);
    let fit = nr_fit(p.model.as_ref(), &p.data, &p.deriv, &LORENZ_GUESSES[2], &SolverConfig::default()).unwrap();
    let est = empirical_convergence_order(&fit.iterates(), fit.params.as_slice()).unwrap();
    assert!(est.one_step, "{est:?}");
}

#[test]
fn gd_is_linear_on_population() {
    let p = problem("population", false, DerivativeMethod::ForwardDifference, 0);
    let nr = nr_fit(p.model.as_ref(), &p.data, &p.deriv, &POPULATION_GUESSES[0], &SolverConfig::default()).unwrap();
    let mut c = cfg(Method::Gd, None, 0);
    c.epsilon = 1e-12;
    let gd = gd_fit(p.model.as_ref(), &p.data, &p.deriv, &POPULATION_GUESSES[0], &c).unwrap();
    // sample every 50th iterate so the window spans the asymptotic regime
    let iterates: Vec<Vec<f64>> = gd.iterates().into_iter().step_by(50).collect();
    let est = empirical_convergence_order(&iterates, nr.params.as_slice()).unwrap();
    assert!(est.tail_ratio.unwrap() < 1.0, "{est:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gd_never_increases_the_objective(guess in prop::collection::vec(-5.0..5.0f64, 4), seed in 0u64..50) {
        let p = problem("activator-inhibitor", true, DerivativeMethod::ForwardDifference, seed);
        let a0: Vec<f64> = guess.iter().map(|v| v.abs()).collect();
        let mut c = cfg(Method::Gd, None, 0);
        c.max_iters = 3000;
        let fit = gd_fit(p.model.as_ref(), &p.data, &p.deriv, &a0, &c).unwrap();
        let norms = fit.residual_norms();
        for w in norms.windows(2) {
            prop_assert!(w[1] * w[1] <= w[0] * w[0] * (1.0 + 1e-12));
        }
        if fit.converged {
            prop_assert!(fit.trace.last().unwrap().step <= c.epsilon);
        }
        prop_assert_eq!(fit.trace.len(), fit.iterations);
    }
}
