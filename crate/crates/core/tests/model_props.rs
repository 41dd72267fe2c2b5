use odefit_core::model::{activator_inhibitor_model, check_param_jacobian, lorenz_model, population_model};
use odefit_core::OdeModel;
use proptest::prelude::*;

fn jac(model: &dyn OdeModel, x: &[f64], a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.n_states() * model.n_params()];
    model.param_jacobian(0.0, x, a, &mut out).unwrap();
    out
}

fn rhs(model: &dyn OdeModel, x: &[f64], a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.n_states()];
    model.rhs(0.0, x, a, &mut out).unwrap();
    out
}

#[test]
fn presets_pass_jacobian_check() {
    for model in [
        Box::new(population_model()) as Box<dyn OdeModel>,
        Box::new(lorenz_model()),
        Box::new(activator_inhibitor_model()),
    ] {
        for seed in [1, 2, 3] {
            let worst = check_param_jacobian(model.as_ref(), 100, seed).unwrap();
            assert!(worst <= 1e-5, "{}: {worst}", model.name());
        }
    }
}

proptest! {
    #[test]
    fn linear_models_have_parameter_free_jacobians(
        x in prop::collection::vec(-10.0..10.0f64, 3),
        a in prop::collection::vec(-10.0..10.0f64, 5),
        b in prop::collection::vec(-10.0..10.0f64, 5),
    ) {
        let p = population_model();
        prop_assert_eq!(jac(&p, &x[..2], &a), jac(&p, &x[..2], &b));
        let l = lorenz_model();
        prop_assert_eq!(jac(&l, &x, &a[..3]), jac(&l, &x, &b[..3]));
    }

    #[test]
    fn linear_models_are_affine_in_parameters(
        x in prop::collection::vec(-10.0..10.0f64, 3),
        a in prop::collection::vec(-10.0..10.0f64, 5),
        b in prop::collection::vec(-10.0..10.0f64, 5),
        alpha in -3.0..3.0f64,
        beta in -3.0..3.0f64,
    ) {
        let models: [(&dyn OdeModel, usize, usize); 2] = [(&population_model(), 2, 5), (&lorenz_model(), 3, 3)];
        for (model, n, m) in models {
            let x = &x[..n];
            let zero = vec![0.0; m];
            let combo: Vec<f64> = (0..m).map(|l| alpha * a[l] + beta * b[l]).collect();
            let f0 = rhs(model, x, &zero);
            let fa = rhs(model, x, &a[..m]);
            let fb = rhs(model, x, &b[..m]);
            let fc = rhs(model, x, &combo);
            for j in 0..n {
                let want = alpha * (fa[j] - f0[j]) + beta * (fb[j] - f0[j]);
                prop_assert!((fc[j] - f0[j] - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn activator_jacobian_column_two_depends_on_parameters(
        x1 in 0.1..3.0f64, x2 in 0.1..3.0f64,
        a1 in 0.0..4.0f64, a2 in 0.0..4.0f64, da in 0.1..1.0f64,
    ) {
        let model = activator_inhibitor_model();
        let x = [x1, x2];
        let base = jac(&model, &x, &[a1, a2, 1.0, 1.0]);
        let moved = jac(&model, &x, &[a1 + da, a2 + da, 1.0, 1.0]);
        prop_assert!(base[1] != moved[1]);
        for idx in [2, 3, 4, 5] {
            prop_assert_eq!(base[idx], 0.0);
        }
    }
}
